//! Resonance of a line terminated by a reactive load.
//!
//! A mode with index `n` satisfies `f_r / f_open = atan(Z0 / X(f_r)) / pi + n`,
//! with the principal arctangent. Capacitive loads sit in
//! `((n - 1/2) f_open, n f_open)`, inductive loads in `(n f_open, (n + 1/2) f_open)`.
//! The phase parameter `phi = 2 pi f_r / f_open` fixes the energy split
//! between the line and the load.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::roots::bracketed_root;
use crate::txline::{self, LineSpec, LoadKind, LoadModel};

const ROOT_REL_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceSolution {
    pub mode_n: u32,
    pub f_r: f64,
    pub phi: f64,
    pub participation: f64,
    pub x_at_resonance: f64,
    pub load: LoadModel,
    pub line: LineSpec,
    pub flags: Vec<Flag>,
}

impl ResonanceSolution {
    /// `f_r/f_open - n - atan(Z0/X(f_r))/pi`.
    pub fn residual(&self) -> f64 {
        self.f_r / self.line.f_open
            - self.mode_n as f64
            - (self.line.z0 / self.x_at_resonance).atan() / PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Inductive `n = 0` modes below this frequency are flagged as
    /// experimentally inaccessible. `None` means `f_open / 100`.
    pub min_frequency: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { min_frequency: None }
    }
}

/// Voltage and current along the line, `positions` being `z / l` in `[-1, 0]`
/// with the load at `-1` and the coupling end at `0`. Amplitudes are
/// normalized to the forward wave; current is scaled by `Z0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandingWaveProfile {
    pub positions: Vec<f64>,
    pub voltage: Vec<Complex64>,
    pub current: Vec<Complex64>,
}

/// Time-averaged stored energies in units of `|V0+|^2 (1 + |Gamma|^2) / (8 f_open Z0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub w_res_electric: f64,
    pub w_res_magnetic: f64,
    pub w_dut: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.w_res_electric + self.w_res_magnetic + self.w_dut
    }

    pub fn participation(&self) -> f64 {
        self.w_dut / self.total()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxParticipation {
    pub phi_star: f64,
    pub p_max: f64,
    /// False when the branch only approaches its supremum (inductive `n = 0`).
    pub attained: bool,
}

/// Load values placing a mode at maximum participation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub exact_load: LoadModel,
    pub exact_f_r: f64,
    pub exact_p: f64,
    /// The `|X| = Z0` approximation.
    pub rule_of_thumb_load: LoadModel,
    pub rule_of_thumb_f_r: f64,
    pub rule_of_thumb_p: f64,
}

/// Mode frequency for a fixed reactance `x`.
pub fn mode_frequency_from_reactance(x: f64, z0: f64, f_open: f64, n: u32) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::Domain("reactance must be non-zero".into()));
    }
    if !(z0 > 0.0 && f_open > 0.0) {
        return Err(Error::Domain("z0 and f_open must be positive".into()));
    }
    let f = ((z0 / x).atan() / PI + n as f64) * f_open;
    if f <= 0.0 {
        return Err(Error::UnphysicalMode(format!(
            "mode n = {n} with X = {x} needs a non-positive frequency"
        )));
    }
    Ok(f)
}

pub fn solve_resonance(load: &LoadModel, line: &LineSpec, n: u32) -> Result<ResonanceSolution> {
    solve_resonance_with(load, line, n, &SolveOptions::default())
}

/// Solves the resonance condition with the load's own frequency dependence.
pub fn solve_resonance_with(
    load: &LoadModel,
    line: &LineSpec,
    n: u32,
    options: &SolveOptions,
) -> Result<ResonanceSolution> {
    let f_open = line.f_open;
    let nf = n as f64;
    let f_r = match load.kind() {
        LoadKind::Capacitor => {
            if n == 0 {
                return Err(Error::UnphysicalMode(
                    "capacitive loads have no n = 0 mode (it would need a negative frequency)"
                        .into(),
                ));
            }
            root_in_cell(load, line, n - 1, (nf - 0.5) * f_open, nf * f_open)?
        }
        LoadKind::Inductor => root_in_cell(load, line, n, nf * f_open, (nf + 0.5) * f_open)?,
        LoadKind::SeriesComposite => composite_root(load, line, n)?,
    };

    let x = txline::reactance(load, f_r)?;
    let phi = phase_parameter(f_r, f_open)?;
    let mut flags = load.validity_flags();
    let min_f = options.min_frequency.unwrap_or(f_open / 100.0);
    if n == 0 && f_r < min_f {
        log::warn!("n = 0 mode at {f_r} Hz is below {min_f} Hz and likely inaccessible");
        flags.push(Flag::ExperimentallyInaccessible);
    }
    Ok(ResonanceSolution {
        mode_n: n,
        f_r,
        phi,
        participation: participation(phi),
        x_at_resonance: x,
        load: load.clone(),
        line: *line,
        flags,
    })
}

// In the cell (m f_open, (m+1) f_open) the condition reads
// pi f / f_open = acot(X / Z0) + m pi with acot in (0, pi). The left side
// increases and the right side decreases with f, so the root is unique.
fn cell_function<'a>(load: &'a LoadModel, line: &LineSpec, m: u32) -> impl Fn(f64) -> f64 + 'a {
    let z0 = line.z0;
    let f_open = line.f_open;
    move |f: f64| {
        let x: f64 = load.elements().iter().map(|e| e.reactance(f)).sum();
        PI * f / f_open - 1f64.atan2(x / z0) - m as f64 * PI
    }
}

fn root_in_cell(load: &LoadModel, line: &LineSpec, m: u32, lo: f64, hi: f64) -> Result<f64> {
    bracketed_root(cell_function(load, line, m), lo, hi, ROOT_REL_TOL)
}

fn composite_root(load: &LoadModel, line: &LineSpec, n: u32) -> Result<f64> {
    let f_open = line.f_open;
    // capacitive-at-resonance candidate first, then inductive
    if n >= 1 {
        let m = n - 1;
        let f = root_in_cell(load, line, m, m as f64 * f_open, n as f64 * f_open)?;
        if txline::reactance(load, f)? < 0.0 {
            return Ok(f);
        }
    }
    let f = root_in_cell(load, line, n, n as f64 * f_open, (n + 1) as f64 * f_open)?;
    if txline::reactance(load, f)? > 0.0 {
        return Ok(f);
    }
    Err(Error::UnphysicalMode(format!("composite load has no mode with index n = {n}")))
}

/// `phi = 2 pi f_r / f_open`.
pub fn phase_parameter(f_r: f64, f_open: f64) -> Result<f64> {
    if !(f_r > 0.0 && f_open > 0.0) {
        return Err(Error::Domain("frequencies must be positive".into()));
    }
    Ok(2.0 * PI * f_r / f_open)
}

/// Fraction of stored energy held by the load, `|sin phi| / (phi + |sin phi|)`.
/// `phi` must be positive; other inputs give NaN.
pub fn participation(phi: f64) -> f64 {
    if !(phi > 0.0) {
        return f64::NAN;
    }
    let s = phi.sin().abs();
    s / (phi + s)
}

pub fn standing_wave(solution: &ResonanceSolution, num_points: usize) -> Result<StandingWaveProfile> {
    if num_points < 2 {
        return Err(Error::Domain("a profile needs at least two points".into()));
    }
    let z_l = txline::load_impedance(&solution.load, solution.f_r)?;
    let gamma = txline::reflection_coefficient(z_l, solution.line.z0)?;
    let beta_l = PI * solution.f_r / solution.line.f_open;

    let mut positions = Vec::with_capacity(num_points);
    let mut voltage = Vec::with_capacity(num_points);
    let mut current = Vec::with_capacity(num_points);
    for i in 0..num_points {
        let z = -1.0 + i as f64 / (num_points - 1) as f64;
        // distance from the load in units of l
        let u = 1.0 + z;
        let fwd = Complex64::from_polar(1.0, beta_l * u);
        let back = gamma * Complex64::from_polar(1.0, -beta_l * u);
        positions.push(z);
        voltage.push(fwd + back);
        current.push(fwd - back);
    }
    Ok(StandingWaveProfile { positions, voltage, current })
}

pub fn stored_energies(solution: &ResonanceSolution) -> EnergyBreakdown {
    energies_from_phase(solution.phi)
}

pub fn energies_from_phase(phi: f64) -> EnergyBreakdown {
    let sinc = phi.sin() / phi;
    EnergyBreakdown {
        w_res_electric: 1.0 + sinc,
        w_res_magnetic: 1.0 - sinc,
        w_dut: 2.0 * sinc.abs(),
    }
}

/// Location and value of the participation maximum on a mode branch,
/// i.e. the root of `tan phi = phi` inside the branch.
pub fn max_participation_point(n: u32, kind: LoadKind) -> Result<MaxParticipation> {
    let nf = n as f64;
    let (lo, hi) = match (kind, n) {
        (LoadKind::Capacitor, 0) => {
            return Err(Error::UnphysicalMode("capacitive loads have no n = 0 mode".into()))
        }
        (LoadKind::Capacitor, _) => ((2.0 * nf - 1.0) * PI, (2.0 * nf - 1.0) * PI + FRAC_PI_2),
        (LoadKind::Inductor, 0) => {
            return Ok(MaxParticipation { phi_star: 0.0, p_max: 0.5, attained: false })
        }
        (LoadKind::Inductor, _) => (2.0 * nf * PI, 2.0 * nf * PI + FRAC_PI_2),
        (LoadKind::SeriesComposite, _) => {
            return Err(Error::Domain("max participation is defined per pure load kind".into()))
        }
    };
    let phi_star = bracketed_root(|p| p * p.cos() - p.sin(), lo, hi, 1e-15)?;
    Ok(MaxParticipation { phi_star, p_max: participation(phi_star), attained: true })
}

/// Load value that puts mode `n` at its participation maximum, alongside
/// the `|X| = Z0` rule of thumb.
pub fn design_load_for_max_p(line: &LineSpec, n: u32, kind: LoadKind) -> Result<DesignPoint> {
    let max = max_participation_point(n, kind)?;
    if !max.attained {
        return Err(Error::Domain(
            "inductive n = 0 has no interior maximum; participation grows toward phi -> 0".into(),
        ));
    }
    let z0 = line.z0;
    let f_open = line.f_open;
    let exact_f_r = max.phi_star * f_open / (2.0 * PI);
    let x = reactance_from_frequencies(exact_f_r, f_open, n, z0)?;
    let exact_value = value_from_reactance(kind, x, exact_f_r);

    let (rule_f_r, rule_x) = match kind {
        LoadKind::Capacitor => ((n as f64 - 0.25) * f_open, -z0),
        _ => ((n as f64 + 0.25) * f_open, z0),
    };
    let rule_value = value_from_reactance(kind, rule_x, rule_f_r);
    Ok(DesignPoint {
        exact_load: LoadModel::of_kind(kind, exact_value, 0.0)?,
        exact_f_r,
        exact_p: max.p_max,
        rule_of_thumb_load: LoadModel::of_kind(kind, rule_value, 0.0)?,
        rule_of_thumb_f_r: rule_f_r,
        rule_of_thumb_p: participation(phase_parameter(rule_f_r, f_open)?),
    })
}

/// Capacitance or inductance giving reactance `x` at `f`.
pub fn value_from_reactance(kind: LoadKind, x: f64, f: f64) -> f64 {
    match kind {
        LoadKind::Capacitor => -1.0 / (2.0 * PI * f * x),
        _ => x / (2.0 * PI * f),
    }
}

/// Inverts the resonance condition: `X = Z0 / tan(pi (f_r / f_open - n))`.
pub fn reactance_from_frequencies(f_r: f64, f_open: f64, n: u32, z0: f64) -> Result<f64> {
    if !(f_r > 0.0 && f_open > 0.0 && z0 > 0.0) {
        return Err(Error::Domain("frequencies and z0 must be positive".into()));
    }
    let offset = f_r / f_open - n as f64;
    const EPS: f64 = 1e-14;
    if offset.abs() < EPS || (offset.abs() - 0.5).abs() < EPS {
        return Err(Error::SingularGeometry { offset });
    }
    if offset.abs() > 0.5 {
        return Err(Error::Domain(format!(
            "f_r / f_open = {} is outside the branch of mode n = {n}",
            f_r / f_open
        )));
    }
    Ok(z0 / (PI * offset).tan())
}
