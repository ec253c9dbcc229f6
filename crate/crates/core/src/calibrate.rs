//! Multimode self-calibration.
//!
//! Two or more modes of the same loaded line determine `f_open` and the load
//! value from their frequencies, and `tan δ` together with `Q_open` from their
//! internal quality factors, without a separate reference resonator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::resonance::{reactance_from_frequencies, value_from_reactance};
use crate::roots::bracketed_root;
use crate::txline::LoadKind;

/// One measured mode. The sigmas are one-standard-deviation input
/// uncertainties used for error propagation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeMeasurement {
    pub mode_n: u32,
    pub f_r: f64,
    #[serde(default)]
    pub q_i: Option<f64>,
    #[serde(default)]
    pub f_r_sigma: Option<f64>,
    #[serde(default)]
    pub q_i_sigma: Option<f64>,
}

impl ModeMeasurement {
    pub fn new(mode_n: u32, f_r: f64) -> Self {
        Self { mode_n, f_r, q_i: None, f_r_sigma: None, q_i_sigma: None }
    }

    pub fn with_q(mode_n: u32, f_r: f64, q_i: f64) -> Self {
        Self { q_i: Some(q_i), ..Self::new(mode_n, f_r) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactanceCalibration {
    pub kind: LoadKind,
    pub f_open: f64,
    /// Farad or henry depending on `kind`.
    pub load_value: f64,
    pub z0: f64,
    /// Per-mode `f_r/f_open - n - atan(Z0/X)/pi`, in input order.
    pub residuals: Vec<f64>,
    /// Covariance of `(f_open, load_value)`.
    pub covariance: [[f64; 2]; 2],
    pub flags: Vec<Flag>,
}

impl ReactanceCalibration {
    pub fn f_open_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn load_value_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn residual_norm(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCalibration {
    pub tan_delta: f64,
    pub q_open_ref: f64,
    pub exponent_s: f64,
    /// Per-mode `Q_i,model^-1 - Q_i,measured^-1`.
    pub residuals: Vec<f64>,
    pub condition_number: f64,
    pub tan_delta_sigma: f64,
    pub q_open_ref_sigma: f64,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParasiticModel {
    PureCapacitor,
    PureInductor,
    SeriesLc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: ParasiticModel,
    pub capacitance: Option<f64>,
    pub inductance: Option<f64>,
    /// RMS reactance misfit in ohm.
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReactance {
    pub mode_n: u32,
    pub f_r: f64,
    pub reactance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParasiticReport {
    pub reactances: Vec<ModeReactance>,
    pub fits: Vec<ModelFit>,
    pub best: ParasiticModel,
    pub flags: Vec<Flag>,
}

fn validate_modes(measurements: &[ModeMeasurement]) -> Result<()> {
    if measurements.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: measurements.len() });
    }
    for (i, m) in measurements.iter().enumerate() {
        if !(m.f_r > 0.0 && m.f_r.is_finite()) {
            return Err(Error::Domain(format!("mode {} has non-positive f_r", m.mode_n)));
        }
        if measurements[..i].iter().any(|o| o.mode_n == m.mode_n) {
            return Err(Error::Domain(format!("mode index {} appears twice", m.mode_n)));
        }
    }
    Ok(())
}

fn pure_kind(kind: LoadKind) -> Result<()> {
    if kind == LoadKind::SeriesComposite {
        Err(Error::Domain("calibration needs a capacitor or inductor hypothesis".into()))
    } else {
        Ok(())
    }
}

fn element_reactance(kind: LoadKind, value: f64, f: f64) -> f64 {
    match kind {
        LoadKind::Capacitor => -1.0 / (2.0 * PI * f * value),
        _ => 2.0 * PI * f * value,
    }
}

// Phase offset atan(Z0/X)/pi of mode k for a trial load value.
fn offset(kind: LoadKind, value: f64, f: f64, z0: f64) -> f64 {
    (z0 / element_reactance(kind, value, f)).atan() / PI
}

// d offset / dX
fn d_offset_dx(x: f64, z0: f64) -> f64 {
    -z0 / (PI * (x * x + z0 * z0))
}

fn mismatch(kind: LoadKind) -> Error {
    match kind {
        LoadKind::Capacitor => Error::KindMismatch { hypothesis: "capacitive", suggested: "inductive" },
        _ => Error::KindMismatch { hypothesis: "inductive", suggested: "capacitive" },
    }
}

/// Solves `(f_open, C)` or `(f_open, L)` from two or more mode frequencies.
///
/// Two modes reduce to a scalar root in the load value; extra modes refine
/// the pair by least squares on the resonance-condition residuals.
pub fn calibrate_reactance(
    measurements: &[ModeMeasurement],
    z0: f64,
    kind: LoadKind,
) -> Result<ReactanceCalibration> {
    validate_modes(measurements)?;
    pure_kind(kind)?;
    if !(z0 > 0.0) {
        return Err(Error::Domain("z0 must be positive".into()));
    }
    let mut sorted: Vec<ModeMeasurement> = measurements.to_vec();
    sorted.sort_by_key(|m| m.mode_n);
    let (m1, m2) = (sorted[0], sorted[1]);
    if kind == LoadKind::Capacitor && m1.mode_n == 0 {
        return Err(Error::UnphysicalMode("capacitive loads have no n = 0 mode".into()));
    }

    // implied f_open for mode k at load value v
    let f_open_of = |m: &ModeMeasurement, v: f64| m.f_r / (m.mode_n as f64 + offset(kind, v, m.f_r, z0));
    let g = |v: f64| f_open_of(&m1, v) - f_open_of(&m2, v);

    // seed from the branch midpoint of the lowest mode
    let n1 = m1.mode_n as f64;
    let f_open_guess = match kind {
        LoadKind::Capacitor => m1.f_r / (n1 - 0.25),
        _ => m1.f_r / (n1 + 0.25),
    };
    let x_guess = reactance_from_frequencies(m1.f_r, f_open_guess, m1.mode_n, z0)?;
    let v_guess = value_from_reactance(kind, x_guess, m1.f_r);

    const SCAN: usize = 481;
    let (lo_v, hi_v) = (v_guess * 1e-3, v_guess * 1e3);
    let grid: Vec<f64> = (0..SCAN)
        .map(|i| lo_v * (hi_v / lo_v).powf(i as f64 / (SCAN - 1) as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&v| g(v)).collect();
    let mut best: Option<(f64, f64)> = None;
    for i in 0..SCAN - 1 {
        let (a, b) = (values[i], values[i + 1]);
        if !(a.is_finite() && b.is_finite()) || a.signum() == b.signum() {
            continue;
        }
        let v = bracketed_root(&g, grid[i], grid[i + 1], 1e-15)?;
        let f_open = f_open_of(&m1, v);
        if f_open > 0.0 && branch_ok(&sorted, f_open, kind) {
            let score = g(v).abs() / f_open;
            if best.map_or(true, |(_, s)| score < s) {
                best = Some((v, score));
            }
        }
    }
    let (mut value, _) = best.ok_or_else(|| mismatch(kind))?;
    let mut f_open = f_open_of(&m1, value);

    if sorted.len() > 2 {
        (f_open, value) = refine_least_squares(&sorted, z0, kind, f_open, value)?;
        if !branch_ok(&sorted, f_open, kind) {
            return Err(mismatch(kind));
        }
    }

    let residuals: Vec<f64> = measurements
        .iter()
        .map(|m| m.f_r / f_open - m.mode_n as f64 - offset(kind, value, m.f_r, z0))
        .collect();
    let covariance = reactance_covariance(measurements, z0, kind, f_open, value, &residuals);
    let mut flags = Vec::new();
    if measurements.len() == 2 {
        flags.push(Flag::ExactlyDetermined);
    }
    Ok(ReactanceCalibration { kind, f_open, load_value: value, z0, residuals, covariance, flags })
}

fn branch_ok(modes: &[ModeMeasurement], f_open: f64, kind: LoadKind) -> bool {
    modes.iter().all(|m| {
        let off = m.f_r / f_open - m.mode_n as f64;
        match kind {
            LoadKind::Capacitor => off > -0.5 && off < 0.0,
            _ => off > 0.0 && off < 0.5,
        }
    })
}

// Jacobian rows of r_k = f_k/f_open - n_k - a_k(v) with respect to
// (f_open, v), plus dr_k/df_k for input-noise propagation.
fn jacobian_rows(
    modes: &[ModeMeasurement],
    z0: f64,
    kind: LoadKind,
    f_open: f64,
    value: f64,
) -> Vec<([f64; 2], f64)> {
    let sign = if kind == LoadKind::Capacitor { -1.0 } else { 1.0 };
    modes
        .iter()
        .map(|m| {
            let x = element_reactance(kind, value, m.f_r);
            let da = d_offset_dx(x, z0);
            // dX/dv = sign X / v and dX/df = sign X / f
            let dr_dv = -da * sign * x / value;
            let dr_dfo = -m.f_r / (f_open * f_open);
            let dr_df = 1.0 / f_open - da * sign * x / m.f_r;
            ([dr_dfo, dr_dv], dr_df)
        })
        .collect()
}

fn refine_least_squares(
    modes: &[ModeMeasurement],
    z0: f64,
    kind: LoadKind,
    mut f_open: f64,
    mut value: f64,
) -> Result<(f64, f64)> {
    // Gauss-Newton in relative steps
    for _ in 0..100 {
        let rows = jacobian_rows(modes, z0, kind, f_open, value);
        let mut jtj = Matrix2::zeros();
        let mut jtr = nalgebra::Vector2::zeros();
        for (m, (row, _)) in modes.iter().zip(&rows) {
            let r = m.f_r / f_open - m.mode_n as f64 - offset(kind, value, m.f_r, z0);
            let j = nalgebra::Vector2::new(row[0] * f_open, row[1] * value);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let step = jtj
            .try_inverse()
            .ok_or_else(|| Error::DegenerateModes("singular normal equations".into()))?
            * (-jtr);
        f_open *= 1.0 + step[0];
        value *= 1.0 + step[1];
        if step.norm() < 1e-15 {
            break;
        }
    }
    Ok((f_open, value))
}

fn reactance_covariance(
    modes: &[ModeMeasurement],
    z0: f64,
    kind: LoadKind,
    f_open: f64,
    value: f64,
    residuals: &[f64],
) -> [[f64; 2]; 2] {
    let rows = jacobian_rows(modes, z0, kind, f_open, value);
    let j = DMatrix::from_fn(rows.len(), 2, |i, k| rows[i].0[k]);
    let have_sigmas = modes.iter().all(|m| m.f_r_sigma.is_some());
    let dof = modes.len() as f64 - 2.0;
    let noise: Vec<f64> = if have_sigmas {
        modes
            .iter()
            .zip(&rows)
            .map(|(m, (_, dr_df))| (dr_df * m.f_r_sigma.unwrap_or(0.0)).powi(2))
            .collect()
    } else if dof > 0.0 {
        let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / dof;
        vec![s2; modes.len()]
    } else {
        vec![0.0; modes.len()]
    };
    sandwich_covariance(&j, &noise).unwrap_or([[f64::NAN; 2]; 2])
}

// (J^T J)^-1 J^T diag(noise) J (J^T J)^-1
fn sandwich_covariance(j: &DMatrix<f64>, noise: &[f64]) -> Option<[[f64; 2]; 2]> {
    let jt = j.transpose();
    let inv = (&jt * j).try_inverse()?;
    let sigma = DMatrix::from_diagonal(&DVector::from_column_slice(noise));
    let cov = &inv * &jt * sigma * j * &inv;
    Some([[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]])
}

/// Solves `(tan δ, Q_open)` from the quality factors of two or more modes,
/// with `Q_open^-1` scaling as `(f / f_open)^s` across modes.
pub fn calibrate_loss(
    measurements: &[ModeMeasurement],
    calib: &ReactanceCalibration,
    s: f64,
) -> Result<LossCalibration> {
    let modes: Vec<&ModeMeasurement> = measurements.iter().filter(|m| m.q_i.is_some()).collect();
    if modes.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: modes.len() });
    }
    if modes.iter().any(|m| !(m.q_i.unwrap_or(0.0) > 0.0 && m.f_r > 0.0)) {
        return Err(Error::Domain("q_i and f_r must be positive".into()));
    }
    let rows = modes.len();
    let mut a = DMatrix::zeros(rows, 2);
    let mut b = DVector::zeros(rows);
    let mut weight = Vec::with_capacity(rows);
    for (k, m) in modes.iter().enumerate() {
        let phi = 2.0 * PI * m.f_r / calib.f_open;
        let sin_abs = phi.sin().abs();
        a[(k, 0)] = 2.0 * sin_abs;
        a[(k, 1)] = 2.0 * PI * (phi / (2.0 * PI)).powf(s);
        b[k] = (phi + sin_abs) / m.q_i.unwrap_or(f64::NAN);
        weight.push(phi + sin_abs);
    }

    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition_number < 1e12) {
        return Err(Error::DegenerateModes(format!(
            "mode equations are singular (condition number {condition_number:.3e})"
        )));
    }
    let qr = a.clone().qr();
    let x = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &b))
        .ok_or_else(|| Error::DegenerateModes("triangular factor is singular".into()))?;
    let (tan_delta, q_open_inv) = (x[0], x[1]);

    let fitted = &a * &x;
    let residuals: Vec<f64> = (0..rows).map(|k| (fitted[k] - b[k]) / weight[k]).collect();

    // propagate Q_i uncertainty, or the residual scatter when overdetermined
    let dof = rows as f64 - 2.0;
    let noise: Vec<f64> = if modes.iter().all(|m| m.q_i_sigma.is_some()) {
        modes
            .iter()
            .zip(&weight)
            .map(|(m, w)| {
                let q = m.q_i.unwrap_or(f64::NAN);
                (w * m.q_i_sigma.unwrap_or(0.0) / (q * q)).powi(2)
            })
            .collect()
    } else if dof > 0.0 {
        let s2 = (0..rows).map(|k| (fitted[k] - b[k]).powi(2)).sum::<f64>() / dof;
        vec![s2; rows]
    } else {
        vec![0.0; rows]
    };
    let cov = sandwich_covariance(&a, &noise).unwrap_or([[f64::NAN; 2]; 2]);

    let mut flags = Vec::new();
    if tan_delta < 0.0 {
        flags.push(Flag::NegativeLossTangent);
    }
    if q_open_inv <= 0.0 {
        flags.push(Flag::UnphysicalFit);
    }
    if condition_number > 1e6 {
        flags.push(Flag::IllConditioned);
    }
    if rows == 2 {
        flags.push(Flag::ExactlyDetermined);
    }
    Ok(LossCalibration {
        tan_delta,
        q_open_ref: 1.0 / q_open_inv,
        exponent_s: s,
        residuals,
        condition_number,
        tan_delta_sigma: cov[0][0].sqrt(),
        q_open_ref_sigma: cov[1][1].sqrt() / (q_open_inv * q_open_inv),
        flags,
    })
}

/// Reactance per mode at the given `f_open`, fitted by a pure capacitor, a
/// pure inductor and a series LC.
///
/// The best model is the one with the smallest residual; residuals within
/// `1e-9` of the reactance scale count as ties and go to the simpler model.
pub fn discriminate_parasitics(
    measurements: &[ModeMeasurement],
    z0: f64,
    f_open: f64,
) -> Result<ParasiticReport> {
    validate_modes(measurements)?;
    let reactances = measurements
        .iter()
        .map(|m| {
            Ok(ModeReactance {
                mode_n: m.mode_n,
                f_r: m.f_r,
                reactance: reactance_from_frequencies(m.f_r, f_open, m.mode_n, z0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let omega: Vec<f64> = reactances.iter().map(|r| 2.0 * PI * r.f_r).collect();
    let x: Vec<f64> = reactances.iter().map(|r| r.reactance).collect();
    let n = x.len() as f64;
    let rms = |model: &dyn Fn(f64) -> f64| -> f64 {
        (omega.iter().zip(&x).map(|(w, xi)| (model(*w) - xi).powi(2)).sum::<f64>() / n).sqrt()
    };

    // X = -u / w with u = 1/C
    let u = -omega.iter().zip(&x).map(|(w, xi)| xi / w).sum::<f64>()
        / omega.iter().map(|w| 1.0 / (w * w)).sum::<f64>();
    let cap_fit = ModelFit {
        model: ParasiticModel::PureCapacitor,
        capacitance: Some(1.0 / u),
        inductance: None,
        rms_residual: rms(&|w| -u / w),
    };
    let l = omega.iter().zip(&x).map(|(w, xi)| xi * w).sum::<f64>()
        / omega.iter().map(|w| w * w).sum::<f64>();
    let ind_fit = ModelFit {
        model: ParasiticModel::PureInductor,
        capacitance: None,
        inductance: Some(l),
        rms_residual: rms(&|w| l * w),
    };
    // columns scaled to order one so the solve keeps its precision
    let w_ref = omega.iter().sum::<f64>() / n;
    let design = DMatrix::from_fn(x.len(), 2, |i, k| if k == 0 { omega[i] / w_ref } else { -w_ref / omega[i] });
    let sol = design
        .svd(true, true)
        .solve(&DVector::from_column_slice(&x), 1e-300)
        .map_err(|e| Error::DegenerateModes(e.to_string()))?;
    let (ls, us) = (sol[0] / w_ref, sol[1] * w_ref);
    let lc_fit = ModelFit {
        model: ParasiticModel::SeriesLc,
        capacitance: Some(1.0 / us),
        inductance: Some(ls),
        rms_residual: rms(&|w| ls * w - us / w),
    };

    let scale = (x.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let tie = 1e-9 * scale;
    let fits = vec![cap_fit, ind_fit, lc_fit];
    let mut best = fits[0];
    for f in &fits[1..] {
        if f.rms_residual < best.rms_residual - tie {
            best = *f;
        }
    }

    let mut flags = Vec::new();
    if measurements.len() == 2 {
        flags.push(Flag::ExactlyDetermined);
    }
    if best.capacitance.is_some_and(|c| c <= 0.0) || best.inductance.is_some_and(|l| l <= 0.0) {
        flags.push(Flag::UnphysicalFit);
    }
    Ok(ParasiticReport { reactances, fits, best: best.model, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::qi_forward;
    use crate::resonance::solve_resonance;
    use crate::txline::{AttenuationModel, LineSpec, LoadModel, ReactiveElement};
    use approx::assert_relative_eq;

    fn synth(load: &LoadModel, f_open: f64, modes: &[u32]) -> Vec<ModeMeasurement> {
        let line = LineSpec::lossless(50.0, f_open).unwrap();
        modes
            .iter()
            .map(|&n| ModeMeasurement::new(n, solve_resonance(load, &line, n).unwrap().f_r))
            .collect()
    }

    #[test]
    fn dut_a_table_values() {
        let modes = [ModeMeasurement::new(1, 3.410e9), ModeMeasurement::new(2, 6.927e9)];
        let cal = calibrate_reactance(&modes, 50.0, LoadKind::Capacitor).unwrap();
        assert!((cal.f_open - 3.899e9).abs() < 2e6, "{}", cal.f_open);
        assert!((cal.load_value - 388e-15).abs() < 2e-15, "{}", cal.load_value);
        assert!(cal.residual_norm() < 1e-12);
        assert!(cal.flags.contains(&Flag::ExactlyDetermined));
    }

    #[test]
    fn synthetic_capacitor_round_trip() {
        let load = LoadModel::capacitor(250e-15, 0.0).unwrap();
        let modes = synth(&load, 5.1e9, &[1, 2]);
        let cal = calibrate_reactance(&modes, 50.0, LoadKind::Capacitor).unwrap();
        assert_relative_eq!(cal.f_open, 5.1e9, max_relative = 1e-9);
        assert_relative_eq!(cal.load_value, 250e-15, max_relative = 1e-9);
    }

    #[test]
    fn synthetic_inductor_round_trip() {
        let load = LoadModel::inductor(700e-12, 0.0).unwrap();
        let modes = synth(&load, 6e9, &[1, 2, 3]);
        let cal = calibrate_reactance(&modes, 50.0, LoadKind::Inductor).unwrap();
        assert_relative_eq!(cal.f_open, 6e9, max_relative = 1e-9);
        assert_relative_eq!(cal.load_value, 700e-12, max_relative = 1e-9);
    }

    #[test]
    fn wrong_kind_is_reported() {
        let modes = [ModeMeasurement::new(1, 3.410e9), ModeMeasurement::new(2, 6.927e9)];
        let err = calibrate_reactance(&modes, 50.0, LoadKind::Inductor).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { suggested: "capacitive", .. }));
    }

    #[test]
    fn single_mode_is_rejected() {
        let modes = [ModeMeasurement::new(1, 3.410e9)];
        assert!(matches!(
            calibrate_reactance(&modes, 50.0, LoadKind::Capacitor),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
        let dup = [ModeMeasurement::new(1, 3.41e9), ModeMeasurement::new(1, 3.42e9)];
        assert!(calibrate_reactance(&dup, 50.0, LoadKind::Capacitor).is_err());
    }

    #[test]
    fn consistent_third_mode_keeps_solution() {
        let load = LoadModel::capacitor(388e-15, 0.0).unwrap();
        let modes = synth(&load, 3.9e9, &[1, 2, 3]);
        let two = calibrate_reactance(&modes[..2], 50.0, LoadKind::Capacitor).unwrap();
        let three = calibrate_reactance(&modes, 50.0, LoadKind::Capacitor).unwrap();
        assert_relative_eq!(two.f_open, three.f_open, max_relative = 1e-10);
        assert_relative_eq!(two.load_value, three.load_value, max_relative = 1e-10);
    }

    #[test]
    fn inconsistent_third_mode_grows_residuals() {
        let load = LoadModel::capacitor(388e-15, 0.0).unwrap();
        let base = synth(&load, 3.9e9, &[1, 2, 3]);
        let mut last = 0.0;
        for &shift in &[1e-5, 1e-4, 1e-3] {
            let mut modes = base.clone();
            modes[2].f_r *= 1.0 + shift;
            let cal = calibrate_reactance(&modes, 50.0, LoadKind::Capacitor).unwrap();
            assert!(cal.residual_norm() > last);
            last = cal.residual_norm();
        }
    }

    #[test]
    fn covariance_from_frequency_sigmas() {
        let mut modes = [ModeMeasurement::new(1, 3.410e9), ModeMeasurement::new(2, 6.927e9)];
        for m in &mut modes {
            m.f_r_sigma = Some(1e3);
        }
        let cal = calibrate_reactance(&modes, 50.0, LoadKind::Capacitor).unwrap();
        assert!(cal.f_open_sigma() > 0.0 && cal.load_value_sigma() > 0.0);
        // finite-difference check of the propagated sigma on C
        let mut bumped = modes;
        bumped[0].f_r += 1e3;
        let c1 = calibrate_reactance(&bumped, 50.0, LoadKind::Capacitor).unwrap().load_value;
        let mut bumped2 = modes;
        bumped2[1].f_r += 1e3;
        let c2 = calibrate_reactance(&bumped2, 50.0, LoadKind::Capacitor).unwrap().load_value;
        let fd = ((c1 - cal.load_value).powi(2) + (c2 - cal.load_value).powi(2)).sqrt();
        assert_relative_eq!(cal.load_value_sigma(), fd, max_relative = 1e-3);
    }

    #[test]
    fn loss_round_trip() {
        let f_open = 3.9e9;
        let load = LoadModel::capacitor(388e-15, 0.0).unwrap();
        let atten = AttenuationModel::new(2.2e5, 1.0).unwrap();
        let line = LineSpec::lossless(50.0, f_open).unwrap();
        let modes: Vec<ModeMeasurement> = [1u32, 2]
            .iter()
            .map(|&n| {
                let s = solve_resonance(&load, &line, n).unwrap();
                let q = qi_forward(s.phi, 4e-6, &atten).unwrap().q_i();
                ModeMeasurement::with_q(n, s.f_r, q)
            })
            .collect();
        let cal = calibrate_reactance(&modes, 50.0, LoadKind::Capacitor).unwrap();
        let lc = calibrate_loss(&modes, &cal, 1.0).unwrap();
        assert_relative_eq!(lc.tan_delta, 4e-6, max_relative = 1e-8);
        assert_relative_eq!(lc.q_open_ref, 2.2e5, max_relative = 1e-8);
        assert!(lc.residuals.iter().all(|r| r.abs() < 1e-18));
    }

    #[test]
    fn dut_a_loss_tangent() {
        let modes = [
            ModeMeasurement::with_q(1, 3.410e9, 2.103e5),
            ModeMeasurement::with_q(2, 6.927e9, 2.215e5),
        ];
        let cal = calibrate_reactance(&modes, 50.0, LoadKind::Capacitor).unwrap();
        let lc = calibrate_loss(&modes, &cal, 1.0).unwrap();
        assert!((lc.tan_delta / 5.6e-6 - 1.0).abs() < 0.05, "{}", lc.tan_delta);
    }

    #[test]
    fn degenerate_loss_system() {
        let cal = ReactanceCalibration {
            kind: LoadKind::Capacitor,
            f_open: 4e9,
            load_value: 1e-13,
            z0: 50.0,
            residuals: vec![],
            covariance: [[0.0; 2]; 2],
            flags: vec![],
        };
        // both modes at the same phase give identical rows
        let modes = [
            ModeMeasurement::with_q(1, 3.0e9, 1e5),
            ModeMeasurement::with_q(2, 3.0e9, 1.1e5),
        ];
        assert!(matches!(calibrate_loss(&modes, &cal, 1.0), Err(Error::DegenerateModes(_))));
        let one = [ModeMeasurement::with_q(1, 3.0e9, 1e5), ModeMeasurement::new(2, 6e9)];
        assert!(matches!(calibrate_loss(&one, &cal, 1.0), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn parasitics_pure_capacitor() {
        let load = LoadModel::capacitor(388e-15, 0.0).unwrap();
        let modes = synth(&load, 3.9e9, &[1, 2]);
        let r = discriminate_parasitics(&modes, 50.0, 3.9e9).unwrap();
        assert_eq!(r.best, ParasiticModel::PureCapacitor);
        assert!(r.fits[0].rms_residual < 1e-9);
        assert!(r.fits[1].rms_residual > 10.0);
        assert_relative_eq!(r.fits[0].capacitance.unwrap(), 388e-15, max_relative = 1e-9);
    }

    #[test]
    fn parasitics_series_lc() {
        let load = LoadModel::series(
            vec![ReactiveElement::Capacitor(388e-15), ReactiveElement::Inductor(100e-12)],
            0.0,
        )
        .unwrap();
        let modes = synth(&load, 3.9e9, &[1, 2, 3]);
        let r = discriminate_parasitics(&modes, 50.0, 3.9e9).unwrap();
        assert_eq!(r.best, ParasiticModel::SeriesLc);
        let lc = r.fits[2];
        assert!(lc.rms_residual < 1e-8);
        assert!(r.fits[0].rms_residual > 0.1);
        assert_relative_eq!(lc.inductance.unwrap(), 100e-12, max_relative = 1e-7);
        assert_relative_eq!(lc.capacitance.unwrap(), 388e-15, max_relative = 1e-7);
    }
}
