//! Network-level synthesis of a hanger resonator: a feedline tapped by a
//! coupling capacitor in series with the loaded line.
//!
//! Everything here is built from ABCD matrices and the terminated-line
//! formula, without using the resonance condition, so it can serve as an
//! independent check of the closed forms.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resonance::solve_resonance;
use crate::roots::bracketed_root;
use crate::txline::{self, AttenuationModel, ComplexImpedance, LineSpec, LoadModel};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HangerNetwork {
    pub line: LineSpec,
    /// Coupling capacitance in F.
    pub coupling_c: f64,
    pub load: LoadModel,
    pub feed_z0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexTrace {
    pub freqs: Vec<f64>,
    pub s21: Vec<Complex64>,
}

/// Two-port cascade matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abcd {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Abcd {
    pub fn series(z: Complex64) -> Self {
        Self { a: 1.0.into(), b: z, c: 0.0.into(), d: 1.0.into() }
    }

    pub fn shunt(y: Complex64) -> Self {
        Self { a: 1.0.into(), b: 0.0.into(), c: y, d: 1.0.into() }
    }

    /// Line section with characteristic impedance `z0` and total
    /// propagation `gamma * l`.
    pub fn line(z0: f64, gamma_l: Complex64) -> Self {
        let (ch, sh) = (gamma_l.cosh(), gamma_l.sinh());
        Self { a: ch, b: sh * z0, c: sh / z0, d: ch }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// Impedance seen at port 1 with port 2 terminated by `z_load`.
    pub fn input_impedance(&self, z_load: Complex64) -> Complex64 {
        (self.a * z_load + self.b) / (self.c * z_load + self.d)
    }

    pub fn s21(&self, z0: f64) -> Complex64 {
        2.0 / (self.a + self.b / z0 + self.c * z0 + self.d)
    }

    pub fn s12(&self, z0: f64) -> Complex64 {
        2.0 * self.det() / (self.a + self.b / z0 + self.c * z0 + self.d)
    }
}

impl Mul for Abcd {
    type Output = Abcd;

    fn mul(self, o: Abcd) -> Abcd {
        Abcd {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }
}

impl HangerNetwork {
    pub fn new(line: LineSpec, coupling_c: f64, load: LoadModel, feed_z0: f64) -> Result<Self> {
        if !(coupling_c > 0.0 && coupling_c.is_finite()) {
            return Err(Error::Domain(format!("coupling capacitance must be positive, got {coupling_c}")));
        }
        if !(feed_z0 > 0.0 && feed_z0.is_finite()) {
            return Err(Error::Domain(format!("feedline impedance must be positive, got {feed_z0}")));
        }
        Ok(Self { line, coupling_c, load, feed_z0 })
    }

    /// The same network with line and load losses removed.
    pub fn lossless(&self) -> Result<Self> {
        Ok(Self {
            line: LineSpec { attenuation: AttenuationModel::lossless(), ..self.line },
            load: self.load.with_tan_delta(0.0)?,
            ..self.clone()
        })
    }

    /// Cascade of the coupling capacitor and the resonator line.
    pub fn branch_abcd(&self, f: f64) -> Abcd {
        let zc = 1.0 / (J * 2.0 * PI * f * self.coupling_c);
        Abcd::series(zc) * Abcd::line(self.line.z0, self.line.propagation(f))
    }

    /// Impedance of the branch hanging off the feedline.
    pub fn shunt_impedance(&self, f: f64) -> Result<Complex64> {
        let zl = txline::load_impedance(&self.load, f)?.to_complex();
        Ok(self.branch_abcd(f).input_impedance(zl))
    }

    /// Feedline-level two-port: a single shunt element.
    pub fn two_port(&self, f: f64) -> Result<Abcd> {
        Ok(Abcd::shunt(1.0 / self.shunt_impedance(f)?))
    }
}

impl ComplexTrace {
    pub fn new(freqs: Vec<f64>, s21: Vec<Complex64>) -> Result<Self> {
        if freqs.len() != s21.len() {
            return Err(Error::Domain(format!(
                "{} frequencies but {} S21 values",
                freqs.len(),
                s21.len()
            )));
        }
        if freqs.windows(2).any(|w| !(w[1] > w[0])) || freqs.first().is_some_and(|f| !(*f > 0.0)) {
            return Err(Error::Domain("frequencies must be positive and strictly increasing".into()));
        }
        Ok(Self { freqs, s21 })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    /// Multiplies the trace by `exp(-2 pi j f tau)`.
    pub fn with_delay(&self, tau: f64) -> Self {
        let s21 = self
            .freqs
            .iter()
            .zip(&self.s21)
            .map(|(f, s)| s * Complex64::from_polar(1.0, -2.0 * PI * f * tau))
            .collect();
        Self { freqs: self.freqs.clone(), s21 }
    }
}

/// `n` evenly spaced frequencies on `[center - half_span, center + half_span]`.
pub fn linear_grid(center: f64, half_span: f64, n: usize) -> Vec<f64> {
    let start = center - half_span;
    let step = 2.0 * half_span / (n.max(2) - 1) as f64;
    (0..n).map(|i| start + step * i as f64).collect()
}

/// `Z_in = Z0 (Z_L + Z0 tanh gl) / (Z0 + Z_L tanh gl)`, evaluated with
/// `cosh` and `sinh` so the quarter-wave points stay finite. An infinite load
/// impedance is treated as an open circuit.
pub fn input_impedance(line: &LineSpec, z_load: ComplexImpedance, f: f64) -> Result<ComplexImpedance> {
    if !(f > 0.0) {
        return Err(Error::Domain(format!("frequency must be positive, got {f}")));
    }
    let z0 = line.z0;
    let gl = line.propagation(f);
    let (ch, sh) = (gl.cosh(), gl.sinh());
    let zl = z_load.to_complex();
    let zin = if zl.norm().is_finite() {
        z0 * (zl * ch + z0 * sh) / (z0 * ch + zl * sh)
    } else {
        z0 * ch / sh
    };
    Ok(zin.into())
}

/// Transmission past the shunt tap, `S21 = 1 / (1 + Z_f / (2 Z_sh))`.
pub fn synth_s21(net: &HangerNetwork, freqs: &[f64]) -> Result<ComplexTrace> {
    let s21 = freqs
        .par_iter()
        .map(|&f| {
            if !(f > 0.0) {
                return Err(Error::Domain(format!("frequency must be positive, got {f}")));
            }
            let z = net.shunt_impedance(f)?;
            Ok(2.0 * z / (2.0 * z + net.feed_z0))
        })
        .collect::<Result<Vec<_>>>()?;
    ComplexTrace::new(freqs.to_vec(), s21)
}

/// `f_notch - f_r` for mode `mode_n`, where `f_notch` is the zero of
/// `S21` on the lossless network and `f_r` the analytic resonance.
pub fn frequency_pull(net: &HangerNetwork, mode_n: u32) -> Result<f64> {
    let lossless = net.lossless()?;
    let f_r = solve_resonance(&lossless.load, &lossless.line, mode_n)?.f_r;
    Ok(notch_frequency(&lossless, f_r)? - f_r)
}

// The branch is a series resonance: Z_sh = 0 when
// Z0 - X t - b (X + Z0 t) = 0, with t = tan(beta l) and b = w C_c Z0.
fn notch_frequency(net: &HangerNetwork, f_r: f64) -> Result<f64> {
    let z0 = net.line.z0;
    let g = |f: f64| {
        let x = txline::reactance(&net.load, f).unwrap_or(f64::NAN);
        let t = net.line.electrical_length(f).tan();
        let b = 2.0 * PI * f * net.coupling_c * z0;
        z0 - x * t - b * (x + z0 * t)
    };
    let g_r = g(f_r);
    if g_r == 0.0 {
        return Ok(f_r);
    }
    // the notch sits just below f_r; widen the step until the sign flips
    let mut delta = 1e-15;
    let mut inner = f_r;
    while delta < 0.25 {
        let f = f_r * (1.0 - delta);
        let v = g(f);
        if !v.is_finite() {
            break;
        }
        if v.signum() != g_r.signum() {
            return bracketed_root(&g, f, inner, 1e-16);
        }
        inner = f;
        delta *= 2.0;
    }
    Err(Error::NonConvergence("no notch found below the analytic resonance".into()))
}

/// Coupling capacitance that pulls mode `mode_n` by `rel_pull * f_r`.
pub fn coupling_for_pull(
    line: &LineSpec,
    load: &LoadModel,
    mode_n: u32,
    rel_pull: f64,
    feed_z0: f64,
) -> Result<f64> {
    if !(rel_pull > 0.0 && rel_pull < 0.01) {
        return Err(Error::Domain(format!("relative pull must lie in (0, 0.01), got {rel_pull}")));
    }
    let base = HangerNetwork::new(*line, 1e-18, load.clone(), feed_z0)?.lossless()?;
    let f_r = solve_resonance(&base.load, &base.line, mode_n)?.f_r;
    let h = |log_c: f64| {
        let net = HangerNetwork { coupling_c: log_c.exp(), ..base.clone() };
        match notch_frequency(&net, f_r) {
            Ok(f) => ((f_r - f) / f_r).ln() - rel_pull.ln(),
            Err(_) => f64::INFINITY,
        }
    };
    let log_c = bracketed_root(h, (1e-24f64).ln(), (1e-11f64).ln(), 1e-12)?;
    Ok(log_c.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dut_a(tan_delta: f64, coupling_c: f64) -> HangerNetwork {
        let line = LineSpec::new(50.0, 3.899e9, AttenuationModel::new(2.2e5, 1.0).unwrap()).unwrap();
        let load = LoadModel::capacitor(388e-15, tan_delta).unwrap();
        HangerNetwork::new(line, coupling_c, load, 50.0).unwrap()
    }

    #[test]
    fn matched_line_returns_z0() {
        let line = LineSpec::lossless(50.0, 4e9).unwrap();
        for &f in &[1e9, 3.3e9, 7.7e9] {
            let z = input_impedance(&line, ComplexImpedance::new(50.0, 0.0), f).unwrap();
            assert_relative_eq!(z.re, 50.0, max_relative = 1e-14);
            assert!(z.im.abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_and_half_wave_transforms() {
        let line = LineSpec::lossless(50.0, 4e9).unwrap();
        let short = input_impedance(&line, ComplexImpedance::new(0.0, 0.0), 2e9).unwrap();
        assert!(short.norm() > 1e12);
        let open = ComplexImpedance::new(f64::INFINITY, 0.0);
        let z = input_impedance(&line, open, 4e9).unwrap();
        assert!(z.norm() > 1e12);
    }

    #[test]
    fn abcd_matches_closed_form() {
        let net = dut_a(1e-4, 5e-15);
        let f = 3.3e9;
        let zl = txline::load_impedance(&net.load, f).unwrap();
        let closed = input_impedance(&net.line, zl, f).unwrap().to_complex();
        let cascade = Abcd::line(net.line.z0, net.line.propagation(f)).input_impedance(zl.to_complex());
        assert!((closed - cascade).norm() < 1e-10 * closed.norm());
    }

    #[test]
    fn reciprocity() {
        let net = dut_a(1e-4, 5e-15);
        for &f in &[3.0e9, 3.41e9, 3.9e9] {
            let two_port = net.two_port(f).unwrap();
            assert!((two_port.det() - 1.0).norm() < 1e-12);
            let branch = net.branch_abcd(f);
            assert!((branch.det() - 1.0).norm() < 1e-9);
            assert_eq!(two_port.s21(50.0), two_port.s12(50.0));
        }
    }

    #[test]
    fn passive_everywhere() {
        let net = dut_a(1e-3, 20e-15);
        let freqs = linear_grid(3.4e9, 0.3e9, 3001);
        let trace = synth_s21(&net, &freqs).unwrap();
        assert!(trace.s21.iter().all(|s| s.norm() <= 1.0 + 1e-9));
    }

    #[test]
    fn lossless_notch_reaches_zero() {
        let net = dut_a(0.0, 5e-15).lossless().unwrap();
        let f_r = solve_resonance(&net.load, &net.line, 1).unwrap().f_r;
        let f_notch = f_r + frequency_pull(&net, 1).unwrap();
        let s = synth_s21(&net, &[f_notch]).unwrap().s21[0];
        assert!(s.norm() < 1e-6, "{}", s.norm());
    }

    #[test]
    fn pull_shrinks_with_coupling() {
        let mut last = f64::INFINITY;
        for &cc in &[40e-15, 20e-15, 10e-15, 1e-15, 1e-18] {
            let pull = frequency_pull(&dut_a(0.0, cc), 1).unwrap();
            assert!(pull < 0.0);
            assert!(pull.abs() < last);
            last = pull.abs();
        }
        assert!(last / 3.41e9 < 1e-6);
    }

    #[test]
    fn decoupled_notch_vanishes() {
        let net = dut_a(1e-5, 1e-21);
        let f_r = solve_resonance(&net.load, &net.line, 1).unwrap().f_r;
        let s = synth_s21(&net, &[f_r]).unwrap().s21[0];
        assert!((s - 1.0).norm() < 1e-6);
    }

    #[test]
    fn coupling_for_pull_hits_target() {
        let net = dut_a(0.0, 1e-15);
        let cc = coupling_for_pull(&net.line, &net.load, 1, 5e-6, 50.0).unwrap();
        let pulled = HangerNetwork { coupling_c: cc, ..net.clone() };
        let f_r = solve_resonance(&net.load, &net.line, 1).unwrap().f_r;
        assert_relative_eq!(-frequency_pull(&pulled, 1).unwrap() / f_r, 5e-6, max_relative = 1e-6);
    }

    #[test]
    fn trace_validation() {
        assert!(ComplexTrace::new(vec![1.0, 1.0], vec![0.0.into(); 2]).is_err());
        assert!(ComplexTrace::new(vec![1.0], vec![]).is_err());
    }
}
