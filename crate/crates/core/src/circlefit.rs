//! Notch-type resonance fitting in the complex plane.
//!
//! The trace model is
//! `S21 = a e^{j alpha} e^{-2 pi j f tau} [1 - (Q_l/|Q_c|) e^{j phi0} / (1 + 2j Q_l (f/f_r - 1))]`.
//! The delay is removed first, then a circle is fitted to the corrected
//! points, the phase around its centre is fitted for `f_r` and `Q_l`, and the
//! trace is normalized by the off-resonance point to read off `|Q_c|` and
//! `phi0`. `Q_i^-1 = Q_l^-1 - cos(phi0) / |Q_c|`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::netsynth::ComplexTrace;
use crate::roots::golden_min;

/// Relative circle residual above which the delay search is declared failed.
pub const DELAY_FAILURE_RESIDUAL: f64 = 0.2;

const MIN_POINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleGeometry {
    pub center: Complex64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotchFitResult {
    pub f_r: f64,
    pub q_loaded: f64,
    pub q_coupling_mag: f64,
    pub impedance_mismatch_phi0: f64,
    pub q_internal: f64,
    pub amplitude_a: f64,
    pub phase_alpha: f64,
    pub delay_tau: f64,
    /// RMS distance of the normalized points to the fitted circle.
    pub fit_residual: f64,
    pub flags: Vec<Flag>,
}

/// Parameters of the ideal notch model, for synthesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NotchModel {
    pub f_r: f64,
    pub q_loaded: f64,
    pub q_coupling_mag: f64,
    pub phi0: f64,
    pub amplitude_a: f64,
    pub phase_alpha: f64,
    pub delay_tau: f64,
}

impl NotchModel {
    pub fn s21(&self, f: f64) -> Complex64 {
        let env = self.amplitude_a
            * Complex64::from_polar(1.0, self.phase_alpha - 2.0 * PI * f * self.delay_tau);
        let k = self.q_loaded / self.q_coupling_mag;
        let den = Complex64::new(1.0, 2.0 * self.q_loaded * (f / self.f_r - 1.0));
        env * (1.0 - k * Complex64::from_polar(1.0, self.phi0) / den)
    }

    pub fn trace(&self, freqs: &[f64]) -> Result<ComplexTrace> {
        ComplexTrace::new(freqs.to_vec(), freqs.iter().map(|&f| self.s21(f)).collect())
    }

    pub fn q_internal(&self) -> f64 {
        1.0 / (1.0 / self.q_loaded - self.phi0.cos() / self.q_coupling_mag)
    }
}

/// Algebraic (Kasa) circle fit on centred, scaled coordinates.
pub fn fit_circle(points: &[Complex64]) -> Result<CircleGeometry> {
    if points.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: points.len() });
    }
    let n = points.len() as f64;
    let mean = points.iter().sum::<Complex64>() / n;
    let scale = (points.iter().map(|p| (p - mean).norm_sqr()).sum::<f64>() / n).sqrt();
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateGeometry("points coincide".into()));
    }
    // x^2 + y^2 + D x + E y + F = 0, solved through its 3x3 normal
    // equations; centring and scaling keep them well conditioned
    let (mut sxx, mut sxy, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut szx, mut szy, mut sz) = (0.0, 0.0, 0.0);
    for p in points {
        let q = (p - mean) / scale;
        let (x, y) = (q.re, q.im);
        let z = x * x + y * y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        sx += x;
        sy += y;
        szx += z * x;
        szy += z * y;
        sz += z;
    }
    let ata = Matrix3::new(sxx, sxy, sx, sxy, syy, sy, sx, sy, n);
    let atb = -Vector3::new(szx, szy, sz);
    let eig = ata.symmetric_eigen().eigenvalues;
    if eig.min() <= 1e-20 * eig.max() {
        return Err(Error::DegenerateGeometry("points are collinear".into()));
    }
    let sol = ata
        .cholesky()
        .ok_or_else(|| Error::DegenerateGeometry("points are collinear".into()))?
        .solve(&atb);
    let c = Complex64::new(-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = c.norm_sqr() - sol[2];
    if !(r2 > 0.0) || r2.sqrt() > 1e8 {
        return Err(Error::DegenerateGeometry("points are collinear".into()));
    }
    Ok(CircleGeometry { center: mean + c * scale, radius: r2.sqrt() * scale })
}

fn circle_rms(points: &[Complex64], circle: &CircleGeometry) -> f64 {
    let n = points.len() as f64;
    (points.iter().map(|p| ((p - circle.center).norm() - circle.radius).powi(2)).sum::<f64>() / n).sqrt()
}

fn circle_residuals(points: &[Complex64]) -> Option<(f64, f64)> {
    fit_circle(points).ok().map(|c| (circle_rms(points, &c), c.radius))
}

fn unwrap(phases: &mut [f64]) {
    for i in 1..phases.len() {
        let d = phases[i] - phases[i - 1];
        phases[i] -= (d / (2.0 * PI)).round() * 2.0 * PI;
    }
}

// Least-squares slope of y against x.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

// Delay from the phase slope of the outer tenth of the trace on each side.
fn endpoint_delay(trace: &ComplexTrace) -> f64 {
    let m = (trace.len() / 10).max(2);
    let n = trace.len();
    let mut est = 0.0;
    for range in [0..m, n - m..n] {
        let f = &trace.freqs[range.clone()];
        let mut ph: Vec<f64> = trace.s21[range].iter().map(|z| z.arg()).collect();
        unwrap(&mut ph);
        est += -slope(f, &ph) / (2.0 * PI) / 2.0;
    }
    est
}

fn apply_delay(trace: &ComplexTrace, tau: f64, f_ref: f64) -> Vec<Complex64> {
    trace
        .freqs
        .iter()
        .zip(&trace.s21)
        .map(|(f, z)| z * Complex64::from_polar(1.0, 2.0 * PI * (f - f_ref) * tau))
        .collect()
}

/// Finds the cable delay that makes the trace most circular and returns
/// the corrected trace `e^{2 pi j f tau} S21` with `tau`.
///
/// The total phase across the span is searched around the endpoint slope
/// estimate, within a window sized by the notch depth (which the delay does
/// not change), then refined by repeated zooming and a golden-section step.
/// If no delay brings the circle residual below [`DELAY_FAILURE_RESIDUAL`]
/// of the radius, the slope estimate is used and [`Flag::DelayFallback`] is
/// returned.
pub fn remove_delay(trace: &ComplexTrace) -> Result<(ComplexTrace, f64, Vec<Flag>)> {
    if trace.len() < MIN_POINTS {
        return Err(Error::InsufficientData { needed: MIN_POINTS, got: trace.len() });
    }
    let f_lo = trace.freqs[0];
    let f_hi = trace.freqs[trace.len() - 1];
    let span = f_hi - f_lo;
    let f_ref = 0.5 * (f_lo + f_hi);
    let tau0 = endpoint_delay(trace);
    let eta_to_tau = |eta: f64| eta / (2.0 * PI * span);
    let objective = |eta: f64| {
        circle_residuals(&apply_delay(trace, eta_to_tau(eta), f_ref)).map_or(f64::INFINITY, |r| r.0)
    };

    let mags: Vec<f64> = trace.s21.iter().map(|z| z.norm()).collect();
    let (lo, hi) = mags.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    let depth = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    let eta0 = 2.0 * PI * span * tau0;

    const STEPS: usize = 201;
    let mut center = eta0;
    let mut half = (50.0 * depth).clamp(1e-12, 2.0);
    let mut best = (eta0, objective(eta0));
    while half > 1e-13 {
        let step = 2.0 * half / (STEPS - 1) as f64;
        for i in 0..STEPS {
            let eta = center - half + step * i as f64;
            let v = objective(eta);
            if v < best.1 {
                best = (eta, v);
            }
        }
        center = best.0;
        half = 2.0 * step;
        if half < 1e-9 * (1.0 + center.abs()) {
            break;
        }
    }
    let (eta, res) = golden_min(objective, center - half, center + half, 1e-15);
    if res < best.1 {
        best = (eta, res);
    }
    let radius = circle_residuals(&apply_delay(trace, eta_to_tau(best.0), f_ref)).map_or(0.0, |r| r.1);
    let (tau, flags) = if radius > 0.0 && best.1 <= DELAY_FAILURE_RESIDUAL * radius {
        (eta_to_tau(best.0), Vec::new())
    } else {
        (tau0, vec![Flag::DelayFallback])
    };
    Ok((trace.with_delay(-tau), tau, flags))
}

fn phase_model(f: f64, theta0: f64, q: f64, f_r: f64) -> f64 {
    theta0 + 2.0 * (2.0 * q * (1.0 - f / f_r)).atan()
}

struct PhaseFit {
    theta0: f64,
    q_loaded: f64,
    f_r: f64,
}

// Levenberg-Marquardt on (theta0, ln Q_l, delta) with f_r = f_r0 (1 + delta).
fn fit_phase(freqs: &[f64], theta: &[f64]) -> Result<PhaseFit> {
    let n = freqs.len();
    // seed f_r at the fastest phase change
    let mut k = 1;
    let mut fastest = 0.0;
    for i in 1..n - 1 {
        let speed = ((theta[i + 1] - theta[i - 1]) / (freqs[i + 1] - freqs[i - 1])).abs();
        if speed > fastest {
            fastest = speed;
            k = i;
        }
    }
    let f_r0 = freqs[k];
    let theta_k = theta[k];
    let crossing = |target: f64, mut range: Box<dyn Iterator<Item = usize>>| -> Option<f64> {
        range.find_map(|i| {
            let (a, b) = (theta[i] - target, theta[i + 1] - target);
            (a.signum() != b.signum()).then(|| freqs[i] + (freqs[i + 1] - freqs[i]) * a / (a - b))
        })
    };
    let lo = crossing(theta_k + PI / 2.0, Box::new((0..k).rev()));
    let hi = crossing(theta_k - PI / 2.0, Box::new(k..n - 1));
    let q0 = match (lo, hi) {
        (Some(l), Some(h)) if h > l => f_r0 / (h - l),
        _ => fastest * f_r0 / 4.0,
    };

    let residuals = |p: &Vector3<f64>| -> Vec<f64> {
        let (q, f_r) = (p[1].exp(), f_r0 * (1.0 + p[2]));
        freqs.iter().zip(theta).map(|(&f, &t)| t - phase_model(f, p[0], q, f_r)).collect()
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut p = Vector3::new(theta_k, q0.ln(), 0.0);
    let mut r = residuals(&p);
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let (q, f_r) = (p[1].exp(), f_r0 * (1.0 + p[2]));
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (i, &f) in freqs.iter().enumerate() {
            let u = 2.0 * q * (1.0 - f / f_r);
            let du = 2.0 / (1.0 + u * u);
            let row = Vector3::new(-1.0, -du * u, -du * 2.0 * q * f * f_r0 / (f_r * f_r));
            jtj += row * row.transpose();
            jtr += row * r[i];
        }
        let mut improved = false;
        for _ in 0..60 {
            let mut damped = jtj;
            for d in 0..3 {
                damped[(d, d)] *= 1.0 + lambda;
            }
            let Some(inv) = damped.try_inverse() else {
                lambda *= 10.0;
                continue;
            };
            let step = -(inv * jtr);
            let trial = p + step;
            let rt = residuals(&trial);
            let ct = cost(&rt);
            if ct.is_finite() && ct <= c {
                let done = step.norm() < 1e-14 * (1.0 + p.norm()) || c - ct <= 1e-16 * c;
                p = trial;
                r = rt;
                c = ct;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                converged = done;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !improved {
            converged = true;
            break;
        }
    }
    if !converged || !c.is_finite() {
        return Err(Error::NonConvergence(format!(
            "phase fit did not converge (cost {c:.3e}, f_r {:.6e}, Q_l {:.3e})",
            f_r0 * (1.0 + p[2]),
            p[1].exp()
        )));
    }
    Ok(PhaseFit { theta0: p[0], q_loaded: p[1].exp(), f_r: f_r0 * (1.0 + p[2]) })
}

/// Full notch fit. See the module documentation for the model.
pub fn fit_notch(trace: &ComplexTrace) -> Result<NotchFitResult> {
    let (corrected, tau, mut flags) = remove_delay(trace)?;
    let circle = fit_circle(&corrected.s21)?;
    let mut theta: Vec<f64> = corrected.s21.iter().map(|z| (z - circle.center).arg()).collect();
    unwrap(&mut theta);
    let phase = fit_phase(&corrected.freqs, &theta)?;
    let (f_lo, f_hi) = (corrected.freqs[0], corrected.freqs[corrected.len() - 1]);
    if !(phase.q_loaded > 0.0 && phase.q_loaded.is_finite()) || !(phase.f_r >= f_lo && phase.f_r <= f_hi) {
        return Err(Error::NonConvergence("no resonance inside the swept band".into()));
    }

    // the off-resonance point sits opposite the resonance on the circle
    let off = circle.center + circle.radius * Complex64::from_polar(1.0, phase.theta0 + PI);
    let amplitude_a = off.norm();
    if !(amplitude_a > 0.0) {
        return Err(Error::DegenerateGeometry("off-resonance point at the origin".into()));
    }
    let center = circle.center / off;
    let radius = circle.radius / amplitude_a;
    let impedance_mismatch_phi0 = (1.0 - center).arg();
    let q_coupling_mag = phase.q_loaded / (2.0 * radius);
    let q_i_inv = 1.0 / phase.q_loaded - impedance_mismatch_phi0.cos() / q_coupling_mag;
    let fit_residual = circle_rms(&corrected.s21, &circle) / amplitude_a;

    if 2.0 * radius < 3.0 * fit_residual {
        flags.push(Flag::LowConfidence);
    }
    if !(q_i_inv > 0.0) {
        flags.push(Flag::UnphysicalFit);
    }
    Ok(NotchFitResult {
        f_r: phase.f_r,
        q_loaded: phase.q_loaded,
        q_coupling_mag,
        impedance_mismatch_phi0,
        q_internal: 1.0 / q_i_inv,
        amplitude_a,
        phase_alpha: off.arg(),
        delay_tau: tau,
        fit_residual,
        flags,
    })
}
