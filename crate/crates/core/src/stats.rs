//! Uncertainty propagation, Monte Carlo checks of the first-order formulas,
//! log-normal reference statistics and the parallel-plate dielectric fit.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::loss::{qi_forward, tan_delta_single_mode};
use crate::resonance::{participation, reactance_from_frequencies, value_from_reactance};
use crate::txline::{AttenuationModel, LoadKind};

/// Vacuum permittivity in F/m.
pub const EPSILON_0: f64 = 8.8541878128e-12;

/// Capacitances in fF of three parallel-plate devices: edge-corrected
/// analytic model, finite-element simulation, and measurement. The small
/// analytic/simulated gap is why fringing is left out of [`kappa_fit`].
pub const FRINGING_REFERENCE: [(&str, f64, f64, f64); 3] = [
    ("A", 399.0, 400.0, 388.0),
    ("B", 367.0, 370.0, 406.0),
    ("C", 336.0, 339.0, 354.0),
];

/// Relative deviation of the two sigmas above which the first-order
/// formula is reported as broken down.
pub const LINEARIZATION_TOLERANCE: f64 = 0.1;

/// `|Q_open/Q_i - (1 - p)|` below which the loss-tangent uncertainty is
/// treated as divergent.
pub const DIVERGENCE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub analytic_relative_sigma: f64,
    pub monte_carlo_relative_sigma: f64,
    pub n_samples: usize,
    /// Samples whose extraction failed, for example by leaving the branch.
    pub n_rejected: usize,
    pub seed: u64,
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanDeltaSigma {
    pub relative_sigma: f64,
    /// `Q_open/Q_i - (1 - p)`.
    pub denominator: f64,
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
    pub flags: Vec<Flag>,
}

impl LogNormalFit {
    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanDeltaDistribution {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// `q75 - q25`.
    pub iqr: f64,
    pub fraction_negative: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPoint {
    /// m^2
    pub area: f64,
    /// m
    pub thickness: f64,
    /// F
    pub capacitance: f64,
    /// Relative area uncertainty.
    pub area_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub kappa: f64,
    pub sigma_kappa: f64,
    pub points: Vec<KappaPoint>,
    pub reduced_chi2: Option<f64>,
}

/// Which input of the extraction chain is noisy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case")]
pub enum UncertaintyModel {
    /// Normal noise on `f_open`, propagated into the load value through the
    /// inverted resonance condition at fixed `f_r`.
    FOpen { kind: LoadKind, mode_n: u32, f_r: f64, f_open: f64, z0: f64 },
    /// Log-normal noise on `Q_open`, propagated into `tan δ` through the
    /// single-mode extraction at fixed `Q_i`.
    QOpen { phi: f64, tan_delta: f64, q_open: f64, exponent_s: f64 },
}

/// `sigma_value / value ≈ (1 - p)/p * sigma_f_open / f_open`.
pub fn reactance_value_uncertainty(p: f64, rel_sigma_f_open: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::DivergentUncertainty("participation is zero".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("participation must lie in (0, 1), got {p}")));
    }
    Ok((1.0 - p) / p * rel_sigma_f_open)
}

/// `sigma_tanδ / tanδ ≈ (1 - p) / (Q_open/Q_i - (1 - p)) * sigma_Q_open / Q_open`.
///
/// The magnitude is returned; a denominator that is negative or within
/// [`DIVERGENCE_MARGIN`] of zero marks the result as divergent.
pub fn tan_delta_uncertainty(p: f64, q_open: f64, q_i: f64, rel_sigma_q_open: f64) -> Result<TanDeltaSigma> {
    scaled_tan_delta_uncertainty(1.0 - p, q_open, q_i, rel_sigma_q_open)
}

fn scaled_tan_delta_uncertainty(g: f64, q_open: f64, q_i: f64, rel: f64) -> Result<TanDeltaSigma> {
    if !(q_open > 0.0 && q_i > 0.0) {
        return Err(Error::Domain("quality factors must be positive".into()));
    }
    let denominator = q_open / q_i - g;
    if denominator == 0.0 {
        return Err(Error::DivergentUncertainty("Q_open / Q_i equals 1 - p".into()));
    }
    Ok(TanDeltaSigma {
        relative_sigma: (g / denominator * rel).abs(),
        denominator,
        divergent: denominator < DIVERGENCE_MARGIN,
    })
}

/// Per-sample generator: one ChaCha stream per sample index, so results do
/// not depend on scheduling.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Standard normal deviate for sample `index`.
pub fn normal_deviate(seed: u64, index: u64) -> f64 {
    StandardNormal.sample(&mut sample_rng(seed, index))
}

/// Mean-preserving log-normal multiplier with relative sigma `rel_sigma`.
pub fn lognormal_factor(rel_sigma: f64, z: f64) -> f64 {
    let s = (1.0 + rel_sigma * rel_sigma).ln().sqrt();
    (s * z - 0.5 * s * s).exp()
}

/// `n` log-normal samples with the given mean and relative sigma.
pub fn lognormal_ensemble(mean: f64, rel_sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| mean * lognormal_factor(rel_sigma, normal_deviate(seed, i)))
        .collect()
}

/// Empirical relative sigma of the extracted quantity under noise of
/// relative size `rel_sigma` on the chosen input, next to the first-order
/// value.
pub fn monte_carlo_uncertainty(
    model: &UncertaintyModel,
    rel_sigma: f64,
    n_samples: usize,
    seed: u64,
) -> Result<UncertaintyReport> {
    if n_samples < 1000 {
        return Err(Error::InsufficientData { needed: 1000, got: n_samples });
    }
    if !(rel_sigma >= 0.0) {
        return Err(Error::Domain("rel_sigma must be non-negative".into()));
    }
    let mut flags = Vec::new();
    let (nominal, analytic, draw): (f64, f64, Box<dyn Fn(f64) -> Option<f64> + Sync>) = match *model {
        UncertaintyModel::FOpen { kind, mode_n, f_r, f_open, z0 } => {
            if kind == LoadKind::SeriesComposite {
                return Err(Error::Domain("pure load kind required".into()));
            }
            let extract = move |fo: f64| {
                reactance_from_frequencies(f_r, fo, mode_n, z0)
                    .ok()
                    .map(|x| value_from_reactance(kind, x, f_r))
            };
            let nominal = extract(f_open)
                .ok_or_else(|| Error::Domain("nominal point is outside the mode branch".into()))?;
            let p = participation(2.0 * PI * f_r / f_open);
            let analytic = reactance_value_uncertainty(p, rel_sigma)?;
            let draw = move |z: f64| {
                let v = extract(f_open * (1.0 + rel_sigma * z))?;
                // a sample that jumped to the other kind is a failed extraction
                (v.signum() == nominal.signum()).then_some(v)
            };
            (nominal, analytic, Box::new(draw))
        }
        UncertaintyModel::QOpen { phi, tan_delta, q_open, exponent_s } => {
            let atten = AttenuationModel::new(q_open, exponent_s)?;
            let q_i = qi_forward(phi, tan_delta, &atten)?.q_i();
            let p = participation(phi);
            // the line term scales as (phi/2pi)^s relative to the reference
            let g = (1.0 - p) * (phi / (2.0 * PI)).powf(exponent_s - 1.0);
            let sigma = scaled_tan_delta_uncertainty(g, q_open, q_i, rel_sigma)?;
            if sigma.divergent {
                flags.push(Flag::DivergentRegime);
            }
            let draw = move |z: f64| {
                let q = q_open * lognormal_factor(rel_sigma, z);
                tan_delta_single_mode(q_i, q, phi, exponent_s).ok().map(|e| e.tan_delta)
            };
            (tan_delta, sigma.relative_sigma, Box::new(draw))
        }
    };

    let samples: Vec<Option<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| draw(normal_deviate(seed, i)))
        .collect();
    let accepted: Vec<f64> = samples.iter().flatten().copied().collect();
    let n_rejected = n_samples - accepted.len();
    if accepted.len() < 2 {
        return Err(Error::NonConvergence("every Monte Carlo sample failed".into()));
    }
    if n_rejected > 0 {
        flags.push(Flag::DegenerateSamples);
    }
    let mean = accepted.iter().sum::<f64>() / accepted.len() as f64;
    let var = accepted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (accepted.len() - 1) as f64;
    let monte_carlo_relative_sigma = var.sqrt() / nominal.abs();

    let tol = LINEARIZATION_TOLERANCE * analytic;
    if (monte_carlo_relative_sigma - analytic).abs() > tol && analytic > 0.0 {
        flags.push(Flag::LinearizationBreakdown);
    }
    Ok(UncertaintyReport {
        analytic_relative_sigma: analytic,
        monte_carlo_relative_sigma,
        n_samples,
        n_rejected,
        seed,
        flags,
    })
}

/// Maximum-likelihood log-normal fit.
pub fn fit_lognormal(samples: &[f64]) -> Result<LogNormalFit> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: samples.len() });
    }
    if let Some(bad) = samples.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Domain(format!("log-normal samples must be positive, got {bad}")));
    }
    let n = samples.len() as f64;
    let mu = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    let sigma = (samples.iter().map(|x| (x.ln() - mu).powi(2)).sum::<f64>() / n).sqrt();
    let flags = if sigma == 0.0 { vec![Flag::DegenerateSamples] } else { Vec::new() };
    Ok(LogNormalFit { mu, sigma, n: samples.len(), flags })
}

// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pairs one measured `Q_i` with every reference `Q_open` sample.
pub fn single_mode_tand_distribution(
    q_i: f64,
    phi: f64,
    q_open_samples: &[f64],
    s: f64,
) -> Result<TanDeltaDistribution> {
    if q_open_samples.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: q_open_samples.len() });
    }
    let mut values = q_open_samples
        .iter()
        .map(|&q| tan_delta_single_mode(q_i, q, phi, s).map(|e| e.tan_delta))
        .collect::<Result<Vec<_>>>()?;
    values.sort_by(f64::total_cmp);
    let negative = values.iter().filter(|&&v| v < 0.0).count();
    let (q25, q75) = (quantile(&values, 0.25), quantile(&values, 0.75));
    Ok(TanDeltaDistribution {
        median: quantile(&values, 0.5),
        q25,
        q75,
        iqr: q75 - q25,
        fraction_negative: negative as f64 / values.len() as f64,
        n: values.len(),
    })
}

/// Weighted fit of `C = kappa * eps0 * A / d` through the origin, each
/// point weighted by `1 / (area_sigma * C)^2`.
///
/// With more than one point the slope error is scaled by the reduced
/// chi-square of the fit.
pub fn kappa_fit(points: &[KappaPoint]) -> Result<KappaFit> {
    if points.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    for p in points {
        if !(p.area > 0.0 && p.thickness > 0.0 && p.capacitance > 0.0 && p.area_sigma > 0.0) {
            return Err(Error::Domain("areas, thicknesses, capacitances and sigmas must be positive".into()));
        }
    }
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for p in points {
        let x = EPSILON_0 * p.area / p.thickness;
        let w = (p.area_sigma * p.capacitance).powi(-2);
        swxx += w * x * x;
        swxy += w * x * p.capacitance;
    }
    let kappa = swxy / swxx;
    let (sigma_kappa, reduced_chi2) = if points.len() > 1 {
        let chi2: f64 = points
            .iter()
            .map(|p| {
                let x = EPSILON_0 * p.area / p.thickness;
                ((p.capacitance - kappa * x) / (p.area_sigma * p.capacitance)).powi(2)
            })
            .sum();
        let red = chi2 / (points.len() - 1) as f64;
        ((red / swxx).sqrt(), Some(red))
    } else {
        ((1.0 / swxx).sqrt(), None)
    };
    Ok(KappaFit { kappa, sigma_kappa, points: points.to_vec(), reduced_chi2 })
}
