//! Internal quality factor of a loaded line and single-mode loss-tangent
//! extraction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;
use crate::resonance::participation;
use crate::txline::AttenuationModel;

/// `Q_i^-1 = Q_res^-1 + Q_dut^-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub q_i_inv: f64,
    pub q_dut_inv: f64,
    pub q_res_inv: f64,
}

impl LossBreakdown {
    pub fn q_i(&self) -> f64 {
        1.0 / self.q_i_inv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanDeltaEstimate {
    pub tan_delta: f64,
    pub participation: f64,
    /// Set when the estimate is negative, which happens when the reference
    /// `Q_open` is lower than the loaded resonator can account for.
    pub negative: bool,
}

/// Side-by-side of the closed form and its first-order expansion about the
/// nearest `m pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeComparison {
    pub m: u32,
    pub p_exact: f64,
    pub p_perturbative: f64,
    pub q_i_inv_exact: f64,
    pub q_i_inv_perturbative: f64,
    /// `|Q_pert^-1 - Q_exact^-1| / Q_exact^-1`.
    pub relative_deviation: f64,
}

// 2 pi Q_open^-1 (phi / 2pi)^s: the line loss term with alpha taken at f_r.
fn line_loss_term(phi: f64, atten: &AttenuationModel) -> f64 {
    2.0 * PI * atten.q_open_inv_at(phi / (2.0 * PI))
}

/// Internal loss of the loaded resonator at phase parameter `phi`.
pub fn qi_forward(phi: f64, tan_delta: f64, atten: &AttenuationModel) -> Result<LossBreakdown> {
    if !(phi > 0.0) {
        return Err(Error::Domain(format!("phi must be positive, got {phi}")));
    }
    if !(tan_delta >= 0.0) {
        return Err(Error::Domain(format!("tan_delta must be non-negative, got {tan_delta}")));
    }
    let s = phi.sin().abs();
    let den = phi + s;
    let q_dut_inv = 2.0 * s * tan_delta / den;
    let q_res_inv = line_loss_term(phi, atten) / den;
    Ok(LossBreakdown { q_i_inv: q_dut_inv + q_res_inv, q_dut_inv, q_res_inv })
}

/// Loss tangent from one mode's `Q_i` and a reference `Q_open`.
///
/// With `s = 0` this is `tan δ = Q_i^-1 / 2p - (1 - p)/2p * (2 pi / phi) Q_open^-1`.
/// Negative values are returned as they are, with `negative` set.
pub fn tan_delta_single_mode(q_i: f64, q_open_ref: f64, phi: f64, s: f64) -> Result<TanDeltaEstimate> {
    if !(q_i > 0.0 && q_open_ref > 0.0) {
        return Err(Error::Domain("quality factors must be positive".into()));
    }
    if !(phi > 0.0) {
        return Err(Error::Domain(format!("phi must be positive, got {phi}")));
    }
    let sin_abs = phi.sin().abs();
    let p = participation(phi);
    // sin(2 pi k) is only zero up to rounding
    if p < 1e-14 {
        return Err(Error::UndefinedExtraction);
    }
    let atten = AttenuationModel { q_open_ref, exponent_s: s };
    let tan_delta = ((phi + sin_abs) / q_i - line_loss_term(phi, &atten)) / (2.0 * sin_abs);
    Ok(TanDeltaEstimate { tan_delta, participation: p, negative: tan_delta < 0.0 })
}

impl TanDeltaEstimate {
    pub fn flags(&self) -> Vec<Flag> {
        if self.negative {
            vec![Flag::NegativeLossTangent]
        } else {
            Vec::new()
        }
    }
}

/// Compares the closed-form `Q_i^-1` with its perturbative counterpart,
/// where participation is linearized as `p ≈ |phi - m pi| / phi` about the
/// nearest unloaded mode `m pi` (`m >= 1`).
pub fn perturbative_limits(
    phi: f64,
    tan_delta: f64,
    atten: &AttenuationModel,
) -> Result<PerturbativeComparison> {
    let exact = qi_forward(phi, tan_delta, atten)?;
    let m = (phi / PI).round().max(1.0);
    let p_pert = (phi - m * PI).abs() / phi;
    let q_pert =
        2.0 * p_pert * tan_delta + (1.0 - p_pert) * (2.0 * PI / phi) * atten.q_open_inv_at(phi / (2.0 * PI));
    let relative_deviation = if exact.q_i_inv > 0.0 {
        (q_pert - exact.q_i_inv).abs() / exact.q_i_inv
    } else {
        (q_pert - exact.q_i_inv).abs()
    };
    Ok(PerturbativeComparison {
        m: m as u32,
        p_exact: participation(phi),
        p_perturbative: p_pert,
        q_i_inv_exact: exact.q_i_inv,
        q_i_inv_perturbative: q_pert,
        relative_deviation,
    })
}
