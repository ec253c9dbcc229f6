//! Transmission-line and load arithmetic: reactances, load impedances and
//! reflection coefficients.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::Flag;

/// Above this loss tangent the small-loss formulas stop being trustworthy.
pub const TAN_DELTA_VALIDITY_LIMIT: f64 = 0.1;

/// Attenuation of the resonator line, expressed through the internal
/// quality factor of the open-ended line at `f_open`.
///
/// The attenuation constant scales as `alpha(f) = alpha(f_open) * (f / f_open)^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationModel {
    pub q_open_ref: f64,
    pub exponent_s: f64,
}

impl AttenuationModel {
    pub fn new(q_open_ref: f64, exponent_s: f64) -> Result<Self> {
        if !(q_open_ref > 0.0) {
            return Err(Error::Domain(format!("q_open_ref must be positive, got {q_open_ref}")));
        }
        if !exponent_s.is_finite() {
            return Err(Error::Domain("attenuation exponent must be finite".into()));
        }
        Ok(Self { q_open_ref, exponent_s })
    }

    /// A line without any attenuation.
    pub fn lossless() -> Self {
        Self { q_open_ref: f64::INFINITY, exponent_s: 1.0 }
    }

    /// `Q_open^-1` of the equivalent open line with alpha evaluated at `f`.
    pub fn q_open_inv_at(&self, f_over_f_open: f64) -> f64 {
        f_over_f_open.powf(self.exponent_s) / self.q_open_ref
    }

    /// Total attenuation `alpha * l` (nepers) at frequency ratio `f / f_open`,
    /// from `Q_open^-1 = 2 alpha l / pi`.
    pub fn alpha_length(&self, f_over_f_open: f64) -> f64 {
        0.5 * PI * self.q_open_inv_at(f_over_f_open)
    }
}

impl Default for AttenuationModel {
    fn default() -> Self {
        Self::lossless()
    }
}

/// The resonator line: impedance, open-ended fundamental, attenuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub z0: f64,
    pub f_open: f64,
    pub attenuation: AttenuationModel,
}

impl LineSpec {
    pub fn new(z0: f64, f_open: f64, attenuation: AttenuationModel) -> Result<Self> {
        if !(z0 > 0.0 && z0.is_finite()) {
            return Err(Error::Domain(format!("z0 must be positive, got {z0}")));
        }
        if !(f_open > 0.0 && f_open.is_finite()) {
            return Err(Error::Domain(format!("f_open must be positive, got {f_open}")));
        }
        Ok(Self { z0, f_open, attenuation })
    }

    pub fn lossless(z0: f64, f_open: f64) -> Result<Self> {
        Self::new(z0, f_open, AttenuationModel::lossless())
    }

    /// Electrical length `beta * l = pi f / f_open` in radians.
    pub fn electrical_length(&self, f: f64) -> f64 {
        PI * f / self.f_open
    }

    /// `gamma * l = alpha l + j beta l`.
    pub fn propagation(&self, f: f64) -> Complex64 {
        let ratio = f / self.f_open;
        Complex64::new(self.attenuation.alpha_length(ratio), PI * ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    Capacitor,
    Inductor,
    SeriesComposite,
}

impl LoadKind {
    pub fn name(self) -> &'static str {
        match self {
            LoadKind::Capacitor => "capacitor",
            LoadKind::Inductor => "inductor",
            LoadKind::SeriesComposite => "series composite",
        }
    }
}

/// One lumped reactive element, value in farad or henry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactiveElement {
    Capacitor(f64),
    Inductor(f64),
}

impl ReactiveElement {
    pub fn value(self) -> f64 {
        match self {
            ReactiveElement::Capacitor(v) | ReactiveElement::Inductor(v) => v,
        }
    }

    pub fn reactance(self, f: f64) -> f64 {
        match self {
            ReactiveElement::Capacitor(c) => -1.0 / (2.0 * PI * f * c),
            ReactiveElement::Inductor(l) => 2.0 * PI * f * l,
        }
    }
}

/// The device under test: a series chain of reactive elements with one
/// shared loss tangent applied to the net reactance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadModel {
    elements: Vec<ReactiveElement>,
    tan_delta: f64,
}

impl LoadModel {
    pub fn capacitor(c: f64, tan_delta: f64) -> Result<Self> {
        Self::series(vec![ReactiveElement::Capacitor(c)], tan_delta)
    }

    pub fn inductor(l: f64, tan_delta: f64) -> Result<Self> {
        Self::series(vec![ReactiveElement::Inductor(l)], tan_delta)
    }

    pub fn series(elements: Vec<ReactiveElement>, tan_delta: f64) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Domain("a load needs at least one element".into()));
        }
        if let Some(bad) = elements.iter().find(|e| !(e.value() > 0.0 && e.value().is_finite())) {
            return Err(Error::Domain(format!("element values must be positive, got {bad:?}")));
        }
        if !(tan_delta >= 0.0 && tan_delta.is_finite()) {
            return Err(Error::Domain(format!("tan_delta must be non-negative, got {tan_delta}")));
        }
        Ok(Self { elements, tan_delta })
    }

    /// Single-element load of the given kind. Composite kinds are rejected.
    pub fn of_kind(kind: LoadKind, value: f64, tan_delta: f64) -> Result<Self> {
        match kind {
            LoadKind::Capacitor => Self::capacitor(value, tan_delta),
            LoadKind::Inductor => Self::inductor(value, tan_delta),
            LoadKind::SeriesComposite => {
                Err(Error::Domain("a composite load needs an element list".into()))
            }
        }
    }

    pub fn kind(&self) -> LoadKind {
        match self.elements.as_slice() {
            [ReactiveElement::Capacitor(_)] => LoadKind::Capacitor,
            [ReactiveElement::Inductor(_)] => LoadKind::Inductor,
            _ => LoadKind::SeriesComposite,
        }
    }

    /// Element value for single-element loads.
    pub fn value(&self) -> Option<f64> {
        match self.elements.as_slice() {
            [e] => Some(e.value()),
            _ => None,
        }
    }

    pub fn elements(&self) -> &[ReactiveElement] {
        &self.elements
    }

    pub fn tan_delta(&self) -> f64 {
        self.tan_delta
    }

    pub fn with_tan_delta(&self, tan_delta: f64) -> Result<Self> {
        Self::series(self.elements.clone(), tan_delta)
    }

    pub fn validity_flags(&self) -> Vec<Flag> {
        if self.tan_delta > TAN_DELTA_VALIDITY_LIMIT {
            vec![Flag::LossTangentOutOfDomain]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexImpedance {
    pub re: f64,
    pub im: f64,
}

impl ComplexImpedance {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn norm(self) -> f64 {
        self.to_complex().norm()
    }
}

impl From<Complex64> for ComplexImpedance {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

fn check_frequency(f: f64) -> Result<()> {
    if f > 0.0 && !f.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain(format!("frequency must be positive, got {f}")))
    }
}

/// Net reactance of the load at `f` (negative for capacitors).
pub fn reactance(load: &LoadModel, f: f64) -> Result<f64> {
    check_frequency(f)?;
    Ok(load.elements.iter().map(|e| e.reactance(f)).sum())
}

/// `Z_L = r + jX` with `r = |X| tan δ`.
pub fn load_impedance(load: &LoadModel, f: f64) -> Result<ComplexImpedance> {
    let x = reactance(load, f)?;
    if load.tan_delta > TAN_DELTA_VALIDITY_LIMIT {
        log::warn!(
            "tan_delta = {} is outside the small-loss regime (> {})",
            load.tan_delta,
            TAN_DELTA_VALIDITY_LIMIT
        );
    }
    Ok(ComplexImpedance::new(x.abs() * load.tan_delta, x))
}

/// `Gamma = (Z_L - Z0) / (Z_L + Z0)`.
pub fn reflection_coefficient(z_load: ComplexImpedance, z0: f64) -> Result<Complex64> {
    let zl = z_load.to_complex();
    let den = zl + z0;
    if den.norm() == 0.0 {
        return Err(Error::Singular("Z_L = -Z0 has no reflection coefficient".into()));
    }
    Ok((zl - z0) / den)
}

/// Phase of the reflection off a purely reactive load, on the branch with
/// `tan(theta / 2) = Z0 / X`: `theta` lies in `(-pi, 0)` for capacitive and
/// `(0, pi)` for inductive reactance. `x = 0` returns the short-circuit
/// value `pi`.
pub fn reflection_phase(x: f64, z0: f64) -> Result<f64> {
    if !(z0 > 0.0) {
        return Err(Error::Domain(format!("z0 must be positive, got {z0}")));
    }
    if x == 0.0 {
        return Ok(PI);
    }
    Ok(2.0 * (z0 / x).atan())
}

/// First-order reflection magnitude `1 - |sin theta| tan δ` for a load with
/// reactance `x` and series resistance `|x| tan δ`.
pub fn reflection_magnitude(x: f64, z0: f64, tan_delta: f64) -> Result<f64> {
    if !(tan_delta >= 0.0) {
        return Err(Error::Domain(format!("tan_delta must be non-negative, got {tan_delta}")));
    }
    let theta = reflection_phase(x, z0)?;
    Ok((1.0 - theta.sin().abs() * tan_delta).max(0.0))
}
