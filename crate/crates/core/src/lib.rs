//! Analysis of transmission-line resonators terminated by a reactive device
//! under test.
//!
//! The crate covers the forward problem (mode frequencies, participation and
//! internal quality factor of a loaded line), the inverse problem (load value
//! and loss tangent from measured modes, with or without a reference
//! resonator), uncertainty propagation, and an independent network-level
//! oracle with a notch circle fit to check the closed forms against.

pub mod calibrate;
pub mod circlefit;
pub mod error;
pub mod flags;
pub mod loss;
pub mod netsynth;
pub mod resonance;
pub mod roots;
pub mod stats;
pub mod txline;

pub use calibrate::{
    calibrate_loss, calibrate_reactance, discriminate_parasitics, LossCalibration, ModeMeasurement,
    ParasiticModel, ParasiticReport, ReactanceCalibration,
};
pub use circlefit::{fit_circle, fit_notch, remove_delay, CircleGeometry, NotchFitResult};
pub use error::{Error, Result};
pub use flags::Flag;
pub use loss::{perturbative_limits, qi_forward, tan_delta_single_mode, LossBreakdown, TanDeltaEstimate};
pub use netsynth::{frequency_pull, input_impedance, synth_s21, ComplexTrace, HangerNetwork};
pub use resonance::{
    max_participation_point, participation, phase_parameter, solve_resonance, ResonanceSolution,
};
pub use stats::{
    fit_lognormal, kappa_fit, monte_carlo_uncertainty, single_mode_tand_distribution, KappaFit,
    LogNormalFit, UncertaintyReport,
};
pub use txline::{AttenuationModel, ComplexImpedance, LineSpec, LoadKind, LoadModel, ReactiveElement};
