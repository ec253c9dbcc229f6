use serde::{Deserialize, Serialize};
use std::fmt;

/// Non-fatal conditions attached to a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// tan δ above 0.1, outside the small-loss regime.
    LossTangentOutOfDomain,
    /// Inductive n = 0 mode below the minimum accessible frequency.
    ExperimentallyInaccessible,
    NegativeLossTangent,
    /// The linearized uncertainty formula is near its pole.
    DivergentRegime,
    /// Monte Carlo spread exceeds the first-order estimate.
    LinearizationBreakdown,
    DegenerateSamples,
    /// The branch has no interior maximum; only a supremum is reported.
    NonAttainedMaximum,
    /// Delay search failed; the phase-slope estimate was used instead.
    DelayFallback,
    LowConfidence,
    /// As many unknowns as equations, so residuals carry no information.
    ExactlyDetermined,
    IllConditioned,
    /// A fitted series element came out with a negative value.
    UnphysicalFit,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Flag::LossTangentOutOfDomain => "loss_tangent_out_of_domain",
            Flag::ExperimentallyInaccessible => "experimentally_inaccessible",
            Flag::NegativeLossTangent => "negative_loss_tangent",
            Flag::DivergentRegime => "divergent_regime",
            Flag::LinearizationBreakdown => "linearization_breakdown",
            Flag::DegenerateSamples => "degenerate_samples",
            Flag::NonAttainedMaximum => "non_attained_maximum",
            Flag::DelayFallback => "delay_fallback",
            Flag::LowConfidence => "low_confidence",
            Flag::ExactlyDetermined => "exactly_determined",
            Flag::IllConditioned => "ill_conditioned",
            Flag::UnphysicalFit => "unphysical_fit",
        };
        f.write_str(s)
    }
}
