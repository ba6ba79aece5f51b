//! Multi-period and multi-resolution discriminators with hinge objectives.

mod discriminators;
mod hinge;

pub use discriminators::{
    DiscriminatorOutput, Discriminators, MultiPeriodDiscriminator, MultiResolutionDiscriminator,
    PeriodDiscriminator, ResolutionDiscriminator, scores,
};
pub use hinge::{feature_matching_loss, hinge_d_loss, hinge_g_loss};
