//! Multi-cycle planning for a human-robot team.
//!
//! The crate learns an individual teammate's task durations and spatial
//! habits across repeated task cycles and re-plans each cycle: a genetic
//! scheduler chooses allocation, ordering and wait steps while a steerable
//! trajectory diffusion policy picks robot motions that trade efficiency
//! against expected proximity.
//!
//! Module map:
//!
//! - [`domain`]: task sets, schedule genomes, trajectories, timeline semantics.
//! - [`spatial`]: per-task Gaussian grid beliefs over proximity cost.
//! - [`temporal`]: Normal-Inverse-Gamma beliefs over human task durations.
//! - [`motion`]: diffusion and library motion policies with best-of-N steering.
//! - [`scheduler`]: genetic optimisation and Monte-Carlo schedule evaluation.
//! - [`fetch`]: the 2D fetch world, scripted human archetypes and deployment.
//! - [`adapt`]: the per-cycle optimise/deploy/update loop and ablation suite.
//! - [`live`]: session protocol frames shared with the live play client.
//! - [`report`]: SVG chart rendering for ablation tables and run logs.

pub mod adapt;
pub mod domain;
pub mod error;
pub mod fetch;
pub mod geometry;
pub mod live;
pub mod motion;
pub mod report;
pub mod scheduler;
pub mod spatial;
pub mod temporal;

pub use error::{Error, Result};

/// RNG used everywhere a seeded, reproducible stream is required.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Build a [`SimRng`] from a seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
