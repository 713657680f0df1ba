//! Hierarchical log-Gaussian Cox process for marked spatial point patterns,
//! built for basketball shot charts.
//!
//! Each game's made and missed shots are independent Poisson processes whose
//! log intensities are a shared surface plus covariate-driven deviations,
//! all expanded in a truncated eigenbasis of a Gaussian-type kernel.
//! Inference is Metropolis-within-Gibbs with Langevin proposals.

pub mod basis;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod likelihood;
pub mod sampler;
pub mod simulator;
pub mod summaries;

pub use basis::{Basis, DomainMap, KernelParams, Truncation};
pub use data::{Dataset, Encoding, GameRecord, GridSpec, Outcome, ParamVector, ShotEvent};
pub use error::{Error, Result};
pub use geometry::{Point, Region};
pub use likelihood::{Block, Posterior};
pub use sampler::{run_chain, PosteriorSamples, SamplerConfig, StepRule};
pub use simulator::{synthetic_scenario, Scenario, Truth};
pub use summaries::{MapKind, SurfaceMap};
