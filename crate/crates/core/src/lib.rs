//! Next-best-view search for an object on a hemispherical viewpoint grid.
//!
//! The detector's confidence over viewpoints is modelled as a polynomial
//! field with unknown coefficients. A particle filter tracks those
//! coefficients from noisy readings, and a one-step planner chooses the next
//! neighbouring viewpoint under one of three objectives (DCEE, MPC or
//! predictive entropy).

pub mod domain;
pub mod error;
pub mod estimator;
pub mod export;
pub mod harness;
pub mod identify;
pub mod planner;
pub mod reward;
pub mod scenario;
pub mod sensor;

pub use domain::{Action, GridDomain, Position, Viewpoint};
pub use error::{Error, Result};
pub use estimator::{LikelihoodSpec, ParticleEnsemble, PriorSpec};
pub use harness::{run_batch, run_episode, BatchReport, RunMetrics, Termination};
pub use planner::{PlannerKind, ScoredAction};
pub use reward::{BasisKind, RewardModel, ThetaVector};
pub use scenario::{Scenario, ScenarioConfig};
pub use sensor::{Measurement, NoiseModel, OcclusionModel};
