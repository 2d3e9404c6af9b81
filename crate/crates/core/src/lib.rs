//! Detecting tacit collusion from observed prices.
//!
//! A two-firm linear-demand market is simulated under competitive
//! (approximate Nash) or collusive (joint-revenue maximizing) behaviour.
//! Each firm's parameters are then recovered by an inverse variational
//! inequality LP whose residuals measure how far each observation is from
//! an equilibrium, and a Lilliefors-type test decides whether those
//! residuals look exponential (competing) or not (colluding).

pub mod harness;
pub mod inverse;
pub mod io;
pub mod lilliefors;
pub mod lp;
pub mod market;
pub mod sim;

pub use harness::{run_experiment, ExperimentConfig, ExperimentRow, EstimatorSettings};
pub use inverse::{estimate, EstimateError, EstimationResult, EstimatorConfig};
pub use io::IoError;
pub use lilliefors::{decide, Decision, ResidualSample, TestError, TestReport, ThresholdTable};
pub use lp::{LinearProgram, LpError, LpSolution};
pub use market::{Agent, MarketConfig, NoiseScope, Observation, PricePair, PrivateInfo};
pub use sim::{generate_dataset, Dataset, Scenario, SimError};
