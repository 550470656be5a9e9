//! Active flow control with shared-policy multi-agent PPO.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops over
// parallel arrays read better than zipped iterators in the numerics.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod agent;
pub mod analysis;
pub mod envs;
pub mod orchestrator;
pub mod reward;
pub mod scalar;
pub mod solver2d;

pub use scalar::Real;

/// Double-precision instantiations used by the environments and the driver.
pub type Grid64 = solver2d::Grid<f64>;
pub type FlowField64 = solver2d::FlowField<f64>;
pub type Solver64 = solver2d::Solver<f64>;
pub type SolverConfig64 = solver2d::SolverConfig<f64>;
pub type BodyGeometry64 = solver2d::BodyGeometry<f64>;
pub type RewardConfig64 = reward::RewardConfig<f64>;
pub type ForceSample64 = reward::ForceSample<f64>;
pub type BaselineStats64 = reward::BaselineStats<f64>;
pub type PpoConfig64 = agent::PpoConfig<f64>;
pub type PpoAgent64 = agent::PpoAgent<f64>;
pub type Policy64 = agent::Policy<f64>;
pub type Trajectory64 = agent::Trajectory<f64>;
pub type TimeSeries64 = analysis::TimeSeries<f64>;
pub type AeroSummary64 = analysis::AeroSummary<f64>;
pub type OscillatorLatticeConfig64 = envs::OscillatorLatticeConfig<f64>;

/// Single-precision solver types, for memory-bound experiments.
pub type FlowField32 = solver2d::FlowField<f32>;
pub type Solver32 = solver2d::Solver<f32>;
