//! Energy-aware slack reclamation for DAG task schedules on DVFS processors.
//!
//! The library covers the full pipeline: workload generation ([`task`]), list
//! scheduling at maximum frequency plus slack-window extraction
//! ([`schedule`]), per-task frequency selection ([`reclaim`]), brute-force
//! cross-checks ([`oracle`]), randomized self-verification ([`verify`]) and
//! factorial energy-savings sweeps ([`experiment`]).
//!
//! The numeric core is generic over the scalar via [`num::Real`]; the aliases
//! below pin the common `f64` instantiations.

pub mod cli;
pub mod experiment;
pub mod num;
pub mod oracle;
pub mod power;
pub mod reclaim;
pub mod rng;
pub mod schedule;
pub mod task;
pub mod verify;

pub type FrequencyLevel = power::FrequencyLevel<f64>;
pub type ProcessorModel = power::ProcessorModel<f64>;
pub type CubicPowerModel = power::CubicPowerModel<f64>;
pub type FrequencyAllocation = reclaim::FrequencyAllocation<f64>;
pub type ReclaimRequest = reclaim::ReclaimRequest<f64>;

pub use reclaim::Algorithm;
pub use schedule::Policy;
pub use task::WorkloadKind;
