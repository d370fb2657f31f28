//! Embedded deep linear networks (EDLNs): model, synthetic multi-view data, training under
//! SGD / gradient flow / weight decay / explicit entropic regularization, closed-form entropic
//! minimizers, representation-alignment metrics, and seeded experiment scenarios.

pub mod data;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod network;
pub mod metrics;
pub mod objective;
pub mod theory;
pub mod trainer;

pub use data::{make_data_model, DataModel, DataSpec, PairedBatch, ViewMoments, ViewSpec};
pub use error::{EdlnError, Result};
pub use experiments::{run_scenario, sweep, ScenarioConfig, ScenarioKind, ScenarioResult};
pub use linalg::{Mat, Vector};
pub use network::{EdlnNetwork, HiddenConvention, SymmetryGenerator};
pub use objective::{ExpectationMode, GradientMoments, Objective};
pub use theory::{Architecture, BalanceReport, ClosedFormSolution, InterfaceBalance};
pub use metrics::{AlignmentMatrix, AlignmentReport, LayerSet, Probe, SharpnessEstimate};
pub use trainer::{train, Algorithm, TrainConfig, TrainTrace};
