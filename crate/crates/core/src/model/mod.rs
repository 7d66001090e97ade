//! Called-strike models: index maps, design rows, priors and the log posterior.

mod index;
mod instance;
mod spec;

pub use index::{Block, BlockRange, Coordinate, Factor, FactorLevels, IndexMap};
pub use instance::{build_instance, Baselines, CompiledRow, Dataset, ModelInstance, PitchLevels};
pub use spec::{count_parameters, ModelId, ModelSpec, Tau2, VarianceBlock};
