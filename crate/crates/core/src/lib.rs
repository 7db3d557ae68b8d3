pub mod analysis;
pub mod config;
pub mod error;
pub mod expr;
pub mod grid;
pub mod jumpmodel;
pub mod kernels;
pub mod local;
pub mod nonlocal;
pub mod output;
pub mod profile;
pub mod quadrature;
pub mod runner;
pub mod timestep;

pub use analysis::{
    diffusivity, focus, limit_study, model_diffusivity, predict_steady, sign_changes, strat_comparison, strat_equivalence,
    tail_concentration_index, um_rela_residual, DiffusivityMatrix, FocusingStudy, KernelNd, Regime, SteadyPrediction,
};
pub use config::{preset, preset_names, Command, ExperimentConfig};
pub use error::{Error, Result};
pub use expr::Expr;
pub use grid::{Grid1D, Interval};
pub use jumpmodel::{food_metric_table, mean_jump_length, total_jump_rate, FoodMetric, JumpRateModel, Variant};
pub use kernels::{DispersalKernel, KernelKind};
pub use profile::{Profile, ProfileKind};
pub use local::{assemble_local, correction_vector, flux_form, LocalDiffusionSpec, LocalOperator};
pub use nonlocal::{assemble, solve_steady, NonlocalOperator};
pub use runner::{run, run_config, Report, RunOptions};
pub use timestep::{evolve, step, Generator, Scheme, Trajectory};
