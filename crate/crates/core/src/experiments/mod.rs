pub mod config;
pub mod metrics;
pub mod phantom;
pub mod sweep;

pub use config::{ExperimentConfig, Overrides, ProxKind, SolverKind, Task};
pub use metrics::{cost_accuracy, psnr};
pub use phantom::gen_foam_phantom;
pub use sweep::{run_mode, run_sweep, MetricsRow, ModeSweep};
