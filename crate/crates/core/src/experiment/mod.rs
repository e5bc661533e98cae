pub mod config;
pub mod run;
pub mod synthetic;

pub use config::{ExperimentConfig, Mode, QRule, KEYS};
pub use run::{feasibility_check, gaussian_psf, lines_demo, run_experiment, ExitStatus, LinesDemo, Prepared, RunReport};
pub use synthetic::{gen_synthetic_1d, gen_synthetic_2d, truth_1d, truth_2d};
