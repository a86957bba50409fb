//! Dataset and result files, experiment driver and memory estimate.

pub mod experiment;
pub mod io;
pub mod memory;

pub use experiment::{run_experiment, run_single, Algorithm, DataSource, ExperimentConfig, ReportRow, Sweep};
pub use io::{load_dataset, save_dataset, save_result, DatasetFormat, OutputFormat};
pub use memory::{estimate_worst_case_bytes, EntrySize};
