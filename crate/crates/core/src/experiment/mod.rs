//! Configuration, the three training pipelines, metrics and output files.

pub mod config;
pub mod metrics;
pub mod output;
pub mod runner;

pub use config::{DatasetKind, FidelityName, ModelKindName, Scheme, SimConfig};
pub use metrics::{aggregate_metrics, parse_records_csv, records_to_csv, MetricsRecord, SummaryRow, CSV_HEADER};
pub use runner::{prepare, run, run_ideal, run_multimodel, run_realization, run_scheme, run_seqnmodel, Prepared, RunOutput};
