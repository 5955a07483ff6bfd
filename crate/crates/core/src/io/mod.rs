//! File formats shared by the command-line tool: campaign input, the JSON
//! uncertainty report and CSV tables.

mod campaign;
mod report;
mod tables;

pub use campaign::{CampaignFile, GeometrySpec, UncertaintySpec};
pub use report::{
    run_fit, FitOptions, FitOutcome, FitSummary, LegacyComparison, MetricsSummary, Provenance,
    UncertaintyReport, Units, REPORT_SCHEMA_VERSION,
};
pub use tables::{
    grid_area_mean, prediction_grid, rake_mc_rows, read_csv, scan_rows, write_csv, GridRow, RakeMcRow,
    ScanRow, DEFAULT_N_R, DEFAULT_N_THETA,
};
