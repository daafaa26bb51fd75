//! Objective metrics and their aggregation.

mod aggregate;
pub mod resample;
mod sisdr;
mod stoi;

pub use aggregate::{
    aggregate, snr_curves, write_curves_csv, write_metrics_csv, write_summary_csv, AggregateRow,
    CurvePoint, MetricRecord, SnrBucket,
};
pub use sisdr::{si_sdr, SI_SDR_CAP_DB};
pub use stoi::stoi;
