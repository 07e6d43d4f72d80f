//! Load generation against a simulated network.
//!
//! Workers send ride transactions at intervals drawn from a
//! [`TrafficProfile`]; [`run_load`] drives every ride to completion and
//! summarizes peer, orderer and event latency plus throughput in a
//! [`LatencyReport`]. [`run_sweep`] repeats that across one varying
//! parameter and [`export_csv`] writes the results.

mod load;
mod profile;
mod report;
mod sweep;

pub use load::{run_load, WorkloadSpec, TXS_PER_RIDE};
pub use profile::{generate_intervals, IntervalSampler, TrafficProfile};
pub use report::{export_csv, read_csv, CsvRow, LatencyReport, Window, WINDOW_TXS};
pub use sweep::{preset, run_sweep, Sweep, SweepAxis, SweepPoint, PRESETS};

use hailchain_netsim::NetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid traffic profile: {0}")]
    InvalidProfile(String),
    #[error("network stopped making progress: {done} of {expected} transactions committed")]
    HarnessTimeout { done: usize, expected: usize },
    #[error("nothing to export")]
    NoReports,
    #[error("unknown sweep preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
