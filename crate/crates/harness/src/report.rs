use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sweep::SweepPoint;
use crate::HarnessError;

/// Latencies are averaged over consecutive windows of this many
/// submissions, then across windows.
pub const WINDOW_TXS: usize = 1000;

/// Measurements of one submission, in microseconds.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TxSample {
    pub peer_us: Option<u64>,
    pub orderer_us: Option<u64>,
    pub event_us: Option<u64>,
    pub valid: bool,
}

/// Means over one window of submissions, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub txs: usize,
    pub peer_ms: f64,
    pub orderer_ms: f64,
    pub event_ms: f64,
}

pub(crate) struct Counts {
    pub failures: usize,
    pub rides_completed: usize,
    pub duration_us: u64,
    /// Span during which every worker still had rides to advance.
    pub loaded_us: u64,
    pub loaded_valid: usize,
    pub events_emitted: usize,
    pub events_received: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub peer_mean_ms: f64,
    pub orderer_mean_ms: f64,
    pub event_mean_ms: f64,
    /// Valid commits per second while every worker was still loaded.
    /// The drain at the end, where the last rides wait out their remaining
    /// steps one commit at a time, is excluded.
    pub tps: f64,
    /// Valid commits per second over the whole run.
    pub overall_tps: f64,
    pub submitted: usize,
    pub success_count: usize,
    pub failure_count: usize,
    pub rides_completed: usize,
    pub duration_s: f64,
    /// Events from valid transactions times the number of subscriptions.
    pub events_emitted: usize,
    pub events_received: usize,
    pub windows: Vec<Window>,
}

fn mean_ms(values: impl Iterator<Item = u64>) -> f64 {
    let (sum, n) = values.fold((0u128, 0u64), |(s, n), v| (s + v as u128, n + 1));
    if n == 0 {
        0.0
    } else {
        sum as f64 / n as f64 / 1000.0
    }
}

impl LatencyReport {
    pub(crate) fn from_samples(samples: &[TxSample], c: Counts) -> Self {
        let windows: Vec<Window> = samples
            .chunks(WINDOW_TXS)
            .map(|w| Window {
                txs: w.len(),
                peer_ms: mean_ms(w.iter().filter_map(|s| s.peer_us)),
                orderer_ms: mean_ms(w.iter().filter_map(|s| s.orderer_us)),
                event_ms: mean_ms(w.iter().filter_map(|s| s.event_us)),
            })
            .collect();
        let across = |f: fn(&Window) -> f64| {
            if windows.is_empty() {
                0.0
            } else {
                windows.iter().map(f).sum::<f64>() / windows.len() as f64
            }
        };
        let success_count = samples.iter().filter(|s| s.valid).count();
        let duration_s = c.duration_us as f64 / 1e6;
        let rate = |n: usize, us: u64| if us == 0 { 0.0 } else { n as f64 * 1e6 / us as f64 };
        LatencyReport {
            peer_mean_ms: across(|w| w.peer_ms),
            orderer_mean_ms: across(|w| w.orderer_ms),
            event_mean_ms: across(|w| w.event_ms),
            tps: rate(c.loaded_valid, c.loaded_us),
            overall_tps: rate(success_count, c.duration_us),
            submitted: samples.len(),
            success_count,
            failure_count: c.failures,
            rides_completed: c.rides_completed,
            duration_s,
            events_emitted: c.events_emitted,
            events_received: c.events_received,
            windows,
        }
    }

    /// Every submission succeeded and every event was delivered.
    pub fn is_clean(&self) -> bool {
        self.failure_count == 0 && self.events_emitted == self.events_received
    }
}

/// One CSV line of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub axis_value: f64,
    pub peer_ms: f64,
    pub orderer_ms: f64,
    pub event_ms: f64,
    pub tps: f64,
}

impl From<&SweepPoint> for CsvRow {
    fn from(p: &SweepPoint) -> Self {
        CsvRow {
            axis_value: p.axis_value,
            peer_ms: p.report.peer_mean_ms,
            orderer_ms: p.report.orderer_mean_ms,
            event_ms: p.report.event_mean_ms,
            tps: p.report.tps,
        }
    }
}

/// Header row plus one row per point.
pub fn export_csv(points: &[SweepPoint], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    if points.is_empty() {
        return Err(HarnessError::NoReports);
    }
    let mut w = csv::Writer::from_path(path)?;
    for p in points {
        w.serialize(CsvRow::from(p))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
