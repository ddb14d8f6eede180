//! Point-wise aggregation of evaluation curves across runs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::train::MetricLog;
use crate::error::{Error, Result};
use crate::stats;

/// Normal-approximation 95% quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub env_step: usize,
    pub mean_return: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_runs: usize,
}

/// `1.96 · s / √n` with the sample standard deviation `s`; zero for one value.
pub fn ci_halfwidth(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    Z_95 * stats::sample_std(values) / (values.len() as f64).sqrt()
}

/// Mean of the runs' mean evaluation return at every logged step, with a
/// 95% band. Steps missing from some runs aggregate over the runs that have them.
pub fn aggregate(logs: &[MetricLog]) -> Vec<CurvePoint> {
    let mut by_step: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for log in logs {
        for p in &log.points {
            by_step.entry(p.env_step).or_default().push(p.mean_eval_return);
        }
    }
    by_step
        .into_iter()
        .map(|(env_step, values)| {
            let mean = stats::mean(&values);
            let half = ci_halfwidth(&values);
            CurvePoint {
                env_step,
                mean_return: mean,
                ci_low: mean - half,
                ci_high: mean + half,
                n_runs: values.len(),
            }
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<CurvePoint>, _>>()?)
}
