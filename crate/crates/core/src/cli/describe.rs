//! Per-asset summary statistics of a return panel.

use serde::Serialize;

use crate::cli::CliError;
use crate::linalg::pairwise_sum;
use crate::model::ReturnPanel;

const MIN_OBS: usize = 8;

/// Summary of one return series.
///
/// Skewness and kurtosis use population moments (no small-sample correction);
/// kurtosis is the raw fourth standardised moment, about 3 for Gaussian data.
/// `std` is the sample standard deviation with divisor `T - 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssetSummary {
    pub asset: String,
    pub min: f64,
    pub max: f64,
    pub mean_x1000: f64,
    pub std: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub q01: f64,
    pub jarque_bera: f64,
}

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman and Fan type 7).
pub fn quantile_type7(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(name: &str, xs: &[f64]) -> Result<AssetSummary, CliError> {
    let n = xs.len();
    if n < MIN_OBS {
        return Err(CliError::InsufficientData(format!(
            "'{name}' has {n} observations, need at least {MIN_OBS}"
        )));
    }
    let nf = n as f64;
    let mean = pairwise_sum(xs) / nf;
    let central =
        |k: i32| pairwise_sum(&xs.iter().map(|x| (x - mean).powi(k)).collect::<Vec<_>>()) / nf;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    if !(m2 > 0.0) {
        return Err(CliError::InsufficientData(format!(
            "'{name}' has zero variance"
        )));
    }
    let skewness = m3 / m2.powf(1.5);
    let kurtosis = m4 / (m2 * m2);
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(AssetSummary {
        asset: name.to_string(),
        min: sorted[0],
        max: sorted[n - 1],
        mean_x1000: 1e3 * mean,
        std: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness,
        kurtosis,
        q01: quantile_type7(&sorted, 0.01),
        jarque_bera: nf / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0),
    })
}

pub fn describe(panel: &ReturnPanel) -> Result<Vec<AssetSummary>, CliError> {
    panel
        .assets()
        .iter()
        .enumerate()
        .map(|(j, name)| summarize(name, panel.values().column(j).as_slice()))
        .collect()
}
