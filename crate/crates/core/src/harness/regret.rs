//! Regret curves and their cross-trial aggregation.

use serde::{Deserialize, Serialize};

use crate::trace::Trace;

/// `optimum − incumbent` after each budget evaluation. The incumbent
/// includes the initial design.
pub fn simple_regret(trace: &Trace, optimum: f64) -> Vec<f64> {
    trace.budget_records().map(|r| optimum - r.incumbent_after).collect()
}

/// Running sum of `optimum − y` over the budget evaluations.
pub fn cumulative_regret(trace: &Trace, optimum: f64) -> Vec<f64> {
    trace
        .budget_records()
        .scan(0.0, |acc, r| {
            *acc += optimum - r.y;
            Some(*acc)
        })
        .collect()
}

/// Best objective value after each budget evaluation.
pub fn best_so_far(trace: &Trace) -> Vec<f64> {
    trace.budget_records().map(|r| r.incumbent_after).collect()
}

/// Which spread the plotted band shows around the mean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    #[default]
    StandardError,
    StandardDeviation,
}

/// Per-iteration mean and spread across equal-length curves. The spread
/// uses the `n − 1` sample deviation and is zero for a single curve.
pub fn mean_and_spread(curves: &[Vec<f64>], band: Band) -> (Vec<f64>, Vec<f64>) {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(len);
    let mut spread = Vec::with_capacity(len);
    for i in 0..len {
        let m = curves.iter().map(|c| c[i]).sum::<f64>() / n;
        let sd = if curves.len() > 1 {
            (curves.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        spread.push(match band {
            Band::StandardError => sd / n.sqrt(),
            Band::StandardDeviation => sd,
        });
    }
    (mean, spread)
}

/// Aggregated curves for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub trials: usize,
    pub mean_simple_regret: Vec<f64>,
    pub band_simple_regret: Vec<f64>,
    pub mean_cumulative_regret: Vec<f64>,
    pub mean_best_value: Vec<f64>,
    pub final_simple_regret: Vec<f64>,
    pub mean_final_simple_regret: f64,
}

impl RegretSummary {
    pub fn from_traces(traces: &[Trace], optimum: f64, band: Band) -> Self {
        let simple: Vec<Vec<f64>> = traces.iter().map(|t| simple_regret(t, optimum)).collect();
        let cumulative: Vec<Vec<f64>> = traces.iter().map(|t| cumulative_regret(t, optimum)).collect();
        let best: Vec<Vec<f64>> = traces.iter().map(best_so_far).collect();
        let (mean_simple_regret, band_simple_regret) = mean_and_spread(&simple, band);
        let final_simple_regret: Vec<f64> = simple.iter().map(|s| s.last().copied().unwrap_or(f64::NAN)).collect();
        let mean_final_simple_regret = final_simple_regret.iter().sum::<f64>() / final_simple_regret.len().max(1) as f64;
        Self {
            trials: traces.len(),
            mean_simple_regret,
            band_simple_regret,
            mean_cumulative_regret: mean_and_spread(&cumulative, band).0,
            mean_best_value: mean_and_spread(&best, band).0,
            final_simple_regret,
            mean_final_simple_regret,
        }
    }
}
