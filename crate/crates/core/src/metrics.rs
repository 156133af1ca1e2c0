//! Portfolio performance measures and win counting.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Monthly periods per year.
pub const PERIODS_PER_YEAR: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskFree<'a> {
    Constant(f64),
    /// Aligned per-period rates.
    Series(&'a [f64]),
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance, denominator `T − 1`.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check_len(x: &[f64]) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::dim(format!("need at least 2 returns, got {}", x.len())));
    }
    Ok(())
}

/// `(mean excess return) / (sample std of returns)`, times `√12` when
/// annualized.
pub fn sharpe_ratio(returns: &[f64], rf: RiskFree<'_>, annualize: bool) -> Result<f64> {
    check_len(returns)?;
    let excess = match rf {
        RiskFree::Constant(r) => mean(returns) - r,
        RiskFree::Series(s) => {
            if s.len() != returns.len() {
                return Err(Error::dim(format!(
                    "{} returns with {} risk-free rates",
                    returns.len(),
                    s.len()
                )));
            }
            returns.iter().zip(s).map(|(r, f)| r - f).sum::<f64>() / returns.len() as f64
        }
    };
    let sd = variance(returns).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Undefined("Sharpe ratio of a constant return series".into()));
    }
    let sr = excess / sd;
    Ok(if annualize { sr * PERIODS_PER_YEAR.sqrt() } else { sr })
}

/// Certainty-equivalent return `mean − (δ/2)·variance`.
pub fn ceq(returns: &[f64], delta: f64) -> Result<f64> {
    check_len(returns)?;
    Ok(mean(returns) - 0.5 * delta * variance(returns))
}

/// Methods whose value lies within `rel_tol` of the best, the band being
/// scaled by `|max|` so it stays meaningful for non-positive maxima.
pub fn count_wins<K: Ord + Clone>(values: &BTreeMap<K, f64>, rel_tol: f64) -> Result<BTreeSet<K>> {
    if values.is_empty() {
        return Err(Error::invalid("no methods to compare"));
    }
    if values.values().any(|v| v.is_nan()) {
        return Err(Error::invalid("metric value is NaN"));
    }
    let max = values.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        log::info!("win band around non-positive maximum {max}");
    }
    let threshold = max - rel_tol * max.abs();
    Ok(values
        .iter()
        .filter(|(_, &v)| v >= threshold)
        .map(|(k, _)| k.clone())
        .collect())
}

/// One method's result in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRecord {
    pub method: String,
    pub k: usize,
    pub d: f64,
    pub c: f64,
    pub sr: f64,
    pub ceq: f64,
    pub monthly_returns: Vec<f64>,
}
