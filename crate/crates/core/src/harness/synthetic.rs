//! Synthetic monthly return panels.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ReturnsPanel;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_assets: usize,
    pub n_periods: usize,
    pub seed: u64,
    /// Range of per-asset monthly volatilities of log returns.
    pub vol_range: (f64, f64),
    /// Range of per-asset expected monthly simple returns.
    pub drift_range: (f64, f64),
}

impl SyntheticSpec {
    /// Magnitudes of large-cap equity panels: mean monthly return about 1%,
    /// volatility about 8%.
    pub fn new(n_assets: usize, n_periods: usize, seed: u64) -> Self {
        Self {
            n_assets,
            n_periods,
            seed,
            vol_range: (0.0479, 0.1179),
            drift_range: (0.0042, 0.0232),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
        return Err(Error::invalid(format!("invalid {name} range ({lo}, {hi})")));
    }
    Ok(())
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Random correlation matrix `D^{-1/2} Q Λ Qᵀ D^{-1/2}` from a Haar-like
/// orthogonal `Q` and spread-out eigenvalues.
fn random_correlation<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let lambda = DVector::from_fn(n, |_, _| rng.gen_range(0.2..2.0));
    let s = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    DMatrix::from_fn(n, n, |i, j| s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt())
}

/// Geometric-Brownian monthly returns with correlated shocks. Asset `i` has
/// log-return drift `ln(1 + m_i) − v_i²/2`, so its expected simple return is
/// `m_i`.
pub fn generate_synthetic_panel(spec: &SyntheticSpec) -> Result<ReturnsPanel> {
    let (n, t) = (spec.n_assets, spec.n_periods);
    if n < 1 || t < 2 {
        return Err(Error::invalid(format!("need n >= 1 and T >= 2, got n={n}, T={t}")));
    }
    check_range("volatility", spec.vol_range, 0.0)?;
    check_range("drift", spec.drift_range, -0.99)?;
    let mut rng = seed::rng(spec.seed);
    let vols: Vec<f64> = (0..n).map(|_| uniform(&mut rng, spec.vol_range)).collect();
    let drifts: Vec<f64> = (0..n).map(|_| uniform(&mut rng, spec.drift_range)).collect();
    let corr = random_correlation(&mut rng, n);
    let l = Cholesky::new(corr)
        .ok_or_else(|| Error::NotPositiveDefinite("synthetic correlation".into()))?
        .l();
    let mut returns = DMatrix::zeros(t, n);
    for row in 0..t {
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let e = &l * z;
        for i in 0..n {
            let log_r = (1.0 + drifts[i]).ln() - 0.5 * vols[i] * vols[i] + vols[i] * e[i];
            returns[(row, i)] = log_r.exp_m1();
        }
    }
    let dates = (0..t)
        .map(|k| format!("{:04}-{:02}", 2000 + k / 12, k % 12 + 1))
        .collect();
    let ids = (1..=n).map(|i| format!("A{i:02}")).collect();
    ReturnsPanel::new(dates, ids, returns)
}
