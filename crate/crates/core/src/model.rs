//! Shared financial data model: return panels, covariance, prior, total
//! orders and pick matrices.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Periodic simple returns, `T` rows by `n` asset columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<String>,
    asset_ids: Vec<String>,
    returns: DMatrix<f64>,
    risk_free: Option<Vec<f64>>,
}

impl ReturnsPanel {
    pub fn new(dates: Vec<String>, asset_ids: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.nrows() != dates.len() {
            return Err(Error::dim(format!(
                "{} dates for {} return rows",
                dates.len(),
                returns.nrows()
            )));
        }
        if returns.ncols() != asset_ids.len() {
            return Err(Error::dim(format!(
                "{} asset ids for {} return columns",
                asset_ids.len(),
                returns.ncols()
            )));
        }
        if returns.nrows() < 2 {
            return Err(Error::dim("a returns panel needs at least 2 periods"));
        }
        if asset_ids.is_empty() {
            return Err(Error::dim("a returns panel needs at least one asset"));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &asset_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate asset id {id:?}")));
            }
        }
        for (idx, r) in returns.iter().enumerate() {
            if !r.is_finite() || *r <= -1.0 {
                let (t, i) = (idx % returns.nrows(), idx / returns.nrows());
                return Err(Error::invalid(format!(
                    "return {r} at period {t}, asset {} is missing or not above -1",
                    asset_ids[i]
                )));
            }
        }
        Ok(Self {
            dates,
            asset_ids,
            returns,
            risk_free: None,
        })
    }

    /// Builds a panel from total-return index levels; `r_t = I_t / I_{t-1} - 1`.
    /// The first date is consumed as the base level.
    pub fn from_levels(
        dates: Vec<String>,
        asset_ids: Vec<String>,
        levels: DMatrix<f64>,
    ) -> Result<Self> {
        if levels.nrows() != dates.len() {
            return Err(Error::dim("level rows and dates differ in length"));
        }
        if levels.nrows() < 3 {
            return Err(Error::dim("need at least 3 index levels for 2 returns"));
        }
        if levels.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("index levels must be positive and finite"));
        }
        let t = levels.nrows() - 1;
        let returns =
            DMatrix::from_fn(t, levels.ncols(), |r, c| levels[(r + 1, c)] / levels[(r, c)] - 1.0);
        Self::new(dates[1..].to_vec(), asset_ids, returns)
    }

    /// Attaches a per-period risk-free series aligned with the return rows.
    pub fn with_risk_free(mut self, rf: Vec<f64>) -> Result<Self> {
        if rf.len() != self.n_periods() {
            return Err(Error::dim(format!(
                "risk-free series has {} entries for {} periods",
                rf.len(),
                self.n_periods()
            )));
        }
        self.risk_free = Some(rf);
        Ok(self)
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn risk_free(&self) -> Option<&[f64]> {
        self.risk_free.as_deref()
    }

    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn period(&self, t: usize) -> Vec<f64> {
        self.returns.row(t).iter().copied().collect()
    }
}

/// Symmetric positive definite covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(DMatrix<f64>);

impl CovarianceMatrix {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::dim("covariance must be a non-empty square matrix"));
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        let n = sigma.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!(
                        "covariance not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let sym = symmetrize(&sigma);
        if !is_positive_definite(&sym) {
            return Err(Error::NotPositiveDefinite("covariance".into()));
        }
        Ok(Self(sym))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// `wᵀ Σ w`
    pub fn quad_form(&self, w: &[f64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.0[(i, j)] * w[j];
            }
            acc += w[i] * row;
        }
        acc
    }

    /// `Σ v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (&self.0 * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    match Cholesky::new(m.clone()) {
        Some(ch) => {
            let l = ch.l();
            (0..m.nrows()).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite())
        }
        None => false,
    }
}

/// Sample covariance of the panel columns with denominator `T - 1`, before any
/// repair.
pub fn sample_covariance(panel: &ReturnsPanel) -> DMatrix<f64> {
    let r = panel.returns();
    let t = r.nrows();
    let means = r.row_mean();
    let centered = DMatrix::from_fn(t, r.ncols(), |i, j| r[(i, j)] - means[j]);
    let cov = centered.transpose() * &centered / (t as f64 - 1.0);
    symmetrize(&cov)
}

/// Sample covariance repaired to strict positive definiteness.
///
/// When the sample estimate fails Cholesky, `jitter * mean(diag)` is added to
/// the diagonal, with the multiplier growing a hundredfold per attempt.
pub fn estimate_covariance(panel: &ReturnsPanel, jitter: f64) -> Result<CovarianceMatrix> {
    if panel.n_periods() < 2 {
        return Err(Error::dim("covariance needs at least 2 periods"));
    }
    if !(jitter > 0.0 && jitter.is_finite()) {
        return Err(Error::invalid("jitter multiplier must be positive"));
    }
    let raw = sample_covariance(panel);
    if is_positive_definite(&raw) {
        return CovarianceMatrix::new(raw);
    }
    let n = raw.nrows();
    let mean_diag = raw.diagonal().mean();
    let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
    let mut mult = jitter;
    while mult <= 1.0 {
        let mut repaired = raw.clone();
        for i in 0..n {
            repaired[(i, i)] += mult * scale;
        }
        if is_positive_definite(&repaired) {
            log::debug!("covariance repaired with diagonal jitter {mult:e} x {scale:e}");
            return CovarianceMatrix::new(repaired);
        }
        mult *= 100.0;
    }
    Err(Error::NotPositiveDefinite(
        "covariance could not be repaired with diagonal jitter".into(),
    ))
}

/// Expected per-period returns used as the prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorVector(pub Vec<f64>);

impl PriorVector {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("prior has non-finite entries"));
        }
        Ok(Self(pi))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Long-only, fully invested weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio(Vec<f64>);

impl Portfolio {
    pub const SUM_TOL: f64 = 1e-9;
    pub const NEG_TOL: f64 = 1e-12;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::dim("empty portfolio"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        if w.iter().any(|&x| !x.is_finite() || x < -Self::NEG_TOL) {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        Ok(Self(w.into_iter().map(|x| x.max(0.0)).collect()))
    }

    /// Clamps tiny negatives and rescales onto the simplex.
    pub(crate) fn from_solver(mut w: Vec<f64>) -> Self {
        for x in w.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            for x in w.iter_mut() {
                *x /= s;
            }
        }
        Self(w)
    }

    pub fn equal_weight(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Implied equilibrium returns `π = δ Σ w_ref`.
pub fn reverse_optimize_prior(
    sigma: &CovarianceMatrix,
    w_ref: &Portfolio,
    delta: f64,
) -> Result<PriorVector> {
    if sigma.dim() != w_ref.len() {
        return Err(Error::dim(format!(
            "covariance is {0}x{0}, reference portfolio has {1} weights",
            sigma.dim(),
            w_ref.len()
        )));
    }
    if !delta.is_finite() {
        return Err(Error::invalid("risk aversion must be finite"));
    }
    let pi = sigma.mul_vec(w_ref.weights());
    PriorVector::new(pi.into_iter().map(|x| delta * x).collect())
}

/// A strict ranking of `n` assets. Rank 1 is the highest expected return.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TotalOrder {
    /// `sequence[p]` is the asset at 0-based position `p`.
    sequence: Vec<usize>,
    /// `position[i]` is the 0-based position of asset `i`.
    position: Vec<usize>,
}

impl TotalOrder {
    /// From 1-based ranks: `ranks[i]` is the rank of asset `i`.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let n = ranks.len();
        let mut sequence = vec![usize::MAX; n];
        for (asset, &r) in ranks.iter().enumerate() {
            if r == 0 || r > n || sequence[r - 1] != usize::MAX {
                return Err(Error::invalid(format!(
                    "ranks {ranks:?} are not a bijection onto 1..={n}"
                )));
            }
            sequence[r - 1] = asset;
        }
        Ok(Self {
            sequence,
            position: ranks.iter().map(|r| r - 1).collect(),
        })
    }

    /// From the assets listed best first.
    pub fn from_sequence(sequence: Vec<usize>) -> Result<Self> {
        let n = sequence.len();
        let mut position = vec![usize::MAX; n];
        for (p, &asset) in sequence.iter().enumerate() {
            if asset >= n || position[asset] != usize::MAX {
                return Err(Error::invalid(format!(
                    "sequence {sequence:?} is not a permutation of 0..{n}"
                )));
            }
            position[asset] = p;
        }
        Ok(Self { sequence, position })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sequence: (0..n).collect(),
            position: (0..n).collect(),
        }
    }

    /// Assets sorted by decreasing `values`, ties by ascending asset index.
    pub fn by_decreasing<T: PartialOrd>(values: &[T]) -> Self {
        let mut seq: Vec<usize> = (0..values.len()).collect();
        seq.sort_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        Self::from_sequence(seq).expect("sorted indices form a permutation")
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    /// 1-based rank of `asset`.
    pub fn rank(&self, asset: usize) -> usize {
        self.position[asset] + 1
    }

    /// 0-based position of `asset`.
    pub fn position(&self, asset: usize) -> usize {
        self.position[asset]
    }

    pub fn positions(&self) -> &[usize] {
        &self.position
    }

    /// Asset at 0-based position `p`.
    pub fn at(&self, p: usize) -> usize {
        self.sequence[p]
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.position.iter().map(|p| p + 1).collect()
    }

    pub fn reversed(&self) -> Self {
        let mut seq = self.sequence.clone();
        seq.reverse();
        Self::from_sequence(seq).expect("reversal is a permutation")
    }

    /// `true` if `a` is ranked above `b`.
    pub fn prefers(&self, a: usize, b: usize) -> bool {
        self.position[a] < self.position[b]
    }
}

/// `(n-1) x n` sign matrix; row `j` says the asset ranked `j` outperforms the
/// asset ranked `j+1`. Stored as `(plus, minus)` asset pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PickMatrix {
    n: usize,
    rows: Vec<(usize, usize)>,
}

impl PickMatrix {
    /// Arbitrary pairwise rows, each "asset `plus` outperforms asset `minus`".
    pub fn from_pairs(n: usize, rows: Vec<(usize, usize)>) -> Result<Self> {
        for &(p, m) in &rows {
            if p >= n || m >= n || p == m {
                return Err(Error::invalid(format!("bad pick row ({p},{m}) for n={n}")));
            }
        }
        Ok(Self { n, rows })
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn n_views(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(usize, usize)] {
        &self.rows
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.rows.len(), self.n);
        for (r, &(plus, minus)) in self.rows.iter().enumerate() {
            p[(r, plus)] = 1.0;
            p[(r, minus)] = -1.0;
        }
        p
    }

    /// `P v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&(p, m)| v[p] - v[m]).collect()
    }

    /// `P Σ Pᵀ`
    pub fn sandwich(&self, sigma: &CovarianceMatrix) -> DMatrix<f64> {
        let m = self.rows.len();
        let s = sigma.matrix();
        DMatrix::from_fn(m, m, |a, b| {
            let (pa, ma) = self.rows[a];
            let (pb, mb) = self.rows[b];
            s[(pa, pb)] - s[(pa, mb)] - s[(ma, pb)] + s[(ma, mb)]
        })
    }

    /// `Σ Pᵀ`, an `n x m` matrix.
    pub fn sigma_pt(&self, sigma: &CovarianceMatrix) -> DMatrix<f64> {
        let s = sigma.matrix();
        DMatrix::from_fn(self.n, self.rows.len(), |i, r| {
            let (p, m) = self.rows[r];
            s[(i, p)] - s[(i, m)]
        })
    }
}

/// Adjacent-chain pick matrix for a total order.
pub fn pick_matrix_from_order(order: &TotalOrder) -> Result<PickMatrix> {
    let n = order.len();
    if n < 2 {
        return Err(Error::dim("a total order on fewer than 2 assets expresses no view"));
    }
    let rows = order.sequence().windows(2).map(|w| (w[0], w[1])).collect();
    Ok(PickMatrix { n, rows })
}

/// Risk aversion `delta`, view confidence `c` (0 = full confidence) and prior
/// uncertainty `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub delta: f64,
    pub c: f64,
    pub tau: f64,
}

impl ModelConfig {
    pub fn new(delta: f64, c: f64, tau: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be positive, got {delta}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("c must be positive, got {c}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { delta, c, tau })
    }

    /// Experiment convention: `0 < c < 1` and `tau = 1 - c`.
    pub fn protocol(delta: f64, c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::invalid(format!("c must lie in (0,1), got {c}")));
        }
        Self::new(delta, c, 1.0 - c)
    }

    /// `τ / (τ + c)`
    pub fn shrinkage(&self) -> f64 {
        self.tau / (self.tau + self.c)
    }

    /// Scale of the view covariance, `τ + c`.
    pub fn view_scale(&self) -> f64 {
        self.tau + self.c
    }
}
