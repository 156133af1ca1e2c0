//! Social-choice aggregation of several total orders into one consensus
//! order, the exact Kemeny-Young oracle and local Kemenization.
//!
//! Ties are broken by ascending asset index everywhere unless stated
//! otherwise.

use std::fmt;
use std::str::FromStr;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::model::TotalOrder;
use crate::ordinal::max_inversions;

/// `K >= 1` total orders over the same `n` assets, with pairwise preference
/// counts cached.
#[derive(Debug, Clone)]
pub struct OrderProfile {
    n: usize,
    orders: Vec<TotalOrder>,
    /// `prefer[i * n + j]` = number of orders ranking `i` above `j`.
    prefer: Vec<u32>,
}

impl OrderProfile {
    pub fn new(orders: Vec<TotalOrder>) -> Result<Self> {
        let first = orders
            .first()
            .ok_or_else(|| Error::invalid("a profile needs at least one order"))?;
        let n = first.len();
        if let Some(bad) = orders.iter().find(|o| o.len() != n) {
            return Err(Error::dim(format!(
                "profile mixes orders over {n} and {} assets",
                bad.len()
            )));
        }
        let mut prefer = vec![0u32; n * n];
        for o in &orders {
            let seq = o.sequence();
            for (p, &a) in seq.iter().enumerate() {
                for &b in &seq[p + 1..] {
                    prefer[a * n + b] += 1;
                }
            }
        }
        Ok(Self { n, orders, prefer })
    }

    pub fn n_assets(&self) -> usize {
        self.n
    }

    pub fn n_orders(&self) -> usize {
        self.orders.len()
    }

    pub fn orders(&self) -> &[TotalOrder] {
        &self.orders
    }

    /// Number of orders ranking `a` above `b`.
    pub fn prefer(&self, a: usize, b: usize) -> u32 {
        self.prefer[a * self.n + b]
    }

    /// `true` if strictly more than half of the orders rank `a` above `b`.
    fn strict_majority(&self, a: usize, b: usize) -> bool {
        2 * self.prefer(a, b) as usize > self.orders.len()
    }

    pub fn majority(&self) -> MajorityRelation {
        let n = self.n;
        let k = self.orders.len();
        let mut dominates = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && 2 * self.prefer(i, j) as usize >= k {
                    dominates[i * n + j] = true;
                }
            }
        }
        MajorityRelation { n, dominates }
    }

    fn check_order(&self, sigma: &TotalOrder) -> Result<()> {
        if sigma.len() != self.n {
            return Err(Error::dim(format!(
                "order over {} assets scored against a profile over {}",
                sigma.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// `i ≿ j` iff at least half of the orders rank `i` above `j`. For even `K`
/// an exact split makes both directions hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MajorityRelation {
    n: usize,
    dominates: Vec<bool>,
}

impl MajorityRelation {
    pub fn dominates(&self, i: usize, j: usize) -> bool {
        self.dominates[i * self.n + j]
    }

    /// `Cop(i) = |{j : i ≿ j}| - |{j : j ≿ i}|`
    pub fn copeland_values(&self) -> Vec<i64> {
        (0..self.n)
            .map(|i| {
                let wins = (0..self.n).filter(|&j| self.dominates(i, j)).count() as i64;
                let losses = (0..self.n).filter(|&j| self.dominates(j, i)).count() as i64;
                wins - losses
            })
            .collect()
    }
}

/// Total raw pairwise disagreements between `sigma` and every profile order.
pub fn kt_disagreements(sigma: &TotalOrder, profile: &OrderProfile) -> Result<u64> {
    profile.check_order(sigma)?;
    let seq = sigma.sequence();
    let mut total = 0u64;
    for (p, &a) in seq.iter().enumerate() {
        for &b in &seq[p + 1..] {
            total += profile.prefer(b, a) as u64;
        }
    }
    Ok(total)
}

/// Kendall-Tau score: sum of normalized distances to the profile orders.
pub fn kt_score(sigma: &TotalOrder, profile: &OrderProfile) -> Result<f64> {
    if profile.n < 2 {
        return Err(Error::dim("Kendall-Tau score needs at least 2 assets"));
    }
    Ok(kt_disagreements(sigma, profile)? as f64 / max_inversions(profile.n) as f64)
}

/// Borda totals `Σ_k (n - rank_k(i))`.
pub fn borda_scores(profile: &OrderProfile) -> Vec<u64> {
    let n = profile.n;
    let mut scores = vec![0u64; n];
    for o in &profile.orders {
        for (i, s) in scores.iter_mut().enumerate() {
            *s += (n - o.rank(i)) as u64;
        }
    }
    scores
}

pub fn borda(profile: &OrderProfile) -> TotalOrder {
    TotalOrder::by_decreasing(&borda_scores(profile))
}

/// `Σ_k SF(sigma, σ_k)`
pub fn footrule_score(sigma: &TotalOrder, profile: &OrderProfile) -> Result<u64> {
    profile.check_order(sigma)?;
    Ok(profile
        .orders
        .iter()
        .map(|o| {
            (0..profile.n)
                .map(|i| sigma.position(i).abs_diff(o.position(i)) as u64)
                .sum::<u64>()
        })
        .sum())
}

/// Footrule-optimal aggregation: assigns asset `i` to position `p` at cost
/// `Σ_k |p - rank_k(i)|` and solves the assignment problem exactly.
pub fn footrule_aggregate(profile: &OrderProfile) -> TotalOrder {
    let n = profile.n;
    let cost: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|p| {
                    profile
                        .orders
                        .iter()
                        .map(|o| p.abs_diff(o.position(i)) as i64)
                        .sum()
                })
                .collect()
        })
        .collect();
    let assign = min_cost_assignment(&cost);
    let mut seq = vec![0usize; n];
    for (asset, &pos) in assign.iter().enumerate() {
        seq[pos] = asset;
    }
    TotalOrder::from_sequence(seq).expect("assignment is a permutation")
}

pub fn copeland(profile: &OrderProfile) -> TotalOrder {
    TotalOrder::by_decreasing(&profile.majority().copeland_values())
}

/// The profile order with the smallest Kendall-Tau score; ties go to the
/// earliest order in the profile.
pub fn best_of_k(profile: &OrderProfile) -> TotalOrder {
    let mut best = 0;
    let mut best_score = u64::MAX;
    for (k, o) in profile.orders.iter().enumerate() {
        let s = kt_disagreements(o, profile).expect("profile orders share n");
        if s < best_score {
            best = k;
            best_score = s;
        }
    }
    profile.orders[best].clone()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mc4Config {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Mc4Config {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Row-stochastic MC4 transition matrix, row-major.
///
/// From state `i` a candidate `j` is proposed uniformly; the chain moves if
/// `j` majority-dominates `i`, and with probability `alpha` regardless. An
/// exact `K/2` split is resolved in favour of the lower asset index.
pub fn mc4_transition_matrix(profile: &OrderProfile, alpha: f64) -> Result<Vec<f64>> {
    let n = profile.n;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1], got {alpha}")));
    }
    let k = profile.orders.len();
    let nf = n as f64;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let votes = 2 * profile.prefer(j, i) as usize;
            let j_dominates = votes > k || (votes == k && j < i);
            let pij = if j_dominates { (1.0 + alpha) / nf } else { alpha / nf };
            p[i * n + j] = pij;
            off += pij;
        }
        if off > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "alpha={alpha} too large for n={n}: row {i} leaves probability {off}"
            )));
        }
        p[i * n + i] = (1.0 - off).max(0.0);
    }
    Ok(p)
}

/// Stationary distribution of the MC4 chain by power iteration from the
/// uniform distribution.
pub fn mc4_stationary(profile: &OrderProfile, cfg: &Mc4Config) -> Result<Vec<f64>> {
    let n = profile.n;
    let p = mc4_transition_matrix(profile, cfg.alpha)?;
    let mut x = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = &p[i * n..(i + 1) * n];
            for (nj, pij) in next.iter_mut().zip(row) {
                *nj += xi * pij;
            }
        }
        change = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < cfg.tol {
            return Ok(x);
        }
    }
    Err(Error::Mc4NotConverged {
        iterations: cfg.max_iter,
        last_change: change,
        last_iterate: x,
    })
}

pub fn mc4(profile: &OrderProfile, cfg: &Mc4Config) -> Result<TotalOrder> {
    let y = mc4_stationary(profile, cfg)?;
    Ok(TotalOrder::by_decreasing(&y))
}

/// Local Kemenization: for positions `2..=n`, the asset there bubbles upward
/// while a strict majority ranks it above its predecessor.
pub fn local_improvement(sigma: &TotalOrder, profile: &OrderProfile) -> Result<TotalOrder> {
    profile.check_order(sigma)?;
    let mut seq = sigma.sequence().to_vec();
    for l in 1..seq.len() {
        let mut p = l;
        while p > 0 && profile.strict_majority(seq[p], seq[p - 1]) {
            seq.swap(p, p - 1);
            p -= 1;
        }
    }
    TotalOrder::from_sequence(seq)
}

/// Largest `n` accepted by [`kemeny_exact`].
pub const KEMENY_MAX_N: usize = 12;

/// Exact Kemeny-Young order by dynamic programming over placed prefixes,
/// `O(2ⁿ n)` per pass. Among optimal orders the one with the
/// lexicographically smallest rank vector is returned.
pub fn kemeny_exact(profile: &OrderProfile) -> Result<TotalOrder> {
    let n = profile.n;
    if n > KEMENY_MAX_N {
        return Err(Error::Capability(format!(
            "exact Kemeny aggregation supports n <= {KEMENY_MAX_N}, got {n}"
        )));
    }
    if n == 1 {
        return Ok(TotalOrder::identity(1));
    }
    let full = (1usize << n) - 1;
    // above[j][S]: disagreements from placing j directly after prefix S,
    // i.e. above every asset outside S ∪ {j}.
    let mut row_total = vec![0u64; n];
    for (j, t) in row_total.iter_mut().enumerate() {
        *t = (0..n).filter(|&i| i != j).map(|i| profile.prefer(i, j) as u64).sum();
    }
    let mut above = vec![vec![0u64; full + 1]; n];
    for j in 0..n {
        let mut inside = vec![0u64; full + 1];
        for s in 1..=full {
            let low = s.trailing_zeros() as usize;
            inside[s] = inside[s & (s - 1)] + if low == j { 0 } else { profile.prefer(low, j) as u64 };
        }
        for s in 0..=full {
            above[j][s] = row_total[j] - inside[s];
        }
    }

    let solve = |fixed: &[Option<usize>]| -> u64 {
        let reserved: Vec<bool> = {
            let mut r = vec![false; n];
            for p in fixed.iter().flatten() {
                r[*p] = true;
            }
            r
        };
        let mut dp = vec![u64::MAX; full + 1];
        dp[0] = 0;
        for s in 0..full {
            let cur = dp[s];
            if cur == u64::MAX {
                continue;
            }
            let pos = s.count_ones() as usize;
            for j in 0..n {
                if s & (1 << j) != 0 {
                    continue;
                }
                let allowed = match fixed[j] {
                    Some(p) => p == pos,
                    None => !reserved[pos],
                };
                if !allowed {
                    continue;
                }
                let t = s | (1 << j);
                let v = cur + above[j][s];
                if v < dp[t] {
                    dp[t] = v;
                }
            }
        }
        dp[full]
    };

    let mut fixed: Vec<Option<usize>> = vec![None; n];
    let optimum = solve(&fixed);
    for a in 0..n {
        let taken: Vec<bool> = {
            let mut t = vec![false; n];
            for p in fixed.iter().flatten() {
                t[*p] = true;
            }
            t
        };
        for p in 0..n {
            if taken[p] {
                continue;
            }
            fixed[a] = Some(p);
            if solve(&fixed) == optimum {
                break;
            }
            fixed[a] = None;
        }
        debug_assert!(fixed[a].is_some());
    }
    let ranks: Vec<usize> = fixed.iter().map(|p| p.expect("every asset placed") + 1).collect();
    TotalOrder::from_ranks(&ranks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggregationMethod {
    Borda,
    Footrule,
    Copeland,
    BestOfK,
    Mc4,
    Kemeny,
}

impl AggregationMethod {
    pub const ALL: [AggregationMethod; 6] = [
        Self::Borda,
        Self::Footrule,
        Self::Copeland,
        Self::BestOfK,
        Self::Mc4,
        Self::Kemeny,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Borda => "borda",
            Self::Footrule => "footrule",
            Self::Copeland => "copeland",
            Self::BestOfK => "bestofk",
            Self::Mc4 => "mc4",
            Self::Kemeny => "kemeny",
        }
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown aggregation method {s:?}")))
    }
}

/// Runs one aggregation rule, optionally followed by local improvement.
pub fn aggregate(
    profile: &OrderProfile,
    method: AggregationMethod,
    mc4_cfg: &Mc4Config,
    local_improve: bool,
) -> Result<TotalOrder> {
    let order = match method {
        AggregationMethod::Borda => borda(profile),
        AggregationMethod::Footrule => footrule_aggregate(profile),
        AggregationMethod::Copeland => copeland(profile),
        AggregationMethod::BestOfK => best_of_k(profile),
        AggregationMethod::Mc4 => mc4(profile, mc4_cfg)?,
        AggregationMethod::Kemeny => kemeny_exact(profile)?,
    };
    if local_improve {
        local_improvement(&order, profile)
    } else {
        Ok(order)
    }
}
