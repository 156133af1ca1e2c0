//! Mean-variance optimization over the long-only simplex and its robust
//! variants over a finite scenario set.

mod qp;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CovarianceMatrix, Portfolio};
use qp::{dot, EpigraphProblem};

/// Finite uncertainty set `{μ_1, …, μ_K}` with shared `Σ` and `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    mus: Vec<Vec<f64>>,
    sigma: CovarianceMatrix,
    delta: f64,
}

impl ScenarioSet {
    pub fn new(mus: Vec<Vec<f64>>, sigma: CovarianceMatrix, delta: f64) -> Result<Self> {
        if mus.is_empty() {
            return Err(Error::invalid("scenario set needs at least one scenario"));
        }
        let n = sigma.dim();
        if let Some(bad) = mus.iter().find(|m| m.len() != n) {
            return Err(Error::dim(format!(
                "scenario of length {} for {n} assets",
                bad.len()
            )));
        }
        if mus.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid("scenario returns must be finite"));
        }
        check_delta(delta)?;
        Ok(Self { mus, sigma, delta })
    }

    pub fn mus(&self) -> &[Vec<f64>] {
        &self.mus
    }

    pub fn sigma(&self) -> &CovarianceMatrix {
        &self.sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.sigma.dim()
    }

    /// `f(w, μ_k)` for every scenario.
    pub fn values(&self, w: &[f64]) -> Vec<f64> {
        let q = 0.5 * self.delta * self.sigma.quad_form(w);
        self.mus.iter().map(|m| dot(m, w) - q).collect()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("risk aversion must be positive, got {delta}")));
    }
    Ok(())
}

/// `f(w, μ) = wᵀμ − (δ/2) wᵀΣw`
pub fn mvo_objective(w: &[f64], mu: &[f64], sigma: &CovarianceMatrix, delta: f64) -> f64 {
    dot(w, mu) - 0.5 * delta * sigma.quad_form(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Bound on the reported KKT residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Optional starting portfolio for the QP.
    pub start: Option<Vec<f64>>,
    /// Maximum number of subproblem solves in the soft-robust search.
    pub node_budget: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            start: None,
            node_budget: 2_000_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub w: Portfolio,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Scenarios attaining the robust objective, ascending.
    pub active_scenarios: Vec<usize>,
    /// Maximum regret of `w`, for the min-regret solver.
    pub max_regret: Option<f64>,
}

struct Solved {
    w: Vec<f64>,
    /// Epigraph multipliers, aligned with the subset.
    lambda: Vec<f64>,
    /// Epigraph rows in the final working set, aligned with the subset.
    active_rows: Vec<usize>,
    kkt_residual: f64,
    iterations: usize,
}

fn solve_epigraph(
    sigma: &CovarianceMatrix,
    delta: f64,
    a: Vec<&[f64]>,
    b: Vec<f64>,
    hint: &[usize],
    opts: &SolverOptions,
) -> Result<Solved> {
    let n = sigma.dim();
    if let Some(s) = &opts.start {
        Portfolio::new(s.clone())?;
        if s.len() != n {
            return Err(Error::dim(format!("start of length {} for {n} assets", s.len())));
        }
    }
    let prob = EpigraphProblem { sigma, delta, a, b };
    let sol = prob.solve(opts.start.as_deref(), hint, opts.max_iter)?;
    let w = Portfolio::from_solver(sol.w).weights().to_vec();
    let kkt_residual = prob.kkt_residual(&w, &sol.lambda);
    if !(kkt_residual <= opts.tol) {
        return Err(Error::NotConverged {
            what: "QP KKT residual",
            iterations: sol.iterations,
        });
    }
    Ok(Solved {
        w,
        lambda: sol.lambda,
        active_rows: sol.active_rows,
        kkt_residual,
        iterations: sol.iterations,
    })
}

fn argmin_set(values: &[f64]) -> Vec<usize> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let band = 1e-10 * (1.0 + lo.abs());
    (0..values.len()).filter(|&k| values[k] <= lo + band).collect()
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Maximizes `f(w, μ)` over the simplex.
pub fn solve_mvo(
    mu: &[f64],
    sigma: &CovarianceMatrix,
    delta: f64,
    opts: &SolverOptions,
) -> Result<SolveReport> {
    check_delta(delta)?;
    if mu.len() != sigma.dim() {
        return Err(Error::dim(format!(
            "mean of length {} for {} assets",
            mu.len(),
            sigma.dim()
        )));
    }
    let s = solve_epigraph(sigma, delta, vec![mu], vec![0.0], &[], opts)?;
    Ok(SolveReport {
        objective: mvo_objective(&s.w, mu, sigma, delta),
        w: Portfolio::from_solver(s.w),
        kkt_residual: s.kkt_residual,
        iterations: s.iterations,
        active_scenarios: vec![0],
        max_regret: None,
    })
}

fn maxmin_subset(scen: &ScenarioSet, subset: &[usize], offsets: &[f64], opts: &SolverOptions) -> Result<Solved> {
    maxmin_subset_hinted(scen, subset, offsets, &[], opts)
}

/// `hint` holds scenario indices expected to be active at `opts.start`.
fn maxmin_subset_hinted(
    scen: &ScenarioSet,
    subset: &[usize],
    offsets: &[f64],
    hint: &[usize],
    opts: &SolverOptions,
) -> Result<Solved> {
    let local: Vec<usize> = hint.iter().filter_map(|k| subset.iter().position(|j| j == k)).collect();
    let mut s = solve_epigraph(
        &scen.sigma,
        scen.delta,
        subset.iter().map(|&k| scen.mus[k].as_slice()).collect(),
        subset.iter().map(|&k| offsets[k]).collect(),
        &local,
        opts,
    )?;
    s.active_rows.iter_mut().for_each(|r| *r = subset[*r]);
    Ok(s)
}

/// Maximizes `min_k f(w, μ_k)`.
pub fn solve_maxmin(scen: &ScenarioSet, opts: &SolverOptions) -> Result<SolveReport> {
    let all: Vec<usize> = (0..scen.len()).collect();
    let s = maxmin_subset(scen, &all, &vec![0.0; scen.len()], opts)?;
    let values = scen.values(&s.w);
    Ok(SolveReport {
        objective: min_of(&values),
        active_scenarios: argmin_set(&values),
        w: Portfolio::from_solver(s.w),
        kkt_residual: s.kkt_residual,
        iterations: s.iterations,
        max_regret: None,
    })
}

/// Per-scenario optimal values `f_k = max_w f(w, μ_k)` and maximizers.
pub fn scenario_optima(scen: &ScenarioSet, opts: &SolverOptions) -> Result<Vec<SolveReport>> {
    scen.mus
        .iter()
        .map(|m| solve_mvo(m, &scen.sigma, scen.delta, opts))
        .collect()
}

/// Minimizes the maximum regret `max_k (f_k − f(w, μ_k))`.
///
/// The reported objective is `min_k (f(w, μ_k) − f_k) = −MaxReg(w)`.
pub fn solve_min_regret(scen: &ScenarioSet, opts: &SolverOptions) -> Result<SolveReport> {
    let optima = scenario_optima(scen, opts)?;
    solve_min_regret_with(scen, &optima, opts)
}

/// [`solve_min_regret`] with precomputed [`scenario_optima`].
pub fn solve_min_regret_with(
    scen: &ScenarioSet,
    optima: &[SolveReport],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    check_optima(scen, optima)?;
    let f: Vec<f64> = optima.iter().map(|r| r.objective).collect();
    let all: Vec<usize> = (0..scen.len()).collect();
    let s = maxmin_subset(scen, &all, &f, opts)?;
    let regret_side: Vec<f64> = scen.values(&s.w).iter().zip(&f).map(|(v, fk)| v - fk).collect();
    let objective = min_of(&regret_side);
    Ok(SolveReport {
        objective,
        active_scenarios: argmin_set(&regret_side),
        max_regret: Some((-objective).max(0.0)),
        w: Portfolio::from_solver(s.w),
        kkt_residual: s.kkt_residual,
        iterations: s.iterations + optima.iter().map(|r| r.iterations).sum::<usize>(),
    })
}

fn check_optima(scen: &ScenarioSet, optima: &[SolveReport]) -> Result<()> {
    if optima.len() != scen.len() {
        return Err(Error::dim(format!(
            "{} scenario optima for {} scenarios",
            optima.len(),
            scen.len()
        )));
    }
    Ok(())
}

/// Maximum regret of `w` given the per-scenario optimal values.
pub fn max_regret(scen: &ScenarioSet, w: &[f64], optima: &[f64]) -> f64 {
    scen.values(w)
        .iter()
        .zip(optima)
        .map(|(v, f)| f - v)
        .fold(0.0, f64::max)
}

/// `⌈ΓK⌉`, robust to `Γ·K` landing a rounding error above an integer.
pub fn soft_count(gamma: f64, k: usize) -> Result<usize> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!("gamma must lie in (0,1], got {gamma}")));
    }
    let x = gamma * k as f64;
    let r = x.round();
    let m = if (x - r).abs() <= 1e-9 * (1.0 + x) { r } else { x.ceil() };
    Ok((m as usize).clamp(1, k))
}

/// The `m`-th largest entry.
fn mth_largest(values: &[f64], m: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[m - 1]
}

/// Maximizes the `⌈ΓK⌉`-th largest of `f(w, μ_k)`, i.e. the empirical
/// `(1−Γ)`-quantile.
///
/// Exact branch and bound over the `K − m` scenarios left out. A node drops
/// a set `D` and solves max-min on the rest, a feasible value. Any strictly
/// better point must drop one of the scenarios carrying a positive
/// multiplier there, since max-min over those alone already equals the node
/// value; the node branches over them, pinning earlier siblings as kept.
pub fn solve_soft(scen: &ScenarioSet, gamma: f64, opts: &SolverOptions) -> Result<SolveReport> {
    let m = soft_count(gamma, scen.len())?;
    if m == scen.len() {
        return solve_maxmin(scen, opts);
    }
    let optima = scenario_optima(scen, opts)?;
    solve_soft_with(scen, gamma, &optima, opts)
}

/// Best point found so far and search accounting.
struct SoftSearch<'a> {
    scen: &'a ScenarioSet,
    m: usize,
    f: Vec<f64>,
    zero: Vec<f64>,
    opts: &'a SolverOptions,
    best_v: f64,
    best_w: Vec<f64>,
    best_res: f64,
    /// Memoized max-min values of scenario pairs; NaN until computed.
    pair: Vec<f64>,
    nodes: usize,
    iterations: usize,
}

impl SoftSearch<'_> {
    fn eval(&self, w: &[f64]) -> f64 {
        mth_largest(&self.scen.values(w), self.m)
    }

    fn offer(&mut self, w: &[f64], res: f64) {
        let v = self.eval(w);
        if v > self.best_v {
            self.best_v = v;
            self.best_w = w.to_vec();
            self.best_res = res;
        }
    }

    fn solve_node(&mut self, subset: &[usize], start: Option<(Vec<f64>, Vec<usize>)>) -> Result<Solved> {
        if self.nodes >= self.opts.node_budget {
            return Err(Error::Capability(format!(
                "soft-robust search exceeded {} subproblem solves; use fewer scenarios or a coarser gamma",
                self.opts.node_budget
            )));
        }
        let s = match start {
            Some((w0, hint)) => {
                let warm = SolverOptions {
                    start: Some(w0),
                    ..self.opts.clone()
                };
                maxmin_subset_hinted(self.scen, subset, &self.zero, &hint, &warm)?
            }
            None => maxmin_subset(self.scen, subset, &self.zero, self.opts)?,
        };
        self.nodes += 1;
        self.iterations += s.iterations;
        Ok(s)
    }

    /// `max_w min(f(w, μ_i), f(w, μ_j))`, an upper bound for every kept set
    /// holding both.
    fn pair_value(&mut self, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Ok(self.f[i]);
        }
        let k = self.scen.len();
        let (a, b) = (i.min(j), i.max(j));
        if self.pair[a * k + b].is_nan() {
            let s = self.solve_node(&[a, b], None)?;
            let v = self.scen.values(&s.w);
            self.pair[a * k + b] = v[a].min(v[b]);
        }
        Ok(self.pair[a * k + b])
    }

    /// Upper bound for every completion that keeps the pinned scenarios and
    /// drops `left` more of the free ones.
    fn bound(&mut self, dropped: &[bool], kept: &[bool], left: usize) -> Result<f64> {
        let k = self.scen.len();
        let pinned: Vec<usize> = (0..k).filter(|&j| kept[j]).collect();
        let free: Vec<usize> = (0..k).filter(|&j| !dropped[j] && !kept[j]).collect();
        let mut ub = f64::INFINITY;
        let mut free_f: Vec<f64> = free.iter().map(|&j| self.f[j]).collect();
        if free_f.len() > left {
            free_f.sort_by(f64::total_cmp);
            ub = free_f[left];
        }
        for (x, &i) in pinned.iter().enumerate() {
            for &j in &pinned[x..] {
                ub = ub.min(self.pair_value(i, j)?);
            }
            if ub <= self.best_v {
                return Ok(ub);
            }
            if free.len() > left {
                let mut g = free.iter().map(|&j| self.pair_value(i, j)).collect::<Result<Vec<_>>>()?;
                g.sort_by(f64::total_cmp);
                ub = ub.min(g[left]);
            }
        }
        Ok(ub)
    }

    /// Local search: re-solve max-min on the `m` best scenarios until the
    /// quantile stops improving.
    fn polish(&mut self, w0: &[f64], res0: f64) -> Result<()> {
        let k = self.scen.len();
        let (mut w, mut v, mut res) = (w0.to_vec(), self.eval(w0), res0);
        let mut active: Vec<usize> = Vec::new();
        for _ in 0..k {
            let vals = self.scen.values(&w);
            let mut idx: Vec<usize> = (0..k).collect();
            idx.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
            idx.truncate(self.m);
            idx.sort_unstable();
            let s = self.solve_node(&idx, Some((w.clone(), active.clone())))?;
            let nv = self.eval(&s.w);
            if nv > v + 1e-15 * (1.0 + v.abs()) {
                v = nv;
                w = s.w;
                res = s.kkt_residual;
                active = s.active_rows;
            } else {
                break;
            }
        }
        self.offer(&w, res);
        Ok(())
    }

    fn drop_search(&mut self) -> Result<()> {
        let k = self.scen.len();
        let r = k - self.m;
        // Dropped flags, kept-for-good flags, parent maximizer and active set.
        let mut stack: Vec<(Vec<bool>, Vec<bool>, Option<(Vec<f64>, Vec<usize>)>)> =
            vec![(vec![false; k], vec![false; k], None)];
        while let Some((dropped, kept, start)) = stack.pop() {
            let n_dropped = dropped.iter().filter(|&&d| d).count();
            let left = r - n_dropped;
            if self.bound(&dropped, &kept, left)? <= self.best_v {
                continue;
            }
            let live: Vec<usize> = (0..k).filter(|&j| !dropped[j]).collect();
            let s = self.solve_node(&live, start)?;
            self.offer(&s.w, s.kkt_residual);
            if left == 0 {
                continue;
            }
            let lmax = s.lambda.iter().cloned().fold(0.0, f64::max);
            let mut support: Vec<(usize, f64)> = live
                .iter()
                .zip(&s.lambda)
                .filter(|&(&j, &l)| l > 1e-9 * lmax && !kept[j])
                .map(|(&j, &l)| (j, l))
                .collect();
            // Heaviest multiplier first.
            support.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut children = Vec::with_capacity(support.len());
            let mut pin = kept.clone();
            for &(j, _) in &support {
                let mut d = dropped.clone();
                d[j] = true;
                children.push((d, pin.clone(), Some((s.w.clone(), s.active_rows.clone()))));
                pin[j] = true;
            }
            stack.extend(children.into_iter().rev());
        }
        Ok(())
    }
}

/// [`solve_soft`] with precomputed [`scenario_optima`].
pub fn solve_soft_with(
    scen: &ScenarioSet,
    gamma: f64,
    optima: &[SolveReport],
    opts: &SolverOptions,
) -> Result<SolveReport> {
    check_optima(scen, optima)?;
    let k = scen.len();
    let m = soft_count(gamma, k)?;
    if m == k {
        return solve_maxmin(scen, opts);
    }
    let mut search = SoftSearch {
        scen,
        m,
        f: optima.iter().map(|r| r.objective).collect(),
        zero: vec![0.0; k],
        opts,
        best_v: f64::NEG_INFINITY,
        best_w: optima[0].w.weights().to_vec(),
        best_res: optima[0].kkt_residual,
        pair: vec![f64::NAN; k * k],
        nodes: k,
        iterations: optima.iter().map(|r| r.iterations).sum(),
    };
    for r in optima {
        if m == 1 {
            search.offer(r.w.weights(), r.kkt_residual);
        } else {
            search.polish(r.w.weights(), r.kkt_residual)?;
        }
    }
    if m > 1 {
        search.drop_search()?;
    }

    let values = scen.values(&search.best_w);
    let objective = mth_largest(&values, m);
    let band = 1e-10 * (1.0 + objective.abs());
    let active = (0..k).filter(|&j| values[j] >= objective - band).collect();
    log::debug!(
        "soft-robust search used {} subproblem solves, {} iterations (K={k}, m={m})",
        search.nodes,
        search.iterations
    );
    Ok(SolveReport {
        objective,
        w: Portfolio::from_solver(search.best_w),
        kkt_residual: search.best_res,
        iterations: search.iterations,
        active_scenarios: active,
        max_regret: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMethod {
    Mvo,
    Maxmin,
    MinRegret,
    Soft(f64),
}

impl SolveMethod {
    /// Runs the method; `Mvo` uses the first scenario.
    pub fn solve(&self, scen: &ScenarioSet, opts: &SolverOptions) -> Result<SolveReport> {
        match *self {
            Self::Mvo => solve_mvo(&scen.mus[0], &scen.sigma, scen.delta, opts),
            Self::Maxmin => solve_maxmin(scen, opts),
            Self::MinRegret => solve_min_regret(scen, opts),
            Self::Soft(g) => solve_soft(scen, g, opts),
        }
    }
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mvo => f.write_str("mvo"),
            Self::Maxmin => f.write_str("maxmin"),
            Self::MinRegret => f.write_str("minregret"),
            Self::Soft(g) => write!(f, "soft_{g}"),
        }
    }
}

impl FromStr for SolveMethod {
    type Err = Error;

    /// Accepts `mvo`, `maxmin`, `minregret`, `soft` (Γ = 1) and `soft_<Γ>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mvo" => Ok(Self::Mvo),
            "maxmin" => Ok(Self::Maxmin),
            "minregret" => Ok(Self::MinRegret),
            "soft" => Ok(Self::Soft(1.0)),
            _ => {
                let g = s
                    .strip_prefix("soft_")
                    .and_then(|g| g.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown solver method {s:?}")))?;
                soft_count(g, 1)?;
                Ok(Self::Soft(g))
            }
        }
    }
}

#[cfg(test)]
mod tests;
