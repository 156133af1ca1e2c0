//! Monthly rebalanced horse race between robust and social-choice
//! pipelines over a `(K, d, c)` grid of synthetic views.
//!
//! For each period `t` the correct order is the ranking of the realized
//! returns at `t + 1`. `K` views at Kendall-Tau distance `d` from it are
//! drawn uniformly; every method turns them into a portfolio held over
//! `t + 1`. Covariance and prior are estimated once on the full panel.

pub mod config;
pub mod report;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::aggregation::{aggregate, AggregationMethod, Mc4Config, OrderProfile};
use crate::error::{Error, Result};
use crate::estimator::{truncated_mvn_mean, MeanEstimate, SamplerConfig, ViewModel, VIEW_STREAM};
use crate::metrics::{ceq, count_wins, sharpe_ratio, PerformanceRecord, RiskFree};
use crate::model::{
    estimate_covariance, reverse_optimize_prior, CovarianceMatrix, ModelConfig, Portfolio,
    PriorVector, ReturnsPanel, TotalOrder,
};
use crate::ordinal::{build_mahonian, compose, sample_relative_permutation, DistanceSpec, MahonianTable};
use crate::seed;
use crate::solvers::{
    scenario_optima, solve_maxmin, solve_min_regret_with, solve_mvo, solve_soft_with, ScenarioSet,
    SolveReport, SolverOptions,
};

pub use config::{ExperimentGrid, RiskFreeSource};
pub use synthetic::{generate_synthetic_panel, SyntheticSpec};

const VIEWS_TAG: u64 = 0x5649;
const GIBBS_TAG: u64 = 0x4742;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodId {
    Maxmin,
    MinRegret,
    Soft25,
    Soft50,
    Soft75,
    Soft100,
    Borda,
    Footrule,
    Copeland,
    BestOfK,
    Mc4,
}

impl MethodId {
    pub const ALL: [MethodId; 11] = [
        Self::Maxmin,
        Self::MinRegret,
        Self::Soft25,
        Self::Soft50,
        Self::Soft75,
        Self::Soft100,
        Self::Borda,
        Self::Footrule,
        Self::Copeland,
        Self::BestOfK,
        Self::Mc4,
    ];

    /// Best method of each group by overall wins, compared head to head.
    pub const CHAMPIONS: [MethodId; 4] = [Self::MinRegret, Self::Soft50, Self::Borda, Self::Copeland];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Maxmin => "maxmin",
            Self::MinRegret => "minregret",
            Self::Soft25 => "soft_0.25",
            Self::Soft50 => "soft_0.5",
            Self::Soft75 => "soft_0.75",
            Self::Soft100 => "soft_1",
            Self::Borda => "borda",
            Self::Footrule => "footrule",
            Self::Copeland => "copeland",
            Self::BestOfK => "bestofk",
            Self::Mc4 => "mc4",
        }
    }

    /// Robust methods estimate per view, then optimize over the scenarios.
    pub fn is_robust(&self) -> bool {
        self.aggregation().is_none()
    }

    pub fn aggregation(&self) -> Option<AggregationMethod> {
        match self {
            Self::Borda => Some(AggregationMethod::Borda),
            Self::Footrule => Some(AggregationMethod::Footrule),
            Self::Copeland => Some(AggregationMethod::Copeland),
            Self::BestOfK => Some(AggregationMethod::BestOfK),
            Self::Mc4 => Some(AggregationMethod::Mc4),
            _ => None,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            Self::Soft25 => Some(0.25),
            Self::Soft50 => Some(0.5),
            Self::Soft75 => Some(0.75),
            Self::Soft100 => Some(1.0),
            _ => None,
        }
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub k: usize,
    pub d: f64,
    pub c: f64,
}

/// Numerical settings that are not part of the grid.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub sampler: SamplerConfig,
    pub solver: SolverOptions,
    pub mc4: Mc4Config,
    /// Relative band for counting wins.
    pub win_tol: f64,
    pub covariance_jitter: f64,
    /// Reference portfolio for the prior; equal weights when absent.
    pub reference: Option<Portfolio>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig::default(),
            solver: SolverOptions::default(),
            mc4: Mc4Config::default(),
            win_tol: 0.01,
            covariance_jitter: 1e-10,
            reference: None,
        }
    }
}

/// Portfolio chosen at `t` and its realized return over `t + 1`.
pub type PeriodOutcome = BTreeMap<MethodId, (Portfolio, f64)>;

/// A panel with everything that stays fixed across periods.
pub struct Experiment {
    panel: ReturnsPanel,
    grid: ExperimentGrid,
    opts: RunOptions,
    sigma: CovarianceMatrix,
    pi: PriorVector,
    table: MahonianTable,
    /// Correct order for evaluated period `t`, from the returns at `t + 1`.
    correct: Vec<TotalOrder>,
    rf: Vec<f64>,
}

impl Experiment {
    pub fn new(panel: ReturnsPanel, grid: ExperimentGrid, opts: RunOptions) -> Result<Self> {
        grid.validate()?;
        let n = panel.n_assets();
        if n < 2 {
            return Err(Error::dim("the horse race needs at least 2 assets"));
        }
        if panel.n_periods() < 3 {
            return Err(Error::dim("the horse race needs at least 3 periods"));
        }
        let sigma = estimate_covariance(&panel, opts.covariance_jitter)?;
        let reference = opts.reference.clone().unwrap_or_else(|| Portfolio::equal_weight(n));
        let pi = reverse_optimize_prior(&sigma, &reference, grid.delta)?;
        let table = build_mahonian(n)?;
        for &d in &grid.ds {
            let spec = DistanceSpec::from_normalized(d, n)?;
            log::info!(
                "d={d}: {} of {} discordant pairs (realized {:.4})",
                spec.inversions(),
                n * (n - 1) / 2,
                spec.normalized()
            );
        }
        let n_eval = panel.n_periods() - 1;
        let correct = (0..n_eval)
            .map(|t| TotalOrder::by_decreasing(&panel.period(t + 1)))
            .collect();
        let rf = match grid.rf {
            RiskFreeSource::Rate(r) => vec![r; n_eval],
            RiskFreeSource::PanelColumn => panel
                .risk_free()
                .ok_or_else(|| Error::invalid("rf = \"column\" but the panel has no rf column"))?[1..]
                .to_vec(),
        };
        Ok(Self {
            panel,
            grid,
            opts,
            sigma,
            pi,
            table,
            correct,
            rf,
        })
    }

    pub fn grid(&self) -> &ExperimentGrid {
        &self.grid
    }

    pub fn sigma(&self) -> &CovarianceMatrix {
        &self.sigma
    }

    pub fn prior(&self) -> &PriorVector {
        &self.pi
    }

    pub fn n_evaluated(&self) -> usize {
        self.correct.len()
    }

    pub fn correct_order(&self, t: usize) -> &TotalOrder {
        &self.correct[t]
    }

    /// Cells in `K`, then `d`, then `c` order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.grid.n_cells());
        for &k in &self.grid.ks {
            for &d in &self.grid.ds {
                for &c in &self.grid.cs {
                    out.push(Cell { k, d, c });
                }
            }
        }
        out
    }

    /// The first `k` views for period `t` at distance `d`. Every cell with
    /// the same `(t, d)` sees a prefix of the same stream.
    pub fn views(&self, t: usize, d: f64, k: usize) -> Result<Vec<TotalOrder>> {
        let n = self.panel.n_assets();
        let spec = DistanceSpec::from_normalized(d, n)?;
        let period_coord = if self.grid.resample_views_monthly { t as u64 } else { u64::MAX };
        let mut rng = seed::rng(seed::derive(self.grid.seed, &[VIEWS_TAG, period_coord, d.to_bits()]));
        (0..k)
            .map(|_| {
                let rel = sample_relative_permutation(&self.table, &spec, &mut rng)?;
                compose(&self.correct[t], &rel)
            })
            .collect()
    }

    /// Every grid method's portfolio for one cell at period `t`.
    pub fn run_period(&self, t: usize, cell: &Cell) -> Result<PeriodOutcome> {
        let mut out = self.period_outcomes(t, std::slice::from_ref(cell))?;
        Ok(out.pop().expect("one cell"))
    }

    fn period_outcomes(&self, t: usize, cells: &[Cell]) -> Result<Vec<PeriodOutcome>> {
        if t >= self.n_evaluated() {
            return Err(Error::invalid(format!(
                "period {t} has no following period to evaluate"
            )));
        }
        let next = self.panel.period(t + 1);
        let mut cache = PosteriorCache::new(self, t);
        let mut views: HashMap<u64, Vec<TotalOrder>> = HashMap::new();
        let mut consensus: HashMap<(u64, usize, MethodId), TotalOrder> = HashMap::new();
        let wrap = |m: MethodId| move |e: Error| Error::Period {
            period: t,
            method: m.to_string(),
            source: Box::new(e),
        };

        let mut results = Vec::with_capacity(cells.len());
        for cell in cells {
            let d_key = cell.d.to_bits();
            if views.get(&d_key).map_or(true, |v| v.len() < cell.k) {
                let kmax = cells.iter().filter(|c| c.d.to_bits() == d_key).map(|c| c.k).max().unwrap_or(cell.k);
                views.insert(d_key, self.views(t, cell.d, kmax)?);
            }
            let orders = &views[&d_key][..cell.k];
            let cfg = ModelConfig::protocol(self.grid.delta, cell.c)?;
            let mut outcome = PeriodOutcome::new();

            let robust: Vec<MethodId> = self.grid.methods.iter().copied().filter(|m| m.is_robust()).collect();
            if !robust.is_empty() {
                let mus = orders
                    .iter()
                    .map(|o| cache.posterior_mean(o, &cfg))
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap(robust[0]))?;
                let scen = ScenarioSet::new(mus, self.sigma.clone(), self.grid.delta)?;
                let needs_optima = robust.iter().any(|m| *m != MethodId::Maxmin && *m != MethodId::Soft100);
                let optima = if needs_optima {
                    scenario_optima(&scen, &self.opts.solver).map_err(wrap(robust[0]))?
                } else {
                    Vec::new()
                };
                for &m in &robust {
                    let rep = self.solve_robust(m, &scen, &optima).map_err(wrap(m))?;
                    let ret = rep.w.dot(&next);
                    outcome.insert(m, (rep.w, ret));
                }
            }

            let profile = OrderProfile::new(orders.to_vec())?;
            for &m in self.grid.methods.iter().filter(|m| !m.is_robust()) {
                let key = (d_key, cell.k, m);
                let order = match consensus.get(&key) {
                    Some(o) => o.clone(),
                    None => {
                        let agg = m.aggregation().expect("social-choice method");
                        let o = aggregate(&profile, agg, &self.opts.mc4, true).map_err(wrap(m))?;
                        consensus.insert(key, o.clone());
                        o
                    }
                };
                let mu = cache.posterior_mean(&order, &cfg).map_err(wrap(m))?;
                let rep = solve_mvo(&mu, &self.sigma, self.grid.delta, &self.opts.solver).map_err(wrap(m))?;
                let ret = rep.w.dot(&next);
                outcome.insert(m, (rep.w, ret));
            }
            results.push(outcome);
        }
        Ok(results)
    }

    fn solve_robust(&self, m: MethodId, scen: &ScenarioSet, optima: &[SolveReport]) -> Result<SolveReport> {
        let opts = &self.opts.solver;
        match m {
            MethodId::Maxmin | MethodId::Soft100 => solve_maxmin(scen, opts),
            MethodId::MinRegret => solve_min_regret_with(scen, optima, opts),
            _ => solve_soft_with(scen, m.gamma().expect("soft method"), optima, opts),
        }
    }

    /// Runs every period and cell; periods in parallel.
    pub fn run(&self) -> Result<GridResult> {
        let cells = self.cells();
        let total = self.n_evaluated();
        let done = AtomicUsize::new(0);
        let per_period: Vec<Vec<PeriodOutcome>> = (0..total)
            .into_par_iter()
            .map(|t| {
                let r = self.period_outcomes(t, &cells);
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                log::info!("period {t} done ({n}/{total})");
                r
            })
            .collect::<Result<_>>()?;

        let mut records = Vec::with_capacity(cells.len() * self.grid.methods.len());
        for (i, cell) in cells.iter().enumerate() {
            for &m in &self.grid.methods {
                let series: Vec<f64> = per_period.iter().map(|p| p[i][&m].1).collect();
                let sr = sharpe_ratio(&series, RiskFree::Series(&self.rf), self.grid.annualize_sr)?;
                let ce = ceq(&series, self.grid.delta)?;
                records.push(PerformanceRecord {
                    method: m.name().to_string(),
                    k: cell.k,
                    d: cell.d,
                    c: cell.c,
                    sr,
                    ceq: ce,
                    monthly_returns: series,
                });
            }
        }
        let mut races = Vec::new();
        let robust: Vec<MethodId> = self.grid.methods.iter().copied().filter(|m| m.is_robust()).collect();
        let social: Vec<MethodId> = self.grid.methods.iter().copied().filter(|m| !m.is_robust()).collect();
        if !robust.is_empty() {
            races.push(("robust", robust));
        }
        if !social.is_empty() {
            races.push(("social", social));
        }
        if MethodId::CHAMPIONS.iter().all(|m| self.grid.methods.contains(m)) {
            races.push(("champion", MethodId::CHAMPIONS.to_vec()));
        }
        races.push(("all", self.grid.methods.clone()));

        let n_methods = self.grid.methods.len();
        let races = races
            .into_iter()
            .map(|(name, methods)| {
                let mut sr = Vec::with_capacity(cells.len());
                let mut ce = Vec::with_capacity(cells.len());
                for i in 0..cells.len() {
                    let recs = &records[i * n_methods..(i + 1) * n_methods];
                    let pick = |f: fn(&PerformanceRecord) -> f64| -> BTreeMap<MethodId, f64> {
                        self.grid
                            .methods
                            .iter()
                            .zip(recs)
                            .filter(|(m, _)| methods.contains(m))
                            .map(|(m, r)| (*m, f(r)))
                            .collect()
                    };
                    sr.push(count_wins(&pick(|r| r.sr), self.opts.win_tol)?);
                    ce.push(count_wins(&pick(|r| r.ceq), self.opts.win_tol)?);
                }
                Ok(Race {
                    name: name.to_string(),
                    methods,
                    sr_winners: sr,
                    ceq_winners: ce,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(GridResult {
            grid: self.grid.clone(),
            n_assets: self.panel.n_assets(),
            n_evaluated: self.n_evaluated(),
            first_date: self.panel.dates()[1].clone(),
            last_date: self.panel.dates()[self.panel.n_periods() - 1].clone(),
            cells,
            records,
            races,
        })
    }
}

/// Per-period memo of view models and truncated view means, keyed by the
/// order's asset sequence. Chains are seeded by the order content, so a
/// view shared by several cells or methods yields one estimate.
struct PosteriorCache<'a> {
    exp: &'a Experiment,
    t: usize,
    models: HashMap<Vec<usize>, ViewModel>,
    means: HashMap<(Vec<usize>, u64), MeanEstimate>,
}

impl<'a> PosteriorCache<'a> {
    fn new(exp: &'a Experiment, t: usize) -> Self {
        Self {
            exp,
            t,
            models: HashMap::new(),
            means: HashMap::new(),
        }
    }

    fn posterior_mean(&mut self, order: &TotalOrder, cfg: &ModelConfig) -> Result<Vec<f64>> {
        let seq = order.sequence().to_vec();
        if !self.models.contains_key(&seq) {
            let vm = ViewModel::new(&self.exp.pi, &self.exp.sigma, order)?;
            self.models.insert(seq.clone(), vm);
        }
        let vm = &self.models[&seq];
        let scale = cfg.view_scale().to_bits();
        let key = (seq, scale);
        if !self.means.contains_key(&key) {
            let dist = vm.view_distribution(cfg)?;
            let master = seed::derive(self.exp.grid.seed, &[GIBBS_TAG, self.t as u64, scale]);
            let mut rng = seed::rng(seed::derive_for_sequence(master, VIEW_STREAM, &key.0));
            let tm = truncated_mvn_mean(&dist, &self.exp.opts.sampler, &mut rng)?;
            self.means.insert(key.clone(), tm);
        }
        let post = vm.posterior(cfg, &self.means[&key], self.exp.opts.sampler.n_samples)?;
        Ok(post.mu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Sr,
    Ceq,
}

/// Winners of one race per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Race {
    pub name: String,
    pub methods: Vec<MethodId>,
    pub sr_winners: Vec<BTreeSet<MethodId>>,
    pub ceq_winners: Vec<BTreeSet<MethodId>>,
}

impl Race {
    pub fn winners(&self, metric: Metric) -> &[BTreeSet<MethodId>] {
        match metric {
            Metric::Sr => &self.sr_winners,
            Metric::Ceq => &self.ceq_winners,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub grid: ExperimentGrid,
    pub n_assets: usize,
    pub n_evaluated: usize,
    pub first_date: String,
    pub last_date: String,
    pub cells: Vec<Cell>,
    /// Cell-major, methods in grid order.
    pub records: Vec<PerformanceRecord>,
    pub races: Vec<Race>,
}

impl GridResult {
    pub fn race(&self, name: &str) -> Option<&Race> {
        self.races.iter().find(|r| r.name == name)
    }

    /// Wins of `method` in `race` over the cells accepted by `filter`.
    pub fn wins(&self, race: &str, metric: Metric, method: MethodId, filter: impl Fn(&Cell) -> bool) -> usize {
        self.race(race).map_or(0, |r| {
            r.winners(metric)
                .iter()
                .zip(&self.cells)
                .filter(|(w, c)| filter(c) && w.contains(&method))
                .count()
        })
    }

    pub fn record(&self, cell: usize, method: MethodId) -> Option<&PerformanceRecord> {
        let n = self.grid.methods.len();
        let i = self.grid.methods.iter().position(|m| *m == method)?;
        self.records.get(cell * n + i)
    }
}

/// Convenience wrapper: builds the experiment and runs the whole grid.
pub fn run_grid(panel: ReturnsPanel, grid: ExperimentGrid, opts: RunOptions) -> Result<GridResult> {
    Experiment::new(panel, grid, opts)?.run()
}
