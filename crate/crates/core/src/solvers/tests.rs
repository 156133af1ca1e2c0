use super::*;
use crate::seed;
use nalgebra::DMatrix;
use rand::Rng;

fn identity(n: usize) -> CovarianceMatrix {
    CovarianceMatrix::new(DMatrix::identity(n, n)).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

fn random_instance<R: Rng>(rng: &mut R, n: usize, k: usize) -> ScenarioSet {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.05..0.05));
    let sigma = CovarianceMatrix::new(&a * a.transpose() + DMatrix::identity(n, n) * 4e-4).unwrap();
    let mus = (0..k)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..0.02)).collect())
        .collect();
    ScenarioSet::new(mus, sigma, 3.0).unwrap()
}

/// Brute-force maximization of several objectives of the scenario values
/// over a simplex grid, followed by a finer grid around each maximizer.
struct GridOracle {
    best: Vec<f64>,
}

impl GridOracle {
    /// Objectives: `f(w, μ_1)`, max-min, negated max regret, then the
    /// `m`-th largest value for each entry of `ms`.
    fn run(scen: &ScenarioSet, f: &[f64], ms: &[usize], step: f64) -> Self {
        let n = scen.n_assets();
        let n_obj = 3 + ms.len();
        let objectives = |w: &[f64], out: &mut Vec<f64>| {
            let vals = scen.values(w);
            out.clear();
            out.push(vals[0]);
            out.push(min_of(&vals));
            out.push(vals.iter().zip(f).map(|(v, fk)| v - fk).fold(f64::INFINITY, f64::min));
            for &m in ms {
                out.push(mth_largest(&vals, m));
            }
        };
        let mut best = vec![f64::NEG_INFINITY; n_obj];
        let mut arg = vec![vec![0.0; n]; n_obj];
        let mut out = Vec::with_capacity(n_obj);
        let mut visit = |w: &[f64], best: &mut Vec<f64>, arg: &mut Vec<Vec<f64>>| {
            objectives(w, &mut out);
            for i in 0..n_obj {
                if out[i] > best[i] {
                    best[i] = out[i];
                    arg[i] = w.to_vec();
                }
            }
        };
        let steps = (1.0 / step).round() as usize;
        match n {
            2 => {
                for i in 0..=steps {
                    let t = i as f64 * step;
                    visit(&[t, 1.0 - t], &mut best, &mut arg);
                }
            }
            3 => {
                for i in 0..=steps {
                    for j in 0..=steps - i {
                        let a = i as f64 * step;
                        let b = j as f64 * step;
                        visit(&[a, b, (1.0 - a - b).max(0.0)], &mut best, &mut arg);
                    }
                }
            }
            _ => panic!("grid oracle supports n <= 3"),
        }
        // Refinement: never worse than the coarse grid.
        let fine = step / 100.0;
        let centers = arg.clone();
        for (o, c) in centers.iter().enumerate() {
            let mut try_point = |w: &[f64]| {
                if w.iter().all(|&x| x >= 0.0) {
                    objectives(w, &mut out);
                    if out[o] > best[o] {
                        best[o] = out[o];
                    }
                }
            };
            let r = 200i64;
            if n == 2 {
                for i in -r..=r {
                    let t = c[0] + i as f64 * fine;
                    try_point(&[t, 1.0 - t]);
                }
            } else {
                for i in -r..=r {
                    for j in -r..=r {
                        let a = c[0] + i as f64 * fine;
                        let b = c[1] + j as f64 * fine;
                        try_point(&[a, b, 1.0 - a - b]);
                    }
                }
            }
        }
        Self { best }
    }
}

#[test]
fn mvo_examples() {
    let r = solve_mvo(&[0.3, 0.3, 0.3], &identity(3), 2.0, &opts()).unwrap();
    assert_close(r.w.weights(), &[1.0 / 3.0; 3], 1e-9);
    let r = solve_mvo(&[0.1, 0.0], &identity(2), 1.0, &opts()).unwrap();
    assert_close(r.w.weights(), &[0.55, 0.45], 1e-9);
    assert!(r.kkt_residual <= 1e-8);
    let r = solve_mvo(&[10.0, 0.0], &identity(2), 1.0, &opts()).unwrap();
    assert_close(r.w.weights(), &[1.0, 0.0], 1e-12);
    assert!(solve_mvo(&[0.1], &identity(2), 1.0, &opts()).is_err());
    assert!(solve_mvo(&[0.1, 0.0], &identity(2), 0.0, &opts()).is_err());
}

#[test]
fn maxmin_examples() {
    let s = ScenarioSet::new(vec![vec![0.1, 0.0], vec![0.0, 0.1]], identity(2), 1.0).unwrap();
    let r = solve_maxmin(&s, &opts()).unwrap();
    assert_close(r.w.weights(), &[0.5, 0.5], 1e-9);
    assert!((r.objective + 0.20).abs() < 1e-9);
    assert_eq!(r.active_scenarios, vec![0, 1]);

    let mut rng = seed::rng(3);
    for _ in 0..20 {
        let s = random_instance(&mut rng, 4, 1);
        let a = solve_maxmin(&s, &opts()).unwrap();
        let b = solve_mvo(&s.mus()[0], s.sigma(), s.delta(), &opts()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-8);
        assert_close(a.w.weights(), b.w.weights(), 1e-6);
    }
}

#[test]
fn min_regret_examples() {
    let s = ScenarioSet::new(vec![vec![0.1, 0.0], vec![0.0, 0.1]], identity(2), 1.0).unwrap();
    let r = solve_min_regret(&s, &opts()).unwrap();
    assert_close(r.w.weights(), &[0.5, 0.5], 1e-9);

    let mut rng = seed::rng(4);
    let s = random_instance(&mut rng, 3, 1);
    let r = solve_min_regret(&s, &opts()).unwrap();
    let m = solve_mvo(&s.mus()[0], s.sigma(), s.delta(), &opts()).unwrap();
    assert!(r.max_regret.unwrap() < 1e-8);
    assert_close(r.w.weights(), m.w.weights(), 1e-6);
}

#[test]
fn min_regret_beats_sampled_portfolios() {
    let mut rng = seed::rng(5);
    for _ in 0..10 {
        let s = random_instance(&mut rng, 2, 3);
        let r = solve_min_regret(&s, &opts()).unwrap();
        let f: Vec<f64> = scenario_optima(&s, &opts()).unwrap().iter().map(|x| x.objective).collect();
        let star = r.max_regret.unwrap();
        assert!(star >= 0.0);
        assert!((star - max_regret(&s, r.w.weights(), &f)).abs() < 1e-12);
        for _ in 0..1000 {
            let t: f64 = rng.gen();
            assert!(star <= max_regret(&s, &[t, 1.0 - t], &f) + 1e-9);
        }
        let eq = vec![0.5, 0.5];
        let fmax = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let worst_eq = min_of(&s.values(&eq));
        assert!(star <= fmax - worst_eq + 1e-9);
    }
}

#[test]
fn soft_limit_cases() {
    let s = ScenarioSet::new(vec![vec![0.1, 0.0], vec![0.2, 0.0]], identity(2), 1.0).unwrap();
    let r = solve_soft(&s, 0.5, &opts()).unwrap();
    let best = solve_mvo(&[0.2, 0.0], &identity(2), 1.0, &opts()).unwrap();
    assert_close(r.w.weights(), best.w.weights(), 1e-9);
    assert!((r.objective - best.objective).abs() < 1e-12);

    let mut rng = seed::rng(6);
    for _ in 0..10 {
        let s = random_instance(&mut rng, 4, 5);
        let a = solve_soft(&s, 1.0, &opts()).unwrap();
        let b = solve_maxmin(&s, &opts()).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-8);
        let fmax = scenario_optima(&s, &opts())
            .unwrap()
            .iter()
            .map(|r| r.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        let c = solve_soft(&s, 0.2, &opts()).unwrap();
        assert!((c.objective - fmax).abs() < 1e-8);
    }
}

#[test]
fn soft_objective_monotone_in_gamma() {
    let mut rng = seed::rng(7);
    for _ in 0..20 {
        let s = random_instance(&mut rng, 3, 4);
        let vals: Vec<f64> = [0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&g| solve_soft(&s, g, &opts()).unwrap().objective)
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{vals:?}");
        }
        let mm = solve_maxmin(&s, &opts()).unwrap().objective;
        assert!(mm <= vals[3] + 1e-12);
    }
}

fn subsets(k: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize == m {
            out.push((0..k).filter(|&i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

#[test]
fn soft_matches_full_subset_enumeration() {
    let mut rng = seed::rng(8);
    for _ in 0..40 {
        let n = rng.gen_range(2..=5);
        let k = rng.gen_range(2..=7);
        let s = random_instance(&mut rng, n, k);
        let gamma = rng.gen_range(0.05..1.0);
        let m = soft_count(gamma, k).unwrap();
        let zero = vec![0.0; k];
        let brute = subsets(k, m)
            .iter()
            .map(|sub| {
                let w = maxmin_subset(&s, sub, &zero, &opts()).unwrap().w;
                mth_largest(&s.values(&w), m)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let r = solve_soft(&s, gamma, &opts()).unwrap();
        assert!((r.objective - brute).abs() < 1e-9, "{} vs {brute}", r.objective);
    }
}

#[test]
fn soft_budget_is_enforced() {
    let mut rng = seed::rng(9);
    let s = random_instance(&mut rng, 3, 8);
    let tight = SolverOptions {
        node_budget: 1,
        ..opts()
    };
    assert!(matches!(solve_soft(&s, 0.5, &tight), Err(Error::Capability(_))));
}

#[test]
fn soft_count_rounding() {
    assert_eq!(soft_count(0.3, 10).unwrap(), 3);
    assert_eq!(soft_count(0.25, 4).unwrap(), 1);
    assert_eq!(soft_count(0.26, 4).unwrap(), 2);
    assert_eq!(soft_count(1.0, 20).unwrap(), 20);
    assert!(soft_count(0.0, 4).is_err());
    assert!(soft_count(1.5, 4).is_err());
}

#[test]
fn solutions_independent_of_start() {
    let mut rng = seed::rng(10);
    for _ in 0..30 {
        let n = rng.gen_range(2..=6);
        let s = random_instance(&mut rng, n, 3);
        let mut start = vec![0.0; n];
        start[rng.gen_range(0..n)] = 1.0;
        let alt = SolverOptions {
            start: Some(start),
            ..opts()
        };
        let a = solve_mvo(&s.mus()[0], s.sigma(), s.delta(), &opts()).unwrap();
        let b = solve_mvo(&s.mus()[0], s.sigma(), s.delta(), &alt).unwrap();
        assert_close(a.w.weights(), b.w.weights(), 1e-6);
        let a = solve_maxmin(&s, &opts()).unwrap();
        let b = solve_maxmin(&s, &alt).unwrap();
        assert_close(a.w.weights(), b.w.weights(), 1e-6);
    }
}

#[test]
fn outputs_are_on_the_simplex() {
    let mut rng = seed::rng(11);
    for _ in 0..30 {
        let n = rng.gen_range(2..=8);
        let k = rng.gen_range(1..=6);
        let s = random_instance(&mut rng, n, k);
        for r in [
            solve_maxmin(&s, &opts()).unwrap(),
            solve_min_regret(&s, &opts()).unwrap(),
            solve_soft(&s, 0.5, &opts()).unwrap(),
        ] {
            let sum: f64 = r.w.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(r.w.weights().iter().all(|&x| x >= 0.0));
            assert!(r.kkt_residual <= 1e-8);
        }
    }
}

#[test]
fn grid_search_oracle() {
    let mut rng = seed::rng(12);
    for inst in 0..14 {
        let n = if inst < 12 { 2 } else { 3 };
        let k = rng.gen_range(1..=4);
        let s = random_instance(&mut rng, n, k);
        let f: Vec<f64> = scenario_optima(&s, &opts()).unwrap().iter().map(|r| r.objective).collect();
        let gammas = [0.5, 1.0];
        let ms: Vec<usize> = gammas.iter().map(|&g| soft_count(g, k).unwrap()).collect();
        let oracle = GridOracle::run(&s, &f, &ms, 1e-4);
        let got = [
            solve_mvo(&s.mus()[0], s.sigma(), s.delta(), &opts()).unwrap().objective,
            solve_maxmin(&s, &opts()).unwrap().objective,
            solve_min_regret(&s, &opts()).unwrap().objective,
            solve_soft(&s, gammas[0], &opts()).unwrap().objective,
            solve_soft(&s, gammas[1], &opts()).unwrap().objective,
        ];
        for (i, (g, o)) in got.iter().zip(&oracle.best).enumerate() {
            assert!(*g >= o - 1e-9, "objective {i}: solver {g} below grid {o}");
            assert!((g - o).abs() <= 1e-6, "objective {i}: solver {g} vs grid {o}");
        }
    }
}

#[test]
fn method_parsing() {
    assert_eq!("mvo".parse::<SolveMethod>().unwrap(), SolveMethod::Mvo);
    assert_eq!("soft_0.25".parse::<SolveMethod>().unwrap(), SolveMethod::Soft(0.25));
    assert_eq!("soft".parse::<SolveMethod>().unwrap(), SolveMethod::Soft(1.0));
    assert!("soft_2".parse::<SolveMethod>().is_err());
    assert!("cvar".parse::<SolveMethod>().is_err());
}
