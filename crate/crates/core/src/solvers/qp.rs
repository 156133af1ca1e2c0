//! Primal active-set method for the epigraph problem
//!
//! ```text
//! max_{w,y}  y − (δ/2) wᵀΣw
//! s.t.       y ≤ a_kᵀw − b_k   (k = 1..K)
//!            1ᵀw = 1,  w ≥ 0
//! ```
//!
//! posed as `min ½xᵀHx + gᵀx` over `x = (w, y)` with inequality
//! constraints `cᵀx ≥ d`. The Hessian is singular in `y`, but every working
//! set keeps at least one epigraph row (their multipliers sum to one), which
//! makes each equality-constrained subproblem strictly convex.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::CovarianceMatrix;

pub(crate) struct EpigraphProblem<'a> {
    pub sigma: &'a CovarianceMatrix,
    pub delta: f64,
    pub a: Vec<&'a [f64]>,
    pub b: Vec<f64>,
}

pub(crate) struct EpigraphSolution {
    pub w: Vec<f64>,
    /// Epigraph multipliers, nonnegative and summing to one.
    pub lambda: Vec<f64>,
    /// Epigraph rows in the final working set.
    pub active_rows: Vec<usize>,
    pub iterations: usize,
}

/// Constraint index: `0..n` are bounds `w_i ≥ 0`, `n..n+K` epigraph rows.
type Cons = usize;

impl EpigraphProblem<'_> {
    fn n(&self) -> usize {
        self.sigma.dim()
    }

    fn k(&self) -> usize {
        self.a.len()
    }

    fn margin(&self, k: usize, w: &[f64]) -> f64 {
        dot(self.a[k], w) - self.b[k]
    }

    /// `cᵀx − d`
    fn slack(&self, c: Cons, w: &[f64], y: f64) -> f64 {
        let n = self.n();
        if c < n {
            w[c]
        } else {
            self.margin(c - n, w) - y
        }
    }

    /// `cᵀp`
    fn along(&self, c: Cons, pw: &[f64], py: f64) -> f64 {
        let n = self.n();
        if c < n {
            pw[c]
        } else {
            dot(self.a[c - n], pw) - py
        }
    }

    fn eq_row(&self) -> Vec<f64> {
        let mut r = vec![1.0; self.n() + 1];
        r[self.n()] = 0.0;
        r
    }

    fn row(&self, c: Cons) -> Vec<f64> {
        let n = self.n();
        let mut r = vec![0.0; n + 1];
        if c < n {
            r[c] = 1.0;
        } else {
            r[..n].copy_from_slice(self.a[c - n]);
            r[n] = -1.0;
        }
        r
    }

    /// `hint` lists epigraph rows to start in the working set when they are
    /// tight at the starting point (typically the previous solve's active
    /// rows); loose or dependent ones are ignored.
    pub fn solve(&self, start: Option<&[f64]>, hint: &[usize], max_iter: usize) -> Result<EpigraphSolution> {
        let n = self.n();
        let kk = self.k();
        if kk == 0 {
            return Err(Error::invalid("at least one scenario required"));
        }
        let mut w: Vec<f64> = match start {
            Some(s) => s.to_vec(),
            None => vec![1.0 / n as f64; n],
        };
        let (first, mut y) = (0..kk)
            .map(|k| (k, self.margin(k, &w)))
            .fold((0, f64::INFINITY), |acc, (k, m)| if m < acc.1 { (k, m) } else { acc });
        let mut working: Vec<Cons> = vec![n + first];
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                working.push(i);
            }
        }
        let band = 1e-12 * (1.0 + y.abs());
        for &k in hint {
            if working.len() + 1 >= n + 1 {
                break;
            }
            let c = n + k;
            if k < kk && !working.contains(&c) && self.margin(k, &w) <= y + band {
                let mut rows = vec![self.eq_row()];
                rows.extend(working.iter().map(|&c| self.row(c)));
                if !in_span(&rows, &self.row(c)) {
                    working.push(c);
                }
            }
        }

        let hw = self.sigma.matrix() * self.delta;
        let dim = n + 1;
        for iter in 1..=max_iter {
            // Gradient of the minimized objective at x.
            let hwx = &hw * DVector::from_column_slice(&w);
            let mut grad = vec![0.0; dim];
            grad[..n].copy_from_slice(hwx.as_slice());
            grad[n] = -1.0;

            let m = working.len() + 1;
            let size = dim + m;
            let mut kkt = DMatrix::<f64>::zeros(size, size);
            kkt.view_mut((0, 0), (n, n)).copy_from(&hw);
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
            rows.push(self.eq_row());
            rows.extend(working.iter().map(|&c| self.row(c)));
            for (r, row) in rows.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    kkt[(dim + r, j)] = v;
                    kkt[(j, dim + r)] = v;
                }
            }
            let mut rhs = DVector::<f64>::zeros(size);
            for j in 0..dim {
                rhs[j] = -grad[j];
            }
            let sol = kkt.full_piv_lu().solve(&rhs).ok_or_else(|| {
                Error::NotPositiveDefinite("singular active-set system".into())
            })?;
            let pw: Vec<f64> = sol.as_slice()[..n].to_vec();
            let py = sol[n];
            // Multipliers of the working constraints (equality first).
            let lam: Vec<f64> = (0..m).map(|r| -sol[dim + r]).collect();

            let step_norm = pw.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            // A saturated working set pins x to a vertex; any step there is
            // rounding noise from an ill-conditioned KKT system.
            if step_norm <= 1e-12 || m >= dim {
                let (drop, most_neg) = working
                    .iter()
                    .enumerate()
                    .map(|(r, _)| (r, lam[r + 1]))
                    .fold((usize::MAX, -1e-12), |acc, (r, l)| if l < acc.1 { (r, l) } else { acc });
                if drop == usize::MAX || most_neg >= -1e-12 {
                    let mut lambda = vec![0.0; kk];
                    for (r, &c) in working.iter().enumerate() {
                        if c >= n {
                            lambda[c - n] += lam[r + 1].max(0.0);
                        }
                    }
                    let s: f64 = lambda.iter().sum();
                    if s > 0.0 {
                        lambda.iter_mut().for_each(|l| *l /= s);
                    }
                    let active_rows = working.iter().filter(|&&c| c >= n).map(|&c| c - n).collect();
                    return Ok(EpigraphSolution {
                        w,
                        lambda,
                        active_rows,
                        iterations: iter,
                    });
                }
                working.remove(drop);
                continue;
            }

            let mut candidates: Vec<(f64, Cons)> = (0..n + kk)
                .filter(|c| !working.contains(c))
                .filter_map(|c| {
                    let ap = self.along(c, &pw, py);
                    let ratio = self.slack(c, &w, y).max(0.0) / -ap;
                    (ap < 0.0 && ratio < 1.0).then_some((ratio, c))
                })
                .collect();
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            // A row dependent on the working set has cᵀp = 0 in exact
            // arithmetic (duplicate scenarios, for instance); adding it would
            // make the next KKT system singular.
            let (alpha, blocking) = candidates
                .into_iter()
                .find(|&(_, c)| !in_span(&rows, &self.row(c)))
                .map_or((1.0, None), |(r, c)| (r, Some(c)));
            for (wi, pi) in w.iter_mut().zip(&pw) {
                *wi += alpha * pi;
            }
            y += alpha * py;
            if let Some(c) = blocking {
                if c < n {
                    w[c] = 0.0;
                }
                working.push(c);
            }
        }
        Err(Error::NotConverged {
            what: "active-set QP",
            iterations: max_iter,
        })
    }

    /// Duality-gap bound at `(w, λ)`: the Frank-Wolfe gap of the Lagrangian
    /// over the simplex plus epigraph complementarity.
    pub fn kkt_residual(&self, w: &[f64], lambda: &[f64]) -> f64 {
        let n = self.n();
        let sw = self.sigma.mul_vec(w);
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                let lin: f64 = self.a.iter().zip(lambda).map(|(a, l)| l * a[i]).sum();
                lin - self.delta * sw[i]
            })
            .collect();
        let best = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let fw_gap = (best - dot(&grad, w)).max(0.0);
        let margins: Vec<f64> = (0..self.k()).map(|k| self.margin(k, w)).collect();
        let y = margins.iter().cloned().fold(f64::INFINITY, f64::min);
        let comp: f64 = margins.iter().zip(lambda).map(|(m, l)| l * (m - y)).sum();
        fw_gap + comp
    }
}

/// Whether `row` is, to rounding, a combination of `rows`.
fn in_span(rows: &[Vec<f64>], row: &[f64]) -> bool {
    // Orthonormal basis by modified Gram-Schmidt with reorthogonalization.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    let project_out = |v: &mut Vec<f64>, basis: &[Vec<f64>]| {
        for _ in 0..2 {
            for q in basis {
                let c = dot(q, v);
                v.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
            }
        }
    };
    for r in rows {
        let mut v = r.clone();
        project_out(&mut v, &basis);
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-12 * dot(r, r).sqrt() {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut v = row.to_vec();
    project_out(&mut v, &basis);
    dot(&v, &v).sqrt() <= 1e-9 * dot(row, row).sqrt().max(1.0)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

