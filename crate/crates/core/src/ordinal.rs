//! Permutation distances and exact uniform sampling of total orders at a
//! prescribed Kendall-Tau distance.
//!
//! Distances are raw integer counts internally; normalization to `[0, 1]`
//! happens only in [`kendall_tau`] and [`DistanceSpec::normalized`].

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::TotalOrder;

fn check_same_len(a: &TotalOrder, b: &TotalOrder) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "orders over {} and {} assets",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `n (n - 1) / 2`
pub fn max_inversions(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Number of asset pairs ranked oppositely by `a` and `b`.
pub fn discordant_pairs(a: &TotalOrder, b: &TotalOrder) -> Result<usize> {
    check_same_len(a, b)?;
    // Inversions of b's positions read in a's order.
    let seq: Vec<usize> = a.sequence().iter().map(|&asset| b.position(asset)).collect();
    Ok(count_inversions(&seq))
}

pub(crate) fn count_inversions(seq: &[usize]) -> usize {
    // Merge sort count; O(n log n).
    fn sort_count(v: &mut [usize], buf: &mut Vec<usize>) -> usize {
        let n = v.len();
        if n < 2 {
            return 0;
        }
        let mid = n / 2;
        let mut inv = sort_count(&mut v[..mid], buf) + sort_count(&mut v[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < n {
            if v[i] <= v[j] {
                buf.push(v[i]);
                i += 1;
            } else {
                buf.push(v[j]);
                inv += mid - i;
                j += 1;
            }
        }
        buf.extend_from_slice(&v[i..mid]);
        buf.extend_from_slice(&v[j..n]);
        v.copy_from_slice(buf);
        inv
    }
    let mut v = seq.to_vec();
    let mut buf = Vec::with_capacity(v.len());
    sort_count(&mut v, &mut buf)
}

/// Normalized Kendall-Tau distance in `[0, 1]`.
pub fn kendall_tau(a: &TotalOrder, b: &TotalOrder) -> Result<f64> {
    check_same_len(a, b)?;
    if a.len() < 2 {
        return Err(Error::dim("Kendall-Tau distance needs at least 2 assets"));
    }
    Ok(discordant_pairs(a, b)? as f64 / max_inversions(a.len()) as f64)
}

/// `Σ_i |rank_a(i) - rank_b(i)|`
pub fn spearman_footrule(a: &TotalOrder, b: &TotalOrder) -> Result<usize> {
    check_same_len(a, b)?;
    Ok(a.positions()
        .iter()
        .zip(b.positions())
        .map(|(&x, &y)| x.abs_diff(y))
        .sum())
}

/// Counts of permutations by inversion number, `counts[m][t]`.
#[derive(Debug, Clone)]
pub struct MahonianTable {
    n: usize,
    counts: Vec<Vec<BigUint>>,
}

impl MahonianTable {
    pub const MAX_N: usize = 200;

    pub fn n(&self) -> usize {
        self.n
    }

    /// Permutations of `m` elements with exactly `t` inversions.
    pub fn count(&self, m: usize, t: usize) -> BigUint {
        self.counts
            .get(m)
            .and_then(|row| row.get(t))
            .cloned()
            .unwrap_or_else(BigUint::zero)
    }

    pub fn row(&self, m: usize) -> &[BigUint] {
        &self.counts[m]
    }
}

/// Builds the table for `0..=n` elements by the recurrence
/// `counts[m][t] = Σ_{j<m} counts[m-1][t-j]`, using a sliding window sum.
pub fn build_mahonian(n: usize) -> Result<MahonianTable> {
    if n == 0 {
        return Err(Error::invalid("Mahonian table needs n >= 1"));
    }
    if n > MahonianTable::MAX_N {
        return Err(Error::Capability(format!(
            "Mahonian table limited to n <= {}",
            MahonianTable::MAX_N
        )));
    }
    let mut counts: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
    counts.push(vec![BigUint::one()]);
    for m in 1..=n {
        let prev = &counts[m - 1];
        let len = max_inversions(m) + 1;
        let mut row = Vec::with_capacity(len);
        let mut window = BigUint::zero();
        for t in 0..len {
            if let Some(v) = prev.get(t) {
                window += v;
            }
            if t >= m {
                if let Some(v) = prev.get(t - m) {
                    window -= v;
                }
            }
            row.push(window.clone());
        }
        counts.push(row);
    }
    Ok(MahonianTable { n, counts })
}

/// Target distance from a reference order, as an exact inversion count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceSpec {
    n: usize,
    t: usize,
}

impl DistanceSpec {
    /// Rounds `d · n(n-1)/2` to the nearest integer, ties away from zero.
    pub fn from_normalized(d: f64, n: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::invalid(format!("normalized distance {d} outside [0,1]")));
        }
        if n < 2 {
            return Err(Error::dim("distance targets need n >= 2"));
        }
        let raw = d * max_inversions(n) as f64;
        let t = raw.round() as usize;
        let spec = Self { n, t };
        if (spec.normalized() - d).abs() > 1e-12 {
            log::debug!(
                "distance {d} on n={n} rounds to {t} inversions (realized {:.6})",
                spec.normalized()
            );
        }
        Ok(spec)
    }

    pub fn from_inversions(t: usize, n: usize) -> Result<Self> {
        if t > max_inversions(n) {
            return Err(Error::invalid(format!(
                "{t} inversions exceed the maximum {} for n={n}",
                max_inversions(n)
            )));
        }
        Ok(Self { n, t })
    }

    pub fn inversions(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn normalized(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.t as f64 / max_inversions(self.n) as f64
        }
    }
}

/// Uniform permutation of `0..n` with exactly `t` inversions.
///
/// Draws the Lehmer code left to right, weighting each digit by the number of
/// completions of the remaining suffix, then decodes it.
pub fn sample_relative_permutation<R: Rng + ?Sized>(
    table: &MahonianTable,
    spec: &DistanceSpec,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = spec.n;
    if table.n() < n {
        return Err(Error::dim(format!(
            "Mahonian table built for n={} but n={n} requested",
            table.n()
        )));
    }
    if spec.t > max_inversions(n) {
        return Err(Error::invalid("inversion target out of range"));
    }
    let mut code = Vec::with_capacity(n);
    let mut remaining = spec.t;
    for i in 0..n {
        let len = n - i;
        let total = table.count(len, remaining);
        debug_assert!(!total.is_zero());
        let mut u = rng.gen_biguint_below(&total);
        let max_digit = (len - 1).min(remaining);
        let mut chosen = max_digit;
        for v in 0..=max_digit {
            let w = table.count(len - 1, remaining - v);
            if u < w {
                chosen = v;
                break;
            }
            u -= w;
        }
        code.push(chosen);
        remaining -= chosen;
    }
    debug_assert_eq!(remaining, 0);
    // Decode: element at position i is the code[i]-th smallest unused value.
    let mut unused: Vec<usize> = (0..n).collect();
    Ok(code.into_iter().map(|c| unused.remove(c)).collect())
}

/// Applies a relative permutation to a reference order: position `p` of the
/// result holds the reference's asset at position `rel[p]`.
pub fn compose(reference: &TotalOrder, rel: &[usize]) -> Result<TotalOrder> {
    if rel.len() != reference.len() {
        return Err(Error::dim("relative permutation and reference differ in length"));
    }
    TotalOrder::from_sequence(rel.iter().map(|&p| reference.at(p)).collect())
}

/// Uniform draw among all orders at exactly `spec.inversions()` discordant
/// pairs from `reference`.
pub fn sample_order_at_distance<R: Rng + ?Sized>(
    reference: &TotalOrder,
    spec: &DistanceSpec,
    table: &MahonianTable,
    rng: &mut R,
) -> Result<TotalOrder> {
    if spec.n != reference.len() {
        return Err(Error::dim("distance spec and reference order differ in n"));
    }
    let rel = sample_relative_permutation(table, spec, rng)?;
    compose(reference, &rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn all_perms(n: usize) -> Vec<Vec<usize>> {
        fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
            if cur.len() == used.len() {
                out.push(cur.clone());
                return;
            }
            for i in 0..used.len() {
                if !used[i] {
                    used[i] = true;
                    cur.push(i);
                    rec(cur, used, out);
                    cur.pop();
                    used[i] = false;
                }
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), &mut vec![false; n], &mut out);
        out
    }

    fn brute_inversions(seq: &[usize]) -> usize {
        let mut c = 0;
        for i in 0..seq.len() {
            for j in i + 1..seq.len() {
                if seq[i] > seq[j] {
                    c += 1;
                }
            }
        }
        c
    }

    fn ord(seq: &[usize]) -> TotalOrder {
        TotalOrder::from_sequence(seq.to_vec()).unwrap()
    }

    #[test]
    fn kendall_tau_examples() {
        let a = ord(&[3, 1, 0, 2]);
        assert_eq!(kendall_tau(&a, &a).unwrap(), 0.0);
        assert_eq!(kendall_tau(&a, &a.reversed()).unwrap(), 1.0);
        let a = TotalOrder::from_ranks(&[1, 2, 3]).unwrap();
        let b = TotalOrder::from_ranks(&[2, 1, 3]).unwrap();
        assert!((kendall_tau(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&a, &TotalOrder::identity(4)).is_err());
    }

    #[test]
    fn footrule_examples() {
        let a = ord(&[0, 1, 2]);
        assert_eq!(spearman_footrule(&a, &a).unwrap(), 0);
        assert_eq!(spearman_footrule(&a, &a.reversed()).unwrap(), 4);
        assert!(spearman_footrule(&a, &TotalOrder::identity(2)).is_err());
    }

    #[test]
    fn merge_count_matches_brute_force() {
        for p in all_perms(6) {
            assert_eq!(count_inversions(&p), brute_inversions(&p));
        }
    }

    #[test]
    fn kendall_tau_is_a_metric_up_to_n5() {
        for n in 2..=5 {
            let perms: Vec<TotalOrder> = all_perms(n).iter().map(|p| ord(p)).collect();
            for a in &perms {
                for b in &perms {
                    let ab = discordant_pairs(a, b).unwrap();
                    assert_eq!(ab, discordant_pairs(b, a).unwrap());
                    assert_eq!(ab == 0, a == b);
                    if n <= 4 {
                        for c in &perms {
                            assert!(
                                ab <= discordant_pairs(a, c).unwrap()
                                    + discordant_pairs(c, b).unwrap()
                            );
                        }
                    }
                }
            }
        }
        // n = 5 triangle inequality against a fixed middle set keeps runtime small
        let perms: Vec<TotalOrder> = all_perms(5).iter().map(|p| ord(p)).collect();
        for a in &perms {
            for b in perms.iter().step_by(7) {
                for c in perms.iter().step_by(11) {
                    assert!(
                        discordant_pairs(a, b).unwrap()
                            <= discordant_pairs(a, c).unwrap() + discordant_pairs(c, b).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn footrule_sandwich_exhaustive_up_to_n7() {
        for n in 2..=7 {
            let id = TotalOrder::identity(n);
            // Distances are invariant under common relabeling, so fixing one
            // side at the identity covers every pair.
            for p in all_perms(n) {
                let b = ord(&p);
                let i = discordant_pairs(&id, &b).unwrap();
                let f = spearman_footrule(&id, &b).unwrap();
                // Minimum transpositions: n minus the number of cycles.
                let mut seen = vec![false; n];
                let mut cycles = 0;
                for s in 0..n {
                    if !seen[s] {
                        cycles += 1;
                        let mut x = s;
                        while !seen[x] {
                            seen[x] = true;
                            x = p[x];
                        }
                    }
                }
                let tr = n - cycles;
                assert!(i + tr <= f, "I+T <= F fails for {p:?}");
                assert!(f <= 2 * i, "F <= 2I fails for {p:?}");
            }
        }
    }

    #[test]
    fn mahonian_rows_match_enumeration() {
        let table = build_mahonian(6).unwrap();
        let row3: Vec<u64> = table.row(3).iter().map(|v| v.try_into().unwrap()).collect();
        assert_eq!(row3, vec![1, 2, 2, 1]);
        assert_eq!(table.count(4, 3), BigUint::from(6u32));
        for m in 1..=6 {
            let mut hist = vec![0u64; max_inversions(m) + 1];
            for p in all_perms(m) {
                hist[brute_inversions(&p)] += 1;
            }
            let row: Vec<u64> = table.row(m).iter().map(|v| v.try_into().unwrap()).collect();
            assert_eq!(row, hist, "row {m}");
            assert_eq!(table.count(m, 0), BigUint::one());
            assert!(table.count(m, max_inversions(m) + 1).is_zero());
        }
    }

    #[test]
    fn mahonian_rows_sum_to_factorial() {
        let table = build_mahonian(20).unwrap();
        let mut fact = BigUint::one();
        for m in 1..=20usize {
            fact *= BigUint::from(m);
            let sum: BigUint = table.row(m).iter().sum();
            assert_eq!(sum, fact, "row {m}");
        }
        assert!(build_mahonian(0).is_err());
        assert!(build_mahonian(201).is_err());
    }

    #[test]
    fn distance_rounding() {
        // 0.47 * 45 = 21.15 -> 21
        assert_eq!(DistanceSpec::from_normalized(0.47, 10).unwrap().inversions(), 21);
        // 0.5 * 3 = 1.5 -> 2 (ties away from zero)
        assert_eq!(DistanceSpec::from_normalized(0.5, 3).unwrap().inversions(), 2);
        assert!(DistanceSpec::from_normalized(1.5, 3).is_err());
        assert!(DistanceSpec::from_inversions(7, 4).is_err());
    }

    #[test]
    fn extreme_distances_are_deterministic() {
        let table = build_mahonian(8).unwrap();
        let reference = ord(&[4, 2, 7, 0, 1, 6, 3, 5]);
        let mut rng = seed::rng(3);
        let zero = DistanceSpec::from_normalized(0.0, 8).unwrap();
        assert_eq!(
            sample_order_at_distance(&reference, &zero, &table, &mut rng).unwrap(),
            reference
        );
        let one = DistanceSpec::from_normalized(1.0, 8).unwrap();
        assert_eq!(
            sample_order_at_distance(&reference, &one, &table, &mut rng).unwrap(),
            reference.reversed()
        );
    }

    #[test]
    fn n4_t2_draws_cover_admissible_set() {
        let table = build_mahonian(4).unwrap();
        let spec = DistanceSpec::from_inversions(2, 4).unwrap();
        let mut rng = seed::rng(99);
        let mut hist: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..2000 {
            let p = sample_relative_permutation(&table, &spec, &mut rng).unwrap();
            assert_eq!(brute_inversions(&p), 2);
            *hist.entry(p).or_default() += 1;
        }
        assert_eq!(hist.len(), 5);
    }

    proptest! {
        #[test]
        fn sampled_distance_is_exact(seed_v in any::<u64>(), n in 2usize..12, frac in 0.0f64..=1.0) {
            let table = build_mahonian(n).unwrap();
            let spec = DistanceSpec::from_normalized(frac, n).unwrap();
            let mut rng = seed::rng(seed_v);
            let mut reference: Vec<usize> = (0..n).collect();
            reference.rotate_left(n / 2);
            let reference = ord(&reference);
            let s = sample_order_at_distance(&reference, &spec, &table, &mut rng).unwrap();
            prop_assert_eq!(discordant_pairs(&s, &reference).unwrap(), spec.inversions());
        }
    }
}
