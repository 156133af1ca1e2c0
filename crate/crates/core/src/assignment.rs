//! Minimum-cost perfect assignment on a square integer cost matrix
//! (Hungarian method with potentials, shortest augmenting paths, O(n³)).

/// Returns `assign[row] = column` minimizing `Σ cost[row][assign[row]]`.
///
/// Rows are inserted in ascending order and columns scanned in ascending
/// order with strict improvement, so the optimum chosen among ties is
/// deterministic.
pub(crate) fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-based internals; column 0 is a virtual root.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let i0 = matched_row[col0];
            let mut delta = INF;
            let mut col1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = col0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        col1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[matched_row[j] - 1] = j - 1;
    }
    assign
}
