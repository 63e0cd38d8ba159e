//! Rectangular linear sum assignment (Hungarian method with potentials).

/// Minimum-cost assignment on a dense `rows × cols` cost matrix (row-major).
///
/// Every row of the smaller side is assigned. Returns, per row, the assigned
/// column (or `None` when `rows > cols` and the row was left out).
pub fn linear_sum_assignment(cost: &[f64], rows: usize, cols: usize) -> Vec<Option<usize>> {
    assert_eq!(cost.len(), rows * cols, "cost matrix shape");
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        let col_of_row = hungarian(rows, cols, |i, j| cost[i * cols + j]);
        col_of_row.into_iter().map(Some).collect()
    } else {
        let row_of_col = hungarian(cols, rows, |j, i| cost[i * cols + j]);
        let mut out = vec![None; rows];
        for (j, i) in row_of_col.into_iter().enumerate() {
            out[i] = Some(j);
        }
        out
    }
}

/// Maximum-weight matching where only positive weights are worth taking.
///
/// `weight(r, c)` returns `None` for pairs that may not be matched. Returns
/// matched `(row, col)` pairs in row order.
pub fn max_weight_matching<F>(rows: usize, cols: usize, weight: F) -> Vec<(usize, usize)>
where
    F: Fn(usize, usize) -> Option<f64>,
{
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if let Some(v) = weight(r, c) {
                if v > 0.0 {
                    w[r * cols + c] = v;
                }
            }
        }
    }
    let cost: Vec<f64> = w.iter().map(|v| -v).collect();
    linear_sum_assignment(&cost, rows, cols)
        .into_iter()
        .enumerate()
        .filter_map(|(r, c)| c.filter(|&c| w[r * cols + c] > 0.0).map(|c| (r, c)))
        .collect()
}

/// Core O(n²m) routine for `n ≤ m`; returns the column of each row.
fn hungarian(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: 1-based row matched to column j (0 = free); column 0 is a sentinel
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best total over all partial injections rows -> cols, by recursion.
    fn brute_best(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
        if row == w.len() {
            return 0.0;
        }
        let mut best = brute_best(w, row + 1, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(w[row][c] + brute_best(w, row + 1, used));
                used[c] = false;
            }
        }
        best
    }

    #[test]
    fn square_minimum() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = linear_sum_assignment(&cost, 3, 3);
        assert_eq!(a, vec![Some(1), Some(0), Some(2)]);
    }

    #[test]
    fn rectangular_both_ways() {
        let cost = [1.0, 9.0, 9.0, 2.0];
        assert_eq!(linear_sum_assignment(&cost[..2], 1, 2), vec![Some(0)]);
        assert_eq!(linear_sum_assignment(&[5.0, 1.0], 2, 1), vec![None, Some(0)]);
        assert!(linear_sum_assignment(&[], 0, 3).is_empty());
        assert_eq!(linear_sum_assignment(&[], 2, 0), vec![None, None]);
    }

    #[test]
    fn max_weight_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let rows = rng.gen_range(0..6);
            let cols = rng.gen_range(0..6);
            let w: Vec<Vec<f64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-1.0..2.0)).collect())
                .collect();
            let clipped: Vec<Vec<f64>> = w
                .iter()
                .map(|r| r.iter().map(|v: &f64| v.max(0.0)).collect())
                .collect();
            let expect = brute_best(&clipped, 0, &mut vec![false; cols]);
            let got = max_weight_matching(rows, cols, |r, c| Some(w[r][c]));
            let total: f64 = got.iter().map(|&(r, c)| w[r][c]).sum();
            assert!((total - expect).abs() < 1e-9, "{total} vs {expect}");
            assert!(got.iter().all(|&(r, c)| w[r][c] > 0.0));
        }
    }

    #[test]
    fn forbidden_pairs_are_skipped() {
        let got = max_weight_matching(2, 2, |r, c| if r == c { None } else { Some(1.0) });
        assert_eq!(got, vec![(0, 1), (1, 0)]);
    }
}
