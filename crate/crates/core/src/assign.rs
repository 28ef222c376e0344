//! Minimum-cost assignment on a rectangular cost matrix (Hungarian method with
//! potentials, O(n²m)).

/// Returns, for each row, the assigned column (`None` only when there are more
/// rows than columns) and the total cost.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let rows = cost.len();
    if rows == 0 {
        return (Vec::new(), 0.0);
    }
    let cols = cost[0].len();
    let transpose = rows > cols;
    let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
    let at = |i: usize, j: usize| if transpose { cost[j][i] } else { cost[i][j] };

    // 1-based arrays, index 0 is the sentinel column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
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

    let mut out = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=m {
        if p[j] != 0 {
            let (r, c) = if transpose { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) };
            out[r] = Some(c);
            total += cost[r][c];
        }
    }
    (out, total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], i: usize, used: &mut Vec<bool>) -> f64 {
            if i == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[i][j] + rec(cost, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost[0].len()])
    }

    #[test]
    fn square_known() {
        let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let (a, t) = min_cost_assignment(&c);
        assert_eq!(t, 5.0);
        assert_eq!(a, vec![Some(1), Some(0), Some(2)]);
    }

    #[test]
    fn rectangular_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let r = rng.random_range(1..5);
            let c = rng.random_range(r..7);
            let cost: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.random::<f64>()).collect()).collect();
            let (a, t) = min_cost_assignment(&cost);
            assert!((t - brute(&cost)).abs() < 1e-12);
            let mut seen: Vec<usize> = a.iter().map(|x| x.unwrap()).collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), r);
        }
    }

    #[test]
    fn more_rows_than_columns() {
        let c = vec![vec![1.0], vec![0.5], vec![2.0]];
        let (a, t) = min_cost_assignment(&c);
        assert_eq!(a, vec![None, Some(0), None]);
        assert_eq!(t, 0.5);
    }
}
