//! Optimal one-to-one assignment (Hungarian method with potentials).

/// Maximum-weight matching on a dense `rows × cols` weight matrix. Returns
/// the total weight and the matched `(row, col)` pairs; every row (or every
/// column, whichever side is smaller) is matched.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> (f64, Vec<(usize, usize)>) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, Vec::new());
    }
    let transposed = rows > cols;
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let cost = |i: usize, j: usize| {
        if transposed {
            -weights[j][i]
        } else {
            -weights[i][j]
        }
    };
    let col_of_row = min_cost(n, m, cost);
    let mut pairs: Vec<(usize, usize)> = col_of_row
        .iter()
        .enumerate()
        .map(|(i, &j)| if transposed { (j, i) } else { (i, j) })
        .collect();
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| weights[i][j]).sum();
    (total, pairs)
}

/// Minimum-cost assignment of `n ≤ m` rows to distinct columns.
fn min_cost(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based potentials; column 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}
