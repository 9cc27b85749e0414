//! Maximum-profit assignment.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Row-to-column assignment maximizing total profit. Rectangular inputs
/// are padded with zero profit; rows left on padding map to `None`. Among
/// optimal assignments the lexicographically smallest (by row order) wins.
pub fn hungarian(profit: &Matrix) -> Result<Vec<Option<usize>>> {
    let (r, c) = profit.shape();
    if r == 0 || c == 0 {
        return Err(Error::invalid("assignment problem is empty"));
    }
    if !profit.all_finite() {
        return Err(Error::invalid("assignment problem has non-finite entries"));
    }
    let n = r.max(c);
    let mut cost = vec![vec![0.0; n]; n];
    for i in 0..r {
        for j in 0..c {
            cost[i][j] = -profit.get(i, j);
        }
    }
    let (assign, u, v) = min_cost(&cost);
    let scale = cost.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-12 * scale;
    let tight: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| cost[i][j] - u[i] - v[j] <= tol).collect()).collect();
    let lex = lexicographic(&tight, assign.clone());
    let total = |a: &[usize]| -> f64 { a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum() };
    let chosen = if total(&lex) <= total(&assign) { lex } else { assign };
    Ok((0..r).map(|i| (chosen[i] < c).then_some(chosen[i])).collect())
}

/// Shortest augmenting path method with potentials on a square matrix.
/// Returns the assignment and the dual potentials.
fn min_cost(a: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

/// Lexicographically smallest perfect matching inside the tight-edge graph,
/// starting from a perfect matching `col_of` that uses only tight edges.
fn lexicographic(tight: &[Vec<bool>], mut col_of: Vec<usize>) -> Vec<usize> {
    let n = tight.len();
    let mut row_of = vec![0; n];
    for (i, &j) in col_of.iter().enumerate() {
        row_of[j] = i;
    }
    for i in 0..n {
        for j in 0..n {
            if !tight[i][j] {
                continue;
            }
            if col_of[i] == j {
                break;
            }
            let r = row_of[j];
            if r < i {
                continue;
            }
            let (save_col, save_row) = (col_of.clone(), row_of.clone());
            let freed = col_of[i];
            col_of[i] = j;
            row_of[j] = i;
            let mut seen = vec![false; n];
            if augment(r, i, freed, tight, &mut col_of, &mut row_of, &mut seen) {
                break;
            }
            col_of = save_col;
            row_of = save_row;
        }
    }
    col_of
}

/// Finds a new column for `row` among columns not owned by rows `<= fixed`,
/// ending at the free column `free`.
fn augment(
    row: usize,
    fixed: usize,
    free: usize,
    tight: &[Vec<bool>],
    col_of: &mut [usize],
    row_of: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for c in 0..tight.len() {
        if !tight[row][c] || seen[c] {
            continue;
        }
        seen[c] = true;
        if c == free {
            col_of[row] = c;
            row_of[c] = row;
            return true;
        }
        let other = row_of[c];
        if other <= fixed || other == row {
            continue;
        }
        if augment(other, fixed, free, tight, col_of, row_of, seen) {
            col_of[row] = c;
            row_of[c] = row;
            return true;
        }
    }
    false
}
