//! Minimum-cost bipartite assignment.
//!
//! Rectangular inputs are padded to square with [`PAD_COST`]. Among all
//! optimal assignments the lexicographically smallest list of `(row, col)`
//! pairs is returned: row 0 takes the smallest column it can while staying
//! optimal, then row 1, and so on.

use crate::error::{Error, Result};

/// Fill value for padding rows or columns of a rectangular problem.
pub const PAD_COST: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Solve `min sum cost[r][c]` over one-to-one assignments of `min(n, m)`
/// pairs. `cost` is row-major with `rows * cols` entries.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Assignment> {
    assert_eq!(cost.len(), rows * cols, "cost matrix size");
    if cost.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("cost entry (NaN)".into()));
    }
    if cost.iter().any(|v| v.is_infinite()) {
        return Err(Error::NonFinite("cost entry (infinite)".into()));
    }
    if rows == 0 || cols == 0 {
        return Ok(Assignment {
            pairs: Vec::new(),
            cost: 0.0,
        });
    }
    let n = rows.max(cols);
    let at = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            cost[r * cols + c]
        } else {
            PAD_COST
        }
    };
    let (row_to_col, u, v) = solve_square(n, &at);
    let real_cost = |assign: &[usize]| -> f64 {
        assign
            .iter()
            .enumerate()
            .filter(|&(r, &c)| r < rows && c < cols)
            .map(|(r, &c)| cost[r * cols + c])
            .sum()
    };
    let scale = cost.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let pot_scale = u.iter().chain(v.iter()).fold(1.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * scale + 1e-12 * pot_scale;

    let refined = lexicographic_refine(n, &row_to_col, |r, c| at(r, c) - u[r] - v[c] <= tol);
    let raw_total = real_cost(&row_to_col);
    let chosen = if real_cost(&refined) <= raw_total + 1e-12 * scale * n as f64 {
        refined
    } else {
        row_to_col
    };
    let pairs: Vec<(usize, usize)> = chosen
        .iter()
        .enumerate()
        .filter(|&(r, &c)| r < rows && c < cols)
        .map(|(r, &c)| (r, c))
        .collect();
    let total = pairs.iter().map(|&(r, c)| cost[r * cols + c]).sum();
    Ok(Assignment { pairs, cost: total })
}

/// Shortest augmenting path with row/column potentials. Returns the
/// row-to-column map and the potentials (reduced cost `c - u - v >= 0`,
/// zero on the returned assignment).
fn solve_square(n: usize, at: &impl Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internals; index 0 is the virtual root column.
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
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Every optimal assignment is a perfect matching on the tight edges of an
/// optimal dual. Walk rows in order and give each the smallest tight column
/// that still admits a perfect matching of the remaining rows.
fn lexicographic_refine(
    n: usize,
    start: &[usize],
    tight: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let mut row_to_col = start.to_vec();
    let mut col_to_row = vec![0; n];
    for (r, &c) in row_to_col.iter().enumerate() {
        col_to_row[c] = r;
    }
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| {
            (0..n)
                .filter(|&c| tight(r, c) || row_to_col[r] == c)
                .collect()
        })
        .collect();
    let mut col_fixed = vec![false; n];
    for r in 0..n {
        for &c in &adj[r] {
            if col_fixed[c] {
                continue;
            }
            if row_to_col[r] == c {
                break;
            }
            // Rematch: r takes c; r2 (owner of c) must reach the freed column c2.
            let r2 = col_to_row[c];
            let c2 = row_to_col[r];
            if let Some(path) =
                augmenting_path(r2, c2, c, &adj, &row_to_col, &col_to_row, &col_fixed)
            {
                // path: alternating list of (row, new col)
                for &(pr, pc) in &path {
                    row_to_col[pr] = pc;
                    col_to_row[pc] = pr;
                }
                row_to_col[r] = c;
                col_to_row[c] = r;
                break;
            }
        }
        col_fixed[row_to_col[r]] = true;
    }
    row_to_col
}

/// BFS from row `start` to free column `target` over unfixed tight columns,
/// never using `banned`. Returns the row reassignments along the path.
fn augmenting_path(
    start: usize,
    target: usize,
    banned: usize,
    adj: &[Vec<usize>],
    row_to_col: &[usize],
    col_to_row: &[usize],
    col_fixed: &[bool],
) -> Option<Vec<(usize, usize)>> {
    let n = adj.len();
    let mut prev_row_of_col: Vec<Option<usize>> = vec![None; n];
    let mut queue = std::collections::VecDeque::from([start]);
    let mut seen_row = vec![false; n];
    seen_row[start] = true;
    while let Some(r) = queue.pop_front() {
        for &c in &adj[r] {
            if c == banned || col_fixed[c] || prev_row_of_col[c].is_some() || row_to_col[r] == c {
                continue;
            }
            prev_row_of_col[c] = Some(r);
            if c == target {
                let mut path = Vec::new();
                let mut col = c;
                loop {
                    let row = prev_row_of_col[col].expect("path");
                    path.push((row, col));
                    if row == start {
                        return Some(path);
                    }
                    col = row_to_col[row];
                }
            }
            let next = col_to_row[c];
            if !seen_row[next] {
                seen_row[next] = true;
                queue.push_back(next);
            }
        }
    }
    None
}
