//! Rectangular linear sum assignment by shortest augmenting paths
//! (Jonker-Volgenant with Crouse's rectangular extension).

/// Row `i` is assigned to column `col_for_row[i]`; with more rows than
/// columns some rows stay unassigned (`None`).
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub col_for_row: Vec<Option<usize>>,
    pub total_cost: f64,
}

/// Minimum-cost one-to-one assignment for a row-major `n_rows x n_cols`
/// cost matrix of finite values. `min(n_rows, n_cols)` pairs are produced.
pub fn linear_sum_assignment(cost: &[f64], n_rows: usize, n_cols: usize) -> Assignment {
    assert_eq!(cost.len(), n_rows * n_cols, "cost matrix has wrong length");
    assert!(cost.iter().all(|c| c.is_finite()), "costs must be finite");
    if n_rows == 0 || n_cols == 0 {
        return Assignment {
            col_for_row: vec![None; n_rows],
            total_cost: 0.0,
        };
    }
    if n_rows > n_cols {
        let mut transposed = vec![0.0; cost.len()];
        for i in 0..n_rows {
            for j in 0..n_cols {
                transposed[j * n_rows + i] = cost[i * n_cols + j];
            }
        }
        let t = solve(&transposed, n_cols, n_rows);
        let mut col_for_row = vec![None; n_rows];
        for (j, i) in t.into_iter().enumerate() {
            col_for_row[i] = Some(j);
        }
        return finish(cost, n_cols, col_for_row);
    }
    let rows = solve(cost, n_rows, n_cols);
    finish(cost, n_cols, rows.into_iter().map(Some).collect())
}

fn finish(cost: &[f64], n_cols: usize, col_for_row: Vec<Option<usize>>) -> Assignment {
    let total_cost = col_for_row
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|j| cost[i * n_cols + j]))
        .sum();
    Assignment {
        col_for_row,
        total_cost,
    }
}

/// Requires `nr <= nc`; returns the column of every row.
fn solve(cost: &[f64], nr: usize, nc: usize) -> Vec<usize> {
    let mut u = vec![0.0; nr];
    let mut v = vec![0.0; nc];
    let mut shortest = vec![f64::INFINITY; nc];
    let mut path = vec![usize::MAX; nc];
    let mut col4row = vec![usize::MAX; nr];
    let mut row4col = vec![usize::MAX; nc];
    let mut visited_rows = vec![false; nr];
    let mut visited_cols = vec![false; nc];
    let mut remaining = vec![0usize; nc];

    for cur_row in 0..nr {
        // Dijkstra-like search for the cheapest augmenting path from cur_row.
        let mut min_val = 0.0;
        let mut n_remaining = nc;
        for (it, r) in remaining.iter_mut().enumerate() {
            *r = nc - it - 1;
        }
        visited_rows.fill(false);
        visited_cols.fill(false);
        shortest.fill(f64::INFINITY);

        let mut i = cur_row;
        let sink = loop {
            let mut index = usize::MAX;
            let mut lowest = f64::INFINITY;
            visited_rows[i] = true;
            for (it, &j) in remaining[..n_remaining].iter().enumerate() {
                let reduced = min_val + cost[i * nc + j] - u[i] - v[j];
                if reduced < shortest[j] {
                    path[j] = i;
                    shortest[j] = reduced;
                }
                if shortest[j] < lowest || (shortest[j] == lowest && row4col[j] == usize::MAX) {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            let j = remaining[index];
            visited_cols[j] = true;
            n_remaining -= 1;
            remaining[index] = remaining[n_remaining];
            if row4col[j] == usize::MAX {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for r in 0..nr {
            if visited_rows[r] && r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for c in 0..nc {
            if visited_cols[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}
