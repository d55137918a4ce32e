//! Clustering accuracy under the best one-to-one label mapping.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Cluster or class ids, one per data point.
pub type LabelVector = Vec<usize>;

/// Optimal assignment of a square cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `columns[row]` is the column matched to `row`.
    pub columns: Vec<usize>,
    pub cost: f64,
}

impl Assignment {
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.columns.iter().copied().enumerate().collect()
    }
}

/// Above this size the lexicographic tie-break pass is skipped and the
/// first optimum found by the potential method is returned.
const LEX_REFINE_LIMIT: usize = 64;

/// Minimum-cost perfect matching (Kuhn–Munkres with potentials, O(n³)).
///
/// Among optimal matchings the lexicographically smallest column sequence
/// is returned.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Assignment> {
    if !cost.is_square() {
        return Err(Error::Argument(format!(
            "cost matrix must be square, got {}x{}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Argument("cost matrix has non-finite entries".into()));
    }
    let n = cost.nrows();
    if n == 0 {
        return Ok(Assignment {
            columns: Vec::new(),
            cost: 0.0,
        });
    }

    let (columns, u, v) = shortest_augmenting_paths(cost);
    let total = |cols: &[usize]| cols.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>();
    let best = total(&columns);

    if n <= LEX_REFINE_LIMIT {
        // Every optimal matching uses only edges that are tight under the
        // optimal dual (u, v); pick the lexicographically first one.
        let scale = 1.0 + cost.amax();
        let eps = 1e-9 * scale;
        let tight = DMatrix::from_fn(n, n, |i, j| cost[(i, j)] - u[i] - v[j] <= eps);
        if let Some(lex) = lexicographic_matching(&tight) {
            let c = total(&lex);
            if c <= best + eps * n as f64 {
                return Ok(Assignment { columns: lex, cost: c });
            }
        }
    }
    Ok(Assignment { columns, cost: best })
}

/// Returns the row-to-column matching and the row/column potentials.
fn shortest_augmenting_paths(cost: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = cost.nrows();
    // 1-based arrays with a virtual column 0.
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
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
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
    let mut columns = vec![0usize; n];
    for j in 1..=n {
        columns[p[j] - 1] = j - 1;
    }
    (columns, u[1..].to_vec(), v[1..].to_vec())
}

/// Lexicographically smallest perfect matching of a bipartite graph given
/// as an adjacency matrix, if one exists.
fn lexicographic_matching(adj: &DMatrix<bool>) -> Option<Vec<usize>> {
    let n = adj.nrows();
    let mut fixed = Vec::with_capacity(n);
    let mut col_used = vec![false; n];
    for i in 0..n {
        let mut chosen = None;
        for j in 0..n {
            if !adj[(i, j)] || col_used[j] {
                continue;
            }
            col_used[j] = true;
            if has_perfect_matching(adj, i + 1, &col_used) {
                chosen = Some(j);
                break;
            }
            col_used[j] = false;
        }
        fixed.push(chosen?);
    }
    Some(fixed)
}

/// Can rows `first_row..n` be matched into the unused columns?
fn has_perfect_matching(adj: &DMatrix<bool>, first_row: usize, col_used: &[bool]) -> bool {
    let n = adj.nrows();
    let mut owner: Vec<Option<usize>> = vec![None; n];

    fn augment(
        row: usize,
        adj: &DMatrix<bool>,
        col_used: &[bool],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for j in 0..adj.ncols() {
            if adj[(row, j)] && !col_used[j] && !seen[j] {
                seen[j] = true;
                let free = match owner[j] {
                    None => true,
                    Some(r) => augment(r, adj, col_used, owner, seen),
                };
                if free {
                    owner[j] = Some(row);
                    return true;
                }
            }
        }
        false
    }

    (first_row..n).all(|row| {
        let mut seen = vec![false; n];
        augment(row, adj, col_used, &mut owner, &mut seen)
    })
}

/// Fraction of points whose predicted cluster maps to their true class
/// under the best one-to-one mapping. Label alphabets of different sizes
/// are padded to a square contingency table.
pub fn clustering_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Argument(format!(
            "label vectors differ in length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::Argument("cannot score an empty labelling".into()));
    }
    let k = y_true.iter().chain(y_pred).max().map_or(0, |&m| m + 1);
    let mut counts = DMatrix::<f64>::zeros(k, k);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[(p, t)] += 1.0;
    }
    let assignment = hungarian(&(-&counts))?;
    let matched: f64 = -assignment.cost;
    Ok(matched / y_true.len() as f64)
}
