//! Optimal linear assignment with gating.
//!
//! Gated pairs are marked forbidden rather than given a sentinel cost. The
//! solver pads the matrix to a square and minimizes the lexicographic pair
//! (number of forbidden or padding pairs, total cost), which yields a
//! maximum-cardinality assignment over the feasible pairs with minimal
//! cost among those. The Hungarian method runs directly on that ordered
//! group. Among equal-cost optima the lexicographically smallest pair list
//! is selected by a greedy pass over the equality subgraph of the optimal
//! dual potentials.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Sub, SubAssign};

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    costs: Vec<f64>,
    forbidden: Vec<bool>,
}

impl CostMatrix {
    /// Row-major costs. Non-finite entries are forbidden.
    pub fn new(rows: usize, cols: usize, costs: Vec<f64>) -> Self {
        assert_eq!(costs.len(), rows * cols, "cost matrix shape mismatch");
        let forbidden = costs.iter().map(|c| !c.is_finite()).collect();
        Self { rows, cols, costs, forbidden }
    }

    /// Costs above `gate` are forbidden.
    pub fn gated(rows: usize, cols: usize, costs: Vec<f64>, gate: f64) -> Self {
        let mut m = Self::new(rows, cols, costs);
        for (f, c) in m.forbidden.iter_mut().zip(&m.costs) {
            *f |= *c > gate;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut costs = Vec::with_capacity(rows * cols);
        let mut forbidden = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                match f(r, c) {
                    Some(v) if v.is_finite() => {
                        costs.push(v);
                        forbidden.push(false);
                    }
                    _ => {
                        costs.push(0.0);
                        forbidden.push(true);
                    }
                }
            }
        }
        Self { rows, cols, costs, forbidden }
    }

    pub fn forbid(&mut self, row: usize, col: usize) {
        self.forbidden[row * self.cols + col] = true;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cost(&self, row: usize, col: usize) -> f64 {
        self.costs[row * self.cols + col]
    }

    pub fn is_forbidden(&self, row: usize, col: usize) -> bool {
        self.forbidden[row * self.cols + col]
    }

    pub fn transpose(&self) -> Self {
        let mut costs = Vec::with_capacity(self.costs.len());
        let mut forbidden = Vec::with_capacity(self.costs.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                costs.push(self.cost(r, c));
                forbidden.push(self.is_forbidden(r, c));
            }
        }
        Self { rows: self.cols, cols: self.rows, costs, forbidden }
    }

    fn feasible(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && !self.is_forbidden(row, col)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

/// Cost in the ordered group ℤ × ℝ, compared lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lex {
    count: i64,
    cost: f64,
}

impl Lex {
    const ZERO: Lex = Lex { count: 0, cost: 0.0 };
    const INF: Lex = Lex { count: i64::MAX / 4, cost: 0.0 };
}

impl PartialOrd for Lex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.count.cmp(&other.count).then(self.cost.total_cmp(&other.cost)))
    }
}

impl Add for Lex {
    type Output = Lex;
    fn add(self, o: Lex) -> Lex {
        Lex { count: self.count + o.count, cost: self.cost + o.cost }
    }
}

impl Sub for Lex {
    type Output = Lex;
    fn sub(self, o: Lex) -> Lex {
        Lex { count: self.count - o.count, cost: self.cost - o.cost }
    }
}

impl AddAssign for Lex {
    fn add_assign(&mut self, o: Lex) {
        *self = *self + o;
    }
}

impl SubAssign for Lex {
    fn sub_assign(&mut self, o: Lex) {
        *self = *self - o;
    }
}

/// Solves the assignment problem. See the module docs for the objective.
pub fn hungarian_assign(m: &CostMatrix) -> Assignment {
    let n = m.rows.max(m.cols);
    if m.rows == 0 || m.cols == 0 {
        return Assignment::default();
    }
    let entry = |r: usize, c: usize| -> Lex {
        if m.feasible(r, c) {
            Lex { count: 0, cost: m.cost(r, c) }
        } else {
            Lex { count: 1, cost: 0.0 }
        }
    };

    // Shortest augmenting path Hungarian method, 1-based with a virtual
    // column 0.
    let mut u = vec![Lex::ZERO; n + 1];
    let mut v = vec![Lex::ZERO; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![Lex::INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = Lex::INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = entry(i0 - 1, j - 1) - u[i0] - v[j];
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

    let mut row_to_col = vec![0usize; n];
    let mut col_to_row = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
        col_to_row[j - 1] = p[j] - 1;
    }

    let scale = m
        .costs
        .iter()
        .zip(&m.forbidden)
        .filter(|(_, f)| !**f)
        .fold(0.0f64, |acc, (c, _)| acc.max(c.abs()));
    let tol = 1e-9 * (1.0 + scale) * n as f64;
    let tight = |r: usize, c: usize| -> bool {
        let red = entry(r, c) - u[r + 1] - v[c + 1];
        red.count == 0 && red.cost.abs() <= tol
    };
    lexicographic_refine(m, n, &tight, &mut row_to_col, &mut col_to_row);

    let mut pairs = Vec::new();
    let mut total_cost = 0.0;
    for (r, &c) in row_to_col.iter().enumerate() {
        if m.feasible(r, c) {
            pairs.push((r, c));
            total_cost += m.cost(r, c);
        }
    }
    Assignment { pairs, total_cost }
}

/// Rewrites an optimal perfect matching of the padded square into the one
/// whose real pair list is lexicographically smallest, moving only along
/// tight (zero reduced cost) edges so optimality is preserved.
fn lexicographic_refine(
    m: &CostMatrix,
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
) {
    let mut row_fixed = vec![false; n];
    let mut col_fixed = vec![false; n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&c| m.feasible(i, c)).collect();
        order.extend((0..n).filter(|&c| !m.feasible(i, c)));
        for j in order {
            if col_fixed[j] || !tight(i, j) {
                continue;
            }
            if row_to_col[i] == j {
                break;
            }
            // Swap (i, j) in, leaving the former partner row of j and the
            // former column of i free, then try to reconnect them.
            let other_row = col_to_row[j];
            let freed_col = row_to_col[i];
            let saved_rows = row_to_col.to_vec();
            let saved_cols = col_to_row.to_vec();
            row_to_col[i] = j;
            col_to_row[j] = i;
            row_fixed[i] = true;
            col_fixed[j] = true;
            let mut visited = vec![false; n];
            if augment(other_row, freed_col, n, tight, &row_fixed, &col_fixed, &mut visited, row_to_col, col_to_row) {
                row_fixed[i] = false;
                col_fixed[j] = false;
                break;
            }
            row_fixed[i] = false;
            col_fixed[j] = false;
            row_to_col.copy_from_slice(&saved_rows);
            col_to_row.copy_from_slice(&saved_cols);
        }
        // a row left on a padding column stays movable so later rows can
        // take that column
        if m.feasible(i, row_to_col[i]) {
            row_fixed[i] = true;
            col_fixed[row_to_col[i]] = true;
        }
    }
}

/// Alternating-path search from free `row` to the single free column
/// `target` over tight edges among unfixed rows and columns.
#[allow(clippy::too_many_arguments)]
fn augment(
    row: usize,
    target: usize,
    n: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    row_fixed: &[bool],
    col_fixed: &[bool],
    visited: &mut [bool],
    row_to_col: &mut [usize],
    col_to_row: &mut [usize],
) -> bool {
    for c in 0..n {
        if visited[c] || col_fixed[c] || !tight(row, c) {
            continue;
        }
        visited[c] = true;
        if c == target {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
        let next = col_to_row[c];
        if row_fixed[next] {
            continue;
        }
        if augment(next, target, n, tight, row_fixed, col_fixed, visited, row_to_col, col_to_row) {
            row_to_col[row] = c;
            col_to_row[c] = row;
            return true;
        }
    }
    false
}
