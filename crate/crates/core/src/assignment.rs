//! Maximum-weight linear assignment.
//!
//! [`solve_lap_max`] runs a dense shortest-augmenting-path solver (the
//! Hungarian / Jonker-Volgenant family) on negated weights, then rewrites the
//! optimum into the lexicographically smallest co-optimal permutation so that
//! output never depends on solver internals. [`brute_force_lap`] enumerates
//! permutations and is the test oracle.
//!
//! Forbidden entries are tracked explicitly and never enter arithmetic.

use crate::error::{Error, Result};

/// Entry of a weight matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Allowed(f64),
    Forbidden,
}

pub const FORBIDDEN: Weight = Weight::Forbidden;

impl From<f64> for Weight {
    fn from(v: f64) -> Self {
        Weight::Allowed(v)
    }
}

/// Dense square weight matrix with forbidden entries.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    values: Vec<f64>,
    allowed: Vec<bool>,
}

impl WeightMatrix {
    /// Build from row-major entries. Every row and every column must keep at
    /// least one allowed entry, and allowed entries must be finite.
    pub fn new(n: usize, entries: Vec<Weight>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::ShapeMismatch {
                expected: n * n,
                got: entries.len(),
            });
        }
        let mut values = vec![0.0; n * n];
        let mut allowed = vec![false; n * n];
        for (k, e) in entries.into_iter().enumerate() {
            if let Weight::Allowed(v) = e {
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "weight ({}, {}) is not finite: {v}",
                        k / n,
                        k % n
                    )));
                }
                values[k] = v;
                allowed[k] = true;
            }
        }
        let m = WeightMatrix { n, values, allowed };
        m.check_lines()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<Weight>]) -> Result<Self> {
        let n = rows.len();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    row,
                    cols: r.len(),
                });
            }
        }
        Self::new(n, rows.concat())
    }

    /// All entries allowed.
    pub fn dense(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Weight>> = rows
            .iter()
            .map(|r| r.iter().copied().map(Weight::Allowed).collect())
            .collect();
        Self::from_rows(&rows)
    }

    fn check_lines(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if !(0..n).any(|j| self.allowed[i * n + j]) {
                return Err(Error::EmptyLine(i));
            }
            if !(0..n).any(|r| self.allowed[r * n + i]) {
                return Err(Error::EmptyLine(i));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Weight {
        let k = i * self.n + j;
        if self.allowed[k] {
            Weight::Allowed(self.values[k])
        } else {
            Weight::Forbidden
        }
    }

    #[inline]
    pub fn is_forbidden(&self, i: usize, j: usize) -> bool {
        !self.allowed[i * self.n + j]
    }

    /// Sum of the selected entries in row order, or `None` if the mapping
    /// touches a forbidden entry or is not a permutation.
    pub fn total(&self, mapping: &[usize]) -> Option<f64> {
        if !is_permutation(mapping, self.n) {
            return None;
        }
        let mut total = 0.0;
        for (i, &j) in mapping.iter().enumerate() {
            match self.get(i, j) {
                Weight::Allowed(v) => total += v,
                Weight::Forbidden => return None,
            }
        }
        Some(total)
    }

    /// Same matrix with `c` added to every allowed entry of row `i`.
    pub fn shift_row(&self, i: usize, c: f64) -> WeightMatrix {
        let mut out = self.clone();
        for j in 0..self.n {
            out.values[i * self.n + j] += c;
        }
        out
    }
}

fn is_permutation(mapping: &[usize], n: usize) -> bool {
    if mapping.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    mapping.iter().all(|&j| j < n && !std::mem::replace(&mut seen[j], true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `mapping[i]` is the column assigned to row `i`.
    pub mapping: Vec<usize>,
    pub total_weight: f64,
}

/// Maximum-weight perfect matching; among co-optimal matchings the
/// lexicographically smallest mapping is returned.
pub fn solve_lap_max(w: &WeightMatrix) -> Result<Assignment> {
    let n = w.n;
    if n == 0 {
        return Ok(Assignment {
            mapping: Vec::new(),
            total_weight: 0.0,
        });
    }
    let cost: Vec<f64> = w
        .values
        .iter()
        .zip(&w.allowed)
        .map(|(&v, &ok)| if ok { -v } else { f64::INFINITY })
        .collect();

    let (mut mapping, u, v) = shortest_augmenting_path(n, &cost)?;

    let scale = w
        .values
        .iter()
        .zip(&w.allowed)
        .filter(|(_, &ok)| ok)
        .fold(1.0f64, |m, (&x, _)| m.max(x.abs()));
    let tol = 1e-9 * scale;
    lexicographic_refine(n, &cost, &u, &v, tol, &mut mapping);

    let total_weight = w.total(&mapping).ok_or(Error::NoPerfectMatching)?;
    Ok(Assignment {
        mapping,
        total_weight,
    })
}

/// Minimum-cost assignment by successive shortest augmenting paths with dual
/// potentials. Returns the row-to-column mapping and the duals `u` (rows) and
/// `v` (columns), which satisfy `cost[i][j] - u[i] - v[j] >= 0` up to rounding
/// and equality on matched pairs.
fn shortest_augmenting_path(n: usize, cost: &[f64]) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    const NONE: usize = usize::MAX;
    let inf = f64::INFINITY;
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    // row assigned to each column
    let mut owner = vec![NONE; n];
    let mut way = vec![NONE; n];
    let mut minv = vec![inf; n];
    let mut used = vec![false; n];

    for row in 0..n {
        minv.fill(inf);
        used.fill(false);
        // the free row is the virtual column's owner
        let mut cur_row = row;
        let mut cur_col = NONE;
        let mut visited_cols: Vec<usize> = Vec::new();
        let mut visited_rows: Vec<usize> = vec![row];
        loop {
            let base = cur_row * n;
            let ui = u[cur_row];
            let mut delta = inf;
            let mut next = NONE;
            for j in 0..n {
                if used[j] {
                    continue;
                }
                let reduced = cost[base + j] - ui - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = cur_col;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    next = j;
                }
            }
            if next == NONE || !delta.is_finite() {
                return Err(Error::NoPerfectMatching);
            }
            for &r in &visited_rows {
                u[r] += delta;
            }
            for &j in &visited_cols {
                v[j] -= delta;
            }
            for j in 0..n {
                if !used[j] {
                    minv[j] -= delta;
                }
            }
            used[next] = true;
            visited_cols.push(next);
            cur_col = next;
            if owner[next] == NONE {
                break;
            }
            cur_row = owner[next];
            visited_rows.push(cur_row);
        }
        // augment along the alternating path back to the free row
        let mut col = cur_col;
        loop {
            let prev = way[col];
            owner[col] = if prev == NONE { row } else { owner[prev] };
            if prev == NONE {
                break;
            }
            col = prev;
        }
    }

    let mut mapping = vec![0; n];
    for (j, &r) in owner.iter().enumerate() {
        mapping[r] = j;
    }
    Ok((mapping, u, v))
}

/// Rewrite an optimal mapping into the lexicographically smallest perfect
/// matching of the tight subgraph (reduced cost within `tol`), which is the
/// set of co-optimal matchings.
///
/// Rows are fixed in order. For row `i` the candidate columns are tight,
/// smaller than its current column, and held by a later row. A candidate is
/// reachable if an alternating cycle through later rows returns the current
/// column; a reverse search from that column finds all such candidates.
fn lexicographic_refine(
    n: usize,
    cost: &[f64],
    u: &[f64],
    v: &[f64],
    tol: f64,
    mapping: &mut [usize],
) {
    let mut row_tight: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut col_tight: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            let c = cost[i * n + j];
            if c.is_finite() && c - u[i] - v[j] <= tol {
                row_tight[i].push(j);
                col_tight[j].push(i);
            }
        }
    }

    let mut owner = vec![0usize; n];
    for (i, &j) in mapping.iter().enumerate() {
        owner[j] = i;
    }
    // next[c]: the column the owner of vacated column c moves to
    let mut next = vec![0usize; n];
    let mut stamp = vec![0usize; n];
    let mut queue = Vec::new();

    for i in 0..n {
        let target = mapping[i];
        let candidates: Vec<usize> = row_tight[i]
            .iter()
            .copied()
            .take_while(|&j| j < target)
            .filter(|&j| owner[j] > i)
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let mark = i + 1;
        stamp[target] = mark;
        queue.clear();
        queue.push(target);
        let mut head = 0;
        'search: while head < queue.len() {
            let c = queue[head];
            head += 1;
            for &r in &col_tight[c] {
                if r <= i {
                    continue;
                }
                let held = mapping[r];
                if stamp[held] != mark {
                    stamp[held] = mark;
                    next[held] = c;
                    queue.push(held);
                    if held == candidates[0] {
                        break 'search;
                    }
                }
            }
        }
        let Some(&chosen) = candidates.iter().find(|&&j| stamp[j] == mark) else {
            continue;
        };
        let mut mover = i;
        let mut col = chosen;
        loop {
            let displaced = owner[col];
            mapping[mover] = col;
            owner[col] = mover;
            if displaced == i {
                break;
            }
            mover = displaced;
            col = next[col];
        }
    }
}

pub const ORACLE_MAX_N: usize = 10;

/// Exhaustive maximum over all permutations avoiding forbidden entries.
/// Permutations are visited in lexicographic order and only a strictly larger
/// total replaces the incumbent, so ties go to the smallest mapping.
pub fn brute_force_lap(w: &WeightMatrix) -> Result<Assignment> {
    let n = w.n;
    if n > ORACLE_MAX_N {
        return Err(Error::OracleSizeCap(n));
    }
    struct Search<'a> {
        w: &'a WeightMatrix,
        current: Vec<usize>,
        used: Vec<bool>,
        best: Option<(f64, Vec<usize>)>,
    }
    fn visit(s: &mut Search<'_>, row: usize, partial: f64) {
        let n = s.w.n;
        if row == n {
            if s.best.as_ref().is_none_or(|(b, _)| partial > *b) {
                s.best = Some((partial, s.current.clone()));
            }
            return;
        }
        for j in 0..n {
            if s.used[j] {
                continue;
            }
            if let Weight::Allowed(x) = s.w.get(row, j) {
                s.used[j] = true;
                s.current.push(j);
                visit(s, row + 1, partial + x);
                s.current.pop();
                s.used[j] = false;
            }
        }
    }
    let mut s = Search {
        w,
        current: Vec::with_capacity(n),
        used: vec![false; n],
        best: None,
    };
    visit(&mut s, 0, 0.0);
    let (total_weight, mapping) = s.best.ok_or(Error::NoPerfectMatching)?;
    Ok(Assignment {
        mapping,
        total_weight,
    })
}
