//! Instance verification: the check-subset cover condition on graphs, exact
//! minimum distance of parity-check matrices, structural locality and
//! parameter optimality.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldContext, FieldElement, FieldMatrix};
use crate::graph::{CheckKind, CodeParams, TannerGraph};

/// Default cap on enumerated check subsets in [`cover_check`].
pub const DEFAULT_COVER_BUDGET: u128 = 10_000_000;
/// Default cap on column insertions in [`min_distance`].
pub const DEFAULT_DISTANCE_BUDGET: u64 = 200_000_000;
/// At most this many cover failures are kept verbatim; the rest are counted.
pub const MAX_REPORTED_FAILURES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzerError {
    #[error("budget exceeded: {needed} {what} needed, cap is {cap}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        cap: u128,
    },
    #[error("distance {d} outside the Singleton range [2, {max}]")]
    DistanceOutOfRange { d: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverFailure {
    pub gamma: usize,
    pub checks: Vec<usize>,
    pub covered: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverReport {
    pub d: usize,
    pub gamma_min: usize,
    pub gamma_max: usize,
    pub subsets_checked: u64,
    pub failure_count: u64,
    /// Failures in lexicographic order of their check subsets, truncated at
    /// [`MAX_REPORTED_FAILURES`].
    pub failures: Vec<CoverFailure>,
}

impl CoverReport {
    pub fn passed(&self) -> bool {
        self.failure_count == 0
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

type Bits = Vec<u64>;

fn bits_of(n: usize, members: impl IntoIterator<Item = usize>) -> Bits {
    let mut b = vec![0u64; n.div_ceil(64)];
    for v in members {
        b[v / 64] |= 1 << (v % 64);
    }
    b
}

struct CoverSearch<'a> {
    rows: &'a [Bits],
    k: usize,
    gamma_min: usize,
    stack: Vec<usize>,
    unions: Vec<Bits>,
    checked: u64,
    failure_count: u64,
    failures: Vec<CoverFailure>,
}

impl CoverSearch<'_> {
    fn visit(&mut self, start: usize) {
        let depth = self.stack.len();
        for c in start..self.rows.len() {
            let (lower, upper) = self.unions.split_at_mut(depth + 1);
            for (dst, (a, b)) in upper[0]
                .iter_mut()
                .zip(lower[depth].iter().zip(&self.rows[c]))
            {
                *dst = a | b;
            }
            self.stack.push(c);
            let gamma = depth + 1;
            if gamma >= self.gamma_min {
                self.checked += 1;
                let covered: usize = self.unions[gamma]
                    .iter()
                    .map(|w| w.count_ones() as usize)
                    .sum();
                if covered < gamma + self.k {
                    self.failure_count += 1;
                    if self.failures.len() < MAX_REPORTED_FAILURES {
                        self.failures.push(CoverFailure {
                            gamma,
                            checks: self.stack.clone(),
                            covered,
                        });
                    }
                }
            }
            self.visit(c + 1);
            self.stack.pop();
        }
    }
}

/// Checks that every `gamma` checks cover at least `gamma + k` variables for
/// every `gamma` in `[n-k-d+2, n-k]`.
pub fn cover_check(g: &TannerGraph, d: usize) -> Result<CoverReport, AnalyzerError> {
    cover_check_with_budget(g, d, DEFAULT_COVER_BUDGET)
}

pub fn cover_check_with_budget(
    g: &TannerGraph,
    d: usize,
    budget: u128,
) -> Result<CoverReport, AnalyzerError> {
    let n = g.n();
    let k = g.k();
    let m = n - k;
    if d < 2 || d > m + 1 {
        return Err(AnalyzerError::DistanceOutOfRange { d, max: m + 1 });
    }
    let gamma_min = m + 2 - d;
    let needed: u128 = (gamma_min..=m).map(|gm| binomial(m, gm)).sum();
    if needed > budget {
        return Err(AnalyzerError::BudgetExceeded {
            what: "check subsets",
            needed,
            cap: budget,
        });
    }
    let rows: Vec<Bits> = g
        .checks()
        .iter()
        .map(|c| bits_of(n, c.neighbors.iter().copied()))
        .collect();
    let mut search = CoverSearch {
        rows: &rows,
        k,
        gamma_min,
        stack: Vec::with_capacity(m),
        unions: vec![vec![0u64; n.div_ceil(64)]; m + 1],
        checked: 0,
        failure_count: 0,
        failures: Vec::new(),
    };
    search.visit(0);
    debug_assert_eq!(search.checked as u128, needed);
    Ok(CoverReport {
        d,
        gamma_min,
        gamma_max: m,
        subsets_checked: search.checked,
        failure_count: search.failure_count,
        failures: search.failures,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub d_exact: usize,
    /// Columns of a minimal linearly dependent set.
    pub witness: Vec<usize>,
    pub column_insertions: u64,
}

/// Branch-and-bound search over column subsets keeping an incremental
/// echelon basis; each node inserts one column into its parent's basis.
struct DistanceSearch<'a> {
    field: &'a FieldContext,
    columns: Vec<Vec<FieldElement>>,
    rows: usize,
    /// Largest dependent-set size still worth looking for.
    limit: usize,
    best: Option<Vec<usize>>,
    stack: Vec<usize>,
    basis: Vec<Vec<FieldElement>>,
    pivots: Vec<usize>,
    scratch: Vec<FieldElement>,
    insertions: u64,
    budget: u64,
}

impl DistanceSearch<'_> {
    /// Reduces column `j` against the current basis into `scratch`; returns
    /// the pivot of the remainder, or `None` if it reduced to zero.
    fn reduce(&mut self, j: usize) -> Option<usize> {
        self.scratch.copy_from_slice(&self.columns[j]);
        for (b, &p) in self.basis.iter().zip(&self.pivots) {
            let c = self.scratch[p];
            if c.is_zero() {
                continue;
            }
            for (s, &x) in self.scratch.iter_mut().zip(b) {
                s.0 ^= self.field.mul(c, x).0;
            }
        }
        self.scratch.iter().position(|x| !x.is_zero())
    }

    fn visit(&mut self, start: usize) -> Result<(), AnalyzerError> {
        let depth = self.stack.len();
        for j in start..self.columns.len() {
            if depth + 1 > self.limit {
                return Ok(());
            }
            self.insertions += 1;
            if self.insertions > self.budget {
                return Err(AnalyzerError::BudgetExceeded {
                    what: "column insertions",
                    needed: self.insertions as u128,
                    cap: self.budget as u128,
                });
            }
            match self.reduce(j) {
                None => {
                    let mut set = self.stack.clone();
                    set.push(j);
                    self.best = Some(set);
                    self.limit = depth;
                }
                Some(p) if depth + 1 < self.limit => {
                    let inv = self.field.inv(self.scratch[p]).expect("pivot is nonzero");
                    let normalized: Vec<FieldElement> = self
                        .scratch
                        .iter()
                        .map(|&x| self.field.mul(x, inv))
                        .collect();
                    self.basis.push(normalized);
                    self.pivots.push(p);
                    self.stack.push(j);
                    self.visit(j + 1)?;
                    self.stack.pop();
                    self.pivots.pop();
                    self.basis.pop();
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Smallest number of linearly dependent columns of `h`.
pub fn min_distance(
    field: &FieldContext,
    h: &FieldMatrix,
) -> Result<DistanceReport, AnalyzerError> {
    min_distance_with_budget(field, h, DEFAULT_DISTANCE_BUDGET)
}

pub fn min_distance_with_budget(
    field: &FieldContext,
    h: &FieldMatrix,
    budget: u64,
) -> Result<DistanceReport, AnalyzerError> {
    let rows = h.rows();
    let n = h.cols();
    let mut search = DistanceSearch {
        field,
        columns: (0..n).map(|j| h.column(j)).collect(),
        rows,
        limit: rows.min(n),
        best: None,
        stack: Vec::with_capacity(rows),
        basis: Vec::with_capacity(rows),
        pivots: Vec::with_capacity(rows),
        scratch: vec![FieldElement::ZERO; rows],
        insertions: 0,
        budget,
    };
    search.visit(0)?;
    let witness = match search.best {
        Some(set) => set,
        // every set of `rows` columns is independent, so any rows+1 are minimally dependent
        None => (0..(search.rows + 1).min(n)).collect(),
    };
    Ok(DistanceReport {
        d_exact: witness.len(),
        witness,
        column_insertions: search.insertions,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub per_node: Vec<usize>,
    pub r: usize,
    /// Every variable lies on a local check of weight at most `r + 1`.
    pub certified: bool,
}

/// Locality of each node as the size of its local group minus one.
pub fn structural_locality(g: &TannerGraph) -> LocalityReport {
    let per_node: Vec<usize> = g
        .variables()
        .iter()
        .map(|v| g.groups()[v.group].len() - 1)
        .collect();
    let r = per_node.iter().copied().max().unwrap_or(0);
    let certified = (0..g.n()).all(|v| {
        g.checks().iter().any(|c| {
            c.kind == CheckKind::Local && c.neighbors.contains(&v) && c.neighbors.len() <= r + 1
        })
    });
    LocalityReport {
        per_node,
        r,
        certified,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub optimal: bool,
    pub optimal_d: i64,
    pub identity_holds: bool,
    pub detail: String,
}

/// `d` meets `n - k - ceil(k/r) + 2` with equality and the global check
/// count identity holds.
pub fn optimality_check(params: &CodeParams) -> OptimalityReport {
    let optimal_d = CodeParams::optimal_distance(params.n, params.k, params.r);
    let identity_holds = params.satisfies_global_count_identity();
    let meets = params.d as i64 == optimal_d;
    let detail = format!(
        "d={} vs bound {optimal_d}; global checks {} vs d-2-floor((d-2)/(r+1)) = {}",
        params.d,
        params.global_check_count(),
        params.expected_global_checks()
    );
    OptimalityReport {
        optimal: meets && identity_holds,
        optimal_d,
        identity_holds,
        detail,
    }
}
