//! Update complexity: which parity blocks change when a set of information
//! blocks changes, and statistics of that count over all (or sampled)
//! update sets of a given size.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::binomial;
use crate::field::FieldMatrix;
use crate::graph::{CodeParams, TannerGraph, VariableKind};

pub const DEFAULT_EXACT_BUDGET: u128 = 1_000_000;
pub const DEFAULT_SAMPLES: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UcError {
    #[error("cannot compare a {a} report with a {b} report in strict mode")]
    ModeMismatch { a: &'static str, b: &'static str },
    #[error("reports are for different update sizes ({a} vs {b})")]
    XMismatch { a: usize, b: usize },
    #[error("update size {x} outside 1..={k}")]
    BadUpdateSize { x: usize, k: usize },
    #[error("invalid update set: {0}")]
    BadSet(String),
}

/// `k x (n-k)` dependence pattern: bit `(i, j)` is set iff parity `j` changes
/// when information block `i` changes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportMatrix {
    rows: usize,
    cols: usize,
    words: usize,
    bits: Vec<u64>,
}

impl SupportMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        SupportMatrix {
            rows,
            cols,
            words,
            bits: vec![0; rows * words],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] |= 1 << (j % 64);
    }

    fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Parity ordinals in row `i`.
    pub fn row(&self, i: usize) -> Vec<usize> {
        (0..self.cols).filter(|&j| self.get(i, j)).collect()
    }

    pub fn row_weight(&self, i: usize) -> usize {
        self.row_words(i)
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    /// Positions `(i, j)` where the two patterns differ.
    pub fn differences(&self, other: &SupportMatrix) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rows.min(other.rows) {
            for j in 0..self.cols.min(other.cols) {
                if self.get(i, j) != other.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Dependence pattern predicted from the graph alone, assuming no
/// coefficient cancellations: a parity depends on the information
/// neighbors of its check and, transitively, on whatever the other parity
/// neighbors of that check depend on.
pub fn structural_support(g: &TannerGraph) -> SupportMatrix {
    let info = g.information_nodes();
    let parity = g.parity_columns();
    let k = info.len();
    let m = parity.len();
    let mut info_ordinal = vec![usize::MAX; g.n()];
    for (i, &v) in info.iter().enumerate() {
        info_ordinal[v] = i;
    }
    let mut parity_ordinal = vec![usize::MAX; g.n()];
    for (j, &v) in parity.iter().enumerate() {
        parity_ordinal[v] = j;
    }

    // deps[j] = information ordinals parity j depends on
    let mut deps: Vec<Vec<bool>> = vec![vec![false; k]; m];
    let mut changed = true;
    while changed {
        changed = false;
        for (j, check) in g.checks().iter().enumerate() {
            for &v in &check.neighbors {
                if v == parity[j] {
                    continue;
                }
                match g.variables()[v].kind {
                    VariableKind::Information => {
                        let i = info_ordinal[v];
                        if !deps[j][i] {
                            deps[j][i] = true;
                            changed = true;
                        }
                    }
                    _ => {
                        let src = parity_ordinal[v];
                        for i in 0..k {
                            if deps[src][i] && !deps[j][i] {
                                deps[j][i] = true;
                                changed = true;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut s = SupportMatrix::new(k, m);
    for (j, col) in deps.iter().enumerate() {
        for (i, &set) in col.iter().enumerate() {
            if set {
                s.set(i, j);
            }
        }
    }
    s
}

/// Nonzero pattern of `P`.
pub fn numeric_support(p: &FieldMatrix) -> SupportMatrix {
    let mut s = SupportMatrix::new(p.rows(), p.cols());
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            if !p[(i, j)].is_zero() {
                s.set(i, j);
            }
        }
    }
    s
}

/// Number of parities touched when the information blocks in `set` change.
pub fn u_of_set(s: &SupportMatrix, set: &[usize]) -> Result<usize, UcError> {
    if set.is_empty() {
        return Err(UcError::BadSet("empty".into()));
    }
    if let Some(&i) = set.iter().find(|&&i| i >= s.rows) {
        return Err(UcError::BadSet(format!("index {i} >= k = {}", s.rows)));
    }
    let mut acc = vec![0u64; s.words];
    for &i in set {
        for (a, w) in acc.iter_mut().zip(s.row_words(i)) {
            *a |= w;
        }
    }
    Ok(acc.iter().map(|w| w.count_ones() as usize).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UcMode {
    Exact,
    Sampled { samples: u64, seed: u64 },
}

impl UcMode {
    fn name(&self) -> &'static str {
        match self {
            UcMode::Exact => "exact",
            UcMode::Sampled { .. } => "sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcReport {
    pub x: usize,
    pub mode: UcMode,
    pub u_min: usize,
    pub u_max: usize,
    pub u_bar_num: u64,
    pub u_bar_den: u64,
    /// `u_bar` rounded half-up to two decimals.
    pub u_bar_decimal: String,
    pub histogram: BTreeMap<usize, u64>,
}

impl UcReport {
    fn from_histogram(x: usize, mode: UcMode, histogram: BTreeMap<usize, u64>) -> Self {
        let count: u64 = histogram.values().sum();
        let total: u64 = histogram.iter().map(|(&u, &c)| u as u64 * c).sum();
        let u_bar = Ratio::new(total, count.max(1));
        UcReport {
            x,
            mode,
            u_min: histogram.keys().next().copied().unwrap_or(0),
            u_max: histogram.keys().next_back().copied().unwrap_or(0),
            u_bar_num: *u_bar.numer(),
            u_bar_den: *u_bar.denom(),
            u_bar_decimal: decimal(&Ratio::new(total as i64, count.max(1) as i64), 2),
            histogram,
        }
    }

    pub fn u_bar(&self) -> Ratio<u64> {
        Ratio::new(self.u_bar_num, self.u_bar_den)
    }

    pub fn count(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn is_exact(&self) -> bool {
        self.mode == UcMode::Exact
    }
}

/// Renders a rational with `places` decimals, rounding half away from zero.
pub fn decimal(value: &Ratio<i64>, places: u32) -> String {
    let scale = 10i128.pow(places);
    let num = *value.numer() as i128 * scale;
    let den = *value.denom() as i128;
    let neg = (num < 0) != (den < 0);
    let (num, den) = (num.abs(), den.abs());
    let rounded = (2 * num + den) / (2 * den);
    let int = rounded / scale;
    let frac = rounded % scale;
    let sign = if neg && rounded != 0 { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = places as usize)
    }
}

/// Statistics of `u_x` over all `x`-subsets of information blocks when there
/// are at most `budget` of them, otherwise over seeded uniform samples.
pub fn uc_curve(s: &SupportMatrix, x: usize, budget: u128, seed: u64) -> Result<UcReport, UcError> {
    uc_curve_with_samples(s, x, budget, seed, DEFAULT_SAMPLES)
}

pub fn uc_curve_with_samples(
    s: &SupportMatrix,
    x: usize,
    budget: u128,
    seed: u64,
    samples: u64,
) -> Result<UcReport, UcError> {
    let k = s.rows;
    if x == 0 || x > k {
        return Err(UcError::BadUpdateSize { x, k });
    }
    let mut histogram = BTreeMap::new();
    if binomial(k, x) <= budget {
        let mut unions = vec![vec![0u64; s.words]; x + 1];
        enumerate(s, x, 0, 0, &mut unions, &mut histogram);
        Ok(UcReport::from_histogram(x, UcMode::Exact, histogram))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let set = rand::seq::index::sample(&mut rng, k, x).into_vec();
            let u = u_of_set(s, &set)?;
            *histogram.entry(u).or_insert(0) += 1;
        }
        Ok(UcReport::from_histogram(
            x,
            UcMode::Sampled { samples, seed },
            histogram,
        ))
    }
}

fn enumerate(
    s: &SupportMatrix,
    x: usize,
    start: usize,
    depth: usize,
    unions: &mut [Vec<u64>],
    histogram: &mut BTreeMap<usize, u64>,
) {
    for i in start..=s.rows - (x - depth) {
        let (lower, upper) = unions.split_at_mut(depth + 1);
        for (dst, (a, b)) in upper[0]
            .iter_mut()
            .zip(lower[depth].iter().zip(s.row_words(i)))
        {
            *dst = a | b;
        }
        if depth + 1 == x {
            let u = upper[0].iter().map(|w| w.count_ones() as usize).sum();
            *histogram.entry(u).or_insert(0) += 1;
        } else {
            enumerate(s, x, i + 1, depth + 1, unions, histogram);
        }
    }
}

/// `(d-1, d)`: the range a single update of an optimal code can touch.
pub fn uc_bounds_u1(params: &CodeParams) -> (usize, usize) {
    (params.d - 1, params.d)
}

/// Whether the cover threshold divides `r(floor((d-2)/(r+1)) + 1)`, the
/// condition under which every single update touches exactly `d-1` parities.
pub fn balance_predicate(params: &CodeParams) -> bool {
    let threshold = params.cover_threshold();
    let beta = params.r * params.cover_set_size();
    beta % threshold == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub x: usize,
    pub improvement_num: i64,
    pub improvement_den: i64,
    /// Improvement percentage at one decimal.
    pub improvement_decimal: String,
    pub exact: bool,
}

impl Comparison {
    pub fn improvement(&self) -> Ratio<i64> {
        Ratio::new(self.improvement_num, self.improvement_den)
    }
}

/// Percentage by which `a` lowers the average update cost relative to `b`:
/// `100 (b - a) / b`.
pub fn compare(a: &UcReport, b: &UcReport, strict: bool) -> Result<Comparison, UcError> {
    if a.x != b.x {
        return Err(UcError::XMismatch { a: a.x, b: b.x });
    }
    if strict && a.mode.name() != b.mode.name() {
        return Err(UcError::ModeMismatch {
            a: a.mode.name(),
            b: b.mode.name(),
        });
    }
    let ua = Ratio::new(a.u_bar_num as i64, a.u_bar_den as i64);
    let ub = Ratio::new(b.u_bar_num as i64, b.u_bar_den as i64);
    let pct = if *ub.numer() == 0 {
        Ratio::from_integer(0)
    } else {
        (ub - ua) / ub * Ratio::from_integer(100)
    };
    Ok(Comparison {
        x: a.x,
        improvement_num: *pct.numer(),
        improvement_den: *pct.denom(),
        improvement_decimal: decimal(&pct, 1),
        exact: a.is_exact() && b.is_exact(),
    })
}

/// One line of the update-complexity CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UcRow {
    pub method: String,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub r: usize,
    pub x: usize,
    pub u_min: usize,
    pub u_bar_num: u64,
    pub u_bar_den: u64,
    pub u_bar_decimal: String,
    pub u_max: usize,
}

impl UcRow {
    pub fn new(method: &str, params: &CodeParams, report: &UcReport) -> Self {
        UcRow {
            method: method.to_string(),
            n: params.n,
            k: params.k,
            d: params.d,
            r: params.r,
            x: report.x,
            u_min: report.u_min,
            u_bar_num: report.u_bar_num,
            u_bar_den: report.u_bar_den,
            u_bar_decimal: report.u_bar_decimal.clone(),
            u_max: report.u_max,
        }
    }
}
