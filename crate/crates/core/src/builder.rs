//! Tanner-graph constructions and their realization as codes over GF(2^m).
//!
//! Three graph builders share one skeleton: [`build_skeleton`] lays out the
//! local groups, local checks and global-parity ownership; [`algorithm1`]
//! then wires global checks sparsely so that every information node touches
//! as few global parities as the distance requirement allows; [`baseline`]
//! wires every global check to every information node.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{self, AnalyzerError};
use crate::field::{FieldContext, FieldElement, FieldError, FieldMatrix};
use crate::graph::{
    CheckKind, CheckNode, CodeParams, GroupClass, ParamsError, TannerGraph, VariableKind,
    VariableNode, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error(transparent)]
    InvalidParams(#[from] ParamsError),
    #[error("parameters {params} violate n-k-n/(r+1) = d-2-floor((d-2)/(r+1)): {lhs} != {rhs}")]
    NotNuOptimal {
        params: CodeParams,
        lhs: usize,
        rhs: usize,
    },
    #[error("construction failure: {0}")]
    ConstructionFailure(String),
    #[error("graph does not validate: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),
    #[error(
        "realization failed after {attempts} draws: {dominant} \
         (singular parity block {singular}, distance shortfall {shortfall})"
    )]
    RealizationFailure {
        attempts: u32,
        singular: u32,
        shortfall: u32,
        dominant: String,
    },
    #[error(transparent)]
    Distance(#[from] AnalyzerError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Derives the optimal `d` for `(n, k, r)` and checks the uniform-group
/// global check count identity.
pub fn nu_params(n: usize, k: usize, r: usize) -> Result<CodeParams, BuildError> {
    if r == 0 || k == 0 || k >= n || r > k || n % (r + 1) != 0 {
        return Err(ParamsError::Invalid(format!(
            "need (r+1) | n and 1 <= r <= k < n, got n={n} k={k} r={r}"
        ))
        .into());
    }
    let d = CodeParams::optimal_distance(n, k, r);
    if d < 2 {
        return Err(ParamsError::Invalid(format!(
            "optimal distance {d} < 2 for n={n} k={k} r={r}"
        ))
        .into());
    }
    let params = CodeParams::new(n, k, d as usize, r)?;
    if !params.satisfies_global_count_identity() {
        return Err(BuildError::NotNuOptimal {
            params,
            lhs: params.global_check_count(),
            rhs: params.expected_global_checks(),
        });
    }
    Ok(params)
}

/// Groups, local checks wired to whole groups, and global checks wired only
/// to their own global parity.
pub fn build_skeleton(params: &CodeParams) -> TannerGraph {
    let groups_n = params.group_count();
    let r = params.r;
    let mut remaining_gp = params.global_check_count();
    let mut gp_per_group = vec![0usize; groups_n];
    for gid in (0..groups_n).rev() {
        let take = remaining_gp.min(r);
        gp_per_group[gid] = take;
        remaining_gp -= take;
    }

    let mut variables = Vec::with_capacity(params.n);
    let mut groups = Vec::with_capacity(groups_n);
    let mut global_parities = Vec::new();
    for (gid, &gp) in gp_per_group.iter().enumerate() {
        let mut members = Vec::with_capacity(r + 1);
        let layout = std::iter::repeat_n(VariableKind::Information, r - gp)
            .chain(std::iter::repeat_n(VariableKind::GlobalParity, gp))
            .chain(std::iter::once(VariableKind::LocalParity));
        for kind in layout {
            let index = variables.len();
            if kind == VariableKind::GlobalParity {
                global_parities.push(index);
            }
            variables.push(VariableNode {
                index,
                kind,
                group: gid,
            });
            members.push(index);
        }
        groups.push(members);
    }

    let mut checks: Vec<CheckNode> = groups
        .iter()
        .enumerate()
        .map(|(gid, members)| CheckNode {
            index: gid,
            kind: CheckKind::Local,
            neighbors: members.iter().copied().collect(),
        })
        .collect();
    for gp in global_parities {
        checks.push(CheckNode {
            index: checks.len(),
            kind: CheckKind::Global,
            neighbors: [gp].into_iter().collect(),
        });
    }
    TannerGraph::from_parts(*params, variables, checks, groups)
}

/// Lexicographic successor of a sorted `size`-combination of `0..n`.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let size = comb.len();
    for i in (0..size).rev() {
        if comb[i] < n - size + i {
            comb[i] += 1;
            for j in i + 1..size {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// First (lexicographic) set of `set_size` groups on which `check` reaches
/// fewer than `threshold` variables, with the number it does reach.
fn first_deficient_set(
    g: &TannerGraph,
    check: usize,
    set_size: usize,
    threshold: usize,
) -> Option<(Vec<usize>, usize)> {
    let groups_n = g.groups().len();
    if set_size == 0 || set_size > groups_n {
        return None;
    }
    let neighbors = &g.checks()[check].neighbors;
    let mut comb: Vec<usize> = (0..set_size).collect();
    loop {
        let reached = comb
            .iter()
            .flat_map(|&gid| g.groups()[gid].iter())
            .filter(|v| neighbors.contains(v))
            .count();
        if reached < threshold {
            return Some((comb, reached));
        }
        if !next_combination(&mut comb, groups_n) {
            return None;
        }
    }
}

/// Sparse global wiring that keeps the distance-`d` cover condition while
/// spreading global checks evenly over information nodes.
pub fn algorithm1(params: &CodeParams) -> Result<TannerGraph, BuildError> {
    let mut g = build_skeleton(params);
    let global_ids: Vec<usize> = g.global_checks().map(|c| c.index).collect();
    if global_ids.is_empty() {
        return Ok(g);
    }

    // information nodes of the infomixed group see every global check
    let classes = g.classify_groups();
    let infomixed_info: Vec<usize> = g
        .variables()
        .iter()
        .filter(|v| {
            v.kind == VariableKind::Information && classes[&v.group] == GroupClass::Infomixed
        })
        .map(|v| v.index)
        .collect();
    for &c in &global_ids {
        for &v in &infomixed_info {
            g.add_edge(c, v);
        }
    }

    // every set of floor((d-2)/(r+1))+1 groups must hold >= T neighbors of each global check
    let set_size = params.cover_set_size();
    let threshold = params.cover_threshold();
    for &c in &global_ids {
        while let Some((set, reached)) = first_deficient_set(&g, c, set_size, threshold) {
            let mut candidates: Vec<usize> = set
                .iter()
                .flat_map(|&gid| g.groups()[gid].iter().copied())
                .filter(|&v| {
                    g.variables()[v].kind == VariableKind::Information && !g.has_edge(c, v)
                })
                .collect();
            if candidates.is_empty() {
                return Err(BuildError::ConstructionFailure(format!(
                    "global check {c} reaches {reached} < {threshold} variables of groups {set:?} \
                     and no unconnected information node is left there"
                )));
            }
            // one edge at a time so the deficit spreads over the groups of the set
            let reach_in = |g: &TannerGraph, gid: usize| {
                g.groups()[gid]
                    .iter()
                    .filter(|&&u| g.has_edge(c, u))
                    .count()
            };
            for _ in 0..threshold - reached {
                let Some(pos) = (0..candidates.len()).min_by_key(|&i| {
                    let v = candidates[i];
                    (g.global_degree(v), reach_in(&g, g.group_of(v)), v)
                }) else {
                    break;
                };
                let v = candidates.swap_remove(pos);
                g.add_edge(c, v);
            }
        }
    }

    // raise information nodes of plain groups to the global-degree floor
    let target = params.plain_global_degree_target().min(global_ids.len());
    let plain_info: Vec<usize> = g
        .variables()
        .iter()
        .filter(|v| v.kind == VariableKind::Information && classes[&v.group] == GroupClass::Plain)
        .map(|v| v.index)
        .collect();
    for v in plain_info {
        let beta = g.global_degree(v);
        if beta >= target {
            continue;
        }
        let mut free: Vec<usize> = global_ids
            .iter()
            .copied()
            .filter(|&c| !g.has_edge(c, v))
            .collect();
        free.sort_by_key(|&c| (g.checks()[c].neighbors.len(), c));
        for c in free.into_iter().take(target - beta) {
            g.add_edge(c, v);
        }
    }

    let violations = g.validate();
    if !violations.is_empty() {
        return Err(BuildError::InvalidGraph(violations));
    }
    Ok(g)
}

/// The conventional dense layout: every global check sees all `k`
/// information nodes plus its own parity.
pub fn baseline(params: &CodeParams) -> TannerGraph {
    let mut g = build_skeleton(params);
    let info = g.information_nodes();
    let globals: Vec<usize> = g.global_checks().map(|c| c.index).collect();
    for c in globals {
        for &v in &info {
            g.add_edge(c, v);
        }
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Baseline,
}

impl Method {
    pub fn build(self, params: &CodeParams) -> Result<TannerGraph, BuildError> {
        match self {
            Method::Proposed => algorithm1(params),
            Method::Baseline => Ok(baseline(params)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "baseline" => Ok(Method::Baseline),
            other => Err(format!("unknown method {other:?} (proposed|baseline)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub params: CodeParams,
    pub method: Method,
    pub field: FieldContext,
    pub seed: u64,
    pub max_retries: u32,
}

pub const DEFAULT_MAX_RETRIES: u32 = 16;

impl BuildConfig {
    pub fn new(params: CodeParams, method: Method, field: FieldContext, seed: u64) -> Self {
        BuildConfig {
            params,
            method,
            field,
            seed,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn build(&self) -> Result<CodeRealization, BuildError> {
        let graph = self.method.build(&self.params)?;
        realize(&graph, &self.field, self.seed, self.max_retries)
    }
}

/// A Tanner graph with concrete coefficients: `H` on the graph's edges,
/// the systematic parity block `P` and `G`.
///
/// `G` is `k x n` in variable order; restricted to the information columns it
/// is `I_k`, restricted to the parity columns (in check order) it is `P`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeRealization {
    graph: TannerGraph,
    field: FieldContext,
    seed: u64,
    h: FieldMatrix,
    p: FieldMatrix,
    g: FieldMatrix,
    info_columns: Vec<usize>,
    parity_columns: Vec<usize>,
}

impl CodeRealization {
    /// Rebuilds a realization from stored matrices. `P` is recomputed from
    /// `H` and must match the stored one.
    pub fn from_matrices(
        graph: TannerGraph,
        field: FieldContext,
        seed: u64,
        h: FieldMatrix,
        p: FieldMatrix,
    ) -> Result<Self, BuildError> {
        let violations = graph.validate();
        if !violations.is_empty() {
            return Err(BuildError::InvalidGraph(violations));
        }
        let real = assemble(graph, field, seed, h)?;
        if real.p != p {
            return Err(BuildError::ConstructionFailure(
                "stored parity block disagrees with the parity-check matrix".into(),
            ));
        }
        Ok(real)
    }

    pub fn graph(&self) -> &TannerGraph {
        &self.graph
    }

    pub fn params(&self) -> &CodeParams {
        self.graph.params()
    }

    pub fn field(&self) -> &FieldContext {
        &self.field
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(n-k) x n` parity-check matrix.
    pub fn parity_check(&self) -> &FieldMatrix {
        &self.h
    }

    /// `k x (n-k)` systematic parity block.
    pub fn parity_block(&self) -> &FieldMatrix {
        &self.p
    }

    /// `k x n` generator.
    pub fn generator(&self) -> &FieldMatrix {
        &self.g
    }

    /// Variable index of each information ordinal.
    pub fn info_columns(&self) -> &[usize] {
        &self.info_columns
    }

    /// Variable index of each parity ordinal.
    pub fn parity_columns(&self) -> &[usize] {
        &self.parity_columns
    }

    /// True iff the nonzero pattern of H is exactly the graph's edge set.
    pub fn support_matches_graph(&self) -> bool {
        let adj = self.graph.biadjacency();
        (0..self.h.rows())
            .all(|i| (0..self.h.cols()).all(|j| adj[i][j] == !self.h[(i, j)].is_zero()))
    }
}

/// Solves `P` from `H` and assembles `G`. Fails with `Singular` if the
/// parity columns of H are not invertible.
fn assemble(
    graph: TannerGraph,
    field: FieldContext,
    seed: u64,
    h: FieldMatrix,
) -> Result<CodeRealization, BuildError> {
    let n = graph.n();
    let k = graph.k();
    if h.rows() != n - k || h.cols() != n {
        return Err(FieldError::ShapeMismatch(format!(
            "H is {}x{}, expected {}x{n}",
            h.rows(),
            h.cols(),
            n - k
        ))
        .into());
    }
    let info_columns = graph.information_nodes();
    let parity_columns = graph.parity_columns();
    let h_info = h.select_columns(&info_columns);
    let h_par = h.select_columns(&parity_columns);
    let h_par_inv = field.mat_inv(&h_par)?;
    // H_par p^T + H_info x^T = 0 and -1 = 1 in characteristic 2
    let p = field.mat_mul(&h_par_inv, &h_info)?.transpose();
    let mut g = FieldMatrix::zeros(k, n);
    for (i, &col) in info_columns.iter().enumerate() {
        g[(i, col)] = FieldElement::ONE;
        for (j, &pc) in parity_columns.iter().enumerate() {
            g[(i, pc)] = p[(i, j)];
        }
    }
    debug_assert!(field.mat_mul(&g, &h.transpose()).unwrap().is_zero());
    Ok(CodeRealization {
        graph,
        field,
        seed,
        h,
        p,
        g,
        info_columns,
        parity_columns,
    })
}

/// One coefficient draw for `graph` without the distance check: independent
/// uniform nonzero coefficients on exactly the graph's edges, from stream
/// `attempt` of the generator seeded with `seed`.
pub fn draw(
    graph: &TannerGraph,
    field: &FieldContext,
    seed: u64,
    attempt: u32,
) -> Result<CodeRealization, BuildError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt as u64);
    let n = graph.n();
    let mut h = FieldMatrix::zeros(graph.checks().len(), n);
    for c in graph.checks() {
        for &v in &c.neighbors {
            h[(c.index, v)] = field.random_nonzero(&mut rng);
        }
    }
    assemble(graph.clone(), field.clone(), seed, h)
}

/// Draws coefficients until the code has full-rank parity columns and exact
/// minimum distance `d`, trying at most `max_retries` streams.
pub fn realize(
    graph: &TannerGraph,
    field: &FieldContext,
    seed: u64,
    max_retries: u32,
) -> Result<CodeRealization, BuildError> {
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(BuildError::InvalidGraph(violations));
    }
    let d = graph.params().d;
    let (mut singular, mut shortfall) = (0, 0);
    for attempt in 0..max_retries.max(1) {
        let real = match draw(graph, field, seed, attempt) {
            Ok(r) => r,
            Err(BuildError::Field(FieldError::Singular)) => {
                singular += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let report = analyzer::min_distance(field, real.parity_check())?;
        if report.d_exact == d {
            return Ok(real);
        }
        shortfall += 1;
    }
    let dominant = if shortfall >= singular {
        "distance shortfall"
    } else {
        "singular parity block"
    };
    Err(BuildError::RealizationFailure {
        attempts: max_retries.max(1),
        singular,
        shortfall,
        dominant: dominant.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::cover_check;

    fn example_params() -> CodeParams {
        nu_params(15, 9, 4).unwrap()
    }

    #[test]
    fn nu_params_examples() {
        let p = example_params();
        assert_eq!(p.d, 5);
        assert_eq!(p.global_check_count(), 3);
        assert_eq!(p.expected_global_checks(), 3);
        for r in 1..6 {
            let p = nu_params(r + 1, r, r).unwrap();
            assert_eq!(p.d, 2);
            assert_eq!(p.global_check_count(), 0);
        }
        assert!(matches!(
            nu_params(16, 9, 4),
            Err(BuildError::InvalidParams(_))
        ));
        assert!(nu_params(15, 15, 4).is_err());
        assert!(nu_params(15, 14, 4).is_err());
    }

    #[test]
    fn skeleton_layout_example() {
        let g = build_skeleton(&example_params());
        let kinds: Vec<VariableKind> = g.variables().iter().map(|v| v.kind).collect();
        use VariableKind::*;
        assert_eq!(
            kinds,
            vec![
                Information,
                Information,
                Information,
                Information,
                LocalParity,
                Information,
                Information,
                Information,
                Information,
                LocalParity,
                Information,
                GlobalParity,
                GlobalParity,
                GlobalParity,
                LocalParity,
            ]
        );
        assert_eq!(g.global_checks().count(), 3);
        for (c, gp) in g.global_checks().zip([11, 12, 13]) {
            assert_eq!(c.neighbors.iter().copied().collect::<Vec<_>>(), vec![gp]);
        }
        assert!(g.validate().is_empty());
    }

    #[test]
    fn skeleton_without_globals() {
        let g = build_skeleton(&nu_params(10, 8, 4).unwrap());
        assert_eq!(g.checks().len(), 2);
        assert!(g.checks().iter().all(|c| c.kind == CheckKind::Local));
        assert!(g.validate().is_empty());
    }

    #[test]
    fn algorithm1_example_thresholds() {
        let p = example_params();
        let g = algorithm1(&p).unwrap();
        assert_eq!(p.cover_threshold(), 2);
        for c in g.global_checks() {
            for members in g.groups() {
                let reached = members.iter().filter(|v| c.neighbors.contains(v)).count();
                assert!(reached >= 2, "check {} group {members:?}", c.index);
            }
        }
        // infomixed information node 10 sees all three global checks
        assert_eq!(g.global_degree(10), 3);
        for v in [0, 1, 2, 3, 5, 6, 7, 8] {
            assert_eq!(g.global_degree(v), 2, "node {v}");
        }
        assert!(g.validate().is_empty());
        assert!(cover_check(&g, p.d).unwrap().passed());
    }

    #[test]
    fn algorithm1_without_globals_is_skeleton() {
        let p = nu_params(10, 8, 4).unwrap();
        assert_eq!(algorithm1(&p).unwrap(), build_skeleton(&p));
        assert_eq!(baseline(&p), build_skeleton(&p));
    }

    #[test]
    fn baseline_example_degrees() {
        let g = baseline(&example_params());
        for c in g.global_checks() {
            assert_eq!(c.neighbors.len(), 10);
        }
        for v in g.information_nodes() {
            assert_eq!(g.global_degree(v), 3);
        }
        assert!(g.validate().is_empty());
    }

    #[test]
    fn realization_invariants() {
        let f = FieldContext::new(16).unwrap();
        for method in [Method::Proposed, Method::Baseline] {
            let g = method.build(&example_params()).unwrap();
            for seed in 0..5 {
                let real = realize(&g, &f, seed, 4).unwrap();
                let gh = f
                    .mat_mul(real.generator(), &real.parity_check().transpose())
                    .unwrap();
                assert!(gh.is_zero());
                assert_eq!(f.mat_rank(real.parity_check()), 6);
                assert!(real.support_matches_graph());
            }
        }
    }

    #[test]
    fn determinism() {
        let f = FieldContext::new(16).unwrap();
        let cfg = BuildConfig::new(example_params(), Method::Proposed, f, 99);
        assert_eq!(cfg.build().unwrap(), cfg.build().unwrap());
    }

    #[test]
    fn binary_field_reports_failure_kind() {
        let f = FieldContext::new(1).unwrap();
        let g = algorithm1(&example_params()).unwrap();
        let err = realize(&g, &f, 0, 3).unwrap_err();
        match err {
            BuildError::RealizationFailure {
                attempts,
                singular,
                shortfall,
                dominant,
            } => {
                assert_eq!(attempts, 3);
                assert_eq!(singular + shortfall, 3);
                assert!(dominant == "distance shortfall" || dominant == "singular parity block");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn from_matrices_round_trip() {
        let f = FieldContext::new(8).unwrap();
        let g = algorithm1(&example_params()).unwrap();
        let real = realize(&g, &f, 5, 8).unwrap();
        let back = CodeRealization::from_matrices(
            g.clone(),
            f.clone(),
            5,
            real.parity_check().clone(),
            real.parity_block().clone(),
        )
        .unwrap();
        assert_eq!(back, real);
        let mut tampered = real.parity_block().clone();
        tampered[(0, 0)] = f.add(tampered[(0, 0)], FieldElement::ONE);
        assert!(
            CodeRealization::from_matrices(g, f, 5, real.parity_check().clone(), tampered).is_err()
        );
    }

    #[test]
    fn combinations_are_lexicographic() {
        let mut c = vec![0, 1];
        let mut all = vec![c.clone()];
        while next_combination(&mut c, 4) {
            all.push(c.clone());
        }
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
    }
}
