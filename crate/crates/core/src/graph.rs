//! Tanner-graph model for non-overlapping, uniform-group LRCs.
//!
//! A graph has `n` variable nodes (code blocks) and `n - k` check nodes
//! (rows of H). Variables are partitioned into `n / (r + 1)` local groups of
//! size `r + 1`; each group is served by exactly one local check and holds
//! exactly one local parity. The remaining checks are global and each owns a
//! distinct global parity node.
//!
//! The canonical layout is group by group, and within a group: information
//! nodes, then global parities, then the local parity. Local checks come
//! first in check order, one per group, followed by the global checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

/// The `(n, k, d, r)` tuple of an LRC with uniform groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodeParams {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub r: usize,
}

impl CodeParams {
    /// Checks ranges and divisibility only; `d` need not be optimal.
    pub fn new(n: usize, k: usize, d: usize, r: usize) -> Result<Self, ParamsError> {
        let bad = |msg: String| Err(ParamsError::Invalid(msg));
        if k == 0 || k >= n {
            return bad(format!("need 1 <= k < n, got n={n} k={k}"));
        }
        if r == 0 || r > k {
            return bad(format!("need 1 <= r <= k, got r={r} k={k}"));
        }
        if n % (r + 1) != 0 {
            return bad(format!("(r+1) = {} does not divide n = {n}", r + 1));
        }
        if d < 2 {
            return bad(format!("need d >= 2, got d={d}"));
        }
        if n - k < n / (r + 1) {
            return bad(format!(
                "n-k = {} parities cannot cover {} local groups",
                n - k,
                n / (r + 1)
            ));
        }
        Ok(CodeParams { n, k, d, r })
    }

    /// Largest `d` allowed by the Singleton-like bound for locality `r`.
    pub fn optimal_distance(n: usize, k: usize, r: usize) -> i64 {
        n as i64 - k as i64 - k.div_ceil(r) as i64 + 2
    }

    pub fn group_count(&self) -> usize {
        self.n / (self.r + 1)
    }

    pub fn local_check_count(&self) -> usize {
        self.group_count()
    }

    /// Checks beyond the local ones: `n - k - n/(r+1)`.
    pub fn global_check_count(&self) -> usize {
        self.n - self.k - self.group_count()
    }

    /// `floor((d-2)/(r+1))`.
    pub fn spread(&self) -> usize {
        (self.d - 2) / (self.r + 1)
    }

    /// `d - 2 - floor((d-2)/(r+1))`, the global check count an optimal code must have.
    pub fn expected_global_checks(&self) -> usize {
        self.d - 2 - self.spread()
    }

    pub fn satisfies_global_count_identity(&self) -> bool {
        self.global_check_count() == self.expected_global_checks()
    }

    /// Number of local groups a single global check is tested against at a time.
    pub fn cover_set_size(&self) -> usize {
        self.spread() + 1
    }

    /// Minimum number of variables of every `cover_set_size()` groups each
    /// global check must reach: `(r+1)(floor((d-2)/(r+1)) + 1) - (d-2)`.
    pub fn cover_threshold(&self) -> usize {
        (self.r + 1) * self.cover_set_size() - (self.d - 2)
    }

    /// `ceil((d - 2 - floor((d-2)/(r+1))) / r)`.
    pub fn lambda(&self) -> usize {
        self.expected_global_checks().div_ceil(self.r)
    }

    /// Global-degree floor for information nodes in non-mixed groups.
    pub fn plain_global_degree_target(&self) -> usize {
        let g = self.global_check_count();
        (g + self.spread()).saturating_sub(self.lambda())
    }
}

impl fmt::Display for CodeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.k, self.d, self.r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Information,
    LocalParity,
    GlobalParity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableNode {
    pub index: usize,
    pub kind: VariableKind,
    pub group: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Local,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CheckNode {
    pub index: usize,
    pub kind: CheckKind,
    pub neighbors: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupClass {
    Plain,
    Mixed,
    Infomixed,
}

/// A broken structural rule, e.g. `duplicate local check: group 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn new(rule: &str, detail: impl Into<String>) -> Self {
        Violation {
            rule: rule.to_string(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {locus}: {message}")]
pub struct ParseError {
    pub locus: String,
    pub message: String,
}

impl ParseError {
    fn at(locus: impl Into<String>, message: impl Into<String>) -> Self {
        ParseError {
            locus: locus.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TannerGraph {
    params: CodeParams,
    variables: Vec<VariableNode>,
    checks: Vec<CheckNode>,
    groups: Vec<Vec<usize>>,
}

impl TannerGraph {
    /// Assembles a graph without checking its structure; see [`validate`](Self::validate).
    pub fn from_parts(
        params: CodeParams,
        variables: Vec<VariableNode>,
        checks: Vec<CheckNode>,
        groups: Vec<Vec<usize>>,
    ) -> Self {
        TannerGraph {
            params,
            variables,
            checks,
            groups,
        }
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn variables(&self) -> &[VariableNode] {
        &self.variables
    }

    pub fn checks(&self) -> &[CheckNode] {
        &self.checks
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    /// Information node indices in ascending order. Position in this list is
    /// the information ordinal (row of G and P).
    pub fn information_nodes(&self) -> Vec<usize> {
        self.nodes_of_kind(VariableKind::Information)
    }

    pub fn nodes_of_kind(&self, kind: VariableKind) -> Vec<usize> {
        self.variables
            .iter()
            .filter(|v| v.kind == kind)
            .map(|v| v.index)
            .collect()
    }

    pub fn global_checks(&self) -> impl Iterator<Item = &CheckNode> {
        self.checks.iter().filter(|c| c.kind == CheckKind::Global)
    }

    pub fn local_checks(&self) -> impl Iterator<Item = &CheckNode> {
        self.checks.iter().filter(|c| c.kind == CheckKind::Local)
    }

    pub fn has_edge(&self, check: usize, var: usize) -> bool {
        self.checks[check].neighbors.contains(&var)
    }

    pub fn edge_count(&self) -> usize {
        self.checks.iter().map(|c| c.neighbors.len()).sum()
    }

    /// The parity variable a check solves for: the local parity of a local
    /// check's group, or the unique global parity neighbor of a global check.
    pub fn owned_parity(&self, check: usize) -> Option<usize> {
        let c = &self.checks[check];
        let want = match c.kind {
            CheckKind::Local => VariableKind::LocalParity,
            CheckKind::Global => VariableKind::GlobalParity,
        };
        let mut owned = c
            .neighbors
            .iter()
            .copied()
            .filter(|&v| v < self.variables.len() && self.variables[v].kind == want);
        let first = owned.next();
        match owned.next() {
            None => first,
            Some(_) => None,
        }
    }

    /// Parity variable indices in check order; position is the parity ordinal
    /// (column of P). Panics on a graph that does not validate.
    pub fn parity_columns(&self) -> Vec<usize> {
        (0..self.checks.len())
            .map(|c| {
                self.owned_parity(c)
                    .expect("validated graph: every check owns one parity")
            })
            .collect()
    }

    /// Number of global checks adjacent to `var`.
    pub fn global_degree(&self, var: usize) -> usize {
        self.global_checks()
            .filter(|c| c.neighbors.contains(&var))
            .count()
    }

    pub fn group_of(&self, var: usize) -> usize {
        self.variables[var].group
    }

    /// Boolean `(n-k) x n` incidence pattern, rows are checks.
    pub fn biadjacency(&self) -> Vec<Vec<bool>> {
        self.checks
            .iter()
            .map(|c| (0..self.n()).map(|v| c.neighbors.contains(&v)).collect())
            .collect()
    }

    pub(crate) fn add_edge(&mut self, check: usize, var: usize) -> bool {
        self.checks[check].neighbors.insert(var)
    }

    /// Plain, mixed (holds a global parity) or infomixed (holds a global
    /// parity and an information node).
    pub fn classify_groups(&self) -> BTreeMap<usize, GroupClass> {
        self.groups
            .iter()
            .enumerate()
            .map(|(gid, members)| {
                let has = |kind| members.iter().any(|&v| self.variables[v].kind == kind);
                let class = match (
                    has(VariableKind::GlobalParity),
                    has(VariableKind::Information),
                ) {
                    (false, _) => GroupClass::Plain,
                    (true, false) => GroupClass::Mixed,
                    (true, true) => GroupClass::Infomixed,
                };
                (gid, class)
            })
            .collect()
    }

    /// Every broken structural rule; empty for a well-formed graph.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let p = self.params;
        let n = p.n;
        let group_count = p.group_count();

        if self.variables.len() != n {
            out.push(Violation::new(
                "variable count",
                format!("expected {n}, found {}", self.variables.len()),
            ));
        }
        for (pos, v) in self.variables.iter().enumerate() {
            if v.index != pos {
                out.push(Violation::new(
                    "variable index",
                    format!("position {pos} holds index {}", v.index),
                ));
            }
            if v.group >= group_count {
                out.push(Violation::new(
                    "variable group",
                    format!("variable {pos} names group {}", v.group),
                ));
            }
        }
        let count = |kind| self.variables.iter().filter(|v| v.kind == kind).count();
        for (kind, want) in [
            (VariableKind::Information, p.k),
            (VariableKind::LocalParity, group_count),
            (VariableKind::GlobalParity, p.global_check_count()),
        ] {
            let got = count(kind);
            if got != want {
                out.push(Violation::new(
                    "node kind count",
                    format!("{kind:?}: expected {want}, found {got}"),
                ));
            }
        }

        // groups partition [0, n) into cells of size r+1
        if self.groups.len() != group_count {
            out.push(Violation::new(
                "group count",
                format!("expected {group_count}, found {}", self.groups.len()),
            ));
        }
        let mut seen = vec![0usize; n];
        for (gid, members) in self.groups.iter().enumerate() {
            if members.len() != p.r + 1 {
                out.push(Violation::new(
                    "group size",
                    format!("group {gid} has {} members", members.len()),
                ));
            }
            let mut lp = 0;
            for &v in members {
                if v >= n {
                    out.push(Violation::new(
                        "group member",
                        format!("group {gid} names variable {v}"),
                    ));
                    continue;
                }
                seen[v] += 1;
                if let Some(node) = self.variables.get(v) {
                    if node.group != gid {
                        out.push(Violation::new(
                            "group membership",
                            format!(
                                "variable {v} is listed in group {gid} but tagged {}",
                                node.group
                            ),
                        ));
                    }
                    if node.kind == VariableKind::LocalParity {
                        lp += 1;
                    }
                }
            }
            if lp != 1 {
                out.push(Violation::new(
                    "local parity per group",
                    format!("group {gid} has {lp}"),
                ));
            }
        }
        for (v, &c) in seen.iter().enumerate() {
            if c != 1 {
                out.push(Violation::new(
                    "group partition",
                    format!("variable {v} appears in {c} groups"),
                ));
            }
        }

        if self.checks.len() != n - p.k {
            out.push(Violation::new(
                "check count",
                format!("expected {}, found {}", n - p.k, self.checks.len()),
            ));
        }
        let mut local_for_group = vec![0usize; group_count];
        let mut owner_of = BTreeMap::new();
        let mut globals = 0;
        for (pos, c) in self.checks.iter().enumerate() {
            if c.index != pos {
                out.push(Violation::new(
                    "check index",
                    format!("position {pos} holds index {}", c.index),
                ));
            }
            if let Some(&bad) = c.neighbors.iter().find(|&&v| v >= n) {
                out.push(Violation::new(
                    "check neighbor",
                    format!("check {pos} names variable {bad}"),
                ));
                continue;
            }
            match c.kind {
                CheckKind::Local => {
                    let gid = c
                        .neighbors
                        .iter()
                        .next()
                        .and_then(|&v| self.variables.get(v))
                        .map(|v| v.group);
                    let exact = gid.and_then(|g| self.groups.get(g)).is_some_and(|members| {
                        members.len() == c.neighbors.len()
                            && members.iter().all(|v| c.neighbors.contains(v))
                    });
                    match (gid, exact) {
                        (Some(g), true) if g < group_count => local_for_group[g] += 1,
                        _ => out.push(Violation::new(
                            "local check span",
                            format!("check {pos} is not wired to exactly one whole group"),
                        )),
                    }
                }
                CheckKind::Global => {
                    globals += 1;
                    let gps: Vec<usize> = c
                        .neighbors
                        .iter()
                        .copied()
                        .filter(|&v| {
                            self.variables
                                .get(v)
                                .is_some_and(|x| x.kind == VariableKind::GlobalParity)
                        })
                        .collect();
                    if gps.len() != 1 {
                        out.push(Violation::new(
                            "global check ownership",
                            format!("check {pos} has {} global parity neighbors", gps.len()),
                        ));
                    } else if let Some(prev) = owner_of.insert(gps[0], pos) {
                        out.push(Violation::new(
                            "global parity shared",
                            format!("variable {} owned by checks {prev} and {pos}", gps[0]),
                        ));
                    }
                }
            }
        }
        for (g, &cnt) in local_for_group.iter().enumerate() {
            if cnt > 1 {
                out.push(Violation::new(
                    "duplicate local check",
                    format!("group {g}"),
                ));
            } else if cnt == 0 {
                out.push(Violation::new("missing local check", format!("group {g}")));
            }
        }
        if globals != p.global_check_count() {
            out.push(Violation::new(
                "global check count",
                format!("expected {}, found {globals}", p.global_check_count()),
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDocument {
            version: FORMAT_VERSION.to_string(),
            params: self.params,
            variables: self.variables.clone(),
            checks: self.checks.clone(),
            groups: self.groups.clone(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
        s.push('\n');
        s
    }

    /// Parses a graph document and checks shape consistency. Structural
    /// rules are left to [`validate`](Self::validate).
    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let doc: GraphDocument = serde_json::from_str(text).map_err(|e| {
            ParseError::at(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        if doc.version != FORMAT_VERSION {
            return Err(ParseError::at(
                "version",
                format!("unsupported version {:?}", doc.version),
            ));
        }
        let p = doc.params;
        let params = CodeParams::new(p.n, p.k, p.d, p.r)
            .map_err(|e| ParseError::at("params", e.to_string()))?;
        if doc.variables.len() != params.n {
            return Err(ParseError::at(
                "variables",
                format!("n={} but {} variables", params.n, doc.variables.len()),
            ));
        }
        if let Some((pos, v)) = doc
            .variables
            .iter()
            .enumerate()
            .find(|(pos, v)| v.index != *pos)
        {
            return Err(ParseError::at(
                format!("variables[{pos}].index"),
                format!("expected {pos}, found {}", v.index),
            ));
        }
        if doc.checks.len() != params.n - params.k {
            return Err(ParseError::at(
                "checks",
                format!(
                    "n-k={} but {} checks",
                    params.n - params.k,
                    doc.checks.len()
                ),
            ));
        }
        for (pos, c) in doc.checks.iter().enumerate() {
            if c.index != pos {
                return Err(ParseError::at(
                    format!("checks[{pos}].index"),
                    format!("expected {pos}, found {}", c.index),
                ));
            }
            if let Some(v) = c.neighbors.iter().find(|&&v| v >= params.n) {
                return Err(ParseError::at(
                    format!("checks[{pos}].neighbors"),
                    format!("variable {v} out of range"),
                ));
            }
        }
        if let Some((g, _)) = doc
            .groups
            .iter()
            .enumerate()
            .find(|(_, m)| m.iter().any(|&v| v >= params.n))
        {
            return Err(ParseError::at(
                format!("groups[{g}]"),
                "variable index out of range",
            ));
        }
        Ok(TannerGraph {
            params,
            variables: doc.variables,
            checks: doc.checks,
            groups: doc.groups,
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    version: String,
    params: CodeParams,
    variables: Vec<VariableNode>,
    checks: Vec<CheckNode>,
    groups: Vec<Vec<usize>>,
}
