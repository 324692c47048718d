//! In-process storage cluster: one block of every stripe per virtual node,
//! workload replay, and block-count metrics for parity writes and repair
//! reads.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builder::CodeRealization;
use crate::codec::{
    self, decode_erasures, encode, local_repair, CodecError, ErasurePattern, MatrixFile, Stripe,
    StripeFile,
};
use crate::field::{FieldElement, FieldMatrix};
use crate::graph::{CodeParams, TannerGraph};
use crate::updatemeter::decimal;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("event {seq}: {reason}")]
    BadEvent { seq: u64, reason: String },
    #[error("event {seq}: {error}")]
    Codec { seq: u64, error: CodecError },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {error}")]
    Io {
        path: PathBuf,
        error: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    Update {
        stripe: u64,
        index: usize,
        payload: Vec<u16>,
    },
    Fail {
        node: usize,
    },
    Repair {
        node: usize,
    },
    BatchUpdate {
        stripe: u64,
        indices: Vec<usize>,
        payloads: Vec<Vec<u16>>,
    },
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Serializes a trace as JSON Lines.
pub fn trace_to_jsonl(trace: &[WorkloadEvent]) -> String {
    let mut out = String::new();
    for ev in trace {
        out.push_str(&serde_json::to_string(ev).expect("events serialize"));
        out.push('\n');
    }
    out
}

pub fn trace_from_jsonl(text: &str) -> Result<Vec<WorkloadEvent>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(no, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", no + 1)))
        .collect()
}

/// Per-event accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub kind: String,
    pub parity_writes: usize,
    pub repair_reads: usize,
    /// Blocks read to reconstruct an updated block that sits on a failed node.
    pub degraded_reads: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub events: Vec<EventRecord>,
    pub updates: u64,
    pub parity_writes: u64,
    pub repairs: u64,
    pub repair_reads: u64,
    pub degraded_reads: u64,
    /// Parity writes per update event -> number of events.
    pub write_histogram: BTreeMap<usize, u64>,
}

impl Metrics {
    /// Exact mean parity writes per update event (0 when there were none).
    pub fn mean_parity_writes(&self) -> Ratio<u64> {
        if self.updates == 0 {
            return Ratio::from_integer(0);
        }
        Ratio::new(self.parity_writes, self.updates)
    }

    fn record(&mut self, rec: EventRecord, is_update: bool) {
        if is_update {
            self.updates += 1;
            self.parity_writes += rec.parity_writes as u64;
            *self.write_histogram.entry(rec.parity_writes).or_default() += 1;
        }
        if rec.kind == "repair" {
            self.repairs += 1;
        }
        self.repair_reads += rec.repair_reads as u64;
        self.degraded_reads += rec.degraded_reads as u64;
        self.events.push(rec);
    }

    pub fn summary(&self) -> MetricsSummary {
        let mean = self.mean_parity_writes();
        let signed = Ratio::new(*mean.numer() as i64, *mean.denom() as i64);
        MetricsSummary {
            updates: self.updates,
            parity_writes: self.parity_writes,
            mean_parity_writes_num: *mean.numer(),
            mean_parity_writes_den: *mean.denom(),
            mean_parity_writes_decimal: decimal(&signed, 4),
            repairs: self.repairs,
            repair_reads: self.repair_reads,
            degraded_reads: self.degraded_reads,
            write_histogram: self.write_histogram.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            summary: MetricsSummary,
            events: &'a [EventRecord],
        }
        let mut s = serde_json::to_string_pretty(&Out {
            summary: self.summary(),
            events: &self.events,
        })
        .expect("metrics serialize");
        s.push('\n');
        s
    }

    /// One row per event.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seq,kind,parity_writes,repair_reads,degraded_reads\n");
        for e in &self.events {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.seq, e.kind, e.parity_writes, e.repair_reads, e.degraded_reads
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub updates: u64,
    pub parity_writes: u64,
    pub mean_parity_writes_num: u64,
    pub mean_parity_writes_den: u64,
    pub mean_parity_writes_decimal: String,
    pub repairs: u64,
    pub repair_reads: u64,
    pub degraded_reads: u64,
    pub write_histogram: BTreeMap<usize, u64>,
}

/// Virtual nodes holding one block of each stripe.
#[derive(Debug, Clone)]
pub struct Cluster {
    realization: CodeRealization,
    /// Block index -> node.
    placement: Vec<usize>,
    failed: BTreeSet<usize>,
    stripes: BTreeMap<u64, Stripe>,
    metrics: Metrics,
}

impl Cluster {
    pub fn provision(real: CodeRealization) -> Self {
        let n = real.graph().n();
        Cluster {
            realization: real,
            placement: (0..n).collect(),
            failed: BTreeSet::new(),
            stripes: BTreeMap::new(),
            metrics: Metrics::default(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.placement.len()
    }

    pub fn placement(&self) -> &[usize] {
        &self.placement
    }

    pub fn realization(&self) -> &CodeRealization {
        &self.realization
    }

    pub fn failed_nodes(&self) -> &BTreeSet<usize> {
        &self.failed
    }

    pub fn stripes(&self) -> &BTreeMap<u64, Stripe> {
        &self.stripes
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    fn block_on(&self, node: usize) -> Option<usize> {
        self.placement.iter().position(|&p| p == node)
    }

    /// Encodes `data` (`l x k`) and stores it; blocks on failed nodes are
    /// dropped immediately.
    pub fn put_stripe(&mut self, id: u64, data: &FieldMatrix) -> Result<(), CodecError> {
        let mut s = encode(&self.realization, data)?;
        let lost: Vec<usize> = self
            .failed
            .iter()
            .filter_map(|&v| self.block_on(v))
            .collect();
        s.erase(&ErasurePattern::new(lost))?;
        self.stripes.insert(id, s);
        Ok(())
    }

    /// Stores stripes `0..count` of `rows` rows with seeded random data.
    pub fn fill_random(&mut self, count: u64, rows: usize, seed: u64) -> Result<(), CodecError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = self.realization.field().clone();
        let k = self.realization.graph().k();
        for id in 0..count {
            let vals: Vec<u16> = (0..rows * k)
                .map(|_| field.random(&mut rng).value())
                .collect();
            self.put_stripe(id, &FieldMatrix::from_values(rows, k, &vals)?)?;
        }
        Ok(())
    }

    /// Applies `trace` in sequence order and returns the metrics gathered
    /// by this call. The cluster's running metrics are extended as well.
    pub fn replay(&mut self, trace: &[WorkloadEvent]) -> Result<Metrics, ReplayError> {
        let mut local = Metrics::default();
        let mut last: Option<u64> = None;
        for ev in trace {
            if last.is_some_and(|s| ev.seq <= s) {
                return Err(ReplayError::BadEvent {
                    seq: ev.seq,
                    reason: format!("sequence number not above {}", last.unwrap_or(0)),
                });
            }
            last = Some(ev.seq);
            let (rec, is_update) = self.apply(ev)?;
            local.record(rec.clone(), is_update);
            self.metrics.record(rec, is_update);
        }
        Ok(local)
    }

    fn apply(&mut self, ev: &WorkloadEvent) -> Result<(EventRecord, bool), ReplayError> {
        let seq = ev.seq;
        let bad = |reason: String| ReplayError::BadEvent { seq, reason };
        let codec_err = |source: CodecError| ReplayError::Codec { seq, error: source };
        let mut rec = EventRecord {
            seq,
            kind: String::new(),
            parity_writes: 0,
            repair_reads: 0,
            degraded_reads: 0,
        };
        match &ev.kind {
            EventKind::Update {
                stripe,
                index,
                payload,
            } => {
                rec.kind = "update".into();
                let (writes, degraded) = self
                    .update(*stripe, &[(*index, payload.as_slice())])
                    .map_err(|e| e.into_replay(seq))?;
                rec.parity_writes = writes;
                rec.degraded_reads = degraded;
                Ok((rec, true))
            }
            EventKind::BatchUpdate {
                stripe,
                indices,
                payloads,
            } => {
                rec.kind = "batch_update".into();
                if indices.len() != payloads.len() || indices.is_empty() {
                    return Err(bad(format!(
                        "{} indices with {} payloads",
                        indices.len(),
                        payloads.len()
                    )));
                }
                let distinct: BTreeSet<_> = indices.iter().collect();
                if distinct.len() != indices.len() {
                    return Err(bad("repeated information index".into()));
                }
                let items: Vec<(usize, &[u16])> = indices
                    .iter()
                    .copied()
                    .zip(payloads.iter().map(Vec::as_slice))
                    .collect();
                let (writes, degraded) = self
                    .update(*stripe, &items)
                    .map_err(|e| e.into_replay(seq))?;
                rec.parity_writes = writes;
                rec.degraded_reads = degraded;
                Ok((rec, true))
            }
            EventKind::Fail { node } => {
                rec.kind = "fail".into();
                let block = self
                    .block_on(*node)
                    .ok_or_else(|| bad(format!("no node {node}")))?;
                if !self.failed.insert(*node) {
                    return Err(bad(format!("node {node} already failed")));
                }
                for s in self.stripes.values_mut() {
                    s.erase(&ErasurePattern::new([block])).map_err(codec_err)?;
                }
                Ok((rec, false))
            }
            EventKind::Repair { node } => {
                rec.kind = "repair".into();
                if !self.failed.contains(node) {
                    return Err(bad(format!(
                        "repair of node {node} without a prior failure"
                    )));
                }
                let block = self.block_on(*node).expect("failed nodes are placed");
                let single = self.failed.len() == 1;
                let mut reads = 0;
                let real = &self.realization;
                for s in self.stripes.values_mut() {
                    let column = if single {
                        let (col, read) = local_repair(real, s, block).map_err(codec_err)?;
                        reads += read.len();
                        col
                    } else {
                        let out = decode_erasures(real, s, &ErasurePattern::default())
                            .map_err(codec_err)?;
                        reads += out.blocks_read.len();
                        out.stripe.block(block).expect("decoded").to_vec()
                    };
                    s.set_block(block, column).map_err(codec_err)?;
                }
                self.failed.remove(node);
                rec.repair_reads = reads;
                Ok((rec, false))
            }
        }
    }

    /// Applies several information updates to one stripe. Returns the
    /// number of distinct parity blocks written and any degraded reads.
    fn update(
        &mut self,
        id: u64,
        items: &[(usize, &[u16])],
    ) -> Result<(usize, usize), UpdateError> {
        let real = &self.realization;
        let field = real.field();
        let k = real.graph().k();
        let stripe = self
            .stripes
            .get(&id)
            .ok_or_else(|| UpdateError::Bad(format!("no stripe {id}")))?;
        let mut work = stripe.clone();
        let lost = work.missing();
        let mut degraded = 0;
        let needs_decode = items
            .iter()
            .any(|&(i, _)| i < k && work.block(real.info_columns()[i]).is_none());
        if needs_decode {
            let out = decode_erasures(real, &work, &ErasurePattern::default())?;
            degraded = out.blocks_read.len();
            work = out.stripe;
        }
        let mut written = BTreeSet::new();
        for &(i, payload) in items {
            if i >= k {
                return Err(UpdateError::Bad(format!(
                    "information index {i} >= k = {k}"
                )));
            }
            if payload.len() != work.rows() {
                return Err(UpdateError::Bad(format!(
                    "payload of {} symbols for a stripe of {} rows",
                    payload.len(),
                    work.rows()
                )));
            }
            let column = payload
                .iter()
                .map(|&v| field.element(u32::from(v)))
                .collect::<Result<Vec<FieldElement>, _>>()
                .map_err(CodecError::from)?;
            let (next, w) = codec::apply_update(real, &work, i, &column)?;
            work = next;
            written.extend(w);
        }
        work.erase(&ErasurePattern::new(lost))?;
        self.stripes.insert(id, work);
        Ok((written.len(), degraded))
    }

    /// Writes the cluster to `dir`: the code as `graph.json` and
    /// `matrix.txt`, each stripe as `stripe-<id>.bin`, and `cluster.json`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| io_err(&path, e))
        };
        write("graph.json", self.realization.graph().to_json().as_bytes())?;
        write(
            "matrix.txt",
            MatrixFile::from_realization(&self.realization)
                .to_text()
                .as_bytes(),
        )?;
        let field = self.realization.field();
        for (id, s) in &self.stripes {
            let file = StripeFile {
                m: field.degree(),
                polynomial: field.polynomial(),
                payload_len: 0,
                stripe: s.clone(),
            };
            write(&stripe_name(*id), &file.to_bytes())?;
        }
        let manifest = ClusterManifest {
            version: 1,
            params: *self.realization.params(),
            placement: self.placement.clone(),
            failed: self.failed.clone(),
            stripes: self.stripes.keys().copied().collect(),
            metrics: self.metrics.clone(),
        };
        let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        json.push('\n');
        write("cluster.json", json.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self, StoreError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|e| io_err(&path, e))
        };
        let parse_err = |name: &str, message: String| StoreError::Parse {
            path: dir.join(name),
            message,
        };
        let text =
            |name: &str| String::from_utf8(read(name)?).map_err(|e| parse_err(name, e.to_string()));
        let graph = TannerGraph::from_json(&text("graph.json")?)
            .map_err(|e| parse_err("graph.json", e.to_string()))?;
        let real = MatrixFile::parse(&text("matrix.txt")?)?.realize(graph)?;
        let manifest: ClusterManifest = serde_json::from_str(&text("cluster.json")?)
            .map_err(|e| parse_err("cluster.json", e.to_string()))?;
        let n = real.graph().n();
        let mut sorted = manifest.placement.clone();
        sorted.sort_unstable();
        if manifest.params != *real.params() || sorted != (0..n).collect::<Vec<_>>() {
            return Err(parse_err(
                "cluster.json",
                "params or placement disagree with the stored code".into(),
            ));
        }
        let mut stripes = BTreeMap::new();
        for id in manifest.stripes {
            let name = stripe_name(id);
            let file = StripeFile::from_bytes(&read(&name)?)?;
            if file.m != real.field().degree() || file.polynomial != real.field().polynomial() {
                return Err(parse_err(
                    &name,
                    "field disagrees with the stored code".into(),
                ));
            }
            stripes.insert(id, file.stripe);
        }
        Ok(Cluster {
            realization: real,
            placement: manifest.placement,
            failed: manifest.failed,
            stripes,
            metrics: manifest.metrics,
        })
    }
}

enum UpdateError {
    Bad(String),
    Codec(CodecError),
}

impl From<CodecError> for UpdateError {
    fn from(e: CodecError) -> Self {
        UpdateError::Codec(e)
    }
}

impl UpdateError {
    fn into_replay(self, seq: u64) -> ReplayError {
        match self {
            UpdateError::Bad(reason) => ReplayError::BadEvent { seq, reason },
            UpdateError::Codec(source) => ReplayError::Codec { seq, error: source },
        }
    }
}

fn io_err(path: &Path, error: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.to_path_buf(),
        error,
    }
}

fn stripe_name(id: u64) -> String {
    format!("stripe-{id}.bin")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterManifest {
    version: u32,
    params: CodeParams,
    placement: Vec<usize>,
    failed: BTreeSet<usize>,
    stripes: Vec<u64>,
    metrics: Metrics,
}

/// Event proportions for [`random_workload`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMix {
    pub update: f64,
    pub batch_update: f64,
    /// Fail or repair; a repair is drawn only while some node is down.
    pub failure: f64,
    pub batch_size: usize,
    pub stripes: u64,
    pub rows: usize,
    /// Upper bound on simultaneously failed nodes.
    pub max_failed: usize,
}

impl WorkloadMix {
    pub fn updates_only(stripes: u64, rows: usize) -> Self {
        WorkloadMix {
            update: 1.0,
            batch_update: 0.0,
            failure: 0.0,
            batch_size: 2,
            stripes,
            rows,
            max_failed: 0,
        }
    }

    pub fn validate(&self, params: &CodeParams) -> Result<(), String> {
        let parts = [self.update, self.batch_update, self.failure];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err("mix proportions must lie in [0, 1]".into());
        }
        if ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err("mix proportions must sum to 1".into());
        }
        if self.stripes == 0 || self.rows == 0 {
            return Err("need at least one stripe and one row".into());
        }
        if self.batch_update > 0.0 && !(1..=params.k).contains(&self.batch_size) {
            return Err(format!("batch size must be in 1..={}", params.k));
        }
        Ok(())
    }
}

/// Seeded random trace with stripe ids in `[0, mix.stripes)`.
pub fn random_workload(
    params: &CodeParams,
    mix: &WorkloadMix,
    length: usize,
    seed: u64,
    field_size: u32,
) -> Result<Vec<WorkloadEvent>, String> {
    mix.validate(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failed: BTreeSet<usize> = BTreeSet::new();
    let payload = |rng: &mut ChaCha8Rng| -> Vec<u16> {
        (0..mix.rows)
            .map(|_| rng.gen_range(0..field_size) as u16)
            .collect()
    };
    let mut trace = Vec::with_capacity(length);
    for seq in 0..length as u64 {
        let x: f64 = rng.gen();
        let kind = if x < mix.update {
            EventKind::Update {
                stripe: rng.gen_range(0..mix.stripes),
                index: rng.gen_range(0..params.k),
                payload: payload(&mut rng),
            }
        } else if x < mix.update + mix.batch_update {
            let stripe = rng.gen_range(0..mix.stripes);
            let indices = rand::seq::index::sample(&mut rng, params.k, mix.batch_size).into_vec();
            let payloads = indices.iter().map(|_| payload(&mut rng)).collect();
            EventKind::BatchUpdate {
                stripe,
                indices,
                payloads,
            }
        } else {
            let can_fail = failed.len() < mix.max_failed.min(params.n);
            if !failed.is_empty() && (!can_fail || rng.gen_bool(0.5)) {
                let down: Vec<usize> = failed.iter().copied().collect();
                let node = down[rng.gen_range(0..down.len())];
                failed.remove(&node);
                EventKind::Repair { node }
            } else if can_fail {
                let up: Vec<usize> = (0..params.n).filter(|v| !failed.contains(v)).collect();
                let node = up[rng.gen_range(0..up.len())];
                failed.insert(node);
                EventKind::Fail { node }
            } else {
                EventKind::Update {
                    stripe: rng.gen_range(0..mix.stripes),
                    index: rng.gen_range(0..params.k),
                    payload: payload(&mut rng),
                }
            }
        };
        trace.push(WorkloadEvent { seq, kind });
    }
    Ok(trace)
}

/// One update of every information index of `stripe`, with payloads from
/// `seed`.
pub fn singles_trace(
    k: usize,
    stripe: u64,
    rows: usize,
    seed: u64,
    field_size: u32,
) -> Vec<WorkloadEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|i| WorkloadEvent {
            seq: i as u64,
            kind: EventKind::Update {
                stripe,
                index: i,
                payload: (0..rows)
                    .map(|_| rng.gen_range(0..field_size) as u16)
                    .collect(),
            },
        })
        .collect()
}

/// One batch update for every pair of information indices of `stripe`.
pub fn pairs_trace(
    k: usize,
    stripe: u64,
    rows: usize,
    seed: u64,
    field_size: u32,
) -> Vec<WorkloadEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let payloads = (0..2)
                .map(|_| {
                    (0..rows)
                        .map(|_| rng.gen_range(0..field_size) as u16)
                        .collect()
                })
                .collect();
            trace.push(WorkloadEvent {
                seq: trace.len() as u64,
                kind: EventKind::BatchUpdate {
                    stripe,
                    indices: vec![a, b],
                    payloads,
                },
            });
        }
    }
    trace
}
