//! Systematic encoding, erasure decoding, local repair and delta updates on
//! multi-row stripes, plus the stripe and matrix file formats.
//!
//! Blocks are indexed by variable index (one block per storage node). The
//! data column of information ordinal `i` is stored in block
//! `info_columns()[i]`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::builder::{BuildError, CodeRealization};
use crate::field::{FieldContext, FieldElement, FieldError, FieldMatrix};
use crate::graph::{CodeParams, TannerGraph};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("block {0} is out of range")]
    BadIndex(usize),
    #[error("block {0} is missing")]
    MissingBlock(usize),
    #[error("block {0} is not erased")]
    NotErased(usize),
    #[error("erasure pattern {erased:?} is undecodable (rank {rank} < {needed})")]
    Undecodable {
        erased: Vec<usize>,
        rank: usize,
        needed: usize,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// `l` rows of `n` symbols; each block (column) may be absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripe {
    k: usize,
    l: usize,
    blocks: Vec<Option<Vec<FieldElement>>>,
}

impl Stripe {
    pub fn n(&self) -> usize {
        self.blocks.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.l
    }

    pub fn block(&self, j: usize) -> Option<&[FieldElement]> {
        self.blocks.get(j).and_then(|b| b.as_deref())
    }

    pub fn blocks(&self) -> &[Option<Vec<FieldElement>>] {
        &self.blocks
    }

    pub fn is_complete(&self) -> bool {
        self.blocks.iter().all(Option::is_some)
    }

    pub fn missing(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&j| self.blocks[j].is_none())
            .collect()
    }

    /// Drops the given blocks.
    pub fn erase(&mut self, pattern: &ErasurePattern) -> Result<(), CodecError> {
        for &j in &pattern.erased {
            if j >= self.n() {
                return Err(CodecError::BadIndex(j));
            }
            self.blocks[j] = None;
        }
        Ok(())
    }

    pub fn set_block(&mut self, j: usize, column: Vec<FieldElement>) -> Result<(), CodecError> {
        if j >= self.n() {
            return Err(CodecError::BadIndex(j));
        }
        if column.len() != self.l {
            return Err(CodecError::ShapeMismatch(format!(
                "block of {} symbols in a stripe of {} rows",
                column.len(),
                self.l
            )));
        }
        self.blocks[j] = Some(column);
        Ok(())
    }

    /// `l x k` information symbols, if all information blocks are present.
    pub fn data(&self, real: &CodeRealization) -> Result<FieldMatrix, CodecError> {
        let mut data = FieldMatrix::zeros(self.l, self.k);
        for (i, &col) in real.info_columns().iter().enumerate() {
            let block = self.block(col).ok_or(CodecError::MissingBlock(col))?;
            for (t, &s) in block.iter().enumerate() {
                data[(t, i)] = s;
            }
        }
        Ok(data)
    }

    /// `l x n` coded symbols, if complete.
    pub fn coded(&self) -> Result<FieldMatrix, CodecError> {
        let mut y = FieldMatrix::zeros(self.l, self.n());
        for j in 0..self.n() {
            let block = self.block(j).ok_or(CodecError::MissingBlock(j))?;
            for (t, &s) in block.iter().enumerate() {
                y[(t, j)] = s;
            }
        }
        Ok(y)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErasurePattern {
    pub erased: BTreeSet<usize>,
}

impl ErasurePattern {
    pub fn new(erased: impl IntoIterator<Item = usize>) -> Self {
        ErasurePattern {
            erased: erased.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.erased.len()
    }

    pub fn is_empty(&self) -> bool {
        self.erased.is_empty()
    }

    /// Guaranteed decodable when at most `d - 1` blocks are erased.
    pub fn within_distance(&self, params: &CodeParams) -> bool {
        self.erased.len() < params.d
    }
}

/// Result of a global decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub stripe: Stripe,
    /// Surviving blocks the solver actually used.
    pub blocks_read: BTreeSet<usize>,
}

pub fn encode(real: &CodeRealization, data: &FieldMatrix) -> Result<Stripe, CodecError> {
    let k = real.graph().k();
    if data.cols() != k || data.rows() == 0 {
        return Err(CodecError::ShapeMismatch(format!(
            "data is {}x{}, expected lx{k} with l >= 1",
            data.rows(),
            data.cols()
        )));
    }
    let field = real.field();
    if let Some(bad) = data.values().find(|s| u32::from(s.value()) >= field.size()) {
        return Err(FieldError::OutOfRange {
            value: u32::from(bad.value()),
            m: field.degree(),
        }
        .into());
    }
    let y = field.mat_mul(data, real.generator())?;
    let l = data.rows();
    let blocks = (0..y.cols()).map(|j| Some(y.column(j))).collect();
    Ok(Stripe { k, l, blocks })
}

/// Recovers every missing block of `stripe` plus the blocks in `pattern`.
pub fn decode_erasures(
    real: &CodeRealization,
    stripe: &Stripe,
    pattern: &ErasurePattern,
) -> Result<Decoded, CodecError> {
    check_shape(real, stripe)?;
    let mut erased: BTreeSet<usize> = stripe.missing().into_iter().collect();
    for &j in &pattern.erased {
        if j >= stripe.n() {
            return Err(CodecError::BadIndex(j));
        }
        erased.insert(j);
    }
    let mut out = stripe.clone();
    if erased.is_empty() {
        return Ok(Decoded {
            stripe: out,
            blocks_read: BTreeSet::new(),
        });
    }
    for &j in &erased {
        out.blocks[j] = None;
    }

    let field = real.field();
    let h = real.parity_check();
    let erased_cols: Vec<usize> = erased.iter().copied().collect();
    let a = h.select_columns(&erased_cols);
    let rank = field.mat_rank(&a);
    if rank < erased_cols.len() {
        return Err(CodecError::Undecodable {
            erased: erased_cols,
            rank,
            needed: erased.len(),
        });
    }
    // H_E y_E = H_S y_S in characteristic 2, one right-hand side per row
    let mut b = FieldMatrix::zeros(h.rows(), out.l);
    for (j, block) in out.blocks.iter().enumerate() {
        let Some(block) = block else { continue };
        for i in 0..h.rows() {
            let c = h[(i, j)];
            if c.is_zero() {
                continue;
            }
            for (t, &s) in block.iter().enumerate() {
                b[(i, t)] = field.add(b[(i, t)], field.mul(c, s));
            }
        }
    }
    let (x, pivot_rows) = field.solve(&a, &b)?;
    let mut blocks_read = BTreeSet::new();
    for &i in &pivot_rows {
        for j in 0..stripe.n() {
            if !erased.contains(&j) && !h[(i, j)].is_zero() {
                blocks_read.insert(j);
            }
        }
    }
    for (e, &j) in erased_cols.iter().enumerate() {
        out.blocks[j] = Some(x.row(e).to_vec());
    }
    Ok(Decoded {
        stripe: out,
        blocks_read,
    })
}

/// Rebuilds the single missing block `failed` from its local check alone.
/// Returns the repaired column and the `r` blocks read.
pub fn local_repair(
    real: &CodeRealization,
    stripe: &Stripe,
    failed: usize,
) -> Result<(Vec<FieldElement>, BTreeSet<usize>), CodecError> {
    check_shape(real, stripe)?;
    if failed >= stripe.n() {
        return Err(CodecError::BadIndex(failed));
    }
    if stripe.block(failed).is_some() {
        return Err(CodecError::NotErased(failed));
    }
    let graph = real.graph();
    let field = real.field();
    let h = real.parity_check();
    // local check index equals group index
    let check = graph.group_of(failed);
    let inv = field.inv(h[(check, failed)])?;
    let mut column = vec![FieldElement::ZERO; stripe.l];
    let mut read = BTreeSet::new();
    for &j in &graph.groups()[check] {
        if j == failed {
            continue;
        }
        let block = stripe.block(j).ok_or(CodecError::MissingBlock(j))?;
        let c = h[(check, j)];
        for (t, &s) in block.iter().enumerate() {
            column[t] = field.add(column[t], field.mul(c, s));
        }
        read.insert(j);
    }
    for s in column.iter_mut() {
        *s = field.mul(*s, inv);
    }
    Ok((column, read))
}

/// Replaces the data column of information ordinal `i` and patches the
/// affected parity blocks by `delta * P(i, j)`. Missing parity blocks are
/// left missing. The returned set lists every parity block in row `i` of
/// the support, including on a zero delta.
pub fn apply_update(
    real: &CodeRealization,
    stripe: &Stripe,
    i: usize,
    new_column: &[FieldElement],
) -> Result<(Stripe, BTreeSet<usize>), CodecError> {
    check_shape(real, stripe)?;
    let k = real.graph().k();
    if i >= k {
        return Err(CodecError::BadIndex(i));
    }
    if new_column.len() != stripe.l {
        return Err(CodecError::ShapeMismatch(format!(
            "update of {} symbols in a stripe of {} rows",
            new_column.len(),
            stripe.l
        )));
    }
    let field = real.field();
    let col = real.info_columns()[i];
    let old = stripe.block(col).ok_or(CodecError::MissingBlock(col))?;
    let delta: Vec<FieldElement> = old
        .iter()
        .zip(new_column)
        .map(|(&a, &b)| field.sub(b, a))
        .collect();
    let mut out = stripe.clone();
    out.blocks[col] = Some(new_column.to_vec());
    let p = real.parity_block();
    let mut written = BTreeSet::new();
    for (j, &pc) in real.parity_columns().iter().enumerate() {
        let coef = p[(i, j)];
        if coef.is_zero() {
            continue;
        }
        written.insert(pc);
        if let Some(block) = out.blocks[pc].as_mut() {
            for (s, &dl) in block.iter_mut().zip(&delta) {
                *s = field.add(*s, field.mul(coef, dl));
            }
        }
    }
    Ok((out, written))
}

fn check_shape(real: &CodeRealization, stripe: &Stripe) -> Result<(), CodecError> {
    let (n, k) = (real.graph().n(), real.graph().k());
    if stripe.n() != n || stripe.k != k {
        return Err(CodecError::ShapeMismatch(format!(
            "stripe is ({}, {}), code is ({n}, {k})",
            stripe.n(),
            stripe.k
        )));
    }
    Ok(())
}

// ---- byte payloads ----

/// Bits of payload carried per symbol when packing files.
pub fn payload_bits(field: &FieldContext) -> Result<u32, CodecError> {
    match field.degree() {
        16 => Ok(16),
        8..=15 => Ok(8),
        m => Err(CodecError::Format(format!(
            "byte payloads need m >= 8, field has m = {m}"
        ))),
    }
}

/// Splits `bytes` into `k` equal information blocks (zero padded) of `l`
/// symbols each; block `i` holds a contiguous chunk.
pub fn data_from_bytes(
    field: &FieldContext,
    k: usize,
    bytes: &[u8],
) -> Result<FieldMatrix, CodecError> {
    let symbols: Vec<u16> = match payload_bits(field)? {
        16 => bytes
            .chunks(2)
            .map(|c| u16::from_le_bytes([c[0], *c.get(1).unwrap_or(&0)]))
            .collect(),
        _ => bytes.iter().map(|&b| u16::from(b)).collect(),
    };
    let l = symbols.len().div_ceil(k).max(1);
    let mut data = FieldMatrix::zeros(l, k);
    for (idx, &s) in symbols.iter().enumerate() {
        data[(idx % l, idx / l)] = FieldElement(s);
    }
    Ok(data)
}

/// Inverse of [`data_from_bytes`], truncated to `len` bytes.
pub fn bytes_from_data(
    field: &FieldContext,
    data: &FieldMatrix,
    len: usize,
) -> Result<Vec<u8>, CodecError> {
    let bits = payload_bits(field)?;
    let l = data.rows();
    let mut out = Vec::with_capacity(len + 1);
    for i in 0..data.cols() {
        for t in 0..l {
            let v = data[(t, i)].value();
            if bits == 16 {
                out.extend_from_slice(&v.to_le_bytes());
            } else {
                out.push(v as u8);
            }
        }
    }
    if out.len() < len {
        return Err(CodecError::Format(format!(
            "payload length {len} exceeds the {} bytes held by the stripe",
            out.len()
        )));
    }
    out.truncate(len);
    Ok(out)
}

// ---- stripe file ----

const STRIPE_MAGIC: &[u8; 8] = b"LRCSTRIP";
const STRIPE_VERSION: u8 = 1;

/// Stripe contents as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripeFile {
    pub m: u32,
    pub polynomial: u32,
    /// Byte length of the original payload, 0 when not file-backed.
    pub payload_len: u64,
    pub stripe: Stripe,
}

impl StripeFile {
    /// Layout: magic, version, m, n (u16), k (u16), l (u32), polynomial
    /// (u32), payload_len (u64), one presence byte per block, then blocks in
    /// order. Symbols are 1 byte for m <= 8, otherwise 2 bytes LE. Integers
    /// are little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.stripe;
        let mut out = Vec::new();
        out.extend_from_slice(STRIPE_MAGIC);
        out.push(STRIPE_VERSION);
        out.push(self.m as u8);
        out.extend_from_slice(&(s.n() as u16).to_le_bytes());
        out.extend_from_slice(&(s.k as u16).to_le_bytes());
        out.extend_from_slice(&(s.l as u32).to_le_bytes());
        out.extend_from_slice(&self.polynomial.to_le_bytes());
        out.extend_from_slice(&self.payload_len.to_le_bytes());
        out.extend(s.blocks.iter().map(|b| u8::from(b.is_some())));
        for b in &s.blocks {
            let zeros;
            let syms: &[FieldElement] = match b {
                Some(b) => b,
                None => {
                    zeros = vec![FieldElement::ZERO; s.l];
                    &zeros
                }
            };
            for sym in syms {
                if self.m <= 8 {
                    out.push(sym.value() as u8);
                } else {
                    out.extend_from_slice(&sym.value().to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != STRIPE_MAGIC {
            return Err(CodecError::Format("bad magic".into()));
        }
        let version = cur.take(1)?[0];
        if version != STRIPE_VERSION {
            return Err(CodecError::Format(format!("unsupported version {version}")));
        }
        let m = u32::from(cur.take(1)?[0]);
        let n = usize::from(u16::from_le_bytes(cur.array()?));
        let k = usize::from(u16::from_le_bytes(cur.array()?));
        let l = u32::from_le_bytes(cur.array()?) as usize;
        let polynomial = u32::from_le_bytes(cur.array()?);
        let payload_len = u64::from_le_bytes(cur.array()?);
        if k == 0 || k >= n || l == 0 {
            return Err(CodecError::Format(format!("bad header n={n} k={k} l={l}")));
        }
        let presence = cur.take(n)?.to_vec();
        let width = if m <= 8 { 1 } else { 2 };
        let limit = 1u32 << m.min(16);
        let mut blocks = Vec::with_capacity(n);
        for (j, &present) in presence.iter().enumerate() {
            let raw = cur.take(l * width)?;
            let syms: Vec<FieldElement> = raw
                .chunks(width)
                .map(|c| {
                    FieldElement(if width == 1 {
                        u16::from(c[0])
                    } else {
                        u16::from_le_bytes([c[0], c[1]])
                    })
                })
                .collect();
            if let Some(bad) = syms.iter().find(|s| u32::from(s.value()) >= limit) {
                return Err(CodecError::Format(format!(
                    "block {j} holds symbol {} outside GF(2^{m})",
                    bad.value()
                )));
            }
            blocks.push(match present {
                0 => None,
                1 => Some(syms),
                other => {
                    return Err(CodecError::Format(format!(
                        "presence byte {other} for block {j}"
                    )))
                }
            });
        }
        if cur.pos != bytes.len() {
            return Err(CodecError::Format(format!(
                "{} trailing bytes",
                bytes.len() - cur.pos
            )));
        }
        Ok(StripeFile {
            m,
            polynomial,
            payload_len,
            stripe: Stripe { k, l, blocks },
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos + len;
        let out = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| CodecError::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

// ---- matrix file ----

/// Parsed matrix file; checked against a graph by [`MatrixFile::realize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixFile {
    pub params: CodeParams,
    pub m: u32,
    pub polynomial: u32,
    pub seed: u64,
    pub info_columns: Vec<usize>,
    pub parity_columns: Vec<usize>,
    pub h: FieldMatrix,
    pub p: FieldMatrix,
}

impl MatrixFile {
    pub fn from_realization(real: &CodeRealization) -> Self {
        MatrixFile {
            params: *real.params(),
            m: real.field().degree(),
            polynomial: real.field().polynomial(),
            seed: real.seed(),
            info_columns: real.info_columns().to_vec(),
            parity_columns: real.parity_columns().to_vec(),
            h: real.parity_check().clone(),
            p: real.parity_block().clone(),
        }
    }

    /// Text form: `key value` header lines, then `H rows cols` and
    /// `P rows cols` blocks with one row-major line of hex symbols per row.
    pub fn to_text(&self) -> String {
        let width = (self.m as usize).div_ceil(4);
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let mut out = String::from("lrc-matrix 1\n");
        let CodeParams { n, k, d, r } = self.params;
        let _ = writeln!(out, "n {n}\nk {k}\nd {d}\nr {r}");
        let _ = writeln!(
            out,
            "m {}\npoly {:#x}\nseed {}",
            self.m, self.polynomial, self.seed
        );
        let _ = writeln!(out, "info {}", join(&self.info_columns));
        let _ = writeln!(out, "parity {}", join(&self.parity_columns));
        for (name, mat) in [("H", &self.h), ("P", &self.p)] {
            let _ = writeln!(out, "{name} {} {}", mat.rows(), mat.cols());
            for i in 0..mat.rows() {
                let row: Vec<String> = mat
                    .row(i)
                    .iter()
                    .map(|s| format!("{:0width$x}", s.value()))
                    .collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CodecError> {
        let mut rd = Lines {
            lines: text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .collect(),
            pos: 0,
        };
        let (no, v) = rd.keyed("lrc-matrix")?;
        if v != ["1"] {
            return Err(line_error(no, format!("unsupported version {v:?}")));
        }
        let n = rd.scalar("n")? as usize;
        let k = rd.scalar("k")? as usize;
        let d = rd.scalar("d")? as usize;
        let r = rd.scalar("r")? as usize;
        let m = rd.scalar("m")? as u32;
        let polynomial = rd.scalar("poly")? as u32;
        let seed = rd.scalar("seed")?;
        let params = CodeParams::new(n, k, d, r).map_err(|e| CodecError::Format(e.to_string()))?;
        let info_columns = rd.list("info")?;
        let parity_columns = rd.list("parity")?;
        let h = rd.matrix("H", m)?;
        let p = rd.matrix("P", m)?;
        if let Some(&(no, _)) = rd.lines.get(rd.pos) {
            return Err(line_error(no, "trailing content".into()));
        }
        if info_columns.len() != k || parity_columns.len() != n - k {
            return Err(CodecError::Format(
                "column lists do not match (n, k)".into(),
            ));
        }
        if (h.rows(), h.cols()) != (n - k, n) || (p.rows(), p.cols()) != (k, n - k) {
            return Err(CodecError::Format(
                "matrix shapes do not match (n, k)".into(),
            ));
        }
        Ok(MatrixFile {
            params,
            m,
            polynomial,
            seed,
            info_columns,
            parity_columns,
            h,
            p,
        })
    }

    /// Nonzero entries of H that disagree with the graph's edges, as
    /// `(check, variable)`.
    pub fn support_mismatches(&self, graph: &TannerGraph) -> Vec<(usize, usize)> {
        let adj = graph.biadjacency();
        let mut out = Vec::new();
        for i in 0..self.h.rows().min(adj.len()) {
            for j in 0..self.h.cols().min(adj[i].len()) {
                if adj[i][j] == self.h[(i, j)].is_zero() {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Rebuilds the realization; the graph must agree with the header and
    /// the stored P must agree with H.
    pub fn realize(&self, graph: TannerGraph) -> Result<CodeRealization, CodecError> {
        if *graph.params() != self.params {
            return Err(CodecError::Format(format!(
                "matrix file is for {}, graph is {}",
                self.params,
                graph.params()
            )));
        }
        if graph.information_nodes() != self.info_columns
            || graph.parity_columns() != self.parity_columns
        {
            return Err(CodecError::Format(
                "column lists disagree with the graph layout".into(),
            ));
        }
        let field = FieldContext::with_polynomial(self.m, self.polynomial)?;
        Ok(CodeRealization::from_matrices(
            graph,
            field,
            self.seed,
            self.h.clone(),
            self.p.clone(),
        )?)
    }
}

fn line_error(no: usize, msg: String) -> CodecError {
    CodecError::Format(format!("line {}: {msg}", no + 1))
}

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), CodecError> {
        let out = *self
            .lines
            .get(self.pos)
            .ok_or_else(|| CodecError::Format(format!("unexpected end of file, wanted {what}")))?;
        self.pos += 1;
        Ok(out)
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>), CodecError> {
        let (no, line) = self.next(key)?;
        let mut parts = line.split_whitespace();
        let found = parts.next().unwrap_or_default();
        if found != key {
            return Err(line_error(no, format!("expected {key:?}, found {found:?}")));
        }
        Ok((no, parts.collect()))
    }

    fn scalar(&mut self, key: &str) -> Result<u64, CodecError> {
        let (no, v) = self.keyed(key)?;
        match v.as_slice() {
            [s] => parse_int(no, s),
            _ => Err(line_error(no, format!("{key} takes one value"))),
        }
    }

    fn list(&mut self, key: &str) -> Result<Vec<usize>, CodecError> {
        let (no, v) = self.keyed(key)?;
        v.iter()
            .map(|s| parse_int(no, s).map(|x| x as usize))
            .collect()
    }

    fn matrix(&mut self, key: &str, m: u32) -> Result<FieldMatrix, CodecError> {
        let (no, v) = self.keyed(key)?;
        let [rows, cols] = v.as_slice() else {
            return Err(line_error(no, format!("{key} takes rows and cols")));
        };
        let rows = parse_int(no, rows)? as usize;
        let cols = parse_int(no, cols)? as usize;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (no, line) = self.next(key)?;
            let row: Vec<&str> = line.split_whitespace().collect();
            if row.len() != cols {
                return Err(line_error(
                    no,
                    format!("{key} row has {} entries, expected {cols}", row.len()),
                ));
            }
            for s in row {
                let v = u16::from_str_radix(s, 16)
                    .map_err(|e| line_error(no, format!("{s:?}: {e}")))?;
                if m < 16 && u32::from(v) >> m != 0 {
                    return Err(line_error(no, format!("{s} outside GF(2^{m})")));
                }
                values.push(v);
            }
        }
        Ok(FieldMatrix::from_values(rows, cols, &values)?)
    }
}

fn parse_int(no: usize, s: &str) -> Result<u64, CodecError> {
    let parsed = match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| line_error(no, format!("{s:?}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{algorithm1, baseline, nu_params, realize};
    use crate::updatemeter::{structural_support, u_of_set};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example(method: fn(&CodeParams) -> TannerGraph) -> CodeRealization {
        let p = nu_params(15, 9, 4).unwrap();
        let f = FieldContext::new(16).unwrap();
        realize(&method(&p), &f, 7, 16).unwrap()
    }

    fn proposed() -> CodeRealization {
        example(|p| algorithm1(p).unwrap())
    }

    fn random_data(f: &FieldContext, l: usize, k: usize, seed: u64) -> FieldMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<u16> = (0..l * k).map(|_| f.random(&mut rng).value()).collect();
        FieldMatrix::from_values(l, k, &vals).unwrap()
    }

    fn syndrome_is_zero(real: &CodeRealization, s: &Stripe) -> bool {
        let y = s.coded().unwrap();
        real.field()
            .mat_mul(&y, &real.parity_check().transpose())
            .unwrap()
            .is_zero()
    }

    #[test]
    fn zero_data_encodes_to_zero() {
        let real = proposed();
        let s = encode(&real, &FieldMatrix::zeros(3, 9)).unwrap();
        assert!(s.coded().unwrap().is_zero());
    }

    #[test]
    fn unit_vector_gives_generator_row() {
        let real = proposed();
        for i in 0..9 {
            let mut data = FieldMatrix::zeros(1, 9);
            data[(0, i)] = FieldElement::ONE;
            let s = encode(&real, &data).unwrap();
            assert_eq!(s.coded().unwrap().row(0), real.generator().row(i));
        }
    }

    #[test]
    fn encoding_is_systematic_and_in_kernel() {
        let real = proposed();
        let data = random_data(real.field(), 4, 9, 1);
        let s = encode(&real, &data).unwrap();
        assert!(syndrome_is_zero(&real, &s));
        assert_eq!(s.data(&real).unwrap(), data);
    }

    #[test]
    fn encode_rejects_wrong_width() {
        let real = proposed();
        assert!(matches!(
            encode(&real, &FieldMatrix::zeros(1, 8)),
            Err(CodecError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn every_four_erasure_pattern_decodes() {
        let real = proposed();
        let s = encode(&real, &random_data(real.field(), 2, 9, 2)).unwrap();
        let mut count = 0;
        for a in 0..15 {
            for b in a + 1..15 {
                for c in b + 1..15 {
                    for e in c + 1..15 {
                        let pat = ErasurePattern::new([a, b, c, e]);
                        let mut holed = s.clone();
                        holed.erase(&pat).unwrap();
                        let out =
                            decode_erasures(&real, &holed, &ErasurePattern::default()).unwrap();
                        assert_eq!(out.stripe, s, "pattern {pat:?}");
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(count, 1365);
    }

    #[test]
    fn whole_group_plus_one_is_undecodable() {
        let real = proposed();
        let s = encode(&real, &random_data(real.field(), 1, 9, 3)).unwrap();
        let mut pat: Vec<usize> = real.graph().groups()[0].clone();
        pat.push(real.graph().groups()[1][0]);
        let err = decode_erasures(&real, &s, &ErasurePattern::new(pat)).unwrap_err();
        assert!(matches!(err, CodecError::Undecodable { .. }));
    }

    #[test]
    fn empty_pattern_is_identity() {
        let real = proposed();
        let s = encode(&real, &random_data(real.field(), 1, 9, 4)).unwrap();
        let out = decode_erasures(&real, &s, &ErasurePattern::default()).unwrap();
        assert_eq!(out.stripe, s);
        assert!(out.blocks_read.is_empty());
    }

    #[test]
    fn local_repair_reads_r_blocks() {
        let real = proposed();
        let s = encode(&real, &random_data(real.field(), 3, 9, 5)).unwrap();
        for failed in 0..15 {
            let mut holed = s.clone();
            holed.erase(&ErasurePattern::new([failed])).unwrap();
            let (col, read) = local_repair(&real, &holed, failed).unwrap();
            assert_eq!(read.len(), 4);
            assert!(!read.contains(&failed));
            assert_eq!(Some(col.as_slice()), s.block(failed));
        }
    }

    #[test]
    fn local_repair_needs_a_hole() {
        let real = proposed();
        let s = encode(&real, &random_data(real.field(), 1, 9, 6)).unwrap();
        assert!(matches!(
            local_repair(&real, &s, 2),
            Err(CodecError::NotErased(2))
        ));
    }

    #[test]
    fn update_matches_reencode_and_support() {
        for real in [proposed(), example(baseline)] {
            let support = structural_support(real.graph());
            let f = real.field().clone();
            let mut data = random_data(&f, 2, 9, 8);
            let mut s = encode(&real, &data).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for i in 0..9 {
                let new: Vec<FieldElement> = (0..2).map(|_| f.random(&mut rng)).collect();
                let (next, written) = apply_update(&real, &s, i, &new).unwrap();
                for (t, &v) in new.iter().enumerate() {
                    data[(t, i)] = v;
                }
                assert_eq!(next, encode(&real, &data).unwrap());
                assert_eq!(written.len(), u_of_set(&support, &[i]).unwrap());
                s = next;
            }
        }
    }

    #[test]
    fn proposed_update_writes_four_baseline_writes_five() {
        let real = proposed();
        let s = encode(&real, &FieldMatrix::zeros(1, 9)).unwrap();
        for i in 0..9 {
            let (_, w) = apply_update(&real, &s, i, &[FieldElement(1)]).unwrap();
            assert_eq!(w.len(), 4);
        }
        let base = example(baseline);
        let s = encode(&base, &FieldMatrix::zeros(1, 9)).unwrap();
        let mixed_info = base.graph().groups()[2][0];
        for (i, &col) in base.info_columns().iter().enumerate() {
            let (_, w) = apply_update(&base, &s, i, &[FieldElement(1)]).unwrap();
            assert_eq!(w.len(), if col == mixed_info { 4 } else { 5 });
        }
    }

    #[test]
    fn zero_delta_still_reports_writes() {
        let real = proposed();
        let s = encode(&real, &random_data(real.field(), 1, 9, 10)).unwrap();
        let old = s.block(real.info_columns()[3]).unwrap().to_vec();
        let (next, written) = apply_update(&real, &s, 3, &old).unwrap();
        assert_eq!(next, s);
        assert_eq!(written.len(), 4);
    }

    #[test]
    fn stripe_file_roundtrip() {
        for m in [8, 16] {
            let p = nu_params(15, 9, 4).unwrap();
            let f = FieldContext::new(m).unwrap();
            let real = realize(&algorithm1(&p).unwrap(), &f, 1, 64).unwrap();
            let mut s = encode(&real, &random_data(&f, 3, 9, 11)).unwrap();
            s.erase(&ErasurePattern::new([2, 11])).unwrap();
            let file = StripeFile {
                m,
                polynomial: f.polynomial(),
                payload_len: 17,
                stripe: s,
            };
            let bytes = file.to_bytes();
            let width = if m <= 8 { 1 } else { 2 };
            assert_eq!(
                bytes.len(),
                8 + 1 + 1 + 2 + 2 + 4 + 4 + 8 + 15 + 15 * 3 * width
            );
            assert_eq!(StripeFile::from_bytes(&bytes).unwrap(), file);
        }
    }

    #[test]
    fn stripe_file_rejects_garbage() {
        assert!(StripeFile::from_bytes(b"NOTSTRIP").is_err());
        let real = proposed();
        let s = encode(&real, &FieldMatrix::zeros(1, 9)).unwrap();
        let mut bytes = StripeFile {
            m: 16,
            polynomial: 0x1100b,
            payload_len: 0,
            stripe: s,
        }
        .to_bytes();
        bytes.pop();
        assert!(matches!(
            StripeFile::from_bytes(&bytes),
            Err(CodecError::Format(_))
        ));
    }

    #[test]
    fn byte_payload_roundtrip() {
        for m in [8, 12, 16] {
            let f = FieldContext::new(m).unwrap();
            for len in [0usize, 1, 9, 10, 1001] {
                let bytes: Vec<u8> = (0..len).map(|i| (i * 31 % 251) as u8).collect();
                let data = data_from_bytes(&f, 9, &bytes).unwrap();
                assert_eq!(bytes_from_data(&f, &data, len).unwrap(), bytes);
            }
        }
        assert!(data_from_bytes(&FieldContext::new(4).unwrap(), 9, b"x").is_err());
    }

    #[test]
    fn matrix_file_roundtrip() {
        let real = proposed();
        let mf = MatrixFile::from_realization(&real);
        let text = mf.to_text();
        let parsed = MatrixFile::parse(&text).unwrap();
        assert_eq!(parsed, mf);
        assert!(parsed.support_mismatches(real.graph()).is_empty());
        assert_eq!(parsed.realize(real.graph().clone()).unwrap(), real);
    }

    #[test]
    fn matrix_file_detects_tampering() {
        let real = proposed();
        let mut mf = MatrixFile::from_realization(&real);
        let (i, j) = (0..mf.h.rows())
            .flat_map(|i| (0..15).map(move |j| (i, j)))
            .find(|&(i, j)| !mf.h[(i, j)].is_zero())
            .unwrap();
        mf.h[(i, j)] = FieldElement::ZERO;
        let parsed = MatrixFile::parse(&mf.to_text()).unwrap();
        assert_eq!(parsed.support_mismatches(real.graph()), vec![(i, j)]);
        assert!(parsed.realize(real.graph().clone()).is_err());
    }

    #[test]
    fn matrix_file_parse_errors_name_the_line() {
        let text = MatrixFile::from_realization(&proposed()).to_text();
        let broken = text.replacen("k 9", "q 9", 1);
        let msg = MatrixFile::parse(&broken).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }
}
