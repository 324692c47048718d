//! Arithmetic over GF(2^m), 1 <= m <= 16, and the dense linear algebra the
//! rest of the crate is written against.
//!
//! Elements are stored as `u16` bit patterns of polynomials over GF(2).
//! Addition is XOR. Multiplication goes through log/antilog tables built
//! from a primitive element found at construction time; a carry-less
//! multiply-and-reduce path is kept alongside and must agree with it.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_DEGREE: u32 = 16;

/// Default reduction polynomial for each extension degree, indexed by `m`.
const DEFAULT_POLYNOMIALS: [u32; 17] = [
    0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11B, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443,
    0x8003, 0x1100B,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("extension degree {0} outside supported range 1..=16")]
    UnsupportedDegree(u32),
    #[error("polynomial {poly:#x} does not have degree {m}")]
    WrongDegree { poly: u32, m: u32 },
    #[error("polynomial {0:#x} is reducible over GF(2)")]
    Reducible(u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("matrix is singular")]
    Singular,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("value {value:#x} is not an element of GF(2^{m})")]
    OutOfRange { value: u32, m: u32 },
}

/// An element of GF(2^m). The context it belongs to is carried separately.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FieldElement(pub u16);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u16 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

struct Tables {
    m: u32,
    poly: u32,
    generator: u16,
    /// exp[i] = g^i for i in [0, 2*(q-1)), doubled so log sums need no reduction.
    exp: Vec<u16>,
    /// log[a] for a != 0; log[0] is unused.
    log: Vec<u16>,
}

/// GF(2^m) defined by a fixed irreducible polynomial. Cheap to clone, immutable.
#[derive(Clone)]
pub struct FieldContext {
    inner: Arc<Tables>,
}

impl fmt::Debug for FieldContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldContext")
            .field("m", &self.inner.m)
            .field("poly", &format_args!("{:#x}", self.inner.poly))
            .finish()
    }
}

impl PartialEq for FieldContext {
    fn eq(&self, other: &Self) -> bool {
        self.inner.m == other.inner.m && self.inner.poly == other.inner.poly
    }
}

impl Eq for FieldContext {}

/// Degree of a nonzero polynomial given as a bitmask.
fn degree(p: u32) -> u32 {
    31 - p.leading_zeros()
}

/// Remainder of `a` modulo `b` over GF(2).
fn poly_mod(mut a: u32, b: u32) -> u32 {
    let db = degree(b);
    while a != 0 && degree(a) >= db {
        a ^= b << (degree(a) - db);
    }
    a
}

/// Exhaustive divisor check: no polynomial of degree 1..=m/2 divides `poly`.
pub fn is_irreducible(poly: u32) -> bool {
    if poly < 2 {
        return false;
    }
    let m = degree(poly);
    if m == 0 {
        return false;
    }
    for d in 1..=m / 2 {
        for divisor in (1u32 << d)..(1u32 << (d + 1)) {
            if poly_mod(poly, divisor) == 0 {
                return false;
            }
        }
    }
    true
}

/// Carry-less product of two m-bit values reduced modulo `poly`.
#[inline]
fn clmul_reduce(a: u16, b: u16, m: u32, poly: u32) -> u16 {
    let mut acc: u32 = 0;
    let mut a = a as u32;
    let mut b = b as u32;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & (1 << m) != 0 {
            a ^= poly;
        }
    }
    acc as u16
}

fn prime_factors(mut x: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= x {
        if x % p == 0 {
            out.push(p);
            while x % p == 0 {
                x /= p;
            }
        }
        p += 1;
    }
    if x > 1 {
        out.push(x);
    }
    out
}

fn pow_slow(mut base: u16, mut e: u32, m: u32, poly: u32) -> u16 {
    let mut acc = 1u16;
    while e > 0 {
        if e & 1 == 1 {
            acc = clmul_reduce(acc, base, m, poly);
        }
        base = clmul_reduce(base, base, m, poly);
        e >>= 1;
    }
    acc
}

impl FieldContext {
    /// GF(2^m) with the default reduction polynomial for `m`.
    pub fn new(m: u32) -> Result<Self, FieldError> {
        if m == 0 || m > MAX_DEGREE {
            return Err(FieldError::UnsupportedDegree(m));
        }
        Self::with_polynomial(m, DEFAULT_POLYNOMIALS[m as usize])
    }

    pub fn default_polynomial(m: u32) -> Option<u32> {
        (1..=MAX_DEGREE)
            .contains(&m)
            .then(|| DEFAULT_POLYNOMIALS[m as usize])
    }

    pub fn with_polynomial(m: u32, poly: u32) -> Result<Self, FieldError> {
        if m == 0 || m > MAX_DEGREE {
            return Err(FieldError::UnsupportedDegree(m));
        }
        if poly == 0 || degree(poly) != m {
            return Err(FieldError::WrongDegree { poly, m });
        }
        if !is_irreducible(poly) {
            return Err(FieldError::Reducible(poly));
        }
        let order = (1u32 << m) - 1;
        let factors = prime_factors(order);
        let generator = (1..=order)
            .map(|g| g as u16)
            .find(|&g| {
                factors
                    .iter()
                    .all(|&p| order == 1 || pow_slow(g, order / p, m, poly) != 1)
            })
            .expect("the multiplicative group of a finite field is cyclic");

        let q1 = order as usize;
        let mut exp = vec![0u16; 2 * q1];
        let mut log = vec![0u16; q1 + 1];
        let mut x = 1u16;
        for i in 0..q1 {
            exp[i] = x;
            log[x as usize] = i as u16;
            x = clmul_reduce(x, generator, m, poly);
        }
        for i in q1..2 * q1 {
            exp[i] = exp[i - q1];
        }
        Ok(FieldContext {
            inner: Arc::new(Tables {
                m,
                poly,
                generator,
                exp,
                log,
            }),
        })
    }

    #[inline]
    pub fn degree(&self) -> u32 {
        self.inner.m
    }

    #[inline]
    pub fn polynomial(&self) -> u32 {
        self.inner.poly
    }

    /// Field size 2^m.
    #[inline]
    pub fn size(&self) -> u32 {
        1 << self.inner.m
    }

    /// The primitive element the log tables are built on.
    pub fn generator(&self) -> FieldElement {
        FieldElement(self.inner.generator)
    }

    pub fn element(&self, value: u32) -> Result<FieldElement, FieldError> {
        if value >= self.size() {
            return Err(FieldError::OutOfRange {
                value,
                m: self.inner.m,
            });
        }
        Ok(FieldElement(value as u16))
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    /// Subtraction coincides with addition in characteristic 2.
    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 == 0 || b.0 == 0 {
            return FieldElement::ZERO;
        }
        let t = &*self.inner;
        FieldElement(t.exp[t.log[a.0 as usize] as usize + t.log[b.0 as usize] as usize])
    }

    /// Same product as [`mul`](Self::mul), computed without tables.
    pub fn mul_carryless(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(clmul_reduce(a.0, b.0, self.inner.m, self.inner.poly))
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        let t = &*self.inner;
        let q1 = (1usize << t.m) - 1;
        let l = t.log[a.0 as usize] as usize;
        Ok(FieldElement(t.exp[(q1 - l) % q1]))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement, FieldError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: FieldElement, e: u64) -> FieldElement {
        if e == 0 {
            return FieldElement::ONE;
        }
        if a.0 == 0 {
            return FieldElement::ZERO;
        }
        let t = &*self.inner;
        let q1 = (1u64 << t.m) - 1;
        let l = t.log[a.0 as usize] as u64;
        FieldElement(t.exp[((l * (e % q1)) % q1) as usize])
    }

    /// Uniformly random nonzero element.
    pub fn random_nonzero<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.gen_range(1..self.size()) as u16)
    }

    pub fn random<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        FieldElement(rng.gen_range(0..self.size()) as u16)
    }

    // ---- matrices ----

    pub fn mat_mul(&self, a: &FieldMatrix, b: &FieldMatrix) -> Result<FieldMatrix, FieldError> {
        if a.cols != b.rows {
            return Err(FieldError::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        let mut out = FieldMatrix::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for t in 0..a.cols {
                let x = a[(i, t)];
                if x.is_zero() {
                    continue;
                }
                for j in 0..b.cols {
                    let prod = self.mul(x, b[(t, j)]);
                    out[(i, j)].0 ^= prod.0;
                }
            }
        }
        Ok(out)
    }

    /// Reduces `m` in place to row echelon form, returning the pivot columns.
    fn echelon(&self, m: &mut FieldMatrix) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row == m.rows {
                break;
            }
            let Some(p) = (row..m.rows).find(|&r| !m[(r, col)].is_zero()) else {
                continue;
            };
            m.swap_rows(row, p);
            let inv = self.inv(m[(row, col)]).expect("pivot is nonzero");
            m.scale_row(self, row, inv);
            for r in row + 1..m.rows {
                let f = m[(r, col)];
                if !f.is_zero() {
                    m.add_scaled_row(self, r, row, f);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn mat_rank(&self, m: &FieldMatrix) -> usize {
        let mut work = m.clone();
        self.echelon(&mut work).len()
    }

    /// Gauss-Jordan inverse of a square matrix.
    pub fn mat_inv(&self, m: &FieldMatrix) -> Result<FieldMatrix, FieldError> {
        if m.rows != m.cols {
            return Err(FieldError::ShapeMismatch(format!(
                "cannot invert non-square {}x{}",
                m.rows, m.cols
            )));
        }
        let n = m.rows;
        let mut aug = FieldMatrix::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = m[(i, j)];
            }
            aug[(i, n + i)] = FieldElement::ONE;
        }
        for col in 0..n {
            let p = (col..n)
                .find(|&r| !aug[(r, col)].is_zero())
                .ok_or(FieldError::Singular)?;
            aug.swap_rows(col, p);
            let inv = self.inv(aug[(col, col)])?;
            aug.scale_row(self, col, inv);
            for r in 0..n {
                let f = aug[(r, col)];
                if r != col && !f.is_zero() {
                    aug.add_scaled_row(self, r, col, f);
                }
            }
        }
        let mut out = FieldMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = aug[(i, n + j)];
            }
        }
        Ok(out)
    }

    /// Solves `a * x = b` for `x` when `a` has full column rank.
    ///
    /// Extra rows of `a` beyond its rank must be consistent with `b`; they are
    /// checked, and an inconsistent system reports `Singular`. Returns the
    /// solution together with the row indices of `a` the pivots were taken from.
    pub fn solve(
        &self,
        a: &FieldMatrix,
        b: &FieldMatrix,
    ) -> Result<(FieldMatrix, Vec<usize>), FieldError> {
        if a.rows != b.rows {
            return Err(FieldError::ShapeMismatch(format!(
                "system {}x{} with right-hand side {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        let (rows, unknowns, rhs) = (a.rows, a.cols, b.cols);
        let mut aug = FieldMatrix::zeros(rows, unknowns + rhs);
        for i in 0..rows {
            for j in 0..unknowns {
                aug[(i, j)] = a[(i, j)];
            }
            for j in 0..rhs {
                aug[(i, unknowns + j)] = b[(i, j)];
            }
        }
        let mut origin: Vec<usize> = (0..rows).collect();
        for col in 0..unknowns {
            let p = (col..rows)
                .find(|&r| !aug[(r, col)].is_zero())
                .ok_or(FieldError::Singular)?;
            aug.swap_rows(col, p);
            origin.swap(col, p);
            let inv = self.inv(aug[(col, col)])?;
            aug.scale_row(self, col, inv);
            for r in 0..rows {
                let f = aug[(r, col)];
                if r != col && !f.is_zero() {
                    aug.add_scaled_row(self, r, col, f);
                }
            }
        }
        for r in unknowns..rows {
            if (0..rhs).any(|j| !aug[(r, unknowns + j)].is_zero()) {
                return Err(FieldError::Singular);
            }
        }
        let mut x = FieldMatrix::zeros(unknowns, rhs);
        for i in 0..unknowns {
            for j in 0..rhs {
                x[(i, j)] = aug[(i, unknowns + j)];
            }
        }
        origin.truncate(unknowns);
        Ok((x, origin))
    }
}

/// Dense row-major matrix over a field.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldMatrix {
    rows: usize,
    cols: usize,
    data: Vec<FieldElement>,
}

impl FieldMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FieldMatrix {
            rows,
            cols,
            data: vec![FieldElement::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = FieldElement::ONE;
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<FieldElement>>) -> Result<Self, FieldError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(FieldError::ShapeMismatch("ragged rows".into()));
        }
        Ok(FieldMatrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_values(rows: usize, cols: usize, values: &[u16]) -> Result<Self, FieldError> {
        if values.len() != rows * cols {
            return Err(FieldError::ShapeMismatch(format!(
                "{} values for {rows}x{cols}",
                values.len()
            )));
        }
        Ok(FieldMatrix {
            rows,
            cols,
            data: values.iter().map(|&v| FieldElement(v)).collect(),
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[FieldElement] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<FieldElement> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> FieldMatrix {
        let mut out = FieldMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// The matrix formed by the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> FieldMatrix {
        let mut out = FieldMatrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (t, &j) in cols.iter().enumerate() {
                out[(i, t)] = self[(i, j)];
            }
        }
        out
    }

    pub fn select_rows(&self, rows: &[usize]) -> FieldMatrix {
        let mut out = FieldMatrix::zeros(rows.len(), self.cols);
        for (t, &i) in rows.iter().enumerate() {
            out.data[t * self.cols..(t + 1) * self.cols].copy_from_slice(self.row(i));
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn values(&self) -> impl Iterator<Item = FieldElement> + '_ {
        self.data.iter().copied()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn scale_row(&mut self, f: &FieldContext, r: usize, s: FieldElement) {
        for j in 0..self.cols {
            let idx = r * self.cols + j;
            self.data[idx] = f.mul(self.data[idx], s);
        }
    }

    /// row[dst] += s * row[src]
    fn add_scaled_row(&mut self, f: &FieldContext, dst: usize, src: usize, s: FieldElement) {
        for j in 0..self.cols {
            let v = f.mul(self.data[src * self.cols + j], s);
            self.data[dst * self.cols + j].0 ^= v.0;
        }
    }
}

impl std::ops::Index<(usize, usize)> for FieldMatrix {
    type Output = FieldElement;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &FieldElement {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for FieldMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut FieldElement {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}
