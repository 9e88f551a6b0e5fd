//! Linear algebra over small finite fields: field tables, rank by Gaussian
//! elimination, uniform sampling, exhaustive rank counts and the closed-form
//! counts built from Gaussian binomials.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::qseries::{q_binomial, Rational};

/// Default budget for exhaustive enumeration, in matrices.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 26;

/// Degree-`d` monic irreducible polynomials `t^d + c_{d-1} t^{d-1} + ... + c_0`
/// as `(q, p, [c_0, ..., c_{d-1}], text)`.
const EXTENSIONS: &[(u32, u32, &[u8], &str)] = &[
    (4, 2, &[1, 1], "t^2 + t + 1"),
    (8, 2, &[1, 1, 0], "t^3 + t + 1"),
    (9, 3, &[1, 0], "t^2 + 1"),
    (16, 2, &[1, 1, 0, 0], "t^4 + t + 1"),
    (25, 5, &[2, 0], "t^2 + 2"),
    (27, 3, &[1, 2, 0], "t^3 + 2t + 1"),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Prime,
    Extension { modulus: &'static str },
}

/// `F_q` for a prime `q < 256` or `q` in `{4, 8, 9, 16, 25, 27}`. Elements
/// are `0..q`; for extension fields element `a` is the polynomial whose
/// base-`p` digits are its coefficients.
#[derive(Debug, Clone)]
pub struct FqField {
    q: u32,
    kind: FieldKind,
    add: Vec<u8>,
    mul: Vec<u8>,
    neg: Vec<u8>,
    inv: Vec<u8>,
}

fn is_prime(n: u32) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

impl FqField {
    pub fn new(q: u32) -> Result<Self> {
        if is_prime(q) && q < 256 {
            let add = table(q, |a, b| (a + b) % q);
            let mul = table(q, |a, b| (a * b) % q);
            return Self::finish(q, FieldKind::Prime, add, mul);
        }
        let &(_, p, coeffs, text) = EXTENSIONS
            .iter()
            .find(|e| e.0 == q)
            .ok_or(Error::UnsupportedField(q))?;
        let d = coeffs.len();
        let digits = |mut a: u32| {
            let mut v = vec![0u32; d];
            for c in v.iter_mut() {
                *c = a % p;
                a /= p;
            }
            v
        };
        let pack = |v: &[u32]| v.iter().rev().fold(0, |acc, &c| acc * p + c);
        let add = table(q, |a, b| {
            let (x, y) = (digits(a), digits(b));
            pack(&x.iter().zip(&y).map(|(s, t)| (s + t) % p).collect::<Vec<_>>())
        });
        let mul = table(q, |a, b| {
            let (x, y) = (digits(a), digits(b));
            let mut prod = vec![0u32; 2 * d - 1];
            for (i, s) in x.iter().enumerate() {
                for (j, t) in y.iter().enumerate() {
                    prod[i + j] = (prod[i + j] + s * t) % p;
                }
            }
            // t^d = -(c_0 + ... + c_{d-1} t^{d-1})
            for top in (d..2 * d - 1).rev() {
                let lead = prod[top];
                prod[top] = 0;
                for (i, &c) in coeffs.iter().enumerate() {
                    let idx = top - d + i;
                    prod[idx] = (prod[idx] + p * p - lead * c as u32 % p) % p;
                }
            }
            pack(&prod[..d])
        });
        Self::finish(q, FieldKind::Extension { modulus: text }, add, mul)
    }

    fn finish(q: u32, kind: FieldKind, add: Vec<u8>, mul: Vec<u8>) -> Result<Self> {
        let n = q as usize;
        let mut neg = vec![0u8; n];
        let mut inv = vec![0u8; n];
        for a in 0..n {
            neg[a] = (0..n)
                .find(|&b| add[a * n + b] == 0)
                .ok_or_else(|| Error::Numerical(format!("F_{q}: {a} has no negative")))?
                as u8;
            if a > 0 {
                inv[a] = (1..n)
                    .find(|&b| mul[a * n + b] == 1)
                    .ok_or_else(|| Error::Numerical(format!("F_{q}: {a} has no inverse")))?
                    as u8;
            }
        }
        let field = FqField {
            q,
            kind,
            add,
            mul,
            neg,
            inv,
        };
        field.verify()?;
        Ok(field)
    }

    /// Spot-checks associativity and distributivity on a fixed sample of
    /// triples (all triples when `q <= 9`).
    fn verify(&self) -> Result<()> {
        let q = self.q as u8;
        let step = if q <= 9 { 1 } else { 3 };
        for a in (0..q).step_by(step) {
            for b in (0..q).step_by(step) {
                for c in (0..q).step_by(step) {
                    let assoc = self.mul(self.mul(a, b), c) == self.mul(a, self.mul(b, c))
                        && self.add(self.add(a, b), c) == self.add(a, self.add(b, c));
                    let dist =
                        self.mul(a, self.add(b, c)) == self.add(self.mul(a, b), self.mul(a, c));
                    if !(assoc && dist) {
                        return Err(Error::Numerical(format!(
                            "F_{}: field axioms fail at ({a}, {b}, {c})",
                            self.q
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    #[inline]
    pub fn add(&self, a: u8, b: u8) -> u8 {
        self.add[a as usize * self.q as usize + b as usize]
    }

    #[inline]
    pub fn sub(&self, a: u8, b: u8) -> u8 {
        self.add(a, self.neg[b as usize])
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        self.mul[a as usize * self.q as usize + b as usize]
    }

    #[inline]
    pub fn neg(&self, a: u8) -> u8 {
        self.neg[a as usize]
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: u8) -> Option<u8> {
        (a != 0).then(|| self.inv[a as usize])
    }
}

fn table(q: u32, f: impl Fn(u32, u32) -> u32) -> Vec<u8> {
    let mut t = Vec::with_capacity((q * q) as usize);
    for a in 0..q {
        for b in 0..q {
            t.push(f(a, b) as u8);
        }
    }
    t
}

/// Row-major matrix over a shared field.
#[derive(Clone)]
pub struct FqMatrix {
    field: Arc<FqField>,
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl FqMatrix {
    pub fn zeros(field: &Arc<FqField>, rows: usize, cols: usize) -> Self {
        FqMatrix {
            field: Arc::clone(field),
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: &Arc<FqField>, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn from_rows(field: &Arc<FqField>, rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return domain("rows have different lengths");
        }
        if rows.iter().flatten().any(|&e| e as u32 >= field.q()) {
            return domain(format!("entry out of range for F_{}", field.q()));
        }
        Ok(FqMatrix {
            field: Arc::clone(field),
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn field(&self) -> &Arc<FqField> {
        &self.field
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(&self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn rank(&self) -> usize {
        rank_in_place(&self.field, &mut self.data.clone(), self.rows, self.cols)
    }
}

/// Row reduction of a row-major buffer; returns the number of pivots.
fn rank_in_place(f: &FqField, m: &mut [u8], rows: usize, cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| m[r * cols + c] != 0) else {
            continue;
        };
        if p != rank {
            for j in 0..cols {
                m.swap(p * cols + j, rank * cols + j);
            }
        }
        let inv = f.inv(m[rank * cols + c]).expect("pivot is nonzero");
        for j in c..cols {
            m[rank * cols + j] = f.mul(m[rank * cols + j], inv);
        }
        for r in rank + 1..rows {
            let factor = m[r * cols + c];
            if factor != 0 {
                for j in c..cols {
                    let v = f.mul(factor, m[rank * cols + j]);
                    m[r * cols + j] = f.sub(m[r * cols + j], v);
                }
            }
        }
        rank += 1;
    }
    rank
}

impl fmt::Debug for FqMatrix {
    /// One line per row; digits run together when `q <= 10`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.field.q() <= 10 { "" } else { " " };
        writeln!(f, "F_{} {}x{}", self.field.q(), self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            writeln!(f, "{}", row.join(sep))?;
        }
        Ok(())
    }
}

/// A matrix with i.i.d. uniform entries.
pub fn sample_matrix<R: Rng + ?Sized>(
    field: &Arc<FqField>,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> FqMatrix {
    let q = field.q() as u8;
    FqMatrix {
        field: Arc::clone(field),
        rows,
        cols,
        data: (0..rows * cols).map(|_| rng.random_range(0..q)).collect(),
    }
}

/// Number of `n x c` matrices over `F_q` of rank `r`: with `k = n - r` and
/// `t = c - n`, `[n+t choose t+k]_q [n choose n-k]_q prod_{i<n-k}(q^{n-k} - q^i)`.
/// Holds for any integer `q >= 2` as a polynomial identity; meaningful for
/// prime powers.
pub fn rank_count_exact(q: u64, n: u64, c: u64, r: u64) -> Result<BigUint> {
    if r > n.min(c) {
        return domain(format!("rank {r} exceeds min({n}, {c})"));
    }
    let k = n - r;
    let t = c as i64 - n as i64;
    let qb = BigUint::from(q);
    let top = qb.pow((n - k) as u32);
    let gl = (0..n - k).fold(BigUint::from(1u32), |acc, i| {
        acc * (top.clone() - qb.pow(i as u32))
    });
    Ok(q_binomial(c, t + k as i64, q)? * q_binomial(n, (n - k) as i64, q)? * gl)
}

/// Exhaustive rank counts `counts[r]` over all `q^{rows*cols}` matrices,
/// split across rayon workers by contiguous index ranges.
pub fn enumerate_rank_counts(
    field: &Arc<FqField>,
    rows: usize,
    cols: usize,
    cap: u64,
) -> Result<Vec<u64>> {
    let q = field.q() as u64;
    let cells = (rows * cols) as u32;
    let total = (q as u128).checked_pow(cells).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(Error::Resource {
            what: "matrix enumeration",
            required: total,
            cap: cap as u128,
        });
    }
    let total = total as u64;
    let chunk = 1u64 << 12;
    let n_chunks = total.div_ceil(chunk);
    let ranks = rows.min(cols) + 1;
    let counts = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let mut local = vec![0u64; ranks];
            let start = ci * chunk;
            let end = (start + chunk).min(total);
            let mut digits = vec![0u8; rows * cols];
            let mut rest = start;
            for d in digits.iter_mut() {
                *d = (rest % q) as u8;
                rest /= q;
            }
            let mut scratch = vec![0u8; rows * cols];
            for _ in start..end {
                scratch.copy_from_slice(&digits);
                local[rank_in_place(field, &mut scratch, rows, cols)] += 1;
                // base-q increment
                for d in digits.iter_mut() {
                    *d += 1;
                    if *d as u64 == q {
                        *d = 0;
                    } else {
                        break;
                    }
                }
            }
            local
        })
        .reduce(
            || vec![0u64; ranks],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(counts)
}

/// One row of a rank-count table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCountRow {
    pub rank: u64,
    #[serde(serialize_with = "crate::qseries::serialize_display")]
    pub count: BigUint,
    #[serde(serialize_with = "crate::qseries::serialize_scalar")]
    pub probability: Rational,
}

/// Closed-form rank counts for all ranks, with probabilities over `q^{n c}`.
pub fn rank_count_table(q: u64, n: u64, c: u64) -> Result<Vec<RankCountRow>> {
    let total = BigUint::from(q).pow((n * c) as u32);
    (0..=n.min(c))
        .map(|r| {
            let count = rank_count_exact(q, n, c, r)?;
            let probability = Rational::new(count.clone().into(), total.clone().into());
            Ok(RankCountRow {
                rank: r,
                count,
                probability,
            })
        })
        .collect()
}

pub fn rank_table_csv(rows: &[RankCountRow]) -> String {
    let mut s = String::from("rank,count,probability\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.rank, r.count, r.probability));
    }
    s
}

/// Coranks `Y_0 = n, Y_1, ..., Y_steps` of the span of `k` uniform vectors in
/// `F_q^n`, maintained as an echelon basis with unit pivots.
pub fn corank_span_process<R: Rng + ?Sized>(
    field: &FqField,
    n: usize,
    steps: usize,
    rng: &mut R,
) -> Vec<u64> {
    let q = field.q() as u8;
    let mut basis: Vec<(usize, Vec<u8>)> = Vec::new();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(n as u64);
    let mut v = vec![0u8; n];
    for _ in 0..steps {
        for e in v.iter_mut() {
            *e = rng.random_range(0..q);
        }
        // later rows vanish on earlier pivots, so one pass in insertion order reduces v
        for (p, row) in &basis {
            let f = v[*p];
            if f != 0 {
                for j in 0..n {
                    v[j] = field.sub(v[j], field.mul(f, row[j]));
                }
            }
        }
        if let Some(p) = v.iter().position(|&e| e != 0) {
            let inv = field.inv(v[p]).expect("nonzero");
            let row = v.iter().map(|&e| field.mul(e, inv)).collect();
            basis.push((p, row));
        }
        out.push((n - basis.len()) as u64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::countdown::seeded_rng;

    fn f(q: u32) -> Arc<FqField> {
        Arc::new(FqField::new(q).unwrap())
    }

    #[test]
    fn supported_fields_build() {
        for q in [2, 3, 5, 7, 11, 251, 4, 8, 9, 16, 25, 27] {
            let fld = FqField::new(q).unwrap();
            for a in 1..q as u8 {
                assert_eq!(fld.mul(a, fld.inv(a).unwrap()), 1);
            }
        }
        for q in [1, 6, 32, 49, 256] {
            assert!(matches!(FqField::new(q), Err(Error::UnsupportedField(_))));
        }
    }

    #[test]
    fn extension_multiplicative_group_is_cyclic() {
        // some element has order q - 1
        for q in [4u32, 8, 9, 16, 25, 27] {
            let fld = FqField::new(q).unwrap();
            let has_generator = (2..q as u8).any(|g| {
                let mut x = g;
                let mut order = 1;
                while x != 1 {
                    x = fld.mul(x, g);
                    order += 1;
                }
                order == q - 1
            });
            assert!(has_generator, "q = {q}");
        }
    }

    #[test]
    fn rank_basics() {
        let fld = f(3);
        assert_eq!(FqMatrix::zeros(&fld, 3, 4).rank(), 0);
        assert_eq!(FqMatrix::identity(&fld, 5).rank(), 5);
        let m = FqMatrix::from_rows(&fld, &[vec![1, 2, 0], vec![2, 1, 0]]).unwrap();
        assert_eq!(m.rank(), 1);
        assert!(FqMatrix::from_rows(&fld, &[vec![3]]).is_err());
    }

    #[test]
    fn rank_is_transpose_invariant() {
        let mut rng = seeded_rng(7, 0);
        for q in [2, 3, 4, 9] {
            let fld = f(q);
            for i in 0..250 {
                let m = sample_matrix(&fld, 1 + i % 5, 1 + (i / 5) % 6, &mut rng);
                assert_eq!(m.rank(), m.transpose().rank());
            }
        }
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_rank_counts(&f(2), 2, 2, 1 << 20).unwrap(), vec![1, 9, 6]);
        assert_eq!(enumerate_rank_counts(&f(2), 2, 3, 1 << 20).unwrap().iter().sum::<u64>(), 64);
        let c = enumerate_rank_counts(&f(3), 2, 2, 1 << 20).unwrap();
        assert_eq!((c.iter().sum::<u64>(), c[2]), (81, 48));
        let err = enumerate_rank_counts(&f(2), 6, 6, 1 << 26).unwrap_err();
        assert!(matches!(err, Error::Resource { required, .. } if required == 1 << 36));
    }

    #[test]
    fn closed_form_counts() {
        assert_eq!(rank_count_exact(2, 2, 2, 1).unwrap(), BigUint::from(9u32));
        assert_eq!(rank_count_exact(2, 2, 2, 2).unwrap(), BigUint::from(6u32));
        for (q, n, c) in [(2, 3, 5), (3, 4, 2), (5, 2, 2)] {
            assert_eq!(rank_count_exact(q, n, c, 0).unwrap(), BigUint::from(1u32));
            let total: BigUint = (0..=n.min(c)).map(|r| rank_count_exact(q, n, c, r).unwrap()).sum();
            assert_eq!(total, BigUint::from(q).pow((n * c) as u32));
        }
        assert!(rank_count_exact(2, 2, 3, 3).is_err());
    }

    #[test]
    fn closed_form_matches_enumeration() {
        for (q, n, c) in [(2u32, 3usize, 2usize), (4, 2, 2), (3, 1, 3), (2, 2, 4)] {
            let counts = enumerate_rank_counts(&f(q), n, c, 1 << 20).unwrap();
            let table = rank_count_table(q as u64, n as u64, c as u64).unwrap();
            for row in table {
                assert_eq!(row.count, BigUint::from(counts[row.rank as usize]));
            }
        }
    }

    #[test]
    fn span_process_shape() {
        let mut rng = seeded_rng(3, 1);
        assert_eq!(corank_span_process(&FqField::new(2).unwrap(), 0, 4, &mut rng), vec![0; 5]);
        let fld = FqField::new(5).unwrap();
        let path = corank_span_process(&fld, 6, 20, &mut rng);
        assert_eq!(path[0], 6);
        assert!(path.windows(2).all(|w| w[0] - w[1] <= 1 && w[0] >= w[1]));
    }

    #[test]
    fn debug_form() {
        let m = FqMatrix::identity(&f(2), 2);
        assert_eq!(format!("{m:?}"), "F_2 2x2\n10\n01\n");
    }
}
