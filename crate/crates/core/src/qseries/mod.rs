//! Finite and infinite q-products, Gaussian binomials, and the generating
//! function identity behind the partial-sum laws.

mod scalar;

pub use scalar::{
    serialize_display, serialize_scalar, serialize_scalar_opt, serialize_scalar_vec, Approx,
    Backend, Rational,
    Scalar,
};

use num_bigint::BigUint;
use num_traits::One;
use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Default certified truncation tolerance for infinite products and pmf tails.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Default cap on the cutoff index of a truncated infinite product.
pub const DEFAULT_PRODUCT_CAP: u64 = 10_000_000;

/// Checks `0 < x < 1`.
pub fn check_unit_interval<S: Scalar>(x: &S) -> Result<()> {
    if *x > S::zero() && *x < S::one() {
        Ok(())
    } else {
        domain(format!("x = {x} must lie in (0, 1)"))
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        domain(format!("tolerance {tol} must be positive and finite"))
    }
}

/// `prod_{i=a}^{b} (1 - x^i)`; the empty product 1 when `b < a`.
pub fn g_finite<S: Scalar>(x: &S, a: u64, b: i64) -> Result<S> {
    check_unit_interval(x)?;
    if a == 0 {
        return domain("product start index must be >= 1");
    }
    Ok(range_product(x, a, b))
}

/// `prod_{i=a}^{b} (1 - x^i)` without domain checks.
pub(crate) fn range_product<S: Scalar>(x: &S, a: u64, b: i64) -> S {
    if b < a as i64 {
        return S::one();
    }
    let mut pow = x.powi(a);
    let mut acc = S::one() - pow.clone();
    for _ in a + 1..=b as u64 {
        pow = pow * x.clone();
        acc = acc * (S::one() - pow.clone());
    }
    acc
}

/// A truncation of `prod_{i>=a} (1 - x^i)` at a certified cutoff.
///
/// The true product lies in `[value * (1 - tail_bound_hi), value]`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "", rename_all = "camelCase")]
pub struct TruncatedProduct<S: Scalar> {
    #[serde(serialize_with = "serialize_scalar")]
    pub value: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub tail_bound_hi: S,
    pub cutoff_index: u64,
}

/// Smallest `N >= 0` with `x^{N+1} / (1 - x) < tol`, certified on the scalar's
/// own arithmetic. Depends on `x` and `tol` only.
pub fn product_cutoff<S: Scalar>(x: &S, tol: f64, cap: u64) -> Result<u64> {
    check_unit_interval(x)?;
    check_tol(tol)?;
    let xf = x.to_f64();
    let one_minus = 1.0 - xf;
    // first guess from logarithms, then settle on the certified minimum
    let guess = ((tol * one_minus).ln() / xf.ln()).ceil() - 1.0;
    if !guess.is_finite() || guess > cap as f64 + 2.0 {
        return Err(Error::Resource {
            what: "infinite-product cutoff",
            required: if guess.is_finite() { guess as u128 } else { u128::MAX },
            cap: cap as u128,
        });
    }
    let bound = |n: u64| {
        let b = x.powi(n + 1) / (S::one() - x.clone());
        b.upper_f64()
    };
    let mut n = guess.max(0.0) as u64;
    while bound(n) >= tol {
        n += 1;
        if n > cap {
            return Err(Error::Resource {
                what: "infinite-product cutoff",
                required: n as u128,
                cap: cap as u128,
            });
        }
    }
    while n > 0 && bound(n - 1) < tol {
        n -= 1;
    }
    Ok(n)
}

/// `prod_{i>=a} (1 - x^i)` truncated at the cutoff of [`product_cutoff`].
pub fn g_infinite<S: Scalar>(x: &S, a: u64, tol: f64) -> Result<TruncatedProduct<S>> {
    g_infinite_capped(x, a, tol, DEFAULT_PRODUCT_CAP)
}

pub fn g_infinite_capped<S: Scalar>(
    x: &S,
    a: u64,
    tol: f64,
    cap: u64,
) -> Result<TruncatedProduct<S>> {
    if a == 0 {
        return domain("product start index must be >= 1");
    }
    let cutoff = product_cutoff(x, tol, cap)?;
    let value = range_product(x, a, cutoff as i64);
    let first_omitted = (cutoff + 1).max(a);
    let tail_bound_hi = x.powi(first_omitted) / (S::one() - x.clone());
    Ok(TruncatedProduct {
        value,
        tail_bound_hi,
        cutoff_index: cutoff,
    })
}

/// `1 - prod_{i>=a} (1 - x^i)`, the probability that some geometric delay at
/// height `a` or above is nonzero.
///
/// The true value lies in `[value, value + slack]`. Cancellation-free: the
/// recurrence `d <- d + x^i (1 - d)` only adds nonnegative terms.
#[derive(Debug, Clone)]
pub struct Defect<S: Scalar> {
    pub value: S,
    pub slack: S,
    pub cutoff_index: u64,
}

/// Computes the defect with *relative* truncation tolerance `rel_tol`: the
/// omitted part is below `rel_tol * x^a / (1 - x)`.
pub fn defect<S: Scalar>(x: &S, a: u64, rel_tol: f64) -> Result<Defect<S>> {
    check_unit_interval(x)?;
    check_tol(rel_tol)?;
    if a == 0 {
        return domain("defect start index must be >= 1");
    }
    let xf = x.to_f64();
    // x^{N+1} < rel_tol * x^a  <=>  N + 1 - a > log(rel_tol) / log(x)
    let extra = (rel_tol.ln() / xf.ln()).ceil().max(1.0);
    if extra > DEFAULT_PRODUCT_CAP as f64 {
        return Err(Error::Resource {
            what: "defect cutoff",
            required: extra as u128,
            cap: DEFAULT_PRODUCT_CAP as u128,
        });
    }
    let cutoff = a + extra as u64;
    let mut pow = x.powi(a);
    let mut d = pow.clone();
    for _ in a + 1..=cutoff {
        pow = pow * x.clone();
        d = d.clone() + pow.clone() * (S::one() - d);
    }
    let slack = pow * x.clone() / (S::one() - x.clone());
    Ok(Defect {
        value: d,
        slack,
        cutoff_index: cutoff,
    })
}

/// Prefix products `prod_{i=1}^{j} (1 - x^i)` for `j = 0..=len`, so any range
/// product is one division.
#[derive(Debug, Clone)]
pub struct FactorTable<S: Scalar> {
    x: S,
    prefix: Vec<S>,
    powers: Vec<S>,
}

impl<S: Scalar> FactorTable<S> {
    pub fn new(x: &S, len: u64) -> Self {
        let mut t = FactorTable {
            x: x.clone(),
            prefix: vec![S::one()],
            powers: vec![S::one()],
        };
        t.extend_to(len);
        t
    }

    pub fn x(&self) -> &S {
        &self.x
    }

    pub fn len(&self) -> u64 {
        (self.prefix.len() - 1) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.prefix.len() == 1
    }

    pub fn extend_to(&mut self, len: u64) {
        while self.len() < len {
            let p = self.powers.last().unwrap().clone() * self.x.clone();
            let g = self.prefix.last().unwrap().clone() * (S::one() - p.clone());
            self.powers.push(p);
            self.prefix.push(g);
        }
    }

    /// `x^i` for `i <= len`.
    pub fn power(&self, i: u64) -> S {
        self.powers[i as usize].clone()
    }

    /// `prod_{i=1}^{j} (1 - x^i)`.
    pub fn prefix(&self, j: u64) -> S {
        self.prefix[j as usize].clone()
    }

    /// `prod_{i=a}^{b} (1 - x^i)` for `1 <= a`, `b <= len`; 1 if `b < a`.
    pub fn range(&self, a: u64, b: i64) -> S {
        debug_assert!(a >= 1);
        if b < a as i64 {
            return S::one();
        }
        let b = b as u64;
        // direct product is exact-friendlier than a quotient for short ranges
        if b - a < 8 {
            let mut acc = S::one() - self.power(a);
            for i in a + 1..=b {
                acc = acc * (S::one() - self.power(i));
            }
            acc
        } else {
            self.prefix(b) / self.prefix(a - 1)
        }
    }
}

/// Gaussian binomial coefficient: the number of `k`-dimensional subspaces of
/// `F_q^n`. Zero when `k < 0` or `k > n`.
pub fn q_binomial(n: u64, k: i64, q: u64) -> Result<BigUint> {
    if q < 2 {
        return domain(format!("q = {q} must be at least 2"));
    }
    if k < 0 || k as u64 > n {
        return Ok(BigUint::from(0u32));
    }
    let k = (k as u64).min(n - k as u64);
    let q = BigUint::from(q);
    let mut acc = BigUint::one();
    // after step i, acc = [n choose i+1]_q, so each division is exact
    for i in 0..k {
        let num = num_traits::pow(q.clone(), (n - i) as usize) - 1u32;
        let den = num_traits::pow(q.clone(), (i + 1) as usize) - 1u32;
        acc = acc * num / den;
    }
    Ok(acc)
}

/// Signed gap between `prod_{i=m}^{n} 1/(1 - y x^i)` and the first `terms + 1`
/// terms of its expansion
/// `sum_k y^k x^{mk} prod_{i=n-m+1}^{n-m+k}(1 - x^i) / prod_{i=1}^{k}(1 - x^i)`.
pub fn technical_identity_gap<S: Scalar>(x: &S, y: &S, m: u64, n: u64, terms: u64) -> Result<S> {
    if !(x.abs() < S::one()) || !(y.abs() < S::one()) {
        return domain(format!("need |x| < 1 and |y| < 1, got x = {x}, y = {y}"));
    }
    if m > n {
        return domain(format!("need n >= m, got m = {m}, n = {n}"));
    }
    let mut lhs = S::one();
    let mut pow = x.powi(m);
    for _ in m..=n {
        lhs = lhs / (S::one() - y.clone() * pow.clone());
        pow = pow * x.clone();
    }

    let ratio = y.clone() * x.powi(m);
    let shift = n - m;
    let mut term = S::one();
    let mut sum = S::one();
    let mut num_pow = x.powi(shift);
    let mut den_pow = S::one();
    for _ in 1..=terms {
        num_pow = num_pow * x.clone();
        den_pow = den_pow * x.clone();
        term = term * ratio.clone() * (S::one() - num_pow.clone()) / (S::one() - den_pow.clone());
        sum = sum + term.clone();
    }
    Ok(lhs - sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> Rational {
        Rational::from_ratio(p, q)
    }

    /// Counts nonsingular 2x2 matrices over F_2 by brute force.
    fn brute_force_gl22() -> u32 {
        let mut count = 0;
        for bits in 0u32..16 {
            let (a, b, c, d) = (bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, (bits >> 3) & 1);
            if (a * d + b * c) % 2 == 1 {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn g_finite_examples() {
        assert_eq!(g_finite(&r(1, 2), 1, 2).unwrap(), r(3, 8));
        assert_eq!(g_finite(&r(1, 2), 3, 2).unwrap(), r(1, 1));
        let gl = brute_force_gl22();
        assert_eq!(gl, 6);
        assert_eq!(g_finite(&r(1, 2), 1, 2).unwrap(), r(gl as i64, 16));
        assert!(g_finite(&r(3, 2), 1, 2).is_err());
        assert!(g_finite(&r(0, 1), 1, 2).is_err());
    }

    #[test]
    fn g_finite_recurrence_is_exact() {
        for x in [r(1, 2), r(1, 3), r(2, 5), r(3, 7)] {
            for n in 0..15i64 {
                let lhs = g_finite(&x, 1, n).unwrap()
                    * (<Rational as Scalar>::one() - x.powi(n as u64 + 1));
                assert_eq!(lhs, g_finite(&x, 1, n + 1).unwrap());
            }
        }
    }

    /// Independent oracle: partial products until the factors stop changing
    /// the double-precision value.
    fn euler_oracle(x: f64, start: u32) -> f64 {
        let mut acc = 1.0f64;
        let mut i = start;
        loop {
            let p = x.powi(i as i32);
            if p < 1e-300 {
                break;
            }
            acc *= 1.0 - p;
            i += 1;
        }
        acc
    }

    #[test]
    fn g_infinite_examples() {
        let x = Approx::exact(0.5);
        let g1 = g_infinite(&x, 1, 1e-12).unwrap();
        assert!((g1.value.value() - 0.288788095087).abs() < 1e-11);
        assert!((g1.value.value() - euler_oracle(0.5, 1)).abs() < 1e-12);
        let g2 = g_infinite(&x, 2, 1e-12).unwrap();
        assert!((g2.value.value() - 0.577576190174).abs() < 1e-11);
        assert!((g2.value.value() - g1.value.value() / 0.5).abs() < 1e-12);
        // all factors omitted
        let g = g_infinite(&x, 60, 1e-12).unwrap();
        assert!((g.value.value() - 1.0).abs() < 1e-12);
        assert_eq!(g.cutoff_index, 40);
    }

    #[test]
    fn cutoff_is_minimal_and_certified() {
        for xv in [0.1, 0.5, 0.7, 0.9, 0.99] {
            let x = Approx::parse(&xv.to_string()).unwrap();
            for tol in [1e-6, 1e-12] {
                let n = product_cutoff(&x, tol, DEFAULT_PRODUCT_CAP).unwrap();
                let b = |k: u64| f64::powi(xv, k as i32 + 1) / (1.0 - xv);
                assert!(b(n) < tol * (1.0 + 1e-9));
                if n > 0 {
                    assert!(b(n - 1) >= tol * (1.0 - 1e-9));
                }
            }
        }
        let x = Approx::exact(0.5);
        assert!(matches!(
            product_cutoff(&x, 1e-300, 100),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn truncation_brackets_truth_exactly() {
        // exact backend: the truncated value and the deeper truncation
        let x = r(1, 3);
        let coarse = g_infinite(&x, 2, 1e-4).unwrap();
        let fine = g_infinite(&x, 2, 1e-30).unwrap();
        assert!(fine.value <= coarse.value);
        let lo = coarse.value.clone() * (<Rational as Scalar>::one() - coarse.tail_bound_hi.clone());
        assert!(lo <= fine.value);
    }

    #[test]
    fn defect_matches_one_minus_product() {
        let x = r(2, 5);
        for a in 1..6 {
            let d = defect(&x, a, 1e-20).unwrap();
            let g = g_infinite(&x, a, 1e-40).unwrap();
            let diff = (<Rational as Scalar>::one() - g.value - d.value.clone()).to_f64();
            assert!(diff >= -1e-40 && diff <= d.slack.to_f64() + 1e-40);
        }
    }

    /// Counts `k`-dimensional subspaces of F_p^n as row-reduced echelon forms.
    fn count_rref(n: usize, k: usize, p: u64) -> u64 {
        // choose pivot columns; free entries are those right of each pivot
        // in non-pivot columns
        let mut total = 0u64;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let pivots: Vec<usize> = (0..n).filter(|c| mask >> c & 1 == 1).collect();
            let mut free = 0u32;
            for (row, &pc) in pivots.iter().enumerate() {
                let _ = row;
                free += ((pc + 1)..n).filter(|c| mask >> c & 1 == 0).count() as u32;
            }
            total += p.pow(free);
        }
        total
    }

    #[test]
    fn q_binomial_examples() {
        // 1-dim subspaces of F_2^2: nonzero vectors / (q - 1)
        let nonzero = 3u64;
        assert_eq!(q_binomial(2, 1, 2).unwrap(), BigUint::from(nonzero));
        assert_eq!(q_binomial(7, 0, 5).unwrap(), BigUint::from(1u32));
        assert_eq!(count_rref(4, 2, 3), 130);
        assert_eq!(q_binomial(4, 2, 3).unwrap(), BigUint::from(130u32));
        assert_eq!(q_binomial(4, 5, 3).unwrap(), BigUint::from(0u32));
        assert_eq!(q_binomial(4, -1, 3).unwrap(), BigUint::from(0u32));
        for n in 0..7 {
            for k in 0..=n {
                assert_eq!(
                    q_binomial(n as u64, k as i64, 2).unwrap(),
                    BigUint::from(count_rref(n, k, 2))
                );
            }
        }
    }

    #[test]
    fn technical_gap_examples() {
        let gap = technical_identity_gap(&r(1, 2), &r(1, 2), 0, 0, 30).unwrap();
        assert_eq!(gap, r(1, 1 << 30));
        let gap = technical_identity_gap(&r(1, 3), &r(1, 2), 1, 3, 60).unwrap();
        assert!(gap.abs().to_f64() < 1e-15);
        let x = Approx::parse("0.4").unwrap();
        let gap = technical_identity_gap(&x, &x, 2, 2, 50).unwrap();
        assert!(gap.value().abs() < 1e-15);
        assert!(technical_identity_gap(&r(1, 1), &r(1, 2), 0, 0, 3).is_err());
        assert!(technical_identity_gap(&r(1, 2), &r(1, 2), 3, 2, 3).is_err());
    }

    #[test]
    fn technical_gap_allows_negative_arguments() {
        let gap = technical_identity_gap(&r(-1, 2), &r(-1, 3), 1, 4, 80).unwrap();
        assert!(gap.abs().to_f64() < 1e-30);
    }
}
