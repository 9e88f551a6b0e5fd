//! Exact laws of the partial sums `Z_m + ... + Z_n` (hence `S_n`, `S`, `R_n`)
//! and of the heights `X^{(n)}_t`, `X_t`, with certified truncation.

use serde::Serialize;

use crate::countdown::Cutoff;
use crate::error::{domain, Error, Result};
use crate::qseries::{
    check_unit_interval, g_infinite, product_cutoff, range_product, serialize_scalar,
    serialize_scalar_vec, FactorTable, Scalar, DEFAULT_PRODUCT_CAP,
};

/// Maximum number of stored pmf entries before giving up on a default cutoff.
pub const MAX_PMF_LEN: u64 = 10_000_000;

/// A probability mass function on `{0, 1, 2, ...}` with certified error terms.
///
/// Against the true law `p`:
/// - `tail_mass_hi` bounds `sum_k max(0, p_k - probs[k])`, the mass the
///   stored entries miss (beyond the stored support, or never enumerated);
/// - `excess_hi` bounds `sum_k max(0, probs[k] - p_k)`, the overestimate from
///   truncated infinite products.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "", rename_all = "camelCase")]
pub struct Pmf<S: Scalar> {
    #[serde(serialize_with = "serialize_scalar_vec")]
    pub probs: Vec<S>,
    #[serde(rename = "tailBound", serialize_with = "serialize_scalar")]
    pub tail_mass_hi: S,
    #[serde(rename = "excess", serialize_with = "serialize_scalar")]
    pub excess_hi: S,
}

impl<S: Scalar> Pmf<S> {
    /// A fully specified finite law.
    pub fn from_probs(probs: Vec<S>) -> Self {
        Pmf {
            probs,
            tail_mass_hi: S::zero(),
            excess_hi: S::zero(),
        }
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![S::zero(); k + 1];
        probs[k] = S::one();
        Self::from_probs(probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `probs[k]`, or zero beyond the stored support.
    pub fn get(&self, k: usize) -> S {
        self.probs.get(k).cloned().unwrap_or_else(S::zero)
    }

    pub fn total(&self) -> S {
        self.probs.iter().cloned().fold(S::zero(), |a, b| a + b)
    }

    /// `sum |probs[k] - p_k|` over all `k` is at most this.
    pub fn l1_slack(&self) -> S {
        self.tail_mass_hi.clone() + self.excess_hi.clone()
    }

    /// Index and value of the largest stored entry (first one on ties).
    pub fn argmax(&self) -> Option<(usize, S)> {
        let mut best: Option<(usize, S)> = None;
        for (k, p) in self.probs.iter().enumerate() {
            match &best {
                Some((_, b)) if !(p > b) => {}
                _ => best = Some((k, p.clone())),
            }
        }
        best
    }

    /// Law of `X + by`.
    pub fn shifted(&self, by: usize) -> Self {
        let mut probs = vec![S::zero(); by];
        probs.extend(self.probs.iter().cloned());
        Pmf {
            probs,
            tail_mass_hi: self.tail_mass_hi.clone(),
            excess_hi: self.excess_hi.clone(),
        }
    }

    /// `(1 - w) * self + w * other`.
    pub fn mixture(&self, other: &Self, w: &S) -> Self {
        let len = self.len().max(other.len());
        let keep = S::one() - w.clone();
        let probs = (0..len)
            .map(|k| keep.clone() * self.get(k) + w.clone() * other.get(k))
            .collect();
        Pmf {
            probs,
            tail_mass_hi: keep.clone() * self.tail_mass_hi.clone()
                + w.clone() * other.tail_mass_hi.clone(),
            excess_hi: keep * self.excess_hi.clone() + w.clone() * other.excess_hi.clone(),
        }
    }

    /// Checks `1 - tail - eps <= sum <= 1 + excess + eps`, with `eps` the
    /// accumulated rounding bound of the sum.
    pub fn is_normalized(&self) -> bool {
        let total = self.total();
        let lo = S::one() - self.tail_mass_hi.clone();
        let hi = S::one() + self.excess_hi.clone();
        let eps = total.err_bound() + lo.err_bound() + hi.err_bound();
        total.to_f64() >= lo.to_f64() - eps - 1e-300 && total.to_f64() <= hi.to_f64() + eps
    }

    /// Rows `k,prob,cumulative`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,prob,cumulative\n");
        let mut acc = S::zero();
        for (k, p) in self.probs.iter().enumerate() {
            acc = acc + p.clone();
            s.push_str(&format!("{k},{p},{acc}\n"));
        }
        s
    }
}

/// Upper bound on `sum_{j>=1} last * rho^j`, or `None` when `rho >= 1`.
fn geometric_tail<S: Scalar>(last: &S, rho: &S) -> Option<S> {
    if rho.upper_f64() < 1.0 {
        Some(last.clone() * rho.clone() / (S::one() - rho.clone()))
    } else {
        None
    }
}

fn check_tail_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        domain(format!("tolerance {tol} must be positive and finite"))
    }
}

/// Law of `Z_m + ... + Z_n` on `{0..=k_max}`:
///
/// `P(k) = x^{mk} prod_{i=n-m+1}^{n-m+k}(1-x^i) prod_{i=m}^{n}(1-x^i) / prod_{i=1}^{k}(1-x^i)`,
///
/// and for `n = infinity`, `P(k) = x^{mk} prod_{i>=m}(1-x^i) / prod_{i=1}^{k}(1-x^i)`.
/// `m = 1` gives `S_n` and `S`; `m = n + 1` with `n = infinity` gives `R_n`.
///
/// Without `k_max` the support is cut at the smallest `K` whose certified
/// tail (a geometric bound from the ratio of consecutive terms) is below `tol`.
pub fn pmf_partial_sum<S: Scalar>(
    x: &S,
    m: u64,
    n: Cutoff,
    k_max: Option<u64>,
    tol: f64,
) -> Result<Pmf<S>> {
    check_unit_interval(x)?;
    check_tail_tol(tol)?;
    if m == 0 {
        return domain("partial sums start at index m >= 1");
    }
    let (mut p, excess_rel, shift) = match n {
        Cutoff::Finite(n) => {
            if n + 1 < m {
                return domain(format!("need n >= m - 1, got m = {m}, n = {n}"));
            }
            if n + 1 == m {
                let k = k_max.unwrap_or(0) as usize;
                let mut probs = vec![S::zero(); k + 1];
                probs[0] = S::one();
                return Ok(Pmf::from_probs(probs));
            }
            (range_product(x, m, n as i64), S::zero(), Some(n - m))
        }
        Cutoff::Infinite => {
            let g = g_infinite(x, m, tol)?;
            (g.value, g.tail_bound_hi, None)
        }
    };

    let x_m = x.powi(m);
    let mut pow_k1 = x.clone(); // x^{k+1}
    let mut pow_shift = shift.map(|s| x.powi(s + 1)); // x^{n-m+k+1}
    let mut probs = vec![p.clone()];
    let mut tail;
    loop {
        let k = probs.len() as u64 - 1;
        let rho = x_m.clone() / (S::one() - pow_k1.clone());
        tail = geometric_tail(&p, &rho);
        match k_max {
            Some(km) if k >= km => break,
            None => {
                if let Some(t) = &tail {
                    if t.upper_f64() < tol {
                        break;
                    }
                }
            }
            _ => {}
        }
        if k >= MAX_PMF_LEN {
            return Err(Error::Resource {
                what: "pmf support",
                required: k as u128 + 1,
                cap: MAX_PMF_LEN as u128,
            });
        }
        let mut next = p * x_m.clone() / (S::one() - pow_k1.clone());
        if let Some(ps) = pow_shift.as_mut() {
            next = next * (S::one() - ps.clone());
            *ps = ps.clone() * x.clone();
        }
        pow_k1 = pow_k1 * x.clone();
        p = next;
        probs.push(p.clone());
    }

    let total = probs.iter().cloned().fold(S::zero(), |a, b| a + b);
    let tail_mass_hi = match tail {
        Some(t) => t,
        // ratio test not yet effective: fall back on the mass deficit
        None => S::max_of(S::one() - total.clone() + total.clone() * excess_rel.clone(), S::zero()),
    };
    Ok(Pmf {
        probs,
        tail_mass_hi,
        excess_hi: excess_rel * total,
    })
}

/// Law of the hitting time `S_n` (or `S` for `Cutoff::Infinite`).
pub fn hitting_time_pmf<S: Scalar>(
    x: &S,
    n: Cutoff,
    k_max: Option<u64>,
    tol: f64,
) -> Result<Pmf<S>> {
    pmf_partial_sum(x, 1, n, k_max, tol)
}

/// Law of `R_n = Z_{n+1} + Z_{n+2} + ...`.
pub fn rn_pmf<S: Scalar>(x: &S, n: u64, k_max: Option<u64>, tol: f64) -> Result<Pmf<S>> {
    pmf_partial_sum(x, n + 1, Cutoff::Infinite, k_max, tol)
}

/// Law of the height `X^{(n)}_t` (or `X_t` for `Cutoff::Infinite`):
///
/// `P(X^{(n)}_t = k) = x^{k(t+k)} prod_{i=n-k+1}^{n+t}(1-x^i) prod_{i=k+1}^{n}(1-x^i) / prod_{i=1}^{t+k}(1-x^i)`
///
/// for `max(0, -t) <= k <= n`, zero elsewhere; for `t < -n` the height is
/// `-t` surely. For finite `n` the whole support is stored unless `k_max` is
/// smaller.
pub fn corank_pmf<S: Scalar>(
    x: &S,
    n: Cutoff,
    t: i64,
    k_max: Option<u64>,
    tol: f64,
) -> Result<Pmf<S>> {
    check_unit_interval(x)?;
    check_tail_tol(tol)?;
    let lo = (-t).max(0) as u64;
    match n {
        Cutoff::Finite(n) => {
            if (n as i64) + t < 0 {
                // the truncated path is still on the diagonal
                return Ok(Pmf::point_mass(t.unsigned_abs() as usize));
            }
            let hi = k_max.map_or(n, |km| km.min(n));
            let len = (n as i64 + t.max(0)) as u64;
            let table = FactorTable::new(x, len);
            let mut probs = vec![S::zero(); hi as usize + 1];
            for k in lo..=hi {
                probs[k as usize] = corank_term_finite(&table, n, t, k);
            }
            let tail_mass_hi = if hi < n {
                let total = probs.iter().cloned().fold(S::zero(), |a, b| a + b);
                S::max_of(S::one() - total, S::zero())
            } else {
                S::zero()
            };
            Ok(Pmf {
                probs,
                tail_mass_hi,
                excess_hi: S::zero(),
            })
        }
        Cutoff::Infinite => {
            let cutoff = product_cutoff(x, tol, DEFAULT_PRODUCT_CAP)?;
            let delta = x.powi(cutoff + 1) / (S::one() - x.clone());
            let mut table = FactorTable::new(x, cutoff.max((t + lo as i64).max(0) as u64));
            let mut probs = vec![S::zero(); lo as usize];
            let mut k = lo;
            let tail = loop {
                let need = (t + k as i64 + 1).max(k as i64 + 1) as u64;
                if need > table.len() {
                    table.extend_to(need + 16);
                }
                let p = corank_term_infinite(&table, cutoff, t, k);
                // ratio P(j+1)/P(j) <= rho_k for all j >= k
                let rho = x.powi((t + 2 * k as i64 + 1) as u64)
                    / ((S::one() - table.power(k + 1))
                        * (S::one() - table.power((t + k as i64 + 1) as u64)));
                let tail = geometric_tail(&p, &rho);
                probs.push(p);
                let done = match k_max {
                    Some(km) => k >= km,
                    None => tail.as_ref().is_some_and(|tl| tl.upper_f64() < tol),
                };
                if done {
                    break tail;
                }
                if k >= MAX_PMF_LEN {
                    return Err(Error::Resource {
                        what: "pmf support",
                        required: k as u128 + 1,
                        cap: MAX_PMF_LEN as u128,
                    });
                }
                k += 1;
            };
            let total = probs.iter().cloned().fold(S::zero(), |a, b| a + b);
            let tail_mass_hi = match tail {
                Some(tl) => tl,
                None => S::max_of(
                    S::one() - total.clone() + total.clone() * delta.clone(),
                    S::zero(),
                ),
            };
            Ok(Pmf {
                probs,
                tail_mass_hi,
                excess_hi: delta * total,
            })
        }
    }
}

fn corank_term_finite<S: Scalar>(table: &FactorTable<S>, n: u64, t: i64, k: u64) -> S {
    let tk = (t + k as i64) as u64;
    table.x().powi(k * tk) * table.range(n - k + 1, n as i64 + t) * table.range(k + 1, n as i64)
        / table.prefix(tk)
}

fn corank_term_infinite<S: Scalar>(table: &FactorTable<S>, cutoff: u64, t: i64, k: u64) -> S {
    let tk = (t + k as i64) as u64;
    table.x().powi(k * tk) * table.range(k + 1, cutoff as i64) / table.prefix(tk)
}

/// `P(D_{t,k})`, the probability that `X^{(n)}` drops from height `k` to
/// `k - 1` right after time `t`; equals `P(S_n - S_{k-1} = t + k)`.
pub fn death_prob<S: Scalar>(x: &S, n: u64, t: i64, k: u64) -> Result<S> {
    check_unit_interval(x)?;
    if k == 0 {
        return domain("death heights start at 1");
    }
    let j = t + k as i64;
    if j < 0 {
        return Ok(S::zero());
    }
    if k > n {
        // above the truncation level the path follows the diagonal
        return Ok(if j == 0 { S::one() } else { S::zero() });
    }
    let j = j as u64;
    let table = FactorTable::new(x, n.max(n - k + j).max(j));
    Ok(x.powi(k * j) * table.range(n - k + 1, (n - k + j) as i64) * table.range(k, n as i64)
        / table.prefix(j))
}

/// Mode of the law of `S` and its mass.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "", rename_all = "camelCase")]
pub struct ModeReport<S: Scalar> {
    pub mode: u64,
    #[serde(serialize_with = "serialize_scalar")]
    pub mode_prob: S,
    /// `P(S = mode) = P(S = mode + 1)` within the scalar's error bound.
    pub tie_with_next: bool,
}

/// Mode of `S`, from the ratio `P(S = k+1) / P(S = k) = x / (1 - x^{k+1})`:
/// the smallest `k` at which the ratio is not above 1. Ties report the
/// smaller index.
pub fn mode_of_s<S: Scalar>(x: &S, tol: f64) -> Result<ModeReport<S>> {
    check_unit_interval(x)?;
    let mut k = 0u64;
    let mut pow = x.clone();
    let (mode, tie) = loop {
        let excess = x.clone() / (S::one() - pow.clone()) - S::one();
        let certainly_up = match S::BACKEND {
            crate::Backend::Exact => excess > S::zero(),
            crate::Backend::Float => excess.lower_f64() > 0.0,
        };
        if !certainly_up {
            let tie = match S::BACKEND {
                crate::Backend::Exact => excess.is_zero(),
                crate::Backend::Float => excess.upper_f64() >= 0.0,
            };
            break (k, tie);
        }
        k += 1;
        if k > MAX_PMF_LEN {
            return Err(Error::Resource {
                what: "mode search",
                required: k as u128,
                cap: MAX_PMF_LEN as u128,
            });
        }
        pow = pow * x.clone();
    };
    let law = pmf_partial_sum(x, 1, Cutoff::Infinite, Some(mode), tol)?;
    let mode_prob = law.get(mode as usize);
    if mode_prob.to_f64() <= 0.0 {
        return Err(Error::Numerical(format!(
            "P(S = {mode}) underflowed at x = {x}"
        )));
    }
    Ok(ModeReport {
        mode,
        mode_prob,
        tie_with_next: tie,
    })
}

/// The critical value `x_k`, root of `x^{k+1} = 1 - x` in `(0, 1)`, where
/// the mode of `S` ties between `k` and `k + 1`; `y = -1 / ln x_k`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriticalPoint {
    pub k: u64,
    pub x: f64,
    pub y: f64,
    /// `|x^{k+1} + x - 1|` at the returned `x`.
    pub residual: f64,
}

/// Bisection for `x_k`; `x -> x^{k+1} + x - 1` is strictly increasing on
/// `(0, 1)`. Stops when the residual is within `tol` or the bracket cannot
/// shrink further.
pub fn critical_x(k: u64, tol: f64) -> Result<CriticalPoint> {
    if !(tol > 0.0) {
        return domain(format!("tolerance {tol} must be positive"));
    }
    let exp = i32::try_from(k + 1).map_err(|_| Error::Domain(format!("k = {k} too large")))?;
    let f = |x: f64| x.powi(exp) + x - 1.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut mid = 0.5;
    loop {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        mid = m;
        let v = f(mid);
        if v.abs() <= tol {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalPoint {
        k,
        x: mid,
        y: -1.0 / mid.ln(),
        residual: f(mid).abs(),
    })
}

/// `P(R_n > 1)` against the two bounds `(x^{n+1}/(1-x))^2` and `x^{2n}/(1-x)^2`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "", rename_all = "camelCase")]
pub struct RnTailCheck<S: Scalar> {
    pub n: u64,
    /// `sum_{k>=2} P(R_n = k)` over the stored support (truncated products
    /// make this an overestimate of the stored terms).
    #[serde(serialize_with = "serialize_scalar")]
    pub exact: S,
    /// Certified upper bound on `P(R_n > 1)`.
    #[serde(serialize_with = "serialize_scalar")]
    pub exact_hi: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub proof_bound: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub stated_bound: S,
    pub proof_bound_holds: bool,
    pub stated_bound_holds: bool,
}

/// Evaluates `P(R_n > 1)` as the positive series `sum_{k>=2} P(R_n = k)`
/// (no cancellation against `1 - P(R_n = 0) - P(R_n = 1)`) and checks both
/// bounds with certified comparisons.
pub fn rn_tail_bound_check<S: Scalar>(x: &S, n: u64) -> Result<RnTailCheck<S>> {
    check_unit_interval(x)?;
    if n == 0 {
        return domain("n must be at least 1");
    }
    let one_minus = S::one() - x.clone();
    let proof_bound = {
        let b = x.powi(n + 1) / one_minus.clone();
        b.clone() * b
    };
    let stated_bound = x.powi(2 * n) / (one_minus.clone() * one_minus);
    // scale the truncation to the size of the first retained term
    let tol = (proof_bound.to_f64() * 1e-12).max(f64::MIN_POSITIVE);
    let law = rn_pmf(x, n, None, tol)?;
    let exact = law
        .probs
        .iter()
        .skip(2)
        .cloned()
        .fold(S::zero(), |a, b| a + b);
    let exact_hi = exact.clone() + law.tail_mass_hi.clone();
    Ok(RnTailCheck {
        n,
        proof_bound_holds: exact_hi.certainly_le(&proof_bound),
        stated_bound_holds: exact_hi.certainly_le(&stated_bound),
        exact,
        exact_hi,
        proof_bound,
        stated_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::{g_finite, Approx, Rational};

    fn one() -> Rational {
        <Rational as Scalar>::one()
    }

    fn r(p: i64, q: i64) -> Rational {
        Rational::from_ratio(p, q)
    }

    /// Brute force over `(z_1, z_2) in {0..cap}^2` of independent geometric masses.
    fn brute_s2(x: &Rational, cap: u64) -> Vec<Rational> {
        let geo = |i: u64, z: u64| x.powi(i * z) * (one() - x.powi(i));
        let mut out = vec![Rational::from_i64(0); (2 * cap + 1) as usize];
        for z1 in 0..=cap {
            for z2 in 0..=cap {
                out[(z1 + z2) as usize] += geo(1, z1) * geo(2, z2);
            }
        }
        out
    }

    #[test]
    fn single_geometric() {
        let pmf = pmf_partial_sum(&r(1, 2), 1, Cutoff::Finite(1), Some(20), 1e-12).unwrap();
        for k in 0..=20 {
            assert_eq!(pmf.probs[k], r(1, 1 << (k + 1)));
        }
    }

    #[test]
    fn s2_matches_brute_force() {
        let x = r(1, 2);
        let brute = brute_s2(&x, 40);
        let pmf = pmf_partial_sum(&x, 1, Cutoff::Finite(2), Some(30), 1e-12).unwrap();
        assert_eq!(pmf.probs[0], r(3, 8));
        assert_eq!(pmf.probs[0], g_finite(&x, 1, 2).unwrap());
        for k in 0..=30 {
            // brute force misses only mass with some z_i > 40
            let diff = (pmf.probs[k].clone() - brute[k].clone()).to_f64();
            assert!((0.0..1e-11).contains(&diff), "k = {k}: {diff}");
        }
    }

    #[test]
    fn sn_closed_form_agrees_with_general_formula() {
        for x in [r(1, 2), r(1, 3)] {
            for n in 1..=10u64 {
                let pmf = pmf_partial_sum(&x, 1, Cutoff::Finite(n), Some(20), 1e-12).unwrap();
                for k in 0..=20u64 {
                    // x^k (1 - x^n) prod_{i=k+1}^{n+k-1} (1 - x^i)
                    let mut direct = x.powi(k) * (one() - x.powi(n));
                    for i in k + 1..n + k {
                        direct *= one() - x.powi(i);
                    }
                    assert_eq!(pmf.probs[k as usize], direct, "n = {n}, k = {k}");
                }
            }
        }
    }

    #[test]
    fn partial_sum_point_mass_and_errors() {
        let pmf = pmf_partial_sum(&r(1, 3), 4, Cutoff::Finite(3), None, 1e-12).unwrap();
        assert_eq!(pmf.probs, vec![one()]);
        assert!(pmf_partial_sum(&r(1, 3), 5, Cutoff::Finite(3), None, 1e-12).is_err());
        assert!(pmf_partial_sum(&r(1, 3), 0, Cutoff::Finite(3), None, 1e-12).is_err());
        assert!(pmf_partial_sum(&r(4, 3), 1, Cutoff::Finite(3), None, 1e-12).is_err());
    }

    #[test]
    fn default_cutoff_certifies_tail() {
        for xv in ["0.2", "0.5", "0.7", "0.9"] {
            let x = Approx::parse(xv).unwrap();
            for n in [Cutoff::Finite(5), Cutoff::Infinite] {
                let pmf = hitting_time_pmf(&x, n, None, 1e-12).unwrap();
                assert!(pmf.tail_mass_hi.upper_f64() < 1e-12);
                assert!(pmf.is_normalized(), "x = {xv}");
                let deficit = 1.0 - pmf.total().value();
                assert!(deficit.abs() < 1e-10, "x = {xv}: {deficit}");
            }
        }
    }

    #[test]
    fn corank_small_matrix_values() {
        let pmf = corank_pmf(&r(1, 2), Cutoff::Finite(2), 0, None, 1e-12).unwrap();
        assert_eq!(pmf.probs, vec![r(3, 8), r(9, 16), r(1, 16)]);
        assert_eq!(pmf.tail_mass_hi, Rational::from_i64(0));
    }

    #[test]
    fn corank_zero_below_diagonal() {
        let pmf = corank_pmf(&r(1, 3), Cutoff::Finite(5), -3, None, 1e-12).unwrap();
        for k in 0..3 {
            assert_eq!(pmf.probs[k], Rational::from_i64(0));
        }
        assert_eq!(pmf.total(), one());
        let diag = corank_pmf(&r(1, 3), Cutoff::Finite(2), -3, None, 1e-12).unwrap();
        assert_eq!(diag, Pmf::point_mass(3));
    }

    #[test]
    fn corank_n_zero_is_point_mass() {
        for t in 0..4 {
            let pmf = corank_pmf(&r(2, 5), Cutoff::Finite(0), t, None, 1e-12).unwrap();
            assert_eq!(pmf.probs, vec![one()]);
        }
    }

    #[test]
    fn corank_infinite_normalized() {
        for xv in ["0.3", "0.5", "0.8"] {
            let x = Approx::parse(xv).unwrap();
            for t in -3..=4 {
                let pmf = corank_pmf(&x, Cutoff::Infinite, t, None, 1e-12).unwrap();
                assert!(pmf.is_normalized(), "x = {xv}, t = {t}");
                assert!((pmf.total().value() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn corank_truncated_support_uses_deficit() {
        let pmf = corank_pmf(&r(1, 2), Cutoff::Finite(6), 0, Some(2), 1e-12).unwrap();
        assert_eq!(pmf.len(), 3);
        assert_eq!(pmf.total() + pmf.tail_mass_hi.clone(), one());
    }

    #[test]
    fn death_prob_examples() {
        let p = death_prob(&r(1, 2), 2, 0, 1).unwrap();
        assert_eq!(p, r(9, 32));
        assert_eq!(p, (one() - r(1, 2)) * r(9, 16));
        let brute = brute_s2(&r(1, 2), 40);
        assert!((brute[1].clone() - p.clone()).to_f64() < 1e-11);
        assert_eq!(death_prob(&r(1, 2), 4, -5, 2).unwrap(), Rational::from_i64(0));
        let via_sum = pmf_partial_sum(&r(1, 3), 2, Cutoff::Finite(3), Some(3), 1e-12).unwrap();
        assert_eq!(death_prob(&r(1, 3), 3, 1, 2).unwrap(), via_sum.probs[3]);
        assert!(death_prob(&r(1, 3), 3, 1, 0).is_err());
    }

    #[test]
    fn mode_examples() {
        let m = mode_of_s(&r(1, 2), 1e-12).unwrap();
        assert_eq!((m.mode, m.tie_with_next), (0, true));
        let m = mode_of_s(&Approx::exact(0.5), 1e-12).unwrap();
        assert_eq!((m.mode, m.tie_with_next), (0, true));
        let m = mode_of_s(&Approx::parse("0.55").unwrap(), 1e-12).unwrap();
        assert_eq!((m.mode, m.tie_with_next), (1, false));
        let m = mode_of_s(&Approx::parse("0.3").unwrap(), 1e-12).unwrap();
        assert_eq!((m.mode, m.tie_with_next), (0, false));
        let g = crate::qseries::g_infinite(&Approx::parse("0.3").unwrap(), 1, 1e-12)
            .unwrap()
            .value;
        assert!((m.mode_prob.value() - g.value()).abs() < 1e-12);
    }

    #[test]
    fn mode_matches_stored_argmax() {
        for xv in ["0.6", "0.7", "0.8", "0.9"] {
            let x = Approx::parse(xv).unwrap();
            let m = mode_of_s(&x, 1e-12).unwrap();
            let law = hitting_time_pmf(&x, Cutoff::Infinite, None, 1e-12).unwrap();
            let (k, p) = law.argmax().unwrap();
            assert_eq!(k as u64, m.mode, "x = {xv}");
            assert!((p.value() - m.mode_prob.value()).abs() < 1e-14);
        }
    }

    #[test]
    fn critical_points() {
        let c0 = critical_x(0, 1e-15).unwrap();
        assert_eq!(c0.x, 0.5);
        let c1 = critical_x(1, 1e-15).unwrap();
        assert!((c1.x - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        let c = critical_x(6907, 1e-15).unwrap();
        assert!((c.x - 0.9990004676).abs() < 1e-9);
        let c = critical_x(6908, 1e-15).unwrap();
        assert!((c.x - 0.9990005939).abs() < 1e-9);
        assert!(critical_x(3, 0.0).is_err());
    }

    #[test]
    fn critical_points_bracket_mode_changes() {
        for k in 0..5u64 {
            let c = critical_x(k, 1e-15).unwrap();
            let next = critical_x(k + 1, 1e-15).unwrap();
            let inside = Approx::exact(0.5 * (c.x + next.x));
            assert_eq!(mode_of_s(&inside, 1e-12).unwrap().mode, k + 1);
        }
    }

    #[test]
    fn rn_tail_examples() {
        let c = rn_tail_bound_check(&Approx::exact(0.5), 3).unwrap();
        assert!(c.proof_bound_holds && c.stated_bound_holds);
        assert!((c.proof_bound.value() - 1.0 / 64.0).abs() < 1e-15);
        let c = rn_tail_bound_check(&Approx::parse("0.9").unwrap(), 20).unwrap();
        assert!(c.proof_bound_holds && c.stated_bound_holds);
        let c = rn_tail_bound_check(&Approx::exact(1e-6), 1).unwrap();
        assert!(c.exact_hi.value() < 1e-20);
    }

    #[test]
    fn rn_tail_series_matches_complement_on_exact_backend() {
        let x = r(1, 2);
        let n = 3;
        let law = rn_pmf(&x, n, None, 1e-30).unwrap();
        let c = rn_tail_bound_check(&x, n).unwrap();
        let complement = one() - law.probs[0].clone() - law.probs[1].clone();
        // the series is certified from above and truncated at 1e-12 relative
        assert!(complement <= c.exact_hi);
        let under = (c.exact.clone() - complement).abs().to_f64();
        assert!(under <= 1e-12 * c.proof_bound.to_f64(), "{under}");
    }
}
