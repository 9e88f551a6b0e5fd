//! Total variation distances between the truncated and untruncated processes
//! and their coordinates: direct summation over pmfs, closed forms where
//! they are proven, elementary bounds, and leading-order asymptotics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::countdown::Cutoff;
use crate::distributions::{
    corank_pmf, hitting_time_pmf, mode_of_s, rn_tail_bound_check, Pmf,
};
use crate::error::{domain, Error, Result};
use crate::qseries::{
    check_unit_interval, defect, g_infinite, range_product, serialize_scalar,
    serialize_scalar_opt, Rational, Scalar, TruncatedProduct,
};
use crate::Backend;

/// A distance together with a bound on its absolute deviation from the truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct TvValue<S: Scalar> {
    #[serde(serialize_with = "serialize_scalar")]
    pub value: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub slack: S,
}

impl<S: Scalar> TvValue<S> {
    pub fn upper(&self) -> S {
        self.value.clone() + self.slack.clone()
    }
}

/// Half the L1 distance over the union of the stored supports, symmetric
/// even when the two truncations differ. The true distance is within
/// `p.l1_slack() + r.l1_slack()` of the returned value.
pub fn tv_from_pmfs<S: Scalar>(p: &Pmf<S>, r: &Pmf<S>) -> TvValue<S> {
    let len = p.len().max(r.len());
    let l1 = (0..len).fold(S::zero(), |acc, k| acc + (p.get(k) - r.get(k)).abs());
    TvValue {
        value: l1 / S::from_i64(2),
        slack: p.l1_slack() + r.l1_slack(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TvStatus {
    ClosedForm,
    /// The closed form is only proven for `x <= 1/2`; bounds and the direct
    /// sum are still reported.
    ClosedFormNotEstablished,
}

/// Every available evaluation of one total variation distance.
///
/// `exact` (when present) is certified to lie in `[exact, exact + exact_slack]`;
/// `direct_sum` is within `slack` of `exact`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "", rename_all = "camelCase")]
pub struct TvReport<S: Scalar> {
    pub status: TvStatus,
    #[serde(serialize_with = "serialize_scalar_opt")]
    pub exact: Option<S>,
    #[serde(serialize_with = "serialize_scalar")]
    pub exact_slack: S,
    #[serde(serialize_with = "serialize_scalar_opt")]
    pub direct_sum: Option<S>,
    /// Bound on `|exact - direct_sum|` from truncation of both.
    #[serde(serialize_with = "serialize_scalar")]
    pub slack: S,
    #[serde(serialize_with = "serialize_scalar_opt")]
    pub lower: Option<S>,
    #[serde(serialize_with = "serialize_scalar_opt")]
    pub upper: Option<S>,
    #[serde(serialize_with = "serialize_scalar_opt")]
    pub asymptotic: Option<S>,
    pub method: BTreeMap<&'static str, &'static str>,
    pub backend: Backend,
}

impl<S: Scalar> TvReport<S> {
    /// The certified interval `[lo, hi]` for the distance, from the closed
    /// form if present, else from the direct sum.
    pub fn interval(&self) -> Option<(S, S)> {
        if let Some(e) = &self.exact {
            return Some((e.clone(), e.clone() + self.exact_slack.clone()));
        }
        self.direct_sum.as_ref().map(|d| {
            (
                S::max_of(d.clone() - self.slack.clone(), S::zero()),
                d.clone() + self.slack.clone(),
            )
        })
    }

    /// `lower <= distance <= upper` with certified comparisons on both sides.
    pub fn sandwich_holds(&self) -> bool {
        let Some((lo, hi)) = self.interval() else {
            return false;
        };
        let below = self.lower.as_ref().is_none_or(|l| l.certainly_le(&lo));
        let above = self.upper.as_ref().is_none_or(|u| hi.certainly_le(u));
        below && above
    }

    /// Like [`sandwich_holds`](Self::sandwich_holds) but with strict margins.
    pub fn strict_sandwich_holds(&self) -> bool {
        let Some((lo, hi)) = self.interval() else {
            return false;
        };
        let below = self.lower.as_ref().is_none_or(|l| l.certainly_lt(&lo));
        let above = self.upper.as_ref().is_none_or(|u| hi.certainly_lt(u));
        below && above
    }

    /// `|exact - direct_sum| <= slack + abs_tol`, accounting for rounding.
    pub fn direct_sum_agrees(&self, abs_tol: f64) -> bool {
        match (&self.exact, &self.direct_sum) {
            (Some(e), Some(d)) => {
                let gap = (e.clone() - d.clone()).abs();
                gap.lower_f64() <= self.slack.upper_f64() + self.exact_slack.upper_f64() + abs_tol
            }
            _ => false,
        }
    }
}

/// `x <= 1/2`, decided conservatively on the float backend.
fn at_most_half<S: Scalar>(x: &S) -> bool {
    match S::BACKEND {
        Backend::Exact => *x <= S::from_ratio(1, 2),
        Backend::Float => x.err_bound() == 0.0 && x.to_f64() <= 0.5 || x.upper_f64() <= 0.5,
    }
}

/// `x^{a} / (1 - x)`.
fn geometric_head<S: Scalar>(x: &S, a: u64) -> S {
    x.powi(a) / (S::one() - x.clone())
}

/// `x^{n+1}/(1-x) - x^{2n+3}/(1-x)^2`, the second Bonferroni lower bound for
/// the chance that some delay above height `n` is nonzero.
fn process_lower<S: Scalar>(x: &S, n: u64) -> S {
    let one_minus = S::one() - x.clone();
    geometric_head(x, n + 1) - x.powi(2 * n + 3) / (one_minus.clone() * one_minus)
}

/// Distance between the whole truncated and untruncated processes:
/// `1 - prod_{i>n}(1 - x^i)`, the chance that some delay above height `n` is
/// nonzero. `tol` is the relative truncation tolerance of the series.
pub fn tv_process<S: Scalar>(x: &S, n: u64, tol: f64) -> Result<TvReport<S>> {
    check_unit_interval(x)?;
    let d = defect(x, n + 1, tol)?;
    let direct = g_infinite(x, n + 1, tol * geometric_head(x, n + 1).to_f64().max(1e-300))?;
    let direct_value = S::one() - direct.value.clone();
    // the product overestimates by at most value * tail_bound_hi
    let direct_slack = direct.value.clone() * direct.tail_bound_hi.clone();
    let mut method = BTreeMap::new();
    method.insert("exact", "series 1 - prod_{i>n}(1-x^i)");
    method.insert("directSum", "1 - truncated product");
    method.insert("lower", "second Bonferroni inequality");
    method.insert("upper", "union bound");
    method.insert("asymptotic", "x^{n+1}/(1-x)");
    Ok(TvReport {
        status: TvStatus::ClosedForm,
        exact: Some(d.value),
        exact_slack: d.slack.clone(),
        direct_sum: Some(direct_value),
        slack: direct_slack + d.slack,
        lower: Some(process_lower(x, n)),
        upper: Some(geometric_head(x, n + 1)),
        asymptotic: Some(geometric_head(x, n + 1)),
        method,
        backend: S::BACKEND,
    })
}

/// Closed form of the corank distance when `x <= 1/2`: the value and its
/// truncation slack. `None` for `x > 1/2`.
pub fn tv_corank_closed<S: Scalar>(x: &S, n: u64, t: i64, tol: f64) -> Result<Option<TvValue<S>>> {
    check_corank_args(x, n, t)?;
    if !at_most_half(x) {
        return Ok(None);
    }
    let (head, start) = if t >= 0 {
        (range_product(x, t as u64 + 1, n as i64 + t), n + t as u64 + 1)
    } else {
        (range_product(x, t.unsigned_abs() + 1, n as i64), n + 1)
    };
    let d = defect(x, start, tol)?;
    Ok(Some(TvValue {
        value: head.clone() * d.value,
        slack: head * d.slack,
    }))
}

fn check_corank_args<S: Scalar>(x: &S, n: u64, t: i64) -> Result<()> {
    check_unit_interval(x)?;
    if n == 0 {
        return domain("n must be at least 1");
    }
    if n as i64 + t < 0 {
        return domain(format!("need n + t >= 0, got n = {n}, t = {t}"));
    }
    Ok(())
}

/// Distance between the heights `X_t` and `X^{(n)}_t`.
pub fn tv_corank<S: Scalar>(x: &S, n: u64, t: i64, tol: f64) -> Result<TvReport<S>> {
    check_corank_args(x, n, t)?;
    let finite = corank_pmf(x, Cutoff::Finite(n), t, None, tol)?;
    let limit = corank_pmf(x, Cutoff::Infinite, t, None, tol)?;
    let direct = tv_from_pmfs(&finite, &limit);
    let closed = tv_corank_closed(x, n, t, tol)?;
    let u = defect(x, n + 1, tol)?;
    let mut method = BTreeMap::new();
    method.insert("directSum", "sum of positive parts over truncated pmfs");

    let (lower, upper) = if t > 0 && closed.is_some() {
        method.insert("lower", "x^{n+t+1}/(2(1-x))");
        method.insert("upper", "x^{n+t+1}/(1-x)");
        let b = geometric_head(x, n + t as u64 + 1);
        (Some(b.clone() / S::from_i64(2)), Some(b))
    } else if t > 0 {
        method.insert("upper", "u(n) = 1 - prod_{i>n}(1-x^i)");
        (None, Some(u.value.clone() + u.slack.clone()))
    } else {
        method.insert("lower", "l(t,n)");
        let ell = ell_bound(x, n, t)?;
        // at t = 0 the factor-2 lower bound fails once g(x) < 1/2 (e.g. x = 0.4)
        if t == 0 && closed.is_some() {
            method.insert("upper", "x^{n+1}/(1-x)");
            (Some(ell), Some(geometric_head(x, n + 1)))
        } else {
            method.insert("upper", "u(n) = 1 - prod_{i>n}(1-x^i)");
            (Some(ell), Some(u.value.clone() + u.slack.clone()))
        }
    };

    let asymptotic = if closed.is_some() {
        method.insert("exact", "closed form for x <= 1/2");
        method.insert("asymptotic", "C_t x^{n+t+1}/(1-x)");
        let c = g_infinite(x, t.unsigned_abs() + 1, tol)?.value;
        let exponent = if t >= 0 { n + t as u64 + 1 } else { n + 1 };
        Some(c * geometric_head(x, exponent))
    } else {
        None
    };
    let (status, exact, exact_slack) = match closed {
        Some(c) => (TvStatus::ClosedForm, Some(c.value), c.slack),
        None => (TvStatus::ClosedFormNotEstablished, None, S::zero()),
    };
    Ok(TvReport {
        status,
        exact,
        exact_slack,
        direct_sum: Some(direct.value),
        slack: direct.slack,
        lower,
        upper,
        asymptotic,
        method,
        backend: S::BACKEND,
    })
}

/// Distance between the hitting times `S` and `S_n`. The closed form needs
/// `x <= 1/2`; the asymptotic `C_x x^{n+1}/(1-x)`, with `C_x` the largest
/// mass of `S`, holds for all `x`.
pub fn tv_hitting<S: Scalar>(x: &S, n: u64, tol: f64) -> Result<TvReport<S>> {
    check_unit_interval(x)?;
    if n == 0 {
        return domain("n must be at least 1");
    }
    let finite = hitting_time_pmf(x, Cutoff::Finite(n), None, tol)?;
    let limit = hitting_time_pmf(x, Cutoff::Infinite, None, tol)?;
    let direct = tv_from_pmfs(&finite, &limit);
    let u = defect(x, n + 1, tol)?;
    let c_x = mode_of_s(x, tol)?.mode_prob;
    let mut method = BTreeMap::new();
    method.insert("directSum", "sum of positive parts over truncated pmfs");
    method.insert("upper", "u(n) = 1 - prod_{i>n}(1-x^i)");
    method.insert("asymptotic", "C_x x^{n+1}/(1-x)");
    let (status, exact, exact_slack) = if at_most_half(x) {
        method.insert("exact", "closed form for x <= 1/2");
        let head = range_product(x, 1, n as i64);
        (
            TvStatus::ClosedForm,
            Some(head.clone() * u.value.clone()),
            head * u.slack.clone(),
        )
    } else {
        (TvStatus::ClosedFormNotEstablished, None, S::zero())
    };
    Ok(TvReport {
        status,
        exact,
        exact_slack,
        direct_sum: Some(direct.value),
        slack: direct.slack,
        lower: None,
        upper: Some(u.value + u.slack),
        asymptotic: Some(c_x * geometric_head(x, n + 1)),
        method,
        backend: S::BACKEND,
    })
}

/// `l(t, n) = prod_{-t<i<=n}(1-x^i) * (x^{n+1}/(1-x) - x^{2n+3}/(1-x)^2)`.
fn ell_bound<S: Scalar>(x: &S, n: u64, t: i64) -> Result<S> {
    if t > 0 {
        return domain(format!("the lower bound needs t <= 0, got {t}"));
    }
    Ok(range_product(x, t.unsigned_abs() + 1, n as i64) * process_lower(x, n))
}

/// The lower bound `l(t, n)` for `t <= 0` checked against the direct sum.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "", rename_all = "camelCase")]
pub struct LowerBoundCheck<S: Scalar> {
    #[serde(serialize_with = "serialize_scalar")]
    pub ell: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub direct_sum: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub slack: S,
    pub holds: bool,
}

pub fn tv_lower_nonpositive_t<S: Scalar>(
    x: &S,
    n: u64,
    t: i64,
    tol: f64,
) -> Result<LowerBoundCheck<S>> {
    check_corank_args(x, n, t)?;
    let ell = ell_bound(x, n, t)?;
    let finite = corank_pmf(x, Cutoff::Finite(n), t, None, tol)?;
    let limit = corank_pmf(x, Cutoff::Infinite, t, None, tol)?;
    let direct = tv_from_pmfs(&finite, &limit);
    let holds = ell.certainly_le(&direct.upper());
    Ok(LowerBoundCheck {
        ell,
        direct_sum: direct.value,
        slack: direct.slack,
        holds,
    })
}

/// `r(t) = prod_{i>-t}(1-x^i)`, the limiting ratio of `l(t, n)` to `u(n)`.
pub fn r_ratio<S: Scalar>(x: &S, t: i64, tol: f64) -> Result<TruncatedProduct<S>> {
    if t > 0 {
        return domain(format!("r(t) is defined for t <= 0, got {t}"));
    }
    g_infinite(x, t.unsigned_abs() + 1, tol)
}

/// The corank distance at `x = 1/q` against the bounds
/// `1/(8 q^{m+n+1}) <= d <= 3/q^{m+n+1}` (for `m >= 0`) and the sharper
/// upper bounds `(q/(q-1)) q^{-(n+m+1)}` (`m >= 0`) or `(q/(q-1)) q^{-(n+1)}`
/// (`m < 0`). Evaluated exactly.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FgRow {
    pub q: u64,
    pub n: u64,
    pub m: i64,
    #[serde(serialize_with = "serialize_scalar")]
    pub exact: Rational,
    #[serde(serialize_with = "serialize_scalar")]
    pub exact_slack: Rational,
    #[serde(serialize_with = "serialize_scalar_opt")]
    pub fg_lower: Option<Rational>,
    #[serde(serialize_with = "serialize_scalar_opt")]
    pub fg_upper: Option<Rational>,
    #[serde(serialize_with = "serialize_scalar")]
    pub new_upper: Rational,
    /// All applicable inequalities hold strictly.
    pub holds: bool,
}

pub fn fg_comparison(q: u64, n: u64, m: i64, tol: f64) -> Result<FgRow> {
    if q < 2 {
        return domain(format!("q = {q} must be at least 2"));
    }
    if n == 0 || n as i64 + m < 0 {
        return domain(format!("need n >= 1 and n + m >= 0, got n = {n}, m = {m}"));
    }
    let x = Rational::from_ratio(1, q as i64);
    let closed = tv_corank_closed(&x, n, m, tol)?.ok_or_else(|| {
        Error::Numerical(format!("no closed form at x = 1/{q}"))
    })?;
    let hi = closed.value.clone() + closed.slack.clone();
    let lo = closed.value.clone();
    let coef = Rational::from_ratio(q as i64, q as i64 - 1);
    let (fg_lower, fg_upper, new_upper, holds) = if m >= 0 {
        let power = x.powi(n + m as u64 + 1);
        let fg_lower = power.clone() / Rational::from_i64(8);
        let fg_upper = power.clone() * Rational::from_i64(3);
        let new_upper = coef * power;
        let holds = fg_lower < lo && hi < new_upper && new_upper < fg_upper;
        (Some(fg_lower), Some(fg_upper), new_upper, holds)
    } else {
        let new_upper = coef * x.powi(n + 1);
        let holds = hi < new_upper;
        (None, None, new_upper, holds)
    };
    Ok(FgRow {
        q,
        n,
        m,
        exact: closed.value,
        exact_slack: closed.slack,
        fg_lower,
        fg_upper,
        new_upper,
        holds,
    })
}

/// `d(X, X + 1) = max_k P(X = k)` for unimodal `X`. The stored entries must
/// rise then fall (within rounding); whatever the unstored tail does can move
/// the distance by at most the pmf's slack, which is returned with it.
pub fn tv_unimodal_shift<S: Scalar>(p: &Pmf<S>) -> Result<TvValue<S>> {
    let (mode, max) = p
        .argmax()
        .ok_or_else(|| Error::NotUnimodal("empty pmf".into()))?;
    let rises = |a: &S, b: &S| match S::BACKEND {
        Backend::Exact => a < b,
        Backend::Float => a.certainly_lt(b),
    };
    for k in 1..p.len() {
        let (prev, cur) = (&p.probs[k - 1], &p.probs[k]);
        let bad = if k <= mode { rises(cur, prev) } else { rises(prev, cur) };
        if bad {
            return Err(Error::NotUnimodal(format!(
                "mass {} at {k} breaks unimodality around the mode {mode}",
                if k <= mode { "falls" } else { "rises" }
            )));
        }
    }
    Ok(TvValue {
        value: max,
        slack: p.l1_slack(),
    })
}

/// `d(X, X + U) = p * max_k P(X = k)` for unimodal `X` and an independent
/// Bernoulli(`p`) variable `U`.
pub fn tv_bernoulli_shift<S: Scalar>(pmf: &Pmf<S>, p: &S) -> Result<TvValue<S>> {
    let base = tv_unimodal_shift(pmf)?;
    Ok(TvValue {
        value: p.clone() * base.value,
        slack: p.clone() * base.slack,
    })
}

/// `|d(S, S_n) - p_n max_k P(S_n = k)| <= P(R_n > 1)` with
/// `p_n = 1 - P(R_n = 0)`.
#[derive(Debug, Clone, Serialize)]
#[serde(bound = "", rename_all = "camelCase")]
pub struct TriangleCheck<S: Scalar> {
    #[serde(serialize_with = "serialize_scalar")]
    pub tv: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub approximation: S,
    #[serde(serialize_with = "serialize_scalar")]
    pub bound: S,
    pub holds: bool,
}

pub fn hitting_triangle_check<S: Scalar>(x: &S, n: u64, tol: f64) -> Result<TriangleCheck<S>> {
    check_unit_interval(x)?;
    let finite = hitting_time_pmf(x, Cutoff::Finite(n), None, tol)?;
    let limit = hitting_time_pmf(x, Cutoff::Infinite, None, tol)?;
    let direct = tv_from_pmfs(&finite, &limit);
    let p_n = defect(x, n + 1, tol)?;
    let shift = tv_unimodal_shift(&finite)?;
    let approximation = p_n.value.clone() * shift.value.clone();
    let rn = rn_tail_bound_check(x, n)?;
    let gap = (direct.value.clone() - approximation.clone()).abs();
    let allowance = rn.exact_hi.clone()
        + direct.slack.clone()
        + p_n.slack.clone() * shift.value.clone()
        + shift.slack.clone();
    Ok(TriangleCheck {
        holds: gap.certainly_le(&allowance),
        tv: direct.value,
        approximation,
        bound: rn.exact_hi,
    })
}
