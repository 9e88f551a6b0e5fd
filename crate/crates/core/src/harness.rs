//! Cross-validation: a brute-force oracle over delay vectors, seeded Monte
//! Carlo experiments compared bin by bin against exact laws, and the
//! verification suites.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::countdown::{chain_hitting_time, height_at, sample_delays, seeded_rng, Cutoff, SimRng};
use crate::distributions::{
    corank_pmf, critical_x, death_prob, pmf_partial_sum, rn_tail_bound_check, Pmf,
};
use crate::error::{domain, Error, Result};
use crate::fieldmat::{
    corank_span_process, enumerate_rank_counts, rank_count_exact, sample_matrix, FqField,
    DEFAULT_ENUMERATION_CAP,
};
use crate::qseries::{
    g_infinite, range_product, technical_identity_gap, Approx, FactorTable, Rational, Scalar,
};
use crate::tvmetrics::{fg_comparison, tv_corank, tv_corank_closed, tv_hitting, tv_process};

/// Seed used by the acceptance suites unless another is given.
pub const DEFAULT_SEED: u64 = 20_240_601;
/// Default sigma threshold for Monte Carlo bins.
pub const DEFAULT_SIGMA: f64 = 4.0;
/// Default enumeration budget for the delay-space oracle, in visited nodes.
pub const DEFAULT_ORACLE_BUDGET: u64 = 100_000_000;
/// Upper-tail bins are pooled until their expected count reaches this.
const MIN_EXPECTED_COUNT: f64 = 10.0;
/// Monte Carlo work is cut into this many seeded streams, independent of the
/// thread count, so results do not depend on scheduling.
const MC_STREAMS: u64 = 64;

/// Exact law of `X^{(n)}_t` by enumerating every `(z_1, ..., z_n)` in
/// `{0..z_cap}^n`. Heights come from the tail sums (`z_k + ... + z_n - k >= t`
/// iff the path is still at or above `k` at time `t`), masses from the
/// product of geometric weights over the common denominator `b^D` for
/// `x = a/b`. The unswept mass is reported exactly as the tail bound.
pub fn oracle_corank_pmf(x: &Rational, n: u64, t: i64, z_cap: u64, budget: u64) -> Result<Pmf<Rational>> {
    crate::qseries::check_unit_interval(x)?;
    let nodes = (z_cap as u128 + 1)
        .checked_pow(n as u32)
        .and_then(|v| v.checked_mul(n.max(1) as u128))
        .unwrap_or(u128::MAX);
    if nodes > budget as u128 {
        return Err(Error::Resource {
            what: "oracle enumeration",
            required: nodes,
            cap: budget as u128,
        });
    }
    let a = x.numer().magnitude().clone();
    let b = x.denom().magnitude().clone();
    // weights[i][z] = a^{iz} b^{i(cap - z)} (b^i - a^i), numerator over b^{i(cap+1)}
    let weights: Vec<Vec<BigUint>> = (1..=n as u32)
        .map(|i| {
            let (ai, bi) = (a.pow(i), b.pow(i));
            let diff = &bi - &ai;
            (0..=z_cap as u32)
                .map(|z| ai.pow(z) * bi.pow(z_cap as u32 - z) * &diff)
                .collect()
        })
        .collect();
    let above = (-t - n as i64).max(0) as usize;
    let mut buckets = vec![BigUint::zero(); n as usize + above + 1];
    oracle_walk(&weights, n as usize, 0, t, BigUint::one(), 0, above, &mut buckets);
    let denom = BigInt::from(b.pow((z_cap as u32 + 1) * (n * (n + 1) / 2) as u32));
    let probs: Vec<Rational> = buckets
        .into_iter()
        .map(|c| Rational::new(BigInt::from(c), denom.clone()))
        .collect();
    let total = probs.iter().cloned().fold(<Rational as Scalar>::zero(), |s, p| s + p);
    Ok(Pmf {
        probs,
        tail_mass_hi: <Rational as Scalar>::one() - total,
        excess_hi: <Rational as Scalar>::zero(),
    })
}

/// Depth-first over coordinates `i = n, n-1, ..., 1`, carrying the tail sum
/// `z_i + ... + z_n`, the number of surviving heights and the weight product.
#[allow(clippy::too_many_arguments)]
fn oracle_walk(
    weights: &[Vec<BigUint>],
    i: usize,
    tail: u64,
    t: i64,
    weight: BigUint,
    alive: usize,
    above: usize,
    buckets: &mut [BigUint],
) {
    if i == 0 {
        buckets[alive + above] += weight;
        return;
    }
    for (z, w) in weights[i - 1].iter().enumerate() {
        let tail_i = tail + z as u64;
        let survives = tail_i as i64 - i as i64 >= t;
        oracle_walk(
            weights,
            i - 1,
            tail_i,
            t,
            &weight * w,
            alive + survives as usize,
            above,
            buckets,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    McCorank,
    McHitting,
    McMatrix,
    OraclePmf,
    OracleTv,
    IdentitySweep,
}

/// One experiment, as read from JSON:
///
/// ```json
/// {"kind": "mc-matrix", "params": {"q": 2, "n": 6, "m": 0}, "samples": 1000000, "seed": 1}
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub params: BTreeMap<String, Value>,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

fn default_samples() -> u64 {
    1
}

fn default_tol() -> f64 {
    1e-9
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            params: BTreeMap::new(),
            samples: default_samples(),
            seed: 0,
            tol: default_tol(),
            sigma: default_sigma(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn samples(mut self, samples: u64) -> Self {
        self.samples = samples;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn text(&self, key: &str, default: Option<&str>) -> Result<String> {
        match self.params.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(v)) => Ok(v.to_string()),
            Some(other) => Err(Error::Parse(format!("parameter {key}: unexpected {other}"))),
            None => default
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("missing parameter {key}"))),
        }
    }

    fn int(&self, key: &str, default: Option<i64>) -> Result<i64> {
        match self.params.get(key) {
            Some(v) => v
                .as_i64()
                .ok_or_else(|| Error::Parse(format!("parameter {key} must be an integer"))),
            None => default.ok_or_else(|| Error::Parse(format!("missing parameter {key}"))),
        }
    }

    fn uint(&self, key: &str, default: Option<u64>) -> Result<u64> {
        let v = self.int(key, default.map(|d| d as i64))?;
        u64::try_from(v).map_err(|_| Error::Parse(format!("parameter {key} must be >= 0")))
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return domain("samples must be at least 1");
        }
        if !(self.tol > 0.0) {
            return domain(format!("tol {} must be positive", self.tol));
        }
        Ok(())
    }
}

/// Observed against expected for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonReport {
    pub kind: ExperimentKind,
    pub label: String,
    pub expected: Vec<String>,
    pub observed: Vec<String>,
    pub max_abs_dev: f64,
    /// Largest per-bin deviation in binomial standard deviations.
    pub max_sigma_dev: Option<f64>,
    pub threshold: f64,
    pub bins: usize,
    pub samples: u64,
    pub seed: u64,
    pub note: Option<String>,
    pub pass: bool,
}

/// Per-bin sigma comparison of `counts` against `expected` probabilities.
/// Mass outside `expected` (its deficit, and observations past its end) forms
/// an overflow bin; upper bins are pooled until the expected count is at
/// least 10.
fn compare_counts(expected: &[f64], counts: &[u64], samples: u64) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let total_expected: f64 = expected.iter().sum();
    let mut exp: Vec<f64> = expected.to_vec();
    exp.push((1.0 - total_expected).max(0.0));
    let mut obs = vec![0u64; exp.len()];
    for (k, &c) in counts.iter().enumerate() {
        obs[k.min(exp.len() - 1)] += c;
    }
    let n = samples as f64;
    while exp.len() > 1 && exp[exp.len() - 1] * n < MIN_EXPECTED_COUNT {
        let (e, o) = (exp.pop().unwrap(), obs.pop().unwrap());
        *exp.last_mut().unwrap() += e;
        *obs.last_mut().unwrap() += o;
    }
    let mut max_abs: f64 = 0.0;
    let mut max_sigma: f64 = 0.0;
    for (&p, &c) in exp.iter().zip(&obs) {
        let freq = c as f64 / n;
        max_abs = max_abs.max((freq - p).abs());
        let sd = (n * p * (1.0 - p)).sqrt();
        let dev = if sd > 0.0 {
            (c as f64 - n * p).abs() / sd
        } else if c as f64 == n * p {
            0.0
        } else {
            f64::INFINITY
        };
        max_sigma = max_sigma.max(dev);
    }
    let observed = obs.iter().map(|&c| c as f64 / n).collect();
    (exp, observed, max_abs, max_sigma)
}

/// Runs `draw` `samples` times over fixed seeded streams and tallies results.
fn parallel_counts<F>(samples: u64, seed: u64, draw: F) -> Vec<u64>
where
    F: Fn(&mut SimRng) -> usize + Sync,
{
    (0..MC_STREAMS)
        .into_par_iter()
        .map(|stream| {
            let share = samples / MC_STREAMS + u64::from(stream < samples % MC_STREAMS);
            let mut rng = seeded_rng(seed, stream);
            let mut counts = Vec::new();
            for _ in 0..share {
                let v = draw(&mut rng);
                if v >= counts.len() {
                    counts.resize(v + 1, 0);
                }
                counts[v] += 1;
            }
            counts
        })
        .reduce(Vec::new, |mut a, b| {
            if b.len() > a.len() {
                a.resize(b.len(), 0);
            }
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
}

fn mc_report(spec: &ExperimentSpec, label: String, expected: &[f64], counts: &[u64]) -> ComparisonReport {
    let (exp, obs, max_abs, max_sigma) = compare_counts(expected, counts, spec.samples);
    let bins = exp.len();
    ComparisonReport {
        kind: spec.kind,
        label,
        expected: exp.iter().map(|v| v.to_string()).collect(),
        observed: obs.iter().map(|v| v.to_string()).collect(),
        max_abs_dev: max_abs,
        max_sigma_dev: Some(max_sigma),
        threshold: spec.sigma,
        bins,
        samples: spec.samples,
        seed: spec.seed,
        note: (bins > 25).then(|| {
            format!("{bins} bins compared at {} sigma each; expect occasional single-bin excursions", spec.sigma)
        }),
        pass: max_sigma <= spec.sigma,
    }
}

fn exact_report(spec: &ExperimentSpec, label: String, expected: Vec<String>, observed: Vec<String>, max_abs: f64, pass: bool) -> ComparisonReport {
    ComparisonReport {
        kind: spec.kind,
        label,
        bins: expected.len(),
        expected,
        observed,
        max_abs_dev: max_abs,
        max_sigma_dev: None,
        threshold: spec.tol,
        samples: spec.samples,
        seed: spec.seed,
        note: None,
        pass,
    }
}

fn to_f64s<S: Scalar>(p: &Pmf<S>) -> Vec<f64> {
    p.probs.iter().map(Scalar::to_f64).collect()
}

/// Runs one experiment. Deterministic given the spec; statistical failures
/// are reported in the result, never raised.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::McCorank => {
            let xs = spec.text("x", None)?;
            let x = Approx::parse(&xs)?;
            let n = spec.uint("n", None)?;
            let t = spec.int("t", Some(0))?;
            let expected = corank_pmf(&x, Cutoff::Finite(n), t, None, 1e-12)?;
            crate::qseries::check_unit_interval(&x)?;
            let counts = parallel_counts(spec.samples, spec.seed, |rng| {
                let z = sample_delays(&x, Cutoff::Finite(n), rng).expect("x validated");
                height_at(&z, t) as usize
            });
            Ok(mc_report(spec, format!("height at t = {t}, x = {xs}, n = {n}"), &to_f64s(&expected), &counts))
        }
        ExperimentKind::McHitting => {
            let xs = spec.text("x", None)?;
            let x = Approx::parse(&xs)?;
            crate::qseries::check_unit_interval(&x)?;
            let n_text = spec.text("n", None)?;
            let method = spec.text("method", Some("chain"))?;
            let cutoff = if n_text == "inf" {
                Cutoff::Infinite
            } else {
                Cutoff::Finite(n_text.parse().map_err(|_| Error::Parse(format!("bad n {n_text}")))?)
            };
            let expected = pmf_partial_sum(&x, 1, cutoff, None, 1e-12)?;
            let xf = x.value();
            let counts = match (method.as_str(), cutoff) {
                ("chain", Cutoff::Finite(n)) => parallel_counts(spec.samples, spec.seed, |rng| {
                    chain_hitting_time(n, xf, rng) as usize
                }),
                ("delays", _) => parallel_counts(spec.samples, spec.seed, |rng| {
                    sample_delays(&x, cutoff, rng).expect("x validated").total() as usize
                }),
                _ => return Err(Error::Parse(format!("method {method} needs a finite n or is unknown"))),
            };
            Ok(mc_report(spec, format!("hitting time ({method}), x = {xs}, n = {n_text}"), &to_f64s(&expected), &counts))
        }
        ExperimentKind::McMatrix => {
            let q = spec.uint("q", None)? as u32;
            let n = spec.uint("n", None)?;
            let m = spec.int("m", Some(0))?;
            if n as i64 + m < 0 {
                return domain(format!("need n + m >= 0, got n = {n}, m = {m}"));
            }
            let cols = (n as i64 + m) as usize;
            let method = spec.text("method", Some("sample"))?;
            let field = Arc::new(FqField::new(q)?);
            let x = Rational::from_ratio(1, q as i64);
            let expected = corank_pmf(&x, Cutoff::Finite(n), m, None, 1e-12)?;
            let counts = match method.as_str() {
                "sample" => parallel_counts(spec.samples, spec.seed, |rng| {
                    n as usize - sample_matrix(&field, n as usize, cols, rng).rank()
                }),
                "span" => parallel_counts(spec.samples, spec.seed, |rng| {
                    corank_span_process(&field, n as usize, cols, rng)[cols] as usize
                }),
                _ => return Err(Error::Parse(format!("unknown method {method}"))),
            };
            Ok(mc_report(spec, format!("corank of {n}x{cols} over F_{q} ({method})"), &to_f64s(&expected), &counts))
        }
        ExperimentKind::OraclePmf => {
            let xs = spec.text("x", None)?;
            let x = Rational::parse(&xs)?;
            let n = spec.uint("n", None)?;
            let t = spec.int("t", Some(0))?;
            let z_cap = spec.uint("zCap", Some(40))?;
            let budget = spec.uint("budget", Some(DEFAULT_ORACLE_BUDGET))?;
            let closed = corank_pmf(&x, Cutoff::Finite(n), t, None, 1e-12)?;
            let oracle = oracle_corank_pmf(&x, n, t, z_cap, budget)?;
            let (max_abs, within) = pmf_gap(&closed, &oracle);
            let pass = within && max_abs <= spec.tol;
            Ok(exact_report(
                spec,
                format!("oracle vs product form, x = {xs}, n = {n}, t = {t}, zCap = {z_cap}"),
                closed.probs.iter().map(|p| p.to_string()).collect(),
                oracle.probs.iter().map(|p| p.to_string()).collect(),
                max_abs,
                pass,
            ))
        }
        ExperimentKind::OracleTv => {
            let xs = spec.text("x", None)?;
            if xs.contains('/') {
                oracle_tv(spec, &Rational::parse(&xs)?, &xs)
            } else {
                oracle_tv(spec, &Approx::parse(&xs)?, &xs)
            }
        }
        ExperimentKind::IdentitySweep => {
            let which = spec.text("identity", Some("all"))?;
            let xs: Vec<Rational> = match spec.params.get("xs") {
                Some(Value::Array(v)) => v
                    .iter()
                    .map(|e| Rational::parse(e.as_str().unwrap_or_default()))
                    .collect::<Result<_>>()?,
                _ => ["1/2", "1/3", "3/7"].iter().map(|s| Rational::parse(s)).collect::<Result<_>>()?,
            };
            let out = identity_sweep(&which, &xs)?;
            let pass = out.violations.is_empty();
            Ok(exact_report(
                spec,
                format!("identity sweep: {which} ({} checks)", out.checks),
                vec!["0".into()],
                vec![out.max_abs_dev.to_string()],
                out.max_abs_dev,
                pass,
            ))
        }
    }
}

/// Largest `|closed_k - oracle_k|`, and whether every entry gap is consistent
/// with the oracle's unswept mass (the oracle can only undercount).
fn pmf_gap(closed: &Pmf<Rational>, oracle: &Pmf<Rational>) -> (f64, bool) {
    let len = closed.len().max(oracle.len());
    let mut total = <Rational as Scalar>::zero();
    let mut max_abs: f64 = 0.0;
    let mut nonneg = true;
    for k in 0..len {
        let d = closed.get(k) - oracle.get(k);
        nonneg &= d >= <Rational as Scalar>::zero();
        max_abs = max_abs.max(Scalar::to_f64(&d).abs());
        total += d;
    }
    (max_abs, nonneg && total <= oracle.tail_mass_hi)
}

fn oracle_tv<S: Scalar>(spec: &ExperimentSpec, x: &S, xs: &str) -> Result<ComparisonReport> {
    let n = spec.uint("n", None)?;
    let t = spec.int("t", Some(0))?;
    let target = spec.text("target", Some("corank"))?;
    let tol = spec.uint("truncation", Some(0)).map(|_| 1e-13)?;
    let rep = match target.as_str() {
        "corank" => tv_corank(x, n, t, tol)?,
        "hitting" => tv_hitting(x, n, tol)?,
        "process" => tv_process(x, n, tol)?,
        _ => return Err(Error::Parse(format!("unknown target {target}"))),
    };
    let (Some(exact), Some(direct)) = (rep.exact.clone(), rep.direct_sum.clone()) else {
        return Err(Error::Domain(format!(
            "no closed form for {target} at x = {xs}; only bounds and the direct sum exist"
        )));
    };
    let gap = (exact.clone() - direct.clone()).abs().to_f64();
    Ok(exact_report(
        spec,
        format!("closed form vs direct sum: {target}, x = {xs}, n = {n}, t = {t}"),
        vec![exact.to_string()],
        vec![direct.to_string()],
        gap,
        rep.direct_sum_agrees(spec.tol),
    ))
}

/// Outcome of an exact identity sweep.
#[derive(Debug, Clone, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityOutcome {
    pub checks: u64,
    pub max_abs_dev: f64,
    pub violations: Vec<String>,
}

impl IdentityOutcome {
    fn check(&mut self, lhs: &Rational, rhs: &Rational, what: impl FnOnce() -> String) {
        self.checks += 1;
        if lhs != rhs {
            self.max_abs_dev = self.max_abs_dev.max(Scalar::to_f64(&(lhs - rhs)).abs());
            self.violations.push(what());
        }
    }

    fn merge(&mut self, other: IdentityOutcome) {
        self.checks += other.checks;
        self.max_abs_dev = self.max_abs_dev.max(other.max_abs_dev);
        self.violations.extend(other.violations);
    }
}

/// `P(Z_m + ... + Z_n = k)` straight from the product formula, no recurrence.
fn partial_sum_term(table: &FactorTable<Rational>, m: u64, n: u64, k: u64) -> Rational {
    table.x().powi(m * k)
        * table.range(n - m + 1, (n - m + k) as i64)
        * table.range(m, n as i64)
        / table.prefix(k)
}

/// Exact identities on the rational backend: `time-reversal`, `death`,
/// `k-zero`, `ratio`, `log-concavity`, or `all`.
pub fn identity_sweep(which: &str, xs: &[Rational]) -> Result<IdentityOutcome> {
    let all = which == "all";
    let known = ["all", "time-reversal", "death", "k-zero", "ratio", "log-concavity"];
    if !known.contains(&which) {
        return Err(Error::Parse(format!("unknown identity {which}; expected one of {known:?}")));
    }
    let mut out = IdentityOutcome::default();
    for x in xs {
        if all || which == "time-reversal" {
            out.merge(time_reversal(x)?);
        }
        if all || which == "death" {
            for n in 1..=8u64 {
                for t in -5..=5i64 {
                    if n as i64 + t < 0 {
                        continue;
                    }
                    let pmf = corank_pmf(x, Cutoff::Finite(n), t, None, 1e-12)?;
                    for k in 1..=n {
                        let lhs = pmf.get(k as usize) * (<Rational as Scalar>::one() - x.powi(k));
                        out.check(&lhs, &death_prob(x, n, t, k)?, || format!("death x={x} n={n} t={t} k={k}"));
                    }
                }
            }
        }
        if all || which == "k-zero" {
            for n in 0..=8u64 {
                for t in 0..=5i64 {
                    let pmf = corank_pmf(x, Cutoff::Finite(n), t, None, 1e-12)?;
                    let rhs = range_product(x, t as u64 + 1, n as i64 + t);
                    out.check(&pmf.get(0), &rhs, || format!("k-zero x={x} n={n} t={t}"));
                }
            }
        }
        if all || which == "ratio" || which == "log-concavity" {
            let table = FactorTable::new(x, 12 + 32);
            for n in 1..=12u64 {
                let terms: Vec<Rational> = (0..=32).map(|k| partial_sum_term(&table, 1, n, k)).collect();
                let law = pmf_partial_sum(x, 1, Cutoff::Finite(n), Some(32), 1e-12)?;
                for k in 0..=30u64 {
                    let ku = k as usize;
                    if all || which == "ratio" {
                        let lhs = &terms[ku + 1] / &terms[ku];
                        let rhs = x.clone() * (<Rational as Scalar>::one() - x.powi(n + k))
                            / (<Rational as Scalar>::one() - x.powi(k + 1));
                        out.check(&lhs, &rhs, || format!("ratio x={x} n={n} k={k}"));
                        out.check(&law.probs[ku], &terms[ku], || format!("recurrence x={x} n={n} k={k}"));
                    }
                    if all || which == "log-concavity" {
                        out.checks += 1;
                        let sq = &law.probs[ku + 1] * &law.probs[ku + 1];
                        let prod = &law.probs[ku] * &law.probs[ku + 2];
                        if sq < prod {
                            out.max_abs_dev = out.max_abs_dev.max(Scalar::to_f64(&(prod - sq)));
                            out.violations.push(format!("log-concavity x={x} n={n} k={k}"));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `P(X^{(n)}_t = k) = P(X^{(n+t)}_{-t} = t + k)` for `n <= 8`, `|t| <= 5`,
/// `k <= 8`, and the same for the untruncated process.
fn time_reversal(x: &Rational) -> Result<IdentityOutcome> {
    let mut out = IdentityOutcome::default();
    for t in -5..=5i64 {
        for n in 0..=8u64 {
            if n as i64 + t < 0 {
                continue;
            }
            let lhs = corank_pmf(x, Cutoff::Finite(n), t, None, 1e-12)?;
            let rhs = corank_pmf(x, Cutoff::Finite((n as i64 + t) as u64), -t, None, 1e-12)?;
            for k in 0..=8i64 {
                let r = if t + k >= 0 { rhs.get((t + k) as usize) } else { <Rational as Scalar>::zero() };
                out.check(&lhs.get(k as usize), &r, || format!("time-reversal x={x} n={n} t={t} k={k}"));
            }
        }
        let lhs = corank_pmf(x, Cutoff::Infinite, t, Some(8), 1e-12)?;
        let rhs = corank_pmf(x, Cutoff::Infinite, -t, Some(13), 1e-12)?;
        for k in 0..=8i64 {
            let r = if t + k >= 0 { rhs.get((t + k) as usize) } else { <Rational as Scalar>::zero() };
            out.check(&lhs.get(k as usize), &r, || format!("time-reversal x={x} n=inf t={t} k={k}"));
        }
    }
    Ok(out)
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub checks: u64,
    /// Every failing grid point.
    pub failures: Vec<String>,
    pub detail: String,
    pub elapsed_ms: u128,
}

impl CriterionResult {
    /// One summary line, `criterion  3 [tv-closed-forms] PASS ...`.
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {} ({} checks, {} failures, {} ms) {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.checks,
            self.failures.len(),
            self.elapsed_ms,
            self.detail
        )
    }
}

/// Suite names in criterion order.
pub const SUITES: [&str; 11] = [
    "counts",
    "oracle-pmf",
    "tv-closed-forms",
    "bound-sandwiches",
    "factor-two",
    "identities",
    "critical-points",
    "asymptotics",
    "monte-carlo",
    "rn-tail",
    "technical-lemma",
];

/// Runs the named suite (or `all`).
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<CriterionResult>> {
    if name == "all" {
        return (1..=SUITES.len() as u8).map(|id| run_criterion(id, seed)).collect();
    }
    let pos = SUITES
        .iter()
        .position(|s| *s == name)
        .ok_or_else(|| Error::Parse(format!("unknown suite {name}; expected all or one of {SUITES:?}")))?;
    Ok(vec![run_criterion(pos as u8 + 1, seed)?])
}

/// Tallies checks and failing points for one criterion.
#[derive(Default)]
struct Tally {
    checks: u64,
    failures: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }
}

pub fn run_criterion(id: u8, seed: u64) -> Result<CriterionResult> {
    let start = Instant::now();
    let (tally, detail) = match id {
        1 => criterion_counts()?,
        2 => criterion_oracle()?,
        3 => criterion_tv_closed()?,
        4 => criterion_sandwiches()?,
        5 => criterion_factor_two()?,
        6 => criterion_identities()?,
        7 => criterion_critical()?,
        8 => criterion_asymptotics()?,
        9 => criterion_monte_carlo(seed)?,
        10 => criterion_rn_tail()?,
        11 => criterion_technical()?,
        _ => return domain(format!("no criterion {id}")),
    };
    Ok(CriterionResult {
        id,
        name: SUITES[id as usize - 1],
        pass: tally.failures.is_empty(),
        checks: tally.checks,
        failures: tally.failures,
        detail,
        elapsed_ms: start.elapsed().as_millis(),
    })
}

fn criterion_counts() -> Result<(Tally, String)> {
    let shapes = [(2u32, 2usize, 2usize), (2, 2, 3), (2, 3, 3), (3, 2, 2), (3, 2, 3), (2, 4, 4), (4, 2, 2)];
    let mut tally = Tally::default();
    for (q, rows, cols) in shapes {
        let field = Arc::new(FqField::new(q)?);
        let counts = enumerate_rank_counts(&field, rows, cols, DEFAULT_ENUMERATION_CAP)?;
        let total = BigUint::from(q).pow((rows * cols) as u32);
        let law = corank_pmf(
            &Rational::from_ratio(1, q as i64),
            Cutoff::Finite(rows as u64),
            cols as i64 - rows as i64,
            None,
            1e-12,
        )?;
        tally.check(counts.iter().map(|&c| BigUint::from(c)).sum::<BigUint>() == total, || {
            format!("q={q} {rows}x{cols}: counts do not sum to q^(rc)")
        });
        for (r, &c) in counts.iter().enumerate() {
            let enumerated = BigUint::from(c);
            let formula = rank_count_exact(q as u64, rows as u64, cols as u64, r as u64)?;
            let scaled = law.get(rows - r) * Rational::from(BigInt::from(total.clone()));
            let from_law = scaled.is_integer().then(|| scaled.to_integer());
            tally.check(
                enumerated == formula && from_law == Some(BigInt::from(formula.clone())),
                || format!("q={q} {rows}x{cols} rank {r}: enumerated {enumerated}, formula {formula}, law {scaled}"),
            );
        }
    }
    Ok((tally, "enumeration = q-binomial count = q^(rc) * corank law, exactly".into()))
}

fn criterion_oracle() -> Result<(Tally, String)> {
    let mut grid = Vec::new();
    for x in ["1/2", "1/3", "2/5"] {
        for n in 1..=3u64 {
            for t in -2..=4i64 {
                grid.push((x, n, t));
            }
        }
    }
    let results: Vec<Result<(String, bool, f64)>> = grid
        .par_iter()
        .map(|&(xs, n, t)| {
            let x = Rational::parse(xs)?;
            let closed = corank_pmf(&x, Cutoff::Finite(n), t, None, 1e-12)?;
            let oracle = oracle_corank_pmf(&x, n, t, 40, DEFAULT_ORACLE_BUDGET)?;
            let (max_abs, within) = pmf_gap(&closed, &oracle);
            let tail = Scalar::to_f64(&oracle.tail_mass_hi);
            Ok((format!("x={xs} n={n} t={t}: max gap {max_abs:e}, tail {tail:e}"), within && tail < 1e-9, max_abs))
        })
        .collect();
    let mut tally = Tally::default();
    let mut worst: f64 = 0.0;
    for r in results {
        let (what, ok, gap) = r?;
        worst = worst.max(gap);
        tally.check(ok, || what);
    }
    Ok((tally, format!("zCap = 40, largest entry gap {worst:.3e}")))
}

fn criterion_tv_closed() -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    let mut skipped = 0;
    let mut worst: f64 = 0.0;
    for xs in ["1/5", "1/3", "1/2"] {
        let x = Approx::parse(xs)?;
        for n in 1..=8u64 {
            for t in -3..=5i64 {
                if n as i64 + t < 0 {
                    skipped += 1;
                    continue;
                }
                let rep = tv_corank(&x, n, t, 1e-14)?;
                if let (Some(e), Some(d)) = (&rep.exact, &rep.direct_sum) {
                    worst = worst.max((e.value() - d.value()).abs());
                }
                tally.check(rep.direct_sum_agrees(1e-10), || format!("corank x={xs} n={n} t={t}"));
            }
            let rep = tv_hitting(&x, n, 1e-14)?;
            tally.check(rep.direct_sum_agrees(1e-10), || format!("hitting x={xs} n={n}"));
        }
    }
    Ok((
        tally,
        format!("largest |closed - direct| {worst:.3e}; {skipped} points with n + t < 0 lie outside the closed form's range"),
    ))
}

fn criterion_sandwiches() -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    let mut grid = Vec::new();
    for k in 1..=9i64 {
        for n in 1..=30u64 {
            grid.push((k, n));
        }
    }
    let process: Vec<Result<(i64, u64, bool)>> = grid
        .par_iter()
        .map(|&(k, n)| {
            let x = Rational::from_ratio(k, 10);
            // relative truncation far below the second-order margin
            let tol = (k as f64 / 10.0).powi(2 * n as i32 + 6).max(1e-300);
            let rep = tv_process(&x, n, tol)?;
            Ok((k, n, rep.strict_sandwich_holds()))
        })
        .collect();
    for r in process {
        let (k, n, ok) = r?;
        tally.check(ok, || format!("process x=0.{k} n={n}"));
    }
    for q in [2u64, 3, 4, 5] {
        for n in 1..=10u64 {
            for m in -3..=3i64 {
                if n as i64 + m < 0 {
                    continue;
                }
                let row = fg_comparison(q, n, m, 1e-24)?;
                tally.check(row.holds, || format!("fg q={q} n={n} m={m}: exact {}", row.exact));
            }
        }
    }
    Ok((tally, "process TV on the exact backend, strict; FG bounds and both sharper upper bounds".into()))
}

/// The points `(x, t, n)` of the factor-2 grid where the lower bound fails.
fn criterion_factor_two() -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    let mut upper_failures = 0;
    for k in 1..=5i64 {
        let x = Rational::from_ratio(k, 10);
        let one_minus = <Rational as Scalar>::one() - x.clone();
        for t in 0..=5i64 {
            for n in 1..=20u64 {
                let closed = tv_corank_closed(&x, n, t, 1e-20)?.expect("x <= 1/2");
                let hi = closed.value.clone() + closed.slack.clone();
                let upper = x.powi(n + t as u64 + 1) / one_minus.clone();
                let lower = upper.clone() / Rational::from_i64(2);
                let up_ok = hi <= upper;
                upper_failures += u64::from(!up_ok);
                tally.check(lower <= closed.value && up_ok, || format!("x=0.{k} t={t} n={n}"));
            }
        }
    }
    let detail = if tally.failures.is_empty() {
        "factor-2 sandwich holds on the whole grid".to_string()
    } else {
        format!(
            "lower bound x^(n+t+1)/(2(1-x)) fails where prod(1-x^i) < 1/2 at t = 0; upper bound failures: {upper_failures}"
        )
    };
    Ok((tally, detail))
}

fn criterion_identities() -> Result<(Tally, String)> {
    let xs: Vec<Rational> = ["1/2", "1/3", "3/7"].iter().map(|s| Rational::parse(s)).collect::<Result<_>>()?;
    let out = identity_sweep("all", &xs)?;
    let mut tally = Tally {
        checks: out.checks,
        failures: out.violations,
    };
    if tally.checks == 0 {
        tally.failures.push("no checks ran".into());
    }
    Ok((tally, "time reversal, death identity, k = 0 product, ratio, log-concavity; exact".into()))
}

fn criterion_critical() -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    let expect = [(0u64, 0.5, 1e-15), (1, 0.618_033_988_7, 1e-9), (6907, 0.999_000_467_6, 1e-9), (6908, 0.999_000_593_9, 1e-9)];
    for (k, want, tol) in expect {
        let c = critical_x(k, 1e-15)?;
        tally.check((c.x - want).abs() <= tol, || format!("x_{k} = {} (want {want})", c.x));
    }
    for k in [1_000u64, 10_000] {
        let c = critical_x(k, 1e-15)?;
        let gap = (k as f64 - c.y * c.y.ln() + 0.5).abs();
        tally.check(gap < 0.01, || format!("k = {k}: |k - y log y + 1/2| = {gap}"));
    }
    Ok((tally, "bisection to 1e-15".into()))
}

fn criterion_asymptotics() -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    let mut ratios = Vec::new();
    let half = Approx::parse("1/2")?;
    for t in 0..=2i64 {
        let closed = tv_corank_closed(&half, 30, t, 1e-14)?.expect("x <= 1/2");
        let c_t = g_infinite(&half, t as u64 + 1, 1e-18)?.value;
        let lead = c_t * half.powi(31 + t as u64) / (Approx::one() - half);
        let ratio = closed.value.value() / lead.value();
        ratios.push(format!("{ratio:.6}"));
        tally.check((0.995..=1.005).contains(&ratio), || format!("corank x=1/2 n=30 t={t}: ratio {ratio}"));
    }
    let x = Approx::parse("0.7")?;
    let rep = tv_hitting(&x, 40, 1e-16)?;
    let direct = rep.direct_sum.expect("direct sum");
    let lead = rep.asymptotic.expect("asymptotic");
    let ratio = direct.value() / lead.value();
    ratios.push(format!("{ratio:.6}"));
    let certified = rep.slack.upper_f64() < 1e-3 * direct.value();
    tally.check((0.98..=1.02).contains(&ratio) && certified, || {
        format!("hitting x=0.7 n=40: ratio {ratio}, slack {}", rep.slack)
    });
    Ok((tally, format!("ratios {}", ratios.join(", "))))
}

fn criterion_monte_carlo(seed: u64) -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    let matrix = ExperimentSpec::new(ExperimentKind::McMatrix)
        .with("q", 2)
        .with("n", 6)
        .with("m", 0)
        .samples(1_000_000)
        .seed(seed);
    let hitting = ExperimentSpec::new(ExperimentKind::McHitting)
        .with("x", "0.5")
        .with("n", 6)
        .samples(1_000_000)
        .seed(seed.wrapping_add(1));
    let mut sigmas = Vec::new();
    for spec in [matrix, hitting] {
        let rep = run_experiment(&spec)?;
        let s = rep.max_sigma_dev.unwrap_or(f64::INFINITY);
        sigmas.push(format!("{s:.2}"));
        tally.check(rep.pass, || format!("{}: max {s:.2} sigma over {} bins", rep.label, rep.bins));
    }
    Ok((tally, format!("seed {seed}; max sigma deviations {}", sigmas.join(", "))))
}

fn criterion_rn_tail() -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    for xs in ["0.3", "0.5", "0.7", "0.9"] {
        let x = Approx::parse(xs)?;
        for n in 1..=20u64 {
            let c = rn_tail_bound_check(&x, n)?;
            tally.check(c.proof_bound_holds && c.stated_bound_holds, || {
                format!("x={xs} n={n}: P(R_n > 1) <= {} vs {} / {}", c.exact_hi, c.proof_bound, c.stated_bound)
            });
        }
    }
    Ok((tally, "both the x^(2n+2) and x^(2n) constants".into()))
}

fn criterion_technical() -> Result<(Tally, String)> {
    let mut tally = Tally::default();
    let mut worst: f64 = 0.0;
    for xs in ["1/3", "1/2"] {
        for ys in ["1/3", "1/2"] {
            let (x, y) = (Rational::parse(xs)?, Rational::parse(ys)?);
            for n in 0..=4u64 {
                for m in 0..=n {
                    let gap = technical_identity_gap(&x, &y, m, n, 80)?.abs().to_f64();
                    worst = worst.max(gap);
                    tally.check(gap < 1e-14, || format!("x={xs} y={ys} m={m} n={n}: gap {gap:e}"));
                }
            }
        }
    }
    Ok((tally, format!("K = 80, largest gap {worst:.3e}")))
}
