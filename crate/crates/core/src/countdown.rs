//! The countdown map from delay sequences to paths, and the pure-death chain
//! it induces under geometric delays.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::qseries::{check_unit_interval, Scalar};

/// The reproducible generator used by every sampling routine.
pub type SimRng = ChaCha8Rng;

/// Generator for worker `stream` of a run seeded with `seed`. Distinct streams
/// are independent; the same `(seed, stream)` always yields the same draws.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A finitely supported sequence `(z_1, z_2, ...)` of nonnegative integers.
///
/// Stored sparsely: only nonzero entries are kept, so a single delay at a
/// very large index costs one map entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DelaySequence {
    entries: BTreeMap<u64, u64>,
}

impl DelaySequence {
    pub fn zero() -> Self {
        Self::default()
    }

    /// `delays[0]` is `z_1`.
    pub fn from_dense(delays: &[u64]) -> Self {
        let mut z = Self::zero();
        for (i, &v) in delays.iter().enumerate() {
            z.set(i as u64 + 1, v);
        }
        z
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut z = Self::zero();
        for (i, v) in pairs {
            if i == 0 {
                return domain("delay indices start at 1");
            }
            z.set(i, z.get(i) + v);
        }
        Ok(z)
    }

    pub fn get(&self, i: u64) -> u64 {
        self.entries.get(&i).copied().unwrap_or(0)
    }

    pub fn set(&mut self, i: u64, v: u64) {
        assert!(i >= 1, "delay indices start at 1");
        if v == 0 {
            self.entries.remove(&i);
        } else {
            self.entries.insert(i, v);
        }
    }

    /// Largest index with a nonzero delay, or 0 for the zero sequence.
    pub fn max_support(&self) -> u64 {
        self.entries.keys().next_back().copied().unwrap_or(0)
    }

    /// Nonzero entries in increasing index order.
    pub fn nonzero(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.entries.iter().map(|(&i, &v)| (i, v))
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// `z_k + z_{k+1} + ...`.
    pub fn tail_sum(&self, k: u64) -> u64 {
        self.entries.range(k..).map(|(_, &v)| v).sum()
    }

    /// `(z_1, ..., z_len)`.
    pub fn to_dense(&self, len: u64) -> Vec<u64> {
        (1..=len).map(|i| self.get(i)).collect()
    }

    /// Blocks `(lo, hi, T)`: for heights `k` in `(lo, hi]` the tail sum
    /// `z_k + z_{k+1} + ...` equals `T`.
    fn blocks(&self) -> Vec<(i64, i64, i64)> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut tail: i64 = self.total() as i64;
        let mut lo = 0i64;
        for (&i, &v) in &self.entries {
            out.push((lo, i as i64, tail));
            tail -= v as i64;
            lo = i as i64;
        }
        out
    }
}

impl fmt::Display for DelaySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dense = self.to_dense(self.max_support());
        let parts: Vec<String> = dense.iter().map(u64::to_string).collect();
        write!(f, "({},0,...)", parts.join(","))
    }
}

impl Serialize for DelaySequence {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<(u64, u64)> = self.nonzero().collect();
        let mut st = ser.serialize_struct("DelaySequence", 2)?;
        st.serialize_field("maxSupport", &self.max_support())?;
        st.serialize_field("nonzero", &pairs)?;
        st.end()
    }
}

/// A path restricted to the window `[t_min, t_min + heights.len() - 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub t_min: i64,
    pub heights: Vec<u64>,
}

impl Trajectory {
    pub fn t_max(&self) -> i64 {
        self.t_min + self.heights.len() as i64 - 1
    }

    pub fn height_at(&self, t: i64) -> Option<u64> {
        let idx = t.checked_sub(self.t_min)?;
        usize::try_from(idx).ok().and_then(|i| self.heights.get(i).copied())
    }

    pub fn points(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.heights
            .iter()
            .enumerate()
            .map(move |(i, &h)| (self.t_min + i as i64, h))
    }

    /// CSV with header `t,x`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x\n");
        for (t, x) in self.points() {
            s.push_str(&format!("{t},{x}\n"));
        }
        s
    }
}

impl Serialize for Trajectory {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let points: Vec<(i64, u64)> = self.points().collect();
        let mut st = ser.serialize_struct("Trajectory", 2)?;
        st.serialize_field("tMin", &self.t_min)?;
        st.serialize_field("points", &points)?;
        st.end()
    }
}

/// Height at time `t` of the countdown path driven by `z`.
///
/// The path drops from `k` to `k - 1` right after time `T_k - k`, where
/// `T_k = z_k + z_{k+1} + ...`, so the height is the number of `k >= 1`
/// whose drop time is at or after `t`.
pub fn height_at(z: &DelaySequence, t: i64) -> u64 {
    height_from_blocks(&z.blocks(), z.max_support() as i64, t)
}

fn height_from_blocks(blocks: &[(i64, i64, i64)], top: i64, t: i64) -> u64 {
    let mut h = 0i64;
    for &(lo, hi, tail) in blocks {
        h += (hi.min(tail - t) - lo).max(0);
    }
    // heights above the support sit on the diagonal
    h += (-t - top).max(0);
    h as u64
}

/// The countdown path `phi(z)` on the inclusive window `(t_min, t_max)`.
/// An inverted window yields an empty trajectory.
pub fn phi(z: &DelaySequence, window: (i64, i64)) -> Trajectory {
    let (t_min, t_max) = window;
    let blocks = z.blocks();
    let top = z.max_support() as i64;
    let heights = if t_max < t_min {
        Vec::new()
    } else {
        (t_min..=t_max)
            .map(|t| height_from_blocks(&blocks, top, t))
            .collect()
    };
    Trajectory { t_min, heights }
}

/// Recovers the delays from a trajectory that starts on the diagonal
/// (`x_{t_min} = -t_min`) and ends at height 0.
pub fn phi_inverse(traj: &Trajectory) -> Result<DelaySequence> {
    let (&first, &last) = match (traj.heights.first(), traj.heights.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::MalformedTrajectory("empty window".into())),
    };
    if first as i64 != -traj.t_min {
        return Err(Error::MalformedTrajectory(format!(
            "height {first} at t = {} is not on the diagonal x = -t",
            traj.t_min
        )));
    }
    if last != 0 {
        return Err(Error::MalformedTrajectory(format!(
            "final height {last} is not 0; window does not reach the hitting time"
        )));
    }
    for (t, w) in traj.points().zip(traj.heights.iter().skip(1)) {
        let (t, h) = t;
        if !(h == *w || h == *w + 1) {
            return Err(Error::MalformedTrajectory(format!(
                "step from height {h} at t = {t} to {w} is not a drop of 0 or 1"
            )));
        }
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for &h in &traj.heights {
        if h > 0 {
            *counts.entry(h).or_insert(0) += 1;
        }
    }
    DelaySequence::from_pairs(counts.into_iter().map(|(i, c)| (i, c - 1)))
}

/// `min { t : x_t = 0 }`, which is `z_1 + z_2 + ...`.
pub fn hitting_time(z: &DelaySequence) -> u64 {
    z.total()
}

/// The unique `t` with `x_t = k` and `x_{t+1} = k - 1`.
pub fn death_time(z: &DelaySequence, k: u64) -> Result<i64> {
    if k == 0 {
        return domain("death heights start at 1");
    }
    Ok(z.tail_sum(k) as i64 - k as i64)
}

/// How many coordinates of the delay process are random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Cutoff {
    /// `Z^{(n)}`: coordinates above `n` are zero.
    Finite(u64),
    /// `Z`: every coordinate is geometric.
    Infinite,
}

/// One draw of `Z` with `P(Z >= k) = r^k`, where `ln_r = ln r`.
fn geometric<R: Rng + ?Sized>(ln_r: f64, rng: &mut R) -> u64 {
    // u in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    let z = (u.ln() / ln_r).floor();
    if z.is_finite() && z > 0.0 {
        z as u64
    } else {
        0
    }
}

/// `1 - prod_{i > level} (1 - x^i)` to double precision.
fn tail_nonzero_prob(x: f64, level: u64) -> f64 {
    let mut d = 0.0f64;
    let mut p = x.powf(level as f64 + 1.0);
    while p > 0.0 && p > d * 1e-18 {
        d += p * (1.0 - d);
        p *= x;
    }
    d
}

/// Independent geometric delays `P(Z_i >= k) = x^{ik}`.
///
/// With [`Cutoff::Infinite`] the sampler walks up the levels, deciding at
/// each level by one Bernoulli draw with probability
/// `1 - prod_{i > L}(1 - x^i)` whether any delay above `L` is nonzero, and
/// otherwise sampling the next coordinate conditionally on that event. No
/// truncation is involved.
pub fn sample_delays<S: Scalar, R: Rng + ?Sized>(
    x: &S,
    cutoff: Cutoff,
    rng: &mut R,
) -> Result<DelaySequence> {
    check_unit_interval(x)?;
    let xf = x.to_f64();
    let ln_x = xf.ln();
    let mut z = DelaySequence::zero();
    match cutoff {
        Cutoff::Finite(n) => {
            for i in 1..=n {
                let v = geometric(i as f64 * ln_x, rng);
                if v > 0 {
                    z.set(i, v);
                }
            }
        }
        Cutoff::Infinite => {
            let mut level = 0u64;
            let mut p_level = tail_nonzero_prob(xf, 0);
            if !rng.random_bool(p_level.clamp(0.0, 1.0)) {
                return Ok(z);
            }
            // invariant: some delay above `level` is known to be nonzero
            loop {
                let i = level + 1;
                let x_i = xf.powf(i as f64);
                let p_next = tail_nonzero_prob(xf, i);
                let p_zero = ((1.0 - x_i) * p_next / p_level).clamp(0.0, 1.0);
                if rng.random_bool(p_zero) {
                    level = i;
                    p_level = p_next;
                    continue;
                }
                // conditioned on Z_i >= 1: memoryless, 1 + fresh geometric
                z.set(i, 1 + geometric(i as f64 * ln_x, rng));
                if !rng.random_bool(p_next.clamp(0.0, 1.0)) {
                    return Ok(z);
                }
                level = i;
                p_level = p_next;
            }
        }
    }
    Ok(z)
}

/// A state of the pure-death chain: current height and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChainState {
    pub height: u64,
    pub time: i64,
}

/// One transition: stay at height `i` with probability `x^i`, else drop by one.
pub fn chain_step<R: Rng + ?Sized>(state: ChainState, x: f64, rng: &mut R) -> ChainState {
    let height = if state.height == 0 {
        0
    } else {
        let stay = x.powi(state.height.min(i32::MAX as u64) as i32);
        if rng.random::<f64>() < stay {
            state.height
        } else {
            state.height - 1
        }
    };
    ChainState {
        height,
        time: state.time + 1,
    }
}

/// Runs the chain from height `n` at time `-n` until it hits 0 and returns
/// the hitting time, distributed as `S_n`.
pub fn chain_hitting_time<R: Rng + ?Sized>(n: u64, x: f64, rng: &mut R) -> i64 {
    let mut s = ChainState {
        height: n,
        time: -(n as i64),
    };
    while s.height > 0 {
        s = chain_step(s, x, rng);
    }
    s.time
}

/// Heights of the chain from height `n` at times `-n, ..., -n + steps`.
pub fn chain_path<R: Rng + ?Sized>(n: u64, x: f64, steps: u64, rng: &mut R) -> Vec<u64> {
    let mut s = ChainState {
        height: n,
        time: -(n as i64),
    };
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(n);
    for _ in 0..steps {
        s = chain_step(s, x, rng);
        out.push(s.height);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qseries::{g_infinite, Approx};

    fn figure_one() -> DelaySequence {
        DelaySequence::from_dense(&[1, 3, 0, 2])
    }

    /// The 15 points of the first figure, read off its dot rows.
    fn figure_one_points() -> Vec<(i64, u64)> {
        let rows: [(i64, u64, i64); 7] = [
            (-6, 6, 0),
            (-5, 5, 0),
            (-4, 4, 2),
            (-1, 3, 0),
            (0, 2, 3),
            (4, 1, 1),
            (6, 0, 2),
        ];
        let mut pts = Vec::new();
        for (t0, h, extra) in rows {
            for d in 0..=extra {
                pts.push((t0 + d, h));
            }
        }
        pts
    }

    #[test]
    fn phi_reproduces_first_figure() {
        let traj = phi(&figure_one(), (-6, 8));
        let pts: Vec<_> = traj.points().collect();
        assert_eq!(pts.len(), 15);
        assert_eq!(pts, figure_one_points());
        assert_eq!(traj.height_at(3), Some(2));
        assert_eq!(traj.height_at(4), Some(1));
        assert!((6..=8).all(|t| traj.height_at(t) == Some(0)));
    }

    #[test]
    fn phi_of_zero_is_the_diagonal() {
        let traj = phi(&DelaySequence::zero(), (-10, 10));
        for (t, h) in traj.points() {
            assert_eq!(h as i64, (-t).max(0));
        }
    }

    #[test]
    fn large_index_delay_shifts_window_right() {
        let i0 = 1_000_000_000u64;
        let mut z = figure_one();
        z.set(i0, 1);
        let shifted = phi(&z, (-5, 9));
        let base = phi(&figure_one(), (-6, 8));
        assert_eq!(shifted.heights, base.heights);
        // the jump to the line x + t = 1 happens at height i0
        assert_eq!(height_at(&z, -(i0 as i64)), i0);
        assert_eq!(height_at(&z, -(i0 as i64) + 1), i0);
        assert_eq!(height_at(&z, -(i0 as i64) + 2), i0 - 1);
    }

    #[test]
    fn phi_inverse_examples() {
        let traj = phi(&figure_one(), (-6, 8));
        assert_eq!(phi_inverse(&traj).unwrap(), figure_one());
        let diag = phi(&DelaySequence::zero(), (-4, 3));
        assert_eq!(phi_inverse(&diag).unwrap(), DelaySequence::zero());
    }

    #[test]
    fn phi_inverse_rejects_malformed() {
        let bad_step = Trajectory {
            t_min: -2,
            heights: vec![2, 0, 0],
        };
        assert!(matches!(
            phi_inverse(&bad_step),
            Err(Error::MalformedTrajectory(_))
        ));
        let off_diagonal = Trajectory {
            t_min: -2,
            heights: vec![3, 2, 1, 0],
        };
        assert!(phi_inverse(&off_diagonal).is_err());
        let no_zero = Trajectory {
            t_min: -2,
            heights: vec![2, 1],
        };
        assert!(phi_inverse(&no_zero).is_err());
        let empty = Trajectory {
            t_min: 0,
            heights: vec![],
        };
        assert!(phi_inverse(&empty).is_err());
    }

    #[test]
    fn hitting_and_death_times() {
        let z = figure_one();
        assert_eq!(hitting_time(&z), 6);
        assert_eq!(hitting_time(&DelaySequence::zero()), 0);
        assert_eq!(death_time(&z, 2).unwrap(), 3);
        assert_eq!(death_time(&z, 1).unwrap(), 5);
        for k in 1..10 {
            assert_eq!(death_time(&DelaySequence::zero(), k).unwrap(), -(k as i64));
        }
        assert!(death_time(&z, 0).is_err());
    }

    #[test]
    fn trajectory_serialization() {
        let traj = phi(&DelaySequence::from_dense(&[1]), (-1, 2));
        let json = serde_json::to_string(&traj).unwrap();
        assert_eq!(json, r#"{"tMin":-1,"points":[[-1,1],[0,1],[1,0],[2,0]]}"#);
        assert_eq!(traj.to_csv(), "t,x\n-1,1\n0,1\n1,0\n2,0\n");
    }

    #[test]
    fn chain_zero_is_absorbing() {
        let mut rng = seeded_rng(1, 0);
        let mut s = ChainState { height: 0, time: 0 };
        for _ in 0..100 {
            s = chain_step(s, 0.9, &mut rng);
            assert_eq!(s.height, 0);
        }
        assert_eq!(s.time, 100);
    }

    #[test]
    fn chain_stay_frequency() {
        let mut rng = seeded_rng(7, 0);
        let (x, i, trials) = (0.6f64, 2u64, 1_000_000u32);
        let mut stays = 0u32;
        for _ in 0..trials {
            let s = chain_step(ChainState { height: i, time: 0 }, x, &mut rng);
            if s.height == i {
                stays += 1;
            }
        }
        let p = x.powi(2);
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((stays as f64 - trials as f64 * p).abs() < 4.0 * sd);
    }

    #[test]
    fn geometric_single_coordinate_pmf() {
        let x = Approx::exact(0.5);
        let mut rng = seeded_rng(11, 0);
        let trials = 1_000_000u32;
        let mut counts = [0u32; 12];
        for _ in 0..trials {
            let z = sample_delays(&x, Cutoff::Finite(1), &mut rng).unwrap();
            let v = z.get(1) as usize;
            if v < counts.len() {
                counts[v] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = 0.5f64.powi(k as i32 + 1);
            let sd = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (c as f64 - trials as f64 * p).abs() < 4.0 * sd,
                "k = {k}: {c} vs {}",
                trials as f64 * p
            );
        }
    }

    #[test]
    fn infinite_cutoff_all_zero_probability() {
        let x = Approx::exact(0.5);
        let g = g_infinite(&x, 1, 1e-12).unwrap().value.value();
        let mut rng = seeded_rng(3, 0);
        let trials = 400_000u32;
        let zeros = (0..trials)
            .filter(|_| sample_delays(&x, Cutoff::Infinite, &mut rng).unwrap().total() == 0)
            .count();
        let sd = (trials as f64 * g * (1.0 - g)).sqrt();
        assert!((zeros as f64 - trials as f64 * g).abs() < 4.0 * sd);
    }

    #[test]
    fn infinite_cutoff_marginal_of_high_coordinate() {
        // P(Z_3 >= 1) = x^3 must hold despite the level-by-level conditioning
        let x = Approx::exact(0.5);
        let mut rng = seeded_rng(5, 0);
        let trials = 400_000u32;
        let hits = (0..trials)
            .filter(|_| sample_delays(&x, Cutoff::Infinite, &mut rng).unwrap().get(3) >= 1)
            .count();
        let p = 0.125;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((hits as f64 - trials as f64 * p).abs() < 4.0 * sd);
    }

    #[test]
    fn tiny_x_gives_zero_delays() {
        let x = Approx::exact(1e-9);
        let mut rng = seeded_rng(9, 0);
        for _ in 0..1000 {
            assert_eq!(sample_delays(&x, Cutoff::Infinite, &mut rng).unwrap().total(), 0);
        }
    }

    #[test]
    fn sampling_rejects_bad_x() {
        let mut rng = seeded_rng(0, 0);
        assert!(sample_delays(&Approx::exact(1.0), Cutoff::Finite(3), &mut rng).is_err());
    }

    #[test]
    fn streams_are_reproducible() {
        let a: Vec<u64> = (0..5).map(|_| seeded_rng(42, 3).random()).collect();
        let b: Vec<u64> = (0..5).map(|_| seeded_rng(42, 3).random()).collect();
        assert_eq!(a, b);
        let c: u64 = seeded_rng(42, 4).random();
        assert_ne!(a[0], c);
    }
}
