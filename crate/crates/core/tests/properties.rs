use std::sync::Arc;

use countdown_core::countdown::{
    death_time, height_at, hitting_time, phi, phi_inverse, sample_delays, seeded_rng, Cutoff,
    DelaySequence,
};
use countdown_core::distributions::{corank_pmf, hitting_time_pmf, Pmf};
use countdown_core::fieldmat::{rank_count_exact, sample_matrix, FqField, FqMatrix};
use countdown_core::qseries::{g_finite, q_binomial};
use countdown_core::tvmetrics::{tv_from_pmfs, tv_unimodal_shift};
use countdown_core::{Approx, Rational, Scalar};
use num_bigint::BigUint;
use proptest::prelude::*;

fn rational() -> impl Strategy<Value = Rational> {
    (1i64..12, 2i64..13)
        .prop_filter("proper fraction", |(p, q)| p < q)
        .prop_map(|(p, q)| Rational::from_ratio(p, q))
}

fn delays() -> impl Strategy<Value = DelaySequence> {
    prop::collection::vec(0u64..5, 0..8).prop_map(|v| DelaySequence::from_dense(&v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_round_trips(z in delays()) {
        let top = z.max_support() as i64;
        let traj = phi(&z, (-top - 1, hitting_time(&z) as i64 + 1));
        prop_assert_eq!(phi_inverse(&traj).unwrap(), z.clone());
        for k in 1..=top.max(1) as u64 {
            let d = death_time(&z, k).unwrap();
            prop_assert_eq!(height_at(&z, d), k);
            prop_assert_eq!(height_at(&z, d + 1), k - 1);
        }
    }

    #[test]
    fn path_steps_are_zero_or_minus_one(z in delays(), lo in -12i64..0, len in 1i64..30) {
        let traj = phi(&z, (lo, lo + len));
        for w in traj.heights.windows(2) {
            prop_assert!(w[0] == w[1] || w[0] == w[1] + 1);
        }
        let top = z.max_support() as i64;
        for (t, h) in traj.points() {
            if t <= -top {
                prop_assert_eq!(h as i64, -t);
            }
        }
    }

    #[test]
    fn q_binomial_is_symmetric(n in 0u64..12, k in 0i64..12, q in 2u64..6) {
        prop_assume!(k as u64 <= n);
        prop_assert_eq!(q_binomial(n, k, q).unwrap(), q_binomial(n, n as i64 - k, q).unwrap());
        prop_assert_eq!(q_binomial(n, n as i64 + 1, q).unwrap(), BigUint::from(0u32));
    }

    #[test]
    fn rank_counts_sum_to_all_matrices(q in prop::sample::select(vec![2u64, 3, 4, 5]), n in 1u64..5, c in 1u64..5) {
        let total: BigUint = (0..=n.min(c)).map(|r| rank_count_exact(q, n, c, r).unwrap()).sum();
        prop_assert_eq!(total, BigUint::from(q).pow((n * c) as u32));
    }

    #[test]
    fn finite_corank_law_is_exactly_normalized(x in rational(), n in 1u64..7, t in -4i64..5) {
        let p = corank_pmf(&x, Cutoff::Finite(n), t, None, 1e-12).unwrap();
        prop_assert_eq!(p.total(), <Rational as Scalar>::one());
        prop_assert!(p.probs.iter().all(|v| *v >= <Rational as Scalar>::zero()));
    }

    #[test]
    fn infinite_corank_mass_is_certified(p in 1i64..5, q in 3i64..7, t in -3i64..4) {
        prop_assume!(3 * p <= 2 * q);
        let x = Rational::from_ratio(p, q);
        let law = corank_pmf(&x, Cutoff::Infinite, t, None, 1e-8).unwrap();
        let total = law.total();
        let one = <Rational as Scalar>::one();
        prop_assert!(total.clone() <= one.clone() + law.excess_hi.clone());
        prop_assert!(total + law.l1_slack() >= one);
    }

    #[test]
    fn infinite_corank_mass_is_certified_in_floats(p in 1i64..99, t in -3i64..4) {
        let law = corank_pmf(&Approx::from_ratio(p, 100), Cutoff::Infinite, t, None, 1e-10).unwrap();
        let total = law.total();
        prop_assert!(total.lower_f64() <= 1.0 + law.excess_hi.upper_f64());
        prop_assert!(total.upper_f64() + law.l1_slack().upper_f64() >= 1.0);
    }

    #[test]
    fn k_zero_mass_is_a_finite_product(x in rational(), n in 0u64..7, t in 0i64..5) {
        let p = corank_pmf(&x, Cutoff::Finite(n), t, None, 1e-12).unwrap();
        prop_assert_eq!(p.get(0), g_finite(&x, t as u64 + 1, n as i64 + t).unwrap());
    }

    #[test]
    fn tv_is_a_bounded_metric(x in rational(), y in rational(), n in 1u64..4) {
        let p = hitting_time_pmf(&x, Cutoff::Finite(n), None, 1e-12).unwrap();
        let r = hitting_time_pmf(&y, Cutoff::Finite(n), None, 1e-12).unwrap();
        let a = tv_from_pmfs(&p, &r);
        let b = tv_from_pmfs(&r, &p);
        prop_assert_eq!(a.value.clone(), b.value);
        prop_assert!(a.value >= <Rational as Scalar>::zero() && a.value <= <Rational as Scalar>::one());
        prop_assert_eq!(tv_from_pmfs(&p, &p).value, <Rational as Scalar>::zero());
    }

    #[test]
    fn unimodal_shift_matches_direct_tv(x in rational(), n in 1u64..6) {
        let p = hitting_time_pmf(&x, Cutoff::Finite(n), None, 1e-12).unwrap();
        let direct = tv_from_pmfs(&p, &p.shifted(1));
        let via_mode = tv_unimodal_shift(&p).unwrap();
        prop_assert_eq!(direct.value, via_mode.value);
    }

    #[test]
    fn rank_is_transpose_invariant(q in prop::sample::select(vec![2u32, 3, 4, 9]), r in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
        let field = Arc::new(FqField::new(q).unwrap());
        let m = sample_matrix(&field, r, c, &mut seeded_rng(seed, 0));
        prop_assert_eq!(m.rank(), m.transpose().rank());
        prop_assert!(m.rank() <= r.min(c));
        prop_assert_eq!(FqMatrix::identity(&field, r).rank(), r);
    }

    #[test]
    fn field_axioms_hold(q in prop::sample::select(vec![2u32, 4, 5, 8, 9, 16, 25, 27]), a in 0u8..27, b in 0u8..27) {
        let f = FqField::new(q).unwrap();
        let (a, b) = (a % q as u8, b % q as u8);
        prop_assert_eq!(f.add(a, b), f.add(b, a));
        prop_assert_eq!(f.mul(a, b), f.mul(b, a));
        prop_assert_eq!(f.sub(f.add(a, b), b), a);
        prop_assert_eq!(f.add(a, f.neg(a)), 0);
        match f.inv(a) {
            Some(i) => prop_assert_eq!(f.mul(a, i), 1),
            None => prop_assert_eq!(a, 0),
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed(seed in any::<u64>(), n in 1u64..10) {
        let x = Approx::from_ratio(1, 2);
        let a = sample_delays(&x, Cutoff::Finite(n), &mut seeded_rng(seed, 3)).unwrap();
        let b = sample_delays(&x, Cutoff::Finite(n), &mut seeded_rng(seed, 3)).unwrap();
        prop_assert_eq!(a.clone(), b);
        prop_assert!(a.max_support() <= n);
    }

    #[test]
    fn float_backend_tracks_exact(p in 1i64..10, n in 1u64..6, t in -3i64..4) {
        let exact = corank_pmf(&Rational::from_ratio(p, 10), Cutoff::Finite(n), t, None, 1e-12).unwrap();
        let approx: Pmf<Approx> = corank_pmf(&Approx::from_ratio(p, 10), Cutoff::Finite(n), t, None, 1e-12).unwrap();
        prop_assert_eq!(exact.len(), approx.len());
        for (e, a) in exact.probs.iter().zip(&approx.probs) {
            let e = Scalar::to_f64(e);
            prop_assert!(a.lower_f64() <= e && e <= a.upper_f64(), "{} outside {:?}", e, a);
        }
    }
}
