//! Property tests over randomly generated small instances.

use msgcomp::coding::convex::{convex_split_tv_brute, convex_split_tv_exact};
use msgcomp::coding::lemma1::lemma1_check;
use msgcomp::dist::EventSet;
use msgcomp::experiments::{build_counterexample, counterexample_dist};
use msgcomp::gen::{random_dist, random_row, random_subset};
use msgcomp::info::{d_h, d_s, entropy, SpectrumQuery, M, N};
use msgcomp::numeric::{one, rat, to_f64, zero};
use msgcomp::protocol::sch_equivalence_check;
use msgcomp::{JointDist, Var};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pair(seed: u64, a: usize, b: usize) -> (JointDist, JointDist, JointDist) {
    let mut r = rng(seed);
    let vars = vec![Var::new("A", a), Var::new("B", b)];
    (
        random_dist(&mut r, vars.clone(), 5, 0.3),
        random_dist(&mut r, vars.clone(), 5, 0.3),
        random_dist(&mut r, vars, 5, 0.3),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_is_a_metric(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let (p, q, s) = pair(seed, a, b);
        let pq = p.tv_half(&q).unwrap();
        prop_assert_eq!(&pq, &q.tv_half(&p).unwrap());
        prop_assert!(pq >= zero() && pq <= one());
        prop_assert_eq!(p.tv_half(&p).unwrap(), zero());
        prop_assert!(pq <= p.tv_half(&s).unwrap() + s.tv_half(&q).unwrap());
    }

    #[test]
    fn marginals_keep_total_mass(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let (p, _, _) = pair(seed, a, b);
        let total: msgcomp::Prob = p.marginal(&["B"]).unwrap().probs().iter().sum();
        prop_assert_eq!(total, one());
        let back = JointDist::from_json(&p.to_json(), false).unwrap();
        prop_assert_eq!(back.probs(), p.probs());
    }

    #[test]
    fn restriction_distance_is_the_outside_mass(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let (p, _, _) = pair(seed, a, b);
        let mut r = rng(seed ^ 1);
        let keep = random_subset(&mut r, a * b, 0.6);
        let g = EventSet::from_predicate(&p, &["A", "B"], |t| keep[t[0] * b + t[1]]).unwrap();
        let pg = p.prob_event(&g).unwrap();
        prop_assume!(pg > zero());
        prop_assert_eq!(p.tv_half(&p.restrict(&g).unwrap()).unwrap(), one() - pg);
    }

    #[test]
    fn spectrum_divergences_are_monotone_in_eps(seed in any::<u64>(), a in 2usize..5) {
        let mut r = rng(seed);
        let num = random_dist(&mut r, vec![Var::new("A", a)], 6, 0.2);
        let den = random_dist(&mut r, vec![Var::new("A", a)], 6, 0.0);
        let eps = [rat(0, 1), rat(1, 10), rat(1, 4), rat(1, 2), rat(9, 10)];
        let ds: Vec<f64> = eps.iter().map(|e| d_s(&SpectrumQuery::new(num.clone(), den.clone(), e.clone()).unwrap())).collect();
        let dh: Vec<f64> = eps.iter().map(|e| d_h(&SpectrumQuery::new(num.clone(), den.clone(), e.clone()).unwrap())).collect();
        for w in ds.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        for w in dh.windows(2) {
            prop_assert!(w[1] + 1e-12 >= w[0]);
        }
    }

    #[test]
    fn convex_split_matches_brute_force(seed in any::<u64>(), xs in 1usize..3, ms in 2usize..4, r in 0u32..3) {
        let mut g = rng(seed);
        let xm = random_dist(&mut g, vec![Var::new("X", xs), Var::new("M", ms)], 5, 0.2);
        let w = JointDist::new(vec![Var::new("M", ms)], random_row(&mut g, ms, 5, 0.0)).unwrap();
        prop_assert_eq!(convex_split_tv_exact(&xm, &w, r).unwrap(), convex_split_tv_brute(&xm, &w, r).unwrap());
    }

    #[test]
    fn tail_lemma_holds_below_the_diagonal(seed in any::<u64>(), k in 1usize..7) {
        let mut g = rng(seed);
        let free = random_dist(&mut g, vec![Var::new("E", k), Var::new("G", k)], 5, 0.2);
        let w: Vec<msgcomp::Prob> = free.iter().map(|(t, p)| if t[0] <= t[1] { p.clone() } else { zero() }).collect();
        prop_assume!(w.iter().any(|p| *p > zero()));
        let d = JointDist::normalized(free.vars().to_vec(), w).unwrap();
        prop_assert!(lemma1_check(&d).unwrap());
    }

    #[test]
    fn helper_distance_equals_mismatch(seed in any::<u64>(), ys in 1usize..4, xs in 2usize..4) {
        let mut g = rng(seed);
        let d = random_dist(&mut g, vec![Var::new("Y", ys), Var::new("X", xs), Var::new("X2", xs)], 5, 0.3);
        let c = sch_equivalence_check(&d).unwrap();
        prop_assert_eq!(&c.tv_to_ideal, &c.pr_mismatch);
        prop_assert!(c.ok);
    }

    #[test]
    fn counterexample_classes_match_dense_law(num in 1i64..10, size in 3usize..7) {
        let alpha = rat(num, 10);
        let d = counterexample_dist(&alpha, size).unwrap();
        let inst = build_counterexample(to_f64(&alpha), size).unwrap();
        prop_assert!((entropy(&d, &[M, N]).unwrap() - inst.h_mn()).abs() < 1e-9);
        let total: f64 = inst.ratio_classes().iter().map(|c| c.0).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
