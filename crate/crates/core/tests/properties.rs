use bofip::harness::{parse_trace_str, trace_rows, TRACE_HEADER};
use bofip::{
    expected_improvement, joint_density, BeliefVector, Domain, GridScheme, Interval, RunRecord, SubspacePartition,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn domain(d: usize, p: usize, n_g: usize, seed: u64) -> Domain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let part = SubspacePartition::random(vec![Interval::new(-2.0, 3.0); d], p, &mut rng).unwrap();
    Domain::build(part, n_g, GridScheme::Auto, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partitions_cover_every_dimension_once(d in 1usize..40, frac in 0.0f64..1.0, seed: u64) {
        let p = 1 + ((d - 1) as f64 * frac) as usize;
        let part = SubspacePartition::random(vec![Interval::new(0.0, 1.0); d], p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut all: Vec<usize> = part.index_sets().concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..d).collect::<Vec<_>>());
        let sizes: Vec<usize> = part.index_sets().iter().map(Vec::len).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(sizes[0] - sizes[p - 1] <= 1);
    }

    #[test]
    fn compose_decompose_round_trip(d in 1usize..8, p_frac in 0.0f64..1.0, n_g in 2usize..9, seed: u64, pick: u64) {
        let p = 1 + ((d - 1) as f64 * p_frac) as usize;
        let dom = domain(d, p, n_g, seed);
        let idx: Vec<usize> = (0..p).map(|i| (pick as usize / (i + 1)) % dom.grid(i).len()).collect();
        let point = dom.compose(&idx).unwrap();
        prop_assert!(point.coords.iter().all(|c| (-2.0..=3.0).contains(c)));
        for (i, set) in dom.partition().index_sets().iter().enumerate() {
            for (c, &k) in set.iter().enumerate() {
                prop_assert_eq!(point.coords[k], dom.grid(i).row(idx[i])[c]);
            }
        }
        prop_assert_eq!(dom.decompose(&point.coords), Some(idx));
    }

    #[test]
    fn joint_density_sums_to_one(n0 in 2usize..6, n1 in 2usize..6, plays in proptest::collection::vec(0usize..36, 0..8), seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = SubspacePartition::from_sets(vec![vec![0], vec![1]], vec![Interval::new(0.0, 1.0); 2]).unwrap();
        let g0 = bofip::SubspaceGrid::build(&part, 0, n0, GridScheme::UniformLattice, &mut rng).unwrap();
        let g1 = bofip::SubspaceGrid::build(&part, 1, n1, GridScheme::UniformLattice, &mut rng).unwrap();
        let dom = Domain::from_parts(part, vec![g0, g1]).unwrap();
        let mut beliefs = vec![BeliefVector::uniform(0, n0), BeliefVector::uniform(1, n1)];
        for r in plays {
            beliefs[0].update(r % n0).unwrap();
            beliefs[1].update(r % n1).unwrap();
        }
        let mut total = 0.0;
        for a in 0..n0 {
            for b in 0..n1 {
                let x = dom.compose(&[a, b]).unwrap().coords;
                let dens = joint_density(&beliefs, &dom, &x);
                prop_assert_eq!(dens, beliefs[0].weights()[a] * beliefs[1].weights()[b]);
                total += dens;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(joint_density(&beliefs, &dom, &[0.5 / n0 as f64 + 1e-3, 0.0]), 0.0);
    }

    #[test]
    fn ei_is_non_negative_and_monotone(mean in -10.0f64..10.0, s1 in 0.0f64..5.0, s2 in 0.0f64..5.0, best in -10.0f64..10.0) {
        let a = expected_improvement(mean, s1, best).unwrap();
        let b = expected_improvement(mean, s2, best).unwrap();
        prop_assert!(a >= 0.0 && b >= 0.0);
        if best >= mean {
            let (lo, hi) = if s1 <= s2 { (a, b) } else { (b, a) };
            prop_assert!(hi >= lo - 1e-12);
        }
    }

    #[test]
    fn record_follows_running_minimum(stream in proptest::collection::vec(-100.0f64..100.0, 0..200)) {
        let mut rec = RunRecord::default();
        let mut running = f64::INFINITY;
        let mut expected = Vec::new();
        for (i, v) in stream.iter().enumerate() {
            rec.record_best(&[*v, 1.0], *v, i as f64);
            if *v < running {
                running = *v;
                expected.push((i + 1, *v));
            }
        }
        let got: Vec<(usize, f64)> = rec.series.iter().map(|p| (p.total_evals, p.record_best_f)).collect();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(rec.total_evaluations, stream.len());
    }

    #[test]
    fn traces_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 0..50), f_star in proptest::option::of(-10.0f64..10.0)) {
        let mut rec = RunRecord::default();
        for (i, v) in values.iter().enumerate() {
            rec.record_best(&[0.0], *v, i as f64 * 0.37);
        }
        let mut text = TRACE_HEADER.join(",") + "\n";
        for r in trace_rows(&rec, f_star) {
            text += &format!("{},{},{},{}\n", r.wall_clock_s, r.total_evals, r.record_best_f,
                r.record_best_gap.map(|g| g.to_string()).unwrap_or_default());
        }
        let parsed = parse_trace_str(&text).unwrap();
        prop_assert_eq!(&parsed, &trace_rows(&rec, f_star));
        prop_assert!(parsed.windows(2).all(|w| w[1].record_best_f <= w[0].record_best_f
            && w[1].wall_clock_s > w[0].wall_clock_s));
        if let Some(f) = f_star {
            prop_assert!(parsed.iter().all(|r| r.record_best_gap.unwrap() >= 0.0 && (r.record_best_gap == Some(0.0)) == (r.record_best_f == f)));
        }
    }
}

#[test]
fn identical_seeds_give_identical_domains() {
    let a = domain(30, 7, 16, 42);
    let b = domain(30, 7, 16, 42);
    assert_eq!(a.partition().index_sets(), b.partition().index_sets());
    for i in 0..7 {
        assert_eq!(a.grid(i).rows().collect::<Vec<_>>(), b.grid(i).rows().collect::<Vec<_>>());
    }
    assert_ne!(domain(30, 7, 16, 43).partition().index_sets(), a.partition().index_sets());
}
