use depinning::criterion::{crossing_time, structure_checks_d2, BoxSpec, CrossingOutcome};
use depinning::dynamics::UpdateRule;
use depinning::environment::{EnergyField, Environment, LawSpec};
use depinning::percolation::{
    blocked_sites, crossing_threshold, estimate_pc, interface_to_path, reach, sample_seed, OrientedEdgeSet,
    PathExtraction,
};
use depinning::LatticeBox;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn strip_crossing_is_monotone_in_p(seed in any::<u64>(), l in 3i64..10, p in 0.0f64..1.0, dp in 0.0f64..0.5) {
        let theta = crossing_threshold(l, sample_seed(seed, l, 0));
        let region = LatticeBox::new(vec![0, 0], vec![l + 3, 2 * l]).unwrap();
        let sources: Vec<_> = (0..2 * l).map(|y| (0, y)).collect();
        let s = sample_seed(seed, l, 0);
        let crosses = |p: f64| {
            let f = EnergyField::new(2, LawSpec::bernoulli(p, 2), s).unwrap();
            reach(&blocked_sites(&f, &region).unwrap(), &sources, l).reached
        };
        let q = (p + dp).min(1.0);
        prop_assert_eq!(crosses(p), theta < p);
        prop_assert!(!crosses(p) || crosses(q));
    }

    #[test]
    fn fields_are_reproducible(seed in any::<u64>(), x in -1000i64..1000, y in -1000i64..1000) {
        for law in [LawSpec::bernoulli(0.3, 2), LawSpec::gaussian(1.0, 2.0), LawSpec::moving_average(2, LawSpec::gaussian(0.0, 1.0))] {
            let a = EnergyField::new(2, law.clone(), seed).unwrap();
            let b = EnergyField::new(2, law, seed).unwrap();
            prop_assert_eq!(a.energy(&[x], y), b.energy(&[x], y));
            prop_assert_eq!(a.sample_energy(&[x, y]).unwrap(), a.energy(&[x], y));
        }
    }
}

#[test]
fn blocked_interfaces_read_as_oriented_paths() {
    let spec = BoxSpec::new(2, 1, 6, 1).unwrap();
    let mut checked = 0;
    for seed in 0..400u64 {
        let field = EnergyField::new(2, LawSpec::bernoulli(0.35, 2), seed).unwrap();
        let CrossingOutcome::Blocked { last, .. } = crossing_time(&field, &UpdateRule::Lipschitz2, &spec).unwrap() else {
            continue;
        };
        let r = structure_checks_d2(&last, &field, &spec).unwrap();
        if !r.all_pass() {
            continue;
        }
        let PathExtraction::Path(p) = interface_to_path(&last, &field, r.window.unwrap()).unwrap() else {
            panic!("seed {seed}: blocked 1-Lipschitz stretch is not an oriented path");
        };
        let edges = OrientedEdgeSet;
        assert!(p.windows(2).all(|w| edges.contains(w[1].0 - w[0].0, w[1].1 - w[0].1)));
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} blocked instances");
}

#[test]
fn pc_estimate_is_reproducible() {
    let grid: Vec<f64> = (0..21).map(|i| 0.1 + 0.03 * i as f64).collect();
    let a = estimate_pc(&[8, 16], &grid, 300, 11).unwrap();
    let b = estimate_pc(&[8, 16], &grid, 300, 11).unwrap();
    assert_eq!(a, b);
    for c in &a.curves {
        assert!(c.points.windows(2).all(|w| w[0].1.estimate <= w[1].1.estimate));
    }
}
