use depinning::criterion::{
    blocking_probability, brute_force_blocking_probability, crossing_time, is_blocking, BoxSpec, CrossingOutcome,
};
use depinning::dynamics::{Boundary, Surface, UpdateRule};
use depinning::environment::{EnergyField, Environment, GridEnvironment, LawSpec, SiteEnergy};
use depinning::{Height, LatticeBox};
use proptest::prelude::*;

/// Whether some surface on the C-base with heights in `0..=H_L + 1` blocks.
fn blocking_surface_exists<E: Environment<f64>>(env: &E, rule: &UpdateRule<f64>, spec: &BoxSpec) -> bool {
    let base = spec.c_base();
    let n = base.volume() as usize;
    let levels = spec.height() + 2;
    let mut digits = vec![0i64; n];
    loop {
        let s = Surface::new(base.clone(), Boundary::NegInf, digits.iter().map(|&v| Height::new(v)).collect()).unwrap();
        if is_blocking(&s, env, rule, spec).unwrap() {
            return true;
        }
        let mut k = 0;
        loop {
            if k == n {
                return false;
            }
            digits[k] += 1;
            if digits[k] < levels {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn blocked_iff_a_blocking_surface_exists() {
    let spec = BoxSpec::new(2, 1, 2, 1).unwrap();
    let cases: Vec<(UpdateRule<f64>, LawSpec<f64>)> = vec![
        (UpdateRule::Lipschitz2, LawSpec::bernoulli(0.3, 2)),
        (UpdateRule::Lipschitz2, LawSpec::bernoulli(0.6, 2)),
        (UpdateRule::LaplacianThreshold { threshold: 0.0 }, LawSpec::gaussian(-0.5, 1.0)),
        (UpdateRule::SoftLaplacian, LawSpec::gaussian(-0.2, 1.0)),
    ];
    let mut seen = [0usize; 2];
    for (rule, law) in &cases {
        for seed in 0..12u64 {
            let field = EnergyField::new(2, law.clone(), seed).unwrap();
            let out = crossing_time(&field, rule, &spec).unwrap();
            assert!(!matches!(out, CrossingOutcome::Exhausted { .. }));
            if let CrossingOutcome::Blocked { last, .. } = &out {
                assert!(is_blocking(last, &field, rule, &spec).unwrap());
            }
            assert_eq!(out.is_blocked(), blocking_surface_exists(&field, rule, &spec), "{} seed {seed}", rule.name());
            seen[out.is_blocked() as usize] += 1;
        }
    }
    assert!(seen[0] > 0 && seen[1] > 0, "{seen:?}");
}

#[test]
fn oracle_agrees_with_sampling_on_a_small_box() {
    let spec = BoxSpec::new(2, 1, 1, 1).unwrap();
    let law = LawSpec::bernoulli(0.5, 2);
    let exact = brute_force_blocking_probability(&law, &UpdateRule::Lipschitz2, &spec).unwrap();
    let mc = blocking_probability(&law, &UpdateRule::Lipschitz2, &spec, 20_000, 4).unwrap();
    let se = (exact.value * (1.0 - exact.value) / 20_000.0).sqrt();
    assert!((mc.estimate() - exact.value).abs() < 4.0 * se, "{} vs {}", mc.estimate(), exact.value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outcome_ignores_sites_outside_the_c_box(seed in any::<u64>(), p in 0.1f64..0.6, junk in -5.0f64..5.0) {
        let spec = BoxSpec::new(2, 1, 3, 1).unwrap();
        let field = EnergyField::new(2, LawSpec::bernoulli(p, 2), seed).unwrap();
        let c = spec.c_box();
        let wide = LatticeBox::new(vec![-2, -2], vec![c.hi()[0] + 2, c.hi()[1] + 2]).unwrap();
        let mut grid = GridEnvironment::capture(&field, wide.clone());
        for site in wide.points() {
            if !c.contains(&site) {
                grid.set(&site, SiteEnergy::new(junk)).unwrap();
            }
        }
        let a = crossing_time(&field, &UpdateRule::Lipschitz2, &spec).unwrap();
        let b = crossing_time(&grid, &UpdateRule::Lipschitz2, &spec).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn more_traps_never_unblock(seed in any::<u64>(), p in 0.05f64..0.9, dp in 0.0f64..0.3) {
        let spec = BoxSpec::new(2, 1, 4, 1).unwrap();
        let lo = EnergyField::new(2, LawSpec::bernoulli(p, 2), seed).unwrap();
        let hi = lo.with_law(LawSpec::bernoulli((p + dp).min(1.0), 2)).unwrap();
        let a = crossing_time(&lo, &UpdateRule::Lipschitz2, &spec).unwrap();
        let b = crossing_time(&hi, &UpdateRule::Lipschitz2, &spec).unwrap();
        prop_assert!(!a.is_blocked() || b.is_blocked());
        if let (Some(ta), Some(tb)) = (a.time(), b.time()) {
            prop_assert!(ta <= tb);
        }
    }

    #[test]
    fn runs_halt_within_the_step_bound(seed in any::<u64>(), h in 1i64..3, l in 2i64..6, mean in -1.0f64..1.0) {
        let spec = BoxSpec::new(2, h, l, 1).unwrap();
        let field = EnergyField::new(2, LawSpec::gaussian(mean, 1.0), seed).unwrap();
        for rule in [UpdateRule::SoftLaplacian, UpdateRule::LaplacianThreshold { threshold: 0.3 }] {
            let out = crossing_time(&field, &rule, &spec).unwrap();
            prop_assert!(out.time().is_some() || out.is_blocked(), "budget exhausted");
            prop_assert!(out.sweeps() <= spec.step_bound());
        }
    }
}
