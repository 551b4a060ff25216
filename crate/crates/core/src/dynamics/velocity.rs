use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evolve::step_into;
use super::rules::UpdateRule;
use super::surface::{Boundary, Surface};
use crate::environment::{EnergyField, Environment};
use crate::error::{usage, Result};
use crate::lattice::{Height, LatticeBox};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats::mean_std;

const TRACE_POINTS: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    /// `S_T(0) - S_burn_in(0)`.
    pub advance: i64,
    /// `T - burn_in`.
    pub duration: u64,
    /// `(t, S_t(0))` at about a hundred evenly spaced times, endpoints included.
    pub trace: Vec<(u64, i64)>,
    /// The surface stopped moving before `T`.
    pub halted: bool,
}

impl VelocityEstimate {
    pub fn velocity(&self) -> f64 {
        self.advance as f64 / self.duration as f64
    }
}

/// Runs the flat surface `S_0 ≡ 0` on the periodic window `[0, window)^{d-1}`
/// for `t_max` steps and measures the growth of `S_t(0)` after `burn_in`.
pub fn velocity_estimate<T: Scalar, E: Environment<T>>(
    env: &E,
    rule: &UpdateRule<T>,
    window: i64,
    t_max: u64,
    burn_in: u64,
) -> Result<VelocityEstimate> {
    if t_max <= burn_in {
        return usage("T must exceed the burn-in");
    }
    if window < 1 {
        return usage("window must be >= 1");
    }
    let d = env.dim();
    rule.validate(d)?;
    let base = LatticeBox::cube(&vec![0; d - 1], window);
    let mut s = Surface::flat(base, Boundary::Periodic, Height::new(0))?;
    let origin = s.index_of(&vec![0; d - 1]).expect("origin in window");
    let every = (t_max / TRACE_POINTS).max(1);
    let mut buf = vec![Height::NEG_INF; s.len()];
    let height0 = |s: &Surface| s.heights()[origin].finite().expect("finite periodic surface");
    let mut trace = vec![(0, 0)];
    let mut at_burn_in = if burn_in == 0 { Some(0) } else { None };
    let mut halted = false;
    for t in 1..=t_max {
        if !halted {
            if step_into(&s, env, rule, &mut buf) == 0 {
                halted = true;
            } else {
                std::mem::swap(&mut s.heights, &mut buf);
            }
        }
        if t == burn_in {
            at_burn_in = Some(height0(&s));
        }
        if t % every == 0 || t == t_max {
            trace.push((t, height0(&s)));
        }
        if halted && at_burn_in.is_some() {
            // a fixed point never moves again
            let h = height0(&s);
            if trace.last().map(|p| p.0) != Some(t_max) {
                trace.push((t_max, h));
            }
            break;
        }
    }
    let start = at_burn_in.expect("burn-in reached");
    Ok(VelocityEstimate {
        advance: height0(&s) - start,
        duration: t_max - burn_in,
        trace,
        halted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocitySweep {
    pub seeds: Vec<u64>,
    pub estimates: Vec<VelocityEstimate>,
    pub mean: f64,
    pub std_dev: f64,
    /// `std_dev / mean`.
    pub relative_spread: f64,
}

/// [`velocity_estimate`] over independent replicas of `field` with seeds
/// derived from `field.seed()`.
pub fn velocity_sweep<T: Scalar>(
    field: &EnergyField<T>,
    rule: &UpdateRule<T>,
    window: i64,
    t_max: u64,
    burn_in: u64,
    n_seeds: usize,
) -> Result<VelocitySweep> {
    if n_seeds == 0 {
        return usage("need at least one seed");
    }
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| derive_seed(field.seed(), i)).collect();
    let estimates = seeds
        .par_iter()
        .map(|&s| velocity_estimate(&field.with_seed(s), rule, window, t_max, burn_in))
        .collect::<Result<Vec<_>>>()?;
    let v: Vec<f64> = estimates.iter().map(VelocityEstimate::velocity).collect();
    let (mean, std_dev) = mean_std(&v);
    Ok(VelocitySweep {
        seeds,
        estimates,
        mean,
        std_dev,
        relative_spread: std_dev / mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::LawSpec;

    #[test]
    fn positive_field_moves_at_speed_one() {
        let f = EnergyField::new(2, LawSpec::constant(10.0), 0).unwrap();
        let v = velocity_estimate(&f, &UpdateRule::SoftLaplacian, 16, 50, 10).unwrap();
        assert_eq!((v.advance, v.duration), (40, 40));
        assert_eq!(v.velocity(), 1.0);
        assert_eq!(v.trace.last(), Some(&(50, 50)));
    }

    #[test]
    fn all_traps_pin_lipschitz_surface() {
        let f = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 4).unwrap();
        let v = velocity_estimate(&f, &UpdateRule::Lipschitz2, 16, 100, 10).unwrap();
        assert_eq!(v.velocity(), 0.0);
        assert!(v.halted);
    }

    #[test]
    fn burn_in_must_precede_horizon() {
        let f = EnergyField::new(2, LawSpec::constant(1.0), 0).unwrap();
        assert!(velocity_estimate(&f, &UpdateRule::SoftLaplacian, 4, 10, 10).is_err());
    }
}
