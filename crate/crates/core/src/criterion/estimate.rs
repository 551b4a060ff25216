use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{crossing_time, BoxSpec, CrossingOutcome};
use crate::dynamics::UpdateRule;
use crate::environment::{EnergyField, LawSpec};
use crate::error::{usage, Result};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats::{linear_fit, weighted_linear_fit, LinearFit, Proportion};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockingEstimate {
    pub spec: BoxSpec,
    pub proportion: Proportion,
    /// Mean crossing time over the samples that crossed.
    pub mean_crossing_time: Option<f64>,
    /// Runs that used up the step budget (expected 0).
    pub exhausted: u64,
}

impl BlockingEstimate {
    pub fn estimate(&self) -> f64 {
        self.proportion.estimate
    }
}

/// Outcome for sample `index` of a blocking-probability sweep.
pub fn sample_outcome<T: Scalar>(
    law: &LawSpec<T>,
    rule: &UpdateRule<T>,
    spec: &BoxSpec,
    seed: u64,
    index: u64,
) -> Result<CrossingOutcome> {
    let field = EnergyField::new(spec.d, law.clone(), derive_seed(seed, index))?;
    crossing_time(&field, rule, spec)
}

/// Fraction of sampled environments in which the platform dynamics block.
///
/// Sample `i` uses the seed `derive_seed(seed, i)`, so estimates for
/// Bernoulli laws with different `p` are coupled.
pub fn blocking_probability<T: Scalar>(
    law: &LawSpec<T>,
    rule: &UpdateRule<T>,
    spec: &BoxSpec,
    n_samples: u64,
    seed: u64,
) -> Result<BlockingEstimate> {
    if n_samples == 0 {
        return usage("need at least one sample");
    }
    law.validate()?;
    rule.validate(spec.d)?;
    let outcomes = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            sample_outcome(law, rule, spec, seed, i).map(|o| match o {
                CrossingOutcome::Crossed { t } => (0u64, Some(t), 0u64),
                CrossingOutcome::Blocked { .. } => (1, None, 0),
                CrossingOutcome::Exhausted { .. } => (0, None, 1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let blocked = outcomes.iter().map(|o| o.0).sum();
    let times: Vec<u64> = outcomes.iter().filter_map(|o| o.1).collect();
    let mean_crossing_time =
        (!times.is_empty()).then(|| times.iter().map(|&t| t as f64).sum::<f64>() / times.len() as f64);
    Ok(BlockingEstimate {
        spec: *spec,
        proportion: Proportion::new(blocked, n_samples),
        mean_crossing_time,
        exhausted: outcomes.iter().map(|o| o.2).sum(),
    })
}

/// A point `(L, p̂(L))`, optionally with its sample count for weighting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub l: f64,
    pub p: f64,
    pub trials: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `log p̂ = c - ρ log L`.
    pub power: Option<LinearFit>,
    /// `log p̂ = c - κ √L`.
    pub stretched: Option<LinearFit>,
    /// Sizes with `p̂ = 0`, left out of both fits.
    pub zeros: Vec<f64>,
    /// Fewer than three positive points.
    pub degenerate: bool,
}

impl DecayFit {
    pub fn rho_hat(&self) -> Option<f64> {
        self.power.as_ref().map(|f| -f.slope)
    }

    pub fn kappa_hat(&self) -> Option<f64> {
        self.stretched.as_ref().map(|f| -f.slope)
    }

    /// `ρ̂ / se(ρ̂)`: how many standard errors the log-log slope lies below 0.
    pub fn rho_significance(&self) -> Option<f64> {
        self.power.as_ref().map(|f| -f.slope / f.slope_se)
    }

    pub fn kappa_significance(&self) -> Option<f64> {
        self.stretched.as_ref().map(|f| -f.slope / f.slope_se)
    }
}

/// Least-squares fits of `log p̂` against `log L` and `√L`.
///
/// When every positive point carries a sample count and `p̂ < 1`, points are
/// weighted by the delta-method variance `(1 - p̂) / (n p̂)` of `log p̂`.
pub fn fit_decay(points: &[DecayPoint]) -> DecayFit {
    let zeros: Vec<f64> = points.iter().filter(|q| q.p <= 0.0).map(|q| q.l).collect();
    let pos: Vec<&DecayPoint> = points.iter().filter(|q| q.p > 0.0).collect();
    if pos.len() < 3 {
        return DecayFit {
            power: None,
            stretched: None,
            zeros,
            degenerate: true,
        };
    }
    let ys: Vec<f64> = pos.iter().map(|q| q.p.ln()).collect();
    let variances: Option<Vec<f64>> = pos
        .iter()
        .map(|q| match q.trials {
            Some(n) if q.p < 1.0 => Some((1.0 - q.p) / (n as f64 * q.p)),
            _ => None,
        })
        .collect();
    let fit = |xs: Vec<f64>| match &variances {
        Some(v) => weighted_linear_fit(&xs, &ys, v),
        None => linear_fit(&xs, &ys),
    };
    DecayFit {
        power: fit(pos.iter().map(|q| q.l.ln()).collect()),
        stretched: fit(pos.iter().map(|q| q.l.sqrt()).collect()),
        zeros,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<DecayPoint> {
        [4.0, 9.0, 16.0, 25.0, 36.0]
            .iter()
            .map(|&l| DecayPoint { l, p: f(l), trials: None })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_decay(&pts(|l| l.powi(-2)));
        assert!((fit.rho_hat().unwrap() - 2.0).abs() < 1e-12);
        assert!(fit.power.unwrap().rss() < 1e-20);
    }

    #[test]
    fn exact_stretched_exponential() {
        let fit = fit_decay(&pts(|l| (-0.5 * l.sqrt()).exp()));
        assert!((fit.kappa_hat().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zeros_are_reported_and_flag_degenerate() {
        let fit = fit_decay(&[
            DecayPoint { l: 8.0, p: 0.1, trials: Some(100) },
            DecayPoint { l: 16.0, p: 0.01, trials: Some(100) },
            DecayPoint { l: 32.0, p: 0.0, trials: Some(100) },
        ]);
        assert!(fit.degenerate);
        assert_eq!(fit.zeros, vec![32.0]);
        assert!(fit.rho_hat().is_none());
    }

    #[test]
    fn trivial_probabilities() {
        let spec = BoxSpec::new(2, 1, 4, 1).unwrap();
        let rule = UpdateRule::Lipschitz2;
        let zero = blocking_probability(&LawSpec::bernoulli(0.0, 2), &rule, &spec, 20, 1).unwrap();
        assert_eq!(zero.estimate(), 0.0);
        let one = blocking_probability(&LawSpec::bernoulli(1.0, 2), &rule, &spec, 20, 1).unwrap();
        assert_eq!(one.estimate(), 1.0);
    }

    #[test]
    fn coupled_samples_are_monotone_in_p() {
        let spec = BoxSpec::new(2, 1, 4, 1).unwrap();
        let rule = UpdateRule::Lipschitz2;
        for i in 0..200 {
            let mut prev = false;
            for p in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] {
                let blocked = sample_outcome(&LawSpec::bernoulli(p, 2), &rule, &spec, 9, i).unwrap().is_blocked();
                assert!(blocked || !prev, "sample {i} unblocked at p = {p}");
                prev = blocked;
            }
        }
    }
}
