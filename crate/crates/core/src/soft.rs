//! Analytical companions of the soft Laplacian dynamics in `d = 2`.
//!
//! The decay of blocking probabilities for the soft rule is driven by the
//! exponential moment `E[exp(-λω)]` compared with `1 - exp(-λ)`. This module
//! evaluates that condition, searches for a good `λ`, and provides the
//! parabolic envelope and deep-trap checks used to compare simulations with
//! the stretched-exponential bound `exp(-κ√L)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{crossing_time, fit_decay, BlockingEstimate, BoxSpec, CrossingOutcome, DecayFit, DecayPoint};
use crate::dynamics::{Surface, UpdateRule};
use crate::environment::{EnergyField, Environment, LawSpec, Restricted};
use crate::error::{usage, Result};
use crate::lattice::LatticeBox;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats::{mean_std, Proportion};

/// Samples used for laws without a closed-form moment.
pub const MOMENT_SAMPLES: usize = 1_000_000;
const MOMENT_SEED: u64 = 0x5_eed0_fa11;

/// Height exponent used by the soft-model experiments.
pub const SOFT_A: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCondition<T> {
    pub lambda: T,
    /// `E[exp(-λω)]`, `+∞` when divergent.
    pub lhs: T,
    /// Standard error of `lhs`, `None` for closed forms.
    pub lhs_se: Option<T>,
    /// `1 - exp(-λ)`.
    pub rhs: T,
    pub satisfied: bool,
    /// `ω = -∞` with positive probability.
    pub divergent: bool,
}

impl<T: Scalar> MomentCondition<T> {
    /// `lhs / rhs`.
    pub fn ratio(&self) -> T {
        self.lhs / self.rhs
    }
}

/// How `E[exp(-λω)]` is evaluated for a given law.
enum Moment<T> {
    Closed(LawSpec<T>),
    Sampled(Vec<f64>),
}

impl<T: Scalar> Moment<T> {
    fn of(law: &LawSpec<T>, n: usize, seed: u64) -> Result<Self> {
        law.validate()?;
        Ok(match law {
            LawSpec::MovingAverage { .. } => Moment::Sampled(sample_marginal(law, n, seed)?),
            _ => Moment::Closed(law.clone()),
        })
    }

    /// `(lhs, se, divergent)`.
    fn eval(&self, lambda: f64) -> (f64, Option<f64>, bool) {
        let m = |w: f64| (-lambda * w).exp();
        match self {
            Moment::Closed(law) => match law {
                LawSpec::Gaussian { mean, variance } => {
                    ((-lambda * mean.as_f64() + 0.5 * variance.as_f64() * lambda * lambda).exp(), None, false)
                }
                LawSpec::BernoulliTrap { p, trap, free } => {
                    let (p, trap, free) = (p.as_f64(), trap.as_f64(), free.as_f64());
                    if p > 0.0 && trap == f64::NEG_INFINITY {
                        (f64::INFINITY, None, true)
                    } else if p == 0.0 {
                        (m(free), None, false)
                    } else {
                        (p * m(trap) + (1.0 - p) * m(free), None, false)
                    }
                }
                LawSpec::Constant { value } => match value.value() {
                    Some(v) => (m(v.as_f64()), None, false),
                    None => (f64::INFINITY, None, true),
                },
                LawSpec::MovingAverage { .. } => unreachable!("sampled"),
            },
            Moment::Sampled(xs) => {
                if xs.contains(&f64::NEG_INFINITY) {
                    return (f64::INFINITY, None, true);
                }
                let vals: Vec<f64> = xs.iter().map(|&w| m(w)).collect();
                let (mean, sd) = mean_std(&vals);
                (mean, Some(sd / (vals.len() as f64).sqrt()), false)
            }
        }
    }

    fn condition(&self, lambda: T) -> MomentCondition<T> {
        let l = lambda.as_f64();
        let (lhs, se, divergent) = self.eval(l);
        let rhs = -(-l).exp_m1();
        MomentCondition {
            lambda,
            lhs: T::of(lhs),
            lhs_se: se.map(T::of),
            rhs: T::of(rhs),
            satisfied: !divergent && lhs < rhs,
            divergent,
        }
    }
}

/// Independent draws of the single-site marginal of `law`, taken at sites far
/// enough apart not to share any randomness.
fn sample_marginal<T: Scalar>(law: &LawSpec<T>, n: usize, seed: u64) -> Result<Vec<f64>> {
    let stride = match law {
        LawSpec::MovingAverage { window, .. } => i64::from(*window) + 1,
        _ => 1,
    };
    let field = EnergyField::new(2, law.clone(), seed)?;
    Ok((0..n as i64)
        .into_par_iter()
        .map(|k| field.energy(&[k * stride], 0).raw().as_f64())
        .collect())
}

/// Evaluates `E[exp(-λω)] < 1 - exp(-λ)`.
///
/// Gaussian, Bernoulli and constant laws use closed forms; moving averages
/// are estimated from [`MOMENT_SAMPLES`] draws.
pub fn lambda_condition<T: Scalar>(law: &LawSpec<T>, lambda: T) -> Result<MomentCondition<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return usage("lambda must be positive and finite");
    }
    Ok(Moment::of(law, MOMENT_SAMPLES, MOMENT_SEED)?.condition(lambda))
}

/// [`lambda_condition`] estimated from `n` draws of the marginal, whatever the law.
pub fn lambda_condition_sampled<T: Scalar>(
    law: &LawSpec<T>,
    lambda: T,
    n: usize,
    seed: u64,
) -> Result<MomentCondition<T>> {
    if !(lambda > T::zero()) || !lambda.is_finite() || n < 2 {
        return usage("need lambda > 0 and at least two samples");
    }
    law.validate()?;
    Ok(Moment::Sampled(sample_marginal(law, n, seed)?).condition(lambda))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch<T> {
    /// The minimiser of `lhs / rhs` found by the search.
    pub best: MomentCondition<T>,
    pub feasible: bool,
}

impl<T: Scalar> LambdaSearch<T> {
    /// The feasible `λ0`, if any.
    pub fn lambda0(&self) -> Option<T> {
        self.feasible.then_some(self.best.lambda)
    }

    /// `rhs - lhs` at the best `λ`; negative when infeasible.
    pub fn margin(&self) -> T {
        self.best.rhs - self.best.lhs
    }
}

/// Minimises `log(lhs / rhs)` over `λ ∈ [1e-3, 1e2]`: a logarithmic grid
/// followed by golden-section refinement around the best grid point.
pub fn find_lambda<T: Scalar>(law: &LawSpec<T>) -> Result<LambdaSearch<T>> {
    let moment = Moment::of(law, MOMENT_SAMPLES, MOMENT_SEED)?;
    let objective = |l: f64| {
        let (lhs, _, div) = moment.eval(l);
        if div {
            f64::INFINITY
        } else {
            lhs.ln() - (-(-l).exp_m1()).ln()
        }
    };
    const N: usize = 101;
    let grid: Vec<f64> = (0..N).map(|k| 10f64.powf(-3.0 + 5.0 * k as f64 / (N - 1) as f64)).collect();
    let values: Vec<f64> = grid.iter().map(|&l| objective(l)).collect();
    let k = (0..N).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    let (mut lo, mut hi) = (grid[k.saturating_sub(1)], grid[(k + 1).min(N - 1)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..100 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    let refined = 0.5 * (lo + hi);
    let lambda = if objective(refined) <= values[k] { refined } else { grid[k] };
    let best = moment.condition(T::of(lambda));
    Ok(LambdaSearch {
        feasible: best.satisfied,
        best,
    })
}

/// `q = E[exp(-λω)] / (1 - exp(-λ))`; `q < 1` exactly when the condition holds.
pub fn decay_ratio<T: Scalar>(law: &LawSpec<T>, lambda: T) -> Result<T> {
    lambda_condition(law, lambda).map(|c| c.ratio())
}

/// `H(x) = (√L/2)(x - x0)(x - x0 - 1) + s0 + (x - x0)`.
pub fn parabola_envelope(x0: i64, s0: i64, l: i64, x: i64) -> f64 {
    let dx = (x - x0) as f64;
    0.5 * (l as f64).sqrt() * dx * (dx - 1.0) + s0 as f64 + dx
}

/// Whether every energy of `bx` is at least `-√L`.
pub fn deep_trap_event<T: Scalar, E: Environment<T>>(env: &E, bx: &LatticeBox, l: i64) -> bool {
    let floor = -(l as f64).sqrt();
    let d = bx.dim();
    bx.points()
        .all(|p| env.energy(&p[..d - 1], p[d - 1]).value().is_some_and(|w| w.as_f64() >= floor))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub deep_trap_event: bool,
    /// Start points `x0` with `S(x0) <= 2L` and `S(x0+1) - S(x0) <= 1`.
    pub start_points: usize,
    /// `(x0, x)` with `S(x) > H(x)`.
    pub violations: Vec<(i64, i64)>,
}

impl EnvelopeCheck {
    /// `None` when the deep-trap event fails and the check is skipped.
    pub fn dominated(&self) -> Option<bool> {
        self.deep_trap_event.then_some(self.violations.is_empty())
    }
}

/// Compares a blocked `d = 2` soft surface with the parabolic envelope
/// started at each admissible `x0`, to the right of `x0`.
///
/// A stretch ends at the first site whose graph point has energy `-∞`
/// (the box exterior), where the surface is pinned regardless of `ω`.
pub fn envelope_dominates<T: Scalar, E: Environment<T>>(
    blocked: &Surface,
    env: &E,
    l: i64,
    deep_trap_event: bool,
) -> Result<EnvelopeCheck> {
    if blocked.dim() != 2 || env.dim() != 2 {
        return usage("envelope check is for d = 2");
    }
    let mut out = EnvelopeCheck {
        deep_trap_event,
        start_points: 0,
        violations: Vec::new(),
    };
    if !deep_trap_event {
        return Ok(out);
    }
    let (lo, hi) = (blocked.base().lo()[0], blocked.base().hi()[0]);
    let s = |x: i64| blocked.height(&[x]).finite();
    for x0 in lo..hi - 1 {
        let (Some(s0), Some(s1)) = (s(x0), s(x0 + 1)) else { continue };
        if s0 > 2 * l || s1 - s0 > 1 {
            continue;
        }
        out.start_points += 1;
        for x in x0 + 1..hi {
            let Some(sx) = s(x) else { break };
            if sx as f64 > parabola_envelope(x0, s0, l, x) {
                out.violations.push((x0, x));
                break;
            }
            if env.energy(&[x], sx).is_neg_inf() {
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepTrapBound {
    pub h: i64,
    pub l: i64,
    pub lambda0: f64,
    /// `3 h L^4 exp(-λ0 √L)`.
    pub bound: f64,
    /// `λ0 = 0` or a bound of at least one.
    pub vacuous: bool,
    /// Fraction of sampled boxes where the deep-trap event fails.
    pub empirical: Option<Proportion>,
}

pub fn deep_trap_probability_bound(h: i64, l: i64, lambda0: f64) -> DeepTrapBound {
    let bound = 3.0 * h as f64 * (l as f64).powi(4) * (-lambda0 * (l as f64).sqrt()).exp();
    DeepTrapBound {
        h,
        l,
        lambda0,
        bound,
        vacuous: lambda0 <= 0.0 || bound >= 1.0,
        empirical: None,
    }
}

/// [`deep_trap_probability_bound`] together with the empirical frequency of
/// `min ω < -√L` over the `d = 2` C-box with `a = 2`.
pub fn deep_trap_check<T: Scalar>(
    law: &LawSpec<T>,
    h: i64,
    l: i64,
    lambda0: f64,
    n_samples: u64,
    seed: u64,
) -> Result<DeepTrapBound> {
    if n_samples == 0 {
        return usage("need at least one sample");
    }
    let c_box = BoxSpec::new(2, h, l, SOFT_A)?.c_box();
    let failures: u64 = (0..n_samples)
        .into_par_iter()
        .map(|i| -> Result<u64> {
            let field = EnergyField::new(2, law.clone(), derive_seed(seed, i))?;
            Ok(u64::from(!deep_trap_event(&field, &c_box, l)))
        })
        .sum::<Result<u64>>()?;
    let mut out = deep_trap_probability_bound(h, l, lambda0);
    out.empirical = Some(Proportion::new(failures, n_samples));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftDecay {
    pub mean: f64,
    pub variance: f64,
    pub estimates: Vec<BlockingEstimate>,
    pub fit: DecayFit,
    /// `p̂` non-increasing along the sizes.
    pub decreasing: bool,
    /// Non-increasing, and either every `p̂` is zero or the `√L` fit has
    /// `κ̂ > 0` and passes through every 95% interval.
    pub consistent: bool,
}

impl SoftDecay {
    pub fn kappa_hat(&self) -> Option<f64> {
        self.fit.kappa_hat()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.estimates.windows(2).all(|w| w[1].estimate() < w[0].estimate())
    }
}

/// Blocking probabilities of the soft dynamics with Gaussian energies of
/// mean `f` and variance `sigma`, at `a = 2`, over `l_list`.
pub fn mc_blocking_decay(f: f64, sigma: f64, h: i64, l_list: &[i64], n_samples: u64, seed: u64) -> Result<SoftDecay> {
    if l_list.is_empty() {
        return usage("need at least one size");
    }
    let law = LawSpec::gaussian(f, sigma);
    law.validate()?;
    let rule = UpdateRule::SoftLaplacian;
    let mut sizes = l_list.to_vec();
    sizes.sort_unstable();
    let estimates = sizes
        .iter()
        .map(|&l| crate::criterion::blocking_probability(&law, &rule, &BoxSpec::new(2, h, l, SOFT_A)?, n_samples, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_decay(f, sigma, estimates))
}

/// Fit and flags of [`mc_blocking_decay`] for estimates in increasing `L`.
pub fn summarize_decay(f: f64, sigma: f64, estimates: Vec<BlockingEstimate>) -> SoftDecay {
    let points: Vec<DecayPoint> = estimates
        .iter()
        .map(|e| DecayPoint {
            l: e.spec.l as f64,
            p: e.estimate(),
            trials: Some(e.proportion.trials),
        })
        .collect();
    let fit = fit_decay(&points);
    let decreasing = estimates.windows(2).all(|w| w[1].estimate() <= w[0].estimate());
    let all_zero = estimates.iter().all(|e| e.proportion.successes == 0);
    let shape_ok = match &fit.stretched {
        Some(s) if s.slope < 0.0 => estimates.iter().all(|e| {
            let v = (s.intercept + s.slope * (e.spec.l as f64).sqrt()).exp();
            e.proportion.ci.0 <= v && v <= e.proportion.ci.1
        }),
        _ => false,
    };
    SoftDecay {
        mean: f,
        variance: sigma,
        estimates,
        fit,
        decreasing,
        consistent: decreasing && (all_zero || shape_ok),
    }
}

/// One soft-rule sample, with the envelope check when it blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftSample {
    pub outcome: CrossingOutcome,
    pub envelope: Option<EnvelopeCheck>,
}

impl SoftSample {
    pub fn blocked(&self) -> bool {
        self.outcome.is_blocked()
    }
}

/// Runs the soft dynamics for the Gaussian environment with seed `seed`.
pub fn soft_sample(f: f64, sigma: f64, spec: &BoxSpec, seed: u64) -> Result<SoftSample> {
    let field = EnergyField::new(2, LawSpec::gaussian(f, sigma), seed)?;
    let outcome = crossing_time(&field, &UpdateRule::SoftLaplacian, spec)?;
    let envelope = match &outcome {
        CrossingOutcome::Blocked { last, .. } => {
            let c_box = spec.c_box();
            let event = deep_trap_event(&field, &c_box, spec.l);
            Some(envelope_dominates(last, &Restricted::new(&field, c_box), spec.l, event)?)
        }
        _ => None,
    };
    Ok(SoftSample { outcome, envelope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::platform_surface;
    use crate::environment::GridEnvironment;

    #[test]
    fn gaussian_closed_form() {
        let c = lambda_condition(&LawSpec::gaussian(5.0, 1.0), 1.0).unwrap();
        assert!((c.lhs - (-4.5f64).exp()).abs() < 1e-15);
        assert!((c.rhs - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!(c.satisfied && c.lhs_se.is_none());
        let q = decay_ratio(&LawSpec::gaussian(5.0, 1.0), 1.0).unwrap();
        assert!((q - (-4.5f64).exp() / (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn centred_gaussian_is_infeasible() {
        for l in [1e-3, 0.1, 1.0, 10.0] {
            let c = lambda_condition(&LawSpec::gaussian(0.0, 1.0), l).unwrap();
            assert!(c.lhs >= 1.0 && !c.satisfied);
        }
        let s = find_lambda(&LawSpec::gaussian(0.0, 1.0)).unwrap();
        assert!(!s.feasible && s.margin() < 0.0);
    }

    #[test]
    fn search_finds_and_reverifies() {
        let s = find_lambda(&LawSpec::gaussian(5.0, 1.0)).unwrap();
        let l = s.lambda0().unwrap();
        assert!(lambda_condition(&LawSpec::gaussian(5.0, 1.0), l).unwrap().satisfied);
        // same λ works for larger means
        assert!(lambda_condition(&LawSpec::gaussian(6.0, 1.0), l).unwrap().satisfied);
    }

    #[test]
    fn ratio_below_one_iff_satisfied() {
        for f in [0.0, 0.5, 1.0, 2.0, 5.0] {
            for l in [0.1, 0.5, 1.0, 2.0] {
                let c = lambda_condition(&LawSpec::gaussian(f, 1.0), l).unwrap();
                assert_eq!(c.ratio() < 1.0, c.satisfied);
            }
        }
    }

    #[test]
    fn divergent_laws_are_flagged() {
        let law = LawSpec::BernoulliTrap {
            p: 0.1,
            trap: f64::NEG_INFINITY,
            free: 1.0,
        };
        let c = lambda_condition(&law, 1.0).unwrap();
        assert!(c.divergent && !c.satisfied);
        assert!(lambda_condition(&law, 0.0).is_err());
    }

    #[test]
    fn bernoulli_closed_form() {
        let law = LawSpec::BernoulliTrap { p: 0.25, trap: -1.0, free: 2.0 };
        let c = lambda_condition(&law, 0.5).unwrap();
        let expect = 0.25 * 0.5f64.exp() + 0.75 * (-1.0f64).exp();
        assert!((c.lhs - expect).abs() < 1e-15);
    }

    #[test]
    fn sampled_matches_closed_form() {
        let law = LawSpec::gaussian(1.0f64, 0.5);
        let exact = lambda_condition(&law, 0.7).unwrap();
        let mc = lambda_condition_sampled(&law, 0.7, 200_000, 3).unwrap();
        let se = mc.lhs_se.unwrap();
        assert!((mc.lhs - exact.lhs).abs() < 3.0 * se, "{} vs {} (se {se})", mc.lhs, exact.lhs);
    }

    #[test]
    fn envelope_values() {
        assert_eq!(parabola_envelope(3, 7, 100, 3), 7.0);
        assert_eq!(parabola_envelope(3, 7, 100, 4), 8.0);
        assert_eq!(parabola_envelope(0, 0, 100, 2), 12.0);
    }

    #[test]
    fn zero_field_blocks_under_envelope() {
        let spec = BoxSpec::new(2, 1, 4, SOFT_A).unwrap();
        let env = Restricted::new(GridEnvironment::filled(spec.c_box(), 0.0), spec.c_box());
        let out = crossing_time(&env, &UpdateRule::SoftLaplacian, &spec).unwrap();
        let CrossingOutcome::Blocked { last, .. } = out else { panic!("{out:?}") };
        assert_eq!(last, platform_surface(&spec, 0).unwrap());
        assert!(deep_trap_event(&env, &spec.c_box(), 4));
        let check = envelope_dominates(&last, &env, 4, true).unwrap();
        assert_eq!(check.dominated(), Some(true));
        assert!(check.start_points > 0);
    }

    #[test]
    fn failed_event_skips() {
        let spec = BoxSpec::new(2, 1, 4, SOFT_A).unwrap();
        let mut grid = GridEnvironment::filled(spec.c_box(), 0.0);
        grid.set(&[3, 0], crate::environment::SiteEnergy::new(-5.0)).unwrap();
        assert!(!deep_trap_event(&grid, &spec.c_box(), 4));
        let s = platform_surface(&spec, 0).unwrap();
        assert_eq!(envelope_dominates(&s, &grid, 4, false).unwrap().dominated(), None);
    }

    #[test]
    fn steep_surface_violates() {
        let spec = BoxSpec::new(2, 1, 4, SOFT_A).unwrap();
        let grid = GridEnvironment::filled(spec.c_box(), 0.0);
        let h: Vec<_> = (0..12).map(|x| crate::Height::new(if x == 2 { 9 } else { 0 })).collect();
        let s = platform_surface(&spec, 0).unwrap().with_heights(h).unwrap();
        let check = envelope_dominates(&s, &grid, 4, true).unwrap();
        assert_eq!(check.violations.first(), Some(&(0, 2)));
    }

    #[test]
    fn blocked_gaussian_samples_stay_under_envelope() {
        // at L = 36 the event min ω >= -6 almost always holds
        let spec = BoxSpec::new(2, 1, 36, SOFT_A).unwrap();
        let mut checked = 0;
        for i in 0..10 {
            let s = soft_sample(0.0, 1.0, &spec, derive_seed(4, i)).unwrap();
            if let Some(e) = s.envelope {
                if let Some(ok) = e.dominated() {
                    assert!(ok, "sample {i}: {:?}", e.violations);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn deep_trap_bound_shape() {
        assert!(deep_trap_probability_bound(4, 16, 0.0).vacuous);
        assert_eq!(deep_trap_probability_bound(4, 16, 0.0).bound, 3.0 * 4.0 * 16f64.powi(4));
        let b: Vec<f64> = (100..110).map(|l| deep_trap_probability_bound(4, l * l, 2.0).bound).collect();
        assert!(b.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn coupled_blocking_monotone_in_mean() {
        let spec = BoxSpec::new(2, 1, 4, SOFT_A).unwrap();
        for i in 0..30 {
            let s = derive_seed(11, i);
            let lo = soft_sample(-0.5, 1.0, &spec, s).unwrap().blocked();
            let hi = soft_sample(0.5, 1.0, &spec, s).unwrap().blocked();
            assert!(lo || !hi, "sample {i}");
        }
    }
}
