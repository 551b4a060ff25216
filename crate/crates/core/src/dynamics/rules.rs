use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::SiteEnergy;
use crate::error::{usage, Error, Result};
use crate::lattice::Height;
use crate::scalar::Scalar;

/// An update function `F(∂_{e_1}S, ∂_{-e_1}S, …, ω) ∈ {0, 1}`.
///
/// Every variant is non-decreasing in each argument and returns 0 when an
/// argument is `-∞`. Gradients are passed in the order
/// `(+e_1, -e_1, +e_2, -e_2, …)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum UpdateRule<T> {
    /// Moves when no gradient is `<= -2` and either some gradient is `>= 2`
    /// or `ΔS + ω > 0`. Preserves 2-Lipschitz surfaces.
    Lipschitz2,
    /// `1[a + b + ω > 0]`, for `d = 2` only.
    SoftLaplacian,
    /// `1[ΔS + ω > threshold]`.
    LaplacianThreshold { threshold: T },
    /// Monotone threshold table over clamped gradients.
    GeneralMonotone(MonotoneTable<T>),
    /// Arbitrary monotone predicate, audited at construction.
    #[serde(skip)]
    Predicate(MonotonePredicate<T>),
}

impl<T: Scalar> UpdateRule<T> {
    /// Checks that the rule makes sense for ambient dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let arity = 2 * (d - 1);
        match self {
            UpdateRule::SoftLaplacian if d != 2 => usage(format!("the soft rule needs d = 2, got d = {d}")),
            UpdateRule::LaplacianThreshold { threshold } if threshold.is_nan() => usage("threshold is NaN"),
            UpdateRule::GeneralMonotone(t) if t.arity != arity => Err(Error::DimensionMismatch {
                expected: arity,
                got: t.arity,
            }),
            UpdateRule::Predicate(p) if p.arity != arity => Err(Error::DimensionMismatch {
                expected: arity,
                got: p.arity,
            }),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Lipschitz2 => "lipschitz2",
            UpdateRule::SoftLaplacian => "soft-laplacian",
            UpdateRule::LaplacianThreshold { .. } => "laplacian-threshold",
            UpdateRule::GeneralMonotone(_) => "general-monotone",
            UpdateRule::Predicate(_) => "predicate",
        }
    }

    /// `F` on extended arguments.
    pub fn apply(&self, gradients: &[Height], omega: SiteEnergy<T>) -> u8 {
        let mut g = [0i64; 8];
        let n = gradients.len();
        for (k, h) in gradients.iter().enumerate() {
            match h.finite() {
                Some(v) => g[k] = v,
                None => return 0,
            }
        }
        u8::from(self.decide(&g[..n], || omega))
    }

    /// `F` on finite gradients; the energy is requested only when needed and
    /// a `-∞` energy always yields `false`.
    #[inline]
    pub(crate) fn decide(&self, g: &[i64], omega: impl FnOnce() -> SiteEnergy<T>) -> bool {
        match self {
            UpdateRule::Lipschitz2 => {
                if g.iter().any(|&a| a <= -2) {
                    return false;
                }
                let w = omega();
                if w.is_neg_inf() {
                    return false;
                }
                g.iter().any(|&a| a >= 2) || T::of(g.iter().sum::<i64>() as f64) + w.raw() > T::zero()
            }
            UpdateRule::SoftLaplacian => {
                let w = omega();
                !w.is_neg_inf() && T::of((g[0] + g[1]) as f64) + w.raw() > T::zero()
            }
            UpdateRule::LaplacianThreshold { threshold } => {
                let w = omega();
                !w.is_neg_inf() && T::of(g.iter().sum::<i64>() as f64) + w.raw() > *threshold
            }
            UpdateRule::GeneralMonotone(t) => {
                let w = omega();
                !w.is_neg_inf() && w.raw() > t.threshold(g)
            }
            UpdateRule::Predicate(p) => {
                let w = omega();
                !w.is_neg_inf() && (p.f)(g, w.raw())
            }
        }
    }
}

/// `F` of the 2-Lipschitz model on extended arguments.
pub fn rule_lipschitz<T: Scalar>(gradients: &[Height], omega: SiteEnergy<T>) -> u8 {
    UpdateRule::<T>::Lipschitz2.apply(gradients, omega)
}

/// `F(a, b, ω) = 1[a + b + ω > 0]`; only defined for `d = 2`.
pub fn rule_soft<T: Scalar>(d: usize, a: Height, b: Height, omega: SiteEnergy<T>) -> Result<u8> {
    if d != 2 {
        return usage(format!("the soft rule needs d = 2, got d = {d}"));
    }
    Ok(UpdateRule::<T>::SoftLaplacian.apply(&[a, b], omega))
}

/// `F(a, ω) = 1[ω > τ(clamp(a))]` with `τ` non-increasing in every coordinate.
///
/// Gradients are clamped to `[-K, K]`, so the table has `(2K+1)^arity` cells.
/// Cells are indexed with the first gradient as the most significant digit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTable<T> {
    arity: usize,
    clamp: i64,
    thresholds: Vec<T>,
}

impl<T: Scalar> MonotoneTable<T> {
    pub fn new(arity: usize, clamp: i64, thresholds: Vec<T>) -> Result<Self> {
        if arity == 0 || clamp < 0 {
            return usage("table needs arity >= 1 and clamp >= 0");
        }
        let cells = (2 * clamp as usize + 1).checked_pow(arity as u32).filter(|&c| c <= 1 << 24);
        if cells != Some(thresholds.len()) {
            return usage(format!("table for arity {arity}, clamp {clamp} has the wrong number of cells"));
        }
        if thresholds.iter().any(|t| t.is_nan()) {
            return usage("table thresholds must not be NaN");
        }
        let table = MonotoneTable {
            arity,
            clamp,
            thresholds,
        };
        if let Some((cell, axis)) = table.first_violation() {
            return usage(format!("threshold increases along gradient {axis} at cell {cell}"));
        }
        Ok(table)
    }

    /// Random monotone table: i.i.d. uniforms on `[lo, hi]` replaced by their
    /// running maximum over the upper orthant, `τ(a) = max_{b >= a} r(b)`.
    pub fn random<R: Rng + ?Sized>(arity: usize, clamp: i64, lo: T, hi: T, rng: &mut R) -> Result<Self> {
        let side = 2 * clamp as usize + 1;
        let cells = side.pow(arity as u32);
        let (lo, hi) = (lo.as_f64(), hi.as_f64());
        let mut t: Vec<T> = (0..cells).map(|_| T::of(rng.gen_range(lo..=hi))).collect();
        let mut stride = 1usize;
        for _ in 0..arity {
            // last digit first; suffix maximum along this axis
            for cell in (0..cells).rev() {
                let digit = (cell / stride) % side;
                if digit + 1 < side {
                    let up = t[cell + stride];
                    if up > t[cell] {
                        t[cell] = up;
                    }
                }
            }
            stride *= side;
        }
        MonotoneTable::new(arity, clamp, t)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn clamp(&self) -> i64 {
        self.clamp
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    #[inline]
    fn cell(&self, g: &[i64]) -> usize {
        let side = 2 * self.clamp + 1;
        g.iter()
            .fold(0i64, |acc, &a| acc * side + a.clamp(-self.clamp, self.clamp) + self.clamp) as usize
    }

    #[inline]
    pub fn threshold(&self, g: &[i64]) -> T {
        self.thresholds[self.cell(g)]
    }

    fn first_violation(&self) -> Option<(usize, usize)> {
        let side = (2 * self.clamp + 1) as usize;
        for cell in 0..self.thresholds.len() {
            let mut stride = 1;
            for axis in (0..self.arity).rev() {
                if (cell / stride) % side + 1 < side && self.thresholds[cell + stride] > self.thresholds[cell] {
                    return Some((cell, axis));
                }
                stride *= side;
            }
        }
        None
    }
}

type PredicateFn<T> = dyn Fn(&[i64], T) -> bool + Send + Sync;

/// A user-supplied update predicate over finite gradients and energy.
#[derive(Clone)]
pub struct MonotonePredicate<T> {
    arity: usize,
    f: Arc<PredicateFn<T>>,
}

impl<T> fmt::Debug for MonotonePredicate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotonePredicate").field("arity", &self.arity).finish_non_exhaustive()
    }
}

impl<T> PartialEq for MonotonePredicate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.arity == other.arity && Arc::ptr_eq(&self.f, &other.f)
    }
}

impl<T: Scalar> MonotonePredicate<T> {
    /// Wraps `f` after a randomized monotonicity audit of `trials` pairs with
    /// gradients in `[-4, 4]` and energies in `[-8, 8]`.
    pub fn audited<R: Rng + ?Sized>(
        arity: usize,
        f: impl Fn(&[i64], T) -> bool + Send + Sync + 'static,
        trials: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let p = MonotonePredicate { arity, f: Arc::new(f) };
        if let Some(report) = audit_monotone(&UpdateRule::Predicate(p.clone()), arity, trials, rng) {
            return Err(Error::Refused(format!("predicate is not monotone: {report}")));
        }
        Ok(p)
    }
}

/// Randomized check of `F(a, ω) <= F(a', ω')` for `a <= a'`, `ω <= ω'`.
/// Returns a description of the first violating pair.
pub fn audit_monotone<T: Scalar, R: Rng + ?Sized>(
    rule: &UpdateRule<T>,
    arity: usize,
    trials: usize,
    rng: &mut R,
) -> Option<String> {
    let mut lo = vec![0i64; arity];
    let mut hi = vec![0i64; arity];
    for _ in 0..trials {
        for k in 0..arity {
            lo[k] = rng.gen_range(-4..=4);
            hi[k] = lo[k] + rng.gen_range(0..=2);
        }
        let w_lo = T::of(rng.gen_range(-8.0..=8.0));
        let w_hi = w_lo + T::of(rng.gen_range(0.0..=2.0));
        let a = rule.decide(&lo, || SiteEnergy::new(w_lo));
        let b = rule.decide(&hi, || SiteEnergy::new(w_hi));
        if a && !b {
            return Some(format!("F({lo:?}, {w_lo}) = 1 > F({hi:?}, {w_hi}) = 0"));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::generator;

    fn h(v: &[i64]) -> Vec<Height> {
        v.iter().map(|&x| Height::new(x)).collect()
    }

    #[test]
    fn lipschitz_examples() {
        assert_eq!(rule_lipschitz(&h(&[2, 0]), SiteEnergy::new(-3.0)), 1);
        assert_eq!(rule_lipschitz(&h(&[-2, 1]), SiteEnergy::new(100.0)), 0);
        assert_eq!(rule_lipschitz(&h(&[1, 0]), SiteEnergy::new(0.5)), 1);
        assert_eq!(rule_lipschitz(&h(&[0, 0]), SiteEnergy::new(-3.0)), 0);
        assert_eq!(rule_lipschitz(&h(&[2, 0]), SiteEnergy::<f64>::neg_inf()), 0);
        assert_eq!(rule_lipschitz(&[Height::NEG_INF, Height::new(2)], SiteEnergy::new(5.0)), 0);
    }

    #[test]
    fn soft_examples() {
        let one = Height::new(1);
        let zero = Height::new(0);
        assert_eq!(rule_soft(2, one, one, SiteEnergy::new(-1.5)).unwrap(), 1);
        assert_eq!(rule_soft(2, zero, zero, SiteEnergy::new(0.0)).unwrap(), 0);
        assert_eq!(rule_soft(2, one, one, SiteEnergy::<f64>::neg_inf()).unwrap(), 0);
        assert!(rule_soft(3, one, one, SiteEnergy::new(0.0)).is_err());
    }

    #[test]
    fn random_tables_are_monotone() {
        let mut rng = generator(3);
        for arity in [2, 4] {
            let t = MonotoneTable::<f64>::random(arity, 2, -3.0, 3.0, &mut rng).unwrap();
            let rule = UpdateRule::GeneralMonotone(t);
            assert!(audit_monotone(&rule, arity, 20_000, &mut rng).is_none());
        }
    }

    #[test]
    fn non_monotone_table_rejected() {
        // arity 1, clamp 1: cells for a = -1, 0, 1
        assert!(MonotoneTable::new(1, 1, vec![1.0, 0.0, 0.5]).is_err());
        assert!(MonotoneTable::new(1, 1, vec![1.0, 0.5, 0.5]).is_ok());
    }

    #[test]
    fn audit_catches_decreasing_predicate() {
        let mut rng = generator(9);
        let bad = MonotonePredicate::<f64>::audited(2, |g, w| g[0] as f64 + w < 0.0, 10_000, &mut rng);
        assert!(bad.is_err());
        let good = MonotonePredicate::<f64>::audited(2, |g, w| (g[0] + g[1]) as f64 + w > 1.0, 10_000, &mut rng);
        assert!(good.is_ok());
    }

    #[test]
    fn built_in_rules_pass_audit() {
        let mut rng = generator(1);
        for rule in [
            UpdateRule::Lipschitz2,
            UpdateRule::SoftLaplacian,
            UpdateRule::LaplacianThreshold { threshold: 0.5 },
        ] {
            assert!(audit_monotone::<f64, _>(&rule, 2, 50_000, &mut rng).is_none(), "{}", rule.name());
        }
        assert!(audit_monotone::<f64, _>(&UpdateRule::Lipschitz2, 4, 50_000, &mut rng).is_none());
    }

    #[test]
    fn validate_checks_dimension() {
        assert!(UpdateRule::<f64>::SoftLaplacian.validate(3).is_err());
        let t = MonotoneTable::<f64>::random(2, 1, 0.0, 1.0, &mut generator(0)).unwrap();
        assert!(UpdateRule::GeneralMonotone(t.clone()).validate(2).is_ok());
        assert!(UpdateRule::GeneralMonotone(t).validate(3).is_err());
    }
}
