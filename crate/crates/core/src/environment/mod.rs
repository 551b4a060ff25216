//! Random energy landscapes on `Z^d`.
//!
//! Landscapes are never materialised: the energy at a site is recomputed on
//! demand from a counter-based hash of `(seed, site)`. Restricting a landscape
//! to a box sends every exterior site to `-∞`.

mod mixing;

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

pub use mixing::{
    estimate_mixing, estimate_mixing_with, CovariancePoint, CovarianceReport, MixingOptions, ProductGapPoint,
    TestFunction,
};

use crate::error::{Error, Result};
use crate::lattice::{LatticeBox, MAX_DIM};
use crate::rng::{self, site_hash};
use crate::scalar::Scalar;

const STREAM_UNIFORM: u64 = 0;
const STREAM_NORMAL_A: u64 = 1;
const STREAM_NORMAL_B: u64 = 2;

/// Energy of a site: a finite real or the bottom element `-∞`.
///
/// Arithmetic is absorbing at `-∞`, which the underlying IEEE negative
/// infinity already provides for sums with finite values.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct SiteEnergy<T>(T);

impl SiteEnergy<f64> {
    pub const NEG_INF: Self = SiteEnergy(f64::NEG_INFINITY);
}

impl SiteEnergy<f32> {
    pub const NEG_INF: Self = SiteEnergy(f32::NEG_INFINITY);
}

impl<T: Scalar> SiteEnergy<T> {
    #[inline]
    pub fn neg_inf() -> Self {
        SiteEnergy(T::neg_infinity())
    }

    /// A finite energy, or `-∞` when `v` is negative infinity.
    ///
    /// # Panics
    /// On NaN or `+∞`.
    #[inline]
    pub fn new(v: T) -> Self {
        assert!(!v.is_nan() && v != T::infinity(), "site energies are finite or -∞");
        SiteEnergy(v)
    }

    #[inline]
    pub fn is_neg_inf(self) -> bool {
        self.0 == T::neg_infinity()
    }

    #[inline]
    pub fn value(self) -> Option<T> {
        if self.is_neg_inf() {
            None
        } else {
            Some(self.0)
        }
    }

    /// Underlying scalar; negative infinity for `-∞`.
    #[inline]
    pub fn raw(self) -> T {
        self.0
    }

    #[inline]
    pub fn plus(self, x: T) -> Self {
        SiteEnergy(self.0 + x)
    }
}

// IEEE negative infinity already prints as `-inf`.
impl<T: fmt::Debug> fmt::Debug for SiteEnergy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl<T: Scalar + Serialize> Serialize for SiteEnergy<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.value() {
            Some(v) => v.serialize(s),
            None => s.serialize_str("-inf"),
        }
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for SiteEnergy<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr<T> {
            Finite(T),
            Tag(String),
        }
        match Repr::<T>::deserialize(d)? {
            Repr::Finite(v) if v.is_finite() => Ok(SiteEnergy(v)),
            Repr::Tag(t) if t == "-inf" => Ok(SiteEnergy::neg_inf()),
            _ => Err(de::Error::custom("expected a finite number or \"-inf\"")),
        }
    }
}

/// Law of the environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "law",
    rename_all = "kebab-case",
    bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>")
)]
pub enum LawSpec<T> {
    /// Independent sites equal to `trap` with probability `p`, else `free`.
    ///
    /// The indicator is `u < p` for a per-site uniform `u`, so fields sharing
    /// a seed are coupled monotonically in `p`.
    BernoulliTrap { p: T, trap: T, free: T },
    /// Independent Gaussians `mean + sqrt(variance) · z`; `z` is shared
    /// across laws with the same seed.
    Gaussian { mean: T, variance: T },
    /// Average of `base` over the cube `site + {0..=window}^d`. Sites at L∞
    /// distance greater than `window` are independent.
    MovingAverage { window: u32, base: Box<LawSpec<T>> },
    /// Deterministic landscape.
    Constant { value: SiteEnergy<T> },
}

impl<T: Scalar> LawSpec<T> {
    /// Trap law with the default depths `trap = -3(d-1)` and `free = 1/2`.
    pub fn bernoulli(p: T, d: usize) -> Self {
        LawSpec::BernoulliTrap {
            p,
            trap: T::of(-3.0 * (d as f64 - 1.0)),
            free: T::of(0.5),
        }
    }

    pub fn gaussian(mean: T, variance: T) -> Self {
        LawSpec::Gaussian { mean, variance }
    }

    pub fn moving_average(window: u32, base: LawSpec<T>) -> Self {
        LawSpec::MovingAverage {
            window,
            base: Box::new(base),
        }
    }

    pub fn constant(value: T) -> Self {
        LawSpec::Constant {
            value: SiteEnergy::new(value),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LawSpec::BernoulliTrap { p, trap, free } => {
                if !(*p >= T::zero() && *p <= T::one()) {
                    return Err(Error::Usage(format!("trap probability {p} outside [0, 1]")));
                }
                if !free.is_finite() || trap.is_nan() || *trap == T::infinity() {
                    return Err(Error::Usage("trap energies must be finite (trap may be -inf)".into()));
                }
                Ok(())
            }
            LawSpec::Gaussian { mean, variance } => {
                if !mean.is_finite() || !variance.is_finite() || *variance < T::zero() {
                    return Err(Error::Usage("gaussian needs finite mean and variance >= 0".into()));
                }
                Ok(())
            }
            LawSpec::MovingAverage { base, .. } => base.validate(),
            LawSpec::Constant { .. } => Ok(()),
        }
    }

    /// Mean of a single site, `None` when it is `-∞` with positive probability.
    pub fn mean(&self) -> Option<T> {
        match self {
            LawSpec::BernoulliTrap { p, trap, free } => {
                if trap.is_infinite() && *p > T::zero() {
                    None
                } else if *p == T::zero() {
                    Some(*free)
                } else {
                    Some(*p * *trap + (T::one() - *p) * *free)
                }
            }
            LawSpec::Gaussian { mean, .. } => Some(*mean),
            LawSpec::MovingAverage { base, .. } => base.mean(),
            LawSpec::Constant { value } => value.value(),
        }
    }

    /// Variance of a single site in dimension `d`.
    pub fn variance(&self, d: usize) -> Option<T> {
        match self {
            LawSpec::BernoulliTrap { p, trap, free } => {
                let gap = *trap - *free;
                Some(*p * (T::one() - *p) * gap * gap).filter(|v| v.is_finite())
            }
            LawSpec::Gaussian { variance, .. } => Some(*variance),
            LawSpec::MovingAverage { window, base } => {
                let cells = T::of(f64::from(window + 1).powi(d as i32));
                base.variance(d).map(|v| v / cells)
            }
            LawSpec::Constant { value } => value.value().map(|_| T::zero()),
        }
    }

    /// Trap depth, for Bernoulli laws.
    pub fn trap(&self) -> Option<T> {
        match self {
            LawSpec::BernoulliTrap { trap, .. } => Some(*trap),
            _ => None,
        }
    }

    /// Energy at `coords` (all `d` coordinates) for a given seed.
    pub(crate) fn value_at(&self, seed: u64, coords: &[i64]) -> SiteEnergy<T> {
        let (height, base) = coords.split_last().expect("non-empty site");
        match self {
            LawSpec::BernoulliTrap { p, trap, free } => {
                let u = rng::unit(site_hash(seed, STREAM_UNIFORM, base, *height));
                if u < p.as_f64() {
                    SiteEnergy(*trap)
                } else {
                    SiteEnergy(*free)
                }
            }
            LawSpec::Gaussian { mean, variance } => {
                let z = rng::standard_normal(
                    site_hash(seed, STREAM_NORMAL_A, base, *height),
                    site_hash(seed, STREAM_NORMAL_B, base, *height),
                );
                SiteEnergy(*mean + variance.sqrt() * T::of(z))
            }
            LawSpec::MovingAverage { window, base: inner } => {
                let d = coords.len();
                let w = i64::from(*window);
                let mut offset = [0i64; MAX_DIM];
                let mut shifted = [0i64; MAX_DIM];
                let mut sum = T::zero();
                let mut count = 0u64;
                loop {
                    for k in 0..d {
                        shifted[k] = coords[k] + offset[k];
                    }
                    let v = inner.value_at(seed, &shifted[..d]);
                    if v.is_neg_inf() {
                        return v;
                    }
                    sum = sum + v.raw();
                    count += 1;
                    // odometer over {0..=w}^d
                    let mut k = 0;
                    while k < d {
                        offset[k] += 1;
                        if offset[k] <= w {
                            break;
                        }
                        offset[k] = 0;
                        k += 1;
                    }
                    if k == d {
                        break;
                    }
                }
                SiteEnergy(sum / T::of(count as f64))
            }
            LawSpec::Constant { value } => *value,
        }
    }
}

/// Anything that assigns an energy to the sites of `Z^d`.
///
/// Sites are passed split as a base point in `Z^{d-1}` and a height, which is
/// how the dynamics query them.
pub trait Environment<T: Scalar>: Sync {
    fn dim(&self) -> usize;
    fn energy(&self, base: &[i64], height: i64) -> SiteEnergy<T>;
}

impl<T: Scalar, E: Environment<T> + ?Sized> Environment<T> for &E {
    #[inline]
    fn dim(&self) -> usize {
        (**self).dim()
    }

    #[inline]
    fn energy(&self, base: &[i64], height: i64) -> SiteEnergy<T> {
        (**self).energy(base, height)
    }
}

/// A reproducible random landscape, possibly restricted to a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct EnergyField<T> {
    dim: usize,
    law: LawSpec<T>,
    seed: u64,
    restriction: Option<LatticeBox>,
}

impl<T: Scalar> EnergyField<T> {
    pub fn new(dim: usize, law: LawSpec<T>, seed: u64) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        law.validate()?;
        Ok(EnergyField {
            dim,
            law,
            seed,
            restriction: None,
        })
    }

    pub fn law(&self) -> &LawSpec<T> {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn restriction(&self) -> Option<&LatticeBox> {
        self.restriction.as_ref()
    }

    /// Same law and restriction under another seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        EnergyField {
            seed,
            ..self.clone()
        }
    }

    /// Same seed and restriction under another law.
    pub fn with_law(&self, law: LawSpec<T>) -> Result<Self> {
        law.validate()?;
        Ok(EnergyField { law, ..self.clone() })
    }

    /// The field with every site outside `bx` sent to `-∞`.
    ///
    /// Restrictions compose by intersection.
    pub fn restrict(&self, bx: &LatticeBox) -> Result<Self> {
        if bx.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: bx.dim(),
            });
        }
        let restriction = match &self.restriction {
            Some(r) => r.intersect(bx)?,
            None => bx.clone(),
        };
        Ok(EnergyField {
            restriction: Some(restriction),
            ..self.clone()
        })
    }

    /// Energy at a site of `Z^d`.
    pub fn sample_energy(&self, site: &[i64]) -> Result<SiteEnergy<T>> {
        if site.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: site.len(),
            });
        }
        if let Some(r) = &self.restriction {
            if !r.contains(site) {
                return Ok(SiteEnergy::neg_inf());
            }
        }
        Ok(self.law.value_at(self.seed, site))
    }
}

impl<T: Scalar> Environment<T> for EnergyField<T> {
    #[inline]
    fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn energy(&self, base: &[i64], height: i64) -> SiteEnergy<T> {
        if let Some(r) = &self.restriction {
            if !r.contains_split(base, height) {
                return SiteEnergy::neg_inf();
            }
        }
        let n = base.len();
        let mut coords = [0i64; MAX_DIM];
        coords[..n].copy_from_slice(base);
        coords[n] = height;
        self.law.value_at(self.seed, &coords[..=n])
    }
}

/// View of an environment with everything outside `bounds` sent to `-∞`.
#[derive(Clone, Debug)]
pub struct Restricted<E> {
    inner: E,
    bounds: LatticeBox,
}

impl<E> Restricted<E> {
    pub fn new(inner: E, bounds: LatticeBox) -> Self {
        Restricted { inner, bounds }
    }

    pub fn bounds(&self) -> &LatticeBox {
        &self.bounds
    }
}

impl<T: Scalar, E: Environment<T>> Environment<T> for Restricted<E> {
    #[inline]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[inline]
    fn energy(&self, base: &[i64], height: i64) -> SiteEnergy<T> {
        if self.bounds.contains_split(base, height) {
            self.inner.energy(base, height)
        } else {
            SiteEnergy::neg_inf()
        }
    }
}

/// Explicit energies on a box, `-∞` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct GridEnvironment<T> {
    bounds: LatticeBox,
    values: Vec<SiteEnergy<T>>,
}

impl<T: Scalar> GridEnvironment<T> {
    pub fn filled(bounds: LatticeBox, value: T) -> Self {
        let n = bounds.volume() as usize;
        GridEnvironment {
            bounds,
            values: vec![SiteEnergy::new(value); n],
        }
    }

    pub fn from_fn(bounds: LatticeBox, mut f: impl FnMut(&[i64]) -> SiteEnergy<T>) -> Self {
        let values = bounds.points().map(|p| f(&p)).collect();
        GridEnvironment { bounds, values }
    }

    /// Copies `env` on `bounds`.
    pub fn capture(env: &impl Environment<T>, bounds: LatticeBox) -> Self {
        Self::from_fn(bounds, |p| {
            let (h, b) = p.split_last().expect("non-empty");
            env.energy(b, *h)
        })
    }

    pub fn bounds(&self) -> &LatticeBox {
        &self.bounds
    }

    pub fn values_mut(&mut self) -> &mut [SiteEnergy<T>] {
        &mut self.values
    }

    pub fn set(&mut self, site: &[i64], value: SiteEnergy<T>) -> Result<()> {
        let i = self
            .bounds
            .index_of(site)
            .ok_or_else(|| Error::Usage(format!("site {site:?} outside grid")))?;
        self.values[i] = value;
        Ok(())
    }
}

impl<T: Scalar> Environment<T> for GridEnvironment<T> {
    #[inline]
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    #[inline]
    fn energy(&self, base: &[i64], height: i64) -> SiteEnergy<T> {
        let n = base.len();
        let mut coords = [0i64; MAX_DIM];
        coords[..n].copy_from_slice(base);
        coords[n] = height;
        match self.bounds.index_of(&coords[..=n]) {
            Some(i) => self.values[i],
            None => SiteEnergy::neg_inf(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(law: LawSpec<f64>) -> EnergyField<f64> {
        EnergyField::new(2, law, 1234).unwrap()
    }

    #[test]
    fn restricted_exterior_is_neg_inf() {
        let f = field(LawSpec::gaussian(0.0, 1.0));
        let c = LatticeBox::cube(&[0, 0], 4);
        let r = f.restrict(&c).unwrap();
        assert!(r.sample_energy(&[4, 0]).unwrap().is_neg_inf());
        assert!(r.sample_energy(&[-1, 2]).unwrap().is_neg_inf());
        assert_eq!(r.sample_energy(&[3, 3]).unwrap(), f.sample_energy(&[3, 3]).unwrap());
    }

    #[test]
    fn bernoulli_takes_two_values() {
        let f = field(LawSpec::bernoulli(0.3, 2));
        let mut traps = 0;
        for x in 0..100 {
            for z in 0..100 {
                let v = f.sample_energy(&[x, z]).unwrap().raw();
                assert!(v == -3.0 || v == 0.5);
                traps += usize::from(v == -3.0);
            }
        }
        let sd = (0.3 * 0.7 * 1e4f64).sqrt();
        assert!((traps as f64 - 3000.0).abs() < 4.0 * sd);
    }

    #[test]
    fn sampling_is_pure() {
        let f = field(LawSpec::moving_average(2, LawSpec::gaussian(1.0, 2.0)));
        let a = f.sample_energy(&[17, -3]).unwrap();
        let b = f.sample_energy(&[17, -3]).unwrap();
        assert_eq!(a.raw().to_bits(), b.raw().to_bits());
        assert_eq!(f.energy(&[17], -3).raw().to_bits(), a.raw().to_bits());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = field(LawSpec::gaussian(0.0, 1.0));
        assert_eq!(
            f.sample_energy(&[1, 2, 3]),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        );
        assert!(f.restrict(&LatticeBox::cube(&[0, 0, 0], 2)).is_err());
    }

    #[test]
    fn nested_restriction_is_intersection() {
        let f = field(LawSpec::gaussian(0.0, 1.0));
        let outer = LatticeBox::cube(&[0, 0], 10);
        let inner = LatticeBox::cube(&[2, 2], 3);
        let twice = f.restrict(&outer).unwrap().restrict(&inner).unwrap();
        let once = f.restrict(&inner).unwrap();
        for x in -1..12 {
            for z in -1..12 {
                assert_eq!(twice.sample_energy(&[x, z]), once.sample_energy(&[x, z]));
            }
        }
    }

    #[test]
    fn moving_average_matches_direct_average() {
        let base = LawSpec::gaussian(0.0, 1.0);
        let f = field(LawSpec::moving_average(1, base.clone()));
        let g = field(base);
        let direct = (0..2)
            .flat_map(|dx| (0..2).map(move |dz| (dx, dz)))
            .map(|(dx, dz)| g.sample_energy(&[5 + dx, 7 + dz]).unwrap().raw())
            .sum::<f64>()
            / 4.0;
        assert!((f.sample_energy(&[5, 7]).unwrap().raw() - direct).abs() < 1e-12);
    }

    #[test]
    fn gaussian_coupling_is_monotone_in_mean() {
        let lo = field(LawSpec::gaussian(1.0, 1.0));
        let hi = field(LawSpec::gaussian(2.0, 1.0));
        for x in 0..50 {
            assert!(hi.sample_energy(&[x, 0]).unwrap() > lo.sample_energy(&[x, 0]).unwrap());
        }
    }

    #[test]
    fn energy_serialization_round_trips() {
        let vals = vec![SiteEnergy::new(0.1f64), SiteEnergy::<f64>::NEG_INF, SiteEnergy::new(-1e300)];
        let s = serde_json::to_string(&vals).unwrap();
        let back: Vec<SiteEnergy<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].raw().to_bits(), 0.1f64.to_bits());
        assert!(back[1].is_neg_inf());
        assert_eq!(back[2].raw(), -1e300);
    }

    #[test]
    fn law_serialization_round_trips() {
        let law = LawSpec::moving_average(2, LawSpec::bernoulli(0.25f64, 3));
        let s = serde_json::to_string(&law).unwrap();
        assert_eq!(serde_json::from_str::<LawSpec<f64>>(&s).unwrap(), law);
    }

    #[test]
    fn grid_environment_is_neg_inf_outside() {
        let g = GridEnvironment::filled(LatticeBox::cube(&[0, 0], 2), 1.0f64);
        assert_eq!(g.energy(&[1], 1).raw(), 1.0);
        assert!(g.energy(&[2], 1).is_neg_inf());
    }
}
