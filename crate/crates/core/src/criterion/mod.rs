//! The finite-size blocking criterion.
//!
//! Inside `C = [0, 3hL)^{d-1} × [0, H_L)`, `H_L = L^{a+1}`, a flat platform
//! at height 0 evolves under the field restricted to `C`. It either rises
//! completely above the inner box `B = [hL, 2hL)^{d-1} × [0, L)` or reaches a
//! fixed point, which is then a blocking surface.

mod estimate;
mod oracle;
mod structure;

pub use estimate::{
    blocking_probability, fit_decay, sample_outcome, BlockingEstimate, DecayFit, DecayPoint,
};
pub use oracle::{brute_force_blocking_probability, BlockingPolynomial, OracleResult, ORACLE_MAX_SITES};
pub use structure::{structure_checks_d2, StructureReport};

use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_until, step, Boundary, EvolveOptions, StopReason, Surface, UpdateRule};
use crate::environment::{Environment, Restricted};
use crate::error::{usage, Error, Result};
use crate::lattice::{Height, LatticeBox, MAX_DIM};
use crate::scalar::Scalar;

/// Scale parameters of the criterion boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxSpec {
    pub d: usize,
    pub h: i64,
    pub l: i64,
    pub a: u32,
}

impl BoxSpec {
    pub fn new(d: usize, h: i64, l: i64, a: u32) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::UnsupportedDimension(d));
        }
        if h < 1 || l < 1 || a < 1 {
            return usage("box spec needs h, L, a >= 1");
        }
        let spec = BoxSpec { d, h, l, a };
        let ok = l
            .checked_pow(a + 1)
            .and_then(|hl| (3 * h * l).checked_pow(d as u32 - 1).and_then(|b| b.checked_mul(hl)));
        if ok.is_none() {
            return usage("box too large");
        }
        Ok(spec)
    }

    /// `H_L = L^{a+1}`.
    pub fn height(&self) -> i64 {
        self.l.pow(self.a + 1)
    }

    /// `C = [0, 3hL)^{d-1} × [0, H_L)`.
    pub fn c_box(&self) -> LatticeBox {
        self.c_base().extend(0, self.height())
    }

    pub fn c_base(&self) -> LatticeBox {
        LatticeBox::cube(&vec![0; self.d - 1], 3 * self.h * self.l)
    }

    /// `B = [hL, 2hL)^{d-1} × [0, L)`.
    pub fn b_box(&self) -> LatticeBox {
        self.b_base().extend(0, self.l)
    }

    pub fn b_base(&self) -> LatticeBox {
        LatticeBox::cube(&vec![self.h * self.l; self.d - 1], self.h * self.l)
    }

    pub fn sites(&self) -> u64 {
        self.c_box().volume()
    }

    /// `(3h)^{d-1} L^{d+a}`: every sweep before a halt raises some site, and
    /// no column can rise above `H_L`.
    pub fn step_bound(&self) -> u64 {
        (3 * self.h as u64).pow(self.d as u32 - 1) * (self.l as u64).pow(self.d as u32 + self.a)
    }

    pub fn geometry(&self) -> BoxGeometry {
        BoxGeometry {
            c_box: self.c_box(),
            b_base: self.b_base(),
            floor: 0,
            b_top: self.l,
        }
    }
}

/// Positioned criterion boxes: the platform starts at `floor` on the base of
/// `c_box`, and crossing means reaching `b_top` everywhere on `b_base`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxGeometry {
    pub c_box: LatticeBox,
    pub b_base: LatticeBox,
    pub floor: i64,
    pub b_top: i64,
}

impl BoxGeometry {
    pub fn dim(&self) -> usize {
        self.c_box.dim()
    }

    pub fn c_base(&self) -> LatticeBox {
        self.c_box.project()
    }

    /// Top of the C-box (exclusive), `floor + H_L` for centred geometries.
    pub fn c_top(&self) -> i64 {
        self.c_box.hi()[self.dim() - 1]
    }

    pub fn step_bound(&self) -> u64 {
        self.c_box.volume()
    }

    /// Flat surface at `level` on the C-base, `-∞` elsewhere.
    pub fn platform(&self, level: i64) -> Surface {
        Surface::flat(self.c_base(), Boundary::NegInf, Height::new(level)).expect("non-empty base")
    }

    fn b_indices(&self, s: &Surface) -> Vec<usize> {
        self.b_base.points().filter_map(|x| s.index_of(&x)).collect()
    }
}

/// Result of the restricted platform dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CrossingOutcome {
    /// Above the B-box at every B-base point after `t` steps.
    Crossed { t: u64 },
    /// Fixed point reached; `halt_time` counts the sweep that detected it.
    Blocked { last: Surface, halt_time: u64 },
    /// Step budget used up without crossing or halting. Cannot happen for a
    /// monotone rule, kept so that violations are reported rather than hidden.
    Exhausted { last: Surface, t: u64 },
}

impl CrossingOutcome {
    pub fn is_blocked(&self) -> bool {
        matches!(self, CrossingOutcome::Blocked { .. })
    }

    /// Crossing time, `None` for blocked or exhausted runs.
    pub fn time(&self) -> Option<u64> {
        match self {
            CrossingOutcome::Crossed { t } => Some(*t),
            _ => None,
        }
    }

    /// Number of sweeps performed.
    pub fn sweeps(&self) -> u64 {
        match self {
            CrossingOutcome::Crossed { t } | CrossingOutcome::Exhausted { t, .. } => *t,
            CrossingOutcome::Blocked { halt_time, .. } => *halt_time,
        }
    }
}

/// Flat surface at `level` on the base of the C-box.
pub fn platform_surface(spec: &BoxSpec, level: i64) -> Result<Surface> {
    if !(0..spec.height()).contains(&level) {
        return usage(format!("platform level {level} outside [0, {})", spec.height()));
    }
    Ok(spec.geometry().platform(level))
}

/// Runs the platform dynamics under `env` restricted to the C-box.
pub fn crossing_time<T: Scalar, E: Environment<T>>(env: &E, rule: &UpdateRule<T>, spec: &BoxSpec) -> Result<CrossingOutcome> {
    if env.dim() != spec.d {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: env.dim(),
        });
    }
    rule.validate(spec.d)?;
    let g = spec.geometry();
    Ok(crossing_in(env, rule, &g, &g.platform(0)))
}

/// [`crossing_time`] on an arbitrary geometry, starting from `platform`.
pub fn crossing_in<T: Scalar, E: Environment<T>>(
    env: &E,
    rule: &UpdateRule<T>,
    g: &BoxGeometry,
    platform: &Surface,
) -> CrossingOutcome {
    let restricted = Restricted::new(env, g.c_box.clone());
    let b = g.b_indices(platform);
    let top = g.b_top;
    let crossed = |_: u64, s: &Surface| {
        let h = s.heights();
        b.iter().all(|&i| h[i] >= Height::new(top))
    };
    let tr = evolve_until(platform.clone(), &restricted, rule, crossed, EvolveOptions::new(g.step_bound() + 1));
    match tr.reason {
        StopReason::Stopped => CrossingOutcome::Crossed { t: tr.time },
        StopReason::Halted => CrossingOutcome::Blocked {
            last: tr.last,
            halt_time: tr.time,
        },
        StopReason::TimeLimit => CrossingOutcome::Exhausted {
            last: tr.last,
            t: tr.time,
        },
    }
}

/// Whether `surface` blocks the C-box: its graph meets the B-box, it is
/// non-negative, and every site at height `<= H_L` is obstructed under the
/// restricted field.
pub fn is_blocking<T: Scalar, E: Environment<T>>(
    surface: &Surface,
    env: &E,
    rule: &UpdateRule<T>,
    spec: &BoxSpec,
) -> Result<bool> {
    let g = spec.geometry();
    if surface.base() != &g.c_base() || surface.boundary() != Boundary::NegInf {
        return usage("surface must live on the C-base with a -∞ exterior");
    }
    rule.validate(spec.d)?;
    Ok(blocks_geometry(surface, env, rule, &g))
}

pub(crate) fn blocks_geometry<T: Scalar, E: Environment<T>>(
    surface: &Surface,
    env: &E,
    rule: &UpdateRule<T>,
    g: &BoxGeometry,
) -> bool {
    let h = surface.heights();
    let meets = g.b_base.points().any(|x| {
        let s = surface.height(&x);
        s >= Height::new(g.floor) && s < Height::new(g.b_top)
    });
    if !meets || h.iter().any(|&s| s < Height::new(g.floor)) {
        return false;
    }
    let next = step(surface, &Restricted::new(env, g.c_box.clone()), rule);
    h.iter()
        .zip(next.heights())
        .all(|(&s, &n)| s > Height::new(g.c_top()) || s == n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnergyField, GridEnvironment, LawSpec};

    fn spec() -> BoxSpec {
        BoxSpec::new(2, 2, 4, 1).unwrap()
    }

    #[test]
    fn box_geometry() {
        let s = spec();
        assert_eq!(s.height(), 16);
        assert_eq!(s.c_box(), LatticeBox::new(vec![0, 0], vec![24, 16]).unwrap());
        assert_eq!(s.b_box(), LatticeBox::new(vec![8, 0], vec![16, 4]).unwrap());
        assert_eq!(BoxSpec::new(2, 2, 8, 1).unwrap().step_bound(), 3072);
    }

    #[test]
    fn platform_is_neg_inf_off_base() {
        let p = platform_surface(&spec(), 0).unwrap();
        assert_eq!(p.height(&[0]), Height::new(0));
        assert_eq!(p.height(&[24]), Height::NEG_INF);
        assert_eq!(p.height(&[-1]), Height::NEG_INF);
        assert!(platform_surface(&spec(), 16).is_err());
    }

    #[test]
    fn positive_field_crosses_in_l_steps() {
        let s = spec();
        let f = EnergyField::new(2, LawSpec::constant(1000.0), 0).unwrap();
        for rule in [UpdateRule::Lipschitz2, UpdateRule::SoftLaplacian] {
            assert_eq!(crossing_time(&f, &rule, &s).unwrap(), CrossingOutcome::Crossed { t: 4 });
        }
    }

    #[test]
    fn all_traps_block_at_once() {
        let s = spec();
        let f = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 5).unwrap();
        match crossing_time(&f, &UpdateRule::Lipschitz2, &s).unwrap() {
            CrossingOutcome::Blocked { last, halt_time } => {
                assert_eq!(halt_time, 1);
                assert_eq!(last, platform_surface(&s, 0).unwrap());
                assert!(is_blocking(&last, &f, &UpdateRule::Lipschitz2, &s).unwrap());
            }
            other => panic!("expected a block, got {other:?}"),
        }
    }

    #[test]
    fn flat_floor_in_positive_field_is_not_blocking() {
        let s = spec();
        let f = EnergyField::new(2, LawSpec::constant(1.0), 0).unwrap();
        let p = platform_surface(&s, 0).unwrap();
        assert!(!is_blocking(&p, &f, &UpdateRule::Lipschitz2, &s).unwrap());
    }

    #[test]
    fn obstructed_surface_above_b_is_not_blocking() {
        let s = spec();
        let f = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 0).unwrap();
        let p = platform_surface(&s, 6).unwrap();
        assert!(!is_blocking(&p, &f, &UpdateRule::Lipschitz2, &s).unwrap());
        let q = platform_surface(&s, 3).unwrap();
        assert!(is_blocking(&q, &f, &UpdateRule::Lipschitz2, &s).unwrap());
    }

    #[test]
    fn outcome_ignores_field_outside_c() {
        let s = spec();
        let law = LawSpec::bernoulli(0.3, 2);
        let f = EnergyField::new(2, law, 77).unwrap();
        let inside = GridEnvironment::capture(&f, s.c_box());
        // a larger grid that differs from the field only outside C
        let big = LatticeBox::new(vec![-5, -5], vec![30, 30]).unwrap();
        let c = s.c_box();
        let mutated = GridEnvironment::from_fn(big, |p| {
            if c.contains(p) {
                inside.energy(&p[..1], p[1])
            } else {
                crate::environment::SiteEnergy::new(1e6)
            }
        });
        let rule = UpdateRule::Lipschitz2;
        assert_eq!(crossing_time(&f, &rule, &s).unwrap(), crossing_time(&mutated, &rule, &s).unwrap());
    }
}
