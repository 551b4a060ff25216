use serde::{Deserialize, Serialize};

use super::BoxSpec;
use crate::dynamics::{step, Surface, UpdateRule};
use crate::environment::{EnergyField, Environment, Restricted};
use crate::error::{usage, Result};
use crate::lattice::Height;
use crate::scalar::Scalar;

/// Shape of a blocked `d = 2` surface around its lowest point over the B-base.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// Lowest point of `[hL, 2hL]` with `S(x0) <= L` (leftmost on ties).
    pub x0: Option<i64>,
    /// `x0 + [-L, L]` clipped to the base, inclusive.
    pub window: Option<(i64, i64)>,
    /// `S <= 3L` on the window.
    pub below_3l: bool,
    /// `|S(x+1) - S(x)| <= 1` on the window.
    pub one_lipschitz: bool,
    /// Leftmost `x` in the window with `|S(x+1) - S(x)| >= 2`.
    pub first_steep: Option<i64>,
    /// Window sites whose graph point is a trap.
    pub traps_on_graph: usize,
    /// Longest run of consecutive window sites whose graph point is not a trap.
    pub max_trap_free_run: usize,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.x0.is_some() && self.below_3l && self.one_lipschitz
    }
}

/// Checks a blocked Lipschitz surface for the shape a blocking surface must
/// have in `d = 2`.
pub fn structure_checks_d2<T: Scalar>(blocked: &Surface, field: &EnergyField<T>, spec: &BoxSpec) -> Result<StructureReport> {
    if spec.d != 2 || field.dim() != 2 {
        return usage("structure checks are for d = 2");
    }
    let Some(trap) = field.law().trap() else {
        return usage("structure checks need a Bernoulli trap law");
    };
    let g = spec.geometry();
    if blocked.base() != &g.c_base() {
        return usage("surface must live on the C-base");
    }
    let restricted = Restricted::new(field, g.c_box.clone());
    if step(blocked, &restricted, &UpdateRule::Lipschitz2) != *blocked {
        return usage("surface is not a fixed point of the restricted dynamics");
    }
    let s = |x: i64| blocked.height(&[x]);
    let (hl, l) = (spec.h * spec.l, spec.l);
    let x0 = (hl..=2 * hl)
        .filter(|&x| s(x).is_finite() && s(x) <= Height::new(l))
        .min_by_key(|&x| (s(x), x));
    let Some(x0) = x0 else {
        return Ok(StructureReport {
            x0: None,
            window: None,
            below_3l: false,
            one_lipschitz: false,
            first_steep: None,
            traps_on_graph: 0,
            max_trap_free_run: 0,
        });
    };
    let lo = (x0 - l).max(0);
    let hi = (x0 + l).min(3 * hl - 1);
    let below_3l = (lo..=hi).all(|x| s(x) <= Height::new(3 * l));
    let first_steep = (lo..hi).find(|&x| match (s(x).finite(), s(x + 1).finite()) {
        (Some(a), Some(b)) => (b - a).abs() >= 2,
        _ => true,
    });
    let mut traps = 0;
    let mut run = 0;
    let mut best = 0;
    for x in lo..=hi {
        let is_trap = s(x)
            .finite()
            .map(|h| restricted.energy(&[x], h).value() == Some(trap))
            .unwrap_or(false);
        if is_trap {
            traps += 1;
            run = 0;
        } else {
            run += 1;
            best = best.max(run);
        }
    }
    Ok(StructureReport {
        x0: Some(x0),
        window: Some((lo, hi)),
        below_3l,
        one_lipschitz: first_steep.is_none(),
        first_steep,
        traps_on_graph: traps,
        max_trap_free_run: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::platform_surface;
    use crate::environment::LawSpec;

    #[test]
    fn flat_all_trap_surface_passes() {
        let spec = BoxSpec::new(2, 2, 4, 1).unwrap();
        let f = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 0).unwrap();
        let r = structure_checks_d2(&platform_surface(&spec, 0).unwrap(), &f, &spec).unwrap();
        assert!(r.all_pass());
        assert_eq!(r.max_trap_free_run, 0);
        assert_eq!(r.x0, Some(8));
        assert_eq!(r.window, Some((4, 12)));
    }

    #[test]
    fn steep_edge_is_flagged() {
        // pinned by the -∞ exterior at both ends, so a fixed point
        let spec = BoxSpec::new(2, 1, 4, 1).unwrap();
        let f = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 0).unwrap();
        let mut h = vec![Height::new(2); 12];
        h[0] = Height::new(0);
        h[11] = Height::new(0);
        let s = platform_surface(&spec, 0).unwrap().with_heights(h).unwrap();
        let r = structure_checks_d2(&s, &f, &spec).unwrap();
        assert!(!r.one_lipschitz);
        assert_eq!(r.first_steep, Some(0));
    }

    #[test]
    fn moving_surface_is_rejected() {
        let spec = BoxSpec::new(2, 1, 4, 1).unwrap();
        let f = EnergyField::new(2, LawSpec::bernoulli(0.0, 2), 0).unwrap();
        assert!(structure_checks_d2(&platform_surface(&spec, 0).unwrap(), &f, &spec).is_err());
    }
}
