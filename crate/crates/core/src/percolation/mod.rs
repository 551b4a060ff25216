//! Oriented site percolation behind blocked `d = 2` Lipschitz interfaces.
//!
//! In a 1-Lipschitz blocked stretch no run of non-trap graph sites is longer
//! than two, so the next trap to the right of a trap `(x, y)` sits at one of
//! seven offsets. Blocked interfaces are therefore oriented paths in the
//! graph with those edges.

mod pc;

pub use pc::{
    crossing_threshold, estimate_pc, estimate_pc_with, pc_from_thresholds, sample_seed, CrossingCurve, PairIntersection, PcEstimate,
    PcOptions,
};

use serde::{Deserialize, Serialize};

use crate::dynamics::Surface;
use crate::environment::{EnergyField, Environment, LawSpec};
use crate::error::{usage, Result};
use crate::lattice::LatticeBox;
use crate::scalar::Scalar;

/// The seven oriented offsets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrientedEdgeSet;

impl OrientedEdgeSet {
    pub const OFFSETS: [(i64, i64); 7] = [(1, 1), (2, 1), (3, 0), (2, 0), (1, 0), (2, -1), (1, -1)];

    pub fn offsets(&self) -> &'static [(i64, i64)] {
        &Self::OFFSETS
    }

    pub fn contains(&self, dx: i64, dy: i64) -> bool {
        Self::OFFSETS.contains(&(dx, dy))
    }
}

/// Occupied sites of a planar region.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupiedConfig {
    region: LatticeBox,
    occupied: Vec<bool>,
}

impl OccupiedConfig {
    pub fn empty(region: LatticeBox) -> Result<Self> {
        if region.dim() != 2 {
            return usage("occupied configurations are planar");
        }
        let n = region.volume() as usize;
        Ok(OccupiedConfig {
            region,
            occupied: vec![false; n],
        })
    }

    pub fn from_fn(region: LatticeBox, mut f: impl FnMut(i64, i64) -> bool) -> Result<Self> {
        let mut c = Self::empty(region)?;
        for (i, p) in c.region.points().enumerate() {
            c.occupied[i] = f(p[0], p[1]);
        }
        Ok(c)
    }

    pub fn region(&self) -> &LatticeBox {
        &self.region
    }

    pub fn set(&mut self, x: i64, y: i64, value: bool) -> Result<()> {
        match self.region.index_of(&[x, y]) {
            Some(i) => {
                self.occupied[i] = value;
                Ok(())
            }
            None => usage(format!("site ({x}, {y}) outside the region")),
        }
    }

    #[inline]
    pub fn is_occupied(&self, x: i64, y: i64) -> bool {
        self.region.index_of(&[x, y]).is_some_and(|i| self.occupied[i])
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn sites(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.region
            .points()
            .zip(&self.occupied)
            .filter(|(_, &o)| o)
            .map(|(p, _)| (p[0], p[1]))
    }
}

/// Trap sites of a planar Bernoulli field inside `region`.
pub fn blocked_sites<T: Scalar>(field: &EnergyField<T>, region: &LatticeBox) -> Result<OccupiedConfig> {
    if field.dim() != 2 {
        return usage("blocked sites are defined for d = 2");
    }
    let LawSpec::BernoulliTrap { trap, .. } = field.law() else {
        return usage("blocked sites need a Bernoulli trap law");
    };
    let trap = *trap;
    OccupiedConfig::from_fn(region.clone(), |x, y| field.energy(&[x], y).raw() == trap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachResult {
    pub reached: bool,
    /// Largest `x - x_source` over reachable sites; `None` when no source is
    /// occupied.
    pub max_distance: Option<i64>,
    /// Reachable sites with the largest `x`.
    pub frontier: Vec<(i64, i64)>,
}

/// Oriented reachability along occupied sites from the occupied `sources`.
/// `reached` means some site at horizontal distance `>= distance` from its
/// source is reachable.
pub fn reach(config: &OccupiedConfig, sources: &[(i64, i64)], distance: i64) -> ReachResult {
    let r = &config.region;
    let (x0, y0) = (r.lo()[0], r.lo()[1]);
    let (w, h) = (r.side(0), r.side(1));
    let idx = |x: i64, y: i64| ((x - x0) * h + (y - y0)) as usize;
    // smallest source abscissa reaching each site
    let mut best: Vec<Option<i64>> = vec![None; config.occupied.len()];
    for &(x, y) in sources {
        if config.is_occupied(x, y) {
            let b = &mut best[idx(x, y)];
            *b = Some(b.map_or(x, |v: i64| v.min(x)));
        }
    }
    let mut max_distance = None;
    let mut frontier_x = i64::MIN;
    let mut frontier = Vec::new();
    for x in x0..x0 + w {
        for y in y0..y0 + h {
            let Some(src) = best[idx(x, y)] else { continue };
            let dist = x - src;
            max_distance = Some(max_distance.map_or(dist, |m: i64| m.max(dist)));
            if x > frontier_x {
                frontier_x = x;
                frontier.clear();
            }
            frontier.push((x, y));
            for (dx, dy) in OrientedEdgeSet::OFFSETS {
                let (nx, ny) = (x + dx, y + dy);
                if config.is_occupied(nx, ny) {
                    let b = &mut best[idx(nx, ny)];
                    *b = Some(b.map_or(src, |v| v.min(src)));
                }
            }
        }
    }
    ReachResult {
        reached: max_distance.is_some_and(|m| m >= distance),
        max_distance,
        frontier,
    }
}

/// Result of reading a blocked interface as an oriented path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PathExtraction {
    /// Trap sites on the graph, left to right; consecutive displacements are
    /// all oriented offsets.
    Path(Vec<(i64, i64)>),
    /// First pair of consecutive graph traps whose displacement is not an
    /// oriented offset (or a leading/trailing trap-free gap, with the missing
    /// end set to the window edge).
    Violation { from: (i64, i64), to: (i64, i64) },
}

impl PathExtraction {
    pub fn is_path(&self) -> bool {
        matches!(self, PathExtraction::Path(_))
    }
}

/// Extracts the trap sites on the graph of `blocked` over the inclusive
/// window `[lo, hi]` and checks every step against the oriented offsets.
pub fn interface_to_path<T: Scalar>(blocked: &Surface, field: &EnergyField<T>, window: (i64, i64)) -> Result<PathExtraction> {
    let LawSpec::BernoulliTrap { trap, .. } = field.law() else {
        return usage("interface paths need a Bernoulli trap law");
    };
    interface_to_path_in(blocked, field, *trap, window)
}

/// [`interface_to_path`] for any environment, with traps the sites of energy `trap`.
pub fn interface_to_path_in<T: Scalar, E: Environment<T>>(
    blocked: &Surface,
    env: &E,
    trap: T,
    window: (i64, i64),
) -> Result<PathExtraction> {
    if blocked.dim() != 2 || env.dim() != 2 {
        return usage("interface paths are defined for d = 2");
    }
    let (lo, hi) = window;
    if lo > hi {
        return usage("empty window");
    }
    let mut s = Vec::with_capacity((hi - lo + 1) as usize);
    for x in lo..=hi {
        match blocked.height(&[x]).finite() {
            Some(v) => s.push(v),
            None => return usage(format!("surface is -∞ at {x} inside the window")),
        }
    }
    if let Some(k) = s.windows(2).position(|p| (p[1] - p[0]).abs() > 1) {
        return usage(format!("surface is not 1-Lipschitz at {}", lo + k as i64));
    }
    let traps: Vec<(i64, i64)> = (lo..=hi)
        .zip(&s)
        .filter(|(x, &y)| env.energy(&[*x], y).raw() == trap)
        .map(|(x, &y)| (x, y))
        .collect();
    let edges = OrientedEdgeSet;
    for pair in traps.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if !edges.contains(b.0 - a.0, b.1 - a.1) {
            return Ok(PathExtraction::Violation { from: a, to: b });
        }
    }
    Ok(PathExtraction::Path(traps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Boundary;
    use crate::lattice::Height;

    fn region(w: i64, h: i64) -> LatticeBox {
        LatticeBox::new(vec![0, 0], vec![w, h]).unwrap()
    }

    #[test]
    fn full_region_reaches() {
        let c = OccupiedConfig::from_fn(region(10, 5), |_, _| true).unwrap();
        let src: Vec<_> = (0..5).map(|y| (0, y)).collect();
        let r = reach(&c, &src, 9);
        assert!(r.reached);
        assert_eq!(r.max_distance, Some(9));
    }

    #[test]
    fn empty_region_does_not_reach() {
        let c = OccupiedConfig::empty(region(10, 5)).unwrap();
        let r = reach(&c, &[(0, 0)], 1);
        assert!(!r.reached);
        assert_eq!(r.max_distance, None);
    }

    #[test]
    fn single_column_has_zero_distance() {
        let c = OccupiedConfig::from_fn(region(10, 5), |x, _| x == 0).unwrap();
        let src: Vec<_> = (0..5).map(|y| (0, y)).collect();
        let r = reach(&c, &src, 1);
        assert!(!r.reached);
        assert_eq!(r.max_distance, Some(0));
    }

    #[test]
    fn gap_of_three_is_jumped_but_four_is_not() {
        let three = OccupiedConfig::from_fn(region(10, 3), |x, y| y == 1 && (x == 0 || x == 3)).unwrap();
        assert!(reach(&three, &[(0, 1)], 3).reached);
        let four = OccupiedConfig::from_fn(region(10, 3), |x, y| y == 1 && (x == 0 || x == 4)).unwrap();
        assert!(!reach(&four, &[(0, 1)], 4).reached);
    }

    #[test]
    fn blocked_sites_extremes() {
        let r = region(6, 6);
        let none = EnergyField::new(2, LawSpec::bernoulli(0.0, 2), 1).unwrap();
        assert_eq!(blocked_sites(&none, &r).unwrap().count(), 0);
        let all = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 1).unwrap();
        assert_eq!(blocked_sites(&all, &r).unwrap().count(), 36);
        let some = EnergyField::new(2, LawSpec::bernoulli(0.4, 2), 8).unwrap();
        assert_eq!(blocked_sites(&some, &r).unwrap(), blocked_sites(&some, &r).unwrap());
        let g = EnergyField::new(2, LawSpec::gaussian(0.0, 1.0), 8).unwrap();
        assert!(blocked_sites(&g, &r).is_err());
    }

    fn staircase() -> Surface {
        let base = LatticeBox::new(vec![0], vec![8]).unwrap();
        Surface::from_fn(base, Boundary::NegInf, |x| Height::new([0, 1, 2, 2, 1, 0, 0, 1][x[0] as usize])).unwrap()
    }

    #[test]
    fn all_trap_staircase_is_a_path() {
        let f = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 0).unwrap();
        let PathExtraction::Path(p) = interface_to_path(&staircase(), &f, (0, 7)).unwrap() else {
            panic!("expected a path");
        };
        assert_eq!(p.len(), 8);
        for w in p.windows(2) {
            assert_eq!(w[1].0 - w[0].0, 1);
            assert!((w[1].1 - w[0].1).abs() <= 1);
        }
    }

    #[test]
    fn long_gap_is_reported() {
        // traps only at x = 0 and x = 4 on a flat surface
        let base = LatticeBox::new(vec![0], vec![8]).unwrap();
        let flat = Surface::flat(base, Boundary::NegInf, Height::new(0)).unwrap();
        let g = crate::environment::GridEnvironment::from_fn(region(8, 2), |p| {
            crate::environment::SiteEnergy::new(if p[0] == 0 || p[0] == 4 { -3.0 } else { 0.5 })
        });
        assert_eq!(
            interface_to_path_in(&flat, &g, -3.0, (0, 7)).unwrap(),
            PathExtraction::Violation { from: (0, 0), to: (4, 0) }
        );
        assert!(interface_to_path_in(&flat, &g, -3.0, (0, 3)).unwrap().is_path());
    }

    #[test]
    fn steep_window_is_rejected() {
        let f = EnergyField::new(2, LawSpec::bernoulli(1.0, 2), 0).unwrap();
        let base = LatticeBox::new(vec![0], vec![4]).unwrap();
        let s = Surface::from_fn(base, Boundary::NegInf, |x| Height::new(2 * x[0])).unwrap();
        assert!(interface_to_path(&s, &f, (0, 3)).is_err());
    }
}
