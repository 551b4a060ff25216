use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rules::UpdateRule;
use super::surface::{Surface, NO_NEIGHBOR};
use crate::environment::Environment;
use crate::lattice::Height;
use crate::scalar::Scalar;

const PAR_SITES: usize = 1 << 14;

/// One synchronous update `S_{t+1}(x) = S_t(x) + F(…)`.
pub fn step<T: Scalar, E: Environment<T>>(surface: &Surface, env: &E, rule: &UpdateRule<T>) -> Surface {
    let mut out = vec![Height::NEG_INF; surface.len()];
    step_into(surface, env, rule, &mut out);
    Surface {
        topo: surface.topo.clone(),
        heights: out,
    }
}

/// Writes the next heights into `out` and returns how many sites moved.
pub fn step_into<T: Scalar, E: Environment<T>>(
    surface: &Surface,
    env: &E,
    rule: &UpdateRule<T>,
    out: &mut [Height],
) -> usize {
    assert_eq!(out.len(), surface.len());
    let update = |i: usize, slot: &mut Height| -> usize {
        let next = next_height(surface, env, rule, i);
        let moved = usize::from(next != surface.heights[i]);
        *slot = next;
        moved
    };
    if surface.len() >= PAR_SITES {
        out.par_iter_mut()
            .enumerate()
            .with_min_len(1024)
            .map(|(i, slot)| update(i, slot))
            .sum()
    } else {
        out.iter_mut().enumerate().map(|(i, slot)| update(i, slot)).sum()
    }
}

#[inline]
fn next_height<T: Scalar, E: Environment<T>>(surface: &Surface, env: &E, rule: &UpdateRule<T>, i: usize) -> Height {
    let h = surface.heights[i];
    let Some(s) = h.finite() else {
        return h;
    };
    let mut g = [0i64; 8];
    let nbrs = surface.topo.neighbors(i);
    for (k, &j) in nbrs.iter().enumerate() {
        if j == NO_NEIGHBOR {
            return h;
        }
        match surface.heights[j as usize].finite() {
            Some(n) => g[k] = n - s,
            None => return h,
        }
    }
    let moved = rule.decide(&g[..nbrs.len()], || env.energy(surface.topo.coords(i), s));
    if moved {
        Height::new(s + 1)
    } else {
        h
    }
}

/// Why [`evolve_until`] returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// The stop predicate held.
    Stopped,
    /// A full sweep changed nothing; the surface is a fixed point.
    Halted,
    /// `t_max` steps were taken.
    TimeLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: u64,
    pub heights: Vec<Height>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub initial: Surface,
    pub rule: UpdateRule<T>,
    pub last: Surface,
    /// Time of `last`. On a halt this counts the sweep that detected it.
    pub time: u64,
    pub reason: StopReason,
    pub snapshots: Vec<Snapshot>,
}

impl<T> Trajectory<T> {
    pub fn halted(&self) -> bool {
        self.reason == StopReason::Halted
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub t_max: u64,
    /// Record a snapshot every this many steps (0 disables recording).
    pub record_every: u64,
}

impl EvolveOptions {
    pub fn new(t_max: u64) -> Self {
        EvolveOptions { t_max, record_every: 0 }
    }
}

/// Steps until `stop(t, S_t)` holds, a sweep produces no change, or `t_max`
/// steps have been taken. The predicate is checked before each step.
pub fn evolve_until<T: Scalar, E: Environment<T>>(
    initial: Surface,
    env: &E,
    rule: &UpdateRule<T>,
    mut stop: impl FnMut(u64, &Surface) -> bool,
    opts: EvolveOptions,
) -> Trajectory<T> {
    let mut cur = initial.clone();
    let mut buf = vec![Height::NEG_INF; cur.len()];
    let mut snapshots = Vec::new();
    let record = |t: u64, s: &Surface, snaps: &mut Vec<Snapshot>| {
        if opts.record_every > 0 && t.is_multiple_of(opts.record_every) {
            snaps.push(Snapshot {
                t,
                heights: s.heights.clone(),
            });
        }
    };
    let mut t = 0u64;
    record(t, &cur, &mut snapshots);
    let reason = loop {
        if stop(t, &cur) {
            break StopReason::Stopped;
        }
        if t >= opts.t_max {
            break StopReason::TimeLimit;
        }
        let moved = step_into(&cur, env, rule, &mut buf);
        t += 1;
        if moved == 0 {
            break StopReason::Halted;
        }
        std::mem::swap(&mut cur.heights, &mut buf);
        record(t, &cur, &mut snapshots);
    };
    Trajectory {
        initial,
        rule: rule.clone(),
        last: cur,
        time: t,
        reason,
        snapshots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Boundary;
    use crate::environment::GridEnvironment;
    use crate::lattice::LatticeBox;

    fn base() -> LatticeBox {
        LatticeBox::new(vec![0], vec![6]).unwrap()
    }

    #[test]
    fn flat_surface_rises_in_positive_field() {
        let env = GridEnvironment::filled(LatticeBox::new(vec![-10, -10], vec![20, 20]).unwrap(), 10.0);
        let s = Surface::flat(base(), Boundary::Periodic, Height::new(0)).unwrap();
        let next = step(&s, &env, &UpdateRule::SoftLaplacian);
        assert!(next.heights().iter().all(|&h| h == Height::new(1)));
    }

    #[test]
    fn neg_inf_field_halts_at_one() {
        let env = GridEnvironment::filled(LatticeBox::new(vec![0, 0], vec![0, 0]).unwrap(), 0.0);
        let s = Surface::flat(base(), Boundary::Periodic, Height::new(3)).unwrap();
        let tr = evolve_until(s.clone(), &env, &UpdateRule::<f64>::Lipschitz2, |_, _| false, EvolveOptions::new(100));
        assert_eq!(tr.reason, StopReason::Halted);
        assert_eq!(tr.time, 1);
        assert_eq!(tr.last, s);
    }

    #[test]
    fn stop_true_returns_at_zero() {
        let env = GridEnvironment::filled(LatticeBox::cube(&[0, 0], 10), 1.0);
        let s = Surface::flat(base(), Boundary::Periodic, Height::new(0)).unwrap();
        let tr = evolve_until(s, &env, &UpdateRule::SoftLaplacian, |_, _| true, EvolveOptions::new(100));
        assert_eq!((tr.time, tr.reason), (0, StopReason::Stopped));
    }

    #[test]
    fn minus_two_gradient_blocks_lipschitz_site() {
        let env = GridEnvironment::filled(LatticeBox::new(vec![-5, -5], vec![10, 10]).unwrap(), 100.0);
        let s = Surface::new(
            LatticeBox::new(vec![0], vec![3]).unwrap(),
            Boundary::Periodic,
            vec![Height::new(0), Height::new(2), Height::new(2)],
        )
        .unwrap();
        let next = step(&s, &env, &UpdateRule::Lipschitz2);
        assert_eq!(next.heights()[1], Height::new(2));
        assert_eq!(next.heights()[0], Height::new(1));
    }

    #[test]
    fn snapshots_are_recorded() {
        let env = GridEnvironment::filled(LatticeBox::new(vec![-1, -1], vec![8, 40]).unwrap(), 5.0);
        let s = Surface::flat(base(), Boundary::Periodic, Height::new(0)).unwrap();
        let opts = EvolveOptions {
            t_max: 10,
            record_every: 5,
        };
        let tr = evolve_until(s, &env, &UpdateRule::SoftLaplacian, |_, _| false, opts);
        let ts: Vec<u64> = tr.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0, 5, 10]);
        assert_eq!(tr.reason, StopReason::TimeLimit);
        assert_eq!(tr.last.heights()[0], Height::new(10));
    }
}
