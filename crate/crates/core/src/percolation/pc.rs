//! Strip-crossing curves and their finite-size intersections.
//!
//! For a sample and a size `L`, the strip is `[0, L+3) × [0, 2L)` with the
//! whole left column as sources. Each site carries the uniform that decides
//! whether it is a trap, so the sample crosses at `p` exactly when its
//! bottleneck `θ = min_paths max_sites u` is below `p`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::OrientedEdgeSet;
use crate::error::{usage, Result};
use crate::rng::{derive_seed, generator, site_hash, unit};
use crate::stats::{mean_std, Proportion};

const FINE_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcOptions {
    pub sizes: Vec<i64>,
    pub p_grid: Vec<f64>,
    pub n_samples: u64,
    pub seed: u64,
    /// Bootstrap resamples for the intersection uncertainty.
    pub bootstrap: usize,
}

impl PcOptions {
    pub fn new(sizes: Vec<i64>, p_grid: Vec<f64>, n_samples: u64, seed: u64) -> Self {
        PcOptions {
            sizes,
            p_grid,
            n_samples,
            seed,
            bootstrap: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingCurve {
    pub l: i64,
    pub points: Vec<(f64, Proportion)>,
}

/// Where the crossing curves of two consecutive sizes meet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairIntersection {
    pub l_small: i64,
    pub l_large: i64,
    pub p_star: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcEstimate {
    pub curves: Vec<CrossingCurve>,
    pub intersections: Vec<PairIntersection>,
    /// Mean of the pair intersections.
    pub pc_hat: f64,
    /// Bootstrap standard error of `pc_hat`.
    pub std_err: f64,
    /// Largest minus smallest pair intersection.
    pub spread: f64,
}

/// Bottleneck threshold of one strip sample.
pub fn crossing_threshold(l: i64, sample_seed: u64) -> f64 {
    let w = (l + 3) as usize;
    let h = (2 * l) as usize;
    let u = |x: usize, y: usize| unit(site_hash(sample_seed, 0, &[x as i64], y as i64));
    let mut theta = vec![f64::INFINITY; w * h];
    let mut best = f64::INFINITY;
    for x in 0..w {
        for y in 0..h {
            let own = u(x, y);
            let incoming = if x == 0 {
                f64::NEG_INFINITY
            } else {
                let mut m = f64::INFINITY;
                for (dx, dy) in OrientedEdgeSet::OFFSETS {
                    let (px, py) = (x as i64 - dx, y as i64 - dy);
                    if px >= 0 && py >= 0 && (py as usize) < h {
                        m = m.min(theta[px as usize * h + py as usize]);
                    }
                }
                m
            };
            let t = own.max(incoming);
            theta[x * h + y] = t;
            if x as i64 >= l {
                best = best.min(t);
            }
        }
    }
    best
}

fn fraction_below(sorted: &[f64], p: f64) -> f64 {
    sorted.partition_point(|&t| t < p) as f64 / sorted.len() as f64
}

/// Argmin of `∫_{lo}^{p} (F_large - F_small)` on a fine grid: the point where
/// the larger size stops being below the smaller one. A flat minimum counts
/// as a tie (midpoint) only when the integral rises after it; a minimum that
/// stays flat to `hi` means both curves saturated, and its left end is used.
fn intersection(small: &[f64], large: &[f64], lo: f64, hi: f64) -> f64 {
    let n = ((hi - lo) / FINE_STEP).ceil() as usize;
    let mut acc = 0.0;
    let (mut best, mut first, mut last) = (0.0, lo, lo);
    let mut closed = false;
    for k in 0..=n {
        let p = (lo + k as f64 * FINE_STEP).min(hi);
        acc += fraction_below(large, p) - fraction_below(small, p);
        if acc < best - 1e-12 {
            (best, first, last, closed) = (acc, p, p, false);
        } else if (acc - best).abs() <= 1e-12 {
            if !closed {
                last = p;
            }
        } else {
            closed = true;
        }
    }
    if closed {
        0.5 * (first + last)
    } else {
        first
    }
}

pub fn estimate_pc(l_list: &[i64], p_grid: &[f64], n_samples: u64, seed: u64) -> Result<PcEstimate> {
    estimate_pc_with(&PcOptions::new(l_list.to_vec(), p_grid.to_vec(), n_samples, seed))
}

pub fn estimate_pc_with(opts: &PcOptions) -> Result<PcEstimate> {
    if opts.sizes.len() < 2 {
        return usage("need at least two sizes");
    }
    if opts.p_grid.len() < 3 {
        return usage("need at least three grid points");
    }
    if opts.n_samples == 0 || opts.sizes.iter().any(|&l| l < 1) {
        return usage("need n_samples >= 1 and sizes >= 1");
    }
    let mut sizes = opts.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let thresholds: Vec<Vec<f64>> = sizes
        .iter()
        .map(|&l| {
            (0..opts.n_samples)
                .into_par_iter()
                .map(|i| crossing_threshold(l, sample_seed(opts.seed, l, i)))
                .collect()
        })
        .collect();
    pc_from_thresholds(&sizes, thresholds, &opts.p_grid, opts.bootstrap, opts.seed)
}

/// Seed of sample `index` at size `l`.
pub fn sample_seed(seed: u64, l: i64, index: u64) -> u64 {
    derive_seed(derive_seed(seed, l as u64), index)
}

/// Curves and intersections from per-sample thresholds, `thresholds[k]`
/// belonging to `sizes[k]` (increasing). The bootstrap is driven by `seed`.
pub fn pc_from_thresholds(
    sizes: &[i64],
    mut thresholds: Vec<Vec<f64>>,
    p_grid: &[f64],
    bootstrap: usize,
    seed: u64,
) -> Result<PcEstimate> {
    if sizes.len() < 2 || sizes.len() != thresholds.len() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return usage("need at least two increasing sizes, one sample set each");
    }
    if p_grid.len() < 3 {
        return usage("need at least three grid points");
    }
    if thresholds.iter().any(|t| t.is_empty()) {
        return usage("every size needs samples");
    }
    for t in &mut thresholds {
        t.sort_by(f64::total_cmp);
    }
    let mut grid = p_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);

    let curves = sizes
        .iter()
        .zip(&thresholds)
        .map(|(&l, t)| CrossingCurve {
            l,
            points: grid
                .iter()
                .map(|&p| (p, Proportion::new(t.partition_point(|&x| x < p) as u64, t.len() as u64)))
                .collect(),
        })
        .collect();

    let pairs: Vec<f64> = thresholds.windows(2).map(|w| intersection(&w[0], &w[1], lo, hi)).collect();

    let mut rng = generator(derive_seed(seed, u64::MAX));
    let mut boot_pairs = vec![Vec::with_capacity(bootstrap); pairs.len()];
    let mut boot_means = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let resampled: Vec<Vec<f64>> = thresholds
            .iter()
            .map(|t| {
                let n = t.len();
                let mut r: Vec<f64> = (0..n).map(|_| t[rng.gen_range(0..n)]).collect();
                r.sort_by(f64::total_cmp);
                r
            })
            .collect();
        let ps: Vec<f64> = resampled.windows(2).map(|w| intersection(&w[0], &w[1], lo, hi)).collect();
        boot_means.push(ps.iter().sum::<f64>() / ps.len() as f64);
        for (b, p) in boot_pairs.iter_mut().zip(ps) {
            b.push(p);
        }
    }
    let intersections: Vec<PairIntersection> = pairs
        .iter()
        .enumerate()
        .map(|(k, &p_star)| PairIntersection {
            l_small: sizes[k],
            l_large: sizes[k + 1],
            p_star,
            std_err: if bootstrap > 1 { mean_std(&boot_pairs[k]).1 } else { f64::NAN },
        })
        .collect();
    let pc_hat = pairs.iter().sum::<f64>() / pairs.len() as f64;
    let spread = pairs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - pairs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(PcEstimate {
        curves,
        intersections,
        pc_hat,
        std_err: if bootstrap > 1 { mean_std(&boot_means).1 } else { f64::NAN },
        spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnergyField, LawSpec};
    use crate::lattice::LatticeBox;
    use crate::percolation::{blocked_sites, reach};

    #[test]
    fn threshold_matches_reachability() {
        let l = 6;
        for i in 0..40 {
            let s = derive_seed(5, i);
            let theta = crossing_threshold(l, s);
            for p in [0.2, 0.35, 0.5, 0.7] {
                let f = EnergyField::new(2, LawSpec::bernoulli(p, 2), s).unwrap();
                let region = LatticeBox::new(vec![0, 0], vec![l + 3, 2 * l]).unwrap();
                let c = blocked_sites(&f, &region).unwrap();
                let src: Vec<_> = (0..2 * l).map(|y| (0, y)).collect();
                assert_eq!(reach(&c, &src, l).reached, theta < p, "sample {i}, p = {p}");
            }
        }
    }

    #[test]
    fn curves_have_trivial_ends_and_are_monotone() {
        let est = estimate_pc(&[4, 8], &[0.0, 0.3, 0.6, 1.0], 200, 3).unwrap();
        for c in &est.curves {
            assert_eq!(c.points[0].1.estimate, 0.0);
            assert_eq!(c.points.last().unwrap().1.estimate, 1.0);
            assert!(c.points.windows(2).all(|w| w[0].1.estimate <= w[1].1.estimate));
        }
    }

    #[test]
    fn intersection_of_shifted_steps() {
        // small size crosses on [0.3, 0.5], large one steeper on [0.38, 0.42]
        let small: Vec<f64> = (0..100).map(|i| 0.3 + 0.2 * i as f64 / 99.0).collect();
        let large: Vec<f64> = (0..100).map(|i| 0.38 + 0.04 * i as f64 / 99.0).collect();
        let p = intersection(&small, &large, 0.0, 1.0);
        assert!((p - 0.4).abs() < 0.01, "{p}");
    }

    #[test]
    fn saturated_curves_do_not_drag_the_intersection() {
        // both curves reach 1 at 0.3 and stay equal to the end of the range
        let small: Vec<f64> = (0..100).map(|i| 0.2 + 0.1 * i as f64 / 99.0).collect();
        let large: Vec<f64> = (0..100).map(|i| 0.28 + 0.02 * i as f64 / 99.0).collect();
        let p = intersection(&small, &large, 0.0, 1.0);
        assert!((p - 0.3).abs() < 0.005, "{p}");
    }

    #[test]
    fn rejects_small_inputs() {
        assert!(estimate_pc(&[4], &[0.1, 0.2, 0.3], 10, 0).is_err());
        assert!(estimate_pc(&[4, 8], &[0.1, 0.2], 10, 0).is_err());
    }
}
