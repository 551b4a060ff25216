//! Empirical decorrelation of box functionals.
//!
//! Boxes of side `3L` are laid out along the first axis at a common L∞ gap.
//! For every gap we estimate the covariance of a bounded test function
//! evaluated on the first two boxes, and the gap `E[f_1 ⋯ f_D] - E[f_1] ⋯ E[f_D]`
//! over `D` boxes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnergyField, LawSpec};
use crate::error::{usage, Result};
use crate::lattice::LatticeBox;
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats::{linear_fit, mean_std};

/// Bounded local function of the energies in a box, valued in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TestFunction<T> {
    /// Fraction of sites whose energy exceeds the single-site mean.
    AboveMean,
    /// Box average mapped affinely from `[lo, hi]` to `[0, 1]` and clamped.
    Linear { lo: T, hi: T },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingOptions<T> {
    /// `L`: boxes have side `3L`.
    pub scale: i64,
    /// `D`: number of boxes in the product functional.
    pub boxes: usize,
    pub n_samples: usize,
    /// L∞ gaps between consecutive boxes.
    pub distances: Vec<i64>,
    pub test: TestFunction<T>,
}

impl<T> MixingOptions<T> {
    /// Gaps `L, L+1, …, L+5` with the above-mean indicator.
    pub fn new(scale: i64, boxes: usize, n_samples: usize) -> Self {
        MixingOptions {
            scale,
            boxes,
            n_samples,
            distances: (scale..=scale + 5).collect(),
            test: TestFunction::AboveMean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariancePoint {
    pub distance: i64,
    pub covariance: f64,
    pub std_err: f64,
}

impl CovariancePoint {
    /// `covariance / std_err`.
    pub fn z_score(&self) -> f64 {
        if self.std_err > 0.0 {
            self.covariance / self.std_err
        } else if self.covariance == 0.0 {
            0.0
        } else {
            self.covariance.signum() * f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductGapPoint {
    pub distance: i64,
    pub boxes: usize,
    /// `E[f_1 ⋯ f_D] - E[f_1] ⋯ E[f_D]`.
    pub gap: f64,
    pub std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub scale: i64,
    pub boxes: usize,
    pub n_samples: usize,
    pub pair: Vec<CovariancePoint>,
    pub product: Vec<ProductGapPoint>,
    /// Decay exponent from a log-log fit of the significantly positive
    /// covariances (more than 3 standard errors) against the gap. `None`
    /// when fewer than two gaps are significant.
    pub alpha_hat: Option<f64>,
    /// Every pair covariance lies within 3 standard errors of zero.
    pub consistent_with_zero: bool,
}

/// Mixing estimate with the default gaps and test function.
pub fn estimate_mixing<T: Scalar>(
    field: &EnergyField<T>,
    scale: i64,
    boxes: usize,
    n_samples: usize,
) -> Result<CovarianceReport> {
    estimate_mixing_with(field, &MixingOptions::new(scale, boxes, n_samples))
}

pub fn estimate_mixing_with<T: Scalar>(field: &EnergyField<T>, opts: &MixingOptions<T>) -> Result<CovarianceReport> {
    if opts.n_samples < 2 {
        return usage("mixing estimate needs at least 2 samples");
    }
    if opts.scale < 1 {
        return usage("scale L must be >= 1");
    }
    if opts.boxes < 2 {
        return usage("need at least 2 boxes");
    }
    if opts.distances.iter().any(|&g| g < 1) {
        return usage("box gaps must be >= 1");
    }
    let d = field.dim;
    let side = 3 * opts.scale;
    let layouts: Vec<Vec<LatticeBox>> = opts
        .distances
        .iter()
        .map(|&gap| {
            (0..opts.boxes)
                .map(|i| {
                    let mut origin = vec![0i64; d];
                    origin[0] = i as i64 * (side - 1 + gap);
                    LatticeBox::cube(&origin, side)
                })
                .collect()
        })
        .collect();
    let threshold = field.law.mean().unwrap_or(T::zero());
    let eval = |f: &EnergyField<T>, bx: &LatticeBox| -> f64 { test_value(f, bx, &opts.test, threshold) };

    // values[s][g][i]
    let values: Vec<Vec<Vec<f64>>> = (0..opts.n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let replica = field.with_seed(derive_seed(field.seed, s));
            layouts
                .iter()
                .map(|boxes| boxes.iter().map(|b| eval(&replica, b)).collect())
                .collect()
        })
        .collect();

    let n = opts.n_samples as f64;
    let mut pair = Vec::new();
    let mut product = Vec::new();
    for (g, &distance) in opts.distances.iter().enumerate() {
        let col = |i: usize| -> Vec<f64> { values.iter().map(|v| v[g][i]).collect() };
        let f1 = col(0);
        let f2 = col(1);
        let (m1, _) = mean_std(&f1);
        let (m2, _) = mean_std(&f2);
        let cross: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| (a - m1) * (b - m2)).collect();
        let covariance = cross.iter().sum::<f64>() / (n - 1.0);
        let (_, sd) = mean_std(&cross);
        pair.push(CovariancePoint {
            distance,
            covariance,
            std_err: sd / n.sqrt(),
        });

        let prods: Vec<f64> = values.iter().map(|v| v[g].iter().product()).collect();
        let (mp, sdp) = mean_std(&prods);
        let means: f64 = (0..opts.boxes).map(|i| mean_std(&col(i)).0).product();
        product.push(ProductGapPoint {
            distance,
            boxes: opts.boxes,
            gap: mp - means,
            std_err: sdp / n.sqrt(),
        });
    }

    let consistent_with_zero = pair.iter().all(|p| p.z_score().abs() <= 3.0);
    let significant: Vec<&CovariancePoint> = pair.iter().filter(|p| p.z_score() > 3.0).collect();
    let alpha_hat = if significant.len() >= 2 {
        let xs: Vec<f64> = significant.iter().map(|p| (p.distance as f64).ln()).collect();
        let ys: Vec<f64> = significant.iter().map(|p| p.covariance.ln()).collect();
        linear_fit(&xs, &ys).map(|f| -f.slope)
    } else {
        None
    };

    Ok(CovarianceReport {
        scale: opts.scale,
        boxes: opts.boxes,
        n_samples: opts.n_samples,
        pair,
        product,
        alpha_hat,
        consistent_with_zero,
    })
}

fn test_value<T: Scalar>(field: &EnergyField<T>, bx: &LatticeBox, test: &TestFunction<T>, threshold: T) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for p in bx.points() {
        let v = field.law.value_at(field.seed, &p);
        let v = match &field.restriction {
            Some(r) if !r.contains(&p) => super::SiteEnergy::neg_inf(),
            _ => v,
        };
        acc += match test {
            TestFunction::AboveMean => f64::from(u8::from(v.raw() > threshold)),
            TestFunction::Linear { .. } => v.raw().as_f64(),
        };
        count += 1;
    }
    let mean = acc / count as f64;
    match test {
        TestFunction::AboveMean => mean,
        TestFunction::Linear { lo, hi } => {
            let (lo, hi) = (lo.as_f64(), hi.as_f64());
            ((mean - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    }
}

impl<T: Scalar> LawSpec<T> {
    /// Range of a single-site value, when bounded.
    pub fn bounds(&self) -> Option<(T, T)> {
        match self {
            LawSpec::BernoulliTrap { p, trap, free } => {
                if *p == T::zero() {
                    Some((*free, *free))
                } else if *p == T::one() {
                    Some((*trap, *trap))
                } else {
                    Some((trap.min(*free), trap.max(*free)))
                }
            }
            LawSpec::Gaussian { variance, mean } => (*variance == T::zero()).then_some((*mean, *mean)),
            LawSpec::MovingAverage { base, .. } => base.bounds(),
            LawSpec::Constant { value } => value.value().map(|v| (v, v)),
        }
    }
}
