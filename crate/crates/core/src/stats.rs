//! Small statistical helpers shared by the estimators.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

/// Least-squares line `y = intercept + slope · x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope. For unweighted fits it is estimated from
    /// the residuals (NaN with two points); for weighted fits it follows from
    /// the supplied variances.
    pub slope_se: f64,
    pub residuals: Vec<f64>,
}

impl LinearFit {
    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

/// Ordinary least squares. `None` with fewer than two points or constant `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| y - intercept - slope * x).collect();
    let slope_se = if n > 2 {
        let rss: f64 = residuals.iter().map(|r| r * r).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LinearFit {
        slope,
        intercept,
        slope_se,
        residuals,
    })
}

/// Weighted least squares with known per-point variances.
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], variances: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() || n != variances.len() || variances.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let w: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(&w)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals = xs.iter().zip(ys).map(|(x, y)| y - intercept - slope * x).collect();
    Some(LinearFit {
        slope,
        intercept,
        slope_se: (1.0 / sxx).sqrt(),
        residuals,
    })
}

/// Sample mean and unbiased standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
    (m, v.sqrt())
}

fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return if k >= n { 1.0 } else { 0.0 };
    }
    Binomial::new(p, n).expect("valid binomial").cdf(k)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> bool) -> f64 {
    // f(lo) == false, f(hi) == true
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact two-sided binomial interval of level `1 - alpha` for `k` successes
/// out of `n`, by bisection on the binomial CDF.
pub fn clopper_pearson(k: u64, n: u64, alpha: f64) -> (f64, f64) {
    assert!(k <= n && n > 0, "need 0 <= k <= n and n > 0");
    let half = alpha / 2.0;
    let lower = if k == 0 {
        0.0
    } else {
        // P(X >= k; p) = 1 - cdf(k-1; p) increases in p
        bisect(0.0, 1.0, |p| 1.0 - binom_cdf(k - 1, n, p) >= half)
    };
    let upper = if k == n {
        1.0
    } else {
        // cdf(k; p) decreases in p
        bisect(0.0, 1.0, |p| binom_cdf(k, n, p) <= half)
    };
    (lower, upper)
}

/// Binomial proportion with its normal-approximation standard error and an
/// exact 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub std_err: f64,
    pub ci: (f64, f64),
}

impl Proportion {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(trials > 0);
        let p = successes as f64 / trials as f64;
        Proportion {
            successes,
            trials,
            estimate: p,
            std_err: (p * (1.0 - p) / trials as f64).sqrt(),
            ci: clopper_pearson(successes, trials, 0.05),
        }
    }
}
