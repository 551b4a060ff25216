//! Multi-scale bookkeeping: scales `L_{k+1} = L_k^γ`, the inverse-speed
//! sequence `r_k`, the constraints on the exponents and the induction on the
//! slow-box bound `w̄_k`.
//!
//! `L_2` overflows every native type for realistic `γ`, so scales live in log
//! space.

mod supt;

pub use supt::{empirical_supt_check, supt_instance, SupTGeometry, SupTInstance, SupTReport};

use std::fmt;
use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::scalar::Scalar;

/// A non-negative quantity stored as its natural logarithm.
#[derive(Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogScaleValue(f64);

impl LogScaleValue {
    pub const ZERO: LogScaleValue = LogScaleValue(f64::NEG_INFINITY);
    pub const ONE: LogScaleValue = LogScaleValue(0.0);

    pub fn from_ln(ln: f64) -> Self {
        assert!(!ln.is_nan(), "log value is NaN");
        LogScaleValue(ln)
    }

    pub fn from_value(x: f64) -> Self {
        assert!(x >= 0.0, "log-scale values are non-negative");
        LogScaleValue(x.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn powf(self, e: f64) -> Self {
        if self.0 == f64::NEG_INFINITY {
            return if e > 0.0 { Self::ZERO } else { Self::ONE };
        }
        LogScaleValue(self.0 * e)
    }
}

impl Mul for LogScaleValue {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        LogScaleValue(self.0 + rhs.0)
    }
}

impl Add for LogScaleValue {
    type Output = Self;

    /// Log-sum-exp.
    fn add(self, rhs: Self) -> Self {
        let (hi, lo) = if self.0 >= rhs.0 { (self.0, rhs.0) } else { (rhs.0, self.0) };
        if hi == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        LogScaleValue(hi + (lo - hi).exp().ln_1p())
    }
}

impl fmt::Debug for LogScaleValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "exp({})", self.0)
    }
}

/// Renormalization parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams<T> {
    pub d: u32,
    pub a: u32,
    pub h: u32,
    pub gamma: u32,
    /// Number of well separated slow boxes, `D`.
    pub big_d: u32,
    pub alpha: T,
    pub rho: T,
    pub l0: u64,
    pub r0: T,
}

impl<T: Scalar> ScaleParams<T> {
    fn ln_l0(&self) -> f64 {
        (self.l0 as f64).ln()
    }

    fn d_f(&self) -> f64 {
        f64::from(self.d)
    }

    fn g_f(&self) -> f64 {
        f64::from(self.gamma)
    }

    /// `log(4 · 3^{Dd})`.
    fn ln_l0bound_rhs(&self) -> f64 {
        4f64.ln() + f64::from(self.big_d) * self.d_f() * 3f64.ln()
    }

    fn l0bound_exponents(&self) -> (f64, f64) {
        let (d, g) = (self.d_f(), self.g_f());
        (
            (g - 1.0) * d * (f64::from(self.big_d) - 2.0 * g),
            self.rho.as_f64() - d * (g - 1.0) * (1.0 + 2.0 * g),
        )
    }

    fn require_scales(&self) -> Result<()> {
        if self.d < 2 || self.a < 1 || self.h < 1 {
            return usage("need d >= 2, a >= 1, h >= 1");
        }
        if self.gamma <= self.d + 2 * self.a {
            return usage(format!("gamma = {} must exceed d + 2a = {}", self.gamma, self.d + 2 * self.a));
        }
        if self.l0 < 2 {
            return usage("L0 must be >= 2");
        }
        Ok(())
    }
}

/// `log L_k = γ^k log L_0` for `k = 0..=k_max`.
pub fn scale_sequence<T: Scalar>(params: &ScaleParams<T>, k_max: usize) -> Result<Vec<LogScaleValue>> {
    if params.gamma < 2 || params.l0 < 2 {
        return usage("need gamma >= 2 and L0 >= 2");
    }
    let g = params.g_f();
    Ok((0..=k_max)
        .map(|k| LogScaleValue::from_ln(g.powi(k as i32) * params.ln_l0()))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RkSequence {
    pub r: Vec<f64>,
    /// `log` of the increment `r_k - r_{k-1}` for `k >= 1`.
    pub log_increments: Vec<f64>,
    /// `r_0 + Σ_{k>=1}` increments, summed until they no longer change the total.
    pub sup: f64,
    /// `r_0 + D(3h)^d L_0^{-β} / (1 - L_0^{-β(γ-1)})`, `β = γ - d - 2a`.
    pub sup_bound: f64,
}

/// `r_k = r_{k-1} + D (3h)^d L_{k-1}^{d+2a} / L_k`.
///
/// Only the structural requirements for convergence are enforced
/// (`γ > d + 2a`); the remaining constraints are reported by
/// [`check_assumptions`].
pub fn rk_sequence<T: Scalar>(params: &ScaleParams<T>, k_max: usize) -> Result<RkSequence> {
    params.require_scales()?;
    let (d, g) = (params.d_f(), params.g_f());
    let beta = g - d - 2.0 * f64::from(params.a);
    let ln_c = f64::from(params.big_d).ln() + d * (3.0 * f64::from(params.h)).ln();
    let ln_l0 = params.ln_l0();
    let log_inc = |k: usize| ln_c - beta * g.powi(k as i32 - 1) * ln_l0;
    let r0 = params.r0.as_f64();
    let mut r = vec![r0];
    let mut log_increments = Vec::new();
    for k in 1..=k_max {
        let li = log_inc(k);
        log_increments.push(li);
        r.push(r[k - 1] + li.exp());
    }
    let mut sup = r0;
    for k in 1.. {
        let inc = log_inc(k).exp();
        if sup + inc == sup {
            break;
        }
        sup += inc;
    }
    let sup_bound = r0 + ln_c.exp() * (-beta * ln_l0).exp() / (1.0 - (-beta * (g - 1.0) * ln_l0).exp());
    Ok(RkSequence {
        r,
        log_increments,
        sup,
        sup_bound,
    })
}

/// `1 / (2h · sup_k r_k)`, the speed guaranteed once the induction holds.
pub fn speed_lower_bound<T: Scalar>(params: &ScaleParams<T>) -> Result<f64> {
    let rk = rk_sequence(params, 0)?;
    Ok(1.0 / (2.0 * f64::from(params.h) * rk.sup))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub holds: bool,
    /// `lhs - rhs` of the constraint written as `lhs > rhs` or `lhs >= rhs`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub checks: Vec<ConstraintCheck>,
    /// Smallest integer `L0 >= 100` meeting both scale-bound exponents,
    /// `None` when an exponent is not positive.
    pub l0_required: Option<u64>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn get(&self, name: &str) -> Option<&ConstraintCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub const C_GAMMA: &str = "gamma > d + 2a";
pub const C_BIG_D: &str = "D > 2 gamma";
pub const C_ALPHA: &str = "alpha (a+1) > 2 D d (gamma-1)";
pub const C_RHO: &str = "rho > d (gamma-1)(1+2 gamma)";
pub const C_L0_MIN: &str = "L0 >= 100";
pub const C_L0_FIRST: &str = "L0^((gamma-1) d (D-2 gamma)) >= 4 3^(D d)";
pub const C_L0_SECOND: &str = "L0^(rho - d (gamma-1)(1+2 gamma)) >= 4 3^(D d)";

fn l0_bound_holds(e: f64, ln_l0: f64, rhs: f64) -> (bool, f64) {
    let lhs = e * ln_l0;
    let tol = 8.0 * f64::EPSILON * lhs.abs().max(rhs.abs());
    (lhs >= rhs - tol, lhs - rhs)
}

/// Flags every constraint individually, with its margin.
pub fn check_assumptions<T: Scalar>(params: &ScaleParams<T>) -> AssumptionReport {
    let (d, g, a) = (params.d_f(), params.g_f(), f64::from(params.a));
    let big_d = f64::from(params.big_d);
    let alpha = params.alpha.as_f64();
    let rho = params.rho.as_f64();
    let mut checks = Vec::new();
    let mut push = |name: &str, holds: bool, margin: f64| {
        checks.push(ConstraintCheck {
            name: name.to_string(),
            holds,
            margin,
        })
    };
    push(C_GAMMA, g > d + 2.0 * a, g - d - 2.0 * a);
    push(C_BIG_D, big_d > 2.0 * g, big_d - 2.0 * g);
    let m = alpha * (a + 1.0) - 2.0 * big_d * d * (g - 1.0);
    push(C_ALPHA, m > 0.0, m);
    let m = rho - d * (g - 1.0) * (1.0 + 2.0 * g);
    push(C_RHO, m > 0.0, m);
    push(C_L0_MIN, params.l0 >= 100, params.l0 as f64 - 100.0);
    let rhs = params.ln_l0bound_rhs();
    let (e1, e2) = params.l0bound_exponents();
    let ln_l0 = params.ln_l0();
    let (h1, m1) = l0_bound_holds(e1, ln_l0, rhs);
    push(C_L0_FIRST, h1, m1);
    let (h2, m2) = l0_bound_holds(e2, ln_l0, rhs);
    push(C_L0_SECOND, h2, m2);
    AssumptionReport {
        checks,
        l0_required: minimal_l0(params),
    }
}

fn minimal_l0<T: Scalar>(params: &ScaleParams<T>) -> Option<u64> {
    let rhs = params.ln_l0bound_rhs();
    let (e1, e2) = params.l0bound_exponents();
    if e1 <= 0.0 || e2 <= 0.0 {
        return None;
    }
    let ok = |l: u64| {
        let ln = (l as f64).ln();
        l >= 100 && l0_bound_holds(e1, ln, rhs).0 && l0_bound_holds(e2, ln, rhs).0
    };
    let guess = (rhs / e1.min(e2)).exp();
    if !guess.is_finite() || guess > 9.0e18 {
        return None;
    }
    let mut l = (guess.ceil() as u64).max(100);
    while !ok(l) {
        l += 1;
    }
    while l > 100 && ok(l - 1) {
        l -= 1;
    }
    Some(l)
}

/// Why [`suggest_params`] could not produce parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Infeasible {
    pub constraint: String,
    /// Smallest admissible value of the supplied exponent.
    pub required_above: f64,
}

/// Minimal integer choices in the order `γ`, `D`, `ρ`, `α`, then the
/// smallest `L0` meeting the scale bound. `h` defaults to 2 and `r0` to 1.
///
/// Supplied exponents are kept and checked; the smallest `γ` and `D` give the
/// weakest requirement on both, so failure there is final.
pub fn suggest_params<T: Scalar>(
    d: u32,
    a: u32,
    alpha: Option<T>,
    rho: Option<T>,
) -> Result<std::result::Result<ScaleParams<T>, Infeasible>> {
    if d < 2 || a < 1 {
        return Err(Error::Usage("need d >= 2 and a >= 1".into()));
    }
    let gamma = d + 2 * a + 1;
    let big_d = 2 * gamma + 1;
    let (df, gf, af) = (f64::from(d), f64::from(gamma), f64::from(a));
    let rho_min = df * (gf - 1.0) * (1.0 + 2.0 * gf);
    let alpha_min = 2.0 * f64::from(big_d) * df * (gf - 1.0) / (af + 1.0);
    let rho = match rho {
        Some(r) if r.as_f64() > rho_min => r,
        Some(_) => {
            return Ok(Err(Infeasible {
                constraint: C_RHO.into(),
                required_above: rho_min,
            }))
        }
        None => T::of(rho_min.floor() + 1.0),
    };
    let alpha = match alpha {
        Some(x) if x.as_f64() > alpha_min => x,
        Some(_) => {
            return Ok(Err(Infeasible {
                constraint: C_ALPHA.into(),
                required_above: alpha_min,
            }))
        }
        None => T::of(alpha_min.floor() + 1.0),
    };
    let mut p = ScaleParams {
        d,
        a,
        h: 2,
        gamma,
        big_d,
        alpha,
        rho,
        l0: 100,
        r0: T::one(),
    };
    match minimal_l0(&p) {
        Some(l0) => p.l0 = l0,
        None => return usage("scale bound cannot be met with a 64-bit L0"),
    }
    Ok(Ok(p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionStep {
    pub k: usize,
    /// `log w̄_k`.
    pub log_w: f64,
    /// `log L_k^{-2d(γ-1)}`.
    pub log_target: f64,
    /// `log_w - log_target`; the induction needs it `<= 0`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub steps: Vec<RecursionStep>,
    pub passed: bool,
    /// First `k` at which `w̄_k` exceeds its target.
    pub first_failure: Option<usize>,
}

/// Iterates the upper-bound sequence
/// `w̄_k = (3 L_{k-1}^{γ-1})^{dD} [w̄_{k-1}^D + L_{k-1}^{-α(a+1)}] + (3 L_{k-1}^{γ-1})^d L_{k-1}^{-ρ}`
/// in log space and compares each term with `L_k^{-2d(γ-1)}`.
pub fn iterate_recursion<T: Scalar>(params: &ScaleParams<T>, log_w0: f64, k_max: usize) -> Result<RecursionReport> {
    let scales = scale_sequence(params, k_max)?;
    let (d, g) = (params.d_f(), params.g_f());
    let big_d = f64::from(params.big_d);
    let exponent = 2.0 * d * (g - 1.0);
    let target0 = -exponent * scales[0].ln();
    if log_w0 > target0 {
        return usage(format!("w0 must be at most L0^(-{exponent}), got log w0 = {log_w0}"));
    }
    let alpha_a = params.alpha.as_f64() * f64::from(params.a + 1);
    let rho = params.rho.as_f64();
    let ln3 = 3f64.ln();
    let mut w = LogScaleValue::from_ln(log_w0);
    let mut steps = Vec::with_capacity(k_max);
    let mut first_failure = None;
    for k in 1..=k_max {
        let l = scales[k - 1].ln();
        let count = LogScaleValue::from_ln(ln3 + (g - 1.0) * l);
        let slow = count.powf(d * big_d) * (w.powf(big_d) + LogScaleValue::from_ln(-alpha_a * l));
        let blocked = count.powf(d) * LogScaleValue::from_ln(-rho * l);
        w = slow + blocked;
        let log_target = -exponent * scales[k].ln();
        let margin = w.ln() - log_target;
        if margin > 0.0 && first_failure.is_none() {
            first_failure = Some(k);
        }
        steps.push(RecursionStep {
            k,
            log_w: w.ln(),
            log_target,
            margin,
        });
    }
    Ok(RecursionReport {
        steps,
        passed: first_failure.is_none(),
        first_failure,
    })
}
