//! Exhaustive enumeration of trap configurations on tiny boxes.

use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{crossing_in, BoxSpec};
use crate::dynamics::UpdateRule;
use crate::environment::{Environment, LawSpec, SiteEnergy};
use crate::error::{usage, Error, Result};
use crate::lattice::LatticeBox;
use crate::scalar::Scalar;

pub const ORACLE_MAX_SITES: u64 = 24;

/// Two-valued environment on a box; bit `i` of `mask` marks a trap at the
/// site with row-major index `i`.
struct MaskEnvironment<T> {
    bounds: LatticeBox,
    mask: u32,
    trap: SiteEnergy<T>,
    free: SiteEnergy<T>,
}

impl<T: Scalar> Environment<T> for MaskEnvironment<T> {
    fn dim(&self) -> usize {
        self.bounds.dim()
    }

    #[inline]
    fn energy(&self, base: &[i64], height: i64) -> SiteEnergy<T> {
        let mut p = [0i64; 5];
        let n = base.len();
        p[..n].copy_from_slice(base);
        p[n] = height;
        match self.bounds.index_of(&p[..=n]) {
            Some(i) if self.mask >> i & 1 == 1 => self.trap,
            Some(_) => self.free,
            None => SiteEnergy::neg_inf(),
        }
    }
}

/// Blocked-configuration counts by number of traps: `counts[k]` is the
/// number of blocking environments with exactly `k` traps among `sites`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPolynomial {
    pub sites: u32,
    pub counts: Vec<u64>,
}

impl BlockingPolynomial {
    /// `Σ_k counts[k] p^k (1-p)^{n-k}` in any numeric type.
    pub fn evaluate<N: Num + Clone>(&self, p: &N) -> N {
        let q = N::one() - p.clone();
        let mut total = N::zero();
        for (k, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let term = num_traits::pow(p.clone(), k) * num_traits::pow(q.clone(), self.sites as usize - k);
            total = total + from_count::<N>(c) * term;
        }
        total
    }

    pub fn total_blocked(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn from_count<N: Num + Clone>(c: u64) -> N {
    let two = N::one() + N::one();
    (0..64).rev().fold(N::zero(), |acc, bit| {
        let acc = acc * two.clone();
        if c >> bit & 1 == 1 {
            acc + N::one()
        } else {
            acc
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub polynomial: BlockingPolynomial,
    /// Exact blocking probability at the law's `p` (read as the exact binary
    /// value of the floating-point parameter).
    #[serde(with = "rational_string")]
    pub exact: BigRational,
    pub value: f64,
}

mod rational_string {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Exact probability that the platform dynamics block, by enumerating all
/// `2^{sites}` trap configurations of the C-box.
pub fn brute_force_blocking_probability<T: Scalar>(
    law: &LawSpec<T>,
    rule: &UpdateRule<T>,
    spec: &BoxSpec,
) -> Result<OracleResult> {
    let LawSpec::BernoulliTrap { p, trap, free } = law else {
        return usage("the enumeration oracle needs a Bernoulli trap law");
    };
    law.validate()?;
    rule.validate(spec.d)?;
    let n = spec.sites();
    if n > ORACLE_MAX_SITES {
        return Err(Error::Refused(format!(
            "{n} sites would need 2^{n} environments (limit {ORACLE_MAX_SITES} sites)"
        )));
    }
    let n = n as u32;
    let g = spec.geometry();
    let platform = g.platform(0);
    let (trap, free) = (SiteEnergy::new(*trap), SiteEnergy::new(*free));
    let counts = (0..1u64 << n)
        .into_par_iter()
        .fold(
            || vec![0u64; n as usize + 1],
            |mut acc, mask| {
                let env = MaskEnvironment {
                    bounds: g.c_box.clone(),
                    mask: mask as u32,
                    trap,
                    free,
                };
                if crossing_in(&env, rule, &g, &platform).is_blocked() {
                    acc[mask.count_ones() as usize] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n as usize + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let polynomial = BlockingPolynomial { sites: n, counts };
    let p_exact = BigRational::from_float(p.as_f64()).expect("finite p");
    let exact = polynomial.evaluate(&p_exact);
    let value = exact.to_f64().unwrap_or(f64::NAN);
    Ok(OracleResult {
        polynomial,
        exact,
        value,
    })
}
