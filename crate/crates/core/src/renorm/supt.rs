//! Two-scale check of the layer inequality `T_m <= Σ_j sup_{m'} T_{m'}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::{crossing_in, BoxGeometry};
use crate::dynamics::UpdateRule;
use crate::environment::{EnergyField, LawSpec};
use crate::error::{usage, Result};
use crate::lattice::LatticeBox;
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// A scale-1 box with `L_1 = L_0^γ` and its scale-0 sub-boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupTGeometry {
    pub d: usize,
    pub h: i64,
    pub a: u32,
    pub l0: i64,
    pub gamma: u32,
}

impl SupTGeometry {
    pub fn l1(&self) -> i64 {
        self.l0.pow(self.gamma)
    }

    /// Geometry of a box of scale `l` whose B-box has lower corner
    /// `(i h l, j l)`: `C = [(i-1) h l, (i+2) h l)^{d-1} × [j l, j l + l^{a+1})`.
    fn boxes(&self, l: i64, i: &[i64], j: i64) -> BoxGeometry {
        let hl = self.h * l;
        let lo: Vec<i64> = i.iter().map(|&v| (v - 1) * hl).collect();
        let hi: Vec<i64> = i.iter().map(|&v| (v + 2) * hl).collect();
        let base = LatticeBox::new(lo, hi).expect("matching dims");
        let b_lo: Vec<i64> = i.iter().map(|&v| v * hl).collect();
        BoxGeometry {
            c_box: base.extend(j * l, j * l + l.pow(self.a + 1)),
            b_base: LatticeBox::cube(&b_lo, hl),
            floor: j * l,
            b_top: (j + 1) * l,
        }
    }

    /// The scale-1 box, positioned like the criterion box at the origin.
    pub fn outer(&self) -> BoxGeometry {
        self.boxes(self.l1(), &vec![1; self.d - 1], 0)
    }

    /// Layers `J_m` with, for each, the sub-box geometries `M_m^j`.
    pub fn layers(&self) -> Vec<Vec<BoxGeometry>> {
        let outer = self.outer();
        let per = self.l1() / self.l0;
        // B_m spans layers 0..per; sub-box indices i with C_{m'} ⊆ C_m
        let n = 3 * self.h * self.l1() / (self.h * self.l0);
        let idx = LatticeBox::cube(&vec![1; self.d - 1], n - 2);
        (0..per)
            .map(|j| {
                idx.points()
                    .map(|i| self.boxes(self.l0, &i, j))
                    .filter(|g| outer.c_box.contains_box(&g.c_box))
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupTInstance {
    pub seed: u64,
    /// `T_m`, `None` when infinite.
    pub lhs: Option<u64>,
    /// `Σ_j sup T_{m'}`, `None` when some sub-box time is infinite.
    pub rhs: Option<u64>,
}

impl SupTInstance {
    pub fn skipped(&self) -> bool {
        self.lhs.is_none() || self.rhs.is_none()
    }

    pub fn violated(&self) -> bool {
        matches!((self.lhs, self.rhs), (Some(l), Some(r)) if l > r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupTReport {
    pub geometry: SupTGeometry,
    pub instances: Vec<SupTInstance>,
    pub checked: usize,
    pub skipped: usize,
    pub violations: usize,
}

/// Measures both sides of the layer inequality on `n_instances` sampled
/// environments; instance `n` uses `derive_seed(seed, n)`.
pub fn empirical_supt_check<T: Scalar>(
    law: &LawSpec<T>,
    rule: &UpdateRule<T>,
    geometry: SupTGeometry,
    n_instances: u64,
    seed: u64,
) -> Result<SupTReport> {
    if geometry.d < 2 || geometry.h < 1 || geometry.l0 < 1 || geometry.gamma < 2 || geometry.a < 1 {
        return usage("need d >= 2, h, L0, a >= 1 and gamma >= 2");
    }
    rule.validate(geometry.d)?;
    law.validate()?;
    let instances = (0..n_instances)
        .into_par_iter()
        .map(|n| supt_instance(law, rule, &geometry, derive_seed(seed, n)))
        .collect::<Result<Vec<_>>>()?;
    let skipped = instances.iter().filter(|i| i.skipped()).count();
    let violations = instances.iter().filter(|i| i.violated()).count();
    Ok(SupTReport {
        geometry,
        checked: instances.len() - skipped,
        skipped,
        violations,
        instances,
    })
}

/// Both sides of the layer inequality for the environment with seed `seed`.
pub fn supt_instance<T: Scalar>(
    law: &LawSpec<T>,
    rule: &UpdateRule<T>,
    geometry: &SupTGeometry,
    seed: u64,
) -> Result<SupTInstance> {
    let outer = geometry.outer();
    let field = EnergyField::new(geometry.d, law.clone(), seed)?;
    let lhs = crossing_in(&field, rule, &outer, &outer.platform(outer.floor)).time();
    let mut rhs = Some(0u64);
    for layer in geometry.layers() {
        let mut worst = 0;
        for g in &layer {
            match crossing_in(&field, rule, g, &g.platform(g.floor)).time() {
                Some(t) => worst = worst.max(t),
                None => return Ok(SupTInstance { seed, lhs, rhs: None }),
            }
        }
        rhs = rhs.map(|total| total + worst);
    }
    Ok(SupTInstance { seed, lhs, rhs })
}
