use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::lattice::{Height, LatticeBox, MAX_BASE_DIM};

/// How heights off the base box are defined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// `S(x) = -∞` off the base, the restricted-box convention.
    NegInf,
    /// The base is a torus.
    Periodic,
}

pub(crate) const NO_NEIGHBOR: u32 = u32::MAX;

#[derive(Debug)]
pub(crate) struct Topology {
    pub(crate) base: LatticeBox,
    pub(crate) boundary: Boundary,
    /// `len × base_dim` coordinates, row-major.
    pub(crate) coords: Vec<i64>,
    /// `len × 2·base_dim` neighbor indices in the order `(+e_1, -e_1, +e_2, -e_2, …)`.
    pub(crate) neighbors: Vec<u32>,
}

impl Topology {
    fn new(base: LatticeBox, boundary: Boundary) -> Result<Self> {
        let m = base.dim();
        if m == 0 || m > MAX_BASE_DIM {
            return Err(Error::UnsupportedDimension(m + 1));
        }
        if base.is_empty() {
            return usage("surface base must be non-empty");
        }
        let n = base.volume() as usize;
        if n >= NO_NEIGHBOR as usize {
            return usage("surface base too large");
        }
        let mut coords = vec![0i64; n * m];
        let mut neighbors = vec![NO_NEIGHBOR; n * 2 * m];
        let mut q = vec![0i64; m];
        for i in 0..n {
            base.point_of(i, &mut coords[i * m..(i + 1) * m]);
            for k in 0..m {
                for (s, delta) in [1i64, -1].into_iter().enumerate() {
                    q.copy_from_slice(&coords[i * m..(i + 1) * m]);
                    q[k] += delta;
                    if boundary == Boundary::Periodic {
                        let side = base.side(k);
                        q[k] = base.lo()[k] + (q[k] - base.lo()[k]).rem_euclid(side);
                    }
                    if let Some(j) = base.index_of(&q) {
                        neighbors[i * 2 * m + 2 * k + s] = j as u32;
                    }
                }
            }
        }
        Ok(Topology {
            base,
            boundary,
            coords,
            neighbors,
        })
    }

    #[inline]
    pub(crate) fn base_dim(&self) -> usize {
        self.base.dim()
    }

    #[inline]
    pub(crate) fn coords(&self, i: usize) -> &[i64] {
        let m = self.base_dim();
        &self.coords[i * m..(i + 1) * m]
    }

    #[inline]
    pub(crate) fn neighbors(&self, i: usize) -> &[u32] {
        let w = 2 * self.base_dim();
        &self.neighbors[i * w..(i + 1) * w]
    }
}

/// A height function over a finite base box in `Z^{d-1}`.
///
/// Surfaces are cheap to clone: the neighbor structure is shared.
#[derive(Clone)]
pub struct Surface {
    pub(crate) topo: Arc<Topology>,
    pub(crate) heights: Vec<Height>,
}

impl Surface {
    pub fn new(base: LatticeBox, boundary: Boundary, heights: Vec<Height>) -> Result<Self> {
        let topo = Topology::new(base, boundary)?;
        if heights.len() != topo.coords.len() / topo.base_dim() {
            return usage(format!(
                "expected {} heights, got {}",
                topo.base.volume(),
                heights.len()
            ));
        }
        Ok(Surface {
            topo: Arc::new(topo),
            heights,
        })
    }

    pub fn flat(base: LatticeBox, boundary: Boundary, level: Height) -> Result<Self> {
        let n = base.volume() as usize;
        Surface::new(base, boundary, vec![level; n])
    }

    pub fn from_fn(base: LatticeBox, boundary: Boundary, mut f: impl FnMut(&[i64]) -> Height) -> Result<Self> {
        let heights = base.points().map(|p| f(&p)).collect();
        Surface::new(base, boundary, heights)
    }

    /// A surface on the same base with new heights.
    pub fn with_heights(&self, heights: Vec<Height>) -> Result<Self> {
        if heights.len() != self.heights.len() {
            return usage("height vector length does not match the base");
        }
        Ok(Surface {
            topo: Arc::clone(&self.topo),
            heights,
        })
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.topo.base_dim() + 1
    }

    pub fn base(&self) -> &LatticeBox {
        &self.topo.base
    }

    pub fn boundary(&self) -> Boundary {
        self.topo.boundary
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn heights(&self) -> &[Height] {
        &self.heights
    }

    pub fn into_heights(self) -> Vec<Height> {
        self.heights
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        self.topo.base.index_of(x)
    }

    pub fn coords(&self, i: usize) -> &[i64] {
        self.topo.coords(i)
    }

    /// `S(x)` for any `x ∈ Z^{d-1}`, extended by the boundary mode.
    pub fn height(&self, x: &[i64]) -> Height {
        let base = &self.topo.base;
        match self.topo.boundary {
            Boundary::NegInf => base.index_of(x).map_or(Height::NEG_INF, |i| self.heights[i]),
            Boundary::Periodic => {
                let wrapped: Vec<i64> = x
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| base.lo()[k] + (v - base.lo()[k]).rem_euclid(base.side(k)))
                    .collect();
                base.index_of(&wrapped).map_or(Height::NEG_INF, |i| self.heights[i])
            }
        }
    }

    /// Height of the neighbor of site `i` in direction `dir`, in the order
    /// `(+e_1, -e_1, +e_2, -e_2, …)`.
    #[inline]
    pub fn neighbor_height(&self, i: usize, dir: usize) -> Height {
        match self.topo.neighbors(i)[dir] {
            NO_NEIGHBOR => Height::NEG_INF,
            j => self.heights[j as usize],
        }
    }

    /// Discrete gradients `∂_e S(x) = S(x+e) - S(x)` at site `i` in the
    /// canonical order; `-∞` entries where the neighbor is `-∞`.
    pub fn gradients(&self, i: usize) -> Vec<Height> {
        let h = self.heights[i];
        (0..2 * self.topo.base_dim())
            .map(|dir| match (self.neighbor_height(i, dir).finite(), h.finite()) {
                (Some(n), Some(s)) => Height::new(n - s),
                _ => Height::NEG_INF,
            })
            .collect()
    }

    /// Discrete Laplacian `Σ_k S(x+e_k) - 2S(x) + S(x-e_k)`; `-∞` when any
    /// involved height is `-∞`.
    pub fn laplacian(&self, x: &[i64]) -> Result<Height> {
        let i = self
            .index_of(x)
            .ok_or_else(|| Error::Usage(format!("point {x:?} is not in the base")))?;
        Ok(self.laplacian_at(i))
    }

    pub(crate) fn laplacian_at(&self, i: usize) -> Height {
        let Some(s) = self.heights[i].finite() else {
            return Height::NEG_INF;
        };
        let mut acc = 0i64;
        for dir in 0..2 * self.topo.base_dim() {
            match self.neighbor_height(i, dir).finite() {
                Some(n) => acc += n - s,
                None => return Height::NEG_INF,
            }
        }
        Height::new(acc)
    }

    /// Pointwise `self <= other` on a common base.
    pub fn le(&self, other: &Surface) -> bool {
        self.heights.len() == other.heights.len() && self.heights.iter().zip(&other.heights).all(|(a, b)| a <= b)
    }

    /// Both sides of the discrete divergence identity on `bx ⊆ base`:
    /// `Σ_{x∈B} ΔS(x)` and `Σ_{x∈B, y∉B, |x-y|=1} S(y) - S(x)`.
    pub fn divergence_check(&self, bx: &LatticeBox) -> Result<(i64, i64)> {
        if !self.base().contains_box(bx) {
            return usage("divergence box must lie inside the base");
        }
        let mut lhs = 0i64;
        let mut rhs = 0i64;
        for x in bx.points() {
            let i = self.index_of(&x).expect("inside base");
            lhs += self
                .laplacian_at(i)
                .finite()
                .ok_or_else(|| Error::Usage(format!("-∞ height next to {x:?}")))?;
            let s = self.heights[i].finite().expect("finite when laplacian is");
            for dir in 0..2 * self.topo.base_dim() {
                let j = self.topo.neighbors(i)[dir];
                let outside = j == NO_NEIGHBOR || !bx.contains(self.coords(j as usize));
                if outside {
                    let y = self.neighbor_height(i, dir).finite().ok_or_else(|| {
                        Error::Usage(format!("-∞ height across the boundary at {x:?}"))
                    })?;
                    rhs += y - s;
                }
            }
        }
        Ok((lhs, rhs))
    }

    /// Serializable view.
    pub fn snapshot(&self) -> SurfaceRecord {
        SurfaceRecord {
            lo: self.base().lo().to_vec(),
            hi: self.base().hi().to_vec(),
            boundary: self.boundary(),
            heights: self.heights.clone(),
        }
    }
}

impl PartialEq for Surface {
    fn eq(&self, other: &Self) -> bool {
        self.topo.base == other.topo.base && self.topo.boundary == other.topo.boundary && self.heights == other.heights
    }
}

impl fmt::Debug for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Surface")
            .field("base", &self.topo.base)
            .field("boundary", &self.topo.boundary)
            .field("heights", &self.heights)
            .finish()
    }
}

/// Plain-data form of a [`Surface`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRecord {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    pub boundary: Boundary,
    pub heights: Vec<Height>,
}

impl TryFrom<SurfaceRecord> for Surface {
    type Error = Error;

    fn try_from(r: SurfaceRecord) -> Result<Self> {
        Surface::new(LatticeBox::new(r.lo, r.hi)?, r.boundary, r.heights)
    }
}

impl Serialize for Surface {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.snapshot().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Surface {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SurfaceRecord::deserialize(d)?;
        Surface::try_from(r).map_err(serde::de::Error::custom)
    }
}
