//! Lattice primitives: extended integer heights and axis-aligned boxes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported ambient dimension `d`.
pub const MAX_DIM: usize = 5;

/// Largest supported base dimension `d - 1`.
pub const MAX_BASE_DIM: usize = MAX_DIM - 1;

/// A surface height in `Z ∪ {-∞}`.
///
/// `-∞` is absorbing: `-∞ + 1 = -∞`. It compares below every finite height.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "Option<i64>", into = "Option<i64>")]
pub struct Height(i64);

impl Height {
    pub const NEG_INF: Height = Height(i64::MIN);

    /// A finite height. `i64::MIN` is reserved for `-∞`.
    #[inline]
    pub const fn new(v: i64) -> Self {
        assert!(v != i64::MIN, "i64::MIN is the -∞ sentinel");
        Height(v)
    }

    #[inline]
    pub const fn is_neg_inf(self) -> bool {
        self.0 == i64::MIN
    }

    #[inline]
    pub const fn is_finite(self) -> bool {
        !self.is_neg_inf()
    }

    #[inline]
    pub fn finite(self) -> Option<i64> {
        if self.is_neg_inf() {
            None
        } else {
            Some(self.0)
        }
    }

    /// Raw representation; `i64::MIN` for `-∞`.
    #[inline]
    pub const fn raw(self) -> i64 {
        self.0
    }

    /// `self + by` with the absorbing convention.
    #[inline]
    pub fn raised(self, by: i64) -> Self {
        if self.is_neg_inf() {
            self
        } else {
            Height(self.0 + by)
        }
    }

    /// Discrete difference `self - other`, `None` (i.e. `-∞`) when `self` is `-∞`.
    ///
    /// Only meaningful for a finite `other`.
    #[inline]
    pub fn minus(self, other: i64) -> Option<i64> {
        self.finite().map(|v| v - other)
    }
}

impl From<i64> for Height {
    fn from(v: i64) -> Self {
        Height::new(v)
    }
}

impl From<Option<i64>> for Height {
    fn from(v: Option<i64>) -> Self {
        v.map_or(Height::NEG_INF, Height::new)
    }
}

impl From<Height> for Option<i64> {
    fn from(h: Height) -> Self {
        h.finite()
    }
}

impl fmt::Debug for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.finite() {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("-inf"),
        }
    }
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Half-open axis-aligned box `[lo_0, hi_0) × … × [lo_{n-1}, hi_{n-1})` in `Z^n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::Usage("box must have at least one axis".into()));
        }
        // Inverted axes collapse to empty.
        let hi = lo.iter().zip(hi).map(|(&l, h)| h.max(l)).collect();
        Ok(LatticeBox { lo, hi })
    }

    /// `[origin, origin + side)` along every axis.
    pub fn cube(origin: &[i64], side: i64) -> Self {
        let hi = origin.iter().map(|&o| o + side.max(0)).collect();
        LatticeBox {
            lo: origin.to_vec(),
            hi,
        }
    }

    /// Cartesian product of `self` with `[lo, hi)` as the last axis.
    pub fn extend(&self, lo: i64, hi: i64) -> Self {
        let mut l = self.lo.clone();
        let mut h = self.hi.clone();
        l.push(lo);
        h.push(hi.max(lo));
        LatticeBox { lo: l, hi: h }
    }

    /// Drops the last axis.
    pub fn project(&self) -> Self {
        let n = self.dim() - 1;
        LatticeBox {
            lo: self.lo[..n].to_vec(),
            hi: self.hi[..n].to_vec(),
        }
    }

    pub fn translate(&self, by: &[i64]) -> Self {
        LatticeBox {
            lo: self.lo.iter().zip(by).map(|(a, b)| a + b).collect(),
            hi: self.hi.iter().zip(by).map(|(a, b)| a + b).collect(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    #[inline]
    pub fn side(&self, axis: usize) -> i64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim()).any(|k| self.side(k) <= 0)
    }

    pub fn volume(&self) -> u64 {
        (0..self.dim()).map(|k| self.side(k).max(0) as u64).product()
    }

    #[inline]
    pub fn contains(&self, p: &[i64]) -> bool {
        p.len() == self.dim() && p.iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v < self.hi[k])
    }

    /// Membership of the point `(base, height)`.
    #[inline]
    pub fn contains_split(&self, base: &[i64], height: i64) -> bool {
        let n = base.len();
        if n + 1 != self.dim() {
            return false;
        }
        base.iter().enumerate().all(|(k, &v)| v >= self.lo[k] && v < self.hi[k])
            && height >= self.lo[n]
            && height < self.hi[n]
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        other.is_empty()
            || (other.dim() == self.dim()
                && (0..self.dim()).all(|k| other.lo[k] >= self.lo[k] && other.hi[k] <= self.hi[k]))
    }

    pub fn intersect(&self, other: &LatticeBox) -> Result<LatticeBox> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let lo: Vec<i64> = self.lo.iter().zip(&other.lo).map(|(a, b)| *a.max(b)).collect();
        let hi: Vec<i64> = self.hi.iter().zip(&other.hi).map(|(a, b)| *a.min(b)).collect();
        LatticeBox::new(lo, hi)
    }

    /// Row-major index (last axis fastest) of a point inside the box.
    #[inline]
    pub fn index_of(&self, p: &[i64]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let mut idx = 0usize;
        for k in 0..self.dim() {
            idx = idx * self.side(k) as usize + (p[k] - self.lo[k]) as usize;
        }
        Some(idx)
    }

    /// Inverse of [`LatticeBox::index_of`].
    pub fn point_of(&self, mut idx: usize, out: &mut [i64]) {
        for k in (0..self.dim()).rev() {
            let s = self.side(k) as usize;
            out[k] = self.lo[k] + (idx % s) as i64;
            idx /= s;
        }
    }

    /// All points in row-major order.
    pub fn points(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        let n = if self.is_empty() { 0 } else { self.volume() as usize };
        (0..n).map(move |i| {
            let mut p = vec![0; self.dim()];
            self.point_of(i, &mut p);
            p
        })
    }

    /// L∞ distance between the two boxes as sets of lattice points.
    pub fn linf_distance(&self, other: &LatticeBox) -> i64 {
        (0..self.dim())
            .map(|k| {
                if other.lo[k] >= self.hi[k] {
                    other.lo[k] - (self.hi[k] - 1)
                } else if self.lo[k] >= other.hi[k] {
                    self.lo[k] - (other.hi[k] - 1)
                } else {
                    0
                }
            })
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neg_inf_is_absorbing() {
        assert_eq!(Height::NEG_INF.raised(1), Height::NEG_INF);
        assert_eq!(Height::new(3).raised(1), Height::new(4));
        assert!(Height::NEG_INF < Height::new(i64::MIN + 1));
    }

    #[test]
    fn height_serializes_as_optional_integer() {
        let v = serde_json::to_string(&[Height::new(-4), Height::NEG_INF]).unwrap();
        assert_eq!(v, "[-4,null]");
        let back: Vec<Height> = serde_json::from_str(&v).unwrap();
        assert_eq!(back, vec![Height::new(-4), Height::NEG_INF]);
    }

    #[test]
    fn index_round_trip() {
        let b = LatticeBox::new(vec![-2, 3, 0], vec![1, 5, 4]).unwrap();
        let mut p = [0; 3];
        for (i, q) in b.points().enumerate() {
            assert_eq!(b.index_of(&q), Some(i));
            b.point_of(i, &mut p);
            assert_eq!(&p[..], &q[..]);
        }
        assert_eq!(b.volume(), 24);
    }

    #[test]
    fn intersection_and_distance() {
        let a = LatticeBox::cube(&[0, 0], 3);
        let b = LatticeBox::cube(&[5, 1], 3);
        assert_eq!(a.linf_distance(&b), 3);
        assert!(a.intersect(&b).unwrap().is_empty());
        let c = LatticeBox::cube(&[1, 1], 3);
        assert_eq!(a.intersect(&c).unwrap(), LatticeBox::new(vec![1, 1], vec![3, 3]).unwrap());
        assert_eq!(a.linf_distance(&c), 0);
    }
}
