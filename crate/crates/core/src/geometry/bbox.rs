use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest supported ambient dimension.
pub const MIN_DIM: usize = 2;
/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 4;

/// Axis-aligned window `[lo, hi]` in world units.
///
/// Every grid and every clipped scene lives inside one of these. Unbounded
/// sets are always observed through such a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoundingBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        // Sub-dimensional boxes are needed for slices, so only the upper
        // bound is enforced here; grids check the lower one.
        if lo.is_empty() || lo.len() > MAX_DIM {
            return Err(Error::UnsupportedDim(lo.len()));
        }
        for (axis, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::InvalidBox(format!(
                    "axis {axis}: need finite lo < hi, got [{l}, {h}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Drops `axis`, giving the box of a slice.
    pub fn without_axis(&self, axis: usize) -> Result<Self> {
        let keep = |v: &Vec<f64>| {
            v.iter()
                .enumerate()
                .filter(|(i, _)| *i != axis)
                .map(|(_, x)| *x)
                .collect::<Vec<_>>()
        };
        Self::new(keep(&self.lo), keep(&self.hi))
    }

    /// All `2^n` corners, lowest first.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.hi[i]
                        } else {
                            self.lo[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_axis() {
        assert!(BoundingBox::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(BoundingBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn corners_cover_box() {
        let b = BoundingBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        let c = b.corners();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0], vec![-1.0, 0.0]);
        assert_eq!(c[3], vec![1.0, 2.0]);
    }
}
