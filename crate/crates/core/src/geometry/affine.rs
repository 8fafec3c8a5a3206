use serde::{Deserialize, Serialize};

use super::bbox::MAX_DIM;
use crate::error::{Error, Result};

/// Rows shorter than this after orthogonalisation are treated as dependent.
const RANK_TOL: f64 = 1e-10;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// An affine flat `{x : normals[i]·(x - point) = 0 for all i}`.
///
/// `normals` are orthonormal; their count is the codimension. `basis` spans
/// the flat's direction space and is orthonormal as well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSubspace {
    point: Vec<f64>,
    normals: Vec<Vec<f64>>,
    basis: Vec<Vec<f64>>,
}

impl AffineSubspace {
    /// The solution set of `rows[i]·x = rhs[i]`.
    ///
    /// Dependent rows are dropped when consistent. An inconsistent system,
    /// or one with no effective rows, is `DegenerateParams`.
    pub fn from_equations(rows: &[Vec<f64>], rhs: &[f64]) -> Result<Self> {
        let n = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::DegenerateParams("no equations".into()))?;
        if rows.len() != rhs.len() {
            return Err(Error::InvalidArgument("rows and rhs differ in length".into()));
        }
        let mut normals: Vec<Vec<f64>> = Vec::new();
        let mut offsets: Vec<f64> = Vec::new();
        for (row, &b) in rows.iter().zip(rhs) {
            if row.len() != n {
                return Err(Error::DimMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            let scale = norm(row).max(1.0);
            let mut r = row.clone();
            let mut c = b;
            for (q, &cq) in normals.iter().zip(&offsets) {
                let k = dot(&r, q);
                for (ri, qi) in r.iter_mut().zip(q) {
                    *ri -= k * qi;
                }
                c -= k * cq;
            }
            let len = norm(&r);
            if len <= RANK_TOL * scale {
                if c.abs() > 1e-9 * scale.max(b.abs()) {
                    return Err(Error::DegenerateParams(
                        "inconsistent linear system (empty flat)".into(),
                    ));
                }
                continue;
            }
            normals.push(r.iter().map(|v| v / len).collect());
            offsets.push(c / len);
        }
        if normals.is_empty() {
            return Err(Error::DegenerateParams(
                "equations constrain nothing (whole space)".into(),
            ));
        }
        let mut point = vec![0.0; n];
        for (q, &c) in normals.iter().zip(&offsets) {
            for (p, qi) in point.iter_mut().zip(q) {
                *p += c * qi;
            }
        }
        Ok(Self::assemble(point, normals))
    }

    /// Flat through `point` with the given normals, which are
    /// orthonormalised first.
    pub fn new(point: Vec<f64>, normals: Vec<Vec<f64>>) -> Result<Self> {
        let rhs: Vec<f64> = normals.iter().map(|q| dot(q, &point)).collect();
        let flat = Self::from_equations(&normals, &rhs)?;
        if flat.codim() != normals.len() {
            return Err(Error::DegenerateParams("dependent normals".into()));
        }
        Ok(Self { point, ..flat })
    }

    /// Hyperplane `normal·x = offset`.
    pub fn hyperplane(normal: Vec<f64>, offset: f64) -> Result<Self> {
        Self::from_equations(&[normal], &[offset])
    }

    /// Line through `point` along `dir`.
    pub fn line(point: Vec<f64>, dir: Vec<f64>) -> Result<Self> {
        let n = point.len();
        if dir.len() != n {
            return Err(Error::DimMismatch {
                expected: n,
                got: dir.len(),
            });
        }
        let d = norm(&dir);
        if d < RANK_TOL {
            return Err(Error::DegenerateParams("zero direction".into()));
        }
        let u: Vec<f64> = dir.iter().map(|v| v / d).collect();
        let normals = complete_basis(&[u.clone()], n);
        let mut flat = Self::new(point, normals)?;
        flat.basis = vec![u];
        Ok(flat)
    }

    fn assemble(point: Vec<f64>, normals: Vec<Vec<f64>>) -> Self {
        let n = point.len();
        let basis = complete_basis(&normals, n);
        Self {
            point,
            normals,
            basis,
        }
    }

    pub fn dim_ambient(&self) -> usize {
        self.point.len()
    }

    pub fn codim(&self) -> usize {
        self.normals.len()
    }

    /// Dimension of the flat itself.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// Largest residual `|normals[i]·(x - point)|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.normals
            .iter()
            .map(|q| {
                q.iter()
                    .zip(x.iter().zip(&self.point))
                    .map(|(qi, (xi, pi))| qi * (xi - pi))
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64], eps: f64) -> bool {
        self.residual(x) <= eps
    }

    /// `point + Σ coeffs[j]·basis[j]`.
    pub fn point_at(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut x = self.point.clone();
        for (b, &c) in self.basis.iter().zip(coeffs) {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += c * bi;
            }
        }
        x
    }

    /// Whether the flat meets the closed box `[lo - eps, hi + eps]`.
    pub fn meets_box(&self, lo: &[f64], hi: &[f64], eps: f64) -> bool {
        debug_assert_eq!(lo.len(), self.dim_ambient());
        match (self.codim(), self.dim()) {
            (_, 0) => self
                .point
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(p, (l, h))| *l - eps <= *p && *p <= *h + eps),
            (1, _) => self.hyperplane_meets(lo, hi, eps),
            (_, 1) => self.line_meets(lo, hi, eps),
            _ => self.meets_box_elimination(lo, hi, eps),
        }
    }

    fn hyperplane_meets(&self, lo: &[f64], hi: &[f64], eps: f64) -> bool {
        let q = &self.normals[0];
        let c = dot(q, &self.point);
        let (mut smin, mut smax) = (0.0, 0.0);
        for i in 0..q.len() {
            let a = q[i] * (lo[i] - eps);
            let b = q[i] * (hi[i] + eps);
            smin += a.min(b);
            smax += a.max(b);
        }
        smin <= c && c <= smax
    }

    fn line_meets(&self, lo: &[f64], hi: &[f64], eps: f64) -> bool {
        self.line_interval(lo, hi, eps).is_some()
    }

    /// Parameter interval of the line inside the expanded box (lines only).
    pub(crate) fn line_interval(&self, lo: &[f64], hi: &[f64], eps: f64) -> Option<(f64, f64)> {
        let u = &self.basis[0];
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..u.len() {
            let (l, h) = (lo[i] - eps, hi[i] + eps);
            let p = self.point[i];
            if u[i].abs() < 1e-300 {
                if p < l || p > h {
                    return None;
                }
            } else {
                let a = (l - p) / u[i];
                let b = (h - p) / u[i];
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }

    /// Dimension-generic route: Fourier–Motzkin elimination over the flat's
    /// own coordinates `u`, subject to `lo - eps <= point + B u <= hi + eps`.
    pub fn meets_box_elimination(&self, lo: &[f64], hi: &[f64], eps: f64) -> bool {
        let d = self.dim();
        // Each constraint is (a, b) meaning a·u <= b.
        let mut cons: Vec<([f64; MAX_DIM], f64)> = Vec::with_capacity(2 * lo.len());
        for i in 0..lo.len() {
            let mut a = [0.0; MAX_DIM];
            for (j, b) in self.basis.iter().enumerate() {
                a[j] = b[i];
            }
            let neg = a.map(|v| -v);
            cons.push((a, hi[i] + eps - self.point[i]));
            cons.push((neg, self.point[i] - lo[i] + eps));
        }
        fourier_motzkin(cons, d)
    }
}

/// Feasibility of `{u : a·u <= b}` by eliminating variables from the last.
fn fourier_motzkin(mut cons: Vec<([f64; MAX_DIM], f64)>, vars: usize) -> bool {
    const ZERO: f64 = 1e-13;
    for k in (0..vars).rev() {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut rest = Vec::new();
        for (a, b) in cons {
            if a[k] > ZERO {
                pos.push((a.map(|v| v / a[k]), b / a[k]));
            } else if a[k] < -ZERO {
                let s = -a[k];
                neg.push((a.map(|v| v / s), b / s));
            } else {
                let mut a = a;
                a[k] = 0.0;
                rest.push((a, b));
            }
        }
        for (ap, bp) in &pos {
            for (an, bn) in &neg {
                let mut a = [0.0; MAX_DIM];
                for j in 0..k {
                    a[j] = ap[j] + an[j];
                }
                rest.push((a, bp + bn));
            }
        }
        cons = rest;
    }
    cons.iter().all(|(_, b)| *b >= -1e-12)
}

/// Extends orthonormal `vecs` with coordinate-derived vectors to an
/// orthonormal basis of the orthogonal complement.
pub(crate) fn complete_basis(vecs: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    let mut all: Vec<Vec<f64>> = vecs.to_vec();
    let mut out = Vec::new();
    // Try axes in order of smallest projection onto the existing span, which
    // keeps the Gram-Schmidt step well conditioned.
    let mut axes: Vec<usize> = (0..n).collect();
    axes.sort_by(|&a, &b| {
        let pa: f64 = vecs.iter().map(|v| v[a] * v[a]).sum();
        let pb: f64 = vecs.iter().map(|v| v[b] * v[b]).sum();
        pa.total_cmp(&pb)
    });
    for axis in axes {
        if all.len() == n {
            break;
        }
        let mut e = vec![0.0; n];
        e[axis] = 1.0;
        for _ in 0..2 {
            for q in &all {
                let k = dot(&e, q);
                for (ei, qi) in e.iter_mut().zip(q) {
                    *ei -= k * qi;
                }
            }
        }
        let len = norm(&e);
        if len > 1e-6 {
            let e: Vec<f64> = e.iter().map(|v| v / len).collect();
            all.push(e.clone());
            out.push(e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normals_orthonormal() {
        let f = AffineSubspace::from_equations(
            &[vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]],
            &[1.0, 2.0],
        )
        .unwrap();
        assert_eq!(f.codim(), 2);
        assert_eq!(f.dim(), 1);
        for (i, a) in f.normals().iter().enumerate() {
            assert!((norm(a) - 1.0).abs() < 1e-12);
            for b in &f.normals()[i + 1..] {
                assert!(dot(a, b).abs() < 1e-12);
            }
            assert!(dot(a, &f.basis()[0]).abs() < 1e-12);
        }
        assert!(f.contains(&[1.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn inconsistent_system_is_degenerate() {
        let r = AffineSubspace::from_equations(&[vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 2.0]], &[1.0, 3.0]);
        assert!(matches!(r, Err(Error::DegenerateParams(_))));
        let r = AffineSubspace::from_equations(&[vec![0.0, 0.0, 0.0]], &[0.0]);
        assert!(matches!(r, Err(Error::DegenerateParams(_))));
    }

    #[test]
    fn dependent_consistent_rows_collapse() {
        let f = AffineSubspace::from_equations(&[vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 2.0]], &[1.0, 2.0])
            .unwrap();
        assert_eq!(f.codim(), 1);
    }

    #[test]
    fn plane_through_cube() {
        let f = AffineSubspace::hyperplane(vec![0.0, 0.0, 1.0], 0.0).unwrap();
        assert!(f.meets_box(&[-1.0, -1.0, -0.5], &[0.0, 0.0, 0.5], 0.0));
        assert!(!f.meets_box(&[-1.0, -1.0, 0.1], &[0.0, 0.0, 0.5], 0.0));
    }

    #[test]
    fn line_outside_box() {
        let f = AffineSubspace::from_equations(
            &[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            &[5.0, 5.0],
        )
        .unwrap();
        assert!(!f.meets_box(&[0.0; 3], &[1.0; 3], 1e-9));
        assert!(!f.meets_box_elimination(&[0.0; 3], &[1.0; 3], 1e-9));
    }

    #[test]
    fn corner_touch_counts() {
        // Line y = x + 1 touches the unit square [0,1]x[0,1] only at (0,1).
        let f = AffineSubspace::hyperplane(vec![-1.0, 1.0], 1.0).unwrap();
        assert!(f.meets_box(&[0.0, 0.0], &[1.0, 1.0], 1e-12));
        assert!(!f.meets_box(&[0.0, 0.0], &[1.0, 0.99], 1e-12));
    }
}
