use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::FamilyW;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{AffineSubspace, BoundingBox, GridSpec, VoxelGrid};

/// Projective map of `R^3` given by a 4×4 homogeneous matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveMap {
    m: Matrix4<f64>,
    inv: Matrix4<f64>,
    /// The plane sent to infinity.
    singular: AffineSubspace,
}

fn hom(m: &Matrix4<f64>, x: &[f64], eps: f64) -> Option<Vec<f64>> {
    let v = m * Vector4::new(x[0], x[1], x[2], 1.0);
    if v[3].abs() <= eps {
        return None;
    }
    Some(vec![v[0] / v[3], v[1] / v[3], v[2] / v[3]])
}

impl ProjectiveMap {
    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn inverse_matrix(&self) -> &Matrix4<f64> {
        &self.inv
    }

    pub fn singular_plane(&self) -> &AffineSubspace {
        &self.singular
    }

    /// Signed distance from `x` to the singular plane.
    pub fn singular_distance(&self, x: &[f64]) -> f64 {
        self.singular.residual(x)
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(3, x.len())?;
        hom(&self.m, x, 1e-12).ok_or(Error::NearSingular {
            distance: self.singular_distance(x).abs(),
        })
    }

    /// Fails with `NearSingular` for points of the plane at infinity of
    /// the target, whose preimages lie on the singular plane.
    pub fn apply_inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_dim(3, y.len())?;
        hom(&self.inv, y, 1e-12).ok_or(Error::NearSingular { distance: 0.0 })
    }

    /// Bounding box of the image of `g`'s occupied cells.
    ///
    /// Each cube is mapped through its corners, which is exact because the
    /// image of a cube that avoids the singular plane is the hull of its
    /// corner images.
    pub fn image_bounds(&self, g: &VoxelGrid) -> Result<BoundingBox> {
        check_dim(3, g.dim())?;
        if g.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut lo = vec![f64::INFINITY; 3];
        let mut hi = vec![f64::NEG_INFINITY; 3];
        for c in g.occupied() {
            let (a, b) = g.spec().cell_bounds(&g.spec().unravel(c)[..3]);
            for corner in BoundingBox::new(a, b)?.corners() {
                let y = self.apply(&corner)?;
                for k in 0..3 {
                    lo[k] = lo[k].min(y[k]);
                    hi[k] = hi[k].max(y[k]);
                }
            }
        }
        BoundingBox::new(lo, hi)
    }
}

/// Sends `delta0`, a plane of the pencil, to infinity.
///
/// After a rotation about the pencil axis that turns `delta0` into
/// `{x1 = 0}`, the map is `x ↦ (x2/x1, x3/x1, 1/x1)`. Pencil planes
/// `{x2 = t x1}` become the parallel planes `{y1 = t}`, so the image family
/// is lines in the slices `y1 = const`.
pub fn projective_normalize(pencil: &FamilyW, delta0: &AffineSubspace) -> Result<(ProjectiveMap, FamilyW)> {
    if *pencil != FamilyW::PencilLines3D {
        return Err(Error::InvalidArgument(format!(
            "projective normalisation needs the pencil family, got {}",
            pencil.name()
        )));
    }
    check_dim(3, delta0.dim_ambient())?;
    if delta0.codim() != 1
        || !delta0.contains(&[0.0, 0.0, 0.0], 1e-9)
        || !delta0.contains(&[0.0, 0.0, 1.0], 1e-9)
    {
        return Err(Error::PlaneNotInPencil);
    }
    let q = &delta0.normals()[0];
    let r = q[0].hypot(q[1]);
    let (p, s) = (q[0] / r, q[1] / r);
    #[rustfmt::skip]
    let rot = Matrix4::new(
        p,   s,   0.0, 0.0,
        -s,  p,   0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let swap = Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        1.0, 0.0, 0.0, 0.0,
    );
    let m = swap * rot;
    let inv = rot.transpose() * swap.transpose();
    let map = ProjectiveMap {
        m,
        inv,
        singular: delta0.clone(),
    };
    Ok((map, FamilyW::parallel_codim2(3, 0)?))
}

/// Pulls `g` back through `map` onto a new grid: a target cell is occupied
/// iff the preimage of its center lies in an occupied cell of `g`.
///
/// Every occupied cell of `g` must stay at least one cell diameter away
/// from the singular plane.
pub fn resample_through_map(g: &VoxelGrid, map: &ProjectiveMap, target: GridSpec) -> Result<VoxelGrid> {
    check_dim(3, g.dim())?;
    check_dim(3, target.dim())?;
    let spec = g.spec();
    let diam = (0..3).map(|a| spec.cell_size(a).powi(2)).sum::<f64>().sqrt();
    for c in g.occupied() {
        let d = map.singular_distance(&spec.center(&spec.unravel(c)[..3])).abs();
        if d - 0.5 * diam < diam {
            return Err(Error::NearSingular {
                distance: (d - 0.5 * diam).max(0.0),
            });
        }
    }
    Ok(VoxelGrid::from_predicate(target, |y| {
        map.apply_inverse(y)
            .ok()
            .and_then(|x| spec.locate(&x))
            .is_some_and(|idx| g.get_idx(&idx[..3]))
    }))
}
