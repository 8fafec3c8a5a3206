//! Parameterised families of affine flats, their charts and samplers.

mod projective;
mod through;

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dot, AffineSubspace, BoundingBox, MAX_DIM, MIN_DIM};
use crate::sampling::{self, canonicalize, kronecker, SIGN_TOL};

pub use projective::{projective_normalize, resample_through_map, ProjectiveMap};
pub use through::{elements_through, ThroughSampler};

/// Skew-symmetry tolerance for `SkewOperator`.
const SKEW_TOL: f64 = 1e-12;

/// A family `W` of affine flats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum FamilyW {
    /// Every hyperplane of `R^n`. Chart `(u; d)`: `u·x = d`, `u` on the
    /// unit hemisphere.
    #[serde(rename = "all_hyperplanes")]
    AllHyperplanes { n: usize },
    /// Lines of `R^3` parallel to `{x3 = 0}`. Chart `(a:b:c; d)`:
    /// `x3 = d, a x1 + b x2 + c x3 = 0`.
    #[serde(rename = "parallel_lines_3d")]
    ParallelLines3D,
    /// Lines lying in planes through the axis `{x1 = x2 = 0}`, plus the
    /// planes perpendicular to it. Chart `(a':b':c':d')`:
    /// `a'x1 + b'x2 + c'x3 + d' = 0, -b'x1 + a'x2 = 0`.
    #[serde(rename = "pencil_lines_3d")]
    PencilLines3D,
    /// Flats `{x : <(x,1), y> = 0, <(x,1), A y> = 0}` for `y` in `RP^n`,
    /// where `A` is a skew `(n+1)×(n+1)` matrix on homogeneous coordinates.
    #[serde(rename = "skew_operator")]
    SkewOperator { a: Vec<Vec<f64>> },
    /// `(n-2)`-flats lying in a slice `x_axis = d`. Chart `(u; t; d)`: the
    /// hyperplane `u·x' = t` of the slice, with `x'` the other coordinates.
    #[serde(rename = "parallel_codim2")]
    ParallelCodim2 { n: usize, axis: usize },
    /// Preimages of `base` under the projection that forgets `axis`.
    #[serde(rename = "cylinder")]
    Cylinder { base: Box<FamilyW>, axis: usize },
}

/// A point of a family's chart, stored in canonical form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSample {
    coords: Vec<f64>,
    degenerate: bool,
}

impl ParamSample {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Set for chart points whose element drops to codimension 1 (pencil
    /// planes with `a' = b' = 0`, skew points with `A y = 0`).
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Lexicographic order on coordinates.
    pub fn lex_cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.total_cmp(b) {
                Ordering::Equal => {}
                o => return o,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }
}

fn check_ambient(n: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(Error::UnsupportedDim(n))
    }
}

/// Inserts a zero at `axis`.
fn embed(v: &[f64], axis: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    out.extend_from_slice(&v[..axis]);
    out.push(0.0);
    out.extend_from_slice(&v[axis..]);
    out
}

/// Drops the coordinate at `axis`.
pub(crate) fn drop_axis(v: &[f64], axis: usize) -> Vec<f64> {
    v.iter()
        .enumerate()
        .filter(|(i, _)| *i != axis)
        .map(|(_, x)| *x)
        .collect()
}

fn range_of(u: &[f64], b: &BoundingBox) -> (f64, f64) {
    b.corners()
        .iter()
        .map(|c| dot(u, c))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

impl FamilyW {
    pub fn all_hyperplanes(n: usize) -> Result<Self> {
        check_ambient(n)?;
        Ok(Self::AllHyperplanes { n })
    }

    /// `a` must be square of size `n + 1` and skew within 1e-12.
    pub fn skew_operator(a: Vec<Vec<f64>>) -> Result<Self> {
        let m = a.len();
        check_ambient(m.saturating_sub(1))?;
        for (i, row) in a.iter().enumerate() {
            check_dim(m, row.len())?;
            for j in 0..m {
                if (row[j] + a[j][i]).abs() > SKEW_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "operator is not skew at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::SkewOperator { a })
    }

    pub fn parallel_codim2(n: usize, axis: usize) -> Result<Self> {
        check_ambient(n)?;
        if n < 3 || axis >= n {
            return Err(Error::InvalidArgument(format!(
                "parallel_codim2 needs n >= 3 and axis < n, got n={n}, axis={axis}"
            )));
        }
        Ok(Self::ParallelCodim2 { n, axis })
    }

    pub fn cylinder(base: FamilyW, axis: usize) -> Result<Self> {
        let n = base.dim() + 1;
        check_ambient(n)?;
        if axis >= n {
            return Err(Error::InvalidArgument(format!("axis {axis} >= {n}")));
        }
        Ok(Self::Cylinder {
            base: Box::new(base),
            axis,
        })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            Self::AllHyperplanes { n } | Self::ParallelCodim2 { n, .. } => *n,
            Self::ParallelLines3D | Self::PencilLines3D => 3,
            Self::SkewOperator { a } => a.len() - 1,
            Self::Cylinder { base, .. } => base.dim() + 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AllHyperplanes { .. } => "all_hyperplanes",
            Self::ParallelLines3D => "parallel_lines_3d",
            Self::PencilLines3D => "pencil_lines_3d",
            Self::SkewOperator { .. } => "skew_operator",
            Self::ParallelCodim2 { .. } => "parallel_codim2",
            Self::Cylinder { .. } => "cylinder",
        }
    }

    /// Number of chart coordinates.
    pub fn chart_len(&self) -> usize {
        match self {
            Self::AllHyperplanes { n } => n + 1,
            Self::ParallelLines3D | Self::PencilLines3D => 4,
            Self::SkewOperator { a } => a.len(),
            Self::ParallelCodim2 { n, .. } => n + 1,
            Self::Cylinder { base, .. } => base.chart_len(),
        }
    }

    /// Canonicalises raw chart coordinates.
    pub fn param(&self, mut coords: Vec<f64>) -> Result<ParamSample> {
        check_dim(self.chart_len(), coords.len())?;
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::DegenerateParams("non-finite coordinate".into()));
        }
        let zero = || Error::DegenerateParams("zero projective vector".into());
        let degenerate = match self {
            Self::AllHyperplanes { n } | Self::ParallelCodim2 { n, .. } => {
                // Direction part is projective; the offset scales with it.
                let k = match self {
                    Self::AllHyperplanes { .. } => *n,
                    _ => n - 1,
                };
                let f = canonicalize(&mut coords[..k]).ok_or_else(zero)?;
                coords[k] *= f;
                false
            }
            Self::ParallelLines3D => {
                canonicalize(&mut coords[..3]).ok_or_else(zero)?;
                if coords[0] == 0.0 && coords[1] == 0.0 {
                    return Err(Error::DegenerateParams(
                        "parallel-lines chart needs (a, b) != (0, 0)".into(),
                    ));
                }
                false
            }
            Self::PencilLines3D => {
                canonicalize(&mut coords).ok_or_else(zero)?;
                coords[0] == 0.0 && coords[1] == 0.0
            }
            Self::SkewOperator { .. } => {
                canonicalize(&mut coords).ok_or_else(zero)?;
                let s = ParamSample {
                    coords,
                    degenerate: false,
                };
                let codim = self.element(&s)?.codim();
                return Ok(ParamSample {
                    degenerate: codim == 1,
                    ..s
                });
            }
            Self::Cylinder { base, .. } => return base.param(coords),
        };
        Ok(ParamSample { coords, degenerate })
    }

    /// The flat named by a chart point.
    pub fn element(&self, p: &ParamSample) -> Result<AffineSubspace> {
        let c = &p.coords;
        check_dim(self.chart_len(), c.len())?;
        match self {
            Self::AllHyperplanes { n } => AffineSubspace::hyperplane(c[..*n].to_vec(), c[*n]),
            Self::ParallelLines3D => {
                if c[0].abs() <= SIGN_TOL && c[1].abs() <= SIGN_TOL {
                    return Err(Error::DegenerateParams(
                        "parallel-lines chart needs (a, b) != (0, 0)".into(),
                    ));
                }
                AffineSubspace::from_equations(
                    &[vec![0.0, 0.0, 1.0], vec![c[0], c[1], c[2]]],
                    &[c[3], 0.0],
                )
            }
            Self::PencilLines3D => AffineSubspace::from_equations(
                &[vec![c[0], c[1], c[2]], vec![-c[1], c[0], 0.0]],
                &[-c[3], 0.0],
            ),
            Self::SkewOperator { a } => {
                let n = a.len() - 1;
                let ay: Vec<f64> = a.iter().map(|row| dot(row, c)).collect();
                AffineSubspace::from_equations(
                    &[c[..n].to_vec(), ay[..n].to_vec()],
                    &[-c[n], -ay[n]],
                )
            }
            Self::ParallelCodim2 { n, axis } => {
                let mut slice_axis = vec![0.0; *n];
                slice_axis[*axis] = 1.0;
                AffineSubspace::from_equations(
                    &[slice_axis, embed(&c[..n - 1], *axis)],
                    &[c[*n], c[n - 1]],
                )
            }
            Self::Cylinder { base, axis } => {
                let f = base.element(p)?;
                let point = embed(f.point(), *axis);
                let rows: Vec<Vec<f64>> = f.normals().iter().map(|q| embed(q, *axis)).collect();
                let rhs: Vec<f64> = rows.iter().map(|q| dot(q, &point)).collect();
                AffineSubspace::from_equations(&rows, &rhs)
            }
        }
    }

    /// A finite, sorted, duplicate-free stand-in for the family, restricted
    /// to elements that can meet `bbox`.
    ///
    /// The result has between `budget` and `2 * budget` entries (fewer only
    /// when chart points collapse under canonicalisation).
    pub fn sample_params(&self, budget: usize, bbox: &BoundingBox, seed: u64) -> Result<Vec<ParamSample>> {
        if budget == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        check_dim(self.dim(), bbox.dim())?;
        let mut rng = sampling::rng(seed, 1);
        let shift: f64 = rng.gen();
        let tshift: [f64; 2] = rng.gen();
        let mut out = Vec::with_capacity(budget);
        match self {
            Self::AllHyperplanes { n } => {
                for (i, u) in sampling::hemisphere(*n, budget, shift, &mut rng).into_iter().enumerate() {
                    let (lo, hi) = range_of(&u, bbox);
                    let d = lo + kronecker(i, 0, tshift[0]) * (hi - lo);
                    let mut c = u;
                    c.push(d);
                    out.push(self.param(c)?);
                }
            }
            Self::ParallelLines3D => {
                let (lo, hi) = (bbox.lo()[2], bbox.hi()[2]);
                for (i, u) in sampling::hemisphere(3, budget, shift, &mut rng).into_iter().enumerate() {
                    let d = lo + kronecker(i, 0, tshift[0]) * (hi - lo);
                    let mut c = u;
                    c.push(d);
                    // (a, b) = (0, 0) is the excluded chart point.
                    if let Ok(p) = self.param(c) {
                        out.push(p);
                    }
                }
            }
            Self::PencilLines3D => {
                for u in sampling::hemisphere(4, budget, shift, &mut rng) {
                    out.push(self.param(u)?);
                }
                // Planes x3 = t perpendicular to the axis.
                let q = (budget as f64).sqrt().ceil() as usize;
                let (lo, hi) = (bbox.lo()[2], bbox.hi()[2]);
                for j in 0..q {
                    let t = lo + (j as f64 + 0.5) / q as f64 * (hi - lo);
                    out.push(self.param(vec![0.0, 0.0, 1.0, -t])?);
                }
            }
            Self::SkewOperator { a } => {
                let m = a.len();
                for y in sampling::hemisphere(m, budget, shift, &mut rng) {
                    // Points at infinity name no flat.
                    if let Ok(p) = self.param(y) {
                        out.push(p);
                    }
                }
                let ker = kernel(a);
                if !ker.is_empty() && ker.len() < m {
                    let q = if ker.len() == 1 {
                        1
                    } else {
                        (budget as f64).sqrt().ceil() as usize
                    };
                    for w in sampling::hemisphere(ker.len(), q, shift, &mut rng) {
                        let mut y = vec![0.0; m];
                        for (wj, kj) in w.iter().zip(&ker) {
                            for (yi, ki) in y.iter_mut().zip(kj) {
                                *yi += wj * ki;
                            }
                        }
                        if let Ok(p) = self.param(y) {
                            out.push(p);
                        }
                    }
                }
            }
            Self::ParallelCodim2 { n, axis } => {
                let slice = bbox.without_axis(*axis)?;
                let (dlo, dhi) = (bbox.lo()[*axis], bbox.hi()[*axis]);
                for (i, u) in sampling::hemisphere(n - 1, budget, shift, &mut rng).into_iter().enumerate() {
                    let (lo, hi) = range_of(&u, &slice);
                    let t = lo + kronecker(i, 0, tshift[0]) * (hi - lo);
                    let d = dlo + kronecker(i, 1, tshift[1]) * (dhi - dlo);
                    let mut c = u;
                    c.push(t);
                    c.push(d);
                    out.push(self.param(c)?);
                }
            }
            Self::Cylinder { base, axis } => {
                return base.sample_params(budget, &bbox.without_axis(*axis)?, seed);
            }
        }
        out.sort_by(ParamSample::lex_cmp);
        out.dedup();
        Ok(out)
    }

    /// `{variant, params, seed, budget}` as JSON.
    pub fn descriptor(&self, budget: usize, seed: u64) -> serde_json::Value {
        let mut params = serde_json::to_value(self).unwrap_or_default();
        if let Some(obj) = params.as_object_mut() {
            obj.remove("variant");
        }
        serde_json::json!({
            "variant": self.name(),
            "params": params,
            "seed": seed,
            "budget": budget,
        })
    }

    /// Families by command-line name.
    ///
    /// `all-lines` and `hyperplanes` take the dimension from `n`;
    /// `slices:K` is `ParallelCodim2` with axis `K`; `skew` uses the
    /// block rotation that pairs coordinates `(0,1), (2,3), ...`.
    pub fn parse(name: &str, n: usize) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown family `{name}`"));
        match name {
            "all-lines" | "lines" if n == 2 => Self::all_hyperplanes(2),
            "all-lines" | "lines" => Err(Error::InvalidArgument(
                "all-lines is the 2D hyperplane family; use `hyperplanes` in higher dimensions".into(),
            )),
            "hyperplanes" | "all-hyperplanes" => Self::all_hyperplanes(n),
            "parallel-lines" => {
                check_dim(3, n)?;
                Ok(Self::ParallelLines3D)
            }
            "pencil" | "pencil-lines" => {
                check_dim(3, n)?;
                Ok(Self::PencilLines3D)
            }
            "skew" => {
                check_ambient(n)?;
                let m = n + 1;
                let mut a = vec![vec![0.0; m]; m];
                for k in (0..m - 1).step_by(2) {
                    a[k][k + 1] = 1.0;
                    a[k + 1][k] = -1.0;
                }
                Self::skew_operator(a)
            }
            _ => {
                let k = name.strip_prefix("slices:").ok_or_else(bad)?;
                let axis: usize = k.parse().map_err(|_| bad())?;
                Self::parallel_codim2(n, axis)
            }
        }
    }
}

/// Orthonormal basis of the null space of `a`.
fn kernel(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    let mat = nalgebra::DMatrix::from_fn(m, m, |i, j| a[i][j]);
    let svd = mat.svd(false, true);
    let Some(vt) = svd.v_t else {
        return Vec::new();
    };
    let scale = svd.singular_values.max().max(1.0);
    (0..m)
        .filter(|&i| svd.singular_values[i] <= 1e-10 * scale)
        .map(|i| vt.row(i).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_lines_chart_example() {
        let w = FamilyW::ParallelLines3D;
        let p = w.param(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let l = w.element(&p).unwrap();
        assert_eq!(l.dim(), 1);
        assert!(l.contains(&[0.0, 5.0, 0.0], 1e-12));
        assert!(!l.contains(&[0.1, 0.0, 0.0], 1e-12));
        assert!(!l.contains(&[0.0, 0.0, 0.1], 1e-12));
    }

    #[test]
    fn parallel_lines_degenerate_chart_rejected() {
        let w = FamilyW::ParallelLines3D;
        assert!(matches!(
            w.param(vec![0.0, 0.0, 1.0, 0.5]),
            Err(Error::DegenerateParams(_))
        ));
        assert!(w.param(vec![0.0, 0.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn pencil_degenerate_point_is_a_plane() {
        let w = FamilyW::PencilLines3D;
        let p = w.param(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(p.is_degenerate());
        let e = w.element(&p).unwrap();
        assert_eq!(e.codim(), 1);
        assert!(e.contains(&[3.0, -2.0, 0.0], 1e-12));
    }

    #[test]
    fn skew_zero_is_all_hyperplanes() {
        let w = FamilyW::skew_operator(vec![vec![0.0; 3]; 3]).unwrap();
        let p = w.param(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(p.is_degenerate());
        let e = w.element(&p).unwrap();
        assert_eq!(e.codim(), 1);
        assert!(e.contains(&[0.0, 7.0], 1e-12));
    }

    #[test]
    fn skew_rejects_non_skew() {
        let mut a = vec![vec![0.0; 4]; 4];
        a[0][1] = 1.0;
        assert!(FamilyW::skew_operator(a).is_err());
    }

    #[test]
    fn antipodal_coords_canonicalise_identically() {
        let w = FamilyW::all_hyperplanes(3).unwrap();
        let a = w.param(vec![0.0, -2.0, 1.0, 0.5]).unwrap();
        let b = w.param(vec![0.0, 2.0, -1.0, -0.5]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_budget_rejected() {
        let w = FamilyW::all_hyperplanes(2).unwrap();
        let b = BoundingBox::cube(2, 0.0, 1.0).unwrap();
        assert!(w.sample_params(0, &b, 1).is_err());
    }

    #[test]
    fn sample_counts_within_bounds() {
        let b3 = BoundingBox::cube(3, -1.0, 1.0).unwrap();
        for w in [
            FamilyW::ParallelLines3D,
            FamilyW::PencilLines3D,
            FamilyW::all_hyperplanes(3).unwrap(),
            FamilyW::parallel_codim2(3, 2).unwrap(),
        ] {
            for budget in [1, 10, 500] {
                let s = w.sample_params(budget, &b3, 9).unwrap();
                assert!(s.len() >= budget && s.len() <= 2 * budget, "{} {budget} {}", w.name(), s.len());
            }
        }
    }

    #[test]
    fn descriptor_shape() {
        let d = FamilyW::parallel_codim2(3, 0).unwrap().descriptor(10, 4);
        assert_eq!(d["variant"], "parallel_codim2");
        assert_eq!(d["params"]["axis"], 0);
        assert_eq!(d["budget"], 10);
    }

    #[test]
    fn parse_names() {
        assert_eq!(FamilyW::parse("all-lines", 2).unwrap(), FamilyW::AllHyperplanes { n: 2 });
        assert!(FamilyW::parse("all-lines", 3).is_err());
        assert_eq!(
            FamilyW::parse("slices:1", 3).unwrap(),
            FamilyW::ParallelCodim2 { n: 3, axis: 1 }
        );
        assert!(FamilyW::parse("nope", 3).is_err());
        let FamilyW::SkewOperator { a } = FamilyW::parse("skew", 3).unwrap() else {
            panic!()
        };
        assert_eq!(a[2][3], 1.0);
    }
}
