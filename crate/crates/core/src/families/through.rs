use std::ops::ControlFlow;

use rand::Rng;

use super::{drop_axis, FamilyW, ParamSample};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{complete_basis, dot, norm, AffineSubspace};
use crate::sampling::{self, progressive_order};

/// Below this, a point counts as lying on a chart's singular locus (the
/// slice `x3 = 0` of `ParallelLines3D`, the pencil axis).
const SINGULAR_TOL: f64 = 1e-12;

/// Enumerates elements of a family through given points.
///
/// Direction lattices are built once; every point then reuses them. Each
/// lattice is ordered coarse to fine, so callers that stop at the first
/// useful element see well spread candidates early.
#[derive(Clone, Debug)]
pub struct ThroughSampler {
    family: FamilyW,
    budget: usize,
    /// `lattices[k]`: unit vectors in `R^k`, `k = 1..=5`.
    lattices: Vec<Vec<Vec<f64>>>,
    inner: Option<Box<ThroughSampler>>,
}

fn lattice(dim: usize, budget: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = sampling::rng(seed, 2 + dim as u64);
    let shift: f64 = rng.gen();
    if dim == 1 {
        return vec![vec![1.0]];
    }
    let pts = sampling::hemisphere(dim, budget, shift, &mut rng);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(budget + dim);
    if dim >= 2 {
        // Coordinate axes first: cheapest to rasterise, and the only lines
        // that miss a half-plane bounded by an axis-parallel line.
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            out.push(e);
        }
    }
    out.extend(progressive_order(pts.len()).into_iter().map(|i| pts[i].clone()));
    out
}

impl ThroughSampler {
    pub fn new(family: &FamilyW, budget: usize, seed: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidArgument("budget must be at least 1".into()));
        }
        let dims: &[usize] = match family {
            FamilyW::AllHyperplanes { n } => &[*n][..],
            FamilyW::ParallelLines3D => &[2],
            FamilyW::PencilLines3D => &[2, 3],
            FamilyW::SkewOperator { a } => {
                let n = a.len() - 1;
                &[n - 1, n][..]
            }
            FamilyW::ParallelCodim2 { n, .. } => &[n - 1][..],
            FamilyW::Cylinder { base, .. } => {
                return Ok(Self {
                    family: family.clone(),
                    budget,
                    lattices: Vec::new(),
                    inner: Some(Box::new(Self::new(base, budget, seed)?)),
                });
            }
        };
        let mut lattices = vec![Vec::new(); 6];
        for &d in dims {
            lattices[d] = lattice(d, budget, seed);
        }
        Ok(Self {
            family: family.clone(),
            budget,
            lattices,
            inner: None,
        })
    }

    pub fn family(&self) -> &FamilyW {
        &self.family
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    /// The base family's sampler of a cylinder.
    pub(crate) fn base(&self) -> Option<&ThroughSampler> {
        self.inner.as_deref()
    }

    /// Unit directions in `R^dim`, in visiting order. Empty for dimensions
    /// the family does not use.
    pub(crate) fn lattice(&self, dim: usize) -> &[Vec<f64>] {
        self.lattices.get(dim).map_or(&[], Vec::as_slice)
    }

    /// Calls `f` on chart points whose elements contain `x`, until it breaks.
    pub fn visit<B>(
        &self,
        x: &[f64],
        mut f: impl FnMut(ParamSample) -> ControlFlow<B>,
    ) -> Result<ControlFlow<B>> {
        check_dim(self.family.dim(), x.len())?;
        let w = &self.family;
        let mut emit = |c: Vec<f64>| -> ControlFlow<B> {
            match w.param(c) {
                Ok(p) => f(p),
                Err(_) => ControlFlow::Continue(()),
            }
        };
        let flow = match w {
            FamilyW::AllHyperplanes { .. } => self.hyperplanes(x, &mut emit),
            FamilyW::ParallelLines3D => self.parallel_lines(x, &mut emit),
            FamilyW::PencilLines3D => self.pencil(x, &mut emit),
            FamilyW::SkewOperator { a } => self.skew(a, x, &mut emit),
            FamilyW::ParallelCodim2 { axis, .. } => self.slices(*axis, x, &mut emit),
            FamilyW::Cylinder { axis, .. } => {
                let inner = self.inner.as_ref().expect("cylinder sampler has a base");
                return inner.visit(&drop_axis(x, *axis), f);
            }
        };
        Ok(flow)
    }

    /// All chart points through `x`, in visiting order.
    pub fn params(&self, x: &[f64]) -> Result<Vec<ParamSample>> {
        let mut out = Vec::new();
        let _ = self.visit(x, |p| {
            out.push(p);
            ControlFlow::<()>::Continue(())
        })?;
        if out.is_empty() {
            return Err(Error::EmptyThroughSet);
        }
        Ok(out)
    }

    /// The elements through `x`, in visiting order.
    pub fn elements(&self, x: &[f64]) -> Result<Vec<AffineSubspace>> {
        self.params(x)?
            .iter()
            .map(|p| self.family.element(p))
            .collect()
    }

    fn hyperplanes<B>(&self, x: &[f64], emit: &mut impl FnMut(Vec<f64>) -> ControlFlow<B>) -> ControlFlow<B> {
        for u in &self.lattices[x.len()] {
            let mut c = u.clone();
            c.push(dot(u, x));
            emit(c)?;
        }
        ControlFlow::Continue(())
    }

    fn slices<B>(
        &self,
        axis: usize,
        x: &[f64],
        emit: &mut impl FnMut(Vec<f64>) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let xs = drop_axis(x, axis);
        for u in &self.lattices[xs.len()] {
            let mut c = u.clone();
            c.push(dot(u, &xs));
            c.push(x[axis]);
            emit(c)?;
        }
        ControlFlow::Continue(())
    }

    fn parallel_lines<B>(
        &self,
        x: &[f64],
        emit: &mut impl FnMut(Vec<f64>) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        if x3.abs() > SINGULAR_TOL {
            for u in &self.lattices[2] {
                let k = u[0] * x1 + u[1] * x2;
                emit(vec![u[0], u[1], -k / x3, x3])?;
            }
            return ControlFlow::Continue(());
        }
        // On x3 = 0 the chart only holds lines through the origin.
        let r = x1.hypot(x2);
        if r > SINGULAR_TOL {
            return emit(vec![-x2 / r, x1 / r, 0.0, x3]);
        }
        for u in &self.lattices[2] {
            emit(vec![u[0], u[1], 0.0, x3])?;
        }
        ControlFlow::Continue(())
    }

    fn pencil<B>(&self, x: &[f64], emit: &mut impl FnMut(Vec<f64>) -> ControlFlow<B>) -> ControlFlow<B> {
        let (x1, x2, x3) = (x[0], x[1], x[2]);
        let r = x1.hypot(x2);
        if r > SINGULAR_TOL {
            // Unique pencil plane through x; (alpha, gamma) is the line's
            // normal inside it, in (radial, x3) coordinates.
            for u in &self.lattices[2] {
                let (al, ga) = (u[0], u[1]);
                emit(vec![al * x1 / r, al * x2 / r, ga, -(al * r + ga * x3)])?;
            }
            return ControlFlow::Continue(());
        }
        // On the axis every pencil plane passes through x.
        for u in &self.lattices[3] {
            emit(vec![u[0], u[1], u[2], -(u[0] * x1 + u[1] * x2 + u[2] * x3)])?;
        }
        ControlFlow::Continue(())
    }

    fn skew<B>(
        &self,
        a: &[Vec<f64>],
        x: &[f64],
        emit: &mut impl FnMut(Vec<f64>) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let m = a.len();
        let mut xh = x.to_vec();
        xh.push(1.0);
        let ax: Vec<f64> = a.iter().map(|row| dot(row, &xh)).collect();
        // y must be orthogonal to both (x,1) and A(x,1).
        let lx = norm(&xh);
        let q0: Vec<f64> = xh.iter().map(|v| v / lx).collect();
        let k = dot(&ax, &q0);
        let r: Vec<f64> = ax.iter().zip(&q0).map(|(v, q)| v - k * q).collect();
        let lr = norm(&r);
        let mut span = vec![q0];
        if lr > 1e-10 * norm(&ax).max(1.0) {
            span.push(r.iter().map(|v| v / lr).collect());
        }
        let comp = complete_basis(&span, m);
        for w in &self.lattices[comp.len()] {
            let mut y = vec![0.0; m];
            for (wj, bj) in w.iter().zip(&comp) {
                for (yi, bi) in y.iter_mut().zip(bj) {
                    *yi += wj * bi;
                }
            }
            emit(y)?;
        }
        ControlFlow::Continue(())
    }
}

/// Chart points of `w` whose elements pass through `x`.
///
/// One-parameter through-sets get `budget` directions, one per bucket of
/// the angle interval. Fails with `EmptyThroughSet` if nothing is found.
pub fn elements_through(w: &FamilyW, x: &[f64], budget: usize, seed: u64) -> Result<Vec<ParamSample>> {
    ThroughSampler::new(w, budget, seed)?.params(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_through(w: &FamilyW, x: &[f64]) {
        let ps = elements_through(w, x, 64, 3).unwrap();
        assert!(!ps.is_empty());
        for p in ps {
            let e = w.element(&p).unwrap();
            assert!(e.contains(x, 1e-9), "{} {:?}", w.name(), p);
        }
    }

    #[test]
    fn through_points_lie_on_elements() {
        let x3 = [0.3, -0.7, 1.1];
        assert_through(&FamilyW::all_hyperplanes(3).unwrap(), &x3);
        assert_through(&FamilyW::ParallelLines3D, &x3);
        assert_through(&FamilyW::ParallelLines3D, &[0.3, 0.2, 0.0]);
        assert_through(&FamilyW::PencilLines3D, &x3);
        assert_through(&FamilyW::PencilLines3D, &[0.0, 0.0, 2.0]);
        assert_through(&FamilyW::parse("skew", 3).unwrap(), &x3);
        assert_through(&FamilyW::parse("skew", 2).unwrap(), &[0.5, 0.25]);
        assert_through(&FamilyW::parallel_codim2(4, 1).unwrap(), &[0.1, 0.2, 0.3, 0.4]);
        let cyl = FamilyW::cylinder(FamilyW::all_hyperplanes(2).unwrap(), 2).unwrap();
        assert_through(&cyl, &x3);
    }

    #[test]
    fn lines_through_point_one_per_bucket() {
        let w = FamilyW::all_hyperplanes(2).unwrap();
        let ps = elements_through(&w, &[0.0, 1.0], 180, 42).unwrap();
        assert_eq!(ps.len(), 182);
        let mut buckets = vec![0; 180];
        for p in &ps {
            let c = p.coords();
            let mut t = c[1].atan2(c[0]);
            if t < 0.0 {
                t += std::f64::consts::PI;
            }
            let b = (t / std::f64::consts::PI * 180.0) as usize % 180;
            buckets[b] += 1;
        }
        // The two axis lines come on top of the lattice.
        assert_eq!(buckets.iter().sum::<usize>(), 182);
        assert!(buckets.iter().all(|&b| (1..=2).contains(&b)));
    }

    #[test]
    fn codim2_slice_through_point() {
        let w = FamilyW::parallel_codim2(3, 2).unwrap();
        for p in elements_through(&w, &[0.2, 0.1, 0.7], 16, 0).unwrap() {
            let e = w.element(&p).unwrap();
            assert_eq!(e.dim(), 1);
            assert!(e.contains(&[5.0, 9.0, 0.7], 1e-9) || !e.contains(&[5.0, 9.0, 0.8], 1e-9));
            assert!(!e.contains(&[0.2, 0.1, 0.8], 1e-9));
        }
    }
}
