//! Which cells does an affine flat touch?
//!
//! Every strategy below only proposes candidate cells; each candidate is then
//! confirmed with [`subspace_intersects_cell`]'s predicate, so all of them
//! return exactly the brute-force scan's cell set.

use std::ops::ControlFlow;

use super::affine::AffineSubspace;
use super::bbox::MAX_DIM;
use super::grid::{CellIdx, GridSpec, VoxelGrid};
use crate::error::{check_dim, Result};

/// How candidate cells are enumerated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Pick the fastest applicable method.
    Auto,
    /// Test every cell of the grid.
    Scan,
    /// Binary subdivision of the index box, pruned by the box predicate.
    Subdivide,
    /// Hyperplanes only: one candidate run per column of the dominant axis.
    Columns,
    /// Lines only: walk the slabs of the dominant axis.
    Slabs,
}

/// Closed-cube test for one cell, at tolerance `spec.eps_geom()`.
pub fn subspace_intersects_cell(s: &AffineSubspace, spec: &GridSpec, cell: &[usize]) -> Result<bool> {
    check_dim(spec.dim(), s.dim_ambient())?;
    spec.checked_linear(cell)?;
    let (lo, hi) = spec.cell_bounds(cell);
    Ok(s.meets_box(&lo, &hi, spec.eps_geom()))
}

/// All cells whose closed cube meets the flat, as sorted linear indices.
pub fn rasterize_subspace(s: &AffineSubspace, spec: &GridSpec) -> Result<Vec<usize>> {
    rasterize_with(s, spec, Strategy::Auto)
}

pub fn rasterize_with(s: &AffineSubspace, spec: &GridSpec, strategy: Strategy) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let _ = visit_cells(s, spec, strategy, |c| {
        out.push(c);
        ControlFlow::<()>::Continue(())
    })?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// True iff the flat touches no occupied cell of `grid`.
pub fn subspace_misses(grid: &VoxelGrid, s: &AffineSubspace) -> Result<bool> {
    Ok(first_hit(grid, s)?.is_none())
}

/// Some occupied cell touched by the flat, if any.
pub fn first_hit(grid: &VoxelGrid, s: &AffineSubspace) -> Result<Option<usize>> {
    if grid.is_empty() {
        check_dim(grid.dim(), s.dim_ambient())?;
        return Ok(None);
    }
    let flow = visit_cells(s, grid.spec(), Strategy::Auto, |c| {
        if grid.get(c) {
            ControlFlow::Break(c)
        } else {
            ControlFlow::Continue(())
        }
    })?;
    Ok(match flow {
        ControlFlow::Break(c) => Some(c),
        ControlFlow::Continue(()) => None,
    })
}

/// Calls `f` on every touched cell (in strategy-dependent order) until it
/// breaks.
pub fn visit_cells<B>(
    s: &AffineSubspace,
    spec: &GridSpec,
    strategy: Strategy,
    mut f: impl FnMut(usize) -> ControlFlow<B>,
) -> Result<ControlFlow<B>> {
    check_dim(spec.dim(), s.dim_ambient())?;
    let ctx = Ctx::new(s, spec);
    let strategy = match strategy {
        Strategy::Auto if s.codim() == 1 => Strategy::Columns,
        Strategy::Auto if s.dim() == 1 => Strategy::Slabs,
        Strategy::Auto => Strategy::Subdivide,
        Strategy::Columns if s.codim() != 1 => Strategy::Subdivide,
        Strategy::Slabs if s.dim() != 1 => Strategy::Subdivide,
        other => other,
    };
    let whole_lo: Vec<f64> = spec.bbox().lo().to_vec();
    let whole_hi: Vec<f64> = spec.bbox().hi().to_vec();
    if strategy != Strategy::Scan && !s.meets_box(&whole_lo, &whole_hi, ctx.eps) {
        return Ok(ControlFlow::Continue(()));
    }
    Ok(match strategy {
        Strategy::Scan => ctx.scan(&mut f),
        Strategy::Subdivide => {
            let lo = [0; MAX_DIM];
            let mut hi = [1; MAX_DIM];
            hi[..ctx.n].copy_from_slice(spec.res());
            ctx.subdivide(lo, hi, &mut f)
        }
        Strategy::Columns => ctx.columns(&mut f),
        Strategy::Slabs => ctx.slabs(&mut f),
        Strategy::Auto => unreachable!(),
    })
}

struct Ctx<'a> {
    s: &'a AffineSubspace,
    spec: &'a GridSpec,
    n: usize,
    eps: f64,
    lo: [f64; MAX_DIM],
    h: [f64; MAX_DIM],
    res: [usize; MAX_DIM],
}

impl<'a> Ctx<'a> {
    fn new(s: &'a AffineSubspace, spec: &'a GridSpec) -> Self {
        let n = spec.dim();
        let mut lo = [0.0; MAX_DIM];
        let mut h = [0.0; MAX_DIM];
        let mut res = [1; MAX_DIM];
        for a in 0..n {
            lo[a] = spec.bbox().lo()[a];
            h[a] = spec.cell_size(a);
            res[a] = spec.res()[a];
        }
        Self {
            s,
            spec,
            n,
            eps: spec.eps_geom(),
            lo,
            h,
            res,
        }
    }

    /// Box spanned by index range `[ilo, ihi)` (exclusive upper).
    fn region(&self, ilo: &[usize], ihi: &[usize]) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        let mut a = [0.0; MAX_DIM];
        let mut b = [0.0; MAX_DIM];
        for k in 0..self.n {
            a[k] = self.spec.edge(k, ilo[k]);
            b[k] = self.spec.edge(k, ihi[k]);
        }
        (a, b)
    }

    fn cell_hit(&self, idx: &CellIdx) -> bool {
        let mut hi = [0; MAX_DIM];
        for k in 0..self.n {
            hi[k] = idx[k] + 1;
        }
        let (a, b) = self.region(idx, &hi);
        self.s.meets_box(&a[..self.n], &b[..self.n], self.eps)
    }

    fn scan<B>(&self, f: &mut impl FnMut(usize) -> ControlFlow<B>) -> ControlFlow<B> {
        for lin in 0..self.spec.len() {
            if self.cell_hit(&self.spec.unravel(lin)) {
                f(lin)?;
            }
        }
        ControlFlow::Continue(())
    }

    fn subdivide<B>(
        &self,
        ilo: CellIdx,
        ihi: CellIdx,
        f: &mut impl FnMut(usize) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let (a, b) = self.region(&ilo, &ihi);
        if !self.s.meets_box(&a[..self.n], &b[..self.n], self.eps) {
            return ControlFlow::Continue(());
        }
        let (axis, span) = (0..self.n)
            .map(|k| (k, ihi[k] - ilo[k]))
            .max_by_key(|&(k, span)| (span, std::cmp::Reverse(k)))
            .unwrap();
        if span == 1 {
            return f(self.spec.linear(&ilo[..self.n]));
        }
        let mid = ilo[axis] + span / 2;
        let mut left_hi = ihi;
        left_hi[axis] = mid;
        let mut right_lo = ilo;
        right_lo[axis] = mid;
        self.subdivide(ilo, left_hi, f)?;
        self.subdivide(right_lo, ihi, f)
    }

    /// Clamped index range of cells whose extent on `axis` overlaps `[a, b]`,
    /// widened by one cell on each side.
    fn index_range(&self, axis: usize, a: f64, b: f64) -> Option<(usize, usize)> {
        let r = self.res[axis] as i64;
        let ia = ((a - self.lo[axis]) / self.h[axis]).floor() as i64 - 1;
        let ib = ((b - self.lo[axis]) / self.h[axis]).floor() as i64 + 1;
        let ia = ia.max(0);
        let ib = ib.min(r - 1);
        (ia <= ib).then_some((ia as usize, ib as usize))
    }

    fn dominant(v: &[f64]) -> usize {
        (0..v.len())
            .max_by(|&i, &j| v[i].abs().total_cmp(&v[j].abs()))
            .unwrap()
    }

    fn columns<B>(&self, f: &mut impl FnMut(usize) -> ControlFlow<B>) -> ControlFlow<B> {
        let q = &self.s.normals()[0];
        let c0: f64 = q.iter().zip(self.s.point()).map(|(a, b)| a * b).sum();
        let k = Self::dominant(q);
        let others: Vec<usize> = (0..self.n).filter(|&a| a != k).collect();
        let mut idx = [0; MAX_DIM];
        let columns: usize = others.iter().map(|&a| self.res[a]).product();
        for col in 0..columns {
            let mut rem = col;
            let (mut smin, mut smax) = (0.0, 0.0);
            for &a in others.iter().rev() {
                idx[a] = rem % self.res[a];
                rem /= self.res[a];
                let lo = self.spec.edge(a, idx[a]) - self.eps;
                let hi = self.spec.edge(a, idx[a] + 1) + self.eps;
                let (u, v) = (q[a] * lo, q[a] * hi);
                smin += u.min(v);
                smax += u.max(v);
            }
            let (x1, x2) = ((c0 - smax) / q[k], (c0 - smin) / q[k]);
            let Some((ia, ib)) = self.index_range(k, x1.min(x2), x1.max(x2)) else {
                continue;
            };
            for i in ia..=ib {
                idx[k] = i;
                if self.cell_hit(&idx) {
                    f(self.spec.linear(&idx[..self.n]))?;
                }
            }
        }
        ControlFlow::Continue(())
    }

    fn slabs<B>(&self, f: &mut impl FnMut(usize) -> ControlFlow<B>) -> ControlFlow<B> {
        let u = &self.s.basis()[0];
        let p = self.s.point();
        let k = Self::dominant(u);
        let (blo, bhi) = (self.spec.bbox().lo(), self.spec.bbox().hi());
        let Some((t0, t1)) = self.s.line_interval(blo, bhi, self.eps) else {
            return ControlFlow::Continue(());
        };
        let (xa, xb) = (p[k] + u[k] * t0, p[k] + u[k] * t1);
        let Some((ja, jb)) = self.index_range(k, xa.min(xb), xa.max(xb)) else {
            return ControlFlow::Continue(());
        };
        let others: Vec<usize> = (0..self.n).filter(|&a| a != k).collect();
        let mut ranges = [(0usize, 0usize); MAX_DIM];
        let mut idx = [0; MAX_DIM];
        for j in ja..=jb {
            let sa = (self.spec.edge(k, j) - self.eps - p[k]) / u[k];
            let sb = (self.spec.edge(k, j + 1) + self.eps - p[k]) / u[k];
            let (ta, tb) = (sa.min(sb), sa.max(sb));
            let mut empty = false;
            for &a in &others {
                let (ya, yb) = (p[a] + u[a] * ta, p[a] + u[a] * tb);
                match self.index_range(a, ya.min(yb), ya.max(yb)) {
                    Some(r) => ranges[a] = r,
                    None => {
                        empty = true;
                        break;
                    }
                }
            }
            if empty {
                continue;
            }
            idx[k] = j;
            // Odometer over the candidate box of the other axes.
            for &a in &others {
                idx[a] = ranges[a].0;
            }
            'odo: loop {
                if self.cell_hit(&idx) {
                    f(self.spec.linear(&idx[..self.n]))?;
                }
                for &a in others.iter().rev() {
                    if idx[a] < ranges[a].1 {
                        idx[a] += 1;
                        continue 'odo;
                    }
                    idx[a] = ranges[a].0;
                }
                break;
            }
        }
        ControlFlow::Continue(())
    }
}
