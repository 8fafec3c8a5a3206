//! Conjugate sets, hulls and convexity verdicts.
//!
//! `E*` is the set of sampled family elements missing `E`; `E**` is the box
//! minus every cell such an element touches. Coverage uses closed cubes, so
//! `E ⊆ E**` holds exactly on the grid.

use std::ops::ControlFlow;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::families::{drop_axis, FamilyW, ParamSample, ThroughSampler};
use crate::geometry::{dot, first_hit, rasterize_subspace, AffineSubspace, GridSpec, VoxelGrid, MAX_DIM};
use crate::sampling::SIGN_TOL;

/// Through-point budget cap for families whose through-sets have two or
/// more parameters.
const MULTI_PARAM_THROUGH_CAP: usize = 2048;

/// How per-sample work is scheduled. Both give bit-identical results.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

/// Sampled `E*` together with how it was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugateSet {
    pub family: FamilyW,
    pub samples: Vec<ParamSample>,
    pub budget: usize,
    pub seed: u64,
    pub grid_sha: String,
    pub spec: GridSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Holds,
    Fails,
}

/// Outcome of a convexity test, with enough provenance to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub witness_cell: Option<Vec<usize>>,
    pub budget: usize,
    pub seed: u64,
    pub family: serde_json::Value,
    pub grid_sha: String,
    pub test: String,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.status == Status::Holds
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdict serialises")
    }

    fn new(test: &str, e: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64, witness: Option<usize>) -> Self {
        let n = e.dim();
        Self {
            status: if witness.is_some() {
                Status::Fails
            } else {
                Status::Holds
            },
            witness_cell: witness.map(|c| e.spec().unravel(c)[..n].to_vec()),
            budget,
            seed,
            family: w.descriptor(budget, seed),
            grid_sha: e.sha(),
            test: test.to_string(),
        }
    }
}

fn check_family(e: &VoxelGrid, w: &FamilyW) -> Result<()> {
    check_dim(w.dim(), e.dim())
}

/// Elements of `samples` that miss `e`, in input order.
pub fn conjugate_of_samples(
    e: &VoxelGrid,
    w: &FamilyW,
    samples: &[ParamSample],
    exec: Exec,
) -> Result<Vec<ParamSample>> {
    check_family(e, w)?;
    let misses = |p: &ParamSample| -> Result<bool> {
        let flat = w.element(p)?;
        Ok(first_hit(e, &flat)?.is_none())
    };
    let keep: Vec<bool> = match exec {
        Exec::Sequential => samples.iter().map(misses).collect::<Result<_>>()?,
        Exec::Parallel => samples.par_iter().map(misses).collect::<Result<_>>()?,
    };
    Ok(samples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| p.clone())
        .collect())
}

pub fn conjugate(e: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64) -> Result<ConjugateSet> {
    conjugate_with(e, w, budget, seed, Exec::Parallel)
}

pub fn conjugate_with(e: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64, exec: Exec) -> Result<ConjugateSet> {
    check_family(e, w)?;
    let all = w.sample_params(budget, e.spec().bbox(), seed)?;
    Ok(ConjugateSet {
        family: w.clone(),
        samples: conjugate_of_samples(e, w, &all, exec)?,
        budget,
        seed,
        grid_sha: e.sha(),
        spec: e.spec().clone(),
    })
}

/// Cells touched by at least one of the given elements.
pub fn covered_cells(w: &FamilyW, samples: &[ParamSample], spec: &GridSpec, exec: Exec) -> Result<VoxelGrid> {
    check_dim(w.dim(), spec.dim())?;
    let raster = |p: &ParamSample| -> Result<Vec<usize>> { rasterize_subspace(&w.element(p)?, spec) };
    let mut out = VoxelGrid::empty(spec.clone());
    match exec {
        Exec::Sequential => {
            for p in samples {
                for c in raster(p)? {
                    out.set(c, true);
                }
            }
        }
        Exec::Parallel => {
            let parts = samples
                .par_iter()
                .try_fold(
                    || VoxelGrid::empty(spec.clone()),
                    |mut acc, p| -> Result<VoxelGrid> {
                        for c in raster(p)? {
                            acc.set(c, true);
                        }
                        Ok(acc)
                    },
                )
                .collect::<Result<Vec<_>>>()?;
            for part in parts {
                out = out.union(&part)?;
            }
        }
    }
    Ok(out)
}

/// `E**`: the box minus every cell an element of `c` touches.
pub fn double_conjugate(c: &ConjugateSet, spec: &GridSpec) -> Result<VoxelGrid> {
    double_conjugate_with(c, spec, Exec::Parallel)
}

pub fn double_conjugate_with(c: &ConjugateSet, spec: &GridSpec, exec: Exec) -> Result<VoxelGrid> {
    if *spec != c.spec {
        return Err(Error::GridMismatch);
    }
    Ok(covered_cells(&c.family, &c.samples, spec, exec)?.complement())
}

/// Sampled hull `E**` at `(budget, seed)`.
pub fn hull_wrt(e: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64) -> Result<VoxelGrid> {
    double_conjugate(&conjugate(e, w, budget, seed)?, e.spec())
}

/// `E**` for a fixed sample list.
pub fn hull_of_samples(e: &VoxelGrid, w: &FamilyW, samples: &[ParamSample]) -> Result<VoxelGrid> {
    let missing = conjugate_of_samples(e, w, samples, Exec::Parallel)?;
    Ok(covered_cells(w, &missing, e.spec(), Exec::Parallel)?.complement())
}

/// Through-point budget used by the pointwise tests.
///
/// One-parameter through-sets (lines through a point in the plane, pencil
/// lines through a point off the axis, ...) get the full budget; larger
/// through-sets are capped.
pub fn through_budget(w: &FamilyW, budget: usize) -> usize {
    let dof = match w {
        FamilyW::AllHyperplanes { n } => n - 1,
        FamilyW::ParallelLines3D | FamilyW::PencilLines3D => 1,
        FamilyW::SkewOperator { a } => a.len().saturating_sub(3),
        FamilyW::ParallelCodim2 { n, .. } => n - 2,
        FamilyW::Cylinder { base, .. } => return through_budget(base, budget),
    };
    if dof <= 1 {
        budget
    } else {
        budget.min(MULTI_PARAM_THROUGH_CAP)
    }
}

/// Offsets `{0, -1, +1}^n` in half-cell units, center first and corners last.
fn cube_offsets(n: usize) -> Vec<[i8; MAX_DIM]> {
    let mut out: Vec<[i8; MAX_DIM]> = Vec::with_capacity(3usize.pow(n as u32));
    for mut k in 0..3usize.pow(n as u32) {
        let mut o = [0i8; MAX_DIM];
        for slot in o.iter_mut().take(n) {
            *slot = [0, -1, 1][k % 3];
            k /= 3;
        }
        out.push(o);
    }
    out.sort_by_key(|o| o.iter().filter(|v| **v != 0).count());
    out
}

/// Membership in an unbounded set, consulted outside the grid box.
pub type Exterior<'a> = &'a (dyn Fn(&[f64]) -> bool + Sync);

/// Offsets blocked by `E` for each hyperplane normal of a lattice: a
/// hyperplane `u·x = c` meets an occupied closed cube iff `c` falls in one
/// of the merged projections of the cubes onto `u`.
///
/// With a slice axis the flats are hyperplanes of the slices `x_axis = t`,
/// and projections are kept per layer. Only cells with an unoccupied or
/// missing neighbour are projected; the projection of a compact set equals
/// that of its boundary.
#[derive(Clone, Copy, Debug)]
enum SlabChart {
    Hyperplane,
    /// Hyperplanes of the slices `x_axis = t`.
    Slice(usize),
    /// `ParallelLines3D`: slice lines of `x3 = t`, chartable only off `x3 = 0`.
    ParallelLines,
    /// Cylinders over hyperplanes, with the given generator axis.
    Cylinder(usize),
}

impl SlabChart {
    fn axis(self) -> Option<usize> {
        match self {
            Self::Hyperplane | Self::Cylinder(_) => None,
            Self::Slice(a) => Some(a),
            Self::ParallelLines => Some(2),
        }
    }
}

struct SlabIndex {
    dirs: Vec<Vec<f64>>,
    chart: SlabChart,
    axis: Option<usize>,
    /// Per layer, cell centers with the slice axis dropped, flattened.
    centers: Vec<Vec<f64>>,
    half: Vec<f64>,
    blocked: Vec<OnceLock<Vec<(f64, f64)>>>,
    spec: GridSpec,
}

impl SlabIndex {
    fn new(e: &VoxelGrid, dirs: Vec<Vec<f64>>, chart: SlabChart) -> Self {
        let axis = chart.axis();
        let spec = e.spec();
        let n = spec.dim();
        let offsets = cube_offsets(n);
        let layers = axis.map_or(1, |a| spec.res()[a]);
        let mut centers = vec![Vec::new(); layers];
        for c in e.occupied() {
            let idx = spec.unravel(c);
            let exposed = offsets[1..].iter().any(|o| {
                let mut nb = idx;
                for a in 0..n {
                    let j = idx[a] as i64 + i64::from(o[a]);
                    if j < 0 || j >= spec.res()[a] as i64 {
                        return true;
                    }
                    nb[a] = j as usize;
                }
                !e.get(spec.linear(&nb[..n]))
            });
            if exposed {
                let x = spec.center(&idx[..n]);
                let layer = axis.map_or(0, |a| idx[a]);
                centers[layer].extend(axis.map_or(x.clone(), |a| drop_axis(&x, a)));
            }
        }
        let eps = spec.eps_geom();
        let half = (0..n)
            .filter(|&a| Some(a) != axis)
            .map(|a| spec.cell_size(a) / 2.0 + eps)
            .collect();
        let blocked = (0..layers * dirs.len()).map(|_| OnceLock::new()).collect();
        Self {
            dirs,
            chart,
            axis,
            centers,
            half,
            blocked,
            spec: spec.clone(),
        }
    }

    fn blocked(&self, layer: usize, k: usize) -> &[(f64, f64)] {
        self.blocked[layer * self.dirs.len() + k].get_or_init(|| {
            let u = &self.dirs[k];
            let r: f64 = u.iter().zip(&self.half).map(|(v, h)| v.abs() * h).sum();
            let mut iv: Vec<(f64, f64)> = self.centers[layer]
                .chunks_exact(u.len())
                .map(|c| {
                    let m = dot(u, c);
                    (m - r, m + r)
                })
                .collect();
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for (lo, hi) in iv {
                match merged.last_mut() {
                    Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                    _ => merged.push((lo, hi)),
                }
            }
            merged
        })
    }

    /// Whether the chart reaches every sampled element through `x`.
    fn applies(&self, x: &[f64]) -> bool {
        match self.chart {
            SlabChart::ParallelLines => x[2].abs() > SIGN_TOL,
            _ => true,
        }
    }

    /// Layers whose closed cubes meet the slice through `x`.
    fn layers(&self, x: &[f64]) -> std::ops::Range<usize> {
        let Some(a) = self.axis else {
            return 0..1;
        };
        let eps = self.spec.eps_geom();
        let m = self.spec.res()[a];
        let j = ((x[a] - self.spec.bbox().lo()[a]) / self.spec.cell_size(a)).floor();
        let j = j.clamp(0.0, (m - 1) as f64) as usize;
        let meets = |l: usize| self.spec.edge(a, l) - eps <= x[a] && x[a] <= self.spec.edge(a, l + 1) + eps;
        let lo = if j > 0 && meets(j - 1) { j - 1 } else { j };
        let hi = if j + 1 < m && meets(j + 1) { j + 2 } else { j + 1 };
        if meets(j) { lo..hi } else { j..j }
    }

    /// The flat's offset along direction `k` and whether it meets `E`.
    fn hits(&self, k: usize, x: &[f64], layers: std::ops::Range<usize>) -> (f64, bool) {
        let u = &self.dirs[k];
        let c = match self.axis {
            Some(a) => dot(u, &drop_axis(x, a)),
            None => dot(u, x),
        };
        let hit = layers.into_iter().any(|l| {
            let iv = self.blocked(l, k);
            let i = iv.partition_point(|r| r.0 <= c);
            i > 0 && c <= iv[i - 1].1
        });
        (c, hit)
    }
}

/// Pointwise certificate for one cell: some element through a point of the
/// cell's closed cube (center, face centers, edge midpoints, corners)
/// misses `e`.
pub struct CellCertifier<'a> {
    e: &'a VoxelGrid,
    sampler: ThroughSampler,
    offsets: Vec<[i8; MAX_DIM]>,
    exterior: Option<Exterior<'a>>,
    slabs: Option<SlabIndex>,
}

/// Whether a line meets `ext` beyond the box, probed at geometrically
/// growing distances out to a million box diameters. Other flats are not
/// probed.
pub fn exterior_hit(flat: &AffineSubspace, spec: &GridSpec, ext: Exterior<'_>) -> bool {
    if flat.dim() != 1 {
        return false;
    }
    let (lo, hi) = (spec.bbox().lo(), spec.bbox().hi());
    let n = spec.dim();
    let diam = (0..n).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt();
    let h = (0..n).map(|a| spec.cell_size(a)).fold(f64::INFINITY, f64::min) / 2.0;
    let (t0, t1) = flat.line_interval(lo, hi, 0.0).unwrap_or((0.0, 0.0));
    let (p, u) = (flat.point(), &flat.basis()[0]);
    let mut x = vec![0.0; n];
    let mut s = h;
    while s < 1e6 * diam {
        for t in [t1 + s, t0 - s] {
            for a in 0..n {
                x[a] = p[a] + t * u[a];
            }
            if ext(&x) {
                return true;
            }
        }
        s *= 1.02;
    }
    false
}

impl<'a> CellCertifier<'a> {
    pub fn new(e: &'a VoxelGrid, w: &FamilyW, budget: usize, seed: u64) -> Result<Self> {
        check_family(e, w)?;
        let sampler = ThroughSampler::new(w, through_budget(w, budget), seed)?;
        let slabs = match w {
            FamilyW::AllHyperplanes { n } => Some((*n, SlabChart::Hyperplane)),
            FamilyW::ParallelCodim2 { n, axis } => Some((n - 1, SlabChart::Slice(*axis))),
            FamilyW::ParallelLines3D => Some((2, SlabChart::ParallelLines)),
            FamilyW::Cylinder { base, axis } if matches!(**base, FamilyW::AllHyperplanes { .. }) => {
                Some((base.dim(), SlabChart::Cylinder(*axis)))
            }
            _ => None,
        }
        .map(|(d, chart)| {
            let dirs = match chart {
                SlabChart::Cylinder(a) => sampler
                    .base()
                    .map_or(&[][..], |b| b.lattice(d))
                    .iter()
                    .map(|u| {
                        let mut v = u.clone();
                        v.insert(a, 0.0);
                        v
                    })
                    .collect(),
                _ => sampler.lattice(d).to_vec(),
            };
            SlabIndex::new(e, dirs, chart)
        });
        Ok(Self {
            e,
            sampler,
            offsets: cube_offsets(e.dim()),
            exterior: None,
            slabs,
        })
    }

    /// Also require certificates to miss `ext` outside the box.
    pub fn with_exterior(mut self, ext: Option<Exterior<'a>>) -> Self {
        self.exterior = ext;
        self
    }

    /// A chart point whose element misses `e` and passes through the closed
    /// cube of `cell`, if one is found.
    pub fn certificate(&self, cell: usize) -> Result<Option<ParamSample>> {
        let spec = self.e.spec();
        let n = spec.dim();
        let idx = spec.unravel(cell);
        let center = spec.center(&idx[..n]);
        let mut x = center.clone();
        for off in &self.offsets {
            for a in 0..n {
                x[a] = center[a] + 0.5 * f64::from(off[a]) * spec.cell_size(a);
            }
            let found = match &self.slabs {
                Some(slabs) if slabs.applies(&x) => self.slab_certificate(slabs, &x)?,
                _ => self.visit_certificate(&x)?,
            };
            if found.is_some() {
                return Ok(found);
            }
        }
        Ok(None)
    }

    fn visit_certificate(&self, x: &[f64]) -> Result<Option<ParamSample>> {
        let w = self.sampler.family();
        let mut failure = None;
        let flow = self.sampler.visit(x, |p| {
            let Ok(flat) = w.element(&p) else {
                return ControlFlow::Continue(());
            };
            match first_hit(self.e, &flat) {
                Ok(None) => match self.exterior {
                    Some(ext) if exterior_hit(&flat, self.e.spec(), ext) => ControlFlow::Continue(()),
                    _ => ControlFlow::Break(p),
                },
                Ok(Some(_)) => ControlFlow::Continue(()),
                Err(err) => {
                    failure = Some(err);
                    ControlFlow::Break(p)
                }
            }
        })?;
        if let Some(err) = failure {
            return Err(err);
        }
        Ok(match flow {
            ControlFlow::Break(p) => Some(p),
            ControlFlow::Continue(()) => None,
        })
    }

    /// Same visiting order as the sampler's hyperplane route, with the hit
    /// test answered by the slab index.
    fn slab_certificate(&self, slabs: &SlabIndex, x: &[f64]) -> Result<Option<ParamSample>> {
        let w = self.sampler.family();
        let layers = slabs.layers(x);
        for (k, u) in slabs.dirs.iter().enumerate() {
            let (c, hit) = slabs.hits(k, x, layers.clone());
            if hit {
                continue;
            }
            let coords = match slabs.chart {
                SlabChart::Hyperplane => [&u[..], &[c]].concat(),
                SlabChart::Slice(a) => [&u[..], &[c, x[a]]].concat(),
                SlabChart::ParallelLines => vec![u[0], u[1], -c / x[2], x[2]],
                SlabChart::Cylinder(a) => [&drop_axis(u, a)[..], &[c]].concat(),
            };
            let Ok(p) = w.param(coords) else {
                continue;
            };
            if let Some(ext) = self.exterior {
                if exterior_hit(&w.element(&p)?, self.e.spec(), ext) {
                    continue;
                }
            }
            return Ok(Some(p));
        }
        Ok(None)
    }

    pub fn certified(&self, cell: usize) -> Result<bool> {
        Ok(self.certificate(cell)?.is_some())
    }
}

/// First cell of `cells` (ascending) without a certificate.
fn first_uncertified(cert: &CellCertifier<'_>, cells: Vec<usize>) -> Result<Option<usize>> {
    let found = cells
        .into_par_iter()
        .map(|c| cert.certified(c).map(|ok| (!ok).then_some(c)))
        .find_first(|r| !matches!(r, Ok(None)));
    found.transpose().map(Option::flatten)
}

/// `E` is convex for `W` iff every unoccupied cell is certified: some
/// element through a point of its closed cube misses `E`.
///
/// Equivalently the hull over the full through-sets equals `E`.
pub fn is_convex_wrt(e: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64) -> Result<Verdict> {
    is_convex_with(e, w, budget, seed, None)
}

/// As [`is_convex_wrt`], for a grid clipped from an unbounded set whose
/// outside part is `ext`.
pub fn is_convex_with(
    e: &VoxelGrid,
    w: &FamilyW,
    budget: usize,
    seed: u64,
    ext: Option<Exterior<'_>>,
) -> Result<Verdict> {
    let cert = CellCertifier::new(e, w, budget, seed)?.with_exterior(ext);
    let witness = first_uncertified(&cert, e.unoccupied().collect())?;
    Ok(Verdict::new("convex", e, w, budget, seed, witness))
}

/// `E` plus every unoccupied cell that has no certificate.
pub fn certified_hull(e: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64) -> Result<VoxelGrid> {
    let cert = CellCertifier::new(e, w, budget, seed)?;
    let cells: Vec<usize> = e.unoccupied().collect();
    let flags = cells
        .par_iter()
        .map(|&c| cert.certified(c))
        .collect::<Result<Vec<bool>>>()?;
    let mut out = e.clone();
    for (c, ok) in cells.into_iter().zip(flags) {
        if !ok {
            out.set(c, true);
        }
    }
    Ok(out)
}

/// Through a point of every boundary cell's closed cube passes an element
/// missing the interior (the set minus its boundary layer).
pub fn is_weakly_convex(d: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64) -> Result<Verdict> {
    if d.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let interior = d.eroded();
    let cert = CellCertifier::new(&interior, w, budget, seed)?;
    let witness = first_uncertified(&cert, d.boundary_cells())?;
    let mut v = Verdict::new("weakly_convex", d, w, budget, seed, witness);
    v.grid_sha = d.sha();
    Ok(v)
}

/// `D` should be the component of its hull that contains it.
///
/// Checks connectivity and weak convexity, builds the certified hull,
/// takes the components meeting `D` and compares with `D` allowing one
/// cell of slack. A failure names a hull cell outside the slack.
pub fn component_of_hull(d: &VoxelGrid, w: &FamilyW, budget: usize, seed: u64) -> Result<Verdict> {
    if d.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let (_, k) = d.component_labels();
    if k != 1 {
        return Err(Error::NotConnected { components: k });
    }
    let weak = is_weakly_convex(d, w, budget, seed)?;
    if !weak.holds() {
        return Ok(Verdict {
            test: "component_of_hull".into(),
            ..weak
        });
    }
    let hull = certified_hull(d, w, budget, seed)?;
    let comp = hull.components_touching(d)?;
    let extra = comp.difference(&d.dilated())?;
    let witness = extra.occupied().next();
    Ok(Verdict::new("component_of_hull", d, w, budget, seed, witness))
}
