use std::fmt::Write as _;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bbox::{BoundingBox, MAX_DIM, MIN_DIM};
use crate::error::{Error, Result};

/// Fixed-capacity n-index of a cell (`n <= 4`).
pub type CellIdx = [usize; MAX_DIM];

/// A bounding box cut into `res[i]` equal cells per axis.
///
/// Cells are numbered in row-major order: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    bbox: BoundingBox,
    res: Vec<usize>,
}

impl GridSpec {
    pub fn new(bbox: BoundingBox, res: Vec<usize>) -> Result<Self> {
        let n = bbox.dim();
        if n < MIN_DIM {
            return Err(Error::UnsupportedDim(n));
        }
        Self::new_any_dim(bbox, res)
    }

    /// Like [`GridSpec::new`] but also admits 1-dimensional grids, which only
    /// arise as slices of planar grids.
    pub(crate) fn new_any_dim(bbox: BoundingBox, res: Vec<usize>) -> Result<Self> {
        if res.len() != bbox.dim() {
            return Err(Error::DimMismatch {
                expected: bbox.dim(),
                got: res.len(),
            });
        }
        if res.iter().any(|&r| r == 0) {
            return Err(Error::InvalidArgument("resolution must be positive".into()));
        }
        Ok(Self { bbox, res })
    }

    /// Same resolution on every axis.
    pub fn uniform(bbox: BoundingBox, r: usize) -> Result<Self> {
        let n = bbox.dim();
        Self::new(bbox, vec![r; n])
    }

    pub fn dim(&self) -> usize {
        self.res.len()
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn res(&self) -> &[usize] {
        &self.res
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        self.bbox.extent(axis) / self.res[axis] as f64
    }

    pub fn min_cell_size(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.cell_size(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Geometric tolerance used by every flat-versus-cell decision.
    pub fn eps_geom(&self) -> f64 {
        1e-9 * self.min_cell_size()
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx[..self.dim()]
            .iter()
            .zip(&self.res)
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    pub fn unravel(&self, mut lin: usize) -> CellIdx {
        let mut idx = [0; MAX_DIM];
        for axis in (0..self.dim()).rev() {
            idx[axis] = lin % self.res[axis];
            lin /= self.res[axis];
        }
        idx
    }

    pub fn checked_linear(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: idx.len(),
            });
        }
        for (&i, &r) in idx.iter().zip(&self.res) {
            if i >= r {
                return Err(Error::IndexOutOfRange { index: i, len: r });
            }
        }
        Ok(self.linear(idx))
    }

    /// Lower world coordinate of cell boundary `i` on `axis`.
    pub fn edge(&self, axis: usize, i: usize) -> f64 {
        self.bbox.lo()[axis] + i as f64 * self.cell_size(axis)
    }

    pub fn center(&self, idx: &[usize]) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.bbox.lo()[a] + (idx[a] as f64 + 0.5) * self.cell_size(a))
            .collect()
    }

    /// Closed cube of a cell as `(lo, hi)`.
    pub fn cell_bounds(&self, idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let lo = (0..self.dim()).map(|a| self.edge(a, idx[a])).collect();
        let hi = (0..self.dim()).map(|a| self.edge(a, idx[a] + 1)).collect();
        (lo, hi)
    }

    /// Index of the cell containing `x`; points on a shared face go to the
    /// upper cell, except on the box's upper boundary.
    pub fn locate(&self, x: &[f64]) -> Option<CellIdx> {
        if x.len() != self.dim() || !self.bbox.contains(x) {
            return None;
        }
        let mut idx = [0; MAX_DIM];
        for a in 0..self.dim() {
            let t = ((x[a] - self.bbox.lo()[a]) / self.cell_size(a)).floor();
            idx[a] = (t.max(0.0) as usize).min(self.res[a] - 1);
        }
        Some(idx)
    }

    /// Face neighbours of a cell that lie inside the grid, plus the number
    /// of faces that sit on the box boundary.
    pub fn face_neighbors(&self, lin: usize, out: &mut Vec<usize>) -> usize {
        out.clear();
        let idx = self.unravel(lin);
        let mut outside = 0;
        let mut stride = 1;
        for axis in (0..self.dim()).rev() {
            if idx[axis] > 0 {
                out.push(lin - stride);
            } else {
                outside += 1;
            }
            if idx[axis] + 1 < self.res[axis] {
                out.push(lin + stride);
            } else {
                outside += 1;
            }
            stride *= self.res[axis];
        }
        outside
    }
}

/// Occupancy set over a [`GridSpec`]. A cell is occupied iff its center lies
/// in the represented set.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid {
    spec: GridSpec,
    occ: BitVec<u64, Lsb0>,
}

impl VoxelGrid {
    pub fn empty(spec: GridSpec) -> Self {
        let len = spec.len();
        Self {
            spec,
            occ: bitvec![u64, Lsb0; 0; len],
        }
    }

    pub fn full(spec: GridSpec) -> Self {
        let len = spec.len();
        Self {
            spec,
            occ: bitvec![u64, Lsb0; 1; len],
        }
    }

    /// Occupies every cell whose center satisfies `pred`.
    pub fn from_predicate(spec: GridSpec, pred: impl Fn(&[f64]) -> bool) -> Self {
        let mut grid = Self::empty(spec);
        let n = grid.spec.dim();
        let mut center = vec![0.0; n];
        for lin in 0..grid.spec.len() {
            let idx = grid.spec.unravel(lin);
            for a in 0..n {
                center[a] =
                    grid.spec.bbox().lo()[a] + (idx[a] as f64 + 0.5) * grid.spec.cell_size(a);
            }
            if pred(&center) {
                grid.occ.set(lin, true);
            }
        }
        grid
    }

    pub fn from_cells(spec: GridSpec, cells: impl IntoIterator<Item = usize>) -> Self {
        let mut grid = Self::empty(spec);
        for c in cells {
            grid.occ.set(c, true);
        }
        grid
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn bits(&self) -> &BitSlice<u64, Lsb0> {
        &self.occ
    }

    pub fn get(&self, lin: usize) -> bool {
        self.occ[lin]
    }

    pub fn get_idx(&self, idx: &[usize]) -> bool {
        self.occ[self.spec.linear(idx)]
    }

    pub fn set(&mut self, lin: usize, value: bool) {
        self.occ.set(lin, value);
    }

    pub fn count(&self) -> usize {
        self.occ.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.occ.not_any()
    }

    pub fn is_full(&self) -> bool {
        self.occ.all()
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.occ.iter_ones()
    }

    pub fn unoccupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.occ.iter_zeros()
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.spec == other.spec {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Box-relative complement.
    pub fn complement(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            occ: !self.occ.clone(),
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut occ = self.occ.clone();
        occ |= &other.occ;
        Ok(Self {
            spec: self.spec.clone(),
            occ,
        })
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let mut occ = self.occ.clone();
        occ &= &other.occ;
        Ok(Self {
            spec: self.spec.clone(),
            occ,
        })
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.intersect(&other.complement())
    }

    /// `self ⊆ other`.
    pub fn is_subset(&self, other: &Self) -> Result<bool> {
        self.check_same(other)?;
        Ok(self
            .occ
            .as_raw_slice()
            .iter()
            .zip(other.occ.as_raw_slice())
            .all(|(a, b)| a & !b == 0))
    }

    pub fn set_equal(&self, other: &Self) -> Result<bool> {
        self.check_same(other)?;
        Ok(self.occ == other.occ)
    }

    /// Occupied cells with at least one face neighbour that is unoccupied or
    /// outside the box.
    pub fn boundary_cells(&self) -> Vec<usize> {
        let mut nb = Vec::with_capacity(2 * MAX_DIM);
        self.occupied()
            .filter(|&c| {
                let outside = self.spec.face_neighbors(c, &mut nb);
                outside > 0 || nb.iter().any(|&m| !self.occ[m])
            })
            .collect()
    }

    /// Occupied cells with an unoccupied face neighbour inside the box.
    /// Unlike [`VoxelGrid::boundary_cells`] this ignores the box walls.
    pub fn interface_cells(&self) -> Vec<usize> {
        let mut nb = Vec::with_capacity(2 * MAX_DIM);
        self.occupied()
            .filter(|&c| {
                self.spec.face_neighbors(c, &mut nb);
                nb.iter().any(|&m| !self.occ[m])
            })
            .collect()
    }

    /// The grid minus its boundary layer.
    pub fn eroded(&self) -> Self {
        let mut out = self.clone();
        for c in self.boundary_cells() {
            out.occ.set(c, false);
        }
        out
    }

    /// Adds every face neighbour of an occupied cell.
    pub fn dilated(&self) -> Self {
        let mut out = self.clone();
        let mut nb = Vec::with_capacity(2 * MAX_DIM);
        for c in self.occupied() {
            self.spec.face_neighbors(c, &mut nb);
            for &m in &nb {
                out.occ.set(m, true);
            }
        }
        out
    }

    /// Face-connected component labels of the occupied cells, numbered in
    /// order of their lowest cell. Unoccupied cells get `u32::MAX`.
    pub fn component_labels(&self) -> (Vec<u32>, usize) {
        let mut label = vec![u32::MAX; self.spec.len()];
        let mut count = 0u32;
        let mut stack = Vec::new();
        let mut nb = Vec::with_capacity(2 * MAX_DIM);
        for start in self.occupied() {
            if label[start] != u32::MAX {
                continue;
            }
            label[start] = count;
            stack.push(start);
            while let Some(c) = stack.pop() {
                self.spec.face_neighbors(c, &mut nb);
                for &m in &nb {
                    if self.occ[m] && label[m] == u32::MAX {
                        label[m] = count;
                        stack.push(m);
                    }
                }
            }
            count += 1;
        }
        (label, count as usize)
    }

    /// Cells of the components that contain an occupied cell of `seed`.
    pub fn components_touching(&self, seed: &Self) -> Result<Self> {
        self.check_same(seed)?;
        let (label, count) = self.component_labels();
        let mut keep = vec![false; count];
        for c in seed.occupied() {
            if label[c] != u32::MAX {
                keep[label[c] as usize] = true;
            }
        }
        let mut out = Self::empty(self.spec.clone());
        for c in self.occupied() {
            if keep[label[c] as usize] {
                out.occ.set(c, true);
            }
        }
        Ok(out)
    }

    /// The `(n-1)`-grid of layer `index` along `axis`.
    pub fn slice(&self, axis: usize, index: usize) -> Result<Self> {
        let n = self.dim();
        if axis >= n {
            return Err(Error::IndexOutOfRange {
                index: axis,
                len: n,
            });
        }
        if index >= self.spec.res()[axis] {
            return Err(Error::IndexOutOfRange {
                index,
                len: self.spec.res()[axis],
            });
        }
        let bbox = self.spec.bbox().without_axis(axis)?;
        let res: Vec<usize> = (0..n)
            .filter(|&a| a != axis)
            .map(|a| self.spec.res()[a])
            .collect();
        let spec = GridSpec::new_any_dim(bbox, res)?;
        let mut out = Self::empty(spec);
        let mut full = [0; MAX_DIM];
        for lin in 0..out.spec.len() {
            let sub = out.spec.unravel(lin);
            let mut k = 0;
            for a in 0..n {
                if a == axis {
                    full[a] = index;
                } else {
                    full[a] = sub[k];
                    k += 1;
                }
            }
            if self.get_idx(&full[..n]) {
                out.occ.set(lin, true);
            }
        }
        Ok(out)
    }

    /// Serialises to the `VXG1` text format.
    pub fn to_vxg1(&self) -> String {
        let spec = &self.spec;
        let mut s = format!("VXG1 {}", spec.dim());
        for r in spec.res() {
            write!(s, " {r}").unwrap();
        }
        for v in spec.bbox().lo().iter().chain(spec.bbox().hi()) {
            write!(s, " {v}").unwrap();
        }
        s.push('\n');
        s.push_str(&hex::encode(self.packed_bytes()));
        s.push('\n');
        s
    }

    /// Occupancy packed eight cells per byte, first cell in the most
    /// significant bit.
    pub fn packed_bytes(&self) -> Vec<u8> {
        let mut bytes = vec![0u8; self.spec.len().div_ceil(8)];
        for c in self.occupied() {
            bytes[c / 8] |= 0x80 >> (c % 8);
        }
        bytes
    }

    pub fn from_vxg1(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing VXG1 header".into()))?;
        let mut tok = header.split_whitespace();
        if tok.next() != Some("VXG1") {
            return Err(Error::Parse("bad magic, expected VXG1".into()));
        }
        let n: usize = parse_tok(tok.next(), "dimension")?;
        if !(MIN_DIM..=MAX_DIM).contains(&n) {
            return Err(Error::UnsupportedDim(n));
        }
        let res = (0..n)
            .map(|_| parse_tok::<usize>(tok.next(), "resolution"))
            .collect::<Result<Vec<_>>>()?;
        let lo = (0..n)
            .map(|_| parse_tok::<f64>(tok.next(), "lo"))
            .collect::<Result<Vec<_>>>()?;
        let hi = (0..n)
            .map(|_| parse_tok::<f64>(tok.next(), "hi"))
            .collect::<Result<Vec<_>>>()?;
        if tok.next().is_some() {
            return Err(Error::Parse("trailing tokens in VXG1 header".into()));
        }
        let spec = GridSpec::new(BoundingBox::new(lo, hi)?, res)?;
        let payload = lines.next().unwrap_or("").trim();
        let bytes = hex::decode(payload).map_err(|e| Error::Parse(format!("hex payload: {e}")))?;
        let len = spec.len();
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Parse(format!(
                "payload has {} bytes, expected {}",
                bytes.len(),
                len.div_ceil(8)
            )));
        }
        let mut grid = Self::empty(spec);
        for (b, byte) in bytes.iter().enumerate() {
            for t in 0..8 {
                if byte & (0x80 >> t) != 0 {
                    let c = b * 8 + t;
                    if c >= len {
                        return Err(Error::Parse("non-zero padding bits".into()));
                    }
                    grid.occ.set(c, true);
                }
            }
        }
        Ok(grid)
    }

    /// Hex SHA-256 of the VXG1 payload; identifies grids in reports.
    pub fn sha(&self) -> String {
        hex::encode(Sha256::digest(self.to_vxg1().as_bytes()))
    }
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.ok_or_else(|| Error::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::Parse(format!("bad {what}")))
}
