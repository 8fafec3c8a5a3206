//! Mod-2 cubical homology of voxel cell sets.
//!
//! Complexes live on the doubled ("Khalimsky") lattice: a grid of `r` cells
//! per axis becomes `2r + 1` positions, where an odd coordinate means the
//! cube extends along that axis. A position with `k` odd coordinates is a
//! `k`-cube; its faces are the neighbours at ±1 along each odd axis.

use std::fmt;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{VoxelGrid, MAX_DIM};

const NONE: u32 = u32::MAX;

/// Closed cubical complex on a doubled lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicalComplex {
    /// Lattice size per axis (`2 * res + 1`).
    dims: Vec<usize>,
    present: BitVec<u64, Lsb0>,
}

/// `b[k]` = dimension of `H_k` over GF(2), for `k = 0..=n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BettiVector(pub Vec<usize>);

impl BettiVector {
    pub fn euler(&self) -> i64 {
        self.0
            .iter()
            .enumerate()
            .map(|(k, &b)| if k % 2 == 0 { b as i64 } else { -(b as i64) })
            .sum()
    }
}

impl fmt::Display for BettiVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphereClass {
    Sphere,
    TorusLike,
    Other,
}

impl fmt::Display for SphereClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sphere => "sphere",
            Self::TorusLike => "torus_like",
            Self::Other => "other",
        })
    }
}

impl CubicalComplex {
    fn empty(res: &[usize]) -> Self {
        let dims: Vec<usize> = res.iter().map(|r| 2 * r + 1).collect();
        let len = dims.iter().product();
        Self {
            dims,
            present: bitvec![u64, Lsb0; 0; len],
        }
    }

    /// Complex from explicit cubes `(anchor vertex, extent mask)`, without
    /// adding faces. Bit `a` of the mask means the cube spans
    /// `[anchor[a], anchor[a] + 1]` along axis `a`.
    pub fn from_cubes(res: &[usize], cubes: &[(Vec<usize>, u8)]) -> Result<Self> {
        let mut k = Self::empty(res);
        for (anchor, mask) in cubes {
            let pos = k.position(anchor, *mask)?;
            k.present.set(pos, true);
        }
        Ok(k)
    }

    fn position(&self, anchor: &[usize], mask: u8) -> Result<usize> {
        if anchor.len() != self.dims.len() {
            return Err(Error::DimMismatch {
                expected: self.dims.len(),
                got: anchor.len(),
            });
        }
        let mut lin = 0;
        for (a, (&v, &d)) in anchor.iter().zip(&self.dims).enumerate() {
            let c = 2 * v + usize::from(mask >> a & 1 == 1);
            if c >= d {
                return Err(Error::IndexOutOfRange { index: v, len: d / 2 });
            }
            lin = lin * d + c;
        }
        Ok(lin)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    fn coords(&self, mut lin: usize) -> [usize; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        for a in (0..self.dims.len()).rev() {
            c[a] = lin % self.dims[a];
            lin /= self.dims[a];
        }
        c
    }

    fn cube_dim(&self, lin: usize) -> usize {
        let c = self.coords(lin);
        c[..self.dim()].iter().filter(|v| *v % 2 == 1).count()
    }

    /// Linear positions of the codimension-1 faces of the cube at `lin`.
    fn faces(&self, lin: usize, out: &mut Vec<usize>) {
        out.clear();
        let c = self.coords(lin);
        let mut stride = 1;
        for a in (0..self.dim()).rev() {
            if c[a] % 2 == 1 {
                out.push(lin - stride);
                out.push(lin + stride);
            }
            stride *= self.dims[a];
        }
    }

    /// Number of cubes of each dimension `0..=n`.
    pub fn counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim() + 1];
        for lin in self.present.iter_ones() {
            out[self.cube_dim(lin)] += 1;
        }
        out
    }

    pub fn euler(&self) -> i64 {
        self.counts()
            .iter()
            .enumerate()
            .map(|(k, &c)| if k % 2 == 0 { c as i64 } else { -(c as i64) })
            .sum()
    }

    /// Cubes of dimension `k` as `(anchor, mask)` pairs, in lattice order.
    pub fn cubes(&self, k: usize) -> Vec<(Vec<usize>, u8)> {
        let n = self.dim();
        self.present
            .iter_ones()
            .filter(|&lin| self.cube_dim(lin) == k)
            .map(|lin| {
                let c = self.coords(lin);
                let mut mask = 0u8;
                let anchor = (0..n)
                    .map(|a| {
                        if c[a] % 2 == 1 {
                            mask |= 1 << a;
                        }
                        c[a] / 2
                    })
                    .collect();
                (anchor, mask)
            })
            .collect()
    }

    pub fn is_closed(&self) -> bool {
        let mut f = Vec::new();
        self.present.iter_ones().all(|lin| {
            self.faces(lin, &mut f);
            f.iter().all(|&m| self.present[m])
        })
    }

    /// Per-dimension numbering of present cubes, and the boundary columns
    /// of each dimension expressed in that numbering (rows sorted).
    fn boundary_columns(&self) -> Result<Vec<Vec<Vec<u32>>>> {
        let n = self.dim();
        let mut index = vec![NONE; self.present.len()];
        let mut next = vec![0u32; n + 1];
        for lin in self.present.iter_ones() {
            let k = self.cube_dim(lin);
            index[lin] = next[k];
            next[k] += 1;
        }
        let mut cols: Vec<Vec<Vec<u32>>> = (0..=n).map(|k| Vec::with_capacity(next[k] as usize)).collect();
        let mut f = Vec::with_capacity(2 * MAX_DIM);
        for lin in self.present.iter_ones() {
            let k = self.cube_dim(lin);
            self.faces(lin, &mut f);
            let mut col = Vec::with_capacity(f.len());
            for &m in &f {
                if index[m] == NONE {
                    return Err(Error::NotClosed);
                }
                col.push(index[m]);
            }
            col.sort_unstable();
            cols[k].push(col);
        }
        Ok(cols)
    }
}

/// Every occupied cell contributes its closed cube with all faces.
pub fn build_complex(cells: &VoxelGrid) -> CubicalComplex {
    let spec = cells.spec();
    let n = spec.dim();
    let mut k = CubicalComplex::empty(spec.res());
    let mut strides = [0usize; MAX_DIM];
    let mut s = 1;
    for a in (0..n).rev() {
        strides[a] = s;
        s *= k.dims[a];
    }
    let offsets: Vec<isize> = (0..3usize.pow(n as u32))
        .map(|mut t| {
            let mut off = 0isize;
            for &st in strides.iter().take(n) {
                off += ((t % 3) as isize - 1) * st as isize;
                t /= 3;
            }
            off
        })
        .collect();
    for c in cells.occupied() {
        let idx = spec.unravel(c);
        let center: usize = (0..n).map(|a| (2 * idx[a] + 1) * strides[a]).sum();
        for &o in &offsets {
            k.present.set((center as isize + o) as usize, true);
        }
    }
    k
}

/// Column reduction over GF(2). Columns flagged in `skip` are known to
/// reduce to zero. Returns the rank and, per row, whether it became a pivot.
fn reduce(cols: &[Vec<u32>], nrows: usize, skip: &[bool]) -> (usize, Vec<bool>) {
    let mut pivot_of_row = vec![NONE; nrows];
    let mut reduced: Vec<Vec<u32>> = vec![Vec::new(); cols.len()];
    let mut rank = 0;
    let mut buf = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        if skip.get(j).copied().unwrap_or(false) {
            continue;
        }
        let mut cur = col.clone();
        while let Some(&low) = cur.last() {
            let p = pivot_of_row[low as usize];
            if p == NONE {
                pivot_of_row[low as usize] = j as u32;
                rank += 1;
                break;
            }
            symmetric_difference(&cur, &reduced[p as usize], &mut buf);
            std::mem::swap(&mut cur, &mut buf);
        }
        reduced[j] = cur;
    }
    (rank, pivot_of_row.into_iter().map(|p| p != NONE).collect())
}

fn symmetric_difference(a: &[u32], b: &[u32], out: &mut Vec<u32>) {
    out.clear();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
}

/// Betti numbers via sparse reduction with clearing, top dimension first.
pub fn betti_numbers(k: &CubicalComplex) -> Result<BettiVector> {
    let n = k.dim();
    let cols = k.boundary_columns()?;
    let sizes: Vec<usize> = cols.iter().map(Vec::len).collect();
    // rank[k] = rank of the boundary map from k-cubes to (k-1)-cubes.
    let mut rank = vec![0usize; n + 2];
    let mut cleared: Vec<bool> = Vec::new();
    for d in (1..=n).rev() {
        let (r, pivots) = reduce(&cols[d], sizes[d - 1], &cleared);
        rank[d] = r;
        cleared = pivots;
    }
    Ok(BettiVector(
        (0..=n).map(|d| sizes[d] - rank[d] - rank[d + 1]).collect(),
    ))
}

/// Rank of a GF(2) matrix given by sparse columns, by dense bit-packed
/// elimination. Meant as an independent check on small inputs.
pub fn rank_dense(cols: &[Vec<u32>], nrows: usize) -> usize {
    let mut rows: Vec<BitVec<u64, Lsb0>> = vec![bitvec![u64, Lsb0; 0; cols.len()]; nrows];
    for (j, col) in cols.iter().enumerate() {
        for &r in col {
            let cur = rows[r as usize][j];
            rows[r as usize].set(j, !cur);
        }
    }
    let mut rank = 0;
    for c in 0..cols.len() {
        let Some(p) = (rank..nrows).find(|&r| rows[r][c]) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[c] {
                *row ^= &pivot;
            }
        }
        rank += 1;
    }
    rank
}

/// Betti numbers by dense elimination of every boundary map.
pub fn betti_numbers_dense(k: &CubicalComplex) -> Result<BettiVector> {
    let n = k.dim();
    let cols = k.boundary_columns()?;
    let sizes: Vec<usize> = cols.iter().map(Vec::len).collect();
    let mut rank = vec![0usize; n + 2];
    for d in 1..=n {
        rank[d] = rank_dense(&cols[d], sizes[d - 1]);
    }
    Ok(BettiVector(
        (0..=n).map(|d| sizes[d] - rank[d] - rank[d + 1]).collect(),
    ))
}

/// Number of face-connected components.
pub fn connected_components(cells: &VoxelGrid) -> usize {
    cells.component_labels().1
}

pub fn classify(b: &BettiVector) -> SphereClass {
    let n = b.0.len() - 1;
    let sphere = (0..=n).all(|k| {
        let want = usize::from(k == 0 || k + 1 == n);
        b.0[k] == want
    });
    if sphere {
        SphereClass::Sphere
    } else if n == 3 && b.0 == [1, 2, 1, 0] {
        SphereClass::TorusLike
    } else {
        SphereClass::Other
    }
}

/// Homology of the boundary layer of `d`, and its class.
pub fn sphere_test(d: &VoxelGrid) -> Result<(SphereClass, BettiVector)> {
    if d.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let comps = connected_components(d);
    if comps != 1 {
        return Err(Error::NotConnected { components: comps });
    }
    let shell = VoxelGrid::from_cells(d.spec().clone(), d.boundary_cells());
    let b = betti_numbers(&build_complex(&shell))?;
    Ok((classify(&b), b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, GridSpec};

    fn grid(res: &[usize], cells: &[&[usize]]) -> VoxelGrid {
        let n = res.len();
        let spec = GridSpec::new(BoundingBox::cube(n, 0.0, 1.0).unwrap(), res.to_vec()).unwrap();
        let lins: Vec<usize> = cells.iter().map(|c| spec.linear(c)).collect();
        VoxelGrid::from_cells(spec, lins)
    }

    #[test]
    fn single_cube_counts_and_betti() {
        let k = build_complex(&grid(&[3, 3, 3], &[&[1, 1, 1]]));
        assert_eq!(k.counts(), vec![8, 12, 6, 1]);
        assert!(k.is_closed());
        assert_eq!(betti_numbers(&k).unwrap().0, vec![1, 0, 0, 0]);
    }

    #[test]
    fn two_adjacent_squares() {
        let k = build_complex(&grid(&[3, 3], &[&[0, 0], &[0, 1]]));
        assert_eq!(k.counts(), vec![6, 7, 2]);
    }

    #[test]
    fn ring_has_one_hole() {
        let mut cells: Vec<[usize; 2]> = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (1, 1) {
                    cells.push([i, j]);
                }
            }
        }
        let refs: Vec<&[usize]> = cells.iter().map(|c| &c[..]).collect();
        let k = build_complex(&grid(&[3, 3], &refs));
        assert_eq!(betti_numbers(&k).unwrap().0, vec![1, 1, 0]);
        assert_eq!(betti_numbers_dense(&k).unwrap().0, vec![1, 1, 0]);
    }

    #[test]
    fn missing_face_is_not_closed() {
        let k = CubicalComplex::from_cubes(&[2, 2], &[(vec![0, 0], 0b11)]).unwrap();
        assert!(!k.is_closed());
        assert!(matches!(betti_numbers(&k), Err(Error::NotClosed)));
    }

    #[test]
    fn cubes_roundtrip() {
        let k = build_complex(&grid(&[2, 2], &[&[1, 0]]));
        let sq = k.cubes(2);
        assert_eq!(sq, vec![(vec![1, 0], 0b11)]);
        let mut all = Vec::new();
        for d in 0..=2 {
            all.extend(k.cubes(d));
        }
        assert_eq!(CubicalComplex::from_cubes(&[2, 2], &all).unwrap(), k);
    }

    #[test]
    fn components() {
        assert_eq!(connected_components(&grid(&[4, 4], &[])), 0);
        assert_eq!(connected_components(&grid(&[4, 4], &[&[0, 0], &[2, 2]])), 2);
        assert_eq!(connected_components(&grid(&[4, 4], &[&[0, 0], &[1, 1]])), 2);
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&BettiVector(vec![1, 0, 1, 0])), SphereClass::Sphere);
        assert_eq!(classify(&BettiVector(vec![1, 1, 0])), SphereClass::Sphere);
        assert_eq!(classify(&BettiVector(vec![1, 2, 1, 0])), SphereClass::TorusLike);
        assert_eq!(classify(&BettiVector(vec![2, 0, 2, 0])), SphereClass::Other);
    }
}
