//! Randomised invariants of the grid, family, duality and homology layers.

use std::collections::BTreeMap;

use linconvex::duality::{
    conjugate, conjugate_of_samples, double_conjugate, hull_of_samples, is_convex_wrt, CellCertifier, Exec,
};
use linconvex::families::{elements_through, projective_normalize};
use linconvex::geometry::{rasterize_subspace, subspace_misses};
use linconvex::scenes::{self, SceneSpec, SCENES};
use linconvex::topology::{betti_numbers, betti_numbers_dense, build_complex};
use linconvex::{AffineSubspace, BoundingBox, FamilyW, GridSpec, VoxelGrid};
use proptest::prelude::*;

fn spec(n: usize, res: usize) -> GridSpec {
    GridSpec::uniform(BoundingBox::cube(n, -1.0, 1.0).unwrap(), res).unwrap()
}

fn grid(n: usize, res: usize) -> impl Strategy<Value = VoxelGrid> {
    let s = spec(n, res);
    proptest::collection::vec(any::<bool>(), s.len()).prop_map(move |bits| {
        VoxelGrid::from_cells(s.clone(), bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
    })
}

/// Sparse-ish grid: each cell occupied with probability about 1/4.
fn sparse_grid(n: usize, res: usize) -> impl Strategy<Value = VoxelGrid> {
    let s = spec(n, res);
    proptest::collection::vec(0u8..4, s.len()).prop_map(move |v| {
        VoxelGrid::from_cells(s.clone(), v.iter().enumerate().filter(|(_, b)| **b == 0).map(|(i, _)| i))
    })
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, n)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|v| {
            let l = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / l).collect()
        })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Closed cube, padded by `tol`, meets the hyperplane `u·x = c`.
fn cube_meets_plane(lo: &[f64], hi: &[f64], u: &[f64], c: f64, tol: f64) -> bool {
    let (mut min, mut max) = (0.0, 0.0);
    for k in 0..u.len() {
        let (a, b) = (u[k] * lo[k], u[k] * hi[k]);
        min += a.min(b);
        max += a.max(b);
    }
    min <= c + tol && max >= c - tol
}

/// Closed cube, padded by `tol`, meets the line `p + t d` (slab clipping).
fn cube_meets_line(lo: &[f64], hi: &[f64], p: &[f64], d: &[f64], tol: f64) -> bool {
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..p.len() {
        let (l, h) = (lo[k] - tol, hi[k] + tol);
        if d[k].abs() < 1e-14 {
            if p[k] < l || p[k] > h {
                return false;
            }
        } else {
            let (a, b) = ((l - p[k]) / d[k], (h - p[k]) / d[k]);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    t0 <= t1
}

fn bounds(s: &GridSpec, cell: usize) -> (Vec<f64>, Vec<f64>) {
    let n = s.dim();
    s.cell_bounds(&s.unravel(cell)[..n])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn de_morgan_and_involution(a in grid(3, 5), b in grid(3, 5)) {
        prop_assert_eq!(a.union(&b)?.complement(), a.complement().intersect(&b.complement())?);
        prop_assert_eq!(a.intersect(&b)?.complement(), a.complement().union(&b.complement())?);
        prop_assert_eq!(a.complement().complement(), a);
    }

    #[test]
    fn boundary_inside_and_empty_only_for_empty(a in sparse_grid(2, 7)) {
        let bd = VoxelGrid::from_cells(a.spec().clone(), a.boundary_cells());
        prop_assert!(bd.is_subset(&a)?);
        prop_assert_eq!(bd.is_empty(), a.is_empty());
    }

    #[test]
    fn misses_iff_raster_avoids_grid(e in sparse_grid(3, 6), u in unit_vec(3), c in -1.2f64..1.2) {
        let s = AffineSubspace::hyperplane(u, c)?;
        let hit = rasterize_subspace(&s, e.spec())?.into_iter().any(|cell| e.get(cell));
        prop_assert_eq!(subspace_misses(&e, &s)?, !hit);
    }

    #[test]
    fn hyperplane_raster_matches_corner_oracle(u in unit_vec(2), c in -1.2f64..1.2) {
        let gs = spec(2, 16);
        let s = AffineSubspace::hyperplane(u.clone(), c)?;
        let raster = rasterize_subspace(&s, &gs)?;
        for cell in 0..gs.len() {
            let (lo, hi) = bounds(&gs, cell);
            let inside = raster.contains(&cell);
            if cube_meets_plane(&lo, &hi, &u, c, -1e-7) {
                prop_assert!(inside, "cell {} missing", cell);
            }
            if inside {
                prop_assert!(cube_meets_plane(&lo, &hi, &u, c, 1e-7), "cell {} spurious", cell);
            }
        }
    }

    #[test]
    fn line_raster_matches_slab_oracle(p in proptest::collection::vec(-0.8f64..0.8, 3), d in unit_vec(3)) {
        let gs = spec(3, 8);
        let s = AffineSubspace::line(p.clone(), d.clone())?;
        let raster = rasterize_subspace(&s, &gs)?;
        for cell in 0..gs.len() {
            let (lo, hi) = bounds(&gs, cell);
            let inside = raster.contains(&cell);
            if cube_meets_line(&lo, &hi, &p, &d, -1e-7) {
                prop_assert!(inside, "cell {} missing", cell);
            }
            if inside {
                prop_assert!(cube_meets_line(&lo, &hi, &p, &d, 1e-7), "cell {} spurious", cell);
            }
        }
    }

    #[test]
    fn raster_contains_cells_whose_center_is_on_the_flat(i in 0usize..10, j in 0usize..10, k in 0usize..10, d in unit_vec(3)) {
        let gs = spec(3, 10);
        let x = gs.center(&[i, j, k]);
        let s = AffineSubspace::line(x, d)?;
        prop_assert!(rasterize_subspace(&s, &gs)?.contains(&gs.linear(&[i, j, k])));
    }

    #[test]
    fn antipodal_charts_agree(v in proptest::collection::vec(-1.0f64..1.0, 4)) {
        prop_assume!(v[..2].iter().any(|x| x.abs() > 1e-3));
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        for w in [FamilyW::all_hyperplanes(3)?, FamilyW::PencilLines3D] {
            prop_assert_eq!(w.param(v.clone())?, w.param(neg.clone())?);
        }
        // The slice coordinate is affine and keeps its sign.
        let w = FamilyW::parallel_codim2(3, 1)?;
        let half = vec![-v[0], -v[1], -v[2], v[3]];
        prop_assert_eq!(w.param(v.clone())?, w.param(half)?);
    }

    #[test]
    fn through_elements_contain_the_point(x in proptest::collection::vec(-0.9f64..0.9, 3), seed in 0u64..100) {
        let gs = spec(3, 8);
        for w in [FamilyW::all_hyperplanes(3)?, FamilyW::parallel_codim2(3, 2)?, FamilyW::ParallelLines3D] {
            for p in elements_through(&w, &x, 64, seed)? {
                let f = w.element(&p)?;
                prop_assert!(f.contains(&x, gs.eps_geom()), "{} residual {}", w.name(), f.residual(&x));
            }
        }
    }

    #[test]
    fn skew_elements_are_orthogonal(
        up in proptest::collection::vec(-1.0f64..1.0, 6),
        y in proptest::collection::vec(-1.0f64..1.0, 4),
        t in proptest::collection::vec(-1.0f64..1.0, 2),
    ) {
        prop_assume!(y.iter().map(|v| v * v).sum::<f64>() > 1e-2);
        let mut a = vec![vec![0.0; 4]; 4];
        let mut it = up.iter();
        for i in 0..4 {
            for j in i + 1..4 {
                let v = *it.next().unwrap();
                a[i][j] = v;
                a[j][i] = -v;
            }
        }
        let w = FamilyW::skew_operator(a.clone())?;
        let p = w.param(y)?;
        let yc = p.coords();
        let ay: Vec<f64> = a.iter().map(|r| dot(r, yc)).collect();
        prop_assert!(dot(&ay, yc).abs() < 1e-12);
        let f = w.element(&p)?;
        let mut coeffs = t.clone();
        coeffs.truncate(f.dim());
        let x = f.point_at(&coeffs);
        let xh = [x[0], x[1], x[2], 1.0];
        prop_assert!(dot(&xh, yc).abs() < 1e-9);
        prop_assert!(dot(&xh, &ay).abs() < 1e-9);
    }

    #[test]
    fn pencil_planes_map_to_parallel_planes(ts in proptest::collection::vec(-3.0f64..3.0, 3), pts in proptest::collection::vec(0.5f64..3.0, 6)) {
        let delta0 = AffineSubspace::hyperplane(vec![1.0, 0.0, 0.0], 0.0)?;
        let (map, _) = projective_normalize(&FamilyW::PencilLines3D, &delta0)?;
        for &t in &ts {
            // Two points on the pencil plane x2 = t x1.
            for k in 0..2 {
                let x1 = pts[2 * k];
                let y = map.apply(&[x1, t * x1, pts[2 * k + 1]])?;
                prop_assert!((y[0] - t).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conjugate_samples_miss_and_are_distinct(e in sparse_grid(2, 10), seed in 0u64..1000) {
        let w = FamilyW::all_hyperplanes(2)?;
        let c = conjugate(&e, &w, 400, seed)?;
        for p in &c.samples {
            prop_assert!(subspace_misses(&e, &w.element(p)?)?);
        }
        for pair in c.samples.windows(2) {
            prop_assert!(pair[0].lex_cmp(&pair[1]).is_lt());
        }
    }

    #[test]
    fn grid_is_inside_its_hull(e in sparse_grid(2, 10), seed in 0u64..1000) {
        let w = FamilyW::all_hyperplanes(2)?;
        let c = conjugate(&e, &w, 400, seed)?;
        prop_assert!(e.is_subset(&double_conjugate(&c, e.spec())?)?);
    }

    #[test]
    fn union_law_on_shared_samples(a in sparse_grid(2, 10), b in sparse_grid(2, 10), seed in 0u64..1000) {
        let w = FamilyW::all_hyperplanes(2)?;
        let samples = w.sample_params(400, a.spec().bbox(), seed)?;
        let ca = conjugate_of_samples(&a, &w, &samples, Exec::Parallel)?;
        let cb = conjugate_of_samples(&b, &w, &samples, Exec::Parallel)?;
        let both: Vec<_> = ca.iter().filter(|p| cb.contains(p)).cloned().collect();
        prop_assert_eq!(conjugate_of_samples(&a.union(&b)?, &w, &samples, Exec::Parallel)?, both);
    }

    #[test]
    fn hull_is_idempotent_and_keeps_the_conjugate(e in sparse_grid(3, 6), seed in 0u64..1000) {
        let w = FamilyW::all_hyperplanes(3)?;
        let samples = w.sample_params(300, e.spec().bbox(), seed)?;
        let h = hull_of_samples(&e, &w, &samples)?;
        prop_assert_eq!(hull_of_samples(&h, &w, &samples)?, h.clone());
        prop_assert_eq!(conjugate_of_samples(&h, &w, &samples, Exec::Parallel)?, conjugate_of_samples(&e, &w, &samples, Exec::Parallel)?);
    }

    #[test]
    fn failed_verdicts_carry_a_recheckable_witness(e in sparse_grid(2, 8), seed in 0u64..1000) {
        prop_assume!(!e.is_empty());
        let w = FamilyW::all_hyperplanes(2)?;
        let v = is_convex_wrt(&e, &w, 300, seed)?;
        if !v.holds() {
            let cell = e.spec().linear(v.witness_cell.as_ref().unwrap());
            prop_assert!(!e.get(cell));
            prop_assert!(!CellCertifier::new(&e, &w, 300, seed)?.certified(cell)?);
        }
    }

    #[test]
    fn euler_poincare_and_dense_agreement(e in sparse_grid(3, 5)) {
        let k = build_complex(&e);
        let b = betti_numbers(&k)?;
        prop_assert_eq!(k.euler(), b.euler());
        prop_assert_eq!(betti_numbers_dense(&k)?, b.clone());
        prop_assert!(b.0.len() == 4 && b.0[3] == 0);
        prop_assert_eq!(b.0[0] == 0, e.is_empty());
    }

    #[test]
    fn b0_counts_components_of_the_cube_union(e in sparse_grid(3, 5)) {
        let b = betti_numbers(&build_complex(&e))?;
        prop_assert_eq!(b.0[0], vertex_components(&e));
    }

    #[test]
    fn betti_adds_over_separated_parts(a in sparse_grid(3, 5), b in sparse_grid(3, 5)) {
        // Place `a` in x-layers 0..5 and `b` in 6..11 of an 11×5×5 grid.
        let big = GridSpec::new(BoundingBox::new(vec![0.0; 3], vec![11.0, 5.0, 5.0])?, vec![11, 5, 5])?;
        let lift = |g: &VoxelGrid, shift: usize| {
            VoxelGrid::from_cells(big.clone(), g.occupied().map(|c| {
                let i = g.spec().unravel(c);
                big.linear(&[i[0] + shift, i[1], i[2]])
            }))
        };
        let (la, lb) = (lift(&a, 0), lift(&b, 6));
        let ba = betti_numbers(&build_complex(&la))?;
        let bb = betti_numbers(&build_complex(&lb))?;
        let bu = betti_numbers(&build_complex(&la.union(&lb)?))?;
        let sum: Vec<usize> = ba.0.iter().zip(&bb.0).map(|(x, y)| x + y).collect();
        prop_assert_eq!(bu.0, sum);
    }

    #[test]
    fn vxg1_round_trip(e in grid(2, 9)) {
        let text = e.to_vxg1();
        let back = VoxelGrid::from_vxg1(&text)?;
        prop_assert_eq!(back.to_vxg1(), text);
        prop_assert_eq!(back, e);
    }

    #[test]
    fn sampling_is_deterministic(seed in 0u64..10_000, budget in 1usize..500) {
        let w = FamilyW::all_hyperplanes(3)?;
        let b = BoundingBox::cube(3, -1.0, 1.0)?;
        let s = w.sample_params(budget, &b, seed)?;
        prop_assert_eq!(&s, &w.sample_params(budget, &b, seed)?);
        prop_assert!(s.len() >= budget && s.len() <= 2 * budget);
    }
}

/// Components under vertex adjacency, by flood fill over the 3^n
/// neighbourhood.
fn vertex_components(e: &VoxelGrid) -> usize {
    let gs = e.spec();
    let n = gs.dim();
    let res = gs.res().to_vec();
    let mut seen = vec![false; gs.len()];
    let mut count = 0;
    for start in e.occupied() {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(c) = stack.pop() {
            let idx = gs.unravel(c);
            for t in 0..3usize.pow(n as u32) {
                let mut m = [0usize; 4];
                let mut ok = true;
                let mut tt = t;
                for a in 0..n {
                    let v = idx[a] as isize + (tt % 3) as isize - 1;
                    tt /= 3;
                    if v < 0 || v >= res[a] as isize {
                        ok = false;
                        break;
                    }
                    m[a] = v as usize;
                }
                if !ok {
                    continue;
                }
                let l = gs.linear(&m[..n]);
                if e.get(l) && !seen[l] {
                    seen[l] = true;
                    stack.push(l);
                }
            }
        }
    }
    count
}

#[test]
fn scenes_are_deterministic() {
    for info in SCENES {
        let s = SceneSpec::new(info.name, &BTreeMap::new()).unwrap();
        let s = s.clone().with_res(vec![20; info.dim]);
        let a = scenes::scene(&s).unwrap();
        let b = scenes::scene(&s).unwrap();
        assert_eq!(a.to_vxg1(), b.to_vxg1(), "{}", info.name);
    }
}

#[test]
fn fans_increase_with_n() {
    let fan = |n: f64| {
        let s = SceneSpec::new("fan", &BTreeMap::from([("n".to_string(), n)])).unwrap();
        scenes::scene(&s).unwrap()
    };
    for n in 1..8 {
        assert!(fan(n as f64).is_subset(&fan(n as f64 + 1.0)).unwrap(), "fan({n})");
    }
}

#[test]
fn square_annulus_slice_components() {
    let s = SceneSpec::new("square_annulus", &BTreeMap::new()).unwrap();
    let g = scenes::scene(&s).unwrap();
    let gs = g.spec();
    for j in 0..gs.res()[2] {
        let d = gs.center(&[0, 0, j])[2].abs();
        let slice = g.slice(2, j).unwrap();
        let comps = slice.component_labels().1;
        if d <= 1.0 {
            assert_eq!(comps, 2, "d = {d}");
        } else if d < 3.0 {
            assert_eq!(comps, 1, "d = {d}");
        }
    }
}

#[test]
fn betti_stable_across_resolutions() {
    for name in ["ball", "square_annulus"] {
        let base = SceneSpec::new(name, &BTreeMap::new()).unwrap();
        let seen: Vec<_> = [48, 64, 96]
            .iter()
            .map(|&r| linconvex::topology::sphere_test(&scenes::scene(&base.clone().with_res(vec![r; 3])).unwrap()).unwrap().1)
            .collect();
        assert!(seen.windows(2).all(|w| w[0] == w[1]), "{name}: {seen:?}");
    }
}
