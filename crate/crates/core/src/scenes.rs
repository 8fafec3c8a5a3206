//! Analytic test sets and their voxelisations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::duality::{is_convex_with, Exterior, Verdict};
use crate::error::{Error, Result};
use crate::families::FamilyW;
use crate::geometry::{BoundingBox, GridSpec, VoxelGrid};
use crate::sampling;
use crate::topology::connected_components;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Openness {
    Open,
    Closed,
}

/// Static facts about a named scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SceneInfo {
    pub name: &'static str,
    pub dim: usize,
    pub openness: Openness,
    /// Bounded scenes must fit strictly inside the box.
    pub bounded: bool,
    /// Synthetic replacement for a set known only from a picture.
    pub standin: bool,
    pub formula: &'static str,
}

pub const SCENES: &[SceneInfo] = &[
    SceneInfo {
        name: "fan",
        dim: 2,
        openness: Openness::Closed,
        bounded: false,
        standin: false,
        formula: "x >= 0, -n x <= y <= n x",
    },
    SceneInfo {
        name: "fan_union",
        dim: 2,
        openness: Openness::Open,
        bounded: false,
        standin: false,
        formula: "x > 0 or (x, y) = (0, 0)",
    },
    SceneInfo {
        name: "square_annulus",
        dim: 3,
        openness: Openness::Open,
        bounded: true,
        standin: false,
        formula: "1 < |x1| + |x3| < 3, 0 < x2 < 1",
    },
    SceneInfo {
        name: "hyperbola_shell",
        dim: 3,
        openness: Openness::Open,
        bounded: false,
        standin: false,
        formula: "x1^2 - x2^2 (1 - x3^2) + x3^2 - 1 > 0",
    },
    SceneInfo {
        name: "ball",
        dim: 3,
        openness: Openness::Closed,
        bounded: true,
        standin: false,
        formula: "|x - c| <= r",
    },
    SceneInfo {
        name: "ellipsoid",
        dim: 3,
        openness: Openness::Closed,
        bounded: true,
        standin: false,
        formula: "(x1/a)^2 + (x2/b)^2 + (x3/c)^2 <= 1",
    },
    SceneInfo {
        name: "slicewise_blob",
        dim: 3,
        openness: Openness::Open,
        bounded: true,
        standin: false,
        formula: "((x1 - s sin(w x3)) / a)^2 + (x2 / b)^2 + (x3 / c)^2 < 1",
    },
    SceneInfo {
        name: "torus_shell",
        dim: 3,
        openness: Openness::Open,
        bounded: true,
        standin: false,
        formula: "(sqrt(x1^2 + x2^2) - R)^2 + x3^2 < r^2",
    },
    SceneInfo {
        name: "strip_standin",
        dim: 2,
        openness: Openness::Open,
        bounded: false,
        standin: true,
        formula: "x1 x2 > 1",
    },
    SceneInfo {
        name: "nonregular_standin",
        dim: 2,
        openness: Openness::Open,
        bounded: true,
        standin: true,
        formula: "(|x - (-1,0)| < 1 or |x - (1,0)| < 1) and not (x1 > 1, |x2| < w)",
    },
];

pub fn scene_info(name: &str) -> Result<&'static SceneInfo> {
    SCENES
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown scene `{name}`")))
}

/// A named scene with parameters, window and resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub openness: Openness,
    pub bbox: BoundingBox,
    pub res: Vec<usize>,
}

impl SceneSpec {
    /// Defaults for `name`, with `params` overriding the default parameters.
    ///
    /// The fan window `[-1.0625, 4.0625] × [-4.0625, 4.0625]` at 41 × 65
    /// has cell size 1/8 with cell centers on `x = 0` and `y = 1`.
    pub fn new(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let info = scene_info(name)?;
        let (defaults, bbox, res): (&[(&str, f64)], BoundingBox, Vec<usize>) = match name {
            "fan" | "fan_union" => (
                if name == "fan" { &[("n", 1.0)] } else { &[] },
                BoundingBox::new(vec![-1.0625, -4.0625], vec![4.0625, 4.0625])?,
                vec![41, 65],
            ),
            "square_annulus" => (&[], BoundingBox::cube(3, -4.0, 4.0)?, vec![96; 3]),
            "hyperbola_shell" => (&[], BoundingBox::cube(3, -3.0, 3.0)?, vec![96; 3]),
            "ball" => (
                &[("r", 0.8), ("cx", 0.0), ("cy", 0.0), ("cz", 0.0)],
                BoundingBox::cube(3, -1.0, 1.0)?,
                vec![48; 3],
            ),
            "ellipsoid" => (
                &[("a", 0.9), ("b", 0.6), ("c", 0.45)],
                BoundingBox::cube(3, -1.0, 1.0)?,
                vec![48; 3],
            ),
            "slicewise_blob" => (
                &[("a", 0.7), ("b", 0.5), ("c", 0.9), ("s", 0.35), ("w", 2.5)],
                BoundingBox::cube(3, -1.25, 1.25)?,
                vec![48; 3],
            ),
            "torus_shell" => (
                &[("R", 0.6), ("r", 0.25)],
                BoundingBox::cube(3, -1.0, 1.0)?,
                vec![64; 3],
            ),
            "strip_standin" => (&[], BoundingBox::cube(2, -4.0, 4.0)?, vec![64; 2]),
            "nonregular_standin" => (&[("w", 0.05)], BoundingBox::cube(2, -2.5, 2.5)?, vec![65; 2]),
            _ => unreachable!("scene table and defaults disagree"),
        };
        let mut all: BTreeMap<String, f64> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for (k, v) in params {
            if !all.contains_key(k) {
                return Err(Error::InvalidArgument(format!("scene `{name}` has no parameter `{k}`")));
            }
            all.insert(k.clone(), *v);
        }
        Ok(Self {
            name: name.to_string(),
            params: all,
            openness: info.openness,
            bbox,
            res,
        })
    }

    pub fn with_res(mut self, res: Vec<usize>) -> Self {
        self.res = res;
        self
    }

    pub fn with_box(mut self, bbox: BoundingBox) -> Self {
        self.bbox = bbox;
        self
    }

    pub fn info(&self) -> Result<&'static SceneInfo> {
        scene_info(&self.name)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.bbox.clone(), self.res.clone())
    }

    fn p(&self, k: &str) -> f64 {
        self.params[k]
    }
}

/// `f` of the hyperbola shell.
pub fn hyperbola_f(x: &[f64]) -> f64 {
    let (a, b, c) = (x[0], x[1], x[2]);
    a * a - b * b * (1.0 - c * c) + c * c - 1.0
}

/// Gradient of [`hyperbola_f`], differentiated by hand.
pub fn hyperbola_grad(x: &[f64]) -> [f64; 3] {
    let (a, b, c) = (x[0], x[1], x[2]);
    [2.0 * a, -2.0 * b * (1.0 - c * c), 2.0 * c * (1.0 + b * b)]
}

/// Fan centers within this distance of a boundary ray count as on it.
/// Windows whose cell sizes have a rational ratio put some centers exactly
/// on a ray, and rounding in the center would otherwise decide their side.
const RAY_TOL: f64 = 1e-12;

fn predicate(spec: &SceneSpec) -> Box<dyn Fn(&[f64]) -> bool + Sync + '_> {
    match spec.name.as_str() {
        "fan" => {
            let n = spec.p("n");
            Box::new(move |x| x[0] >= -RAY_TOL && (x[1].abs() - n * x[0]) <= RAY_TOL)
        }
        "fan_union" => Box::new(|x| x[0] > RAY_TOL || (x[0].abs() <= RAY_TOL && x[1].abs() <= RAY_TOL)),
        "square_annulus" => Box::new(|x| {
            let s = x[0].abs() + x[2].abs();
            1.0 < s && s < 3.0 && 0.0 < x[1] && x[1] < 1.0
        }),
        "hyperbola_shell" => Box::new(|x| hyperbola_f(x) > 0.0),
        "ball" => {
            let (r, c) = (spec.p("r"), [spec.p("cx"), spec.p("cy"), spec.p("cz")]);
            Box::new(move |x| x.iter().zip(c).map(|(v, c)| (v - c).powi(2)).sum::<f64>() <= r * r)
        }
        "ellipsoid" => {
            let (a, b, c) = (spec.p("a"), spec.p("b"), spec.p("c"));
            Box::new(move |x| (x[0] / a).powi(2) + (x[1] / b).powi(2) + (x[2] / c).powi(2) <= 1.0)
        }
        "slicewise_blob" => {
            let (a, b, c, s, w) = (spec.p("a"), spec.p("b"), spec.p("c"), spec.p("s"), spec.p("w"));
            Box::new(move |x| {
                let u = x[0] - s * (w * x[2]).sin();
                (u / a).powi(2) + (x[1] / b).powi(2) + (x[2] / c).powi(2) < 1.0
            })
        }
        "torus_shell" => {
            let (big, r) = (spec.p("R"), spec.p("r"));
            Box::new(move |x| (x[0].hypot(x[1]) - big).powi(2) + x[2] * x[2] < r * r)
        }
        "strip_standin" => Box::new(|x| x[0] * x[1] > 1.0),
        "nonregular_standin" => {
            let w = spec.p("w");
            Box::new(move |x| {
                let disk = |cx: f64| (x[0] - cx).powi(2) + x[1] * x[1] < 1.0;
                (disk(-1.0) || disk(1.0)) && !(x[0] > 1.0 && x[1].abs() < w)
            })
        }
        _ => unreachable!(),
    }
}

/// The scene's inequality, for probing an unbounded scene beyond its box.
/// `None` for bounded scenes.
pub fn exterior(spec: &SceneSpec) -> Result<Option<Box<dyn Fn(&[f64]) -> bool + Sync + '_>>> {
    Ok((!spec.info()?.bounded).then(|| predicate(spec)))
}

/// Voxelises a scene: a cell is occupied iff its center satisfies the
/// scene's inequality.
pub fn scene(spec: &SceneSpec) -> Result<VoxelGrid> {
    let info = spec.info()?;
    if spec.bbox.dim() != info.dim || spec.res.len() != info.dim {
        return Err(Error::DimMismatch {
            expected: info.dim,
            got: spec.bbox.dim(),
        });
    }
    let g = VoxelGrid::from_predicate(spec.grid_spec()?, predicate(spec));
    if info.bounded && g.boundary_cells().len() != g.interface_cells().len() {
        return Err(Error::BoxTooSmall(spec.name.clone()));
    }
    Ok(g)
}

pub fn slice(g: &VoxelGrid, axis: usize, index: usize) -> Result<VoxelGrid> {
    g.slice(axis, index)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientReport {
    /// Smallest `|∇f|` over boundary-band cell centers.
    pub min_norm: f64,
    pub band_cells: usize,
    /// Largest difference between central differences and `∇f`.
    pub max_fd_error: f64,
    pub fd_points: usize,
}

/// Gradient of the hyperbola shell's `f` on its boundary band, plus a
/// central-difference cross-check at `fd_points` random points.
pub fn gradient_check(res: usize, fd_points: usize, seed: u64) -> Result<GradientReport> {
    let spec = SceneSpec::new("hyperbola_shell", &BTreeMap::new())?.with_res(vec![res; 3]);
    let g = scene(&spec)?;
    let gs = g.spec();
    let band = g.interface_cells();
    let min_norm = band
        .iter()
        .map(|&c| {
            let x = gs.center(&gs.unravel(c)[..3]);
            let d = hyperbola_grad(&x);
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    let mut rng = sampling::rng(seed, 7);
    let h = 1e-5;
    let mut max_fd_error: f64 = 0.0;
    for _ in 0..fd_points {
        let x: Vec<f64> = (0..3)
            .map(|a| rng.gen_range(spec.bbox.lo()[a]..spec.bbox.hi()[a]))
            .collect();
        let d = hyperbola_grad(&x);
        for a in 0..3 {
            let mut p = x.clone();
            let mut m = x.clone();
            p[a] += h;
            m[a] -= h;
            let fd = (hyperbola_f(&p) - hyperbola_f(&m)) / (2.0 * h);
            max_fd_error = max_fd_error.max((fd - d[a]).abs());
        }
    }
    Ok(GradientReport {
        min_norm,
        band_cells: band.len(),
        max_fd_error,
        fd_points,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SliceVerdict {
    pub index: usize,
    /// World coordinate of the slice center.
    pub coord: f64,
    pub components: usize,
    pub verdict: Verdict,
}

/// Convexity of every nonempty slice `x_axis = const` of `g` under a family
/// living in the slice dimension.
///
/// When `g` already has the family's dimension it is treated as a single
/// slice.
pub fn slice_convexity_report(
    g: &VoxelGrid,
    axis: usize,
    family_in_slice: &FamilyW,
    budget: usize,
    seed: u64,
    ext: Option<Exterior<'_>>,
) -> Result<Vec<SliceVerdict>> {
    if g.dim() == family_in_slice.dim() {
        return Ok(vec![SliceVerdict {
            index: 0,
            coord: 0.0,
            components: connected_components(g),
            verdict: is_convex_with(g, family_in_slice, budget, seed, ext)?,
        }]);
    }
    if family_in_slice.dim() + 1 != g.dim() {
        return Err(Error::DimMismatch {
            expected: g.dim() - 1,
            got: family_in_slice.dim(),
        });
    }
    let mut out = Vec::new();
    for j in 0..g.spec().res()[axis] {
        let s = g.slice(axis, j)?;
        if s.is_empty() {
            continue;
        }
        let coord = g.spec().bbox().lo()[axis] + (j as f64 + 0.5) * g.spec().cell_size(axis);
        let lifted = ext.map(|f| {
            move |y: &[f64]| {
                let mut x = y.to_vec();
                x.insert(axis, coord);
                f(&x)
            }
        });
        out.push(SliceVerdict {
            index: j,
            coord,
            components: connected_components(&s),
            verdict: is_convex_with(
                &s,
                family_in_slice,
                budget,
                seed,
                lifted.as_ref().map(|f| f as Exterior<'_>),
            )?,
        });
    }
    Ok(out)
}

/// Binary PGM (P5) image of a 2D grid: one row per index of axis 0,
/// 255 = occupied.
pub fn to_pgm(g: &VoxelGrid) -> Result<Vec<u8>> {
    if g.dim() != 2 {
        return Err(Error::DimMismatch {
            expected: 2,
            got: g.dim(),
        });
    }
    let (h, w) = (g.spec().res()[0], g.spec().res()[1]);
    let mut header = String::new();
    let _ = write!(header, "P5\n{w} {h}\n255\n");
    let mut out = header.into_bytes();
    out.extend((0..h * w).map(|c| if g.get(c) { 255u8 } else { 0 }));
    Ok(out)
}
