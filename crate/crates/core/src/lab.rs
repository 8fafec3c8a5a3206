//! Experiment harness: the duality laws as randomized property checks, and
//! the scene, check, hull, Betti and sweep commands behind the CLI.
//!
//! Commands are pure functions of a [`RunConfig`]; they return a [`Report`]
//! holding the text to print and the files to write.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::duality::{component_of_hull, covered_cells, hull_wrt, is_convex_with, is_weakly_convex, Exec, Verdict};
use crate::error::{Error, Result};
use crate::families::{FamilyW, ParamSample};
use crate::geometry::{dot, subspace_misses, AffineSubspace, BoundingBox, GridSpec, VoxelGrid};
use crate::sampling;
use crate::scenes::{self, SceneSpec};
use crate::topology::sphere_test;

/// Length of the finite prefixes used for the sequence statements.
pub const PREFIX_LEN: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvexityTest {
    #[default]
    Convex,
    Weak,
    Component,
}

/// `lo..hi`, either for every axis or per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxArg {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub scene: Option<String>,
    pub params: BTreeMap<String, f64>,
    /// VXG1 grid used instead of a scene.
    pub input: Option<PathBuf>,
    pub res: Option<Vec<usize>>,
    pub bbox: Option<BoxArg>,
    pub family: Option<String>,
    pub budget: usize,
    pub seed: u64,
    pub trials: usize,
    pub test: ConvexityTest,
    /// Defaults to JSON for `check`, `scene` and `hull`, CSV otherwise.
    pub format: Option<Format>,
    /// Ignore the analytic exterior of unbounded scenes.
    pub clip: bool,
    pub timing: bool,
    pub pgm: bool,
    pub sweep_res: Vec<usize>,
    pub sweep_budgets: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            scene: None,
            params: BTreeMap::new(),
            input: None,
            res: None,
            bbox: None,
            family: None,
            budget: 10_000,
            seed: 42,
            trials: 100,
            test: ConvexityTest::Convex,
            format: None,
            clip: false,
            timing: false,
            pgm: false,
            sweep_res: vec![32, 48, 64, 96],
            sweep_budgets: vec![1_000, 10_000, 100_000],
        }
    }
}

impl RunConfig {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }
}

/// What a command produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub text: String,
    /// `(file name, contents)` to place in the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    /// Every assertion of the command held.
    pub ok: bool,
}

pub fn parse_res(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("resolution `{t}`: {e}")))
        })
        .collect()
}

pub fn parse_box(s: &str) -> Result<BoxArg> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(',') {
        let (a, b) = part
            .split_once("..")
            .ok_or_else(|| Error::Parse(format!("box `{part}` is not lo..hi")))?;
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("box bound `{t}`: {e}")))
        };
        lo.push(num(a)?);
        hi.push(num(b)?);
    }
    Ok(BoxArg { lo, hi })
}

pub fn parse_param(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Parse(format!("parameter `{s}` is not k=v")))?;
    let v = v
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("parameter `{k}`: {e}")))?;
    Ok((k.trim().to_string(), v))
}

fn per_axis<T: Clone>(v: &[T], n: usize, what: &str) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); n]),
        k if k == n => Ok(v.to_vec()),
        k => Err(Error::InvalidArgument(format!("{what} has {k} entries, expected 1 or {n}"))),
    }
}

/// `v` with 9 significant digits, trailing zeros dropped.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.8e}");
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |t: &str| -> String {
        if t.contains('.') {
            t.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            t.to_string()
        }
    };
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

fn res_label(res: &[usize]) -> String {
    res.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

/// The scene named in `cfg`, with its box and resolution overrides.
pub fn scene_spec(cfg: &RunConfig) -> Result<SceneSpec> {
    let name = cfg
        .scene
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("a scene or an input grid is required".into()))?;
    let mut spec = SceneSpec::new(name, &cfg.params)?;
    let n = spec.bbox.dim();
    if let Some(b) = &cfg.bbox {
        let bbox = BoundingBox::new(per_axis(&b.lo, n, "box")?, per_axis(&b.hi, n, "box")?)?;
        spec = spec.with_box(bbox);
    }
    if let Some(r) = &cfg.res {
        spec = spec.with_res(per_axis(r, n, "resolution")?);
    }
    Ok(spec)
}

/// The grid a command works on.
pub struct Subject {
    pub name: String,
    pub grid: VoxelGrid,
    pub scene: Option<SceneSpec>,
}

impl Subject {
    fn unbounded(&self) -> Result<bool> {
        match &self.scene {
            Some(s) => Ok(!s.info()?.bounded),
            None => Ok(false),
        }
    }

    fn standin(&self) -> Result<bool> {
        match &self.scene {
            Some(s) => Ok(s.info()?.standin),
            None => Ok(false),
        }
    }
}

pub fn subject(cfg: &RunConfig) -> Result<Subject> {
    if let Some(path) = &cfg.input {
        let grid = VoxelGrid::from_vxg1(&std::fs::read_to_string(path)?)?;
        return Ok(Subject {
            name: stem(path),
            grid,
            scene: None,
        });
    }
    let spec = scene_spec(cfg)?;
    Ok(Subject {
        name: spec.name.clone(),
        grid: scenes::scene(&spec)?,
        scene: Some(spec),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "grid".into(), |s| s.to_string_lossy().into_owned())
}

/// Family a scene is usually tested against.
pub fn default_family(scene: &str) -> &'static str {
    match scene {
        "fan" | "fan_union" | "strip_standin" | "nonregular_standin" => "lines",
        "square_annulus" => "parallel-lines",
        "hyperbola_shell" => "slices:2",
        _ => "hyperplanes",
    }
}

fn family(cfg: &RunConfig, s: &Subject) -> Result<FamilyW> {
    let name = match (&cfg.family, &s.scene) {
        (Some(f), _) => f.as_str(),
        (None, Some(sc)) => default_family(&sc.name),
        (None, None) => "hyperplanes",
    };
    FamilyW::parse(name, s.grid.dim())
}

fn run_test(cfg: &RunConfig, s: &Subject, w: &FamilyW, budget: usize) -> Result<(Verdict, bool)> {
    let ext = match (&s.scene, cfg.test, cfg.clip) {
        (Some(sc), ConvexityTest::Convex, false) => scenes::exterior(sc)?,
        _ => None,
    };
    let v = match cfg.test {
        ConvexityTest::Convex => is_convex_with(&s.grid, w, budget, cfg.seed, ext.as_deref())?,
        ConvexityTest::Weak => is_weakly_convex(&s.grid, w, budget, cfg.seed)?,
        ConvexityTest::Component => component_of_hull(&s.grid, w, budget, cfg.seed)?,
    };
    Ok((v, ext.is_some()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialise")
}

fn json_line(v: &Value) -> String {
    let mut s = serde_json::to_string(v).expect("report types serialise");
    s.push('\n');
    s
}

/// Convexity, weak convexity or hull-component verdict for a scene or grid.
pub fn cmd_check(cfg: &RunConfig) -> Result<Report> {
    let s = subject(cfg)?;
    let w = family(cfg, &s)?;
    let (v, exterior) = run_test(cfg, &s, &w, cfg.budget)?;
    let mut doc = to_value(&v);
    let obj = doc.as_object_mut().expect("verdict is an object");
    obj.insert("scene".into(), json!(s.name));
    obj.insert("standin".into(), json!(s.standin()?));
    obj.insert("exterior".into(), json!(if exterior { "analytic" } else { "none" }));
    obj.insert("unbounded_caveat".into(), json!(s.unbounded()? && !exterior));
    let text = match cfg.format_or(Format::Json) {
        Format::Json => json_line(&doc),
        Format::Csv => {
            let witness = v
                .witness_cell
                .as_ref()
                .map(|c| c.iter().map(usize::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default();
            format!(
                "scene,test,status,witness,budget,seed,grid_sha\n{},{},{},{},{},{},{}\n",
                s.name,
                v.test,
                if v.holds() { "holds" } else { "fails" },
                witness,
                v.budget,
                v.seed,
                v.grid_sha
            )
        }
    };
    Ok(Report {
        files: vec![("verdict.json".into(), json_line(&doc).into_bytes())],
        text,
        ok: v.holds(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BettiRow {
    pub scene: String,
    pub res: String,
    pub betti: Vec<usize>,
    pub class: String,
    pub unbounded_caveat: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

fn betti_header(n: usize, timing: bool) -> String {
    let mut h = String::from("scene,res");
    for k in 0..=n {
        let _ = write!(h, ",b{k}");
    }
    h.push_str(",class,unbounded_caveat");
    if timing {
        h.push_str(",seconds");
    }
    h
}

fn betti_csv(r: &BettiRow) -> String {
    let mut s = format!("{},{}", r.scene, r.res);
    for b in &r.betti {
        let _ = write!(s, ",{b}");
    }
    let _ = write!(s, ",{},{}", r.class, r.unbounded_caveat);
    if let Some(t) = r.seconds {
        let _ = write!(s, ",{}", sig9(t));
    }
    s
}

/// Boundary Betti numbers and sphere classification.
pub fn cmd_betti(cfg: &RunConfig) -> Result<Report> {
    let s = subject(cfg)?;
    let t = Instant::now();
    let (class, b) = sphere_test(&s.grid)?;
    let row = BettiRow {
        scene: s.name.clone(),
        res: res_label(s.grid.spec().res()),
        betti: b.0,
        class: class.to_string(),
        unbounded_caveat: s.unbounded()?,
        seconds: cfg.timing.then(|| t.elapsed().as_secs_f64()),
    };
    let text = match cfg.format_or(Format::Csv) {
        Format::Csv => format!("{}\n{}\n", betti_header(s.grid.dim(), cfg.timing), betti_csv(&row)),
        Format::Json => json_line(&to_value(&row)),
    };
    Ok(Report {
        files: vec![("betti.csv".into(), text.clone().into_bytes())],
        text,
        ok: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub res: usize,
    pub budget: usize,
    pub status: String,
    pub betti: Vec<usize>,
    pub class: String,
    /// Same verdict and Betti numbers as the finest setting.
    pub stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

/// `base` at `r` cells per axis. Axes whose default grid has a cell
/// centered on 0 keep one, by shifting the window less than half a cell.
fn aligned(base: &SceneSpec, r: usize) -> Result<SceneSpec> {
    let gs = base.grid_spec()?;
    let b = &base.bbox;
    let (mut lo, mut hi) = (b.lo().to_vec(), b.hi().to_vec());
    for a in 0..b.dim() {
        let k = -b.lo()[a] / gs.cell_size(a) - 0.5;
        if (k - k.round()).abs() > 1e-9 {
            continue;
        }
        let h = b.extent(a) / r as f64;
        let lo_a = -((-b.lo()[a] / h - 0.5).round() + 0.5) * h;
        lo[a] = lo_a;
        hi[a] = lo_a + r as f64 * h;
    }
    Ok(base
        .clone()
        .with_box(BoundingBox::new(lo, hi)?)
        .with_res(vec![r; b.dim()]))
}

/// Verdicts and Betti numbers over a grid of resolutions and budgets.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Report> {
    if cfg.input.is_some() {
        return Err(Error::InvalidArgument("sweep needs a named scene".into()));
    }
    let mut res = cfg.sweep_res.clone();
    res.sort_unstable();
    let mut budgets = cfg.sweep_budgets.clone();
    budgets.sort_unstable();
    if res.is_empty() || budgets.is_empty() {
        return Err(Error::InvalidArgument("empty sweep".into()));
    }
    let base = scene_spec(cfg)?;
    let n = base.bbox.dim();
    let mut rows = Vec::new();
    for &r in &res {
        let spec = aligned(&base, r)?;
        let s = Subject {
            name: spec.name.clone(),
            grid: scenes::scene(&spec)?,
            scene: Some(spec),
        };
        let w = family(cfg, &s)?;
        let (class, b) = sphere_test(&s.grid)?;
        for &budget in &budgets {
            let t = Instant::now();
            let (v, _) = run_test(cfg, &s, &w, budget)?;
            rows.push(SweepRow {
                res: r,
                budget,
                status: if v.holds() { "holds" } else { "fails" }.into(),
                betti: b.0.clone(),
                class: class.to_string(),
                stable: false,
                seconds: cfg.timing.then(|| t.elapsed().as_secs_f64()),
            });
        }
    }
    let finest = rows.last().expect("nonempty sweep").clone();
    for r in &mut rows {
        r.stable = r.status == finest.status && r.betti == finest.betti;
    }
    let text = match cfg.format_or(Format::Csv) {
        Format::Csv => {
            let mut out = String::from("scene,res,budget,status");
            for k in 0..=n {
                let _ = write!(out, ",b{k}");
            }
            out.push_str(",class,stable");
            if cfg.timing {
                out.push_str(",seconds");
            }
            out.push('\n');
            for r in &rows {
                let _ = write!(out, "{},{},{},{}", base.name, r.res, r.budget, r.status);
                for b in &r.betti {
                    let _ = write!(out, ",{b}");
                }
                let _ = write!(out, ",{},{}", r.class, r.stable);
                if let Some(t) = r.seconds {
                    let _ = write!(out, ",{}", sig9(t));
                }
                out.push('\n');
            }
            out
        }
        Format::Json => json_line(&json!({ "scene": base.name, "rows": rows })),
    };
    Ok(Report {
        files: vec![("sweep.csv".into(), text.clone().into_bytes())],
        text,
        ok: true,
    })
}

/// Voxelises a scene to VXG1, with optional PGM slices along the last axis.
pub fn cmd_scene(cfg: &RunConfig) -> Result<Report> {
    let spec = scene_spec(cfg)?;
    let g = scenes::scene(&spec)?;
    let file = format!("{}.vxg1", spec.name);
    let mut files = vec![(file.clone(), g.to_vxg1().into_bytes())];
    if cfg.pgm {
        if g.dim() == 2 {
            files.push((format!("{}.pgm", spec.name), scenes::to_pgm(&g)?));
        } else {
            let axis = g.dim() - 1;
            for j in 0..g.spec().res()[axis] {
                let layer = g.slice(axis, j)?;
                if layer.dim() == 2 {
                    files.push((format!("{}_{j:03}.pgm", spec.name), scenes::to_pgm(&layer)?));
                }
            }
        }
    }
    let info = spec.info()?;
    let doc = json!({
        "scene": spec.name,
        "params": spec.params,
        "res": g.spec().res(),
        "cells": g.count(),
        "sha": g.sha(),
        "openness": spec.openness,
        "standin": info.standin,
        "file": file,
    });
    Ok(Report {
        text: json_line(&doc),
        files,
        ok: true,
    })
}

/// Sampled hull of a scene or grid, written as VXG1.
pub fn cmd_hull(cfg: &RunConfig) -> Result<Report> {
    let s = subject(cfg)?;
    let w = family(cfg, &s)?;
    let h = hull_wrt(&s.grid, &w, cfg.budget, cfg.seed)?;
    let file = format!("{}_hull.vxg1", s.name);
    let doc = json!({
        "input": s.name,
        "input_sha": s.grid.sha(),
        "input_cells": s.grid.count(),
        "hull_sha": h.sha(),
        "hull_cells": h.count(),
        "family": w.descriptor(cfg.budget, cfg.seed),
        "file": file,
    });
    Ok(Report {
        text: json_line(&doc),
        files: vec![(file, h.to_vxg1().into_bytes())],
        ok: true,
    })
}

/// Executable forms of the duality laws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prop {
    /// Monotonicity of conjugates and hulls.
    P1,
    /// Convexity is preserved by preimages under the projection `R³ → R²`.
    P2,
    /// Conjugate of a union is the intersection of conjugates.
    P3,
    /// `E ⊆ E**` and `(E**)* = E*`.
    P4,
    /// Intersections of convex sets are convex.
    P5,
    /// Conjugate of a decreasing intersection is the union of conjugates.
    P6,
    /// Outer approximation by neighbourhoods.
    P7,
    /// A weakly convex domain is a component of its hull.
    P8,
}

impl Prop {
    pub const ALL: [Prop; 8] = [
        Prop::P1,
        Prop::P2,
        Prop::P3,
        Prop::P4,
        Prop::P5,
        Prop::P6,
        Prop::P7,
        Prop::P8,
    ];

    pub fn label(self) -> Option<&'static str> {
        matches!(self, Prop::P6 | Prop::P7).then_some("finite-prefix")
    }

    /// Number of instances drawn for `trials` requested. P8 runs the square
    /// annulus plus at most ten random polytopes.
    pub fn trials(self, trials: usize) -> usize {
        match self {
            Prop::P8 => 1 + trials.min(10),
            _ => trials,
        }
    }

    fn salt(self) -> u64 {
        0x5000 + self as u64
    }
}

/// Everything needed to re-run one property check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub prop: Prop,
    /// VXG1 payloads.
    pub grids: Vec<String>,
    pub family: FamilyW,
    pub budget: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub id: Prop,
    pub trials: usize,
    pub failures: usize,
    pub label: Option<String>,
    /// First failing instance, if any.
    pub counterexample: Option<Instance>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn unit_cube(n: usize, res: usize) -> Result<GridSpec> {
    GridSpec::uniform(BoundingBox::cube(n, -1.0, 1.0)?, res)
}

/// Grid and family for a random trial: 2D lines on even trials, then
/// alternately 3D planes and lines parallel to `x3 = 0`.
fn trial_setting(trial: usize) -> Result<(GridSpec, FamilyW)> {
    match trial % 4 {
        0 | 2 => Ok((unit_cube(2, 24)?, FamilyW::all_hyperplanes(2)?)),
        1 => Ok((unit_cube(3, 12)?, FamilyW::all_hyperplanes(3)?)),
        _ => Ok((unit_cube(3, 12)?, FamilyW::ParallelLines3D)),
    }
}

/// Union of one to four random boxes, cut by up to two half-spaces.
pub fn random_grid(spec: &GridSpec, rng: &mut impl Rng) -> VoxelGrid {
    let n = spec.dim();
    let boxes: Vec<(Vec<f64>, Vec<f64>)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            (0..n)
                .map(|_| {
                    let a: f64 = rng.gen_range(-0.9..0.7);
                    (a, a + rng.gen_range(0.15..0.9))
                })
                .unzip()
        })
        .collect();
    let cuts: Vec<(Vec<f64>, f64)> = (0..rng.gen_range(0..=2))
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            (a, rng.gen_range(-0.3..0.6))
        })
        .collect();
    VoxelGrid::from_predicate(spec.clone(), |x| {
        boxes
            .iter()
            .any(|(lo, hi)| (0..n).all(|k| lo[k] <= x[k] && x[k] <= hi[k]))
            && cuts.iter().all(|(a, b)| dot(a, x) <= *b)
    })
}

/// Intersection of three to six random half-spaces containing a ball of
/// radius 0.3 about the origin.
pub fn random_polytope(spec: &GridSpec, rng: &mut impl Rng) -> VoxelGrid {
    let n = spec.dim();
    let cuts: Vec<(Vec<f64>, f64)> = (0..rng.gen_range(3..=6))
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let len = dot(&a, &a).sqrt().max(1e-9);
            (a.iter().map(|v| v / len).collect(), rng.gen_range(0.3..0.8))
        })
        .collect();
    VoxelGrid::from_predicate(spec.clone(), |x| {
        cuts.iter().all(|(a, b)| dot(a, x) <= *b) && dot(x, x) <= 0.81
    })
}

fn box_grid(spec: &GridSpec, c: &[f64], half: f64) -> VoxelGrid {
    VoxelGrid::from_predicate(spec.clone(), |x| x.iter().zip(c).all(|(v, c)| (v - c).abs() <= half))
}

fn dilate(g: &VoxelGrid, times: usize) -> VoxelGrid {
    (0..times).fold(g.clone(), |acc, _| acc.dilated())
}

impl Prop {
    /// The `trial`-th instance, drawn from `(cfg.seed, trial)`.
    pub fn instance(self, trial: usize, cfg: &RunConfig) -> Result<Instance> {
        let seed = cfg.seed.wrapping_add(trial as u64);
        let mut rng = sampling::rng(seed, self.salt());
        let (spec, family) = trial_setting(trial)?;
        let grids: Vec<VoxelGrid> = match self {
            Prop::P1 => {
                let e = random_grid(&spec, &mut rng);
                let cut = random_grid(&spec, &mut rng);
                let e1 = e.intersect(&cut)?;
                vec![e, e1]
            }
            Prop::P2 => {
                let spec2 = unit_cube(2, 24)?;
                let g = random_grid(&spec2, &mut rng);
                return Ok(Instance {
                    prop: self,
                    grids: vec![g.to_vxg1()],
                    family: FamilyW::all_hyperplanes(2)?,
                    budget: cfg.budget,
                    seed,
                });
            }
            Prop::P3 => (0..3).map(|_| random_grid(&spec, &mut rng)).collect(),
            Prop::P4 | Prop::P7 => vec![random_grid(&spec, &mut rng)],
            Prop::P5 => (0..2).map(|_| random_grid(&spec, &mut rng)).collect(),
            Prop::P6 => {
                let c: Vec<f64> = (0..spec.dim()).map(|_| rng.gen_range(-0.3..0.3)).collect();
                let w: f64 = rng.gen_range(0.2..0.35);
                (1..=PREFIX_LEN)
                    .map(|k| box_grid(&spec, &c, w * (1.0 + 1.0 / k as f64)))
                    .collect()
            }
            Prop::P8 => return p8_instance(trial, cfg, seed, &mut rng),
        };
        Ok(Instance {
            prop: self,
            grids: grids.iter().map(VoxelGrid::to_vxg1).collect(),
            family,
            budget: cfg.budget,
            seed,
        })
    }

    /// Whether the property holds on `inst`.
    pub fn check(self, inst: &Instance) -> Result<bool> {
        let grids = inst
            .grids
            .iter()
            .map(|t| VoxelGrid::from_vxg1(t))
            .collect::<Result<Vec<_>>>()?;
        let first = grids
            .first()
            .ok_or_else(|| Error::InvalidArgument("instance without grids".into()))?;
        let w = &inst.family;
        if self == Prop::P2 {
            return p2_check(first, inst);
        }
        if self == Prop::P8 {
            return Ok(component_of_hull(first, w, inst.budget, inst.seed)?.holds());
        }
        let samples = w.sample_params(inst.budget, first.spec().bbox(), inst.seed)?;
        let lab = Shared::new(w, &samples)?;
        match self {
            Prop::P1 => {
                let (e, e1) = (&grids[0], &grids[1]);
                if !e1.is_subset(e)? {
                    return Err(Error::InvalidArgument("P1 needs E1 ⊆ E".into()));
                }
                let (m, m1) = (lab.misses(e)?, lab.misses(e1)?);
                let conj_mono = m.iter().zip(&m1).all(|(a, b)| !a || *b);
                Ok(conj_mono && lab.hull(&m1, e.spec())?.is_subset(&lab.hull(&m, e.spec())?)?)
            }
            Prop::P3 => {
                let mut union = grids[0].clone();
                let mut meet = lab.misses(&grids[0])?;
                for g in &grids[1..] {
                    union = union.union(g)?;
                    for (a, b) in meet.iter_mut().zip(lab.misses(g)?) {
                        *a &= b;
                    }
                }
                Ok(lab.misses(&union)? == meet)
            }
            Prop::P4 => {
                let e = &grids[0];
                let m = lab.misses(e)?;
                let h = lab.hull(&m, e.spec())?;
                Ok(e.is_subset(&h)? && lab.misses(&h)? == m)
            }
            Prop::P5 => {
                let hulls = grids
                    .iter()
                    .map(|g| lab.hull(&lab.misses(g)?, g.spec()))
                    .collect::<Result<Vec<_>>>()?;
                let mut meet = hulls[0].clone();
                for h in &hulls {
                    if !lab.is_closed(h)? {
                        return Ok(false);
                    }
                    meet = meet.intersect(h)?;
                }
                lab.is_closed(&meet)
            }
            Prop::P6 => {
                for pair in grids.windows(2) {
                    if !pair[1].is_subset(&pair[0])? {
                        return Err(Error::InvalidArgument("P6 needs a decreasing sequence".into()));
                    }
                }
                let mut meet = grids[0].clone();
                let mut union = vec![false; samples.len()];
                for g in &grids {
                    meet = meet.intersect(g)?;
                    for (a, b) in union.iter_mut().zip(lab.misses(g)?) {
                        *a |= b;
                    }
                }
                Ok(lab.misses(&meet)? == union)
            }
            Prop::P7 => {
                let e = &grids[0];
                let m = lab.misses(e)?;
                let mut union = vec![false; samples.len()];
                let mut meet = VoxelGrid::full(e.spec().clone());
                for k in 1..=PREFIX_LEN {
                    let d = dilate(e, PREFIX_LEN - k);
                    let md = lab.misses(&d)?;
                    meet = meet.intersect(&lab.hull(&md, e.spec())?)?;
                    for (a, b) in union.iter_mut().zip(md) {
                        *a |= b;
                    }
                }
                Ok(union == m && meet.set_equal(&lab.hull(&m, e.spec())?)?)
            }
            Prop::P2 | Prop::P8 => unreachable!("handled above"),
        }
    }
}

/// A fixed sample list with its elements.
struct Shared<'a> {
    w: &'a FamilyW,
    samples: &'a [ParamSample],
    flats: Vec<AffineSubspace>,
}

impl<'a> Shared<'a> {
    fn new(w: &'a FamilyW, samples: &'a [ParamSample]) -> Result<Self> {
        let flats = samples.iter().map(|p| w.element(p)).collect::<Result<_>>()?;
        Ok(Self { w, samples, flats })
    }

    /// Which samples miss `e`.
    fn misses(&self, e: &VoxelGrid) -> Result<Vec<bool>> {
        self.flats.par_iter().map(|f| subspace_misses(e, f)).collect()
    }

    /// Box minus the elements selected by `mask`.
    fn hull(&self, mask: &[bool], spec: &GridSpec) -> Result<VoxelGrid> {
        let kept: Vec<ParamSample> = self
            .samples
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .map(|(p, _)| p.clone())
            .collect();
        Ok(covered_cells(self.w, &kept, spec, Exec::Parallel)?.complement())
    }

    /// Convex for the sample list: equal to its own hull.
    fn is_closed(&self, g: &VoxelGrid) -> Result<bool> {
        self.hull(&self.misses(g)?, g.spec())?.set_equal(g)
    }
}

/// The plane grid and its cylinder over four layers get the same verdict.
fn p2_check(g: &VoxelGrid, inst: &Instance) -> Result<bool> {
    let b = g.spec().bbox();
    let bbox = BoundingBox::new(
        [b.lo(), &[-1.0]].concat(),
        [b.hi(), &[1.0]].concat(),
    )?;
    let res = [g.spec().res(), &[4]].concat();
    let spec3 = GridSpec::new(bbox, res)?;
    let lifted = VoxelGrid::from_predicate(spec3, |x| {
        g.spec().locate(&x[..2]).is_some_and(|idx| g.get_idx(&idx[..2]))
    });
    let plane = FamilyW::all_hyperplanes(2)?;
    let cyl = FamilyW::cylinder(plane.clone(), 2)?;
    let v2 = is_convex_with(g, &plane, inst.budget, inst.seed, None)?;
    let v3 = is_convex_with(&lifted, &cyl, inst.budget, inst.seed, None)?;
    Ok(v2.holds() == v3.holds())
}

fn p8_instance(trial: usize, cfg: &RunConfig, seed: u64, rng: &mut impl Rng) -> Result<Instance> {
    if trial == 0 {
        let spec = SceneSpec::new("square_annulus", &BTreeMap::new())?;
        return Ok(Instance {
            prop: Prop::P8,
            grids: vec![scenes::scene(&spec)?.to_vxg1()],
            family: FamilyW::ParallelLines3D,
            budget: cfg.budget,
            seed,
        });
    }
    let n = if trial % 2 == 1 { 2 } else { 3 };
    let spec = unit_cube(n, if n == 2 { 24 } else { 12 })?;
    let w = FamilyW::all_hyperplanes(n)?;
    for _ in 0..50 {
        let g = random_polytope(&spec, rng);
        if g.is_empty() || g.component_labels().1 != 1 {
            continue;
        }
        if is_weakly_convex(&g, &w, cfg.budget, seed)?.holds() {
            return Ok(Instance {
                prop: Prop::P8,
                grids: vec![g.to_vxg1()],
                family: w,
                budget: cfg.budget,
                seed,
            });
        }
    }
    Err(Error::InvalidArgument(
        "no weakly convex polytope in 50 draws".into(),
    ))
}

/// Re-runs a report's counterexample, which must fail again.
pub fn replay(report: &PropertyReport) -> Result<()> {
    match &report.counterexample {
        Some(inst) if inst.prop.check(inst)? => Err(Error::ReplayMismatch(format!(
            "{:?} counterexample passed on replay",
            inst.prop
        ))),
        _ => Ok(()),
    }
}

pub fn run_prop(p: Prop, cfg: &RunConfig) -> Result<PropertyReport> {
    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let trials = p.trials(cfg.trials);
    let mut failures = 0;
    let mut counterexample = None;
    for t in 0..trials {
        let inst = p.instance(t, cfg)?;
        if !p.check(&inst)? {
            failures += 1;
            counterexample.get_or_insert(inst);
        }
    }
    let report = PropertyReport {
        id: p,
        trials,
        failures,
        label: p.label().map(str::to_string),
        counterexample,
    };
    replay(&report)?;
    Ok(report)
}

/// Every property on `cfg.trials` instances.
pub fn cmd_props(cfg: &RunConfig) -> Result<(Vec<PropertyReport>, Report)> {
    let reports = Prop::ALL
        .iter()
        .map(|&p| run_prop(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let text = match cfg.format_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("id,trials,failures,label,status,budget,seed\n");
            for r in &reports {
                let _ = writeln!(
                    s,
                    "{:?},{},{},{},{},{},{}",
                    r.id,
                    r.trials,
                    r.failures,
                    r.label.as_deref().unwrap_or(""),
                    if r.passed() { "pass" } else { "fail" },
                    cfg.budget,
                    cfg.seed
                );
            }
            s
        }
        Format::Json => json_line(&to_value(&reports)),
    };
    let ok = reports.iter().all(PropertyReport::passed);
    let report = Report {
        files: vec![("props.json".into(), json_line(&to_value(&reports)).into_bytes())],
        text,
        ok,
    };
    Ok((reports, report))
}

/// Dispatches on `cfg.command`.
pub fn run(cfg: &RunConfig) -> Result<Report> {
    match cfg.command.as_str() {
        "scene" => cmd_scene(cfg),
        "check" => cmd_check(cfg),
        "hull" => cmd_hull(cfg),
        "betti" => cmd_betti(cfg),
        "sweep" => cmd_sweep(cfg),
        "props" => cmd_props(cfg).map(|(_, r)| r),
        other => Err(Error::InvalidArgument(format!("unknown command `{other}`"))),
    }
}
