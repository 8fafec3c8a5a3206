//! `linconvex`: voxel scenes, convexity verdicts, hulls, Betti numbers and
//! property checks from the command line.
//!
//! Exit status is 0 on success, 1 when a verdict or property fails, 2 on
//! usage or I/O errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use linconvex::lab::{self, ConvexityTest, Format, RunConfig};

#[derive(Parser)]
#[command(name = "linconvex", version, about = "Linear convexity lab on voxel grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelise a named scene to VXG1.
    Scene {
        #[command(flatten)]
        common: Common,
        /// Also write PGM slices along the last axis.
        #[arg(long)]
        pgm: bool,
    },
    /// Convexity verdict for a scene or grid.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "convex")]
        test: TestArg,
        /// Treat unbounded scenes as clipped to the box.
        #[arg(long)]
        clip: bool,
        /// Invert the exit status: succeed only if the verdict fails.
        #[arg(long, value_name = "fail")]
        expect: Option<Expect>,
    },
    /// Sampled hull of a scene or grid.
    Hull {
        #[command(flatten)]
        common: Common,
    },
    /// Betti numbers of the boundary shell.
    Betti {
        #[command(flatten)]
        common: Common,
    },
    /// Verdicts and Betti numbers across resolutions and budgets.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Isotropic resolutions to visit.
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 48, 64, 96])]
        sweep_res: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 10000, 100000])]
        budgets: Vec<usize>,
        #[arg(long)]
        clip: bool,
    },
    /// Randomised checks of the duality laws.
    Props {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Named scene.
    #[arg(long, conflicts_with = "input")]
    scene: Option<String>,
    /// Scene parameter, repeatable.
    #[arg(long = "param", value_name = "K=V")]
    params: Vec<String>,
    /// VXG1 grid to use instead of a scene.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Resolution, one value or one per axis.
    #[arg(long, value_name = "R[,R..]")]
    res: Option<String>,
    /// Bounding box, one range or one per axis.
    #[arg(long = "box", value_name = "LO..HI[,LO..HI..]", allow_hyphen_values = true)]
    bbox: Option<String>,
    /// Test family, e.g. `hyperplanes`, `lines`, `parallel-lines`, `slices:2`.
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Add wall-clock seconds to tables.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    Convex,
    Weak,
    Component,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Expect {
    Fail,
}

struct Plan {
    cfg: RunConfig,
    out: Option<PathBuf>,
    expect_fail: bool,
}

fn config(common: Common, command: &str) -> anyhow::Result<(RunConfig, Option<PathBuf>)> {
    let mut params = BTreeMap::new();
    for p in &common.params {
        let (k, v) = lab::parse_param(p)?;
        params.insert(k, v);
    }
    let cfg = RunConfig {
        command: command.into(),
        scene: common.scene,
        params,
        input: common.input,
        res: common.res.as_deref().map(lab::parse_res).transpose()?,
        bbox: common.bbox.as_deref().map(lab::parse_box).transpose()?,
        family: common.family,
        budget: common.budget,
        seed: common.seed,
        format: common.format.map(|f| match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }),
        timing: common.timing,
        ..RunConfig::default()
    };
    if cfg.scene.is_none() && cfg.input.is_none() && command != "props" {
        bail!("one of --scene or --input is required");
    }
    Ok((cfg, common.out))
}

fn plan(cli: Cli) -> anyhow::Result<Plan> {
    let mut expect_fail = false;
    let (cfg, out) = match cli.command {
        Command::Scene { common, pgm } => {
            let (mut cfg, out) = config(common, "scene")?;
            if cfg.scene.is_none() {
                bail!("scene needs --scene");
            }
            cfg.pgm = pgm;
            (cfg, out)
        }
        Command::Check { common, test, clip, expect } => {
            let (mut cfg, out) = config(common, "check")?;
            cfg.test = match test {
                TestArg::Convex => ConvexityTest::Convex,
                TestArg::Weak => ConvexityTest::Weak,
                TestArg::Component => ConvexityTest::Component,
            };
            cfg.clip = clip;
            expect_fail = expect == Some(Expect::Fail);
            (cfg, out)
        }
        Command::Hull { common } => config(common, "hull")?,
        Command::Betti { common } => config(common, "betti")?,
        Command::Sweep { common, sweep_res, budgets, clip } => {
            let (mut cfg, out) = config(common, "sweep")?;
            cfg.sweep_res = sweep_res;
            cfg.sweep_budgets = budgets;
            cfg.clip = clip;
            (cfg, out)
        }
        Command::Props { common, trials } => {
            let (mut cfg, out) = config(common, "props")?;
            cfg.trials = trials;
            (cfg, out)
        }
    };
    Ok(Plan { cfg, out, expect_fail })
}

fn write_outputs(dir: &Path, cfg: &RunConfig, files: &[(String, Vec<u8>)]) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    let run = serde_json::to_string_pretty(cfg)?;
    std::fs::write(dir.join("run.json"), run + "\n")?;
    Ok(())
}

fn execute(plan: &Plan) -> anyhow::Result<bool> {
    let report = lab::run(&plan.cfg)?;
    print!("{}", report.text);
    match &plan.out {
        Some(dir) => write_outputs(dir, &plan.cfg, &report.files)?,
        None if plan.cfg.command == "scene" || plan.cfg.command == "hull" => {
            write_outputs(Path::new("."), &plan.cfg, &report.files)?
        }
        None => {}
    }
    Ok(report.ok != plan.expect_fail)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = plan(cli).and_then(|p| execute(&p));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
