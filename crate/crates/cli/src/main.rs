use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use edgeopc::fixtures::{make_fixture, FIXTURE_NAMES};
use edgeopc::geometry::segment_edges_with_min;
use edgeopc::io::{self, Layout};
use edgeopc::litho::{make_synthetic_kernels_with, SyntheticKernelParams};
use edgeopc::metrics::evaluate;
use edgeopc::mrc::check_violations;
use edgeopc::optimizer::{default_kernels, run_layout};
use edgeopc::raster::rasterize;
use edgeopc::sraf::generate_sraf_seeds;
use edgeopc::{par, EpeSamplePlan, KernelSet, OptimizerConfig, Simulator};

#[derive(Parser)]
#[command(name = "edgeopc", version, about = "Edge-based optical proximity correction")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "EDGEOPC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a layout and write mask, geometry, metrics and convergence log.
    #[command(alias = "run")]
    Optimize(OptimizeArgs),
    /// Report width/spacing violations of a geometry file. Exits with 2 if any.
    Check {
        geometry: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate a binary mask against a layout's target.
    Metrics {
        #[arg(long)]
        mask: PathBuf,
        #[command(flatten)]
        input: InputArgs,
    },
    /// Print assist-feature seeds for a layout as JSON.
    Seeds {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Write a synthetic kernel file.
    Kernels {
        #[arg(long, default_value_t = 255)]
        size: usize,
        #[arg(long, default_value_t = 24)]
        count: usize,
        #[arg(long, default_value_t = 1.35)]
        na: f64,
        #[arg(long, default_value_t = 0.6)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a named test layout as JSON (or list the names).
    Fixture {
        name: Option<String>,
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        list: bool,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Layout JSON file.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    layout: Option<PathBuf>,
    /// Named built-in layout instead of a file.
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long, default_value_t = 1, requires = "fixture")]
    scale: usize,
    /// Optimizer config (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Kernel files, one per kernel set. Synthetic kernels are used if none.
    #[arg(long = "kernels", num_args = 1..)]
    kernels: Vec<PathBuf>,
    /// Size of the synthetic kernels.
    #[arg(long)]
    kernel_size: Option<usize>,
    /// Number of synthetic kernels.
    #[arg(long)]
    kernel_count: Option<usize>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<usize>,
    /// Seed and co-optimize assist features.
    #[arg(long)]
    sraf: bool,
    /// Disable rule gating.
    #[arg(long)]
    no_mrc: bool,
}

impl InputArgs {
    fn layout(&self) -> Result<Layout> {
        let layout = match (&self.layout, &self.fixture) {
            (Some(p), _) => io::read_layout(p).with_context(|| format!("reading layout {}", p.display()))?,
            (None, Some(name)) => make_fixture(name, self.scale)?,
            (None, None) => bail!("either --layout or --fixture is required"),
        };
        layout.validate()?;
        Ok(layout)
    }

    fn config(&self) -> Result<OptimizerConfig> {
        load_config(self.config.as_deref())
    }

    fn kernel_sets(&self, config: &OptimizerConfig) -> Result<Vec<KernelSet>> {
        if !self.kernels.is_empty() {
            return self
                .kernels
                .iter()
                .map(|p| io::read_kernels(p).with_context(|| format!("reading kernels {}", p.display())))
                .collect();
        }
        if self.kernel_size.is_none() && self.kernel_count.is_none() {
            return Ok(vec![default_kernels(config)?]);
        }
        let d = SyntheticKernelParams::default();
        Ok(vec![make_synthetic_kernels_with(SyntheticKernelParams {
            size: self.kernel_size.unwrap_or(d.size),
            count: self.kernel_count.unwrap_or(d.count),
            seed: config.seed,
            ..d
        })?])
    }
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn load_config(path: Option<&Path>) -> Result<OptimizerConfig> {
    let cfg: OptimizerConfig = match path {
        Some(p) => io::read_config(p).with_context(|| format!("reading config {}", p.display()))?,
        None => OptimizerConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        par::init_global_threads(n);
    }
    match cli.command {
        Command::Optimize(a) => {
            let layout = a.input.layout()?;
            let mut cfg = a.input.config()?;
            if let Some(n) = a.iterations {
                cfg.iterations = n;
            }
            cfg.sraf_enabled |= a.sraf;
            cfg.mrc_enabled &= !a.no_mrc;
            cfg.validate()?;
            let ks = a.input.kernel_sets(&cfg)?;
            let r = run_layout(&layout, &cfg, &ks, &a.out)?;
            emit(&format!("initial\n{}\nfinal\n{}", r.initial_metrics.table(), r.metrics.table()))?;
            if r.srafs_seeded > 0 {
                emit(&format!("assist features: {} seeded, {} pruned", r.srafs_seeded, r.srafs_pruned))?;
            }
            log::info!("outputs written to {}", a.out.display());
        }
        Command::Check { geometry, config } => {
            let cfg = load_config(config.as_deref())?;
            let g = io::read_geometry(&geometry).with_context(|| format!("reading {}", geometry.display()))?;
            let v = check_violations(&g.to_segments()?, &cfg.rules()?);
            emit(&serde_json::to_string_pretty(&v)?)?;
            eprintln!("{} violation(s)", v.len());
            if !v.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Metrics { mask, input } => {
            let layout = input.layout()?;
            let cfg = input.config()?;
            let m = io::read_pgm(&mask).with_context(|| format!("reading mask {}", mask.display()))?;
            if m.shape() != (layout.width, layout.height) {
                bail!(
                    "mask is {}x{} but the layout clip is {}x{}",
                    m.width(),
                    m.height(),
                    layout.width,
                    layout.height
                );
            }
            let ks = input.kernel_sets(&cfg)?;
            let min = cfg.min_segment_length.unwrap_or(cfg.rules.min_width);
            let s = segment_edges_with_min(&layout.polygons, cfg.seg_length, min)?;
            let target = rasterize(&s, layout.width, layout.height)?;
            let plan = EpeSamplePlan::from_target(&s, cfg.th_epe, cfg.gamma, layout.width, layout.height)?;
            let sim = Simulator::new(&ks, layout.width, layout.height)?;
            let report = evaluate(&m, &target, &sim, &cfg.corners, cfg.threshold, &plan)?;
            emit(&report.table())?;
        }
        Command::Seeds { input } => {
            let layout = input.layout()?;
            let cfg = input.config()?;
            let ks = input.kernel_sets(&cfg)?;
            let min = cfg.min_segment_length.unwrap_or(cfg.rules.min_width);
            let s = segment_edges_with_min(&layout.polygons, cfg.seg_length, min)?;
            let target = rasterize(&s, layout.width, layout.height)?;
            let seeds = generate_sraf_seeds(&target, &ks[0], &cfg.rules()?, &cfg.sraf, cfg.alpha, cfg.threshold)?;
            emit(&serde_json::to_string_pretty(&seeds)?)?;
        }
        Command::Kernels {
            size,
            count,
            na,
            sigma,
            seed,
            out,
        } => {
            let ks = make_synthetic_kernels_with(SyntheticKernelParams {
                size,
                count,
                na,
                sigma,
                seed,
            })?;
            io::write_kernels(&out, &ks)?;
            log::info!("wrote {count} kernels of size {size} to {}", out.display());
        }
        Command::Fixture { name, scale, out, list } => {
            if list {
                emit(&FIXTURE_NAMES.join("\n"))?;
                return Ok(ExitCode::SUCCESS);
            }
            let Some(name) = name else {
                bail!("a fixture name is required (see --list)");
            };
            let layout = make_fixture(&name, scale)?;
            match out {
                Some(p) => io::write_layout(&p, &layout)?,
                None => emit(&serde_json::to_string_pretty(&layout)?)?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
