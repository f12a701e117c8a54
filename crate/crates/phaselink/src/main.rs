//! Command-line interface: synthesize stacks, run the linking chain, emit
//! the naive baseline, benchmark chain configurations, and map plug-in
//! closure residuals.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::PathBuf;
use std::time::Instant;

use phaselink::error::{Error, Result};
use phaselink::estimators::{EstimatorConfig, EstimatorKind};
use phaselink::mc::{format_table, run_bench, BenchConfig, ChainSpec};
use phaselink::mm::MmConfig;
use phaselink::objectives::ObjectiveKind;
use phaselink::pipeline::{
    closure_map, naive_interferogram, run, BorderPolicy, RunConfig, SolverChoice,
};
use phaselink::regularizers::{RegularizerSpec, RegularizerStep};
use phaselink::riemann::{RiemannConfig, RiemannMethod};
use phaselink::stack::{
    write_mask_png, write_phase_png, write_real_image, write_real_stack, ImageStack,
};
use phaselink::synth::{render_stack, PhaseField, SceneModel, Texture};

#[derive(Parser)]
#[command(
    name = "phaselink",
    version,
    about = "Interferometric phase linking over complex image stacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stack with known ground-truth phases.
    Synth(SynthArgs),
    /// Run the estimator -> regularizer -> objective -> solver chain.
    Run(RunArgs),
    /// Emit the naive per-pair baseline interferogram.
    Naive(NaiveArgs),
    /// Monte-Carlo RMSE table over chain configurations.
    Bench(BenchArgs),
    /// Map the phase-closure residual of a plug-in over the stack.
    Closure(ClosureArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Scm,
    Tyler,
    SampleCorrelation,
    PhaseOnly,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(v: EstimatorArg) -> Self {
        match v {
            EstimatorArg::Scm => EstimatorKind::Scm,
            EstimatorArg::Tyler => EstimatorKind::Tyler,
            EstimatorArg::SampleCorrelation => EstimatorKind::SampleCorrelation,
            EstimatorArg::PhaseOnly => EstimatorKind::PhaseOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectiveArg {
    Kl,
    Ls,
    Wls,
}

impl From<ObjectiveArg> for ObjectiveKind {
    fn from(v: ObjectiveArg) -> Self {
        match v {
            ObjectiveArg::Kl => ObjectiveKind::Kl,
            ObjectiveArg::Ls => ObjectiveKind::Ls,
            ObjectiveArg::Wls => ObjectiveKind::Wls,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SolverArg {
    Mm,
    RiemannGd,
    RiemannCg,
    Emi,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BorderArg {
    Skip,
    Shrink,
}

impl From<BorderArg> for BorderPolicy {
    fn from(v: BorderArg) -> Self {
        match v {
            BorderArg::Skip => BorderPolicy::Skip,
            BorderArg::Shrink => BorderPolicy::Shrink,
        }
    }
}

/// Regularizer flags shared by several subcommands. Steps compose in the
/// order taper, shrinkage, low-rank.
#[derive(Args, Clone, Debug, Default)]
struct RegularizerArgs {
    /// Tapering bandwidth b (zero entries beyond |q - l| > b).
    #[arg(long)]
    taper: Option<usize>,
    /// Shrinkage coefficient beta in [0, 1].
    #[arg(long)]
    shrink: Option<f64>,
    /// Rank for the rank-k-plus-identity projection.
    #[arg(long)]
    lowrank: Option<usize>,
}

impl RegularizerArgs {
    fn given(&self) -> bool {
        self.taper.is_some() || self.shrink.is_some() || self.lowrank.is_some()
    }

    fn to_spec(&self) -> RegularizerSpec {
        let mut steps = Vec::new();
        if let Some(b) = self.taper {
            steps.push(RegularizerStep::Taper(b));
        }
        if let Some(beta) = self.shrink {
            steps.push(RegularizerStep::Shrinkage(beta));
        }
        if let Some(k) = self.lowrank {
            steps.push(RegularizerStep::LowRank(k));
        }
        RegularizerSpec { steps }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output stack path.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth referenced phase stack path.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 31)]
    p: usize,
    #[arg(long, default_value_t = 128)]
    rows: usize,
    #[arg(long, default_value_t = 128)]
    cols: usize,
    /// Exponential coherence decay per time lag.
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated per-date phases (flat field). Overrides --ramp.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    /// Amplitude (radians) of the spatial phase ramp at the far corner.
    #[arg(long, default_value_t = 3.0)]
    ramp: f64,
    /// Gamma texture shape (heavy tails); Gaussian when absent.
    #[arg(long)]
    gamma_shape: Option<f64>,
    /// Comma-separated per-date standard deviations (default all ones).
    #[arg(long, value_delimiter = ',')]
    sigma: Option<Vec<f64>>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML file mirroring the run configuration fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window_height: Option<usize>,
    #[arg(long)]
    window_width: Option<usize>,
    #[arg(long)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    tyler_tol: Option<f64>,
    #[arg(long)]
    tyler_max_iter: Option<usize>,
    #[command(flatten)]
    regularizer: RegularizerArgs,
    #[arg(long)]
    objective: Option<ObjectiveArg>,
    #[arg(long)]
    solver: Option<SolverArg>,
    #[arg(long)]
    mm_tol: Option<f64>,
    #[arg(long)]
    mm_max_iter: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    riemann_max_iter: Option<usize>,
    #[arg(long)]
    border: Option<BorderArg>,
    /// Output pairs, e.g. "0-30,0-15".
    #[arg(long)]
    pairs: Option<String>,
}

#[derive(Args)]
struct NaiveArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// PNG render path.
    #[arg(long)]
    png: Option<PathBuf>,
    #[arg(long)]
    q: usize,
    #[arg(long)]
    l: usize,
    #[arg(long, default_value_t = 8)]
    window_height: usize,
    #[arg(long, default_value_t = 8)]
    window_width: usize,
    #[arg(long, value_enum, default_value_t = BorderArg::Skip)]
    border: BorderArg,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 0.9)]
    rho: f64,
    /// Comma-separated patch sizes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 80, 320])]
    n: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    gamma_shape: Option<f64>,
    /// Estimators to compare.
    #[arg(long, value_delimiter = ',', value_enum, default_values_t = vec![EstimatorArg::Scm])]
    estimators: Vec<EstimatorArg>,
    /// Objectives to compare.
    #[arg(long, value_delimiter = ',', value_enum, default_values_t = vec![ObjectiveArg::Kl])]
    objectives: Vec<ObjectiveArg>,
    #[arg(long, value_enum, default_value_t = SolverArg::Mm)]
    solver: SolverArg,
    #[command(flatten)]
    regularizer: RegularizerArgs,
}

#[derive(Args)]
struct ClosureArgs {
    #[arg(long)]
    stack: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    png: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    window_height: usize,
    #[arg(long, default_value_t = 8)]
    window_width: usize,
    #[arg(long, value_enum, default_value_t = BorderArg::Skip)]
    border: BorderArg,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Scm)]
    estimator: EstimatorArg,
    #[arg(long)]
    tyler_tol: Option<f64>,
    #[arg(long)]
    tyler_max_iter: Option<usize>,
    #[command(flatten)]
    regularizer: RegularizerArgs,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Run(args) => cmd_run(args),
        Command::Naive(args) => cmd_naive(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Closure(args) => cmd_closure(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let phase_field = match &args.theta {
        Some(theta) => PhaseField::Uniform(theta.clone()),
        None => PhaseField::LinearRamp { amplitude: args.ramp },
    };
    let texture = match args.gamma_shape {
        Some(shape) => Texture::Gamma { shape },
        None => Texture::None,
    };
    let model = SceneModel {
        p: args.p,
        coherence: phaselink::synth::Coherence::Exponential { rho: args.rho },
        sigmas: args.sigma.unwrap_or_else(|| vec![1.0; args.p]),
        phase_field,
        texture,
    };
    let scene = render_stack(&model, args.rows, args.cols, args.seed)?;
    scene.stack.write_to(&args.out)?;
    println!(
        "wrote stack p={} rows={} cols={} -> {}",
        args.p,
        args.rows,
        args.cols,
        args.out.display()
    );
    if let Some(truth) = &args.truth {
        write_real_stack(truth, &scene.truth)?;
        println!("wrote truth phases -> {}", truth.display());
    }
    Ok(())
}

fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for part in text.split(',').filter(|s| !s.is_empty()) {
        let (a, b) = part
            .split_once('-')
            .ok_or_else(|| Error::InvalidConfig(format!("bad pair '{part}', expected q-l")))?;
        let q = a
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("bad pair index '{a}'")))?;
        let l = b
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidConfig(format!("bad pair index '{b}'")))?;
        pairs.push((q, l));
    }
    Ok(pairs)
}

fn build_solver(
    choice: SolverArg,
    mm_tol: Option<f64>,
    mm_max_iter: Option<usize>,
    grad_tol: Option<f64>,
    riemann_max_iter: Option<usize>,
) -> SolverChoice {
    match choice {
        SolverArg::Mm => {
            let mut cfg = MmConfig::default();
            if let Some(t) = mm_tol {
                cfg.tol = t;
            }
            if let Some(i) = mm_max_iter {
                cfg.max_iter = i;
            }
            SolverChoice::Mm(cfg)
        }
        SolverArg::RiemannGd | SolverArg::RiemannCg => {
            let mut cfg = RiemannConfig {
                method: if matches!(choice, SolverArg::RiemannGd) {
                    RiemannMethod::Gd
                } else {
                    RiemannMethod::Cg
                },
                ..RiemannConfig::default()
            };
            if let Some(t) = grad_tol {
                cfg.grad_tol = t;
            }
            if let Some(i) = riemann_max_iter {
                cfg.max_iter = i;
            }
            SolverChoice::Riemann(cfg)
        }
        SolverArg::Emi => SolverChoice::Emi,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    stack: ManifestStack,
    wall_time_secs: f64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct ManifestStack {
    path: String,
    p: usize,
    rows: usize,
    cols: usize,
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let started = Instant::now();
    let stack = ImageStack::read_from(&args.stack)?;

    let mut cfg: RunConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(h) = args.window_height {
        cfg.window_height = h;
    }
    if let Some(w) = args.window_width {
        cfg.window_width = w;
    }
    if let Some(kind) = args.estimator {
        cfg.estimator.kind = kind.into();
    }
    if let Some(t) = args.tyler_tol {
        cfg.estimator.tyler_tol = t;
    }
    if let Some(i) = args.tyler_max_iter {
        cfg.estimator.tyler_max_iter = i;
    }
    if args.regularizer.given() {
        cfg.regularizer = args.regularizer.to_spec();
    }
    if let Some(o) = args.objective {
        cfg.objective = o.into();
    }
    if let Some(choice) = args.solver {
        cfg.solver = build_solver(
            choice,
            args.mm_tol,
            args.mm_max_iter,
            args.grad_tol,
            args.riemann_max_iter,
        );
    } else {
        match (&mut cfg.solver, args.mm_tol, args.mm_max_iter) {
            (SolverChoice::Mm(mm), tol, iters) => {
                if let Some(t) = tol {
                    mm.tol = t;
                }
                if let Some(i) = iters {
                    mm.max_iter = i;
                }
            }
            (SolverChoice::Riemann(r), _, _) => {
                if let Some(t) = args.grad_tol {
                    r.grad_tol = t;
                }
                if let Some(i) = args.riemann_max_iter {
                    r.max_iter = i;
                }
            }
            _ => {}
        }
    }
    if let Some(b) = args.border {
        cfg.border = b.into();
    }
    if let Some(pairs) = &args.pairs {
        cfg.pairs = parse_pairs(pairs)?;
    }

    let set = run(&stack, &cfg)?;
    set.write_to_dir(&args.out_dir)?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        stack: ManifestStack {
            path: args.stack.display().to_string(),
            p: stack.p(),
            rows: stack.rows(),
            cols: stack.cols(),
        },
        wall_time_secs: started.elapsed().as_secs_f64(),
        config: &cfg,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidConfig(format!("manifest serialization: {e}")))?;
    std::fs::write(args.out_dir.join("manifest.toml"), text)?;

    let fallbacks = set
        .flags
        .iter()
        .filter(|&&f| f & phaselink::pipeline::flag::FALLBACK_NAIVE != 0)
        .count();
    println!(
        "processed {} pairs over {}x{} ({} naive fallbacks) -> {}",
        set.pair_indices.len(),
        set.rows,
        set.cols,
        fallbacks,
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_naive(args: NaiveArgs) -> Result<()> {
    let stack = ImageStack::read_from(&args.stack)?;
    let (image, flags) = naive_interferogram(
        &stack,
        args.q,
        args.l,
        (args.window_height, args.window_width),
        args.border.into(),
    )?;
    write_real_image(&args.out, &image)?;
    if let Some(png) = &args.png {
        write_phase_png(png, &image)?;
    }
    let degenerate = flags.iter().filter(|&&f| f != 0).count();
    println!(
        "naive interferogram ({}, {}) -> {} ({degenerate} flagged pixels)",
        args.q,
        args.l,
        args.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let texture = match args.gamma_shape {
        Some(shape) => Texture::Gamma { shape },
        None => Texture::None,
    };
    let scene = SceneModel {
        texture,
        ..SceneModel::exponential(args.p, args.rho)?
    };
    let regularizer = args.regularizer.to_spec();
    let mut chains = Vec::new();
    for est in &args.estimators {
        for obj in &args.objectives {
            let solver = build_solver(args.solver, None, None, None, None);
            let objective: ObjectiveKind = (*obj).into();
            let kind: EstimatorKind = (*est).into();
            chains.push(ChainSpec {
                label: format!("{:?}-{}-{:?}", kind, objective.name(), args.solver)
                    .to_lowercase(),
                estimator: EstimatorConfig {
                    kind,
                    ..EstimatorConfig::default()
                },
                regularizer: regularizer.clone(),
                objective,
                solver,
            });
        }
    }
    let cfg = BenchConfig {
        scene,
        sample_counts: args.n.clone(),
        trials: args.trials,
        seed: args.seed,
    };
    let rows = run_bench(&cfg, &chains)?;
    print!("{}", format_table(&rows));
    Ok(())
}

fn cmd_closure(args: ClosureArgs) -> Result<()> {
    let stack = ImageStack::read_from(&args.stack)?;
    let mut estimator = EstimatorConfig {
        kind: args.estimator.into(),
        ..EstimatorConfig::default()
    };
    if let Some(t) = args.tyler_tol {
        estimator.tyler_tol = t;
    }
    if let Some(i) = args.tyler_max_iter {
        estimator.tyler_max_iter = i;
    }
    let (image, flags) = closure_map(
        &stack,
        (args.window_height, args.window_width),
        args.border.into(),
        &estimator,
        &args.regularizer.to_spec(),
    )?;
    write_real_image(&args.out, &image)?;
    if let Some(png) = &args.png {
        write_phase_png(png, &image)?;
        write_mask_png(png.with_extension("flags.png"), &flags)?;
    }
    let undefined = flags.iter().filter(|&&f| f != 0).count();
    println!(
        "closure residual map -> {} ({undefined} flagged pixels)",
        args.out.display()
    );
    Ok(())
}
