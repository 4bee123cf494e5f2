use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use roughavg::controlled::{compose_smooth, local_error_certificate, rough_integral_path, Certificate, ControlledPath, Sine};
use roughavg::experiment::{
    drift_handle, drift_probe_csv, probe_averaged_drift, run_convergence_study, Drivers, ExperimentConfig,
};
use roughavg::fastslow::{solve_averaged, solve_fastslow, averaging_distance};
use roughavg::fbm::sample_fbm;
use roughavg::io::{load_path_binary, save_path_binary, save_path_csv, PathMeta};
use roughavg::lift::{lift_piecewise_linear, tensor_norm};
use roughavg::rde::{solution_norm_report, NormReport, RdeProblem};
use roughavg::rng::RngSeed;
use roughavg::variation::{homogeneous_rough_norm, p_var_indices, RoughnessParams};
use roughavg::verify::run_suite;
use roughavg::{Error, GridPath, HurstIndex};

const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

const EXIT_USAGE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_CHECK: u8 = 4;

/// Rough-path numerics and averaging experiments for fast-slow systems.
#[derive(Debug, Parser)]
#[command(name = "roughavg", version)]
struct Cli {
    /// Experiment configuration (TOML); the built-in default otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides ROUGHAVG_OUT_DIR and the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fractional Brownian motion paths.
    #[command(subcommand)]
    Fbm(FbmCommand),
    /// Levy-area diagnostics of a path's piecewise-linear lift.
    Lift(InputArgs),
    /// The rough integral of sin(x) against a path, with local certificates.
    Integrate(InputArgs),
    /// Solve the averaged slow equation driven by a sampled path.
    SolveRde(SolveRdeArgs),
    /// The coupled fast-slow system.
    #[command(subcommand)]
    Fastslow(FastslowCommand),
    /// Averaged-drift estimates.
    #[command(subcommand)]
    AvgDrift(AvgDriftCommand),
    /// Convergence studies.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Run the invariant suite.
    Verify,
}

#[derive(Debug, Subcommand)]
enum FbmCommand {
    /// Sample one path and write it as binary and CSV.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Bin,
    Csv,
    Both,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Hurst index; the configured slow one by default.
    #[arg(long)]
    hurst: Option<f64>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1024)]
    steps: usize,
    #[arg(long, default_value_t = 1.0 / 1024.0)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = Format::Both)]
    format: Format,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Binary path file; a fresh sample from the configuration otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveRdeArgs {
    /// Trial sewing constant for the a-priori bounds.
    #[arg(long, default_value_t = 1.0)]
    c_p_hat: f64,
}

#[derive(Debug, Subcommand)]
enum FastslowCommand {
    /// Solve the coupled and averaged systems for one seed.
    Run(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scale separation; the smallest configured one by default.
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum AvgDriftCommand {
    /// Estimate the averaged drift at the configured probe points.
    Probe,
}

#[derive(Debug, Subcommand)]
enum StudyCommand {
    /// The eps-ladder convergence study.
    Converge(ConvergeArgs),
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    /// Fail (exit 4) unless the per-eps median sup distance strictly decreases.
    #[arg(long)]
    require_monotone: bool,
}

enum Failure {
    Config(String),
    Numerical(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        let mut cfg = match &cli.config {
            Some(file) => {
                let text = std::fs::read_to_string(file)
                    .map_err(|e| Failure::Config(format!("cannot read {}: {e}", file.display())))?;
                ExperimentConfig::from_toml(&text)?
            }
            None => ExperimentConfig::from_toml(DEFAULT_CONFIG)?,
        };
        if let Some(seed) = cli.seed {
            cfg.study.seed_base = seed;
            cfg.estimator.seed = seed;
        }
        let out = cli
            .out
            .clone()
            .or_else(|| std::env::var_os("ROUGHAVG_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        std::fs::create_dir_all(&out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
        Ok(Self { cfg, out })
    }

    fn write(&self, name: &str, text: &str) -> Outcome {
        let file = self.out.join(name);
        std::fs::write(&file, text).map_err(|e| Failure::Numerical(format!("writing {}: {e}", file.display())))
    }

    fn seed(&self) -> u64 {
        self.cfg.study.seed_base
    }

    fn params(&self) -> Result<RoughnessParams, Failure> {
        Ok(self.cfg.roughness()?)
    }

    /// The slow driver of the configured grid and seed.
    fn sampled_path(&self, input: Option<&Path>) -> Result<GridPath, Failure> {
        match input {
            Some(file) => Ok(load_path_binary(file)?.0),
            None => {
                let setup = self.cfg.setup()?;
                let dt = self.cfg.dt();
                Ok(sample_fbm(
                    setup.system.hurst(),
                    setup.system.d1(),
                    0.0,
                    dt,
                    self.cfg.n_steps(),
                    RngSeed::new(self.seed()),
                )?)
            }
        }
    }
}

fn fbm_sample(ctx: &Context, args: &SampleArgs) -> Outcome {
    let setup = ctx.cfg.setup()?;
    let hurst = match args.hurst {
        Some(h) => HurstIndex::new(h)?,
        None => setup.system.hurst(),
    };
    let path = sample_fbm(hurst, args.dim, 0.0, args.dt, args.steps, RngSeed::new(ctx.seed()))?;
    let meta = PathMeta {
        hurst: Some(hurst.value()),
        seed: ctx.seed(),
    };
    if matches!(args.format, Format::Bin | Format::Both) {
        save_path_binary(&path, meta, ctx.out.join("fbm.bin"))?;
    }
    if matches!(args.format, Format::Csv | Format::Both) {
        save_path_csv(&path, ctx.out.join("fbm.csv"))?;
    }
    println!("sampled {} steps of H = {} FBM in {} dimension(s)", args.steps, hurst.value(), args.dim);
    Ok(())
}

/// Dyadic windows `[k n / 2^l, (k + 1) n / 2^l]` down to single steps or
/// level 6.
fn dyadic_windows(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut parts = 1;
    while parts <= n && parts <= 64 {
        for k in 0..parts {
            let (i, j) = (k * n / parts, (k + 1) * n / parts);
            if j > i {
                out.push((i, j));
            }
        }
        parts *= 2;
    }
    out
}

fn lift_cmd(ctx: &Context, args: &InputArgs) -> Outcome {
    let path = ctx.sampled_path(args.input.as_deref())?;
    let lift = lift_piecewise_linear(&path);
    let params = ctx.params()?;
    let n = path.n_steps();
    let mut csv = String::from("s,t,increment_norm,area_norm,chen_residual,geometric_residual\n");
    let mut worst: f64 = 0.0;
    for (i, j) in dyadic_windows(n) {
        let mid = (i + j) / 2;
        let chen = if mid > i && mid < j { lift.chen_residual(i, mid, j) } else { 0.0 };
        let geo = lift.geometric_residual(i, j);
        worst = worst.max(chen).max(geo);
        let _ = writeln!(
            csv,
            "{},{},{:e},{:e},{:e},{:e}",
            path.time(i),
            path.time(j),
            path.increment_norm(i, j),
            tensor_norm(&lift.area(i, j)),
            chen,
            geo
        );
    }
    ctx.write("lift.csv", &csv)?;
    let pvar = p_var_indices(&path, params.p, 0, n)?;
    let rough = homogeneous_rough_norm(&lift, &params, path.t0(), path.t_end())?;
    println!("p-variation {pvar:.6}, homogeneous rough norm {rough:.6}, largest residual {worst:.2e}");
    if worst > 1e-9 * (1.0 + path.sup_norm().powi(2)) {
        return Err(Failure::Check(format!("lift residual {worst:e}")));
    }
    Ok(())
}

fn integrate_cmd(ctx: &Context, args: &InputArgs) -> Outcome {
    let path = ctx.sampled_path(args.input.as_deref())?;
    let lift = lift_piecewise_linear(&path);
    let y = compose_smooth(&Sine(path.dim()), &ControlledPath::identity(&lift))?;
    let running = rough_integral_path(&y, &lift)?;
    save_path_csv(&running, ctx.out.join("integral.csv"))?;
    let params = ctx.params()?;
    let mut csv = format!("{}\n", Certificate::CSV_HEADER);
    let mut worst: f64 = 0.0;
    for (i, j) in dyadic_windows(path.n_steps()) {
        let c = local_error_certificate(&y, &lift, &params, path.time(i), path.time(j))?;
        if c.ratio.is_finite() {
            worst = worst.max(c.ratio);
        }
        csv += &c.to_csv();
        csv.push('\n');
    }
    ctx.write("certificate.csv", &csv)?;
    println!(
        "int sin(x) dx over [{}, {}] = {:.8}, largest certificate ratio {worst:.3}",
        path.t0(),
        path.t_end(),
        running.node(running.n_steps())[0]
    );
    Ok(())
}

fn solve_rde_cmd(ctx: &Context, args: &SolveRdeArgs) -> Outcome {
    let setup = ctx.cfg.setup()?;
    let fbar = drift_handle(&ctx.cfg, &setup)?;
    let omega1 = lift_piecewise_linear(&ctx.sampled_path(None)?);
    let problem = RdeProblem::new(Arc::new(fbar.clone()), setup.system.h().clone(), setup.x0.clone(), ctx.params()?)
        .with_scheme(ctx.cfg.study.scheme);
    let sol = solve_averaged(&setup.system, &fbar, &setup.x0, &omega1, ctx.cfg.study.scheme)?;
    save_path_csv(&sol.path, ctx.out.join("rde_path.csv"))?;
    let report = solution_norm_report(&sol, &problem, &omega1, args.c_p_hat)?;
    ctx.write("rde_norms.csv", &format!("{}\n{}\n", NormReport::CSV_HEADER, report.to_csv()))?;
    println!(
        "sup {:.6}, p-variation {:.6}, remainder q-variation {:.6}, within bounds: {}",
        report.sup,
        report.pvar,
        report.rem_qvar,
        report.within_bounds()
    );
    Ok(())
}

fn fastslow_run(ctx: &Context, args: &RunArgs) -> Outcome {
    let cfg = &ctx.cfg;
    let eps = args.eps.unwrap_or(cfg.study.eps[cfg.study.eps.len() - 1]);
    if !cfg.study.eps.contains(&eps) {
        return Err(Failure::Config(format!("eps = {eps} is not on the configured ladder {:?}", cfg.study.eps)));
    }
    let setup = cfg.setup()?;
    let drivers = Drivers::sample(cfg, &setup.system, ctx.seed())?;
    let fbar = drift_handle(cfg, &setup)?;
    let x_bar = solve_averaged(&setup.system, &fbar, &setup.x0, &drivers.omega1, cfg.study.scheme)?;
    let system = setup.system.with_eps(eps)?;
    let w2 = drivers.fast_driver(eps)?;
    let out = solve_fastslow(
        &system,
        &setup.x0,
        &setup.y0,
        &drivers.omega1,
        &w2,
        cfg.grid.fast_resolution,
        cfg.study.scheme,
    )?;
    let joint = GridPath::concat(&[&out.x.path, &out.y, &x_bar.path])?;
    save_path_csv(&joint, ctx.out.join("fastslow.csv"))?;
    let d = averaging_distance(&out.x, &x_bar, &drivers.omega1, &cfg.roughness()?)?;
    ctx.write(
        "fastslow_distance.csv",
        &format!("seed,eps,sup_dist,pvar_dist,rem_dist\n{},{},{},{},{}\n", ctx.seed(), eps, d.sup, d.pvar, d.rem),
    )?;
    println!("eps = {eps}: sup {:.6}, p-variation {:.6}, remainder {:.6}", d.sup, d.pvar, d.rem);
    Ok(())
}

fn avg_drift_probe(ctx: &Context) -> Outcome {
    let (xs, est) = probe_averaged_drift(&ctx.cfg)?;
    let csv = drift_probe_csv(&xs, &est);
    ctx.write("drift_probes.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn study_converge(ctx: &Context, args: &ConvergeArgs) -> Outcome {
    let res = run_convergence_study(&ctx.cfg)?;
    res.write(&ctx.out)?;
    print!("{}", res.summary_csv());
    let failures = res.failures();
    if failures > 0 {
        return Err(Failure::Numerical(format!("{failures} of {} cells failed", res.rows.len())));
    }
    if args.require_monotone {
        let sup = res.medians_by_eps(|c| c.distance.sup);
        if !sup.windows(2).all(|w| w[1] < w[0]) {
            return Err(Failure::Check(format!("median sup distances {sup:?} are not decreasing")));
        }
    }
    Ok(())
}

fn verify(ctx: &Context) -> Outcome {
    let checks = run_suite(&ctx.cfg);
    let mut csv = String::from("check,pass,detail\n");
    for c in &checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        csv += &c.to_csv();
        csv.push('\n');
    }
    ctx.write("verify.csv", &csv)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Fbm(FbmCommand::Sample(a)) => fbm_sample(&ctx, a),
        Command::Lift(a) => lift_cmd(&ctx, a),
        Command::Integrate(a) => integrate_cmd(&ctx, a),
        Command::SolveRde(a) => solve_rde_cmd(&ctx, a),
        Command::Fastslow(FastslowCommand::Run(a)) => fastslow_run(&ctx, a),
        Command::AvgDrift(AvgDriftCommand::Probe) => avg_drift_probe(&ctx),
        Command::Study(StudyCommand::Converge(a)) => study_converge(&ctx, a),
        Command::Verify => verify(&ctx),
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Some(v) = std::env::var_os("ROUGHAVG_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .to_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Failure::Config(format!("ROUGHAVG_THREADS = {v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(EXIT_CHECK)
        }
    }
}
