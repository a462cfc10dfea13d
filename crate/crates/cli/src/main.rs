use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use ebm_core::environment::{
    generate_hierarchical_env, generate_sparse_env, ArrivalMode, ContextDistribution, EnvTruth,
};
use ebm_core::experiment::{build_report, run_sweep, GridAxis, PointStatus};
use ebm_core::harness::{execute_run, stream_rng, streams, RunConfig};
use ebm_core::linalg::min_eigenvalue;
use ebm_core::policies::PolicyKind;
use ebm_core::EbmError;

/// Simulate empirical-Bayes multi-bandits.
#[derive(Debug, Parser)]
#[command(name = "ebm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EnvMode {
    Hierarchical,
    DataPoor,
    Sparse,
}

#[derive(Debug, clap::Args)]
struct GenEnvArgs {
    #[arg(long, value_enum, default_value = "hierarchical")]
    mode: EnvMode,
    #[arg(long, default_value_t = 10)]
    n_instances: usize,
    #[arg(long, default_value_t = 5)]
    n_arms: usize,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `mixture_gaussian` or `uniform`.
    #[arg(long, default_value = "mixture_gaussian")]
    context: String,
    /// Nonzero deviations per instance (sparse mode).
    #[arg(long, default_value_t = 1)]
    support: usize,
    /// Scale of the sparse deviations.
    #[arg(long, default_value_t = 1.0)]
    delta_scale: f64,
    #[arg(long, default_value = "env.json")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a ground-truth environment file.
    GenEnv(GenEnvArgs),
    /// Run all seeds of one configuration.
    Run {
        /// JSON run configuration; the balanced synthetic setting when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PolicyKind>,
        /// Replace the seed list (repeatable).
        #[arg(long)]
        seeds: Vec<u64>,
        /// Dotted `key=value` override (repeatable), applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configuration over a grid of overrides.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=v1,v2,...` (repeatable); axes combine as a cartesian product.
        #[arg(long, required = true)]
        grid: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Tabulate final regret of run or sweep directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Directory for report.csv and report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

/// Parameter and document errors are the caller's fault; the rest are runtime.
fn classify(e: EbmError) -> Failure {
    match e {
        EbmError::InvalidParameter(_)
        | EbmError::InvalidDocument { .. }
        | EbmError::Json(_)
        | EbmError::DimensionMismatch { .. }
        | EbmError::InsufficientInstances { .. } => usage(e),
        _ => runtime(e),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => RunConfig::load(p).map_err(classify),
        None => Ok(RunConfig::synthetic(PolicyKind::EbmUcb, ArrivalMode::Balanced)),
    }
}

fn gen_env(args: GenEnvArgs) -> Result<(), Failure> {
    let GenEnvArgs {
        mode,
        n_instances,
        n_arms,
        dim,
        seed,
        context,
        support,
        delta_scale,
        out,
    } = args;
    let context = ContextDistribution::preset(&context).ok_or_else(|| usage(anyhow!("unknown context `{context}`")))?;
    let mut rng = stream_rng(seed, streams::ENVIRONMENT);
    let env = match mode {
        EnvMode::Hierarchical | EnvMode::DataPoor => {
            let arrival = match mode {
                EnvMode::DataPoor => ArrivalMode::DataPoor,
                _ => ArrivalMode::Balanced,
            };
            generate_hierarchical_env(n_instances, n_arms, dim, arrival, context, &mut rng)
        }
        EnvMode::Sparse => generate_sparse_env(
            n_instances,
            n_arms,
            dim,
            support,
            delta_scale,
            ArrivalMode::Balanced,
            context,
            &mut rng,
        ),
    }
    .map_err(classify)?;
    env.write(&out).map_err(classify)?;
    print_env_summary(&env, &out);
    Ok(())
}

fn print_env_summary(env: &EnvTruth, out: &Path) {
    println!(
        "wrote {} (N={}, K={}, d={})",
        out.display(),
        env.n_instances,
        env.n_arms,
        env.dim
    );
    for (k, s) in env.sigma_prior.iter().enumerate() {
        println!("arm {k}: lambda_min(Sigma) = {:.6}", min_eigenvalue(s));
    }
    let arrival: Vec<String> = env.arrival.iter().map(|p| format!("{p:.6}")).collect();
    println!("arrival = [{}]", arrival.join(", "));
}

fn run(
    config: Option<&Path>,
    policy: Option<PolicyKind>,
    seeds: &[u64],
    overrides: &[String],
    out: Option<&Path>,
) -> Result<(), Failure> {
    let base = load_config(config)?;
    let mut all = Vec::new();
    if let Some(kind) = policy {
        all.push(format!("policy.kind={}", kind.label()));
    }
    if !seeds.is_empty() {
        all.push(format!("seeds={}", serde_json::to_string(seeds).map_err(usage)?));
    }
    all.extend(overrides.iter().cloned());
    let config = base.with_overrides(&all).map_err(classify)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(config.policy.kind.label()));
    let agg = execute_run(&config, &dir)
        .map_err(|e| runtime(anyhow!(e).context(format!("run failed; partial output in {}", dir.display()))))?;
    let finals = agg.final_regrets();
    let (mean, sd) = ebm_core::harness::trace::mean_sd(&finals);
    println!(
        "{}: {} seeds, final cumulative regret {:.4} ± {:.4} -> {}",
        config.policy.kind,
        finals.len(),
        mean,
        sd,
        dir.display()
    );
    Ok(())
}

fn sweep(config: Option<&Path>, grid: &[String], overrides: &[String], out: &Path, jobs: usize) -> Result<(), Failure> {
    let base = load_config(config)?.with_overrides(overrides).map_err(classify)?;
    let axes = grid
        .iter()
        .map(|g| GridAxis::parse(g))
        .collect::<Result<Vec<_>, _>>()
        .map_err(classify)?;
    let manifest = run_sweep(&base, &axes, out, jobs).map_err(classify)?;
    let failed = manifest
        .points
        .iter()
        .filter(|p| p.status == PointStatus::Failed)
        .count();
    for p in &manifest.points {
        let status = match p.status {
            PointStatus::Ok => "ok",
            PointStatus::Failed => "FAILED",
        };
        println!("{} [{}] {}", p.dir.display(), p.overrides.join(" "), status);
    }
    if failed > 0 {
        return Err(runtime(anyhow!(
            "{failed} of {} grid points failed; see {}",
            manifest.points.len(),
            out.join(ebm_core::experiment::MANIFEST_FILE).display()
        )));
    }
    Ok(())
}

fn report(dirs: &[PathBuf], out: Option<&Path>) -> Result<(), Failure> {
    let report = build_report(dirs);
    let text = report.to_text();
    print!("{text}");
    if let Some(out) = out {
        fs::create_dir_all(out)
            .with_context(|| format!("creating {}", out.display()))
            .map_err(runtime)?;
        fs::write(out.join("report.csv"), report.to_csv())
            .context("writing report.csv")
            .map_err(runtime)?;
        fs::write(out.join("report.txt"), &text)
            .context("writing report.txt")
            .map_err(runtime)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenEnv(args) => gen_env(args),
        Command::Run {
            config,
            policy,
            seeds,
            overrides,
            out,
        } => run(config.as_deref(), policy, &seeds, &overrides, out.as_deref()),
        Command::Sweep {
            config,
            grid,
            overrides,
            out,
            jobs,
        } => sweep(config.as_deref(), &grid, &overrides, &out, jobs),
        Command::Report { dirs, out } => report(&dirs, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
