//! Command-line front end for the two-stage surrogate pipeline.
//!
//! The subcommands mirror the pipeline stages: `generate-data` samples the
//! parameter space and solves a benchmark, `offline` fits the per-instance
//! kernel surrogates, `online` trains the parameter-to-state network for one
//! query time, and `predict` / `evaluate` / `sweep` consume the result.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use plando::pipeline::config::{parse_kernel, Benchmark, ExperimentConfig};
use plando::pipeline::dataio;
use plando::pipeline::persist;
use plando::pipeline::{self, OfflineBundle, OnlineModel, PodConfig};
use plando::MlpConfig;

#[derive(Parser)]
#[command(
    name = "plando",
    version,
    about = "Parametric surrogate models of dynamical systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the parameter space and solve a benchmark system
    GenerateData(GenerateArgs),
    /// Fit one kernel surrogate per training parameter instance
    Offline(OfflineArgs),
    /// Train the parameter-to-state network for one query time
    Online(OnlineArgs),
    /// Predict the state for a parameter value
    Predict(PredictArgs),
    /// Compare predictions against stored reference states
    Evaluate(EvaluateArgs),
    /// Repeat online training and evaluation over several query times
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Benchmark system: lv, lv2, heat, or allen-cahn
    #[arg(long)]
    system: String,
    /// JSON experiment config; defaults to the system's standard setup
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory to create
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OfflineArgs {
    /// Dataset directory from generate-data
    #[arg(long)]
    data: PathBuf,
    /// Kernel: linear, quadratic, poly:<degree>:<offset>, or
    /// gauss:<lengthscale>; defaults to the dataset config
    #[arg(long)]
    kernel: Option<String>,
    /// Dictionary sparsity threshold; defaults to the dataset config
    #[arg(long)]
    nu: Option<f64>,
    /// Base seed; defaults to the dataset config
    #[arg(long)]
    seed: Option<u64>,
    /// Bundle file to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OnlineArgs {
    /// Bundle file from the offline stage
    #[arg(long)]
    bundle: PathBuf,
    /// Query time to train the network for
    #[arg(long)]
    t_star: f64,
    #[command(flatten)]
    build: OnlineBuildArgs,
    /// Model file to write
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by `online` and `sweep`.
#[derive(Args)]
struct OnlineBuildArgs {
    /// Initial state: a CSV file or inline comma-separated values
    #[arg(long)]
    x0: String,
    /// POD energy threshold in (0, 1]; omit to train on full states
    #[arg(long)]
    pod_threshold: Option<f64>,
    /// Force an exact number of POD modes
    #[arg(long)]
    pod_rank: Option<usize>,
    /// Network preset: lv (3 snake layers of 32) or pde (4 tanh layers of 110)
    #[arg(long)]
    mlp_preset: String,
    /// Seed for network initialization and batch shuffling
    #[arg(long, default_value_t = 0)]
    mlp_seed: u64,
    /// Integration step for continuous bundles; defaults to the snapshot
    /// spacing
    #[arg(long)]
    step: Option<f64>,
    /// Experiment config whose mlp section overrides trainer settings
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model file from the online stage
    #[arg(long)]
    model: PathBuf,
    /// Parameter values, comma-separated
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    mu: Vec<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Model file from the online stage
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory holding the test trajectories
    #[arg(long)]
    test: PathBuf,
    /// Report file to write; a per-instance CSV lands next to it
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Bundle file from the offline stage
    #[arg(long)]
    bundle: PathBuf,
    /// Query times, comma-separated
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    t_stars: Vec<f64>,
    #[command(flatten)]
    build: OnlineBuildArgs,
    /// Dataset directory holding the test trajectories
    #[arg(long)]
    test: PathBuf,
    /// Directory for sweep.csv and the per-time reports
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData(args) => generate_data(args),
        Command::Offline(args) => offline(args),
        Command::Online(args) => online(args),
        Command::Predict(args) => predict(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Sweep(args) => sweep(args),
    }
}

fn generate_data(args: GenerateArgs) -> Result<()> {
    let benchmark = Benchmark::parse(&args.system)?;
    let cfg = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            if cfg.system != benchmark.name() {
                bail!(
                    "config is for system '{}' but --system says '{}'",
                    cfg.system,
                    args.system
                );
            }
            cfg
        }
        None => benchmark.default_config(),
    };
    let manifest = dataio::generate_dataset(&cfg, &args.out)
        .with_context(|| format!("generating dataset in {}", args.out.display()))?;
    println!(
        "wrote {} train / {} valid / {} test instances of '{}' (state dim {}) to {}",
        manifest.train.len(),
        manifest.valid.len(),
        manifest.test.len(),
        cfg.system,
        manifest.state_dim,
        args.out.display()
    );
    Ok(())
}

fn offline(args: OfflineArgs) -> Result<()> {
    let manifest = dataio::load_manifest(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))?;
    let kernel_str = args.kernel.unwrap_or_else(|| manifest.config.kernel.clone());
    let kernel = parse_kernel::<f64>(&kernel_str)?;
    let nu = args.nu.unwrap_or(manifest.config.nu);
    let seed = args.seed.unwrap_or(manifest.config.seed);

    let train = dataio::load_dataset::<f64>(&args.data, dataio::Role::Train)?;
    let bundle = pipeline::offline(&train, kernel, nu, seed).context("offline fitting failed")?;
    report_bundle("train", &bundle);

    let valid_data = dataio::load_dataset::<f64>(&args.data, dataio::Role::Valid)?;
    let valid = if valid_data.is_empty() {
        None
    } else {
        let vb = pipeline::offline(&valid_data, kernel, nu, seed.wrapping_add(1))
            .context("offline fitting of the validation instances failed")?;
        report_bundle("valid", &vb);
        Some(vb)
    };

    persist::save_bundles(&args.out, &bundle, valid.as_ref())?;
    println!("wrote bundle to {}", args.out.display());
    Ok(())
}

fn report_bundle(name: &str, bundle: &OfflineBundle<f64>) {
    let sizes: Vec<usize> = bundle
        .instances()
        .iter()
        .map(|(_, m)| m.dictionary().size())
        .collect();
    let residual_mean: f64 = bundle
        .instances()
        .iter()
        .map(|(_, m)| m.fit_residual())
        .sum::<f64>()
        / bundle.len() as f64;
    println!(
        "{name}: {} surrogates, dictionary sizes {}..{} (mean {:.1}), mean fit residual {:.3e}",
        bundle.len(),
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap(),
        sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
        residual_mean
    );
}

fn build_online(
    bundle_path: &Path,
    t_star: f64,
    build: &OnlineBuildArgs,
) -> Result<(OnlineModel<f64>, OfflineBundle<f64>, Option<OfflineBundle<f64>>)> {
    let (bundle, valid) = persist::load_bundles::<f64>(bundle_path)
        .with_context(|| format!("reading bundle {}", bundle_path.display()))?;
    let model = train_online(&bundle, valid.as_ref(), t_star, build)?;
    Ok((model, bundle, valid))
}

fn train_online(
    bundle: &OfflineBundle<f64>,
    valid: Option<&OfflineBundle<f64>>,
    t_star: f64,
    build: &OnlineBuildArgs,
) -> Result<OnlineModel<f64>> {
    let x0 = parse_state(&build.x0)?;
    let step = build.step.unwrap_or_else(|| bundle.dt());
    let pod_cfg = match (build.pod_threshold, build.pod_rank) {
        (None, None) => None,
        (threshold, rank) => Some(PodConfig {
            energy_threshold: threshold.unwrap_or(0.9999),
            rank,
        }),
    };
    let mut mlp_cfg = match build.mlp_preset.as_str() {
        "lv" => MlpConfig::preset_lv(1, 1, build.mlp_seed),
        "pde" => MlpConfig::preset_pde(1, 1, build.mlp_seed),
        other => bail!("unknown mlp preset '{other}'; expected lv or pde"),
    };
    if let Some(path) = &build.config {
        let cfg = ExperimentConfig::load(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.mlp.apply(&mut mlp_cfg)?;
    }
    let model = pipeline::online(bundle, t_star, &x0, step, pod_cfg, mlp_cfg, valid)
        .context("online training failed")?;
    if let Some(basis) = model.pod() {
        println!(
            "t* = {t_star}: POD kept {} of {} modes (energy fraction {:.6})",
            basis.rank(),
            bundle.len().min(bundle.state_dim()),
            basis.energy_fraction()
        );
    }
    println!(
        "t* = {t_star}: best monitored loss {:.3e}{}",
        model.map().best_validation_loss(),
        if model.extrapolated() {
            " (beyond the training window)"
        } else {
            ""
        }
    );
    Ok(model)
}

fn online(args: OnlineArgs) -> Result<()> {
    let (model, _, _) = build_online(&args.bundle, args.t_star, &args.build)?;
    persist::save_online_model(&args.out, &model)?;
    println!("wrote model to {}", args.out.display());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = persist::load_online_model::<f64>(&args.model)
        .with_context(|| format!("reading model {}", args.model.display()))?;
    let mu = DVector::from_column_slice(&args.mu);
    let state = model.predict(&mu)?;
    let line: Vec<String> = state.iter().map(|v| format!("{v}")).collect();
    println!("{}", line.join(","));
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = persist::load_online_model::<f64>(&args.model)
        .with_context(|| format!("reading model {}", args.model.display()))?;
    let refs = dataio::load_references::<f64>(&args.test, &[model.t_star()])
        .with_context(|| format!("reading references from {}", args.test.display()))?;
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = refs
        .into_iter()
        .map(|r| (r.mu, r.states.into_iter().next().expect("one time requested")))
        .collect();
    let report = model.evaluate(&pairs)?;
    persist::save_report(&args.report, &report)?;
    write_instance_csv(&args.report.with_extension("csv"), &report)?;
    print_report(&report);
    println!(
        "wrote report to {} (per-instance CSV beside it)",
        args.report.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let (bundle, valid) = persist::load_bundles::<f64>(&args.bundle)
        .with_context(|| format!("reading bundle {}", args.bundle.display()))?;
    let refs = dataio::load_references::<f64>(&args.test, &args.t_stars)
        .with_context(|| format!("reading references from {}", args.test.display()))?;
    fs::create_dir_all(&args.out)?;

    let mut rows = String::from("t_star,mean,std,extrapolated\n");
    for (k, &t_star) in args.t_stars.iter().enumerate() {
        let model = train_online(&bundle, valid.as_ref(), t_star, &args.build)?;
        let pairs: Vec<(DVector<f64>, DVector<f64>)> = refs
            .iter()
            .map(|r| (r.mu.clone(), r.states[k].clone()))
            .collect();
        let report = model.evaluate(&pairs)?;
        print_report(&report);
        let report_path = args.out.join(format!("report_t{t_star}.json"));
        persist::save_report(&report_path, &report)?;
        write_instance_csv(&report_path.with_extension("csv"), &report)?;
        rows.push_str(&format!(
            "{t_star},{},{},{}\n",
            report.mean, report.std, report.extrapolated
        ));
    }
    let sweep_path = args.out.join("sweep.csv");
    fs::write(&sweep_path, rows)?;
    println!("wrote {}", sweep_path.display());
    Ok(())
}

fn print_report(report: &plando::ErrorReport<f64>) {
    println!(
        "t* = {}: mean relative error {:.4e}, std {:.4e} over {} instances{}",
        report.t_star,
        report.mean,
        report.std,
        report.count(),
        if report.extrapolated {
            " (beyond the training window)"
        } else {
            ""
        }
    );
}

fn write_instance_csv(path: &Path, report: &plando::ErrorReport<f64>) -> Result<()> {
    let dim = report.errors.first().map_or(0, |(mu, _)| mu.nrows());
    let mut out = String::new();
    for d in 0..dim {
        out.push_str(&format!("mu_{},", d + 1));
    }
    out.push_str("error\n");
    for (mu, e) in &report.errors {
        for v in mu.iter() {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a state vector from a CSV file, or parses inline comma- or
/// whitespace-separated values.
fn parse_state(spec: &str) -> Result<DVector<f64>> {
    let text = if Path::new(spec).exists() {
        fs::read_to_string(spec).with_context(|| format!("reading {spec}"))?
    } else {
        spec.to_string()
    };
    let values: Vec<f64> = text
        .split([',', ' ', '\n', '\t'])
        .map(str::trim)
        .filter(|f| !f.is_empty())
        .map(|f| {
            f.parse::<f64>()
                .with_context(|| format!("cannot parse state entry '{f}'"))
        })
        .collect::<Result<_>>()?;
    if values.is_empty() {
        bail!("initial state '{spec}' holds no values");
    }
    Ok(DVector::from_column_slice(&values))
}
