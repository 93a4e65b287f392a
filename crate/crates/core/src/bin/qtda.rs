use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};

use qtda::chebyshev::{EstimatorParams, MomentMode, ProjectionMode, TraceMode};
use qtda::complex::{InputFormat, Metric};
use qtda::pipeline::{self, EpsilonSpec, Orders, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Exact projectors, random Hadamard probes.
    Exact,
    /// Projectors emulated by seeded mid-circuit measurement.
    Sampled,
    /// Exact projectors, every Hadamard column once.
    AllColumns,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Moments {
    Exact,
    Trotter,
}

/// Estimate normalized Betti numbers of Vietoris–Rips complexes across scales.
#[derive(Debug, Parser)]
#[command(name = "qtda", version)]
struct Cli {
    /// Point cloud (or distance matrix with --metric precomputed).
    #[arg(long)]
    input: PathBuf,
    /// Input format: csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// euclidean, manhattan or precomputed.
    #[arg(long, default_value = "euclidean")]
    metric: String,
    /// Scales as 'a,b,c' or 'start:stop:steps'.
    #[arg(long)]
    epsilon: String,
    /// Orders as 'all' or a comma list.
    #[arg(long, default_value = "all")]
    orders: String,
    /// Spectral threshold override in (0, 1); measured when omitted.
    #[arg(long)]
    delta: Option<f64>,
    /// Target accuracy of the normalized Betti number.
    #[arg(long, default_value_t = 0.2)]
    eps_tol: f64,
    /// Failure probability.
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Chebyshev degree override.
    #[arg(long)]
    degree: Option<usize>,
    /// Probe count override.
    #[arg(long)]
    probes: Option<usize>,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    /// How power moments are obtained.
    #[arg(long, value_enum, default_value = "exact")]
    moments: Moments,
    /// Trotter step for --moments trotter.
    #[arg(long, default_value_t = 1e-3)]
    trotter_t: f64,
    /// Also compute exact Betti numbers.
    #[arg(long)]
    oracle: bool,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "qtda-out")]
    out: PathBuf,
    /// Keep per-probe moment tables in reports.
    #[arg(long)]
    keep_moments: bool,
}

fn config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let (trace_mode, projection) = match cli.mode {
        Mode::Exact => (TraceMode::Sampled, ProjectionMode::Exact),
        Mode::Sampled => (TraceMode::Sampled, ProjectionMode::Sampled),
        Mode::AllColumns => (TraceMode::AllColumns, ProjectionMode::Exact),
    };
    let params = EstimatorParams {
        epsilon: cli.eps_tol,
        eta: cli.eta,
        delta: cli.delta,
        m: cli.degree,
        n_v: cli.probes,
        moment_mode: match cli.moments {
            Moments::Exact => MomentMode::Exact,
            Moments::Trotter => MomentMode::Trotter,
        },
        trace_mode,
        projection,
        trotter_t: cli.trotter_t,
        ..EstimatorParams::default()
    };
    let config = RunConfig {
        input: cli.input.clone(),
        format: cli.format.parse::<InputFormat>()?,
        metric: cli.metric.parse::<Metric>()?,
        epsilon: cli.epsilon.parse::<EpsilonSpec>()?,
        orders: cli.orders.parse::<Orders>()?,
        params,
        seed: cli.seed,
        oracle: cli.oracle,
        out: cli.out.clone(),
        keep_moments: cli.keep_moments,
    };
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let prepared = config(&cli).and_then(|c| {
        let d = pipeline::load_distances(&c)
            .with_context(|| format!("reading {}", c.input.display()))?;
        if let Some(w) = pipeline::workers_from_env()? {
            rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build_global()?;
        }
        Ok((c, d))
    });
    let (config, d) = match prepared {
        Ok(v) => v,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let out = match pipeline::run_distances(&d, &config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("configuration error: {e:#}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = pipeline::write_outputs(&out, &config.out) {
        eprintln!("error writing outputs: {e:#}");
        return ExitCode::from(1);
    }
    let s = &out.summary;
    eprintln!(
        "{} cells over {} scales, {} failures, {} abne; outputs in {}",
        s.cells,
        s.epsilons.len(),
        s.failures,
        s.abne_cells,
        config.out.display()
    );
    if out.has_failures() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
