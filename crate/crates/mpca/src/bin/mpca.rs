//! Benchmark CLI for the momentum PCA solvers. Thin shell over
//! `mpca::bench`: every subcommand maps its flags onto the flat
//! `key=value` experiment configuration (flags win over `--config` files).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpca::bench::{compare_csv, compare_files, exit_code, run_experiment, ExperimentConfig};
use mpca::error::{MpcaError, Result};
use mpca::matrix::SymmetricMatrix;
use mpca::stoch::{estimate_noise, SampleOracle};
use mpca::synth::{generate_dataset, SpectrumSpec};
use mpca::variance::{covariance_table, RecurrenceModel, SimMode};

#[derive(Parser)]
#[command(name = "mpca", version, about = "Accelerated power iteration for PCA: benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with an exactly prescribed covariance
    /// spectrum and write it to the binary container (and optionally CSV).
    GenerateData {
        /// Comma-separated descending eigenvalues, e.g. "1,0.9,0.9".
        #[arg(long, conflicts_with = "gap")]
        spec: Option<String>,
        /// Shorthand DELTA:DIM for the gap spectrum (1, 1-DELTA, ...).
        #[arg(long)]
        gap: Option<String>,
        /// Number of rows.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path for the binary container.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV export path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run one solver and write its convergence trace.
    Run(RunArgs),
    /// Auto-tune the momentum parameter; prints one CSV row per round.
    Tune(RunArgs),
    /// Inhomogeneous-recurrence solver for a known tail measure.
    Inhomo(RunArgs),
    /// Covariance-bound table: series, closed form, and simulation.
    VarianceCheck {
        /// Dimension of the synthetic two-point model (1-3 for exhaustive).
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda1: f64,
        /// Second eigenvalue; the rest are spaced evenly below it.
        #[arg(long, default_value_t = 0.5)]
        lambda2: f64,
        #[arg(long, default_value_t = 0.2025)]
        beta: f64,
        /// Scale of the symmetric two-point perturbation.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Largest recurrence degree.
        #[arg(long, default_value_t = 8)]
        t_max: u32,
        /// Monte-Carlo replicates; 0 = exhaustive enumeration.
        #[arg(long, default_value_t = 0)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare traces: iterations/samples to thresholds 1e-2, 1e-4, 1e-6.
    Compare {
        /// Two or more trace CSV files.
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate sigma^2 and the norm bound of a dataset's row-sampling
    /// stream.
    EstimateNoise {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Shared flags of run-like subcommands; every flag mirrors a config key.
#[derive(Args)]
struct RunArgs {
    /// Flat key=value config file applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm: power, power-m, oja, oja-m, minibatch-m, vr-m, block,
    /// inhomo, tune (preset by the tune/inhomo subcommands).
    #[arg(long)]
    algorithm: Option<String>,
    /// Comma-separated descending eigenvalues of a synthetic problem.
    #[arg(long)]
    spec: Option<String>,
    /// Shorthand DELTA:DIM for the gap spectrum.
    #[arg(long)]
    gap: Option<String>,
    /// Dataset file (binary container).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Symmetric-matrix file (binary container).
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rows when generating a dataset from a spectrum.
    #[arg(long)]
    n: Option<usize>,
    /// Block size for block/tune.
    #[arg(long)]
    k: Option<usize>,
    /// Eigenvalue underestimate for inhomo.
    #[arg(long)]
    lambda1_est: Option<f64>,
    /// Additive-noise scale for matrix-backed stochastic runs.
    #[arg(long)]
    noise: Option<f64>,
    /// Tuner rounds.
    #[arg(long)]
    rounds: Option<usize>,
    /// Orthonormal family of the tail measure (inhomo only).
    #[arg(long)]
    measure: Option<String>,
}

impl RunArgs {
    fn into_config(self, forced_algorithm: Option<&str>) -> Result<ExperimentConfig> {
        if let Some(measure) = &self.measure {
            if measure != "legendre" {
                return Err(MpcaError::Config(format!(
                    "unsupported measure '{measure}' (only 'legendre' has a built-in basis)"
                )));
            }
        }
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let set = |cfg: &mut ExperimentConfig, key: &str, value: Option<String>| -> Result<()> {
            if let Some(v) = value {
                cfg.apply(key, &v)?;
            }
            Ok(())
        };
        // seed first so spectra constructed from spec/gap see it
        set(&mut cfg, "seed", self.seed.map(|v| v.to_string()))?;
        set(&mut cfg, "algorithm", self.algorithm)?;
        set(&mut cfg, "spec", self.spec)?;
        set(&mut cfg, "gap", self.gap)?;
        set(&mut cfg, "dataset", self.dataset.map(path_string))?;
        set(&mut cfg, "matrix", self.matrix.map(path_string))?;
        set(&mut cfg, "beta", self.beta.map(|v| v.to_string()))?;
        set(&mut cfg, "batch-size", self.batch_size.map(|v| v.to_string()))?;
        set(&mut cfg, "iters", self.iters.map(|v| v.to_string()))?;
        set(&mut cfg, "epochs", self.epochs.map(|v| v.to_string()))?;
        set(&mut cfg, "eta", self.eta.map(|v| v.to_string()))?;
        set(&mut cfg, "replicates", self.replicates.map(|v| v.to_string()))?;
        set(&mut cfg, "out", self.out.map(path_string))?;
        set(&mut cfg, "n", self.n.map(|v| v.to_string()))?;
        set(&mut cfg, "k", self.k.map(|v| v.to_string()))?;
        set(&mut cfg, "lambda1-est", self.lambda1_est.map(|v| v.to_string()))?;
        set(&mut cfg, "noise", self.noise.map(|v| v.to_string()))?;
        set(&mut cfg, "rounds", self.rounds.map(|v| v.to_string()))?;
        if let Some(name) = forced_algorithm {
            cfg.apply("algorithm", name)?;
        }
        Ok(cfg)
    }
}

fn path_string(p: PathBuf) -> String {
    p.display().to_string()
}

fn parse_spectrum(spec: Option<String>, gap: Option<String>, seed: u64) -> Result<SpectrumSpec> {
    match (spec, gap) {
        (Some(s), _) => {
            let values: std::result::Result<Vec<f64>, _> =
                s.split(',').map(|t| t.trim().parse::<f64>()).collect();
            SpectrumSpec::new(
                values.map_err(|_| MpcaError::Config(format!("bad spec '{s}'")))?,
                seed,
            )
        }
        (None, Some(g)) => {
            let (gap, dim) = g
                .split_once(':')
                .ok_or_else(|| MpcaError::Config("gap expects DELTA:DIM".into()))?;
            let gap: f64 = gap
                .trim()
                .parse()
                .map_err(|_| MpcaError::Config(format!("bad gap '{g}'")))?;
            let dim: usize = dim
                .trim()
                .parse()
                .map_err(|_| MpcaError::Config(format!("bad gap dim '{g}'")))?;
            SpectrumSpec::with_gap(dim, gap, seed)
        }
        (None, None) => Err(MpcaError::Config(
            "set either --spec or --gap for the problem spectrum".into(),
        )),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData {
            spec,
            gap,
            n,
            seed,
            out,
            csv,
        } => {
            let spectrum = parse_spectrum(spec, gap, seed)?;
            let data = generate_dataset(&spectrum, n)?;
            data.write_binary(&out)?;
            if let Some(csv_path) = csv {
                data.write_csv(&csv_path)?;
            }
            println!(
                "wrote {} x {} dataset to {} (seed {seed})",
                data.n(),
                data.dim(),
                out.display()
            );
        }
        Command::Run(args) => {
            let cfg = args.into_config(None)?;
            let summary = run_experiment(&cfg)?;
            println!("{}", summary.line());
        }
        Command::Tune(args) => {
            let cfg = args.into_config(Some("tune"))?;
            let out = cfg.out.clone();
            let summary = run_experiment(&cfg)?;
            if let Some(path) = out {
                let trace = mpca::trace::ConvergenceTrace::read_csv(&path)?;
                println!("replicate,round,rayleigh");
                for row in trace.rows() {
                    println!("{},{},{:.16e}", row.replicate, row.iter, row.rayleigh);
                }
            }
            println!("{}", summary.line());
        }
        Command::Inhomo(args) => {
            let cfg = args.into_config(Some("inhomo"))?;
            let summary = run_experiment(&cfg)?;
            println!("{}", summary.line());
        }
        Command::VarianceCheck {
            dim,
            lambda1,
            lambda2,
            beta,
            noise,
            t_max,
            replicates,
            seed,
            out,
        } => {
            if dim == 0 {
                return Err(MpcaError::Config("dim must be >= 1".into()));
            }
            let mut diag = vec![lambda1];
            for i in 1..dim {
                diag.push(lambda2 * (1.0 - (i - 1) as f64 / dim.max(2) as f64));
            }
            let a = SymmetricMatrix::from_diagonal(&diag);
            let mut e = nalgebra::DMatrix::zeros(dim, dim);
            for i in 0..dim {
                for j in i..dim {
                    let v = noise * (((i * 31 + j * 17 + 3) % 7) as f64) / 7.0
                        * if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    e[(i, j)] = v;
                    e[(j, i)] = v;
                }
            }
            let law = vec![(a.entries() + &e, 0.5), (a.entries() - &e, 0.5)];
            let model = RecurrenceModel::new(a, law, beta, None)?;
            let mode = if replicates == 0 {
                SimMode::Exhaustive
            } else {
                SimMode::MonteCarlo { replicates, seed }
            };
            let rows = covariance_table(&model, t_max, mode)?;
            let mut csv = String::from(
                "t,series_bound,closed_bound,small_noise_bound,simulated,stderr,exact_scalar\n",
            );
            for row in rows {
                csv.push_str(&format!(
                    "{},{:.16e},{:.16e},{},{:.16e},{},{}\n",
                    row.t,
                    row.series_bound,
                    row.closed_bound,
                    row.small_noise_bound
                        .map(|v| format!("{v:.16e}"))
                        .unwrap_or_else(|| "nan".into()),
                    row.simulated,
                    row.stderr
                        .map(|v| format!("{v:.16e}"))
                        .unwrap_or_else(|| "nan".into()),
                    row.exact_scalar,
                ));
            }
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Compare { traces, out } => {
            let rows = compare_files(&traces)?;
            let csv = compare_csv(&rows);
            match out {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
        }
        Command::EstimateNoise {
            dataset,
            samples,
            seed,
        } => {
            let data = mpca::synth::Dataset::read_binary(&dataset)?;
            let oracle = SampleOracle::RowSampler { data: &data };
            let stats = estimate_noise(&oracle, samples, seed)?;
            println!(
                "sigma2={:.6e} sigma2_se={:.3e} r_bound={:.6e} sigma_op={:.6e}",
                stats.sigma2, stats.sigma2_se, stats.r_bound, stats.sigma_op
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
