//! `qridge`: run quantum ridge-regression experiments from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qridge::experiment::{self, AlphaSpec, DataSource, ExperimentConfig, Mode, RunReport};
use qridge::synthetic::SyntheticSpec;
use qridge::{io, Error, Result};

#[derive(Parser)]
#[command(
    name = "qridge",
    version,
    about = "Quantum ridge regression and cross-validation laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantum K-fold cross-validation over an alpha grid, then a fit at the
    /// selected alpha.
    Cv(Common),
    /// Prepares the ridge state at one alpha.
    Fit(Common),
    /// Ridge-state fidelity against the number of phase bits.
    SweepFidelity {
        #[command(flatten)]
        common: Common,
        /// Comma-separated phase-bit counts.
        #[arg(long, value_delimiter = ',')]
        s_list: Option<Vec<u32>>,
    },
    /// Parallel Hamiltonian simulation error against the step size.
    SweepChannel {
        #[command(flatten)]
        common: Common,
        /// Number of generators.
        #[arg(long)]
        q: Option<usize>,
        /// System dimension.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        /// Comma-separated step counts.
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<usize>>,
    },
    /// Analytic bounds checked on a dataset.
    Bounds(Common),
    /// Writes a synthetic dataset as CSV.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated planted singular values.
        #[arg(long, value_delimiter = ',')]
        spectrum: Option<Vec<f64>>,
        /// Relative noise on y.
        #[arg(long)]
        noise: Option<f64>,
        /// Omit the header row.
        #[arg(long)]
        no_header: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV dataset; y is the last column unless --y is given.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Separate single-column y file.
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// exact or noise.
    #[arg(long)]
    mode: Option<String>,
    /// Report path; side tables go next to it. Without it the report is
    /// printed.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Uniform grid as min,max,L.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Explicit comma-separated alpha values.
    #[arg(long, value_delimiter = ',')]
    alpha_list: Option<Vec<f64>>,
    /// Phase bits; omit for the ideal register.
    #[arg(long)]
    s: Option<u32>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Dimension budget for density-operator simulation.
    #[arg(long)]
    budget: Option<usize>,
}

impl Common {
    fn resolve(&self, fallback: Option<DataSource>) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.data) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(_)) => ExperimentConfig::new(DataSource::Reference {
                n: 4,
                m: 3,
                seed: 0,
            }),
            (None, None) => match fallback {
                Some(src) => ExperimentConfig::new(src),
                None => return Err(Error::Input("no dataset: pass --data or --config".into())),
            },
        };
        if let Some(path) = &self.data {
            cfg.data = DataSource::Csv {
                path: path.clone(),
                y_path: self.y.clone(),
            };
        } else if let (Some(y), DataSource::Csv { y_path, .. }) = (&self.y, &mut cfg.data) {
            *y_path = Some(y.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = &self.mode {
            cfg.mode = mode.parse::<Mode>()?;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.k.is_some() {
            cfg.k = self.k;
        }
        if self.alpha.is_some() {
            cfg.alpha = self.alpha;
        }
        if let Some(g) = &self.alphas {
            if g.len() != 3 {
                return Err(Error::Input(format!(
                    "--alphas takes min,max,L; got {} values",
                    g.len()
                )));
            }
            if g[2] < 1.0 || g[2].fract() != 0.0 {
                return Err(Error::Input(format!(
                    "grid length must be a positive integer, got {}",
                    g[2]
                )));
            }
            cfg.alphas = AlphaSpec::Range {
                min: g[0],
                max: g[1],
                l: g[2] as usize,
            };
        }
        if let Some(values) = &self.alpha_list {
            cfg.alphas = AlphaSpec::List {
                values: values.clone(),
            };
        }
        if self.s.is_some() {
            cfg.s = self.s;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(b) = self.budget {
            cfg.dim_budget = b;
        }
        Ok(cfg)
    }
}

fn emit(report: &RunReport, cfg: &ExperimentConfig) -> Result<()> {
    match &cfg.out {
        Some(path) => {
            for p in experiment::emit_report(report, path)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => print!("{}", report.to_json()?),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cv(c) => {
            let cfg = c.resolve(None)?;
            emit(&experiment::run_cv_experiment(&cfg)?, &cfg)
        }
        Command::Fit(c) => {
            let cfg = c.resolve(None)?;
            emit(&experiment::run_fit(&cfg)?, &cfg)
        }
        Command::Bounds(c) => {
            let cfg = c.resolve(None)?;
            emit(&experiment::run_bounds(&cfg)?, &cfg)
        }
        Command::SweepFidelity { common, s_list } => {
            let mut cfg = common.resolve(None)?;
            if let Some(s) = s_list {
                cfg.s_list = s;
            }
            emit(&experiment::run_fidelity_sweep(&cfg, &cfg.s_list)?, &cfg)
        }
        Command::SweepChannel {
            common,
            q,
            n,
            t,
            steps,
        } => {
            let mut cfg = common.resolve(Some(DataSource::Reference {
                n: 4,
                m: 3,
                seed: 0,
            }))?;
            if let Some(q) = q {
                cfg.channel.q = q;
            }
            if let Some(n) = n {
                cfg.channel.n = n;
            }
            if let Some(t) = t {
                cfg.channel.t = t;
            }
            if let Some(steps) = steps {
                cfg.channel.steps = steps;
            }
            if let Some(e) = common.epsilon {
                cfg.channel.epsilon = e;
            }
            emit(
                &experiment::run_channel_sweep(&cfg, &cfg.channel.steps)?,
                &cfg,
            )
        }
        Command::Gen {
            common,
            n,
            m,
            spectrum,
            noise,
            no_header,
        } => {
            let seed = common.seed.unwrap_or(0);
            let fallback = match (n, m, spectrum) {
                (Some(n), Some(m), Some(sv)) => Some(DataSource::Synthetic(SyntheticSpec {
                    noise: noise.unwrap_or(0.0),
                    ..SyntheticSpec::new(n, m, sv, seed)
                })),
                (None, None, None) => None,
                _ => {
                    return Err(Error::Input(
                        "gen needs all of --n, --m and --spectrum".into(),
                    ))
                }
            };
            let use_fallback = fallback.is_some();
            let mut cfg = common.resolve(fallback.clone())?;
            if use_fallback {
                cfg.data = fallback.expect("checked above");
            }
            let out = cfg
                .out
                .clone()
                .ok_or_else(|| Error::Input("gen needs --out".into()))?;
            let d = experiment::load_dataset(&cfg.data)?;
            io::export_csv(&d, &out, !no_header)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
