//! `robust-w1`: generates the toy data, runs the estimators and the
//! experiments, and plots their CSV output.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical divergence,
//! 1 anything else (I/O).

mod plot;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use robust_w1::data::{generate_sample, toy_pair, ContaminationSpec, Dataset, InlierSpec, Sample};
use robust_w1::estimators::EstimatorKind;
use robust_w1::experiments::{
    run_convergence, run_k_sweep, run_rate_trace, ConvergenceSpec, RateSpec, SweepSpec, SWEEP_HEADER,
};
use robust_w1::gan::{score_generator, train_momwgan_observed, GanConfig};
use robust_w1::optim::{train_critic, TrainConfig, EXPERIMENT_EPOCHS};
use robust_w1::{exact_w1, Error};

const FAST_REPEATS: usize = 3;
const FAST_EPOCHS: usize = 50;

#[derive(Parser, Debug)]
#[command(name = "robust-w1", version, about = "Outlier-robust 1-Wasserstein estimation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Base seed; every random draw derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV and SVG output (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Repeats per cell; defaults to 20 for sweep-k, 5 elsewhere, 3 with --fast.
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// CI-sized runs: 3 repeats and 50 epochs unless set explicitly.
    #[arg(long, global = true)]
    fast: bool,
}

impl Global {
    fn repeats(&self, full: usize) -> usize {
        self.repeats.unwrap_or(if self.fast { FAST_REPEATS } else { full })
    }

    fn epochs(&self, explicit: Option<usize>) -> usize {
        explicit.unwrap_or(if self.fast { FAST_EPOCHS } else { EXPERIMENT_EPOCHS })
    }

    fn out(&self, name: &str) -> Result<PathBuf, Error> {
        fs::create_dir_all(&self.out_dir)?;
        Ok(self.out_dir.join(name))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a contaminated X and a clean Y sample as CSV.
    GenData {
        #[arg(long, default_value = "d1")]
        dataset: Dataset,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
    },
    /// Train one robust estimator and write its objective trace.
    Estimate(EstimateArgs),
    /// Error against the clean reference over a grid of block counts.
    SweepK {
        #[arg(long, default_value = "d1")]
        dataset: Dataset,
        #[arg(long, default_value = "mou-diag")]
        estimator: EstimatorKind,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15")]
        taus: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,20,50,70,100,150,224")]
        ks: Vec<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Objective per epoch for several block counts.
    Convergence {
        #[arg(long, default_value = "d1")]
        dataset: Dataset,
        #[arg(long, default_value = "mou-diag")]
        estimator: EstimatorKind,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,10,50,100")]
        ks: Vec<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Exact distance between block-selected samples as n grows.
    RateTrace {
        #[arg(long, value_delimiter = ',', default_value = "200,500,1000,2000")]
        ns: Vec<usize>,
        /// 0 gives the clean one-block baseline; otherwise ceil(sqrt(n)) outliers.
        #[arg(long, default_value_t = 0.1)]
        tau: f64,
    },
    /// Train the toy (MoM)WGAN on contaminated N((5,5), I).
    WganToy(WganArgs),
    /// Exact 1-Wasserstein distance between two CSV point clouds.
    Exact { x: PathBuf, y: PathBuf },
    /// Render CSV output of sweep-k, convergence or rate-trace as SVG.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    /// Clip biases as well as weights (the experiment default).
    #[arg(long, overrides_with = "no_clip_biases")]
    clip_biases: bool,
    #[arg(long)]
    no_clip_biases: bool,
}

impl TrainArgs {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(h) = self.hidden {
            cfg.hidden = h;
        }
        if let Some(c) = self.clip {
            cfg.clip_c = c;
        }
        if self.clip_biases {
            cfg.clip_biases = true;
        }
        if self.no_clip_biases {
            cfg.clip_biases = false;
        }
        cfg
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// X sample CSV; generated from --dataset/--n/--tau when absent.
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    #[arg(long, default_value = "d1")]
    dataset: Dataset,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value = "mou-diag")]
    estimator: EstimatorKind,
    /// Blocks per sample.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long)]
    epochs: Option<usize>,
    /// Reuse one block draw instead of reshuffling every iteration.
    #[arg(long)]
    fixed_blocks: bool,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug)]
struct WganArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    n_critic: Option<usize>,
    /// Blocks in each real mini-batch; 1 is the plain WGAN.
    #[arg(long)]
    k_blocks: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Write generated points every this many generator steps (0: final only).
    #[arg(long, default_value_t = 1000)]
    snapshot_every: usize,
    /// Number of points per snapshot.
    #[arg(long, default_value_t = 1000)]
    snapshot_points: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Io(_) | Error::Json(_)) {
        1
    } else {
        2
    }
}

fn read_sample(path: &Path) -> Result<Sample<f64>, Error> {
    let file = File::open(path).map_err(|e| Error::Invalid(format!("cannot open {}: {e}", path.display())))?;
    Sample::read_csv(BufReader::new(file))
}

fn write_sample(path: &Path, s: &Sample<f64>) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    s.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.command {
        Command::GenData { dataset, n, tau } => {
            let (x, y) = toy_pair::<f64>(*dataset, *n, *tau, g.seed)?;
            let (px, py) = (g.out("x.csv")?, g.out("y.csv")?);
            write_sample(&px, &x)?;
            write_sample(&py, &y)?;
            println!("wrote {} ({} outliers) and {}", px.display(), x.n_outliers(), py.display());
        }
        Command::Estimate(a) => estimate(g, a)?,
        Command::SweepK { dataset, estimator, taus, ks, epochs, train } => {
            let spec = SweepSpec {
                taus: taus.clone(),
                ks: ks.clone(),
                repeats: g.repeats(20),
                base_seed: g.seed,
                epochs: g.epochs(*epochs),
                train: train.apply(TrainConfig::experiment()),
                ..SweepSpec::new(*dataset, *estimator)
            };
            spec.validate()?;
            let path = g.out(&format!("sweep_k_{dataset}_{estimator}.csv"))?;
            let mut w = BufWriter::new(File::create(&path)?);
            writeln!(w, "{SWEEP_HEADER}")?;
            let table = run_k_sweep(&spec, |row| {
                writeln!(w, "{}", row.csv_line())?;
                w.flush()?;
                Ok(())
            })?;
            let summary = g.out(&format!("sweep_k_{dataset}_{estimator}_summary.csv"))?;
            table.write_summary_csv(*dataset, *estimator, BufWriter::new(File::create(&summary)?))?;
            for s in &table.summary {
                println!("tau={} k={} mean_abs_error={:.6e} q25={:.6e} q75={:.6e}", s.tau, s.k, s.mean, s.q25, s.q75);
            }
            println!("wrote {} and {}", path.display(), summary.display());
        }
        Command::Convergence { dataset, estimator, tau, ks, epochs, train } => {
            let spec = ConvergenceSpec {
                dataset: *dataset,
                estimator: *estimator,
                ks: ks.clone(),
                epochs: g.epochs(*epochs),
                repeats: g.repeats(5),
                base_seed: g.seed,
                train: train.apply(TrainConfig::experiment()),
                ..ConvergenceSpec::new(*tau)
            };
            let table = run_convergence(&spec)?;
            let path = g.out(&format!("convergence_tau{tau}.csv"))?;
            table.write_csv(BufWriter::new(File::create(&path)?))?;
            for (k, p) in &table.plateaus {
                println!("k={k} plateau={p:.6e}");
            }
            println!("wrote {}", path.display());
        }
        Command::RateTrace { ns, tau } => {
            let spec = RateSpec { ns: ns.clone(), tau: *tau, repeats: g.repeats(5), base_seed: g.seed };
            let table = run_rate_trace(&spec)?;
            let path = g.out("rate_trace.csv")?;
            table.write_csv(BufWriter::new(File::create(&path)?))?;
            let summary = g.out("rate_trace_summary.csv")?;
            table.write_summary_csv(BufWriter::new(File::create(&summary)?))?;
            for (n, e) in &table.mean_errors {
                println!("n={n} mean_error={e:.6e}");
            }
            println!("slope={:.4} decreasing_trend={:.4}", table.slope, table.decreasing_trend);
            println!("wrote {} and {}", path.display(), summary.display());
        }
        Command::WganToy(a) => wgan_toy(g, a)?,
        Command::Exact { x, y } => {
            let v = exact_w1(&read_sample(x)?, &read_sample(y)?)?;
            println!("{}", significant(v, 12));
        }
        Command::Plot { inputs } => {
            fs::create_dir_all(&g.out_dir)?;
            for input in inputs {
                for written in plot::plot_csv(input, &g.out_dir)? {
                    println!("wrote {}", written.display());
                }
            }
        }
    }
    Ok(())
}

fn estimate(g: &Global, a: &EstimateArgs) -> Result<(), Error> {
    let (x, y) = match (&a.x, &a.y) {
        (Some(px), Some(py)) => (read_sample(px)?, read_sample(py)?),
        _ => toy_pair::<f64>(a.dataset, a.n, a.tau, g.seed)?,
    };
    let mut cfg = a.train.apply(TrainConfig::experiment()).with_seed(g.seed).with_ks(a.k, a.k);
    cfg = cfg.with_epochs(g.epochs(a.epochs));
    cfg.reshuffle = !a.fixed_blocks;
    let spec = a.estimator.with_k(a.k, x.n(), y.n());
    let report = train_critic(&x, &y, &spec, &cfg)?;
    let path = g.out(&format!("estimate_{}_k{}.csv", a.estimator, a.k))?;
    report.write_csv(BufWriter::new(File::create(&path)?))?;
    println!("estimate={:.12e}", report.final_estimate);
    println!("wrote {}", path.display());
    Ok(())
}

fn wgan_toy(g: &Global, a: &WganArgs) -> Result<(), Error> {
    let base = GanConfig::toy();
    let cfg = GanConfig {
        batch_size: a.batch_size.unwrap_or(base.batch_size),
        n_critic: a.n_critic.unwrap_or(base.n_critic),
        k_blocks: a.k_blocks.unwrap_or(base.k_blocks),
        lr: a.lr.unwrap_or(base.lr),
        clip_c: a.clip.unwrap_or(base.clip_c),
        latent_dim: a.latent_dim.unwrap_or(base.latent_dim),
        max_generator_steps: a.steps.unwrap_or(if g.fast { 1000 } else { base.max_generator_steps }),
        seed: g.seed,
        ..base
    };
    let cont = if a.tau > 0.0 { ContaminationSpec::isolated(2, a.tau) } else { ContaminationSpec::none() };
    let data = generate_sample::<f64>(&InlierSpec::gaussian(vec![5.0, 5.0], a.n), &cont, g.seed)?;
    cfg.validate(data.n())?;
    let k = cfg.k_blocks;
    let (generator, report) = train_momwgan_observed(&data, &cfg, |step, gen| {
        let last = step == cfg.max_generator_steps;
        if last || (a.snapshot_every > 0 && step % a.snapshot_every == 0) {
            let pts = gen.generate(a.snapshot_points, robust_w1::rng::derive_seed(g.seed, step as u64))?;
            write_sample(&g.out(&format!("wgan_k{k}_step{step}.csv"))?, &pts)?;
        }
        Ok(())
    })?;
    let path = g.out(&format!("wgan_k{k}_trace.csv"))?;
    report.write_csv(BufWriter::new(File::create(&path)?))?;
    let scores = score_generator(&generator, &data.inliers()?, 2000, g.seed)?;
    println!("{}", serde_json::to_string(&serde_json::json!({ "k_blocks": k, "scores": scores }))?);
    println!("wrote {}", path.display());
    Ok(())
}

/// `%.{digits}g`-style formatting.
fn significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        let s = format!("{:.*e}", digits - 1, v);
        let (mantissa, e) = s.split_once('e').unwrap_or((&s, "0"));
        return format!("{}e{}", trim_zeros(mantissa), e);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
