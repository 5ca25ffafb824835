//! Experiment drivers for the 2D toy problems: error against the number of
//! blocks, convergence per epoch, and the rate of the block-selected exact
//! distance as the sample grows.
//!
//! Every cell derives its seed from the base seed and its repeat index, so a
//! row can be regenerated from the seed it carries.

use std::io::Write;

use crate::blocking::{contiguous_partition, median_value, recommended_k};
use crate::data::{generate_sample, true_w1_reference, ContaminationSpec, Dataset, InlierSpec, Sample};
use crate::error::{Error, Result};
use crate::estimators::EstimatorKind;
use crate::exact_ot::exact_w1;
use crate::optim::{train_critic, RunReport, TrainConfig};
use crate::rng::derive_seed;
use crate::scalar::Real;

pub const DEFAULT_K_GRID: [usize; 10] = [1, 2, 5, 10, 20, 50, 70, 100, 150, 224];
pub const TOY_N: usize = 500;

/// Seed of repeat `r` under `base`.
pub fn repeat_seed(base: u64, repeat: usize) -> u64 {
    derive_seed(base, repeat as u64)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepSpec {
    pub dataset: Dataset,
    pub estimator: EstimatorKind,
    pub taus: Vec<f64>,
    pub ks: Vec<usize>,
    pub repeats: usize,
    pub base_seed: u64,
    pub n: usize,
    pub epochs: usize,
    /// Optimiser settings; `n_iter`, `k_x`, `k_y` and `seed` are set per cell.
    pub train: TrainConfig,
}

impl SweepSpec {
    pub fn new(dataset: Dataset, estimator: EstimatorKind) -> Self {
        SweepSpec {
            dataset,
            estimator,
            taus: vec![0.0, 0.05, 0.1, 0.15],
            ks: DEFAULT_K_GRID.to_vec(),
            repeats: 20,
            base_seed: 0,
            n: TOY_N,
            epochs: crate::optim::EXPERIMENT_EPOCHS,
            train: TrainConfig::experiment(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if self.taus.is_empty() || self.ks.is_empty() {
            return Err(Error::invalid("need at least one tau and one K"));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t >= 0.0 && **t < 0.5)) {
            return Err(Error::invalid(format!("tau must lie in [0, 0.5), got {t}")));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        for &k in &self.ks {
            self.estimator.with_k(k, self.n, self.n).validate(self.n, self.n)?;
        }
        Ok(())
    }

    fn config(&self, k: usize, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train.clone() }.with_ks(k, k).with_epochs(self.epochs)
    }
}

/// Trains the estimator with `k` blocks per sample for `epochs` epochs.
pub fn train_toy<T: Real>(
    x: &Sample<T>,
    y: &Sample<T>,
    estimator: EstimatorKind,
    k: usize,
    epochs: usize,
    template: &TrainConfig,
    seed: u64,
) -> Result<RunReport<T>> {
    let cfg = TrainConfig { seed, ..template.clone() }.with_ks(k, k).with_epochs(epochs);
    train_critic(x, y, &estimator.with_k(k, x.n(), y.n()), &cfg)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub dataset: Dataset,
    pub estimator: EstimatorKind,
    pub tau: f64,
    pub k: usize,
    pub repeat: usize,
    pub seed: u64,
    pub estimate: f64,
    pub clean_reference: f64,
    pub abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepSummary {
    pub tau: f64,
    pub k: usize,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

pub const SWEEP_HEADER: &str = "dataset,estimator,tau,k,repeat,seed,estimate,clean_reference,abs_error";
pub const SWEEP_SUMMARY_HEADER: &str = "dataset,estimator,tau,k,mean,q25,q75";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.16e},{:.16e},{:.16e}",
            self.dataset,
            self.estimator,
            self.tau,
            self.k,
            self.repeat,
            self.seed,
            self.estimate,
            self.clean_reference,
            self.abs_error
        )
    }
}

impl SweepTable {
    /// Mean abs error of the summary cell `(tau, k)`.
    pub fn mean_error(&self, tau: f64, k: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.tau == tau && s.k == k).map(|s| s.mean)
    }

    pub fn write_summary_csv<W: Write>(&self, dataset: Dataset, estimator: EstimatorKind, mut out: W) -> Result<()> {
        writeln!(out, "{SWEEP_SUMMARY_HEADER}")?;
        for s in &self.summary {
            writeln!(out, "{dataset},{estimator},{},{},{:.16e},{:.16e},{:.16e}", s.tau, s.k, s.mean, s.q25, s.q75)?;
        }
        Ok(())
    }
}

/// Runs every `(tau, K, repeat)` cell. `on_row` sees each row as soon as it
/// exists, so callers can flush partial results if a later cell fails.
pub fn run_k_sweep(spec: &SweepSpec, mut on_row: impl FnMut(&SweepRow) -> Result<()>) -> Result<SweepTable> {
    spec.validate()?;
    let mut rows = Vec::new();
    for repeat in 0..spec.repeats {
        let seed = repeat_seed(spec.base_seed, repeat);
        let clean = clean_reference::<f64>(spec, seed)?;
        for &tau in &spec.taus {
            let (x, y) = crate::data::toy_pair::<f64>(spec.dataset, spec.n, tau, seed)?;
            for &k in &spec.ks {
                let cfg = spec.config(k, seed);
                let est = train_critic(&x, &y, &spec.estimator.with_k(k, x.n(), y.n()), &cfg)?.final_estimate;
                let row = SweepRow {
                    dataset: spec.dataset,
                    estimator: spec.estimator,
                    tau,
                    k,
                    repeat,
                    seed,
                    estimate: est,
                    clean_reference: clean,
                    abs_error: (est - clean).abs(),
                };
                on_row(&row)?;
                rows.push(row);
            }
        }
    }
    let summary = summarize(&rows, &spec.taus, &spec.ks);
    Ok(SweepTable { rows, summary })
}

/// Plain estimator (one block) on the uncontaminated pair of this seed.
pub fn clean_reference<T: Real>(spec: &SweepSpec, seed: u64) -> Result<f64> {
    let (x, y) = crate::data::toy_pair::<T>(spec.dataset, spec.n, 0.0, seed)?;
    let cfg = spec.config(1, seed);
    Ok(train_critic(&x, &y, &spec.estimator.with_k(1, x.n(), y.n()), &cfg)?.final_estimate)
}

fn summarize(rows: &[SweepRow], taus: &[f64], ks: &[usize]) -> Vec<SweepSummary> {
    let mut out = Vec::new();
    for &tau in taus {
        for &k in ks {
            let errs: Vec<f64> = rows.iter().filter(|r| r.tau == tau && r.k == k).map(|r| r.abs_error).collect();
            if errs.is_empty() {
                continue;
            }
            out.push(SweepSummary {
                tau,
                k,
                mean: errs.iter().sum::<f64>() / errs.len() as f64,
                q25: quantile(&errs, 0.25),
                q75: quantile(&errs, 0.75),
            });
        }
    }
    out
}

/// Linear-interpolation quantile (the usual "type 7" rule).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Kendall tau-a between two equal-length sequences.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("Kendall tau needs at least two points"));
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let prod = (a[i] - a[j]).signum() * (b[i] - b[j]).signum();
            if a[i] != a[j] && b[i] != b[j] {
                s += prod as i64;
            }
        }
    }
    Ok(s as f64 / (n * (n - 1) / 2) as f64)
}

/// Kendall tau between position and the negated values: positive when the
/// sequence tends to decrease.
pub fn decreasing_trend(values: &[f64]) -> Result<f64> {
    let pos: Vec<f64> = (0..values.len()).map(|i| i as f64).collect();
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    kendall_tau(&pos, &neg)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("slope needs at least two (x, y) pairs"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("log-log slope needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("x values are all equal"));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceSpec {
    pub dataset: Dataset,
    pub estimator: EstimatorKind,
    pub tau: f64,
    pub ks: Vec<usize>,
    pub epochs: usize,
    pub repeats: usize,
    pub base_seed: u64,
    pub n: usize,
    pub train: TrainConfig,
}

impl ConvergenceSpec {
    pub fn new(tau: f64) -> Self {
        ConvergenceSpec {
            dataset: Dataset::D1,
            estimator: EstimatorKind::MouDiag,
            tau,
            ks: vec![1, 10, 50, 100],
            epochs: crate::optim::EXPERIMENT_EPOCHS,
            repeats: 5,
            base_seed: 0,
            n: TOY_N,
            train: TrainConfig::experiment(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub epoch: usize,
    pub objective_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// `(K, final estimate averaged over repeats)`.
    pub plateaus: Vec<(usize, f64)>,
}

impl ConvergenceTable {
    pub fn plateau(&self, k: usize) -> Option<f64> {
        self.plateaus.iter().find(|p| p.0 == k).map(|p| p.1)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,epoch,objective_mean")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:.16e}", r.k, r.epoch, r.objective_mean)?;
        }
        Ok(())
    }
}

/// Mean objective of each epoch of one trace; one epoch is `k` iterations.
pub fn epoch_means(objectives: &[f64], k: usize) -> Vec<f64> {
    objectives.chunks(k.max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Objective traces per K, aligned on epochs and averaged over repeats.
pub fn run_convergence(spec: &ConvergenceSpec) -> Result<ConvergenceTable> {
    if spec.repeats == 0 || spec.ks.is_empty() || spec.epochs == 0 {
        return Err(Error::invalid("need repeats, epochs and at least one K"));
    }
    if !(spec.tau >= 0.0 && spec.tau < 0.5) {
        return Err(Error::invalid(format!("tau must lie in [0, 0.5), got {}", spec.tau)));
    }
    let mut table = ConvergenceTable::default();
    for &k in &spec.ks {
        let mut sums = vec![0.0; spec.epochs];
        let mut plateau = 0.0;
        for repeat in 0..spec.repeats {
            let seed = repeat_seed(spec.base_seed, repeat);
            let (x, y) = crate::data::toy_pair::<f64>(spec.dataset, spec.n, spec.tau, seed)?;
            let r = train_toy(&x, &y, spec.estimator, k, spec.epochs, &spec.train, seed)?;
            for (s, m) in sums.iter_mut().zip(epoch_means(&r.objectives(), k)) {
                *s += m;
            }
            plateau += r.final_estimate;
        }
        let reps = spec.repeats as f64;
        for (e, s) in sums.iter().enumerate() {
            table.rows.push(ConvergenceRow { k, epoch: e + 1, objective_mean: s / reps });
        }
        table.plateaus.push((k, plateau / reps));
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateSpec {
    pub ns: Vec<usize>,
    /// `0` gives the clean baseline with one block; any positive value adds
    /// `ceil(sqrt(n))` isolated outliers to `X`.
    pub tau: f64,
    pub repeats: usize,
    pub base_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub repeat: usize,
    pub seed: u64,
    pub n_outliers: usize,
    pub k: usize,
    pub estimate: f64,
    pub error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// `(n, mean error)` in increasing `n`.
    pub mean_errors: Vec<(usize, f64)>,
    pub slope: f64,
    pub decreasing_trend: f64,
}

impl RateTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# slope={:.6} decreasing_trend={:.6}", self.slope, self.decreasing_trend)?;
        writeln!(out, "n,repeat,seed,n_outliers,k,estimate,error")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{:.16e},{:.16e}",
                r.n, r.repeat, r.seed, r.n_outliers, r.k, r.estimate, r.error
            )?;
        }
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,mean_error")?;
        for (n, e) in &self.mean_errors {
            writeln!(out, "{n},{e:.16e}")?;
        }
        Ok(())
    }
}

/// Keeps the `ceil(K/2)` blocks whose means lie closest to the
/// coordinatewise median of block means, concatenated in block order.
pub fn select_central_blocks<T: Real>(sample: &Sample<T>, k: usize) -> Result<Sample<T>> {
    let assignment = contiguous_partition(sample.n(), k)?;
    let d = sample.d();
    let means: Vec<Vec<f64>> = assignment
        .blocks
        .iter()
        .map(|b| {
            let mut m = vec![0.0; d];
            for &i in b {
                for (acc, v) in m.iter_mut().zip(sample.point(i)) {
                    *acc += v.to_f64_lossy();
                }
            }
            m.iter_mut().for_each(|v| *v /= b.len() as f64);
            m
        })
        .collect();
    let center: Vec<f64> = (0..d)
        .map(|j| median_value(&means.iter().map(|m| m[j]).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let mut scored: Vec<(f64, usize)> = means
        .iter()
        .enumerate()
        .map(|(b, m)| (m.iter().zip(&center).map(|(a, c)| (a - c).powi(2)).sum::<f64>(), b))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = scored[..k.div_ceil(2)].iter().map(|s| s.1).collect();
    keep.sort_unstable();
    let indices: Vec<usize> = keep.iter().flat_map(|&b| assignment.blocks[b].iter().copied()).collect();
    sample.select(&indices)
}

/// Error of the exact distance between block-selected samples against
/// `sqrt(50)`, as `n` grows.
pub fn run_rate_trace(spec: &RateSpec) -> Result<RateTable> {
    if spec.ns.len() < 2 || spec.ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("ns must hold at least two strictly increasing sizes"));
    }
    if spec.repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    if !(spec.tau >= 0.0 && spec.tau < 0.5) {
        return Err(Error::invalid(format!("tau must lie in [0, 0.5), got {}", spec.tau)));
    }
    let reference = true_w1_reference();
    let mut table = RateTable::default();
    for &n in &spec.ns {
        let n_outliers = if spec.tau > 0.0 { (n as f64).sqrt().ceil() as usize } else { 0 };
        if 2 * n_outliers >= n {
            return Err(Error::invalid(format!("n = {n} is too small for {n_outliers} outliers")));
        }
        let tau_n = n_outliers as f64 / n as f64;
        let k = if n_outliers == 0 { 1 } else { recommended_k(n, tau_n)? };
        if k > 1 && n / k < 1 {
            return Err(Error::invalid(format!("n = {n} is too small for {k} blocks")));
        }
        let mut total = 0.0;
        for repeat in 0..spec.repeats {
            let seed = derive_seed(spec.base_seed, (n as u64) << 16 | repeat as u64);
            let cont = if n_outliers == 0 {
                ContaminationSpec::none()
            } else {
                ContaminationSpec::isolated(2, tau_n)
            };
            let x = generate_sample::<f64>(&InlierSpec::standard(2, n), &cont, derive_seed(seed, 1))?;
            let y = generate_sample::<f64>(
                &InlierSpec::gaussian(vec![5.0, 5.0], n),
                &ContaminationSpec::none(),
                derive_seed(seed, 2),
            )?;
            let (xs, ys) = if k == 1 { (x, y) } else { (select_central_blocks(&x, k)?, select_central_blocks(&y, k)?) };
            let estimate = exact_w1(&xs, &ys)?;
            let error = (estimate - reference).abs();
            total += error;
            table.rows.push(RateRow { n, repeat, seed, n_outliers, k, estimate, error });
        }
        table.mean_errors.push((n, total / spec.repeats as f64));
    }
    let ns: Vec<f64> = table.mean_errors.iter().map(|p| p.0 as f64).collect();
    let errs: Vec<f64> = table.mean_errors.iter().map(|p| p.1).collect();
    table.slope = log_log_slope(&ns, &errs)?;
    table.decreasing_trend = decreasing_trend(&errs)?;
    Ok(table)
}
