//! RMSProp and the median-block gradient ascent loops that approximate
//! `W_MoM`, `W_MoU-diag` and `W_MoU` with a weight-clipped critic.
//!
//! Every iteration draws fresh blocks, evaluates the critic on both samples,
//! picks the median block(s) and ascends the objective restricted to them:
//!
//! ```text
//! G = 1/B_X sum_{i in med_X} grad phi(X_i) - 1/B_Y sum_{j in med_Y} grad phi(Y_j)
//! w <- clip(w + lr * RMSProp(G), -c, c)
//! ```
//!
//! Randomness at iteration `t` comes from stream `t` of the run seed, so runs
//! with one block per sample coincide across all three estimators.

use std::io::Write;
use std::time::Instant;

use crate::critic::{CriticGradient, CriticNet, DEFAULT_CLIP, DEFAULT_HIDDEN};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::estimators::{dual_objective_on_blocks, Blocks, EstimatorSpec, MedianBlocks};
use crate::mlp::ParamVec;
use crate::rng::{derive_seed, rng_for_stream};
use crate::scalar::Real;

pub const DEFAULT_LR: f64 = 5e-5;
pub const DEFAULT_DECAY: f64 = 0.9;
pub const DEFAULT_EPSILON: f64 = 1e-8;

const INIT_TAG: u64 = 0x1417;
const FIXED_BLOCKS_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct RmsPropState<T> {
    pub mean_square: ParamVec<T>,
    pub decay: T,
    pub epsilon: T,
    pub lr: T,
}

impl<T: Real> RmsPropState<T> {
    pub fn new(like: &ParamVec<T>, lr: T, decay: T, epsilon: T) -> Result<Self> {
        if !(decay > T::zero() && decay < T::one()) {
            return Err(Error::invalid(format!("RMSProp decay must lie in (0, 1), got {decay}")));
        }
        if !(epsilon > T::zero()) || !(lr > T::zero()) {
            return Err(Error::invalid("RMSProp epsilon and learning rate must be positive"));
        }
        Ok(RmsPropState { mean_square: ParamVec::zeros(like.shape()), decay, epsilon, lr })
    }

    /// Updates the accumulator in place and returns `g / (sqrt(acc) + eps)`.
    /// The caller applies `lr` and the sign.
    pub fn step(&mut self, grad: &CriticGradient<T>) -> Result<ParamVec<T>> {
        self.mean_square.check_congruent(grad)?;
        let one_minus = T::one() - self.decay;
        let mut update = grad.clone();
        for ((acc, &g), u) in self
            .mean_square
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(update.values_mut())
        {
            *acc = self.decay * *acc + one_minus * g * g;
            *u = g / (acc.sqrt() + self.epsilon);
        }
        Ok(update)
    }
}

/// Functional form of [`RmsPropState::step`].
pub fn rmsprop_step<T: Real>(
    state: &RmsPropState<T>,
    grad: &CriticGradient<T>,
) -> Result<(ParamVec<T>, RmsPropState<T>)> {
    let mut next = state.clone();
    let update = next.step(grad)?;
    Ok((update, next))
}

/// `w <- w + sign * lr * update`.
pub fn apply_update<T: Real>(params: &mut ParamVec<T>, update: &ParamVec<T>, lr: T, ascend: bool) -> Result<()> {
    params.check_congruent(update)?;
    let step = if ascend { lr } else { -lr };
    for (w, &u) in params.values_mut().iter_mut().zip(update.values()) {
        *w += step * u;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub n_iter: usize,
    pub k_x: usize,
    pub k_y: usize,
    pub lr: f64,
    pub clip_c: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Redraw blocks every iteration; otherwise one draw is reused.
    pub reshuffle: bool,
    pub decay: f64,
    pub epsilon: f64,
    pub clip_biases: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_iter: 300,
            k_x: 1,
            k_y: 1,
            lr: DEFAULT_LR,
            clip_c: DEFAULT_CLIP,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
            reshuffle: true,
            decay: DEFAULT_DECAY,
            epsilon: DEFAULT_EPSILON,
            clip_biases: false,
        }
    }
}

/// Learning rate, critic width and bias clipping used by the toy experiments.
/// Unlike the library defaults, these let a one-block run reach its plateau
/// within 100 epochs.
pub const EXPERIMENT_LR: f64 = 2e-3;
pub const EXPERIMENT_HIDDEN: usize = 256;
pub const EXPERIMENT_EPOCHS: usize = 100;

impl TrainConfig {
    /// Settings for the toy experiments, with one block per sample.
    pub fn experiment() -> Self {
        TrainConfig {
            lr: EXPERIMENT_LR,
            hidden: EXPERIMENT_HIDDEN,
            clip_biases: true,
            ..Default::default()
        }
        .with_epochs(EXPERIMENT_EPOCHS)
    }

    /// Iteration count covering `epochs` passes when the data is cut into
    /// `k` blocks: one epoch is `k` iterations.
    pub fn iterations_for_epochs(epochs: usize, k: usize) -> usize {
        (epochs * k.max(1)).max(1)
    }

    pub fn with_ks(mut self, k_x: usize, k_y: usize) -> Self {
        self.k_x = k_x;
        self.k_y = k_y;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.n_iter = Self::iterations_for_epochs(epochs, self.k_x);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TracePoint {
    /// 1-based iteration number.
    pub iteration: usize,
    pub epoch: f64,
    /// Median-block objective at the weights entering this iteration.
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct RunReport<T> {
    pub trace: Vec<TracePoint>,
    pub final_estimate: f64,
    pub config: TrainConfig,
    pub estimator: EstimatorSpec,
    pub wall_time: f64,
    pub critic: CriticNet<T>,
}

impl<T: Real> RunReport<T> {
    pub fn objectives(&self) -> Vec<f64> {
        self.trace.iter().map(|p| p.objective).collect()
    }

    /// `#`-prefixed JSON config, then `iteration,epoch,objective` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "config": self.config,
            "estimator": self.estimator,
            "final_estimate": self.final_estimate,
            "wall_time": self.wall_time,
        });
        for line in serde_json::to_string_pretty(&header)?.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "iteration,epoch,objective")?;
        for p in &self.trace {
            writeln!(out, "{},{},{:.16e}", p.iteration, p.epoch, p.objective)?;
        }
        Ok(())
    }
}

/// Mean objective over the last `max(1, n / 20)` trace entries.
pub fn tail_mean(objectives: &[f64]) -> f64 {
    let tail = (objectives.len() / 20).max(1).min(objectives.len());
    if tail == 0 {
        return f64::NAN;
    }
    objectives[objectives.len() - tail..].iter().sum::<f64>() / tail as f64
}

/// Gradient of the objective restricted to the median block(s).
pub fn median_block_gradient<T: Real>(
    critic: &CriticNet<T>,
    x: &Sample<T>,
    y: &Sample<T>,
    median: &MedianBlocks,
) -> Result<CriticGradient<T>> {
    let (wx, wy) = median.point_weights::<T>();
    let mut grad = ParamVec::zeros(critic.mlp().shape());
    critic.accumulate_grad(x, wx, &mut grad)?;
    critic.accumulate_grad(y, wy, &mut grad)?;
    Ok(grad)
}

fn check_samples<T: Real>(x: &Sample<T>, y: &Sample<T>, cfg: &TrainConfig) -> Result<()> {
    if x.d() != y.d() {
        return Err(Error::DimensionMismatch { expected: x.d(), got: y.d() });
    }
    if cfg.n_iter == 0 {
        return Err(Error::invalid("n_iter must be at least 1"));
    }
    if cfg.hidden == 0 {
        return Err(Error::invalid("hidden width must be at least 1"));
    }
    Ok(())
}

/// Gradient ascent on the critic for any estimator.
pub fn train_critic<T: Real>(
    x: &Sample<T>,
    y: &Sample<T>,
    estimator: &EstimatorSpec,
    cfg: &TrainConfig,
) -> Result<RunReport<T>> {
    check_samples(x, y, cfg)?;
    estimator.validate(x.n(), y.n())?;
    let clip = T::of(cfg.clip_c);
    let critic =
        CriticNet::init(x.d(), cfg.hidden, clip, derive_seed(cfg.seed, INIT_TAG))?.with_clip_biases(cfg.clip_biases);
    train_critic_from(x, y, estimator, cfg, critic)
}

/// As [`train_critic`], starting from a given critic.
pub fn train_critic_from<T: Real>(
    x: &Sample<T>,
    y: &Sample<T>,
    estimator: &EstimatorSpec,
    cfg: &TrainConfig,
    mut critic: CriticNet<T>,
) -> Result<RunReport<T>> {
    check_samples(x, y, cfg)?;
    estimator.validate(x.n(), y.n())?;
    let start = Instant::now();
    let clip = T::of(cfg.clip_c);
    let lr = T::of(cfg.lr);
    let mut opt = RmsPropState::new(critic.params(), lr, T::of(cfg.decay), T::of(cfg.epsilon))?;
    let epoch_len = estimator.k_x().max(1) as f64;

    let fixed: Option<Blocks> = if cfg.reshuffle {
        None
    } else {
        Some(estimator.sample_blocks(x.n(), y.n(), &mut rng_for_stream(cfg.seed, FIXED_BLOCKS_STREAM))?)
    };

    let mut trace = Vec::with_capacity(cfg.n_iter);
    for t in 0..cfg.n_iter {
        let drawn;
        let blocks = match &fixed {
            Some(b) => b,
            None => {
                drawn = estimator.sample_blocks(x.n(), y.n(), &mut rng_for_stream(cfg.seed, t as u64))?;
                &drawn
            }
        };
        let phi_x = critic.evaluate(x)?;
        let phi_y = critic.evaluate(y)?;
        let dual = dual_objective_on_blocks(&phi_x, &phi_y, blocks).map_err(|e| match e {
            Error::NonFinite(detail) => Error::Diverged { iteration: t + 1, detail },
            other => other,
        })?;
        let objective = dual.value.to_f64_lossy();
        if !objective.is_finite() {
            return Err(Error::Diverged { iteration: t + 1, detail: format!("objective {objective}") });
        }
        trace.push(TracePoint { iteration: t + 1, epoch: (t + 1) as f64 / epoch_len, objective });

        let grad = median_block_gradient(&critic, x, y, &dual.median_blocks)?;
        let update = opt.step(&grad)?;
        apply_update(critic.params_mut(), &update, lr, true)?;
        critic.clip_in_place(clip)?;
        if !critic.params().is_finite() {
            return Err(Error::Diverged { iteration: t + 1, detail: "critic parameters".into() });
        }
    }
    let final_estimate = tail_mean(&trace.iter().map(|p| p.objective).collect::<Vec<_>>());
    Ok(RunReport {
        trace,
        final_estimate,
        config: cfg.clone(),
        estimator: *estimator,
        wall_time: start.elapsed().as_secs_f64(),
        critic,
    })
}

/// Approximates `W_MoM`: independent MoM on each sample.
pub fn train_w_mom<T: Real>(x: &Sample<T>, y: &Sample<T>, cfg: &TrainConfig) -> Result<RunReport<T>> {
    train_critic(x, y, &EstimatorSpec::mom(cfg.k_x, cfg.k_y), cfg)
}

/// Approximates `W_MoU-diag`; requires `k_x == k_y`.
pub fn train_w_mou_diag<T: Real>(x: &Sample<T>, y: &Sample<T>, cfg: &TrainConfig) -> Result<RunReport<T>> {
    if cfg.k_x != cfg.k_y {
        return Err(Error::invalid(format!(
            "diagonal blocks need k_x = k_y, got {} and {}",
            cfg.k_x, cfg.k_y
        )));
    }
    train_critic(x, y, &EstimatorSpec::mou_diag(cfg.k_x), cfg)
}

/// Approximates `W_MoU` over the full `k_x x k_y` block grid.
pub fn train_w_mou<T: Real>(x: &Sample<T>, y: &Sample<T>, cfg: &TrainConfig) -> Result<RunReport<T>> {
    train_critic(x, y, &EstimatorSpec::mou(cfg.k_x, cfg.k_y), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpShape;

    fn grad_of(values: Vec<f64>) -> ParamVec<f64> {
        let n = values.len();
        // shape with param_count == n: input 1, hidden h, output 1 -> 3h + 1
        assert_eq!((n - 1) % 3, 0);
        ParamVec::from_values(MlpShape::new(1, (n - 1) / 3, 1), values).unwrap()
    }

    #[test]
    fn zero_gradient_gives_zero_update_and_decays_accumulator() {
        let g = grad_of(vec![1.0, -2.0, 0.5, 3.0]);
        let mut st = RmsPropState::new(&g, 0.1, 0.9, 1e-8).unwrap();
        st.step(&g).unwrap();
        let before = st.mean_square.values().to_vec();
        let zero = grad_of(vec![0.0; 4]);
        let u = st.step(&zero).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        for (a, b) in st.mean_square.values().iter().zip(&before) {
            assert!((a - 0.9 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let g = grad_of(vec![1.0, -2.0, 0.5, 3.0]);
        let st = RmsPropState::new(&g, 0.1, 0.9, 1e-8).unwrap();
        let (u, next) = rmsprop_step(&st, &g).unwrap();
        for (&ui, &gi) in u.values().iter().zip(g.values()) {
            let expected = gi / ((0.1 * gi * gi).sqrt() + 1e-8);
            assert!((ui - expected).abs() < 1e-12);
        }
        assert_ne!(next, st);
    }

    #[test]
    fn constant_gradient_update_tends_to_sign() {
        let g = grad_of(vec![1e-3, -2.0, 0.5, 300.0]);
        let mut st = RmsPropState::new(&g, 0.1, 0.9, 1e-8).unwrap();
        let mut u = st.step(&g).unwrap();
        for _ in 1..1000 {
            u = st.step(&g).unwrap();
        }
        for (&ui, &gi) in u.values().iter().zip(g.values()) {
            assert!((ui - gi.signum()).abs() <= 1e-3, "{ui}");
        }
    }

    #[test]
    fn rmsprop_rejects_bad_hyperparameters_and_shapes() {
        let g = grad_of(vec![1.0; 4]);
        assert!(RmsPropState::new(&g, 0.1, 1.0, 1e-8).is_err());
        assert!(RmsPropState::new(&g, 0.1, 0.9, 0.0).is_err());
        let mut st = RmsPropState::new(&g, 0.1, 0.9, 1e-8).unwrap();
        assert!(st.step(&grad_of(vec![1.0; 7])).is_err());
    }

    #[test]
    fn tail_mean_window() {
        let v: Vec<f64> = (1..=40).map(f64::from).collect();
        assert_eq!(tail_mean(&v), 39.5);
        assert_eq!(tail_mean(&[3.0]), 3.0);
    }

    #[test]
    fn epoch_accounting() {
        assert_eq!(TrainConfig::iterations_for_epochs(10, 1), 10);
        assert_eq!(TrainConfig::iterations_for_epochs(10, 50), 500);
        let c = TrainConfig::default().with_ks(7, 7).with_epochs(3);
        assert_eq!(c.n_iter, 21);
    }
}
