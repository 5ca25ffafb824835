//! Toy MoMWGAN: a WGAN whose critic loss takes the median of block means on
//! the real mini-batch instead of its plain mean.
//!
//! Critic loss per step, with `B` real points cut into `k_blocks` blocks:
//!
//! ```text
//! MoM_X[f_w] - 1/b sum_j f_w(g_theta(Z_j))
//! ```
//!
//! The generated side always uses the plain mean. With `k_blocks = 1` the
//! loop is exactly the weight-clipped WGAN.

use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, StandardNormal};

use crate::blocking::{contiguous_partition, median_index};
use crate::critic::CriticNet;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::exact_ot::exact_w1;
use crate::mlp::{Mlp, MlpShape, ParamVec, Workspace};
use crate::optim::{apply_update, RmsPropState};
use crate::rng::{derive_seed, rng_for_stream, rng_from_seed, Rng};
use crate::scalar::{gathered_mean, Real};

pub const DEFAULT_GENERATOR_HIDDEN: usize = 32;
pub const DEFAULT_LATENT_DIM: usize = 2;

const CRITIC_INIT_TAG: u64 = 0x6a11;
const GENERATOR_INIT_TAG: u64 = 0x6a12;
// generator steps use streams above every critic stream
const GENERATOR_STREAM_BASE: u64 = 1 << 62;

/// `g_theta: R^p -> R^d`, one ReLU hidden layer, unclipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    net: Mlp<T>,
}

impl<T: Real> Generator<T> {
    /// Uniform `+-1/sqrt(fan_in)` init for weights and biases of each layer.
    pub fn init(latent_dim: usize, hidden: usize, d: usize, seed: u64) -> Result<Self> {
        if latent_dim == 0 || hidden == 0 || d == 0 {
            return Err(Error::invalid("generator needs latent_dim, hidden and d >= 1"));
        }
        let shape = MlpShape::new(latent_dim, hidden, d);
        let mut rng = rng_from_seed(seed);
        let b1 = 1.0 / (latent_dim as f64).sqrt();
        let b2 = 1.0 / (hidden as f64).sqrt();
        let mut params = ParamVec::zeros(shape);
        let first = shape.param_count() - (hidden * d + d);
        for (i, v) in params.values_mut().iter_mut().enumerate() {
            let bound = if i < first { b1 } else { b2 };
            *v = T::of(rand::Rng::gen_range(&mut rng, -bound..=bound));
        }
        Ok(Generator { net: Mlp::from_params(params) })
    }

    pub fn from_mlp(net: Mlp<T>) -> Self {
        Generator { net }
    }

    pub fn mlp(&self) -> &Mlp<T> {
        &self.net
    }

    pub fn params(&self) -> &ParamVec<T> {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut ParamVec<T> {
        self.net.params_mut()
    }

    pub fn latent_dim(&self) -> usize {
        self.net.shape().input
    }

    pub fn output_dim(&self) -> usize {
        self.net.shape().output
    }

    pub fn apply(&self, z: &[T]) -> Result<Vec<T>> {
        self.net.forward(z)
    }

    fn draw_latents(&self, count: usize, rng: &mut Rng) -> Vec<T> {
        (0..count * self.latent_dim())
            .map(|_| T::of(Distribution::<f64>::sample(&StandardNormal, rng)))
            .collect()
    }

    fn push_forward(&self, latents: &[T]) -> Result<Vec<T>> {
        let p = self.latent_dim();
        let d = self.output_dim();
        let mut out = vec![T::zero(); latents.len() / p * d];
        let mut ws = Workspace::default();
        for (z, o) in latents.chunks_exact(p).zip(out.chunks_exact_mut(d)) {
            self.net.forward_into(z, &mut ws, o)?;
        }
        Ok(out)
    }

    /// `count` points `g(Z)`, `Z ~ N(0, I_p)`, all flagged as inliers.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Sample<T>> {
        let z = self.draw_latents(count, &mut rng_from_seed(seed));
        Sample::clean(self.push_forward(&z)?, self.output_dim())
    }

    /// Gradient in theta of `-1/b sum_j f_w(g_theta(z_j))`.
    pub fn loss_gradient(&self, critic: &CriticNet<T>, latents: &[T]) -> Result<ParamVec<T>> {
        let p = self.latent_dim();
        if latents.is_empty() || latents.len() % p != 0 {
            return Err(Error::invalid("latent batch must be a non-empty multiple of latent_dim"));
        }
        let count = latents.len() / p;
        let scale = -T::one() / T::of_usize(count);
        let mut grad = ParamVec::zeros(self.net.shape());
        let mut ws = Workspace::default();
        for z in latents.chunks_exact(p) {
            let x = self.net.forward(z)?;
            let dphi = critic.input_gradient(&x)?;
            self.net.backward_accumulate(z, &dphi, scale, &mut grad, &mut ws)?;
        }
        Ok(grad)
    }

    /// `-1/b sum_j f_w(g_theta(z_j))`.
    pub fn loss(&self, critic: &CriticNet<T>, latents: &[T]) -> Result<T> {
        let xs = self.push_forward(latents)?;
        let d = self.output_dim();
        let mut total = T::zero();
        for x in xs.chunks_exact(d) {
            total += critic.forward(x)?;
        }
        Ok(-total / T::of_usize(xs.len() / d))
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GanConfig {
    pub batch_size: usize,
    pub n_critic: usize,
    pub k_blocks: usize,
    pub lr: f64,
    pub clip_c: f64,
    pub latent_dim: usize,
    pub generator_hidden: usize,
    pub critic_hidden: usize,
    pub max_generator_steps: usize,
    pub seed: u64,
    pub clip_biases: bool,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            batch_size: 64,
            n_critic: 5,
            k_blocks: 1,
            lr: 5e-5,
            clip_c: 0.01,
            latent_dim: DEFAULT_LATENT_DIM,
            generator_hidden: DEFAULT_GENERATOR_HIDDEN,
            critic_hidden: 64,
            max_generator_steps: 2000,
            seed: 0,
            clip_biases: false,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl GanConfig {
    /// Settings for the 2D toy problem: small batches so that four blocks
    /// are each likely to be outlier free.
    pub fn toy() -> Self {
        GanConfig { batch_size: 16, lr: 1e-3, max_generator_steps: 4000, k_blocks: 4, ..Default::default() }
    }

    pub fn validate(&self, n_data: usize) -> Result<()> {
        if self.k_blocks == 0 || self.batch_size < self.k_blocks {
            return Err(Error::invalid(format!(
                "need batch_size >= k_blocks >= 1, got b = {}, K = {}",
                self.batch_size, self.k_blocks
            )));
        }
        if self.batch_size > n_data {
            return Err(Error::invalid(format!("batch_size {} exceeds data size {n_data}", self.batch_size)));
        }
        if self.n_critic == 0 || self.max_generator_steps == 0 {
            return Err(Error::invalid("n_critic and max_generator_steps must be at least 1"));
        }
        if !(self.lr > 0.0) || !(self.clip_c > 0.0) {
            return Err(Error::invalid("lr and clip_c must be positive"));
        }
        if self.latent_dim == 0 || self.generator_hidden == 0 || self.critic_hidden == 0 {
            return Err(Error::invalid("network sizes must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GanTracePoint {
    pub generator_step: usize,
    /// Critic objective at the last critic iteration of this step.
    pub critic_objective: f64,
    pub generator_loss: f64,
}

#[derive(Clone, Debug)]
pub struct GanReport<T> {
    pub trace: Vec<GanTracePoint>,
    pub config: GanConfig,
    pub wall_time: f64,
    pub critic: CriticNet<T>,
}

impl<T: Real> GanReport<T> {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({ "config": self.config, "wall_time": self.wall_time });
        for line in serde_json::to_string_pretty(&header)?.lines() {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "generator_step,critic_objective,generator_loss")?;
        for p in &self.trace {
            writeln!(out, "{},{:.16e},{:.16e}", p.generator_step, p.critic_objective, p.generator_loss)?;
        }
        Ok(())
    }
}

/// One critic ascent step; returns the objective before the update.
fn critic_step<T: Real>(
    critic: &mut CriticNet<T>,
    opt: &mut RmsPropState<T>,
    batch: &[&[T]],
    fake: &[T],
    k_blocks: usize,
    cfg: &GanConfig,
) -> Result<T> {
    let d = critic.d();
    let phi_real: Vec<T> = batch.iter().map(|x| critic.forward(x)).collect::<Result<_>>()?;
    let phi_fake: Vec<T> = fake.chunks_exact(d).map(|x| critic.forward(x)).collect::<Result<_>>()?;
    let n_fake = phi_fake.len();

    // the batch is already a random draw, so contiguous blocks are random blocks
    let blocks = contiguous_partition(batch.len(), k_blocks)?.blocks;
    let means: Vec<T> = blocks.iter().map(|b| gathered_mean(&phi_real, b)).collect();
    let mi = median_index(&means)?;
    let med = &blocks[mi];
    let fake_mean = gathered_mean(&phi_fake, &(0..n_fake).collect::<Vec<_>>());
    let objective = means[mi] - fake_mean;
    if !objective.is_finite() {
        return Err(Error::NonFinite(format!("critic objective {objective}")));
    }

    let mut points: Vec<&[T]> = Vec::with_capacity(med.len() + n_fake);
    let mut weights = Vec::with_capacity(med.len() + n_fake);
    let wr = T::one() / T::of_usize(med.len());
    let wf = -T::one() / T::of_usize(n_fake);
    for &i in med {
        points.push(batch[i]);
        weights.push(wr);
    }
    for x in fake.chunks_exact(d) {
        points.push(x);
        weights.push(wf);
    }
    let grad = critic.grad_params(&points, &weights)?;
    let update = opt.step(&grad)?;
    apply_update(critic.params_mut(), &update, opt.lr, true)?;
    critic.clip_in_place(T::of(cfg.clip_c))?;
    Ok(objective)
}

/// Alternates `n_critic` critic steps with one generator step.
pub fn train_momwgan<T: Real>(data: &Sample<T>, cfg: &GanConfig) -> Result<(Generator<T>, GanReport<T>)> {
    train_momwgan_observed(data, cfg, |_, _| Ok(()))
}

/// As [`train_momwgan`], calling `observe(step, generator)` after every
/// generator step (1-based), e.g. to write snapshots.
pub fn train_momwgan_observed<T: Real>(
    data: &Sample<T>,
    cfg: &GanConfig,
    mut observe: impl FnMut(usize, &Generator<T>) -> Result<()>,
) -> Result<(Generator<T>, GanReport<T>)> {
    cfg.validate(data.n())?;
    let start = Instant::now();
    let d = data.d();
    let mut generator =
        Generator::init(cfg.latent_dim, cfg.generator_hidden, d, derive_seed(cfg.seed, GENERATOR_INIT_TAG))?;
    let mut critic = CriticNet::init(d, cfg.critic_hidden, T::of(cfg.clip_c), derive_seed(cfg.seed, CRITIC_INIT_TAG))?
        .with_clip_biases(cfg.clip_biases);
    let (lr, decay, eps) = (T::of(cfg.lr), T::of(cfg.decay), T::of(cfg.epsilon));
    let mut critic_opt = RmsPropState::new(critic.params(), lr, decay, eps)?;
    let mut gen_opt = RmsPropState::new(generator.params(), lr, decay, eps)?;

    let diverged = |step: usize, e: Error| match e {
        Error::NonFinite(detail) => Error::Diverged { iteration: step, detail },
        other => other,
    };

    let mut trace = Vec::with_capacity(cfg.max_generator_steps);
    for step in 0..cfg.max_generator_steps {
        let mut objective = T::zero();
        for j in 0..cfg.n_critic {
            let mut rng = rng_for_stream(cfg.seed, (step * cfg.n_critic + j) as u64);
            let idx = sample_indices(&mut rng, data.n(), cfg.batch_size);
            let batch: Vec<&[T]> = idx.iter().map(|i| data.point(i)).collect();
            let z = generator.draw_latents(cfg.batch_size, &mut rng);
            let fake = generator.push_forward(&z)?;
            objective = critic_step(&mut critic, &mut critic_opt, &batch, &fake, cfg.k_blocks, cfg)
                .map_err(|e| diverged(step + 1, e))?;
        }

        let mut rng = rng_for_stream(cfg.seed, GENERATOR_STREAM_BASE + step as u64);
        let z = generator.draw_latents(cfg.batch_size, &mut rng);
        let loss = generator.loss(&critic, &z)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: step + 1, detail: format!("generator loss {loss}") });
        }
        let grad = generator.loss_gradient(&critic, &z)?;
        let update = gen_opt.step(&grad)?;
        apply_update(generator.params_mut(), &update, lr, false)?;
        if !generator.params().is_finite() {
            return Err(Error::Diverged { iteration: step + 1, detail: "generator parameters".into() });
        }
        trace.push(GanTracePoint {
            generator_step: step + 1,
            critic_objective: objective.to_f64_lossy(),
            generator_loss: loss.to_f64_lossy(),
        });
        observe(step + 1, &generator)?;
    }
    let report = GanReport { trace, config: cfg.clone(), wall_time: start.elapsed().as_secs_f64(), critic };
    Ok((generator, report))
}

/// Baseline weight-clipped WGAN: the same loop with a single block.
pub fn train_wgan<T: Real>(data: &Sample<T>, cfg: &GanConfig) -> Result<(Generator<T>, GanReport<T>)> {
    train_momwgan(data, &GanConfig { k_blocks: 1, ..cfg.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorScores {
    /// Distance between generated mean and inlier mean.
    pub mean_error: f64,
    /// Exact W1 between equal-size subsamples (at most 500) of generated
    /// points and inliers.
    pub w1_to_inliers: f64,
}

pub const SCORE_SUBSAMPLE: usize = 500;

pub fn score_generator<T: Real>(
    generator: &Generator<T>,
    reference_inliers: &Sample<T>,
    n_gen: usize,
    seed: u64,
) -> Result<GeneratorScores> {
    if n_gen < 100 {
        return Err(Error::invalid(format!("n_gen must be at least 100, got {n_gen}")));
    }
    if generator.output_dim() != reference_inliers.d() {
        return Err(Error::DimensionMismatch { expected: reference_inliers.d(), got: generator.output_dim() });
    }
    let generated = generator.generate(n_gen, derive_seed(seed, 1))?;
    let gm = generated.mean();
    let rm = reference_inliers.mean();
    let mean_error = gm
        .iter()
        .zip(&rm)
        .map(|(a, b)| (a.to_f64_lossy() - b.to_f64_lossy()).powi(2))
        .sum::<f64>()
        .sqrt();

    let size = SCORE_SUBSAMPLE.min(n_gen).min(reference_inliers.n());
    let mut rng = rng_from_seed(derive_seed(seed, 2));
    let gi = sample_indices(&mut rng, n_gen, size).into_vec();
    let ri = sample_indices(&mut rng, reference_inliers.n(), size).into_vec();
    let w1 = exact_w1(&generated.select(&gi)?, &reference_inliers.select(&ri)?)?;
    Ok(GeneratorScores { mean_error, w1_to_inliers: w1.to_f64_lossy() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_generator(c: [f64; 2]) -> Generator<f64> {
        let shape = MlpShape::new(2, 1, 2);
        let mut p = ParamVec::zeros(shape);
        let n = p.values().len();
        p.values_mut()[n - 2] = c[0];
        p.values_mut()[n - 1] = c[1];
        Generator::from_mlp(Mlp::from_params(p))
    }

    #[test]
    fn constant_generator_mean_error() {
        let g = constant_generator([1.0, 2.0]);
        let inl = Sample::clean(vec![0.0, 0.0, 2.0, 2.0, 1.0, -1.0, -1.0, 3.0], 2).unwrap();
        let s = score_generator(&g, &inl, 100, 3).unwrap();
        let m = inl.mean();
        let expected = ((1.0 - m[0]).powi(2) + (2.0 - m[1]).powi(2)).sqrt();
        assert!((s.mean_error - expected).abs() < 1e-12);
    }

    #[test]
    fn single_block_is_baseline_wgan() {
        let data = crate::data::generate_sample::<f64>(
            &crate::data::InlierSpec::gaussian(vec![5.0, 5.0], 200),
            &crate::data::ContaminationSpec::isolated(2, 0.1),
            4,
        )
        .unwrap();
        let cfg = GanConfig { max_generator_steps: 5, batch_size: 16, n_critic: 2, seed: 9, ..Default::default() };
        let (g1, r1) = train_momwgan(&data, &cfg).unwrap();
        let (g2, r2) = train_wgan(&data, &cfg).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(r1.trace, r2.trace);
    }

    #[test]
    fn critic_stays_feasible() {
        let data = crate::data::generate_sample::<f64>(
            &crate::data::InlierSpec::gaussian(vec![5.0, 5.0], 100),
            &crate::data::ContaminationSpec::none(),
            1,
        )
        .unwrap();
        for steps in [1, 3, 7] {
            let cfg = GanConfig {
                max_generator_steps: steps,
                batch_size: 20,
                k_blocks: 4,
                lr: 1e-2,
                ..Default::default()
            };
            let (_, r) = train_momwgan(&data, &cfg).unwrap();
            assert!(r.critic.max_abs_weight() <= 0.01);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = GanConfig { batch_size: 3, k_blocks: 4, ..Default::default() };
        assert!(cfg.validate(100).is_err());
        let cfg = GanConfig { batch_size: 200, ..Default::default() };
        assert!(cfg.validate(100).is_err());
        assert!(GanConfig::default().validate(100).is_ok());
        let g = constant_generator([0.0, 0.0]);
        let inl = Sample::clean(vec![0.0; 8], 2).unwrap();
        assert!(score_generator(&g, &inl, 99, 0).is_err());
    }
}
