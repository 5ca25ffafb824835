//! Weight-clipped critic `phi_w: R^d -> R`, the parametric stand-in for the
//! unit ball of Lipschitz functions.

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::mlp::{Mlp, MlpRecord, MlpShape, ParamVec, Workspace};
use crate::scalar::Real;

/// Gradient of a scalar objective with respect to critic parameters.
pub type CriticGradient<T> = ParamVec<T>;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_CLIP: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticNet<T> {
    net: Mlp<T>,
    clip_c: T,
    clip_biases: bool,
}

impl<T: Real> CriticNet<T> {
    /// Matrices uniform on `[-clip_c, clip_c]`, biases zero.
    pub fn init(d: usize, hidden: usize, clip_c: T, seed: u64) -> Result<Self> {
        check_clip(clip_c)?;
        if d == 0 || hidden == 0 {
            return Err(Error::invalid("critic needs d >= 1 and hidden >= 1"));
        }
        let net = Mlp::init_uniform(MlpShape::new(d, hidden, 1), clip_c.to_f64_lossy(), 0.0, seed);
        Ok(CriticNet { net, clip_c, clip_biases: false })
    }

    pub fn from_mlp(net: Mlp<T>, clip_c: T) -> Result<Self> {
        check_clip(clip_c)?;
        if net.shape().output != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: net.shape().output });
        }
        Ok(CriticNet { net, clip_c, clip_biases: false })
    }

    pub fn zeros(d: usize, hidden: usize, clip_c: T) -> Result<Self> {
        Self::from_mlp(Mlp::zeros(MlpShape::new(d, hidden, 1)), clip_c)
    }

    pub fn with_clip_biases(mut self, clip_biases: bool) -> Self {
        self.clip_biases = clip_biases;
        self
    }

    pub fn clip_biases(&self) -> bool {
        self.clip_biases
    }

    pub fn clip_c(&self) -> T {
        self.clip_c
    }

    pub fn d(&self) -> usize {
        self.net.shape().input
    }

    pub fn hidden(&self) -> usize {
        self.net.shape().hidden
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

    pub fn forward(&self, x: &[T]) -> Result<T> {
        let mut out = [T::zero()];
        self.net.forward_into(x, &mut Workspace::default(), &mut out)?;
        Ok(out[0])
    }

    /// `phi_w` at every point of the sample, in order.
    pub fn evaluate(&self, sample: &Sample<T>) -> Result<Vec<T>> {
        if sample.d() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: sample.d() });
        }
        let mut ws = Workspace::default();
        let mut out = [T::zero()];
        let mut values = Vec::with_capacity(sample.n());
        for p in sample.points() {
            self.net.forward_into(p, &mut ws, &mut out)?;
            values.push(out[0]);
        }
        Ok(values)
    }

    /// `sum_t weights[t] * grad_w phi_w(xs[t])`.
    pub fn grad_params(&self, xs: &[&[T]], weights: &[T]) -> Result<CriticGradient<T>> {
        if xs.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: weights.len() });
        }
        let mut grad = ParamVec::zeros(self.net.shape());
        let mut ws = Workspace::default();
        for (x, &w) in xs.iter().zip(weights) {
            self.net.backward_accumulate(x, &[T::one()], w, &mut grad, &mut ws)?;
        }
        Ok(grad)
    }

    /// Adds `weight * grad_w phi_w(x_i)` for each `(i, weight)` into `grad`.
    pub fn accumulate_grad(
        &self,
        sample: &Sample<T>,
        weighted: impl IntoIterator<Item = (usize, T)>,
        grad: &mut CriticGradient<T>,
    ) -> Result<()> {
        let mut ws = Workspace::default();
        for (i, w) in weighted {
            self.net.backward_accumulate(sample.point(i), &[T::one()], w, grad, &mut ws)?;
        }
        Ok(())
    }

    /// `d phi_w / d x`.
    pub fn input_gradient(&self, x: &[T]) -> Result<Vec<T>> {
        let mut scratch = ParamVec::zeros(self.net.shape());
        self.net.backward_accumulate(x, &[T::one()], T::zero(), &mut scratch, &mut Workspace::default())
    }

    /// Copy with every matrix entry clamped to `[-c, c]`; biases too when
    /// bias clipping is enabled.
    pub fn clip_weights(&self, c: T) -> Result<Self> {
        let mut out = self.clone();
        out.clip_in_place(c)?;
        Ok(out)
    }

    pub fn clip_in_place(&mut self, c: T) -> Result<()> {
        check_clip(c)?;
        let shape = self.net.shape();
        let clip_biases = self.clip_biases;
        for (i, v) in self.net.params_mut().values_mut().iter_mut().enumerate() {
            if clip_biases || shape.is_weight(i) {
                *v = v.max(-c).min(c);
            }
        }
        Ok(())
    }

    /// Largest absolute matrix entry.
    pub fn max_abs_weight(&self) -> T {
        let shape = self.net.shape();
        self.params()
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| shape.is_weight(*i))
            .fold(T::zero(), |m, (_, v)| m.max(v.abs()))
    }

    /// `||w2||_2 * ||w1||_2` (spectral norms).
    pub fn lipschitz_bound(&self) -> T {
        self.net.lipschitz_bound()
    }

    pub fn to_record(&self) -> CriticRecord {
        CriticRecord {
            clip_c: self.clip_c.to_f64_lossy(),
            clip_biases: self.clip_biases,
            net: MlpRecord::from(&self.net),
        }
    }

    pub fn from_record(record: CriticRecord) -> Result<Self> {
        let net = Mlp::try_from(record.net)?;
        Ok(Self::from_mlp(net, T::of(record.clip_c))?.with_clip_biases(record.clip_biases))
    }
}

fn check_clip<T: Real>(c: T) -> Result<()> {
    // `c + c` must stay finite so that `[-c, c]` can be sampled
    if !(c > T::zero() && (c + c).is_finite()) {
        return Err(Error::invalid(format!("clipping parameter must be positive and finite, got {c}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CriticRecord {
    pub clip_c: f64,
    pub clip_biases: bool,
    pub net: MlpRecord,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn unit_net(w1: [f64; 2], b1: f64, w2: f64, b2: f64) -> CriticNet<f64> {
        let p = ParamVec::from_values(MlpShape::new(2, 1, 1), vec![w1[0], w1[1], b1, w2, b2]).unwrap();
        CriticNet::from_mlp(Mlp::from_params(p), 10.0).unwrap()
    }

    #[test]
    fn forward_examples() {
        let zero = CriticNet::<f64>::zeros(2, 8, 0.01).unwrap();
        assert_eq!(zero.forward(&[3.0, 1.0]).unwrap(), 0.0);
        let net = unit_net([1.0, 0.0], 0.0, 1.0, 0.0);
        assert_eq!(net.forward(&[3.0, -4.0]).unwrap(), 3.0);
        assert_eq!(net.forward(&[-3.0, 7.0]).unwrap(), 0.0);
        assert!(matches!(net.forward(&[1.0, 2.0, 3.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_gradient_is_zero_and_linear_in_weights() {
        let net = CriticNet::<f64>::init(2, 16, 0.5, 3).unwrap();
        let g = net.grad_params(&[], &[]).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));

        let pts = [[0.2, -1.0], [1.5, 0.7], [-0.3, 0.4]];
        let xs: Vec<&[f64]> = pts.iter().map(|p| &p[..]).collect();
        let w = [0.5, -1.0, 2.0];
        let g1 = net.grad_params(&xs, &w).unwrap();
        let w3: Vec<f64> = w.iter().map(|v| v * -3.5).collect();
        let g3 = net.grad_params(&xs, &w3).unwrap();
        for (a, b) in g1.values().iter().zip(g3.values()) {
            assert!((a * -3.5 - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        assert!(net.grad_params(&xs, &w[..2]).is_err());
    }

    #[test]
    fn clipping_examples() {
        let net = unit_net([0.5, -0.2], 3.0, 0.005, -2.0);
        let c = net.clip_weights(0.01).unwrap();
        assert_eq!(c.params().w1(), &[0.01, -0.01]);
        assert_eq!(c.params().w2(), &[0.005]);
        assert_eq!(c.params().b1(), &[3.0]);
        assert_eq!(c.params().b2(), &[-2.0]);
        assert_eq!(c.clip_weights(0.01).unwrap(), c);
        let inside = CriticNet::<f64>::init(2, 8, 0.01, 1).unwrap();
        assert_eq!(inside.clip_weights(0.01).unwrap(), inside);
        assert!(net.clip_weights(0.0).is_err());
        assert!(net.clip_weights(-1.0).is_err());

        let with_bias = net.clone().with_clip_biases(true).clip_weights(0.01).unwrap();
        assert_eq!(with_bias.params().b1(), &[0.01]);
        assert_eq!(with_bias.params().b2(), &[-0.01]);
    }

    #[test]
    fn lipschitz_bound_examples() {
        assert_eq!(CriticNet::<f64>::zeros(2, 4, 1.0).unwrap().lipschitz_bound(), 0.0);
        let net = unit_net([3.0, 4.0], 0.0, 2.0, 0.0);
        assert!((net.lipschitz_bound() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_bound_dominates_empirical_slopes() {
        let mut rng = rng_from_seed(99);
        for seed in 0..20 {
            let net = CriticNet::<f64>::init(3, 12, 1.0, seed).unwrap();
            let bound = net.lipschitz_bound();
            for _ in 0..200 {
                let x: Vec<f64> = (0..3).map(|_| 3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
                let y: Vec<f64> = (0..3).map(|_| 3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
                let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let gap = (net.forward(&x).unwrap() - net.forward(&y).unwrap()).abs();
                assert!(gap <= bound * dist * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn clipped_bound_is_capped() {
        for seed in 0..10 {
            let c = 0.01;
            let (d, h) = (2usize, 64usize);
            let net = CriticNet::<f64>::init(d, h, 5.0, seed).unwrap().clip_weights(c).unwrap();
            let cap = c * ((h * d) as f64).sqrt() * c * (h as f64).sqrt();
            assert!(net.lipschitz_bound() <= cap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn record_round_trip() {
        let net = CriticNet::<f64>::init(2, 5, 0.02, 8).unwrap().with_clip_biases(true);
        let json = serde_json::to_string(&net.to_record()).unwrap();
        let back = CriticNet::<f64>::from_record(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(net, back);
    }

    fn fd_check(net: &CriticNet<f64>, x: &[f64]) -> Option<f64> {
        if net.mlp().min_abs_preactivation(x).unwrap() < 1e-4 {
            return None;
        }
        let g = net.grad_params(&[x], &[1.0]).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..g.values().len() {
            let mut p = net.clone();
            p.params_mut().values_mut()[i] += h;
            let mut m = net.clone();
            m.params_mut().values_mut()[i] -= h;
            let fd = (p.forward(x).unwrap() - m.forward(x).unwrap()) / (2.0 * h);
            let an = g.values()[i];
            let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
            worst = worst.max(err);
        }
        Some(worst)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_matches_central_differences(
            seed in any::<u64>(),
            x in prop::collection::vec(-3.0f64..3.0, 2),
        ) {
            let mut net = CriticNet::<f64>::init(2, 8, 1.0, seed).unwrap();
            // random biases so kinks are not all at the origin
            let shape = net.mlp().shape();
            let mut rng = rng_from_seed(seed ^ 1);
            for (i, v) in net.params_mut().values_mut().iter_mut().enumerate() {
                if !shape.is_weight(i) {
                    *v = Distribution::<f64>::sample(&StandardNormal, &mut rng);
                }
            }
            if let Some(err) = fd_check(&net, &x) {
                prop_assert!(err <= 1e-6, "relative error {err}");
            }
        }

        #[test]
        fn forward_is_homogeneous_in_output_weights(seed in any::<u64>(), lambda in -5.0f64..5.0) {
            let net = CriticNet::<f64>::init(2, 6, 1.0, seed).unwrap();
            let mut scaled = net.clone();
            let shape = net.mlp().shape();
            let n_w1b1 = shape.hidden * shape.input + shape.hidden;
            for v in &mut scaled.params_mut().values_mut()[n_w1b1..n_w1b1 + shape.hidden] {
                *v *= lambda;
            }
            let x = [0.7, -1.2];
            let a = net.forward(&x).unwrap() * lambda;
            let b = scaled.forward(&x).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
