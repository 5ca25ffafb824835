//! One-hidden-layer ReLU perceptron with hand-written backpropagation.
//!
//! Parameters live in one flat vector laid out as `w1 | b1 | w2 | b2` with
//! `w1: hidden x input`, `w2: output x hidden`, both row-major. Optimizers and
//! clipping work on the flat vector directly.

use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpShape {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        MlpShape { input, hidden, output }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.input
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input;
        s..s + self.hidden
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input + self.hidden;
        s..s + self.output * self.hidden
    }

    fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.input + self.hidden + self.output * self.hidden;
        s..s + self.output
    }

    /// True for entries of a weight matrix, false for biases.
    pub fn is_weight(&self, flat_index: usize) -> bool {
        self.w1_range().contains(&flat_index) || self.w2_range().contains(&flat_index)
    }
}

/// Flat parameter-shaped vector: network weights or a gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVec<T> {
    shape: MlpShape,
    values: Vec<T>,
}

impl<T: Real> ParamVec<T> {
    pub fn zeros(shape: MlpShape) -> Self {
        ParamVec { shape, values: vec![T::zero(); shape.param_count()] }
    }

    pub fn from_values(shape: MlpShape, values: Vec<T>) -> Result<Self> {
        if values.len() != shape.param_count() {
            return Err(Error::DimensionMismatch { expected: shape.param_count(), got: values.len() });
        }
        Ok(ParamVec { shape, values })
    }

    pub fn shape(&self) -> MlpShape {
        self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn w1(&self) -> &[T] {
        &self.values[self.shape.w1_range()]
    }

    pub fn b1(&self) -> &[T] {
        &self.values[self.shape.b1_range()]
    }

    pub fn w2(&self) -> &[T] {
        &self.values[self.shape.w2_range()]
    }

    pub fn b2(&self) -> &[T] {
        &self.values[self.shape.b2_range()]
    }

    pub fn scale(&mut self, a: T) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn check_congruent(&self, other: &ParamVec<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch {
                expected: self.shape.param_count(),
                got: other.shape.param_count(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Scratch space for the forward pass.
#[derive(Clone, Debug, Default)]
pub struct Workspace<T> {
    pre: Vec<T>,
    act: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    params: ParamVec<T>,
}

impl<T: Real> Mlp<T> {
    pub fn from_params(params: ParamVec<T>) -> Self {
        Mlp { params }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        Mlp { params: ParamVec::zeros(shape) }
    }

    /// Matrices uniform on `[-weight_bound, weight_bound]`, biases uniform on
    /// `[-bias_bound, bias_bound]` (zero when `bias_bound == 0`).
    pub fn init_uniform(shape: MlpShape, weight_bound: f64, bias_bound: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut params = ParamVec::zeros(shape);
        let w = (weight_bound > 0.0).then(|| Uniform::new_inclusive(-weight_bound, weight_bound));
        let b = (bias_bound > 0.0).then(|| Uniform::new_inclusive(-bias_bound, bias_bound));
        for (i, v) in params.values.iter_mut().enumerate() {
            let dist = if shape.is_weight(i) { &w } else { &b };
            if let Some(dist) = dist {
                *v = T::of(dist.sample(&mut rng));
            }
        }
        Mlp { params }
    }

    pub fn shape(&self) -> MlpShape {
        self.params.shape
    }

    pub fn params(&self) -> &ParamVec<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVec<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamVec<T> {
        self.params
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.shape().input {
            return Err(Error::DimensionMismatch { expected: self.shape().input, got: x.len() });
        }
        Ok(())
    }

    fn hidden_pass(&self, x: &[T], ws: &mut Workspace<T>) {
        let s = self.shape();
        let w1 = self.params.w1();
        let b1 = self.params.b1();
        ws.pre.clear();
        ws.act.clear();
        for h in 0..s.hidden {
            let row = &w1[h * s.input..(h + 1) * s.input];
            let mut z = b1[h];
            for (&w, &xi) in row.iter().zip(x) {
                z += w * xi;
            }
            ws.pre.push(z);
            ws.act.push(z.max(T::zero()));
        }
    }

    /// `w2 ReLU(w1 x + b1) + b2`, written into `out`.
    pub fn forward_into(&self, x: &[T], ws: &mut Workspace<T>, out: &mut [T]) -> Result<()> {
        self.check_input(x)?;
        let s = self.shape();
        if out.len() != s.output {
            return Err(Error::DimensionMismatch { expected: s.output, got: out.len() });
        }
        self.hidden_pass(x, ws);
        let w2 = self.params.w2();
        let b2 = self.params.b2();
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &w2[o * s.hidden..(o + 1) * s.hidden];
            let mut acc = b2[o];
            for (&w, &a) in row.iter().zip(&ws.act) {
                acc += w * a;
            }
            *slot = acc;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.shape().output];
        self.forward_into(x, &mut Workspace::default(), &mut out)?;
        Ok(out)
    }

    /// Backpropagates `cotangent` (d loss / d output) through the network at
    /// input `x`: adds `scale * d loss / d params` into `grad` and returns
    /// `d loss / d x`. The ReLU derivative at 0 is taken as 0.
    pub fn backward_accumulate(
        &self,
        x: &[T],
        cotangent: &[T],
        scale: T,
        grad: &mut ParamVec<T>,
        ws: &mut Workspace<T>,
    ) -> Result<Vec<T>> {
        self.check_input(x)?;
        let s = self.shape();
        if cotangent.len() != s.output {
            return Err(Error::DimensionMismatch { expected: s.output, got: cotangent.len() });
        }
        self.params.check_congruent(grad)?;
        self.hidden_pass(x, ws);
        let w1 = self.params.w1();
        let w2 = self.params.w2();

        // d loss / d pre-activation, one entry per hidden unit
        let mut delta = vec![T::zero(); s.hidden];
        {
            let g = &mut grad.values;
            let w2_off = s.w2_range().start;
            let b2_off = s.b2_range().start;
            for (o, &c) in cotangent.iter().enumerate() {
                let sc = scale * c;
                g[b2_off + o] += sc;
                for h in 0..s.hidden {
                    g[w2_off + o * s.hidden + h] += sc * ws.act[h];
                    delta[h] += c * w2[o * s.hidden + h];
                }
            }
            let b1_off = s.b1_range().start;
            for h in 0..s.hidden {
                if ws.pre[h] <= T::zero() {
                    delta[h] = T::zero();
                    continue;
                }
                let sd = scale * delta[h];
                g[b1_off + h] += sd;
                for j in 0..s.input {
                    g[h * s.input + j] += sd * x[j];
                }
            }
        }
        let mut dx = vec![T::zero(); s.input];
        for h in 0..s.hidden {
            if delta[h] == T::zero() {
                continue;
            }
            for j in 0..s.input {
                dx[j] += delta[h] * w1[h * s.input + j];
            }
        }
        Ok(dx)
    }

    /// Smallest hidden pre-activation magnitude at `x`, for finite-difference
    /// tests that must stay away from ReLU kinks.
    pub fn min_abs_preactivation(&self, x: &[T]) -> Result<T> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        self.hidden_pass(x, &mut ws);
        Ok(ws.pre.iter().fold(T::infinity(), |m, z| m.min(z.abs())))
    }

    /// Largest singular value of `w1` times that of `w2`. ReLU is
    /// 1-Lipschitz, so this bounds the network's Lipschitz constant.
    pub fn lipschitz_bound(&self) -> T {
        let s = self.shape();
        spectral_norm(self.params.w1(), s.hidden, s.input) * spectral_norm(self.params.w2(), s.output, s.hidden)
    }
}

/// Spectral norm of a row-major `rows x cols` matrix, from the eigenvalues of
/// the smaller Gram matrix computed with cyclic Jacobi rotations.
pub fn spectral_norm<T: Real>(a: &[T], rows: usize, cols: usize) -> T {
    if rows == 0 || cols == 0 {
        return T::zero();
    }
    let (dim, gram_entry): (usize, Box<dyn Fn(usize, usize) -> T>) = if cols <= rows {
        (cols, Box::new(|p, q| (0..rows).map(|r| a[r * cols + p] * a[r * cols + q]).sum()))
    } else {
        (rows, Box::new(|p, q| (0..cols).map(|c| a[p * cols + c] * a[q * cols + c]).sum()))
    };
    let mut g: Vec<T> = (0..dim * dim).map(|i| gram_entry(i / dim, i % dim)).collect();
    jacobi_eigenvalues(&mut g, dim).into_iter().fold(T::zero(), T::max).max(T::zero()).sqrt()
}

fn jacobi_eigenvalues<T: Real>(a: &mut [T], n: usize) -> Vec<T> {
    let two = T::of(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n).flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        let diag: T = (0..n).map(|p| a[p * n + p] * a[p * n + p]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|p| a[p * n + p]).collect()
}

/// JSON form of a network: named arrays, matrices as nested rows.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MlpRecord {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub activation: String,
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

impl<T: Real> From<&Mlp<T>> for MlpRecord {
    fn from(net: &Mlp<T>) -> Self {
        let s = net.shape();
        let to64 = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
        let rows = |v: &[T], cols: usize| v.chunks(cols.max(1)).map(to64).collect::<Vec<_>>();
        MlpRecord {
            input: s.input,
            hidden: s.hidden,
            output: s.output,
            activation: "relu".into(),
            w1: rows(net.params.w1(), s.input),
            b1: to64(net.params.b1()),
            w2: rows(net.params.w2(), s.hidden),
            b2: to64(net.params.b2()),
        }
    }
}

impl<T: Real> TryFrom<MlpRecord> for Mlp<T> {
    type Error = Error;

    fn try_from(r: MlpRecord) -> Result<Self> {
        if r.activation != "relu" {
            return Err(Error::Parse(format!("unsupported activation {:?}", r.activation)));
        }
        let shape = MlpShape::new(r.input, r.hidden, r.output);
        let mut values = Vec::with_capacity(shape.param_count());
        let check = |rows: &[Vec<f64>], n_rows: usize, n_cols: usize, name: &str| -> Result<()> {
            if rows.len() != n_rows || rows.iter().any(|row| row.len() != n_cols) {
                return Err(Error::Parse(format!("{name} must be {n_rows} x {n_cols}")));
            }
            Ok(())
        };
        check(&r.w1, r.hidden, r.input, "w1")?;
        check(&r.w2, r.output, r.hidden, "w2")?;
        if r.b1.len() != r.hidden || r.b2.len() != r.output {
            return Err(Error::Parse("bias length does not match layer width".into()));
        }
        values.extend(r.w1.iter().flatten().map(|&v| T::of(v)));
        values.extend(r.b1.iter().map(|&v| T::of(v)));
        values.extend(r.w2.iter().flatten().map(|&v| T::of(v)));
        values.extend(r.b2.iter().map(|&v| T::of(v)));
        let params = ParamVec::from_values(shape, values)?;
        if !params.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Mlp { params })
    }
}
