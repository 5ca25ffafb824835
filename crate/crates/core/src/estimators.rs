//! Median-of-Means and Median-of-U-statistics estimators.
//!
//! Every estimator returns the selected (median) block next to the value:
//! the gradient-based trainers differentiate through exactly that block.

use std::collections::BTreeMap;

use crate::blocking::{
    assign_blocks_with, assign_pair_blocks_with, median_index, BlockAssignment, BlockScheme, PairAssignment,
    PairBlock, PairScheme,
};
use crate::critic::CriticNet;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::scalar::{gathered_mean, pairwise_sum, Real};

/// Statistic of one block: the mean of the evaluated function or kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockStatistic<T> {
    /// `(t, 0)` for single-sample blocks, `(k, l)` for grid pair blocks,
    /// `(t, t)` for diagonal ones.
    pub block_index: (usize, usize),
    pub value: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomEstimate<T> {
    pub value: T,
    pub median_block: Vec<usize>,
    pub block_stats: Vec<BlockStatistic<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MouEstimate<T> {
    pub value: T,
    pub median_block: Vec<(usize, usize)>,
    pub median_coords: (usize, usize),
    pub block_stats: Vec<BlockStatistic<T>>,
}

fn check_finite<T: Real>(values: &[T], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what} at point {i}"))),
        None => Ok(()),
    }
}

/// Median of block means of precomputed per-point values.
pub fn mom_on_blocks<T: Real>(values: &[T], blocks: &BlockAssignment) -> Result<MomEstimate<T>> {
    check_finite(values, "function value")?;
    let means = blocks.block_means(values);
    let med = median_index(&means)?;
    Ok(MomEstimate {
        value: means[med],
        median_block: blocks.blocks[med].clone(),
        block_stats: means
            .iter()
            .enumerate()
            .map(|(t, &value)| BlockStatistic { block_index: (t, 0), value })
            .collect(),
    })
}

/// MoM estimate of `E[f(X)]` over a freshly shuffled partition into `k` blocks.
pub fn mom_estimate<T: Real, F>(sample: &Sample<T>, f: F, k: usize, seed: u64) -> Result<MomEstimate<T>>
where
    F: Fn(&[T]) -> T,
{
    let blocks = assign_blocks_with(sample.n(), BlockScheme::Partition { k }, &mut rng_from_seed(seed))?;
    let values: Vec<T> = sample.points().map(f).collect();
    mom_on_blocks(&values, &blocks)
}

/// Which pair blocks a MoU estimate takes the median over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum MouScheme {
    Grid,
    Diagonal,
    /// `k_x` blocks of `floor(n/k_x) * floor(m/k_y)` random pairs each.
    RandomizedPairs,
}

impl MouScheme {
    pub fn pair_scheme(self, n: usize, m: usize, k_x: usize, k_y: usize) -> Result<PairScheme> {
        if k_x == 0 || k_y == 0 || k_x > n || k_y > m {
            return Err(Error::invalid(format!(
                "block counts must satisfy 1 <= k_x <= n and 1 <= k_y <= m (k_x = {k_x}, k_y = {k_y}, n = {n}, m = {m})"
            )));
        }
        match self {
            MouScheme::Grid => Ok(PairScheme::Grid { k_x, k_y }),
            MouScheme::Diagonal => {
                if k_x != k_y {
                    return Err(Error::invalid(format!("diagonal blocks need k_x = k_y, got {k_x} and {k_y}")));
                }
                Ok(PairScheme::Diagonal { k: k_x })
            }
            MouScheme::RandomizedPairs => {
                Ok(PairScheme::RandomizedPairs { k: k_x, pairs_per_block: (n / k_x) * (m / k_y) })
            }
        }
    }
}

/// Median over pair blocks of `1/|block| sum h(X_i, Y_j)`.
pub fn mou_on_blocks<T: Real, H>(
    x: &Sample<T>,
    y: &Sample<T>,
    h: H,
    blocks: &PairAssignment,
) -> Result<MouEstimate<T>>
where
    H: Fn(&[T], &[T]) -> T,
{
    if blocks.is_empty() {
        return Err(Error::invalid("empty block set"));
    }
    let mut buf = Vec::new();
    let mut means = Vec::with_capacity(blocks.len());
    for block in blocks.blocks() {
        buf.clear();
        buf.extend(block.pairs().map(|(i, j)| h(x.point(i), y.point(j))));
        check_finite(&buf, "kernel value")?;
        means.push(pairwise_sum(&buf) / T::of_usize(buf.len()));
    }
    finish_mou(blocks, means)
}

fn finish_mou<T: Real>(blocks: &PairAssignment, means: Vec<T>) -> Result<MouEstimate<T>> {
    let med = median_index(&means)?;
    Ok(MouEstimate {
        value: means[med],
        median_block: blocks.block(med).to_vec(),
        median_coords: blocks.block_coords(med),
        block_stats: means
            .iter()
            .enumerate()
            .map(|(t, &value)| BlockStatistic { block_index: blocks.block_coords(t), value })
            .collect(),
    })
}

pub fn mou_estimate<T: Real, H>(
    x: &Sample<T>,
    y: &Sample<T>,
    h: H,
    k_x: usize,
    k_y: usize,
    scheme: MouScheme,
    seed: u64,
) -> Result<MouEstimate<T>>
where
    H: Fn(&[T], &[T]) -> T,
{
    let pair_scheme = scheme.pair_scheme(x.n(), y.n(), k_x, k_y)?;
    let blocks = assign_pair_blocks_with(x.n(), y.n(), pair_scheme, &mut rng_from_seed(seed))?;
    mou_on_blocks(x, y, h, &blocks)
}

/// Block statistic of `h(x, y) = phi(x) - phi(y)` from per-point values.
/// For product blocks the double sum factorises into a difference of means.
fn separable_block_mean<T: Real>(phi_x: &[T], phi_y: &[T], block: PairBlock<'_>) -> T {
    match block {
        PairBlock::Product { x, y } => gathered_mean(phi_x, x) - gathered_mean(phi_y, y),
        PairBlock::List(pairs) => {
            let terms: Vec<T> = pairs.iter().map(|&(i, j)| phi_x[i] - phi_y[j]).collect();
            pairwise_sum(&terms) / T::of_usize(terms.len())
        }
    }
}

/// Which estimator of the 1-Wasserstein dual objective to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EstimatorSpec {
    /// `MoM_X[phi] - MoM_Y[phi]` with independent blockings of each sample.
    Mom { x: BlockScheme, y: BlockScheme },
    /// Median over pair blocks of `phi(X_i) - phi(Y_j)`.
    Mou(PairScheme),
}

impl EstimatorSpec {
    pub fn mom(k_x: usize, k_y: usize) -> Self {
        EstimatorSpec::Mom { x: BlockScheme::Partition { k: k_x }, y: BlockScheme::Partition { k: k_y } }
    }

    pub fn mou(k_x: usize, k_y: usize) -> Self {
        EstimatorSpec::Mou(PairScheme::Grid { k_x, k_y })
    }

    pub fn mou_diag(k: usize) -> Self {
        EstimatorSpec::Mou(PairScheme::Diagonal { k })
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            EstimatorSpec::Mom { .. } => EstimatorKind::Mom,
            EstimatorSpec::Mou(PairScheme::Grid { .. }) => EstimatorKind::Mou,
            EstimatorSpec::Mou(PairScheme::Diagonal { .. }) => EstimatorKind::MouDiag,
            EstimatorSpec::Mou(_) => EstimatorKind::MouRandomized,
        }
    }

    /// Number of blocks the `X` sample is cut into; sets the epoch length.
    pub fn k_x(&self) -> usize {
        match *self {
            EstimatorSpec::Mom { x, .. } => x.k(),
            EstimatorSpec::Mou(PairScheme::Grid { k_x, .. }) => k_x,
            EstimatorSpec::Mou(PairScheme::Diagonal { k })
            | EstimatorSpec::Mou(PairScheme::RandomizedBlocks { k, .. })
            | EstimatorSpec::Mou(PairScheme::RandomizedPairs { k, .. }) => k,
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        match *self {
            EstimatorSpec::Mom { x, y } => {
                x.validate(n)?;
                y.validate(m)
            }
            EstimatorSpec::Mou(PairScheme::Diagonal { k }) => {
                BlockScheme::Partition { k }.validate(n)?;
                BlockScheme::Partition { k }.validate(m)
            }
            EstimatorSpec::Mou(PairScheme::Grid { k_x, k_y }) => {
                BlockScheme::Partition { k: k_x }.validate(n)?;
                BlockScheme::Partition { k: k_y }.validate(m)
            }
            EstimatorSpec::Mou(PairScheme::RandomizedBlocks { k, block_size_x, block_size_y }) => {
                BlockScheme::RandomizedSwor { k, block_size: block_size_x }.validate(n)?;
                BlockScheme::RandomizedSwor { k, block_size: block_size_y }.validate(m)
            }
            EstimatorSpec::Mou(PairScheme::RandomizedPairs { k, pairs_per_block }) => {
                if k == 0 || pairs_per_block == 0 || pairs_per_block > n * m {
                    return Err(Error::invalid("randomized pairs need k >= 1 and 1 <= pairs <= n * m"));
                }
                Ok(())
            }
        }
    }

    /// Draws this iteration's blocks.
    pub fn sample_blocks(&self, n: usize, m: usize, rng: &mut Rng) -> Result<Blocks> {
        match *self {
            EstimatorSpec::Mom { x, y } => Ok(Blocks::Separate {
                x: assign_blocks_with(n, x, rng)?,
                y: assign_blocks_with(m, y, rng)?,
            }),
            EstimatorSpec::Mou(scheme) => Ok(Blocks::Pairs(assign_pair_blocks_with(n, m, scheme, rng)?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum EstimatorKind {
    Mom,
    Mou,
    MouDiag,
    MouRandomized,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Mom => "mom",
            EstimatorKind::Mou => "mou",
            EstimatorKind::MouDiag => "mou-diag",
            EstimatorKind::MouRandomized => "mou-randomized",
        })
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mom" => Ok(EstimatorKind::Mom),
            "mou" => Ok(EstimatorKind::Mou),
            "mou-diag" | "moudiag" => Ok(EstimatorKind::MouDiag),
            "mou-randomized" | "mou-rand" => Ok(EstimatorKind::MouRandomized),
            _ => Err(Error::invalid(format!("unknown estimator {s:?}"))),
        }
    }
}

impl EstimatorKind {
    /// Estimator with `K_X = K_Y = k`.
    pub fn with_k(self, k: usize, n: usize, m: usize) -> EstimatorSpec {
        match self {
            EstimatorKind::Mom => EstimatorSpec::mom(k, k),
            EstimatorKind::Mou => EstimatorSpec::mou(k, k),
            EstimatorKind::MouDiag => EstimatorSpec::mou_diag(k),
            EstimatorKind::MouRandomized => EstimatorSpec::Mou(PairScheme::RandomizedPairs {
                k,
                pairs_per_block: ((n / k.max(1)) * (m / k.max(1))).max(1),
            }),
        }
    }
}

/// Blocks drawn for one evaluation of the dual objective.
#[derive(Clone, Debug, PartialEq)]
pub enum Blocks {
    Separate { x: BlockAssignment, y: BlockAssignment },
    Pairs(PairAssignment),
}

/// The block(s) attaining the median.
#[derive(Clone, Debug, PartialEq)]
pub enum MedianBlocks {
    /// MoM: the median block of `X` and, independently, of `Y`.
    Separate { x: Vec<usize>, y: Vec<usize> },
    /// A product pair block `x x y`, at grid coordinates `coords`.
    Product { x: Vec<usize>, y: Vec<usize>, coords: (usize, usize) },
    /// An explicit list of pairs.
    Pairs(Vec<(usize, usize)>),
}

impl MedianBlocks {
    /// Per-point weights `(X weights, Y weights)` such that the objective
    /// restricted to the median block(s) equals
    /// `sum_i wx_i phi(X_i) + sum_j wy_j phi(Y_j)`.
    pub fn point_weights<T: Real>(&self) -> (Vec<(usize, T)>, Vec<(usize, T)>) {
        match self {
            MedianBlocks::Separate { x, y } | MedianBlocks::Product { x, y, .. } => {
                let wx = T::one() / T::of_usize(x.len());
                let wy = -T::one() / T::of_usize(y.len());
                (x.iter().map(|&i| (i, wx)).collect(), y.iter().map(|&j| (j, wy)).collect())
            }
            MedianBlocks::Pairs(pairs) => {
                let mut cx: BTreeMap<usize, usize> = BTreeMap::new();
                let mut cy: BTreeMap<usize, usize> = BTreeMap::new();
                for &(i, j) in pairs {
                    *cx.entry(i).or_default() += 1;
                    *cy.entry(j).or_default() += 1;
                }
                let p = T::of_usize(pairs.len());
                (
                    cx.into_iter().map(|(i, c)| (i, T::of_usize(c) / p)).collect(),
                    cy.into_iter().map(|(j, c)| (j, -T::of_usize(c) / p)).collect(),
                )
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualValue<T> {
    pub value: T,
    pub median_blocks: MedianBlocks,
}

/// Objective value on given blocks from per-point critic values.
pub fn dual_objective_on_blocks<T: Real>(phi_x: &[T], phi_y: &[T], blocks: &Blocks) -> Result<DualValue<T>> {
    check_finite(phi_x, "critic value on X")?;
    check_finite(phi_y, "critic value on Y")?;
    match blocks {
        Blocks::Separate { x, y } => {
            let mx = mom_on_blocks(phi_x, x)?;
            let my = mom_on_blocks(phi_y, y)?;
            Ok(DualValue {
                value: mx.value - my.value,
                median_blocks: MedianBlocks::Separate { x: mx.median_block, y: my.median_block },
            })
        }
        Blocks::Pairs(pairs) => {
            if pairs.is_empty() {
                return Err(Error::invalid("empty block set"));
            }
            let means: Vec<T> = pairs.blocks().map(|b| separable_block_mean(phi_x, phi_y, b)).collect();
            let med = median_index(&means)?;
            let median_blocks = match pairs.block(med) {
                PairBlock::Product { x, y } => {
                    MedianBlocks::Product { x: x.to_vec(), y: y.to_vec(), coords: pairs.block_coords(med) }
                }
                PairBlock::List(p) => MedianBlocks::Pairs(p.to_vec()),
            };
            Ok(DualValue { value: means[med], median_blocks })
        }
    }
}

/// MoM / MoU estimate of `E_mu[phi] - E_nu[phi]` for the critic `phi`; its
/// supremum over critics is the robust Wasserstein estimate.
pub fn dual_objective<T: Real>(
    x: &Sample<T>,
    y: &Sample<T>,
    critic: &CriticNet<T>,
    estimator: &EstimatorSpec,
    seed: u64,
) -> Result<DualValue<T>> {
    estimator.validate(x.n(), y.n())?;
    let blocks = estimator.sample_blocks(x.n(), y.n(), &mut rng_from_seed(seed))?;
    let phi_x = critic.evaluate(x)?;
    let phi_y = critic.evaluate(y)?;
    dual_objective_on_blocks(&phi_x, &phi_y, &blocks)
}
