//! Block construction for Median-of-Means and Median-of-U-statistics.
//!
//! Single-sample schemes ([`BlockScheme`]) cut `{0, .., n-1}` into blocks;
//! two-sample schemes ([`PairScheme`]) build blocks of index pairs `(i, j)`
//! with `i` indexing `X` and `j` indexing `Y`.

use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};
use crate::scalar::Real;

/// How one sample is split into blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BlockScheme {
    /// `k` disjoint blocks of size `floor(n / k)` after a shuffle; the last
    /// `n mod k` shuffled indices are dropped.
    Partition { k: usize },
    /// `k` blocks, each `block_size` distinct indices drawn without
    /// replacement. Different blocks may overlap.
    RandomizedSwor { k: usize, block_size: usize },
}

impl BlockScheme {
    pub fn k(&self) -> usize {
        match *self {
            BlockScheme::Partition { k } | BlockScheme::RandomizedSwor { k, .. } => k,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            BlockScheme::Partition { k } => {
                if k == 0 || k > n {
                    return Err(Error::invalid(format!("partition needs 1 <= k <= n, got k = {k}, n = {n}")));
                }
            }
            BlockScheme::RandomizedSwor { k, block_size } => {
                if k == 0 {
                    return Err(Error::invalid("randomized blocks need k >= 1"));
                }
                if block_size == 0 || block_size > n {
                    return Err(Error::invalid(format!(
                        "block size {block_size} must lie in [1, n = {n}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Realised blocks of one sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockAssignment {
    pub blocks: Vec<Vec<usize>>,
    pub scheme: BlockScheme,
    /// Indices left out because `n` is not a multiple of `k`.
    pub dropped: usize,
}

impl BlockAssignment {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Per-block means of precomputed per-point values.
    pub fn block_means<T: Real>(&self, values: &[T]) -> Vec<T> {
        self.blocks.iter().map(|b| crate::scalar::gathered_mean(values, b)).collect()
    }
}

pub fn assign_blocks(n: usize, scheme: BlockScheme, seed: u64) -> Result<BlockAssignment> {
    assign_blocks_with(n, scheme, &mut rng_from_seed(seed))
}

pub(crate) fn assign_blocks_with(n: usize, scheme: BlockScheme, rng: &mut Rng) -> Result<BlockAssignment> {
    scheme.validate(n)?;
    match scheme {
        BlockScheme::Partition { k } => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(rng);
            let size = n / k;
            let blocks = perm.chunks_exact(size).take(k).map(<[usize]>::to_vec).collect();
            Ok(BlockAssignment { blocks, scheme, dropped: n - k * size })
        }
        BlockScheme::RandomizedSwor { k, block_size } => {
            let blocks = (0..k).map(|_| index::sample(rng, n, block_size).into_vec()).collect();
            Ok(BlockAssignment { blocks, scheme, dropped: 0 })
        }
    }
}

/// Identity partition `[0..B), [B..2B), ...` without shuffling, for
/// deterministic tests and fixed-partition runs.
pub fn contiguous_partition(n: usize, k: usize) -> Result<BlockAssignment> {
    let scheme = BlockScheme::Partition { k };
    scheme.validate(n)?;
    let size = n / k;
    let blocks = (0..k).map(|b| (b * size..(b + 1) * size).collect()).collect();
    Ok(BlockAssignment { blocks, scheme, dropped: n - k * size })
}

/// How block pairs over `X x Y` are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PairScheme {
    /// Partition both samples into `k` blocks and pair block `t` of `X`
    /// with block `t` of `Y`.
    Diagonal { k: usize },
    /// Partition `X` into `k_x` and `Y` into `k_y` blocks; one pair block
    /// per `(k, l)`.
    Grid { k_x: usize, k_y: usize },
    /// Diagonal pairing of randomized (SWoR) blocks of each sample.
    RandomizedBlocks { k: usize, block_size_x: usize, block_size_y: usize },
    /// `k` blocks, each `pairs_per_block` distinct pairs drawn uniformly
    /// without replacement from the `n x m` grid (incomplete U-statistics).
    RandomizedPairs { k: usize, pairs_per_block: usize },
}

impl PairScheme {
    /// Number of pair blocks the scheme produces.
    pub fn block_count(&self) -> usize {
        match *self {
            PairScheme::Diagonal { k } | PairScheme::RandomizedBlocks { k, .. } | PairScheme::RandomizedPairs { k, .. } => k,
            PairScheme::Grid { k_x, k_y } => k_x * k_y,
        }
    }
}

/// Realised pair blocks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PairAssignment {
    /// Block `t` is `x.blocks[t] x y.blocks[t]` (same count on both sides).
    Diagonal { x: BlockAssignment, y: BlockAssignment },
    /// Block `(k, l)` is `x.blocks[k] x y.blocks[l]`, enumerated row-major
    /// as `k * y.len() + l`. Pairs are never materialised.
    Grid { x: BlockAssignment, y: BlockAssignment },
    /// Explicit pair lists.
    Pairs { blocks: Vec<Vec<(usize, usize)>> },
}

/// One pair block: either a product of index sets or an explicit list.
#[derive(Clone, Copy, Debug)]
pub enum PairBlock<'a> {
    Product { x: &'a [usize], y: &'a [usize] },
    List(&'a [(usize, usize)]),
}

impl PairBlock<'_> {
    pub fn len(&self) -> usize {
        match self {
            PairBlock::Product { x, y } => x.len() * y.len(),
            PairBlock::List(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iterates the `(i, j)` pairs of the block.
    pub fn pairs(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        match *self {
            PairBlock::Product { x, y } => Box::new(x.iter().flat_map(move |&i| y.iter().map(move |&j| (i, j)))),
            PairBlock::List(p) => Box::new(p.iter().copied()),
        }
    }

    pub fn to_vec(&self) -> Vec<(usize, usize)> {
        self.pairs().collect()
    }
}

impl PairAssignment {
    pub fn len(&self) -> usize {
        match self {
            PairAssignment::Diagonal { x, .. } => x.len(),
            PairAssignment::Grid { x, y } => x.len() * y.len(),
            PairAssignment::Pairs { blocks } => blocks.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, t: usize) -> PairBlock<'_> {
        match self {
            PairAssignment::Diagonal { x, y } => PairBlock::Product { x: &x.blocks[t], y: &y.blocks[t] },
            PairAssignment::Grid { x, y } => {
                let (k, l) = (t / y.len(), t % y.len());
                PairBlock::Product { x: &x.blocks[k], y: &y.blocks[l] }
            }
            PairAssignment::Pairs { blocks } => PairBlock::List(&blocks[t]),
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = PairBlock<'_>> + '_ {
        (0..self.len()).map(move |t| self.block(t))
    }

    /// `(k, l)` coordinates of block `t` for grid assignments, `(t, t)` for
    /// diagonal ones and `(t, 0)` for explicit pair lists.
    pub fn block_coords(&self, t: usize) -> (usize, usize) {
        match self {
            PairAssignment::Grid { y, .. } => (t / y.len(), t % y.len()),
            PairAssignment::Diagonal { .. } => (t, t),
            PairAssignment::Pairs { .. } => (t, 0),
        }
    }
}

pub fn assign_pair_blocks(n: usize, m: usize, scheme: PairScheme, seed: u64) -> Result<PairAssignment> {
    assign_pair_blocks_with(n, m, scheme, &mut rng_from_seed(seed))
}

/// X blocks are drawn before Y blocks from the same generator.
pub(crate) fn assign_pair_blocks_with(n: usize, m: usize, scheme: PairScheme, rng: &mut Rng) -> Result<PairAssignment> {
    match scheme {
        PairScheme::Diagonal { k } => {
            let x = assign_blocks_with(n, BlockScheme::Partition { k }, rng)?;
            let y = assign_blocks_with(m, BlockScheme::Partition { k }, rng)?;
            Ok(PairAssignment::Diagonal { x, y })
        }
        PairScheme::Grid { k_x, k_y } => {
            let x = assign_blocks_with(n, BlockScheme::Partition { k: k_x }, rng)?;
            let y = assign_blocks_with(m, BlockScheme::Partition { k: k_y }, rng)?;
            Ok(PairAssignment::Grid { x, y })
        }
        PairScheme::RandomizedBlocks { k, block_size_x, block_size_y } => {
            let x = assign_blocks_with(n, BlockScheme::RandomizedSwor { k, block_size: block_size_x }, rng)?;
            let y = assign_blocks_with(m, BlockScheme::RandomizedSwor { k, block_size: block_size_y }, rng)?;
            Ok(PairAssignment::Diagonal { x, y })
        }
        PairScheme::RandomizedPairs { k, pairs_per_block } => {
            if k == 0 {
                return Err(Error::invalid("randomized pairs need k >= 1"));
            }
            let grid = n.checked_mul(m).ok_or_else(|| Error::invalid("pair grid too large"))?;
            if pairs_per_block == 0 || pairs_per_block > grid {
                return Err(Error::invalid(format!(
                    "pairs per block {pairs_per_block} must lie in [1, n * m = {grid}]"
                )));
            }
            let blocks = (0..k)
                .map(|_| {
                    index::sample(rng, grid, pairs_per_block)
                        .into_iter()
                        .map(|c| (c / m, c % m))
                        .collect()
                })
                .collect();
            Ok(PairAssignment::Pairs { blocks })
        }
    }
}

/// `ceil(sqrt(2 tau) n)` clamped to `[1, n]`: enough blocks that outliers,
/// even if each sits in its own block, contaminate a minority of them.
pub fn recommended_k(n: usize, tau: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(0.0..0.5).contains(&tau) {
        return Err(Error::invalid(format!("tau = {tau} must lie in [0, 0.5)")));
    }
    let k = ((2.0 * tau).sqrt() * n as f64).ceil() as usize;
    Ok(k.clamp(1, n))
}

/// Contamination level of the pair grid when `X` and `Y` are both polluted:
/// `tau_x + tau_y - tau_x tau_y`.
pub fn combined_tau_tilde(tau_x: f64, tau_y: f64) -> Result<f64> {
    for t in [tau_x, tau_y] {
        if !(0.0..0.5).contains(&t) {
            return Err(Error::invalid(format!("tau = {t} must lie in [0, 0.5)")));
        }
    }
    Ok(tau_x + tau_y - tau_x * tau_y)
}

/// Index of the `ceil(K/2)`-th smallest value (1-based). When several
/// entries share that value the smallest index is returned. For even `K`
/// this is the lower median.
pub fn median_index<T: Real>(values: &[T]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty list"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("value at index {i}")));
    }
    let rank = values.len().div_ceil(2) - 1;
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.select_nth_unstable_by(rank, |&a, &b| {
        values[a].partial_cmp(&values[b]).expect("finite values are ordered").then(a.cmp(&b))
    });
    let med = values[order[rank]];
    Ok(values.iter().position(|&v| v == med).expect("median is an element"))
}

/// Value selected by [`median_index`].
pub fn median_value<T: Real>(values: &[T]) -> Result<T> {
    median_index(values).map(|i| values[i])
}
