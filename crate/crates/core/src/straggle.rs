//! Random model of straggling workers.
//!
//! Each incomplete matrix-vector product returns `T` rows, and the set of
//! returned rows is a uniformly random `T`-subset of `{0, .., N-1}`. All
//! randomness is drawn from a counter-based stream addressed by
//! [`SeedSpec`]: a ChaCha8 key derived from the master seed, the trial index as
//! the ChaCha stream id, and the iteration index as a block offset of `2^32`
//! words. A `(seed, trial, iteration)` triple therefore names one stream on
//! every platform, independent of thread scheduling.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trial index reserved for randomness that is shared by all trials of an
/// experiment (e.g. a random initial guess).
pub const SHARED_TRIAL: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
    pub iteration_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64, iteration_index: u64) -> Self {
        Self {
            master_seed,
            trial_index,
            iteration_index,
        }
    }

    /// Seed for the first iteration of a trial.
    pub fn trial(master_seed: u64, trial_index: u64) -> Self {
        Self::new(master_seed, trial_index, 0)
    }

    pub fn with_iteration(self, iteration_index: u64) -> Self {
        Self {
            iteration_index,
            ..self
        }
    }

    /// The random stream addressed by this triple.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trial_index);
        rng.set_word_pos(u128::from(self.iteration_index) << 32);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StraggleKind {
    /// `T` uniform on the integers of `[E[T] - w, E[T] + w]`, each draw clamped to `[1, N]`.
    UniformInterval,
    /// `T = round(E[T])` every time.
    Fixed,
    /// `T = N`: no stragglers.
    Full,
}

/// Distribution of the number of rows returned per product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StraggleDistribution {
    kind: StraggleKind,
    expected_t: f64,
    half_width: usize,
    n: usize,
}

impl StraggleDistribution {
    /// `expected_t` is the nominal centre of the law; it must lie in `[1, n]`.
    pub fn new(kind: StraggleKind, expected_t: f64, half_width: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let expected_t = if kind == StraggleKind::Full {
            n as f64
        } else {
            expected_t
        };
        if !(expected_t.is_finite() && expected_t >= 1.0 && expected_t <= n as f64) {
            return Err(Error::InvalidArgument(format!(
                "expected T = {expected_t} outside [1, {n}]"
            )));
        }
        Ok(Self {
            kind,
            expected_t,
            half_width,
            n,
        })
    }

    /// Distribution with nominal `E[T] = tau * n`.
    pub fn from_tau(kind: StraggleKind, tau: f64, half_width: usize, n: usize) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau = {tau} outside (0, 1]"
            )));
        }
        Self::new(kind, tau * n as f64, half_width, n)
    }

    pub fn full(n: usize) -> Result<Self> {
        Self::new(StraggleKind::Full, n as f64, 0, n)
    }

    pub fn fixed(t: usize, n: usize) -> Result<Self> {
        Self::new(StraggleKind::Fixed, t as f64, 0, n)
    }

    pub fn uniform_interval(expected_t: f64, half_width: usize, n: usize) -> Result<Self> {
        Self::new(StraggleKind::UniformInterval, expected_t, half_width, n)
    }

    pub fn kind(&self) -> StraggleKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// The nominal centre the law was built from (before rounding and clamping).
    pub fn nominal_t(&self) -> f64 {
        self.expected_t
    }

    fn clamp(&self, t: i64) -> usize {
        t.clamp(1, self.n as i64) as usize
    }

    fn centre(&self) -> i64 {
        self.expected_t.round() as i64
    }

    /// Unclamped integer interval `[lo, hi]` the uniform law draws from.
    fn raw_interval(&self) -> (i64, i64) {
        let c = self.centre();
        let w = self.half_width as i64;
        (c - w, c + w)
    }

    /// Probability mass function after clamping, in increasing `t`.
    pub fn pmf(&self) -> Vec<(usize, f64)> {
        match self.kind {
            StraggleKind::Full => vec![(self.n, 1.0)],
            StraggleKind::Fixed => vec![(self.clamp(self.centre()), 1.0)],
            StraggleKind::UniformInterval => {
                let (lo, hi) = self.raw_interval();
                let count = (hi - lo + 1) as f64;
                let mut pmf: Vec<(usize, f64)> = Vec::new();
                let mut weights: Vec<(usize, u64)> = Vec::new();
                for t in lo..=hi {
                    let t = self.clamp(t);
                    match weights.last_mut() {
                        Some((last, w)) if *last == t => *w += 1,
                        _ => weights.push((t, 1)),
                    }
                }
                pmf.extend(weights.into_iter().map(|(t, w)| (t, w as f64 / count)));
                pmf
            }
        }
    }

    /// Exact mean of the clamped law.
    pub fn expected_t(&self) -> f64 {
        match self.kind {
            StraggleKind::Full => self.n as f64,
            StraggleKind::Fixed => self.clamp(self.centre()) as f64,
            StraggleKind::UniformInterval => {
                let (lo, hi) = self.raw_interval();
                let total: i128 = (lo..=hi).map(|t| self.clamp(t) as i128).sum();
                total as f64 / (hi - lo + 1) as f64
            }
        }
    }

    /// Sampling ratio `E[T] / N` of the clamped law.
    pub fn tau(&self) -> f64 {
        self.expected_t() / self.n as f64
    }

    /// Draws `T` from an explicit generator.
    pub fn draw_t<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.kind {
            StraggleKind::Full => self.n,
            StraggleKind::Fixed => self.clamp(self.centre()),
            StraggleKind::UniformInterval => {
                let (lo, hi) = self.raw_interval();
                self.clamp(rng.random_range(lo..=hi))
            }
        }
    }
}

/// Sorted set of returned row indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RowMask {
    indices: Vec<usize>,
    n: usize,
}

impl RowMask {
    /// Validates that `indices` is strictly increasing, nonempty, and below `n`.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("row mask must be nonempty".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "row mask indices must be strictly increasing".into(),
            ));
        }
        if let Some(&index) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidMask { index, n });
        }
        Ok(Self { indices, n })
    }

    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            n,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn t(&self) -> usize {
        self.indices.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.n
    }

    pub fn contains(&self, row: usize) -> bool {
        self.indices.binary_search(&row).is_ok()
    }
}

/// Uniform `t`-subset of `{0, .., n-1}` by Floyd's algorithm: `t` draws, each
/// either a fresh index or, on collision, the current upper bound.
pub fn draw_mask<R: Rng + ?Sized>(t: usize, n: usize, rng: &mut R) -> Result<RowMask> {
    if t == 0 || t > n {
        return Err(Error::InvalidArgument(format!(
            "mask size {t} outside [1, {n}]"
        )));
    }
    let indices = if t == n {
        (0..n).collect()
    } else if t.saturating_mul(16) < n {
        let mut chosen: HashSet<usize> = HashSet::with_capacity(2 * t);
        for j in (n - t)..n {
            let r = rng.random_range(0..=j);
            if !chosen.insert(r) {
                chosen.insert(j);
            }
        }
        let mut indices: Vec<usize> = chosen.into_iter().collect();
        indices.sort_unstable();
        indices
    } else {
        let mut chosen = vec![false; n];
        for j in (n - t)..n {
            let r = rng.random_range(0..=j);
            if chosen[r] {
                chosen[j] = true;
            } else {
                chosen[r] = true;
            }
        }
        chosen
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
            .collect()
    };
    debug_assert_eq!(indices.len(), t);
    debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
    Ok(RowMask { indices, n })
}

/// Samples `T` from the seeded stream.
pub fn sample_t(dist: &StraggleDistribution, seed: SeedSpec) -> usize {
    dist.draw_t(&mut seed.rng())
}

/// Samples a uniform `t`-subset from the seeded stream.
pub fn sample_mask(t: usize, n: usize, seed: SeedSpec) -> Result<RowMask> {
    draw_mask(t, n, &mut seed.rng())
}

/// Draws `T` and then the row set, in that order, from one seeded stream.
pub fn sample_iteration(dist: &StraggleDistribution, seed: SeedSpec) -> RowMask {
    let mut rng = seed.rng();
    let t = dist.draw_t(&mut rng);
    draw_mask(t, dist.n, &mut rng).expect("draw_t stays within [1, n]")
}
