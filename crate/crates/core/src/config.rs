//! Run configuration and the quantities derived from it for a given `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::pair_count;
use crate::linalg::{SolverConfig, DEFAULT_DENSE_LIMIT};

/// JL dimension coefficient `(4 + 2β) / (ε²/2 − ε³/3)` for distortion `ε`
/// and failure probability `n^-β`.
pub fn jl_q_scale(epsilon: f64, beta: f64) -> f64 {
    (4.0 + 2.0 * beta) / (epsilon * epsilon / 2.0 - epsilon.powi(3) / 3.0)
}

/// Coefficient for distortion 1/5 and β = 6.
pub fn default_q_scale() -> f64 {
    jl_q_scale(0.2, 6.0)
}

/// `⌈log₂ x⌉` for integers, with `⌈log₂ 1⌉ = 0`.
pub fn ceil_log2(x: u128) -> u32 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

/// Tunable constants. Changing any of them changes the sketch layout, so they
/// are stored alongside every sketch state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    /// `C` in the heavy-hitter threshold `η = 1/(2Cq³)·√(ε²/log n)`.
    pub heavy_c: f64,
    /// Oversampling constant `c₂` of leverage-score sampling.
    pub c2: f64,
    /// JL dimension is `⌈q_scale·⌈log₂ n⌉⌉`.
    pub q_scale: f64,
    /// Use `q = 1000·⌈log₂ n⌉` instead of `q_scale`.
    pub strict: bool,
    /// Heavy-hitter repetitions are `⌈hh_rep_scale·⌈log₂ N⌉⌉`.
    pub hh_rep_scale: f64,
    /// Heavy-hitter buckets per repetition are `⌈hh_bucket_scale·⌈η⁻²⌉⌉`...
    pub hh_bucket_scale: f64,
    /// ...capped here.
    pub hh_max_buckets: u32,
    /// Grid-hashing repetitions are `⌈repetition_scale·10·⌈log₂ n⌉⌉`.
    pub repetition_scale: f64,
    /// Largest sampling rate is `⌈s_range_scale·10·⌈log₂ n⌉⌉`.
    pub s_range_scale: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            heavy_c: 8.0,
            c2: 8.0,
            q_scale: default_q_scale(),
            strict: false,
            hh_rep_scale: 1.0,
            hh_bucket_scale: 64.0,
            hh_max_buckets: 1 << 20,
            repetition_scale: 1.0,
            s_range_scale: 1.0,
        }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("heavy_c", self.heavy_c),
            ("c2", self.c2),
            ("q_scale", self.q_scale),
            ("hh_rep_scale", self.hh_rep_scale),
            ("hh_bucket_scale", self.hh_bucket_scale),
            ("repetition_scale", self.repetition_scale),
            ("s_range_scale", self.s_range_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.hh_max_buckets == 0 {
            return Err(Error::InvalidArgument("hh_max_buckets must be positive".into()));
        }
        Ok(())
    }
}

/// How recovered edges are weighted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightConvention {
    /// `1/p = 2^{s⁺}`, the inverse sampling probability.
    #[default]
    InverseProbability,
    /// `2^{-s⁺}`, the exponent as printed in the algorithm listing.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub epsilon: f64,
    pub seed: u64,
    pub constants: Constants,
    /// Replace heavy-hitter decoding with the exact subsampled flow.
    pub exact_sketch: bool,
    /// Replace the JL embedding with the exact resistance embedding.
    pub exact_embedding: bool,
    /// Keep the `√γ·I` rows of the coarse sparsifier in the embedding.
    pub embed_regularization: bool,
    pub weight_convention: WeightConvention,
    pub dense_limit: usize,
    /// Largest `n` for which `K̃⁺` is materialised column by column (`n`
    /// solves) instead of solving once per query.
    pub precompute_limit: usize,
    /// Largest pair count for which heavy-hitter decoding scans every
    /// coordinate instead of the pairs incident to the query endpoints.
    pub full_decode_limit: u64,
    /// Assert the bucket diameter bound on every bucket (costly for large q).
    pub check_bucket_diameter: bool,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            seed: 0,
            constants: Constants::default(),
            exact_sketch: false,
            exact_embedding: false,
            embed_regularization: true,
            weight_convention: WeightConvention::InverseProbability,
            dense_limit: DEFAULT_DENSE_LIMIT,
            precompute_limit: 2048,
            full_decode_limit: 1 << 16,
            check_bucket_diameter: false,
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        validate_epsilon(self.epsilon)?;
        self.constants.validate()
    }
}

pub fn validate_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must lie in (0, 1), got {epsilon}")))
    }
}

/// Quantities fixed by `(n, ε, constants)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub n: usize,
    pub epsilon: f64,
    /// `log₂ n` as a real, used inside formulas.
    pub log2n: f64,
    /// `⌈log₂ n⌉`, used for counts.
    pub ceil_log2n: u32,
    pub lambda_u: f64,
    pub lambda_l: f64,
    /// Chain depth `d = ⌈log₂(λ_u/λ_ℓ)⌉`; levels run over `0..=d+1`.
    pub depth: u32,
    /// JL embedding dimension.
    pub q: usize,
    /// Heavy-hitter threshold.
    pub eta: f64,
    pub hh_reps: u32,
    pub hh_buckets: u32,
    /// Largest sampling rate; sketches exist for `s⁺ ∈ 0..=max_rate`.
    pub max_rate: u32,
    /// Smallest (most negative) `s` in the recovery loop.
    pub min_s: i32,
    /// Grid-hashing repetitions per `s`.
    pub repetitions: u32,
}

/// `d = ⌈log₂(16n³)⌉`.
pub fn chain_depth(n: usize) -> u32 {
    let n = n as u128;
    ceil_log2(16 * n * n * n)
}

impl Params {
    pub fn new(n: usize, epsilon: f64, c: &Constants) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 vertices, got {n}")));
        }
        validate_epsilon(epsilon)?;
        c.validate()?;
        let log2n = (n as f64).log2();
        let ceil_log2n = ceil_log2(n as u128).max(1);
        let q = if c.strict {
            1000 * ceil_log2n as usize
        } else {
            (c.q_scale * ceil_log2n as f64).ceil() as usize
        }
        .max(1);
        let eta = 0.5 / (c.heavy_c * (q as f64).powi(3)) * (epsilon * epsilon / log2n).sqrt();
        let dim = pair_count(n);
        let hh_reps = ((c.hh_rep_scale * ceil_log2(dim as u128).max(1) as f64).ceil() as u32).max(1);
        let wanted = c.hh_bucket_scale * (1.0 / (eta * eta)).ceil();
        let cap = (c.hh_max_buckets as u64).min(u32::MAX as u64 / hh_reps as u64) as f64;
        let hh_buckets = wanted.min(cap).ceil().max(1.0) as u32;
        let max_rate = (c.s_range_scale * 10.0 * ceil_log2n as f64).ceil() as u32;
        let low = 3.0 * c.c2 * log2n / (epsilon * epsilon);
        let min_s = if low > 1.0 { -(low.log2().ceil() as i32) } else { 0 };
        let repetitions = ((c.repetition_scale * 10.0 * ceil_log2n as f64).ceil() as u32).max(1);
        Ok(Self {
            n,
            epsilon,
            log2n,
            ceil_log2n,
            lambda_u: 2.0 * n as f64,
            lambda_l: 1.0 / (8.0 * (n as f64).powi(2)),
            depth: chain_depth(n),
            q,
            eta,
            hh_reps,
            hh_buckets,
            max_rate,
            min_s,
            repetitions,
        })
    }

    /// Number of regularisation levels, `d + 2`.
    pub fn levels(&self) -> u32 {
        self.depth + 2
    }

    pub fn rates(&self) -> u32 {
        self.max_rate + 1
    }

    /// `γ(ℓ) = λ_u/2^ℓ` for `ℓ ≤ d`, and 0 at `ℓ = d + 1`.
    pub fn gamma(&self, level: u32) -> f64 {
        if level > self.depth {
            0.0
        } else {
            self.lambda_u / 2f64.powi(level as i32)
        }
    }

    pub fn s_range(&self) -> std::ops::RangeInclusive<i32> {
        self.min_s..=self.max_rate as i32
    }
}
