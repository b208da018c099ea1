//! Keyed counter-based pseudorandom function.
//!
//! Every random quantity in the pipeline (edge subsampling bits, heavy-hitter
//! hashes and signs, grid shifts, JL sign entries) is a pure function of the
//! master seed and a tuple of domain-separation labels. Nothing is stored and
//! nothing depends on evaluation order, so a run is reproducible from
//! `(stream, seed, config)` alone.

use crate::graph::EdgeKey;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What a derived stream is used for. Distinct purposes never share outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    SampleBit = 1,
    HeavyHitter = 2,
    GridShift = 3,
    JlSign = 4,
    Generator = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeededPrf {
    key: u64,
}

impl SeededPrf {
    pub fn new(master_seed: u64) -> Self {
        Self {
            key: mix64(master_seed ^ 0x5EED_5EED_0000_0001),
        }
    }

    /// Child function for `purpose` and `labels`.
    pub fn derive(&self, purpose: Purpose, labels: &[i64]) -> Self {
        let mut h = self.absorb(purpose as u64);
        for &l in labels {
            h = Self { key: h }.absorb(l as u64);
        }
        Self { key: h }
    }

    #[inline]
    fn absorb(&self, word: u64) -> u64 {
        mix64(self.key.wrapping_add(GOLDEN) ^ mix64(word.wrapping_add(0x0123_4567_89AB_CDEF)))
    }

    /// 64 pseudorandom bits for counter `x`.
    #[inline]
    pub fn word(&self, x: u64) -> u64 {
        mix64(self.key ^ mix64(x.wrapping_mul(GOLDEN).wrapping_add(0x2545_F491_4F6C_DD1D)))
    }

    /// 64 pseudorandom bits for the counter pair `(a, b)`.
    #[inline]
    pub fn word2(&self, a: u64, b: u64) -> u64 {
        mix64(self.word(a) ^ mix64(b.wrapping_add(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn unit(&self, x: u64) -> f64 {
        (self.word(x) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Hash of an unordered pair, shared by every per-edge function so the
/// per-level work on an update is a single mix per call.
#[inline]
pub(crate) fn edge_hash(e: EdgeKey) -> u64 {
    mix64(((e.u() as u64) << 32 | e.v() as u64) ^ 0x00ED_6E00_00ED_6E00)
}

/// Bernoulli(2⁻ˢ) via an exact dyadic threshold on 64 PRF bits.
#[inline]
pub(crate) fn keyed_bit(prf: &SeededPrf, edge_hash: u64, s: u32) -> bool {
    match s {
        0 => true,
        1..=63 => prf.key_mix(edge_hash) < (1u64 << (64 - s)),
        _ => false,
    }
}

impl SeededPrf {
    #[inline]
    pub(crate) fn key_mix(&self, h: u64) -> u64 {
        mix64(self.key ^ h)
    }
}

/// Stream of subsampling bits `h^ℓ_s` for one `(level, rate)` pair.
pub fn sampling_prf(prf: &SeededPrf, level: u32, rate: u32) -> SeededPrf {
    prf.derive(Purpose::SampleBit, &[level as i64, rate as i64])
}

/// `h^ℓ_s(u, v)`: 1 with probability `2⁻ˢ`, independent across `(ℓ, s)`.
pub fn sample_bit(prf: &SeededPrf, level: u32, rate: u32, u: usize, v: usize) -> bool {
    let e = EdgeKey::canonical(u, v);
    keyed_bit(&sampling_prf(prf, level, rate), edge_hash(e), rate)
}

/// Uniform grid shift in `[0, w)` for coordinate `i` of repetition `j`.
pub fn uniform_shift(prf: &SeededPrf, level: u32, s: i32, j: u32, i: u32, w: f64) -> f64 {
    shift_from(&shift_stream(prf, level, s, j), i, w)
}

/// The keyed stream behind [`uniform_shift`] for one `(level, s, j)`.
pub fn shift_stream(prf: &SeededPrf, level: u32, s: i32, j: u32) -> SeededPrf {
    prf.derive(Purpose::GridShift, &[level as i64, s as i64, j as i64])
}

/// Shift `i` drawn from a stream made by [`shift_stream`].
#[inline]
pub fn shift_from(stream: &SeededPrf, i: u32, w: f64) -> f64 {
    assert!(w > 0.0, "grid width must be positive");
    let x = stream.unit(i as u64) * w;
    // Rounding of unit·w can land on w itself for extreme w.
    if x < w {
        x
    } else {
        0.0
    }
}

/// Unbiased ±1 entry of a sign matrix.
#[inline]
pub fn sign_entry(prf: &SeededPrf, row: u64, col: u64) -> f64 {
    if prf.word2(row, col) >> 63 == 0 {
        1.0
    } else {
        -1.0
    }
}
