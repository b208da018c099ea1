//! Count-sketch style ℓ2 heavy hitters.
//!
//! Each of `reps` repetitions hashes a coordinate to one of `buckets`
//! counters with a random sign. A coordinate is estimated by the median of
//! its signed counters and `‖x‖₂` by the median of per-repetition counter
//! norms; decoding keeps candidates whose estimate reaches `(3/4)·η·‖x̂‖₂`.

use crate::sampler::SeededPrf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HhGeometry {
    dim: u64,
    reps: u32,
    buckets: u32,
    prf: SeededPrf,
}

impl HhGeometry {
    pub fn new(dim: u64, reps: u32, buckets: u32, prf: SeededPrf) -> Self {
        assert!(reps > 0 && buckets > 0, "empty sketch geometry");
        assert!(reps as u64 * buckets as u64 <= u32::MAX as u64, "sketch too large");
        Self { dim, reps, buckets, prf }
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    pub fn reps(&self) -> u32 {
        self.reps
    }

    pub fn buckets(&self) -> u32 {
        self.buckets
    }

    pub fn rows(&self) -> u64 {
        self.reps as u64 * self.buckets as u64
    }

    /// Counter row and sign of `coord` in repetition `rep`.
    #[inline]
    pub fn locate(&self, rep: u32, coord: u64) -> (u32, f64) {
        let w = self.prf.word2(rep as u64, coord);
        let bucket = ((w as u128 * self.buckets as u128) >> 64) as u32;
        let sign = if w & 1 == 0 { 1.0 } else { -1.0 };
        (rep * self.buckets + bucket, sign)
    }

    #[inline]
    pub fn rep_of(&self, row: u32) -> u32 {
        row / self.buckets
    }
}

/// Read access to the counters of a sketched vector.
pub trait CounterView {
    fn counter(&self, row: u32) -> f64;
    /// `Σ_b counter(rep, b)²` for every repetition.
    fn rep_sq_norms(&self) -> Vec<f64>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decoded {
    /// Returned coordinates with their estimates, in candidate order.
    pub coords: Vec<(u64, f64)>,
    pub norm_estimate: f64,
    /// Set when more candidates passed than the output bound allows.
    pub truncated: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Median-of-repetitions estimate of coordinate `coord`.
pub fn estimate<V: CounterView + ?Sized>(geom: &HhGeometry, view: &V, coord: u64) -> f64 {
    let mut vals: Vec<f64> = (0..geom.reps)
        .map(|r| {
            let (row, sign) = geom.locate(r, coord);
            sign * view.counter(row)
        })
        .collect();
    median(&mut vals)
}

fn norm_estimate<V: CounterView + ?Sized>(view: &V) -> f64 {
    let mut norms: Vec<f64> = view.rep_sq_norms().into_iter().map(f64::sqrt).collect();
    if norms.is_empty() {
        0.0
    } else {
        median(&mut norms)
    }
}

/// Decodes over an explicit candidate list.
pub fn hh_decode<V, I>(geom: &HhGeometry, view: &V, candidates: I, eta: f64) -> Decoded
where
    V: CounterView + ?Sized,
    I: IntoIterator<Item = u64>,
{
    let norm = norm_estimate(view);
    let mut out = Decoded {
        coords: Vec::new(),
        norm_estimate: norm,
        truncated: false,
    };
    if norm == 0.0 {
        return out;
    }
    let threshold = 0.75 * eta * norm;
    let mut vals = vec![0.0; geom.reps as usize];
    for coord in candidates {
        for (r, slot) in vals.iter_mut().enumerate() {
            let (row, sign) = geom.locate(r as u32, coord);
            *slot = sign * view.counter(row);
        }
        let est = median(&mut vals);
        if est != 0.0 && est.abs() >= threshold {
            out.coords.push((coord, est));
        }
    }
    let cap = geom.buckets as usize;
    if out.coords.len() > cap {
        out.truncated = true;
        out.coords
            .sort_by(|a, b| b.1.abs().partial_cmp(&a.1.abs()).unwrap().then(a.0.cmp(&b.0)));
        out.coords.truncate(cap);
        log::warn!("heavy-hitter decode truncated to {cap} coordinates");
    }
    out
}

/// Decodes by scanning every coordinate in `[0, dim)`.
pub fn hh_decode_all<V: CounterView + ?Sized>(geom: &HhGeometry, view: &V, eta: f64) -> Decoded {
    hh_decode(geom, view, 0..geom.dim, eta)
}

/// Dense-counter sketch of a vector in `R^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeavyHitterSketch {
    geometry: HhGeometry,
    counters: Vec<f64>,
}

impl HeavyHitterSketch {
    pub fn new(geometry: HhGeometry) -> Self {
        Self {
            counters: vec![0.0; geometry.rows() as usize],
            geometry,
        }
    }

    /// Geometry for threshold `eta`: `⌈rep_scale·⌈log₂ N⌉⌉` repetitions of
    /// `⌈bucket_scale·⌈η⁻²⌉⌉` buckets.
    pub fn for_threshold(dim: u64, eta: f64, rep_scale: f64, bucket_scale: f64, seed: u64) -> Self {
        let log_dim = crate::config::ceil_log2(dim as u128).max(1) as f64;
        let reps = ((rep_scale * log_dim).ceil() as u32).max(1);
        let buckets = ((bucket_scale * (1.0 / (eta * eta)).ceil()).ceil() as u32).max(1);
        Self::new(HhGeometry::new(dim, reps, buckets, SeededPrf::new(seed)))
    }

    pub fn geometry(&self) -> &HhGeometry {
        &self.geometry
    }

    pub fn counters(&self) -> &[f64] {
        &self.counters
    }

    pub fn update(&mut self, coord: u64, delta: f64) {
        assert!(coord < self.geometry.dim, "coordinate {coord} out of range");
        for r in 0..self.geometry.reps {
            let (row, sign) = self.geometry.locate(r, coord);
            self.counters[row as usize] += sign * delta;
        }
    }

    pub fn add_vector(&mut self, x: &[f64]) {
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                self.update(i as u64, v);
            }
        }
    }

    /// Coordinate-wise sum; both sketches must share a geometry.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.geometry, other.geometry, "geometry mismatch");
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
    }

    pub fn decode_all(&self, eta: f64) -> Decoded {
        hh_decode_all(&self.geometry, self, eta)
    }
}

impl CounterView for HeavyHitterSketch {
    fn counter(&self, row: u32) -> f64 {
        self.counters[row as usize]
    }

    fn rep_sq_norms(&self) -> Vec<f64> {
        self.counters
            .chunks(self.geometry.buckets as usize)
            .map(|c| c.iter().map(|v| v * v).sum())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sketch_of(x: &[f64], eta: f64, seed: u64) -> HeavyHitterSketch {
        let mut s = HeavyHitterSketch::for_threshold(x.len() as u64, eta, 1.0, 64.0, seed);
        s.add_vector(x);
        s
    }

    #[test]
    fn single_dominant_coordinate() {
        let mut x = vec![0.0; 64];
        x[0] = 10.0;
        x[1] = 0.1;
        let d = sketch_of(&x, 0.5, 1).decode_all(0.5);
        assert!(d.coords.iter().any(|&(c, _)| c == 0));
        assert!(d.coords.iter().all(|&(c, _)| c != 1));
    }

    #[test]
    fn zero_vector_decodes_empty() {
        let d = sketch_of(&vec![0.0; 100], 0.2, 2).decode_all(0.2);
        assert!(d.coords.is_empty());
        assert_eq!(d.norm_estimate, 0.0);
    }

    #[test]
    fn truncation_keeps_largest() {
        let g = HhGeometry::new(8, 1, 2, SeededPrf::new(4));
        let mut s = HeavyHitterSketch::new(g);
        s.add_vector(&[5.0, 4.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let d = hh_decode(&g, &s, 0..8, 1e-9);
        assert!(d.coords.len() <= 2);
    }

    #[test]
    fn planted_heavy_recovery_rate() {
        // Noise floor plus one coordinate at exactly η‖x‖₂.
        use rand::{Rng, SeedableRng};
        let eta = 0.1;
        let n = 4096;
        let mut recovered = 0;
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target = rng.gen_range(0..n);
            x[target] = 0.0;
            let rest: f64 = x.iter().map(|v| v * v).sum();
            // x_t² = η²(rest + x_t²)  ⇒  x_t = η·√(rest/(1−η²)).
            x[target] = eta * (rest / (1.0 - eta * eta)).sqrt();
            let d = sketch_of(&x, eta, 1000 + seed).decode_all(eta);
            recovered += d.coords.iter().any(|&(c, _)| c == target as u64) as usize;
        }
        assert!(recovered >= 99, "recovered {recovered}/100");
    }

    proptest! {
        #[test]
        fn linear_in_input(a in proptest::collection::vec(-100i32..100, 32),
                           b in proptest::collection::vec(-100i32..100, 32)) {
            let xa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let xb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            let sum: Vec<f64> = xa.iter().zip(&xb).map(|(p, q)| p + q).collect();
            let mut sa = sketch_of(&xa, 0.3, 9);
            let sb = sketch_of(&xb, 0.3, 9);
            sa.merge(&sb);
            let direct = sketch_of(&sum, 0.3, 9);
            prop_assert_eq!(sa.counters(), direct.counters());
        }
    }
}
