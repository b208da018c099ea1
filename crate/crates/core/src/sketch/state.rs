//! All sketched incidences `Π^ℓ_s B^ℓ_s` for `ℓ ∈ 0..=d+1`, `s ∈ 0..=max_rate`.

use std::io::{Read, Write};

use super::heavy::HhGeometry;
use super::incidence::{FrozenIncidence, SketchedIncidence};
use crate::config::{Constants, Params};
use crate::error::{Error, Result};
use crate::graph::{pair_count, EdgeKey, Sign};
use crate::sampler::{edge_hash, sampling_prf, Purpose, SeededPrf};

const MAGIC: &[u8; 8] = b"SKSPSTAT";
const VERSION: u32 = 1;
const END: &[u8; 4] = b"END.";

#[derive(Clone, Debug)]
pub struct SketchState {
    params: Params,
    constants: Constants,
    seed: u64,
    updates: u64,
    incidences: Vec<SketchedIncidence>,
}

impl SketchState {
    pub fn new(n: usize, epsilon: f64, seed: u64, constants: &Constants) -> Result<Self> {
        let params = Params::new(n, epsilon, constants)?;
        let master = SeededPrf::new(seed);
        let mut incidences = Vec::with_capacity((params.levels() * params.rates()) as usize);
        for level in 0..params.levels() {
            for rate in 0..params.rates() {
                let geom = HhGeometry::new(
                    pair_count(n),
                    params.hh_reps,
                    params.hh_buckets,
                    master.derive(Purpose::HeavyHitter, &[level as i64, rate as i64]),
                );
                incidences.push(SketchedIncidence::new(
                    level,
                    rate,
                    n,
                    geom,
                    sampling_prf(&master, level, rate),
                ));
            }
        }
        Ok(Self {
            params,
            constants: constants.clone(),
            seed,
            updates: 0,
            incidences,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    /// Applies one stream update to every `(ℓ, s)` sketch. Returns the number
    /// of sketches that sampled the edge.
    pub fn apply(&mut self, sign: Sign, e: EdgeKey) -> usize {
        let h = edge_hash(e);
        let mut touched = 0;
        for si in &mut self.incidences {
            touched += si.update_hashed(sign, e, h) as usize;
        }
        self.updates += 1;
        touched
    }

    pub fn incidence(&self, level: u32, rate: u32) -> &SketchedIncidence {
        assert!(level < self.params.levels() && rate < self.params.rates());
        &self.incidences[(level * self.params.rates() + rate) as usize]
    }

    pub fn frozen(&self, level: u32, rate: u32) -> FrozenIncidence {
        self.incidence(level, rate).freeze()
    }

    pub fn incidences(&self) -> &[SketchedIncidence] {
        &self.incidences
    }

    pub fn is_zero(&self) -> bool {
        self.incidences.iter().all(|si| si.is_empty())
    }

    /// Equality of the accumulators, ignoring the update counter.
    pub fn same_accumulators(&self, other: &Self) -> bool {
        self.params == other.params
            && self.constants == other.constants
            && self.seed == other.seed
            && self.incidences == other.incidences
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let c = &self.constants;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.params.n as u64).to_le_bytes())?;
        w.write_all(&self.params.epsilon.to_bits().to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.updates.to_le_bytes())?;
        for v in [c.heavy_c, c.c2, c.q_scale, c.hh_rep_scale, c.hh_bucket_scale, c.repetition_scale, c.s_range_scale] {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        w.write_all(&[c.strict as u8])?;
        w.write_all(&c.hh_max_buckets.to_le_bytes())?;
        for v in [self.params.levels(), self.params.rates(), self.params.hh_reps, self.params.hh_buckets] {
            w.write_all(&v.to_le_bytes())?;
        }
        for si in &self.incidences {
            let entries = si.entries();
            w.write_all(&si.level().to_le_bytes())?;
            w.write_all(&si.rate().to_le_bytes())?;
            w.write_all(&(entries.len() as u64).to_le_bytes())?;
            for (r, col, v) in entries {
                w.write_all(&r.to_le_bytes())?;
                w.write_all(&col.to_le_bytes())?;
                w.write_all(&v.to_bits().to_le_bytes())?;
            }
        }
        w.write_all(END)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::StateFormat("bad magic bytes".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::StateFormat(format!("unsupported version {version}, expected {VERSION}")));
        }
        let n = read_u64(r)? as usize;
        let epsilon = read_f64(r)?;
        let seed = read_u64(r)?;
        let updates = read_u64(r)?;
        let mut f = [0.0; 7];
        for slot in &mut f {
            *slot = read_f64(r)?;
        }
        let mut strict = [0u8; 1];
        read_exact(r, &mut strict)?;
        let constants = Constants {
            heavy_c: f[0],
            c2: f[1],
            q_scale: f[2],
            hh_rep_scale: f[3],
            hh_bucket_scale: f[4],
            repetition_scale: f[5],
            s_range_scale: f[6],
            strict: strict[0] != 0,
            hh_max_buckets: read_u32(r)?,
        };
        let mut state = Self::new(n, epsilon, seed, &constants)
            .map_err(|e| Error::StateFormat(format!("invalid header: {e}")))?;
        state.updates = updates;
        let p = &state.params;
        let geometry = [p.levels(), p.rates(), p.hh_reps, p.hh_buckets];
        for expected in geometry {
            let got = read_u32(r)?;
            if got != expected {
                return Err(Error::StateFormat(format!("geometry mismatch: {got} != {expected}")));
            }
        }
        let rows = p.hh_reps as u64 * p.hh_buckets as u64;
        for si in &mut state.incidences {
            let (level, rate) = (read_u32(r)?, read_u32(r)?);
            if (level, rate) != (si.level(), si.rate()) {
                return Err(Error::StateFormat(format!("unexpected block ({level}, {rate})")));
            }
            let count = read_u64(r)?;
            for _ in 0..count {
                let (row, col, v) = (read_u32(r)?, read_u32(r)?, read_f64(r)?);
                if row as u64 >= rows || col as usize >= n || !v.is_finite() {
                    return Err(Error::StateFormat(format!("entry ({row}, {col}) out of range")));
                }
                si.insert_raw(row, col, v);
            }
        }
        let mut end = [0u8; 4];
        read_exact(r, &mut end)?;
        if &end != END {
            return Err(Error::StateFormat("missing end marker".into()));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::StateFormat("trailing bytes after end marker".into()));
        }
        Ok(state)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::StateFormat("truncated state file".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SketchState {
        SketchState::new(8, 0.5, 11, &Constants::default()).unwrap()
    }

    #[test]
    fn layout() {
        let s = small();
        let p = s.params();
        assert_eq!(s.incidences().len(), (p.levels() * p.rates()) as usize);
        assert_eq!(s.incidence(3, 2).level(), 3);
        assert_eq!(s.incidence(3, 2).rate(), 2);
        assert!(s.is_zero());
    }

    #[test]
    fn seeds_differ_per_level_and_rate() {
        let s = small();
        assert_ne!(s.incidence(0, 1).sampler(), s.incidence(1, 1).sampler());
        assert_ne!(s.incidence(0, 1).sampler(), s.incidence(0, 2).sampler());
        assert_ne!(s.incidence(0, 1).geometry(), s.incidence(1, 1).geometry());
    }

    #[test]
    fn rate_zero_always_touched() {
        let mut s = small();
        let touched = s.apply(Sign::Insert, EdgeKey::new(2, 5, 8).unwrap());
        assert!(touched >= s.params().levels() as usize);
        assert_eq!(s.update_count(), 1);
    }

    #[test]
    fn round_trip() {
        let mut s = small();
        for (a, b) in [(0, 1), (1, 2), (3, 7), (2, 6)] {
            s.apply(Sign::Insert, EdgeKey::new(a, b, 8).unwrap());
        }
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = SketchState::read_from(&mut buf.as_slice()).unwrap();
        assert!(back.same_accumulators(&s));
        assert_eq!(back.update_count(), 4);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut buf = Vec::new();
        small().write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] ^= 0xFF;
        assert!(matches!(SketchState::read_from(&mut bad.as_slice()), Err(Error::StateFormat(_))));
        let mut bad_version = buf.clone();
        bad_version[8] = 9;
        assert!(SketchState::read_from(&mut bad_version.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 2];
        assert!(SketchState::read_from(&mut &truncated[..]).is_err());
    }
}
