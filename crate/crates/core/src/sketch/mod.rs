//! ℓ2 heavy-hitter sketches and the sketched incidence matrices maintained
//! over the stream.

mod heavy;
mod incidence;
mod table;
mod state;

pub use heavy::{estimate, hh_decode, hh_decode_all, CounterView, Decoded, HeavyHitterSketch, HhGeometry};
pub use incidence::{FrozenIncidence, SketchVector, SketchedIncidence};
pub use state::SketchState;
