//! Dynamic-stream spectral sparsification via sketched effective-resistance
//! recovery.
//!
//! Edge insertions and deletions are folded into linear heavy-hitter sketches
//! of subsampled incidence matrices ([`sketch`]). After the stream, a chain of
//! regularised sparsifiers is rebuilt level by level ([`sparsify`]): each
//! level embeds the previous level's resistances ([`embed`]), hashes vertices
//! onto shifted grids and queries the sketches with electrical flows
//! ([`recover`]).

pub mod config;
pub mod embed;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod recover;
pub mod sampler;
pub mod sketch;
pub mod sparsify;
pub mod stream_io;
pub mod testkit;

pub use config::{Constants, Params, RunConfig, WeightConvention};
pub use error::{Error, Result};
pub use graph::{DynamicGraph, EdgeKey, Sign, VertexId, WeightedGraph};
pub use sketch::SketchState;
pub use sparsify::{sparsify, SparsifierOutput};
pub use stream_io::{ingest, StreamFile};
