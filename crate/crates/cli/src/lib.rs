//! Subcommands of the `sketchspar` binary, usable as plain functions.

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sketchspar::linalg::pseudoinverse_dense;
use sketchspar::sparsify::sparsify;
use sketchspar::stream_io::{ingest, load_state, read_stream, save_state, write_stream};
use sketchspar::testkit::{generate, spectral_check, Family, GeneratorSpec};
use sketchspar::{Error, Result, RunConfig, SparsifierOutput, VertexId};

#[derive(Parser, Debug)]
#[command(name = "sketchspar", version, about = "Spectral sparsification from linear sketches of dynamic graph streams")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a stream for a generated graph family.
    Gen(GenArgs),
    /// Ingest a stream into a sketch state file.
    Sketch(SketchArgs),
    /// Recover a sparsifier from a sketch state file.
    Recover(RecoverArgs),
    /// Compare a sparsifier against the graph of a stream.
    Verify(VerifyArgs),
    /// Exact effective resistances of the graph of a stream.
    Resist(ResistArgs),
}

/// Options shared by every command that builds a [`RunConfig`].
#[derive(Args, Debug, Default, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file with run configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub exact_sketch: bool,
    #[arg(long)]
    pub exact_embedding: bool,
    /// Use q = 1000·⌈log₂ n⌉ for the embedding dimension.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub dense_limit: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(&fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.exact_sketch |= self.exact_sketch;
        cfg.exact_embedding |= self.exact_embedding;
        cfg.constants.strict |= self.strict;
        if let Some(d) = self.dense_limit {
            cfg.dense_limit = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
}

/// The configuration as `key = value` lines, for echoing into outputs.
pub fn config_lines(cfg: &RunConfig) -> Vec<String> {
    let text = toml::to_string(cfg).expect("config serialises");
    text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect()
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// One of star-plus-edge, thick-star, thick-line, random-gnp, barbell,
    /// complete, path.
    pub family: Family,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Edge probability for random-gnp.
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long, default_value_t = 8)]
    pub clusters: usize,
    #[arg(long, default_value_t = 4)]
    pub cluster_size: usize,
    /// Cluster (1-based) receiving the long edge; defaults to the last one.
    #[arg(long)]
    pub far: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub petals: usize,
    #[arg(long, default_value_t = 2)]
    pub chain: usize,
    #[arg(long, default_value_t = 3)]
    pub clique: usize,
    /// Non-edges inserted and deleted again within the stream.
    #[arg(long, default_value_t = 0)]
    pub decoys: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

impl GenArgs {
    pub fn spec(&self) -> GeneratorSpec {
        let family = match self.family {
            Family::StarPlusEdge { .. } => Family::StarPlusEdge { n: self.n },
            Family::ThickStar { .. } => Family::ThickStar {
                petals: self.petals,
                chain: self.chain,
                clique: self.clique,
            },
            Family::ThickLine { .. } => Family::ThickLine {
                clusters: self.clusters,
                cluster_size: self.cluster_size,
                far: self.far.unwrap_or(self.clusters),
            },
            Family::RandomGnp { .. } => Family::RandomGnp { n: self.n, p: self.p },
            Family::Barbell { .. } => Family::Barbell { n: self.n },
            Family::Complete { .. } => Family::Complete { n: self.n },
            Family::Path { .. } => Family::Path { n: self.n },
        };
        GeneratorSpec::new(family, self.seed).with_decoys(self.decoys)
    }
}

#[derive(Args, Debug)]
pub struct SketchArgs {
    pub stream: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    pub state: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
    /// Stream of the sketched graph; needed with --exact-sketch.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Chain level to stop at; defaults to the last one.
    #[arg(long)]
    pub level: Option<u32>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub stream: PathBuf,
    pub sparsifier: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    /// Random test directions on top of the exact generalised spectrum.
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = sketchspar::linalg::DEFAULT_DENSE_LIMIT)]
    pub dense_limit: usize,
}

#[derive(Args, Debug)]
pub struct ResistArgs {
    pub stream: PathBuf,
    /// Vertex pairs as `u,v`. Every pair is reported when none are given.
    pub pairs: Vec<String>,
    #[arg(long, default_value_t = 6)]
    pub precision: usize,
    #[arg(long, default_value_t = sketchspar::linalg::DEFAULT_DENSE_LIMIT)]
    pub dense_limit: usize,
}

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics(Vec<(String, String)>);

impl Metrics {
    pub fn push(&mut self, key: &str, value: impl fmt::Display) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn echo_config(m: &mut Metrics, cfg: &RunConfig) {
    m.push("epsilon", cfg.epsilon);
    m.push("seed", cfg.seed);
    m.push("exact_sketch", cfg.exact_sketch);
    m.push("exact_embedding", cfg.exact_embedding);
    m.push("strict", cfg.constants.strict);
    m.push("heavy_c", cfg.constants.heavy_c);
    m.push("c2", cfg.constants.c2);
    m.push("q_scale", cfg.constants.q_scale);
}

/// Stream text for `spec`, preceded by comment lines naming the generator.
pub fn cmd_gen(spec: &GeneratorSpec) -> Result<String> {
    let (_, stream) = generate(spec)?;
    let mut out = format!(
        "# family {:?}\n# seed {}\n# decoys {}\n",
        spec.family, spec.seed, spec.decoys
    )
    .into_bytes();
    write_stream(&mut out, &stream)?;
    Ok(String::from_utf8(out).expect("stream text is ascii"))
}

pub fn cmd_sketch(stream: &Path, cfg: &RunConfig, output: &Path) -> Result<Metrics> {
    let start = Instant::now();
    let s = read_stream(stream)?;
    let parsed = start.elapsed().as_secs_f64();
    let state = ingest(&s, cfg.epsilon, cfg.seed, &cfg.constants)?;
    let seconds = start.elapsed().as_secs_f64() - parsed;
    save_state(&state, output)?;
    let p = state.params();
    let mut m = Metrics::default();
    echo_config(&mut m, cfg);
    m.push("n", p.n);
    m.push("updates", s.updates.len());
    m.push("levels", p.levels());
    m.push("rates", p.rates());
    m.push("q", p.q);
    m.push("hh_reps", p.hh_reps);
    m.push("hh_buckets", p.hh_buckets);
    m.push("nonzero_counters", state.incidences().iter().map(|i| i.nnz()).sum::<usize>());
    m.push("state_bytes", fs::metadata(output)?.len());
    m.push("parse_seconds", format!("{parsed:.6}"));
    m.push("ingest_seconds", format!("{seconds:.6}"));
    m.push("seconds_per_update", format!("{:.3e}", seconds / s.updates.len().max(1) as f64));
    Ok(m)
}

/// The sketch fixes `ε`, the seed and the constants; `cfg` supplies the
/// recovery modes. An explicit `epsilon` or `seed` that disagrees with the
/// state is rejected.
pub fn cmd_recover(
    state_path: &Path,
    cfg: &RunConfig,
    explicit: &RunArgs,
    graph: Option<&Path>,
    level: Option<u32>,
    output: &Path,
) -> Result<Metrics> {
    let start = Instant::now();
    let state = load_state(state_path)?;
    if explicit.epsilon.is_some_and(|e| e != state.epsilon()) {
        return Err(Error::InvalidArgument(format!(
            "--epsilon disagrees with the sketch (which has {})",
            state.epsilon()
        )));
    }
    if explicit.seed.is_some_and(|s| s != state.seed()) {
        return Err(Error::InvalidArgument(format!(
            "--seed disagrees with the sketch (which has {})",
            state.seed()
        )));
    }
    let mut cfg = cfg.clone();
    cfg.epsilon = state.epsilon();
    cfg.seed = state.seed();
    cfg.constants = state.constants().clone();
    let g = match graph {
        Some(p) => Some(read_stream(p)?.final_graph()?),
        None => None,
    };
    let top = state.params().levels() - 1;
    let level = level.unwrap_or(top);
    let (out, reports) = sparsify(&state, level, &cfg, g.as_ref())?;
    fs::write(output, out.to_text(&config_lines(&cfg)))?;

    let mut m = Metrics::default();
    echo_config(&mut m, &cfg);
    m.push("n", out.n());
    m.push("level", out.level);
    m.push("gamma", out.gamma);
    m.push("edges", out.edge_count());
    for r in &reports {
        let decoded: usize = r.bands.iter().map(|b| b.decoded).sum();
        let truncated: usize = r.bands.iter().map(|b| b.truncated_decodes).sum();
        m.push(&format!("level.{}.edges", r.level), r.edges);
        m.push(&format!("level.{}.seconds", r.level), format!("{:.6}", r.seconds));
        m.push(&format!("level.{}.decoded", r.level), decoded);
        m.push(&format!("level.{}.truncated_decodes", r.level), truncated);
    }
    m.push("seconds", format!("{:.6}", start.elapsed().as_secs_f64()));
    Ok(m)
}

pub fn read_sparsifier(path: &Path) -> Result<SparsifierOutput> {
    SparsifierOutput::from_reader(BufReader::new(fs::File::open(path)?))
}

/// Returns whether `(1−ε)L_G ⪯ H ⪯ (1+ε)L_G` held, with the measurements.
pub fn cmd_verify(args: &VerifyArgs) -> Result<(bool, Metrics)> {
    sketchspar::config::validate_epsilon(args.epsilon)?;
    let g = read_stream(&args.stream)?.final_graph()?;
    let h = read_sparsifier(&args.sparsifier)?;
    if h.n() != g.n() {
        return Err(Error::InvalidArgument(format!(
            "sparsifier has n = {}, graph has n = {}",
            h.n(),
            g.n()
        )));
    }
    if g.n() > args.dense_limit {
        return Err(Error::DenseLimit { n: g.n(), limit: args.dense_limit });
    }
    let l = g.to_weighted().laplacian_dense();
    let r = spectral_check(&l, &h.dense(), args.epsilon, args.trials, args.seed);
    let mut m = Metrics::default();
    m.push("result", if r.passed { "pass" } else { "fail" });
    m.push("epsilon", args.epsilon);
    m.push("max_deviation", format!("{:e}", r.max_deviation));
    if let Some((lo, hi)) = r.eig_range {
        m.push("eig_min", lo);
        m.push("eig_max", hi);
    }
    m.push("kernel_leak", format!("{:e}", r.kernel_leak));
    m.push("graph_edges", g.edge_count());
    m.push("sparsifier_edges", h.edge_count());
    m.push("gamma", h.gamma);
    Ok((r.passed, m))
}

pub fn parse_pair(s: &str) -> Result<(VertexId, VertexId)> {
    let bad = || Error::InvalidArgument(format!("expected a pair `u,v`, got `{s}`"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// `R_uv = b_uvᵀ L⁺ b_uv` for each pair, from one dense pseudoinverse.
pub fn cmd_resist(stream: &Path, pairs: &[(VertexId, VertexId)], dense_limit: usize) -> Result<Vec<(VertexId, VertexId, f64)>> {
    let g = read_stream(stream)?.final_graph()?;
    let n = g.n();
    let all: Vec<(VertexId, VertexId)>;
    let pairs = if pairs.is_empty() {
        all = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        &all
    } else {
        pairs
    };
    if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u >= n || v >= n) {
        return Err(Error::InvalidArgument(format!("pair ({u}, {v}) out of range for n = {n}")));
    }
    let pinv = pseudoinverse_dense(&g.to_weighted().laplacian_dense(), dense_limit)?;
    Ok(pairs
        .iter()
        .map(|&(u, v)| {
            let r = if u == v {
                0.0
            } else {
                pinv[(u, u)] + pinv[(v, v)] - 2.0 * pinv[(u, v)]
            };
            (u, v, r)
        })
        .collect())
}

/// Runs a parsed command line, printing to stdout. Returns the exit code.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gen(args) => {
            let text = cmd_gen(&args.spec())?;
            match &args.output {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Sketch(args) => {
            let cfg = args.run.resolve()?;
            print!("{}", cmd_sketch(&args.stream, &cfg, &args.output)?);
        }
        Command::Recover(args) => {
            let cfg = args.run.resolve()?;
            let m = cmd_recover(&args.state, &cfg, &args.run, args.graph.as_deref(), args.level, &args.output)?;
            print!("{m}");
        }
        Command::Verify(args) => {
            let (passed, m) = cmd_verify(&args)?;
            print!("{m}");
            if !passed {
                return Ok(1);
            }
        }
        Command::Resist(args) => {
            let pairs = args.pairs.iter().map(|p| parse_pair(p)).collect::<Result<Vec<_>>>()?;
            for (u, v, r) in cmd_resist(&args.stream, &pairs, args.dense_limit)? {
                println!("{u} {v} {r:.prec$}", prec = args.precision);
            }
        }
    }
    Ok(0)
}
