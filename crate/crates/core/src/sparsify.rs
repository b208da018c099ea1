//! The chain of regularised sparsifiers, built bottom-up from `ℓ = 0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::config::{Params, RunConfig, WeightConvention};
use crate::embed::{build_embedding, build_exact_embedding, EmbedOptions, EmbeddingM, KinvOperator};
use crate::error::{Error, Result};
use crate::graph::{pair_count, DynamicGraph, EdgeKey, WeightedGraph};
use crate::linalg::{psd_le_on_span, RegularizedLaplacian};
use crate::recover::{
    recover_edges, ExactFlowOracle, FlowOracle, PairDistances, RecoverParams, RecoveryDiagnostics,
    SketchFlowOracle,
};
use crate::sampler::{Purpose, SeededPrf};
use crate::sketch::SketchState;

/// `L_H + γI` for one level, with the band each edge was recovered at.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsifierOutput {
    pub graph: WeightedGraph,
    pub gamma: f64,
    pub level: u32,
    pub epsilon: f64,
    pub seed: u64,
}

impl SparsifierOutput {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn to_regularized(&self) -> Result<RegularizedLaplacian> {
        RegularizedLaplacian::new(self.graph.clone(), self.gamma)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = self.graph.laplacian_dense();
        for u in 0..self.n() {
            m[(u, u)] += self.gamma;
        }
        m
    }

    /// Text form: `key value` header lines, an `edges <count>` line, then
    /// one `u v weight` line per edge. `extra` lines are copied into the
    /// header verbatim.
    pub fn to_text(&self, extra: &[String]) -> String {
        let mut s = String::new();
        writeln!(s, "sparsifier 1").unwrap();
        writeln!(s, "n {}", self.n()).unwrap();
        writeln!(s, "gamma {}", self.gamma).unwrap();
        writeln!(s, "epsilon {}", self.epsilon).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "level {}", self.level).unwrap();
        for line in extra {
            writeln!(s, "# {line}").unwrap();
        }
        writeln!(s, "edges {}", self.edge_count()).unwrap();
        for &(e, w) in self.graph.edges() {
            writeln!(s, "{} {} {}", e.u(), e.v(), w).unwrap();
        }
        s
    }

    pub fn from_reader<R: BufRead>(r: R) -> Result<Self> {
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut lines = r.lines().enumerate();
        let mut expected = None;
        for (i, line) in lines.by_ref() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once(char::is_whitespace).ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key value`, got `{t}`"),
            })?;
            if k == "edges" {
                expected = Some(parse_num::<usize>(v.trim(), i + 1)?);
                break;
            }
            header.insert(k.to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            header.get(k).cloned().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("missing header field `{k}`"),
            })
        };
        let count = expected.ok_or_else(|| Error::Parse {
            line: 0,
            message: "missing `edges` line".into(),
        })?;
        let n: usize = parse_num(&get("n")?, 0)?;
        let gamma: f64 = parse_num(&get("gamma")?, 0)?;
        let epsilon: f64 = parse_num(&get("epsilon")?, 0)?;
        let seed: u64 = parse_num(&get("seed")?, 0)?;
        let level: u32 = parse_num(&get("level")?, 0)?;
        let mut edges = Vec::with_capacity(count);
        for (i, line) in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected `u v weight`, got `{t}`"),
                });
            }
            let u: usize = parse_num(parts[0], i + 1)?;
            let v: usize = parse_num(parts[1], i + 1)?;
            let w: f64 = parse_num(parts[2], i + 1)?;
            let e = EdgeKey::new(u, v, n).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("weight must be positive, got {w}"),
                });
            }
            edges.push((e, w));
        }
        if edges.len() != count {
            return Err(Error::Parse {
                line: 0,
                message: format!("header announces {count} edges, found {}", edges.len()),
            });
        }
        Ok(Self {
            graph: WeightedGraph::new(n, edges)?,
            gamma,
            level,
            epsilon,
            seed,
        })
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse `{s}`"),
    })
}

#[derive(Clone, Debug, Default)]
pub struct LevelReport {
    pub level: u32,
    pub gamma: f64,
    pub edges: usize,
    pub seconds: f64,
    pub bands: Vec<RecoveryDiagnostics>,
}

/// Everything needed to rerun one level's recovery in isolation.
pub struct LevelContext {
    pub level: u32,
    pub k_tilde: RegularizedLaplacian,
    pub kinv: KinvOperator,
    pub embedding: EmbeddingM,
    pub pairs: Option<PairDistances>,
}

impl LevelContext {
    /// `K̃` from the previous level's output (or `λ_u I` at level 0), its
    /// inverse and the embedding.
    pub fn build(params: &Params, level: u32, previous: Option<&SparsifierOutput>, cfg: &RunConfig, seed: u64) -> Result<Self> {
        let n = params.n;
        let k_tilde = match (level, previous) {
            (0, _) => RegularizedLaplacian::identity(n, params.lambda_u)?,
            (_, Some(prev)) => prev.to_regularized()?.scaled(1.0 / (2.0 * (1.0 + params.epsilon))),
            (_, None) => {
                return Err(Error::InvalidArgument(format!("level {level} needs the previous level's output")))
            }
        };
        let kinv = KinvOperator::new(&k_tilde, &cfg.solver, n <= cfg.precompute_limit)?;
        let opts = EmbedOptions {
            include_regularization: cfg.embed_regularization,
        };
        let embedding = if cfg.exact_embedding {
            build_exact_embedding(&k_tilde, &kinv, &opts, cfg.dense_limit)?
        } else {
            let prf = SeededPrf::new(seed).derive(Purpose::JlSign, &[level as i64]);
            build_embedding(&k_tilde, &kinv, params.q, &prf, &opts)?
        };
        let pairs = if pair_count(n) <= cfg.full_decode_limit {
            Some(PairDistances::new(&embedding))
        } else {
            None
        };
        Ok(Self {
            level,
            k_tilde,
            kinv,
            embedding,
            pairs,
        })
    }

    pub fn recover_params(&self, params: &Params, cfg: &RunConfig, s: i32) -> RecoverParams {
        RecoverParams {
            level: self.level,
            s,
            epsilon: params.epsilon,
            c2: cfg.constants.c2,
            log2n: params.log2n,
            repetitions: params.repetitions,
            open_top: s == params.min_s,
            check_diameter: cfg.check_bucket_diameter,
        }
    }
}

/// Edge weight for an edge recovered at sampling rate `s⁺`.
pub fn band_weight(rate: u32, convention: WeightConvention) -> f64 {
    match convention {
        WeightConvention::InverseProbability => 2f64.powi(rate as i32),
        WeightConvention::Literal => 2f64.powi(-(rate as i32)),
    }
}

/// Recovers one level given its context. `graph` is required in exact-sketch
/// mode, where the sampled edge set is read off the graph.
pub fn recover_level(
    state: &SketchState,
    ctx: &LevelContext,
    cfg: &RunConfig,
    graph: Option<&DynamicGraph>,
) -> Result<(SparsifierOutput, LevelReport)> {
    let start = Instant::now();
    let params = state.params();
    let n = params.n;
    let grid_prf = SeededPrf::new(state.seed()).derive(Purpose::GridShift, &[]);
    let mut weights: BTreeMap<EdgeKey, f64> = BTreeMap::new();
    let mut report = LevelReport {
        level: ctx.level,
        gamma: params.gamma(ctx.level),
        ..LevelReport::default()
    };

    let mut s = params.min_s;
    while s <= params.max_rate as i32 {
        let rate = s.max(0) as u32;
        // All s ≤ 0 read the rate-0 sketch; handle them as one group so the
        // flow queries are shared.
        let group_end = if s <= 0 { 0 } else { s };
        let frozen = state.frozen(ctx.level, rate);
        let group: Vec<i32> = (s..=group_end).collect();
        if frozen.is_empty() {
            for &t in &group {
                report.bands.push(RecoveryDiagnostics {
                    s: t,
                    skipped: true,
                    ..RecoveryDiagnostics::default()
                });
            }
        } else if cfg.exact_sketch {
            let g = graph.ok_or_else(|| {
                Error::InvalidArgument("exact-sketch mode needs the graph itself".into())
            })?;
            let sampled: Vec<EdgeKey> = g.edges().filter(|&e| frozen.is_sampled(e)).collect();
            let mut oracle = ExactFlowOracle::new(n, sampled, &ctx.kinv, params.eta);
            run_group(&mut oracle, ctx, params, cfg, &grid_prf, &group, rate, &mut weights, &mut report)?;
        } else {
            let mut oracle = SketchFlowOracle::new(&frozen, &ctx.kinv, params.eta);
            run_group(&mut oracle, ctx, params, cfg, &grid_prf, &group, rate, &mut weights, &mut report)?;
        }
        s = group_end + 1;
    }

    let graph_out = WeightedGraph::new(n, weights)?;
    report.edges = graph_out.edge_count();
    report.seconds = start.elapsed().as_secs_f64();
    Ok((
        SparsifierOutput {
            graph: graph_out,
            gamma: params.gamma(ctx.level),
            level: ctx.level,
            epsilon: params.epsilon,
            seed: state.seed(),
        },
        report,
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_group<O: FlowOracle>(
    oracle: &mut O,
    ctx: &LevelContext,
    params: &Params,
    cfg: &RunConfig,
    grid_prf: &SeededPrf,
    group: &[i32],
    rate: u32,
    weights: &mut BTreeMap<EdgeKey, f64>,
    report: &mut LevelReport,
) -> Result<()> {
    let w = band_weight(rate, cfg.weight_convention);
    for &s in group {
        let rp = ctx.recover_params(params, cfg, s);
        let rec = recover_edges(oracle, &ctx.embedding, ctx.pairs.as_ref(), grid_prf, &rp)?;
        for e in rec.edges {
            if weights.insert(e, w).is_some() {
                return Err(Error::Consistency(format!("edge {e} recovered in two bands")));
            }
        }
        report.bands.push(rec.diagnostics);
    }
    Ok(())
}

/// Runs the chain up to `level` (inclusive) and returns its output together
/// with per-level reports.
pub fn sparsify(
    state: &SketchState,
    level: u32,
    cfg: &RunConfig,
    graph: Option<&DynamicGraph>,
) -> Result<(SparsifierOutput, Vec<LevelReport>)> {
    sparsify_with(state, level, cfg, graph, |_, _, _| {})
}

/// [`sparsify`] with a hook called after every level with that level's
/// `K̃`, output and report.
pub fn sparsify_with<F>(
    state: &SketchState,
    level: u32,
    cfg: &RunConfig,
    graph: Option<&DynamicGraph>,
    mut hook: F,
) -> Result<(SparsifierOutput, Vec<LevelReport>)>
where
    F: FnMut(&LevelContext, &SparsifierOutput, &LevelReport),
{
    cfg.validate()?;
    let params = state.params();
    if level >= params.levels() {
        return Err(Error::InvalidArgument(format!(
            "level {level} out of range 0..={}",
            params.levels() - 1
        )));
    }
    if let Some(g) = graph {
        if g.n() != params.n {
            return Err(Error::InvalidArgument("graph and sketch disagree on n".into()));
        }
    }
    let mut previous: Option<SparsifierOutput> = None;
    let mut reports = Vec::new();
    for l in 0..=level {
        let ctx = LevelContext::build(params, l, previous.as_ref(), cfg, state.seed())?;
        let (out, report) = recover_level(state, &ctx, cfg, graph)?;
        log::info!(
            "level {l}: {} edges, gamma {}, {:.3}s",
            report.edges,
            report.gamma,
            report.seconds
        );
        hook(&ctx, &out, &report);
        reports.push(report);
        previous = Some(out);
    }
    Ok((previous.expect("at least one level"), reports))
}

/// `L_G + γI` as a dense matrix.
pub fn level_matrix(graph: &WeightedGraph, gamma: f64) -> DMatrix<f64> {
    let mut m = graph.laplacian_dense();
    for u in 0..graph.n() {
        m[(u, u)] += gamma;
    }
    m
}

/// `(1/3)·L_ℓ ⪯ K̃ ⪯ L_ℓ` on the row span of `L_ℓ`.
pub fn verify_coarse(k_tilde: &DMatrix<f64>, l_level: &DMatrix<f64>) -> bool {
    psd_le_on_span(&(l_level / 3.0), k_tilde, 0.0, l_level) && psd_le_on_span(k_tilde, l_level, 0.0, l_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Constants;
    use crate::graph::Sign;

    #[test]
    fn weights() {
        assert_eq!(band_weight(0, WeightConvention::InverseProbability), 1.0);
        assert_eq!(band_weight(3, WeightConvention::InverseProbability), 8.0);
        assert_eq!(band_weight(3, WeightConvention::Literal), 0.125);
    }

    #[test]
    fn verify_coarse_examples() {
        let g = DynamicGraph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap().to_weighted();
        let l = level_matrix(&g, 0.5);
        assert!(verify_coarse(&l, &l));
        assert!(!verify_coarse(&(&l / 4.0), &l));
        assert!(verify_coarse(&(&l / 2.0), &l));
    }

    #[test]
    fn empty_graph_gives_identity() {
        let state = SketchState::new(6, 0.5, 3, &Constants::default()).unwrap();
        let cfg = RunConfig::default();
        for level in [0, 2] {
            let (out, _) = sparsify(&state, level, &cfg, None).unwrap();
            assert_eq!(out.edge_count(), 0);
            assert_eq!(out.gamma, state.params().gamma(level));
        }
        let top = state.params().levels() - 1;
        let (out, _) = sparsify(&state, top, &cfg, None).unwrap();
        assert_eq!(out.gamma, 0.0);
        assert!(sparsify(&state, top + 1, &cfg, None).is_err());
    }

    #[test]
    fn level_zero_recovers_small_graph() {
        let n = 8;
        let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 0), (0, 4)];
        let g = DynamicGraph::from_edges(n, edges).unwrap();
        let mut state = SketchState::new(n, 0.5, 9, &Constants::default()).unwrap();
        for e in g.edges() {
            state.apply(Sign::Insert, e);
        }
        let cfg = RunConfig {
            exact_embedding: true,
            ..RunConfig::default()
        };
        let (out, reports) = sparsify(&state, 0, &cfg, None).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(out.gamma, 2.0 * n as f64);
        let got: Vec<EdgeKey> = out.graph.edges().iter().map(|&(e, _)| e).collect();
        let want: Vec<EdgeKey> = g.edges().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn text_round_trip() {
        let g = WeightedGraph::new(
            5,
            [(EdgeKey::new(0, 3, 5).unwrap(), 2.0), (EdgeKey::new(1, 2, 5).unwrap(), 0.1 + 0.2)],
        )
        .unwrap();
        let out = SparsifierOutput {
            graph: g,
            gamma: 1.0 / 3.0,
            level: 4,
            epsilon: 0.5,
            seed: 42,
        };
        let text = out.to_text(&["mode sketch".into()]);
        let back = SparsifierOutput::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, out);
        let broken = text.replace("edges 2", "edges 3");
        assert!(SparsifierOutput::from_reader(broken.as_bytes()).is_err());
    }
}
