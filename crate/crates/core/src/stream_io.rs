//! Stream files, ingestion into a [`SketchState`], and state persistence.
//!
//! Stream format: a header line `n <count>` followed by one update per line,
//! `+ u v` or `- u v`. Blank lines and lines starting with `#` are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::config::Constants;
use crate::error::{Error, Result};
use crate::graph::{DynamicGraph, EdgeKey, Sign, VertexId};
use crate::sketch::SketchState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Update {
    pub sign: Sign,
    pub u: VertexId,
    pub v: VertexId,
    /// 1-based line in the source, 0 when generated in memory.
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamFile {
    pub n: usize,
    pub updates: Vec<Update>,
}

impl StreamFile {
    pub fn new(n: usize) -> Self {
        Self { n, updates: Vec::new() }
    }

    pub fn push(&mut self, sign: Sign, u: VertexId, v: VertexId) {
        self.updates.push(Update { sign, u, v, line: 0 });
    }

    /// Net graph after replaying every update.
    pub fn final_graph(&self) -> Result<DynamicGraph> {
        replay(self)
    }
}

fn replay(stream: &StreamFile) -> Result<DynamicGraph> {
    let mut g = DynamicGraph::new(stream.n);
    for (pos, up) in stream.updates.iter().enumerate() {
        g.apply_update(up.sign, up.u, up.v).map_err(|e| Error::StreamConsistency {
            position: if up.line > 0 { up.line } else { pos + 1 },
            message: e.to_string(),
        })?;
    }
    Ok(g)
}

/// Parses and validates a stream; errors carry the offending line number.
pub fn parse_stream<R: BufRead>(r: R) -> Result<StreamFile> {
    let mut stream: Option<StreamFile> = None;
    let mut graph: Option<DynamicGraph> = None;
    for (i, line) in r.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let perr = |message: String| Error::Parse { line: lineno, message };
        let Some(s) = stream.as_mut() else {
            if parts.len() != 2 || parts[0] != "n" {
                return Err(perr(format!("expected header `n <count>`, got `{t}`")));
            }
            let n: usize = parts[1]
                .parse()
                .map_err(|_| perr(format!("bad vertex count `{}`", parts[1])))?;
            if n < 2 || n > u32::MAX as usize {
                return Err(perr(format!("vertex count {n} out of range")));
            }
            stream = Some(StreamFile::new(n));
            graph = Some(DynamicGraph::new(n));
            continue;
        };
        if parts.len() != 3 {
            return Err(perr(format!("expected `+ u v` or `- u v`, got `{t}`")));
        }
        let sign = match parts[0] {
            "+" => Sign::Insert,
            "-" => Sign::Delete,
            other => return Err(perr(format!("unknown sign `{other}`"))),
        };
        let vertex = |p: &str| -> Result<VertexId> {
            let v: VertexId = p.parse().map_err(|_| perr(format!("bad vertex `{p}`")))?;
            if v >= s.n {
                return Err(perr(format!("vertex {v} out of range for n = {}", s.n)));
            }
            Ok(v)
        };
        let (u, v) = (vertex(parts[1])?, vertex(parts[2])?);
        graph
            .as_mut()
            .unwrap()
            .apply_update(sign, u, v)
            .map_err(|e| perr(e.to_string()))?;
        s.updates.push(Update { sign, u, v, line: lineno });
    }
    stream.ok_or_else(|| Error::Parse {
        line: 0,
        message: "empty stream: missing `n <count>` header".into(),
    })
}

pub fn read_stream(path: &Path) -> Result<StreamFile> {
    parse_stream(BufReader::new(File::open(path)?))
}

pub fn write_stream<W: Write>(w: &mut W, stream: &StreamFile) -> Result<()> {
    writeln!(w, "n {}", stream.n)?;
    for up in &stream.updates {
        writeln!(w, "{} {} {}", up.sign.symbol(), up.u, up.v)?;
    }
    Ok(())
}

pub fn save_stream(path: &Path, stream: &StreamFile) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stream(&mut w, stream)?;
    w.flush()?;
    Ok(())
}

/// Feeds every update into a fresh state. The stream is replayed against a
/// shadow graph so an inconsistent update is reported at its position.
pub fn ingest(stream: &StreamFile, epsilon: f64, seed: u64, constants: &Constants) -> Result<SketchState> {
    let mut state = SketchState::new(stream.n, epsilon, seed, constants)?;
    ingest_into(&mut state, stream)?;
    Ok(state)
}

pub fn ingest_into(state: &mut SketchState, stream: &StreamFile) -> Result<()> {
    if stream.n != state.n() {
        return Err(Error::InvalidArgument(format!(
            "stream has n = {}, state has n = {}",
            stream.n,
            state.n()
        )));
    }
    let mut shadow = DynamicGraph::new(stream.n);
    for (pos, up) in stream.updates.iter().enumerate() {
        let e: EdgeKey = shadow.apply_update(up.sign, up.u, up.v).map_err(|e| Error::StreamConsistency {
            position: if up.line > 0 { up.line } else { pos + 1 },
            message: e.to_string(),
        })?;
        state.apply(up.sign, e);
    }
    Ok(())
}

pub fn save_state(state: &SketchState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    state.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<SketchState> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    SketchState::read_from(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<StreamFile> {
        parse_stream(s.as_bytes())
    }

    #[test]
    fn parse_examples() {
        let s = parse("n 3\n+ 0 1\n+ 1 2\n").unwrap();
        assert_eq!(s.final_graph().unwrap().edge_count(), 2);
        let s = parse("n 3\n+ 0 1\n- 0 1\n").unwrap();
        assert_eq!(s.final_graph().unwrap().edge_count(), 0);
        match parse("n 3\n- 0 1\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "+ 0 1\n", "n 3\n+ 0 3\n", "n 3\n* 0 1\n", "n 3\n+ 0\n", "n 3\n+ 1 1\n", "n 3\n+ 0 1\n+ 1 0\n"] {
            assert!(parse(bad).is_err(), "{bad:?}");
        }
        let with_comments = parse("# hi\nn 4\n\n+ 0 1\n# c\n+ 2 3\n").unwrap();
        assert_eq!(with_comments.updates.len(), 2);
        assert_eq!(with_comments.updates[1].line, 6);
    }

    #[test]
    fn write_parse_round_trip() {
        let s = parse("n 5\n+ 0 1\n+ 3 4\n- 0 1\n+ 2 0\n").unwrap();
        let mut buf = Vec::new();
        write_stream(&mut buf, &s).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.n, 5);
        let strip = |s: &StreamFile| s.updates.iter().map(|u| (u.sign, u.u, u.v)).collect::<Vec<_>>();
        assert_eq!(strip(&back), strip(&s));
    }

    #[test]
    fn ingest_examples() {
        let c = Constants::default();
        let empty = ingest(&StreamFile::new(6), 0.5, 1, &c).unwrap();
        assert!(empty.is_zero());
        let s = parse("n 6\n+ 0 1\n+ 2 5\n+ 1 3\n- 0 1\n- 2 5\n- 1 3\n").unwrap();
        assert!(ingest(&s, 0.5, 1, &c).unwrap().is_zero());
        let a = parse("n 6\n+ 0 1\n+ 2 5\n+ 1 3\n- 2 5\n").unwrap();
        let b = parse("n 6\n+ 1 3\n+ 0 1\n").unwrap();
        assert!(ingest(&a, 0.5, 1, &c).unwrap().same_accumulators(&ingest(&b, 0.5, 1, &c).unwrap()));

        let mut bad = StreamFile::new(4);
        bad.push(Sign::Insert, 0, 1);
        bad.push(Sign::Delete, 2, 3);
        match ingest(&bad, 0.5, 1, &c) {
            Err(Error::StreamConsistency { position, .. }) => assert_eq!(position, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn state_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.state");
        let s = parse("n 7\n+ 0 1\n+ 2 5\n+ 1 3\n+ 6 4\n").unwrap();
        let state = ingest(&s, 0.5, 77, &Constants::default()).unwrap();
        save_state(&state, &path).unwrap();
        let back = load_state(&path).unwrap();
        assert!(back.same_accumulators(&state));
        assert_eq!(back.update_count(), 4);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[1] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_state(&path), Err(Error::StateFormat(_))));
    }
}
