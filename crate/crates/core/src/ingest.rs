//! Edge-stream ingestion.
//!
//! Two line formats are understood:
//!
//! * native JSON lines: `{"s":..,"sl":..,"d":..,"dl":..,"el":..,"t":..,"g":..}`
//! * StreamSpot TSV: `src-id \t src-type \t dst-id \t dst-type \t edge-type \t graph-id`
//!
//! StreamSpot records carry no timestamps, so `seq` is the arrival index of
//! the edge within its graph.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One attributed, timestamped edge of a provenance graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProvenanceEdge {
    pub src_id: String,
    pub src_label: String,
    pub dst_id: String,
    pub dst_label: String,
    pub edge_label: String,
    /// Logical timestamp; non-decreasing within one graph.
    pub seq: u64,
    pub graph_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Native,
    StreamSpot,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "native" | "json" | "jsonl" => Ok(Format::Native),
            "streamspot" | "tsv" => Ok(Format::StreamSpot),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

impl std::fmt::Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Format::Native => f.write_str("native"),
            Format::StreamSpot => f.write_str("streamspot"),
        }
    }
}

const NATIVE_FIELDS: [(&str, &str); 7] = [
    ("s", "src_id"),
    ("sl", "src_label"),
    ("d", "dst_id"),
    ("dl", "dst_label"),
    ("el", "edge_label"),
    ("t", "seq"),
    ("g", "graph_id"),
];

fn field_str(obj: &Map<String, Value>, key: &str, name: &str) -> Result<String> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(Error::Parse(format!("invalid {name}"))),
        None => Err(Error::Parse(format!("missing {name}"))),
    }
}

/// Parses one native JSON-lines record. Ordering is not checked here; see
/// [`EdgeReader`].
pub fn parse_native(line: &str) -> Result<ProvenanceEdge> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| Error::Parse(format!("malformed record: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Parse("record is not a JSON object".into()))?;
    let seq = match obj.get("t") {
        Some(Value::Number(n)) => n
            .as_u64()
            .ok_or_else(|| Error::Parse("invalid seq: expected a non-negative integer".into()))?,
        Some(_) => return Err(Error::Parse("invalid seq: expected a non-negative integer".into())),
        None => return Err(Error::Parse("missing seq".into())),
    };
    let [s, sl, d, dl, el, _, g] = NATIVE_FIELDS;
    Ok(ProvenanceEdge {
        src_id: field_str(obj, s.0, s.1)?,
        src_label: field_str(obj, sl.0, sl.1)?,
        dst_id: field_str(obj, d.0, d.1)?,
        dst_label: field_str(obj, dl.0, dl.1)?,
        edge_label: field_str(obj, el.0, el.1)?,
        seq,
        graph_id: field_str(obj, g.0, g.1)?,
    })
}

/// Serializes an edge as a native JSON-lines record (no trailing newline).
pub fn to_native_line(edge: &ProvenanceEdge) -> String {
    serde_json::json!({
        "s": edge.src_id,
        "sl": edge.src_label,
        "d": edge.dst_id,
        "dl": edge.dst_label,
        "el": edge.edge_label,
        "t": edge.seq,
        "g": edge.graph_id,
    })
    .to_string()
}

/// Parses one StreamSpot TSV record, assigning the given arrival index as `seq`.
pub fn parse_streamspot(line: &str, seq: u64) -> Result<ProvenanceEdge> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if fields.len() != 6 {
        return Err(Error::Parse(format!(
            "expected 6 fields, found {}",
            fields.len()
        )));
    }
    Ok(ProvenanceEdge {
        src_id: fields[0].to_string(),
        src_label: fields[1].to_string(),
        dst_id: fields[2].to_string(),
        dst_label: fields[3].to_string(),
        edge_label: fields[4].to_string(),
        seq,
        graph_id: fields[5].to_string(),
    })
}

/// Stateful line parser: checks per-graph seq monotonicity (native) or
/// assigns per-graph arrival indices (StreamSpot).
#[derive(Debug, Default)]
pub struct EdgeReader {
    format: Format,
    last_seq: HashMap<String, u64>,
    arrivals: HashMap<String, u64>,
}

impl EdgeReader {
    pub fn new(format: Format) -> Self {
        EdgeReader {
            format,
            ..Default::default()
        }
    }

    /// Returns `Ok(None)` for blank lines and `#` comments.
    pub fn parse_line(&mut self, line: &str) -> Result<Option<ProvenanceEdge>> {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return Ok(None);
        }
        match self.format {
            Format::Native => {
                let edge = parse_native(trimmed)?;
                if let Some(&prev) = self.last_seq.get(&edge.graph_id) {
                    if edge.seq < prev {
                        return Err(Error::Ordering {
                            graph: edge.graph_id,
                            prev,
                            got: edge.seq,
                        });
                    }
                }
                self.last_seq.insert(edge.graph_id.clone(), edge.seq);
                Ok(Some(edge))
            }
            Format::StreamSpot => {
                let graph = line.rsplit('\t').next().unwrap_or_default().trim_end();
                let next = self.arrivals.get(graph).copied().unwrap_or(0);
                let edge = parse_streamspot(line, next)?;
                self.arrivals.insert(edge.graph_id.clone(), next + 1);
                Ok(Some(edge))
            }
        }
    }
}

/// Reads every edge from a buffered reader. Errors carry the 1-based line number.
pub fn read_edges<R: BufRead>(reader: R, format: Format) -> Result<Vec<ProvenanceEdge>> {
    let mut parser = EdgeReader::new(format);
    let mut edges = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", idx + 1)))?;
        match parser.parse_line(&line) {
            Ok(Some(edge)) => edges.push(edge),
            Ok(None) => {}
            Err(Error::Parse(msg)) => return Err(Error::Parse(format!("line {}: {msg}", idx + 1))),
            Err(e) => return Err(e),
        }
    }
    Ok(edges)
}

pub fn read_edges_from_path(path: &Path, format: Format) -> Result<Vec<ProvenanceEdge>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_edges(std::io::BufReader::new(file), format).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// One stream of edges belonging to a single graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphStream {
    pub graph_id: String,
    pub edges: Vec<ProvenanceEdge>,
}

/// Splits interleaved edges into per-graph streams, in order of first appearance.
pub fn demultiplex(edges: Vec<ProvenanceEdge>) -> Vec<GraphStream> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut streams: Vec<GraphStream> = Vec::new();
    for edge in edges {
        let slot = *index.entry(edge.graph_id.clone()).or_insert_with(|| {
            streams.push(GraphStream {
                graph_id: edge.graph_id.clone(),
                edges: Vec::new(),
            });
            streams.len() - 1
        });
        streams[slot].edges.push(edge);
    }
    streams
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeBatch {
    pub batch_index: usize,
    pub edges: Vec<ProvenanceEdge>,
}

/// Iterator adapter yielding consecutive batches of at most `size` edges.
pub struct Batches<I> {
    inner: I,
    size: usize,
    next_index: usize,
}

impl<I: Iterator<Item = ProvenanceEdge>> Iterator for Batches<I> {
    type Item = EdgeBatch;

    fn next(&mut self) -> Option<EdgeBatch> {
        let edges: Vec<_> = self.inner.by_ref().take(self.size).collect();
        if edges.is_empty() {
            return None;
        }
        let batch = EdgeBatch {
            batch_index: self.next_index,
            edges,
        };
        self.next_index += 1;
        Some(batch)
    }
}

/// Groups a stream into batches of `size` edges; the last batch may be shorter.
pub fn batch<I>(edges: I, size: usize) -> Result<Batches<I::IntoIter>>
where
    I: IntoIterator<Item = ProvenanceEdge>,
{
    if size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    Ok(Batches {
        inner: edges.into_iter(),
        size,
        next_index: 0,
    })
}
