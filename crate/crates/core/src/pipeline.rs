//! Edge stream to periodic sketch snapshots.

use crate::error::{Error, Result};
use crate::ingest::ProvenanceEdge;
use crate::sketch::{GraphSketch, StreamingSketcher};
use crate::wl::{LabelEmission, RelabelConfig, Relabeler};

/// Everything that determines which sketches a stream produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchConfig {
    pub hops: usize,
    pub sketch_size: usize,
    pub lambda: f64,
    /// Emissions between consecutive snapshots.
    pub interval: u64,
    pub seed: u64,
    pub strict_partial_order: bool,
}

impl SketchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 {
            return Err(Error::InvalidArgument("hop count must be at least 1".into()));
        }
        if self.sketch_size == 0 || self.sketch_size > u32::MAX as usize {
            return Err(Error::InvalidArgument("sketch size out of range".into()));
        }
        if self.interval == 0 {
            return Err(Error::InvalidArgument("sketch interval must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument("decay factor must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Per-stream pipeline state.
#[derive(Debug, Clone)]
pub struct SketchPipeline {
    relabeler: Relabeler,
    sketcher: StreamingSketcher,
    interval: u64,
    emitted: u64,
    buf: Vec<LabelEmission>,
}

impl SketchPipeline {
    pub fn new(config: &SketchConfig) -> Result<Self> {
        config.validate()?;
        Ok(SketchPipeline {
            relabeler: Relabeler::new(RelabelConfig {
                hops: config.hops,
                strict_partial_order: config.strict_partial_order,
            })?,
            sketcher: StreamingSketcher::new(config.sketch_size, config.seed, config.lambda)?,
            interval: config.interval,
            emitted: 0,
            buf: Vec::new(),
        })
    }

    /// Feeds one edge; every completed interval appends a snapshot to `out`.
    pub fn push_edge(&mut self, edge: &ProvenanceEdge, out: &mut Vec<GraphSketch>) -> Result<()> {
        self.buf.clear();
        self.relabeler.ingest_edge_into(edge, &mut self.buf)?;
        for em in &self.buf {
            self.sketcher.observe(em.label);
            self.emitted += 1;
            if self.emitted % self.interval == 0 {
                out.extend(self.sketcher.snapshot());
            }
        }
        Ok(())
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn relabeler(&self) -> &Relabeler {
        &self.relabeler
    }

    pub fn sketcher(&self) -> &StreamingSketcher {
        &self.sketcher
    }
}

/// Runs a whole stream and returns its time-ordered sketches.
pub fn sketch_stream<'a, I>(edges: I, config: &SketchConfig) -> Result<Vec<GraphSketch>>
where
    I: IntoIterator<Item = &'a ProvenanceEdge>,
{
    let mut pipeline = SketchPipeline::new(config)?;
    let mut out = Vec::new();
    for edge in edges {
        pipeline.push_edge(edge, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(interval: u64) -> SketchConfig {
        SketchConfig {
            hops: 2,
            sketch_size: 32,
            lambda: 0.02,
            interval,
            seed: 1,
            strict_partial_order: false,
        }
    }

    fn chain(n: usize) -> Vec<ProvenanceEdge> {
        (0..n)
            .map(|i| ProvenanceEdge {
                src_id: format!("v{i}"),
                src_label: "a".into(),
                dst_id: format!("v{}", i + 1),
                dst_label: "a".into(),
                edge_label: "e".into(),
                seq: i as u64,
                graph_id: "g".into(),
            })
            .collect()
    }

    #[test]
    fn snapshots_every_interval_emissions() {
        // first edge emits 2 + 2 labels, later edges 1 + 2
        let edges = chain(10);
        let sketches = sketch_stream(&edges, &cfg(5)).unwrap();
        let total = 4 + 9 * 3;
        assert_eq!(sketches.len(), total / 5);
        assert_eq!(sketches[0].created_at, 5);
        assert_eq!(sketches[1].created_at, 10);
    }

    #[test]
    fn short_stream_yields_nothing() {
        assert!(sketch_stream(&chain(2), &cfg(1000)).unwrap().is_empty());
        assert!(sketch_stream(&[], &cfg(1)).unwrap().is_empty());
    }

    #[test]
    fn invalid_config() {
        let mut c = cfg(0);
        assert!(SketchPipeline::new(&c).is_err());
        c.interval = 1;
        c.sketch_size = 0;
        assert!(SketchPipeline::new(&c).is_err());
    }
}
