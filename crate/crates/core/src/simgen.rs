//! Synthetic provenance streams: multi-phase benign workloads with optional
//! attack injection.
//!
//! Every phase owns a small pool of root vertices ("hubs"). Each new vertex
//! receives all of its in-edges at creation time, from hubs picked by
//! preferential attachment or, occasionally, from earlier vertices of the
//! same phase. Vertices never gain in-edges after they were used as a
//! source, so every stream respects the partial order.
//!
//! Attack vertices come from a separate generator, so the benign part of an
//! attacked stream is exactly the benign stream with extra edges interleaved.

use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{to_native_line, ProvenanceEdge};

const ATTACK_STREAM: u64 = 0xa77a_c4ed_5eed_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpec {
    /// Benign edges generated in this phase.
    pub edges: usize,
    pub vertex_types: Vec<String>,
    pub edge_types: Vec<String>,
    /// Root vertices available as sources.
    pub hubs: usize,
    /// Maximum in-edges per new vertex (at least 1).
    pub fan_in: usize,
    /// Zipf exponent for type choices; 0 is uniform.
    pub skew: f64,
    /// Probability that a source is an earlier non-root vertex.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Benign edge index at which injection starts.
    pub offset: usize,
    /// Benign edges over which injection stays active.
    pub length: usize,
    /// Probability, per new benign vertex, of also injecting an attack vertex.
    pub intensity: f64,
    pub vertex_types: Vec<String>,
    pub edge_types: Vec<String>,
    pub fan_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    #[serde(default = "default_graph_id")]
    pub graph_id: String,
    pub phases: Vec<PhaseSpec>,
    #[serde(default)]
    pub attack: Option<AttackSpec>,
}

fn default_graph_id() -> String {
    "sim".to_string()
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl ScenarioSpec {
    /// Three-phase workload of about 50k edges.
    pub fn baseline(seed: u64) -> Self {
        let phase = |edges, v: &[&str], e: &[&str]| PhaseSpec {
            edges,
            vertex_types: strings(v),
            edge_types: strings(e),
            hubs: 16,
            fan_in: 2,
            skew: 2.0,
            depth: 0.05,
        };
        ScenarioSpec {
            seed,
            graph_id: format!("sim-{seed}"),
            phases: vec![
                phase(16_000, &["process", "file", "library", "config"], &["exec", "read", "mmap", "open"]),
                phase(18_000, &["process", "socket", "pipe", "file"], &["connect", "recv", "send", "write"]),
                phase(16_000, &["process", "log", "archive", "file"], &["write", "rename", "unlink", "stat"]),
            ],
            attack: None,
        }
    }

    /// The baseline workload with an attack injected into the second phase.
    pub fn baseline_attack(seed: u64) -> Self {
        let mut s = Self::baseline(seed);
        s.graph_id = format!("sim-attack-{seed}");
        s.attack = Some(AttackSpec {
            offset: 24_000,
            length: 3_000,
            intensity: 0.8,
            vertex_types: strings(&["shell", "payload", "c2-socket"]),
            edge_types: strings(&["download", "inject", "beacon", "escalate"]),
            fan_in: 2,
        });
        s
    }

    pub fn total_benign_edges(&self) -> usize {
        self.phases.iter().map(|p| p.edges).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.phases.is_empty() {
            return bad("scenario has no phases".into());
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.edges == 0 {
                return bad(format!("phase {i}: duration must be > 0"));
            }
            if p.vertex_types.is_empty() || p.edge_types.is_empty() {
                return bad(format!("phase {i}: empty type alphabet"));
            }
            if p.hubs == 0 || p.fan_in == 0 {
                return bad(format!("phase {i}: hubs and fan_in must be > 0"));
            }
            if !(p.skew >= 0.0 && p.skew.is_finite()) || !(0.0..=1.0).contains(&p.depth) {
                return bad(format!("phase {i}: skew must be >= 0 and depth in [0, 1]"));
            }
        }
        if let Some(a) = &self.attack {
            if a.offset >= self.total_benign_edges() {
                return bad("attack offset beyond the end of the stream".into());
            }
            if a.vertex_types.is_empty() || a.edge_types.is_empty() || a.fan_in == 0 {
                return bad("attack needs type alphabets and fan_in > 0".into());
            }
            if !(0.0..=1.0).contains(&a.intensity) {
                return bad("attack intensity must be in [0, 1]".into());
            }
        }
        Ok(())
    }
}

fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-s))).expect("non-empty alphabet")
}

#[derive(Clone)]
struct Vertex {
    id: String,
    kind: String,
}

struct Emitter<'a> {
    graph_id: &'a str,
    out: Vec<ProvenanceEdge>,
}

impl Emitter<'_> {
    fn edge(&mut self, src: &Vertex, dst: &Vertex, label: &str) {
        let seq = self.out.len() as u64 + 1;
        self.out.push(ProvenanceEdge {
            src_id: src.id.clone(),
            src_label: src.kind.clone(),
            dst_id: dst.id.clone(),
            dst_label: dst.kind.clone(),
            edge_label: label.to_string(),
            seq,
            graph_id: self.graph_id.to_string(),
        });
    }
}

struct AttackState<'a> {
    spec: &'a AttackSpec,
    rng: ChaCha8Rng,
    vertices: Vec<Vertex>,
    next_id: usize,
}

impl AttackState<'_> {
    /// Possibly grafts one attack vertex onto the current phase.
    fn maybe_inject(&mut self, hubs: &[Vertex], em: &mut Emitter) {
        if self.spec.intensity <= 0.0 || !self.rng.gen_bool(self.spec.intensity) {
            return;
        }
        let v = Vertex {
            id: format!("a{}", self.next_id),
            kind: self.spec.vertex_types[self.rng.gen_range(0..self.spec.vertex_types.len())].clone(),
        };
        self.next_id += 1;
        let k = self.rng.gen_range(1..=self.spec.fan_in);
        for _ in 0..k {
            let src = if !self.vertices.is_empty() && self.rng.gen_bool(0.5) {
                self.vertices[self.rng.gen_range(0..self.vertices.len())].clone()
            } else {
                hubs[self.rng.gen_range(0..hubs.len())].clone()
            };
            let label = &self.spec.edge_types[self.rng.gen_range(0..self.spec.edge_types.len())];
            em.edge(&src, &v, label);
        }
        self.vertices.push(v);
    }
}

/// Generates the stream described by `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<Vec<ProvenanceEdge>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut em = Emitter {
        graph_id: &spec.graph_id,
        out: Vec::with_capacity(spec.total_benign_edges()),
    };
    let mut attack = spec.attack.as_ref().map(|a| AttackState {
        spec: a,
        rng: ChaCha8Rng::seed_from_u64(spec.seed ^ ATTACK_STREAM),
        vertices: Vec::new(),
        next_id: 0,
    });
    let mut next_id = 0usize;
    let mut benign_edges = 0usize;
    for phase in &spec.phases {
        let vtype = zipf(phase.vertex_types.len(), phase.skew);
        let etype = zipf(phase.edge_types.len(), phase.skew);
        // hub types follow the type weights by fixed quota, so every
        // replicate sees the same mix
        let weights: Vec<f64> = (1..=phase.vertex_types.len()).map(|k| (k as f64).powf(-phase.skew)).collect();
        let total: f64 = weights.iter().sum();
        let hubs: Vec<Vertex> = (0..phase.hubs)
            .map(|i| {
                let target = (i as f64 + 0.5) / phase.hubs as f64 * total;
                let mut acc = 0.0;
                let kind = weights
                    .iter()
                    .position(|w| {
                        acc += w;
                        target < acc
                    })
                    .unwrap_or(weights.len() - 1);
                next_id += 1;
                Vertex {
                    id: format!("v{}", next_id - 1),
                    kind: phase.vertex_types[kind].clone(),
                }
            })
            .collect();
        // preferential attachment: a hub appears once per use, plus a base weight
        let mut hub_urn: Vec<usize> = (0..phase.hubs).flat_map(|h| std::iter::repeat(h).take(4)).collect();
        let mut inner: Vec<Vertex> = Vec::new();
        let end = benign_edges + phase.edges;
        while benign_edges < end {
            if let Some(a) = attack.as_mut() {
                let s = a.spec;
                if benign_edges >= s.offset && benign_edges < s.offset + s.length {
                    a.maybe_inject(&hubs, &mut em);
                }
            }
            let v = Vertex {
                id: format!("v{next_id}"),
                kind: phase.vertex_types[vtype.sample(&mut rng)].clone(),
            };
            next_id += 1;
            let k = rng.gen_range(1..=phase.fan_in).min(end - benign_edges);
            for _ in 0..k {
                let src = if !inner.is_empty() && rng.gen_bool(phase.depth) {
                    inner[rng.gen_range(inner.len().saturating_sub(256)..inner.len())].clone()
                } else {
                    let h = hub_urn[rng.gen_range(0..hub_urn.len())];
                    hub_urn.push(h);
                    hubs[h].clone()
                };
                em.edge(&src, &v, &phase.edge_types[etype.sample(&mut rng)]);
                benign_edges += 1;
            }
            inner.push(v);
        }
    }
    Ok(em.out)
}

/// Writes a stream in the native JSON-lines format.
pub fn write_native<W: Write>(w: &mut W, edges: &[ProvenanceEdge]) -> std::io::Result<()> {
    for e in edges {
        writeln!(w, "{}", to_native_line(e))?;
    }
    Ok(())
}
