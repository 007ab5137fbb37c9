//! Incremental Weisfeiler-Lehman relabeling over a streaming provenance DAG.
//!
//! Every vertex carries labels `l_0..l_R`. `l_0` is the stable hash of the
//! vertex type. For `i >= 1` the label of a vertex with at least one in-edge
//! is the stable hash of the byte string
//!
//! ```text
//! le64(l_{i-1}(v)) ++ entry(e_1) ++ entry(e_2) ++ ...
//! ```
//!
//! where the in-edges `e_k = (w, v)` are sorted by edge `seq` (ties by the
//! entry words) and
//!
//! * for `i = 1`: `entry(e) = le64(hash(edge_label)) ++ le64(l_0(w))`
//! * for `i >= 2`: `entry(e) = le64(l_{i-1}(w))`
//!
//! A vertex without in-edges only has `l_0`; when such a vertex appears as an
//! in-neighbor its `l_0` stands in for every level.
//!
//! Each computed label is emitted as one histogram item. Emissions are never
//! retracted.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::hash::{stable_hash_str, StableHasher};
use crate::ingest::ProvenanceEdge;

pub type Label = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelabelConfig {
    /// Number of neighborhood hops `R` (>= 1).
    pub hops: usize,
    /// Reject edges into vertices that already have out-edges instead of
    /// repairing their descendants.
    pub strict_partial_order: bool,
}

impl Default for RelabelConfig {
    fn default() -> Self {
        RelabelConfig {
            hops: 3,
            strict_partial_order: false,
        }
    }
}

/// One histogram item produced by a (vertex, iteration) relabel event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelEmission {
    pub label: Label,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct InNeighbor {
    vertex: u32,
    edge_label: Label,
    seq: u64,
}

#[derive(Debug, Clone)]
pub struct VertexState {
    labels: Vec<Label>,
    in_neighbors: Vec<InNeighbor>,
    out_neighbors: Vec<u32>,
    pub first_seen: u64,
    pub has_outgoing: bool,
}

impl VertexState {
    /// Current labels `l_0..l_R`.
    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn in_degree(&self) -> usize {
        self.in_neighbors.len()
    }
}

/// Streaming relabeler for a single graph.
#[derive(Debug, Clone)]
pub struct Relabeler {
    config: RelabelConfig,
    index: HashMap<String, u32>,
    ids: Vec<String>,
    vertices: Vec<VertexState>,
    // scratch buffers reused across edges
    entries: Vec<(u64, Label, Label)>,
    reach: Vec<(u32, usize)>,
    seen: HashMap<u32, usize>,
}

impl Relabeler {
    pub fn new(config: RelabelConfig) -> Result<Self> {
        if config.hops == 0 {
            return Err(Error::InvalidArgument("hop count must be at least 1".into()));
        }
        Ok(Relabeler {
            config,
            index: HashMap::new(),
            ids: Vec::new(),
            vertices: Vec::new(),
            entries: Vec::new(),
            reach: Vec::new(),
            seen: HashMap::new(),
        })
    }

    pub fn config(&self) -> RelabelConfig {
        self.config
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex(&self, id: &str) -> Option<&VertexState> {
        self.index.get(id).map(|&i| &self.vertices[i as usize])
    }

    fn vertex_or_insert(
        &mut self,
        id: &str,
        type_label: &str,
        seq: u64,
        out: &mut Vec<LabelEmission>,
    ) -> u32 {
        if let Some(&idx) = self.index.get(id) {
            return idx;
        }
        let idx = self.vertices.len() as u32;
        let l0 = stable_hash_str(type_label);
        self.vertices.push(VertexState {
            labels: vec![l0; self.config.hops + 1],
            in_neighbors: Vec::new(),
            out_neighbors: Vec::new(),
            first_seen: seq,
            has_outgoing: false,
        });
        self.index.insert(id.to_string(), idx);
        self.ids.push(id.to_string());
        out.push(LabelEmission { label: l0, seq });
        idx
    }

    /// Processes one edge and returns the labels it emits.
    pub fn ingest_edge(&mut self, edge: &ProvenanceEdge) -> Result<Vec<LabelEmission>> {
        let mut out = Vec::new();
        self.ingest_edge_into(edge, &mut out)?;
        Ok(out)
    }

    /// Like [`Relabeler::ingest_edge`] but appends to a caller-owned buffer.
    /// On error nothing is appended and the state is unchanged.
    pub fn ingest_edge_into(
        &mut self,
        edge: &ProvenanceEdge,
        out: &mut Vec<LabelEmission>,
    ) -> Result<()> {
        let dst_has_outgoing = self
            .index
            .get(edge.dst_id.as_str())
            .map(|&i| self.vertices[i as usize].has_outgoing)
            .unwrap_or(false);
        if dst_has_outgoing && self.config.strict_partial_order {
            return Err(Error::PartialOrder {
                vertex: edge.dst_id.clone(),
            });
        }

        let src = self.vertex_or_insert(&edge.src_id, &edge.src_label, edge.seq, out);
        let dst = self.vertex_or_insert(&edge.dst_id, &edge.dst_label, edge.seq, out);

        let record = InNeighbor {
            vertex: src,
            edge_label: stable_hash_str(&edge.edge_label),
            seq: edge.seq,
        };
        let list = &mut self.vertices[dst as usize].in_neighbors;
        // keep sorted by seq; ties are resolved at hashing time
        let pos = list.partition_point(|n| n.seq <= record.seq);
        list.insert(pos, record);
        self.vertices[src as usize].out_neighbors.push(dst);

        self.collect_affected(dst, dst_has_outgoing);
        let hops = self.config.hops;
        for level in 1..=hops {
            for k in 0..self.reach.len() {
                let (v, dist) = self.reach[k];
                if dist < level {
                    let label = self.compute_label(v, level);
                    self.vertices[v as usize].labels[level] = label;
                    out.push(LabelEmission {
                        label,
                        seq: edge.seq,
                    });
                }
            }
        }

        self.vertices[src as usize].has_outgoing = true;
        Ok(())
    }

    /// Fills `self.reach` with (vertex, hop distance) for every vertex whose
    /// labels may change: just `dst`, or its descendants within `R - 1` hops
    /// when `dst` already had out-edges.
    fn collect_affected(&mut self, dst: u32, repair: bool) {
        self.reach.clear();
        self.reach.push((dst, 0));
        if !repair || self.config.hops < 2 {
            return;
        }
        self.seen.clear();
        self.seen.insert(dst, 0);
        let mut head = 0;
        while head < self.reach.len() {
            let (v, dist) = self.reach[head];
            head += 1;
            if dist + 1 >= self.config.hops {
                continue;
            }
            for &w in &self.vertices[v as usize].out_neighbors {
                if let std::collections::hash_map::Entry::Vacant(slot) = self.seen.entry(w) {
                    slot.insert(dist + 1);
                    self.reach.push((w, dist + 1));
                }
            }
        }
    }

    fn compute_label(&mut self, v: u32, level: usize) -> Label {
        let vertex = &self.vertices[v as usize];
        self.entries.clear();
        for n in &vertex.in_neighbors {
            let w = &self.vertices[n.vertex as usize];
            let words = if level == 1 {
                (n.edge_label, w.labels[0])
            } else {
                (w.labels[level - 1], 0)
            };
            self.entries.push((n.seq, words.0, words.1));
        }
        self.entries.sort_unstable();
        let mut h = StableHasher::new();
        h.write_u64(vertex.labels[level - 1]);
        for &(_, a, b) in &self.entries {
            h.write_u64(a);
            if level == 1 {
                h.write_u64(b);
            }
        }
        h.finish()
    }

    pub fn vertex_id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }
}

/// Non-streaming relabeling of a complete graph: the sorted multiset of all
/// labels `l_i(v)`, `i = 0..=R`, over all vertices (`l_i` for `i >= 1` only
/// for vertices with in-edges).
pub fn batch_relabel<'a>(edges: &'a [ProvenanceEdge], hops: usize) -> Vec<Label> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut l0: Vec<Label> = Vec::new();
    let mut incoming: Vec<Vec<(u64, Label, usize)>> = Vec::new();
    let mut intern = |id: &'a str, ty: &str| -> usize {
        *index.entry(id).or_insert_with(|| {
            l0.push(stable_hash_str(ty));
            incoming.push(Vec::new());
            l0.len() - 1
        })
    };
    let mut arcs = Vec::with_capacity(edges.len());
    for e in edges {
        let s = intern(&e.src_id, &e.src_label);
        let d = intern(&e.dst_id, &e.dst_label);
        arcs.push((d, e.seq, stable_hash_str(&e.edge_label), s));
    }
    for (d, seq, el, s) in arcs {
        incoming[d].push((seq, el, s));
    }

    let mut out = l0.clone();
    let mut prev = l0.clone();
    for level in 1..=hops {
        let mut next = prev.clone();
        for (v, inc) in incoming.iter().enumerate() {
            if inc.is_empty() {
                continue;
            }
            let mut words: Vec<(u64, Label, Label)> = inc
                .iter()
                .map(|&(seq, el, w)| {
                    if level == 1 {
                        (seq, el, l0[w])
                    } else {
                        (seq, prev[w], 0)
                    }
                })
                .collect();
            words.sort_unstable();
            let mut h = StableHasher::new();
            h.write_u64(prev[v]);
            for (_, a, b) in words {
                h.write_u64(a);
                if level == 1 {
                    h.write_u64(b);
                }
            }
            next[v] = h.finish();
            out.push(next[v]);
        }
        prev = next;
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str, sl: &str, d: &str, dl: &str, el: &str, seq: u64) -> ProvenanceEdge {
        ProvenanceEdge {
            src_id: s.into(),
            src_label: sl.into(),
            dst_id: d.into(),
            dst_label: dl.into(),
            edge_label: el.into(),
            seq,
            graph_id: "g".into(),
        }
    }

    fn hsh(words: &[u64]) -> u64 {
        let mut bytes = Vec::new();
        for w in words {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        crate::hash::stable_hash(&bytes)
    }

    fn labels(em: &[LabelEmission]) -> Vec<u64> {
        em.iter().map(|x| x.label).collect()
    }

    #[test]
    fn single_edge_hand_trace() {
        let mut r = Relabeler::new(RelabelConfig {
            hops: 1,
            strict_partial_order: false,
        })
        .unwrap();
        let em = r.ingest_edge(&e("u", "file", "v", "process", "read", 1)).unwrap();
        let file = stable_hash_str("file");
        let process = stable_hash_str("process");
        let read = stable_hash_str("read");
        assert_eq!(labels(&em), vec![file, process, hsh(&[process, read, file])]);
    }

    #[test]
    fn second_in_edge_recomputes_over_both_sorted() {
        let mut r = Relabeler::new(RelabelConfig {
            hops: 1,
            strict_partial_order: false,
        })
        .unwrap();
        r.ingest_edge(&e("u", "file", "v", "process", "read", 1)).unwrap();
        let em = r.ingest_edge(&e("w", "socket", "v", "process", "recv", 2)).unwrap();
        let (file, socket, process) = (
            stable_hash_str("file"),
            stable_hash_str("socket"),
            stable_hash_str("process"),
        );
        let (read, recv) = (stable_hash_str("read"), stable_hash_str("recv"));
        assert_eq!(
            labels(&em),
            vec![socket, hsh(&[process, read, file, recv, socket])]
        );
    }

    #[test]
    fn ties_broken_by_entry_words() {
        // same seq for both in-edges: arrival order must not matter
        let a = e("u", "file", "v", "process", "read", 1);
        let b = e("w", "socket", "v", "process", "recv", 1);
        let cfg = RelabelConfig {
            hops: 2,
            strict_partial_order: false,
        };
        let mut r1 = Relabeler::new(cfg).unwrap();
        r1.ingest_edge(&a).unwrap();
        r1.ingest_edge(&b).unwrap();
        let mut r2 = Relabeler::new(cfg).unwrap();
        r2.ingest_edge(&b).unwrap();
        r2.ingest_edge(&a).unwrap();
        assert_eq!(r1.vertex("v").unwrap().labels(), r2.vertex("v").unwrap().labels());
    }

    #[test]
    fn second_level_uses_neighbor_first_level() {
        let mut r = Relabeler::new(RelabelConfig {
            hops: 2,
            strict_partial_order: true,
        })
        .unwrap();
        r.ingest_edge(&e("a", "file", "b", "process", "read", 1)).unwrap();
        let em = r.ingest_edge(&e("b", "process", "c", "file", "write", 2)).unwrap();
        let (file, process, read, write) = (
            stable_hash_str("file"),
            stable_hash_str("process"),
            stable_hash_str("read"),
            stable_hash_str("write"),
        );
        let b1 = hsh(&[process, read, file]);
        let c1 = hsh(&[file, write, process]);
        let c2 = hsh(&[c1, b1]);
        assert_eq!(labels(&em), vec![file, c1, c2]);
    }

    #[test]
    fn strict_mode_chain() {
        let cfg = RelabelConfig {
            hops: 3,
            strict_partial_order: true,
        };
        let mut r = Relabeler::new(cfg).unwrap();
        r.ingest_edge(&e("a", "x", "b", "y", "e", 1)).unwrap();
        r.ingest_edge(&e("b", "y", "c", "z", "e", 2)).unwrap();

        let mut r = Relabeler::new(cfg).unwrap();
        r.ingest_edge(&e("b", "y", "c", "z", "e", 1)).unwrap();
        let before = r.vertex_count();
        let err = r.ingest_edge(&e("a", "x", "b", "y", "e", 2)).unwrap_err();
        assert!(matches!(err, Error::PartialOrder { ref vertex } if vertex == "b"));
        assert_eq!(r.vertex_count(), before, "failed edge must not mutate state");
    }

    #[test]
    fn repair_updates_descendants_within_r_minus_one_hops() {
        // Mirrors the out-of-order case: D already feeds C and E when G -> D arrives.
        let cfg = RelabelConfig {
            hops: 2,
            strict_partial_order: false,
        };
        let mut r = Relabeler::new(cfg).unwrap();
        r.ingest_edge(&e("A", "t", "D", "t", "e", 1)).unwrap();
        r.ingest_edge(&e("D", "t", "C", "t", "e", 2)).unwrap();
        r.ingest_edge(&e("D", "t", "E", "t", "e", 3)).unwrap();
        r.ingest_edge(&e("E", "t", "F", "t", "e", 4)).unwrap();
        let f_before = r.vertex("F").unwrap().labels().to_vec();
        let em = r.ingest_edge(&e("G", "t", "D", "t", "e", 5)).unwrap();
        // l_0(G), l_1(D), l_2(D), l_2(C), l_2(E)
        assert_eq!(em.len(), 5);
        assert_eq!(r.vertex("F").unwrap().labels(), &f_before[..]);

        // Repaired state matches a batch recomputation of the final graph.
        let edges = vec![
            e("A", "t", "D", "t", "e", 1),
            e("D", "t", "C", "t", "e", 2),
            e("D", "t", "E", "t", "e", 3),
            e("E", "t", "F", "t", "e", 4),
            e("G", "t", "D", "t", "e", 5),
        ];
        let mut finals: Vec<u64> = Vec::new();
        for id in ["A", "D", "C", "E", "F", "G"] {
            let v = r.vertex(id).unwrap();
            finals.push(v.labels()[0]);
            if v.in_degree() > 0 {
                finals.extend_from_slice(&v.labels()[1..]);
            }
        }
        // F's l_2 depends on E's l_1 only, which did not change.
        finals.sort_unstable();
        assert_eq!(finals, batch_relabel(&edges, 2));
    }

    #[test]
    fn isolated_vertex_batch() {
        let edges = vec![e("v", "file", "v", "file", "self", 0)];
        // self-loop yields l_0 plus l_1..l_3 of v
        assert_eq!(batch_relabel(&edges, 3).len(), 4);
        assert!(batch_relabel(&[], 3).is_empty());
    }

    #[test]
    fn self_loop_is_processed() {
        let mut r = Relabeler::new(RelabelConfig {
            hops: 2,
            strict_partial_order: false,
        })
        .unwrap();
        let em = r.ingest_edge(&e("v", "file", "v", "file", "version", 0)).unwrap();
        assert_eq!(em.len(), 3);
        assert!(r.vertex("v").unwrap().has_outgoing);
    }

    #[test]
    fn isomorphic_graphs_same_multiset() {
        let g1 = vec![
            e("1", "p", "2", "f", "w", 0),
            e("3", "s", "2", "f", "r", 1),
            e("2", "f", "4", "p", "r", 2),
        ];
        let g2 = vec![
            e("x", "p", "y", "f", "w", 0),
            e("z", "s", "y", "f", "r", 1),
            e("y", "f", "q", "p", "r", 2),
        ];
        assert_eq!(batch_relabel(&g1, 3), batch_relabel(&g2, 3));
    }

    #[test]
    fn zero_hops_rejected() {
        assert!(Relabeler::new(RelabelConfig {
            hops: 0,
            strict_partial_order: false
        })
        .is_err());
    }
}
