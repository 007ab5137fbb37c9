//! Brute-force oracles and fixture generators shared by integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use provsketch::hash::{stable_hash_str, StableHasher};
use provsketch::ingest::ProvenanceEdge;
use provsketch::sketch::GraphSketch;
use rand::Rng;

pub fn edge(src: &str, src_ty: &str, dst: &str, dst_ty: &str, label: &str, seq: u64) -> ProvenanceEdge {
    ProvenanceEdge {
        src_id: src.into(),
        src_label: src_ty.into(),
        dst_id: dst.into(),
        dst_label: dst_ty.into(),
        edge_label: label.into(),
        seq,
        graph_id: "g".into(),
    }
}

/// Random stream in which no vertex receives an in-edge after it has been
/// used as a source.
pub fn random_partial_order_stream<R: Rng>(rng: &mut R, n_edges: usize) -> Vec<ProvenanceEdge> {
    let vtypes = ["proc", "file", "sock", "pipe", "lib"];
    let etypes = ["read", "write", "exec", "send"];
    // (id, type, closed = has out-edges)
    let mut vertices: Vec<(String, &str, bool)> = Vec::new();
    let mut out = Vec::with_capacity(n_edges);
    for seq in 1..=n_edges as u64 {
        let open: Vec<usize> = (0..vertices.len()).filter(|&i| !vertices[i].2).collect();
        let dst = if open.is_empty() || rng.gen_bool(0.4) {
            vertices.push((format!("v{}", vertices.len()), vtypes[rng.gen_range(0..vtypes.len())], false));
            vertices.len() - 1
        } else {
            open[rng.gen_range(0..open.len())]
        };
        let src = if vertices.len() == 1 || rng.gen_bool(0.2) {
            vertices.push((format!("v{}", vertices.len()), vtypes[rng.gen_range(0..vtypes.len())], false));
            vertices.len() - 1
        } else {
            loop {
                let s = rng.gen_range(0..vertices.len());
                if s != dst {
                    break s;
                }
            }
        };
        vertices[src].2 = true;
        let (s, d) = (&vertices[src], &vertices[dst]);
        out.push(edge(&s.0, s.1, &d.0, d.1, etypes[rng.gen_range(0..etypes.len())], seq));
    }
    out
}

/// Recursive evaluation of the labeling recurrence on a fixed graph.
pub struct RecurrenceOracle {
    types: HashMap<String, String>,
    // dst -> (seq, edge label, src)
    incoming: HashMap<String, Vec<(u64, String, String)>>,
    memo: HashMap<(String, usize), u64>,
}

impl RecurrenceOracle {
    pub fn new(edges: &[ProvenanceEdge]) -> Self {
        let mut o = RecurrenceOracle {
            types: HashMap::new(),
            incoming: HashMap::new(),
            memo: HashMap::new(),
        };
        for e in edges {
            o.add(e);
        }
        o
    }

    /// Extends the graph by one edge; memoized labels are invalidated.
    pub fn add(&mut self, e: &ProvenanceEdge) {
        self.types.entry(e.src_id.clone()).or_insert_with(|| e.src_label.clone());
        self.types.entry(e.dst_id.clone()).or_insert_with(|| e.dst_label.clone());
        self.incoming
            .entry(e.dst_id.clone())
            .or_default()
            .push((e.seq, e.edge_label.clone(), e.src_id.clone()));
        self.memo.clear();
    }

    pub fn has_incoming(&self, v: &str) -> bool {
        self.incoming.get(v).is_some_and(|l| !l.is_empty())
    }

    /// `l_i(v)`; a vertex without in-edges keeps `l_0` at every level.
    pub fn label(&mut self, v: &str, i: usize) -> u64 {
        if let Some(&l) = self.memo.get(&(v.to_string(), i)) {
            return l;
        }
        let l0 = stable_hash_str(&self.types[v]);
        let result = if i == 0 || !self.has_incoming(v) {
            l0
        } else {
            let incoming = self.incoming[v].clone();
            let mut entries: Vec<(u64, u64, u64)> = incoming
                .iter()
                .map(|(seq, el, w)| {
                    if i == 1 {
                        (*seq, stable_hash_str(el), self.label(w, 0))
                    } else {
                        (*seq, self.label(w, i - 1), 0)
                    }
                })
                .collect();
            entries.sort_unstable();
            let mut h = StableHasher::new();
            h.write_u64(self.label(v, i - 1));
            for (_, a, b) in entries {
                h.write_u64(a);
                if i == 1 {
                    h.write_u64(b);
                }
            }
            h.finish()
        };
        self.memo.insert((v.to_string(), i), result);
        result
    }
}

/// Emission multiset obtained by replaying the stream edge by edge: every new
/// vertex contributes `l_0`, and after each edge the destination contributes
/// `l_1..l_R` evaluated on the prefix graph.
pub fn step_replay_emissions(edges: &[ProvenanceEdge], hops: usize) -> Vec<u64> {
    let mut oracle = RecurrenceOracle::new(&[]);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for e in edges {
        for (id, ty) in [(&e.src_id, &e.src_label), (&e.dst_id, &e.dst_label)] {
            if seen.insert(id.clone()) {
                out.push(stable_hash_str(ty));
            }
        }
        oracle.add(e);
        for i in 1..=hops {
            out.push(oracle.label(&e.dst_id, i));
        }
    }
    out.sort_unstable();
    out
}

/// Eager reference for the decayed histogram: every tick scales every count
/// and removes entries that fell below `eps`.
pub struct EagerHistogram {
    pub counts: HashMap<u64, f64>,
    factor: f64,
    eps: f64,
}

impl EagerHistogram {
    pub fn new(lambda: f64, eps: f64) -> Self {
        EagerHistogram {
            counts: HashMap::new(),
            factor: (-lambda).exp(),
            eps,
        }
    }

    pub fn observe(&mut self, x: u64) {
        for c in self.counts.values_mut() {
            *c *= self.factor;
        }
        let eps = self.eps;
        self.counts.retain(|_, c| *c >= eps);
        *self.counts.entry(x).or_insert(0.0) += 1.0;
    }
}

/// Direct min-max similarity over normalized weights.
pub fn minmax_oracle(a: &HashMap<u64, f64>, b: &HashMap<u64, f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &x) in a {
        let y = b.get(k).copied().unwrap_or(0.0);
        num += x.min(y);
        den += x.max(y);
    }
    for (k, &y) in b {
        if !a.contains_key(k) {
            den += y;
        }
    }
    num / den
}

/// Sketch whose positions hold the given labels, each with a fixed score.
pub fn labeled_sketch(labels: Vec<u64>, seed: u64) -> GraphSketch {
    let hashes = labels.iter().map(|&l| 1.0 + (l % 97) as f64).collect();
    GraphSketch::from_parts(labels, hashes, seed, 0).unwrap()
}

/// Minimum total member-to-nearest-medoid cost over all `k`-subsets.
pub fn brute_force_medoids(dist: &dyn Fn(usize, usize) -> f64, n: usize, k: usize) -> (f64, Vec<usize>) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>), dist: &dyn Fn(usize, usize) -> f64) {
        if cur.len() == k {
            let cost: f64 = (0..n)
                .map(|p| cur.iter().map(|&m| dist(p, m)).fold(f64::INFINITY, f64::min))
                .sum();
            if cost < best.0 - 1e-12 {
                *best = (cost, cur.clone());
            }
            return;
        }
        for m in start..n {
            cur.push(m);
            rec(m + 1, n, k, cur, best, dist);
            cur.pop();
        }
    }
    let mut best = (f64::INFINITY, Vec::new());
    rec(0, n, k, &mut Vec::new(), &mut best, dist);
    best
}
