//! Evolutionary models: per-graph K-medoids clustering of sketch sequences
//! plus the run-length-compressed order in which clusters were visited.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sketch::{read_u32, read_u64, sketch_distance, GraphSketch};

pub const MODEL_MAGIC: [u8; 4] = *b"UEVM";
pub const MODEL_VERSION: u32 = 1;

/// Largest K tried by [`select_k`] unless overridden.
pub const DEFAULT_K_MAX: usize = 10;

const SWAP_EPS: f64 = 1e-12;

/// Dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    /// Pairwise `1 - sketch_similarity`.
    pub fn from_sketches(sketches: &[GraphSketch]) -> Result<Self> {
        if let Some(first) = sketches.first() {
            for s in sketches {
                if s.len() != first.len() || s.seed() != first.seed() {
                    return Err(Error::SketchMismatch(
                        "sketches differ in size or seed".into(),
                    ));
                }
            }
        }
        let n = sketches.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| sketch_distance(&sketches[i], &sketches[j]).expect("checked above"))
                    .collect()
            })
            .collect();
        Ok(DistanceMatrix::from_fn(n, |i, j| rows[i][j - i - 1]))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Number of points after merging those at distance zero.
    pub fn distinct_count(&self) -> usize {
        (0..self.n)
            .filter(|&i| (0..i).all(|j| self.get(i, j) > 0.0))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Point index of each cluster's medoid, ascending.
    pub medoids: Vec<usize>,
    /// Cluster index (into `medoids`) of every point.
    pub assignment: Vec<usize>,
    /// Sum of point-to-medoid distances.
    pub cost: f64,
}

fn assign(dist: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut assignment = Vec::with_capacity(dist.len());
    let mut cost = 0.0;
    for p in 0..dist.len() {
        let (best, d) = medoids
            .iter()
            .enumerate()
            .map(|(c, &m)| (c, dist.get(p, m)))
            .fold((0, f64::INFINITY), |acc, (c, d)| if d < acc.1 { (c, d) } else { acc });
        assignment.push(best);
        cost += d;
    }
    (assignment, cost)
}

/// PAM: greedy BUILD followed by best-improvement SWAP until no single swap
/// lowers the total distance. `seed` only decides which candidate wins
/// among exact ties.
pub fn kmedoids(dist: &DistanceMatrix, k: usize, seed: u64) -> Result<Clustering> {
    let n = dist.len();
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let distinct = dist.distinct_count();
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds the {distinct} distinct points"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // BUILD
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    {
        let mut best = (usize::MAX, f64::INFINITY);
        for &c in &order {
            let total: f64 = (0..n).map(|j| dist.get(c, j)).sum();
            if total < best.1 {
                best = (c, total);
            }
        }
        medoids.push(best.0);
        for j in 0..n {
            nearest[j] = dist.get(best.0, j);
        }
    }
    while medoids.len() < k {
        let mut best = (usize::MAX, 0.0);
        for &c in &order {
            if medoids.contains(&c) {
                continue;
            }
            let gain: f64 = (0..n).map(|j| (nearest[j] - dist.get(c, j)).max(0.0)).sum();
            if gain > best.1 {
                best = (c, gain);
            }
        }
        debug_assert!(best.0 != usize::MAX, "k <= distinct guarantees a positive gain");
        medoids.push(best.0);
        for j in 0..n {
            nearest[j] = nearest[j].min(dist.get(best.0, j));
        }
    }

    // SWAP
    let (_, mut cost) = assign(dist, &medoids);
    for _ in 0..10_000 {
        // nearest and second-nearest medoid distance per point
        let mut first = vec![(usize::MAX, f64::INFINITY); n];
        let mut second = vec![f64::INFINITY; n];
        for j in 0..n {
            for (slot, &m) in medoids.iter().enumerate() {
                let d = dist.get(j, m);
                if d < first[j].1 {
                    second[j] = first[j].1;
                    first[j] = (slot, d);
                } else if d < second[j] {
                    second[j] = d;
                }
            }
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for slot in 0..medoids.len() {
            for &o in &order {
                if medoids.contains(&o) {
                    continue;
                }
                let mut total = 0.0;
                for j in 0..n {
                    let d_o = dist.get(o, j);
                    let keep = if first[j].0 == slot { second[j] } else { first[j].1 };
                    total += keep.min(d_o);
                }
                let delta = total - cost;
                if delta < -SWAP_EPS && best.map_or(true, |b| delta < b.2) {
                    best = Some((slot, o, delta));
                }
            }
        }
        match best {
            Some((slot, o, _)) => {
                medoids[slot] = o;
                cost = assign(dist, &medoids).1;
            }
            None => break,
        }
    }

    medoids.sort_unstable();
    let (assignment, cost) = assign(dist, &medoids);
    Ok(Clustering {
        medoids,
        assignment,
        cost,
    })
}

/// Mean silhouette coefficient; singleton clusters contribute 0.
pub fn silhouette(dist: &DistanceMatrix, assignment: &[usize], k: usize) -> f64 {
    let n = dist.len();
    if n == 0 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignment[j]] += dist.get(i, j);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if !b.is_finite() {
            continue;
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Picks K in `[2, min(k_max, n - 1)]` maximizing the mean silhouette.
/// Fewer than four points, or fewer than two distinct ones, give K = 1.
pub fn select_k(dist: &DistanceMatrix, k_max: Option<usize>, seed: u64) -> Result<usize> {
    let n = dist.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot choose K for zero points".into()));
    }
    if n < 4 {
        return Ok(1);
    }
    let distinct = dist.distinct_count();
    let upper = k_max.unwrap_or(DEFAULT_K_MAX).min(n - 1).min(distinct);
    if upper < 2 {
        return Ok(1);
    }
    let mut best = (1, f64::NEG_INFINITY);
    for k in 2..=upper {
        let c = kmedoids(dist, k, seed)?;
        let s = silhouette(dist, &c.assignment, k);
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best.0)
}

/// Run-length compression of a time-ordered assignment sequence.
pub fn evolution_trace(assignments: &[usize]) -> Vec<usize> {
    let mut trace: Vec<usize> = Vec::new();
    for &k in assignments {
        if trace.last() != Some(&k) {
            trace.push(k);
        }
    }
    trace
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub medoid: GraphSketch,
    /// Largest member-to-medoid distance seen in training.
    pub threshold: f64,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubModel {
    pub clusters: Vec<Cluster>,
    /// Cluster indices in visiting order, no two consecutive entries equal.
    pub evolution: Vec<usize>,
}

/// Training-time configuration frozen into a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub sketch_size: usize,
    pub seed: u64,
    pub hops: usize,
    pub lambda: f64,
    pub interval: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionaryModel {
    pub config: ModelConfig,
    pub sub_models: Vec<SubModel>,
}

/// Clusters one graph's sketch sequence into a sub-model.
pub fn train_sub_model(sketches: &[GraphSketch], seed: u64) -> Result<SubModel> {
    if sketches.is_empty() {
        return Err(Error::InvalidArgument("training sequence has no sketches".into()));
    }
    let dist = DistanceMatrix::from_sketches(sketches)?;
    let k = select_k(&dist, None, seed)?;
    let clustering = kmedoids(&dist, k, seed)?;
    let clusters = clustering
        .medoids
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let members: Vec<usize> = (0..sketches.len())
                .filter(|&p| clustering.assignment[p] == c)
                .collect();
            let threshold = members
                .iter()
                .map(|&p| dist.get(p, m))
                .fold(0.0, f64::max);
            Cluster {
                medoid: sketches[m].clone(),
                threshold,
                members: members.len(),
            }
        })
        .collect();
    Ok(SubModel {
        clusters,
        evolution: evolution_trace(&clustering.assignment),
    })
}

/// Builds one sub-model per training sequence. The result is never updated.
pub fn train(sequences: &[Vec<GraphSketch>], config: ModelConfig) -> Result<EvolutionaryModel> {
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("no training sequences".into()));
    }
    for (g, seq) in sequences.iter().enumerate() {
        for s in seq {
            if s.len() != config.sketch_size || s.seed() != config.seed {
                return Err(Error::ConfigMismatch(format!(
                    "training graph {g}: sketch (size {}, seed {}) does not match model (size {}, seed {})",
                    s.len(),
                    s.seed(),
                    config.sketch_size,
                    config.seed
                )));
            }
        }
    }
    let sub_models = sequences
        .par_iter()
        .map(|seq| train_sub_model(seq, config.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolutionaryModel { config, sub_models })
}

impl EvolutionaryModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut buf = Vec::new();
        buf.extend_from_slice(&MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&(c.sketch_size as u32).to_le_bytes());
        buf.extend_from_slice(&c.seed.to_le_bytes());
        buf.extend_from_slice(&(c.hops as u32).to_le_bytes());
        buf.extend_from_slice(&c.lambda.to_bits().to_le_bytes());
        buf.extend_from_slice(&c.interval.to_le_bytes());
        buf.extend_from_slice(&(self.sub_models.len() as u32).to_le_bytes());
        for sm in &self.sub_models {
            buf.extend_from_slice(&(sm.clusters.len() as u32).to_le_bytes());
            for cl in &sm.clusters {
                buf.extend_from_slice(&cl.threshold.to_bits().to_le_bytes());
                buf.extend_from_slice(&(cl.members as u64).to_le_bytes());
                buf.extend_from_slice(&cl.medoid.created_at.to_le_bytes());
                cl.medoid.write_to(&mut buf).expect("Vec write");
            }
            buf.extend_from_slice(&(sm.evolution.len() as u32).to_le_bytes());
            for &e in &sm.evolution {
                buf.extend_from_slice(&(e as u32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::Format("model file is empty".into()));
        }
        let mut r = bytes;
        let mut magic = [0u8; 4];
        if r.read_exact(&mut magic).is_err() || magic != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model version {version} (expected {MODEL_VERSION})"
            )));
        }
        let config = ModelConfig {
            sketch_size: read_u32(&mut r)? as usize,
            seed: read_u64(&mut r)?,
            hops: read_u32(&mut r)? as usize,
            lambda: f64::from_bits(read_u64(&mut r)?),
            interval: read_u64(&mut r)?,
        };
        let n_sub = read_u32(&mut r)?;
        let mut sub_models = Vec::new();
        for _ in 0..n_sub {
            let n_clusters = read_u32(&mut r)? as usize;
            let mut clusters = Vec::new();
            for _ in 0..n_clusters {
                let threshold = f64::from_bits(read_u64(&mut r)?);
                let members = read_u64(&mut r)? as usize;
                let created_at = read_u64(&mut r)?;
                let mut medoid = GraphSketch::read_from(&mut r)?
                    .ok_or_else(|| Error::Format("truncated input".into()))?;
                if medoid.len() != config.sketch_size || medoid.seed() != config.seed {
                    return Err(Error::Format("medoid does not match model configuration".into()));
                }
                medoid.created_at = created_at;
                clusters.push(Cluster {
                    medoid,
                    threshold,
                    members,
                });
            }
            let n_evo = read_u32(&mut r)?;
            let mut evolution = Vec::new();
            for _ in 0..n_evo {
                let e = read_u32(&mut r)? as usize;
                if e >= n_clusters {
                    return Err(Error::Format(format!("evolution names missing cluster {e}")));
                }
                evolution.push(e);
            }
            if evolution.is_empty() {
                return Err(Error::Format("empty evolution list".into()));
            }
            sub_models.push(SubModel {
                clusters,
                evolution,
            });
        }
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(EvolutionaryModel { config, sub_models })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
