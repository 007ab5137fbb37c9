//! Streaming anomaly detection against a trained model, plus evaluation.
//!
//! Each sub-model tracks where in its evolution list the monitored stream
//! may currently be. A sketch is accepted by a sub-model if it fits the
//! cluster at a tracked position or the one right after it. Because clusters
//! can overlap, a sketch may fit both; instead of guessing, every consistent
//! position is kept, so a replay of a training sequence can never be rejected
//! because of an early wrong guess.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::ProvenanceEdge;
use crate::model::{train, EvolutionaryModel, SubModel};
use crate::pipeline::{sketch_stream, SketchPipeline};
use crate::sketch::{sketch_distance, GraphSketch};

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    /// Ordinal of the sketch within the stream, from 0.
    pub stage: usize,
    /// Logical time (emitted items) at which the sketch was taken.
    pub clock: u64,
    pub anomalous: bool,
    pub accepted_by: Vec<usize>,
    /// Smallest distance to any candidate cluster medoid.
    pub min_distance: f64,
}

#[derive(Debug, Clone)]
pub struct DetectorState {
    /// Per sub-model: sorted candidate positions in its evolution list.
    positions: Vec<Vec<usize>>,
    multiplier: f64,
    config: crate::model::ModelConfig,
    log: Vec<Verdict>,
}

impl DetectorState {
    pub fn new(model: &EvolutionaryModel, threshold_multiplier: f64) -> Result<Self> {
        if !(threshold_multiplier > 0.0 && threshold_multiplier.is_finite()) {
            return Err(Error::InvalidArgument(
                "threshold multiplier must be finite and > 0".into(),
            ));
        }
        Ok(DetectorState {
            positions: vec![vec![0]; model.sub_models.len()],
            multiplier: threshold_multiplier,
            config: model.config,
            log: Vec::new(),
        })
    }

    pub fn positions(&self) -> &[Vec<usize>] {
        &self.positions
    }

    pub fn alarm_log(&self) -> &[Verdict] {
        &self.log
    }

    pub fn evaluate_sketch(&mut self, sk: &GraphSketch, model: &EvolutionaryModel) -> Result<Verdict> {
        if model.config != self.config || model.sub_models.len() != self.positions.len() {
            return Err(Error::ConfigMismatch("detector state belongs to another model".into()));
        }
        if sk.len() != self.config.sketch_size || sk.seed() != self.config.seed {
            return Err(Error::ConfigMismatch(format!(
                "sketch (size {}, seed {}) does not match model (size {}, seed {})",
                sk.len(),
                sk.seed(),
                self.config.sketch_size,
                self.config.seed
            )));
        }
        let mut accepted_by = Vec::new();
        let mut min_distance = f64::INFINITY;
        for (id, sub) in model.sub_models.iter().enumerate() {
            let (next, d) = step(sub, &self.positions[id], sk, self.multiplier)?;
            min_distance = min_distance.min(d);
            if !next.is_empty() {
                accepted_by.push(id);
                self.positions[id] = next;
            }
        }
        let v = Verdict {
            stage: self.log.len(),
            clock: sk.created_at,
            anomalous: accepted_by.is_empty(),
            accepted_by,
            min_distance,
        };
        self.log.push(v.clone());
        Ok(v)
    }
}

/// Advances one sub-model; returns the new position set (empty on
/// rejection) and the smallest distance to a candidate medoid.
fn step(sub: &SubModel, positions: &[usize], sk: &GraphSketch, multiplier: f64) -> Result<(Vec<usize>, f64)> {
    let mut next = Vec::new();
    let mut min_d = f64::INFINITY;
    let mut cache: Vec<Option<bool>> = vec![None; sub.evolution.len()];
    let mut fits = |p: usize, min_d: &mut f64| -> Result<bool> {
        if let Some(f) = cache[p] {
            return Ok(f);
        }
        let cluster = &sub.clusters[sub.evolution[p]];
        let d = sketch_distance(sk, &cluster.medoid)?;
        *min_d = min_d.min(d);
        let f = d <= cluster.threshold * multiplier;
        cache[p] = Some(f);
        Ok(f)
    };
    for &p in positions {
        if fits(p, &mut min_d)? {
            next.push(p);
        }
        if p + 1 < sub.evolution.len() && fits(p + 1, &mut min_d)? {
            next.push(p + 1);
        }
    }
    next.sort_unstable();
    next.dedup();
    Ok((next, min_d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub verdicts: Vec<Verdict>,
    pub anomalous: bool,
}

/// Evaluates a precomputed sketch sequence from a fresh detector state.
pub fn detect_sketches(sketches: &[GraphSketch], model: &EvolutionaryModel, threshold_multiplier: f64) -> Result<DetectionReport> {
    let mut state = DetectorState::new(model, threshold_multiplier)?;
    for sk in sketches {
        state.evaluate_sketch(sk, model)?;
    }
    let verdicts = state.log;
    let anomalous = verdicts.iter().any(|v| v.anomalous);
    Ok(DetectionReport { verdicts, anomalous })
}

/// Detection over one stream, fed edge by edge.
#[derive(Debug, Clone)]
pub struct StreamDetector<'m> {
    model: &'m EvolutionaryModel,
    pipeline: SketchPipeline,
    state: DetectorState,
    pending: Vec<GraphSketch>,
}

impl<'m> StreamDetector<'m> {
    /// Sketches with the model's frozen settings.
    pub fn new(model: &'m EvolutionaryModel, threshold_multiplier: f64, strict_partial_order: bool) -> Result<Self> {
        let config = RunConfig {
            strict_partial_order,
            ..RunConfig::default()
        }
        .with_model_config(&model.config)
        .sketch_config();
        Ok(StreamDetector {
            model,
            pipeline: SketchPipeline::new(&config)?,
            state: DetectorState::new(model, threshold_multiplier)?,
            pending: Vec::new(),
        })
    }

    /// Returns the verdicts of any sketches this edge completed.
    pub fn push_edge(&mut self, edge: &ProvenanceEdge) -> Result<&[Verdict]> {
        let before = self.state.log.len();
        self.pipeline.push_edge(edge, &mut self.pending)?;
        for sk in self.pending.drain(..) {
            self.state.evaluate_sketch(&sk, self.model)?;
        }
        Ok(&self.state.log[before..])
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    pub fn finish(self) -> DetectionReport {
        let verdicts = self.state.log;
        let anomalous = verdicts.iter().any(|v| v.anomalous);
        DetectionReport { verdicts, anomalous }
    }
}

/// Sketches a stream with the model's frozen settings and evaluates every
/// snapshot as soon as it is taken.
pub fn run_detection<'a, I>(
    edges: I,
    model: &EvolutionaryModel,
    threshold_multiplier: f64,
    strict_partial_order: bool,
) -> Result<DetectionReport>
where
    I: IntoIterator<Item = &'a ProvenanceEdge>,
{
    let mut det = StreamDetector::new(model, threshold_multiplier, strict_partial_order)?;
    for edge in edges {
        det.push_edge(edge)?;
    }
    Ok(det.finish())
}

/// Verdict log: `stage,clock,anomalous,accepted_by,min_distance`.
pub fn write_verdicts_csv<W: Write>(w: &mut W, verdicts: &[Verdict]) -> std::io::Result<()> {
    writeln!(w, "stage,clock,anomalous,accepted_by,min_distance")?;
    for v in verdicts {
        let ids: Vec<String> = v.accepted_by.iter().map(|i| i.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{:.6}",
            v.stage,
            v.clock,
            u8::from(v.anomalous),
            ids.join(";"),
            v.min_distance
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Records one graph: `attack` is the ground truth.
    pub fn record(&mut self, attack: bool, flagged: bool) {
        match (attack, flagged) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub accuracy: Option<f64>,
    pub f_score: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: Confusion) -> Metrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_score = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Metrics {
        precision,
        recall,
        accuracy: ratio(c.tp + c.tn, c.total()),
        f_score,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    /// Indices into the benign list.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub confusion: Confusion,
    pub metrics: Metrics,
    /// Indices of attack graphs that were not flagged.
    pub missed_attacks: Vec<usize>,
    /// Indices of held-out benign graphs that were flagged.
    pub false_alarms: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    /// Per-metric mean over the folds where it is defined.
    pub mean: Metrics,
    /// Confusion counts summed over folds.
    pub pooled: Confusion,
}

/// Deterministic fold membership: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    fold_of
}

/// Cross-validation over precomputed sketch sequences.
pub fn cross_validate_sketches(
    benign: &[Vec<GraphSketch>],
    attack: &[Vec<GraphSketch>],
    folds: usize,
    config: &RunConfig,
) -> Result<CvReport> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if benign.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} benign graphs cannot fill {folds} folds",
            benign.len()
        )));
    }
    let fold_of = fold_assignment(benign.len(), folds, config.seed);
    let results = (0..folds)
        .into_par_iter()
        .map(|f| -> Result<FoldResult> {
            let train_idx: Vec<usize> = (0..benign.len()).filter(|&i| fold_of[i] != f).collect();
            let test_idx: Vec<usize> = (0..benign.len()).filter(|&i| fold_of[i] == f).collect();
            let train_set: Vec<Vec<GraphSketch>> = train_idx.iter().map(|&i| benign[i].clone()).collect();
            let model = train(&train_set, config.model_config())?;
            let mut confusion = Confusion::default();
            let mut false_alarms = Vec::new();
            let mut missed_attacks = Vec::new();
            for &i in &test_idx {
                let flagged = detect_sketches(&benign[i], &model, config.threshold_multiplier)?.anomalous;
                confusion.record(false, flagged);
                if flagged {
                    false_alarms.push(i);
                }
            }
            for (i, seq) in attack.iter().enumerate() {
                let flagged = detect_sketches(seq, &model, config.threshold_multiplier)?.anomalous;
                confusion.record(true, flagged);
                if !flagged {
                    missed_attacks.push(i);
                }
            }
            Ok(FoldResult {
                fold: f,
                train: train_idx,
                test: test_idx,
                confusion,
                metrics: metrics(confusion),
                missed_attacks,
                false_alarms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_of = |get: fn(&Metrics) -> Option<f64>| {
        let vals: Vec<f64> = results.iter().filter_map(|r| get(&r.metrics)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let mean = Metrics {
        precision: mean_of(|m| m.precision),
        recall: mean_of(|m| m.recall),
        accuracy: mean_of(|m| m.accuracy),
        f_score: mean_of(|m| m.f_score),
    };
    let mut pooled = Confusion::default();
    for r in &results {
        pooled.tp += r.confusion.tp;
        pooled.fp += r.confusion.fp;
        pooled.tn += r.confusion.tn;
        pooled.fn_ += r.confusion.fn_;
    }
    Ok(CvReport {
        folds: results,
        mean,
        pooled,
    })
}

/// Sketches every graph once (in parallel), then cross-validates.
pub fn cross_validate(
    benign: &[Vec<ProvenanceEdge>],
    attack: &[Vec<ProvenanceEdge>],
    folds: usize,
    config: &RunConfig,
) -> Result<CvReport> {
    config.validate()?;
    if benign.len() < folds.max(2) {
        return Err(Error::InvalidArgument(format!(
            "{} benign graphs cannot fill {folds} folds",
            benign.len()
        )));
    }
    let sk_config = config.sketch_config();
    let sketch_all = |graphs: &[Vec<ProvenanceEdge>]| {
        graphs
            .par_iter()
            .map(|g| sketch_stream(g, &sk_config))
            .collect::<Result<Vec<_>>>()
    };
    let benign_sk = sketch_all(benign)?;
    let attack_sk = sketch_all(attack)?;
    cross_validate_sketches(&benign_sk, &attack_sk, folds, config)
}

/// Metrics table: one row per fold, then the mean. Undefined values are `NA`.
pub fn write_metrics_csv<W: Write>(w: &mut W, report: &CvReport) -> std::io::Result<()> {
    fn cell(v: Option<f64>) -> String {
        v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
    }
    writeln!(w, "fold,tp,fp,tn,fn,precision,recall,accuracy,f_score")?;
    for r in &report.folds {
        let c = r.confusion;
        let m = r.metrics;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.fold,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            cell(m.precision),
            cell(m.recall),
            cell(m.accuracy),
            cell(m.f_score)
        )?;
    }
    let c = report.pooled;
    let m = report.mean;
    writeln!(
        w,
        "mean,{},{},{},{},{},{},{},{}",
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        cell(m.precision),
        cell(m.recall),
        cell(m.accuracy),
        cell(m.f_score)
    )
}
