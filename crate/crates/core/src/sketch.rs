//! Consistent weighted sampling sketches of decayed label histograms.
//!
//! For sketch position `j` and label `h` three variables are drawn,
//! `r, c ~ Gamma(2, 1)` and `beta ~ Uniform(0, 1)`, and the label is scored
//!
//! ```text
//! t = floor(ln L_h / r + beta)
//! y = exp(r * (t - beta))
//! a = c / (y * exp(r))        i.e.  ln a = ln c - r * (t - beta + 1)
//! ```
//!
//! Position `j` of the sketch keeps the label with the smallest `a` (ties go to
//! the smaller label). The fraction of positions two sketches agree on
//! estimates the min-max similarity of the underlying histograms. The floor
//! is what makes that estimate unbiased; without it the match rate
//! systematically overshoots.
//!
//! The draws are never materialized: they are recomputed on demand from a
//! counter-based generator keyed by `(seed, h, j)`, so labels that first appear
//! mid-stream get the same variables they would have had at the start.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::hash::mix64;
use crate::histogram::DecayedHistogram;
use crate::wl::Label;

pub const SKETCH_MAGIC: [u8; 4] = *b"UESK";
pub const SKETCH_VERSION: u32 = 1;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const SEED_SALT: u64 = 0x243f_6a88_85a3_08d3;
const INDEX_MULT: u64 = 0xd6e8_feb8_6659_fd93;
const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;
const TWO_POW_NEG_52: f64 = 1.0 / (1u64 << 52) as f64;
const TWO_POW_NEG_32: f64 = 1.0 / (1u64 << 32) as f64;

/// The per-(label, position) random variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwsParams {
    pub r: f64,
    pub c: f64,
    pub beta: f64,
}

#[inline]
fn label_key(seed: u64, label: Label) -> u64 {
    mix64(mix64(seed ^ SEED_SALT) ^ label)
}

#[inline]
fn cell_key(label_key: u64, j: usize) -> u64 {
    mix64(label_key ^ (j as u64 + 1).wrapping_mul(INDEX_MULT))
}

/// Uniform on the open interval (0, 1) from 32 random bits.
#[inline]
fn unit_open32(x: u32) -> f64 {
    (f64::from(x) + 0.5) * TWO_POW_NEG_32
}

/// Uniform on [0, 1) from the top 53 bits.
#[inline]
fn unit_half_open(x: u64) -> f64 {
    (x >> 11) as f64 * TWO_POW_NEG_53
}

#[inline]
fn draw(cell: u64, i: u64) -> u64 {
    mix64(cell.wrapping_add(i.wrapping_mul(GOLDEN)))
}

/// `(u1 * u2, u3 * u4)`: the products whose negated logs are `r` and `c`.
#[inline]
fn gamma_products(cell: u64) -> (f64, f64) {
    let b = draw(cell, 1);
    let p = unit_open32(cell as u32) * unit_open32((cell >> 32) as u32);
    let q = unit_open32(b as u32) * unit_open32((b >> 32) as u32);
    (p, q)
}

#[inline]
fn beta_at(cell: u64) -> f64 {
    unit_half_open(draw(cell, 2))
}

/// Gamma(2,1) variables are `-ln(u1) - ln(u2)`, evaluated as `-ln(u1 * u2)`.
#[inline]
fn params_at(cell: u64) -> CwsParams {
    let (p, q) = gamma_products(cell);
    CwsParams {
        r: -p.ln(),
        c: -q.ln(),
        beta: beta_at(cell),
    }
}

/// Deterministic `(r, c, beta)` for label `h` at sketch position `j`.
pub fn draw_params(h: Label, j: usize, seed: u64) -> CwsParams {
    params_at(cell_key(label_key(seed, h), j))
}

#[inline]
fn log_score_with(p: &CwsParams, ln_count: f64) -> f64 {
    let t = (ln_count / p.r + p.beta).floor();
    p.c.ln() - p.r * (t - p.beta + 1.0)
}

/// Exact `ln a` of a cell.
#[inline]
fn log_score(cell: u64, ln_count: f64) -> f64 {
    log_score_with(&params_at(cell), ln_count)
}

/// Lower bound on `ln x` for positive normal `x`: reading the bits as an
/// integer gives `2^52 * (e + m - 1 + 1023)`, and `(m - 1) ln 2 <= ln m` on [1, 2].
#[inline]
fn ln_lower(x: f64) -> f64 {
    std::f64::consts::LN_2 * (x.to_bits() as f64 * TWO_POW_NEG_52 - 1023.0)
}

/// `ln x - ln_lower(x)` never exceeds this (max of `ln m - (m - 1) ln 2`).
const LN_LOWER_GAP: f64 = 0.0597;
/// Slack for rounding in the bound arithmetic.
const BOUND_SLACK: f64 = 1e-9;

/// Exact `ln a` if it may beat `bound`, `None` when it certainly does not.
///
/// Since `t > ln L / r + beta - 1`, `ln a < ln c - r - ln L` never holds,
/// and both logs on the right are bounded from below without calling `ln`.
#[inline]
fn score_if_below(cell: u64, ln_count: f64, bound: f64) -> Option<f64> {
    let (p, q) = gamma_products(cell);
    // c = -ln q >= -(ln_lower(q) + gap)
    let c_low = -(ln_lower(q) + LN_LOWER_GAP);
    if c_low > 0.0 && ln_lower(c_low) + ln_lower(p) - ln_count - BOUND_SLACK >= bound {
        return None;
    }
    let params = CwsParams {
        r: -p.ln(),
        c: -q.ln(),
        beta: beta_at(cell),
    };
    Some(log_score_with(&params, ln_count))
}

/// `a_{h,j}` for a label with weight `count`, computed as written in the
/// scoring rule (`y` then `a`). Used to cross-check the log-space path.
pub fn hash_value(h: Label, j: usize, seed: u64, count: f64) -> f64 {
    let p = draw_params(h, j, seed);
    let t = (count.ln() / p.r + p.beta).floor();
    let y = (p.r * (t - p.beta)).exp();
    p.c / (y * p.r.exp())
}

/// Fixed-length sketch: one label and its score per position.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSketch {
    labels: Vec<Label>,
    hashes: Vec<f64>,
    seed: u64,
    pub created_at: u64,
}

impl GraphSketch {
    pub fn from_parts(labels: Vec<Label>, hashes: Vec<f64>, seed: u64, created_at: u64) -> Result<Self> {
        if labels.len() != hashes.len() {
            return Err(Error::SketchMismatch(format!(
                "{} labels but {} hash values",
                labels.len(),
                hashes.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("sketch size must be at least 1".into()));
        }
        Ok(GraphSketch {
            labels,
            hashes,
            seed,
            created_at,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn hashes(&self) -> &[f64] {
        &self.hashes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Little-endian record: magic, version, size, seed, then `(label, A)` pairs.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(20 + 16 * self.len());
        buf.extend_from_slice(&SKETCH_MAGIC);
        buf.extend_from_slice(&SKETCH_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.len() as u32).to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        for (l, a) in self.labels.iter().zip(&self.hashes) {
            buf.extend_from_slice(&l.to_le_bytes());
            buf.extend_from_slice(&a.to_bits().to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads one record. Returns `Ok(None)` on a clean end of input.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<GraphSketch>> {
        let mut magic = [0u8; 4];
        match read_fully(r, &mut magic)? {
            0 => return Ok(None),
            4 => {}
            _ => return Err(Error::Format("truncated sketch header".into())),
        }
        if magic != SKETCH_MAGIC {
            return Err(Error::Format("bad sketch magic".into()));
        }
        let version = read_u32(r)?;
        if version != SKETCH_VERSION {
            return Err(Error::Format(format!("unsupported sketch version {version}")));
        }
        let size = read_u32(r)? as usize;
        if size == 0 {
            return Err(Error::Format("sketch size is zero".into()));
        }
        let seed = read_u64(r)?;
        let mut labels = Vec::with_capacity(size.min(1 << 20));
        let mut hashes = Vec::with_capacity(size.min(1 << 20));
        for _ in 0..size {
            labels.push(read_u64(r)?);
            hashes.push(f64::from_bits(read_u64(r)?));
        }
        Ok(Some(GraphSketch {
            labels,
            hashes,
            seed,
            created_at: 0,
        }))
    }
}

fn read_fully<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Format(format!("read failed: {e}"))),
        }
    }
    Ok(filled)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    if read_fully(r, &mut b)? != 4 {
        return Err(Error::Format("truncated input".into()));
    }
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    if read_fully(r, &mut b)? != 8 {
        return Err(Error::Format("truncated input".into()));
    }
    Ok(u64::from_le_bytes(b))
}

/// Builds a sketch from explicit positive weights.
pub fn create_sketch_from_counts(
    counts: &[(Label, f64)],
    size: usize,
    seed: u64,
    created_at: u64,
) -> Result<GraphSketch> {
    if size == 0 {
        return Err(Error::InvalidArgument("sketch size must be at least 1".into()));
    }
    let mut sorted: Vec<(Label, f64)> = counts.iter().copied().filter(|&(_, c)| c > 0.0).collect();
    if sorted.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    // heavy labels first: they tend to win, which makes later rejections cheap
    sorted.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut labels = vec![0; size];
    let mut best = vec![f64::INFINITY; size];
    for &(h, count) in &sorted {
        let key = label_key(seed, h);
        let ln_count = count.ln();
        for j in 0..size {
            if let Some(s) = score_if_below(cell_key(key, j), ln_count, best[j]) {
                if s < best[j] || (s == best[j] && h < labels[j]) {
                    best[j] = s;
                    labels[j] = h;
                }
            }
        }
    }
    let hashes = best.into_iter().map(f64::exp).collect();
    Ok(GraphSketch {
        labels,
        hashes,
        seed,
        created_at,
    })
}

/// Sketch of the histogram's current (decayed) counts.
pub fn create_sketch(hist: &DecayedHistogram, size: usize, seed: u64) -> Result<GraphSketch> {
    create_sketch_from_counts(&hist.counts(), size, seed, hist.clock())
}

/// Incorporates item `x` into `sketch`. `hist` must already include `x`.
///
/// Positions whose current label does not lose to `x` have their score
/// multiplied by `exp(lambda)`, tracking the decay of the histogram.
pub fn update_sketch(sketch: &mut GraphSketch, hist: &DecayedHistogram, x: Label, lambda: f64) -> Result<()> {
    let count = hist.read(x);
    if count <= 0.0 {
        return Err(Error::InvalidArgument(
            "histogram does not contain the updated item".into(),
        ));
    }
    let growth = lambda.exp();
    let key = label_key(sketch.seed, x);
    let ln_count = count.ln();
    for j in 0..sketch.len() {
        let a = log_score(cell_key(key, j), ln_count).exp();
        let grown = sketch.hashes[j] * growth;
        if a < grown || (a == grown && x < sketch.labels[j]) {
            sketch.labels[j] = x;
            sketch.hashes[j] = a;
        } else {
            sketch.hashes[j] = grown;
        }
    }
    sketch.created_at = hist.clock();
    Ok(())
}

/// Min-max similarity `sum(min) / sum(max)` of two normalized histograms.
pub fn minmax_similarity(a: &[(Label, f64)], b: &[(Label, f64)]) -> Result<f64> {
    for side in [a, b] {
        let total: f64 = side.iter().map(|&(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(total));
        }
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by_key(|&(h, _)| h);
    b.sort_unstable_by_key(|&(h, _)| h);
    let (mut i, mut k) = (0, 0);
    let (mut num, mut den) = (0.0, 0.0);
    while i < a.len() || k < b.len() {
        let (wa, wb);
        match (a.get(i), b.get(k)) {
            (Some(x), Some(y)) if x.0 == y.0 => {
                wa = x.1;
                wb = y.1;
                i += 1;
                k += 1;
            }
            (Some(x), Some(y)) if x.0 < y.0 => {
                wa = x.1;
                wb = 0.0;
                i += 1;
            }
            (Some(x), None) => {
                wa = x.1;
                wb = 0.0;
                i += 1;
            }
            (_, Some(y)) => {
                wa = 0.0;
                wb = y.1;
                k += 1;
            }
            (None, None) => unreachable!(),
        }
        num += wa.min(wb);
        den += wa.max(wb);
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Fraction of positions at which the two sketches drew the same sample.
///
/// A sample is the label together with its floor index `t`; since `A_j`
/// depends only on `(label, t, j, seed)`, equal samples have equal scores.
/// Comparing labels alone would overcount positions where the label agrees
/// but `t` does not, which inflates the estimate for small supports.
pub fn sketch_similarity(s1: &GraphSketch, s2: &GraphSketch) -> Result<f64> {
    if s1.len() != s2.len() {
        return Err(Error::SketchMismatch(format!(
            "sizes differ: {} vs {}",
            s1.len(),
            s2.len()
        )));
    }
    if s1.seed != s2.seed {
        return Err(Error::SketchMismatch(format!(
            "seeds differ: {} vs {}",
            s1.seed, s2.seed
        )));
    }
    Ok(matches(s1, s2) as f64 / s1.len() as f64)
}

#[inline]
fn matches(s1: &GraphSketch, s2: &GraphSketch) -> usize {
    s1.labels
        .iter()
        .zip(&s1.hashes)
        .zip(s2.labels.iter().zip(&s2.hashes))
        .filter(|((l1, a1), (l2, a2))| l1 == l2 && same_score(**a1, **a2))
        .count()
}

/// Distinct floor indices change the score by a factor `exp(r)`; this
/// tolerance only absorbs rounding.
#[inline]
fn same_score(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// `1 - sketch_similarity`.
pub fn sketch_distance(s1: &GraphSketch, s2: &GraphSketch) -> Result<f64> {
    sketch_similarity(s1, s2).map(|s| 1.0 - s)
}

/// Decayed histogram that can be sketched at any point of the stream.
///
/// Snapshots are computed from the current counts rather than maintained
/// item by item: the histogram support is bounded by the decay, and one
/// snapshot per interval costs far less than `|S|` score evaluations per item.
#[derive(Debug, Clone)]
pub struct StreamingSketcher {
    hist: DecayedHistogram,
    size: usize,
    seed: u64,
}

impl StreamingSketcher {
    pub fn new(size: usize, seed: u64, lambda: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("sketch size must be at least 1".into()));
        }
        Ok(StreamingSketcher {
            hist: DecayedHistogram::new(lambda)?,
            size,
            seed,
        })
    }

    pub fn histogram(&self) -> &DecayedHistogram {
        &self.hist
    }

    pub fn clock(&self) -> u64 {
        self.hist.clock()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn observe(&mut self, x: Label) {
        self.hist.observe(x);
    }

    /// Sketch of the current histogram, or `None` before the first item.
    pub fn snapshot(&self) -> Option<GraphSketch> {
        create_sketch(&self.hist, self.size, self.seed).ok()
    }
}
