//! Run configuration: baseline defaults, `key=value` files, overrides.

use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::Format;
use crate::model::ModelConfig;
use crate::pipeline::SketchConfig;

pub const DEFAULT_HOPS: usize = 3;
pub const DEFAULT_SKETCH_SIZE: usize = 2000;
pub const DEFAULT_DECAY: f64 = 0.02;
pub const DEFAULT_INTERVAL: u64 = 3000;
pub const DEFAULT_BATCH_SIZE: usize = 6000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_THRESHOLD_MULTIPLIER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub hops: usize,
    pub sketch_size: usize,
    pub lambda: f64,
    pub interval: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub format: Format,
    pub threshold_multiplier: f64,
    pub strict_partial_order: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            hops: DEFAULT_HOPS,
            sketch_size: DEFAULT_SKETCH_SIZE,
            lambda: DEFAULT_DECAY,
            interval: DEFAULT_INTERVAL,
            batch_size: DEFAULT_BATCH_SIZE,
            seed: DEFAULT_SEED,
            format: Format::Native,
            threshold_multiplier: DEFAULT_THRESHOLD_MULTIPLIER,
            strict_partial_order: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.sketch_config().validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.threshold_multiplier > 0.0 && self.threshold_multiplier.is_finite()) {
            return Err(Error::InvalidArgument(
                "threshold multiplier must be finite and > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn sketch_config(&self) -> SketchConfig {
        SketchConfig {
            hops: self.hops,
            sketch_size: self.sketch_size,
            lambda: self.lambda,
            interval: self.interval,
            seed: self.seed,
            strict_partial_order: self.strict_partial_order,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            sketch_size: self.sketch_size,
            seed: self.seed,
            hops: self.hops,
            lambda: self.lambda,
            interval: self.interval,
        }
    }

    /// Adopts the frozen sketching parameters of a trained model.
    pub fn with_model_config(mut self, m: &ModelConfig) -> Self {
        self.sketch_size = m.sketch_size;
        self.seed = m.seed;
        self.hops = m.hops;
        self.lambda = m.lambda;
        self.interval = m.interval;
        self
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        take!(hops, sketch_size, lambda, interval, batch_size, seed, format, threshold_multiplier, strict_partial_order);
    }
}

/// Explicitly set values, from a config file or the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub hops: Option<usize>,
    pub sketch_size: Option<usize>,
    pub lambda: Option<f64>,
    pub interval: Option<u64>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub threshold_multiplier: Option<f64>,
    pub strict_partial_order: Option<bool>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid value {value:?} for {key}")))
}

impl Overrides {
    /// Sets one value. Keys accept `-` or `_` and a few aliases.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "hops" | "hop_count" | "r" => self.hops = Some(parse_value(&key, value)?),
            "sketch_size" => self.sketch_size = Some(parse_value(&key, value)?),
            "decay" | "lambda" | "decay_factor" => self.lambda = Some(parse_value(&key, value)?),
            "interval" | "sketch_interval" => self.interval = Some(parse_value(&key, value)?),
            "batch_size" => self.batch_size = Some(parse_value(&key, value)?),
            "seed" => self.seed = Some(parse_value(&key, value)?),
            "format" => self.format = Some(value.parse()?),
            "threshold_multiplier" => self.threshold_multiplier = Some(parse_value(&key, value)?),
            "strict_order" | "strict_partial_order" => {
                self.strict_partial_order = Some(parse_value(&key, value)?)
            }
            _ => return Err(Error::Parse(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut o = Overrides::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("config line {}: expected key=value", n + 1)))?;
            o.set(k, v)
                .map_err(|e| Error::Parse(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(o)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// `other` wins wherever it sets a value.
    pub fn merged(mut self, other: &Overrides) -> Self {
        macro_rules! over {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        over!(hops, sketch_size, lambda, interval, batch_size, seed, format, threshold_multiplier, strict_partial_order);
        self
    }

    /// Errors if any frozen sketching parameter is set to something other
    /// than what the model was trained with.
    pub fn check_frozen(&self, m: &ModelConfig) -> Result<()> {
        let mut clashes = Vec::new();
        if let Some(v) = self.sketch_size.filter(|&v| v != m.sketch_size) {
            clashes.push(format!("sketch_size {v} (model: {})", m.sketch_size));
        }
        if let Some(v) = self.seed.filter(|&v| v != m.seed) {
            clashes.push(format!("seed {v} (model: {})", m.seed));
        }
        if let Some(v) = self.hops.filter(|&v| v != m.hops) {
            clashes.push(format!("hops {v} (model: {})", m.hops));
        }
        if let Some(v) = self.lambda.filter(|&v| v.to_bits() != m.lambda.to_bits()) {
            clashes.push(format!("decay {v} (model: {})", m.lambda));
        }
        if let Some(v) = self.interval.filter(|&v| v != m.interval) {
            clashes.push(format!("interval {v} (model: {})", m.interval));
        }
        if clashes.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigMismatch(format!(
                "cannot override frozen model settings: {}",
                clashes.join(", ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_baseline() {
        let c = RunConfig::default();
        assert_eq!(
            (c.batch_size, c.sketch_size, c.hops, c.lambda, c.interval),
            (6000, 2000, 3, 0.02, 3000)
        );
        assert_eq!(c.threshold_multiplier, 1.0);
        assert!(!c.strict_partial_order);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn file_then_flags() {
        let file = Overrides::parse("# experiment\nhops = 2\nsketch-size=500\ndecay=0.1 # faster\n\nformat=streamspot\n").unwrap();
        let mut flags = Overrides::default();
        flags.set("hops", "1").unwrap();
        let mut c = RunConfig::default();
        c.apply(&file.merged(&flags));
        assert_eq!(c.hops, 1);
        assert_eq!(c.sketch_size, 500);
        assert_eq!(c.lambda, 0.1);
        assert_eq!(c.format, Format::StreamSpot);
        assert_eq!(c.interval, 3000);
    }

    #[test]
    fn bad_lines_are_reported() {
        assert!(Overrides::parse("hops").unwrap_err().to_string().contains("line 1"));
        assert!(Overrides::parse("x=1").is_err());
        assert!(Overrides::parse("hops=abc").is_err());
    }

    #[test]
    fn frozen_settings() {
        let m = RunConfig::default().model_config();
        let mut o = Overrides::default();
        o.threshold_multiplier = Some(1.5);
        o.sketch_size = Some(2000);
        assert!(o.check_frozen(&m).is_ok());
        o.sketch_size = Some(1000);
        assert!(matches!(o.check_frozen(&m), Err(Error::ConfigMismatch(_))));
    }
}
