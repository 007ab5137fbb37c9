//! Command-line front end. [`run`] returns the process exit status:
//! 0 benign / success, 1 anomalous (detect only), 2 error.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{Overrides, RunConfig};
use crate::detect::{cross_validate, write_metrics_csv, write_verdicts_csv, DetectionReport, StreamDetector};
use crate::error::{Error, Result};
use crate::ingest::{demultiplex, read_edges_from_path, EdgeReader, Format, ProvenanceEdge};
use crate::model::{train, EvolutionaryModel};
use crate::pipeline::sketch_stream;
use crate::simgen::{generate, write_native, ScenarioSpec};

#[derive(Debug, Parser)]
#[command(name = "provsketch", version, about = "Streaming provenance-graph sketching and anomaly detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Settings shared by all subcommands. Unset flags fall back to the config
/// file, then to the defaults shown.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// WL hop count R [default: 3]
    #[arg(long, global = true)]
    pub hops: Option<usize>,
    /// Sketch length |S| [default: 2000]
    #[arg(long, global = true)]
    pub sketch_size: Option<usize>,
    /// Decay factor lambda per emitted label [default: 0.02]
    #[arg(long, global = true)]
    pub decay: Option<f64>,
    /// Emitted labels between sketches [default: 3000]
    #[arg(long, global = true)]
    pub interval: Option<u64>,
    /// Edges read per ingestion batch [default: 6000]
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    /// Seed for sketch hashing, clustering and fold shuffling [default: 0]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input format: native (JSON lines) or streamspot (TSV) [default: native]
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Scales every cluster threshold at detection time [default: 1.0]
    #[arg(long, global = true)]
    pub threshold_multiplier: Option<f64>,
    /// Reject edges into vertices that already have out-edges [default: off]
    #[arg(long, global = true)]
    pub strict_order: bool,
    /// key=value settings file; flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

impl ConfigArgs {
    fn flag_overrides(&self) -> Overrides {
        Overrides {
            hops: self.hops,
            sketch_size: self.sketch_size,
            lambda: self.decay,
            interval: self.interval,
            batch_size: self.batch_size,
            seed: self.seed,
            format: self.format,
            threshold_multiplier: self.threshold_multiplier,
            strict_partial_order: self.strict_order.then_some(true),
        }
    }

    /// File values overlaid by flag values.
    pub fn overrides(&self) -> Result<Overrides> {
        let file = match &self.config {
            Some(p) => Overrides::from_path(p)?,
            None => Overrides::default(),
        };
        Ok(file.merged(&self.flag_overrides()))
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a model from benign streams (one sub-model per graph)
    Train {
        /// Input files; each graph id inside becomes one training graph
        #[arg(required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        /// Where to write the model
        #[arg(long)]
        out: PathBuf,
    },
    /// Monitor a stream; exit 0 if benign, 1 if anomalous
    Detect {
        /// Input file, or - for stdin
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Verdict CSV; a directory of per-graph CSVs when the input holds several graphs
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate on benign and attack graphs
    Eval {
        /// Benign input file or directory
        #[arg(long)]
        benign: PathBuf,
        /// Attack input file or directory
        #[arg(long)]
        attack: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Metrics CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic stream in the native format
    Simgen {
        /// Scenario JSON; defaults to the built-in baseline workload
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Use the built-in baseline workload with an injected attack
        #[arg(long, conflicts_with = "spec")]
        attack: bool,
        /// Output file (stdout if omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print or save the sketches of a stream
    SketchDump {
        input: PathBuf,
        /// Binary sketch records; a summary is printed either way
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and executes the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let overrides = cli.config.overrides()?;
    let mut config = RunConfig::default();
    config.apply(&overrides);
    config.validate()?;
    match &cli.command {
        Command::Train { inputs, out } => cmd_train(inputs, out, &config).map(|_| 0),
        Command::Detect { input, model, out } => cmd_detect(input, model, out.as_deref(), &overrides, &config),
        Command::Eval {
            benign,
            attack,
            folds,
            out,
        } => cmd_eval(benign, attack, *folds, out.as_deref(), &config).map(|_| 0),
        Command::Simgen { spec, attack, out } => cmd_simgen(spec.as_deref(), *attack, out.as_deref(), &cli.config).map(|_| 0),
        Command::SketchDump { input, out } => cmd_sketch_dump(input, out.as_deref(), &config).map(|_| 0),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Files under `path` (recursively, sorted), or `path` itself.
fn input_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = entry.map_err(|e| Error::io(&dir, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// All graphs in the given files, in order of first appearance.
fn load_graphs(paths: &[PathBuf], format: Format) -> Result<Vec<(String, Vec<ProvenanceEdge>)>> {
    let mut files = Vec::new();
    for p in paths {
        files.extend(input_files(p)?);
    }
    let parsed = files
        .par_iter()
        .map(|f| read_edges_from_path(f, format).map(|edges| (f, edges)))
        .collect::<Result<Vec<_>>>()?;
    let mut graphs = Vec::new();
    for (file, edges) in parsed {
        for g in demultiplex(edges) {
            let name = if g.graph_id.is_empty() {
                file.display().to_string()
            } else {
                g.graph_id
            };
            graphs.push((name, g.edges));
        }
    }
    Ok(graphs)
}

pub fn cmd_train(inputs: &[PathBuf], out: &Path, config: &RunConfig) -> Result<EvolutionaryModel> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no training inputs".into()));
    }
    let graphs = load_graphs(inputs, config.format)?;
    if graphs.is_empty() {
        return Err(Error::InvalidArgument("training inputs contain no edges".into()));
    }
    let sk_config = config.sketch_config();
    let sequences = graphs
        .par_iter()
        .map(|(name, edges)| {
            let seq = sketch_stream(edges, &sk_config).map_err(|e| Error::InvalidArgument(format!("graph {name}: {e}")))?;
            if seq.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "graph {name} is shorter than one sketch interval ({} labels)",
                    config.interval
                )));
            }
            Ok(seq)
        })
        .collect::<Result<Vec<_>>>()?;
    let model = train(&sequences, config.model_config())?;
    for ((name, edges), (seq, sub)) in graphs.iter().zip(sequences.iter().zip(&model.sub_models)) {
        println!(
            "{name}: {} edges, {} sketches, K={}, evolution length {}",
            edges.len(),
            seq.len(),
            sub.clusters.len(),
            sub.evolution.len()
        );
    }
    model.save(out)?;
    println!("wrote model with {} sub-models to {}", model.sub_models.len(), out.display());
    Ok(model)
}

fn open_input(input: &Path) -> Result<Box<dyn BufRead>> {
    if input == Path::new("-") {
        return Ok(Box::new(BufReader::new(std::io::stdin())));
    }
    let f = File::open(input).map_err(|e| Error::io(input, e))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn cmd_detect(
    input: &Path,
    model_path: &Path,
    out: Option<&Path>,
    overrides: &Overrides,
    config: &RunConfig,
) -> Result<i32> {
    let model = EvolutionaryModel::load(model_path)?;
    overrides.check_frozen(&model.config)?;
    let reports = detect_reader(open_input(input)?, &model, config)?;
    let anomalous = reports.iter().any(|(_, r)| r.anomalous);
    for (name, r) in &reports {
        let alarms: Vec<String> = r
            .verdicts
            .iter()
            .filter(|v| v.anomalous)
            .map(|v| v.stage.to_string())
            .collect();
        println!(
            "{name}: {} sketches, {} ({})",
            r.verdicts.len(),
            if r.anomalous { "ANOMALOUS" } else { "benign" },
            if alarms.is_empty() {
                "no alarms".to_string()
            } else {
                format!("alarms at stages {}", alarms.join(","))
            }
        );
    }
    if let Some(out) = out {
        if reports.len() == 1 {
            let mut w = create(out)?;
            write_verdicts_csv(&mut w, &reports[0].1.verdicts).map_err(|e| Error::io(out, e))?;
            w.flush().map_err(|e| Error::io(out, e))?;
        } else {
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            for (name, r) in &reports {
                let safe: String = name
                    .chars()
                    .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
                    .collect();
                let path = out.join(format!("{safe}.csv"));
                let mut w = create(&path)?;
                write_verdicts_csv(&mut w, &r.verdicts).map_err(|e| Error::io(&path, e))?;
                w.flush().map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    Ok(if anomalous { 1 } else { 0 })
}

/// Single pass over the input, one detector per graph id, in batches.
pub fn detect_reader<R: BufRead>(
    reader: R,
    model: &EvolutionaryModel,
    config: &RunConfig,
) -> Result<Vec<(String, DetectionReport)>> {
    let mut parser = EdgeReader::new(config.format);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut detectors: Vec<(String, StreamDetector)> = Vec::new();
    let mut batch: Vec<ProvenanceEdge> = Vec::with_capacity(config.batch_size.min(1 << 16));
    let mut lines = reader.lines().enumerate();
    loop {
        batch.clear();
        for (n, line) in lines.by_ref() {
            let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            if let Some(edge) = parser
                .parse_line(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?
            {
                batch.push(edge);
                if batch.len() == config.batch_size {
                    break;
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        for edge in &batch {
            let slot = match index.get(&edge.graph_id) {
                Some(&i) => i,
                None => {
                    let det = StreamDetector::new(model, config.threshold_multiplier, config.strict_partial_order)?;
                    detectors.push((edge.graph_id.clone(), det));
                    index.insert(edge.graph_id.clone(), detectors.len() - 1);
                    detectors.len() - 1
                }
            };
            detectors[slot].1.push_edge(edge)?;
        }
    }
    Ok(detectors
        .into_iter()
        .map(|(name, d)| (if name.is_empty() { "stream".to_string() } else { name }, d.finish()))
        .collect())
}

pub fn cmd_eval(benign: &Path, attack: &Path, folds: usize, out: Option<&Path>, config: &RunConfig) -> Result<()> {
    let strip = |gs: Vec<(String, Vec<ProvenanceEdge>)>| gs.into_iter().map(|(_, e)| e).collect::<Vec<_>>();
    let benign = strip(load_graphs(&[benign.to_path_buf()], config.format)?);
    let attack = strip(load_graphs(&[attack.to_path_buf()], config.format)?);
    if folds > benign.len() {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds need at least {folds} benign graphs, found {}",
            benign.len()
        )));
    }
    let report = cross_validate(&benign, &attack, folds, config)?;
    let mut table = Vec::new();
    write_metrics_csv(&mut table, &report).expect("writing to a Vec cannot fail");
    print!("{}", String::from_utf8_lossy(&table));
    if let Some(out) = out {
        std::fs::write(out, &table).map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn cmd_simgen(spec: Option<&Path>, attack: bool, out: Option<&Path>, args: &ConfigArgs) -> Result<()> {
    let seed = args.overrides()?.seed.unwrap_or(0);
    let spec = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let mut s: ScenarioSpec = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
            if let Some(seed) = args.seed {
                s.seed = seed;
            }
            s
        }
        None if attack => ScenarioSpec::baseline_attack(seed),
        None => ScenarioSpec::baseline(seed),
    };
    let edges = generate(&spec)?;
    match out {
        Some(p) => {
            let mut w = create(p)?;
            write_native(&mut w, &edges).map_err(|e| Error::io(p, e))?;
            w.flush().map_err(|e| Error::io(p, e))?;
            println!("wrote {} edges to {}", edges.len(), p.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            write_native(&mut w, &edges).map_err(|e| Error::io("<stdout>", e))?;
            w.flush().map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn cmd_sketch_dump(input: &Path, out: Option<&Path>, config: &RunConfig) -> Result<()> {
    let graphs = load_graphs(&[input.to_path_buf()], config.format)?;
    let mut writer = out.map(create).transpose()?;
    for (name, edges) in &graphs {
        let seq = sketch_stream(edges, &config.sketch_config())?;
        println!("{name}: {} edges, {} sketches", edges.len(), seq.len());
        for (i, sk) in seq.iter().enumerate() {
            let mut distinct = sk.labels().to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            println!("  sketch {i} at clock {}: {} distinct labels", sk.created_at, distinct.len());
            if let (Some(w), Some(p)) = (writer.as_mut(), out) {
                sk.write_to(w).map_err(|e| Error::io(p, e))?;
            }
        }
    }
    if let (Some(mut w), Some(p)) = (writer, out) {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}
