use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use plcrca_core::config::RunConfig;
use plcrca_core::cycle::{flag_productivity, parse_log, segment_cycles, CsvFormat, ExternalLabel, FlagPolicy};
use plcrca_core::ensemble::{feature_names_of, run_stream, ModelKind, RootCauseReport};
use plcrca_core::evalreport::{
    confusion, render_scatter_svg, scatter_points, write_scatter_csv, MetricsRecord,
};
use plcrca_core::sim::{build_plant, generate, GroundTruth, PlantConfig, Preset};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Reads a file, or stdin for `-`.
pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    if path.as_os_str() == "-" {
        std::io::stdin().read_to_end(&mut buf)?;
    } else {
        buf = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    }
    Ok(buf)
}

/// `<out>/<subcommand>-<hash>`, where the hash covers the effective config and every
/// input, so distinct runs never share a directory and identical runs always do.
pub fn run_dir(out: &Path, subcommand: &str, config: &RunConfig, parts: &[&[u8]]) -> Result<PathBuf, CliError> {
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update(serde_json::to_vec(config).map_err(|e| CliError::Internal(e.to_string()))?);
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = hex::encode(h.finalize());
    let dir = out.join(format!("{subcommand}-{}", &digest[..16]));
    fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join("config.json"), &pretty(config)?)?;
    Ok(dir)
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub struct SimulateArgs {
    pub preset: Option<Preset>,
    pub anomaly_rate: Option<f64>,
    pub cycles: Option<usize>,
}

/// Writes `log.csv` and `ground_truth.json`; the plant structure follows the master seed.
pub fn simulate(mut config: RunConfig, args: SimulateArgs, out: &Path) -> Result<PathBuf, CliError> {
    if let Some(p) = args.preset {
        let base = PlantConfig::preset(p);
        let plant = &mut config.plant;
        plant.preset = Some(p);
        plant.d = base.d;
        plant.num_cycles = base.num_cycles;
        plant.num_states = base.num_states;
        plant.ideal_cycle_seconds = base.ideal_cycle_seconds;
    }
    if let Some(r) = args.anomaly_rate {
        config.plant.anomaly_rate = r;
    }
    if let Some(n) = args.cycles {
        config.plant.num_cycles = n;
    }
    config.plant.seed = config.seed;
    config.validate()?;

    let plant = build_plant(&config.plant)?;
    let (log, truth) = generate(&plant, config.seed);
    let dir = run_dir(out, "simulate", &config, &[])?;

    let mut csv = Vec::new();
    plcrca_core::cycle::write_log(&log, &mut csv)?;
    write_file(&dir.join("log.csv"), &csv)?;
    let mut tj = Vec::new();
    truth.write_json(&mut tj)?;
    tj.push(b'\n');
    write_file(&dir.join("ground_truth.json"), &tj)?;

    let flagged = truth.flagged().count();
    println!(
        "cycles {}, flagged {flagged}, signals {}, rows {}",
        truth.cycles.len(),
        log.dim(),
        log.rows.len()
    );
    Ok(dir)
}

pub struct AnalyzeArgs {
    pub input: PathBuf,
    pub model: ModelKind,
    pub labels: Option<PathBuf>,
    pub threads: usize,
    pub tsv: bool,
}

/// Runs one model over the log and writes `reports.jsonl` (plus `checkpoint.json`
/// when the model carries a trained autoencoder).
pub fn analyze(config: RunConfig, args: AnalyzeArgs, out: &Path) -> Result<PathBuf, CliError> {
    config.validate()?;
    let input = read_input(&args.input)?;
    let labels_raw = match &args.labels {
        Some(p) => Some(read_input(p)?),
        None => None,
    };
    let format = if args.tsv { CsvFormat::tsv() } else { CsvFormat::default() };
    let log = parse_log(input.as_slice(), format)?;
    let cycles = segment_cycles(&log);
    let policy = match &labels_raw {
        Some(raw) => {
            let labels: Vec<ExternalLabel> =
                serde_json::from_slice(raw).map_err(|e| CliError::Data(format!("label file: {e}")))?;
            FlagPolicy::External(labels)
        }
        None => config.flag.policy(),
    };
    let flags = flag_productivity(&cycles, &policy)?;
    let flagged = flags.iter().filter(|f| f.is_high_loss()).count();
    info!("{} cycles, {flagged} flagged", cycles.len());

    let started = std::time::Instant::now();
    let (engine, reports) = run_stream(log.dim(), &config, &[args.model], args.threads, cycles.into_iter().zip(flags))?;
    info!("analysis took {:.2}s", started.elapsed().as_secs_f64());

    let model_tag = args.model.name().as_bytes();
    let mut parts: Vec<&[u8]> = vec![model_tag, &input];
    if let Some(l) = &labels_raw {
        parts.push(l);
    }
    let dir = run_dir(out, "analyze", &config, &parts)?;
    let file = fs::File::create(dir.join("reports.jsonl"))?;
    let mut w = BufWriter::new(file);
    for r in &reports {
        writeln!(w, "{}", r.to_json_line(&log.feature_names))?;
    }
    w.flush()?;
    if let Some(iae) = engine.iae() {
        let mut ck = Vec::new();
        iae.save(&mut ck)?;
        write_file(&dir.join("checkpoint.json"), &ck)?;
    }
    println!("model {}, cycles flagged {flagged}, reports {}", args.model, reports.len());
    Ok(dir)
}

/// Parses a JSON-Lines report file; feature names come from the records themselves.
pub fn read_reports(raw: &[u8]) -> Result<(Vec<RootCauseReport>, Vec<String>), CliError> {
    let text = std::str::from_utf8(raw).map_err(|_| CliError::Data("reports are not UTF-8".into()))?;
    let mut names: Option<Vec<String>> = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(line).map_err(|e| CliError::Data(format!("reports line {}: {e}", i + 1)))?;
        let these = feature_names_of(&v).ok_or_else(|| CliError::Data(format!("reports line {}: no scores", i + 1)))?;
        match &names {
            None => names = Some(these),
            Some(n) if *n != these => {
                return Err(CliError::Data(format!("reports line {}: feature set differs from line 1", i + 1)))
            }
            _ => {}
        }
        let r = RootCauseReport::from_json(&v, names.as_deref().unwrap_or_default())
            .map_err(|e| CliError::Data(format!("reports line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok((out, names.unwrap_or_default()))
}

/// Scores reports against ground truth and writes `metrics.json`.
pub fn evaluate(config: RunConfig, reports: &Path, truth: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let reports_raw = read_input(reports)?;
    let truth_raw = read_input(truth)?;
    let (reports, _) = read_reports(&reports_raw)?;
    let truth = GroundTruth::read_json(truth_raw.as_slice()).map_err(|e| CliError::Data(format!("ground truth: {e}")))?;
    let counts = match confusion(&reports, &truth) {
        Ok(c) => c,
        // mixed models are a data problem here, not a usage one
        Err(e) => return Err(CliError::Data(e.to_string())),
    };
    let model = reports.first().map_or("none", |r| r.model.name());
    let record = MetricsRecord::new(model, counts);
    let dir = run_dir(out, "evaluate", &config, &[&reports_raw, &truth_raw])?;
    write_file(&dir.join("metrics.json"), &pretty(&record)?)?;
    println!(
        "{model}: f1 {:.3}, recall {:.3}, precision {:.3}, tp {}, fp {}, fn {}",
        record.f1, record.recall, record.precision, record.tp, record.fp, record.fn_
    );
    Ok(dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Csv,
    Svg,
    Both,
}

/// Writes `scatter.csv` and/or `scatter.svg`.
pub fn report(config: RunConfig, reports: &Path, format: ReportFormat, out: &Path) -> Result<PathBuf, CliError> {
    let raw = read_input(reports)?;
    let (reports, names) = read_reports(&raw)?;
    if reports.is_empty() {
        warn!("no reports; the scatter will be empty");
    }
    let points = scatter_points(&reports, &names);
    let fmt_tag = format!("{format:?}");
    let dir = run_dir(out, "report", &config, &[fmt_tag.as_bytes(), &raw])?;
    if format != ReportFormat::Svg {
        let mut csv = Vec::new();
        write_scatter_csv(&points, &mut csv)?;
        write_file(&dir.join("scatter.csv"), &csv)?;
    }
    if format != ReportFormat::Csv {
        write_file(&dir.join("scatter.svg"), render_scatter_svg(&points, &names).as_bytes())?;
    }
    println!("{} scatter points", points.len());
    Ok(dir)
}
