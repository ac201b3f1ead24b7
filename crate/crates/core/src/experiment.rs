//! Multi-seed runs and their on-disk artifacts, comparison and sweeps.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Mode, ResolvedConfig};
use crate::sim::{
    run_e2e, run_synthetic, summarize_records, Aggregate, CavRecord, SeedAccumulator, SeedSummary, SlotRecord, Summary,
    SLOT_SCHEMA, SUMMARY_SCHEMA,
};
use crate::{Error, Result};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CSV_FILE: &str = "slots.csv";
pub const CONFIG_FILE: &str = "config.json";

/// Column order of `slots.csv`; matches the field order of [`crate::sim::CsvRow`].
pub const CSV_COLUMNS: [&str; 27] = [
    "schema",
    "seed",
    "slot",
    "policy",
    "pipeline",
    "selected",
    "phase",
    "epoch",
    "deadline_ms",
    "v_d",
    "plan_latency_ms",
    "staleness_steps",
    "iou",
    "stragglers",
    "late",
    "realized_total",
    "optimal_total",
    "regret_increment",
    "cumulative_regret",
    "explorations",
    "exploitations",
    "extraction_ms",
    "encoding_ms",
    "transmission_ms",
    "selection_ms",
    "segmentation_ms",
    "total_latency_ms",
];

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Serde(format!("{}: {other:?}", path.display())),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    io(path, fs::write(path, text))
}

struct SeedWriter {
    records_path: PathBuf,
    csv_path: PathBuf,
    records: BufWriter<File>,
    csv: csv::Writer<BufWriter<File>>,
    acc: SeedAccumulator,
}

impl SeedWriter {
    fn create(dir: &Path, seed: u64, horizon: u64) -> Result<SeedWriter> {
        let records_path = dir.join(format!(".records-{seed}.part"));
        let csv_path = dir.join(format!(".slots-{seed}.part"));
        let records = BufWriter::new(io(&records_path, File::create(&records_path))?);
        let csv = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(io(&csv_path, File::create(&csv_path))?));
        Ok(SeedWriter {
            records_path,
            csv_path,
            records,
            csv,
            acc: SeedAccumulator::new(seed, horizon),
        })
    }

    fn push(&mut self, r: &SlotRecord) -> Result<()> {
        let line = serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?;
        io(&self.records_path, writeln!(self.records, "{line}"))?;
        self.csv
            .serialize(r.csv_row())
            .map_err(|e| csv_err(&self.csv_path, e))?;
        self.acc.push(r)
    }

    fn finish(mut self) -> Result<SeedSummary> {
        io(&self.records_path, self.records.flush())?;
        self.csv.flush().map_err(|e| Error::io(&self.csv_path, e))?;
        Ok(self.acc.finish())
    }
}

fn run_seed(cfg: &ResolvedConfig, dir: &Path, seed: u64) -> Result<SeedSummary> {
    let horizon = cfg.horizon();
    let mut w = SeedWriter::create(dir, seed, horizon)?;
    match cfg.run.mode {
        Mode::EndToEnd => {
            let e2e = cfg.e2e()?;
            let dumps = &cfg.run.dump_slots;
            run_e2e(&e2e, seed, |r, grids| {
                if dumps.contains(&r.slot) {
                    let gdir = dir.join("grids");
                    io(&gdir, fs::create_dir_all(&gdir))?;
                    for (tag, g) in [("fused", grids.fused), ("truth", grids.truth)] {
                        let p = gdir.join(format!("seed{seed}_slot{}_{tag}.pgm", r.slot));
                        io(&p, fs::write(&p, g.to_pgm()))?;
                    }
                }
                w.push(r)
            })?;
        }
        Mode::SyntheticChains => {
            let syn = cfg.synthetic();
            let policy = syn.policy.name().to_string();
            run_synthetic(&syn, seed, |s| {
                let cavs = s
                    .selection
                    .selected
                    .iter()
                    .zip(s.rewards)
                    .map(|(&id, &r)| CavRecord {
                        id,
                        realized: r,
                        compensated: Some(r),
                        link: None,
                    })
                    .collect();
                w.push(&SlotRecord {
                    schema: SLOT_SCHEMA.to_string(),
                    seed,
                    slot: s.t,
                    policy: policy.clone(),
                    pipeline: String::new(),
                    selected: s.selection.selected.clone(),
                    phase: Some(s.selection.phase),
                    epoch: s.selection.epoch,
                    deadline_ms: None,
                    lf_min_ms: None,
                    lf_max_ms: None,
                    v_d: None,
                    cavs,
                    plan_latency_ms: 0.0,
                    staleness_steps: 0,
                    iou: None,
                    realized_total: s.realized,
                    optimal_total: s.optimal,
                    regret_increment: s.regret_increment,
                    cumulative_regret: s.cumulative_regret,
                    explorations: s.explorations,
                    exploitations: s.exploitations,
                    latency: None,
                })
            })?;
        }
    }
    w.finish()
}

fn append(out: &mut impl Write, out_path: &Path, part: &Path) -> Result<()> {
    let mut f = io(part, File::open(part))?;
    io(out_path, std::io::copy(&mut f, out))?;
    io(part, fs::remove_file(part))
}

/// Runs every seed (in parallel) and writes the artifacts into `dir`.
pub fn run_experiment(cfg: &ResolvedConfig, dir: &Path) -> Result<Summary> {
    cfg.validate()?;
    io(dir, fs::create_dir_all(dir))?;
    let seeds = cfg.seeds();
    let per_seed: Vec<Result<SeedSummary>> = seeds.par_iter().map(|&s| run_seed(cfg, dir, s)).collect();
    let mut summaries = Vec::with_capacity(seeds.len());
    let mut first_err = None;
    for r in per_seed {
        match r {
            Ok(s) => summaries.push(s),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    if let Some(e) = first_err {
        for &s in &seeds {
            let _ = fs::remove_file(dir.join(format!(".records-{s}.part")));
            let _ = fs::remove_file(dir.join(format!(".slots-{s}.part")));
        }
        return Err(e);
    }

    let records_path = dir.join(RECORDS_FILE);
    let csv_path = dir.join(CSV_FILE);
    let mut records = BufWriter::new(io(&records_path, File::create(&records_path))?);
    let mut csv = BufWriter::new(io(&csv_path, File::create(&csv_path))?);
    io(&csv_path, writeln!(csv, "{}", CSV_COLUMNS.join(",")))?;
    for &s in &seeds {
        append(&mut records, &records_path, &dir.join(format!(".records-{s}.part")))?;
        append(&mut csv, &csv_path, &dir.join(format!(".slots-{s}.part")))?;
    }
    io(&records_path, records.flush())?;
    io(&csv_path, csv.flush())?;

    let summary = Summary {
        schema: SUMMARY_SCHEMA.to_string(),
        config_hash: cfg.scenario_hash()?,
        mode: cfg.run.mode.name().to_string(),
        policy: cfg.run.policy.name().to_string(),
        pipeline: match cfg.run.mode {
            Mode::EndToEnd => cfg.run.pipeline.name().to_string(),
            Mode::SyntheticChains => String::new(),
        },
        horizon: cfg.horizon(),
        aggregate: Aggregate::from_seeds(&summaries)?,
        seeds,
        per_seed: summaries,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    write_json(&dir.join(CONFIG_FILE), cfg)?;
    Ok(summary)
}

/// Reads `summary.json` from a result directory or a direct file path.
pub fn load_summary(path: &Path) -> Result<Summary> {
    let file = if path.is_dir() {
        path.join(SUMMARY_FILE)
    } else {
        path.to_path_buf()
    };
    let text = io(&file, fs::read_to_string(&file))?;
    let raw: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", file.display())))?;
    let schema = raw.get("schema").and_then(|s| s.as_str()).unwrap_or("<none>");
    if schema != SUMMARY_SCHEMA {
        return Err(Error::SchemaMismatch {
            expected: SUMMARY_SCHEMA.into(),
            found: schema.into(),
        });
    }
    serde_json::from_value(raw).map_err(|e| Error::Serde(format!("{}: {e}", file.display())))
}

/// Reads every record of a result directory's stream, in file order.
pub fn read_records(dir: &Path) -> Result<impl Iterator<Item = Result<SlotRecord>>> {
    let path = dir.join(RECORDS_FILE);
    let f = io(&path, File::open(&path))?;
    Ok(BufReader::new(f).lines().map(move |line| {
        let line = line.map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&line).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
    }))
}

/// Recomputes a result's summary from its record stream and checks that it
/// matches the stored document exactly.
pub fn verify_result(dir: &Path) -> Result<Summary> {
    let stored = load_summary(dir)?;
    let per_seed = summarize_records(read_records(dir)?, &stored.seeds, stored.horizon)?;
    let aggregate = Aggregate::from_seeds(&per_seed)?;
    if per_seed != stored.per_seed || aggregate != stored.aggregate {
        return Err(Error::InvalidArgument(format!(
            "{}: summary does not match the record stream",
            dir.display()
        )));
    }
    Ok(stored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FinalRegret,
    PlanLatency,
    TotalLatency,
    Iou,
    Stragglers,
    Deadline,
    ExplorationSlots,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::FinalRegret,
        Metric::PlanLatency,
        Metric::TotalLatency,
        Metric::Iou,
        Metric::Stragglers,
        Metric::Deadline,
        Metric::ExplorationSlots,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FinalRegret => "final_regret",
            Metric::PlanLatency => "plan_latency_ms",
            Metric::TotalLatency => "total_latency_ms",
            Metric::Iou => "iou",
            Metric::Stragglers => "stragglers_per_slot",
            Metric::Deadline => "deadline_ms",
            Metric::ExplorationSlots => "exploration_slots",
        }
    }

    pub fn of(self, s: &Summary) -> Option<f64> {
        let a = &s.aggregate;
        match self {
            Metric::FinalRegret => Some(a.final_regret.mean),
            Metric::PlanLatency => Some(a.mean_plan_latency_ms.mean),
            Metric::TotalLatency => a.mean_total_latency_ms.map(|m| m.mean),
            Metric::Iou => a.mean_iou.map(|m| m.mean),
            Metric::Stragglers => Some(a.stragglers_per_slot.mean),
            Metric::Deadline => a.mean_deadline_ms.map(|m| m.mean),
            Metric::ExplorationSlots => Some(a.exploration_slots.mean),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("unknown metric '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub metric: String,
    pub value: Option<f64>,
    /// `value - reference`.
    pub delta: Option<f64>,
    /// `(value - reference) / |reference|`; absent when the reference is 0.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub source: String,
    pub cells: Vec<ComparisonCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub config_hash: String,
    pub reference: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    /// Flat CSV: one line per (result, metric).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let err = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record(["label", "source", "metric", "value", "delta", "relative_delta"])
            .map_err(err)?;
        for r in &self.rows {
            for c in &r.cells {
                w.write_record([
                    r.label.as_str(),
                    r.source.as_str(),
                    c.metric.as_str(),
                    &fmt(c.value),
                    &fmt(c.delta),
                    &fmt(c.relative),
                ])
                .map_err(err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Tabulates `metrics` for each result against the one labelled `reference`
/// (the first result when `None`). All results must share a scenario hash.
pub fn compare(results: &[(String, Summary)], metrics: &[Metric], reference: Option<&str>) -> Result<Comparison> {
    if results.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two results".into()));
    }
    let hash = &results[0].1.config_hash;
    for (src, s) in results {
        if &s.config_hash != hash {
            return Err(Error::HashMismatch {
                expected: hash.clone(),
                found: format!("{} ({src})", s.config_hash),
            });
        }
    }
    let ref_summary = match reference {
        None => &results[0].1,
        Some(label) => results
            .iter()
            .map(|(_, s)| s)
            .find(|s| s.label() == label)
            .ok_or_else(|| Error::InvalidArgument(format!("no result labelled '{label}'")))?,
    };
    let rows = results
        .iter()
        .map(|(src, s)| ComparisonRow {
            label: s.label(),
            source: src.clone(),
            cells: metrics
                .iter()
                .map(|&m| {
                    let v = m.of(s);
                    let r = m.of(ref_summary);
                    let delta = v.zip(r).map(|(v, r)| v - r);
                    let relative = delta.zip(r).and_then(|(d, r)| (r != 0.0).then(|| d / r.abs()));
                    ComparisonCell {
                        metric: m.name().to_string(),
                        value: v,
                        delta,
                        relative,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(Comparison {
        config_hash: hash.clone(),
        reference: ref_summary.label(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    D,
    K,
    Alpha,
    Omega,
    Profile,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::D => "D",
            SweepAxis::K => "K",
            SweepAxis::Alpha => "alpha",
            SweepAxis::Omega => "omega",
            SweepAxis::Profile => "profile",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(self, base: &ResolvedConfig, value: &str) -> Result<ResolvedConfig> {
        let mut c = base.clone();
        let num = || -> Result<f64> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{}: '{value}' is not a number", self.name())))
        };
        match self {
            SweepAxis::D => c.run.d = num()?,
            SweepAxis::K => {
                c.run.budget = value
                    .parse()
                    .map_err(|_| Error::Config(format!("K: '{value}' is not an integer")))?
            }
            SweepAxis::Alpha => c.run.alpha = num()?,
            SweepAxis::Omega => c.run.omega = num()?,
            SweepAxis::Profile => c.run.profile = value.to_string(),
        }
        c.validate()?;
        Ok(c)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "D" | "d" => SweepAxis::D,
            "K" | "k" | "budget" => SweepAxis::K,
            "alpha" => SweepAxis::Alpha,
            "omega" => SweepAxis::Omega,
            "profile" => SweepAxis::Profile,
            _ => {
                return Err(Error::Config(format!(
                    "unknown sweep axis '{s}' (expected D, K, alpha, omega or profile)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub config_hash: String,
    pub final_regret: f64,
    pub final_regret_se: f64,
    pub exploration_slots: f64,
    pub plan_latency_ms: f64,
    pub deadline_ms: Option<f64>,
    pub iou: Option<f64>,
    pub stragglers_per_slot: f64,
}

/// One run per value, each in `dir/<axis>=<value>`, on at most `workers`
/// threads; returns the aggregate rows in `values` order and writes them to
/// `dir/sweep.csv`.
pub fn sweep(
    base: &ResolvedConfig,
    axis: SweepAxis,
    values: &[String],
    dir: &Path,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs: Vec<ResolvedConfig> = values.iter().map(|v| axis.apply(base, v)).collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let results: Vec<Result<Summary>> = pool.install(|| {
        configs
            .par_iter()
            .zip(values.par_iter())
            .map(|(c, v)| run_experiment(c, &dir.join(format!("{}={v}", axis.name()))))
            .collect()
    });
    let mut rows = Vec::with_capacity(values.len());
    for (r, v) in results.into_iter().zip(values) {
        let s = r?;
        let a = &s.aggregate;
        rows.push(SweepRow {
            axis: axis.name().to_string(),
            value: v.clone(),
            config_hash: s.config_hash.clone(),
            final_regret: a.final_regret.mean,
            final_regret_se: a.final_regret.se,
            exploration_slots: a.exploration_slots.mean,
            plan_latency_ms: a.mean_plan_latency_ms.mean,
            deadline_ms: a.mean_deadline_ms.map(|m| m.mean),
            iou: a.mean_iou.map(|m| m.mean),
            stragglers_per_slot: a.stragglers_per_slot.mean,
        });
    }
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
