//! Per-slot records, their flat CSV form, and run summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bandit::regret::log_grid;
use crate::bandit::Phase;
use crate::{Error, Result};

pub const SLOT_SCHEMA: &str = "bevsel.slot.v1";
pub const SUMMARY_SCHEMA: &str = "bevsel.summary.v1";
pub const CSV_SCHEMA: &str = "bevsel.csv.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavLink {
    pub rate_mbps: f64,
    pub rho: u32,
    pub latency_ms: f64,
    pub straggler: bool,
    pub late: bool,
    /// Whether the feature reached the ego in time to be fused.
    pub included: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavRecord {
    pub id: u32,
    pub realized: f64,
    /// Value reported to the learner; absent when nothing was delivered.
    pub compensated: Option<f64>,
    pub link: Option<CavLink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub extraction_ms: f64,
    pub encoding_ms: f64,
    pub transmission_ms: f64,
    pub selection_ms: f64,
    pub segmentation_ms: f64,
    pub total_ms: f64,
}

impl LatencyBreakdown {
    pub fn new(
        extraction_ms: f64,
        encoding_ms: f64,
        transmission_ms: f64,
        selection_ms: f64,
        segmentation_ms: f64,
    ) -> Self {
        LatencyBreakdown {
            extraction_ms,
            encoding_ms,
            transmission_ms,
            selection_ms,
            segmentation_ms,
            total_ms: extraction_ms + encoding_ms + transmission_ms + selection_ms + segmentation_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub schema: String,
    pub seed: u64,
    pub slot: u64,
    pub policy: String,
    pub pipeline: String,
    pub selected: Vec<u32>,
    /// Absent when no selection is made.
    pub phase: Option<Phase>,
    pub epoch: u32,
    pub deadline_ms: Option<f64>,
    pub lf_min_ms: Option<f64>,
    pub lf_max_ms: Option<f64>,
    pub v_d: Option<f64>,
    pub cavs: Vec<CavRecord>,
    pub plan_latency_ms: f64,
    pub staleness_steps: u64,
    pub iou: Option<f64>,
    pub realized_total: f64,
    pub optimal_total: f64,
    pub regret_increment: f64,
    pub cumulative_regret: f64,
    pub explorations: u32,
    pub exploitations: u32,
    pub latency: Option<LatencyBreakdown>,
}

impl SlotRecord {
    pub fn stragglers(&self) -> usize {
        self.cavs
            .iter()
            .filter(|c| c.link.as_ref().is_some_and(|l| l.straggler))
            .count()
    }

    pub fn late(&self) -> usize {
        self.cavs
            .iter()
            .filter(|c| c.link.as_ref().is_some_and(|l| l.late))
            .count()
    }

    pub fn csv_row(&self) -> CsvRow {
        let ids: Vec<String> = self.selected.iter().map(|i| i.to_string()).collect();
        let lat = self.latency.as_ref();
        CsvRow {
            schema: CSV_SCHEMA.to_string(),
            seed: self.seed,
            slot: self.slot,
            policy: self.policy.clone(),
            pipeline: self.pipeline.clone(),
            selected: ids.join(";"),
            phase: self.phase.map(|p| p.to_string()).unwrap_or_default(),
            epoch: self.epoch,
            deadline_ms: self.deadline_ms,
            v_d: self.v_d,
            plan_latency_ms: self.plan_latency_ms,
            staleness_steps: self.staleness_steps,
            iou: self.iou,
            stragglers: self.stragglers(),
            late: self.late(),
            realized_total: self.realized_total,
            optimal_total: self.optimal_total,
            regret_increment: self.regret_increment,
            cumulative_regret: self.cumulative_regret,
            explorations: self.explorations,
            exploitations: self.exploitations,
            extraction_ms: lat.map(|l| l.extraction_ms),
            encoding_ms: lat.map(|l| l.encoding_ms),
            transmission_ms: lat.map(|l| l.transmission_ms),
            selection_ms: lat.map(|l| l.selection_ms),
            segmentation_ms: lat.map(|l| l.segmentation_ms),
            total_latency_ms: lat.map(|l| l.total_ms),
        }
    }
}

/// One line of `slots.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub schema: String,
    pub seed: u64,
    pub slot: u64,
    pub policy: String,
    pub pipeline: String,
    pub selected: String,
    pub phase: String,
    pub epoch: u32,
    pub deadline_ms: Option<f64>,
    pub v_d: Option<f64>,
    pub plan_latency_ms: f64,
    pub staleness_steps: u64,
    pub iou: Option<f64>,
    pub stragglers: usize,
    pub late: usize,
    pub realized_total: f64,
    pub optimal_total: f64,
    pub regret_increment: f64,
    pub cumulative_regret: f64,
    pub explorations: u32,
    pub exploitations: u32,
    pub extraction_ms: Option<f64>,
    pub encoding_ms: Option<f64>,
    pub transmission_ms: Option<f64>,
    pub selection_ms: Option<f64>,
    pub segmentation_ms: Option<f64>,
    pub total_latency_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    /// Sample mean and standard error (0 for a single value).
    pub fn of(values: &[f64]) -> Option<MeanSe> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Some(MeanSe { mean, se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub slots: u64,
    pub final_regret: f64,
    pub regret_curve: Vec<(u64, f64)>,
    pub mean_realized: f64,
    pub mean_plan_latency_ms: f64,
    pub mean_total_latency_ms: Option<f64>,
    pub mean_iou: Option<f64>,
    pub mean_deadline_ms: Option<f64>,
    pub mean_v_d: Option<f64>,
    pub stragglers: u64,
    pub late: u64,
    /// Slots keyed by their straggler count.
    pub straggler_histogram: BTreeMap<usize, u64>,
    pub exploration_slots: u64,
    pub exploitation_slots: u64,
}

fn opt_mean(sum: f64, n: u64) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// Folds a seed's records, in slot order, into its summary.
#[derive(Debug, Clone)]
pub struct SeedAccumulator {
    seed: u64,
    grid: Vec<u64>,
    next: usize,
    slots: u64,
    last_regret: f64,
    curve: Vec<(u64, f64)>,
    realized: f64,
    plan_latency: f64,
    total_latency: (f64, u64),
    iou: (f64, u64),
    deadline: (f64, u64),
    v_d: (f64, u64),
    stragglers: u64,
    late: u64,
    hist: BTreeMap<usize, u64>,
    explore: u64,
    exploit: u64,
}

impl SeedAccumulator {
    pub fn new(seed: u64, horizon: u64) -> Self {
        SeedAccumulator {
            seed,
            grid: log_grid(horizon),
            next: 0,
            slots: 0,
            last_regret: 0.0,
            curve: Vec::new(),
            realized: 0.0,
            plan_latency: 0.0,
            total_latency: (0.0, 0),
            iou: (0.0, 0),
            deadline: (0.0, 0),
            v_d: (0.0, 0),
            stragglers: 0,
            late: 0,
            hist: BTreeMap::new(),
            explore: 0,
            exploit: 0,
        }
    }

    pub fn push(&mut self, r: &SlotRecord) -> Result<()> {
        if r.seed != self.seed || r.slot != self.slots + 1 {
            return Err(Error::InvalidArgument(format!(
                "record (seed {}, slot {}) out of order; expected seed {} slot {}",
                r.seed,
                r.slot,
                self.seed,
                self.slots + 1
            )));
        }
        self.slots += 1;
        self.last_regret = r.cumulative_regret;
        while self.next < self.grid.len() && self.grid[self.next] == r.slot {
            self.curve.push((r.slot, r.cumulative_regret));
            self.next += 1;
        }
        self.realized += r.realized_total;
        self.plan_latency += r.plan_latency_ms;
        let add = |acc: &mut (f64, u64), v: Option<f64>| {
            if let Some(v) = v {
                acc.0 += v;
                acc.1 += 1;
            }
        };
        add(&mut self.total_latency, r.latency.map(|l| l.total_ms));
        add(&mut self.iou, r.iou);
        add(&mut self.deadline, r.deadline_ms);
        add(&mut self.v_d, r.v_d);
        let s = r.stragglers();
        self.stragglers += s as u64;
        self.late += r.late() as u64;
        *self.hist.entry(s).or_insert(0) += 1;
        match r.phase {
            Some(Phase::Explore) => self.explore += 1,
            Some(Phase::Exploit) => self.exploit += 1,
            _ => {}
        }
        Ok(())
    }

    pub fn finish(self) -> SeedSummary {
        let n = self.slots.max(1) as f64;
        SeedSummary {
            seed: self.seed,
            slots: self.slots,
            final_regret: self.last_regret,
            regret_curve: self.curve,
            mean_realized: self.realized / n,
            mean_plan_latency_ms: self.plan_latency / n,
            mean_total_latency_ms: opt_mean(self.total_latency.0, self.total_latency.1),
            mean_iou: opt_mean(self.iou.0, self.iou.1),
            mean_deadline_ms: opt_mean(self.deadline.0, self.deadline.1),
            mean_v_d: opt_mean(self.v_d.0, self.v_d.1),
            stragglers: self.stragglers,
            late: self.late,
            straggler_histogram: self.hist,
            exploration_slots: self.explore,
            exploitation_slots: self.exploit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub final_regret: MeanSe,
    pub regret_curve: Vec<CurvePoint>,
    pub mean_realized: MeanSe,
    pub mean_plan_latency_ms: MeanSe,
    pub mean_total_latency_ms: Option<MeanSe>,
    pub mean_iou: Option<MeanSe>,
    pub mean_deadline_ms: Option<MeanSe>,
    pub stragglers_per_slot: MeanSe,
    pub straggler_histogram: BTreeMap<usize, u64>,
    pub exploration_slots: MeanSe,
}

impl Aggregate {
    pub fn from_seeds(seeds: &[SeedSummary]) -> Result<Aggregate> {
        if seeds.is_empty() {
            return Err(Error::InvalidArgument("no seeds to aggregate".into()));
        }
        let col = |f: &dyn Fn(&SeedSummary) -> f64| -> MeanSe {
            MeanSe::of(&seeds.iter().map(f).collect::<Vec<_>>()).expect("non-empty")
        };
        let opt_col = |f: &dyn Fn(&SeedSummary) -> Option<f64>| -> Option<MeanSe> {
            let v: Option<Vec<f64>> = seeds.iter().map(f).collect();
            v.and_then(|v| MeanSe::of(&v))
        };
        let points = seeds[0].regret_curve.len();
        let mut curve = Vec::with_capacity(points);
        for i in 0..points {
            let t = seeds[0].regret_curve[i].0;
            let vals: Vec<f64> = seeds
                .iter()
                .filter_map(|s| s.regret_curve.get(i).filter(|p| p.0 == t).map(|p| p.1))
                .collect();
            if vals.len() != seeds.len() {
                return Err(Error::InvalidArgument("seeds have different horizons".into()));
            }
            let m = MeanSe::of(&vals).expect("non-empty");
            curve.push(CurvePoint {
                t,
                mean: m.mean,
                se: m.se,
            });
        }
        let mut hist = BTreeMap::new();
        for s in seeds {
            for (&k, &v) in &s.straggler_histogram {
                *hist.entry(k).or_insert(0) += v;
            }
        }
        Ok(Aggregate {
            final_regret: col(&|s| s.final_regret),
            regret_curve: curve,
            mean_realized: col(&|s| s.mean_realized),
            mean_plan_latency_ms: col(&|s| s.mean_plan_latency_ms),
            mean_total_latency_ms: opt_col(&|s| s.mean_total_latency_ms),
            mean_iou: opt_col(&|s| s.mean_iou),
            mean_deadline_ms: opt_col(&|s| s.mean_deadline_ms),
            stragglers_per_slot: col(&|s| s.stragglers as f64 / s.slots.max(1) as f64),
            straggler_histogram: hist,
            exploration_slots: col(&|s| s.exploration_slots as f64),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: String,
    pub config_hash: String,
    pub mode: String,
    pub policy: String,
    pub pipeline: String,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedSummary>,
    pub aggregate: Aggregate,
}

impl Summary {
    /// Label used in comparison tables.
    pub fn label(&self) -> String {
        if self.mode == "synthetic-chains" {
            self.policy.clone()
        } else {
            format!("{}/{}", self.policy, self.pipeline)
        }
    }
}

/// Rebuilds per-seed summaries from a seed-ordered record stream.
pub fn summarize_records<I>(records: I, seeds: &[u64], horizon: u64) -> Result<Vec<SeedSummary>>
where
    I: IntoIterator<Item = Result<SlotRecord>>,
{
    let mut out = Vec::with_capacity(seeds.len());
    let mut acc: Option<SeedAccumulator> = None;
    let mut seed_iter = seeds.iter();
    for r in records {
        let r = r?;
        if r.schema != SLOT_SCHEMA {
            return Err(Error::SchemaMismatch {
                expected: SLOT_SCHEMA.into(),
                found: r.schema,
            });
        }
        if acc.as_ref().is_none_or(|a| a.seed != r.seed) {
            if let Some(a) = acc.take() {
                out.push(a.finish());
            }
            let s = *seed_iter
                .next()
                .ok_or_else(|| Error::InvalidArgument(format!("unexpected seed {} in records", r.seed)))?;
            if s != r.seed {
                return Err(Error::InvalidArgument(format!("expected seed {s}, found {}", r.seed)));
            }
            acc = Some(SeedAccumulator::new(s, horizon));
        }
        acc.as_mut().expect("set above").push(&r)?;
    }
    if let Some(a) = acc {
        out.push(a.finish());
    }
    if out.len() != seeds.len() {
        return Err(Error::InvalidArgument(format!(
            "records cover {} seeds, summary lists {}",
            out.len(),
            seeds.len()
        )));
    }
    Ok(out)
}
