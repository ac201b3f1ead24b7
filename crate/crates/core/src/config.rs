//! Run configuration files and scenario hashing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bandit::{EnsembleParams, PolicyKind};
use crate::channel::{ComputeProfile, PayloadSpec, ThroughputProfile};
use crate::fusion::{validate_rho_set, DeadlineMode, DEFAULT_RHO_SET};
use crate::perception::{CompensationParams, DetectionModel, DEFAULT_CELL_SIZE};
use crate::sim::{E2eConfig, Pipeline, SyntheticConfig};
use crate::world::Scenario;
use crate::{Error, Result};

pub const DEFAULT_SEED_COUNT: u64 = 20;
pub const DEFAULT_E2E_HORIZON: u64 = 10_000;
pub const DEFAULT_SYNTHETIC_HORIZON: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    EndToEnd,
    SyntheticChains,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::EndToEnd => "end-to-end",
            Mode::SyntheticChains => "synthetic-chains",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadUnits {
    /// 1 KB = 1024 bytes.
    #[default]
    Binary,
    /// 1 KB = 1000 bytes.
    Decimal,
}

/// Contents of a run config file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub policy: PolicyKind,
    pub pipeline: Pipeline,
    /// Scenario file, relative to the config file.
    pub scenario: Option<PathBuf>,
    /// `low` or `high`.
    pub profile: String,
    pub band_low: Option<f64>,
    pub band_high: Option<f64>,
    pub rate_jitter: Option<f64>,
    /// `high-end` or `embedded`.
    pub compute: String,
    pub payload_units: PayloadUnits,
    pub horizon: Option<u64>,
    /// Explicit seed list; otherwise `0..seed_count`.
    pub seeds: Option<Vec<u64>>,
    pub seed_count: u64,
    pub budget: usize,
    pub omega: f64,
    pub alpha: f64,
    pub d: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho_set: Vec<u32>,
    pub cell_size: f64,
    pub map_side: f64,
    pub fov_side: f64,
    /// `volatility` or `fixed:<ms>`.
    pub deadline: String,
    pub harbor_deadline_ms: f64,
    pub check_bounds: bool,
    pub output_dir: Option<PathBuf>,
    /// Slots whose fused and ground-truth grids are written as PGM images.
    pub dump_slots: Vec<u64>,
    pub detection: DetectionModel,
    pub synthetic: EnsembleParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::EndToEnd,
            policy: PolicyKind::Alg1,
            pipeline: Pipeline::Adaptive,
            scenario: None,
            profile: "low".into(),
            band_low: None,
            band_high: None,
            rate_jitter: None,
            compute: "high-end".into(),
            payload_units: PayloadUnits::Binary,
            horizon: None,
            seeds: None,
            seed_count: DEFAULT_SEED_COUNT,
            budget: 2,
            omega: 1.0,
            alpha: 0.1,
            d: 0.5,
            beta: 0.34,
            gamma: 0.15,
            rho_set: DEFAULT_RHO_SET.to_vec(),
            cell_size: DEFAULT_CELL_SIZE,
            map_side: 100.0,
            fov_side: 60.0,
            deadline: "volatility".into(),
            harbor_deadline_ms: 500.0,
            check_bounds: false,
            output_dir: None,
            dump_slots: Vec::new(),
            detection: DetectionModel::default(),
            synthetic: EnsembleParams::default(),
        }
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, what: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{}: {}", what.display(), e.message())))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        parse_toml(text, Path::new("<config>"))
    }

    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<ResolvedConfig> {
        let cfg: RunConfig = parse_toml(&read(path)?, path)?;
        cfg.resolve(path.parent())
    }

    /// Loads the scenario file (relative to `base`) and validates everything.
    pub fn resolve(self, base: Option<&Path>) -> Result<ResolvedConfig> {
        let scenario = match &self.scenario {
            Some(p) => {
                let full = base.map(|b| b.join(p)).unwrap_or_else(|| p.clone());
                parse_toml(&read(&full)?, &full)?
            }
            None => Scenario::default(),
        };
        let resolved = ResolvedConfig { run: self, scenario };
        resolved.validate()?;
        Ok(resolved)
    }
}

/// A config with its scenario loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub run: RunConfig,
    pub scenario: Scenario,
}

#[derive(Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
enum HashKey<'a> {
    EndToEnd {
        scenario: &'a Scenario,
        profile: ThroughputProfile,
        payload: PayloadSpec,
        detection: &'a DetectionModel,
        cell_size: f64,
        map_side: f64,
        fov_side: f64,
        budget: usize,
        horizon: u64,
        seeds: &'a [u64],
    },
    SyntheticChains {
        ensemble: &'a EnsembleParams,
        budget: usize,
        horizon: u64,
        seeds: &'a [u64],
    },
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if !(0.0..=1.0).contains(&r.omega) {
            return Err(Error::Config(format!("omega must be in [0, 1], got {}", r.omega)));
        }
        if !(r.alpha > 0.0 && r.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", r.alpha)));
        }
        if !(r.d > 0.0 && r.d.is_finite()) {
            return Err(Error::Config(format!("d must be > 0, got {}", r.d)));
        }
        if !(r.beta >= 0.0 && r.beta.is_finite() && r.gamma >= 0.0 && r.gamma.is_finite()) {
            return Err(Error::Config("beta and gamma must be finite and >= 0".into()));
        }
        validate_rho_set(&r.rho_set)?;
        if self.horizon() == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        let seeds = self.seeds();
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if let Some(&s) = r.dump_slots.iter().find(|&&s| s == 0 || s > self.horizon()) {
            return Err(Error::Config(format!(
                "dump slot {s} is outside 1..={}",
                self.horizon()
            )));
        }
        match r.mode {
            Mode::EndToEnd => self.e2e()?.validate(),
            Mode::SyntheticChains => {
                if r.pipeline != Pipeline::Adaptive {
                    return Err(Error::Config("pipeline applies only to end-to-end mode".into()));
                }
                if !r.dump_slots.is_empty() {
                    return Err(Error::Config("dump_slots applies only to end-to-end mode".into()));
                }
                r.synthetic.validate()?;
                if r.budget == 0 || r.budget > r.synthetic.arms {
                    return Err(Error::Config(format!(
                        "budget must be in 1..={}, got {}",
                        r.synthetic.arms, r.budget
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn horizon(&self) -> u64 {
        self.run.horizon.unwrap_or(match self.run.mode {
            Mode::EndToEnd => DEFAULT_E2E_HORIZON,
            Mode::SyntheticChains => DEFAULT_SYNTHETIC_HORIZON,
        })
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.run
            .seeds
            .clone()
            .unwrap_or_else(|| (0..self.run.seed_count).collect())
    }

    pub fn profile(&self) -> Result<ThroughputProfile> {
        let r = &self.run;
        let mut p = ThroughputProfile::preset(&r.profile)
            .ok_or_else(|| Error::Config(format!("unknown profile '{}' (expected low or high)", r.profile)))?;
        if let Some(v) = r.band_low {
            p.band_low = v;
        }
        if let Some(v) = r.band_high {
            p.band_high = v;
        }
        if let Some(v) = r.rate_jitter {
            p.jitter = v;
        }
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn payload(&self) -> PayloadSpec {
        match self.run.payload_units {
            PayloadUnits::Binary => PayloadSpec::default(),
            PayloadUnits::Decimal => PayloadSpec::decimal(),
        }
    }

    pub fn e2e(&self) -> Result<E2eConfig> {
        let r = &self.run;
        let compute = ComputeProfile::preset(&r.compute).ok_or_else(|| {
            Error::Config(format!(
                "unknown compute profile '{}' (expected high-end or embedded)",
                r.compute
            ))
        })?;
        Ok(E2eConfig {
            scenario: self.scenario.clone(),
            profile: self.profile()?,
            compute,
            payload: self.payload(),
            detection: r.detection,
            compensation: CompensationParams {
                beta: r.beta,
                gamma: r.gamma,
                ..Default::default()
            },
            policy: r.policy,
            pipeline: r.pipeline,
            k: r.budget,
            d: r.d,
            omega: r.omega,
            alpha: r.alpha,
            rho_set: r.rho_set.clone(),
            deadline: r.deadline.parse::<DeadlineMode>()?,
            harbor_deadline_ms: r.harbor_deadline_ms,
            cell_size: r.cell_size,
            map_side: r.map_side,
            fov_side: r.fov_side,
            horizon: self.horizon(),
            check_bounds: r.check_bounds,
        })
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            ensemble: self.run.synthetic,
            k: self.run.budget,
            d: self.run.d,
            horizon: self.horizon(),
            policy: self.run.policy,
            check_bounds: self.run.check_bounds,
        }
    }

    /// SHA-256 over everything that defines the environment being compared:
    /// the world or chain ensemble, links, sensing, budget, horizon and seeds.
    /// Policy, pipeline and tuning knobs are excluded.
    pub fn scenario_hash(&self) -> Result<String> {
        let seeds = self.seeds();
        let r = &self.run;
        let key = match r.mode {
            Mode::EndToEnd => HashKey::EndToEnd {
                scenario: &self.scenario,
                profile: self.profile()?,
                payload: self.payload(),
                detection: &r.detection,
                cell_size: r.cell_size,
                map_side: r.map_side,
                fov_side: r.fov_side,
                budget: r.budget,
                horizon: self.horizon(),
                seeds: &seeds,
            },
            Mode::SyntheticChains => HashKey::SyntheticChains {
                ensemble: &r.synthetic,
                budget: r.budget,
                horizon: self.horizon(),
                seeds: &seeds,
            },
        };
        let bytes = serde_json::to_vec(&key).map_err(|e| Error::Serde(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
