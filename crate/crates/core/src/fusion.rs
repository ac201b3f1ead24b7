//! Fusion deadline, straggler identification and compression selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channel::{tx_latency_ms, LinkState, PayloadSpec};
use crate::{Error, Result};

pub const DEFAULT_RHO_SET: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];

pub fn validate_rho_set(rho_set: &[u32]) -> Result<()> {
    if rho_set.is_empty() {
        return Err(Error::Config("rho set must not be empty".into()));
    }
    for w in rho_set.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Config(format!(
                "rho set must be strictly ascending, got {rho_set:?}"
            )));
        }
    }
    if let Some(bad) = rho_set.iter().find(|r| !DEFAULT_RHO_SET.contains(r)) {
        return Err(Error::Config(format!("rho {bad} is not one of {DEFAULT_RHO_SET:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadlineParams {
    pub alpha: f64,
    pub lf_min_ms: f64,
    pub lf_max_ms: f64,
}

impl DeadlineParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.lf_min_ms >= 0.0 && self.lf_min_ms <= self.lf_max_ms && self.lf_max_ms.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "deadline bounds must satisfy 0 <= min <= max, got ({}, {})",
                self.lf_min_ms, self.lf_max_ms
            )));
        }
        Ok(())
    }
}

/// How the fusion deadline is set each slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadlineMode {
    /// Deadline shrinks with driving volatility between the link-derived bounds.
    Volatility,
    /// Constant deadline in milliseconds.
    Fixed(f64),
}

impl std::str::FromStr for DeadlineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "volatility" {
            return Ok(DeadlineMode::Volatility);
        }
        if let Some(ms) = s.strip_prefix("fixed:") {
            let v: f64 = ms
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad fixed deadline '{s}'")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("fixed deadline must be > 0, got {v}")));
            }
            return Ok(DeadlineMode::Fixed(v));
        }
        Err(Error::Config(format!(
            "deadline must be 'volatility' or 'fixed:<ms>', got '{s}'"
        )))
    }
}

impl std::fmt::Display for DeadlineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeadlineMode::Volatility => f.write_str("volatility"),
            DeadlineMode::Fixed(ms) => write!(f, "fixed:{ms}"),
        }
    }
}

/// How each selected CAV's compression ratio is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    /// Stragglers get the smallest ratio meeting the deadline.
    Adaptive,
    /// Every CAV uses this ratio.
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavPlan {
    pub rate_mbps: f64,
    pub rho: u32,
    pub latency_ms: f64,
    pub straggler: bool,
    pub late: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionPlan {
    pub deadline_ms: f64,
    pub lf_min_ms: f64,
    pub lf_max_ms: f64,
    pub cavs: BTreeMap<u32, CavPlan>,
    /// Largest chosen-ratio latency over the selected set.
    pub plan_latency_ms: f64,
}

impl FusionPlan {
    pub fn straggler_ids(&self) -> BTreeSet<u32> {
        self.cavs.iter().filter(|(_, c)| c.straggler).map(|(&i, _)| i).collect()
    }

    pub fn late_ids(&self) -> BTreeSet<u32> {
        self.cavs.iter().filter(|(_, c)| c.late).map(|(&i, _)| i).collect()
    }

    pub fn rho_per_cav(&self) -> BTreeMap<u32, u32> {
        self.cavs.iter().map(|(&i, c)| (i, c.rho)).collect()
    }
}

fn worst_rate(selected: &[u32], links: &LinkState) -> Result<f64> {
    if selected.is_empty() {
        return Err(Error::InvalidArgument("selection must not be empty".into()));
    }
    let mut worst = f64::INFINITY;
    for &id in selected {
        worst = worst.min(links.rate(id)?);
    }
    Ok(worst)
}

/// Deadline bounds from the slowest selected link: the feature latency at
/// the largest ratio and at ratio 1.
pub fn deadline_bounds(
    selected: &[u32],
    links: &LinkState,
    payload: &PayloadSpec,
    rho_set: &[u32],
) -> Result<(f64, f64)> {
    let rate = worst_rate(selected, links)?;
    let max_rho = *rho_set
        .last()
        .ok_or_else(|| Error::InvalidArgument("rho set must not be empty".into()))?;
    Ok((
        tx_latency_ms(payload.feature_bits, max_rho as f64, rate)?,
        tx_latency_ms(payload.feature_bits, 1.0, rate)?,
    ))
}

/// `lf_min + (lf_max - lf_min) * exp(-alpha * v_d)`.
pub fn fusion_deadline(v_d: f64, params: &DeadlineParams) -> Result<f64> {
    if !(v_d >= 0.0) {
        return Err(Error::InvalidArgument(format!("volatility must be >= 0, got {v_d}")));
    }
    let e = (-params.alpha * v_d).exp();
    // convex-combination form keeps v_d = 0 exactly at lf_max
    Ok(params.lf_max_ms * e + params.lf_min_ms * (1.0 - e))
}

/// CAVs whose uncompressed feature misses `deadline_ms`.
pub fn identify_stragglers(
    selected: &[u32],
    links: &LinkState,
    payload: &PayloadSpec,
    deadline_ms: f64,
) -> Result<BTreeSet<u32>> {
    let mut out = BTreeSet::new();
    for &id in selected {
        if tx_latency_ms(payload.feature_bits, 1.0, links.rate(id)?)? > deadline_ms {
            out.insert(id);
        }
    }
    Ok(out)
}

/// Smallest ratio in `rho_set` whose latency meets `deadline_ms`, and
/// whether none did (in which case the largest ratio is returned).
pub fn select_compression(
    rate_mbps: f64,
    payload: &PayloadSpec,
    deadline_ms: f64,
    rho_set: &[u32],
) -> Result<(u32, bool)> {
    for &rho in rho_set {
        if tx_latency_ms(payload.feature_bits, rho as f64, rate_mbps)? <= deadline_ms {
            return Ok((rho, false));
        }
    }
    let last = *rho_set
        .last()
        .ok_or_else(|| Error::InvalidArgument("rho set must not be empty".into()))?;
    Ok((last, true))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanInputs<'a> {
    pub payload_bits: f64,
    pub payload: &'a PayloadSpec,
    pub rho_set: &'a [u32],
    pub alpha: f64,
    pub deadline: DeadlineMode,
    pub compression: CompressionMode,
}

/// Deadline, stragglers and per-CAV ratios for one slot.
///
/// `payload_bits` is what each CAV actually sends (features, or raw images
/// for early fusion); deadline bounds always derive from the feature size.
pub fn build_fusion_plan(selected: &[u32], links: &LinkState, v_d: f64, inp: &PlanInputs) -> Result<FusionPlan> {
    let (lf_min, lf_max) = deadline_bounds(selected, links, inp.payload, inp.rho_set)?;
    let deadline = match inp.deadline {
        DeadlineMode::Volatility => {
            let params = DeadlineParams {
                alpha: inp.alpha,
                lf_min_ms: lf_min,
                lf_max_ms: lf_max,
            };
            params.validate()?;
            fusion_deadline(v_d, &params)?
        }
        DeadlineMode::Fixed(ms) => ms,
    };
    let sending = PayloadSpec {
        feature_bits: inp.payload_bits,
        ..*inp.payload
    };
    let mut cavs = BTreeMap::new();
    let mut plan_latency: f64 = 0.0;
    for &id in selected {
        let rate = links.rate(id)?;
        let base = tx_latency_ms(inp.payload_bits, 1.0, rate)?;
        let straggler = base > deadline;
        let (rho, late) = match inp.compression {
            CompressionMode::Adaptive if straggler => select_compression(rate, &sending, deadline, inp.rho_set)?,
            CompressionMode::Adaptive => (1, false),
            CompressionMode::Fixed(r) => {
                let late = tx_latency_ms(inp.payload_bits, r as f64, rate)? > deadline;
                (r, late)
            }
        };
        let latency = tx_latency_ms(inp.payload_bits, rho as f64, rate)?;
        plan_latency = plan_latency.max(latency);
        cavs.insert(
            id,
            CavPlan {
                rate_mbps: rate,
                rho,
                latency_ms: latency,
                straggler,
                late,
            },
        );
    }
    Ok(FusionPlan {
        deadline_ms: deadline,
        lf_min_ms: lf_min,
        lf_max_ms: lf_max,
        cavs,
        plan_latency_ms: plan_latency,
    })
}
