//! V2V rate allocation, transmission latency and compute profiles.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Band of achievable V2V rates in Mbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputProfile {
    pub band_low: f64,
    pub band_high: f64,
    /// Relative half-width of the uniform jitter applied to each rate.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    0.05
}

impl ThroughputProfile {
    pub fn low() -> Self {
        ThroughputProfile {
            band_low: 15.0,
            band_high: 25.0,
            jitter: default_jitter(),
        }
    }

    pub fn high() -> Self {
        ThroughputProfile {
            band_low: 40.0,
            band_high: 50.0,
            jitter: default_jitter(),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "low" => Some(Self::low()),
            "high" => Some(Self::high()),
            _ => None,
        }
    }

    pub fn without_jitter(mut self) -> Self {
        self.jitter = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.band_low > 0.0 && self.band_low <= self.band_high && self.band_high.is_finite()) {
            return Err(Error::Config(format!(
                "throughput band must satisfy 0 < low <= high, got [{}, {}]",
                self.band_low, self.band_high
            )));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Config(format!("jitter must be in [0, 1), got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Per-frame payload sizes in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub feature_bits: f64,
    pub image_bits: f64,
}

impl Default for PayloadSpec {
    fn default() -> Self {
        PayloadSpec {
            feature_bits: 512.4 * 1024.0 * 8.0,
            image_bits: 2.46 * 1024.0 * 1024.0 * 8.0,
        }
    }
}

impl PayloadSpec {
    /// Same sizes read with 1000-based prefixes.
    pub fn decimal() -> Self {
        PayloadSpec {
            feature_bits: 512.4 * 1000.0 * 8.0,
            image_bits: 2.46 * 1000.0 * 1000.0 * 8.0,
        }
    }
}

/// On-board compute latencies in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeProfile {
    pub feature_extraction_ms: f64,
    pub segmentation_head_ms: f64,
    /// Compression and encoding time, independent of the ratio.
    #[serde(default)]
    pub encoding_ms: f64,
}

impl ComputeProfile {
    pub fn high_end() -> Self {
        ComputeProfile {
            feature_extraction_ms: 8.5,
            segmentation_head_ms: 2.03,
            encoding_ms: 0.0,
        }
    }

    pub fn embedded() -> Self {
        ComputeProfile {
            feature_extraction_ms: 425.7,
            segmentation_head_ms: 3.84,
            encoding_ms: 0.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "high-end" | "high_end" => Some(Self::high_end()),
            "embedded" => Some(Self::embedded()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if !(ok(self.feature_extraction_ms) && ok(self.segmentation_head_ms) && ok(self.encoding_ms)) {
            return Err(Error::Config("compute latencies must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Rates and distances of the connected vehicles in one slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub rates: BTreeMap<u32, f64>,
    pub distances: BTreeMap<u32, f64>,
}

impl LinkState {
    pub fn rate(&self, id: u32) -> Result<f64> {
        self.rates
            .get(&id)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("no link for CAV {id}")))
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

/// Assigns rates by distance rank: the nearest CAV gets `band_high`, the
/// farthest `band_low`, linear in rank in between, then each rate is scaled
/// by a uniform factor in `[1 - jitter, 1 + jitter]` and clipped to the band.
/// Jitter is drawn in rank order.
pub fn allocate_rates(
    distances: &BTreeMap<u32, f64>,
    profile: &ThroughputProfile,
    rng: &mut ChaCha8Rng,
) -> Result<LinkState> {
    for (&id, &d) in distances {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "distance of CAV {id} must be > 0, got {d}"
            )));
        }
    }
    let mut order: Vec<(u32, f64)> = distances.iter().map(|(&i, &d)| (i, d)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n = order.len();
    let mut rates = BTreeMap::new();
    for (rank, &(id, _)) in order.iter().enumerate() {
        let frac = if n > 1 { rank as f64 / (n - 1) as f64 } else { 0.0 };
        let base = profile.band_high - frac * (profile.band_high - profile.band_low);
        let rate = if profile.jitter > 0.0 {
            let f: f64 = rng.gen_range(-1.0..=1.0);
            (base * (1.0 + profile.jitter * f)).clamp(profile.band_low, profile.band_high)
        } else {
            base
        };
        rates.insert(id, rate);
    }
    Ok(LinkState {
        rates,
        distances: distances.clone(),
    })
}

/// Milliseconds needed to send `payload_bits / rho` bits at `rate_mbps`.
pub fn tx_latency_ms(payload_bits: f64, rho: f64, rate_mbps: f64) -> Result<f64> {
    if !(rate_mbps > 0.0) {
        return Err(Error::InvalidArgument(format!("rate must be > 0, got {rate_mbps}")));
    }
    if !(rho >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "compression ratio must be >= 1, got {rho}"
        )));
    }
    Ok(payload_bits / rho / (rate_mbps * 1e6) * 1000.0)
}
