//! Seeded families of restless reward chains.
//!
//! Arm `i` has a level `c_i`; its target state distribution puts weight
//! `exp(-sharpness (r_j - c_i)^2)` on reward state `r_j`. Each kernel row is
//! a Dirichlet draw centred on that target plus a self-transition bonus, so
//! rewards fluctuate around the level with some persistence. Active and
//! passive kernels are drawn independently from the same recipe.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::chain::{RestlessChain, TransitionMatrix};
use crate::rng::{stream_rng, ENSEMBLE};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleParams {
    pub arms: usize,
    pub states: usize,
    /// Arm levels are evenly spaced over `[level_low, level_high]` and shuffled.
    pub level_low: f64,
    pub level_high: f64,
    pub sharpness: f64,
    pub concentration: f64,
    pub stickiness: f64,
    pub floor: f64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            arms: 4,
            states: 4,
            level_low: 0.0,
            level_high: 1.0,
            sharpness: 60.0,
            concentration: 50.0,
            stickiness: 0.5,
            floor: 1e-4,
        }
    }
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<()> {
        if self.arms == 0 {
            return Err(Error::Config("ensemble needs at least one arm".into()));
        }
        if self.states < 2 {
            return Err(Error::Config("ensemble chains need at least two states".into()));
        }
        if !(0.0..=1.0).contains(&self.level_low) || !(self.level_low..=1.0).contains(&self.level_high) {
            return Err(Error::Config(
                "ensemble levels must satisfy 0 <= low <= high <= 1".into(),
            ));
        }
        for (name, v) in [
            ("sharpness", self.sharpness),
            ("concentration", self.concentration),
            ("stickiness", self.stickiness),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("ensemble {name} must be finite and >= 0")));
            }
        }
        if self.concentration == 0.0 {
            return Err(Error::Config("ensemble concentration must be > 0".into()));
        }
        if !(self.floor > 0.0 && self.floor * (self.states as f64) < 1.0) {
            return Err(Error::Config("ensemble floor must be in (0, 1/states)".into()));
        }
        Ok(())
    }

    pub fn reward_states(&self) -> Vec<f64> {
        (0..self.states).map(|j| j as f64 / (self.states - 1) as f64).collect()
    }

    pub fn levels(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.arms;
        let mut lv: Vec<f64> = (0..n)
            .map(|i| {
                if n == 1 {
                    (self.level_low + self.level_high) / 2.0
                } else {
                    self.level_low + (self.level_high - self.level_low) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        lv.shuffle(rng);
        lv
    }
}

fn target(rewards: &[f64], level: f64, sharpness: f64) -> Vec<f64> {
    let w: Vec<f64> = rewards
        .iter()
        .map(|r| (-sharpness * (r - level).powi(2)).exp())
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn draw_kernel(p: &EnsembleParams, tgt: &[f64], rng: &mut ChaCha8Rng) -> Result<TransitionMatrix> {
    let s = tgt.len();
    let mut rows = Vec::with_capacity(s);
    for from in 0..s {
        let mut row = Vec::with_capacity(s);
        for (j, &q) in tgt.iter().enumerate() {
            let stay = if j == from { p.stickiness } else { 0.0 };
            let shape = p.concentration * (q + stay) / (1.0 + p.stickiness);
            let x = if shape > 0.0 {
                Gamma::new(shape, 1.0)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?
                    .sample(rng)
            } else {
                0.0
            };
            row.push(x);
        }
        let total: f64 = row.iter().sum();
        for x in &mut row {
            *x = if total > 0.0 { *x / total } else { 1.0 / s as f64 };
            *x = x.max(p.floor);
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
        // put the residual rounding on the largest entry so rows sum to 1
        let err = 1.0 - row.iter().sum::<f64>();
        let big = (0..s).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
        row[big] += err;
        rows.push(row);
    }
    TransitionMatrix::new(rows)
}

/// Builds the chains for `seed`; initial states are drawn from the target.
pub fn build_ensemble(p: &EnsembleParams, seed: u64) -> Result<Vec<RestlessChain>> {
    p.validate()?;
    let rewards = p.reward_states();
    let mut rng = stream_rng(seed, ENSEMBLE, 0);
    let levels = p.levels(&mut rng);
    let mut chains = Vec::with_capacity(p.arms);
    for &level in &levels {
        let tgt = target(&rewards, level, p.sharpness);
        let active = draw_kernel(p, &tgt, &mut rng)?;
        let passive = draw_kernel(p, &tgt, &mut rng)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut start = tgt.len() - 1;
        for (j, q) in tgt.iter().enumerate() {
            acc += q;
            if u < acc {
                start = j;
                break;
            }
        }
        chains.push(RestlessChain::new(rewards.clone(), active, passive, start)?);
    }
    Ok(chains)
}
