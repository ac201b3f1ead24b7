//! Slot loop over synthetic restless chains.

use serde::{Deserialize, Serialize};

use crate::bandit::{
    bound_check, build_ensemble, stationary_means, BoundReport, EnsembleParams, PolicyKind, RegretTracker, Selection,
    SlotContext, StationaryAnalysis,
};
use crate::rng::{stream_rng, CHAINS, POLICY};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub ensemble: EnsembleParams,
    pub k: usize,
    pub d: f64,
    pub horizon: u64,
    pub policy: PolicyKind,
    pub check_bounds: bool,
}

/// Everything observable about one synthetic slot.
#[derive(Debug, Clone)]
pub struct SyntheticSlot<'a> {
    pub t: u64,
    pub selection: &'a Selection,
    /// Reward of each selected arm, in `selection.selected` order.
    pub rewards: &'a [f64],
    pub realized: f64,
    pub optimal: f64,
    pub regret_increment: f64,
    pub cumulative_regret: f64,
    pub explorations: u32,
    pub exploitations: u32,
    pub bounds: Option<&'a BoundReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOutcome {
    pub analysis: StationaryAnalysis,
    pub regret: f64,
    pub explorations: u32,
    pub exploitations: u32,
}

/// Runs one seed, calling `on_slot` after every slot.
pub fn run_synthetic<F>(cfg: &SyntheticConfig, seed: u64, mut on_slot: F) -> Result<SyntheticOutcome>
where
    F: FnMut(&SyntheticSlot) -> Result<()>,
{
    let mut chains = build_ensemble(&cfg.ensemble, seed)?;
    let n = chains.len();
    let analysis = stationary_means(&chains, cfg.k)?;
    let mut policy = cfg.policy.build(n, cfg.k, cfg.d, stream_rng(seed, POLICY, 0))?;
    let mut rng = stream_rng(seed, CHAINS, 0);
    let mut tracker = RegretTracker::default();
    let mut hidden = vec![0.0; n];
    let mut mask = vec![false; n];
    let mut rewards = Vec::with_capacity(cfg.k);
    let init_slots = n.div_ceil(cfg.k) as u64;
    for t in 1..=cfg.horizon {
        for (h, c) in hidden.iter_mut().zip(&chains) {
            *h = c.current_reward();
        }
        let sel = policy
            .select(&SlotContext {
                t,
                hidden: Some(&hidden),
            })
            .map_err(|e| e.at_slot(t))?;
        if sel.selected.len() != cfg.k {
            return Err(Error::InvalidArgument(format!(
                "policy selected {} arms, budget {}",
                sel.selected.len(),
                cfg.k
            ))
            .at_slot(t));
        }
        mask.iter_mut().for_each(|m| *m = false);
        for &id in &sel.selected {
            mask[id as usize - 1] = true;
        }
        rewards.clear();
        let mut realized = 0.0;
        for (i, c) in chains.iter_mut().enumerate() {
            if let Some(r) = c.step(mask[i], &mut rng) {
                rewards.push(r);
                realized += r;
                policy.observe(i as u32 + 1, r).map_err(|e| e.at_slot(t))?;
            }
        }
        let inc = tracker.push(analysis.optimal_value, realized);
        let st = policy.state();
        let (ex, ep) = (st.completed_explorations(), st.completed_exploitations());
        let report =
            (cfg.policy == PolicyKind::Alg1 && t > init_slots).then(|| bound_check(ex, ep, t, n, cfg.k, cfg.d));
        if cfg.check_bounds {
            if let Some(r) = &report {
                if !r.passed() {
                    return Err(Error::BoundViolation(r.clone()).at_slot(t));
                }
            }
        }
        on_slot(&SyntheticSlot {
            t,
            selection: &sel,
            rewards: &rewards,
            realized,
            optimal: analysis.optimal_value,
            regret_increment: inc,
            cumulative_regret: tracker.regret(),
            explorations: ex,
            exploitations: ep,
            bounds: report.as_ref(),
        })?;
    }
    let st = policy.state();
    Ok(SyntheticOutcome {
        analysis,
        regret: tracker.regret(),
        explorations: st.completed_explorations(),
        exploitations: st.completed_exploitations(),
    })
}

/// Cumulative regret at each of `checkpoints` (ascending, within the horizon).
pub fn regret_at(cfg: &SyntheticConfig, seed: u64, checkpoints: &[u64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    run_synthetic(cfg, seed, |s| {
        while next < checkpoints.len() && checkpoints[next] == s.t {
            out.push(s.cumulative_regret);
            next += 1;
        }
        Ok(())
    })?;
    if out.len() != checkpoints.len() {
        return Err(Error::InvalidArgument(
            "checkpoints must be ascending and within the horizon".into(),
        ));
    }
    Ok(out)
}
