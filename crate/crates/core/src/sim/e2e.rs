//! Slot loop over the vehicle world: perception, selection, links, fusion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::record::{CavLink, CavRecord, LatencyBreakdown, SlotRecord, SLOT_SCHEMA};
use crate::bandit::{bound_check, PolicyKind, RegretTracker, Selection, SlotContext};
use crate::channel::{allocate_rates, ComputeProfile, PayloadSpec, ThroughputProfile};
use crate::fusion::{build_fusion_plan, validate_rho_set, CompressionMode, DeadlineMode, FusionPlan, PlanInputs};
use crate::geometry::{normalized_extended_fov, OrientedRect};
use crate::perception::{
    apply_compression_effect, compression_degradation, degrade, iou, marginal_bev_contribution, observe,
    render_ground_truth, BevGrid, CompensationParams, DetectionModel,
};
use crate::rng::{stream_rng, CHANNEL, COMPRESSION, PERCEPTION, POLICY};
use crate::world::{driving_volatility, Scenario, Trajectory, SLOT_MS};
use crate::{Error, Result};

/// Largest collaborator count the hindsight oracle will enumerate.
pub const MAX_E2E_COLLABORATORS: usize = 12;

const MIN_LINK_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Volatility deadline with per-straggler compression.
    Adaptive,
    /// Fixed deadline, no compression; late features are discarded.
    Harbor,
    /// Largest ratio for everyone; the ego waits for all features.
    MaxRho,
    /// Smallest ratio for everyone; the ego waits for all features.
    MinRho,
    /// Raw images instead of features, uncompressed.
    EarlyFusion,
    /// Ego-only perception.
    NoFusion,
}

impl Pipeline {
    pub const ALL: [Pipeline; 6] = [
        Pipeline::Adaptive,
        Pipeline::Harbor,
        Pipeline::MaxRho,
        Pipeline::MinRho,
        Pipeline::EarlyFusion,
        Pipeline::NoFusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Adaptive => "adaptive",
            Pipeline::Harbor => "harbor",
            Pipeline::MaxRho => "max_rho",
            Pipeline::MinRho => "min_rho",
            Pipeline::EarlyFusion => "early_fusion",
            Pipeline::NoFusion => "no_fusion",
        }
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown pipeline '{s}' (expected adaptive, harbor, max_rho, min_rho, early_fusion or no_fusion)"
            ))
        })
    }
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2eConfig {
    pub scenario: Scenario,
    pub profile: ThroughputProfile,
    pub compute: ComputeProfile,
    pub payload: PayloadSpec,
    pub detection: DetectionModel,
    pub compensation: CompensationParams,
    pub policy: PolicyKind,
    pub pipeline: Pipeline,
    pub k: usize,
    pub d: f64,
    pub omega: f64,
    pub alpha: f64,
    pub rho_set: Vec<u32>,
    /// Deadline used by the adaptive pipeline.
    pub deadline: DeadlineMode,
    pub harbor_deadline_ms: f64,
    pub cell_size: f64,
    /// Side of the ego-centred square every map is rendered in, metres.
    pub map_side: f64,
    /// Side of each vehicle's square sensing range, metres.
    pub fov_side: f64,
    pub horizon: u64,
    pub check_bounds: bool,
}

impl E2eConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.profile.validate()?;
        self.compute.validate()?;
        self.detection.validate()?;
        validate_rho_set(&self.rho_set)?;
        let n = self.scenario.collaborators;
        if n > MAX_E2E_COLLABORATORS {
            return Err(Error::Config(format!(
                "end-to-end mode supports at most {MAX_E2E_COLLABORATORS} collaborators, got {n}"
            )));
        }
        if self.k == 0 || self.k > n {
            return Err(Error::Config(format!("budget K must be in 1..={n}, got {}", self.k)));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config(format!("omega must be in [0, 1], got {}", self.omega)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::Config(format!("D must be > 0, got {}", self.d)));
        }
        if !(self.harbor_deadline_ms > 0.0 && self.harbor_deadline_ms.is_finite()) {
            return Err(Error::Config("harbor deadline must be > 0".into()));
        }
        if !(self.cell_size > 0.0 && self.map_side > 0.0 && self.fov_side > 0.0) {
            return Err(Error::Config("cell size, map side and fov side must be > 0".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Grids behind one slot's record.
#[derive(Debug, Clone, Copy)]
pub struct SlotGrids<'a> {
    pub fused: &'a BevGrid,
    /// Ground truth at the instant the fused map is used.
    pub truth: &'a BevGrid,
}

fn fuse_into(acc: &mut BevGrid, g: &BevGrid) -> Result<()> {
    *acc = crate::perception::fuse_bev([&*acc, g])?;
    Ok(())
}

/// Per-member contributions `g_i(S)` on undegraded grids, in `members` order.
fn contributions(
    members: &[u32],
    ego: &BevGrid,
    grids: &BTreeMap<u32, BevGrid>,
    coverage: &BTreeMap<u32, f64>,
    omega: f64,
) -> Result<Vec<f64>> {
    let n = members.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let g = |id: u32| {
        grids
            .get(&id)
            .ok_or_else(|| Error::InvalidArgument(format!("no grid for CAV {id}")))
    };
    // prefix[i] = ego | members[..i], suffix[i] = members[i..]
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(ego.clone());
    for &id in members {
        let mut next = prefix.last().expect("non-empty").clone();
        fuse_into(&mut next, g(id)?)?;
        prefix.push(next);
    }
    let mut suffix: Vec<Option<BevGrid>> = vec![None; n + 1];
    for i in (0..n).rev() {
        let mut next = g(members[i])?.clone();
        if let Some(s) = &suffix[i + 1] {
            fuse_into(&mut next, s)?;
        }
        suffix[i] = Some(next);
    }
    let with = &prefix[n];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut without = prefix[i].clone();
        if let Some(s) = &suffix[i + 1] {
            fuse_into(&mut without, s)?;
        }
        let m = 1.0 - iou(with, &without)?;
        out.push(marginal_bev_contribution(m, coverage[&members[i]], omega));
    }
    Ok(out)
}

/// Best total contribution over subsets of size at most `k`, and the best
/// subset of size exactly `k` (lowest ids on ties).
fn hindsight(
    n: usize,
    k: usize,
    ego: &BevGrid,
    grids: &BTreeMap<u32, BevGrid>,
    coverage: &BTreeMap<u32, f64>,
    omega: f64,
) -> Result<(f64, Vec<u32>)> {
    let mut best_any = 0.0f64;
    let mut best_k: Option<(f64, u32)> = None;
    let mut members = Vec::with_capacity(k);
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size > k {
            continue;
        }
        members.clear();
        members.extend((0..n as u32).filter(|b| mask & (1 << b) != 0).map(|b| b + 1));
        let v: f64 = contributions(&members, ego, grids, coverage, omega)?.iter().sum();
        best_any = best_any.max(v);
        if size == k {
            let better = match best_k {
                None => true,
                Some((bv, bm)) => v > bv || (v == bv && lex_less(mask, bm)),
            };
            if better {
                best_k = Some((v, mask));
            }
        }
    }
    let mask = best_k.map(|b| b.1).unwrap_or(0);
    Ok((
        best_any,
        (0..n as u32).filter(|b| mask & (1 << b) != 0).map(|b| b + 1).collect(),
    ))
}

/// Whether the id set of `a` sorts before that of `b`.
fn lex_less(a: u32, b: u32) -> bool {
    let ids = |m: u32| (0..32u32).filter(move |i| m & (1 << i) != 0);
    ids(a).lt(ids(b))
}

fn plan_for(cfg: &E2eConfig, selected: &[u32], links: &crate::channel::LinkState, v_d: f64) -> Result<FusionPlan> {
    let max_rho = *cfg.rho_set.last().expect("validated non-empty");
    let min_rho = cfg.rho_set[0];
    let (bits, deadline, compression) = match cfg.pipeline {
        Pipeline::Adaptive => (cfg.payload.feature_bits, cfg.deadline, CompressionMode::Adaptive),
        Pipeline::Harbor => (
            cfg.payload.feature_bits,
            DeadlineMode::Fixed(cfg.harbor_deadline_ms),
            CompressionMode::Fixed(1),
        ),
        Pipeline::MaxRho => (cfg.payload.feature_bits, cfg.deadline, CompressionMode::Fixed(max_rho)),
        Pipeline::MinRho => (cfg.payload.feature_bits, cfg.deadline, CompressionMode::Fixed(min_rho)),
        Pipeline::EarlyFusion => (cfg.payload.image_bits, cfg.deadline, CompressionMode::Fixed(1)),
        Pipeline::NoFusion => unreachable!("no plan without fusion"),
    };
    build_fusion_plan(
        selected,
        links,
        v_d,
        &PlanInputs {
            payload_bits: bits,
            payload: &cfg.payload,
            rho_set: &cfg.rho_set,
            alpha: cfg.alpha,
            deadline,
            compression,
        },
    )
}

/// Runs one seed, calling `on_slot` after every slot.
pub fn run_e2e<F>(cfg: &E2eConfig, seed: u64, mut on_slot: F) -> Result<f64>
where
    F: FnMut(&SlotRecord, &SlotGrids) -> Result<()>,
{
    cfg.validate()?;
    let n = cfg.scenario.collaborators;
    let (initial, model) = cfg.scenario.instantiate(seed)?;
    let mut traj = Trajectory::new(initial, model);
    let mut policy = cfg.policy.build(n, cfg.k, cfg.d, stream_rng(seed, POLICY, 0))?;
    let mut tracker = RegretTracker::default();
    let init_slots = n.div_ceil(cfg.k) as u64;
    let fusing = cfg.pipeline != Pipeline::NoFusion;

    for t in 1..=cfg.horizon {
        let w = (t - 1) as usize;
        traj.release_before(w);
        let world = traj.at(w).clone();
        let frame = OrientedRect::square(world.ego.pose, cfg.map_side)?;
        let ego_fov = OrientedRect::square(world.ego.pose, cfg.fov_side)?;
        let gt = render_ground_truth(&world, &frame, cfg.cell_size)?;

        let mut prng = stream_rng(seed, PERCEPTION, t);
        let ego_grid = observe(&gt, &world.ego, &ego_fov, &cfg.detection, &mut prng);
        let mut grids = BTreeMap::new();
        let mut coverage = BTreeMap::new();
        let mut distances = BTreeMap::new();
        for cav in &world.collaborators {
            let fov = OrientedRect::square(cav.pose, cfg.fov_side)?;
            grids.insert(cav.id, observe(&gt, cav, &fov, &cfg.detection, &mut prng));
            coverage.insert(cav.id, normalized_extended_fov(&fov, &ego_fov));
            let d = (cav.pose.x - world.ego.pose.x).hypot(cav.pose.y - world.ego.pose.y);
            distances.insert(cav.id, d.max(MIN_LINK_DISTANCE));
        }
        let (optimal, best_k) = hindsight(n, cfg.k, &ego_grid, &grids, &coverage, cfg.omega)?;
        let links = allocate_rates(&distances, &cfg.profile, &mut stream_rng(seed, CHANNEL, t))?;
        let v_d = driving_volatility(&world, &ego_fov);

        let selection: Option<Selection> = if fusing {
            let mut hidden = vec![0.0; n];
            for &id in &best_k {
                hidden[id as usize - 1] = 1.0;
            }
            let sel = policy
                .select(&SlotContext {
                    t,
                    hidden: Some(&hidden),
                })
                .map_err(|e| e.at_slot(t))?;
            if sel.selected.len() != cfg.k {
                return Err(Error::InvalidArgument(format!(
                    "policy selected {} CAVs, budget {}",
                    sel.selected.len(),
                    cfg.k
                ))
                .at_slot(t));
            }
            Some(sel)
        } else {
            None
        };
        let selected: Vec<u32> = selection.as_ref().map(|s| s.selected.clone()).unwrap_or_default();

        let plan = if fusing {
            Some(plan_for(cfg, &selected, &links, v_d).map_err(|e| e.at_slot(t))?)
        } else {
            None
        };

        // which features make it into the fused map, and how long the ego waits
        let mut included = Vec::new();
        let mut wait_ms: f64 = 0.0;
        if let Some(plan) = &plan {
            let cutoff = match cfg.pipeline {
                Pipeline::Adaptive | Pipeline::Harbor => Some((plan.deadline_ms / SLOT_MS).ceil() * SLOT_MS),
                _ => None,
            };
            let mut dropped = false;
            for (&id, c) in &plan.cavs {
                if cutoff.is_none_or(|e| c.latency_ms <= e) {
                    included.push(id);
                    wait_ms = wait_ms.max(c.latency_ms);
                } else {
                    dropped = true;
                }
            }
            if dropped {
                wait_ms = wait_ms.max(cutoff.expect("only cut-off pipelines drop"));
            }
        }

        let g = contributions(&included, &ego_grid, &grids, &coverage, cfg.omega)?;
        let mut crng = stream_rng(seed, COMPRESSION, t);
        let mut fused = ego_grid.clone();
        let mut realized_total = 0.0;
        let mut cavs = Vec::with_capacity(selected.len());
        let plan_cavs = plan.as_ref().map(|p| &p.cavs);
        for &id in &selected {
            let c = &plan_cavs.expect("selection implies plan")[&id];
            let link = CavLink {
                rate_mbps: c.rate_mbps,
                rho: c.rho,
                latency_ms: c.latency_ms,
                straggler: c.straggler,
                late: c.late,
                included: false,
            };
            match included.iter().position(|&i| i == id) {
                Some(pos) => {
                    let (realized, compensated) = apply_compression_effect(g[pos], c.rho as f64, &cfg.compensation)?;
                    let dg = compression_degradation(c.rho as f64, &cfg.compensation)?;
                    fuse_into(&mut fused, &degrade(&grids[&id], dg, &mut crng))?;
                    policy.observe(id, compensated).map_err(|e| e.at_slot(t))?;
                    realized_total += realized;
                    cavs.push(CavRecord {
                        id,
                        realized,
                        compensated: Some(compensated),
                        link: Some(CavLink { included: true, ..link }),
                    });
                }
                None => cavs.push(CavRecord {
                    id,
                    realized: 0.0,
                    compensated: None,
                    link: Some(link),
                }),
            }
        }

        let staleness = (wait_ms / SLOT_MS).ceil() as u64;
        let truth = if staleness == 0 {
            gt
        } else {
            render_ground_truth(traj.at(w + staleness as usize), &frame, cfg.cell_size)?
        };
        let accuracy = iou(&fused, &truth)?;

        let inc = tracker.push(optimal, realized_total);
        let st = policy.state();
        let (ex, ep) = if fusing {
            (st.completed_explorations(), st.completed_exploitations())
        } else {
            (0, 0)
        };
        if cfg.check_bounds && fusing && cfg.policy == PolicyKind::Alg1 && t > init_slots {
            let r = bound_check(ex, ep, t, n, cfg.k, cfg.d);
            if !r.passed() {
                return Err(Error::BoundViolation(r).at_slot(t));
            }
        }

        let seg = cfg.compute.segmentation_head_ms;
        let latency = match cfg.pipeline {
            Pipeline::NoFusion => LatencyBreakdown::new(cfg.compute.feature_extraction_ms, 0.0, 0.0, 0.0, seg),
            Pipeline::EarlyFusion => LatencyBreakdown::new(
                cfg.compute.feature_extraction_ms * (included.len() + 1) as f64,
                0.0,
                wait_ms,
                seg * (cfg.k + 1) as f64,
                seg,
            ),
            _ => LatencyBreakdown::new(
                cfg.compute.feature_extraction_ms,
                cfg.compute.encoding_ms,
                wait_ms,
                seg * (cfg.k + 1) as f64,
                seg,
            ),
        };

        let record = SlotRecord {
            schema: SLOT_SCHEMA.to_string(),
            seed,
            slot: t,
            policy: cfg.policy.name().to_string(),
            pipeline: cfg.pipeline.name().to_string(),
            selected,
            phase: selection.as_ref().map(|s| s.phase),
            epoch: selection.as_ref().map(|s| s.epoch).unwrap_or(0),
            deadline_ms: plan.as_ref().map(|p| p.deadline_ms),
            lf_min_ms: plan.as_ref().map(|p| p.lf_min_ms),
            lf_max_ms: plan.as_ref().map(|p| p.lf_max_ms),
            v_d: Some(v_d),
            cavs,
            plan_latency_ms: plan.as_ref().map(|p| p.plan_latency_ms).unwrap_or(0.0),
            staleness_steps: staleness,
            iou: Some(accuracy),
            realized_total,
            optimal_total: optimal,
            regret_increment: inc,
            cumulative_regret: tracker.regret(),
            explorations: ex,
            exploitations: ep,
            latency: Some(latency),
        };
        on_slot(
            &record,
            &SlotGrids {
                fused: &fused,
                truth: &truth,
            },
        )?;
    }
    Ok(tracker.regret())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::perception::DEFAULT_CELL_SIZE;

    pub(crate) fn small_config(pipeline: Pipeline) -> E2eConfig {
        E2eConfig {
            scenario: Scenario::default(),
            profile: ThroughputProfile::high(),
            compute: ComputeProfile::high_end(),
            payload: PayloadSpec::default(),
            detection: DetectionModel::default(),
            compensation: CompensationParams::default(),
            policy: PolicyKind::Alg1,
            pipeline,
            k: 2,
            d: 0.5,
            omega: 1.0,
            alpha: 0.1,
            rho_set: crate::fusion::DEFAULT_RHO_SET.to_vec(),
            deadline: DeadlineMode::Volatility,
            harbor_deadline_ms: 500.0,
            cell_size: DEFAULT_CELL_SIZE,
            map_side: 100.0,
            fov_side: 60.0,
            horizon: 30,
            check_bounds: false,
        }
    }

    fn grid_with(cells: &[(usize, usize)]) -> BevGrid {
        let frame = OrientedRect::square(Pose2D::new(0.0, 0.0, 0.0), 4.0).unwrap();
        let mut g = BevGrid::new(frame, 1.0).unwrap();
        for &(r, c) in cells {
            g.set(r, c, true);
        }
        g
    }

    #[test]
    fn contributions_match_direct_computation() {
        let ego = grid_with(&[(0, 0)]);
        let grids: BTreeMap<u32, BevGrid> = [
            (1, grid_with(&[(1, 1), (2, 2)])),
            (2, grid_with(&[(2, 2), (3, 3)])),
            (3, grid_with(&[(0, 0), (0, 1)])),
        ]
        .into_iter()
        .collect();
        let cov: BTreeMap<u32, f64> = [(1, 0.5), (2, 0.0), (3, 0.25)].into_iter().collect();
        let members = [1, 2, 3];
        let fast = contributions(&members, &ego, &grids, &cov, 0.5).unwrap();
        for (i, &id) in members.iter().enumerate() {
            let m = crate::perception::marginal_segmentation_accuracy(&members, id, &ego, &grids).unwrap();
            assert!((fast[i] - (m + 0.5 * cov[&id])).abs() < 1e-15);
        }
        // fused with all: 5 cells; without 1: 4 cells -> m = 1/5
        assert!((fast[0] - (0.2 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn hindsight_prefers_disjoint_pair() {
        let ego = grid_with(&[]);
        let grids: BTreeMap<u32, BevGrid> = [
            (1, grid_with(&[(0, 0), (0, 1)])),
            (2, grid_with(&[(0, 0), (0, 1)])),
            (3, grid_with(&[(3, 3)])),
        ]
        .into_iter()
        .collect();
        let cov: BTreeMap<u32, f64> = [(1, 0.0), (2, 0.0), (3, 0.0)].into_iter().collect();
        let (best, set) = hindsight(3, 2, &ego, &grids, &cov, 1.0).unwrap();
        // {1,3}: m_1 = 2/3, m_3 = 1/3
        assert!((best - 1.0).abs() < 1e-15);
        assert_eq!(set, vec![1, 3]);
    }

    #[test]
    fn lex_order_of_masks() {
        assert!(lex_less(0b011, 0b101));
        assert!(lex_less(0b101, 0b110));
        assert!(!lex_less(0b110, 0b011));
    }

    #[test]
    fn seeded_runs_replay() {
        let cfg = small_config(Pipeline::Adaptive);
        let collect = || {
            let mut v = Vec::new();
            run_e2e(&cfg, 9, |r, _| {
                v.push(r.clone());
                Ok(())
            })
            .unwrap();
            v
        };
        let a = collect();
        assert_eq!(a.len(), 30);
        assert_eq!(a, collect());
    }

    #[test]
    fn regret_increments_nonnegative_every_pipeline() {
        for p in Pipeline::ALL {
            let cfg = small_config(p);
            run_e2e(&cfg, 1, |r, _| {
                assert!(r.regret_increment >= -1e-12, "{p}: {}", r.regret_increment);
                assert!(r.iou.unwrap() >= 0.0 && r.iou.unwrap() <= 1.0);
                Ok(())
            })
            .unwrap();
        }
    }

    #[test]
    fn harbor_drops_late_features() {
        let mut cfg = small_config(Pipeline::Harbor);
        cfg.profile = ThroughputProfile::low().without_jitter();
        cfg.payload = PayloadSpec {
            feature_bits: cfg.payload.image_bits,
            ..cfg.payload
        };
        run_e2e(&cfg, 0, |r, _| {
            for c in &r.cavs {
                let l = c.link.as_ref().unwrap();
                assert!(l.late);
                assert!(!l.included);
                assert!(c.compensated.is_none());
            }
            assert_eq!(r.staleness_steps, 5);
            assert_eq!(r.realized_total, 0.0);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn no_fusion_uses_ego_only() {
        let cfg = small_config(Pipeline::NoFusion);
        run_e2e(&cfg, 0, |r, _| {
            assert!(r.selected.is_empty());
            assert!(r.phase.is_none());
            assert_eq!(r.staleness_steps, 0);
            assert_eq!(r.regret_increment, r.optimal_total);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn rejects_large_fleets() {
        let mut cfg = small_config(Pipeline::Adaptive);
        cfg.scenario.collaborators = 13;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
