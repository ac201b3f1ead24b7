//! Collaborator selection policies.
//!
//! Arms are identified by 1-based CAV ids. Every policy returns exactly `k`
//! ids per slot, sorted ascending.

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chain::theta;
use crate::{Error, Result};

/// Indices sorted by value descending, ties by index ascending.
pub fn rank_desc(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Ascending 1-based ids of the `k` largest values.
pub fn top_k_ids(values: &[f64], k: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = rank_desc(values)[..k].iter().map(|&i| i as u32 + 1).collect();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Explore,
    Exploit,
    Index,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
            Phase::Index => "index",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Vec<u32>,
    pub phase: Phase,
    /// 1-based epoch number within the phase kind; 0 for init and index.
    pub epoch: u32,
}

/// What a policy may see when choosing slot `t`.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    /// 1-based slot index.
    pub t: u64,
    /// Current true contribution of every arm; only hindsight policies read it.
    pub hidden: Option<&'a [f64]>,
}

/// Learner statistics shared by all policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorState {
    pub n: usize,
    pub k: usize,
    pub means: Vec<f64>,
    pub obs_counts: Vec<u64>,
    pub pulls: Vec<u64>,
    pub last_selected: Vec<u64>,
    /// Index of the next exploration epoch (starts at 1).
    pub explore_counter: u32,
    /// Index of the next exploitation epoch (starts at 1).
    pub exploit_counter: u32,
    pub t: u64,
}

impl SelectorState {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidArgument(format!(
                "budget K={k} must satisfy 1 <= K <= N={n}"
            )));
        }
        Ok(SelectorState {
            n,
            k,
            means: vec![0.0; n],
            obs_counts: vec![0; n],
            pulls: vec![0; n],
            last_selected: vec![0; n],
            explore_counter: 1,
            exploit_counter: 1,
            t: 0,
        })
    }

    fn check_id(&self, id: u32) -> Result<usize> {
        let i = id as usize;
        if i == 0 || i > self.n {
            return Err(Error::InvalidArgument(format!(
                "CAV id {id} out of range 1..={}",
                self.n
            )));
        }
        Ok(i - 1)
    }

    /// Folds one observation into the running mean.
    pub fn observe(&mut self, id: u32, value: f64) -> Result<()> {
        let i = self.check_id(id)?;
        self.obs_counts[i] += 1;
        self.means[i] += (value - self.means[i]) / self.obs_counts[i] as f64;
        Ok(())
    }

    fn record_selection(&mut self, t: u64, selected: &[u32]) -> Result<()> {
        self.t = t;
        for &id in selected {
            let i = self.check_id(id)?;
            self.pulls[i] += 1;
            self.last_selected[i] = t;
        }
        Ok(())
    }

    pub fn completed_explorations(&self) -> u32 {
        self.explore_counter - 1
    }

    pub fn completed_exploitations(&self) -> u32 {
        self.exploit_counter - 1
    }

    pub fn init_slots(&self) -> usize {
        self.n.div_ceil(self.k)
    }
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;
    fn select(&mut self, ctx: &SlotContext) -> Result<Selection>;
    fn observe(&mut self, id: u32, value: f64) -> Result<()> {
        self.state_mut().observe(id, value)
    }
    fn state(&self) -> &SelectorState;
    fn state_mut(&mut self) -> &mut SelectorState;
    /// Clears all learned statistics and counters.
    fn reset(&mut self);
}

/// Slot `t` (1-based) of the sequential id-order warm-up: batch `t` is ids
/// `(t-1)K+1 ..`, the final short batch padded with the lowest ids.
fn init_batch(n: usize, k: usize, t: u64) -> Vec<u32> {
    let start = (t as usize - 1) * k;
    let mut ids: Vec<u32> = (start..(start + k).min(n)).map(|i| i as u32 + 1).collect();
    let mut pad = 1u32;
    while ids.len() < k {
        if !ids.contains(&pad) {
            ids.push(pad);
        }
        pad += 1;
    }
    ids.sort_unstable();
    ids
}

/// Slot counter restarted by `reset`, so warm-up and thresholds apply
/// afresh after a re-clustering.
#[derive(Debug, Clone, Copy, Default)]
struct LocalClock {
    origin: Option<u64>,
}

impl LocalClock {
    fn local(&mut self, t: u64) -> u64 {
        let origin = *self.origin.get_or_insert(t.saturating_sub(1));
        t - origin
    }
}

#[derive(Debug, Clone)]
struct Block {
    selected: Vec<u32>,
    phase: Phase,
    epoch: u32,
    slots: u64,
}

/// Epoch-based explore/exploit selector with a logarithmic trigger.
#[derive(Debug, Clone)]
pub struct Alg1 {
    state: SelectorState,
    d: f64,
    queue: VecDeque<Block>,
    /// Kind of the block currently being played, advanced when it drains.
    running: Option<Phase>,
    clock: LocalClock,
}

impl Alg1 {
    pub fn new(n: usize, k: usize, d: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(format!("D must be > 0, got {d}")));
        }
        Ok(Alg1 {
            state: SelectorState::new(n, k)?,
            d,
            queue: VecDeque::new(),
            running: None,
            clock: LocalClock::default(),
        })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Rank-contiguous groups of size K by current mean; the last short
    /// group is topped up with the best-ranked arms outside it.
    pub fn exploration_groups(&self) -> Vec<Vec<u32>> {
        let k = self.state.k;
        let order: Vec<u32> = rank_desc(&self.state.means).iter().map(|&i| i as u32 + 1).collect();
        let mut groups: Vec<Vec<u32>> = order.chunks(k).map(|c| c.to_vec()).collect();
        if let Some(last) = groups.last_mut() {
            for &id in &order {
                if last.len() == k {
                    break;
                }
                if !last.contains(&id) {
                    last.push(id);
                }
            }
        }
        for g in &mut groups {
            g.sort_unstable();
        }
        groups
    }

    fn finish_running(&mut self) {
        match self.running.take() {
            Some(Phase::Explore) => self.state.explore_counter += 1,
            Some(Phase::Exploit) => self.state.exploit_counter += 1,
            _ => {}
        }
    }

    fn plan(&mut self, t: u64) -> Result<()> {
        self.finish_running();
        let s = &self.state;
        if (t as usize) <= s.init_slots() {
            self.queue.push_back(Block {
                selected: init_batch(s.n, s.k, t),
                phase: Phase::Init,
                epoch: 0,
                slots: 1,
            });
            self.running = Some(Phase::Init);
            return Ok(());
        }
        let o = s.explore_counter;
        let trigger = ((1u64 << o) - 1) as f64;
        if trigger < theta(t, self.d)? {
            let len = 1u64 << (o - 1);
            for g in self.exploration_groups() {
                self.queue.push_back(Block {
                    selected: g,
                    phase: Phase::Explore,
                    epoch: o,
                    slots: len,
                });
            }
            self.running = Some(Phase::Explore);
        } else {
            let i = s.exploit_counter;
            self.queue.push_back(Block {
                selected: top_k_ids(&s.means, s.k),
                phase: Phase::Exploit,
                epoch: i,
                slots: 1u64 << (i - 1),
            });
            self.running = Some(Phase::Exploit);
        }
        Ok(())
    }
}

impl Policy for Alg1 {
    fn name(&self) -> &'static str {
        "alg1"
    }

    fn select(&mut self, ctx: &SlotContext) -> Result<Selection> {
        let t = self.clock.local(ctx.t);
        if self.queue.is_empty() {
            self.plan(t)?;
        }
        let front = self.queue.front_mut().expect("plan always schedules a block");
        let sel = Selection {
            selected: front.selected.clone(),
            phase: front.phase,
            epoch: front.epoch,
        };
        front.slots -= 1;
        if front.slots == 0 {
            self.queue.pop_front();
        }
        if self.queue.is_empty() {
            // counters describe completed phases as soon as the last slot is issued
            self.finish_running();
        }
        self.state.record_selection(ctx.t, &sel.selected)?;
        Ok(sel)
    }

    fn state(&self) -> &SelectorState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut SelectorState {
        &mut self.state
    }

    fn reset(&mut self) {
        self.state = SelectorState::new(self.state.n, self.state.k).expect("dimensions were valid");
        self.queue.clear();
        self.running = None;
        self.clock = LocalClock::default();
    }
}

/// Upper-confidence index `mean + sqrt(2 ln t / (3 pulls))` after one
/// warm-up pull per arm.
#[derive(Debug, Clone)]
pub struct Ecop {
    state: SelectorState,
    clock: LocalClock,
}

impl Ecop {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        Ok(Ecop {
            state: SelectorState::new(n, k)?,
            clock: LocalClock::default(),
        })
    }

    pub fn index(&self, t: u64) -> Vec<f64> {
        let lt = (t as f64).ln();
        self.state
            .means
            .iter()
            .zip(&self.state.pulls)
            .map(|(m, &p)| m + (2.0 * lt / (3.0 * p as f64)).sqrt())
            .collect()
    }
}

impl Policy for Ecop {
    fn name(&self) -> &'static str {
        "ecop"
    }

    fn select(&mut self, ctx: &SlotContext) -> Result<Selection> {
        let t = self.clock.local(ctx.t);
        let s = &self.state;
        let sel = if (t as usize) <= s.init_slots() {
            Selection {
                selected: init_batch(s.n, s.k, t),
                phase: Phase::Init,
                epoch: 0,
            }
        } else {
            Selection {
                selected: top_k_ids(&self.index(t), s.k),
                phase: Phase::Index,
                epoch: 0,
            }
        };
        self.state.record_selection(ctx.t, &sel.selected)?;
        Ok(sel)
    }

    fn state(&self) -> &SelectorState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut SelectorState {
        &mut self.state
    }

    fn reset(&mut self) {
        self.state = SelectorState::new(self.state.n, self.state.k).expect("dimensions were valid");
        self.clock = LocalClock::default();
    }
}

pub const MASS_WEIGHT: f64 = 0.6;

/// Recency index `mean + 0.6 sqrt(t - last_selected)`.
#[derive(Debug, Clone)]
pub struct Mass {
    state: SelectorState,
}

impl Mass {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        Ok(Mass {
            state: SelectorState::new(n, k)?,
        })
    }

    pub fn index(&self, t: u64) -> Vec<f64> {
        self.state
            .means
            .iter()
            .zip(&self.state.last_selected)
            .map(|(m, &tau)| m + MASS_WEIGHT * (t.saturating_sub(tau) as f64).sqrt())
            .collect()
    }
}

impl Policy for Mass {
    fn name(&self) -> &'static str {
        "mass"
    }

    fn select(&mut self, ctx: &SlotContext) -> Result<Selection> {
        let selected = top_k_ids(&self.index(ctx.t), self.state.k);
        self.state.record_selection(ctx.t, &selected)?;
        Ok(Selection {
            selected,
            phase: Phase::Index,
            epoch: 0,
        })
    }

    fn state(&self) -> &SelectorState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut SelectorState {
        &mut self.state
    }

    fn reset(&mut self) {
        self.state = SelectorState::new(self.state.n, self.state.k).expect("dimensions were valid");
    }
}

/// Uniform K-subset each slot.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    state: SelectorState,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(n: usize, k: usize, rng: ChaCha8Rng) -> Result<Self> {
        Ok(RandomPolicy {
            state: SelectorState::new(n, k)?,
            rng,
        })
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn select(&mut self, ctx: &SlotContext) -> Result<Selection> {
        let mut selected: Vec<u32> = rand::seq::index::sample(&mut self.rng, self.state.n, self.state.k)
            .into_iter()
            .map(|i| i as u32 + 1)
            .collect();
        selected.sort_unstable();
        self.state.record_selection(ctx.t, &selected)?;
        Ok(Selection {
            selected,
            phase: Phase::Index,
            epoch: 0,
        })
    }

    fn state(&self) -> &SelectorState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut SelectorState {
        &mut self.state
    }

    fn reset(&mut self) {
        self.state = SelectorState::new(self.state.n, self.state.k).expect("dimensions were valid");
    }
}

/// Hindsight top-K by the current true contributions.
#[derive(Debug, Clone)]
pub struct Optimal {
    state: SelectorState,
}

impl Optimal {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        Ok(Optimal {
            state: SelectorState::new(n, k)?,
        })
    }
}

impl Policy for Optimal {
    fn name(&self) -> &'static str {
        "optimal"
    }

    fn select(&mut self, ctx: &SlotContext) -> Result<Selection> {
        let hidden = ctx
            .hidden
            .ok_or_else(|| Error::InvalidArgument("optimal policy needs the true contributions".into()))?;
        if hidden.len() != self.state.n {
            return Err(Error::InvalidArgument(format!(
                "expected {} contributions, got {}",
                self.state.n,
                hidden.len()
            )));
        }
        let selected = top_k_ids(hidden, self.state.k);
        self.state.record_selection(ctx.t, &selected)?;
        Ok(Selection {
            selected,
            phase: Phase::Index,
            epoch: 0,
        })
    }

    fn state(&self) -> &SelectorState {
        &self.state
    }

    fn state_mut(&mut self) -> &mut SelectorState {
        &mut self.state
    }

    fn reset(&mut self) {
        self.state = SelectorState::new(self.state.n, self.state.k).expect("dimensions were valid");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Alg1,
    Ecop,
    Mass,
    Random,
    Optimal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Alg1,
        PolicyKind::Ecop,
        PolicyKind::Mass,
        PolicyKind::Random,
        PolicyKind::Optimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Alg1 => "alg1",
            PolicyKind::Ecop => "ecop",
            PolicyKind::Mass => "mass",
            PolicyKind::Random => "random",
            PolicyKind::Optimal => "optimal",
        }
    }

    /// `rng` is only consumed by the random policy.
    pub fn build(self, n: usize, k: usize, d: f64, rng: ChaCha8Rng) -> Result<Box<dyn Policy>> {
        Ok(match self {
            PolicyKind::Alg1 => Box::new(Alg1::new(n, k, d)?),
            PolicyKind::Ecop => Box::new(Ecop::new(n, k)?),
            PolicyKind::Mass => Box::new(Mass::new(n, k)?),
            PolicyKind::Random => Box::new(RandomPolicy::new(n, k, rng)?),
            PolicyKind::Optimal => Box::new(Optimal::new(n, k)?),
        })
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown policy '{s}' (expected alg1, ecop, mass, random or optimal)"
            ))
        })
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
