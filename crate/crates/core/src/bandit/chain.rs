//! Finite restless Markov reward chains.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::KernelKind;
use crate::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;
pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 1_000_000;

/// Dense square row-stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "transition matrix must have at least one state".into(),
            ));
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Ok(TransitionMatrix { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Checks row sums, strong connectivity and aperiodicity.
    pub fn validate(&self, kind: KernelKind) -> Result<()> {
        for i in 0..self.n {
            let row = self.row(i);
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::NotStochastic {
                    kernel: kind,
                    row: i,
                    sum: row.iter().sum(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic {
                    kernel: kind,
                    row: i,
                    sum,
                });
            }
        }
        if !self.strongly_connected() {
            return Err(Error::ReducibleKernel { kernel: kind });
        }
        let period = self.period();
        if period != 1 {
            return Err(Error::PeriodicKernel { kernel: kind, period });
        }
        Ok(())
    }

    fn reach(&self, transpose: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..self.n {
                let p = if transpose { self.get(v, u) } else { self.get(u, v) };
                if p > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn strongly_connected(&self) -> bool {
        self.reach(false).iter().all(|&b| b) && self.reach(true).iter().all(|&b| b)
    }

    /// Period of an irreducible chain: gcd of `level(u) + 1 - level(v)` over
    /// all positive edges, with BFS levels from state 0.
    fn period(&self) -> usize {
        let mut level = vec![usize::MAX; self.n];
        level[0] = 0;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for v in 0..self.n {
                if self.get(u, v) > 0.0 && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0usize;
        for u in 0..self.n {
            for v in 0..self.n {
                if self.get(u, v) > 0.0 {
                    let d = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs() as usize;
                    g = gcd(g, d);
                }
            }
        }
        g
    }

    /// Stationary distribution by power iteration from the uniform vector,
    /// stopping when the L1 change falls below `STATIONARY_TOL`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.n;
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..STATIONARY_MAX_ITER {
            next.iter_mut().for_each(|x| *x = 0.0);
            for (i, &w) in pi.iter().enumerate() {
                for (j, p) in self.row(i).iter().enumerate() {
                    next[j] += w * p;
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= total);
            residual = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if residual < STATIONARY_TOL {
                return Ok(pi);
            }
        }
        Err(Error::NonConvergence {
            iterations: STATIONARY_MAX_ITER,
            residual,
        })
    }

    fn sample_next(&self, state: usize, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, p) in self.row(state).iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // rounding left u above the last partial sum
        (0..self.n)
            .rev()
            .find(|&j| self.get(state, j) > 0.0)
            .unwrap_or(self.n - 1)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Reward chain of one arm: active kernel when selected, passive otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestlessChain {
    rewards: Vec<f64>,
    active: TransitionMatrix,
    passive: TransitionMatrix,
    state: usize,
}

impl RestlessChain {
    pub fn new(rewards: Vec<f64>, active: TransitionMatrix, passive: TransitionMatrix, state: usize) -> Result<Self> {
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("reward values must be finite".into()));
        }
        if rewards.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("reward values must be ascending".into()));
        }
        if active.size() != rewards.len() || passive.size() != rewards.len() {
            return Err(Error::InvalidArgument(format!(
                "kernels must be {0}x{0} to match the reward states",
                rewards.len()
            )));
        }
        if state >= rewards.len() {
            return Err(Error::InvalidArgument(format!("initial state {state} out of range")));
        }
        active.validate(KernelKind::Active)?;
        passive.validate(KernelKind::Passive)?;
        Ok(RestlessChain {
            rewards,
            active,
            passive,
            state,
        })
    }

    /// Single-state chain that always pays `reward`.
    pub fn constant(reward: f64) -> Result<Self> {
        let k = TransitionMatrix::new(vec![vec![1.0]])?;
        RestlessChain::new(vec![reward], k.clone(), k, 0)
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn active(&self) -> &TransitionMatrix {
        &self.active
    }

    pub fn passive(&self) -> &TransitionMatrix {
        &self.passive
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn current_reward(&self) -> f64 {
        self.rewards[self.state]
    }

    /// Emits the current reward if selected, then moves by the matching
    /// kernel. Always consumes exactly one uniform draw.
    pub fn step(&mut self, selected: bool, rng: &mut ChaCha8Rng) -> Option<f64> {
        let reward = self.current_reward();
        let u: f64 = rng.gen();
        let k = if selected { &self.active } else { &self.passive };
        self.state = k.sample_next(self.state, u);
        selected.then_some(reward)
    }

    /// Long-run mean reward under continuous selection.
    pub fn stationary_mean(&self) -> Result<f64> {
        let pi = self.active.stationary()?;
        Ok(pi.iter().zip(&self.rewards).map(|(p, r)| p * r).sum())
    }
}

/// Stationary ranking of a set of arms for budget `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryAnalysis {
    pub means: Vec<f64>,
    /// Arm indices (0-based) by descending mean, ties by index.
    pub order: Vec<usize>,
    pub k: usize,
    pub optimal_value: f64,
    pub gap_sum: f64,
    pub pi_min: f64,
}

impl StationaryAnalysis {
    pub fn from_means(means: Vec<f64>, k: usize, pi_min: f64) -> Result<Self> {
        if k == 0 || k > means.len() {
            return Err(Error::InvalidArgument(format!(
                "budget {k} must be in 1..={}",
                means.len()
            )));
        }
        let order = super::policy::rank_desc(&means);
        let optimal_value = order[..k].iter().map(|&i| means[i]).sum();
        let mut gap_sum = 0.0;
        for &j in &order[..k] {
            for &i in &order[k..] {
                gap_sum += means[j] - means[i];
            }
        }
        Ok(StationaryAnalysis {
            means,
            order,
            k,
            optimal_value,
            gap_sum,
            pi_min,
        })
    }

    /// 1-based ids of the top-`k` arms, ascending.
    pub fn top_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.order[..self.k].iter().map(|&i| i as u32 + 1).collect();
        ids.sort_unstable();
        ids
    }
}

pub fn stationary_means(chains: &[RestlessChain], k: usize) -> Result<StationaryAnalysis> {
    let mut means = Vec::with_capacity(chains.len());
    let mut pi_min: f64 = 1.0;
    for c in chains {
        let pi = c.active.stationary()?;
        pi_min = pi.iter().copied().fold(pi_min, f64::min);
        means.push(pi.iter().zip(&c.rewards).map(|(p, r)| p * r).sum());
    }
    StationaryAnalysis::from_means(means, k, pi_min)
}

/// Exploration threshold `d * log2(t)`.
pub fn theta(t: u64, d: f64) -> Result<f64> {
    if t < 1 {
        return Err(Error::InvalidArgument("slot index starts at 1".into()));
    }
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("D must be > 0, got {d}")));
    }
    Ok(d * (t as f64).log2())
}
