use serde::{Deserialize, Serialize};

use super::chain::StationaryAnalysis;

/// `T * optimal_value - sum of realized rewards`.
pub fn regret(realized: &[f64], analysis: &StationaryAnalysis) -> f64 {
    realized.len() as f64 * analysis.optimal_value - realized.iter().sum::<f64>()
}

/// Cumulative regret of one run, updated slot by slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretTracker {
    pub slots: u64,
    pub realized: f64,
    pub optimal: f64,
}

impl RegretTracker {
    /// Adds one slot and returns its regret increment.
    pub fn push(&mut self, optimal: f64, realized: f64) -> f64 {
        self.slots += 1;
        self.optimal += optimal;
        self.realized += realized;
        optimal - realized
    }

    pub fn regret(&self) -> f64 {
        self.optimal - self.realized
    }
}

/// Slots `1, 2, .., 10, 20, .., 100, 200, ..` up to `horizon`, plus `horizon`.
pub fn log_grid(horizon: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut step = 1;
    let mut t = 1;
    while t <= horizon {
        out.push(t);
        if t == step * 10 {
            step *= 10;
        }
        t += step;
    }
    if out.last() != Some(&horizon) && horizon > 0 {
        out.push(horizon);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_simulated_regret() {
        let a = StationaryAnalysis::from_means(vec![0.9, 0.5, 0.3, 0.1], 2, 1.0).unwrap();
        assert!((regret(&[1.4, 0.4], &a) - 1.0).abs() < 1e-12);
        let mut tr = RegretTracker::default();
        tr.push(1.4, 1.4);
        tr.push(1.4, 0.4);
        assert!((tr.regret() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_shape() {
        assert_eq!(log_grid(25), vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 20, 25]);
        assert_eq!(log_grid(100).last(), Some(&100));
        assert_eq!(log_grid(1000).len(), 28);
    }
}
