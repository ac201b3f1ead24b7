//! Counter bounds on the number of exploration and exploitation epochs.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub slot: u64,
    pub n: usize,
    pub k: usize,
    pub d: f64,
    pub explorations: u32,
    pub exploitations: u32,
    /// `log2((K D log2 t + 2) / 2)`
    pub exploration_bound: f64,
    /// `log2(t - N/K + 1)`
    pub exploitation_bound: f64,
}

impl BoundReport {
    pub fn exploration_ok(&self) -> bool {
        self.explorations as f64 <= self.exploration_bound
    }

    pub fn exploitation_ok(&self) -> bool {
        self.exploitations as f64 <= self.exploitation_bound
    }

    pub fn passed(&self) -> bool {
        self.exploration_ok() && self.exploitation_ok()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::BoundViolation(self))
        }
    }
}

impl std::fmt::Display for BoundReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if !self.exploration_ok() {
            parts.push(format!(
                "exploration count {} exceeds bound {:.4}",
                self.explorations, self.exploration_bound
            ));
        }
        if !self.exploitation_ok() {
            parts.push(format!(
                "exploitation count {} exceeds bound {:.4}",
                self.exploitations, self.exploitation_bound
            ));
        }
        if parts.is_empty() {
            parts.push(format!(
                "exploration {} <= {:.4}, exploitation {} <= {:.4}",
                self.explorations, self.exploration_bound, self.exploitations, self.exploitation_bound
            ));
        }
        write!(
            f,
            "bound check at slot {} (N={}, K={}, D={}): {}",
            self.slot,
            self.n,
            self.k,
            self.d,
            parts.join("; ")
        )
    }
}

/// Evaluates both epoch-count bounds for counts of epochs completed by slot `t`.
pub fn bound_check(explorations: u32, exploitations: u32, t: u64, n: usize, k: usize, d: f64) -> BoundReport {
    let tf = t as f64;
    let exploration_bound = ((k as f64 * d * tf.log2() + 2.0) / 2.0).log2();
    let arg = tf - n as f64 / k as f64 + 1.0;
    let exploitation_bound = if arg > 0.0 { arg.log2() } else { f64::NEG_INFINITY };
    BoundReport {
        slot: t,
        n,
        k,
        d,
        explorations,
        exploitations,
        exploration_bound,
        exploitation_bound,
    }
}
