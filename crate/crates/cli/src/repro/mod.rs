//! Reproduction claims: each acceptance criterion as a deterministic
//! measurement that reports its metrics and a pass/fail verdict.

pub mod claims;
pub mod toys;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use muse_core::Result;

/// Outcome of one claim measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ClaimReport {
    pub fn new(id: u32, name: &str) -> Self {
        Self {
            id,
            name: name.to_string(),
            passed: false,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.to_string(), value);
    }

    pub fn note(&mut self, text: String) {
        self.notes.push(text);
    }

    /// `criterion N <name>: PASS|FAIL`.
    pub fn verdict_line(&self) -> String {
        format!(
            "criterion {:>2} {}: {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

type ClaimFn = fn(u64) -> Result<ClaimReport>;

/// Every claim with its id and name, in criterion order.
pub const CLAIMS: [(u32, &str, ClaimFn); 10] = [
    (1, "gd-monotone-descent", claims::gd_monotone),
    (2, "mm-surrogate-sandwich", claims::mm_monotone),
    (3, "quadratic-prior-exactness", claims::quadratic_exact),
    (4, "gd-vs-mm-regime", claims::regime),
    (5, "conservativeness", claims::conservativeness),
    (6, "gradient-consistency", claims::gradient_consistency),
    (7, "dsm-learns-oracle-field", claims::dsm_oracle),
    (8, "muse-init-robustness", claims::init_robustness),
    (9, "denoising-order", claims::denoise_order),
    (10, "infrastructure-exactness", claims::infrastructure),
];

/// Looks a claim up by number (`4`, `c4`) or name.
pub fn find_claim(key: &str) -> Option<(u32, &'static str, ClaimFn)> {
    let num = key.trim_start_matches(['c', 'C']).parse::<u32>().ok();
    CLAIMS
        .iter()
        .copied()
        .find(|(id, name, _)| Some(*id) == num || *name == key)
}

pub fn run_claim(key: &str, seed: u64) -> Option<Result<ClaimReport>> {
    find_claim(key).map(|(_, _, f)| f(seed))
}
