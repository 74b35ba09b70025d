//! Privacy budget accounting.
//!
//! A [`PrivacyBudget`] is a node in a tree of shares. Splitting a node or
//! allocating a mechanism from it records an entry in the shared
//! [`Ledger`] and fails if the node's children would exceed its share.
//! Noise-drawing mechanisms take an [`Allocation`] by value, so a mechanism
//! cannot exist without a recorded share.

use serde::Serialize;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Relative slack for float rounding when shares are summed.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("allocating {requested} for `{label}` exceeds the remaining {remaining} of `{path}`")]
    Exceeded { path: String, label: String, requested: f64, remaining: f64 },
    #[error("invalid share {0} (must be positive and finite)")]
    Invalid(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Root,
    Split,
    Mechanism,
}

#[derive(Clone, Debug, Serialize)]
pub struct LedgerEntry {
    pub path: String,
    pub epsilon: f64,
    pub parent: Option<usize>,
    pub kind: EntryKind,
    #[serde(skip)]
    allocated: f64,
}

/// Shared record of every share handed out under one root.
#[derive(Clone, Debug, Default)]
pub struct Ledger {
    inner: Arc<Mutex<Vec<LedgerEntry>>>,
}

impl Ledger {
    pub fn entries(&self) -> Vec<LedgerEntry> {
        self.inner.lock().expect("ledger poisoned").clone()
    }

    /// Check that no node hands out more than it holds.
    pub fn verify(&self) -> Result<(), BudgetError> {
        let entries = self.entries();
        let mut sums = vec![0.0; entries.len()];
        for e in &entries {
            if let Some(p) = e.parent {
                sums[p] += e.epsilon;
            }
        }
        for (e, s) in entries.iter().zip(&sums) {
            if *s > e.epsilon * (1.0 + BUDGET_TOLERANCE) {
                return Err(BudgetError::Exceeded {
                    path: e.path.clone(),
                    label: "*".into(),
                    requested: *s,
                    remaining: e.epsilon,
                });
            }
        }
        Ok(())
    }

    /// Sum of the shares of all noise-drawing mechanisms.
    pub fn mechanism_total(&self) -> f64 {
        self.entries().iter().filter(|e| e.kind == EntryKind::Mechanism).map(|e| e.epsilon).sum()
    }

    pub fn root_epsilon(&self) -> f64 {
        self.entries().first().map_or(0.0, |e| e.epsilon)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries = self.entries();
        serde_json::json!({
            "total_epsilon": self.root_epsilon(),
            "mechanism_epsilon": self.mechanism_total(),
            "entries": entries,
        })
    }
}

/// A share of the budget that can be split further or spent on mechanisms.
#[derive(Clone, Debug)]
pub struct PrivacyBudget {
    ledger: Ledger,
    node: usize,
    epsilon: f64,
    path: String,
}

/// Proof that a mechanism's share was recorded. Not cloneable.
#[derive(Debug)]
pub struct Allocation {
    path: String,
    epsilon: f64,
}

impl Allocation {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn path(&self) -> &str {
        &self.path
    }
}

impl PrivacyBudget {
    pub fn root(epsilon: f64) -> Result<Self, BudgetError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(BudgetError::Invalid(epsilon));
        }
        let ledger = Ledger::default();
        ledger.inner.lock().expect("ledger poisoned").push(LedgerEntry {
            path: "root".into(),
            epsilon,
            parent: None,
            kind: EntryKind::Root,
            allocated: 0.0,
        });
        Ok(PrivacyBudget { ledger, node: 0, epsilon, path: "root".into() })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn ledger(&self) -> Ledger {
        self.ledger.clone()
    }

    pub fn remaining(&self) -> f64 {
        let entries = self.ledger.inner.lock().expect("ledger poisoned");
        self.epsilon - entries[self.node].allocated
    }

    fn record(&self, label: &str, epsilon: f64, kind: EntryKind) -> Result<(usize, String), BudgetError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(BudgetError::Invalid(epsilon));
        }
        let mut entries = self.ledger.inner.lock().expect("ledger poisoned");
        let allocated = entries[self.node].allocated;
        if allocated + epsilon > self.epsilon * (1.0 + BUDGET_TOLERANCE) {
            return Err(BudgetError::Exceeded {
                path: self.path.clone(),
                label: label.into(),
                requested: epsilon,
                remaining: self.epsilon - allocated,
            });
        }
        entries[self.node].allocated += epsilon;
        let path = format!("{}/{}", self.path, label);
        entries.push(LedgerEntry { path: path.clone(), epsilon, parent: Some(self.node), kind, allocated: 0.0 });
        Ok((entries.len() - 1, path))
    }

    /// Carve out a sub-budget.
    pub fn split(&self, label: &str, epsilon: f64) -> Result<PrivacyBudget, BudgetError> {
        let (node, path) = self.record(label, epsilon, EntryKind::Split)?;
        Ok(PrivacyBudget { ledger: self.ledger.clone(), node, epsilon, path })
    }

    /// Record a share for one noise-drawing mechanism.
    pub fn allocate(&self, label: &str, epsilon: f64) -> Result<Allocation, BudgetError> {
        let (_, path) = self.record(label, epsilon, EntryKind::Mechanism)?;
        Ok(Allocation { path, epsilon })
    }

    /// Split into `labels.len()` equal sub-budgets.
    pub fn split_even(&self, labels: &[String]) -> Result<Vec<PrivacyBudget>, BudgetError> {
        let share = self.epsilon / labels.len() as f64;
        labels.iter().map(|l| self.split(l, share)).collect()
    }
}
