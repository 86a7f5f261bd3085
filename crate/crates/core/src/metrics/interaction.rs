//! Directed interaction tuples scored as multi-label classification.

use std::collections::{BTreeMap, BTreeSet};

use crate::types::Interaction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PrfCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfCounts {
    /// Empty predictions have precision 1 only when there was nothing to
    /// find; empty ground truth likewise gives recall 1.
    pub fn prf(&self) -> Prf {
        let pred = self.tp + self.fp;
        let gt = self.tp + self.fn_;
        let precision = if pred == 0 {
            if gt == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            self.tp as f64 / pred as f64
        };
        let recall = if gt == 0 {
            1.0
        } else {
            self.tp as f64 / gt as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Micro counts plus per-label counts, additive across videos.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InteractionCounts {
    pub micro: PrfCounts,
    pub per_label: BTreeMap<String, PrfCounts>,
}

impl InteractionCounts {
    pub fn add(&mut self, gt: &BTreeSet<Interaction>, pred: &BTreeSet<Interaction>) {
        for it in pred {
            let e = self.per_label.entry(it.label.clone()).or_default();
            if gt.contains(it) {
                self.micro.tp += 1;
                e.tp += 1;
            } else {
                self.micro.fp += 1;
                e.fp += 1;
            }
        }
        for it in gt.difference(pred) {
            self.micro.fn_ += 1;
            self.per_label.entry(it.label.clone()).or_default().fn_ += 1;
        }
    }

    pub fn merge(&mut self, o: &InteractionCounts) {
        self.micro.tp += o.micro.tp;
        self.micro.fp += o.micro.fp;
        self.micro.fn_ += o.micro.fn_;
        for (l, c) in &o.per_label {
            let e = self.per_label.entry(l.clone()).or_default();
            e.tp += c.tp;
            e.fp += c.fp;
            e.fn_ += c.fn_;
        }
    }

    pub fn micro(&self) -> Prf {
        self.micro.prf()
    }

    /// Mean per-label F1 over labels seen in either set; 1 when none were.
    pub fn macro_f1(&self) -> f64 {
        if self.per_label.is_empty() {
            return 1.0;
        }
        self.per_label.values().map(|c| c.prf().f1).sum::<f64>() / self.per_label.len() as f64
    }
}

pub fn interaction_prf(gt: &BTreeSet<Interaction>, pred: &BTreeSet<Interaction>) -> Prf {
    let mut c = InteractionCounts::default();
    c.add(gt, pred);
    c.micro()
}
