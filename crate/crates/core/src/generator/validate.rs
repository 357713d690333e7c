use std::collections::HashSet;

use crate::constraint::{eval_global_full, eval_slot};

use super::decoy::{decoy_hard_check, DecoyContext, PriorSlot};
use super::{AnswerKey, Instance};

/// Outcome of the three instance checks. Each failure is one line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub truth_ok: bool,
    pub candidates_ok: bool,
    pub decoys_ok: bool,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.truth_ok && self.candidates_ok && self.decoys_ok
    }
}

/// Checks that the truth satisfies everything, that every hidden slot holds
/// exactly the key's truth/decoy/filter partition, and that every decoy
/// passes the hard check re-run from scratch in allocation order.
pub fn validate(instance: &Instance, key: &AnswerKey) -> ValidationReport {
    let mut report = ValidationReport::default();
    report.truth_ok = check_truth(instance, key, &mut report.failures);
    report.candidates_ok = check_candidates(instance, key, &mut report.failures);
    report.decoys_ok = report.candidates_ok && check_decoys(instance, key, &mut report.failures);
    report
}

fn check_truth(instance: &Instance, key: &AnswerKey, failures: &mut Vec<String>) -> bool {
    let before = failures.len();
    for slot in &instance.hidden {
        let Some(id) = key.truth.get(&slot.cell) else {
            failures.push(format!("slot {}: no truth in key", slot.cell));
            continue;
        };
        let Some(item) = instance.items.get(id) else {
            failures.push(format!("slot {}: truth {id} missing from items", slot.cell));
            continue;
        };
        match eval_slot(item, &slot.constraints) {
            Ok(true) => {}
            Ok(false) => failures.push(format!("slot {}: truth violates slot constraints", slot.cell)),
            Err(e) => failures.push(format!("slot {}: {e}", slot.cell)),
        }
    }
    if failures.len() > before {
        return false;
    }
    let grid = instance.truth_grid(key);
    match eval_global_full(&grid, &instance.items, &instance.global_constraints) {
        Ok(true) => true,
        Ok(false) => {
            failures.push("truth grid violates global constraints".into());
            false
        }
        Err(e) => {
            failures.push(format!("truth grid: {e}"));
            false
        }
    }
}

fn check_candidates(instance: &Instance, key: &AnswerKey, failures: &mut Vec<String>) -> bool {
    let before = failures.len();
    let cells = instance.rows * instance.cols;
    if instance.hidden.len() != instance.h || instance.hidden.len() + instance.prefilled.len() != cells {
        failures.push(format!(
            "{} hidden and {} pre-filled cells do not partition a {}-cell grid with h = {}",
            instance.hidden.len(),
            instance.prefilled.len(),
            cells,
            instance.h
        ));
    }
    for slot in &instance.hidden {
        let cell = slot.cell;
        if instance.prefilled.contains_key(&cell) {
            failures.push(format!("slot {cell}: also pre-filled"));
        }
        if slot.candidates.len() != instance.k {
            failures.push(format!(
                "slot {cell}: {} candidates, expected {}",
                slot.candidates.len(),
                instance.k
            ));
        }
        let listed: HashSet<&str> = slot.candidates.iter().map(String::as_str).collect();
        if listed.len() != slot.candidates.len() {
            failures.push(format!("slot {cell}: duplicate candidates"));
        }
        let truth = key.truth.get(&cell).map(String::as_str);
        let decoys = key.decoys.get(&cell).map(Vec::as_slice).unwrap_or_default();
        let filters = key.filters.get(&cell).map(Vec::as_slice).unwrap_or_default();
        let labelled: Vec<&str> = truth
            .into_iter()
            .chain(decoys.iter().map(String::as_str))
            .chain(filters.iter().map(String::as_str))
            .collect();
        let distinct: HashSet<&str> = labelled.iter().copied().collect();
        if distinct.len() != labelled.len() || distinct != listed {
            failures.push(format!("slot {cell}: key partition does not match the candidate list"));
        }
        for id in decoys {
            if let Some(item) = instance.items.get(id) {
                if !matches!(eval_slot(item, &slot.constraints), Ok(true)) {
                    failures.push(format!("slot {cell}: decoy {id} violates slot constraints"));
                }
            }
        }
        for id in filters {
            if let Some(item) = instance.items.get(id) {
                if !matches!(eval_slot(item, &slot.constraints), Ok(false)) {
                    failures.push(format!("slot {cell}: filter {id} satisfies slot constraints"));
                }
            }
        }
        for id in &slot.candidates {
            if !instance.items.contains_key(id) {
                failures.push(format!("slot {cell}: candidate {id} missing from items"));
            }
        }
    }
    let allocated: usize = key.allocations.iter().map(|(_, b)| b).sum();
    if allocated != instance.decoy_budget || key.total_decoys() != instance.decoy_budget {
        failures.push(format!(
            "decoy count {} (allocated {allocated}) differs from budget {}",
            key.total_decoys(),
            instance.decoy_budget
        ));
    }
    for (cell, b) in &key.allocations {
        if key.decoys.get(cell).map_or(0, Vec::len) != *b {
            failures.push(format!("slot {cell}: allocation {b} not matched by decoys"));
        }
    }
    failures.len() == before
}

fn check_decoys(instance: &Instance, key: &AnswerKey, failures: &mut Vec<String>) -> bool {
    let before = failures.len();
    let truth = instance.truth_grid(key);
    let mut prior: Vec<PriorSlot> = Vec::new();
    for (cell, _) in &key.allocations {
        let ctx = DecoyContext {
            truth: &truth,
            items: &instance.items,
            constraints: &instance.global_constraints,
            prior: &prior,
            future_hidden: &[],
        };
        let decoys = &key.decoys[cell];
        for id in decoys {
            let item = &instance.items[id];
            match decoy_hard_check(&ctx, *cell, item) {
                Ok(true) => {}
                Ok(false) => failures.push(format!("slot {cell}: decoy {id} admits a valid completion")),
                Err(e) => failures.push(format!("slot {cell}: {e}")),
            }
        }
        prior.push(PriorSlot {
            cell: *cell,
            truth: key.truth[cell].clone(),
            decoys: decoys.clone(),
        });
    }
    failures.len() == before
}
