//! Independent oracles shared by the integration tests. Nothing here calls
//! the library's constraint evaluators.

#![allow(dead_code)]

use std::collections::BTreeMap;

use gridbench::constraint::{Comparator, ConstraintValue, GlobalConstraint, GlobalKind, SlotConstraint};
use gridbench::domain::{sample_pool, AttrValue, Domain, Item, ItemPool};
use gridbench::generator::{generate, AnswerKey, GenConfig, Instance};
use gridbench::grid::Cell;
use gridbench::seed::rng_from_seed;
use serde_json::Value;

pub fn pool(domain: Domain, seed: u64) -> ItemPool {
    sample_pool(domain, 1200, &mut rng_from_seed(seed)).expect("pool")
}

pub fn small_config(domain: Domain, h: usize, b: usize, k: usize, seed: u64) -> GenConfig {
    let mut c = GenConfig::new(domain, h, b, seed);
    c.candidates_per_slot = k;
    c
}

pub fn instance(config: &GenConfig, pool: &ItemPool) -> (Instance, AnswerKey) {
    generate(config, pool).unwrap_or_else(|e| panic!("{config:?}: {e}"))
}

pub fn slot_ok(item: &Item, constraints: &[SlotConstraint]) -> bool {
    constraints.iter().all(|c| {
        let attr = &item.attributes[&c.field];
        match (&c.value, attr) {
            (ConstraintValue::Int(v), AttrValue::Int(x)) => match c.comparator {
                Comparator::Le => x <= v,
                Comparator::Ge => x >= v,
                Comparator::Eq => x == v,
                Comparator::Ne => x != v,
                Comparator::In => panic!("`in` on a number"),
            },
            (ConstraintValue::Text(v), AttrValue::Cat(x)) => match c.comparator {
                Comparator::Eq => x == v,
                Comparator::Ne => x != v,
                other => panic!("{other} on a category"),
            },
            (ConstraintValue::Set(vs), AttrValue::Cat(x)) => vs.contains(x),
            _ => panic!("ill-typed constraint {c:?}"),
        }
    })
}

pub fn globals_ok(items: &[&Item], constraints: &[GlobalConstraint]) -> bool {
    constraints.iter().all(|g| match g.kind {
        GlobalKind::SumUpper => sum(items, &g.field) <= g.bound,
        GlobalKind::SumLower => sum(items, &g.field) >= g.bound,
        GlobalKind::CategoryCountUpper => {
            let cat = g.category.as_deref().expect("category");
            let n = items
                .iter()
                .filter(|i| i.attributes[&g.field] == AttrValue::Cat(cat.to_string()))
                .count();
            n as i64 <= g.bound
        }
    })
}

fn sum(items: &[&Item], field: &str) -> i64 {
    items
        .iter()
        .map(|i| match &i.attributes[field] {
            AttrValue::Int(v) => *v,
            AttrValue::Cat(_) => panic!("sum over a category"),
        })
        .sum()
}

/// Every cell's item, with `choice` on hidden cells and truth elsewhere.
pub fn grid_items<'a>(inst: &'a Instance, key: &'a AnswerKey, choice: &BTreeMap<Cell, &'a str>) -> Vec<&'a Item> {
    let mut out: Vec<&Item> = inst.prefilled.values().map(|id| &inst.items[id]).collect();
    for slot in &inst.hidden {
        let id = choice.get(&slot.cell).copied().unwrap_or(&key.truth[&slot.cell]);
        out.push(&inst.items[id]);
    }
    out
}

/// Calls `f` on every element of the cartesian product of `lists`.
pub fn for_each_product<T>(lists: &[Vec<T>], mut f: impl FnMut(&[&T])) {
    if lists.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; lists.len()];
    loop {
        let pick: Vec<&T> = lists.iter().zip(&idx).map(|(l, &i)| &l[i]).collect();
        f(&pick);
        let mut d = lists.len();
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < lists[d].len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

/// All fully valid completions, found by enumerating every candidate
/// assignment.
pub fn all_solutions(inst: &Instance, key: &AnswerKey) -> Vec<BTreeMap<Cell, String>> {
    let lists: Vec<Vec<&str>> = inst
        .hidden
        .iter()
        .map(|s| s.candidates.iter().map(String::as_str).collect())
        .collect();
    let mut out = Vec::new();
    for_each_product(&lists, |pick| {
        let choice: BTreeMap<Cell, &str> = inst.hidden.iter().zip(pick).map(|(s, id)| (s.cell, **id)).collect();
        let local = inst
            .hidden
            .iter()
            .all(|s| slot_ok(&inst.items[choice[&s.cell]], &s.constraints));
        if local && globals_ok(&grid_items(inst, key, &choice), &inst.global_constraints) {
            out.push(choice.iter().map(|(c, id)| (*c, id.to_string())).collect());
        }
    });
    out
}

/// Decoys that some prior combination fails to expose, by materializing
/// every grid: earlier decoy slots at truth or any of their decoys, the
/// decoy in place, truth everywhere else.
pub fn closure_violations(inst: &Instance, key: &AnswerKey) -> Vec<String> {
    let mut bad = Vec::new();
    for (i, (cell, _)) in key.allocations.iter().enumerate() {
        let prior = &key.allocations[..i];
        let lists: Vec<Vec<&str>> = prior
            .iter()
            .map(|(c, _)| {
                std::iter::once(key.truth[c].as_str())
                    .chain(key.decoys[c].iter().map(String::as_str))
                    .collect()
            })
            .collect();
        for decoy in &key.decoys[cell] {
            for_each_product(&lists, |pick| {
                let mut choice: BTreeMap<Cell, &str> = prior.iter().zip(pick).map(|((c, _), id)| (*c, **id)).collect();
                choice.insert(*cell, decoy);
                if globals_ok(&grid_items(inst, key, &choice), &inst.global_constraints) {
                    bad.push(format!("{cell} decoy {decoy} satisfied under {choice:?}"));
                }
            });
        }
    }
    bad
}

/// Words that would reveal the answer key or a candidate's class.
pub const LEAK_WORDS: [&str; 7] = [
    "truth",
    "decoy",
    "filter",
    "answer",
    "solution",
    "allocation",
    "correct",
];

/// Leaks in one tool payload: a label word anywhere, or a key-only field.
pub fn leaks(payload: &Value) -> Vec<String> {
    let text = payload.to_string().to_lowercase();
    LEAK_WORDS
        .iter()
        .filter(|w| text.contains(*w))
        .map(|w| format!("`{w}` in {text}"))
        .collect()
}

/// Pearson chi-square statistic against a uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}
