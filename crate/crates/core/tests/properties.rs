mod common;

use std::collections::BTreeMap;

use gridbench::constraint::{eval_global_full, eval_global_open_prefix};
use gridbench::domain::Domain;
use gridbench::env::{replay, Episode, Tool, ToolCall};
use gridbench::generator::{
    generate, nested_allocations, open_prefix_check, sample_allocation, AnswerKey, DecoyContext, Instance, PriorSlot,
    SoftLevel,
};
use gridbench::grid::Cell;
use gridbench::seed::rng_from_seed;
use proptest::prelude::*;
use serde_json::json;

use common::*;

fn domain() -> impl Strategy<Value = Domain> {
    prop::sample::select(Domain::ALL.to_vec())
}

fn small_instance(domain: Domain, h: usize, b: usize, seed: u64) -> (Instance, AnswerKey) {
    let b = b.min(h * 9);
    instance(&small_config(domain, h, b, 10, seed), &pool(domain, seed % 3))
}

/// Turns an abstract action into a call that is usually, not always, valid.
fn call_for(inst: &Instance, key: &AnswerKey, tool: usize, slot: usize, pick: usize) -> ToolCall {
    let s = &inst.hidden[slot % inst.hidden.len()];
    let (row, col) = (s.cell.row, s.cell.col);
    let id = &s.candidates[pick % s.candidates.len()];
    let fields = inst.schema().field_names();
    let field = fields[pick % fields.len()];
    let t = Tool::ALL[tool % Tool::ALL.len()];
    let args = match t {
        Tool::SetSlot if pick.is_multiple_of(5) => json!({"row": row, "col": col, "id": null}),
        Tool::SetSlot if pick.is_multiple_of(7) => json!({"row": row, "col": col, "id": key.truth[&s.cell]}),
        Tool::SetSlot => json!({"row": row, "col": col, "id": id}),
        Tool::GetSlotId | Tool::GetHiddenSlotQueryBudget | Tool::CheckSlotConstraints => {
            json!({"row": row, "col": (col + pick % 2) % inst.cols})
        }
        Tool::QueryCandidates => json!({"row": row, "col": col, "field": field, "operator": ">=", "value": 0}),
        Tool::GetItemAttributes => json!({"ids": [id], "field": field}),
        Tool::GetItemInfo => json!({"id": id}),
        _ => json!({}),
    };
    ToolCall::new(t.name(inst.domain), args)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocations_conserve_the_budget(h in 1usize..=21, k in 2usize..=25, frac in 0.0f64..=1.0, seed: u64) {
        let b = ((h * (k - 1)) as f64 * frac).round() as usize;
        let parts = sample_allocation(h, b, k, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(parts.iter().sum::<usize>(), b);
        prop_assert!(parts.len() <= h);
        prop_assert!(parts.iter().all(|&p| (1..k).contains(&p)));
        prop_assert!(parts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn over_capacity_budgets_are_rejected(h in 1usize..=10, k in 2usize..=12, extra in 1usize..20) {
        prop_assert!(sample_allocation(h, h * (k - 1) + extra, k, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn nested_allocations_only_grow(h in 1usize..=21, mut budgets in prop::collection::vec(0usize..=100, 1..9), seed: u64) {
        let k = 25;
        for b in &mut budgets {
            *b = (*b).min(h * (k - 1));
        }
        budgets.sort_unstable();
        let allocs = nested_allocations(h, &budgets, k, &mut rng_from_seed(seed)).unwrap();
        for (b, a) in budgets.iter().zip(&allocs) {
            prop_assert_eq!(a.iter().sum::<usize>(), *b);
            prop_assert!(a.len() <= h && a.iter().all(|&p| (1..k).contains(&p)));
        }
        for w in allocs.windows(2) {
            prop_assert!(w[0].len() <= w[1].len());
            prop_assert!(w[0].iter().zip(&w[1]).all(|(x, y)| x <= y));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generation_is_deterministic(d in domain(), h in 1usize..=6, b in 0usize..=12, seed in 0u64..1000) {
        let pool = pool(d, 1);
        let config = small_config(d, h, b.min(h * 9), 10, seed);
        let (i1, k1) = generate(&config, &pool).unwrap();
        let (i2, k2) = generate(&config, &pool).unwrap();
        prop_assert_eq!(i1, i2);
        prop_assert_eq!(k1, k2);
    }

    #[test]
    fn soft_levels_are_nested(d in domain(), h in 2usize..=6, b in 2usize..=12, seed in 0u64..1000) {
        let (inst, key) = small_instance(d, h, b, seed);
        let truth = inst.truth_grid(&key);
        let decoy_cells: Vec<Cell> = key.allocations.iter().map(|(c, _)| *c).collect();
        let rest: Vec<Cell> = inst.hidden.iter().map(|s| s.cell).filter(|c| !decoy_cells.contains(c)).collect();
        for (i, (cell, _)) in key.allocations.iter().enumerate() {
            let prior: Vec<PriorSlot> = key.allocations[..i]
                .iter()
                .map(|(c, _)| PriorSlot { cell: *c, truth: key.truth[c].clone(), decoys: key.decoys[c].clone() })
                .collect();
            let future: Vec<Cell> = decoy_cells[i + 1..].iter().chain(&rest).copied().collect();
            let ctx = DecoyContext {
                truth: &truth,
                items: &inst.items,
                constraints: &inst.global_constraints,
                prior: &prior,
                future_hidden: &future,
            };
            for item in inst.items.values() {
                let l1 = open_prefix_check(&ctx, *cell, item, SoftLevel::AllHistories).unwrap();
                let l2 = open_prefix_check(&ctx, *cell, item, SoftLevel::PrefixTruthSuffixDecoy).unwrap();
                let l3 = open_prefix_check(&ctx, *cell, item, SoftLevel::AllTruth).unwrap();
                prop_assert!(!l1 || l2, "level 1 passed but level 2 failed for {}", item.id);
                prop_assert!(!l2 || l3, "level 2 passed but level 3 failed for {}", item.id);
            }
        }
    }

    #[test]
    fn open_prefix_agrees_with_full_and_is_antitone(
        d in domain(),
        h in 1usize..=5,
        picks in prop::collection::vec(0usize..10, 5),
        cut in 0usize..5,
        seed in 0u64..1000,
    ) {
        let (inst, key) = small_instance(d, h, 2 * h, seed);
        let mut grid = inst.truth_grid(&key);
        let mut choice = BTreeMap::new();
        for (slot, p) in inst.hidden.iter().zip(&picks) {
            let id = slot.candidates[*p].as_str();
            grid.set(slot.cell, id);
            choice.insert(slot.cell, id);
        }
        let full = eval_global_full(&grid, &inst.items, &inst.global_constraints).unwrap();
        let open = eval_global_open_prefix(&grid, &inst.items, &inst.global_constraints).unwrap();
        prop_assert_eq!(full, open);
        prop_assert_eq!(full, globals_ok(&grid_items(&inst, &key, &choice), &inst.global_constraints));

        // emptying more cells never turns a passing prefix into a failing one
        let mut partial = grid.clone();
        for slot in inst.hidden.iter().take(cut.max(1)) {
            partial.clear(slot.cell);
        }
        let before = eval_global_open_prefix(&partial, &inst.items, &inst.global_constraints).unwrap();
        let prefilled = *inst.prefilled.keys().nth(picks[0]).unwrap();
        partial.clear(prefilled);
        let after = eval_global_open_prefix(&partial, &inst.items, &inst.global_constraints).unwrap();
        prop_assert!(!before || after);
    }

    #[test]
    fn episodes_account_for_every_step(
        d in domain(),
        h in 1usize..=5,
        p in prop::sample::select(vec![0.0, 0.3, 1.0]),
        actions in prop::collection::vec((0usize..11, 0usize..5, 0usize..40), 1..120),
        seed: u64,
    ) {
        let (inst, key) = small_instance(d, h, h, seed % 1000);
        let calls: Vec<ToolCall> = actions.iter().map(|&(t, s, k)| call_for(&inst, &key, t, s, k)).collect();
        let mut ep = Episode::new(&inst, p, seed);
        let mut prev_query: Vec<u32> = inst.hidden.iter().map(|s| ep.query_budget(s.cell).unwrap()).collect();
        let mut prev_global = ep.global_check_budget();
        let mut executed = 0;
        let mut results = Vec::new();
        for call in &calls {
            let was_done = ep.is_done();
            let r = ep.dispatch(call);
            results.push(r.clone());
            if was_done {
                prop_assert!(!r.ok);
                continue;
            }
            executed += 1;
            let query: Vec<u32> = inst.hidden.iter().map(|s| ep.query_budget(s.cell).unwrap()).collect();
            let global = ep.global_check_budget();
            prop_assert!(query.iter().zip(&prev_query).all(|(a, b)| a <= b));
            prop_assert!(global <= prev_global);
            if r.is_injected_failure() {
                prop_assert_eq!(&query, &prev_query);
                prop_assert_eq!(global, prev_global);
            }
            prev_query = query;
            prev_global = global;
        }
        prop_assert_eq!(ep.steps(), executed);
        prop_assert_eq!(ep.transcript().len(), executed);
        prop_assert!(ep.injected_failures() <= executed);
        if p == 1.0 {
            prop_assert_eq!(ep.injected_failures(), executed);
        }
        prop_assert_eq!(replay(&inst, p, seed, &calls), results);
    }
}
