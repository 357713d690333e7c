//! Instance generation.
//!
//! Pipeline for one instance:
//!
//! 1. sample a full truth grid and derive global constraints from it;
//! 2. pick the hidden slots and give each two slot constraints the truth satisfies;
//! 3. pick decoy slots and split the decoy budget over them;
//! 4. visit hidden slots in decoy order (decoy slots by descending allocation,
//!    then the rest), collecting filter candidates and sampling decoys;
//! 5. shuffle each candidate list and validate the result.
//!
//! A failed attempt is retried on a fresh random stream of the same seed.

mod decoy;
mod io;
mod validate;

use std::collections::{BTreeMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::constraint::{eval_slot, Comparator, ConstraintError, ConstraintValue, GlobalConstraint, SlotConstraint};
use crate::domain::{schema, AttrValue, Domain, DomainSchema, Item, ItemPool};
use crate::grid::{Cell, GridAssignment};
use crate::seed::rng_from_seed;

pub use decoy::{decoy_hard_check, open_prefix_check, DecoyContext, PriorSlot, SoftLevel, TargetedSampler};
pub use io::{
    key_path_for, read_instance, read_key, read_pool, read_task, task_json, write_instance, write_pool,
    InstanceFileError,
};
pub use validate::{validate, ValidationReport};

/// Per-slot attribute query budget written into generated instances.
pub const DEFAULT_QUERY_BUDGET: u32 = 40;
/// Global constraint check budget written into generated instances.
pub const DEFAULT_GLOBAL_CHECK_BUDGET: u32 = 60;
/// Upper-bound slack, as a fraction of the truth total.
pub const DEFAULT_UPPER_SLACK: f64 = 0.005;
/// Search-node cap for the hard check while sampling; an undecided
/// candidate is simply rejected.
const HARD_CHECK_NODE_LIMIT: u64 = 200_000;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("decoy budget {budget} exceeds capacity {capacity} (H x (K-1))")]
    BudgetExceedsCapacity { budget: usize, capacity: usize },
    #[error("item pool exhausted: need {need}, have {have}")]
    PoolExhausted { need: usize, have: usize },
    #[error("slot {cell}: only {available} items violate the slot constraints, {need} needed")]
    InsufficientFilters { cell: Cell, need: usize, available: usize },
    #[error("slot {cell}: no decoy accepted after {attempts} attempts")]
    DecoyRetriesExhausted { cell: Cell, attempts: u32 },
    #[error("generated instance failed validation: {0}")]
    ValidationFailed(String),
    #[error("generation failed after {attempts} attempts; last error: {last}")]
    Exhausted { attempts: u32, last: Box<GenError> },
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

impl GenError {
    /// Errors a fresh random stream may avoid.
    fn is_retryable(&self) -> bool {
        matches!(
            self,
            GenError::InsufficientFilters { .. }
                | GenError::DecoyRetriesExhausted { .. }
                | GenError::ValidationFailed(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub domain: Domain,
    pub rows: usize,
    pub cols: usize,
    pub hidden_count: usize,
    pub decoy_budget: usize,
    /// Cap the budget at `H x (K-1)` instead of rejecting the config.
    pub clamp_budget: bool,
    pub candidates_per_slot: usize,
    pub relax_thresholds: [u32; 3],
    pub max_retries: u32,
    /// Extra attempts on derived random streams before giving up.
    pub resamples: u32,
    pub query_budget: u32,
    pub global_check_budget: u32,
    pub upper_slack: f64,
    pub seed: u64,
    /// Fixed per-slot decoy counts; drawn at random when `None`.
    pub allocation: Option<Vec<usize>>,
}

impl GenConfig {
    pub fn new(domain: Domain, hidden_count: usize, decoy_budget: usize, seed: u64) -> Self {
        Self {
            domain,
            rows: 5,
            cols: 7,
            hidden_count,
            decoy_budget,
            clamp_budget: false,
            candidates_per_slot: 25,
            relax_thresholds: [30, 50, 70],
            max_retries: 200,
            resamples: 10,
            query_budget: DEFAULT_QUERY_BUDGET,
            global_check_budget: DEFAULT_GLOBAL_CHECK_BUDGET,
            upper_slack: DEFAULT_UPPER_SLACK,
            seed,
            allocation: None,
        }
    }

    pub fn decoy_capacity(&self) -> usize {
        self.hidden_count * self.candidates_per_slot.saturating_sub(1)
    }

    /// Decoys actually placed.
    pub fn effective_budget(&self) -> usize {
        if self.clamp_budget {
            self.decoy_budget.min(self.decoy_capacity())
        } else {
            self.decoy_budget
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let cells = self.rows * self.cols;
        let bad = |m: String| Err(GenError::InvalidConfig(m));
        if cells == 0 {
            return bad("grid must have at least one cell".into());
        }
        if self.hidden_count == 0 || self.hidden_count > cells {
            return bad(format!("hidden count {} outside [1, {cells}]", self.hidden_count));
        }
        if self.candidates_per_slot < 2 {
            return bad("need at least 2 candidates per slot".into());
        }
        let [t1, t2, t3] = self.relax_thresholds;
        if !(t1 < t2 && t2 < t3 && t3 <= self.max_retries) {
            return bad(format!(
                "relaxation thresholds {t1} < {t2} < {t3} <= {} violated",
                self.max_retries
            ));
        }
        if !(0.0..=1.0).contains(&self.upper_slack) {
            return bad("upper slack must be a fraction in [0, 1]".into());
        }
        let capacity = self.decoy_capacity();
        if self.effective_budget() > capacity {
            return Err(GenError::BudgetExceedsCapacity {
                budget: self.decoy_budget,
                capacity,
            });
        }
        if let Some(counts) = &self.allocation {
            let k = self.candidates_per_slot;
            if counts.len() > self.hidden_count
                || counts.iter().any(|c| !(1..k).contains(c))
                || counts.iter().sum::<usize>() != self.effective_budget()
            {
                return bad(format!(
                    "allocation {counts:?} must have at most {} parts in [1, {}] summing to {}",
                    self.hidden_count,
                    k - 1,
                    self.effective_budget()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenSlot {
    pub cell: Cell,
    pub constraints: Vec<SlotConstraint>,
    pub candidates: Vec<String>,
    pub query_budget: u32,
}

/// The public side of a task: everything an agent may see.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub domain: Domain,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub h: usize,
    /// Requested decoy budget (the difficulty coordinate).
    pub b: usize,
    /// Decoys actually placed.
    pub decoy_budget: usize,
    pub k: usize,
    pub global_constraints: Vec<GlobalConstraint>,
    pub global_check_budget: u32,
    pub prefilled: BTreeMap<Cell, String>,
    pub hidden: Vec<HiddenSlot>,
    /// Every item referenced by the instance.
    pub items: BTreeMap<String, Item>,
}

impl Instance {
    pub fn hidden_slot(&self, cell: Cell) -> Option<&HiddenSlot> {
        self.hidden.iter().find(|s| s.cell == cell)
    }

    pub fn is_hidden(&self, cell: Cell) -> bool {
        self.hidden_slot(cell).is_some()
    }

    pub fn schema(&self) -> DomainSchema {
        schema(self.domain)
    }

    /// Grid with pre-filled cells only.
    pub fn initial_grid(&self) -> GridAssignment {
        let mut g = GridAssignment::new(self.rows, self.cols);
        for (cell, id) in &self.prefilled {
            g.set(*cell, id.clone());
        }
        g
    }

    /// Grid with every hidden slot at its truth item.
    pub fn truth_grid(&self, key: &AnswerKey) -> GridAssignment {
        let mut g = self.initial_grid();
        for (cell, id) in &key.truth {
            g.set(*cell, id.clone());
        }
        g
    }
}

/// The private side of a task.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnswerKey {
    pub truth: BTreeMap<Cell, String>,
    pub decoys: BTreeMap<Cell, Vec<String>>,
    pub filters: BTreeMap<Cell, Vec<String>>,
    /// Decoy slots with their allocation, in processing order.
    pub allocations: Vec<(Cell, usize)>,
}

impl AnswerKey {
    pub fn total_decoys(&self) -> usize {
        self.decoys.values().map(Vec::len).sum()
    }
}

/// Draws a full grid of distinct items.
pub fn sample_truth_grid<R: Rng + ?Sized>(
    pool: &ItemPool,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<GridAssignment, GenError> {
    let need = rows * cols;
    if pool.len() < need {
        return Err(GenError::PoolExhausted { need, have: pool.len() });
    }
    let mut grid = GridAssignment::new(rows, cols);
    let picks = index::sample(rng, pool.len(), need);
    let cells: Vec<Cell> = grid.all_cells().collect();
    for (cell, i) in cells.into_iter().zip(picks) {
        grid.set(cell, pool.items()[i].id.clone());
    }
    Ok(grid)
}

fn int_attr(item: &Item, field: &str) -> i64 {
    item.attr(field).and_then(AttrValue::as_int).unwrap_or(0)
}

/// Global constraints satisfied by the truth grid: a cap on the cost total,
/// a cap on one other numeric total, a floor on the benefit total and a cap
/// on how often one category occurs. Caps sit at most `slack_fraction` of
/// the truth total above it.
pub fn synthesize_global_constraints<R: Rng + ?Sized>(
    truth: &GridAssignment,
    pool: &ItemPool,
    slack_fraction: f64,
    rng: &mut R,
) -> Vec<GlobalConstraint> {
    let schema = schema(pool.domain());
    let items: Vec<&Item> = truth.filled().filter_map(|(_, id)| pool.get(id)).collect();
    let total = |field: &str| items.iter().map(|it| int_attr(it, field)).sum::<i64>();
    let slack = |sum: i64, rng: &mut R| {
        let max = (sum.max(0) as f64 * slack_fraction).floor() as i64;
        rng.gen_range(0..=max)
    };

    let mut out = Vec::new();
    let cost = total(schema.cost_field);
    out.push(GlobalConstraint::sum_upper(schema.cost_field, cost + slack(cost, rng)));

    let others: Vec<&str> = schema
        .numeric_fields
        .iter()
        .map(|f| f.name)
        .filter(|f| *f != schema.cost_field && *f != schema.benefit_field)
        .collect();
    let second = others[rng.gen_range(0..others.len())];
    let second_total = total(second);
    out.push(GlobalConstraint::sum_upper(
        second,
        second_total + slack(second_total, rng),
    ));

    let benefit = total(schema.benefit_field);
    out.push(GlobalConstraint::sum_lower(
        schema.benefit_field,
        benefit - slack(benefit, rng),
    ));

    let field = schema.categorical_fields[rng.gen_range(0..schema.categorical_fields.len())];
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for it in &items {
        if let Some(v) = it.attr(field.name).and_then(AttrValue::as_cat) {
            *counts.entry(v).or_default() += 1;
        }
    }
    let present: Vec<(&str, i64)> = counts.into_iter().collect();
    let (category, count) = present[rng.gen_range(0..present.len())];
    out.push(GlobalConstraint::category_count_upper(field.name, category, count));
    out
}

/// Two slot constraints on two random distinct attributes.
pub fn synthesize_slot_constraints<R: Rng + ?Sized>(
    schema: &DomainSchema,
    truth: &Item,
    rng: &mut R,
) -> Vec<SlotConstraint> {
    let fields: Vec<&str> = schema.field_names().choose_multiple(rng, 2).copied().collect();
    synthesize_slot_constraints_on(schema, truth, [fields[0], fields[1]], rng)
}

/// One constraint per named field, each satisfied by `truth` and each
/// excluding part of the attribute range.
pub fn synthesize_slot_constraints_on<R: Rng + ?Sized>(
    schema: &DomainSchema,
    truth: &Item,
    fields: [&str; 2],
    rng: &mut R,
) -> Vec<SlotConstraint> {
    fields.iter().map(|f| constraint_for(schema, truth, f, rng)).collect()
}

fn constraint_for<R: Rng + ?Sized>(schema: &DomainSchema, truth: &Item, field: &str, rng: &mut R) -> SlotConstraint {
    if let Some(nf) = schema.numeric(field) {
        let t = int_attr(truth, field);
        let span = nf.max - nf.min;
        let lo_margin = (span / 10).max(1);
        let hi_margin = (span * 2 / 5).max(lo_margin);
        let margin = rng.gen_range(lo_margin..=hi_margin);
        let mut forms = Vec::with_capacity(2);
        if t + margin < nf.max {
            forms.push((Comparator::Le, t + margin));
        }
        if t - margin > nf.min {
            forms.push((Comparator::Ge, t - margin));
        }
        let (cmp, bound) = forms.choose(rng).copied().unwrap_or((Comparator::Eq, t));
        return SlotConstraint::new(field, cmp, ConstraintValue::Int(bound));
    }
    let cf = schema.categorical(field).expect("field comes from the schema");
    let v = truth
        .attr(field)
        .and_then(AttrValue::as_cat)
        .unwrap_or_default()
        .to_string();
    let others: Vec<&str> = cf.categories.iter().copied().filter(|c| *c != v).collect();
    match rng.gen_range(0..4) {
        0 => SlotConstraint::new(field, Comparator::Eq, ConstraintValue::Text(v)),
        1 => {
            let other = others.choose(rng).expect("at least two categories");
            SlotConstraint::new(field, Comparator::Ne, ConstraintValue::Text((*other).to_string()))
        }
        _ => {
            let extra = rng.gen_range(1..=2.min(others.len()));
            let mut chosen: Vec<&str> = others.choose_multiple(rng, extra).copied().collect();
            chosen.push(&v);
            // keep schema order so the text form is canonical
            let set = cf
                .categories
                .iter()
                .filter(|c| chosen.contains(c))
                .map(|c| (*c).to_string())
                .collect();
            SlotConstraint::new(field, Comparator::In, ConstraintValue::Set(set))
        }
    }
}

/// Uniform sample of `count` distinct cells, in sampled order.
pub fn select_hidden_slots<R: Rng + ?Sized>(rows: usize, cols: usize, count: usize, rng: &mut R) -> Vec<Cell> {
    index::sample(rng, rows * cols, count)
        .into_iter()
        .map(|i| Cell::new(i / cols, i % cols))
        .collect()
}

/// Picks decoy slots among `hidden` and splits `budget` over them.
///
/// The number of decoy slots is uniform between the fewest that can hold the
/// budget and `min(H, B)`; the split is a uniform composition with every
/// part in `[1, K-1]`. Returned in decoy order (descending allocation).
pub fn select_decoy_slots<R: Rng + ?Sized>(
    hidden: &[Cell],
    budget: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<(Cell, usize)>, GenError> {
    let counts = sample_allocation(hidden.len(), budget, k, rng)?;
    Ok(place_allocation(hidden, &counts, rng))
}

/// Per-slot decoy counts for `budget` over at most `h` slots, descending.
pub fn sample_allocation<R: Rng + ?Sized>(
    h: usize,
    budget: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>, GenError> {
    if budget == 0 {
        return Ok(Vec::new());
    }
    let cap = k.saturating_sub(1);
    let capacity = h * cap;
    if budget > capacity {
        return Err(GenError::BudgetExceedsCapacity { budget, capacity });
    }
    let min_slots = budget.div_ceil(cap);
    let max_slots = h.min(budget);
    let n = rng.gen_range(min_slots..=max_slots);
    let mut parts = bounded_composition(budget, n, cap, rng);
    parts.sort_unstable_by(|a, b| b.cmp(a));
    Ok(parts)
}

/// Assigns counts to distinct random cells of `hidden`, keeping their order.
pub fn place_allocation<R: Rng + ?Sized>(hidden: &[Cell], counts: &[usize], rng: &mut R) -> Vec<(Cell, usize)> {
    let cells: Vec<Cell> = hidden.choose_multiple(rng, counts.len()).copied().collect();
    let mut out: Vec<(Cell, usize)> = cells.into_iter().zip(counts.iter().copied()).collect();
    out.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    out
}

/// Allocations for a series of budgets that refine one another: the largest
/// budget is drawn as in [`sample_allocation`] and each smaller budget keeps
/// a uniformly random subset of its decoys. A larger budget therefore never
/// makes any slot easier. Result is indexed like `budgets`.
pub fn nested_allocations<R: Rng + ?Sized>(
    h: usize,
    budgets: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, GenError> {
    let top = budgets.iter().copied().max().unwrap_or(0);
    let full = sample_allocation(h, top, k, rng)?;
    let mut units: Vec<usize> = full
        .iter()
        .enumerate()
        .flat_map(|(slot, &c)| std::iter::repeat_n(slot, c))
        .collect();
    units.shuffle(rng);
    Ok(budgets
        .iter()
        .map(|&b| {
            let mut counts = vec![0usize; full.len()];
            for &slot in &units[..b] {
                counts[slot] += 1;
            }
            counts.retain(|&c| c > 0);
            counts.sort_unstable_by(|a, b| b.cmp(a));
            counts
        })
        .collect())
}

/// Uniform random composition of `total` into `parts` parts in `[1, cap]`.
fn bounded_composition<R: Rng + ?Sized>(total: usize, parts: usize, cap: usize, rng: &mut R) -> Vec<usize> {
    // ways[p][s]: compositions of s into p parts within [1, cap]
    let mut ways = vec![vec![0f64; total + 1]; parts + 1];
    ways[0][0] = 1.0;
    for p in 1..=parts {
        for s in p..=total {
            ways[p][s] = (1..=cap.min(s)).map(|x| ways[p - 1][s - x]).sum();
        }
    }
    let mut out = Vec::with_capacity(parts);
    let mut left = total;
    for p in (1..=parts).rev() {
        let mut pick = rng.gen::<f64>() * ways[p][left];
        let mut chosen = None;
        for x in 1..=cap.min(left) {
            let w = ways[p - 1][left - x];
            if w == 0.0 {
                continue;
            }
            chosen = Some(x);
            if pick < w {
                break;
            }
            pick -= w;
        }
        let x = chosen.expect("a valid composition exists");
        out.push(x);
        left -= x;
    }
    out
}

/// Samples `need` distinct items violating the slot constraints, skipping
/// `exclude`.
pub fn collect_filter_candidates<R: Rng + ?Sized>(
    pool: &ItemPool,
    constraints: &[SlotConstraint],
    need: usize,
    exclude: &HashSet<&str>,
    cell: Cell,
    rng: &mut R,
) -> Result<Vec<String>, GenError> {
    let mut violating = Vec::new();
    for item in pool.items() {
        if !exclude.contains(item.id.as_str()) && !eval_slot(item, constraints)? {
            violating.push(item.id.as_str());
        }
    }
    if violating.len() < need {
        return Err(GenError::InsufficientFilters {
            cell,
            need,
            available: violating.len(),
        });
    }
    Ok(index::sample(rng, violating.len(), need)
        .into_iter()
        .map(|i| violating[i].to_string())
        .collect())
}

/// Samples one decoy for `cell`, relaxing the open-prefix preference as
/// attempts accumulate. The last decoy slot only needs the hard check.
#[allow(clippy::too_many_arguments)]
pub fn sample_decoy<'p, R: Rng + ?Sized>(
    ctx: &DecoyContext<'_>,
    cell: Cell,
    sampler: &TargetedSampler<'p>,
    exclude: &HashSet<&str>,
    last_decoy_slot: bool,
    thresholds: [u32; 3],
    max_retries: u32,
    rng: &mut R,
) -> Result<&'p Item, GenError> {
    for attempt in 1..=max_retries {
        let Some(candidate) = sampler.sample(rng, exclude) else {
            break;
        };
        if decoy::hard_check_bounded(ctx, cell, candidate, Some(HARD_CHECK_NODE_LIMIT))? != Some(true) {
            continue;
        }
        if last_decoy_slot {
            return Ok(candidate);
        }
        match SoftLevel::for_attempt(attempt, thresholds) {
            Some(level) if !open_prefix_check(ctx, cell, candidate, level)? => continue,
            _ => return Ok(candidate),
        }
    }
    Err(GenError::DecoyRetriesExhausted {
        cell,
        attempts: max_retries,
    })
}

/// Generates and validates one instance. Deterministic in `config`.
pub fn generate(config: &GenConfig, pool: &ItemPool) -> Result<(Instance, AnswerKey), GenError> {
    config.validate()?;
    if pool.domain() != config.domain {
        return Err(GenError::InvalidConfig(format!(
            "pool is for {}, config for {}",
            pool.domain(),
            config.domain
        )));
    }
    let need = config.rows * config.cols + config.candidates_per_slot;
    if pool.len() < need {
        return Err(GenError::PoolExhausted { need, have: pool.len() });
    }
    let mut last = None;
    for attempt in 0..=config.resamples {
        let mut rng = rng_from_seed(config.seed);
        rng.set_stream(u64::from(attempt));
        match generate_once(config, pool, &mut rng) {
            Ok((instance, key)) => {
                let report = validate(&instance, &key);
                if report.passed() {
                    return Ok((instance, key));
                }
                last = Some(GenError::ValidationFailed(report.failures.join("; ")));
            }
            Err(e) if e.is_retryable() => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(GenError::Exhausted {
        attempts: config.resamples + 1,
        last: Box::new(last.expect("at least one attempt ran")),
    })
}

fn generate_once(config: &GenConfig, pool: &ItemPool, rng: &mut ChaCha8Rng) -> Result<(Instance, AnswerKey), GenError> {
    let schema = schema(config.domain);
    let k = config.candidates_per_slot;
    let truth = sample_truth_grid(pool, config.rows, config.cols, rng)?;
    let global = synthesize_global_constraints(&truth, pool, config.upper_slack, rng);
    let hidden = select_hidden_slots(config.rows, config.cols, config.hidden_count, rng);

    // pair up a shuffled field list so the slots jointly cover every attribute
    let mut fields = schema.field_names();
    fields.shuffle(rng);
    let mut slot_constraints = BTreeMap::new();
    for (i, cell) in hidden.iter().enumerate() {
        let item = pool
            .get(truth.get(*cell).expect("truth grid is full"))
            .expect("truth ids come from the pool");
        let pair = [fields[(2 * i) % fields.len()], fields[(2 * i + 1) % fields.len()]];
        slot_constraints.insert(*cell, synthesize_slot_constraints_on(&schema, item, pair, rng));
    }

    let allocations = match &config.allocation {
        Some(counts) => place_allocation(&hidden, counts, rng),
        None => select_decoy_slots(&hidden, config.effective_budget(), k, rng)?,
    };
    let decoy_cells: HashSet<Cell> = allocations.iter().map(|(c, _)| *c).collect();
    let mut order: Vec<(Cell, usize)> = allocations.clone();
    order.extend(hidden.iter().filter(|c| !decoy_cells.contains(c)).map(|c| (*c, 0)));

    let truth_ids: HashSet<&str> = truth.filled().map(|(_, id)| id).collect();
    let mut prior: Vec<PriorSlot> = Vec::new();
    let mut key = AnswerKey {
        allocations: allocations.clone(),
        ..AnswerKey::default()
    };
    let mut candidates_by_cell = BTreeMap::new();

    for (pos, &(cell, alloc)) in order.iter().enumerate() {
        let constraints = &slot_constraints[&cell];
        let truth_id = truth.get(cell).expect("truth grid is full").to_string();
        let filters = collect_filter_candidates(pool, constraints, k - 1 - alloc, &truth_ids, cell, rng)?;

        let mut decoys: Vec<String> = Vec::with_capacity(alloc);
        if alloc > 0 {
            let future: Vec<Cell> = order[pos + 1..].iter().map(|(c, _)| *c).collect();
            let ctx = DecoyContext {
                truth: &truth,
                items: pool,
                constraints: &global,
                prior: &prior,
                future_hidden: &future,
            };
            let mut local = Vec::new();
            for item in pool.items() {
                if !truth_ids.contains(item.id.as_str()) && eval_slot(item, constraints)? {
                    local.push(item);
                }
            }
            let sampler = TargetedSampler::new(&ctx, cell, local)?;
            let last_decoy_slot = pos + 1 == allocations.len();
            for _ in 0..alloc {
                let exclude: HashSet<&str> = decoys.iter().map(String::as_str).collect();
                let d = sample_decoy(
                    &ctx,
                    cell,
                    &sampler,
                    &exclude,
                    last_decoy_slot,
                    config.relax_thresholds,
                    config.max_retries,
                    rng,
                )?;
                decoys.push(d.id.clone());
            }
            prior.push(PriorSlot {
                cell,
                truth: truth_id.clone(),
                decoys: decoys.clone(),
            });
        }

        let mut candidates: Vec<String> = std::iter::once(truth_id.clone())
            .chain(decoys.iter().cloned())
            .chain(filters.iter().cloned())
            .collect();
        candidates.shuffle(rng);
        candidates_by_cell.insert(cell, candidates);
        key.truth.insert(cell, truth_id);
        key.decoys.insert(cell, decoys);
        key.filters.insert(cell, filters);
    }

    let hidden_set: HashSet<Cell> = hidden.iter().copied().collect();
    let prefilled: BTreeMap<Cell, String> = truth
        .filled()
        .filter(|(c, _)| !hidden_set.contains(c))
        .map(|(c, id)| (c, id.to_string()))
        .collect();
    let mut hidden_slots: Vec<HiddenSlot> = hidden
        .iter()
        .map(|cell| HiddenSlot {
            cell: *cell,
            constraints: slot_constraints[cell].clone(),
            candidates: candidates_by_cell.remove(cell).expect("every hidden slot was visited"),
            query_budget: config.query_budget,
        })
        .collect();
    hidden_slots.sort_by_key(|s| s.cell);

    let mut items = BTreeMap::new();
    let referenced = prefilled
        .values()
        .chain(hidden_slots.iter().flat_map(|s| s.candidates.iter()));
    for id in referenced {
        let item = pool.get(id).expect("ids come from the pool");
        items.insert(id.clone(), item.clone());
    }

    let instance = Instance {
        domain: config.domain,
        rows: config.rows,
        cols: config.cols,
        seed: config.seed,
        h: config.hidden_count,
        b: config.decoy_budget,
        decoy_budget: config.effective_budget(),
        k,
        global_constraints: global,
        global_check_budget: config.global_check_budget,
        prefilled,
        hidden: hidden_slots,
        items,
    };
    Ok((instance, key))
}
