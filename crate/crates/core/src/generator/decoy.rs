//! Decoy admission.
//!
//! A decoy at slot `s` must break the global constraints for every
//! truth/decoy choice at the decoy slots processed before `s`, with every
//! later hidden slot at its truth item (the hard check). Preferably it also
//! keeps the upper-bound constraints intact while later hidden slots are
//! still empty (the open-prefix check), under a history set that shrinks as
//! sampling attempts accumulate.
//!
//! Every global constraint is linear in per-item contributions (a field
//! value, or a 0/1 category indicator), so both checks work on contribution
//! vectors rather than on materialised grids.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::constraint::{ConstraintError, GlobalConstraint};
use crate::domain::{Item, ItemLookup};
use crate::grid::{Cell, GridAssignment};

/// An earlier decoy slot: its truth item and accepted decoys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorSlot {
    pub cell: Cell,
    pub truth: String,
    pub decoys: Vec<String>,
}

/// Soft-preference strictness, strictest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SoftLevel {
    /// Every truth/decoy combination of the earlier decoy slots.
    AllHistories = 1,
    /// Earlier decoy slots at truth up to some point, at a decoy after it.
    PrefixTruthSuffixDecoy = 2,
    /// Earlier decoy slots all at truth.
    AllTruth = 3,
}

impl SoftLevel {
    /// Level in force at a 1-based attempt number; `None` once the last
    /// threshold is passed and only the hard check applies.
    pub fn for_attempt(attempt: u32, thresholds: [u32; 3]) -> Option<Self> {
        if attempt <= thresholds[0] {
            Some(SoftLevel::AllHistories)
        } else if attempt <= thresholds[1] {
            Some(SoftLevel::PrefixTruthSuffixDecoy)
        } else if attempt <= thresholds[2] {
            Some(SoftLevel::AllTruth)
        } else {
            None
        }
    }
}

/// Everything the checks need about the instance under construction.
pub struct DecoyContext<'a> {
    /// Complete truth grid.
    pub truth: &'a GridAssignment,
    pub items: &'a dyn ItemLookup,
    pub constraints: &'a [GlobalConstraint],
    /// Decoy slots processed before the current one, in processing order.
    pub prior: &'a [PriorSlot],
    /// Hidden slots processed after the current one; empty in open-prefix mode.
    pub future_hidden: &'a [Cell],
}

/// Per-constraint aggregates for one slot.
struct Terms {
    /// Truth contributions of every cell except prior decoy slots and the slot itself.
    fixed: Vec<i64>,
    /// As `fixed`, minus future hidden slots.
    present: Vec<i64>,
    /// `[prior slot][option]` contribution vectors; option 0 is the truth.
    options: Vec<Vec<Vec<i64>>>,
}

impl<'a> DecoyContext<'a> {
    fn resolve(&self, id: &str) -> Result<&'a Item, ConstraintError> {
        self.items
            .item(id)
            .ok_or_else(|| ConstraintError::UnknownItem(id.to_string()))
    }

    fn contributions(&self, item: &Item) -> Result<Vec<i64>, ConstraintError> {
        self.constraints.iter().map(|c| c.contribution(item)).collect()
    }

    fn terms(&self, cell: Cell) -> Result<Terms, ConstraintError> {
        let n = self.constraints.len();
        let prior_cells: HashSet<Cell> = self.prior.iter().map(|p| p.cell).collect();
        let future: HashSet<Cell> = self.future_hidden.iter().copied().collect();
        let mut fixed = vec![0; n];
        let mut present = vec![0; n];
        for (c, id) in self.truth.filled() {
            if c == cell || prior_cells.contains(&c) {
                continue;
            }
            let w = self.contributions(self.resolve(id)?)?;
            for j in 0..n {
                fixed[j] += w[j];
                if !future.contains(&c) {
                    present[j] += w[j];
                }
            }
        }
        let options = self
            .prior
            .iter()
            .map(|p| {
                std::iter::once(&p.truth)
                    .chain(&p.decoys)
                    .map(|id| self.contributions(self.resolve(id)?))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Terms {
            fixed,
            present,
            options,
        })
    }
}

/// Exact hard check: true iff every prior combination, with `candidate` at
/// `cell` and truth everywhere else, violates some global constraint.
pub fn decoy_hard_check(ctx: &DecoyContext<'_>, cell: Cell, candidate: &Item) -> Result<bool, ConstraintError> {
    Ok(hard_check_bounded(ctx, cell, candidate, None)?.expect("unbounded search always decides"))
}

/// Hard check with a cap on search nodes; `None` means undecided.
pub(crate) fn hard_check_bounded(
    ctx: &DecoyContext<'_>,
    cell: Cell,
    candidate: &Item,
    node_limit: Option<u64>,
) -> Result<Option<bool>, ConstraintError> {
    let terms = ctx.terms(cell)?;
    let w = ctx.contributions(candidate)?;
    let base: Vec<i64> = terms.fixed.iter().zip(&w).map(|(a, b)| a + b).collect();
    let mut budget = node_limit;
    let found = find_satisfying(&base, &terms.options, ctx.constraints, &mut budget);
    Ok(found.map(|f| !f))
}

/// Searches for a combination of prior options under which every constraint
/// holds. Subtrees are pruned when some constraint fails even under the most
/// favourable completion.
fn find_satisfying(
    base: &[i64],
    options: &[Vec<Vec<i64>>],
    constraints: &[GlobalConstraint],
    budget: &mut Option<u64>,
) -> Option<bool> {
    let n = constraints.len();
    let m = options.len();
    // best[d][j]: most favourable total of constraint j over slots d..m
    let mut best = vec![vec![0i64; n]; m + 1];
    for d in (0..m).rev() {
        for j in 0..n {
            let pick = options[d].iter().map(|o| o[j]);
            let favourable = if constraints[j].is_upper() {
                pick.min()
            } else {
                pick.max()
            };
            best[d][j] = best[d + 1][j] + favourable.unwrap_or(0);
        }
    }

    fn dfs(
        d: usize,
        partial: &mut [i64],
        options: &[Vec<Vec<i64>>],
        best: &[Vec<i64>],
        constraints: &[GlobalConstraint],
        budget: &mut Option<u64>,
    ) -> Option<bool> {
        if let Some(left) = budget {
            if *left == 0 {
                return None;
            }
            *left -= 1;
        }
        let feasible = constraints
            .iter()
            .enumerate()
            .all(|(j, c)| c.satisfied_by(partial[j] + best[d][j]));
        if !feasible {
            return Some(false);
        }
        if d == options.len() {
            return Some(true);
        }
        for opt in &options[d] {
            for (p, v) in partial.iter_mut().zip(opt) {
                *p += v;
            }
            let r = dfs(d + 1, partial, options, best, constraints, budget);
            for (p, v) in partial.iter_mut().zip(opt) {
                *p -= v;
            }
            match r {
                Some(false) => {}
                other => return other,
            }
        }
        Some(false)
    }

    let mut partial = base.to_vec();
    dfs(0, &mut partial, options, &best, constraints, budget)
}

/// Open-prefix check at a given strictness: with `candidate` at `cell`,
/// future hidden slots empty and the earlier decoy slots drawn from the
/// level's history set, every upper-bound constraint must hold.
pub fn open_prefix_check(
    ctx: &DecoyContext<'_>,
    cell: Cell,
    candidate: &Item,
    level: SoftLevel,
) -> Result<bool, ConstraintError> {
    let terms = ctx.terms(cell)?;
    let w = ctx.contributions(candidate)?;
    let m = terms.options.len();
    for (j, c) in ctx.constraints.iter().enumerate() {
        if !c.is_upper() {
            continue;
        }
        let base = terms.present[j] + w[j];
        let truth = |p: usize| terms.options[p][0][j];
        // largest decoy contribution; slots without decoys stay at truth
        let worst_decoy = |p: usize| {
            terms.options[p][1..]
                .iter()
                .map(|o| o[j])
                .max()
                .unwrap_or_else(|| truth(p))
        };
        let worst = match level {
            SoftLevel::AllHistories => (0..m)
                .map(|p| terms.options[p].iter().map(|o| o[j]).max().unwrap_or(0))
                .sum::<i64>(),
            SoftLevel::PrefixTruthSuffixDecoy => (0..=m)
                .map(|split| (0..split).map(truth).sum::<i64>() + (split..m).map(worst_decoy).sum::<i64>())
                .max()
                .unwrap_or(0),
            SoftLevel::AllTruth => (0..m).map(truth).sum(),
        };
        if !c.satisfied_by(base + worst) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Candidate lists for targeted sampling at one slot.
///
/// For each upper-bound constraint, the route keeps the locally valid items
/// whose contribution alone pushes that constraint past its bound under
/// every prior combination, i.e. above
/// `bound - fixed - min over combinations of the prior total`.
pub struct TargetedSampler<'p> {
    local: Vec<&'p Item>,
    routes: Vec<Vec<usize>>,
}

impl<'p> TargetedSampler<'p> {
    /// `local` holds the items that satisfy the slot constraints and may be
    /// used as candidates here.
    pub fn new(ctx: &DecoyContext<'_>, cell: Cell, local: Vec<&'p Item>) -> Result<Self, ConstraintError> {
        let terms = ctx.terms(cell)?;
        let mut routes = Vec::new();
        for (j, c) in ctx.constraints.iter().enumerate() {
            if !c.is_upper() {
                continue;
            }
            let min_prior: i64 = terms
                .options
                .iter()
                .map(|opts| opts.iter().map(|o| o[j]).min().unwrap_or(0))
                .sum();
            let threshold = c.bound - terms.fixed[j] - min_prior + 1;
            let mut route = Vec::new();
            for (i, item) in local.iter().enumerate() {
                if c.contribution(item)? >= threshold {
                    route.push(i);
                }
            }
            if !route.is_empty() {
                routes.push(route);
            }
        }
        Ok(Self { local, routes })
    }

    /// Number of upper-bound constraints with at least one target item.
    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    /// Draws an item not in `exclude`: from a random non-empty route when
    /// one exists, otherwise uniformly from all locally valid items.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, exclude: &HashSet<&str>) -> Option<&'p Item> {
        let free = |i: &&usize| !exclude.contains(self.local[**i].id.as_str());
        let mut order: Vec<usize> = (0..self.routes.len()).collect();
        order.shuffle(rng);
        for r in order {
            let open: Vec<&usize> = self.routes[r].iter().filter(free).collect();
            if let Some(&&i) = open.choose(rng) {
                return Some(self.local[i]);
            }
        }
        let open: Vec<&&Item> = self
            .local
            .iter()
            .filter(|it| !exclude.contains(it.id.as_str()))
            .collect();
        open.choose(rng).map(|it| **it)
    }
}
