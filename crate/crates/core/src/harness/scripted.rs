//! Scripted reference agents.
//!
//! Both agents issue one call per turn and read its result from the end of
//! the transcript on the next turn. They see only the public instance. Both
//! start with two batch attribute reads per hidden slot (one per constrained
//! field) and filter candidates locally. Failed calls are taken at face
//! value and never retried: a failed read leaves that field unchecked, a
//! failed placement is assumed to have happened, and a failed global check
//! counts as a rejection.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::constraint::SlotConstraint;
use crate::domain::AttrValue;
use crate::env::{Tool, ToolCall, BUDGET_EXHAUSTED};
use crate::generator::Instance;
use crate::grid::Cell;
use crate::seed::rng_from_seed;

use super::{Agent, AgentError, AgentTurn, AgentView};

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Read { slot: usize, field: usize },
    ProbeSet { slot: usize },
    ProbeCheck { slot: usize, id: String },
    Place { slot: usize, id: String },
    CheckGlobal,
    Done,
}

#[derive(Debug)]
struct SlotView {
    cell: Cell,
    constraints: Vec<SlotConstraint>,
    candidates: Vec<String>,
    values: BTreeMap<String, BTreeMap<String, AttrValue>>,
    fallback: bool,
    valid: Vec<String>,
}

impl SlotView {
    fn locally_valid(&self, id: &str) -> bool {
        self.constraints.iter().all(|c| {
            match self.values.get(&c.field).and_then(|m| m.get(id)) {
                Some(v) => c.holds(v).unwrap_or(false),
                // never learned: cannot rule it out
                None => true,
            }
        })
    }
}

/// Per-slot candidate knowledge gathered by the opening reads.
#[derive(Debug)]
struct Reader {
    slots: Vec<SlotView>,
}

impl Reader {
    fn new(instance: &Instance) -> Self {
        let slots = instance
            .hidden
            .iter()
            .map(|s| SlotView {
                cell: s.cell,
                constraints: s.constraints.clone(),
                candidates: s.candidates.clone(),
                values: BTreeMap::new(),
                fallback: false,
                valid: Vec::new(),
            })
            .collect();
        Self { slots }
    }

    fn reads(&self) -> VecDeque<Action> {
        let mut q = VecDeque::new();
        for (slot, s) in self.slots.iter().enumerate() {
            for field in 0..s.constraints.len() {
                q.push_back(Action::Read { slot, field });
            }
        }
        q
    }

    fn read_call(&self, instance: &Instance, slot: usize, field: usize) -> ToolCall {
        let s = &self.slots[slot];
        ToolCall::new(
            Tool::GetItemAttributes.name(instance.domain),
            json!({"ids": s.candidates, "field": s.constraints[field].field}),
        )
    }

    fn absorb_read(&mut self, slot: usize, field: usize, ok: bool, payload: &Value) {
        let s = &mut self.slots[slot];
        if ok {
            let values: BTreeMap<String, AttrValue> = serde_json::from_value(payload.clone()).unwrap_or_default();
            s.values.insert(s.constraints[field].field.clone(), values);
        } else if payload.as_str() == Some(BUDGET_EXHAUSTED) {
            s.fallback = true;
        }
    }

    fn finish_reads(&mut self) {
        for s in &mut self.slots {
            if !s.fallback {
                s.valid = s.candidates.iter().filter(|id| s.locally_valid(id)).cloned().collect();
            }
        }
    }
}

fn place_call(instance: &Instance, cell: Cell, id: &str) -> ToolCall {
    ToolCall::new(
        Tool::SetSlot.name(instance.domain),
        json!({"row": cell.row, "col": cell.col, "id": id}),
    )
}

fn done_call(instance: &Instance) -> ToolCall {
    ToolCall::new(Tool::Done.name(instance.domain), json!({}))
}

/// One-call-per-turn driver shared by both agents.
fn last_result<'v>(view: &'v AgentView<'_>) -> (bool, &'v Value) {
    match view.transcript.last() {
        Some(r) => (r.ok, &r.payload),
        None => (false, &Value::Null),
    }
}

#[derive(Debug, PartialEq, Eq)]
enum Phase {
    Reading,
    Probing,
    Searching,
    Finished,
}

/// Reads, filters locally, then walks the locally valid combinations
/// slot by slot, checking the global constraints after each full placement.
#[derive(Debug)]
pub struct OracleAgent {
    reader: Reader,
    queue: VecDeque<Action>,
    pending: Option<Action>,
    phase: Phase,
    digits: Vec<usize>,
    placed: Vec<Option<String>>,
}

impl OracleAgent {
    pub fn new(instance: &Instance) -> Self {
        let reader = Reader::new(instance);
        let queue = reader.reads();
        let n = reader.slots.len();
        Self {
            reader,
            queue,
            pending: None,
            phase: Phase::Reading,
            digits: vec![0; n],
            placed: vec![None; n],
        }
    }

    fn absorb(&mut self, action: Action, ok: bool, payload: &Value) {
        match action {
            Action::Read { slot, field } => self.reader.absorb_read(slot, field, ok, payload),
            Action::ProbeCheck { slot, id } => {
                if ok && payload == &json!(true) {
                    self.reader.slots[slot].valid.push(id);
                }
            }
            Action::CheckGlobal => {
                let solved = ok && payload == &json!(true);
                let exhausted = !ok && payload.as_str() == Some(BUDGET_EXHAUSTED);
                if solved || exhausted {
                    self.queue.push_back(Action::Done);
                } else if self.advance() {
                    self.plan_placements();
                } else {
                    self.queue.push_back(Action::Done);
                }
            }
            Action::ProbeSet { .. } | Action::Place { .. } | Action::Done => {}
        }
    }

    /// Moves to the next combination; false once every one was tried.
    fn advance(&mut self) -> bool {
        for i in (0..self.digits.len()).rev() {
            self.digits[i] += 1;
            if self.digits[i] < self.reader.slots[i].valid.len() {
                return true;
            }
            self.digits[i] = 0;
        }
        false
    }

    fn plan_placements(&mut self) {
        for (slot, s) in self.reader.slots.iter().enumerate() {
            let id = &s.valid[self.digits[slot]];
            if self.placed[slot].as_ref() != Some(id) {
                self.queue.push_back(Action::Place { slot, id: id.clone() });
            }
        }
        self.queue.push_back(Action::CheckGlobal);
    }

    /// Called when the queue runs dry; decides what comes next.
    fn next_phase(&mut self) {
        match self.phase {
            Phase::Reading => {
                self.reader.finish_reads();
                self.phase = Phase::Probing;
                for (slot, s) in self.reader.slots.iter().enumerate() {
                    if s.fallback {
                        for id in &s.candidates {
                            self.queue.push_back(Action::ProbeSet { slot });
                            self.queue.push_back(Action::ProbeCheck { slot, id: id.clone() });
                        }
                    }
                }
                if self.queue.is_empty() {
                    self.next_phase();
                }
            }
            Phase::Probing => {
                for s in &mut self.reader.slots {
                    if s.valid.is_empty() {
                        s.valid = s.candidates.clone();
                    }
                }
                self.phase = Phase::Searching;
                self.plan_placements();
            }
            Phase::Searching => {
                self.phase = Phase::Finished;
            }
            Phase::Finished => {}
        }
    }

    fn call_for(&mut self, instance: &Instance, action: &Action) -> ToolCall {
        match action {
            Action::Read { slot, field } => self.reader.read_call(instance, *slot, *field),
            Action::ProbeSet { slot } => {
                // the id travels with the following check
                let id = match self.queue.front() {
                    Some(Action::ProbeCheck { id, .. }) => id.clone(),
                    _ => unreachable!("probe placement is always followed by its check"),
                };
                self.placed[*slot] = Some(id.clone());
                place_call(instance, self.reader.slots[*slot].cell, &id)
            }
            Action::ProbeCheck { slot, .. } => {
                let cell = self.reader.slots[*slot].cell;
                ToolCall::new(
                    Tool::CheckSlotConstraints.name(instance.domain),
                    json!({"row": cell.row, "col": cell.col}),
                )
            }
            Action::Place { slot, id } => {
                self.placed[*slot] = Some(id.clone());
                place_call(instance, self.reader.slots[*slot].cell, id)
            }
            Action::CheckGlobal => ToolCall::new(Tool::CheckGlobalConstraints.name(instance.domain), json!({})),
            Action::Done => done_call(instance),
        }
    }
}

impl Agent for OracleAgent {
    fn turn(&mut self, view: &AgentView<'_>) -> Result<AgentTurn, AgentError> {
        if let Some(action) = self.pending.take() {
            let (ok, payload) = last_result(view);
            let payload = payload.clone();
            if action == Action::Done {
                self.phase = Phase::Finished;
                return Ok(AgentTurn::default());
            }
            self.absorb(action, ok, &payload);
        }
        while self.queue.is_empty() && self.phase != Phase::Finished {
            self.next_phase();
        }
        let Some(action) = self.queue.pop_front() else {
            return Ok(AgentTurn::default());
        };
        let call = self.call_for(view.instance, &action);
        self.pending = Some(action);
        Ok(AgentTurn::single(call))
    }
}

/// Reads and filters like the oracle, then places a uniformly random
/// locally valid candidate in every slot and stops.
#[derive(Debug)]
pub struct RandomValidAgent {
    reader: Reader,
    queue: VecDeque<Action>,
    pending: Option<Action>,
    planned: bool,
    rng: ChaCha8Rng,
}

impl RandomValidAgent {
    pub fn new(instance: &Instance, seed: u64) -> Self {
        let reader = Reader::new(instance);
        let queue = reader.reads();
        Self {
            reader,
            queue,
            pending: None,
            planned: false,
            rng: rng_from_seed(seed),
        }
    }
}

impl Agent for RandomValidAgent {
    fn turn(&mut self, view: &AgentView<'_>) -> Result<AgentTurn, AgentError> {
        if let Some(action) = self.pending.take() {
            if action == Action::Done {
                return Ok(AgentTurn::default());
            }
            let (ok, payload) = last_result(view);
            if let Action::Read { slot, field } = action {
                self.reader.absorb_read(slot, field, ok, &payload.clone());
            }
        }
        if self.queue.is_empty() && !self.planned {
            self.planned = true;
            self.reader.finish_reads();
            for (slot, s) in self.reader.slots.iter().enumerate() {
                let pool = if s.valid.is_empty() { &s.candidates } else { &s.valid };
                let id = pool
                    .choose(&mut self.rng)
                    .expect("candidate lists are non-empty")
                    .clone();
                self.queue.push_back(Action::Place { slot, id });
            }
            self.queue.push_back(Action::Done);
        }
        let Some(action) = self.queue.pop_front() else {
            return Ok(AgentTurn::default());
        };
        let instance = view.instance;
        let call = match &action {
            Action::Read { slot, field } => self.reader.read_call(instance, *slot, *field),
            Action::Place { slot, id } => place_call(instance, self.reader.slots[*slot].cell, id),
            Action::Done => done_call(instance),
            other => unreachable!("random agent never plans {other:?}"),
        };
        self.pending = Some(action);
        Ok(AgentTurn::single(call))
    }
}
