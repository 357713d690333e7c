//! Episode runtime.
//!
//! An [`Episode`] resolves tool calls against an in-memory instance, keeps
//! the agent's placements and the remaining budgets, and can reject calls at
//! random to simulate an unreliable backend. Every result is in-band: bad
//! input produces an error result, never a panic.

mod tools;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::constraint::{eval_global_open_prefix, eval_slot, Comparator, ConstraintValue, SlotConstraint};
use crate::domain::{AttrValue, FieldKind};
use crate::generator::{AnswerKey, Instance};
use crate::grid::{Cell, GridAssignment};
use crate::seed::rng_from_seed;

pub use tools::{tool_catalog, Tool, ToolSpec};

pub const INJECTED_FAILURE: &str = "tool call failed: service unavailable";
pub const BUDGET_EXHAUSTED: &str = "budget exhausted";
pub const NOT_HIDDEN: &str = "cell is not hidden";
pub const EPISODE_FINISHED: &str = "episode already finished";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Value,
}

impl ToolCall {
    pub fn new(name: impl Into<String>, arguments: Value) -> Self {
        Self {
            name: name.into(),
            arguments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub ok: bool,
    pub payload: Value,
}

impl ToolResult {
    pub fn ok(payload: Value) -> Self {
        Self { ok: true, payload }
    }

    pub fn err(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            payload: Value::String(message.into()),
        }
    }

    pub fn is_injected_failure(&self) -> bool {
        !self.ok && self.payload.as_str() == Some(INJECTED_FAILURE)
    }
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub step: usize,
    pub name: String,
    pub arguments: Value,
    pub ok: bool,
    pub payload: Value,
}

pub struct Episode<'a> {
    instance: &'a Instance,
    grid: GridAssignment,
    query_budget: BTreeMap<Cell, u32>,
    global_budget: u32,
    done: bool,
    fail_rate: f64,
    rng: ChaCha8Rng,
    transcript: Vec<CallRecord>,
    injected: usize,
}

type Outcome = Result<Value, String>;

impl<'a> Episode<'a> {
    /// Fresh episode: only pre-filled cells occupied, full budgets.
    ///
    /// # Panics
    /// If `fail_rate` is outside `[0, 1]`.
    pub fn new(instance: &'a Instance, fail_rate: f64, seed: u64) -> Self {
        assert!((0.0..=1.0).contains(&fail_rate), "fail rate {fail_rate} outside [0, 1]");
        Self {
            instance,
            grid: instance.initial_grid(),
            query_budget: instance.hidden.iter().map(|s| (s.cell, s.query_budget)).collect(),
            global_budget: instance.global_check_budget,
            done: false,
            fail_rate,
            rng: rng_from_seed(seed),
            transcript: Vec::new(),
            injected: 0,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn steps(&self) -> usize {
        self.transcript.len()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn transcript(&self) -> &[CallRecord] {
        &self.transcript
    }

    pub fn injected_failures(&self) -> usize {
        self.injected
    }

    /// Current grid, pre-filled cells included.
    pub fn grid(&self) -> &GridAssignment {
        &self.grid
    }

    pub fn query_budget(&self, cell: Cell) -> Option<u32> {
        self.query_budget.get(&cell).copied()
    }

    pub fn global_check_budget(&self) -> u32 {
        self.global_budget
    }

    /// Executes one call and appends it to the transcript. Calls after `done`
    /// are refused without being recorded.
    pub fn dispatch(&mut self, call: &ToolCall) -> ToolResult {
        if self.done {
            return ToolResult::err(EPISODE_FINISHED);
        }
        // one draw per dispatch keeps the failure pattern independent of the calls made
        let injected = self.rng.gen::<f64>() < self.fail_rate;
        let result = if injected {
            self.injected += 1;
            ToolResult::err(INJECTED_FAILURE)
        } else {
            match self.execute(call) {
                Ok(v) => ToolResult::ok(v),
                Err(e) => ToolResult::err(e),
            }
        };
        self.transcript.push(CallRecord {
            step: self.transcript.len() + 1,
            name: call.name.clone(),
            arguments: call.arguments.clone(),
            ok: result.ok,
            payload: result.payload.clone(),
        });
        result
    }

    fn execute(&mut self, call: &ToolCall) -> Outcome {
        let domain = self.instance.domain;
        let tool = Tool::from_name(&call.name, domain).ok_or_else(|| format!("unknown tool `{}`", call.name))?;
        let args = Args(&call.arguments);
        match tool {
            Tool::SetSlot => self.set_slot(&args),
            Tool::GetCurrentGridState => Ok(self.grid_state()),
            Tool::GetSlotId => {
                let cell = self.cell(&args)?;
                Ok(self.grid.get(cell).map_or(Value::Null, |id| json!(id)))
            }
            Tool::GetHiddenSlotQueryBudget => {
                let cell = self.hidden_cell(&args)?;
                Ok(json!(self.query_budget[&cell]))
            }
            Tool::GetGlobalCheckBudget => Ok(json!(self.global_budget)),
            Tool::Done => {
                self.done = true;
                Ok(json!("done"))
            }
            Tool::QueryCandidates => self.query(&args),
            Tool::GetItemInfo => self.item_info(&args),
            Tool::GetItemAttributes => self.item_attributes(&args),
            Tool::CheckSlotConstraints => {
                let cell = self.hidden_cell(&args)?;
                let Some(id) = self.grid.get(cell) else {
                    return Ok(json!(false));
                };
                let slot = self.instance.hidden_slot(cell).expect("hidden cell");
                let item = &self.instance.items[id];
                eval_slot(item, &slot.constraints)
                    .map(|b| json!(b))
                    .map_err(|e| e.to_string())
            }
            Tool::CheckGlobalConstraints => {
                if self.global_budget == 0 {
                    return Err(BUDGET_EXHAUSTED.into());
                }
                self.global_budget -= 1;
                let inst = self.instance;
                eval_global_open_prefix(&self.grid, &inst.items, &inst.global_constraints)
                    .map(|b| json!(b))
                    .map_err(|e| e.to_string())
            }
        }
    }

    fn cell(&self, args: &Args) -> Result<Cell, String> {
        let row = args.index("row")?;
        let col = args.index("col")?;
        let cell = Cell::new(row, col);
        if !self.grid.contains(cell) {
            return Err(format!(
                "cell {cell} is outside the {}x{} grid",
                self.instance.rows, self.instance.cols
            ));
        }
        Ok(cell)
    }

    fn hidden_cell(&self, args: &Args) -> Result<Cell, String> {
        let cell = self.cell(args)?;
        if self.instance.is_hidden(cell) {
            Ok(cell)
        } else {
            Err(NOT_HIDDEN.into())
        }
    }

    fn set_slot(&mut self, args: &Args) -> Outcome {
        let cell = self.hidden_cell(args)?;
        match args.optional_str("id")? {
            None => {
                self.grid.clear(cell);
                Ok(json!({"row": cell.row, "col": cell.col, "id": null}))
            }
            Some(id) => {
                let slot = self.instance.hidden_slot(cell).expect("hidden cell");
                if !slot.candidates.iter().any(|c| c == id) {
                    return Err(format!("item `{id}` is not a candidate for cell {cell}"));
                }
                self.grid.set(cell, id);
                Ok(json!({"row": cell.row, "col": cell.col, "id": id}))
            }
        }
    }

    fn grid_state(&self) -> Value {
        let rows: Vec<Vec<Value>> = (0..self.instance.rows)
            .map(|r| {
                (0..self.instance.cols)
                    .map(|c| self.grid.get(Cell::new(r, c)).map_or(Value::Null, |id| json!(id)))
                    .collect()
            })
            .collect();
        json!({"rows": self.instance.rows, "cols": self.instance.cols, "grid": rows})
    }

    fn query(&mut self, args: &Args) -> Outcome {
        let cell = self.hidden_cell(args)?;
        let constraint = self.predicate(args)?;
        if self.query_budget[&cell] == 0 {
            return Err(BUDGET_EXHAUSTED.into());
        }
        *self.query_budget.get_mut(&cell).expect("hidden cell") -= 1;
        let slot = self.instance.hidden_slot(cell).expect("hidden cell");
        let mut matching = Vec::new();
        for id in &slot.candidates {
            let item = &self.instance.items[id];
            if eval_slot(item, std::slice::from_ref(&constraint)).map_err(|e| e.to_string())? {
                matching.push(id.clone());
            }
        }
        Ok(json!(matching))
    }

    /// Builds a slot-style predicate from `field`, `operator` and `value`,
    /// reading numeric strings as numbers on numeric fields.
    fn predicate(&self, args: &Args) -> Result<SlotConstraint, String> {
        let schema = self.instance.schema();
        let field = args.str("field")?;
        let kind = schema
            .field_kind(field)
            .ok_or_else(|| format!("unknown field `{field}`"))?;
        let op = args.str("operator")?;
        let comparator = match op {
            "=" => Comparator::Eq,
            other => Comparator::from_symbol(other).ok_or_else(|| format!("unknown operator `{other}`"))?,
        };
        let raw = args.get("value")?;
        let value = match (kind, raw) {
            (FieldKind::Numeric, Value::Number(n)) => {
                ConstraintValue::Int(n.as_i64().ok_or_else(|| format!("value {n} is not an integer"))?)
            }
            (FieldKind::Numeric, Value::String(s)) => ConstraintValue::Int(
                s.trim()
                    .parse()
                    .map_err(|_| format!("value `{s}` is not a number; `{field}` is numeric"))?,
            ),
            (FieldKind::Categorical, Value::String(s)) => ConstraintValue::Text(s.clone()),
            (FieldKind::Categorical, Value::Array(xs)) => ConstraintValue::Set(
                xs.iter()
                    .map(|x| {
                        x.as_str()
                            .map(str::to_string)
                            .ok_or("set values must be strings".to_string())
                    })
                    .collect::<Result<_, _>>()?,
            ),
            (_, other) => return Err(format!("value {other} does not fit field `{field}`")),
        };
        let c = SlotConstraint::new(field, comparator, value);
        c.check_schema(&schema).map_err(|e| e.to_string())?;
        Ok(c)
    }

    fn item_info(&self, args: &Args) -> Outcome {
        let id = args.str("id")?;
        if !self.instance.items.contains_key(id) {
            return Err(format!("unknown item id `{id}`"));
        }
        if !self.instance.prefilled.values().any(|p| p == id) {
            return Err(format!(
                "access denied: full item info is only available for items in pre-filled cells; `{id}` is not one"
            ));
        }
        let item = &self.instance.items[id];
        Ok(json!({"id": item.id, "name": item.name, "attributes": item.attributes}))
    }

    fn item_attributes(&mut self, args: &Args) -> Outcome {
        let ids = args.str_list("ids")?;
        let field = args.str("field")?;
        if self.instance.schema().field_kind(field).is_none() {
            return Err(format!("unknown field `{field}`"));
        }
        for id in &ids {
            if !self.instance.items.contains_key(*id) {
                return Err(format!("unknown item id `{id}`"));
            }
        }
        let wanted: HashSet<&str> = ids.iter().copied().collect();
        let affected: BTreeSet<Cell> = self
            .instance
            .hidden
            .iter()
            .filter(|s| s.candidates.iter().any(|c| wanted.contains(c.as_str())))
            .map(|s| s.cell)
            .collect();
        if affected.iter().any(|c| self.query_budget[c] == 0) {
            return Err(BUDGET_EXHAUSTED.into());
        }
        for c in &affected {
            *self.query_budget.get_mut(c).expect("hidden cell") -= 1;
        }
        let mut out = Map::new();
        for id in ids {
            let v = self.instance.items[id]
                .attr(field)
                .cloned()
                .map_or(Value::Null, attr_json);
            out.insert(id.to_string(), v);
        }
        Ok(Value::Object(out))
    }
}

fn attr_json(v: AttrValue) -> Value {
    match v {
        AttrValue::Int(i) => json!(i),
        AttrValue::Cat(s) => json!(s),
    }
}

/// Typed access to a call's argument object.
struct Args<'v>(&'v Value);

impl<'v> Args<'v> {
    fn get(&self, name: &str) -> Result<&'v Value, String> {
        match self.0.get(name) {
            Some(v) if !v.is_null() => Ok(v),
            _ => Err(format!("missing argument `{name}`")),
        }
    }

    fn index(&self, name: &str) -> Result<usize, String> {
        let v = self.get(name)?;
        let parsed = match v {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => s.trim().parse().ok(),
            _ => None,
        };
        parsed
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| format!("argument `{name}` must be a non-negative integer"))
    }

    fn str(&self, name: &str) -> Result<&'v str, String> {
        self.get(name)?
            .as_str()
            .ok_or_else(|| format!("argument `{name}` must be a string"))
    }

    fn optional_str(&self, name: &str) -> Result<Option<&'v str>, String> {
        match self.0.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) if s.is_empty() || s == "None" => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(format!("argument `{name}` must be a string or null")),
        }
    }

    fn str_list(&self, name: &str) -> Result<Vec<&'v str>, String> {
        let v = self.get(name)?;
        let err = || format!("argument `{name}` must be a list of strings");
        v.as_array()
            .ok_or_else(err)?
            .iter()
            .map(|x| x.as_str().ok_or_else(err))
            .collect()
    }
}

/// 1 iff every hidden slot holds its answer-key item.
pub fn score(grid: &GridAssignment, key: &AnswerKey) -> u8 {
    u8::from(key.truth.iter().all(|(c, id)| grid.get(*c) == Some(id.as_str())))
}

/// Fraction of hidden slots holding their answer-key item.
pub fn partial_credit(grid: &GridAssignment, key: &AnswerKey) -> f64 {
    if key.truth.is_empty() {
        return 1.0;
    }
    let hits = key
        .truth
        .iter()
        .filter(|(c, id)| grid.get(**c) == Some(id.as_str()))
        .count();
    hits as f64 / key.truth.len() as f64
}

/// Replays `calls` on a fresh episode.
pub fn replay(instance: &Instance, fail_rate: f64, seed: u64, calls: &[ToolCall]) -> Vec<ToolResult> {
    let mut ep = Episode::new(instance, fail_rate, seed);
    calls.iter().map(|c| ep.dispatch(c)).collect()
}
