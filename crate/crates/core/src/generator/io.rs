//! Task and answer-key files.
//!
//! Both are JSON with sorted keys and a trailing newline, so the same
//! instance always serialises to the same bytes. The key lives next to the
//! task as `<stem>.key.json` and is never shown to agents.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{GlobalConstraint, SlotConstraint};
use crate::domain::{schema, AttrValue, Domain, Item, ItemPool};
use crate::grid::Cell;

use super::{AnswerKey, HiddenSlot, Instance};

#[derive(Debug, Error)]
pub enum InstanceFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: at `{field}`: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemRecord {
    name: String,
    attributes: BTreeMap<String, AttrValue>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Placement {
    row: usize,
    col: usize,
    item_id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlotRecord {
    row: usize,
    col: usize,
    constraints: Vec<SlotConstraint>,
    candidates: Vec<String>,
    query_budget: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    domain: Domain,
    rows: usize,
    cols: usize,
    seed: u64,
    h: usize,
    b: usize,
    decoy_budget: usize,
    k: usize,
    global_constraints: Vec<GlobalConstraint>,
    global_check_budget: u32,
    prefilled: Vec<Placement>,
    hidden_slots: Vec<SlotRecord>,
    items: BTreeMap<String, ItemRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Allocation {
    row: usize,
    col: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFile {
    truth: Vec<Placement>,
    decoys: BTreeMap<String, Vec<String>>,
    filters: BTreeMap<String, Vec<String>>,
    allocations: Vec<Allocation>,
}

/// `dir/name.json` → `dir/name.key.json`.
pub fn key_path_for(task: &Path) -> PathBuf {
    let stem = task
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    task.with_file_name(format!("{stem}.key.json"))
}

/// Writes the task file to `path` and the answer key beside it.
pub fn write_instance(instance: &Instance, key: &AnswerKey, path: &Path) -> Result<(), InstanceFileError> {
    write_json(path, &task_file(instance))?;
    write_json(&key_path_for(path), &key_file(key))
}

/// Reads a task file and its answer key.
pub fn read_instance(path: &Path) -> Result<(Instance, AnswerKey), InstanceFileError> {
    let instance = read_task(path)?;
    let key = read_key(&key_path_for(path))?;
    Ok((instance, key))
}

/// Reads only the public task file.
pub fn read_task(path: &Path) -> Result<Instance, InstanceFileError> {
    let file: TaskFile = read_json(path)?;
    instance_from(file).map_err(|message| InstanceFileError::Invalid {
        path: path.to_path_buf(),
        message,
    })
}

pub fn read_key(path: &Path) -> Result<AnswerKey, InstanceFileError> {
    let file: KeyFile = read_json(path)?;
    key_from(file).map_err(|message| InstanceFileError::Invalid {
        path: path.to_path_buf(),
        message,
    })
}

/// Writes a pool as `{id: {name, attributes}}`.
pub fn write_pool(pool: &ItemPool, path: &Path) -> Result<(), InstanceFileError> {
    let records: BTreeMap<&str, ItemRecord> = pool.items().iter().map(|it| (it.id.as_str(), record(it))).collect();
    write_json(path, &records)
}

pub fn read_pool(domain: Domain, path: &Path) -> Result<ItemPool, InstanceFileError> {
    let records: BTreeMap<String, ItemRecord> = read_json(path)?;
    let mut items: Vec<Item> = records.into_iter().map(|(id, r)| item(id, r)).collect();
    // restore running-number order so a reloaded pool samples like the original
    items.sort_by(|a, b| (a.id.len(), &a.id).cmp(&(b.id.len(), &b.id)));
    ItemPool::new(domain, items).map_err(|e| InstanceFileError::Invalid {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Serialises through `serde_json::Value`, whose maps are ordered, so field
/// order in the output never depends on struct layout.
pub(crate) fn to_sorted_json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("file types always serialise");
    let mut s = serde_json::to_string_pretty(&v).expect("values always serialise");
    s.push('\n');
    s
}

/// Public task file rendered as sorted JSON.
pub fn task_json(instance: &Instance) -> String {
    to_sorted_json(&task_file(instance))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), InstanceFileError> {
    let io = |source| InstanceFileError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, to_sorted_json(value)).map_err(io)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, InstanceFileError> {
    let text = fs::read_to_string(path).map_err(|source| InstanceFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| InstanceFileError::Schema {
        path: path.to_path_buf(),
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

fn record(item: &Item) -> ItemRecord {
    ItemRecord {
        name: item.name.clone(),
        attributes: item.attributes.clone(),
    }
}

fn item(id: String, r: ItemRecord) -> Item {
    Item {
        id,
        name: r.name,
        attributes: r.attributes,
    }
}

fn task_file(instance: &Instance) -> TaskFile {
    TaskFile {
        domain: instance.domain,
        rows: instance.rows,
        cols: instance.cols,
        seed: instance.seed,
        h: instance.h,
        b: instance.b,
        decoy_budget: instance.decoy_budget,
        k: instance.k,
        global_constraints: instance.global_constraints.clone(),
        global_check_budget: instance.global_check_budget,
        prefilled: instance
            .prefilled
            .iter()
            .map(|(c, id)| Placement {
                row: c.row,
                col: c.col,
                item_id: id.clone(),
            })
            .collect(),
        hidden_slots: instance
            .hidden
            .iter()
            .map(|s| SlotRecord {
                row: s.cell.row,
                col: s.cell.col,
                constraints: s.constraints.clone(),
                candidates: s.candidates.clone(),
                query_budget: s.query_budget,
            })
            .collect(),
        items: instance.items.iter().map(|(id, it)| (id.clone(), record(it))).collect(),
    }
}

fn instance_from(f: TaskFile) -> Result<Instance, String> {
    let in_grid = |row: usize, col: usize| -> Result<Cell, String> {
        if row < f.rows && col < f.cols {
            Ok(Cell::new(row, col))
        } else {
            Err(format!("cell {row},{col} outside a {}x{} grid", f.rows, f.cols))
        }
    };
    let schema = schema(f.domain);
    let cell_count = f.rows * f.cols;
    for g in &f.global_constraints {
        g.check_schema(&schema, cell_count).map_err(|e| e.to_string())?;
    }
    let mut prefilled = BTreeMap::new();
    for p in &f.prefilled {
        prefilled.insert(in_grid(p.row, p.col)?, p.item_id.clone());
    }
    let mut hidden = Vec::with_capacity(f.hidden_slots.len());
    for s in &f.hidden_slots {
        for c in &s.constraints {
            c.check_schema(&schema).map_err(|e| e.to_string())?;
        }
        hidden.push(HiddenSlot {
            cell: in_grid(s.row, s.col)?,
            constraints: s.constraints.clone(),
            candidates: s.candidates.clone(),
            query_budget: s.query_budget,
        });
    }
    let mut items = BTreeMap::new();
    for (id, r) in f.items {
        let it = item(id.clone(), r);
        schema.validate_item(&it).map_err(|e| e.to_string())?;
        items.insert(id, it);
    }
    let referenced = prefilled
        .values()
        .chain(hidden.iter().flat_map(|s| s.candidates.iter()));
    for id in referenced {
        if !items.contains_key(id) {
            return Err(format!("item {id} is referenced but not listed"));
        }
    }
    Ok(Instance {
        domain: f.domain,
        rows: f.rows,
        cols: f.cols,
        seed: f.seed,
        h: f.h,
        b: f.b,
        decoy_budget: f.decoy_budget,
        k: f.k,
        global_constraints: f.global_constraints,
        global_check_budget: f.global_check_budget,
        prefilled,
        hidden,
        items,
    })
}

fn key_file(key: &AnswerKey) -> KeyFile {
    let by_slot = |m: &BTreeMap<Cell, Vec<String>>| m.iter().map(|(c, ids)| (c.to_string(), ids.clone())).collect();
    KeyFile {
        truth: key
            .truth
            .iter()
            .map(|(c, id)| Placement {
                row: c.row,
                col: c.col,
                item_id: id.clone(),
            })
            .collect(),
        decoys: by_slot(&key.decoys),
        filters: by_slot(&key.filters),
        allocations: key
            .allocations
            .iter()
            .map(|(c, n)| Allocation {
                row: c.row,
                col: c.col,
                count: *n,
            })
            .collect(),
    }
}

fn key_from(f: KeyFile) -> Result<AnswerKey, String> {
    let by_slot = |m: BTreeMap<String, Vec<String>>| -> Result<BTreeMap<Cell, Vec<String>>, String> {
        m.into_iter().map(|(k, v)| Ok((k.parse::<Cell>()?, v))).collect()
    };
    Ok(AnswerKey {
        truth: f
            .truth
            .into_iter()
            .map(|p| (Cell::new(p.row, p.col), p.item_id))
            .collect(),
        decoys: by_slot(f.decoys)?,
        filters: by_slot(f.filters)?,
        allocations: f
            .allocations
            .into_iter()
            .map(|a| (Cell::new(a.row, a.col), a.count))
            .collect(),
    })
}
