use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::domain::Domain;
use crate::generator::Instance;

pub const PROMPT_VERSION: &str = "grid-task-v1";

const TEMPLATE: &str = "\
You are an agent solving a {domain} task: {scenario}

The grid has {rows} rows and {cols} columns (rows and columns are zero-based). \
Most cells are already filled. {h} cells are hidden and must be filled by you, \
each with one item from its candidate list.

Item attributes: {fields}.

Hidden cells, their local constraints and candidates:
{slots}
Global constraints over the whole grid once every hidden cell is filled:
{globals}
Each hidden cell has an attribute query budget shared by the candidate \
filter tool and batch attribute reads; global constraint checks have a budget of \
{global_budget}. Full item information is only available for items in pre-filled cells. \
Tools may occasionally fail; a failed call can be retried.

Use the tools to fill every hidden cell so that all local and global constraints hold, \
then call done.";

fn scenario(domain: Domain) -> &'static str {
    match domain {
        Domain::Course => {
            "an academic course selection task, where you fill a curriculum grid subject to credit limits \
             and prerequisite-style constraints."
        }
        Domain::Shopping => {
            "a product selection task, where items are chosen from a catalog to satisfy budget and category \
             constraints."
        }
        Domain::Travel => {
            "an itinerary planning task, where you select destinations or activities subject to time and cost \
             constraints."
        }
        Domain::Workforce => {
            "a staff assignment task, where employees are allocated to roles under skill and workload \
             constraints."
        }
        Domain::Meal => {
            "a meal planning task, where dishes are arranged into a weekly plan satisfying nutritional and \
             dietary constraints."
        }
        Domain::PcBuild => {
            "a computer assembly task, where hardware components are selected to meet compatibility and budget \
             constraints."
        }
    }
}

/// The system prompt for one instance. Only public instance data is used.
pub fn render_system_prompt(instance: &Instance) -> String {
    let schema = instance.schema();
    let mut fields = Vec::new();
    for f in schema.numeric_fields {
        fields.push(format!("{} (integer {}..{})", f.name, f.min, f.max));
    }
    for f in schema.categorical_fields {
        fields.push(format!("{} (one of {})", f.name, f.categories.join(", ")));
    }
    let mut slots = String::new();
    for s in &instance.hidden {
        let cons: Vec<String> = s.constraints.iter().map(ToString::to_string).collect();
        let _ = writeln!(
            slots,
            "- cell ({}, {}): {}; query budget {}; candidates: {}",
            s.cell.row,
            s.cell.col,
            cons.join(" and "),
            s.query_budget,
            s.candidates.join(", ")
        );
    }
    let mut globals = String::new();
    for g in &instance.global_constraints {
        let _ = writeln!(globals, "- {g}");
    }
    TEMPLATE
        .replace("{domain}", instance.domain.name())
        .replace("{scenario}", scenario(instance.domain))
        .replace("{rows}", &instance.rows.to_string())
        .replace("{cols}", &instance.cols.to_string())
        .replace("{h}", &instance.hidden.len().to_string())
        .replace("{fields}", &fields.join("; "))
        .replace("{slots}", &slots)
        .replace("{globals}", &globals)
        .replace("{global_budget}", &instance.global_check_budget.to_string())
}

/// Short stable digest of the template, recorded with every run.
pub fn prompt_hash() -> String {
    let digest = Sha256::new()
        .chain_update(PROMPT_VERSION.as_bytes())
        .chain_update(TEMPLATE.as_bytes())
        .finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
