use serde::Serialize;
use serde_json::{json, Value};

use crate::domain::Domain;

/// The eleven tools of an episode: six shared, five named after the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tool {
    SetSlot,
    GetCurrentGridState,
    GetSlotId,
    GetHiddenSlotQueryBudget,
    GetGlobalCheckBudget,
    Done,
    QueryCandidates,
    GetItemInfo,
    GetItemAttributes,
    CheckSlotConstraints,
    CheckGlobalConstraints,
}

impl Tool {
    pub const ALL: [Tool; 11] = [
        Tool::SetSlot,
        Tool::GetCurrentGridState,
        Tool::GetSlotId,
        Tool::GetHiddenSlotQueryBudget,
        Tool::GetGlobalCheckBudget,
        Tool::Done,
        Tool::QueryCandidates,
        Tool::GetItemInfo,
        Tool::GetItemAttributes,
        Tool::CheckSlotConstraints,
        Tool::CheckGlobalConstraints,
    ];

    pub fn name(self, domain: Domain) -> String {
        let d = domain.name();
        match self {
            Tool::SetSlot => "set_slot".into(),
            Tool::GetCurrentGridState => "get_current_grid_state".into(),
            Tool::GetSlotId => "get_slot_id".into(),
            Tool::GetHiddenSlotQueryBudget => "get_hidden_slot_query_budget".into(),
            Tool::GetGlobalCheckBudget => "get_global_check_budget".into(),
            Tool::Done => "done".into(),
            Tool::QueryCandidates => format!("query_{d}_candidate_from_attribute"),
            Tool::GetItemInfo => format!("get_{d}_item_info"),
            Tool::GetItemAttributes => format!("get_{d}_item_attributes"),
            Tool::CheckSlotConstraints => format!("check_{d}_slot_constraints"),
            Tool::CheckGlobalConstraints => format!("check_{d}_global_constraints"),
        }
    }

    pub fn from_name(name: &str, domain: Domain) -> Option<Tool> {
        Tool::ALL.into_iter().find(|t| t.name(domain) == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            Tool::SetSlot => "Place an item id into the grid at (row, col), or clear the slot if id is null.",
            Tool::GetCurrentGridState => {
                "Return the full current state of the grid, including all filled and empty slots."
            }
            Tool::GetSlotId => "Query the item id currently occupying a specific grid cell.",
            Tool::GetHiddenSlotQueryBudget => "Return the remaining attribute query budget for a given hidden slot.",
            Tool::GetGlobalCheckBudget => "Return the remaining budget for global constraint checks.",
            Tool::Done => "Signal that the agent has completed the task.",
            Tool::QueryCandidates => {
                "Filter the candidate list for a given slot by an attribute condition (field operator value), \
                 narrowing the search space."
            }
            Tool::GetItemInfo => "Retrieve the full attribute profile of a single item.",
            Tool::GetItemAttributes => "Batch-query a specific attribute field for a list of item ids.",
            Tool::CheckSlotConstraints => {
                "Check whether the item currently placed at (row, col) satisfies the local slot constraints \
                 for that position."
            }
            Tool::CheckGlobalConstraints => "Check whether the entire current grid satisfies all global constraints.",
        }
    }

    fn parameters(self) -> Value {
        let cell = json!({
            "row": {"type": "integer", "description": "Zero-based row index."},
            "col": {"type": "integer", "description": "Zero-based column index."}
        });
        let object =
            |props: Value, required: &[&str]| json!({"type": "object", "properties": props, "required": required});
        let with = |extra: Value| {
            let mut props = cell.clone();
            props
                .as_object_mut()
                .expect("object literal")
                .extend(extra.as_object().expect("object literal").clone());
            props
        };
        match self {
            Tool::SetSlot => object(
                with(json!({"id": {"type": ["string", "null"], "description": "Item id, or null to clear."}})),
                &["row", "col"],
            ),
            Tool::GetSlotId | Tool::GetHiddenSlotQueryBudget | Tool::CheckSlotConstraints => {
                object(cell.clone(), &["row", "col"])
            }
            Tool::GetCurrentGridState | Tool::GetGlobalCheckBudget | Tool::Done | Tool::CheckGlobalConstraints => {
                object(json!({}), &[])
            }
            Tool::QueryCandidates => object(
                with(json!({
                    "field": {"type": "string", "description": "Attribute name."},
                    "operator": {"type": "string", "enum": ["<=", ">=", "==", "!=", "in"]},
                    "value": {
                        "description": "Number, category name, or list of category names for `in`.",
                        "anyOf": [
                            {"type": "integer"},
                            {"type": "string"},
                            {"type": "array", "items": {"type": "string"}}
                        ]
                    }
                })),
                &["row", "col", "field", "operator", "value"],
            ),
            Tool::GetItemInfo => object(json!({"id": {"type": "string"}}), &["id"]),
            Tool::GetItemAttributes => object(
                json!({
                    "ids": {"type": "array", "items": {"type": "string"}},
                    "field": {"type": "string", "description": "Attribute name."}
                }),
                &["ids", "field"],
            ),
        }
    }
}

/// A tool declaration in the function-calling shape chat endpoints accept.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

impl ToolSpec {
    /// `{"type": "function", "function": {...}}`
    pub fn to_function_json(&self) -> Value {
        json!({"type": "function", "function": self})
    }
}

pub fn tool_catalog(domain: Domain) -> Vec<ToolSpec> {
    Tool::ALL
        .into_iter()
        .map(|t| ToolSpec {
            name: t.name(domain),
            description: t.description().to_string(),
            parameters: t.parameters(),
        })
        .collect()
}
