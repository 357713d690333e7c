//! Constraint grammar and direct evaluation.
//!
//! Slot constraints are attribute predicates on a single item. Global
//! constraints bound an aggregate over the whole grid. Bounds are inclusive
//! for every kind. Evaluation is plain checking; nothing here searches.

mod text;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::domain::{AttrValue, DomainSchema, FieldKind, Item, ItemLookup};
use crate::grid::{Cell, GridAssignment};

pub use text::{Constraint, ParseError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("unknown field `{field}`")]
    UnknownField { field: String },
    #[error("field `{field}`: {detail}")]
    TypeMismatch { field: String, detail: String },
    #[error("cell {0} is unfilled")]
    Unfilled(Cell),
    #[error("unknown item id `{0}`")]
    UnknownItem(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparator {
    Le,
    Ge,
    Eq,
    Ne,
    In,
}

impl Comparator {
    pub const ALL: [Comparator; 5] = [
        Comparator::Le,
        Comparator::Ge,
        Comparator::Eq,
        Comparator::Ne,
        Comparator::In,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Eq => "==",
            Comparator::Ne => "!=",
            Comparator::In => "in",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.symbol() == s)
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConstraintValue {
    Int(i64),
    Text(String),
    Set(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlotConstraint {
    pub field: String,
    pub comparator: Comparator,
    pub value: ConstraintValue,
}

impl SlotConstraint {
    pub fn new(field: impl Into<String>, comparator: Comparator, value: ConstraintValue) -> Self {
        Self {
            field: field.into(),
            comparator,
            value,
        }
    }

    /// Evaluates the predicate on one attribute value.
    pub fn holds(&self, attr: &AttrValue) -> Result<bool, ConstraintError> {
        use Comparator::*;
        let mismatch = |detail: &str| ConstraintError::TypeMismatch {
            field: self.field.clone(),
            detail: detail.to_string(),
        };
        match (self.comparator, &self.value, attr) {
            (Le, ConstraintValue::Int(b), AttrValue::Int(v)) => Ok(v <= b),
            (Ge, ConstraintValue::Int(b), AttrValue::Int(v)) => Ok(v >= b),
            (Le | Ge, _, _) => Err(mismatch("ordering comparators need a numeric field and value")),
            (Eq, ConstraintValue::Int(b), AttrValue::Int(v)) => Ok(v == b),
            (Ne, ConstraintValue::Int(b), AttrValue::Int(v)) => Ok(v != b),
            (Eq, ConstraintValue::Text(b), AttrValue::Cat(v)) => Ok(v == b),
            (Ne, ConstraintValue::Text(b), AttrValue::Cat(v)) => Ok(v != b),
            (Eq | Ne, _, _) => Err(mismatch("value type does not match the field type")),
            (In, ConstraintValue::Set(set), AttrValue::Cat(v)) => Ok(set.iter().any(|s| s == v)),
            (In, _, _) => Err(mismatch("`in` needs a categorical field and a set value")),
        }
    }

    /// Checks field existence and operand types against a schema.
    pub fn check_schema(&self, schema: &DomainSchema) -> Result<(), ConstraintError> {
        let kind = schema
            .field_kind(&self.field)
            .ok_or_else(|| ConstraintError::UnknownField {
                field: self.field.clone(),
            })?;
        let probe = match kind {
            FieldKind::Numeric => AttrValue::Int(0),
            FieldKind::Categorical => AttrValue::Cat(String::new()),
        };
        self.holds(&probe).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GlobalKind {
    SumUpper,
    SumLower,
    CategoryCountUpper,
}

impl GlobalKind {
    /// Upper-bound kinds can only get worse as more cells are filled.
    pub fn is_upper(self) -> bool {
        matches!(self, GlobalKind::SumUpper | GlobalKind::CategoryCountUpper)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GlobalConstraint {
    pub kind: GlobalKind,
    pub field: String,
    /// Only set for `CategoryCountUpper`.
    pub category: Option<String>,
    pub bound: i64,
}

impl GlobalConstraint {
    pub fn sum_upper(field: impl Into<String>, bound: i64) -> Self {
        Self {
            kind: GlobalKind::SumUpper,
            field: field.into(),
            category: None,
            bound,
        }
    }

    pub fn sum_lower(field: impl Into<String>, bound: i64) -> Self {
        Self {
            kind: GlobalKind::SumLower,
            field: field.into(),
            category: None,
            bound,
        }
    }

    pub fn category_count_upper(field: impl Into<String>, category: impl Into<String>, bound: i64) -> Self {
        Self {
            kind: GlobalKind::CategoryCountUpper,
            field: field.into(),
            category: Some(category.into()),
            bound,
        }
    }

    pub fn is_upper(&self) -> bool {
        self.kind.is_upper()
    }

    /// What one item adds to the constrained aggregate: the field value for
    /// sums, 0 or 1 for category counts.
    pub fn contribution(&self, item: &Item) -> Result<i64, ConstraintError> {
        let attr = item.attr(&self.field).ok_or_else(|| ConstraintError::UnknownField {
            field: self.field.clone(),
        })?;
        match (self.kind, attr) {
            (GlobalKind::SumUpper | GlobalKind::SumLower, AttrValue::Int(v)) => Ok(*v),
            (GlobalKind::CategoryCountUpper, AttrValue::Cat(v)) => {
                Ok(i64::from(Some(v.as_str()) == self.category.as_deref()))
            }
            _ => Err(ConstraintError::TypeMismatch {
                field: self.field.clone(),
                detail: "aggregate kind does not match the field type".into(),
            }),
        }
    }

    pub fn satisfied_by(&self, total: i64) -> bool {
        match self.kind {
            GlobalKind::SumUpper | GlobalKind::CategoryCountUpper => total <= self.bound,
            GlobalKind::SumLower => total >= self.bound,
        }
    }

    pub fn check_schema(&self, schema: &DomainSchema, cell_count: usize) -> Result<(), ConstraintError> {
        let kind = schema
            .field_kind(&self.field)
            .ok_or_else(|| ConstraintError::UnknownField {
                field: self.field.clone(),
            })?;
        let mismatch = |detail: &str| ConstraintError::TypeMismatch {
            field: self.field.clone(),
            detail: detail.into(),
        };
        match self.kind {
            GlobalKind::SumUpper | GlobalKind::SumLower if kind != FieldKind::Numeric => {
                Err(mismatch("sum constraints need a numeric field"))
            }
            GlobalKind::CategoryCountUpper => {
                if kind != FieldKind::Categorical {
                    return Err(mismatch("category counts need a categorical field"));
                }
                if self.category.is_none() {
                    return Err(mismatch("category count without a category"));
                }
                if self.bound < 0 || self.bound as usize > cell_count {
                    return Err(mismatch("category bound must lie in [0, cell count]"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn resolve<'a, L: ItemLookup + ?Sized>(items: &'a L, id: &str) -> Result<&'a Item, ConstraintError> {
    items
        .item(id)
        .ok_or_else(|| ConstraintError::UnknownItem(id.to_string()))
}

/// True iff `item` satisfies every constraint. Every constraint is evaluated so
/// schema errors surface even after a failing predicate.
pub fn eval_slot(item: &Item, constraints: &[SlotConstraint]) -> Result<bool, ConstraintError> {
    constraints.iter().try_fold(true, |acc, c| {
        let attr = item
            .attr(&c.field)
            .ok_or_else(|| ConstraintError::UnknownField { field: c.field.clone() })?;
        Ok(c.holds(attr)? && acc)
    })
}

fn totals<L: ItemLookup + ?Sized>(
    assignment: &GridAssignment,
    items: &L,
    constraints: &[&GlobalConstraint],
) -> Result<Vec<i64>, ConstraintError> {
    let mut totals = vec![0i64; constraints.len()];
    for (_, id) in assignment.filled() {
        let item = resolve(items, id)?;
        for (t, c) in totals.iter_mut().zip(constraints) {
            *t += c.contribution(item)?;
        }
    }
    Ok(totals)
}

/// Evaluates all global constraints on a fully filled grid.
pub fn eval_global_full<L: ItemLookup + ?Sized>(
    assignment: &GridAssignment,
    items: &L,
    constraints: &[GlobalConstraint],
) -> Result<bool, ConstraintError> {
    if let Some(cell) = assignment.first_unfilled() {
        return Err(ConstraintError::Unfilled(cell));
    }
    let refs: Vec<&GlobalConstraint> = constraints.iter().collect();
    let totals = totals(assignment, items, &refs)?;
    Ok(refs.iter().zip(&totals).all(|(c, t)| c.satisfied_by(*t)))
}

/// Evaluates a possibly partial grid. Unfilled cells contribute nothing, and
/// lower-bound constraints are skipped while any cell is unfilled. On a full
/// grid this is [`eval_global_full`].
pub fn eval_global_open_prefix<L: ItemLookup + ?Sized>(
    assignment: &GridAssignment,
    items: &L,
    constraints: &[GlobalConstraint],
) -> Result<bool, ConstraintError> {
    if assignment.is_full() {
        return eval_global_full(assignment, items, constraints);
    }
    let refs: Vec<&GlobalConstraint> = constraints.iter().filter(|c| c.is_upper()).collect();
    let totals = totals(assignment, items, &refs)?;
    Ok(refs.iter().zip(&totals).all(|(c, t)| c.satisfied_by(*t)))
}

macro_rules! serde_as_text {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_as_text!(SlotConstraint);
serde_as_text!(GlobalConstraint);

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn course(id: &str, credits: i64, price: i64, difficulty: i64, category: &str) -> Item {
        let mut attributes = BTreeMap::new();
        attributes.insert("credits".into(), AttrValue::Int(credits));
        attributes.insert("price".into(), AttrValue::Int(price));
        attributes.insert("difficulty".into(), AttrValue::Int(difficulty));
        attributes.insert("workload".into(), AttrValue::Int(3));
        attributes.insert("teacher".into(), AttrValue::Cat("Li".into()));
        attributes.insert("category".into(), AttrValue::Cat(category.into()));
        Item {
            id: id.into(),
            name: format!("{category} 191"),
            attributes,
        }
    }

    fn le(field: &str, v: i64) -> SlotConstraint {
        SlotConstraint::new(field, Comparator::Le, ConstraintValue::Int(v))
    }

    #[test]
    fn worked_example_slot() {
        let c443 = course("C443", 4, 379, 1, "Analysis");
        assert!(eval_slot(&c443, &[le("difficulty", 4), le("price", 460)]).unwrap());
        assert!(eval_slot(&c443, &[]).unwrap());
        let pricey = course("C9", 4, 461, 1, "Analysis");
        assert!(!eval_slot(&pricey, &[le("price", 460)]).unwrap());
        assert!(eval_slot(&course("C9", 4, 460, 1, "Analysis"), &[le("price", 460)]).unwrap());
    }

    #[test]
    fn slot_schema_errors_name_the_field() {
        let item = course("C1", 1, 1, 1, "Algebra");
        let err = eval_slot(&item, &[le("colour", 3)]).unwrap_err();
        assert_eq!(err, ConstraintError::UnknownField { field: "colour".into() });
        let err = eval_slot(&item, &[le("teacher", 3)]).unwrap_err();
        assert!(matches!(err, ConstraintError::TypeMismatch { ref field, .. } if field == "teacher"));
        // errors surface even after a failing predicate
        assert!(eval_slot(&item, &[le("price", 0), le("colour", 1)]).is_err());
    }

    #[test]
    fn categorical_comparators() {
        let item = course("C1", 1, 1, 1, "Algebra");
        let eq = SlotConstraint::new("category", Comparator::Eq, ConstraintValue::Text("Algebra".into()));
        let ne = SlotConstraint::new("category", Comparator::Ne, ConstraintValue::Text("Algebra".into()));
        let inn = SlotConstraint::new(
            "category",
            Comparator::In,
            ConstraintValue::Set(vec!["Physics".into(), "Algebra".into()]),
        );
        assert!(eval_slot(&item, &[eq.clone(), inn]).unwrap());
        assert!(!eval_slot(&item, &[ne]).unwrap());
        let bad_in = SlotConstraint::new("price", Comparator::In, ConstraintValue::Set(vec!["1".into()]));
        assert!(eval_slot(&item, &[bad_in]).is_err());
    }

    fn grid_with(items: &[Item], rows: usize, cols: usize) -> (GridAssignment, BTreeMap<String, Item>) {
        let mut g = GridAssignment::new(rows, cols);
        let cells: Vec<Cell> = g.all_cells().collect();
        for (cell, item) in cells.into_iter().zip(items) {
            g.set(cell, item.id.clone());
        }
        let lookup = items.iter().map(|i| (i.id.clone(), i.clone())).collect();
        (g, lookup)
    }

    #[test]
    fn global_full_boundaries() {
        // 5 courses with credits summing to 85 and prices to 10,896.
        let items: Vec<Item> = (0..5)
            .map(|i| course(&format!("C{i}"), 17, if i == 0 { 2_180 } else { 2_179 }, 1, "Algebra"))
            .collect();
        let (g, lookup) = grid_with(&items, 1, 5);
        assert!(eval_global_full(&g, &lookup, &[GlobalConstraint::sum_lower("credits", 85)]).unwrap());
        assert!(!eval_global_full(&g, &lookup, &[GlobalConstraint::sum_lower("credits", 86)]).unwrap());
        assert!(!eval_global_full(&g, &lookup, &[GlobalConstraint::sum_upper("price", 10_895)]).unwrap());
        assert!(eval_global_full(&g, &lookup, &[GlobalConstraint::sum_upper("price", 10_896)]).unwrap());
        assert!(eval_global_full(&g, &lookup, &[]).unwrap());
        let cat = GlobalConstraint::category_count_upper("category", "Algebra", 5);
        assert!(eval_global_full(&g, &lookup, &[cat]).unwrap());
        let cat = GlobalConstraint::category_count_upper("category", "Algebra", 4);
        assert!(!eval_global_full(&g, &lookup, &[cat]).unwrap());
    }

    #[test]
    fn global_full_errors() {
        let items = vec![course("C1", 1, 1, 1, "Algebra")];
        let (g, lookup) = grid_with(&items, 1, 2);
        assert_eq!(
            eval_global_full(&g, &lookup, &[]).unwrap_err(),
            ConstraintError::Unfilled(Cell::new(0, 1))
        );
        let mut g2 = GridAssignment::new(1, 1);
        g2.set(Cell::new(0, 0), "C404");
        assert_eq!(
            eval_global_full(&g2, &lookup, &[]).unwrap_err(),
            ConstraintError::UnknownItem("C404".into())
        );
    }

    #[test]
    fn open_prefix_semantics() {
        let items = vec![
            course("C1", 1, 5_450, 1, "Algebra"),
            course("C2", 1, 5_450, 1, "Algebra"),
        ];
        let (g, lookup) = grid_with(&items, 1, 3);
        assert!(!g.is_full());
        // running sum 10,900 already exceeds the cap
        assert!(!eval_global_open_prefix(&g, &lookup, &[GlobalConstraint::sum_upper("price", 10_895)]).unwrap());
        // lower bounds skipped on partial grids
        assert!(eval_global_open_prefix(&g, &lookup, &[GlobalConstraint::sum_lower("credits", 85)]).unwrap());
    }
}
