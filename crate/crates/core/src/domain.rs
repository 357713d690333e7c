//! The six planning domains: attribute schemas, item type and synthetic pools.
//!
//! Every domain shares the same shape. Each schema has one cost-like numeric
//! field (target of total-upper-bound constraints), one benefit-like numeric
//! field (target of total-lower-bound constraints), one small ordinal field and
//! two categorical fields. All numeric attributes are integers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of items sampled per domain pool.
pub const DEFAULT_POOL_SIZE: usize = 1200;

/// Smallest pool that can host a 5x7 grid plus one 25-candidate slot.
pub const MIN_POOL_SIZE: usize = 5 * 7 + 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("pool size {size} is below the minimum of {min}")]
    PoolTooSmall { size: usize, min: usize },
    #[error("item {id}: {reason}")]
    InvalidItem { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Course,
    Shopping,
    Travel,
    Workforce,
    Meal,
    PcBuild,
}

impl Domain {
    pub const ALL: [Domain; 6] = [
        Domain::Course,
        Domain::Shopping,
        Domain::Travel,
        Domain::Workforce,
        Domain::Meal,
        Domain::PcBuild,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Course => "course",
            Domain::Shopping => "shopping",
            Domain::Travel => "travel",
            Domain::Workforce => "workforce",
            Domain::Meal => "meal",
            Domain::PcBuild => "pc_build",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| DomainError::UnknownDomain(s.to_string()))
    }
}

/// Names of the supported domains in their canonical order.
pub fn list_domains() -> Vec<&'static str> {
    Domain::ALL.iter().map(|d| d.name()).collect()
}

/// An attribute value: integers for numeric fields, bare words for categories.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Cat(String),
}

impl AttrValue {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            AttrValue::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            AttrValue::Cat(s) => Some(s),
            AttrValue::Int(_) => None,
        }
    }
}

impl fmt::Display for AttrValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrValue::Int(v) => write!(f, "{v}"),
            AttrValue::Cat(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub name: String,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl Item {
    pub fn attr(&self, field: &str) -> Option<&AttrValue> {
        self.attributes.get(field)
    }
}

/// Anything that can resolve an item id.
pub trait ItemLookup {
    fn item(&self, id: &str) -> Option<&Item>;
}

impl ItemLookup for BTreeMap<String, Item> {
    fn item(&self, id: &str) -> Option<&Item> {
        self.get(id)
    }
}

impl ItemLookup for HashMap<String, Item> {
    fn item(&self, id: &str) -> Option<&Item> {
        self.get(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NumericField {
    pub name: &'static str,
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CategoricalField {
    pub name: &'static str,
    pub categories: &'static [&'static str],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainSchema {
    pub domain: Domain,
    pub numeric_fields: &'static [NumericField],
    pub categorical_fields: &'static [CategoricalField],
    pub id_prefix: char,
    /// Numeric field bounded from above by a grid total.
    pub cost_field: &'static str,
    /// Numeric field bounded from below by a grid total.
    pub benefit_field: &'static str,
    /// Categorical field whose value prefixes generated item names.
    pub name_field: &'static str,
}

impl DomainSchema {
    pub fn field_kind(&self, field: &str) -> Option<FieldKind> {
        if self.numeric(field).is_some() {
            Some(FieldKind::Numeric)
        } else if self.categorical(field).is_some() {
            Some(FieldKind::Categorical)
        } else {
            None
        }
    }

    pub fn numeric(&self, field: &str) -> Option<&NumericField> {
        self.numeric_fields.iter().find(|f| f.name == field)
    }

    pub fn categorical(&self, field: &str) -> Option<&CategoricalField> {
        self.categorical_fields.iter().find(|f| f.name == field)
    }

    /// All attribute names, numeric fields first, in schema order.
    pub fn field_names(&self) -> Vec<&'static str> {
        self.numeric_fields
            .iter()
            .map(|f| f.name)
            .chain(self.categorical_fields.iter().map(|f| f.name))
            .collect()
    }

    /// Checks that an item carries exactly the schema's attributes with
    /// in-range values and a correctly prefixed id.
    pub fn validate_item(&self, item: &Item) -> Result<(), DomainError> {
        let invalid = |reason: String| DomainError::InvalidItem {
            id: item.id.clone(),
            reason,
        };
        let digits = item.id.strip_prefix(self.id_prefix).unwrap_or("");
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(invalid(format!("id must match {}[0-9]+", self.id_prefix)));
        }
        if item.attributes.len() != self.numeric_fields.len() + self.categorical_fields.len() {
            return Err(invalid("attribute set does not match schema".into()));
        }
        for f in self.numeric_fields {
            match item.attr(f.name).and_then(AttrValue::as_int) {
                Some(v) if (f.min..=f.max).contains(&v) => {}
                Some(v) => return Err(invalid(format!("{} = {v} outside [{}, {}]", f.name, f.min, f.max))),
                None => return Err(invalid(format!("missing integer field {}", f.name))),
            }
        }
        for f in self.categorical_fields {
            match item.attr(f.name).and_then(AttrValue::as_cat) {
                Some(v) if f.categories.contains(&v) => {}
                Some(v) => return Err(invalid(format!("{} = {v} is not an allowed category", f.name))),
                None => return Err(invalid(format!("missing categorical field {}", f.name))),
            }
        }
        Ok(())
    }
}

const fn num(name: &'static str, min: i64, max: i64) -> NumericField {
    NumericField { name, min, max }
}

const fn cat(name: &'static str, categories: &'static [&'static str]) -> CategoricalField {
    CategoricalField { name, categories }
}

static COURSE_NUMERIC: [NumericField; 4] = [
    num("credits", 1, 5),
    num("price", 50, 600),
    num("difficulty", 1, 5),
    num("workload", 1, 10),
];
static COURSE_CATEGORICAL: [CategoricalField; 2] = [
    cat(
        "teacher",
        &["Li", "Wang", "Smith", "Garcia", "Chen", "Kumar", "Novak", "Okafor"],
    ),
    cat(
        "category",
        &[
            "Analysis",
            "Algebra",
            "Physics",
            "Chemistry",
            "Biology",
            "History",
            "Literature",
            "Economics",
        ],
    ),
];

static SHOPPING_NUMERIC: [NumericField; 4] = [
    num("price", 20, 500),
    num("rating", 1, 5),
    num("weight", 1, 20),
    num("shipping_days", 1, 7),
];
static SHOPPING_CATEGORICAL: [CategoricalField; 2] = [
    cat(
        "brand",
        &["Acme", "Northwind", "Contoso", "Globex", "Initech", "Umbrella"],
    ),
    cat(
        "category",
        &[
            "Kitchen", "Garden", "Toys", "Books", "Audio", "Sports", "Office", "Beauty",
        ],
    ),
];

static TRAVEL_NUMERIC: [NumericField; 4] = [
    num("cost", 50, 900),
    num("enjoyment", 1, 10),
    num("duration", 1, 8),
    num("distance", 1, 50),
];
static TRAVEL_CATEGORICAL: [CategoricalField; 2] = [
    cat("city", &["Paris", "Kyoto", "Lima", "Oslo", "Cairo", "Austin", "Lisbon"]),
    cat(
        "activity",
        &[
            "Museum", "Hike", "Tour", "Concert", "Market", "Cruise", "Dinner", "Beach",
        ],
    ),
];

static WORKFORCE_NUMERIC: [NumericField; 4] = [
    num("wage", 80, 400),
    num("skill", 1, 5),
    num("hours", 2, 10),
    num("experience", 0, 20),
];
static WORKFORCE_CATEGORICAL: [CategoricalField; 2] = [
    cat(
        "role",
        &["Cashier", "Cook", "Cleaner", "Manager", "Driver", "Stocker", "Greeter"],
    ),
    cat(
        "department",
        &["Front", "Back", "Logistics", "Service", "Admin", "Security"],
    ),
];

static MEAL_NUMERIC: [NumericField; 4] = [
    num("calories", 200, 1200),
    num("protein", 5, 60),
    num("prep_time", 5, 90),
    num("price", 3, 40),
];
static MEAL_CATEGORICAL: [CategoricalField; 2] = [
    cat(
        "cuisine",
        &["Italian", "Mexican", "Thai", "Indian", "Greek", "Korean", "French"],
    ),
    cat(
        "diet",
        &["Vegan", "Vegetarian", "Pescatarian", "Omnivore", "Keto", "Paleo"],
    ),
];

static PC_NUMERIC: [NumericField; 4] = [
    num("price", 30, 1500),
    num("performance", 1, 100),
    num("power", 5, 350),
    num("warranty", 1, 5),
];
static PC_CATEGORICAL: [CategoricalField; 2] = [
    cat("brand", &["Vortex", "Zenith", "Apex", "Nimbus", "Quantum", "Titan"]),
    cat(
        "component",
        &[
            "Processor",
            "Graphics",
            "Memory",
            "Storage",
            "Motherboard",
            "Cooling",
            "Case",
            "Supply",
        ],
    ),
];

/// Attribute schema of a domain.
pub fn schema(domain: Domain) -> DomainSchema {
    match domain {
        Domain::Course => DomainSchema {
            domain,
            numeric_fields: &COURSE_NUMERIC,
            categorical_fields: &COURSE_CATEGORICAL,
            id_prefix: 'C',
            cost_field: "price",
            benefit_field: "credits",
            name_field: "category",
        },
        Domain::Shopping => DomainSchema {
            domain,
            numeric_fields: &SHOPPING_NUMERIC,
            categorical_fields: &SHOPPING_CATEGORICAL,
            id_prefix: 'S',
            cost_field: "price",
            benefit_field: "rating",
            name_field: "category",
        },
        Domain::Travel => DomainSchema {
            domain,
            numeric_fields: &TRAVEL_NUMERIC,
            categorical_fields: &TRAVEL_CATEGORICAL,
            id_prefix: 'T',
            cost_field: "cost",
            benefit_field: "enjoyment",
            name_field: "activity",
        },
        Domain::Workforce => DomainSchema {
            domain,
            numeric_fields: &WORKFORCE_NUMERIC,
            categorical_fields: &WORKFORCE_CATEGORICAL,
            id_prefix: 'W',
            cost_field: "wage",
            benefit_field: "skill",
            name_field: "role",
        },
        Domain::Meal => DomainSchema {
            domain,
            numeric_fields: &MEAL_NUMERIC,
            categorical_fields: &MEAL_CATEGORICAL,
            id_prefix: 'M',
            cost_field: "calories",
            benefit_field: "protein",
            name_field: "cuisine",
        },
        Domain::PcBuild => DomainSchema {
            domain,
            numeric_fields: &PC_NUMERIC,
            categorical_fields: &PC_CATEGORICAL,
            id_prefix: 'P',
            cost_field: "price",
            benefit_field: "performance",
            name_field: "component",
        },
    }
}

/// An immutable pool of items for one domain with id lookup.
#[derive(Debug, Clone)]
pub struct ItemPool {
    domain: Domain,
    items: Vec<Item>,
    index: HashMap<String, usize>,
}

impl ItemPool {
    pub fn new(domain: Domain, items: Vec<Item>) -> Result<Self, DomainError> {
        let schema = schema(domain);
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            schema.validate_item(item)?;
            if index.insert(item.id.clone(), i).is_some() {
                return Err(DomainError::InvalidItem {
                    id: item.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self { domain, items, index })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    /// Id → item map, the shape of the on-disk pool document.
    pub fn to_map(&self) -> BTreeMap<String, Item> {
        self.items.iter().map(|it| (it.id.clone(), it.clone())).collect()
    }
}

impl ItemLookup for ItemPool {
    fn item(&self, id: &str) -> Option<&Item> {
        self.get(id)
    }
}

/// Samples `size` schema-valid items with uniform attributes.
///
/// Ids are the domain prefix followed by a running number; names follow the
/// `<Category> <number>` pattern.
pub fn sample_pool<R: Rng + ?Sized>(domain: Domain, size: usize, rng: &mut R) -> Result<ItemPool, DomainError> {
    if size < MIN_POOL_SIZE {
        return Err(DomainError::PoolTooSmall {
            size,
            min: MIN_POOL_SIZE,
        });
    }
    let schema = schema(domain);
    let mut used_names = HashSet::with_capacity(size);
    let mut items = Vec::with_capacity(size);
    for n in 1..=size {
        let mut attributes = BTreeMap::new();
        for f in schema.numeric_fields {
            attributes.insert(f.name.to_string(), AttrValue::Int(rng.gen_range(f.min..=f.max)));
        }
        for f in schema.categorical_fields {
            let v = f.categories.choose(rng).expect("categories are non-empty");
            attributes.insert(f.name.to_string(), AttrValue::Cat((*v).to_string()));
        }
        let prefix = attributes[schema.name_field].to_string();
        let name = loop {
            let candidate = format!("{prefix} {}", rng.gen_range(100..1000));
            if used_names.insert(candidate.clone()) {
                break candidate;
            }
        };
        items.push(Item {
            id: format!("{}{n}", schema.id_prefix),
            name,
            attributes,
        });
    }
    ItemPool::new(domain, items)
}
