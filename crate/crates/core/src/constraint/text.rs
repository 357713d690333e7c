//! Human-readable constraint text.
//!
//! ```text
//! total <field> <= <int>
//! total <field> >= <int>
//! at most <int> items with <field> = <category>
//! <field> <op> <value>          op in {<=, >=, ==, !=, in}
//! <field> in [<cat>, <cat>, ...]
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{Comparator, ConstraintError, ConstraintValue, GlobalConstraint, GlobalKind, SlotConstraint};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

/// Either kind of constraint, for parsing text of unknown kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    Slot(SlotConstraint),
    Global(GlobalConstraint),
}

impl fmt::Display for SlotConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.field, self.comparator)?;
        match &self.value {
            ConstraintValue::Int(v) => write!(f, "{v}"),
            ConstraintValue::Text(s) => f.write_str(s),
            ConstraintValue::Set(items) => write!(f, "[{}]", items.join(", ")),
        }
    }
}

impl fmt::Display for GlobalConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GlobalKind::SumUpper => write!(f, "total {} <= {}", self.field, self.bound),
            GlobalKind::SumLower => write!(f, "total {} >= {}", self.field, self.bound),
            GlobalKind::CategoryCountUpper => write!(
                f,
                "at most {} items with {} = {}",
                self.bound,
                self.field,
                self.category.as_deref().unwrap_or_default()
            ),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Slot(c) => c.fmt(f),
            Constraint::Global(c) => c.fmt(f),
        }
    }
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.rest().chars().next()
    }

    /// Consumes `kw` if it is the next whole token.
    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let rest = self.rest();
        if let Some(after) = rest.strip_prefix(kw) {
            if after.is_empty() || after.starts_with(char::is_whitespace) {
                self.pos += kw.len();
                return true;
            }
        }
        false
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.err(format!("expected `{kw}`"))
        }
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        self.skip_ws();
        let rest = self.rest();
        let len = rest.find(|c: char| !pred(c)).unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        let start = self.pos;
        let word = self.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
        if word.is_empty() || !word.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
            self.pos = start;
            self.skip_ws();
            return self.err(format!("expected {what}"));
        }
        Ok(word.to_string())
    }

    fn int(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let rest = self.rest();
        let sign = usize::from(rest.starts_with('-'));
        let digits = rest[sign..].bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return self.err("expected an integer");
        }
        let len = sign + digits;
        let value = match rest[..len].parse() {
            Ok(v) => v,
            Err(_) => return self.err("integer out of range"),
        };
        self.pos += len;
        Ok(value)
    }

    fn expect_char(&mut self, ch: char) -> Result<(), ParseError> {
        if self.peek() == Some(ch) {
            self.pos += ch.len_utf8();
            Ok(())
        } else {
            self.err(format!("expected `{ch}`"))
        }
    }

    fn operator(&mut self) -> Result<Comparator, ParseError> {
        self.skip_ws();
        for cmp in Comparator::ALL {
            let sym = cmp.symbol();
            if let Some(after) = self.rest().strip_prefix(sym) {
                // `in` is a word and must be followed by a separator
                if cmp == Comparator::In && after.starts_with(|c: char| c.is_ascii_alphanumeric() || c == '_') {
                    continue;
                }
                self.pos += sym.len();
                return Ok(cmp);
            }
        }
        self.err("expected one of <=, >=, ==, !=, in")
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        self.skip_ws();
        if self.pos == self.src.len() {
            Ok(())
        } else {
            self.err("unexpected trailing input")
        }
    }
}

fn parse_global(cur: &mut Cursor<'_>) -> Result<GlobalConstraint, ParseError> {
    if cur.eat_keyword("total") {
        let field = cur.ident("a field name")?;
        let kind = match cur.operator()? {
            Comparator::Le => GlobalKind::SumUpper,
            Comparator::Ge => GlobalKind::SumLower,
            _ => return cur.err("totals take <= or >="),
        };
        let bound = cur.int()?;
        cur.finish()?;
        return Ok(GlobalConstraint {
            kind,
            field,
            category: None,
            bound,
        });
    }
    cur.expect_keyword("at")?;
    cur.expect_keyword("most")?;
    let bound = cur.int()?;
    cur.expect_keyword("items")?;
    cur.expect_keyword("with")?;
    let field = cur.ident("a field name")?;
    cur.expect_char('=')?;
    let category = cur.ident("a category")?;
    cur.finish()?;
    Ok(GlobalConstraint::category_count_upper(field, category, bound))
}

fn parse_slot(cur: &mut Cursor<'_>) -> Result<SlotConstraint, ParseError> {
    let field = cur.ident("a field name")?;
    let comparator = cur.operator()?;
    let value = match comparator {
        Comparator::Le | Comparator::Ge => ConstraintValue::Int(cur.int()?),
        Comparator::Eq | Comparator::Ne => match cur.peek() {
            Some(c) if c.is_ascii_digit() || c == '-' => ConstraintValue::Int(cur.int()?),
            Some(_) => ConstraintValue::Text(cur.ident("a value")?),
            None => return cur.err("expected a value"),
        },
        Comparator::In => {
            cur.expect_char('[')?;
            let mut set = vec![cur.ident("a category")?];
            while cur.peek() == Some(',') {
                cur.pos += 1;
                set.push(cur.ident("a category")?);
            }
            cur.expect_char(']')?;
            ConstraintValue::Set(set)
        }
    };
    cur.finish()?;
    Ok(SlotConstraint {
        field,
        comparator,
        value,
    })
}

fn is_global_text(s: &str) -> bool {
    let mut words = s.split_whitespace();
    match words.next() {
        Some("total") => true,
        Some("at") => words.next() == Some("most"),
        _ => false,
    }
}

impl FromStr for SlotConstraint {
    type Err = ConstraintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(parse_slot(&mut Cursor::new(s))?)
    }
}

impl FromStr for GlobalConstraint {
    type Err = ConstraintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(parse_global(&mut Cursor::new(s))?)
    }
}

impl FromStr for Constraint {
    type Err = ConstraintError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut cur = Cursor::new(s);
        if is_global_text(s) {
            Ok(Constraint::Global(parse_global(&mut cur)?))
        } else {
            Ok(Constraint::Slot(parse_slot(&mut cur)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn renders_worked_examples() {
        let g = GlobalConstraint::sum_lower("credits", 85);
        assert_eq!(g.to_string(), "total credits >= 85");
        assert_eq!("total credits >= 85".parse::<GlobalConstraint>().unwrap(), g);
        let s = SlotConstraint::new("price", Comparator::Le, ConstraintValue::Int(460));
        assert_eq!(s.to_string(), "price <= 460");
        assert_eq!("price <= 460".parse::<SlotConstraint>().unwrap(), s);
        let c = GlobalConstraint::category_count_upper("category", "Physics", 3);
        assert_eq!(c.to_string(), "at most 3 items with category = Physics");
        let set = SlotConstraint::new(
            "teacher",
            Comparator::In,
            ConstraintValue::Set(vec!["Li".into(), "Chen".into()]),
        );
        assert_eq!(set.to_string(), "teacher in [Li, Chen]");
    }

    #[test]
    fn truncated_input_reports_position() {
        let err = "price <=".parse::<SlotConstraint>().unwrap_err();
        match err {
            ConstraintError::Parse(p) => assert_eq!(p.pos, 8),
            other => panic!("unexpected {other:?}"),
        }
        assert!("total price <".parse::<GlobalConstraint>().is_err());
        assert!("at most x items with a = b".parse::<GlobalConstraint>().is_err());
        assert!("teacher in [Li, ".parse::<SlotConstraint>().is_err());
        assert!("price <= 4 extra".parse::<SlotConstraint>().is_err());
        assert!("total price == 3".parse::<Constraint>().is_err());
    }

    #[test]
    fn dispatches_by_shape() {
        assert!(matches!(
            "total price <= 9".parse::<Constraint>().unwrap(),
            Constraint::Global(_)
        ));
        assert!(matches!(
            "at most 2 items with category = Algebra".parse::<Constraint>().unwrap(),
            Constraint::Global(_)
        ));
        assert!(matches!(
            "category != Algebra".parse::<Constraint>().unwrap(),
            Constraint::Slot(_)
        ));
        assert!(matches!(
            "difficulty == -2".parse::<Constraint>().unwrap(),
            Constraint::Slot(_)
        ));
    }

    // `total` is reserved by the grammar
    fn word() -> impl Strategy<Value = String> {
        "[a-z][a-z_]{0,8}".prop_filter("reserved", |w| w != "total")
    }

    fn category() -> impl Strategy<Value = String> {
        "[A-Z][a-z]{0,8}"
    }

    fn slot_constraint() -> impl Strategy<Value = SlotConstraint> {
        let value = prop_oneof![
            any::<i64>().prop_map(ConstraintValue::Int),
            category().prop_map(ConstraintValue::Text),
            prop::collection::vec(category(), 1..5).prop_map(ConstraintValue::Set),
        ];
        (word(), prop::sample::select(Comparator::ALL.to_vec()), value).prop_filter_map(
            "comparator/value shape",
            |(field, comparator, value)| {
                let ok = matches!(
                    (comparator, &value),
                    (Comparator::Le | Comparator::Ge, ConstraintValue::Int(_))
                        | (
                            Comparator::Eq | Comparator::Ne,
                            ConstraintValue::Int(_) | ConstraintValue::Text(_)
                        )
                        | (Comparator::In, ConstraintValue::Set(_))
                );
                ok.then_some(SlotConstraint {
                    field,
                    comparator,
                    value,
                })
            },
        )
    }

    fn global_constraint() -> impl Strategy<Value = GlobalConstraint> {
        prop_oneof![
            (word(), any::<i64>()).prop_map(|(f, b)| GlobalConstraint::sum_upper(f, b)),
            (word(), any::<i64>()).prop_map(|(f, b)| GlobalConstraint::sum_lower(f, b)),
            (word(), category(), 0i64..100).prop_map(|(f, c, b)| GlobalConstraint::category_count_upper(f, c, b)),
        ]
    }

    proptest! {
        #[test]
        fn slot_text_round_trips(c in slot_constraint()) {
            let text = c.to_string();
            prop_assert_eq!(text.parse::<SlotConstraint>().unwrap(), c.clone());
            prop_assert_eq!(text.parse::<Constraint>().unwrap(), Constraint::Slot(c));
        }

        #[test]
        fn global_text_round_trips(c in global_constraint()) {
            let text = c.to_string();
            prop_assert_eq!(text.parse::<GlobalConstraint>().unwrap(), c.clone());
            prop_assert_eq!(text.parse::<Constraint>().unwrap(), Constraint::Global(c));
        }
    }
}
