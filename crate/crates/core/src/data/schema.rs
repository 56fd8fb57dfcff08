//! TOML schema describing the trait columns of a data file.
//!
//! Example:
//!
//! ```toml
//! [[column]]
//! name = "affix"
//! kind = "ordinal"
//! levels = [
//!   "strongly suffixing",
//!   "weakly suffixing",
//!   "balanced",
//!   "weakly prefixing",
//!   "strongly prefixing",
//! ]
//!
//! [[column]]
//! name = "adposition"
//! kind = "binary"
//! levels = ["postposition", "preposition"]
//!
//! [[column]]
//! name = "population"
//! kind = "continuous"
//! transform = "log-standardize"   # raw positive measurements; ln then z-score
//! ```
//!
//! Column order in the file is the trait order used by the models (first
//! declared column is trait 1). The optional `transform` declares ingestion
//! preprocessing; values already on the model scale omit it.

use serde::Deserialize;

use super::TraitKind;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct RawSchema {
    #[serde(default)]
    column: Vec<RawColumn>,
}

#[derive(Debug, Deserialize)]
struct RawColumn {
    name: String,
    kind: String,
    #[serde(default)]
    levels: Vec<String>,
    #[serde(default)]
    transform: Option<String>,
}

/// Declared ingestion transform for a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    /// Values are used as-is.
    #[default]
    None,
    /// ln then z-score ([`super::log_standardize`]); for raw positive
    /// measurements such as population sizes.
    LogStandardize,
}

/// One declared column: name, type, ingestion transform.
#[derive(Debug, Clone)]
pub struct SchemaColumn {
    pub name: String,
    pub kind: TraitKind,
    pub transform: Transform,
}

/// A validated schema: named columns in declaration order.
#[derive(Debug, Clone)]
pub struct Schema {
    pub columns: Vec<SchemaColumn>,
}

impl Schema {
    /// Parse and validate a TOML schema document.
    pub fn parse(text: &str) -> Result<Schema> {
        let raw: RawSchema = toml::from_str(text)
            .map_err(|e| Error::validation(format!("schema TOML: {e}")))?;
        if raw.column.is_empty() {
            return Err(Error::validation("schema declares no columns"));
        }
        let mut columns: Vec<SchemaColumn> = Vec::with_capacity(raw.column.len());
        for c in raw.column {
            if c.name.is_empty() {
                return Err(Error::validation("schema column with empty name"));
            }
            if columns.iter().any(|col| col.name == c.name) {
                return Err(Error::validation(format!("schema declares column '{}' twice", c.name)));
            }
            let kind = match c.kind.as_str() {
                "ordinal" => {
                    if c.levels.len() < 2 {
                        return Err(Error::validation(format!(
                            "ordinal column '{}' needs at least 2 levels, got {}",
                            c.name,
                            c.levels.len()
                        )));
                    }
                    ensure_distinct(&c.name, &c.levels)?;
                    TraitKind::Ordinal { levels: c.levels }
                }
                "binary" => {
                    if c.levels.len() != 2 {
                        return Err(Error::validation(format!(
                            "binary column '{}' needs exactly 2 levels, got {}",
                            c.name,
                            c.levels.len()
                        )));
                    }
                    ensure_distinct(&c.name, &c.levels)?;
                    let mut it = c.levels.into_iter();
                    TraitKind::Binary { levels: [it.next().unwrap(), it.next().unwrap()] }
                }
                "continuous" => {
                    if !c.levels.is_empty() {
                        return Err(Error::validation(format!(
                            "continuous column '{}' must not declare levels",
                            c.name
                        )));
                    }
                    TraitKind::Continuous
                }
                other => {
                    return Err(Error::validation(format!(
                        "column '{}': unknown kind '{}' (expected ordinal, binary, or continuous)",
                        c.name, other
                    )))
                }
            };
            let transform = match c.transform.as_deref() {
                None | Some("none") => Transform::None,
                Some("log-standardize") => {
                    if kind != TraitKind::Continuous {
                        return Err(Error::validation(format!(
                            "column '{}': transform 'log-standardize' needs kind 'continuous'",
                            c.name
                        )));
                    }
                    Transform::LogStandardize
                }
                Some(other) => {
                    return Err(Error::validation(format!(
                        "column '{}': unknown transform '{}' (expected log-standardize or none)",
                        c.name, other
                    )))
                }
            };
            columns.push(SchemaColumn { name: c.name, kind, transform });
        }
        Ok(Schema { columns })
    }

    /// Load a schema from a file.
    pub fn load(path: &std::path::Path) -> Result<Schema> {
        Schema::parse(&std::fs::read_to_string(path)?)
    }
}

fn ensure_distinct(name: &str, levels: &[String]) -> Result<()> {
    for (i, a) in levels.iter().enumerate() {
        if a.is_empty() {
            return Err(Error::validation(format!("column '{name}': empty level label")));
        }
        if levels[..i].contains(a) {
            return Err(Error::validation(format!(
                "column '{name}': duplicate level label '{a}'"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
[[column]]
name = "affix"
kind = "ordinal"
levels = ["low", "mid", "high"]

[[column]]
name = "adposition"
kind = "binary"
levels = ["postposition", "preposition"]

[[column]]
name = "population"
kind = "continuous"
transform = "log-standardize"
"#;

    #[test]
    fn parses_columns_in_declared_order() {
        let s = Schema::parse(GOOD).expect("parse");
        let names: Vec<&str> = s.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["affix", "adposition", "population"]);
        assert_eq!(s.columns[0].kind.n_levels(), Some(3));
        assert_eq!(s.columns[1].kind.n_levels(), Some(2));
        assert_eq!(s.columns[2].kind.n_levels(), None);
        assert_eq!(s.columns[0].transform, Transform::None);
        assert_eq!(s.columns[2].transform, Transform::LogStandardize);
    }

    #[test]
    fn rejects_bad_kinds_and_levels() {
        assert!(Schema::parse("[[column]]\nname='x'\nkind='nominal'").is_err());
        assert!(Schema::parse("[[column]]\nname='x'\nkind='binary'\nlevels=['a']").is_err());
        assert!(Schema::parse("[[column]]\nname='x'\nkind='binary'\nlevels=['a','a']").is_err());
        assert!(Schema::parse("[[column]]\nname='x'\nkind='ordinal'\nlevels=['only']").is_err());
        assert!(
            Schema::parse("[[column]]\nname='x'\nkind='continuous'\nlevels=['a','b']").is_err(),
            "continuous with levels"
        );
        assert!(Schema::parse("").is_err(), "no columns");
    }

    #[test]
    fn transform_must_be_known_and_continuous_only() {
        let ord = "[[column]]\nname='x'\nkind='binary'\nlevels=['a','b']\ntransform='log-standardize'";
        assert!(Schema::parse(ord).is_err(), "discrete column with transform");
        let bad = "[[column]]\nname='x'\nkind='continuous'\ntransform='sqrt'";
        assert!(Schema::parse(bad).is_err(), "unknown transform");
        let none = "[[column]]\nname='x'\nkind='continuous'\ntransform='none'";
        assert_eq!(Schema::parse(none).unwrap().columns[0].transform, Transform::None);
    }

    #[test]
    fn rejects_duplicate_column_names() {
        let text = "[[column]]\nname='x'\nkind='continuous'\n[[column]]\nname='x'\nkind='continuous'";
        assert!(Schema::parse(text).is_err());
    }
}
