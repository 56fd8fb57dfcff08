//! Trait tables: typed per-taxon observations plus family assignments.
//!
//! A [`TraitTable`] holds one row per taxon (language) with a family id and
//! one value per declared trait column. Ordinal and binary values are stored
//! as 1-based level codes; continuous values as floats. Missing values are
//! allowed at load time and excluded by complete-case filtering before any
//! model sees the data.

pub mod load;
pub mod schema;

pub use load::{load_table, read_table, write_table};
pub use schema::Schema;

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::tree::Tree;

/// Column type: ordinal with ordered level labels, binary with two labels,
/// or continuous.
#[derive(Debug, Clone, PartialEq)]
pub enum TraitKind {
    /// Ordered categories; code k corresponds to `levels[k-1]`.
    Ordinal { levels: Vec<String> },
    /// Two categories; code 1 = `levels[0]`, code 2 =
    /// `levels[1]` (the modeled "success").
    Binary { levels: [String; 2] },
    Continuous,
}

impl TraitKind {
    /// Number of levels for discrete kinds.
    pub fn n_levels(&self) -> Option<usize> {
        match self {
            TraitKind::Ordinal { levels } => Some(levels.len()),
            TraitKind::Binary { .. } => Some(2),
            TraitKind::Continuous => None,
        }
    }
}

/// A single named column of typed values (indices parallel to the table's
/// taxon list; `None` marks missing entries).
#[derive(Debug, Clone)]
pub struct TraitColumn {
    pub name: String,
    pub kind: TraitKind,
    pub values: Vec<Option<f64>>,
}

impl TraitColumn {
    /// Level code (1-based) at row i; panics on missing or continuous.
    pub fn code(&self, i: usize) -> usize {
        debug_assert!(!matches!(self.kind, TraitKind::Continuous));
        self.values[i].expect("complete-case data") as usize
    }

    /// Continuous value at row i; panics on missing.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i].expect("complete-case data")
    }
}

/// Affine record of a log-standardization, kept so transformed values can be
/// mapped back to the original scale.
#[derive(Debug, Clone, Copy)]
pub struct Standardization {
    /// Mean of ln(values).
    pub mean: f64,
    /// Sample standard deviation (n−1 denominator) of ln(values).
    pub sd: f64,
}

impl Standardization {
    /// Map a standardized value back to the original positive scale.
    pub fn inverse(&self, z: f64) -> f64 {
        (z * self.sd + self.mean).exp()
    }
}

/// Rows dropped on each side during alignment.
#[derive(Debug, Clone, Default)]
pub struct AlignReport {
    /// Table taxa dropped: incomplete rows or taxa absent from the tree.
    pub dropped_rows: Vec<String>,
    /// Tree tips absent from the table.
    pub dropped_tips: Vec<String>,
}

/// The full data set: taxa, families, columns.
#[derive(Debug, Clone)]
pub struct TraitTable {
    taxa: Vec<String>,
    families: Vec<String>,
    columns: Vec<TraitColumn>,
}

impl TraitTable {
    /// Assemble and validate a table.
    pub fn new(taxa: Vec<String>, families: Vec<String>, columns: Vec<TraitColumn>) -> Result<Self> {
        if taxa.len() != families.len() {
            return Err(Error::validation("taxa and family lists differ in length"));
        }
        let mut seen = HashSet::new();
        for t in &taxa {
            if t.is_empty() {
                return Err(Error::validation("empty taxon id"));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::validation(format!("duplicate taxon id '{t}'")));
            }
        }
        for f in &families {
            if f.is_empty() {
                return Err(Error::validation("empty family id (isolates get singleton ids at load)"));
            }
        }
        for c in &columns {
            if c.values.len() != taxa.len() {
                return Err(Error::validation(format!(
                    "column '{}' has {} values for {} taxa",
                    c.name,
                    c.values.len(),
                    taxa.len()
                )));
            }
            if let Some(k) = c.kind.n_levels() {
                for (i, v) in c.values.iter().enumerate() {
                    if let Some(v) = v {
                        if v.fract() != 0.0 || *v < 1.0 || *v > k as f64 {
                            return Err(Error::validation(format!(
                                "column '{}' row {}: code {} outside 1..={}",
                                c.name,
                                i + 1,
                                v,
                                k
                            )));
                        }
                    }
                }
            } else {
                for (i, v) in c.values.iter().enumerate() {
                    if let Some(v) = v {
                        if !v.is_finite() {
                            return Err(Error::validation(format!(
                                "column '{}' row {}: non-finite value",
                                c.name,
                                i + 1
                            )));
                        }
                    }
                }
            }
        }
        Ok(TraitTable { taxa, families, columns })
    }

    /// Number of rows.
    pub fn n(&self) -> usize {
        self.taxa.len()
    }

    /// Taxon ids in row order.
    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    /// Family id per row.
    pub fn families(&self) -> &[String] {
        &self.families
    }

    /// All columns in declaration order.
    pub fn columns(&self) -> &[TraitColumn] {
        &self.columns
    }

    /// Look up a column by name.
    pub fn column(&self, name: &str) -> Option<&TraitColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Replace a column's values (used by transforms). The replacement must
    /// keep name and length.
    pub fn replace_column(&mut self, col: TraitColumn) -> Result<()> {
        let slot = self
            .columns
            .iter_mut()
            .find(|c| c.name == col.name)
            .ok_or_else(|| Error::validation(format!("no column named '{}'", col.name)))?;
        if col.values.len() != self.taxa.len() {
            return Err(Error::validation("replacement column has wrong length"));
        }
        *slot = col;
        Ok(())
    }

    /// True if row i has a value in every column.
    pub fn row_complete(&self, i: usize) -> bool {
        self.columns.iter().all(|c| c.values[i].is_some())
    }

    /// Restrict to complete rows; returns the dropped taxon ids.
    pub fn complete_cases(&self) -> (TraitTable, Vec<String>) {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| self.row_complete(i)).collect();
        let dropped = (0..self.n())
            .filter(|&i| !self.row_complete(i))
            .map(|i| self.taxa[i].clone())
            .collect();
        (self.subset(&keep), dropped)
    }

    /// Row subset in the given order.
    pub fn subset(&self, rows: &[usize]) -> TraitTable {
        TraitTable {
            taxa: rows.iter().map(|&i| self.taxa[i].clone()).collect(),
            families: rows.iter().map(|&i| self.families[i].clone()).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| TraitColumn {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
        }
    }

    /// Dense family index: families in first-appearance order plus, per row,
    /// the index of its family.
    pub fn family_index(&self) -> (Vec<String>, Vec<usize>) {
        let mut names: Vec<String> = Vec::new();
        let mut lookup: HashMap<&str, usize> = HashMap::new();
        let mut idx = Vec::with_capacity(self.n());
        for f in &self.families {
            let id = *lookup.entry(f.as_str()).or_insert_with(|| {
                names.push(f.clone());
                names.len() - 1
            });
            idx.push(id);
        }
        (names, idx)
    }
}

/// Standardize the log of a positive continuous column to mean 0, sd 1
/// (sample sd, n−1). Returns the transformed column and the affine record.
pub fn log_standardize(column: &TraitColumn) -> Result<(TraitColumn, Standardization)> {
    if column.kind != TraitKind::Continuous {
        return Err(Error::validation(format!("column '{}' is not continuous", column.name)));
    }
    let mut logs = Vec::with_capacity(column.values.len());
    for (i, v) in column.values.iter().enumerate() {
        let v = v.ok_or_else(|| {
            Error::validation(format!(
                "column '{}' row {} is missing; complete-case filter must run first",
                column.name,
                i + 1
            ))
        })?;
        if v <= 0.0 {
            return Err(Error::validation(format!(
                "column '{}' row {}: value {} is not positive, cannot take log",
                column.name,
                i + 1,
                v
            )));
        }
        logs.push(v.ln());
    }
    let n = logs.len();
    if n < 2 {
        return Err(Error::validation("need at least 2 values to standardize"));
    }
    let mean = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::validation(format!("column '{}' is constant (sd = 0)", column.name)));
    }
    let values = logs.iter().map(|x| Some((x - mean) / sd)).collect();
    Ok((
        TraitColumn { name: column.name.clone(), kind: TraitKind::Continuous, values },
        Standardization { mean, sd },
    ))
}

/// Restrict table and tree to the complete-row taxa present on both sides,
/// prune the tree, and reorder rows to the pruned tree's tip order.
pub fn align(table: &TraitTable, tree: &Tree) -> Result<(TraitTable, Tree, AlignReport)> {
    let mut report = AlignReport::default();
    let tips: HashSet<String> = tree.tip_labels().into_iter().collect();
    let mut keep_rows: HashMap<&str, usize> = HashMap::new();
    for i in 0..table.n() {
        let taxon = table.taxa[i].as_str();
        if table.row_complete(i) && tips.contains(taxon) {
            keep_rows.insert(taxon, i);
        } else {
            report.dropped_rows.push(taxon.to_string());
        }
    }
    for tip in &tips {
        if !keep_rows.contains_key(tip.as_str()) {
            report.dropped_tips.push(tip.clone());
        }
    }
    report.dropped_tips.sort();
    if keep_rows.len() < 3 {
        return Err(Error::validation(format!(
            "only {} taxa shared between table and tree; need at least 3",
            keep_rows.len()
        )));
    }
    let keep_set: HashSet<&str> = keep_rows.keys().copied().collect();
    let pruned = tree.prune(&keep_set)?;
    let order: Vec<usize> = pruned
        .tip_labels()
        .iter()
        .map(|l| keep_rows[l.as_str()])
        .collect();
    Ok((table.subset(&order), pruned, report))
}

/// K×2 contingency counts of an ordinal column against a binary column.
#[derive(Debug, Clone)]
pub struct CrossTab {
    pub row_labels: Vec<String>,
    pub col_labels: [String; 2],
    /// counts[k][b] for ordinal level k+1 and binary level b+1.
    pub counts: Vec<[u64; 2]>,
}

impl CrossTab {
    /// Sum of all cells.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|r| r[0] + r[1]).sum()
    }

    /// CSV export: header row of binary labels, one row per ordinal level.
    pub fn to_csv(&self) -> String {
        let mut out = format!("level,{},{}\n", self.col_labels[0], self.col_labels[1]);
        for (lab, row) in self.row_labels.iter().zip(&self.counts) {
            out.push_str(&format!("{},{},{}\n", csv_quote(lab), row[0], row[1]));
        }
        out
    }
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Cross-tabulate two complete, equal-length columns.
pub fn crosstab(a: &TraitColumn, b: &TraitColumn) -> Result<CrossTab> {
    let TraitKind::Ordinal { levels } = &a.kind else {
        return Err(Error::validation(format!("column '{}' is not ordinal", a.name)));
    };
    let TraitKind::Binary { levels: blevels } = &b.kind else {
        return Err(Error::validation(format!("column '{}' is not binary", b.name)));
    };
    if a.values.len() != b.values.len() {
        return Err(Error::validation(format!(
            "column lengths differ: {} vs {}",
            a.values.len(),
            b.values.len()
        )));
    }
    let mut counts = vec![[0u64; 2]; levels.len()];
    for i in 0..a.values.len() {
        let (Some(x), Some(y)) = (a.values[i], b.values[i]) else {
            return Err(Error::validation(format!("missing value at row {}", i + 1)));
        };
        counts[x as usize - 1][y as usize - 1] += 1;
    }
    Ok(CrossTab { row_labels: levels.clone(), col_labels: blevels.clone(), counts })
}
