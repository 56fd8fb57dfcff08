//! CSV ingestion of trait tables against a declared schema.
//!
//! Expected layout: a header row with `taxon`, `family`, and one column per
//! schema entry (extra columns are ignored). Each data row is one language.
//! Empty cells mark missing values; an empty `family` assigns the taxon a
//! singleton family of its own (isolates must not be pooled together).

use std::path::Path;

use super::schema::Schema;
use super::{TraitColumn, TraitKind, TraitTable};
use crate::error::{Error, Result};

/// Read a CSV file into a [`TraitTable`] following `schema`.
pub fn load_table(path: &Path, schema: &Schema) -> Result<TraitTable> {
    let file = std::fs::File::open(path)?;
    read_table(file, schema)
}

/// Read CSV text from any reader into a [`TraitTable`].
pub fn read_table<R: std::io::Read>(reader: R, schema: &Schema) -> Result<TraitTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::validation(format!("cannot read CSV header: {e}")))?
        .clone();
    let col_pos = |name: &str| headers.iter().position(|h| h == name);
    let taxon_pos =
        col_pos("taxon").ok_or_else(|| Error::validation("CSV is missing a 'taxon' column"))?;
    let family_pos =
        col_pos("family").ok_or_else(|| Error::validation("CSV is missing a 'family' column"))?;
    let mut trait_pos = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let p = col_pos(&col.name).ok_or_else(|| {
            Error::validation(format!("CSV is missing column '{}'", col.name))
        })?;
        trait_pos.push(p);
    }

    let mut taxa = Vec::new();
    let mut families = Vec::new();
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.columns.len()];

    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::validation(format!("CSV: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let taxon = rec.get(taxon_pos).unwrap_or("").trim();
        if taxon.is_empty() {
            return Err(Error::validation(format!("line {line}: empty taxon id")));
        }
        let family = rec.get(family_pos).unwrap_or("").trim();
        taxa.push(taxon.to_string());
        families.push(if family.is_empty() {
            format!("isolate:{taxon}")
        } else {
            family.to_string()
        });

        for (j, col) in schema.columns.iter().enumerate() {
            let cell = rec.get(trait_pos[j]).unwrap_or("").trim();
            let parsed = if cell.is_empty() {
                None
            } else {
                Some(parse_cell(cell, &col.kind).map_err(|msg| {
                    Error::validation(format!("line {line}, column '{}': {msg}", col.name))
                })?)
            };
            values[j].push(parsed);
        }
    }

    if taxa.is_empty() {
        return Err(Error::validation("CSV contains no data rows"));
    }

    let columns = schema
        .columns
        .iter()
        .zip(values)
        .map(|(col, vals)| TraitColumn {
            name: col.name.clone(),
            kind: col.kind.clone(),
            values: vals,
        })
        .collect();
    TraitTable::new(taxa, families, columns)
}

/// Parse one cell according to the column kind. Discrete cells must match a
/// declared level label exactly; continuous cells must be finite numbers.
fn parse_cell(cell: &str, kind: &TraitKind) -> std::result::Result<f64, String> {
    match kind {
        TraitKind::Ordinal { levels } => match levels.iter().position(|l| l == cell) {
            Some(k) => Ok((k + 1) as f64),
            None => Err(format!("'{cell}' is not one of the declared levels")),
        },
        TraitKind::Binary { levels } => match levels.iter().position(|l| l == cell) {
            Some(k) => Ok((k + 1) as f64),
            None => Err(format!("'{cell}' is not one of the declared levels")),
        },
        TraitKind::Continuous => {
            let v: f64 = cell.parse().map_err(|_| format!("'{cell}' is not a number"))?;
            if !v.is_finite() {
                return Err(format!("'{cell}' is not finite"));
            }
            Ok(v)
        }
    }
}

/// Write a table back to CSV (taxon, family, then one column per trait,
/// labels for discrete kinds and `{}`-formatted floats for continuous).
pub fn write_table(table: &TraitTable) -> String {
    let mut out = String::from("taxon,family");
    for c in table.columns() {
        out.push(',');
        out.push_str(&quote(&c.name));
    }
    out.push('\n');
    for i in 0..table.n() {
        out.push_str(&quote(&table.taxa()[i]));
        out.push(',');
        let fam = &table.families()[i];
        out.push_str(&quote(fam.strip_prefix("isolate:").map(|_| "").unwrap_or(fam)));
        for c in table.columns() {
            out.push(',');
            match (c.values[i], &c.kind) {
                (None, _) => {}
                (Some(v), TraitKind::Ordinal { levels }) => {
                    out.push_str(&quote(&levels[v as usize - 1]))
                }
                (Some(v), TraitKind::Binary { levels }) => {
                    out.push_str(&quote(&levels[v as usize - 1]))
                }
                (Some(v), TraitKind::Continuous) => out.push_str(&format!("{v}")),
            }
        }
        out.push('\n');
    }
    out
}

fn quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::Schema;

    const SCHEMA: &str = r#"
[[column]]
name = "affix"
kind = "ordinal"
levels = ["low", "mid", "high"]

[[column]]
name = "adposition"
kind = "binary"
levels = ["post", "pre"]
"#;

    fn schema() -> Schema {
        Schema::parse(SCHEMA).unwrap()
    }

    #[test]
    fn loads_rows_with_codes_and_isolates() {
        let csv = "taxon,family,affix,adposition\n\
                   A,indo,low,post\n\
                   B,indo,high,pre\n\
                   C,,mid,pre\n";
        let t = read_table(csv.as_bytes(), &schema()).expect("load");
        assert_eq!(t.n(), 3);
        assert_eq!(t.families()[2], "isolate:C");
        let affix = t.column("affix").unwrap();
        assert_eq!(affix.values, vec![Some(1.0), Some(3.0), Some(2.0)]);
        let adp = t.column("adposition").unwrap();
        assert_eq!(adp.values, vec![Some(1.0), Some(2.0), Some(2.0)]);
    }

    #[test]
    fn missing_cells_are_flagged_not_fatal() {
        let csv = "taxon,family,affix,adposition\nA,f,low,\nB,f,mid,pre\n";
        let t = read_table(csv.as_bytes(), &schema()).expect("load");
        assert!(!t.row_complete(0));
        assert!(t.row_complete(1));
        let (cc, dropped) = t.complete_cases();
        assert_eq!(cc.n(), 1);
        assert_eq!(dropped, vec!["A".to_string()]);
    }

    #[test]
    fn unknown_label_error_names_line_and_column() {
        let csv = "taxon,family,affix,adposition\nA,f,low,post\nB,f,LOW,pre\n";
        let err = read_table(csv.as_bytes(), &schema()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "got: {msg}");
        assert!(msg.contains("'affix'"), "got: {msg}");
        assert!(msg.contains("LOW"), "got: {msg}");
    }

    #[test]
    fn duplicate_taxon_is_rejected() {
        let csv = "taxon,family,affix,adposition\nA,f,low,post\nA,f,mid,pre\n";
        let err = read_table(csv.as_bytes(), &schema()).unwrap_err();
        assert!(err.to_string().contains("duplicate taxon"), "got: {err}");
    }

    #[test]
    fn missing_header_and_empty_file_are_rejected() {
        let csv = "taxon,affix,adposition\nA,low,post\n";
        let err = read_table(csv.as_bytes(), &schema()).unwrap_err();
        assert!(err.to_string().contains("'family'"), "got: {err}");
        assert!(read_table("taxon,family,affix,adposition\n".as_bytes(), &schema()).is_err());
    }

    #[test]
    fn continuous_cells_parse_and_reject_junk() {
        let sch = Schema::parse(
            "[[column]]\nname='pop'\nkind='continuous'\n",
        )
        .unwrap();
        let t = read_table("taxon,family,pop\nA,f,1200\nB,f,3.5e4\n".as_bytes(), &sch).unwrap();
        assert_eq!(t.column("pop").unwrap().values, vec![Some(1200.0), Some(35000.0)]);
        let err =
            read_table("taxon,family,pop\nA,f,many\n".as_bytes(), &sch).unwrap_err();
        assert!(err.to_string().contains("not a number"), "got: {err}");
    }

    #[test]
    fn quoted_labels_with_commas_round_trip() {
        let sch = Schema::parse(
            "[[column]]\nname='o'\nkind='ordinal'\nlevels=['few, if any','many']\n",
        )
        .unwrap();
        let csv = "taxon,family,o\nA,f,\"few, if any\"\nB,f,many\n";
        let t = read_table(csv.as_bytes(), &sch).expect("load");
        assert_eq!(t.column("o").unwrap().values, vec![Some(1.0), Some(2.0)]);
        let back = write_table(&t);
        let t2 = read_table(back.as_bytes(), &sch).expect("reload");
        assert_eq!(t2.column("o").unwrap().values, t.column("o").unwrap().values);
    }

    #[test]
    fn write_table_blanks_isolate_families() {
        let csv = "taxon,family,affix,adposition\nA,,low,post\n";
        let t = read_table(csv.as_bytes(), &schema()).expect("load");
        let out = write_table(&t);
        assert!(out.contains("A,,low,post"), "isolate family written as empty: {out}");
    }
}
