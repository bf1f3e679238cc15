//! CSV reports with a schema-version header line.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;

pub const SCHEMA_LINE: &str = "# schema_version=1";
pub const NA: &str = "n/a";

/// A cell: a number, text, or missing.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Na,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => escape(s),
            Cell::Na => NA.to_string(),
        }
    }
}

fn escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    /// Appends a row labelled `label` in the first column holding the mean of
    /// every numeric column, skipping `n/a` cells. `Int` columns are summed.
    pub fn push_aggregate(&mut self, label: &str) {
        let mut agg = vec![Cell::Text(label.to_string())];
        for c in 1..self.columns.len() {
            let nums: Vec<f64> = self.rows.iter().filter_map(|r| if let Cell::Num(v) = r[c] { Some(v) } else { None }).collect();
            let ints: Vec<usize> = self.rows.iter().filter_map(|r| if let Cell::Int(v) = r[c] { Some(v) } else { None }).collect();
            agg.push(if !nums.is_empty() {
                Cell::Num(nums.iter().sum::<f64>() / nums.len() as f64)
            } else if !ints.is_empty() {
                Cell::Int(ints.iter().sum())
            } else {
                Cell::Na
            });
        }
        self.rows.push(agg);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(SCHEMA_LINE);
        out.push('\n');
        out.push_str(&self.columns.iter().map(|c| escape(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.iter().map(Cell::render).collect::<Vec<_>>().join(","));
        }
        out
    }
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(text: &str, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_skips_na() {
        let mut t = Table::new(["scene", "a", "n", "b"]);
        t.push(vec![Cell::Text("x".into()), Cell::Num(1.0), Cell::Int(2), Cell::Na]);
        t.push(vec![Cell::Text("y".into()), Cell::Na, Cell::Int(3), Cell::Na]);
        t.push(vec![Cell::Text("z".into()), Cell::Num(3.0), Cell::Int(0), Cell::Na]);
        t.push_aggregate("mean");
        assert_eq!(
            t.to_csv(),
            "# schema_version=1\nscene,a,n,b\nx,1,2,n/a\ny,n/a,3,n/a\nz,3,0,n/a\nmean,2,5,n/a\n"
        );
    }

    #[test]
    fn text_is_quoted() {
        let mut t = Table::new(["k"]);
        t.push(vec![Cell::Text("a,\"b\"".into())]);
        assert!(t.to_csv().ends_with("\"a,\"\"b\"\"\"\n"));
    }
}
