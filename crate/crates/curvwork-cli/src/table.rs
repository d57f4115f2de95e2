//! Tabular output: CSV with a `#`-prefixed metadata header, plus optional
//! gnuplot companion scripts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::CliError;

/// A named, unit-annotated column.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: &'static str,
    /// Physical unit; `"1"` marks a dimensionless column.
    pub unit: &'static str,
}

impl Column {
    pub fn new(name: &'static str, unit: &'static str) -> Self {
        Self { name, unit }
    }
}

/// A result table: metadata header, annotated columns, numeric rows.
#[derive(Debug, Clone)]
pub struct ResultTable {
    columns: Vec<Column>,
    rows: Vec<Vec<f64>>,
    metadata: Vec<(String, String)>,
}

impl ResultTable {
    pub fn new(columns: Vec<Column>) -> Self {
        Self { columns, rows: Vec::new(), metadata: Vec::new() }
    }

    /// Append a metadata line (emitted in insertion order).
    pub fn meta(&mut self, key: &str, value: impl std::fmt::Display) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width {} does not match {} columns",
            row.len(),
            self.columns.len()
        );
        self.rows.push(row);
    }

/// Render the full file: `# key: value` lines, a header row
    /// `name[unit],...`, then one CSV line per row with `%.12e` numbers
    /// (stable across runs for byte-identical output).
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let header: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{}[{}]", c.name, c.unit))
            .collect();
        let _ = writeln!(out, "{}", header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.12e}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.render())
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}

/// Write a gnuplot companion script next to the tables it plots.
pub fn write_script(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Common preamble for the companion scripts (CSV parsing, comment handling).
pub fn script_preamble(title: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set datafile commentschars '#'\n\
         set key outside\n\
         set title '{title}'\n"
    )
}
