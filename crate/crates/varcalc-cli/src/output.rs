//! Tabular output in CSV or JSON.
//!
//! Both writers are deterministic: identical tables serialize to identical
//! bytes. CSV rows end with CRLF, the header row is always present, floats
//! carry 17 significant digits, and footer entries become `#key,value`
//! comment rows. JSON documents keep a stable key order and end with a
//! newline.

use std::io::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::{CliError, CliResult};

#[derive(Clone, Debug)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub footer: Vec<(String, Cell)>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_footer(&mut self, key: &str, value: Cell) {
        self.footer.push((key.to_string(), value));
    }
}

/// 17 significant digits reproduce every f64 exactly.
fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Minimal RFC-4180 quoting: wrap when a comma, quote, CR, or LF occurs.
fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\r', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cell_csv(cell: &Cell) -> String {
    match cell {
        Cell::Num(x) => fmt_num(*x),
        Cell::Int(i) => i.to_string(),
        Cell::Text(s) => csv_escape(s),
    }
}

fn cell_json(cell: &Cell) -> Value {
    match cell {
        // f64 NaN has no JSON literal; serde_json would reject it, so emit
        // null (the CSV route prints "NaN" for the same cell).
        Cell::Num(x) if x.is_nan() => Value::Null,
        Cell::Num(x) => json!(x),
        Cell::Int(i) => json!(i),
        Cell::Text(s) => json!(s),
    }
}

pub fn render_csv(table: &Table) -> String {
    let mut out = String::new();
    out.push_str(
        &table
            .columns
            .iter()
            .map(|c| csv_escape(c))
            .collect::<Vec<_>>()
            .join(","),
    );
    out.push_str("\r\n");
    for row in &table.rows {
        out.push_str(&row.iter().map(cell_csv).collect::<Vec<_>>().join(","));
        out.push_str("\r\n");
    }
    for (key, value) in &table.footer {
        out.push_str(&format!("#{},{}\r\n", csv_escape(key), cell_csv(value)));
    }
    out
}

pub fn render_json(table: &Table) -> String {
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|row| Value::Array(row.iter().map(cell_json).collect()))
        .collect();
    let mut footer = serde_json::Map::new();
    for (key, value) in &table.footer {
        footer.insert(key.clone(), cell_json(value));
    }
    let doc = json!({
        "columns": table.columns,
        "rows": rows,
        "footer": Value::Object(footer),
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("table serializes");
    text.push('\n');
    text
}

pub fn render(table: &Table, format: &str) -> String {
    match format {
        "json" => render_json(table),
        _ => render_csv(table),
    }
}

/// Write to the path, or stdout when no path is given.
pub fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| {
            CliError::Runtime(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| CliError::Runtime(format!("cannot write stdout: {e}")))
        }
    }
}
