use std::fmt::Write as _;

use rwre_core::TowerReal;
use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Tower(TowerReal),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<TowerReal> for Cell {
    fn from(v: TowerReal) -> Self {
        Cell::Tower(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// 17 significant digits, enough to round-trip any double.
pub fn float17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => float17(*v),
            Cell::Tower(t) => t.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => csv_field(s),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) if v.is_finite() => json!(v),
            Cell::Float(v) => json!(v.to_string()),
            Cell::Tower(t) => json!(t.to_string()),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

/// One command's result: a table plus summary lines and an optional full
/// JSON detail block.
#[derive(Debug, Default)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Vec<(String, Value)>,
    pub detail: Option<Value>,
}

impl Report {
    pub fn new(columns: &[&str]) -> Self {
        Report {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.summary.push((key.to_string(), v));
    }

    pub fn detail(&mut self, value: impl Serialize) {
        self.detail = serde_json::to_value(value).ok();
    }

    pub fn render(&self, format: Format, metadata: &Map<String, Value>) -> String {
        match format {
            Format::Csv => self.csv(metadata),
            Format::Json => self.json(metadata),
        }
    }

    fn csv(&self, metadata: &Map<String, Value>) -> String {
        let mut out = String::new();
        for (k, v) in metadata {
            let _ = writeln!(out, "# {k}: {}", plain(v));
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "# {k}: {}", plain(v));
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    fn json(&self, metadata: &Map<String, Value>) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .cloned()
                    .zip(r.iter().map(Cell::json))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let mut top = Map::new();
        top.insert("metadata".into(), Value::Object(metadata.clone()));
        for (k, v) in &self.summary {
            top.insert(k.clone(), v.clone());
        }
        top.insert("rows".into(), Value::Array(rows));
        if let Some(d) = &self.detail {
            top.insert("detail".into(), d.clone());
        }
        let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("serializable");
        s.push('\n');
        s
    }
}

fn plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_cells_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1.5258556235409006e-5, 156841.30295496755] {
            let s = float17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn csv_layout() {
        let mut r = Report::new(&["a", "b"]);
        r.row(vec![Cell::Int(1), Cell::Text("x,y".into())]);
        r.summary("verdict", "pass");
        let mut meta = Map::new();
        meta.insert("version".into(), json!("0.1.0"));
        let s = r.render(Format::Csv, &meta);
        assert_eq!(s, "# version: 0.1.0\n# verdict: pass\na,b\n1,\"x,y\"\n");
    }
}
