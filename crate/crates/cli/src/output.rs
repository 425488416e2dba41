//! CSV tables and plot-data files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) if x.is_nan() => "nan".into(),
            Cell::Float(x) => format!("{x:e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<u64> for Cell {
    fn from(i: u64) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column values, `None` for text cells.
    pub fn floats(&self, name: &str) -> Vec<Option<f64>> {
        match self.column(name) {
            Some(k) => self.rows.iter().map(|r| r[k].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    /// CSV text with `comments` as leading `#` lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells");
        let mut out = String::new();
        for c in comments {
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&body);
        out
    }
}

/// One curve, written as whitespace-separated `x y` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotData {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (x, y) in &self.points {
            s.push_str(&format!("{x:e} {y:e}\n"));
        }
        s
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub comments: Vec<String>,
    pub tables: Vec<Table>,
    /// Wall times, kept apart so the data tables stay reproducible.
    pub timings: Table,
    pub plots: Vec<PlotData>,
}

impl ExperimentOutput {
    pub fn new(comments: Vec<String>) -> Self {
        Self {
            comments,
            tables: Vec::new(),
            timings: Table::new("timings", &["label", "seconds"]),
            plots: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn time(&mut self, label: impl Into<String>, seconds: f64) {
        self.timings.push(vec![Cell::Text(label.into()), Cell::Float(seconds)]);
    }

    /// Writes `<table>.csv`, `timings.csv` and `plots/<curve>.dat` under `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for t in self.tables.iter().chain(std::iter::once(&self.timings)) {
            let p = dir.join(format!("{}.csv", t.name));
            fs::File::create(&p)?.write_all(t.to_csv(&self.comments).as_bytes())?;
            written.push(p);
        }
        if !self.plots.is_empty() {
            let pd = dir.join("plots");
            fs::create_dir_all(&pd)?;
            for c in &self.plots {
                let p = pd.join(format!("{}.dat", c.name));
                fs::write(&p, c.to_text())?;
                written.push(p);
            }
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_comments_then_header() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec![Cell::from(1usize), Cell::from(0.5)]);
        let s = t.to_csv(&["# seed=3".into()]);
        assert_eq!(s, "# seed=3\na,b\n1,5e-1\n");
    }

    #[test]
    fn empty_table_keeps_header() {
        let t = Table::new("t", &["grid", "supg"]);
        assert_eq!(t.to_csv(&[]), "grid,supg\n");
    }
}
