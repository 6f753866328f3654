//! Tabular results and their three renderings.

use std::io::{self, Write};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

/// How a column is shown in the human-readable table.
#[derive(Debug, Clone, Copy)]
pub enum Style {
    Plain,
    Fixed(usize),
    Sci,
}

#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub style: Style,
}

pub fn col(name: impl Into<String>, style: Style) -> Column {
    Column {
        name: name.into(),
        style,
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    /// Schema tag of the result columns, bumped whenever they change.
    pub schema: &'static str,
    pub config: Value,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    pub diagnostics: Vec<String>,
}

impl Report {
    pub fn write(&self, format: Format, out: &mut dyn Write) -> io::Result<()> {
        match format {
            Format::Table => self.write_table(out),
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }

    fn header(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "# schema: {}", self.schema)?;
        writeln!(out, "# config: {}", self.config)?;
        for d in &self.diagnostics {
            writeln!(out, "# warning: {d}")?;
        }
        Ok(())
    }

    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        self.header(out)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| match c {
                Cell::Num(x) => sig17(*x),
                Cell::Int(n) => n.to_string(),
                Cell::Text(s) => s.clone(),
                Cell::Empty => String::new(),
            }))?;
        }
        w.flush()
    }

    fn write_json(&self, out: &mut dyn Write) -> io::Result<()> {
        let results: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> =
                    self.columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| {
                            let v = match v {
                                Cell::Num(x) => serde_json::Number::from_f64(*x)
                                    .map_or(Value::Null, Value::Number),
                                Cell::Int(n) => Value::from(*n),
                                Cell::Text(s) => Value::from(s.as_str()),
                                Cell::Empty => Value::Null,
                            };
                            (c.name.clone(), v)
                        })
                        .collect();
                Value::Object(obj)
            })
            .collect();
        let doc = serde_json::json!({
            "schema": self.schema,
            "config": self.config,
            "results": results,
            "diagnostics": self.diagnostics,
        });
        serde_json::to_writer_pretty(&mut *out, &doc)?;
        writeln!(out)
    }

    fn write_table(&self, out: &mut dyn Write) -> io::Result<()> {
        self.header(out)?;
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.columns)
                    .map(|(c, col)| match (c, col.style) {
                        (Cell::Num(x), _) if !x.is_finite() => x.to_string(),
                        (Cell::Num(x), Style::Fixed(d)) => format!("{x:.d$}"),
                        (Cell::Num(x), Style::Sci) => format!("{x:.3e}"),
                        (Cell::Num(x), Style::Plain) => x.to_string(),
                        (Cell::Int(n), _) => n.to_string(),
                        (Cell::Text(s), _) => s.clone(),
                        (Cell::Empty, _) => "-".into(),
                    })
                    .collect()
            })
            .collect();
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                cells
                    .iter()
                    .map(|r| r[j].len())
                    .fold(c.name.len(), usize::max)
            })
            .collect();
        let line = |items: Vec<&str>| {
            items
                .iter()
                .zip(&widths)
                .map(|(s, w)| format!("{s:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(
            out,
            "{}",
            line(self.columns.iter().map(|c| c.name.as_str()).collect())
        )?;
        for row in &cells {
            writeln!(out, "{}", line(row.iter().map(String::as_str).collect()))?;
        }
        Ok(())
    }
}

/// `x` with 17 significant digits, which round-trips any double.
pub fn sig17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return x.to_string();
    }
    let e = x.abs().log10().floor() as i32;
    if (-5..16).contains(&e) {
        format!("{:.*}", (16 - e) as usize, x)
    } else {
        format!("{x:.16e}")
    }
}
