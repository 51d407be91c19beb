//! Tables written by the CLI: `#` metadata lines followed by CSV, or one JSON
//! document. Floats are printed with 17 significant digits.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Formats with 17 significant digits; integral values and non-finite values
/// keep a plain spelling.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.16e}")
}

impl Value {
    fn render(&self) -> String {
        match self {
            Value::Float(v) => format_float(*v),
            Value::Int(v) => v.to_string(),
            Value::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            metadata: crate::convention_metadata(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Value>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Shape(format!("row of {} values for {} columns", row.len(), self.columns.len())));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Invalid(format!("write failed: {e}"));
        writeln!(w, "# experiment: {}", self.name).map_err(io)?;
        for (k, v) in &self.metadata {
            writeln!(w, "# {k}: {v}").map_err(io)?;
        }
        let mut csv = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        csv.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            csv.write_record(row.iter().map(Value::render)).map_err(err)?;
        }
        csv.flush().map_err(|e| Error::Invalid(format!("write failed: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// JSON document with metadata, columns and rows as objects.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let obj = self
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| {
                        let j = match v {
                            Value::Float(x) if x.is_finite() => serde_json::json!(x),
                            Value::Float(x) => serde_json::json!(format_float(*x)),
                            Value::Int(i) => serde_json::json!(i),
                            Value::Text(s) => serde_json::json!(s),
                        };
                        (c.clone(), j)
                    })
                    .collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        let meta: serde_json::Map<String, serde_json::Value> =
            self.metadata.iter().map(|(k, v)| (k.clone(), serde_json::json!(v))).collect();
        serde_json::json!({ "experiment": self.name, "metadata": meta, "columns": self.columns, "rows": rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for &v in &[std::f64::consts::PI, -1e-300, 123456.789, 0.1] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_float(0.0), "0");
    }

    #[test]
    fn csv_has_metadata_and_header() {
        let mut t = Table::new("demo", &["a", "b"]);
        t.meta("K", 10);
        t.push(vec![1.5.into(), "x".into()]).unwrap();
        assert!(t.push(vec![1.0.into()]).is_err());
        let s = t.to_csv_string().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# experiment: demo");
        assert!(lines.contains(&"# K: 10"));
        assert!(lines.contains(&"a,b"));
        assert!(lines.last().unwrap().starts_with("1.5000000000000000e0,x"));
    }
}
