//! Plain CSV / JSON helpers shared by the library and the command line.

use serde::Serialize;

use crate::{Error, Result};

/// A numeric CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Column-major values.
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.headers.iter().position(|h| h == name).map(|k| self.columns[k].clone())
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }
}

/// Parses a numeric CSV with a header row; errors name the offending row.
pub fn read_table(text: &str) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Input(format!("unreadable CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Input("CSV input is empty".into()));
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for (k, record) in reader.records().enumerate() {
        // header is line 1
        let row = k + 2;
        let record = record.map_err(|e| Error::Input(format!("row {row}: {e}")))?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Input(format!("row {row}, column `{}`: `{field}` is not a number", headers[c])))?;
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Input("CSV input has no data rows".into()));
    }
    Ok(Table { headers, columns })
}

/// Two named (or the first two) columns as (x, y) pairs.
pub fn read_xy(text: &str, x: Option<&str>, y: Option<&str>) -> Result<Vec<(f64, f64)>> {
    let table = read_table(text)?;
    let pick = |name: Option<&str>, default: usize| -> Result<Vec<f64>> {
        match name {
            Some(n) => table.column(n).ok_or_else(|| Error::Input(format!("no column named `{n}`"))),
            None => table
                .columns
                .get(default)
                .cloned()
                .ok_or_else(|| Error::Input(format!("CSV needs at least {} columns", default + 1))),
        }
    };
    let (xs, ys) = (pick(x, 0)?, pick(y, 1)?);
    Ok(xs.into_iter().zip(ys).collect())
}

/// Renders rows under a header; floats use the shortest round-trip form.
pub fn write_csv<R: AsRef<[f64]>>(headers: &[&str], rows: impl IntoIterator<Item = R>) -> String {
    let mut out = headers.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.as_ref().iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
