//! Row-major numeric tables and their plain CSV form.
//!
//! CSV files carry one header row naming the columns. Empty cells read back
//! as NaN and NaN cells are written empty, so ragged per-user columns survive
//! a round trip.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            values: Vec::new(),
        }
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut t = Table::new(columns);
        for r in rows {
            t.push_row(r)?;
        }
        Ok(t)
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.columns.is_empty() {
            0
        } else {
            self.values.len() / self.columns.len()
        }
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols() {
            return Err(Error::Shape(format!(
                "row has {} values, table has {} columns",
                row.len(),
                self.n_cols()
            )));
        }
        self.values.extend_from_slice(row);
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.n_cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols().max(1))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Splits off the named column, returning `(rest, column)`.
    pub fn split_column(&self, name: &str) -> Result<(Table, Vec<f64>)> {
        let idx = self
            .column_index(name)
            .ok_or_else(|| Error::Format(format!("missing column {name:?}")))?;
        let keep: Vec<usize> = (0..self.n_cols()).filter(|&j| j != idx).collect();
        Ok((self.select(&keep), self.column(idx)))
    }

    /// Table restricted to the given column indices, in that order.
    pub fn select(&self, cols: &[usize]) -> Table {
        let mut out = Table::new(cols.iter().map(|&j| self.columns[j].clone()).collect());
        for r in self.rows() {
            out.values.extend(cols.iter().map(|&j| r[j]));
        }
        out
    }

    /// Table restricted to the given rows.
    pub fn take_rows(&self, rows: &[usize]) -> Table {
        let mut out = Table::new(self.columns.clone());
        for &i in rows {
            out.values.extend_from_slice(self.row(i));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in self.rows() {
            for (j, v) in r.iter().enumerate() {
                if j > 0 {
                    s.push(',');
                }
                if !v.is_nan() {
                    // `{:?}` prints the shortest repr that round-trips exactly.
                    let _ = write!(s, "{v:?}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Table> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
        let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
        let mut t = Table::new(columns);
        for (n, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|cell| {
                    let cell = cell.trim();
                    if cell.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        cell.parse::<f64>()
                            .map_err(|_| Error::Format(format!("line {}: bad number {cell:?}", n + 2)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            t.push_row(&row)
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))?;
        }
        Ok(t)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
        Table::parse_csv(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_blanks() {
        let t = Table::from_rows(
            vec!["a".into(), "b".into()],
            &[vec![0.1, f64::NAN], vec![-3e-300, 1.0 / 3.0]],
        )
        .unwrap();
        let back = Table::parse_csv(&t.to_csv()).unwrap();
        assert_eq!(back.columns, t.columns);
        assert!(back.row(0)[1].is_nan());
        assert_eq!(back.row(1), t.row(1));
        assert_eq!(back.row(0)[0], 0.1);
    }

    #[test]
    fn split_column() {
        let t = Table::from_rows(vec!["x".into(), "target".into(), "y".into()], &[vec![1.0, 2.0, 3.0]]).unwrap();
        let (rest, target) = t.split_column("target").unwrap();
        assert_eq!(rest.columns, vec!["x", "y"]);
        assert_eq!(rest.row(0), &[1.0, 3.0]);
        assert_eq!(target, vec![2.0]);
        assert!(t.split_column("nope").is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(Table::parse_csv("a,b\n1,2,3\n").is_err());
    }
}
