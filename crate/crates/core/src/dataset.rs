//! Rectangular numeric tables stored column-major.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Dataset {
    /// Builds a dataset from columns. All columns must have the same length
    /// and contain no NaN.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::InvalidArgument(format!(
                    "column {j} has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|x| x.is_nan()) {
                return Err(Error::Ingest {
                    row: i,
                    column: j,
                    message: "missing value (NaN)".into(),
                });
            }
        }
        Ok(Dataset {
            names,
            columns,
            n_rows,
        })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let f = names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); f];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != f {
                return Err(Error::Ingest {
                    row: i,
                    column: r.len().min(f),
                    message: format!("expected {f} values, found {}", r.len()),
                });
            }
            for (c, x) in columns.iter_mut().zip(r) {
                c.push(*x);
            }
        }
        let mut ds = Self::from_columns(names, columns)?;
        ds.n_rows = rows.len();
        Ok(ds)
    }

    /// Empty table with the given column names.
    pub fn empty(names: Vec<String>) -> Self {
        let columns = vec![Vec::new(); names.len()];
        Dataset {
            names,
            columns,
            n_rows: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n_rows).map(|i| self.row(i))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// First `n` rows (or all when shorter).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.n_rows);
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[..n].to_vec()).collect(),
            n_rows: n,
        }
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let end = end.min(self.n_rows);
        let start = start.min(end);
        Dataset {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            n_rows: end - start,
        }
    }

    /// Appends columns at the end of the table.
    pub fn with_extra_columns(
        &self,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Dataset> {
        let mut all_names = self.names.clone();
        all_names.extend(names);
        let mut all_cols = self.columns.clone();
        all_cols.extend(columns);
        let mut ds = Dataset::from_columns(all_names, all_cols)?;
        if ds.columns.is_empty() {
            ds.n_rows = self.n_rows;
        }
        Ok(ds)
    }

    /// Parses CSV with a header row of feature names and a numeric body.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Ingest {
                row: 0,
                column: 0,
                message: e.to_string(),
            })?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let f = names.len();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); f];
        let mut n = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Ingest {
                row: i + 1,
                column: 0,
                message: e.to_string(),
            })?;
            if rec.len() != f {
                return Err(Error::Ingest {
                    row: i + 1,
                    column: rec.len().min(f),
                    message: format!("ragged row: expected {f} fields, found {}", rec.len()),
                });
            }
            for (j, cell) in rec.iter().enumerate() {
                let cell = cell.trim();
                let x: f64 = cell.parse().map_err(|_| Error::Ingest {
                    row: i + 1,
                    column: j,
                    message: format!("non-numeric cell `{cell}`"),
                })?;
                if x.is_nan() {
                    return Err(Error::Ingest {
                        row: i + 1,
                        column: j,
                        message: "missing value (NaN)".into(),
                    });
                }
                columns[j].push(x);
            }
            n += 1;
        }
        Ok(Dataset {
            names,
            columns,
            n_rows: n,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.names).map_err(io)?;
        for i in 0..self.n_rows {
            w.write_record(self.columns.iter().map(|c| fmt_f64(c[i])))
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    Dataset::read_csv(std::io::BufReader::new(file))
}

/// Shortest decimal that round-trips to the same `f64`; `-0` prints as `0`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_file() {
        let ds = Dataset::read_csv("f0\n0.0\n1.0\n".as_bytes()).unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_cols(), 1);
        assert_eq!(ds.column(0), &[0.0, 1.0]);
    }

    #[test]
    fn nan_cell_is_rejected() {
        let err = Dataset::read_csv("a,b\n1,2\n3,NaN\n".as_bytes()).unwrap_err();
        match err {
            Error::Ingest { row, column, .. } => assert_eq!((row, column), (2, 1)),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn ragged_and_non_numeric_rows() {
        assert!(matches!(
            Dataset::read_csv("a,b\n1,2\n3\n".as_bytes()),
            Err(Error::Ingest { row: 2, .. })
        ));
        assert!(matches!(
            Dataset::read_csv("a,b\n1,x\n".as_bytes()),
            Err(Error::Ingest {
                row: 1,
                column: 1,
                ..
            })
        ));
        assert!(matches!(
            Dataset::read_csv("a,b\n1,\n".as_bytes()),
            Err(Error::Ingest { .. })
        ));
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let ds = Dataset::from_rows(
            vec!["x".into(), "y".into()],
            &[vec![0.1, -3.0], vec![1e-300, 2.0 / 3.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn shortest_formatting() {
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(0.1 + 0.2), "0.30000000000000004");
    }
}
