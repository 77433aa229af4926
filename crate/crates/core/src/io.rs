//! CSV reading and writing of numeric tables.

use std::io::{Read, Write};

use crate::error::{MphError, Result};
use crate::sampler::SampleMatrix;

/// A header plus rows of floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Drops column `c` from header and rows.
    pub fn drop_column(&mut self, c: usize) {
        self.header.remove(c);
        for r in &mut self.rows {
            r.remove(c);
        }
    }

    pub fn into_sample(self) -> Result<SampleMatrix> {
        if self.rows.is_empty() {
            return Err(MphError::InvalidArgument("no data rows".into()));
        }
        for (r, row) in self.rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(MphError::Parse {
                        row: r + 1,
                        column: c + 1,
                        message: format!("observations must be finite and > 0, got {v}"),
                    });
                }
            }
        }
        SampleMatrix::from_rows(&self.rows)
    }
}

/// Reads a comma-separated table with a header line. Rows and columns in
/// error messages are 1-based data-row and column numbers.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| MphError::Io(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(MphError::Parse {
            row: 0,
            column: 0,
            message: "missing header line".into(),
        });
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MphError::Parse {
            row: r + 1,
            column: 0,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(MphError::Parse {
                row: r + 1,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>().map_err(|_| MphError::Parse {
                    row: r + 1,
                    column: c + 1,
                    message: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Shortest representation that parses back to the same double.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

/// Writes a header and rows with lossless float formatting.
pub fn write_table<W: Write>(writer: W, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| MphError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(io)?;
    }
    w.flush().map_err(|e| MphError::Io(e.to_string()))
}

/// `x1,…,xd` header followed by the sample rows.
pub fn write_sample<W: Write>(writer: W, sample: &SampleMatrix) -> Result<()> {
    let header: Vec<String> = (1..=sample.ncols()).map(|i| format!("x{i}")).collect();
    write_table(writer, &header, sample.rows().map(<[f64]>::to_vec))
}
