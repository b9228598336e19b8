//! Row-major data matrices and the two data containers passed between
//! modules: raw observations and exponential-margin observations.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, got: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::Dimension { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }
}

/// Observations on their original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub names: Vec<String>,
    pub values: Matrix,
}

impl RawData {
    pub fn new(names: Vec<String>, values: Matrix) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Dimension { expected: values.ncols(), got: names.len() });
        }
        if values.nrows() < 1 || values.ncols() < 2 {
            return Err(Error::Validation(format!(
                "need at least one row and two columns, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite entry at row {}, column `{}`",
                pos / values.ncols(),
                names[pos % values.ncols()]
            )));
        }
        Ok(Self { names, values })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let (names, values) = read_table(reader)?;
        Self::new(names, values)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(writer, &self.names, &self.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Transformed with fitted marginal models for these columns.
    Marginal(Vec<String>),
    /// Drawn on exponential margins directly.
    Synthetic(String),
}

/// Observations on standard exponential margins; every entry is finite and
/// strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpData {
    values: Matrix,
    provenance: Provenance,
}

impl ExpData {
    pub fn new(values: Matrix, provenance: Provenance) -> Result<Self> {
        if values.ncols() < 2 {
            return Err(Error::Validation("exponential-margin data need d >= 2".into()));
        }
        if let Some(pos) = values.as_slice().iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Validation(format!(
                "entry at row {}, column {} is not finite and positive",
                pos / values.ncols(),
                pos % values.ncols()
            )));
        }
        Ok(Self { values, provenance })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_names(&self) -> Vec<String> {
        match &self.provenance {
            Provenance::Marginal(names) => names.clone(),
            Provenance::Synthetic(_) => (1..=self.dim()).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self { values: self.values.select_rows(idx), provenance: self.provenance.clone() }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let (names, values) = read_table(reader)?;
        Self::new(values, Provenance::Marginal(names))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table(writer, &self.column_names(), &self.values)
    }
}

fn read_table<R: Read>(reader: R) -> Result<(Vec<String>, Matrix)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Validation(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                rec.len(),
                names.len()
            )));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Validation(format!("row {}, column `{}`: cannot parse `{field}`", i + 1, names[j]))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok((names.clone(), Matrix::new(rows, names.len(), data)?))
}

pub(crate) fn write_table<W: Write>(writer: W, names: &[String], m: &Matrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(names)?;
    for row in m.rows() {
        w.write_record(row.iter().map(|v| format_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that round-trips exactly.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let raw = RawData::new(
            vec!["a".into(), "b".into()],
            Matrix::from_rows(&[vec![0.1, 2.0 / 3.0], vec![1e-12, 123456.789]]).unwrap(),
        )
        .unwrap();
        let mut buf = Vec::new();
        raw.write_csv(&mut buf).unwrap();
        let back = RawData::read_csv(buf.as_slice()).unwrap();
        assert_eq!(raw, back);
    }

    #[test]
    fn rejects_non_positive_exp_data() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(ExpData::new(m, Provenance::Synthetic("t".into())).is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
        let text = "a,b\n1,2\n3,x\n";
        assert!(RawData::read_csv(text.as_bytes()).is_err());
    }
}
