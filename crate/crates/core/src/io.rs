//! CSV persistence for matrices and chains.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! value read back is bitwise identical and reruns produce identical files.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sampler::{Chain, SpaceTag};

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: line as usize,
        message: message.into(),
    }
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        kind => parse_error(path, line, format!("{kind:?}")),
    }
}

fn parse_f64(path: &Path, line: u64, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("expected a number, found {field:?}")))
}

/// Writes a matrix with one CSV row per matrix row and no header.
pub fn write_matrix_csv(path: &Path, matrix: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols()).map(|j| matrix[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row = record.iter().map(|f| parse_f64(path, line, f)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a vector as a single column.
pub fn write_vector_csv(path: &Path, values: &[f64]) -> Result<()> {
    write_matrix_csv(path, &DMatrix::from_column_slice(values.len(), 1, values))
}

pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() > 1 {
        return Err(parse_error(path, 1, format!("expected one column, found {}", m.ncols())));
    }
    Ok(m.as_slice().to_vec())
}

/// Header of a chain file with `dim` coordinates.
pub fn chain_header(dim: usize) -> String {
    let mut cols = vec!["step".to_string()];
    cols.extend((0..dim).map(|j| format!("x{j}")));
    cols.push("log_density".into());
    cols.push("accepted".into());
    cols.join(",")
}

/// Row-by-row chain writer for incremental output.
pub struct ChainWriter {
    out: BufWriter<File>,
    dim: usize,
}

impl ChainWriter {
    /// Creates (or truncates) `path` and writes the header.
    pub fn create(path: &Path, dim: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", chain_header(dim))?;
        Ok(Self { out, dim })
    }

    /// Opens an existing chain file for appending after truncating it to
    /// `keep_bytes`.
    pub fn append(path: &Path, dim: usize, keep_bytes: u64) -> Result<Self> {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(keep_bytes)?;
        let mut out = BufWriter::new(file);
        use std::io::Seek;
        out.seek(std::io::SeekFrom::End(0))?;
        Ok(Self { out, dim })
    }

    pub fn write(&mut self, step: usize, state: &[f64], log_density: f64, accepted: bool) -> Result<()> {
        debug_assert_eq!(state.len(), self.dim);
        write!(self.out, "{step}")?;
        for v in state {
            write!(self.out, ",{v}")?;
        }
        writeln!(self.out, ",{log_density},{}", u8::from(accepted))?;
        Ok(())
    }

    /// Flushes buffered rows and returns the file length.
    pub fn flush(&mut self) -> Result<u64> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(self.out.get_ref().metadata()?.len())
    }
}

pub fn write_chain_csv(path: &Path, chain: &Chain) -> Result<()> {
    let mut w = ChainWriter::create(path, chain.dim())?;
    for k in 0..chain.len() {
        w.write(k, chain.state(k), chain.log_density()[k], chain.accepted()[k])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a chain file. Proposal variance, seed and space are not stored in
/// the CSV and are left as NaN, `None` and [`SpaceTag::Full`].
pub fn read_chain_csv(path: &Path) -> Result<Chain> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let width = headers.len();
    if width < 3
        || &headers[0] != "step"
        || &headers[width - 2] != "log_density"
        || &headers[width - 1] != "accepted"
    {
        return Err(parse_error(
            path,
            1,
            "header must be step,x0,...,log_density,accepted",
        ));
    }
    let dim = width - 3;
    let mut chain = Chain::new(dim, f64::NAN, None, SpaceTag::Full);
    let mut state = vec![0.0; dim];
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (j, s) in state.iter_mut().enumerate() {
            *s = parse_f64(path, line, &record[j + 1])?;
        }
        let log_density = parse_f64(path, line, &record[width - 2])?;
        let accepted = match record[width - 1].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(parse_error(path, line, format!("invalid accepted flag {other:?}"))),
        };
        chain.push(&state, log_density, accepted)?;
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::metropolis_hastings_seeded;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, 1.0 / 3.0, -2e-300, 1e300, f64::MIN_POSITIVE, 7.0]);
        write_matrix_csv(&path, &m).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }

    #[test]
    fn chain_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let chain = metropolis_hastings_seeded(|x| Ok(-x[0] * x[0] - x[1].abs()), &[0.0, 0.0], 200, 0.7, 9).unwrap();
        write_chain_csv(&path, &chain).unwrap();
        let back = read_chain_csv(&path).unwrap();
        assert_eq!(back.len(), 200);
        for k in 0..200 {
            assert_eq!(back.state(k), chain.state(k));
            assert_eq!(back.log_density()[k].to_bits(), chain.log_density()[k].to_bits());
            assert_eq!(back.accepted()[k], chain.accepted()[k]);
        }
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "step,x0,log_density,accepted\n0,1.0,-0.5,1\n1,abc,-0.5,0\n").unwrap();
        match read_chain_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&path, "0.5,1\n0.25\n").unwrap();
        match read_matrix_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_chain_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        write_chain_csv(&path, &Chain::new(3, 0.5, Some(1), SpaceTag::Active)).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "step,x0,x1,x2,log_density,accepted\n");
        assert!(read_chain_csv(&path).unwrap().is_empty());
    }
}
