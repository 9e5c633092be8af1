//! Matrix persistence: CSV (`,` separator, `.` decimal, optional header) and
//! a flat little-endian binary format.
//!
//! Binary layout: the 8-byte magic `NOPTMAT\0`, a `u32` version, `u64` rows,
//! `u64` cols, then `rows·cols` little-endian `f64` values in row-major
//! order. CSV output uses the shortest decimal form that parses back to the
//! same `f64`, so a save/load round-trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MATRIX_MAGIC: &[u8; 8] = b"NOPTMAT\0";
pub const MATRIX_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.bin` selects the binary format; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => MatrixFormat::Binary,
            _ => MatrixFormat::Csv,
        }
    }
}

/// A CSV table: optional column names plus the numeric body.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: Matrix,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses CSV text. The first non-blank line is a header when any of its
/// fields is not a number. Blank lines and lines starting with `#` are
/// skipped.
pub fn parse_csv(text: &str, path: &Path) -> Result<Table> {
    let mut header = None;
    let mut cols = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if cols.is_none() && header.is_none() && parsed.iter().any(Option::is_none) {
            header = Some(fields.iter().map(|f| f.to_string()).collect::<Vec<_>>());
            cols = Some(fields.len());
            continue;
        }
        let expected = *cols.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {expected} fields, found {}", fields.len()),
            ));
        }
        for (field, value) in fields.iter().zip(parsed) {
            match value {
                Some(v) if v.is_finite() => values.push(v),
                Some(_) => return Err(parse_err(path, line_no, format!("non-finite value '{field}'"))),
                None => return Err(parse_err(path, line_no, format!("not a number: '{field}'"))),
            }
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    if rows == 0 {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(Table {
        header,
        data: Matrix::from_vec(rows, cols, values)?,
    })
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    parse_csv(&text, path)
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Shortest round-trip decimal text for `v`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

/// CSV text for `m`, with an optional header line.
pub fn csv_string(header: Option<&[&str]>, m: &Matrix) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: Option<&[&str]>, m: &Matrix) -> Result<()> {
    if let Some(h) = header {
        if h.len() != m.cols() {
            return Err(Error::shape("write_csv", format!("{} header names for {} columns", h.len(), m.cols())));
        }
    }
    fs::write(path, csv_string(header, m)).map_err(|e| io_context(path, e))
}

pub fn write_matrix_bin(w: &mut impl Write, m: &Matrix) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&MATRIX_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_bin(r: &mut impl Read, path: &Path) -> Result<Matrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| parse_err(path, 1, "truncated header"))?;
    if &magic != MATRIX_MAGIC {
        return Err(parse_err(path, 1, "not a matrix file (bad magic)"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4).map_err(|_| parse_err(path, 1, "truncated header"))?;
    let version = u32::from_le_bytes(b4);
    if version != MATRIX_VERSION {
        return Err(parse_err(path, 1, format!("unsupported version {version}")));
    }
    r.read_exact(&mut b8).map_err(|_| parse_err(path, 1, "truncated header"))?;
    let rows = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8).map_err(|_| parse_err(path, 1, "truncated header"))?;
    let cols = u64::from_le_bytes(b8) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| parse_err(path, 1, "dimensions overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(parse_err(
            path,
            1,
            format!("expected {count} values, found {} bytes", bytes.len()),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(parse_err(path, 1, format!("non-finite value at entry {i}")));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => write_csv(path, None, m),
        MatrixFormat::Binary => {
            let file = fs::File::create(path).map_err(|e| io_context(path, e))?;
            let mut w = BufWriter::new(file);
            write_matrix_bin(&mut w, m)?;
            w.flush()?;
            Ok(())
        }
    }
}

/// Loads a matrix, choosing the format from the extension.
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    load_matrix_as(path, MatrixFormat::from_path(path))
}

pub fn load_matrix_as(path: &Path, format: MatrixFormat) -> Result<Matrix> {
    match format {
        MatrixFormat::Csv => Ok(read_csv(path)?.data),
        MatrixFormat::Binary => {
            let mut file = fs::File::open(path).map_err(|e| io_context(path, e))?;
            read_matrix_bin(&mut file, path)
        }
    }
}

/// One function per non-comment line: `name, arity, expression`. Only the
/// first two commas separate fields, so expressions may contain commas.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionLine {
    pub name: String,
    pub arity: usize,
    pub expr: String,
    pub line: usize,
}

pub fn parse_function_file(text: &str, path: &Path) -> Result<Vec<FunctionLine>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.splitn(3, ',').map(str::trim).collect();
        if parts.len() != 3 || parts[0].is_empty() || parts[2].is_empty() {
            return Err(parse_err(path, idx + 1, "expected 'name, arity, expression'"));
        }
        let arity = parts[1]
            .parse::<usize>()
            .map_err(|_| parse_err(path, idx + 1, format!("bad arity '{}'", parts[1])))?;
        out.push(FunctionLine {
            name: parts[0].to_string(),
            arity,
            expr: parts[2].to_string(),
            line: idx + 1,
        });
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no functions defined"));
    }
    Ok(out)
}

pub fn read_function_file(path: &Path) -> Result<Vec<FunctionLine>> {
    let text = fs::read_to_string(path).map_err(|e| io_context(path, e))?;
    parse_function_file(&text, path)
}

/// `dir/name`, creating `dir` if needed.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| io_context(dir, e))?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem.csv")
    }

    #[test]
    fn small_csv() {
        let t = parse_csv("1,2\n3,4\n", p()).unwrap();
        assert_eq!(t.header, None);
        assert_eq!(t.data, Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    }

    #[test]
    fn header_and_comments() {
        let t = parse_csv("# produced by hand\nx, y\n\n0.5, -1e-3\n", p()).unwrap();
        assert_eq!(t.header, Some(vec!["x".to_string(), "y".to_string()]));
        assert_eq!(t.data.as_slice(), &[0.5, -1e-3]);
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let err = parse_csv("1,2\n3,4\n5\n", p()).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("expected 2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite_and_garbage() {
        assert!(matches!(parse_csv("1,NaN\n", p()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_csv("1,2\n3,inf\n", p()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_csv("1,2\n3,x\n", p()), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_csv("a,b\n", p()), Err(Error::Parse { .. })));
    }

    #[test]
    fn binary_rejects_bad_headers() {
        let mut buf = Vec::new();
        write_matrix_bin(&mut buf, &Matrix::filled(2, 2, 1.0)).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_matrix_bin(&mut bad.as_slice(), p()).is_err());
        let short = &buf[..buf.len() - 3];
        assert!(read_matrix_bin(&mut &short[..], p()).is_err());
        let mut nan = buf.clone();
        let n = nan.len();
        nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(read_matrix_bin(&mut nan.as_slice(), p()).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_rows(&[vec![0.1, 1.0 / 3.0, -2.5e-300], vec![f64::MAX, f64::MIN_POSITIVE, 7.0]]).unwrap();
        for name in ["m.csv", "m.bin"] {
            let path = dir.path().join(name);
            save_matrix(&path, &m).unwrap();
            let back = load_matrix(&path).unwrap();
            assert_eq!(back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        let missing = load_matrix(&dir.path().join("absent.csv")).unwrap_err();
        assert!(missing.to_string().contains("absent.csv"));
    }

    #[test]
    fn function_files() {
        let text = "# gobbi\nf1, 2, 1 - exp(-(x1^2))\ng, 2, atan2(x1, x2)\n";
        let lines = parse_function_file(text, p()).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].expr, "atan2(x1, x2)");
        assert_eq!(lines[1].line, 3);
        assert!(matches!(parse_function_file("f, two, x\n", p()), Err(Error::Parse { line: 1, .. })));
        assert!(parse_function_file("f, 1\n", p()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40), cols in 1usize..5) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let m = Matrix::from_vec(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let back = parse_csv(&csv_string(None, &m), p()).unwrap().data;
            let bits = |x: &Matrix| x.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&m));
        }
    }
}
