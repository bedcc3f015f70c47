//! File formats: measure, observation, factor dump, trace and metrics tables.
//!
//! Every float is written with 17 significant digits so that files round-trip exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64;

use crate::solver::TraceRow;
use crate::{CMatrix, CVector, DiscreteMeasure, Error, Result};

/// Header of the binary factor dump.
pub const FACTOR_MAGIC: &[u8; 16] = b"OFFGRIDSR-FACTOR";

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("line {line}: `{}` is not a number", s.trim())))
}

fn with_path<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(with_path(path, File::create(path))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(with_path(path, File::open(path))?))
}

/// Non-empty data lines after the header, with 1-based line numbers.
fn data_lines<R: BufRead>(reader: R) -> Result<(String, Vec<(usize, String)>)> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Parse("empty file, expected a header".into())),
    };
    let mut rows = Vec::new();
    for (i, l) in lines {
        let l = l?;
        if !l.trim().is_empty() {
            rows.push((i + 1, l));
        }
    }
    Ok((header.trim().to_string(), rows))
}

fn fields(line: &str, n: usize, lineno: usize) -> Result<Vec<f64>> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != n {
        return Err(Error::Parse(format!("line {lineno}: expected {n} fields, found {}", parts.len())));
    }
    parts.iter().map(|p| parse_f64(p, lineno)).collect()
}

// measures

pub fn write_measure<W: Write>(mut w: W, m: &DiscreteMeasure) -> Result<()> {
    let mut header: Vec<String> = (1..=m.dim()).map(|i| format!("x{i}")).collect();
    header.extend(["amp_re".into(), "amp_im".into()]);
    writeln!(w, "{}", header.join(","))?;
    for (x, a) in m.positions().iter().zip(m.amplitudes()) {
        let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        row.push(fmt_f64(a.re));
        row.push(fmt_f64(a.im));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a measure; positions are reduced mod 1 and duplicates merged.
pub fn read_measure<R: BufRead>(r: R) -> Result<DiscreteMeasure> {
    let (header, rows) = data_lines(r)?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().checked_sub(2).filter(|&d| d >= 1).ok_or_else(|| Error::Parse(format!("bad measure header `{header}`")))?;
    let expected: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["amp_re".into(), "amp_im".into()]).collect();
    if cols != expected {
        return Err(Error::Parse(format!("bad measure header `{header}`, expected `{}`", expected.join(","))));
    }
    let mut positions = Vec::with_capacity(rows.len());
    let mut amps = Vec::with_capacity(rows.len());
    for (lineno, line) in rows {
        let v = fields(&line, d + 2, lineno)?;
        positions.push(v[..d].to_vec());
        amps.push(Complex64::new(v[d], v[d + 1]));
    }
    DiscreteMeasure::new(d, positions, amps)
}

pub fn write_measure_file(path: &Path, m: &DiscreteMeasure) -> Result<()> {
    let mut w = create(path)?;
    write_measure(&mut w, m)?;
    with_path(path, w.flush())
}

pub fn read_measure_file(path: &Path) -> Result<DiscreteMeasure> {
    read_measure(open(path)?)
}

// complex vectors (observations)

pub fn write_vector<W: Write>(mut w: W, v: &CVector) -> Result<()> {
    writeln!(w, "re,im")?;
    for z in v.iter() {
        writeln!(w, "{},{}", fmt_f64(z.re), fmt_f64(z.im))?;
    }
    Ok(())
}

pub fn read_vector<R: BufRead>(r: R) -> Result<CVector> {
    let (header, rows) = data_lines(r)?;
    if header.replace(' ', "") != "re,im" {
        return Err(Error::Parse(format!("bad vector header `{header}`, expected `re,im`")));
    }
    let vals = rows
        .iter()
        .map(|(n, l)| fields(l, 2, *n).map(|v| Complex64::new(v[0], v[1])))
        .collect::<Result<Vec<_>>>()?;
    Ok(CVector::from_vec(vals))
}

pub fn write_vector_file(path: &Path, v: &CVector) -> Result<()> {
    let mut w = create(path)?;
    write_vector(&mut w, v)?;
    with_path(path, w.flush())
}

pub fn read_vector_file(path: &Path) -> Result<CVector> {
    read_vector(open(path)?)
}

// factor dumps

/// Binary dump: magic, `rows` and `cols` as little-endian u64, then the entries in
/// column-major order as interleaved little-endian `re, im` doubles.
pub fn write_factor_binary<W: Write>(mut w: W, u: &CMatrix) -> Result<()> {
    w.write_all(FACTOR_MAGIC)?;
    w.write_u64::<LittleEndian>(u.nrows() as u64)?;
    w.write_u64::<LittleEndian>(u.ncols() as u64)?;
    for z in u.iter() {
        w.write_f64::<LittleEndian>(z.re)?;
        w.write_f64::<LittleEndian>(z.im)?;
    }
    Ok(())
}

pub fn read_factor_binary<R: Read>(mut r: R) -> Result<CMatrix> {
    let mut magic = [0u8; 16];
    r.read_exact(&mut magic)?;
    if &magic != FACTOR_MAGIC {
        return Err(Error::Parse("not a factor dump (bad magic header)".into()));
    }
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let n = rows.checked_mul(cols).ok_or_else(|| Error::Parse("factor dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        data.push(Complex64::new(re, im));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Parse("trailing bytes after factor data".into()));
    }
    Ok(CMatrix::from_vec(rows, cols, data))
}

/// Text fallback: header `row,col,re,im`, then one entry per line in column-major order.
/// A first line `# shape,R,C` records the shape so that zero-column factors survive.
pub fn write_factor_csv<W: Write>(mut w: W, u: &CMatrix) -> Result<()> {
    writeln!(w, "# shape,{},{}", u.nrows(), u.ncols())?;
    writeln!(w, "row,col,re,im")?;
    for c in 0..u.ncols() {
        for r in 0..u.nrows() {
            let z = u[(r, c)];
            writeln!(w, "{r},{c},{},{}", fmt_f64(z.re), fmt_f64(z.im))?;
        }
    }
    Ok(())
}

pub fn read_factor_csv<R: BufRead>(r: R) -> Result<CMatrix> {
    let mut lines = r.lines();
    let shape = lines.next().ok_or_else(|| Error::Parse("empty factor file".into()))??;
    let dims: Vec<&str> = shape.trim().strip_prefix("# shape,").map(|s| s.split(',').collect()).unwrap_or_default();
    let parse_dim = |s: &str| s.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad shape line `{shape}`")));
    if dims.len() != 2 {
        return Err(Error::Parse(format!("bad shape line `{shape}`")));
    }
    let (rows, cols) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    let rest: Vec<String> = lines.collect::<std::io::Result<_>>()?;
    let (header, body) = data_lines(rest.join("\n").as_bytes())?;
    if header.replace(' ', "") != "row,col,re,im" {
        return Err(Error::Parse(format!("bad factor header `{header}`")));
    }
    let mut u = CMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (n, l) in body {
        let v = fields(&l, 4, n + 1)?;
        let (i, j) = (v[0] as usize, v[1] as usize);
        if v[0] < 0.0 || v[1] < 0.0 || v[0].fract() != 0.0 || v[1].fract() != 0.0 || i >= rows || j >= cols {
            return Err(Error::Parse(format!("line {}: entry ({}, {}) outside a {rows}x{cols} factor", n + 1, v[0], v[1])));
        }
        u[(i, j)] = Complex64::new(v[2], v[3]);
        seen += 1;
    }
    if seen != rows * cols {
        return Err(Error::Parse(format!("expected {} entries, found {seen}", rows * cols)));
    }
    Ok(u)
}

/// Writes the binary dump, or the CSV fallback when the extension is `.csv`.
pub fn write_factor_file(path: &Path, u: &CMatrix) -> Result<()> {
    let mut w = create(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        write_factor_csv(&mut w, u)?;
    } else {
        write_factor_binary(&mut w, u)?;
    }
    with_path(path, w.flush())
}

/// Reads either format, recognised by the magic header.
pub fn read_factor_file(path: &Path) -> Result<CMatrix> {
    let bytes = with_path(path, std::fs::read(path))?;
    if bytes.starts_with(FACTOR_MAGIC) {
        read_factor_binary(bytes.as_slice())
    } else {
        read_factor_csv(bytes.as_slice())
    }
}

// tables

pub fn write_trace<W: Write>(mut w: W, trace: &[TraceRow]) -> Result<()> {
    writeln!(w, "iter,objective,lambda1,rank,fft_calls,wall_ms")?;
    for t in trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            t.iter,
            fmt_f64(t.objective),
            fmt_f64(t.lambda1),
            t.rank,
            t.fft_calls,
            fmt_f64(t.wall_ms)
        )?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<TraceRow>> {
    let (header, rows) = data_lines(r)?;
    if header != "iter,objective,lambda1,rank,fft_calls,wall_ms" {
        return Err(Error::Parse(format!("bad trace header `{header}`")));
    }
    rows.iter()
        .map(|(n, l)| {
            let v = fields(l, 6, *n)?;
            Ok(TraceRow {
                iter: v[0] as usize,
                objective: v[1],
                lambda1: v[2],
                rank: v[3] as usize,
                fft_calls: v[4] as u64,
                wall_ms: v[5],
            })
        })
        .collect()
}

pub fn write_trace_file(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = create(path)?;
    write_trace(&mut w, trace)?;
    with_path(path, w.flush())
}

/// One row of a metrics report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    /// Matching tolerance, when the metric has one.
    pub delta: Option<f64>,
    pub notes: String,
}

impl MetricRow {
    pub fn new(metric: &str, value: f64, delta: Option<f64>, notes: &str) -> Self {
        Self { metric: metric.into(), value, delta, notes: notes.into() }
    }
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_metrics<W: Write>(mut w: W, rows: &[MetricRow]) -> Result<()> {
    writeln!(w, "metric,value,delta,notes")?;
    for r in rows {
        let delta = r.delta.map(fmt_f64).unwrap_or_default();
        writeln!(w, "{},{},{},{}", csv_text(&r.metric), fmt_f64(r.value), delta, csv_text(&r.notes))?;
    }
    Ok(())
}

pub fn write_metrics_file(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = create(path)?;
    write_metrics(&mut w, rows)?;
    with_path(path, w.flush())
}

/// Generic numeric table with a header; integer-valued cells are written as integers.
pub fn write_table<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Shape(format!("row of {} cells under a {}-column header", r.len(), header.len())));
        }
        let cells: Vec<String> = r
            .iter()
            .map(|&v| if v.fract() == 0.0 && v.abs() < 1e15 { format!("{}", v as i64) } else { fmt_f64(v) })
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
