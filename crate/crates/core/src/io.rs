//! Plain comma-separated file formats.
//!
//! Codebook:
//!
//! ```text
//! K,M,N,constellation,seed,p_av
//! 4,2,1,qam16,7,4
//! re,im,re,im,...        (M rows of K interleaved complex entries)
//! ```
//!
//! Ensemble: an `ensemble,N,K` line, then per matrix a `matrix,n,K` line
//! followed by `K` rows of `K` interleaved complex entries (row-major).
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::bound::BoundReport;
use crate::codebook::{block_partition, Codebook, Codeword, ConstellationSpec};
use crate::error::{Error, Result};
use crate::experiment::CcdfCurve;
use crate::linalg::CMatrix;
use crate::optimizer::{OptimizerTrace, UnitaryEnsemble};

const CODEBOOK_HEADER: &str = "K,M,N,constellation,seed,p_av";

fn write_complex_row<W: Write + ?Sized>(
    out: &mut W,
    row: impl Iterator<Item = Complex64>,
) -> std::io::Result<()> {
    let mut first = true;
    for z in row {
        if !first {
            out.write_all(b",")?;
        }
        first = false;
        write!(out, "{},{}", z.re, z.im)?;
    }
    out.write_all(b"\n")
}

pub fn write_codebook<W: Write + ?Sized>(book: &Codebook, out: &mut W) -> std::io::Result<()> {
    let is_blocks = block_partition(book.len(), book.num_subsets())
        .map(|p| p == book.partition())
        .unwrap_or(false);
    if !is_blocks {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "only consecutive-block partitions can be serialized",
        ));
    }
    writeln!(out, "{CODEBOOK_HEADER}")?;
    let constellation = book
        .constellation()
        .map_or_else(|| "custom".to_string(), |c| c.to_string());
    let seed = book
        .seed()
        .map_or_else(|| "-".to_string(), |s| s.to_string());
    writeln!(
        out,
        "{},{},{},{},{},{}",
        book.dim(),
        book.len(),
        book.num_subsets(),
        constellation,
        seed,
        book.p_av()
    )?;
    for c in book.codewords() {
        write_complex_row(out, c.symbols().iter().copied())?;
    }
    Ok(())
}

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::io::Lines<BufReader<File>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path,
            inner: BufReader::new(file).lines().enumerate(),
            line: 0,
        })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<String> {
        loop {
            match self.inner.next() {
                Some((i, Ok(l))) => {
                    self.line = i + 1;
                    if !l.trim().is_empty() {
                        return Ok(l);
                    }
                }
                Some((_, Err(e))) => return Err(Error::io(self.path, e)),
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn complex_row(&mut self, k: usize) -> Result<Vec<Complex64>> {
        let line = self.next_line()?;
        let values: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| self.err(format!("bad number: {e}")))?;
        if values.len() != 2 * k {
            return Err(self.err(format!("expected {} values, found {}", 2 * k, values.len())));
        }
        Ok(values
            .chunks(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect())
    }

    fn usize_field(&self, field: &str, name: &str) -> Result<usize> {
        field
            .trim()
            .parse()
            .map_err(|_| self.err(format!("bad {name} `{field}`")))
    }
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let mut lines = Lines::open(path)?;
    let header = lines.next_line()?;
    if header.trim() != CODEBOOK_HEADER {
        return Err(lines.err(format!("expected header `{CODEBOOK_HEADER}`")));
    }
    let meta = lines.next_line()?;
    let fields: Vec<&str> = meta.split(',').collect();
    if fields.len() != 6 {
        return Err(lines.err("expected 6 header values"));
    }
    let k = lines.usize_field(fields[0], "K")?;
    let m = lines.usize_field(fields[1], "M")?;
    let n = lines.usize_field(fields[2], "N")?;
    let origin = match (fields[3].trim(), fields[4].trim()) {
        ("custom", _) | (_, "-") => None,
        (c, s) => Some((
            c.parse::<ConstellationSpec>()
                .map_err(|e| lines.err(e.to_string()))?,
            s.parse::<u64>()
                .map_err(|_| lines.err(format!("bad seed `{s}`")))?,
        )),
    };
    let stored_p_av: f64 = fields[5]
        .trim()
        .parse()
        .map_err(|_| lines.err(format!("bad p_av `{}`", fields[5])))?;
    let mut codewords = Vec::with_capacity(m);
    for _ in 0..m {
        let row = lines.complex_row(k)?;
        codewords.push(Codeword::new(row).map_err(|e| lines.err(e.to_string()))?);
    }
    let book = Codebook::with_blocks(codewords, n)?;
    if (book.p_av() - stored_p_av).abs() > 1e-12 * stored_p_av.abs().max(1.0) {
        return Err(lines.err(format!(
            "stored p_av {stored_p_av} disagrees with the codewords ({})",
            book.p_av()
        )));
    }
    Ok(match origin {
        Some((c, s)) => book.with_origin(c, s),
        None => book,
    })
}

pub fn write_ensemble<W: Write + ?Sized>(
    ensemble: &UnitaryEnsemble,
    out: &mut W,
) -> std::io::Result<()> {
    let k = ensemble.dim();
    writeln!(out, "ensemble,{},{}", ensemble.len(), k)?;
    for (n, w) in ensemble.matrices().iter().enumerate() {
        writeln!(out, "matrix,{n},{k}")?;
        for r in 0..k {
            write_complex_row(out, (0..k).map(|c| w[(r, c)]))?;
        }
    }
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<UnitaryEnsemble> {
    let mut lines = Lines::open(path)?;
    let head = lines.next_line()?;
    let fields: Vec<&str> = head.split(',').collect();
    if fields.len() != 3 || fields[0].trim() != "ensemble" {
        return Err(lines.err("expected `ensemble,N,K`"));
    }
    let count = lines.usize_field(fields[1], "N")?;
    let k = lines.usize_field(fields[2], "K")?;
    let mut matrices = Vec::with_capacity(count);
    for expected in 0..count {
        let head = lines.next_line()?;
        let fields: Vec<&str> = head.split(',').collect();
        if fields.len() != 3 || fields[0].trim() != "matrix" {
            return Err(lines.err("expected `matrix,n,K`"));
        }
        if lines.usize_field(fields[1], "n")? != expected || lines.usize_field(fields[2], "K")? != k
        {
            return Err(lines.err(format!("expected `matrix,{expected},{k}`")));
        }
        let mut w = CMatrix::zeros(k, k);
        for r in 0..k {
            for (c, z) in lines.complex_row(k)?.into_iter().enumerate() {
                w[(r, c)] = z;
            }
        }
        matrices.push(w);
    }
    UnitaryEnsemble::new(matrices)
}

pub fn write_trace<W: Write + ?Sized>(trace: &OptimizerTrace, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "iter,f,max_unitarity_err,max_dw")?;
    writeln!(out, "0,{},0,0", trace.initial_objective)?;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{}",
            r.iteration, r.objective, r.max_unitarity_error, r.max_step
        )?;
    }
    Ok(())
}

pub fn write_bound_sweep<W: Write + ?Sized>(
    rows: &[BoundReport],
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "gamma,upper,lower,quartic_total")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.gamma, r.upper, r.lower, r.quartic_total
        )?;
    }
    Ok(())
}

pub fn write_ccdf<W: Write + ?Sized>(curve: &CcdfCurve, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "iteration,gamma,gamma_db,ccdf")?;
    for ((g, db), p) in curve
        .gamma
        .iter()
        .zip(&curve.gamma_db)
        .zip(&curve.probability)
    {
        let iter = curve
            .iteration
            .map_or_else(|| "-".to_string(), |i| i.to_string());
        writeln!(out, "{iter},{g},{db},{p}")?;
    }
    Ok(())
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}
