//! Field images and report tables.
//!
//! Fields are written as binary PGM (P5), one pixel per element, top image
//! row first so the picture has the physical orientation. Values in
//! `[0, 1]` map to gray `255 (1 − v)`: 0 is white, 1 is black.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{check_len, Error, Result};
use crate::fe::Mesh;
use crate::robust::{ContinuationColumns, ReportRow};

/// Gray level convention, echoed into run metadata.
pub const PGM_CONVENTION: &str = "P5, one pixel per element, top row first, gray = round(255 * (1 - v)), v clamped to [0, 1]";

pub fn gray(v: f64) -> u8 {
    (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8
}

/// PGM bytes for a per-element field on an `nx × ny` grid stored
/// column-major (`e = i * ny + j`, `j` counted from the bottom).
pub fn encode_pgm(nx: usize, ny: usize, values: &[f64]) -> Result<Vec<u8>> {
    check_len("field", nx * ny, values.len())?;
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.reserve(nx * ny);
    for row in 0..ny {
        let j = ny - 1 - row;
        for i in 0..nx {
            out.push(gray(values[i * ny + j]));
        }
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, mesh: &Mesh, values: &[f64]) -> Result<()> {
    let bytes = encode_pgm(mesh.nx(), mesh.ny(), values)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Inverse of [`encode_pgm`]: `(nx, ny, values)` with values quantized to
/// multiples of 1/255.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |m: &str| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string()));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PGM header"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5) file"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("malformed PGM header"));
    let (nx, ny, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != nx * ny {
        return Err(bad("PGM pixel count does not match its header"));
    }
    let mut values = vec![0.0; nx * ny];
    for row in 0..ny {
        let j = ny - 1 - row;
        for i in 0..nx {
            values[i * ny + j] = 1.0 - data[row * nx + i] as f64 / 255.0;
        }
    }
    Ok((nx, ny, values))
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode_pgm(&fs::read(path)?)
}

pub const REPORT_COLUMNS: [&str; 5] = [
    "budget",
    "compliance_reference",
    "wc_topo_reference_delta",
    "nom_topo_worst_delta",
    "wc_topo_worst_delta",
];

pub const CONTINUATION_COLUMNS: [&str; 6] = [
    "nom_topo_worst_delta_contin",
    "nom_topo_worst_delta_direct",
    "nom_topo_worst_delta_inverse",
    "wc_topo_worst_delta_contin",
    "wc_topo_worst_delta_direct",
    "wc_topo_worst_delta_inverse",
];

fn pct(v: f64) -> String {
    format!("{v:+.6}")
}

/// Write report rows as CSV. Percent columns are signed decimals in
/// percent (`+7.250000` is 7.25 %). The continuation columns are present
/// when `with_continuation` is set; rows without them leave those cells
/// empty.
pub fn write_report<W: Write>(out: W, rows: &[ReportRow], with_continuation: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = REPORT_COLUMNS.to_vec();
    if with_continuation {
        header.extend(CONTINUATION_COLUMNS);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.budget.to_string(),
            format!("{:.12e}", r.compliance_reference),
            pct(r.wc_topo_reference_delta),
            pct(r.nom_topo_worst_delta),
            pct(r.wc_topo_worst_delta),
        ];
        if with_continuation {
            match r.continuation {
                Some(cols) => {
                    for c in cols {
                        rec.extend([pct(c.contin), pct(c.direct), pct(c.inverse)]);
                    }
                }
                None => rec.extend(std::iter::repeat_n(String::new(), 6)),
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_file(path: &Path, rows: &[ReportRow], with_continuation: bool) -> Result<()> {
    write_report(fs::File::create(path)?, rows, with_continuation)
}

/// Parse a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    let with_continuation = names.len() == REPORT_COLUMNS.len() + CONTINUATION_COLUMNS.len();
    if names[..REPORT_COLUMNS.len().min(names.len())] != REPORT_COLUMNS[..] {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected report header {names:?}"),
        )));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|_| {
                Error::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad number `{}` in column {}", &rec[k], names[k]),
                ))
            })
        };
        let continuation = if with_continuation && !rec[5].is_empty() {
            let col = |k: usize| -> Result<ContinuationColumns> {
                Ok(ContinuationColumns {
                    contin: num(k)?,
                    direct: num(k + 1)?,
                    inverse: num(k + 2)?,
                })
            };
            Some([col(5)?, col(8)?])
        } else {
            None
        };
        rows.push(ReportRow {
            budget: num(0)?,
            compliance_reference: num(1)?,
            wc_topo_reference_delta: num(2)?,
            nom_topo_worst_delta: num(3)?,
            wc_topo_worst_delta: num(4)?,
            continuation,
        });
    }
    Ok(rows)
}
