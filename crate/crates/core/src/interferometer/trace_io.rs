//! Detector-trace file formats.
//!
//! CSV: header `time_s,v1_V,v2_V,control_on_flag`, one row per sample;
//! floats are written in shortest round-trip form, the flag is the control
//! level in [0, 1] (1 = fully on).
//!
//! Binary (`.ldph`), all integers little-endian:
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `LDPH`                           |
//! | 4      | 4    | format version (u32, currently 1)      |
//! | 8      | 4    | sample count N (u32)                   |
//! | 12     | 4    | sample period in picoseconds (u32)     |
//! | 16     | 17·N | records: v1 (f64), v2 (f64), level (u8)|
//!
//! The level byte is round(level·255). Sample times are rebuilt as
//! i·period; the binary form therefore requires uniform sampling on a whole
//! number of picoseconds.

use std::io::{Read, Write};
use std::path::Path;

use super::DetectorTrace;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LDPH";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
const RECORD_LEN: usize = 17;
const CSV_HEADER: [&str; 4] = ["time_s", "v1_V", "v2_V", "control_on_flag"];

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_csv_to<W: Write>(trace: &DetectorTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for i in 0..trace.len() {
        w.write_record([
            trace.times[i].to_string(),
            trace.v1[i].to_string(),
            trace.v2[i].to_string(),
            trace.control[i].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_csv_from<R: Read>(input: R) -> Result<DetectorTrace> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| Error::Format {
        offset: 0,
        reason: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Format {
            offset: 0,
            reason: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let (mut t, mut v1, mut v2, mut c) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Format {
            offset: e.position().map_or(0, |p| p.byte() as usize),
            reason: e.to_string(),
        })?;
        let offset = rec.position().map_or(0, |p| p.byte() as usize);
        if rec.len() != 4 {
            return Err(Error::Format {
                offset,
                reason: format!("expected 4 columns, got {}", rec.len()),
            });
        }
        let mut vals = [0.0; 4];
        for (k, field) in rec.iter().enumerate() {
            vals[k] = field.parse().map_err(|_| Error::Format {
                offset,
                reason: format!("column {} is not a number: {field:?}", CSV_HEADER[k]),
            })?;
        }
        t.push(vals[0]);
        v1.push(vals[1]);
        v2.push(vals[2]);
        c.push(vals[3]);
    }
    DetectorTrace::new(t, v1, v2, c)
}

/// Encodes a uniformly sampled trace in the binary format.
pub fn to_bytes(trace: &DetectorTrace) -> Result<Vec<u8>> {
    let dt = trace.sample_period();
    let ps = (dt * 1e12).round();
    if !(ps >= 1.0 && ps <= u32::MAX as f64) || (ps * 1e-12 - dt).abs() > 1e-6 * dt {
        return Err(Error::Argument(format!(
            "sample period {dt:e} s is not a whole number of picoseconds"
        )));
    }
    if trace.sampling_jitter() > 1e-6 {
        return Err(Error::Argument("binary traces require uniform sampling".into()));
    }
    let n = u32::try_from(trace.len()).map_err(|_| Error::Argument("trace too long".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * trace.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&(ps as u32).to_le_bytes());
    for i in 0..trace.len() {
        out.extend_from_slice(&trace.v1[i].to_le_bytes());
        out.extend_from_slice(&trace.v2[i].to_le_bytes());
        out.push((trace.control[i].clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<DetectorTrace> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len()),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "bad magic, expected LDPH".into(),
        });
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let n = word(8) as usize;
    let ps = word(12);
    if ps == 0 {
        return Err(Error::Format {
            offset: 12,
            reason: "zero sample period".into(),
        });
    }
    let need = HEADER_LEN + RECORD_LEN * n;
    if bytes.len() < need {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("truncated data: {n} samples need {need} bytes"),
        });
    }
    if bytes.len() > need {
        return Err(Error::Format {
            offset: need,
            reason: "trailing bytes after last record".into(),
        });
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let dt = ps as f64 * 1e-12;
    let (mut v1, mut v2, mut c) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let o = HEADER_LEN + RECORD_LEN * i;
        v1.push(f(o));
        v2.push(f(o + 8));
        c.push(bytes[o + 16] as f64 / 255.0);
    }
    DetectorTrace::uniform(dt, v1, v2, c)
}

pub fn write_csv(trace: &DetectorTrace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_csv_to(trace, std::io::BufWriter::new(file))
}

pub fn write_binary(trace: &DetectorTrace, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(trace)?).map_err(io_err)
}

/// Reads a trace in either format, recognizing the binary one by its magic.
pub fn read_trace(path: &Path) -> Result<DetectorTrace> {
    let bytes = std::fs::read(path).map_err(io_err)?;
    if bytes.starts_with(MAGIC) {
        from_bytes(&bytes)
    } else {
        read_csv_from(bytes.as_slice())
    }
}
