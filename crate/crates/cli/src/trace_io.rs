//! Binary trace files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic     4 bytes  "SQZT"
//! version   u32      currently 1
//! rate      f64      sample rate in Hz
//! quad      u8       0 = amplitude, 1 = phase
//! count     u64      number of samples
//! samples   count * f64
//! ```
//!
//! Reads re-validate everything a [`Trace`] guarantees: the format version,
//! the quadrature tag, finite samples, and an exact byte count (a truncated
//! or padded file is an error, never a partial trace).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use sqzcomb_core::{Quadrature, Trace};

pub const MAGIC: [u8; 4] = *b"SQZT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("not a trace file: expected magic {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported trace format version: expected {expected}, found {found}")]
    UnsupportedVersion { expected: u32, found: u32 },
    #[error("unknown quadrature tag {0} (expected 0 or 1)")]
    BadQuadrature(u8),
    #[error("file ends mid-record: {0} of {1} samples present")]
    Truncated(u64, u64),
    #[error("{0} trailing bytes after the last sample")]
    TrailingBytes(u64),
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn quadrature_tag(quadrature: Quadrature) -> u8 {
    match quadrature {
        Quadrature::Amplitude => 0,
        Quadrature::Phase => 1,
    }
}

pub fn write_trace(path: &Path, trace: &Trace) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&trace.sample_rate_hz.to_le_bytes())?;
    w.write_all(&[quadrature_tag(trace.quadrature)])?;
    w.write_all(&(trace.samples.len() as u64).to_le_bytes())?;
    for &x in &trace.samples {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_trace(path: &Path) -> Result<Trace, TraceIoError> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(TraceIoError::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }

    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf)?;
    let version = u32::from_le_bytes(u32_buf);
    if version != VERSION {
        return Err(TraceIoError::UnsupportedVersion {
            expected: VERSION,
            found: version,
        });
    }

    let mut f64_buf = [0u8; 8];
    r.read_exact(&mut f64_buf)?;
    let sample_rate_hz = f64::from_le_bytes(f64_buf);

    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let quadrature = match tag[0] {
        0 => Quadrature::Amplitude,
        1 => Quadrature::Phase,
        other => return Err(TraceIoError::BadQuadrature(other)),
    };

    let mut u64_buf = [0u8; 8];
    r.read_exact(&mut u64_buf)?;
    let count = u64::from_le_bytes(u64_buf);

    let mut samples = Vec::with_capacity(count as usize);
    for i in 0..count {
        if let Err(e) = r.read_exact(&mut f64_buf) {
            if e.kind() == ErrorKind::UnexpectedEof {
                return Err(TraceIoError::Truncated(i, count));
            }
            return Err(e.into());
        }
        let x = f64::from_le_bytes(f64_buf);
        if !x.is_finite() {
            return Err(TraceIoError::NonFinite(i as usize));
        }
        samples.push(x);
    }

    let trailing = io::copy(&mut r, &mut io::sink())?;
    if trailing > 0 {
        return Err(TraceIoError::TrailingBytes(trailing));
    }

    Ok(Trace {
        sample_rate_hz,
        quadrature,
        samples,
    })
}
