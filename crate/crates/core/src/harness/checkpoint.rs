//! Binary checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! "VPFP" | version u32 | d u32 | K u32 | M u32 | N u32 | t f64 | (re f64, im f64) × n_k·n_m
//! ```
//!
//! Coefficients follow the flat layout order (wavevector major, Hermite index minor).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::state::{Layout, SpectralState, StateError};
use crate::Complex64;

pub const MAGIC: [u8; 4] = *b"VPFP";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 4 + 4 * 5 + 8;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found} (expected {VERSION})")]
    BadVersion { found: u32 },
    #[error("checkpoint size mismatch: header implies {expected} bytes, file has {actual}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: SpectralState,
    pub sobolev_order: usize,
}

pub fn encode(state: &SpectralState, sobolev_order: usize, out: &mut impl Write) -> std::io::Result<()> {
    let layout = state.layout();
    out.write_all(&MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    for v in [
        layout.dim(),
        layout.grid.cutoff(),
        layout.basis.cutoff(),
        sobolev_order,
    ] {
        out.write_u32::<LittleEndian>(v as u32)?;
    }
    out.write_f64::<LittleEndian>(state.t)?;
    for c in &state.coeffs {
        out.write_f64::<LittleEndian>(c.re)?;
        out.write_f64::<LittleEndian>(c.im)?;
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let actual = bytes.len() as u64;
    if bytes.len() < HEADER_BYTES {
        return Err(CheckpointError::SizeMismatch {
            expected: HEADER_BYTES as u64,
            actual,
        });
    }
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion { found: version });
    }
    let dim = r.read_u32::<LittleEndian>()? as usize;
    let k = r.read_u32::<LittleEndian>()? as usize;
    let m = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let t = r.read_f64::<LittleEndian>()?;
    if !(1..=3).contains(&dim) {
        return Err(CheckpointError::InvalidHeader(format!("dimension {dim}")));
    }
    if k < 1 || k > 1 << 12 || m > 1 << 12 {
        return Err(CheckpointError::InvalidHeader(format!("cutoffs K = {k}, M = {m}")));
    }
    let n_k = (2 * k as u64 + 1).pow(dim as u32);
    let n_m = (m as u64 + 1).pow(dim as u32);
    let expected = HEADER_BYTES as u64 + 16 * n_k * n_m;
    if expected != actual {
        return Err(CheckpointError::SizeMismatch { expected, actual });
    }
    let layout = Arc::new(Layout::new(dim, k, m));
    let mut coeffs = Vec::with_capacity(layout.len());
    for _ in 0..layout.len() {
        let re = r.read_f64::<LittleEndian>()?;
        let im = r.read_f64::<LittleEndian>()?;
        coeffs.push(Complex64::new(re, im));
    }
    let state = SpectralState::from_coeffs(layout, t, coeffs)?;
    Ok(Checkpoint {
        state,
        sobolev_order: n,
    })
}

pub fn write_checkpoint(path: &Path, state: &SpectralState, sobolev_order: usize) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    encode(state, sobolev_order, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}
