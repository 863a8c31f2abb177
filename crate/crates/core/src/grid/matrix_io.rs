//! Binary matrix files.
//!
//! Layout (little-endian): `b"TPGM"`, element type `u8` (0 = f32 posteriorgram,
//! 1 = u8 label), reserved `u8` = 0, version `u16` = 1, frames `u32`,
//! pitches `u32`, frame length `f64`, then `frames·pitches` elements, row-major.

use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use super::{FrameGrid, GridError, LabelMatrix, Posteriorgram};

const MAGIC: &[u8; 4] = b"TPGM";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;
/// Refuse payloads above 4 GiB.
const MAX_PAYLOAD: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum MatrixFormatError {
    #[error("bad magic {0:?}, expected \"TPGM\"")]
    BadMagic([u8; 4]),
    #[error("unknown element type {0}")]
    UnknownElementType(u8),
    #[error("reserved byte is {0}, expected 0")]
    BadReserved(u8),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("dimensions {frames}x{pitches} overflow the payload limit")]
    DimensionOverflow { frames: u32, pitches: u32 },
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error(transparent)]
    Invalid(#[from] GridError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Either matrix kind, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixFile {
    Posteriorgram(Posteriorgram),
    Labels(LabelMatrix),
}

impl MatrixFile {
    pub fn grid(&self) -> &FrameGrid {
        match self {
            MatrixFile::Posteriorgram(z) => z.grid(),
            MatrixFile::Labels(y) => y.grid(),
        }
    }
}

pub fn encode_matrix(m: &MatrixFile) -> Vec<u8> {
    let grid = m.grid();
    let (kind, elem) = match m {
        MatrixFile::Posteriorgram(_) => (0u8, 4),
        MatrixFile::Labels(_) => (1u8, 1),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + grid.frames() * grid.pitches() * elem);
    out.extend_from_slice(MAGIC);
    out.push(kind);
    out.push(0);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.pitches() as u32).to_le_bytes());
    out.extend_from_slice(&grid.frame_len_s().to_le_bytes());
    match m {
        MatrixFile::Posteriorgram(z) => {
            for v in z.values().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        MatrixFile::Labels(y) => out.extend(y.values().iter().copied()),
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<MatrixFile, MatrixFormatError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(MatrixFormatError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        return Err(MatrixFormatError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(MatrixFormatError::BadMagic(magic));
    }
    let kind = bytes[4];
    if kind > 1 {
        return Err(MatrixFormatError::UnknownElementType(kind));
    }
    if bytes[5] != 0 {
        return Err(MatrixFormatError::BadReserved(bytes[5]));
    }
    let version = u16::from_le_bytes([bytes[6], bytes[7]]);
    if version != VERSION {
        return Err(MatrixFormatError::UnsupportedVersion(version));
    }
    let frames = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let pitches = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    let frame_len_s = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let elem: u64 = if kind == 0 { 4 } else { 1 };
    let payload = (frames as u64)
        .checked_mul(pitches as u64)
        .and_then(|n| n.checked_mul(elem))
        .filter(|&n| n <= MAX_PAYLOAD && n <= (usize::MAX - HEADER_LEN) as u64)
        .ok_or(MatrixFormatError::DimensionOverflow { frames, pitches })?;
    let expected = HEADER_LEN + payload as usize;
    if bytes.len() < expected {
        return Err(MatrixFormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(MatrixFormatError::TrailingBytes(bytes.len() - expected));
    }
    let grid = FrameGrid::new(frame_len_s, frames as usize, pitches as usize)?;
    let shape = (frames as usize, pitches as usize);
    let body = &bytes[HEADER_LEN..];
    Ok(if kind == 0 {
        let vals: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let values = Array2::from_shape_vec(shape, vals).expect("payload length checked");
        MatrixFile::Posteriorgram(Posteriorgram::new(grid, values)?)
    } else {
        let values = Array2::from_shape_vec(shape, body.to_vec()).expect("payload length checked");
        MatrixFile::Labels(LabelMatrix::new(grid, values)?)
    })
}

pub fn write_matrix(path: &Path, m: &MatrixFile) -> Result<(), MatrixFormatError> {
    crate::io::write_atomic(path, &encode_matrix(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile, MatrixFormatError> {
    decode_matrix(&std::fs::read(path)?)
}
