//! Model checkpoint files.
//!
//! Layout (little-endian): `b"CTEM"`, version `u16` = 1, reserved `u16` = 0,
//! feature width, context, hidden, pitches (`u32` each), learning rate,
//! beta1, beta2, epsilon (`f64` each), Adam step `u64`, then parameters,
//! first moments and second moments as `f32` blocks of equal length.

use std::path::Path;

use thiserror::Error;

use super::{AdamConfig, AdamState, Architecture, ModelError, TranscriberState};

const MAGIC: &[u8; 4] = b"CTEM";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 64;
const MAX_PARAMS: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, expected \"CTEM\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("architecture {0:?} is too large")]
    DimensionOverflow(Architecture),
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode_checkpoint(state: &TranscriberState) -> Vec<u8> {
    let a = state.architecture();
    let o = state.optimizer();
    let n = state.params().len();
    let mut out = Vec::with_capacity(HEADER_LEN + 12 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    for d in [a.feature_width, a.context, a.hidden, a.pitches] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for h in [o.learning_rate, o.beta1, o.beta2, o.epsilon] {
        out.extend_from_slice(&h.to_le_bytes());
    }
    out.extend_from_slice(&state.adam().step.to_le_bytes());
    for block in [state.params(), &state.adam().m, &state.adam().v] {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> usize {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap()) as usize
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TranscriberState, CheckpointError> {
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic(bytes[..4].try_into().unwrap()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CheckpointError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let arch = Architecture {
        feature_width: u32_at(bytes, 8),
        context: u32_at(bytes, 12),
        hidden: u32_at(bytes, 16),
        pitches: u32_at(bytes, 20),
    };
    let optimizer = AdamConfig {
        learning_rate: f64_at(bytes, 24),
        beta1: f64_at(bytes, 32),
        beta2: f64_at(bytes, 40),
        epsilon: f64_at(bytes, 48),
    };
    let step = u64::from_le_bytes(bytes[56..64].try_into().unwrap());
    let (d, h, p) = (
        (2 * arch.context as u64 + 1) * arch.feature_width as u64,
        arch.hidden as u64,
        arch.pitches as u64,
    );
    let n = d
        .checked_mul(h)
        .and_then(|dh| dh.checked_add(h))
        .and_then(|x| h.checked_mul(p).and_then(|hp| x.checked_add(hp)))
        .and_then(|x| x.checked_add(p))
        .filter(|&n| n <= MAX_PARAMS)
        .ok_or(CheckpointError::DimensionOverflow(arch))? as usize;
    let expected = HEADER_LEN + 12 * n;
    if bytes.len() < expected {
        return Err(CheckpointError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CheckpointError::TrailingBytes(bytes.len() - expected));
    }
    let block = |k: usize| -> Vec<f32> {
        bytes[HEADER_LEN + 4 * n * k..HEADER_LEN + 4 * n * (k + 1)]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let adam = AdamState {
        m: block(1),
        v: block(2),
        step,
    };
    Ok(TranscriberState::from_parts(arch, block(0), optimizer, adam)?)
}

pub fn save_checkpoint(path: &Path, state: &TranscriberState) -> Result<(), CheckpointError> {
    crate::io::write_atomic(path, &encode_checkpoint(state))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TranscriberState, CheckpointError> {
    decode_checkpoint(&std::fs::read(path)?)
}
