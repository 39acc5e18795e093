//! `EMB1` embedding files: a 16-byte little-endian header (magic, rows, dims,
//! dtype code) followed by a row-major payload.

use std::fs;
use std::path::Path;

use rbench_core::classifiers::EmbeddingMatrix;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMB1";
const HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("not an embedding file (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{extra} trailing bytes after the payload")]
    TrailingBytes { extra: usize },
    #[error("unknown dtype code {0} (0 = f32, 1 = f64)")]
    UnknownDtype(u32),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("empty embedding matrix")]
    Empty,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix, EmbeddingError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            return Err(EmbeddingError::BadMagic(bytes[..4].try_into().expect("4 bytes")));
        }
        return Err(EmbeddingError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(EmbeddingError::BadMagic(magic));
    }
    let rows = u32_at(bytes, 4) as usize;
    let dims = u32_at(bytes, 8) as usize;
    let dtype = match u32_at(bytes, 12) {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(EmbeddingError::UnknownDtype(other)),
    };
    if rows == 0 || dims == 0 {
        return Err(EmbeddingError::Empty);
    }
    let expected = HEADER_LEN + rows * dims * dtype.size();
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => {
            return Err(EmbeddingError::Truncated {
                expected,
                found: bytes.len(),
            })
        }
        std::cmp::Ordering::Greater => {
            return Err(EmbeddingError::TrailingBytes {
                extra: bytes.len() - expected,
            })
        }
        std::cmp::Ordering::Equal => {}
    }
    let payload = &bytes[HEADER_LEN..];
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite {
            row: i / dims,
            col: i % dims,
        });
    }
    Ok(EmbeddingMatrix::new(rows, dims, data).expect("shape and finiteness checked above"))
}

/// Encodes as f64, or as f32 when `dtype` asks for it (lossy for values not
/// representable in binary32).
pub fn encode_embeddings(m: &EmbeddingMatrix, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.data().len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dims() as u32).to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    for &v in m.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn load_embedding_file(path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    decode_embeddings(&fs::read(path)?)
}

pub fn write_embedding_file(path: &Path, m: &EmbeddingMatrix, dtype: Dtype) -> Result<(), EmbeddingError> {
    fs::write(path, encode_embeddings(m, dtype))?;
    Ok(())
}
