//! Versioned little-endian binary container for classifier heads and raw
//! parameter sets.
//!
//! ```text
//! magic        4 bytes  "RBLB"
//! version      u32      1
//! kind         u32      0 logistic, 1 centroid, 2 baselinepp, 0xFFFFFFFF raw
//! num_classes  u32
//! dims         u32
//! flags        u32      bit 0 layer norm, bit 1 L2 normalise
//! cosine_scale f64
//! entries      u32
//!   name_len   u32, name (UTF-8), count u64      (repeated `entries` times)
//! payload      f64 x sum(count), entries in table order
//! ```
//!
//! A classifier blob stores `bias` (`num_classes` values) and `weight`
//! (`num_classes * dims` values, row-major).

use std::io::{Read, Write};

use thiserror::Error;

use crate::classifiers::{ClassifierKind, ClassifierModel, Preprocessing};
use crate::ensemble::{EnsembleError, ParamSet};

pub const MAGIC: &[u8; 4] = b"RBLB";
pub const VERSION: u32 = 1;
pub const RAW_KIND: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("bad magic {0:?}, expected \"RBLB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported blob version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown kind code {0}")]
    UnknownKind(u32),
    #[error("blob is truncated")]
    Truncated,
    #[error("parameter name is not valid UTF-8")]
    InvalidName,
    #[error("blob does not hold a classifier head")]
    NotAClassifier,
    #[error("classifier blob is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Params(#[from] EnsembleError),
    #[error(transparent)]
    Io(std::io::Error),
}

pub type Result<T, E = BlobError> = std::result::Result<T, E>;

impl From<std::io::Error> for BlobError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            BlobError::Truncated
        } else {
            BlobError::Io(e)
        }
    }
}

/// Header metadata carried alongside a parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobHeader {
    pub kind: Option<ClassifierKind>,
    pub num_classes: u32,
    pub dims: u32,
    pub preprocessing: Preprocessing,
    pub cosine_scale: f64,
}

impl BlobHeader {
    pub fn raw() -> Self {
        Self {
            kind: None,
            num_classes: 0,
            dims: 0,
            preprocessing: Preprocessing::default(),
            cosine_scale: 1.0,
        }
    }

    fn flags(&self) -> u32 {
        u32::from(self.preprocessing.layer_norm) | (u32::from(self.preprocessing.l2_normalize) << 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub header: BlobHeader,
    pub params: ParamSet,
}

impl Blob {
    pub fn raw(params: ParamSet) -> Self {
        Self {
            header: BlobHeader::raw(),
            params,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let h = &self.header;
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            h.kind.map_or(RAW_KIND, ClassifierKind::code),
            h.num_classes,
            h.dims,
            h.flags(),
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&h.cosine_scale.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, values) in self.params.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(values.len() as u64).to_le_bytes())?;
        }
        for (_, values) in self.params.iter() {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(BlobError::BadMagic(magic));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(BlobError::UnsupportedVersion(version));
        }
        let kind_code = read_u32(&mut r)?;
        let kind = match kind_code {
            RAW_KIND => None,
            c => Some(ClassifierKind::from_code(c).ok_or(BlobError::UnknownKind(c))?),
        };
        let num_classes = read_u32(&mut r)?;
        let dims = read_u32(&mut r)?;
        let flags = read_u32(&mut r)?;
        let cosine_scale = f64::from_le_bytes(read_array(&mut r)?);

        let entries = read_u32(&mut r)?;
        let mut table = Vec::new();
        for _ in 0..entries {
            let len = read_u32(&mut r)? as usize;
            let mut name = Vec::new();
            (&mut r).take(len as u64).read_to_end(&mut name)?;
            if name.len() != len {
                return Err(BlobError::Truncated);
            }
            let name = String::from_utf8(name).map_err(|_| BlobError::InvalidName)?;
            let count = u64::from_le_bytes(read_array(&mut r)?);
            table.push((name, count));
        }
        let mut params = ParamSet::new();
        for (name, count) in table {
            let mut values = Vec::new();
            for _ in 0..count {
                values.push(f64::from_le_bytes(read_array(&mut r)?));
            }
            params.insert(name, values)?;
        }
        Ok(Self {
            header: BlobHeader {
                kind,
                num_classes,
                dims,
                preprocessing: Preprocessing {
                    layer_norm: flags & 1 != 0,
                    l2_normalize: flags & 2 != 0,
                },
                cosine_scale,
            },
            params,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let blob = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(BlobError::Malformed(format!("{} trailing bytes", cursor.len())));
        }
        Ok(blob)
    }

    /// Rebuilds a classifier head, checking parameter shapes.
    pub fn to_classifier(&self) -> Result<ClassifierModel> {
        let kind = self.header.kind.ok_or(BlobError::NotAClassifier)?;
        let c = self.header.num_classes as usize;
        let d = self.header.dims as usize;
        let weight = self
            .params
            .get("weight")
            .ok_or_else(|| BlobError::Malformed("missing \"weight\"".into()))?;
        let bias = self
            .params
            .get("bias")
            .ok_or_else(|| BlobError::Malformed("missing \"bias\"".into()))?;
        if weight.len() != c * d || bias.len() != c || c == 0 || d == 0 {
            return Err(BlobError::Malformed(format!(
                "expected {c}x{d} weights and {c} biases, found {} and {}",
                weight.len(),
                bias.len()
            )));
        }
        Ok(ClassifierModel {
            kind,
            num_classes: c,
            dims: d,
            weights: weight.to_vec(),
            biases: bias.to_vec(),
            cosine_scale: self.header.cosine_scale,
            preprocessing: self.header.preprocessing,
        })
    }
}

impl From<&ClassifierModel> for Blob {
    fn from(m: &ClassifierModel) -> Self {
        let params = ParamSet::new()
            .with("bias", m.biases.clone())
            .and_then(|p| p.with("weight", m.weights.clone()))
            .expect("trained heads hold finite parameters");
        Blob {
            header: BlobHeader {
                kind: Some(m.kind),
                num_classes: m.num_classes as u32,
                dims: m.dims as u32,
                preprocessing: m.preprocessing,
                cosine_scale: m.cosine_scale,
            },
            params,
        }
    }
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}
