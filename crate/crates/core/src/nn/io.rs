//! Model file layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "PMIMODEL"
//! version  u32
//! d, h, c  u32 x 3
//! params   f64 x (h*d + h + c*h + c)   W1, b1, W2, b2
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::MlpModel;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"PMIMODEL";
pub const MODEL_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;

impl MlpModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.params.len());
        out.extend_from_slice(MODEL_MAGIC);
        for v in [
            MODEL_VERSION,
            self.input as u32,
            self.hidden as u32,
            self.classes as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// `path` is only used for error messages.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(path, "truncated header"));
        }
        if &bytes[..8] != MODEL_MAGIC {
            return Err(Error::format(path, "not a model file (bad magic)"));
        }
        let word = |i: usize| {
            let at = 8 + 4 * i;
            u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
        };
        let version = word(0);
        if version != MODEL_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported model version {version}, expected {MODEL_VERSION}"),
            ));
        }
        let (d, h, c) = (word(1) as usize, word(2) as usize, word(3) as usize);
        let count = h * d + h + c * h + c;
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * count {
            return Err(Error::format(
                path,
                format!(
                    "expected {} parameter bytes, found {}",
                    8 * count,
                    body.len()
                ),
            ));
        }
        let params = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        MlpModel::from_flat(d, h, c, params).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Writes to a sibling temporary file first so a failed write never leaves a
/// partial model behind.
pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("partial");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&model.to_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    MlpModel::from_bytes(&bytes, path)
}
