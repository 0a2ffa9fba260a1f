//! Versioned binary model file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TAEGN"  u32 version
//! u64 metadata length, metadata JSON (codec, config, hint marginals, epochs)
//! u32 tensor count, then per tensor:
//!   u32 name length, name, u32 rank, u64 per axis, f32 values (row-major)
//! 32-byte SHA-256 of every preceding byte
//! ```
//!
//! Parameters are stored at 32-bit. Loading widens them to 64-bit, so a file
//! that is read and written again is byte-identical.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taegan::autograd::Matrix;
use taegan::codec::TableCodec;
use taegan::model::HintMarginals;
use taegan::nets::{DiscriminatorParams, GeneratorParams};
use taegan::{TaeganModel, TrainConfig};
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"TAEGN";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checksum mismatch")]
    Checksum,
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CheckpointError {
    /// True for errors caused by the file's contents rather than by I/O.
    pub fn is_integrity(&self) -> bool {
        !matches!(self, CheckpointError::Io(_))
    }
}

pub type Result<T, E = CheckpointError> = std::result::Result<T, E>;

#[derive(Serialize, Deserialize)]
struct Metadata {
    codec: TableCodec,
    config: TrainConfig,
    hint_marginals: HintMarginals,
    epochs_trained: usize,
}

pub fn to_bytes(model: &TaeganModel) -> Vec<u8> {
    let meta = Metadata {
        codec: model.codec.clone(),
        config: model.config.clone(),
        hint_marginals: model.hint_marginals.clone(),
        epochs_trained: model.epochs_trained,
    };
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let params = model.named_params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, m) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for &v in m.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| CheckpointError::Corrupt(format!("length {v} too large")))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<TaeganModel> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
        return Err(CheckpointError::Corrupt("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let meta_len = r.u64()?;
    let meta: Metadata = serde_json::from_slice(r.take(meta_len)?)
        .map_err(|e| CheckpointError::Corrupt(format!("metadata: {e}")))?;
    meta.config
        .validate()
        .map_err(|e| CheckpointError::Corrupt(format!("config: {e}")))?;

    // Shapes come from the stored config; values are overwritten below.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layout = meta.codec.layout.clone();
    let mut model = TaeganModel {
        generator: GeneratorParams::init(&layout, &meta.config.net, &mut rng),
        discriminator: DiscriminatorParams::init(&layout, &meta.config.net, &mut rng),
        codec: meta.codec,
        config: meta.config,
        hint_marginals: meta.hint_marginals,
        epochs_trained: meta.epochs_trained,
    };
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    let count = r.u32()? as usize;
    if count != names.len() {
        return Err(CheckpointError::Corrupt(format!(
            "{count} tensors stored, configuration needs {}",
            names.len()
        )));
    }
    for (expected, param) in names.iter().zip(model.params_mut()) {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
        if name != expected {
            return Err(CheckpointError::Corrupt(format!("tensor {name:?} where {expected:?} was expected")));
        }
        if r.u32()? != 2 {
            return Err(CheckpointError::Corrupt(format!("tensor {name:?} is not rank 2")));
        }
        let shape = (r.u64()?, r.u64()?);
        if shape != param.dim() {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {name:?} has shape {shape:?}, expected {:?}",
                param.dim()
            )));
        }
        let raw = r.take(shape.0 * shape.1 * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        *param = Matrix::from_shape_vec(shape, values).expect("shape checked");
    }
    if r.pos != body.len() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(model)
}

pub fn save(model: &TaeganModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TaeganModel> {
    from_bytes(&std::fs::read(path)?)
}

/// The model as it will be after a save and load: parameters rounded to 32-bit.
pub fn round_trip(model: &TaeganModel) -> TaeganModel {
    from_bytes(&to_bytes(model)).expect("freshly written checkpoint loads")
}
