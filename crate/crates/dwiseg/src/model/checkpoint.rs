//! Binary model checkpoint.
//!
//! Layout (all integers little-endian):
//! ```text
//! magic   8 B   "DWSGCKPT"
//! version u32   currently 1
//! cfg_len u32 + cfg_len bytes of ModelConfig JSON
//! n_groups u32
//! per group (sorted by name):
//!   name_len u16 + name bytes
//!   n_tensors u32
//!   per tensor: ndim u8, ndim × dim u32, f64 values
//! sha256  32 B  over everything above
//! ```
//! Loading rebuilds the architecture from the config echo and overwrites
//! the freshly built tensors, so a round trip is bit-exact.

use super::{build_model, Model, ModelConfig};
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};
use std::path::Path;

const MAGIC: &[u8; 8] = b"DWSGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const HASH_LEN: usize = 32;

/// Serializes a model to the container format, hash trailer included.
pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config).expect("config serializes");
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);
    let n_groups = model.groups.iter().count() as u32;
    buf.extend_from_slice(&n_groups.to_le_bytes());
    for (name, ids) in model.groups.iter() {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(ids.len() as u32).to_le_bytes());
        for &id in ids {
            let tensor = model.params.get(id);
            buf.push(tensor.ndim() as u8);
            for &d in tensor.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let hash = Sha256::digest(&buf);
    buf.extend_from_slice(&hash);
    buf
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    load_checkpoint_bytes(&bytes).map_err(|e| match e {
        Error::Integrity { reason, .. } => Error::Integrity {
            file: path.display().to_string(),
            reason,
        },
        other => other,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt(reason: impl Into<String>) -> Error {
        Error::Integrity {
            file: "checkpoint".into(),
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Self::corrupt("truncated"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses and validates a checkpoint from memory. Safe on arbitrary bytes:
/// every length is checked before use and tensor data is never allocated
/// beyond what the buffer actually holds.
pub fn load_checkpoint_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < MAGIC.len() + 4 + HASH_LEN {
        return Err(Reader::corrupt("too short"));
    }
    let body_len = bytes.len() - HASH_LEN;
    let mut r = Reader {
        buf: &bytes[..body_len],
        pos: 0,
    };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Reader::corrupt("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let cfg_len = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(cfg_len)?).map_err(|e| Reader::corrupt(e.to_string()))?;
    config.validate()?;
    // A valid file must carry 8 bytes per parameter scalar; checking this
    // before build_model keeps hostile headers from forcing big allocations.
    let needed = super::config_scalar_count(&config).saturating_mul(8);
    if (bytes.len() as u64) < needed {
        return Err(Reader::corrupt(format!(
            "file too small for declared config ({} < {} bytes)",
            bytes.len(),
            needed
        )));
    }
    let mut model = build_model(&config, 0)?;

    let n_groups = r.u32()? as usize;
    let expected_groups = model.groups.iter().count();
    if n_groups != expected_groups {
        return Err(Reader::corrupt(format!(
            "expected {expected_groups} parameter groups, file has {n_groups}"
        )));
    }
    // Group order in the file mirrors the sorted group map of the rebuilt
    // model, so a simple zip walk suffices.
    let group_list: Vec<(String, Vec<super::ParamId>)> = model
        .groups
        .iter()
        .map(|(n, ids)| (n.to_string(), ids.to_vec()))
        .collect();
    for (name, ids) in group_list {
        let name_len = r.u16()? as usize;
        let file_name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Reader::corrupt("group name is not utf-8"))?;
        if file_name != name {
            return Err(Reader::corrupt(format!(
                "expected group {name:?}, file has {file_name:?}"
            )));
        }
        let n_tensors = r.u32()? as usize;
        if n_tensors != ids.len() {
            return Err(Reader::corrupt(format!(
                "group {name:?}: expected {} tensors, file has {n_tensors}",
                ids.len()
            )));
        }
        for id in ids {
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            let mut count = 1usize;
            for _ in 0..ndim {
                let d = r.u32()? as usize;
                count = count
                    .checked_mul(d)
                    .ok_or_else(|| Reader::corrupt("tensor dims overflow"))?;
                shape.push(d);
            }
            if shape != model.params.get(id).shape() {
                return Err(Reader::corrupt(format!(
                    "group {name:?}: tensor shape {shape:?} does not match config"
                )));
            }
            let raw = r.take(count * 8)?;
            let target = model.params.get_mut(id);
            for (slot, chunk) in target.iter_mut().zip(raw.chunks_exact(8)) {
                *slot = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
    }
    if r.pos != body_len {
        return Err(Reader::corrupt("trailing bytes after parameter data"));
    }
    let hash = Sha256::digest(&bytes[..body_len]);
    if hash.as_slice() != &bytes[body_len..] {
        return Err(Reader::corrupt("hash mismatch"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> Model {
        let config = ModelConfig {
            n_levels: 1,
            base_channels: 4,
            input_channels: 1,
            height: 4,
            width: 4,
        };
        build_model(&config, 9).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = small_model();
        let bytes = checkpoint_bytes(&model);
        let loaded = load_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(model.params, loaded.params);
        assert_eq!(model.config, loaded.config);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let img = Array2::from_shape_fn((4, 4), |_| rng.gen_range(0.0..1.0));
        assert_eq!(model.forward(&img).unwrap(), loaded.forward(&img).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = small_model();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(model.params, loaded.params);
    }

    #[test]
    fn version_mismatch_is_named() {
        let mut bytes = checkpoint_bytes(&small_model());
        bytes[8] = 99;
        match load_checkpoint_bytes(&bytes) {
            Err(Error::Version { found: 99, expected: 1 }) => {}
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn scalar_count_formula_matches_builder() {
        for config in [
            ModelConfig::default(),
            ModelConfig {
                n_levels: 1,
                base_channels: 4,
                input_channels: 1,
                height: 4,
                width: 4,
            },
            ModelConfig {
                n_levels: 3,
                base_channels: 8,
                input_channels: 1,
                height: 64,
                width: 64,
            },
        ] {
            let model = build_model(&config, 0).unwrap();
            assert_eq!(
                super::super::config_scalar_count(&config),
                model.params.total_scalars() as u64
            );
        }
    }

    #[test]
    fn corruption_is_an_integrity_error() {
        let model = small_model();
        let good = checkpoint_bytes(&model);
        // Flip one payload byte: hash mismatch.
        let mut flipped = good.clone();
        let mid = good.len() / 2;
        flipped[mid] ^= 0x01;
        assert!(matches!(
            load_checkpoint_bytes(&flipped),
            Err(Error::Integrity { .. })
        ));
        // Truncation.
        assert!(matches!(
            load_checkpoint_bytes(&good[..good.len() - 40]),
            Err(Error::Integrity { .. })
        ));
        // Not a checkpoint at all.
        assert!(load_checkpoint_bytes(b"garbage").is_err());
    }
}
