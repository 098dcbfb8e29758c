//! Binary model files.
//!
//! ```text
//! "MPEC" | version u32 = 1 | section count u32
//! per section: name length u16 | name (UTF-8) | payload length u64 | payload
//! ```
//!
//! Payloads are bincode encodings of the model parts, so every float is
//! stored bit-exactly and a loaded model predicts exactly like the saved one.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ensemble::MpecModel;
use crate::error::{MpecError, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"MPEC";
pub const MODEL_VERSION: u32 = 1;

const SECTIONS: [&str; 6] = ["header", "features", "clusters", "learners", "meta", "provenance"];

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    class_count: u64,
    dim: u64,
    input_channels: u64,
}

fn encode<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    bincode::serialize(value).map_err(|e| MpecError::CorruptModel(format!("encoding failed: {e}")))
}

fn decode<T: DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<T> {
    bincode::deserialize(bytes).map_err(|e| MpecError::CorruptModel(format!("section {name}: {e}")))
}

pub fn encode_model(model: &MpecModel) -> Result<Vec<u8>> {
    let header = Header {
        class_count: model.class_count as u64,
        dim: model.dim as u64,
        input_channels: model.input_channels as u64,
    };
    let payloads = [
        encode(&header)?,
        encode(&model.feature_config)?,
        encode(&model.cluster_model)?,
        encode(&model.cluster_learners)?,
        encode(&model.meta_model)?,
        encode(&(model.seed, &model.provenance))?,
    ];
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(SECTIONS.len() as u32).to_le_bytes());
    for (name, payload) in SECTIONS.iter().zip(&payloads) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: u64) -> Result<&'a [u8]> {
        let remaining = (self.bytes.len() - self.at) as u64;
        if n > remaining {
            return Err(MpecError::TruncatedFile {
                needed: self.at as u64 + n,
                found: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.at..self.at + n as usize];
        self.at += n as usize;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<MpecModel> {
    let mut cur = Cursor { bytes, at: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MODEL_MAGIC {
        return Err(MpecError::BadMagic {
            found: magic,
            expected: MODEL_MAGIC,
        });
    }
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(MpecError::VersionUnsupported(version));
    }
    let count = cur.u32()?;
    let mut sections: BTreeMap<String, &[u8]> = BTreeMap::new();
    for _ in 0..count {
        let len = cur.u16()?;
        let name = std::str::from_utf8(cur.take(len as u64)?)
            .map_err(|_| MpecError::CorruptModel("section name is not UTF-8".into()))?
            .to_owned();
        let size = cur.u64()?;
        let payload = cur.take(size)?;
        if !SECTIONS.contains(&name.as_str()) {
            return Err(MpecError::CorruptModel(format!("unknown section {name:?}")));
        }
        if sections.insert(name.clone(), payload).is_some() {
            return Err(MpecError::CorruptModel(format!("duplicate section {name:?}")));
        }
    }
    if cur.at != bytes.len() {
        return Err(MpecError::TrailingData((bytes.len() - cur.at) as u64));
    }
    let section = |name: &str| {
        sections
            .get(name)
            .copied()
            .ok_or_else(|| MpecError::CorruptModel(format!("missing section {name:?}")))
    };

    let header: Header = decode("header", section("header")?)?;
    let (seed, provenance) = decode("provenance", section("provenance")?)?;
    let model = MpecModel {
        feature_config: decode("features", section("features")?)?,
        cluster_model: decode("clusters", section("clusters")?)?,
        cluster_learners: decode("learners", section("learners")?)?,
        meta_model: decode("meta", section("meta")?)?,
        seed,
        provenance,
        class_count: header.class_count as usize,
        dim: header.dim as usize,
        input_channels: header.input_channels as usize,
    };
    check_consistency(&model)?;
    Ok(model)
}

fn check_consistency(m: &MpecModel) -> Result<()> {
    let corrupt = |what: &str| Err(MpecError::CorruptModel(what.into()));
    if m.class_count < 2 || m.dim != m.feature_config.selected_channels.len() {
        return corrupt("header disagrees with the feature configuration");
    }
    if m.cluster_model.centroids.is_empty()
        || m.cluster_model.centroids.iter().any(|c| c.dim() != m.dim)
        || m.cluster_learners.len() != m.cluster_model.centroids.len()
    {
        return corrupt("cluster section disagrees with the header");
    }
    let width = m.dim * (m.dim + 1) / 2;
    let learners_ok = m.cluster_learners.iter().all(|set| {
        set.len() == 4 && set.iter().all(|l| l.class_count == m.class_count && l.n_features == width)
    });
    if !learners_ok || m.meta_model.n_features != 4 * m.class_count || m.meta_model.class_count != m.class_count {
        return corrupt("learner shapes disagree with the header");
    }
    if m.feature_config.selected_channels.iter().any(|&c| c >= m.input_channels) {
        return corrupt("selected channel beyond the input channel count");
    }
    Ok(())
}

pub fn save_model(model: &MpecModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    fs::write(path, bytes).map_err(|e| MpecError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<MpecModel> {
    let bytes = fs::read(path).map_err(|e| MpecError::io(path, e))?;
    decode_model(&bytes)
}
