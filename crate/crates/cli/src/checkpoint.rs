//! Binary model checkpoints.
//!
//! Layout: an 8-byte magic, a little-endian `u32` format version, a
//! little-endian `u32` header length, a JSON header, then every parameter's
//! values concatenated as little-endian `f64`s in the model's canonical
//! parameter order. The header records the architecture, pattern set,
//! tokenizer vocabulary, optional tuned threshold, and one entry per
//! parameter (name, shape, offset and length in the payload), so a file is
//! fully self-describing: loading needs no config document.
//!
//! Saving a just-loaded checkpoint reproduces the file byte for byte, and a
//! loaded model scores bit-identically to the one that was saved.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use conan_core::data::Tokenizer;
use conan_core::encoder::EncoderConfig;
use conan_core::model::ConanModel;
use conan_core::patterning::Family;

pub const MAGIC: [u8; 8] = *b"CONANCKP";
pub const VERSION: u32 = 1;

/// One parameter's placement in the payload. `offset` and `len` count f64
/// values, not bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

/// Everything needed to rebuild the model and its tokenizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Encoder architecture with the extended vocabulary size.
    pub encoder: EncoderConfig,
    pub family: Family,
    pub n: usize,
    pub k: usize,
    /// Real-token vocabulary size (reserved ids + words).
    pub base_vocab: usize,
    /// Token ids of each pattern, in pattern order.
    pub patterns: Vec<Vec<usize>>,
    /// Tokenizer vocabulary in id order (length `base_vocab`).
    pub vocab: Vec<String>,
    pub lowercase: bool,
    /// Dev-tuned decision threshold, when training produced one.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub theta: Option<f64>,
    pub params: Vec<ParamEntry>,
}

/// A model restored from disk.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: ConanModel,
    pub tokenizer: Tokenizer,
    pub theta: Option<f64>,
}

/// Serializes the model to `path`.
pub fn save(
    path: &Path,
    model: &ConanModel,
    tokenizer: &Tokenizer,
    theta: Option<f64>,
) -> Result<()> {
    if tokenizer.vocab_size() != model.base_vocab() {
        bail!(
            "tokenizer has {} entries but the model's base vocabulary is {}",
            tokenizer.vocab_size(),
            model.base_vocab()
        );
    }
    let named = model.named_params();
    let mut params = Vec::with_capacity(named.len());
    let mut payload: Vec<u8> = Vec::new();
    let mut offset = 0u64;
    for (name, tensor) in &named {
        let values = tensor.values();
        params.push(ParamEntry {
            name: name.clone(),
            shape: tensor.shape(),
            offset,
            len: values.len() as u64,
        });
        offset += values.len() as u64;
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = CheckpointHeader {
        encoder: model.config.clone(),
        family: model.family(),
        n: model.n(),
        k: model.patterns().first().map_or(0, |p| p.k),
        base_vocab: model.base_vocab(),
        patterns: model.patterns().iter().map(|p| p.tokens.clone()).collect(),
        vocab: tokenizer.vocab().to_vec(),
        lowercase: tokenizer.lowercase(),
        theta,
        params,
    };
    let header_bytes = serde_json::to_vec(&header).context("serializing checkpoint header")?;
    let mut file = Vec::with_capacity(16 + header_bytes.len() + payload.len());
    file.extend_from_slice(&MAGIC);
    file.extend_from_slice(&VERSION.to_le_bytes());
    file.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    file.extend_from_slice(&header_bytes);
    file.extend_from_slice(&payload);
    fs::write(path, file).with_context(|| format!("writing checkpoint {}", path.display()))?;
    Ok(())
}

/// Reads and validates the raw parts of a checkpoint file.
pub fn read_parts(path: &Path) -> Result<(CheckpointHeader, Vec<f64>)> {
    let bytes =
        fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if bytes.len() < 16 || bytes[..8] != MAGIC {
        bail!("{} is not a checkpoint file (bad magic)", path.display());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("four bytes"));
    if version != VERSION {
        bail!(
            "checkpoint {} has format version {version}, this build reads version {VERSION}",
            path.display()
        );
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("four bytes")) as usize;
    let Some(header_bytes) = bytes.get(16..16 + header_len) else {
        bail!("checkpoint {} is truncated inside its header", path.display());
    };
    let header: CheckpointHeader =
        serde_json::from_slice(header_bytes).context("parsing checkpoint header")?;
    let body = &bytes[16 + header_len..];
    let expected: u64 = header.params.iter().map(|p| p.len).sum();
    if body.len() as u64 != expected * 8 {
        bail!(
            "checkpoint payload holds {} bytes, header promises {}",
            body.len(),
            expected * 8
        );
    }
    let mut cursor = 0u64;
    for entry in &header.params {
        if entry.offset != cursor {
            bail!("parameter {} is misplaced in the payload", entry.name);
        }
        if entry.shape.iter().product::<usize>() as u64 != entry.len {
            bail!("parameter {} length disagrees with its shape", entry.name);
        }
        cursor += entry.len;
    }
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Ok((header, payload))
}

/// Restores the model, tokenizer and stored threshold from a checkpoint.
pub fn load(path: &Path) -> Result<LoadedModel> {
    let (header, payload) = read_parts(path)?;
    if header.vocab.len() != header.base_vocab {
        bail!(
            "checkpoint vocabulary holds {} entries but base_vocab is {}",
            header.vocab.len(),
            header.base_vocab
        );
    }
    let mut base_config = header.encoder.clone();
    base_config.vocab_size = header.base_vocab;
    // Parameter values are overwritten below, so the init seed is irrelevant.
    let model = match header.family {
        Family::Discrete => ConanModel::init_discrete(&base_config, &header.patterns, 0),
        family => ConanModel::init(&base_config, family, header.n, header.k, 0),
    }
    .context("rebuilding the checkpointed model")?;
    if model.config != header.encoder {
        bail!("checkpoint architecture is internally inconsistent");
    }
    let rebuilt: Vec<Vec<usize>> = model.patterns().iter().map(|p| p.tokens.clone()).collect();
    if rebuilt != header.patterns {
        bail!("checkpoint pattern set disagrees with its family/n/k");
    }
    let named = model.named_params();
    if named.len() != header.params.len() {
        bail!(
            "checkpoint stores {} parameters, the model has {}",
            header.params.len(),
            named.len()
        );
    }
    for ((name, tensor), entry) in named.iter().zip(&header.params) {
        if name != &entry.name {
            bail!(
                "checkpoint parameter {} does not match expected {}",
                entry.name,
                name
            );
        }
        if tensor.shape() != entry.shape {
            bail!(
                "parameter {} has shape {:?} in the checkpoint, {:?} in the model",
                name,
                entry.shape,
                tensor.shape()
            );
        }
        let start = entry.offset as usize;
        tensor
            .set_values(&payload[start..start + entry.len as usize])
            .with_context(|| format!("restoring parameter {name}"))?;
    }
    let tokenizer = Tokenizer::from_vocab(header.vocab.clone(), header.lowercase);
    Ok(LoadedModel {
        model,
        tokenizer,
        theta: header.theta,
    })
}

/// Hex SHA-256 of a file, for determinism checks.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
