//! Binary checkpoint format.
//!
//! ```text
//! "SINC"                      4 bytes magic
//! version                     u32 little-endian
//! header length               u32 little-endian
//! header                      UTF-8 JSON: config, metadata, parameter manifest
//! parameters                  f64 little-endian, manifest order, row-major
//! crc32                       u32 little-endian over every preceding byte
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SinetError};
use crate::model::{ModelMetadata, SinetConfig, SinetModel};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SINC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: SinetConfig,
    metadata: ModelMetadata,
    parameter_count: usize,
    parameters: Vec<ManifestEntry>,
}

/// Short identifier of a serialized checkpoint: the hex CRC-32 trailer.
pub fn checkpoint_id(bytes: &[u8]) -> Result<String> {
    let tail = bytes
        .len()
        .checked_sub(4)
        .ok_or_else(|| SinetError::format(0, "file too short for a checksum"))?;
    let crc = u32::from_le_bytes(bytes[tail..].try_into().expect("4 bytes"));
    Ok(format!("{crc:08x}"))
}

pub fn to_bytes(model: &SinetModel) -> Result<Vec<u8>> {
    let header = Header {
        config: model.config().clone(),
        metadata: model.metadata().clone(),
        parameter_count: model.count_parameters(),
        parameters: model
            .parameter_names()
            .iter()
            .zip(model.parameters())
            .map(|(name, p)| ManifestEntry {
                name: name.clone(),
                shape: p.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(json.len())
        .map_err(|_| SinetError::Data("checkpoint header exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * header.parameter_count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.parameters() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| SinetError::format(offset as u64, "unexpected end of file"))
}

pub fn from_bytes(bytes: &[u8]) -> Result<SinetModel> {
    match bytes.get(..4) {
        Some(m) if m == MAGIC => {}
        Some(_) => return Err(SinetError::format(0, "bad magic bytes, not a SINC checkpoint")),
        None => return Err(SinetError::format(0, "unexpected end of file")),
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(SinetError::format(4, format!("unsupported version {version}")));
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_end = 12 + header_len;
    if bytes.len() < header_end + 4 {
        return Err(SinetError::format(
            bytes.len() as u64,
            format!("truncated: header claims {header_len} bytes"),
        ));
    }
    let body_end = bytes.len() - 4;
    let stored = read_u32(bytes, body_end)?;
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(SinetError::Corruption(format!(
            "crc mismatch at byte {body_end}: stored {stored:08x}, computed {actual:08x}"
        )));
    }

    let header: Header = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| SinetError::format(12, format!("invalid header: {e}")))?;
    let manifest_total: usize = header
        .parameters
        .iter()
        .map(|p| p.shape.iter().product::<usize>())
        .sum();
    if manifest_total != header.parameter_count {
        return Err(SinetError::Corruption(format!(
            "manifest lists {manifest_total} values but header declares {}",
            header.parameter_count
        )));
    }
    let blob = &bytes[header_end..body_end];
    if blob.len() != 8 * manifest_total {
        return Err(SinetError::format(
            header_end as u64,
            format!(
                "parameter section holds {} bytes, manifest needs {}",
                blob.len(),
                8 * manifest_total
            ),
        ));
    }

    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut params = Vec::with_capacity(header.parameters.len());
    for entry in &header.parameters {
        let n = entry.shape.iter().product();
        params.push(Tensor::new(entry.shape.clone(), values.by_ref().take(n).collect())?);
    }
    let model = SinetModel::from_parts(header.config, params, header.metadata)?;
    let names: Vec<&str> = header.parameters.iter().map(|p| p.name.as_str()).collect();
    if model.parameter_names().iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(SinetError::Corruption(
            "parameter manifest names do not match the configuration".into(),
        ));
    }
    if model.count_parameters() != header.parameter_count {
        return Err(SinetError::Corruption(format!(
            "configuration implies {} parameters, header declares {}",
            model.count_parameters(),
            header.parameter_count
        )));
    }
    Ok(model)
}

/// Writes the checkpoint and returns its id.
pub fn save_checkpoint(model: &SinetModel, path: &Path) -> Result<String> {
    let bytes = to_bytes(model)?;
    std::fs::write(path, &bytes).map_err(|e| SinetError::io(path, e))?;
    checkpoint_id(&bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<SinetModel> {
    load_checkpoint_with_id(path).map(|(m, _)| m)
}

pub fn load_checkpoint_with_id(path: &Path) -> Result<(SinetModel, String)> {
    let bytes = std::fs::read(path).map_err(|e| SinetError::io(path, e))?;
    let model = from_bytes(&bytes)?;
    Ok((model, checkpoint_id(&bytes)?))
}
