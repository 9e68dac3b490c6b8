//! Descriptor dump: binary tensor payload behind a small JSON header.
//!
//! Layout: magic, u64 LE header length, JSON header, raw LE scalar payload.
//! The header records which identity and reference frame produced the
//! descriptor and the config hash of the producing model, so downstream
//! consumers can refuse mismatched dumps.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::numerics::scalar::Scalar;
use crate::numerics::tensor::Tensor;

type Result<T> = std::result::Result<T, CoreError>;

const MAGIC: &[u8; 8] = b"FIDDESC\x01";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DescriptorHeader {
    pub identity_id: String,
    pub frame_index: u64,
    pub config_hash: String,
    pub shape: Vec<usize>,
    pub precision: String,
}

pub fn save_descriptor<S: Scalar>(
    path: &Path,
    descriptor: &Tensor<S>,
    identity_id: &str,
    frame_index: u64,
    config_hash: &str,
) -> Result<()> {
    let header = DescriptorHeader {
        identity_id: identity_id.to_string(),
        frame_index,
        config_hash: config_hash.to_string(),
        shape: descriptor.shape().to_vec(),
        precision: S::type_name().to_string(),
    };
    let hbytes = serde_json::to_vec(&header)?;
    let data = descriptor.to_vec();
    let mut payload = Vec::with_capacity(data.len() * S::byte_width());
    for &v in &data {
        v.put_le(&mut payload);
    }
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(hbytes.len() as u64).to_le_bytes())?;
    f.write_all(&hbytes)?;
    f.write_all(&payload)?;
    Ok(())
}

pub fn load_descriptor<S: Scalar>(path: &Path) -> Result<(DescriptorHeader, Tensor<S>)> {
    let mut f = fs::File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CoreError::data(format!("{}: not a descriptor dump", path.display())));
    }
    let mut len8 = [0u8; 8];
    f.read_exact(&mut len8)?;
    let hlen = u64::from_le_bytes(len8) as usize;
    let mut hbytes = vec![0u8; hlen];
    f.read_exact(&mut hbytes)?;
    let header: DescriptorHeader = serde_json::from_slice(&hbytes)?;
    if header.precision != S::type_name() {
        return Err(CoreError::data(format!(
            "descriptor stores {}, requested {}",
            header.precision,
            S::type_name()
        )));
    }
    let numel: usize = header.shape.iter().product();
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;
    let width = S::byte_width();
    if payload.len() != numel * width {
        return Err(CoreError::data(format!(
            "descriptor payload is {} bytes, header shape {:?} wants {}",
            payload.len(),
            header.shape,
            numel * width
        )));
    }
    let data: Vec<S> = (0..numel).map(|i| S::get_le(&payload[i * width..])).collect();
    let tensor = Tensor::from_vec(&header.shape, data)?;
    Ok((header, tensor))
}
