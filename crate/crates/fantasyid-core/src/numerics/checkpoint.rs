//! Checkpoint container: a magic tag, a JSON header describing the run
//! and indexing every tensor, then the raw little-endian payload.
//!
//! Tensors are written in insertion order and bytes are produced purely
//! from the stored values, so save → load → save reproduces the file
//! bit for bit. Optimizer moments ride along as ordinary entries under
//! `adam.m.` / `adam.v.` prefixes.

use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::params::ParamSet;
use super::scalar::Scalar;

const MAGIC: &[u8; 8] = b"FIDCKPT\x01";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in elements.
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub precision: String,
    pub seed: u64,
    /// Training steps completed when this checkpoint was written.
    pub step: u64,
    /// AdamW bias-correction counter.
    pub adam_t: u64,
    /// Full run configuration, stored verbatim for resume validation.
    pub config: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub struct Checkpoint<S: Scalar> {
    pub seed: u64,
    pub step: u64,
    pub adam_t: u64,
    pub config: serde_json::Value,
    entries: Vec<(String, Vec<usize>, Vec<S>)>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(seed: u64, step: u64, adam_t: u64, config: serde_json::Value) -> Self {
        Checkpoint { seed, step, adam_t, config, entries: Vec::new() }
    }

    pub fn add_tensor(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<S>) {
        let name = name.into();
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{name}: shape/len");
        debug_assert!(self.entries.iter().all(|(n, _, _)| n != &name), "duplicate {name}");
        self.entries.push((name, shape.to_vec(), data));
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[S])> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }

    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _, _)| n.as_str())
    }

    /// Snapshot of a model and its optimizer.
    pub fn from_training_state(
        seed: u64,
        step: u64,
        config: serde_json::Value,
        params: &ParamSet<S>,
        opt: &AdamW<S>,
    ) -> Self {
        let mut ck = Checkpoint::new(seed, step, opt.state.t, config);
        for p in params.iter() {
            ck.add_tensor(format!("param.{}", p.name()), p.tensor().shape(), p.tensor().to_vec());
        }
        for (i, p) in params.iter().enumerate() {
            ck.add_tensor(
                format!("adam.m.{}", p.name()),
                p.tensor().shape(),
                opt.state.m[i].clone(),
            );
            ck.add_tensor(
                format!("adam.v.{}", p.name()),
                p.tensor().shape(),
                opt.state.v[i].clone(),
            );
        }
        ck
    }

    /// Copies stored values back into a freshly built model + optimizer.
    /// Every parameter must be present with a matching shape.
    pub fn restore_training_state(
        &self,
        params: &ParamSet<S>,
        opt: &mut AdamW<S>,
    ) -> io::Result<()> {
        for (i, p) in params.iter().enumerate() {
            let want = p.tensor().shape();
            let fetch = |prefix: &str| -> io::Result<&[S]> {
                let key = format!("{prefix}.{}", p.name());
                let (shape, data) = self
                    .get(&key)
                    .ok_or_else(|| bad_data(format!("checkpoint missing {key}")))?;
                if shape != want {
                    return Err(bad_data(format!(
                        "{key}: shape {:?} in file, model wants {:?}",
                        shape, want
                    )));
                }
                Ok(data)
            };
            p.tensor().set_data(fetch("param")?);
            opt.state.m[i].copy_from_slice(fetch("adam.m")?);
            opt.state.v[i].copy_from_slice(fetch("adam.v")?);
        }
        opt.state.t = self.adam_t;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut tensors = Vec::with_capacity(self.entries.len());
        let mut offset = 0u64;
        for (name, shape, data) in &self.entries {
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
                len: data.len() as u64,
            });
            offset += data.len() as u64;
        }
        let header = CheckpointHeader {
            precision: S::type_name().to_string(),
            seed: self.seed,
            step: self.step,
            adam_t: self.adam_t,
            config: self.config.clone(),
            tensors,
        };
        let header_bytes = serde_json::to_vec(&header).map_err(|e| bad_data(e.to_string()))?;

        let mut payload =
            Vec::with_capacity(offset as usize * S::byte_width());
        for (_, _, data) in &self.entries {
            for &v in data {
                v.put_le(&mut payload);
            }
        }

        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        f.write_all(&payload)?;
        f.flush()
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad_data("not a checkpoint file (bad magic)"));
        }
        let mut len8 = [0u8; 8];
        f.read_exact(&mut len8)?;
        let hlen = u64::from_le_bytes(len8) as usize;
        let mut hbytes = vec![0u8; hlen];
        f.read_exact(&mut hbytes)?;
        let header: CheckpointHeader =
            serde_json::from_slice(&hbytes).map_err(|e| bad_data(e.to_string()))?;
        if header.precision != S::type_name() {
            return Err(bad_data(format!(
                "checkpoint precision {} but this binary path is {}",
                header.precision,
                S::type_name()
            )));
        }
        let mut payload = Vec::new();
        f.read_to_end(&mut payload)?;

        let w = S::byte_width();
        let mut entries = Vec::with_capacity(header.tensors.len());
        for t in &header.tensors {
            let start = t.offset as usize * w;
            let end = start + t.len as usize * w;
            if end > payload.len() {
                return Err(bad_data(format!("{}: payload truncated", t.name)));
            }
            if t.shape.iter().product::<usize>() as u64 != t.len {
                return Err(bad_data(format!("{}: shape/len mismatch", t.name)));
            }
            let data: Vec<S> =
                payload[start..end].chunks_exact(w).map(S::get_le).collect();
            entries.push((t.name.clone(), t.shape.clone(), data));
        }
        Ok(Checkpoint {
            seed: header.seed,
            step: header.step,
            adam_t: header.adam_t,
            config: header.config,
            entries,
        })
    }

    /// Header without the payload, for light-weight inspection.
    pub fn peek_header(path: &Path) -> io::Result<CheckpointHeader> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad_data("not a checkpoint file (bad magic)"));
        }
        let mut len8 = [0u8; 8];
        f.read_exact(&mut len8)?;
        let hlen = u64::from_le_bytes(len8) as usize;
        let mut hbytes = vec![0u8; hlen];
        f.read_exact(&mut hbytes)?;
        serde_json::from_slice(&hbytes).map_err(|e| bad_data(e.to_string()))
    }
}

fn bad_data(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}
