use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{Detector, ModelConfig};
use crate::nn::ParamSet;
use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ADETCKPT";
const VERSION: u32 = 1;

/// Hex SHA-256 of the JSON form of `value`.
pub fn config_hash<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// Position of the training sampler, enough to rebuild it exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// Word position as a decimal string (it is 128 bits wide).
    pub word_pos: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    config_hash: String,
    step: usize,
    rng: RngState,
    tau: usize,
    model: ModelConfig,
    tensors: Vec<TensorEntry>,
}

/// Trained parameters with everything needed to rebuild the detector.
///
/// On disk: magic, little-endian `u32` version and `u64` header length, a
/// JSON header, then each tensor's values as little-endian `f32` in header
/// order.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub tau: usize,
    pub config_hash: String,
    pub step: usize,
    pub rng: RngState,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn detector(&self) -> Result<Detector> {
        Ok(Detector::init::<f32>(&self.model, self.tau, 0)?.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ctx = || path.display().to_string();
        let header = Header {
            version: VERSION,
            config_hash: self.config_hash.clone(),
            step: self.step,
            rng: self.rng.clone(),
            tau: self.tau,
            model: self.model.clone(),
            tensors: self
                .params
                .iter()
                .map(|(_, n, t)| TensorEntry { name: n.to_string(), shape: t.shape().to_vec() })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::json(ctx(), e))?;
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(ctx(), e))?);
        let mut write = |b: &[u8]| w.write_all(b).map_err(|e| Error::io(ctx(), e));
        write(MAGIC)?;
        write(&VERSION.to_le_bytes())?;
        write(&(json.len() as u64).to_le_bytes())?;
        write(&json)?;
        for (_, _, t) in self.params.iter() {
            let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            write(&bytes)?;
        }
        w.flush().map_err(|e| Error::io(ctx(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ctx = || path.display().to_string();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(ctx(), e))?);
        let mut read = |n: usize| -> Result<Vec<u8>> {
            let mut buf = vec![0; n];
            r.read_exact(&mut buf).map_err(|e| Error::io(ctx(), e))?;
            Ok(buf)
        };
        if read(8)? != MAGIC {
            return Err(Error::Checkpoint(format!("{} is not a checkpoint file", ctx())));
        }
        let version = u32::from_le_bytes(read(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(read(8)?.try_into().expect("8 bytes")) as usize;
        let header: Header = serde_json::from_slice(&read(len)?).map_err(|e| Error::json(ctx(), e))?;
        let (_, mut params) = Detector::init::<f32>(&header.model, header.tau, 0)?;
        if header.tensors.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors but the model has {}",
                header.tensors.len(),
                params.len()
            )));
        }
        for entry in &header.tensors {
            let id =
                params.id(&entry.name).ok_or_else(|| Error::Checkpoint(format!("unknown parameter {}", entry.name)))?;
            if params.get(id).shape() != entry.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, model expects {:?}",
                    entry.name,
                    entry.shape,
                    params.get(id).shape()
                )));
            }
            let n: usize = entry.shape.iter().product();
            let values =
                read(4 * n)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
            *params.get_mut(id) = Tensor::from_vec(&entry.shape, values);
        }
        Ok(Self {
            model: header.model,
            tau: header.tau,
            config_hash: header.config_hash,
            step: header.step,
            rng: header.rng,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Ctx;

    #[test]
    fn round_trip_reproduces_outputs_bitwise() {
        let model = ModelConfig::toy();
        let (det, mut params) = Detector::init::<f32>(&model, 3, 1).unwrap();
        // make the zero-initialized tensors nonzero too
        let flat: Vec<f32> = params.flatten().iter().enumerate().map(|(i, v)| v + (i % 7) as f32 * 1e-3).collect();
        params.assign_flat(&flat);
        let ck = Checkpoint {
            model: model.clone(),
            tau: 3,
            config_hash: config_hash(&model),
            step: 17,
            rng: RngState { seed: 3, stream: 0, word_pos: "12345".into() },
            params,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.params.flatten(), ck.params.flatten());
        assert_eq!(
            (back.step, back.rng.clone(), back.config_hash.clone()),
            (17, ck.rng.clone(), ck.config_hash.clone())
        );

        let x =
            Tensor::from_vec(&[3, 3, 64, 64], (0..3 * 3 * 64 * 64).map(|i| ((i * 31) % 97) as f32 / 97.0).collect());
        let run = |ps: &ParamSet<f32>, d: &Detector| {
            let mut ctx = Ctx::new(ps, false);
            let xi = ctx.g.constant(x.clone());
            let out = d.forward(&mut ctx, xi).unwrap();
            out.map(|o| ctx.g.value(o).data().to_vec())
        };
        assert_eq!(run(&ck.params, &det), run(&back.params, &back.detector().unwrap()));
    }

    #[test]
    fn rejects_foreign_files_and_mismatched_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));

        let model = ModelConfig::toy();
        let (_, params) = Detector::init::<f32>(&model, 3, 0).unwrap();
        let mut other = model.clone();
        other.neck_channels += 8;
        let ck =
            Checkpoint { model: other, tau: 3, config_hash: String::new(), step: 0, rng: RngState::default(), params };
        ck.save(&path).unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn hash_tracks_config() {
        let a = ModelConfig::toy();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.num_classes = 2;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
