//! On-disk model bundles: `spec.json`, `norm_stats.json`,
//! `history.json` and one `member_k.bin` weight blob per member.
//!
//! A blob is the 6-byte magic `CMDNN1`, a little-endian `u32` value count,
//! then that many little-endian `f32`s, tensors in layer order. Tensor
//! shapes live in `spec.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ensemble::EnsembleModel;
use super::network::{NetworkSpec, Params, Task};
use super::train::{NormStats, TrainConfig, TrainHistory};
use crate::export::{read_json, write_json};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"CMDNN1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub task: Task,
    pub network: NetworkSpec,
    pub param_shapes: Vec<Vec<usize>>,
    pub train_config: TrainConfig,
    pub member_seeds: Vec<u64>,
}

pub fn encode_params(p: &Params<f32>) -> Vec<u8> {
    let n: usize = p.tensors.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(10 + 4 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in p.tensors.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_params(spec: &NetworkSpec, bytes: &[u8]) -> Result<Params<f32>> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Parse("weight blob lacks the CMDNN1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let mut p = Params::<f32>::zeros(spec);
    let expected: usize = p.tensors.iter().map(Vec::len).sum();
    if n != expected || bytes.len() != 10 + 4 * n {
        return Err(Error::Shape(format!(
            "weight blob holds {n} values in {} bytes, network needs {expected}",
            bytes.len()
        )));
    }
    let mut chunks = bytes[10..].chunks_exact(4);
    for v in p.tensors.iter_mut().flatten() {
        *v = f32::from_le_bytes(chunks.next().expect("length checked").try_into().expect("4 bytes"));
    }
    Ok(p)
}

pub fn save(model: &EnsembleModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = BundleSpec {
        task: model.task,
        network: model.spec.clone(),
        param_shapes: model.spec.param_shapes(),
        train_config: model.train_config,
        member_seeds: model.member_seeds.clone(),
    };
    write_json(&dir.join("spec.json"), &spec)?;
    write_json(&dir.join("norm_stats.json"), &model.norm)?;
    write_json(&dir.join("history.json"), &model.histories)?;
    for (k, p) in model.members.iter().enumerate() {
        let path = dir.join(format!("member_{k}.bin"));
        fs::write(&path, encode_params(p)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn load(dir: &Path) -> Result<EnsembleModel> {
    let spec: BundleSpec = read_json(&dir.join("spec.json"))?;
    if spec.param_shapes != spec.network.param_shapes() {
        return Err(Error::Shape("spec.json shapes disagree with the network description".into()));
    }
    let norm: NormStats = read_json(&dir.join("norm_stats.json"))?;
    let history_path = dir.join("history.json");
    let histories: Vec<TrainHistory> = if history_path.exists() {
        read_json(&history_path)?
    } else {
        vec![]
    };
    let members = (0..spec.member_seeds.len())
        .map(|k| {
            let path = dir.join(format!("member_{k}.bin"));
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            decode_params(&spec.network, &bytes)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel {
        task: spec.task,
        spec: spec.network,
        norm,
        train_config: spec.train_config,
        member_seeds: spec.member_seeds,
        members,
        histories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_round_trip() {
        let spec = NetworkSpec::new(2, 0.125).unwrap();
        let p = Params::<f32>::he_init(&spec, 3);
        let bytes = encode_params(&p);
        assert_eq!(&bytes[..6], MAGIC);
        assert_eq!(decode_params(&spec, &bytes).unwrap(), p);
        assert!(decode_params(&spec, &bytes[..bytes.len() - 4]).is_err());
        let other = NetworkSpec::new(1, 0.125).unwrap();
        assert!(decode_params(&other, &bytes).is_err());
    }
}
