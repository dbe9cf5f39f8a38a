use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderSpec, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::Mat;

/// Trained weights with the spec that produced them. Floats are written
/// with shortest round-trip formatting, so reloading is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: EncoderSpec,
    pub thetas: Vec<Mat>,
    pub w_cls: Vec<f64>,
    pub b_cls: f64,
    pub seed: u64,
    #[serde(default)]
    pub train_meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(spec: EncoderSpec, params: ModelParams, seed: u64, train_meta: serde_json::Value) -> Self {
        Checkpoint {
            spec,
            thetas: params.thetas,
            w_cls: params.w_cls,
            b_cls: params.b_cls,
            seed,
            train_meta,
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            thetas: self.thetas.clone(),
            w_cls: self.w_cls.clone(),
            b_cls: self.b_cls,
        }
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string_pretty(ckpt)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint =
        serde_json::from_str(&text).map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
    ckpt.spec
        .validate()
        .and_then(|_| ckpt.params().validate(&ckpt.spec))
        .map_err(|e| Error::load(path.display().to_string(), e.to_string()))?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pooling;
    use crate::numerics::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = EncoderSpec::new(10, vec![6, 3], true, Pooling::Max, 0.4).unwrap();
        let mut rng = Rng::new(99);
        let mut params = ModelParams::xavier(&spec, &mut rng);
        params.b_cls = 0.1 + 0.2;
        params.thetas[0][(0, 0)] = 5e-324;
        let ckpt = Checkpoint::new(spec, params.clone(), 99, serde_json::json!({"epochs": 12}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &ckpt).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        for (a, b) in back.params().to_mats().iter().zip(params.to_mats().iter()) {
            assert_eq!(a.to_le_bytes(), b.to_le_bytes());
        }
    }

    #[test]
    fn inconsistent_shapes_rejected() {
        let spec = EncoderSpec::new(4, vec![2], false, Pooling::Mean, 0.1).unwrap();
        let mut ckpt = Checkpoint::new(spec.clone(), ModelParams::zeros(&spec), 0, serde_json::Value::Null);
        ckpt.w_cls.push(1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        save_checkpoint(&path, &ckpt).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
