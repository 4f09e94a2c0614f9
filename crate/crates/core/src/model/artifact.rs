//! Model artifact container.
//!
//! A single JSON document:
//!
//! ```text
//! { "format": "ttf-model/1",
//!   "config": { ...ModelConfig... },
//!   "tensors": [ { "name": "tower0.mixer.proj_w", "shape": [60, 29], "data": [...] }, ... ],
//!   "content_hash": "<sha256 hex>" }
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load is
//! bit-exact. The version id is the first 12 hex digits of the hash.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, MtFusionNet};
use crate::error::{Error, Result};

pub const FORMAT: &str = "ttf-model/1";
pub const VERSION_ID_LEN: usize = 12;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArtifactDoc {
    format: String,
    config: ModelConfig,
    tensors: Vec<TensorRecord>,
    content_hash: String,
}

pub fn version_id(model: &MtFusionNet) -> String {
    model.content_hash()[..VERSION_ID_LEN].to_string()
}

pub fn to_bytes(model: &MtFusionNet) -> Result<Vec<u8>> {
    let doc = ArtifactDoc {
        format: FORMAT.to_string(),
        config: model.config().clone(),
        tensors: model
            .params()
            .tensors()
            .into_iter()
            .map(|(name, a)| TensorRecord {
                name,
                shape: [a.nrows(), a.ncols()],
                data: a.iter().copied().collect(),
            })
            .collect(),
        content_hash: model.content_hash(),
    };
    Ok(serde_json::to_vec(&doc)?)
}

pub fn from_bytes(bytes: &[u8]) -> Result<MtFusionNet> {
    let doc: ArtifactDoc =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptArtifact(e.to_string()))?;
    if doc.format != FORMAT {
        return Err(Error::CorruptArtifact(format!("unsupported format `{}`", doc.format)));
    }
    let mut model = MtFusionNet::new(doc.config.clone())?;
    {
        let names: Vec<String> = model.params().tensors().into_iter().map(|(n, _)| n).collect();
        let slots = model.params_mut().tensors_mut();
        if slots.len() != doc.tensors.len() {
            return Err(Error::CorruptArtifact(format!(
                "expected {} tensors, found {}",
                slots.len(),
                doc.tensors.len()
            )));
        }
        for ((slot, name), rec) in slots.into_iter().zip(&names).zip(doc.tensors) {
            if &rec.name != name || slot.dim() != (rec.shape[0], rec.shape[1]) {
                return Err(Error::CorruptArtifact(format!(
                    "tensor {} {:?} does not match expected {name} {:?}",
                    rec.name,
                    rec.shape,
                    slot.dim()
                )));
            }
            *slot = Array2::from_shape_vec((rec.shape[0], rec.shape[1]), rec.data)
                .map_err(|e| Error::CorruptArtifact(e.to_string()))?;
        }
    }
    let hash = model.content_hash();
    if hash != doc.content_hash {
        return Err(Error::CorruptArtifact(format!(
            "content hash {hash} does not match recorded {}",
            doc.content_hash
        )));
    }
    Ok(model)
}

pub fn save(model: &MtFusionNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MtFusionNet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BackboneKind, CovariateConfig};
    use crate::ltv::ChannelId;
    use crate::preprocess::SmoothScales;
    use crate::trapezoid::WindowSpec;

    fn model() -> MtFusionNet {
        let mut cfg = ModelConfig::new(WindowSpec::new(4, 5, 3, 2).unwrap());
        cfg.scales = SmoothScales::new(vec![1, 3]).unwrap();
        cfg.backbone = BackboneKind::Mixer;
        cfg.covariates = CovariateConfig::full(vec![ChannelId::new("x").unwrap()]);
        cfg.fusion_hidden = 7;
        cfg.seed = 11;
        MtFusionNet::new(cfg).unwrap()
    }

    #[test]
    fn bit_exact_round_trip() {
        let m = model();
        let bytes = to_bytes(&m).unwrap();
        let back = from_bytes(&bytes).unwrap();
        for ((_, a), (_, b)) in m.params().tensors().iter().zip(back.params().tensors()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(to_bytes(&back).unwrap(), bytes);
        assert_eq!(version_id(&back).len(), VERSION_ID_LEN);
    }

    #[test]
    fn tampering_is_detected() {
        let bytes = to_bytes(&model()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let idx = text.find("\"data\":[").unwrap() + 8;
        let mut tampered = text.clone();
        tampered.insert_str(idx, "1");
        assert!(matches!(
            from_bytes(tampered.as_bytes()),
            Err(Error::CorruptArtifact(_))
        ));
        assert!(from_bytes(b"{}").is_err());
    }
}
