//! Model checkpoints: an 8-byte little-endian header length, a JSON header,
//! then every tensor as little-endian binary32 in header order.
//!
//! Parameters live in memory as `f64`; saving rounds them to `f32`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::corpus::LabelVocab;
use crate::error::{io_err, Error, Result};
use crate::models::{Affine, Dims, ModelKind, ModelParams};

const FORMAT: &str = "verbsense-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload that follows the header.
    pub offset: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub h: usize,
    pub d: usize,
    pub v: usize,
    pub image_dim: usize,
    pub seed: u64,
    pub rectify: bool,
    pub labels: Vec<String>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub labels: LabelVocab,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let p = &self.params;
        if self.labels.len() != p.dims.labels {
            return Err(Error::Checkpoint(format!(
                "{} labels for a model with {} outputs",
                self.labels.len(),
                p.dims.labels
            )));
        }
        let mut tensors = Vec::new();
        let mut payload = Vec::with_capacity(p.num_parameters() * 4);
        for (name, layer) in p.layers() {
            let mut push = |suffix: &str, shape: Vec<usize>, values: &mut dyn Iterator<Item = &f64>| {
                let offset = payload.len();
                for v in values {
                    payload.extend_from_slice(&(*v as f32).to_le_bytes());
                }
                tensors.push(TensorEntry {
                    name: format!("{name}.{suffix}"),
                    shape,
                    offset,
                    bytes: payload.len() - offset,
                });
            };
            let (r, c) = layer.weight.dim();
            push("weight", vec![r, c], &mut layer.weight.iter());
            push("bias", vec![layer.bias.len()], &mut layer.bias.iter());
        }
        let header = CheckpointHeader {
            format: FORMAT.into(),
            version: VERSION,
            kind: p.kind,
            h: p.dims.hidden,
            d: p.dims.embed_dim,
            v: p.dims.labels,
            image_dim: p.dims.image_dim,
            seed: self.seed,
            rectify: p.rectify,
            labels: self.labels.labels().to_vec(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + payload.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        if bytes.len() < 8 {
            return Err(bad("file shorter than header length".into()));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let json_end = 8usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad(format!("header length {header_len} exceeds file size")))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..json_end])?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(bad(format!("unsupported format {} v{}", header.format, header.version)));
        }
        let payload = &bytes[json_end..];

        let dims = Dims::new(header.image_dim, header.h, header.d, header.v);
        let mut params = ModelParams::zeros(header.kind, dims).with_rectifier(header.rectify);
        let expected: Vec<String> = params
            .layers()
            .iter()
            .flat_map(|(n, _)| [format!("{n}.weight"), format!("{n}.bias")])
            .collect();
        let names: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
        if names != expected {
            return Err(bad(format!("tensor list {names:?}, expected {expected:?}")));
        }

        let read = |t: &TensorEntry| -> Result<Vec<f64>> {
            let n: usize = t.shape.iter().product();
            if t.bytes != n * 4 {
                return Err(bad(format!("{}: {} bytes for shape {:?}", t.name, t.bytes, t.shape)));
            }
            let chunk = payload
                .get(t.offset..t.offset + t.bytes)
                .ok_or_else(|| bad(format!("{}: payload truncated", t.name)))?;
            Ok(chunk
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect())
        };
        let mut entries = header.tensors.iter();
        for (_, layer) in params.layers_mut() {
            let w = entries.next().expect("names checked");
            let b = entries.next().expect("names checked");
            let weight = Array2::from_shape_vec((w.shape[0], *w.shape.get(1).unwrap_or(&0)), read(w)?)
                .map_err(|e| bad(format!("{}: {e}", w.name)))?;
            let bias = Array1::from(read(b)?);
            *layer = Affine { weight, bias };
        }
        let total: usize = header.tensors.iter().map(|t| t.bytes).sum();
        if payload.len() != total {
            return Err(bad(format!(
                "payload has {} bytes, header describes {total}",
                payload.len()
            )));
        }
        params.validate()?;
        let labels = LabelVocab::from_labels(header.labels)?;
        if labels.len() != header.v {
            return Err(bad(format!("{} labels for v={}", labels.len(), header.v)));
        }
        Ok(Checkpoint {
            params,
            labels,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(io_err(path))?)
    }
}

/// Rounds every parameter through `f32`, matching what a save/load cycle does.
pub fn round_to_f32(params: &ModelParams) -> ModelParams {
    let mut p = params.clone();
    for (_, layer) in p.layers_mut() {
        layer.weight.mapv_inplace(|v| v as f32 as f64);
        layer.bias.mapv_inplace(|v| v as f32 as f64);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::init_params;

    fn labels(n: usize) -> LabelVocab {
        LabelVocab::from_labels((0..n).map(|i| format!("verb{i}")).collect()).unwrap()
    }

    #[test]
    fn round_trip_every_kind() {
        for kind in ModelKind::ALL {
            let params = init_params(kind, Dims::new(6, 4, 3, 5), 17).unwrap();
            let ck = Checkpoint {
                params: params.clone(),
                labels: labels(5),
                seed: 17,
            };
            let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
            assert_eq!(back.params, round_to_f32(&params));
            assert_eq!(back.labels, ck.labels);
            assert_eq!(back.seed, 17);
            // second cycle is exact
            let again = Checkpoint::from_bytes(&back.to_bytes().unwrap()).unwrap();
            assert_eq!(again, back);
        }
    }

    #[test]
    fn header_lists_tensors_in_order() {
        let params = init_params(ModelKind::Multimodal, Dims::new(6, 4, 3, 5), 1).unwrap();
        let bytes = Checkpoint {
            params,
            labels: labels(5),
            seed: 1,
        }
        .to_bytes()
        .unwrap();
        let len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..8 + len]).unwrap();
        let names: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "text.weight",
                "text.bias",
                "fusion.weight",
                "fusion.bias",
                "output.weight",
                "output.bias"
            ]
        );
        assert_eq!(header.tensors[2].shape, vec![4, 10]);
        assert_eq!(header.tensors[1].offset, 4 * 3 * 4);
        assert_eq!((header.h, header.d, header.v), (4, 3, 5));
    }

    #[test]
    fn rejects_corruption() {
        let params = init_params(ModelKind::Visual, Dims::new(6, 4, 0, 5), 1).unwrap();
        let bytes = Checkpoint {
            params,
            labels: labels(5),
            seed: 1,
        }
        .to_bytes()
        .unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..4]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn label_count_must_match() {
        let params = init_params(ModelKind::Visual, Dims::new(6, 4, 0, 5), 1).unwrap();
        assert!(Checkpoint {
            params,
            labels: labels(4),
            seed: 1
        }
        .to_bytes()
        .is_err());
    }
}
