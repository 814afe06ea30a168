//! The three disambiguation architectures and their parameters.
//!
//! All three are stacks of affine maps ending in a softmax over the label
//! vocabulary:
//!
//! * visual: `z = W_o (W_i x + b_i) + b_o`
//! * textual: `z = W_o (W_q q + b_q) + b_o`, with `q` the mean phrase embedding
//! * multimodal: `h_q = W_q q + b_q`, `z = W_o (W_h [x; h_q] + b_h) + b_o`
//!
//! The multimodal model concatenates the raw image vector with the textual
//! hidden layer, so it carries `W_q`, `W_h` and `W_o` but no `W_i`.
//! Output weights are stored `v x h`. An optional rectifier can be applied to
//! every hidden layer; it is off by default.

use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PhraseVector;

pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_IMAGE_DIM: usize = 512;
pub const DEFAULT_EMBED_DIM: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Visual,
    Textual,
    Multimodal,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Visual, ModelKind::Textual, ModelKind::Multimodal];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Visual => "visual",
            ModelKind::Textual => "textual",
            ModelKind::Multimodal => "multimodal",
        }
    }

    pub fn uses_image(self) -> bool {
        matches!(self, ModelKind::Visual | ModelKind::Multimodal)
    }

    pub fn uses_text(self) -> bool {
        matches!(self, ModelKind::Textual | ModelKind::Multimodal)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    /// Accepts both kind names and CLI modality names (`image`, `text`, `mm`).
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "visual" | "image" => Ok(ModelKind::Visual),
            "textual" | "text" => Ok(ModelKind::Textual),
            "multimodal" | "mm" => Ok(ModelKind::Multimodal),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

/// Layer sizes. `image_dim` is 512 for ResNet pool features and `embed_dim`
/// 300 for word2vec; both are configurable for small experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub image_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub labels: usize,
}

impl Dims {
    pub fn new(image_dim: usize, hidden: usize, embed_dim: usize, labels: usize) -> Self {
        Self {
            image_dim,
            hidden,
            embed_dim,
            labels,
        }
    }
}

/// `y = W x + b`, weights stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    fn xavier(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.gen_range(-bound..=bound));
        Self {
            weight,
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    /// Row-batched application: each row of `x` is one input.
    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Learned parameters of one architecture. Only the layers the kind uses
/// are present.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub dims: Dims,
    pub rectify: bool,
    /// `W_i`, `b_i`
    pub image: Option<Affine>,
    /// `W_q`, `b_q`
    pub text: Option<Affine>,
    /// `W_h`, `b_h`
    pub fusion: Option<Affine>,
    /// `W_o`, `b_o`
    pub output: Affine,
}

pub fn init_params(kind: ModelKind, dims: Dims, seed: u64) -> Result<ModelParams> {
    let Dims {
        image_dim,
        hidden,
        embed_dim,
        labels,
    } = dims;
    if hidden == 0 || labels == 0 || (kind.uses_image() && image_dim == 0) || (kind.uses_text() && embed_dim == 0) {
        return Err(Error::Config(format!("all dimensions must be >= 1, got {dims:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let image = (kind == ModelKind::Visual).then(|| Affine::xavier(hidden, image_dim, &mut rng));
    let text = kind.uses_text().then(|| Affine::xavier(hidden, embed_dim, &mut rng));
    let fusion = (kind == ModelKind::Multimodal).then(|| Affine::xavier(hidden, image_dim + hidden, &mut rng));
    let output = Affine::xavier(labels, hidden, &mut rng);
    Ok(ModelParams {
        kind,
        dims,
        rectify: false,
        image,
        text,
        fusion,
        output,
    })
}

impl ModelParams {
    /// Parameters of the right shapes with every value zero.
    pub fn zeros(kind: ModelKind, dims: Dims) -> Self {
        let h = dims.hidden;
        ModelParams {
            kind,
            dims,
            rectify: false,
            image: (kind == ModelKind::Visual).then(|| Affine::zeros(h, dims.image_dim)),
            text: kind.uses_text().then(|| Affine::zeros(h, dims.embed_dim)),
            fusion: (kind == ModelKind::Multimodal).then(|| Affine::zeros(h, dims.image_dim + h)),
            output: Affine::zeros(dims.labels, h),
        }
    }

    pub fn with_rectifier(mut self, on: bool) -> Self {
        self.rectify = on;
        self
    }

    /// Named layers in a fixed order: image, text, fusion, output.
    pub fn layers(&self) -> Vec<(&'static str, &Affine)> {
        let mut out = Vec::with_capacity(3);
        if let Some(a) = &self.image {
            out.push(("image", a));
        }
        if let Some(a) = &self.text {
            out.push(("text", a));
        }
        if let Some(a) = &self.fusion {
            out.push(("fusion", a));
        }
        out.push(("output", &self.output));
        out
    }

    pub fn layers_mut(&mut self) -> Vec<(&'static str, &mut Affine)> {
        let mut out = Vec::with_capacity(3);
        if let Some(a) = &mut self.image {
            out.push(("image", a));
        }
        if let Some(a) = &mut self.text {
            out.push(("text", a));
        }
        if let Some(a) = &mut self.fusion {
            out.push(("fusion", a));
        }
        out.push(("output", &mut self.output));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.layers().iter().map(|(_, a)| a.weight.len() + a.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|(_, a)| a.weight.iter().chain(a.bias.iter()).all(|v| v.is_finite()))
    }

    /// Checks that every present layer agrees with `dims` and the kind.
    pub fn validate(&self) -> Result<()> {
        let expect = Self::zeros(self.kind, self.dims);
        let shape = |a: &Option<Affine>| a.as_ref().map(|a| (a.weight.dim(), a.bias.len()));
        let pairs = [
            ("image layer", shape(&self.image), shape(&expect.image)),
            ("text layer", shape(&self.text), shape(&expect.text)),
            ("fusion layer", shape(&self.fusion), shape(&expect.fusion)),
            (
                "output layer",
                Some((self.output.weight.dim(), self.output.bias.len())),
                shape(&Some(expect.output)),
            ),
        ];
        for (what, got, want) in pairs {
            if got != want {
                return Err(Error::Checkpoint(format!(
                    "{what} has shape {got:?}, expected {want:?} for {} model",
                    self.kind
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(pub Vec<f64>);

impl Distribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Distribution {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Distribution(exps.into_iter().map(|e| e / sum).collect())
}

pub(crate) fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut p = z.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    p
}

/// Index of the largest value, smallest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Row-major batch of model inputs. Rows of `image` and `text` align.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub image: Option<Array2<f64>>,
    pub text: Option<Array2<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.image.as_ref().or(self.text.as_ref()).map_or(0, |a| a.nrows())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn single(image: Option<&[f32]>, text: Option<&PhraseVector>) -> Self {
        Batch {
            image: image.map(|x| Array2::from_shape_fn((1, x.len()), |(_, j)| x[j] as f64)),
            text: text.map(|q| Array2::from_shape_fn((1, q.values.len()), |(_, j)| q.values[j])),
        }
    }

    /// Rows `range` of this batch.
    pub fn slice_rows(&self, rows: &[usize]) -> Batch {
        let pick = |a: &Array2<f64>| a.select(Axis(0), rows);
        Batch {
            image: self.image.as_ref().map(pick),
            text: self.text.as_ref().map(pick),
        }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    /// Textual hidden layer (textual and multimodal kinds), post-rectifier.
    pub text_hidden: Option<Array2<f64>>,
    /// `[x; h_q]` for the multimodal kind.
    pub fused_input: Option<Array2<f64>>,
    /// Last hidden layer, post-rectifier.
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

fn rectify_if(on: bool, mut a: Array2<f64>) -> Array2<f64> {
    if on {
        a.mapv_inplace(|v| v.max(0.0));
    }
    a
}

fn require<'a>(what: &'static str, a: Option<&'a Array2<f64>>, cols: usize) -> Result<ArrayView2<'a, f64>> {
    let a = a.ok_or(Error::Config(format!("{what} input missing")))?;
    if a.ncols() != cols {
        return Err(Error::Dimension {
            what,
            expected: cols,
            found: a.ncols(),
        });
    }
    Ok(a.view())
}

impl ModelParams {
    pub(crate) fn forward_batch(&self, batch: &Batch) -> Result<Activations> {
        let d = self.dims;
        let (text_hidden, fused_input, hidden) = match self.kind {
            ModelKind::Visual => {
                let x = require("image", batch.image.as_ref(), d.image_dim)?;
                let h = self.image.as_ref().expect("visual model has image layer").apply(x);
                (None, None, rectify_if(self.rectify, h))
            }
            ModelKind::Textual => {
                let q = require("text", batch.text.as_ref(), d.embed_dim)?;
                let h = rectify_if(self.rectify, self.text.as_ref().expect("text layer").apply(q));
                (Some(h.clone()), None, h)
            }
            ModelKind::Multimodal => {
                let x = require("image", batch.image.as_ref(), d.image_dim)?;
                let q = require("text", batch.text.as_ref(), d.embed_dim)?;
                if x.nrows() != q.nrows() {
                    return Err(Error::Dimension {
                        what: "batch rows",
                        expected: x.nrows(),
                        found: q.nrows(),
                    });
                }
                let hq = rectify_if(self.rectify, self.text.as_ref().expect("text layer").apply(q));
                let fused = concatenate(Axis(1), &[x, hq.view()]).expect("row counts agree");
                let h = self.fusion.as_ref().expect("fusion layer").apply(fused.view());
                (Some(hq), Some(fused), rectify_if(self.rectify, h))
            }
        };
        let logits = self.output.apply(hidden.view());
        Ok(Activations {
            text_hidden,
            fused_input,
            hidden,
            logits,
        })
    }

    /// Logits for every row of `batch`.
    pub fn logits_batch(&self, batch: &Batch) -> Result<Array2<f64>> {
        Ok(self.forward_batch(batch)?.logits)
    }

    /// Class probabilities for every row of `batch`.
    pub fn probs_batch(&self, batch: &Batch) -> Result<Array2<f64>> {
        Ok(softmax_rows(&self.logits_batch(batch)?))
    }

    fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind.as_str(),
                found: self.kind.as_str(),
            });
        }
        Ok(())
    }

    fn single_logits(&self, batch: Batch) -> Result<Logits> {
        let z = self.logits_batch(&batch)?;
        Ok(Logits(z.row(0).to_vec()))
    }
}

pub fn forward_visual(params: &ModelParams, image: &[f32]) -> Result<Logits> {
    params.expect_kind(ModelKind::Visual)?;
    params.single_logits(Batch::single(Some(image), None))
}

pub fn forward_textual(params: &ModelParams, phrase: &PhraseVector) -> Result<Logits> {
    params.expect_kind(ModelKind::Textual)?;
    params.single_logits(Batch::single(None, Some(phrase)))
}

pub fn forward_multimodal(params: &ModelParams, image: &[f32], phrase: &PhraseVector) -> Result<Logits> {
    params.expect_kind(ModelKind::Multimodal)?;
    params.single_logits(Batch::single(Some(image), Some(phrase)))
}

/// Inputs for one prediction; the model picks what its kind needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Inputs<'a> {
    pub image: Option<&'a [f32]>,
    pub phrase: Option<&'a PhraseVector>,
}

pub fn predict(params: &ModelParams, inputs: Inputs<'_>) -> Result<(usize, Distribution)> {
    let logits = match params.kind {
        ModelKind::Visual => forward_visual(params, inputs.image.ok_or(Error::Config("image input missing".into()))?)?,
        ModelKind::Textual => {
            forward_textual(params, inputs.phrase.ok_or(Error::Config("text input missing".into()))?)?
        }
        ModelKind::Multimodal => forward_multimodal(
            params,
            inputs.image.ok_or(Error::Config("image input missing".into()))?,
            inputs.phrase.ok_or(Error::Config("text input missing".into()))?,
        )?,
    };
    Ok((argmax(&logits.0), softmax(&logits.0)))
}

/// Argmax label for every row of `batch`.
pub fn predict_batch(params: &ModelParams, batch: &Batch) -> Result<Vec<usize>> {
    let z = params.logits_batch(batch)?;
    Ok(z.rows().into_iter().map(|r| argmax(&r.to_vec())).collect())
}
