//! Cross-entropy objective, analytic gradients and the minibatch SGD loop.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_label_vocab, DatasetManifest, LabelVocab, Sample, Split};
use crate::error::{io_err, Error, Result};
use crate::features::{embed_phrase_with, EmbeddingTable, FeatureStore, OovPolicy};
use crate::models::{
    init_params, predict_batch, softmax_rows, Batch, Dims, Distribution, ModelKind, ModelParams, DEFAULT_HIDDEN,
};

/// Floor added inside the log so a zero probability gives a finite loss.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub hidden: usize,
    pub rectify: bool,
    pub oov_policy: OovPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-4,
            max_epochs: 200,
            patience: 20,
            seed: 0,
            shuffle: true,
            hidden: DEFAULT_HIDDEN,
            rectify: false,
            oov_policy: OovPolicy::Skip,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gradient of the mean batch loss, shaped like the owning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParams);

pub fn cross_entropy(dist: &Distribution, gold: usize) -> Result<f64> {
    let p = dist.0.get(gold).ok_or(Error::IndexOutOfRange {
        index: gold,
        size: dist.0.len(),
    })?;
    Ok(-(p + LOG_FLOOR).ln())
}

/// Mean cross-entropy of `batch` and its gradient with respect to every
/// parameter.
pub fn backward(params: &ModelParams, batch: &Batch, gold: &[usize]) -> Result<(f64, Gradients)> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Empty("backward"));
    }
    if gold.len() != n {
        return Err(Error::Dimension {
            what: "gold labels",
            expected: n,
            found: gold.len(),
        });
    }
    let v = params.dims.labels;
    if let Some(&bad) = gold.iter().find(|&&g| g >= v) {
        return Err(Error::IndexOutOfRange { index: bad, size: v });
    }

    let acts = params.forward_batch(batch)?;
    let probs = softmax_rows(&acts.logits);
    let mut loss = 0.0;
    for (row, &g) in probs.rows().into_iter().zip(gold) {
        loss += -(row[g] + LOG_FLOOR).ln();
    }
    loss /= n as f64;

    // d(mean loss)/dz = (p - onehot) / n
    let mut dz = probs;
    for (i, &g) in gold.iter().enumerate() {
        dz[[i, g]] -= 1.0;
    }
    dz /= n as f64;

    let mut grads = ModelParams::zeros(params.kind, params.dims).with_rectifier(params.rectify);
    grads.output.weight = dz.t().dot(&acts.hidden);
    grads.output.bias = dz.sum_axis(Axis(0));
    let mut dh = dz.dot(&params.output.weight);
    if params.rectify {
        mask_inactive(&mut dh, &acts.hidden);
    }

    match params.kind {
        ModelKind::Visual => {
            let x = batch.image.as_ref().expect("checked by forward");
            let g = grads.image.as_mut().expect("visual grads");
            g.weight = dh.t().dot(x);
            g.bias = dh.sum_axis(Axis(0));
        }
        ModelKind::Textual => {
            let q = batch.text.as_ref().expect("checked by forward");
            let g = grads.text.as_mut().expect("text grads");
            g.weight = dh.t().dot(q);
            g.bias = dh.sum_axis(Axis(0));
        }
        ModelKind::Multimodal => {
            let fused = acts.fused_input.as_ref().expect("multimodal activations");
            let g = grads.fusion.as_mut().expect("fusion grads");
            g.weight = dh.t().dot(fused);
            g.bias = dh.sum_axis(Axis(0));

            let w_h = &params.fusion.as_ref().expect("fusion layer").weight;
            let dfused = dh.dot(w_h);
            let mut dhq = dfused.slice(s![.., params.dims.image_dim..]).to_owned();
            if params.rectify {
                mask_inactive(&mut dhq, acts.text_hidden.as_ref().expect("text hidden"));
            }
            let q = batch.text.as_ref().expect("checked by forward");
            let g = grads.text.as_mut().expect("text grads");
            g.weight = dhq.t().dot(q);
            g.bias = dhq.sum_axis(Axis(0));
        }
    }
    Ok((loss, Gradients(grads)))
}

fn mask_inactive(grad: &mut Array2<f64>, activation: &Array2<f64>) {
    Zip::from(grad).and(activation).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

/// `θ ← θ − lr·g` for every tensor.
pub fn sgd_step(params: &mut ModelParams, grads: &Gradients, lr: f64) -> Result<()> {
    let g = &grads.0;
    if g.kind != params.kind || g.dims != params.dims {
        return Err(Error::Config(format!(
            "gradient shape ({} {:?}) does not match parameters ({} {:?})",
            g.kind, g.dims, params.kind, params.dims
        )));
    }
    for ((_, p), (_, d)) in params.layers_mut().into_iter().zip(g.layers()) {
        p.weight.scaled_add(-lr, &d.weight);
        p.bias.scaled_add(-lr, &d.bias);
    }
    Ok(())
}

/// Model inputs and gold labels for a list of samples.
#[derive(Debug, Clone)]
pub struct EncodedSplit {
    pub batch: Batch,
    pub labels: Vec<usize>,
}

impl EncodedSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Looks up image rows and phrase embeddings for `samples`. Only the inputs
/// `kind` consumes are materialized.
pub fn encode_samples(
    samples: &[Sample],
    kind: ModelKind,
    store: &FeatureStore,
    table: Option<&EmbeddingTable>,
    vocab: &LabelVocab,
    oov: OovPolicy,
) -> Result<EncodedSplit> {
    let labels = vocab.encode(samples)?;
    let image = if kind.uses_image() {
        let dim = store.dim();
        let mut x = Array2::zeros((samples.len(), dim));
        for (i, s) in samples.iter().enumerate() {
            let row = store.row(s.feature_row).ok_or_else(|| Error::InvalidSample {
                id: s.id.clone(),
                msg: format!("feature row {} >= feature count {}", s.feature_row, store.count()),
            })?;
            for (dst, &src) in x.row_mut(i).iter_mut().zip(row) {
                *dst = src as f64;
            }
        }
        Some(x)
    } else {
        None
    };
    let text = if kind.uses_text() {
        let table = table.ok_or_else(|| Error::Config(format!("{kind} model needs an embedding table")))?;
        let mut q = Array2::zeros((samples.len(), table.dim()));
        for (i, s) in samples.iter().enumerate() {
            let pv = embed_phrase_with(&s.query_phrase, table, oov);
            q.row_mut(i).assign(&ndarray::ArrayView1::from(&pv.values));
        }
        Some(q)
    } else {
        None
    };
    Ok(EncodedSplit {
        batch: Batch { image, text },
        labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub vocab: LabelVocab,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

fn accuracy_of(params: &ModelParams, split: &EncodedSplit) -> Result<f64> {
    let preds = predict_batch(params, &split.batch)?;
    let correct = preds.iter().zip(&split.labels).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / split.len() as f64)
}

/// Trains one model on the manifest's train split, selecting the epoch with
/// the best validation accuracy.
pub fn train(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    table: Option<&EmbeddingTable>,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let train_samples = manifest.split(Split::Train);
    let val_samples = manifest.split(Split::Val);
    if train_samples.is_empty() {
        return Err(Error::Empty("train split"));
    }
    if val_samples.is_empty() {
        return Err(Error::Empty("val split"));
    }
    let vocab = build_label_vocab(&manifest.samples)?;
    let train_set = encode_samples(&train_samples, kind, store, table, &vocab, config.oov_policy)?;
    let val_set = encode_samples(&val_samples, kind, store, table, &vocab, config.oov_policy)?;

    let dims = Dims::new(
        store.dim(),
        config.hidden,
        table.map_or(0, EmbeddingTable::dim),
        vocab.len(),
    );
    train_encoded(kind, dims, &train_set, &val_set, config).map(|(params, best_epoch, history)| TrainOutcome {
        params,
        vocab,
        best_epoch,
        history,
    })
}

/// The epoch loop over already-encoded data. Returns the selected
/// parameters, their epoch (1-based) and the full history.
pub fn train_encoded(
    kind: ModelKind,
    dims: Dims,
    train_set: &EncodedSplit,
    val_set: &EncodedSplit,
    config: &TrainConfig,
) -> Result<(ModelParams, usize, Vec<EpochRecord>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("train split"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("val split"));
    }
    let mut params = init_params(kind, dims, config.seed)?.with_rectifier(config.rectify);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = train_set.batch.slice_rows(chunk);
            let gold: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let (loss, grads) = backward(&params, &batch, &gold)?;
            loss_sum += loss * chunk.len() as f64;
            sgd_step(&mut params, &grads, config.learning_rate)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_accuracy = accuracy_of(&params, val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });

        let improved = best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc);
        if improved {
            best = Some((val_accuracy, epoch, params.clone()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if epoch - best_epoch >= config.patience.max(1) && !improved {
            break;
        }
    }

    match best {
        Some((_, epoch, p)) => Ok((p, epoch, history)),
        // max_epochs == 0: nothing trained, return the initialization
        None => Ok((params, 0, history)),
    }
}

pub fn write_history_csv(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_accuracy")?;
        for r in history {
            writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_accuracy)?;
        }
        out.flush()
    };
    write().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::softmax;
    use rand::Rng;

    fn random_batch(n: usize, dims: Dims, rng: &mut ChaCha8Rng) -> Batch {
        Batch {
            image: Some(Array2::from_shape_simple_fn((n, dims.image_dim), || {
                rng.gen_range(-1.0..1.0)
            })),
            text: Some(Array2::from_shape_simple_fn((n, dims.embed_dim), || {
                rng.gen_range(-1.0..1.0)
            })),
        }
    }

    fn randomized(kind: ModelKind, dims: Dims, rng: &mut ChaCha8Rng) -> ModelParams {
        let mut p = ModelParams::zeros(kind, dims);
        for (_, a) in p.layers_mut() {
            a.weight.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
            a.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        p
    }

    fn per_sample_losses(p: &ModelParams, batch: &Batch, gold: &[usize]) -> Vec<f64> {
        let z = p.logits_batch(batch).unwrap();
        z.rows()
            .into_iter()
            .zip(gold)
            .map(|(r, &g)| cross_entropy(&softmax(&r.to_vec()), g).unwrap())
            .collect()
    }

    fn mean_loss(p: &ModelParams, batch: &Batch, gold: &[usize]) -> f64 {
        let l = per_sample_losses(p, batch, gold);
        l.iter().sum::<f64>() / l.len() as f64
    }

    #[test]
    fn cross_entropy_cases() {
        assert!(cross_entropy(&Distribution(vec![1.0, 0.0]), 0).unwrap().abs() < 1e-9);
        let u = Distribution(vec![0.25; 4]);
        for g in 0..4 {
            assert!((cross_entropy(&u, g).unwrap() - 4f64.ln()).abs() < 1e-6);
        }
        let half = Distribution(vec![0.5, 0.5]);
        assert!((cross_entropy(&half, 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert!(matches!(cross_entropy(&half, 2), Err(Error::IndexOutOfRange { .. })));
        assert!(cross_entropy(&Distribution(vec![0.0, 1.0]), 0).unwrap().is_finite());
    }

    #[test]
    fn output_gradient_is_p_minus_onehot() {
        // equal logits, v = 2, gold = 1: dL/dz = [0.5, -0.5]. With h = 1 and
        // unit hidden activation the output bias gradient equals dL/dz.
        let mut p = ModelParams::zeros(ModelKind::Visual, Dims::new(1, 1, 0, 2));
        p.image.as_mut().unwrap().bias[0] = 1.0;
        let batch = Batch::single(Some(&[0.0]), None);
        let (loss, g) = backward(&p, &batch, &[1]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-9);
        assert_eq!(g.0.output.bias.to_vec(), vec![0.5, -0.5]);
        assert_eq!(g.0.output.weight.column(0).to_vec(), vec![0.5, -0.5]);
    }

    #[test]
    fn duplicated_sample_gives_same_gradient() {
        let dims = Dims::new(6, 4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kind in ModelKind::ALL {
            let p = randomized(kind, dims, &mut rng);
            let one = random_batch(1, dims, &mut rng);
            let two = one.slice_rows(&[0, 0]);
            let (l1, g1) = backward(&p, &one, &[2]).unwrap();
            let (l2, g2) = backward(&p, &two, &[2, 2]).unwrap();
            assert!((l1 - l2).abs() < 1e-12);
            for ((_, a), (_, b)) in g1.0.layers().into_iter().zip(g2.0.layers()) {
                assert!(a.weight.iter().zip(b.weight.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
                assert!(a.bias.iter().zip(b.bias.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn batch_loss_is_mean_of_sample_losses() {
        let dims = Dims::new(6, 4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in ModelKind::ALL {
            let p = randomized(kind, dims, &mut rng);
            let batch = random_batch(7, dims, &mut rng);
            let gold: Vec<usize> = (0..7).map(|_| rng.gen_range(0..5)).collect();
            let (loss, _) = backward(&p, &batch, &gold).unwrap();
            assert!((loss - mean_loss(&p, &batch, &gold)).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_errors() {
        let dims = Dims::new(6, 4, 3, 5);
        let p = init_params(ModelKind::Visual, dims, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = random_batch(2, dims, &mut rng);
        assert!(matches!(backward(&p, &b, &[0]), Err(Error::Dimension { .. })));
        assert!(matches!(backward(&p, &b, &[0, 5]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(backward(&p, &b.slice_rows(&[]), &[]), Err(Error::Empty(_))));
    }

    fn layer_mut(m: &mut ModelParams, idx: usize) -> &mut crate::models::Affine {
        m.layers_mut().into_iter().nth(idx).unwrap().1
    }

    /// Central differences over every parameter, compared per tensor as
    /// ||analytic - numeric|| / (||analytic|| + ||numeric||).
    fn check_gradients(p: &ModelParams, batch: &Batch, gold: &[usize]) -> f64 {
        let eps = 1e-4;
        let (_, analytic) = backward(p, batch, gold).unwrap();
        let numeric = |layer: usize, slot: Option<(usize, usize)>, i: usize| {
            let bump = |delta: f64| {
                let mut q = p.clone();
                let a = layer_mut(&mut q, layer);
                match slot {
                    Some(ij) => a.weight[ij] += delta,
                    None => a.bias[i] += delta,
                }
                mean_loss(&q, batch, gold)
            };
            (bump(eps) - bump(-eps)) / (2.0 * eps)
        };
        let mut worst: f64 = 0.0;
        for (layer, (_, a)) in analytic.0.layers().into_iter().enumerate() {
            let mut diff = 0.0;
            let mut norm = 0.0;
            for ((r, c), &an) in a.weight.indexed_iter() {
                let num = numeric(layer, Some((r, c)), 0);
                diff += (an - num).powi(2);
                norm += an.powi(2) + num.powi(2);
            }
            for (i, &an) in a.bias.iter().enumerate() {
                let num = numeric(layer, None, i);
                diff += (an - num).powi(2);
                norm += an.powi(2) + num.powi(2);
            }
            worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-300));
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dims = Dims::new(6, 4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for kind in ModelKind::ALL {
            for _ in 0..10 {
                let p = randomized(kind, dims, &mut rng);
                let batch = random_batch(3, dims, &mut rng);
                let gold: Vec<usize> = (0..3).map(|_| rng.gen_range(0..5)).collect();
                let rel = check_gradients(&p, &batch, &gold);
                assert!(rel < 1e-4, "{kind}: relative error {rel}");
            }
        }
    }

    #[test]
    fn gradients_match_with_rectifier() {
        let dims = Dims::new(6, 4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in ModelKind::ALL {
            let p = randomized(kind, dims, &mut rng).with_rectifier(true);
            let batch = random_batch(2, dims, &mut rng);
            let rel = check_gradients(&p, &batch, &[1, 3]);
            assert!(rel < 1e-4, "{kind}: relative error {rel}");
        }
    }

    #[test]
    fn sgd_step_cases() {
        let dims = Dims::new(1, 1, 1, 1);
        let mut p = ModelParams::zeros(ModelKind::Visual, dims);
        p.output.weight[[0, 0]] = 1.0;
        let mut g = ModelParams::zeros(ModelKind::Visual, dims);
        g.output.weight[[0, 0]] = 2.0;
        let g = Gradients(g);

        let before = p.clone();
        sgd_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, before);

        sgd_step(&mut p, &g, 0.5).unwrap();
        assert_eq!(p.output.weight[[0, 0]], 0.0);

        let mut twice = before.clone();
        sgd_step(&mut twice, &g, 0.25).unwrap();
        sgd_step(&mut twice, &g, 0.25).unwrap();
        let mut once = before.clone();
        sgd_step(&mut once, &g, 0.5).unwrap();
        assert_eq!(twice, once);

        let wrong = Gradients(ModelParams::zeros(ModelKind::Textual, dims));
        assert!(sgd_step(&mut p, &wrong, 0.1).is_err());
    }

    #[test]
    fn single_step_descends() {
        let dims = Dims::new(6, 4, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in ModelKind::ALL {
            for _ in 0..20 {
                let mut p = randomized(kind, dims, &mut rng);
                let batch = random_batch(1, dims, &mut rng);
                let gold = [rng.gen_range(0..5)];
                let (before, g) = backward(&p, &batch, &gold).unwrap();
                sgd_step(&mut p, &g, 1e-3).unwrap();
                let after = mean_loss(&p, &batch, &gold);
                assert!(after < before, "{kind}: {after} >= {before}");
            }
        }
    }

    fn cluster_split(n: usize, rng: &mut ChaCha8Rng) -> EncodedSplit {
        let centers = [[4.0, 0.0], [-4.0, 0.0], [0.0, 4.0]];
        let mut x = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            x[[i, 0]] = centers[c][0] + rng.gen_range(-0.5..0.5);
            x[[i, 1]] = centers[c][1] + rng.gen_range(-0.5..0.5);
            labels.push(c);
        }
        EncodedSplit {
            batch: Batch {
                image: Some(x),
                text: None,
            },
            labels,
        }
    }

    #[test]
    fn zero_learning_rate_keeps_val_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tr = cluster_split(30, &mut rng);
        let va = cluster_split(9, &mut rng);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 5,
            patience: 10,
            hidden: 4,
            ..TrainConfig::default()
        };
        let (_, best, hist) = train_encoded(ModelKind::Visual, Dims::new(2, 4, 0, 3), &tr, &va, &cfg).unwrap();
        assert_eq!(hist.len(), 5);
        assert!(hist.windows(2).all(|w| w[0].val_accuracy == w[1].val_accuracy));
        assert_eq!(best, 1);
    }

    #[test]
    fn patience_stops_early_and_training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tr = cluster_split(60, &mut rng);
        let va = cluster_split(15, &mut rng);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            max_epochs: 500,
            patience: 3,
            hidden: 4,
            seed: 5,
            ..TrainConfig::default()
        };
        let dims = Dims::new(2, 4, 0, 3);
        let a = train_encoded(ModelKind::Visual, dims, &tr, &va, &cfg).unwrap();
        let b = train_encoded(ModelKind::Visual, dims, &tr, &va, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.2, b.2);
        assert!(a.2.len() < 500);
        assert_eq!(a.2.len(), a.1 + 3);
        assert_eq!(a.2[a.1 - 1].val_accuracy, 1.0);
    }

    #[test]
    fn history_csv_format() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_history_csv(
            &[EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                val_accuracy: 0.25,
            }],
            f.path(),
        )
        .unwrap();
        assert_eq!(
            std::fs::read_to_string(f.path()).unwrap(),
            "epoch,train_loss,val_accuracy\n1,0.5,0.25\n"
        );
    }
}
