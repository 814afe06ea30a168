//! Run configuration and the commands behind the `verbsense` binary.
//!
//! Every command returns a serializable report. Reports carry no timestamps
//! or absolute paths, so re-running a command on the same inputs produces
//! byte-identical JSON.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{load_manifest, majority_label, DatasetManifest, Language, Sample, Split};
use crate::decode::{
    decode, merge_subwords, oracle_constraint, predicted_constraint, BigramScorer, Constraint, Hypothesis,
    ReplayScorer, StepScorer, TokenId, TokenVocab, DEFAULT_EOS,
};
use crate::error::{io_err, Error, Result};
use crate::eval::{accuracy, bleu_corpus, chance_baseline, majority_baseline_accuracy, verb_accuracy, MAX_NGRAM};
use crate::features::{load_embedding_table, load_feature_store, EmbeddingTable, FeatureStore};
use crate::models::{predict_batch, ModelKind};
use crate::training::{encode_samples, train, write_history_csv, TrainConfig};

pub const DEFAULT_BEAM: usize = 12;
pub const DEFAULT_MAX_LEN: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub vocab: Option<PathBuf>,
    pub sentences: Option<PathBuf>,
    /// Fallback scorer for sentences that do not name their own.
    pub scorer: Option<PathBuf>,
    pub beam: usize,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            vocab: None,
            sentences: None,
            scorer: None,
            beam: DEFAULT_BEAM,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

// On-disk form. Modality is a string so `mm`, `image` and `text` work too.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    language: Option<Language>,
    modality: String,
    seed: Option<u64>,
    manifest: PathBuf,
    features: PathBuf,
    embeddings: Option<PathBuf>,
    checkpoint: PathBuf,
    output_dir: PathBuf,
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    decode: DecodeConfig,
}

/// Paths are absolute or relative to the directory of the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub language: Option<Language>,
    pub modality: ModelKind,
    pub manifest: PathBuf,
    pub features: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
    /// `train.seed` is the run seed.
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let raw: RawRunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let at = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let mut train = raw.train;
        if let Some(seed) = raw.seed {
            train.seed = seed;
        }
        let mut decode = raw.decode;
        decode.vocab = decode.vocab.map(at);
        decode.sentences = decode.sentences.map(at);
        decode.scorer = decode.scorer.map(at);
        Ok(Self {
            language: raw.language,
            modality: raw.modality.parse().map_err(Error::Config)?,
            manifest: at(raw.manifest),
            features: at(raw.features),
            embeddings: raw.embeddings.map(at),
            checkpoint: at(raw.checkpoint),
            output_dir: at(raw.output_dir),
            train,
            decode,
        })
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

struct Loaded {
    manifest: DatasetManifest,
    store: FeatureStore,
    table: Option<EmbeddingTable>,
}

fn load_inputs(config: &RunConfig, want_text: bool) -> Result<Loaded> {
    let mut manifest = load_manifest(&config.manifest)?;
    if manifest.samples.is_empty() {
        return Err(Error::Config(format!(
            "{}: manifest has no samples",
            config.manifest.display()
        )));
    }
    manifest.language = config.language;
    manifest.feature_file = Some(config.features.clone());
    manifest.embedding_file = config.embeddings.clone();
    let store = load_feature_store(&config.features)?;
    manifest.check_feature_rows(store.count())?;
    let table = match (&config.embeddings, want_text) {
        (Some(p), true) => Some(load_embedding_table(p)?),
        (None, true) => {
            return Err(Error::Config(format!(
                "{} model needs an embeddings file",
                config.modality
            )))
        }
        (_, false) => None,
    };
    Ok(Loaded { manifest, store, table })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub language: Option<Language>,
    pub samples: usize,
    pub labels: usize,
    pub splits: BTreeMap<Split, usize>,
    pub feature_rows: usize,
    pub feature_dim: usize,
    pub embedding_tokens: Option<usize>,
    pub embedding_dim: Option<usize>,
    /// Query tokens with no embedding, sorted.
    pub oov_tokens: Vec<String>,
}

impl ValidateReport {
    pub fn summary(&self) -> String {
        format!("ok, {} samples, v={}", self.samples, self.labels)
    }
}

/// Loads every input and checks cross-references.
pub fn cmd_validate(config: &RunConfig) -> Result<ValidateReport> {
    // embeddings are checked whenever configured, even for image-only runs
    let want_text = config.modality.uses_text() || config.embeddings.is_some();
    let loaded = load_inputs(config, want_text)?;
    let m = &loaded.manifest;
    let vocab = crate::corpus::build_label_vocab(&m.samples)?;
    let splits = m.split_counts();
    for split in [Split::Train, Split::Val] {
        if splits[&split] == 0 {
            return Err(Error::Config(format!(
                "{}: {split} split is empty",
                config.manifest.display()
            )));
        }
    }
    let mut oov: Vec<String> = match &loaded.table {
        Some(t) => m
            .samples
            .iter()
            .flat_map(|s| s.query_phrase.split_whitespace())
            .filter(|w| t.get(w).is_none())
            .map(str::to_string)
            .collect(),
        None => Vec::new(),
    };
    oov.sort();
    oov.dedup();
    Ok(ValidateReport {
        language: m.language,
        samples: m.samples.len(),
        labels: vocab.len(),
        splits,
        feature_rows: loaded.store.count(),
        feature_dim: loaded.store.dim(),
        embedding_tokens: loaded.table.as_ref().map(EmbeddingTable::len),
        embedding_dim: loaded.table.as_ref().map(EmbeddingTable::dim),
        oov_tokens: oov,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub modality: ModelKind,
    pub seed: u64,
    pub labels: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

pub fn history_path(config: &RunConfig) -> PathBuf {
    config.output_dir.join("history.csv")
}

/// Trains the configured model and writes the best checkpoint and the
/// per-epoch history.
pub fn cmd_train(config: &RunConfig) -> Result<TrainReport> {
    let loaded = load_inputs(config, config.modality.uses_text())?;
    let outcome = train(
        &loaded.manifest,
        &loaded.store,
        loaded.table.as_ref(),
        config.modality,
        &config.train,
    )?;
    for dir in [config.checkpoint.parent(), Some(config.output_dir.as_path())]
        .into_iter()
        .flatten()
    {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let best_val_accuracy = outcome
        .history
        .get(outcome.best_epoch.wrapping_sub(1))
        .map_or(0.0, |r| r.val_accuracy);
    Checkpoint {
        params: outcome.params,
        labels: outcome.vocab.clone(),
        seed: config.seed(),
    }
    .save(&config.checkpoint)?;
    write_history_csv(&outcome.history, history_path(config))?;
    Ok(TrainReport {
        modality: config.modality,
        seed: config.seed(),
        labels: outcome.vocab.len(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_accuracy,
    })
}

fn load_checkpoint(config: &RunConfig) -> Result<Checkpoint> {
    let ck = Checkpoint::load(&config.checkpoint)?;
    if ck.params.kind != config.modality {
        return Err(Error::KindMismatch {
            expected: config.modality.as_str(),
            found: ck.params.kind.as_str(),
        });
    }
    Ok(ck)
}

fn predict_samples(config: &RunConfig, ck: &Checkpoint, loaded: &Loaded, samples: &[Sample]) -> Result<Vec<usize>> {
    // predictions do not need gold labels, so encode against a dummy label
    let probe: Vec<Sample> = samples
        .iter()
        .map(|s| Sample {
            target_verb: ck.labels.labels()[0].clone(),
            ..s.clone()
        })
        .collect();
    let encoded = encode_samples(
        &probe,
        ck.params.kind,
        &loaded.store,
        loaded.table.as_ref(),
        &ck.labels,
        config.train.oov_policy,
    )?;
    predict_batch(&ck.params, &encoded.batch)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub system: String,
    pub accuracy: f64,
}

/// Accuracy table in the layout of the published comparison: chance,
/// majority and the trained model on the test split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateReport {
    pub language: Option<Language>,
    pub labels: usize,
    pub n_test: usize,
    pub rows: Vec<AccuracyRow>,
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<EvaluateReport> {
    let ck = load_checkpoint(config)?;
    let loaded = load_inputs(config, ck.params.kind.uses_text())?;
    let test = loaded.manifest.split(Split::Test);
    if test.is_empty() {
        return Err(Error::Config(format!(
            "{}: test split is empty",
            config.manifest.display()
        )));
    }
    let golds = ck.labels.encode(&test)?;
    let preds = predict_samples(config, &ck, &loaded, &test)?;
    let report = accuracy(&preds, &golds)?;
    let majority = majority_baseline_accuracy(&loaded.manifest.split(Split::Train), &test)?;
    let out = EvaluateReport {
        language: config.language,
        labels: ck.labels.len(),
        n_test: test.len(),
        rows: vec![
            AccuracyRow {
                system: "chance".into(),
                accuracy: chance_baseline(ck.labels.len())?,
            },
            AccuracyRow {
                system: "majority".into(),
                accuracy: majority,
            },
            AccuracyRow {
                system: ck.params.kind.as_str().into(),
                accuracy: report.accuracy,
            },
        ],
    };
    write_json(&out, &config.output_dir.join("evaluate.json"))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub query: String,
    pub gold: String,
    pub predicted: String,
}

pub fn cmd_predict(config: &RunConfig, split: Option<Split>) -> Result<Vec<Prediction>> {
    let ck = load_checkpoint(config)?;
    let loaded = load_inputs(config, ck.params.kind.uses_text())?;
    let samples = match split {
        Some(s) => loaded.manifest.split(s),
        None => loaded.manifest.samples.clone(),
    };
    let preds = predict_samples(config, &ck, &loaded, &samples)?;
    Ok(samples
        .into_iter()
        .zip(preds)
        .map(|(s, p)| Prediction {
            predicted: ck.labels.label(p).unwrap_or_default().to_string(),
            id: s.id,
            query: s.query_phrase,
            gold: s.target_verb,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub language: Option<Language>,
    pub labels: usize,
    pub n_test: usize,
    pub chance: f64,
    pub majority_label: String,
    pub majority: f64,
    /// Chance level at the label count of the released data.
    pub reference_chance: Option<f64>,
}

/// Chance and majority baselines straight from the manifest.
pub fn cmd_baseline(config: &RunConfig) -> Result<BaselineReport> {
    let mut manifest = load_manifest(&config.manifest)?;
    if manifest.samples.is_empty() {
        return Err(Error::Config(format!(
            "{}: manifest has no samples",
            config.manifest.display()
        )));
    }
    manifest.language = config.language;
    let vocab = crate::corpus::build_label_vocab(&manifest.samples)?;
    let train = manifest.split(Split::Train);
    let test = manifest.split(Split::Test);
    Ok(BaselineReport {
        language: config.language,
        labels: vocab.len(),
        n_test: test.len(),
        chance: chance_baseline(vocab.len())?,
        majority_label: majority_label(&train)?,
        majority: majority_baseline_accuracy(&train, &test)?,
        reference_chance: config
            .language
            .map(|l| chance_baseline(l.reference_label_count()))
            .transpose()?,
    })
}

/// Any scorer the decoder can be pointed at from a file.
pub enum FileScorer {
    Bigram(BigramScorer),
    Replay(ReplayScorer),
}

impl FileScorer {
    /// `.jsonl` files are replay tables, anything else a bigram model.
    pub fn load(path: impl AsRef<Path>, eos: TokenId) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "jsonl") {
            Ok(Self::Replay(ReplayScorer::load(path, eos)?))
        } else {
            let s = BigramScorer::load(path)?;
            if s.eos != eos {
                return Err(Error::Config(format!(
                    "{}: scorer eos {} but vocabulary eos {eos}",
                    path.display(),
                    s.eos
                )));
            }
            Ok(Self::Bigram(s))
        }
    }

    fn inner(&self) -> &(dyn StepScorer + Sync) {
        match self {
            Self::Bigram(s) => s,
            Self::Replay(s) => s,
        }
    }
}

impl StepScorer for FileScorer {
    fn vocab_size(&self) -> usize {
        self.inner().vocab_size()
    }
    fn eos(&self) -> TokenId {
        self.inner().eos()
    }
    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        self.inner().score(prefix)
    }
}

fn load_vocab(path: Option<&Path>) -> Result<(TokenVocab, TokenId)> {
    let path = path.ok_or_else(|| Error::Config("no decoder vocabulary configured".into()))?;
    let vocab = TokenVocab::load(path)?;
    let eos = vocab
        .id(DEFAULT_EOS)
        .ok_or_else(|| Error::Config(format!("{}: vocabulary has no {DEFAULT_EOS}", path.display())))?;
    Ok((vocab, eos))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeOutput {
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
    pub finished: bool,
}

impl DecodeOutput {
    fn new(h: &Hypothesis, vocab: &TokenVocab) -> Self {
        Self {
            text: merge_subwords(&vocab.decode(h.output())).join(" "),
            tokens: h.output().to_vec(),
            logprob: h.logprob,
            finished: h.finished,
        }
    }
}

/// Reads one constraint phrase per line.
pub fn read_constraint_file(path: impl AsRef<Path>, vocab: &TokenVocab, eos: TokenId) -> Result<Constraint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut sequences = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let words: Vec<&str> = line.split_whitespace().collect();
        if words.is_empty() {
            continue;
        }
        let ids = vocab.encode(&words).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        sequences.push(ids);
    }
    Constraint::new(sequences, vocab.len(), eos)
}

/// Decodes a single sentence, optionally under constraints.
pub fn cmd_decode(
    scorer: &Path,
    vocab: &Path,
    constraints: Option<&Path>,
    beam: usize,
    max_len: usize,
) -> Result<DecodeOutput> {
    let (vocab, eos) = load_vocab(Some(vocab))?;
    let scorer = FileScorer::load(scorer, eos)?;
    if scorer.vocab_size() != vocab.len() {
        return Err(Error::Dimension {
            what: "scorer vocabulary",
            expected: vocab.len(),
            found: scorer.vocab_size(),
        });
    }
    let constraint = match constraints {
        Some(p) => read_constraint_file(p, &vocab, eos)?,
        None => Constraint::none(),
    };
    let h = decode(&scorer, &constraint, beam, max_len)?;
    Ok(DecodeOutput::new(&h, &vocab))
}

/// One line of the sentence list used by decode evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceRecord {
    pub id: String,
    /// Manifest sample whose image and query feed the verb predictor.
    pub sample: String,
    pub reference: String,
    pub gold: String,
    /// Relative to the sentence file; falls back to the configured scorer.
    #[serde(default)]
    pub scorer: Option<PathBuf>,
}

pub fn load_sentences(path: impl AsRef<Path>) -> Result<Vec<SentenceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        rec.scorer = rec.scorer.map(|p| if p.is_absolute() { p } else { base.join(p) });
        out.push(rec);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{}: no sentences", path.display())));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Baseline,
    Predicted,
    Oracle,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Baseline, Condition::Predicted, Condition::Oracle];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionOutput {
    pub text: String,
    pub logprob: f64,
    /// The constraint could not be met; `text` is the unconstrained output.
    pub infeasible: bool,
    pub finished: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceResult {
    pub id: String,
    pub gold: String,
    pub predicted_verb: String,
    pub baseline: ConditionOutput,
    pub predicted: ConditionOutput,
    pub oracle: ConditionOutput,
}

impl SentenceResult {
    pub fn get(&self, c: Condition) -> &ConditionOutput {
        match c {
            Condition::Baseline => &self.baseline,
            Condition::Predicted => &self.predicted,
            Condition::Oracle => &self.oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemScore {
    pub system: Condition,
    pub bleu: f64,
    /// Not computed; kept so the table has the usual columns.
    pub meteor: Option<f64>,
    pub verb_accuracy: f64,
    pub infeasible: usize,
    pub unfinished: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeEvalReport {
    pub n: usize,
    pub beam: usize,
    pub max_len: usize,
    pub systems: Vec<SystemScore>,
    pub sentences: Vec<SentenceResult>,
}

impl DecodeEvalReport {
    pub fn system(&self, c: Condition) -> &SystemScore {
        self.systems
            .iter()
            .find(|s| s.system == c)
            .expect("all conditions are scored")
    }
}

fn constrained_or_fallback<S: StepScorer + ?Sized>(
    scorer: &S,
    constraint: Result<Constraint>,
    fallback: &ConditionOutput,
    beam: usize,
    max_len: usize,
    vocab: &TokenVocab,
) -> Result<ConditionOutput> {
    let attempt = constraint.and_then(|c| decode(scorer, &c, beam, max_len));
    match attempt {
        Ok(h) => {
            let d = DecodeOutput::new(&h, vocab);
            Ok(ConditionOutput {
                text: d.text,
                logprob: d.logprob,
                infeasible: false,
                finished: d.finished,
                note: None,
            })
        }
        Err(e @ (Error::Infeasible(_) | Error::OutOfVocabulary(_))) => Ok(ConditionOutput {
            infeasible: true,
            note: Some(e.to_string()),
            ..fallback.clone()
        }),
        Err(e) => Err(e),
    }
}

/// Decodes every sentence unconstrained, constrained by the model's
/// predicted verb and constrained by the gold verb, then scores all three.
pub fn cmd_decode_eval(
    config: &RunConfig,
    sentences: Option<&Path>,
    scorer: Option<&Path>,
) -> Result<DecodeEvalReport> {
    let dc = &config.decode;
    let sentence_path = sentences
        .or(dc.sentences.as_deref())
        .ok_or_else(|| Error::Config("no sentence file configured".into()))?;
    let records = load_sentences(sentence_path)?;
    let (vocab, eos) = load_vocab(dc.vocab.as_deref())?;
    let default_scorer = scorer.or(dc.scorer.as_deref());

    // verb predictions for every referenced sample, in one batch
    let ck = load_checkpoint(config)?;
    let loaded = load_inputs(config, ck.params.kind.uses_text())?;
    let by_id: HashMap<&str, &Sample> = loaded.manifest.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let samples = records
        .iter()
        .map(|r| {
            by_id
                .get(r.sample.as_str())
                .map(|s| (*s).clone())
                .ok_or_else(|| Error::InvalidSample {
                    id: r.id.clone(),
                    msg: format!("unknown sample {:?}", r.sample),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let predicted: Vec<String> = predict_samples(config, &ck, &loaded, &samples)?
        .into_iter()
        .map(|p| ck.labels.label(p).unwrap_or_default().to_string())
        .collect();

    let results = records
        .par_iter()
        .zip(predicted.par_iter())
        .map(|(rec, pred)| -> Result<SentenceResult> {
            let path = rec
                .scorer
                .as_deref()
                .or(default_scorer)
                .ok_or_else(|| Error::InvalidSample {
                    id: rec.id.clone(),
                    msg: "no scorer given".into(),
                })?;
            let scorer = FileScorer::load(path, eos)?;
            let h = decode(&scorer, &Constraint::none(), dc.beam, dc.max_len)?;
            let d = DecodeOutput::new(&h, &vocab);
            let baseline = ConditionOutput {
                text: d.text,
                logprob: d.logprob,
                infeasible: false,
                finished: d.finished,
                note: None,
            };
            let predicted_out = constrained_or_fallback(
                &scorer,
                predicted_constraint(pred, &vocab, eos),
                &baseline,
                dc.beam,
                dc.max_len,
                &vocab,
            )?;
            let oracle = constrained_or_fallback(
                &scorer,
                oracle_constraint(&rec.gold.to_lowercase(), &vocab, eos),
                &baseline,
                dc.beam,
                dc.max_len,
                &vocab,
            )?;
            Ok(SentenceResult {
                id: rec.id.clone(),
                gold: rec.gold.clone(),
                predicted_verb: pred.clone(),
                baseline,
                predicted: predicted_out,
                oracle,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let references: Vec<Vec<&str>> = records
        .iter()
        .map(|r| r.reference.split_whitespace().collect())
        .collect();
    let golds: Vec<&str> = records.iter().map(|r| r.gold.as_str()).collect();
    let mut systems = Vec::new();
    for c in Condition::ALL {
        let hyps: Vec<Vec<&str>> = results
            .iter()
            .map(|r| r.get(c).text.split_whitespace().collect())
            .collect();
        systems.push(SystemScore {
            system: c,
            bleu: bleu_corpus(&hyps, &references)?.bleu,
            meteor: None,
            verb_accuracy: verb_accuracy(&hyps, &golds)?,
            infeasible: results.iter().filter(|r| r.get(c).infeasible).count(),
            unfinished: results.iter().filter(|r| !r.get(c).finished).count(),
        });
    }
    let report = DecodeEvalReport {
        n: results.len(),
        beam: dc.beam,
        max_len: dc.max_len,
        systems,
        sentences: results,
    };
    write_json(&report, &config.output_dir.join("decode_eval.json"))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub bleu: f64,
    pub precisions: [f64; MAX_NGRAM],
    pub brevity_penalty: f64,
    pub verb_accuracy: Option<f64>,
    pub meteor: Option<f64>,
    pub n: usize,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().map(str::to_string).collect())
}

/// Scores a hypothesis file against a reference file, one segment per line.
pub fn cmd_score(hyp: &Path, reference: &Path, verbs: Option<&Path>) -> Result<ScoreReport> {
    let hyps = read_lines(hyp)?;
    let refs = read_lines(reference)?;
    if hyps.len() != refs.len() {
        return Err(Error::Config(format!(
            "{} has {} lines but {} has {}",
            hyp.display(),
            hyps.len(),
            reference.display(),
            refs.len()
        )));
    }
    let tok = |lines: &[String]| -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    };
    let (h, r) = (tok(&hyps), tok(&refs));
    let bleu = bleu_corpus(&h, &r)?;
    let verb_accuracy = match verbs {
        Some(p) => Some(verb_accuracy(&h, &read_lines(p)?)?),
        None => None,
    };
    Ok(ScoreReport {
        bleu: bleu.bleu,
        precisions: bleu.precisions,
        brevity_penalty: bleu.brevity_penalty,
        verb_accuracy,
        meteor: None,
        n: h.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::write_toy_fixture;

    fn toy() -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        write_toy_fixture(dir.path(), 7).unwrap();
        let cfg = RunConfig::load(dir.path().join("config.json")).unwrap();
        (dir, cfg)
    }

    #[test]
    fn config_paths_resolve_against_config_dir() {
        let (dir, cfg) = toy();
        assert_eq!(cfg.manifest, dir.path().join("manifest.jsonl"));
        assert_eq!(
            cfg.decode.vocab.as_deref(),
            Some(dir.path().join("vocab.tsv").as_path())
        );
        assert_eq!(cfg.modality, ModelKind::Multimodal);
        assert_eq!(cfg.seed(), 7);
        assert_eq!(cfg.train.batch_size, 8);
    }

    #[test]
    fn validate_toy_fixture() {
        let (_dir, cfg) = toy();
        let r = cmd_validate(&cfg).unwrap();
        assert_eq!(r.summary(), "ok, 96 samples, v=6");
        assert!(r.oov_tokens.is_empty());
    }

    #[test]
    fn train_evaluate_and_decode_toy() {
        let (_dir, cfg) = toy();
        let t = cmd_train(&cfg).unwrap();
        assert!(t.best_val_accuracy > 0.9, "{t:?}");
        let e = cmd_evaluate(&cfg).unwrap();
        assert_eq!(e.rows[0].accuracy, 1.0 / 6.0);
        let d = cmd_decode_eval(&cfg, None, None).unwrap();
        assert_eq!(d.system(Condition::Oracle).verb_accuracy, 1.0);
        assert!(d.system(Condition::Baseline).verb_accuracy < 0.5);
    }

    #[test]
    fn score_reads_line_files() {
        let dir = tempfile::tempdir().unwrap();
        let h = dir.path().join("h.txt");
        let r = dir.path().join("r.txt");
        let v = dir.path().join("v.txt");
        fs::write(&h, "a b c d\n").unwrap();
        fs::write(&r, "a b c d e\n").unwrap();
        fs::write(&v, "c\n").unwrap();
        let s = cmd_score(&h, &r, Some(&v)).unwrap();
        assert!((s.bleu - 77.880078307).abs() < 1e-6);
        assert_eq!(s.verb_accuracy, Some(1.0));
        fs::write(&r, "a\nb\n").unwrap();
        assert!(cmd_score(&h, &r, None).is_err());
    }
}
