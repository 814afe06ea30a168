//! Generated datasets for tests, demos and the toy command-line fixture.
//!
//! Cluster data is built so separability is structural rather than
//! statistical: class `c` puts `scale` on coordinate `c` and every coordinate
//! gets uniform noise in `[-noise, noise]`. With `noise < scale / 2` the
//! coordinate argmax recovers the class, so a linear classifier exists.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{write_manifest, DatasetManifest, Sample, Split};
use crate::decode::{BigramScorer, TokenId, DEFAULT_EOS};
use crate::error::{io_err, Error, Result};
use crate::features::{write_embedding_table, write_feature_store, EmbeddingTable, FeatureStore};

/// A manifest with its feature matrix and, when text is involved, embeddings.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub manifest: DatasetManifest,
    pub store: FeatureStore,
    pub table: Option<EmbeddingTable>,
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterSpec {
    pub classes: usize,
    pub dim: usize,
    pub scale: f32,
    pub noise: f32,
}

impl ClusterSpec {
    fn check(&self) -> Result<()> {
        if self.classes == 0 || self.dim < self.classes {
            return Err(Error::Config(format!(
                "need 1 <= classes <= dim, got {} classes in {} dims",
                self.classes, self.dim
            )));
        }
        if !(self.noise >= 0.0 && 2.0 * self.noise < self.scale) {
            return Err(Error::Config(format!(
                "noise {} must be below half the scale {}",
                self.noise, self.scale
            )));
        }
        Ok(())
    }

    fn point(&self, class: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let mut x: Vec<f32> = (0..self.dim).map(|_| rng.gen_range(-self.noise..=self.noise)).collect();
        x[class] += self.scale;
        x
    }
}

/// Split sizes for generated data.
#[derive(Debug, Clone, Copy)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    fn iter(self) -> impl Iterator<Item = Split> {
        std::iter::repeat_n(Split::Train, self.train)
            .chain(std::iter::repeat_n(Split::Val, self.val))
            .chain(std::iter::repeat_n(Split::Test, self.test))
    }
}

fn sample(id: String, query: String, verb: &str, target: String, split: Split, row: usize) -> Sample {
    Sample {
        id,
        query_phrase: query,
        english_verb: verb.into(),
        target_verb: target,
        split,
        feature_row: row,
    }
}

/// Image-only classes with round-robin labels, so every split is balanced.
pub fn separable_visual(spec: ClusterSpec, sizes: SplitSizes, seed: u64) -> Result<SyntheticData> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (i, split) in sizes.iter().enumerate() {
        let class = i % spec.classes;
        rows.push(spec.point(class, &mut rng));
        samples.push(sample(
            format!("{}-{i:04}", split.as_str()),
            "see".into(),
            "see",
            format!("class{class}"),
            split,
            i,
        ));
    }
    Ok(SyntheticData {
        manifest: DatasetManifest::new(samples)?,
        store: FeatureStore::from_rows(spec.dim, &rows)?,
        table: None,
    })
}

/// Labels determined by the pair (image cluster, phrase cluster).
///
/// The image carries one factor and the query phrase the other, so either
/// modality alone can reach at most `1 / other_clusters` accuracy.
pub fn paired_modalities(
    image: ClusterSpec,
    text: ClusterSpec,
    words_per_cluster: usize,
    sizes: SplitSizes,
    seed: u64,
) -> Result<SyntheticData> {
    image.check()?;
    text.check()?;
    if words_per_cluster == 0 {
        return Err(Error::Config("words_per_cluster must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(text.dim);
    for b in 0..text.classes {
        for k in 0..words_per_cluster {
            table.insert(format!("w{b}x{k}"), text.point(b, &mut rng))?;
        }
    }

    let pairs = image.classes * text.classes;
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (i, split) in sizes.iter().enumerate() {
        let label = i % pairs;
        let (a, b) = (label / text.classes, label % text.classes);
        rows.push(image.point(a, &mut rng));
        let w1 = rng.gen_range(0..words_per_cluster);
        let w2 = rng.gen_range(0..words_per_cluster);
        samples.push(sample(
            format!("{}-{i:04}", split.as_str()),
            format!("w{b}x{w1} w{b}x{w2}"),
            "act",
            format!("verb{a}{b}"),
            split,
            i,
        ));
    }
    Ok(SyntheticData {
        manifest: DatasetManifest::new(samples)?,
        store: FeatureStore::from_rows(image.dim, &rows)?,
        table: Some(table),
    })
}

// Toy German fixture: three ambiguous English verbs, two senses each.
struct Sense {
    english: &'static str,
    target: &'static str,
    sibling: &'static str,
    object: &'static str,
    phrases: [&'static str; 2],
}

const SENSES: [Sense; 6] = [
    Sense {
        english: "ride",
        target: "reiten",
        sibling: "fahren",
        object: "pferde",
        phrases: ["ride horse", "ride a horse"],
    },
    Sense {
        english: "ride",
        target: "fahren",
        sibling: "reiten",
        object: "fahrräder",
        phrases: ["ride bike", "ride a bike"],
    },
    Sense {
        english: "brush",
        target: "bürsten",
        sibling: "putzen",
        object: "hunde",
        phrases: ["brush dog", "brush the dog"],
    },
    Sense {
        english: "brush",
        target: "putzen",
        sibling: "bürsten",
        object: "zähne",
        phrases: ["brush teeth", "brush the teeth"],
    },
    Sense {
        english: "catch",
        target: "fangen",
        sibling: "angeln",
        object: "bälle",
        phrases: ["catch ball", "catch a ball"],
    },
    Sense {
        english: "catch",
        target: "angeln",
        sibling: "fangen",
        object: "fische",
        phrases: ["catch fish", "catch a fish"],
    },
];

const SUBJECTS: [&str; 4] = ["kinder", "männer", "frauen", "jungen"];
const ENGLISH_WORDS: [&str; 11] = [
    "a", "ball", "bike", "brush", "catch", "dog", "fish", "horse", "ride", "teeth", "the",
];

const TOY_SPLIT: SplitSizes = SplitSizes {
    train: 10,
    val: 3,
    test: 3,
};
const TOY_FEATURE_DIM: usize = 8;
const HARD_TEST_INDEX: usize = 14;
const HARD_SENSES: [usize; 2] = [0, 3];
const TOY_EMBED_DIM: usize = 6;

/// Decoder vocabulary of the toy fixture; id 0 is end-of-sentence.
pub fn toy_decoder_tokens() -> Vec<String> {
    let mut tokens = vec![DEFAULT_EOS.to_string(), "zwei".to_string()];
    tokens.extend(SUBJECTS.iter().map(|s| s.to_string()));
    tokens.extend(SENSES.iter().map(|s| s.target.to_string()));
    tokens.extend(SENSES.iter().map(|s| s.object.to_string()));
    tokens
}

#[derive(Serialize)]
struct SentenceLine<'a> {
    id: String,
    sample: String,
    reference: String,
    gold: &'a str,
    scorer: String,
}

/// Bigram translation model for one sentence: it copes with everything
/// except the verb, where it prefers `favoured` over the other sense.
fn toy_scorer(tokens: &[String], subject: &str, favoured: &str, other: &str, object: &str) -> Result<BigramScorer> {
    let v = tokens.len();
    let id = |t: &str| tokens.iter().position(|x| x == t).expect("toy token");
    let mut start = vec![0.0; v];
    start[id("zwei")] = 6.0;
    let mut rows = vec![vec![0.0; v]; v];
    for row in rows.iter_mut() {
        row[0] = 4.0;
    }
    rows[id("zwei")][id(subject)] = 6.0;
    for s in SUBJECTS {
        let row = &mut rows[id(s)];
        row[0] = -2.0;
        row[id(favoured)] = 3.0;
        row[id(other)] = 2.0;
    }
    for sense in &SENSES {
        rows[id(sense.target)][id(object)] = 5.0;
        rows[id(sense.target)][0] = 0.0;
    }
    BigramScorer::from_logits(0, start, rows)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Writes the toy fixture into `dir`: manifest, features, embeddings, a run
/// configuration, decoder vocabulary, per-sentence scorers and a sentence
/// list for decode evaluation. Output is a pure function of `seed`.
pub fn write_toy_fixture(dir: impl AsRef<Path>, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    let scorer_dir = dir.join("scorers");
    fs::create_dir_all(&scorer_dir).map_err(io_err(&scorer_dir))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let spec = ClusterSpec {
        classes: SENSES.len(),
        dim: TOY_FEATURE_DIM,
        scale: 3.0,
        noise: 1.2,
    };
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    for (label, sense) in SENSES.iter().enumerate() {
        for (k, split) in TOY_SPLIT.iter().enumerate() {
            // two misleading test cases: a bare verb and the other sense's image
            let hard = k == HARD_TEST_INDEX && HARD_SENSES.contains(&label);
            let image_label = if hard {
                SENSES
                    .iter()
                    .position(|s| s.target == sense.sibling)
                    .expect("sibling sense")
            } else {
                label
            };
            let row = rows.len();
            rows.push(spec.point(image_label, &mut rng));
            samples.push(sample(
                format!("{}-{}-{k:02}", sense.target, split.as_str()),
                if hard {
                    sense.english.into()
                } else {
                    sense.phrases[k % 2].into()
                },
                sense.english,
                sense.target.into(),
                split,
                row,
            ));
        }
    }
    // interleave labels so the file does not read as sorted blocks
    samples.shuffle(&mut rng);
    let manifest = DatasetManifest::new(samples)?;
    write_manifest(&manifest, dir.join("manifest.jsonl"))?;
    write_feature_store(
        &FeatureStore::from_rows(TOY_FEATURE_DIM, &rows)?,
        dir.join("features.msfv"),
    )?;

    let mut table = EmbeddingTable::new(TOY_EMBED_DIM);
    for w in ENGLISH_WORDS {
        // two decimals keep the text file short and exactly reproducible
        let v = (0..TOY_EMBED_DIM)
            .map(|_| (rng.gen_range(-1.0f32..1.0) * 100.0).round() / 100.0)
            .collect();
        table.insert(w, v)?;
    }
    write_embedding_table(&table, dir.join("embeddings.txt"))?;

    let tokens = toy_decoder_tokens();
    let vocab_tsv: String = tokens.iter().enumerate().map(|(i, t)| format!("{t}\t{i}\n")).collect();
    write_text(&dir.join("vocab.tsv"), &vocab_tsv)?;

    // two test sentences per sense; the baseline gets every third verb right
    let mut lines = String::new();
    let mut n = 0;
    for sense in &SENSES {
        for k in 0..2 {
            let id = format!("s{:02}", n + 1);
            let subject = SUBJECTS[n % SUBJECTS.len()];
            let (favoured, other) = if n % 3 == 0 {
                (sense.target, sense.sibling)
            } else {
                (sense.sibling, sense.target)
            };
            let scorer = toy_scorer(&tokens, subject, favoured, other, sense.object)?;
            let scorer_rel = format!("scorers/{id}.json");
            write_text(&dir.join(&scorer_rel), &serde_json::to_string(&scorer)?)?;
            let line = SentenceLine {
                id,
                sample: format!("{}-test-{:02}", sense.target, TOY_SPLIT.train + TOY_SPLIT.val + k),
                reference: format!("zwei {subject} {} {}", sense.target, sense.object),
                gold: sense.target,
                scorer: scorer_rel,
            };
            lines.push_str(&serde_json::to_string(&line)?);
            lines.push('\n');
            n += 1;
        }
    }
    write_text(&dir.join("sentences.jsonl"), &lines)?;

    let config = serde_json::json!({
        "language": "de",
        "modality": "mm",
        "seed": seed,
        "manifest": "manifest.jsonl",
        "features": "features.msfv",
        "embeddings": "embeddings.txt",
        "checkpoint": "out/model.ckpt",
        "output_dir": "out",
        "train": {
            "batch_size": 8,
            "learning_rate": 0.05,
            "max_epochs": 60,
            "patience": 15,
            "hidden": 16
        },
        "decode": {
            "vocab": "vocab.tsv",
            "sentences": "sentences.jsonl",
            "beam": 12,
            "max_len": 10
        }
    });
    write_text(
        &dir.join("config.json"),
        &format!("{}\n", serde_json::to_string_pretty(&config)?),
    )
}

/// Token id of `token` in the toy decoder vocabulary.
pub fn toy_token_id(token: &str) -> Option<TokenId> {
    toy_decoder_tokens()
        .iter()
        .position(|t| t == token)
        .map(|i| i as TokenId)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_label_vocab;

    #[test]
    fn visual_clusters_are_separable_by_coordinate() {
        let spec = ClusterSpec {
            classes: 3,
            dim: 5,
            scale: 4.0,
            noise: 1.9,
        };
        let data = separable_visual(
            spec,
            SplitSizes {
                train: 30,
                val: 6,
                test: 6,
            },
            3,
        )
        .unwrap();
        let vocab = build_label_vocab(&data.manifest.samples).unwrap();
        for s in &data.manifest.samples {
            let row = data.store.row(s.feature_row).unwrap();
            let best = (0..3).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert_eq!(vocab.label(best).unwrap(), s.target_verb);
        }
        assert_eq!(data.manifest.split(Split::Test).len(), 6);
    }

    #[test]
    fn rejects_overlapping_clusters() {
        let spec = ClusterSpec {
            classes: 3,
            dim: 5,
            scale: 2.0,
            noise: 1.0,
        };
        assert!(separable_visual(
            spec,
            SplitSizes {
                train: 3,
                val: 1,
                test: 1
            },
            0
        )
        .is_err());
    }

    #[test]
    fn paired_labels_factor_into_modalities() {
        let image = ClusterSpec {
            classes: 2,
            dim: 4,
            scale: 3.0,
            noise: 1.0,
        };
        let text = ClusterSpec {
            classes: 2,
            dim: 4,
            scale: 3.0,
            noise: 1.0,
        };
        let data = paired_modalities(
            image,
            text,
            3,
            SplitSizes {
                train: 40,
                val: 8,
                test: 8,
            },
            5,
        )
        .unwrap();
        assert_eq!(build_label_vocab(&data.manifest.samples).unwrap().len(), 4);
        for s in &data.manifest.samples {
            let b = &s.target_verb[5..6];
            assert!(s.query_phrase.split(' ').all(|w| &w[1..2] == b));
        }
    }

    #[test]
    fn toy_fixture_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_toy_fixture(a.path(), 7).unwrap();
        write_toy_fixture(b.path(), 7).unwrap();
        for f in [
            "manifest.jsonl",
            "features.msfv",
            "embeddings.txt",
            "vocab.tsv",
            "sentences.jsonl",
            "config.json",
            "scorers/s05.json",
        ] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn toy_vocab_starts_with_eos() {
        assert_eq!(toy_token_id(DEFAULT_EOS), Some(0));
        assert_eq!(toy_decoder_tokens().len(), 2 + SUBJECTS.len() + 2 * SENSES.len());
    }
}
