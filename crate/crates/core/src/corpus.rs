//! Dataset records, the JSON-lines manifest format, split handling and the
//! target-verb label vocabulary.
//!
//! A manifest line looks like
//!
//! ```text
//! {"id":"blow_017","query":"blowing a balloon","verb":"blow","target":"aufblasen","split":"train","row":17}
//! ```
//!
//! Query phrases are lowercased on load; target verbs are kept verbatim.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag {other:?}")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Target language of the verb labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    De,
    Es,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::De => "de",
            Language::Es => "es",
        }
    }

    /// Label count of the released data for this language.
    pub fn reference_label_count(self) -> usize {
        match self {
            Language::De => 154,
            Language::Es => 136,
        }
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "de" => Ok(Language::De),
            "es" => Ok(Language::Es),
            other => Err(format!("unknown language {other:?}, expected de or es")),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One image annotated with its query phrase, English verb and translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    #[serde(rename = "query")]
    pub query_phrase: String,
    #[serde(rename = "verb")]
    pub english_verb: String,
    #[serde(rename = "target")]
    pub target_verb: String,
    pub split: Split,
    #[serde(rename = "row")]
    pub feature_row: usize,
}

// Wire form: `row` is signed and `split` a free string so both can be
// rejected with a validation error rather than a bare parse failure.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    query: String,
    verb: String,
    target: String,
    split: String,
    row: i64,
}

impl RawSample {
    fn validate(self) -> Result<Sample> {
        let split = self.split.parse::<Split>().map_err(|msg| Error::InvalidSample {
            id: self.id.clone(),
            msg,
        })?;
        if self.row < 0 {
            return Err(Error::InvalidSample {
                id: self.id,
                msg: format!("negative feature row {}", self.row),
            });
        }
        Ok(Sample {
            query_phrase: self.query.to_lowercase(),
            english_verb: self.verb,
            target_verb: self.target,
            split,
            feature_row: self.row as usize,
            id: self.id,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    /// Filled from the sidecar run configuration, not the manifest file.
    pub language: Option<Language>,
    pub samples: Vec<Sample>,
    pub feature_file: Option<PathBuf>,
    pub embedding_file: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            language: None,
            samples,
            feature_file: None,
            embedding_file: None,
        })
    }

    pub fn split(&self, split: Split) -> Vec<Sample> {
        filter_split(self, split)
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts: BTreeMap<Split, usize> = Split::ALL.iter().map(|&s| (s, 0)).collect();
        for s in &self.samples {
            *counts.entry(s.split).or_default() += 1;
        }
        counts
    }

    /// Checks every sample's feature row against a store of `count` rows.
    pub fn check_feature_rows(&self, count: usize) -> Result<()> {
        for s in &self.samples {
            if s.feature_row >= count {
                return Err(Error::InvalidSample {
                    id: s.id.clone(),
                    msg: format!("feature row {} >= feature count {count}", s.feature_row),
                });
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        samples.push(raw.validate()?);
    }
    DatasetManifest::new(samples)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for s in &manifest.samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Ordered set of target-verb labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    /// Builds a vocabulary from an explicit label list, e.g. one stored in a
    /// checkpoint. Duplicates are rejected.
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate label {l:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    /// Maps each sample's target verb to its label index.
    pub fn encode(&self, samples: &[Sample]) -> Result<Vec<usize>> {
        samples
            .iter()
            .map(|s| {
                self.get(&s.target_verb).ok_or_else(|| Error::InvalidSample {
                    id: s.id.clone(),
                    msg: format!("target verb {:?} not in label vocabulary", s.target_verb),
                })
            })
            .collect()
    }
}

/// Sorted, deduplicated target verbs of `samples`.
pub fn build_label_vocab(samples: &[Sample]) -> Result<LabelVocab> {
    if samples.is_empty() {
        return Err(Error::Empty("build_label_vocab"));
    }
    let mut labels: Vec<String> = samples.iter().map(|s| s.target_verb.clone()).collect();
    labels.sort();
    labels.dedup();
    LabelVocab::from_labels(labels)
}

/// Most frequent target verb; ties go to the lexicographically smallest.
pub fn majority_label(samples: &[Sample]) -> Result<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.target_verb.as_str()).or_default() += 1;
    }
    // BTreeMap iterates in ascending key order, so keeping the first maximum
    // implements the tie-break.
    let mut best: Option<(&str, usize)> = None;
    for (label, count) in counts {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((label, count));
        }
    }
    best.map(|(l, _)| l.to_string()).ok_or(Error::Empty("majority_label"))
}

pub fn filter_split(manifest: &DatasetManifest, split: Split) -> Vec<Sample> {
    manifest.samples.iter().filter(|s| s.split == split).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(id: &str, target: &str, split: Split) -> Sample {
        Sample {
            id: id.into(),
            query_phrase: "riding a horse".into(),
            english_verb: "ride".into(),
            target_verb: target.into(),
            split,
            feature_row: 0,
        }
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn empty_manifest() {
        let f = write_lines(&[]);
        let m = load_manifest(f.path()).unwrap();
        assert!(m.samples.is_empty());
    }

    #[test]
    fn single_record() {
        let f = write_lines(&[
            r#"{"id":"a","query":"blowing a balloon","verb":"blow","target":"aufblasen","split":"train","row":0}"#,
        ]);
        let m = load_manifest(f.path()).unwrap();
        assert_eq!(m.samples.len(), 1);
        let s = &m.samples[0];
        assert_eq!(s.id, "a");
        assert_eq!(s.query_phrase, "blowing a balloon");
        assert_eq!(s.english_verb, "blow");
        assert_eq!(s.target_verb, "aufblasen");
        assert_eq!(s.split, Split::Train);
        assert_eq!(s.feature_row, 0);
    }

    #[test]
    fn duplicate_id_is_named() {
        let line = r#"{"id":"a","query":"q","verb":"v","target":"t","split":"train","row":0}"#;
        let f = write_lines(&[line, line]);
        match load_manifest(f.path()) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "a"),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[
            r#"{"id":"a","query":"q","verb":"v","target":"t","split":"train","row":0}"#,
            r#"{"id":"b","query":"q""#,
        ]);
        match load_manifest(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_split_and_negative_row() {
        let f = write_lines(&[r#"{"id":"a","query":"q","verb":"v","target":"t","split":"dev","row":0}"#]);
        assert!(matches!(load_manifest(f.path()), Err(Error::InvalidSample { .. })));
        let f = write_lines(&[r#"{"id":"a","query":"q","verb":"v","target":"t","split":"val","row":-3}"#]);
        match load_manifest(f.path()) {
            Err(Error::InvalidSample { id, msg }) => {
                assert_eq!(id, "a");
                assert!(msg.contains("negative"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn query_lowercased_target_kept() {
        let f = write_lines(&[
            r#"{"id":"a","query":"Riding A Horse","verb":"ride","target":"Reiten","split":"test","row":4}"#,
        ]);
        let m = load_manifest(f.path()).unwrap();
        assert_eq!(m.samples[0].query_phrase, "riding a horse");
        assert_eq!(m.samples[0].target_verb, "Reiten");
    }

    #[test]
    fn label_vocab_dedups_and_sorts() {
        let samples = vec![
            sample("1", "reiten", Split::Train),
            sample("2", "fahren", Split::Train),
            sample("3", "reiten", Split::Train),
        ];
        let v = build_label_vocab(&samples).unwrap();
        assert_eq!(v.labels(), ["fahren", "reiten"]);
        assert_eq!(v.len(), 2);
        assert_eq!(v.get("reiten"), Some(1));
        assert_eq!(v.label(0), Some("fahren"));

        let v = build_label_vocab(&samples[..1]).unwrap();
        assert_eq!(v.len(), 1);
        assert!(matches!(build_label_vocab(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn majority_and_tie_break() {
        let s = |t: &str| sample("x", t, Split::Train);
        assert_eq!(majority_label(&[s("a"), s("b"), s("a"), s("a")]).unwrap(), "a");
        assert_eq!(majority_label(&[s("b"), s("a"), s("b"), s("a")]).unwrap(), "a");
        assert!(majority_label(&[]).is_err());
    }

    #[test]
    fn filter_split_cases() {
        let m = DatasetManifest::new(vec![
            sample("1", "a", Split::Train),
            sample("2", "a", Split::Val),
            sample("3", "a", Split::Test),
        ])
        .unwrap();
        assert_eq!(filter_split(&m, Split::Train).len(), 1);

        let empty = DatasetManifest::new(vec![]).unwrap();
        assert!(filter_split(&empty, Split::Train).is_empty());

        let all_train =
            DatasetManifest::new(vec![sample("1", "a", Split::Train), sample("2", "b", Split::Train)]).unwrap();
        assert!(filter_split(&all_train, Split::Test).is_empty());
    }

    #[test]
    fn feature_row_check_names_sample() {
        let mut s = sample("dangling", "a", Split::Train);
        s.feature_row = 5;
        let m = DatasetManifest::new(vec![s]).unwrap();
        assert!(m.check_feature_rows(6).is_ok());
        match m.check_feature_rows(5) {
            Err(Error::InvalidSample { id, .. }) => assert_eq!(id, "dangling"),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn arb_samples() -> impl Strategy<Value = Vec<Sample>> {
        prop::collection::vec(
            (
                "[a-z]{1,8}( [a-zäöü]{1,6}){0,3}",
                "[a-z]{2,6}",
                "[a-zA-Zß]{2,8}",
                0usize..3,
                0usize..10_000,
            ),
            0..20,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (q, v, t, sp, row))| Sample {
                    id: format!("s{i}"),
                    query_phrase: q,
                    english_verb: v,
                    target_verb: t,
                    split: Split::ALL[sp],
                    feature_row: row,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn manifest_round_trip(samples in arb_samples()) {
            let m = DatasetManifest::new(samples).unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_manifest(&m, f.path()).unwrap();
            prop_assert_eq!(load_manifest(f.path()).unwrap(), m);
        }

        #[test]
        fn splits_partition(samples in arb_samples()) {
            let m = DatasetManifest::new(samples).unwrap();
            let parts: Vec<Vec<Sample>> = Split::ALL.iter().map(|&s| filter_split(&m, s)).collect();
            let total: usize = parts.iter().map(Vec::len).sum();
            prop_assert_eq!(total, m.samples.len());
            let mut ids: Vec<&str> = parts.iter().flatten().map(|s| s.id.as_str()).collect();
            ids.sort();
            let mut expected: Vec<&str> = m.samples.iter().map(|s| s.id.as_str()).collect();
            expected.sort();
            prop_assert_eq!(ids, expected);
        }

        #[test]
        fn majority_permutation_invariant(
            samples in arb_samples().prop_filter("non-empty", |s| !s.is_empty()),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = samples.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(majority_label(&samples).unwrap(), majority_label(&shuffled).unwrap());
        }
    }
}
