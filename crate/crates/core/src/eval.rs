//! Disambiguation accuracy, chance and majority baselines, corpus BLEU and
//! verb accuracy.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{majority_label, Sample};
use crate::error::{Error, Result};

pub const MAX_NGRAM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n: usize,
    /// label index -> (correct, total), keyed by the gold label.
    pub per_label_counts: BTreeMap<usize, (usize, usize)>,
}

pub fn accuracy(predictions: &[usize], golds: &[usize]) -> Result<EvalReport> {
    if predictions.len() != golds.len() {
        return Err(Error::Dimension {
            what: "predictions",
            expected: golds.len(),
            found: predictions.len(),
        });
    }
    if golds.is_empty() {
        return Err(Error::Empty("accuracy"));
    }
    let mut per_label_counts: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (&p, &g) in predictions.iter().zip(golds) {
        let entry = per_label_counts.entry(g).or_default();
        entry.1 += 1;
        if p == g {
            entry.0 += 1;
            correct += 1;
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / golds.len() as f64,
        n: golds.len(),
        per_label_counts,
    })
}

/// Expected accuracy of a uniform random guess over `v` labels.
pub fn chance_baseline(v: usize) -> Result<f64> {
    if v == 0 {
        return Err(Error::Empty("chance_baseline"));
    }
    Ok(1.0 / v as f64)
}

/// Accuracy on `eval` of always predicting the training majority label.
pub fn majority_baseline_accuracy(train: &[Sample], eval: &[Sample]) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Empty("majority baseline eval split"));
    }
    let label = majority_label(train)?;
    let hits = eval.iter().filter(|s| s.target_verb == label).count();
    Ok(hits as f64 / eval.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// 0..=100
    pub bleu: f64,
    /// Modified n-gram precisions for n = 1..=4, as fractions.
    pub precisions: [f64; MAX_NGRAM],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 with one reference per segment, clipped n-gram counts,
/// uniform weights and no smoothing.
pub fn bleu_corpus<S: AsRef<str>>(hypotheses: &[Vec<S>], references: &[Vec<S>]) -> Result<BleuReport> {
    if hypotheses.len() != references.len() {
        return Err(Error::Dimension {
            what: "references",
            expected: hypotheses.len(),
            found: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(Error::Empty("bleu_corpus"));
    }
    let mut matches = [0usize; MAX_NGRAM];
    let mut totals = [0usize; MAX_NGRAM];
    let mut hyp_len = 0;
    let mut ref_len = 0;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=MAX_NGRAM {
            let ref_counts = ngram_counts(reference, n);
            for (gram, count) in ngram_counts(hyp, n) {
                matches[n - 1] += count.min(ref_counts.get(&gram).copied().unwrap_or(0));
                totals[n - 1] += count;
            }
        }
    }

    let mut precisions = [0.0; MAX_NGRAM];
    for n in 0..MAX_NGRAM {
        if totals[n] > 0 {
            precisions[n] = matches[n] as f64 / totals[n] as f64;
        }
    }
    let brevity_penalty = if hyp_len >= ref_len {
        1.0
    } else if hyp_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let bleu = if precisions.contains(&0.0) {
        0.0
    } else {
        let mean_log = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_NGRAM as f64;
        100.0 * brevity_penalty * mean_log.exp()
    };
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// Case-folded exact token match of the gold verb.
pub fn contains_verb<S: AsRef<str>>(hypothesis: &[S], gold_verb: &str) -> bool {
    let gold = gold_verb.to_lowercase();
    hypothesis.iter().any(|t| t.as_ref().to_lowercase() == gold)
}

/// Fraction of hypotheses containing their gold verb as a token.
pub fn verb_accuracy<S: AsRef<str>, G: AsRef<str>>(hypotheses: &[Vec<S>], gold_verbs: &[G]) -> Result<f64> {
    if hypotheses.len() != gold_verbs.len() {
        return Err(Error::Dimension {
            what: "gold verbs",
            expected: hypotheses.len(),
            found: gold_verbs.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(Error::Empty("verb_accuracy"));
    }
    let hits = hypotheses
        .iter()
        .zip(gold_verbs)
        .filter(|(h, g)| contains_verb(h, g.as_ref()))
        .count();
    Ok(hits as f64 / hypotheses.len() as f64)
}
