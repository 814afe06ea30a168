//! Lexically constrained beam search with dynamic beam allocation.
//!
//! The decoder drives any [`StepScorer`], a source of next-token
//! log-distributions given a prefix. At each step every live hypothesis is
//! expanded with its top-k model tokens plus every constraint token that
//! would start or extend a constraint sequence. Candidates are grouped into
//! banks by the number of constraint tokens they have met and the beam is
//! split evenly across banks; slots a bank cannot fill go to the banks with
//! the most progress first. End-of-sentence is only allowed once every
//! constraint is satisfied.
//!
//! Constraint progress restarts from zero when a sequence is broken (the
//! breaking token may immediately start it again). This is exact for
//! sequences without repeated tokens; for self-overlapping sequences such
//! as `a a b` some occurrences are missed.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub type TokenId = u32;

/// Tolerance on `logsumexp(scores) == 0` for scorer output.
pub const LOG_NORM_TOLERANCE: f64 = 1e-5;

/// Next-token log-probabilities given a prefix.
pub trait StepScorer {
    fn vocab_size(&self) -> usize;
    fn eos(&self) -> TokenId;
    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

impl<T: StepScorer + ?Sized> StepScorer for &T {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn eos(&self) -> TokenId {
        (**self).eos()
    }
    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        (**self).score(prefix)
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|x| x - lse).collect()
}

fn checked_scores<S: StepScorer + ?Sized>(scorer: &S, prefix: &[TokenId]) -> Result<Vec<f64>> {
    let scores = scorer.score(prefix)?;
    if scores.len() != scorer.vocab_size() {
        return Err(Error::Dimension {
            what: "scorer output",
            expected: scorer.vocab_size(),
            found: scores.len(),
        });
    }
    Ok(scores)
}

/// Token sequences that must each appear contiguously in the output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub sequences: Vec<Vec<TokenId>>,
}

impl Constraint {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(sequences: Vec<Vec<TokenId>>, vocab_size: usize, eos: TokenId) -> Result<Self> {
        for seq in &sequences {
            if seq.is_empty() {
                return Err(Error::Infeasible("empty constraint sequence".into()));
            }
            for &t in seq {
                if t as usize >= vocab_size {
                    return Err(Error::IndexOutOfRange {
                        index: t as usize,
                        size: vocab_size,
                    });
                }
                if t == eos {
                    return Err(Error::Infeasible("constraint contains end-of-sentence".into()));
                }
            }
        }
        Ok(Self { sequences })
    }

    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn initial_state(&self) -> ConstraintState {
        ConstraintState {
            progress: vec![0; self.sequences.len()],
            satisfied: vec![false; self.sequences.len()],
            met: 0,
            total: self.total_tokens(),
        }
    }

    /// True if every sequence occurs contiguously in `tokens`.
    pub fn is_contained_in(&self, tokens: &[TokenId]) -> bool {
        self.sequences
            .iter()
            .all(|seq| tokens.windows(seq.len()).any(|w| w == seq.as_slice()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintState {
    /// Index of the next needed token of each unsatisfied sequence.
    pub progress: Vec<usize>,
    pub satisfied: Vec<bool>,
    /// Constraint tokens matched so far, counting in-progress sequences.
    pub met: usize,
    pub total: usize,
}

impl ConstraintState {
    pub fn is_complete(&self) -> bool {
        self.met == self.total
    }

    /// Tokens that start or extend an unsatisfied sequence.
    pub fn wanted_tokens(&self, constraint: &Constraint) -> Vec<TokenId> {
        let mut out: Vec<TokenId> = Vec::new();
        for (i, seq) in constraint.sequences.iter().enumerate() {
            if !self.satisfied[i] {
                let t = seq[self.progress[i]];
                if !out.contains(&t) {
                    out.push(t);
                }
            }
        }
        out
    }
}

pub fn advance_state(state: &ConstraintState, constraint: &Constraint, token: TokenId) -> ConstraintState {
    let mut next = state.clone();
    for (i, seq) in constraint.sequences.iter().enumerate() {
        if next.satisfied[i] {
            continue;
        }
        let p = next.progress[i];
        if seq[p] == token {
            next.progress[i] = p + 1;
            next.met += 1;
        } else if p > 0 {
            next.met -= p;
            next.progress[i] = 0;
            if seq[0] == token {
                next.progress[i] = 1;
                next.met += 1;
            }
        }
        if next.progress[i] == seq.len() {
            next.satisfied[i] = true;
            next.progress[i] = 0;
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
    pub state: ConstraintState,
    pub finished: bool,
}

impl Hypothesis {
    fn root(constraint: &Constraint) -> Self {
        Self {
            tokens: Vec::new(),
            logprob: 0.0,
            state: constraint.initial_state(),
            finished: false,
        }
    }

    fn extend(&self, constraint: &Constraint, token: TokenId, score: f64, eos: TokenId) -> Self {
        let mut tokens = Vec::with_capacity(self.tokens.len() + 1);
        tokens.extend_from_slice(&self.tokens);
        tokens.push(token);
        Self {
            tokens,
            logprob: self.logprob + score,
            state: advance_state(&self.state, constraint, token),
            finished: token == eos,
        }
    }

    /// Output tokens without the trailing end-of-sentence.
    pub fn output(&self) -> &[TokenId] {
        if self.finished {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }
}

/// Higher logprob first; ties to the lexicographically smaller token list,
/// which prefers lower token ids and then shorter hypotheses.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.logprob.total_cmp(&a.logprob).then_with(|| a.tokens.cmp(&b.tokens))
}

fn best_of<'a>(hyps: impl IntoIterator<Item = &'a Hypothesis>) -> Option<&'a Hypothesis> {
    hyps.into_iter().min_by(|a, b| rank(a, b))
}

/// Indices of the `k` highest scores among allowed tokens, ties to lower id.
fn top_k(scores: &[f64], k: usize, allowed: impl Fn(TokenId) -> bool) -> Vec<TokenId> {
    let mut ids: Vec<TokenId> = (0..scores.len() as TokenId).filter(|&t| allowed(t)).collect();
    ids.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

/// Unconstrained beam search: the reference the constrained decoder reduces
/// to when it has no constraints.
pub fn beam_search<S: StepScorer + ?Sized>(scorer: &S, beam: usize, max_len: usize) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::Config("beam must be >= 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be >= 1".into()));
    }
    let none = Constraint::none();
    let eos = scorer.eos();
    let mut live = vec![Hypothesis::root(&none)];
    let mut finished = Vec::new();
    for _ in 0..max_len {
        let mut candidates = Vec::new();
        for h in &live {
            let scores = checked_scores(scorer, &h.tokens)?;
            for t in top_k(&scores, beam, |_| true) {
                candidates.push(h.extend(&none, t, scores[t as usize], eos));
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(beam);
        live.clear();
        for c in candidates {
            if c.finished {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
        if live.is_empty() {
            break;
        }
    }
    best_of(&finished)
        .or_else(|| best_of(&live))
        .cloned()
        .ok_or_else(|| Error::Infeasible("beam emptied without a hypothesis".into()))
}

/// Slots per bank: an even split, then leftovers to the highest banks first.
pub fn allocate_banks(beam: usize, bank_sizes: &[usize]) -> Vec<usize> {
    let base = beam / bank_sizes.len();
    let mut alloc: Vec<usize> = bank_sizes.iter().map(|&n| n.min(base)).collect();
    let mut left = beam - alloc.iter().sum::<usize>();
    for i in (0..bank_sizes.len()).rev() {
        if left == 0 {
            break;
        }
        let extra = (bank_sizes[i] - alloc[i]).min(left);
        alloc[i] += extra;
        left -= extra;
    }
    alloc
}

/// Constrained beam search with dynamic beam allocation.
///
/// Returns the best finished hypothesis that meets every constraint. If none
/// finishes within `max_len` tokens, the best complete-but-unfinished one is
/// returned with `finished == false`.
pub fn decode<S: StepScorer + ?Sized>(
    scorer: &S,
    constraint: &Constraint,
    beam: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    if beam == 0 {
        return Err(Error::Config("beam must be >= 1".into()));
    }
    let total = constraint.total_tokens();
    if max_len < total + 1 {
        return Err(Error::Config(format!(
            "max_len {max_len} cannot fit {total} constraint tokens plus end-of-sentence"
        )));
    }
    let eos = scorer.eos();
    let mut live = vec![Hypothesis::root(constraint)];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        let mut banks: Vec<Vec<Hypothesis>> = vec![Vec::new(); total + 1];
        for h in &live {
            let scores = checked_scores(scorer, &h.tokens)?;
            let complete = h.state.is_complete();
            let allowed = |t: TokenId| t != eos || complete;
            let mut picked: HashSet<TokenId> = HashSet::new();
            let model = top_k(&scores, beam, allowed);
            let forced = h.state.wanted_tokens(constraint);
            for t in model.into_iter().chain(forced) {
                if allowed(t) && picked.insert(t) {
                    let c = h.extend(constraint, t, scores[t as usize], eos);
                    banks[c.state.met].push(c);
                }
            }
        }
        for bank in &mut banks {
            bank.sort_by(rank);
        }
        let sizes: Vec<usize> = banks.iter().map(Vec::len).collect();
        let alloc = allocate_banks(beam, &sizes);

        live.clear();
        for (bank, keep) in banks.into_iter().zip(alloc) {
            for c in bank.into_iter().take(keep) {
                if c.finished {
                    finished.push(c);
                } else {
                    live.push(c);
                }
            }
        }
        if live.is_empty() {
            break;
        }
    }

    if let Some(best) = best_of(&finished) {
        return Ok(best.clone());
    }
    best_of(live.iter().filter(|h| h.state.is_complete()))
        .cloned()
        .ok_or_else(|| Error::Infeasible(format!("no hypothesis met all {total} constraint tokens")))
}

/// Exhaustive search over every end-of-sentence terminated sequence of at
/// most `max_len` tokens that contains each constraint sequence. Exponential
/// in `max_len`; meant for testing.
pub fn brute_force_constrained<S: StepScorer + ?Sized>(
    scorer: &S,
    constraint: &Constraint,
    max_len: usize,
) -> Result<Hypothesis> {
    fn walk<S: StepScorer + ?Sized>(
        scorer: &S,
        constraint: &Constraint,
        max_len: usize,
        prefix: &mut Vec<TokenId>,
        logprob: f64,
        best: &mut Option<(Vec<TokenId>, f64)>,
    ) -> Result<()> {
        let scores = checked_scores(scorer, prefix)?;
        let eos = scorer.eos();
        for t in 0..scorer.vocab_size() as TokenId {
            let lp = logprob + scores[t as usize];
            prefix.push(t);
            if t == eos {
                if constraint.is_contained_in(prefix) {
                    let better = match best {
                        None => true,
                        Some((bt, bl)) => {
                            lp.total_cmp(bl).then_with(|| bt.as_slice().cmp(prefix.as_slice())) == Ordering::Greater
                        }
                    };
                    if better {
                        *best = Some((prefix.clone(), lp));
                    }
                }
            } else if prefix.len() < max_len {
                walk(scorer, constraint, max_len, prefix, lp, best)?;
            }
            prefix.pop();
        }
        Ok(())
    }

    let mut best = None;
    walk(scorer, constraint, max_len, &mut Vec::new(), 0.0, &mut best)?;
    let (tokens, logprob) = best.ok_or_else(|| Error::Infeasible("no sequence satisfies the constraints".into()))?;
    let state = tokens
        .iter()
        .fold(constraint.initial_state(), |s, &t| advance_state(&s, constraint, t));
    Ok(Hypothesis {
        tokens,
        logprob,
        state,
        finished: true,
    })
}

/// Bidirectional token <-> id map, read from `token<TAB>id` lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
}

pub const DEFAULT_EOS: &str = "</s>";

impl TokenVocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        let mut pairs: Vec<(TokenId, String)> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (token, id) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected token<TAB>id".into()))?;
            let id: TokenId = id.trim().parse().map_err(|e| parse_err(format!("id: {e}")))?;
            pairs.push((id, token.to_string()));
        }
        pairs.sort();
        for (expected, (id, token)) in pairs.iter().enumerate() {
            if *id as usize != expected {
                return Err(Error::Config(format!(
                    "{}: ids must be dense from 0; token {token:?} has id {id}, expected {expected}",
                    path.display()
                )));
            }
        }
        Self::from_tokens(pairs.into_iter().map(|(_, t)| t).collect())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, words: &[&str]) -> Result<Vec<TokenId>> {
        words
            .iter()
            .map(|w| self.id(w).ok_or_else(|| Error::OutOfVocabulary(w.to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<unk>").to_string())
            .collect()
    }
}

/// Joins `@@`-marked subword pieces back into words.
pub fn merge_subwords<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut pending = String::new();
    for t in tokens {
        let t = t.as_ref();
        if let Some(stem) = t.strip_suffix("@@") {
            pending.push_str(stem);
        } else {
            pending.push_str(t);
            out.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        out.push(pending);
    }
    out
}

/// Single-sequence constraint from a whitespace-separated (possibly
/// subword-split) phrase.
pub fn phrase_constraint(phrase: &str, vocab: &TokenVocab, eos: TokenId) -> Result<Constraint> {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    if words.is_empty() {
        return Err(Error::Infeasible("empty constraint phrase".into()));
    }
    Constraint::new(vec![vocab.encode(&words)?], vocab.len(), eos)
}

/// Constraint built from the gold-standard target verb.
pub fn oracle_constraint(gold_verb: &str, vocab: &TokenVocab, eos: TokenId) -> Result<Constraint> {
    phrase_constraint(gold_verb, vocab, eos)
}

/// Constraint built from a disambiguation model's predicted verb.
pub fn predicted_constraint(predicted_verb: &str, vocab: &TokenVocab, eos: TokenId) -> Result<Constraint> {
    phrase_constraint(predicted_verb, vocab, eos)
}

/// First-order scorer: the distribution depends only on the last token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramScorer {
    pub eos: TokenId,
    /// Log-distribution for the first token.
    pub start: Vec<f64>,
    /// `transitions[t]` is the log-distribution following token `t`.
    pub transitions: Vec<Vec<f64>>,
}

impl BigramScorer {
    /// Builds from unnormalized logits, normalizing every row.
    pub fn from_logits(eos: TokenId, start: Vec<f64>, transitions: Vec<Vec<f64>>) -> Result<Self> {
        let s = Self {
            eos,
            start: log_softmax(&start),
            transitions: transitions.iter().map(|r| log_softmax(r)).collect(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.start.len();
        if v == 0 || self.eos as usize >= v {
            return Err(Error::Config(format!("eos {} outside vocabulary of {v}", self.eos)));
        }
        if self.transitions.len() != v {
            return Err(Error::Dimension {
                what: "transition rows",
                expected: v,
                found: self.transitions.len(),
            });
        }
        for row in std::iter::once(&self.start).chain(&self.transitions) {
            if row.len() != v {
                return Err(Error::Dimension {
                    what: "transition row",
                    expected: v,
                    found: row.len(),
                });
            }
            let lse = logsumexp(row);
            if (lse).abs() > LOG_NORM_TOLERANCE {
                return Err(Error::Config(format!(
                    "row is not a log-distribution (logsumexp {lse})"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        let s: Self = serde_json::from_reader(BufReader::new(file))?;
        s.validate()?;
        Ok(s)
    }
}

impl StepScorer for BigramScorer {
    fn vocab_size(&self) -> usize {
        self.start.len()
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        match prefix.last() {
            None => Ok(self.start.clone()),
            Some(&t) => self.transitions.get(t as usize).cloned().ok_or(Error::IndexOutOfRange {
                index: t as usize,
                size: self.transitions.len(),
            }),
        }
    }
}

#[derive(Deserialize)]
struct ReplayLine {
    prefix: Vec<TokenId>,
    logprobs: Vec<f64>,
}

/// Replays per-prefix distributions exported by an external decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayScorer {
    vocab_size: usize,
    eos: TokenId,
    table: HashMap<Vec<TokenId>, Vec<f64>>,
}

impl ReplayScorer {
    pub fn new(vocab_size: usize, eos: TokenId, table: HashMap<Vec<TokenId>, Vec<f64>>) -> Result<Self> {
        if eos as usize >= vocab_size {
            return Err(Error::Config(format!("eos {eos} outside vocabulary of {vocab_size}")));
        }
        for (prefix, lp) in &table {
            if lp.len() != vocab_size {
                return Err(Error::Dimension {
                    what: "replay logprobs",
                    expected: vocab_size,
                    found: lp.len(),
                });
            }
            let lse = logsumexp(lp);
            if lse.abs() > LOG_NORM_TOLERANCE {
                return Err(Error::Config(format!(
                    "replay entry for prefix {prefix:?} is not a log-distribution (logsumexp {lse})"
                )));
            }
        }
        Ok(Self { vocab_size, eos, table })
    }

    /// Reads `{"prefix": [...], "logprobs": [...]}` lines. The vocabulary size
    /// is taken from the first line.
    pub fn load(path: impl AsRef<Path>, eos: TokenId) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        let mut table = HashMap::new();
        let mut vocab_size = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let entry: ReplayLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            let v = *vocab_size.get_or_insert(entry.logprobs.len());
            if entry.logprobs.len() != v {
                return Err(parse_err(format!(
                    "expected {v} logprobs, found {}",
                    entry.logprobs.len()
                )));
            }
            table.insert(entry.prefix, entry.logprobs);
        }
        let vocab_size = vocab_size.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "replay file is empty".into(),
        })?;
        Self::new(vocab_size, eos, table)
    }

    /// Entries for `prefixes`, recorded from another scorer.
    pub fn record<S: StepScorer + ?Sized>(
        scorer: &S,
        prefixes: impl IntoIterator<Item = Vec<TokenId>>,
    ) -> Result<Self> {
        let mut table = HashMap::new();
        for p in prefixes {
            let lp = checked_scores(scorer, &p)?;
            table.insert(p, lp);
        }
        Self::new(scorer.vocab_size(), scorer.eos(), table)
    }

    /// JSON-lines form, entries sorted by prefix.
    pub fn to_jsonl(&self) -> String {
        let mut keys: Vec<&Vec<TokenId>> = self.table.keys().collect();
        keys.sort();
        let mut out = String::new();
        for k in keys {
            let line = serde_json::json!({ "prefix": k, "logprobs": self.table[k] });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl StepScorer for ReplayScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        self.table
            .get(prefix)
            .cloned()
            .ok_or_else(|| Error::MissingPrefix(prefix.to_vec()))
    }
}

/// Pseudo-random scorer whose distribution is a fixed function of
/// `(seed, prefix)`. Useful for randomized testing and benchmarking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeededScorer {
    pub vocab_size: usize,
    pub eos: TokenId,
    pub seed: u64,
    /// Logit spread; larger values give peakier distributions.
    pub temperature: f64,
}

impl SeededScorer {
    pub fn new(vocab_size: usize, eos: TokenId, seed: u64) -> Self {
        Self {
            vocab_size,
            eos,
            seed,
            temperature: 3.0,
        }
    }

    fn prefix_seed(&self, prefix: &[TokenId]) -> u64 {
        // FNV-1a over the seed and the prefix
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in self
            .seed
            .to_le_bytes()
            .into_iter()
            .chain((prefix.len() as u64).to_le_bytes())
            .chain(prefix.iter().flat_map(|t| t.to_le_bytes()))
        {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

impl StepScorer for SeededScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn eos(&self) -> TokenId {
        self.eos
    }

    fn score(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.prefix_seed(prefix));
        let logits: Vec<f64> = (0..self.vocab_size)
            .map(|_| rng.gen_range(-1.0..1.0) * self.temperature)
            .collect();
        Ok(log_softmax(&logits))
    }
}
