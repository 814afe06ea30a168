//! Image feature matrices and word embeddings.
//!
//! Feature files are little-endian: `MSFV`, version `u32 = 1`, `count: u32`,
//! `dim: u32`, then `count * dim` binary32 values in row-major order.
//! Embedding files use the word2vec text format: a `<count> <dim>` header
//! followed by one `token v1 ... vdim` line per entry.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"MSFV";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Dense row-major matrix of image feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    count: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureStore {
    pub fn new(count: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("feature dim must be >= 1".into()));
        }
        if data.len() != count * dim {
            return Err(Error::Dimension {
                what: "feature data",
                expected: count * dim,
                found: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { count, dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension {
                    what: "feature row",
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> Option<&[f32]> {
        (i < self.count).then(|| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

pub fn load_feature_store(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_feature_store(&bytes)
}

pub fn decode_feature_store(bytes: &[u8]) -> Result<FeatureStore> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != FEATURE_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = word(8) as usize;
    let dim = word(12) as usize;
    let expected = HEADER_LEN + count * dim * 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Config(format!(
            "feature file has {} trailing bytes",
            bytes.len() - expected
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FeatureStore::new(count, dim, data)
}

pub fn encode_feature_store(store: &FeatureStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + store.data.len() * 4);
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.count as u32).to_le_bytes());
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    for v in &store.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_feature_store(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_feature_store(store)).map_err(io_err(path))
}

/// Token to vector map of fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    /// Inserts or replaces a token's vector.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                what: "embedding vector",
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(col) = vector.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: self.entries.len(),
                col,
            });
        }
        self.entries.insert(token.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct tokens.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.entries.get(token).map(Vec::as_slice)
    }
}

pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(io_err(path))?,
        None => return Err(parse_err(1, "missing \"<count> <dim>\" header".into())),
    };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => (
            c.parse::<usize>().map_err(|e| parse_err(1, format!("count: {e}")))?,
            d.parse::<usize>().map_err(|e| parse_err(1, format!("dim: {e}")))?,
        ),
        _ => return Err(parse_err(1, format!("expected \"<count> <dim>\", got {header:?}"))),
    };
    if dim == 0 {
        return Err(parse_err(1, "dim must be >= 1".into()));
    }

    let mut table = EmbeddingTable::new(dim);
    let mut body_lines = 0;
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().unwrap();
        let vector = parts
            .map(|p| p.parse::<f32>())
            .collect::<std::result::Result<Vec<f32>, _>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        if vector.len() != dim {
            return Err(Error::Arity {
                line: lineno,
                expected: dim,
                found: vector.len(),
            });
        }
        if let Some(col) = vector.iter().position(|v| !v.is_finite()) {
            return Err(parse_err(lineno, format!("non-finite component {col}")));
        }
        table.entries.insert(token.to_string(), vector);
        body_lines += 1;
    }
    if body_lines != count {
        return Err(Error::HeaderMismatch {
            what: "embedding lines",
            declared: count,
            found: body_lines,
        });
    }
    Ok(table)
}

/// Writes tokens in sorted order so output is reproducible.
pub fn write_embedding_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let mut tokens: Vec<&String> = table.entries.keys().collect();
    tokens.sort();
    let write = || -> std::io::Result<()> {
        writeln!(out, "{} {}", tokens.len(), table.dim)?;
        for t in tokens {
            write!(out, "{t}")?;
            for v in &table.entries[t] {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(io_err(path))
}

/// How out-of-vocabulary tokens enter the phrase average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Skip unknown tokens and divide by the number of known ones.
    #[default]
    Skip,
    /// Unknown tokens count as zero vectors; divide by the phrase length.
    ZeroFill,
}

/// Mean embedding of a phrase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseVector {
    pub values: Vec<f64>,
    pub n_known: usize,
}

impl PhraseVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            n_known: 0,
        }
    }
}

pub fn embed_phrase(phrase: &str, table: &EmbeddingTable) -> PhraseVector {
    embed_phrase_with(phrase, table, OovPolicy::Skip)
}

pub fn embed_phrase_with(phrase: &str, table: &EmbeddingTable, policy: OovPolicy) -> PhraseVector {
    let lower = phrase.to_lowercase();
    let mut acc = PhraseVector::zeros(table.dim);
    let mut n_tokens = 0;
    for token in lower.split_whitespace() {
        n_tokens += 1;
        if let Some(v) = table.get(token) {
            for (a, &x) in acc.values.iter_mut().zip(v) {
                *a += x as f64;
            }
            acc.n_known += 1;
        }
    }
    let denom = match policy {
        OovPolicy::Skip => acc.n_known,
        OovPolicy::ZeroFill => n_tokens,
    };
    if acc.n_known > 0 {
        let denom = denom as f64;
        acc.values.iter_mut().for_each(|a| *a /= denom);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(&str, &[f32])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(rows[0].1.len());
        for (tok, v) in rows {
            t.insert(*tok, v.to_vec()).unwrap();
        }
        t
    }

    fn text_file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn feature_identity() {
        let s = FeatureStore::new(1, 2, vec![1.0, 2.0]).unwrap();
        let back = decode_feature_store(&encode_feature_store(&s)).unwrap();
        assert_eq!(back.row(0).unwrap(), &[1.0, 2.0]);
        assert_eq!(back.count(), 1);
    }

    #[test]
    fn empty_feature_store() {
        let s = FeatureStore::new(0, 512, vec![]).unwrap();
        let back = decode_feature_store(&encode_feature_store(&s)).unwrap();
        assert_eq!(back.count(), 0);
        assert_eq!(back.dim(), 512);
    }

    #[test]
    fn truncated_payload() {
        let s = FeatureStore::new(2, 3, vec![0.5; 6]).unwrap();
        let mut bytes = encode_feature_store(&s);
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            decode_feature_store(&bytes),
            Err(Error::Truncated {
                expected: 40,
                found: 37
            })
        ));
        assert!(matches!(decode_feature_store(b"MSF"), Err(Error::Truncated { .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let s = FeatureStore::new(1, 1, vec![0.0]).unwrap();
        let mut bytes = encode_feature_store(&s);
        bytes[0] = b'X';
        assert!(matches!(decode_feature_store(&bytes), Err(Error::BadMagic(_))));
        let mut bytes = encode_feature_store(&s);
        bytes[4] = 2;
        assert!(matches!(
            decode_feature_store(&bytes),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn non_finite_reported_with_position() {
        let s = FeatureStore::new(2, 3, vec![0.0; 6]).unwrap();
        let mut bytes = encode_feature_store(&s);
        let off = HEADER_LEN + 5 * 4;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            decode_feature_store(&bytes),
            Err(Error::NonFinite { row: 1, col: 2 })
        ));
    }

    #[test]
    fn embedding_text_format() {
        let f = text_file("2 3\ncat 1 0 0\ndog 0 1 0\n");
        let t = load_embedding_table(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("dog").unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn embedding_arity_error() {
        let f = text_file("1 3\ncat 1 0\n");
        assert!(matches!(
            load_embedding_table(f.path()),
            Err(Error::Arity {
                line: 2,
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn embedding_duplicates_last_wins() {
        let f = text_file("3 2\ncat 1 1\ndog 2 2\ncat 3 3\n");
        let t = load_embedding_table(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("cat").unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn embedding_header_mismatch() {
        let f = text_file("3 2\ncat 1 1\n");
        assert!(matches!(
            load_embedding_table(f.path()),
            Err(Error::HeaderMismatch {
                declared: 3,
                found: 1,
                ..
            })
        ));
        let f = text_file("two 2\n");
        assert!(matches!(
            load_embedding_table(f.path()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn embedding_write_round_trip() {
        let t = table(&[("b", &[0.25, -1.5]), ("a", &[1e-7, 3.0])]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_embedding_table(&t, f.path()).unwrap();
        assert_eq!(load_embedding_table(f.path()).unwrap(), t);
    }

    #[test]
    fn phrase_means() {
        let t = table(&[("cat", &[1.0, 0.0, 0.0]), ("dog", &[0.0, 1.0, 0.0])]);
        let p = embed_phrase("cat", &t);
        assert_eq!(p.values, vec![1.0, 0.0, 0.0]);
        assert_eq!(p.n_known, 1);

        let p = embed_phrase("cat dog", &t);
        assert_eq!(p.values, vec![0.5, 0.5, 0.0]);
        assert_eq!(p.n_known, 2);

        let p = embed_phrase("xyzzy", &t);
        assert_eq!(p.values, vec![0.0, 0.0, 0.0]);
        assert_eq!(p.n_known, 0);

        assert_eq!(embed_phrase("", &t), PhraseVector::zeros(3));
        assert_eq!(embed_phrase("CAT", &t).values, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_fill_divides_by_phrase_length() {
        let t = table(&[("cat", &[1.0, 0.0]), ("dog", &[0.0, 1.0])]);
        let p = embed_phrase_with("cat xyzzy", &t, OovPolicy::ZeroFill);
        assert_eq!(p.values, vec![0.5, 0.0]);
        assert_eq!(p.n_known, 1);
        let p = embed_phrase_with("cat xyzzy", &t, OovPolicy::Skip);
        assert_eq!(p.values, vec![1.0, 0.0]);
    }

    fn arb_table() -> impl Strategy<Value = (EmbeddingTable, Vec<String>)> {
        prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 4), 1..8).prop_map(|vecs| {
            let mut t = EmbeddingTable::new(4);
            let mut toks = Vec::new();
            for (i, v) in vecs.into_iter().enumerate() {
                let tok = format!("w{i}");
                t.insert(tok.clone(), v).unwrap();
                toks.push(tok);
            }
            toks.push("oov".into());
            (t, toks)
        })
    }

    proptest! {
        #[test]
        fn feature_store_round_trip(
            (count, dim, data) in (0usize..6, 1usize..6)
                .prop_flat_map(|(c, d)| (Just(c), Just(d), prop::collection::vec(-1e6f32..1e6, c * d)))
        ) {
            let s = FeatureStore::new(count, dim, data).unwrap();
            let back = decode_feature_store(&encode_feature_store(&s)).unwrap();
            prop_assert_eq!(
                back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                s.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back, s);
        }

        #[test]
        fn phrase_mean_is_order_invariant_and_bounded(
            (t, toks) in arb_table(),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 0..6),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let words: Vec<&str> = picks.iter().map(|i| toks[i.index(toks.len())].as_str()).collect();
            let mut shuffled = words.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = embed_phrase(&words.join(" "), &t);
            let b = embed_phrase(&shuffled.join(" "), &t);
            prop_assert_eq!(a.n_known, b.n_known);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            let max_inf = words
                .iter()
                .filter_map(|w| t.get(w))
                .flat_map(|v| v.iter().map(|x| x.abs() as f64))
                .fold(0.0, f64::max);
            for x in &a.values {
                prop_assert!(x.abs() <= max_inf + 1e-9);
            }
            if a.n_known == 0 {
                prop_assert!(a.values.iter().all(|&x| x == 0.0));
            }
        }
    }
}
