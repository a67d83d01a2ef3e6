//! Pretrained word vectors and the vocabulary-aligned embedding matrix.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::text::{Vocabulary, PAD};

/// Text layout of an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    /// `token v1 ... vD` on every line (GloVe style).
    Headerless,
    /// A `V D` first line followed by exactly `V` vector lines (word2vec text style).
    Headered,
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "headerless" => Ok(EmbeddingFormat::Headerless),
            "headered" => Ok(EmbeddingFormat::Headered),
            other => Err(Error::InvalidArgument(format!(
                "embedding format must be `headerless` or `headered`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for EmbeddingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingFormat::Headerless => "headerless",
            EmbeddingFormat::Headered => "headered",
        })
    }
}

/// Token → vector map read from a pretrained embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedVectors {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    duplicates: usize,
}

impl KeyedVectors {
    pub fn new(dim: usize) -> Self {
        KeyedVectors {
            dim,
            entries: HashMap::new(),
            duplicates: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    /// Number of tokens seen more than once while loading (last one won).
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(
                "keyed vectors",
                format!("expected dimension {}, got {}", self.dim, vector.len()),
            ));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("embedding components must be finite".into()));
        }
        if self.entries.insert(token.into(), vector).is_some() {
            self.duplicates += 1;
        }
        Ok(())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<KeyedVectors> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let kv = parse_embeddings(&text, format, path)?;
    if kv.duplicates() > 0 {
        warn!(
            "{}: {} duplicate tokens, last occurrence kept",
            path.display(),
            kv.duplicates()
        );
    }
    Ok(kv)
}

pub fn parse_embeddings(text: &str, format: EmbeddingFormat, path: &Path) -> Result<KeyedVectors> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_owned(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (expected_count, mut dim) = match format {
        EmbeddingFormat::Headerless => (None, None),
        EmbeddingFormat::Headered => {
            let (n, header) = lines.next().ok_or_else(|| err(1, "missing `V D` header".into()))?;
            let nums: Vec<&str> = header.split_whitespace().collect();
            let parse = |s: &str| s.parse::<usize>().ok();
            match nums.as_slice() {
                [v, d] => match (parse(v), parse(d)) {
                    (Some(v), Some(d)) if d > 0 => (Some(v), Some(d)),
                    _ => return Err(err(n, format!("bad header `{header}`"))),
                },
                _ => return Err(err(n, format!("bad header `{header}`"))),
            }
        }
    };

    let mut kv: Option<KeyedVectors> = dim.map(KeyedVectors::new);
    let mut rows = 0usize;
    for (n, line) in lines {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            return Err(err(n, "empty line".into()));
        };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(n, format!("non-numeric component `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dim.get_or_insert(vector.len());
        if d == 0 {
            return Err(err(n, "vector has no components".into()));
        }
        if vector.len() != d {
            return Err(err(
                n,
                format!("dimension mismatch: expected {d} components, got {}", vector.len()),
            ));
        }
        kv.get_or_insert_with(|| KeyedVectors::new(d))
            .insert(token, vector)
            .map_err(|e| err(n, e.to_string()))?;
        rows += 1;
    }

    if let Some(v) = expected_count {
        if rows != v {
            return Err(err(1, format!("header announces {v} vectors, file has {rows}")));
        }
    }
    kv.ok_or_else(|| err(1, "no vectors found".into()))
}

/// How many vocabulary tokens were covered by the pretrained vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coverage {
    pub found: usize,
    /// Tokens given a random vector, `UNK` included.
    pub oov: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OovInit {
    pub low: f64,
    pub high: f64,
}

impl Default for OovInit {
    fn default() -> Self {
        OovInit {
            low: -0.25,
            high: 0.25,
        }
    }
}

/// `V × D` matrix aligned with a vocabulary. Row 0 (`PAD`) is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    matrix: Tensor,
    trainable: bool,
}

impl EmbeddingMatrix {
    pub fn from_tensor(matrix: Tensor, trainable: bool) -> Result<Self> {
        if matrix.rank() != 2 || matrix.rows() < 2 {
            return Err(Error::shape(
                "embedding",
                format!("need a V×D matrix with V ≥ 2, got {:?}", matrix.shape()),
            ));
        }
        if !matrix.is_finite() {
            return Err(Error::InvalidArgument("embedding entries must be finite".into()));
        }
        if matrix.row(PAD).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidArgument("PAD embedding row must be zero".into()));
        }
        Ok(EmbeddingMatrix { matrix, trainable })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut Tensor {
        &mut self.matrix
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.row_len()
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        self.trainable = trainable;
    }

    /// Copies rows `indices[t]` into an `L × D` matrix.
    pub fn lookup(&self, indices: &[usize]) -> Result<Tensor> {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= self.vocab_size() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    rows: self.vocab_size(),
                });
            }
            data.extend_from_slice(self.matrix.row(i));
        }
        Tensor::new(vec![indices.len(), d], data)
    }

    /// Backward of [`lookup`](Self::lookup): adds upstream row `t` into the
    /// gradient of row `indices[t]`. No-op for a frozen matrix; `PAD` is skipped.
    pub fn accumulate_grad(&self, indices: &[usize], upstream: &Tensor, grad: &mut EmbeddingGrad) -> Result<()> {
        if upstream.shape() != [indices.len(), self.dim()] {
            return Err(Error::shape(
                "embedding backward",
                format!("upstream {:?} for {} indices", upstream.shape(), indices.len()),
            ));
        }
        if !self.trainable {
            return Ok(());
        }
        for (t, &i) in indices.iter().enumerate() {
            if i == PAD {
                continue;
            }
            grad.add_row(i, upstream.row(t));
        }
        Ok(())
    }
}

/// Sparse per-row gradient of an embedding matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingGrad {
    rows: BTreeMap<usize, Vec<f64>>,
}

impl EmbeddingGrad {
    pub fn add_row(&mut self, index: usize, values: &[f64]) {
        let row = self
            .rows
            .entry(index)
            .or_insert_with(|| vec![0.0; values.len()]);
        for (a, b) in row.iter_mut().zip(values) {
            *a += b;
        }
    }

    pub fn merge(&mut self, other: &EmbeddingGrad) {
        for (&i, row) in &other.rows {
            self.add_row(i, row);
        }
    }

    pub fn row(&self, index: usize) -> Option<&[f64]> {
        self.rows.get(&index).map(Vec::as_slice)
    }

    /// Rows in ascending index order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&i, r)| (i, r.as_slice()))
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = (usize, &mut Vec<f64>)> {
        self.rows.iter_mut().map(|(&i, r)| (i, r))
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Aligns pretrained vectors with `vocab`: covered tokens copy their vector,
/// the rest (including `UNK`) draw from `U[-0.25, 0.25]` seeded by `seed`.
pub fn build_matrix(kv: &KeyedVectors, vocab: &Vocabulary, seed: u64, trainable: bool) -> (EmbeddingMatrix, Coverage) {
    build_matrix_with(kv, vocab, seed, trainable, OovInit::default())
}

pub fn build_matrix_with(
    kv: &KeyedVectors,
    vocab: &Vocabulary,
    seed: u64,
    trainable: bool,
    init: OovInit,
) -> (EmbeddingMatrix, Coverage) {
    let dim = kv.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Tensor::zeros(&[vocab.len(), dim]);
    let mut coverage = Coverage { found: 0, oov: 0 };
    for i in 1..vocab.len() {
        let token = vocab.token(i).expect("index within vocabulary");
        let row = matrix.row_mut(i);
        match kv.get(token).filter(|_| i != crate::text::UNK) {
            Some(v) => {
                row.copy_from_slice(v);
                coverage.found += 1;
            }
            None => {
                for x in row.iter_mut() {
                    *x = rng.gen_range(init.low..=init.high);
                }
                coverage.oov += 1;
            }
        }
    }
    (EmbeddingMatrix { matrix, trainable }, coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::UNK;

    fn parse(text: &str, format: EmbeddingFormat) -> Result<KeyedVectors> {
        parse_embeddings(text, format, Path::new("emb.txt"))
    }

    #[test]
    fn headerless_and_headered_agree() {
        let a = parse("a 1.0 2.0\nb 3.0 4.0", EmbeddingFormat::Headerless).unwrap();
        assert_eq!(a.dim(), 2);
        assert_eq!(a.get("a"), Some(&[1.0, 2.0][..]));
        assert_eq!(a.get("b"), Some(&[3.0, 4.0][..]));
        let b = parse("2 2\na 1.0 2.0\nb 3.0 4.0\n", EmbeddingFormat::Headered).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let e = parse("a 1.0\nb 2.0 3.0", EmbeddingFormat::Headerless).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse("a 1.0\nb x", EmbeddingFormat::Headerless).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse("a 1.0\nb nan", EmbeddingFormat::Headerless).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse("3 1\na 1.0\nb 2.0", EmbeddingFormat::Headered).unwrap_err();
        assert!(matches!(e, Error::Parse { .. }), "{e}");
        let e = parse("2 2\na 1.0 2.0\nb 2.0", EmbeddingFormat::Headered).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(parse("", EmbeddingFormat::Headerless).is_err());
    }

    #[test]
    fn duplicates_last_wins() {
        let kv = parse("a 1\na 2\n", EmbeddingFormat::Headerless).unwrap();
        assert_eq!(kv.get("a"), Some(&[2.0][..]));
        assert_eq!(kv.duplicates(), 1);
        assert_eq!(kv.len(), 1);
    }

    fn vocab(tokens: &[&str]) -> Vocabulary {
        let mut v = Vocabulary::empty();
        for t in tokens {
            v.insert(t);
        }
        v
    }

    #[test]
    fn build_matrix_copies_and_randomizes() {
        let kv = parse("a 1 2", EmbeddingFormat::Headerless).unwrap();
        let v = vocab(&["a"]);
        let (m, cov) = build_matrix(&kv, &v, 3, true);
        assert_eq!(m.matrix().row(2), &[1.0, 2.0]);
        assert_eq!(m.matrix().row(PAD), &[0.0, 0.0]);
        assert!(m.matrix().row(UNK).iter().all(|x| (-0.25..=0.25).contains(x)));
        assert_eq!(cov, Coverage { found: 1, oov: 1 });
        assert_eq!(cov.found + cov.oov, v.len() - 1);
        assert!(m.trainable());
    }

    #[test]
    fn degenerate_and_deterministic() {
        let kv = KeyedVectors::new(3);
        let v = Vocabulary::empty();
        let (m, cov) = build_matrix(&kv, &v, 11, false);
        assert_eq!(m.matrix().shape(), &[2, 3]);
        assert_eq!(m.matrix().row(PAD), &[0.0; 3]);
        assert!(m.matrix().row(UNK).iter().any(|&x| x != 0.0));
        assert_eq!(cov, Coverage { found: 0, oov: 1 });
        let (again, _) = build_matrix(&kv, &v, 11, false);
        let bits = |m: &EmbeddingMatrix| m.matrix().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&m), bits(&again));
    }

    #[test]
    fn unk_token_in_file_still_gets_random_row() {
        let kv = parse("<unk> 5 5", EmbeddingFormat::Headerless).unwrap();
        let (m, _) = build_matrix(&kv, &Vocabulary::empty(), 0, true);
        assert!(m.matrix().row(UNK).iter().all(|x| x.abs() <= 0.25));
    }

    fn toy() -> EmbeddingMatrix {
        let t = Tensor::new(vec![3, 3], vec![0.0, 0.0, 0.0, 0.5, -0.5, 0.25, 1.0, 2.0, 3.0]).unwrap();
        EmbeddingMatrix::from_tensor(t, true).unwrap()
    }

    #[test]
    fn lookup_examples() {
        let m = toy();
        assert_eq!(m.lookup(&[0, 0]).unwrap().data(), &[0.0; 6]);
        assert_eq!(m.lookup(&[2]).unwrap().data(), &[1.0, 2.0, 3.0]);
        assert!(matches!(m.lookup(&[3]), Err(Error::IndexOutOfRange { index: 3, rows: 3 })));
    }

    #[test]
    fn lookup_gradient_matches_finite_differences() {
        // L = Σ_t <w_t, lookup(indices)[t]>
        let indices = [2, 1, 2, 0];
        let weights = Tensor::new(vec![4, 3], (0..12).map(|i| 0.1 * f64::from(i) - 0.4).collect()).unwrap();
        let loss = |m: &EmbeddingMatrix| -> f64 {
            let out = m.lookup(&indices).unwrap();
            out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        };
        let m = toy();
        let mut grad = EmbeddingGrad::default();
        m.accumulate_grad(&indices, &weights, &mut grad).unwrap();
        let eps = 1e-6;
        for row in 1..3 {
            for col in 0..3 {
                let mut plus = m.clone();
                plus.matrix_mut().row_mut(row)[col] += eps;
                let mut minus = m.clone();
                minus.matrix_mut().row_mut(row)[col] -= eps;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
                let analytic = grad.row(row).map_or(0.0, |r| r[col]);
                assert!((numeric - analytic).abs() < 1e-8, "row {row} col {col}");
            }
        }
        assert!(grad.row(PAD).is_none());

        let mut frozen = m.clone();
        frozen.set_trainable(false);
        let mut g = EmbeddingGrad::default();
        frozen.accumulate_grad(&indices, &weights, &mut g).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn lookup_is_additive() {
        let column_sums = |t: &Tensor| -> Vec<f64> {
            (0..t.row_len()).map(|c| (0..t.rows()).map(|r| t.row(r)[c]).sum()).collect()
        };
        let m = toy();
        let a = column_sums(&m.lookup(&[1, 2]).unwrap());
        let b = column_sums(&m.lookup(&[2, 0]).unwrap());
        let ab = column_sums(&m.lookup(&[1, 2, 2, 0]).unwrap());
        for c in 0..3 {
            assert!((a[c] + b[c] - ab[c]).abs() < 1e-12);
        }
    }
}
