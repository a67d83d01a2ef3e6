//! Binary model checkpoints.
//!
//! ```text
//! magic "CRCLSCKP" | u32 version | u32 n + n bytes of `key=value` header lines
//! | u32 record count | records | u64 FNV-1a of every preceding byte
//!
//! record: u32 n + n bytes of name | u32 rank | rank × u64 dims | f64 data
//! ```
//!
//! All integers and floats are little-endian. Layer records come first in
//! [`Params`] order, followed by the `embedding` record.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::model::{Arch, Layers, Model, ModelConfig, Pooling};
use crate::nn::Params;
use crate::tensor::Tensor;
use crate::text::CleanOptions;

pub const MAGIC: &[u8; 8] = b"CRCLSCKP";
pub const FORMAT_VERSION: u32 = 1;
const EMBEDDING_RECORD: &str = "embedding";

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    /// SHA-256 of the vocabulary file text.
    pub vocab_hash: String,
    /// SHA-256 of the stop-word list text.
    pub stopwords_hash: String,
    pub clean_options: CleanOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

fn header_text(model: &Model, meta: &CheckpointMeta) -> String {
    let c = model.config();
    let mut s = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("arch", &c.arch);
    kv("seq_len", &c.seq_len);
    kv("embedding_dim", &c.embedding_dim);
    kv("kernel_size", &c.kernel_size);
    kv("pool_size", &c.pool_size);
    kv("num_filters", &c.num_filters);
    kv("cnn_hidden", &c.cnn_hidden);
    kv("lstm_hidden", &c.lstm_hidden);
    kv("num_classes", &c.num_classes);
    kv("keep_prob", &c.keep_prob);
    kv("fine_tune_embeddings", &c.fine_tune_embeddings);
    kv("pooling", &c.pooling);
    kv("vocab_size", &model.embedding().vocab_size());
    kv("vocab_sha256", &meta.vocab_hash);
    kv("stopwords_sha256", &meta.stopwords_hash);
    kv("strip_hash_only", &meta.clean_options.strip_hash_only);
    kv("drop_mentions", &meta.clean_options.drop_mentions);
    s
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.rank());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(model: &Model, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let header = header_text(model, meta);
    put_u32(&mut out, header.len());
    out.extend_from_slice(header.as_bytes());
    let params = model.layers().params();
    put_u32(&mut out, params.len() + 1);
    for (name, t) in &params {
        put_record(&mut out, name, t);
    }
    put_record(&mut out, EMBEDDING_RECORD, model.embedding().matrix());
    let checksum = fnv1a64(&out);
    out.extend_from_slice(&checksum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Integrity(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::Integrity("checkpoint text is not UTF-8".into()))
    }
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

fn field<T: std::str::FromStr>(header: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
    header
        .get(key)
        .ok_or_else(|| corrupt(format!("checkpoint header lacks `{key}`")))?
        .parse()
        .map_err(|_| corrupt(format!("checkpoint header has a bad `{key}`")))
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a64(payload) != stored {
        return Err(corrupt("checkpoint checksum mismatch"));
    }
    let mut r = Reader {
        bytes: payload,
        pos: MAGIC.len(),
    };
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let header: BTreeMap<&str, &str> = r
        .str()?
        .lines()
        .filter_map(|l| l.split_once('='))
        .collect();
    let config = ModelConfig {
        arch: field::<Arch>(&header, "arch")?,
        seq_len: field(&header, "seq_len")?,
        embedding_dim: field(&header, "embedding_dim")?,
        kernel_size: field(&header, "kernel_size")?,
        pool_size: field(&header, "pool_size")?,
        num_filters: field(&header, "num_filters")?,
        cnn_hidden: field(&header, "cnn_hidden")?,
        lstm_hidden: field(&header, "lstm_hidden")?,
        num_classes: field(&header, "num_classes")?,
        keep_prob: field(&header, "keep_prob")?,
        fine_tune_embeddings: field(&header, "fine_tune_embeddings")?,
        pooling: field::<Pooling>(&header, "pooling")?,
    };
    let vocab_size: usize = field(&header, "vocab_size")?;
    let meta = CheckpointMeta {
        vocab_hash: field(&header, "vocab_sha256")?,
        stopwords_hash: field(&header, "stopwords_sha256")?,
        clean_options: CleanOptions {
            strip_hash_only: field(&header, "strip_hash_only")?,
            drop_mentions: field(&header, "drop_mentions")?,
        },
    };
    config.validate().map_err(|e| corrupt(format!("checkpoint config: {e}")))?;

    let count = r.u32()?;
    let mut records = BTreeMap::new();
    for _ in 0..count {
        let name = r.str()?.to_owned();
        let rank = r.u32()?;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| corrupt("dimension too large"))?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt("record size overflows"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| corrupt("record size overflows"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| corrupt(format!("record `{name}`: {e}")))?;
        if records.insert(name.clone(), t).is_some() {
            return Err(corrupt(format!("duplicate record `{name}`")));
        }
    }
    if r.pos != payload.len() {
        return Err(corrupt("trailing bytes after the last record"));
    }

    let matrix = records
        .remove(EMBEDDING_RECORD)
        .ok_or_else(|| corrupt("checkpoint has no embedding record"))?;
    if matrix.shape() != [vocab_size, config.embedding_dim] {
        return Err(corrupt(format!(
            "embedding record {:?} disagrees with header {vocab_size}×{}",
            matrix.shape(),
            config.embedding_dim
        )));
    }
    let embedding = EmbeddingMatrix::from_tensor(matrix, config.fine_tune_embeddings)
        .map_err(|e| corrupt(format!("embedding record: {e}")))?;
    let mut layers = Layers::zeros(&config);
    for (name, slot) in layers.params_mut() {
        let t = records
            .remove(&name)
            .ok_or_else(|| corrupt(format!("checkpoint lacks `{name}`")))?;
        if t.shape() != slot.shape() {
            return Err(corrupt(format!(
                "`{name}` has shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            )));
        }
        *slot = t;
    }
    if let Some(extra) = records.keys().next() {
        return Err(corrupt(format!("unexpected record `{extra}`")));
    }
    let model = Model::from_parts(config, embedding, layers).map_err(|e| corrupt(e.to_string()))?;
    Ok(Checkpoint { model, meta })
}

pub fn save(path: impl AsRef<Path>, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
