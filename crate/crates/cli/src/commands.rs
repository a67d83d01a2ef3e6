use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crisisclass::checkpoint::{self, Checkpoint, CheckpointMeta};
use crisisclass::embedding::{load_embeddings, EmbeddingFormat};
use crisisclass::eval::{confusion, load_dataset, metrics_report_excluding, write_dataset, ClassScheme, Dataset};
use crisisclass::hash::sha256_hex;
use crisisclass::model::{Arch, ModelConfig, Pooling};
use crisisclass::pipeline::{fit, Corpus};
use crisisclass::selfcheck::{run_selfcheck, SelfCheckOptions};
use crisisclass::text::{build_vocabulary, encode, encode_tweets, CleanOptions, StopWords, TextCleaner, TokenSeq, Vocabulary};
use crisisclass::train::{macro_f1, OptimizerKind, TrainConfig};

use crate::config::{parse_bool, RunConfig};
use crate::error::{CliError, CliResult};

/// Hidden switch for the self-check negative control: names a suite whose
/// analytic gradient is corrupted.
const PERTURB_ENV: &str = "CRISISCLASS_SELFCHECK_PERTURB";

fn bool_key(cfg: &RunConfig, key: &str) -> CliResult<bool> {
    parse_bool(cfg.raw(key).unwrap_or("false")).map_err(|e| CliError::config(format!("`{key}`: {e}")))
}

fn stopwords(cfg: &RunConfig) -> CliResult<StopWords> {
    Ok(match cfg.existing_file("stopwords")? {
        Some(p) => StopWords::from_file(p)?,
        None => StopWords::bundled(),
    })
}

fn clean_options(cfg: &RunConfig) -> CliResult<CleanOptions> {
    Ok(CleanOptions {
        strip_hash_only: bool_key(cfg, "strip_hash_only")?,
        drop_mentions: bool_key(cfg, "drop_mentions")?,
    })
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg.path("out").unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn file_hash(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn labelled(path: &Path) -> CliResult<Dataset> {
    let data = load_dataset(path, &ClassScheme::crisis())?;
    data.require_labels(path)?;
    Ok(data)
}

fn required_file(cfg: &RunConfig, key: &str) -> CliResult<PathBuf> {
    cfg.existing_file(key)?
        .ok_or_else(|| CliError::config(format!("`{key}` is required (flag --{} or config key)", key.replace('_', "-"))))
}

pub fn preprocess(cfg: &RunConfig, input: &Path) -> CliResult<()> {
    let cleaner = TextCleaner::new(stopwords(cfg)?, clean_options(cfg)?);
    let scheme = ClassScheme::crisis();
    let mut data = load_dataset(input, &scheme)?;
    for t in &mut data.tweets {
        t.text = cleaner.clean(&t.text);
    }
    let stem = input.file_stem().map_or("corpus".into(), |s| s.to_string_lossy().into_owned());
    let path = out_dir(cfg)?.join(format!("{stem}.clean.tsv"));
    write(&path, write_dataset(&data.tweets, &scheme))?;
    println!("{} tweets -> {}", data.len(), path.display());
    Ok(())
}

pub fn build_vocab(cfg: &RunConfig) -> CliResult<()> {
    let cleaner = TextCleaner::new(stopwords(cfg)?, clean_options(cfg)?);
    let data = load_dataset(required_file(cfg, "train")?, &ClassScheme::crisis())?;
    let tokens: Vec<TokenSeq> = data.tweets.iter().map(|t| cleaner.tokens(&t.text)).collect();
    let vocab = build_vocabulary(&tokens, cfg.require("min_count")?)?;
    let path = out_dir(cfg)?.join("vocab.txt");
    vocab.save(&path)?;
    println!("{} entries -> {}", vocab.len(), path.display());
    Ok(())
}

fn model_config(cfg: &RunConfig, embedding_dim: usize) -> CliResult<ModelConfig> {
    let arch: Arch = cfg.require("arch")?;
    let mut c = ModelConfig::new(arch, embedding_dim, bool_key(cfg, "fine_tune")?);
    c.seq_len = cfg.require("seq_len")?;
    c.kernel_size = cfg.require("kernel_size")?;
    c.pool_size = cfg.require("pool_size")?;
    c.pooling = cfg.require::<Pooling>("pooling")?;
    c.num_filters = cfg.require("num_filters")?;
    c.cnn_hidden = cfg.require("cnn_hidden")?;
    c.lstm_hidden = cfg.require("lstm_hidden")?;
    c.keep_prob = cfg.require("keep_prob")?;
    c.validate()?;
    Ok(c)
}

fn train_config(cfg: &RunConfig) -> CliResult<TrainConfig> {
    let t = TrainConfig {
        batch_size: cfg.require("batch_size")?,
        epochs: cfg.require("epochs")?,
        optimizer: cfg.require::<OptimizerKind>("optimizer")?,
        learning_rate: cfg.require("learning_rate")?,
        seed: cfg.require("seed")?,
        shuffle: bool_key(cfg, "shuffle")?,
        keep_best: bool_key(cfg, "keep_best")?,
        clip_norm: cfg.get("clip_norm")?,
    };
    t.validate()?;
    Ok(t)
}

pub fn train(mut cfg: RunConfig) -> CliResult<()> {
    let train_path = required_file(&cfg, "train")?;
    let dev_path = required_file(&cfg, "dev")?;
    let test_path = cfg.existing_file("test")?;
    let vocab_path = cfg.existing_file("vocab")?;
    let embedding_path = required_file(&cfg, "embedding")?;
    let format: EmbeddingFormat = cfg.require("embedding_format")?;
    let stop = stopwords(&cfg)?;
    let options = clean_options(&cfg)?;
    let train_cfg = train_config(&cfg)?;
    // Validate the model settings before the slow loads.
    model_config(&cfg, cfg.get("embedding_dim")?.unwrap_or(1))?;

    let vectors = load_embeddings(&embedding_path, format)?;
    match cfg.get::<usize>("embedding_dim")? {
        Some(d) if d != vectors.dim() => {
            return Err(CliError::config(format!(
                "embedding_dim is {d} but {} has {}-dimensional vectors",
                embedding_path.display(),
                vectors.dim()
            )))
        }
        Some(_) => {}
        None => cfg.derive("embedding_dim", vectors.dim().to_string()),
    }
    let model_cfg = model_config(&cfg, vectors.dim())?;

    let cleaner = TextCleaner::new(stop, options);
    let train_set = labelled(&train_path)?;
    let dev_set = labelled(&dev_path)?;
    let vocab = vocab_path.as_deref().map(Vocabulary::load).transpose()?;
    let corpus = Corpus::build(
        &train_set.tweets,
        &dev_set.tweets,
        &cleaner,
        vocab,
        cfg.require("min_count")?,
        model_cfg.seq_len,
    )?;
    info!(
        "{} train / {} dev tweets, vocabulary of {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.vocab.len()
    );

    let started = Instant::now();
    let (outcome, coverage) = fit(model_cfg, &vectors, &corpus, &train_cfg)?;
    info!(
        "trained in {:.1}s; embedding coverage {} found, {} random",
        started.elapsed().as_secs_f64(),
        coverage.found,
        coverage.oov
    );

    let out = out_dir(&cfg)?;
    let meta = CheckpointMeta {
        vocab_hash: corpus.vocab.hash(),
        stopwords_hash: cleaner.stopwords().hash().to_owned(),
        clean_options: options,
    };
    let scheme = ClassScheme::crisis();
    let model_path = out.join("model.ckpt");
    let model_bytes = checkpoint::to_bytes(&outcome.model, &meta);
    write(&model_path, &model_bytes)?;
    let history = outcome.history.to_csv();
    write(&out.join("history.csv"), &history)?;
    write(&out.join("vocab.txt"), corpus.vocab.to_text())?;
    if let Some(best) = &outcome.best_model {
        write(&out.join("best_model.ckpt"), checkpoint::to_bytes(best, &meta))?;
    }

    let report = |examples: &[crisisclass::text::EncodedExample]| -> CliResult<String> {
        let preds = outcome.model.predict_batch(examples)?;
        let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
        let r = metrics_report_excluding(&confusion(&golds, &preds, scheme.len())?, &[])?;
        Ok(format!("{}\n{}", r.to_table(&scheme), r.to_key_values(&scheme)))
    };
    let dev_report = report(&corpus.dev)?;
    write(&out.join("dev_report.txt"), &dev_report)?;
    print!("{}", dev_report.split("\n\n").next().unwrap_or(""));
    println!();
    let mut test_hash = None;
    if let Some(p) = &test_path {
        let test_set = labelled(p)?;
        let examples = encode_tweets(&test_set.tweets, &cleaner, &corpus.vocab, outcome.model.config().seq_len);
        write(&out.join("test_report.txt"), report(&examples)?)?;
        info!("test macro-F1 {:.4}", macro_f1(&outcome.model, &examples)?);
        test_hash = Some(file_hash(p)?);
    }

    let mut manifest = String::from("# crisisclass run manifest\n");
    let _ = writeln!(manifest, "toolkit = crisisclass {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(manifest, "command = train");
    manifest.push_str(&cfg.describe());
    let _ = writeln!(manifest, "sha256.train = {}", file_hash(&train_path)?);
    let _ = writeln!(manifest, "sha256.dev = {}", file_hash(&dev_path)?);
    if let Some(h) = test_hash {
        let _ = writeln!(manifest, "sha256.test = {h}");
    }
    let _ = writeln!(manifest, "sha256.embedding = {}", file_hash(&embedding_path)?);
    let _ = writeln!(manifest, "sha256.stopwords = {}", meta.stopwords_hash);
    let _ = writeln!(manifest, "sha256.vocab = {}", meta.vocab_hash);
    let _ = writeln!(manifest, "sha256.model = {}", sha256_hex(&model_bytes));
    let _ = writeln!(manifest, "sha256.history = {}", sha256_hex(history.as_bytes()));
    let _ = writeln!(manifest, "coverage.found = {}", coverage.found);
    let _ = writeln!(manifest, "coverage.random = {}", coverage.oov);
    let _ = writeln!(manifest, "best_epoch = {}", outcome.best_epoch);
    write(&out.join("manifest.txt"), manifest)?;
    println!("artifacts written to {}", out.display());
    Ok(())
}

/// Loads a checkpoint with the vocabulary it was trained with and a cleaner
/// whose stop words match the ones recorded in it.
fn load_for_inference(cfg: &RunConfig, path: &Path, vocab: Option<&Path>) -> CliResult<(Checkpoint, Vocabulary, TextCleaner)> {
    if !path.is_file() {
        return Err(CliError::config(format!("checkpoint not found: {}", path.display())));
    }
    let ckpt = checkpoint::load(path)?;
    let vocab_path = vocab
        .map(Path::to_path_buf)
        .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("vocab.txt"));
    if !vocab_path.is_file() {
        return Err(CliError::config(format!("vocabulary not found: {}", vocab_path.display())));
    }
    if file_hash(&vocab_path)? != ckpt.meta.vocab_hash {
        return Err(CliError::Integrity(format!(
            "{} is not the vocabulary this checkpoint was trained with",
            vocab_path.display()
        )));
    }
    let vocab = Vocabulary::load(&vocab_path)?;
    if vocab.len() != ckpt.model.embedding().vocab_size() {
        return Err(CliError::Integrity("vocabulary size disagrees with the checkpoint".into()));
    }
    let stop = stopwords(cfg)?;
    if stop.hash() != ckpt.meta.stopwords_hash {
        return Err(CliError::Integrity(
            "stop-word list differs from the one recorded in the checkpoint".into(),
        ));
    }
    let cleaner = TextCleaner::new(stop, ckpt.meta.clean_options);
    Ok((ckpt, vocab, cleaner))
}

pub fn eval(cfg: &RunConfig, ckpt_path: &Path, data: &Path, vocab: Option<&Path>, exclude_irrelevant: bool) -> CliResult<()> {
    let (ckpt, vocab, cleaner) = load_for_inference(cfg, ckpt_path, vocab)?;
    let scheme = ClassScheme::crisis();
    let dataset = labelled(data)?;
    if dataset.is_empty() {
        return Err(CliError::config(format!("{} has no tweets", data.display())));
    }
    let model = &ckpt.model;
    let examples = encode_tweets(&dataset.tweets, &cleaner, &vocab, model.config().seq_len);
    let preds = model.predict_batch(&examples)?;
    let golds: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let excluded = if exclude_irrelevant {
        vec![scheme.index_of("irrelevant").expect("scheme has irrelevant")]
    } else {
        Vec::new()
    };
    let report = metrics_report_excluding(&confusion(&golds, &preds, scheme.len())?, &excluded)?;
    let table = report.to_table(&scheme);
    let kv = report.to_key_values(&scheme);
    print!("{table}\n{kv}");
    write(&out_dir(cfg)?.join("eval_report.txt"), format!("{table}\n{kv}"))?;
    Ok(())
}

pub fn predict(cfg: &RunConfig, ckpt_path: &Path, vocab: Option<&Path>) -> CliResult<()> {
    let (ckpt, vocab, cleaner) = load_for_inference(cfg, ckpt_path, vocab)?;
    let scheme = ClassScheme::crisis();
    let model = &ckpt.model;
    let stdin = io::stdin();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(|e| CliError::config(format!("reading stdin: {e}")))?;
        let tokens = cleaner.tokens(&line);
        let (dist, class) = model.predict(&encode(&tokens, &vocab, model.config().seq_len))?;
        let flag = if tokens.is_empty() { "*" } else { "" };
        writeln!(out, "{}\t{:.6}{flag}", scheme.key(class).unwrap_or("?"), dist[class])
            .map_err(|e| CliError::Runtime(format!("writing stdout: {e}")))?;
    }
    Ok(())
}

pub fn selfcheck(seeds: u64) -> CliResult<()> {
    let opts = SelfCheckOptions {
        seeds,
        perturb: std::env::var(PERTURB_ENV).ok().filter(|s| !s.is_empty()),
        ..SelfCheckOptions::default()
    };
    let started = Instant::now();
    let reports = run_selfcheck(&opts);
    for r in &reports {
        println!("{r}");
    }
    println!("{:.1}s", started.elapsed().as_secs_f64());
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}
