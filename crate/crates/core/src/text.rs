//! Tweet cleaning, tokenization, vocabulary construction and index encoding.
//!
//! Cleaning works token by token on the whitespace-split input:
//!
//! 1. codepoints in the emoji blocks become spaces;
//! 2. tokens starting with `#` are dropped (or only lose the `#` when
//!    [`CleanOptions::strip_hash_only`] is set), tokens starting with `@` are
//!    dropped when [`CleanOptions::drop_mentions`] is set;
//! 3. the token is lowercased and anything from `http://` / `https://` onward
//!    is cut;
//! 4. punctuation (Unicode `P*` plus `$+<=>^`|~`) and invisible control or
//!    format characters are deleted;
//! 5. empty tokens, leftover URL fragments (anything still containing `http`)
//!    and stop words are dropped.
//!
//! Digits are kept. The surviving tokens are joined by single spaces.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};
use crate::hash::sha256_hex;

/// Index reserved for padding positions.
pub const PAD: usize = 0;
/// Index for tokens missing from the vocabulary.
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

pub const DEFAULT_SEQ_LEN: usize = 30;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords_en_v1.txt");

/// A tweet as read from a corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTweet {
    pub id: String,
    pub text: String,
    /// Class index in the crisis scheme, when the row is labelled.
    pub label: Option<usize>,
}

/// Ordered lowercase tokens of a cleaned tweet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn new(tokens: Vec<String>) -> Self {
        TokenSeq(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().map(Into::into).collect())
    }
}

/// Set of tokens removed during cleaning.
#[derive(Debug, Clone)]
pub struct StopWords {
    words: HashSet<String>,
    hash: String,
}

impl StopWords {
    /// The stop-word list shipped with the crate.
    pub fn bundled() -> Self {
        StopWords::parse(BUNDLED_STOPWORDS)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(StopWords::parse(&text))
    }

    /// One token per line; `#` lines are comments. Entries are normalized the
    /// same way tweet tokens are, so `don't` matches the cleaned `dont`.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| strip_punctuation(&l.to_lowercase()))
            .filter(|w| !w.is_empty())
            .collect();
        StopWords {
            words,
            hash: sha256_hex(text.as_bytes()),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// SHA-256 of the source text, hex encoded.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanOptions {
    /// Keep hashtag words, removing only the `#`.
    pub strip_hash_only: bool,
    /// Drop whole `@handle` tokens instead of just the `@`.
    pub drop_mentions: bool,
}

#[derive(Debug, Clone)]
pub struct TextCleaner {
    stopwords: StopWords,
    options: CleanOptions,
}

impl Default for TextCleaner {
    fn default() -> Self {
        TextCleaner::new(StopWords::bundled(), CleanOptions::default())
    }
}

impl TextCleaner {
    pub fn new(stopwords: StopWords, options: CleanOptions) -> Self {
        TextCleaner { stopwords, options }
    }

    pub fn stopwords(&self) -> &StopWords {
        &self.stopwords
    }

    pub fn options(&self) -> CleanOptions {
        self.options
    }

    pub fn clean(&self, raw: &str) -> String {
        let spaced: String = raw
            .chars()
            .map(|c| if is_emoji(c) { ' ' } else { c })
            .collect();
        let mut out = String::with_capacity(spaced.len());
        for token in spaced.split_whitespace() {
            let token = if let Some(rest) = token.strip_prefix('#') {
                if !self.options.strip_hash_only {
                    continue;
                }
                rest
            } else {
                token
            };
            if self.options.drop_mentions && token.starts_with('@') {
                continue;
            }
            let mut lower = token.to_lowercase();
            if let Some(pos) = find_url(&lower) {
                lower.truncate(pos);
            }
            let word = strip_punctuation(&lower);
            if word.is_empty() || word.contains("http") || self.stopwords.contains(&word) {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&word);
        }
        out
    }

    /// Clean, then split.
    pub fn tokens(&self, raw: &str) -> TokenSeq {
        tokenize(&self.clean(raw))
    }
}

fn default_cleaner() -> &'static TextCleaner {
    static CLEANER: OnceLock<TextCleaner> = OnceLock::new();
    CLEANER.get_or_init(TextCleaner::default)
}

/// Cleans with the bundled stop words and default options.
pub fn clean_text(raw: &str) -> String {
    default_cleaner().clean(raw)
}

pub fn tokenize(cleaned: &str) -> TokenSeq {
    cleaned.split_whitespace().collect()
}

/// Emoji blocks removed by the cleaner.
pub fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x1F600..=0x1F64F
        | 0x1F300..=0x1F5FF
        | 0x1F680..=0x1F6FF
        | 0x1F900..=0x1F9FF
        | 0x2600..=0x27BF)
}

pub fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(c, '$' | '+' | '<' | '=' | '>' | '^' | '`' | '|' | '~')
        || matches!(
            get_general_category(c),
            ConnectorPunctuation
                | DashPunctuation
                | OpenPunctuation
                | ClosePunctuation
                | InitialPunctuation
                | FinalPunctuation
                | OtherPunctuation
        )
}

fn is_invisible(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::Control | GeneralCategory::Format
    )
}

fn strip_punctuation(s: &str) -> String {
    s.chars()
        .filter(|&c| !is_punctuation(c) && !is_invisible(c))
        .collect()
}

fn find_url(s: &str) -> Option<usize> {
    match (s.find("http://"), s.find("https://")) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Token ↔ index map with `PAD = 0` and `UNK = 1` reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index_to_token: Vec<String>,
    token_to_index: HashMap<String, usize>,
}

impl Vocabulary {
    /// A vocabulary holding only `PAD` and `UNK`.
    pub fn empty() -> Self {
        Vocabulary {
            index_to_token: vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()],
            token_to_index: HashMap::new(),
        }
    }

    /// Appends `token` unless present; returns its index.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.token_to_index.get(token) {
            return i;
        }
        let i = self.index_to_token.len();
        self.index_to_token.push(token.to_owned());
        self.token_to_index.insert(token.to_owned(), i);
        i
    }

    /// Total size including the two reserved entries.
    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    /// Corpus tokens in index order (reserved entries excluded).
    pub fn corpus_tokens(&self) -> impl Iterator<Item = (usize, &str)> {
        self.index_to_token
            .iter()
            .enumerate()
            .skip(2)
            .map(|(i, t)| (i, t.as_str()))
    }

    /// Maps indices back to tokens, stopping at the first `PAD`.
    pub fn decode(&self, indices: &[usize]) -> Vec<&str> {
        indices
            .iter()
            .take_while(|&&i| i != PAD)
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN))
            .collect()
    }

    /// One token per line in index order, reserved entries first.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.index_to_token {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let reserved = [PAD_TOKEN, UNK_TOKEN];
        for (line, want) in reserved.iter().enumerate() {
            if lines.next() != Some(*want) {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: line + 1,
                    msg: format!("expected reserved token `{want}`"),
                });
            }
        }
        let mut vocab = Vocabulary::empty();
        for (i, tok) in lines.enumerate() {
            let line = i + 3;
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    msg: "vocabulary tokens must be non-empty and whitespace-free".into(),
                });
            }
            if vocab.index_of(tok).is_some() || reserved.contains(&tok) {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    msg: format!("duplicate token `{tok}`"),
                });
            }
            vocab.insert(tok);
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::parse(&text, path)
    }

    /// SHA-256 of [`Vocabulary::to_text`]; equals the hash of a saved file.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

/// Counts tokens and assigns indices from 2 upward by descending frequency,
/// ties broken lexicographically.
pub fn build_vocabulary(corpus: &[TokenSeq], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot build a vocabulary from an empty corpus".into()));
    }
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in corpus {
        for t in seq.tokens() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = Vocabulary::empty();
    for (tok, _) in ranked {
        vocab.insert(tok);
    }
    Ok(vocab)
}

/// A fixed-length, padded index sequence with its class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub indices: Vec<usize>,
    pub true_length: usize,
    pub label: usize,
}

impl EncodedExample {
    pub fn with_label(mut self, label: usize) -> Self {
        self.label = label;
        self
    }

    pub fn seq_len(&self) -> usize {
        self.indices.len()
    }
}

/// Maps tokens to indices (unknown → `UNK`), truncating the tail or
/// right-padding with `PAD` to `seq_len`. The label is left at 0.
pub fn encode(seq: &TokenSeq, vocab: &Vocabulary, seq_len: usize) -> EncodedExample {
    assert!(seq_len >= 1, "seq_len must be at least 1");
    let mut indices: Vec<usize> = seq
        .tokens()
        .iter()
        .take(seq_len)
        .map(|t| vocab.index_of(t).unwrap_or(UNK))
        .collect();
    let true_length = indices.len();
    indices.resize(seq_len, PAD);
    EncodedExample {
        indices,
        true_length,
        label: 0,
    }
}

/// Cleans, tokenizes and encodes every tweet; unlabelled tweets get label 0.
pub fn encode_tweets(tweets: &[RawTweet], cleaner: &TextCleaner, vocab: &Vocabulary, seq_len: usize) -> Vec<EncodedExample> {
    tweets
        .iter()
        .map(|t| encode(&cleaner.tokens(&t.text), vocab, seq_len).with_label(t.label.unwrap_or(0)))
        .collect()
}
