//! Seeded synthetic tweets and toy embedding files for tests and demos.
//!
//! Each class owns a keyword list. Generated tweets mix a few class keywords
//! with neutral filler words and the kind of noise real tweets carry (links,
//! hashtags, mentions, emoji, stop words, shouting, misspellings), so the
//! cleaning pipeline has real work to do before the classifier sees them.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::NUM_CLASSES;
use crate::text::RawTweet;

/// Per-class tweet counts of the CrisisNLP train, dev and test splits.
pub const CRISISNLP_TRAIN_COUNTS: [usize; NUM_CLASSES] = [1611, 741, 676, 1526, 2352, 5690, 6254];
pub const CRISISNLP_DEV_COUNTS: [usize; NUM_CLASSES] = [487, 221, 177, 436, 712, 1623, 1756];
pub const CRISISNLP_TEST_COUNTS: [usize; NUM_CLASSES] = [233, 106, 94, 232, 350, 766, 886];

pub const CLASS_WORDS: [&[&str]; NUM_CLASSES] = [
    &[
        "killed", "dead", "injured", "casualties", "wounded", "toll", "victims", "hospitalized", "bodies", "fatalities",
    ],
    &[
        "missing", "trapped", "rubble", "rescued", "survivors", "search", "found", "stranded", "unaccounted", "located",
    ],
    &[
        "bridge", "collapsed", "power", "outage", "roads", "damaged", "flooded", "electricity", "water", "destroyed",
    ],
    &[
        "prayers", "thoughts", "heartbroken", "pray", "condolences", "sending", "love", "strength", "hearts", "sorrow",
    ],
    &[
        "donate", "volunteers", "donations", "relief", "supplies", "fund", "shelter", "aid", "help", "blood",
    ],
    &[
        "warning", "alert", "update", "evacuation", "forecast", "officials", "advisory", "magnitude", "storm", "reported",
    ],
    &[
        "lol", "game", "music", "movie", "birthday", "pizza", "party", "song", "weekend", "coffee",
    ],
];

pub const FILLER_WORDS: &[&str] = &[
    "people", "city", "area", "today", "news", "local", "near", "morning", "night", "town", "region", "week", "via",
    "latest", "many", "still", "first", "big", "new", "everyone", "family", "county", "state", "coast",
];

const STOPWORD_NOISE: &[&str] = &["the", "and", "is", "in", "of", "to", "for", "this", "are", "we", "at", "on"];
const HASHTAGS: &[&str] = &["#earthquake", "#flood", "#breaking", "#news", "#help", "#pray"];
const MENTIONS: &[&str] = &["@redcross", "@cnn", "@user123", "@fema", "@localnews"];
const EMOJI: &[&str] = &["\u{1F64F}", "\u{1F622}", "\u{2764}", "\u{1F602}", "\u{26A0}"];

/// Splits `total` in proportion to `weights` by largest remainder; ties in
/// the remainder go to the lower index.
pub fn proportional_counts(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut counts: Vec<usize> = weights.iter().map(|&w| w * total / sum).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(weights[i] * total % sum));
    let missing = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

fn misspell(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() > 3 {
        let i = rng.gen_range(1..chars.len() - 1);
        chars.swap(i, i + 1);
    }
    chars.into_iter().collect()
}

fn noisy_tweet(label: usize, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<String> = Vec::new();
    let own = CLASS_WORDS[label];
    for _ in 0..rng.gen_range(2..=4) {
        words.push(own.choose(rng).expect("non-empty").to_string());
    }
    if rng.gen_bool(0.25) {
        let other = (label + rng.gen_range(1..NUM_CLASSES)) % NUM_CLASSES;
        words.push(CLASS_WORDS[other].choose(rng).expect("non-empty").to_string());
    }
    for _ in 0..rng.gen_range(2..=5) {
        words.push(FILLER_WORDS.choose(rng).expect("non-empty").to_string());
    }
    for _ in 0..rng.gen_range(1..=3) {
        words.push(STOPWORD_NOISE.choose(rng).expect("non-empty").to_string());
    }
    words.shuffle(rng);
    for w in words.iter_mut() {
        match rng.gen_range(0..20) {
            0 => *w = w.to_uppercase(),
            1 => *w = misspell(w, rng),
            2 => w.push_str("!!"),
            3 => w.push(','),
            _ => {}
        }
    }
    if rng.gen_bool(0.3) {
        words.insert(0, MENTIONS.choose(rng).expect("non-empty").to_string());
    }
    if rng.gen_bool(0.4) {
        words.push(HASHTAGS.choose(rng).expect("non-empty").to_string());
    }
    if rng.gen_bool(0.3) {
        words.push(EMOJI.choose(rng).expect("non-empty").to_string());
    }
    if rng.gen_bool(0.35) {
        words.push(format!("https://t.co/{:08x}", rng.gen::<u32>()));
    }
    words.join(" ")
}

fn labelled(counts: &[usize], prefix: &str, rng: &mut ChaCha8Rng, make: impl Fn(usize, &mut ChaCha8Rng) -> String) -> Vec<RawTweet> {
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
        .collect();
    labels.shuffle(rng);
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| RawTweet {
            id: format!("{prefix}{i:05}"),
            text: make(label, rng),
            label: Some(label),
        })
        .collect()
}

/// Noisy crisis-style tweets with `counts[c]` examples of class `c`.
pub fn crisis_corpus(counts: &[usize], prefix: &str, seed: u64) -> Vec<RawTweet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labelled(counts, prefix, &mut rng, noisy_tweet)
}

/// Short tweets built only from their own class's keywords, so a bag of
/// keyword indicators separates the classes exactly.
pub fn separable_corpus(total: usize, seed: u64) -> Vec<RawTweet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = proportional_counts(&[1; NUM_CLASSES], total);
    labelled(&counts, "sep", &mut rng, |label, rng| {
        let own = CLASS_WORDS[label];
        (0..rng.gen_range(3..=5))
            .map(|_| *own.choose(rng).expect("non-empty"))
            .collect::<Vec<_>>()
            .join(" ")
    })
}

/// Every word the generators can emit after cleaning, without
/// misspellings: class keywords first, then fillers.
pub fn lexicon() -> Vec<&'static str> {
    CLASS_WORDS
        .iter()
        .flat_map(|ws| ws.iter().copied())
        .chain(FILLER_WORDS.iter().copied())
        .collect()
}

/// Word vectors in which each class keyword sits near its class centroid and
/// fillers scatter around the origin. Words are kept with probability
/// `coverage`.
pub fn toy_vectors(dim: usize, coverage: f64, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> = (0..NUM_CLASSES)
        .map(|_| (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect())
        .collect();
    let mut out = Vec::new();
    for (c, words) in CLASS_WORDS.iter().enumerate() {
        for w in words.iter() {
            let v = centroids[c].iter().map(|x| x + rng.gen_range(-0.15..0.15)).collect();
            if rng.gen_bool(coverage) {
                out.push((w.to_string(), v));
            }
        }
    }
    for w in FILLER_WORDS {
        let v = (0..dim).map(|_| rng.gen_range(-0.2..0.2)).collect();
        if rng.gen_bool(coverage) {
            out.push((w.to_string(), v));
        }
    }
    out
}

/// Serializes vectors as `word v1 … vD` lines, with a `count dim` first line
/// when `header` is set.
pub fn vectors_to_text(vectors: &[(String, Vec<f64>)], header: bool) -> String {
    let mut s = String::new();
    if header {
        let dim = vectors.first().map_or(0, |(_, v)| v.len());
        let _ = writeln!(s, "{} {}", vectors.len(), dim);
    }
    for (w, v) in vectors {
        s.push_str(w);
        for x in v {
            let _ = write!(s, " {x:.6}");
        }
        s.push('\n');
    }
    s
}
