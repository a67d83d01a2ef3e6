//! Corpus loading with the seven-class crisis scheme, confusion matrices and
//! precision / recall / F1 reports.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::RawTweet;

/// The seven humanitarian information classes, in class-number order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassScheme {
    keys: Vec<&'static str>,
    titles: Vec<&'static str>,
}

impl Default for ClassScheme {
    fn default() -> Self {
        ClassScheme::crisis()
    }
}

impl ClassScheme {
    pub fn crisis() -> Self {
        ClassScheme {
            keys: vec![
                "injured_or_dead_people",
                "missing_trapped_or_found_people",
                "infrastructure_and_utilities_damages",
                "sympathy_and_emotional_support",
                "donation_needs_or_offers_or_volunteering_services",
                "other_useful_information",
                "irrelevant",
            ],
            titles: vec![
                "Injured or dead people",
                "Missing, trapped or found people",
                "Infrastructure and utilities damages",
                "Sympathy and emotional support",
                "Donation needs or offers or volunteering services",
                "Other useful information",
                "Irrelevant",
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[&'static str] {
        &self.keys
    }

    pub fn key(&self, index: usize) -> Option<&'static str> {
        self.keys.get(index).copied()
    }

    pub fn title(&self, index: usize) -> Option<&'static str> {
        self.titles.get(index).copied()
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.keys.iter().position(|k| *k == key)
    }
}

/// Tweets of one corpus file and how many carry each label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub tweets: Vec<RawTweet>,
    pub class_counts: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    /// Errors unless every tweet is labelled.
    pub fn require_labels(&self, path: &Path) -> Result<()> {
        match self.tweets.iter().position(|t| t.label.is_none()) {
            None => Ok(()),
            Some(i) => Err(Error::Parse {
                path: path.to_owned(),
                line: i + 2,
                msg: "row has no label".into(),
            }),
        }
    }
}

pub const TSV_HEADER: &str = "id\ttext\tlabel";

/// Reads a `id<TAB>text<TAB>label` file. An empty label field leaves the
/// tweet unlabelled.
pub fn load_dataset(path: impl AsRef<Path>, scheme: &ClassScheme) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, scheme, path)
}

pub fn parse_dataset(text: &str, scheme: &ClassScheme, path: &Path) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    match lines.next() {
        Some((_, header)) if header == TSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: 1,
                msg: format!("expected header `{}`", TSV_HEADER.replace('\t', "<TAB>")),
            })
        }
    }
    let mut tweets = Vec::new();
    let mut class_counts = vec![0; scheme.len()];
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, text, label] = fields.as_slice() else {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: n,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        };
        let label = if label.is_empty() {
            None
        } else {
            let idx = scheme.index_of(label).ok_or_else(|| Error::UnknownLabel {
                path: path.to_owned(),
                line: n,
                label: (*label).to_owned(),
            })?;
            class_counts[idx] += 1;
            Some(idx)
        };
        tweets.push(RawTweet {
            id: (*id).to_owned(),
            text: (*text).to_owned(),
            label,
        });
    }
    Ok(Dataset { tweets, class_counts })
}

/// Writes tweets in the corpus TSV layout. Tabs and newlines inside the text
/// are replaced by spaces.
pub fn write_dataset(tweets: &[RawTweet], scheme: &ClassScheme) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for t in tweets {
        let text: String = t
            .text
            .chars()
            .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
            .collect();
        let label = t.label.and_then(|l| scheme.key(l)).unwrap_or("");
        let _ = writeln!(out, "{}\t{}\t{}", t.id, text, label);
    }
    out
}

/// `counts[gold][pred]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn count(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold][pred]
    }

    pub fn add(&mut self, gold: usize, pred: usize) -> Result<()> {
        let c = self.classes();
        if gold >= c || pred >= c {
            return Err(Error::InvalidArgument(format!(
                "class pair ({gold}, {pred}) out of range for {c} classes"
            )));
        }
        self.counts[gold][pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum::<u64>() - self.true_positives(class)
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() - self.true_positives(class)
    }

    /// Gold examples of `class`.
    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }
}

/// Counts `(gold, pred)` pairs over `classes` classes.
pub fn confusion(golds: &[usize], preds: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&g, &p) in golds.iter().zip(preds) {
        cm.add(g, p)?;
    }
    Ok(cm)
}

/// `2·TP / (2·TP + FP + FN)`, with 0 when all three counts are zero.
pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

fn ratio(num: u64, denom: u64, undefined: &mut usize) -> f64 {
    if denom == 0 {
        *undefined += 1;
        0.0
    } else {
        num as f64 / denom as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean F1 over the classes not excluded.
    pub macro_f1: f64,
    /// Support-weighted mean F1 over the classes not excluded.
    pub weighted_f1: f64,
    pub accuracy: f64,
    /// Classes left out of the macro and weighted averages.
    pub excluded: Vec<usize>,
    /// Precision, recall or F1 values that were 0/0 and reported as 0.
    pub undefined: usize,
}

pub fn metrics_report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    metrics_report_excluding(cm, &[])
}

/// Like [`metrics_report`] but drops `excluded` classes from the macro and
/// weighted averages. Per-class rows and accuracy are unaffected.
pub fn metrics_report_excluding(cm: &ConfusionMatrix, excluded: &[usize]) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    if let Some(&bad) = excluded.iter().find(|&&c| c >= cm.classes()) {
        return Err(Error::InvalidArgument(format!("excluded class {bad} out of range")));
    }
    let mut undefined = 0;
    let per_class: Vec<ClassMetrics> = (0..cm.classes())
        .map(|c| {
            let (tp, fp, fn_) = (cm.true_positives(c), cm.false_positives(c), cm.false_negatives(c));
            if tp + fp + fn_ == 0 {
                undefined += 1;
            }
            ClassMetrics {
                precision: ratio(tp, tp + fp, &mut undefined),
                recall: ratio(tp, tp + fn_, &mut undefined),
                f1: f1_from_counts(tp, fp, fn_),
                support: cm.support(c),
            }
        })
        .collect();
    let included: Vec<&ClassMetrics> = per_class
        .iter()
        .enumerate()
        .filter(|(c, _)| !excluded.contains(c))
        .map(|(_, m)| m)
        .collect();
    if included.is_empty() {
        return Err(Error::InvalidArgument("every class is excluded".into()));
    }
    let macro_f1 = included.iter().map(|m| m.f1).sum::<f64>() / included.len() as f64;
    let support: u64 = included.iter().map(|m| m.support).sum();
    let weighted_f1 = if support == 0 {
        0.0
    } else {
        included.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / support as f64
    };
    let mut excluded = excluded.to_vec();
    excluded.sort_unstable();
    excluded.dedup();
    Ok(MetricsReport {
        per_class,
        macro_f1,
        weighted_f1,
        accuracy: cm.trace() as f64 / total as f64,
        excluded,
        undefined,
    })
}

impl MetricsReport {
    /// Human-readable table.
    pub fn to_table(&self, scheme: &ClassScheme) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<52} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for (i, m) in self.per_class.iter().enumerate() {
            let name = scheme.key(i).unwrap_or("?");
            let mark = if self.excluded.contains(&i) { " (excluded)" } else { "" };
            let _ = writeln!(
                s,
                "{:<52} {:>9.4} {:>9.4} {:>9.4} {:>8}{mark}",
                name, m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(s, "macro F1     {:.4}", self.macro_f1);
        let _ = writeln!(s, "weighted F1  {:.4}", self.weighted_f1);
        let _ = writeln!(s, "accuracy     {:.4}", self.accuracy);
        if self.undefined > 0 {
            let _ = writeln!(s, "warning: {} undefined ratios (0/0) reported as 0", self.undefined);
        }
        s
    }

    /// `key = value` lines with the documented key names.
    pub fn to_key_values(&self, scheme: &ClassScheme) -> String {
        let mut s = String::new();
        for (i, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(s, "per_class[{i}].key = {}", scheme.key(i).unwrap_or("?"));
            let _ = writeln!(s, "per_class[{i}].precision = {}", m.precision);
            let _ = writeln!(s, "per_class[{i}].recall = {}", m.recall);
            let _ = writeln!(s, "per_class[{i}].f1 = {}", m.f1);
            let _ = writeln!(s, "per_class[{i}].support = {}", m.support);
        }
        let _ = writeln!(s, "macro_f1 = {}", self.macro_f1);
        let _ = writeln!(s, "weighted_f1 = {}", self.weighted_f1);
        let _ = writeln!(s, "accuracy = {}", self.accuracy);
        let excluded: Vec<String> = self.excluded.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "excluded = {}", excluded.join(","));
        let _ = writeln!(s, "undefined_ratios = {}", self.undefined);
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table(&ClassScheme::crisis()))
    }
}

/// Evaluates predictions against gold labels in one call.
pub fn evaluate(golds: &[usize], preds: &[usize], classes: usize) -> Result<MetricsReport> {
    metrics_report(&confusion(golds, preds, classes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scheme_has_seven_fixed_classes() {
        let s = ClassScheme::crisis();
        assert_eq!(s.len(), 7);
        assert_eq!(s.index_of("injured_or_dead_people"), Some(0));
        assert_eq!(s.index_of("irrelevant"), Some(6));
        assert_eq!(s.title(2), Some("Infrastructure and utilities damages"));
    }

    #[test]
    fn dataset_parsing() {
        let s = ClassScheme::crisis();
        let p = Path::new("d.tsv");
        let d = parse_dataset("id\ttext\tlabel\n", &s, p).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.class_counts, vec![0; 7]);

        let d = parse_dataset("id\ttext\tlabel\r\n1\tbridge down\tinfrastructure_and_utilities_damages\r\n2\thello\t\n", &s, p).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.tweets[0].label, Some(2));
        assert_eq!(d.tweets[1].label, None);
        assert_eq!(d.class_counts[2], 1);
        assert!(d.require_labels(p).is_err());

        let e = parse_dataset("id\ttext\tlabel\n1\tx\tfloods\n", &s, p).unwrap_err();
        assert!(matches!(e, Error::UnknownLabel { line: 2, .. }));
        let e = parse_dataset("id\ttext\tlabel\n1\tx\n", &s, p).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(parse_dataset("text\tlabel\n", &s, p).is_err());
    }

    #[test]
    fn write_then_parse() {
        let s = ClassScheme::crisis();
        let tweets = vec![
            RawTweet { id: "a".into(), text: "tab\there".into(), label: Some(6) },
            RawTweet { id: "b".into(), text: "x".into(), label: None },
        ];
        let d = parse_dataset(&write_dataset(&tweets, &s), &s, Path::new("w.tsv")).unwrap();
        assert_eq!(d.tweets[0].text, "tab here");
        assert_eq!(d.tweets[0].label, Some(6));
        assert_eq!(d.tweets[1].label, None);
    }

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[0, 0], &[0, 1], 7).unwrap();
        assert_eq!(cm.true_positives(0), 1);
        assert_eq!(cm.false_negatives(0), 1);
        assert_eq!(cm.false_positives(1), 1);
        assert_eq!(cm.false_positives(0), 0);

        let labels: Vec<usize> = (0..7).cycle().take(20).collect();
        let cm = confusion(&labels, &labels, 7).unwrap();
        for g in 0..7 {
            for p in 0..7 {
                if g != p {
                    assert_eq!(cm.count(g, p), 0);
                }
            }
        }
        assert!(confusion(&[0], &[0, 1], 7).is_err());
        assert!(confusion(&[7], &[0], 7).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_from_counts(1, 0, 0), 1.0);
        assert!((f1_from_counts(2, 1, 1) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(f1_from_counts(0, 3, 0), 0.0);
        assert_eq!(f1_from_counts(0, 0, 0), 0.0);
    }

    #[test]
    fn perfect_report() {
        let labels: Vec<usize> = (0..7).collect();
        let r = evaluate(&labels, &labels, 7).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.weighted_f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.undefined, 0);
    }

    #[test]
    fn majority_class_report() {
        // two gold examples per class, everything predicted as class 6
        let golds: Vec<usize> = (0..7).flat_map(|c| [c, c]).collect();
        let preds = vec![6; 14];
        let r = evaluate(&golds, &preds, 7).unwrap();
        let (s6, n) = (2.0, 14.0);
        let f1_6 = 2.0 * s6 / (s6 + n);
        assert!((r.per_class[6].f1 - f1_6).abs() < 1e-15);
        assert!((r.macro_f1 - f1_6 / 7.0).abs() < 1e-15);
        assert!(r.undefined > 0);
    }

    #[test]
    fn exclusion_flag() {
        let golds = [0, 1, 6, 6];
        let preds = [0, 6, 6, 6];
        let cm = confusion(&golds, &preds, 7).unwrap();
        let all = metrics_report(&cm).unwrap();
        let without = metrics_report_excluding(&cm, &[6]).unwrap();
        assert!((without.macro_f1 - (1.0 + 0.0) / 6.0).abs() < 1e-15);
        assert_eq!(all.accuracy, without.accuracy);
        assert!(metrics_report(&ConfusionMatrix::new(7)).is_err());
        assert!(without.to_table(&ClassScheme::crisis()).contains("(excluded)"));
    }

    #[test]
    fn key_value_serialization_has_documented_keys() {
        let r = evaluate(&[0, 1, 2], &[0, 1, 1], 7).unwrap();
        let kv = r.to_key_values(&ClassScheme::crisis());
        for key in ["per_class[0].precision", "per_class[6].recall", "per_class[3].f1", "per_class[2].support", "macro_f1", "weighted_f1", "accuracy"] {
            assert!(kv.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key}");
        }
    }

    fn pairs() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        proptest::collection::vec((0usize..7, 0usize..7), 1..200).prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #[test]
        fn report_values_in_unit_interval((g, p) in pairs()) {
            let r = evaluate(&g, &p, 7).unwrap();
            for m in &r.per_class {
                for v in [m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                if m.precision > 0.0 && m.recall > 0.0 {
                    prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-15);
                    prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-15);
                }
            }
            prop_assert!((0.0..=1.0).contains(&r.macro_f1));
            prop_assert!((0.0..=1.0).contains(&r.weighted_f1));
        }

        #[test]
        fn report_is_permutation_invariant((g, p) in pairs(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..g.len()).collect();
            let mut state = seed;
            for i in (1..idx.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (state >> 33) as usize % (i + 1));
            }
            let g2: Vec<usize> = idx.iter().map(|&i| g[i]).collect();
            let p2: Vec<usize> = idx.iter().map(|&i| p[i]).collect();
            prop_assert_eq!(evaluate(&g, &p, 7).unwrap(), evaluate(&g2, &p2, 7).unwrap());
        }

        #[test]
        fn counts_partition_the_examples((g, p) in pairs()) {
            let cm = confusion(&g, &p, 7).unwrap();
            let tp_fp: u64 = (0..7).map(|c| cm.true_positives(c) + cm.false_positives(c)).sum();
            let tp_fn: u64 = (0..7).map(|c| cm.true_positives(c) + cm.false_negatives(c)).sum();
            prop_assert_eq!(tp_fp, g.len() as u64);
            prop_assert_eq!(tp_fn, g.len() as u64);
            prop_assert_eq!(cm.total(), g.len() as u64);
        }

        #[test]
        fn f1_equals_harmonic_mean(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500) {
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            if p + r > 0.0 {
                prop_assert!((f1_from_counts(tp, fp, fn_) - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
        }
    }
}
