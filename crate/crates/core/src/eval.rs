//! Macro-F1 scoring over relation types and n-gram attribution through the
//! max-pooling argmax.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::dataset::{Label, LabelScheme, EncodedExample, Vocabulary};
use crate::encoder::ForwardTrace;
use crate::error::{Error, Result};
use crate::scoring::predict;
use crate::train::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, actual: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeScore {
    pub name: String,
    pub correct: usize,
    pub predicted: usize,
    pub actual: usize,
    pub prf: Prf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_type: Vec<TypeScore>,
    /// Mean of the per-type F1 values over every relation type.
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub other: Prf,
    /// Counts keyed by (gold, predicted) label name.
    pub confusion: BTreeMap<(String, String), usize>,
    pub total: usize,
}

fn parse_all(labels: &[&str], scheme: &LabelScheme, what: &str) -> Result<Vec<Label>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            scheme
                .parse_label(l)
                .ok_or_else(|| Error::Data(format!("unknown {what} label {l:?} at position {i}")))
        })
        .collect()
}

/// Score predictions the way the task's official scorer does: a prediction
/// counts as correct only when type and direction both match, and a
/// wrong-direction prediction still counts towards the predicted type.
pub fn score_predictions(gold: &[&str], pred: &[&str], scheme: &LabelScheme) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Data(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let g = parse_all(gold, scheme, "gold")?;
    let p = parse_all(pred, scheme, "predicted")?;
    Ok(score_labels(&g, &p, scheme))
}

pub fn score_labels(gold: &[Label], pred: &[Label], scheme: &LabelScheme) -> EvalReport {
    let n_types = scheme.n_types();
    let mut correct = vec![0usize; n_types];
    let mut predicted = vec![0usize; n_types];
    let mut actual = vec![0usize; n_types];
    let (mut o_correct, mut o_pred, mut o_actual) = (0, 0, 0);
    let mut confusion = BTreeMap::new();
    for (&g, &p) in gold.iter().zip(pred) {
        *confusion.entry((scheme.name(g).to_string(), scheme.name(p).to_string())).or_insert(0) += 1;
        match g {
            Label::Actual(c) => actual[scheme.type_of(c)] += 1,
            Label::Artificial => o_actual += 1,
        }
        match p {
            Label::Actual(c) => predicted[scheme.type_of(c)] += 1,
            Label::Artificial => o_pred += 1,
        }
        if g == p {
            match g {
                Label::Actual(c) => correct[scheme.type_of(c)] += 1,
                Label::Artificial => o_correct += 1,
            }
        }
    }
    let per_type: Vec<TypeScore> = (0..n_types)
        .map(|t| TypeScore {
            name: scheme.relation_types()[t].clone(),
            correct: correct[t],
            predicted: predicted[t],
            actual: actual[t],
            prf: Prf::from_counts(correct[t], predicted[t], actual[t]),
        })
        .collect();
    let mean = |f: fn(&Prf) -> f64| per_type.iter().map(|t| f(&t.prf)).sum::<f64>() / n_types as f64;
    EvalReport {
        macro_f1: mean(|p| p.f1),
        macro_precision: mean(|p| p.precision),
        macro_recall: mean(|p| p.recall),
        other: Prf::from_counts(o_correct, o_pred, o_actual),
        per_type,
        confusion,
        total: gold.len(),
    }
}

impl EvalReport {
    /// Human-readable table followed by a `key=value` block. Metrics are
    /// printed as percentages.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<20} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}", "relation", "correct", "pred", "gold", "P", "R", "F1");
        for t in &self.per_type {
            let _ = writeln!(
                s,
                "{:<20} {:>7} {:>7} {:>7} {:>7.2} {:>7.2} {:>7.2}",
                t.name,
                t.correct,
                t.predicted,
                t.actual,
                100.0 * t.prf.precision,
                100.0 * t.prf.recall,
                100.0 * t.prf.f1
            );
        }
        let _ = writeln!(
            s,
            "{:<20} {:>7} {:>7} {:>7} {:>7.2} {:>7.2} {:>7.2}",
            "(macro, excl. Other)", "", "", "", 100.0 * self.macro_precision, 100.0 * self.macro_recall, 100.0 * self.macro_f1
        );
        let _ = writeln!(
            s,
            "{:<20} {:>7} {:>7} {:>7} {:>7.2} {:>7.2} {:>7.2}",
            "Other", "", "", "", 100.0 * self.other.precision, 100.0 * self.other.recall, 100.0 * self.other.f1
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "examples={}", self.total);
        let _ = writeln!(s, "macro_precision={:.4}", 100.0 * self.macro_precision);
        let _ = writeln!(s, "macro_recall={:.4}", 100.0 * self.macro_recall);
        let _ = writeln!(s, "macro_f1={:.4}", 100.0 * self.macro_f1);
        for t in &self.per_type {
            let _ = writeln!(s, "f1.{}={:.4}", t.name, 100.0 * t.prf.f1);
        }
        let _ = writeln!(s, "other_precision={:.4}", 100.0 * self.other.precision);
        let _ = writeln!(s, "other_recall={:.4}", 100.0 * self.other.recall);
        let _ = writeln!(s, "other_f1={:.4}", 100.0 * self.other.f1);
        s
    }
}

/// Per-window share of a class score: window `n` gets the terms
/// `r_x[j] * W[j, c]` of every dimension `j` whose max came from `n`.
/// Windows are listed in order; a window that won no dimension gets 0.
pub fn attribute_trigrams(trace: &ForwardTrace, class_col: usize, params: &ModelParams) -> Vec<(usize, f64)> {
    let mut contrib = vec![0.0; trace.n_windows()];
    for (j, &n) in trace.argmax.iter().enumerate() {
        contrib[n] += trace.r_x[j] * params.classes.w[(j, class_col)];
    }
    contrib.into_iter().enumerate().collect()
}

/// The class score summed window by window, in window order. Equal bit for
/// bit to the sum of [`attribute_trigrams`] contributions.
pub fn window_grouped_score(trace: &ForwardTrace, class_col: usize, params: &ModelParams) -> f64 {
    attribute_trigrams(trace, class_col, params).iter().map(|(_, c)| c).sum()
}

/// Tokens of window `n` with nominal heads shown as `e1`/`e2` and padding
/// as `<pad>`.
pub fn render_window(example: &EncodedExample, trace: &ForwardTrace, n: usize) -> Vec<String> {
    let half = (trace.k - 1) / 2;
    (n..n + trace.k)
        .map(|p| {
            let pos = p as i64 - half as i64;
            if pos < 0 || pos as usize >= example.len() {
                return "<pad>".to_string();
            }
            let pos = pos as usize;
            if pos == example.e1_pos {
                "e1".to_string()
            } else if pos == example.e2_pos {
                "e2".to_string()
            } else if example.tokens.len() == example.len() {
                example.tokens[pos].clone()
            } else if example.token_ids[pos] == Vocabulary::UNKNOWN_ID {
                "<unk>".to_string()
            } else {
                format!("#{}", example.token_ids[pos])
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigramEntry {
    pub ngram: Vec<String>,
    pub contribution: f64,
    /// How many sentences picked this n-gram as their top contributor.
    pub sentences: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigramReport {
    /// Indexed by class column; each list sorted by decreasing contribution.
    pub per_class: Vec<Vec<TrigramEntry>>,
}

/// For each correctly classified example, pick the window with the largest
/// contribution to the predicted class score (lowest index on ties), then
/// sum contributions of identical n-grams per class and keep the top `top_n`.
pub fn corpus_top_trigrams(examples: &[EncodedExample], params: &ModelParams, top_n: usize) -> Result<TrigramReport> {
    let n_cols = params.classes.n_embedded();
    let mut acc: Vec<HashMap<Vec<String>, (f64, usize)>> = vec![HashMap::new(); n_cols];
    for ex in examples {
        let trace = params.forward(ex)?;
        let pred = predict(&params.scores(&trace), &params.classes);
        if Some(pred) != ex.label {
            continue;
        }
        let Some(col) = params.classes.column_of(pred) else { continue };
        let contrib = attribute_trigrams(&trace, col, params);
        let mut best = contrib[0];
        for &c in &contrib[1..] {
            if c.1 > best.1 {
                best = c;
            }
        }
        let entry = acc[col].entry(render_window(ex, &trace, best.0)).or_insert((0.0, 0));
        entry.0 += best.1;
        entry.1 += 1;
    }
    let per_class = acc
        .into_iter()
        .map(|m| {
            let mut v: Vec<TrigramEntry> = m
                .into_iter()
                .map(|(ngram, (contribution, sentences))| TrigramEntry { ngram, contribution, sentences })
                .collect();
            v.sort_by(|a, b| b.contribution.total_cmp(&a.contribution).then_with(|| a.ngram.cmp(&b.ngram)));
            v.truncate(top_n);
            v
        })
        .collect();
    Ok(TrigramReport { per_class })
}

impl TrigramReport {
    /// Markdown table: one row per relation type, one column per direction.
    pub fn render(&self, scheme: &LabelScheme) -> String {
        use crate::dataset::Direction;
        let cell = |col: Option<usize>| -> String {
            match col.and_then(|c| self.per_class.get(c)) {
                Some(list) if !list.is_empty() => list
                    .iter()
                    .map(|e| format!("{} ({:.3})", e.ngram.join(" "), e.contribution))
                    .collect::<Vec<_>>()
                    .join(", "),
                _ => "-".to_string(),
            }
        };
        let mut s = String::from("| Relation | (e1,e2) | (e2,e1) |\n|---|---|---|\n");
        for (t, name) in scheme.relation_types().iter().enumerate() {
            let find = |d: Direction| (0..scheme.n_actual()).find(|&c| scheme.type_of(c) == t && scheme.direction_of(c) == d);
            let _ = writeln!(s, "| {name} | {} | {} |", cell(find(Direction::Forward)), cell(find(Direction::Reverse)));
        }
        if self.per_class.len() > scheme.n_actual() {
            let _ = writeln!(s, "| {} | {} | |", scheme.artificial_label(), cell(Some(scheme.n_actual())));
        }
        s
    }
}
