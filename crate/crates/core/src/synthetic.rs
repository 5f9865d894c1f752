//! Small generated corpora in the SemEval text format, for smoke tests and
//! sanity runs where the real data is unavailable.
//!
//! Each sentence carries exactly one cue word between the nominals and the
//! cue alone decides the label, so the set is separable by a single trigram.

use std::fmt::Write as _;

use crate::linalg::Rng;

/// `(cue word, label)`; the last entry is the artificial class.
pub const CUES: [(&str, &str); 5] = [
    ("causes", "Cause-Effect(e1,e2)"),
    ("inside", "Content-Container(e1,e2)"),
    ("from", "Entity-Origin(e1,e2)"),
    ("wields", "Instrument-Agency(e2,e1)"),
    ("near", "Other"),
];

const NOUNS: [&str; 12] = [
    "storm", "box", "wine", "farmer", "knife", "river", "letter", "engine", "crowd", "virus", "bottle",
    "hammer",
];

const FILLERS: [&str; 6] = ["the", "a", "quietly", "old", "that", "this"];

/// `n` labeled records, cycling through [`CUES`] so every label appears.
/// IDs start at 1.
pub fn separable_corpus(n: usize, seed: u64) -> String {
    let mut rng = Rng::new(seed);
    let mut out = String::new();
    for i in 0..n {
        let (cue, label) = CUES[i % CUES.len()];
        let e1 = NOUNS[rng.below(NOUNS.len())];
        let e2 = NOUNS[rng.below(NOUNS.len())];
        let pre = FILLERS[rng.below(FILLERS.len())];
        let mid = FILLERS[rng.below(FILLERS.len())];
        let _ = writeln!(out, "{}\t\"{pre} <e1>{e1}</e1> {cue} {mid} <e2>{e2}</e2> .\"", i + 1);
        let _ = writeln!(out, "{label}");
        let _ = writeln!(out, "Comment:");
        out.push('\n');
    }
    out
}

/// The same records without label lines.
pub fn strip_labels(corpus: &str) -> String {
    let mut out = String::new();
    for line in corpus.lines() {
        let keep = line.is_empty() || line.split_once('\t').is_some_and(|(id, _)| id.chars().all(|c| c.is_ascii_digit()));
        if keep {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}
