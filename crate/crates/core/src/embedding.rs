//! Word embeddings, word-position embeddings, and assembly of the per-token
//! input vectors fed to the convolution.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::dataset::{normalize_word, EncodedExample, Vocabulary};
use crate::error::{Error, Result};
use crate::linalg::{uniform_init, Matrix, Rng};

/// `d_w x |V|` matrix; column `i` is the vector of vocabulary entry `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddings {
    pub matrix: Matrix,
}

impl WordEmbeddings {
    /// Every column uniform in `(-0.5/d_w, 0.5/d_w)`.
    pub fn random(dim: usize, vocab_size: usize, rng: &mut Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("word embedding size must be positive".into()));
        }
        Ok(WordEmbeddings { matrix: uniform_init(dim, vocab_size, 0.5 / dim as f64, rng)? })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.cols()
    }
}

/// Vectors read from a word2vec-style text file.
#[derive(Debug, Clone)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub words: Vec<String>,
    /// `words.len() * dim` values, one word after another.
    pub values: Vec<f64>,
}

impl PretrainedVectors {
    /// Reads `count dim` followed by `word v1 .. v_dim` lines. Words are
    /// normalized like corpus tokens; when two words collide the first wins.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        let (count, dim) = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => {
                    let fields: Vec<&str> = l.split_whitespace().collect();
                    let parsed = match fields.as_slice() {
                        [c, d] => c.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
                        _ => None,
                    };
                    match parsed {
                        Some((c, d)) if d > 0 => break (c, d),
                        _ => return Err(Error::parse(path, i + 1, "expected header `vocab_count dim`")),
                    }
                }
                None => return Err(Error::parse(path, 1, "empty embeddings file")),
            }
        };
        let mut words = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count * dim);
        let mut seen = HashMap::new();
        let mut rows = 0;
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            let mut fields = line.split_whitespace();
            let word = fields.next().expect("non-blank line has a field");
            let vec: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(path, i + 1, format!("bad number: {e}")))?;
            if vec.len() != dim {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected {dim} values, found {}", vec.len()),
                ));
            }
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(path, i + 1, "non-finite value"));
            }
            let word = normalize_word(word);
            if seen.insert(word.clone(), ()).is_none() {
                words.push(word);
                values.extend(vec);
            }
        }
        if rows != count {
            return Err(Error::parse(path, 1, format!("header says {count} vectors, file has {rows}")));
        }
        Ok(PretrainedVectors { dim, words, values })
    }

    /// Embedding matrix for `vocab`: known words copy their vector, the rest
    /// (padding and unknown included) are drawn from `U(-0.5/d_w, 0.5/d_w)`.
    pub fn to_embeddings(&self, vocab: &Vocabulary, rng: &mut Rng) -> Result<WordEmbeddings> {
        let mut we = WordEmbeddings::random(self.dim, vocab.len(), rng)?;
        for (k, w) in self.words.iter().enumerate() {
            if let Some(id) = vocab.get(w) {
                if id != Vocabulary::PADDING_ID && id != Vocabulary::UNKNOWN_ID {
                    we.matrix.set_col(id, &self.values[k * self.dim..(k + 1) * self.dim]);
                }
            }
        }
        Ok(we)
    }
}

pub fn load_pretrained(path: &Path, vocab: &Vocabulary, rng: &mut Rng) -> Result<WordEmbeddings> {
    PretrainedVectors::read(path)?.to_embeddings(vocab, rng)
}

/// Two position tables, one per nominal. Column `d + max_abs_distance` holds
/// the vector for clipped distance `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionEmbeddings {
    pub table1: Matrix,
    pub table2: Matrix,
    pub max_abs_distance: usize,
}

impl PositionEmbeddings {
    /// `d_wpe` is the concatenated size; each table gets `d_wpe / 2` rows,
    /// initialized in `(-0.5/(d_wpe/2), 0.5/(d_wpe/2))`.
    pub fn random(d_wpe: usize, max_abs_distance: usize, rng: &mut Rng) -> Result<Self> {
        if d_wpe == 0 || !d_wpe.is_multiple_of(2) {
            return Err(Error::Config(format!("position embedding size must be even and positive, got {d_wpe}")));
        }
        let half = d_wpe / 2;
        let buckets = 2 * max_abs_distance + 1;
        let r = 0.5 / half as f64;
        Ok(PositionEmbeddings {
            table1: uniform_init(half, buckets, r, rng)?,
            table2: uniform_init(half, buckets, r, rng)?,
            max_abs_distance,
        })
    }

    /// Concatenated size `d_wpe`.
    pub fn dim(&self) -> usize {
        self.table1.rows() * 2
    }

    pub fn half_dim(&self) -> usize {
        self.table1.rows()
    }

    pub fn buckets(&self) -> usize {
        self.table1.cols()
    }

    /// Column index for a (signed, unclipped) distance.
    pub fn bucket(&self, distance: i64) -> usize {
        let m = self.max_abs_distance as i64;
        (distance.clamp(-m, m) + m) as usize
    }
}

/// Signed distance of a token to a nominal, `noun_index - token_index`.
///
/// In "the car left the plant" the token "left" is at distance -1 from "car"
/// and 2 from "plant".
pub fn relative_distance(token_index: i64, noun_index: i64) -> i64 {
    noun_index - token_index
}

/// Where each assembled row came from, so gradients can be scattered back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputSource {
    pub word: usize,
    /// Column indices into `table1`/`table2`, when positions are used.
    pub buckets: Option<(usize, usize)>,
}

/// One row per token, each of width `d_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSequence {
    pub vectors: Matrix,
    pub sources: Vec<InputSource>,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

pub fn input_dim(we: &WordEmbeddings, pe: Option<&PositionEmbeddings>) -> usize {
    we.dim() + pe.map_or(0, |p| p.dim())
}

fn source_at(pos: i64, word: usize, e1: i64, e2: i64, pe: Option<&PositionEmbeddings>) -> InputSource {
    InputSource {
        word,
        buckets: pe.map(|p| {
            (p.bucket(relative_distance(pos, e1)), p.bucket(relative_distance(pos, e2)))
        }),
    }
}

fn build(sources: Vec<InputSource>, we: &WordEmbeddings, pe: Option<&PositionEmbeddings>) -> InputSequence {
    let d_in = input_dim(we, pe);
    let dw = we.dim();
    let mut m = Matrix::zeros(sources.len(), d_in);
    for (r, s) in sources.iter().enumerate() {
        let row = m.row_mut(r);
        for i in 0..dw {
            row[i] = we.matrix[(i, s.word)];
        }
        if let (Some(p), Some((b1, b2))) = (pe, s.buckets) {
            let h = p.half_dim();
            for i in 0..h {
                row[dw + i] = p.table1[(i, b1)];
                row[dw + h + i] = p.table2[(i, b2)];
            }
        }
    }
    InputSequence { vectors: m, sources }
}

/// Per token, the word vector followed (when `pe` is given) by the two
/// position vectors for its clipped distances to each nominal head.
pub fn assemble(example: &EncodedExample, we: &WordEmbeddings, pe: Option<&PositionEmbeddings>) -> InputSequence {
    let (e1, e2) = (example.e1_pos as i64, example.e2_pos as i64);
    let sources = example
        .token_ids
        .iter()
        .enumerate()
        .map(|(n, &w)| source_at(n as i64, w, e1, e2, pe))
        .collect();
    build(sources, we, pe)
}

/// Like [`assemble`] but with `(k-1)/2` padding tokens on each side. Each
/// padding slot uses the padding word vector and the position vectors of
/// its own (out-of-sentence) position.
pub fn assemble_padded(
    example: &EncodedExample,
    we: &WordEmbeddings,
    pe: Option<&PositionEmbeddings>,
    k: usize,
) -> InputSequence {
    let half = (k as i64 - 1) / 2;
    let n = example.token_ids.len() as i64;
    let (e1, e2) = (example.e1_pos as i64, example.e2_pos as i64);
    let sources = (-half..n + half)
        .map(|pos| {
            let word = if pos < 0 || pos >= n {
                Vocabulary::PADDING_ID
            } else {
                example.token_ids[pos as usize]
            };
            source_at(pos, word, e1, e2, pe)
        })
        .collect();
    build(sources, we, pe)
}
