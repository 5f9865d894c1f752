//! Self-describing binary model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "CRCNNMDL"
//! version      u32      FORMAT_VERSION
//! config       str      model-shaping settings as key=value lines
//! vocabulary   u64 n, then n x str   (index order)
//! scheme       u64 n, then n x str   (relation types), str (artificial label)
//! words        matrix   d_w x |V|
//! positions    u8 flag; if 1: u64 max_abs_distance, matrix table1, matrix table2
//! conv         u64 k, matrix W1, vector b1
//! classes      u64 n_actual, u8 omit_artificial, matrix W_classes
//!
//! str    = u32 byte length + UTF-8 bytes
//! matrix = u64 rows, u64 cols, rows*cols x f64 (row-major)
//! vector = u64 len, len x f64
//! ```

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::dataset::{LabelScheme, Vocabulary};
use crate::embedding::{PositionEmbeddings, WordEmbeddings};
use crate::encoder::ConvParams;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::scoring::ClassEmbeddings;
use crate::train::ModelParams;

pub const MAGIC: &[u8; 8] = b"CRCNNMDL";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: RunConfig,
    pub vocab: Vocabulary,
    pub scheme: LabelScheme,
    pub params: ModelParams,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u64(m.rows() as u64);
        self.u64(m.cols() as u64);
        self.f64s(m.as_slice());
    }
    fn vector(&mut self, v: &Vector) {
        self.u64(v.len() as u64);
        self.f64s(v.as_slice());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size does not fit in memory".into()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8 string".into()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("matrix size overflow".into()))?;
        Matrix::from_vec(rows, cols, self.f64s(n)?)
    }
    fn vector(&mut self) -> Result<Vector> {
        let n = self.usize()?;
        Ok(Vector::from_vec(self.f64s(n)?))
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("bad flag byte {b}"))),
        }
    }
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.str(&self.config.model_snapshot());
        w.u64(self.vocab.len() as u64);
        for word in self.vocab.words() {
            w.str(word);
        }
        w.u64(self.scheme.n_types() as u64);
        for t in self.scheme.relation_types() {
            w.str(t);
        }
        w.str(self.scheme.artificial_label());
        let p = &self.params;
        w.matrix(&p.word_embeddings.matrix);
        match &p.position_embeddings {
            Some(pe) => {
                w.u8(1);
                w.u64(pe.max_abs_distance as u64);
                w.matrix(&pe.table1);
                w.matrix(&pe.table2);
            }
            None => w.u8(0),
        }
        w.u64(p.conv.k as u64);
        w.matrix(&p.conv.w1);
        w.vector(&p.conv.b1);
        w.u64(p.classes.n_actual as u64);
        w.u8(u8::from(p.classes.omit_artificial));
        w.matrix(&p.classes.w);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported format version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let config = RunConfig::from_snapshot(&r.str()?)?;
        let n_words = r.usize()?;
        let mut words = Vec::with_capacity(n_words.min(1 << 20));
        for _ in 0..n_words {
            words.push(r.str()?);
        }
        if words.len() < 2 || words[0] != crate::dataset::PADDING || words[1] != crate::dataset::UNKNOWN {
            return Err(Error::Format("vocabulary must start with the reserved entries".into()));
        }
        let vocab = Vocabulary::from_words(words[2..].iter());
        if vocab.len() != n_words {
            return Err(Error::Format("vocabulary contains duplicates".into()));
        }
        let n_types = r.usize()?;
        let mut types = Vec::with_capacity(n_types.min(1024));
        for _ in 0..n_types {
            types.push(r.str()?);
        }
        let artificial = r.str()?;
        let type_refs: Vec<&str> = types.iter().map(|s| s.as_str()).collect();
        let scheme = LabelScheme::new(&type_refs, &artificial)?;

        let word_embeddings = WordEmbeddings { matrix: r.matrix()? };
        let position_embeddings = if r.flag()? {
            let max_abs_distance = r.usize()?;
            Some(PositionEmbeddings { max_abs_distance, table1: r.matrix()?, table2: r.matrix()? })
        } else {
            None
        };
        let k = r.usize()?;
        let conv = ConvParams { k, w1: r.matrix()?, b1: r.vector()? };
        let n_actual = r.usize()?;
        let omit_artificial = r.flag()?;
        let classes = ClassEmbeddings { w: r.matrix()?, n_actual, omit_artificial };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::Format(format!("invalid window size {k}")));
        }
        if word_embeddings.vocab_size() != vocab.len() {
            return Err(Error::Format("word matrix width differs from vocabulary size".into()));
        }
        if n_actual != scheme.n_actual() || classes.n_embedded() != n_actual + usize::from(!omit_artificial) {
            return Err(Error::Format("class matrix does not match the label scheme".into()));
        }
        let params = ModelParams { word_embeddings, position_embeddings, conv, classes };
        params.check_shapes().map_err(|e| Error::Format(e.to_string()))?;
        Ok(ModelFile { config, vocab, scheme, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;
    use crate::train::Architecture;

    fn sample(positions: bool) -> ModelFile {
        let mut config = RunConfig::default();
        config.arch = Architecture { d_w: 3, d_wpe: 4, d_c: 5, k: 3, max_abs_distance: 6, use_positions: positions, omit_artificial: true };
        let vocab = Vocabulary::from_words(["a", "b", "naïve"]);
        let scheme = LabelScheme::semeval();
        let params = ModelParams::init(&config.arch, vocab.len(), 18, None, &mut Rng::new(3)).unwrap();
        ModelFile { config, vocab, scheme, params }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        for positions in [true, false] {
            let m = sample(positions);
            let bytes = m.to_bytes();
            let back = ModelFile::from_bytes(&bytes).unwrap();
            assert_eq!(back.params, m.params);
            assert_eq!(back.vocab, m.vocab);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn version_mismatch_is_detected_first() {
        let mut bytes = sample(true).to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        bytes.truncate(12);
        match ModelFile::from_bytes(&bytes).unwrap_err() {
            Error::Format(msg) => assert!(msg.contains("version 7"), "{msg}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        assert!(ModelFile::from_bytes(b"nope").is_err());
        let bytes = sample(true).to_bytes();
        assert!(ModelFile::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ModelFile::from_bytes(&extra).is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = sample(true);
        m.save(&path).unwrap();
        assert_eq!(ModelFile::load(&path).unwrap(), m);
    }
}
