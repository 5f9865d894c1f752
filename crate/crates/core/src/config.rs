//! Run configuration as flat `key=value` settings.
//!
//! Keys are the long command-line flag names without the leading dashes, so
//! a config file line `dc = 400` and the flag `--dc 400` mean the same thing.
//! Later settings override earlier ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::SpanMode;
use crate::error::{Error, Result};
use crate::train::{Architecture, Head, LossConfig};

/// Default number of convolutional units for the softmax head.
pub const SOFTMAX_DEFAULT_DC: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub loss: LossConfig,
    pub arch: Architecture,
    pub head: Head,
    pub span_mode: SpanMode,
    pub top_n: usize,
    pub train_file: Option<PathBuf>,
    pub test_file: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            loss: LossConfig::default(),
            arch: Architecture::default(),
            head: Head::Ranking,
            span_mode: SpanMode::FullSentence,
            top_n: 5,
            train_file: None,
            test_file: None,
            embeddings: None,
            model: None,
            output_dir: None,
        }
    }
}

/// Every key `RunConfig` understands, in rendering order.
pub const KEYS: &[&str] = &[
    "head", "span-mode", "positions", "omit-other", "dw", "dwpe", "dc", "k", "max-distance", "lr",
    "gamma", "m-plus", "m-minus", "beta", "l2-embeddings", "epochs", "seed", "top-n", "train-file",
    "test-file", "embeddings", "model", "output-dir",
];

const PATH_KEYS: &[&str] = &["train-file", "test-file", "embeddings", "model", "output-dir"];

fn on_off(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on|off, got {v:?}"))),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn flag(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Parse `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_settings(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected key=value"))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_settings(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_settings(&text, path)
}

impl RunConfig {
    /// Apply settings over the defaults and fill head-dependent defaults:
    /// the softmax head uses `dc=400` and embeds Other unless told otherwise.
    pub fn resolve(settings: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut map: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in settings {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown setting {k:?}")));
            }
            map.insert(k.as_str(), v.as_str());
        }
        let mut omit: Option<bool> = None;
        let mut dc_set = false;
        for (&k, &v) in &map {
            match k {
                "head" => {
                    cfg.head = match v {
                        "ranking" => Head::Ranking,
                        "softmax" => Head::Softmax,
                        _ => return Err(Error::Config(format!("head: expected ranking|softmax, got {v:?}"))),
                    }
                }
                "span-mode" => {
                    cfg.span_mode = match v {
                        "full" => SpanMode::FullSentence,
                        "between" => SpanMode::BetweenNominals,
                        _ => return Err(Error::Config(format!("span-mode: expected full|between, got {v:?}"))),
                    }
                }
                "positions" => cfg.arch.use_positions = on_off(k, v)?,
                "omit-other" => omit = Some(on_off(k, v)?),
                "dw" => cfg.arch.d_w = num(k, v)?,
                "dwpe" => cfg.arch.d_wpe = num(k, v)?,
                "dc" => {
                    cfg.arch.d_c = num(k, v)?;
                    dc_set = true;
                }
                "k" => cfg.arch.k = num(k, v)?,
                "max-distance" => cfg.arch.max_abs_distance = num(k, v)?,
                "lr" => cfg.loss.lr0 = num(k, v)?,
                "gamma" => cfg.loss.gamma = num(k, v)?,
                "m-plus" => cfg.loss.m_plus = num(k, v)?,
                "m-minus" => cfg.loss.m_minus = num(k, v)?,
                "beta" => cfg.loss.beta = num(k, v)?,
                "l2-embeddings" => cfg.loss.l2_embeddings = on_off(k, v)?,
                "epochs" => cfg.loss.epochs = num(k, v)?,
                "seed" => cfg.loss.seed = num(k, v)?,
                "top-n" => cfg.top_n = num(k, v)?,
                "train-file" => cfg.train_file = Some(v.into()),
                "test-file" => cfg.test_file = Some(v.into()),
                "embeddings" => cfg.embeddings = Some(v.into()),
                "model" => cfg.model = Some(v.into()),
                "output-dir" => cfg.output_dir = Some(v.into()),
                _ => unreachable!("checked against KEYS"),
            }
        }
        match cfg.head {
            Head::Ranking => cfg.arch.omit_artificial = omit.unwrap_or(true),
            Head::Softmax => {
                if omit == Some(true) {
                    return Err(Error::Config(
                        "the softmax head always embeds Other; omit-other=on needs head=ranking".into(),
                    ));
                }
                cfg.arch.omit_artificial = false;
                if !dc_set {
                    cfg.arch.d_c = SOFTMAX_DEFAULT_DC;
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        let a = &self.arch;
        if a.k == 0 || a.k.is_multiple_of(2) {
            return Err(Error::Config(format!("k must be odd, got {}", a.k)));
        }
        if a.d_w == 0 || a.d_c == 0 {
            return Err(Error::Config("dw and dc must be positive".into()));
        }
        if a.use_positions && (a.d_wpe == 0 || !a.d_wpe.is_multiple_of(2)) {
            return Err(Error::Config(format!("dwpe must be even and positive, got {}", a.d_wpe)));
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> Option<String> {
        let p = |x: &Option<PathBuf>| x.as_ref().map(|p| p.display().to_string());
        Some(match key {
            "head" => self.head.to_string(),
            "span-mode" => match self.span_mode {
                SpanMode::FullSentence => "full".into(),
                SpanMode::BetweenNominals => "between".into(),
            },
            "positions" => flag(self.arch.use_positions).into(),
            "omit-other" => flag(self.arch.omit_artificial).into(),
            "dw" => self.arch.d_w.to_string(),
            "dwpe" => self.arch.d_wpe.to_string(),
            "dc" => self.arch.d_c.to_string(),
            "k" => self.arch.k.to_string(),
            "max-distance" => self.arch.max_abs_distance.to_string(),
            "lr" => self.loss.lr0.to_string(),
            "gamma" => self.loss.gamma.to_string(),
            "m-plus" => self.loss.m_plus.to_string(),
            "m-minus" => self.loss.m_minus.to_string(),
            "beta" => self.loss.beta.to_string(),
            "l2-embeddings" => flag(self.loss.l2_embeddings).into(),
            "epochs" => self.loss.epochs.to_string(),
            "seed" => self.loss.seed.to_string(),
            "top-n" => self.top_n.to_string(),
            "train-file" => return p(&self.train_file),
            "test-file" => return p(&self.test_file),
            "embeddings" => return p(&self.embeddings),
            "model" => return p(&self.model),
            "output-dir" => return p(&self.output_dir),
            _ => return None,
        })
    }

    /// Every resolved setting, one `key=value` per line.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let v = self.value_of(key).unwrap_or_else(|| "-".into());
            let _ = writeln!(s, "{key}={v}");
        }
        s
    }

    /// Settings that shape the model, without filesystem paths. Stored in
    /// model files.
    pub fn model_snapshot(&self) -> String {
        let mut s = String::new();
        for key in KEYS.iter().filter(|k| !PATH_KEYS.contains(k)) {
            let _ = writeln!(s, "{key}={}", self.value_of(key).expect("non-path keys always have values"));
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let settings = parse_settings(text, Path::new("<model snapshot>"))?;
        RunConfig::resolve(&settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_follow_table() {
        let c = RunConfig::resolve(&[]).unwrap();
        assert_eq!((c.arch.d_w, c.arch.d_wpe, c.arch.d_c, c.arch.k), (400, 70, 1000, 3));
        assert_eq!(c.loss.lr0, 0.025);
        assert_eq!((c.loss.gamma, c.loss.m_plus, c.loss.m_minus, c.loss.beta), (2.0, 2.5, 0.5, 0.001));
        assert!(c.arch.omit_artificial);
        assert_eq!(c.loss.epochs, 15);
    }

    #[test]
    fn softmax_overrides() {
        let c = RunConfig::resolve(&kv(&[("head", "softmax")])).unwrap();
        assert_eq!(c.arch.d_c, 400);
        assert!(!c.arch.omit_artificial);
        let c = RunConfig::resolve(&kv(&[("head", "softmax"), ("dc", "64")])).unwrap();
        assert_eq!(c.arch.d_c, 64);
        assert!(RunConfig::resolve(&kv(&[("head", "softmax"), ("omit-other", "on")])).is_err());
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(RunConfig::resolve(&kv(&[("k", "4")])).is_err());
        assert!(RunConfig::resolve(&kv(&[("dwpe", "7")])).is_err());
        assert!(RunConfig::resolve(&kv(&[("nope", "1")])).is_err());
        assert!(RunConfig::resolve(&kv(&[("gamma", "0")])).is_err());
        assert!(RunConfig::resolve(&kv(&[("positions", "maybe")])).is_err());
    }

    #[test]
    fn later_settings_win_and_snapshot_round_trips() {
        let c = RunConfig::resolve(&kv(&[("dc", "10"), ("dc", "20"), ("lr", "0.1"), ("model", "/tmp/x")])).unwrap();
        assert_eq!(c.arch.d_c, 20);
        let snap = c.model_snapshot();
        assert!(!snap.contains("/tmp/x"));
        let back = RunConfig::from_snapshot(&snap).unwrap();
        assert_eq!(back.model_snapshot(), snap);
        assert_eq!(back.loss, c.loss);
        assert_eq!(back.arch, c.arch);
    }

    #[test]
    fn parses_config_text() {
        let s = parse_settings("# comment\ndc = 50\n\nspan-mode=between # trailing\n", Path::new("c")).unwrap();
        assert_eq!(s, kv(&[("dc", "50"), ("span-mode", "between")]));
        assert!(parse_settings("oops\n", Path::new("c")).is_err());
    }
}
