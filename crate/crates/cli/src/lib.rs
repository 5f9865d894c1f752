//! The five workflows behind the `crcnn` binary. Each `cmd_*` writes its
//! human-readable output to the supplied writer and returns a typed result so
//! tests can drive it without spawning processes.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crcnn::config::RunConfig;
use crcnn::dataset::{
    build_vocabulary, encode, parse_semeval_file, EncodedExample, Label, LabelScheme, RawExample,
};
use crcnn::embedding::PretrainedVectors;
use crcnn::eval::{corpus_top_trigrams, score_labels, EvalReport};
use crcnn::linalg::Rng;
use crcnn::model_file::ModelFile;
use crcnn::train::{grad_check, train_epoch, Architecture, GradCheckReport, Head, LossConfig, ModelParams};
use crcnn::{Error, Result};
use rayon::prelude::*;

pub const THREADS_ENV: &str = "CRCNN_THREADS";

/// 0 success, 1 usage or configuration, 2 data, 3 numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        Error::Numerical(_) => 3,
        Error::Parse { .. } | Error::Data(_) | Error::Format(_) | Error::Io { .. } => 2,
    }
}

fn write_err(e: io::Error) -> Error {
    Error::Data(format!("cannot write output: {e}"))
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

/// Worker pool for inference, capped by `CRCNN_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

/// Where `train` writes the model: `--model`, else `<output-dir>/model.bin`.
pub fn model_path(cfg: &RunConfig) -> Result<PathBuf> {
    match (&cfg.model, &cfg.output_dir) {
        (Some(m), _) => Ok(m.clone()),
        (None, Some(d)) => Ok(d.join("model.bin")),
        (None, None) => Err(Error::Config("train needs --model or --output-dir".into())),
    }
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<ModelFile> {
    write!(out, "{}", cfg.render()).map_err(write_err)?;
    let train_path = required(&cfg.train_file, "train-file")?;
    let dest = model_path(cfg)?;
    let scheme = LabelScheme::semeval();
    let raw = parse_semeval_file(train_path, &scheme)?;
    if let Some(r) = raw.iter().find(|r| r.label.is_none()) {
        return Err(Error::Data(format!("training example {} has no label", r.id)));
    }

    let mut rng = Rng::new(cfg.loss.seed);
    let pretrained = cfg.embeddings.as_deref().map(PretrainedVectors::read).transpose()?;
    let vocab = build_vocabulary(&raw, pretrained.as_ref().map(|p| p.words.as_slice()));
    let mut resolved = cfg.clone();
    let words = match &pretrained {
        Some(p) => {
            resolved.arch.d_w = p.dim;
            Some(p.to_embeddings(&vocab, &mut rng)?)
        }
        None => None,
    };
    let mut params = ModelParams::init(&resolved.arch, vocab.len(), scheme.n_actual(), words, &mut rng)?;
    let data: Vec<EncodedExample> = raw.iter().map(|r| encode(r, &vocab, cfg.span_mode)).collect();

    let mut log = match &cfg.output_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let p = dir.join("train.log");
            Some(File::create(&p).map_err(|e| io_err(&p, e))?)
        }
        None => None,
    };
    for t in 1..=cfg.loss.epochs {
        let summary = train_epoch(&data, &mut params, cfg.head, &cfg.loss, t, &mut rng)?;
        let line = summary.log_line();
        writeln!(out, "epoch\t{line}").map_err(write_err)?;
        if let Some(f) = log.as_mut() {
            writeln!(f, "{line}").map_err(write_err)?;
        }
    }

    let model = ModelFile { config: resolved, vocab, scheme, params };
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    model.save(&dest)?;
    writeln!(out, "model\t{}", dest.display()).map_err(write_err)?;
    Ok(model)
}

fn encode_input(model: &ModelFile, input: &Path) -> Result<(Vec<RawExample>, Vec<EncodedExample>)> {
    let raw = parse_semeval_file(input, &model.scheme)?;
    let data = raw.iter().map(|r| encode(r, &model.vocab, model.config.span_mode)).collect();
    Ok((raw, data))
}

fn predict_all(model: &ModelFile, data: &[EncodedExample]) -> Result<Vec<Label>> {
    let pool = thread_pool()?;
    pool.install(|| data.par_iter().map(|ex| model.params.predict(ex)).collect())
}

/// `ID<TAB>label` per input record, in input order.
pub fn cmd_predict(model: &ModelFile, input: &Path, out: &mut dyn Write) -> Result<Vec<(u64, Label)>> {
    let (_, data) = encode_input(model, input)?;
    let labels = predict_all(model, &data)?;
    let mut rows = Vec::with_capacity(data.len());
    for (ex, label) in data.iter().zip(labels) {
        writeln!(out, "{}\t{}", ex.id, model.scheme.name(label)).map_err(write_err)?;
        rows.push((ex.id, label));
    }
    Ok(rows)
}

/// Reads `ID<TAB>label` lines.
pub fn read_key_file(path: &Path, scheme: &LabelScheme) -> Result<Vec<(u64, Label)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_key_text(&text, path, scheme)
}

fn parse_key_text(text: &str, path: &Path, scheme: &LabelScheme) -> Result<Vec<(u64, Label)>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Data(format!("{}:{}: {msg}", path.display(), i + 1));
        let (id, label) = line.split_once('\t').ok_or_else(|| bad("expected `ID<TAB>label`".into()))?;
        let id: u64 = id.trim().parse().map_err(|_| bad(format!("bad ID {id:?}")))?;
        let label = scheme.parse_label(label.trim()).ok_or_else(|| bad(format!("unknown label {label:?}")))?;
        rows.push((id, label));
    }
    Ok(rows)
}

/// Gold labels from either a key file or a labeled corpus file.
pub fn read_gold(path: &Path, scheme: &LabelScheme) -> Result<Vec<(u64, Label)>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if let Ok(rows) = parse_key_text(&text, path, scheme) {
        return Ok(rows);
    }
    parse_semeval_file(path, scheme)?
        .into_iter()
        .map(|r| {
            r.label
                .map(|l| (r.id, l))
                .ok_or_else(|| Error::Data(format!("gold example {} has no label", r.id)))
        })
        .collect()
}

/// Pairs gold and predicted labels by ID. Fails on the first ID (in gold
/// order) missing from the predictions, or the first extra prediction.
pub fn align(gold: &[(u64, Label)], pred: &[(u64, Label)]) -> Result<(Vec<Label>, Vec<Label>)> {
    let mut by_id: HashMap<u64, Label> = HashMap::with_capacity(pred.len());
    for &(id, l) in pred {
        if by_id.insert(id, l).is_some() {
            return Err(Error::Data(format!("ID {id} predicted more than once")));
        }
    }
    let mut g = Vec::with_capacity(gold.len());
    let mut p = Vec::with_capacity(gold.len());
    let mut seen: BTreeMap<u64, ()> = BTreeMap::new();
    for &(id, l) in gold {
        if seen.insert(id, ()).is_some() {
            return Err(Error::Data(format!("ID {id} appears twice in the gold file")));
        }
        let pl = by_id.remove(&id).ok_or_else(|| Error::Data(format!("ID {id} has no prediction")))?;
        g.push(l);
        p.push(pl);
    }
    if let Some(&(id, _)) = pred.iter().find(|(id, _)| by_id.contains_key(id)) {
        return Err(Error::Data(format!("ID {id} is not in the gold file")));
    }
    Ok((g, p))
}

pub fn cmd_evaluate(gold: &Path, predictions: &Path, out: &mut dyn Write) -> Result<EvalReport> {
    let scheme = LabelScheme::semeval();
    let g = read_gold(gold, &scheme)?;
    let p = read_key_file(predictions, &scheme)?;
    let (g, p) = align(&g, &p)?;
    let report = score_labels(&g, &p, &scheme);
    write!(out, "{}", report.render()).map_err(write_err)?;
    Ok(report)
}

/// Markdown table of the most representative n-grams per directed class,
/// taken over the correctly classified labeled examples of `input`.
pub fn cmd_attribute(model: &ModelFile, input: &Path, top_n: usize, out: &mut dyn Write) -> Result<String> {
    let (_, data) = encode_input(model, input)?;
    if let Some(ex) = data.iter().find(|e| e.label.is_none()) {
        return Err(Error::Data(format!("attribution needs gold labels; example {} has none", ex.id)));
    }
    let report = corpus_top_trigrams(&data, &model.params, top_n)?;
    let table = report.render(&model.scheme);
    write!(out, "{table}").map_err(write_err)?;
    Ok(table)
}

/// Shape of one gradient-check case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCase {
    pub seed: u64,
    pub head: Head,
    pub positions: bool,
    pub n_actual: usize,
    pub tokens: usize,
    pub artificial: bool,
}

#[derive(Debug, Clone)]
pub struct GradCaseResult {
    pub case: GradCase,
    pub report: GradCheckReport,
}

/// Architecture used by the gradient checks: d_w=3, d_wpe=4, d_c=4, k=3.
pub fn tiny_arch(positions: bool, omit_artificial: bool) -> Architecture {
    Architecture { d_w: 3, d_wpe: 4, d_c: 4, k: 3, max_abs_distance: 4, use_positions: positions, omit_artificial }
}

/// A seeded tiny model with every parameter redrawn from `U(-1, 1)` so tanh
/// is well away from its linear regime, and one random example for it.
pub fn tiny_case(case: &GradCase) -> Result<(ModelParams, EncodedExample)> {
    const VOCAB: usize = 7;
    let omit = case.head == Head::Ranking;
    let mut rng = Rng::new(case.seed);
    let mut params = ModelParams::init(&tiny_arch(case.positions, omit), VOCAB, case.n_actual, None, &mut rng)?;
    for c in params.coordinates() {
        *params.param_mut(c) = rng.uniform(1.0);
    }
    let n = case.tokens.max(2);
    let token_ids: Vec<usize> = (0..n).map(|_| 2 + rng.below(VOCAB - 2)).collect();
    let e1_pos = rng.below(n - 1);
    let e2_pos = e1_pos + 1 + rng.below(n - 1 - e1_pos);
    let label = if case.artificial { Label::Artificial } else { Label::Actual(rng.below(case.n_actual)) };
    let ex = EncodedExample {
        id: case.seed,
        tokens: token_ids.iter().map(|t| format!("w{t}")).collect(),
        token_ids,
        e1_pos,
        e2_pos,
        label: Some(label),
    };
    Ok((params, ex))
}

/// The fixed battery run by `gradcheck`: both heads, with and without
/// position features, actual and artificial gold labels, 3 to 5 classes and
/// 3 to 7 tokens.
pub fn grad_cases(seed: u64) -> Vec<GradCase> {
    let mut cases = Vec::new();
    let mut i = 0u64;
    for head in [Head::Ranking, Head::Softmax] {
        for positions in [true, false] {
            for artificial in [false, true] {
                for _ in 0..2 {
                    cases.push(GradCase {
                        seed: seed.wrapping_add(i),
                        head,
                        positions,
                        n_actual: 3 + (i as usize % 3),
                        tokens: 3 + (i as usize % 5),
                        artificial,
                    });
                    i += 1;
                }
            }
        }
    }
    cases
}

pub fn run_grad_case(case: &GradCase) -> Result<GradCaseResult> {
    let (params, ex) = tiny_case(case)?;
    let report = grad_check(&params, &ex, case.head, &LossConfig::default(), 1e-5, &mut Rng::new(case.seed))?;
    Ok(GradCaseResult { case: *case, report })
}

/// Runs [`grad_cases`], printing one line per case. Any mismatch is a
/// numerical failure.
pub fn cmd_gradcheck(seed: u64, out: &mut dyn Write) -> Result<Vec<GradCaseResult>> {
    let mut results = Vec::new();
    let mut failed = 0;
    for case in grad_cases(seed) {
        let r = run_grad_case(&case)?;
        let ok = r.report.passed();
        failed += usize::from(!ok);
        writeln!(
            out,
            "{}\tseed={} head={} positions={} classes={} tokens={} gold={} checked={} flagged={} max_abs={:.3e} max_rel={:.3e}",
            if ok { "PASS" } else { "FAIL" },
            case.seed,
            case.head,
            if case.positions { "on" } else { "off" },
            case.n_actual,
            case.tokens,
            if case.artificial { "artificial" } else { "actual" },
            r.report.checked,
            r.report.flagged.len(),
            r.report.max_abs_error,
            r.report.max_rel_error,
        )
        .map_err(write_err)?;
        results.push(r);
    }
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} gradient-check case(s) failed")));
    }
    Ok(results)
}

/// Loads the model a command refers to via `--model`.
pub fn load_model(cfg: &RunConfig) -> Result<ModelFile> {
    ModelFile::load(required(&cfg.model, "model")?)
}
