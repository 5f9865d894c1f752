use std::path::Path;

use crcnn::dataset::{build_vocabulary, encode, parse_semeval_str, Label, LabelScheme, SpanMode};
use crcnn::eval::{corpus_top_trigrams, score_labels};
use crcnn::linalg::{Matrix, Rng, Vector};
use crcnn::model_file::ModelFile;
use crcnn::scoring::{predict, ClassEmbeddings, ScoreVector};
use crcnn::synthetic::separable_corpus;
use crcnn::train::{accuracy, train_epoch, Architecture, Head, LossConfig, ModelParams};
use crcnn::config::RunConfig;
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

fn small_arch() -> Architecture {
    Architecture { d_w: 10, d_wpe: 6, d_c: 20, k: 3, max_abs_distance: 10, use_positions: true, omit_artificial: true }
}

#[test]
fn parse_train_predict_score() {
    let scheme = LabelScheme::semeval();
    let raw = parse_semeval_str(&separable_corpus(25, 4), Path::new("synthetic"), &scheme).unwrap();
    let vocab = build_vocabulary(&raw, None);
    let data: Vec<_> = raw.iter().map(|r| encode(r, &vocab, SpanMode::FullSentence)).collect();
    let cfg = LossConfig { lr0: 0.3, ..LossConfig::default() };
    let mut rng = Rng::new(cfg.seed);
    let mut params = ModelParams::init(&small_arch(), vocab.len(), scheme.n_actual(), None, &mut rng).unwrap();
    let before = accuracy(&params, &data).unwrap();
    for t in 1..=15 {
        train_epoch(&data, &mut params, Head::Ranking, &cfg, t, &mut rng).unwrap();
    }
    let after = accuracy(&params, &data).unwrap();
    assert!(after > before, "{before} -> {after}");
    assert_eq!(after, 1.0);

    let gold: Vec<Label> = data.iter().map(|e| e.label.unwrap()).collect();
    let pred: Vec<Label> = data.iter().map(|e| params.predict(e).unwrap()).collect();
    let report = score_labels(&gold, &pred, &scheme);
    assert!((report.macro_f1 - 4.0 / 9.0).abs() < 1e-12, "{}", report.macro_f1);

    let trigrams = corpus_top_trigrams(&data, &params, 3).unwrap();
    let cause = &trigrams.per_class[0];
    assert!(cause.iter().any(|e| e.ngram.contains(&"causes".to_string())), "{cause:?}");

    let file = ModelFile { config: RunConfig::default(), vocab, scheme, params };
    let back = ModelFile::from_bytes(&file.to_bytes()).unwrap();
    assert_eq!(back.params, file.params);
}

#[test]
fn softmax_head_learns_the_corpus() {
    let scheme = LabelScheme::semeval();
    let raw = parse_semeval_str(&separable_corpus(20, 9), Path::new("synthetic"), &scheme).unwrap();
    let vocab = build_vocabulary(&raw, None);
    let data: Vec<_> = raw.iter().map(|r| encode(r, &vocab, SpanMode::BetweenNominals)).collect();
    let arch = Architecture { omit_artificial: false, ..small_arch() };
    let cfg = LossConfig { lr0: 0.3, ..LossConfig::default() };
    let mut rng = Rng::new(2);
    let mut params = ModelParams::init(&arch, vocab.len(), scheme.n_actual(), None, &mut rng).unwrap();
    for t in 1..=20 {
        train_epoch(&data, &mut params, Head::Softmax, &cfg, t, &mut rng).unwrap();
    }
    assert_eq!(accuracy(&params, &data).unwrap(), 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn between_nominals_is_a_window_of_the_full_sentence(seed in any::<u64>(), n in 1usize..12) {
        let scheme = LabelScheme::semeval();
        let raw = parse_semeval_str(&separable_corpus(n, seed), Path::new("s"), &scheme).unwrap();
        let vocab = build_vocabulary(&raw, None);
        for r in &raw {
            let full = encode(r, &vocab, SpanMode::FullSentence);
            let between = encode(r, &vocab, SpanMode::BetweenNominals);
            let lo = full.e1_pos - between.e1_pos;
            prop_assert_eq!(&full.token_ids[lo..lo + between.len()], &between.token_ids[..]);
            prop_assert_eq!(full.e2_pos - lo, between.e2_pos);
            prop_assert!(between.len() <= full.len());
        }
    }

    #[test]
    fn omit_mode_predicts_other_iff_no_positive_score(
        v in proptest::collection::vec(-1.0f64..1.0, 18),
    ) {
        let ce = ClassEmbeddings { w: Matrix::zeros(1, 18), n_actual: 18, omit_artificial: true };
        let s = ScoreVector(Vector::from_vec(v.clone()));
        let other = predict(&s, &ce) == Label::Artificial;
        prop_assert_eq!(other, v.iter().all(|x| *x <= 0.0));
    }
}
