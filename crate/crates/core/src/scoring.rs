//! Class embeddings, dot-product scores, the prediction rule, and softmax.

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::linalg::{uniform_init, Matrix, Rng, Vector};

/// One column per embedded class. With `omit_artificial` only the actual
/// classes are embedded; otherwise the artificial class gets the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings {
    /// `d_c x n_embedded`
    pub w: Matrix,
    pub n_actual: usize,
    pub omit_artificial: bool,
}

impl ClassEmbeddings {
    /// Uniform in `(-r, r)`, `r = sqrt(6 / (n_embedded + d_c))`.
    pub fn init(d_c: usize, n_actual: usize, omit_artificial: bool, rng: &mut Rng) -> Result<Self> {
        if d_c == 0 || n_actual == 0 {
            return Err(Error::Config("class embeddings need d_c >= 1 and at least one class".into()));
        }
        let n = n_actual + usize::from(!omit_artificial);
        let r = init_radius(d_c, n);
        Ok(ClassEmbeddings { w: uniform_init(d_c, n, r, rng)?, n_actual, omit_artificial })
    }

    pub fn d_c(&self) -> usize {
        self.w.rows()
    }

    pub fn n_embedded(&self) -> usize {
        self.w.cols()
    }

    /// Column holding `label`, if it has one.
    pub fn column_of(&self, label: Label) -> Option<usize> {
        match label {
            Label::Actual(c) => Some(c),
            Label::Artificial if self.omit_artificial => None,
            Label::Artificial => Some(self.n_actual),
        }
    }

    pub fn label_of(&self, column: usize) -> Label {
        if column < self.n_actual {
            Label::Actual(column)
        } else {
            Label::Artificial
        }
    }
}

pub fn init_radius(d_c: usize, n_classes: usize) -> f64 {
    (6.0 / (n_classes + d_c) as f64).sqrt()
}

pub fn init_class_embeddings(d_c: usize, n_classes: usize, rng: &mut Rng) -> Result<Matrix> {
    if d_c == 0 || n_classes == 0 {
        return Err(Error::Config("class embeddings need d_c >= 1 and at least one class".into()));
    }
    uniform_init(d_c, n_classes, init_radius(d_c, n_classes), rng)
}

/// Scores indexed by embedded class column.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vector);

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// `scores[c] = r_x . W[:, c]`, summed over `j` in increasing order.
pub fn score(r_x: &Vector, ce: &ClassEmbeddings) -> Result<ScoreVector> {
    if r_x.len() != ce.d_c() {
        return Err(Error::Config(format!(
            "sentence vector has length {}, class embeddings have {} rows",
            r_x.len(),
            ce.d_c()
        )));
    }
    let mut s = vec![0.0; ce.n_embedded()];
    for j in 0..ce.d_c() {
        let rj = r_x[j];
        for (sc, w) in s.iter_mut().zip(ce.w.row(j)) {
            *sc += rj * w;
        }
    }
    Ok(ScoreVector(Vector::from_vec(s)))
}

/// First index of the maximum; `None` if empty.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

/// With the artificial class omitted, predict it exactly when no actual
/// class scores above zero; otherwise take the highest-scoring class
/// (lowest index on ties).
pub fn predict(scores: &ScoreVector, ce: &ClassEmbeddings) -> Label {
    let Some((best, value)) = argmax(scores.as_slice().iter().copied()) else {
        return Label::Artificial;
    };
    if ce.omit_artificial && value <= 0.0 {
        return Label::Artificial;
    }
    ce.label_of(best)
}

/// Softmax with the maximum subtracted first.
pub fn softmax_probs(scores: &ScoreVector) -> Vector {
    let s = scores.as_slice();
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Vector::from_vec(exps.into_iter().map(|e| e / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::linalg::Rng;

    fn ce_from(w: Matrix, omit: bool) -> ClassEmbeddings {
        let n_actual = if omit { w.cols() } else { w.cols() - 1 };
        ClassEmbeddings { w, n_actual, omit_artificial: omit }
    }

    fn sv(v: &[f64]) -> ScoreVector {
        ScoreVector(Vector::from_vec(v.to_vec()))
    }

    #[test]
    fn init_radii() {
        assert!((init_radius(1000, 18) - 0.07678).abs() < 1e-5);
        assert!((init_radius(400, 19) - 0.119665).abs() < 1e-5);
        let mut rng = Rng::new(5);
        let ce = ClassEmbeddings::init(1000, 18, true, &mut rng).unwrap();
        assert_eq!(ce.n_embedded(), 18);
        assert!(ce.w.as_slice().iter().all(|x| x.abs() < init_radius(1000, 18)));
        let soft = ClassEmbeddings::init(400, 18, false, &mut rng).unwrap();
        assert_eq!(soft.n_embedded(), 19);
        assert_eq!(soft.column_of(Label::Artificial), Some(18));
        assert_eq!(ce.column_of(Label::Artificial), None);
    }

    #[test]
    fn score_examples() {
        let mut rng = Rng::new(1);
        let ce = ClassEmbeddings::init(4, 3, true, &mut rng).unwrap();
        assert_eq!(score(&Vector::zeros(4), &ce).unwrap().as_slice(), &[0.0; 3]);

        let basis = ce_from(Matrix::identity(3), true);
        let e2 = Vector::from_vec(vec![0.0, 1.0, 0.0]);
        assert_eq!(score(&e2, &basis).unwrap().as_slice(), &[0.0, 1.0, 0.0]);

        let r = Vector::from_vec(vec![0.3, -0.1, 0.7, 0.2]);
        let s = score(&r, &ce).unwrap();
        for c in 0..3 {
            let expect = (0..4).map(|j| r[j] * ce.w[(j, c)]).sum::<f64>();
            assert!((s.0[c] - expect).abs() < 1e-15);
        }
        assert!(score(&Vector::zeros(3), &ce).is_err());
    }

    #[test]
    fn predict_rule() {
        let ce = ce_from(Matrix::zeros(2, 3), true);
        assert_eq!(predict(&sv(&[-1.0, -0.5, -3.0]), &ce), Label::Artificial);
        assert_eq!(predict(&sv(&[-1.0, 2.0, 0.5]), &ce), Label::Actual(1));
        assert_eq!(predict(&sv(&[0.0, 0.0, 0.0]), &ce), Label::Artificial);
        assert_eq!(predict(&sv(&[1.0, 1.0, 0.5]), &ce), Label::Actual(0));

        let soft = ce_from(Matrix::zeros(2, 3), false);
        assert_eq!(predict(&sv(&[-1.0, -0.5, -3.0]), &soft), Label::Actual(1));
        assert_eq!(predict(&sv(&[-1.0, -0.5, 3.0]), &soft), Label::Artificial);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_probs(&sv(&[0.0, 0.0])).as_slice(), &[0.5, 0.5]);
        let big = softmax_probs(&sv(&[1000.0, 0.0]));
        assert!((big[0] - 1.0).abs() < 1e-15 && big[1] >= 0.0 && big.is_finite());
        let p = softmax_probs(&sv(&[1.0, 2.0, 3.0]));
        for (got, want) in p.as_slice().iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((got - want).abs() < 5e-6);
        }
    }

    proptest! {
        #[test]
        fn score_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = Rng::new(seed);
            let ce = ClassEmbeddings::init(5, 4, true, &mut rng).unwrap();
            let x = Vector::from_vec((0..5).map(|_| rng.uniform(1.0)).collect());
            let y = Vector::from_vec((0..5).map(|_| rng.uniform(1.0)).collect());
            let lhs = score(&x.scale(a).add(&y.scale(b)), &ce).unwrap();
            let sx = score(&x, &ce).unwrap();
            let sy = score(&y, &ce).unwrap();
            for c in 0..4 {
                let rhs = a * sx.0[c] + b * sy.0[c];
                prop_assert!((lhs.0[c] - rhs).abs() <= 1e-12 * lhs.0[c].abs().max(rhs.abs()).max(1.0));
            }
        }

        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            v in proptest::collection::vec(-50.0f64..50.0, 1..20), shift in -100.0f64..100.0,
        ) {
            let p = softmax_probs(&sv(&v));
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.as_slice().iter().all(|x| *x > 0.0));
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = softmax_probs(&sv(&shifted));
            for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn shift_changes_other_only_in_ranking_mode(
            v in proptest::collection::vec(-5.0f64..5.0, 3..10),
        ) {
            let n = v.len();
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let shifted: Vec<f64> = v.iter().map(|x| x - min + 1.0).collect();
            let rank = ce_from(Matrix::zeros(1, n), true);
            prop_assert_ne!(predict(&sv(&shifted), &rank), Label::Artificial);
            let soft = ce_from(Matrix::zeros(1, n), false);
            prop_assert_eq!(predict(&sv(&v), &soft), predict(&sv(&shifted), &soft));
        }
    }
}
