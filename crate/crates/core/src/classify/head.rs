use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::weights::ClassWeightSpec;

pub const DEFAULT_DROPOUT: f64 = 0.1;

/// `logits = W · Drop(h) + b` over the three labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationHead {
    dim: usize,
    /// Row-major, one row of length `dim` per label.
    weights: Vec<f64>,
    bias: [f64; 3],
    dropout_rate: f64,
}

impl ClassificationHead {
    pub fn zeros(dim: usize, dropout_rate: f64) -> Result<Self> {
        Self::from_parts(dim, vec![0.0; 3 * dim], [0.0; 3], dropout_rate)
    }

    /// Uniform init in `±1/sqrt(dim)`, zero bias.
    pub fn init<R: Rng + ?Sized>(dim: usize, dropout_rate: f64, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (dim.max(1) as f64).sqrt();
        let weights = (0..3 * dim).map(|_| rng.gen_range(-bound..bound)).collect();
        Self::from_parts(dim, weights, [0.0; 3], dropout_rate)
    }

    pub fn from_parts(
        dim: usize,
        weights: Vec<f64>,
        bias: [f64; 3],
        dropout_rate: f64,
    ) -> Result<Self> {
        if weights.len() != 3 * dim {
            return Err(Error::DimensionMismatch {
                expected: 3 * dim,
                actual: weights.len(),
            });
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate must be in [0, 1), got {dropout_rate}"
            )));
        }
        if weights.iter().chain(bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite head parameter".into()));
        }
        Ok(ClassificationHead {
            dim,
            weights,
            bias,
            dropout_rate,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> [f64; 3] {
        self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64; 3] {
        &mut self.bias
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn row(&self, label: usize) -> &[f64] {
        &self.weights[label * self.dim..(label + 1) * self.dim]
    }

    /// Eval-mode logits.
    pub fn logits(&self, h: &[f64]) -> Result<[f64; 3]> {
        self.check_dim(h)?;
        Ok(self.affine(h))
    }

    fn affine(&self, x: &[f64]) -> [f64; 3] {
        let mut out = self.bias;
        for (c, o) in out.iter_mut().enumerate() {
            *o += self.row(c).iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    fn check_dim(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: h.len(),
            });
        }
        Ok(())
    }

    /// Applies `params -= lr * grads`.
    pub fn apply_gradients(&mut self, grads: &HeadGradients, lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            *w -= lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grads.bias) {
            *b -= lr * g;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: [f64; 3],
    pub probs: [f64; 3],
    /// Per-feature multiplier applied by dropout (0, or 1/(1-rate) when
    /// kept; all ones in eval mode).
    pub dropout_scale: Vec<f64>,
    /// The input after dropout, as seen by the linear layer.
    pub dropped: Vec<f64>,
}

/// Inverted dropout in train mode, identity otherwise; then the linear layer
/// and softmax.
pub fn forward<R: Rng + ?Sized>(
    head: &ClassificationHead,
    h: &[f64],
    train_mode: bool,
    rng: &mut R,
) -> Result<Forward> {
    head.check_dim(h)?;
    let p = head.dropout_rate;
    let dropout_scale: Vec<f64> = if train_mode && p > 0.0 {
        let keep = 1.0 / (1.0 - p);
        (0..h.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect()
    } else {
        vec![1.0; h.len()]
    };
    let dropped: Vec<f64> = h.iter().zip(&dropout_scale).map(|(x, s)| x * s).collect();
    let logits = head.affine(&dropped);
    Ok(Forward {
        logits,
        probs: softmax(&logits),
        dropout_scale,
        dropped,
    })
}

pub fn softmax(logits: &[f64; 3]) -> [f64; 3] {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = logits.map(|z| (z - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

fn log_sum_exp(logits: &[f64; 3]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties resolve to the lowest label index.
pub fn argmax(probs: &[f64; 3]) -> Label {
    let mut best = 0;
    for i in 1..3 {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    Label::ALL[best]
}

/// `w_gold * -ln softmax(logits)[gold]` and its gradient with respect to the
/// logits, `w_gold * (softmax(logits) - onehot(gold))`.
pub fn weighted_cross_entropy(
    logits: &[f64; 3],
    gold: Label,
    spec: &ClassWeightSpec,
) -> Result<(f64, [f64; 3])> {
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logits {logits:?}")));
    }
    let w = spec.weight(gold);
    let g = gold.index();
    let loss = w * (log_sum_exp(logits) - logits[g]);
    let mut grad = softmax(logits);
    grad[g] -= 1.0;
    Ok((loss, grad.map(|x| w * x)))
}

/// Mean of the per-sample weighted losses; gradients are those of the mean.
pub fn batch_weighted_cross_entropy(
    logits: &[[f64; 3]],
    gold: &[Label],
    spec: &ClassWeightSpec,
) -> Result<(f64, Vec<[f64; 3]>)> {
    if logits.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: logits.len(),
            actual: gold.len(),
        });
    }
    if logits.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (z, &y) in logits.iter().zip(gold) {
        let (l, g) = weighted_cross_entropy(z, y, spec)?;
        total += l;
        grads.push(g.map(|x| x / n));
    }
    Ok((total / n, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub weights: Vec<f64>,
    pub bias: [f64; 3],
}

impl HeadGradients {
    pub fn zeros(dim: usize) -> Self {
        HeadGradients {
            weights: vec![0.0; 3 * dim],
            bias: [0.0; 3],
        }
    }

    /// Adds the contribution of one sample: `dL/dW[c] = g_c * x`,
    /// `dL/db = g`.
    pub fn accumulate(&mut self, dropped_input: &[f64], logit_grad: &[f64; 3]) {
        let dim = dropped_input.len();
        for (c, g) in logit_grad.iter().enumerate() {
            self.bias[c] += g;
            for (w, x) in self.weights[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(dropped_input)
            {
                *w += g * x;
            }
        }
    }
}

/// Gradient of the single-sample weighted loss with respect to the head
/// parameters, in eval mode (no dropout).
pub fn head_gradients(
    head: &ClassificationHead,
    h: &[f64],
    gold: Label,
    spec: &ClassWeightSpec,
) -> Result<(f64, HeadGradients)> {
    let logits = head.logits(h)?;
    let (loss, g) = weighted_cross_entropy(&logits, gold, spec)?;
    let mut grads = HeadGradients::zeros(head.dim());
    grads.accumulate(h, &g);
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::manual_weights;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn zero_head_is_uniform() {
        let head = ClassificationHead::zeros(4, 0.1).unwrap();
        let f = forward(&head, &[1.0, -2.0, 3.0, 0.5], false, &mut rng()).unwrap();
        assert_eq!(f.logits, [0.0; 3]);
        for p in f.probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_head_softmax() {
        let head =
            ClassificationHead::from_parts(2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], [0.0; 3], 0.1)
                .unwrap();
        let f = forward(&head, &[1.0, 2.0], false, &mut rng()).unwrap();
        assert_eq!(f.logits, [1.0, 2.0, 0.0]);
        // Frozen from 30-digit evaluation of softmax(1, 2, 0).
        let expect = [
            0.244_728_471_054_797_65,
            0.665_240_955_774_821_9,
            0.090_030_573_170_380_46,
        ];
        for (p, e) in f.probs.iter().zip(expect) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let mut r = rng();
        let head = ClassificationHead::init(5, 0.0, &mut r).unwrap();
        let h = [0.3, -0.1, 0.9, 0.0, 2.0];
        let a = forward(&head, &h, true, &mut r).unwrap();
        let b = forward(&head, &h, false, &mut r).unwrap();
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn train_mode_dropout_scales_kept_units() {
        let head = ClassificationHead::zeros(1000, 0.5).unwrap();
        let h = vec![1.0; 1000];
        let f = forward(&head, &h, true, &mut rng()).unwrap();
        assert!(f.dropped.iter().all(|&x| x == 0.0 || x == 2.0));
        let kept = f.dropped.iter().filter(|&&x| x > 0.0).count();
        assert!((400..600).contains(&kept));
    }

    #[test]
    fn dimension_mismatch() {
        let head = ClassificationHead::zeros(3, 0.1).unwrap();
        assert!(matches!(
            forward(&head, &[1.0, 2.0], false, &mut rng()),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
    }

    #[test]
    fn uniform_loss_is_ln3() {
        let spec = ClassWeightSpec::uniform();
        for y in Label::ALL {
            let (l, _) = weighted_cross_entropy(&[0.0; 3], y, &spec).unwrap();
            assert!((l - 1.098_612_288_668_109_7).abs() < 1e-15);
        }
        let t1 = manual_weights(&[1.0, 3.0, 0.5]).unwrap();
        let (l, _) = weighted_cross_entropy(&[0.0; 3], Label::ToSomeExtent, &t1).unwrap();
        assert!((l - 3.295_836_866_004_329).abs() < 1e-14);
    }

    #[test]
    fn non_finite_logits_rejected() {
        let spec = ClassWeightSpec::uniform();
        assert!(weighted_cross_entropy(&[f64::NAN, 0.0, 0.0], Label::No, &spec).is_err());
        assert!(weighted_cross_entropy(&[f64::INFINITY, 0.0, 0.0], Label::No, &spec).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0 / 3.0; 3]), Label::No);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), Label::ToSomeExtent);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), Label::Yes);
    }

    #[test]
    fn batch_loss_is_mean() {
        let spec = manual_weights(&[1.0, 2.0, 3.0]).unwrap();
        let z = [[0.5, -0.2, 1.0], [2.0, 0.0, -1.0]];
        let y = [Label::Yes, Label::ToSomeExtent];
        let (l, g) = batch_weighted_cross_entropy(&z, &y, &spec).unwrap();
        let (l0, g0) = weighted_cross_entropy(&z[0], y[0], &spec).unwrap();
        let (l1, g1) = weighted_cross_entropy(&z[1], y[1], &spec).unwrap();
        assert!((l - (l0 + l1) / 2.0).abs() < 1e-15);
        assert!((g[0][1] - g0[1] / 2.0).abs() < 1e-15);
        assert!((g[1][2] - g1[2] / 2.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn label() -> impl Strategy<Value = Label> {
            (0usize..3).prop_map(|i| Label::ALL[i])
        }

        proptest! {
            #[test]
            fn softmax_normalized_and_shift_invariant(
                z in prop::array::uniform3(-50.0f64..50.0), c in -100.0f64..100.0
            ) {
                let p = softmax(&z);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                prop_assert!(p.iter().all(|x| *x >= 0.0));
                let q = softmax(&z.map(|x| x + c));
                for i in 0..3 {
                    prop_assert!((p[i] - q[i]).abs() <= 1e-9);
                }
            }

            #[test]
            fn logit_gradient_matches_finite_differences(
                z in prop::array::uniform3(-5.0f64..5.0),
                w in prop::array::uniform3(0.1f64..5.0),
                y in label(),
            ) {
                let spec = crate::weights::manual_weights(&w).unwrap();
                let (_, g) = weighted_cross_entropy(&z, y, &spec).unwrap();
                let eps = 1e-5;
                for i in 0..3 {
                    let mut zp = z; zp[i] += eps;
                    let mut zm = z; zm[i] -= eps;
                    let fd = (weighted_cross_entropy(&zp, y, &spec).unwrap().0
                        - weighted_cross_entropy(&zm, y, &spec).unwrap().0) / (2.0 * eps);
                    let scale = g[i].abs().max(fd.abs()).max(1e-3);
                    prop_assert!((g[i] - fd).abs() / scale <= 1e-6, "i={} g={} fd={}", i, g[i], fd);
                }
            }
        }
    }
}
