//! Greedy stacking of two sparse auto-encoder layers, optional supervised
//! fine-tuning of the dictionaries through a softmax head, and the
//! feed-forward encoder that turns descriptors into codes.
//!
//! Stacking is strictly greedy: layer 1 trains exactly as a standalone
//! auto-encoder, then layer 2 trains on layer 1's codes. Fine-tuning
//! attaches a softmax classifier over per-patch labels (each descriptor
//! inherits its image's class) and back-propagates mean cross-entropy
//! through both encoders, updating the dictionaries and encoder biases while
//! keeping the decoders frozen and the dictionary columns unit-norm. The
//! head is a training device only; inference keeps the code path
//! `z2 = sigma(W2' sigma(W1' x + b11) + b12)` and the downstream SVM does
//! the classification.

use ndarray::{Array1, Array2, Axis};

use crate::rng::Rng;
use crate::sae::{self, Batch, SaeConfig, SaeLayer};
use crate::{Error, Result};

/// Linear softmax classifier over top-layer codes: scores `U'z + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead {
    pub u: Array2<f64>,
    pub c: Array1<f64>,
}

impl SoftmaxHead {
    pub fn hidden(&self) -> usize {
        self.u.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.u.ncols()
    }
}

/// Two stacked encoder layers plus the optional fine-tuning head.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepEncoder {
    pub layer1: SaeLayer,
    pub layer2: SaeLayer,
    pub head: Option<SoftmaxHead>,
}

impl DeepEncoder {
    pub fn input_dim(&self) -> usize {
        self.layer1.d()
    }

    /// Output code length (top-layer hidden size).
    pub fn code_dim(&self) -> usize {
        self.layer2.k()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer2.d() != self.layer1.k() {
            return Err(Error::Compat(format!(
                "layer 2 expects {} inputs but layer 1 emits {} codes",
                self.layer2.d(),
                self.layer1.k()
            )));
        }
        if let Some(head) = &self.head {
            if head.hidden() != self.code_dim() {
                return Err(Error::Compat(format!(
                    "softmax head expects {} inputs but the encoder emits {} codes",
                    head.hidden(),
                    self.code_dim()
                )));
            }
        }
        Ok(())
    }
}

/// Supervised fine-tuning hyperparameters. A zero learning rate makes
/// fine-tuning an exact no-op on the encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "fine-tune learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("fine-tune batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Train layer 1 on the descriptors, then layer 2 on layer 1's codes.
/// Layer 1 comes out bitwise identical to a standalone [`sae::train`] run.
pub fn stack_train(batch: &Batch, cfg1: &SaeConfig, cfg2: &SaeConfig) -> Result<DeepEncoder> {
    let layer1 = sae::train(batch, cfg1)?;
    let z1 = sae::encode_columns(&layer1, batch.x());
    let layer2 = sae::train(&Batch::new(z1)?, cfg2)?;
    Ok(DeepEncoder {
        layer1,
        layer2,
        head: None,
    })
}

/// Encode one descriptor to its top-layer code.
pub fn encode(enc: &DeepEncoder, x: &Array1<f64>) -> Result<Array1<f64>> {
    enc.validate()?;
    if x.len() != enc.input_dim() {
        return Err(Error::Dim {
            context: "deep encode",
            expected: enc.input_dim(),
            got: x.len(),
        });
    }
    let z1 = (enc.layer1.w.t().dot(x) + &enc.layer1.b1).mapv(sae::sigmoid);
    Ok((enc.layer2.w.t().dot(&z1) + &enc.layer2.b1).mapv(sae::sigmoid))
}

/// Encode descriptor columns to code columns (`K2 x N`).
pub fn encode_batch(enc: &DeepEncoder, x: &Array2<f64>) -> Result<Array2<f64>> {
    enc.validate()?;
    if x.nrows() != enc.input_dim() {
        return Err(Error::Dim {
            context: "deep encode_batch",
            expected: enc.input_dim(),
            got: x.nrows(),
        });
    }
    let z1 = sae::encode_columns(&enc.layer1, x);
    Ok(sae::encode_columns(&enc.layer2, &z1))
}

/// Column-wise softmax of `U'Z + c`, shifted per column for stability.
fn softmax_probs(head: &SoftmaxHead, z: &Array2<f64>) -> Array2<f64> {
    let mut s = head.u.t().dot(z);
    s += &head.c.view().insert_axis(Axis(1));
    for mut col in s.columns_mut() {
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        col.mapv_inplace(|v| (v - max).exp());
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }
    s
}

fn mean_cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let m = labels.len() as f64;
    -labels
        .iter()
        .enumerate()
        .map(|(i, &y)| probs[[y, i]].ln())
        .sum::<f64>()
        / m
}

struct LayerGrads {
    w: Array2<f64>,
    b1: Array1<f64>,
}

struct HeadGrads {
    u: Array2<f64>,
    c: Array1<f64>,
}

/// Forward through the encoder chain and the head, then back-propagate the
/// mean cross-entropy. Decoder blocks have no gradient (they are frozen).
fn supervised_pass(
    layers: &[SaeLayer],
    head: &SoftmaxHead,
    x: &Array2<f64>,
    labels: &[usize],
) -> (f64, Vec<LayerGrads>, HeadGrads) {
    let mut zs: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    for layer in layers {
        let input = zs.last().unwrap_or(x);
        zs.push(sae::encode_columns(layer, input));
    }
    let top = zs.last().expect("at least one layer");
    let probs = softmax_probs(head, top);
    let loss = mean_cross_entropy(&probs, labels);

    let m = labels.len() as f64;
    let mut ds = probs;
    for (i, &y) in labels.iter().enumerate() {
        ds[[y, i]] -= 1.0;
    }
    ds.mapv_inplace(|v| v / m);
    let head_grads = HeadGrads {
        u: top.dot(&ds.t()),
        c: ds.sum_axis(Axis(1)),
    };

    let mut delta = head.u.dot(&ds);
    let mut layer_grads: Vec<Option<LayerGrads>> = (0..layers.len()).map(|_| None).collect();
    for l in (0..layers.len()).rev() {
        let da = delta * &zs[l].mapv(|v| v * (1.0 - v));
        let input = if l == 0 { x } else { &zs[l - 1] };
        layer_grads[l] = Some(LayerGrads {
            w: input.dot(&da.t()),
            b1: da.sum_axis(Axis(1)),
        });
        delta = layers[l].w.dot(&da);
    }
    (
        loss,
        layer_grads.into_iter().map(|g| g.expect("filled")).collect(),
        head_grads,
    )
}

fn check_labels(n: usize, labels: &[usize], num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(Error::Training(format!(
            "fine-tuning needs at least 2 classes, got {num_classes}"
        )));
    }
    if labels.len() != n {
        return Err(Error::Dim {
            context: "fine-tune labels",
            expected: n,
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Training(format!(
            "label {bad} out of range for {num_classes} classes"
        )));
    }
    Ok(())
}

/// Shared fine-tuning driver over an arbitrary-depth encoder chain.
fn run_fine_tune<F>(
    mut layers: Vec<SaeLayer>,
    batch: &Batch,
    labels: &[usize],
    num_classes: usize,
    cfg: &FineTuneConfig,
    mut hook: F,
) -> Result<(Vec<SaeLayer>, SoftmaxHead)>
where
    F: FnMut(&[SaeLayer]),
{
    cfg.validate()?;
    check_labels(batch.n(), labels, num_classes)?;
    let k_top = layers.last().expect("at least one layer").k();

    let mut rng = Rng::new(cfg.seed);
    let radius = (6.0 / (k_top + num_classes) as f64).sqrt();
    let u = Array2::from_shape_vec(
        (k_top, num_classes),
        (0..k_top * num_classes)
            .map(|_| rng.uniform(-radius, radius))
            .collect(),
    )
    .expect("shape matches draw count");
    let mut head = SoftmaxHead {
        u,
        c: Array1::zeros(num_classes),
    };

    let mut order: Vec<usize> = (0..batch.n()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = batch.x().select(Axis(1), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, layer_grads, head_grads) = supervised_pass(&layers, &head, &xb, &yb);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            let lr = cfg.learning_rate;
            // lr = 0 must leave the encoder bitwise untouched, so even the
            // norm projection is skipped.
            if lr != 0.0 {
                for (layer, g) in layers.iter_mut().zip(&layer_grads) {
                    layer.w.scaled_add(-lr, &g.w);
                    layer.b1.scaled_add(-lr, &g.b1);
                    sae::project_columns(&mut layer.w);
                }
                head.u.scaled_add(-lr, &head_grads.u);
                head.c.scaled_add(-lr, &head_grads.c);
            }
            hook(&layers);
        }
    }
    Ok((layers, head))
}

/// Supervised fine-tuning of both stacked layers. Returns the adjusted
/// encoder with the trained head attached.
pub fn fine_tune(
    enc: &DeepEncoder,
    batch: &Batch,
    labels: &[usize],
    num_classes: usize,
    cfg: &FineTuneConfig,
) -> Result<DeepEncoder> {
    fine_tune_with_hook(enc, batch, labels, num_classes, cfg, |_| {})
}

/// [`fine_tune`] with an observation hook called after every update.
pub fn fine_tune_with_hook<F>(
    enc: &DeepEncoder,
    batch: &Batch,
    labels: &[usize],
    num_classes: usize,
    cfg: &FineTuneConfig,
    hook: F,
) -> Result<DeepEncoder>
where
    F: FnMut(&[SaeLayer]),
{
    enc.validate()?;
    if batch.d() != enc.input_dim() {
        return Err(Error::Dim {
            context: "fine-tune batch",
            expected: enc.input_dim(),
            got: batch.d(),
        });
    }
    let layers = vec![enc.layer1.clone(), enc.layer2.clone()];
    let (layers, head) = run_fine_tune(layers, batch, labels, num_classes, cfg, hook)?;
    let mut it = layers.into_iter();
    Ok(DeepEncoder {
        layer1: it.next().expect("two layers"),
        layer2: it.next().expect("two layers"),
        head: Some(head),
    })
}

/// Fine-tune a single layer used directly as a shallow encoder (ablation
/// support).
pub fn fine_tune_shallow(
    layer: &SaeLayer,
    batch: &Batch,
    labels: &[usize],
    num_classes: usize,
    cfg: &FineTuneConfig,
) -> Result<(SaeLayer, SoftmaxHead)> {
    if batch.d() != layer.d() {
        return Err(Error::Dim {
            context: "fine-tune batch",
            expected: layer.d(),
            got: batch.d(),
        });
    }
    let (layers, head) = run_fine_tune(vec![layer.clone()], batch, labels, num_classes, cfg, |_| {})?;
    Ok((layers.into_iter().next().expect("one layer"), head))
}

/// Mean cross-entropy of the attached head on the given patches; errors if
/// the encoder has no head.
pub fn cross_entropy(enc: &DeepEncoder, batch: &Batch, labels: &[usize]) -> Result<f64> {
    enc.validate()?;
    let head = enc
        .head
        .as_ref()
        .ok_or_else(|| Error::Training("encoder has no softmax head".into()))?;
    check_labels(batch.n(), labels, head.num_classes())?;
    let z2 = encode_batch(enc, batch.x())?;
    Ok(mean_cross_entropy(&softmax_probs(head, &z2), labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::InitScale;

    fn quick_cfg(hidden: usize, seed: u64) -> SaeConfig {
        SaeConfig {
            hidden,
            rho: 0.05,
            beta: 0.5,
            learning_rate: 0.05,
            epochs: 8,
            batch_size: 64,
            seed,
            init_scale: InitScale::Glorot,
        }
    }

    fn random_batch(d: usize, n: usize, seed: u64) -> Batch {
        let mut rng = Rng::new(seed);
        Batch::new(Array2::from_shape_vec(
            (d, n),
            (0..d * n).map(|_| rng.next_f64()).collect(),
        )
        .unwrap())
        .unwrap()
    }

    /// Three well-separated descriptor clusters with labels.
    fn clustered_batch(d: usize, per_class: usize, seed: u64) -> (Batch, Vec<usize>) {
        let mut rng = Rng::new(seed);
        let centers: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..d).map(|_| rng.next_f64()).collect())
            .collect();
        let n = 3 * per_class;
        let mut data = Vec::with_capacity(d * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 3;
            labels.push(class);
            for j in 0..d {
                data.push((centers[class][j] + 0.05 * rng.normal()).clamp(0.0, 1.0));
            }
        }
        // Assembled sample-major, then transposed to descriptor columns.
        let x = Array2::from_shape_vec((n, d), data).unwrap().reversed_axes();
        (Batch::new(x).unwrap(), labels)
    }

    fn trained_stack(seed: u64) -> (DeepEncoder, Batch) {
        let batch = random_batch(24, 160, seed);
        let enc = stack_train(&batch, &quick_cfg(12, seed + 1), &quick_cfg(8, seed + 2)).unwrap();
        (enc, batch)
    }

    #[test]
    fn stack_dimensions_and_invariants() {
        let (enc, batch) = trained_stack(1);
        assert_eq!(enc.layer1.d(), 24);
        assert_eq!(enc.layer1.k(), 12);
        assert_eq!(enc.layer2.d(), 12);
        assert_eq!(enc.code_dim(), 8);
        assert!(enc.head.is_none());
        assert!(enc.layer1.max_column_norm_error() < 1e-9);
        assert!(enc.layer2.max_column_norm_error() < 1e-9);
        let codes = encode_batch(&enc, batch.x()).unwrap();
        assert!(codes.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn stack_layer1_is_bitwise_standalone() {
        let batch = random_batch(24, 160, 2);
        let cfg1 = quick_cfg(12, 3);
        let enc = stack_train(&batch, &cfg1, &quick_cfg(8, 4)).unwrap();
        let alone = sae::train(&batch, &cfg1).unwrap();
        assert_eq!(enc.layer1, alone);
    }

    #[test]
    fn encode_composes_the_layer_forwards() {
        let (enc, batch) = trained_stack(5);
        let x = batch.x().column(3).to_owned();
        let code = encode(&enc, &x).unwrap();
        let (z1, _) = sae::forward(&enc.layer1, &x).unwrap();
        let (z2, _) = sae::forward(&enc.layer2, &z1).unwrap();
        assert_eq!(code, z2);
    }

    #[test]
    fn encode_zero_weights_gives_half() {
        let zero = |d: usize, k: usize| SaeLayer {
            w: Array2::zeros((d, k)),
            v: Array2::zeros((d, k)),
            b1: Array1::zeros(k),
            b2: Array1::zeros(d),
        };
        let enc = DeepEncoder {
            layer1: zero(6, 4),
            layer2: zero(4, 3),
            head: None,
        };
        let code = encode(&enc, &Array1::from_elem(6, 0.9)).unwrap();
        assert!(code.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn encode_matches_straightline_oracle() {
        let (enc, batch) = trained_stack(6);
        let x = batch.x().column(0).to_owned();
        let code = encode(&enc, &x).unwrap();
        let mut z1 = vec![0.0; enc.layer1.k()];
        for (k, z) in z1.iter_mut().enumerate() {
            let mut a = enc.layer1.b1[k];
            for j in 0..enc.layer1.d() {
                a += enc.layer1.w[[j, k]] * x[j];
            }
            *z = sae::sigmoid(a);
        }
        for k in 0..enc.layer2.k() {
            let mut a = enc.layer2.b1[k];
            for (j, z) in z1.iter().enumerate() {
                a += enc.layer2.w[[j, k]] * z;
            }
            assert!((code[k] - sae::sigmoid(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_batch_agrees_with_per_vector_encode() {
        let (enc, batch) = trained_stack(7);
        let codes = encode_batch(&enc, batch.x()).unwrap();
        for i in [0usize, 9, 77] {
            let one = encode(&enc, &batch.x().column(i).to_owned()).unwrap();
            for (a, b) in codes.column(i).iter().zip(one.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_rejects_wrong_input_length() {
        let (enc, _) = trained_stack(8);
        let err = encode(&enc, &Array1::zeros(7)).unwrap_err();
        assert!(matches!(err, Error::Dim { .. }), "{err}");
    }

    fn ft_cfg(epochs: usize) -> FineTuneConfig {
        FineTuneConfig {
            learning_rate: 0.1,
            epochs,
            batch_size: 50,
            seed: 9,
        }
    }

    #[test]
    fn fine_tuning_decreases_cross_entropy() {
        let (batch, labels) = clustered_batch(16, 100, 10);
        let enc = stack_train(&batch, &quick_cfg(16, 11), &quick_cfg(16, 12)).unwrap();
        // epochs = 0 attaches the same seeded initial head without updates,
        // giving the pre-training baseline.
        let before = fine_tune(&enc, &batch, &labels, 3, &ft_cfg(0)).unwrap();
        let after = fine_tune(&enc, &batch, &labels, 3, &ft_cfg(25)).unwrap();
        let ce_before = cross_entropy(&before, &batch, &labels).unwrap();
        let ce_after = cross_entropy(&after, &batch, &labels).unwrap();
        assert!(ce_after < ce_before, "{ce_after} vs {ce_before}");
    }

    #[test]
    fn supervised_gradients_match_finite_differences() {
        let (batch, labels) = clustered_batch(6, 4, 13);
        let enc = stack_train(&batch, &quick_cfg(5, 14), &quick_cfg(4, 15)).unwrap();
        let layers = vec![enc.layer1, enc.layer2];
        let mut rng = Rng::new(16);
        let head = SoftmaxHead {
            u: Array2::from_shape_vec((4, 3), (0..12).map(|_| rng.uniform(-0.5, 0.5)).collect())
                .unwrap(),
            c: Array1::from_iter((0..3).map(|_| rng.uniform(-0.2, 0.2))),
        };
        let (_, layer_grads, head_grads) = supervised_pass(&layers, &head, batch.x(), &labels);

        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
        let h = 1e-5;
        let loss_with = |layers: &[SaeLayer], head: &SoftmaxHead| {
            let (loss, _, _) = supervised_pass(layers, head, batch.x(), &labels);
            loss
        };

        for r in 0..4 {
            for cc in 0..3 {
                let mut hp = head.clone();
                hp.u[[r, cc]] += h;
                let mut hm = head.clone();
                hm.u[[r, cc]] -= h;
                let fd = (loss_with(&layers, &hp) - loss_with(&layers, &hm)) / (2.0 * h);
                assert!(rel(head_grads.u[[r, cc]], fd) < 1e-4);
            }
        }
        for cc in 0..3 {
            let mut hp = head.clone();
            hp.c[cc] += h;
            let mut hm = head.clone();
            hm.c[cc] -= h;
            let fd = (loss_with(&layers, &hp) - loss_with(&layers, &hm)) / (2.0 * h);
            assert!(rel(head_grads.c[cc], fd) < 1e-4);
        }
        for (li, g) in layer_grads.iter().enumerate() {
            for j in 0..layers[li].d() {
                for k in 0..layers[li].k() {
                    let mut lp = layers.to_vec();
                    lp[li].w[[j, k]] += h;
                    let mut lm = layers.to_vec();
                    lm[li].w[[j, k]] -= h;
                    let fd = (loss_with(&lp, &head) - loss_with(&lm, &head)) / (2.0 * h);
                    assert!(rel(g.w[[j, k]], fd) < 1e-4, "layer {li} W[{j},{k}]");
                }
            }
            for k in 0..layers[li].k() {
                let mut lp = layers.to_vec();
                lp[li].b1[k] += h;
                let mut lm = layers.to_vec();
                lm[li].b1[k] -= h;
                let fd = (loss_with(&lp, &head) - loss_with(&lm, &head)) / (2.0 * h);
                assert!(rel(g.b1[k], fd) < 1e-4, "layer {li} b1[{k}]");
            }
        }
    }

    #[test]
    fn zero_learning_rate_leaves_encoder_bitwise_unchanged() {
        let (batch, labels) = clustered_batch(16, 20, 17);
        let enc = stack_train(&batch, &quick_cfg(8, 18), &quick_cfg(8, 19)).unwrap();
        let cfg = FineTuneConfig {
            learning_rate: 0.0,
            epochs: 5,
            batch_size: 16,
            seed: 20,
        };
        let tuned = fine_tune(&enc, &batch, &labels, 3, &cfg).unwrap();
        assert_eq!(tuned.layer1, enc.layer1);
        assert_eq!(tuned.layer2, enc.layer2);
        assert!(tuned.head.is_some());
    }

    #[test]
    fn zero_epochs_keeps_layers_and_attaches_head() {
        let (batch, labels) = clustered_batch(16, 20, 21);
        let enc = stack_train(&batch, &quick_cfg(8, 22), &quick_cfg(8, 23)).unwrap();
        let tuned = fine_tune(&enc, &batch, &labels, 3, &ft_cfg(0)).unwrap();
        assert_eq!(tuned.layer1, enc.layer1);
        assert_eq!(tuned.layer2, enc.layer2);
        assert_eq!(tuned.head.as_ref().unwrap().num_classes(), 3);
    }

    #[test]
    fn fine_tuning_maintains_unit_columns_after_every_update() {
        let (batch, labels) = clustered_batch(16, 40, 24);
        let enc = stack_train(&batch, &quick_cfg(8, 25), &quick_cfg(8, 26)).unwrap();
        let mut updates = 0;
        let mut worst = 0.0f64;
        fine_tune_with_hook(&enc, &batch, &labels, 3, &ft_cfg(4), |layers| {
            updates += 1;
            for layer in layers {
                worst = worst.max(layer.max_column_norm_error());
            }
        })
        .unwrap();
        assert!(updates > 0);
        assert!(worst < 1e-9, "worst column-norm error {worst}");
    }

    #[test]
    fn fine_tuning_is_deterministic() {
        let (batch, labels) = clustered_batch(16, 30, 27);
        let enc = stack_train(&batch, &quick_cfg(8, 28), &quick_cfg(8, 29)).unwrap();
        let a = fine_tune(&enc, &batch, &labels, 3, &ft_cfg(6)).unwrap();
        let b = fine_tune(&enc, &batch, &labels, 3, &ft_cfg(6)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shallow_fine_tuning_works_and_keeps_constraint() {
        let (batch, labels) = clustered_batch(16, 40, 30);
        let layer = sae::train(&batch, &quick_cfg(8, 31)).unwrap();
        let (tuned, head) = fine_tune_shallow(&layer, &batch, &labels, 3, &ft_cfg(10)).unwrap();
        assert_eq!(head.num_classes(), 3);
        assert_eq!(head.hidden(), 8);
        assert!(tuned.max_column_norm_error() < 1e-9);
        assert_ne!(tuned.w, layer.w);
        // Decoder stays frozen.
        assert_eq!(tuned.v, layer.v);
        assert_eq!(tuned.b2, layer.b2);
    }

    #[test]
    fn label_validation_errors() {
        let (batch, mut labels) = clustered_batch(16, 10, 32);
        let enc = stack_train(&batch, &quick_cfg(8, 33), &quick_cfg(8, 34)).unwrap();
        assert!(fine_tune(&enc, &batch, &labels, 1, &ft_cfg(1)).is_err());
        assert!(fine_tune(&enc, &batch, &labels[..5], 3, &ft_cfg(1)).is_err());
        labels[0] = 7;
        assert!(fine_tune(&enc, &batch, &labels, 3, &ft_cfg(1)).is_err());
    }
}
