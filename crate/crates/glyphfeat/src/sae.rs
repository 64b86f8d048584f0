//! Single-layer sparse auto-encoder with a KL sparsity penalty and a
//! unit-norm dictionary constraint.
//!
//! The model encodes a descriptor `x` as `z = sigma(W'x + b1)` and decodes it
//! linearly as `xhat = V z + b2`. Training minimizes
//!
//! ```text
//! E = (1/2N) sum_i ||x_i - xhat_i||^2  +  beta * sum_k KL(rho || rhohat_k)
//! ```
//!
//! where `rhohat_k` is the mean activation of hidden unit k over the batch
//! and `KL(p||q) = p ln(p/q) + (1-p) ln((1-p)/(1-q))`. The columns of `W`
//! (the visual dictionary) are projected back to unit L2 norm after every
//! gradient step, which keeps the decoder from compensating with arbitrarily
//! large weights.
//!
//! All gradients are analytic; the test suite checks every parameter block
//! against central finite differences.

use ndarray::{Array1, Array2, Axis};

use crate::rng::Rng;
use crate::{Error, Result};

/// Clamp applied to mean activations inside logarithms.
const RHO_EPS: f64 = 1e-8;

/// Encoder/decoder parameters. `w` and `v` are `d x k`; the columns of `w`
/// are the dictionary atoms and stay unit-norm through training.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeLayer {
    pub w: Array2<f64>,
    pub v: Array2<f64>,
    pub b1: Array1<f64>,
    pub b2: Array1<f64>,
}

impl SaeLayer {
    /// Input dimension.
    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    /// Hidden size (number of dictionary atoms).
    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// Seeded uniform(-r, r) weights (entries drawn row-major, `w` before
    /// `v`), zero biases, and `w` projected to unit columns.
    pub fn random_init(d: usize, k: usize, radius: f64, rng: &mut Rng) -> SaeLayer {
        let mut draw = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| rng.uniform(-radius, radius)).collect();
            Array2::from_shape_vec((rows, cols), data).expect("shape matches draw count")
        };
        let layer = SaeLayer {
            w: draw(d, k),
            v: draw(d, k),
            b1: Array1::zeros(k),
            b2: Array1::zeros(d),
        };
        project_unit_norm(&layer)
    }

    pub fn max_column_norm_error(&self) -> f64 {
        (0..self.k())
            .map(|k| (column_norm(&self.w, k) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Weight initialization radius: Glorot-style by default, or a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScale {
    Glorot,
    Fixed(f64),
}

impl InitScale {
    pub fn radius(&self, d: usize, k: usize) -> f64 {
        match *self {
            InitScale::Glorot => (6.0 / (d + k) as f64).sqrt(),
            InitScale::Fixed(r) => r,
        }
    }
}

/// Training hyperparameters for one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaeConfig {
    /// Hidden size K (dictionary atoms).
    pub hidden: usize,
    /// Target mean activation, in (0, 1).
    pub rho: f64,
    /// Sparsity penalty weight, >= 0.
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: InitScale,
}

impl SaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("sae hidden size must be >= 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("sae rho must be in (0, 1), got {}", self.rho)));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::Config(format!("sae beta must be >= 0, got {}", self.beta)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "sae learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("sae batch size must be >= 1".into()));
        }
        if let InitScale::Fixed(r) = self.init_scale {
            if !(r > 0.0) {
                return Err(Error::Config(format!("sae init scale must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

/// A `d x N` matrix of descriptor columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    x: Array2<f64>,
}

impl Batch {
    pub fn new(x: Array2<f64>) -> Result<Batch> {
        if x.ncols() == 0 {
            return Err(Error::Config("batch must contain at least one column".into()));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("batch contains non-finite values".into()));
        }
        Ok(Batch { x })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn d(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }
}

/// Numerically stable logistic function; exact 0.0/1.0 at saturation, no
/// overflow for any finite input.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Encode and decode a single descriptor: `(z, xhat)`.
pub fn forward(layer: &SaeLayer, x: &Array1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
    if x.len() != layer.d() {
        return Err(Error::Dim {
            context: "sae forward",
            expected: layer.d(),
            got: x.len(),
        });
    }
    let z = (layer.w.t().dot(x) + &layer.b1).mapv(sigmoid);
    let xhat = layer.v.dot(&z) + &layer.b2;
    Ok((z, xhat))
}

/// Encoder half only, column-wise over a `d x N` matrix: `sigma(W'X + b1)`.
pub fn encode_columns(layer: &SaeLayer, x: &Array2<f64>) -> Array2<f64> {
    let mut z = layer.w.t().dot(x);
    z += &layer.b1.view().insert_axis(Axis(1));
    z.mapv_inplace(sigmoid);
    z
}

/// Batch forward pass over descriptor columns: `(Z: k x N, Xhat: d x N)`.
fn forward_columns(layer: &SaeLayer, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let z = encode_columns(layer, x);
    let mut xhat = layer.v.dot(&z);
    xhat += &layer.b2.view().insert_axis(Axis(1));
    (z, xhat)
}

/// Batch forward pass: `(Z: k x N, Xhat: d x N)`.
pub fn forward_batch(layer: &SaeLayer, batch: &Batch) -> Result<(Array2<f64>, Array2<f64>)> {
    if batch.d() != layer.d() {
        return Err(Error::Dim {
            context: "sae forward_batch",
            expected: layer.d(),
            got: batch.d(),
        });
    }
    Ok(forward_columns(layer, batch.x()))
}

/// Mean activation of each hidden unit over the batch.
pub fn mean_activation(layer: &SaeLayer, batch: &Batch) -> Result<Array1<f64>> {
    let (z, _) = forward_batch(layer, batch)?;
    Ok(z.sum_axis(Axis(1)) / batch.n() as f64)
}

/// Summed KL divergence `sum_k KL(rho || rhohat_k)` with natural logs;
/// activations are clamped to `[1e-8, 1 - 1e-8]` before the logarithms.
pub fn kl_term(rho: f64, rho_hat: &Array1<f64>) -> f64 {
    rho_hat
        .iter()
        .map(|&rh| {
            let r = rh.clamp(RHO_EPS, 1.0 - RHO_EPS);
            rho * (rho / r).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - r)).ln()
        })
        .sum()
}

/// Objective value split into its reconstruction and sparsity parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub recon: f64,
    pub sparsity: f64,
    pub total: f64,
}

fn loss_from_forward(
    x: &Array2<f64>,
    z: &Array2<f64>,
    xhat: &Array2<f64>,
    rho: f64,
    beta: f64,
) -> LossParts {
    let n = x.ncols() as f64;
    let recon = xhat
        .iter()
        .zip(x.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / (2.0 * n);
    let rho_hat = z.sum_axis(Axis(1)) / n;
    let sparsity = beta * kl_term(rho, &rho_hat);
    LossParts {
        recon,
        sparsity,
        total: recon + sparsity,
    }
}

/// Objective of the batch under `cfg.rho`/`cfg.beta` (mean activations taken
/// over this batch).
pub fn batch_loss(layer: &SaeLayer, batch: &Batch, cfg: &SaeConfig) -> Result<LossParts> {
    let (z, xhat) = forward_batch(layer, batch)?;
    Ok(loss_from_forward(batch.x(), &z, &xhat, cfg.rho, cfg.beta))
}

/// Gradients of [`batch_loss`]'s `total` with respect to each parameter
/// block.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradients {
    pub w: Array2<f64>,
    pub v: Array2<f64>,
    pub b1: Array1<f64>,
    pub b2: Array1<f64>,
}

fn gradients_from_forward(
    layer: &SaeLayer,
    x: &Array2<f64>,
    z: &Array2<f64>,
    xhat: &Array2<f64>,
    rho: f64,
    beta: f64,
) -> SaeGradients {
    let n = x.ncols() as f64;
    let resid = (xhat - x) / n;
    let gv = resid.dot(&z.t());
    let gb2 = resid.sum_axis(Axis(1));

    // Hidden delta: reconstruction part through V, plus the KL term's
    // dependence on each unit's mean activation (d rhohat / d z = 1/N).
    let mut dz = layer.v.t().dot(&resid);
    if beta > 0.0 {
        let rho_hat = z.sum_axis(Axis(1)) / n;
        let kl_delta = rho_hat.mapv(|rh| {
            let r = rh.clamp(RHO_EPS, 1.0 - RHO_EPS);
            beta / n * (-rho / r + (1.0 - rho) / (1.0 - r))
        });
        dz += &kl_delta.insert_axis(Axis(1));
    }
    let da = dz * &z.mapv(|v| v * (1.0 - v));
    let gw = x.dot(&da.t());
    let gb1 = da.sum_axis(Axis(1));
    SaeGradients {
        w: gw,
        v: gv,
        b1: gb1,
        b2: gb2,
    }
}

/// Analytic gradients of the batch objective.
pub fn gradients(layer: &SaeLayer, batch: &Batch, cfg: &SaeConfig) -> Result<SaeGradients> {
    let (z, xhat) = forward_batch(layer, batch)?;
    Ok(gradients_from_forward(layer, batch.x(), &z, &xhat, cfg.rho, cfg.beta))
}

fn column_norm(m: &Array2<f64>, k: usize) -> f64 {
    m.column(k).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Normalize the columns of `w` in place. Panics if a column has collapsed
/// to zero, which is unreachable from random initialization.
pub(crate) fn project_columns(w: &mut Array2<f64>) {
    for mut col in w.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "dictionary column collapsed to the zero vector");
        col.mapv_inplace(|v| v / norm);
    }
}

/// Return a copy of the layer with every dictionary column scaled to unit
/// L2 norm; decoder and biases are untouched.
pub fn project_unit_norm(layer: &SaeLayer) -> SaeLayer {
    let mut out = layer.clone();
    project_columns(&mut out.w);
    out
}

/// Train a layer by mini-batch projected gradient descent. Deterministic
/// given the config seed.
pub fn train(batch: &Batch, cfg: &SaeConfig) -> Result<SaeLayer> {
    train_with_hook(batch, cfg, |_| {})
}

/// [`train`] with an observation hook invoked after every parameter update
/// (used by invariant-checking tests and instrumentation).
pub fn train_with_hook<F>(batch: &Batch, cfg: &SaeConfig, mut hook: F) -> Result<SaeLayer>
where
    F: FnMut(&SaeLayer),
{
    cfg.validate()?;
    let d = batch.d();
    let radius = cfg.init_scale.radius(d, cfg.hidden);
    let mut rng = Rng::new(cfg.seed);
    let mut layer = SaeLayer::random_init(d, cfg.hidden, radius, &mut rng);

    let mut order: Vec<usize> = (0..batch.n()).collect();
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = batch.x().select(Axis(1), chunk);
            let (z, xhat) = forward_columns(&layer, &xb);
            let loss = loss_from_forward(&xb, &z, &xhat, cfg.rho, cfg.beta);
            if !loss.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            let g = gradients_from_forward(&layer, &xb, &z, &xhat, cfg.rho, cfg.beta);
            let lr = cfg.learning_rate;
            layer.w.scaled_add(-lr, &g.w);
            layer.v.scaled_add(-lr, &g.v);
            layer.b1.scaled_add(-lr, &g.b1);
            layer.b2.scaled_add(-lr, &g.b2);
            project_columns(&mut layer.w);
            hook(&layer);
        }
    }
    Ok(layer)
}
