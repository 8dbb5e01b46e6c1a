//! Graph-convolutional encoder with stochastic augmentations and
//! hand-derived backprop.
//!
//! The compute graph is fixed. Each layer applies dropout, propagation with
//! the symmetric degree-normalized adjacency (self-loops included), a linear
//! map, optional batchnorm, a rectifier between layers, and an optional
//! residual skip; optional row l2-normalization follows the last layer.
//! Backprop is derived for exactly this chain, so no general autodiff
//! machinery is needed, and every gradient is checkable against central
//! finite differences.
//!
//! Batchnorm always uses current-batch statistics: training is full-batch,
//! so eval-mode encoding stays a pure function of parameters and graph.

use crate::error::{Error, Result};
use crate::graph::TextRichGraph;
use crate::matrix::{dot, Matrix};
use crate::rng::{self, Rng};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Epsilon added to zero norms during row normalization.
pub const NORM_EPS: f64 = 1e-12;
const BN_EPS: f64 = 1e-5;

/// Architecture and initialization settings for one encoder.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EncoderConfig {
    pub input_dim: usize,
    /// Output dimension of each layer; the last entry is the embedding dim.
    /// The search grid uses 2-4 layers with hidden sizes 64/128/256.
    pub hidden_dims: Vec<usize>,
    pub dropout: f64,
    pub use_batchnorm: bool,
    pub use_residual: bool,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, seed: u64) -> Self {
        EncoderConfig {
            input_dim,
            hidden_dims,
            dropout: 0.5,
            use_batchnorm: false,
            use_residual: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::InvalidConfig("encoder needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        *self.hidden_dims.last().unwrap()
    }
}

/// One graph-convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer {
    /// `f_in x f_out`.
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub bn_gamma: Option<Vec<f64>>,
    pub bn_beta: Option<Vec<f64>>,
}

/// All trainable encoder state.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub layers: Vec<GcnLayer>,
}

impl EncoderParams {
    /// Glorot-uniform initialization from the config seed.
    pub fn init(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.hidden_dims.len());
        let mut f_in = config.input_dim;
        for (l, &f_out) in config.hidden_dims.iter().enumerate() {
            let mut rng = rng::stream(config.seed, &[0x11, l as u64]);
            let limit = (6.0 / (f_in + f_out) as f64).sqrt();
            let data = (0..f_in * f_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(GcnLayer {
                weight: Matrix::from_vec(f_in, f_out, data),
                bias: Some(vec![0.0; f_out]),
                bn_gamma: config.use_batchnorm.then(|| vec![1.0; f_out]),
                bn_beta: config.use_batchnorm.then(|| vec![0.0; f_out]),
            });
            f_in = f_out;
        }
        Ok(EncoderParams { config, layers })
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weight.data().len()
                    + l.bias.as_ref().map_or(0, Vec::len)
                    + l.bn_gamma.as_ref().map_or(0, Vec::len)
                    + l.bn_beta.as_ref().map_or(0, Vec::len)
            })
            .sum()
    }

    /// Flattens all parameters in a fixed order (per layer: weight row-major,
    /// bias, gamma, beta).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            flat.extend_from_slice(l.weight.data());
            if let Some(b) = &l.bias {
                flat.extend_from_slice(b);
            }
            if let Some(g) = &l.bn_gamma {
                flat.extend_from_slice(g);
            }
            if let Some(b) = &l.bn_beta {
                flat.extend_from_slice(b);
            }
        }
        flat
    }

    /// Inverse of [`EncoderParams::to_flat`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut off = 0usize;
        for l in &mut self.layers {
            let wlen = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[off..off + wlen]);
            off += wlen;
            if let Some(b) = &mut l.bias {
                let len = b.len();
                b.copy_from_slice(&flat[off..off + len]);
                off += len;
            }
            if let Some(g) = &mut l.bn_gamma {
                let len = g.len();
                g.copy_from_slice(&flat[off..off + len]);
                off += len;
            }
            if let Some(b) = &mut l.bn_beta {
                let len = b.len();
                b.copy_from_slice(&flat[off..off + len]);
                off += len;
            }
        }
        debug_assert_eq!(off, flat.len());
    }
}

/// Parameter-shaped gradients; [`EncoderGrads::to_flat`] matches
/// [`EncoderParams::to_flat`] element for element.
#[derive(Clone, Debug)]
pub struct EncoderGrads {
    pub layers: Vec<GcnLayer>,
}

impl EncoderGrads {
    fn zeros_like(params: &EncoderParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| GcnLayer {
                weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                bn_gamma: l.bn_gamma.as_ref().map(|g| vec![0.0; g.len()]),
                bn_beta: l.bn_beta.as_ref().map(|b| vec![0.0; b.len()]),
            })
            .collect();
        EncoderGrads { layers }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for l in &self.layers {
            flat.extend_from_slice(l.weight.data());
            if let Some(b) = &l.bias {
                flat.extend_from_slice(b);
            }
            if let Some(g) = &l.bn_gamma {
                flat.extend_from_slice(g);
            }
            if let Some(b) = &l.bn_beta {
                flat.extend_from_slice(b);
            }
        }
        flat
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign(&b.weight);
            if let (Some(x), Some(y)) = (&mut a.bias, &b.bias) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
            if let (Some(x), Some(y)) = (&mut a.bn_gamma, &b.bn_gamma) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
            if let (Some(x), Some(y)) = (&mut a.bn_beta, &b.bn_beta) {
                for (p, q) in x.iter_mut().zip(y) {
                    *p += q;
                }
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

/// A stochastic augmentation of a graph: which edges survive and which
/// feature columns stay on. Fully reproducible from its seed.
#[derive(Clone, Debug)]
pub struct AugmentedView {
    pub n: usize,
    pub kept_edges: Vec<(u32, u32)>,
    /// One flag per feature column; `false` columns are zeroed.
    pub feature_mask: Vec<bool>,
    pub seed: u64,
}

impl AugmentedView {
    /// The identity view: every edge and feature column kept.
    pub fn full(graph: &TextRichGraph) -> Self {
        AugmentedView {
            n: graph.n(),
            kept_edges: graph.edges().to_vec(),
            feature_mask: vec![true; graph.feature_dim()],
            seed: 0,
        }
    }
}

/// Drops each edge independently with probability `p_edge` and zeroes each
/// feature column independently with probability `p_feat` (shared across
/// nodes).
pub fn augment(graph: &TextRichGraph, p_edge: f64, p_feat: f64, seed: u64) -> AugmentedView {
    assert!((0.0..1.0).contains(&p_edge), "p_edge outside [0, 1)");
    assert!((0.0..1.0).contains(&p_feat), "p_feat outside [0, 1)");
    let mut edge_rng = rng::stream(seed, &[0x01]);
    let kept_edges = graph
        .edges()
        .iter()
        .copied()
        .filter(|_| edge_rng.random::<f64>() >= p_edge)
        .collect();
    let mut feat_rng = rng::stream(seed, &[0x02]);
    let feature_mask = (0..graph.feature_dim())
        .map(|_| feat_rng.random::<f64>() >= p_feat)
        .collect();
    AugmentedView {
        n: graph.n(),
        kept_edges,
        feature_mask,
        seed,
    }
}

/// Symmetric degree-normalized adjacency with self-loops, sparse.
#[derive(Clone, Debug)]
pub struct NormAdj {
    n: usize,
    /// `(row, col, coeff)` sorted by `(row, col)`; includes the diagonal.
    entries: Vec<(u32, u32, f64)>,
}

impl NormAdj {
    pub fn from_view(view: &AugmentedView) -> Self {
        let n = view.n;
        let mut deg = vec![1.0f64; n]; // self-loop
        for &(u, v) in &view.kept_edges {
            deg[u as usize] += 1.0;
            deg[v as usize] += 1.0;
        }
        let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut entries = Vec::with_capacity(n + 2 * view.kept_edges.len());
        for i in 0..n {
            entries.push((i as u32, i as u32, inv_sqrt[i] * inv_sqrt[i]));
        }
        for &(u, v) in &view.kept_edges {
            let c = inv_sqrt[u as usize] * inv_sqrt[v as usize];
            entries.push((u, v, c));
            entries.push((v, u, c));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        NormAdj { n, entries }
    }

    /// `A_norm * h`.
    pub fn apply(&self, h: &Matrix) -> Matrix {
        assert_eq!(h.rows(), self.n);
        let mut out = Matrix::zeros(h.rows(), h.cols());
        for &(r, c, w) in &self.entries {
            let src = h.row(c as usize);
            let dst = out.row_mut(r as usize);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
        out
    }
}

/// Whether a forward pass applies dropout.
#[derive(Clone, Copy, Debug)]
pub enum ForwardMode {
    /// Dropout active; masks derived from this seed, so a fixed seed makes
    /// the pass deterministic (as finite-difference checks require).
    Train { dropout_seed: u64 },
    Eval,
}

struct BnTape {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    xhat: Matrix,
}

struct LayerTape {
    /// Per-element keep-scales (0 or 1/(1-p)); `None` when dropout is off.
    dropout_scale: Option<Matrix>,
    propagated: Matrix,
    bn: Option<BnTape>,
    pre_act: Matrix,
    activated: bool,
    residual: bool,
}

/// Forward-pass record consumed by [`backprop`].
pub struct Tape {
    layers: Vec<LayerTape>,
    pre_norm: Matrix,
    norms: Option<Vec<f64>>,
    /// Rows whose pre-normalization norm fell below [`NORM_EPS`].
    pub degenerate_rows: Vec<usize>,
}

impl Tape {
    /// Smallest |pre-activation| over rectified layers. Finite-difference
    /// gradient checks are only well-posed when the step stays clear of this
    /// margin, since the rectifier is non-differentiable at zero.
    pub fn activation_margin(&self) -> f64 {
        self.layers
            .iter()
            .filter(|l| l.activated)
            .flat_map(|l| l.pre_act.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

fn masked_features(graph: &TextRichGraph, view: &AugmentedView) -> Matrix {
    let mut x = graph.features().clone();
    for (j, &keep) in view.feature_mask.iter().enumerate() {
        if !keep {
            for i in 0..x.rows() {
                x.set(i, j, 0.0);
            }
        }
    }
    x
}

/// Encodes and records everything backprop needs.
pub fn encode_traced(
    params: &EncoderParams,
    graph: &TextRichGraph,
    view: &AugmentedView,
    mode: ForwardMode,
    normalize: bool,
) -> (Matrix, Tape) {
    let adj = NormAdj::from_view(view);
    let mut h = masked_features(graph, view);
    let mut layer_tapes = Vec::with_capacity(params.layers.len());
    let last = params.layers.len() - 1;

    for (l, layer) in params.layers.iter().enumerate() {
        let residual =
            params.config.use_residual && layer.weight.rows() == layer.weight.cols();
        let skip = residual.then(|| h.clone());

        // Dropout on the layer input (inverted scaling).
        let p = params.config.dropout;
        let dropout_scale = match mode {
            ForwardMode::Train { dropout_seed } if p > 0.0 => {
                let mut drng = rng::stream(dropout_seed, &[0x0d, l as u64]);
                let keep = 1.0 / (1.0 - p);
                let mut scale = Matrix::zeros(h.rows(), h.cols());
                for v in scale.data_mut() {
                    *v = if drng.random::<f64>() >= p { keep } else { 0.0 };
                }
                for (hv, sv) in h.data_mut().iter_mut().zip(scale.data()) {
                    *hv *= sv;
                }
                Some(scale)
            }
            _ => None,
        };

        let propagated = adj.apply(&h);
        let mut out = propagated.matmul(&layer.weight);
        if let Some(bias) = &layer.bias {
            for i in 0..out.rows() {
                for (v, b) in out.row_mut(i).iter_mut().zip(bias) {
                    *v += b;
                }
            }
        }

        // Batchnorm over nodes, per output feature, batch statistics.
        let bn = if let (Some(gamma), Some(beta)) = (&layer.bn_gamma, &layer.bn_beta) {
            let n = out.rows() as f64;
            let cols = out.cols();
            let mut mean = vec![0.0; cols];
            for i in 0..out.rows() {
                for (m, v) in mean.iter_mut().zip(out.row(i)) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= n;
            }
            let mut var = vec![0.0; cols];
            for i in 0..out.rows() {
                for (j, v) in out.row(i).iter().enumerate() {
                    let d = v - mean[j];
                    var[j] += d * d;
                }
            }
            for v in &mut var {
                *v /= n;
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xhat = Matrix::zeros(out.rows(), cols);
            for i in 0..out.rows() {
                for j in 0..cols {
                    let xh = (out.get(i, j) - mean[j]) * inv_std[j];
                    xhat.set(i, j, xh);
                    out.set(i, j, gamma[j] * xh + beta[j]);
                }
            }
            Some(BnTape { mean, inv_std, xhat })
        } else {
            None
        };

        let pre_act = out.clone();
        let activated = l < last;
        if activated {
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }

        if let Some(skip) = skip {
            out.add_assign(&skip);
        }

        layer_tapes.push(LayerTape {
            dropout_scale,
            propagated,
            bn,
            pre_act,
            activated,
            residual,
        });
        h = out;
    }

    let pre_norm = h.clone();
    let mut degenerate_rows = Vec::new();
    let norms = if normalize {
        let mut norms = Vec::with_capacity(h.rows());
        for i in 0..h.rows() {
            let row = h.row_mut(i);
            let norm = dot(row, row).sqrt();
            let denom = if norm < NORM_EPS {
                degenerate_rows.push(i);
                norm + NORM_EPS
            } else {
                norm
            };
            for v in row.iter_mut() {
                *v /= denom;
            }
            norms.push(norm);
        }
        Some(norms)
    } else {
        None
    };

    (
        h,
        Tape {
            layers: layer_tapes,
            pre_norm,
            norms,
            degenerate_rows,
        },
    )
}

/// Forward pass without the tape.
pub fn encode(
    params: &EncoderParams,
    graph: &TextRichGraph,
    view: &AugmentedView,
    mode: ForwardMode,
    normalize: bool,
) -> Matrix {
    encode_traced(params, graph, view, mode, normalize).0
}

/// Backpropagates `d_loss/d_z` through a recorded forward pass.
pub fn backprop(
    params: &EncoderParams,
    view: &AugmentedView,
    tape: &Tape,
    grad_z: &Matrix,
) -> EncoderGrads {
    let adj = NormAdj::from_view(view);
    let mut grads = EncoderGrads::zeros_like(params);

    // Through row normalization: z = y / max(|y|, eps-guard).
    let mut g = if let Some(norms) = &tape.norms {
        let mut g = Matrix::zeros(grad_z.rows(), grad_z.cols());
        for i in 0..grad_z.rows() {
            let y = tape.pre_norm.row(i);
            let gz = grad_z.row(i);
            let norm = norms[i];
            if norm < NORM_EPS {
                let denom = norm + NORM_EPS;
                for (o, &v) in g.row_mut(i).iter_mut().zip(gz) {
                    *o = v / denom;
                }
            } else {
                // z = y/n: dL/dy = (g - z (z . g)) / n.
                let z_dot_g = dot(y, gz) / norm;
                for ((o, &yv), &gv) in g.row_mut(i).iter_mut().zip(y).zip(gz) {
                    *o = (gv - yv / norm * z_dot_g) / norm;
                }
            }
        }
        g
    } else {
        grad_z.clone()
    };

    for (l, layer) in params.layers.iter().enumerate().rev() {
        let tape_l = &tape.layers[l];
        let mut g_skip: Option<Matrix> = None;
        if tape_l.residual {
            g_skip = Some(g.clone());
        }

        // ReLU.
        if tape_l.activated {
            for (gv, &pv) in g.data_mut().iter_mut().zip(tape_l.pre_act.data()) {
                if pv <= 0.0 {
                    *gv = 0.0;
                }
            }
        }

        // Batchnorm.
        if let (Some(bn), Some(gamma)) = (&tape_l.bn, &layer.bn_gamma) {
            let n = g.rows() as f64;
            let cols = g.cols();
            let grad_layer = &mut grads.layers[l];
            let mut sum_dxhat = vec![0.0; cols];
            let mut sum_dxhat_xhat = vec![0.0; cols];
            for i in 0..g.rows() {
                for j in 0..cols {
                    let gy = g.get(i, j);
                    let xh = bn.xhat.get(i, j);
                    grad_layer.bn_gamma.as_mut().unwrap()[j] += gy * xh;
                    grad_layer.bn_beta.as_mut().unwrap()[j] += gy;
                    let dxhat = gy * gamma[j];
                    sum_dxhat[j] += dxhat;
                    sum_dxhat_xhat[j] += dxhat * xh;
                }
            }
            let mut gx = Matrix::zeros(g.rows(), cols);
            for i in 0..g.rows() {
                for j in 0..cols {
                    let dxhat = g.get(i, j) * gamma[j];
                    let xh = bn.xhat.get(i, j);
                    let v = bn.inv_std[j]
                        * (dxhat - sum_dxhat[j] / n - xh * sum_dxhat_xhat[j] / n);
                    gx.set(i, j, v);
                }
            }
            let _ = &bn.mean; // mean folded into xhat
            g = gx;
        }

        // Linear: out = propagated * W + b.
        grads.layers[l].weight = tape_l.propagated.t_matmul(&g);
        if let Some(gb) = &mut grads.layers[l].bias {
            for i in 0..g.rows() {
                for (b, v) in gb.iter_mut().zip(g.row(i)) {
                    *b += v;
                }
            }
        }
        let g_prop = g.matmul_t(&layer.weight);

        // Propagation is symmetric, so the adjoint is another apply.
        let mut g_in = adj.apply(&g_prop);

        // Dropout.
        if let Some(scale) = &tape_l.dropout_scale {
            for (gv, sv) in g_in.data_mut().iter_mut().zip(scale.data()) {
                *gv *= sv;
            }
        }

        if let Some(skip) = g_skip {
            g_in.add_assign(&skip);
        }
        g = g_in;
    }

    grads
}

/// Runs a loss over the encoder output and returns analytic parameter
/// gradients. The closure receives the embedding matrix and must return the
/// loss value together with `d_loss/d_z`.
pub fn encoder_gradients<F>(
    params: &EncoderParams,
    graph: &TextRichGraph,
    view: &AugmentedView,
    mode: ForwardMode,
    normalize: bool,
    loss_fn: F,
) -> Result<(f64, EncoderGrads)>
where
    F: FnOnce(&Matrix) -> (f64, Matrix),
{
    let (z, tape) = encode_traced(params, graph, view, mode, normalize);
    let (loss, grad_z) = loss_fn(&z);
    let grads = backprop(params, view, &tape, &grad_z);
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::NonFinite("encoder gradients".into()));
    }
    Ok((loss, grads))
}

// ---------------------------------------------------------------------------
// Classification head
// ---------------------------------------------------------------------------

/// Linear map from embeddings to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    /// `d x num_classes`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LinearHead {
    pub fn init(dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng: Rng = rng::stream(seed, &[0x1e, 0xad]);
        let limit = (6.0 / (dim + num_classes) as f64).sqrt();
        let data = (0..dim * num_classes)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        LinearHead {
            weight: Matrix::from_vec(dim, num_classes, data),
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = self.weight.data().to_vec();
        flat.extend_from_slice(&self.bias);
        flat
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let wlen = self.weight.data().len();
        self.weight.data_mut().copy_from_slice(&flat[..wlen]);
        self.bias.copy_from_slice(&flat[wlen..]);
    }

    /// `z * W + b`.
    pub fn forward(&self, z: &Matrix) -> Matrix {
        let mut logits = z.matmul(&self.weight);
        for i in 0..logits.rows() {
            for (v, b) in logits.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        logits
    }

    /// Given `d_loss/d_logits`, returns `(d_weight, d_bias, d_z)`.
    pub fn backward(&self, z: &Matrix, grad_logits: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
        let g_w = z.t_matmul(grad_logits);
        let mut g_b = vec![0.0; self.bias.len()];
        for i in 0..grad_logits.rows() {
            for (b, v) in g_b.iter_mut().zip(grad_logits.row(i)) {
                *b += v;
            }
        }
        let g_z = grad_logits.matmul_t(&self.weight);
        (g_w, g_b, g_z)
    }
}

/// Computes class logits for every node embedding.
pub fn classify(head: &LinearHead, z: &Matrix) -> Matrix {
    head.forward(z)
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 4] = b"TGCK";

#[derive(Serialize, Deserialize)]
struct CheckpointSidecar {
    config: EncoderConfig,
    layer_shapes: Vec<(usize, usize)>,
    has_bias: bool,
    num_params: usize,
}

/// Writes `<path>` (binary header plus little-endian f32 blob) and
/// `<path>.json` (shape/config sidecar).
pub fn save_checkpoint(params: &EncoderParams, path: &Path) -> Result<()> {
    let flat = params.to_flat();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in &flat {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = CheckpointSidecar {
        config: params.config.clone(),
        layer_shapes: params
            .layers
            .iter()
            .map(|l| (l.weight.rows(), l.weight.cols()))
            .collect(),
        has_bias: params.layers.iter().all(|l| l.bias.is_some()),
        num_params: flat.len(),
    };
    let json = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(path.with_extension("ckpt.json"), json + "\n")?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<EncoderParams> {
    let sidecar_path = path.with_extension("ckpt.json");
    let sidecar: CheckpointSidecar =
        serde_json::from_str(&std::fs::read_to_string(&sidecar_path)?)?;
    let mut params = EncoderParams::init(sidecar.config)?;
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Other(format!(
            "{}: bad checkpoint magic",
            path.display()
        )));
    }
    let mut len_buf = [0u8; 8];
    r.read_exact(&mut len_buf)?;
    let len = u64::from_le_bytes(len_buf) as usize;
    if len != params.num_params() || len != sidecar.num_params {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint has {} params, config implies {}",
            len,
            params.num_params()
        )));
    }
    let mut blob = vec![0u8; len * 4];
    r.read_exact(&mut blob)?;
    let flat: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    params.assign_flat(&flat);
    Ok(params)
}
