//! Recurrent graph-convolutional forecaster.
//!
//! Each layer is a GConvLSTM cell whose four gate pre-activations are one
//! Chebyshev convolution over the concatenation `[x_t, h_{t-1}]`. Layers are
//! stacked by feeding the hidden sequence of one layer as the input sequence
//! of the next. The last hidden state goes through a ReLU and a linear head
//! shared by all nodes. Gradients are computed by hand-written
//! backpropagation through time.

use ndarray::{
    concatenate, linalg::general_mat_mul, s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cheb::{cheb_basis, cheb_basis_backward, ChebOperator};
use super::config::{LossMode, ModelConfig};
use super::weights::{manifest_for, ModelWeights};
use crate::dataset::WindowBatch;
use crate::error::{Error, Result};
use crate::graph::BatchedGraph;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Borrowed parameters of one recurrent layer.
#[derive(Debug, Clone)]
pub struct LayerParams<'a> {
    /// `kc` matrices of shape `(F_in + d) x 4d`; gate columns are `[i, f, g, o]`.
    pub cheb: Vec<ArrayView2<'a, f64>>,
    pub bias: ArrayView1<'a, f64>,
}

impl LayerParams<'_> {
    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub cheb: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
}

impl LayerGrads {
    fn zeros_like(p: &LayerParams<'_>) -> Self {
        Self {
            cheb: p.cheb.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            bias: Array1::zeros(p.bias.len()),
        }
    }
}

/// Everything the backward pass of one step needs.
#[derive(Debug, Clone)]
pub struct StepCache {
    basis: Vec<Array2<f64>>,
    /// Activated gates `[i, f, g, o]`, `n x 4d`.
    gates: Array2<f64>,
    c_prev: Array2<f64>,
    tanh_c: Array2<f64>,
    input_dim: usize,
}

/// One GConvLSTM step; returns `(h', c')`.
pub fn gconv_lstm_step(
    x_t: ArrayView2<f64>,
    h: ArrayView2<f64>,
    c: ArrayView2<f64>,
    op: &ChebOperator,
    params: &LayerParams<'_>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (h, c, _) = step_forward(x_t, h, c, op, params)?;
    Ok((h, c))
}

pub fn step_forward(
    x_t: ArrayView2<f64>,
    h: ArrayView2<f64>,
    c: ArrayView2<f64>,
    op: &ChebOperator,
    params: &LayerParams<'_>,
) -> Result<(Array2<f64>, Array2<f64>, StepCache)> {
    let n = op.num_nodes();
    let d = params.hidden();
    if x_t.nrows() != n || h.dim() != (n, d) || c.dim() != (n, d) {
        return Err(Error::shape(format!(
            "step input {:?}, state {:?}/{:?} for {n} nodes and hidden {d}",
            x_t.dim(),
            h.dim(),
            c.dim()
        )));
    }
    let width = x_t.ncols() + d;
    if params.cheb.iter().any(|w| w.dim() != (width, 4 * d)) {
        return Err(Error::shape(format!(
            "gate weights must be {width} x {}",
            4 * d
        )));
    }
    let z = concatenate(Axis(1), &[x_t, h]).expect("rows agree");
    let basis = cheb_basis(z.view(), op, params.cheb.len());
    let mut gates = Array2::zeros((n, 4 * d));
    for (t, w) in basis.iter().zip(&params.cheb) {
        general_mat_mul(1.0, t, w, 1.0, &mut gates);
    }
    gates += &params.bias;
    for mut row in gates.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if (2 * d..3 * d).contains(&j) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
    }
    let i_g = gates.slice(s![.., 0..d]);
    let f_g = gates.slice(s![.., d..2 * d]);
    let g_g = gates.slice(s![.., 2 * d..3 * d]);
    let o_g = gates.slice(s![.., 3 * d..4 * d]);
    let c_new = &f_g * &c + &i_g * &g_g;
    let tanh_c = c_new.mapv(f64::tanh);
    let h_new = &o_g * &tanh_c;
    let cache = StepCache {
        basis,
        gates,
        c_prev: c.to_owned(),
        tanh_c,
        input_dim: x_t.ncols(),
    };
    Ok((h_new, c_new, cache))
}

/// Backward through one step. Accumulates parameter gradients into `grads`
/// and returns `(dx_t, dh_prev, dc_prev)`.
pub fn step_backward(
    cache: &StepCache,
    dh: ArrayView2<f64>,
    dc: ArrayView2<f64>,
    op: &ChebOperator,
    params: &LayerParams<'_>,
    grads: &mut LayerGrads,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let d = params.hidden();
    let n = dh.nrows();
    let gates = &cache.gates;
    let mut dpre = Array2::<f64>::zeros((n, 4 * d));
    let mut dc_prev = Array2::<f64>::zeros((n, d));
    for r in 0..n {
        for j in 0..d {
            let (i, f, g, o) = (
                gates[[r, j]],
                gates[[r, d + j]],
                gates[[r, 2 * d + j]],
                gates[[r, 3 * d + j]],
            );
            let tc = cache.tanh_c[[r, j]];
            let dhv = dh[[r, j]];
            let dct = dc[[r, j]] + dhv * o * (1.0 - tc * tc);
            dpre[[r, j]] = dct * g * i * (1.0 - i);
            dpre[[r, d + j]] = dct * cache.c_prev[[r, j]] * f * (1.0 - f);
            dpre[[r, 2 * d + j]] = dct * i * (1.0 - g * g);
            dpre[[r, 3 * d + j]] = dhv * tc * o * (1.0 - o);
            dc_prev[[r, j]] = dct * f;
        }
    }
    grads.bias += &dpre.sum_axis(Axis(0));
    let mut d_basis = Vec::with_capacity(params.cheb.len());
    for ((t, w), gw) in cache
        .basis
        .iter()
        .zip(&params.cheb)
        .zip(grads.cheb.iter_mut())
    {
        general_mat_mul(1.0, &t.t(), &dpre, 1.0, gw);
        d_basis.push(dpre.dot(&w.t()));
    }
    let dz = cheb_basis_backward(op, d_basis);
    let dx = dz.slice(s![.., 0..cache.input_dim]).to_owned();
    let dh_prev = dz.slice(s![.., cache.input_dim..]).to_owned();
    (dx, dh_prev, dc_prev)
}

/// Loss value and gradient for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// Objective actually minimised (MSE plus penalty).
    pub loss: f64,
    pub mse: f64,
    pub grad: Vec<f64>,
}

/// `mean((pred - target)^2)`, plus `λ ||ω - ω*||²` in regularized mode.
pub fn loss(
    pred: &Array3<f64>,
    target: &Array3<f64>,
    mode: LossMode,
    weights: &[f64],
    anchor: Option<&[f64]>,
) -> Result<f64> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let mse = (pred - target).mapv(|v| v * v).mean().unwrap_or(0.0);
    Ok(mse + penalty(mode, weights, anchor)?)
}

fn penalty(mode: LossMode, weights: &[f64], anchor: Option<&[f64]>) -> Result<f64> {
    match (mode, anchor) {
        (LossMode::Mse, _) => Ok(0.0),
        (LossMode::MseReg { lambda }, Some(anchor)) => {
            if anchor.len() != weights.len() {
                return Err(Error::shape(format!(
                    "anchor has {} weights, model {}",
                    anchor.len(),
                    weights.len()
                )));
            }
            Ok(lambda
                * weights
                    .iter()
                    .zip(anchor)
                    .map(|(w, a)| (w - a) * (w - a))
                    .sum::<f64>())
        }
        (LossMode::MseReg { .. }, None) => Err(Error::InvalidArgument(
            "regularized loss needs anchor weights".into(),
        )),
    }
}

/// Stacked GConvLSTM layers with a ReLU + linear forecasting head.
#[derive(Debug, Clone, PartialEq)]
pub struct GConvLstm {
    cfg: ModelConfig,
    weights: ModelWeights,
}

struct Forward {
    /// `caches[layer][t]`.
    caches: Vec<Vec<StepCache>>,
    /// Last hidden state of the top layer, before the ReLU.
    h_last: Array2<f64>,
    pred: Array2<f64>,
}

impl GConvLstm {
    /// Glorot-uniform weights, zero biases.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut weights = ModelWeights::zeros(manifest_for(&cfg));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = weights.manifest().to_vec();
        for (i, spec) in specs.iter().enumerate() {
            if spec.shape.len() != 2 {
                continue;
            }
            let bound = (6.0 / (spec.shape[0] + spec.shape[1]) as f64).sqrt();
            let off = weights.offset(i);
            for v in &mut weights.flat_mut()[off..off + spec.len()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        Ok(Self { cfg, weights })
    }

    pub fn zeros(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            weights: ModelWeights::zeros(manifest_for(&cfg)),
        })
    }

    pub fn from_weights(cfg: ModelConfig, weights: ModelWeights) -> Result<Self> {
        cfg.validate()?;
        if weights.manifest() != manifest_for(&cfg).as_slice() {
            return Err(Error::shape(
                "weights manifest does not match model config".to_string(),
            ));
        }
        Ok(Self { cfg, weights })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn flat(&self) -> &[f64] {
        self.weights.flatten()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        self.weights.set_flat(values)
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn tensor_index(&self, layer: usize) -> usize {
        layer * (self.cfg.cheb_order + 1)
    }

    fn matrix(&self, idx: usize) -> ArrayView2<'_, f64> {
        let shape = &self.weights.manifest()[idx].shape;
        ArrayView2::from_shape((shape[0], shape[1]), self.weights.tensor(idx))
            .expect("manifest shape")
    }

    pub fn layer_params(&self, layer: usize) -> LayerParams<'_> {
        let base = self.tensor_index(layer);
        LayerParams {
            cheb: (0..self.cfg.cheb_order)
                .map(|k| self.matrix(base + k))
                .collect(),
            bias: ArrayView1::from(self.weights.tensor(base + self.cfg.cheb_order)),
        }
    }

    fn head(&self) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let base = self.tensor_index(self.cfg.depth);
        (
            self.matrix(base),
            ArrayView1::from(self.weights.tensor(base + 1)),
        )
    }

    fn check_input(&self, x: &Array3<f64>, graph: &BatchedGraph) -> Result<()> {
        let (n, f, h) = x.dim();
        if n != graph.num_nodes {
            return Err(Error::shape(format!(
                "{n} node rows for a {}-node graph",
                graph.num_nodes
            )));
        }
        if f != self.cfg.feature_dim || h != self.cfg.history {
            return Err(Error::shape(format!(
                "input features/history ({f}, {h}) vs model ({}, {})",
                self.cfg.feature_dim, self.cfg.history
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Array3<f64>, op: &ChebOperator, keep_cache: bool) -> Result<Forward> {
        let n = x.len_of(Axis(0));
        let d = self.cfg.embed_dim;
        let mut inputs: Vec<Array2<f64>> = (0..self.cfg.history)
            .map(|t| x.index_axis(Axis(2), t).to_owned())
            .collect();
        let mut caches = Vec::with_capacity(self.cfg.depth);
        for layer in 0..self.cfg.depth {
            let params = self.layer_params(layer);
            let mut h = Array2::zeros((n, d));
            let mut c = Array2::zeros((n, d));
            let mut layer_cache = Vec::with_capacity(if keep_cache { inputs.len() } else { 0 });
            let mut outputs = Vec::with_capacity(inputs.len());
            for x_t in &inputs {
                let (h_new, c_new, cache) =
                    step_forward(x_t.view(), h.view(), c.view(), op, &params)?;
                if keep_cache {
                    layer_cache.push(cache);
                }
                h = h_new;
                c = c_new;
                outputs.push(h.clone());
            }
            caches.push(layer_cache);
            inputs = outputs;
        }
        let h_last = inputs.pop().expect("history >= 1");
        let (w, b) = self.head();
        let pred = h_last.mapv(|v| v.max(0.0)).dot(&w) + b;
        Ok(Forward {
            caches,
            h_last,
            pred,
        })
    }

    fn shape_prediction(&self, pred: Array2<f64>) -> Array3<f64> {
        let n = pred.nrows();
        pred.into_shape_with_order((n, self.cfg.feature_dim, self.cfg.horizon))
            .expect("head width is F * horizon")
    }

    /// Predictions `(n_nodes, F, horizon)` for raw inputs on a batched graph.
    pub fn forward_raw(&self, x: &Array3<f64>, graph: &BatchedGraph) -> Result<Array3<f64>> {
        self.check_input(x, graph)?;
        let op = ChebOperator::from_batched(graph)?;
        let fwd = self.run(x, &op, false)?;
        Ok(self.shape_prediction(fwd.pred))
    }

    pub fn forward(&self, batch: &WindowBatch) -> Result<Array3<f64>> {
        if batch.y.len_of(Axis(2)) != self.cfg.horizon {
            return Err(Error::shape(
                "batch horizon differs from model horizon".to_string(),
            ));
        }
        self.forward_raw(&batch.x, &batch.graph)
    }

    /// Loss and exact gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        batch: &WindowBatch,
        mode: LossMode,
        anchor: Option<&[f64]>,
    ) -> Result<LossGrad> {
        self.loss_and_grad_raw(&batch.x, &batch.y, &batch.graph, mode, anchor)
    }

    pub fn loss_and_grad_raw(
        &self,
        x: &Array3<f64>,
        y: &Array3<f64>,
        graph: &BatchedGraph,
        mode: LossMode,
        anchor: Option<&[f64]>,
    ) -> Result<LossGrad> {
        self.check_input(x, graph)?;
        let n = x.len_of(Axis(0));
        if y.dim() != (n, self.cfg.feature_dim, self.cfg.horizon) {
            return Err(Error::shape(format!(
                "target {:?} does not match model output",
                y.dim()
            )));
        }
        let op = ChebOperator::from_batched(graph)?;
        let fwd = self.run(x, &op, true)?;
        let target = y
            .to_owned()
            .into_shape_with_order((n, self.cfg.output_dim()))
            .expect("contiguous target");
        let resid = &fwd.pred - &target;
        let numel = resid.len() as f64;
        let mse = resid.iter().map(|v| v * v).sum::<f64>() / numel;
        let pen = penalty(mode, self.flat(), anchor)?;
        let total = mse + pen;
        if !total.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {total}")));
        }

        let mut grad = vec![0.0; self.num_params()];
        let dpred = resid * (2.0 / numel);
        let (w_head, _) = self.head();
        let relu = fwd.h_last.mapv(|v| v.max(0.0));
        let head_base = self.tensor_index(self.cfg.depth);
        {
            let off = self.weights.offset(head_base);
            let gw = relu.t().dot(&dpred);
            grad[off..off + gw.len()].copy_from_slice(gw.as_slice().expect("standard layout"));
            let off = self.weights.offset(head_base + 1);
            let gb = dpred.sum_axis(Axis(0));
            grad[off..off + gb.len()].copy_from_slice(gb.as_slice().expect("standard layout"));
        }
        let mut dh_top = dpred.dot(&w_head.t());
        dh_top.zip_mut_with(&fwd.h_last, |g, &h| {
            if h <= 0.0 {
                *g = 0.0;
            }
        });

        let d = self.cfg.embed_dim;
        let steps = self.cfg.history;
        // Gradient arriving at each hidden state from the layer above.
        let mut dh_ext: Vec<Array2<f64>> = vec![Array2::zeros((n, d)); steps];
        dh_ext[steps - 1] = dh_top;
        for layer in (0..self.cfg.depth).rev() {
            let params = self.layer_params(layer);
            let mut lg = LayerGrads::zeros_like(&params);
            let mut dh_next = Array2::<f64>::zeros((n, d));
            let mut dc_next = Array2::<f64>::zeros((n, d));
            let mut dx_seq: Vec<Array2<f64>> = Vec::with_capacity(steps);
            for t in (0..steps).rev() {
                let dh = &dh_ext[t] + &dh_next;
                let (dx, dh_prev, dc_prev) = step_backward(
                    &fwd.caches[layer][t],
                    dh.view(),
                    dc_next.view(),
                    &op,
                    &params,
                    &mut lg,
                );
                dx_seq.push(dx);
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            dx_seq.reverse();
            dh_ext = dx_seq;
            let base = self.tensor_index(layer);
            for (k, gk) in lg.cheb.iter().enumerate() {
                let off = self.weights.offset(base + k);
                grad[off..off + gk.len()].copy_from_slice(gk.as_slice().expect("standard layout"));
            }
            let off = self.weights.offset(base + self.cfg.cheb_order);
            grad[off..off + lg.bias.len()]
                .copy_from_slice(lg.bias.as_slice().expect("standard layout"));
        }
        if let (LossMode::MseReg { lambda }, Some(anchor)) = (mode, anchor) {
            for ((g, w), a) in grad.iter_mut().zip(self.flat()).zip(anchor) {
                *g += 2.0 * lambda * (w - a);
            }
        }
        Ok(LossGrad {
            loss: total,
            mse,
            grad,
        })
    }
}
