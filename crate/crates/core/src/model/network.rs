use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{BlstmConfig, Direction, LstmBlocks, ParamLayout};
use crate::error::{Error, Result};
use crate::masks::Mask;

/// Range of the uniform weight initialisation.
pub const INIT_RANGE: f64 = 0.05;
pub const FORGET_BIAS_INIT: f64 = 1.0;

static PARAM_TOKENS: AtomicU64 = AtomicU64::new(1);

fn fresh_token() -> u64 {
    PARAM_TOKENS.fetch_add(1, Ordering::Relaxed)
}

/// Fixed per-bin input standardisation `(x - mean) * inv_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl FeatureNorm {
    /// Per-bin mean and standard deviation over all frames of all inputs.
    pub fn fit<'a>(features: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Self> {
        let mut sum: Option<Array1<f64>> = None;
        let mut sum_sq: Option<Array1<f64>> = None;
        let mut count = 0usize;
        for f in features {
            let s = f.sum_axis(Axis(0));
            let sq = f.mapv(|x| x * x).sum_axis(Axis(0));
            match (&mut sum, &mut sum_sq) {
                (Some(a), Some(b)) => {
                    if a.len() != s.len() {
                        return Err(Error::DimensionMismatch(
                            "feature widths differ".into(),
                        ));
                    }
                    *a += &s;
                    *b += &sq;
                }
                _ => {
                    sum = Some(s);
                    sum_sq = Some(sq);
                }
            }
            count += f.nrows();
        }
        let (Some(sum), Some(sum_sq)) = (sum, sum_sq) else {
            return Err(Error::EmptyDataset);
        };
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let inv_std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                1.0 / (var.sqrt() + 1e-8)
            })
            .collect();
        Ok(Self { mean, inv_std })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(shape: (usize, usize), rate: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    })
}

#[derive(Debug, Clone)]
struct DirectionCache {
    /// Post-activation gates, `K x 4H` in order input, forget, candidate, output.
    gates: Array2<f64>,
    cells: Array2<f64>,
    hidden: Array2<f64>,
}

/// Activations retained by [`BlstmNetwork::forward`] for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    token: u64,
    layer_inputs: Vec<Array2<f64>>,
    dropout: Vec<Option<Array2<f64>>>,
    directions: Vec<[DirectionCache; 2]>,
    top: Array2<f64>,
    pre_activation: Array2<f64>,
}

impl ForwardCache {
    pub fn num_frames(&self) -> usize {
        self.top.nrows()
    }
}

/// Bi-directional LSTM mask estimator with a ReLU output layer.
#[derive(Debug, Clone)]
pub struct BlstmNetwork {
    config: BlstmConfig,
    layout: ParamLayout,
    params: Vec<f64>,
    feature_norm: Option<FeatureNorm>,
    token: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl BlstmNetwork {
    /// Uniform(-0.05, 0.05) weights, zero biases except forget gates at 1.
    pub fn new(config: BlstmConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.cells_per_direction;
        for layer in 0..config.num_layers {
            for dir in Direction::BOTH {
                let lb = net.layout.lstm(layer, dir);
                for idx in [lb.input_weights, lb.recurrent_weights] {
                    let r = net.layout.block(idx).range();
                    for p in &mut net.params[r] {
                        *p = rng.random_range(-INIT_RANGE..INIT_RANGE);
                    }
                }
                let b = net.layout.block(lb.bias).offset;
                net.params[b + h..b + 2 * h].fill(FORGET_BIAS_INIT);
            }
        }
        let r = net.layout.output_weights().range();
        for p in &mut net.params[r] {
            *p = rng.random_range(-INIT_RANGE..INIT_RANGE);
        }
        Ok(net)
    }

    /// All parameters zero.
    pub fn zeros(config: BlstmConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let params = vec![0.0; layout.len()];
        Ok(Self {
            config,
            layout,
            params,
            feature_norm: None,
            token: fresh_token(),
        })
    }

    pub fn from_parameters(
        config: BlstmConfig,
        params: Vec<f64>,
        feature_norm: Option<FeatureNorm>,
    ) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if params.len() != net.layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters for a layout of {}",
                params.len(),
                net.layout.len()
            )));
        }
        net.params = params;
        net.set_feature_norm(feature_norm)?;
        Ok(net)
    }

    pub fn config(&self) -> &BlstmConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn parameters_mut(&mut self) -> &mut [f64] {
        self.token = fresh_token();
        &mut self.params
    }

    pub fn feature_norm(&self) -> Option<&FeatureNorm> {
        self.feature_norm.as_ref()
    }

    pub fn set_feature_norm(&mut self, norm: Option<FeatureNorm>) -> Result<()> {
        if let Some(n) = &norm {
            if n.mean.len() != self.config.input_dim || n.inv_std.len() != self.config.input_dim {
                return Err(Error::DimensionMismatch(format!(
                    "feature normalisation width {} vs input {}",
                    n.mean.len(),
                    self.config.input_dim
                )));
            }
        }
        self.feature_norm = norm;
        self.token = fresh_token();
        Ok(())
    }

    fn matrix(&self, idx: usize) -> ArrayView2<'_, f64> {
        let b = self.layout.block(idx);
        ArrayView2::from_shape((b.rows, b.cols), &self.params[b.range()])
            .expect("layout block matches parameter slice")
    }

    fn vector(&self, idx: usize) -> ArrayView1<'_, f64> {
        let b = self.layout.block(idx);
        ArrayView1::from(&self.params[b.range()])
    }

    fn run_direction(&self, lb: LstmBlocks, x: &Array2<f64>, dir: Direction) -> DirectionCache {
        let wx = self.matrix(lb.input_weights);
        let wh = self.matrix(lb.recurrent_weights);
        let bias = self.vector(lb.bias);
        let k = x.nrows();
        let h = wh.ncols();

        let mut z = x.dot(&wx.t());
        z += &bias;
        let mut gates = Array2::zeros((k, 4 * h));
        let mut cells = Array2::zeros((k, h));
        let mut hidden = Array2::zeros((k, h));
        let mut h_prev = Array1::<f64>::zeros(h);
        let mut c_prev = Array1::<f64>::zeros(h);
        for step in 0..k {
            let t = match dir {
                Direction::Forward => step,
                Direction::Backward => k - 1 - step,
            };
            let rec = wh.dot(&h_prev);
            let zt = z.row(t);
            let mut g_row = gates.row_mut(t);
            for j in 0..h {
                let i = sigmoid(zt[j] + rec[j]);
                let f = sigmoid(zt[h + j] + rec[h + j]);
                let g = (zt[2 * h + j] + rec[2 * h + j]).tanh();
                let o = sigmoid(zt[3 * h + j] + rec[3 * h + j]);
                let c = f * c_prev[j] + i * g;
                g_row[j] = i;
                g_row[h + j] = f;
                g_row[2 * h + j] = g;
                g_row[3 * h + j] = o;
                c_prev[j] = c;
                h_prev[j] = o * c.tanh();
            }
            cells.row_mut(t).assign(&c_prev);
            hidden.row_mut(t).assign(&h_prev);
        }
        DirectionCache {
            gates,
            cells,
            hidden,
        }
    }

    /// Computes one non-negative mask per output source.
    ///
    /// In `train_mode`, inverted dropout drawn from `seed` is applied to the
    /// input of every recurrent layer after the first.
    pub fn forward(
        &self,
        features: &Array2<f64>,
        train_mode: bool,
        seed: u64,
    ) -> Result<(Vec<Mask>, ForwardCache)> {
        let cfg = &self.config;
        if features.ncols() != cfg.input_dim || features.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "features {:?}, network expects K x {}",
                features.dim(),
                cfg.input_dim
            )));
        }
        let k = features.nrows();
        let h = cfg.cells_per_direction;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut input = match &self.feature_norm {
            Some(n) => n.apply(features),
            None => features.clone(),
        };
        let mut layer_inputs = Vec::with_capacity(cfg.num_layers);
        let mut dropout = Vec::with_capacity(cfg.num_layers);
        let mut directions = Vec::with_capacity(cfg.num_layers);
        for layer in 0..cfg.num_layers {
            let mask = if layer > 0 && train_mode && cfg.dropout_rate > 0.0 {
                let m = dropout_mask(input.dim(), cfg.dropout_rate, &mut rng);
                input *= &m;
                Some(m)
            } else {
                None
            };
            let caches = Direction::BOTH
                .map(|d| self.run_direction(self.layout.lstm(layer, d), &input, d));
            let mut out = Array2::zeros((k, 2 * h));
            out.slice_mut(s![.., ..h]).assign(&caches[0].hidden);
            out.slice_mut(s![.., h..]).assign(&caches[1].hidden);
            layer_inputs.push(std::mem::replace(&mut input, out));
            dropout.push(mask);
            directions.push(caches);
        }
        let top = input;

        let wo = self.matrix(self.layout.output_weights_index());
        let bo = self.vector(self.layout.output_bias_index());
        let mut pre = top.dot(&wo.t());
        pre += &bo;
        let f = cfg.output_dim_per_source;
        let masks = (0..cfg.output_sources)
            .map(|s| {
                Mask::new(
                    pre.slice(s![.., s * f..(s + 1) * f]).mapv(|v| v.max(0.0)),
                    s,
                )
            })
            .collect();
        Ok((
            masks,
            ForwardCache {
                token: self.token,
                layer_inputs,
                dropout,
                directions,
                top,
                pre_activation: pre,
            },
        ))
    }

    /// Inference-mode forward pass.
    pub fn infer(&self, features: &Array2<f64>) -> Result<Vec<Mask>> {
        Ok(self.forward(features, false, 0)?.0)
    }

    #[allow(clippy::too_many_arguments)]
    fn backprop_direction(
        &self,
        lb: LstmBlocks,
        x: &Array2<f64>,
        cache: &DirectionCache,
        dh_out: ArrayView2<'_, f64>,
        dir: Direction,
        grad: &mut [f64],
    ) -> Array2<f64> {
        let wx = self.matrix(lb.input_weights);
        let wh = self.matrix(lb.recurrent_weights);
        let k = x.nrows();
        let h = wh.ncols();

        let prev_index = |t: usize| -> Option<usize> {
            match dir {
                Direction::Forward => t.checked_sub(1),
                Direction::Backward => (t + 1 < k).then_some(t + 1),
            }
        };

        let mut dz = Array2::<f64>::zeros((k, 4 * h));
        let mut dh_next = Array1::<f64>::zeros(h);
        let mut dc_next = Array1::<f64>::zeros(h);
        for step in (0..k).rev() {
            let t = match dir {
                Direction::Forward => step,
                Direction::Backward => k - 1 - step,
            };
            let prev = prev_index(t);
            let gates = cache.gates.row(t);
            let mut dz_row = dz.row_mut(t);
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = cache.cells[[t, j]].tanh();
                let c_prev = prev.map_or(0.0, |p| cache.cells[[p, j]]);
                let dh = dh_out[[t, j]] + dh_next[j];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dz_row[j] = dc * g * i * (1.0 - i);
                dz_row[h + j] = dc * c_prev * f * (1.0 - f);
                dz_row[2 * h + j] = dc * i * (1.0 - g * g);
                dz_row[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            dh_next = wh.t().dot(&dz.row(t));
        }

        let mut h_prev = Array2::<f64>::zeros((k, h));
        for t in 0..k {
            if let Some(p) = prev_index(t) {
                h_prev.row_mut(t).assign(&cache.hidden.row(p));
            }
        }
        let dzt = dz.t();
        accumulate(grad, self.layout.block(lb.input_weights).offset, &dzt.dot(x));
        accumulate(
            grad,
            self.layout.block(lb.recurrent_weights).offset,
            &dzt.dot(&h_prev),
        );
        let db = dz.sum_axis(Axis(0));
        let off = self.layout.block(lb.bias).offset;
        for (g, v) in grad[off..off + db.len()].iter_mut().zip(db.iter()) {
            *g += v;
        }
        dz.dot(&wx)
    }

    /// Gradient of a scalar loss with respect to all parameters, given the
    /// loss gradient with respect to each output mask.
    pub fn backward(&self, cache: &ForwardCache, mask_grads: &[Array2<f64>]) -> Result<Vec<f64>> {
        if cache.token != self.token {
            return Err(Error::StaleCache);
        }
        let cfg = &self.config;
        let k = cache.num_frames();
        let f = cfg.output_dim_per_source;
        let h = cfg.cells_per_direction;
        if mask_grads.len() != cfg.output_sources
            || mask_grads.iter().any(|g| g.dim() != (k, f))
        {
            return Err(Error::DimensionMismatch(format!(
                "expected {} mask gradients of shape ({k}, {f})",
                cfg.output_sources
            )));
        }

        let mut grad = vec![0.0; self.params.len()];
        let mut d_pre = Array2::<f64>::zeros((k, cfg.output_dim()));
        for (s, g) in mask_grads.iter().enumerate() {
            let mut block = d_pre.slice_mut(s![.., s * f..(s + 1) * f]);
            let pre = cache.pre_activation.slice(s![.., s * f..(s + 1) * f]);
            ndarray::Zip::from(&mut block)
                .and(g)
                .and(&pre)
                .for_each(|d, &g, &p| *d = if p > 0.0 { g } else { 0.0 });
        }
        let wo = self.matrix(self.layout.output_weights_index());
        accumulate(
            &mut grad,
            self.layout.output_weights().offset,
            &d_pre.t().dot(&cache.top),
        );
        let dbo = d_pre.sum_axis(Axis(0));
        let off = self.layout.output_bias().offset;
        for (g, v) in grad[off..off + dbo.len()].iter_mut().zip(dbo.iter()) {
            *g += v;
        }
        let mut d_top = d_pre.dot(&wo);

        for layer in (0..cfg.num_layers).rev() {
            let x = &cache.layer_inputs[layer];
            let mut dx = Array2::<f64>::zeros(x.dim());
            for dir in Direction::BOTH {
                let cols = match dir {
                    Direction::Forward => s![.., ..h],
                    Direction::Backward => s![.., h..],
                };
                dx += &self.backprop_direction(
                    self.layout.lstm(layer, dir),
                    x,
                    &cache.directions[layer][dir.index()],
                    d_top.slice(cols),
                    dir,
                    &mut grad,
                );
            }
            if let Some(m) = &cache.dropout[layer] {
                dx *= m;
            }
            d_top = dx;
        }
        Ok(grad)
    }

    /// The network with forward and backward directions exchanged. Running
    /// it on a time-reversed input yields the time-reversed output.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        out.token = fresh_token();
        let h = self.config.cells_per_direction;
        let swap_halves = |params: &mut [f64], src: &[f64], rows: usize| {
            // columns [0, h) <-> [h, 2h) of a rows x 2h block
            for r in 0..rows {
                let row = &src[r * 2 * h..(r + 1) * 2 * h];
                let dst = &mut params[r * 2 * h..(r + 1) * 2 * h];
                dst[..h].copy_from_slice(&row[h..]);
                dst[h..].copy_from_slice(&row[..h]);
            }
        };
        for layer in 0..self.config.num_layers {
            let fwd = self.layout.lstm(layer, Direction::Forward);
            let bwd = self.layout.lstm(layer, Direction::Backward);
            for (a, b) in [
                (fwd.input_weights, bwd.input_weights),
                (fwd.recurrent_weights, bwd.recurrent_weights),
                (fwd.bias, bwd.bias),
            ] {
                let (ra, rb) = (self.layout.block(a).range(), self.layout.block(b).range());
                let is_input = a == fwd.input_weights && layer > 0;
                if is_input {
                    let rows = self.layout.block(a).rows;
                    swap_halves(&mut out.params[ra.clone()], &self.params[rb.clone()], rows);
                    swap_halves(&mut out.params[rb], &self.params[ra], rows);
                } else {
                    out.params[ra.clone()].copy_from_slice(&self.params[rb.clone()]);
                    out.params[rb].copy_from_slice(&self.params[ra]);
                }
            }
        }
        let wo = self.layout.output_weights();
        swap_halves(&mut out.params[wo.range()], &self.params[wo.range()], wo.rows);
        out
    }
}

fn accumulate(grad: &mut [f64], offset: usize, block: &Array2<f64>) {
    for (g, v) in grad[offset..offset + block.len()].iter_mut().zip(block.iter()) {
        *g += v;
    }
}

impl ParamLayout {
    fn output_weights_index(&self) -> usize {
        self.blocks.len() - 2
    }

    fn output_bias_index(&self) -> usize {
        self.blocks.len() - 1
    }
}
