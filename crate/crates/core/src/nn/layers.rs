use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, ParamId, ParamRole, ParamStore, Tensor};
use crate::{Error, Result};

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Infer,
}

/// Serializable description of one graph node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        units: usize,
    },
    Relu,
    Batchnorm,
    Flatten,
    Sigmoid,
    /// Appends `width` auxiliary values to the incoming features.
    Concat {
        width: usize,
    },
    /// Applied to logits inside the loss and at prediction time.
    Softmax,
}

pub fn conv_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Config("kernel and stride must be positive".into()));
    }
    let padded = len + 2 * padding;
    if padded < kernel {
        return Err(Error::Shape(format!(
            "input length {len} with padding {padding} is shorter than kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn glorot(
    store: &mut ParamStore,
    name: String,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> ParamId {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-limit..limit);
    }
    store.add(name, ParamRole::Weight, t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub kernel_width: usize,
    pub in_channels: usize,
    pub filters: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    /// Kernel `[k, in_channels, filters]`, Glorot-uniform; zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        filters: usize,
        kernel_width: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let kernel = glorot(
            store,
            format!("{prefix}.kernel"),
            &[kernel_width, in_channels, filters],
            kernel_width * in_channels,
            kernel_width * filters,
            rng,
        );
        let bias = store.add(
            format!("{prefix}.bias"),
            ParamRole::Bias,
            Tensor::zeros(&[filters]),
        );
        Self {
            kernel,
            bias,
            kernel_width,
            in_channels,
            filters,
            stride,
            padding,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub units: usize,
}

impl Dense {
    /// Weight `[inputs, units]`, Glorot-uniform; zero bias.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        inputs: usize,
        units: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let weight = glorot(
            store,
            format!("{prefix}.weight"),
            &[inputs, units],
            inputs,
            units,
            rng,
        );
        let bias = store.add(
            format!("{prefix}.bias"),
            ParamRole::Bias,
            Tensor::zeros(&[units]),
        );
        Self {
            weight,
            bias,
            inputs,
            units,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, prefix: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(
                format!("{prefix}.gamma"),
                ParamRole::Gamma,
                Tensor::filled(&[channels], 1.0),
            ),
            beta: store.add(
                format!("{prefix}.beta"),
                ParamRole::Beta,
                Tensor::zeros(&[channels]),
            ),
            running_mean: store.add(
                format!("{prefix}.running_mean"),
                ParamRole::RunningMean,
                Tensor::zeros(&[channels]),
            ),
            running_var: store.add(
                format!("{prefix}.running_var"),
                ParamRole::RunningVar,
                Tensor::filled(&[channels], 1.0),
            ),
            channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu,
    Sigmoid,
    Flatten,
}

/// Batch statistics observed by a batch-norm layer in training mode, to be
/// folded into its running averages.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormStats {
    pub fn apply(&self, store: &mut ParamStore) {
        let m = BATCHNORM_MOMENTUM;
        for (r, b) in store
            .get_mut(self.running_mean)
            .data_mut()
            .iter_mut()
            .zip(&self.mean)
        {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, b) in store
            .get_mut(self.running_var)
            .data_mut()
            .iter_mut()
            .zip(&self.var)
        {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

/// What a layer keeps from its forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum Cache {
    Input(Tensor),
    Output(Tensor),
    Shape(Vec<usize>),
    Norm {
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
        stats: Option<BatchNormStats>,
    },
}

fn expect_rank(x: &Tensor, rank: usize, what: &str) -> Result<()> {
    if x.shape().len() != rank {
        return Err(Error::Shape(format!(
            "{what} expects rank {rank}, got shape {:?}",
            x.shape()
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn conv_forward_raw(
    x: &[f64],
    batch: usize,
    len: usize,
    cin: usize,
    kernel: &[f64],
    k: usize,
    cout: usize,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
    lout: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * lout * cout];
    for b in 0..batch {
        let xb = &x[b * len * cin..(b + 1) * len * cin];
        for t in 0..lout {
            let o = &mut out[(b * lout + t) * cout..(b * lout + t + 1) * cout];
            if let Some(bias) = bias {
                o.copy_from_slice(bias);
            }
            for j in 0..k {
                let pos = (t * stride + j) as isize - pad as isize;
                if pos < 0 || pos as usize >= len {
                    continue;
                }
                let xin = &xb[pos as usize * cin..(pos as usize + 1) * cin];
                for (ci, &xv) in xin.iter().enumerate() {
                    let row = &kernel[(j * cin + ci) * cout..(j * cin + ci + 1) * cout];
                    for (ov, kv) in o.iter_mut().zip(row) {
                        *ov += xv * kv;
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlation of a single `[len, ch_in]` signal with a
/// `[k, ch_in, ch_out]` kernel, no bias.
pub fn conv1d_forward(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    expect_rank(input, 2, "conv1d input")?;
    expect_rank(kernel, 3, "conv1d kernel")?;
    let (len, cin) = (input.shape()[0], input.shape()[1]);
    let (k, kin, cout) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if kin != cin {
        return Err(Error::Shape(format!(
            "kernel expects {kin} input channels, input has {cin}"
        )));
    }
    let lout = conv_output_len(len, k, stride, padding)?;
    let out = conv_forward_raw(
        input.data(),
        1,
        len,
        cin,
        kernel.data(),
        k,
        cout,
        None,
        stride,
        padding,
        lout,
    );
    Tensor::new(vec![lout, cout], out)
}

/// Normalizes `input` per channel (last axis). In training mode batch
/// statistics are used and returned; in inference mode the running ones.
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
) -> Result<(Tensor, Option<(Vec<f64>, Vec<f64>)>)> {
    let (y, xhat_inv, stats) = batchnorm_core(input, gamma, beta, running_mean, running_var, mode)?;
    drop(xhat_inv);
    Ok((y, stats))
}

type NormParts = (Vec<f64>, Vec<f64>);

fn batchnorm_core(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &Tensor,
    running_var: &Tensor,
    mode: Mode,
) -> Result<(Tensor, NormParts, Option<(Vec<f64>, Vec<f64>)>)> {
    let c = *input.shape().last().unwrap_or(&0);
    if gamma.len() != c || beta.len() != c || running_mean.len() != c || running_var.len() != c {
        return Err(Error::Shape(format!(
            "batchnorm over {c} channels with mismatched parameters"
        )));
    }
    if mode == Mode::Train && input.batch() < 2 {
        return Err(Error::BatchTooSmall(input.batch()));
    }
    let x = input.data();
    let rows = x.len() / c.max(1);
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows as f64);
            let mut var = vec![0.0; c];
            for row in x.chunks_exact(c) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= rows as f64);
            (mean, var)
        }
        Mode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };
    let inv_std: Vec<f64> = var
        .iter()
        .map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt())
        .collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for ((row, hrow), yrow) in x
        .chunks_exact(c)
        .zip(xhat.chunks_exact_mut(c))
        .zip(y.chunks_exact_mut(c))
    {
        for ch in 0..c {
            let h = (row[ch] - mean[ch]) * inv_std[ch];
            hrow[ch] = h;
            yrow[ch] = gamma.data()[ch] * h + beta.data()[ch];
        }
    }
    let stats = (mode == Mode::Train).then_some((mean, var));
    Ok((
        Tensor::new(input.shape().to_vec(), y)?,
        (xhat, inv_std),
        stats,
    ))
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv1d(c) => LayerSpec::Conv1d {
                filters: c.filters,
                kernel: c.kernel_width,
                stride: c.stride,
                padding: c.padding,
            },
            Layer::Dense(d) => LayerSpec::Dense { units: d.units },
            Layer::BatchNorm(_) => LayerSpec::Batchnorm,
            Layer::Relu => LayerSpec::Relu,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Layer::Conv1d(c) => vec![c.kernel, c.bias],
            Layer::Dense(d) => vec![d.weight, d.bias],
            Layer::BatchNorm(b) => vec![b.gamma, b.beta, b.running_mean, b.running_var],
            _ => Vec::new(),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: Tensor, mode: Mode) -> Result<(Tensor, Cache)> {
        match self {
            Layer::Conv1d(c) => {
                expect_rank(&x, 3, "conv1d")?;
                let (batch, len, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                if cin != c.in_channels {
                    return Err(Error::Shape(format!(
                        "conv1d expects {} channels, got {cin}",
                        c.in_channels
                    )));
                }
                let lout = conv_output_len(len, c.kernel_width, c.stride, c.padding)?;
                let out = conv_forward_raw(
                    x.data(),
                    batch,
                    len,
                    cin,
                    store.get(c.kernel).data(),
                    c.kernel_width,
                    c.filters,
                    Some(store.get(c.bias).data()),
                    c.stride,
                    c.padding,
                    lout,
                );
                Ok((
                    Tensor::new(vec![batch, lout, c.filters], out)?,
                    Cache::Input(x),
                ))
            }
            Layer::Dense(d) => {
                expect_rank(&x, 2, "dense")?;
                let batch = x.shape()[0];
                if x.shape()[1] != d.inputs {
                    return Err(Error::Shape(format!(
                        "dense expects {} inputs, got {}",
                        d.inputs,
                        x.shape()[1]
                    )));
                }
                let w = store.get(d.weight).data();
                let bias = store.get(d.bias).data();
                let mut out = vec![0.0; batch * d.units];
                for (row, o) in x
                    .data()
                    .chunks_exact(d.inputs)
                    .zip(out.chunks_exact_mut(d.units))
                {
                    o.copy_from_slice(bias);
                    for (i, &xv) in row.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        for (ov, wv) in o.iter_mut().zip(&w[i * d.units..(i + 1) * d.units]) {
                            *ov += xv * wv;
                        }
                    }
                }
                Ok((Tensor::new(vec![batch, d.units], out)?, Cache::Input(x)))
            }
            Layer::BatchNorm(bn) => {
                let (y, (xhat, inv_std), stats) = batchnorm_core(
                    &x,
                    store.get(bn.gamma),
                    store.get(bn.beta),
                    store.get(bn.running_mean),
                    store.get(bn.running_var),
                    mode,
                )?;
                let stats = stats.map(|(mean, var)| BatchNormStats {
                    running_mean: bn.running_mean,
                    running_var: bn.running_var,
                    mean,
                    var,
                });
                Ok((
                    y,
                    Cache::Norm {
                        xhat,
                        inv_std,
                        train: mode == Mode::Train,
                        stats,
                    },
                ))
            }
            Layer::Relu => {
                let mut y = x;
                y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
                Ok((y.clone(), Cache::Output(y)))
            }
            Layer::Sigmoid => {
                let mut y = x;
                y.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
                Ok((y.clone(), Cache::Output(y)))
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let batch = x.batch();
                let rest = x.len() / batch.max(1);
                Ok((x.reshape(vec![batch, rest])?, Cache::Shape(shape)))
            }
        }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: Cache,
        grad: Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        match (self, cache) {
            (Layer::Conv1d(c), Cache::Input(x)) => {
                let (batch, len, cin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let lout = grad.shape()[1];
                let (k, cout, s, pad) = (c.kernel_width, c.filters, c.stride, c.padding);
                let kernel = store.get(c.kernel).data();
                let mut dx = vec![0.0; x.len()];
                let mut dk = vec![0.0; kernel.len()];
                let mut db = vec![0.0; cout];
                let g = grad.data();
                for b in 0..batch {
                    for t in 0..lout {
                        let go = &g[(b * lout + t) * cout..(b * lout + t + 1) * cout];
                        for (d, gv) in db.iter_mut().zip(go) {
                            *d += gv;
                        }
                        for j in 0..k {
                            let pos = (t * s + j) as isize - pad as isize;
                            if pos < 0 || pos as usize >= len {
                                continue;
                            }
                            let base = (b * len + pos as usize) * cin;
                            for ci in 0..cin {
                                let off = (j * cin + ci) * cout;
                                let row = &kernel[off..off + cout];
                                let xv = x.data()[base + ci];
                                let mut acc = 0.0;
                                for ((dkv, kv), gv) in
                                    dk[off..off + cout].iter_mut().zip(row).zip(go)
                                {
                                    *dkv += xv * gv;
                                    acc += kv * gv;
                                }
                                dx[base + ci] += acc;
                            }
                        }
                    }
                }
                add_grad(grads, store, c.kernel, &dk);
                add_grad(grads, store, c.bias, &db);
                Tensor::new(x.shape().to_vec(), dx)
            }
            (Layer::Dense(d), Cache::Input(x)) => {
                let w = store.get(d.weight).data();
                let mut dx = vec![0.0; x.len()];
                let mut dw = vec![0.0; w.len()];
                let mut db = vec![0.0; d.units];
                for ((row, go), dxr) in x
                    .data()
                    .chunks_exact(d.inputs)
                    .zip(grad.data().chunks_exact(d.units))
                    .zip(dx.chunks_exact_mut(d.inputs))
                {
                    for (dbv, gv) in db.iter_mut().zip(go) {
                        *dbv += gv;
                    }
                    for i in 0..d.inputs {
                        let wr = &w[i * d.units..(i + 1) * d.units];
                        let dwr = &mut dw[i * d.units..(i + 1) * d.units];
                        let xv = row[i];
                        let mut acc = 0.0;
                        for ((dwv, wv), gv) in dwr.iter_mut().zip(wr).zip(go) {
                            *dwv += xv * gv;
                            acc += wv * gv;
                        }
                        dxr[i] = acc;
                    }
                }
                add_grad(grads, store, d.weight, &dw);
                add_grad(grads, store, d.bias, &db);
                Tensor::new(x.shape().to_vec(), dx)
            }
            (
                Layer::BatchNorm(bn),
                Cache::Norm {
                    xhat,
                    inv_std,
                    train,
                    ..
                },
            ) => {
                let c = bn.channels;
                let gamma = store.get(bn.gamma).data();
                let g = grad.data();
                let rows = g.len() / c;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (gr, hr) in g.chunks_exact(c).zip(xhat.chunks_exact(c)) {
                    for ch in 0..c {
                        dgamma[ch] += gr[ch] * hr[ch];
                        dbeta[ch] += gr[ch];
                    }
                }
                let mut dx = vec![0.0; g.len()];
                if train {
                    // dxhat = g * gamma; dx = inv_std / N * (N dxhat - sum dxhat - xhat sum(dxhat xhat))
                    let n = rows as f64;
                    for ((dr, gr), hr) in dx
                        .chunks_exact_mut(c)
                        .zip(g.chunks_exact(c))
                        .zip(xhat.chunks_exact(c))
                    {
                        for ch in 0..c {
                            let dxhat = gr[ch] * gamma[ch];
                            let sum_dxhat = dbeta[ch] * gamma[ch];
                            let sum_dxhat_xhat = dgamma[ch] * gamma[ch];
                            dr[ch] =
                                inv_std[ch] / n * (n * dxhat - sum_dxhat - hr[ch] * sum_dxhat_xhat);
                        }
                    }
                } else {
                    for (dr, gr) in dx.chunks_exact_mut(c).zip(g.chunks_exact(c)) {
                        for ch in 0..c {
                            dr[ch] = gr[ch] * gamma[ch] * inv_std[ch];
                        }
                    }
                }
                add_grad(grads, store, bn.gamma, &dgamma);
                add_grad(grads, store, bn.beta, &dbeta);
                Tensor::new(grad.shape().to_vec(), dx)
            }
            (Layer::Relu, Cache::Output(y)) => {
                let mut dx = grad;
                for (d, yv) in dx.data_mut().iter_mut().zip(y.data()) {
                    if *yv <= 0.0 {
                        *d = 0.0;
                    }
                }
                Ok(dx)
            }
            (Layer::Sigmoid, Cache::Output(y)) => {
                let mut dx = grad;
                for (d, yv) in dx.data_mut().iter_mut().zip(y.data()) {
                    *d *= yv * (1.0 - yv);
                }
                Ok(dx)
            }
            (Layer::Flatten, Cache::Shape(shape)) => grad.reshape(shape),
            (layer, _) => Err(Error::Shape(format!(
                "cache does not belong to layer {:?}",
                layer.spec()
            ))),
        }
    }
}

fn add_grad(grads: &mut Gradients, store: &ParamStore, id: ParamId, values: &[f64]) {
    let slot = grads.slot(id, store.get(id));
    for (s, v) in slot.data_mut().iter_mut().zip(values) {
        *s += v;
    }
}

/// Layers applied in order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sequential {
    layers: Vec<Layer>,
}

impl Sequential {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Layer::param_ids).collect()
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        mut x: Tensor,
        mode: Mode,
    ) -> Result<(Tensor, Vec<Cache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward(store, x, mode)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    /// Forward pass without keeping caches.
    pub fn infer(&self, store: &ParamStore, mut x: Tensor) -> Result<Tensor> {
        for layer in &self.layers {
            x = layer.forward(store, x, Mode::Infer)?.0;
        }
        Ok(x)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        caches: Vec<Cache>,
        mut grad: Tensor,
        grads: &mut Gradients,
    ) -> Result<Tensor> {
        if caches.len() != self.layers.len() {
            return Err(Error::Shape(
                "cache count does not match layer count".into(),
            ));
        }
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            grad = layer.backward(store, cache, grad, grads)?;
        }
        Ok(grad)
    }

    /// Running-statistic updates recorded during a training forward pass.
    pub fn batchnorm_stats(caches: &[Cache]) -> Vec<BatchNormStats> {
        caches
            .iter()
            .filter_map(|c| match c {
                Cache::Norm { stats: Some(s), .. } => Some(s.clone()),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    /// Direct O(n k) loop written from the definition.
    fn naive_conv(x: &[f64], k: &[f64], stride: usize) -> Vec<f64> {
        let n = (x.len() - k.len()) / stride + 1;
        (0..n)
            .map(|i| (0..k.len()).map(|j| x[i * stride + j] * k[j]).sum())
            .collect()
    }

    #[test]
    fn identity_kernel_same_padding() {
        let y = conv1d_forward(
            &t(&[3, 1], &[1.0, 2.0, 3.0]),
            &t(&[3, 1, 1], &[0.0, 1.0, 0.0]),
            1,
            1,
        )
        .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn box_kernel_valid() {
        let y = conv1d_forward(
            &t(&[3, 1], &[1.0, 2.0, 3.0]),
            &t(&[2, 1, 1], &[1.0, 1.0]),
            1,
            0,
        )
        .unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
    }

    #[test]
    fn random_conv_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for stride in [1, 2, 3] {
            let y = conv1d_forward(&t(&[300, 1], &x), &t(&[7, 1, 1], &k), stride, 0).unwrap();
            let expected = naive_conv(&x, &k, stride);
            assert_eq!(y.len(), (300 - 7) / stride + 1);
            for (a, b) in y.data().iter().zip(&expected) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        assert!(conv1d_forward(&t(&[3, 1], &[1.0; 3]), &t(&[2, 2, 1], &[1.0; 4]), 1, 0).is_err());
        assert!(conv1d_forward(&t(&[2, 1], &[1.0; 2]), &t(&[3, 1, 1], &[1.0; 3]), 1, 0).is_err());
    }

    fn bn_params(c: usize) -> (Tensor, Tensor, Tensor, Tensor) {
        (
            Tensor::filled(&[c], 1.0),
            Tensor::zeros(&[c]),
            Tensor::zeros(&[c]),
            Tensor::filled(&[c], 1.0),
        )
    }

    #[test]
    fn batchnorm_zero_variance_gives_zero() {
        let (g, b, m, v) = bn_params(2);
        let x = t(&[3, 2], &[4.0, -1.0, 4.0, -1.0, 4.0, -1.0]);
        let (y, _) = batchnorm_forward(&x, &g, &b, &m, &v, Mode::Train).unwrap();
        assert!(y.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batchnorm_rejects_single_sample_training() {
        let (g, b, m, v) = bn_params(1);
        assert!(matches!(
            batchnorm_forward(&t(&[1, 1], &[1.0]), &g, &b, &m, &v, Mode::Train),
            Err(Error::BatchTooSmall(1))
        ));
        assert!(batchnorm_forward(&t(&[1, 1], &[1.0]), &g, &b, &m, &v, Mode::Infer).is_ok());
    }

    #[test]
    fn batchnorm_infer_equals_train_with_matching_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::new(
            vec![8, 3],
            (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let g = t(&[3], &[0.5, 2.0, 1.5]);
        let b = t(&[3], &[0.1, -0.2, 0.3]);
        let (_, _, m, v) = bn_params(3);
        let (y_train, stats) = batchnorm_forward(&x, &g, &b, &m, &v, Mode::Train).unwrap();
        let (mean, var) = stats.unwrap();
        let (y_infer, none) =
            batchnorm_forward(&x, &g, &b, &t(&[3], &mean), &t(&[3], &var), Mode::Infer).unwrap();
        assert!(none.is_none());
        for (a, b) in y_train.data().iter().zip(y_infer.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_output_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::new(
            vec![64, 2],
            (0..128).map(|_| rng.gen_range(-5.0..9.0)).collect(),
        )
        .unwrap();
        let g = t(&[2], &[2.0, 0.5]);
        let b = t(&[2], &[1.0, -1.0]);
        let (_, _, m, v) = bn_params(2);
        let (y, _) = batchnorm_forward(&x, &g, &b, &m, &v, Mode::Train).unwrap();
        for ch in 0..2 {
            let col: Vec<f64> = y.data().iter().skip(ch).step_by(2).copied().collect();
            let mean = col.iter().sum::<f64>() / 64.0;
            let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0).sqrt();
            let var_x: f64 = {
                let xs: Vec<f64> = x.data().iter().skip(ch).step_by(2).copied().collect();
                let mx = xs.iter().sum::<f64>() / 64.0;
                xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 64.0
            };
            // The epsilon in the denominator shrinks the std by sqrt(var / (var + eps)).
            let expected_std = g.data()[ch] * (var_x / (var_x + BATCHNORM_EPS)).sqrt();
            assert!((mean - b.data()[ch]).abs() < 1e-6);
            assert!((std - expected_std).abs() < 1e-6);
            assert!((std - g.data()[ch]).abs() < 1e-6 * g.data()[ch].max(1.0) * 10.0);
        }
    }

    #[test]
    fn running_stats_update_with_momentum() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 1);
        let stats = BatchNormStats {
            running_mean: bn.running_mean,
            running_var: bn.running_var,
            mean: vec![10.0],
            var: vec![3.0],
        };
        stats.apply(&mut store);
        assert!((store.get(bn.running_mean).data()[0] - 0.1).abs() < 1e-12);
        assert!((store.get(bn.running_var).data()[0] - (0.99 + 0.03)).abs() < 1e-12);
    }

    #[test]
    fn relu_blocks_negative_gradient() {
        let store = ParamStore::new();
        let mut grads = Gradients::new(0);
        let (_, cache) = Layer::Relu
            .forward(&store, t(&[1, 3], &[-1.0, 0.5, 2.0]), Mode::Train)
            .unwrap();
        let dx = Layer::Relu
            .backward(&store, cache, t(&[1, 3], &[1.0, 1.0, 1.0]), &mut grads)
            .unwrap();
        assert_eq!(dx.data(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn dense_gradient_matches_closed_form() {
        // loss = mean_b (xW + b - y)^2 with one output; dW = 2 x^T (xW + b - y) / batch.
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dense = Dense::new(&mut store, "d", 3, 1, &mut rng);
        let w = store.get(dense.weight).data().to_vec();
        let x = t(
            &[4, 3],
            &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 2.0, 2.0, 2.0, 0.3, -0.7, 1.1],
        );
        let y = [1.0, -2.0, 0.5, 0.0];
        let (pred, cache) = Layer::Dense(dense.clone())
            .forward(&store, x.clone(), Mode::Train)
            .unwrap();
        let target = t(&[4, 1], &y);
        let (_, g) = crate::nn::mse(&pred, &target).unwrap();
        let mut grads = Gradients::for_store(&store);
        Layer::Dense(dense.clone())
            .backward(&store, cache, g, &mut grads)
            .unwrap();
        let resid: Vec<f64> = (0..4)
            .map(|b| (0..3).map(|i| x.data()[b * 3 + i] * w[i]).sum::<f64>() - y[b])
            .collect();
        for i in 0..3 {
            let closed = 2.0 * (0..4).map(|b| x.data()[b * 3 + i] * resid[b]).sum::<f64>() / 4.0;
            assert!((grads.get(dense.weight).unwrap().data()[i] - closed).abs() < 1e-12);
        }
    }
}
