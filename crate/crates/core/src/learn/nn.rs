//! Feed-forward tanh networks over a flat parameter vector, with batched
//! forward and reverse-mode passes, and the Adam optimizer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

/// Layer widths of a network: tanh on every hidden layer, linear output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
}

impl MlpShape {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
        }
    }

    /// `(fan_in, fan_out)` of every dense layer in order.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input];
        dims.extend(&self.hidden);
        dims.push(self.output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Activations saved by [`forward`] for the reverse pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    input: Array2<f64>,
    hidden: Vec<Array2<f64>>,
}

/// Splits a flat layer block into `W (out × in)` and `b (out)`.
fn layer_views(params: &[f64], fan_in: usize, fan_out: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
    let (w, b) = params.split_at(fan_in * fan_out);
    (
        ArrayView2::from_shape((fan_out, fan_in), w).expect("layer block size"),
        ArrayView1::from(&b[..fan_out]),
    )
}

/// Batched forward pass; rows of `x` are samples.
pub fn forward(shape: &MlpShape, params: &[f64], x: ArrayView2<'_, f64>) -> (Array2<f64>, MlpCache) {
    debug_assert_eq!(params.len(), shape.param_count());
    let layers = shape.layers();
    let mut offset = 0;
    let mut act = x.to_owned();
    let mut hidden = Vec::with_capacity(layers.len() - 1);
    for (li, &(fi, fo)) in layers.iter().enumerate() {
        let (w, b) = layer_views(&params[offset..], fi, fo);
        offset += fi * fo + fo;
        let mut z = act.dot(&w.t());
        z += &b;
        if li + 1 < layers.len() {
            z.mapv_inplace(f64::tanh);
            hidden.push(z.clone());
        }
        act = z;
    }
    (
        act,
        MlpCache {
            input: x.to_owned(),
            hidden,
        },
    )
}

/// Accumulates `∂L/∂θ` into `grad` given `dy = ∂L/∂output` for the batch.
pub fn backward(shape: &MlpShape, params: &[f64], cache: &MlpCache, dy: ArrayView2<'_, f64>, grad: &mut [f64]) {
    let layers = shape.layers();
    let mut offsets = Vec::with_capacity(layers.len());
    let mut offset = 0;
    for &(fi, fo) in &layers {
        offsets.push(offset);
        offset += fi * fo + fo;
    }
    let mut delta = dy.to_owned();
    for li in (0..layers.len()).rev() {
        let (fi, fo) = layers[li];
        let below = if li == 0 { &cache.input } else { &cache.hidden[li - 1] };
        let gw = delta.t().dot(below);
        let gb = delta.sum_axis(Axis(0));
        let off = offsets[li];
        for (g, v) in grad[off..off + fi * fo].iter_mut().zip(gw.iter()) {
            *g += v;
        }
        for (g, v) in grad[off + fi * fo..off + fi * fo + fo].iter_mut().zip(gb.iter()) {
            *g += v;
        }
        if li > 0 {
            let (w, _) = layer_views(&params[off..], fi, fo);
            let mut d_below = delta.dot(&w);
            d_below.zip_mut_with(below, |d, h| *d *= 1.0 - h * h);
            delta = d_below;
        }
    }
}

/// Column-normalized Gaussian initialization: every unit's incoming weight
/// vector has norm `hidden_std` (`output_std` for the last layer); biases zero.
pub fn init_params<R: Rng + ?Sized>(shape: &MlpShape, hidden_std: f64, output_std: f64, rng: &mut R) -> Vec<f64> {
    let layers = shape.layers();
    let mut params = Vec::with_capacity(shape.param_count());
    for (li, &(fi, fo)) in layers.iter().enumerate() {
        let std = if li + 1 == layers.len() { output_std } else { hidden_std };
        for _ in 0..fo {
            let row: Vec<f64> = (0..fi).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            params.extend(row.iter().map(|v| v * std / norm));
        }
        params.extend(std::iter::repeat_n(0.0, fo));
    }
    params
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Row-wise view of a flat observation batch.
pub fn batch_matrix(rows: &[&[f64]]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut m = Array2::zeros((rows.len(), cols));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.assign(&Array1::from(src.to_vec()));
    }
    m
}
