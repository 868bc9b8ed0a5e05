//! Encoder–MLP regression network: four conv/ReLU/max-pool blocks, a
//! flatten, and a three-layer perceptron with a scalar output.
//!
//! Activations are stored channels-last (`[batch, length, channels]`), so a
//! kernel-2 convolution is a single matrix product per sample over
//! overlapping windows of two consecutive rows. Same-padding for the even
//! kernel appends one zero row at the end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::real::{gemm, MatRef, Real};
use crate::error::{Error, Result};

pub const INPUT_LENGTH: usize = 256;
pub const SCALING_FACTORS: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
const BASE_CHANNELS: [usize; 4] = [8, 16, 32, 64];
const BASE_HIDDEN: [usize; 2] = [1024, 128];
const KERNEL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Task {
    /// Single-channel hyperemic CIP → averaged IMR.
    Imr,
    /// Rest and hyperemic CIPs stacked as two channels → averaged CFR.
    Cfr,
}

impl Task {
    pub fn in_channels(self) -> usize {
        match self {
            Task::Imr => 1,
            Task::Cfr => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Imr => "imr",
            Task::Cfr => "cfr",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "imr" => Ok(Task::Imr),
            "cfr" => Ok(Task::Cfr),
            other => Err(Error::Parse(format!("unknown task `{other}`"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub input_length: usize,
    /// Width multiplier applied to every conv channel count and hidden width.
    pub factor: f64,
    pub conv_channels: [usize; 4],
    /// Dense layer output widths; the last is always 1.
    pub mlp_widths: [usize; 3],
}

impl NetworkSpec {
    pub fn new(in_channels: usize, factor: f64) -> Result<Self> {
        Self::with_length(in_channels, INPUT_LENGTH, factor)
    }

    pub fn for_task(task: Task, factor: f64) -> Result<Self> {
        Self::new(task.in_channels(), factor)
    }

    /// `input_length` must be a positive multiple of 16 (four halvings).
    pub fn with_length(in_channels: usize, input_length: usize, factor: f64) -> Result<Self> {
        if !SCALING_FACTORS.contains(&factor) {
            return Err(Error::InvalidParameter(format!(
                "scaling factor {factor} not in {SCALING_FACTORS:?}"
            )));
        }
        if in_channels == 0 || input_length == 0 || !input_length.is_multiple_of(16) {
            return Err(Error::InvalidParameter(format!(
                "need ≥1 channel and a length divisible by 16, got {in_channels}×{input_length}"
            )));
        }
        let scale = |w: usize| (w as f64 * factor).round() as usize;
        Ok(NetworkSpec {
            in_channels,
            input_length,
            factor,
            conv_channels: BASE_CHANNELS.map(scale),
            mlp_widths: [scale(BASE_HIDDEN[0]), scale(BASE_HIDDEN[1]), 1],
        })
    }

    pub fn flatten_width(&self) -> usize {
        self.conv_channels[3] * self.input_length / 16
    }

    /// (channels, length) after the input and after each conv block, then
    /// the flatten and dense widths as (width, 1).
    pub fn shape_trace(&self) -> Vec<(usize, usize)> {
        let mut v = vec![(self.in_channels, self.input_length)];
        let mut len = self.input_length;
        for &c in &self.conv_channels {
            len /= 2;
            v.push((c, len));
        }
        v.push((self.flatten_width(), 1));
        v.extend(self.mlp_widths.iter().map(|&w| (w, 1)));
        v
    }

    /// Shapes of every parameter tensor: per conv block `[out, 2·in]` and
    /// `[out]`, per dense layer `[out, in]` and `[out]`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = vec![];
        let mut cin = self.in_channels;
        for &c in &self.conv_channels {
            shapes.push(vec![c, KERNEL * cin]);
            shapes.push(vec![c]);
            cin = c;
        }
        let mut din = self.flatten_width();
        for &w in &self.mlp_widths {
            shapes.push(vec![w, din]);
            shapes.push(vec![w]);
            din = w;
        }
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    pub fn sample_width(&self) -> usize {
        self.in_channels * self.input_length
    }
}

/// Weights and biases, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub spec: NetworkSpec,
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Params<T> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let tensors = spec
            .param_shapes()
            .iter()
            .map(|s| vec![T::ZERO; s.iter().product()])
            .collect();
        Params { spec: spec.clone(), tensors }
    }

    /// He-normal weights (variance 2/fan_in), zero biases.
    pub fn he_init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        for (t, shape) in p.tensors.iter_mut().zip(spec.param_shapes()) {
            if shape.len() == 2 {
                let normal = Normal::new(0.0, (2.0 / shape[1] as f64).sqrt()).expect("positive std");
                t.iter_mut().for_each(|w| *w = T::from_f64(normal.sample(&mut rng)));
            }
        }
        p
    }

    pub fn convert<U: Real>(&self) -> Params<U> {
        Params {
            spec: self.spec.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| t.iter().map(|v| U::from_f64(v.to_f64())).collect())
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.to_f64().is_finite())
    }
}

struct ConvCache<T> {
    /// Input with one trailing zero row per sample: `[b, len + 1, cin]`.
    padded: Vec<T>,
    /// Post-ReLU conv output `[b, len, cout]`.
    act: Vec<T>,
    /// Which of the two pooled rows won, per pooled element.
    argmax: Vec<u8>,
    len: usize,
    cin: usize,
    cout: usize,
}

/// Intermediate values of one forward pass kept for the backward pass.
pub struct Cache<T> {
    batch: usize,
    conv: Vec<ConvCache<T>>,
    /// Inputs to each dense layer.
    dense_in: Vec<Vec<T>>,
}

/// Reorders one sample from channel-major (`[c][t]`, the file layout) to
/// channels-last.
pub fn to_channels_last<T: Real>(sample: &[f32], channels: usize, length: usize, out: &mut [T]) {
    for c in 0..channels {
        for t in 0..length {
            out[t * channels + c] = T::from_f64(sample[c * length + t] as f64);
        }
    }
}

fn conv_forward<T: Real>(x: &[T], batch: usize, len: usize, cin: usize, w: &[T], b: &[T]) -> ConvCache<T> {
    let cout = b.len();
    let mut padded = vec![T::ZERO; batch * (len + 1) * cin];
    for s in 0..batch {
        padded[s * (len + 1) * cin..s * (len + 1) * cin + len * cin]
            .copy_from_slice(&x[s * len * cin..(s + 1) * len * cin]);
    }
    let mut act = vec![T::ZERO; batch * len * cout];
    let wt = MatRef::new(w, cout, KERNEL * cin).t();
    for s in 0..batch {
        let xs = &padded[s * (len + 1) * cin..(s + 1) * (len + 1) * cin];
        let windows = MatRef::strided(xs, len, KERNEL * cin, cin, 1);
        let ys = &mut act[s * len * cout..(s + 1) * len * cout];
        gemm(windows, wt, T::ZERO, ys);
        for row in ys.chunks_mut(cout) {
            for (v, bias) in row.iter_mut().zip(b) {
                let z = *v + *bias;
                *v = if z > T::ZERO { z } else { T::ZERO };
            }
        }
    }
    ConvCache {
        padded,
        act,
        argmax: vec![],
        len,
        cin,
        cout,
    }
}

fn pool_forward<T: Real>(cache: &mut ConvCache<T>, batch: usize) -> Vec<T> {
    let (len, c) = (cache.len, cache.cout);
    let half = len / 2;
    let mut out = vec![T::ZERO; batch * half * c];
    cache.argmax = vec![0; batch * half * c];
    for s in 0..batch {
        for t in 0..half {
            let a = &cache.act[(s * len + 2 * t) * c..(s * len + 2 * t + 1) * c];
            let b = &cache.act[(s * len + 2 * t + 1) * c..(s * len + 2 * t + 2) * c];
            let o = (s * half + t) * c;
            for k in 0..c {
                if b[k] > a[k] {
                    out[o + k] = b[k];
                    cache.argmax[o + k] = 1;
                } else {
                    out[o + k] = a[k];
                }
            }
        }
    }
    out
}

fn dense_forward<T: Real>(x: &[T], batch: usize, din: usize, w: &[T], b: &[T], relu: bool) -> Vec<T> {
    let dout = b.len();
    let mut y = vec![T::ZERO; batch * dout];
    for row in y.chunks_mut(dout) {
        row.copy_from_slice(b);
    }
    gemm(MatRef::new(x, batch, din), MatRef::new(w, dout, din).t(), T::ONE, &mut y);
    if relu {
        y.iter_mut().for_each(|v| {
            if *v < T::ZERO {
                *v = T::ZERO
            }
        });
    }
    y
}

/// Forward pass on a channels-last batch; returns one normalized output
/// per sample.
pub fn forward_batch<T: Real>(p: &Params<T>, x: &[T], batch: usize) -> Result<(Vec<T>, Cache<T>)> {
    let spec = &p.spec;
    if x.len() != batch * spec.sample_width() {
        return Err(Error::Shape(format!(
            "expected {batch}×{}×{} inputs, got {} values",
            spec.in_channels,
            spec.input_length,
            x.len()
        )));
    }
    let mut cur = x.to_vec();
    let mut len = spec.input_length;
    let mut cin = spec.in_channels;
    let mut conv = Vec::with_capacity(4);
    for (i, &cout) in spec.conv_channels.iter().enumerate() {
        let mut cache = conv_forward(&cur, batch, len, cin, &p.tensors[2 * i], &p.tensors[2 * i + 1]);
        cur = pool_forward(&mut cache, batch);
        conv.push(cache);
        len /= 2;
        cin = cout;
    }
    let mut dense_in = Vec::with_capacity(3);
    let mut din = spec.flatten_width();
    for (j, &w) in spec.mlp_widths.iter().enumerate() {
        let relu = j + 1 < spec.mlp_widths.len();
        let next = dense_forward(&cur, batch, din, &p.tensors[8 + 2 * j], &p.tensors[9 + 2 * j], relu);
        dense_in.push(std::mem::replace(&mut cur, next));
        din = w;
    }
    Ok((cur, Cache { batch, conv, dense_in }))
}

/// Gradient of `Σᵢ (ŷᵢ − yᵢ)²` over the batch (sum, not mean; the trainer
/// divides by the batch size). Returns the summed loss and the gradients.
pub fn backward<T: Real>(p: &Params<T>, x: &[T], y: &[T], batch: usize) -> Result<(T, Vec<Vec<T>>)> {
    if y.len() != batch {
        return Err(Error::Shape(format!("{} targets for a batch of {batch}", y.len())));
    }
    let (out, cache) = forward_batch(p, x, batch)?;
    let mut loss = T::ZERO;
    let mut grad_out = vec![T::ZERO; batch];
    for i in 0..batch {
        let e = out[i] - y[i];
        loss += e * e;
        grad_out[i] = T::from_f64(2.0) * e;
    }
    let grads = backprop(p, &cache, grad_out);
    Ok((loss, grads))
}

fn backprop<T: Real>(p: &Params<T>, cache: &Cache<T>, grad_out: Vec<T>) -> Vec<Vec<T>> {
    let spec = &p.spec;
    let batch = cache.batch;
    let mut grads: Vec<Vec<T>> = p.tensors.iter().map(|t| vec![T::ZERO; t.len()]).collect();

    let mut dy = grad_out;
    for j in (0..spec.mlp_widths.len()).rev() {
        let dout = spec.mlp_widths[j];
        let input = &cache.dense_in[j];
        let din = input.len() / batch;
        let w = &p.tensors[8 + 2 * j];
        gemm(
            MatRef::new(&dy, batch, dout).t(),
            MatRef::new(input, batch, din),
            T::ZERO,
            &mut grads[8 + 2 * j],
        );
        let db = &mut grads[9 + 2 * j];
        for row in dy.chunks(dout) {
            for (g, v) in db.iter_mut().zip(row) {
                *g += *v;
            }
        }
        let mut dx = vec![T::ZERO; batch * din];
        gemm(MatRef::new(&dy, batch, dout), MatRef::new(w, dout, din), T::ZERO, &mut dx);
        // The flatten output feeds the first dense layer without ReLU; the
        // pooled values are non-negative already and pooling has its own
        // backward below.
        if j > 0 {
            for (g, a) in dx.iter_mut().zip(input) {
                if !(*a > T::ZERO) {
                    *g = T::ZERO;
                }
            }
        }
        dy = dx;
    }

    for i in (0..spec.conv_channels.len()).rev() {
        let cc = &cache.conv[i];
        let (len, cin, cout) = (cc.len, cc.cin, cc.cout);
        let half = len / 2;
        // Un-pool and apply the ReLU mask.
        let mut da = vec![T::ZERO; batch * len * cout];
        for s in 0..batch {
            for t in 0..half {
                let o = (s * half + t) * cout;
                for k in 0..cout {
                    let row = 2 * t + cc.argmax[o + k] as usize;
                    let idx = (s * len + row) * cout + k;
                    if cc.act[idx] > T::ZERO {
                        da[idx] = dy[o + k];
                    }
                }
            }
        }
        let w = &p.tensors[2 * i];
        let kc = KERNEL * cin;
        let need_dx = i > 0;
        let mut dx = if need_dx { vec![T::ZERO; batch * len * cin] } else { vec![] };
        let mut dwin = vec![T::ZERO; len * kc];
        for s in 0..batch {
            let ds = &da[s * len * cout..(s + 1) * len * cout];
            let xs = &cc.padded[s * (len + 1) * cin..(s + 1) * (len + 1) * cin];
            gemm(
                MatRef::new(ds, len, cout).t(),
                MatRef::strided(xs, len, kc, cin, 1),
                T::ONE,
                &mut grads[2 * i],
            );
            let db = &mut grads[2 * i + 1];
            for row in ds.chunks(cout) {
                for (g, v) in db.iter_mut().zip(row) {
                    *g += *v;
                }
            }
            if need_dx {
                gemm(MatRef::new(ds, len, cout), MatRef::new(w, cout, kc), T::ZERO, &mut dwin);
                let dxs = &mut dx[s * len * cin..(s + 1) * len * cin];
                for t in 0..len {
                    for c in 0..cin {
                        dxs[t * cin + c] += dwin[t * kc + c];
                        if t + 1 < len {
                            dxs[(t + 1) * cin + c] += dwin[t * kc + cin + c];
                        }
                    }
                }
            }
        }
        dy = dx;
    }
    grads
}

/// Normalized outputs for a channels-last batch.
pub fn predict_normalized<T: Real>(p: &Params<T>, x: &[T], batch: usize) -> Result<Vec<T>> {
    forward_batch(p, x, batch).map(|(y, _)| y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_at_unit_factor() {
        let spec = NetworkSpec::new(1, 1.0).unwrap();
        assert_eq!(
            spec.shape_trace(),
            vec![(1, 256), (8, 128), (16, 64), (32, 32), (64, 16), (1024, 1), (1024, 1), (128, 1), (1, 1)]
        );
        assert_eq!(spec.flatten_width(), 1024);
        for f in SCALING_FACTORS {
            let s = NetworkSpec::new(2, f).unwrap();
            assert_eq!(s.flatten_width(), s.mlp_widths[0]);
        }
        assert!(NetworkSpec::new(1, 3.0).is_err());
    }

    #[test]
    fn zero_weights_give_zero() {
        let spec = NetworkSpec::new(1, 0.125).unwrap();
        let p = Params::<f64>::zeros(&spec);
        let (y, _) = forward_batch(&p, &vec![0.0; 256], 1).unwrap();
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let spec = NetworkSpec::new(2, 0.125).unwrap();
        let p = Params::<f32>::he_init(&spec, 1);
        assert!(matches!(forward_batch(&p, &vec![0.0; 256], 1), Err(Error::Shape(_))));
        assert!(forward_batch(&p, &vec![0.0; 512], 1).is_ok());
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let spec = NetworkSpec::new(1, 0.125).unwrap();
        let p = Params::<f64>::he_init(&spec, 7);
        let x: Vec<f64> = (0..256).map(|i| ((i * 37 % 101) as f64) / 101.0).collect();
        let (_, g1) = backward(&p, &x, &[0.3], 1).unwrap();
        let xx: Vec<f64> = x.iter().chain(&x).copied().collect();
        let (_, g2) = backward(&p, &xx, &[0.3, 0.3], 2).unwrap();
        for (a, b) in g1.iter().flatten().zip(g2.iter().flatten()) {
            assert_eq!(2.0 * a, *b);
        }
    }
}
