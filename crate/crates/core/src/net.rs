//! Small fully-connected network with the two differentiation services the
//! solver needs: exact forward tangents of the outputs with respect to the
//! scalar time input, and reverse-mode gradients of any linear functional of
//! (outputs, tangents) with respect to all parameters.
//!
//! The reverse pass runs through the joint primal+tangent computation, so
//! gradients seeded on the tangent carry the mixed second-order term
//! d^2 u / (d theta d t). The model has exactly one independent variable,
//! which is why this fixed tangent-in-reverse-out scheme is sufficient; no
//! general expression-graph autodiff is built.
//!
//! Hidden layers use tanh, the output layer is affine. Weights are stored
//! row-major (`w[row * in_dim + col]`, one row per output neuron).

use crate::rng::SeededRng;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("layer_sizes must list at least input and output widths, got {0:?}")]
    InvalidLayerSizes(Vec<usize>),
    #[error("network input width must be 1, got {0}")]
    InvalidInputWidth(usize),
    #[error("seed vector length {got} does not match output width {expected}")]
    SeedDimensionMismatch { expected: usize, got: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint header mismatch: expected {expected:?}, got {got:?}")]
    BadHeader { expected: [u8; 8], got: [u8; 8] },
    #[error("checkpoint is truncated or carries trailing bytes")]
    BadLength,
    #[error("checkpoint declares invalid layer sizes {0:?}")]
    BadCheckpointSizes(Vec<usize>),
    #[error("checkpoint parameter {index} is not finite")]
    NonFiniteParameter { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    w: Vec<f64>,
    b: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    /// `z = W a + b`
    fn affine(&self, a: &[f64], z: &mut [f64]) {
        for ((zv, bv), row) in z.iter_mut().zip(&self.b).zip(self.w.chunks_exact(self.in_dim)) {
            *zv = bv + dot(row, a);
        }
    }

    /// `z_dot = W a_dot` (the tangent of the affine map)
    fn affine_tangent(&self, a_dot: &[f64], z_dot: &mut [f64]) {
        for (zv, row) in z_dot.iter_mut().zip(self.w.chunks_exact(self.in_dim)) {
            *zv = dot(row, a_dot);
        }
    }

    /// `out[c] += sum_r w[r,c] * v[r]`
    fn transpose_mul_add(&self, v: &[f64], out: &mut [f64]) {
        for (&vr, row) in v.iter().zip(self.w.chunks_exact(self.in_dim)) {
            if vr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w * vr;
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Feed-forward network parameters: tanh hidden layers, affine output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Layer>,
}

impl Mlp {
    /// All-zero parameters with the given layer sizes. Used by tests and as
    /// the common constructor behind [`init_mlp`] and checkpoint loading.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, NetError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NetError::InvalidLayerSizes(layer_sizes.to_vec()));
        }
        if layer_sizes[0] != 1 {
            return Err(NetError::InvalidInputWidth(layer_sizes[0]));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }

    /// Flat parameter accessor in checkpoint order: per layer, weights
    /// row-major then biases.
    pub fn param(&self, idx: usize) -> f64 {
        let (layer, off, is_bias) = self.locate(idx);
        if is_bias {
            self.layers[layer].b[off]
        } else {
            self.layers[layer].w[off]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (layer, off, is_bias) = self.locate(idx);
        if is_bias {
            self.layers[layer].b[off] = value;
        } else {
            self.layers[layer].w[off] = value;
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, usize, bool) {
        for (li, l) in self.layers.iter().enumerate() {
            if idx < l.w.len() {
                return (li, idx, false);
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return (li, idx, true);
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn weight(&self, layer: usize, row: usize, col: usize) -> f64 {
        let l = &self.layers[layer];
        l.w[row * l.in_dim + col]
    }

    pub fn set_weight(&mut self, layer: usize, row: usize, col: usize, value: f64) {
        let in_dim = self.layers[layer].in_dim;
        self.layers[layer].w[row * in_dim + col] = value;
    }

    pub fn bias(&self, layer: usize, row: usize) -> f64 {
        self.layers[layer].b[row]
    }

    pub fn set_bias(&mut self, layer: usize, row: usize, value: f64) {
        self.layers[layer].b[row] = value;
    }

    /// Mutable views of every parameter tensor in checkpoint order
    /// `[w0, b0, w1, b1, ...]`; the optimizer walks this list.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.w.as_mut_slice());
            out.push(l.b.as_mut_slice());
        }
        out
    }

    /// Shapes of the tensors returned by [`Mlp::param_tensors_mut`].
    pub fn tensor_shapes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.w.len());
            out.push(l.b.len());
        }
        out
    }
}

/// Glorot-uniform initialization: weights drawn from
/// `U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))` in layer order,
/// row-major within a layer; biases zero. The draw order is fixed, so equal
/// seeds give bitwise equal parameters.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<Mlp, NetError> {
    let mut net = Mlp::zeros(layer_sizes)?;
    let mut rng = SeededRng::new(seed);
    for l in &mut net.layers {
        let bound = (6.0 / (l.in_dim + l.out_dim) as f64).sqrt();
        for w in &mut l.w {
            *w = rng.uniform_symmetric(bound);
        }
    }
    Ok(net)
}

/// Output values and exact input tangents of one evaluation, with the
/// per-layer activations and tangent pre-activations the reverse pass needs.
#[derive(Debug, Clone)]
pub struct TangentEval {
    u: Vec<f64>,
    du_dt: Vec<f64>,
    input: f64,
    hidden: Vec<HiddenCache>,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    /// Post-activation `a = tanh(z)`.
    a: Vec<f64>,
    /// Post-activation tangent `a_dot = (1 - a^2) * z_dot`.
    a_dot: Vec<f64>,
    /// Pre-activation tangent `z_dot = W a_dot_prev`.
    z_dot: Vec<f64>,
}

impl TangentEval {
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Derivative of each output with respect to the network input.
    pub fn du_dt(&self) -> &[f64] {
        &self.du_dt
    }
}

/// Plain forward pass.
pub fn forward(net: &Mlp, t: f64) -> Vec<f64> {
    let mut a = vec![t];
    for (li, l) in net.layers.iter().enumerate() {
        let mut z = vec![0.0; l.out_dim];
        l.affine(&a, &mut z);
        if li + 1 < net.layers.len() {
            for v in &mut z {
                *v = v.tanh();
            }
        }
        a = z;
    }
    a
}

/// Forward pass propagating `(value, d value/dt)` pairs through every layer.
pub fn forward_tangent(net: &Mlp, t: f64) -> TangentEval {
    let mut a = vec![t];
    let mut a_dot = vec![1.0];
    let mut hidden = Vec::with_capacity(net.layers.len().saturating_sub(1));
    for (li, l) in net.layers.iter().enumerate() {
        let mut z = vec![0.0; l.out_dim];
        let mut z_dot = vec![0.0; l.out_dim];
        l.affine(&a, &mut z);
        l.affine_tangent(&a_dot, &mut z_dot);
        if li + 1 < net.layers.len() {
            let mut act = vec![0.0; l.out_dim];
            let mut act_dot = vec![0.0; l.out_dim];
            for r in 0..l.out_dim {
                let th = z[r].tanh();
                act[r] = th;
                act_dot[r] = (1.0 - th * th) * z_dot[r];
            }
            hidden.push(HiddenCache {
                a: act.clone(),
                a_dot: act_dot.clone(),
                z_dot,
            });
            a = act;
            a_dot = act_dot;
        } else {
            a = z;
            a_dot = z_dot;
        }
    }
    TangentEval {
        u: a,
        du_dt: a_dot,
        input: t,
        hidden,
    }
}

/// Parameter-shaped gradient accumulator, one array per weight matrix and
/// bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    tensors: Vec<Vec<f64>>,
    shapes: Vec<usize>,
}

impl GradientSet {
    pub fn zeros_like(net: &Mlp) -> Self {
        let shapes = net.tensor_shapes();
        Self {
            tensors: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            shapes,
        }
    }

    pub fn reset(&mut self) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &GradientSet, s: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.shapes.iter().sum()
    }

    /// Flat accessor aligned with [`Mlp::param`] indexing.
    pub fn param(&self, mut idx: usize) -> f64 {
        for t in &self.tensors {
            if idx < t.len() {
                return t[idx];
            }
            idx -= t.len();
        }
        panic!("gradient index out of range");
    }

    pub fn tensor_slices(&self) -> Vec<&[f64]> {
        self.tensors.iter().map(|t| t.as_slice()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Reverse pass: accumulate `d(seed_u . u + seed_du . du_dt)/d theta` into
/// `grads`. Runs back through both the primal and tangent streams, which is
/// what makes gradients seeded on `du_dt` exact.
pub fn backward_accumulate(
    net: &Mlp,
    eval: &TangentEval,
    seed_u: &[f64],
    seed_du: &[f64],
    grads: &mut GradientSet,
) -> Result<(), NetError> {
    let out = net.output_dim();
    if seed_u.len() != out || seed_du.len() != out {
        return Err(NetError::SeedDimensionMismatch {
            expected: out,
            got: seed_u.len().max(seed_du.len()),
        });
    }

    // Adjoints of the current layer's pre-activations, primal and tangent
    // streams. The output layer is affine, so they start as the seeds.
    let mut zbar = seed_u.to_vec();
    let mut zdotbar = seed_du.to_vec();
    let input = [eval.input];
    let input_dot = [1.0];

    for li in (0..net.layers.len()).rev() {
        let l = &net.layers[li];
        let (prev_a, prev_adot): (&[f64], &[f64]) = if li == 0 {
            (&input, &input_dot)
        } else {
            let h = &eval.hidden[li - 1];
            (&h.a, &h.a_dot)
        };

        // z = W a + b, z_dot = W a_dot:
        //   dW += zbar (x) a  +  zdotbar (x) a_dot,   db += zbar
        let dw = &mut grads.tensors[2 * li];
        for r in 0..l.out_dim {
            let zr = zbar[r];
            let zdr = zdotbar[r];
            let row = &mut dw[r * l.in_dim..(r + 1) * l.in_dim];
            for c in 0..l.in_dim {
                row[c] += zr * prev_a[c] + zdr * prev_adot[c];
            }
        }
        let db = &mut grads.tensors[2 * li + 1];
        for r in 0..l.out_dim {
            db[r] += zbar[r];
        }

        if li == 0 {
            break;
        }

        // Propagate to the previous layer's post-activations...
        let mut abar = vec![0.0; l.in_dim];
        let mut adotbar = vec![0.0; l.in_dim];
        l.transpose_mul_add(&zbar, &mut abar);
        l.transpose_mul_add(&zdotbar, &mut adotbar);

        // ...then back through tanh. With a = tanh(z), s = 1 - a^2 and
        // a_dot = s * z_dot:
        //   zdotbar' = adotbar * s
        //   zbar'    = abar * s - 2 a s z_dot * adotbar
        let h = &eval.hidden[li - 1];
        zbar = vec![0.0; l.in_dim];
        zdotbar = vec![0.0; l.in_dim];
        for i in 0..l.in_dim {
            let a = h.a[i];
            let s = 1.0 - a * a;
            zdotbar[i] = adotbar[i] * s;
            zbar[i] = abar[i] * s - 2.0 * a * s * h.z_dot[i] * adotbar[i];
        }
    }
    Ok(())
}

/// Allocating wrapper over [`backward_accumulate`].
pub fn backward(
    net: &Mlp,
    eval: &TangentEval,
    seed_u: &[f64],
    seed_du: &[f64],
) -> Result<GradientSet, NetError> {
    let mut grads = GradientSet::zeros_like(net);
    backward_accumulate(net, eval, seed_u, seed_du, &mut grads)?;
    Ok(grads)
}

/// Checkpoint header: 6-byte magic plus a 2-digit format version.
pub const CHECKPOINT_HEADER: [u8; 8] = *b"PINNRC01";

/// Serialize the network to the flat binary checkpoint layout:
///
/// ```text
/// bytes 0..8   header "PINNRC01"
/// u32 le       number of entries in layer_sizes
/// u32 le * n   layer_sizes
/// f64 le ...   per affine layer: weights row-major, then biases
/// ```
pub fn write_checkpoint<W: Write>(net: &Mlp, mut w: W) -> Result<(), NetError> {
    w.write_all(&CHECKPOINT_HEADER)?;
    w.write_all(&(net.layer_sizes.len() as u32).to_le_bytes())?;
    for &s in &net.layer_sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for l in &net.layers {
        for v in l.w.iter().chain(l.b.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Mlp, NetError> {
    let mut header = [0u8; 8];
    r.read_exact(&mut header)?;
    if header != CHECKPOINT_HEADER {
        return Err(NetError::BadHeader {
            expected: CHECKPOINT_HEADER,
            got: header,
        });
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let n = u32::from_le_bytes(buf4) as usize;
    if !(2..=64).contains(&n) {
        return Err(NetError::BadCheckpointSizes(vec![n]));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf4)?;
        sizes.push(u32::from_le_bytes(buf4) as usize);
    }
    let mut net = Mlp::zeros(&sizes).map_err(|_| NetError::BadCheckpointSizes(sizes.clone()))?;
    let mut buf8 = [0u8; 8];
    let mut index = 0;
    for l in &mut net.layers {
        for v in l.w.iter_mut().chain(l.b.iter_mut()) {
            r.read_exact(&mut buf8)?;
            *v = f64::from_le_bytes(buf8);
            if !v.is_finite() {
                return Err(NetError::NonFiniteParameter { index });
            }
            index += 1;
        }
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(NetError::BadLength);
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Mlp, path: &Path) -> Result<(), NetError> {
    let mut buf = Vec::new();
    write_checkpoint(net, &mut buf)?;
    crate::report::write_atomic(path, &buf).map_err(NetError::Io)
}

pub fn load_checkpoint(path: &Path) -> Result<Mlp, NetError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(bytes.as_slice())
}
