//! Small dense feed-forward networks.
//!
//! Hidden layers use the rectifier; the output layer is linear (value heads)
//! or `tanh` (actor heads). Backpropagation yields both parameter gradients
//! and gradients with respect to the input, the latter being what hill
//! climbing on a value surface needs.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. Gradients are
//! not clipped.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{check_dim, Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"HCNN";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Tanh,
}

impl OutputActivation {
    fn tag(self) -> u8 {
        match self {
            OutputActivation::Linear => 0,
            OutputActivation::Tanh => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(OutputActivation::Linear),
            1 => Ok(OutputActivation::Tanh),
            t => Err(Error::Checkpoint(format!("unknown output activation tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (o, &b) in self.biases.iter().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = b;
            for (w, xi) in row.iter().zip(x) {
                z += w * xi;
            }
            out.push(z);
        }
    }
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds at least the input")
    }
}

/// A gradient with exactly the shape of the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: OutputActivation,
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least an input and an output layer, got sizes {sizes:?}"
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    /// All-zero network of the given shape.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { layers, output })
    }

    /// Xavier-uniform hidden layers (zero biases); the output layer's weights
    /// and biases are drawn uniformly from `[-output_half_width, output_half_width]`.
    pub fn xavier<R: Rng + ?Sized>(
        sizes: &[usize],
        output_half_width: f64,
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        if !(output_half_width >= 0.0 && output_half_width.is_finite()) {
            return Err(Error::Config(format!(
                "output half width must be finite and non-negative, got {output_half_width}"
            )));
        }
        let mut net = Self::zeros(sizes, output)?;
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            if i == last {
                if output_half_width > 0.0 {
                    let dist = Uniform::new_inclusive(-output_half_width, output_half_width)
                        .expect("valid uniform bounds");
                    layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
                    layer.biases.iter_mut().for_each(|b| *b = dist.sample(rng));
                }
            } else {
                let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("valid uniform bounds");
                layer.weights.iter_mut().for_each(|w| *w = dist.sample(rng));
            }
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// Flip the sign of the output layer; with a linear head this negates every output.
    pub fn negate_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.weights.iter_mut().for_each(|w| *w = -*w);
        last.biases.iter_mut().for_each(|b| *b = -*b);
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        let mut next = Vec::with_capacity(self.layers.iter().map(|l| l.out_dim).max().unwrap_or(0));
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            self.activate(i == last, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass that keeps every layer's activation for backpropagation.
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        check_dim(self.input_dim(), x.len())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.affine(acts.last().expect("non-empty"), &mut out);
            self.activate(i == last, &mut out);
            acts.push(out);
        }
        Ok(Trace { acts })
    }

    #[inline]
    fn activate(&self, is_output: bool, z: &mut [f64]) {
        if is_output {
            if self.output == OutputActivation::Tanh {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
        } else {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }

    /// Backpropagate `out_grad` (dL/d output) through a recorded trace.
    ///
    /// Parameter gradients are accumulated into `grads` when given. Returns
    /// dL/d input. The rectifier's derivative at exactly zero is taken as 0.
    pub fn backward(
        &self,
        trace: &Trace,
        out_grad: &[f64],
        mut grads: Option<&mut Gradients>,
    ) -> Result<Vec<f64>> {
        check_dim(self.output_dim(), out_grad.len())?;
        let mut delta = out_grad.to_vec();
        if self.output == OutputActivation::Tanh {
            for (d, y) in delta.iter_mut().zip(trace.output()) {
                *d *= 1.0 - y * y;
            }
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let gw = &mut g.weights[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (w, &xi) in row.iter_mut().zip(input) {
                        *w += d * xi;
                    }
                }
                for (b, &d) in g.biases[l].iter_mut().zip(&delta) {
                    *b += d;
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if l > 0 {
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// dL/dθ for a single input given dL/d output.
    pub fn param_gradient(&self, x: &[f64], out_grad: &[f64]) -> Result<Gradients> {
        let trace = self.trace(x)?;
        let mut grads = Gradients::zeros_like(self);
        self.backward(&trace, out_grad, Some(&mut grads))?;
        Ok(grads)
    }

    /// ∂ output[action] / ∂ x.
    pub fn input_gradient(&self, x: &[f64], action: usize) -> Result<Vec<f64>> {
        if action >= self.output_dim() {
            return Err(Error::InvalidAction(format!(
                "output index {action} out of range for {} outputs",
                self.output_dim()
            )));
        }
        let trace = self.trace(x)?;
        let mut seed = vec![0.0; self.output_dim()];
        seed[action] = 1.0;
        self.backward(&trace, &seed, None)
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&[self.output.tag()])?;
        let sizes = self.layer_sizes();
        w.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for s in &sizes {
            w.write_all(&(*s as u32).to_le_bytes())?;
        }
        for p in self.params() {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic header".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let output = OutputActivation::from_tag(tag[0])?;
        r.read_exact(&mut word)?;
        let n = u32::from_le_bytes(word) as usize;
        if n > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut word)?;
            sizes.push(u32::from_le_bytes(word) as usize);
        }
        let mut net = Self::zeros(&sizes, output).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut buf = [0u8; 8];
        for p in net.params_mut() {
            r.read_exact(&mut buf)?;
            *p = f64::from_le_bytes(buf);
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Adam optimizer state with the usual constants (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Apply one descent step `θ ← θ − lr·m̂/(√v̂ + ε)`.
    pub fn step(&mut self, net: &mut Mlp, grad: &Gradients) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient passed to Adam at step {}",
                self.t + 1
            )));
        }
        if grad.weights.len() != net.layers.len() {
            return Err(Error::Dimension {
                expected: net.layers.len(),
                got: grad.weights.len(),
            });
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let step = self.lr / c1;
        let c2_sqrt = c2.sqrt();
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() / c2_sqrt + self.eps);
        }
        Ok(())
    }
}
