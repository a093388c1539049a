use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::spec::{Activation, Dims, LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A [`NetworkSpec`] together with its parameter tensors.
///
/// Parameters are stored as `[weights, bias]` pairs for every conv and dense
/// layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    shapes: Vec<Dims>,
    params: Vec<Tensor<T>>,
    param_slot: Vec<Option<usize>>,
}

/// Per-sample activations kept for the backward pass.
struct Workspace<T> {
    acts: Vec<Vec<T>>,
    argmax: Vec<Vec<usize>>,
}

impl<T: Scalar> Network<T> {
    /// Fan-in scaled uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (w_shape, b_shape) in spec.param_shapes()? {
            let fan_in: usize = w_shape[..w_shape.len() - 1].iter().product();
            let bound = (6.0 / fan_in as f64).sqrt();
            let n: usize = w_shape.iter().product();
            let data = (0..n)
                .map(|_| T::lit(rng.random_range(-bound..bound)))
                .collect();
            params.push(Tensor::new(w_shape, data)?);
            params.push(Tensor::zeros(b_shape)?);
        }
        Self::from_params(spec, params)
    }

    pub fn from_params(spec: NetworkSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.param_shapes()?;
        if params.len() != expected.len() * 2 {
            return Err(Error::InvalidNetwork(format!(
                "expected {} parameter tensors, got {}",
                expected.len() * 2,
                params.len()
            )));
        }
        for ((w, b), pair) in expected.iter().zip(params.chunks_exact(2)) {
            pair[0].expect_shape(w)?;
            pair[1].expect_shape(b)?;
        }
        let mut slot = 0;
        let param_slot = spec
            .layers
            .iter()
            .map(|l| {
                l.has_params().then(|| {
                    slot += 2;
                    slot - 2
                })
            })
            .collect();
        let shapes = spec.layer_shapes()?;
        Ok(Self {
            spec,
            shapes,
            params,
            param_slot,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Tensor<T>> {
        self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn input_len(&self) -> usize {
        self.spec.input.len()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            param_slot: self.param_slot.clone(),
        }
    }

    fn workspace(&self) -> Workspace<T> {
        let mut acts = vec![vec![T::zero(); self.spec.input.len()]];
        acts.extend(self.shapes.iter().map(|d| vec![T::zero(); d.len()]));
        let argmax = self
            .spec
            .layers
            .iter()
            .zip(&self.shapes)
            .map(|(l, d)| match l {
                LayerSpec::MaxPool { .. } => vec![0; d.len()],
                _ => Vec::new(),
            })
            .collect();
        Workspace { acts, argmax }
    }

    fn run_forward(&self, sample: &[T], ws: &mut Workspace<T>) {
        ws.acts[0].copy_from_slice(sample);
        let mut in_dims = self.spec.input;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let (before, after) = ws.acts.split_at_mut(i + 1);
            let input = &before[i];
            let out = &mut after[0];
            match *layer {
                LayerSpec::Conv {
                    kernel,
                    filters,
                    activation,
                } => {
                    let p = self.param_slot[i].expect("conv has params");
                    ops::conv_same_forward(
                        input,
                        in_dims.height,
                        in_dims.width,
                        in_dims.channels,
                        self.params[p].data(),
                        self.params[p + 1].data(),
                        kernel,
                        filters,
                        out,
                    );
                    if activation == Activation::Relu {
                        ops::relu_inplace(out);
                    }
                }
                LayerSpec::MaxPool { .. } => ops::maxpool2_forward(
                    input,
                    in_dims.height,
                    in_dims.width,
                    in_dims.channels,
                    out,
                    &mut ws.argmax[i],
                ),
                LayerSpec::AvgPool => ops::avgpool_global_forward(input, in_dims.channels, out),
                LayerSpec::Dense { activation, .. } => {
                    let p = self.param_slot[i].expect("dense has params");
                    ops::dense_forward(
                        input,
                        self.params[p].data(),
                        self.params[p + 1].data(),
                        out,
                    );
                    if activation == Activation::Relu {
                        ops::relu_inplace(out);
                    }
                }
            }
            in_dims = self.shapes[i];
        }
    }

    /// Backpropagates `grad_logits` through the cached activations, accumulating into `grads`.
    fn run_backward(&self, ws: &Workspace<T>, grad_logits: &[T], grads: &mut [Tensor<T>]) {
        let mut g = grad_logits.to_vec();
        let mut g_in: Vec<T> = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let in_dims = if i == 0 {
                self.spec.input
            } else {
                self.shapes[i - 1]
            };
            let input = &ws.acts[i];
            let out = &ws.acts[i + 1];
            // Layers before the first parameterized one need no input gradient.
            let need_input_grad = self.param_slot[..i].iter().any(Option::is_some);
            g_in.clear();
            g_in.resize(input.len(), T::zero());
            match *layer {
                LayerSpec::Conv {
                    kernel,
                    filters,
                    activation,
                } => {
                    if activation == Activation::Relu {
                        ops::relu_backward_inplace(out, &mut g);
                    }
                    let p = self.param_slot[i].expect("conv has params");
                    let (gw, gb) = grads[p..p + 2].split_at_mut(1);
                    ops::conv_same_backward(
                        input,
                        in_dims.height,
                        in_dims.width,
                        in_dims.channels,
                        self.params[p].data(),
                        kernel,
                        filters,
                        &g,
                        need_input_grad.then_some(g_in.as_mut_slice()),
                        gw[0].data_mut(),
                        gb[0].data_mut(),
                    );
                }
                LayerSpec::MaxPool { .. } => ops::maxpool2_backward(&g, &ws.argmax[i], &mut g_in),
                LayerSpec::AvgPool => ops::avgpool_global_backward(&g, &mut g_in),
                LayerSpec::Dense { activation, .. } => {
                    if activation == Activation::Relu {
                        ops::relu_backward_inplace(out, &mut g);
                    }
                    let p = self.param_slot[i].expect("dense has params");
                    let (gw, gb) = grads[p..p + 2].split_at_mut(1);
                    ops::dense_backward(
                        input,
                        self.params[p].data(),
                        &g,
                        need_input_grad.then_some(g_in.as_mut_slice()),
                        gw[0].data_mut(),
                        gb[0].data_mut(),
                    );
                }
            }
            if !need_input_grad {
                break;
            }
            std::mem::swap(&mut g, &mut g_in);
        }
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<usize> {
        let d = self.spec.input;
        match *batch.shape() {
            [b, h, w, c] if h == d.height && w == d.width && c == d.channels => Ok(b),
            _ => Err(Error::ShapeMismatch {
                expected: vec![
                    batch.shape().first().copied().unwrap_or(1),
                    d.height,
                    d.width,
                    d.channels,
                ],
                actual: batch.shape().to_vec(),
            }),
        }
    }

    fn check_labels(&self, labels: &[usize], batch_len: usize) -> Result<()> {
        if labels.len() != batch_len {
            return Err(Error::ShapeMismatch {
                expected: vec![batch_len],
                actual: vec![labels.len()],
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.spec.classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.spec.classes,
            });
        }
        Ok(())
    }

    /// Raw logits for a `B x H x W x C` batch, as `B x classes`.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let b = self.check_batch(batch)?;
        let mut ws = self.workspace();
        let mut out = Vec::with_capacity(b * self.spec.classes);
        for sample in batch.data().chunks_exact(self.input_len()) {
            self.run_forward(sample, &mut ws);
            out.extend_from_slice(ws.acts.last().expect("non-empty"));
        }
        Tensor::new(vec![b, self.spec.classes], out)
    }

    /// Class probabilities for a `B x H x W x C` batch, as `B x classes`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut logits = self.logits(batch)?;
        let n = self.spec.classes;
        for row in logits.data_mut().chunks_exact_mut(n) {
            let p = ops::softmax(row);
            row.copy_from_slice(&p);
        }
        Ok(logits)
    }

    /// Mean cross-entropy over the batch and its gradient for every parameter tensor.
    pub fn backward(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<(T, Vec<Tensor<T>>)> {
        self.backward_with_hits(batch, labels)
            .map(|(loss, grads, _)| (loss, grads))
    }

    /// As [`Network::backward`], also counting samples whose argmax logit equals the label.
    pub fn backward_with_hits(
        &self,
        batch: &Tensor<T>,
        labels: &[usize],
    ) -> Result<(T, Vec<Tensor<T>>, usize)> {
        let b = self.check_batch(batch)?;
        self.check_labels(labels, b)?;
        let mut grads: Vec<Tensor<T>> = self.params.iter().map(Tensor::zeros_like).collect();
        let mut ws = self.workspace();
        let mut total = T::zero();
        let mut hits = 0;
        let scale = T::one() / T::lit(b as f64);
        for (sample, &label) in batch.data().chunks_exact(self.input_len()).zip(labels) {
            self.run_forward(sample, &mut ws);
            let logits = ws.acts.last().expect("non-empty");
            let best = (0..logits.len()).fold(0, |m, i| if logits[i] > logits[m] { i } else { m });
            hits += usize::from(best == label);
            let (loss, mut g) = ops::softmax_cross_entropy(logits, label)?;
            total += loss;
            for v in &mut g {
                *v *= scale;
            }
            self.run_backward(&ws, &g, &mut grads);
        }
        Ok((total * scale, grads, hits))
    }

    /// Mean cross-entropy and the piecewise-linear regime the batch lands in:
    /// one entry per ReLU unit (active or not) and per max-pool cell (winning offset).
    pub fn loss_and_pattern(&self, batch: &Tensor<T>, labels: &[usize]) -> Result<(T, Vec<usize>)> {
        let b = self.check_batch(batch)?;
        self.check_labels(labels, b)?;
        let mut ws = self.workspace();
        let mut total = T::zero();
        let mut pattern = Vec::new();
        for (sample, &label) in batch.data().chunks_exact(self.input_len()).zip(labels) {
            self.run_forward(sample, &mut ws);
            total += ops::softmax_cross_entropy(ws.acts.last().expect("non-empty"), label)?.0;
            for (i, layer) in self.spec.layers.iter().enumerate() {
                match layer {
                    LayerSpec::Conv {
                        activation: Activation::Relu,
                        ..
                    }
                    | LayerSpec::Dense {
                        activation: Activation::Relu,
                        ..
                    } => pattern.extend(ws.acts[i + 1].iter().map(|&v| usize::from(v > T::zero()))),
                    LayerSpec::MaxPool { .. } => pattern.extend_from_slice(&ws.argmax[i]),
                    _ => {}
                }
            }
        }
        Ok((total / T::lit(b as f64), pattern))
    }
}
