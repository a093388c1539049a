//! Central-difference verification of [`Network::backward`].
//!
//! Every check runs in 64-bit arithmetic regardless of the network's scalar.
//! A coordinate whose `+h` / `-h` perturbation changes the ReLU/max-pool
//! regime is not differentiable along that step and is counted as skipped
//! rather than compared.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::Network;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Check at most this many coordinates per tensor (sampled with `seed`).
    pub max_coords: Option<usize>,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            tol: 1e-4,
            max_coords: None,
            floor: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub index: usize,
    pub shape: Vec<usize>,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tol: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.skipped_kinks).sum()
    }

    pub fn failing(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn gradient_check<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    h: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    gradient_check_with(
        net,
        batch,
        labels,
        GradCheckOptions {
            h,
            tol,
            ..Default::default()
        },
    )
}

pub fn gradient_check_with<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    labels: &[usize],
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut net: Network<f64> = net.cast();
    let batch: Tensor<f64> = batch.cast();
    let (_, analytic) = net.backward(&batch, labels)?;
    let (_, base_pattern) = net.loss_and_pattern(&batch, labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut tensors = Vec::with_capacity(analytic.len());
    for (index, grad) in analytic.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords {
            Some(n) if n < grad.len() => {
                let mut c = sample(&mut rng, grad.len(), n).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..grad.len()).collect(),
        };
        let mut check = TensorCheck {
            index,
            shape: grad.shape().to_vec(),
            checked: 0,
            skipped_kinks: 0,
            max_rel_error: 0.0,
            passed: true,
        };
        for coord in coords {
            let original = net.params()[index].data()[coord];
            net.params_mut()[index].data_mut()[coord] = original + opts.h;
            let (up, up_pattern) = net.loss_and_pattern(&batch, labels)?;
            net.params_mut()[index].data_mut()[coord] = original - opts.h;
            let (down, down_pattern) = net.loss_and_pattern(&batch, labels)?;
            net.params_mut()[index].data_mut()[coord] = original;
            if up_pattern != base_pattern || down_pattern != base_pattern {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * opts.h);
            let err = relative_error(grad.data()[coord], numeric, opts.floor);
            check.max_rel_error = check.max_rel_error.max(err);
            check.checked += 1;
        }
        check.passed = check.max_rel_error < opts.tol;
        tensors.push(check);
    }
    Ok(GradCheckReport {
        tol: opts.tol,
        tensors,
    })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::nn::spec::{
        build_classifier, Activation, ChannelPlan, Dims, LayerSpec, NetworkSpec,
    };

    fn batch(b: usize, d: Dims, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            vec![b, d.height, d.width, d.channels],
            (0..b * d.len())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn linear_model_is_exact() {
        let spec = NetworkSpec {
            input: Dims::new(2, 3, 2),
            layers: vec![LayerSpec::Dense {
                units: 4,
                activation: Activation::None,
            }],
            classes: 4,
        };
        let net = Network::<f64>::new(spec.clone(), 3).unwrap();
        let report =
            gradient_check(&net, &batch(5, spec.input, 4), &[0, 1, 2, 3, 1], 1e-3, 1e-6).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.skipped(), 0);
        assert_eq!(report.checked(), net.num_params());
    }

    #[test]
    fn desk_scale_conv_net_sampled() {
        let spec = build_classifier(32, 3, ChannelPlan::DESK, 4).unwrap();
        let net = Network::<f32>::new(spec.clone(), 5).unwrap();
        let x = batch(2, spec.input, 6).map(|&v| (v * 0.5 + 0.5) as f32);
        let opts = GradCheckOptions {
            max_coords: Some(6),
            ..Default::default()
        };
        let report = gradient_check_with(&net, &x, &[1, 3], opts).unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_error());
        assert!(report.checked() > report.skipped());
    }

    // Identical filters, identical init and an all-zero batch must get identical gradients.
    #[test]
    fn symmetric_filters_get_symmetric_gradients() {
        let spec = NetworkSpec {
            input: Dims::new(4, 4, 1),
            layers: vec![
                LayerSpec::conv(3, 2),
                LayerSpec::AvgPool,
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::None,
                },
            ],
            classes: 2,
        };
        let conv_w = Tensor::new(
            vec![3, 3, 1, 2],
            (0..18).map(|i| 0.1 * (i / 2) as f64).collect(),
        )
        .unwrap();
        let conv_b = Tensor::new(vec![2], vec![0.2, 0.2]).unwrap();
        let dense_w = Tensor::new(vec![2, 2], vec![0.3, -0.1, 0.3, -0.1]).unwrap();
        let dense_b = Tensor::zeros(vec![2]).unwrap();
        let net = Network::from_params(spec, vec![conv_w, conv_b, dense_w, dense_b]).unwrap();
        let zeros = Tensor::zeros(vec![2, 4, 4, 1]).unwrap();
        let (_, grads) = net.backward(&zeros, &[0, 0]).unwrap();
        for pair in grads[0].data().chunks_exact(2) {
            assert_eq!(pair[0], pair[1]);
        }
        assert_eq!(grads[1].data()[0], grads[1].data()[1]);
        let g = grads[2].data();
        assert_eq!((g[0], g[1]), (g[2], g[3]));
    }
}
