use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::CheckpointEntry;
use super::layers::{Conv2d, Dense, Layer};
use super::{NnError, Scalar, Tensor};
use crate::rng::Rng;

/// A named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Scalar = f32> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: String, shape: Vec<usize>, value: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::ZERO; value.len()];
        Self {
            name,
            shape,
            value,
            grad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        units: usize,
    },
    Relu,
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Two-conv visual encoder (16 filters 8×8 stride 4, 32 filters 4×4
    /// stride 2) flattened into a dense layer of `hidden` units, followed by
    /// `extra_hidden` further dense layers of the same width. All hidden
    /// layers use ReLU.
    pub fn visual_encoder(input_shape: [usize; 3], hidden: usize, extra_hidden: usize) -> Self {
        let mut layers = vec![
            LayerSpec::Conv {
                filters: 16,
                kernel: 8,
                stride: 4,
            },
            LayerSpec::Relu,
            LayerSpec::Conv {
                filters: 32,
                kernel: 4,
                stride: 2,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: hidden },
            LayerSpec::Relu,
        ];
        for _ in 0..extra_hidden {
            layers.push(LayerSpec::Dense { units: hidden });
            layers.push(LayerSpec::Relu);
        }
        Self {
            input_shape: input_shape.to_vec(),
            layers,
        }
    }

    /// Dense stack `in → hidden… → out` with ReLU between layers and a linear
    /// output.
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Dense { units: h });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dense { units: output });
        Self {
            input_shape: vec![input],
            layers,
        }
    }

    pub fn then(mut self, more: &[LayerSpec]) -> Self {
        self.layers.extend_from_slice(more);
        self
    }
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone)]
pub struct Sequential<T: Scalar = f32> {
    pub layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

impl<T: Scalar> Sequential<T> {
    /// Builds the network and draws He-uniform weights, layer by layer, from
    /// `rng`. Parameter names are `{prefix}.{layer index}.{weight|bias}`.
    pub fn new(spec: &NetworkSpec, prefix: &str, rng: &mut Rng) -> Result<Self, NnError> {
        let mut shape = spec.input_shape.clone();
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, ls) in spec.layers.iter().enumerate() {
            let name = format!("{prefix}.{i}");
            let layer = match *ls {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                } => {
                    let in_c = *shape.first().ok_or(NnError::ShapeMismatch {
                        expected: vec![0, 0, 0],
                        got: shape.clone(),
                    })?;
                    let c = Conv2d::new(&name, in_c, filters, (kernel, kernel), stride, rng);
                    shape = c.output_shape(&shape)?;
                    Layer::Conv2d(c)
                }
                LayerSpec::Dense { units } => {
                    let n = shape.iter().product();
                    shape = vec![units];
                    Layer::Dense(Dense::new(&name, n, units, rng))
                }
                LayerSpec::Relu => Layer::Relu { mask: None },
                LayerSpec::Flatten => {
                    shape = vec![shape.iter().product()];
                    Layer::Flatten { input_shape: None }
                }
            };
            layers.push(layer);
        }
        Ok(Self {
            layers,
            input_shape: spec.input_shape.clone(),
            output_shape: shape,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_dim(&self) -> usize {
        self.output_shape.iter().product()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        if x.shape != self.input_shape {
            return Err(NnError::ShapeMismatch {
                expected: self.input_shape.clone(),
                got: x.shape.clone(),
            });
        }
        Ok(())
    }

    /// Forward pass with no side effects.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let mut h = self.layers[0].infer(x)?;
        for l in &self.layers[1..] {
            h = l.infer(&h)?;
        }
        debug_assert!(h.all_finite(), "non-finite network output");
        Ok(h)
    }

    /// Forward pass caching activations for one subsequent `backward`.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let mut h = self.layers[0].forward(x)?;
        for l in &mut self.layers[1..] {
            h = l.forward(&h)?;
        }
        debug_assert!(h.all_finite(), "non-finite network output");
        Ok(h)
    }

    /// Backpropagates `grad` (dLoss/dOutput), accumulating parameter
    /// gradients, and returns dLoss/dInput.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.backward_inner(grad, true)
            .map(|g| g.expect("input gradient requested"))
    }

    /// Like [`backward`](Self::backward) but skips the input gradient of the
    /// first layer.
    pub fn backward_params(&mut self, grad: &Tensor<T>) -> Result<(), NnError> {
        self.backward_inner(grad, false).map(|_| ())
    }

    fn backward_inner(&mut self, grad: &Tensor<T>, want_input: bool) -> Result<Option<Tensor<T>>, NnError> {
        let mut g = grad.clone();
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            match l.backward(&g, want_input || i > 0)? {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(T::ZERO);
        }
    }

    pub fn scale_grads(&mut self, s: T) {
        for p in self.params_mut() {
            for g in &mut p.grad {
                *g *= s;
            }
        }
    }

    /// Copies all parameter values from `other` (same architecture).
    pub fn copy_weights_from(&mut self, other: &Sequential<T>) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.value.copy_from_slice(&src.value);
        }
    }

    /// Hash of the ReLU on/off pattern from the last cached forward. Used
    /// by finite-difference checks to detect kink crossings.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.layers
            .iter()
            .filter_map(|l| l.relu_mask())
            .flat_map(|m| m.iter().copied())
            .collect()
    }

    /// SHA-256 over parameter names, shapes and values (as f64 LE bytes).
    pub fn weights_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in self.params() {
            h.update(p.name.as_bytes());
            for &d in &p.shape {
                h.update((d as u64).to_le_bytes());
            }
            for &v in &p.value {
                h.update(v.to_f64().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

impl Sequential<f32> {
    pub fn to_entries(&self) -> Vec<CheckpointEntry> {
        self.params()
            .into_iter()
            .map(|p| CheckpointEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.value.clone(),
            })
            .collect()
    }

    /// Loads every parameter by name from `entries`.
    pub fn load_entries(&mut self, entries: &[CheckpointEntry]) -> Result<(), NnError> {
        for p in self.params_mut() {
            let e = entries
                .iter()
                .find(|e| e.name == p.name)
                .ok_or_else(|| NnError::MissingParam(p.name.clone()))?;
            if e.shape != p.shape {
                return Err(NnError::ShapeMismatch {
                    expected: p.shape.clone(),
                    got: e.shape.clone(),
                });
            }
            p.value.copy_from_slice(&e.data);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn small_spec() -> NetworkSpec {
        NetworkSpec {
            input_shape: vec![2, 12, 12],
            layers: vec![
                LayerSpec::Conv {
                    filters: 3,
                    kernel: 4,
                    stride: 2,
                },
                LayerSpec::Relu,
                LayerSpec::Conv {
                    filters: 4,
                    kernel: 3,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 6 },
                LayerSpec::Relu,
                LayerSpec::Dense { units: 3 },
            ],
        }
    }

    #[test]
    fn init_is_seeded() {
        let a: Sequential<f32> = Sequential::new(&small_spec(), "n", &mut rng_from_seed(5)).unwrap();
        let b: Sequential<f32> = Sequential::new(&small_spec(), "n", &mut rng_from_seed(5)).unwrap();
        let c: Sequential<f32> = Sequential::new(&small_spec(), "n", &mut rng_from_seed(6)).unwrap();
        assert_eq!(a.weights_hash(), b.weights_hash());
        assert_ne!(a.weights_hash(), c.weights_hash());
        assert!(a
            .params()
            .iter()
            .filter(|p| p.name.ends_with("bias"))
            .all(|p| p.value.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn he_variance() {
        // Fan-in 400 dense layer with 100 outputs: 4·10^4 samples.
        let spec = NetworkSpec::mlp(400, &[], 100);
        let net: Sequential<f64> = Sequential::new(&spec, "m", &mut rng_from_seed(9)).unwrap();
        let w = &net.params()[0].value;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
        let target = 2.0 / 400.0;
        assert!((var / target - 1.0).abs() < 0.2, "var {var} target {target}");
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut net: Sequential<f64> = Sequential::new(&small_spec(), "n", &mut rng_from_seed(2)).unwrap();
        let x = Tensor::new(vec![2, 12, 12], (0..288).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        net.forward(&x).unwrap();
        let dx = net.backward(&Tensor::zeros(vec![3])).unwrap();
        assert!(dx.data.iter().all(|&v| v == 0.0));
        assert!(net.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn infer_matches_forward() {
        let mut net: Sequential<f32> = Sequential::new(&small_spec(), "n", &mut rng_from_seed(2)).unwrap();
        let x = Tensor::new(vec![2, 12, 12], (0..288).map(|i| (i as f32 * 0.1).cos()).collect()).unwrap();
        assert_eq!(net.infer(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let net: Sequential<f32> = Sequential::new(&small_spec(), "n", &mut rng_from_seed(2)).unwrap();
        assert!(net.infer(&Tensor::zeros(vec![1, 12, 12])).is_err());
    }
}
