use rand::Rng as _;

use super::network::Param;
use super::ops::{axpy, dot};
use super::{NnError, Scalar, Tensor};
use crate::rng::Rng;

/// He-uniform weights: `U(-√(6/fan_in), √(6/fan_in))`, variance `2/fan_in`.
fn he_uniform<T: Scalar>(rng: &mut Rng, fan_in: usize, n: usize) -> Vec<T> {
    let bound = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect()
}

/// Valid-padding 2-D cross-correlation over a `[C, H, W]` input.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Scalar = f32> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    /// `[out_channels, in_channels * kh * kw]`
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    input_shape: [usize; 3],
    out_hw: (usize, usize),
    /// im2col matrix `[in_channels * kh * kw, out_h * out_w]`
    cols: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: Param::new(
                format!("{name}.weight"),
                vec![out_channels, in_channels, kernel.0, kernel.1],
                he_uniform(rng, fan_in, out_channels * fan_in),
            ),
            bias: Param::new(format!("{name}.bias"), vec![out_channels], vec![T::ZERO; out_channels]),
            cache: None,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, NnError> {
        if input.len() != 3 || input[0] != self.in_channels {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.in_channels, 0, 0],
                got: input.to_vec(),
            });
        }
        let (kh, kw) = self.kernel;
        if input[1] < kh || input[2] < kw {
            return Err(NnError::KernelTooLarge {
                input: input.to_vec(),
                kernel: vec![kh, kw],
            });
        }
        Ok(vec![
            self.out_channels,
            (input[1] - kh) / self.stride + 1,
            (input[2] - kw) / self.stride + 1,
        ])
    }

    fn im2col(&self, input: &Tensor<T>, oh: usize, ow: usize) -> Vec<T> {
        let (kh, kw) = self.kernel;
        let (h, w) = (input.shape[1], input.shape[2]);
        let p = oh * ow;
        let mut cols = vec![T::ZERO; self.in_channels * kh * kw * p];
        for c in 0..self.in_channels {
            let plane = &input.data[c * h * w..(c + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let src = &plane[(oy * self.stride + ky) * w + kx..];
                        for ox in 0..ow {
                            dst[oy * ow + ox] = src[ox * self.stride];
                        }
                    }
                }
            }
        }
        cols
    }

    fn compute(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>), NnError> {
        let out_shape = self.output_shape(&input.shape)?;
        let (oh, ow) = (out_shape[1], out_shape[2]);
        let p = oh * ow;
        let cols = self.im2col(input, oh, ow);
        let k = self.in_channels * self.kernel.0 * self.kernel.1;
        let mut out = vec![T::ZERO; self.out_channels * p];
        for oc in 0..self.out_channels {
            let row = &mut out[oc * p..(oc + 1) * p];
            row.fill(self.bias.value[oc]);
            let wrow = &self.weight.value[oc * k..(oc + 1) * k];
            for (ki, &wv) in wrow.iter().enumerate() {
                axpy(row, wv, &cols[ki * p..(ki + 1) * p]);
            }
        }
        let cache = ConvCache {
            input_shape: [input.shape[0], input.shape[1], input.shape[2]],
            out_hw: (oh, ow),
            cols,
        };
        Ok((
            Tensor {
                shape: out_shape,
                data: out,
            },
            cache,
        ))
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>, NnError> {
        let cache = self.cache.take().ok_or(NnError::NoCachedForward)?;
        let (oh, ow) = cache.out_hw;
        let p = oh * ow;
        if grad.shape != [self.out_channels, oh, ow] {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.out_channels, oh, ow],
                got: grad.shape.clone(),
            });
        }
        let (kh, kw) = self.kernel;
        let k = self.in_channels * kh * kw;
        for oc in 0..self.out_channels {
            let g = &grad.data[oc * p..(oc + 1) * p];
            self.bias.grad[oc] += g.iter().copied().sum::<T>();
            for ki in 0..k {
                self.weight.grad[oc * k + ki] += dot(g, &cache.cols[ki * p..(ki + 1) * p]);
            }
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut dcols = vec![T::ZERO; k * p];
        for oc in 0..self.out_channels {
            let g = &grad.data[oc * p..(oc + 1) * p];
            for ki in 0..k {
                let wv = self.weight.value[oc * k + ki];
                axpy(&mut dcols[ki * p..(ki + 1) * p], wv, g);
            }
        }
        let [c_in, h, w] = cache.input_shape;
        let mut dx = vec![T::ZERO; c_in * h * w];
        for c in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = (c * kh + ky) * kw + kx;
                    let src = &dcols[row * p..(row + 1) * p];
                    for oy in 0..oh {
                        let base = c * h * w + (oy * self.stride + ky) * w + kx;
                        for ox in 0..ow {
                            dx[base + ox * self.stride] += src[oy * ow + ox];
                        }
                    }
                }
            }
        }
        Ok(Some(Tensor {
            shape: cache.input_shape.to_vec(),
            data: dx,
        }))
    }
}

/// Fully connected layer over a flat input. Weight layout `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense<T: Scalar = f32> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Vec<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: Param::new(
                format!("{name}.weight"),
                vec![out_dim, in_dim],
                he_uniform(rng, in_dim, in_dim * out_dim),
            ),
            bias: Param::new(format!("{name}.bias"), vec![out_dim], vec![T::ZERO; out_dim]),
            cache: None,
        }
    }

    fn compute(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        if input.data.len() != self.in_dim {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.in_dim],
                got: input.shape.clone(),
            });
        }
        let x = &input.data;
        let out = (0..self.out_dim)
            .map(|o| self.bias.value[o] + dot(&self.weight.value[o * self.in_dim..(o + 1) * self.in_dim], x))
            .collect();
        Ok(Tensor {
            shape: vec![self.out_dim],
            data: out,
        })
    }

    fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>, NnError> {
        let x = self.cache.take().ok_or(NnError::NoCachedForward)?;
        if grad.data.len() != self.out_dim {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.out_dim],
                got: grad.shape.clone(),
            });
        }
        let n = self.in_dim;
        for (o, &g) in grad.data.iter().enumerate() {
            self.bias.grad[o] += g;
            axpy(&mut self.weight.grad[o * n..(o + 1) * n], g, &x);
        }
        if !need_input_grad {
            return Ok(None);
        }
        let mut dx = vec![T::ZERO; n];
        for (o, &g) in grad.data.iter().enumerate() {
            axpy(&mut dx, g, &self.weight.value[o * n..(o + 1) * n]);
        }
        Ok(Some(Tensor {
            shape: vec![n],
            data: dx,
        }))
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T: Scalar = f32> {
    Conv2d(Conv2d<T>),
    Dense(Dense<T>),
    Relu { mask: Option<Vec<bool>> },
    Flatten { input_shape: Option<Vec<usize>> },
}

impl<T: Scalar> Layer<T> {
    /// Forward pass without touching the cache.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv2d(c) => c.compute(input).map(|(out, _)| out),
            Layer::Dense(d) => d.compute(input),
            Layer::Relu { .. } => Ok(Tensor {
                shape: input.shape.clone(),
                data: input.data.iter().map(|&v| v.max(T::ZERO)).collect(),
            }),
            Layer::Flatten { .. } => Ok(Tensor {
                shape: vec![input.data.len()],
                data: input.data.clone(),
            }),
        }
    }

    /// Forward pass that caches what `backward` needs.
    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv2d(c) => {
                let (out, cache) = c.compute(input)?;
                c.cache = Some(cache);
                Ok(out)
            }
            Layer::Dense(d) => {
                let out = d.compute(input)?;
                d.cache = Some(input.data.clone());
                Ok(out)
            }
            Layer::Relu { mask } => {
                let m: Vec<bool> = input.data.iter().map(|&v| v > T::ZERO).collect();
                let data = input
                    .data
                    .iter()
                    .zip(&m)
                    .map(|(&v, &on)| if on { v } else { T::ZERO })
                    .collect();
                *mask = Some(m);
                Ok(Tensor {
                    shape: input.shape.clone(),
                    data,
                })
            }
            Layer::Flatten { input_shape } => {
                *input_shape = Some(input.shape.clone());
                Ok(Tensor {
                    shape: vec![input.data.len()],
                    data: input.data.clone(),
                })
            }
        }
    }

    /// Accumulates parameter gradients; returns the input gradient when
    /// `need_input_grad` is set.
    pub fn backward(&mut self, grad: &Tensor<T>, need_input_grad: bool) -> Result<Option<Tensor<T>>, NnError> {
        match self {
            Layer::Conv2d(c) => c.backward(grad, need_input_grad),
            Layer::Dense(d) => d.backward(grad, need_input_grad),
            Layer::Relu { mask } => {
                let m = mask.take().ok_or(NnError::NoCachedForward)?;
                if m.len() != grad.data.len() {
                    return Err(NnError::ShapeMismatch {
                        expected: vec![m.len()],
                        got: grad.shape.clone(),
                    });
                }
                let data = grad
                    .data
                    .iter()
                    .zip(&m)
                    .map(|(&g, &on)| if on { g } else { T::ZERO })
                    .collect();
                Ok(Some(Tensor {
                    shape: grad.shape.clone(),
                    data,
                }))
            }
            Layer::Flatten { input_shape } => {
                let shape = input_shape.take().ok_or(NnError::NoCachedForward)?;
                Ok(Some(Tensor {
                    shape,
                    data: grad.data.clone(),
                }))
            }
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => vec![],
        }
    }

    pub(crate) fn relu_mask(&self) -> Option<&[bool]> {
        match self {
            Layer::Relu { mask } => mask.as_deref(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn conv(in_c: usize, out_c: usize, k: usize, stride: usize) -> Conv2d<f64> {
        Conv2d::new("c", in_c, out_c, (k, k), stride, &mut rng_from_seed(1))
    }

    #[test]
    fn identity_kernel() {
        let mut c = conv(1, 1, 1, 1);
        c.weight.value = vec![1.0];
        let x = Tensor::new(vec![1, 3, 4], (0..12).map(f64::from).collect()).unwrap();
        let (y, _) = c.compute(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let mut c = conv(1, 1, 2, 1);
        c.weight.value = vec![1.0; 4];
        let x = Tensor::new(vec![1, 3, 3], vec![1.0; 9]).unwrap();
        let (y, _) = c.compute(&x).unwrap();
        assert_eq!(y.shape, vec![1, 2, 2]);
        assert_eq!(y.data, vec![4.0; 4]);
    }

    #[test]
    fn zero_input_zero_output() {
        let c = conv(2, 3, 3, 2);
        let x = Tensor::zeros(vec![2, 9, 9]);
        let (y, _) = c.compute(&x).unwrap();
        assert_eq!(y.shape, vec![3, 4, 4]);
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_size_formula() {
        let c = conv(3, 16, 8, 4);
        assert_eq!(c.output_shape(&[3, 96, 96]).unwrap(), vec![16, 23, 23]);
        let c2 = conv(16, 32, 4, 2);
        assert_eq!(c2.output_shape(&[16, 23, 23]).unwrap(), vec![32, 10, 10]);
    }

    #[test]
    fn shape_errors() {
        let c = conv(3, 4, 3, 1);
        assert!(matches!(
            c.compute(&Tensor::zeros(vec![2, 8, 8])),
            Err(NnError::ShapeMismatch { .. })
        ));
        assert!(matches!(
            c.compute(&Tensor::zeros(vec![3, 2, 8])),
            Err(NnError::KernelTooLarge { .. })
        ));
    }

    #[test]
    fn backward_requires_forward() {
        let mut l: Layer<f64> = Layer::Dense(Dense::new("d", 3, 2, &mut rng_from_seed(0)));
        assert_eq!(l.backward(&Tensor::zeros(vec![2]), true), Err(NnError::NoCachedForward));
        let mut r: Layer<f64> = Layer::Relu { mask: None };
        assert_eq!(r.backward(&Tensor::zeros(vec![2]), true), Err(NnError::NoCachedForward));
    }

    #[test]
    fn relu_blocks_negative_preactivation() {
        let mut r: Layer<f64> = Layer::Relu { mask: None };
        r.forward(&Tensor::from_vec(vec![-0.5, 2.0])).unwrap();
        let g = r.backward(&Tensor::from_vec(vec![1.0, 1.0]), true).unwrap().unwrap();
        assert_eq!(g.data, vec![0.0, 1.0]);
    }
}
