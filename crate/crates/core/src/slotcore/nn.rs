//! Parameter storage and the handful of layers the models need.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Named trainable tensors. Initialization draws from a caller-provided RNG
/// so that parameters are a pure function of the seed.
#[derive(Debug, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType) -> Self {
        Self { vars: BTreeMap::new(), dtype, device: Device::Cpu }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        if self.vars.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter {name}")));
        }
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let v = Var::from_tensor(&t)?;
        self.vars.insert(name.to_string(), v.clone());
        Ok(v)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, shape, values)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n = shape.iter().product();
        self.insert(name, shape, vec![value; n])
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn names(&self) -> Vec<String> {
        self.vars.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Snapshot of every parameter as a plain tensor.
    pub fn tensors(&self) -> BTreeMap<String, Tensor> {
        self.vars.iter().map(|(k, v)| (k.clone(), v.as_tensor().clone())).collect()
    }

    /// Overwrites parameters in place; names and shapes must match exactly.
    pub fn load(&self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        for name in tensors.keys() {
            if !self.vars.contains_key(name) {
                return Err(Error::invalid(format!("unexpected parameter {name}")));
            }
        }
        for (name, var) in &self.vars {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::invalid(format!("missing parameter {name}")))?;
            if t.dims() != var.dims() {
                return Err(Error::shape(format!("{name} {:?}", var.dims()), format!("{:?}", t.dims())));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

/// `[out, in]` weight with optional `[out]` bias, uniform `±1/sqrt(in)` init.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl Linear {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = 1.0 / (d_in as f64).sqrt();
        let weight = ps.uniform(&format!("{name}.weight"), &[d_out, d_in], bound, rng)?;
        let bias = if bias {
            Some(ps.uniform(&format!("{name}.bias"), &[d_out], bound, rng)?)
        } else {
            None
        };
        Ok(Self { weight, bias })
    }

    /// Applies to the last dimension of `x`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = self.weight.as_tensor().t()?;
        let y = match x.rank() {
            2 => x.matmul(&w)?,
            _ => x.broadcast_matmul(&w)?,
        };
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b.as_tensor())?,
            None => y,
        })
    }

    /// Applies independently to every row of `x` `[.., rows, d_in]` via one
    /// `1 x d_in` product per row, so each output row is bit-identical
    /// regardless of where the row sits in the batch.
    pub fn forward_rowwise(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let d_in = *dims.last().unwrap();
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let w = self.weight.as_tensor().t()?;
        let d_out = w.dim(1)?;
        let y = x
            .reshape((rows, 1, d_in))?
            .broadcast_matmul(&w.unsqueeze(0)?.broadcast_as((rows, d_in, d_out))?)?;
        let y = match &self.bias {
            Some(b) => y.broadcast_add(b.as_tensor())?,
            None => y,
        };
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = d_out;
        Ok(y.reshape(out_dims)?)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub weight: Var,
    pub bias: Var,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            weight: ps.constant(&format!("{name}.weight"), &[dim], 1.0)?,
            bias: ps.constant(&format!("{name}.bias"), &[dim], 0.0)?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(self.weight.as_tensor())?
            .broadcast_add(self.bias.as_tensor())?)
    }
}

/// 2D convolution, `[out, in, k, k]` weight, with independent strides per axis.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Var,
    pub padding: usize,
    pub stride: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: (usize, usize),
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = 1.0 / ((c_in * kernel * kernel) as f64).sqrt();
        Ok(Self {
            weight: ps.uniform(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], bound, rng)?,
            bias: ps.uniform(&format!("{name}.bias"), &[c_out], bound, rng)?,
            padding,
            stride,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (sh, sw) = self.stride;
        let y = if sh == sw {
            x.conv2d(self.weight.as_tensor(), self.padding, sh, 1, 1)?
        } else {
            // unequal strides: dense convolution, then keep every s-th row/column
            let dense = x.conv2d(self.weight.as_tensor(), self.padding, 1, 1, 1)?;
            subsample(&subsample(&dense, 2, sh)?, 3, sw)?
        };
        let c = self.bias.dim(0)?;
        Ok(y.broadcast_add(&self.bias.as_tensor().reshape((1, c, 1, 1))?)?)
    }
}

fn subsample(x: &Tensor, dim: usize, step: usize) -> Result<Tensor> {
    if step == 1 {
        return Ok(x.clone());
    }
    let mut dims = x.dims().to_vec();
    let n = dims[dim];
    if n % step != 0 {
        return Err(Error::shape(format!("axis {dim} divisible by {step}"), format!("{n}")));
    }
    dims[dim] = n / step;
    dims.insert(dim + 1, step);
    let y = x.reshape(dims)?.narrow(dim + 1, 0, 1)?.squeeze(dim + 1)?;
    Ok(y)
}

/// Transposed convolution, `[in, out, k, k]` weight.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Var,
    pub bias: Var,
    pub padding: usize,
    pub output_padding: usize,
    pub stride: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let bound = 1.0 / ((c_out * kernel * kernel) as f64).sqrt();
        Ok(Self {
            weight: ps.uniform(&format!("{name}.weight"), &[c_in, c_out, kernel, kernel], bound, rng)?,
            bias: ps.uniform(&format!("{name}.bias"), &[c_out], bound, rng)?,
            padding,
            output_padding,
            stride,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(self.weight.as_tensor(), self.padding, self.output_padding, self.stride, 1)?;
        let c = self.bias.dim(0)?;
        Ok(y.broadcast_add(&self.bias.as_tensor().reshape((1, c, 1, 1))?)?)
    }
}

/// Gated recurrent unit cell (reset gate applied after the hidden projection).
#[derive(Debug, Clone)]
pub struct GruCell {
    pub input: Linear,
    pub hidden: Linear,
    pub dim: usize,
}

impl GruCell {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            input: Linear::new(ps, &format!("{name}.input"), d_in, 3 * dim, true, rng)?,
            hidden: Linear::new(ps, &format!("{name}.hidden"), dim, 3 * dim, true, rng)?,
            dim,
        })
    }

    /// Rows are independent; see [`Linear::forward_rowwise`].
    pub fn forward(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let gi = self.input.forward_rowwise(x)?;
        let gh = self.hidden.forward_rowwise(h)?;
        let d = self.dim;
        let last = gi.rank() - 1;
        let r = sigmoid(&(gi.narrow(last, 0, d)? + gh.narrow(last, 0, d)?)?)?;
        let z = sigmoid(&(gi.narrow(last, d, d)? + gh.narrow(last, d, d)?)?)?;
        let n = (gi.narrow(last, 2 * d, d)? + (r * gh.narrow(last, 2 * d, d)?)?)?.tanh()?;
        // h' = (1 - z) * n + z * h = n + z * (h - n)
        Ok((&n + (z * (h - &n)?)?)?)
    }
}

/// Two-layer perceptron with a ReLU between the layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(ps: &mut ParamStore, name: &str, d_in: usize, hidden: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            fc1: Linear::new(ps, &format!("{name}.fc1"), d_in, hidden, true, rng)?,
            fc2: Linear::new(ps, &format!("{name}.fc2"), hidden, d_out, true, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.relu()?)
    }

    pub fn forward_rowwise(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward_rowwise(&self.fc1.forward_rowwise(x)?.relu()?)
    }
}

/// Logistic function via `tanh`, which is stable for large `|x|`.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((((x * 0.5)?.tanh()? + 1.0)? * 0.5)?)
}

/// Sums over the last axis after sorting it, so the result does not depend
/// on the order of the entries.
pub fn sorted_sum_last(x: &Tensor) -> Result<Tensor> {
    let x = x.contiguous()?;
    let idx = x.detach().arg_sort_last_dim(true)?;
    Ok(x.gather(&idx, D::Minus1)?.sum_keepdim(D::Minus1)?)
}

/// Softmax over the last axis with an order-independent denominator.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let denom = sorted_sum_last(&e)?;
    Ok(e.broadcast_div(&denom)?)
}

pub fn log10(x: &Tensor) -> Result<Tensor> {
    Ok((x.log()? * std::f64::consts::LOG10_E)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn init_is_seeded() {
        let mut a = ParamStore::new(DType::F32);
        let mut b = ParamStore::new(DType::F32);
        Linear::new(&mut a, "l", 4, 3, true, &mut rng()).unwrap();
        Linear::new(&mut b, "l", 4, 3, true, &mut rng()).unwrap();
        let ta = a.tensors();
        let tb = b.tensors();
        for k in ta.keys() {
            assert_eq!(ta[k].to_vec2::<f32>().ok(), tb[k].to_vec2::<f32>().ok());
        }
        assert_eq!(a.num_elements(), 15);
        assert!(Linear::new(&mut a, "l", 4, 3, true, &mut rng()).is_err());
    }

    #[test]
    fn rowwise_matches_plain_and_is_position_independent() {
        let mut ps = ParamStore::new(DType::F32);
        let l = Linear::new(&mut ps, "l", 16, 8, true, &mut rng()).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..5 * 16).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(data, (5, 16), &Device::Cpu).unwrap();
        let plain = l.forward(&x).unwrap().to_vec2::<f32>().unwrap();
        let rows = l.forward_rowwise(&x).unwrap().to_vec2::<f32>().unwrap();
        for (p, q) in plain.iter().flatten().zip(rows.iter().flatten()) {
            assert!((p - q).abs() < 1e-5);
        }
        let perm = Tensor::new(&[3u32, 0, 4, 1, 2], &Device::Cpu).unwrap();
        let shuffled = l.forward_rowwise(&x.index_select(&perm, 0).unwrap()).unwrap().to_vec2::<f32>().unwrap();
        for (i, &p) in [3usize, 0, 4, 1, 2].iter().enumerate() {
            assert_eq!(shuffled[i], rows[p]);
        }
    }

    #[test]
    fn layer_norm_normalizes() {
        let mut ps = ParamStore::new(DType::F64);
        let ln = LayerNorm::new(&mut ps, "ln", 4, 1e-5).unwrap();
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0, 4.0]], &Device::Cpu).unwrap();
        let y = ln.forward(&x).unwrap().to_vec2::<f64>().unwrap();
        let mean: f64 = y[0].iter().sum::<f64>() / 4.0;
        let var: f64 = y[0].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn anisotropic_stride_matches_subsampled_dense() {
        let mut ps = ParamStore::new(DType::F64);
        let c = Conv2d::new(&mut ps, "c", 2, 3, 5, (1, 2), 2, &mut rng()).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..2 * 2 * 6 * 8).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(data, (2, 2, 6, 8), &Device::Cpu).unwrap();
        let y = c.forward(&x).unwrap();
        assert_eq!(y.dims(), &[2, 3, 6, 4]);
        let dense = x.conv2d(c.weight.as_tensor(), 2, 1, 1, 1).unwrap();
        let y = y.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let dense = dense.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let bias = c.bias.as_tensor().to_vec1::<f64>().unwrap();
        for b in 0..2 {
            for o in 0..3 {
                for h in 0..6 {
                    for w in 0..4 {
                        let a = y[((b * 3 + o) * 6 + h) * 4 + w];
                        let d = dense[((b * 3 + o) * 6 + h) * 8 + 2 * w];
                        assert!((a - d - bias[o]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn transposed_conv_doubles_extent() {
        let mut ps = ParamStore::new(DType::F32);
        let c = ConvTranspose2d::new(&mut ps, "t", 3, 2, 5, 2, 2, 1, &mut rng()).unwrap();
        let x = Tensor::zeros((1, 3, 8, 2), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(c.forward(&x).unwrap().dims(), &[1, 2, 16, 4]);
    }

    #[test]
    fn gru_matches_reference_equations() {
        let mut ps = ParamStore::new(DType::F64);
        let g = GruCell::new(&mut ps, "g", 2, 2, &mut rng()).unwrap();
        let x = Tensor::new(&[[0.3f64, -0.7]], &Device::Cpu).unwrap();
        let h = Tensor::new(&[[0.1f64, 0.5]], &Device::Cpu).unwrap();
        let out = g.forward(&x, &h).unwrap().to_vec2::<f64>().unwrap();

        let wi = g.input.weight.as_tensor().to_vec2::<f64>().unwrap();
        let bi = g.input.bias.as_ref().unwrap().as_tensor().to_vec1::<f64>().unwrap();
        let wh = g.hidden.weight.as_tensor().to_vec2::<f64>().unwrap();
        let bh = g.hidden.bias.as_ref().unwrap().as_tensor().to_vec1::<f64>().unwrap();
        let (xv, hv) = ([0.3, -0.7], [0.1, 0.5]);
        let lin = |w: &Vec<Vec<f64>>, b: &Vec<f64>, v: &[f64; 2], row: usize| b[row] + w[row][0] * v[0] + w[row][1] * v[1];
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for j in 0..2 {
            let r = sig(lin(&wi, &bi, &xv, j) + lin(&wh, &bh, &hv, j));
            let z = sig(lin(&wi, &bi, &xv, 2 + j) + lin(&wh, &bh, &hv, 2 + j));
            let n = (lin(&wi, &bi, &xv, 4 + j) + r * lin(&wh, &bh, &hv, 4 + j)).tanh();
            let expect = (1.0 - z) * n + z * hv[j];
            assert!((out[0][j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn sorted_softmax_is_order_independent() {
        let x = Tensor::new(&[[1.5f32, -2.0, 0.25, 3.0, 0.1]], &Device::Cpu).unwrap();
        let y = softmax_last(&x).unwrap().to_vec2::<f32>().unwrap();
        let s: f32 = y[0].iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
        let perm = Tensor::new(&[4u32, 2, 0, 3, 1], &Device::Cpu).unwrap();
        let yp = softmax_last(&x.index_select(&perm, 1).unwrap()).unwrap().to_vec2::<f32>().unwrap();
        for (i, &p) in [4usize, 2, 0, 3, 1].iter().enumerate() {
            assert_eq!(yp[0][i], y[0][p]);
        }
    }

    #[test]
    fn sigmoid_is_logistic() {
        let x = Tensor::new(&[-30.0f64, -1.0, 0.0, 2.0, 30.0], &Device::Cpu).unwrap();
        let y = sigmoid(&x).unwrap().to_vec1::<f64>().unwrap();
        for (a, b) in [-30.0f64, -1.0, 0.0, 2.0, 30.0].iter().zip(y) {
            assert!((1.0 / (1.0 + (-a).exp()) - b).abs() < 1e-12);
        }
    }
}
