//! Layer inventory: linear, conv1d, batchnorm, layernorm, dropout, and
//! embedding lookup, each with exact analytic gradients.
//!
//! Inputs are [frames, channels] matrices. Batch statistics run over the
//! frame axis. All initialization is fan-in-scaled uniform from a caller
//! supplied RNG so model construction is deterministic.

use std::cell::RefCell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// Train/eval switch plus the RNG dropout draws from. Constructing a fresh
/// context from the same seed replays identical masks.
pub struct FwdCtx {
    pub train: bool,
    pub rng: ChaCha8Rng,
}

impl FwdCtx {
    pub fn train(seed: u64) -> Self {
        use rand::SeedableRng;
        FwdCtx { train: true, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn eval() -> Self {
        use rand::SeedableRng;
        FwdCtx { train: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }
}

pub fn fan_in_uniform(rng: &mut ChaCha8Rng, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// y = x W + b with W stored [in, out]; accumulation runs over the input
/// index in ascending order, so zeroed trailing weight rows contribute
/// exact zeros and leave the output bit-for-bit unchanged.
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: Tensor::param(&[in_dim, out_dim], fan_in_uniform(rng, in_dim, in_dim * out_dim)),
            bias: Tensor::param(&[out_dim], fan_in_uniform(rng, in_dim, out_dim)),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.matmul(&self.weight).add_row(&self.bias)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// 1-d convolution over the frame axis: input [T, C_in], output [T', C_out]
/// with T' = (T + 2 pad - kernel) / stride + 1. Weight layout
/// [C_out, C_in, K] flattened row-major.
pub struct Conv1d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel;
        Conv1d {
            weight: Tensor::param(
                &[out_channels, in_channels, kernel],
                fan_in_uniform(rng, fan_in, out_channels * in_channels * kernel),
            ),
            bias: Tensor::param(&[out_channels], fan_in_uniform(rng, fan_in, out_channels)),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn out_len(&self, t_in: usize) -> usize {
        (t_in + 2 * self.padding).saturating_sub(self.kernel) / self.stride + 1
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (t_in, c_in) = x.dims2();
        assert_eq!(c_in, self.in_channels, "conv1d channel mismatch");
        let t_out = self.out_len(t_in);
        let (c_out, k, stride, pad) = (self.out_channels, self.kernel, self.stride, self.padding);
        let xv = x.to_vec();
        let wv = self.weight.to_vec();
        let bv = self.bias.to_vec();
        let mut data = vec![0.0; t_out * c_out];
        for t in 0..t_out {
            for o in 0..c_out {
                let mut acc = bv[o];
                for c in 0..c_in {
                    for j in 0..k {
                        let src = (t * stride + j) as i64 - pad as i64;
                        if src < 0 || src >= t_in as i64 {
                            continue;
                        }
                        acc += xv[src as usize * c_in + c] * wv[(o * c_in + c) * k + j];
                    }
                }
                data[t * c_out + o] = acc;
            }
        }
        let (px, pw, pb) = (x.clone(), self.weight.clone(), self.bias.clone());
        Tensor::from_op(
            vec![t_out, c_out],
            data,
            vec![x.clone(), self.weight.clone(), self.bias.clone()],
            Box::new(move |g| {
                let xv = px.to_vec();
                let wv = pw.to_vec();
                let mut gx = vec![0.0; t_in * c_in];
                let mut gw = vec![0.0; c_out * c_in * k];
                let mut gb = vec![0.0; c_out];
                for t in 0..t_out {
                    for o in 0..c_out {
                        let go = g[t * c_out + o];
                        if go == 0.0 {
                            continue;
                        }
                        gb[o] += go;
                        for c in 0..c_in {
                            for j in 0..k {
                                let src = (t * stride + j) as i64 - pad as i64;
                                if src < 0 || src >= t_in as i64 {
                                    continue;
                                }
                                let s = src as usize;
                                gx[s * c_in + c] += go * wv[(o * c_in + c) * k + j];
                                gw[(o * c_in + c) * k + j] += go * xv[s * c_in + c];
                            }
                        }
                    }
                }
                px.accum_grad(&gx);
                pw.accum_grad(&gw);
                pb.accum_grad(&gb);
            }),
        )
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// Batch normalization over the frame axis with per-channel affine.
/// Training uses batch statistics and updates running estimates
/// (momentum 0.9); evaluation uses the running estimates.
pub struct BatchNorm1d {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: RefCell<Vec<f64>>,
    pub running_var: RefCell<Vec<f64>>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        BatchNorm1d {
            gamma: Tensor::param(&[channels], vec![1.0; channels]),
            beta: Tensor::param(&[channels], vec![0.0; channels]),
            running_mean: RefCell::new(vec![0.0; channels]),
            running_var: RefCell::new(vec![1.0; channels]),
            momentum: 0.9,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor, ctx: &FwdCtx) -> Tensor {
        let (m, n) = x.dims2();
        assert_eq!(n, self.gamma.numel(), "batchnorm channel mismatch");
        let xv = x.to_vec();
        let (mean, var) = if ctx.train {
            let mut mean = vec![0.0; n];
            let mut var = vec![0.0; n];
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..m {
                    s += xv[i * n + j];
                }
                mean[j] = s / m as f64;
                let mut v = 0.0;
                for i in 0..m {
                    let d = xv[i * n + j] - mean[j];
                    v += d * d;
                }
                var[j] = v / m as f64;
            }
            {
                let mut rm = self.running_mean.borrow_mut();
                let mut rv = self.running_var.borrow_mut();
                for j in 0..n {
                    rm[j] = self.momentum * rm[j] + (1.0 - self.momentum) * mean[j];
                    rv[j] = self.momentum * rv[j] + (1.0 - self.momentum) * var[j];
                }
            }
            (mean, var)
        } else {
            (self.running_mean.borrow().clone(), self.running_var.borrow().clone())
        };

        let gv = self.gamma.to_vec();
        let bv = self.beta.to_vec();
        let eps = self.eps;
        let mut xhat = vec![0.0; m * n];
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let h = (xv[i * n + j] - mean[j]) / (var[j] + eps).sqrt();
                xhat[i * n + j] = h;
                data[i * n + j] = gv[j] * h + bv[j];
            }
        }

        let train = ctx.train;
        let (px, pg, pb) = (x.clone(), self.gamma.clone(), self.beta.clone());
        Tensor::from_op(
            vec![m, n],
            data,
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            Box::new(move |g| {
                let gv = pg.to_vec();
                let mut ggamma = vec![0.0; n];
                let mut gbeta = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        ggamma[j] += g[i * n + j] * xhat[i * n + j];
                        gbeta[j] += g[i * n + j];
                    }
                }
                let mut gx = vec![0.0; m * n];
                if train {
                    // Full gradient through the batch statistics.
                    for j in 0..n {
                        let inv_std = 1.0 / (var[j] + eps).sqrt();
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for i in 0..m {
                            let dxhat = g[i * n + j] * gv[j];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat[i * n + j];
                        }
                        for i in 0..m {
                            let dxhat = g[i * n + j] * gv[j];
                            gx[i * n + j] = inv_std
                                * (dxhat
                                    - sum_dxhat / m as f64
                                    - xhat[i * n + j] * sum_dxhat_xhat / m as f64);
                        }
                    }
                } else {
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * n + j] = g[i * n + j] * gv[j] / (var[j] + eps).sqrt();
                        }
                    }
                }
                px.accum_grad(&gx);
                pg.accum_grad(&ggamma);
                pb.accum_grad(&gbeta);
            }),
        )
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }
}

/// Per-row layer normalization with affine parameters.
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Tensor::param(&[dim], vec![1.0; dim]),
            beta: Tensor::param(&[dim], vec![0.0; dim]),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (m, n) = x.dims2();
        assert_eq!(n, self.gamma.numel(), "layernorm dim mismatch");
        let xv = x.to_vec();
        let gv = self.gamma.to_vec();
        let bv = self.beta.to_vec();
        let eps = self.eps;
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean: f64 = row.iter().sum::<f64>() / n as f64;
            let var: f64 = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            inv_std[i] = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                let h = (row[j] - mean) * inv_std[i];
                xhat[i * n + j] = h;
                data[i * n + j] = gv[j] * h + bv[j];
            }
        }
        let (px, pg, pb) = (x.clone(), self.gamma.clone(), self.beta.clone());
        Tensor::from_op(
            vec![m, n],
            data,
            vec![x.clone(), self.gamma.clone(), self.beta.clone()],
            Box::new(move |g| {
                let gv = pg.to_vec();
                let mut ggamma = vec![0.0; n];
                let mut gbeta = vec![0.0; n];
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for j in 0..n {
                        let go = g[i * n + j];
                        ggamma[j] += go * xhat[i * n + j];
                        gbeta[j] += go;
                        let dxhat = go * gv[j];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat[i * n + j];
                    }
                    for j in 0..n {
                        let dxhat = g[i * n + j] * gv[j];
                        gx[i * n + j] = inv_std[i]
                            * (dxhat - sum_dxhat / n as f64 - xhat[i * n + j] * sum_dxhat_xhat / n as f64);
                    }
                }
                px.accum_grad(&gx);
                pg.accum_grad(&ggamma);
                pb.accum_grad(&gbeta);
            }),
        )
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.gamma"), self.gamma.clone()));
        out.push((format!("{prefix}.beta"), self.beta.clone()));
    }
}

/// Inverted dropout: scales kept activations by 1/(1-p) at train time,
/// identity at eval time. Masks come from the forward context RNG.
pub struct Dropout {
    pub p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0, 1)");
        Dropout { p }
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut FwdCtx) -> Tensor {
        if !ctx.train || self.p == 0.0 {
            return x.clone();
        }
        let keep = 1.0 - self.p;
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if ctx.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data: Vec<f64> = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let p = x.clone();
        Tensor::from_op(
            x.shape().to_vec(),
            data,
            vec![x.clone()],
            Box::new(move |g| {
                let gp: Vec<f64> = g.iter().zip(&mask).map(|(gi, m)| gi * m).collect();
                p.accum_grad(&gp);
            }),
        )
    }
}

/// Token embedding table [vocab, dim] with scatter-add backward.
pub struct Embedding {
    pub weight: Tensor,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Embedding {
            weight: Tensor::param(&[vocab, dim], fan_in_uniform(rng, dim, vocab * dim)),
        }
    }

    pub fn forward(&self, tokens: &[usize]) -> Tensor {
        let (vocab, dim) = self.weight.dims2();
        let wv = self.weight.to_vec();
        let mut data = Vec::with_capacity(tokens.len() * dim);
        for &t in tokens {
            assert!(t < vocab, "token {t} out of vocab {vocab}");
            data.extend_from_slice(&wv[t * dim..(t + 1) * dim]);
        }
        let pw = self.weight.clone();
        let toks = tokens.to_vec();
        Tensor::from_op(
            vec![tokens.len(), dim],
            data,
            vec![self.weight.clone()],
            Box::new(move |g| {
                let mut gw = vec![0.0; vocab * dim];
                for (i, &t) in toks.iter().enumerate() {
                    for j in 0..dim {
                        gw[t * dim + j] += g[i * dim + j];
                    }
                }
                pw.accum_grad(&gw);
            }),
        )
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::gradcheck::finite_diff_rel_err;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_input(seed: u64, shape: &[usize]) -> Tensor {
        let mut r = rng(seed);
        let data = (0..shape.iter().product::<usize>())
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        Tensor::param(shape, data)
    }

    #[test]
    fn linear_identity_weight_passes_through() {
        let mut r = rng(0);
        let mut lin = Linear::new(3, 3, &mut r);
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        lin.weight = Tensor::param(&[3, 3], eye);
        lin.bias = Tensor::param(&[3], vec![0.0; 3]);
        let x = random_input(1, &[4, 3]);
        let y = lin.forward(&x);
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn linear_grad() {
        let mut r = rng(2);
        let lin = Linear::new(4, 3, &mut r);
        let x = random_input(3, &[5, 4]);
        let err = finite_diff_rel_err(&x, |x| lin.forward(x).mul(&lin.forward(x)).sum_all());
        assert!(err < 1e-4, "rel err {err}");
        let err_w = finite_diff_rel_err(&lin.weight, |w| {
            x.matmul(w).add_row(&lin.bias).mul(&x.matmul(w).add_row(&lin.bias)).sum_all()
        });
        assert!(err_w < 1e-4, "rel err {err_w}");
    }

    #[test]
    fn conv1d_shapes_and_grad() {
        let mut r = rng(4);
        let conv = Conv1d::new(2, 3, 3, 2, 1, &mut r);
        let x = random_input(5, &[9, 2]);
        let y = conv.forward(&x);
        assert_eq!(y.shape(), &[(9 + 2 - 3) / 2 + 1, 3]);
        let err = finite_diff_rel_err(&x, |x| conv.forward(x).mul(&conv.forward(x)).sum_all());
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn conv1d_weight_grad() {
        let mut r = rng(6);
        let x = random_input(7, &[8, 2]);
        // finite-diff on the weight by rebuilding the conv each evaluation
        let conv0 = Conv1d::new(2, 2, 3, 1, 1, &mut r);
        let bias = conv0.bias.to_vec();
        let err = finite_diff_rel_err(&conv0.weight, |w| {
            let conv = Conv1d {
                weight: w.clone(),
                bias: Tensor::param(&[2], bias.clone()),
                in_channels: 2,
                out_channels: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
            };
            let y = conv.forward(&x);
            y.mul(&y).sum_all()
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn layernorm_constant_row_is_zero_before_affine() {
        let ln = LayerNorm::new(4);
        let x = Tensor::param(&[2, 4], vec![3.0; 8]);
        let y = ln.forward(&x);
        for v in y.to_vec() {
            assert!(v.abs() < 1e-9, "got {v}");
        }
    }

    #[test]
    fn layernorm_grad() {
        let mut ln = LayerNorm::new(5);
        let mut r = rng(20);
        ln.gamma = Tensor::param(&[5], (0..5).map(|_| r.gen_range(0.5..1.5)).collect());
        ln.beta = Tensor::param(&[5], (0..5).map(|_| r.gen_range(-0.5..0.5)).collect());
        let x = random_input(8, &[3, 5]);
        // weight the outputs so the loss is not a constant of the row stats
        let c = random_input(21, &[3, 5]);
        let err = finite_diff_rel_err(&x, |x| {
            let y = ln.forward(x);
            y.mul(&c).add(&y.mul(&y).mul(&c)).sum_all()
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn batchnorm_train_grad_and_running_stats() {
        let bn = BatchNorm1d::new(3);
        let x = random_input(9, &[6, 3]);
        let ctx = FwdCtx::train(0);
        let err = finite_diff_rel_err(&x, |x| {
            let y = bn.forward(x, &ctx);
            y.mul(&y).sum_all()
        });
        assert!(err < 1e-4, "rel err {err}");
        // Running stats moved off their init values.
        assert!(bn.running_mean.borrow().iter().any(|&m| m != 0.0));
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let bn = BatchNorm1d::new(2);
        *bn.running_mean.borrow_mut() = vec![1.0, -1.0];
        *bn.running_var.borrow_mut() = vec![4.0, 0.25];
        let x = Tensor::from_vec(&[1, 2], vec![3.0, 0.0]);
        let y = bn.forward(&x, &FwdCtx::eval());
        let v = y.to_vec();
        assert!((v[0] - (3.0 - 1.0) / (4.0f64 + 1e-5).sqrt()).abs() < 1e-9);
        assert!((v[1] - (0.0 + 1.0) / (0.25f64 + 1e-5).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn dropout_deterministic_and_grad() {
        let drop = Dropout::new(0.4);
        let x = random_input(10, &[4, 4]);
        let a = drop.forward(&x, &mut FwdCtx::train(7)).to_vec();
        let b = drop.forward(&x, &mut FwdCtx::train(7)).to_vec();
        assert_eq!(a, b);
        let err = finite_diff_rel_err(&x, |x| {
            let mut ctx = FwdCtx::train(7);
            let y = drop.forward(x, &mut ctx);
            y.mul(&y).sum_all()
        });
        assert!(err < 1e-4, "rel err {err}");
        // eval mode is identity
        let c = drop.forward(&x, &mut FwdCtx::eval());
        assert_eq!(c.to_vec(), x.to_vec());
    }

    #[test]
    fn embedding_lookup_and_grad() {
        let mut r = rng(11);
        let emb = Embedding::new(6, 3, &mut r);
        let y = emb.forward(&[2, 2, 5]);
        assert_eq!(y.shape(), &[3, 3]);
        let w = emb.weight.to_vec();
        assert_eq!(&y.to_vec()[0..3], &w[6..9]);
        let err = finite_diff_rel_err(&emb.weight, |w| {
            let e = Embedding { weight: w.clone() };
            let y = e.forward(&[2, 2, 5]);
            y.mul(&y).sum_all()
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn leaky_relu_and_gelu_grads() {
        let x = random_input(12, &[4, 4]);
        let err1 = finite_diff_rel_err(&x, |x| x.leaky_relu(0.01).mul(&x.leaky_relu(0.01)).sum_all());
        let err2 = finite_diff_rel_err(&x, |x| x.gelu().sum_all());
        assert!(err1 < 1e-4 && err2 < 1e-4, "{err1} {err2}");
    }

    #[test]
    fn softmax_grad() {
        let x = random_input(13, &[3, 5]);
        let err = finite_diff_rel_err(&x, |x| {
            let s = x.softmax_rows();
            s.mul(&s).sum_all()
        });
        assert!(err < 1e-4, "rel err {err}");
    }
}
