//! Reverse-mode autodiff on dense f64 tensors.
//!
//! Ops build a graph of reference-counted nodes; `backward()` walks it once
//! in reverse topological order with plain sequential reductions, so gradient
//! computation is bit-deterministic. Values are f64 throughout; checkpoints
//! downcast to f32 at serialization time.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

type BackwardFn = Box<dyn Fn(&[f64])>;

struct Inner {
    id: usize,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Value/gradient pair; the unit of the differentiable core.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn make(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
    ) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                parents,
                backward,
                requires_grad,
            }),
        }
    }

    /// Non-trainable leaf (inputs, constants).
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::make(shape.to_vec(), data, Vec::new(), None, false)
    }

    /// Trainable leaf: gradients accumulate here.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::make(shape.to_vec(), data, Vec::new(), None, true)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_vec(shape, vec![0.0; numel(shape)])
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![v])
    }

    /// Internal constructor for ops with custom analytic gradients.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.inner.requires_grad);
        if requires_grad {
            Tensor::make(shape, data, parents, Some(backward), true)
        } else {
            Tensor::make(shape, data, Vec::new(), None, false)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.inner.data.borrow()[0]
    }

    /// Replace values in place (same length). Used by optimizers and
    /// checkpoint loading.
    pub fn set_data(&self, values: &[f64]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), values.len(), "set_data length mismatch");
        d.copy_from_slice(values);
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accum_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(existing) => {
                for (e, x) in existing.iter_mut().zip(g) {
                    *e += x;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.inner.data.borrow().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite values in {what}")));
        }
        Ok(())
    }

    /// Reverse-mode backprop from a scalar.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() requires a scalar loss");
        // Iterative DFS for reverse topological order.
        let mut topo: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.inner.id);
        while let Some((node, child_idx)) = stack.pop() {
            if child_idx < node.inner.parents.len() {
                let parent = node.inner.parents[child_idx].clone();
                stack.push((node, child_idx + 1));
                if parent.inner.requires_grad && visited.insert(parent.inner.id) {
                    stack.push((parent, 0));
                }
            } else {
                topo.push(node);
            }
        }
        self.accum_grad(&[1.0]);
        for node in topo.iter().rev() {
            if let Some(f) = &node.inner.backward {
                let g = node.inner.grad.borrow().clone();
                if let Some(g) = g {
                    f(&g);
                }
            }
        }
    }

    // ---- elementwise ----

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        let data = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(x, y)| x + y).collect()
        };
        let (pa, pb) = (self.clone(), other.clone());
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                pa.accum_grad(g);
                pb.accum_grad(g);
            }),
        )
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "sub shape mismatch");
        let data = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(x, y)| x - y).collect()
        };
        let (pa, pb) = (self.clone(), other.clone());
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                pa.accum_grad(g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                pb.accum_grad(&neg);
            }),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "mul shape mismatch");
        let data = {
            let a = self.data();
            let b = other.data();
            a.iter().zip(b.iter()).map(|(x, y)| x * y).collect()
        };
        let (pa, pb) = (self.clone(), other.clone());
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let ga: Vec<f64> = g.iter().zip(pb.data().iter()).map(|(gi, y)| gi * y).collect();
                let gb: Vec<f64> = g.iter().zip(pa.data().iter()).map(|(gi, x)| gi * x).collect();
                pa.accum_grad(&ga);
                pb.accum_grad(&gb);
            }),
        )
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|x| x * c).collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let gp: Vec<f64> = g.iter().map(|x| x * c).collect();
                p.accum_grad(&gp);
            }),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|x| x + c).collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| p.accum_grad(g)),
        )
    }

    pub fn leaky_relu(&self, slope: f64) -> Tensor {
        let data: Vec<f64> = self
            .data()
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let gp: Vec<f64> = g
                    .iter()
                    .zip(p.data().iter())
                    .map(|(gi, &x)| if x >= 0.0 { *gi } else { slope * gi })
                    .collect();
                p.accum_grad(&gp);
            }),
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&self) -> Tensor {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let fwd = |x: f64| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh());
        let data: Vec<f64> = self.data().iter().map(|&x| fwd(x)).collect();
        let p = self.clone();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let gp: Vec<f64> = g
                    .iter()
                    .zip(p.data().iter())
                    .map(|(gi, &x)| {
                        let u = C * (x + A * x * x * x);
                        let t = u.tanh();
                        let du = C * (1.0 + 3.0 * A * x * x);
                        let d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
                        gi * d
                    })
                    .collect();
                p.accum_grad(&gp);
            }),
        )
    }

    pub fn sum_all(&self) -> Tensor {
        let total: f64 = self.data().iter().sum();
        let p = self.clone();
        let n = self.numel();
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| {
                let gp = vec![g[0]; n];
                p.accum_grad(&gp);
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum_all().scale(1.0 / n)
    }

    // ---- shape ops ----

    pub fn reshape(&self, shape: &[usize]) -> Tensor {
        assert_eq!(numel(shape), self.numel(), "reshape numel mismatch");
        let p = self.clone();
        Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(move |g| p.accum_grad(g)),
        )
    }

    pub fn transpose(&self) -> Tensor {
        let (m, n) = self.dims2();
        let a = self.to_vec();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = a[i * n + j];
            }
        }
        let p = self.clone();
        Tensor::from_op(
            vec![n, m],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        gp[i * n + j] = g[j * m + i];
                    }
                }
                p.accum_grad(&gp);
            }),
        )
    }

    pub(crate) fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape().len(), 2, "expected 2-d tensor, got {:?}", self.shape());
        (self.shape()[0], self.shape()[1])
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = self.dims2();
        let (k2, n) = other.dims2();
        assert_eq!(k, k2, "matmul inner dims: {k} vs {k2}");
        let a = self.to_vec();
        let b = other.to_vec();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                let crow = &mut data[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += aip * brow[j];
                }
            }
        }
        let (pa, pb) = (self.clone(), other.clone());
        Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let a = pa.to_vec();
                let b = pb.to_vec();
                // dA = g . B^T
                let mut ga = vec![0.0; m * k];
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            ga[i * k + p] += gij * b[p * n + j];
                        }
                    }
                }
                // dB = A^T . g
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let aip = a[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gb[p * n + j] += aip * g[i * n + j];
                        }
                    }
                }
                pa.accum_grad(&ga);
                pb.accum_grad(&gb);
            }),
        )
    }

    /// Add a length-n bias row to every row of an [m, n] matrix.
    pub fn add_row(&self, bias: &Tensor) -> Tensor {
        let (m, n) = self.dims2();
        assert_eq!(bias.numel(), n, "bias length mismatch");
        let b = bias.to_vec();
        let data: Vec<f64> = self
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b[i % n])
            .collect();
        let (pa, pb) = (self.clone(), bias.clone());
        Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                pa.accum_grad(g);
                let mut gb = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        gb[j] += g[i * n + j];
                    }
                }
                pb.accum_grad(&gb);
            }),
        )
    }

    /// Column slice `[.., lo..hi)` of an [m, n] matrix.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Tensor {
        let (m, n) = self.dims2();
        assert!(lo <= hi && hi <= n, "slice_cols out of range");
        let w = hi - lo;
        let a = self.data();
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&a[i * n + lo..i * n + hi]);
        }
        drop(a);
        let p = self.clone();
        Tensor::from_op(
            vec![m, w],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                for i in 0..m {
                    gp[i * n + lo..i * n + hi].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                p.accum_grad(&gp);
            }),
        )
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&self, other: &Tensor) -> Tensor {
        let (m, a_cols) = self.dims2();
        let (m2, b_cols) = other.dims2();
        assert_eq!(m, m2, "concat_cols row mismatch");
        let a = self.data();
        let b = other.data();
        let mut data = Vec::with_capacity(m * (a_cols + b_cols));
        for i in 0..m {
            data.extend_from_slice(&a[i * a_cols..(i + 1) * a_cols]);
            data.extend_from_slice(&b[i * b_cols..(i + 1) * b_cols]);
        }
        drop(a);
        drop(b);
        let (pa, pb) = (self.clone(), other.clone());
        let n = a_cols + b_cols;
        Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let mut ga = vec![0.0; m * a_cols];
                let mut gb = vec![0.0; m * b_cols];
                for i in 0..m {
                    ga[i * a_cols..(i + 1) * a_cols].copy_from_slice(&g[i * n..i * n + a_cols]);
                    gb[i * b_cols..(i + 1) * b_cols].copy_from_slice(&g[i * n + a_cols..(i + 1) * n]);
                }
                pa.accum_grad(&ga);
                pb.accum_grad(&gb);
            }),
        )
    }

    /// Row slice `[lo..hi, ..]` of an [m, n] matrix.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Tensor {
        let (m, n) = self.dims2();
        assert!(lo <= hi && hi <= m, "slice_rows out of range");
        let h = hi - lo;
        let data = self.data()[lo * n..hi * n].to_vec();
        let p = self.clone();
        Tensor::from_op(
            vec![h, n],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                gp[lo * n..hi * n].copy_from_slice(g);
                p.accum_grad(&gp);
            }),
        )
    }

    /// Where `mask` is true the output becomes `fill` and no gradient flows.
    pub fn masked_fill(&self, mask: &[bool], fill: f64) -> Tensor {
        assert_eq!(mask.len(), self.numel(), "mask length mismatch");
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(&x, &m)| if m { fill } else { x })
            .collect();
        let p = self.clone();
        let mask = mask.to_vec();
        Tensor::from_op(
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let gp: Vec<f64> = g
                    .iter()
                    .zip(mask.iter())
                    .map(|(&gi, &m)| if m { 0.0 } else { gi })
                    .collect();
                p.accum_grad(&gp);
            }),
        )
    }

    // ---- row-wise softmax family ----

    pub fn softmax_rows(&self) -> Tensor {
        let (m, n) = self.dims2();
        let a = self.to_vec();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..n {
                let e = (row[j] - max).exp();
                data[i * n + j] = e;
                denom += e;
            }
            for j in 0..n {
                data[i * n + j] /= denom;
            }
        }
        let p = self.clone();
        let out_vals = data.clone();
        Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                for i in 0..m {
                    let s = &out_vals[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = s.iter().zip(gr).map(|(si, gi)| si * gi).sum();
                    for j in 0..n {
                        gp[i * n + j] = s[j] * (gr[j] - dot);
                    }
                }
                p.accum_grad(&gp);
            }),
        )
    }

    pub fn log_softmax_rows(&self) -> Tensor {
        let (m, n) = self.dims2();
        let a = self.to_vec();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let row = &a[i * n..(i + 1) * n];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for j in 0..n {
                data[i * n + j] = row[j] - lse;
            }
        }
        let p = self.clone();
        let out_vals = data.clone();
        Tensor::from_op(
            vec![m, n],
            data,
            vec![self.clone()],
            Box::new(move |g| {
                let mut gp = vec![0.0; m * n];
                for i in 0..m {
                    let lp = &out_vals[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..n {
                        gp[i * n + j] = gr[j] - lp[j].exp() * gsum;
                    }
                }
                p.accum_grad(&gp);
            }),
        )
    }
}

#[cfg(test)]
pub(crate) mod gradcheck {
    use super::Tensor;

    /// Central finite-difference check of `f`'s gradient w.r.t. `input`.
    /// Returns the max relative error over all coordinates.
    pub fn finite_diff_rel_err(input: &Tensor, f: impl Fn(&Tensor) -> Tensor) -> f64 {
        let loss = f(input);
        input.zero_grad();
        loss.backward();
        let analytic = input.grad().expect("no gradient reached the input");
        let h = 1e-6;
        let base = input.to_vec();
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let fp = f(&Tensor::param(input.shape(), plus)).item();
            let fm = f(&Tensor::param(input.shape(), minus)).item();
            let numeric = (fp - fm) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::finite_diff_rel_err;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Tensor::param(shape, data)
    }

    #[test]
    fn add_mul_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_tensor(&mut rng, &[3, 4]);
        let w = random_tensor(&mut rng, &[3, 4]);
        let err = finite_diff_rel_err(&x, |x| x.add(&w).mul(x).sum_all());
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn matmul_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_tensor(&mut rng, &[3, 5]);
        let b = random_tensor(&mut rng, &[5, 2]);
        let err_a = finite_diff_rel_err(&a, |a| a.matmul(&b).sum_all());
        let err_b = finite_diff_rel_err(&b, |b| a.matmul(b).mul(&a.matmul(b)).sum_all());
        assert!(err_a < 1e-4 && err_b < 1e-4, "{err_a} {err_b}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_tensor(&mut rng, &[8, 6]);
        let s = x.softmax_rows();
        let d = s.to_vec();
        for i in 0..8 {
            let sum: f64 = d[i * 6..(i + 1) * 6].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {i} sums to {sum}");
        }
    }

    #[test]
    fn log_softmax_translation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_tensor(&mut rng, &[4, 5]);
        let shifted = x.add_scalar(3.7);
        let a = x.log_softmax_rows().to_vec();
        let b = shifted.log_softmax_rows().to_vec();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn slice_concat_recover_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_tensor(&mut rng, &[3, 4]);
        let b = random_tensor(&mut rng, &[3, 2]);
        let cat = a.concat_cols(&b);
        assert_eq!(cat.slice_cols(0, 4).to_vec(), a.to_vec());
        assert_eq!(cat.slice_cols(4, 6).to_vec(), b.to_vec());
        let err = finite_diff_rel_err(&a, |a| a.concat_cols(&b).slice_cols(2, 6).sum_all());
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn grad_accumulates_across_uses() {
        let x = Tensor::param(&[1], vec![2.0]);
        let y = x.add(&x); // dy/dx = 2
        y.backward();
        assert_eq!(x.grad().unwrap()[0], 2.0);
    }

    #[test]
    fn no_graph_recorded_without_params() {
        let a = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = a.scale(2.0).sum_all();
        assert!(!b.requires_grad());
        b.backward();
        assert!(a.grad().is_none());
    }
}
