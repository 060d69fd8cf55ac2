//! Multi-head scaled dot-product attention and sinusoidal positional
//! encodings.

use rand_chacha::ChaCha8Rng;

use super::layers::Linear;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Boolean attention mask, true = blocked. Row = query position,
/// column = key position.
#[derive(Debug, Clone)]
pub struct AttnMask {
    pub q_len: usize,
    pub k_len: usize,
    blocked: Vec<bool>,
}

impl AttnMask {
    pub fn none(q_len: usize, k_len: usize) -> Self {
        AttnMask { q_len, k_len, blocked: vec![false; q_len * k_len] }
    }

    /// Causal mask: query i may attend to keys 0..=i.
    pub fn causal(len: usize) -> Self {
        let mut blocked = vec![false; len * len];
        for i in 0..len {
            for j in i + 1..len {
                blocked[i * len + j] = true;
            }
        }
        AttnMask { q_len: len, k_len: len, blocked }
    }

    pub fn is_blocked(&self, q: usize, k: usize) -> bool {
        self.blocked[q * self.k_len + k]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.blocked
    }
}

/// Standard multi-head attention: per-head scaled dot-product with
/// 1/sqrt(d_head) scaling, masked positions forced to zero weight, heads
/// concatenated and linearly projected.
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub n_heads: usize,
    pub d_model: usize,
}

impl MultiHeadAttention {
    pub fn new(d_model: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if d_model % n_heads != 0 {
            return Err(Error::Argument(format!(
                "d_model {d_model} not divisible by {n_heads} heads"
            )));
        }
        Ok(MultiHeadAttention {
            wq: Linear::new(d_model, d_model, rng),
            wk: Linear::new(d_model, d_model, rng),
            wv: Linear::new(d_model, d_model, rng),
            wo: Linear::new(d_model, d_model, rng),
            n_heads,
            d_model,
        })
    }

    /// q: [Tq, d_model], k/v: [Tk, d_model]. The mask, when present, must be
    /// [Tq, Tk].
    pub fn forward(&self, q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&AttnMask>) -> Tensor {
        let (tq, dq) = q.dims2();
        let (tk, _) = k.dims2();
        assert_eq!(dq, self.d_model, "attention input dim mismatch");
        if let Some(m) = mask {
            assert_eq!((m.q_len, m.k_len), (tq, tk), "mask shape mismatch");
        }
        let d_head = self.d_model / self.n_heads;
        let scale = 1.0 / (d_head as f64).sqrt();

        let qp = self.wq.forward(q);
        let kp = self.wk.forward(k);
        let vp = self.wv.forward(v);

        let mut head_outputs: Option<Tensor> = None;
        for h in 0..self.n_heads {
            let lo = h * d_head;
            let hi = lo + d_head;
            let qh = qp.slice_cols(lo, hi);
            let kh = kp.slice_cols(lo, hi);
            let vh = vp.slice_cols(lo, hi);
            let mut scores = qh.matmul(&kh.transpose()).scale(scale);
            if let Some(m) = mask {
                scores = scores.masked_fill(m.as_slice(), -1e30);
            }
            let weights = scores.softmax_rows();
            let out = weights.matmul(&vh);
            head_outputs = Some(match head_outputs {
                None => out,
                Some(acc) => acc.concat_cols(&out),
            });
        }
        self.wo.forward(&head_outputs.unwrap())
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.wq.named_params(&format!("{prefix}.wq"), out);
        self.wk.named_params(&format!("{prefix}.wk"), out);
        self.wv.named_params(&format!("{prefix}.wv"), out);
        self.wo.named_params(&format!("{prefix}.wo"), out);
    }
}

/// Sinusoidal positional encodings:
/// PE(pos, 2i) = sin(pos / 10000^(2i/dim)), PE(pos, 2i+1) = cos(same).
pub fn sinusoidal_pe(length: usize, dim: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(Error::Argument(format!("positional encoding dim {dim} must be even")));
    }
    let mut pe = vec![0.0; length * dim];
    for pos in 0..length {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / dim as f64);
            pe[pos * dim + 2 * i] = angle.sin();
            pe[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Ok(pe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tensor::gradcheck::finite_diff_rel_err;
    use rand::{Rng, SeedableRng};

    fn random_input(seed: u64, shape: &[usize]) -> Tensor {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.iter().product::<usize>())
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        Tensor::param(shape, data)
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert!(MultiHeadAttention::new(6, 4, &mut r).is_err());
    }

    #[test]
    fn singleton_sequence_outputs_projected_value() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let mha = MultiHeadAttention::new(4, 2, &mut r).unwrap();
        let q = random_input(2, &[1, 4]);
        let k = random_input(3, &[1, 4]);
        let v = random_input(4, &[1, 4]);
        let out = mha.forward(&q, &k, &v, None);
        // softmax over one key = weight 1, so output = wo(wv(v)).
        let expect = mha.wo.forward(&mha.wv.forward(&v));
        for (a, b) in out.to_vec().iter().zip(expect.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_mask_position_zero_attends_only_itself() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let mha = MultiHeadAttention::new(4, 1, &mut r).unwrap();
        let x = random_input(6, &[3, 4]);
        let full = mha.forward(&x, &x, &x, Some(&AttnMask::causal(3)));
        let first = x.slice_rows(0, 1);
        let solo = mha.forward(&first, &first, &first, None);
        for (a, b) in full.to_vec()[0..4].iter().zip(solo.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_grad_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(7);
        let mha = MultiHeadAttention::new(4, 2, &mut r).unwrap();
        let x = random_input(8, &[3, 4]);
        let err = finite_diff_rel_err(&x, |x| {
            let y = mha.forward(x, x, x, Some(&AttnMask::causal(3)));
            y.mul(&y).sum_all()
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn attention_equivariant_to_key_value_permutation() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let mha = MultiHeadAttention::new(4, 2, &mut r).unwrap();
        let q = random_input(10, &[1, 4]);
        let kv = random_input(11, &[4, 4]);
        let out = mha.forward(&q, &kv, &kv, None);
        // Permute key/value rows: output for the query must not change.
        let perm = [2usize, 0, 3, 1];
        let kvv = kv.to_vec();
        let mut permuted = vec![0.0; 16];
        for (dst, &src) in perm.iter().enumerate() {
            permuted[dst * 4..(dst + 1) * 4].copy_from_slice(&kvv[src * 4..(src + 1) * 4]);
        }
        let kv2 = Tensor::from_vec(&[4, 4], permuted);
        let out2 = mha.forward(&q, &kv2, &kv2, None);
        for (a, b) in out.to_vec().iter().zip(out2.to_vec()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pe_position_zero_alternates_zero_one() {
        let pe = sinusoidal_pe(3, 6).unwrap();
        for i in 0..3 {
            assert_eq!(pe[2 * i], 0.0);
            assert_eq!(pe[2 * i + 1], 1.0);
        }
    }

    #[test]
    fn pe_first_column_is_sin_pos() {
        let pe = sinusoidal_pe(10, 4).unwrap();
        for pos in 0..10 {
            assert!((pe[pos * 4] - (pos as f64).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn pe_bounded_and_even_dim_required() {
        let pe = sinusoidal_pe(50, 16).unwrap();
        assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(sinusoidal_pe(4, 5).is_err());
    }
}
