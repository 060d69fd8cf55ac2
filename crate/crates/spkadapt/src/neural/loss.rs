//! Sequence losses: CTC via the forward-backward algorithm in log space,
//! and KL divergence against epsilon-smoothed one-hot targets.

use super::tensor::Tensor;

const NEG_INF: f64 = f64::NEG_INFINITY;

fn log_add(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Blank-interleaved label sequence: blank, y1, blank, y2, ..., blank.
fn extend_labels(target: &[usize], blank: usize) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &t in target {
        ext.push(t);
        ext.push(blank);
    }
    ext
}

/// Minimum frame count that admits any valid alignment.
pub fn ctc_min_frames(target: &[usize]) -> usize {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    target.len() + repeats
}

/// CTC loss: minus the log of the summed probability of all valid
/// alignments. `logprobs` is [T, V] with log-normalized rows. A target
/// longer than the frame count allows yields an infinite loss with zero
/// gradient (and a warning), rather than a panic.
pub fn ctc_loss(logprobs: &Tensor, target: &[usize], blank: usize) -> Tensor {
    let (t_len, vocab) = logprobs.dims2();
    debug_assert!(target.iter().all(|&t| t < vocab && t != blank));
    if t_len < ctc_min_frames(target) {
        log::warn!(
            "ctc target of length {} (min frames {}) cannot align to {} frames; loss is +inf",
            target.len(),
            ctc_min_frames(target),
            t_len
        );
        let p = logprobs.clone();
        return Tensor::from_op(
            vec![1],
            vec![f64::INFINITY],
            vec![logprobs.clone()],
            Box::new(move |_g| {
                p.accum_grad(&vec![0.0; t_len * vocab]);
            }),
        );
    }

    let lp = logprobs.to_vec();
    let ext = extend_labels(target, blank);
    let s_len = ext.len();

    // Forward variables, emission at frame t included.
    let mut alpha = vec![NEG_INF; t_len * s_len];
    alpha[0] = lp[ext[0]];
    if s_len > 1 {
        alpha[1] = lp[ext[1]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[(t - 1) * s_len + s];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1) * s_len + s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha[(t - 1) * s_len + s - 2]);
            }
            alpha[t * s_len + s] = if acc == NEG_INF {
                NEG_INF
            } else {
                acc + lp[t * vocab + ext[s]]
            };
        }
    }
    let mut log_p = alpha[(t_len - 1) * s_len + s_len - 1];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[(t_len - 1) * s_len + s_len - 2]);
    }

    // Backward variables, emission at frame t included.
    let mut beta = vec![NEG_INF; t_len * s_len];
    beta[(t_len - 1) * s_len + s_len - 1] = lp[(t_len - 1) * vocab + ext[s_len - 1]];
    if s_len > 1 {
        beta[(t_len - 1) * s_len + s_len - 2] = lp[(t_len - 1) * vocab + ext[s_len - 2]];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[(t + 1) * s_len + s];
            if s + 1 < s_len {
                acc = log_add(acc, beta[(t + 1) * s_len + s + 1]);
            }
            if s + 2 < s_len && ext[s] != blank && ext[s + 2] != ext[s] {
                acc = log_add(acc, beta[(t + 1) * s_len + s + 2]);
            }
            beta[t * s_len + s] = if acc == NEG_INF {
                NEG_INF
            } else {
                acc + lp[t * vocab + ext[s]]
            };
        }
    }

    // dL/d logprob[t][k] = -(1/P) sum_{s: ext_s = k} paths through (t, s).
    let p = logprobs.clone();
    Tensor::from_op(
        vec![1],
        vec![-log_p],
        vec![logprobs.clone()],
        Box::new(move |g| {
            let mut grad = vec![0.0; t_len * vocab];
            for t in 0..t_len {
                let mut occ = vec![NEG_INF; vocab];
                for s in 0..s_len {
                    let joint = alpha[t * s_len + s] + beta[t * s_len + s] - lp[t * vocab + ext[s]];
                    if joint != NEG_INF {
                        occ[ext[s]] = log_add(occ[ext[s]], joint);
                    }
                }
                for k in 0..vocab {
                    if occ[k] != NEG_INF {
                        grad[t * vocab + k] = -g[0] * (occ[k] - log_p).exp();
                    }
                }
            }
            p.accum_grad(&grad);
        }),
    )
}

/// KL divergence between the epsilon-smoothed one-hot target distribution
/// and the model distribution, averaged over positions. The target entropy
/// term is included, so epsilon = 0 reduces to mean cross-entropy.
pub fn kl_smoothed_loss(logprobs: &Tensor, targets: &[usize], epsilon: f64) -> Tensor {
    let (n, vocab) = logprobs.dims2();
    assert_eq!(n, targets.len(), "target length mismatch");
    assert!((0.0..1.0).contains(&epsilon), "epsilon must be in [0, 1)");
    let lp = logprobs.to_vec();
    let q_off = epsilon / vocab as f64;
    let q_on = 1.0 - epsilon + q_off;
    let xlogx = |q: f64| if q > 0.0 { q * q.ln() } else { 0.0 };
    let entropy_term = xlogx(q_on) + (vocab - 1) as f64 * xlogx(q_off);

    let mut total = 0.0;
    for (i, &tgt) in targets.iter().enumerate() {
        debug_assert!(tgt < vocab);
        let mut cross = 0.0;
        for k in 0..vocab {
            let q = if k == tgt { q_on } else { q_off };
            cross += q * lp[i * vocab + k];
        }
        total += entropy_term - cross;
    }
    let loss = total / n as f64;

    let p = logprobs.clone();
    let targets = targets.to_vec();
    Tensor::from_op(
        vec![1],
        vec![loss],
        vec![logprobs.clone()],
        Box::new(move |g| {
            let scale = g[0] / n as f64;
            let mut grad = vec![0.0; n * vocab];
            for (i, &tgt) in targets.iter().enumerate() {
                for k in 0..vocab {
                    let q = if k == tgt { q_on } else { q_off };
                    grad[i * vocab + k] = -scale * q;
                }
            }
            p.accum_grad(&grad);
        }),
    )
}
