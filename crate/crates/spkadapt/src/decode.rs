//! Inference: CTC greedy decoding with the collapse rules, incremental CTC
//! prefix scoring, and joint CTC/attention beam search with shallow LM
//! fusion.
//!
//! The beam search is written against [`SeqScorer`] so the attention decoder
//! and the language model plug in behind the same interface, and so tests
//! can substitute exhaustive-enumeration oracles.

use crate::error::{Error, Result};

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

/// Log-posterior grid [frames, vocab], rows log-normalized.
#[derive(Debug, Clone)]
pub struct LogPosteriors {
    pub values: Vec<f64>,
    pub frames: usize,
    pub vocab: usize,
}

impl LogPosteriors {
    pub fn new(values: Vec<f64>, frames: usize, vocab: usize) -> Self {
        debug_assert_eq!(values.len(), frames * vocab);
        LogPosteriors { values, frames, vocab }
    }

    fn at(&self, t: usize, k: usize) -> f64 {
        self.values[t * self.vocab + k]
    }
}

/// Greedy best path: per-frame argmax, collapse consecutive duplicates,
/// then remove blanks, in that order. Argmax ties break toward the lower
/// index.
pub fn ctc_greedy(logposteriors: &LogPosteriors, blank: usize) -> Vec<usize> {
    let mut path = Vec::with_capacity(logposteriors.frames);
    for t in 0..logposteriors.frames {
        let mut best = 0;
        for k in 1..logposteriors.vocab {
            if logposteriors.at(t, k) > logposteriors.at(t, best) {
                best = k;
            }
        }
        path.push(best);
    }
    collapse_path(&path, blank)
}

/// The CTC collapse rules applied to a framewise path.
pub fn collapse_path(path: &[usize], blank: usize) -> Vec<usize> {
    // collapse consecutive duplicates first, then delete blanks
    let mut deduped: Vec<usize> = Vec::with_capacity(path.len());
    for &p in path {
        if deduped.last() != Some(&p) {
            deduped.push(p);
        }
    }
    deduped.into_iter().filter(|&p| p != blank).collect()
}

/// Incremental CTC prefix-scoring state for one hypothesis: forward
/// variables split by whether the last emitted frame was blank, plus the
/// hypothesis prefix probability.
#[derive(Debug, Clone)]
pub struct CtcPrefixState {
    /// log P(frames 0..=t emit exactly the prefix, frame t non-blank)
    r_nonblank: Vec<f64>,
    /// log P(frames 0..=t emit exactly the prefix, frame t blank)
    r_blank: Vec<f64>,
    last: Option<usize>,
    /// log P(the prefix is a prefix of the output)
    prefix_logp: f64,
}

pub struct CtcPrefixScorer<'a> {
    post: &'a LogPosteriors,
    blank: usize,
}

impl<'a> CtcPrefixScorer<'a> {
    pub fn new(post: &'a LogPosteriors, blank: usize) -> Self {
        CtcPrefixScorer { post, blank }
    }

    /// State for the empty prefix.
    pub fn initial(&self) -> CtcPrefixState {
        let t_len = self.post.frames;
        let mut r_blank = vec![NEG_INF; t_len];
        let mut acc = 0.0;
        for t in 0..t_len {
            acc += self.post.at(t, self.blank);
            r_blank[t] = acc;
        }
        CtcPrefixState {
            r_nonblank: vec![NEG_INF; t_len],
            r_blank,
            last: None,
            prefix_logp: 0.0,
        }
    }

    /// Extend a state by one non-blank token. Returns the new state; its
    /// `prefix_logp` is the extended prefix's log probability.
    pub fn extend(&self, state: &CtcPrefixState, token: usize) -> CtcPrefixState {
        debug_assert_ne!(token, self.blank);
        let t_len = self.post.frames;
        let mut r_nonblank = vec![NEG_INF; t_len];
        let mut r_blank = vec![NEG_INF; t_len];
        let mut psi = NEG_INF;
        for t in 0..t_len {
            // phi_{t-1}: parent complete at t-1 and able to start `token`
            let phi_prev = if t == 0 {
                if state.last.is_none() { 0.0 } else { NEG_INF }
            } else {
                let mut phi = state.r_blank[t - 1];
                if state.last != Some(token) {
                    phi = log_add(phi, state.r_nonblank[t - 1]);
                }
                phi
            };
            let rn_prev = if t == 0 { NEG_INF } else { r_nonblank[t - 1] };
            let rb_prev = if t == 0 { NEG_INF } else { r_blank[t - 1] };
            r_nonblank[t] = log_add(rn_prev, phi_prev) + self.post.at(t, token);
            r_blank[t] = log_add(rb_prev, rn_prev) + self.post.at(t, self.blank);
            psi = log_add(psi, phi_prev + self.post.at(t, token));
        }
        CtcPrefixState { r_nonblank, r_blank, last: Some(token), prefix_logp: psi }
    }

    pub fn prefix_logp(&self, state: &CtcPrefixState) -> f64 {
        state.prefix_logp
    }

    /// log P(output equals exactly this prefix): the remaining-mass score
    /// used when a hypothesis emits EOS.
    pub fn exact_logp(&self, state: &CtcPrefixState) -> f64 {
        let t = self.post.frames - 1;
        log_add(state.r_nonblank[t], state.r_blank[t])
    }
}

/// log P(prefix + next is a prefix of the CTC output), built incrementally
/// with blank/non-blank forward variables.
pub fn ctc_prefix_score(
    logposteriors: &LogPosteriors,
    prefix: &[usize],
    next: usize,
    blank: usize,
) -> f64 {
    let scorer = CtcPrefixScorer::new(logposteriors, blank);
    let mut state = scorer.initial();
    for &p in prefix {
        state = scorer.extend(&state, p);
    }
    scorer.extend(&state, next).prefix_logp
}

/// log P(the CTC output is exactly `sequence`).
pub fn ctc_sequence_logp(logposteriors: &LogPosteriors, sequence: &[usize], blank: usize) -> f64 {
    let scorer = CtcPrefixScorer::new(logposteriors, blank);
    let mut state = scorer.initial();
    for &p in sequence {
        state = scorer.extend(&state, p);
    }
    scorer.exact_logp(&state)
}

/// Next-token log-probability source: the attention decoder or an external
/// LM. `prefix` excludes BOS/EOS; implementations handle their own BOS.
/// Returned rows must be log-normalized over the full vocabulary.
pub trait SeqScorer {
    fn next_logprobs(&self, prefix: &[usize]) -> Vec<f64>;
}

/// A finished (or best-effort) decode result with its score decomposition.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub att_score: f64,
    pub ctc_score: f64,
    pub lm_score: f64,
    pub total: f64,
    /// False only when no hypothesis emitted EOS within max_len.
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct BeamSearchConfig {
    pub beam: usize,
    pub lm_weight: f64,
    pub ctc_decode_weight: f64,
    pub max_len: usize,
    pub blank: usize,
    pub eos: usize,
}

struct BeamItem {
    tokens: Vec<usize>,
    att: f64,
    lm: f64,
    ctc_state: CtcPrefixState,
    total: f64,
}

fn combine(cfg: &BeamSearchConfig, att: f64, ctc: f64, lm: f64) -> f64 {
    (1.0 - cfg.ctc_decode_weight) * att + cfg.ctc_decode_weight * ctc + cfg.lm_weight * lm
}

/// Joint CTC/attention beam search with shallow LM fusion.
///
/// Hypotheses are expanded token by token and scored
/// (1 - w_ctc) * attention + w_ctc * CTC prefix score + lm_weight * LM.
/// The top `beam` unfinished hypotheses survive each step; EOS extensions
/// retire into a finished pool scored with the CTC remaining-mass
/// (exact-sequence) probability. Ties break by lexicographic token order.
pub fn joint_beam_search(
    att: &dyn SeqScorer,
    lm: Option<&dyn SeqScorer>,
    ctc_post: &LogPosteriors,
    cfg: &BeamSearchConfig,
) -> Result<Hypothesis> {
    if cfg.beam == 0 {
        return Err(Error::Argument("beam must be >= 1".into()));
    }
    if cfg.lm_weight < 0.0 || !(0.0..=1.0).contains(&cfg.ctc_decode_weight) {
        return Err(Error::Argument("weights out of range".into()));
    }
    if cfg.lm_weight > 0.0 && lm.is_none() {
        return Err(Error::Argument("lm_weight > 0 but no LM supplied".into()));
    }
    let scorer = CtcPrefixScorer::new(ctc_post, cfg.blank);
    let vocab = ctc_post.vocab;

    let initial = scorer.initial();
    let mut beams = vec![BeamItem {
        tokens: Vec::new(),
        att: 0.0,
        lm: 0.0,
        total: combine(cfg, 0.0, scorer.prefix_logp(&initial), 0.0),
        ctc_state: initial,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _step in 0..cfg.max_len {
        let mut candidates: Vec<BeamItem> = Vec::new();
        for item in &beams {
            let att_lp = att.next_logprobs(&item.tokens);
            debug_assert_eq!(att_lp.len(), vocab);
            let lm_lp = match lm {
                Some(l) if cfg.lm_weight > 0.0 => l.next_logprobs(&item.tokens),
                _ => vec![0.0; vocab],
            };
            for c in 0..vocab {
                if c == cfg.blank {
                    continue;
                }
                if c == cfg.eos {
                    let att_s = item.att + att_lp[c];
                    let lm_s = item.lm + lm_lp[c];
                    let ctc_s = scorer.exact_logp(&item.ctc_state);
                    finished.push(Hypothesis {
                        tokens: item.tokens.clone(),
                        att_score: att_s,
                        ctc_score: ctc_s,
                        lm_score: lm_s,
                        total: combine(cfg, att_s, ctc_s, lm_s),
                        finished: true,
                    });
                    continue;
                }
                let state = scorer.extend(&item.ctc_state, c);
                let att_s = item.att + att_lp[c];
                let lm_s = item.lm + lm_lp[c];
                let total = combine(cfg, att_s, scorer.prefix_logp(&state), lm_s);
                let mut tokens = item.tokens.clone();
                tokens.push(c);
                candidates.push(BeamItem { tokens, att: att_s, lm: lm_s, ctc_state: state, total });
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| {
            b.total
                .partial_cmp(&a.total)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        candidates.truncate(cfg.beam);
        beams = candidates;
    }

    let best_finished = finished.into_iter().max_by(|a, b| {
        a.total
            .partial_cmp(&b.total)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.tokens.cmp(&a.tokens))
    });
    if let Some(h) = best_finished {
        return Ok(h);
    }
    log::warn!("no hypothesis finished within max_len {}", cfg.max_len);
    let item = beams
        .into_iter()
        .max_by(|a, b| {
            a.total
                .partial_cmp(&b.total)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| b.tokens.cmp(&a.tokens))
        })
        .ok_or_else(|| Error::Domain("beam search produced no hypotheses".into()))?;
    Ok(Hypothesis {
        att_score: item.att,
        ctc_score: scorer.prefix_logp(&item.ctc_state),
        lm_score: item.lm,
        total: item.total,
        tokens: item.tokens,
        finished: false,
    })
}

/// Recompute a hypothesis' three score components from scratch under the
/// same rule; used to verify the decomposition reported by the search.
pub fn rescore_sequence(
    att: &dyn SeqScorer,
    lm: Option<&dyn SeqScorer>,
    ctc_post: &LogPosteriors,
    cfg: &BeamSearchConfig,
    tokens: &[usize],
) -> Hypothesis {
    let mut att_s = 0.0;
    let mut lm_s = 0.0;
    for i in 0..=tokens.len() {
        let prefix = &tokens[..i];
        let next = if i == tokens.len() { cfg.eos } else { tokens[i] };
        att_s += att.next_logprobs(prefix)[next];
        if let Some(l) = lm {
            if cfg.lm_weight > 0.0 {
                lm_s += l.next_logprobs(prefix)[next];
            }
        }
    }
    let ctc_s = ctc_sequence_logp(ctc_post, tokens, cfg.blank);
    Hypothesis {
        tokens: tokens.to_vec(),
        att_score: att_s,
        ctc_score: ctc_s,
        lm_score: lm_s,
        total: combine(cfg, att_s, ctc_s, lm_s),
        finished: true,
    }
}
