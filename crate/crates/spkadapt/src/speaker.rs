//! Speaker embeddings: ingestion, per-speaker prototype pooling, scaling,
//! and frame-wise concatenation with acoustic features.
//!
//! Embedding file format: text, one row per utterance,
//! `utt_id` followed by whitespace-separated decimal floats. `#` lines are
//! provenance comments.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceRecord;
use crate::error::{Error, Result};
use crate::features::{mel_filterbank, FeatureMatrix};
use crate::neural::{fan_in_uniform, Tensor};
use crate::signal::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Xvector,
    Ecapa,
    OracleOnehot,
    Other,
}

impl EmbeddingKind {
    /// Conventional dimension for the toy embedder, by style.
    pub fn default_dim(&self) -> Option<usize> {
        match self {
            EmbeddingKind::Xvector => Some(512),
            EmbeddingKind::Ecapa => Some(192),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerEmbedding {
    pub utt_id: String,
    pub vector: Vec<f64>,
    pub kind: EmbeddingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    Minmax01,
    None,
    Zscore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerPrototype {
    pub speaker_id: String,
    pub vector: Vec<f64>,
    pub n_pooled: usize,
    pub scaling: Scaling,
}

impl SpeakerPrototype {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Load utterance embeddings; every row must share one dimension.
pub fn load_embeddings(path: &Path, kind: EmbeddingKind) -> Result<Vec<SpeakerEmbedding>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<SpeakerEmbedding> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let utt_id = parts
            .next()
            .ok_or_else(|| Error::parse(path, idx + 1, "missing utt_id"))?
            .to_string();
        let vector: Vec<f64> = parts
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, idx + 1, format!("bad float `{t}`")))
            })
            .collect::<Result<_>>()?;
        if vector.is_empty() {
            return Err(Error::parse(path, idx + 1, "row has no components"));
        }
        if let Some(first) = out.first() {
            if first.vector.len() != vector.len() {
                return Err(Error::Validation(format!(
                    "dimension mismatch at {}:{}: {} vs {}",
                    path.display(),
                    idx + 1,
                    vector.len(),
                    first.vector.len()
                )));
            }
        }
        out.push(SpeakerEmbedding { utt_id, vector, kind });
    }
    Ok(out)
}

pub fn save_embeddings(path: &Path, embeddings: &[SpeakerEmbedding], header: &[String]) -> Result<()> {
    let mut out = String::new();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    for e in embeddings {
        out.push_str(&e.utt_id);
        for v in &e.vector {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Min-max scale to [0, 1]: x -> (x - min)/(max - min). Constant vectors map
/// to all-0.5.
pub fn minmax_scale(vector: &[f64]) -> Vec<f64> {
    let min = vector.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vector.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return vec![0.5; vector.len()];
    }
    vector.iter().map(|x| (x - min) / (max - min)).collect()
}

/// Zero mean, unit variance. Kept as the A/B alternative; min-max is the
/// default. Constant vectors map to all zeros.
pub fn zscore_scale(vector: &[f64]) -> Vec<f64> {
    let n = vector.len() as f64;
    let mean = vector.iter().sum::<f64>() / n;
    let var = vector.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return vec![0.0; vector.len()];
    }
    let inv = 1.0 / var.sqrt();
    vector.iter().map(|x| (x - mean) * inv).collect()
}

pub fn apply_scaling(vector: &[f64], scaling: Scaling) -> Vec<f64> {
    match scaling {
        Scaling::Minmax01 => minmax_scale(vector),
        Scaling::Zscore => zscore_scale(vector),
        Scaling::None => vector.to_vec(),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PrototypeOptions {
    pub scaling: Scaling,
    /// Scale per-utterance vectors before pooling instead of scaling the
    /// pooled mean. Default false: the prototype mean is scaled once.
    pub scale_before_pooling: bool,
}

impl Default for PrototypeOptions {
    fn default() -> Self {
        PrototypeOptions { scaling: Scaling::Minmax01, scale_before_pooling: false }
    }
}

/// Per-speaker prototypes: the arithmetic mean over that speaker's utterance
/// vectors, then scaled (or scaled-then-pooled when configured). Every
/// manifest utterance must have an embedding.
pub fn speaker_prototype(
    embeddings: &[SpeakerEmbedding],
    manifest: &[UtteranceRecord],
    opts: PrototypeOptions,
) -> Result<BTreeMap<String, SpeakerPrototype>> {
    let by_utt: HashMap<&str, &SpeakerEmbedding> =
        embeddings.iter().map(|e| (e.utt_id.as_str(), e)).collect();
    let mut pooled: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for rec in manifest {
        let emb = by_utt.get(rec.utt_id.as_str()).ok_or_else(|| {
            Error::Validation(format!("no embedding for utterance `{}`", rec.utt_id))
        })?;
        let vec = if opts.scale_before_pooling {
            apply_scaling(&emb.vector, opts.scaling)
        } else {
            emb.vector.clone()
        };
        let entry = pooled
            .entry(rec.speaker_id.clone())
            .or_insert_with(|| (vec![0.0; vec.len()], 0));
        if entry.0.len() != vec.len() {
            return Err(Error::Validation("embedding dimension mismatch".into()));
        }
        for (acc, v) in entry.0.iter_mut().zip(&vec) {
            *acc += v;
        }
        entry.1 += 1;
    }
    Ok(pooled
        .into_iter()
        .map(|(speaker_id, (sum, n))| {
            let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
            let vector = if opts.scale_before_pooling {
                mean
            } else {
                apply_scaling(&mean, opts.scaling)
            };
            (
                speaker_id.clone(),
                SpeakerPrototype { speaker_id, vector, n_pooled: n, scaling: opts.scaling },
            )
        })
        .collect())
}

/// Prototype map plus a global-mean fallback for speakers unseen at
/// prototype time.
#[derive(Debug, Clone)]
pub struct PrototypeBook {
    pub prototypes: BTreeMap<String, SpeakerPrototype>,
    pub fallback: SpeakerPrototype,
}

impl PrototypeBook {
    pub fn new(prototypes: BTreeMap<String, SpeakerPrototype>) -> Result<Self> {
        let first = prototypes
            .values()
            .next()
            .ok_or_else(|| Error::Validation("cannot build a book from zero prototypes".into()))?;
        let dim = first.dim();
        let scaling = first.scaling;
        let mut mean = vec![0.0; dim];
        for p in prototypes.values() {
            if p.dim() != dim {
                return Err(Error::Validation("prototype dimension mismatch".into()));
            }
            for (m, v) in mean.iter_mut().zip(&p.vector) {
                *m += v;
            }
        }
        let n = prototypes.len();
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let fallback = SpeakerPrototype {
            speaker_id: "<global>".into(),
            vector: mean,
            n_pooled: n,
            scaling,
        };
        Ok(PrototypeBook { prototypes, fallback })
    }

    /// The speaker's prototype, or the global mean for unknown speakers.
    pub fn get(&self, speaker_id: &str) -> &SpeakerPrototype {
        self.prototypes.get(speaker_id).unwrap_or(&self.fallback)
    }

    pub fn dim(&self) -> usize {
        self.fallback.dim()
    }

    pub fn save(&self, path: &Path, header: &[String]) -> Result<()> {
        let mut out = String::new();
        for h in header {
            writeln!(out, "# {h}").unwrap();
        }
        let scaling = match self.fallback.scaling {
            Scaling::Minmax01 => "minmax01",
            Scaling::None => "none",
            Scaling::Zscore => "zscore",
        };
        writeln!(out, "# scaling={scaling}").unwrap();
        for p in self.prototypes.values() {
            write!(out, "{} {}", p.speaker_id, p.n_pooled).unwrap();
            for v in &p.vector {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut scaling = Scaling::Minmax01;
        let mut prototypes = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("# scaling=") {
                scaling = match rest.trim() {
                    "minmax01" => Scaling::Minmax01,
                    "none" => Scaling::None,
                    "zscore" => Scaling::Zscore,
                    other => {
                        return Err(Error::parse(path, idx + 1, format!("unknown scaling `{other}`")))
                    }
                };
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let speaker_id = parts
                .next()
                .ok_or_else(|| Error::parse(path, idx + 1, "missing speaker_id"))?
                .to_string();
            let n_pooled: usize = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(path, idx + 1, "missing n_pooled"))?;
            let vector: Vec<f64> = parts
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::parse(path, idx + 1, format!("bad float `{t}`")))
                })
                .collect::<Result<_>>()?;
            prototypes.insert(
                speaker_id.clone(),
                SpeakerPrototype { speaker_id, vector, n_pooled, scaling },
            );
        }
        PrototypeBook::new(prototypes)
    }
}

/// Frame-wise concatenation: every output row is [feature row, prototype].
pub fn concat_speaker(features: &FeatureMatrix, prototype: &SpeakerPrototype) -> FeatureMatrix {
    let e = prototype.dim();
    let mut values = Vec::with_capacity(features.frames * (features.dims + e));
    for f in 0..features.frames {
        values.extend_from_slice(features.row(f));
        values.extend_from_slice(&prototype.vector);
    }
    FeatureMatrix {
        values,
        frames: features.frames,
        dims: features.dims + e,
        frame_shift_s: features.frame_shift_s,
        origin: features.origin,
    }
}

/// One-hot speaker-identity embeddings: dimension = number of distinct
/// speakers in manifest order of first appearance. Removes embedder quality
/// as a confounder in mechanism tests.
pub fn oracle_onehot_embeddings(manifest: &[UtteranceRecord]) -> Vec<SpeakerEmbedding> {
    let mut speaker_slot: BTreeMap<&str, usize> = BTreeMap::new();
    for rec in manifest {
        let next = speaker_slot.len();
        speaker_slot.entry(rec.speaker_id.as_str()).or_insert(next);
    }
    let dim = speaker_slot.len();
    manifest
        .iter()
        .map(|rec| {
            let mut vector = vec![0.0; dim];
            vector[speaker_slot[rec.speaker_id.as_str()]] = 1.0;
            SpeakerEmbedding {
                utt_id: rec.utt_id.clone(),
                vector,
                kind: EmbeddingKind::OracleOnehot,
            }
        })
        .collect()
}

/// Toy utterance embedder: 24-band log-mel statistics (mean and standard
/// deviation per band) pushed through a seeded random projection with tanh.
/// Speaker-discriminative at desk scale because the toy voices differ in F0
/// and spectral envelope; no claim beyond that.
pub struct ToyEmbedder {
    projection: Vec<f64>,
    dim: usize,
    kind: EmbeddingKind,
}

const TOY_EMBED_MELS: usize = 24;

impl ToyEmbedder {
    pub fn new(kind: EmbeddingKind, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = 2 * TOY_EMBED_MELS;
        ToyEmbedder {
            projection: fan_in_uniform(&mut rng, in_dim, in_dim * dim),
            dim,
            kind,
        }
    }

    pub fn embed(&self, utt_id: &str, audio: &AudioBuffer) -> Result<SpeakerEmbedding> {
        let fm = mel_filterbank(audio, TOY_EMBED_MELS, 0.025, 0.010)?;
        let mut stats = vec![0.0; 2 * TOY_EMBED_MELS];
        for d in 0..TOY_EMBED_MELS {
            let mut mean = 0.0;
            for f in 0..fm.frames {
                mean += fm.values[f * fm.dims + d];
            }
            mean /= fm.frames as f64;
            let mut var = 0.0;
            for f in 0..fm.frames {
                let x = fm.values[f * fm.dims + d] - mean;
                var += x * x;
            }
            stats[d] = mean;
            stats[TOY_EMBED_MELS + d] = (var / fm.frames as f64).sqrt();
        }
        let in_dim = stats.len();
        let vector: Vec<f64> = (0..self.dim)
            .map(|o| {
                let mut acc = 0.0;
                for (i, s) in stats.iter().enumerate() {
                    acc += s * self.projection[i * self.dim + o];
                }
                acc.tanh()
            })
            .collect();
        debug_assert_eq!(in_dim, 2 * TOY_EMBED_MELS);
        Ok(SpeakerEmbedding { utt_id: utt_id.to_string(), vector, kind: self.kind })
    }
}

/// Prototype as a non-trainable [1, E] tensor row for model input wiring.
pub fn prototype_tensor(p: &SpeakerPrototype) -> Tensor {
    Tensor::from_vec(&[1, p.dim()], p.vector.clone())
}
