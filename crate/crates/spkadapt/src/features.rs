//! Acoustic features: log-mel filterbanks (HTK mel scale, Hamming window,
//! power spectrum) and a seeded strided-convolution stack standing in for a
//! pretrained frozen extractor. The stub guarantees shapes, determinism and
//! trainability plumbing, nothing about linguistic quality.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::neural::{Conv1d, LayerNorm, Linear, Tensor};
use crate::signal::AudioBuffer;

pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureOrigin {
    Mel,
    FrozenExtractor,
}

/// frames x dims feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Vec<f64>,
    pub frames: usize,
    pub dims: usize,
    pub frame_shift_s: f64,
    pub origin: FeatureOrigin,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dims..(i + 1) * self.dims]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[self.frames, self.dims], self.values.clone())
    }

    /// Per-utterance mean/variance normalization, per dimension. Off by
    /// default everywhere; surfaced as a config flag.
    pub fn normalize(&mut self) {
        for d in 0..self.dims {
            let mut mean = 0.0;
            for f in 0..self.frames {
                mean += self.values[f * self.dims + d];
            }
            mean /= self.frames as f64;
            let mut var = 0.0;
            for f in 0..self.frames {
                let x = self.values[f * self.dims + d] - mean;
                var += x * x;
            }
            var /= self.frames as f64;
            let inv = 1.0 / (var + 1e-10).sqrt();
            for f in 0..self.frames {
                let v = &mut self.values[f * self.dims + d];
                *v = (*v - mean) * inv;
            }
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filter center frequencies in Hz for `n_mels` bands spanning
/// [0, rate/2].
pub fn mel_center_frequencies(n_mels: usize, rate_hz: u32) -> Vec<f64> {
    let mel_max = hz_to_mel(rate_hz as f64 / 2.0);
    (1..=n_mels)
        .map(|m| mel_to_hz(mel_max * m as f64 / (n_mels + 1) as f64))
        .collect()
}

fn mel_filter_weights(n_mels: usize, n_fft: usize, rate_hz: u32) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let mel_max = hz_to_mel(rate_hz as f64 / 2.0);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|m| mel_to_hz(mel_max * m as f64 / (n_mels + 1) as f64))
        .collect();
    let mut filters = vec![vec![0.0; n_bins]; n_mels];
    for m in 0..n_mels {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * rate_hz as f64 / n_fft as f64;
            let w = if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            filters[m][k] = w.max(0.0);
        }
    }
    filters
}

pub fn mel_frame_count(len: usize, win: usize, hop: usize) -> usize {
    (len - win) / hop + 1
}

/// Log-mel filterbank features. `win_s`/`hop_s` are the frame width and
/// shift in seconds; frames = floor((len - win)/hop) + 1.
pub fn mel_filterbank(
    signal: &AudioBuffer,
    n_mels: usize,
    win_s: f64,
    hop_s: f64,
) -> Result<FeatureMatrix> {
    let win = (win_s * signal.rate_hz as f64).round() as usize;
    let hop = (hop_s * signal.rate_hz as f64).round() as usize;
    if win == 0 || hop == 0 || n_mels == 0 {
        return Err(Error::Argument("window, hop and n_mels must be positive".into()));
    }
    if signal.len() < win {
        return Err(Error::Argument(format!(
            "signal of {} samples shorter than one {}-sample window",
            signal.len(),
            win
        )));
    }
    let n_fft = win.next_power_of_two();
    let frames = mel_frame_count(signal.len(), win, hop);
    let filters = mel_filter_weights(n_mels, n_fft, signal.rate_hz);
    let hamming: Vec<f64> = (0..win)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos())
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let n_bins = n_fft / 2 + 1;

    let mut values = Vec::with_capacity(frames * n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for f in 0..frames {
        let start = f * hop;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < win {
                Complex::new(signal.samples[start + i] * hamming[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        for filter in &filters {
            let energy: f64 = filter.iter().zip(&power).map(|(w, p)| w * p).sum();
            values.push((energy + LOG_FLOOR).ln());
        }
    }
    Ok(FeatureMatrix {
        values,
        frames,
        dims: n_mels,
        frame_shift_s: hop_s,
        origin: FeatureOrigin::Mel,
    })
}

/// Configuration for the toy frozen extractor: a strided conv stack with
/// total stride 320, so 16 kHz audio yields ~50 frames/s of `out_dim`
/// vectors. Weights are fixed from `seed`; `trainable` includes them in the
/// autodiff graph (and therefore in training).
#[derive(Debug, Clone)]
pub struct FrozenExtractorConfig {
    pub out_dim: usize,
    pub trainable: bool,
    pub seed: u64,
}

impl Default for FrozenExtractorConfig {
    fn default() -> Self {
        FrozenExtractorConfig { out_dim: 1024, trainable: false, seed: 0 }
    }
}

pub const EXTRACTOR_RATE_HZ: u32 = 16000;
pub const EXTRACTOR_STRIDE: usize = 320;
const EXTRACTOR_STAGES: [(usize, usize); 4] = [(48, 5), (64, 4), (64, 4), (64, 4)];

fn freeze(t: &Tensor) -> Tensor {
    Tensor::from_vec(t.shape(), t.to_vec())
}

pub struct FrozenExtractor {
    convs: Vec<Conv1d>,
    norms: Vec<LayerNorm>,
    proj: Linear,
    pub cfg: FrozenExtractorConfig,
}

impl FrozenExtractor {
    pub fn new(cfg: FrozenExtractorConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut in_ch = 1;
        for &(out_ch, stride) in &EXTRACTOR_STAGES {
            // kernel == stride: exact T/320 frame arithmetic end to end
            convs.push(Conv1d::new(in_ch, out_ch, stride, stride, 0, &mut rng));
            norms.push(LayerNorm::new(out_ch));
            in_ch = out_ch;
        }
        let proj = Linear::new(in_ch, cfg.out_dim, &mut rng);
        let mut ex = FrozenExtractor { convs, norms, proj, cfg };
        if !ex.cfg.trainable {
            for conv in &mut ex.convs {
                conv.weight = freeze(&conv.weight);
                conv.bias = freeze(&conv.bias);
            }
            for norm in &mut ex.norms {
                norm.gamma = freeze(&norm.gamma);
                norm.beta = freeze(&norm.beta);
            }
            ex.proj.weight = freeze(&ex.proj.weight);
            ex.proj.bias = freeze(&ex.proj.bias);
        }
        ex
    }

    pub fn out_frames(&self, samples: usize) -> usize {
        let mut t = samples;
        for &(_, stride) in &EXTRACTOR_STAGES {
            t /= stride;
        }
        t
    }

    /// Graph-building forward, for when the extractor trains jointly.
    pub fn forward_tensor(&self, audio: &Tensor) -> Tensor {
        let mut x = audio.clone();
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            x = norm.forward(&conv.forward(&x)).gelu();
        }
        self.proj.forward(&x)
    }

    pub fn extract(&self, signal: &AudioBuffer) -> Result<FeatureMatrix> {
        if signal.rate_hz != EXTRACTOR_RATE_HZ {
            return Err(Error::Argument(format!(
                "extractor expects {EXTRACTOR_RATE_HZ} Hz input, got {}",
                signal.rate_hz
            )));
        }
        if signal.len() < EXTRACTOR_STRIDE {
            return Err(Error::Argument("input shorter than one extractor stride".into()));
        }
        let audio = Tensor::from_vec(&[signal.len(), 1], signal.samples.clone());
        let out = self.forward_tensor(&audio);
        let (frames, dims) = (out.shape()[0], out.shape()[1]);
        Ok(FeatureMatrix {
            values: out.to_vec(),
            frames,
            dims,
            frame_shift_s: EXTRACTOR_STRIDE as f64 / EXTRACTOR_RATE_HZ as f64,
            origin: FeatureOrigin::FrozenExtractor,
        })
    }

    /// Empty unless `trainable`.
    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        if !self.cfg.trainable {
            return;
        }
        for (i, (conv, norm)) in self.convs.iter().zip(&self.norms).enumerate() {
            conv.named_params(&format!("{prefix}.conv{i}"), out);
            norm.named_params(&format!("{prefix}.norm{i}"), out);
        }
        self.proj.named_params(&format!("{prefix}.proj"), out);
    }
}

const FEAT_MAGIC: &[u8; 8] = b"SPKFEAT1";

/// Feature cache entry: small header (provenance, dims, frames, frame shift,
/// origin) then row-major f32 values.
pub fn save_features(
    path: &Path,
    fm: &FeatureMatrix,
    config_hash: &str,
    seed: u64,
    tool_version: &str,
) -> Result<()> {
    let mut out = Vec::with_capacity(64 + fm.values.len() * 4);
    out.extend_from_slice(FEAT_MAGIC);
    out.extend_from_slice(&(config_hash.len() as u32).to_le_bytes());
    out.extend_from_slice(config_hash.as_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&(tool_version.len() as u32).to_le_bytes());
    out.extend_from_slice(tool_version.as_bytes());
    out.extend_from_slice(&(fm.dims as u32).to_le_bytes());
    out.extend_from_slice(&(fm.frames as u32).to_le_bytes());
    out.extend_from_slice(&(fm.frame_shift_s as f32).to_le_bytes());
    out.push(match fm.origin {
        FeatureOrigin::Mel => 0,
        FeatureOrigin::FrozenExtractor => 1,
    });
    for &v in &fm.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::parse(path, 0, msg);
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(fail("truncated feature file"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    if take(&mut pos, 8)? != FEAT_MAGIC {
        return Err(fail("not a feature cache file"));
    }
    let hash_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    take(&mut pos, hash_len)?;
    take(&mut pos, 8)?; // seed
    let ver_len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    take(&mut pos, ver_len)?;
    let dims = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let frame_shift_s = f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as f64;
    let origin = match take(&mut pos, 1)?[0] {
        0 => FeatureOrigin::Mel,
        1 => FeatureOrigin::FrozenExtractor,
        o => return Err(fail(&format!("unknown origin tag {o}"))),
    };
    let raw = take(&mut pos, frames * dims * 4)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(FeatureMatrix { values, frames, dims, frame_shift_s, origin })
}
