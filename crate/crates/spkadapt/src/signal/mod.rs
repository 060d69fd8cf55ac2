//! Audio-domain transforms: SNR-exact noise mixing, windowed-sinc resampling,
//! speed perturbation, and time-domain masking.
//!
//! All operations are pure and deterministic under a fixed seed. Mixing may
//! push samples beyond [-1, 1]; nothing here renormalizes, since peak
//! normalization would silently change the realized SNR. Clamping happens
//! only at WAV write time.

mod wav;

pub use wav::{read_wav, write_wav};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Mono sample sequence with rate; the unit of all DSP work.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    /// Nominally in [-1, 1]; mixing can exceed the range.
    pub samples: Vec<f64>,
    pub rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, rate_hz: u32) -> Result<Self> {
        if rate_hz == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Argument("samples must be finite".into()));
        }
        Ok(AudioBuffer { samples, rate_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate_hz as f64
    }
}

/// Noise source plus target SNR; `seed` fixes the noise segment choice so
/// repeated runs (and all model variants within a run) hear identical noise.
#[derive(Debug, Clone)]
pub struct SnrSpec {
    pub snr_db: f64,
    pub seed: u64,
}

/// Mean square over the full buffer.
pub fn power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

/// Crop or loop `noise` to exactly `len` samples, starting at `offset`.
/// Shorter noise wraps around; longer noise is cropped.
fn fit_to_len(noise: &[f64], len: usize, offset: usize) -> Vec<f64> {
    let n = noise.len();
    (0..len).map(|i| noise[(offset + i) % n]).collect()
}

fn mix_with_offset(
    signal: &AudioBuffer,
    noise: &AudioBuffer,
    snr_db: f64,
    offset: usize,
) -> Result<AudioBuffer> {
    if signal.rate_hz != noise.rate_hz {
        return Err(Error::Argument(format!(
            "rate mismatch: signal {} Hz vs noise {} Hz",
            signal.rate_hz, noise.rate_hz
        )));
    }
    if signal.is_empty() || noise.is_empty() {
        return Err(Error::Argument("mix inputs must be non-empty".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Argument("snr_db must be finite".into()));
    }
    let p_signal = power(&signal.samples);
    if p_signal <= 0.0 {
        return Err(Error::Domain("signal is silent (zero power)".into()));
    }
    let fitted = fit_to_len(&noise.samples, signal.len(), offset);
    let p_noise = power(&fitted);
    if p_noise <= 0.0 {
        return Err(Error::Domain("noise is silent (zero power)".into()));
    }
    // a = sqrt(P_s / (P_n 10^(snr/10))) so that 10 log10(P_s / P_{a.n}) = snr_db.
    let a = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = signal
        .samples
        .iter()
        .zip(&fitted)
        .map(|(s, n)| s + a * n)
        .collect();
    Ok(AudioBuffer {
        samples,
        rate_hz: signal.rate_hz,
    })
}

/// Additively mix `noise` into `signal` at an exact SNR in dB, with the
/// noise cropped/looped to the signal length from offset 0.
///
/// Powers are measured as mean square over the full overlap, so the post-hoc
/// SNR of the output equals `snr_db` up to floating-point rounding.
pub fn mix_at_snr(signal: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    mix_with_offset(signal, noise, snr_db, 0)
}

/// Like [`mix_at_snr`] but the noise segment offset is drawn from `spec.seed`.
pub fn mix_with_spec(signal: &AudioBuffer, noise: &AudioBuffer, spec: &SnrSpec) -> Result<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let offset = if noise.len() > signal.len() {
        rng.gen_range(0..=noise.len() - signal.len())
    } else {
        0
    };
    mix_with_offset(signal, noise, spec.snr_db, offset)
}

/// Post-hoc SNR of `mixed` against the known clean `signal`, in dB.
pub fn measured_snr_db(signal: &AudioBuffer, mixed: &AudioBuffer) -> Result<f64> {
    if signal.len() != mixed.len() {
        return Err(Error::Argument("length mismatch".into()));
    }
    let noise: Vec<f64> = mixed
        .samples
        .iter()
        .zip(&signal.samples)
        .map(|(m, s)| m - s)
        .collect();
    let p_s = power(&signal.samples);
    let p_n = power(&noise);
    if p_s <= 0.0 || p_n <= 0.0 {
        return Err(Error::Domain("zero power in SNR measurement".into()));
    }
    Ok(10.0 * (p_s / p_n).log10())
}

/// Synthetic noise kinds for when no noise corpus is at hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticNoise {
    White,
    /// White noise shaped by a one-pole lowpass, roughly 1/f above the knee.
    Pink,
}

impl SyntheticNoise {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(SyntheticNoise::White),
            "pink" => Ok(SyntheticNoise::Pink),
            other => Err(Error::Argument(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// Deterministic synthetic noise generator.
pub fn synth_noise(kind: SyntheticNoise, len: usize, rate_hz: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0) * 0.5).collect();
    if kind == SyntheticNoise::Pink {
        let mut state = 0.0;
        let alpha = 0.98;
        for s in samples.iter_mut() {
            state = alpha * state + (1.0 - alpha) * *s;
            *s = state * 8.0;
        }
    }
    AudioBuffer { samples, rate_hz }
}

// Zeroth-order modified Bessel function, for the Kaiser window.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_x = x / 2.0;
    for k in 1..64 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

/// Windowed-sinc resampler: Kaiser window (beta 8.6), cutoff at 0.95 of the
/// narrower Nyquist. Output length is round(len * to_hz / rate_hz).
pub fn resample(signal: &AudioBuffer, to_hz: u32) -> Result<AudioBuffer> {
    if to_hz == 0 {
        return Err(Error::Argument("target rate must be positive".into()));
    }
    if signal.is_empty() {
        return Err(Error::Argument("cannot resample an empty buffer".into()));
    }
    if to_hz == signal.rate_hz {
        return Ok(signal.clone());
    }
    let from = signal.rate_hz as f64;
    let to = to_hz as f64;
    let ratio = to / from;
    // Cutoff in cycles per input sample.
    let fc = 0.475 * ratio.min(1.0);
    let half_width = (16.0 / (2.0 * fc)).ceil();
    let beta = 8.6;
    let i0_beta = bessel_i0(beta);

    let out_len = ((signal.len() as u64 * to_hz as u64 + signal.rate_hz as u64 / 2)
        / signal.rate_hz as u64) as usize;
    let x = &signal.samples;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio;
        let lo = ((t - half_width).ceil() as i64).max(0);
        let hi = ((t + half_width).floor() as i64).min(x.len() as i64 - 1);
        let mut acc = 0.0;
        for m in lo..=hi {
            let d = m as f64 - t;
            let sinc = if d.abs() < 1e-12 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * d).sin() / (std::f64::consts::PI * d)
            };
            let w_arg = d / half_width;
            let window = bessel_i0(beta * (1.0 - w_arg * w_arg).max(0.0).sqrt()) / i0_beta;
            acc += x[m as usize] * sinc * window;
        }
        out.push(acc);
    }
    Ok(AudioBuffer {
        samples: out,
        rate_hz: to_hz,
    })
}

/// Speed perturbation as resample-and-relabel: the waveform is resampled to
/// `rate / factor` and the result relabeled at the original rate, so duration
/// scales by 1/factor and frequencies by factor.
pub fn speed_perturb(signal: &AudioBuffer, factor: f64) -> Result<AudioBuffer> {
    if factor <= 0.0 || !factor.is_finite() {
        return Err(Error::Argument("speed factor must be positive".into()));
    }
    if (factor - 1.0).abs() < 1e-12 {
        return Ok(signal.clone());
    }
    let inner_rate = (signal.rate_hz as f64 / factor).round() as u32;
    let mut out = resample(signal, inner_rate)?;
    out.rate_hz = signal.rate_hz;
    Ok(out)
}

/// Time-domain masking policy: `k` chunks with `k` in `[min_chunks, max_chunks]`
/// and each chunk length in `[min_len, max_len]` samples. Chunks never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskPolicy {
    pub min_chunks: usize,
    pub max_chunks: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl MaskPolicy {
    pub fn validate(&self, signal_len: usize) -> Result<()> {
        if self.min_chunks > self.max_chunks {
            return Err(Error::Argument("min_chunks > max_chunks".into()));
        }
        if self.min_len > self.max_len {
            return Err(Error::Argument("min_len > max_len".into()));
        }
        if self.max_chunks * self.max_len > signal_len {
            return Err(Error::Argument(format!(
                "mask policy cannot fit: {} chunks x {} samples > signal length {}",
                self.max_chunks, self.max_len, signal_len
            )));
        }
        Ok(())
    }

    /// Total zeroed samples are guaranteed inside this closed interval.
    pub fn total_bounds(&self) -> (usize, usize) {
        (self.min_chunks * self.min_len, self.max_chunks * self.max_len)
    }
}

/// Zero out explicit `[start, start+len)` spans; everything else untouched.
pub fn zero_spans(signal: &AudioBuffer, spans: &[(usize, usize)]) -> Result<AudioBuffer> {
    let mut out = signal.clone();
    for &(start, len) in spans {
        if start + len > out.samples.len() {
            return Err(Error::Argument(format!(
                "span [{start}, {}) exceeds signal length {}",
                start + len,
                out.samples.len()
            )));
        }
        for s in &mut out.samples[start..start + len] {
            *s = 0.0;
        }
    }
    Ok(out)
}

/// Time-domain SpecAugment: replace `k` random non-overlapping chunks with
/// zeros, deterministically from `seed`.
pub fn time_mask(signal: &AudioBuffer, policy: &MaskPolicy, seed: u64) -> Result<AudioBuffer> {
    policy.validate(signal.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(policy.min_chunks..=policy.max_chunks);
    if k == 0 {
        return Ok(signal.clone());
    }
    let lens: Vec<usize> = (0..k)
        .map(|_| rng.gen_range(policy.min_len..=policy.max_len))
        .collect();
    let total: usize = lens.iter().sum();
    let free = signal.len() - total;
    // Place k disjoint chunks: draw offsets into the free space, sort, then
    // shift each by the cumulative length of the chunks before it.
    let mut offsets: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=free)).collect();
    offsets.sort_unstable();
    let mut spans = Vec::with_capacity(k);
    let mut consumed = 0;
    for (off, len) in offsets.into_iter().zip(&lens) {
        spans.push((off + consumed, *len));
        consumed += len;
    }
    zero_spans(signal, &spans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: u32, len: usize, amp: f64) -> AudioBuffer {
        let samples = (0..len)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioBuffer { samples, rate_hz: rate }
    }

    fn random_buf(seed: u64, len: usize, rate: u32) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer {
            samples: (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            rate_hz: rate,
        }
    }

    /// Zero-crossing frequency estimate, used as an independent oracle.
    fn zero_crossing_freq(buf: &AudioBuffer) -> f64 {
        let mut crossings = 0usize;
        for w in buf.samples.windows(2) {
            if (w[0] >= 0.0) != (w[1] >= 0.0) {
                crossings += 1;
            }
        }
        crossings as f64 / 2.0 / buf.duration_s()
    }

    #[test]
    fn equal_power_snr0_gives_unit_scale() {
        let s = tone(440.0, 16000, 16000, 0.5);
        // Same power: identical tone shifted in phase via different start.
        let n = tone(1000.0, 16000, 16000, 0.5);
        let p_s = power(&s.samples);
        let p_n = power(&n.samples);
        // Construct exactly-equal-power noise.
        let n = AudioBuffer {
            samples: n.samples.iter().map(|x| x * (p_s / p_n).sqrt()).collect(),
            rate_hz: 16000,
        };
        let mixed = mix_at_snr(&s, &n, 0.0).unwrap();
        for i in 0..s.len() {
            let expect = s.samples[i] + n.samples[i];
            assert!((mixed.samples[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_power_snr20_gives_scale_tenth() {
        let s = random_buf(1, 8000, 16000);
        let p_s = power(&s.samples);
        let mut n = random_buf(2, 8000, 16000);
        let p_n = power(&n.samples);
        for x in &mut n.samples {
            *x *= (p_s / p_n).sqrt();
        }
        let mixed = mix_at_snr(&s, &n, 20.0).unwrap();
        for i in 0..s.len() {
            let expect = s.samples[i] + 0.1 * n.samples[i];
            assert!((mixed.samples[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn post_hoc_snr_matches_target() {
        let s = random_buf(3, 16000, 16000);
        let n = random_buf(4, 9000, 16000); // shorter: exercises looping
        let mixed = mix_at_snr(&s, &n, 9.0).unwrap();
        let got = measured_snr_db(&s, &mixed).unwrap();
        assert!((got - 9.0).abs() < 1e-6, "got {got}");
    }

    #[test]
    fn mix_is_linear_in_clean_signal() {
        let s = random_buf(5, 4000, 16000);
        let n = random_buf(6, 4000, 16000);
        let mixed = mix_at_snr(&s, &n, 6.0).unwrap();
        // noise component = mixed - s; doubling s and re-adding the same
        // scaled noise equals 2s + noise.
        let noise_part: Vec<f64> = mixed
            .samples
            .iter()
            .zip(&s.samples)
            .map(|(m, x)| m - x)
            .collect();
        let s2 = AudioBuffer {
            samples: s.samples.iter().map(|x| 2.0 * x).collect(),
            rate_hz: 16000,
        };
        let combined: Vec<f64> = s2
            .samples
            .iter()
            .zip(&noise_part)
            .map(|(x, n)| x + n)
            .collect();
        for i in 0..s.len() {
            assert!((combined[i] - (2.0 * s.samples[i] + noise_part[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn silent_noise_rejected() {
        let s = random_buf(7, 1000, 16000);
        let n = AudioBuffer {
            samples: vec![0.0; 1000],
            rate_hz: 16000,
        };
        assert!(matches!(mix_at_snr(&s, &n, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rate_mismatch_rejected() {
        let s = random_buf(8, 1000, 16000);
        let n = random_buf(9, 1000, 8000);
        assert!(matches!(mix_at_snr(&s, &n, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn seeded_mix_is_deterministic() {
        let s = random_buf(10, 2000, 16000);
        let n = random_buf(11, 8000, 16000);
        let spec = SnrSpec { snr_db: 18.0, seed: 42 };
        let a = mix_with_spec(&s, &n, &spec).unwrap();
        let b = mix_with_spec(&s, &n, &spec).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn resample_identity_rate() {
        let s = random_buf(12, 1234, 16000);
        let r = resample(&s, 16000).unwrap();
        assert_eq!(r.samples, s.samples);
    }

    #[test]
    fn resample_doubles_length() {
        let s = random_buf(13, 4321, 8000);
        let r = resample(&s, 16000).unwrap();
        let diff = r.len() as i64 - 2 * s.len() as i64;
        assert!(diff.abs() <= 1, "length {} vs {}", r.len(), 2 * s.len());
    }

    #[test]
    fn resample_preserves_tone_frequency() {
        let s = tone(1000.0, 8000, 8000, 0.7);
        let r = resample(&s, 16000).unwrap();
        let f = zero_crossing_freq(&r);
        assert!((f - 1000.0).abs() / 1000.0 < 0.01, "estimated {f}");
    }

    #[test]
    fn resample_roundtrip_preserves_rms() {
        let s = tone(700.0, 8000, 16000, 0.6);
        let up = resample(&s, 16000).unwrap();
        let back = resample(&up, 8000).unwrap();
        let rms_in = power(&s.samples).sqrt();
        let rms_out = power(&back.samples).sqrt();
        assert!((rms_in - rms_out).abs() / rms_in < 0.05);
    }

    #[test]
    fn speed_perturb_identity() {
        let s = random_buf(14, 5000, 16000);
        let out = speed_perturb(&s, 1.0).unwrap();
        assert_eq!(out.samples, s.samples);
    }

    #[test]
    fn speed_perturb_length_arithmetic() {
        let s = random_buf(15, 16000, 16000);
        let out = speed_perturb(&s, 0.95).unwrap();
        let expect = (16000.0f64 / 0.95).round() as i64;
        assert!((out.len() as i64 - expect).abs() <= 1, "got {}", out.len());
        assert_eq!(out.rate_hz, 16000);
    }

    #[test]
    fn speed_perturb_scales_frequency() {
        let s = tone(800.0, 16000, 32000, 0.7);
        let out = speed_perturb(&s, 1.05).unwrap();
        let f = zero_crossing_freq(&out);
        assert!((f - 840.0).abs() / 840.0 < 0.01, "estimated {f}");
    }

    #[test]
    fn time_mask_zero_chunks_is_identity() {
        let s = random_buf(16, 3000, 16000);
        let policy = MaskPolicy { min_chunks: 0, max_chunks: 0, min_len: 10, max_len: 20 };
        let out = time_mask(&s, &policy, 1).unwrap();
        assert_eq!(out.samples, s.samples);
    }

    #[test]
    fn explicit_span_zeroed_exactly() {
        let s = random_buf(17, 300, 16000);
        let out = zero_spans(&s, &[(100, 100)]).unwrap();
        for i in 0..300 {
            if (100..200).contains(&i) {
                assert_eq!(out.samples[i], 0.0);
            } else {
                assert_eq!(out.samples[i], s.samples[i]);
            }
        }
    }

    #[test]
    fn time_mask_total_within_policy_bounds() {
        let s = AudioBuffer {
            samples: vec![1.0; 4000],
            rate_hz: 16000,
        };
        let policy = MaskPolicy { min_chunks: 1, max_chunks: 3, min_len: 50, max_len: 200 };
        let (lo, hi) = policy.total_bounds();
        for seed in 0..50 {
            let out = time_mask(&s, &policy, seed).unwrap();
            let zeroed = out.samples.iter().filter(|&&x| x == 0.0).count();
            assert!(zeroed >= lo && zeroed <= hi, "seed {seed}: zeroed {zeroed}");
        }
    }

    #[test]
    fn time_mask_deterministic() {
        let s = random_buf(18, 2000, 16000);
        let policy = MaskPolicy { min_chunks: 1, max_chunks: 2, min_len: 10, max_len: 50 };
        let a = time_mask(&s, &policy, 99).unwrap();
        let b = time_mask(&s, &policy, 99).unwrap();
        assert_eq!(a.samples, b.samples);
    }
}
