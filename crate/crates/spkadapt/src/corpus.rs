//! Corpus ingestion: manifests, token inventories, and a deterministic toy
//! corpus whose synthetic speakers are acoustically distinct.
//!
//! Manifest format: one record per line,
//! `utt_id|speaker_id|audio_path|duration_s|transcript`, UTF-8. Lines starting
//! with `#` are provenance/comment lines and are skipped on load. The
//! transcript is the last field and may itself contain `|`.
//!
//! Token inventory format: a 4-line header declaring the special tokens
//! (`blank <tok>` / `bos <tok>` / `eos <tok>` / `unk <tok>`), then every token
//! in index order, one per line.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{write_wav, AudioBuffer};

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub audio_path: PathBuf,
    pub duration_s: f64,
    pub transcript: String,
}

impl UtteranceRecord {
    fn validate(&self) -> Result<()> {
        if self.utt_id.is_empty() {
            return Err(Error::Validation("empty utt_id".into()));
        }
        if self.speaker_id.is_empty() {
            return Err(Error::Validation(format!("{}: empty speaker_id", self.utt_id)));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Validation(format!(
                "{}: duration_s must be > 0, got {}",
                self.utt_id, self.duration_s
            )));
        }
        if self.transcript.split_whitespace().next().is_none() {
            return Err(Error::Validation(format!("{}: empty transcript", self.utt_id)));
        }
        Ok(())
    }
}

/// Load and validate a manifest. Duplicate `utt_id`s are rejected.
pub fn load_manifest(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(5, '|');
        let (utt_id, speaker_id, audio_path, duration_s, transcript) = match (
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
            parts.next(),
        ) {
            (Some(a), Some(b), Some(c), Some(d), Some(e)) => (a, b, c, d, e),
            _ => return Err(Error::parse(path, lineno, "expected 5 `|`-separated fields")),
        };
        let duration_s: f64 = duration_s
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad duration `{duration_s}`")))?;
        let record = UtteranceRecord {
            utt_id: utt_id.to_string(),
            speaker_id: speaker_id.to_string(),
            audio_path: PathBuf::from(audio_path),
            duration_s,
            transcript: transcript.to_string(),
        };
        record.validate()?;
        if !seen.insert(record.utt_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate utt_id `{}` at {}:{}",
                record.utt_id,
                path.display(),
                lineno
            )));
        }
        records.push(record);
    }
    Ok(records)
}

/// Write a manifest; `header` lines (provenance) are emitted as `#` comments.
pub fn write_manifest(path: &Path, records: &[UtteranceRecord], header: &[String]) -> Result<()> {
    let mut out = String::new();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    for r in records {
        writeln!(
            out,
            "{}|{}|{}|{}|{}",
            r.utt_id,
            r.speaker_id,
            r.audio_path.display(),
            r.duration_s,
            r.transcript
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub const BLANK_TOKEN: &str = "<blank>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Ordered token list with the four reserved indices every model needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenInventory {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub blank_index: usize,
    pub bos_index: usize,
    pub eos_index: usize,
    pub unk_index: usize,
}

impl TokenInventory {
    pub fn new(
        tokens: Vec<String>,
        blank_index: usize,
        bos_index: usize,
        eos_index: usize,
        unk_index: usize,
    ) -> Result<Self> {
        let specials = [blank_index, bos_index, eos_index, unk_index];
        for &i in &specials {
            if i >= tokens.len() {
                return Err(Error::Validation(format!(
                    "special index {i} out of range (inventory size {})",
                    tokens.len()
                )));
            }
        }
        let distinct: HashSet<usize> = specials.iter().copied().collect();
        if distinct.len() != 4 {
            return Err(Error::Validation("special indices must be distinct".into()));
        }
        if tokens.len() < specials.len() + 2 {
            return Err(Error::Validation(
                "inventory needs at least 2 non-special tokens".into(),
            ));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate token `{t}`")));
            }
        }
        Ok(TokenInventory {
            tokens,
            index,
            blank_index,
            bos_index,
            eos_index,
            unk_index,
        })
    }

    /// Character-level inventory over the characters appearing in `texts`,
    /// with the four specials up front.
    pub fn char_level<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut chars: BTreeSet<char> = BTreeSet::new();
        for t in texts {
            chars.extend(t.chars());
        }
        let mut tokens: Vec<String> = vec![
            BLANK_TOKEN.into(),
            BOS_TOKEN.into(),
            EOS_TOKEN.into(),
            UNK_TOKEN.into(),
        ];
        tokens.extend(chars.into_iter().map(|c| c.to_string()));
        TokenInventory::new(tokens, 0, 1, 2, 3)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(|s| s.as_str())
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    fn is_special(&self, idx: usize) -> bool {
        idx == self.blank_index || idx == self.bos_index || idx == self.eos_index || idx == self.unk_index
    }

    /// Greedy longest-match tokenization; symbols not covered by any token
    /// map to `unk_index`. For a character inventory this is per-character.
    pub fn tokenize(&self, transcript: &str) -> Vec<usize> {
        let max_token_chars = self
            .tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_special(*i))
            .map(|(_, t)| t.chars().count())
            .max()
            .unwrap_or(1);
        let chars: Vec<char> = transcript.chars().collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < chars.len() {
            let mut matched = None;
            let upper = max_token_chars.min(chars.len() - pos);
            for take in (1..=upper).rev() {
                let cand: String = chars[pos..pos + take].iter().collect();
                if let Some(&idx) = self.index.get(&cand) {
                    if !self.is_special(idx) {
                        matched = Some((idx, take));
                        break;
                    }
                }
            }
            match matched {
                Some((idx, take)) => {
                    out.push(idx);
                    pos += take;
                }
                None => {
                    out.push(self.unk_index);
                    pos += 1;
                }
            }
        }
        out
    }

    /// Inverse of [`tokenize`](Self::tokenize) for in-inventory text. Special
    /// tokens are dropped.
    pub fn detokenize(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter(|&&i| !self.is_special(i))
            .filter_map(|&i| self.token(i))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
        let mut specials = HashMap::new();
        for expected in ["blank", "bos", "eos", "unk"] {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, "missing special-token header"))?;
            let (key, tok) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(path, idx + 1, "header line needs `name token`"))?;
            if key != expected {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("expected `{expected}` header, got `{key}`"),
                ));
            }
            specials.insert(key.to_string(), tok.to_string());
        }
        let tokens: Vec<String> = lines.map(|(_, l)| l.to_string()).collect();
        let find = |name: &str| -> Result<usize> {
            let tok = &specials[name];
            tokens
                .iter()
                .position(|t| t == tok)
                .ok_or_else(|| Error::Validation(format!("declared {name} token `{tok}` not in list")))
        };
        TokenInventory::new(tokens.clone(), find("blank")?, find("bos")?, find("eos")?, find("unk")?)
    }

    pub fn save(&self, path: &Path, header: &[String]) -> Result<()> {
        let mut out = String::new();
        for h in header {
            writeln!(out, "# {h}").unwrap();
        }
        writeln!(out, "blank {}", self.tokens[self.blank_index]).unwrap();
        writeln!(out, "bos {}", self.tokens[self.bos_index]).unwrap();
        writeln!(out, "eos {}", self.tokens[self.eos_index]).unwrap();
        writeln!(out, "unk {}", self.tokens[self.unk_index]).unwrap();
        for t in &self.tokens {
            writeln!(out, "{t}").unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Fixed phrase set for toy transcripts. Lowercase and space only, so the
/// character inventory stays small.
pub const TOY_PHRASES: &[&str] = &[
    "the cat sat here",
    "a dog ran by",
    "we like green tea",
    "she reads old maps",
    "birds fly at dawn",
    "he sang two notes",
    "rain fell all day",
    "the sun is warm",
];

/// Per-speaker voice parameters: fundamental plus a 3-resonance envelope.
#[derive(Debug, Clone)]
pub struct ToyVoice {
    pub f0_hz: f64,
    pub formants_hz: [f64; 3],
}

/// Deterministic voice for speaker `i` of `n`: F0 evenly spread over
/// [90, 300] Hz with a small seeded jitter, resonances jittered around
/// vowel-ish centers. Pairwise F0 separation stays above 20 Hz for n <= 10.
pub fn toy_voice(i: usize, n: usize, seed: u64) -> ToyVoice {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let span = 300.0 - 90.0;
    let base = if n <= 1 {
        195.0
    } else {
        90.0 + span * i as f64 / (n - 1) as f64
    };
    let f0 = base + rng.gen_range(-2.0..2.0);
    let formants = [
        500.0 * rng.gen_range(0.8..1.2),
        1500.0 * rng.gen_range(0.85..1.15),
        2500.0 * rng.gen_range(0.9..1.1),
    ];
    ToyVoice { f0_hz: f0, formants_hz: formants }
}

const TOY_RATE: u32 = 16000;
const CHAR_SEGMENT_S: f64 = 0.08;
const EDGE_SILENCE_S: f64 = 0.05;

/// Render one transcript in one voice. Each character becomes an 80 ms
/// harmonic segment whose resonance pattern depends on the character, so
/// content is recoverable from the waveform; spaces become silence. The
/// speaker's F0 carries through every voiced segment.
pub fn synth_utterance(transcript: &str, voice: &ToyVoice) -> AudioBuffer {
    let rate = TOY_RATE as f64;
    let seg_len = (CHAR_SEGMENT_S * rate) as usize;
    let edge_len = (EDGE_SILENCE_S * rate) as usize;
    let mut samples = vec![0.0f64; edge_len];
    let mut phase = vec![0.0f64; 24];
    for ch in transcript.chars() {
        if ch == ' ' {
            samples.extend(std::iter::repeat(0.0).take(seg_len));
            continue;
        }
        // Character-dependent detuning of the three resonances.
        let c = ch as u32 as f64;
        let shift = [
            1.0 + 0.35 * (((c * 7.0).sin() + 1.0) / 2.0 - 0.5),
            1.0 + 0.30 * (((c * 13.0).sin() + 1.0) / 2.0 - 0.5),
            1.0 + 0.25 * (((c * 29.0).sin() + 1.0) / 2.0 - 0.5),
        ];
        let centers = [
            voice.formants_hz[0] * shift[0],
            voice.formants_hz[1] * shift[1],
            voice.formants_hz[2] * shift[2],
        ];
        let bandwidth = [90.0, 130.0, 180.0];
        let n_harm = ((rate / 2.0 - 200.0) / voice.f0_hz).floor() as usize;
        let n_harm = n_harm.min(phase.len());
        // Harmonic amplitudes from the resonance envelope.
        let mut amps = vec![0.0f64; n_harm];
        for (k, a) in amps.iter_mut().enumerate() {
            let f = voice.f0_hz * (k + 1) as f64;
            let mut env = 0.0;
            for r in 0..3 {
                let d = (f - centers[r]) / bandwidth[r];
                env += 1.0 / (1.0 + d * d);
            }
            *a = env / (1.0 + 0.15 * k as f64);
        }
        let norm: f64 = amps.iter().sum::<f64>().max(1e-9);
        for i in 0..seg_len {
            // Attack/decay envelope avoids clicks at segment boundaries.
            let pos = i as f64 / seg_len as f64;
            let env = (pos * 12.0).min(1.0).min((1.0 - pos) * 12.0).max(0.0);
            let mut v = 0.0;
            for (k, &a) in amps.iter().enumerate() {
                let w = 2.0 * std::f64::consts::PI * voice.f0_hz * (k + 1) as f64 / rate;
                v += a * (phase[k] + w * i as f64).sin();
            }
            samples.push(0.45 * env * v / norm);
        }
        // Keep phases continuous across segments.
        for (k, p) in phase.iter_mut().enumerate().take(n_harm) {
            let w = 2.0 * std::f64::consts::PI * voice.f0_hz * (k + 1) as f64 / rate;
            *p = (*p + w * seg_len as f64) % (2.0 * std::f64::consts::PI);
        }
    }
    samples.extend(std::iter::repeat(0.0).take(edge_len));
    AudioBuffer { samples, rate_hz: TOY_RATE }
}

/// Synthesize a toy corpus: WAV files plus a manifest under `out_dir`.
/// Fully deterministic given `seed`; `provenance` lines are embedded in the
/// manifest header and each WAV comment chunk.
pub fn synth_toy_corpus(
    out_dir: &Path,
    n_speakers: usize,
    utts_per_speaker: usize,
    seed: u64,
    provenance: &[String],
) -> Result<Vec<UtteranceRecord>> {
    if n_speakers < 2 {
        return Err(Error::Argument("need at least 2 speakers".into()));
    }
    if utts_per_speaker < 1 {
        return Err(Error::Argument("need at least 1 utterance per speaker".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;

    let comment = if provenance.is_empty() {
        None
    } else {
        Some(provenance.join(" "))
    };
    let mut records = Vec::with_capacity(n_speakers * utts_per_speaker);
    for spk in 0..n_speakers {
        let voice = toy_voice(spk, n_speakers, seed);
        let speaker_id = format!("spk{spk:02}");
        for u in 0..utts_per_speaker {
            let phrase = TOY_PHRASES[(spk * utts_per_speaker + u) % TOY_PHRASES.len()];
            let utt_id = format!("{speaker_id}_utt{u:03}");
            let audio = synth_utterance(phrase, &voice);
            let path = wav_dir.join(format!("{utt_id}.wav"));
            write_wav(&path, &audio, comment.as_deref())?;
            records.push(UtteranceRecord {
                utt_id,
                speaker_id: speaker_id.clone(),
                audio_path: path,
                duration_s: audio.duration_s(),
                transcript: phrase.to_string(),
            });
        }
    }
    write_manifest(&out_dir.join("manifest.txt"), &records, provenance)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::read_wav;

    #[test]
    fn empty_manifest_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(&path, "").unwrap();
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn manifest_roundtrip_preserves_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let records = vec![
            UtteranceRecord {
                utt_id: "u1".into(),
                speaker_id: "s1".into(),
                audio_path: "a/u1.wav".into(),
                duration_s: 1.5,
                transcript: "hello there".into(),
            },
            UtteranceRecord {
                utt_id: "u2".into(),
                speaker_id: "s2".into(),
                audio_path: "a/u2.wav".into(),
                duration_s: 0.75,
                transcript: "pipe | inside".into(),
            },
            UtteranceRecord {
                utt_id: "u3".into(),
                speaker_id: "s1".into(),
                audio_path: "a/u3.wav".into(),
                duration_s: 2.0,
                transcript: "third one".into(),
            },
        ];
        write_manifest(&path, &records, &["seed=1".into()]).unwrap();
        let back = load_manifest(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn duplicate_utt_id_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(&path, "u1|s1|a.wav|1.0|x y\nu1|s2|b.wav|1.0|z w\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("u1"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(&path, "u1|s1|a.wav|1.0|ok line\nbroken line\n").unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn tokenize_empty_is_empty() {
        let inv = TokenInventory::char_level(["ab"]).unwrap();
        assert!(inv.tokenize("").is_empty());
    }

    #[test]
    fn tokenize_chars_maps_identity() {
        let inv = TokenInventory::char_level(["ab"]).unwrap();
        let ids = inv.tokenize("ab");
        assert_eq!(ids.len(), 2);
        assert_eq!(ids[0], inv.lookup("a").unwrap());
        assert_eq!(ids[1], inv.lookup("b").unwrap());
    }

    #[test]
    fn unknown_symbol_maps_to_unk() {
        let inv = TokenInventory::char_level(["ab"]).unwrap();
        let ids = inv.tokenize("aqb");
        assert_eq!(ids[1], inv.unk_index);
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn tokenize_roundtrips_in_inventory_text() {
        let inv = TokenInventory::char_level(TOY_PHRASES.iter().copied()).unwrap();
        for phrase in TOY_PHRASES {
            assert_eq!(inv.detokenize(&inv.tokenize(phrase)), *phrase);
        }
    }

    #[test]
    fn inventory_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tokens.txt");
        let inv = TokenInventory::char_level(["hello world"]).unwrap();
        inv.save(&path, &["seed=0".into()]).unwrap();
        let back = TokenInventory::load(&path).unwrap();
        assert_eq!(back, inv);
    }

    #[test]
    fn toy_corpus_counts_and_speakers() {
        let dir = tempfile::tempdir().unwrap();
        let records = synth_toy_corpus(dir.path(), 4, 5, 1, &[]).unwrap();
        assert_eq!(records.len(), 20);
        let speakers: HashSet<_> = records.iter().map(|r| r.speaker_id.clone()).collect();
        assert_eq!(speakers.len(), 4);
    }

    #[test]
    fn toy_corpus_is_byte_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = synth_toy_corpus(d1.path(), 2, 1, 7, &[]).unwrap();
        let r2 = synth_toy_corpus(d2.path(), 2, 1, 7, &[]).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            let bytes_a = fs::read(&a.audio_path).unwrap();
            let bytes_b = fs::read(&b.audio_path).unwrap();
            assert_eq!(bytes_a, bytes_b, "{}", a.utt_id);
        }
    }

    #[test]
    fn zero_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(synth_toy_corpus(dir.path(), 1, 1, 0, &[]).is_err());
        assert!(synth_toy_corpus(dir.path(), 2, 0, 0, &[]).is_err());
    }

    /// Autocorrelation pitch estimate over voiced regions.
    fn estimate_f0(buf: &AudioBuffer) -> f64 {
        let rate = buf.rate_hz as f64;
        let voiced: Vec<f64> = buf.samples.iter().copied().collect();
        let lo = (rate / 350.0) as usize;
        let hi = (rate / 70.0) as usize;
        let mut best_lag = lo;
        let mut best = f64::NEG_INFINITY;
        for lag in lo..=hi {
            let mut acc = 0.0;
            for i in 0..voiced.len() - lag {
                acc += voiced[i] * voiced[i + lag];
            }
            if acc > best {
                best = acc;
                best_lag = lag;
            }
        }
        rate / best_lag as f64
    }

    #[test]
    fn speaker_f0s_separated_pairwise() {
        let dir = tempfile::tempdir().unwrap();
        let records = synth_toy_corpus(dir.path(), 4, 1, 3, &[]).unwrap();
        let mut f0s = Vec::new();
        for r in &records {
            let (audio, _) = read_wav(&r.audio_path).unwrap();
            f0s.push(estimate_f0(&audio));
        }
        for i in 0..f0s.len() {
            for j in i + 1..f0s.len() {
                assert!(
                    (f0s[i] - f0s[j]).abs() > 20.0,
                    "speakers {i} and {j}: {} vs {}",
                    f0s[i],
                    f0s[j]
                );
            }
        }
    }
}
