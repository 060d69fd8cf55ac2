//! Minimal 16-bit PCM mono WAV reader/writer.
//!
//! Only the subset the toolkit needs: PCM format 1, one channel, 16 bits,
//! little-endian. An optional LIST/INFO `ICMT` chunk carries provenance
//! (config hash, seed, tool version); readers that don't know it skip it.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

const I16_SCALE: f64 = 32767.0;

/// Write `buf` as 16-bit PCM mono. Samples are clamped to [-1, 1] here and
/// nowhere else; in-memory buffers may exceed the range (e.g. after mixing).
pub fn write_wav(path: &Path, buf: &AudioBuffer, comment: Option<&str>) -> Result<()> {
    let n = buf.samples.len();
    let data_len = (n * 2) as u32;

    let info_chunk = comment.map(|c| {
        let mut text = c.as_bytes().to_vec();
        text.push(0);
        if text.len() % 2 == 1 {
            text.push(0);
        }
        let mut chunk = Vec::with_capacity(text.len() + 20);
        chunk.extend_from_slice(b"LIST");
        chunk.extend_from_slice(&((4 + 8 + text.len()) as u32).to_le_bytes());
        chunk.extend_from_slice(b"INFO");
        chunk.extend_from_slice(b"ICMT");
        chunk.extend_from_slice(&(text.len() as u32).to_le_bytes());
        chunk.extend_from_slice(&text);
        chunk
    });
    let info_len = info_chunk.as_ref().map_or(0, |c| c.len()) as u32;

    let mut out = Vec::with_capacity(44 + n * 2 + info_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len + info_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");

    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&buf.rate_hz.to_le_bytes());
    out.extend_from_slice(&(buf.rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());

    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &buf.samples {
        let q = (s.clamp(-1.0, 1.0) * I16_SCALE).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    if let Some(chunk) = info_chunk {
        out.extend_from_slice(&chunk);
    }

    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a 16-bit PCM mono WAV. Returns the buffer and the `ICMT` comment
/// if the file carries one.
pub fn read_wav(path: &Path) -> Result<(AudioBuffer, Option<String>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::parse(path, 0, msg);

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail("not a RIFF/WAVE file"));
    }

    let mut rate_hz: Option<u32> = None;
    let mut samples: Option<Vec<f64>> = None;
    let mut comment: Option<String> = None;

    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(fail("truncated chunk"));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(fail("fmt chunk too short"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if format != 1 || channels != 1 || bits != 16 {
                    return Err(fail("expected 16-bit PCM mono"));
                }
                rate_hz = Some(u32::from_le_bytes(body[4..8].try_into().unwrap()));
            }
            b"data" => {
                let mut v = Vec::with_capacity(size / 2);
                for pair in body.chunks_exact(2) {
                    let q = i16::from_le_bytes(pair.try_into().unwrap());
                    v.push((q as f64 / I16_SCALE).clamp(-1.0, 1.0));
                }
                samples = Some(v);
            }
            b"LIST" if size >= 4 && &body[0..4] == b"INFO" => {
                let mut p = 4;
                while p + 8 <= body.len() {
                    let sub_id = &body[p..p + 4];
                    let sub_size =
                        u32::from_le_bytes(body[p + 4..p + 8].try_into().unwrap()) as usize;
                    let sub = &body[p + 8..(p + 8 + sub_size).min(body.len())];
                    if sub_id == b"ICMT" {
                        let text = sub.split(|&b| b == 0).next().unwrap_or(&[]);
                        comment = Some(String::from_utf8_lossy(text).into_owned());
                    }
                    p += 8 + sub_size + (sub_size % 2);
                }
            }
            _ => {}
        }
        pos = body_end + (size % 2);
    }

    let rate_hz = rate_hz.ok_or_else(|| fail("missing fmt chunk"))?;
    let samples = samples.ok_or_else(|| fail("missing data chunk"))?;
    Ok((AudioBuffer { samples, rate_hz }, comment))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_samples_and_comment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let buf = AudioBuffer {
            samples: (0..1000).map(|i| ((i as f64) * 0.01).sin() * 0.8).collect(),
            rate_hz: 16000,
        };
        write_wav(&path, &buf, Some("config=abc seed=7 version=0.1.0")).unwrap();
        let (back, comment) = read_wav(&path).unwrap();
        assert_eq!(back.rate_hz, 16000);
        assert_eq!(back.samples.len(), buf.samples.len());
        for (a, b) in back.samples.iter().zip(&buf.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
        assert_eq!(comment.as_deref(), Some("config=abc seed=7 version=0.1.0"));
    }

    #[test]
    fn clamps_out_of_range_on_write_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.wav");
        let buf = AudioBuffer {
            samples: vec![1.5, -2.0, 0.25],
            rate_hz: 8000,
        };
        write_wav(&path, &buf, None).unwrap();
        let (back, _) = read_wav(&path).unwrap();
        assert!((back.samples[0] - 1.0).abs() < 1e-4);
        assert!((back.samples[1] + 1.0).abs() < 1e-4);
        assert!((back.samples[2] - 0.25).abs() < 1e-4);
    }

    #[test]
    fn rejects_non_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"not a wav at all").unwrap();
        assert!(read_wav(&path).is_err());
    }
}
