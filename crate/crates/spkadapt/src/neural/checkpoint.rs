//! Single-file binary checkpoints: a header with format version, provenance
//! (config hash, seed, tool version) and the parameter manifest
//! (names/shapes), then row-major f32 values. Optimizer state is stored
//! alongside under the same parameter names.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::optim::{Optimizer, OptimizerKind, ParamState};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SPKCKPT1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OptimizerSnapshot {
    pub kind: OptimizerKind,
    pub step_count: u64,
    pub states: Vec<ParamState>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub entries: Vec<CheckpointEntry>,
    pub optimizer: Option<OptimizerSnapshot>,
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn save_checkpoint(
    path: &Path,
    params: &[(String, Tensor)],
    optimizer: Option<&Optimizer>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    push_str(&mut out, &meta.config_hash);
    out.extend_from_slice(&meta.seed.to_le_bytes());
    push_str(&mut out, &meta.tool_version);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params {
        push_str(&mut out, name);
        out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
        for &d in p.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for (_, p) in params {
        push_f32s(&mut out, &p.data());
    }
    match optimizer {
        None => out.push(0),
        Some(opt) => {
            out.push(1);
            out.push(match opt.cfg.kind {
                OptimizerKind::Adam => 0,
                OptimizerKind::Adadelta => 1,
            });
            out.extend_from_slice(&opt.step_count.to_le_bytes());
            for state in &opt.states {
                push_f32s(&mut out, &state.slot_a);
                push_f32s(&mut out, &state.slot_b);
            }
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.path, 0, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::parse(self.path, 0, "bad utf8"))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(8)? != MAGIC {
        return Err(Error::parse(path, 0, "not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::parse(path, 0, format!("unsupported format version {version}")));
    }
    let config_hash = r.string()?;
    let seed = r.u64()?;
    let tool_version = r.string()?;
    let n_params = r.u32()? as usize;
    let mut manifest = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = r.string()?;
        let ndims = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(r.u64()? as usize);
        }
        manifest.push((name, shape));
    }
    let mut entries = Vec::with_capacity(n_params);
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let values = r.f32s(n)?;
        entries.push(CheckpointEntry { name, shape, values });
    }
    let optimizer = if r.u8()? == 1 {
        let kind = match r.u8()? {
            0 => OptimizerKind::Adam,
            1 => OptimizerKind::Adadelta,
            k => return Err(Error::parse(path, 0, format!("unknown optimizer kind {k}"))),
        };
        let step_count = r.u64()?;
        let mut states = Vec::with_capacity(entries.len());
        for e in &entries {
            let n = e.values.len();
            states.push(ParamState { slot_a: r.f32s(n)?, slot_b: r.f32s(n)? });
        }
        Some(OptimizerSnapshot { kind, step_count, states })
    } else {
        None
    };
    Ok(Checkpoint {
        meta: CheckpointMeta { config_hash, seed, tool_version },
        entries,
        optimizer,
    })
}

impl Checkpoint {
    /// Copy stored values into matching parameters. Names and shapes must
    /// agree exactly.
    pub fn apply_to(&self, params: &[(String, Tensor)]) -> Result<()> {
        if params.len() != self.entries.len() {
            return Err(Error::Validation(format!(
                "checkpoint has {} parameters, model has {}",
                self.entries.len(),
                params.len()
            )));
        }
        for ((name, p), e) in params.iter().zip(&self.entries) {
            if name != &e.name {
                return Err(Error::Validation(format!(
                    "parameter name mismatch: model `{name}` vs checkpoint `{}`",
                    e.name
                )));
            }
            if p.shape() != e.shape.as_slice() {
                return Err(Error::Validation(format!(
                    "shape mismatch for `{name}`: {:?} vs {:?}",
                    p.shape(),
                    e.shape
                )));
            }
            p.set_data(&e.values);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::optim::OptimizerConfig;

    #[test]
    fn roundtrip_params_and_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = vec![
            ("a.weight".to_string(), Tensor::param(&[2, 3], vec![0.5; 6])),
            ("a.bias".to_string(), Tensor::param(&[3], vec![-1.25, 0.0, 2.0])),
        ];
        let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3), &params).unwrap();
        params[0].1.accum_grad(&[1.0; 6]);
        params[1].1.accum_grad(&[0.5; 3]);
        opt.step(&params, 1e-3).unwrap();
        let meta = CheckpointMeta {
            config_hash: "deadbeef".into(),
            seed: 42,
            tool_version: "0.1.0".into(),
        };
        save_checkpoint(&path, &params, Some(&opt), &meta).unwrap();

        let ckpt = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt.meta, meta);
        assert_eq!(ckpt.entries.len(), 2);
        assert_eq!(ckpt.entries[0].name, "a.weight");
        assert_eq!(ckpt.entries[1].shape, vec![3]);
        let snap = ckpt.optimizer.as_ref().unwrap();
        assert_eq!(snap.kind, OptimizerKind::Adam);
        assert_eq!(snap.step_count, 1);

        // f32 storage: values agree to f32 precision
        let fresh = vec![
            ("a.weight".to_string(), Tensor::param(&[2, 3], vec![0.0; 6])),
            ("a.bias".to_string(), Tensor::param(&[3], vec![0.0; 3])),
        ];
        ckpt.apply_to(&fresh).unwrap();
        for (orig, loaded) in params.iter().zip(&fresh) {
            for (a, b) in orig.1.to_vec().iter().zip(loaded.1.to_vec()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let params = vec![("w".to_string(), Tensor::param(&[2], vec![1.0, 2.0]))];
        save_checkpoint(&path, &params, None, &CheckpointMeta::default()).unwrap();
        let ckpt = load_checkpoint(&path).unwrap();
        let wrong = vec![("w".to_string(), Tensor::param(&[3], vec![0.0; 3]))];
        assert!(ckpt.apply_to(&wrong).is_err());
    }
}
