//! Binary checkpoint format.
//!
//! ```text
//! magic        4 bytes  "P3DC"
//! version      u32
//! n_meta       u32, then n_meta x (key: str, value: str)
//! n_params     u32, then n_params x record
//! record       name: str, rank: u32, dims: rank x u32, data: prod(dims) x f32
//! str          u32 byte length + UTF-8 bytes
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::path::Path;

use super::model::{Architecture, ModelGraph};
use super::tensor::{Scalar, Tensor};
use crate::error::{CheckpointError, Error, Result};
use crate::imaging::{Pipeline, StandardizerStats};

pub const MAGIC: [u8; 4] = *b"P3DC";
pub const FORMAT_VERSION: u32 = 1;

const KEY_ARCH: &str = "architecture";
const KEY_TRAINABLE: &str = "backbone_trainable";
const KEY_STANDARDIZER: &str = "standardizer";
const KEY_PIPELINE: &str = "pipeline";
const TRAINING_PREFIX: &str = "training.";

/// A model plus everything needed to reproduce its predictions.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: ModelGraph<T>,
    pub standardizer: Option<StandardizerStats>,
    pub pipeline: Option<Pipeline>,
    /// Free-form training metadata (hyperparameters, seed, ...).
    pub training: BTreeMap<String, String>,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(CheckpointError::Truncated { what })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self, what: &'static str) -> Result<String, CheckpointError> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CheckpointError::Malformed(format!("{what} is not UTF-8")))
    }
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(model: ModelGraph<T>) -> Self {
        Self { model, standardizer: None, pipeline: None, training: BTreeMap::new() }
    }

    /// Descriptive key-value metadata as written to the file.
    pub fn metadata(&self) -> Result<BTreeMap<String, String>> {
        let mut meta = BTreeMap::new();
        meta.insert(KEY_ARCH.to_string(), serde_json::to_string(self.model.architecture())?);
        meta.insert(KEY_TRAINABLE.to_string(), self.model.backbone_trainable.to_string());
        if let Some(s) = &self.standardizer {
            meta.insert(KEY_STANDARDIZER.to_string(), serde_json::to_string(s)?);
        }
        if let Some(p) = &self.pipeline {
            meta.insert(KEY_PIPELINE.to_string(), serde_json::to_string(p)?);
        }
        for (k, v) in &self.training {
            meta.insert(format!("{TRAINING_PREFIX}{k}"), v.clone());
        }
        Ok(meta)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&MAGIC);
        put_u32(&mut buf, FORMAT_VERSION);
        let meta = self.metadata()?;
        put_u32(&mut buf, meta.len() as u32);
        for (k, v) in &meta {
            put_str(&mut buf, k);
            put_str(&mut buf, v);
        }
        let params = self.model.named_params();
        put_u32(&mut buf, params.len() as u32);
        for (name, t) in params {
            put_str(&mut buf, &name);
            put_u32(&mut buf, t.rank() as u32);
            for &d in t.shape() {
                put_u32(&mut buf, d as u32);
            }
            for v in t.data() {
                buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
            }
        }
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic { found: magic }.into());
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, expected: FORMAT_VERSION }.into());
        }
        let n_meta = r.u32("metadata count")?;
        let mut meta = BTreeMap::new();
        for _ in 0..n_meta {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            meta.insert(k, v);
        }
        let malformed = |m: String| Error::from(CheckpointError::Malformed(m));
        let arch: Architecture = serde_json::from_str(
            meta.get(KEY_ARCH).ok_or_else(|| malformed("missing architecture".into()))?,
        )
        .map_err(|e| malformed(format!("architecture: {e}")))?;

        let n_params = r.u32("parameter count")? as usize;
        let mut records = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let name = r.string("parameter name")?;
            let rank = r.u32("parameter rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("parameter shape")? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4, "parameter data")?;
            let data = raw.chunks_exact(4).map(|c| T::c(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)).collect();
            records.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        let shapes = arch.shapes()?;
        let mut records = records.into_iter();
        let mut groups = Vec::new();
        for (spec, input) in arch.backbone.iter().chain(&arch.head).zip(&shapes) {
            let mut group = Vec::new();
            for _ in spec.param_shapes(input)? {
                let (_, t) = records.next().ok_or_else(|| malformed("fewer parameter records than layers need".into()))?;
                group.push(t);
            }
            groups.push(group);
        }
        if records.next().is_some() {
            return Err(malformed("more parameter records than layers need".into()));
        }
        let mut model = ModelGraph::from_params(arch, groups)?;
        model.backbone_trainable = meta.get(KEY_TRAINABLE).is_some_and(|v| v == "true");
        let standardizer = meta
            .get(KEY_STANDARDIZER)
            .map(|s| serde_json::from_str(s))
            .transpose()
            .map_err(|e| malformed(format!("standardizer: {e}")))?;
        let pipeline = meta
            .get(KEY_PIPELINE)
            .map(|s| serde_json::from_str(s))
            .transpose()
            .map_err(|e| malformed(format!("pipeline: {e}")))?;
        let training = meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(TRAINING_PREFIX).map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok(Self { model, standardizer, pipeline, training })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Variant;

    fn sample() -> Checkpoint<f32> {
        let mut ck = Checkpoint::new(ModelGraph::<f32>::init(Architecture::scratch(32), 9).unwrap());
        ck.standardizer = Some(StandardizerStats { mean: vec![0.1, 0.2, 0.3], std: vec![0.5, 0.0, 0.25] });
        ck.pipeline = Some(Pipeline::of(Variant::Roiheden));
        ck.training.insert("seed".into(), "9".into());
        ck
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::<f32>::decode(&ck.encode().unwrap()).unwrap();
        let a = ck.model.named_params();
        let b = back.model.named_params();
        assert_eq!(a.len(), b.len());
        for ((na, ta), (nb, tb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(ta.data(), tb.data());
        }
        assert_eq!(back.standardizer, ck.standardizer);
        assert_eq!(back.pipeline, ck.pipeline);
        assert_eq!(back.training, ck.training);
        assert_eq!(back.model.architecture(), ck.model.architecture());
    }

    #[test]
    fn error_codes_are_distinct() {
        let bytes = sample().encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        let e1 = Checkpoint::<f32>::decode(&bad).unwrap_err();
        let mut bad = bytes.clone();
        bad[4] = 99;
        let e2 = Checkpoint::<f32>::decode(&bad).unwrap_err();
        let e3 = Checkpoint::<f32>::decode(&bytes[..bytes.len() - 3]).unwrap_err();
        let code = |e: Error| match e {
            Error::Checkpoint(c) => c.code(),
            other => panic!("unexpected {other}"),
        };
        let codes = [code(e1), code(e2), code(e3)];
        assert_eq!(codes, [10, 11, 12]);
    }
}
