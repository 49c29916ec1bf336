//! Binary checkpoint format with a JSON sidecar.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "GMF1"  u32 version
//! u32 n   n bytes of architecture JSON
//! u32 k   k f64 normalization values
//! u32 p   p parameters, each:
//!         u32 name length, name bytes, u8 kind (0 matrix, 1 vector),
//!         u32 rows, u32 cols, rows*cols f64 values
//! 32 bytes SHA-256 over everything above
//! ```
//!
//! Parameters are written in lexicographic name order. The sidecar at
//! `<path>.json` repeats the architecture and normalization in readable form
//! together with free-form training metadata; loading never depends on it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::{Architecture, ModelFamily};
use super::baseline::BaselineModel;
use super::gmf::GmfModel;
use super::norm::Normalization;
use super::types::{BodyParams, KinematicWindow};
use crate::error::{Error, Result};
use crate::nn::{Param, ParamSet, Shape};

pub const MAGIC: &[u8; 4] = b"GMF1";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Any model this crate can save, load and evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gmf(GmfModel),
    Baseline(BaselineModel),
}

impl Model {
    pub fn arch(&self) -> &Architecture {
        match self {
            Model::Gmf(m) => m.arch(),
            Model::Baseline(m) => m.arch(),
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Gmf(m) => m.params(),
            Model::Baseline(m) => m.params(),
        }
    }

    pub fn norm(&self) -> &Normalization {
        match self {
            Model::Gmf(m) => m.norm(),
            Model::Baseline(m) => m.norm(),
        }
    }

    pub fn from_parts(arch: Architecture, params: ParamSet, norm: Normalization) -> Result<Self> {
        match arch.family {
            ModelFamily::Gmf => GmfModel::from_parts(arch, params, norm).map(Model::Gmf),
            _ => BaselineModel::from_parts(arch, params, norm).map(Model::Baseline),
        }
    }

    /// Moment (Nm/kg) for one window and the subject's body parameters.
    pub fn predict(&self, window: KinematicWindow<'_>, q: &BodyParams) -> Result<f64> {
        match self {
            Model::Gmf(m) => m.predict_moment(window, q),
            Model::Baseline(m) => m.predict(window, Some(q)),
        }
    }

    /// Short label such as `gmf-gru` or `baseline_fusion-cnn`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.arch().family.as_str(), self.arch().backbone)
    }
}

impl From<GmfModel> for Model {
    fn from(m: GmfModel) -> Self {
        Model::Gmf(m)
    }
}

impl From<BaselineModel> for Model {
    fn from(m: BaselineModel) -> Self {
        Model::Baseline(m)
    }
}

/// Readable companion written next to each checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub format_version: u32,
    pub architecture: Architecture,
    pub normalization: Normalization,
    pub parameter_count: usize,
    pub sha256: String,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let arch = serde_json::to_vec(model.arch()).expect("architecture serializes");
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(&arch);
    let norm = model.norm().to_flat();
    out.extend_from_slice(&(norm.len() as u32).to_le_bytes());
    for v in norm {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let (kind, rows, cols) = match p.shape() {
            Shape::Matrix { rows, cols } => (0u8, rows, cols),
            Shape::Vector { len } => (1u8, len, 1),
        };
        out.push(kind);
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in p.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, detail: impl Into<String>) -> Error {
        Error::CorruptCheckpoint {
            path: self.path.to_path_buf(),
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.corrupt(format!("truncated while reading {what} at byte {}", self.pos))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.corrupt("size overflow"))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parses checkpoint bytes; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != MAGIC {
        return Err(r.corrupt("not a checkpoint (bad magic bytes)"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < 8 + DIGEST_LEN {
        return Err(r.corrupt("truncated before checksum"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(r.corrupt("checksum mismatch"));
    }
    r.bytes = body;

    let n = r.u32("architecture length")? as usize;
    let arch: Architecture = serde_json::from_slice(r.take(n, "architecture")?)
        .map_err(|e| r.corrupt(format!("architecture descriptor: {e}")))?;
    let k = r.u32("normalization length")? as usize;
    let norm = Normalization::from_flat(&r.f64s(k, "normalization")?)
        .map_err(|e| r.corrupt(format!("normalization: {e}")))?;
    let count = r.u32("parameter count")?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| r.corrupt("parameter name is not UTF-8"))?
            .to_string();
        let kind = r.take(1, "kind")?[0];
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let shape = match kind {
            0 => Shape::Matrix { rows, cols },
            1 if cols == 1 => Shape::Vector { len: rows },
            _ => return Err(r.corrupt(format!("parameter {name}: unknown kind {kind}"))),
        };
        let data = r.f64s(shape.numel(), &name)?;
        let param = Param::from_shape_vec(shape, data).map_err(|e| r.corrupt(e.to_string()))?;
        if params.insert(name.clone(), param).is_some() {
            return Err(r.corrupt(format!("duplicate parameter {name}")));
        }
    }
    if r.pos != body.len() {
        return Err(r.corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Model::from_parts(arch, params, norm).map_err(|e| r.corrupt(e.to_string()))
}

/// Writes the checkpoint and its sidecar.
pub fn save_checkpoint(path: &Path, model: &Model, metadata: serde_json::Value) -> Result<()> {
    let bytes = encode(model);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    }
    std::fs::write(path, &bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        architecture: model.arch().clone(),
        normalization: *model.norm(),
        parameter_count: model.params().numel(),
        sha256: hex(&bytes[bytes.len() - DIGEST_LEN..]),
        metadata,
    };
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(format!("writing {}", side.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
    decode(&bytes, path)
}

pub fn load_sidecar(path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(format!("reading {}", side.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: side,
        line: e.line() as u64,
        detail: e.to_string(),
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
