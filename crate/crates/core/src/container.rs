//! Self-describing binary dataset container.
//!
//! Layout (all integers little endian):
//!
//! ```text
//! magic      8 bytes   b"PITTDS\0\x01"
//! header     u32 len + JSON (DatasetHeader)
//! samples    repeated header.sample_count times:
//!              u32 len + JSON (SampleMeta)
//!              i32 x pad_len        token ids
//!              f32 x n              field arrays, sizes from SampleMeta
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eqtok::{EquationSpec, Family, TokenSequence, Vocabulary, VOCAB_VERSION};

pub const MAGIC: &[u8; 8] = b"PITTDS\0\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a dataset container (bad magic)")]
    BadMagic,
    #[error("unsupported container format version {0}")]
    Version(u32),
    #[error("{path} already exists; pass --overwrite to replace it")]
    Exists { path: String },
    #[error("invalid container: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub family: Family,
    pub pad_len: usize,
    pub vocab_version: u32,
    pub vocab_hash: String,
    pub base_seed: u64,
    #[serde(default)]
    pub sample_count: usize,
    /// Generation settings: solver config, grids, GRF spectrum, plate ranges...
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl DatasetHeader {
    pub fn new(family: Family, pad_len: usize, base_seed: u64) -> Self {
        let vocab = Vocabulary::canonical();
        Self {
            format_version: FORMAT_VERSION,
            family,
            pad_len,
            vocab_version: VOCAB_VERSION,
            vocab_hash: vocab.manifest_hash(),
            base_seed,
            sample_count: 0,
            meta: serde_json::Map::new(),
        }
    }
}

/// Field payload of one sample. Arrays are row-major.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleData {
    /// `u[frame][x]`.
    Series1d { frames: usize, nx: usize, u: Vec<f32> },
    /// `w[frame][i][j]` on an `nx x ny` grid.
    Series2d { frames: usize, nx: usize, ny: usize, dt: f64, w: Vec<f32> },
    /// Input/target pair on an `nx x ny` grid.
    Steady { nx: usize, ny: usize, input: Vec<f32>, target: Vec<f32> },
}

impl SampleData {
    /// Number of grid points per frame.
    pub fn points(&self) -> usize {
        match self {
            SampleData::Series1d { nx, .. } => *nx,
            SampleData::Series2d { nx, ny, .. } | SampleData::Steady { nx, ny, .. } => nx * ny,
        }
    }

    pub fn frames(&self) -> usize {
        match self {
            SampleData::Series1d { frames, .. } | SampleData::Series2d { frames, .. } => *frames,
            SampleData::Steady { .. } => 1,
        }
    }

    /// Frame `n` of a time series.
    pub fn frame(&self, n: usize) -> &[f32] {
        let p = self.points();
        match self {
            SampleData::Series1d { u, .. } => &u[n * p..(n + 1) * p],
            SampleData::Series2d { w, .. } => &w[n * p..(n + 1) * p],
            SampleData::Steady { target, .. } => target,
        }
    }

    fn arrays(&self) -> Vec<&[f32]> {
        match self {
            SampleData::Series1d { u, .. } => vec![u],
            SampleData::Series2d { w, .. } => vec![w],
            SampleData::Steady { input, target, .. } => vec![input, target],
        }
    }

    fn check_shape(&self) -> Result<(), DatasetError> {
        let ok = match self {
            SampleData::Series1d { frames, nx, u } => u.len() == frames * nx,
            SampleData::Series2d { frames, nx, ny, w, .. } => w.len() == frames * nx * ny,
            SampleData::Steady { nx, ny, input, target } => input.len() == nx * ny && target.len() == nx * ny,
        };
        if ok {
            Ok(())
        } else {
            Err(DatasetError::Invalid("field array length does not match declared shape".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Split group: all samples sharing a group stay in one partition under
    /// equation-level splitting.
    pub group: u64,
    pub spec: EquationSpec,
    pub tokens: Vec<i32>,
    pub data: SampleData,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
enum Layout {
    Series1d { frames: usize, nx: usize },
    Series2d { frames: usize, nx: usize, ny: usize, dt: f64 },
    Steady { nx: usize, ny: usize },
}

#[derive(Serialize, Deserialize)]
struct SampleMeta {
    group: u64,
    spec: EquationSpec,
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetContainer {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl DatasetContainer {
    pub fn new(mut header: DatasetHeader, samples: Vec<Sample>) -> Result<Self, DatasetError> {
        header.sample_count = samples.len();
        let c = Self { header, samples };
        c.verify()?;
        Ok(c)
    }

    pub fn family(&self) -> Family {
        self.header.family
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Recomputes the container invariants: vocabulary hash, token lengths,
    /// token range, finite fields and declared shapes.
    pub fn verify(&self) -> Result<(), DatasetError> {
        let vocab = Vocabulary::canonical();
        if self.header.vocab_hash != vocab.manifest_hash() {
            return Err(DatasetError::Invalid(format!(
                "vocabulary hash {} does not match the canonical manifest {}",
                self.header.vocab_hash,
                vocab.manifest_hash()
            )));
        }
        if self.header.sample_count != self.samples.len() {
            return Err(DatasetError::Invalid(format!(
                "header declares {} samples, found {}",
                self.header.sample_count,
                self.samples.len()
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.tokens.len() != self.header.pad_len {
                return Err(DatasetError::Invalid(format!(
                    "sample {i}: {} tokens, header declares {}",
                    s.tokens.len(),
                    self.header.pad_len
                )));
            }
            TokenSequence::from_stored(s.tokens.clone(), vocab)
                .map_err(|e| DatasetError::Invalid(format!("sample {i}: {e}")))?;
            if s.spec.family() != self.header.family {
                return Err(DatasetError::Invalid(format!("sample {i}: family {:?} in a {:?} container", s.spec.family(), self.header.family)));
            }
            s.data.check_shape().map_err(|e| DatasetError::Invalid(format!("sample {i}: {e}")))?;
            if s.data.arrays().iter().any(|a| a.iter().any(|v| !v.is_finite())) {
                return Err(DatasetError::Invalid(format!("sample {i}: non-finite field value")));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), DatasetError> {
        w.write_all(MAGIC)?;
        write_json(&mut w, &self.header)?;
        for s in &self.samples {
            let layout = match &s.data {
                SampleData::Series1d { frames, nx, .. } => Layout::Series1d { frames: *frames, nx: *nx },
                SampleData::Series2d { frames, nx, ny, dt, .. } => {
                    Layout::Series2d { frames: *frames, nx: *nx, ny: *ny, dt: *dt }
                }
                SampleData::Steady { nx, ny, .. } => Layout::Steady { nx: *nx, ny: *ny },
            };
            write_json(&mut w, &SampleMeta { group: s.group, spec: s.spec.clone(), layout })?;
            for &t in &s.tokens {
                w.write_i32::<LittleEndian>(t)?;
            }
            for arr in s.data.arrays() {
                for &v in arr {
                    w.write_f32::<LittleEndian>(v)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, DatasetError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DatasetError::BadMagic);
        }
        let header: DatasetHeader = read_json(&mut r)?;
        if header.format_version != FORMAT_VERSION {
            return Err(DatasetError::Version(header.format_version));
        }
        let mut samples = Vec::with_capacity(header.sample_count);
        for _ in 0..header.sample_count {
            let meta: SampleMeta = read_json(&mut r)?;
            let mut tokens = vec![0i32; header.pad_len];
            r.read_i32_into::<LittleEndian>(&mut tokens)?;
            let mut read_f32 = |n: usize| -> Result<Vec<f32>, DatasetError> {
                let mut v = vec![0f32; n];
                r.read_f32_into::<LittleEndian>(&mut v)?;
                Ok(v)
            };
            let data = match meta.layout {
                Layout::Series1d { frames, nx } => SampleData::Series1d { frames, nx, u: read_f32(frames * nx)? },
                Layout::Series2d { frames, nx, ny, dt } => {
                    SampleData::Series2d { frames, nx, ny, dt, w: read_f32(frames * nx * ny)? }
                }
                Layout::Steady { nx, ny } => {
                    let input = read_f32(nx * ny)?;
                    let target = read_f32(nx * ny)?;
                    SampleData::Steady { nx, ny, input, target }
                }
            };
            samples.push(Sample { group: meta.group, spec: meta.spec, tokens, data });
        }
        let c = Self { header, samples };
        c.verify()?;
        Ok(c)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    /// Hex SHA-256 of the serialized container.
    pub fn content_hash(&self) -> String {
        hex_digest(&self.to_bytes())
    }

    pub fn save(&self, path: &Path, overwrite: bool) -> Result<(), DatasetError> {
        if path.exists() && !overwrite {
            return Err(DatasetError::Exists { path: path.display().to_string() });
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_json<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<(), DatasetError> {
    let bytes = serde_json::to_vec(value)?;
    let len = u32::try_from(bytes.len()).map_err(|_| DatasetError::Invalid("metadata block too large".into()))?;
    w.write_u32::<LittleEndian>(len)?;
    w.write_all(&bytes)?;
    Ok(())
}

fn read_json<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<T, DatasetError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(serde_json::from_slice(&buf)?)
}
