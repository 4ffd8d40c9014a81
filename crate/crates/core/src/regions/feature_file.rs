//! Region (`.feat`) and temporal (`.tfeat`) feature files.
//!
//! Each binary file holds a row-major little-endian `float32` matrix and is
//! described by a JSON sidecar written next to it as `<file>.json`
//! (e.g. `v_abc_0.feat` + `v_abc_0.feat.json`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Mat;

use super::geometry::BoundingBox;
use super::region_set::Proposal;

pub const REGION_EXT: &str = "feat";
pub const TEMPORAL_EXT: &str = "tfeat";

pub fn sidecar_path(binary: &Path) -> PathBuf {
    let mut name = binary.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Encodes a matrix as little-endian `f32`, row-major.
pub fn encode_f32(m: &Mat) -> Vec<u8> {
    m.data()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub fn decode_f32(bytes: &[u8], rows: usize, cols: usize) -> Result<Mat> {
    if bytes.len() != rows * cols * 4 {
        return Err(Error::Data(format!(
            "expected {} bytes for a {rows}x{cols} f32 matrix, found {}",
            rows * cols * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Mat::from_vec(rows, cols, data)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSidecar {
    pub n: usize,
    pub d: usize,
    pub f: usize,
    pub frames: Vec<usize>,
    pub boxes: Vec<[f64; 4]>,
    pub conf: Vec<f64>,
    pub frame_w: f64,
    pub frame_h: f64,
}

/// Raw proposals of one segment as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionFile {
    pub meta: RegionSidecar,
    pub features: Mat,
}

impl RegionFile {
    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if m.frames.len() != m.n || m.boxes.len() != m.n || m.conf.len() != m.n {
            return Err(Error::Data(format!(
                "region sidecar lists disagree with n={}",
                m.n
            )));
        }
        if self.features.shape() != (m.n, m.d) {
            return Err(Error::shape(
                "region features",
                format!("{}x{}", m.n, m.d),
                format!("{}x{}", self.features.rows(), self.features.cols()),
            ));
        }
        if let Some(&bad) = m.frames.iter().find(|&&f| f >= m.f) {
            return Err(Error::Data(format!("frame {bad} outside [0, {})", m.f)));
        }
        Ok(())
    }

    pub fn write(&self, binary: &Path) -> Result<()> {
        self.validate()?;
        write_file(binary, &encode_f32(&self.features))?;
        write_file(
            &sidecar_path(binary),
            serde_json::to_string(&self.meta)?.as_bytes(),
        )
    }

    pub fn read(binary: &Path) -> Result<Self> {
        let meta: RegionSidecar = read_json(&sidecar_path(binary))?;
        let bytes = fs::read(binary).map_err(|e| Error::io(binary, e))?;
        let file = RegionFile {
            features: decode_f32(&bytes, meta.n, meta.d)?,
            meta,
        };
        file.validate()?;
        Ok(file)
    }

    /// Groups the stored proposals by frame, in file order.
    pub fn into_proposals(self) -> Result<Vec<Vec<Proposal>>> {
        self.validate()?;
        let mut per_frame = vec![Vec::new(); self.meta.f];
        for i in 0..self.meta.n {
            per_frame[self.meta.frames[i]].push(Proposal {
                bbox: BoundingBox::try_from(self.meta.boxes[i])?,
                confidence: self.meta.conf[i],
                feature: self.features.row(i).to_vec(),
            });
        }
        Ok(per_frame)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalSidecar {
    /// Number of frames F_t.
    pub n: usize,
    pub d: usize,
    /// Full video duration in seconds, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

/// Frame-wise appearance+motion features of one segment (`F_t x d_t`).
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalFile {
    pub meta: TemporalSidecar,
    pub features: Mat,
}

impl TemporalFile {
    pub fn write(&self, binary: &Path) -> Result<()> {
        write_file(binary, &encode_f32(&self.features))?;
        write_file(
            &sidecar_path(binary),
            serde_json::to_string(&self.meta)?.as_bytes(),
        )
    }

    pub fn read(binary: &Path) -> Result<Self> {
        let meta: TemporalSidecar = read_json(&sidecar_path(binary))?;
        if meta.n == 0 {
            return Err(Error::Data(format!("{}: no frames", binary.display())));
        }
        let bytes = fs::read(binary).map_err(|e| Error::io(binary, e))?;
        Ok(TemporalFile {
            features: decode_f32(&bytes, meta.n, meta.d)?,
            meta,
        })
    }
}

/// `<dir>/<video_id>_<segment_index>.<ext>`
pub fn segment_file(dir: &Path, video_id: &str, segment_index: usize, ext: &str) -> PathBuf {
    dir.join(format!("{video_id}_{segment_index}.{ext}"))
}
