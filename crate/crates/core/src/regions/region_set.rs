use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::Mat;

use super::geometry::BoundingBox;

/// Proposals below this detector confidence are discarded.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.2;
/// Maximum number of proposals kept per frame.
pub const DEFAULT_REGION_CAP: usize = 100;

/// A detector output before filtering.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub feature: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub bbox: BoundingBox,
    pub frame_index: usize,
    pub confidence: f64,
    pub feature: Vec<f64>,
}

/// Regions of all sampled frames, flattened frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    num_frames: usize,
    frame_w: f64,
    frame_h: f64,
    feature_dim: usize,
    regions: Vec<Region>,
    /// `offsets[f]..offsets[f + 1]` are the flat indices of frame `f`.
    offsets: Vec<usize>,
}

impl RegionSet {
    /// Builds a set from already-filtered regions. Regions must be grouped by
    /// ascending frame index.
    pub fn new(
        num_frames: usize,
        frame_w: f64,
        frame_h: f64,
        feature_dim: usize,
        regions: Vec<Region>,
    ) -> Result<Self> {
        if !(frame_w > 0.0 && frame_h > 0.0) {
            return Err(Error::Data(format!(
                "frame size must be positive, got {frame_w}x{frame_h}"
            )));
        }
        let mut offsets = vec![0; num_frames + 1];
        let mut last_frame = 0;
        for r in &regions {
            if r.frame_index >= num_frames {
                return Err(Error::Data(format!(
                    "region frame {} outside [0, {num_frames})",
                    r.frame_index
                )));
            }
            if r.frame_index < last_frame {
                return Err(Error::Data("regions are not frame-major".into()));
            }
            if r.feature.len() != feature_dim {
                return Err(Error::shape("region feature", feature_dim, r.feature.len()));
            }
            last_frame = r.frame_index;
            offsets[r.frame_index + 1] += 1;
        }
        for f in 0..num_frames {
            offsets[f + 1] += offsets[f];
        }
        Ok(RegionSet {
            num_frames,
            frame_w,
            frame_h,
            feature_dim,
            regions,
            offsets,
        })
    }

    /// Total number of regions N.
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn frame_size(&self) -> (f64, f64) {
        (self.frame_w, self.frame_h)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, flat: usize) -> &Region {
        &self.regions[flat]
    }

    /// Flat indices of the regions on frame `f` (empty for frames out of range).
    pub fn frame_range(&self, f: usize) -> Range<usize> {
        if f >= self.num_frames {
            return 0..0;
        }
        self.offsets[f]..self.offsets[f + 1]
    }

    pub fn frame_len(&self, f: usize) -> usize {
        self.frame_range(f).len()
    }

    pub fn flat_index(&self, frame: usize, local: usize) -> Option<usize> {
        let range = self.frame_range(frame);
        (local < range.len()).then(|| range.start + local)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let frame = self.regions[flat].frame_index;
        (frame, flat - self.offsets[frame])
    }

    /// `N x d` feature matrix, one region per row.
    pub fn feature_matrix(&self) -> Mat {
        let data = self
            .regions
            .iter()
            .flat_map(|r| r.feature.iter().copied())
            .collect();
        Mat::from_vec(self.len(), self.feature_dim, data).expect("feature matrix")
    }

    /// `N x 5` matrix of [`location_feature`] rows.
    pub fn location_matrix(&self) -> Mat {
        let data = self
            .regions
            .iter()
            .flat_map(|r| location_feature(r, self.num_frames, self.frame_w, self.frame_h))
            .collect();
        Mat::from_vec(self.len(), 5, data).expect("location matrix")
    }
}

/// Normalised `(x1, y1, x2, y2, frame)` tuple, every component in `[0, 1]`.
pub fn location_feature(region: &Region, num_frames: usize, frame_w: f64, frame_h: f64) -> [f64; 5] {
    let b = &region.bbox;
    let unit = |v: f64| v.clamp(0.0, 1.0);
    [
        unit(b.x1() / frame_w),
        unit(b.y1() / frame_h),
        unit(b.x2() / frame_w),
        unit(b.y2() / frame_h),
        unit(region.frame_index as f64 / num_frames.max(1) as f64),
    ]
}

/// Filters per-frame proposals by confidence, keeps the `cap` most confident
/// per frame (stable on ties) and flattens frame-major.
pub fn assemble_region_set(
    per_frame: Vec<Vec<Proposal>>,
    conf_threshold: f64,
    cap: usize,
    frame_w: f64,
    frame_h: f64,
) -> Result<RegionSet> {
    let feature_dim = per_frame
        .iter()
        .flatten()
        .map(|p| p.feature.len())
        .next()
        .unwrap_or(0);
    let num_frames = per_frame.len();
    let mut regions = Vec::new();
    for (frame_index, proposals) in per_frame.into_iter().enumerate() {
        let mut kept: Vec<Proposal> = Vec::with_capacity(proposals.len());
        for p in proposals {
            if p.feature.len() != feature_dim {
                return Err(Error::shape("proposal feature", feature_dim, p.feature.len()));
            }
            if p.confidence >= conf_threshold {
                kept.push(p);
            }
        }
        // sort_by is stable, so equal confidences keep input order
        kept.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        kept.truncate(cap);
        regions.extend(kept.into_iter().map(|p| Region {
            bbox: p.bbox,
            frame_index,
            confidence: p.confidence,
            feature: p.feature,
        }));
    }
    RegionSet::new(num_frames, frame_w, frame_h, feature_dim, regions)
}
