//! Proposal regions: geometry, positive matching and feature files.

mod feature_file;
mod geometry;
mod matching;
mod region_set;

pub use feature_file::{
    decode_f32, encode_f32, segment_file, sidecar_path, RegionFile, RegionSidecar, TemporalFile,
    TemporalSidecar, REGION_EXT, TEMPORAL_EXT,
};
pub use geometry::{iou, BoundingBox};
pub use matching::{match_positives, FrameRule, GtBox, PositiveMatch, POSITIVE_IOU};
pub use region_set::{
    assemble_region_set, location_feature, Proposal, Region, RegionSet, DEFAULT_CONF_THRESHOLD,
    DEFAULT_REGION_CAP,
};
