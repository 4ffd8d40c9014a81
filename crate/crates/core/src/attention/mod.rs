//! Region attention over encoded regions and temporal attention over frames.

mod region;
mod temporal;

pub use region::{attention_loss, region_attention, AttentionWeights, RegionAttentionParams};
pub use temporal::{
    global_feature, temporal_context, GlobalParams, SegmentMeta, TemporalFeatureMap, TemporalParams,
};
