use super::geometry::{iou, BoundingBox};
use super::region_set::RegionSet;

/// IoU a region must strictly exceed to count as positive.
pub const POSITIVE_IOU: f64 = 0.5;

/// A ground-truth box with its object class and annotated frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GtBox {
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub frame: usize,
}

/// Which regions may match a ground-truth box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameRule {
    /// Only regions on the GT box's own frame.
    #[default]
    SameFrame,
    /// Any region, regardless of frame.
    AnyFrame,
}

/// Positive-region indicators over all N regions of a set.
#[derive(Clone, Debug, PartialEq)]
pub struct PositiveMatch {
    gamma: Vec<bool>,
    classes: Vec<Option<usize>>,
    ious: Vec<f64>,
}

impl PositiveMatch {
    pub fn gamma(&self) -> &[bool] {
        &self.gamma
    }

    /// Class of the best-matching GT box for each positive region.
    pub fn classes(&self) -> &[Option<usize>] {
        &self.classes
    }

    /// Best IoU of each region against the eligible GT boxes.
    pub fn best_ious(&self) -> &[f64] {
        &self.ious
    }

    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.classes
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| (i, c)))
    }

    pub fn num_positives(&self) -> usize {
        self.gamma.iter().filter(|&&g| g).count()
    }

    pub fn is_empty(&self) -> bool {
        self.num_positives() == 0
    }

    /// γ restricted to one frame of `regions`, length `N_f`.
    pub fn on_frame(&self, regions: &RegionSet, frame: usize) -> Vec<bool> {
        self.gamma[regions.frame_range(frame)].to_vec()
    }
}

/// Marks every region whose IoU with some eligible GT box is over `threshold`.
/// A region matching several boxes takes the class of the largest IoU, ties
/// going to the lowest GT index.
pub fn match_positives(
    regions: &RegionSet,
    gt: &[GtBox],
    threshold: f64,
    rule: FrameRule,
) -> PositiveMatch {
    let n = regions.len();
    let mut gamma = vec![false; n];
    let mut classes = vec![None; n];
    let mut ious = vec![0.0; n];
    for (i, region) in regions.regions().iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for g in gt {
            if rule == FrameRule::SameFrame && g.frame != region.frame_index {
                continue;
            }
            let v = iou(&region.bbox, &g.bbox);
            if v > ious[i] {
                ious[i] = v;
            }
            if v > threshold && best.is_none_or(|(b, _)| v > b) {
                best = Some((v, g.class_id));
            }
        }
        if let Some((_, class)) = best {
            gamma[i] = true;
            classes[i] = Some(class);
        }
    }
    PositiveMatch {
        gamma,
        classes,
        ious,
    }
}
