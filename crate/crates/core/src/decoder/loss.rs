use serde::{Deserialize, Serialize};

use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::grounding::LOG_EPS;

/// Weights of the attention, grounding and classification terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights {
    pub alpha: f64,
    pub beta: f64,
    pub cls: f64,
}

impl LambdaWeights {
    pub fn new(alpha: f64, beta: f64, cls: f64) -> Result<Self> {
        let l = LambdaWeights { alpha, beta, cls };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("cls", self.cls)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("lambda {name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// A named supervision setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub label: &'static str,
    pub lambdas: LambdaWeights,
    pub self_attention: bool,
}

const fn preset(name: &'static str, label: &'static str, alpha: f64, beta: f64, cls: f64, self_attention: bool) -> Preset {
    Preset {
        name,
        label,
        lambdas: LambdaWeights { alpha, beta, cls },
        self_attention,
    }
}

pub const PRESETS: [Preset; 9] = [
    preset("unsup-wo-selfattn", "Unsup. (w/o SelfAttn)", 0.0, 0.0, 0.0, false),
    preset("unsup", "Unsup.", 0.0, 0.0, 0.0, true),
    preset("sup-attn", "Sup. Attn.", 0.05, 0.0, 0.0, true),
    preset("sup-grd", "Sup. Grd.", 0.0, 0.5, 0.0, true),
    preset("sup-cls", "Sup. Cls.", 0.0, 0.0, 0.1, true),
    preset("sup-attn-grd", "Sup. Attn.+Grd.", 0.5, 0.5, 0.0, true),
    preset("sup-attn-cls", "Sup. Attn.+Cls.", 0.05, 0.0, 0.1, true),
    preset("sup-grd-cls", "Sup. Grd.+Cls.", 0.0, 0.05, 0.1, true),
    preset("sup-attn-grd-cls", "Sup. Attn.+Grd.+Cls.", 0.1, 0.1, 0.1, true),
];

pub fn find_preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Loss components and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub sent: f64,
    pub attn: f64,
    pub cls: f64,
    pub grd: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.sent, self.attn, self.cls, self.grd, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// `L = L_sent + lambda_alpha L_attn + lambda_c L_cls + lambda_beta L_grd`.
pub fn joint_loss(sent: f64, attn: f64, cls: f64, grd: f64, lambdas: &LambdaWeights) -> Result<LossBreakdown> {
    lambdas.validate()?;
    Ok(LossBreakdown {
        sent,
        attn,
        cls,
        grd,
        total: sent + lambdas.alpha * attn + lambdas.cls * cls + lambdas.beta * grd,
    })
}

/// What the decoder did at one timestep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeStep {
    pub t: usize,
    pub h_a: Vec<f64>,
    pub word_probs: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Grounding distribution over regions, for class words.
    pub beta: Option<Vec<f64>>,
    /// Target token (teacher forcing) or emitted token (generation).
    pub token: usize,
}

/// Mean over non-PAD targets of `-log p(target)`.
pub fn sentence_loss(steps: &[DecodeStep], targets: &[usize]) -> Result<f64> {
    if steps.len() != targets.len() {
        return Err(Error::shape("sentence targets", steps.len(), targets.len()));
    }
    let mut total = 0.0;
    let mut count = 0;
    for (s, &t) in steps.iter().zip(targets) {
        if t == PAD {
            continue;
        }
        let p = *s.word_probs.get(t).ok_or(Error::TokenOutOfRange {
            id: t,
            size: s.word_probs.len(),
        })?;
        total -= p.max(LOG_EPS).ln();
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn step(probs: Vec<f64>) -> DecodeStep {
        DecodeStep {
            t: 0,
            h_a: vec![],
            word_probs: probs,
            alpha: vec![],
            beta: None,
            token: 0,
        }
    }

    #[test]
    fn joint_examples() {
        let l = joint_loss(1.0, 0.2, 0.4, 0.6, &LambdaWeights::new(0.5, 0.5, 0.5).unwrap()).unwrap();
        assert_relative_eq!(l.total, 1.6, epsilon = 1e-12);
        let z = joint_loss(2.5, 9.0, 9.0, 9.0, &LambdaWeights::default()).unwrap();
        assert_eq!(z.total, 2.5);
        let neg = LambdaWeights { alpha: -0.1, beta: 0.0, cls: 0.0 };
        assert!(joint_loss(1.0, 0.0, 0.0, 0.0, &neg).is_err());
    }

    #[test]
    fn preset_values() {
        let p = find_preset("sup-attn-cls").unwrap();
        assert_eq!(p.lambdas, LambdaWeights { alpha: 0.05, beta: 0.0, cls: 0.1 });
        assert!(!find_preset("unsup-wo-selfattn").unwrap().self_attention);
        assert_eq!(PRESETS.len(), 9);
        assert!(find_preset("nope").is_none());
    }

    #[test]
    fn sentence_loss_examples() {
        let sure = vec![step(vec![0.0, 1.0]), step(vec![1.0, 0.0])];
        assert_eq!(sentence_loss(&sure, &[1, 0]).unwrap(), 0.0);
        let uniform: Vec<DecodeStep> = (0..3).map(|_| step(vec![0.1; 10])).collect();
        assert_relative_eq!(sentence_loss(&uniform, &[4, 5, 6]).unwrap(), 10f64.ln(), epsilon = 1e-12);
        // PAD targets contribute nothing
        assert_relative_eq!(sentence_loss(&uniform, &[4, PAD, PAD]).unwrap(), 10f64.ln(), epsilon = 1e-12);
        assert!(sentence_loss(&uniform, &[4]).is_err());
    }
}
