//! Named parameter tensors shared by the model, optimizer and checkpoints.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Tape, Var};
use crate::tensor::Mat;

/// Logical parameter groups, used for reporting and learning-rate groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Embedding,
    AttentionLstm,
    LanguageLstm,
    Output,
    RegionAttention,
    Temporal,
    Global,
    Grounding,
    SelfAttention,
    Classifier,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 10] = [
        ParamGroup::Embedding,
        ParamGroup::AttentionLstm,
        ParamGroup::LanguageLstm,
        ParamGroup::Output,
        ParamGroup::RegionAttention,
        ParamGroup::Temporal,
        ParamGroup::Global,
        ParamGroup::Grounding,
        ParamGroup::SelfAttention,
        ParamGroup::Classifier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Embedding => "embedding",
            ParamGroup::AttentionLstm => "attention_lstm",
            ParamGroup::LanguageLstm => "language_lstm",
            ParamGroup::Output => "output",
            ParamGroup::RegionAttention => "region_attention",
            ParamGroup::Temporal => "temporal",
            ParamGroup::Global => "global",
            ParamGroup::Grounding => "grounding",
            ParamGroup::SelfAttention => "self_attention",
            ParamGroup::Classifier => "classifier",
        }
    }

    /// Parameters fine-tuned from a pretrained source at a reduced rate.
    pub fn is_fine_tune(self) -> bool {
        self == ParamGroup::Classifier
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Mat,
}

/// Handle into a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

/// Initialisation scheme for a new parameter.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Normal with std `1/sqrt(fan_in)` where fan_in is the row count.
    FanIn,
    Normal(f64),
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        group: ParamGroup,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        let value = match init {
            Init::Zeros => Mat::zeros(rows, cols),
            Init::Const(v) => Mat::filled(rows, cols, v),
            Init::FanIn => normal(rows, cols, 1.0 / (rows as f64).sqrt(), rng),
            Init::Normal(std) => normal(rows, cols, std, rng),
        };
        self.push(name, group, value)
    }

    pub fn push(&mut self, name: &str, group: ParamGroup, value: Mat) -> ParamId {
        debug_assert!(self.find(name).is_none(), "duplicate parameter {name}");
        self.params.push(Param {
            name: name.to_string(),
            group,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].value
    }

    pub fn param(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`.
    pub fn bind(&self, tape: &Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
        }
    }

    /// Zero-filled gradient buffers shaped like the parameters.
    pub fn zeros_like(&self) -> Vec<Mat> {
        self.params
            .iter()
            .map(|p| Mat::zeros(p.value.rows(), p.value.cols()))
            .collect()
    }
}

fn normal<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Mat {
    let dist = Normal::new(0.0, std).expect("finite std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Mat::from_vec(rows, cols, data).expect("shape")
}

/// Tape variables of a bound [`ParamSet`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Adds `scale * d loss / d param` into `acc` for every parameter.
    pub fn accumulate(&self, grads: &Gradients, scale: f64, acc: &mut [Mat]) {
        for (v, a) in self.vars.iter().zip(acc.iter_mut()) {
            if let Some(g) = grads.get(*v) {
                if scale == 1.0 {
                    a.add_assign(g);
                } else {
                    a.add_assign(&g.map(|x| x * scale));
                }
            }
        }
    }
}
