use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

use super::localization::F1Score;

/// Placeholder for a metric this crate does not compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NotAvailable;

impl Serialize for NotAvailable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str("n/a")
    }
}

impl<'de> Deserialize<'de> for NotAvailable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let _ = String::deserialize(d)?;
        Ok(NotAvailable)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<&F1Score> for PrecisionRecall {
    fn from(s: &F1Score) -> Self {
        PrecisionRecall {
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub attn: Option<f64>,
    pub grd: Option<f64>,
    pub cls: Option<f64>,
    pub upper_bound: Option<f64>,
    /// `(precision, recall)`.
    pub f1_all: Option<(f64, f64)>,
    pub f1_loc: Option<(f64, f64)>,
}

/// Evaluation results. All values are percentages (language metrics are
/// scaled by 100).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub split: String,
    pub segments: usize,
    pub attn: Option<f64>,
    pub grd: Option<f64>,
    pub upper_bound: Option<f64>,
    pub f1_all: Option<PrecisionRecall>,
    pub f1_loc: Option<PrecisionRecall>,
    pub cls: Option<f64>,
    pub bleu1: Option<f64>,
    pub bleu4: Option<f64>,
    pub cider: Option<f64>,
    pub meteor: NotAvailable,
    pub spice: NotAvailable,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_class: Vec<ClassRow>,
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

impl MetricReport {
    /// Checks that percentages lie in `[0, 100]` and that each F1 is the
    /// harmonic mean of its precision and recall.
    pub fn validate(&self) -> Result<()> {
        let mut pct = vec![
            ("attn", self.attn),
            ("grd", self.grd),
            ("upper_bound", self.upper_bound),
            ("cls", self.cls),
            ("bleu1", self.bleu1),
            ("bleu4", self.bleu4),
        ];
        for (name, pr) in [("f1_all", self.f1_all), ("f1_loc", self.f1_loc)] {
            if let Some(pr) = pr {
                pct.extend([(name, Some(pr.precision)), (name, Some(pr.recall)), (name, Some(pr.f1))]);
                let h = super::harmonic_f1(pr.precision, pr.recall);
                if (h - pr.f1).abs() > 1e-9 {
                    return Err(Error::Data(format!("{name}: F1 {} is not the harmonic mean {h}", pr.f1)));
                }
            }
        }
        for (name, v) in pct {
            if let Some(v) = v {
                if !(0.0..=100.0).contains(&v) {
                    return Err(Error::Data(format!("{name} = {v} outside [0, 100]")));
                }
            }
        }
        if let Some(c) = self.cider {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Data(format!("cider = {c}")));
            }
        }
        Ok(())
    }

    /// Aligned plain-text table, optionally with the per-class breakdown.
    pub fn to_table(&self, per_class: bool) -> String {
        let mut s = String::new();
        let pr = |p: Option<PrecisionRecall>| {
            p.map_or(("n/a".into(), "n/a".into(), "n/a".into()), |p| {
                (format!("{:.2}", p.precision), format!("{:.2}", p.recall), format!("{:.2}", p.f1))
            })
        };
        let (ap, ar, af) = pr(self.f1_all);
        let (lp, lr, lf) = pr(self.f1_loc);
        let rows = [
            ("split", self.split.clone()),
            ("segments", self.segments.to_string()),
            ("Bleu@1", fmt(self.bleu1)),
            ("Bleu@4", fmt(self.bleu4)),
            ("METEOR", "n/a".into()),
            ("CIDEr", fmt(self.cider)),
            ("SPICE", "n/a".into()),
            ("Attn.", fmt(self.attn)),
            ("Grd.", fmt(self.grd)),
            ("Upper bound", fmt(self.upper_bound)),
            ("F1_all", af),
            ("  precision", ap),
            ("  recall", ar),
            ("F1_loc", lf),
            ("  precision", lp),
            ("  recall", lr),
            ("Cls.", fmt(self.cls)),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<14}{v:>10}");
        }
        if per_class && !self.per_class.is_empty() {
            let width = self.per_class.iter().map(|r| r.class.len()).max().unwrap_or(5).max(5);
            let _ = writeln!(
                s,
                "\n{:<width$}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}",
                "class", "Attn.", "Grd.", "Cls.", "UB", "P_all", "R_all", "P_loc", "R_loc"
            );
            for r in &self.per_class {
                let (pa, ra) = r.f1_all.map_or((None, None), |(p, r)| (Some(p), Some(r)));
                let (pl, rl) = r.f1_loc.map_or((None, None), |(p, r)| (Some(p), Some(r)));
                let _ = writeln!(
                    s,
                    "{:<width$}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}",
                    r.class,
                    fmt(r.attn),
                    fmt(r.grd),
                    fmt(r.cls),
                    fmt(r.upper_bound),
                    fmt(pa),
                    fmt(ra),
                    fmt(pl),
                    fmt(rl)
                );
            }
        }
        s
    }
}
