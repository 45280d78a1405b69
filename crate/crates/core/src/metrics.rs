//! Pixel-level segmentation metrics: sensitivity, specificity, accuracy, the
//! ROC curve and its area.

use std::io::Write;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Counts with `score >= threshold` predicted positive.
pub fn confusion_at_threshold(
    scores: &[f64],
    truth: &[bool],
    threshold: f64,
) -> Result<ConfusionCounts> {
    check_len(scores.len(), truth.len())?;
    let mut c = ConfusionCounts::default();
    for (&s, &t) in scores.iter().zip(truth) {
        match (s >= threshold, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// `(sensitivity, specificity, accuracy)`. A rate whose denominator is zero
/// is reported as 1.
pub fn sn_sp_acc(c: &ConfusionCounts) -> Result<(f64, f64, f64)> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidInput("no pixels were evaluated".into()));
    }
    let rate = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok((
        rate(c.tp, c.tp + c.fn_),
        rate(c.tn, c.tn + c.fp),
        (c.tp + c.tn) as f64 / total as f64,
    ))
}

/// ROC points from `(0, 0)` to `(1, 1)`, one per distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<(f64, f64)>,
}

impl RocCurve {
    /// `(fpr, tpr)` pairs.
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Writes the curve as `fpr,tpr` CSV with 9 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "fpr,tpr")?;
        for &(x, y) in &self.points {
            writeln!(out, "{},{}", sig9(x), sig9(y))?;
        }
        Ok(())
    }
}

fn sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn class_totals(truth: &[bool]) -> Result<(u64, u64)> {
    let pos = truth.iter().filter(|&&t| t).count() as u64;
    let neg = truth.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidInput(
            "ROC analysis needs at least one positive and one negative".into(),
        ));
    }
    Ok((pos, neg))
}

fn check_finite(scores: &[f64]) -> Result<()> {
    match scores.iter().find(|s| !s.is_finite()) {
        Some(s) => Err(Error::NonFinite(format!("score {s}"))),
        None => Ok(()),
    }
}

/// Sweeps the threshold down through every distinct score; tied scores move
/// the curve in a single step.
pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<RocCurve> {
    check_len(scores.len(), truth.len())?;
    check_finite(scores)?;
    let (pos, neg) = class_totals(truth)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if truth[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * 0.5)
        .sum()
}

/// Mann-Whitney estimate `P(s_pos > s_neg) + P(s_pos = s_neg) / 2` by
/// enumerating every positive-negative pair. Quadratic; meant as a reference.
pub fn auc_pairwise_oracle(scores: &[f64], truth: &[bool]) -> Result<f64> {
    check_len(scores.len(), truth.len())?;
    check_finite(scores)?;
    let (pos, neg) = class_totals(truth)?;
    let mut twice_wins = 0u64;
    for (sp, _) in scores.iter().zip(truth).filter(|(_, &t)| t) {
        for (sn, _) in scores.iter().zip(truth).filter(|(_, &t)| !t) {
            twice_wins += match sp.partial_cmp(sn) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sn: f64,
    pub sp: f64,
    pub acc: f64,
    pub auc: f64,
    pub roc: RocCurve,
    pub threshold: f64,
    pub counts: ConfusionCounts,
}

impl MetricsReport {
    pub fn compute(scores: &[f64], truth: &[bool], threshold: f64) -> Result<Self> {
        let counts = confusion_at_threshold(scores, truth, threshold)?;
        let (sn, sp, acc) = sn_sp_acc(&counts)?;
        let roc = roc_curve(scores, truth)?;
        let auc = auc(&roc);
        Ok(Self {
            sn,
            sp,
            acc,
            auc,
            roc,
            threshold,
            counts,
        })
    }

    /// `name,sn,sp,acc,auc` with six decimals.
    pub fn table_row(&self, name: &str) -> String {
        format!(
            "{name},{:.6},{:.6},{:.6},{:.6}",
            self.sn, self.sp, self.acc, self.auc
        )
    }
}
