//! Loss-threshold membership inference.
//!
//! The attack predicts "member" for every sample whose cross-entropy loss is
//! below a threshold fitted on a calibration half of the samples, and is
//! scored by F1 on the other half.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate, Dataset, Mlp, ParamVector};
use crate::rng::{stream, tag};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSample {
    pub loss: f64,
    pub member: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn tally<'a>(samples: impl IntoIterator<Item = &'a AttackSample>, threshold: f64) -> Self {
        let mut c = Counts::default();
        for s in samples {
            match (s.loss < threshold, s.member) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        let (p, r) = (self.precision(), self.recall());
        2.0 * p * r / (p + r)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    /// Fitted threshold; `None` means every sample is predicted a member.
    pub threshold: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

impl AttackReport {
    fn from_counts(threshold: f64, counts: Counts) -> Self {
        Self {
            threshold: threshold.is_finite().then_some(threshold),
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
        }
    }
}

/// Per-sample losses of `params` on both sets, members flagged true.
pub fn collect_losses(
    model: &Mlp,
    params: &ParamVector,
    member_data: &Dataset,
    nonmember_data: &Dataset,
) -> Result<Vec<AttackSample>> {
    if member_data.is_empty() || nonmember_data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let members = evaluate(model, params, member_data)?.per_sample_losses;
    let others = evaluate(model, params, nonmember_data)?.per_sample_losses;
    Ok(members
        .into_iter()
        .map(|loss| AttackSample { loss, member: true })
        .chain(others.into_iter().map(|loss| AttackSample { loss, member: false }))
        .collect())
}

/// Fits a threshold on a stratified half of `samples` and scores the rest.
pub fn fit_and_score(samples: &[AttackSample], split_seed: u64) -> Result<AttackReport> {
    if let Some(s) = samples.iter().find(|s| !(s.loss.is_finite() && s.loss >= 0.0)) {
        return Err(Error::invalid(format!("attack losses must be finite and non-negative, got {}", s.loss)));
    }
    let (mut members, mut others): (Vec<AttackSample>, Vec<AttackSample>) = samples.iter().partition(|s| s.member);
    if members.len() < 2 || others.len() < 2 {
        return Err(Error::invalid(format!(
            "attack needs at least two samples per class, got {} members and {} nonmembers",
            members.len(),
            others.len()
        )));
    }
    let mut rng = stream(&[tag::MIA, split_seed]);
    members.shuffle(&mut rng);
    others.shuffle(&mut rng);
    let (cal_m, test_m) = members.split_at(members.len() / 2);
    let (cal_o, test_o) = others.split_at(others.len() / 2);
    let calibration: Vec<AttackSample> = cal_m.iter().chain(cal_o).copied().collect();

    let mut candidates: Vec<f64> = calibration.iter().map(|s| s.loss).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    candidates.push(f64::INFINITY);
    let mut best = (f64::INFINITY, -1.0);
    for &t in &candidates {
        let f1 = Counts::tally(&calibration, t).f1();
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    let threshold = best.0;
    Ok(AttackReport::from_counts(threshold, Counts::tally(test_m.iter().chain(test_o), threshold)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Effectiveness {
    pub f1_unlearned: f64,
    pub f1_scratch: f64,
    pub delta: f64,
    pub unlearned: AttackReport,
    pub scratch: AttackReport,
}

/// Attacks both models with the erased data as member candidates.
///
/// The larger of the two sets is truncated so members and nonmembers are
/// balanced.
pub fn unlearning_effectiveness(
    model: &Mlp,
    unlearned: &ParamVector,
    scratch: &ParamVector,
    erased: &Dataset,
    heldout: &Dataset,
    split_seed: u64,
) -> Result<Effectiveness> {
    unlearned.ensure_same_dim(scratch)?;
    let n = erased.len().min(heldout.len());
    let idx: Vec<usize> = (0..n).collect();
    let (erased, heldout) = (erased.subset(&idx), heldout.subset(&idx));
    let a = fit_and_score(&collect_losses(model, unlearned, &erased, &heldout)?, split_seed)?;
    let b = fit_and_score(&collect_losses(model, scratch, &erased, &heldout)?, split_seed)?;
    Ok(Effectiveness { f1_unlearned: a.f1, f1_scratch: b.f1, delta: a.f1 - b.f1, unlearned: a, scratch: b })
}
