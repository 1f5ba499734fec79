use serde::{Deserialize, Serialize};

use super::{PointRecord, TrialRecord};
use crate::error::{Error, Result};
use crate::uq::Method;

fn points_of(r: &TrialRecord, m: Method) -> Result<&[PointRecord]> {
    let p = &r
        .method(m)
        .ok_or_else(|| Error::Config(format!("trial {} has no `{m}` records", r.trial)))?
        .points;
    if p.is_empty() {
        return Err(Error::Data(format!("trial {} has no test points", r.trial)));
    }
    Ok(p)
}

/// Mean and population standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn per_trial(
    records: &[TrialRecord],
    m: Method,
    stat: impl Fn(&[PointRecord]) -> f64,
) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::Config("no trials to aggregate".into()));
    }
    let v = records
        .iter()
        .map(|r| points_of(r, m).map(&stat))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_std(&v))
}

/// Average empirical coverage: per-trial covered fraction, then mean and
/// population std over trials.
pub fn aec(records: &[TrialRecord], m: Method) -> Result<(f64, f64)> {
    per_trial(records, m, |p| {
        p.iter().filter(|r| r.covered).count() as f64 / p.len() as f64
    })
}

/// Average interval width: per-trial mean width, then mean and population
/// std over trials.
pub fn aiw(records: &[TrialRecord], m: Method) -> Result<(f64, f64)> {
    per_trial(records, m, |p| p.iter().map(|r| r.width).sum::<f64>() / p.len() as f64)
}

/// What test points are sorted by before binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinKey {
    Target,
    /// Generator noise level; synthetic records only.
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: usize,
    /// Trial-averaged smallest and largest key value in the bin.
    pub y_lo: f64,
    pub y_hi: f64,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Equal-count bins on `y_true` within every trial, then per-bin coverage
/// and mean width averaged over trials.
pub fn conditional_bins(records: &[TrialRecord], m: Method, n_bins: usize) -> Result<Vec<BinSummary>> {
    binned(records, m, n_bins, BinKey::Target)
}

/// Like [`conditional_bins`] with a choice of sort key. When a trial has
/// fewer test points than `n_bins`, the number of bins drops to the number
/// of points.
pub fn binned(
    records: &[TrialRecord],
    m: Method,
    n_bins: usize,
    key: BinKey,
) -> Result<Vec<BinSummary>> {
    if records.is_empty() {
        return Err(Error::Config("no trials to aggregate".into()));
    }
    if n_bins == 0 {
        return Err(Error::field("n_bins", "need at least one bin"));
    }
    let n_points = points_of(&records[0], m)?.len();
    let nb = n_bins.min(n_points);
    // [lo, hi, coverage, width] per bin, summed over trials
    let mut acc = vec![[0.0f64; 4]; nb];
    for r in records {
        let p = points_of(r, m)?;
        if p.len() != n_points {
            return Err(Error::Data("trials disagree on the number of test points".into()));
        }
        let keys: Vec<f64> = match key {
            BinKey::Target => p.iter().map(|q| q.y_true).collect(),
            BinKey::Noise => r
                .noise
                .clone()
                .ok_or_else(|| Error::Config("records carry no noise levels".into()))?,
        };
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
        for (j, slot) in acc.iter_mut().enumerate() {
            let members = &order[j * n_points / nb..(j + 1) * n_points / nb];
            let k = members.len() as f64;
            slot[0] += keys[members[0]];
            slot[1] += keys[members[members.len() - 1]];
            slot[2] += members.iter().filter(|&&i| p[i].covered).count() as f64 / k;
            slot[3] += members.iter().map(|&i| p[i].width).sum::<f64>() / k;
        }
    }
    let b = records.len() as f64;
    Ok(acc
        .iter()
        .enumerate()
        .map(|(j, s)| BinSummary {
            bin: j,
            y_lo: s[0] / b,
            y_hi: s[1] / b,
            coverage: s[2] / b,
            mean_width: s[3] / b,
        })
        .collect())
}
