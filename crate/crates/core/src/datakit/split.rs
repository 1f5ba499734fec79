use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Draw `n_total` rows uniformly without replacement, then cut them into
/// train / calibration / test parts of the given sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_total: usize,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
}

impl SplitPlan {
    /// 1000 rows split 562 / 188 / 250.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            seed,
            n_total: 1000,
            n_train: 562,
            n_cal: 188,
            n_test: 250,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train + self.n_cal + self.n_test != self.n_total {
            return Err(Error::Config(format!(
                "split sizes {}+{}+{} do not add up to {}",
                self.n_train, self.n_cal, self.n_test, self.n_total
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub cal: Dataset,
    pub test: Dataset,
    /// Row indices into the source dataset for each part.
    pub train_idx: Vec<usize>,
    pub cal_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

pub fn draw_and_split(ds: &Dataset, plan: &SplitPlan) -> Result<Splits> {
    plan.validate()?;
    if plan.n_total > ds.len() {
        return Err(Error::Data(format!(
            "split wants {} rows but the dataset has {}",
            plan.n_total,
            ds.len()
        )));
    }
    let mut rng = seed::rng(plan.seed, &[seed::TAG_SPLIT]);
    let drawn = rand::seq::index::sample(&mut rng, ds.len(), plan.n_total).into_vec();
    let (train_idx, rest) = drawn.split_at(plan.n_train);
    let (cal_idx, test_idx) = rest.split_at(plan.n_cal);
    Ok(Splits {
        train: ds.subset(train_idx),
        cal: ds.subset(cal_idx),
        test: ds.subset(test_idx),
        train_idx: train_idx.to_vec(),
        cal_idx: cal_idx.to_vec(),
        test_idx: test_idx.to_vec(),
    })
}
