//! Cross-validated risk curves and first-minimum size selection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::CartConfig;
use crate::data::{FoldAssignment, SurvivalDataset};
use crate::dsa::{CandidateList, DsaConfig};
use crate::error::{Error, Result};
use crate::loss::{LossDesign, LossSpec};
use crate::partition::{refit_predictions, PartitionModel};
use crate::survival::{fit_censoring_model, CensoringKind, CensoringModel};

/// Anything that turns a training set into one candidate model per size.
pub trait CandidateFitter: Sync {
    fn loss(&self) -> LossSpec;
    fn fit_candidates(&self, data: &SurvivalDataset, g: &CensoringModel) -> Result<CandidateList>;
}

impl CandidateFitter for DsaConfig {
    fn loss(&self) -> LossSpec {
        self.loss.clone()
    }

    fn fit_candidates(&self, data: &SurvivalDataset, g: &CensoringModel) -> Result<CandidateList> {
        crate::dsa::fit(data, g, self)
    }
}

impl CandidateFitter for CartConfig {
    fn loss(&self) -> LossSpec {
        CartConfig::loss(self)
    }

    fn fit_candidates(&self, data: &SurvivalDataset, g: &CensoringModel) -> Result<CandidateList> {
        crate::cart::fit(data, g, self)
    }
}

/// How the censoring model is (re)fitted on a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringPolicy {
    pub kind: CensoringKind,
    #[serde(default)]
    pub covariates: Vec<usize>,
}

impl CensoringPolicy {
    pub fn product_limit() -> Self {
        CensoringPolicy {
            kind: CensoringKind::ProductLimit,
            covariates: Vec::new(),
        }
    }

    pub fn proportional_hazards(covariates: Vec<usize>) -> Self {
        CensoringPolicy {
            kind: CensoringKind::ProportionalHazards,
            covariates,
        }
    }

    /// Fits the censoring model. A proportional-hazards fit that has no
    /// censored subjects or does not converge falls back to product-limit.
    pub fn fit(&self, data: &SurvivalDataset) -> Result<CensoringModel> {
        match fit_censoring_model(data, self.kind, &self.covariates) {
            Err(Error::NoCensoring) => fit_censoring_model(data, CensoringKind::ProductLimit, &[]),
            Err(Error::NonConvergence(msg)) => {
                log::warn!("censoring model did not converge ({msg}); using product-limit");
                fit_censoring_model(data, CensoringKind::ProductLimit, &[])
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvCurve {
    pub sizes: Vec<usize>,
    pub cv_risk: Vec<f64>,
    pub chosen_size: usize,
}

impl CvCurve {
    /// Curve over sizes `1..=cv_risk.len()`.
    pub fn from_risks(cv_risk: Vec<f64>) -> Result<Self> {
        Self::new((1..=cv_risk.len()).collect(), cv_risk)
    }

    pub fn new(sizes: Vec<usize>, cv_risk: Vec<f64>) -> Result<Self> {
        if cv_risk.is_empty() || sizes.len() != cv_risk.len() {
            return Err(Error::invalid("risk curve needs one risk per size"));
        }
        if sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("risk curve sizes must increase"));
        }
        let chosen_size = sizes[first_minimum(&cv_risk)];
        Ok(CvCurve {
            sizes,
            cv_risk,
            chosen_size,
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["size", "cv_risk"])?;
        for (s, r) in self.sizes.iter().zip(&self.cv_risk) {
            w.write_record([s.to_string(), r.to_string()])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<cv curve>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Index of the first `k` with `risk[k] <= risk[k + 1]`, or the last index.
pub fn first_minimum(risk: &[f64]) -> usize {
    risk.windows(2)
        .position(|w| w[0] <= w[1])
        .unwrap_or(risk.len().saturating_sub(1))
}

/// Held-out risk per size for one fold.
fn fold_risks(
    data: &SurvivalDataset,
    fitter: &dyn CandidateFitter,
    policy: &CensoringPolicy,
    folds: &FoldAssignment,
    fold: usize,
) -> Result<(CandidateList, SurvivalDataset, LossDesign)> {
    let (train_idx, test_idx) = folds.split(fold);
    let train = data.subset(&train_idx);
    if train.event_count() == 0 {
        return Err(Error::invalid(format!("training fold {} has no events", fold + 1)));
    }
    if test_idx.is_empty() {
        return Err(Error::invalid(format!("fold {} is empty", fold + 1)));
    }
    let g = policy.fit(&train)?;
    let list = fitter.fit_candidates(&train, &g)?;
    let test = data.subset(&test_idx);
    let design = LossDesign::build(&test, &fitter.loss(), &g)?;
    Ok((list, test, design))
}

/// v-fold cross-validated risk for every size produced by at least one
/// training fold. Sizes a fold did not produce use that fold's nearest
/// smaller candidate. Sizes no fold produced are left out: their risk would
/// repeat the next smaller size exactly and stall the first-minimum rule.
/// Folds run in parallel.
pub fn cross_validate<F: CandidateFitter>(
    data: &SurvivalDataset,
    fitter: &F,
    policy: &CensoringPolicy,
    folds: &FoldAssignment,
) -> Result<CvCurve> {
    if folds.len() != data.len() {
        return Err(Error::invalid("fold assignment does not match the dataset"));
    }
    let per_fold: Vec<(CandidateList, SurvivalDataset, LossDesign)> = (0..folds.folds())
        .into_par_iter()
        .map(|f| fold_risks(data, fitter, policy, folds, f))
        .collect::<Result<Vec<_>>>()?;
    let mut sizes: Vec<usize> = per_fold.iter().flat_map(|(l, _, _)| l.sizes()).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut cv = vec![0.0; sizes.len()];
    for (list, test, design) in &per_fold {
        for (slot, &k) in cv.iter_mut().zip(&sizes) {
            let cand = list
                .at_or_below(k)
                .ok_or_else(|| Error::invalid("candidate list lacks the single-region model"))?;
            *slot += design.model_risk(&cand.model, test)?;
        }
    }
    let v = per_fold.len() as f64;
    CvCurve::new(sizes, cv.into_iter().map(|r| r / v).collect())
}

/// Refits candidates on the full data and returns the model at
/// `chosen_size` (or the nearest smaller size, with a warning).
pub fn final_fit<F: CandidateFitter>(
    data: &SurvivalDataset,
    chosen_size: usize,
    fitter: &F,
    g: &CensoringModel,
) -> Result<(PartitionModel, CandidateList)> {
    let list = fitter.fit_candidates(data, g)?;
    let cand = match list.get(chosen_size) {
        Some(c) => c,
        None => {
            let c = list
                .at_or_below(chosen_size)
                .ok_or_else(|| Error::invalid("candidate list lacks the single-region model"))?;
            log::warn!(
                "size {chosen_size} not among full-data candidates; using size {}",
                c.size
            );
            c
        }
    };
    let model = refit_predictions(&cand.model, data, &fitter.loss(), g)?;
    Ok((model, list))
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub curve: CvCurve,
    pub model: PartitionModel,
    pub candidates: CandidateList,
    pub censoring: CensoringModel,
}

/// Cross-validates, then refits on the full data at the chosen size.
pub fn select<F: CandidateFitter>(
    data: &SurvivalDataset,
    fitter: &F,
    policy: &CensoringPolicy,
    folds: &FoldAssignment,
) -> Result<Selection> {
    data.require_events()?;
    let curve = cross_validate(data, fitter, policy, folds)?;
    let censoring = policy.fit(data)?;
    let (model, candidates) = final_fit(data, curve.chosen_size, fitter, &censoring)?;
    Ok(Selection {
        curve,
        model,
        candidates,
        censoring,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_local_minimum() {
        let c = CvCurve::from_risks(vec![5.0, 3.0, 4.0, 2.0]).unwrap();
        assert_eq!(c.chosen_size, 2);
    }

    #[test]
    fn strictly_decreasing_takes_max() {
        let c = CvCurve::from_risks(vec![5.0, 4.0, 3.0]).unwrap();
        assert_eq!(c.chosen_size, 3);
    }

    #[test]
    fn flat_prefers_smaller() {
        assert_eq!(first_minimum(&[2.0, 2.0, 1.0]), 0);
        assert_eq!(first_minimum(&[1.0]), 0);
    }

    #[test]
    fn csv_layout() {
        let c = CvCurve::from_risks(vec![1.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "size,cv_risk\n1,1.5\n2,1\n");
    }
}
