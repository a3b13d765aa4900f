//! Full-data and observed-data losses.
//!
//! Every loss handled here is a weighted squared error: IPCW-L2 weights
//! uncensored subjects by `1 / G(T-)`, and the censoring-adjusted Brier score
//! at time `t` is the same construction applied to the transformed pair
//! `(min(T, t), event or T >= t)` with outcome `I(T >= t)`. A composite Brier
//! loss is a weighted sum of such columns. [`LossDesign`] materializes the
//! per-column weights and outcomes so the partition search can work with
//! sufficient statistics.

use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::partition::PartitionModel;
use crate::survival::{kaplan_meier, CensoringModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScale {
    #[default]
    Log,
    Raw,
}

impl TimeScale {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            TimeScale::Log => t.ln(),
            TimeScale::Raw => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossKind {
    /// Squared error on the observed times, ignoring censoring.
    FullL2,
    IpcwL2,
    /// Weighted sum of censoring-adjusted Brier scores.
    Brier { times: Vec<f64>, weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default)]
    pub scale: TimeScale,
}

impl LossSpec {
    pub fn ipcw_l2() -> Self {
        LossSpec {
            kind: LossKind::IpcwL2,
            scale: TimeScale::Log,
        }
    }

    pub fn full_l2() -> Self {
        LossSpec {
            kind: LossKind::FullL2,
            scale: TimeScale::Log,
        }
    }

    pub fn with_scale(mut self, scale: TimeScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn brier(times: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != weights.len() {
            return Err(Error::invalid("Brier loss needs one weight per grid time"));
        }
        if times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::invalid("Brier grid times must be positive"));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("Brier grid times must be strictly increasing"));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("Brier weights must be nonnegative"));
        }
        Ok(LossSpec {
            kind: LossKind::Brier { times, weights },
            scale: TimeScale::Log,
        })
    }

    pub fn brier_single(t: f64) -> Result<Self> {
        LossSpec::brier(vec![t], vec![1.0])
    }

    /// Composite Brier loss with weights `|t_r / t_p|`. Duplicate grid times
    /// are collapsed first.
    pub fn brier_composite(mut times: Vec<f64>) -> Result<Self> {
        times.sort_by(f64::total_cmp);
        times.dedup();
        let weights = grid_weights(&times);
        LossSpec::brier(times, weights)
    }

    /// Number of prediction components a region carries under this loss.
    pub fn components(&self) -> usize {
        match &self.kind {
            LossKind::Brier { times, .. } => times.len(),
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LossKind::FullL2 => "full-l2",
            LossKind::IpcwL2 => "ipcw-l2",
            LossKind::Brier { .. } => "brier",
        }
    }
}

/// `|t_r / t_p|` for a grid `t_1 < ... < t_p`.
pub fn grid_weights(times: &[f64]) -> Vec<f64> {
    match times.last() {
        Some(&last) => times.iter().map(|t| (t / last).abs()).collect(),
        None => Vec::new(),
    }
}

/// Observation transformed for the Brier score at time `t`. Subjects still
/// at risk at `t` (including `time == t`) have status 1 and are uncensored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrierTransformed {
    pub time: f64,
    pub event: bool,
    pub status: f64,
}

pub fn brier_transform(time: f64, event: bool, t: f64) -> BrierTransformed {
    if time >= t {
        BrierTransformed {
            time: t,
            event: true,
            status: 1.0,
        }
    } else {
        BrierTransformed {
            time,
            event,
            status: 0.0,
        }
    }
}

/// `(1/n) Σ weight_i (outcome_i - prediction_i)^2`, with `n` counting
/// zero-weight entries.
pub fn empirical_risk_l2(predictions: &[f64], outcomes: &[f64], weights: &[f64]) -> Result<f64> {
    if predictions.len() != outcomes.len() || outcomes.len() != weights.len() {
        return Err(Error::invalid("predictions, outcomes and weights differ in length"));
    }
    if outcomes.is_empty() {
        return Err(Error::invalid("empirical risk of an empty sample"));
    }
    let total: f64 = predictions
        .iter()
        .zip(outcomes)
        .zip(weights)
        .map(|((p, y), w)| w * (y - p) * (y - p))
        .sum();
    Ok(total / outcomes.len() as f64)
}

fn model_predictions(model: &PartitionModel, data: &SurvivalDataset, component: usize) -> Result<Vec<f64>> {
    data.subjects()
        .iter()
        .map(|s| {
            let p = model.predict(&s.covariates)?;
            Ok(*p.get(component).or(p.first()).ok_or_else(|| Error::invalid("region has no prediction"))?)
        })
        .collect()
}

/// IPCW-weighted L2 risk of the model's first prediction component.
pub fn ipcw_l2_risk(model: &PartitionModel, data: &SurvivalDataset, g: &CensoringModel, scale: TimeScale) -> Result<f64> {
    let weights = crate::survival::ipcw_weights(data, g)?;
    let outcomes: Vec<f64> = data.subjects().iter().map(|s| scale.apply(s.time)).collect();
    let predictions = model_predictions(model, data, 0)?;
    empirical_risk_l2(&predictions, &outcomes, &weights)
}

/// Censoring-adjusted Brier score at `t` for per-subject predictions `psi`,
/// computed through the transformed-IPCW representation.
pub fn brier_score(psi: &[f64], data: &SurvivalDataset, g: &CensoringModel, t: f64) -> Result<f64> {
    if psi.len() != data.len() {
        return Err(Error::invalid("one prediction per subject required"));
    }
    let mut total = 0.0;
    for (s, &p) in data.subjects().iter().zip(psi) {
        let tr = brier_transform(s.time, s.event, t);
        if tr.event {
            let gv = g.checked_before(tr.time, &s.covariates)?;
            total += (tr.status - p) * (tr.status - p) / gv;
        }
    }
    let value = total / data.len() as f64;
    debug_assert!({
        let check = brier_score_three_group(psi, data, g, t)?;
        (check - value).abs() <= 1e-12 * value.abs().max(1.0)
    });
    Ok(value)
}

/// Censoring-adjusted Brier score at `t` computed group by group: subjects
/// censored before `t` contribute nothing, subjects with an event before `t`
/// contribute `psi^2 / G(T-)`, subjects at risk at `t` contribute
/// `(1 - psi)^2 / G(t-)`.
pub fn brier_score_three_group(psi: &[f64], data: &SurvivalDataset, g: &CensoringModel, t: f64) -> Result<f64> {
    if psi.len() != data.len() {
        return Err(Error::invalid("one prediction per subject required"));
    }
    let subjects = data.subjects();
    let event_before: Vec<usize> = (0..subjects.len())
        .filter(|&i| subjects[i].time < t && subjects[i].event)
        .collect();
    let at_risk: Vec<usize> = (0..subjects.len()).filter(|&i| subjects[i].time >= t).collect();
    let mut terms = vec![0.0; subjects.len()];
    for i in event_before {
        let gv = g.checked_before(subjects[i].time, &subjects[i].covariates)?;
        terms[i] = (0.0 - psi[i]).powi(2) / gv;
    }
    for i in at_risk {
        let gv = g.checked_before(t, &subjects[i].covariates)?;
        terms[i] = (1.0 - psi[i]).powi(2) / gv;
    }
    Ok(terms.iter().sum::<f64>() / subjects.len() as f64)
}

/// Brier score at `t` of the model's first prediction component.
pub fn brier_risk(model: &PartitionModel, data: &SurvivalDataset, g: &CensoringModel, t: f64) -> Result<f64> {
    brier_score(&model_predictions(model, data, 0)?, data, g, t)
}

/// `Σ_r weight_r BS(t_r)`. A model carrying one prediction per grid time uses
/// component `r` at `t_r`; a single-valued model uses its value everywhere.
pub fn composite_brier_risk(
    model: &PartitionModel,
    data: &SurvivalDataset,
    g: &CensoringModel,
    times: &[f64],
    weights: &[f64],
) -> Result<f64> {
    if times.len() != weights.len() {
        return Err(Error::invalid("one weight per grid time required"));
    }
    let mut total = 0.0;
    for (r, (&t, &w)) in times.iter().zip(weights).enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w * brier_score(&model_predictions(model, data, r)?, data, g, t)?;
    }
    Ok(total)
}

/// Training or held-out risk of a model under any supported loss.
pub fn observed_risk(model: &PartitionModel, data: &SurvivalDataset, loss: &LossSpec, g: &CensoringModel) -> Result<f64> {
    LossDesign::build(data, loss, g)?.model_risk(model, data)
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridStrategy {
    OneFixed(f64),
    /// `(j/6) tau` for `j = 1..5`.
    FiveEven { tau: f64 },
    /// Times where the marginal Kaplan–Meier curve first reaches
    /// 0.85, 0.70, 0.55, 0.40 and 0.25.
    FiveKm,
}

pub const KM_GRID_LEVELS: [f64; 5] = [0.85, 0.70, 0.55, 0.40, 0.25];

pub fn select_time_grid(data: &SurvivalDataset, strategy: &GridStrategy) -> Result<Vec<f64>> {
    match *strategy {
        GridStrategy::OneFixed(t) => {
            if !(t > 0.0) {
                return Err(Error::invalid("fixed Brier time must be positive"));
            }
            Ok(vec![t])
        }
        GridStrategy::FiveEven { tau } => {
            if !(tau > 0.0) {
                return Err(Error::invalid("tau must be positive"));
            }
            Ok((1..=5).map(|j| j as f64 * tau / 6.0).collect())
        }
        GridStrategy::FiveKm => {
            let km = kaplan_meier(&data.times(), &data.events())?;
            KM_GRID_LEVELS
                .iter()
                .map(|&p| {
                    km.first_time_at_or_below(p).ok_or_else(|| {
                        let deepest = km.values().last().copied().unwrap_or(1.0);
                        Error::invalid(format!(
                            "Kaplan-Meier curve never reaches {p}; deepest reachable level is {deepest}"
                        ))
                    })
                })
                .collect()
        }
    }
}

/// One weighted least-squares column of a loss.
#[derive(Debug, Clone)]
pub struct LossColumn {
    pub multiplier: f64,
    pub weights: Vec<f64>,
    pub outcomes: Vec<f64>,
}

/// Per-subject weights and outcomes realizing a loss on one dataset: the risk
/// of per-subject predictions `psi` is
/// `Σ_k multiplier_k (1/n) Σ_i w_ik (y_ik - psi_ik)^2`.
#[derive(Debug, Clone)]
pub struct LossDesign {
    n: usize,
    columns: Vec<LossColumn>,
}

impl LossDesign {
    pub fn build(data: &SurvivalDataset, loss: &LossSpec, g: &CensoringModel) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("loss of an empty dataset"));
        }
        let subjects = data.subjects();
        let columns = match &loss.kind {
            LossKind::FullL2 => vec![LossColumn {
                multiplier: 1.0,
                weights: vec![1.0; subjects.len()],
                outcomes: subjects.iter().map(|s| loss.scale.apply(s.time)).collect(),
            }],
            LossKind::IpcwL2 => vec![LossColumn {
                multiplier: 1.0,
                weights: crate::survival::ipcw_weights(data, g)?,
                outcomes: subjects.iter().map(|s| loss.scale.apply(s.time)).collect(),
            }],
            LossKind::Brier { times, weights } => times
                .iter()
                .zip(weights)
                .map(|(&t, &m)| {
                    let mut w = Vec::with_capacity(subjects.len());
                    let mut y = Vec::with_capacity(subjects.len());
                    for s in subjects {
                        let tr = brier_transform(s.time, s.event, t);
                        w.push(if tr.event {
                            1.0 / g.checked_before(tr.time, &s.covariates)?
                        } else {
                            0.0
                        });
                        y.push(tr.status);
                    }
                    Ok(LossColumn {
                        multiplier: m,
                        weights: w,
                        outcomes: y,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(LossDesign {
            n: subjects.len(),
            columns,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> &[LossColumn] {
        &self.columns
    }

    /// Weighted mean outcome per column over `members`; `None` when some
    /// column has zero total weight there.
    pub fn weighted_means(&self, members: &[usize]) -> Option<Vec<f64>> {
        self.columns
            .iter()
            .map(|c| {
                let w: f64 = members.iter().map(|&i| c.weights[i]).sum();
                if w > 0.0 {
                    Some(members.iter().map(|&i| c.weights[i] * c.outcomes[i]).sum::<f64>() / w)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Risk of the model's predictions on the subjects this design was built
    /// from.
    pub fn model_risk(&self, model: &PartitionModel, data: &SurvivalDataset) -> Result<f64> {
        if data.len() != self.n {
            return Err(Error::invalid("dataset does not match the loss design"));
        }
        let mut total = 0.0;
        for (i, s) in data.subjects().iter().enumerate() {
            let p = model.predict(&s.covariates)?;
            for (k, c) in self.columns.iter().enumerate() {
                if c.weights[i] == 0.0 || c.multiplier == 0.0 {
                    continue;
                }
                let psi = *p.get(k).or(p.first()).ok_or_else(|| Error::invalid("region has no prediction"))?;
                let e = c.outcomes[i] - psi;
                total += c.multiplier * c.weights[i] * e * e;
            }
        }
        Ok(total / self.n as f64)
    }
}
