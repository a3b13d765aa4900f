//! Product-limit and proportional-hazards survival estimators, follow-up
//! truncation and inverse-probability-of-censoring weights.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Subject, SurvivalDataset};
use crate::error::{Error, Result};

/// Censoring survival estimates at or below this value are treated as a
/// positivity failure instead of producing unbounded weights.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Right-continuous step function starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvivalCurve {
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvivalCurve {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::invalid("jump times and values differ in length"));
        }
        if jump_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("jump times must be strictly increasing"));
        }
        let mut prev = 1.0;
        for &v in &values {
            if !(0.0..=prev).contains(&v) {
                return Err(Error::invalid("survival values must be non-increasing in [0, 1]"));
            }
            prev = v;
        }
        Ok(StepSurvivalCurve { jump_times, values })
    }

    /// The constant curve S(t) = 1.
    pub fn flat() -> Self {
        StepSurvivalCurve {
            jump_times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// S(t), including a jump at exactly `t`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit S(t-), excluding a jump at exactly `t`.
    pub fn before(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&x| x < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Earliest jump time at which the curve is at or below `p` (up to
    /// rounding in the product-limit recursion).
    pub fn first_time_at_or_below(&self, p: f64) -> Option<f64> {
        self.values
            .iter()
            .position(|&v| v <= p + 1e-12)
            .map(|k| self.jump_times[k])
    }

    /// Two-column CSV (`time,survival`) starting from the point (0, 1).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "survival"])?;
        w.write_record(["0", "1"])?;
        for (t, s) in self.jump_times.iter().zip(&self.values) {
            w.write_record([t.to_string(), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Kaplan–Meier estimate with jumps at event times only.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepSurvivalCurve> {
    if times.is_empty() {
        return Err(Error::invalid("Kaplan-Meier needs at least one observation"));
    }
    if times.len() != events.len() {
        return Err(Error::invalid("times and events differ in length"));
    }
    if times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("Kaplan-Meier times must be positive"));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let n = times.len();
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let at_risk = (n - i) as f64;
        let mut deaths = 0usize;
        let mut j = i;
        while j < n && times[order[j]] == t {
            if events[order[j]] {
                deaths += 1;
            }
            j += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk;
            jump_times.push(t);
            values.push(surv);
        }
        i = j;
    }
    Ok(StepSurvivalCurve { jump_times, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringKind {
    ProductLimit,
    ProportionalHazards,
}

/// Estimate of the censoring survival function P(C >= t | W = w).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringModel {
    kind: CensoringKind,
    /// Product-limit: the censoring survival curve. Proportional hazards: the
    /// Breslow baseline survival at the centred covariate means.
    baseline: StepSurvivalCurve,
    coefficients: Vec<f64>,
    covariates: Vec<usize>,
    centers: Vec<f64>,
}

impl CensoringModel {
    /// Model with no censoring at all (G = 1 everywhere).
    pub fn uncensored() -> Self {
        CensoringModel {
            kind: CensoringKind::ProductLimit,
            baseline: StepSurvivalCurve::flat(),
            coefficients: Vec::new(),
            covariates: Vec::new(),
            centers: Vec::new(),
        }
    }

    pub fn kind(&self) -> CensoringKind {
        self.kind
    }

    pub fn baseline(&self) -> &StepSurvivalCurve {
        &self.baseline
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn covariates(&self) -> &[usize] {
        &self.covariates
    }

    fn risk_multiplier(&self, w: &[f64]) -> f64 {
        let lp: f64 = self
            .covariates
            .iter()
            .zip(&self.coefficients)
            .zip(&self.centers)
            .map(|((&j, &b), &c)| b * (w[j] - c))
            .sum();
        lp.exp()
    }

    fn transform(&self, base: f64, w: &[f64]) -> f64 {
        match self.kind {
            CensoringKind::ProductLimit => base,
            CensoringKind::ProportionalHazards => {
                if base >= 1.0 {
                    1.0
                } else {
                    base.powf(self.risk_multiplier(w))
                }
            }
        }
    }

    /// G(t | w).
    pub fn evaluate(&self, t: f64, w: &[f64]) -> f64 {
        self.transform(self.baseline.at(t), w)
    }

    /// G(t- | w), the value used for weights.
    pub fn evaluate_before(&self, t: f64, w: &[f64]) -> f64 {
        self.transform(self.baseline.before(t), w)
    }

    /// G(t- | w) checked against [`WEIGHT_FLOOR`].
    pub(crate) fn checked_before(&self, t: f64, w: &[f64]) -> Result<f64> {
        let g = self.evaluate_before(t, w);
        if g <= WEIGHT_FLOOR {
            Err(Error::WeightFloor {
                time: t,
                value: g,
                floor: WEIGHT_FLOOR,
            })
        } else {
            Ok(g)
        }
    }
}

/// Fits a censoring model using `1 - event` as the event indicator.
///
/// `covariates` is ignored for the product-limit kind.
pub fn fit_censoring_model(
    data: &SurvivalDataset,
    kind: CensoringKind,
    covariates: &[usize],
) -> Result<CensoringModel> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit a censoring model to an empty dataset"));
    }
    let times = data.times();
    let censored: Vec<bool> = data.subjects().iter().map(|s| !s.event).collect();
    match kind {
        CensoringKind::ProductLimit => Ok(CensoringModel {
            kind,
            baseline: kaplan_meier(&times, &censored)?,
            coefficients: Vec::new(),
            covariates: Vec::new(),
            centers: Vec::new(),
        }),
        CensoringKind::ProportionalHazards => {
            if !censored.iter().any(|&c| c) {
                return Err(Error::NoCensoring);
            }
            if covariates.is_empty() {
                return Err(Error::invalid(
                    "proportional-hazards censoring model needs at least one covariate",
                ));
            }
            for &j in covariates {
                if j >= data.schema().len() {
                    return Err(Error::invalid(format!("covariate index {j} out of range")));
                }
            }
            let n = data.len() as f64;
            let centers: Vec<f64> = covariates
                .iter()
                .map(|&j| data.subjects().iter().map(|s| s.covariates[j]).sum::<f64>() / n)
                .collect();
            let x: Vec<Vec<f64>> = data
                .subjects()
                .iter()
                .map(|s| {
                    covariates
                        .iter()
                        .zip(&centers)
                        .map(|(&j, &c)| s.covariates[j] - c)
                        .collect()
                })
                .collect();
            let fit = cox::fit(&x, &times, &censored)?;
            Ok(CensoringModel {
                kind,
                baseline: fit.baseline,
                coefficients: fit.beta,
                covariates: covariates.to_vec(),
                centers,
            })
        }
    }
}

/// Breslow partial-likelihood fitting by damped Newton iteration.
pub(crate) mod cox {
    use super::StepSurvivalCurve;
    use crate::error::{Error, Result};

    pub const MAX_ITER: usize = 50;
    pub const GRAD_TOL: f64 = 1e-8;

    pub struct CoxFit {
        pub beta: Vec<f64>,
        pub baseline: StepSurvivalCurve,
    }

    struct Eval {
        loglik: f64,
        grad: Vec<f64>,
        info: Vec<Vec<f64>>,
    }

    /// Subject indices sorted by time descending, grouped by tied times.
    fn groups_desc(times: &[f64]) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for i in order {
            match groups.last_mut() {
                Some(g) if times[g[0]] == times[i] => g.push(i),
                _ => groups.push(vec![i]),
            }
        }
        groups
    }

    fn evaluate(x: &[Vec<f64>], groups: &[Vec<usize>], status: &[bool], beta: &[f64], active: &[usize]) -> Eval {
        let p = active.len();
        let mut s0 = 0.0;
        let mut s1 = vec![0.0; p];
        let mut s2 = vec![vec![0.0; p]; p];
        let mut loglik = 0.0;
        let mut grad = vec![0.0; p];
        let mut info = vec![vec![0.0; p]; p];
        for g in groups {
            for &i in g {
                let lp: f64 = active.iter().map(|&a| beta[a] * x[i][a]).sum();
                let r = lp.exp();
                s0 += r;
                for (u, &a) in active.iter().enumerate() {
                    s1[u] += r * x[i][a];
                    for (v, &b) in active.iter().enumerate() {
                        s2[u][v] += r * x[i][a] * x[i][b];
                    }
                }
            }
            let d = g.iter().filter(|&&i| status[i]).count();
            if d == 0 {
                continue;
            }
            let d = d as f64;
            for &i in g.iter().filter(|&&i| status[i]) {
                for (u, &a) in active.iter().enumerate() {
                    loglik += beta[a] * x[i][a];
                    grad[u] += x[i][a];
                }
            }
            loglik -= d * s0.ln();
            for u in 0..p {
                let mu = s1[u] / s0;
                grad[u] -= d * mu;
                for v in 0..p {
                    info[u][v] += d * (s2[u][v] / s0 - mu * s1[v] / s0);
                }
            }
        }
        Eval { loglik, grad, info }
    }

    /// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
    fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
        let p = b.len();
        let mut l = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    l[i][i] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        let mut y = vec![0.0; p];
        for i in 0..p {
            let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
            y[i] = (b[i] - s) / l[i][i];
        }
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|k| l[k][i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i][i];
        }
        Some(x)
    }

    /// `x` holds centred covariate rows; `status` marks the events whose
    /// hazard is modelled.
    pub fn fit(x: &[Vec<f64>], times: &[f64], status: &[bool]) -> Result<CoxFit> {
        let p = x.first().map_or(0, Vec::len);
        // Constant columns carry no information; their coefficient stays 0.
        let active: Vec<usize> = (0..p)
            .filter(|&a| x.iter().any(|row| row[a].abs() > 1e-12 * (1.0 + row[a].abs())))
            .collect();
        let groups = groups_desc(times);
        let mut beta = vec![0.0; p];
        let mut cur = evaluate(x, &groups, status, &beta, &active);
        let mut converged = active.is_empty();
        for _ in 0..MAX_ITER {
            if converged {
                break;
            }
            let gnorm = cur.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm < GRAD_TOL {
                converged = true;
                break;
            }
            let step = cholesky_solve(&cur.info, &cur.grad)
                .ok_or_else(|| Error::NonConvergence("Cox fit (singular information matrix)".into()))?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let mut trial = beta.clone();
                for (u, &a) in active.iter().enumerate() {
                    trial[a] += scale * step[u];
                }
                let next = evaluate(x, &groups, status, &trial, &active);
                if next.loglik.is_finite() && next.loglik >= cur.loglik - 1e-12 * cur.loglik.abs() {
                    let max_step = step.iter().map(|s| (scale * s).abs()).fold(0.0, f64::max);
                    beta = trial;
                    cur = next;
                    accepted = true;
                    if max_step < 1e-12 {
                        converged = true;
                    }
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(Error::NonConvergence("Cox fit (step halving failed)".into()));
            }
        }
        if !converged {
            let gnorm = cur.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm >= GRAD_TOL {
                return Err(Error::NonConvergence(format!(
                    "Cox fit after {MAX_ITER} iterations (gradient norm {gnorm:e})"
                )));
            }
        }

        // Breslow cumulative baseline hazard at the centred means.
        let mut s0 = 0.0;
        let mut increments = Vec::new();
        for g in &groups {
            for &i in g {
                let lp: f64 = (0..p).map(|a| beta[a] * x[i][a]).sum();
                s0 += lp.exp();
            }
            let d = g.iter().filter(|&&i| status[i]).count();
            if d > 0 {
                increments.push((times[g[0]], d as f64 / s0));
            }
        }
        increments.reverse();
        let mut cum = 0.0;
        let mut jump_times = Vec::with_capacity(increments.len());
        let mut values = Vec::with_capacity(increments.len());
        for (t, dh) in increments {
            cum += dh;
            jump_times.push(t);
            values.push((-cum).exp());
        }
        Ok(CoxFit {
            beta,
            baseline: StepSurvivalCurve::new(jump_times, values)?,
        })
    }
}

/// Result of clamping follow-up times at a sample-dependent time.
#[derive(Debug, Clone)]
pub struct TruncationResult {
    pub tau: f64,
    pub dataset: SurvivalDataset,
    /// Number of subjects whose time was strictly above `tau`.
    pub clamped: usize,
}

/// Clamps follow-up times above tau to tau and marks those subjects as
/// events. Tau is the `ceil((1 - exceed_fraction) n)`-th order statistic.
pub fn truncate(data: &SurvivalDataset, exceed_fraction: f64) -> Result<TruncationResult> {
    let n = data.len();
    if !(exceed_fraction > 0.0 && exceed_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "truncation fraction {exceed_fraction} must lie in (0, 1)"
        )));
    }
    let target = exceed_fraction * n as f64;
    if target < 1.0 - 1e-9 {
        return Err(Error::invalid(format!(
            "truncation fraction {exceed_fraction} leaves no subject above tau for n = {n}"
        )));
    }
    let exceed = (target + 1e-9).floor() as usize;
    let mut sorted = data.times();
    sorted.sort_by(f64::total_cmp);
    let tau = sorted[n - exceed - 1];
    let mut clamped = 0;
    let subjects: Vec<Subject> = data
        .subjects()
        .iter()
        .map(|s| {
            if s.time > tau {
                clamped += 1;
                Subject {
                    covariates: s.covariates.clone(),
                    time: tau,
                    event: true,
                }
            } else {
                s.clone()
            }
        })
        .collect();
    Ok(TruncationResult {
        tau,
        dataset: SurvivalDataset::new(data.schema().to_vec(), subjects)?,
        clamped,
    })
}

/// `event_i / G(T_i- | w_i)`; censored subjects get weight 0.
pub fn ipcw_weights(data: &SurvivalDataset, g: &CensoringModel) -> Result<Vec<f64>> {
    data.subjects()
        .iter()
        .map(|s| {
            if s.event {
                Ok(1.0 / g.checked_before(s.time, &s.covariates)?)
            } else {
                Ok(0.0)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariate;
    use approx::assert_relative_eq;

    fn dataset(times: &[f64], events: &[bool]) -> SurvivalDataset {
        let subjects = times
            .iter()
            .zip(events)
            .map(|(&time, &event)| Subject {
                covariates: vec![0.0],
                time,
                event,
            })
            .collect();
        SurvivalDataset::new(vec![Covariate::numeric("w")], subjects).unwrap()
    }

    #[test]
    fn km_uncensored() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[true; 3]).unwrap();
        assert_relative_eq!(km.at(1.0), 2.0 / 3.0);
        assert_relative_eq!(km.at(2.0), 1.0 / 3.0);
        assert_eq!(km.at(3.0), 0.0);
        assert_eq!(km.at(0.5), 1.0);
        assert_relative_eq!(km.before(2.0), 2.0 / 3.0);
    }

    #[test]
    fn km_all_censored() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[false; 3]).unwrap();
        assert!(km.jump_times().is_empty());
        assert_eq!(km.at(10.0), 1.0);
    }

    #[test]
    fn km_hand_product_limit() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, true]).unwrap();
        assert_relative_eq!(km.at(1.0), 0.75);
        assert_relative_eq!(km.at(2.5), 0.75);
        assert_relative_eq!(km.at(3.0), 0.375);
        assert_eq!(km.at(4.0), 0.0);
    }

    #[test]
    fn km_rejects_empty() {
        assert!(kaplan_meier(&[], &[]).is_err());
    }

    #[test]
    fn product_limit_without_censoring_is_one() {
        let d = dataset(&[1.0, 2.0, 3.0], &[true; 3]);
        let g = fit_censoring_model(&d, CensoringKind::ProductLimit, &[]).unwrap();
        for t in [0.5, 1.0, 2.0, 3.0] {
            assert_eq!(g.evaluate(t, &[0.0]), 1.0);
        }
    }

    #[test]
    fn cox_constant_covariate_gives_zero() {
        let d = dataset(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true, false, true, false, false]);
        let g = fit_censoring_model(&d, CensoringKind::ProportionalHazards, &[0]).unwrap();
        assert!(g.coefficients()[0].abs() < 1e-6);
    }

    #[test]
    fn cox_needs_censoring() {
        let d = dataset(&[1.0, 2.0], &[true, true]);
        assert!(matches!(
            fit_censoring_model(&d, CensoringKind::ProportionalHazards, &[0]),
            Err(Error::NoCensoring)
        ));
    }

    #[test]
    fn truncation_order_statistic() {
        let times: Vec<f64> = (1..=20).map(f64::from).collect();
        let d = dataset(&times, &[false; 20]);
        let r = truncate(&d, 0.05).unwrap();
        assert_eq!(r.tau, 19.0);
        assert_eq!(r.clamped, 1);
        let last = &r.dataset.subjects()[19];
        assert_eq!((last.time, last.event), (19.0, true));
        assert!(!r.dataset.subjects()[18].event);
    }

    #[test]
    fn truncation_hundred_distinct() {
        let times: Vec<f64> = (1..=100).map(|i| i as f64 * 0.37).collect();
        let d = dataset(&times, &[true; 100]);
        let r = truncate(&d, 0.05).unwrap();
        assert_eq!(r.tau, times[94]);
        assert_eq!(r.clamped, 5);
    }

    #[test]
    fn truncation_all_tied() {
        let d = dataset(&[2.0; 10], &[false; 10]);
        let r = truncate(&d, 0.1).unwrap();
        assert_eq!(r.clamped, 0);
        assert_eq!(r.dataset, d);
    }

    #[test]
    fn truncation_precondition() {
        let d = dataset(&[1.0, 2.0, 3.0], &[true; 3]);
        assert!(truncate(&d, 0.05).is_err());
    }

    #[test]
    fn weights_hand_example() {
        // Censoring KM on (1,2,3,4) with censoring only at 2: G = 1 before 2,
        // 2/3 from 2 on.
        let d = dataset(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, true]);
        let g = fit_censoring_model(&d, CensoringKind::ProductLimit, &[]).unwrap();
        let w = ipcw_weights(&d, &g).unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[1], 0.0);
        assert_relative_eq!(w[2], 1.5);
        assert_relative_eq!(w[3], 1.5);
    }

    #[test]
    fn weights_without_censoring_are_one() {
        let d = dataset(&[1.0, 2.0, 3.0], &[true; 3]);
        let g = fit_censoring_model(&d, CensoringKind::ProductLimit, &[]).unwrap();
        assert_eq!(ipcw_weights(&d, &g).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn weight_floor_raises() {
        // Last subject censored before the final event drives G to zero.
        let d = dataset(&[1.0, 2.0, 2.5], &[true, false, true]);
        let curve = StepSurvivalCurve::new(vec![2.0], vec![0.0]).unwrap();
        let g = CensoringModel {
            kind: CensoringKind::ProductLimit,
            baseline: curve,
            coefficients: vec![],
            covariates: vec![],
            centers: vec![],
        };
        assert!(matches!(ipcw_weights(&d, &g), Err(Error::WeightFloor { .. })));
    }

    #[test]
    fn curve_csv_export() {
        let km = kaplan_meier(&[1.0, 2.0], &[true, true]).unwrap();
        let mut buf = Vec::new();
        km.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,survival\n0,1\n1,0.5\n2,0\n");
    }
}
