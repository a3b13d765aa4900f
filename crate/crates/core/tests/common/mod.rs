//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use survdsa::data::{Covariate, Subject, SurvivalDataset};
use survdsa::loss::{LossDesign, LossSpec};
use survdsa::partition::{Clause, Constraint, PartitionModel, Region};
use survdsa::selection::CensoringPolicy;
use survdsa::survival::CensoringModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn numeric_schema(p: usize) -> Vec<Covariate> {
    (0..p).map(|j| Covariate::numeric(format!("x{}", j + 1))).collect()
}

/// Continuous covariates on (0, 1), exponential event times with a rate
/// that depends on the first covariate, and independent exponential
/// censoring at roughly `censor_rate` relative hazard (0 disables it).
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, censor_rate: f64) -> SurvivalDataset {
    let subjects = (0..n)
        .map(|_| {
            let covariates: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let rate = if covariates[0] > 0.5 { 0.4 } else { 2.0 };
            let t = Exp::new(rate).unwrap().sample(rng) + 1e-6;
            let (time, event) = if censor_rate > 0.0 {
                let c = Exp::new(censor_rate * rate).unwrap().sample(rng) + 1e-6;
                if c < t {
                    (c, false)
                } else {
                    (t, true)
                }
            } else {
                (t, true)
            };
            Subject {
                covariates,
                time,
                event,
            }
        })
        .collect();
    SurvivalDataset::new(numeric_schema(p), subjects).unwrap()
}

/// Random dataset that has at least one event and, when asked for, at least
/// one censored subject.
pub fn mixed_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize) -> SurvivalDataset {
    loop {
        let d = random_dataset(rng, n, p, 0.7);
        let c = d.len() - d.event_count();
        if d.event_count() > 0 && c > 0 {
            return d;
        }
    }
}

pub fn product_limit(data: &SurvivalDataset) -> CensoringModel {
    CensoringPolicy::product_limit().fit(data).unwrap()
}

pub fn interval(lower: Option<f64>, upper: Option<f64>) -> Constraint {
    Constraint::Interval { lower, upper }
}

pub fn clause(constraints: Vec<(usize, Constraint)>) -> Clause {
    Clause::from_constraints(constraints).unwrap()
}

pub fn region(clauses: Vec<Clause>, prediction: f64) -> Region {
    Region {
        clauses,
        prediction: vec![prediction],
        mean_survival: None,
    }
}

/// `x_j <= s` versus `x_j > s`, with the given predictions.
pub fn stump(schema: Vec<Covariate>, j: usize, s: f64, left: f64, right: f64) -> PartitionModel {
    PartitionModel::new(
        schema,
        vec![
            region(vec![clause(vec![(j, interval(None, Some(s)))])], left),
            region(vec![clause(vec![(j, interval(Some(s), None))])], right),
        ],
    )
    .unwrap()
}

/// Σ_k multiplier_k Σ_i w_ik (y_ik − ȳ_k)² / n over `members`, computed in two
/// passes. `None` when some column has no weight.
pub fn region_risk(design: &LossDesign, members: &[usize]) -> Option<f64> {
    let mut total = 0.0;
    for c in design.columns() {
        let w: f64 = members.iter().map(|&i| c.weights[i]).sum();
        if !(w > 0.0) {
            return None;
        }
        let mean = members.iter().map(|&i| c.weights[i] * c.outcomes[i]).sum::<f64>() / w;
        let ss: f64 = members
            .iter()
            .map(|&i| c.weights[i] * (c.outcomes[i] - mean).powi(2))
            .sum();
        total += c.multiplier * ss;
    }
    Some(total / design.n() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSplit {
    pub covariate: usize,
    pub cut: f64,
    pub improvement: f64,
}

/// Exhaustive best split of the region `clauses` over every numeric
/// covariate and every midpoint between consecutive distinct member values.
/// Legality: each clause piece that the cut leaves geometrically nonempty
/// keeps at least `mb` members, and both sides carry weight in every column.
/// Improvements within 1e-12 of the parent risk are ties; ties keep the
/// earlier covariate and the smaller cut.
pub fn brute_force_split(
    data: &SurvivalDataset,
    clauses: &[Clause],
    loss: &LossSpec,
    g: &CensoringModel,
    mb: usize,
) -> Option<OracleSplit> {
    let design = LossDesign::build(data, loss, g).unwrap();
    let owner: Vec<Option<usize>> = data
        .subjects()
        .iter()
        .map(|s| clauses.iter().position(|c| c.contains(&s.covariates)))
        .collect();
    let members: Vec<usize> = (0..data.len()).filter(|&i| owner[i].is_some()).collect();
    if members.len() < 2 * mb {
        return None;
    }
    let parent = region_risk(&design, &members)?;
    if !(parent > 0.0) {
        return None;
    }
    let mut best: Option<OracleSplit> = None;
    for j in 0..data.schema().len() {
        let mut values: Vec<f64> = members.iter().map(|&i| data.value(i, j)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let cut = if mid < pair[1] && mid >= pair[0] { mid } else { pair[0] };
            let (left, right): (Vec<usize>, Vec<usize>) =
                members.iter().partition(|&&i| data.value(i, j) <= cut);
            let legal = clauses.iter().enumerate().all(|(c, cl)| {
                let (lo, hi) = match cl.constraint(j) {
                    Some(Constraint::Interval { lower, upper }) => (
                        lower.unwrap_or(f64::NEG_INFINITY),
                        upper.unwrap_or(f64::INFINITY),
                    ),
                    _ => (f64::NEG_INFINITY, f64::INFINITY),
                };
                let lc = left.iter().filter(|&&i| owner[i] == Some(c)).count();
                let rc = right.iter().filter(|&&i| owner[i] == Some(c)).count();
                (!(cut > lo) || lc >= mb) && (!(hi > cut) || rc >= mb)
            });
            if !legal {
                continue;
            }
            let (Some(l), Some(r)) = (region_risk(&design, &left), region_risk(&design, &right)) else {
                continue;
            };
            let improvement = parent - (l + r);
            if best.as_ref().is_none_or(|b| improvement > b.improvement + 1e-12 * parent) {
                best = Some(OracleSplit {
                    covariate: j,
                    cut,
                    improvement,
                });
            }
        }
    }
    best.filter(|b| b.improvement > 1e-10 * parent)
}

/// Region clauses for the split oracle: the whole space, a box, or an "or"
/// of two disjoint boxes.
pub fn random_region(rng: &mut ChaCha8Rng, p: usize) -> Vec<Clause> {
    match rng.random_range(0..3) {
        0 => vec![Clause::unconstrained()],
        1 => {
            let j = rng.random_range(0..p);
            let a: f64 = rng.random_range(0.2..0.8);
            if rng.random::<bool>() {
                vec![clause(vec![(j, interval(None, Some(a)))])]
            } else {
                vec![clause(vec![(j, interval(Some(a), None))])]
            }
        }
        _ => {
            let a: f64 = rng.random_range(0.3..0.7);
            let b: f64 = rng.random_range(0.3..0.7);
            vec![
                clause(vec![(0, interval(None, Some(a)))]),
                clause(vec![(0, interval(Some(a), None)), (1, interval(Some(b), None))]),
            ]
        }
    }
}

/// One of the supported losses, chosen at random, with Brier times inside
/// the observed range.
pub fn random_loss(rng: &mut ChaCha8Rng, data: &SurvivalDataset) -> LossSpec {
    let mut times = data.times();
    times.sort_by(f64::total_cmp);
    let q = |f: f64| times[((times.len() - 1) as f64 * f) as usize];
    match rng.random_range(0..4) {
        0 => LossSpec::full_l2(),
        1 => LossSpec::ipcw_l2(),
        2 => LossSpec::brier_single(q(0.5)).unwrap(),
        _ => LossSpec::brier_composite(vec![q(0.25), q(0.5), q(0.75)]).unwrap(),
    }
}
