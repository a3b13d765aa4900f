//! Simulation scenarios with two informative covariates out of five, and a
//! replicate driver comparing the partitioning methods on them.
//!
//! Survival is exponential with mean `σ_hi` when `W1 > 50` or `W2 > 75` and
//! mean 0.5 otherwise; `σ_hi` is 5 (high signal) or 1 (low signal).
//! Censoring times are uniform on `[0, b)`. Bounds are solved from the
//! closed-form censoring probability of an exponential time against a
//! uniform censoring time, either per risk group (covariate-dependent) or
//! for the marginal mixture (covariate-independent).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::CartConfig;
use crate::data::{split_folds, Covariate, Subject, SurvivalDataset};
use crate::dsa::DsaConfig;
use crate::error::{Error, Result};
use crate::evaluation::{bands_from_values, concordance, pairwise_similarity, predicted_times, prediction_error, region_curves};
use crate::loss::{select_time_grid, GridStrategy, LossSpec};
use crate::partition::{fill_mean_survival, Clause, Constraint, PartitionModel, Region};
use crate::selection::{select, CandidateFitter, CensoringPolicy};
use crate::survival::truncate;

pub const COVARIATES: usize = 5;
pub const SIGMA_BASE: f64 = 0.5;
/// P(W1 > 50 or W2 > 75).
pub const HIGH_GROUP_PROBABILITY: f64 = 1.0 - 0.5 * 0.75;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Signal {
    High,
    Low,
}

impl Signal {
    /// Mean survival of the long-survival group.
    pub fn sigma(self) -> f64 {
        match self {
            Signal::High => 5.0,
            Signal::Low => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringDesign {
    CovariateDependent,
    CovariateIndependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub signal: Signal,
    pub censoring: CensoringDesign,
    pub nominal_level: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub replicates: usize,
}

impl Scenario {
    pub fn new(signal: Signal, censoring: CensoringDesign, nominal_level: f64) -> Result<Self> {
        if ![0.0, 0.3, 0.5].contains(&nominal_level) {
            return Err(Error::invalid(format!(
                "nominal censoring level {nominal_level} must be one of 0, 0.3, 0.5"
            )));
        }
        Ok(Scenario {
            signal,
            censoring,
            nominal_level,
            n_train: 250,
            n_test: 5000,
            replicates: 1000,
        })
    }

    /// Names like `high-dep-30` or `low-indep-0`.
    pub fn name(&self) -> String {
        format!(
            "{}-{}-{}",
            match self.signal {
                Signal::High => "high",
                Signal::Low => "low",
            },
            match self.censoring {
                CensoringDesign::CovariateDependent => "dep",
                CensoringDesign::CovariateIndependent => "indep",
            },
            (self.nominal_level * 100.0).round() as u32
        )
    }

    pub fn in_long_group(w: &[f64]) -> bool {
        w[0] > 50.0 || w[1] > 75.0
    }

    pub fn sigma(&self, w: &[f64]) -> f64 {
        if Self::in_long_group(w) {
            self.signal.sigma()
        } else {
            SIGMA_BASE
        }
    }

    /// Uniform censoring upper bounds `(long group, base group)`; `None`
    /// without censoring.
    pub fn censoring_bounds(&self) -> Option<(f64, f64)> {
        if self.nominal_level == 0.0 {
            return None;
        }
        let p = self.nominal_level;
        let hi = self.signal.sigma();
        Some(match self.censoring {
            CensoringDesign::CovariateDependent => {
                let x = solve_decreasing(|x| censored_fraction(1.0, x) - p, 1e-9, 1e6);
                (x * hi, x * SIGMA_BASE)
            }
            CensoringDesign::CovariateIndependent => {
                let b = solve_decreasing(
                    |b| {
                        HIGH_GROUP_PROBABILITY * censored_fraction(hi, b)
                            + (1.0 - HIGH_GROUP_PROBABILITY) * censored_fraction(SIGMA_BASE, b)
                            - p
                    },
                    1e-9,
                    1e6,
                );
                (b, b)
            }
        })
    }

    /// Median of the marginal survival function of the generating mixture.
    pub fn marginal_median(&self) -> f64 {
        let hi = self.signal.sigma();
        let surv = |t: f64| {
            HIGH_GROUP_PROBABILITY * (-t / hi).exp() + (1.0 - HIGH_GROUP_PROBABILITY) * (-t / SIGMA_BASE).exp()
        };
        solve_decreasing(|t| surv(t) - 0.5, 0.0, 100.0 * hi)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::invalid(format!(
                "unknown scenario `{s}`; expected {{high|low}}-{{dep|indep}}-{{0|30|50}}"
            ))
        };
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let signal = match parts[0] {
            "high" => Signal::High,
            "low" => Signal::Low,
            _ => return Err(bad()),
        };
        let censoring = match parts[1] {
            "dep" => CensoringDesign::CovariateDependent,
            "indep" => CensoringDesign::CovariateIndependent,
            _ => return Err(bad()),
        };
        let level = match parts[2] {
            "0" => 0.0,
            "30" => 0.3,
            "50" => 0.5,
            _ => return Err(bad()),
        };
        Scenario::new(signal, censoring, level)
    }
}

/// P(C < T) for `T ~ Exp(mean sigma)` and `C ~ U(0, b)`.
pub fn censored_fraction(sigma: f64, b: f64) -> f64 {
    let x = b / sigma;
    if x < 1e-8 {
        1.0 - x / 2.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Root of a decreasing function on `[lo, hi]` by bisection.
fn solve_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn schema() -> Vec<Covariate> {
    (1..=COVARIATES).map(|j| Covariate::numeric(format!("W{j}"))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrueForm {
    /// Three leaves: `W1 > 50`; `W1 <= 50, W2 > 75`; `W1 <= 50, W2 <= 75`.
    Tree,
    /// Two regions, the long-survival one an "or" of two clauses.
    Partition,
}

/// Generating structure as a partition model. Predictions are the expected
/// log survival time and mean survival is σ.
pub fn true_model(signal: Signal, form: TrueForm) -> PartitionModel {
    let iv = |lower: Option<f64>, upper: Option<f64>| Constraint::Interval { lower, upper };
    let clause = |c: Vec<(usize, Constraint)>| Clause::from_constraints(c).expect("valid clause");
    let region = |clauses: Vec<Clause>, sigma: f64| Region {
        clauses,
        prediction: vec![sigma.ln() - EULER_GAMMA],
        mean_survival: Some(sigma),
    };
    let hi = signal.sigma();
    let w1_high = clause(vec![(0, iv(Some(50.0), None))]);
    let w2_high = clause(vec![(0, iv(None, Some(50.0))), (1, iv(Some(75.0), None))]);
    let base = clause(vec![(0, iv(None, Some(50.0))), (1, iv(None, Some(75.0)))]);
    let regions = match form {
        TrueForm::Tree => vec![region(vec![w1_high], hi), region(vec![w2_high], hi), region(vec![base], SIGMA_BASE)],
        TrueForm::Partition => vec![region(vec![w1_high, w2_high], hi), region(vec![base], SIGMA_BASE)],
    };
    PartitionModel::new(schema(), regions).expect("valid model")
}

const STREAM_TRAIN_COVARIATES: u64 = 1;
const STREAM_TRAIN_SURVIVAL: u64 = 2;
const STREAM_TRAIN_CENSORING: u64 = 3;
const STREAM_TEST_COVARIATES: u64 = 4;
const STREAM_TEST_SURVIVAL: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_covariates(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..COVARIATES).map(|_| rng.random_range(1..=100u32) as f64).collect())
        .collect()
}

fn draw_survival(scenario: &Scenario, covariates: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    covariates
        .iter()
        .map(|w| {
            let exp = Exp::new(1.0 / scenario.sigma(w)).expect("positive rate");
            // Exp can return exactly 0 only with vanishing probability; keep
            // times strictly positive.
            exp.sample(rng).max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Training and (uncensored) test sets for one replicate seed. Covariates,
/// survival and censoring come from separate random streams.
pub fn generate(scenario: &Scenario, seed: u64) -> Result<(SurvivalDataset, SurvivalDataset)> {
    let w = draw_covariates(scenario.n_train, &mut stream(seed, STREAM_TRAIN_COVARIATES));
    let t = draw_survival(scenario, &w, &mut stream(seed, STREAM_TRAIN_SURVIVAL));
    let bounds = scenario.censoring_bounds();
    let mut crng = stream(seed, STREAM_TRAIN_CENSORING);
    let train = w
        .into_iter()
        .zip(t)
        .map(|(w, t)| match bounds {
            None => Subject {
                covariates: w,
                time: t,
                event: true,
            },
            Some((b_hi, b_lo)) => {
                let b = if Scenario::in_long_group(&w) { b_hi } else { b_lo };
                let c: f64 = crng.random_range(0.0..b);
                let c = c.max(f64::MIN_POSITIVE);
                Subject {
                    covariates: w,
                    time: t.min(c),
                    event: t <= c,
                }
            }
        })
        .collect();
    let wt = draw_covariates(scenario.n_test, &mut stream(seed, STREAM_TEST_COVARIATES));
    let tt = draw_survival(scenario, &wt, &mut stream(seed, STREAM_TEST_SURVIVAL));
    let test = wt
        .into_iter()
        .zip(tt)
        .map(|(w, t)| Subject {
            covariates: w,
            time: t,
            event: true,
        })
        .collect();
    Ok((SurvivalDataset::new(schema(), train)?, SurvivalDataset::new(schema(), test)?))
}

/// Seed of replicate `index` under a master seed (SplitMix64 step).
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    let mut z = master.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "partDSA_Brier_1fixed")]
    DsaBrierOneFixed,
    #[serde(rename = "partDSA_Brier_5even")]
    DsaBrierFiveEven,
    #[serde(rename = "partDSA_Brier_5km")]
    DsaBrierFiveKm,
    #[serde(rename = "partDSA_IPCW")]
    DsaIpcw,
    #[serde(rename = "CART_IPCW")]
    CartIpcw,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::DsaBrierOneFixed,
        Method::DsaBrierFiveEven,
        Method::DsaBrierFiveKm,
        Method::DsaIpcw,
        Method::CartIpcw,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::DsaBrierOneFixed => "partDSA_Brier_1fixed",
            Method::DsaBrierFiveEven => "partDSA_Brier_5even",
            Method::DsaBrierFiveKm => "partDSA_Brier_5km",
            Method::DsaIpcw => "partDSA_IPCW",
            Method::CartIpcw => "CART_IPCW",
        }
    }

    /// Size of the generating structure in this method's representation.
    pub fn true_size(self) -> usize {
        match self {
            Method::CartIpcw => 3,
            _ => 2,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.label()).collect();
                Error::invalid(format!("unknown method `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub dsa: DsaConfig,
    pub cart: CartConfig,
    pub folds: usize,
    pub truncation: f64,
    /// Survival-curve grid for stratification bands: `points` times evenly
    /// spaced on `[0, 3 σ_hi]`.
    pub band_points: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            dsa: DsaConfig::default(),
            cart: CartConfig::default(),
            folds: 5,
            truncation: 0.05,
            band_points: 61,
        }
    }
}

impl StudyConfig {
    pub fn band_grid(&self, scenario: &Scenario) -> Vec<f64> {
        let end = 3.0 * scenario.signal.sigma();
        let m = self.band_points.max(2);
        (0..m).map(|k| end * k as f64 / (m - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub size: usize,
    pub predictors: usize,
    pub informative: usize,
    pub noise: usize,
    pub c_p: f64,
    pub c_bar_p: f64,
    /// False when every test prediction tied and chance values were recorded.
    pub concordance_defined: bool,
    pub l_p: f64,
    pub d_p: f64,
    /// Region survival curves on the band grid, ordered by region rank.
    #[serde(skip)]
    pub curves: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateResult {
    pub index: usize,
    pub seed: u64,
    pub tau: f64,
    pub censoring_before: f64,
    pub censoring_after: f64,
    pub outcomes: Vec<(Method, std::result::Result<MethodResult, String>)>,
}

fn dsa_for(method: Method, config: &StudyConfig, scenario: &Scenario, train: &SurvivalDataset, tau: f64) -> Result<DsaConfig> {
    let loss = match method {
        Method::DsaIpcw => LossSpec::ipcw_l2(),
        Method::DsaBrierOneFixed => LossSpec::brier_single(scenario.marginal_median())?,
        Method::DsaBrierFiveEven => LossSpec::brier_composite(select_time_grid(train, &GridStrategy::FiveEven { tau })?)?,
        Method::DsaBrierFiveKm => LossSpec::brier_composite(select_time_grid(train, &GridStrategy::FiveKm)?)?,
        Method::CartIpcw => unreachable!("CART is not a partition search"),
    };
    Ok(DsaConfig {
        loss,
        ..config.dsa.clone()
    })
}

fn evaluate_method<F: CandidateFitter>(
    fitter: &F,
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    policy: &CensoringPolicy,
    folds: &crate::data::FoldAssignment,
    truth: &PartitionModel,
    grid: &[f64],
) -> Result<MethodResult> {
    let sel = select(train, fitter, policy, folds)?;
    let mut model = sel.model;
    fill_mean_survival(&mut model, train, &sel.censoring)?;
    let pred = predicted_times(&model, test)?;
    let (c_p, c_bar_p, concordance_defined) = match concordance(&test.times(), &pred) {
        Ok(c) => (c.c_p, c.c_bar_p, true),
        Err(Error::Concordance(_)) => (0.5, 0.5, false),
        Err(e) => return Err(e),
    };
    let used = model.variables_used();
    let informative = used.iter().filter(|&&j| j < 2).count();
    let curves = region_curves(&model, test)?
        .iter()
        .map(|c| grid.iter().map(|&t| c.at(t)).collect())
        .collect();
    Ok(MethodResult {
        size: model.size(),
        predictors: used.len(),
        informative,
        noise: used.len() - informative,
        c_p,
        c_bar_p,
        concordance_defined,
        l_p: prediction_error(truth, &model, test)?,
        d_p: pairwise_similarity(truth, &model, test)?,
        curves,
    })
}

/// One replicate: generate, truncate, fit the censoring model, then
/// cross-validate, refit and evaluate every method on shared folds.
pub fn run_replicate(scenario: &Scenario, methods: &[Method], config: &StudyConfig, index: usize, master_seed: u64) -> Result<ReplicateResult> {
    let seed = replicate_seed(master_seed, index);
    let (raw, test) = generate(scenario, seed)?;
    let truncated = truncate(&raw, config.truncation)?;
    let train = truncated.dataset;
    let policy = match scenario.censoring {
        CensoringDesign::CovariateDependent => CensoringPolicy::proportional_hazards(vec![0, 1]),
        CensoringDesign::CovariateIndependent => CensoringPolicy::product_limit(),
    };
    let folds = split_folds(&train, config.folds, seed ^ 0xF01D)?;
    let truth = true_model(scenario.signal, TrueForm::Partition);
    let grid = config.band_grid(scenario);
    let outcomes = methods
        .iter()
        .map(|&m| {
            let r = match m {
                Method::CartIpcw => evaluate_method(&config.cart, &train, &test, &policy, &folds, &truth, &grid),
                _ => dsa_for(m, config, scenario, &train, truncated.tau)
                    .and_then(|f| evaluate_method(&f, &train, &test, &policy, &folds, &truth, &grid)),
            };
            if let Err(e) = &r {
                log::warn!("replicate {index} method {}: {e}", m.label());
            }
            (m, r.map_err(|e| e.to_string()))
        })
        .collect();
    Ok(ReplicateResult {
        index,
        seed,
        tau: truncated.tau,
        censoring_before: raw.censored_fraction(),
        censoring_after: train.censored_fraction(),
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub failures: usize,
    pub fitted_size: f64,
    pub predictors: f64,
    pub informative: f64,
    pub noise: f64,
    pub c_p: f64,
    pub c_bar_p: f64,
    pub l_p: f64,
    pub d_p: f64,
    /// Proportions of sizes 1, 2, 3 and 4 or more.
    pub size_distribution: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub scenario: Scenario,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub replicates: Vec<ReplicateResult>,
    /// Replicates that failed before any method ran.
    pub failed_replicates: Vec<(usize, String)>,
    pub summaries: Vec<MethodSummary>,
    pub censoring_before: f64,
    pub censoring_after: f64,
    pub band_grid: Vec<f64>,
}

fn summarize(method: Method, replicates: &[ReplicateResult], failed: usize) -> MethodSummary {
    let ok: Vec<&MethodResult> = replicates
        .iter()
        .filter_map(|r| r.outcomes.iter().find(|(m, _)| *m == method))
        .filter_map(|(_, r)| r.as_ref().ok())
        .collect();
    let failures = failed
        + replicates
            .iter()
            .filter(|r| r.outcomes.iter().any(|(m, o)| *m == method && o.is_err()))
            .count();
    let n = ok.len() as f64;
    let mean = |f: &dyn Fn(&MethodResult) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(|r| f(r)).sum::<f64>() / n };
    let mut dist = [0.0; 4];
    for r in &ok {
        dist[r.size.clamp(1, 4) - 1] += 1.0;
    }
    if !ok.is_empty() {
        dist.iter_mut().for_each(|d| *d /= n);
    }
    MethodSummary {
        method,
        completed: ok.len(),
        failures,
        fitted_size: mean(&|r| r.size as f64),
        predictors: mean(&|r| r.predictors as f64),
        informative: mean(&|r| r.informative as f64),
        noise: mean(&|r| r.noise as f64),
        c_p: mean(&|r| r.c_p),
        c_bar_p: mean(&|r| r.c_bar_p),
        l_p: mean(&|r| r.l_p),
        d_p: mean(&|r| r.d_p),
        size_distribution: dist,
    }
}

/// Runs `replicates` (default: the scenario's count) in parallel on the
/// current rayon pool. Results are ordered by replicate index, so output
/// does not depend on the number of threads.
pub fn run_study(
    scenario: &Scenario,
    methods: &[Method],
    config: &StudyConfig,
    replicates: Option<usize>,
    master_seed: u64,
) -> Result<StudyReport> {
    let reps = replicates.unwrap_or(scenario.replicates);
    if reps == 0 {
        return Err(Error::invalid("replicate count must be positive"));
    }
    if methods.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let results: Vec<(usize, Result<ReplicateResult>)> = (0..reps)
        .into_par_iter()
        .map(|i| (i, run_replicate(scenario, &methods, config, i, master_seed)))
        .collect();
    let mut replicates = Vec::with_capacity(reps);
    let mut failed = Vec::new();
    for (i, r) in results {
        match r {
            Ok(r) => replicates.push(r),
            Err(e) => {
                log::warn!("replicate {i} failed: {e}");
                failed.push((i, e.to_string()));
            }
        }
    }
    let summaries = methods.iter().map(|&m| summarize(m, &replicates, failed.len())).collect();
    let k = replicates.len().max(1) as f64;
    Ok(StudyReport {
        scenario: scenario.clone(),
        master_seed,
        methods,
        censoring_before: replicates.iter().map(|r| r.censoring_before).sum::<f64>() / k,
        censoring_after: replicates.iter().map(|r| r.censoring_after).sum::<f64>() / k,
        replicates,
        failed_replicates: failed,
        summaries,
        band_grid: config.band_grid(scenario),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.3}")
    }
}

impl StudyReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Criteria by method, one row per criterion; the last column is the
    /// unimplemented L&C_NLL comparator.
    pub fn write_aggregate_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["criterion".to_string()];
        header.extend(self.summaries.iter().map(|s| s.method.label().to_string()));
        header.push("L&C_NLL".into());
        w.write_record(&header)?;
        let censoring = format!(
            "{:.0}%/{:.1}%",
            self.scenario.nominal_level * 100.0,
            self.censoring_after * 100.0
        );
        let rows: [(&str, &dyn Fn(&MethodSummary) -> String); 12] = [
            ("censoring", &|_| censoring.clone()),
            ("true_size", &|s| format!("{:.3}", s.method.true_size() as f64)),
            ("fitted_size", &|s| num(s.fitted_size)),
            ("predictors", &|s| num(s.predictors)),
            ("w1_w2", &|s| num(s.informative)),
            ("w3_w5", &|s| num(s.noise)),
            ("c_p", &|s| num(s.c_p)),
            ("c_bar_p", &|s| num(s.c_bar_p)),
            ("l_p", &|s| num(s.l_p)),
            ("d_p", &|s| num(s.d_p)),
            ("completed", &|s| s.completed.to_string()),
            ("failures", &|s| s.failures.to_string()),
        ];
        for (name, f) in rows {
            let mut rec = vec![name.to_string()];
            rec.extend(self.summaries.iter().map(f));
            rec.push(match name {
                "censoring" => censoring.clone(),
                "true_size" => "3.000".into(),
                _ => "NA".into(),
            });
            w.write_record(&rec)?;
        }
        w.flush().map_err(io_err(Path::new("<aggregate>")))?;
        Ok(())
    }

    pub fn write_size_distribution_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "root", "2", "3", "4+"])?;
        for s in &self.summaries {
            let mut rec = vec![s.method.label().to_string()];
            rec.extend(s.size_distribution.iter().map(|&p| num(p)));
            w.write_record(&rec)?;
        }
        w.write_record(["L&C_NLL", "NA", "NA", "NA", "NA"])?;
        w.flush().map_err(io_err(Path::new("<sizes>")))?;
        Ok(())
    }

    pub fn write_replicates_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "replicate", "seed", "method", "status", "tau", "censoring_before", "censoring_after", "size", "predictors",
            "w1_w2", "w3_w5", "c_p", "c_bar_p", "concordance_defined", "l_p", "d_p",
        ])?;
        for r in &self.replicates {
            for (m, o) in &r.outcomes {
                let mut rec = vec![
                    r.index.to_string(),
                    r.seed.to_string(),
                    m.label().to_string(),
                ];
                match o {
                    Ok(x) => {
                        rec.push("ok".into());
                        rec.extend([
                            r.tau.to_string(),
                            r.censoring_before.to_string(),
                            r.censoring_after.to_string(),
                            x.size.to_string(),
                            x.predictors.to_string(),
                            x.informative.to_string(),
                            x.noise.to_string(),
                            x.c_p.to_string(),
                            x.c_bar_p.to_string(),
                            x.concordance_defined.to_string(),
                            x.l_p.to_string(),
                            x.d_p.to_string(),
                        ]);
                    }
                    Err(e) => {
                        rec.push(format!("error: {e}"));
                        rec.extend([r.tau.to_string(), r.censoring_before.to_string(), r.censoring_after.to_string()]);
                        rec.extend(std::iter::repeat_n(String::new(), 9));
                    }
                }
                w.write_record(&rec)?;
            }
        }
        for (i, e) in &self.failed_replicates {
            let mut rec = vec![i.to_string(), replicate_seed(self.master_seed, *i).to_string(), String::new(), format!("error: {e}")];
            rec.extend(std::iter::repeat_n(String::new(), 12));
            w.write_record(&rec)?;
        }
        w.flush().map_err(io_err(Path::new("<replicates>")))?;
        Ok(())
    }

    /// Stratification bands for models of 2 and 3 regions, per method.
    pub fn write_bands_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "size", "replicates", "rank", "time", "lower", "mean", "upper"])?;
        for &m in &self.methods {
            let sets: Vec<Vec<Vec<f64>>> = self
                .replicates
                .iter()
                .filter_map(|r| r.outcomes.iter().find(|(x, _)| *x == m))
                .filter_map(|(_, o)| o.as_ref().ok().map(|x| x.curves.clone()))
                .collect();
            for size in [2, 3] {
                let Ok(b) = bands_from_values(&sets, size, &self.band_grid) else { continue };
                for p in &b.points {
                    w.write_record([
                        m.label().to_string(),
                        size.to_string(),
                        b.replicates.to_string(),
                        p.rank.to_string(),
                        p.time.to_string(),
                        p.lower.to_string(),
                        p.mean.to_string(),
                        p.upper.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(io_err(Path::new("<bands>")))?;
        Ok(())
    }

    /// Writes `aggregate.csv`, `size_distribution.csv`, `replicates.csv` and
    /// `bands.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let open = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map_err(|source| Error::Io { path: p, source })
        };
        self.write_aggregate_csv(open("aggregate.csv")?)?;
        self.write_size_distribution_csv(open("size_distribution.csv")?)?;
        self.write_replicates_csv(open("replicates.csv")?)?;
        self.write_bands_csv(open("bands.csv")?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_rule() {
        let s = Scenario::new(Signal::High, CensoringDesign::CovariateDependent, 0.0).unwrap();
        assert_eq!(s.sigma(&[60.0, 10.0, 1.0, 1.0, 1.0]), 5.0);
        assert_eq!(s.sigma(&[10.0, 80.0, 1.0, 1.0, 1.0]), 5.0);
        assert_eq!(s.sigma(&[50.0, 75.0, 1.0, 1.0, 1.0]), 0.5);
    }

    #[test]
    fn names_round_trip() {
        for name in ["high-dep-30", "low-indep-0", "high-indep-50"] {
            assert_eq!(name.parse::<Scenario>().unwrap().name(), name);
        }
        assert!("high-dep-20".parse::<Scenario>().is_err());
        assert!(Scenario::new(Signal::Low, CensoringDesign::CovariateDependent, 0.2).is_err());
    }

    #[test]
    fn no_censoring_all_events() {
        let mut s = Scenario::new(Signal::High, CensoringDesign::CovariateDependent, 0.0).unwrap();
        s.n_test = 10;
        let (train, test) = generate(&s, 3).unwrap();
        assert_eq!(train.len(), 250);
        assert!(train.subjects().iter().all(|x| x.event));
        assert!(test.subjects().iter().all(|x| x.event));
    }

    #[test]
    fn bounds_hit_level() {
        for level in [0.3, 0.5] {
            let s = Scenario::new(Signal::High, CensoringDesign::CovariateDependent, level).unwrap();
            let (hi, lo) = s.censoring_bounds().unwrap();
            assert!((censored_fraction(5.0, hi) - level).abs() < 1e-12);
            assert!((censored_fraction(0.5, lo) - level).abs() < 1e-12);
        }
    }

    #[test]
    fn median_solves_mixture() {
        let s = Scenario::new(Signal::High, CensoringDesign::CovariateDependent, 0.0).unwrap();
        let m = s.marginal_median();
        let surv = 0.625 * (-m / 5.0).exp() + 0.375 * (-m / 0.5).exp();
        assert!((surv - 0.5).abs() < 1e-12);
    }

    #[test]
    fn true_forms_agree() {
        for signal in [Signal::High, Signal::Low] {
            let tree = true_model(signal, TrueForm::Tree);
            let part = true_model(signal, TrueForm::Partition);
            assert_eq!((tree.size(), part.size()), (3, 2));
            for w1 in (1..=100).step_by(7) {
                for w2 in (1..=100).step_by(3) {
                    let w = [w1 as f64, w2 as f64, 1.0, 1.0, 1.0];
                    let s = Scenario::new(signal, CensoringDesign::CovariateDependent, 0.0).unwrap();
                    assert_eq!(tree.predict(&w).unwrap(), part.predict(&w).unwrap());
                    assert_eq!(part.regions()[part.assign(&w).unwrap()].mean_survival, Some(s.sigma(&w)));
                }
            }
        }
    }

    #[test]
    fn replicate_seeds_differ() {
        assert_ne!(replicate_seed(1, 0), replicate_seed(1, 1));
        assert_ne!(replicate_seed(1, 0), replicate_seed(2, 0));
    }
}
