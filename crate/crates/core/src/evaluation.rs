//! Test-set metrics: concordance, prediction error against a reference
//! partition, pairwise co-grouping agreement and risk-stratification curves.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::Serialize;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::partition::PartitionModel;
use crate::survival::{kaplan_meier, StepSurvivalCurve};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Concordance {
    /// Tied-prediction pairs excluded.
    pub c_p: f64,
    /// Tied-prediction pairs counted as concordant.
    pub c_tied: f64,
    /// Average of the two.
    pub c_bar_p: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub tied: u64,
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Number of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Concordance over pairs with distinct observed values. A pair is
/// concordant when the subject with the shorter observed time also has the
/// smaller prediction.
pub fn concordance(observed: &[f64], predicted: &[f64]) -> Result<Concordance> {
    let n = observed.len();
    if n != predicted.len() {
        return Err(Error::invalid("observed and predicted lengths differ"));
    }
    if n < 2 {
        return Err(Error::Concordance("fewer than two subjects".into()));
    }
    if observed.iter().chain(predicted).any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in concordance input"));
    }
    // Dense prediction ranks.
    let mut sorted_pred = predicted.to_vec();
    sorted_pred.sort_by(f64::total_cmp);
    sorted_pred.dedup();
    let rank = |p: f64| sorted_pred.partition_point(|&v| v < p);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| observed[a].total_cmp(&observed[b]));
    let mut tree = Fenwick(vec![0; sorted_pred.len() + 1]);
    let (mut conc, mut disc, mut tied) = (0u64, 0u64, 0u64);
    let mut inserted = 0u64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && observed[order[end]] == observed[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            let r = rank(predicted[i]);
            let less = tree.below(r);
            let upto = tree.below(r + 1);
            conc += less;
            tied += upto - less;
            disc += inserted - upto;
        }
        for &i in &order[start..end] {
            tree.add(rank(predicted[i]));
        }
        inserted += (end - start) as u64;
        start = end;
    }
    let total = conc + disc + tied;
    if total == 0 {
        return Err(Error::Concordance("all observed values are equal".into()));
    }
    if conc + disc == 0 {
        return Err(Error::Concordance(
            "every usable pair has tied predictions, so the tie-excluding index has no pairs".into(),
        ));
    }
    let c_p = conc as f64 / (conc + disc) as f64;
    let c_tied = (conc + tied) as f64 / total as f64;
    Ok(Concordance {
        c_p,
        c_tied,
        c_bar_p: 0.5 * (c_p + c_tied),
        concordant: conc,
        discordant: disc,
        tied,
    })
}

/// Mean event time of the test subjects sharing each group label.
fn group_means(groups: &[usize], times: &[f64], events: &[bool]) -> Result<HashMap<usize, f64>> {
    let mut acc: HashMap<usize, (f64, usize)> = HashMap::new();
    for ((&g, &t), &e) in groups.iter().zip(times).zip(events) {
        let a = acc.entry(g).or_insert((0.0, 0));
        if e {
            a.0 += t;
            a.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(g, (s, c))| {
            if c == 0 {
                Err(Error::EmptyRegion { region: g })
            } else {
                Ok((g, s / c as f64))
            }
        })
        .collect()
}

/// Mean squared difference between the group-mean predictions of two
/// groupings of the same subjects.
pub fn prediction_error_groups(a: &[usize], b: &[usize], times: &[f64], events: &[bool]) -> Result<f64> {
    let n = a.len();
    if n == 0 || b.len() != n || times.len() != n || events.len() != n {
        return Err(Error::invalid("groupings and outcomes must have equal nonzero length"));
    }
    let ma = group_means(a, times, events)?;
    let mb = group_means(b, times, events)?;
    Ok(a.iter()
        .zip(b)
        .map(|(ga, gb)| (ma[ga] - mb[gb]).powi(2))
        .sum::<f64>()
        / n as f64)
}

/// `L_p`: both models predict each test subject by the mean uncensored test
/// outcome of its region.
pub fn prediction_error(truth: &PartitionModel, estimate: &PartitionModel, test: &SurvivalDataset) -> Result<f64> {
    let a = truth.assign_all(test)?;
    let b = estimate.assign_all(test)?;
    prediction_error_groups(&a, &b, &test.times(), &test.events())
}

/// `1 - (pairs grouped together in exactly one grouping) / C(n, 2)`.
pub fn pairwise_similarity_groups(a: &[usize], b: &[usize]) -> Result<f64> {
    let n = a.len();
    if b.len() != n {
        return Err(Error::invalid("groupings differ in length"));
    }
    if n < 2 {
        return Err(Error::invalid("pairwise similarity needs at least two subjects"));
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let mut ca: HashMap<usize, u64> = HashMap::new();
    let mut cb: HashMap<usize, u64> = HashMap::new();
    let mut cab: HashMap<(usize, usize), u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *cab.entry((x, y)).or_default() += 1;
    }
    let same_a: u64 = ca.values().map(|&c| pairs(c)).sum();
    let same_b: u64 = cb.values().map(|&c| pairs(c)).sum();
    let both: u64 = cab.values().map(|&c| pairs(c)).sum();
    let disagree = same_a + same_b - 2 * both;
    Ok(1.0 - disagree as f64 / pairs(n as u64) as f64)
}

/// `D_p` between the test-set groupings of two models.
pub fn pairwise_similarity(truth: &PartitionModel, estimate: &PartitionModel, test: &SurvivalDataset) -> Result<f64> {
    pairwise_similarity_groups(&truth.assign_all(test)?, &estimate.assign_all(test)?)
}

/// Predicted survival time per subject: the region's stored mean survival,
/// else its first prediction.
pub fn predicted_times(model: &PartitionModel, data: &SurvivalDataset) -> Result<Vec<f64>> {
    let assignment = model.assign_all(data)?;
    Ok(assignment
        .iter()
        .map(|&r| {
            let region = &model.regions()[r];
            region
                .mean_survival
                .unwrap_or_else(|| region.prediction.first().copied().unwrap_or(0.0))
        })
        .collect())
}

/// Covariates the model splits on, each with count 1, keyed by name.
pub fn variables_used(model: &PartitionModel) -> BTreeMap<String, usize> {
    model
        .variables_used()
        .into_iter()
        .map(|j| (model.schema()[j].name.clone(), 1))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub size: usize,
    pub c_p: Option<f64>,
    pub c_bar_p: Option<f64>,
    pub l_p: Option<f64>,
    pub d_p: Option<f64>,
    pub variables_used: BTreeMap<String, usize>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
        let vars: Vec<&str> = self.variables_used.keys().map(String::as_str).collect();
        let rows = [
            ("size", self.size.to_string()),
            ("c_p", fmt(self.c_p)),
            ("c_bar_p", fmt(self.c_bar_p)),
            ("l_p", fmt(self.l_p)),
            ("d_p", fmt(self.d_p)),
            ("variables", if vars.is_empty() { "-".into() } else { vars.join(",") }),
        ];
        rows.iter().map(|(k, v)| format!("{k:<10} {v}\n")).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
        let vars: Vec<&str> = self.variables_used.keys().map(String::as_str).collect();
        w.write_record(["size", "c_p", "c_bar_p", "l_p", "d_p", "variables"])?;
        w.write_record([
            self.size.to_string(),
            fmt(self.c_p),
            fmt(self.c_bar_p),
            fmt(self.l_p),
            fmt(self.d_p),
            vars.join(";"),
        ])?;
        w.flush().map_err(|e| Error::Io {
            path: "<metrics>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Metrics for `estimate` on `test`. Concordance is computed from
/// [`predicted_times`]; `L_p` and `D_p` need a reference model.
pub fn evaluate(estimate: &PartitionModel, test: &SurvivalDataset, truth: Option<&PartitionModel>) -> Result<MetricReport> {
    let pred = predicted_times(estimate, test)?;
    let c = concordance(&test.times(), &pred)?;
    let (l_p, d_p) = match truth {
        Some(t) => (
            Some(prediction_error(t, estimate, test)?),
            Some(pairwise_similarity(t, estimate, test)?),
        ),
        None => (None, None),
    };
    Ok(MetricReport {
        size: estimate.size(),
        c_p: Some(c.c_p),
        c_bar_p: Some(c.c_bar_p),
        l_p,
        d_p,
        variables_used: variables_used(estimate),
    })
}

/// Kaplan–Meier curve of each region on `test`, ordered by ascending mean
/// observed time of the region.
pub fn region_curves(model: &PartitionModel, test: &SurvivalDataset) -> Result<Vec<StepSurvivalCurve>> {
    let assignment = model.assign_all(test)?;
    let k = model.size();
    let mut times = vec![Vec::new(); k];
    let mut events = vec![Vec::new(); k];
    for (s, &r) in test.subjects().iter().zip(&assignment) {
        times[r].push(s.time);
        events[r].push(s.event);
    }
    let mut ranked = Vec::with_capacity(k);
    for r in 0..k {
        if times[r].is_empty() {
            return Err(Error::EmptyRegion { region: r });
        }
        let mean = times[r].iter().sum::<f64>() / times[r].len() as f64;
        ranked.push((mean, r, kaplan_meier(&times[r], &events[r])?));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().map(|(_, _, c)| c).collect())
}

/// Inverse-ECDF percentile of a sorted sample.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let m = sorted.len();
    let k = ((q * m as f64).ceil() as usize).clamp(1, m);
    sorted[k - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandPoint {
    pub rank: usize,
    pub time: f64,
    pub lower: f64,
    pub mean: f64,
    pub upper: f64,
}

/// Pointwise 0.025/0.975 percentile bands and mean across replicate curve
/// sets of one model size, aligned by region rank.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratificationBands {
    pub size: usize,
    pub replicates: usize,
    pub points: Vec<BandPoint>,
}

impl StratificationBands {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["size", "rank", "time", "lower", "mean", "upper"])?;
        for p in &self.points {
            w.write_record([
                self.size.to_string(),
                p.rank.to_string(),
                p.time.to_string(),
                p.lower.to_string(),
                p.mean.to_string(),
                p.upper.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<bands>".into(),
            source: e,
        })?;
        Ok(())
    }
}

pub fn stratification_bands(replicates: &[Vec<StepSurvivalCurve>], size: usize, grid: &[f64]) -> Result<StratificationBands> {
    let values: Vec<Vec<Vec<f64>>> = replicates
        .iter()
        .map(|set| set.iter().map(|c| grid.iter().map(|&t| c.at(t)).collect()).collect())
        .collect();
    bands_from_values(&values, size, grid)
}

/// As [`stratification_bands`], for curves already evaluated on `grid`:
/// `replicates[r][rank][k]` is the survival of region `rank` at `grid[k]`.
pub fn bands_from_values(replicates: &[Vec<Vec<f64>>], size: usize, grid: &[f64]) -> Result<StratificationBands> {
    let sets: Vec<&Vec<Vec<f64>>> = replicates.iter().filter(|c| c.len() == size).collect();
    if sets.is_empty() {
        return Err(Error::invalid(format!("no replicates with {size} regions")));
    }
    if sets.iter().any(|s| s.iter().any(|c| c.len() != grid.len())) {
        return Err(Error::invalid("curve values do not match the grid"));
    }
    let mut points = Vec::with_capacity(size * grid.len());
    for rank in 0..size {
        for (k, &t) in grid.iter().enumerate() {
            let mut v: Vec<f64> = sets.iter().map(|c| c[rank][k]).collect();
            v.sort_by(f64::total_cmp);
            points.push(BandPoint {
                rank,
                time: t,
                lower: percentile(&v, 0.025),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                upper: percentile(&v, 0.975),
            });
        }
    }
    Ok(StratificationBands {
        size,
        replicates: sets.len(),
        points,
    })
}
