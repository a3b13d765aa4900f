//! Region algebra and piecewise-constant partition models.
//!
//! A [`Clause`] is an axis-aligned box (a conjunction of per-covariate
//! constraints). A [`Region`] is a union of pairwise-disjoint clauses, and a
//! [`PartitionModel`] is a list of regions that together cover the covariate
//! space exactly once. Numeric constraints are half-open intervals
//! `(lower, upper]`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Covariate, CovariateKind, SurvivalDataset};
use crate::error::{Error, Result};
use crate::loss::{LossDesign, LossSpec};
use crate::survival::CensoringModel;

#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `(lower, upper]`; `None` is unbounded on that side.
    Interval { lower: Option<f64>, upper: Option<f64> },
    /// Allowed level indices, sorted, nonempty and a proper subset.
    Levels(Vec<u32>),
}

impl Constraint {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            Constraint::Interval { lower, upper } => {
                lower.is_none_or(|l| v > l) && upper.is_none_or(|u| v <= u)
            }
            Constraint::Levels(levels) => levels.binary_search(&(v as u32)).is_ok(),
        }
    }
}

/// How a split divides a covariate: values `<= threshold` (or levels in the
/// set) go left, the rest go right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    Threshold(f64),
    Levels(Vec<u32>),
}

impl SplitRule {
    pub fn goes_left(&self, v: f64) -> bool {
        match self {
            SplitRule::Threshold(s) => v <= *s,
            SplitRule::Levels(set) => set.binary_search(&(v as u32)).is_ok(),
        }
    }
}

/// Conjunction of constraints, keyed by covariate index in ascending order.
/// Covariates without a constraint are unrestricted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Clause {
    constraints: Vec<(usize, Constraint)>,
}

impl Clause {
    pub fn unconstrained() -> Self {
        Clause::default()
    }

    pub fn from_constraints(mut constraints: Vec<(usize, Constraint)>) -> Result<Self> {
        constraints.sort_by_key(|(j, _)| *j);
        if constraints.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid("clause constrains the same covariate twice"));
        }
        for (_, c) in &constraints {
            match c {
                Constraint::Interval {
                    lower: Some(l),
                    upper: Some(u),
                } if !(l < u) => return Err(Error::invalid("empty interval in clause")),
                Constraint::Levels(levels) if levels.is_empty() => {
                    return Err(Error::invalid("empty level set in clause"))
                }
                _ => {}
            }
        }
        Ok(Clause { constraints })
    }

    pub fn constraints(&self) -> &[(usize, Constraint)] {
        &self.constraints
    }

    pub fn constraint(&self, covariate: usize) -> Option<&Constraint> {
        self.constraints
            .iter()
            .find(|(j, _)| *j == covariate)
            .map(|(_, c)| c)
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        self.constraints.iter().all(|(j, c)| c.contains(w[*j]))
    }

    fn with_constraint(&self, covariate: usize, constraint: Option<Constraint>) -> Clause {
        let mut constraints: Vec<(usize, Constraint)> = self
            .constraints
            .iter()
            .filter(|(j, _)| *j != covariate)
            .cloned()
            .collect();
        if let Some(c) = constraint {
            constraints.push((covariate, c));
            constraints.sort_by_key(|(j, _)| *j);
        }
        Clause { constraints }
    }

    /// Lower bound of the clause on a numeric covariate (`None` = unbounded).
    pub(crate) fn lower(&self, covariate: usize) -> Option<f64> {
        match self.constraint(covariate) {
            Some(Constraint::Interval { lower, .. }) => *lower,
            _ => None,
        }
    }

    pub(crate) fn upper(&self, covariate: usize) -> Option<f64> {
        match self.constraint(covariate) {
            Some(Constraint::Interval { upper, .. }) => *upper,
            _ => None,
        }
    }

    /// Allowed levels of a categorical covariate with `level_count` levels.
    pub(crate) fn levels(&self, covariate: usize, level_count: usize) -> Vec<u32> {
        match self.constraint(covariate) {
            Some(Constraint::Levels(l)) => l.clone(),
            _ => (0..level_count as u32).collect(),
        }
    }

    /// Geometric intersection with both sides of a split. A side is `None`
    /// when the clause does not reach it.
    pub fn split(&self, covariate: usize, rule: &SplitRule, schema: &[Covariate]) -> (Option<Clause>, Option<Clause>) {
        match rule {
            SplitRule::Threshold(s) => {
                let s = *s;
                let lower = self.lower(covariate);
                let upper = self.upper(covariate);
                let left_nonempty = lower.is_none_or(|l| s > l);
                let right_nonempty = upper.is_none_or(|u| u > s);
                let interval = |lower: Option<f64>, upper: Option<f64>| {
                    if lower.is_none() && upper.is_none() {
                        None
                    } else {
                        Some(Constraint::Interval { lower, upper })
                    }
                };
                let left = match (left_nonempty, right_nonempty) {
                    (true, true) => Some(self.with_constraint(covariate, interval(lower, Some(s)))),
                    (true, false) => Some(self.clone()),
                    (false, _) => None,
                };
                let right = match (left_nonempty, right_nonempty) {
                    (true, true) => Some(self.with_constraint(covariate, interval(Some(s), upper))),
                    (false, true) => Some(self.clone()),
                    (_, false) => None,
                };
                (left, right)
            }
            SplitRule::Levels(set) => {
                let count = schema[covariate].level_count().unwrap_or(0);
                let allowed = self.levels(covariate, count);
                let (l, r): (Vec<u32>, Vec<u32>) =
                    allowed.iter().partition(|v| set.binary_search(v).is_ok());
                let piece = |levels: Vec<u32>| {
                    if levels.is_empty() {
                        None
                    } else if levels.len() == count {
                        Some(self.with_constraint(covariate, None))
                    } else {
                        Some(self.with_constraint(covariate, Some(Constraint::Levels(levels))))
                    }
                };
                (piece(l), piece(r))
            }
        }
    }

    /// The single clause covering exactly `self ∪ other`, when the two differ
    /// in one covariate only and are adjacent there.
    pub fn merge_with(&self, other: &Clause, schema: &[Covariate]) -> Option<Clause> {
        let mut covs: Vec<usize> = self
            .constraints
            .iter()
            .chain(&other.constraints)
            .map(|(j, _)| *j)
            .collect();
        covs.sort_unstable();
        covs.dedup();
        let differing: Vec<usize> = covs
            .into_iter()
            .filter(|&j| self.constraint(j) != other.constraint(j))
            .collect();
        let [j] = differing[..] else { return None };
        let merged = match (self.constraint(j)?, other.constraint(j)?) {
            (
                Constraint::Interval { lower: l1, upper: u1 },
                Constraint::Interval { lower: l2, upper: u2 },
            ) => {
                let (lower, upper) = if u1.is_some() && *u1 == *l2 {
                    (*l1, *u2)
                } else if u2.is_some() && *u2 == *l1 {
                    (*l2, *u1)
                } else {
                    return None;
                };
                (lower.is_some() || upper.is_some()).then_some(Constraint::Interval { lower, upper })
            }
            (Constraint::Levels(a), Constraint::Levels(b)) => {
                if a.iter().any(|l| b.binary_search(l).is_ok()) {
                    return None;
                }
                let mut levels: Vec<u32> = a.iter().chain(b).copied().collect();
                levels.sort_unstable();
                let count = schema[j].level_count().unwrap_or(0);
                (levels.len() < count).then_some(Constraint::Levels(levels))
            }
            _ => return None,
        };
        Some(self.with_constraint(j, merged))
    }

    fn describe(&self, schema: &[Covariate], covariate: usize) -> String {
        match self.constraint(covariate) {
            None => String::new(),
            Some(Constraint::Interval { lower, upper }) => match (lower, upper) {
                (None, Some(u)) => format!("<= {u}"),
                (Some(l), None) => format!("> {l}"),
                (Some(l), Some(u)) => format!("({l}, {u}]"),
                (None, None) => String::new(),
            },
            Some(Constraint::Levels(levels)) => {
                let names: Vec<String> = levels
                    .iter()
                    .map(|&l| schema[covariate].format_value(l as f64))
                    .collect();
                format!("{{{}}}", names.join(","))
            }
        }
    }
}

/// Repeatedly merges pairs of clauses whose union is itself a clause.
/// Returns the simplified clauses and, for each input clause, the index of
/// the output clause containing it.
pub fn simplify_clauses(clauses: &[Clause], schema: &[Covariate]) -> (Vec<Clause>, Vec<usize>) {
    let mut out: Vec<Clause> = clauses.to_vec();
    let mut owner: Vec<usize> = (0..clauses.len()).collect();
    'outer: loop {
        for a in 0..out.len() {
            for b in a + 1..out.len() {
                if let Some(m) = out[a].merge_with(&out[b], schema) {
                    out[a] = m;
                    out.remove(b);
                    for o in owner.iter_mut() {
                        if *o == b {
                            *o = a;
                        } else if *o > b {
                            *o -= 1;
                        }
                    }
                    continue 'outer;
                }
            }
        }
        break;
    }
    (out, owner)
}

/// A union of disjoint clauses with its fitted prediction(s).
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub clauses: Vec<Clause>,
    /// One value for L2 losses; one value per grid time for Brier losses.
    pub prediction: Vec<f64>,
    /// IPCW-weighted mean raw survival time of the training subjects in the
    /// region, used as the predicted survival time for concordance.
    pub mean_survival: Option<f64>,
}

impl Region {
    pub fn contains(&self, w: &[f64]) -> bool {
        self.clauses.iter().any(|c| c.contains(w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionModel {
    schema: Vec<Covariate>,
    regions: Vec<Region>,
}

impl PartitionModel {
    /// Single unconstrained region.
    pub fn root(schema: Vec<Covariate>, prediction: Vec<f64>) -> Self {
        PartitionModel {
            schema,
            regions: vec![Region {
                clauses: vec![Clause::unconstrained()],
                prediction,
                mean_survival: None,
            }],
        }
    }

    pub fn new(schema: Vec<Covariate>, regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() || regions.iter().any(|r| r.clauses.is_empty()) {
            return Err(Error::invalid("a partition model needs nonempty regions"));
        }
        for r in &regions {
            for c in &r.clauses {
                if c.constraints.iter().any(|(j, _)| *j >= schema.len()) {
                    return Err(Error::invalid("clause refers to a covariate outside the schema"));
                }
            }
        }
        Ok(PartitionModel { schema, regions })
    }

    pub fn schema(&self) -> &[Covariate] {
        &self.schema
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn regions_mut(&mut self) -> &mut [Region] {
        &mut self.regions
    }

    pub fn size(&self) -> usize {
        self.regions.len()
    }

    pub fn assign(&self, w: &[f64]) -> Result<usize> {
        if w.len() != self.schema.len() {
            return Err(Error::invalid(format!(
                "covariate vector has {} entries, schema has {}",
                w.len(),
                self.schema.len()
            )));
        }
        self.regions
            .iter()
            .position(|r| r.contains(w))
            .ok_or(Error::Unassigned)
    }

    /// Number of regions containing `w`; 1 for a valid partition.
    pub fn coverage(&self, w: &[f64]) -> usize {
        self.regions.iter().filter(|r| r.contains(w)).count()
    }

    pub fn predict(&self, w: &[f64]) -> Result<&[f64]> {
        Ok(&self.regions[self.assign(w)?].prediction)
    }

    /// First prediction component (the L2 prediction or first grid time).
    pub fn predict_value(&self, w: &[f64]) -> Result<f64> {
        self.predict(w)?
            .first()
            .copied()
            .ok_or_else(|| Error::invalid("region has no prediction"))
    }

    pub fn assign_all(&self, data: &SurvivalDataset) -> Result<Vec<usize>> {
        data.subjects().iter().map(|s| self.assign(&s.covariates)).collect()
    }

    /// Covariate indices referenced by any clause.
    pub fn variables_used(&self) -> BTreeSet<usize> {
        self.regions
            .iter()
            .flat_map(|r| r.clauses.iter())
            .flat_map(|c| c.constraints.iter().map(|(j, _)| *j))
            .collect()
    }

    /// Renders a risk-group table: one row per clause, one column per
    /// covariate used; continuation clauses of a region are marked `or`.
    pub fn risk_table(&self, counts: Option<&[usize]>) -> String {
        let vars: Vec<usize> = self.variables_used().into_iter().collect();
        let mut header = vec!["Group".to_string(), "N".to_string(), "Prediction".to_string()];
        header.extend(vars.iter().map(|&j| self.schema[j].name.clone()));
        let mut rows = vec![header];
        for (r, region) in self.regions.iter().enumerate() {
            for (k, clause) in region.clauses.iter().enumerate() {
                let mut row = if k == 0 {
                    let pred: Vec<String> = region.prediction.iter().map(|p| format!("{p:.4}")).collect();
                    vec![
                        format!("{}", r + 1),
                        counts.map_or(String::new(), |c| c[r].to_string()),
                        pred.join(" "),
                    ]
                } else {
                    vec!["  or".to_string(), String::new(), String::new()]
                };
                row.extend(vars.iter().map(|&j| clause.describe(&self.schema, j)));
                rows.push(row);
            }
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        PartitionModel::try_from(doc)
    }
}

impl Serialize for PartitionModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartitionModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = ModelDoc::deserialize(d)?;
        PartitionModel::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema: Vec<Covariate>,
    regions: Vec<RegionDoc>,
}

#[derive(Serialize, Deserialize)]
struct RegionDoc {
    clauses: Vec<Vec<ConstraintDoc>>,
    prediction: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_survival: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct ConstraintDoc {
    covariate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
}

impl From<&PartitionModel> for ModelDoc {
    fn from(m: &PartitionModel) -> Self {
        let regions = m
            .regions
            .iter()
            .map(|r| RegionDoc {
                clauses: r
                    .clauses
                    .iter()
                    .map(|c| {
                        c.constraints
                            .iter()
                            .map(|(j, con)| {
                                let covariate = m.schema[*j].name.clone();
                                match con {
                                    Constraint::Interval { lower, upper } => ConstraintDoc {
                                        covariate,
                                        lower: *lower,
                                        upper: *upper,
                                        levels: None,
                                    },
                                    Constraint::Levels(levels) => ConstraintDoc {
                                        covariate,
                                        lower: None,
                                        upper: None,
                                        levels: Some(
                                            levels
                                                .iter()
                                                .map(|&l| m.schema[*j].format_value(l as f64))
                                                .collect(),
                                        ),
                                    },
                                }
                            })
                            .collect()
                    })
                    .collect(),
                prediction: r.prediction.clone(),
                mean_survival: r.mean_survival,
            })
            .collect();
        ModelDoc {
            schema: m.schema.clone(),
            regions,
        }
    }
}

impl TryFrom<ModelDoc> for PartitionModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        crate::data::validate_schema(&doc.schema)?;
        let mut regions = Vec::with_capacity(doc.regions.len());
        for rd in doc.regions {
            let mut clauses = Vec::with_capacity(rd.clauses.len());
            for cd in rd.clauses {
                let mut constraints = Vec::with_capacity(cd.len());
                for con in cd {
                    let j = doc
                        .schema
                        .iter()
                        .position(|c| c.name == con.covariate)
                        .ok_or_else(|| Error::Schema(format!("unknown covariate `{}` in model", con.covariate)))?;
                    let constraint = match (&doc.schema[j].kind, con.levels) {
                        (CovariateKind::Categorical { levels: all }, Some(names)) => {
                            let mut idx = names
                                .iter()
                                .map(|n| {
                                    all.iter().position(|l| l == n).map(|p| p as u32).ok_or_else(|| {
                                        Error::Schema(format!("unknown level `{n}` of `{}`", con.covariate))
                                    })
                                })
                                .collect::<Result<Vec<u32>>>()?;
                            idx.sort_unstable();
                            Constraint::Levels(idx)
                        }
                        (CovariateKind::Numeric, None) => Constraint::Interval {
                            lower: con.lower,
                            upper: con.upper,
                        },
                        _ => {
                            return Err(Error::Schema(format!(
                                "constraint on `{}` does not match its kind",
                                con.covariate
                            )))
                        }
                    };
                    constraints.push((j, constraint));
                }
                clauses.push(Clause::from_constraints(constraints)?);
            }
            regions.push(Region {
                clauses,
                prediction: rd.prediction,
                mean_survival: rd.mean_survival,
            });
        }
        PartitionModel::new(doc.schema, regions)
    }
}

/// Resets each region's prediction to the loss-minimizing constant(s) on
/// `data`: the weighted mean outcome per loss column.
pub fn refit_predictions(
    model: &PartitionModel,
    data: &SurvivalDataset,
    loss: &LossSpec,
    g: &CensoringModel,
) -> Result<PartitionModel> {
    let design = LossDesign::build(data, loss, g)?;
    let assignment = model.assign_all(data)?;
    let mut members = vec![Vec::new(); model.size()];
    for (i, &r) in assignment.iter().enumerate() {
        members[r].push(i);
    }
    let mut out = model.clone();
    for (r, m) in members.iter().enumerate() {
        out.regions[r].prediction = design
            .weighted_means(m)
            .ok_or(Error::EmptyRegion { region: r })?;
    }
    Ok(out)
}

/// IPCW-weighted mean raw follow-up time per region; falls back to the plain
/// mean follow-up time for a region without weighted events.
pub fn fill_mean_survival(model: &mut PartitionModel, data: &SurvivalDataset, g: &CensoringModel) -> Result<()> {
    let weights = crate::survival::ipcw_weights(data, g)?;
    let assignment = model.assign_all(data)?;
    let k = model.size();
    let (mut sw, mut swt, mut n, mut st) = (vec![0.0; k], vec![0.0; k], vec![0usize; k], vec![0.0; k]);
    for (i, s) in data.subjects().iter().enumerate() {
        let r = assignment[i];
        sw[r] += weights[i];
        swt[r] += weights[i] * s.time;
        n[r] += 1;
        st[r] += s.time;
    }
    for (r, region) in model.regions.iter_mut().enumerate() {
        region.mean_survival = if sw[r] > 0.0 {
            Some(swt[r] / sw[r])
        } else if n[r] > 0 {
            Some(st[r] / n[r] as f64)
        } else {
            None
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> Vec<Covariate> {
        vec![Covariate::numeric("W1"), Covariate::numeric("W2")]
    }

    fn le(j: usize, u: f64) -> (usize, Constraint) {
        (j, Constraint::Interval { lower: None, upper: Some(u) })
    }

    fn gt(j: usize, l: f64) -> (usize, Constraint) {
        (j, Constraint::Interval { lower: Some(l), upper: None })
    }

    /// Three-leaf tree: W1 > 50 | W1 <= 50 & W2 > 75 | W1 <= 50 & W2 <= 75.
    fn three_leaf() -> PartitionModel {
        let region = |cs: Vec<(usize, Constraint)>, p: f64| Region {
            clauses: vec![Clause::from_constraints(cs).unwrap()],
            prediction: vec![p],
            mean_survival: None,
        };
        PartitionModel::new(
            schema2(),
            vec![
                region(vec![gt(0, 50.0)], 5.0),
                region(vec![le(0, 50.0), gt(1, 75.0)], 5.0),
                region(vec![le(0, 50.0), le(1, 75.0)], 0.5),
            ],
        )
        .unwrap()
    }

    #[test]
    fn root_assigns_everything() {
        let m = PartitionModel::root(schema2(), vec![3.2]);
        assert_eq!(m.assign(&[1.0, 99.0]).unwrap(), 0);
        assert_eq!(m.predict_value(&[-4.0, 0.0]).unwrap(), 3.2);
    }

    #[test]
    fn half_open_convention() {
        let c = Clause::unconstrained();
        let (l, r) = c.split(0, &SplitRule::Threshold(50.0), &schema2());
        let m = PartitionModel::new(
            schema2(),
            vec![
                Region { clauses: vec![l.unwrap()], prediction: vec![1.0], mean_survival: None },
                Region { clauses: vec![r.unwrap()], prediction: vec![5.0], mean_survival: None },
            ],
        )
        .unwrap();
        assert_eq!(m.assign(&[50.0, 0.0]).unwrap(), 0);
        assert_eq!(m.predict_value(&[50.5, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn three_leaf_tree_sigma_five_region() {
        let m = three_leaf();
        assert_eq!(m.assign(&[60.0, 10.0]).unwrap(), 0);
        assert_eq!(m.predict_value(&[60.0, 10.0]).unwrap(), 5.0);
        assert_eq!(m.predict_value(&[10.0, 80.0]).unwrap(), 5.0);
        assert_eq!(m.predict_value(&[10.0, 75.0]).unwrap(), 0.5);
    }

    #[test]
    fn split_outside_interval_keeps_clause_whole() {
        let c = Clause::from_constraints(vec![gt(1, 75.0)]).unwrap();
        let (l, r) = c.split(1, &SplitRule::Threshold(30.0), &schema2());
        assert!(l.is_none());
        assert_eq!(r.unwrap(), c);
        let (l, r) = c.split(1, &SplitRule::Threshold(80.0), &schema2());
        assert_eq!(
            l.unwrap().constraint(1),
            Some(&Constraint::Interval { lower: Some(75.0), upper: Some(80.0) })
        );
        assert_eq!(
            r.unwrap().constraint(1),
            Some(&Constraint::Interval { lower: Some(80.0), upper: None })
        );
    }

    #[test]
    fn categorical_split_pieces() {
        let schema = vec![Covariate::categorical("g", vec!["a".into(), "b".into(), "c".into()])];
        let c = Clause::unconstrained();
        let (l, r) = c.split(0, &SplitRule::Levels(vec![0, 2]), &schema);
        let (l, r) = (l.unwrap(), r.unwrap());
        assert!(l.contains(&[0.0]) && l.contains(&[2.0]) && !l.contains(&[1.0]));
        assert!(r.contains(&[1.0]));
        // Splitting the right piece by a set it does not touch keeps it whole.
        let (l2, r2) = r.split(0, &SplitRule::Levels(vec![0]), &schema);
        assert!(l2.is_none());
        assert_eq!(r2.unwrap(), r);
    }

    #[test]
    fn json_round_trip() {
        let mut m = three_leaf();
        m.regions_mut()[0].mean_survival = Some(4.8);
        let text = m.to_json().unwrap();
        assert_eq!(PartitionModel::from_json(&text).unwrap(), m);
    }

    #[test]
    fn categorical_json_round_trip() {
        let schema = vec![
            Covariate::categorical("g", vec!["a".into(), "b".into(), "c".into()]),
            Covariate::numeric("x"),
        ];
        let (l, r) = Clause::unconstrained().split(0, &SplitRule::Levels(vec![1]), &schema);
        let m = PartitionModel::new(
            schema,
            vec![
                Region { clauses: vec![l.unwrap()], prediction: vec![0.1, 0.2], mean_survival: None },
                Region { clauses: vec![r.unwrap()], prediction: vec![0.3, 0.4], mean_survival: None },
            ],
        )
        .unwrap();
        assert_eq!(PartitionModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn risk_table_lists_or_clauses() {
        let m = three_leaf();
        let mut regions = m.regions().to_vec();
        let merged = Region {
            clauses: vec![regions[0].clauses[0].clone(), regions[1].clauses[0].clone()],
            prediction: vec![5.0],
            mean_survival: None,
        };
        regions = vec![merged, regions[2].clone()];
        let m = PartitionModel::new(schema2(), regions).unwrap();
        let table = m.risk_table(Some(&[10, 20]));
        assert!(table.contains("or"), "{table}");
        assert!(table.contains("> 50"), "{table}");
        assert!(table.lines().next().unwrap().contains("W1"));
    }

    #[test]
    fn unassigned_is_an_error() {
        let m = PartitionModel::new(
            schema2(),
            vec![Region {
                clauses: vec![Clause::from_constraints(vec![gt(0, 0.0)]).unwrap()],
                prediction: vec![1.0],
                mean_survival: None,
            }],
        )
        .unwrap();
        assert!(matches!(m.assign(&[-1.0, 0.0]), Err(Error::Unassigned)));
    }
}
