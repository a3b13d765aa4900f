//! Survival datasets, covariate schemas and CSV ingestion.
//!
//! A dataset holds raw follow-up times and event indicators. Categorical
//! covariate values are stored as level indices (as `f64`) so that every
//! covariate column can be scanned the same way by the partitioning code.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl Covariate {
    pub fn numeric(name: impl Into<String>) -> Self {
        Covariate {
            name: name.into(),
            kind: CovariateKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Covariate {
            name: name.into(),
            kind: CovariateKind::Categorical { levels },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, CovariateKind::Categorical { .. })
    }

    /// Number of levels for a categorical covariate, `None` for numeric ones.
    pub fn level_count(&self) -> Option<usize> {
        match &self.kind {
            CovariateKind::Categorical { levels } => Some(levels.len()),
            CovariateKind::Numeric => None,
        }
    }

    /// Text form of a stored value (level label for categoricals).
    pub fn format_value(&self, value: f64) -> String {
        match &self.kind {
            CovariateKind::Numeric => format!("{value}"),
            CovariateKind::Categorical { levels } => levels
                .get(value as usize)
                .cloned()
                .unwrap_or_else(|| format!("<level {value}>")),
        }
    }
}

/// One observation: covariates aligned with the schema, the follow-up time
/// `min(T, C)` and the event indicator `T <= C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub covariates: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    schema: Vec<Covariate>,
    subjects: Vec<Subject>,
}

pub(crate) fn validate_schema(schema: &[Covariate]) -> Result<()> {
    let mut seen = HashSet::new();
    for c in schema {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Schema(format!("duplicate covariate name `{}`", c.name)));
        }
        if let CovariateKind::Categorical { levels } = &c.kind {
            if levels.is_empty() {
                return Err(Error::Schema(format!("categorical `{}` has no levels", c.name)));
            }
            let mut lv = HashSet::new();
            for l in levels {
                if !lv.insert(l.as_str()) {
                    return Err(Error::Schema(format!(
                        "categorical `{}` repeats level `{l}`",
                        c.name
                    )));
                }
            }
        }
    }
    Ok(())
}

fn validate_subject(schema: &[Covariate], s: &Subject, row: usize) -> Result<()> {
    if !(s.time.is_finite() && s.time > 0.0) {
        return Err(Error::Row {
            row,
            message: format!("follow-up time must be positive and finite (got {})", s.time),
        });
    }
    if s.covariates.len() != schema.len() {
        return Err(Error::Row {
            row,
            message: format!(
                "expected {} covariates, found {}",
                schema.len(),
                s.covariates.len()
            ),
        });
    }
    for (c, &v) in schema.iter().zip(&s.covariates) {
        match &c.kind {
            CovariateKind::Numeric if !v.is_finite() => {
                return Err(Error::Row {
                    row,
                    message: format!("covariate `{}` is not finite", c.name),
                });
            }
            CovariateKind::Categorical { levels }
                if v < 0.0 || v.fract() != 0.0 || v as usize >= levels.len() =>
            {
                return Err(Error::Row {
                    row,
                    message: format!("covariate `{}` has undeclared level index {v}", c.name),
                });
            }
            _ => {}
        }
    }
    Ok(())
}

impl SurvivalDataset {
    pub fn new(schema: Vec<Covariate>, subjects: Vec<Subject>) -> Result<Self> {
        validate_schema(&schema)?;
        for (i, s) in subjects.iter().enumerate() {
            validate_subject(&schema, s, i + 1)?;
        }
        Ok(SurvivalDataset { schema, subjects })
    }

    pub fn schema(&self) -> &[Covariate] {
        &self.schema
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.subjects.iter().map(|s| s.event).collect()
    }

    #[inline]
    pub fn value(&self, subject: usize, covariate: usize) -> f64 {
        self.subjects[subject].covariates[covariate]
    }

    pub fn covariate_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn event_count(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.subjects.is_empty() {
            return 0.0;
        }
        1.0 - self.event_count() as f64 / self.len() as f64
    }

    /// Fails with [`Error::NoEvents`] unless at least one event is observed.
    pub fn require_events(&self) -> Result<()> {
        if self.event_count() == 0 {
            Err(Error::NoEvents)
        } else {
            Ok(())
        }
    }

    /// New dataset containing the given subjects, in the given order.
    pub fn subset(&self, indices: &[usize]) -> SurvivalDataset {
        SurvivalDataset {
            schema: self.schema.clone(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    /// Same schema, times and events replaced. Used by transforms that keep
    /// covariates fixed.
    pub fn with_outcomes(&self, outcomes: &[(f64, bool)]) -> Result<SurvivalDataset> {
        if outcomes.len() != self.len() {
            return Err(Error::invalid("outcome vector length differs from dataset"));
        }
        let subjects = self
            .subjects
            .iter()
            .zip(outcomes)
            .map(|(s, &(time, event))| Subject {
                covariates: s.covariates.clone(),
                time,
                event,
            })
            .collect();
        SurvivalDataset::new(self.schema.clone(), subjects)
    }

    /// Writes the dataset with covariate columns first, then `time` and
    /// `event` columns (event encoded 0/1).
    pub fn write_csv<W: Write>(&self, writer: W, time_col: &str, event_col: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.iter().map(|c| c.name.as_str()).collect();
        header.push(time_col);
        header.push(event_col);
        w.write_record(&header)?;
        for s in &self.subjects {
            let mut rec: Vec<String> = self
                .schema
                .iter()
                .zip(&s.covariates)
                .map(|(c, &v)| c.format_value(v))
                .collect();
            rec.push(format!("{}", s.time));
            rec.push(if s.event { "1".into() } else { "0".into() });
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Maps CSV columns onto dataset roles.
#[derive(Debug, Clone, Default)]
pub struct ColumnMapping {
    pub time: String,
    pub event: String,
    /// Covariate columns in schema order. `None` means every column other than
    /// time and event, in file order.
    pub covariates: Option<Vec<String>>,
    /// Columns to treat as categorical, optionally with declared levels. Any
    /// column holding a non-numeric value is categorical regardless.
    pub categorical: BTreeMap<String, Option<Vec<String>>>,
}

impl ColumnMapping {
    pub fn new(time: impl Into<String>, event: impl Into<String>) -> Self {
        ColumnMapping {
            time: time.into(),
            event: event.into(),
            ..Default::default()
        }
    }

    pub fn with_covariates<S: Into<String>>(mut self, cols: impl IntoIterator<Item = S>) -> Self {
        self.covariates = Some(cols.into_iter().map(Into::into).collect());
        self
    }

    pub fn with_categorical(mut self, col: impl Into<String>, levels: Option<Vec<String>>) -> Self {
        self.categorical.insert(col.into(), levels);
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<SurvivalDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_csv(file, mapping)
}

pub fn read_csv<R: Read>(reader: R, mapping: &ColumnMapping) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` not found in header")))
    };
    let time_idx = find(&mapping.time)?;
    let event_idx = find(&mapping.event)?;
    if time_idx == event_idx {
        return Err(Error::Schema("time and event must be different columns".into()));
    }
    let cov_names: Vec<String> = match &mapping.covariates {
        Some(cols) => cols.clone(),
        None => header
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != time_idx && i != event_idx)
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let mut cov_idx = Vec::with_capacity(cov_names.len());
    for name in &cov_names {
        let i = find(name)?;
        if i == time_idx || i == event_idx {
            return Err(Error::Schema(format!("column `{name}` cannot be both covariate and outcome")));
        }
        cov_idx.push(i);
    }
    for name in mapping.categorical.keys() {
        if !cov_names.contains(name) {
            return Err(Error::Schema(format!("categorical column `{name}` is not a covariate")));
        }
    }

    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut outcomes = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |i: usize| -> Result<&str> {
            let v = rec.get(i).map(str::trim).unwrap_or("");
            if v.is_empty() {
                Err(Error::Row {
                    row,
                    message: format!("missing value in column `{}`", header[i]),
                })
            } else {
                Ok(v)
            }
        };
        let t_raw = cell(time_idx)?;
        let time: f64 = t_raw.parse().map_err(|_| Error::Row {
            row,
            message: format!("follow-up time `{t_raw}` is not numeric"),
        })?;
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::Row {
                row,
                message: format!("follow-up time must be positive (got {t_raw})"),
            });
        }
        let e_raw = cell(event_idx)?;
        let event = match e_raw.parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => {
                return Err(Error::Row {
                    row,
                    message: format!("event value outside {{0,1}} (got `{e_raw}`)"),
                })
            }
        };
        let mut row_cells = Vec::with_capacity(cov_idx.len());
        for &i in &cov_idx {
            row_cells.push(cell(i)?.to_string());
        }
        cells.push(row_cells);
        outcomes.push((time, event));
    }

    let mut schema = Vec::with_capacity(cov_names.len());
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(cov_names.len());
    for (j, name) in cov_names.iter().enumerate() {
        let declared = mapping.categorical.get(name);
        let numeric: Option<Vec<f64>> = if declared.is_some() {
            None
        } else {
            cells.iter().map(|r| r[j].parse::<f64>().ok().filter(|v| v.is_finite())).collect()
        };
        match numeric {
            Some(vals) => {
                schema.push(Covariate::numeric(name.clone()));
                columns.push(vals);
            }
            None => {
                let levels = match declared.cloned().flatten() {
                    Some(l) => l,
                    None => {
                        let mut l: Vec<String> = cells.iter().map(|r| r[j].clone()).collect();
                        l.sort();
                        l.dedup();
                        l
                    }
                };
                let mut col = Vec::with_capacity(cells.len());
                for (r, rc) in cells.iter().enumerate() {
                    let idx = levels.iter().position(|l| *l == rc[j]).ok_or_else(|| Error::Row {
                        row: r + 1,
                        message: format!("`{}` is not a declared level of `{name}`", rc[j]),
                    })?;
                    col.push(idx as f64);
                }
                schema.push(Covariate::categorical(name.clone(), levels));
                columns.push(col);
            }
        }
    }
    let subjects = outcomes
        .into_iter()
        .enumerate()
        .map(|(i, (time, event))| Subject {
            covariates: columns.iter().map(|c| c[i]).collect(),
            time,
            event,
        })
        .collect();
    SurvivalDataset::new(schema, subjects)
}

/// Assignment of subjects to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    folds: usize,
    fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// Builds an assignment from explicit fold ids (each must be below `folds`).
    pub fn from_ids(folds: usize, fold_of: Vec<usize>) -> Result<Self> {
        if folds < 2 || fold_of.iter().any(|&f| f >= folds) {
            return Err(Error::invalid("fold ids out of range"));
        }
        Ok(FoldAssignment { folds, fold_of })
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn fold_of(&self, subject: usize) -> usize {
        self.fold_of[subject]
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    /// (training indices, held-out indices) for one fold, each ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Balanced random fold assignment, deterministic in `seed`.
pub fn split_folds(data: &SurvivalDataset, v: usize, seed: u64) -> Result<FoldAssignment> {
    split_folds_n(data.len(), v, seed)
}

pub fn split_folds_n(n: usize, v: usize, seed: u64) -> Result<FoldAssignment> {
    if v < 2 || v > n {
        return Err(Error::invalid(format!(
            "fold count {v} must lie in [2, {n}] for {n} subjects"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % v;
    }
    Ok(FoldAssignment { folds: v, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<SurvivalDataset> {
        read_csv(text.as_bytes(), &ColumnMapping::new("time", "status"))
    }

    #[test]
    fn three_row_file() {
        let d = parse("w1,time,status\n1.5,2,1\n3,4.5,0\n2,1,1\n").unwrap();
        assert_eq!(d.schema().len(), 1);
        assert_eq!(d.len(), 3);
        assert_eq!(d.subjects()[1].time, 4.5);
        assert!(!d.subjects()[1].event);
    }

    #[test]
    fn zero_time_names_row() {
        let err = parse("w1,time,status\n1,2,1\n2,0,1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("positive"), "{msg}");
    }

    #[test]
    fn bad_event_value() {
        let err = parse("w1,time,status\n1,2,2\n").unwrap_err();
        assert!(err.to_string().contains("event value outside {0,1}"));
    }

    #[test]
    fn missing_cell_rejected() {
        let err = parse("w1,time,status\n,2,1\n").unwrap_err();
        assert!(err.to_string().contains("missing value"));
    }

    #[test]
    fn non_numeric_column_becomes_categorical() {
        let d = parse("g,time,status\nb,1,1\na,2,0\nb,3,1\n").unwrap();
        assert_eq!(
            d.schema()[0].kind,
            CovariateKind::Categorical {
                levels: vec!["a".into(), "b".into()]
            }
        );
        assert_eq!(d.value(0, 0), 1.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let s = vec![Covariate::numeric("a"), Covariate::numeric("a")];
        assert!(SurvivalDataset::new(s, vec![]).is_err());
    }

    #[test]
    fn folds_balanced_and_deterministic() {
        let f = split_folds_n(10, 5, 1).unwrap();
        for k in 0..5 {
            assert_eq!(f.split(k).1.len(), 2);
        }
        assert_eq!(f, split_folds_n(10, 5, 1).unwrap());
        assert!(split_folds_n(3, 5, 1).is_err());
        assert!(split_folds_n(3, 1, 1).is_err());
    }

    #[test]
    fn folds_partition_subjects() {
        let f = split_folds_n(23, 4, 9).unwrap();
        let mut seen = vec![0; 23];
        for k in 0..4 {
            for i in f.split(k).1 {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = (0..4).map(|k| f.split(k).1.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
