//! Deletion/substitution/addition search over partition models.
//!
//! The search keeps, for every model size, the lowest-risk model seen so far
//! and walks between sizes:
//!
//! 1. deletion (merge two regions, "or") fires when it beats the incumbent of
//!    the smaller size by the relative margin `min_percent_difference`;
//! 2. otherwise substitution (split two regions, recombine the four pieces
//!    two ways) fires when it beats the incumbent of the current size by the
//!    same margin;
//! 3. otherwise addition (split one region) moves up one size.
//!
//! The search starts from the single-region model and stops when no move
//! applies. All risks are computed from per-region weighted sufficient
//! statistics of a [`LossDesign`], so every move is evaluated exactly.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::data::{CovariateKind, SurvivalDataset};
use crate::error::{Error, Result};
use crate::loss::{LossDesign, LossSpec};
use crate::partition::{simplify_clauses, Clause, PartitionModel, Region, SplitRule};
use crate::survival::CensoringModel;

/// Splits must improve the region risk by more than this fraction of it;
/// smaller gains are rounding noise.
const REL_TOL: f64 = 1e-10;
/// Candidate splits whose improvements differ by less than this fraction of
/// the parent risk are ties, so summation order cannot break them.
const TIE_TOL: f64 = 1e-12;
const MAX_STEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsaConfig {
    pub max_regions: usize,
    /// Minimum number of training subjects in every clause.
    pub min_per_clause: usize,
    /// Relative improvement required for deletion and substitution moves.
    pub min_percent_difference: f64,
    pub loss: LossSpec,
    /// Upper bound on candidate cut points per covariate and region.
    pub max_cut_points: usize,
}

impl Default for DsaConfig {
    fn default() -> Self {
        DsaConfig {
            max_regions: 10,
            min_per_clause: 15,
            min_percent_difference: 0.05,
            loss: LossSpec::ipcw_l2(),
            max_cut_points: 200,
        }
    }
}

impl DsaConfig {
    pub fn with_loss(loss: LossSpec) -> Self {
        DsaConfig {
            loss,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_regions < 1 {
            return Err(Error::invalid("max_regions must be at least 1"));
        }
        if self.min_per_clause < 1 {
            return Err(Error::invalid("min_per_clause must be at least 1"));
        }
        if !(self.min_percent_difference >= 0.0) {
            return Err(Error::invalid("min_percent_difference must be nonnegative"));
        }
        if self.max_cut_points < 1 {
            return Err(Error::invalid("max_cut_points must be at least 1"));
        }
        Ok(())
    }
}

/// Best model found for one size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub size: usize,
    pub risk: f64,
    pub model: PartitionModel,
}

/// Candidates in ascending size order, at most one per size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateList {
    candidates: Vec<Candidate>,
}

impl CandidateList {
    pub fn new(mut candidates: Vec<Candidate>) -> Result<Self> {
        candidates.sort_by_key(|c| c.size);
        if candidates.is_empty() || candidates.windows(2).any(|w| w[0].size == w[1].size) {
            return Err(Error::invalid("candidate list needs distinct sizes"));
        }
        Ok(CandidateList { candidates })
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn get(&self, size: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.size == size)
    }

    /// The largest candidate whose size does not exceed `size`.
    pub fn at_or_below(&self, size: usize) -> Option<&Candidate> {
        self.candidates.iter().rev().find(|c| c.size <= size)
    }

    pub fn max_size(&self) -> usize {
        self.candidates.last().map_or(0, |c| c.size)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.candidates.iter().map(|c| c.size).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Weighted running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub w: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, w: f64, y: f64) {
        if w == 0.0 {
            return;
        }
        let total = self.w + w;
        let d = y - self.mean;
        self.mean += d * w / total;
        self.m2 += w * d * (y - self.mean);
        self.w = total;
    }

    #[inline]
    fn merge(a: &Moments, b: &Moments) -> Moments {
        if a.w == 0.0 {
            return *b;
        }
        if b.w == 0.0 {
            return *a;
        }
        let w = a.w + b.w;
        let d = b.mean - a.mean;
        Moments {
            w,
            mean: a.mean + d * b.w / w,
            m2: a.m2 + b.m2 + d * d * a.w * b.w / w,
        }
    }
}

fn merge_all(a: &[Moments], b: &[Moments]) -> Vec<Moments> {
    a.iter().zip(b).map(|(x, y)| Moments::merge(x, y)).collect()
}

/// A region during the search: clauses, member subjects (ascending) with the
/// clause each falls in, sufficient statistics, and a lazily computed best
/// split shared between clones.
#[derive(Debug, Clone)]
pub(crate) struct WorkRegion {
    pub clauses: Vec<Clause>,
    pub members: Vec<usize>,
    pub member_clause: Vec<u32>,
    pub stats: Vec<Moments>,
    best: OnceLock<Option<Arc<Split>>>,
}

#[derive(Debug)]
pub(crate) struct Split {
    pub covariate: usize,
    pub rule: SplitRule,
    pub improvement: f64,
    pub left: WorkRegion,
    pub right: WorkRegion,
}

/// Search state shared by all moves on one dataset.
pub(crate) struct Search<'a> {
    data: &'a SurvivalDataset,
    design: LossDesign,
    min_per_clause: usize,
    max_cut_points: usize,
    /// Per numeric covariate, subject indices sorted by value then index.
    order: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    pub fn new(
        data: &'a SurvivalDataset,
        loss: &LossSpec,
        g: &CensoringModel,
        min_per_clause: usize,
        max_cut_points: usize,
    ) -> Result<Self> {
        let design = LossDesign::build(data, loss, g)?;
        let order = data
            .schema()
            .iter()
            .enumerate()
            .map(|(j, c)| match c.kind {
                CovariateKind::Numeric => {
                    let mut idx: Vec<usize> = (0..data.len()).collect();
                    idx.sort_by(|&a, &b| data.value(a, j).total_cmp(&data.value(b, j)).then(a.cmp(&b)));
                    idx
                }
                CovariateKind::Categorical { .. } => Vec::new(),
            })
            .collect();
        Ok(Search {
            data,
            design,
            min_per_clause: min_per_clause.max(1),
            max_cut_points: max_cut_points.max(1),
            order,
        })
    }

    fn stats_of(&self, members: &[usize]) -> Vec<Moments> {
        self.design
            .columns()
            .iter()
            .map(|c| {
                let mut m = Moments::default();
                for &i in members {
                    m.push(c.weights[i], c.outcomes[i]);
                }
                m
            })
            .collect()
    }

    #[inline]
    pub fn risk_of(&self, stats: &[Moments]) -> f64 {
        let total: f64 = self
            .design
            .columns()
            .iter()
            .zip(stats)
            .map(|(c, m)| c.multiplier * m.m2.max(0.0))
            .sum();
        total / self.design.n() as f64
    }

    pub fn model_risk(&self, model: &[WorkRegion]) -> f64 {
        model.iter().map(|r| self.risk_of(&r.stats)).sum()
    }

    fn make_region(&self, clauses: Vec<Clause>, members: Vec<usize>, member_clause: Vec<u32>) -> WorkRegion {
        let stats = self.stats_of(&members);
        WorkRegion {
            clauses,
            members,
            member_clause,
            stats,
            best: OnceLock::new(),
        }
    }

    /// Region holding every training subject covered by `clauses`.
    pub fn region_from(&self, clauses: Vec<Clause>) -> WorkRegion {
        let mut members = Vec::new();
        let mut member_clause = Vec::new();
        for (i, s) in self.data.subjects().iter().enumerate() {
            if let Some(c) = clauses.iter().position(|c| c.contains(&s.covariates)) {
                members.push(i);
                member_clause.push(c as u32);
            }
        }
        self.make_region(clauses, members, member_clause)
    }

    pub fn root(&self) -> Result<WorkRegion> {
        let r = self.region_from(vec![Clause::unconstrained()]);
        if r.stats.iter().any(|m| m.w <= 0.0) {
            return Err(Error::EmptyRegion { region: 0 });
        }
        Ok(r)
    }

    pub fn work_model(&self, model: &PartitionModel) -> Vec<WorkRegion> {
        model
            .regions()
            .iter()
            .map(|r| self.region_from(r.clauses.clone()))
            .collect()
    }

    pub fn to_partition(&self, model: &[WorkRegion]) -> PartitionModel {
        let regions = model
            .iter()
            .map(|r| Region {
                clauses: r.clauses.clone(),
                prediction: r.stats.iter().map(|m| m.mean).collect(),
                mean_survival: None,
            })
            .collect();
        PartitionModel::new(self.data.schema().to_vec(), regions).expect("search models are well formed")
    }

    pub fn best_split(&self, region: &WorkRegion) -> Option<Arc<Split>> {
        region.best.get_or_init(|| self.compute_best_split(region).map(Arc::new)).clone()
    }

    /// Candidate gap positions (split after sequence position `p`) with at
    /// most `max_cut_points` entries, spaced by quantiles of the sequence.
    fn candidate_gaps(&self, keys: &[f64]) -> Vec<usize> {
        let gaps: Vec<usize> = (0..keys.len().saturating_sub(1))
            .filter(|&p| keys[p] < keys[p + 1])
            .collect();
        if gaps.len() <= self.max_cut_points {
            return gaps;
        }
        let m = keys.len() as f64;
        let mut chosen = Vec::with_capacity(self.max_cut_points);
        for q in 1..=self.max_cut_points {
            let target = q as f64 * m / (self.max_cut_points + 1) as f64;
            let k = gaps.partition_point(|&p| ((p + 1) as f64) < target);
            if let Some(&p) = gaps.get(k) {
                if chosen.last() != Some(&p) {
                    chosen.push(p);
                }
            }
        }
        chosen
    }

    fn compute_best_split(&self, region: &WorkRegion) -> Option<Split> {
        let mb = self.min_per_clause;
        let m = region.members.len();
        if m < 2 * mb {
            return None;
        }
        let parent = self.risk_of(&region.stats);
        if !(parent > 0.0) {
            return None;
        }
        let schema = self.data.schema();
        let ncl = region.clauses.len();
        let mut clause_total = vec![0usize; ncl];
        for &c in &region.member_clause {
            clause_total[c as usize] += 1;
        }
        let mut mark = vec![u32::MAX; self.data.len()];
        for (&i, &c) in region.members.iter().zip(&region.member_clause) {
            mark[i] = c;
        }
        let columns = self.design.columns();
        let ncol = columns.len();

        // (improvement, covariate, rule)
        let mut best: Option<(f64, usize, SplitRule)> = None;

        for (j, cov) in schema.iter().enumerate() {
            let (seq, keys, level_rank): (Vec<usize>, Vec<f64>, Vec<usize>) = match &cov.kind {
                CovariateKind::Numeric => {
                    let seq: Vec<usize> = self.order[j].iter().copied().filter(|&i| mark[i] != u32::MAX).collect();
                    let keys = seq.iter().map(|&i| self.data.value(i, j)).collect();
                    (seq, keys, Vec::new())
                }
                CovariateKind::Categorical { levels } => {
                    // Order levels by weighted mean of the first loss column;
                    // levels without weight go last, ties by level index.
                    let nl = levels.len();
                    let mut lm = vec![Moments::default(); nl];
                    for &i in &region.members {
                        let l = self.data.value(i, j) as usize;
                        lm[l].push(columns[0].weights[i], columns[0].outcomes[i]);
                    }
                    let mut lv: Vec<usize> = (0..nl).collect();
                    lv.sort_by(|&a, &b| {
                        let ka = if lm[a].w > 0.0 { lm[a].mean } else { f64::INFINITY };
                        let kb = if lm[b].w > 0.0 { lm[b].mean } else { f64::INFINITY };
                        ka.total_cmp(&kb).then(a.cmp(&b))
                    });
                    let mut rank = vec![0usize; nl];
                    for (r, &l) in lv.iter().enumerate() {
                        rank[l] = r;
                    }
                    let mut seq = region.members.clone();
                    seq.sort_by_key(|&i| (rank[self.data.value(i, j) as usize], i));
                    let keys = seq.iter().map(|&i| rank[self.data.value(i, j) as usize] as f64).collect();
                    (seq, keys, rank)
                }
            };
            let gaps = self.candidate_gaps(&keys);
            if gaps.is_empty() {
                continue;
            }

            // Geometric extent of each clause along this covariate.
            let extent: Vec<(f64, f64)> = region
                .clauses
                .iter()
                .map(|c| match &cov.kind {
                    CovariateKind::Numeric => (
                        c.lower(j).unwrap_or(f64::NEG_INFINITY),
                        c.upper(j).unwrap_or(f64::INFINITY),
                    ),
                    CovariateKind::Categorical { levels } => {
                        let ranks: Vec<usize> = c.levels(j, levels.len()).iter().map(|&l| level_rank[l as usize]).collect();
                        (
                            *ranks.iter().min().unwrap_or(&0) as f64,
                            *ranks.iter().max().unwrap_or(&0) as f64,
                        )
                    }
                })
                .collect();

            // Prefix statistics at candidate gaps.
            let mut left_stats = Vec::with_capacity(gaps.len());
            let mut left_counts = Vec::with_capacity(gaps.len());
            let mut acc = vec![Moments::default(); ncol];
            let mut counts = vec![0usize; ncl];
            let mut gi = 0;
            for (p, &i) in seq.iter().enumerate() {
                for (k, c) in columns.iter().enumerate() {
                    acc[k].push(c.weights[i], c.outcomes[i]);
                }
                counts[mark[i] as usize] += 1;
                if gi < gaps.len() && gaps[gi] == p {
                    left_stats.push(acc.clone());
                    left_counts.push(counts.clone());
                    gi += 1;
                }
            }
            // Suffix statistics at the same gaps.
            let mut right_stats = vec![Vec::new(); gaps.len()];
            let mut acc = vec![Moments::default(); ncol];
            let mut gi = gaps.len();
            for p in (0..seq.len()).rev() {
                while gi > 0 && gaps[gi - 1] == p {
                    gi -= 1;
                    right_stats[gi] = acc.clone();
                }
                let i = seq[p];
                for (k, c) in columns.iter().enumerate() {
                    acc[k].push(c.weights[i], c.outcomes[i]);
                }
            }

            for (g, &p) in gaps.iter().enumerate() {
                let (lo_key, hi_key) = (keys[p], keys[p + 1]);
                let cut = match cov.kind {
                    CovariateKind::Numeric => {
                        let mid = 0.5 * (lo_key + hi_key);
                        if mid < hi_key && mid >= lo_key {
                            mid
                        } else {
                            lo_key
                        }
                    }
                    CovariateKind::Categorical { .. } => lo_key,
                };
                let legal = (0..ncl).all(|c| {
                    let lc = left_counts[g][c];
                    let rc = clause_total[c] - lc;
                    let (lo, hi) = extent[c];
                    let (left_geo, right_geo) = match cov.kind {
                        CovariateKind::Numeric => (cut > lo, hi > cut),
                        CovariateKind::Categorical { .. } => (lo <= cut, hi > cut),
                    };
                    (!left_geo || lc >= mb) && (!right_geo || rc >= mb)
                });
                if !legal {
                    continue;
                }
                let l = &left_stats[g];
                let r = &right_stats[g];
                if l.iter().chain(r.iter()).any(|m| m.w <= 0.0) {
                    continue;
                }
                let risk = self.risk_of(l) + self.risk_of(r);
                let improvement = parent - risk;
                if best.as_ref().is_none_or(|b| improvement > b.0 + TIE_TOL * parent) {
                    let rule = match &cov.kind {
                        CovariateKind::Numeric => SplitRule::Threshold(cut),
                        CovariateKind::Categorical { levels } => {
                            let mut set: Vec<u32> = (0..levels.len())
                                .filter(|&l| level_rank[l] as f64 <= cut)
                                .map(|l| l as u32)
                                .collect();
                            set.sort_unstable();
                            SplitRule::Levels(set)
                        }
                    };
                    best = Some((improvement, j, rule));
                }
            }
        }

        let (improvement, covariate, rule) = best?;
        if !(improvement > REL_TOL * parent) {
            return None;
        }
        let (left, right) = self.apply_split(region, covariate, &rule);
        Some(Split {
            covariate,
            rule,
            improvement,
            left,
            right,
        })
    }

    fn apply_split(&self, region: &WorkRegion, covariate: usize, rule: &SplitRule) -> (WorkRegion, WorkRegion) {
        let schema = self.data.schema();
        let (mut lcl, mut rcl) = (Vec::new(), Vec::new());
        let (mut lmap, mut rmap) = (Vec::new(), Vec::new());
        for clause in &region.clauses {
            let (l, r) = clause.split(covariate, rule, schema);
            lmap.push(l.map(|c| {
                lcl.push(c);
                (lcl.len() - 1) as u32
            }));
            rmap.push(r.map(|c| {
                rcl.push(c);
                (rcl.len() - 1) as u32
            }));
        }
        let (mut lm, mut lc, mut rm, mut rc) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (&i, &c) in region.members.iter().zip(&region.member_clause) {
            if rule.goes_left(self.data.value(i, covariate)) {
                lm.push(i);
                lc.push(lmap[c as usize].expect("member lies inside its clause"));
            } else {
                rm.push(i);
                rc.push(rmap[c as usize].expect("member lies inside its clause"));
            }
        }
        (self.make_region(lcl, lm, lc), self.make_region(rcl, rm, rc))
    }

    /// Union of regions in the given order, with adjacent clauses merged.
    fn union(&self, parts: &[&WorkRegion]) -> WorkRegion {
        let mut clauses = Vec::new();
        let mut tagged: Vec<(usize, u32)> = Vec::new();
        let mut stats = vec![Moments::default(); self.design.columns().len()];
        for part in parts {
            let offset = clauses.len() as u32;
            clauses.extend(part.clauses.iter().cloned());
            tagged.extend(part.members.iter().zip(&part.member_clause).map(|(&i, &c)| (i, c + offset)));
            stats = merge_all(&stats, &part.stats);
        }
        tagged.sort_unstable_by_key(|&(i, _)| i);
        let (clauses, owner) = simplify_clauses(&clauses, self.data.schema());
        WorkRegion {
            clauses,
            members: tagged.iter().map(|&(i, _)| i).collect(),
            member_clause: tagged.iter().map(|&(_, c)| owner[c as usize] as u32).collect(),
            stats,
            best: OnceLock::new(),
        }
    }

    pub fn addition(&self, model: &[WorkRegion]) -> Option<(Vec<WorkRegion>, f64)> {
        let mut best: Option<(usize, Arc<Split>)> = None;
        for (r, region) in model.iter().enumerate() {
            if let Some(s) = self.best_split(region) {
                if best.as_ref().is_none_or(|(_, b)| s.improvement > b.improvement) {
                    best = Some((r, s));
                }
            }
        }
        let (r, split) = best?;
        let mut out: Vec<WorkRegion> = Vec::with_capacity(model.len() + 1);
        out.extend(model[..r].iter().cloned());
        out.push(split.left.clone());
        out.push(split.right.clone());
        out.extend(model[r + 1..].iter().cloned());
        let risk = self.model_risk(&out);
        (risk < self.model_risk(model)).then_some((out, risk))
    }

    pub fn deletion(&self, model: &[WorkRegion]) -> Option<(Vec<WorkRegion>, f64)> {
        if model.len() < 2 {
            return None;
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..model.len() {
            for j in i + 1..model.len() {
                let merged = merge_all(&model[i].stats, &model[j].stats);
                let increase =
                    self.risk_of(&merged) - self.risk_of(&model[i].stats) - self.risk_of(&model[j].stats);
                if best.is_none_or(|b| increase < b.2) {
                    best = Some((i, j, increase));
                }
            }
        }
        let (i, j, _) = best?;
        let merged = self.union(&[&model[i], &model[j]]);
        let out: Vec<WorkRegion> = model
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j)
            .map(|(k, r)| if k == i { merged.clone() } else { r.clone() })
            .collect();
        let risk = self.model_risk(&out);
        Some((out, risk))
    }

    /// Best recombination over all region pairs, without a threshold.
    pub fn substitution(&self, model: &[WorkRegion]) -> Option<(Vec<WorkRegion>, f64)> {
        if model.len() < 2 {
            return None;
        }
        let base = self.model_risk(model);
        // (i, j, pieces, group mask, risk)
        let mut best: Option<(usize, usize, Vec<WorkRegion>, usize, f64)> = None;
        for i in 0..model.len() {
            for j in i + 1..model.len() {
                let si = self.best_split(&model[i]);
                let sj = self.best_split(&model[j]);
                if si.is_none() && sj.is_none() {
                    continue;
                }
                let mut pieces: Vec<&WorkRegion> = Vec::with_capacity(4);
                match &si {
                    Some(s) => pieces.extend([&s.left, &s.right]),
                    None => pieces.push(&model[i]),
                }
                let from_i = pieces.len();
                match &sj {
                    Some(s) => pieces.extend([&s.left, &s.right]),
                    None => pieces.push(&model[j]),
                }
                let np = pieces.len();
                // Piece 0 always sits in group 0; bit p-1 of `mask` puts
                // piece p in group 1.
                let original: usize = (from_i..np).fold(0, |m, p| m | 1 << (p - 1));
                let rest = base - self.risk_of(&model[i].stats) - self.risk_of(&model[j].stats);
                for mask in 1..(1usize << (np - 1)) {
                    if mask == original {
                        continue;
                    }
                    let ncol = self.design.columns().len();
                    let (mut g0, mut g1) = (vec![Moments::default(); ncol], vec![Moments::default(); ncol]);
                    for (p, piece) in pieces.iter().enumerate() {
                        if p > 0 && mask >> (p - 1) & 1 == 1 {
                            g1 = merge_all(&g1, &piece.stats);
                        } else {
                            g0 = merge_all(&g0, &piece.stats);
                        }
                    }
                    let risk = rest + self.risk_of(&g0) + self.risk_of(&g1);
                    if best.as_ref().is_none_or(|b| risk < b.4) {
                        best = Some((i, j, pieces.iter().map(|&p| p.clone()).collect(), mask, risk));
                    }
                }
            }
        }
        let (i, j, pieces, mask, _) = best?;
        let (mut g0, mut g1): (Vec<&WorkRegion>, Vec<&WorkRegion>) = (Vec::new(), Vec::new());
        for (p, piece) in pieces.iter().enumerate() {
            if p > 0 && mask >> (p - 1) & 1 == 1 {
                g1.push(piece);
            } else {
                g0.push(piece);
            }
        }
        let (r0, r1) = (self.union(&g0), self.union(&g1));
        let mut out = model.to_vec();
        out[i] = r0;
        out[j] = r1;
        let risk = self.model_risk(&out);
        Some((out, risk))
    }
}

/// Public view of a proposed split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitProposal {
    pub covariate: usize,
    pub rule: SplitRule,
    /// Decrease in training risk.
    pub improvement: f64,
    pub left: Vec<Clause>,
    pub right: Vec<Clause>,
}

/// Best legal split of the region described by `region_clauses`: each
/// geometrically nonempty clause piece keeps at least `min_per_clause`
/// training subjects and both sides carry positive weight in every loss
/// column. Ties go to the earlier covariate, then the smaller cut.
pub fn best_split(
    region_clauses: &[Clause],
    data: &SurvivalDataset,
    loss: &LossSpec,
    g: &CensoringModel,
    config: &DsaConfig,
) -> Result<Option<SplitProposal>> {
    config.validate()?;
    let search = Search::new(data, loss, g, config.min_per_clause, config.max_cut_points)?;
    let region = search.region_from(region_clauses.to_vec());
    Ok(search.best_split(&region).map(|s| SplitProposal {
        covariate: s.covariate,
        rule: s.rule.clone(),
        improvement: s.improvement,
        left: s.left.clauses.clone(),
        right: s.right.clauses.clone(),
    }))
}

fn run_move(
    model: &PartitionModel,
    data: &SurvivalDataset,
    loss: &LossSpec,
    g: &CensoringModel,
    config: &DsaConfig,
    mv: impl Fn(&Search, &[WorkRegion]) -> Option<(Vec<WorkRegion>, f64)>,
) -> Result<Option<PartitionModel>> {
    config.validate()?;
    let search = Search::new(data, loss, g, config.min_per_clause, config.max_cut_points)?;
    let work = search.work_model(model);
    Ok(mv(&search, &work).map(|(m, _)| search.to_partition(&m)))
}

/// Splits the region whose best split lowers the risk most.
pub fn addition_move(
    model: &PartitionModel,
    data: &SurvivalDataset,
    loss: &LossSpec,
    g: &CensoringModel,
    config: &DsaConfig,
) -> Result<Option<PartitionModel>> {
    if model.size() >= config.max_regions {
        return Err(Error::invalid("model already has max_regions regions"));
    }
    run_move(model, data, loss, g, config, |s, m| s.addition(m))
}

/// Merges the pair of regions whose union raises the risk least.
pub fn deletion_move(
    model: &PartitionModel,
    data: &SurvivalDataset,
    loss: &LossSpec,
    g: &CensoringModel,
    config: &DsaConfig,
) -> Result<Option<PartitionModel>> {
    if model.size() < 2 {
        return Err(Error::invalid("deletion needs at least two regions"));
    }
    run_move(model, data, loss, g, config, |s, m| s.deletion(m))
}

/// Best two-region recombination of split region pairs, returned only when it
/// beats the input model's risk by the relative margin
/// `min_percent_difference`.
pub fn substitution_move(
    model: &PartitionModel,
    data: &SurvivalDataset,
    loss: &LossSpec,
    g: &CensoringModel,
    config: &DsaConfig,
) -> Result<Option<PartitionModel>> {
    if model.size() < 2 {
        return Err(Error::invalid("substitution needs at least two regions"));
    }
    let threshold = 1.0 - config.min_percent_difference;
    run_move(model, data, loss, g, config, |s, m| {
        let current = s.model_risk(m);
        s.substitution(m).filter(|(_, r)| *r < current * threshold)
    })
}

/// Runs the search from the single-region model and returns the best model
/// found at each size.
pub fn fit(data: &SurvivalDataset, g: &CensoringModel, config: &DsaConfig) -> Result<CandidateList> {
    config.validate()?;
    data.require_events()?;
    let search = Search::new(data, &config.loss, g, config.min_per_clause, config.max_cut_points)?;
    let root = vec![search.root()?];
    let root_risk = search.model_risk(&root);
    // best[k - 1] = (model, risk) for size k
    let mut best: Vec<(Vec<WorkRegion>, f64)> = vec![(root, root_risk)];
    let keep = 1.0 - config.min_percent_difference;
    let mut k = 1usize;
    let mut steps = 0usize;
    loop {
        steps += 1;
        if steps > MAX_STEPS {
            log::warn!("partition search stopped after {MAX_STEPS} moves");
            break;
        }
        let current = best[k - 1].0.clone();
        if k >= 2 {
            if let Some((m, r)) = search.deletion(&current) {
                if r < best[k - 2].1 * keep {
                    best[k - 2] = (m, r);
                    k -= 1;
                    continue;
                }
            }
            if let Some((m, r)) = search.substitution(&current) {
                if r < best[k - 1].1 * keep {
                    best[k - 1] = (m, r);
                    continue;
                }
            }
        }
        if k < config.max_regions {
            if let Some((m, r)) = search.addition(&current) {
                if best.len() == k {
                    best.push((m, r));
                } else if r < best[k].1 {
                    best[k] = (m, r);
                }
                k += 1;
                continue;
            }
        }
        break;
    }

    let mut candidates = Vec::with_capacity(best.len());
    let mut prev = f64::INFINITY;
    for (idx, (m, r)) in best.iter().enumerate() {
        if *r > prev {
            log::debug!("dropping sizes from {} on: risk increases", idx + 1);
            break;
        }
        prev = *r;
        candidates.push(Candidate {
            size: idx + 1,
            risk: *r,
            model: search.to_partition(m),
        });
    }
    CandidateList::new(candidates)
}
