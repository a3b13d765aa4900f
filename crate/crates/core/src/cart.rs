//! Binary regression tree under the IPCW-L2 loss, grown greedily and pruned
//! by weakest-link cost complexity.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Covariate, SurvivalDataset};
use crate::dsa::{Candidate, CandidateList, Search, WorkRegion};
use crate::error::{Error, Result};
use crate::loss::{LossSpec, TimeScale};
use crate::partition::{Clause, PartitionModel, Region, SplitRule};
use crate::survival::CensoringModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartConfig {
    /// Minimum subjects per leaf.
    pub min_node: usize,
    /// Minimum subjects in a node considered for splitting.
    pub min_split: usize,
    pub max_leaves: usize,
    /// A split must lower the training risk by this fraction of the root risk.
    pub complexity: f64,
    pub scale: TimeScale,
    pub max_cut_points: usize,
}

impl Default for CartConfig {
    fn default() -> Self {
        CartConfig {
            min_node: 15,
            min_split: 30,
            max_leaves: 10,
            complexity: 0.01,
            scale: TimeScale::Log,
            max_cut_points: 200,
        }
    }
}

impl CartConfig {
    pub fn loss(&self) -> LossSpec {
        LossSpec::ipcw_l2().with_scale(self.scale)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_node < 1 || self.max_leaves < 1 || self.max_cut_points < 1 {
            return Err(Error::invalid("min_node, max_leaves and max_cut_points must be positive"));
        }
        if !(self.complexity >= 0.0) {
            return Err(Error::invalid("complexity must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        prediction: f64,
        /// Training risk contribution of the node.
        risk: f64,
        n: usize,
    },
    Internal {
        covariate: usize,
        split: SplitRule,
        prediction: f64,
        risk: f64,
        n: usize,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn prediction(&self) -> f64 {
        match self {
            TreeNode::Leaf { prediction, .. } | TreeNode::Internal { prediction, .. } => *prediction,
        }
    }

    pub fn risk(&self) -> f64 {
        match self {
            TreeNode::Leaf { risk, .. } | TreeNode::Internal { risk, .. } => *risk,
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Sum of leaf risks.
    pub fn subtree_risk(&self) -> f64 {
        match self {
            TreeNode::Leaf { risk, .. } => *risk,
            TreeNode::Internal { left, right, .. } => left.subtree_risk() + right.subtree_risk(),
        }
    }

    fn as_leaf(&self) -> TreeNode {
        match self {
            TreeNode::Leaf { .. } => self.clone(),
            TreeNode::Internal {
                prediction, risk, n, ..
            } => TreeNode::Leaf {
                prediction: *prediction,
                risk: *risk,
                n: *n,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub schema: Vec<Covariate>,
    pub root: TreeNode,
}

impl Tree {
    pub fn leaves(&self) -> usize {
        self.root.leaves()
    }

    pub fn risk(&self) -> f64 {
        self.root.subtree_risk()
    }

    pub fn predict(&self, w: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Internal {
                    covariate,
                    split,
                    left,
                    right,
                    ..
                } => node = if split.goes_left(w[*covariate]) { left } else { right },
            }
        }
    }

    /// One single-clause region per leaf, in left-to-right order.
    pub fn to_partition(&self) -> PartitionModel {
        fn walk(node: &TreeNode, clause: Clause, schema: &[Covariate], out: &mut Vec<Region>) {
            match node {
                TreeNode::Leaf { prediction, .. } => out.push(Region {
                    clauses: vec![clause],
                    prediction: vec![*prediction],
                    mean_survival: None,
                }),
                TreeNode::Internal {
                    covariate,
                    split,
                    left,
                    right,
                    ..
                } => {
                    let (l, r) = clause.split(*covariate, split, schema);
                    let l = l.expect("tree splits leave both children nonempty");
                    let r = r.expect("tree splits leave both children nonempty");
                    walk(left, l, schema, out);
                    walk(right, r, schema, out);
                }
            }
        }
        let mut regions = Vec::new();
        walk(&self.root, Clause::unconstrained(), &self.schema, &mut regions);
        PartitionModel::new(self.schema.clone(), regions).expect("tree leaves form a valid model")
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn rule_text(schema: &[Covariate], j: usize, rule: &SplitRule, left: bool) -> String {
            let name = &schema[j].name;
            match rule {
                SplitRule::Threshold(s) => format!("{name} {} {s}", if left { "<=" } else { ">" }),
                SplitRule::Levels(set) => {
                    let levels: Vec<String> = set.iter().map(|&l| schema[j].format_value(l as f64)).collect();
                    format!("{name} {} {{{}}}", if left { "in" } else { "not in" }, levels.join(","))
                }
            }
        }
        fn walk(node: &TreeNode, depth: usize, label: &str, schema: &[Covariate], f: &mut fmt::Formatter<'_>) -> fmt::Result {
            let pad = "  ".repeat(depth);
            match node {
                TreeNode::Leaf { prediction, n, .. } => {
                    writeln!(f, "{pad}{label} n={n} prediction={prediction:.6} *")
                }
                TreeNode::Internal {
                    covariate,
                    split,
                    prediction,
                    n,
                    left,
                    right,
                    ..
                } => {
                    writeln!(f, "{pad}{label} n={n} prediction={prediction:.6}")?;
                    walk(left, depth + 1, &rule_text(schema, *covariate, split, true), schema, f)?;
                    walk(right, depth + 1, &rule_text(schema, *covariate, split, false), schema, f)
                }
            }
        }
        walk(&self.root, 0, "root", &self.schema, f)
    }
}

struct GrowNode {
    region: WorkRegion,
    split: Option<(usize, SplitRule, usize, usize)>,
}

/// Grows the tree best-first: the leaf with the largest admissible risk
/// reduction is split until `max_leaves` is reached or no split lowers the
/// risk by `complexity` times the root risk.
pub fn grow(data: &SurvivalDataset, g: &CensoringModel, config: &CartConfig) -> Result<Tree> {
    config.validate()?;
    data.require_events()?;
    let search = Search::new(data, &config.loss(), g, config.min_node, config.max_cut_points)?;
    let root = search.root()?;
    let root_risk = search.risk_of(&root.stats);
    let mut nodes = vec![GrowNode { region: root, split: None }];
    let mut leaves = vec![0usize];
    while leaves.len() < config.max_leaves {
        let mut best: Option<(usize, std::sync::Arc<crate::dsa::Split>)> = None;
        for (pos, &id) in leaves.iter().enumerate() {
            if nodes[id].region.members.len() < config.min_split {
                continue;
            }
            if let Some(s) = search.best_split(&nodes[id].region) {
                if best.as_ref().is_none_or(|(_, b)| s.improvement > b.improvement) {
                    best = Some((pos, s));
                }
            }
        }
        let Some((pos, split)) = best else { break };
        if split.improvement < config.complexity * root_risk {
            break;
        }
        let id = leaves[pos];
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(GrowNode {
            region: split.left.clone(),
            split: None,
        });
        nodes.push(GrowNode {
            region: split.right.clone(),
            split: None,
        });
        nodes[id].split = Some((split.covariate, split.rule.clone(), l, r));
        leaves.splice(pos..=pos, [l, r]);
    }

    fn build(nodes: &[GrowNode], id: usize, search: &Search) -> TreeNode {
        let region = &nodes[id].region;
        let prediction = region.stats[0].mean;
        let risk = search.risk_of(&region.stats);
        let n = region.members.len();
        match &nodes[id].split {
            None => TreeNode::Leaf { prediction, risk, n },
            Some((covariate, rule, l, r)) => TreeNode::Internal {
                covariate: *covariate,
                split: rule.clone(),
                prediction,
                risk,
                n,
                left: Box::new(build(nodes, *l, search)),
                right: Box::new(build(nodes, *r, search)),
            },
        }
    }
    Ok(Tree {
        schema: data.schema().to_vec(),
        root: build(&nodes, 0, &search),
    })
}

/// One pruned subtree on the weakest-link path.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunedTree {
    pub leaves: usize,
    pub risk: f64,
    pub tree: Tree,
}

/// Weakest-link pruning: repeatedly collapses the internal node with the
/// smallest risk increase per removed leaf (ties to the first node in
/// preorder). Returns the subtrees in ascending leaf count, the full tree
/// last.
pub fn prune_path(tree: &Tree) -> Vec<PrunedTree> {
    fn weakest(node: &TreeNode, counter: &mut usize, best: &mut Option<(f64, usize)>) {
        if let TreeNode::Internal { left, right, risk, .. } = node {
            let id = *counter;
            *counter += 1;
            let alpha = (risk - node.subtree_risk()) / (node.leaves() - 1) as f64;
            if best.is_none_or(|(b, _)| alpha < b) {
                *best = Some((alpha, id));
            }
            weakest(left, counter, best);
            weakest(right, counter, best);
        }
    }
    fn collapse(node: &TreeNode, counter: &mut usize, target: usize) -> TreeNode {
        match node {
            TreeNode::Leaf { .. } => node.clone(),
            TreeNode::Internal {
                covariate,
                split,
                prediction,
                risk,
                n,
                left,
                right,
            } => {
                let id = *counter;
                *counter += 1;
                if id == target {
                    return node.as_leaf();
                }
                let left = Box::new(collapse(left, counter, target));
                let right = Box::new(collapse(right, counter, target));
                TreeNode::Internal {
                    covariate: *covariate,
                    split: split.clone(),
                    prediction: *prediction,
                    risk: *risk,
                    n: *n,
                    left,
                    right,
                }
            }
        }
    }

    let mut path = vec![PrunedTree {
        leaves: tree.leaves(),
        risk: tree.risk(),
        tree: tree.clone(),
    }];
    let mut current = tree.root.clone();
    loop {
        let mut best = None;
        weakest(&current, &mut 0, &mut best);
        let Some((_, target)) = best else { break };
        current = collapse(&current, &mut 0, target);
        let t = Tree {
            schema: tree.schema.clone(),
            root: current.clone(),
        };
        path.push(PrunedTree {
            leaves: t.leaves(),
            risk: t.risk(),
            tree: t,
        });
    }
    path.reverse();
    path
}

/// Grows and prunes, returning one candidate per leaf count on the path.
pub fn fit(data: &SurvivalDataset, g: &CensoringModel, config: &CartConfig) -> Result<CandidateList> {
    let tree = grow(data, g, config)?;
    let candidates = prune_path(&tree)
        .into_iter()
        .map(|p| Candidate {
            size: p.leaves,
            risk: p.risk,
            model: p.tree.to_partition(),
        })
        .collect();
    CandidateList::new(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn data(n: usize, step: bool) -> SurvivalDataset {
        let subjects = (1..=n)
            .map(|i| Subject {
                covariates: vec![i as f64, ((i * 7) % 5) as f64],
                time: if step && i > n / 2 { 8.0 } else { 1.0 } + 0.01 * (i % 3) as f64,
                event: true,
            })
            .collect();
        SurvivalDataset::new(vec![Covariate::numeric("W1"), Covariate::numeric("W2")], subjects).unwrap()
    }

    #[test]
    fn constant_outcome_single_leaf() {
        let subjects = (0..80)
            .map(|i| Subject {
                covariates: vec![i as f64, 0.0],
                time: 3.0,
                event: true,
            })
            .collect();
        let d = SurvivalDataset::new(vec![Covariate::numeric("W1"), Covariate::numeric("W2")], subjects).unwrap();
        let t = grow(&d, &CensoringModel::uncensored(), &CartConfig::default()).unwrap();
        assert_eq!(t.leaves(), 1);
        assert_eq!(prune_path(&t).len(), 1);
    }

    #[test]
    fn min_split_gate() {
        let t = grow(&data(29, true), &CensoringModel::uncensored(), &CartConfig::default()).unwrap();
        assert_eq!(t.leaves(), 1);
    }

    #[test]
    fn first_split_at_step() {
        let t = grow(&data(100, true), &CensoringModel::uncensored(), &CartConfig::default()).unwrap();
        match &t.root {
            TreeNode::Internal { covariate, split, .. } => {
                assert_eq!(*covariate, 0);
                assert_eq!(*split, SplitRule::Threshold(50.5));
            }
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn partition_view_predicts_identically() {
        let d = data(120, true);
        let t = grow(&d, &CensoringModel::uncensored(), &CartConfig { complexity: 0.0, ..Default::default() }).unwrap();
        let m = t.to_partition();
        assert_eq!(m.size(), t.leaves());
        for s in d.subjects() {
            assert_eq!(m.predict_value(&s.covariates).unwrap(), t.predict(&s.covariates));
        }
    }

    #[test]
    fn path_risk_nonincreasing() {
        let d = data(200, true);
        let t = grow(&d, &CensoringModel::uncensored(), &CartConfig { complexity: 0.0, ..Default::default() }).unwrap();
        let path = prune_path(&t);
        assert!(path.windows(2).all(|w| w[0].leaves < w[1].leaves && w[1].risk <= w[0].risk + 1e-12));
        assert_eq!(path[0].leaves, 1);
        assert!(format!("{t}").starts_with("root"));
    }
}
