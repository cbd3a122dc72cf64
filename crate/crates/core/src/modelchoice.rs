//! Model choice with random forests trained on a prior-predictive
//! reference table.
//!
//! The classifier votes for a model. The posterior probability of the
//! chosen model is approximated by `1 - E[misclassified | T]`, with the
//! conditional expectation estimated by a regression forest fitted to the
//! out-of-bag misclassification indicators of the reference table.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{collect_batched, Outcome};
use crate::error::{Error, Result};
use crate::params::ModelKind;
use crate::prior::PriorSpec;
use crate::samplers::{simulate_model, SimSettings};
use crate::seeding::{derive_seed, rng_from_seed, stream, task_rng, SimRng};
use crate::summaries::{summary_vector, SummaryConfig, SummaryVector};

/// Screen failures tolerated for one row before the prior is declared
/// incompatible with the `n > m` requirement.
const ROW_TRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub models: Vec<ModelKind>,
    pub labels: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub excluded: usize,
    pub screen_failures: usize,
}

impl ReferenceTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `n` prior predictive rows. Each row draws its model uniformly once, then
/// redraws parameters until the pattern has more than `m` points.
pub fn build_reference_table(
    models: &[ModelKind],
    prior: &PriorSpec,
    settings: &SimSettings,
    summary: &SummaryConfig,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<ReferenceTable> {
    if models.is_empty() || n == 0 {
        return Err(Error::InvalidParameter("need at least one model and one row".into()));
    }
    let got = collect_batched(
        n,
        usize::MAX,
        |row| {
            let mut rng = task_rng(seed, &[stream::REFERENCE, row as u64]);
            let label = rng.random_range(0..models.len());
            let kind = models[label];
            for tries in 0..ROW_TRIES {
                let theta = prior.sample_free(kind, &mut rng)?;
                let x = simulate_model(kind, &theta, settings, &mut rng)?;
                if x.len() > m {
                    let t = summary_vector(&x, summary)?;
                    return Ok(Outcome::Keep((label, t.finite.then_some(t.values), tries)));
                }
            }
            Err(Error::ScreenFailure { failed: ROW_TRIES, total: ROW_TRIES, m })
        },
        |_, _| None,
    )
    .map_err(|e| e.context("modelchoice::build_reference_table"))?;
    let screen_failures = got.items.iter().map(|r| r.2).sum();
    let (mut labels, mut rows) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for (label, values, _) in got.items {
        if let Some(v) = values {
            labels.push(label);
            rows.push(v);
        }
    }
    let excluded = n - rows.len();
    if excluded > 0 {
        log::info!("reference table: excluded {excluded} rows with non-finite summaries");
    }
    Ok(ReferenceTable {
        models: models.to_vec(),
        labels,
        rows,
        excluded,
        screen_failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Axis-aligned binary tree stored as an arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf(value)] }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, Copy)]
enum Task {
    /// Gini impurity, majority leaves; `priority[c]` breaks ties (lower wins).
    Classify { n_classes: usize },
    /// Squared error, mean leaves, nodes smaller than `min_split` not split.
    Regress { min_split: usize },
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    task: Task,
    mtry: usize,
    priority: &'a [usize],
}

impl Grower<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        match self.task {
            Task::Classify { n_classes } => {
                let mut counts = vec![0usize; n_classes];
                for &i in idx {
                    counts[self.y[i] as usize] += 1;
                }
                majority(&counts, self.priority) as f64
            }
            Task::Regress { .. } => idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64,
        }
    }

    fn is_terminal(&self, idx: &[usize]) -> bool {
        let first = self.y[idx[0]];
        if idx.iter().all(|&i| self.y[i] == first) {
            return true;
        }
        match self.task {
            Task::Classify { .. } => idx.len() < 2,
            Task::Regress { min_split } => idx.len() < min_split,
        }
    }

    /// Best `(feature, threshold, gain)` among `mtry` random features.
    fn best_split(&self, idx: &[usize], rng: &mut SimRng) -> Option<(usize, f64)> {
        let d = self.x[0].len();
        let features = sample_indices(rng, d, self.mtry.min(d));
        let mut best: Option<(usize, f64, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
        for f in features.iter() {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            if let Some((threshold, score)) = self.scan(&pairs) {
                if best.is_none_or(|(_, _, s)| score < s) {
                    best = Some((f, threshold, score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    /// Lowest child impurity (weighted Gini sum or SSE) over cut points
    /// between distinct sorted values.
    fn scan(&self, pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
        let n = pairs.len();
        let mut best: Option<(f64, f64)> = None;
        match self.task {
            Task::Classify { n_classes } => {
                let mut right = vec![0usize; n_classes];
                for p in pairs {
                    right[p.1 as usize] += 1;
                }
                let mut left = vec![0usize; n_classes];
                let sumsq = |c: &[usize]| c.iter().map(|&v| (v * v) as f64).sum::<f64>();
                let (mut ls, mut rs) = (0.0, sumsq(&right));
                for i in 0..n - 1 {
                    let c = pairs[i].1 as usize;
                    // Incremental sums of squared counts.
                    ls += (2 * left[c] + 1) as f64;
                    rs -= (2 * right[c] - 1) as f64;
                    left[c] += 1;
                    right[c] -= 1;
                    if pairs[i].0 == pairs[i + 1].0 {
                        continue;
                    }
                    let (nl, nr) = ((i + 1) as f64, (n - i - 1) as f64);
                    // n_l * gini_l + n_r * gini_r
                    let score = nl - ls / nl + nr - rs / nr;
                    if best.is_none_or(|(_, s)| score < s) {
                        best = Some((midpoint(pairs[i].0, pairs[i + 1].0), score));
                    }
                }
            }
            Task::Regress { .. } => {
                let total: f64 = pairs.iter().map(|p| p.1).sum();
                let mut lsum = 0.0;
                for i in 0..n - 1 {
                    lsum += pairs[i].1;
                    if pairs[i].0 == pairs[i + 1].0 {
                        continue;
                    }
                    let (nl, nr) = ((i + 1) as f64, (n - i - 1) as f64);
                    let rsum = total - lsum;
                    // SSE up to a constant: -(S_l^2/n_l + S_r^2/n_r).
                    let score = -(lsum * lsum / nl + rsum * rsum / nr);
                    if best.is_none_or(|(_, s)| score < s) {
                        best = Some((midpoint(pairs[i].0, pairs[i + 1].0), score));
                    }
                }
            }
        }
        best
    }

    fn grow(&self, idx: Vec<usize>, rng: &mut SimRng) -> Tree {
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut stack = vec![(0usize, idx)];
        while let Some((slot, idx)) = stack.pop() {
            let split = if self.is_terminal(&idx) { None } else { self.best_split(&idx, rng) };
            match split {
                None => nodes[slot] = Node::Leaf(self.leaf_value(&idx)),
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf(0.0));
                    nodes.push(Node::Leaf(0.0));
                    nodes[slot] = Node::Split { feature, threshold, left, right };
                    stack.push((right, r));
                    stack.push((left, l));
                }
            }
        }
        Tree { nodes }
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Guard against rounding onto the upper value.
    if m < b {
        m
    } else {
        a
    }
}

/// Index of the largest count; ties go to the lowest `priority` value.
fn majority(counts: &[usize], priority: &[usize]) -> usize {
    let mut best = 0;
    for c in 1..counts.len() {
        if counts[c] > counts[best] || (counts[c] == counts[best] && priority[c] < priority[best]) {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestSettings {
    pub n_trees: usize,
    /// Features tried per split; `None` means ceil(sqrt(d)) for
    /// classification and max(1, d/3) for regression.
    pub mtry: Option<usize>,
    pub regression_min_split: usize,
}

impl Default for ForestSettings {
    fn default() -> Self {
        Self { n_trees: 500, mtry: None, regression_min_split: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
    /// Class tie-break order (lower wins).
    pub priority: Vec<usize>,
    /// Out-of-bag class per row; `None` for rows that were in every bootstrap.
    pub oob_predictions: Vec<Option<usize>>,
    pub oob_error: f64,
    /// Only one class occurred in training.
    pub degenerate: bool,
}

impl Forest {
    pub fn votes(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_classes];
        for t in &self.trees {
            v[t.predict(x) as usize] += 1.0;
        }
        let total = self.trees.len() as f64;
        v.iter_mut().for_each(|c| *c /= total);
        v
    }
}

fn bootstrap(n: usize, rng: &mut SimRng) -> (Vec<usize>, Vec<bool>) {
    let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut inbag = vec![false; n];
    for &i in &idx {
        inbag[i] = true;
    }
    (idx, inbag)
}

/// Classification forest: bootstrap rows, Gini splits, pure leaves.
pub fn train_forest(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    priority: &[usize],
    settings: &ForestSettings,
    seed: u64,
) -> Result<Forest> {
    let n = x.len();
    if n == 0 || labels.len() != n || priority.len() != n_classes {
        return Err(Error::Mismatch("forest inputs have inconsistent sizes".into()));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::InvalidParameter("label out of range".into()));
    }
    let d = x[0].len();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let first = labels[0];
    let degenerate = labels.iter().all(|&l| l == first);
    if degenerate {
        log::warn!("reference table has a single class; forest always predicts it");
        let trees = vec![Tree::leaf(first as f64); settings.n_trees.max(1)];
        return Ok(Forest {
            trees,
            n_classes,
            priority: priority.to_vec(),
            oob_predictions: vec![Some(first); n],
            oob_error: 0.0,
            degenerate,
        });
    }
    let mtry = settings.mtry.unwrap_or(((d as f64).sqrt().ceil() as usize).max(1));
    let grower = Grower { x, y: &y, task: Task::Classify { n_classes }, mtry, priority };
    let grown: Vec<(Tree, Vec<bool>)> = (0..settings.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, &[stream::FOREST, 0, t as u64]));
            let (idx, inbag) = bootstrap(n, &mut rng);
            (grower.grow(idx, &mut rng), inbag)
        })
        .collect();
    let mut oob_votes = vec![vec![0usize; n_classes]; n];
    for (tree, inbag) in &grown {
        for i in 0..n {
            if !inbag[i] {
                oob_votes[i][tree.predict(&x[i]) as usize] += 1;
            }
        }
    }
    let oob_predictions: Vec<Option<usize>> = oob_votes
        .iter()
        .map(|v| (v.iter().sum::<usize>() > 0).then(|| majority(v, priority)))
        .collect();
    let (wrong, counted) = oob_predictions
        .iter()
        .zip(labels)
        .filter_map(|(p, &l)| p.map(|p| (p != l) as usize))
        .fold((0, 0), |(w, c), e| (w + e, c + 1));
    let oob_error = if counted > 0 { wrong as f64 / counted as f64 } else { f64::NAN };
    Ok(Forest {
        trees: grown.into_iter().map(|(t, _)| t).collect(),
        n_classes,
        priority: priority.to_vec(),
        oob_predictions,
        oob_error,
        degenerate,
    })
}

/// Regression forest with squared-error splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub trees: Vec<Tree>,
}

impl RegressionForest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn train_regression_forest(
    x: &[Vec<f64>],
    y: &[f64],
    settings: &ForestSettings,
    seed: u64,
) -> Result<RegressionForest> {
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(Error::Mismatch("forest inputs have inconsistent sizes".into()));
    }
    let d = x[0].len();
    let mtry = settings.mtry.unwrap_or((d / 3).max(1));
    let grower =
        Grower { x, y, task: Task::Regress { min_split: settings.regression_min_split }, mtry, priority: &[] };
    let trees = (0..settings.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, &[stream::FOREST, 1, t as u64]));
            let (idx, _) = bootstrap(n, &mut rng);
            grower.grow(idx, &mut rng)
        })
        .collect();
    Ok(RegressionForest { trees })
}

/// Class forest plus the error-regression forest for one reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChooser {
    pub models: Vec<ModelKind>,
    pub forest: Forest,
    pub error_forest: Option<RegressionForest>,
}

/// Prefer fewer free parameters, then the lower model index.
pub fn simplicity_priority(models: &[ModelKind]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by_key(|&i| (models[i].dim(), i));
    let mut priority = vec![0; models.len()];
    for (rank, &i) in order.iter().enumerate() {
        priority[i] = rank;
    }
    priority
}

pub fn train_chooser(table: &ReferenceTable, settings: &ForestSettings, seed: u64) -> Result<ModelChooser> {
    let priority = simplicity_priority(&table.models);
    let forest = train_forest(&table.rows, &table.labels, table.models.len(), &priority, settings, seed)?;
    let error_forest = if forest.degenerate {
        None
    } else {
        // Rows never out of bag get no indicator and are left out.
        let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = table
            .rows
            .iter()
            .zip(&table.labels)
            .zip(&forest.oob_predictions)
            .filter_map(|((x, &l), p)| p.map(|p| (x.clone(), (p != l) as u8 as f64)))
            .unzip();
        Some(train_regression_forest(&xs, &ys, settings, seed)?)
    };
    Ok(ModelChooser { models: table.models.clone(), forest, error_forest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub selected: ModelKind,
    pub index: usize,
    pub vote_fractions: Vec<f64>,
    pub posterior_probability: f64,
    /// The top vote count was shared and the simpler model was taken.
    pub tie_broken: bool,
}

pub fn choose_model(chooser: &ModelChooser, t_obs: &SummaryVector) -> Result<ModelChoice> {
    if !t_obs.finite {
        return Err(Error::InvalidParameter("observed summary vector has non-finite entries".into()));
    }
    let votes = chooser.forest.votes(&t_obs.values);
    let counts: Vec<usize> = votes.iter().map(|v| (v * chooser.forest.trees.len() as f64).round() as usize).collect();
    let index = majority(&counts, &chooser.forest.priority);
    let tie_broken = counts.iter().filter(|&&c| c == counts[index]).count() > 1;
    if tie_broken {
        log::warn!("model choice vote tie; taking the simpler model {}", chooser.models[index]);
    }
    let posterior_probability = match &chooser.error_forest {
        Some(f) => (1.0 - f.predict(&t_obs.values)).clamp(0.0, 1.0),
        None => 1.0,
    };
    Ok(ModelChoice { selected: chooser.models[index], index, vote_fractions: votes, posterior_probability, tie_broken })
}
