//! Random forests grown from scratch, one-vs-rest balancing and the classifier chain.
//!
//! Each of the five forests answers "is this pair of class `i`?". With the chain
//! enabled, forest `i` also sees the probabilities of forests `0..i` as extra
//! input columns, computed in-sample on the training corpus.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comparator::{FEATURE_NAMES, FEATURE_SCHEMA_VERSION};
use crate::discovery::resolve_class;
use crate::error::{Error, Result};
use crate::evalkit::{aggregate_binary, confusion, ConfusionMatrix};
use crate::exec::Execution;
use crate::oracle::{class_counts, QualityClass};

pub const CLASS_COUNT: usize = 5;

/// Default downgrade threshold used when resolving probabilities to a class.
pub const DEFAULT_DOWNGRADE_THRESHOLD: f64 = 0.10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: usize,
    /// Quantile-binned threshold candidates per feature.
    pub max_split_candidates: usize,
    /// Features tried per split; `None` means `ceil(sqrt(width))`.
    pub feature_subset_size: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    /// Tuned defaults for the forest predicting `class`.
    pub fn for_class(class: QualityClass) -> Self {
        let i = class.index();
        ForestParams {
            tree_count: [120, 100, 120, 80, 120][i],
            max_depth: [25, 25, 30, 30, 20][i],
            max_split_candidates: [55, 40, 40, 60, 45][i],
            feature_subset_size: None,
            bootstrap: true,
            seed: 0x5eed_0000 + i as u64,
        }
    }

    pub fn chain_defaults() -> [ForestParams; CLASS_COUNT] {
        QualityClass::ALL.map(Self::for_class)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 || self.max_depth == 0 || self.max_split_candidates < 2 {
            return Err(Error::InvalidParameter(
                "tree_count and max_depth must be >= 1, max_split_candidates >= 2".into(),
            ));
        }
        if self.feature_subset_size == Some(0) {
            return Err(Error::InvalidParameter("feature_subset_size must be >= 1".into()));
        }
        Ok(())
    }

    fn subset_size(&self, width: usize) -> usize {
        self.feature_subset_size
            .unwrap_or_else(|| (width as f64).sqrt().ceil() as usize)
            .clamp(1, width.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        positive_fraction: f64,
    },
}

/// Nodes in an arena; the root is node 0. Samples with `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { positive_fraction } => return *positive_fraction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub width: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean leaf positive fraction over all trees.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                found: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

/// Split candidates per feature and every sample's bin for each feature.
struct Binned {
    thresholds: Vec<Vec<f64>>,
    /// Column-major: `bins[f][i]` is the number of thresholds of `f` below `x[i][f]`.
    bins: Vec<Vec<u16>>,
}

fn candidate_thresholds(mut values: Vec<f64>, max_candidates: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    if distinct.len() <= max_candidates {
        return distinct.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();
    }
    // cut between the order statistics at each quantile; inside a run of ties
    // the cut keeps the whole run on the left
    let n = values.len();
    let mut out: Vec<f64> = (1..max_candidates)
        .map(|j| {
            let k = j * n / max_candidates;
            let (lo, hi) = (values[k - 1], values[k]);
            if lo < hi {
                lo + (hi - lo) / 2.0
            } else {
                hi
            }
        })
        .collect();
    out.dedup();
    // a threshold at the maximum sends everything left
    if out.last() == values.last() {
        out.pop();
    }
    out
}

impl Binned {
    fn new(rows: &[&[f64]], width: usize, max_candidates: usize) -> Self {
        let max_candidates = max_candidates.min(u16::MAX as usize);
        let thresholds: Vec<Vec<f64>> = (0..width)
            .map(|f| candidate_thresholds(rows.iter().map(|r| r[f]).collect(), max_candidates))
            .collect();
        let bins = thresholds
            .iter()
            .enumerate()
            .map(|(f, t)| {
                rows.iter()
                    .map(|r| t.partition_point(|&th| th < r[f]) as u16)
                    .collect()
            })
            .collect();
        Binned { thresholds, bins }
    }
}

struct TreeBuilder<'a> {
    binned: &'a Binned,
    labels: &'a [bool],
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, sample: Vec<u32>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let n = sample.len();
        let pos = sample.iter().filter(|&&i| self.labels[i as usize]).count();
        self.nodes.push(TreeNode::Leaf {
            positive_fraction: pos as f64 / n as f64,
        });
        if depth >= self.params.max_depth || pos == 0 || pos == n || n < 2 {
            return id;
        }
        let Some((feature, bin)) = self.best_split(&sample, pos) else {
            return id;
        };
        let column = &self.binned.bins[feature];
        let (left, right): (Vec<u32>, Vec<u32>) = sample
            .into_iter()
            .partition(|&i| column[i as usize] as usize <= bin);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id as usize] = TreeNode::Split {
            feature: feature as u32,
            threshold: self.binned.thresholds[feature][bin],
            left: l,
            right: r,
        };
        id
    }

    /// Best (feature, last-left-bin) by Gini impurity among a random feature subset.
    fn best_split(&mut self, sample: &[u32], pos: usize) -> Option<(usize, usize)> {
        let width = self.binned.bins.len();
        let features = rand::seq::index::sample(&mut self.rng, width, self.mtry);
        let n = sample.len() as f64;
        let parent = {
            let p = pos as f64;
            let q = n - p;
            (p * p + q * q) / n
        };
        // maximizing sum of (p^2 + q^2) / n over children == minimizing weighted Gini
        let mut best: Option<(usize, usize, f64)> = None;
        let mut total = Vec::new();
        let mut positive = Vec::new();
        for f in features.iter() {
            let cuts = self.binned.thresholds[f].len();
            if cuts == 0 {
                continue;
            }
            total.clear();
            total.resize(cuts + 1, 0u32);
            positive.clear();
            positive.resize(cuts + 1, 0u32);
            let column = &self.binned.bins[f];
            for &i in sample {
                let b = column[i as usize] as usize;
                total[b] += 1;
                positive[b] += u32::from(self.labels[i as usize]);
            }
            let (mut nl, mut pl) = (0f64, 0f64);
            for b in 0..cuts {
                nl += total[b] as f64;
                pl += positive[b] as f64;
                let nr = n - nl;
                if nl == 0.0 || nr == 0.0 {
                    continue;
                }
                let pr = pos as f64 - pl;
                let (ql, qr) = (nl - pl, nr - pr);
                let score = (pl * pl + ql * ql) / nl + (pr * pr + qr * qr) / nr;
                if score > parent + 1e-12 && best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((f, b, score));
                }
            }
        }
        best.map(|(f, b, _)| (f, b))
    }
}

/// Trains a bagged forest of CART trees on binary labels.
pub fn train_forest(
    rows: &[&[f64]],
    labels: &[bool],
    params: &ForestParams,
    exec: Execution,
) -> Result<Forest> {
    params.validate()?;
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch(rows.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if rows.len() < 2 || positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateTrainingSet);
    }
    let width = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::WidthMismatch {
            expected: width,
            found: bad.len(),
        });
    }
    if rows.iter().flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("training features must be finite".into()));
    }

    let binned = Binned::new(rows, width, params.max_split_candidates);
    let n = rows.len();
    let mtry = params.subset_size(width);
    let trees = exec.map_range(params.tree_count, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(t as u64);
        let sample: Vec<u32> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n) as u32).collect()
        } else {
            (0..n as u32).collect()
        };
        let mut builder = TreeBuilder {
            binned: &binned,
            labels,
            params,
            mtry,
            rng,
            nodes: Vec::new(),
        };
        builder.grow(sample, 0);
        Tree {
            nodes: builder.nodes,
        }
    });
    Ok(Forest { width, trees })
}

/// Training rows for one forest of the chain: corpus indices and their binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct OvrSet {
    pub class: QualityClass,
    pub positives: Vec<usize>,
    /// May repeat indices when the negative pool is smaller than the positive class.
    pub negatives: Vec<usize>,
}

impl OvrSet {
    pub fn rows_and_labels(&self) -> (Vec<usize>, Vec<bool>) {
        let rows = self.positives.iter().chain(&self.negatives).copied().collect();
        let labels = std::iter::repeat_n(true, self.positives.len())
            .chain(std::iter::repeat_n(false, self.negatives.len()))
            .collect();
        (rows, labels)
    }
}

/// Splits `need` across pools as evenly as capacities allow. Leftover units
/// go to lower pool indices first.
fn water_fill(need: usize, capacities: &[usize]) -> Vec<usize> {
    let mut quota = vec![0usize; capacities.len()];
    let mut remaining = need;
    loop {
        let open: Vec<usize> = (0..capacities.len())
            .filter(|&i| quota[i] < capacities[i])
            .collect();
        if remaining == 0 || open.is_empty() {
            return quota;
        }
        let share = remaining / open.len();
        if share == 0 {
            for &i in open.iter().take(remaining) {
                quota[i] += 1;
            }
            return quota;
        }
        for &i in &open {
            let add = share.min(capacities[i] - quota[i]);
            quota[i] += add;
            remaining -= add;
        }
    }
}

/// One balanced positive/negative set per class.
///
/// Negatives are spread as uniformly as possible over the other classes. When
/// the other classes hold fewer records than the positive class, all of them
/// are used and the remainder is drawn with replacement, round-robin over the
/// negative classes.
pub fn build_ovr_sets(labels: &[QualityClass], seed: u64) -> Result<Vec<OvrSet>> {
    let counts = class_counts(labels);
    let missing: Vec<u8> = (0..CLASS_COUNT)
        .filter(|&c| counts[c] == 0)
        .map(|c| c as u8)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingClasses(missing));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); CLASS_COUNT];
    for (i, l) in labels.iter().enumerate() {
        members[l.index()].push(i);
    }

    Ok(QualityClass::ALL
        .iter()
        .map(|&class| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(class.index() as u64);
            let others: Vec<usize> = (0..CLASS_COUNT).filter(|&c| c != class.index()).collect();
            let need = counts[class.index()];
            let capacities: Vec<usize> = others.iter().map(|&c| counts[c]).collect();
            let quota = water_fill(need, &capacities);

            let mut negatives = Vec::with_capacity(need);
            for (&c, &q) in others.iter().zip(&quota) {
                let mut pool = members[c].clone();
                pool.shuffle(&mut rng);
                negatives.extend(pool.into_iter().take(q));
            }
            let mut k = 0usize;
            while negatives.len() < need {
                let pool = &members[others[k % others.len()]];
                negatives.push(pool[rng.gen_range(0..pool.len())]);
                k += 1;
            }
            negatives.sort_unstable();
            OvrSet {
                class,
                positives: members[class.index()].clone(),
                negatives,
            }
        })
        .collect())
}

/// Independent per-class probabilities; they need not sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities(pub [f64; CLASS_COUNT]);

impl ClassProbabilities {
    pub fn get(&self, c: QualityClass) -> f64 {
        self.0[c.index()]
    }

    /// Highest-probability class; ties go to the lower class.
    pub fn argmax(&self) -> QualityClass {
        let mut best = 0;
        for i in 1..CLASS_COUNT {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        QualityClass::ALL[best]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub params: [ForestParams; CLASS_COUNT],
    pub chain_enabled: bool,
    pub downgrade_threshold: f64,
    pub balance_seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            params: ForestParams::chain_defaults(),
            chain_enabled: true,
            downgrade_threshold: DEFAULT_DOWNGRADE_THRESHOLD,
            balance_seed: 7,
        }
    }
}

impl ChainConfig {
    /// Same configuration with every forest reseeded from `seed`.
    pub fn reseeded(mut self, seed: u64) -> Self {
        for (i, p) in self.params.iter_mut().enumerate() {
            p.seed = seed.wrapping_mul(31).wrapping_add(i as u64);
        }
        self.balance_seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub base_width: usize,
    pub chain_enabled: bool,
    pub downgrade_threshold: f64,
    /// How distance vectors must be normalized before prediction.
    pub normalization: String,
    pub balance_seed: u64,
    pub params: Vec<ForestParams>,
    pub forests: Vec<Forest>,
}

pub const NORMALIZATION_POLICY: &str =
    "z-score, population sd, fitted over query and candidate profiles; sd 0 maps to 0";

impl ChainModel {
    pub fn input_width(&self, class: usize) -> usize {
        if self.chain_enabled {
            self.base_width + class
        } else {
            self.base_width
        }
    }

    /// SHA-256 over the serialized model.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex(&Sha256::digest(bytes))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn check_rows(rows: &[&[f64]], labels: &[QualityClass], width: usize) -> Result<()> {
    if rows.len() != labels.len() {
        return Err(Error::LengthMismatch(rows.len(), labels.len()));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::WidthMismatch {
            expected: width,
            found: bad.len(),
        });
    }
    Ok(())
}

/// Trains the five forests in chain order.
pub fn train_chain(
    rows: &[&[f64]],
    labels: &[QualityClass],
    config: &ChainConfig,
    exec: Execution,
) -> Result<ChainModel> {
    let base_width = FEATURE_NAMES.len();
    check_rows(rows, labels, base_width)?;
    if !(config.downgrade_threshold > 0.0 && config.downgrade_threshold < 1.0) {
        return Err(Error::InvalidParameter("downgrade threshold must be in (0, 1)".into()));
    }
    let sets = build_ovr_sets(labels, config.balance_seed)?;

    // rows extended with the probabilities of the forests trained so far
    let mut augmented: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    let mut forests = Vec::with_capacity(CLASS_COUNT);
    for (i, set) in sets.iter().enumerate() {
        let (idx, binary) = set.rows_and_labels();
        let train_rows: Vec<&[f64]> = idx
            .iter()
            .map(|&r| {
                if config.chain_enabled {
                    augmented[r].as_slice()
                } else {
                    rows[r]
                }
            })
            .collect();
        let forest = train_forest(&train_rows, &binary, &config.params[i], exec)?;
        if config.chain_enabled && i + 1 < CLASS_COUNT {
            let probs = exec.map(&augmented, |r| forest.predict(r).expect("width checked"));
            for (r, p) in augmented.iter_mut().zip(probs) {
                r.push(p);
            }
        }
        forests.push(forest);
    }

    Ok(ChainModel {
        schema_version: FEATURE_SCHEMA_VERSION,
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        base_width,
        chain_enabled: config.chain_enabled,
        downgrade_threshold: config.downgrade_threshold,
        normalization: NORMALIZATION_POLICY.to_string(),
        balance_seed: config.balance_seed,
        params: config.params.to_vec(),
        forests,
    })
}

/// Per-class probabilities for one distance vector.
pub fn chain_predict(model: &ChainModel, x: &[f64]) -> Result<ClassProbabilities> {
    if x.len() != model.base_width {
        return Err(Error::WidthMismatch {
            expected: model.base_width,
            found: x.len(),
        });
    }
    let mut p = [0.0; CLASS_COUNT];
    if model.chain_enabled {
        let mut input = x.to_vec();
        for (i, forest) in model.forests.iter().enumerate() {
            p[i] = forest.predict(&input)?;
            input.push(p[i]);
        }
    } else {
        for (i, forest) in model.forests.iter().enumerate() {
            p[i] = forest.predict(x)?;
        }
    }
    Ok(ClassProbabilities(p))
}

/// Predicts and resolves every row with the model's downgrade threshold.
pub fn predict_classes(model: &ChainModel, rows: &[&[f64]], exec: Execution) -> Result<Vec<QualityClass>> {
    exec.map(rows, |r| {
        chain_predict(model, r).map(|p| resolve_class(&p, model.downgrade_threshold))
    })
    .into_iter()
    .collect()
}

/// Stratified assignment of indices to `k` folds. Fold sizes differ by at most
/// one overall and per class.
pub fn stratified_folds(labels: &[QualityClass], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || labels.len() < k {
        return Err(Error::InvalidParameter(format!(
            "need 2 <= k <= corpus size, got k={k} for {} records",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for class in QualityClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified train/test split; `test_fraction` of every class is held out.
pub fn stratified_split(
    labels: &[QualityClass],
    test_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in QualityClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        let held = (members.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&members[..held]);
        train.extend_from_slice(&members[held..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub validation: Vec<usize>,
    pub confusion: ConfusionMatrix,
    pub binary: ConfusionMatrix,
}

/// k-fold cross-validation: each fold is held out once (an 80/20 partition for k = 5).
pub fn cross_validate(
    rows: &[&[f64]],
    labels: &[QualityClass],
    k: usize,
    config: &ChainConfig,
    seed: u64,
    exec: Execution,
) -> Result<Vec<FoldReport>> {
    check_rows(rows, labels, FEATURE_NAMES.len())?;
    let folds = stratified_folds(labels, k, seed)?;
    folds
        .iter()
        .enumerate()
        .map(|(fold, validation)| {
            let mut held = vec![false; rows.len()];
            for &i in validation {
                held[i] = true;
            }
            let train: Vec<usize> = (0..rows.len()).filter(|&i| !held[i]).collect();
            let train_rows: Vec<&[f64]> = train.iter().map(|&i| rows[i]).collect();
            let train_labels: Vec<QualityClass> = train.iter().map(|&i| labels[i]).collect();
            let model = train_chain(&train_rows, &train_labels, config, exec)?;
            let val_rows: Vec<&[f64]> = validation.iter().map(|&i| rows[i]).collect();
            let truth: Vec<QualityClass> = validation.iter().map(|&i| labels[i]).collect();
            let predicted = predict_classes(&model, &val_rows, exec)?;
            let cm = confusion(&predicted, &truth)?;
            Ok(FoldReport {
                fold,
                validation: validation.clone(),
                binary: aggregate_binary(&cm),
                confusion: cm,
            })
        })
        .collect()
}
