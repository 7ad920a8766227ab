//! The two learners used around the protocol: a ridge one-hot classifier
//! (central model) and a split-budgeted CART decision tree (interpretable
//! model), both deterministic for fixed data and parameters.

use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ridge_solve;
use crate::matrix::DataMatrix;

// ---------------------------------------------------------------------------
// Ridge one-hot classifier
// ---------------------------------------------------------------------------

/// Linear classifier trained by ridge regression on one-hot targets.
/// Prediction is the argmax of the class scores; scores are regression
/// outputs, not probabilities, and their rows need not sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeClassifier {
    pub weights: DataMatrix,
    pub intercept: Vec<f64>,
    pub lambda: f64,
    pub class_count: usize,
}

/// Fit a ridge classifier on integer labels in `0..class_count`.
///
/// Features and targets are centered so the intercept is unpenalized.
pub fn ridge_fit(
    x: &DataMatrix,
    y: &[usize],
    class_count: usize,
    lambda: f64,
) -> Result<RidgeClassifier> {
    if x.rows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if class_count == 0 || y.iter().any(|&l| l >= class_count) {
        return Err(Error::InvalidParam("labels outside 0..class_count".into()));
    }
    if lambda <= 0.0 || lambda.is_nan() {
        return Err(Error::InvalidParam(format!(
            "ridge classifier needs lambda > 0, got {lambda}"
        )));
    }
    let n = x.rows();
    let onehot = {
        let mut t = DataMatrix::zeros(n, class_count);
        for (i, &l) in y.iter().enumerate() {
            t.set(i, l, 1.0);
        }
        t
    };
    let x_mean = x.col_means();
    let t_mean = onehot.col_means();
    let mut xc = x.clone();
    for i in 0..n {
        for (j, m) in x_mean.iter().enumerate() {
            xc.set(i, j, x.get(i, j) - m);
        }
    }
    let mut tc = onehot.clone();
    for i in 0..n {
        for (j, m) in t_mean.iter().enumerate() {
            tc.set(i, j, onehot.get(i, j) - m);
        }
    }
    let weights = ridge_solve(&xc, &tc, lambda)?;
    let mut intercept = t_mean;
    for (j, b) in intercept.iter_mut().enumerate() {
        for (f, m) in x_mean.iter().enumerate() {
            *b -= m * weights.get(f, j);
        }
    }
    Ok(RidgeClassifier {
        weights,
        intercept,
        lambda,
        class_count,
    })
}

impl RidgeClassifier {
    /// Raw class scores, `rows x class_count`.
    pub fn scores(&self, x: &DataMatrix) -> Result<DataMatrix> {
        let mut s = x.matmul(&self.weights)?;
        for i in 0..s.rows() {
            for (j, b) in self.intercept.iter().enumerate() {
                s.set(i, j, s.get(i, j) + b);
            }
        }
        Ok(s)
    }

    /// Argmax labels, ties to the lowest class index.
    pub fn predict(&self, x: &DataMatrix) -> Result<Vec<usize>> {
        let s = self.scores(x)?;
        Ok((0..s.rows()).map(|i| argmax(s.row(i))).collect())
    }

    /// Per-feature weight mass: sum of |w| over classes. Used when a
    /// linear model has to supply a top-t feature set.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.weights.rows()];
        for (f, total) in imp.iter_mut().enumerate() {
            for j in 0..self.weights.cols() {
                *total += self.weights.get(f, j).abs();
            }
        }
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            imp.iter_mut().for_each(|v| *v /= total);
        }
        imp
    }
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = j;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Decision tree
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training-sample count per class in this leaf.
        class_counts: Vec<usize>,
        prediction: usize,
    },
}

/// CART classifier grown best-first under a budget of internal nodes.
///
/// The budget counts branch-node splits, so `max_splits = 5` allows at
/// most five internal nodes regardless of depth. Expansion order is by
/// largest Gini impurity decrease; all tie-breaks are deterministic
/// (first the earlier-created node, then the lower feature index, then
/// the smaller threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    pub max_splits: usize,
    pub class_count: usize,
    importances: Vec<f64>,
}

struct SplitCandidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct PendingLeaf {
    node_id: usize,
    rows: Vec<usize>,
    split: Option<SplitCandidate>,
}

/// Gini impurity of a count vector.
fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

fn class_counts(rows: &[usize], y: &[usize], class_count: usize) -> Vec<usize> {
    let mut counts = vec![0usize; class_count];
    for &i in rows {
        counts[y[i]] += 1;
    }
    counts
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (j, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = j;
        }
    }
    best
}

/// Best split of `rows` by impurity decrease, scanning midpoints between
/// consecutive distinct sorted values of every feature.
fn best_split(
    x: &DataMatrix,
    y: &[usize],
    rows: &[usize],
    class_count: usize,
) -> Option<SplitCandidate> {
    let total = rows.len();
    if total < 2 {
        return None;
    }
    let parent_counts = class_counts(rows, y, class_count);
    let parent_gini = gini(&parent_counts, total);
    if parent_gini == 0.0 {
        return None;
    }
    let mut best: Option<SplitCandidate> = None;
    let mut ordered: Vec<usize> = Vec::with_capacity(total);
    for feature in 0..x.cols() {
        ordered.clear();
        ordered.extend_from_slice(rows);
        ordered.sort_by(|&a, &b| {
            x.get(a, feature)
                .partial_cmp(&x.get(b, feature))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut left_counts = vec![0usize; class_count];
        for w in 0..total - 1 {
            let i = ordered[w];
            left_counts[y[i]] += 1;
            let v = x.get(i, feature);
            let v_next = x.get(ordered[w + 1], feature);
            if v == v_next {
                continue;
            }
            let n_left = w + 1;
            let n_right = total - n_left;
            let right_counts: Vec<usize> = parent_counts
                .iter()
                .zip(&left_counts)
                .map(|(&p, &l)| p - l)
                .collect();
            let weighted = (n_left as f64 * gini(&left_counts, n_left)
                + n_right as f64 * gini(&right_counts, n_right))
                / total as f64;
            let gain = parent_gini - weighted;
            let threshold = 0.5 * (v + v_next);
            let better = match &best {
                None => gain > 1e-15,
                Some(b) => {
                    gain > b.gain + 1e-15
                        || ((gain - b.gain).abs() <= 1e-15
                            && (feature, threshold) < (b.feature, b.threshold))
                }
            };
            if better {
                best = Some(SplitCandidate {
                    gain,
                    feature,
                    threshold,
                });
            }
        }
    }
    best
}

/// Grow a tree on `(x, y)` with at most `max_splits` internal nodes.
pub fn tree_fit(
    x: &DataMatrix,
    y: &[usize],
    class_count: usize,
    max_splits: usize,
) -> Result<DecisionTree> {
    if x.rows() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::InvalidParam("cannot fit a tree on zero rows".into()));
    }
    if class_count == 0 || y.iter().any(|&l| l >= class_count) {
        return Err(Error::InvalidParam("labels outside 0..class_count".into()));
    }

    let all_rows: Vec<usize> = (0..x.rows()).collect();
    let root_counts = class_counts(&all_rows, y, class_count);
    let mut nodes = vec![TreeNode::Leaf {
        prediction: majority(&root_counts),
        class_counts: root_counts,
    }];
    let mut importances = vec![0.0f64; x.cols()];
    let mut frontier = vec![PendingLeaf {
        node_id: 0,
        split: best_split(x, y, &all_rows, class_count),
        rows: all_rows,
    }];
    let total = x.rows() as f64;

    let mut splits_used = 0;
    while splits_used < max_splits {
        // Best-first: largest gain; earlier node id on ties.
        let mut pick: Option<usize> = None;
        for (idx, leaf) in frontier.iter().enumerate() {
            let Some(split) = &leaf.split else { continue };
            let better = match pick {
                None => true,
                Some(p) => {
                    let cur = frontier[p].split.as_ref().unwrap();
                    split.gain > cur.gain + 1e-15
                        || ((split.gain - cur.gain).abs() <= 1e-15
                            && leaf.node_id < frontier[p].node_id)
                }
            };
            if better {
                pick = Some(idx);
            }
        }
        let Some(pick) = pick else { break };
        let leaf = frontier.swap_remove(pick);
        let split = leaf.split.expect("picked leaves carry a split");

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = leaf
            .rows
            .iter()
            .partition(|&&i| x.get(i, split.feature) <= split.threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
        importances[split.feature] += split.gain * leaf.rows.len() as f64 / total;

        let left_counts = class_counts(&left_rows, y, class_count);
        let right_counts = class_counts(&right_rows, y, class_count);
        let left_id = nodes.len();
        nodes.push(TreeNode::Leaf {
            prediction: majority(&left_counts),
            class_counts: left_counts,
        });
        let right_id = nodes.len();
        nodes.push(TreeNode::Leaf {
            prediction: majority(&right_counts),
            class_counts: right_counts,
        });
        nodes[leaf.node_id] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
        };
        frontier.push(PendingLeaf {
            node_id: left_id,
            split: best_split(x, y, &left_rows, class_count),
            rows: left_rows,
        });
        frontier.push(PendingLeaf {
            node_id: right_id,
            split: best_split(x, y, &right_rows, class_count),
            rows: right_rows,
        });
        splits_used += 1;
    }

    let sum: f64 = importances.iter().sum();
    if sum > 0.0 {
        importances.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(DecisionTree {
        nodes,
        root: 0,
        max_splits,
        class_count,
        importances,
    })
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut node = self.root;
        loop {
            match &self.nodes[node] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                TreeNode::Leaf { prediction, .. } => return *prediction,
            }
        }
    }

    pub fn predict(&self, x: &DataMatrix) -> Result<Vec<usize>> {
        let needed = self.required_features();
        if x.cols() < needed {
            return Err(Error::ShapeMismatch(format!(
                "tree references feature {} but input has {} columns",
                needed - 1,
                x.cols()
            )));
        }
        Ok((0..x.rows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    fn required_features(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { feature, .. } => Some(feature + 1),
                TreeNode::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn split_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Internal { .. }))
            .count()
    }

    /// Impurity-decrease importances, normalized to sum 1 (all zero for
    /// a constant tree).
    pub fn feature_importances(&self) -> &[f64] {
        &self.importances
    }

    /// Indices of the `t` most important features, importance descending,
    /// index ascending on ties.
    pub fn top_features(&self, t: usize) -> Vec<usize> {
        top_t(&self.importances, t)
    }

    /// Human-readable indented rendering.
    pub fn render_text(&self, feature_names: Option<&[String]>) -> String {
        let mut out = String::new();
        self.render_node(self.root, 0, feature_names, &mut out);
        out
    }

    fn render_node(
        &self,
        node: usize,
        depth: usize,
        names: Option<&[String]>,
        out: &mut String,
    ) {
        let pad = "  ".repeat(depth);
        match &self.nodes[node] {
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                let name = names
                    .and_then(|n| n.get(*feature).cloned())
                    .unwrap_or_else(|| format!("x{feature}"));
                let _ = writeln!(out, "{pad}if {name} <= {threshold:.6}:");
                self.render_node(*left, depth + 1, names, out);
                let _ = writeln!(out, "{pad}else:");
                self.render_node(*right, depth + 1, names, out);
            }
            TreeNode::Leaf {
                prediction,
                class_counts,
            } => {
                let _ = writeln!(out, "{pad}class {prediction} {class_counts:?}");
            }
        }
    }

    /// DOT graph rendering for documentation.
    pub fn render_dot(&self, feature_names: Option<&[String]>) -> String {
        let mut out = String::from("digraph tree {\n  node [shape=box];\n");
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let name = feature_names
                        .and_then(|n| n.get(*feature).cloned())
                        .unwrap_or_else(|| format!("x{feature}"));
                    let _ = writeln!(out, "  n{id} [label=\"{name} <= {threshold:.4}\"];");
                    let _ = writeln!(out, "  n{id} -> n{left} [label=\"yes\"];");
                    let _ = writeln!(out, "  n{id} -> n{right} [label=\"no\"];");
                }
                TreeNode::Leaf {
                    prediction,
                    class_counts,
                } => {
                    let _ =
                        writeln!(out, "  n{id} [label=\"class {prediction}\\n{class_counts:?}\"];");
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Indices of the `t` largest entries, value descending, index ascending
/// on ties.
pub fn top_t(importances: &[f64], t: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| {
        importances[b]
            .partial_cmp(&importances[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(t);
    order
}

/// Convenience used by the pipeline: fit a tree, warning when the
/// pseudo-labels collapsed to a single class.
pub fn tree_fit_with_degenerate_warning(
    x: &DataMatrix,
    y: &[usize],
    class_count: usize,
    max_splits: usize,
) -> Result<DecisionTree> {
    let distinct = {
        let mut seen = vec![false; class_count];
        y.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct <= 1 {
        warn!("distillation labels are single-class; returning a constant model");
    }
    tree_fit(x, y, class_count, max_splits)
}
