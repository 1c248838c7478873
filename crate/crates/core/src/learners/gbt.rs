//! Gradient-boosted regression trees with leaf-limited, best-first growth.
//!
//! Each round fits a regression tree to the negative gradient of the loss.
//! Splits are searched exactly over midpoints of consecutive distinct feature
//! values, scored by squared-error reduction of the gradient. Leaf values are
//! the mean gradient (squared loss) or a one-step Newton update (logistic).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::LearnerSpec;
use crate::error::{check_len, Error, Result};
use crate::linalg::DesignMatrix;
use crate::stats::expit;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbtLoss {
    Squared,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &[f64], n: usize, row: usize) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if x[row + feature * n] <= threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// A fitted boosting ensemble. `predict_raw` returns the additive score (the
/// log-odds for the logistic loss).
#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub loss: GbtLoss,
    pub init: f64,
    pub learning_rate: f64,
    trees: Vec<Tree>,
    /// Training loss before boosting and after each kept round.
    pub train_loss: Vec<f64>,
    n_features: usize,
}

impl GbtModel {
    /// Number of rounds that changed the fit.
    pub fn effective_rounds(&self) -> usize {
        self.trees.len()
    }

    pub fn leaves_per_tree(&self) -> Vec<usize> {
        self.trees.iter().map(Tree::leaves).collect()
    }

    pub fn predict_raw(&self, x: &DesignMatrix) -> Vec<f64> {
        let n = x.nrows();
        let data = x.matrix().as_slice();
        (0..n)
            .map(|i| {
                self.init
                    + self.learning_rate
                        * self.trees.iter().map(|t| t.predict_row(data, n, i)).sum::<f64>()
            })
            .collect()
    }
}

fn mean_loss(loss: GbtLoss, y: &[f64], f: &[f64]) -> f64 {
    let s: f64 = match loss {
        GbtLoss::Squared => y.iter().zip(f).map(|(t, p)| (t - p) * (t - p)).sum(),
        GbtLoss::Logistic => y
            .iter()
            .zip(f)
            .map(|(&t, &s)| s.max(0.0) + (-s.abs()).exp().ln_1p() - t * s)
            .sum(),
    };
    s / y.len() as f64
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    gain: f64,
    feature: usize,
    /// Number of samples (in the feature's sorted order) going left.
    left_count: usize,
    threshold: f64,
}

/// A leaf under construction: its rows sorted by every feature.
struct Growing {
    node: usize,
    sorted: Vec<Vec<u32>>,
    best: Option<SplitCandidate>,
}

struct HeapEntry {
    gain: f64,
    order: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    // largest gain first; earlier leaves win ties
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.order.cmp(&self.order))
    }
}

struct TreeBuilder<'a> {
    x: &'a [f64],
    n: usize,
    d: usize,
    grad: &'a [f64],
    hess: Option<&'a [f64]>,
    min_leaf: usize,
}

impl TreeBuilder<'_> {
    fn best_split(&self, sorted: &[Vec<u32>]) -> Option<SplitCandidate> {
        let rows = &sorted[0];
        let m = rows.len();
        if m < 2 * self.min_leaf {
            return None;
        }
        let total: f64 = rows.iter().map(|&i| self.grad[i as usize]).sum();
        let base = total * total / m as f64;
        let mut best: Option<SplitCandidate> = None;
        for (f, order) in sorted.iter().enumerate() {
            let col = &self.x[f * self.n..(f + 1) * self.n];
            let mut left = 0.0;
            for pos in 0..m - 1 {
                let i = order[pos] as usize;
                left += self.grad[i];
                let nl = pos + 1;
                let nr = m - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let lo = col[i];
                let hi = col[order[pos + 1] as usize];
                if lo >= hi {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - base;
                if best.is_none_or(|b| gain > b.gain) {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(SplitCandidate {
                        gain,
                        feature: f,
                        left_count: nl,
                        threshold,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12 * (1.0 + base.abs()))
    }

    fn leaf_value(&self, rows: &[u32]) -> f64 {
        let g: f64 = rows.iter().map(|&i| self.grad[i as usize]).sum();
        match self.hess {
            None => g / rows.len() as f64,
            Some(h) => {
                let hs: f64 = rows.iter().map(|&i| h[i as usize]).sum();
                g / hs.max(1e-12)
            }
        }
    }

    /// Grows one tree; returns it together with each training row's leaf value.
    fn grow(&self, presorted: &[Vec<u32>], max_leaves: usize) -> (Tree, Vec<f64>) {
        let mut nodes = vec![Node::Leaf(0.0)];
        let mut leaves: Vec<Growing> = Vec::new();
        let root_best = self.best_split(presorted);
        leaves.push(Growing {
            node: 0,
            sorted: presorted.to_vec(),
            best: root_best,
        });
        let mut heap = BinaryHeap::new();
        if let Some(b) = root_best {
            heap.push(HeapEntry { gain: b.gain, order: 0 });
        }
        let mut goes_left = vec![false; self.n];
        let mut n_leaves = 1;
        while n_leaves < max_leaves {
            let Some(entry) = heap.pop() else { break };
            let leaf = std::mem::replace(
                &mut leaves[entry.order],
                Growing {
                    node: usize::MAX,
                    sorted: Vec::new(),
                    best: None,
                },
            );
            let split = leaf.best.expect("queued leaves carry a split");
            for (pos, &i) in leaf.sorted[split.feature].iter().enumerate() {
                goes_left[i as usize] = pos < split.left_count;
            }
            let mut ls = Vec::with_capacity(self.d);
            let mut rs = Vec::with_capacity(self.d);
            for order in &leaf.sorted {
                let (l, r): (Vec<u32>, Vec<u32>) =
                    order.iter().partition(|&&i| goes_left[i as usize]);
                ls.push(l);
                rs.push(r);
            }
            let left_id = nodes.len();
            nodes.push(Node::Leaf(0.0));
            nodes.push(Node::Leaf(0.0));
            nodes[leaf.node] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: left_id,
                right: left_id + 1,
            };
            for (node, sorted) in [(left_id, ls), (left_id + 1, rs)] {
                let best = self.best_split(&sorted);
                let order = leaves.len();
                if let Some(b) = best {
                    heap.push(HeapEntry { gain: b.gain, order });
                }
                leaves.push(Growing { node, sorted, best });
            }
            n_leaves += 1;
        }
        let mut row_values = vec![0.0; self.n];
        for leaf in leaves.iter().filter(|l| l.node != usize::MAX) {
            let rows = &leaf.sorted[0];
            let v = self.leaf_value(rows);
            nodes[leaf.node] = Node::Leaf(v);
            for &i in rows {
                row_values[i as usize] = v;
            }
        }
        (Tree { nodes }, row_values)
    }
}

/// Gradient boosting on `target` with the given loss.
///
/// For the logistic loss `target` must hold 0/1 labels of both classes.
pub fn fit_gbt(
    x: &DesignMatrix,
    target: &[f64],
    spec: &LearnerSpec,
    loss: GbtLoss,
    _seed: u64,
) -> Result<GbtModel> {
    if spec.gbt_max_leaves < 2 || spec.gbt_n_rounds < 1 {
        return Err(Error::InvalidSpec(
            "boosting needs max_leaves >= 2 and n_rounds >= 1".into(),
        ));
    }
    if !(spec.gbt_learning_rate > 0.0) || spec.gbt_min_samples_leaf < 1 {
        return Err(Error::InvalidSpec(
            "boosting needs a positive learning rate and min_samples_leaf >= 1".into(),
        ));
    }
    check_len("target length", x.nrows(), target.len())?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::DegenerateInput(
            "boosting needs at least two samples".into(),
        ));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite target".into()));
    }
    let init = match loss {
        GbtLoss::Squared => target.iter().sum::<f64>() / n as f64,
        GbtLoss::Logistic => {
            if target.iter().any(|&t| t != 0.0 && t != 1.0) {
                return Err(Error::InvalidArgument("logistic boosting needs 0/1 labels".into()));
            }
            let p = target.iter().sum::<f64>() / n as f64;
            if p == 0.0 || p == 1.0 {
                return Err(Error::DegenerateLabels);
            }
            (p / (1.0 - p)).ln()
        }
    };
    let d = x.ncols();
    let data = x.matrix().as_slice();
    let presorted: Vec<Vec<u32>> = (0..d)
        .map(|f| {
            let col = &data[f * n..(f + 1) * n];
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let lr = spec.gbt_learning_rate;
    let mut score = vec![init; n];
    let mut train_loss = vec![mean_loss(loss, target, &score)];
    let mut trees = Vec::new();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for _ in 0..spec.gbt_n_rounds {
        for i in 0..n {
            match loss {
                GbtLoss::Squared => grad[i] = target[i] - score[i],
                GbtLoss::Logistic => {
                    let p = expit(score[i]);
                    grad[i] = target[i] - p;
                    hess[i] = p * (1.0 - p);
                }
            }
        }
        let builder = TreeBuilder {
            x: data,
            n,
            d,
            grad: &grad,
            hess: (loss == GbtLoss::Logistic).then_some(&hess[..]),
            min_leaf: spec.gbt_min_samples_leaf,
        };
        let (tree, values) = builder.grow(&presorted, spec.gbt_max_leaves);
        if tree.nodes.len() == 1 && values.iter().all(|v| (v * lr).abs() < 1e-15) {
            // the gradient is (numerically) zero; further rounds cannot move the fit
            break;
        }
        for (s, v) in score.iter_mut().zip(&values) {
            *s += lr * v;
        }
        train_loss.push(mean_loss(loss, target, &score));
        trees.push(tree);
    }
    Ok(GbtModel {
        loss,
        init,
        learning_rate: lr,
        trees,
        train_loss,
        n_features: d,
    })
}
