//! Gradient-boosted regression trees with second-order split gain.
//!
//! Trees are grown level by level with exact greedy split enumeration over
//! presorted feature columns. Multiclass targets use the softmax objective
//! with one tree per class per round; real targets use squared error.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boosting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    /// Defaults of the reference library's scikit-learn estimator wrapper
    /// (100 trees, step 0.1, depth 3), which is how pipelines construct it.
    fn default() -> Self {
        Self {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    /// Defaults of the reference library's native training interface.
    pub fn native() -> Self {
        Self {
            learning_rate: 0.3,
            max_depth: 6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rounds < 1 {
            return Err(Error::InvalidArgument("n_rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument("learning_rate must lie in (0, 1]".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::InvalidArgument("max_depth must be >= 1".into()));
        }
        if !(self.min_child_weight >= 0.0) || !(self.l2_lambda >= 0.0) {
            return Err(Error::InvalidArgument(
                "min_child_weight and l2_lambda must be non-negative".into(),
            ));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidArgument("subsample must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Multiclass { n_classes: usize },
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    /// Split feature, or `u32::MAX` for a leaf.
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    /// Leaf output (already scaled by the learning rate).
    pub value: f64,
}

impl Node {
    const LEAF: u32 = u32::MAX;

    fn leaf(value: f64) -> Self {
        Node {
            feature: Self::LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == Self::LEAF
    }
}

/// A regression tree with axis-aligned splits; rows with `x < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    fn eval(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf() {
                return node.value;
            }
            i = if row(node.feature as usize) < node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub task: Task,
    pub n_features: usize,
    /// One entry for regression, one per class for multiclass.
    pub base_score: Vec<f64>,
    /// Round-major; for multiclass the tree of round `r`, class `c` is at `r * k + c`.
    pub trees: Vec<Tree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictions {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl GbtModel {
    fn trees_per_round(&self) -> usize {
        match self.task {
            Task::Multiclass { n_classes } => n_classes,
            Task::Regression => 1,
        }
    }

    /// Raw additive scores, row-major `n × trees_per_round`.
    pub fn margins(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.nrows() > 0 && x.ncols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: x.ncols(),
            });
        }
        let n = x.nrows();
        let k = self.trees_per_round();
        let data = x.as_slice();
        let mut out = Vec::with_capacity(n * k);
        for r in 0..n {
            let row = |f: usize| data[f * n + r];
            for c in 0..k {
                let mut s = self.base_score[c];
                for tree in self.trees.iter().skip(c).step_by(k) {
                    s += tree.eval(row);
                }
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Predictions> {
        let margins = self.margins(x)?;
        Ok(match self.task {
            Task::Regression => Predictions::Values(margins),
            Task::Multiclass { n_classes } => Predictions::Classes(
                margins
                    .chunks(n_classes)
                    .map(|scores| {
                        let mut best = 0;
                        for (c, &s) in scores.iter().enumerate() {
                            if s > scores[best] {
                                best = c;
                            }
                        }
                        best
                    })
                    .collect(),
            ),
        })
    }
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
        let n = x.nrows().max(1);
        return Err(Error::Degenerate(format!(
            "non-finite feature value at row {}, column {}",
            pos % n,
            pos / n
        )));
    }
    Ok(())
}

/// Softmax boosting for `n_classes` classes; labels are class codes `< n_classes`.
pub fn train_classifier(x: &DMatrix<f64>, labels: &[usize], n_classes: usize, params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    let mut present = vec![false; n_classes];
    labels.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Degenerate(
            "classification needs at least two distinct classes".into(),
        ));
    }
    check_finite(x)?;

    let n = x.nrows();
    let k = n_classes;
    let mut builder = TreeBuilder::new(x, params);
    let mut margins = vec![0.0; n * k];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut probs = vec![0.0; n * k];
    let mut trees = Vec::with_capacity(params.n_rounds * k);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..params.n_rounds {
        for r in 0..n {
            let m = &margins[r * k..(r + 1) * k];
            let p = &mut probs[r * k..(r + 1) * k];
            let max = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..k {
                p[c] = (m[c] - max).exp();
                z += p[c];
            }
            p.iter_mut().for_each(|v| *v /= z);
        }
        let sample = builder.draw_sample(&mut rng);
        for c in 0..k {
            for r in 0..n {
                let p = probs[r * k + c];
                let y = if labels[r] == c { 1.0 } else { 0.0 };
                grad[r] = p - y;
                hess[r] = (2.0 * p * (1.0 - p)).max(1e-16);
            }
            let (tree, leaf_of) = builder.build(&grad, &hess, sample.as_deref());
            for r in 0..n {
                margins[r * k + c] += tree.nodes[leaf_of[r] as usize].value;
            }
            trees.push(tree);
        }
    }

    Ok(GbtModel {
        task: Task::Multiclass { n_classes },
        n_features: x.ncols(),
        base_score: vec![0.0; k],
        trees,
    })
}

/// Squared-error boosting; the base score is the training mean.
pub fn train_regressor(x: &DMatrix<f64>, y: &[f64], params: &GbtParams) -> Result<GbtModel> {
    params.validate()?;
    if y.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::Empty("regression needs at least 2 rows".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite regression target".into()));
    }
    check_finite(x)?;

    let n = y.len();
    let base = order_free_mean(y);
    let mut builder = TreeBuilder::new(x, params);
    let mut margins = vec![base; n];
    let mut grad = vec![0.0; n];
    let hess = vec![1.0; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    for _ in 0..params.n_rounds {
        for r in 0..n {
            grad[r] = margins[r] - y[r];
        }
        let sample = builder.draw_sample(&mut rng);
        let (tree, leaf_of) = builder.build(&grad, &hess, sample.as_deref());
        for r in 0..n {
            margins[r] += tree.nodes[leaf_of[r] as usize].value;
        }
        trees.push(tree);
    }

    Ok(GbtModel {
        task: Task::Regression,
        n_features: x.ncols(),
        base_score: vec![base],
        trees,
    })
}

/// Mean that does not depend on the order of `values` (summed in sorted order,
/// relative to the first sorted value so constant inputs are reproduced exactly).
fn order_free_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let anchor = sorted[0];
    let shift: f64 = sorted.iter().map(|v| v - anchor).sum();
    anchor + shift / sorted.len() as f64
}

#[derive(Clone, Copy)]
struct NodeStats {
    g: f64,
    h: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: NodeStats,
}

/// A node still being grown: its rows occupy `start..end` of every feature segment.
#[derive(Clone, Copy)]
struct OpenNode {
    id: u32,
    start: usize,
    end: usize,
    stats: NodeStats,
}

const MIN_SPLIT_GAIN: f64 = 1e-6;

/// Reusable state for growing trees on a fixed training matrix.
///
/// For every feature the open rows are kept sorted by value, grouped into one
/// contiguous segment per open node, so a node's split search is a linear scan.
struct TreeBuilder<'a> {
    data: &'a [f64],
    n: usize,
    n_features: usize,
    params: GbtParams,
    order: Vec<Vec<u32>>,
    sorted_values: Vec<Vec<f64>>,
    // scratch reused across trees
    idx: Vec<Vec<u32>>,
    val: Vec<Vec<f64>>,
    prefix_g: Vec<f64>,
    prefix_h: Vec<f64>,
    gains: Vec<f64>,
    goes_left: Vec<bool>,
    tmp_idx: Vec<u32>,
    tmp_val: Vec<f64>,
}

impl<'a> TreeBuilder<'a> {
    fn new(x: &'a DMatrix<f64>, params: &GbtParams) -> Self {
        let n = x.nrows();
        let n_features = x.ncols();
        let data = x.as_slice();
        let mut order = Vec::with_capacity(n_features);
        let mut sorted_values = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let col = &data[f * n..(f + 1) * n];
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            sorted_values.push(idx.iter().map(|&i| col[i as usize]).collect());
            order.push(idx);
        }
        TreeBuilder {
            data,
            n,
            n_features,
            params: *params,
            order,
            sorted_values,
            idx: vec![Vec::with_capacity(n); n_features],
            val: vec![Vec::with_capacity(n); n_features],
            prefix_g: vec![0.0; n],
            prefix_h: vec![0.0; n],
            gains: vec![0.0; n],
            goes_left: vec![false; n],
            tmp_idx: Vec::with_capacity(n),
            tmp_val: Vec::with_capacity(n),
        }
    }

    fn draw_sample(&self, rng: &mut ChaCha8Rng) -> Option<Vec<bool>> {
        if self.params.subsample >= 1.0 {
            return None;
        }
        Some(
            (0..self.n)
                .map(|_| rng.random::<f64>() < self.params.subsample)
                .collect(),
        )
    }

    fn leaf_weight(&self, s: NodeStats) -> f64 {
        -s.g / (s.h + self.params.l2_lambda) * self.params.learning_rate
    }

    /// Best split of one open node along one feature, if any beats `floor`.
    fn best_on_feature(&mut self, node: &OpenNode, f: usize, gh: &[[f64; 2]], floor: f64) -> Option<Candidate> {
        let len = node.end - node.start;
        let idx = &self.idx[f][node.start..node.end];
        let val = &self.val[f][node.start..node.end];
        let pg = &mut self.prefix_g[..len];
        let ph = &mut self.prefix_h[..len];
        // Blocked accumulation shortens the loop-carried dependency chain.
        let (mut cg, mut ch) = (0.0, 0.0);
        let mut t = 0;
        while t + 4 <= len {
            let [g0, h0] = gh[idx[t] as usize];
            let [g1, h1] = gh[idx[t + 1] as usize];
            let [g2, h2] = gh[idx[t + 2] as usize];
            let [g3, h3] = gh[idx[t + 3] as usize];
            let (g01, h01) = (g0 + g1, h0 + h1);
            let (g23, h23) = (g2 + g3, h2 + h3);
            pg[t] = cg + g0;
            ph[t] = ch + h0;
            pg[t + 1] = cg + g01;
            ph[t + 1] = ch + h01;
            pg[t + 2] = cg + (g01 + g2);
            ph[t + 2] = ch + (h01 + h2);
            cg += g01 + g23;
            ch += h01 + h23;
            pg[t + 3] = cg;
            ph[t + 3] = ch;
            t += 4;
        }
        while t < len {
            let [g, h] = gh[idx[t] as usize];
            cg += g;
            ch += h;
            pg[t] = cg;
            ph[t] = ch;
            t += 1;
        }
        let (total_g, total_h) = (node.stats.g, node.stats.h);
        let lambda = self.params.l2_lambda;
        let mcw = self.params.min_child_weight;
        let gains = &mut self.gains[..len - 1];
        for t in 0..len - 1 {
            let gl = pg[t];
            let hl = ph[t];
            let gr = total_g - gl;
            let hr = total_h - hl;
            let ok = val[t] != val[t + 1] && hl >= mcw && hr >= mcw;
            let (dl, dr) = (hl + lambda, hr + lambda);
            let gain = (gl * gl * dr + gr * gr * dl) / (dl * dr);
            gains[t] = if ok { gain } else { f64::NEG_INFINITY };
        }
        let best = max_value(gains);
        let best_t = if best > floor {
            gains.iter().position(|&g| g == best).unwrap_or(usize::MAX)
        } else {
            usize::MAX
        };
        (best_t != usize::MAX).then(|| Candidate {
            gain: best,
            feature: f,
            threshold: 0.5 * (val[best_t] + val[best_t + 1]),
            left: NodeStats {
                g: pg[best_t],
                h: ph[best_t],
            },
        })
    }

    /// Grows one tree. Returns it with, for every training row, the index of
    /// the leaf the row lands in.
    fn build(&mut self, grad: &[f64], hess: &[f64], sample: Option<&[bool]>) -> (Tree, Vec<u32>) {
        let n = self.n;
        let mcw = self.params.min_child_weight;
        let lambda = self.params.l2_lambda;

        for f in 0..self.n_features {
            let (idx, val) = (&mut self.idx[f], &mut self.val[f]);
            idx.clear();
            val.clear();
            match sample {
                None => {
                    idx.extend_from_slice(&self.order[f]);
                    val.extend_from_slice(&self.sorted_values[f]);
                }
                Some(mask) => {
                    for (t, &r) in self.order[f].iter().enumerate() {
                        if mask[r as usize] {
                            idx.push(r);
                            val.push(self.sorted_values[f][t]);
                        }
                    }
                }
            }
        }

        // Root statistics, summed in the sorted order of the first feature.
        let mut root = NodeStats { g: 0.0, h: 0.0 };
        for &r in &self.idx[0] {
            root.g += grad[r as usize];
            root.h += hess[r as usize];
        }

        let gh: Vec<[f64; 2]> = grad.iter().zip(hess).map(|(&g, &h)| [g, h]).collect();
        let mut nodes = vec![Node::leaf(self.leaf_weight(root))];
        let mut open = vec![OpenNode {
            id: 0,
            start: 0,
            end: self.idx[0].len(),
            stats: root,
        }];
        let mut depth = 0;
        while depth < self.params.max_depth && !open.is_empty() {
            let mut next = Vec::with_capacity(open.len() * 2);
            for node in open {
                if node.stats.h < 2.0 * mcw || node.end - node.start < 2 {
                    continue;
                }
                let parent_score = node.stats.g * node.stats.g / (node.stats.h + lambda);
                let mut best: Option<Candidate> = None;
                for f in 0..self.n_features {
                    let floor = best.map_or(parent_score + MIN_SPLIT_GAIN, |b| b.gain);
                    if let Some(c) = self.best_on_feature(&node, f, &gh, floor) {
                        best = Some(c);
                    }
                }
                let Some(c) = best else { continue };

                let left = c.left;
                let right = NodeStats {
                    g: node.stats.g - left.g,
                    h: node.stats.h - left.h,
                };
                let lid = nodes.len() as u32;
                nodes.push(Node::leaf(self.leaf_weight(left)));
                nodes.push(Node::leaf(self.leaf_weight(right)));
                let parent = &mut nodes[node.id as usize];
                parent.feature = c.feature as u32;
                parent.threshold = c.threshold;
                parent.left = lid;
                parent.right = lid + 1;

                if depth + 1 == self.params.max_depth {
                    continue;
                }
                let col = &self.data[c.feature * n..(c.feature + 1) * n];
                for &r in &self.idx[0][node.start..node.end] {
                    self.goes_left[r as usize] = col[r as usize] < c.threshold;
                }
                let mut n_left = 0;
                for f in 0..self.n_features {
                    n_left = stable_partition(
                        &mut self.idx[f][node.start..node.end],
                        &mut self.val[f][node.start..node.end],
                        &self.goes_left,
                        &mut self.tmp_idx,
                        &mut self.tmp_val,
                    );
                }
                let mid = node.start + n_left;
                next.push(OpenNode {
                    id: lid,
                    start: node.start,
                    end: mid,
                    stats: left,
                });
                next.push(OpenNode {
                    id: lid + 1,
                    start: mid,
                    end: node.end,
                    stats: right,
                });
            }
            open = next;
            depth += 1;
        }

        let tree = Tree { nodes };
        let data = self.data;
        let leaf_of = (0..n)
            .map(|r| {
                let mut i = 0usize;
                loop {
                    let node = &tree.nodes[i];
                    if node.is_leaf() {
                        return i as u32;
                    }
                    i = if data[node.feature as usize * n + r] < node.threshold {
                        node.left as usize
                    } else {
                        node.right as usize
                    };
                }
            })
            .collect();
        (tree, leaf_of)
    }
}

/// Maximum of `values` (NEG_INFINITY when empty); lane-wise so it vectorizes.
fn max_value(values: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut lanes = [f64::NEG_INFINITY; LANES];
    let chunks = values.chunks_exact(LANES);
    let rest = chunks.remainder();
    for chunk in chunks {
        for i in 0..LANES {
            lanes[i] = if chunk[i] > lanes[i] { chunk[i] } else { lanes[i] };
        }
    }
    let mut best = f64::NEG_INFINITY;
    for &v in lanes.iter().chain(rest) {
        if v > best {
            best = v;
        }
    }
    best
}

/// Stable partition of a segment into rows going left, then rows going right.
/// Returns the number of left rows.
fn stable_partition(
    idx: &mut [u32],
    val: &mut [f64],
    goes_left: &[bool],
    tmp_idx: &mut Vec<u32>,
    tmp_val: &mut Vec<f64>,
) -> usize {
    let len = idx.len();
    tmp_idx.resize(len, 0);
    tmp_val.resize(len, 0.0);
    let (mut w, mut rw) = (0, 0);
    for t in 0..len {
        let r = idx[t];
        let v = val[t];
        let left = goes_left[r as usize] as usize;
        idx[w] = r;
        val[w] = v;
        tmp_idx[rw] = r;
        tmp_val[rw] = v;
        w += left;
        rw += 1 - left;
    }
    idx[w..].copy_from_slice(&tmp_idx[..rw]);
    val[w..].copy_from_slice(&tmp_val[..rw]);
    w
}
