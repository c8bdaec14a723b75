//! CART regression/classification trees over sparse rows.
//!
//! Splits maximize the weighted sum-of-squares reduction of a per-row target.
//! With 0/1 targets this equals the weighted Gini decrease (binary Gini is
//! twice the Bernoulli variance), so the forest and boosting share one
//! builder.
//!
//! Rows missing a feature take value 0. For each node, features that have a
//! nonzero value on some node row are candidates; the rest are constant on
//! the node and can never split it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textfeat::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Rows with `value <= threshold` go left.
    pub fn predict(&self, row: &SparseVector) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row.get(*feature as usize) <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features evaluated per node; `None` evaluates every candidate.
    pub max_features: Option<usize>,
}

pub struct TreeInput<'a> {
    pub rows: &'a [SparseVector],
    pub targets: &'a [f64],
    /// Rows with zero weight are excluded from the tree.
    pub weights: &'a [f64],
    pub dimension: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: u32,
    pub threshold: f64,
    /// `S_L^2 / W_L + S_R^2 / W_R - S^2 / W`, the weighted sum-of-squares reduction.
    pub gain: f64,
}

const MIN_GAIN: f64 = 1e-12;

struct Scratch {
    buckets: Vec<Vec<(f64, u32)>>,
    touched: Vec<u32>,
}

/// Grows one tree. `leaf_value` maps a leaf's row indices to its output.
/// Gains are accumulated into `importances` per feature.
pub fn grow<F>(
    input: &TreeInput<'_>,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
    importances: &mut [f64],
    leaf_value: F,
) -> Tree
where
    F: Fn(&[u32]) -> f64,
{
    let root: Vec<u32> = (0..input.rows.len() as u32).filter(|&i| input.weights[i as usize] > 0.0).collect();
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let mut stack: Vec<(usize, Vec<u32>, usize)> = vec![(0, root, 0)];
    let mut scratch = Scratch { buckets: vec![Vec::new(); input.dimension], touched: Vec::new() };
    let mut goes_right = vec![false; input.rows.len()];

    while let Some((slot, members, depth)) = stack.pop() {
        let can_split = members.len() >= params.min_samples_split
            && params.max_depth.is_none_or(|d| depth < d)
            && !is_constant(&members, input.targets);
        let best = if can_split { best_split(input, params, &members, rng, &mut scratch) } else { None };
        match best {
            None => nodes[slot] = Node::Leaf { value: leaf_value(&members) },
            Some(split) => {
                importances[split.feature as usize] += split.gain;
                let (left, right) = partition(input, &members, &split, &mut goes_right);
                let l = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[slot] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: l as u32,
                    right: l as u32 + 1,
                };
                stack.push((l + 1, right, depth + 1));
                stack.push((l, left, depth + 1));
            }
        }
    }
    Tree { nodes }
}

fn is_constant(members: &[u32], targets: &[f64]) -> bool {
    let first = targets[members[0] as usize];
    members.iter().all(|&i| targets[i as usize] == first)
}

fn partition(input: &TreeInput<'_>, members: &[u32], split: &SplitChoice, goes_right: &mut [bool]) -> (Vec<u32>, Vec<u32>) {
    let zero_right = 0.0 > split.threshold;
    for &i in members {
        let v = input.rows[i as usize].get(split.feature as usize);
        goes_right[i as usize] = if v == 0.0 { zero_right } else { v > split.threshold };
    }
    let (right, left): (Vec<u32>, Vec<u32>) = members.iter().partition(|&&i| goes_right[i as usize]);
    (left, right)
}

fn best_split(
    input: &TreeInput<'_>,
    params: &TreeParams,
    members: &[u32],
    rng: &mut ChaCha8Rng,
    scratch: &mut Scratch,
) -> Option<SplitChoice> {
    let (mut w_total, mut s_total) = (0.0, 0.0);
    for &i in members {
        let w = input.weights[i as usize];
        w_total += w;
        s_total += w * input.targets[i as usize];
    }

    for &i in members {
        for &(f, v) in input.rows[i as usize].entries() {
            let bucket = &mut scratch.buckets[f as usize];
            if bucket.is_empty() {
                scratch.touched.push(f);
            }
            bucket.push((v, i));
        }
    }
    let mut candidates = std::mem::take(&mut scratch.touched);
    candidates.sort_unstable();

    let mut best: Option<SplitChoice> = None;
    let budget = params.max_features.unwrap_or(candidates.len());
    let mut found = 0usize;
    for k in 0..candidates.len() {
        if found >= budget {
            break;
        }
        if params.max_features.is_some() {
            let j = rng.random_range(k..candidates.len());
            candidates.swap(k, j);
        }
        let f = candidates[k];
        let bucket = &mut scratch.buckets[f as usize];
        bucket.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let zero_count = members.len() - bucket.len();
        if let Some(split) = scan_feature(input, f, bucket, zero_count, w_total, s_total) {
            found += 1;
            if best.is_none_or(|b| split.gain > b.gain) {
                best = Some(split);
            }
        }
    }
    for f in &candidates {
        scratch.buckets[*f as usize].clear();
    }
    candidates.clear();
    scratch.touched = candidates;
    best.filter(|b| b.gain > MIN_GAIN * w_total.max(1.0))
}

/// Scans sorted nonzero values of one feature, with the implicit zero block
/// placed in value order.
fn scan_feature(
    input: &TreeInput<'_>,
    feature: u32,
    sorted: &[(f64, u32)],
    zero_count: usize,
    w_total: f64,
    s_total: f64,
) -> Option<SplitChoice> {
    let (mut w_nz, mut s_nz) = (0.0, 0.0);
    for &(_, i) in sorted {
        let w = input.weights[i as usize];
        w_nz += w;
        s_nz += w * input.targets[i as usize];
    }
    let (w_zero, s_zero) = (w_total - w_nz, s_total - s_nz);

    // Blocks of (value, weight, weighted target sum, row count) in ascending value order.
    let mut blocks: Vec<(f64, f64, f64, usize)> = Vec::with_capacity(sorted.len() + 1);
    let mut zero_pending = zero_count > 0;
    for &(v, i) in sorted {
        if zero_pending && v > 0.0 {
            blocks.push((0.0, w_zero, s_zero, zero_count));
            zero_pending = false;
        }
        let w = input.weights[i as usize];
        match blocks.last_mut() {
            Some(last) if last.0 == v => {
                last.1 += w;
                last.2 += w * input.targets[i as usize];
                last.3 += 1;
            }
            _ => blocks.push((v, w, w * input.targets[i as usize], 1)),
        }
    }
    if zero_pending {
        blocks.push((0.0, w_zero, s_zero, zero_count));
    }
    if blocks.len() < 2 {
        return None;
    }

    let parent = s_total * s_total / w_total;
    let (mut w_left, mut s_left) = (0.0, 0.0);
    let mut best: Option<SplitChoice> = None;
    for k in 0..blocks.len() - 1 {
        w_left += blocks[k].1;
        s_left += blocks[k].2;
        let w_right = w_total - w_left;
        if w_left <= 0.0 || w_right <= 0.0 {
            continue;
        }
        let s_right = s_total - s_left;
        let gain = s_left * s_left / w_left + s_right * s_right / w_right - parent;
        if best.is_none_or(|b| gain > b.gain) {
            let (lo, hi) = (blocks[k].0, blocks[k + 1].0);
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            best = Some(SplitChoice { feature, threshold, gain });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn grow_simple(rows: &[SparseVector], targets: &[f64], weights: &[f64], max_depth: Option<usize>) -> (Tree, Vec<f64>) {
        let input = TreeInput { rows, targets, weights, dimension: rows[0].dimension() };
        let params = TreeParams { max_depth, min_samples_split: 2, max_features: None };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut imp = vec![0.0; input.dimension];
        let tree = grow(&input, &params, &mut rng, &mut imp, |m| {
            let w: f64 = m.iter().map(|&i| weights[i as usize]).sum();
            m.iter().map(|&i| weights[i as usize] * targets[i as usize]).sum::<f64>() / w
        });
        (tree, imp)
    }

    fn dense(rows: &[[f64; 2]]) -> Vec<SparseVector> {
        rows.iter().map(|r| SparseVector::from_dense(r).unwrap()).collect()
    }

    #[test]
    fn single_split_on_informative_feature() {
        let rows = dense(&[[0.0, 0.3], [0.0, 0.7], [0.5, 0.3], [0.9, 0.7]]);
        let targets = [0.0, 0.0, 1.0, 1.0];
        let (tree, imp) = grow_simple(&rows, &targets, &[1.0; 4], None);
        assert_eq!(tree.depth(), 1);
        assert!(imp[0] > 0.0 && imp[1] == 0.0);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.25);
            }
            _ => panic!("expected split"),
        }
        for (r, t) in rows.iter().zip(targets) {
            assert_eq!(tree.predict(r), t);
        }
    }

    #[test]
    fn gain_matches_weighted_gini_decrease() {
        // Weighted Gini decrease W*g(P) - W_L*g(L) - W_R*g(R) is twice the
        // sum-of-squares gain for 0/1 targets.
        let rows = dense(&[[0.1, 0.0], [0.2, 0.0], [0.8, 0.0], [0.9, 0.0], [0.95, 0.0]]);
        let targets = [0.0, 1.0, 1.0, 1.0, 0.0];
        let weights = [2.0, 1.0, 1.0, 0.5, 3.0];
        let input = TreeInput { rows: &rows, targets: &targets, weights: &weights, dimension: 2 };
        let sorted: Vec<(f64, u32)> = (0..5).map(|i| (rows[i].get(0), i as u32)).collect();
        let best = scan_feature(&input, 0, &sorted, 0, weights.iter().sum(), 2.5).unwrap();

        let gini = |idx: &[usize]| {
            let w: f64 = idx.iter().map(|&i| weights[i]).sum();
            let w1: f64 = idx.iter().map(|&i| weights[i] * targets[i]).sum();
            let p = w1 / w;
            (w, w * (1.0 - p * p - (1.0 - p) * (1.0 - p)))
        };
        let all: Vec<usize> = (0..5).collect();
        let mut best_brute = f64::MIN;
        for cut in 1..5 {
            let (_, gl) = gini(&all[..cut]);
            let (_, gr) = gini(&all[cut..]);
            let decrease = gini(&all).1 - gl - gr;
            best_brute = best_brute.max(decrease);
        }
        assert!((2.0 * best.gain - best_brute).abs() < 1e-12);
    }

    #[test]
    fn depth_limit_and_zero_weight_rows() {
        let rows = dense(&[[0.1, 0.9], [0.2, 0.1], [0.3, 0.8], [0.4, 0.2], [0.5, 0.7], [0.6, 0.3]]);
        let targets = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        let (tree, _) = grow_simple(&rows, &targets, &[1.0; 6], Some(1));
        assert!(tree.depth() <= 1);
        // Only the first two rows participate.
        let weights = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let (tree, _) = grow_simple(&rows, &targets, &weights, None);
        assert_eq!(tree.leaf_count(), 2);
    }

    #[test]
    fn zero_block_splits_sparse_feature() {
        // Feature 1 is present only on positive rows.
        let rows = vec![
            SparseVector::new(2, vec![(0, 0.5)]).unwrap(),
            SparseVector::new(2, vec![(0, 0.4)]).unwrap(),
            SparseVector::new(2, vec![(0, 0.5), (1, 0.2)]).unwrap(),
            SparseVector::new(2, vec![(1, 0.9)]).unwrap(),
        ];
        let targets = [0.0, 0.0, 1.0, 1.0];
        let (tree, _) = grow_simple(&rows, &targets, &[1.0; 4], None);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!((*feature, *threshold), (1, 0.1));
            }
            _ => panic!("expected split"),
        }
    }
}
