//! k-nearest-neighbour majority vote.
//!
//! Neighbours are ordered by squared Euclidean distance and then by original
//! record index, so equidistant points are taken in index order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{invalid, Result};
use crate::generators::{DataSet, LabelSource};

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

#[inline]
fn cmp_key(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Class 1 when at least half of the `k` votes are 1.
#[inline]
pub fn majority(ones: usize, k: usize) -> u8 {
    u8::from(2 * ones >= k)
}

/// Indices of the `k` nearest rows of `features` to `x`, in neighbour order.
///
/// `exclude` drops one record (leave-one-out).
pub fn nearest_brute(features: &[f64], d: usize, x: &[f64], k: usize, exclude: Option<usize>) -> Vec<u32> {
    let mut keys: Vec<(f64, u32)> = features
        .chunks_exact(d)
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, row)| (sq_dist(row, x), i as u32))
        .collect();
    let k = k.min(keys.len());
    if k == 0 {
        return Vec::new();
    }
    if k < keys.len() {
        keys.select_nth_unstable_by(k - 1, cmp_key);
        keys.truncate(k);
    }
    keys.sort_unstable_by(cmp_key);
    keys.into_iter().map(|(_, i)| i).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapKey(f64, u32);

impl Eq for HeapKey {}

impl PartialOrd for HeapKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapKey {
    fn cmp(&self, other: &Self) -> Ordering {
        cmp_key(&(self.0, self.1), &(other.0, other.1))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Exact kd-tree with the same neighbour order as the brute-force search.
#[derive(Debug, Clone)]
pub struct KdTree {
    d: usize,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 16;

impl KdTree {
    pub fn build(features: &[f64], d: usize) -> Self {
        let n = features.len() / d;
        let mut tree = Self {
            d,
            order: (0..n as u32).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build_node(features, 0, n);
        }
        tree
    }

    fn build_node(&mut self, features: &[f64], start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let d = self.d;
        let coord = |i: u32, k: usize| features[i as usize * d + k];
        // split along the widest coordinate
        let dim = (0..d)
            .map(|k| {
                let (lo, hi) = self.order[start..end].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = coord(i, k);
                    (lo.min(v), hi.max(v))
                });
                (hi - lo, k)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
            .map(|(_, k)| k)
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| coord(a, dim).total_cmp(&coord(b, dim)));
        let value = coord(self.order[mid], dim);
        let left = self.build_node(features, start, mid);
        let right = self.build_node(features, mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// Same contract as [`nearest_brute`].
    pub fn nearest(&self, features: &[f64], x: &[f64], k: usize, exclude: Option<usize>) -> Vec<u32> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, features, x, k, exclude, &mut heap);
        }
        let mut out = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|HeapKey(_, i)| i).collect()
    }

    fn search(
        &self,
        node: usize,
        features: &[f64],
        x: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<HeapKey>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i as usize) == exclude {
                        continue;
                    }
                    let key = HeapKey(sq_dist(&features[i as usize * self.d..(i as usize + 1) * self.d], x), i);
                    if heap.len() < k {
                        heap.push(key);
                    } else if key < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(key);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = x[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, features, x, k, exclude, heap);
                // equality must still be explored: an equidistant point may carry a smaller index
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is non-empty").0 {
                    self.search(far, features, x, k, exclude, heap);
                }
            }
        }
    }
}

/// Fitted k-NN rule.
#[derive(Debug, Clone)]
pub struct KnnClassifier {
    d: usize,
    k: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    tree: Option<KdTree>,
}

pub fn fit_knn(data: &DataSet, k: usize, source: LabelSource) -> Result<KnnClassifier> {
    let labels = data.labels(source)?.to_vec();
    if k == 0 || k > data.len() {
        return invalid(format!("k = {k} must lie in 1..={}", data.len()));
    }
    Ok(KnnClassifier {
        d: data.dim(),
        k,
        features: data.features().to_vec(),
        labels,
        tree: None,
    })
}

impl KnnClassifier {
    /// Switches neighbour search to a kd-tree. Predictions are unchanged.
    pub fn with_kd_tree(mut self) -> Self {
        self.tree = Some(KdTree::build(&self.features, self.d));
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn uses_kd_tree(&self) -> bool {
        self.tree.is_some()
    }

    /// The `k` nearest training indices to `x`, in neighbour order.
    pub fn neighbors(&self, x: &[f64]) -> Vec<u32> {
        match &self.tree {
            Some(t) => t.nearest(&self.features, x, self.k, None),
            None => nearest_brute(&self.features, self.d, x, self.k, None),
        }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let ones = self.neighbors(x).iter().filter(|&&i| self.labels[i as usize] == 1).count();
        majority(ones, self.k)
    }
}

/// First `k` neighbours of every query, stored row by row.
///
/// Built once per feature sample and reused for every label vector and every
/// `k` up to the table width.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    k: usize,
    idx: Vec<u32>,
}

impl NeighborTable {
    /// Neighbours in `train` of each row of `queries`.
    pub fn build(train: &[f64], queries: &[f64], d: usize, k: usize) -> Self {
        let k = k.min(train.len() / d);
        let mut idx = Vec::with_capacity(queries.len() / d * k);
        for q in queries.chunks_exact(d) {
            idx.extend(nearest_brute(train, d, q, k, None));
        }
        Self { k, idx }
    }

    /// Leave-one-out neighbours of each training record among the others.
    pub fn build_loo(train: &[f64], d: usize, k: usize) -> Self {
        let n = train.len() / d;
        let k = k.min(n.saturating_sub(1));
        let mut idx = Vec::with_capacity(n * k);
        for (i, q) in train.chunks_exact(d).enumerate() {
            idx.extend(nearest_brute(train, d, q, k, Some(i)));
        }
        Self { k, idx }
    }

    pub fn width(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.idx.len() / self.k
        }
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.idx[i * self.k..(i + 1) * self.k]
    }

    /// k-NN votes of every row under `labels`.
    pub fn predict_all(&self, labels: &[u8], k: usize) -> Result<Vec<u8>> {
        if k == 0 || k > self.k {
            return invalid(format!("k = {k} exceeds neighbour table width {}", self.k));
        }
        Ok((0..self.rows())
            .map(|i| {
                let ones = self.row(i)[..k].iter().filter(|&&j| labels[j as usize] == 1).count();
                majority(ones, k)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn line(xs: &[f64], ys: &[u8]) -> DataSet {
        DataSet::new(1, xs.to_vec(), ys.to_vec(), None, 0).unwrap()
    }

    #[test]
    fn split_vote_goes_to_class_one() {
        let data = line(&[-1.0, 1.0], &[0, 1]);
        let c = fit_knn(&data, 2, LabelSource::True).unwrap();
        assert_eq!(c.predict(&[-0.9]), 1);
        assert_eq!(c.predict(&[5.0]), 1);
    }

    #[test]
    fn equidistant_neighbours_follow_index_order() {
        // query at 0: points 1 and 2 are both at distance 1, index 1 wins for k = 1
        let data = line(&[3.0, -1.0, 1.0], &[1, 0, 1]);
        let c = fit_knn(&data, 1, LabelSource::True).unwrap();
        assert_eq!(c.neighbors(&[0.0]), vec![1]);
        assert_eq!(c.predict(&[0.0]), 0);
        let swapped = line(&[3.0, 1.0, -1.0], &[1, 1, 0]);
        let c = fit_knn(&swapped, 1, LabelSource::True).unwrap();
        assert_eq!(c.predict(&[0.0]), 1);
        // all three equidistant from 0 except ordering by index
        let data = line(&[1.0, -1.0, 1.0, -1.0], &[0, 0, 1, 1]);
        let c = fit_knn(&data, 3, LabelSource::True).unwrap();
        assert_eq!(c.neighbors(&[0.0]), vec![0, 1, 2]);
        assert_eq!(c.predict(&[0.0]), 0);
        assert_eq!(c.with_kd_tree().neighbors(&[0.0]), vec![0, 1, 2]);
    }

    #[test]
    fn k_one_returns_training_label_and_k_n_returns_majority() {
        let data = line(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1, 0, 0, 1, 0]);
        let c = fit_knn(&data, 1, LabelSource::True).unwrap();
        for i in 0..5 {
            assert_eq!(c.predict(data.x(i)), data.true_labels()[i]);
        }
        let c = fit_knn(&data, 5, LabelSource::True).unwrap();
        assert_eq!(c.predict(&[100.0]), 0);
        let even = line(&[0.0, 1.0, 2.0, 3.0], &[1, 0, 0, 1]);
        assert_eq!(fit_knn(&even, 4, LabelSource::True).unwrap().predict(&[-7.0]), 1);
    }

    #[test]
    fn fit_rejects_bad_k_and_missing_labels() {
        let data = line(&[0.0, 1.0], &[0, 1]);
        assert!(fit_knn(&data, 0, LabelSource::True).is_err());
        assert!(fit_knn(&data, 3, LabelSource::True).is_err());
        assert!(fit_knn(&data, 1, LabelSource::Observed).is_err());
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        let mut rng = crate::rng::stream(11);
        for d in [1usize, 2, 5] {
            let n = 700;
            // a coarse lattice produces many exact distance ties
            let features: Vec<f64> = (0..n * d).map(|_| (rng.random::<f64>() * 8.0).floor()).collect();
            let tree = KdTree::build(&features, d);
            for _ in 0..1000 {
                let q: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() * 16.0).floor() / 2.0).collect();
                let k = rng.random_range(1..40);
                assert_eq!(tree.nearest(&features, &q, k, None), nearest_brute(&features, d, &q, k, None));
                let ex = rng.random_range(0..n);
                assert_eq!(tree.nearest(&features, &q, k, Some(ex)), nearest_brute(&features, d, &q, k, Some(ex)));
            }
        }
    }

    #[test]
    fn table_agrees_with_classifier() {
        let mut rng = crate::rng::stream(3);
        let d = 2;
        let train: Vec<f64> = (0..200 * d).map(|_| rng.random::<f64>()).collect();
        let labels: Vec<u8> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let queries: Vec<f64> = (0..50 * d).map(|_| rng.random::<f64>()).collect();
        let data = DataSet::new(d, train.clone(), labels.clone(), None, 0).unwrap();
        let table = NeighborTable::build(&train, &queries, d, 31);
        for k in [1, 2, 7, 31] {
            let c = fit_knn(&data, k, LabelSource::True).unwrap();
            let expected: Vec<u8> = queries.chunks_exact(d).map(|q| c.predict(q)).collect();
            assert_eq!(table.predict_all(&labels, k).unwrap(), expected);
        }
        assert!(table.predict_all(&labels, 32).is_err());
        let loo = NeighborTable::build_loo(&train, d, 10);
        assert!((0..200).all(|i| !loo.row(i).contains(&(i as u32))));
    }
}
