//! Exact kd-tree over a flat row-major point buffer.
//!
//! Queries are exact: a subtree is skipped only when the splitting-plane
//! distance strictly exceeds the current worst candidate. Results are
//! ordered by `(squared distance, index)`, so equal distances resolve to the
//! lower index.

use super::sq_dist;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl KdTree {
    pub fn build(dim: usize, data: &[f64]) -> Self {
        let n = if dim == 0 { 0 } else { data.len() / dim };
        let mut tree = KdTree { dim, nodes: Vec::new(), order: (0..n).collect() };
        if n > 0 {
            tree.build_node(data, 0, n);
        }
        tree
    }

    fn build_node(&mut self, data: &[f64], start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.dim;
        // split along the widest axis
        let mut axis = 0;
        let mut widest = -1.0;
        for a in 0..dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = data[i * dim + a];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > widest {
                widest = hi - lo;
                axis = a;
            }
        }
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            data[i * dim + axis]
                .total_cmp(&data[j * dim + axis])
                .then(i.cmp(&j))
        });
        let value = data[self.order[mid] * dim + axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(data, start, mid);
        let right = self.build_node(data, mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// The `k` nearest points as `(index, squared distance)`, sorted.
    pub fn knn(&self, data: &[f64], query: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        self.knn_rec(0, data, query, k, &mut best);
        best.into_iter().map(|(d2, i)| (i, d2)).collect()
    }

    fn knn_rec(&self, node: usize, data: &[f64], q: &[f64], k: usize, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = sq_dist(&data[i * self.dim..(i + 1) * self.dim], q);
                    let worse_than_all = best.len() == k && {
                        let (wd, wi) = best[k - 1];
                        d2 > wd || (d2 == wd && i > wi)
                    };
                    if worse_than_all {
                        continue;
                    }
                    let pos = best
                        .iter()
                        .position(|&(bd, bi)| d2 < bd || (d2 == bd && i < bi))
                        .unwrap_or(best.len());
                    best.insert(pos, (d2, i));
                    best.truncate(k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, data, q, k, best);
                let bound = if best.len() < k { f64::INFINITY } else { best[k - 1].0 };
                if diff * diff <= bound {
                    self.knn_rec(far, data, q, k, best);
                }
            }
        }
    }

    /// All points with squared distance `<= r2`, as `(index, squared distance)`,
    /// in unspecified order.
    pub fn within(&self, data: &[f64], query: &[f64], r2: f64, out: &mut Vec<(usize, f64)>) {
        if !self.nodes.is_empty() {
            self.within_rec(0, data, query, r2, out);
        }
    }

    fn within_rec(&self, node: usize, data: &[f64], q: &[f64], r2: f64, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = sq_dist(&data[i * self.dim..(i + 1) * self.dim], q);
                    if d2 <= r2 {
                        out.push((i, d2));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.within_rec(near, data, q, r2, out);
                if diff * diff <= r2 {
                    self.within_rec(far, data, q, r2, out);
                }
            }
        }
    }
}
