//! Points, point clouds with an exact neighbor index, and Hausdorff
//! (semi)distances between finite clouds.

mod kdtree;
pub mod io;

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
pub use kdtree::KdTree;

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A neighbor returned by [`PointCloud::nearest`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

/// An immutable, indexed set of points in `R^dim`.
#[derive(Debug, Clone)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
    tree: KdTree,
}

impl PartialEq for PointCloud {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.data == other.data
    }
}

impl PointCloud {
    /// Build from a flat row-major buffer. Every entry must be finite.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("point dimension must be positive"));
        }
        if data.len() % dim != 0 {
            return Err(Error::domain(format!(
                "buffer of {} values is not a whole number of {dim}-dimensional points",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "non-finite coordinate in point {} (component {})",
                pos / dim,
                pos % dim
            )));
        }
        let tree = KdTree::build(dim, &data);
        Ok(PointCloud { dim, data, tree })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| Error::domain("cannot infer dimension of an empty row list"))?;
        let mut data = Vec::with_capacity(dim * rows.len());
        for (i, r) in rows.iter().enumerate() {
            if r.as_ref().len() != dim {
                return Err(Error::domain(format!("row {i} has length {}, expected {dim}", r.as_ref().len())));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::domain(format!(
                "query has dimension {}, cloud has {}",
                query.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Exact `k` nearest neighbors, sorted by distance, ties to the lower index.
    pub fn nearest(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        if k > self.len() {
            return Err(Error::domain(format!("k = {k} exceeds cloud size {}", self.len())));
        }
        self.check_query(query)?;
        Ok(self
            .tree
            .knn(&self.data, query, k)
            .into_iter()
            .map(|(index, d2)| Neighbor { index, distance: d2.sqrt() })
            .collect())
    }

    /// Nearest point as `(index, squared distance)`; `None` on an empty cloud.
    pub fn nearest_sq(&self, query: &[f64]) -> Option<(usize, f64)> {
        self.tree.knn(&self.data, query, 1).into_iter().next()
    }

    /// Points within distance `radius` (inclusive), as `(index, squared distance)`.
    pub fn within(&self, query: &[f64], radius: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        self.tree.within(&self.data, query, radius * radius, out);
    }

    /// Exact diameter (largest pairwise distance); zero for fewer than two points.
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let p = self.point(i);
                (i + 1..n).map(|j| sq_dist(p, self.point(j))).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
            .sqrt()
    }

    /// Median nearest-neighbor distance; zero for fewer than two points.
    pub fn resolution(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mut nn: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let knn = self.tree.knn(&self.data, self.point(i), 2);
                knn.iter()
                    .find(|&&(j, _)| j != i)
                    .map(|&(_, d2)| d2.sqrt())
                    .unwrap_or(0.0)
            })
            .collect();
        nn.sort_by(f64::total_cmp);
        nn[n / 2]
    }

    /// Centroid of the cloud.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.points() {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += pi;
            }
        }
        let n = self.len().max(1) as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }
}

fn check_pair(x: &PointCloud, y: &PointCloud) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("Hausdorff distances need non-empty clouds"));
    }
    if x.dim() != y.dim() {
        return Err(Error::domain(format!("dimension mismatch: {} vs {}", x.dim(), y.dim())));
    }
    Ok(())
}

/// One-sided Hausdorff semidistance `sup_{x in X} inf_{y in Y} |x - y|`.
pub fn semidistance(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    check_pair(x, y)?;
    let d2 = (0..x.len())
        .into_par_iter()
        .map(|i| y.nearest_sq(x.point(i)).map(|(_, d2)| d2).unwrap_or(f64::INFINITY))
        .reduce(|| 0.0, f64::max);
    Ok(d2.sqrt())
}

/// Symmetric Hausdorff distance.
pub fn hausdorff_distance(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    Ok(semidistance(x, y)?.max(semidistance(y, x)?))
}

/// Cloud of differences `u - v` over pairs of points of `a`.
///
/// The zero vector is always present. When all `n(n-1) + 1` differences fit
/// in `max_pairs` they are enumerated; otherwise unordered pairs are drawn
/// without replacement and both `u - v` and `v - u` are kept, so the output
/// is closed under negation either way.
pub fn difference_cloud(a: &PointCloud, max_pairs: usize, seed: u64) -> Result<PointCloud> {
    if max_pairs == 0 {
        return Err(Error::domain("max_pairs must be positive"));
    }
    if a.is_empty() {
        return Err(Error::domain("difference cloud of an empty cloud"));
    }
    let n = a.len();
    let dim = a.dim();
    let mut data = vec![0.0; dim];
    let push_diff = |data: &mut Vec<f64>, i: usize, j: usize| {
        data.extend(a.point(i).iter().zip(a.point(j)).map(|(u, v)| u - v));
    };
    let total = n * (n - 1) + 1;
    if total <= max_pairs {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    push_diff(&mut data, i, j);
                }
            }
        }
    } else {
        let want = (max_pairs - 1) / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::with_capacity(want);
        while seen.len() < want {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let key = (i.min(j), i.max(j));
            if seen.insert(key) {
                push_diff(&mut data, key.0, key.1);
                push_diff(&mut data, key.1, key.0);
            }
        }
    }
    PointCloud::new(dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn cloud1(xs: &[f64]) -> PointCloud {
        PointCloud::new(1, xs.to_vec()).unwrap()
    }

    fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        PointCloud::new(dim, data).unwrap()
    }

    fn scan(cloud: &PointCloud, q: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = cloud.points().enumerate().map(|(i, p)| (sq_dist(p, q), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(d, i)| (i, d)).collect()
    }

    #[test]
    fn semidistance_examples() {
        let x = PointCloud::from_rows(&[[0.0, 0.0]]).unwrap();
        let y = PointCloud::from_rows(&[[3.0, 4.0]]).unwrap();
        assert_eq!(semidistance(&x, &y).unwrap(), 5.0);
        assert_eq!(semidistance(&x, &x).unwrap(), 0.0);

        let a = cloud1(&[0.0, 10.0]);
        let b = cloud1(&[0.0]);
        assert_eq!(semidistance(&a, &b).unwrap(), 10.0);
        assert_eq!(semidistance(&b, &a).unwrap(), 0.0);
        assert_eq!(hausdorff_distance(&a, &b).unwrap(), 10.0);
    }

    #[test]
    fn offset_grids() {
        let a = cloud1(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        let b = cloud1(&(0..20).map(|i| i as f64 + 0.5).collect::<Vec<_>>());
        // exhaustive pair scan
        let mut oracle: f64 = 0.0;
        for p in a.points().chain(b.points()) {
            let other = if a.points().any(|q| q == p) { &b } else { &a };
            let m = other.points().map(|q| (p[0] - q[0]).abs()).fold(f64::INFINITY, f64::min);
            oracle = oracle.max(m);
        }
        assert_eq!(oracle, 0.5);
        assert_eq!(hausdorff_distance(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn errors() {
        let e = PointCloud::new(2, vec![]).unwrap();
        let x = PointCloud::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(semidistance(&e, &x).is_err());
        assert!(semidistance(&x, &cloud1(&[1.0])).is_err());
        assert!(PointCloud::new(1, vec![f64::NAN]).is_err());
        assert!(x.nearest(&[0.0, 0.0], 0).is_err());
        assert!(difference_cloud(&x, 0, 1).is_err());
    }

    #[test]
    fn nearest_examples() {
        let c = cloud1(&[0.0, 1.0, 2.0]);
        let nn = c.nearest(&[0.6], 1).unwrap();
        assert_eq!(nn[0].index, 1);
        assert!((nn[0].distance - 0.4).abs() < 1e-15);
        let nn = c.nearest(&[2.0], 2).unwrap();
        assert_eq!(nn[0], Neighbor { index: 2, distance: 0.0 });
        // tie at 0.5: lower index wins
        let nn = c.nearest(&[0.5], 1).unwrap();
        assert_eq!(nn[0].index, 0);
    }

    #[test]
    fn nearest_matches_scan_500() {
        let c = random_cloud(500, 3, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.2..1.2)).collect();
            let got: Vec<(usize, f64)> =
                c.nearest(&q, 5).unwrap().iter().map(|n| (n.index, n.distance * n.distance)).collect();
            let want = scan(&c, &q, 5);
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.0, w.0);
            }
        }
    }

    #[test]
    fn nearest_ties_on_grid() {
        // integer grid: many exact ties
        let mut rows = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                rows.push([i as f64, j as f64]);
            }
        }
        let c = PointCloud::from_rows(&rows).unwrap();
        for q in [[4.5, 4.5], [0.0, 0.0], [3.5, 7.0], [9.5, 9.5]] {
            for k in [1, 2, 4, 9] {
                let got: Vec<usize> = c.nearest(&q, k).unwrap().iter().map(|n| n.index).collect();
                let want: Vec<usize> = scan(&c, &q, k).iter().map(|w| w.0).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn difference_cloud_examples() {
        let a = PointCloud::from_rows(&[[2.0, 3.0]]).unwrap();
        let d = difference_cloud(&a, 10, 0).unwrap();
        assert_eq!(d.as_flat(), &[0.0, 0.0]);

        let d = difference_cloud(&cloud1(&[0.0, 1.0]), 100, 0).unwrap();
        let mut v = d.as_flat().to_vec();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![-1.0, 0.0, 1.0]);

        let circle: Vec<[f64; 2]> = (0..100)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 100.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let c = PointCloud::from_rows(&circle).unwrap();
        for max_pairs in [10_000, 2_001] {
            let d = difference_cloud(&c, max_pairs, 3).unwrap();
            assert!(d.len() <= max_pairs);
            assert!(d.points().any(|p| p == [0.0, 0.0]));
            for p in d.points() {
                let neg = [-p[0], -p[1]];
                assert!(d.points().any(|q| q == neg));
            }
        }
    }

    #[test]
    fn diameter_and_resolution() {
        let c = cloud1(&[0.0, 1.0, 3.0]);
        assert_eq!(c.diameter(), 3.0);
        assert_eq!(c.resolution(), 1.0);
        assert_eq!(cloud1(&[5.0]).diameter(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn hausdorff_is_a_pseudometric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000,
                                       n1 in 1usize..30, n2 in 1usize..30, n3 in 1usize..30) {
            let a = random_cloud(n1, 2, s1);
            let b = random_cloud(n2, 2, s2);
            let c = random_cloud(n3, 2, s3);
            let ab = hausdorff_distance(&a, &b).unwrap();
            let ba = hausdorff_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            let bc = hausdorff_distance(&b, &c).unwrap();
            let ac = hausdorff_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!(ab >= semidistance(&a, &b).unwrap());
            prop_assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn knn_matches_linear_scan(seed in 0u64..10_000, n in 1usize..300, dim in 1usize..6, k in 1usize..12) {
            let c = random_cloud(n, dim, seed);
            let k = k.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
            let got: Vec<usize> = c.nearest(&q, k).unwrap().iter().map(|n| n.index).collect();
            let want: Vec<usize> = scan(&c, &q, k).iter().map(|w| w.0).collect();
            prop_assert_eq!(got, want);
        }
    }
}
