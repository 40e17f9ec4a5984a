//! Random linear maps `L: R^N -> R^m` and the γ-almost bi-Lipschitz check
//!
//! ```text
//! (1/C_L) |u - v| / (-ln |u - v|)^γ  <=  |Lu - Lv|  <=  C_L |u - v|
//! ```
//!
//! for sample pairs with `|u - v| <= δ_L < 1`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, io, PointCloud};
use crate::systems::AttractorSample;

/// Fitted constants of the bi-Lipschitz inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitz {
    pub c_l: f64,
    pub gamma: f64,
    pub delta_l: f64,
    /// Fraction of verification pairs violating the inequality at
    /// `min(c_l, c_max)`.
    pub violation_fraction: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEmbedding {
    /// Row-major `rows x cols`.
    pub matrix: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    /// Upper bound on the largest singular value.
    pub op_norm: f64,
    pub augmented: bool,
    pub seed: u64,
    pub constants: Option<BiLipschitz>,
}

fn op_norm_of(matrix: &[f64], rows: usize, cols: usize) -> f64 {
    let a = DMatrix::from_row_slice(rows, cols, matrix);
    let s = a.singular_values().iter().copied().fold(0.0, f64::max);
    s * (1.0 + 1e-10)
}

impl LinearEmbedding {
    pub fn from_matrix(rows: usize, cols: usize, matrix: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || matrix.len() != rows * cols {
            return Err(Error::domain(format!("matrix data does not match {rows}x{cols}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("matrix has non-finite entries"));
        }
        let op_norm = op_norm_of(&matrix, rows, cols);
        Ok(LinearEmbedding { matrix, rows, cols, op_norm, augmented: false, seed: 0, constants: None })
    }

    /// Output dimension.
    pub fn dim(&self) -> usize {
        self.rows
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.chunks_exact(self.cols).map(|row| row.iter().zip(u).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.matrix[i * self.cols + j].powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.matrix.chunks_exact(self.cols) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse().map_err(|_| Error::format(format!("bad matrix entry {s:?}"))))
                .collect::<Result<_>>()?;
            if *cols.get_or_insert(vals.len()) != vals.len() {
                return Err(Error::format("ragged matrix CSV"));
            }
            data.extend(vals);
            rows += 1;
        }
        Self::from_matrix(rows, cols.unwrap_or(0), data).map_err(|e| Error::format(e.to_string()))
    }

    /// Writes `embedding.csv` (matrix) and `embedding.json` (sidecar).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("embedding.csv"), self.to_csv())?;
        let c = self.constants;
        let sidecar = serde_json::json!({
            "m": self.rows,
            "N": self.cols,
            "C_L": c.map(|c| c.c_l),
            "gamma": c.map(|c| c.gamma),
            "delta_L": c.map(|c| c.delta_l),
            "violation_fraction": c.map(|c| c.violation_fraction),
            "pairs": c.map(|c| c.pairs),
            "op_norm": self.op_norm,
            "augmented": self.augmented,
            "seed": self.seed,
        });
        fs::write(dir.join("embedding.json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut e = Self::from_csv(&fs::read_to_string(dir.join("embedding.csv"))?)?;
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("embedding.json"))?)?;
        let num = |k: &str| side.get(k).and_then(|v| v.as_f64());
        e.op_norm = num("op_norm").ok_or_else(|| Error::format("embedding.json lacks op_norm"))?;
        e.augmented = side.get("augmented").and_then(|v| v.as_bool()).unwrap_or(false);
        e.seed = side.get("seed").and_then(|v| v.as_u64()).unwrap_or(0);
        if let (Some(c_l), Some(gamma), Some(delta_l)) = (num("C_L"), num("gamma"), num("delta_L")) {
            e.constants = Some(BiLipschitz {
                c_l,
                gamma,
                delta_l,
                violation_fraction: num("violation_fraction").unwrap_or(0.0),
                pairs: side.get("pairs").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
            });
        }
        Ok(e)
    }
}

/// `m x N` matrix with i.i.d. `N(0, 1/m)` entries.
pub fn draw_embedding(n: usize, m: usize, seed: u64) -> Result<LinearEmbedding> {
    if m == 0 {
        return Err(Error::domain("embedding dimension must be positive"));
    }
    if m >= n {
        return Err(Error::domain(format!("embedding dimension m = {m} must be below ambient N = {n}")));
    }
    let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).expect("valid normal");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * n).map(|_| normal.sample(&mut rng)).collect();
    let mut e = LinearEmbedding::from_matrix(m, n, data)?;
    e.seed = seed;
    Ok(e)
}

/// Default `δ_L = min(1/2, diam / 2)`; 1/2 for a one-point sample.
pub fn default_delta_l(sample: &AttractorSample) -> f64 {
    let half = sample.cloud.diameter() / 2.0;
    if half > 0.0 { half.min(0.5) } else { 0.5 }
}

/// Fit the smallest `C_L` satisfying both sides of the inequality on all
/// sample pairs with `0 < |u - v| <= δ_L`. Stores the constants into `l`.
/// A pair with `Lu = Lv` but `u != v` is an injectivity failure.
pub fn verify_bilipschitz(
    l: &mut LinearEmbedding,
    sample: &AttractorSample,
    gamma: f64,
    delta_l: Option<f64>,
    c_max: f64,
) -> Result<BiLipschitz> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} outside (0, 1]")));
    }
    if sample.cloud.dim() != l.cols {
        return Err(Error::domain("sample dimension does not match the embedding"));
    }
    let delta_l = delta_l.unwrap_or_else(|| default_delta_l(sample));
    if !(delta_l > 0.0 && delta_l < 1.0) {
        return Err(Error::domain(format!("delta_L = {delta_l} must lie in (0, 1)")));
    }
    let cloud = &sample.cloud;
    let images: Vec<Vec<f64>> = cloud.points().map(|p| l.apply(p)).collect();
    let n = cloud.len();

    struct Acc {
        upper: f64,
        lower: f64,
        pairs: usize,
        collapse: Option<(usize, usize)>,
    }
    let ratios = |i: usize, j: usize| -> Option<(f64, f64)> {
        let d = geometry::dist(cloud.point(i), cloud.point(j));
        if d == 0.0 || d > delta_l {
            return None;
        }
        let e = geometry::dist(&images[i], &images[j]);
        Some((e / d, d / ((-d.ln()).powf(gamma) * e)))
    };
    let acc = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut a = Acc { upper: 0.0, lower: 0.0, pairs: 0, collapse: None };
            for j in i + 1..n {
                if let Some((up, low)) = ratios(i, j) {
                    a.pairs += 1;
                    a.upper = a.upper.max(up);
                    if low.is_infinite() {
                        a.collapse.get_or_insert((i, j));
                    } else {
                        a.lower = a.lower.max(low);
                    }
                }
            }
            a
        })
        .reduce(
            || Acc { upper: 0.0, lower: 0.0, pairs: 0, collapse: None },
            |a, b| Acc {
                upper: a.upper.max(b.upper),
                lower: a.lower.max(b.lower),
                pairs: a.pairs + b.pairs,
                collapse: match (a.collapse, b.collapse) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    (x, y) => x.or(y),
                },
            },
        );
    if let Some((i, j)) = acc.collapse {
        return Err(Error::Injectivity(format!("L maps distinct sample points {i} and {j} to the same image")));
    }
    let c_fit = if acc.pairs == 0 { 1.0 } else { acc.upper.max(acc.lower) };
    let c_eval = c_fit.min(c_max);
    let violations = if c_eval < c_fit {
        (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .filter_map(|j| ratios(i, j))
                    .filter(|&(up, low)| up > c_eval || low > c_eval)
                    .count()
            })
            .sum::<usize>()
    } else {
        0
    };
    let fit = BiLipschitz {
        c_l: c_fit,
        gamma,
        delta_l,
        violation_fraction: if acc.pairs == 0 { 0.0 } else { violations as f64 / acc.pairs as f64 },
        pairs: acc.pairs,
    };
    l.constants = Some(fit);
    Ok(fit)
}

/// Outcome of the resampling loop.
#[derive(Debug, Clone)]
pub struct EmbeddingSearch {
    pub embedding: LinearEmbedding,
    /// Draws rejected before success.
    pub rejected: usize,
}

/// Draw `L` with seeds `seed, seed + 1, ...` until one verifies with zero
/// violations, at most `retries` draws.
pub fn find_embedding(
    sample: &AttractorSample,
    m: usize,
    gamma: f64,
    seed: u64,
    retries: usize,
    delta_l: Option<f64>,
    c_max: f64,
) -> Result<EmbeddingSearch> {
    let mut best: Option<f64> = None;
    let mut last_err = String::new();
    for r in 0..retries.max(1) {
        let mut l = draw_embedding(sample.cloud.dim(), m, seed.wrapping_add(r as u64))?;
        match verify_bilipschitz(&mut l, sample, gamma, delta_l, c_max) {
            Ok(fit) if fit.violation_fraction == 0.0 => return Ok(EmbeddingSearch { embedding: l, rejected: r }),
            Ok(fit) => best = Some(best.map_or(fit.violation_fraction, |b: f64| b.min(fit.violation_fraction))),
            Err(Error::Injectivity(msg)) => last_err = msg,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Injectivity(match best {
        Some(b) => format!("no draw out of {retries} verified; best violation fraction {b}"),
        None => format!("no draw out of {retries} was injective on the sample ({last_err})"),
    }))
}

/// `L'u = (Lu, 0)`.
pub fn augment(l: &LinearEmbedding) -> Result<LinearEmbedding> {
    if l.augmented {
        return Err(Error::domain("embedding is already augmented"));
    }
    let mut out = l.clone();
    out.matrix.extend(std::iter::repeat_n(0.0, l.cols));
    out.rows += 1;
    out.augmented = true;
    Ok(out)
}

/// Sample pushed forward by `L`, with `g_1 = L G(u_i)` at each image point.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCloud {
    pub cloud: PointCloud,
    pub g1_values: PointCloud,
    pub source_indices: Vec<usize>,
}

impl EmbeddedCloud {
    pub fn new(cloud: PointCloud, g1_values: PointCloud) -> Result<Self> {
        if cloud.len() != g1_values.len() || cloud.dim() != g1_values.dim() {
            return Err(Error::domain("g1 values must align with the embedded cloud"));
        }
        let source_indices = (0..cloud.len()).collect();
        Ok(EmbeddedCloud { cloud, g1_values, source_indices })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::save_bin(&dir.join("embedded.bin"), &self.cloud)?;
        io::save_bin(&dir.join("embedded_g1.bin"), &self.g1_values)?;
        io::save_csv(&dir.join("embedded.csv"), &self.cloud)?;
        io::save_csv(&dir.join("embedded_g1.csv"), &self.g1_values)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Self::new(io::load(&dir.join("embedded.bin"))?, io::load(&dir.join("embedded_g1.bin"))?)
    }
}

/// Push the sample and its field values through a verified `L`.
pub fn project_sample(l: &LinearEmbedding, sample: &AttractorSample) -> Result<EmbeddedCloud> {
    if l.constants.is_none() {
        return Err(Error::domain("embedding has not been verified on a sample"));
    }
    if sample.cloud.dim() != l.cols {
        return Err(Error::domain("sample dimension does not match the embedding"));
    }
    let cloud: Vec<f64> = sample.cloud.points().flat_map(|p| l.apply(p)).collect();
    let g1: Vec<f64> = sample.field_values.points().flat_map(|v| l.apply(v)).collect();
    EmbeddedCloud::new(PointCloud::new(l.rows, cloud)?, PointCloud::new(l.rows, g1)?)
}

/// Uniform random unit vector in `R^dim`.
pub(crate) fn random_unit<R: rand::Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let n = geometry::norm(&v).max(f64::MIN_POSITIVE);
    v.into_iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use crate::systems::{sample_attractor, System, SystemKind, SystemSpec};

    fn planar_sample(seed: u64) -> AttractorSample {
        let mut spec = SystemSpec::new(SystemKind::PlanarCycle);
        spec.lift_seed = seed;
        let sys = System::new(spec).unwrap();
        sample_attractor(&sys, 200, 20.0, 0.01, seed, 1e-10).unwrap()
    }

    #[test]
    fn deterministic_draws() {
        let a = draw_embedding(32, 7, 5).unwrap();
        let b = draw_embedding(32, 7, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.matrix, draw_embedding(32, 7, 6).unwrap().matrix);
        assert!(draw_embedding(8, 8, 1).is_err());
        assert!(draw_embedding(8, 0, 1).is_err());
    }

    #[test]
    fn column_norms_concentrate() {
        for seed in 0..20 {
            let l = draw_embedding(32, 16, seed).unwrap();
            let norms = l.column_norms();
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            assert!((0.8..=1.2).contains(&mean), "seed {seed}: {mean}");
        }
    }

    #[test]
    fn op_norm_bound_over_seeds() {
        let bound = (1.0 + (32.0f64 / 8.0).sqrt()) * 1.5;
        for seed in 0..100 {
            let l = draw_embedding(32, 8, seed).unwrap();
            assert!(l.op_norm <= bound, "seed {seed}: {}", l.op_norm);
        }
    }

    #[test]
    fn coordinate_projection_is_exact() {
        // points in the span of the first 3 coordinates, all distances <= 1/e
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let mut p = vec![0.0; 10];
                for v in p.iter_mut().take(3) {
                    *v = rng.random_range(0.0..0.2);
                }
                p
            })
            .collect();
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let sample = AttractorSample::new(cloud.clone(), cloud, 1.0, 0.0).unwrap();
        let mut proj = vec![0.0; 3 * 10];
        for i in 0..3 {
            proj[i * 10 + i] = 1.0;
        }
        let mut l = LinearEmbedding::from_matrix(3, 10, proj).unwrap();
        let fit = verify_bilipschitz(&mut l, &sample, 0.95, None, 1e3).unwrap();
        assert_eq!(fit.c_l, 1.0);
        assert_eq!(fit.violation_fraction, 0.0);
    }

    #[test]
    fn duplicates_are_excluded() {
        let sample = planar_sample(3);
        let mut l = draw_embedding(32, 7, 9).unwrap();
        let base = verify_bilipschitz(&mut l, &sample, 0.95, Some(0.5), 1e3).unwrap();
        let mut rows: Vec<Vec<f64>> = sample.cloud.points().map(|p| p.to_vec()).collect();
        rows.push(rows[0].clone());
        rows.push(rows[17].clone());
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let dup = AttractorSample::new(cloud.clone(), cloud, 1.0, 0.0).unwrap();
        let with_dup = verify_bilipschitz(&mut l, &dup, 0.95, Some(0.5), 1e3).unwrap();
        assert_eq!(base.c_l, with_dup.c_l);
    }

    #[test]
    fn collapse_is_an_injectivity_error() {
        let rows = vec![vec![0.0, 0.0, 0.1], vec![0.0, 0.0, 0.2], vec![0.1, 0.0, 0.0]];
        let cloud = PointCloud::from_rows(&rows).unwrap();
        let sample = AttractorSample::new(cloud.clone(), cloud, 1.0, 0.0).unwrap();
        let mut l = LinearEmbedding::from_matrix(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(verify_bilipschitz(&mut l, &sample, 0.9, None, 1e3), Err(Error::Injectivity(_))));
    }

    /// Exhaustive re-check of both inequalities from the stored constants.
    fn violations(l: &LinearEmbedding, sample: &AttractorSample) -> usize {
        let c = l.constants.unwrap();
        let pts: Vec<&[f64]> = sample.cloud.points().collect();
        let mut bad = 0;
        for i in 0..pts.len() {
            for j in 0..i {
                let d = geometry::dist(pts[i], pts[j]);
                if d == 0.0 || d > c.delta_l {
                    continue;
                }
                let e = geometry::dist(&l.apply(pts[i]), &l.apply(pts[j]));
                let slack = 1.0 + 1e-12;
                if e > c.c_l * d * slack || d / (-d.ln()).powf(c.gamma) > c.c_l * e * slack {
                    bad += 1;
                }
            }
        }
        bad
    }

    #[test]
    fn planar_cycle_hundred_seeds() {
        let sample = planar_sample(11);
        let mut clean = 0;
        for seed in 0..100 {
            let mut l = draw_embedding(32, 7, 1000 + seed).unwrap();
            if let Ok(fit) = verify_bilipschitz(&mut l, &sample, 0.95, None, 1e3) {
                if fit.violation_fraction == 0.0 && violations(&l, &sample) == 0 {
                    clean += 1;
                }
            }
        }
        assert!(clean >= 95, "{clean} of 100 seeds clean");
    }

    #[test]
    fn cap_reports_violations() {
        let sample = planar_sample(11);
        let mut l = draw_embedding(32, 7, 4).unwrap();
        let fit = verify_bilipschitz(&mut l, &sample, 0.95, None, 1e3).unwrap();
        let capped = verify_bilipschitz(&mut l, &sample, 0.95, None, fit.c_l * 0.5).unwrap();
        assert!(capped.violation_fraction > 0.0 && capped.violation_fraction <= 1.0);
        assert!(find_embedding(&sample, 7, 0.95, 0, 3, None, 1e-6).is_err());
        let found = find_embedding(&sample, 7, 0.95, 0, 20, None, 1e3).unwrap();
        assert_eq!(found.rejected, 0);
    }

    #[test]
    fn augmentation() {
        let l = draw_embedding(32, 7, 2).unwrap();
        let a = augment(&l).unwrap();
        assert!(a.augmented && a.rows == 8);
        assert!(a.matrix[7 * 32..].iter().all(|&v| v == 0.0));
        assert!(augment(&a).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let u: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (lu, lv, au, av) = (l.apply(&u), l.apply(&v), a.apply(&u), a.apply(&v));
            assert_eq!(au[7], 0.0);
            assert_eq!(geometry::dist(&lu, &lv), geometry::dist(&au, &av));
        }
    }

    #[test]
    fn projection() {
        let mut spec = SystemSpec::new(SystemKind::PointSink);
        spec.lift_seed = 1;
        let sys = System::new(spec).unwrap();
        let sink = sample_attractor(&sys, 5, 40.0, 1e-3, 1, 1e-10).unwrap();
        let mut l = draw_embedding(32, 7, 1).unwrap();
        assert!(project_sample(&l, &sink).is_err());
        verify_bilipschitz(&mut l, &sink, 0.95, None, 1e3).unwrap();
        let e = project_sample(&l, &sink).unwrap();
        assert_eq!(e.len(), 1);
        assert!(e.cloud.point(0).iter().all(|v| v.abs() < 1e-9));
        assert!(e.g1_values.point(0).iter().all(|v| v.abs() < 1e-9));

        let sample = planar_sample(5);
        let mut l = draw_embedding(32, 7, 3).unwrap();
        verify_bilipschitz(&mut l, &sample, 0.95, None, 1e3).unwrap();
        let e = project_sample(&l, &sample).unwrap();
        let gmax = sample.field_values.points().map(geometry::norm).fold(0.0, f64::max);
        for i in 0..e.len() {
            assert_eq!(e.g1_values.point(i), l.apply(sample.field_values.point(i)).as_slice());
            assert!(geometry::norm(e.g1_values.point(i)) <= l.op_norm * gmax);
        }
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let sample = planar_sample(5);
        let mut l = augment(&draw_embedding(32, 7, 3).unwrap()).unwrap();
        verify_bilipschitz(&mut l, &sample, 0.95, None, 1e3).unwrap();
        l.save(dir.path()).unwrap();
        assert_eq!(LinearEmbedding::load(dir.path()).unwrap(), l);
    }

    proptest! {
        #[test]
        fn upper_bound_from_op_norm(seed in 0u64..500, m in 1usize..12) {
            let l = draw_embedding(16, m, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
            let v: Vec<f64> = (0..16).map(|_| rng.random_range(-3.0..3.0)).collect();
            prop_assert!(geometry::dist(&l.apply(&u), &l.apply(&v)) <= l.op_norm * geometry::dist(&u, &v));
        }

        #[test]
        fn linear_projection(seed in 0u64..100, alpha in -5.0f64..5.0) {
            let l = draw_embedding(12, 4, seed).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scaled: Vec<f64> = u.iter().map(|x| alpha * x).collect();
            let a = l.apply(&scaled);
            let b: Vec<f64> = l.apply(&u).iter().map(|x| alpha * x).collect();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
