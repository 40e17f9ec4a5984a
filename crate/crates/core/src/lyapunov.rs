//! Softmin Lyapunov function around the embedded cloud and the combined
//! field `θ g - κ (1 - θ̃) ∇φ`.
//!
//! `φ(x) = -(1/β) ln((1/n) Σ exp(-β |x - p_i|²))` is evaluated with the
//! max-shift trick, so `min d² <= φ <= min d² + ln(n)/β` holds in floating
//! point without tolerance.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::ExtendedField;
use crate::geometry::{self, PointCloud};
use crate::ode::VectorField;
use crate::systems::{stream_rng, uniform_in_ball};

/// `exp(-t)` is exactly zero in f64 beyond this.
const UNDERFLOW: f64 = 746.0;
/// Largest number of β doublings tried by [`beta_ladder`].
pub const MAX_DOUBLINGS: usize = 8;

#[derive(Debug, Clone)]
pub struct LyapunovField {
    pub cloud: PointCloud,
    pub beta: f64,
    pub delta: f64,
    /// Zero switches the collar off entirely.
    pub delta_collar: f64,
    pub eps: f64,
    /// Factor `κ` on the inward term `-κ ∇φ`; φ and `P` do not depend on it.
    pub gain: f64,
    ln_n: f64,
}

/// Largest nearest-neighbour distance over the cloud.
pub fn max_gap(cloud: &PointCloud) -> f64 {
    if cloud.len() < 2 {
        return 0.0;
    }
    (0..cloud.len())
        .into_par_iter()
        .map(|i| cloud.nearest(cloud.point(i), 2).map(|nb| nb[1].distance).unwrap_or(0.0))
        .reduce(|| 0.0, f64::max)
}

/// Smooth step: 1 on `s <= 1/3`, 0 on `s >= 2/3`, C^∞ and strictly
/// decreasing in between.
pub fn chi(s: f64) -> f64 {
    if s <= 1.0 / 3.0 {
        return 1.0;
    }
    if s >= 2.0 / 3.0 {
        return 0.0;
    }
    let u = 3.0 * s - 1.0;
    let a = (-1.0 / (1.0 - u)).exp();
    let b = (-1.0 / u).exp();
    a / (a + b)
}

struct Softmin {
    dmin: f64,
    phi: f64,
    /// `Σ w_i p_i`, when requested.
    centroid: Option<Vec<f64>>,
}

impl LyapunovField {
    /// Validates `δ <= ε²` and `β >= 3 ln(n)/δ`.
    pub fn new(cloud: PointCloud, eps: f64, delta: f64, beta: f64, delta_collar: f64) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::domain("Lyapunov field needs a non-empty cloud"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::domain(format!("eps = {eps} must be positive")));
        }
        if !(delta > 0.0 && delta <= eps * eps) {
            return Err(Error::domain(format!("delta = {delta} must lie in (0, eps^2 = {}]", eps * eps)));
        }
        let ln_n = (cloud.len() as f64).ln();
        if !(beta.is_finite() && beta > 0.0 && beta >= 3.0 * ln_n / delta) {
            return Err(Error::domain(format!("beta = {beta} is below 3 ln(n)/delta = {}", 3.0 * ln_n / delta)));
        }
        if !(0.0..delta).contains(&delta_collar) {
            return Err(Error::domain(format!("delta_collar = {delta_collar} must lie in [0, delta)")));
        }
        Ok(LyapunovField { cloud, beta, delta, delta_collar, eps, gain: 1.0, ln_n })
    }

    /// Defaults: `δ = ε²/2`, `β = max(3 ln n/δ, 10/thin²)` and
    /// `δ_collar = min(0.9 h² + 6 ln(n)/β, 0.9 δ)` with `h` the largest
    /// nearest-neighbour gap, so that `φ < δ_collar/3` holds midway between
    /// neighbours and the inward term never drags a trajectory back to the
    /// sample point it just passed. No collar for a single point, whose
    /// gradient vanishes on the cloud.
    pub fn with_defaults(cloud: PointCloud, eps: f64, delta: Option<f64>, beta: Option<f64>, thin: f64) -> Result<Self> {
        let delta = delta.unwrap_or(eps * eps / 2.0);
        let n = cloud.len() as f64;
        let beta = beta.unwrap_or_else(|| {
            let base = 3.0 * n.ln() / delta;
            if thin > 0.0 { base.max(10.0 / (thin * thin)) } else { base.max(1.0 / delta) }
        });
        let collar = if cloud.len() == 1 {
            0.0
        } else {
            let h = max_gap(&cloud);
            (0.9 * h * h + 6.0 * n.ln() / beta).min(0.9 * delta)
        };
        Self::new(cloud, eps, delta, beta, collar)
    }

    /// Same field with β replaced.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.cloud.clone(), self.eps, self.delta, beta, self.delta_collar)?.with_gain(self.gain)
    }

    pub fn with_gain(mut self, gain: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::domain(format!("gain = {gain} must be positive")));
        }
        self.gain = gain;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    /// `ln(n)/β`, the width of the sandwich.
    pub fn tolerance(&self) -> f64 {
        self.ln_n / self.beta
    }

    fn softmin(&self, x: &[f64], with_centroid: bool) -> Softmin {
        let (i0, _) = self.cloud.nearest_sq(x).expect("cloud is non-empty");
        let d0 = geometry::sq_dist(x, self.cloud.point(i0));
        let mut hits = Vec::new();
        self.cloud.within(x, (d0 + UNDERFLOW / self.beta).sqrt(), &mut hits);
        // index order keeps the sum identical to a full scan
        hits.sort_unstable_by_key(|h| h.0);
        let d2: Vec<f64> = hits.iter().map(|&(i, _)| geometry::sq_dist(x, self.cloud.point(i))).collect();
        let dmin = d2.iter().copied().fold(d0, f64::min);
        let mut s = 0.0;
        let mut c = if with_centroid { Some(vec![0.0; x.len()]) } else { None };
        for (&(i, _), &d) in hits.iter().zip(&d2) {
            let e = (-self.beta * (d - dmin)).exp();
            s += e;
            if let Some(c) = c.as_mut() {
                for (ck, pk) in c.iter_mut().zip(self.cloud.point(i)) {
                    *ck += e * pk;
                }
            }
        }
        let gap = (self.ln_n - s.ln()).clamp(0.0, self.ln_n);
        if let Some(c) = c.as_mut() {
            c.iter_mut().for_each(|v| *v /= s);
        }
        Softmin { dmin, phi: dmin + gap / self.beta, centroid: c }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        self.softmin(x, false).phi
    }

    /// `(min_i |x - p_i|², φ(x))`.
    pub fn phi_parts(&self, x: &[f64]) -> (f64, f64) {
        let s = self.softmin(x, false);
        (s.dmin, s.phi)
    }

    /// Softmax-weighted centroid `Σ w_i p_i`.
    pub fn centroid(&self, x: &[f64]) -> Vec<f64> {
        self.softmin(x, true).centroid.expect("requested")
    }

    /// `∇φ(x) = 2 (x - Σ w_i p_i)`.
    pub fn grad_phi(&self, x: &[f64]) -> Vec<f64> {
        self.centroid(x).iter().zip(x).map(|(c, xi)| 2.0 * (xi - c)).collect()
    }

    /// Softmax weights over the whole cloud (diagnostics and tests).
    pub fn weights(&self, x: &[f64]) -> Vec<f64> {
        let d2: Vec<f64> = self.cloud.points().map(|p| geometry::sq_dist(x, p)).collect();
        let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
        let e: Vec<f64> = d2.iter().map(|d| (-self.beta * (d - dmin)).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn theta(&self, x: &[f64]) -> f64 {
        chi(self.phi(x) / self.delta)
    }

    fn theta_collar_of(&self, phi: f64) -> f64 {
        if self.delta_collar > 0.0 { chi(phi / self.delta_collar) } else { 0.0 }
    }

    /// Largest `|∇φ|` over the cloud points.
    pub fn sup_grad_on_cloud(&self) -> f64 {
        (0..self.cloud.len())
            .into_par_iter()
            .map(|i| geometry::norm(&self.grad_phi(self.cloud.point(i))))
            .reduce(|| 0.0, f64::max)
    }

    pub fn save(&self, dir: &Path, sup_grad_on_cloud: f64, g_min_found: f64) -> Result<()> {
        let doc = LyapunovRecord {
            beta: self.beta,
            delta: self.delta,
            delta_collar: self.delta_collar,
            eps: self.eps,
            gain: self.gain,
            sup_grad_on_cloud,
            g_min_found,
        };
        fs::write(dir.join("lyapunov.json"), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, cloud: PointCloud) -> Result<(Self, LyapunovRecord)> {
        let rec: LyapunovRecord = serde_json::from_str(&fs::read_to_string(dir.join("lyapunov.json"))?)?;
        Ok((Self::new(cloud, rec.eps, rec.delta, rec.beta, rec.delta_collar)?.with_gain(rec.gain)?, rec))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovRecord {
    pub beta: f64,
    pub delta: f64,
    pub delta_collar: f64,
    pub eps: f64,
    #[serde(default = "unit_gain")]
    pub gain: f64,
    pub sup_grad_on_cloud: f64,
    pub g_min_found: f64,
}

fn unit_gain() -> f64 {
    1.0
}

/// `ẋ = -κ ∇φ(x)`.
pub struct GradientFlow<'a>(pub &'a LyapunovField);

impl VectorField for GradientFlow<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (o, g) in out.iter_mut().zip(self.0.grad_phi(x)) {
            *o = -self.0.gain * g;
        }
    }
}

/// `θ g - κ (1 - θ̃) ∇φ` over a shared cloud; `κ = 1` unless configured.
pub struct CombinedField<'a> {
    pub lf: &'a LyapunovField,
    pub ext: &'a ExtendedField,
}

impl<'a> CombinedField<'a> {
    pub fn new(lf: &'a LyapunovField, ext: &'a ExtendedField) -> Result<Self> {
        if lf.cloud != *ext.cloud() {
            return Err(Error::domain("Lyapunov field and extension are built on different clouds"));
        }
        Ok(CombinedField { lf, ext })
    }

    /// Field value together with `φ(x)`.
    pub fn eval_with_phi(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let s = self.lf.softmin(x, true);
        let theta = chi(s.phi / self.lf.delta);
        let collar = self.lf.theta_collar_of(s.phi);
        out.fill(0.0);
        if theta > 0.0 {
            self.ext.eval(x, out);
            out.iter_mut().for_each(|v| *v *= theta);
        }
        if collar < 1.0 {
            let c = s.centroid.expect("requested");
            let grad: Vec<f64> = x.iter().zip(&c).map(|(xi, ci)| 2.0 * (xi - ci)).collect();
            let w = self.lf.gain * (1.0 - collar);
            out.iter_mut().zip(&grad).for_each(|(o, g)| *o -= w * g);
        }
        s.phi
    }
}

impl VectorField for CombinedField<'_> {
    fn dim(&self) -> usize {
        self.lf.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.eval_with_phi(x, out);
    }
}

/// Deterministic samples of `B ∖ P` with `B` the origin-centred ball of
/// radius `b_radius`: half uniform in `B`, half in a shell `√δ..3√δ` around
/// cloud points. Rejections are redrawn from the same per-sample stream.
pub fn sample_outside_p(lf: &LyapunovField, b_radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let origin = vec![0.0; lf.dim()];
    let sd = lf.delta.sqrt();
    (0..count)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            for _ in 0..1000 {
                let x = if k % 2 == 0 {
                    uniform_in_ball(&mut rng, &origin, b_radius)
                } else {
                    let p = lf.cloud.point(rng.random_range(0..lf.cloud.len()));
                    let r = rng.random_range(sd..3.0 * sd);
                    let u = uniform_in_ball(&mut rng, &origin, 1.0);
                    let nu = geometry::norm(&u).max(f64::MIN_POSITIVE);
                    p.iter().zip(&u).map(|(pi, ui)| pi + r * ui / nu).collect()
                };
                if geometry::norm(&x) <= b_radius && lf.phi(&x) > lf.delta {
                    return Some(x);
                }
            }
            None
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LadderOutcome {
    pub field: LyapunovField,
    pub doublings: usize,
    /// Smallest `|∇φ|` over the samples at the final β.
    pub g_min_found: f64,
    pub worst_point: Vec<f64>,
}

fn min_grad(lf: &LyapunovField, samples: &[Vec<f64>]) -> (f64, usize) {
    samples
        .par_iter()
        .enumerate()
        .map(|(k, x)| (geometry::norm(&lf.grad_phi(x)), k))
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if (b.0, b.1) < (a.0, a.1) { b } else { a })
}

/// Double β until no sample of `B ∖ P` has `|∇φ| < g_min`, at most
/// [`MAX_DOUBLINGS`] times.
pub fn beta_ladder(lf: LyapunovField, b_radius: f64, g_min: f64, samples: usize, seed: u64) -> Result<LadderOutcome> {
    let mut field = lf;
    for doublings in 0..=MAX_DOUBLINGS {
        let pts = sample_outside_p(&field, b_radius, samples, seed);
        let (g, k) = min_grad(&field, &pts);
        let worst_point = pts.get(k).cloned().unwrap_or_default();
        if g >= g_min {
            return Ok(LadderOutcome { field, doublings, g_min_found: g, worst_point });
        }
        if doublings == MAX_DOUBLINGS {
            return Err(Error::BetaLadder(format!(
                "|grad phi| = {g:e} < {g_min:e} at {worst_point:?} after {MAX_DOUBLINGS} doublings (beta = {})",
                field.beta
            )));
        }
        field = field.with_beta(field.beta * 2.0)?;
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddedCloud;
    use crate::extension::Modulus;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(seed: u64, n: usize, dim: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(dim, (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn circle(n: usize) -> PointCloud {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                vec![t.cos(), t.sin(), 0.0]
            })
            .collect();
        PointCloud::from_rows(&rows).unwrap()
    }

    #[test]
    fn chi_shape() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0 / 3.0), 1.0);
        assert_eq!(chi(2.0 / 3.0), 0.0);
        assert_eq!(chi(5.0), 0.0);
        assert!((chi(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = chi(1.0 / 3.0 + k as f64 / 3000.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn single_point_phi() {
        let p = vec![0.3, -0.2];
        let lf = LyapunovField::new(PointCloud::new(2, p.clone()).unwrap(), 0.1, 0.005, 10.0, 0.0).unwrap();
        let x = [1.0, 2.0];
        assert_eq!(lf.phi(&x), geometry::sq_dist(&x, &p));
        let g = lf.grad_phi(&x);
        assert!((g[0] - 1.4).abs() < 1e-15 && (g[1] - 4.4).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let c = random_cloud(1, 10, 2);
        assert!(LyapunovField::new(c.clone(), 0.1, 0.02, 1e6, 0.0).is_err());
        assert!(LyapunovField::new(c.clone(), 0.1, 0.005, 1.0, 0.0).is_err());
        assert!(LyapunovField::new(c.clone(), 0.1, 0.005, 1e4, 0.005).is_err());
        let h = max_gap(&c);
        let lf = LyapunovField::with_defaults(c, 0.1, None, None, 0.05).unwrap();
        let delta = 0.1 * 0.1 / 2.0;
        assert_eq!(lf.delta, delta);
        assert_eq!(lf.beta, (3.0 * 10f64.ln() / delta).max(10.0 / (0.05 * 0.05)));
        assert_eq!(lf.delta_collar, (0.9 * h * h + 6.0 * 10f64.ln() / lf.beta).min(0.9 * delta));
    }

    #[test]
    fn sandwich_exact_on_random_points() {
        let cloud = random_cloud(2, 200, 4);
        for beta in [20.0, 400.0, 1e5] {
            let lf = LyapunovField::new(cloud.clone(), 2.0, 4.0, beta, 0.05).unwrap();
            let tol = (200f64).ln() / beta;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..10_000 {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let dmin = cloud.points().map(|p| geometry::sq_dist(&x, p)).fold(f64::INFINITY, f64::min);
                let phi = lf.phi(&x);
                assert!(dmin <= phi && phi <= dmin + tol, "{dmin} {phi} {tol}");
            }
            for p in cloud.points() {
                let phi = lf.phi(p);
                assert!((0.0..=tol).contains(&phi));
            }
        }
    }

    #[test]
    fn far_field_is_quadratic() {
        let lf = LyapunovField::new(random_cloud(4, 50, 3), 1.0, 0.5, 50.0, 0.05).unwrap();
        let dir = [0.6, 0.0, 0.8];
        let ratios: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&s| lf.phi(&dir.map(|d| d * s)) / (s * s)).collect();
        assert!((ratios[2] - 1.0).abs() < 1e-5);
        assert!((ratios[2] - 1.0).abs() < (ratios[0] - 1.0).abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cloud = random_cloud(5, 50, 3);
        let lf = LyapunovField::new(cloud, 1.0, 0.5, 30.0, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-5;
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g = lf.grad_phi(&x);
            let fd: Vec<f64> = (0..3)
                .map(|k| {
                    let (mut a, mut b) = (x.clone(), x.clone());
                    a[k] += h;
                    b[k] -= h;
                    (lf.phi(&a) - lf.phi(&b)) / (2.0 * h)
                })
                .collect();
            let err = geometry::dist(&g, &fd) / geometry::norm(&g).max(1e-3);
            assert!(err <= 1e-6, "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn two_point_midpoint_is_critical() {
        let cloud = PointCloud::from_rows(&[vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let lf = LyapunovField::new(cloud, 1.0, 0.5, 10.0, 0.05).unwrap();
        assert_eq!(lf.grad_phi(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn centroid_is_convex_combination() {
        let lf = LyapunovField::new(random_cloud(7, 60, 2), 1.0, 0.5, 80.0, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w = lf.weights(&x);
            assert!(w.iter().all(|&v| v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let c: Vec<f64> = (0..2).map(|k| lf.cloud.points().zip(&w).map(|(p, wi)| wi * p[k]).sum()).collect();
            assert!(geometry::dist(&c, &lf.centroid(&x)) < 1e-12);
        }
    }

    fn circle_setup() -> (LyapunovField, ExtendedField) {
        let cloud = circle(200);
        let vals: Vec<f64> = cloud.points().flat_map(|p| [-p[1], p[0], 0.0]).collect();
        let base = EmbeddedCloud::new(cloud.clone(), PointCloud::new(3, vals).unwrap()).unwrap();
        let ext = ExtendedField::fit(base, Modulus::new(1.0, 1.0, 0.95, 2.0).unwrap()).unwrap();
        let lf = LyapunovField::with_defaults(cloud, 0.05, None, None, 0.03).unwrap();
        (lf, ext)
    }

    #[test]
    fn combined_field_regimes() {
        let (lf, ext) = circle_setup();
        // the inner collar covers the cloud once ln(n)/β < δ_collar/3
        let lf = lf.with_beta(1e6).unwrap();
        let f = CombinedField::new(&lf, &ext).unwrap();
        let mut out = vec![0.0; 3];
        // outside P
        let x = [0.5, 0.2, 0.1];
        assert!(lf.phi(&x) > lf.delta);
        f.eval(&x, &mut out);
        assert_eq!(out, lf.grad_phi(&x).iter().map(|g| -g).collect::<Vec<_>>());
        // on the cloud: inner collar
        for i in [0, 17, 123] {
            let p = lf.cloud.point(i);
            f.eval(p, &mut out);
            assert_eq!(out, ext.base.g1_values.point(i));
        }
        let other = LyapunovField::with_defaults(circle(100), 0.05, None, None, 0.03).unwrap();
        assert!(CombinedField::new(&other, &ext).is_err());
    }

    #[test]
    fn descent_outside_p() {
        let (lf, ext) = circle_setup();
        let f = CombinedField::new(&lf, &ext).unwrap();
        let mut out = vec![0.0; 3];
        for x in sample_outside_p(&lf, 3.0, 500, 9) {
            f.eval(&x, &mut out);
            let g = lf.grad_phi(&x);
            let dot: f64 = g.iter().zip(&out).map(|(a, b)| a * b).sum();
            let n2: f64 = g.iter().map(|a| a * a).sum();
            assert!((dot + n2).abs() <= 1e-12 * n2.max(1.0));
        }
    }

    #[test]
    fn p_lies_in_eps_neighbourhood() {
        let (lf, _) = circle_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut inside = 0;
        while inside < 2000 {
            let p = lf.cloud.point(rng.random_range(0..200));
            let x: Vec<f64> = p.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect();
            let (dmin, phi) = lf.phi_parts(&x);
            if phi <= lf.delta {
                inside += 1;
                assert!(dmin.sqrt() <= lf.delta.sqrt() && lf.delta.sqrt() <= lf.eps);
            }
        }
    }

    #[test]
    fn ladder_escalates() {
        let cloud = PointCloud::from_rows(&[vec![-0.1, 0.0], vec![0.1, 0.0]]).unwrap();
        let lf = LyapunovField::new(cloud, 0.1, 0.005, 420.0, 0.0005).unwrap();
        // the symmetric midpoint is a critical point outside P
        assert!(lf.phi(&[0.0, 0.0]) > lf.delta);
        assert_eq!(lf.grad_phi(&[0.0, 0.0]), vec![0.0, 0.0]);
        let levels: Vec<f64> = (0..=MAX_DOUBLINGS)
            .map(|k| {
                let f = lf.with_beta(lf.beta * 2f64.powi(k as i32)).unwrap();
                min_grad(&f, &sample_outside_p(&f, 1.0, 256, 1)).0
            })
            .collect();
        let later = levels[1..].iter().copied().fold(0.0, f64::max);
        assert!(later > levels[0], "{levels:?}");
        let g_min = 0.5 * (levels[0] + later);
        let out = beta_ladder(lf.clone(), 1.0, g_min, 256, 1).unwrap();
        assert!(out.doublings >= 1 && out.g_min_found >= g_min);
        assert_eq!(out.field.beta, lf.beta * 2f64.powi(out.doublings as i32));
        assert_eq!(beta_ladder(lf.clone(), 1.0, 0.0, 64, 1).unwrap().doublings, 0);
        assert!(matches!(beta_ladder(lf, 1.0, 1e9, 64, 1), Err(Error::BetaLadder(_))));
    }

    #[test]
    fn outside_samples_are_deterministic() {
        let (lf, _) = circle_setup();
        let a = sample_outside_p(&lf, 3.0, 200, 4);
        let b = sample_outside_p(&lf, 3.0, 200, 4);
        assert_eq!(a, b);
        assert!(a.iter().all(|x| lf.phi(x) > lf.delta && geometry::norm(x) <= 3.0));
    }

    #[test]
    fn persistence() {
        let dir = tempfile::tempdir().unwrap();
        let (lf, _) = circle_setup();
        lf.save(dir.path(), 0.1, 0.2).unwrap();
        let (back, rec) = LyapunovField::load(dir.path(), lf.cloud.clone()).unwrap();
        assert_eq!(back.beta, lf.beta);
        assert_eq!(back.delta_collar, lf.delta_collar);
        assert_eq!(rec.g_min_found, 0.2);
    }

    proptest! {
        #[test]
        fn sandwich_prop(seed in 0u64..10_000, beta in 1.0f64..1e6) {
            let cloud = random_cloud(seed, 30, 3);
            let lf = LyapunovField::new(cloud.clone(), 10.0, 50.0, beta.max(3.0 * 30f64.ln() / 50.0), 0.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let dmin = cloud.points().map(|p| geometry::sq_dist(&x, p)).fold(f64::INFINITY, f64::min);
            let phi = lf.phi(&x);
            prop_assert!(dmin <= phi && phi <= dmin + lf.tolerance());
        }

        #[test]
        fn theta_monotone_in_phi(a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(chi(lo) >= chi(hi));
        }
    }
}
