//! Covering-number diagnostics: doubling constants, Assouad-type exponents,
//! box counting, and the dimension/exponent gates.
//!
//! Doubling constants use a guided greedy cover of each ball: the ball at
//! the center first, then repeatedly the uncovered point farthest from the
//! center is covered by the candidate ball holding the most uncovered points.
//! Exponent fits count, inside each ball, the points of a farthest-first
//! `ρ`-net of the whole cloud. Those points are `ρ`-separated, so the count
//! lies between the `ρ`- and `ρ/2`-covering numbers of the ball, and one
//! traversal serves every center and radius. Counts are non-increasing in `ρ`
//! because the nets are nested.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sq_dist, PointCloud};

/// Upper bound on the number of ball centers sampled per scale.
pub const MAX_CENTERS: usize = 64;

/// Most candidate centers scored per greedy step.
const MAX_CANDIDATES: usize = 64;

/// Guided greedy count of `rho`-balls covering `cloud ∩ B(center, r)`.
pub fn greedy_cover_count(cloud: &PointCloud, center: &[f64], r: f64, rho: f64) -> usize {
    greedy_cover_centers(cloud, center, r, rho).len()
}

/// Centers of the guided greedy cover of `cloud ∩ B(center, r)`.
pub fn greedy_cover_centers(cloud: &PointCloud, center: &[f64], r: f64, rho: f64) -> Vec<Vec<f64>> {
    let mut hits = Vec::new();
    cloud.within(center, r, &mut hits);
    if hits.is_empty() {
        return Vec::new();
    }
    hits.sort_by_key(|&(i, _)| i);
    let mut local = vec![u32::MAX; cloud.len()];
    for (k, &(i, _)) in hits.iter().enumerate() {
        local[i] = k as u32;
    }
    greedy_cover(cloud, center, &hits, &local, rho)
}

/// Cover the targets `hits` (local ids via `local`) by `rho`-balls centered at
/// targets. The first ball sits at `center`; each further step takes
/// the uncovered target farthest from `center` and covers it with the
/// candidate ball holding the most uncovered targets. Redundant balls are
/// dropped at the end. Returns the ball centers.
fn greedy_cover(cloud: &PointCloud, center: &[f64], hits: &[(usize, f64)], local: &[u32], rho: f64) -> Vec<Vec<f64>> {
    let m = hits.len();
    let mut buf = Vec::new();
    let mut ball = |q: &[f64], out: &mut Vec<u32>| {
        buf.clear();
        cloud.within(q, rho, &mut buf);
        out.clear();
        out.extend(buf.iter().map(|&(j, _)| local[j]).filter(|&l| l != u32::MAX));
    };
    let mut covered = vec![false; m];
    let mut left = m;
    let mut chosen: Vec<(&[f64], Vec<u32>)> = Vec::new();
    let take = |members: &[u32], covered: &mut [bool]| {
        members.iter().filter(|&&l| !std::mem::replace(&mut covered[l as usize], true)).count()
    };
    let mut members = Vec::new();
    ball(center, &mut members);
    left -= take(&members, &mut covered);
    chosen.push((center, members.clone()));

    let mut by_dist: Vec<usize> = (0..m).collect();
    by_dist.sort_by(|&a, &b| hits[b].1.total_cmp(&hits[a].1).then(a.cmp(&b)));
    let mut cursor = 0;
    let mut cand = Vec::new();
    while left > 0 {
        while covered[by_dist[cursor]] {
            cursor += 1;
        }
        let far = cloud.point(hits[by_dist[cursor]].0);
        cand.clear();
        cloud.within(far, rho, &mut cand);
        cand.retain(|&(j, _)| local[j] != u32::MAX);
        cand.sort_by_key(|&(j, _)| j);
        let stride = cand.len().div_ceil(MAX_CANDIDATES).max(1);
        let mut best: (usize, usize, Vec<u32>) = (0, 0, Vec::new());
        for &(j, _) in cand.iter().step_by(stride) {
            ball(cloud.point(j), &mut members);
            let gain = members.iter().filter(|&&l| !covered[l as usize]).count();
            if gain > best.0 {
                best = (gain, j, members.clone());
            }
        }
        left -= take(&best.2, &mut covered);
        chosen.push((cloud.point(best.1), best.2));
    }
    // drop balls whose targets are all covered by the others, latest first
    let mut mult = vec![0u32; m];
    for (_, c) in &chosen {
        c.iter().for_each(|&l| mult[l as usize] += 1);
    }
    let mut keep = vec![true; chosen.len()];
    for k in (1..chosen.len()).rev() {
        let c = &chosen[k].1;
        if c.iter().all(|&l| mult[l as usize] >= 2) {
            c.iter().for_each(|&l| mult[l as usize] -= 1);
            keep[k] = false;
        }
    }
    chosen.into_iter().zip(keep).filter(|(_, k)| *k).map(|((c, _), _)| c.to_vec()).collect()
}

/// Insertion radius of every point in a farthest-first traversal of the
/// whole cloud started at index 0: the first point gets `inf`, each later
/// point its distance to the earlier selections when chosen, and points never
/// selected before the farthest remaining distance drops to `stop` get 0.
/// The points with insertion radius above `ρ` form a `ρ`-net of the cloud.
pub fn insertion_radii(cloud: &PointCloud, stop: f64) -> Vec<f64> {
    let n = cloud.len();
    let mut radius = vec![0.0; n];
    if n == 0 {
        return radius;
    }
    radius[0] = f64::INFINITY;
    let mut min_d2: Vec<f64> = cloud.points().map(|p| sq_dist(p, cloud.point(0))).collect();
    let stop2 = stop * stop;
    loop {
        let (best, d2) = min_d2
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (k, &d)| if d > acc.1 { (k, d) } else { acc });
        if d2 <= stop2 {
            break;
        }
        radius[best] = d2.sqrt();
        let c = cloud.point(best);
        min_d2.par_iter_mut().zip(cloud.as_flat().par_chunks_exact(cloud.dim())).for_each(|(m, p)| {
            let d = sq_dist(p, c);
            if d < *m {
                *m = d;
            }
        });
    }
    radius
}

/// Number of `ρ`-net points (per `insertion_radii`) inside `B(center, r)`,
/// one count per entry of `rhos`.
fn net_counts(cloud: &PointCloud, radius: &[f64], center: &[f64], r: f64, rhos: &[f64]) -> Vec<usize> {
    let mut hits = Vec::new();
    cloud.within(center, r, &mut hits);
    rhos.iter().map(|&rho| hits.iter().filter(|&&(i, _)| radius[i] > rho).count()).collect()
}

fn sample_centers(n: usize, seed: u64) -> Vec<usize> {
    let k = n.min(MAX_CENTERS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingEstimate {
    pub k_est: usize,
    /// `(r, max count)` for every scale that was used.
    pub per_scale: Vec<(f64, usize)>,
    /// Scales below twice the cloud resolution, excluded from the max.
    pub flagged: Vec<f64>,
}

/// Largest greedy count of `r/2`-balls needed to cover `cloud ∩ B(x, r)`,
/// over sampled centers `x` and the given radii.
pub fn doubling_constant(cloud: &PointCloud, radii: &[f64], seed: u64) -> Result<DoublingEstimate> {
    if cloud.is_empty() {
        return Err(Error::domain("doubling constant of an empty cloud"));
    }
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::domain("radii must be positive and finite"));
    }
    let floor = 2.0 * cloud.resolution();
    let centers = sample_centers(cloud.len(), seed);
    let mut est = DoublingEstimate { k_est: 1, per_scale: Vec::new(), flagged: Vec::new() };
    for &r in radii {
        if r < floor {
            est.flagged.push(r);
            continue;
        }
        let count = centers
            .par_iter()
            .map(|&c| greedy_cover_count(cloud, cloud.point(c), r, r / 2.0))
            .max()
            .unwrap_or(1);
        est.per_scale.push((r, count));
        est.k_est = est.k_est.max(count);
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub s: f64,
    pub m: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringCount {
    pub r: f64,
    pub rho: f64,
    pub count: usize,
    pub usable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringStats {
    /// Distinct radii, decreasing.
    pub scales: Vec<f64>,
    pub counts: Vec<CoveringCount>,
    pub fit: Fit,
}

impl CoveringStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,rho,count,usable\n");
        for c in &self.counts {
            let _ = writeln!(out, "{:?},{:?},{},{}", c.r, c.rho, c.count, c.usable);
        }
        out
    }
}

/// Least-squares line `y = a + b x`; returns `(a, b, rms residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let ss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (a, b, (ss / n).sqrt())
}

/// Multiple of the cloud resolution below which a covering radius is not fitted.
pub const FIT_FLOOR: f64 = 4.0;

/// Fit `log N(x, r, ρ) ≈ log M + s log(r/ρ)` by least squares over every
/// sampled center `x` and every pair `(r_list[i], rho_list[i])`, where `N`
/// counts the farthest-first `ρ`-net points inside `B(x, r)`. Pairs with `ρ`
/// below `FIT_FLOOR` times the cloud resolution are recorded but not fitted.
/// The reported count of a pair is its maximum over centers.
pub fn assouad_estimate(cloud: &PointCloud, r_list: &[f64], rho_list: &[f64], seed: u64) -> Result<CoveringStats> {
    if cloud.is_empty() {
        return Err(Error::domain("Assouad estimate of an empty cloud"));
    }
    if r_list.len() != rho_list.len() {
        return Err(Error::domain("r_list and rho_list must pair up"));
    }
    if r_list.iter().chain(rho_list).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::domain("radii must be positive and finite"));
    }
    if r_list.iter().zip(rho_list).any(|(r, rho)| rho >= r) {
        return Err(Error::domain("every rho must be smaller than its paired r"));
    }
    let mut scales: Vec<f64> = r_list.to_vec();
    scales.sort_by(|a, b| b.total_cmp(a));
    scales.dedup();
    let pairs: Vec<(f64, f64)> = r_list.iter().copied().zip(rho_list.iter().copied()).collect();
    if cloud.len() == 1 {
        let counts = pairs.iter().map(|&(r, rho)| CoveringCount { r, rho, count: 1, usable: true }).collect();
        return Ok(CoveringStats { scales, counts, fit: Fit { s: 0.0, m: 1.0, residual: 0.0 } });
    }
    let floor = FIT_FLOOR * cloud.resolution();
    let smallest = rho_list.iter().copied().fold(f64::INFINITY, f64::min);
    let radius = insertion_radii(cloud, smallest.max(floor));
    let centers = sample_centers(cloud.len(), seed);
    let mut counts = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(r, rho) in &pairs {
        let per_center: Vec<usize> =
            centers.par_iter().map(|&c| net_counts(cloud, &radius, cloud.point(c), r, &[rho])[0]).collect();
        let usable = rho >= floor;
        if usable {
            for &c in per_center.iter().filter(|&&c| c > 0) {
                xs.push((r / rho).ln());
                ys.push((c as f64).ln());
            }
        }
        counts.push(CoveringCount { r, rho, count: per_center.iter().copied().max().unwrap_or(1), usable });
    }
    let n_usable = counts.iter().filter(|c| c.usable).count();
    if n_usable < 3 {
        return Err(Error::domain(format!("only {n_usable} usable (r, rho) pairs, need at least 3")));
    }
    let (a, b, residual) = linear_fit(&xs, &ys);
    Ok(CoveringStats { scales, counts, fit: Fit { s: b.max(0.0), m: a.exp(), residual } })
}

/// Default radii for the Assouad fit: `r = diam / 4, diam / 8` and
/// `r / ρ = 4, 8, 16`. Small ratios are left out because boundary effects
/// flatten the log-log slope there.
pub fn default_scales(cloud: &PointCloud) -> (Vec<f64>, Vec<f64>) {
    let diam = cloud.diameter();
    let r_list = [diam / 4.0, diam / 8.0];
    let pairs: Vec<(f64, f64)> =
        r_list.iter().flat_map(|&r| [4.0, 8.0, 16.0].into_iter().map(move |t| (r, r / t))).collect();
    pairs.into_iter().unzip()
}

/// [`default_scales`] restricted to pairs whose `ρ` clears the resolution
/// floor. Sparse clouds that keep fewer than three pairs also get
/// `r = diam / 2`.
pub fn usable_scales(cloud: &PointCloud) -> (Vec<f64>, Vec<f64>) {
    let floor = FIT_FLOOR * cloud.resolution();
    let diam = cloud.diameter();
    let keep = |rs: &[f64]| -> Vec<(f64, f64)> {
        rs.iter()
            .flat_map(|&r| [4.0, 8.0, 16.0].into_iter().map(move |t| (r, r / t)))
            .filter(|&(_, rho)| rho >= floor)
            .collect()
    };
    let mut pairs = keep(&[diam / 4.0, diam / 8.0]);
    if pairs.len() < 3 {
        pairs = keep(&[diam / 2.0, diam / 4.0, diam / 8.0]);
    }
    pairs.into_iter().unzip()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCounting {
    pub d_est: f64,
    pub residual: f64,
    /// `(box size, occupied boxes)` inside the fit window.
    pub counts: Vec<(f64, usize)>,
}

/// Log-log slope of occupied grid boxes against inverse box size, using only
/// sizes in `[4 * resolution, diameter / 4]`.
pub fn box_counting(cloud: &PointCloud, scales: &[f64]) -> Result<BoxCounting> {
    if cloud.is_empty() {
        return Err(Error::domain("box counting of an empty cloud"));
    }
    if cloud.len() == 1 {
        return Ok(BoxCounting { d_est: 0.0, residual: 0.0, counts: Vec::new() });
    }
    let lo = 4.0 * cloud.resolution();
    let hi = cloud.diameter() / 4.0;
    let window: Vec<f64> = scales.iter().copied().filter(|&e| e >= lo && e <= hi && e > 0.0).collect();
    if window.len() < 2 {
        return Err(Error::domain(format!(
            "degenerate box-counting window: {} scales in [{lo:e}, {hi:e}]",
            window.len()
        )));
    }
    let counts: Vec<(f64, usize)> = window
        .par_iter()
        .map(|&eps| {
            let boxes: HashSet<Vec<i64>> =
                cloud.points().map(|p| p.iter().map(|v| (v / eps).floor() as i64).collect()).collect();
            (eps, boxes.len())
        })
        .collect();
    let xs: Vec<f64> = counts.iter().map(|&(e, _)| -e.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&(_, c)| (c as f64).ln()).collect();
    let (_, slope, residual) = linear_fit(&xs, &ys);
    Ok(BoxCounting { d_est: slope, residual, counts })
}

/// Geometric ladder of `k` box sizes spanning the admissible window.
pub fn default_box_scales(cloud: &PointCloud, k: usize) -> Vec<f64> {
    let lo = 4.0 * cloud.resolution();
    let hi = cloud.diameter() / 4.0;
    if k < 2 || !(lo > 0.0 && hi > lo) {
        return vec![hi.max(lo)];
    }
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub s: f64,
    pub m: usize,
    pub gamma: f64,
    /// `(2 + m) / (2 (m - s))`; absent when `m <= s`.
    pub gamma_threshold: Option<f64>,
    pub gates: Vec<Gate>,
}

impl GateVerdict {
    pub fn all_pass(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn failures(&self) -> Vec<&Gate> {
        self.gates.iter().filter(|g| !g.pass).collect()
    }
}

pub fn gamma_threshold(s: f64, m: usize) -> Option<f64> {
    let mf = m as f64;
    (mf > s).then(|| (2.0 + mf) / (2.0 * (mf - s)))
}

/// Midpoint between the exponent threshold and 1, capped at 1.
pub fn auto_gamma(s: f64, m: usize) -> Option<f64> {
    gamma_threshold(s, m).map(|t| ((t + 1.0) / 2.0).min(1.0))
}

pub fn check_gates(s: f64, m: usize, gamma: f64) -> Result<GateVerdict> {
    if m < 1 || !(s >= 0.0) {
        return Err(Error::domain("gates need m >= 1 and s >= 0"));
    }
    let mf = m as f64;
    let threshold = gamma_threshold(s, m);
    let need_m = (s + 1.0).max(6.0);
    let gates = vec![
        Gate {
            name: "m > max(s+1, 6)".into(),
            pass: mf > need_m,
            detail: format!("any m > max{{d+1,6}}: m = {m}, max(s+1, 6) = {need_m}"),
        },
        match threshold {
            Some(t) => Gate {
                name: "gamma > (2+m)/(2(m-s))".into(),
                pass: gamma > t,
                detail: format!("gamma = {gamma}, threshold = {t}"),
            },
            None => Gate {
                name: "gamma > (2+m)/(2(m-s))".into(),
                pass: false,
                detail: format!("unsatisfiable: m = {m} <= s = {s}"),
            },
        },
        Gate { name: "gamma <= 1".into(), pass: gamma <= 1.0, detail: format!("gamma = {gamma}") },
        Gate { name: "m > s".into(), pass: mf > s, detail: format!("m = {m}, s = {s}") },
    ];
    Ok(GateVerdict { s, m, gamma, gamma_threshold: threshold, gates })
}
