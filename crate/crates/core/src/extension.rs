//! Log-Lipschitz modulus of continuity and McShane extension of the
//! embedded field values `g_1 = L G` off the cloud.
//!
//! `ω(r) = C0 r (ln(C_L_eff / r))^γ` below the knee `r_c = C_L_eff e^{-γ}`,
//! held at `ω(r_c)` above it so that ω stays concave and the extension is
//! bounded. Each component is extended separately:
//! `g_j(x) = min_i (v_ij + M_j ω(|x - c_i|))`.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedCloud;
use crate::error::{Error, Result};
use crate::geometry::{self, PointCloud};
use crate::ode::{self, FnField, OdeOptions};
use crate::systems::stream_rng;

/// Pair budget for exhaustive fitting.
pub const MAX_EXHAUSTIVE_PAIRS: usize = 4_000_000;
/// Neighbours per point when the budget is exceeded.
const FIT_NEIGHBORS: usize = 32;
const AUDIT_PAIRS: usize = 100_000;
/// Relative inflation of fitted constants so interpolation survives rounding.
const M_INFLATION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulus {
    pub c0: f64,
    pub c_l_eff: f64,
    pub gamma: f64,
    pub r_c: f64,
    pub flat_value: f64,
}

impl Modulus {
    /// Modulus with `C_L_eff` given directly.
    pub fn from_parts(c0: f64, c_l_eff: f64, gamma: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::domain(format!("C0 = {c0} must be positive")));
        }
        if !(c_l_eff > 0.0 && c_l_eff.is_finite()) {
            return Err(Error::domain(format!("C_L_eff = {c_l_eff} must be positive")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::domain(format!("gamma = {gamma} outside [0, 1]")));
        }
        let r_c = c_l_eff * (-gamma).exp();
        let flat_value = c0 * r_c * gamma.powf(gamma);
        Ok(Modulus { c0, c_l_eff, gamma, r_c, flat_value })
    }

    /// `C_L_eff = max(C_L, e^γ diam)` puts every cloud distance below the knee.
    pub fn new(c0: f64, c_l: f64, gamma: f64, diameter: f64) -> Result<Self> {
        Self::from_parts(c0, c_l.max(gamma.exp() * diameter), gamma)
    }

    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            0.0
        } else if r >= self.r_c {
            self.flat_value
        } else {
            self.c0 * r * (self.c_l_eff / r).ln().powf(self.gamma)
        }
    }

    /// Smallest-ish `r` with `ω(r) >= t`, for `0 <= t < flat_value`. The
    /// result errs upward.
    fn inverse_upper(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, self.r_c);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) >= t {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Per-component constants `M_j = max |v_ij - v_kj| / ω(|c_i - c_k|)`.
pub fn fit_mcshane_constant(cloud: &EmbeddedCloud, modulus: &Modulus) -> Result<Vec<f64>> {
    let n = cloud.len();
    if n == 0 {
        return Err(Error::domain("cannot fit an extension on an empty cloud"));
    }
    let pts = &cloud.cloud;
    let vals = &cloud.g1_values;
    let dim = vals.dim();
    let pair = |i: usize, k: usize, acc: &mut Vec<f64>| -> Result<()> {
        let d = geometry::dist(pts.point(i), pts.point(k));
        let (vi, vk) = (vals.point(i), vals.point(k));
        if d == 0.0 {
            if vi != vk {
                return Err(Error::domain(format!("coincident points {i} and {k} carry different field values")));
            }
            return Ok(());
        }
        let w = modulus.eval(d);
        for j in 0..dim {
            acc[j] = acc[j].max((vi[j] - vk[j]).abs() / w);
        }
        Ok(())
    };
    let merge = |a: Result<Vec<f64>>, b: Result<Vec<f64>>| -> Result<Vec<f64>> {
        let (a, b) = (a?, b?);
        Ok(a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect())
    };
    let m = if n * (n - 1) / 2 <= MAX_EXHAUSTIVE_PAIRS {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; dim];
                for k in i + 1..n {
                    pair(i, k, &mut acc)?;
                }
                Ok(acc)
            })
            .reduce(|| Ok(vec![0.0; dim]), merge)?
    } else {
        let local = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; dim];
                for nb in pts.nearest(pts.point(i), FIT_NEIGHBORS + 1)? {
                    if nb.index != i {
                        pair(i, nb.index, &mut acc)?;
                    }
                }
                Ok(acc)
            })
            .reduce(|| Ok(vec![0.0; dim]), merge)?;
        let audit = (0..AUDIT_PAIRS)
            .into_par_iter()
            .map(|s| {
                let mut rng = stream_rng(0x5eed_a0d1, s as u64);
                let (i, k) = (rng.random_range(0..n), rng.random_range(0..n));
                let mut acc = vec![0.0; dim];
                if i != k {
                    pair(i, k, &mut acc)?;
                }
                Ok(acc)
            })
            .reduce(|| Ok(vec![0.0; dim]), merge)?;
        merge(Ok(local), Ok(audit))?
    };
    Ok(m.into_iter().map(|v| v * (1.0 + M_INFLATION)).collect())
}

/// Fitted McShane extension; immutable after construction.
#[derive(Debug, Clone)]
pub struct ExtendedField {
    pub base: EmbeddedCloud,
    pub modulus: Modulus,
    pub m: Vec<f64>,
    pub bound: f64,
    vmin: Vec<f64>,
}

impl ExtendedField {
    pub fn fit(base: EmbeddedCloud, modulus: Modulus) -> Result<Self> {
        let m = fit_mcshane_constant(&base, &modulus)?;
        Self::with_constants(base, modulus, m)
    }

    pub fn with_constants(base: EmbeddedCloud, modulus: Modulus, m: Vec<f64>) -> Result<Self> {
        let dim = base.g1_values.dim();
        if base.is_empty() || m.len() != dim || m.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("extension constants do not match the cloud"));
        }
        let mut vmin = vec![f64::INFINITY; dim];
        let mut vabs = vec![0.0f64; dim];
        for v in base.g1_values.points() {
            for j in 0..dim {
                vmin[j] = vmin[j].min(v[j]);
                vabs[j] = vabs[j].max(v[j].abs());
            }
        }
        let bound = (0..dim).map(|j| vabs[j] + m[j] * modulus.flat_value).fold(0.0, f64::max);
        Ok(ExtendedField { base, modulus, m, bound, vmin })
    }

    pub fn dim(&self) -> usize {
        self.base.cloud.dim()
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.base.cloud
    }

    /// Largest per-component constant.
    pub fn m_max(&self) -> f64 {
        self.m.iter().copied().fold(0.0, f64::max)
    }

    /// `sqrt(sum M_j^2)`: constant of the vector field in the Euclidean norm.
    pub fn m_vec(&self) -> f64 {
        self.m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unpruned reference evaluation.
    pub fn eval_linear(&self, x: &[f64], out: &mut [f64]) {
        let pts = &self.base.cloud;
        let vals = &self.base.g1_values;
        out.fill(f64::INFINITY);
        for i in 0..pts.len() {
            let w = self.modulus.eval(geometry::dist(x, pts.point(i)));
            let v = vals.point(i);
            for j in 0..out.len() {
                out[j] = out[j].min(v[j] + self.m[j] * w);
            }
        }
    }

    /// Exact minimum with neighbour pruning. A point farther than `R_j`,
    /// where `M_j ω(R_j)` already exceeds `best_j - min_i v_ij`, cannot
    /// improve component `j`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let pts = &self.base.cloud;
        let vals = &self.base.g1_values;
        let dim = out.len();
        let (i0, _) = pts.nearest_sq(x).expect("cloud is non-empty");
        let w0 = self.modulus.eval(geometry::dist(x, pts.point(i0)));
        let v0 = vals.point(i0);
        let mut t_max = 0.0f64;
        let mut active = Vec::with_capacity(dim);
        for j in 0..dim {
            if self.m[j] == 0.0 {
                out[j] = self.vmin[j];
                continue;
            }
            out[j] = v0[j] + self.m[j] * w0;
            t_max = t_max.max((out[j] - self.vmin[j]) / self.m[j] * (1.0 + 1e-9));
            active.push(j);
        }
        let scan_all = t_max >= self.modulus.flat_value;
        let radius = if scan_all { f64::INFINITY } else { self.modulus.inverse_upper(t_max) };
        if active.is_empty() {
            return;
        }
        let mut visit = |i: usize| {
            let w = self.modulus.eval(geometry::dist(x, pts.point(i)));
            let v = vals.point(i);
            for &j in &active {
                out[j] = out[j].min(v[j] + self.m[j] * w);
            }
        };
        if scan_all {
            (0..pts.len()).for_each(&mut visit);
        } else {
            let mut hits = Vec::new();
            pts.within(x, radius * (1.0 + 1e-9) + 1e-300, &mut hits);
            hits.iter().for_each(|&(i, _)| visit(i));
        }
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(x, &mut out);
        out
    }

    /// Writes `extension.json`; the cloud itself is saved by the embed stage.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let doc = serde_json::json!({
            "C0": self.modulus.c0,
            "C_L_eff": self.modulus.c_l_eff,
            "gamma": self.modulus.gamma,
            "r_c": self.modulus.r_c,
            "M": self.m,
            "bound": self.bound,
        });
        fs::write(dir.join("extension.json"), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, base: EmbeddedCloud) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("extension.json"))?)?;
        let num = |k: &str| doc.get(k).and_then(|v| v.as_f64()).ok_or_else(|| Error::format(format!("extension.json lacks {k}")));
        let modulus = Modulus::from_parts(num("C0")?, num("C_L_eff")?, num("gamma")?)?;
        let m: Vec<f64> = serde_json::from_value(doc.get("M").cloned().unwrap_or_default())?;
        Self::with_constants(base, modulus, m)
    }
}

impl ode::VectorField for ExtendedField {
    fn dim(&self) -> usize {
        ExtendedField::dim(self)
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        ExtendedField::eval(self, x, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OsgoodReport {
    pub eps: f64,
    pub upper: f64,
    pub integral: f64,
    /// Integral from `eps / 2`; larger than `integral` for a positive integrand.
    pub integral_half: f64,
    pub increasing: bool,
    /// Analytic verdict: `∫_0 dr / ω(r)` diverges iff `γ <= 1`.
    pub divergent: bool,
}

/// `∫_eps^{min(1, r_c)} dr / ω(r)` by adaptive Gauss–Kronrod quadrature in
/// `s = -ln r`, where the integrand becomes `1 / (C0 (ln C_L_eff + s)^γ)`.
pub fn osgood_integral(modulus: &Modulus, eps: f64) -> Result<f64> {
    let upper = modulus.r_c.min(1.0);
    if !(eps > 0.0 && eps < upper) {
        return Err(Error::domain(format!("eps = {eps} must lie in (0, {upper})")));
    }
    let ln_c = modulus.c_l_eff.ln();
    let f = |s: f64| 1.0 / (modulus.c0 * (ln_c + s).powf(modulus.gamma));
    Ok(adaptive_gk(&f, -upper.ln(), -eps.ln(), 1e-13, 60))
}

pub fn osgood_check(modulus: &Modulus, eps: f64) -> Result<OsgoodReport> {
    let integral = osgood_integral(modulus, eps)?;
    let integral_half = osgood_integral(modulus, eps / 2.0)?;
    Ok(OsgoodReport {
        eps,
        upper: modulus.r_c.min(1.0),
        integral,
        integral_half,
        increasing: integral_half > integral,
        divergent: modulus.gamma <= 1.0,
    })
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// (Kronrod estimate, |Kronrod - Gauss|) on `[a, b]`.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    for i in 0..7 {
        let s = f(c - h * GK_NODES[i]) + f(c + h * GK_NODES[i]);
        k += K15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive_gk<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if depth == 0 || err <= tol * k.abs().max(1e-300) {
        return k;
    }
    let mid = 0.5 * (a + b);
    adaptive_gk(f, a, mid, tol, depth - 1) + adaptive_gk(f, mid, b, tol, depth - 1)
}

/// Solution of `r' = M ω(r)`, `r(0) = r0`, sampled at `times`
/// (non-decreasing, non-negative). Integrated as `ln r` so tiny
/// separations keep full relative accuracy. Overflow gives `+∞`.
pub fn separation_envelope(modulus: &Modulus, m: f64, r0: f64, times: &[f64]) -> Result<Vec<f64>> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::domain(format!("r0 = {r0} must be positive")));
    }
    if times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::domain("envelope times must be non-negative"));
    }
    let t_end = times.iter().copied().fold(0.0, f64::max);
    if m == 0.0 || t_end == 0.0 {
        return Ok(vec![r0; times.len()]);
    }
    let field = FnField {
        dim: 1,
        f: |s: &[f64], out: &mut [f64]| {
            let r = s[0].exp();
            out[0] = if r.is_finite() { m * modulus.eval(r) / r } else { 0.0 };
        },
    };
    let opts = OdeOptions { tol: 1e-13, ..Default::default() };
    let sol = ode::integrate_monitored(&field, &[r0.ln()], t_end, &opts, |_, s, _| {
        if s[0] > 700.0 { ode::Control::Stop } else { ode::Control::Continue }
    });
    if sol.status.is_failure() && sol.status != ode::Status::NonFinite {
        return Err(Error::Integrator(format!("separation envelope: {:?}", sol.status)));
    }
    let reached = sol.last_time();
    Ok(times
        .iter()
        .map(|&t| match sol.sample(t) {
            _ if t == 0.0 => r0,
            Some(s) if t <= reached => s[0].exp(),
            _ => f64::INFINITY,
        })
        .collect())
}

pub fn separation_bound(modulus: &Modulus, m: f64, r0: f64, t: f64) -> Result<f64> {
    Ok(separation_envelope(modulus, m, r0, &[t])?[0])
}
