//! Upstream dissipative systems `du/dt = G(u)` realized in `R^N`.
//!
//! Each system has a low-dimensional intrinsic field `V` and is lifted into
//! the ambient space by an orthonormal `N x d` matrix `Q`, giving
//! `G(u) = Q V(Q^T u)`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, io, PointCloud};
use crate::ode::{self, OdeOptions, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    PointSink,
    PlanarCycle,
    Lorenz63,
    GalerkinKs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_ambient_dim")]
    pub ambient_dim: usize,
    #[serde(default)]
    pub lift_seed: u64,
}

fn default_ambient_dim() -> usize {
    32
}

impl SystemSpec {
    pub fn new(kind: SystemKind) -> Self {
        SystemSpec { kind, params: BTreeMap::new(), ambient_dim: default_ambient_dim(), lift_seed: 0 }
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

#[derive(Debug, Clone)]
enum Intrinsic {
    PointSink { dim: usize },
    PlanarCycle,
    Lorenz { sigma: f64, rho: f64, beta: f64 },
    /// Odd (sine-series) Galerkin truncation of `u_t + u_xxxx + u_xx + u u_x = 0`
    /// on a periodic domain with wavenumber `q = 2 pi / length`.
    Ks { modes: usize, q: f64 },
}

impl Intrinsic {
    fn dim(&self) -> usize {
        match self {
            Intrinsic::PointSink { dim } => *dim,
            Intrinsic::PlanarCycle => 2,
            Intrinsic::Lorenz { .. } => 3,
            Intrinsic::Ks { modes, .. } => *modes,
        }
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            Intrinsic::PointSink { .. } => {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v;
                }
            }
            Intrinsic::PlanarCycle => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                out[0] = x[0] - x[1] - x[0] * r2;
                out[1] = x[0] + x[1] - x[1] * r2;
            }
            Intrinsic::Lorenz { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            Intrinsic::Ks { modes, q } => {
                // a_k' = (k^2 q^2 - k^4 q^4) a_k - (k q / 4) [ sum_{j+l=k} a_j a_l - 2 sum_l a_{l+k} a_l ]
                for k in 1..=modes {
                    let kq = k as f64 * q;
                    let mut conv = 0.0;
                    for j in 1..k {
                        conv += x[j - 1] * x[k - j - 1];
                    }
                    let mut cross = 0.0;
                    for l in 1..=modes - k {
                        cross += x[l + k - 1] * x[l - 1];
                    }
                    out[k - 1] = (kq * kq - kq.powi(4)) * x[k - 1] - 0.25 * kq * (conv - 2.0 * cross);
                }
            }
        }
    }
}

/// A system ready for evaluation: intrinsic field plus its orthonormal lift.
#[derive(Debug, Clone)]
pub struct System {
    spec: SystemSpec,
    intrinsic: Intrinsic,
    /// Row-major `N x d`.
    lift: Vec<f64>,
}

impl System {
    pub fn new(spec: SystemSpec) -> Result<Self> {
        let intrinsic = match spec.kind {
            SystemKind::PointSink => Intrinsic::PointSink { dim: spec.param("dim", 2.0) as usize },
            SystemKind::PlanarCycle => Intrinsic::PlanarCycle,
            SystemKind::Lorenz63 => Intrinsic::Lorenz {
                sigma: spec.param("sigma", 10.0),
                rho: spec.param("rho", 28.0),
                beta: spec.param("beta", 8.0 / 3.0),
            },
            SystemKind::GalerkinKs => {
                let length = spec.param("length", 22.0);
                if length <= 0.0 {
                    return Err(Error::domain("KS domain length must be positive"));
                }
                Intrinsic::Ks { modes: spec.param("modes", 12.0) as usize, q: std::f64::consts::TAU / length }
            }
        };
        let d = intrinsic.dim();
        let n = spec.ambient_dim;
        if d == 0 {
            return Err(Error::domain("intrinsic dimension must be positive"));
        }
        if d > n {
            return Err(Error::domain(format!("intrinsic dimension {d} exceeds ambient dimension {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.lift_seed);
        let gauss = DMatrix::<f64>::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        let q = gauss.qr().q();
        let mut lift = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..d {
                lift[i * d + j] = q[(i, j)];
            }
        }
        let sys = System { spec, intrinsic, lift };
        let defect = sys.lift_orthonormality_defect();
        if defect > 1e-12 {
            return Err(Error::domain(format!("lift is not orthonormal (defect {defect:e})")));
        }
        Ok(sys)
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn ambient_dim(&self) -> usize {
        self.spec.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic.dim()
    }

    /// `max |Q^T Q - I|` entrywise.
    pub fn lift_orthonormality_defect(&self) -> f64 {
        let (n, d) = (self.ambient_dim(), self.intrinsic_dim());
        let mut worst: f64 = 0.0;
        for a in 0..d {
            for b in 0..d {
                let dot: f64 = (0..n).map(|i| self.lift[i * d + a] * self.lift[i * d + b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        let d = self.intrinsic_dim();
        (0..self.ambient_dim())
            .map(|i| (0..d).map(|j| self.lift[i * d + j] * x[j]).sum())
            .collect()
    }

    /// `Q^T u`: intrinsic coordinates of an ambient point.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let d = self.intrinsic_dim();
        let mut x = vec![0.0; d];
        for (i, ui) in u.iter().enumerate() {
            for j in 0..d {
                x[j] += self.lift[i * d + j] * ui;
            }
        }
        x
    }

    pub fn intrinsic_field(&self, x: &[f64], out: &mut [f64]) {
        self.intrinsic.eval(x, out)
    }

    /// Lifted field `G(u)`.
    pub fn field(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.ambient_dim() {
            return Err(Error::domain(format!(
                "state has dimension {}, system lives in R^{}",
                u.len(),
                self.ambient_dim()
            )));
        }
        let mut out = vec![0.0; u.len()];
        self.eval(u, &mut out);
        Ok(out)
    }

    /// Semigroup `S(t) u0`.
    pub fn evolve(&self, u0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
        Ok(self.trajectory(u0, t, tol)?.last_state().to_vec())
    }

    pub fn trajectory(&self, u0: &[f64], t: f64, tol: f64) -> Result<ode::Solution> {
        if t < 0.0 {
            return Err(Error::domain("evolution time must be non-negative"));
        }
        if u0.len() != self.ambient_dim() {
            return Err(Error::domain("initial state dimension mismatch"));
        }
        let sol = ode::integrate(self, u0, t, &OdeOptions::with_tol(tol));
        if sol.status.is_failure() {
            return Err(Error::Integrator(format!(
                "{:?} at t = {} after {} accepted steps",
                sol.status,
                sol.last_time(),
                sol.accepted
            )));
        }
        Ok(sol)
    }

    /// Center and radius of the ball initial conditions are drawn from,
    /// in intrinsic coordinates.
    pub fn absorbing_ball(&self) -> (Vec<f64>, f64) {
        let d = self.intrinsic_dim();
        match self.intrinsic {
            Intrinsic::PointSink { .. } => (vec![0.0; d], self.spec.param("radius", 2.0)),
            Intrinsic::PlanarCycle => (vec![0.0; d], self.spec.param("radius", 3.0)),
            Intrinsic::Lorenz { sigma, rho, beta } => {
                (vec![0.0, 0.0, rho + sigma], lorenz_ball_radius(sigma, rho, beta))
            }
            Intrinsic::Ks { .. } => (vec![0.0; d], self.spec.param("radius", 1.0)),
        }
    }
}

impl VectorField for System {
    fn dim(&self) -> usize {
        self.ambient_dim()
    }

    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let d = self.intrinsic_dim();
        let x = self.project(u);
        let mut v = vec![0.0; d];
        self.intrinsic.eval(&x, &mut v);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|j| self.lift[i * d + j] * v[j]).sum();
        }
    }
}

/// Radius of the ball `x^2 + y^2 + (z - rho - sigma)^2 <= R^2` that contains
/// the ellipsoid outside of which that quadratic decreases along Lorenz
/// trajectories. The maximum over the ellipsoid surface is found on a dense
/// angular grid.
pub fn lorenz_ball_radius(sigma: f64, rho: f64, beta: f64) -> f64 {
    let c = rho + sigma;
    let rhs = beta * c * c / 4.0;
    let (ax, ay, az) = ((rhs / sigma).sqrt(), rhs.sqrt(), (rhs / beta).sqrt());
    let mut best: f64 = 0.0;
    let (nt, np) = (400, 800);
    for i in 0..=nt {
        let th = std::f64::consts::PI * i as f64 / nt as f64;
        for j in 0..np {
            let ph = std::f64::consts::TAU * j as f64 / np as f64;
            let x = ax * th.sin() * ph.cos();
            let y = ay * th.sin() * ph.sin();
            let z = c / 2.0 + az * th.cos();
            best = best.max(x * x + y * y + (z - c) * (z - c));
        }
    }
    // grid slack: one angular cell of the largest semi-axis
    best.sqrt() + ax.max(ay).max(az) * std::f64::consts::PI / nt as f64
}

/// Value of the Lorenz absorbing-ball quadratic at an intrinsic state.
pub fn lorenz_ball_functional(x: &[f64], sigma: f64, rho: f64) -> f64 {
    let w = x[2] - rho - sigma;
    (x[0] * x[0] + x[1] * x[1] + w * w).sqrt()
}

/// A finite sample of the attractor with the field evaluated at each point.
#[derive(Debug, Clone)]
pub struct AttractorSample {
    pub cloud: PointCloud,
    /// `G(u_i)`, aligned with `cloud`.
    pub field_values: PointCloud,
    pub burn_in: f64,
    pub thinning_radius: f64,
    /// Set when thinning could not reach the requested point count.
    pub short: bool,
}

impl AttractorSample {
    pub fn new(cloud: PointCloud, field_values: PointCloud, burn_in: f64, thinning_radius: f64) -> Result<Self> {
        if cloud.len() != field_values.len() || cloud.dim() != field_values.dim() {
            return Err(Error::domain("field values must align with the sample cloud"));
        }
        Ok(AttractorSample { cloud, field_values, burn_in, thinning_radius, short: false })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    /// Writes `<stem>.bin`, `<stem>_field.bin` and their `.csv` twins.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::save_bin(&dir.join(format!("{stem}.bin")), &self.cloud)?;
        io::save_bin(&dir.join(format!("{stem}_field.bin")), &self.field_values)?;
        io::save_csv(&dir.join(format!("{stem}.csv")), &self.cloud)?;
        io::save_csv(&dir.join(format!("{stem}_field.csv")), &self.field_values)?;
        Ok(())
    }

    /// Loads `<stem>.bin` and `<stem>_field.bin`. `burn_in`/`thin` are not
    /// part of the cloud format and must be supplied by the caller.
    pub fn load(dir: &Path, stem: &str, burn_in: f64, thin: f64) -> Result<Self> {
        let cloud = io::load(&dir.join(format!("{stem}.bin")))?;
        let field = io::load(&dir.join(format!("{stem}_field.bin")))?;
        Self::new(cloud, field, burn_in, thin)
    }
}

/// Per-index RNG stream, independent of scheduling.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn uniform_in_ball<R: Rng>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let nrm = geometry::norm(&dir).max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(c, u)| c + r * u / nrm).collect()
}

/// Candidate trajectories per requested sample point.
const POOL_FACTOR: usize = 4;

/// Sample the attractor: integrate `POOL_FACTOR * n` random initial
/// conditions from the absorbing ball for `burn_in`, then thin the endpoints
/// by greedy farthest-point selection until `n` points are chosen or the
/// next candidate would sit closer than `thin` to the selection.
pub fn sample_attractor(
    system: &System,
    n: usize,
    burn_in: f64,
    thin: f64,
    seed: u64,
    tol: f64,
) -> Result<AttractorSample> {
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    if burn_in <= 0.0 {
        return Err(Error::domain("burn-in must be positive"));
    }
    let (center, radius) = system.absorbing_ball();
    let pool: Vec<Vec<f64>> = (0..POOL_FACTOR * n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let x0 = uniform_in_ball(&mut rng, &center, radius);
            system.evolve(&system.lift(&x0), burn_in, tol)
        })
        .collect::<Result<_>>()?;

    let chosen = farthest_point_thinning(&pool, n, thin);
    let short = chosen.len() < n;
    let dim = system.ambient_dim();
    let mut data = Vec::with_capacity(chosen.len() * dim);
    let mut fdata = Vec::with_capacity(chosen.len() * dim);
    for &i in &chosen {
        data.extend_from_slice(&pool[i]);
        fdata.extend(system.field(&pool[i])?);
    }
    let mut sample = AttractorSample::new(PointCloud::new(dim, data)?, PointCloud::new(dim, fdata)?, burn_in, thin)?;
    sample.short = short;
    Ok(sample)
}

/// Greedy farthest-point selection starting from index 0; ties go to the
/// lower index. Stops at `n` points or when the farthest remaining candidate
/// is closer than `thin`.
pub fn farthest_point_thinning(points: &[Vec<f64>], n: usize, thin: f64) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut chosen = vec![0];
    let mut min_d2: Vec<f64> = points.iter().map(|p| geometry::sq_dist(p, &points[0])).collect();
    while chosen.len() < n {
        let (best, d2) = min_d2
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        if d2 < thin * thin || d2 <= 0.0 {
            break;
        }
        chosen.push(best);
        for (i, p) in points.iter().enumerate() {
            min_d2[i] = min_d2[i].min(geometry::sq_dist(p, &points[best]));
        }
    }
    chosen
}

/// Largest difference quotient `|G(u) - G(v)| / |u - v|` over sample pairs.
/// Exhaustive up to 2000 points, restricted to 32 nearest neighbors beyond.
pub fn estimate_lipschitz(sample: &AttractorSample) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::domain("Lipschitz estimate needs at least two points"));
    }
    let cloud = &sample.cloud;
    let vals = &sample.field_values;
    let ratio = |i: usize, j: usize| -> f64 {
        let d = geometry::dist(cloud.point(i), cloud.point(j));
        if d == 0.0 {
            0.0
        } else {
            geometry::dist(vals.point(i), vals.point(j)) / d
        }
    };
    let k = if n <= 2000 {
        (0..n).into_par_iter().map(|i| (i + 1..n).map(|j| ratio(i, j)).fold(0.0, f64::max)).reduce(|| 0.0, f64::max)
    } else {
        let kk = 33.min(n);
        (0..n)
            .into_par_iter()
            .map(|i| {
                cloud
                    .nearest(cloud.point(i), kk)
                    .map(|nn| nn.iter().map(|nb| ratio(i, nb.index)).fold(0.0, f64::max))
                    .unwrap_or(0.0)
            })
            .reduce(|| 0.0, f64::max)
    };
    Ok(k)
}
