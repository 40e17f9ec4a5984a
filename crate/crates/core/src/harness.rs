//! Integration of the combined field and the checks run on it: capture into
//! `P = {φ <= δ}` within `(C - δ)/c`, positive invariance of `P`, the
//! late-time attractor estimate, reproduction of embedded trajectories, and
//! separation of nearby solutions against the Osgood envelope.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::embedding::{random_unit, LinearEmbedding};
use crate::error::{Error, Result};
use crate::extension::{separation_envelope, Modulus};
use crate::geometry::{self, PointCloud};
use crate::lyapunov::{sample_outside_p, LyapunovField};
use crate::ode::{self, Control, OdeOptions, Solution, Status, VectorField};
use crate::systems::{farthest_point_thinning, stream_rng, uniform_in_ball, AttractorSample, System};

/// `|field|` below this outside `P` counts towards stagnation.
const STAGNATION_SPEED: f64 = 1e-10;
const STAGNATION_STEPS: usize = 3;

/// Integrator settings shared by every harness run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunOptions {
    pub tol: f64,
    /// Thinning radius; steps are capped at `thin / (10 |f|)`.
    pub thin: f64,
    pub max_steps: usize,
}

impl RunOptions {
    pub fn new(tol: f64, thin: f64) -> Self {
        RunOptions { tol, thin, max_steps: 5_000_000 }
    }

    fn ode(&self) -> OdeOptions {
        OdeOptions {
            tol: self.tol,
            max_steps: self.max_steps,
            step_cap: (self.thin > 0.0).then_some(self.thin / 10.0),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub solution: Solution,
    pub phi_values: Vec<f64>,
    /// Stopped because the field vanished outside `P`.
    pub stagnated: bool,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.solution.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.solution.states
    }

    pub fn status(&self) -> Status {
        self.solution.status
    }

    /// CSV rows `t, x_1..x_m, φ`.
    pub fn to_csv(&self) -> String {
        let dim = self.solution.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for k in 1..=dim {
            let _ = write!(out, ",x{k}");
        }
        out.push_str(",phi\n");
        for ((t, x), phi) in self.solution.times.iter().zip(&self.solution.states).zip(&self.phi_values) {
            let _ = write!(out, "{t:?}");
            for v in x {
                let _ = write!(out, ",{v:?}");
            }
            let _ = writeln!(out, ",{phi:?}");
        }
        out
    }
}

/// Integrate `field` from `x0`, recording φ at every accepted state. With
/// `stop_in_p` the run ends at the first state inside `P`.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    lf: &LyapunovField,
    x0: &[f64],
    t_end: f64,
    opts: &RunOptions,
    stop_in_p: bool,
) -> Trajectory {
    let mut slow = 0;
    let mut stagnated = false;
    let sol = ode::integrate_monitored(field, x0, t_end, &opts.ode(), |_, x, f| {
        let phi = lf.phi(x);
        if stop_in_p && phi <= lf.delta {
            return Control::Stop;
        }
        if phi > lf.delta && geometry::norm(f) < STAGNATION_SPEED {
            slow += 1;
            if slow >= STAGNATION_STEPS {
                stagnated = true;
                return Control::Stop;
            }
        } else {
            slow = 0;
        }
        Control::Continue
    });
    let phi_values = sol.states.iter().map(|x| lf.phi(x)).collect();
    Trajectory { solution: sol, phi_values, stagnated }
}

/// First time with `φ <= δ`, refined by bisection on the dense output.
pub fn capture_time(traj: &Trajectory, lf: &LyapunovField) -> Option<f64> {
    let k = traj.phi_values.iter().position(|&p| p <= lf.delta)?;
    if k == 0 {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (traj.solution.times[k - 1], traj.solution.times[k]);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let x = traj.solution.sample(mid).expect("inside the span");
        if lf.phi(&x) <= lf.delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Largest increase of φ between consecutive states both outside `P`.
pub fn max_descent_excess(traj: &Trajectory, lf: &LyapunovField) -> f64 {
    traj.phi_values
        .windows(2)
        .filter(|w| w[0] > lf.delta && w[1] > lf.delta)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Deterministic starts inside `P`: cloud point plus an offset of length at
/// most `√δ`, redrawn until `φ <= δ`.
pub fn sample_inside_p(lf: &LyapunovField, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = lf.cloud.len();
    let sd = lf.delta.sqrt();
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let p = lf.cloud.point((k * n / count.max(1) + rng.random_range(0..n)) % n);
            for _ in 0..1000 {
                let x = uniform_in_ball(&mut rng, p, sd);
                if lf.phi(&x) <= lf.delta {
                    return x;
                }
            }
            p.to_vec()
        })
        .collect()
}

/// Sampled modulus constant of `field` on `P`: the largest
/// `|F(x) - F(y)| / ω(|x - y|)` over `count` pairs with `x` in `P` and
/// `|x - y|` log-uniform in `[1e-9, 1e-4]`.
pub fn fit_field_constant<F: VectorField + ?Sized>(
    field: &F,
    lf: &LyapunovField,
    modulus: &Modulus,
    count: usize,
    seed: u64,
) -> f64 {
    let dim = field.dim();
    sample_inside_p(lf, count, seed)
        .into_par_iter()
        .enumerate()
        .map(|(k, x)| {
            let mut rng = stream_rng(seed ^ 0xf17, k as u64);
            let r = 10f64.powf(rng.random_range(-9.0..-4.0));
            let y: Vec<f64> = x.iter().zip(random_unit(&mut rng, dim)).map(|(a, u)| a + r * u).collect();
            let (mut fx, mut fy) = (vec![0.0; dim], vec![0.0; dim]);
            field.eval(&x, &mut fx);
            field.eval(&y, &mut fy);
            geometry::dist(&fx, &fy) / modulus.eval(geometry::dist(&x, &y))
        })
        .reduce(|| 0.0, f64::max)
}

/// Points on the sphere `|x| = radius` about the origin.
fn sphere_points(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            random_unit(&mut rng, dim).into_iter().map(|v| v * radius).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CaptureReport {
    /// `C`: largest φ over the sampled ball and the starts.
    pub c_sup: f64,
    /// `c`: smallest `|∇φ|²` over the sampled `B ∖ P`.
    pub c_inf: f64,
    pub bound_t: f64,
    pub c_samples: usize,
    pub capture_times: Vec<Option<f64>>,
    pub captured_within_bound: usize,
    pub n_traj: usize,
    pub stagnated: usize,
    /// Consecutive-state increases of φ outside `P` above `10 tol`.
    pub descent_violations: usize,
    pub max_descent_excess: f64,
}

impl CaptureReport {
    pub fn all_captured(&self) -> bool {
        self.captured_within_bound == self.n_traj
    }
}

/// Estimate `C`, `c` and `T = (C - δ)/c` on the ball `B` of radius
/// `b_radius` about the origin, then integrate `n_traj` starts (half on
/// `∂B`, half inside) until they enter `P` or pass `T`.
pub fn check_capture<F: VectorField + ?Sized>(
    field: &F,
    lf: &LyapunovField,
    b_radius: f64,
    n_traj: usize,
    c_samples: usize,
    opts: &RunOptions,
    seed: u64,
) -> Result<CaptureReport> {
    let reach = lf.cloud.points().map(geometry::norm).fold(0.0, f64::max) + lf.delta.sqrt();
    if reach > b_radius {
        return Err(Error::domain(format!("B of radius {b_radius} does not contain P (reach {reach})")));
    }
    let dim = lf.dim();
    let origin = vec![0.0; dim];
    let starts: Vec<Vec<f64>> = (0..n_traj)
        .map(|k| {
            let mut rng = stream_rng(seed ^ 0xca97, k as u64);
            if k % 2 == 0 {
                random_unit(&mut rng, dim).into_iter().map(|v| v * b_radius).collect()
            } else {
                uniform_in_ball(&mut rng, &origin, b_radius)
            }
        })
        .collect();
    let mut probes = sphere_points(dim, b_radius, c_samples, seed ^ 0x5f);
    probes.extend((0..c_samples).map(|k| uniform_in_ball(&mut stream_rng(seed ^ 0xba11, k as u64), &origin, b_radius)));
    probes.extend(starts.iter().cloned());
    let c_sup = probes.par_iter().map(|x| lf.phi(x)).reduce(|| 0.0, f64::max);
    let outside = sample_outside_p(lf, b_radius, c_samples, seed ^ 0x0c);
    let c_inf = outside
        .par_iter()
        .map(|x| lf.grad_phi(x).iter().map(|g| g * g).sum::<f64>())
        .reduce(|| f64::INFINITY, f64::min);
    if !(c_inf > 0.0) {
        return Err(Error::BetaLadder(format!("sampled inf |grad phi|^2 = {c_inf}")));
    }
    // dφ/dt = -κ |∇φ|² outside P
    let bound_t = ((c_sup - lf.delta) / (lf.gain * c_inf)).max(0.0);
    let runs: Vec<Trajectory> = starts
        .par_iter()
        .map(|x0| integrate(field, lf, x0, bound_t * (1.0 + 1e-9) + 1e-12, opts, true))
        .collect();
    if let Some(bad) = runs.iter().find(|r| r.status().is_failure()) {
        return Err(Error::Integrator(format!("capture run ended with {:?}", bad.status())));
    }
    let capture_times: Vec<Option<f64>> = runs.iter().map(|r| capture_time(r, lf)).collect();
    let excess: Vec<f64> = runs.iter().map(|r| max_descent_excess(r, lf)).collect();
    Ok(CaptureReport {
        c_sup,
        c_inf,
        bound_t,
        c_samples: outside.len(),
        captured_within_bound: capture_times.iter().filter(|t| t.is_some_and(|t| t <= bound_t)).count(),
        n_traj,
        stagnated: runs.iter().filter(|r| r.stagnated).count(),
        descent_violations: runs
            .iter()
            .map(|r| r.phi_values.windows(2).filter(|w| w[0] > lf.delta && w[1] > lf.delta && w[1] - w[0] > 10.0 * opts.tol).count())
            .sum(),
        max_descent_excess: excess.into_iter().fold(f64::NEG_INFINITY, f64::max),
        capture_times,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub starts: usize,
    pub horizon: f64,
    /// Trajectories with some state at `φ > δ (1 + 1e-3)`.
    pub violations: usize,
    /// Largest `φ / δ` seen.
    pub max_phi_ratio: f64,
}

pub fn check_positive_invariance<F: VectorField + ?Sized>(
    field: &F,
    lf: &LyapunovField,
    n: usize,
    horizon: f64,
    opts: &RunOptions,
    seed: u64,
) -> Result<InvarianceReport> {
    if n == 0 {
        return Err(Error::domain("invariance check needs at least one start"));
    }
    let starts = sample_inside_p(lf, n, seed);
    let peaks: Vec<Result<f64>> = starts
        .par_iter()
        .map(|x0| {
            let r = integrate(field, lf, x0, horizon, opts, false);
            if r.status().is_failure() {
                return Err(Error::Integrator(format!("invariance run ended with {:?}", r.status())));
            }
            Ok(r.phi_values.iter().copied().fold(0.0, f64::max))
        })
        .collect();
    let peaks = peaks.into_iter().collect::<Result<Vec<_>>>()?;
    let limit = lf.delta * (1.0 + 1e-3);
    Ok(InvarianceReport {
        starts: n,
        horizon,
        violations: peaks.iter().filter(|&&p| p > limit).count(),
        max_phi_ratio: peaks.iter().copied().fold(0.0, f64::max) / lf.delta,
    })
}

#[derive(Debug, Clone)]
pub struct AttractorEstimate {
    pub cloud: PointCloud,
    /// Hausdorff distance between the two halves of the late window.
    pub drift: f64,
    pub settled: bool,
    pub stagnated: usize,
    pub trajectories: Vec<Trajectory>,
}

/// Late-window states of `n` runs started across `P`, sampled every
/// `sample_dt` over `[settle, horizon]` and thinned at `thin_x`. Settled when
/// the two halves of the window are within `settle_tol` of each other.
#[allow(clippy::too_many_arguments)]
pub fn estimate_x<F: VectorField + ?Sized>(
    field: &F,
    lf: &LyapunovField,
    horizon: f64,
    settle: f64,
    n: usize,
    settle_tol: f64,
    thin_x: f64,
    opts: &RunOptions,
    seed: u64,
) -> Result<AttractorEstimate> {
    if !(settle >= 0.0 && settle < horizon) {
        return Err(Error::domain(format!("settle = {settle} must lie in [0, horizon = {horizon})")));
    }
    if n == 0 {
        return Err(Error::domain("attractor estimate needs at least one run"));
    }
    let starts = sample_inside_p(lf, n, seed);
    let runs: Vec<Trajectory> = starts.par_iter().map(|x0| integrate(field, lf, x0, horizon, opts, false)).collect();
    if let Some(bad) = runs.iter().find(|r| r.status().is_failure()) {
        return Err(Error::Integrator(format!("estimate run ended with {:?}", bad.status())));
    }
    let mid = 0.5 * (settle + horizon);
    let samples = 400usize;
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for r in runs.iter().filter(|r| !r.stagnated) {
        for k in 0..=samples {
            let t = settle + (horizon - settle) * k as f64 / samples as f64;
            if let Some(x) = r.solution.sample(t) {
                if t <= mid {
                    first.push(x);
                } else {
                    second.push(x);
                }
            }
        }
    }
    let stagnated = runs.iter().filter(|r| r.stagnated).count();
    if first.is_empty() || second.is_empty() {
        return Err(Error::Settling(format!("{stagnated} of {n} runs stagnated before the late window")));
    }
    let drift = geometry::hausdorff_distance(&PointCloud::from_rows(&first)?, &PointCloud::from_rows(&second)?)?;
    let mut all = first;
    all.extend(second);
    let keep = farthest_point_thinning(&all, all.len(), thin_x);
    let mut keep_sorted = keep;
    keep_sorted.sort_unstable();
    let rows: Vec<&Vec<f64>> = keep_sorted.iter().map(|&i| &all[i]).collect();
    Ok(AttractorEstimate {
        cloud: PointCloud::from_rows(&rows)?,
        drift,
        settled: drift <= settle_tol,
        stagnated,
        trajectories: runs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproductionReport {
    pub t: f64,
    pub indices: Vec<usize>,
    pub errors: Vec<f64>,
    pub sup_error: f64,
    /// Largest distance of `L u(t)` from the embedded cloud.
    pub max_offcloud: f64,
}

/// `sup_{t <= T} |L u(t) - x(t)|` for upstream runs from sample points and
/// downstream runs of `field` from their images.
#[allow(clippy::too_many_arguments)]
pub fn check_reproduction<F: VectorField + ?Sized>(
    system: &System,
    l: &LinearEmbedding,
    field: &F,
    lf: &LyapunovField,
    sample: &AttractorSample,
    indices: &[usize],
    t: f64,
    opts: &RunOptions,
) -> Result<ReproductionReport> {
    let grid = 2000usize;
    let results: Vec<Result<(f64, f64)>> = indices
        .par_iter()
        .map(|&i| {
            let u0 = sample.cloud.point(i);
            let up = system.trajectory(u0, t, opts.tol)?;
            let x0 = l.apply(u0);
            let down = integrate(field, lf, &x0, t, opts, false);
            if down.status().is_failure() || down.stagnated {
                return Err(Error::Integrator(format!("reproduction run ended with {:?}", down.status())));
            }
            let mut err = 0.0f64;
            let mut off = 0.0f64;
            for k in 0..=grid {
                let s = t * k as f64 / grid as f64;
                let lu = l.apply(&up.sample(s).expect("inside the span"));
                let x = down.solution.sample(s).expect("inside the span");
                err = err.max(geometry::dist(&lu, &x));
                if let Some((_, d2)) = lf.cloud.nearest_sq(&lu) {
                    off = off.max(d2.sqrt());
                }
            }
            Ok((err, off))
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = results.iter().map(|r| r.0).collect();
    Ok(ReproductionReport {
        t,
        indices: indices.to_vec(),
        sup_error: errors.iter().copied().fold(0.0, f64::max),
        max_offcloud: results.iter().map(|r| r.1).fold(0.0, f64::max),
        errors,
    })
}

/// Two copies of a field, for integrating a pair of solutions together.
struct Doubled<'a, F: ?Sized>(&'a F);

impl<F: VectorField + ?Sized> VectorField for Doubled<'_, F> {
    fn dim(&self) -> usize {
        2 * self.0.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let m = self.0.dim();
        let (a, b) = out.split_at_mut(m);
        self.0.eval(&x[..m], a);
        self.0.eval(&x[m..], b);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub ok: bool,
    /// Largest `|x(t) - y(t)| / envelope(t)`.
    pub max_ratio: f64,
    pub final_separation: f64,
}

/// Integrate from `x0` and `x0 + r0 u` (random unit `u`) and compare the
/// separation with the solution of `r' = M ω(r)`.
pub fn uniqueness_surrogate<F: VectorField + ?Sized>(
    field: &F,
    modulus: &Modulus,
    m: f64,
    x0: &[f64],
    r0: f64,
    t: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    let dim = x0.len();
    let u = random_unit(&mut stream_rng(seed, 0), dim);
    let mut z = x0.to_vec();
    z.extend(x0.iter().zip(&u).map(|(a, b)| a + r0 * b));
    let r_start = geometry::dist(&z[..dim], &z[dim..]);
    let opts = OdeOptions { tol: 1e-12, ..Default::default() };
    let sol = ode::integrate(&Doubled(field), &z, t, &opts);
    if sol.status.is_failure() {
        return Err(Error::Integrator(format!("uniqueness run ended with {:?}", sol.status)));
    }
    let env = separation_envelope(modulus, m, r_start, &sol.times)?;
    let mut max_ratio = 0.0f64;
    for (s, e) in sol.states.iter().zip(&env) {
        max_ratio = max_ratio.max(geometry::dist(&s[..dim], &s[dim..]) / e);
    }
    let last = sol.last_state();
    Ok(UniquenessReport {
        ok: max_ratio <= 1.0 + 1e-3,
        max_ratio,
        final_separation: geometry::dist(&last[..dim], &last[dim..]),
    })
}
