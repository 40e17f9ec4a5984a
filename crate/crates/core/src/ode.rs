//! Autonomous ODE integration with the Dormand–Prince 5(4) pair.
//!
//! Local error control uses the max-norm scaled by `tol * max(1, |x_i|)`,
//! so the accepted local error per component is at most `tol` for states of
//! unit size. Dense output is a cubic Hermite interpolant between accepted
//! steps.

/// Right-hand side of an autonomous ODE `x' = f(x)`.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]);
}

/// Adapter turning a closure into a [`VectorField`].
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub tol: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Disables error control and takes steps of exactly this size.
    pub fixed_step: Option<f64>,
    /// Caps each step at `step_cap / |f(x_n)|`.
    pub step_cap: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { tol: 1e-9, h_max: f64::INFINITY, max_steps: 5_000_000, fixed_step: None, step_cap: None }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { tol, ..Default::default() }
    }

    pub fn fixed(h: f64) -> Self {
        OdeOptions { fixed_step: Some(h), ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Completed,
    /// The monitor asked to stop.
    Stopped,
    /// The controller proposed a step below `1e-14 * t_end`.
    StepUnderflow,
    MaxSteps,
    NonFinite,
}

impl Status {
    pub fn is_failure(self) -> bool {
        matches!(self, Status::StepUnderflow | Status::MaxSteps | Status::NonFinite)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    pub status: Status,
}

impl Solution {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("solution holds the initial state")
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("solution holds the initial time")
    }

    /// Dense output at `t`, or `None` outside the integrated span.
    pub fn sample(&self, t: f64) -> Option<Vec<f64>> {
        let n = self.times.len();
        if t < self.times[0] || t > self.times[n - 1] {
            return None;
        }
        let k = match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => return Some(self.states[k].clone()),
            Err(k) => k - 1,
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (y0, y1, f0, f1) = (&self.states[k], &self.states[k + 1], &self.derivs[k], &self.derivs[k + 1]);
        Some((0..y0.len()).map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]).collect())
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y5: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Stages { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n], y5: vec![0.0; n] }
    }

    /// One DP5 step from `y` with `k[0] = f(y)` already set. Leaves the
    /// fifth-order solution in `y5`, `f(y5)` in `k[6]`, and returns the
    /// scaled error norm.
    fn step<F: VectorField + ?Sized>(&mut self, field: &F, y: &[f64], h: f64, tol: f64) -> f64 {
        let n = y.len();
        let Stages { k, tmp, y5 } = self;
        macro_rules! stage {
            ($dst:expr, $($c:expr => $src:expr),+) => {{
                for i in 0..n {
                    tmp[i] = y[i] + h * (0.0 $(+ $c * k[$src][i])+);
                }
                field.eval(tmp, &mut k[$dst]);
            }};
        }
        stage!(1, A21 => 0);
        stage!(2, A31 => 0, A32 => 1);
        stage!(3, A41 => 0, A42 => 1, A43 => 2);
        stage!(4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
        stage!(5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
        for i in 0..n {
            y5[i] = y[i] + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i] + A76 * k[5][i]);
        }
        field.eval(y5, &mut k[6]);
        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = tol * 1f64.max(y[i].abs()).max(y5[i].abs());
            err = err.max(e.abs() / sc);
        }
        if err.is_nan() {
            f64::INFINITY
        } else {
            err
        }
    }
}

fn max_norm_scaled(v: &[f64], y: &[f64], tol: f64) -> f64 {
    v.iter().zip(y).map(|(a, b)| a.abs() / (tol * 1f64.max(b.abs()))).fold(0.0, f64::max)
}

fn initial_step<F: VectorField + ?Sized>(field: &F, y0: &[f64], f0: &[f64], tol: f64, t_end: f64) -> f64 {
    let d0 = max_norm_scaled(y0, y0, tol);
    let d1 = max_norm_scaled(f0, y0, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_end);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    field.eval(&y1, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = max_norm_scaled(&diff, y0, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(t_end)
}

pub fn integrate<F: VectorField + ?Sized>(field: &F, x0: &[f64], t_end: f64, opts: &OdeOptions) -> Solution {
    integrate_monitored(field, x0, t_end, opts, |_, _, _| Control::Continue)
}

/// Integrate from `x0` over `[0, t_end]`. The monitor sees every accepted
/// state `(t, x, f(x))`, starting with the initial one, and may stop the run.
pub fn integrate_monitored<F, M>(field: &F, x0: &[f64], t_end: f64, opts: &OdeOptions, mut monitor: M) -> Solution
where
    F: VectorField + ?Sized,
    M: FnMut(f64, &[f64], &[f64]) -> Control,
{
    let n = x0.len();
    let mut st = Stages::new(n);
    field.eval(x0, &mut st.k[0]);
    let mut sol = Solution {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        derivs: vec![st.k[0].clone()],
        accepted: 0,
        rejected: 0,
        status: Status::Completed,
    };
    if monitor(0.0, x0, &st.k[0]) == Control::Stop {
        sol.status = Status::Stopped;
        return sol;
    }
    if t_end <= 0.0 {
        return sol;
    }
    let h_min = 1e-14 * t_end;
    let mut y = x0.to_vec();
    let mut t = 0.0;
    let mut h = match opts.fixed_step {
        Some(h) => h,
        None => initial_step(field, &y, &st.k[0], opts.tol, t_end),
    };
    let mut last_rejected = false;
    loop {
        if t_end - t <= 1e-15 * t_end {
            break;
        }
        if sol.accepted + sol.rejected >= opts.max_steps {
            sol.status = Status::MaxSteps;
            break;
        }
        let mut step = h.min(opts.h_max);
        if let Some(cap) = opts.step_cap {
            let fnorm = st.k[0].iter().map(|v| v * v).sum::<f64>().sqrt();
            if fnorm > 0.0 {
                step = step.min(cap / fnorm);
            }
        }
        if opts.fixed_step.is_none() && step < h_min {
            sol.status = Status::StepUnderflow;
            break;
        }
        let final_step = t + step >= t_end;
        if final_step {
            step = t_end - t;
        }
        let err = st.step(field, &y, step, opts.tol);
        if opts.fixed_step.is_some() || err <= 1.0 {
            if st.y5.iter().any(|v| !v.is_finite()) {
                sol.status = Status::NonFinite;
                break;
            }
            t = if final_step { t_end } else { t + step };
            std::mem::swap(&mut y, &mut st.y5);
            let (first, rest) = st.k.split_at_mut(6);
            std::mem::swap(&mut first[0], &mut rest[0]);
            sol.accepted += 1;
            sol.times.push(t);
            sol.states.push(y.clone());
            sol.derivs.push(st.k[0].clone());
            if monitor(t, &y, &st.k[0]) == Control::Stop {
                sol.status = Status::Stopped;
                break;
            }
            if opts.fixed_step.is_none() {
                let mut factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if last_rejected {
                    factor = factor.min(1.0);
                }
                h = step * factor;
            }
            last_rejected = false;
        } else {
            sol.rejected += 1;
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.2, 1.0) } else { 0.2 };
            h = step * factor;
            last_rejected = true;
        }
    }
    sol
}
