//! Staged execution: sample → dimension → embed → extend → lyapunov → verify.
//!
//! Every stage reads only what earlier stages persisted in the output
//! directory, so a run can restart from any stage.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{C0Policy, ExperimentConfig};
use crate::dimension::{self, CoveringStats, DoublingEstimate, GateVerdict};
use crate::embedding::{self, EmbeddedCloud, LinearEmbedding};
use crate::error::{Error, Result};
use crate::extension::{self, ExtendedField, Modulus, OsgoodReport};
use crate::geometry::{self, io, PointCloud};
use crate::harness::{self, CaptureReport, InvarianceReport, ReproductionReport, RunOptions};
use crate::lyapunov::{self, CombinedField, LadderOutcome, LyapunovField};
use crate::report;
use crate::systems::{self, AttractorSample, System};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sample,
    Dimension,
    Embed,
    Extend,
    Lyapunov,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Sample, Stage::Dimension, Stage::Embed, Stage::Extend, Stage::Lyapunov, Stage::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Dimension => "dimension",
            Stage::Embed => "embed",
            Stage::Extend => "extend",
            Stage::Lyapunov => "lyapunov",
            Stage::Verify => "verify",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

// Offsets that give each stage its own random stream.
const SEED_EMBED: u64 = 1_000;
const SEED_DIMENSION: u64 = 2_000;
const SEED_LADDER: u64 = 3_000;
const SEED_CAPTURE: u64 = 4_000;
const SEED_INVARIANCE: u64 = 5_000;
const SEED_ESTIMATE: u64 = 6_000;
const SEED_UNIQUENESS: u64 = 7_000;
const SEED_ENVELOPE: u64 = 8_000;
/// Gradient floor enforced by the β ladder on `B ∖ P`.
const G_MIN: f64 = 1e-6;
/// Times the estimate horizon is doubled before giving up on settling.
const SETTLE_RETRIES: usize = 2;

fn seed_for(cfg: &ExperimentConfig, offset: u64) -> u64 {
    cfg.sampling.seed.wrapping_add(offset)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
    let text = fs::read_to_string(dir.join(name))
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{name}: {e}"))))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub n_requested: usize,
    pub n: usize,
    pub short: bool,
    pub burn_in: f64,
    pub thin: f64,
    pub seed: u64,
    pub diameter: f64,
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRecord {
    pub s_est: f64,
    /// True when the cloud has zero diameter and `s = 0`, `K = 1` are exact.
    pub degenerate: bool,
    pub covering: Option<CoveringStats>,
    pub k: usize,
    pub doubling: Option<DoublingEstimate>,
    pub gamma: f64,
    pub gamma_source: String,
    pub verdict: GateVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRecord {
    pub m: usize,
    pub m_augmented: usize,
    pub seed: u64,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendRecord {
    pub c0_policy: C0Policy,
    pub k: usize,
    pub m_max: f64,
    pub m_vec: f64,
    pub osgood: Option<OsgoodRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsgoodRecord {
    pub eps: f64,
    pub upper: f64,
    pub integral: f64,
    pub integral_half: f64,
    pub increasing: bool,
    pub divergent: bool,
}

impl From<OsgoodReport> for OsgoodRecord {
    fn from(r: OsgoodReport) -> Self {
        OsgoodRecord {
            eps: r.eps,
            upper: r.upper,
            integral: r.integral,
            integral_half: r.integral_half,
            increasing: r.increasing,
            divergent: r.divergent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRecord {
    pub beta_initial: f64,
    pub beta: f64,
    pub doublings: usize,
    pub g_min: f64,
    pub g_min_found: f64,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRecord {
    pub horizon: f64,
    pub settle: f64,
    pub points: usize,
    pub drift: f64,
    pub settled: bool,
    pub stagnated: usize,
    /// `dist(X_est, LA)`.
    pub semidist_x_la: f64,
    /// `dist(LA, X_est)`.
    pub semidist_la_x: f64,
    pub hausdorff_x_la: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessRecord {
    pub runs: usize,
    pub passed: usize,
    pub max_ratio: f64,
    pub r0: f64,
    pub t: f64,
    pub m_envelope: f64,
    /// Sampled constant of the combined field on `P`.
    pub m_field: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RefinementLevel {
    pub n: usize,
    pub thin: f64,
    pub tol: f64,
    pub points: usize,
    pub sup_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRecord {
    pub capture: CaptureReport,
    pub invariance: InvarianceReport,
    pub estimate: EstimateRecord,
    pub reproduction: ReproductionReport,
    pub uniqueness: UniquenessRecord,
    pub refinement: Vec<RefinementLevel>,
    pub refinement_monotone: Option<bool>,
}

/// Machine-readable failure cause, written as `failure.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub cause: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub completed: Vec<Stage>,
    pub failure: Option<Failure>,
    pub summary: Value,
}

// ---------------------------------------------------------------------------
// In-memory computations, shared by the stages and the refinement sweep.

pub fn compute_sample(cfg: &ExperimentConfig, system: &System) -> Result<AttractorSample> {
    let s = &cfg.sampling;
    systems::sample_attractor(system, s.n, s.burn_in, s.thin, s.seed, s.tol)
}

pub fn compute_dimension(cfg: &ExperimentConfig, sample: &AttractorSample) -> Result<DimensionRecord> {
    let cloud = &sample.cloud;
    let degenerate = cloud.len() < 2 || cloud.diameter() == 0.0;
    let (s_est, covering, k, doubling) = if degenerate {
        (0.0, None, 1, None)
    } else {
        let (r_list, rho_list) = dimension::usable_scales(cloud);
        let stats = dimension::assouad_estimate(cloud, &r_list, &rho_list, seed_for(cfg, SEED_DIMENSION))?;
        let mut radii = r_list.clone();
        radii.dedup();
        let dbl = dimension::doubling_constant(cloud, &radii, seed_for(cfg, SEED_DIMENSION))?;
        (stats.fit.s, Some(stats), dbl.k_est, Some(dbl))
    };
    let m = cfg.embedding.m;
    let (gamma, gamma_source) = match cfg.embedding.gamma {
        Some(g) => (g, "config"),
        None => (dimension::auto_gamma(s_est, m).unwrap_or(1.0), "auto"),
    };
    let verdict = dimension::check_gates(s_est, m, gamma)?;
    Ok(DimensionRecord { s_est, degenerate, covering, k, doubling, gamma, gamma_source: gamma_source.into(), verdict })
}

/// Verified `L`, augmented to `L'u = (Lu, 0)`, and the pushed-forward cloud.
pub fn compute_embedding(
    cfg: &ExperimentConfig,
    sample: &AttractorSample,
    gamma: f64,
) -> Result<(LinearEmbedding, EmbeddedCloud, EmbedRecord)> {
    let e = &cfg.embedding;
    let seed = seed_for(cfg, SEED_EMBED);
    let found = embedding::find_embedding(sample, e.m, gamma, seed, e.retries, e.delta_l, e.c_max)?;
    let l = embedding::augment(&found.embedding)?;
    let emb = embedding::project_sample(&l, sample)?;
    let rec = EmbedRecord { m: e.m, m_augmented: l.rows, seed: found.embedding.seed, rejected: found.rejected };
    Ok((l, emb, rec))
}

pub fn compute_extension(
    cfg: &ExperimentConfig,
    l: &LinearEmbedding,
    emb: EmbeddedCloud,
    k: usize,
) -> Result<(ExtendedField, ExtendRecord)> {
    let c = l.constants.ok_or_else(|| Error::domain("embedding carries no fitted constants"))?;
    let c0 = match cfg.extension.c0_policy {
        C0Policy::Fitted => 1.0,
        C0Policy::Theory => c.c_l * k as f64 * l.op_norm,
    };
    let diam = emb.cloud.diameter();
    let modulus = Modulus::new(c0, c.c_l, c.gamma, diam)?;
    let ext = ExtendedField::fit(emb, modulus)?;
    let upper = modulus.r_c.min(1.0);
    let osgood = extension::osgood_check(&modulus, (upper / 2.0).min(1e-6)).ok().map(OsgoodRecord::from);
    let rec = ExtendRecord { c0_policy: cfg.extension.c0_policy, k, m_max: ext.m_max(), m_vec: ext.m_vec(), osgood };
    Ok((ext, rec))
}

pub fn compute_lyapunov(cfg: &ExperimentConfig, cloud: PointCloud) -> Result<(LadderOutcome, f64)> {
    let ly = &cfg.lyapunov;
    let lf = LyapunovField::with_defaults(cloud, ly.eps, ly.delta, ly.beta, cfg.sampling.thin)?.with_gain(ly.gain)?;
    let beta_initial = lf.beta;
    let out = lyapunov::beta_ladder(lf, cfg.harness.b_radius, G_MIN, ly.ladder_samples, seed_for(cfg, SEED_LADDER))?;
    Ok((out, beta_initial))
}

fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions::new(cfg.harness.tol, cfg.sampling.thin)
}

fn reproduction_indices(n: usize, count: usize) -> Vec<usize> {
    (0..count).map(|k| k * n / count.max(1)).collect()
}

/// Reproduction error over levels `k = 0..=levels` with `n 2^k` points,
/// thinning `thin / 2^k` and tolerance `tol / 10^k`.
pub fn refinement_sweep(cfg: &ExperimentConfig, gamma: f64, k: usize, levels: usize) -> Result<Vec<RefinementLevel>> {
    let system = System::new(cfg.system.clone())?;
    let mut out = Vec::new();
    for level in 0..=levels {
        let mut c = cfg.clone();
        let scale = (1usize << level) as f64;
        c.sampling.n = cfg.sampling.n << level;
        c.sampling.thin = cfg.sampling.thin / scale;
        c.harness.tol = cfg.harness.tol / 10f64.powi(level as i32);
        let sample = compute_sample(&c, &system)?;
        let (l, emb, _) = compute_embedding(&c, &sample, gamma)?;
        let (ext, _) = compute_extension(&c, &l, emb.clone(), k)?;
        let (ladder, _) = compute_lyapunov(&c, emb.cloud.clone())?;
        let field = CombinedField::new(&ladder.field, &ext)?;
        let idx = reproduction_indices(sample.len(), c.harness.reproduction_starts);
        let rep = harness::check_reproduction(
            &system,
            &l,
            &field,
            &ladder.field,
            &sample,
            &idx,
            c.harness.reproduction_t,
            &run_options(&c),
        )?;
        out.push(RefinementLevel {
            n: c.sampling.n,
            thin: c.sampling.thin,
            tol: c.harness.tol,
            points: sample.len(),
            sup_error: rep.sup_error,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Persisted stages.

fn load_sample(cfg: &ExperimentConfig, dir: &Path) -> Result<AttractorSample> {
    let rec: SampleRecord = read_json(dir, "sample.json")?;
    let mut sample = AttractorSample::load(dir, "sample", rec.burn_in, rec.thin)?;
    sample.short = rec.short;
    if sample.cloud.dim() != cfg.system.ambient_dim {
        return Err(Error::format("persisted sample does not match the configured ambient dimension"));
    }
    Ok(sample)
}

fn load_extension(dir: &Path) -> Result<ExtendedField> {
    ExtendedField::load(dir, EmbeddedCloud::load(dir)?)
}

fn stage_sample(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let system = System::new(cfg.system.clone())?;
    let sample = compute_sample(cfg, &system)?;
    sample.save(dir, "sample")?;
    let s = &cfg.sampling;
    write_json(
        dir,
        "sample.json",
        &SampleRecord {
            n_requested: s.n,
            n: sample.len(),
            short: sample.short,
            burn_in: s.burn_in,
            thin: s.thin,
            seed: s.seed,
            diameter: sample.cloud.diameter(),
            resolution: sample.cloud.resolution(),
        },
    )
}

fn stage_dimension(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let sample = load_sample(cfg, dir)?;
    let rec = compute_dimension(cfg, &sample)?;
    write_json(dir, "dimension.json", &rec)?;
    if !rec.verdict.all_pass() {
        let msg: Vec<String> = rec.verdict.failures().iter().map(|g| format!("{} ({})", g.name, g.detail)).collect();
        return Err(Error::Gate(msg.join("; ")));
    }
    Ok(())
}

fn stage_embed(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let sample = load_sample(cfg, dir)?;
    let dim: DimensionRecord = read_json(dir, "dimension.json")?;
    if !dim.verdict.all_pass() {
        return Err(Error::Gate("dimension gates did not pass".into()));
    }
    let (l, emb, rec) = compute_embedding(cfg, &sample, dim.gamma)?;
    l.save(dir)?;
    emb.save(dir)?;
    write_json(dir, "embed.json", &rec)
}

fn stage_extend(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let l = LinearEmbedding::load(dir)?;
    let emb = EmbeddedCloud::load(dir)?;
    let dim: DimensionRecord = read_json(dir, "dimension.json")?;
    let (ext, rec) = compute_extension(cfg, &l, emb, dim.k)?;
    ext.save(dir)?;
    write_json(dir, "extend.json", &rec)
}

fn stage_lyapunov(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let emb = EmbeddedCloud::load(dir)?;
    let (out, beta_initial) = compute_lyapunov(cfg, emb.cloud)?;
    out.field.save(dir, out.field.sup_grad_on_cloud(), out.g_min_found)?;
    write_json(
        dir,
        "ladder.json",
        &LadderRecord {
            beta_initial,
            beta: out.field.beta,
            doublings: out.doublings,
            g_min: G_MIN,
            g_min_found: out.g_min_found,
            worst_point: out.worst_point,
        },
    )
}

fn stage_verify(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let system = System::new(cfg.system.clone())?;
    let sample = load_sample(cfg, dir)?;
    let l = LinearEmbedding::load(dir)?;
    let ext = load_extension(dir)?;
    let (lf, _) = LyapunovField::load(dir, ext.cloud().clone())?;
    let field = CombinedField::new(&lf, &ext)?;
    let h = &cfg.harness;
    let opts = run_options(cfg);

    let capture = harness::check_capture(&field, &lf, h.b_radius, h.n_traj, h.c_samples, &opts, seed_for(cfg, SEED_CAPTURE))?;
    let invariance = harness::check_positive_invariance(
        &field,
        &lf,
        h.invariance_starts,
        h.invariance_horizon,
        &opts,
        seed_for(cfg, SEED_INVARIANCE),
    )?;

    let settle_tol = h.settle_tol.unwrap_or(cfg.lyapunov.eps / 2.0);
    let thin_x = h.thin_x.unwrap_or(cfg.sampling.thin);
    let mut horizon = h.horizon;
    let mut attempt = 0;
    let est = loop {
        let est = harness::estimate_x(
            &field,
            &lf,
            horizon,
            h.settle,
            h.n_estimate,
            settle_tol,
            thin_x,
            &opts,
            seed_for(cfg, SEED_ESTIMATE),
        )?;
        if est.settled {
            break est;
        }
        if attempt == SETTLE_RETRIES {
            return Err(Error::Settling(format!(
                "window drift {} > {settle_tol} at horizon {horizon}",
                est.drift
            )));
        }
        attempt += 1;
        horizon = h.settle + 2.0 * (horizon - h.settle);
    };
    io::save_csv(&dir.join("x_est.csv"), &est.cloud)?;
    if let Some(tr) = est.trajectories.first() {
        fs::write(dir.join("traj_estimate.csv"), tr.to_csv())?;
    }
    let la = ext.cloud();
    let estimate = EstimateRecord {
        horizon,
        settle: h.settle,
        points: est.cloud.len(),
        drift: est.drift,
        settled: est.settled,
        stagnated: est.stagnated,
        semidist_x_la: geometry::semidistance(&est.cloud, la)?,
        semidist_la_x: geometry::semidistance(la, &est.cloud)?,
        hausdorff_x_la: geometry::hausdorff_distance(&est.cloud, la)?,
    };

    // Figure data: a few runs from the sphere bounding B.
    for k in 0..4usize.min(h.n_traj) {
        let mut rng = systems::stream_rng(seed_for(cfg, SEED_CAPTURE) ^ 0xf16, k as u64);
        let x0: Vec<f64> = embedding::random_unit(&mut rng, lf.dim()).into_iter().map(|v| v * h.b_radius).collect();
        let tr = harness::integrate(&field, &lf, &x0, capture.bound_t.max(1e-9), &opts, true);
        fs::write(dir.join(format!("traj_capture_{k}.csv")), tr.to_csv())?;
    }

    let idx = reproduction_indices(sample.len(), h.reproduction_starts);
    let reproduction = harness::check_reproduction(&system, &l, &field, &lf, &sample, &idx, h.reproduction_t, &opts)?;

    // The envelope bounds the integrated field, so the inward term and the
    // cutoffs count alongside g.
    let m_field = harness::fit_field_constant(&field, &lf, &ext.modulus, h.c_samples, seed_for(cfg, SEED_ENVELOPE));
    let m_env = ext.m_vec().max(m_field);
    let uidx = reproduction_indices(la.len(), h.uniqueness_starts);
    let runs: Vec<harness::UniquenessReport> = uidx
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            harness::uniqueness_surrogate(
                &field,
                &ext.modulus,
                m_env,
                la.point(i),
                h.uniqueness_r0,
                h.uniqueness_t,
                seed_for(cfg, SEED_UNIQUENESS).wrapping_add(k as u64),
            )
        })
        .collect::<Result<_>>()?;
    let uniqueness = UniquenessRecord {
        runs: runs.len(),
        passed: runs.iter().filter(|r| r.ok).count(),
        max_ratio: runs.iter().map(|r| r.max_ratio).fold(0.0, f64::max),
        r0: h.uniqueness_r0,
        t: h.uniqueness_t,
        m_envelope: m_env,
        m_field,
    };

    let (refinement, refinement_monotone) = if h.refinement_levels > 0 {
        let dim: DimensionRecord = read_json(dir, "dimension.json")?;
        let levels = refinement_sweep(cfg, dim.gamma, dim.k, h.refinement_levels)?;
        let mono = levels.windows(2).all(|w| w[1].sup_error <= w[0].sup_error);
        (levels, Some(mono))
    } else {
        (Vec::new(), None)
    };

    write_json(
        dir,
        "verify.json",
        &VerifyRecord { capture, invariance, estimate, reproduction, uniqueness, refinement, refinement_monotone },
    )?;
    fs::write(dir.join("plot.gp"), report::gnuplot_script(lf.dim(), 4usize.min(h.n_traj)))?;
    Ok(())
}

pub fn run_stage(stage: Stage, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    match stage {
        Stage::Sample => stage_sample(cfg, dir),
        Stage::Dimension => stage_dimension(cfg, dir),
        Stage::Embed => stage_embed(cfg, dir),
        Stage::Extend => stage_extend(cfg, dir),
        Stage::Lyapunov => stage_lyapunov(cfg, dir),
        Stage::Verify => stage_verify(cfg, dir),
    }
}

/// Run `from..=to`, then write the summary. A failing stage leaves earlier
/// artifacts in place, writes `failure.json` and is reported in the summary.
pub fn run_stages(cfg: &ExperimentConfig, dir: &Path, from: Stage, to: Stage) -> Result<RunArtifacts> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    cfg.resolve_static();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved.toml"), cfg.to_toml())?;
    let _ = fs::remove_file(dir.join("failure.json"));
    let mut completed = Vec::new();
    let mut failure = None;
    for stage in Stage::ALL.into_iter().filter(|s| *s >= from && *s <= to) {
        match run_stage(stage, &cfg, dir) {
            Ok(()) => completed.push(stage),
            Err(e) => {
                let f = Failure { stage, cause: e.cause().into(), exit_code: e.exit_code(), message: e.to_string() };
                write_json(dir, "failure.json", &f)?;
                failure = Some(f);
                break;
            }
        }
    }
    let summary = report::write_summary(&cfg, dir)?;
    Ok(RunArtifacts { dir: dir.to_path_buf(), completed, failure, summary })
}

pub fn run_pipeline(cfg: &ExperimentConfig, from: Stage) -> Result<RunArtifacts> {
    run_stages(cfg, &cfg.output.dir.clone(), from, Stage::Verify)
}
