//! Experiment configuration: a sectioned TOML file whose optional entries are
//! resolved into concrete values before any stage runs. The resolved form is
//! what gets echoed into the summary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::systems::{SystemKind, SystemSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C0Policy {
    /// `C0 = 1`; the fitted `M` absorbs every constant.
    Fitted,
    /// `C0 = C_L K ||L||_op`.
    Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub n: usize,
    pub burn_in: f64,
    pub thin: f64,
    pub seed: u64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub m: usize,
    pub gamma: Option<f64>,
    pub retries: usize,
    pub delta_l: Option<f64>,
    pub c_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionConfig {
    pub c0_policy: C0Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub eps: f64,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
    /// Factor on the inward gradient term.
    pub gain: f64,
    /// Points sampled outside `P` when probing for critical points.
    pub ladder_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub b_radius: f64,
    pub n_traj: usize,
    pub c_samples: usize,
    pub horizon: f64,
    pub settle: f64,
    pub n_estimate: usize,
    pub settle_tol: Option<f64>,
    pub thin_x: Option<f64>,
    pub tol: f64,
    pub invariance_starts: usize,
    pub invariance_horizon: f64,
    pub reproduction_starts: usize,
    pub reproduction_t: f64,
    pub uniqueness_starts: usize,
    pub uniqueness_r0: f64,
    pub uniqueness_t: f64,
    /// Extra levels of the `(n, tol)` refinement sweep; 0 disables it.
    pub refinement_levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// Config as written by the user. Every section is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    sampling: Option<toml::Table>,
    embedding: Option<toml::Table>,
    extension: Option<toml::Table>,
    lyapunov: Option<toml::Table>,
    harness: Option<toml::Table>,
    output: Option<toml::Table>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    kind: SystemKind,
    #[serde(default)]
    params: std::collections::BTreeMap<String, f64>,
    ambient_dim: Option<usize>,
    lift_seed: Option<u64>,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub sampling: SamplingConfig,
    pub embedding: EmbeddingConfig,
    pub extension: ExtensionConfig,
    pub lyapunov: LyapunovConfig,
    pub harness: HarnessConfig,
    pub output: OutputConfig,
}

fn merge<T: Serialize + serde::de::DeserializeOwned>(defaults: T, user: Option<toml::Table>, section: &str) -> Result<T> {
    let Some(user) = user else { return Ok(defaults) };
    let mut table = toml::Table::try_from(&defaults).map_err(|e| Error::Config(format!("[{section}]: {e}")))?;
    for (k, v) in user {
        table.insert(k, v);
    }
    table.try_into().map_err(|e| Error::Config(format!("[{section}]: {e}")))
}

impl ExperimentConfig {
    /// Defaults for `kind`, tuned so the whole pipeline fits in minutes on
    /// one core.
    pub fn defaults(kind: SystemKind) -> Self {
        let mut system = SystemSpec::new(kind);
        system.lift_seed = 1;
        let (n, burn_in, thin, b_radius, beta, eps) = match kind {
            SystemKind::PointSink => (200, 40.0, 0.02, 3.0, None, 0.05),
            SystemKind::PlanarCycle => (200, 20.0, 0.02, 3.0, Some(4e5), 0.05),
            SystemKind::Lorenz63 => (400, 20.0, 0.5, 60.0, None, 0.05),
            SystemKind::GalerkinKs => (300, 50.0, 0.05, 5.0, None, 0.05),
        };
        ExperimentConfig {
            system,
            sampling: SamplingConfig { n, burn_in, thin, seed: 7, tol: 1e-10 },
            embedding: EmbeddingConfig { m: 7, gamma: Some(0.95), retries: 20, delta_l: None, c_max: 1e3 },
            extension: ExtensionConfig { c0_policy: C0Policy::Fitted },
            lyapunov: LyapunovConfig { eps, delta: None, beta, gain: 1.0, ladder_samples: 4096 },
            harness: HarnessConfig {
                b_radius,
                n_traj: 64,
                c_samples: 4096,
                horizon: 40.0,
                settle: 10.0,
                n_estimate: 16,
                settle_tol: None,
                thin_x: None,
                tol: 1e-8,
                invariance_starts: 64,
                invariance_horizon: 50.0,
                reproduction_starts: 16,
                reproduction_t: 10.0,
                uniqueness_starts: 16,
                uniqueness_r0: 1e-8,
                uniqueness_t: 2.0,
                refinement_levels: 0,
            },
            output: OutputConfig { dir: PathBuf::from("attrakt-out") },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let sys = raw.system.ok_or_else(|| Error::Config("missing [system] section with `kind`".into()))?;
        let mut cfg = Self::defaults(sys.kind);
        cfg.system.params = sys.params;
        if let Some(n) = sys.ambient_dim {
            cfg.system.ambient_dim = n;
        }
        if let Some(s) = sys.lift_seed {
            cfg.system.lift_seed = s;
        }
        cfg.sampling = merge(cfg.sampling, raw.sampling, "sampling")?;
        cfg.embedding = merge(cfg.embedding, raw.embedding, "embedding")?;
        cfg.extension = merge(cfg.extension, raw.extension, "extension")?;
        cfg.lyapunov = merge(cfg.lyapunov, raw.lyapunov, "lyapunov")?;
        cfg.harness = merge(cfg.harness, raw.harness, "harness")?;
        cfg.output = merge(cfg.output, raw.output, "output")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        let s = &self.sampling;
        if s.n == 0 || !(s.burn_in > 0.0) || !(s.thin >= 0.0) || !(s.tol > 0.0) {
            return bad("sampling needs n >= 1, burn_in > 0, thin >= 0, tol > 0");
        }
        let e = &self.embedding;
        if e.m == 0 || e.m >= self.system.ambient_dim {
            return bad("embedding.m must satisfy 1 <= m < ambient_dim");
        }
        if let Some(g) = e.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return bad("embedding.gamma must lie in (0, 1]");
            }
        }
        if let Some(d) = e.delta_l {
            if !(d > 0.0 && d < 1.0) {
                return bad("embedding.delta_l must lie in (0, 1)");
            }
        }
        if !(e.c_max >= 1.0) {
            return bad("embedding.c_max must be at least 1");
        }
        let l = &self.lyapunov;
        if !(l.gain > 0.0 && l.gain.is_finite()) {
            return bad("lyapunov.gain must be positive");
        }
        if !(l.eps > 0.0) || l.delta.is_some_and(|d| !(d > 0.0)) || l.beta.is_some_and(|b| !(b > 0.0)) {
            return bad("lyapunov needs eps > 0 and positive delta/beta when given");
        }
        let h = &self.harness;
        if !(h.b_radius > 0.0) || !(h.tol > 0.0) || !(h.settle >= 0.0 && h.settle < h.horizon) {
            return bad("harness needs b_radius > 0, tol > 0 and 0 <= settle < horizon");
        }
        if h.n_traj == 0 || h.c_samples == 0 || h.n_estimate == 0 || !(h.uniqueness_r0 > 0.0) {
            return bad("harness counts and uniqueness_r0 must be positive");
        }
        Ok(())
    }

    /// Fill every optional entry that does not depend on data.
    pub fn resolve_static(&mut self) {
        let eps = self.lyapunov.eps;
        self.lyapunov.delta.get_or_insert(eps * eps / 2.0);
        self.harness.settle_tol.get_or_insert(eps / 2.0);
        let thin = self.sampling.thin;
        self.harness.thin_x.get_or_insert(if thin > 0.0 { thin } else { eps / 4.0 });
    }
}
