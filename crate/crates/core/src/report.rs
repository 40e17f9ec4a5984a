//! Summary JSON and plot script.
//!
//! The summary is assembled from the stage artifacts alone, so `attrakt
//! report` can rebuild it at any time. Keys are sorted and no paths or clocks
//! are recorded, which keeps the file byte-stable across reruns.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::error::Result;

pub const SCHEMA: &str = "attrakt-summary/1";

fn read(dir: &Path, name: &str) -> Result<Option<Value>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
}

fn merged(parts: &[Option<&Value>]) -> Value {
    let mut out = Map::new();
    let mut any = false;
    for p in parts.iter().flatten() {
        if let Value::Object(m) = p {
            any = true;
            for (k, v) in m {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    if any { Value::Object(out) } else { Value::Null }
}

fn at<'a>(v: &'a Option<Value>, path: &[&str]) -> Value {
    let mut cur = match v {
        Some(v) => v,
        None => return Value::Null,
    };
    for k in path {
        match cur.get(k) {
            Some(next) => cur = next,
            None => return Value::Null,
        }
    }
    cur.clone()
}

/// Build the summary from whatever artifacts exist in `dir`.
pub fn build_summary(cfg: &ExperimentConfig, dir: &Path) -> Result<Value> {
    let sample = read(dir, "sample.json")?;
    let dimension = read(dir, "dimension.json")?;
    let embedding = read(dir, "embedding.json")?;
    let embed = read(dir, "embed.json")?;
    let extension = read(dir, "extension.json")?;
    let extend = read(dir, "extend.json")?;
    let lyapunov = read(dir, "lyapunov.json")?;
    let ladder = read(dir, "ladder.json")?;
    let verify = read(dir, "verify.json")?;
    let failure = read(dir, "failure.json")?;

    let mut config = serde_json::to_value(cfg)?;
    if let Value::Object(m) = &mut config {
        m.remove("output");
    }

    let m_max = at(&extend, &["m_max"]);
    let constants = json!({
        "m": at(&embed, &["m"]),
        "m_augmented": at(&embed, &["m_augmented"]),
        "s_est": at(&dimension, &["s_est"]),
        "K": at(&dimension, &["k"]),
        "gamma": at(&embedding, &["gamma"]),
        "C_L": at(&embedding, &["C_L"]),
        "delta_L": at(&embedding, &["delta_L"]),
        "op_norm": at(&embedding, &["op_norm"]),
        "C0": at(&extension, &["C0"]),
        "C_L_eff": at(&extension, &["C_L_eff"]),
        "r_c": at(&extension, &["r_c"]),
        "M": m_max,
        "M_components": at(&extension, &["M"]),
        "M_vec": at(&extend, &["m_vec"]),
        "beta": at(&lyapunov, &["beta"]),
        "delta": at(&lyapunov, &["delta"]),
        "delta_collar": at(&lyapunov, &["delta_collar"]),
        "eps": at(&lyapunov, &["eps"]),
        "C": at(&verify, &["capture", "c_sup"]),
        "c": at(&verify, &["capture", "c_inf"]),
        "T": at(&verify, &["capture", "bound_t"]),
        "B_radius": json!(cfg.harness.b_radius),
    });

    let captured = at(&verify, &["capture", "captured_within_bound"]);
    let n_traj = at(&verify, &["capture", "n_traj"]);
    let results = json!({
        "hausdorff_X_LA": at(&verify, &["estimate", "hausdorff_x_la"]),
        "semidist_X_LA": at(&verify, &["estimate", "semidist_x_la"]),
        "semidist_LA_X": at(&verify, &["estimate", "semidist_la_x"]),
        "settled": at(&verify, &["estimate", "settled"]),
        "capture_times": at(&verify, &["capture", "capture_times"]),
        "captured_within_bound": captured,
        "all_captured": if captured.is_null() { Value::Null } else { json!(captured == n_traj) },
        "descent_violations": at(&verify, &["capture", "descent_violations"]),
        "bound_T": at(&verify, &["capture", "bound_t"]),
        "invariance_violations": at(&verify, &["invariance", "violations"]),
        "reproduction_error": at(&verify, &["reproduction", "sup_error"]),
        "refinement": at(&verify, &["refinement"]),
        "refinement_monotone": at(&verify, &["refinement_monotone"]),
        "uniqueness_envelope_ok": match (at(&verify, &["uniqueness", "passed"]), at(&verify, &["uniqueness", "runs"])) {
            (Value::Null, _) => Value::Null,
            (p, r) => json!(p == r),
        },
        "osgood": at(&extend, &["osgood"]),
    });

    let status = match (&failure, &verify) {
        (Some(_), _) => "failed",
        (None, Some(_)) => "ok",
        (None, None) => "partial",
    };

    Ok(json!({
        "schema": SCHEMA,
        "status": status,
        "failure": failure.unwrap_or(Value::Null),
        "config": config,
        "constants": constants,
        "results": results,
        "sample": sample.unwrap_or(Value::Null),
        "dimension": dimension.unwrap_or(Value::Null),
        "embedding": merged(&[embedding.as_ref(), embed.as_ref()]),
        "extension": merged(&[extension.as_ref(), extend.as_ref()]),
        "lyapunov": merged(&[lyapunov.as_ref(), ladder.as_ref()]),
        "verify": verify.unwrap_or(Value::Null),
    }))
}

pub fn write_summary(cfg: &ExperimentConfig, dir: &Path) -> Result<Value> {
    let summary = build_summary(cfg, dir)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// Gnuplot script for the φ-decay and attractor-overlay figures, reading the
/// trajectory and cloud CSVs written next to it.
pub fn gnuplot_script(dim: usize, runs: usize) -> String {
    let phi_col = dim + 2;
    let last = runs.saturating_sub(1);
    format!(
        "# gnuplot plot.gp\n\
         set datafile separator ','\n\
         set terminal pngcairo size 900,600\n\
         \n\
         set output 'phi_decay.png'\n\
         set logscale y\n\
         set xlabel 't'\n\
         set ylabel 'phi'\n\
         plot for [k=0:{last}] sprintf('traj_capture_%d.csv', k) every ::1 using 1:{phi_col} with lines title sprintf('run %d', k)\n\
         \n\
         set output 'overlay.png'\n\
         unset logscale y\n\
         set xlabel 'x1'\n\
         set ylabel 'x2'\n\
         plot 'embedded.csv' every ::1 using 1:2 with points pt 7 ps 0.6 title 'LA sample', \\\n\
         \x20    'x_est.csv' every ::1 using 1:2 with points pt 6 ps 0.6 title 'X estimate', \\\n\
         \x20    'traj_estimate.csv' every ::1 using 2:3 with lines title 'late run'\n"
    )
}
