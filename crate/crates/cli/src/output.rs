//! Deterministic artifact emission: CSV traces, PGM snapshots, study
//! reports, and a manifest listing every emitted file with its hash.

use anyhow::{Context, Result};
use capflow_core::diagnostics::{
    barrier_chain_check, contact_angle_check, density_check, dissipation_report, el_residual,
    multiplier_pin_check, DiagnosticsReport,
};
use capflow_core::domain::IndicatorSet;
use capflow_core::flow::{FlowTrace, StudyReport};
use capflow_core::stepper::discrete_velocity;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// One emitted artifact: file name (relative to the output directory) and
/// its exact bytes.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut out = String::from("k,t,lambda,volume,capillary,dissipation,penalty,off_volume,r_t\n");
    for r in &trace.records {
        let off = if r.off_volume { 1 } else { 0 };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.index,
            r.time,
            r.lambda,
            r.volume,
            r.capillary,
            r.dissipation,
            r.penalty,
            off,
            r.cap_radius
        );
    }
    out
}

/// Post-run verification of the scheme's quantitative guarantees. The
/// stationarity-only checks (contact inclination, pointwise curvature
/// relation) are included only when the run declared and reached a
/// stationary stop, since they are meaningless mid-flight.
pub fn run_report(trace: &FlowTrace) -> Result<DiagnosticsReport> {
    let g = trace.grid;
    let mut report = DiagnosticsReport::default();
    report.extend(dissipation_report(&trace.records, trace.initial_budget()));
    report.push(density_check(&trace.records, g.d(), trace.kappa, trace.h, g.dx()));
    report.push(barrier_chain_check(&trace.records, trace.h, g.dx()));
    report.push(multiplier_pin_check(&trace.records, trace.h, trace.m0));
    if trace.stopped_stationary {
        if let Some(entry) = contact_angle_check(&trace.final_set, &trace.beta)? {
            report.push(entry);
        }
        let velocity = discrete_velocity(&trace.final_set, &trace.penultimate_set, trace.h)?;
        let lambda = trace.records.last().map(|r| r.lambda).unwrap_or(0.0);
        if let Some(res) = el_residual(&trace.final_set, &velocity, lambda)? {
            report.push(capflow_core::CheckEntry::new(
                "el_residual_rms",
                res.rms,
                0.1 * lambda.abs().max(1e-6),
            ));
        }
    }
    Ok(report)
}

/// Binary PGM (P5) of one state: 255 inside, 0 outside, the first raster
/// row is the bottom boundary row. Spatial runs are rendered as the
/// vertical cross-section through the middle of the second horizontal axis.
pub fn snapshot_pgm(set: &IndicatorSet) -> Vec<u8> {
    let g = *set.grid();
    let (nx, nz) = (g.n_horiz(), g.n_vert());
    let iy = if g.d() == 1 { 0 } else { g.n_horiz() / 2 };
    let mut bytes = format!("P5\n{nx} {nz}\n255\n").into_bytes();
    for iz in 0..nz {
        for ix in 0..nx {
            bytes.push(if set.contains(g.index(ix, iy, iz)) { 255 } else { 0 });
        }
    }
    bytes
}

pub fn study_json(report: &StudyReport) -> Result<String> {
    let levels: Vec<serde_json::Value> = report
        .levels
        .iter()
        .map(|l| {
            serde_json::json!({
                "level": l.level,
                "dx": l.dx,
                "h": l.h,
                "n_horiz": l.n_horiz,
                "n_vert": l.n_vert,
                "steps": l.steps,
                "holder": l.holder,
                "sum_h_lambda2": l.sum_h_lambda2,
                "sum_h_v2": l.sum_h_v2,
                "off_volume_time": l.off_volume_time,
                "final_volume": l.final_volume,
            })
        })
        .collect();
    let entries: Vec<serde_json::Value> = report
        .entries
        .iter()
        .map(|e| {
            serde_json::json!({
                "name": e.name,
                "value": e.value,
                "threshold": e.threshold,
                "pass": e.pass,
            })
        })
        .collect();
    let value = serde_json::json!({
        "sample_times": report.sample_times,
        "levels": levels,
        "sym_diff": report.sym_diff,
        "entries": entries,
        "pass": report.passes(),
    });
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Write all artifacts plus a `manifest.json` naming each one with its
/// SHA-256 content hash and echoing the configuration that produced them.
pub fn write_with_manifest(
    dir: &Path,
    command: &str,
    config_echo: &serde_json::Value,
    artifacts: &[Artifact],
) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut files = Vec::new();
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes)
            .with_context(|| format!("cannot write {}", path.display()))?;
        files.push(serde_json::json!({
            "name": a.name,
            "sha256": sha256_hex(&a.bytes),
        }));
    }
    let manifest = serde_json::json!({
        "command": command,
        "config": config_echo,
        "out_dir": dir.display().to_string(),
        "files": files,
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
