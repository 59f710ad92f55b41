//! Command implementations. Each returns `Ok(true)` when the work finished
//! and every check passed, `Ok(false)` when a verification failed, and
//! `Err` on configuration or runtime problems.

use crate::config::RunConfigFile;
use crate::output::{
    self, run_report, snapshot_pgm, study_json, trace_csv, write_with_manifest, Artifact,
};
use anyhow::{bail, Context, Result};
use capflow_core::diagnostics::tolerances;
use capflow_core::flow::{refine_study, run_flow};
use capflow_core::oracle::{distance_suite, mincut_suite, stepper_suite};
use std::path::{Path, PathBuf};

fn default_out(config_path: &Path, suffix: &str) -> PathBuf {
    let stem = config_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "capflow".to_string());
    PathBuf::from(format!("{stem}_{suffix}"))
}

pub fn cmd_run(config_path: &Path, out: Option<&Path>) -> Result<bool> {
    let (parsed, echo) = RunConfigFile::load(config_path)?;
    let flow_config = parsed.to_flow_config()?;
    let trace = run_flow(&flow_config).context("flow run failed")?;
    let report = run_report(&trace).context("post-run diagnostics failed")?;

    let mut artifacts = vec![
        Artifact { name: "trace.csv".into(), bytes: trace_csv(&trace).into_bytes() },
        Artifact { name: "diagnostics.csv".into(), bytes: report.to_csv().into_bytes() },
    ];
    for snap in &trace.snapshots {
        artifacts.push(Artifact {
            name: format!("snap_{:06}.pgm", snap.index),
            bytes: snapshot_pgm(&snap.set),
        });
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| default_out(config_path, "out"));
    write_with_manifest(&dir, "run", &echo, &artifacts)?;

    println!(
        "run: {} steps of {} planned, final volume {}, {} snapshots -> {}",
        trace.steps_taken,
        trace.planned_steps,
        trace.records.last().map(|r| r.volume).unwrap_or(0.0),
        trace.snapshots.len(),
        dir.display()
    );
    if trace.stopped_stationary {
        println!("run: stationary stop triggered");
    }
    for e in &report.entries {
        println!(
            "{} {}: {} vs {}",
            if e.pass { "PASS" } else { "FAIL" },
            e.name,
            e.value,
            e.threshold
        );
    }
    Ok(report.passes())
}

pub fn cmd_study(config_path: &Path, levels: usize, out: Option<&Path>) -> Result<bool> {
    if levels < 2 {
        bail!("a refinement study needs at least 2 levels, got {levels}");
    }
    let (parsed, echo) = RunConfigFile::load(config_path)?;
    let flow_config = parsed.to_flow_config()?;
    let report = refine_study(&flow_config, levels).context("refinement study failed")?;

    let artifacts = vec![Artifact {
        name: "study.json".into(),
        bytes: study_json(&report)?.into_bytes(),
    }];
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| default_out(config_path, "study"));
    write_with_manifest(&dir, "study", &echo, &artifacts)?;

    for l in &report.levels {
        println!(
            "level {}: dx {}, h {}, {} steps, holder {}, sum h lambda^2 {}, sum h v^2 {}",
            l.level, l.dx, l.h, l.steps, l.holder, l.sum_h_lambda2, l.sum_h_v2
        );
    }
    for e in &report.entries {
        println!(
            "{} {}: {} vs {}",
            if e.pass { "PASS" } else { "FAIL" },
            e.name,
            e.value,
            e.threshold
        );
    }
    println!("study report -> {}", dir.display());
    Ok(report.passes())
}

pub fn cmd_oracle(size: usize, trials: usize, seed: u64, corrupt: bool) -> Result<bool> {
    if !(2..=5).contains(&size) {
        bail!("oracle size must lie between 2 and 5, got {size}");
    }
    if trials == 0 {
        bail!("oracle needs at least one trial");
    }
    let cut = mincut_suite(size, trials, seed, corrupt).context("cut suite failed to run")?;
    println!(
        "{} cut solver: {} solves, {} mismatches, worst gap {} quanta",
        if cut.passes() { "PASS" } else { "FAIL" },
        cut.solves,
        cut.mismatches,
        cut.worst_gap_quanta
    );
    let step = stepper_suite(trials.div_ceil(2), seed.wrapping_add(1))
        .context("stepper suite failed to run")?;
    println!(
        "{} stepper: {}/{} exact, {}/{} within one penalty slope, \
         probe-only search {}/{} exact (reported, not gated)",
        if step.passes() { "PASS" } else { "FAIL" },
        step.default_exact,
        step.trials,
        step.default_within_slack,
        step.trials,
        step.bisection_exact,
        step.trials
    );
    let dist = distance_suite(20, seed.wrapping_add(2)).context("distance suite failed to run")?;
    println!(
        "{} distance transform: {} fields, {} mismatched cells",
        if dist.passes() { "PASS" } else { "FAIL" },
        dist.trials,
        dist.mismatched_cells
    );
    Ok(cut.passes() && step.passes() && dist.passes())
}

struct TraceRow {
    lambda: f64,
    volume: f64,
    capillary: f64,
    dissipation: f64,
    penalty: f64,
    off_volume: bool,
    r_t: f64,
}

fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines();
    let header = lines.next().context("trace.csv is empty")?;
    if header != "k,t,lambda,volume,capillary,dissipation,penalty,off_volume,r_t" {
        bail!("trace.csv has an unexpected header: {header}");
    }
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 9 {
            bail!("trace.csv row {} has {} columns, expected 9", i + 2, cols.len());
        }
        let f = |k: usize| -> Result<f64> {
            cols[k]
                .parse::<f64>()
                .with_context(|| format!("trace.csv row {}, column {}", i + 2, k + 1))
        };
        rows.push(TraceRow {
            lambda: f(2)?,
            volume: f(3)?,
            capillary: f(4)?,
            dissipation: f(5)?,
            penalty: f(6)?,
            off_volume: cols[7] == "1",
            r_t: f(8)?,
        });
    }
    Ok(rows)
}

pub fn cmd_diagnose(dir: &Path) -> Result<bool> {
    let manifest_path = dir.join("manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&manifest_path)
            .with_context(|| format!("cannot read {}", manifest_path.display()))?,
    )
    .context("manifest.json is not valid JSON")?;
    let mut all_pass = true;

    // 1. Every listed file must exist with the recorded content hash.
    let files = manifest["files"].as_array().context("manifest lists no files")?;
    for f in files {
        let name = f["name"].as_str().context("manifest file entry without a name")?;
        let recorded = f["sha256"].as_str().context("manifest file entry without a hash")?;
        match std::fs::read(dir.join(name)) {
            Ok(bytes) => {
                let actual = output::sha256_hex(&bytes);
                let ok = actual == recorded;
                all_pass &= ok;
                println!("{} hash {}", if ok { "PASS" } else { "FAIL" }, name);
            }
            Err(_) => {
                all_pass = false;
                println!("FAIL hash {name} (missing)");
            }
        }
    }

    // 2. Recorded checks must still hold as stated.
    let diag_path = dir.join("diagnostics.csv");
    if diag_path.exists() {
        let text = std::fs::read_to_string(&diag_path)?;
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                bail!("diagnostics.csv has a malformed row: {line}");
            }
            let value: f64 = cols[1].parse().context("diagnostics.csv value")?;
            let threshold: f64 = cols[2].parse().context("diagnostics.csv threshold")?;
            let ok = value <= threshold && cols[3] == "true";
            all_pass &= ok;
            println!("{} check {}: {} vs {}", if ok { "PASS" } else { "FAIL" }, cols[0], value, threshold);
        }
    }

    // 3. Invariants recoverable from the trace alone: per-step energy
    //    descent, the barrier-radius chain, and multiplier pinning.
    let trace_path = dir.join("trace.csv");
    if trace_path.exists() {
        let rows = parse_trace(&std::fs::read_to_string(&trace_path)?)?;
        let h = manifest["config"]["h"].as_f64().context("manifest config lacks h")?;
        let dx = manifest["config"]["grid"]["dx"]
            .as_f64()
            .context("manifest config lacks grid.dx")?;
        if let Some(first) = rows.first() {
            let budget = first.capillary + first.penalty;
            let mut drift = 0.0f64;
            let mut barrier_excess = 0.0f64;
            let mut pin_dev = 0.0f64;
            let m0 = first.volume;
            let slope = 1.0 / h.sqrt();
            for pair in rows.windows(2) {
                let held = pair[0].capillary + pair[0].penalty;
                let took = pair[1].capillary + pair[1].penalty + pair[1].dissipation;
                drift = drift.max(took - held);
                let allowed = pair[0].r_t + h * pair[1].lambda.abs() + 2.0 * dx;
                barrier_excess = barrier_excess.max(pair[1].r_t - allowed);
                if pair[1].off_volume {
                    let expected = slope * (m0 - pair[1].volume).signum();
                    pin_dev = pin_dev.max((pair[1].lambda - expected).abs());
                }
            }
            let checks = [
                ("energy_descent_drift", drift, tolerances::FLOAT_ENERGY_DRIFT * budget.max(1.0)),
                ("barrier_radius_growth", barrier_excess, tolerances::BARRIER_CHAIN_TOL),
                ("off_volume_multiplier_deviation", pin_dev, 0.0),
            ];
            for (name, value, threshold) in checks {
                let ok = value <= threshold;
                all_pass &= ok;
                println!(
                    "{} trace {}: {} vs {}",
                    if ok { "PASS" } else { "FAIL" },
                    name,
                    value,
                    threshold
                );
            }
        }
    }

    Ok(all_pass)
}
