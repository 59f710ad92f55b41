//! Whole-evolution driver: repeated exact steps from an initial shape, with
//! bookkeeping for traces, snapshots, early stopping, and a multi-resolution
//! refinement study.

use crate::barriers::{min_enclosing_cap, BarrierError};
use crate::diagnostics::{holder_modulus, velocity_and_multiplier_stats, CheckEntry};
use crate::domain::{BetaField, DomainError, GridSpec, IndicatorSet};
use crate::energy::{capillary_energy, perimeter, EnergyError, PerimeterStencil, StencilKind};
use crate::shapes::{rasterize_carved, Shape, ShapeError};
use crate::stepper::{step_with, StepError, StepOptions, StepRecord};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("{0}")]
    Shape(#[from] ShapeError),
    #[error("{0}")]
    Step(#[from] StepError),
    #[error("{0}")]
    Energy(#[from] EnergyError),
    #[error("{0}")]
    Barrier(#[from] BarrierError),
    #[error("initial shapes rasterize to the empty set")]
    EmptyInitialSet,
    #[error(
        "volume target {requested} is farther than one cell ({tolerance}) \
         from the rasterized initial volume {rasterized}"
    )]
    VolumeTargetMismatch { requested: f64, rasterized: f64, tolerance: f64 },
    #[error("evolving set reached the lateral or top truncation at step {step}")]
    WallContact { step: usize },
    #[error("bad flow configuration: {0}")]
    BadConfig(String),
}

/// Contact-energy coefficient layout along the supporting plane. Values
/// vary with the horizontal `x` coordinate only (constant in `y` for
/// volumetric grids) and are resolution-independent, so one description
/// serves every level of a refinement study.
#[derive(Debug, Clone)]
pub enum BetaSpec {
    Constant { value: f64 },
    /// Piecewise-constant samples spread uniformly across the bottom span;
    /// values are clamped into the admissible band `|beta| <= 1 - 2 kappa`.
    Table { values: Vec<f64> },
    /// Linear profile from the left wall edge to the right, clamped into
    /// the admissible band.
    Ramp { from: f64, to: f64 },
}

impl BetaSpec {
    pub fn build(&self, grid: GridSpec, kappa: f64) -> Result<BetaField, FlowError> {
        let band = 1.0 - 2.0 * kappa;
        let nx = grid.n_horiz();
        let span = nx as f64 * grid.dx();
        let profile_at = |wall_idx: usize| -> f64 {
            // Wall cells are laid out x-fastest; map to the x column.
            let ix = wall_idx % nx;
            let x = (ix as f64 + 0.5) * grid.dx();
            match self {
                BetaSpec::Constant { value } => *value,
                BetaSpec::Table { values } => {
                    let pos = (x / span * values.len() as f64).floor() as usize;
                    values[pos.min(values.len() - 1)].clamp(-band, band)
                }
                BetaSpec::Ramp { from, to } => {
                    (from + (to - from) * (x / span)).clamp(-band, band)
                }
            }
        };
        let n_wall = grid.n_bottom();
        let values: Vec<f64> = (0..n_wall).map(profile_at).collect();
        if let BetaSpec::Table { values } = self {
            if values.is_empty() {
                return Err(FlowError::BadConfig("beta table must not be empty".into()));
            }
        }
        Ok(BetaField::from_values(grid, kappa, values)?)
    }
}

/// Early-stop rule: halt after `window` consecutive steps that each moved
/// at most `max_cells` cells.
#[derive(Debug, Clone, Copy)]
pub struct StationaryStop {
    pub window: usize,
    pub max_cells: usize,
}

/// Complete description of one evolution.
#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub grid: GridSpec,
    pub kappa: f64,
    pub beta: BetaSpec,
    pub stencil: StencilKind,
    /// Implicit step length.
    pub h: f64,
    /// Physical end time; the step count is `floor(t_end / h)`.
    pub t_end: f64,
    /// Volume target. `None` uses the rasterized initial volume; a stated
    /// value is validated against it within one cell and then the
    /// rasterized volume is used, keeping the penalty exactly zero at rest.
    pub m0: Option<f64>,
    pub initial: Vec<Shape>,
    /// Regions removed from the union after rasterization, letting a config
    /// perturb a shape without changing its cell count (grid-aligned carves
    /// remove exactly their own cells).
    pub initial_carve: Vec<Shape>,
    /// Keep every `snapshot_every`-th set (0 keeps only the forced ones).
    pub snapshot_every: usize,
    /// Extra step indices whose sets must be kept.
    pub forced_snapshots: Vec<usize>,
    pub stop_when_stationary: Option<StationaryStop>,
    pub step: StepOptions,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub index: usize,
    pub time: f64,
    pub set: IndicatorSet,
}

/// Everything recorded about one evolution.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub grid: GridSpec,
    pub kappa: f64,
    pub stencil: StencilKind,
    pub beta: BetaField,
    pub h: f64,
    pub m0: f64,
    /// One record per kept state, the initial state at index 0 included.
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub initial_set: IndicatorSet,
    /// State one step before the final one (equals the initial set for
    /// zero- and one-step runs); the final step's velocity field is the
    /// distance to this set's boundary over `h`.
    pub penultimate_set: IndicatorSet,
    pub final_set: IndicatorSet,
    pub steps_taken: usize,
    pub planned_steps: usize,
    pub stopped_stationary: bool,
}

impl FlowTrace {
    /// Upper bound for the initial capillary energy: perimeter plus wetted
    /// area (the contact coefficient never exceeds one in absolute value).
    pub fn initial_budget(&self) -> f64 {
        let stencil = PerimeterStencil::new(self.stencil, &self.grid);
        perimeter(&self.initial_set, &stencil) + self.initial_set.trace_area()
    }
}

/// Runs the evolution described by `config` to its end time (or until the
/// stationarity rule fires), failing loudly if the set ever reaches the
/// lateral or top truncation of the computational box.
pub fn run_flow(config: &FlowConfig) -> Result<FlowTrace, FlowError> {
    if config.h <= 0.0 || !config.h.is_finite() {
        return Err(FlowError::BadConfig(format!("step length must be positive, got {}", config.h)));
    }
    if config.t_end < 0.0 || !config.t_end.is_finite() {
        return Err(FlowError::BadConfig(format!("end time must be nonnegative, got {}", config.t_end)));
    }
    let grid = config.grid;
    let beta = config.beta.build(grid, config.kappa)?;
    let stencil = PerimeterStencil::new(config.stencil, &grid);
    let initial = rasterize_carved(&config.initial, &config.initial_carve, grid)?;
    if initial.is_empty() {
        return Err(FlowError::EmptyInitialSet);
    }
    if let Some(idx) = touching_cell(&initial, &grid) {
        let _ = idx;
        return Err(FlowError::WallContact { step: 0 });
    }
    let rasterized = initial.volume();
    if let Some(requested) = config.m0 {
        let tolerance = grid.cell_volume();
        if !(requested.is_finite()) || (requested - rasterized).abs() > tolerance {
            return Err(FlowError::VolumeTargetMismatch { requested, rasterized, tolerance });
        }
    }
    let m0 = rasterized;
    let n_steps = (config.t_end / config.h + 1e-9).floor() as usize;

    let mut records = Vec::with_capacity(n_steps + 1);
    records.push(initial_record(&initial, &beta, &stencil, config.kappa)?);
    let mut snapshots = vec![Snapshot { index: 0, time: 0.0, set: initial.clone() }];
    let wants_snapshot = |k: usize| {
        (config.snapshot_every > 0 && k.is_multiple_of(config.snapshot_every))
            || config.forced_snapshots.contains(&k)
    };

    let mut prev = initial.clone();
    let mut current = initial.clone();
    let mut quiet_streak = 0usize;
    let mut stopped = false;
    let mut steps_taken = 0usize;
    for k in 1..=n_steps {
        let (next, mut rec) =
            step_with(&current, config.h, m0, &beta, &stencil, config.step)?;
        rec.index = k;
        rec.time = k as f64 * config.h;
        if touching_cell(&next, &grid).is_some() {
            return Err(FlowError::WallContact { step: k });
        }
        let moved = rec.sym_diff_cells;
        records.push(rec);
        prev = std::mem::replace(&mut current, next);
        steps_taken = k;
        if wants_snapshot(k) {
            snapshots.push(Snapshot { index: k, time: k as f64 * config.h, set: current.clone() });
        }
        if let Some(rule) = config.stop_when_stationary {
            quiet_streak = if moved <= rule.max_cells { quiet_streak + 1 } else { 0 };
            if quiet_streak >= rule.window {
                stopped = true;
                break;
            }
        }
    }
    if snapshots.last().map(|s| s.index) != Some(steps_taken) {
        snapshots.push(Snapshot {
            index: steps_taken,
            time: steps_taken as f64 * config.h,
            set: current.clone(),
        });
    }
    Ok(FlowTrace {
        grid,
        kappa: config.kappa,
        stencil: config.stencil,
        beta,
        h: config.h,
        m0,
        records,
        snapshots,
        initial_set: initial,
        penultimate_set: prev,
        final_set: current,
        steps_taken,
        planned_steps: n_steps,
        stopped_stationary: stopped,
    })
}

/// First occupied cell on the lateral or top truncation, if any.
fn touching_cell(e: &IndicatorSet, grid: &GridSpec) -> Option<usize> {
    e.iter_occupied().find(|&idx| grid.touches_truncation(idx))
}

/// The time-zero record: energies of the initial set, trivial dynamics.
/// The volume target equals the rasterized volume by construction, so the
/// penalty starts at exactly zero.
fn initial_record(
    e: &IndicatorSet,
    beta: &BetaField,
    stencil: &PerimeterStencil,
    kappa: f64,
) -> Result<StepRecord, FlowError> {
    Ok(StepRecord {
        index: 0,
        time: 0.0,
        lambda: 0.0,
        volume: e.volume(),
        capillary: capillary_energy(e, beta, stencil)?,
        dissipation: 0.0,
        penalty: 0.0,
        off_volume: false,
        cap_radius: min_enclosing_cap(e, kappa)?,
        sym_diff_cells: 0,
        density_max: 0.0,
        v2_face_sum: 0.0,
        margin_quanta: 0,
        quantum: 0.0,
    })
}

/// Per-level aggregates of a refinement study.
#[derive(Debug, Clone, Copy)]
pub struct LevelSummary {
    pub level: usize,
    pub dx: f64,
    pub h: f64,
    pub n_horiz: usize,
    pub n_vert: usize,
    pub steps: usize,
    /// Worst pairwise `|sym diff| / (budget sqrt(dt))` over kept snapshots.
    pub holder: f64,
    pub sum_h_lambda2: f64,
    pub sum_h_v2: f64,
    /// Off-target step count times the step length.
    pub off_volume_time: f64,
    pub final_volume: f64,
}

/// Cross-resolution comparison of one configuration run at geometrically
/// refined step lengths (`h`, `h/2`, `h/4`, ...) with matched grids
/// (`dx` proportional to `sqrt(h)`), sampled at a quarter, half, and the
/// full end time.
#[derive(Debug, Clone)]
pub struct StudyReport {
    pub sample_times: Vec<f64>,
    pub levels: Vec<LevelSummary>,
    /// `sym_diff[i][j]`: volume of the symmetric difference between level
    /// `i` and level `i+1` at `sample_times[j]`, measured exactly across
    /// the two grids.
    pub sym_diff: Vec<Vec<f64>>,
    pub entries: Vec<CheckEntry>,
}

impl StudyReport {
    pub fn passes(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

struct LevelOutcome {
    summary: LevelSummary,
    samples: Vec<IndicatorSet>,
}

/// Runs `levels` refinements of `base` (level 0 is `base` itself) and
/// cross-checks the convergence indicators. Levels run in parallel, capped
/// by the `CAPFLOW_THREADS` environment variable when set.
pub fn refine_study(base: &FlowConfig, levels: usize) -> Result<StudyReport, FlowError> {
    if levels == 0 {
        return Err(FlowError::BadConfig("a study needs at least one level".into()));
    }
    let t = base.t_end;
    let sample_times = vec![t / 4.0, t / 2.0, t];
    let max_threads = std::env::var("CAPFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()));

    let mut outcomes: Vec<Option<LevelOutcome>> = (0..levels).map(|_| None).collect();
    for chunk_start in (0..levels).step_by(max_threads) {
        let chunk_end = (chunk_start + max_threads).min(levels);
        let chunk: Vec<(usize, FlowConfig)> = (chunk_start..chunk_end)
            .map(|i| (i, level_config(base, i, &sample_times)))
            .collect();
        let sample_ref: &[f64] = &sample_times;
        let joined: Vec<Result<LevelOutcome, FlowError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .into_iter()
                .map(|(i, cfg)| scope.spawn(move || run_level(i, cfg, sample_ref)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("study level thread panicked"))
                .collect()
        });
        for (offset, out) in joined.into_iter().enumerate() {
            outcomes[chunk_start + offset] = Some(out?);
        }
    }
    let outcomes: Vec<LevelOutcome> = outcomes.into_iter().map(|o| o.expect("level ran")).collect();

    let mut entries = Vec::new();
    let mut sym_diff = Vec::new();
    for i in 0..levels.saturating_sub(1) {
        let mut row = Vec::new();
        for j in 0..sample_times.len() {
            let d = cross_grid_sym_diff(&outcomes[i].samples[j], &outcomes[i + 1].samples[j])?;
            // Refining must not move the evolution by more than the coarse
            // discrepancy (20% slack, floored at a few fine-grid cells).
            if i + 2 < levels {
                let d_next =
                    cross_grid_sym_diff(&outcomes[i + 1].samples[j], &outcomes[i + 2].samples[j])?;
                let floor = 4.0 * outcomes[i + 2].summary.dx.powi(outcomes_dim(base) as i32 + 1);
                entries.push(CheckEntry::new(
                    format!("sym_diff_contraction_l{}_s{}", i + 1, j),
                    d_next,
                    1.2 * d + floor,
                ));
            }
            row.push(d);
        }
        sym_diff.push(row);
    }
    spread_entry(&mut entries, "holder_spread", outcomes.iter().map(|o| o.summary.holder));
    spread_entry(
        &mut entries,
        "multiplier_energy_spread",
        outcomes.iter().map(|o| o.summary.sum_h_lambda2),
    );
    spread_entry(
        &mut entries,
        "velocity_energy_spread",
        outcomes.iter().map(|o| o.summary.sum_h_v2),
    );
    for i in 0..levels.saturating_sub(1) {
        entries.push(CheckEntry::new(
            format!("off_volume_time_l{}", i + 1),
            outcomes[i + 1].summary.off_volume_time,
            outcomes[i].summary.off_volume_time + 1e-9,
        ));
    }
    Ok(StudyReport {
        sample_times,
        levels: outcomes.iter().map(|o| o.summary).collect(),
        sym_diff,
        entries,
    })
}

fn outcomes_dim(base: &FlowConfig) -> usize {
    base.grid.d()
}

/// Ratio of the largest to the smallest value as a bounded-spread check.
fn spread_entry(entries: &mut Vec<CheckEntry>, name: &str, values: impl Iterator<Item = f64>) {
    let values: Vec<f64> = values.collect();
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    let ratio = if max <= 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    };
    entries.push(CheckEntry::new(name, ratio, 2.0));
}

/// Level `i` of the study: halve the step length per level and refine the
/// grid by `sqrt(2)` so that `h` stays proportional to `dx^2`, keeping the
/// physical box fixed.
fn level_config(base: &FlowConfig, i: usize, sample_times: &[f64]) -> FlowConfig {
    let factor = 2f64.powf(i as f64 / 2.0);
    let span_x = base.grid.n_horiz() as f64 * base.grid.dx();
    let z_top = base.grid.n_vert() as f64 * base.grid.dx();
    let n_horiz = (base.grid.n_horiz() as f64 * factor).round() as usize;
    let dx = span_x / n_horiz as f64;
    let n_vert = (z_top / dx).round() as usize;
    let grid = GridSpec::new(base.grid.d(), dx, n_horiz, n_vert, base.grid.horiz_min())
        .expect("refined grid parameters stay valid");
    let h = base.h / 2f64.powi(i as i32);
    let forced: Vec<usize> = sample_times.iter().map(|t| (t / h).round() as usize).collect();
    FlowConfig {
        grid,
        h,
        forced_snapshots: forced,
        stop_when_stationary: None,
        ..base.clone()
    }
}

fn run_level(
    level: usize,
    cfg: FlowConfig,
    sample_times: &[f64],
) -> Result<LevelOutcome, FlowError> {
    let trace = run_flow(&cfg)?;
    let budget = trace.initial_budget();
    let views: Vec<(f64, &IndicatorSet)> =
        trace.snapshots.iter().map(|s| (s.time, &s.set)).collect();
    let holder = holder_modulus(&views, budget)?;
    let stats = velocity_and_multiplier_stats(&trace.records, trace.h);
    let samples: Vec<IndicatorSet> = sample_times
        .iter()
        .map(|t| {
            let k = (t / trace.h).round() as usize;
            trace
                .snapshots
                .iter()
                .min_by_key(|s| s.index.abs_diff(k))
                .map(|s| s.set.clone())
                .expect("a run keeps at least one snapshot")
        })
        .collect();
    Ok(LevelOutcome {
        summary: LevelSummary {
            level,
            dx: trace.grid.dx(),
            h: trace.h,
            n_horiz: trace.grid.n_horiz(),
            n_vert: trace.grid.n_vert(),
            steps: trace.steps_taken,
            holder,
            sum_h_lambda2: stats.sum_h_lambda2,
            sum_h_v2: stats.sum_h_v2,
            off_volume_time: stats.off_volume_steps as f64 * trace.h,
            final_volume: trace.final_set.volume(),
        },
        samples,
    })
}

/// Exact volume of the symmetric difference of two rasterized sets living
/// on different grids over the same physical box, by rectangle overlap.
pub(crate) fn cross_grid_sym_diff(
    a: &IndicatorSet,
    b: &IndicatorSet,
) -> Result<f64, DomainError> {
    let (ga, gb) = (*a.grid(), *b.grid());
    if ga.d() != gb.d() {
        return Err(DomainError::GridMismatch);
    }
    let inter = cross_grid_intersection(a, b);
    Ok(a.volume() + b.volume() - 2.0 * inter)
}

fn cross_grid_intersection(a: &IndicatorSet, b: &IndicatorSet) -> f64 {
    let (ga, gb) = (*a.grid(), *b.grid());
    let (dxa, dxb) = (ga.dx(), gb.dx());
    let d = ga.d();
    let overlap = |lo1: f64, hi1: f64, lo2: f64, hi2: f64| (hi1.min(hi2) - lo1.max(lo2)).max(0.0);
    let mut total = 0.0;
    for idx in a.iter_occupied() {
        let (ix, iy, iz) = ga.coords(idx);
        let ax = (ga.horiz_min()[0] + ix as f64 * dxa, ga.horiz_min()[0] + (ix + 1) as f64 * dxa);
        let ay = (ga.horiz_min()[1] + iy as f64 * dxa, ga.horiz_min()[1] + (iy + 1) as f64 * dxa);
        let az = (iz as f64 * dxa, (iz + 1) as f64 * dxa);
        let bx_lo = (((ax.0 - gb.horiz_min()[0]) / dxb).floor().max(0.0)) as usize;
        let bx_hi = ((ax.1 - gb.horiz_min()[0]) / dxb).ceil().min(gb.n_horiz() as f64) as usize;
        let (by_lo, by_hi) = if d == 2 {
            (
                (((ay.0 - gb.horiz_min()[1]) / dxb).floor().max(0.0)) as usize,
                ((ay.1 - gb.horiz_min()[1]) / dxb).ceil().min(gb.ny() as f64) as usize,
            )
        } else {
            (0, 1)
        };
        let bz_lo = ((az.0 / dxb).floor().max(0.0)) as usize;
        let bz_hi = ((az.1 / dxb).ceil().min(gb.n_vert() as f64)) as usize;
        for jz in bz_lo..bz_hi {
            let oz = overlap(az.0, az.1, jz as f64 * dxb, (jz + 1) as f64 * dxb);
            if oz <= 0.0 {
                continue;
            }
            for jy in by_lo..by_hi {
                let oy = if d == 2 {
                    overlap(
                        ay.0,
                        ay.1,
                        gb.horiz_min()[1] + jy as f64 * dxb,
                        gb.horiz_min()[1] + (jy + 1) as f64 * dxb,
                    )
                } else {
                    1.0
                };
                if oy <= 0.0 {
                    continue;
                }
                for jx in bx_lo..bx_hi {
                    if !b.contains(gb.index(jx, jy, jz)) {
                        continue;
                    }
                    let ox = overlap(
                        ax.0,
                        ax.1,
                        gb.horiz_min()[0] + jx as f64 * dxb,
                        gb.horiz_min()[0] + (jx + 1) as f64 * dxb,
                    );
                    total += ox * oy * oz;
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::rasterize_union;
    use crate::diagnostics::dissipation_report;

    fn tiny_config() -> FlowConfig {
        let dx = 1.0 / 16.0;
        let grid = GridSpec::new(1, dx, 16, 16, [-0.5, 0.0]).unwrap();
        FlowConfig {
            grid,
            kappa: 0.5,
            beta: BetaSpec::Constant { value: 0.0 },
            stencil: StencilKind::N8,
            h: 4.0 * dx * dx,
            t_end: 5.0 * 4.0 * dx * dx,
            m0: None,
            initial: vec![Shape::Box { min: [-0.25, 0.0, 0.0], max: [0.25, 0.0, 0.5] }],
            initial_carve: Vec::new(),
            snapshot_every: 0,
            forced_snapshots: Vec::new(),
            stop_when_stationary: None,
            step: StepOptions::default(),
        }
    }

    #[test]
    fn short_run_completes_with_monotone_energy() {
        let trace = run_flow(&tiny_config()).unwrap();
        assert_eq!(trace.records.len(), 6);
        assert_eq!(trace.steps_taken, 5);
        assert_eq!(trace.records[0].penalty, 0.0);
        assert_eq!(trace.records[0].lambda, 0.0);
        let entries = dissipation_report(&trace.records, trace.initial_budget());
        assert!(entries.iter().all(|e| e.pass), "{entries:?}");
        assert!(trace.records.iter().all(|r| r.margin_quanta >= 0));
    }

    #[test]
    fn stated_volume_target_must_match_the_rasterization() {
        let mut config = tiny_config();
        config.m0 = Some(0.25);
        assert!(run_flow(&config).is_ok(), "matching target is accepted");
        config.m0 = Some(0.25 + 3.0 * config.grid.cell_volume());
        match run_flow(&config) {
            Err(FlowError::VolumeTargetMismatch { .. }) => {}
            other => panic!("expected a volume mismatch, got {other:?}"),
        }
    }

    #[test]
    fn reaching_the_lateral_wall_aborts() {
        let mut config = tiny_config();
        config.initial = vec![Shape::Ball { center: [0.35, 0.0, 0.3], radius: 0.14 }];
        match run_flow(&config) {
            Err(FlowError::WallContact { step: 0 }) => {}
            other => panic!("expected initial wall contact, got {other:?}"),
        }
    }

    #[test]
    fn stationary_rule_stops_the_run_early() {
        let mut config = tiny_config();
        // A box at its own target volume with a tiny step cannot move.
        config.h = 1e-6;
        config.t_end = 100.0 * config.h;
        config.stop_when_stationary = Some(StationaryStop { window: 3, max_cells: 0 });
        let trace = run_flow(&config).unwrap();
        assert!(trace.stopped_stationary);
        assert_eq!(trace.steps_taken, 3);
        assert_eq!(trace.records.len(), 4);
        assert_eq!(trace.final_set, trace.initial_set);
        assert_eq!(trace.snapshots.last().unwrap().index, 3);
    }

    #[test]
    fn snapshots_follow_cadence_and_forcing() {
        let mut config = tiny_config();
        config.h = 1e-6; // frozen, so every state equals the first
        config.t_end = 6.0 * config.h;
        config.snapshot_every = 2;
        config.forced_snapshots = vec![3];
        let trace = run_flow(&config).unwrap();
        let indices: Vec<usize> = trace.snapshots.iter().map(|s| s.index).collect();
        assert_eq!(indices, vec![0, 2, 3, 4, 6]);
    }

    #[test]
    fn ramp_profile_is_clamped_and_monotone() {
        let grid = GridSpec::new(1, 0.125, 16, 8, [-1.0, 0.0]).unwrap();
        let beta = BetaSpec::Ramp { from: -1.0, to: 1.0 }.build(grid, 0.3).unwrap();
        let band = 1.0 - 2.0 * 0.3;
        for w in 0..grid.n_bottom() {
            assert!(beta.at_wall(w).abs() <= band + 1e-12);
            if w > 0 {
                assert!(beta.at_wall(w) >= beta.at_wall(w - 1) - 1e-12);
            }
        }
        assert_eq!(beta.at_wall(0), -band, "left end saturates the band");
        assert_eq!(beta.at_wall(grid.n_bottom() - 1), band, "right end saturates the band");
    }

    #[test]
    fn table_profile_resamples_across_resolutions() {
        let spec = BetaSpec::Table { values: vec![-0.3, 0.1, 0.25] };
        let coarse = GridSpec::new(1, 0.25, 12, 4, [0.0, 0.0]).unwrap();
        let fine = GridSpec::new(1, 0.0625, 48, 16, [0.0, 0.0]).unwrap();
        let bc = spec.build(coarse, 0.3).unwrap();
        let bf = spec.build(fine, 0.3).unwrap();
        // Same physical position, same sample.
        assert_eq!(bc.at_wall(1), bf.at_wall(5));
        assert_eq!(bc.at_wall(6), bf.at_wall(25));
        assert_eq!(bc.at_wall(11), bf.at_wall(47));
    }

    #[test]
    fn cross_grid_comparison_is_exact_for_aligned_boxes() {
        let ga = GridSpec::new(1, 0.125, 8, 8, [0.0, 0.0]).unwrap();
        let gb = GridSpec::new(1, 0.0625, 16, 16, [0.0, 0.0]).unwrap();
        let shape = Shape::Box { min: [0.0, 0.0, 0.0], max: [0.5, 0.0, 0.5] };
        let a = rasterize_union(&[shape.clone()], ga).unwrap();
        let b = rasterize_union(&[shape], gb).unwrap();
        let d = cross_grid_sym_diff(&a, &b).unwrap();
        assert!(d.abs() < 1e-12, "identical physical sets differ by {d}");

        let left = rasterize_union(
            &[Shape::Box { min: [0.0, 0.0, 0.0], max: [0.25, 0.0, 0.25] }],
            ga,
        )
        .unwrap();
        let right = rasterize_union(
            &[Shape::Box { min: [0.5, 0.0, 0.5], max: [0.75, 0.0, 0.75] }],
            gb,
        )
        .unwrap();
        let d = cross_grid_sym_diff(&left, &right).unwrap();
        assert!((d - 0.125).abs() < 1e-12, "disjoint sets add volumes, got {d}");
    }

    #[test]
    fn refinement_study_produces_cross_level_checks() {
        let mut base = tiny_config();
        base.t_end = 2.0 * base.h;
        let report = refine_study(&base, 2).unwrap();
        assert_eq!(report.levels.len(), 2);
        assert_eq!(report.sym_diff.len(), 1);
        assert_eq!(report.sym_diff[0].len(), 3);
        assert_eq!(report.levels[1].n_horiz, 23); // 16 * sqrt(2) rounded
        assert!((report.levels[1].h - base.h / 2.0).abs() < 1e-15);
        assert!(report.entries.iter().any(|e| e.name == "holder_spread"));
    }
}
