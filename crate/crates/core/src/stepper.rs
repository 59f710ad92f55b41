//! One implicit time step of the volume-constrained flow.
//!
//! The step minimizes `C_β(E) + (1/h) ∫_{EΔF} dist(·, ∂F) + (1/√h)||E| - m0|`
//! exactly (in quantized integers) by reducing the volume penalty to a
//! multiplier: for every `μ` the relaxed functional `Φ(E) + μ |E|` is solved
//! globally by min-cut, and minimizers shrink monotonically as `μ` grows, so
//! an integer bisection over the quantized multiplier brackets the target
//! volume. Two facts make the search exact rather than heuristic:
//!
//! * if a minimizer at the extreme multiplier `μ = ±1/√h` still over/under-
//!   shoots `m0` in the favorable direction, it is already a global minimum
//!   of the penalized functional (the penalty can never gain more than
//!   `|vol - m0|/√h`), and
//! * otherwise the optimum is one of the minimizers met while bisecting, up
//!   to one cell of volume slack — every probe's minimal and maximal
//!   minimizer goes into a candidate pool, the previous set `F` seeds the
//!   pool, and the winner is picked by the shared integer objective, with
//!   ties keeping `F` (so exact stationarity is preserved).
//!
//! On tiny grids the pool is additionally seeded with the true global
//! optimum from a Gray-code sweep, making the step exact by construction.
//!
//! The reported multiplier `λ` follows the optimality structure: off-volume
//! winners pin `λ = ±1/√h` (the penalty's full slope), on-volume winners get
//! the midpoint of the interval of multipliers at which the winner stays
//! optimal — the discrete analogue of the Lagrange multiplier, and the
//! natural estimate of the mean curvature scale of the step.

use crate::barriers::min_enclosing_cap;
use crate::distance::{signed_distance, DistanceError, ScalarField};
use crate::domain::{BetaField, DomainError, IndicatorSet};
use crate::energy::{capillary_energy, dissipation_term, EnergyError, PerimeterStencil};
use crate::mincut::{penalty_quanta, LinearizedSolver, MinCutError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("{0}")]
    Distance(#[from] DistanceError),
    #[error("{0}")]
    MinCut(#[from] MinCutError),
    #[error("{0}")]
    Energy(#[from] EnergyError),
    #[error("volume target must be nonnegative and finite, got {0}")]
    BadVolumeTarget(f64),
}

/// Tuning knobs for one step.
#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    /// Refine the reported multiplier to the midpoint of the winner's
    /// optimality interval (two extra bisections on the frozen band).
    pub lambda_refine: bool,
    /// Grids with at most this many cells also get an exhaustive Gray-code
    /// candidate, making the step provably exact there. Zero disables it.
    pub brute_force_cell_limit: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { lambda_refine: true, brute_force_cell_limit: 20 }
    }
}

/// Everything observable about one accepted step.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// Step number and physical time; filled by the flow driver.
    pub index: usize,
    pub time: f64,
    /// Discrete volume multiplier (curvature scale) of the step.
    pub lambda: f64,
    pub volume: f64,
    pub capillary: f64,
    /// Distance dissipation `(1/h) ∫_{EΔF} dist(·, ∂F)` of this step.
    pub dissipation: f64,
    /// Volume penalty `(1/√h) | |E| - m0 |` of the accepted set.
    pub penalty: f64,
    /// True when the accepted volume misses `m0` by more than half a cell.
    pub off_volume: bool,
    /// Radius of the smallest admissible cap barrier containing the set.
    pub cap_radius: f64,
    pub sym_diff_cells: usize,
    /// Largest distance to the previous boundary over moved cells.
    pub density_max: f64,
    /// Σ over cut faces of the new set of `(sd_F / h)^2 dx^d` — the squared
    /// normal velocity integrated over the new interface.
    pub v2_face_sum: f64,
    /// How many quanta the accepted step improved on keeping `F` (always
    /// nonnegative: `F` competes in the candidate pool).
    pub margin_quanta: i128,
    /// Physical size of one quantum of the step's integer objective.
    pub quantum: f64,
}

struct Candidate {
    set: IndicatorSet,
    /// Linear part of the objective in quanta (no penalty, no multiplier).
    phi: i128,
    cnt: usize,
}

/// Advances the set by one exact minimizing step with default options.
pub fn step(
    f_prev: &IndicatorSet,
    h: f64,
    m0: f64,
    beta: &BetaField,
    stencil: &PerimeterStencil,
) -> Result<(IndicatorSet, StepRecord), StepError> {
    step_with(f_prev, h, m0, beta, stencil, StepOptions::default())
}

/// Advances the set by one exact minimizing step.
pub fn step_with(
    f_prev: &IndicatorSet,
    h: f64,
    m0: f64,
    beta: &BetaField,
    stencil: &PerimeterStencil,
    opts: StepOptions,
) -> Result<(IndicatorSet, StepRecord), StepError> {
    if !m0.is_finite() || m0 < 0.0 {
        return Err(StepError::BadVolumeTarget(m0));
    }
    let grid = *f_prev.grid();
    let sd = signed_distance(f_prev)?;
    let solver = LinearizedSolver::new(f_prev, &sd, h, beta, stencil)?;
    let q = solver.quantum();
    let cellvol = grid.cell_volume();
    let inv_sqrt_h = 1.0 / h.sqrt();
    // Quanta of penalty per cell of volume error; multipliers beyond ±slope
    // can never be active at an optimum of the penalized functional.
    let slope = cellvol * inv_sqrt_h / q;
    let m_cap = (slope.ceil() as i64).max(1);

    let mut pool: Vec<Candidate> = Vec::new();
    let push = |pool: &mut Vec<Candidate>, set: IndicatorSet, phi: i128| {
        if pool.iter().any(|c| c.set == set) {
            return;
        }
        let cnt = set.count();
        pool.push(Candidate { set, phi, cnt });
    };
    push(&mut pool, f_prev.clone(), solver.energy_quanta(f_prev, 0));

    // Solved multipliers and their global optima, for the λ refinement.
    let mut probes: Vec<(i64, i128)> = Vec::new();
    let record_solution =
        |pool: &mut Vec<Candidate>, probes: &mut Vec<(i64, i128)>, m: i64, sol: &crate::mincut::CutSolution| {
            probes.push((m, sol.objective));
            let phi_min = sol.objective - m as i128 * sol.emin.count() as i128;
            push(pool, sol.emin.clone(), phi_min);
            let phi_max = sol.objective - m as i128 * sol.emax.count() as i128;
            push(pool, sol.emax.clone(), phi_max);
        };

    let hi_sol = solver.solve(m_cap)?;
    record_solution(&mut pool, &mut probes, m_cap, &hi_sol);
    let lo_sol = solver.solve(-m_cap)?;
    record_solution(&mut pool, &mut probes, -m_cap, &lo_sol);

    // Freeze everything decided at the extremes: minimizers for any interior
    // multiplier lie between the maximal minimizer at +cap and the minimal
    // minimizer at -cap.
    let known_in = hi_sol.emax.clone();
    let global_band: Vec<u32> = (0..grid.n_cells() as u32)
        .filter(|&c| lo_sol.emin.contains(c as usize) && !known_in.contains(c as usize))
        .collect();

    let accept_shrink = hi_sol.emax.volume() >= m0; // even full pressure keeps vol ≥ m0
    let accept_grow = lo_sol.emin.volume() <= m0; // even full suction keeps vol ≤ m0
    let mut bracket: Option<(i64, i64)> = None;

    if !accept_shrink && !accept_grow {
        // vol(emin(-cap)) > m0 > vol(emax(+cap)): bisect on the volume of the
        // minimal minimizer, re-solving only the undecided band.
        let (mut lo_m, mut hi_m) = (-m_cap, m_cap);
        let mut lo_in = lo_sol.emin.clone();
        let mut hi_in = hi_sol.emax.clone();
        while hi_m - lo_m > 1 {
            let mid = lo_m + (hi_m - lo_m) / 2;
            let band: Vec<u32> = (0..grid.n_cells() as u32)
                .filter(|&c| lo_in.contains(c as usize) && !hi_in.contains(c as usize))
                .collect();
            let sol = solver.solve_in_band(mid, &hi_in, &band)?;
            record_solution(&mut pool, &mut probes, mid, &sol);
            if sol.emin.volume() >= m0 {
                lo_m = mid;
                lo_in = sol.emin;
            } else {
                hi_m = mid;
                hi_in = sol.emax;
            }
        }
        bracket = Some((lo_m, hi_m));
    }

    if grid.n_cells() <= opts.brute_force_cell_limit {
        let (best_set, best_total) = solver.exhaustive_minimum(h, m0);
        let pen = penalty_quanta(best_set.count(), cellvol, m0, h, q);
        push(&mut pool, best_set, best_total - pen);
    }

    // Winner: smallest integer objective, ties keep the earliest entry (the
    // previous set seeds the pool, so exact ties preserve stationarity).
    let total_of = |c: &Candidate| c.phi + penalty_quanta(c.cnt, cellvol, m0, h, q);
    let mut winner = 0usize;
    let mut best_total = total_of(&pool[0]);
    for (i, c) in pool.iter().enumerate().skip(1) {
        let t = total_of(c);
        if t < best_total {
            best_total = t;
            winner = i;
        }
    }
    let margin_quanta = total_of(&pool[0]) - best_total;
    let winner = pool.swap_remove(winner);
    let e_next = winner.set;
    let volume = winner.cnt as f64 * cellvol;

    // Multiplier: off-volume winners sit on the penalty's full slope; on-
    // volume winners get the midpoint of their optimality interval in m,
    // found by bisection (optimality regions in m are intervals because the
    // objective is linear in m for every fixed set).
    let off_volume = (volume - m0).abs() > 0.5 * cellvol;
    let lambda = if off_volume {
        if m0 > volume {
            inv_sqrt_h
        } else {
            -inv_sqrt_h
        }
    } else if opts.lambda_refine {
        let phi_w = winner.phi;
        let cnt_w = winner.cnt as i128;
        let pivot = probes.iter().find(|&&(m, obj)| phi_w + m as i128 * cnt_w == obj).map(|&(m, _)| m);
        match pivot {
            Some(p) => {
                let optimal_at = |m: i64| -> Result<bool, StepError> {
                    let sol = solver.solve_in_band(m, &known_in, &global_band)?;
                    Ok(sol.objective == phi_w + m as i128 * cnt_w)
                };
                let mut a = -m_cap;
                if !optimal_at(a)? {
                    let (mut bad, mut good) = (-m_cap, p);
                    while good - bad > 1 {
                        let mid = bad + (good - bad) / 2;
                        if optimal_at(mid)? {
                            good = mid;
                        } else {
                            bad = mid;
                        }
                    }
                    a = good;
                }
                let mut b = m_cap;
                if !optimal_at(b)? {
                    let (mut good, mut bad) = (p, m_cap);
                    while bad - good > 1 {
                        let mid = good + (bad - good) / 2;
                        if optimal_at(mid)? {
                            good = mid;
                        } else {
                            bad = mid;
                        }
                    }
                    b = good;
                }
                let mid = (a + b) as f64 / 2.0;
                (-mid * q / cellvol).clamp(-inv_sqrt_h, inv_sqrt_h)
            }
            None => fallback_lambda(bracket, accept_shrink, q, cellvol, inv_sqrt_h),
        }
    } else {
        fallback_lambda(bracket, accept_shrink, q, cellvol, inv_sqrt_h)
    };

    // Observables of the accepted set.
    let capillary = capillary_energy(&e_next, beta, stencil)?;
    let dissipation = dissipation_term(&e_next, f_prev, &sd, h)?;
    let penalty = (volume - m0).abs() * inv_sqrt_h;
    let sym_diff_cells = e_next.sym_diff_cells(f_prev)?;
    let mut density_max = 0.0f64;
    for idx in 0..grid.n_cells() {
        if e_next.contains(idx) != f_prev.contains(idx) {
            density_max = density_max.max(sd.at(idx).abs());
        }
    }
    let cap_radius = if e_next.is_empty() {
        0.0
    } else {
        min_enclosing_cap(&e_next, beta.kappa()).expect("nonempty set has an enclosing cap")
    };
    let record = StepRecord {
        index: 0,
        time: 0.0,
        lambda,
        volume,
        capillary,
        dissipation,
        penalty,
        off_volume,
        cap_radius,
        sym_diff_cells,
        density_max,
        v2_face_sum: squared_velocity_over_faces(&e_next, &sd, h),
        margin_quanta,
        quantum: q,
    };
    Ok((e_next, record))
}

fn fallback_lambda(
    bracket: Option<(i64, i64)>,
    accept_shrink: bool,
    q: f64,
    cellvol: f64,
    inv_sqrt_h: f64,
) -> f64 {
    match bracket {
        Some((lo, hi)) => (-(lo + hi) as f64 / 2.0 * q / cellvol).clamp(-inv_sqrt_h, inv_sqrt_h),
        None => {
            if accept_shrink {
                -inv_sqrt_h
            } else {
                inv_sqrt_h
            }
        }
    }
}

/// Squared normal velocity integrated over the new interface: for every
/// face-adjacent pair straddling `∂E` (both cells in the grid), the severed
/// distance `sd_F` at the inner cell over `h`, squared, times the face area.
fn squared_velocity_over_faces(e: &IndicatorSet, sd_prev: &ScalarField, h: f64) -> f64 {
    let g = *e.grid();
    let (nx, ny, nz) = (g.n_horiz(), g.ny(), g.n_vert());
    let axes: &[[i32; 3]] = if g.d() == 1 {
        &[[1, 0, 0], [0, 0, 1]]
    } else {
        &[[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    };
    let mut sum = 0.0;
    for idx in 0..g.n_cells() {
        let (ix, iy, iz) = g.coords(idx);
        for off in axes {
            let (jx, jy, jz) =
                (ix as i32 + off[0], iy as i32 + off[1], iz as i32 + off[2]);
            if jx < 0 || jx >= nx as i32 || jy < 0 || jy >= ny as i32 || jz < 0 || jz >= nz as i32 {
                continue;
            }
            let jdx = g.index(jx as usize, jy as usize, jz as usize);
            let (a, b) = (e.contains(idx), e.contains(jdx));
            if a != b {
                // Face-center sample: the mean of the two adjacent cell
                // values. A face of an unmoved interface reads exactly zero
                // (the two sides sit at +/- half a cell), so the integral
                // measures actual motion rather than the lattice quantum.
                let v = 0.5 * (sd_prev.at(idx) + sd_prev.at(jdx)) / h;
                sum += v * v * g.face_area();
            }
        }
    }
    sum
}

/// Velocity field of the move from `f_prev` to `e`: the signed distance to
/// `∂F` divided by the step length, read anywhere (meaningful on `∂E`).
pub fn discrete_velocity(
    e: &IndicatorSet,
    f_prev: &IndicatorSet,
    h: f64,
) -> Result<ScalarField, StepError> {
    if e.grid() != f_prev.grid() {
        return Err(StepError::Domain(DomainError::GridMismatch));
    }
    if h <= 0.0 || !h.is_finite() {
        return Err(StepError::MinCut(MinCutError::BadTimeStep(h)));
    }
    let sd = signed_distance(f_prev)?;
    let grid = *sd.grid();
    let values: Vec<f64> = sd.values().iter().map(|v| v / h).collect();
    Ok(ScalarField::new(grid, values))
}
