//! Quantitative health checks for computed evolutions.
//!
//! Every check compares an observable of the discrete flow against a bound
//! it provably (or empirically, where stated) satisfies, and returns a
//! [`CheckEntry`] whose `pass` is `value <= threshold`. The bounds and their
//! slack factors live in [`tolerances`], with the reasoning documented per
//! constant, so a failing run points at the violated estimate by name.

use crate::contour::{contact_cosines, curvatures, planar_contour};
use crate::distance::{DistanceError, ScalarField};
use crate::domain::{BetaField, DomainError, IndicatorSet};
use crate::stepper::StepRecord;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("{0}")]
    Distance(#[from] DistanceError),
}

/// Slack constants and bound formulas used by the checks.
pub mod tolerances {
    /// Multiplier on the initial-energy budget for the telescoped energy
    /// inequality: exact in quantized arithmetic, the 2% absorbs the float
    /// re-evaluation of perimeters and penalties along the way.
    pub const ENERGY_BUDGET_SLACK: f64 = 1.02;

    /// A step may lose at most this many quanta to the cost quantization
    /// (unary rounding plus penalty rounding); anything beyond is a bug.
    pub const MARGIN_QUANTA_SLACK: f64 = 2.0;

    /// Float drift allowed in the per-step energy monotonicity recheck,
    /// relative to `max(1, budget)`: two orders of magnitude above the
    /// accumulated quantization error of the largest supported grids.
    pub const FLOAT_ENERGY_DRIFT: f64 = 1e-7;

    /// Admissible deviation of the measured contact-line inclination from
    /// the prescribed coefficient, for runs expected to be at equilibrium.
    pub const CONTACT_COSINE_TOL: f64 = 0.1;

    /// Coefficient of the moved-cell distance bound: cells that change
    /// phase in one step lie within `density_radius * sqrt(h) + dx` of the
    /// previous boundary, because a flip at distance `D` pays `D/h` in
    /// dissipation against at most the lowered perimeter plus the volume
    /// penalty slope `1/sqrt(h)`, with the coercivity constant of the
    /// wetting band entering through `kappa`.
    pub fn density_radius(d: usize, kappa: f64) -> f64 {
        4.0 * (d as f64 + 1.0) * (2.0 / kappa).powf((d as f64 + 1.0) / 2.0)
    }

    /// Float slack on the enclosing-cap radius chain: the radii come from
    /// closed-form geometry on cell centers, so only rounding noise is
    /// tolerated on top of the exact comparison.
    pub const BARRIER_CHAIN_TOL: f64 = 1e-9;
}

/// One named bound: passes when `value <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckEntry {
    pub fn new(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        let pass = value <= threshold;
        CheckEntry { name: name.into(), value, threshold, pass }
    }
}

impl fmt::Display for CheckEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.name, self.value, self.threshold, self.pass)
    }
}

/// A bundle of checks with a CSV rendering (`name,value,threshold,pass`).
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsReport {
    pub entries: Vec<CheckEntry>,
}

impl DiagnosticsReport {
    pub fn push(&mut self, entry: CheckEntry) {
        self.entries.push(entry);
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = CheckEntry>) {
        self.entries.extend(entries);
    }

    pub fn passes(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,value,threshold,pass\n");
        for e in &self.entries {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

/// Moved cells stay near the previous boundary: the largest distance ever
/// seen on a flipped cell against `density_radius(d, kappa) sqrt(h) + dx`.
pub fn density_check(
    records: &[StepRecord],
    d: usize,
    kappa: f64,
    h: f64,
    dx: f64,
) -> CheckEntry {
    let worst = records.iter().map(|r| r.density_max).fold(0.0, f64::max);
    let bound = tolerances::density_radius(d, kappa) * h.sqrt() + dx;
    CheckEntry::new("moved_cell_distance", worst, bound)
}

/// Each step's enclosing-cap radius may exceed the previous one by at most
/// `h |lambda| + 2 dx`: a comparison cap shrinking at the multiplier rate
/// stays a barrier for one step, up to one cell of rasterization on each
/// side. Reports the worst growth excess over the run.
pub fn barrier_chain_check(records: &[StepRecord], h: f64, dx: f64) -> CheckEntry {
    let mut worst = 0.0f64;
    for pair in records.windows(2) {
        let allowed = pair[0].cap_radius + h * pair[1].lambda.abs() + 2.0 * dx;
        worst = worst.max(pair[1].cap_radius - allowed);
    }
    CheckEntry::new("barrier_radius_growth", worst, tolerances::BARRIER_CHAIN_TOL)
}

/// Steps whose accepted volume misses the target by more than half a cell
/// must pin the multiplier to the penalty slope `±1/sqrt(h)` exactly: on an
/// off-target set the penalty is differentiable and its slope dominates the
/// optimality interval. The initial record (index 0) carries no step.
pub fn multiplier_pin_check(records: &[StepRecord], h: f64, m0: f64) -> CheckEntry {
    let slope = 1.0 / h.sqrt();
    let mut worst = 0.0f64;
    for r in records.iter().filter(|r| r.index > 0 && r.off_volume) {
        let expected = slope * (m0 - r.volume).signum();
        worst = worst.max((r.lambda - expected).abs());
    }
    CheckEntry::new("off_volume_multiplier_deviation", worst, 0.0)
}

/// Energy bookkeeping of a completed run against its initial budget
/// (capillary energy of the initial set, or any upper bound for it):
/// per-step minimization margins, the telescoped dissipation sum, the final
/// energy level, and a float recheck of per-step monotonicity.
pub fn dissipation_report(records: &[StepRecord], budget: f64) -> Vec<CheckEntry> {
    let worst_margin_deficit = records
        .iter()
        .map(|r| -(r.margin_quanta.min(0)) as f64)
        .fold(0.0, f64::max);
    let total_dissipation: f64 = records.iter().map(|r| r.dissipation).sum();
    let final_level = records.last().map(|r| r.capillary + r.penalty).unwrap_or(0.0);
    let mut drift = 0.0f64;
    for pair in records.windows(2) {
        let held = pair[0].capillary + pair[0].penalty;
        let took = pair[1].capillary + pair[1].penalty + pair[1].dissipation;
        drift = drift.max(took - held);
    }
    let b = tolerances::ENERGY_BUDGET_SLACK * budget;
    vec![
        CheckEntry::new(
            "margin_deficit_quanta",
            worst_margin_deficit,
            tolerances::MARGIN_QUANTA_SLACK,
        ),
        CheckEntry::new("total_dissipation", total_dissipation, b),
        CheckEntry::new("final_energy_level", final_level, b),
        CheckEntry::new(
            "float_energy_drift",
            drift,
            tolerances::FLOAT_ENERGY_DRIFT * budget.max(1.0),
        ),
    ]
}

/// Aggregates of the velocity and multiplier magnitudes of a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct VelocityStats {
    /// `sum_k h * (squared-velocity face integral at step k)`.
    pub sum_h_v2: f64,
    /// `sum_k h * lambda_k^2`.
    pub sum_h_lambda2: f64,
    /// Steps whose accepted volume missed the target by over half a cell.
    pub off_volume_steps: usize,
    pub steps: usize,
}

/// Sums the step-wise squared velocity and multiplier integrals.
pub fn velocity_and_multiplier_stats(records: &[StepRecord], h: f64) -> VelocityStats {
    let mut stats = VelocityStats::default();
    for r in records {
        stats.sum_h_v2 += h * r.v2_face_sum;
        stats.sum_h_lambda2 += h * r.lambda * r.lambda;
        if r.off_volume {
            stats.off_volume_steps += 1;
        }
        stats.steps += 1;
    }
    stats
}

/// Largest ratio `|E_t Δ E_s| / (p0 sqrt(|t - s|))` over snapshot pairs —
/// the constant of the expected 1/2-Hölder continuity in time.
pub fn holder_modulus(
    snapshots: &[(f64, &IndicatorSet)],
    p0: f64,
) -> Result<f64, DomainError> {
    let mut worst = 0.0f64;
    for (i, (t, e)) in snapshots.iter().enumerate() {
        for (s, f) in snapshots.iter().skip(i + 1).map(|(s, f)| (s, f)) {
            let dt = (t - s).abs();
            if dt <= 0.0 {
                continue;
            }
            let dv = e.sym_diff_volume(f)?;
            worst = worst.max(dv / (p0 * dt.sqrt()));
        }
    }
    Ok(worst)
}

/// Root-mean-square residual of the pointwise stationarity relation
/// `curvature + velocity = multiplier` over measurable interface points.
#[derive(Debug, Clone, Copy)]
pub struct ElResidual {
    pub rms: f64,
    pub samples: usize,
}

/// Evaluates the stationarity residual on the interface of `e`, excluding a
/// collar of `3 dx` above the supporting plane where the contact line
/// distorts both estimates. Returns `None` when nothing is measurable.
///
/// Planar sets use contour tangent fits for the curvature; volumetric sets
/// use the Laplacian of the signed distance on near-interface cells.
pub fn el_residual(
    e: &IndicatorSet,
    velocity: &ScalarField,
    lambda: f64,
) -> Result<Option<ElResidual>, DiagnosticsError> {
    if e.grid() != velocity.grid() {
        return Err(DomainError::GridMismatch.into());
    }
    let g = *e.grid();
    let dx = g.dx();
    let mut sq = 0.0f64;
    let mut n = 0usize;
    if g.d() == 1 {
        let contour = planar_contour(e);
        for chain in &contour.chains {
            let hs = curvatures(chain, dx);
            for (k, h) in hs.iter().enumerate() {
                let Some(curv) = h else { continue };
                let p = chain.points[k];
                if p[1] <= 3.0 * dx {
                    continue;
                }
                let v = bilinear_planar(velocity, p[0], p[1]);
                let r = curv + v - lambda;
                sq += r * r;
                n += 1;
            }
        }
    } else {
        let samples = boundary_face_samples(e);
        let window = 4.5 * dx;
        let buckets = bucket_by_cell(&samples, window);
        for (k, s) in samples.iter().enumerate() {
            if s.point[2] <= 3.0 * dx {
                continue;
            }
            let Some(curv) = mean_curvature_at(&samples, &buckets, k, window, dx) else {
                continue;
            };
            let v = trilinear(velocity, s.point);
            let r = curv + v - lambda;
            sq += r * r;
            n += 1;
        }
    }
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(ElResidual { rms: (sq / n as f64).sqrt(), samples: n }))
}

/// Compares the measured inclination of the interface at every contact
/// point against the prescribed coefficient under it: the check value is
/// the worst `|measured cosine + beta|`. Returns `None` for sets that do
/// not meet the supporting plane.
pub fn contact_angle_check(
    e: &IndicatorSet,
    beta: &BetaField,
) -> Result<Option<CheckEntry>, DiagnosticsError> {
    if e.grid() != beta.grid() {
        return Err(DomainError::GridMismatch.into());
    }
    let g = *e.grid();
    let dx = g.dx();
    let mut worst: Option<f64> = None;
    if g.d() == 1 {
        let contour = planar_contour(e);
        let cosines = contact_cosines(&contour, dx);
        if cosines.is_empty() {
            return Ok(None);
        }
        // Each measured inclination is compared against the coefficient of
        // the wall cell directly under the contact point.
        for (end, cos) in cosines {
            let ix = (((end[0] - g.horiz_min()[0]) / dx - 0.5).round() as i64)
                .clamp(0, g.n_horiz() as i64 - 1) as usize;
            let b = beta.at_wall(ix);
            let dev = (cos + b).abs();
            worst = Some(worst.map_or(dev, |w: f64| w.max(dev)));
        }
    } else {
        for (ix, iy) in contact_ring_cells(e) {
            let idx = g.index(ix, iy, 0);
            let Some(cos) = radial_contact_cosine(e, ix, iy) else {
                continue;
            };
            let dev = (cos + beta.at_wall(g.wall_index(idx))).abs();
            worst = Some(worst.map_or(dev, |w: f64| w.max(dev)));
        }
    }
    Ok(worst.map(|w| {
        CheckEntry::new("contact_cosine_deviation", w, tolerances::CONTACT_COSINE_TOL)
    }))
}

/// Midpoint of a boundary face of the occupied region, together with the
/// outward axis direction of that face. The face centers are the vertices of
/// the reconstructed interface mesh in three dimensions.
struct FaceSample {
    point: [f64; 3],
    hint: [f64; 3],
}

/// Face centers between occupied cells and their unoccupied (or out-of-grid)
/// neighbours. Faces on the bottom plane belong to the wall, not to the free
/// interface, and are not sampled.
fn boundary_face_samples(e: &IndicatorSet) -> Vec<FaceSample> {
    let g = *e.grid();
    let dx = g.dx();
    let (nx, ny, nz) = (g.n_horiz(), g.n_horiz(), g.n_vert());
    let x0 = g.horiz_min();
    let mut out = Vec::new();
    for idx in 0..g.n_cells() {
        if !e.contains(idx) {
            continue;
        }
        let (ix, iy, iz) = g.coords(idx);
        let center = [
            x0[0] + (ix as f64 + 0.5) * dx,
            x0[1] + (iy as f64 + 0.5) * dx,
            (iz as f64 + 0.5) * dx,
        ];
        let dirs: [[i64; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        for d in dirs {
            let (jx, jy, jz) = (ix as i64 + d[0], iy as i64 + d[1], iz as i64 + d[2]);
            if jz < 0 {
                continue; // bottom plane is the wall
            }
            let neighbour_occupied = jx >= 0
                && jy >= 0
                && (jx as usize) < nx
                && (jy as usize) < ny
                && (jz as usize) < nz
                && e.contains(g.index(jx as usize, jy as usize, jz as usize));
            if neighbour_occupied {
                continue;
            }
            out.push(FaceSample {
                point: [
                    center[0] + 0.5 * dx * d[0] as f64,
                    center[1] + 0.5 * dx * d[1] as f64,
                    center[2] + 0.5 * dx * d[2] as f64,
                ],
                hint: [d[0] as f64, d[1] as f64, d[2] as f64],
            });
        }
    }
    out
}

type Buckets = std::collections::HashMap<(i64, i64, i64), Vec<usize>>;

/// Hash the samples into cubic buckets of the window size so that all
/// neighbours within the window live in the 3x3x3 block around a sample.
fn bucket_by_cell(samples: &[FaceSample], window: f64) -> Buckets {
    let mut map: Buckets = Buckets::new();
    for (k, s) in samples.iter().enumerate() {
        let key = (
            (s.point[0] / window).floor() as i64,
            (s.point[1] / window).floor() as i64,
            (s.point[2] / window).floor() as i64,
        );
        map.entry(key).or_default().push(k);
    }
    map
}

fn neighbours_within(
    samples: &[FaceSample],
    buckets: &Buckets,
    k: usize,
    window: f64,
) -> Vec<usize> {
    let p = samples[k].point;
    let key = (
        (p[0] / window).floor() as i64,
        (p[1] / window).floor() as i64,
        (p[2] / window).floor() as i64,
    );
    let mut out = Vec::new();
    for ox in -1..=1 {
        for oy in -1..=1 {
            for oz in -1..=1 {
                let Some(list) = buckets.get(&(key.0 + ox, key.1 + oy, key.2 + oz)) else {
                    continue;
                };
                for &j in list {
                    let q = samples[j].point;
                    let d2 = (q[0] - p[0]).powi(2)
                        + (q[1] - p[1]).powi(2)
                        + (q[2] - p[2]).powi(2);
                    if d2 <= window * window {
                        out.push(j);
                    }
                }
            }
        }
    }
    out
}

/// Solve a small dense linear system by Gaussian elimination with partial
/// pivoting. Returns `None` when the system is numerically singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let pivot_row = a[col].clone();
        let pivot_b = b[col];
        for row in col + 1..n {
            let f = a[row][col] / pivot_row[col];
            if f == 0.0 {
                continue;
            }
            for (c, v) in a[row].iter_mut().enumerate().skip(col) {
                *v -= f * pivot_row[c];
            }
            b[row] -= f * pivot_b;
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Sum of the principal curvatures at one mesh vertex, from a quadratic
/// height fit over the neighbouring vertices in a local tangent frame.
/// Positive for a convex occupied region, matching the planar convention.
fn mean_curvature_at(
    samples: &[FaceSample],
    buckets: &Buckets,
    k: usize,
    window: f64,
    dx: f64,
) -> Option<f64> {
    let near = neighbours_within(samples, buckets, k, window);
    if near.len() < 12 {
        return None;
    }
    let mut nu = [0.0f64; 3];
    for &j in &near {
        for (v, h) in nu.iter_mut().zip(samples[j].hint) {
            *v += h;
        }
    }
    let norm = (nu[0] * nu[0] + nu[1] * nu[1] + nu[2] * nu[2]).sqrt();
    if norm < 1e-9 {
        return None;
    }
    for a in nu.iter_mut() {
        *a /= norm;
    }
    // Tangent frame: start from the axis least aligned with the normal.
    let axis = if nu[0].abs() <= nu[1].abs() && nu[0].abs() <= nu[2].abs() {
        [1.0, 0.0, 0.0]
    } else if nu[1].abs() <= nu[2].abs() {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let dot = axis[0] * nu[0] + axis[1] * nu[1] + axis[2] * nu[2];
    let mut e1 = [axis[0] - dot * nu[0], axis[1] - dot * nu[1], axis[2] - dot * nu[2]];
    let l1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    for a in e1.iter_mut() {
        *a /= l1;
    }
    let e2 = [
        nu[1] * e1[2] - nu[2] * e1[1],
        nu[2] * e1[0] - nu[0] * e1[2],
        nu[0] * e1[1] - nu[1] * e1[0],
    ];
    // Least-squares quadric w = a0 + b u + c v + A u^2 + B uv + C v^2 in
    // dx units for conditioning.
    let p = samples[k].point;
    let mut ata = vec![vec![0.0f64; 6]; 6];
    let mut atb = vec![0.0f64; 6];
    for &j in &near {
        let q = samples[j].point;
        let r = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
        let u = (r[0] * e1[0] + r[1] * e1[1] + r[2] * e1[2]) / dx;
        let v = (r[0] * e2[0] + r[1] * e2[1] + r[2] * e2[2]) / dx;
        let w = (r[0] * nu[0] + r[1] * nu[1] + r[2] * nu[2]) / dx;
        let basis = [1.0, u, v, u * u, u * v, v * v];
        for r0 in 0..6 {
            for c0 in 0..6 {
                ata[r0][c0] += basis[r0] * basis[c0];
            }
            atb[r0] += basis[r0] * w;
        }
    }
    let sol = solve_dense(ata, atb)?;
    let (b, c) = (sol[1], sol[2]);
    let (p20, p11, p02) = (2.0 * sol[3] / dx, sol[4] / dx, 2.0 * sol[5] / dx);
    let denom = (1.0 + b * b + c * c).sqrt().powi(3);
    Some(-((p20 * (1.0 + c * c) - 2.0 * p11 * b * c + p02 * (1.0 + b * b)) / denom))
}

/// Wet cells of the bottom layer that touch a dry bottom cell through a face:
/// the rim of the wetted footprint.
fn contact_ring_cells(e: &IndicatorSet) -> Vec<(usize, usize)> {
    let g = *e.grid();
    let (nx, ny) = (g.n_horiz(), g.n_horiz());
    let wet = |i: i64, j: i64| {
        i >= 0
            && j >= 0
            && (i as usize) < nx
            && (j as usize) < ny
            && e.contains(g.index(i as usize, j as usize, 0))
    };
    let mut out = Vec::new();
    for ix in 0..nx {
        for iy in 0..ny {
            let (i, j) = (ix as i64, iy as i64);
            if wet(i, j) && (!wet(i - 1, j) || !wet(i + 1, j) || !wet(i, j - 1) || !wet(i, j + 1))
            {
                out.push((ix, iy));
            }
        }
    }
    out
}

/// Vertical cosine of the interface normal at one rim cell of the wetted
/// footprint. The interface is sampled where rays along the outward
/// horizontal normal leave the occupied region, one crossing per height; an
/// osculating circle fitted to that radial profile gives the tangent
/// direction at the wall without endpoint-extrapolation noise.
fn radial_contact_cosine(e: &IndicatorSet, ix: usize, iy: usize) -> Option<f64> {
    let g = *e.grid();
    let dx = g.dx();
    let (nx, ny, nz) = (g.n_horiz(), g.n_horiz(), g.n_vert());
    let x0 = g.horiz_min();
    // Outward horizontal normal from the occupancy moment of the footprint
    // over a small disc: dry cells pull the normal outward.
    let mut m = [0.0f64; 2];
    let rad = 4i64;
    for oj in -rad..=rad {
        for oi in -rad..=rad {
            if oi * oi + oj * oj > rad * rad {
                continue;
            }
            let (i, j) = (ix as i64 + oi, iy as i64 + oj);
            let wet = i >= 0
                && j >= 0
                && (i as usize) < nx
                && (j as usize) < ny
                && e.contains(g.index(i as usize, j as usize, 0));
            let sign = if wet { -1.0 } else { 1.0 };
            m[0] += sign * oi as f64;
            m[1] += sign * oj as f64;
        }
    }
    let norm = m[0].hypot(m[1]);
    if norm < 1e-9 {
        return None;
    }
    let mhat = [m[0] / norm, m[1] / norm];
    let base = [x0[0] + (ix as f64 + 0.5) * dx, x0[1] + (iy as f64 + 0.5) * dx];
    let occupied_at = |px: f64, py: f64, iz: usize| -> bool {
        let i = ((px - x0[0]) / dx).floor();
        let j = ((py - x0[1]) / dx).floor();
        i >= 0.0
            && j >= 0.0
            && (i as usize) < nx
            && (j as usize) < ny
            && e.contains(g.index(i as usize, j as usize, iz))
    };
    // Radial crossing t(z) per height: the outermost occupied-to-empty
    // transition along the ray, in dx units relative to the rim cell.
    let step = 0.25 * dx;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for k in 0..nz.min(16) {
        let mut cross: Option<f64> = None;
        let mut prev_in = false;
        let mut t = -12.0 * dx;
        while t <= 4.0 * dx {
            let inside = occupied_at(base[0] + t * mhat[0], base[1] + t * mhat[1], k);
            if prev_in && !inside {
                cross = Some(t - 0.5 * step);
            }
            prev_in = inside;
            t += step;
        }
        match cross {
            Some(c) => pts.push((k as f64 + 0.5, c / dx)),
            None => break,
        }
    }
    // Keep the contiguous ladder from the wall upward with bounded jumps;
    // a break marks the apex or an unrelated part of the surface.
    let mut ladder: Vec<(f64, f64)> = Vec::new();
    for &(z, t) in &pts {
        if let Some(&(_, tp)) = ladder.last() {
            if (t - tp).abs() > 3.0 {
                break;
            }
        }
        ladder.push((z, t));
    }
    if ladder.len() < 5 {
        return None;
    }
    // Algebraic circle fit t^2 + z^2 + D t + E z + F = 0.
    let mut ata = vec![vec![0.0f64; 3]; 3];
    let mut atb = vec![0.0f64; 3];
    for &(z, t) in &ladder {
        let row = [t, z, 1.0];
        let rhs = -(t * t + z * z);
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            atb[r] += row[r] * rhs;
        }
    }
    let circle_slope = solve_dense(ata, atb).and_then(|sol| {
        let a = -sol[0] / 2.0;
        let b = -sol[1] / 2.0;
        let r2 = a * a + b * b - sol[2];
        // Reject circles smaller than a few cells (noise-dominated) and
        // circles that never reach the wall plane.
        if r2 <= b * b || r2 < 9.0 {
            return None;
        }
        let root = (r2 - b * b).sqrt();
        let t_first = ladder[0].1;
        let t0 = if (a + root - t_first).abs() <= (a - root - t_first).abs() {
            a + root
        } else {
            a - root
        };
        if (t0 - a).abs() < 1e-9 {
            return None;
        }
        Some(b / (t0 - a))
    });
    let slope = match circle_slope {
        Some(s) => s,
        None => {
            // Nearly straight profile: a plain line fit is unbiased.
            let n = ladder.len() as f64;
            let zc = ladder.iter().map(|p| p.0).sum::<f64>() / n;
            let tc = ladder.iter().map(|p| p.1).sum::<f64>() / n;
            let mut szz = 0.0;
            let mut szt = 0.0;
            for &(z, t) in &ladder {
                szz += (z - zc) * (z - zc);
                szt += (z - zc) * (t - tc);
            }
            if szz <= 0.0 {
                return None;
            }
            szt / szz
        }
    };
    Some(-slope / slope.hypot(1.0))
}

/// Trilinear interpolation of a volumetric cell-center field, clamped at the
/// boundary of the lattice of centers.
fn trilinear(field: &ScalarField, p: [f64; 3]) -> f64 {
    let g = field.grid();
    let dx = g.dx();
    let (nx, ny, nz) = (g.n_horiz(), g.n_horiz(), g.n_vert());
    let x0 = g.horiz_min();
    let u = ((p[0] - x0[0]) / dx - 0.5).clamp(0.0, (nx - 1) as f64);
    let v = ((p[1] - x0[1]) / dx - 0.5).clamp(0.0, (ny - 1) as f64);
    let w = (p[2] / dx - 0.5).clamp(0.0, (nz - 1) as f64);
    let i0 = (u.floor() as usize).min(nx.saturating_sub(2));
    let j0 = (v.floor() as usize).min(ny.saturating_sub(2));
    let k0 = (w.floor() as usize).min(nz.saturating_sub(2));
    let (fu, fv, fw) = (u - i0 as f64, v - j0 as f64, w - k0 as f64);
    let f = |i: usize, j: usize, k: usize| field.at(g.index(i, j, k));
    let blend_z = |i: usize, j: usize| f(i, j, k0) * (1.0 - fw) + f(i, j, k0 + 1) * fw;
    let blend_yz = |i: usize| blend_z(i, j0) * (1.0 - fv) + blend_z(i, j0 + 1) * fv;
    blend_yz(i0) * (1.0 - fu) + blend_yz(i0 + 1) * fu
}

/// Bilinear interpolation of a planar cell-center field, clamped at the
/// boundary of the lattice of centers.
fn bilinear_planar(field: &ScalarField, x: f64, z: f64) -> f64 {
    let g = field.grid();
    let dx = g.dx();
    let (nx, nz) = (g.n_horiz(), g.n_vert());
    let u = ((x - g.horiz_min()[0]) / dx - 0.5).clamp(0.0, (nx - 1) as f64);
    let w = (z / dx - 0.5).clamp(0.0, (nz - 1) as f64);
    let i0 = (u.floor() as usize).min(nx - 2);
    let k0 = (w.floor() as usize).min(nz - 2);
    let fu = u - i0 as f64;
    let fw = w - k0 as f64;
    let f = |i: usize, k: usize| field.at(g.index(i, 0, k));
    f(i0, k0) * (1.0 - fu) * (1.0 - fw)
        + f(i0 + 1, k0) * fu * (1.0 - fw)
        + f(i0, k0 + 1) * (1.0 - fu) * fw
        + f(i0 + 1, k0 + 1) * fu * fw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::signed_distance;
    use crate::domain::GridSpec;
    use crate::shapes::{rasterize, Shape};

    fn record_with(
        lambda: f64,
        dissipation: f64,
        capillary: f64,
        penalty: f64,
        margin: i128,
    ) -> StepRecord {
        StepRecord {
            index: 0,
            time: 0.0,
            lambda,
            volume: 1.0,
            capillary,
            dissipation,
            penalty,
            off_volume: false,
            cap_radius: 1.0,
            sym_diff_cells: 0,
            density_max: 0.0,
            v2_face_sum: 0.0,
            margin_quanta: margin,
            quantum: 1e-12,
        }
    }

    #[test]
    fn check_entries_render_as_csv_rows() {
        let e = CheckEntry::new("sample_bound", 1.5, 2.0);
        assert!(e.pass);
        assert_eq!(e.to_string(), "sample_bound,1.5,2,true");
        let mut report = DiagnosticsReport::default();
        report.push(e);
        report.push(CheckEntry::new("other_bound", 3.0, 2.0));
        assert!(!report.passes());
        assert_eq!(
            report.to_csv(),
            "name,value,threshold,pass\nsample_bound,1.5,2,true\nother_bound,3,2,false\n"
        );
    }

    #[test]
    fn density_radius_matches_closed_forms() {
        assert!((tolerances::density_radius(1, 0.5) - 32.0).abs() < 1e-12);
        assert!((tolerances::density_radius(1, 0.25) - 64.0).abs() < 1e-12);
    }

    #[test]
    fn dissipation_entries_detect_violations() {
        let good = vec![
            record_with(0.0, 0.0, 4.0, 0.0, 0),
            record_with(1.0, 0.5, 3.0, 0.1, 7),
            record_with(1.0, 0.2, 2.7, 0.05, 0),
        ];
        let entries = dissipation_report(&good, 4.0);
        assert!(entries.iter().all(|e| e.pass), "{entries:?}");

        let bad_margin = vec![record_with(0.0, 0.0, 4.0, 0.0, -5)];
        let entries = dissipation_report(&bad_margin, 4.0);
        assert!(!entries.iter().find(|e| e.name == "margin_deficit_quanta").unwrap().pass);

        // A step that gains energy trips the float recheck.
        let uphill = vec![
            record_with(0.0, 0.0, 3.0, 0.0, 0),
            record_with(0.0, 0.5, 3.2, 0.0, 0),
        ];
        let entries = dissipation_report(&uphill, 4.0);
        assert!(!entries.iter().find(|e| e.name == "float_energy_drift").unwrap().pass);
    }

    #[test]
    fn barrier_chain_flags_radius_jumps() {
        let h = 0.01;
        let dx = 0.05;
        let mut records =
            vec![record_with(0.0, 0.0, 4.0, 0.0, 0), record_with(3.0, 0.1, 3.9, 0.0, 0)];
        // Allowed growth: h |lambda| + 2 dx = 0.03 + 0.10.
        records[1].cap_radius = records[0].cap_radius + 0.129;
        assert!(barrier_chain_check(&records, h, dx).pass);
        records[1].cap_radius = records[0].cap_radius + 0.131;
        assert!(!barrier_chain_check(&records, h, dx).pass);
    }

    #[test]
    fn multiplier_pin_accepts_only_the_penalty_slope() {
        let h = 0.04f64;
        let m0 = 2.0;
        let slope = 1.0 / h.sqrt();
        let mut records =
            vec![record_with(0.0, 0.0, 4.0, 0.0, 0), record_with(-slope, 0.1, 3.9, 0.5, 0)];
        records[1].index = 1;
        records[1].off_volume = true;
        records[1].volume = 2.4; // above target, so the slope is negative
        assert!(multiplier_pin_check(&records, h, m0).pass);
        records[1].lambda = -slope * 0.999;
        assert!(!multiplier_pin_check(&records, h, m0).pass);
        // On-target steps place no constraint on the multiplier.
        records[1].off_volume = false;
        assert!(multiplier_pin_check(&records, h, m0).pass);
    }

    #[test]
    fn velocity_stats_accumulate() {
        let mut records = vec![
            record_with(2.0, 0.0, 1.0, 0.0, 0),
            record_with(-1.0, 0.0, 1.0, 0.0, 0),
        ];
        records[0].v2_face_sum = 3.0;
        records[1].off_volume = true;
        let stats = velocity_and_multiplier_stats(&records, 0.5);
        assert!((stats.sum_h_v2 - 1.5).abs() < 1e-12);
        assert!((stats.sum_h_lambda2 - 2.5).abs() < 1e-12);
        assert_eq!(stats.off_volume_steps, 1);
        assert_eq!(stats.steps, 2);
    }

    #[test]
    fn holder_modulus_on_two_snapshots() {
        let g = GridSpec::new(1, 0.25, 4, 4, [0.0, 0.0]).unwrap();
        let a = IndicatorSet::from_fn(g, |idx| idx < 8);
        let mut b = a.clone();
        b.insert(12);
        b.insert(13);
        let snaps = vec![(0.0, &a), (0.04, &b)];
        let m = holder_modulus(&snaps, 2.0).unwrap();
        let expected = 2.0 * g.cell_volume() / (2.0 * 0.04f64.sqrt());
        assert!((m - expected).abs() < 1e-12, "{m} vs {expected}");
    }

    #[test]
    fn stationary_circle_satisfies_the_stationarity_relation() {
        let dx = 1.0 / 128.0;
        let g = GridSpec::new(1, dx, 256, 192, [-1.0, 0.0]).unwrap();
        let radius = 0.4;
        let e = rasterize(&Shape::Ball { center: [0.0, 0.0, 0.75], radius }, g).unwrap();
        // A frozen step: velocity is the previous-boundary distance over h,
        // which interpolates to zero on the (unmoved) interface.
        let h = 0.04;
        let sd = signed_distance(&e).unwrap();
        let v = ScalarField::new(g, sd.values().iter().map(|s| s / h).collect());
        let lambda = 1.0 / radius;
        let res = el_residual(&e, &v, lambda).unwrap().expect("measurable interface");
        assert!(res.samples > 50);
        assert!(res.rms <= 0.1 * lambda, "rms {} vs lambda {}", res.rms, lambda);
    }

    #[test]
    fn stationary_ball_satisfies_the_volumetric_relation() {
        let dx = 1.0 / 48.0;
        let g = GridSpec::new(2, dx, 48, 48, [-0.5, -0.5]).unwrap();
        let radius = 0.3;
        let e = rasterize(&Shape::Ball { center: [0.0, 0.0, 0.55], radius }, g).unwrap();
        let h = 0.04;
        let sd = signed_distance(&e).unwrap();
        let v = ScalarField::new(g, sd.values().iter().map(|s| s / h).collect());
        let lambda = 2.0 / radius;
        let res = el_residual(&e, &v, lambda).unwrap().expect("measurable interface");
        assert!(res.samples > 100);
        assert!(res.rms <= 0.25 * lambda, "rms {} vs lambda {}", res.rms, lambda);
    }

    #[test]
    fn contact_check_recovers_the_prescribed_coefficient() {
        let dx = 1.0 / 128.0;
        let g = GridSpec::new(1, dx, 192, 64, [-0.75, 0.0]).unwrap();
        let e = rasterize(&Shape::Cap { base_radius: 0.433, cos_contact: 0.5 }, g).unwrap();
        let beta = BetaField::constant(g, 0.25, -0.5).unwrap();
        let entry = contact_angle_check(&e, &beta).unwrap().expect("droplet touches the plane");
        assert!(entry.pass, "deviation {} exceeds {}", entry.value, entry.threshold);

        // A floating set has no contact line to measure.
        let ball = rasterize(&Shape::Ball { center: [0.0, 0.0, 0.3], radius: 0.15 }, g).unwrap();
        assert!(contact_angle_check(&ball, &beta).unwrap().is_none());
    }

    #[test]
    fn volumetric_contact_check_matches_the_cap_inclination() {
        let dx = 1.0 / 48.0;
        let g = GridSpec::new(2, dx, 64, 24, [-0.667, -0.667]).unwrap();
        let e = rasterize(&Shape::Cap { base_radius: 0.4, cos_contact: 0.5 }, g).unwrap();
        let beta = BetaField::constant(g, 0.25, -0.5).unwrap();
        let entry = contact_angle_check(&e, &beta).unwrap().expect("cap touches the plane");
        assert!(entry.pass, "deviation {} exceeds {}", entry.value, entry.threshold);
    }

    #[test]
    fn moved_cell_bound_uses_the_recorded_maximum() {
        let mut records = vec![record_with(0.0, 0.0, 1.0, 0.0, 0)];
        records[0].density_max = 0.5;
        let entry = density_check(&records, 1, 0.5, 1e-4, 1.0 / 128.0);
        assert!(!entry.pass, "0.5 exceeds 32*0.01 + dx");
        let entry = density_check(&records, 1, 0.5, 0.01, 1.0 / 128.0);
        assert!(entry.pass, "0.5 is within 32*0.1 + dx");
    }
}
