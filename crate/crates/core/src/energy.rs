//! Perimeter, capillary energy, and the incremental minimization functional.
//!
//! Perimeter is measured by counting phase-crossing cell pairs over a finite
//! neighborhood stencil and weighting each family of offsets so that, as the
//! grid refines, the count converges to surface area: the weight of offset
//! `e` is proportional to the angular sector (2D) or solid angle (3D) of
//! directions closer to `e` than to any other stencil direction, divided by
//! `|e|`. The face stencil instead uses the exact face measure, which makes
//! it exact on axis-aligned polyhedra. Only pairs with *both* cells inside
//! the grid box are counted: faces on the truncation box are free, and the
//! wall itself is never part of the perimeter — the wetted wall area enters
//! separately through the contact coefficient β.
//!
//! The capillary energy is `C_β(E) = P(E) + Σ_{wall cells of E} β dx^d`, and
//! one implicit time step minimizes
//! `F(E) = C_β(E) + (1/h) ∫_{EΔF} dist(x, ∂F) dx + (1/√h) | |E| - m0 |`
//! over binary sets `E`, where `F` is the previous set.

use crate::distance::{signed_distance, DistanceError, ScalarField};
use crate::domain::{BetaField, DomainError, GridSpec, IndicatorSet};
use once_cell::sync::Lazy;
use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI, TAU};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("{0}")]
    Distance(#[from] DistanceError),
    #[error("time step h must be positive and finite, got {0}")]
    BadTimeStep(f64),
}

/// Neighborhood used for the perimeter count.
///
/// * `N4` — nearest faces only; exact on axis-aligned sets, anisotropic.
/// * `N8` — adds diagonals (18 neighbors in 3D).
/// * `N16` — adds knight moves (26 neighbors in 3D); closest to isotropic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilKind {
    N4,
    N8,
    N16,
}

/// A perimeter stencil bound to a grid resolution: one undirected offset
/// family per entry, with its physical weight per crossing pair.
#[derive(Debug, Clone)]
pub struct PerimeterStencil {
    kind: StencilKind,
    d: usize,
    dx: f64,
    offsets: Vec<([i32; 3], f64)>,
}

impl PerimeterStencil {
    pub fn new(kind: StencilKind, grid: &GridSpec) -> Self {
        let d = grid.d();
        let dx = grid.dx();
        let offsets = if d == 1 { planar_offsets(kind, dx) } else { spatial_offsets(kind, dx) };
        PerimeterStencil { kind, d, dx, offsets }
    }

    pub fn kind(&self) -> StencilKind {
        self.kind
    }

    /// Undirected offset families `(di, dj, dk)` with physical weights.
    pub(crate) fn offsets(&self) -> &[([i32; 3], f64)] {
        &self.offsets
    }

    pub(crate) fn assert_matches(&self, grid: &GridSpec) {
        assert!(
            self.d == grid.d() && self.dx == grid.dx(),
            "stencil was built for a different grid resolution"
        );
    }
}

/// Planar offset families (the `j` component is unused).
fn planar_offsets(kind: StencilKind, dx: f64) -> Vec<([i32; 3], f64)> {
    // Angular sector of each direction family, divided by 2 |e| (both
    // orientations of a line are counted by the sector partition of the full
    // circle, hence the factor 1/2).
    let a = 0.5f64.atan(); // angle of the knight direction (2, 1)
    match kind {
        StencilKind::N4 => vec![([1, 0, 0], dx), ([0, 0, 1], dx)],
        StencilKind::N8 => {
            let w_axis = dx * FRAC_PI_4 / 2.0;
            let w_diag = dx * FRAC_PI_4 / (2.0 * 2.0f64.sqrt());
            vec![
                ([1, 0, 0], w_axis),
                ([0, 0, 1], w_axis),
                ([1, 0, 1], w_diag),
                ([1, 0, -1], w_diag),
            ]
        }
        StencilKind::N16 => {
            let w_axis = dx * a / 2.0;
            let w_diag = dx * (FRAC_PI_4 - a) / (2.0 * 2.0f64.sqrt());
            let w_knight = dx * FRAC_PI_8 / (2.0 * 5.0f64.sqrt());
            vec![
                ([1, 0, 0], w_axis),
                ([0, 0, 1], w_axis),
                ([1, 0, 1], w_diag),
                ([1, 0, -1], w_diag),
                ([2, 0, 1], w_knight),
                ([2, 0, -1], w_knight),
                ([1, 0, 2], w_knight),
                ([1, 0, -2], w_knight),
            ]
        }
    }
}

/// Canonical undirected offset representatives in `{-1,0,1}^3` (first nonzero
/// component positive); `with_body` keeps the four body diagonals.
fn cube_families(with_body: bool) -> Vec<[i32; 3]> {
    let mut out = Vec::new();
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                let v = [a, b, c];
                if v == [0, 0, 0] {
                    continue;
                }
                let first = *v.iter().find(|&&x| x != 0).unwrap();
                if first < 0 {
                    continue;
                }
                if !with_body && a.abs() + b.abs() + c.abs() == 3 {
                    continue;
                }
                out.push(v);
            }
        }
    }
    out
}

/// One-sided nearest-direction solid angles for each family, by deterministic
/// latitude/longitude quadrature of the unit sphere. The family areas sum to
/// 4π exactly (every sample lands somewhere), so the one-sided values sum
/// to 2π.
fn solid_angles_one_sided(reps: &[[i32; 3]]) -> Vec<f64> {
    let mut dirs: Vec<([f64; 3], usize)> = Vec::with_capacity(2 * reps.len());
    for (k, r) in reps.iter().enumerate() {
        let n = ((r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) as f64).sqrt();
        let u = [r[0] as f64 / n, r[1] as f64 / n, r[2] as f64 / n];
        dirs.push((u, k));
        dirs.push(([-u[0], -u[1], -u[2]], k));
    }
    const MZ: usize = 1024;
    const MPHI: usize = 2048;
    let da = (2.0 / MZ as f64) * (TAU / MPHI as f64);
    let mut acc = vec![0.0f64; reps.len()];
    for i in 0..MZ {
        let z = -1.0 + (2.0 * i as f64 + 1.0) / MZ as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        for j in 0..MPHI {
            let phi = TAU * (j as f64 + 0.5) / MPHI as f64;
            let u = [r * phi.cos(), r * phi.sin(), z];
            let mut best = f64::NEG_INFINITY;
            let mut best_k = 0usize;
            for (v, k) in &dirs {
                let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
                if dot > best {
                    best = dot;
                    best_k = *k;
                }
            }
            acc[best_k] += da;
        }
    }
    // Families congruent under the cube group have identical continuum
    // areas; averaging within each class removes the quadrature's
    // pole/equator anisotropy.
    let class_of = |r: &[i32; 3]| {
        let mut c = [r[0].abs(), r[1].abs(), r[2].abs()];
        c.sort_unstable();
        c
    };
    let mut omega = vec![0.0f64; reps.len()];
    for (k, r) in reps.iter().enumerate() {
        let class = class_of(r);
        let members: Vec<usize> =
            (0..reps.len()).filter(|&j| class_of(&reps[j]) == class).collect();
        omega[k] = members.iter().map(|&j| acc[j]).sum::<f64>() / members.len() as f64;
    }
    omega.iter().map(|a| a / 2.0).collect()
}

static SPATIAL_18: Lazy<(Vec<[i32; 3]>, Vec<f64>)> = Lazy::new(|| {
    let reps = cube_families(false);
    let omega = solid_angles_one_sided(&reps);
    (reps, omega)
});
static SPATIAL_26: Lazy<(Vec<[i32; 3]>, Vec<f64>)> = Lazy::new(|| {
    let reps = cube_families(true);
    let omega = solid_angles_one_sided(&reps);
    (reps, omega)
});

fn spatial_offsets(kind: StencilKind, dx: f64) -> Vec<([i32; 3], f64)> {
    match kind {
        StencilKind::N4 => {
            let w = dx * dx;
            vec![([1, 0, 0], w), ([0, 1, 0], w), ([0, 0, 1], w)]
        }
        StencilKind::N8 | StencilKind::N16 => {
            let (reps, omega) = if kind == StencilKind::N8 { &*SPATIAL_18 } else { &*SPATIAL_26 };
            reps.iter()
                .zip(omega)
                .map(|(r, om)| {
                    let len = ((r[0] * r[0] + r[1] * r[1] + r[2] * r[2]) as f64).sqrt();
                    (*r, dx * dx * om / (PI * len))
                })
                .collect()
        }
    }
}

/// Weighted count of phase-crossing neighbor pairs with both cells in the
/// grid box. Approximates the free surface area of the set away from the
/// wall; wall faces and truncation faces contribute nothing.
pub fn perimeter(e: &IndicatorSet, stencil: &PerimeterStencil) -> f64 {
    stencil.assert_matches(e.grid());
    let g = *e.grid();
    let (nx, ny, nz) = (g.n_horiz() as i32, g.ny() as i32, g.n_vert() as i32);
    let mut total = 0.0;
    for &(off, w) in stencil.offsets() {
        let mut cuts = 0usize;
        for idx in 0..g.n_cells() {
            let (ix, iy, iz) = g.coords(idx);
            let (jx, jy, jz) = (ix as i32 + off[0], iy as i32 + off[1], iz as i32 + off[2]);
            if jx < 0 || jx >= nx || jy < 0 || jy >= ny || jz < 0 || jz >= nz {
                continue;
            }
            let jdx = g.index(jx as usize, jy as usize, jz as usize);
            if e.contains(idx) != e.contains(jdx) {
                cuts += 1;
            }
        }
        total += w * cuts as f64;
    }
    total
}

/// Free surface energy plus the wetting energy of the wall:
/// `P(E) + Σ_{wall cells of E} β dx^d`.
pub fn capillary_energy(
    e: &IndicatorSet,
    beta: &BetaField,
    stencil: &PerimeterStencil,
) -> Result<f64, EnergyError> {
    if e.grid() != beta.grid() {
        return Err(DomainError::GridMismatch.into());
    }
    let g = e.grid();
    let mut wet = 0.0;
    for wi in 0..g.n_bottom() {
        if e.contains(wi) {
            wet += beta.at_wall(wi);
        }
    }
    Ok(perimeter(e, stencil) + wet * g.face_area())
}

/// Value of one implicit-step functional: capillary energy, plus the distance
/// dissipation `(1/h) Σ_{cells of EΔF} |sd_F| dx^(d+1)`, plus the volume
/// penalty `(1/√h) | |E| - m0 |`.
pub fn atw_energy(
    e: &IndicatorSet,
    f_prev: &IndicatorSet,
    h: f64,
    m0: f64,
    beta: &BetaField,
    stencil: &PerimeterStencil,
) -> Result<f64, EnergyError> {
    if e.grid() != f_prev.grid() {
        return Err(DomainError::GridMismatch.into());
    }
    let sd = signed_distance(f_prev)?;
    atw_energy_with_sd(e, f_prev, &sd, h, m0, beta, stencil)
}

/// Same as [`atw_energy`] with a precomputed signed distance of `f_prev`.
pub(crate) fn atw_energy_with_sd(
    e: &IndicatorSet,
    f_prev: &IndicatorSet,
    sd_prev: &ScalarField,
    h: f64,
    m0: f64,
    beta: &BetaField,
    stencil: &PerimeterStencil,
) -> Result<f64, EnergyError> {
    if h <= 0.0 || !h.is_finite() {
        return Err(EnergyError::BadTimeStep(h));
    }
    let cap = capillary_energy(e, beta, stencil)?;
    let diss = dissipation_term(e, f_prev, sd_prev, h)?;
    let pen = (e.volume() - m0).abs() / h.sqrt();
    Ok(cap + diss + pen)
}

/// Distance dissipation `(1/h) Σ_{cells of EΔF} |sd_F| dx^(d+1)`.
pub(crate) fn dissipation_term(
    e: &IndicatorSet,
    f_prev: &IndicatorSet,
    sd_prev: &ScalarField,
    h: f64,
) -> Result<f64, EnergyError> {
    if e.grid() != f_prev.grid() {
        return Err(DomainError::GridMismatch.into());
    }
    let g = e.grid();
    let mut sum = 0.0;
    for idx in 0..g.n_cells() {
        if e.contains(idx) != f_prev.contains(idx) {
            sum += sd_prev.at(idx).abs();
        }
    }
    Ok(sum * g.cell_volume() / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{rasterize, Shape};

    fn planar_grid(nx: usize, nz: usize, dx: f64, xmin: f64) -> GridSpec {
        GridSpec::new(1, dx, nx, nz, [xmin, 0.0]).unwrap()
    }

    fn block(g: GridSpec, x: std::ops::Range<usize>, z: std::ops::Range<usize>) -> IndicatorSet {
        IndicatorSet::from_fn(g, |idx| {
            let (ix, _, iz) = g.coords(idx);
            x.contains(&ix) && z.contains(&iz)
        })
    }

    #[test]
    fn face_stencil_is_exact_on_an_interior_square() {
        let g = planar_grid(6, 6, 1.0, 0.0);
        let e = block(g, 2..4, 2..4);
        let st = PerimeterStencil::new(StencilKind::N4, &g);
        assert_eq!(perimeter(&e, &st), 8.0, "2x2 block has 8 unit faces");
    }

    #[test]
    fn wall_and_truncation_faces_are_not_counted() {
        // Unit square resting on the wall, dx = 1/8: the free surface is the
        // two sides plus the top, length 3; the wall face is excluded.
        let g = planar_grid(32, 16, 0.125, -2.0);
        let e = block(g, 12..20, 0..8);
        let st = PerimeterStencil::new(StencilKind::N4, &g);
        assert_eq!(perimeter(&e, &st), 3.0);
        // A full bottom slab has no interior crossing pairs at all except its
        // top surface.
        let slab = block(g, 0..32, 0..4);
        assert_eq!(perimeter(&slab, &st), 4.0, "only the top face, 32 cells x dx");
    }

    #[test]
    fn diagonal_stencils_bracket_the_square_perimeter() {
        let g = planar_grid(32, 16, 0.125, -2.0);
        let e = block(g, 12..20, 0..8);
        for kind in [StencilKind::N8, StencilKind::N16] {
            let st = PerimeterStencil::new(kind, &g);
            let p = perimeter(&e, &st);
            assert!(
                (2.5..=3.3).contains(&p),
                "{kind:?} square-on-wall perimeter {p} strays too far from 3"
            );
        }
    }

    #[test]
    fn flat_interface_factors_match_the_sector_weights() {
        // A slab z < 0.5 crosses only families with a vertical component:
        // family (di, dk) contributes (nx - |di|) |dk| pairs. Per column in
        // the bulk that is Σ w |dk|, the flat-interface factor.
        let g = planar_grid(64, 16, 0.0625, 0.0);
        let e = block(g, 0..64, 0..8);
        let factors = [
            (StencilKind::N4, 1.0),
            (StencilKind::N8, 0.9481),
            (StencilKind::N16, 0.9862),
        ];
        for (kind, f) in factors {
            let st = PerimeterStencil::new(kind, &g);
            let expected: f64 = st
                .offsets()
                .iter()
                .map(|(o, w)| w * ((64 - o[0].abs()) * o[2].abs()) as f64)
                .sum();
            let p = perimeter(&e, &st);
            assert!((p - expected).abs() < 1e-12, "{kind:?} slab count {p} vs {expected}");
            let bulk: f64 = st.offsets().iter().map(|(o, w)| w * o[2].abs() as f64).sum();
            assert!((bulk / g.dx() - f).abs() < 5e-4, "{kind:?} flat factor {} vs {f}", bulk / g.dx());
        }
    }

    #[test]
    fn knight_stencil_tracks_a_circle_within_two_percent() {
        let dx = 1.0 / 128.0;
        let g = planar_grid(256, 192, dx, -1.0);
        let e = rasterize(&Shape::Ball { center: [0.0, 0.0, 0.75], radius: 0.5 }, g).unwrap();
        let exact = PI; // circumference of radius 1/2
        let p16 = perimeter(&e, &PerimeterStencil::new(StencilKind::N16, &g));
        assert!((p16 / exact - 1.0).abs() < 0.025, "N16 circle perimeter {p16} vs {exact}");
        let p8 = perimeter(&e, &PerimeterStencil::new(StencilKind::N8, &g));
        assert!((p8 / exact - 1.0).abs() < 0.08, "N8 circle perimeter {p8} vs {exact}");
    }

    #[test]
    fn perimeter_is_translation_invariant_in_the_interior() {
        let g = planar_grid(24, 20, 0.25, 0.0);
        let e = block(g, 4..9, 3..11);
        let shifted = IndicatorSet::from_fn(g, |idx| {
            let (ix, _, iz) = g.coords(idx);
            (5..10).contains(&ix) && (4..12).contains(&iz)
        });
        for kind in [StencilKind::N4, StencilKind::N8, StencilKind::N16] {
            let st = PerimeterStencil::new(kind, &g);
            assert_eq!(perimeter(&e, &st), perimeter(&shifted, &st), "{kind:?}");
        }
    }

    #[test]
    fn sector_weights_cover_the_half_circle() {
        // Directed copies of the families partition the circle of directions,
        // so the per-family sectors (weight * 2|e| / dx) must sum to π.
        let g = planar_grid(4, 4, 1.0, 0.0);
        for kind in [StencilKind::N8, StencilKind::N16] {
            let st = PerimeterStencil::new(kind, &g);
            let sum: f64 = st
                .offsets()
                .iter()
                .map(|(o, w)| {
                    let len = ((o[0] * o[0] + o[2] * o[2]) as f64).sqrt();
                    w * 2.0 * len
                })
                .sum();
            assert!((sum - PI).abs() < 1e-12, "{kind:?} sector total {sum}");
        }
    }

    #[test]
    fn spatial_solid_angles_cover_the_half_sphere() {
        for (reps, omega) in [&*SPATIAL_18, &*SPATIAL_26] {
            assert!(reps.len() == 9 || reps.len() == 13);
            let sum: f64 = omega.iter().sum();
            assert!((sum - TAU).abs() < 1e-9, "one-sided solid angles sum to 2π, got {sum}");
        }
        // Cubic symmetry: families with congruent geometry get equal angles.
        let (reps, omega) = &*SPATIAL_26;
        for (r, om) in reps.iter().zip(omega) {
            let class = r.iter().map(|c| c.abs()).sum::<i32>();
            for (r2, om2) in reps.iter().zip(omega) {
                if r2.iter().map(|c| c.abs()).sum::<i32>() == class {
                    assert!((om - om2).abs() < 1e-9, "{r:?} vs {r2:?}");
                }
            }
        }
    }

    #[test]
    fn face_stencil_is_exact_on_an_interior_cube() {
        let g = GridSpec::new(2, 0.125, 8, 8, [0.0, 0.0]).unwrap();
        let e = IndicatorSet::from_fn(g, |idx| {
            let (ix, iy, iz) = g.coords(idx);
            (2..6).contains(&ix) && (2..6).contains(&iy) && (2..6).contains(&iz)
        });
        let st = PerimeterStencil::new(StencilKind::N4, &g);
        let side = 4.0 * g.dx();
        assert!((perimeter(&e, &st) - 6.0 * side * side).abs() < 1e-12);
    }

    #[test]
    fn spatial_stencils_track_a_sphere() {
        let dx = 0.02;
        let g = GridSpec::new(2, dx, 50, 50, [-0.5, -0.5]).unwrap();
        let e = rasterize(&Shape::Ball { center: [0.0, 0.0, 0.5], radius: 0.35 }, g).unwrap();
        let exact = 4.0 * PI * 0.35 * 0.35;
        let p26 = perimeter(&e, &PerimeterStencil::new(StencilKind::N16, &g));
        assert!((p26 / exact - 1.0).abs() < 0.05, "26-neighborhood sphere area {p26} vs {exact}");
        let p18 = perimeter(&e, &PerimeterStencil::new(StencilKind::N8, &g));
        assert!((p18 / exact - 1.0).abs() < 0.08, "18-neighborhood sphere area {p18} vs {exact}");
    }

    #[test]
    fn capillary_energy_respects_the_coercivity_sandwich() {
        // For sets two cells clear of the truncation box, every wetted wall
        // cell launches distinct vertical / diagonal / knight lattice rays
        // that each must cross the boundary once, forcing at least c_lb dx of
        // free surface per wall cell: C_β ≥ κ (P + T) - (1 - κ) δ T with
        // δ = 1 - c_lb. The upper bound C_β ≤ P + T is immediate from
        // |β| ≤ 1 - 2κ ≤ 1.
        let g = planar_grid(18, 12, 0.25, 0.0);
        let kappa = 0.3;
        let beta = BetaField::constant(g, kappa, -(1.0 - 2.0 * kappa)).unwrap();
        let deltas = [(StencilKind::N4, 0.0), (StencilKind::N8, 0.052), (StencilKind::N16, 0.19)];
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..60 {
            let e = IndicatorSet::from_fn(g, |idx| {
                let (ix, _, iz) = g.coords(idx);
                if ix < 2 || ix + 2 >= g.n_horiz() || iz + 2 >= g.n_vert() {
                    return false;
                }
                next() % 3 == 0
            });
            let t = e.trace_area();
            for (kind, delta) in deltas {
                let st = PerimeterStencil::new(kind, &g);
                let p = perimeter(&e, &st);
                let c = capillary_energy(&e, &beta, &st).unwrap();
                assert!(
                    c >= kappa * (p + t) - (1.0 - kappa) * delta * t - 1e-10,
                    "trial {trial} {kind:?}: lower bound fails: C = {c}, P = {p}, T = {t}"
                );
                assert!(c <= p + t + 1e-10, "trial {trial} {kind:?}: upper bound fails");
            }
        }
    }

    #[test]
    fn step_functional_of_the_previous_set_is_capillary_plus_penalty() {
        let g = planar_grid(16, 10, 0.125, 0.0);
        let f = block(g, 4..10, 0..5);
        let beta = BetaField::constant(g, 0.5, 0.0).unwrap();
        let st = PerimeterStencil::new(StencilKind::N8, &g);
        let h = 1e-3;
        let m0 = f.volume() + 0.5;
        let fh = atw_energy(&f, &f, h, m0, &beta, &st).unwrap();
        let expect = capillary_energy(&f, &beta, &st).unwrap() + 0.5 / h.sqrt();
        assert!((fh - expect).abs() < 1e-12, "no symmetric difference, no dissipation");
    }

    #[test]
    fn dissipation_matches_the_signed_volume_identity() {
        // Σ_{EΔF} |sd_F| = Σ_E sd_F - Σ_F sd_F cell by cell.
        let g = planar_grid(14, 9, 0.2, -1.0);
        let mut state = 0xdeadbeefcafef00du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..25 {
            let f = IndicatorSet::from_fn(g, |_| next() % 2 == 0);
            if f.is_empty() || f.is_full() {
                continue;
            }
            let e = IndicatorSet::from_fn(g, |_| next() % 3 == 0);
            let sd = signed_distance(&f).unwrap();
            let h = 0.01;
            let direct = dissipation_term(&e, &f, &sd, h).unwrap();
            let mut signed = 0.0;
            for idx in 0..g.n_cells() {
                if e.contains(idx) {
                    signed += sd.at(idx);
                }
                if f.contains(idx) {
                    signed -= sd.at(idx);
                }
            }
            signed *= g.cell_volume() / h;
            assert!(
                (direct - signed).abs() < 1e-9 * (1.0 + direct.abs()),
                "identity fails: {direct} vs {signed}"
            );
        }
    }
}
