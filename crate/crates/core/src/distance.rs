//! Signed distance to a binary grid set, exact in integer arithmetic.
//!
//! Distances are measured between cell centers. A cell adjacent to the
//! opposite phase sits half a cell from the interface, so the signed distance
//! at a cell whose nearest opposite-phase center is `D` away is
//! `±(D - dx/2)`: negative inside the set, positive outside. Both phases are
//! treated symmetrically, which makes `sd(complement) == -sd(set)` exact.
//!
//! The squared center distances are computed with a separable integer
//! transform (linear scan along the vertical axis, then a lower-envelope pass
//! per horizontal axis). All envelope arithmetic stays in `i64`, so the
//! result is the exact nearest squared lattice distance and the final value
//! is bit-for-bit `dx * (sqrt(D2) - 0.5)` with the appropriate sign.

use crate::domain::{GridSpec, IndicatorSet};
use thiserror::Error;

/// One `f64` value per grid cell, in the cell order of [`GridSpec::index`].
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub(crate) fn new(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_cells());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }
}

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("signed distance needs both a nonempty set and a nonempty complement")]
    DegenerateSet,
}

/// Sentinel linear distance for "no source on this line yet"; its square must
/// still fit comfortably in `i64` after envelope arithmetic.
const INF_LIN: i64 = 1 << 20;
const SQ_INF: i64 = INF_LIN * INF_LIN;

/// Signed distance from every cell center to the phase boundary of `f`.
pub fn signed_distance(f: &IndicatorSet) -> Result<ScalarField, DistanceError> {
    if f.is_empty() || f.is_full() {
        return Err(DistanceError::DegenerateSet);
    }
    let grid = *f.grid();
    let to_outside = squared_distance_to(&grid, |idx| !f.contains(idx));
    let to_inside = squared_distance_to(&grid, |idx| f.contains(idx));
    let dx = grid.dx();
    let mut values = vec![0.0f64; grid.n_cells()];
    for idx in 0..grid.n_cells() {
        let d2 = if f.contains(idx) { to_outside[idx] } else { to_inside[idx] };
        debug_assert!(d2 > 0 && d2 < SQ_INF);
        let unsigned = dx * ((d2 as f64).sqrt() - 0.5);
        values[idx] = if f.contains(idx) { -unsigned } else { unsigned };
    }
    Ok(ScalarField::new(grid, values))
}

/// Exact squared center distance (in cell units) from every cell to the
/// nearest cell satisfying `is_source`. Cells with no source anywhere would
/// stay at `SQ_INF`; callers guarantee at least one source exists.
fn squared_distance_to(grid: &GridSpec, is_source: impl Fn(usize) -> bool) -> Vec<i64> {
    let nx = grid.n_horiz();
    let ny = grid.ny();
    let nz = grid.n_vert();
    let mut d2 = vec![SQ_INF; grid.n_cells()];

    // Vertical pass: per (x, y) column, linear distance to the nearest source
    // in that column (two sweeps), stored squared.
    let zstride = nx * ny;
    for base in 0..zstride {
        let mut run = INF_LIN;
        for iz in 0..nz {
            let idx = base + iz * zstride;
            run = if is_source(idx) { 0 } else { run.saturating_add(1).min(INF_LIN) };
            d2[idx] = run;
        }
        run = INF_LIN;
        for iz in (0..nz).rev() {
            let idx = base + iz * zstride;
            run = if is_source(idx) { 0 } else { run.saturating_add(1).min(INF_LIN) };
            let t = d2[idx].min(run);
            d2[idx] = if t >= INF_LIN { SQ_INF } else { t * t };
        }
    }

    // Envelope pass along x for every (y, z) line, then along y when present.
    let mut scratch_f = vec![0i64; nx.max(ny)];
    let mut scratch_d = vec![0i64; nx.max(ny)];
    let mut verts = vec![0usize; nx.max(ny)];
    let mut ranges = vec![0i64; nx.max(ny) + 1];
    for line in 0..ny * nz {
        let start = line * nx;
        envelope_pass(&mut d2[start..start + nx], 1, nx, &mut scratch_f, &mut scratch_d, &mut verts, &mut ranges);
    }
    if grid.d() == 2 {
        for iz in 0..nz {
            for ix in 0..nx {
                let start = iz * zstride + ix;
                envelope_pass(&mut d2[start..], nx, ny, &mut scratch_f, &mut scratch_d, &mut verts, &mut ranges);
            }
        }
    }
    d2
}

/// One-dimensional lower envelope of the parabolas `x -> (x - i)^2 + f[i]`,
/// evaluated at integer `x`, all in `i64`. `data` is accessed at
/// `0, stride, 2*stride, ...` for `len` entries, in place.
fn envelope_pass(
    data: &mut [i64],
    stride: usize,
    len: usize,
    f: &mut [i64],
    d: &mut [i64],
    verts: &mut [usize],
    ranges: &mut [i64],
) {
    for i in 0..len {
        f[i] = data[i * stride];
    }
    // verts[k] is the parabola vertex owning the interval starting at
    // ranges[k]; ranges is nondecreasing.
    let mut q = 0usize;
    verts[0] = 0;
    ranges[0] = 0;
    for u in 1..len {
        // Pop envelope segments strictly dominated by parabola u at their
        // interval start.
        loop {
            let i = verts[q];
            let x = ranges[q];
            let cur = (x - i as i64) * (x - i as i64) + f[i];
            let new = (x - u as i64) * (x - u as i64) + f[u];
            if new < cur {
                if q == 0 {
                    verts[0] = u;
                    ranges[0] = 0;
                    break;
                }
                q -= 1;
            } else {
                // Parabola verts[q] still wins at ranges[q], so the crossover
                // with u lies at x* >= ranges[q] >= 0 and the numerator below
                // is nonnegative: truncating division is floor division here.
                let i = i as i64;
                let u64_ = u as i64;
                let sep = (u64_ * u64_ - i * i + f[u] - f[i as usize]) / (2 * (u64_ - i));
                let w = sep + 1;
                if w < len as i64 {
                    q += 1;
                    verts[q] = u;
                    ranges[q] = w;
                }
                break;
            }
        }
    }
    // Evaluate the envelope left to right.
    let mut k = 0usize;
    for x in 0..len as i64 {
        while k < q && ranges[k + 1] <= x {
            k += 1;
        }
        let i = verts[k] as i64;
        d[x as usize] = (x - i) * (x - i) + f[i as usize];
    }
    for i in 0..len {
        data[i * stride] = d[i].min(SQ_INF);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::all_pairs_signed_distance;

    fn grid(nx: usize, nz: usize, dx: f64) -> GridSpec {
        GridSpec::new(1, dx, nx, nz, [0.0, 0.0]).unwrap()
    }

    fn random_set(grid: GridSpec, seed: u64, fill_num: u64, fill_den: u64) -> IndicatorSet {
        // Small xorshift so the tests need no RNG dependency.
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15).max(1);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            s
        };
        loop {
            let e = IndicatorSet::from_fn(grid, |_| next() % fill_den < fill_num);
            if !e.is_empty() && !e.is_full() {
                return e;
            }
        }
    }

    #[test]
    fn interface_adjacent_cells_sit_half_a_cell_away() {
        let g = grid(2, 2, 0.25);
        let f = IndicatorSet::from_fn(g, |idx| g.coords(idx).0 == 0);
        let sd = signed_distance(&f).unwrap();
        for idx in 0..g.n_cells() {
            let expect = if f.contains(idx) { -0.125 } else { 0.125 };
            assert_eq!(sd.at(idx), expect, "every cell touches the vertical interface");
        }
    }

    #[test]
    fn single_cell_set_has_value_minus_half_dx() {
        let g = grid(5, 4, 0.5);
        let mut f = IndicatorSet::empty(g);
        f.insert(g.index(2, 0, 1));
        let sd = signed_distance(&f).unwrap();
        assert_eq!(sd.at(g.index(2, 0, 1)), -0.25);
        // Two cells to the right: center distance 2 dx, value 1.5 dx.
        assert_eq!(sd.at(g.index(4, 0, 1)), 0.75);
        // Diagonal neighbor: center distance sqrt(2) dx.
        assert_eq!(sd.at(g.index(3, 0, 2)), 0.5 * (2.0f64.sqrt() - 0.5));
    }

    #[test]
    fn degenerate_sets_are_rejected() {
        let g = grid(3, 3, 1.0);
        assert!(signed_distance(&IndicatorSet::empty(g)).is_err());
        assert!(signed_distance(&IndicatorSet::full(g)).is_err());
    }

    #[test]
    fn matches_all_pairs_search_bitwise_on_random_sets() {
        let g = grid(16, 16, 1.0 / 16.0);
        for seed in 0..20 {
            let f = random_set(g, seed + 1, 1 + seed % 3, 4);
            let fast = signed_distance(&f).unwrap();
            let slow = all_pairs_signed_distance(&f).unwrap();
            for idx in 0..g.n_cells() {
                assert_eq!(
                    fast.at(idx).to_bits(),
                    slow.at(idx).to_bits(),
                    "seed {seed} cell {idx}: envelope transform disagrees with exhaustive search"
                );
            }
        }
    }

    #[test]
    fn matches_all_pairs_search_on_a_volumetric_grid() {
        let g = GridSpec::new(2, 0.2, 6, 5, [-0.6, -0.6]).unwrap();
        for seed in 0..8 {
            let f = random_set(g, 100 + seed, 1, 3);
            let fast = signed_distance(&f).unwrap();
            let slow = all_pairs_signed_distance(&f).unwrap();
            for idx in 0..g.n_cells() {
                assert_eq!(fast.at(idx).to_bits(), slow.at(idx).to_bits(), "seed {seed} cell {idx}");
            }
        }
    }

    #[test]
    fn one_lipschitz_between_all_cell_centers() {
        let g = grid(12, 8, 0.125);
        let f = random_set(g, 7, 1, 2);
        let sd = signed_distance(&f).unwrap();
        for a in 0..g.n_cells() {
            let pa = g.center(a);
            for b in (a + 1)..g.n_cells() {
                let pb = g.center(b);
                let dist = ((pa[0] - pb[0]).powi(2) + (pa[2] - pb[2]).powi(2)).sqrt();
                assert!(
                    (sd.at(a) - sd.at(b)).abs() <= dist + 1e-12,
                    "cells {a},{b}: |{} - {}| > {dist}",
                    sd.at(a),
                    sd.at(b)
                );
            }
        }
    }

    #[test]
    fn complement_flips_the_sign_exactly() {
        let g = grid(11, 9, 0.3);
        let f = random_set(g, 23, 2, 5);
        let fc = IndicatorSet::from_fn(g, |idx| !f.contains(idx));
        let sd = signed_distance(&f).unwrap();
        let sdc = signed_distance(&fc).unwrap();
        for idx in 0..g.n_cells() {
            assert_eq!(sd.at(idx).to_bits(), (-sdc.at(idx)).to_bits());
        }
    }

    #[test]
    fn sign_agrees_with_membership() {
        let g = grid(10, 10, 0.1);
        let f = random_set(g, 42, 1, 4);
        let sd = signed_distance(&f).unwrap();
        for idx in 0..g.n_cells() {
            assert_eq!(sd.at(idx) < 0.0, f.contains(idx), "negative exactly inside the set");
        }
    }
}
