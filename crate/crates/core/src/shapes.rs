//! Analytic initial-data shapes rasterized onto a grid.
//!
//! A cell is occupied iff its center lies in the region, matching the
//! cell-center convention used everywhere else (cap membership, distance
//! fields). Rasterization is monotone under region inclusion by construction.

use crate::barriers;
use crate::domain::{GridSpec, IndicatorSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("shape extends outside the grid box: {0}")]
    OutsideGrid(String),
    #[error("cap cos_contact must lie in [0, 1), got {0}")]
    BadContact(f64),
    #[error("{0}")]
    Barrier(#[from] barriers::BarrierError),
}

/// Analytic region descriptor. Coordinates are `[x, y, z]`; the `y` entry is
/// ignored on planar grids (`d = 1`).
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Axis-aligned closed box.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Open ball intersected with the half-space.
    Ball { center: [f64; 3], radius: f64 },
    /// Spherical cap resting on the wall, centered at the horizontal origin;
    /// `cos_contact` is the vertical component of the outward normal at the
    /// contact circle (0 = vertical wall contact, i.e. a half-ball).
    Cap { base_radius: f64, cos_contact: f64 },
}

impl Shape {
    fn contains(&self, p: [f64; 3], d: usize) -> Result<bool, ShapeError> {
        match *self {
            Shape::Box { min, max } => {
                let mut inside = min[0] <= p[0] && p[0] <= max[0] && min[2] <= p[2] && p[2] <= max[2];
                if d == 2 {
                    inside &= min[1] <= p[1] && p[1] <= max[1];
                }
                Ok(inside)
            }
            Shape::Ball { center, radius } => {
                let mut q = (p[0] - center[0]).powi(2) + (p[2] - center[2]).powi(2);
                if d == 2 {
                    q += (p[1] - center[1]).powi(2);
                }
                Ok(q < radius * radius)
            }
            Shape::Cap { base_radius, cos_contact } => {
                let cap = cap_of(base_radius, cos_contact)?;
                Ok(cap.contains(p, d))
            }
        }
    }

    /// Conservative bounding box `([x,y,z] lo, [x,y,z] hi)` of the region.
    fn bounds(&self, d: usize) -> Result<([f64; 3], [f64; 3]), ShapeError> {
        match *self {
            Shape::Box { min, max } => Ok((min, max)),
            Shape::Ball { center, radius } => {
                let lo = [center[0] - radius, center[1] - radius, (center[2] - radius).max(0.0)];
                let hi = [center[0] + radius, center[1] + radius, center[2] + radius];
                Ok((lo, hi))
            }
            Shape::Cap { base_radius, cos_contact } => {
                let cap = cap_of(base_radius, cos_contact)?;
                let r = base_radius;
                Ok(([-r, -r, 0.0], [r, r, cap.apex_height()]))
            }
        }
        .map(|(mut lo, mut hi)| {
            if d == 1 {
                lo[1] = 0.0;
                hi[1] = 0.0;
            }
            (lo, hi)
        })
    }
}

fn cap_of(base_radius: f64, cos_contact: f64) -> Result<barriers::CapBarrier, ShapeError> {
    if !(0.0..1.0).contains(&cos_contact) {
        return Err(ShapeError::BadContact(cos_contact));
    }
    Ok(barriers::cap_with_contact(base_radius, 1.0 - cos_contact)?)
}

fn check_within_grid(shape: &Shape, grid: &GridSpec) -> Result<(), ShapeError> {
    let (lo, hi) = shape.bounds(grid.d())?;
    let tol = 1e-9 * grid.dx();
    let hmin = grid.horiz_min();
    let hext = grid.n_horiz() as f64 * grid.dx();
    let ztop = grid.n_vert() as f64 * grid.dx();
    let mut ok = lo[0] >= hmin[0] - tol && hi[0] <= hmin[0] + hext + tol;
    ok &= lo[2] >= -tol && hi[2] <= ztop + tol;
    if grid.d() == 2 {
        ok &= lo[1] >= hmin[1] - tol && hi[1] <= hmin[1] + hext + tol;
    }
    if ok {
        Ok(())
    } else {
        Err(ShapeError::OutsideGrid(format!("{shape:?}")))
    }
}

/// Rasterizes one shape: cell occupied iff its center lies in the region.
pub fn rasterize(shape: &Shape, grid: GridSpec) -> Result<IndicatorSet, ShapeError> {
    rasterize_union(std::slice::from_ref(shape), grid)
}

/// Rasterizes a finite union of shapes. An empty list gives the empty set.
pub fn rasterize_union(shapes: &[Shape], grid: GridSpec) -> Result<IndicatorSet, ShapeError> {
    rasterize_carved(shapes, &[], grid)
}

/// Rasterizes a union of shapes and then removes every cell whose center
/// lies in one of the carved regions. Carving after the union makes
/// grid-aligned volume bookkeeping exact: an aligned box adds or removes
/// exactly its cell count.
pub fn rasterize_carved(
    shapes: &[Shape],
    carve: &[Shape],
    grid: GridSpec,
) -> Result<IndicatorSet, ShapeError> {
    for s in shapes.iter().chain(carve) {
        check_within_grid(s, &grid)?;
    }
    let d = grid.d();
    let mut out = IndicatorSet::empty(grid);
    'cells: for idx in 0..grid.n_cells() {
        let p = grid.center(idx);
        for s in carve {
            if s.contains(p, d)? {
                continue 'cells;
            }
        }
        for s in shapes {
            if s.contains(p, d)? {
                out.insert(idx);
                break;
            }
        }
    }
    Ok(out)
}
