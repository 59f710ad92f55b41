//! Spherical-cap barriers with prescribed contact normal and the minimal
//! enclosing cap radius.
//!
//! `C_r` is the part above the wall of a ball whose base disk on the wall is
//! centered at the horizontal origin with radius `r`, and whose outward
//! normal at the contact circle has vertical component `1 - κ`. Solving that
//! contact condition gives ball radius `ρ = r / √(2κ - κ²)` and ball center
//! at depth `ρ(1 - κ)` *below* the wall; the identity
//! `r² + ρ²(1-κ)² = ρ²` is Pythagoras at the contact circle. The family is
//! nested and increasing in `r`, so "smallest cap containing a set" is well
//! defined and bisectable.

use crate::domain::IndicatorSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error("cap contact parameter kappa must lie in (0, 1/2], got {0}")]
    BadKappa(f64),
    #[error("cap base radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("minimal enclosing cap of the empty set is undefined")]
    EmptySet,
}

/// Spherical cap over a base disk of radius `r` on the wall, with contact
/// normal `ν · e_z = 1 - κ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapBarrier {
    r: f64,
    kappa: f64,
    rho: f64,
    center_depth: f64,
}

impl CapBarrier {
    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Radius of the generating ball.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Depth of the ball center below the wall.
    pub fn center_depth(&self) -> f64 {
        self.center_depth
    }

    /// Height of the cap apex above the wall: `ρ - ρ(1-κ) = ρκ`.
    pub fn apex_height(&self) -> f64 {
        self.rho * self.kappa
    }

    /// Strict membership of a point `[x, y, z]` (`y` ignored when `d = 1`).
    /// The cap is the open ball intersected with the open half-space.
    #[inline]
    pub fn contains(&self, p: [f64; 3], d: usize) -> bool {
        if p[2] <= 0.0 {
            return false;
        }
        let hd2 = if d == 2 { p[0] * p[0] + p[1] * p[1] } else { p[0] * p[0] };
        let dz = p[2] + self.center_depth;
        hd2 + dz * dz < self.rho * self.rho
    }
}

/// Cap geometry from base radius and contact parameter; `κ ∈ (0, 1/2]`.
pub fn cap_geometry(r: f64, kappa: f64) -> Result<CapBarrier, BarrierError> {
    if !(kappa > 0.0 && kappa <= 0.5) {
        return Err(BarrierError::BadKappa(kappa));
    }
    cap_with_contact(r, kappa)
}

/// Same construction with the contact parameter allowed up to 1 (vertical
/// contact, `κ = 1`, is the half-ball). Initial-data shapes use this; the
/// barrier family proper stays within `κ ≤ 1/2`.
pub(crate) fn cap_with_contact(r: f64, kappa: f64) -> Result<CapBarrier, BarrierError> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(BarrierError::BadKappa(kappa));
    }
    if r <= 0.0 || !r.is_finite() {
        return Err(BarrierError::BadRadius(r));
    }
    let s = (2.0 * kappa - kappa * kappa).sqrt();
    let rho = r / s;
    Ok(CapBarrier { r, kappa, rho, center_depth: rho * (1.0 - kappa) })
}

/// Smallest `r` (relative tolerance 1e-10, by bisection over the nested
/// family) such that every occupied cell center lies in `C_r`.
pub fn min_enclosing_cap(e: &IndicatorSet, kappa: f64) -> Result<f64, BarrierError> {
    if !(kappa > 0.0 && kappa <= 0.5) {
        return Err(BarrierError::BadKappa(kappa));
    }
    if e.is_empty() {
        return Err(BarrierError::EmptySet);
    }
    let d = e.grid().d();
    let centers: Vec<[f64; 3]> = e.iter_occupied().map(|i| e.grid().center(i)).collect();
    let contains_all = |r: f64| -> bool {
        match cap_with_contact(r, kappa) {
            Ok(cap) => centers.iter().all(|&p| cap.contains(p, d)),
            Err(_) => false,
        }
    };
    // Grow an upper bracket; every point is eventually interior because the
    // quadratic membership deficit is dominated by -ρ²(2κ-κ²).
    let mut hi = centers
        .iter()
        .map(|p| p[0].abs().max(p[1].abs()) + p[2])
        .fold(0.0f64, f64::max)
        .max(e.grid().dx());
    let mut guard = 0;
    while !contains_all(hi) {
        hi *= 2.0;
        guard += 1;
        assert!(guard < 200, "enclosing-cap bracket failed to close");
    }
    let mut lo = 0.0f64;
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if contains_all(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
