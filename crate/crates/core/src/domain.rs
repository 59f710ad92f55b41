//! Grid geometry over the open upper half-space, binary set representation,
//! volumes and traces.
//!
//! The continuum domain is `Ω = ℝ^d × (0, ∞)` with wall `∂Ω = {z = 0}`; the
//! grid truncates it to a finite box and covers the box with cubic cells of
//! side `dx`. Cell centers sit strictly above the wall (the bottom row of
//! centers is at height `dx/2`), so the grid discretizes the *open* half-space
//! while the bottom faces of the bottom row lie exactly on the wall. Sets are
//! unions of closed cells; every measure below is an exact cell count times a
//! power of `dx`, which keeps all energy comparisons exact and brute-force
//! checkable.

use thiserror::Error;

/// Errors from grid construction and set algebra.
#[derive(Debug, Error)]
pub enum DomainError {
    #[error("boundary dimension d must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("cell spacing dx must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("grid needs at least 2 cells per axis, got {n_horiz} x {n_vert}")]
    TooFewCells { n_horiz: usize, n_vert: usize },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("contact coefficient out of band: max |beta| = {max_abs} > 1 - 2*kappa = {bound}")]
    BetaOutOfBand { max_abs: f64, bound: f64 },
    #[error("kappa must lie in (0, 1/2], got {0}")]
    BadKappa(f64),
    #[error("beta table has {got} entries, grid has {want} wall cells")]
    BetaLength { got: usize, want: usize },
}

/// Uniform Cartesian grid over a box in the closed upper half-space.
///
/// `d` is the wall dimension (1 for planar droplets, 2 for spatial ones), so
/// cells are squares (`d = 1`) or cubes (`d = 2`). The horizontal footprint is
/// a `d`-cube of `n_horiz` cells per axis; `n_vert` cells stack above the
/// wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    d: usize,
    dx: f64,
    n_horiz: usize,
    n_vert: usize,
    horiz_min: [f64; 2],
}

impl GridSpec {
    /// Builds a grid; `horiz_min` holds the lower box corner per horizontal
    /// axis (`horiz_min[1]` is ignored when `d = 1`).
    pub fn new(
        d: usize,
        dx: f64,
        n_horiz: usize,
        n_vert: usize,
        horiz_min: [f64; 2],
    ) -> Result<Self, DomainError> {
        if d != 1 && d != 2 {
            return Err(DomainError::BadDimension(d));
        }
        if dx <= 0.0 || !dx.is_finite() {
            return Err(DomainError::BadSpacing(dx));
        }
        if n_horiz < 2 || n_vert < 2 {
            return Err(DomainError::TooFewCells { n_horiz, n_vert });
        }
        let horiz_min = if d == 1 { [horiz_min[0], 0.0] } else { horiz_min };
        Ok(GridSpec { d, dx, n_horiz, n_vert, horiz_min })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_horiz(&self) -> usize {
        self.n_horiz
    }

    pub fn n_vert(&self) -> usize {
        self.n_vert
    }

    pub fn horiz_min(&self) -> [f64; 2] {
        self.horiz_min
    }

    /// Number of cells along the second horizontal axis (1 when `d = 1`).
    pub(crate) fn ny(&self) -> usize {
        if self.d == 1 {
            1
        } else {
            self.n_horiz
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_horiz * self.ny() * self.n_vert
    }

    /// Number of wall cells (cells of the bottom row / wall footprint).
    pub fn n_bottom(&self) -> usize {
        self.n_horiz * self.ny()
    }

    /// Cell volume `dx^(d+1)`.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.d as i32 + 1)
    }

    /// Face area `dx^d`.
    pub fn face_area(&self) -> f64 {
        self.dx.powi(self.d as i32)
    }

    /// Linear index of the cell at horizontal coordinates `(ix, iy)` and
    /// height `iz` (`iy` must be 0 when `d = 1`).
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        debug_assert!(ix < self.n_horiz && iy < self.ny() && iz < self.n_vert);
        (iz * self.ny() + iy) * self.n_horiz + ix
    }

    /// Inverse of [`GridSpec::index`]: `(ix, iy, iz)`.
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let nx = self.n_horiz;
        let ny = self.ny();
        (idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    /// Cell-center coordinates `[x, y, z]` (`y = 0` when `d = 1`).
    #[inline]
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let (ix, iy, iz) = self.coords(idx);
        let y = if self.d == 2 { self.horiz_min[1] + (iy as f64 + 0.5) * self.dx } else { 0.0 };
        [
            self.horiz_min[0] + (ix as f64 + 0.5) * self.dx,
            y,
            (iz as f64 + 0.5) * self.dx,
        ]
    }

    /// Index into wall-cell arrays (β tables, trace counts) for any cell.
    #[inline]
    pub fn wall_index(&self, idx: usize) -> usize {
        idx % self.n_bottom()
    }

    /// True for cells of the bottom row (the wetting layer).
    #[inline]
    pub fn is_bottom(&self, idx: usize) -> bool {
        idx < self.n_bottom()
    }

    /// True for cells on a lateral face or the top face of the truncation
    /// box. A set touching these rows invalidates the truncation.
    pub fn touches_truncation(&self, idx: usize) -> bool {
        let (ix, iy, iz) = self.coords(idx);
        if iz + 1 == self.n_vert || ix == 0 || ix + 1 == self.n_horiz {
            return true;
        }
        self.d == 2 && (iy == 0 || iy + 1 == self.ny())
    }
}

/// Binary occupancy over grid cells: a set of finite perimeter as a union of
/// closed cells. The bit array is canonical (unused trailing bits are zero),
/// so equality of representations is equality of sets.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    grid: GridSpec,
    words: Vec<u64>,
}

impl IndicatorSet {
    pub fn empty(grid: GridSpec) -> Self {
        let n = grid.n_cells();
        IndicatorSet { grid, words: vec![0u64; n.div_ceil(64)] }
    }

    pub fn full(grid: GridSpec) -> Self {
        let mut s = Self::empty(grid);
        for idx in 0..grid.n_cells() {
            s.insert(idx);
        }
        s
    }

    /// Builds a set from a per-cell predicate.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut s = Self::empty(grid);
        for idx in 0..grid.n_cells() {
            if f(idx) {
                s.insert(idx);
            }
        }
        s
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn contains(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, idx: usize) {
        debug_assert!(idx < self.grid.n_cells());
        self.words[idx / 64] |= 1u64 << (idx % 64);
    }

    #[inline]
    pub fn remove(&mut self, idx: usize) {
        self.words[idx / 64] &= !(1u64 << (idx % 64));
    }

    #[inline]
    pub fn toggle(&mut self, idx: usize) {
        self.words[idx / 64] ^= 1u64 << (idx % 64);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.grid.n_cells()
    }

    /// Lebesgue measure: occupied cells times `dx^(d+1)`.
    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    /// Wetted area on the wall: occupied bottom-row cells times `dx^d`.
    pub fn trace_area(&self) -> f64 {
        let nb = self.grid.n_bottom();
        (0..nb).filter(|&i| self.contains(i)).count() as f64 * self.grid.face_area()
    }

    /// Number of cells in the symmetric difference.
    pub fn sym_diff_cells(&self, other: &IndicatorSet) -> Result<usize, DomainError> {
        if self.grid != other.grid {
            return Err(DomainError::GridMismatch);
        }
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum())
    }

    /// Volume of the symmetric difference; a metric on sets of one grid.
    pub fn sym_diff_volume(&self, other: &IndicatorSet) -> Result<f64, DomainError> {
        Ok(self.sym_diff_cells(other)? as f64 * self.grid.cell_volume())
    }

    /// Occupied cell indices in increasing order.
    pub fn iter_occupied(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.grid.n_cells();
        (0..n).filter(move |&i| self.contains(i))
    }

    /// Number of face-connected components (4-neighborhood for `d = 1`,
    /// 6-neighborhood for `d = 2`); used to observe topology changes.
    pub fn component_count(&self) -> usize {
        let g = self.grid;
        let n = g.n_cells();
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        let mut comps = 0;
        let (nx, ny) = (g.n_horiz(), g.ny());
        for start in 0..n {
            if !self.contains(start) || seen[start] {
                continue;
            }
            comps += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let (ix, iy, iz) = g.coords(idx);
                let mut push = |c: Option<usize>| {
                    if let Some(j) = c {
                        if self.contains(j) && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                };
                push((ix > 0).then(|| g.index(ix - 1, iy, iz)));
                push((ix + 1 < nx).then(|| g.index(ix + 1, iy, iz)));
                push((iz > 0).then(|| g.index(ix, iy, iz - 1)));
                push((iz + 1 < g.n_vert()).then(|| g.index(ix, iy, iz + 1)));
                if g.d() == 2 {
                    push((iy > 0).then(|| g.index(ix, iy - 1, iz)));
                    push((iy + 1 < ny).then(|| g.index(ix, iy + 1, iz)));
                }
            }
        }
        comps
    }

}

/// Contact coefficient β sampled at wall-cell centers, together with the
/// coercivity parameter κ. Admissibility demands `max |β| ≤ 1 - 2κ`, which
/// keeps the capillary energy comparable to the full perimeter (the sandwich
/// `κ P ≤ C_β ≤ P`).
#[derive(Debug, Clone, PartialEq)]
pub struct BetaField {
    grid: GridSpec,
    kappa: f64,
    values: Vec<f64>,
}

impl BetaField {
    /// Builds a β field from one value per wall cell, validating the band.
    pub fn from_values(grid: GridSpec, kappa: f64, values: Vec<f64>) -> Result<Self, DomainError> {
        if !(kappa > 0.0 && kappa <= 0.5) {
            return Err(DomainError::BadKappa(kappa));
        }
        if values.len() != grid.n_bottom() {
            return Err(DomainError::BetaLength { got: values.len(), want: grid.n_bottom() });
        }
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound = 1.0 - 2.0 * kappa;
        if !max_abs.is_finite() || max_abs > bound + 1e-12 {
            return Err(DomainError::BetaOutOfBand { max_abs, bound });
        }
        Ok(BetaField { grid, kappa, values })
    }

    /// Constant β over the wall.
    pub fn constant(grid: GridSpec, kappa: f64, value: f64) -> Result<Self, DomainError> {
        let n = grid.n_bottom();
        Self::from_values(grid, kappa, vec![value; n])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// β at the wall cell below the given cell index.
    #[inline]
    pub fn at_cell(&self, idx: usize) -> f64 {
        self.values[self.grid.wall_index(idx)]
    }

    /// β at a wall cell by wall index.
    #[inline]
    pub fn at_wall(&self, wall_idx: usize) -> f64 {
        self.values[wall_idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_4x4() -> GridSpec {
        GridSpec::new(1, 0.5, 4, 4, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn volume_of_empty_full_and_single_cell() {
        let g = grid_4x4();
        assert_eq!(IndicatorSet::empty(g).volume(), 0.0);
        assert_eq!(IndicatorSet::full(g).volume(), 4.0, "16 cells x 0.25 each");
        let g2 = GridSpec::new(1, 0.1, 4, 4, [0.0, 0.0]).unwrap();
        let mut one = IndicatorSet::empty(g2);
        one.insert(g2.index(1, 0, 2));
        assert!((one.volume() - 0.01).abs() < 1e-15, "dx^2 = 0.01");
    }

    #[test]
    fn trace_area_counts_bottom_row_only() {
        let g = grid_4x4();
        let mut e = IndicatorSet::empty(g);
        e.insert(g.index(0, 0, 2));
        e.insert(g.index(1, 0, 3));
        assert_eq!(e.trace_area(), 0.0, "no bottom-row cell is occupied");
        for ix in 0..3 {
            e.insert(g.index(ix, 0, 0));
        }
        assert_eq!(e.trace_area(), 1.5, "3 wall cells x dx = 0.5");

        let g8 = GridSpec::new(1, 1.0, 8, 2, [0.0, 0.0]).unwrap();
        let mut row = IndicatorSet::empty(g8);
        for ix in 0..8 {
            row.insert(g8.index(ix, 0, 0));
        }
        assert_eq!(row.trace_area(), 8.0);
    }

    #[test]
    fn sym_diff_volume_basics() {
        let g = grid_4x4();
        let mut a = IndicatorSet::empty(g);
        a.insert(g.index(1, 0, 1));
        a.insert(g.index(2, 0, 1));
        assert_eq!(a.sym_diff_volume(&a).unwrap(), 0.0);

        let mut b = IndicatorSet::empty(g);
        b.insert(g.index(0, 0, 3));
        assert_eq!(
            a.sym_diff_volume(&b).unwrap(),
            a.volume() + b.volume(),
            "disjoint sets: symmetric difference is the union"
        );

        let mut c = a.clone();
        c.toggle(g.index(3, 0, 3));
        assert_eq!(a.sym_diff_volume(&c).unwrap(), 0.25, "one flipped cell = dx^2");
    }

    #[test]
    fn sym_diff_rejects_grid_mismatch() {
        let a = IndicatorSet::empty(grid_4x4());
        let b = IndicatorSet::empty(GridSpec::new(1, 0.5, 4, 6, [0.0, 0.0]).unwrap());
        assert!(a.sym_diff_volume(&b).is_err());
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(3, 0.5, 4, 4, [0.0, 0.0]).is_err());
        assert!(GridSpec::new(1, 0.0, 4, 4, [0.0, 0.0]).is_err());
        assert!(GridSpec::new(1, 0.5, 1, 4, [0.0, 0.0]).is_err());
    }

    #[test]
    fn centers_sit_strictly_above_the_wall() {
        let g = GridSpec::new(2, 0.25, 4, 3, [-0.5, -0.5]).unwrap();
        for idx in 0..g.n_cells() {
            let c = g.center(idx);
            assert!(c[2] > 0.0);
        }
        assert_eq!(g.center(g.index(0, 0, 0))[2], 0.125, "bottom centers at dx/2");
        assert_eq!(g.n_cells(), 48);
        assert_eq!(g.n_bottom(), 16);
    }

    #[test]
    fn beta_band_is_enforced_with_equality_allowed() {
        let g = grid_4x4();
        assert!(BetaField::constant(g, 0.25, -0.5).is_ok(), "|beta| = 1 - 2k exactly is admissible");
        assert!(BetaField::constant(g, 0.25, -0.51).is_err());
        assert!(BetaField::constant(g, 0.6, 0.0).is_err(), "kappa beyond 1/2");
        assert!(BetaField::from_values(g, 0.5, vec![0.0; 3]).is_err(), "wrong table length");
    }

    #[test]
    fn component_count_sees_merging() {
        let g = GridSpec::new(1, 0.25, 8, 4, [0.0, 0.0]).unwrap();
        let mut e = IndicatorSet::empty(g);
        e.insert(g.index(1, 0, 0));
        e.insert(g.index(2, 0, 0));
        e.insert(g.index(5, 0, 0));
        assert_eq!(e.component_count(), 2);
        e.insert(g.index(3, 0, 0));
        e.insert(g.index(4, 0, 0));
        assert_eq!(e.component_count(), 1);
        assert_eq!(IndicatorSet::empty(g).component_count(), 0);
    }

    #[test]
    fn sym_diff_is_a_metric_on_random_triples() {
        // Triangle inequality |AΔC| ≤ |AΔB| + |BΔC| for xor-derived sets.
        let g = grid_4x4();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..200 {
            let mk = |bits: u64| {
                let mut s = IndicatorSet::empty(g);
                for i in 0..16 {
                    if bits >> i & 1 == 1 {
                        s.insert(i);
                    }
                }
                s
            };
            let (a, b, c) = (mk(next()), mk(next()), mk(next()));
            let ab = a.sym_diff_volume(&b).unwrap();
            let bc = b.sym_diff_volume(&c).unwrap();
            let ac = a.sym_diff_volume(&c).unwrap();
            assert!(ac <= ab + bc + 1e-12, "triangle inequality violated: {ac} > {ab} + {bc}");
        }
    }
}
