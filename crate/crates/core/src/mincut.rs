//! Exact minimization of the linearized step functional by min-cut.
//!
//! With the volume penalty replaced by a multiplier term, one implicit step
//! minimizes
//!
//! `L_μ(E) = Σ_{cells of E} (sd_F / h) dx^(d+1)  +  C_β(E)  +  μ |E|`
//!
//! over binary sets `E` (the symmetric-difference form of the dissipation
//! equals this cellwise form up to a constant in `E`). The perimeter part is
//! a sum of pairwise terms `w · [χ_u ≠ χ_v]`, which is submodular, so the
//! global minimum is a minimum s/t cut: each cell is a node, membership in
//! `E` means staying on the source side, per-cell costs become terminal
//! arcs, and each neighbor pair an undirected arc of weight `w`.
//!
//! All costs are rounded to an integer grid of "quanta" (`~1e-12` of the
//! largest cost magnitude) before solving, and every comparison downstream —
//! the volume bisection, the candidate selection, the brute-force oracle —
//! uses the same integer objective, so optimality claims are exact claims
//! about the quantized functional, immune to float noise.
//!
//! The solver reports both the minimal and the maximal minimizer (the
//! residual source side and the complement of the residual sink side).
//! Minimizers at different multipliers nest: strictly larger `μ` shrinks
//! every minimizer, which is what makes volume bisection exact and lets the
//! caller freeze decided cells and re-solve only in the undecided band.

use crate::distance::{signed_distance, DistanceError, ScalarField};
use crate::domain::{BetaField, DomainError, GridSpec, IndicatorSet};
use crate::energy::PerimeterStencil;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MinCutError {
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("{0}")]
    Distance(#[from] DistanceError),
    #[error("time step h must be positive and finite, got {0}")]
    BadTimeStep(f64),
    #[error("multiplier {0} is not usable")]
    BadMultiplier(f64),
    #[error("quantized capacities would overflow 64-bit flow arithmetic")]
    CapacityOverflow,
}

/// Relative size of one cost quantum.
const QUANTUM_REL: f64 = 1e-12;

/// Both extreme minimizers of the linearized functional and their common
/// objective value in quanta.
#[derive(Debug, Clone)]
pub(crate) struct CutSolution {
    pub emin: IndicatorSet,
    pub emax: IndicatorSet,
    pub objective: i128,
}

/// Quantized instance of the linearized functional for one previous set.
pub(crate) struct LinearizedSolver {
    grid: GridSpec,
    /// Per-cell cost of membership, in quanta, without the multiplier term.
    unary_q: Vec<i64>,
    /// Undirected neighbor pairs `(u, v, w_q)`.
    pairs: Vec<(u32, u32, i64)>,
    /// CSR adjacency over `pairs`: for each cell, its `(neighbor, w_q)` rows.
    adj_start: Vec<u32>,
    adj: Vec<(u32, i64)>,
    quantum: f64,
    sum_abs_unary: i128,
    sum_pair_caps: i128,
}

impl LinearizedSolver {
    pub(crate) fn new(
        f_prev: &IndicatorSet,
        sd_prev: &ScalarField,
        h: f64,
        beta: &BetaField,
        stencil: &PerimeterStencil,
    ) -> Result<Self, MinCutError> {
        if h <= 0.0 || !h.is_finite() {
            return Err(MinCutError::BadTimeStep(h));
        }
        if f_prev.grid() != beta.grid() {
            return Err(DomainError::GridMismatch.into());
        }
        stencil.assert_matches(f_prev.grid());
        let grid = *f_prev.grid();
        let n = grid.n_cells();
        let cellvol = grid.cell_volume();

        // Raw per-cell costs and the quantum scale.
        let mut unary = vec![0.0f64; n];
        let mut maxabs = cellvol / h.sqrt(); // natural multiplier scale 1/√h
        for (idx, slot) in unary.iter_mut().enumerate() {
            let mut u = sd_prev.at(idx) / h * cellvol;
            if grid.is_bottom(idx) {
                u += beta.at_wall(idx) * grid.face_area();
            }
            *slot = u;
            maxabs = maxabs.max(u.abs());
        }
        for &(_, w) in stencil.offsets() {
            maxabs = maxabs.max(w);
        }
        let quantum = maxabs * QUANTUM_REL;

        let unary_q: Vec<i64> = unary.iter().map(|u| (u / quantum).round() as i64).collect();

        let (nx, ny, nz) = (grid.n_horiz() as i32, grid.ny() as i32, grid.n_vert() as i32);
        let mut pairs: Vec<(u32, u32, i64)> = Vec::new();
        for &(off, w) in stencil.offsets() {
            let w_q = (w / quantum).round() as i64;
            if w_q == 0 {
                continue;
            }
            for idx in 0..n {
                let (ix, iy, iz) = grid.coords(idx);
                let (jx, jy, jz) = (ix as i32 + off[0], iy as i32 + off[1], iz as i32 + off[2]);
                if jx < 0 || jx >= nx || jy < 0 || jy >= ny || jz < 0 || jz >= nz {
                    continue;
                }
                let jdx = grid.index(jx as usize, jy as usize, jz as usize);
                pairs.push((idx as u32, jdx as u32, w_q));
            }
        }

        let mut counts = vec![0u32; n + 1];
        for &(u, v, _) in &pairs {
            counts[u as usize + 1] += 1;
            counts[v as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let adj_start = counts.clone();
        let mut fill = counts;
        let mut adj = vec![(0u32, 0i64); 2 * pairs.len()];
        for &(u, v, w) in &pairs {
            adj[fill[u as usize] as usize] = (v, w);
            fill[u as usize] += 1;
            adj[fill[v as usize] as usize] = (u, w);
            fill[v as usize] += 1;
        }

        let sum_abs_unary: i128 = unary_q.iter().map(|&u| u.unsigned_abs() as i128).sum();
        let sum_pair_caps: i128 = pairs.iter().map(|&(_, _, w)| 2 * w as i128).sum();

        Ok(LinearizedSolver {
            grid,
            unary_q,
            pairs,
            adj_start,
            adj,
            quantum,
            sum_abs_unary,
            sum_pair_caps,
        })
    }

    pub(crate) fn quantum(&self) -> f64 {
        self.quantum
    }

    pub(crate) fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Per-cell membership costs in quanta (multiplier not included).
    pub(crate) fn unary_quanta(&self) -> &[i64] {
        &self.unary_q
    }

    /// Undirected neighbor pairs `(u, v, w_q)` of the cut cost.
    pub(crate) fn pair_list(&self) -> &[(u32, u32, i64)] {
        &self.pairs
    }

    /// Deliberately damages one membership cost. Exists so self-test suites
    /// can prove they detect a wrong solver; never used by the flow.
    pub(crate) fn corrupt_unary(&mut self, idx: usize, delta_q: i64) {
        self.sum_abs_unary -= (self.unary_q[idx].unsigned_abs()) as i128;
        self.unary_q[idx] += delta_q;
        self.sum_abs_unary += (self.unary_q[idx].unsigned_abs()) as i128;
    }

    fn check_multiplier(&self, m_q: i64) -> Result<(), MinCutError> {
        let n = self.grid.n_cells() as i128;
        let total = self.sum_abs_unary + n * (m_q.unsigned_abs() as i128) + self.sum_pair_caps;
        if total >= (i64::MAX / 4) as i128 {
            return Err(MinCutError::CapacityOverflow);
        }
        Ok(())
    }

    /// Exact objective of a candidate set, in quanta.
    pub(crate) fn energy_quanta(&self, e: &IndicatorSet, m_q: i64) -> i128 {
        let mut total: i128 = 0;
        for c in 0..self.grid.n_cells() {
            if e.contains(c) {
                total += (self.unary_q[c] + m_q) as i128;
            }
        }
        for &(u, v, w) in &self.pairs {
            if e.contains(u as usize) != e.contains(v as usize) {
                total += w as i128;
            }
        }
        total
    }

    /// Global solve at integer multiplier `m_q` (quanta per cell).
    pub(crate) fn solve(&self, m_q: i64) -> Result<CutSolution, MinCutError> {
        self.check_multiplier(m_q)?;
        let n = self.grid.n_cells();
        let (s, t) = (n, n + 1);
        let mut g = FlowGraph::with_nodes(n + 2, 2 * self.pairs.len() + 2 * n);
        let mut base: i128 = 0;
        for c in 0..n {
            let a = self.unary_q[c] + m_q;
            if a > 0 {
                g.add_edge(c, t, a, 0);
            } else if a < 0 {
                g.add_edge(s, c, -a, 0);
                base += a as i128;
            }
        }
        for &(u, v, w) in &self.pairs {
            g.add_edge(u as usize, v as usize, w, w);
        }
        let flow = g.max_flow(s, t);
        let objective = base + flow as i128;

        let reach = g.source_side(s);
        let sink = g.sink_side(t);
        let emin = IndicatorSet::from_fn(self.grid, |c| reach[c]);
        let emax = IndicatorSet::from_fn(self.grid, |c| !sink[c]);
        debug_assert_eq!(self.energy_quanta(&emin, m_q), objective);
        debug_assert_eq!(self.energy_quanta(&emax, m_q), objective);
        Ok(CutSolution { emin, emax, objective })
    }

    /// Solve with every cell outside `band` frozen: cells of `known_in` are
    /// in `E`, remaining outside cells are out. Correct whenever the frozen
    /// assignment agrees with some minimizer, which the nesting property
    /// guarantees for bisection brackets. Returns full-grid sets.
    pub(crate) fn solve_in_band(
        &self,
        m_q: i64,
        known_in: &IndicatorSet,
        band: &[u32],
    ) -> Result<CutSolution, MinCutError> {
        self.check_multiplier(m_q)?;
        let n = self.grid.n_cells();
        let nb = band.len();
        let mut local = vec![-1i32; n];
        for (li, &c) in band.iter().enumerate() {
            debug_assert!(!known_in.contains(c as usize), "band overlaps frozen cells");
            local[c as usize] = li as i32;
        }
        let (s, t) = (nb, nb + 1);
        let mut g = FlowGraph::with_nodes(nb + 2, 0);
        for (li, &c) in band.iter().enumerate() {
            let c = c as usize;
            let mut a = self.unary_q[c] + m_q;
            let (lo, hi) = (self.adj_start[c] as usize, self.adj_start[c + 1] as usize);
            for &(other, w) in &self.adj[lo..hi] {
                let lo_other = local[other as usize];
                if lo_other >= 0 {
                    if lo_other as usize > li {
                        g.add_edge(li, lo_other as usize, w, w);
                    }
                } else if known_in.contains(other as usize) {
                    // Cutting this cell away from a frozen-in neighbor costs
                    // w exactly when the cell is out.
                    a -= w;
                } else {
                    a += w;
                }
            }
            if a > 0 {
                g.add_edge(li, t, a, 0);
            } else if a < 0 {
                g.add_edge(s, li, -a, 0);
            }
        }
        g.max_flow(s, t);
        let reach = g.source_side(s);
        let sink = g.sink_side(t);
        let mut emin = known_in.clone();
        let mut emax = known_in.clone();
        for (li, &c) in band.iter().enumerate() {
            if reach[li] {
                emin.insert(c as usize);
            }
            if !sink[li] {
                emax.insert(c as usize);
            }
        }
        let objective = self.energy_quanta(&emin, m_q);
        debug_assert_eq!(self.energy_quanta(&emax, m_q), objective);
        Ok(CutSolution { emin, emax, objective })
    }
}

/// Volume penalty `(1/√h) |vol - m0|` in quanta, rounded once. Every
/// comparison of constrained step energies uses this same rounding, so the
/// stepper and the brute-force oracle rank candidates identically.
pub(crate) fn penalty_quanta(cells: usize, cellvol: f64, m0: f64, h: f64, quantum: f64) -> i128 {
    ((cells as f64 * cellvol - m0).abs() / (h.sqrt() * quantum)).round() as i128
}

impl LinearizedSolver {
    /// Exact minimum of the constrained step objective
    /// `Φ(E) + penalty_quanta(|E|)` by a Gray-code walk over every subset.
    /// Only for tiny grids.
    pub(crate) fn exhaustive_minimum(&self, h: f64, m0: f64) -> (IndicatorSet, i128) {
        let n = self.grid.n_cells();
        assert!(n <= 26, "exhaustive enumeration is only for tiny grids");
        let cellvol = self.grid.cell_volume();
        let mut state = vec![false; n];
        let mut phi: i128 = 0;
        let mut cnt = 0usize;
        let mut bits: u64 = 0;
        let mut best_bits: u64 = 0;
        let mut best = penalty_quanta(0, cellvol, m0, h, self.quantum);
        for k in 1u64..(1u64 << n) {
            // Consecutive Gray codes k ^ (k >> 1) differ exactly at the
            // lowest set bit of k.
            let c = k.trailing_zeros() as usize;
            let turning_on = !state[c];
            phi += if turning_on { self.unary_q[c] as i128 } else { -(self.unary_q[c] as i128) };
            let (lo, hi) = (self.adj_start[c] as usize, self.adj_start[c + 1] as usize);
            for &(o, w) in &self.adj[lo..hi] {
                if state[o as usize] == turning_on {
                    phi -= w as i128;
                } else {
                    phi += w as i128;
                }
            }
            state[c] = turning_on;
            cnt = if turning_on { cnt + 1 } else { cnt - 1 };
            bits ^= 1u64 << c;
            let total = phi + penalty_quanta(cnt, cellvol, m0, h, self.quantum);
            if total < best {
                best = total;
                best_bits = bits;
            }
        }
        (IndicatorSet::from_fn(self.grid, |c| best_bits >> c & 1 == 1), best)
    }
}

/// Solves the linearized step functional at multiplier `mu` exactly and
/// returns its minimal minimizer.
pub fn solve_linearized(
    f_prev: &IndicatorSet,
    mu: f64,
    h: f64,
    beta: &BetaField,
    stencil: &PerimeterStencil,
) -> Result<IndicatorSet, MinCutError> {
    if !mu.is_finite() {
        return Err(MinCutError::BadMultiplier(mu));
    }
    let sd = signed_distance(f_prev)?;
    let solver = LinearizedSolver::new(f_prev, &sd, h, beta, stencil)?;
    let m_q = (mu * f_prev.grid().cell_volume() / solver.quantum()).round();
    if !m_q.is_finite() || m_q.abs() >= 9.0e18 {
        return Err(MinCutError::BadMultiplier(mu));
    }
    Ok(solver.solve(m_q as i64)?.emin)
}

/// Arena max-flow graph: forward-star adjacency, arcs stored in partner
/// pairs (`a ^ 1` is the reverse of `a`), capacities in `i64`.
struct FlowGraph {
    first: Vec<i32>,
    next: Vec<i32>,
    to: Vec<u32>,
    cap: Vec<i64>,
}

impl FlowGraph {
    fn with_nodes(n: usize, arc_hint: usize) -> Self {
        FlowGraph {
            first: vec![-1; n],
            next: Vec::with_capacity(arc_hint),
            to: Vec::with_capacity(arc_hint),
            cap: Vec::with_capacity(arc_hint),
        }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap_uv: i64, cap_vu: i64) {
        let a = self.to.len() as i32;
        self.to.push(v as u32);
        self.cap.push(cap_uv);
        self.next.push(self.first[u]);
        self.first[u] = a;
        self.to.push(u as u32);
        self.cap.push(cap_vu);
        self.next.push(self.first[v]);
        self.first[v] = a + 1;
    }

    /// Dinic's algorithm: BFS layering plus current-arc blocking flow with an
    /// explicit path stack. Deterministic for a fixed insertion order.
    fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        let n = self.first.len();
        let mut level = vec![-1i32; n];
        let mut it = vec![-1i32; n];
        let mut queue: Vec<u32> = Vec::with_capacity(n);
        let mut path: Vec<u32> = Vec::new();
        let mut total: i64 = 0;
        loop {
            level.iter_mut().for_each(|l| *l = -1);
            level[s] = 0;
            queue.clear();
            queue.push(s as u32);
            let mut head = 0;
            while head < queue.len() {
                let v = queue[head] as usize;
                head += 1;
                let mut a = self.first[v];
                while a != -1 {
                    let u = self.to[a as usize] as usize;
                    if self.cap[a as usize] > 0 && level[u] < 0 {
                        level[u] = level[v] + 1;
                        queue.push(u as u32);
                    }
                    a = self.next[a as usize];
                }
            }
            if level[t] < 0 {
                return total;
            }
            it.copy_from_slice(&self.first);
            path.clear();
            let mut v = s;
            loop {
                if v == t {
                    let mut b = i64::MAX;
                    for &a in &path {
                        b = b.min(self.cap[a as usize]);
                    }
                    for &a in &path {
                        self.cap[a as usize] -= b;
                        self.cap[(a ^ 1) as usize] += b;
                    }
                    total += b;
                    let mut keep = 0;
                    while keep < path.len() && self.cap[path[keep] as usize] > 0 {
                        keep += 1;
                    }
                    path.truncate(keep);
                    v = if keep == 0 { s } else { self.to[path[keep - 1] as usize] as usize };
                    continue;
                }
                let mut advanced = false;
                while it[v] != -1 {
                    let a = it[v] as usize;
                    let u = self.to[a] as usize;
                    if self.cap[a] > 0 && level[u] == level[v] + 1 {
                        path.push(a as u32);
                        v = u;
                        advanced = true;
                        break;
                    }
                    it[v] = self.next[a];
                }
                if !advanced {
                    level[v] = -1;
                    if v == s {
                        break;
                    }
                    let a = path.pop().unwrap() as usize;
                    let prev = self.to[a ^ 1] as usize;
                    it[prev] = self.next[a];
                    v = prev;
                }
            }
        }
    }

    /// Nodes reachable from `s` in the residual graph (the minimal min-cut
    /// source side).
    fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.first.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(v) = stack.pop() {
            let mut a = self.first[v];
            while a != -1 {
                let u = self.to[a as usize] as usize;
                if self.cap[a as usize] > 0 && !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
                a = self.next[a as usize];
            }
        }
        seen
    }

    /// Nodes that can still reach `t` in the residual graph; their complement
    /// is the maximal min-cut source side.
    fn sink_side(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.first.len()];
        let mut stack = vec![t];
        seen[t] = true;
        while let Some(v) = stack.pop() {
            let mut a = self.first[v];
            while a != -1 {
                // The partner arc runs `u -> v`; positive residual there
                // means `u` reaches `t` through `v`.
                let u = self.to[a as usize] as usize;
                if self.cap[(a ^ 1) as usize] > 0 && !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
                a = self.next[a as usize];
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::StencilKind;

    fn xorshift(seed: u64) -> impl FnMut() -> u64 {
        let mut s = seed.wrapping_mul(0x9e3779b97f4a7c15) | 1;
        move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            s
        }
    }

    fn random_proper_set(g: GridSpec, next: &mut impl FnMut() -> u64, num: u64, den: u64) -> IndicatorSet {
        loop {
            let e = IndicatorSet::from_fn(g, |_| next() % den < num);
            if !e.is_empty() && !e.is_full() {
                return e;
            }
        }
    }

    struct Instance {
        f: IndicatorSet,
        beta: BetaField,
        stencil: PerimeterStencil,
        h: f64,
    }

    fn random_instance(g: GridSpec, seed: u64) -> Instance {
        let mut next = xorshift(seed);
        let f = random_proper_set(g, &mut next, 1, 2);
        let kappa = 0.35;
        let values: Vec<f64> = (0..g.n_bottom())
            .map(|_| (next() % 2001) as f64 / 1000.0 * 0.3 - 0.3)
            .collect();
        let beta = BetaField::from_values(g, kappa, values).unwrap();
        let kind = match next() % 3 {
            0 => StencilKind::N4,
            1 => StencilKind::N8,
            _ => StencilKind::N16,
        };
        let stencil = PerimeterStencil::new(kind, &g);
        let h = if next() % 2 == 0 { 0.5 } else { 0.05 };
        Instance { f, beta, stencil, h }
    }

    fn solver_for(inst: &Instance) -> LinearizedSolver {
        let sd = signed_distance(&inst.f).unwrap();
        LinearizedSolver::new(&inst.f, &sd, inst.h, &inst.beta, &inst.stencil).unwrap()
    }

    #[test]
    fn overwhelming_multipliers_give_empty_and_full_sets() {
        let g = GridSpec::new(1, 0.25, 8, 6, [0.0, 0.0]).unwrap();
        let mut next = xorshift(11);
        let f = random_proper_set(g, &mut next, 1, 2);
        let beta = BetaField::constant(g, 0.4, -0.2).unwrap();
        let st = PerimeterStencil::new(StencilKind::N8, &g);
        let h = 1.0;
        let sd = signed_distance(&f).unwrap();
        let max_sd = sd.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // Beyond these thresholds, membership strictly costs (or strictly
        // pays) per cell no matter what the neighbors do.
        let incident: f64 = st.offsets().iter().map(|(_, w)| 2.0 * w).sum();
        let mu_kill = max_sd / h + (g.face_area() + incident) / g.cell_volume() + 1.0;
        let empty = solve_linearized(&f, mu_kill, h, &beta, &st).unwrap();
        assert!(empty.is_empty(), "huge positive multiplier must empty the set");
        let full = solve_linearized(&f, -mu_kill, h, &beta, &st).unwrap();
        assert!(full.is_full(), "huge negative multiplier must fill the grid");
    }

    #[test]
    fn exhaustive_minimum_and_lattice_extremes_on_tiny_grids() {
        let g = GridSpec::new(1, 0.5, 4, 3, [0.0, 0.0]).unwrap();
        let n = g.n_cells();
        assert_eq!(n, 12);
        for seed in 0..6 {
            let inst = random_instance(g, 300 + seed);
            let solver = solver_for(&inst);
            for m_q in [-40_000_000_000i64, -7, 0, 13, 55_000_000_000] {
                let sol = solver.solve(m_q).unwrap();
                let mut best = i128::MAX;
                let mut inter = (1u64 << n) - 1;
                let mut union = 0u64;
                for bits in 0u64..(1 << n) {
                    let e = IndicatorSet::from_fn(g, |c| bits >> c & 1 == 1);
                    let v = solver.energy_quanta(&e, m_q);
                    if v < best {
                        best = v;
                        inter = bits;
                        union = bits;
                    } else if v == best {
                        inter &= bits;
                        union |= bits;
                    }
                }
                assert_eq!(sol.objective, best, "seed {seed} m {m_q}: objective is not the minimum");
                let emin_bits: u64 =
                    (0..n).filter(|&c| sol.emin.contains(c)).map(|c| 1u64 << c).sum();
                let emax_bits: u64 =
                    (0..n).filter(|&c| sol.emax.contains(c)).map(|c| 1u64 << c).sum();
                assert_eq!(emin_bits, inter, "minimal minimizer is the intersection of minimizers");
                assert_eq!(emax_bits, union, "maximal minimizer is the union of minimizers");
            }
        }
    }

    #[test]
    fn minimizers_nest_as_the_multiplier_grows() {
        let g = GridSpec::new(1, 0.25, 7, 6, [-1.0, 0.0]).unwrap();
        for seed in 0..10 {
            let inst = random_instance(g, seed);
            let solver = solver_for(&inst);
            let mut next = xorshift(900 + seed);
            for _ in 0..8 {
                let a = next() as i64 % 2_000_000_000;
                let b = next() as i64 % 2_000_000_000;
                let (m1, m2) = if a < b { (a, b) } else { (b, a) };
                if m1 == m2 {
                    continue;
                }
                let s1 = solver.solve(m1).unwrap();
                let s2 = solver.solve(m2).unwrap();
                for c in 0..g.n_cells() {
                    assert!(
                        !s2.emax.contains(c) || s1.emin.contains(c),
                        "seed {seed}: maximal minimizer at {m2} escapes minimal minimizer at {m1}"
                    );
                }
            }
        }
    }

    #[test]
    fn single_and_double_flips_never_beat_the_reported_optimum() {
        let g = GridSpec::new(1, 0.2, 16, 12, [-1.6, 0.0]).unwrap();
        for seed in 0..4 {
            let inst = random_instance(g, 40 + seed);
            let solver = solver_for(&inst);
            let sol = solver.solve(17).unwrap();
            let mut next = xorshift(7000 + seed);
            for _ in 0..500 {
                let mut e = sol.emin.clone();
                e.toggle((next() % g.n_cells() as u64) as usize);
                if next() % 2 == 0 {
                    e.toggle((next() % g.n_cells() as u64) as usize);
                }
                assert!(
                    solver.energy_quanta(&e, 17) >= sol.objective,
                    "seed {seed}: a flipped set beats the reported optimum"
                );
            }
        }
    }

    #[test]
    fn repeated_solves_are_bitwise_identical() {
        let g = GridSpec::new(1, 0.25, 9, 7, [0.0, 0.0]).unwrap();
        let inst = random_instance(g, 77);
        let solver = solver_for(&inst);
        let a = solver.solve(-123456).unwrap();
        let b = solver.solve(-123456).unwrap();
        assert_eq!(a.emin, b.emin);
        assert_eq!(a.emax, b.emax);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn band_restricted_solve_matches_the_global_solve() {
        let g = GridSpec::new(1, 0.25, 10, 8, [0.0, 0.0]).unwrap();
        for seed in 0..8 {
            let inst = random_instance(g, 500 + seed);
            let solver = solver_for(&inst);
            let (m1, m, m2) = (-3_000_000_000i64, 1_000_000_000, 5_000_000_000);
            let lo = solver.solve(m1).unwrap();
            let hi = solver.solve(m2).unwrap();
            // Between the brackets, every minimizer contains emax(m2) and
            // stays inside emin(m1); only that band needs re-solving.
            let band: Vec<u32> = (0..g.n_cells() as u32)
                .filter(|&c| lo.emin.contains(c as usize) && !hi.emax.contains(c as usize))
                .collect();
            let banded = solver.solve_in_band(m, &hi.emax, &band).unwrap();
            let global = solver.solve(m).unwrap();
            assert_eq!(banded.emin, global.emin, "seed {seed}");
            assert_eq!(banded.emax, global.emax, "seed {seed}");
            assert_eq!(banded.objective, global.objective, "seed {seed}");
        }
    }

    #[test]
    fn volume_is_monotone_along_a_multiplier_sweep() {
        let g = GridSpec::new(1, 0.25, 8, 8, [0.0, 0.0]).unwrap();
        let inst = random_instance(g, 4242);
        let solver = solver_for(&inst);
        let mut last = usize::MAX;
        for k in -10..=10 {
            let sol = solver.solve(k * 300_000_000).unwrap();
            let cells = sol.emin.count();
            assert!(cells <= last, "minimal minimizer grew as the multiplier grew");
            last = cells;
        }
    }
}
