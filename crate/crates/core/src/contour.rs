//! Sub-cell interface geometry for planar grids: marching-squares contours
//! over the cell-center lattice, curvature from total-least-squares tangent
//! fits, and contact angles extrapolated to the supporting plane.
//!
//! Conventions: contours are directed with the occupied phase on the LEFT,
//! so convex droplets are walked counter-clockwise and carry positive
//! curvature. Open chains occur where the interface leaves the lattice —
//! for a droplet away from the walls, exactly at the contact points next to
//! the supporting plane `z = 0` (the lattice of cell centers starts at
//! `z = dx/2`).

use crate::domain::IndicatorSet;
use std::f64::consts::PI;

/// One directed polyline of interface vertices (edge midpoints).
pub(crate) struct Chain {
    /// Vertex positions `(x, z)` in walk order.
    pub points: Vec<[f64; 2]>,
    /// Cumulative arclength at each vertex (zero at the first).
    pub cum: Vec<f64>,
    pub closed: bool,
}

impl Chain {
    /// Total arclength, including the closing segment of a loop.
    pub fn length(&self) -> f64 {
        let n = self.points.len();
        let open = self.cum[n - 1];
        if self.closed {
            open + dist_len(self.points[n - 1], self.points[0])
        } else {
            open
        }
    }
}

pub(crate) struct Contour {
    pub chains: Vec<Chain>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [b[0] - a[0], b[1] - a[1]]
}

fn dist_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    let v = dist(a, b);
    v[0].hypot(v[1])
}

/// Extracts the directed interface polylines of a planar set.
pub(crate) fn planar_contour(e: &IndicatorSet) -> Contour {
    let g = *e.grid();
    debug_assert_eq!(g.d(), 1, "contours are defined on planar grids");
    let (nx, nz, dx) = (g.n_horiz(), g.n_vert(), g.dx());
    let x0 = g.horiz_min()[0];
    // Vertex ids: midpoints of lattice edges between cell centers.
    // Horizontal edge (i, j) joins centers (i, j) and (i+1, j).
    // Vertical edge (i, j) joins centers (i, j) and (i, j+1).
    let n_h = (nx - 1) * nz;
    let n_v = nx * (nz - 1);
    let h_id = |i: usize, j: usize| j * (nx - 1) + i;
    let v_id = |i: usize, j: usize| n_h + j * nx + i;
    let position = |id: usize| -> [f64; 2] {
        if id < n_h {
            let (i, j) = (id % (nx - 1), id / (nx - 1));
            [x0 + (i as f64 + 1.0) * dx, (j as f64 + 0.5) * dx]
        } else {
            let r = id - n_h;
            let (i, j) = (r % nx, r / nx);
            [x0 + (i as f64 + 0.5) * dx, (j as f64 + 1.0) * dx]
        }
    };

    let mut next = vec![usize::MAX; n_h + n_v];
    let mut indeg = vec![0u8; n_h + n_v];
    let inside = |i: usize, j: usize| e.contains(g.index(i, 0, j));
    for j in 0..nz - 1 {
        for i in 0..nx - 1 {
            let mut case = 0usize;
            if inside(i, j) {
                case |= 1; // bottom-left
            }
            if inside(i + 1, j) {
                case |= 2; // bottom-right
            }
            if inside(i + 1, j + 1) {
                case |= 4; // top-right
            }
            if inside(i, j + 1) {
                case |= 8; // top-left
            }
            let b = h_id(i, j);
            let t = h_id(i, j + 1);
            let l = v_id(i, j);
            let r = v_id(i + 1, j);
            // Directed segments with the occupied corners on the left.
            let segments: &[(usize, usize)] = match case {
                1 => &[(b, l)],
                2 => &[(r, b)],
                3 => &[(r, l)],
                4 => &[(t, r)],
                5 => &[(b, l), (t, r)],
                6 => &[(t, b)],
                7 => &[(t, l)],
                8 => &[(l, t)],
                9 => &[(b, t)],
                10 => &[(r, b), (l, t)],
                11 => &[(r, t)],
                12 => &[(l, r)],
                13 => &[(b, r)],
                14 => &[(l, b)],
                _ => &[],
            };
            for &(from, to) in segments {
                debug_assert_eq!(next[from], usize::MAX, "vertex already has an outgoing segment");
                next[from] = to;
                indeg[to] += 1;
            }
        }
    }

    let mut visited = vec![false; n_h + n_v];
    let mut chains = Vec::new();
    // The segment graph has in- and out-degree at most one, so it decomposes
    // into simple paths and simple loops; a single visited check walks both.
    let walk = |start: usize, closed: bool, visited: &mut Vec<bool>| -> Chain {
        let mut points = Vec::new();
        let mut cum = Vec::new();
        let mut s = 0.0;
        let mut at = start;
        loop {
            if let Some(prev) = points.last() {
                s += dist_len(*prev, position(at));
            }
            points.push(position(at));
            cum.push(s);
            visited[at] = true;
            let n = next[at];
            if n == usize::MAX || visited[n] {
                break;
            }
            at = n;
        }
        Chain { points, cum, closed }
    };
    // Open chains start at vertices with a way out and no way in.
    for id in 0..n_h + n_v {
        if next[id] != usize::MAX && indeg[id] == 0 && !visited[id] {
            chains.push(walk(id, false, &mut visited));
        }
    }
    // Whatever remains consists of loops.
    for id in 0..n_h + n_v {
        if next[id] != usize::MAX && !visited[id] {
            chains.push(walk(id, true, &mut visited));
        }
    }
    Contour { chains }
}

/// Wraps an angle difference into `(-pi, pi]`.
fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Orientation of the best total-least-squares line through `pts`, picked
/// from the two antipodal choices by the secant direction `sec`.
fn tls_angle(pts: &[[f64; 2]], sec: [f64; 2]) -> f64 {
    let n = pts.len() as f64;
    let (mut cx, mut cz) = (0.0, 0.0);
    for p in pts {
        cx += p[0];
        cz += p[1];
    }
    cx /= n;
    cz /= n;
    let (mut sxx, mut sxz, mut szz) = (0.0, 0.0, 0.0);
    for p in pts {
        let (ux, uz) = (p[0] - cx, p[1] - cz);
        sxx += ux * ux;
        sxz += ux * uz;
        szz += uz * uz;
    }
    let theta = 0.5 * (2.0 * sxz).atan2(sxx - szz);
    if theta.cos() * sec[0] + theta.sin() * sec[1] < 0.0 {
        wrap_angle(theta + PI)
    } else {
        theta
    }
}

/// Curvature at every vertex of a chain, from the turning rate between the
/// backward- and forward-window tangent directions. `None` where the window
/// would leave an open chain, or when the chain is too short to measure.
pub(crate) fn curvatures(chain: &Chain, dx: f64) -> Vec<Option<f64>> {
    let n = chain.points.len();
    let total = chain.length();
    if n < 5 || total < 24.0 * dx {
        return vec![None; n];
    }
    let w = (1.7 * (dx * total).sqrt()).clamp(6.0 * dx, total / 4.0);
    let mut out = vec![None; n];
    for (k, slot) in out.iter_mut().enumerate() {
        let s_k = chain.cum[k];
        if !chain.closed && (s_k < w || total - s_k < w) {
            continue;
        }
        // Backward window: points within arclength w behind k (k included),
        // in unwrapped arclength coordinates centered on the walk.
        let mut minus: Vec<([f64; 2], f64)> = vec![(chain.points[k], s_k)];
        {
            let mut j = k;
            let mut s = s_k;
            loop {
                if j == 0 {
                    if !chain.closed {
                        break;
                    }
                    s -= dist_len(chain.points[0], chain.points[n - 1]);
                    j = n - 1;
                } else {
                    s -= chain.cum[j] - chain.cum[j - 1];
                    j -= 1;
                }
                if s_k - s > w || j == k {
                    break;
                }
                minus.push((chain.points[j], s));
            }
        }
        let mut plus: Vec<([f64; 2], f64)> = vec![(chain.points[k], s_k)];
        {
            let mut j = k;
            let mut s = s_k;
            loop {
                if j == n - 1 {
                    if !chain.closed {
                        break;
                    }
                    s += dist_len(chain.points[n - 1], chain.points[0]);
                    j = 0;
                } else {
                    s += chain.cum[j + 1] - chain.cum[j];
                    j += 1;
                }
                if s - s_k > w || j == k {
                    break;
                }
                plus.push((chain.points[j], s));
            }
        }
        if minus.len() < 3 || plus.len() < 3 {
            continue;
        }
        let sec_minus = dist(minus[minus.len() - 1].0, chain.points[k]);
        let sec_plus = dist(chain.points[k], plus[plus.len() - 1].0);
        let pts_minus: Vec<[f64; 2]> = minus.iter().map(|&(p, _)| p).collect();
        let pts_plus: Vec<[f64; 2]> = plus.iter().map(|&(p, _)| p).collect();
        let theta_minus = tls_angle(&pts_minus, sec_minus);
        let theta_plus = tls_angle(&pts_plus, sec_plus);
        // Turning angle over the chord between the two window centroids.
        // The centroids average out the pixel staircase, and the chord
        // avoids its systematic arclength inflation. On a circle the
        // centroid of an arc of half-angle a sits inside it by sin(a)/a,
        // so the centroid chord is short by the same factor; the extra
        // sinc factor makes 2 sin^2(Δθ/2) / ((Δθ/2) chord) exact there
        // while reducing to Δθ / chord on straight runs.
        let centroid = |pts: &[[f64; 2]]| {
            let n = pts.len() as f64;
            [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let chord = dist_len(centroid(&pts_minus), centroid(&pts_plus));
        if chord > 0.5 * dx {
            let dtheta = wrap_angle(theta_plus - theta_minus);
            let half = 0.5 * dtheta;
            *slot = Some(if half.abs() < 1e-9 {
                dtheta / chord
            } else {
                2.0 * half.sin() * half.sin() / (half * chord)
            });
        }
    }
    out
}

/// Vertical component of the outward unit normal at each contact point,
/// keyed by the endpoint position — one entry per open-chain end that
/// reaches the supporting plane.
///
/// The chain end is fit by a quadratic in arclength over an `8 dx` window
/// and extrapolated to `z = 0` (vertices live at `z >= dx/2`); the normal is
/// the walk tangent rotated to point out of the droplet.
pub(crate) fn contact_cosines(contour: &Contour, dx: f64) -> Vec<([f64; 2], f64)> {
    let mut out = Vec::new();
    for chain in &contour.chains {
        if chain.closed || chain.points.len() < 4 {
            continue;
        }
        let n = chain.points.len();
        let hs = curvatures(chain, dx);
        for &(endpoint, walk_sign) in &[(0usize, 1.0f64), (n - 1, -1.0f64)] {
            if chain.points[endpoint][1] > 0.75 * dx {
                continue; // this end does not sit on the supporting plane
            }
            let s_end = chain.cum[endpoint];
            // The admissible coefficient band keeps the interface within
            // 30 degrees of vertical at the wall, so near the contact the
            // curve is a graph x(z). The vertex heights are exact lattice
            // values (half-integer multiples of dx), so regressing x on z
            // puts all the pixel noise into the ordinate where least
            // squares averages it out. The arclength filter keeps the
            // window on this end of the chain.
            let samples: Vec<(f64, f64)> = (0..n)
                .filter(|&j| (chain.cum[j] - s_end).abs() <= 16.0 * dx)
                .map(|j| (chain.points[j][1], chain.points[j][0]))
                .filter(|&(z, _)| z <= 8.0 * dx)
                .collect();
            if samples.len() < 4 {
                continue;
            }
            // A straight line is the minimum-variance slope estimate; it
            // measures the tangent at the window's height centroid, not at
            // the wall (a quadratic could extrapolate to the wall, but the
            // derivative of an endpoint-evaluated quadratic amplifies the
            // half-cell staircase noise several-fold).
            let m = samples.len() as f64;
            let zc = samples.iter().map(|&(z, _)| z).sum::<f64>() / m;
            let xc = samples.iter().map(|&(_, x)| x).sum::<f64>() / m;
            let (mut szz, mut szx) = (0.0, 0.0);
            for &(z, x) in &samples {
                szz += (z - zc) * (z - zc);
                szx += (z - zc) * (x - xc);
            }
            if szz <= 0.0 {
                continue;
            }
            let slope = szx / szz;
            // Walk tangent at the centroid: slope horizontally, one unit
            // vertically (up at a start endpoint, down at a final one).
            let theta_c = {
                let (tx, tz) = (walk_sign * slope, walk_sign);
                tz.atan2(tx)
            };
            // Rotate the tangent from the centroid back to the wall along
            // the curve: the turning rate is the chain's own curvature,
            // taken from the nearest vertex where it is measurable.
            let h_near = (0..n)
                .min_by(|&a, &b| {
                    let da = (chain.cum[a] - s_end).abs() + if hs[a].is_none() { 1e9 } else { 0.0 };
                    let db = (chain.cum[b] - s_end).abs() + if hs[b].is_none() { 1e9 } else { 0.0 };
                    da.total_cmp(&db)
                })
                .and_then(|j| hs[j])
                .unwrap_or(0.0);
            let arc_back = zc * slope.hypot(1.0);
            // Walking from the wall to the centroid advances the arclength
            // at a start endpoint and rewinds it at a final one.
            let theta_wall = theta_c - walk_sign * h_near * arc_back;
            // Outward normal = walk tangent rotated -90 degrees, so its
            // vertical component is minus the tangent's horizontal one.
            out.push((chain.points[endpoint], -theta_wall.cos()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GridSpec;
    use crate::shapes::{rasterize, rasterize_union, Shape};

    fn circle_set(radius: f64, dx: f64) -> IndicatorSet {
        let n = (2.0 / dx).round() as usize;
        let nv = (1.5 / dx).round() as usize;
        let g = GridSpec::new(1, dx, n, nv, [-1.0, 0.0]).unwrap();
        rasterize(&Shape::Ball { center: [0.0, 0.0, 0.75], radius }, g).unwrap()
    }

    #[test]
    fn circle_gives_one_closed_chain_of_the_right_length() {
        let e = circle_set(0.5, 1.0 / 128.0);
        let contour = planar_contour(&e);
        assert_eq!(contour.chains.len(), 1);
        let chain = &contour.chains[0];
        assert!(chain.closed);
        // The pixel staircase systematically inflates the polyline length
        // by a few percent; positions are unbiased but arclength is not.
        let expected = 2.0 * PI * 0.5;
        assert!(
            (chain.length() - expected).abs() / expected < 0.08,
            "length {} vs {}",
            chain.length(),
            expected
        );
    }

    #[test]
    fn circle_curvature_is_one_over_radius() {
        for &radius in &[0.3, 0.5] {
            let dx = 1.0 / 128.0;
            let e = circle_set(radius, dx);
            let contour = planar_contour(&e);
            let chain = &contour.chains[0];
            let hs = curvatures(chain, dx);
            let mut sq = 0.0;
            let mut count = 0usize;
            let mut turning = 0.0;
            let n = chain.points.len();
            for (k, h) in hs.iter().enumerate() {
                let h = h.expect("closed chains are measurable everywhere");
                let rel = h * radius - 1.0;
                sq += rel * rel;
                count += 1;
                let prev = if k == 0 { n - 1 } else { k - 1 };
                let next = if k == n - 1 { 0 } else { k + 1 };
                let ds = 0.5
                    * (dist_len(chain.points[prev], chain.points[k])
                        + dist_len(chain.points[k], chain.points[next]));
                turning += h * ds;
            }
            assert!(count > 20, "too few measurable vertices");
            let rms = (sq / count as f64).sqrt();
            assert!(rms < 0.05, "radius {radius}: curvature rms error {rms}");
            // The arclength weights come from the staircase polyline, which
            // overstates the smooth circumference by about five percent, so
            // the full revolution is recovered only up to that inflation.
            assert!(
                (turning / (2.0 * PI) - 1.0).abs() < 0.08,
                "radius {radius}: total turning {turning} should be one full revolution"
            );
        }
    }

    #[test]
    fn straight_sides_have_vanishing_curvature() {
        let dx = 1.0 / 64.0;
        let g = GridSpec::new(1, dx, 128, 96, [-1.0, 0.0]).unwrap();
        let e = rasterize(
            &Shape::Box { min: [-0.5, 0.0, 0.25], max: [0.5, 0.0, 1.25] },
            g,
        )
        .unwrap();
        let contour = planar_contour(&e);
        assert_eq!(contour.chains.len(), 1);
        let chain = &contour.chains[0];
        assert!(chain.closed);
        let hs = curvatures(chain, dx);
        // Vertices whose both windows stay on one side measure exactly zero;
        // windows reaching around a corner measure positive turning.
        let flat = hs.iter().flatten().filter(|h| h.abs() < 1e-9).count();
        assert!(flat >= 20, "only {flat} vertices measured flat");
        assert!(hs.iter().flatten().all(|h| h.is_finite()));
    }

    #[test]
    fn droplet_chain_is_open_with_ends_on_the_plane() {
        let dx = 1.0 / 128.0;
        let g = GridSpec::new(1, dx, 192, 64, [-0.75, 0.0]).unwrap();
        let e = rasterize(
            &Shape::Cap { base_radius: 0.433, cos_contact: 0.5 },
            g,
        )
        .unwrap();
        let contour = planar_contour(&e);
        assert_eq!(contour.chains.len(), 1);
        let chain = &contour.chains[0];
        assert!(!chain.closed);
        assert_eq!(chain.points[0][1], 0.5 * dx);
        assert_eq!(chain.points[chain.points.len() - 1][1], 0.5 * dx);
    }

    #[test]
    fn contact_cosines_recover_the_cap_inclination() {
        let dx = 1.0 / 128.0;
        let g = GridSpec::new(1, dx, 192, 64, [-0.75, 0.0]).unwrap();
        // A vertical contact carries no staircase jumps inside the fit
        // window, so its slope rests on pure half-cell quantization and
        // deserves a wider tolerance than an inclined one.
        for &(cos_contact, tol) in &[(0.0, 0.12), (0.5, 0.05)] {
            let e = rasterize(
                &Shape::Cap { base_radius: 0.4, cos_contact },
                g,
            )
            .unwrap();
            let contour = planar_contour(&e);
            let cosines = contact_cosines(&contour, dx);
            assert_eq!(cosines.len(), 2, "a droplet has two contact points");
            for (p, c) in cosines {
                assert!(
                    (p[0].abs() - 0.4).abs() < 0.05,
                    "contact sits at the base edge, got x = {}",
                    p[0]
                );
                assert!(
                    (c - cos_contact).abs() < tol,
                    "measured {c} vs prescribed {cos_contact}"
                );
            }
        }
    }

    #[test]
    fn disjoint_blobs_give_disjoint_chains() {
        let dx = 1.0 / 64.0;
        let g = GridSpec::new(1, dx, 128, 64, [-1.0, 0.0]).unwrap();
        let e = rasterize_union(
            &[
                Shape::Ball { center: [-0.4, 0.0, 0.4], radius: 0.2 },
                Shape::Ball { center: [0.45, 0.0, 0.5], radius: 0.25 },
            ],
            g,
        )
        .unwrap();
        let contour = planar_contour(&e);
        assert_eq!(contour.chains.len(), 2);
        assert!(contour.chains.iter().all(|c| c.closed));
    }
}

