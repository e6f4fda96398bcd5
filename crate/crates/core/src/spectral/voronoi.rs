//! Voronoi quadrature weights on a rectangular aperture.
//!
//! Each cell is the aperture box clipped by the perpendicular bisectors to the
//! other points. Cells that touch the box edge are truncated by it, so they
//! take the largest area among their Voronoi neighbours instead.

use crate::error::{Error, Result};

const BOX_EDGE: isize = -1;

#[derive(Debug, Clone, Copy)]
struct Vertex {
    x: f64,
    y: f64,
    /// Source of the edge starting at this vertex: a point index or [`BOX_EDGE`].
    tag: isize,
}

/// Keeps the part of `poly` closer to `p` than to `q`; the new edge is tagged `j`.
fn clip(poly: &[Vertex], p: [f64; 2], q: [f64; 2], j: isize) -> Vec<Vertex> {
    let n = [q[0] - p[0], q[1] - p[1]];
    let c = 0.5 * (n[0] * (p[0] + q[0]) + n[1] * (p[1] + q[1]));
    let side = |v: &Vertex| n[0] * v.x + n[1] * v.y - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        let cut = || {
            let t = sa / (sa - sb);
            (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        };
        match (sa <= 0.0, sb <= 0.0) {
            (true, true) => out.push(a),
            (true, false) => {
                out.push(a);
                let (x, y) = cut();
                out.push(Vertex { x, y, tag: j });
            }
            (false, true) => {
                let (x, y) = cut();
                out.push(Vertex { x, y, tag: a.tag });
            }
            (false, false) => {}
        }
    }
    out
}

fn area(poly: &[Vertex]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s.abs()
}

/// Uniform bucket grid over the box for ring-wise neighbour search.
struct Buckets {
    lo: [f64; 2],
    h: f64,
    n: [usize; 2],
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(pts: &[[f64; 2]], lo: [f64; 2], hi: [f64; 2]) -> Self {
        let w = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        let h = (w * w / pts.len() as f64).sqrt().max(w * 1e-6);
        let n = [
            (((hi[0] - lo[0]) / h).ceil() as usize).max(1),
            (((hi[1] - lo[1]) / h).ceil() as usize).max(1),
        ];
        let mut cells = vec![Vec::new(); n[0] * n[1]];
        let mut b = Buckets { lo, h, n, cells: Vec::new() };
        for (i, p) in pts.iter().enumerate() {
            let (cx, cy) = b.cell_of(p);
            cells[cy * n[0] + cx].push(i);
        }
        b.cells = cells;
        b
    }

    fn cell_of(&self, p: &[f64; 2]) -> (usize, usize) {
        let c = |a: usize| (((p[a] - self.lo[a]) / self.h).floor().max(0.0) as usize).min(self.n[a] - 1);
        (c(0), c(1))
    }

    /// Indices in buckets at Chebyshev ring distance `r` from `(cx, cy)`.
    fn ring(&self, cx: usize, cy: usize, r: usize, out: &mut Vec<usize>) {
        let (cx, cy, r) = (cx as isize, cy as isize, r as isize);
        for dy in -r..=r {
            for dx in -r..=r {
                if dx.abs().max(dy.abs()) != r {
                    continue;
                }
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= self.n[0] as isize || y >= self.n[1] as isize {
                    continue;
                }
                out.extend_from_slice(&self.cells[y as usize * self.n[0] + x as usize]);
            }
        }
    }
}

/// Clipped Voronoi cell of every point: `(area, touches_box, neighbours)`.
fn cells(pts: &[[f64; 2]], lo: [f64; 2], hi: [f64; 2]) -> Vec<(f64, bool, Vec<usize>)> {
    let buckets = Buckets::new(pts, lo, hi);
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let max_ring = buckets.n[0].max(buckets.n[1]);
    let mut out = Vec::with_capacity(pts.len());
    let mut cand = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let mut poly = vec![
            Vertex { x: lo[0], y: lo[1], tag: BOX_EDGE },
            Vertex { x: hi[0], y: lo[1], tag: BOX_EDGE },
            Vertex { x: hi[0], y: hi[1], tag: BOX_EDGE },
            Vertex { x: lo[0], y: hi[1], tag: BOX_EDGE },
        ];
        let (cx, cy) = buckets.cell_of(p);
        for r in 0..=max_ring {
            // every point beyond ring r is at least r·h away
            let reach = poly
                .iter()
                .map(|v| (v.x - p[0]).hypot(v.y - p[1]))
                .fold(0.0, f64::max);
            if r >= 1 && (r - 1) as f64 * buckets.h > 2.0 * reach {
                break;
            }
            cand.clear();
            buckets.ring(cx, cy, r, &mut cand);
            cand.sort_unstable();
            for &j in &cand {
                if j != i {
                    poly = clip(&poly, *p, pts[j], j as isize);
                }
            }
        }
        let min_edge = 1e-12 * scale;
        let mut touches = false;
        let mut nb = Vec::new();
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            if (b.x - a.x).hypot(b.y - a.y) <= min_edge {
                continue;
            }
            if a.tag == BOX_EDGE {
                touches = true;
            } else {
                nb.push(a.tag as usize);
            }
        }
        nb.sort_unstable();
        nb.dedup();
        out.push((area(&poly), touches, nb));
    }
    out
}

/// The boundary rule shared with the raster oracle in the tests.
pub(crate) fn apply_boundary_rule(areas: &[f64], touches: &[bool], neighbours: &[Vec<usize>]) -> Vec<f64> {
    (0..areas.len())
        .map(|i| {
            if touches[i] && !neighbours[i].is_empty() {
                neighbours[i].iter().map(|&j| areas[j]).fold(0.0, f64::max)
            } else {
                areas[i]
            }
        })
        .collect()
}

/// Quadrature weight (m²) per point from its Voronoi cell in the `(x, y)`
/// plane, clipped to `aperture` (`(lo, hi)` corners; default: bounding box of
/// the points).
pub fn voronoi_quadrature_weights(
    positions_m: &[[f64; 3]],
    aperture: Option<([f64; 2], [f64; 2])>,
) -> Result<Vec<f64>> {
    if positions_m.is_empty() {
        return Err(Error::invalid("voronoi weights need at least one point"));
    }
    let pts: Vec<[f64; 2]> = positions_m.iter().map(|p| [p[0], p[1]]).collect();
    if pts.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("positions must be finite"));
    }
    let (lo, hi) = aperture.unwrap_or_else(|| super::bounding_box(positions_m));
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::domain(
            "aperture box is degenerate; pass an explicit aperture for collinear or single points",
        ));
    }
    if pts.iter().any(|p| p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1]) {
        return Err(Error::domain("points must lie inside the aperture box"));
    }
    let mut sorted = pts.clone();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate observation points"));
    }
    let c = cells(&pts, lo, hi);
    let areas: Vec<f64> = c.iter().map(|c| c.0).collect();
    let touches: Vec<bool> = c.iter().map(|c| c.1).collect();
    let nb: Vec<Vec<usize>> = c.into_iter().map(|c| c.2).collect();
    Ok(apply_boundary_rule(&areas, &touches, &nb))
}
