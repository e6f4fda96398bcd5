//! Separable fixed-stencil Lagrange interpolation from a rectilinear
//! observation grid onto a regular one.

use num_complex::Complex64;

use super::lattice::detect_rectilinear;
use crate::error::{Error, Result};
use crate::scenario::{make_regular_grid, ApertureSpec, ObservationSet};

pub const DEFAULT_STENCIL: usize = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct Regridded {
    pub observations: ObservationSet,
    /// Target points that fell outside the input node range on either axis.
    pub extrapolated: usize,
}

/// Window start and Lagrange weights of the `s` nodes nearest to `x`.
fn stencil(nodes: &[f64], x: f64, s: usize) -> (usize, Vec<f64>) {
    let n = nodes.len();
    let s = s.min(n);
    let nearest = nodes
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let start = nearest.saturating_sub(s / 2).min(n - s);
    let xs = &nodes[start..start + s];
    let w = (0..s)
        .map(|i| {
            (0..s)
                .filter(|&j| j != i)
                .map(|j| (x - xs[j]) / (xs[i] - xs[j]))
                .product()
        })
        .collect();
    (start, w)
}

/// Interpolates every probe and frequency channel onto the regular grid of
/// `target`. Output points keep the input plane height; weights are the
/// uniform regular-grid weights.
pub fn lagrange_regrid(obs: &ObservationSet, target: &ApertureSpec, stencil_size: usize) -> Result<Regridded> {
    obs.validate()?;
    if stencil_size == 0 || stencil_size.is_multiple_of(2) {
        return Err(Error::domain("stencil size must be odd"));
    }
    let rect = detect_rectilinear(&obs.positions_m)
        .ok_or_else(|| Error::invalid("lagrange regridding needs observations on a planar tensor grid"))?;
    let grid = make_regular_grid(target)?;
    let (nx, ny) = (rect.xs.len(), rect.ys.len());
    let span = |v: &[f64]| (v[0], v[v.len() - 1]);
    let (x0, x1) = span(&rect.xs);
    let (y0, y1) = span(&rect.ys);
    let margin = 1e-9 * (x1 - x0).abs().max((y1 - y0).abs()).max(f64::MIN_POSITIVE);
    let mut extrapolated = 0;
    let mut stencils = Vec::with_capacity(grid.positions_m.len());
    for p in &grid.positions_m {
        let (x, y) = (p[0], p[1]);
        if x < x0 - margin || x > x1 + margin || y < y0 - margin || y > y1 + margin {
            extrapolated += 1;
        }
        stencils.push((stencil(&rect.xs, x, stencil_size), stencil(&rect.ys, y, stencil_size)));
    }
    let samples = obs
        .samples
        .iter()
        .map(|per_f| {
            per_f
                .iter()
                .map(|vals| {
                    stencils
                        .iter()
                        .map(|((sx, wx), (sy, wy))| {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for (j, wyj) in wy.iter().enumerate() {
                                let row = (sy + j) * nx;
                                let mut r = Complex64::new(0.0, 0.0);
                                for (i, wxi) in wx.iter().enumerate() {
                                    r += vals[rect.index[row + sx + i]] * *wxi;
                                }
                                acc += r * *wyj;
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    debug_assert_eq!(rect.index.len(), nx * ny);
    let positions_m = grid.positions_m.iter().map(|p| [p[0], p[1], rect.z]).collect();
    Ok(Regridded {
        observations: ObservationSet {
            medium: obs.medium,
            frequencies_hz: obs.frequencies_hz.clone(),
            probes: obs.probes.clone(),
            positions_m,
            weights_m2: grid.weights_m2,
            samples,
        },
        extrapolated,
    })
}
