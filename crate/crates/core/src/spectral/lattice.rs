//! Detection of rectilinear and regular observation lattices.

use crate::error::{Error, Result};

/// Tensor-product node set `xs × ys` at a single height, points ordered x fastest
/// in `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectilinear {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub z: f64,
    /// `index[iy·nx + ix]` = position of node `(xs[ix], ys[iy])` in the input.
    pub index: Vec<usize>,
}

impl Rectilinear {
    /// Uniform spacing of `coords`, if any.
    fn spacing(coords: &[f64], tol: f64) -> Option<f64> {
        if coords.len() < 2 {
            return None;
        }
        let d = (coords[coords.len() - 1] - coords[0]) / (coords.len() - 1) as f64;
        coords
            .windows(2)
            .all(|w| ((w[1] - w[0]) - d).abs() <= tol * d.abs())
            .then_some(d)
    }

    pub fn dx(&self) -> Option<f64> {
        Self::spacing(&self.xs, 1e-9)
    }

    pub fn dy(&self) -> Option<f64> {
        Self::spacing(&self.ys, 1e-9)
    }
}

fn unique_sorted(values: impl Iterator<Item = f64>, tol: f64) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let mut out: Vec<f64> = Vec::new();
    for x in v {
        match out.last() {
            Some(&l) if (x - l).abs() <= tol => {}
            _ => out.push(x),
        }
    }
    out
}

fn locate(sorted: &[f64], x: f64, tol: f64) -> Option<usize> {
    let i = sorted.partition_point(|&v| v < x - tol);
    (i < sorted.len() && (sorted[i] - x).abs() <= tol).then_some(i)
}

/// Recognizes a complete planar tensor grid; `None` otherwise.
pub fn detect_rectilinear(positions: &[[f64; 3]]) -> Option<Rectilinear> {
    if positions.is_empty() {
        return None;
    }
    let scale = positions
        .iter()
        .flat_map(|p| [p[0].abs(), p[1].abs(), p[2].abs()])
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-9 * scale;
    let z = positions[0][2];
    if positions.iter().any(|p| (p[2] - z).abs() > tol) {
        return None;
    }
    let xs = unique_sorted(positions.iter().map(|p| p[0]), tol);
    let ys = unique_sorted(positions.iter().map(|p| p[1]), tol);
    if xs.len() * ys.len() != positions.len() {
        return None;
    }
    let mut index = vec![usize::MAX; positions.len()];
    for (m, p) in positions.iter().enumerate() {
        let ix = locate(&xs, p[0], tol)?;
        let iy = locate(&ys, p[1], tol)?;
        let slot = &mut index[iy * xs.len() + ix];
        if *slot != usize::MAX {
            return None;
        }
        *slot = m;
    }
    Some(Rectilinear { xs, ys, z, index })
}

/// A uniform planar lattice: origin, spacing and counts per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularLattice {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub counts: [usize; 2],
    pub z: f64,
    pub index: Vec<usize>,
}

/// Like [`detect_rectilinear`] but also requires uniform spacing on both axes
/// (a single node on an axis takes `fallback_spacing`).
pub fn detect_regular(positions: &[[f64; 3]], fallback_spacing: [f64; 2]) -> Result<RegularLattice> {
    let rect = detect_rectilinear(positions)
        .ok_or_else(|| Error::invalid("observations are not on a planar tensor grid; regrid first or use the direct method"))?;
    let sx = if rect.xs.len() == 1 { Some(fallback_spacing[0]) } else { rect.dx() };
    let sy = if rect.ys.len() == 1 { Some(fallback_spacing[1]) } else { rect.dy() };
    let (Some(sx), Some(sy)) = (sx, sy) else {
        return Err(Error::invalid("observation lattice is not uniformly spaced; regrid first or use the direct method"));
    };
    Ok(RegularLattice {
        origin: [rect.xs[0], rect.ys[0]],
        spacing: [sx, sy],
        counts: [rect.xs.len(), rect.ys.len()],
        z: rect.z,
        index: rect.index,
    })
}
