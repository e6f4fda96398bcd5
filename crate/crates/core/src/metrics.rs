//! Image-quality measures: power ratio, entropy, PSF cuts, sidelobe level,
//! resolution width and normalized RMS difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageVolume;
use crate::solver::ConvergenceHistory;
use crate::wave::VoxelGrid;

/// Axis-aligned box, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiBox {
    pub min_m: [f64; 3],
    pub max_m: [f64; 3],
}

impl RoiBox {
    pub fn around(center: [f64; 3], half_width: [f64; 3]) -> Self {
        RoiBox {
            min_m: std::array::from_fn(|a| center[a] - half_width[a]),
            max_m: std::array::from_fn(|a| center[a] + half_width[a]),
        }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| {
            let tol = 1e-12 * (self.max_m[a].abs() + self.min_m[a].abs()).max(1.0);
            p[a] >= self.min_m[a] - tol && p[a] <= self.max_m[a] + tol
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionOfInterest {
    Boxes { boxes: Vec<RoiBox> },
    Mask { mask: Vec<bool> },
}

impl RegionOfInterest {
    /// One box per point with the given half-widths.
    pub fn around_points(points: &[[f64; 3]], half_width: [f64; 3]) -> Self {
        RegionOfInterest::Boxes {
            boxes: points.iter().map(|&p| RoiBox::around(p, half_width)).collect(),
        }
    }

    pub fn mask(&self, grid: &VoxelGrid) -> Result<Vec<bool>> {
        match self {
            RegionOfInterest::Mask { mask } => {
                if mask.len() != grid.len() {
                    return Err(Error::mismatch("ROI mask", grid.len(), mask.len()));
                }
                Ok(mask.clone())
            }
            RegionOfInterest::Boxes { boxes } => Ok((0..grid.len())
                .map(|v| {
                    let p = grid.position(v);
                    boxes.iter().any(|b| b.contains([p.x, p.y, p.z]))
                })
                .collect()),
        }
    }
}

/// `η = P_outside / P_inside` on voxel intensities.
pub fn power_ratio(image: &ImageVolume, roi: &RegionOfInterest) -> Result<f64> {
    image.validate()?;
    let mask = roi.mask(&image.grid)?;
    if !mask.iter().any(|&m| m) {
        return Err(Error::invalid("region of interest does not intersect the voxel grid"));
    }
    let (mut inside, mut outside) = (0.0, 0.0);
    for (i, m) in image.intensity().into_iter().zip(mask) {
        if m {
            inside += i;
        } else {
            outside += i;
        }
    }
    if inside == 0.0 {
        return Err(Error::Numerical("no power inside the region of interest".into()));
    }
    Ok(outside / inside)
}

/// Shannon entropy (bits) of the normalized intensity distribution.
pub fn image_entropy(image: &ImageVolume) -> Result<f64> {
    image.validate()?;
    let int = image.intensity();
    let total: f64 = int.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("entropy of an all-zero image is undefined"));
    }
    let h: f64 = int
        .iter()
        .filter(|&&i| i > 0.0)
        .map(|&i| {
            let p = i / total;
            -p * p.log2()
        })
        .sum();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Peak-normalized magnitude profile along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsfCut {
    pub coords_m: Vec<f64>,
    pub values: Vec<f64>,
    pub peak_index: usize,
}

impl PsfCut {
    pub fn new(coords_m: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if coords_m.len() != values.len() || values.is_empty() {
            return Err(Error::mismatch("cut coordinates", values.len(), coords_m.len()));
        }
        let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::invalid("cut has no positive finite peak"));
        }
        let peak_index = values.iter().position(|&v| v == peak).unwrap_or(0);
        Ok(PsfCut {
            coords_m,
            values: values.into_iter().map(|v| v / peak).collect(),
            peak_index,
        })
    }

    fn spacing(&self) -> f64 {
        if self.coords_m.len() > 1 {
            (self.coords_m[self.coords_m.len() - 1] - self.coords_m[0]).abs() / (self.coords_m.len() - 1) as f64
        } else {
            0.0
        }
    }
}

/// Cut through the (unique) peak voxel.
pub fn psf_cut(image: &ImageVolume, axis: Axis) -> Result<PsfCut> {
    image.validate()?;
    let mag = image.magnitude();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::invalid("image is all zero"));
    }
    let at = mag.iter().position(|&m| m == peak).unwrap_or(0);
    if mag
        .iter()
        .enumerate()
        .any(|(i, &m)| i != at && m >= peak * (1.0 - 1e-9))
    {
        return Err(Error::invalid("ambiguous peak: several voxels within 1e-9 of the maximum"));
    }
    let g = &image.grid;
    let (ix, iy, iz) = g.unravel(at);
    let (coords, values): (Vec<f64>, Vec<f64>) = match axis {
        Axis::X => (0..g.counts[0]).map(|i| (g.coord(0, i), mag[g.index(i, iy, iz)])).unzip(),
        Axis::Y => (0..g.counts[1]).map(|i| (g.coord(1, i), mag[g.index(ix, i, iz)])).unzip(),
    };
    PsfCut::new(coords, values)
}

/// Highest local maximum outside the mainlobe in dB (magnitude), the mainlobe
/// ending at the first local minimum on each side of the peak. Returns
/// `-∞` when neither side has a local minimum.
pub fn sidelobe_level(cut: &PsfCut) -> f64 {
    let v = &cut.values;
    let p = cut.peak_index;
    let mut left = None;
    let mut j = p;
    while j > 0 {
        if v[j - 1] >= v[j] {
            left = Some(j);
            break;
        }
        j -= 1;
    }
    let mut right = None;
    let mut j = p;
    while j + 1 < v.len() {
        if v[j + 1] >= v[j] {
            right = Some(j);
            break;
        }
        j += 1;
    }
    if left.is_none() && right.is_none() {
        return f64::NEG_INFINITY;
    }
    let is_local_max = |i: usize| {
        let l = i == 0 || v[i] >= v[i - 1];
        let r = i + 1 == v.len() || v[i] >= v[i + 1];
        l && r
    };
    let mut best = 0.0f64;
    if let Some(l) = left {
        for i in 0..l {
            if is_local_max(i) {
                best = best.max(v[i]);
            }
        }
    }
    if let Some(r) = right {
        for i in r + 1..v.len() {
            if is_local_max(i) {
                best = best.max(v[i]);
            }
        }
    }
    if best > 0.0 {
        20.0 * best.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Full width where the normalized cut crosses `level`, interpolating
/// linearly between samples; never below one sample spacing.
pub fn width_at_level(cut: &PsfCut, level: f64) -> Result<f64> {
    let v = &cut.values;
    let x = &cut.coords_m;
    let p = cut.peak_index;
    let cross = |a: usize, b: usize| x[a] + (level - v[a]) / (v[b] - v[a]) * (x[b] - x[a]);
    let mut left = None;
    for j in (0..p).rev() {
        if v[j] < level {
            left = Some(cross(j, j + 1));
            break;
        }
    }
    let mut right = None;
    for j in p + 1..v.len() {
        if v[j] < level {
            right = Some(cross(j, j - 1));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok((r - l).abs().max(cut.spacing())),
        _ => Err(Error::invalid("mainlobe width exceeds the cut extent")),
    }
}

/// −3 dB (1/√2 magnitude) width.
pub fn resolution_width(cut: &PsfCut) -> Result<f64> {
    width_at_level(cut, std::f64::consts::FRAC_1_SQRT_2)
}

/// −6 dB (half magnitude) width.
pub fn resolution_width_6db(cut: &PsfCut) -> Result<f64> {
    width_at_level(cut, 0.5)
}

fn normalized_magnitude(image: &ImageVolume) -> Result<Vec<f64>> {
    let mag = image.magnitude();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::invalid("cannot normalize an all-zero image"));
    }
    Ok(mag.into_iter().map(|m| m / peak).collect())
}

/// RMS of the difference of peak-normalized magnitudes, optionally restricted
/// to a voxel mask.
pub fn nrmsd_masked(a: &ImageVolume, b: &ImageVolume, mask: Option<&[bool]>) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    if a.grid != b.grid {
        return Err(Error::invalid("images are on different voxel grids"));
    }
    let (na, nb) = (normalized_magnitude(a)?, normalized_magnitude(b)?);
    if let Some(m) = mask {
        if m.len() != na.len() {
            return Err(Error::mismatch("nrmsd mask", na.len(), m.len()));
        }
    }
    let (mut acc, mut count) = (0.0, 0usize);
    for i in 0..na.len() {
        if mask.is_none_or(|m| m[i]) {
            acc += (na[i] - nb[i]).powi(2);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("nrmsd mask selects no voxels"));
    }
    Ok((acc / count as f64).sqrt())
}

pub fn nrmsd(a: &ImageVolume, b: &ImageVolume) -> Result<f64> {
    nrmsd_masked(a, b, None)
}

/// Voxels within a quarter extent of the centre on both lateral axes.
pub fn central_half_mask(grid: &VoxelGrid) -> Vec<bool> {
    let [nx, ny, _] = grid.counts;
    (0..grid.len())
        .map(|v| {
            let (ix, iy, _) = grid.unravel(v);
            let inner = |i: usize, n: usize| 2 * (2 * i as i64 - (n as i64 - 1)).unsigned_abs() < n as u64;
            inner(ix, nx) && inner(iy, ny)
        })
        .collect()
}

/// Serialized metric bundle. Fields that do not apply are `null`; a missing
/// sidelobe (monotone cut) is reported as `null` in `sll_db_*`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub eta: Option<f64>,
    pub entropy_bits: Option<f64>,
    pub sll_db_x: Option<f64>,
    pub sll_db_y: Option<f64>,
    pub res_m_x: Option<f64>,
    pub res_m_y: Option<f64>,
    pub res6_m_x: Option<f64>,
    pub res6_m_y: Option<f64>,
    pub nrmsd: Option<f64>,
    pub wall_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solver_history: Vec<ConvergenceHistory>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Every metric computable for `image`; PSF-based entries are `None` when the
/// cut is ambiguous or too narrow.
pub fn compute_report(
    image: &ImageVolume,
    roi: Option<&RegionOfInterest>,
    reference: Option<&ImageVolume>,
) -> Result<MetricsReport> {
    let mut r = MetricsReport {
        entropy_bits: Some(image_entropy(image)?),
        ..Default::default()
    };
    if let Some(roi) = roi {
        r.eta = Some(power_ratio(image, roi)?);
    }
    if let Some(b) = reference {
        r.nrmsd = Some(nrmsd(image, b)?);
    }
    if let Ok(cx) = psf_cut(image, Axis::X) {
        r.sll_db_x = finite(sidelobe_level(&cx));
        r.res_m_x = resolution_width(&cx).ok();
        r.res6_m_x = resolution_width_6db(&cx).ok();
    }
    if let Ok(cy) = psf_cut(image, Axis::Y) {
        r.sll_db_y = finite(sidelobe_level(&cy));
        r.res_m_y = resolution_width(&cy).ok();
        r.res6_m_y = resolution_width_6db(&cy).ok();
    }
    Ok(r)
}
