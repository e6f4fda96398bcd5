//! Spatial images from spectra (ω-k paths) and spatial back-projection.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ObservationSet;
use crate::spectral::weyl::radial_integral;
use crate::spectral::{
    as_integer, bounding_box, fft2, make_spectral_grid, spectrum_from_observations, spectrum_from_observations_fft,
    SpectralScattering, SpectrumOptions, DEFAULT_CUTOFF,
};
use crate::wave::{SpectralGrid, Vec3, VoxelGrid};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Complex image on a voxel grid, one buffer per polarimetric component
/// (4 for spectral paths in `[θθ, φφ, φθ, θφ]` order, 1 for BPA).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVolume {
    pub grid: VoxelGrid,
    pub frequencies_hz: Vec<f64>,
    /// `values[c][voxel]`, voxel index x fastest.
    pub values: Vec<Vec<C>>,
    /// Per-frequency images `[f][c][voxel]`, empty unless requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_frequency: Vec<Vec<Vec<C>>>,
    pub method: String,
    #[serde(default)]
    pub filter_order: Option<u32>,
}

impl ImageVolume {
    pub fn zeros(grid: VoxelGrid, components: usize, method: impl Into<String>) -> Self {
        let n = grid.len();
        ImageVolume {
            grid,
            frequencies_hz: Vec::new(),
            values: vec![vec![ZERO; n]; components],
            per_frequency: Vec::new(),
            method: method.into(),
            filter_order: None,
        }
    }

    pub fn components(&self) -> usize {
        self.values.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.values.is_empty() {
            return Err(Error::invalid("image has no components"));
        }
        for v in &self.values {
            if v.len() != self.grid.len() {
                return Err(Error::mismatch("image voxels", self.grid.len(), v.len()));
            }
        }
        Ok(())
    }

    /// `Σ_c |v_c|²` per voxel.
    pub fn intensity(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for comp in &self.values {
            for (o, v) in out.iter_mut().zip(comp) {
                *o += v.norm_sqr();
            }
        }
        out
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.intensity().into_iter().map(f64::sqrt).collect()
    }

    pub fn peak_magnitude(&self) -> f64 {
        self.magnitude().into_iter().fold(0.0, f64::max)
    }

    fn accumulate(&mut self, other: &[Vec<C>]) {
        for (a, b) in self.values.iter_mut().zip(other) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisMethod {
    /// Zero-padded inverse FFT; needs `π/(Δk·Δx)` integer on both axes.
    Fft,
    /// Separable direct sum per voxel.
    Direct,
}

/// One spectral grid per frequency, sized from the observation bounding box
/// and the voxel grid extent.
pub fn spectral_grids_for(obs: &ObservationSet, voxels: &VoxelGrid, cutoff: f64) -> Result<Vec<SpectralGrid>> {
    let (lo, hi) = bounding_box(&obs.positions_m);
    let ap = [hi[0] - lo[0], hi[1] - lo[1]];
    let im = [voxels.extent(0), voxels.extent(1)];
    obs.wavenumbers()?
        .into_iter()
        .map(|k| make_spectral_grid(ap, im, k, cutoff))
        .collect()
}

/// Per-axis phase tables `e^{-j2k·x}` for each lattice index.
fn axis_table(dk: f64, half: usize, coords: &[f64]) -> Vec<Vec<C>> {
    (0..=2 * half)
        .map(|i| {
            let kx = (i as f64 - half as f64) * dk;
            coords.iter().map(|&x| C::from_polar(1.0, -2.0 * kx * x)).collect()
        })
        .collect()
}

/// Image of one spectrum (all components) by the separable direct sum.
fn synthesize_direct(spec: &SpectralScattering, grid: &VoxelGrid) -> Vec<Vec<C>> {
    let g = &spec.grid;
    let [nx, ny, nz] = grid.counts;
    let xs = grid.axis_coords(0);
    let ys = grid.axis_coords(1);
    let tx = axis_table(g.dkx, g.half_x, &xs);
    let ty = axis_table(g.dky, g.half_y, &ys);
    let kz = g.kz_values();
    let scale = g.cell_area() / (PI * PI);
    let mut out = vec![vec![ZERO; grid.len()]; 4];
    for iz in 0..nz {
        let z = grid.coord(2, iz);
        let ez: Vec<C> = kz.iter().map(|&kz| C::from_polar(scale, -2.0 * kz * z)).collect();
        // rows[c][y][ix]: partial sums over iy for each kx column
        let rows: Vec<Vec<Vec<C>>> = (0..4)
            .map(|c| {
                (0..ny)
                    .into_par_iter()
                    .map(|iy| {
                        let mut acc = vec![ZERO; g.nx()];
                        for (n, &(sx, sy)) in g.samples.iter().enumerate() {
                            let col = (sx + g.half_x as i32) as usize;
                            let row = (sy + g.half_y as i32) as usize;
                            acc[col] += spec.values[n][c] * ez[n] * ty[row][iy];
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        for (c, rows_c) in rows.iter().enumerate() {
            let plane: Vec<C> = (0..nx * ny)
                .into_par_iter()
                .map(|i| {
                    let (ix, iy) = (i % nx, i / nx);
                    rows_c[iy].iter().zip(&tx).map(|(a, t)| a * t[ix]).sum()
                })
                .collect();
            let base = grid.index(0, 0, iz);
            out[c][base..base + nx * ny].copy_from_slice(&plane);
        }
    }
    out
}

fn fft_length(dk: f64, dx: f64, count: usize) -> Result<usize> {
    if count == 1 {
        return Ok(1);
    }
    as_integer(PI / (dk * dx)).ok_or_else(|| {
        Error::Incommensurate(format!(
            "voxel spacing {dx} m and spectral spacing {dk} rad/m give a non-integer FFT length π/(Δk·Δx)"
        ))
    })
}

/// Image of one spectrum through a 2D FFT per plane and component.
fn synthesize_fft(spec: &SpectralScattering, grid: &VoxelGrid) -> Result<Vec<Vec<C>>> {
    let g = &spec.grid;
    let [nx, ny, nz] = grid.counts;
    let nfx = fft_length(g.dkx, grid.spacing_m[0], nx)?;
    let nfy = fft_length(g.dky, grid.spacing_m[1], ny)?;
    let (x0, y0) = (grid.origin_m[0], grid.origin_m[1]);
    let scale = g.cell_area() / (PI * PI);
    let mut out = vec![vec![ZERO; grid.len()]; 4];
    for iz in 0..nz {
        let z = grid.coord(2, iz);
        for (c, out_c) in out.iter_mut().enumerate() {
            let mut buf = vec![ZERO; nfx * nfy];
            for (n, &(sx, sy)) in g.samples.iter().enumerate() {
                let wv = g.wave_vector(n);
                let ph = -2.0 * (wv.kx * x0 + wv.ky * y0 + wv.kz.re * z);
                let bx = (sx as i64).rem_euclid(nfx as i64) as usize;
                let by = (sy as i64).rem_euclid(nfy as i64) as usize;
                buf[by * nfx + bx] += spec.values[n][c] * C::from_polar(scale, ph);
            }
            fft2(&mut buf, nfx, nfy, false);
            for iy in 0..ny {
                for ix in 0..nx {
                    out_c[grid.index(ix, iy, iz)] = buf[(iy % nfy) * nfx + ix % nfx];
                }
            }
        }
    }
    Ok(out)
}

/// `(1/π²)·Σ_n x_n e^{-j2k_n·r} Δk_xΔk_y` per voxel, summed coherently over
/// the given spectra (one per frequency).
pub fn image_from_spectrum(
    spectra: &[SpectralScattering],
    grid: &VoxelGrid,
    method: SynthesisMethod,
    keep_per_frequency: bool,
) -> Result<ImageVolume> {
    grid.validate()?;
    if spectra.is_empty() {
        return Err(Error::invalid("no spectra to synthesize"));
    }
    for s in spectra {
        s.validate()?;
    }
    if method == SynthesisMethod::Fft && spectra.iter().any(|s| !s.grid.same_lattice(&spectra[0].grid)) {
        return Err(Error::invalid("FFT synthesis needs all spectra on one spectral-grid family"));
    }
    let mut img = ImageVolume::zeros(grid.clone(), 4, "spectral");
    for s in spectra {
        let part = match method {
            SynthesisMethod::Direct => synthesize_direct(s, grid),
            SynthesisMethod::Fft => synthesize_fft(s, grid)?,
        };
        img.accumulate(&part);
        img.frequencies_hz.push(s.frequency_hz);
        if keep_per_frequency {
            img.per_frequency.push(part);
        }
    }
    Ok(img)
}

/// Direct-sum ω-k imaging: spectrum estimate per frequency, then direct synthesis.
pub fn omega_k_direct_reconstruct(
    obs: &ObservationSet,
    grid: &VoxelGrid,
    opts: &SpectrumOptions,
) -> Result<ImageVolume> {
    let grids = spectral_grids_for(obs, grid, DEFAULT_CUTOFF)?;
    let spectra = grids
        .iter()
        .enumerate()
        .map(|(f, g)| spectrum_from_observations(obs, f, g, opts).map(|e| e.spectrum))
        .collect::<Result<Vec<_>>>()?;
    let mut img = image_from_spectrum(&spectra, grid, SynthesisMethod::Direct, false)?;
    img.method = "omega-k-direct".into();
    img.filter_order = Some(opts.filter.order);
    Ok(img)
}

/// FFT ω-k imaging on a regular planar lattice: FFT spectrum estimate then
/// FFT synthesis. Same mathematics as [`omega_k_direct_reconstruct`].
pub fn fft_omega_k_reconstruct(obs: &ObservationSet, grid: &VoxelGrid, opts: &SpectrumOptions) -> Result<ImageVolume> {
    let grids = spectral_grids_for(obs, grid, DEFAULT_CUTOFF)?;
    let spectra = grids
        .iter()
        .enumerate()
        .map(|(f, g)| spectrum_from_observations_fft(obs, f, g, opts).map(|e| e.spectrum))
        .collect::<Result<Vec<_>>>()?;
    let mut img = image_from_spectrum(&spectra, grid, SynthesisMethod::Fft, false)?;
    img.method = "omega-k-fft".into();
    img.filter_order = Some(opts.filter.order);
    Ok(img)
}

/// Back-projection kernel choice. All kinds except `Naive` assume `R_z < 0`,
/// `R = r - r_m` (target below the observation plane).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FocusingOperatorSpec {
    /// `e^{+j2kR}`.
    Naive,
    /// Closed-form `F_n(R, 2k)`, `n ≤ 2`; `far_field` keeps only the leading term.
    Improved {
        order: u32,
        #[serde(default)]
        far_field: bool,
    },
    /// `(R_z/R)·e^{+j2kR}`.
    Watanabe,
}

impl FocusingOperatorSpec {
    pub fn improved(order: u32) -> Self {
        FocusingOperatorSpec::Improved { order, far_field: false }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FocusingOperatorSpec::Improved { order, .. } if *order > 2 => {
                Err(Error::domain("closed-form focusing operators exist for order ≤ 2"))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FocusingOperatorSpec::Naive => "bpa-naive".into(),
            FocusingOperatorSpec::Improved { order, .. } => format!("bpa-focused-f{order}"),
            FocusingOperatorSpec::Watanabe => "bpa-watanabe".into(),
        }
    }
}

/// Kernel value for validated input; `r2 = |R|²`.
#[inline]
fn kernel_unchecked(spec: FocusingOperatorSpec, rv: [f64; 3], k: f64) -> C {
    let [rx, ry, rz] = rv;
    let rho2 = rx * rx + ry * ry;
    let r2 = rho2 + rz * rz;
    let r = r2.sqrt();
    let e = C::from_polar(1.0, 2.0 * k * r);
    let j = C::new(0.0, 1.0);
    let h = PI / 2.0;
    match spec {
        FocusingOperatorSpec::Naive => e,
        FocusingOperatorSpec::Watanabe => e * (rz / r),
        FocusingOperatorSpec::Improved { order, far_field } => {
            let jk = j * k;
            let (r3, r4) = (r2 * r, r2 * r2);
            match order {
                0 => {
                    let lead = 2.0 * jk * rz / r2;
                    let v = if far_field { lead } else { lead - rz / r3 };
                    e * v * h
                }
                1 => {
                    let lead = 4.0 * jk * jk * rz * rz / r3;
                    let v = if far_field {
                        lead
                    } else {
                        let r5 = r4 * r;
                        lead + (rho2 - 2.0 * rz * rz) * (2.0 * jk / r4 - 1.0 / r5)
                    };
                    e * v * (j * h)
                }
                _ => {
                    let lead = 8.0 * jk * jk * jk * rz * rz * rz / r4;
                    let v = if far_field {
                        lead
                    } else {
                        let (r5, r6) = (r4 * r, r4 * r2);
                        let r7 = r6 * r;
                        let rz2 = rz * rz;
                        lead + rz
                            * (12.0 * jk * jk * (rho2 - rz2) / r5
                                + (3.0 * rho2 - 2.0 * rz2) * (-6.0 * jk / r6 + 3.0 / r7))
                    };
                    -e * v * h
                }
            }
        }
    }
}

/// Closed-form focusing operator at `R = r - r_m` for wave number `k`.
pub fn focusing_operator_closed(spec: FocusingOperatorSpec, r: &Vec3, k: f64) -> Result<C> {
    spec.validate()?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain("wave number must be positive"));
    }
    if r.norm() == 0.0 || !r.iter().all(|v| v.is_finite()) {
        return Err(Error::domain("focusing operator is singular at R = 0"));
    }
    if !matches!(spec, FocusingOperatorSpec::Naive) && r.z >= 0.0 {
        return Err(Error::domain("focusing operators assume R_z < 0 (target below the aperture)"));
    }
    Ok(kernel_unchecked(spec, [r.x, r.y, r.z], k))
}

/// Panels per π of integrand phase in [`focusing_operator_numeric`].
const NUMERIC_DENSITY: f64 = 3.0;

/// `∬_{k_ρ ≤ k_ρ,max} (2k_z)^n e^{-j2k·R} dk_x dk_y` on the reconstruction
/// branch (`k_z = +j|k_z|` in the evanescent annulus, so the integrand decays).
pub fn focusing_operator_numeric(n: u32, r: &Vec3, k: f64, kr_max: f64) -> Result<C> {
    if r.z == 0.0 || !r.iter().all(|v| v.is_finite()) {
        return Err(Error::domain("numeric focusing operator needs |R_z| > 0"));
    }
    if !(k > 0.0 && kr_max > 0.0 && k.is_finite() && kr_max.is_finite()) {
        return Err(Error::domain("k and k_rho_max must be positive"));
    }
    let s = r.z.abs();
    let rho = r.x.hypot(r.y);
    let j = C::new(0.0, 1.0);
    let ni = n as i32;
    let sum = radial_integral(
        k,
        kr_max,
        2.0 * rho,
        2.0 * (rho + s),
        NUMERIC_DENSITY,
        |u| C::from_polar((2.0 * u).powi(ni) * u, 2.0 * u * s),
        |a| (2.0 * j * a).powi(ni) * (a * (-2.0 * a * s).exp()),
    );
    Ok(sum * (2.0 * PI))
}

/// `s_B(r) = Σ_f Σ_m w_m T(r_m)·K(r - r_m, 2k_f)` for a single co-polarized
/// probe channel, using the observation weights.
pub fn bpa_reconstruct(obs: &ObservationSet, grid: &VoxelGrid, spec: FocusingOperatorSpec) -> Result<ImageVolume> {
    obs.validate()?;
    grid.validate()?;
    spec.validate()?;
    if obs.num_probes() != 1 || obs.probes[0].tx != obs.probes[0].rx {
        return Err(Error::invalid(
            "back-projection needs a single co-polarized probe channel; use inverse-source or omega-k for polarimetric data",
        ));
    }
    if !matches!(spec, FocusingOperatorSpec::Naive) {
        let zmin = obs.positions_m.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
        let zmax = grid.coord(2, grid.counts[2] - 1).max(grid.origin_m[2]);
        if zmax >= zmin {
            return Err(Error::domain("focused back-projection needs every voxel below every observation (R_z < 0)"));
        }
    }
    let ks = obs.wavenumbers()?;
    let weighted: Vec<Vec<C>> = (0..ks.len())
        .map(|f| obs.samples[0][f].iter().zip(&obs.weights_m2).map(|(t, w)| t * *w).collect())
        .collect();
    let values: Vec<C> = (0..grid.len())
        .into_par_iter()
        .map(|v| {
            let p = grid.position(v);
            let mut acc = ZERO;
            for (f, &k) in ks.iter().enumerate() {
                for (m, q) in obs.positions_m.iter().enumerate() {
                    let rv = [p.x - q[0], p.y - q[1], p.z - q[2]];
                    acc += weighted[f][m] * kernel_unchecked(spec, rv, k);
                }
            }
            acc
        })
        .collect();
    let mut img = ImageVolume::zeros(grid.clone(), 1, spec.label());
    img.values[0] = values;
    img.frequencies_hz = obs.frequencies_hz.clone();
    if let FocusingOperatorSpec::Improved { order, .. } = spec {
        img.filter_order = Some(order);
    }
    Ok(img)
}
