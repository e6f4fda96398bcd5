//! Planar plane-wave spectral machinery: spectral grids and filters, the
//! forward/adjoint operators, direct spectrum estimation from observations,
//! quadrature weights, regridding and the planar Weyl oracle.

mod fft;
mod kernel;
pub mod lagrange;
pub mod lattice;
pub mod operator;
pub mod voronoi;
pub mod weyl;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{truncated_pseudo_inverse, probe_matrix, DEFAULT_PINV_TOLERANCE};
use crate::scenario::ObservationSet;
use crate::wave::SpectralGrid;

pub(crate) use fft::{as_integer, fft2};
use kernel::PhaseKernel;
pub use lagrange::lagrange_regrid;
pub use operator::{adjoint_apply, forward_apply, PlaneWaveOperator};
pub use voronoi::voronoi_quadrature_weights;
pub use weyl::weyl_planar_eval;

/// Retained fraction of the visible disk radius.
pub const DEFAULT_CUTOFF: f64 = 0.999;

/// Padding applied to the larger of aperture and imaging extent.
pub const PADDING: f64 = 2.0;

/// Regular spectral lattice with `Δk = π / (2·max(aperture, imaging))` per axis.
pub fn make_spectral_grid(
    aperture_extent_m: [f64; 2],
    imaging_extent_m: [f64; 2],
    k: f64,
    cutoff: f64,
) -> Result<SpectralGrid> {
    let padded = |a: usize| -> Result<f64> {
        let (ap, im) = (aperture_extent_m[a], imaging_extent_m[a]);
        if !(ap.is_finite() && im.is_finite() && ap >= 0.0 && im >= 0.0) || ap.max(im) <= 0.0 {
            return Err(Error::domain("aperture and imaging extents must be positive"));
        }
        Ok(PADDING * ap.max(im))
    };
    let (lx, ly) = (padded(0)?, padded(1)?);
    SpectralGrid::with_spacing(PI / lx, PI / ly, k, cutoff)
}

/// Spectral filter `H_n = (2k_z)^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: u32,
}

impl FilterSpec {
    pub fn new(order: u32) -> Self {
        FilterSpec { order }
    }

    pub fn factor(&self, kz: f64) -> f64 {
        (2.0 * kz).powi(self.order as i32)
    }
}

/// Four polarimetric components `[θθ, φφ, φθ, θφ]` per retained sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralScattering {
    pub grid: SpectralGrid,
    pub frequency_hz: f64,
    pub values: Vec<[Complex64; 4]>,
}

impl SpectralScattering {
    pub fn zeros(grid: SpectralGrid, frequency_hz: f64) -> Self {
        let n = grid.len();
        SpectralScattering {
            grid,
            frequency_hz,
            values: vec![[Complex64::new(0.0, 0.0); 4]; n],
        }
    }

    pub fn from_flat(grid: SpectralGrid, frequency_hz: f64, flat: &[Complex64]) -> Self {
        let values = flat.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        SpectralScattering {
            grid,
            frequency_hz,
            values,
        }
    }

    pub fn flat(&self) -> Vec<Complex64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.grid.len() {
            return Err(Error::mismatch("spectrum values", self.grid.len(), self.values.len()));
        }
        if self.values.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::Numerical("non-finite spectral coefficient".into()));
        }
        Ok(())
    }

    /// `Σ |x|²` over samples and components.
    pub fn energy(&self) -> f64 {
        self.values.iter().flatten().map(|v| v.norm_sqr()).sum()
    }
}

/// Multiplies every sample by `(2k_z)^n`.
pub fn apply_filter(spec: FilterSpec, grid: &SpectralGrid, values: &mut [[Complex64; 4]]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::mismatch("spectrum values", grid.len(), values.len()));
    }
    if spec.order == 0 {
        return Ok(());
    }
    for (v, kz) in values.iter_mut().zip(grid.kz_values()) {
        let f = spec.factor(kz);
        v.iter_mut().for_each(|c| *c *= f);
    }
    Ok(())
}

/// Source of the per-point quadrature weights `w_m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsMode {
    /// Bounding-box area divided equally among the points.
    Uniform,
    /// The weights stored with the observations.
    #[default]
    Native,
    /// Clipped Voronoi cell areas with the boundary rule.
    Voronoi,
}

pub fn resolve_weights(obs: &ObservationSet, mode: WeightsMode) -> Result<Vec<f64>> {
    let w = match mode {
        WeightsMode::Native => obs.weights_m2.clone(),
        WeightsMode::Uniform => {
            let (lo, hi) = bounding_box(&obs.positions_m);
            let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
            let area = if area > 0.0 { area } else { 1.0 };
            vec![area / obs.num_points() as f64; obs.num_points()]
        }
        WeightsMode::Voronoi => voronoi_quadrature_weights(&obs.positions_m, None)?,
    };
    if w.len() != obs.num_points() {
        return Err(Error::mismatch("weights_m2", obs.num_points(), w.len()));
    }
    if !(w.iter().sum::<f64>() > 0.0) {
        return Err(Error::invalid("total quadrature weight is zero"));
    }
    Ok(w)
}

pub(crate) fn bounding_box(positions: &[[f64; 3]]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in positions {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub filter: FilterSpec,
    pub weights: WeightsMode,
    /// Use the `k_z²`-denominator representation (extra factor `k_z/k`).
    pub kz_squared: bool,
    pub pinv_tolerance: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            filter: FilterSpec::default(),
            weights: WeightsMode::Native,
            kz_squared: false,
            pinv_tolerance: DEFAULT_PINV_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    pub spectrum: SpectralScattering,
    /// Rank of the truncated probe pseudo-inverse per sample.
    pub ranks: Vec<usize>,
}

/// Probe correction, filter and optional `k_z/k` applied to the per-probe
/// projections `s[p·N + n]`.
fn finish_spectrum(
    obs: &ObservationSet,
    grid: &SpectralGrid,
    frequency_hz: f64,
    s: &[Complex64],
    opts: &SpectrumOptions,
) -> Result<SpectrumEstimate> {
    let nn = grid.len();
    let pp = obs.num_probes();
    let mut out = SpectralScattering::zeros(grid.clone(), frequency_hz);
    let mut ranks = Vec::with_capacity(nn);
    for n in 0..nn {
        let wv = grid.wave_vector(n);
        let pinv = truncated_pseudo_inverse(&probe_matrix(&obs.probes, &wv)?, opts.pinv_tolerance);
        ranks.push(pinv.rank);
        let mut scale = opts.filter.factor(wv.kz.re);
        if opts.kz_squared {
            scale *= wv.kz.re / wv.k;
        }
        for j in 0..4 {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in 0..pp {
                acc += pinv.matrix[(j, p)] * s[p * nn + n];
            }
            out.values[n][j] = acc * scale;
        }
    }
    Ok(SpectrumEstimate { spectrum: out, ranks })
}

/// Direct (orthogonality) spectrum estimate at frequency index `f`:
/// `(1/π²)·Σ_m w_m T_p(r_m) e^{+j2k·r_m}` per probe, probe-corrected and filtered.
pub fn spectrum_from_observations(
    obs: &ObservationSet,
    f: usize,
    grid: &SpectralGrid,
    opts: &SpectrumOptions,
) -> Result<SpectrumEstimate> {
    obs.validate()?;
    if f >= obs.num_frequencies() {
        return Err(Error::invalid(format!("frequency index {f} out of range")));
    }
    let w = resolve_weights(obs, opts.weights)?;
    let mm = obs.num_points();
    let pp = obs.num_probes();
    let mut data = Vec::with_capacity(pp * mm);
    for p in 0..pp {
        data.extend(obs.samples[p][f].iter().zip(&w).map(|(t, w)| t * *w));
    }
    let kernel = PhaseKernel::new(grid, &obs.positions_m);
    let s: Vec<Complex64> = kernel.analyze(&data, pp).into_iter().map(|v| v / (PI * PI)).collect();
    finish_spectrum(obs, grid, obs.frequencies_hz[f], &s, opts)
}

/// Same estimate as [`spectrum_from_observations`] evaluated with a 2D FFT;
/// the observations must sit on a regular planar lattice whose spacing is
/// commensurate with the spectral spacing (`π/(Δk·Δx)` integer).
pub fn spectrum_from_observations_fft(
    obs: &ObservationSet,
    f: usize,
    grid: &SpectralGrid,
    opts: &SpectrumOptions,
) -> Result<SpectrumEstimate> {
    obs.validate()?;
    if f >= obs.num_frequencies() {
        return Err(Error::invalid(format!("frequency index {f} out of range")));
    }
    let lat = lattice::detect_regular(&obs.positions_m, [PI / grid.dkx, PI / grid.dky])?;
    let bins = |dk: f64, dx: f64, count: usize| -> Result<usize> {
        if count == 1 {
            return Ok(1);
        }
        as_integer(PI / (dk * dx)).ok_or_else(|| {
            Error::Incommensurate(format!(
                "observation spacing {dx} m and spectral spacing {dk} rad/m give a non-integer FFT length"
            ))
        })
    };
    let nfx = bins(grid.dkx, lat.spacing[0], lat.counts[0])?;
    let nfy = bins(grid.dky, lat.spacing[1], lat.counts[1])?;
    let w = resolve_weights(obs, opts.weights)?;
    let (nn, pp) = (grid.len(), obs.num_probes());
    let mut s = vec![Complex64::new(0.0, 0.0); pp * nn];
    for p in 0..pp {
        let mut buf = vec![Complex64::new(0.0, 0.0); nfx * nfy];
        for iy in 0..lat.counts[1] {
            for ix in 0..lat.counts[0] {
                let m = lat.index[iy * lat.counts[0] + ix];
                buf[(iy % nfy) * nfx + ix % nfx] += obs.samples[p][f][m] * w[m];
            }
        }
        fft2(&mut buf, nfx, nfy, true);
        for n in 0..nn {
            let (ix, iy) = grid.samples[n];
            let wv = grid.wave_vector(n);
            let bx = (ix as i64).rem_euclid(nfx as i64) as usize;
            let by = (iy as i64).rem_euclid(nfy as i64) as usize;
            let phase = 2.0 * (wv.kx * lat.origin[0] + wv.ky * lat.origin[1] + wv.kz.re * lat.z);
            s[p * nn + n] = buf[by * nfx + bx] * Complex64::from_polar(1.0 / (PI * PI), phase);
        }
    }
    finish_spectrum(obs, grid, obs.frequencies_hz[f], &s, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::ProbeCombination;
    use crate::rng::substream;
    use crate::scenario::{make_gauss_legendre_grid, make_regular_grid, ApertureSpec, GridKind};
    use crate::wave::{wavenumber_from_frequency, Medium};
    use rand::Rng;

    #[test]
    fn spacing_rule() {
        let k = wavenumber_from_frequency(110e9, &Medium::VACUUM).unwrap();
        assert!((k - 2305.0).abs() < 1.0);
        let g = make_spectral_grid([0.0544, 0.0544], [0.048, 0.048], k, DEFAULT_CUTOFF).unwrap();
        assert!((g.dkx - PI / 0.1088).abs() < 1e-12);
        assert!((g.dkx - 28.87).abs() < 0.01);
        let r2 = (DEFAULT_CUTOFF * k).powi(2);
        for n in 0..g.len() {
            assert!(g.kx(n).powi(2) + g.ky(n).powi(2) <= r2);
        }
        assert!(make_spectral_grid([0.0, 0.0], [0.0, 0.1], k, 0.999).is_err());
        assert!(make_spectral_grid([0.1, 0.1], [0.1, 0.1], -1.0, 0.999).is_err());
    }

    #[test]
    fn sample_count_scales_quadratically() {
        let n1 = make_spectral_grid([0.1, 0.1], [0.05, 0.05], 1000.0, 0.999).unwrap().len() as f64;
        let n2 = make_spectral_grid([0.1, 0.1], [0.05, 0.05], 2000.0, 0.999).unwrap().len() as f64;
        let n4 = make_spectral_grid([0.1, 0.1], [0.05, 0.05], 4000.0, 0.999).unwrap().len() as f64;
        assert!((n2 / n1 - 4.0).abs() < 0.3);
        assert!((n4 / n2 - 4.0).abs() < 0.1);
    }

    #[test]
    fn filter_factors() {
        let g = SpectralGrid::with_spacing(10.0, 10.0, 100.0, 1.0).unwrap();
        let mut v = vec![[Complex64::new(1.0, 0.0); 4]; g.len()];
        apply_filter(FilterSpec::new(0), &g, &mut v).unwrap();
        assert!(v.iter().flatten().all(|c| *c == Complex64::new(1.0, 0.0)));
        apply_filter(FilterSpec::new(2), &g, &mut v).unwrap();
        let centre = g.samples.iter().position(|&s| s == (0, 0)).unwrap();
        assert!((v[centre][0].re - 4.0 * 100.0 * 100.0).abs() < 1e-9);
        // (6,8)·10 lies on the visible boundary
        let edge = g.samples.iter().position(|&s| s == (6, 8)).unwrap();
        assert_eq!(v[edge][2], Complex64::new(0.0, 0.0));
        assert!(apply_filter(FilterSpec::new(1), &g, &mut v[1..]).is_err());
    }

    #[test]
    fn filter_energy_monotone() {
        let g = make_spectral_grid([0.05, 0.05], [0.05, 0.05], 800.0, DEFAULT_CUTOFF).unwrap();
        let mut rng = substream(8, 0);
        let base: Vec<[Complex64; 4]> = (0..g.len())
            .map(|_| [0; 4].map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
            .collect();
        let energy = |order: u32| {
            let mut v = base.clone();
            apply_filter(FilterSpec::new(order), &g, &mut v).unwrap();
            v.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>()
        };
        let four_k2 = 4.0 * 800.0f64.powi(2);
        for n in 0..4 {
            assert!(energy(n + 1) < four_k2 * energy(n));
        }
    }

    fn obs_from(positions: Vec<[f64; 3]>, weights: Vec<f64>, samples: Vec<Complex64>, f: f64) -> ObservationSet {
        ObservationSet {
            medium: Medium::VACUUM,
            frequencies_hz: vec![f],
            probes: vec![ProbeCombination::ideal_theta()],
            positions_m: positions,
            weights_m2: weights,
            samples: vec![vec![samples]],
        }
    }

    #[test]
    fn single_observation_gives_conjugate_plane_wave() {
        let f = 30e9;
        let k = wavenumber_from_frequency(f, &Medium::VACUUM).unwrap();
        let g = make_spectral_grid([0.1, 0.1], [0.1, 0.1], k, DEFAULT_CUTOFF).unwrap();
        let r = [0.01, -0.02, 0.07];
        let obs = obs_from(vec![r], vec![2.0], vec![Complex64::new(0.5, 0.0)], f);
        let est = spectrum_from_observations(&obs, 0, &g, &SpectrumOptions::default()).unwrap();
        assert!(est.ranks.iter().all(|&r| r == 1));
        for n in 0..g.len() {
            let w = g.wave_vector(n);
            let want = Complex64::from_polar(1.0 / (PI * PI), 2.0 * (w.kx * r[0] + w.ky * r[1] + w.kz.re * r[2]));
            assert!((est.spectrum.values[n][0] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_total_weight_is_an_error() {
        let g = SpectralGrid::with_spacing(100.0, 100.0, 500.0, 0.999).unwrap();
        let obs = obs_from(vec![[0.0, 0.0, 0.1]], vec![0.0], vec![Complex64::new(1.0, 0.0)], 1e9);
        assert!(spectrum_from_observations(&obs, 0, &g, &SpectrumOptions::default()).is_err());
    }

    /// Round trip: a single broadside spectral coefficient synthesized onto a
    /// dense regular aperture is recovered at its own sample.
    #[test]
    fn broadside_round_trip_peak() {
        let f = 20e9;
        let k = wavenumber_from_frequency(f, &Medium::VACUUM).unwrap();
        let lambda = 2.0 * PI / k;
        let extent = 20.0 * lambda;
        let spec = ApertureSpec {
            kind: GridKind::Regular,
            center_m: [0.0, 0.0, 3.0 * lambda],
            extent_m: [extent, extent],
            counts: [81, 81],
            perturbation_m: [0.0; 3],
            seed: 0,
        };
        let ap = make_regular_grid(&spec).unwrap();
        let g = make_spectral_grid([extent, extent], [extent, extent], k, DEFAULT_CUTOFF).unwrap();
        let op = PlaneWaveOperator::new(&g, &ap.positions_m, &[ProbeCombination::ideal_theta()]).unwrap();
        let n0 = g.samples.iter().position(|&s| s == (0, 0)).unwrap();
        let mut x = SpectralScattering::zeros(g.clone(), f);
        x.values[n0][0] = Complex64::new(1.0, 0.0);
        let t = op.forward(&x).unwrap();
        let obs = ObservationSet {
            medium: Medium::VACUUM,
            frequencies_hz: vec![f],
            probes: vec![ProbeCombination::ideal_theta()],
            positions_m: ap.positions_m,
            weights_m2: ap.weights_m2,
            samples: vec![t],
        };
        let est = spectrum_from_observations(&obs, 0, &g, &SpectrumOptions::default()).unwrap();
        let mag: Vec<f64> = est.spectrum.values.iter().map(|v| v[0].norm()).collect();
        let peak = mag[n0];
        let (imax, _) = mag.iter().enumerate().fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        assert_eq!(imax, n0);
        // Δk is half the critical spacing, so the critically sampled
        // neighbours are two lattice steps away
        for (n, &(ix, iy)) in g.samples.iter().enumerate() {
            if n != n0 && ix % 2 == 0 && iy % 2 == 0 && ix.abs() <= 4 && iy.abs() <= 4 {
                let db = 20.0 * (mag[n] / peak).log10();
                assert!(db <= -20.0, "sample ({ix},{iy}) at {db} dB");
            }
        }
        // the aperture-limited estimate of a unit coefficient peaks at Δk²·A/π²
        let want = g.cell_area() * extent * extent / (PI * PI);
        assert!((peak - want).abs() < 1e-10 * want, "{peak} vs {want}");
    }

    #[test]
    fn uniform_weights_equal_direct_transform() {
        let f = 15e9;
        let k = wavenumber_from_frequency(f, &Medium::VACUUM).unwrap();
        let spec = ApertureSpec {
            kind: GridKind::Regular,
            center_m: [0.0, 0.0, 0.05],
            extent_m: [0.06, 0.06],
            counts: [7, 7],
            perturbation_m: [0.0; 3],
            seed: 0,
        };
        let ap = make_regular_grid(&spec).unwrap();
        let mut rng = substream(21, 0);
        let samples: Vec<Complex64> = (0..49).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let obs = obs_from(ap.positions_m.clone(), ap.weights_m2.clone(), samples.clone(), f);
        let g = make_spectral_grid([0.06, 0.06], [0.06, 0.06], k, DEFAULT_CUTOFF).unwrap();
        let opts = SpectrumOptions { weights: WeightsMode::Uniform, ..Default::default() };
        let est = spectrum_from_observations(&obs, 0, &g, &opts).unwrap();
        let w = 0.06 * 0.06 / 49.0;
        for n in 0..g.len() {
            let wv = g.wave_vector(n);
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, p) in ap.positions_m.iter().enumerate() {
                acc += samples[m] * w * Complex64::from_polar(1.0, 2.0 * (wv.kx * p[0] + wv.ky * p[1] + wv.kz.re * p[2]));
            }
            acc /= PI * PI;
            assert!((est.spectrum.values[n][0] - acc).norm() <= 1e-10 * acc.norm().max(1e-3));
        }
        let fft = spectrum_from_observations_fft(&obs, 0, &g, &opts).unwrap();
        for n in 0..g.len() {
            assert!((fft.spectrum.values[n][0] - est.spectrum.values[n][0]).norm() < 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_weights_integrate_band_limited_field() {
        // ∫∫ e^{j(ax + by)} over the aperture, closed form vs GL rule
        let spec = ApertureSpec {
            kind: GridKind::GaussLegendre,
            center_m: [0.0, 0.0, 0.0],
            extent_m: [0.04, 0.04],
            counts: [24, 24],
            perturbation_m: [0.0; 3],
            seed: 0,
        };
        let ap = make_gauss_legendre_grid(&spec).unwrap();
        let (a, b) = (600.0, -350.0);
        let exact = |c: f64| 2.0 * (c * 0.02).sin() / c;
        let want = exact(a) * exact(b);
        let got: Complex64 = ap
            .positions_m
            .iter()
            .zip(&ap.weights_m2)
            .map(|(p, w)| Complex64::from_polar(*w, a * p[0] + b * p[1]))
            .sum();
        assert!((got - want).norm() < 1e-12);
        // dense fine-grid midpoint rule agrees to its own accuracy
        let fine = 2000;
        let h = 0.04 / fine as f64;
        let mut mid = Complex64::new(0.0, 0.0);
        for i in 0..fine {
            for j in 0..fine {
                let x = -0.02 + (i as f64 + 0.5) * h;
                let y = -0.02 + (j as f64 + 0.5) * h;
                mid += Complex64::from_polar(h * h, a * x + b * y);
            }
        }
        assert!((got - mid).norm() < 1e-6);
    }

    #[test]
    fn kz_squared_variant_adds_low_pass() {
        let f = 30e9;
        let k = wavenumber_from_frequency(f, &Medium::VACUUM).unwrap();
        let g = make_spectral_grid([0.1, 0.1], [0.1, 0.1], k, DEFAULT_CUTOFF).unwrap();
        let obs = obs_from(vec![[0.0, 0.0, 0.05]], vec![1.0], vec![Complex64::new(1.0, 0.0)], f);
        let a = spectrum_from_observations(&obs, 0, &g, &SpectrumOptions::default()).unwrap();
        let opts = SpectrumOptions { kz_squared: true, ..Default::default() };
        let b = spectrum_from_observations(&obs, 0, &g, &opts).unwrap();
        for n in 0..g.len() {
            let ratio = b.spectrum.values[n][0].norm() / a.spectrum.values[n][0].norm();
            assert!((ratio - g.wave_vector(n).kz.re / k).abs() < 1e-12);
        }
    }
}
