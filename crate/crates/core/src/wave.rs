//! Physical and numerical primitives shared by every other module: media,
//! wave numbers, the k_z dispersion branch, spectral and voxel lattices.
//!
//! Complex sample convention: time dependence `e^{+jωt}`, a plane wave
//! travelling along `k` carries the phase `e^{-jk·r}`.

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const VACUUM_IMPEDANCE: f64 = 376.730_313_412;

/// Homogeneous, lossless background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub permittivity: f64,
    pub permeability: f64,
}

impl Default for Medium {
    fn default() -> Self {
        Medium::VACUUM
    }
}

impl Medium {
    pub const VACUUM: Medium = Medium {
        permittivity: 1.0,
        permeability: 1.0,
    };

    pub fn new(permittivity: f64, permeability: f64) -> Result<Self> {
        let m = Medium {
            permittivity,
            permeability,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.permittivity > 0.0 && self.permittivity.is_finite()) {
            return Err(Error::domain("relative permittivity must be positive"));
        }
        if !(self.permeability > 0.0 && self.permeability.is_finite()) {
            return Err(Error::domain("relative permeability must be positive"));
        }
        Ok(())
    }

    /// Wave impedance in ohms.
    pub fn impedance(&self) -> f64 {
        VACUUM_IMPEDANCE * (self.permeability / self.permittivity).sqrt()
    }

    /// Phase velocity in m/s.
    pub fn phase_velocity(&self) -> f64 {
        SPEED_OF_LIGHT / (self.permittivity * self.permeability).sqrt()
    }
}

/// `k = 2πf·sqrt(εμ)` in rad/m.
pub fn wavenumber_from_frequency(frequency_hz: f64, medium: &Medium) -> Result<f64> {
    if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
        return Err(Error::domain(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    medium.validate()?;
    Ok(2.0 * PI * frequency_hz / medium.phase_velocity())
}

pub fn wavelength(k: f64) -> f64 {
    2.0 * PI / k
}

/// Longitudinal wave number for the lateral components `(k_x, k_y)`.
///
/// Propagating samples get the non-negative real root, evanescent samples the
/// root `-j·sqrt(k_x²+k_y²-k²)` so that `e^{-jk_z|z|}` decays.
pub fn kz_dispersion(kx: f64, ky: f64, k: f64) -> Complex64 {
    let kr2 = kx * kx + ky * ky;
    let k2 = k * k;
    if k2 > kr2 {
        Complex64::new((k2 - kr2).sqrt(), 0.0)
    } else if k2 < kr2 {
        Complex64::new(0.0, -(kr2 - k2).sqrt())
    } else {
        Complex64::new(0.0, 0.0)
    }
}

/// A plane-wave sample `(k_x, k_y, k_z)` at total wave number `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector {
    pub kx: f64,
    pub ky: f64,
    pub kz: Complex64,
    pub k: f64,
}

impl WaveVector {
    pub fn new(kx: f64, ky: f64, k: f64) -> Self {
        WaveVector {
            kx,
            ky,
            kz: kz_dispersion(kx, ky, k),
            k,
        }
    }

    pub fn is_propagating(&self) -> bool {
        self.kx * self.kx + self.ky * self.ky <= self.k * self.k
    }

    /// Unit vector along the (real) wave vector; only meaningful for propagating samples.
    pub fn direction(&self) -> Vec3 {
        Vec3::new(self.kx, self.ky, self.kz.re) / self.k
    }
}

/// Regular `(k_x, k_y)` lattice restricted to the propagating disk
/// `k_x² + k_y² ≤ (cutoff·k)²`.
///
/// Sample `n` sits at `(ix·dkx, iy·dky)` with `|ix| ≤ half_x`, `|iy| ≤ half_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub half_x: usize,
    pub half_y: usize,
    pub dkx: f64,
    pub dky: f64,
    pub k: f64,
    pub cutoff: f64,
    pub samples: Vec<(i32, i32)>,
}

impl SpectralGrid {
    /// Builds the lattice from explicit spacings.
    pub fn with_spacing(dkx: f64, dky: f64, k: f64, cutoff: f64) -> Result<Self> {
        if !(dkx > 0.0 && dky > 0.0 && dkx.is_finite() && dky.is_finite()) {
            return Err(Error::domain("spectral spacing must be positive"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::domain("wave number must be positive"));
        }
        if !(cutoff > 0.0 && cutoff <= 1.0) {
            return Err(Error::domain("visibility cutoff must lie in (0, 1]"));
        }
        let radius = cutoff * k;
        let half_x = (radius / dkx).floor() as usize;
        let half_y = (radius / dky).floor() as usize;
        let r2 = radius * radius;
        let mut samples = Vec::new();
        for ix in -(half_x as i32)..=(half_x as i32) {
            let kx = ix as f64 * dkx;
            for iy in -(half_y as i32)..=(half_y as i32) {
                let ky = iy as f64 * dky;
                if kx * kx + ky * ky <= r2 {
                    samples.push((ix, iy));
                }
            }
        }
        Ok(SpectralGrid {
            half_x,
            half_y,
            dkx,
            dky,
            k,
            cutoff,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn nx(&self) -> usize {
        2 * self.half_x + 1
    }

    pub fn ny(&self) -> usize {
        2 * self.half_y + 1
    }

    pub fn cell_area(&self) -> f64 {
        self.dkx * self.dky
    }

    pub fn kx(&self, n: usize) -> f64 {
        self.samples[n].0 as f64 * self.dkx
    }

    pub fn ky(&self, n: usize) -> f64 {
        self.samples[n].1 as f64 * self.dky
    }

    pub fn wave_vector(&self, n: usize) -> WaveVector {
        WaveVector::new(self.kx(n), self.ky(n), self.k)
    }

    /// Real `k_z` for every retained sample.
    pub fn kz_values(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.wave_vector(n).kz.re).collect()
    }

    /// Two grids belong to the same family when their lattices coincide up to
    /// the wave number, so spectra from different frequencies share FFT bins.
    pub fn same_lattice(&self, other: &SpectralGrid) -> bool {
        rel_eq(self.dkx, other.dkx) && rel_eq(self.dky, other.dky)
    }
}

fn rel_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Regular voxel lattice; voxel `(ix, iy, iz)` sits at `origin + (ix·dx, iy·dy, iz·dz)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub origin_m: [f64; 3],
    pub counts: [usize; 3],
    pub spacing_m: [f64; 3],
}

impl VoxelGrid {
    pub fn new(origin_m: [f64; 3], counts: [usize; 3], spacing_m: [f64; 3]) -> Result<Self> {
        let g = VoxelGrid {
            origin_m,
            counts,
            spacing_m,
        };
        g.validate()?;
        Ok(g)
    }

    /// A single `z` plane of `nx × ny` voxels centred on `(cx, cy)`.
    pub fn plane(center: [f64; 2], extent: [f64; 2], counts: [usize; 2], z: f64) -> Result<Self> {
        let spacing = |e: f64, n: usize| if n > 1 { e / (n - 1) as f64 } else { 1.0 };
        let sx = spacing(extent[0], counts[0]);
        let sy = spacing(extent[1], counts[1]);
        let ox = if counts[0] > 1 { center[0] - extent[0] / 2.0 } else { center[0] };
        let oy = if counts[1] > 1 { center[1] - extent[1] / 2.0 } else { center[1] };
        VoxelGrid::new([ox, oy, z], [counts[0], counts[1], 1], [sx, sy, 1.0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.contains(&0) {
            return Err(Error::domain("voxel counts must be at least 1"));
        }
        if self.spacing_m.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::domain("voxel spacing must be positive"));
        }
        if self.origin_m.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("voxel origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of index `i` along `axis` (0 = x, 1 = y, 2 = z).
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin_m[axis] + i as f64 * self.spacing_m[axis]
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.counts[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Linear index, x fastest, then y, then z.
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.counts[1] + iy) * self.counts[0] + ix
    }

    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let ix = idx % self.counts[0];
        let iy = (idx / self.counts[0]) % self.counts[1];
        let iz = idx / (self.counts[0] * self.counts[1]);
        (ix, iy, iz)
    }

    pub fn position(&self, idx: usize) -> Vec3 {
        let (ix, iy, iz) = self.unravel(idx);
        Vec3::new(self.coord(0, ix), self.coord(1, iy), self.coord(2, iz))
    }

    pub fn extent(&self, axis: usize) -> f64 {
        (self.counts[axis].saturating_sub(1)) as f64 * self.spacing_m[axis]
    }
}

/// The fixed sign conventions, serialized into every output file header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexSampleConvention {
    pub time_dependence: String,
    pub propagation_phase: String,
}

impl Default for ComplexSampleConvention {
    fn default() -> Self {
        ComplexSampleConvention {
            time_dependence: TIME_DEPENDENCE.to_string(),
            propagation_phase: PROPAGATION_PHASE.to_string(),
        }
    }
}

impl ComplexSampleConvention {
    pub fn is_native(&self) -> bool {
        self.time_dependence == TIME_DEPENDENCE && self.propagation_phase == PROPAGATION_PHASE
    }
}

pub const TIME_DEPENDENCE: &str = "exp(+j*omega*t)";
pub const PROPAGATION_PHASE: &str = "exp(-j*k.r)";

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wavelength_at_110_ghz() {
        let k = wavenumber_from_frequency(110e9, &Medium::VACUUM).unwrap();
        let lambda = wavelength(k);
        assert!((lambda - 2.7e-3).abs() < 0.03e-3, "lambda = {lambda}");
        assert!((k * lambda - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn non_positive_frequency_is_rejected() {
        assert!(matches!(
            wavenumber_from_frequency(0.0, &Medium::VACUUM),
            Err(Error::Domain(_))
        ));
        assert!(wavenumber_from_frequency(-1.0, &Medium::VACUUM).is_err());
    }

    #[test]
    fn dielectric_shortens_wavelength() {
        let m = Medium::new(4.0, 1.0).unwrap();
        let k0 = wavenumber_from_frequency(10e9, &Medium::VACUUM).unwrap();
        let k = wavenumber_from_frequency(10e9, &m).unwrap();
        assert!((k / k0 - 2.0).abs() < 1e-14);
        assert!((m.impedance() - VACUUM_IMPEDANCE / 2.0).abs() < 1e-9);
        assert!(Medium::new(0.0, 1.0).is_err());
    }

    #[test]
    fn kz_branches() {
        assert_eq!(kz_dispersion(0.0, 0.0, 210.0), Complex64::new(210.0, 0.0));
        assert_eq!(kz_dispersion(3.0, 4.0, 5.0), Complex64::new(0.0, 0.0));
        let e = kz_dispersion(4.0, 4.0, 5.0);
        assert_eq!(e.re, 0.0);
        assert!((e.im + 7f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn retained_samples_are_propagating() {
        let g = SpectralGrid::with_spacing(28.9, 28.9, 2305.0, 0.999).unwrap();
        for n in 0..g.len() {
            let w = g.wave_vector(n);
            assert!(w.kx * w.kx + w.ky * w.ky <= (0.999 * 2305.0f64).powi(2));
            assert!(w.kz.im == 0.0 && w.kz.re > 0.0);
        }
    }

    #[test]
    fn voxel_index_round_trip() {
        let g = VoxelGrid::new([0.0; 3], [3, 4, 5], [1.0; 3]).unwrap();
        for idx in 0..g.len() {
            let (a, b, c) = g.unravel(idx);
            assert_eq!(g.index(a, b, c), idx);
        }
        assert!(VoxelGrid::new([0.0; 3], [0, 1, 1], [1.0; 3]).is_err());
        assert!(VoxelGrid::new([0.0; 3], [1, 1, 1], [0.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #[test]
        fn kz_is_symmetric(kx in -500.0f64..500.0, ky in -500.0f64..500.0, k in 1.0f64..400.0) {
            let a = kz_dispersion(kx, ky, k);
            prop_assert_eq!(a, kz_dispersion(-kx, -ky, k));
            prop_assert_eq!(a, kz_dispersion(ky, kx, k));
        }

        #[test]
        fn kz_satisfies_dispersion(ax in -2.0f64..2.0, ay in -2.0f64..2.0, k in 1.0f64..4000.0) {
            let (kx, ky) = (ax * k, ay * k);
            let kz = kz_dispersion(kx, ky, k);
            let residual = Complex64::new(kx * kx + ky * ky - k * k, 0.0) + kz * kz;
            prop_assert!(residual.norm() <= 1e-12 * k * k);
        }
    }
}
