//! Discretized forward operator `A: x ↦ T` and its adjoint.
//!
//! `T_p(r_m) = Σ_n W̃_p(-k_n)·x_n·e^{-j2k_n·r_m}·Δk_xΔk_y`, where `x_n` holds
//! the four polarimetric components of the auxiliary spectrum at sample `n`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::kernel::PhaseKernel;
use super::SpectralScattering;
use crate::error::{Error, Result};
use crate::probes::{probe_weight_vector, ProbeCombination};
use crate::wave::SpectralGrid;

/// Flat layouts: unknowns `x[4n + j]`, observations `b[p·M + m]`.
#[derive(Debug, Clone)]
pub struct PlaneWaveOperator {
    grid: SpectralGrid,
    kernel: PhaseKernel,
    num_probes: usize,
    /// `weights[p·N + n]`
    weights: Vec<[Complex64; 4]>,
}

impl PlaneWaveOperator {
    pub fn new(grid: &SpectralGrid, positions_m: &[[f64; 3]], probes: &[ProbeCombination]) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::invalid("at least one probe combination is required"));
        }
        if positions_m.is_empty() {
            return Err(Error::invalid("at least one observation point is required"));
        }
        let mut weights = Vec::with_capacity(probes.len() * grid.len());
        for combo in probes {
            for n in 0..grid.len() {
                weights.push(probe_weight_vector(combo, &grid.wave_vector(n))?);
            }
        }
        Ok(PlaneWaveOperator {
            grid: grid.clone(),
            kernel: PhaseKernel::new(grid, positions_m),
            num_probes: probes.len(),
            weights,
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn num_probes(&self) -> usize {
        self.num_probes
    }

    pub fn num_points(&self) -> usize {
        self.kernel.num_points()
    }

    /// Length of the flat unknown vector, `4N`.
    pub fn domain_len(&self) -> usize {
        4 * self.grid.len()
    }

    /// Length of the flat observation vector, `P·M`.
    pub fn range_len(&self) -> usize {
        self.num_probes * self.num_points()
    }

    pub fn forward_flat(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let nn = self.grid.len();
        if x.len() != 4 * nn {
            return Err(Error::mismatch("spectral unknowns", 4 * nn, x.len()));
        }
        let scale = self.grid.cell_area();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.num_probes * nn];
        for p in 0..self.num_probes {
            for n in 0..nn {
                let w = &self.weights[p * nn + n];
                let xn = &x[4 * n..4 * n + 4];
                coeffs[p * nn + n] = (w[0] * xn[0] + w[1] * xn[1] + w[2] * xn[2] + w[3] * xn[3]) * scale;
            }
        }
        Ok(self.kernel.synthesize(&coeffs, self.num_probes))
    }

    pub fn adjoint_flat(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        if b.len() != self.range_len() {
            return Err(Error::mismatch("observation samples", self.range_len(), b.len()));
        }
        let nn = self.grid.len();
        let y = self.kernel.analyze(b, self.num_probes);
        let scale = self.grid.cell_area();
        let mut x = vec![Complex64::new(0.0, 0.0); 4 * nn];
        for p in 0..self.num_probes {
            for n in 0..nn {
                let w = &self.weights[p * nn + n];
                let v = y[p * nn + n] * scale;
                for j in 0..4 {
                    x[4 * n + j] += w[j].conj() * v;
                }
            }
        }
        Ok(x)
    }

    /// `T[p][m]` from a spectrum on this operator's grid.
    pub fn forward(&self, x: &SpectralScattering) -> Result<Vec<Vec<Complex64>>> {
        if !same_grid(&x.grid, &self.grid) {
            return Err(Error::invalid("spectrum grid differs from the operator grid"));
        }
        let flat: Vec<Complex64> = x.values.iter().flatten().copied().collect();
        let t = self.forward_flat(&flat)?;
        let m = self.num_points();
        Ok(t.chunks(m).map(|c| c.to_vec()).collect())
    }

    /// `A†b` for samples indexed `[p][m]`.
    pub fn adjoint(&self, b: &[Vec<Complex64>], frequency_hz: f64) -> Result<SpectralScattering> {
        if b.len() != self.num_probes {
            return Err(Error::mismatch("samples", self.num_probes, b.len()));
        }
        let m = self.num_points();
        let mut flat = Vec::with_capacity(self.range_len());
        for row in b {
            if row.len() != m {
                return Err(Error::mismatch("samples[p]", m, row.len()));
            }
            flat.extend_from_slice(row);
        }
        let x = self.adjoint_flat(&flat)?;
        Ok(SpectralScattering::from_flat(self.grid.clone(), frequency_hz, &x))
    }

    /// Explicit `(P·M) × 4N` matrix, for small instances.
    pub fn dense_matrix(&self) -> Result<DMatrix<Complex64>> {
        let (rows, cols) = (self.range_len(), self.domain_len());
        let mut a = DMatrix::zeros(rows, cols);
        let mut e = vec![Complex64::new(0.0, 0.0); cols];
        for c in 0..cols {
            e[c] = Complex64::new(1.0, 0.0);
            let col = self.forward_flat(&e)?;
            e[c] = Complex64::new(0.0, 0.0);
            for (r, v) in col.into_iter().enumerate() {
                a[(r, c)] = v;
            }
        }
        Ok(a)
    }
}

fn same_grid(a: &SpectralGrid, b: &SpectralGrid) -> bool {
    a.samples == b.samples && a.dkx == b.dkx && a.dky == b.dky && a.k == b.k
}

/// One-shot forward evaluation.
pub fn forward_apply(
    x: &SpectralScattering,
    positions_m: &[[f64; 3]],
    probes: &[ProbeCombination],
) -> Result<Vec<Vec<Complex64>>> {
    PlaneWaveOperator::new(&x.grid, positions_m, probes)?.forward(x)
}

/// One-shot adjoint evaluation.
pub fn adjoint_apply(
    b: &[Vec<Complex64>],
    grid: &SpectralGrid,
    frequency_hz: f64,
    positions_m: &[[f64; 3]],
    probes: &[ProbeCombination],
) -> Result<SpectralScattering> {
    PlaneWaveOperator::new(grid, positions_m, probes)?.adjoint(b, frequency_hz)
}
