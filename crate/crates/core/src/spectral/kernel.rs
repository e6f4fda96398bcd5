//! Shared evaluation of `Σ_n c_n e^{-j2k_n·r_m}` and its conjugate transpose.
//!
//! Retained samples are grouped into runs of constant `i_x` and consecutive
//! `i_y`, so the lateral phase factorizes as `e^{-j2k_x x}·e^{-j2k_y y}` with
//! both factors tabulated per point. `e^{-j2k_z z}` is split into a reference
//! plane factor per sample and, for non-planar sets, a residual factor per
//! (point, sample) pair.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::wave::SpectralGrid;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest |θ| for which the polynomial `e^{-jθ}` below is used.
const POLY_LIMIT: f64 = 2.0;

/// `1/(2i)!`, `i = 0..=11`.
const COS_TAYLOR: [f64; 12] = [
    1.0,
    -1.0 / 2.0,
    1.0 / 24.0,
    -1.0 / 720.0,
    1.0 / 40320.0,
    -1.0 / 3628800.0,
    1.0 / 479001600.0,
    -1.0 / 87178291200.0,
    1.0 / 20922789888000.0,
    -1.0 / 6402373705728000.0,
    1.0 / 2432902008176640000.0,
    -1.0 / 1.1240007277776077e21,
];

/// `1/(2i+1)!`, `i = 0..=11`.
const SIN_TAYLOR: [f64; 12] = [
    1.0,
    -1.0 / 6.0,
    1.0 / 120.0,
    -1.0 / 5040.0,
    1.0 / 362880.0,
    -1.0 / 39916800.0,
    1.0 / 6227020800.0,
    -1.0 / 1307674368000.0,
    1.0 / 355687428096000.0,
    -1.0 / 121645100408832000.0,
    1.0 / 51090942171709440000.0,
    -1.0 / 2.585201673888498e22,
];

/// `e^{-jθ}` by truncated Taylor series, accurate to ~1e-15 for |θ| ≤ 2.
#[inline]
fn cis_neg_poly(theta: f64) -> Complex64 {
    let u = theta * theta;
    let mut c = 0.0;
    let mut s = 0.0;
    for i in (0..12).rev() {
        c = c * u + COS_TAYLOR[i];
        s = s * u + SIN_TAYLOR[i];
    }
    Complex64::new(c, -s * theta)
}

#[inline]
fn cis_neg_std(theta: f64) -> Complex64 {
    let (s, c) = theta.sin_cos();
    Complex64::new(c, -s)
}

#[derive(Debug, Clone, Copy)]
struct Run {
    /// `i_x + half_x`
    col: usize,
    /// `i_y + half_y` of the first sample
    row0: usize,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct PhaseKernel {
    nx: usize,
    ny: usize,
    num_samples: usize,
    num_points: usize,
    runs: Vec<Run>,
    /// `M × nx`
    ex: Vec<Complex64>,
    /// `M × ny`
    ey: Vec<Complex64>,
    /// `e^{-j2k_z z_ref}` per sample
    ez: Vec<Complex64>,
    /// `2k_z` per sample
    kz2: Vec<f64>,
    /// `z_m - z_ref` per point
    dz: Vec<f64>,
    planar: bool,
    poly: bool,
}

impl PhaseKernel {
    pub(crate) fn new(grid: &SpectralGrid, positions: &[[f64; 3]]) -> Self {
        let (hx, hy) = (grid.half_x as i64, grid.half_y as i64);
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut runs: Vec<Run> = Vec::new();
        for (n, &(ix, iy)) in grid.samples.iter().enumerate() {
            let col = (ix as i64 + hx) as usize;
            let row = (iy as i64 + hy) as usize;
            match runs.last_mut() {
                Some(r) if r.col == col && r.row0 + r.len == row && r.offset + r.len == n => r.len += 1,
                _ => runs.push(Run {
                    col,
                    row0: row,
                    offset: n,
                    len: 1,
                }),
            }
        }
        let m = positions.len();
        let z_ref = match positions.first() {
            None => 0.0,
            Some(p0) if positions.iter().all(|p| p[2] == p0[2]) => p0[2],
            Some(_) => positions.iter().map(|p| p[2]).sum::<f64>() / m as f64,
        };
        let dz: Vec<f64> = positions.iter().map(|p| p[2] - z_ref).collect();
        let planar = dz.iter().all(|&d| d == 0.0);
        let mut ex = vec![ZERO; m * nx];
        let mut ey = vec![ZERO; m * ny];
        for (i, p) in positions.iter().enumerate() {
            for c in 0..nx {
                ex[i * nx + c] = cis_neg_std(2.0 * (c as i64 - hx) as f64 * grid.dkx * p[0]);
            }
            for r in 0..ny {
                ey[i * ny + r] = cis_neg_std(2.0 * (r as i64 - hy) as f64 * grid.dky * p[1]);
            }
        }
        let kz2: Vec<f64> = grid.kz_values().iter().map(|kz| 2.0 * kz).collect();
        let ez = kz2.iter().map(|&q| cis_neg_std(q * z_ref)).collect();
        let max_kz2 = kz2.iter().cloned().fold(0.0, f64::max);
        let max_dz = dz.iter().map(|d| d.abs()).fold(0.0, f64::max);
        PhaseKernel {
            nx,
            ny,
            num_samples: grid.len(),
            num_points: m,
            runs,
            ex,
            ey,
            ez,
            kz2,
            dz,
            planar,
            poly: max_kz2 * max_dz <= POLY_LIMIT,
        }
    }

    pub(crate) fn num_points(&self) -> usize {
        self.num_points
    }

    #[inline]
    fn residual(&self, m: usize, n: usize) -> Complex64 {
        let theta = self.kz2[n] * self.dz[m];
        if self.poly {
            cis_neg_poly(theta)
        } else {
            cis_neg_std(theta)
        }
    }

    /// `out[c·M + m] = Σ_n coeffs[c·N + n]·e^{-j2k_n·r_m}` for `channels` channels.
    pub(crate) fn synthesize(&self, coeffs: &[Complex64], channels: usize) -> Vec<Complex64> {
        let (nn, mm) = (self.num_samples, self.num_points);
        assert_eq!(coeffs.len(), channels * nn);
        let folded: Vec<Complex64> = (0..channels * nn).map(|i| coeffs[i] * self.ez[i % nn]).collect();
        let per_point: Vec<Vec<Complex64>> = (0..mm)
            .into_par_iter()
            .map(|m| {
                let ex = &self.ex[m * self.nx..(m + 1) * self.nx];
                let ey = &self.ey[m * self.ny..(m + 1) * self.ny];
                let mut total = vec![ZERO; channels];
                let mut partial = vec![ZERO; channels];
                for run in &self.runs {
                    partial.iter_mut().for_each(|v| *v = ZERO);
                    for j in 0..run.len {
                        let n = run.offset + j;
                        let mut e = ey[run.row0 + j];
                        if !self.planar {
                            e *= self.residual(m, n);
                        }
                        for (c, acc) in partial.iter_mut().enumerate() {
                            *acc += folded[c * nn + n] * e;
                        }
                    }
                    let f = ex[run.col];
                    for (t, p) in total.iter_mut().zip(&partial) {
                        *t += f * p;
                    }
                }
                total
            })
            .collect();
        let mut out = vec![ZERO; channels * mm];
        for (m, vals) in per_point.into_iter().enumerate() {
            for (c, v) in vals.into_iter().enumerate() {
                out[c * mm + m] = v;
            }
        }
        out
    }

    /// `out[c·N + n] = Σ_m data[c·M + m]·e^{+j2k_n·r_m}`, the conjugate transpose of
    /// [`synthesize`](Self::synthesize).
    pub(crate) fn analyze(&self, data: &[Complex64], channels: usize) -> Vec<Complex64> {
        let (nn, mm) = (self.num_samples, self.num_points);
        assert_eq!(data.len(), channels * mm);
        const RUNS_PER_TASK: usize = 4;
        let blocks: Vec<Vec<Complex64>> = self
            .runs
            .par_chunks(RUNS_PER_TASK)
            .map(|runs| {
                let width: usize = runs.iter().map(|r| r.len).sum();
                let mut acc = vec![ZERO; channels * width];
                let mut t = vec![ZERO; channels];
                for m in 0..mm {
                    let ex = &self.ex[m * self.nx..(m + 1) * self.nx];
                    let ey = &self.ey[m * self.ny..(m + 1) * self.ny];
                    let mut base = 0;
                    for run in runs {
                        let f = ex[run.col].conj();
                        for (c, tc) in t.iter_mut().enumerate() {
                            *tc = f * data[c * mm + m];
                        }
                        for j in 0..run.len {
                            let mut e = ey[run.row0 + j];
                            if !self.planar {
                                e *= self.residual(m, run.offset + j);
                            }
                            let e = e.conj();
                            for (c, tc) in t.iter().enumerate() {
                                acc[c * width + base + j] += e * tc;
                            }
                        }
                        base += run.len;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![ZERO; channels * nn];
        for (runs, acc) in self.runs.chunks(RUNS_PER_TASK).zip(blocks) {
            let width: usize = runs.iter().map(|r| r.len).sum();
            let mut base = 0;
            for run in runs {
                for j in 0..run.len {
                    let n = run.offset + j;
                    let ez = self.ez[n].conj();
                    for c in 0..channels {
                        out[c * nn + n] = acc[c * width + base + j] * ez;
                    }
                }
                base += run.len;
            }
        }
        out
    }

    /// Dense `M × N` phase matrix, for tests.
    #[cfg(test)]
    pub(crate) fn dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mm = self.num_points;
        let nn = self.num_samples;
        let mut out = nalgebra::DMatrix::zeros(mm, nn);
        for n in 0..nn {
            let mut unit = vec![ZERO; nn];
            unit[n] = Complex64::new(1.0, 0.0);
            let col = self.synthesize(&unit, 1);
            for m in 0..mm {
                out[(m, n)] = col[m];
            }
        }
        out
    }
}
