//! Full (non-restarted) GMRES and the inverse-source reconstruction chain:
//! solve `AA†u = b`, set `x = A†u`, then filter `x`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::ObservationSet;
use crate::spectral::{apply_filter, FilterSpec, PlaneWaveOperator, SpectralScattering};
use crate::wave::SpectralGrid;

/// A square linear map on `C^n`.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>>;
}

/// Wraps a closure as an operator of fixed dimension.
pub struct FnOperator<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&[Complex64]) -> Result<Vec<Complex64>> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        (self.f)(v)
    }
}

/// `v ↦ A A† v` on the observation space.
pub struct NormalOperator<'a>(pub &'a PlaneWaveOperator);

impl LinearOperator for NormalOperator<'_> {
    fn dim(&self) -> usize {
        self.0.range_len()
    }

    fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.0.forward_flat(&self.0.adjoint_flat(v)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the normalized residual falls below this.
    pub abs_tol: f64,
    /// Stop once `r_i / r_{i-1}` exceeds this (from the second iteration on).
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Extra Gram–Schmidt passes per iteration (0 or 1).
    pub reorthogonalize: u8,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abs_tol: 1e-4,
            rel_tol: 0.99,
            max_iter: 200,
            reorthogonalize: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.abs_tol < 1.0) {
            return Err(Error::domain("abs_tol must lie in (0, 1)"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1.0) {
            return Err(Error::domain("rel_tol must lie in (0, 1]"));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("max_iter must be at least 1"));
        }
        if self.reorthogonalize > 1 {
            return Err(Error::domain("reorthogonalize must be 0 or 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Abs,
    Stagnation,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceHistory {
    /// `‖b - Au_i‖ / ‖b‖` after each iteration.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl ConvergenceHistory {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// True unless the iteration cap was hit without meeting either criterion.
    pub fn converged(&self) -> bool {
        self.stop != StopReason::MaxIter
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Rotation `(c, s)` with `[c s; -s̄ c]·(a, b) = (r, 0)`.
fn givens(a: Complex64, b: Complex64) -> (f64, Complex64) {
    let (na, nb) = (a.norm(), b.norm());
    if nb == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0));
    }
    if na == 0.0 {
        return (0.0, b.conj() / nb);
    }
    let d = na.hypot(nb);
    (na / d, (a / na) * b.conj() / d)
}

/// Minimizes `‖b - Au‖` over the growing Krylov space with modified
/// Gram–Schmidt and Givens rotations. `b = 0` returns zero with no iterations.
pub fn gmres_solve(
    op: &dyn LinearOperator,
    b: &[Complex64],
    config: &SolverConfig,
) -> Result<(Vec<Complex64>, ConvergenceHistory)> {
    config.validate()?;
    let n = op.dim();
    if b.len() != n {
        return Err(Error::mismatch("right-hand side", n, b.len()));
    }
    let zero = Complex64::new(0.0, 0.0);
    let beta = norm(b);
    if beta == 0.0 {
        return Ok((
            vec![zero; n],
            ConvergenceHistory {
                residuals: Vec::new(),
                iterations: 0,
                stop: StopReason::Abs,
            },
        ));
    }
    if !beta.is_finite() {
        return Err(Error::Numerical("right-hand side is not finite".into()));
    }
    let mut basis: Vec<Vec<Complex64>> = vec![b.iter().map(|v| v / beta).collect()];
    // columns of the rotated Hessenberg matrix (upper triangular part)
    let mut r_cols: Vec<Vec<Complex64>> = Vec::new();
    let mut rotations: Vec<(f64, Complex64)> = Vec::new();
    let mut g = vec![Complex64::new(beta, 0.0)];
    let mut residuals = Vec::new();
    let mut stop = StopReason::MaxIter;
    for j in 0..config.max_iter {
        let mut w = op.apply(&basis[j])?;
        if w.len() != n {
            return Err(Error::mismatch("operator output", n, w.len()));
        }
        let mut h = vec![zero; j + 2];
        for _pass in 0..=config.reorthogonalize {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(v, &w);
                h[i] += c;
                w.par_iter_mut().zip(v.par_iter()).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let hn = norm(&w);
        if !hn.is_finite() {
            return Err(Error::Numerical("GMRES produced a non-finite Krylov vector".into()));
        }
        h[j + 1] = Complex64::new(hn, 0.0);
        for (i, &(c, s)) in rotations.iter().enumerate() {
            let (a, bb) = (h[i], h[i + 1]);
            h[i] = a * c + s * bb;
            h[i + 1] = -s.conj() * a + bb * c;
        }
        let (c, s) = givens(h[j], h[j + 1]);
        h[j] = h[j] * c + s * h[j + 1];
        h[j + 1] = zero;
        rotations.push((c, s));
        let gj = g[j];
        g[j] = gj * c;
        g.push(-s.conj() * gj);
        h.truncate(j + 1);
        r_cols.push(h);
        let res = g[j + 1].norm() / beta;
        residuals.push(res);
        let i = j + 1;
        if res <= config.abs_tol {
            stop = StopReason::Abs;
            break;
        }
        if i >= 2 && res / residuals[i - 2] > config.rel_tol {
            stop = StopReason::Stagnation;
            break;
        }
        if hn <= 1e-14 * beta {
            // invariant subspace reached; the least-squares solution is final
            stop = StopReason::Abs;
            break;
        }
        basis.push(w.into_iter().map(|v| v / hn).collect());
    }
    let k = r_cols.len();
    let mut y = vec![zero; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for (l, yl) in y.iter().enumerate().skip(i + 1) {
            acc -= r_cols[l][i] * yl;
        }
        let d = r_cols[i][i];
        y[i] = if d.norm() > 0.0 { acc / d } else { zero };
    }
    let mut u = vec![zero; n];
    for (yi, v) in y.iter().zip(&basis) {
        u.par_iter_mut().zip(v.par_iter()).for_each(|(ui, vi)| *ui += yi * vi);
    }
    Ok((
        u,
        ConvergenceHistory {
            iterations: residuals.len(),
            residuals,
            stop,
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Filtered spectra, one per frequency.
    pub spectra: Vec<SpectralScattering>,
    /// `x = A†u` before filtering.
    pub unfiltered: Vec<SpectralScattering>,
    pub histories: Vec<ConvergenceHistory>,
}

/// Single-frequency inverse-source solve on an existing operator.
pub fn solve_frequency(
    op: &PlaneWaveOperator,
    b: &[Vec<Complex64>],
    frequency_hz: f64,
    config: &SolverConfig,
) -> Result<(SpectralScattering, ConvergenceHistory)> {
    let flat: Vec<Complex64> = b.iter().flatten().copied().collect();
    let (u, hist) = gmres_solve(&NormalOperator(op), &flat, config)?;
    let x = op.adjoint_flat(&u)?;
    Ok((SpectralScattering::from_flat(op.grid().clone(), frequency_hz, &x), hist))
}

/// Solves every frequency independently on its own grid (`grids[f]`).
pub fn inverse_source_reconstruct(
    obs: &ObservationSet,
    grids: &[SpectralGrid],
    filter: FilterSpec,
    config: &SolverConfig,
) -> Result<Reconstruction> {
    obs.validate()?;
    config.validate()?;
    if grids.len() != obs.num_frequencies() {
        return Err(Error::mismatch("spectral grids", obs.num_frequencies(), grids.len()));
    }
    let ks = obs.wavenumbers()?;
    let mut out = Reconstruction {
        spectra: Vec::new(),
        unfiltered: Vec::new(),
        histories: Vec::new(),
    };
    for (f, grid) in grids.iter().enumerate() {
        if (grid.k - ks[f]).abs() > 1e-9 * ks[f] {
            return Err(Error::invalid(format!("grid {f} was built for a different wave number")));
        }
        let op = PlaneWaveOperator::new(grid, &obs.positions_m, &obs.probes)?;
        let (x, hist) = solve_frequency(&op, &obs.at_frequency(f), obs.frequencies_hz[f], config)?;
        let mut filtered = x.clone();
        apply_filter(filter, grid, &mut filtered.values)?;
        out.spectra.push(filtered);
        out.unfiltered.push(x);
        out.histories.push(hist);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn cplx(rng: &mut ChaCha8Rng) -> Complex64 {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn matrix_op(a: &DMatrix<Complex64>) -> FnOperator<impl Fn(&[Complex64]) -> Result<Vec<Complex64>> + Sync + '_> {
        FnOperator {
            dim: a.nrows(),
            f: move |v: &[Complex64]| Ok((a * DVector::from_column_slice(v)).as_slice().to_vec()),
        }
    }

    fn tight() -> SolverConfig {
        SolverConfig {
            abs_tol: 1e-14,
            rel_tol: 1.0,
            max_iter: 200,
            reorthogonalize: 1,
        }
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = DMatrix::<Complex64>::identity(5, 5);
        let b: Vec<_> = (0..5).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let (u, h) = gmres_solve(&matrix_op(&a), &b, &SolverConfig::default()).unwrap();
        assert_eq!(h.iterations, 1);
        for (x, y) in u.iter().zip(&b) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn diagonal_system() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)]));
        let b = vec![Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)];
        let (u, _) = gmres_solve(&matrix_op(&a), &b, &SolverConfig::default()).unwrap();
        for v in u {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = DMatrix::<Complex64>::identity(3, 3);
        let (u, h) = gmres_solve(&matrix_op(&a), &[Complex64::new(0.0, 0.0); 3], &SolverConfig::default()).unwrap();
        assert!(u.iter().all(|v| v.norm() == 0.0));
        assert!(h.residuals.is_empty());
        assert_eq!(h.iterations, 0);
    }

    #[test]
    fn hermitian_psd_matches_dense_solve() {
        let mut rng = substream(4, 0);
        let b_mat = DMatrix::from_fn(50, 50, |_, _| cplx(&mut rng));
        let a = &b_mat * b_mat.adjoint();
        let b: Vec<_> = (0..50).map(|_| cplx(&mut rng)).collect();
        let (u, h) = gmres_solve(&matrix_op(&a), &b, &tight()).unwrap();
        let want = a.clone().lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = (DVector::from_column_slice(&u) - &want).norm() / want.norm();
        assert!(err < 1e-8, "{err}");
        for w in h.residuals.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn minimum_norm_solution_of_underdetermined_system() {
        let mut rng = substream(5, 0);
        for _ in 0..20 {
            let m = rng.random_range(2..20);
            let n = rng.random_range(m + 1..=40);
            let a = DMatrix::from_fn(m, n, |_, _| cplx(&mut rng));
            let x0 = DVector::from_fn(n, |_, _| cplx(&mut rng));
            let b = &a * &x0;
            let aah = &a * a.adjoint();
            let (u, _) = gmres_solve(&matrix_op(&aah), b.as_slice(), &tight()).unwrap();
            let x = a.adjoint() * DVector::from_column_slice(&u);
            let pinv = a.clone().pseudo_inverse(1e-12).unwrap();
            let want = pinv * &b;
            assert!((x - &want).norm() / want.norm() < 1e-8);
        }
    }

    #[test]
    fn stagnation_stops_early() {
        // slowly converging spectrum: many clustered eigenvalues
        let d: Vec<Complex64> = (0..120).map(|i| Complex64::new(1.0 + i as f64 * 10.0, 0.0)).collect();
        let a = DMatrix::from_diagonal(&DVector::from_vec(d));
        let b = vec![Complex64::new(1.0, 0.0); 120];
        let cfg = SolverConfig { rel_tol: 0.5, ..Default::default() };
        let (_, h) = gmres_solve(&matrix_op(&a), &b, &cfg).unwrap();
        assert_eq!(h.stop, StopReason::Stagnation);
        let n = h.iterations;
        assert!(n >= 2 && h.residuals[n - 1] / h.residuals[n - 2] > 0.5);
        let cfg = SolverConfig { rel_tol: 1.0, max_iter: 3, ..Default::default() };
        let (_, h) = gmres_solve(&matrix_op(&a), &b, &cfg).unwrap();
        assert_eq!((h.stop, h.iterations), (StopReason::MaxIter, 3));
        assert!(!h.converged());
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate().is_ok());
        c.abs_tol = 0.0;
        assert!(c.validate().is_err());
        c = SolverConfig { rel_tol: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        c = SolverConfig { max_iter: 0, ..Default::default() };
        assert!(c.validate().is_err());
    }
}
