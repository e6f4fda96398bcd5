//! Probe far-field patterns, the per-combination spectral weight vectors and
//! the truncated pseudo-inverse of the stacked probe matrix.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::{Vec3, WaveVector};

const UNIT_TOLERANCE: f64 = 1e-9;

/// Default relative singular-value cutoff for the probe-matrix pseudo-inverse.
pub const DEFAULT_PINV_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProbePattern {
    /// Unit-magnitude, purely θ-polarized pattern.
    IdealTheta,
    /// Unit-magnitude, purely φ-polarized pattern.
    IdealPhi,
    /// Short electric dipole along a unit vector.
    HertzianDipole { orientation: [f64; 3] },
}

impl ProbePattern {
    pub fn dipole(x: f64, y: f64, z: f64) -> Self {
        ProbePattern::HertzianDipole {
            orientation: [x, y, z],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ProbePattern::HertzianDipole { orientation } = self {
            unit_orientation(orientation)?;
        }
        Ok(())
    }

    /// `(W_θ, W_φ)` towards the unit direction `dir`.
    pub fn far_field(&self, dir: &Vec3) -> Result<(Complex64, Complex64)> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        match self {
            ProbePattern::IdealTheta => Ok((one, zero)),
            ProbePattern::IdealPhi => Ok((zero, one)),
            ProbePattern::HertzianDipole { orientation } => {
                let d = unit_orientation(orientation)?;
                Ok(dipole_components(&d, dir))
            }
        }
    }

    /// Field radiated by the probe at offset `r` (field point minus probe
    /// position), normalized so the far field is `pattern · e^{-jkR}/R`.
    ///
    /// With `radiation_only` the dipole keeps just its `1/R` term.
    pub fn radiated_field(&self, r: &Vec3, k: f64, radiation_only: bool) -> Result<Vector3<Complex64>> {
        let dist = r.norm();
        if dist == 0.0 {
            return Err(Error::domain("field point coincides with the probe"));
        }
        let rhat = r / dist;
        let green = Complex64::from_polar(1.0 / dist, -k * dist);
        let field = match self {
            ProbePattern::IdealTheta | ProbePattern::IdealPhi => {
                let (th, ph) = spherical_basis(&rhat);
                let e = if matches!(self, ProbePattern::IdealTheta) { th } else { ph };
                e.map(|v| Complex64::new(v, 0.0))
            }
            ProbePattern::HertzianDipole { orientation } => {
                let d = unit_orientation(orientation)?;
                let a = if radiation_only {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -1.0 / (k * dist))
                };
                let transverse = Complex64::new(1.0, 0.0) + a + a * a;
                let radial = Complex64::new(1.0, 0.0) + 3.0 * a + 3.0 * a * a;
                let proj = rhat.dot(&d);
                Vector3::from_fn(|i, _| transverse * d[i] - radial * (proj * rhat[i]))
            }
        };
        Ok(field * green)
    }
}

fn unit_orientation(o: &[f64; 3]) -> Result<Vec3> {
    let d = Vec3::new(o[0], o[1], o[2]);
    if !d.iter().all(|v| v.is_finite()) || (d.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::domain(format!(
            "dipole orientation must be a unit vector, got |d| = {}",
            d.norm()
        )));
    }
    Ok(d)
}

/// Spherical unit vectors `(θ̂, φ̂)` at the unit direction `dir`.
///
/// On the polar axis `φ = 0` is used.
pub fn spherical_basis(dir: &Vec3) -> (Vec3, Vec3) {
    let rho = dir.x.hypot(dir.y);
    let theta = rho.atan2(dir.z);
    let phi = if rho < 1e-15 { 0.0 } else { dir.y.atan2(dir.x) };
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    (Vec3::new(ct * cp, ct * sp, -st), Vec3::new(-sp, cp, 0.0))
}

fn dipole_components(d: &Vec3, dir: &Vec3) -> (Complex64, Complex64) {
    let (th, ph) = spherical_basis(dir);
    // (I - k̂k̂)·d has no radial part, so its spherical components are plain projections
    (
        Complex64::new(th.dot(d), 0.0),
        Complex64::new(ph.dot(d), 0.0),
    )
}

/// Hertzian dipole pattern evaluated at the direction of `wave`, unit peak.
pub fn hertzian_dipole_pattern(orientation: &Vec3, wave: &WaveVector) -> Result<(Complex64, Complex64)> {
    let d = unit_orientation(&[orientation.x, orientation.y, orientation.z])?;
    if !wave.is_propagating() {
        return Err(Error::domain("dipole pattern requested for an evanescent direction"));
    }
    Ok(dipole_components(&d, &wave.direction()))
}

/// A transmit/receive probe pair; its index `p` is its position in the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCombination {
    pub tx: ProbePattern,
    pub rx: ProbePattern,
}

impl ProbeCombination {
    pub fn new(tx: ProbePattern, rx: ProbePattern) -> Self {
        ProbeCombination { tx, rx }
    }

    /// Co-polarized ideal θ probes on both ends.
    pub fn ideal_theta() -> Self {
        ProbeCombination::new(ProbePattern::IdealTheta, ProbePattern::IdealTheta)
    }

    /// The four Tx/Rx pairings of x- and y-oriented dipoles.
    pub fn dipole_quad() -> Vec<Self> {
        let x = ProbePattern::dipole(1.0, 0.0, 0.0);
        let y = ProbePattern::dipole(0.0, 1.0, 0.0);
        vec![
            ProbeCombination::new(x.clone(), x.clone()),
            ProbeCombination::new(y.clone(), y.clone()),
            ProbeCombination::new(x.clone(), y.clone()),
            ProbeCombination::new(y, x),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.tx.validate()?;
        self.rx.validate()
    }
}

/// Four products `[R^θT^θ, R^φT^φ, R^φT^θ, R^θT^φ]` for one spectral sample.
pub type ProbeWeightVector = [Complex64; 4];

/// Spectral probe weights of `combo`, evaluated at `-k̂` (the incident direction).
pub fn probe_weight_vector(combo: &ProbeCombination, wave: &WaveVector) -> Result<ProbeWeightVector> {
    if !wave.is_propagating() {
        return Err(Error::domain("probe weights requested for an evanescent sample"));
    }
    let dir = -wave.direction();
    let (tt, tp) = combo.tx.far_field(&dir)?;
    let (rt, rp) = combo.rx.far_field(&dir)?;
    Ok([rt * tt, rp * tp, rp * tt, rt * tp])
}

/// Truncated Moore–Penrose pseudo-inverse of the stacked `P × 4` probe matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbePseudoInverse {
    /// `4 × P`
    pub matrix: DMatrix<Complex64>,
    pub rank: usize,
}

pub fn probe_matrix(combos: &[ProbeCombination], wave: &WaveVector) -> Result<DMatrix<Complex64>> {
    if combos.is_empty() {
        return Err(Error::invalid("at least one probe combination is required"));
    }
    let mut m = DMatrix::zeros(combos.len(), 4);
    for (p, c) in combos.iter().enumerate() {
        let w = probe_weight_vector(c, wave)?;
        for (j, v) in w.iter().enumerate() {
            m[(p, j)] = *v;
        }
    }
    Ok(m)
}

pub fn probe_matrix_pseudo_inverse(
    combos: &[ProbeCombination],
    wave: &WaveVector,
    tol: f64,
) -> Result<ProbePseudoInverse> {
    let m = probe_matrix(combos, wave)?;
    Ok(truncated_pseudo_inverse(&m, tol))
}

/// Pseudo-inverse with singular values below `tol·σ_max` discarded.
/// An all-zero matrix maps to the all-zero pseudo-inverse.
pub fn truncated_pseudo_inverse(m: &DMatrix<Complex64>, tol: f64) -> ProbePseudoInverse {
    let (rows, cols) = m.shape();
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    if sigma_max > 0.0 {
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let vt = svd.v_t.as_ref().expect("right singular vectors requested");
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s <= tol * sigma_max {
                continue;
            }
            rank += 1;
            let inv = 1.0 / s;
            // V Σ⁺ Uᴴ, one rank-one term per retained singular triplet
            for c in 0..cols {
                let v = vt[(i, c)].conj() * inv;
                for r in 0..rows {
                    out[(c, r)] += v * u[(r, i)].conj();
                }
            }
        }
    }
    ProbePseudoInverse { matrix: out, rank }
}
