//! Planar Weyl identity evaluated by radial quadrature, and the shared
//! radial integrator used by the numeric focusing operator.
//!
//! After the angular integration, `∬ f(k_z) e^{-j(k_x x + k_y y)} dk_x dk_y =
//! 2π ∫ J_0(k_ρ ρ) f(k_z) k_ρ dk_ρ`. The propagating part is integrated in
//! `u = k_z` (so `k_ρ dk_ρ = -u du`), the evanescent part in `a = |k_z|`
//! (`k_ρ dk_ρ = a da`); both substitutions remove the `1/k_z` ring singularity.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature::{bessel_j0, composite_gauss_legendre};
use crate::wave::Vec3;

const PANEL_ORDER: usize = 16;

/// `∫₀ᵏ J₀(ρ_J √(k²-u²))·prop(u) du + ∫₀^{a_max} J₀(ρ_J √(k²+a²))·evan(a) da`
/// with `a_max = √(k_ρ,max² - k²)`.
///
/// `phase_scale` bounds the phase rate of the integrand (rad per rad/m); the
/// panel count is `density` panels per π of accumulated phase.
pub(crate) fn radial_integral(
    k: f64,
    kr_max: f64,
    rho_j: f64,
    phase_scale: f64,
    density: f64,
    prop: impl Fn(f64) -> Complex64,
    evan: impl Fn(f64) -> Complex64,
) -> Complex64 {
    let panels = |len: f64| ((density * (len * phase_scale / PI + 1.0)).ceil() as usize).max(1);
    let mut acc = Complex64::new(0.0, 0.0);
    let (u, w) = composite_gauss_legendre(PANEL_ORDER, panels(k), 0.0, k);
    for (u, w) in u.into_iter().zip(w) {
        acc += prop(u) * (w * bessel_j0(rho_j * (k * k - u * u).max(0.0).sqrt()));
    }
    if kr_max > k {
        let a_max = (kr_max * kr_max - k * k).sqrt();
        let (a, w) = composite_gauss_legendre(PANEL_ORDER, panels(a_max), 0.0, a_max);
        for (a, w) in a.into_iter().zip(w) {
            acc += evan(a) * (w * bessel_j0(rho_j * (k * k + a * a).sqrt()));
        }
    }
    acc
}

/// `(1/2πj)·∬_{k_ρ ≤ k_ρ,max} e^{-jk_z|z|}/k_z · e^{-j(k_x x + k_y y)} dk_x dk_y`,
/// which tends to `e^{-jkr}/r` as the truncation grows.
///
/// `density` is the number of 16-point panels per π of integrand phase (2 is ample).
pub fn weyl_planar_eval(r: &Vec3, k: f64, kr_max: f64, density: f64) -> Result<Complex64> {
    if r.z == 0.0 || !r.z.is_finite() {
        return Err(Error::domain("the planar Weyl integral needs |z| > 0"));
    }
    if !(k > 0.0 && kr_max > 0.0 && density > 0.0) {
        return Err(Error::domain("k, k_rho_max and density must be positive"));
    }
    let z = r.z.abs();
    let rho = r.x.hypot(r.y);
    let j = Complex64::new(0.0, 1.0);
    // e^{-ju|z|}/u · (u du) and e^{-a|z|}/(-ja) · (a da)
    let sum = radial_integral(
        k,
        kr_max,
        rho,
        rho + z,
        density,
        |u| Complex64::from_polar(1.0, -u * z),
        |a| j * (-a * z).exp(),
    );
    Ok(sum / j)
}
