//! Synthetic scenarios: aperture sampling grids, point targets and the
//! first-order Born forward model.

use nalgebra::Matrix3;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probes::{spherical_basis, ProbeCombination, ProbePattern};
use crate::quadrature::gauss_legendre_on;
use crate::rng::{substream, STREAM_PERTURB_X, STREAM_PERTURB_Y, STREAM_PERTURB_Z, STREAM_SUBSAMPLE};
use crate::wave::{wavenumber_from_frequency, Medium, Vec3};

/// Scattering strength of a point target.
///
/// Dyad entries follow the probe weight layout `[θθ, φφ, φθ, θφ]`, first index
/// receive, second transmit, resolved in the spherical basis of the direction
/// from the observation point to the scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reflectivity {
    Isotropic(Complex64),
    Dyad([Complex64; 4]),
}

impl Reflectivity {
    pub fn components(&self) -> [Complex64; 4] {
        let z = Complex64::new(0.0, 0.0);
        match *self {
            Reflectivity::Isotropic(s) => [s, s, z, z],
            Reflectivity::Dyad(d) => d,
        }
    }

    fn is_nonzero(&self) -> bool {
        self.components().iter().any(|c| c.norm() > 0.0)
    }

    /// Cartesian 3×3 dyad for the direction `rhat`.
    fn cartesian(&self, rhat: &Vec3) -> Matrix3<Complex64> {
        match *self {
            Reflectivity::Isotropic(s) => Matrix3::identity() * s,
            Reflectivity::Dyad(d) => {
                let (th, ph) = spherical_basis(rhat);
                let th = th.map(|v| Complex64::new(v, 0.0));
                let ph = ph.map(|v| Complex64::new(v, 0.0));
                th * th.transpose() * d[0]
                    + ph * ph.transpose() * d[1]
                    + ph * th.transpose() * d[2]
                    + th * ph.transpose() * d[3]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointScatterer {
    pub position_m: [f64; 3],
    pub reflectivity: Reflectivity,
}

impl PointScatterer {
    pub fn isotropic(x: f64, y: f64, z: f64) -> Self {
        PointScatterer {
            position_m: [x, y, z],
            reflectivity: Reflectivity::Isotropic(Complex64::new(1.0, 0.0)),
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position_m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position_m.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("scatterer position must be finite"));
        }
        if !self.reflectivity.is_nonzero() {
            return Err(Error::domain("scatterer reflectivity is identically zero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Regular,
    GaussLegendre,
}

/// Planar observation aperture; `center_m[2]` is the standoff plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    pub kind: GridKind,
    pub center_m: [f64; 3],
    pub extent_m: [f64; 2],
    pub counts: [usize; 2],
    #[serde(default)]
    pub perturbation_m: [f64; 3],
    #[serde(default)]
    pub seed: u64,
}

impl ApertureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.counts.contains(&0) {
            return Err(Error::domain("aperture counts must be at least 1"));
        }
        if self.extent_m.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::domain("aperture extents must be positive"));
        }
        if self.perturbation_m.iter().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return Err(Error::domain("perturbation half-widths must be non-negative"));
        }
        if !self.center_m.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("aperture center must be finite"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.extent_m[0] * self.extent_m[1]
    }
}

/// Positions (m) and quadrature weights (m²) of an aperture grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledAperture {
    pub positions_m: Vec<[f64; 3]>,
    pub weights_m2: Vec<f64>,
}

fn tensor_grid(spec: &ApertureSpec, xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> SampledAperture {
    let mut positions_m = Vec::with_capacity(xs.len() * ys.len());
    let mut weights_m2 = Vec::with_capacity(xs.len() * ys.len());
    for (y, wy) in ys.iter().zip(wy) {
        for (x, wx) in xs.iter().zip(wx) {
            positions_m.push([*x, *y, spec.center_m[2]]);
            weights_m2.push(wx * wy);
        }
    }
    SampledAperture { positions_m, weights_m2 }
}

/// Equispaced points including the aperture edges, uniform weights. Points
/// are ordered x fastest.
pub fn make_regular_grid(spec: &ApertureSpec) -> Result<SampledAperture> {
    spec.validate()?;
    if spec.kind != GridKind::Regular {
        return Err(Error::invalid("make_regular_grid needs a regular aperture spec"));
    }
    let axis = |a: usize| -> Vec<f64> {
        let n = spec.counts[a];
        let (c, l) = (spec.center_m[a], spec.extent_m[a]);
        if n == 1 {
            vec![c]
        } else {
            (0..n).map(|i| c - l / 2.0 + l * i as f64 / (n - 1) as f64).collect()
        }
    };
    let (xs, ys) = (axis(0), axis(1));
    let w = spec.area() / (spec.counts[0] * spec.counts[1]) as f64;
    Ok(tensor_grid(spec, &xs, &vec![w; xs.len()], &ys, &vec![1.0; ys.len()]))
}

/// Tensor-product Gauss–Legendre nodes and weights scaled to the aperture.
pub fn make_gauss_legendre_grid(spec: &ApertureSpec) -> Result<SampledAperture> {
    spec.validate()?;
    if spec.kind != GridKind::GaussLegendre {
        return Err(Error::invalid("make_gauss_legendre_grid needs a gauss-legendre aperture spec"));
    }
    let axis = |a: usize| {
        let h = spec.extent_m[a] / 2.0;
        gauss_legendre_on(spec.counts[a], spec.center_m[a] - h, spec.center_m[a] + h)
    };
    let (xs, wx) = axis(0);
    let (ys, wy) = axis(1);
    Ok(tensor_grid(spec, &xs, &wx, &ys, &wy))
}

/// Grid of the requested kind with the spec's perturbation applied.
pub fn make_aperture(spec: &ApertureSpec) -> Result<SampledAperture> {
    let mut grid = match spec.kind {
        GridKind::Regular => make_regular_grid(spec)?,
        GridKind::GaussLegendre => make_gauss_legendre_grid(spec)?,
    };
    grid.positions_m = perturb_grid(&grid.positions_m, spec.perturbation_m, spec.seed)?;
    Ok(grid)
}

/// Adds an independent uniform offset in `[-h, h]` to every coordinate.
pub fn perturb_grid(positions: &[[f64; 3]], half_widths: [f64; 3], seed: u64) -> Result<Vec<[f64; 3]>> {
    if half_widths.iter().any(|&h| !(h >= 0.0 && h.is_finite())) {
        return Err(Error::domain("perturbation half-widths must be non-negative"));
    }
    let mut out = positions.to_vec();
    let streams = [STREAM_PERTURB_X, STREAM_PERTURB_Y, STREAM_PERTURB_Z];
    for (axis, &h) in half_widths.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        let mut rng = substream(seed, streams[axis]);
        for p in out.iter_mut() {
            let u: f64 = rng.random();
            p[axis] += (2.0 * u - 1.0) * h;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ForwardModel {
    /// `E = e^{-jkR}/R`, scalar; only ideal probes are accepted.
    IsotropicScalar,
    /// Closed-form probe fields projected through the scatterer dyad.
    HertzianDipole {
        #[serde(default)]
        radiation_only: bool,
    },
}

/// Samples `T_p(r_m, f)` on an observation aperture.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub medium: Medium,
    pub frequencies_hz: Vec<f64>,
    pub probes: Vec<ProbeCombination>,
    pub positions_m: Vec<[f64; 3]>,
    pub weights_m2: Vec<f64>,
    /// Indexed `[probe][frequency][point]`.
    pub samples: Vec<Vec<Vec<Complex64>>>,
}

impl ObservationSet {
    pub fn num_points(&self) -> usize {
        self.positions_m.len()
    }

    pub fn num_probes(&self) -> usize {
        self.probes.len()
    }

    pub fn num_frequencies(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn wavenumbers(&self) -> Result<Vec<f64>> {
        self.frequencies_hz
            .iter()
            .map(|&f| wavenumber_from_frequency(f, &self.medium))
            .collect()
    }

    /// Samples of every probe at frequency index `f`.
    pub fn at_frequency(&self, f: usize) -> Vec<Vec<Complex64>> {
        self.samples.iter().map(|per_f| per_f[f].clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        let m = self.positions_m.len();
        if m == 0 {
            return Err(Error::invalid("observation set has no points"));
        }
        if self.weights_m2.len() != m {
            return Err(Error::mismatch("weights_m2", m, self.weights_m2.len()));
        }
        if self.weights_m2.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::domain("quadrature weights must be non-negative"));
        }
        if self.positions_m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("observation positions must be finite"));
        }
        if self.frequencies_hz.is_empty() {
            return Err(Error::invalid("observation set has no frequencies"));
        }
        for &f in &self.frequencies_hz {
            wavenumber_from_frequency(f, &self.medium)?;
        }
        if self.probes.is_empty() {
            return Err(Error::invalid("observation set has no probe combinations"));
        }
        for p in &self.probes {
            p.validate()?;
        }
        if self.samples.len() != self.probes.len() {
            return Err(Error::mismatch("samples", self.probes.len(), self.samples.len()));
        }
        for per_f in &self.samples {
            if per_f.len() != self.frequencies_hz.len() {
                return Err(Error::mismatch("samples[p]", self.frequencies_hz.len(), per_f.len()));
            }
            for per_m in per_f {
                if per_m.len() != m {
                    return Err(Error::mismatch("samples[p][f]", m, per_m.len()));
                }
            }
        }
        Ok(())
    }

    /// Keeps the points at `indices` (in the given order).
    pub fn select(&self, indices: &[usize]) -> ObservationSet {
        ObservationSet {
            medium: self.medium,
            frequencies_hz: self.frequencies_hz.clone(),
            probes: self.probes.clone(),
            positions_m: indices.iter().map(|&i| self.positions_m[i]).collect(),
            weights_m2: indices.iter().map(|&i| self.weights_m2[i]).collect(),
            samples: self
                .samples
                .iter()
                .map(|per_f| per_f.iter().map(|s| indices.iter().map(|&i| s[i]).collect()).collect())
                .collect(),
        }
    }
}

/// Random subset of `⌊fraction·M⌋` points, original order kept, weights untouched.
pub fn subsample_observations(obs: &ObservationSet, fraction: f64, seed: u64) -> Result<ObservationSet> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::domain("retention fraction must lie in (0, 1]"));
    }
    let m = obs.num_points();
    let keep = ((fraction * m as f64) + 1e-9).floor() as usize;
    if keep == 0 {
        return Err(Error::invalid("subsampling leaves no observation points"));
    }
    let mut rng = substream(seed, STREAM_SUBSAMPLE);
    let mut idx = rand::seq::index::sample(&mut rng, m, keep).into_vec();
    idx.sort_unstable();
    Ok(obs.select(&idx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub targets: Vec<PointScatterer>,
    pub aperture: ApertureSpec,
    pub probes: Vec<ProbeCombination>,
    pub frequencies_hz: Vec<f64>,
    pub forward_model: ForwardModel,
    #[serde(default)]
    pub medium: Medium,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::invalid("scenario has no targets"));
        }
        if self.frequencies_hz.is_empty() {
            return Err(Error::invalid("scenario has no frequencies"));
        }
        if self.probes.is_empty() {
            return Err(Error::invalid("scenario has no probe combinations"));
        }
        for t in &self.targets {
            t.validate()?;
        }
        for p in &self.probes {
            p.validate()?;
        }
        self.aperture.validate()?;
        self.medium.validate()?;
        for &f in &self.frequencies_hz {
            wavenumber_from_frequency(f, &self.medium)?;
        }
        Ok(())
    }
}

/// 51 unit isotropic scatterers tracing an airplane in the z = 0 plane,
/// nose towards +y, inside a 40 mm × 40 mm box.
pub fn airplane_target() -> Vec<PointScatterer> {
    const MM: f64 = 1e-3;
    // right half (x > 0); mirrored to x < 0
    const HALF: [(f64, f64); 19] = [
        // wing leading edge, tip, trailing edge
        (3.0, 3.5),
        (6.0, 2.5),
        (9.0, 1.5),
        (12.0, 0.5),
        (15.0, -0.5),
        (18.0, -1.5),
        (18.0, -4.5),
        (13.5, -4.0),
        (9.0, -3.5),
        (4.5, -3.0),
        // tailplane
        (2.5, -13.0),
        (5.0, -13.5),
        (7.5, -14.0),
        (8.0, -16.5),
        (5.0, -16.5),
        (2.5, -16.5),
        // fuselage sides
        (1.5, 12.0),
        (1.5, 7.0),
        (1.5, -8.0),
    ];
    let mut out = Vec::with_capacity(51);
    for i in 0..13 {
        out.push(PointScatterer::isotropic(0.0, (-18.0 + 3.0 * i as f64) * MM, 0.0));
    }
    for &(x, y) in &HALF {
        out.push(PointScatterer::isotropic(x * MM, y * MM, 0.0));
        out.push(PointScatterer::isotropic(-x * MM, y * MM, 0.0));
    }
    out
}

fn ideal_polarization(p: &ProbePattern) -> Option<usize> {
    match p {
        ProbePattern::IdealTheta => Some(0),
        ProbePattern::IdealPhi => Some(1),
        ProbePattern::HertzianDipole { .. } => None,
    }
}

/// Born response of one scatterer at one observation point.
fn scatterer_response(
    model: ForwardModel,
    combo: &ProbeCombination,
    target: &PointScatterer,
    r_m: &Vec3,
    k: f64,
) -> Result<Complex64> {
    let r = target.position() - r_m;
    let dist = r.norm();
    if dist == 0.0 {
        return Err(Error::domain("scatterer coincides with an observation point"));
    }
    match model {
        ForwardModel::IsotropicScalar => {
            let (Some(t), Some(rx)) = (ideal_polarization(&combo.tx), ideal_polarization(&combo.rx)) else {
                return Err(Error::invalid("the isotropic scalar model accepts ideal probes only"));
            };
            // [θθ, φφ, φθ, θφ] indexed by (rx, tx)
            let slot = [[0, 3], [2, 1]][rx][t];
            let s = target.reflectivity.components()[slot];
            Ok(s * Complex64::from_polar(1.0 / (dist * dist), -2.0 * k * dist))
        }
        ForwardModel::HertzianDipole { radiation_only } => {
            let et = combo.tx.radiated_field(&r, k, radiation_only)?;
            let er = combo.rx.radiated_field(&r, k, radiation_only)?;
            let s = target.reflectivity.cartesian(&(r / dist));
            Ok((er.transpose() * s * et)[(0, 0)])
        }
    }
}

/// Forward-simulates the scenario; weights come from the aperture rule.
pub fn synthesize_observations(scenario: &Scenario) -> Result<ObservationSet> {
    scenario.validate()?;
    let grid = make_aperture(&scenario.aperture)?;
    let max_target_z = scenario
        .targets
        .iter()
        .map(|t| t.position_m[2])
        .fold(f64::NEG_INFINITY, f64::max);
    if grid.positions_m.iter().any(|p| p[2] <= max_target_z) {
        return Err(Error::invalid(
            "every observation point must lie above every target (larger z)",
        ));
    }
    let samples = synthesize_at(
        scenario.forward_model,
        &scenario.targets,
        &scenario.probes,
        &scenario.frequencies_hz,
        &scenario.medium,
        &grid.positions_m,
    )?;
    Ok(ObservationSet {
        medium: scenario.medium,
        frequencies_hz: scenario.frequencies_hz.clone(),
        probes: scenario.probes.clone(),
        positions_m: grid.positions_m,
        weights_m2: grid.weights_m2,
        samples,
    })
}

/// Sample tensor `[probe][frequency][point]` for explicit positions.
pub fn synthesize_at(
    model: ForwardModel,
    targets: &[PointScatterer],
    probes: &[ProbeCombination],
    frequencies_hz: &[f64],
    medium: &Medium,
    positions_m: &[[f64; 3]],
) -> Result<Vec<Vec<Vec<Complex64>>>> {
    let ks = frequencies_hz
        .iter()
        .map(|&f| wavenumber_from_frequency(f, medium))
        .collect::<Result<Vec<_>>>()?;
    probes
        .iter()
        .map(|combo| {
            ks.iter()
                .map(|&k| {
                    positions_m
                        .par_iter()
                        .map(|p| {
                            let r_m = Vec3::from(*p);
                            let mut acc = Complex64::new(0.0, 0.0);
                            for t in targets {
                                acc += scatterer_response(model, combo, t, &r_m, k)?;
                            }
                            Ok(acc)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect()
        })
        .collect()
}
