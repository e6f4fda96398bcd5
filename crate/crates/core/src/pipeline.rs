//! Method dispatch, voxel-grid specs, the experiment runner and the built-in
//! validation checks shared by the CLI.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    bpa_reconstruct, fft_omega_k_reconstruct, focusing_operator_closed, focusing_operator_numeric, image_from_spectrum,
    omega_k_direct_reconstruct, spectral_grids_for, FocusingOperatorSpec, ImageVolume, SynthesisMethod,
};
use crate::io::{write_image, write_observations};
use crate::metrics::{compute_report, MetricsReport, RegionOfInterest};
use crate::probes::{ProbeCombination, ProbePattern};
use crate::rng::{substream, STREAM_TEST};
use crate::scenario::{synthesize_observations, ApertureSpec, GridKind, ObservationSet, Scenario};
use crate::solver::{inverse_source_reconstruct, ConvergenceHistory, SolverConfig};
use crate::spectral::lattice::detect_rectilinear;
use crate::spectral::{
    bounding_box, lagrange_regrid, resolve_weights, weyl_planar_eval, FilterSpec, PlaneWaveOperator, SpectrumOptions,
    WeightsMode, DEFAULT_CUTOFF,
};
use crate::wave::{wavelength, SpectralGrid, Vec3, VoxelGrid};

/// Reconstruction method with its order parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ReconstructionMethod {
    InverseSource {
        #[serde(default)]
        filter_order: u32,
    },
    OmegaKFft {
        #[serde(default)]
        filter_order: u32,
    },
    OmegaKDirect {
        #[serde(default)]
        filter_order: u32,
    },
    BpaNaive,
    BpaFocused {
        #[serde(default)]
        focus_order: u32,
    },
    BpaWatanabe,
}

impl ReconstructionMethod {
    /// Parses a CLI method name with its filter / focus order.
    pub fn from_name(name: &str, filter_order: u32, focus_order: u32) -> Result<Self> {
        Ok(match name {
            "inverse-source" => ReconstructionMethod::InverseSource { filter_order },
            "omega-k-fft" => ReconstructionMethod::OmegaKFft { filter_order },
            "omega-k-direct" => ReconstructionMethod::OmegaKDirect { filter_order },
            "bpa-naive" => ReconstructionMethod::BpaNaive,
            "bpa-focused" => ReconstructionMethod::BpaFocused { focus_order },
            "bpa-watanabe" => ReconstructionMethod::BpaWatanabe,
            other => return Err(Error::invalid(format!("unknown method `{other}`"))),
        })
    }

    pub fn label(&self) -> String {
        match self {
            ReconstructionMethod::InverseSource { filter_order } => format!("inverse-source-h{filter_order}"),
            ReconstructionMethod::OmegaKFft { filter_order } => format!("omega-k-fft-h{filter_order}"),
            ReconstructionMethod::OmegaKDirect { filter_order } => format!("omega-k-direct-h{filter_order}"),
            ReconstructionMethod::BpaNaive => "bpa-naive".into(),
            ReconstructionMethod::BpaFocused { focus_order } => format!("bpa-focused-f{focus_order}"),
            ReconstructionMethod::BpaWatanabe => "bpa-watanabe".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ReconstructionMethod::BpaFocused { focus_order } = self {
            FocusingOperatorSpec::improved(*focus_order).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructOptions {
    pub weights: WeightsMode,
    /// Regrid onto a regular lattice with this stencil before imaging.
    pub regrid_stencil: Option<usize>,
    pub solver: SolverConfig,
    pub cutoff: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            weights: WeightsMode::Native,
            regrid_stencil: None,
            solver: SolverConfig::default(),
            cutoff: DEFAULT_CUTOFF,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstructed {
    pub image: ImageVolume,
    /// One entry per frequency for the inverse-source method, else empty.
    pub histories: Vec<ConvergenceHistory>,
    /// Target points extrapolated by regridding.
    pub extrapolated: usize,
}

/// Regular grid with the same node counts spanning the observation bounding box.
pub fn regular_target(obs: &ObservationSet) -> Result<ApertureSpec> {
    let rect = detect_rectilinear(&obs.positions_m)
        .ok_or_else(|| Error::invalid("regridding needs observations on a planar tensor grid"))?;
    let (lo, hi) = bounding_box(&obs.positions_m);
    let ext = |a: usize| if hi[a] > lo[a] { hi[a] - lo[a] } else { 1.0 };
    Ok(ApertureSpec {
        kind: GridKind::Regular,
        center_m: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, rect.z],
        extent_m: [ext(0), ext(1)],
        counts: [rect.xs.len(), rect.ys.len()],
        perturbation_m: [0.0; 3],
        seed: 0,
    })
}

pub fn reconstruct(
    obs: &ObservationSet,
    voxels: &VoxelGrid,
    method: ReconstructionMethod,
    opts: &ReconstructOptions,
) -> Result<Reconstructed> {
    method.validate()?;
    opts.solver.validate()?;
    let mut extrapolated = 0;
    let regridded;
    let obs = match opts.regrid_stencil {
        Some(s) => {
            let r = lagrange_regrid(obs, &regular_target(obs)?, s)?;
            extrapolated = r.extrapolated;
            regridded = r.observations;
            &regridded
        }
        None => obs,
    };
    let spectrum_opts = |order: u32| SpectrumOptions {
        filter: FilterSpec::new(order),
        weights: opts.weights,
        ..Default::default()
    };
    let mut histories = Vec::new();
    let image = match method {
        ReconstructionMethod::InverseSource { filter_order } => {
            let grids = spectral_grids_for(obs, voxels, opts.cutoff)?;
            let rec = inverse_source_reconstruct(obs, &grids, FilterSpec::new(filter_order), &opts.solver)?;
            histories = rec.histories;
            let mut img = image_from_spectrum(&rec.spectra, voxels, SynthesisMethod::Direct, false)?;
            img.method = "inverse-source".into();
            img.filter_order = Some(filter_order);
            img
        }
        ReconstructionMethod::OmegaKFft { filter_order } => {
            fft_omega_k_reconstruct(obs, voxels, &spectrum_opts(filter_order))?
        }
        ReconstructionMethod::OmegaKDirect { filter_order } => {
            omega_k_direct_reconstruct(obs, voxels, &spectrum_opts(filter_order))?
        }
        ReconstructionMethod::BpaNaive | ReconstructionMethod::BpaFocused { .. } | ReconstructionMethod::BpaWatanabe => {
            let spec = match method {
                ReconstructionMethod::BpaNaive => FocusingOperatorSpec::Naive,
                ReconstructionMethod::BpaFocused { focus_order } => FocusingOperatorSpec::improved(focus_order),
                _ => FocusingOperatorSpec::Watanabe,
            };
            if opts.weights == WeightsMode::Native {
                bpa_reconstruct(obs, voxels, spec)?
            } else {
                let mut o = obs.clone();
                o.weights_m2 = resolve_weights(obs, opts.weights)?;
                bpa_reconstruct(&o, voxels, spec)?
            }
        }
    };
    Ok(Reconstructed {
        image,
        histories,
        extrapolated,
    })
}

fn parse_num(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::parse("grid", format!("bad {what} `{s}`")))
}

fn parse_axis(s: &str, what: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => {
            let v = parse_num(v, what)?;
            Ok((v, v, 1))
        }
        [a, b, n] => {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::parse("grid", format!("bad {what} count `{n}`")))?;
            Ok((parse_num(a, what)?, parse_num(b, what)?, n))
        }
        _ => Err(Error::parse("grid", format!("{what} axis must be `value` or `min:max:count`"))),
    }
}

/// Parses `xmin:xmax:nx,ymin:ymax:ny,z` (or `zmin:zmax:nz`), metres, endpoints
/// included. A path to a JSON [`VoxelGrid`] is also accepted.
pub fn parse_grid_spec(spec: &str) -> Result<VoxelGrid> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        let grid: VoxelGrid = serde_json::from_str(&text).map_err(|e| Error::parse("grid", e.to_string()))?;
        grid.validate()?;
        return Ok(grid);
    }
    let axes: Vec<&str> = spec.split(',').collect();
    if axes.len() != 3 {
        return Err(Error::parse("grid", "expected three comma-separated axes x,y,z"));
    }
    let mut origin = [0.0; 3];
    let mut counts = [1; 3];
    let mut spacing = [1.0; 3];
    for (a, (s, name)) in axes.iter().zip(["x", "y", "z"]).enumerate() {
        let (lo, hi, n) = parse_axis(s, name)?;
        if n == 0 {
            return Err(Error::parse("grid", format!("{name} count must be at least 1")));
        }
        origin[a] = lo;
        counts[a] = n;
        if n > 1 {
            if !(hi > lo) {
                return Err(Error::parse("grid", format!("{name} axis needs max > min")));
            }
            spacing[a] = (hi - lo) / (n - 1) as f64;
        }
    }
    VoxelGrid::new(origin, counts, spacing)
}

/// Voxel plane at the target height spanning `scale` times the target box
/// (at least one wavelength of the highest frequency on each axis).
pub fn default_voxel_grid(scenario: &Scenario, counts: [usize; 2], scale: f64) -> Result<VoxelGrid> {
    let pts: Vec<[f64; 3]> = scenario.targets.iter().map(|t| t.position_m).collect();
    let (lo, hi) = bounding_box(&pts);
    let fmax = scenario.frequencies_hz.iter().copied().fold(0.0, f64::max);
    let k = crate::wave::wavenumber_from_frequency(fmax, &scenario.medium)?;
    let ext = |a: usize| ((hi[a] - lo[a]) * scale).max(wavelength(k));
    let z = pts.iter().map(|p| p[2]).sum::<f64>() / pts.len() as f64;
    VoxelGrid::plane(
        [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
        [ext(0), ext(1)],
        counts,
        z,
    )
}

/// Scenario, methods and metric settings for [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<ReconstructionMethod>,
    /// Explicit voxel grid; defaults to 256×256 over 1.2× the target box.
    #[serde(default)]
    pub voxels: Option<VoxelGrid>,
    /// ROI half-widths around each target for the power ratio.
    #[serde(default)]
    pub roi_half_width_m: Option<[f64; 3]>,
    #[serde(default)]
    pub options: ReconstructOptions,
}

impl std::str::FromStr for ExperimentConfig {
    type Err = Error;

    /// Parses and checks everything that can be checked before computing.
    fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::parse("experiment", e.to_string()))?;
        cfg.scenario.validate()?;
        if cfg.methods.is_empty() {
            return Err(Error::invalid("experiment lists no methods"));
        }
        for m in &cfg.methods {
            m.validate()?;
        }
        cfg.options.solver.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub report: MetricsReport,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

/// Comparison table, one row per method.
pub fn comparison_csv(rows: &[ExperimentRow]) -> String {
    let mut s = String::from("method,eta,entropy_bits,sll_db_x,sll_db_y,res_m_x,res_m_y,iterations,wall_s\n");
    for r in rows {
        let it: usize = r.report.solver_history.iter().map(|h| h.iterations).sum();
        let it = if r.report.solver_history.is_empty() { String::new() } else { it.to_string() };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.label,
            fmt_opt(r.report.eta),
            fmt_opt(r.report.entropy_bits),
            fmt_opt(r.report.sll_db_x),
            fmt_opt(r.report.sll_db_y),
            fmt_opt(r.report.res_m_x),
            fmt_opt(r.report.res_m_y),
            it,
            fmt_opt(r.report.wall_s),
        ));
    }
    s
}

/// simulate → reconstruct (each method) → metrics. Writes
/// `observations.json`, `<label>/image.{json,bin}`, `<label>/report.json` and
/// `comparison.csv` under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ExperimentRow>> {
    fs::create_dir_all(out_dir)?;
    let obs = synthesize_observations(&cfg.scenario)?;
    write_observations(&obs, &out_dir.join("observations.json"))?;
    let voxels = match &cfg.voxels {
        Some(v) => v.clone(),
        None => default_voxel_grid(&cfg.scenario, [256, 256], 1.2)?,
    };
    let roi = cfg.roi_half_width_m.map(|hw| {
        let pts: Vec<[f64; 3]> = cfg.scenario.targets.iter().map(|t| t.position_m).collect();
        RegionOfInterest::around_points(&pts, hw)
    });
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for method in &cfg.methods {
        let mut label = method.label();
        let mut i = 2;
        while !seen.insert(label.clone()) {
            label = format!("{}-{i}", method.label());
            i += 1;
        }
        let t0 = Instant::now();
        let rec = reconstruct(&obs, &voxels, *method, &cfg.options)?;
        let wall = t0.elapsed().as_secs_f64();
        let mut report = compute_report(&rec.image, roi.as_ref(), None)?;
        report.wall_s = Some(wall);
        report.solver_history = rec.histories;
        let dir = out_dir.join(&label);
        write_image(&rec.image, &dir)?;
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::parse("report", e.to_string()))?;
        fs::write(dir.join("report.json"), text)?;
        rows.push(ExperimentRow { label, report });
    }
    fs::write(out_dir.join("comparison.csv"), comparison_csv(&rows))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Weyl,
    Adjoint,
    Focusing,
    FftEquivalence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub passed: bool,
    /// Worst observed error in the check's own measure.
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

fn rand_c(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn check_weyl(seed: u64) -> Result<(f64, usize)> {
    let mut rng = substream(seed, STREAM_TEST);
    let k = 2.0 * PI / 0.01;
    let lam = wavelength(k);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z = rng.random_range(lam..10.0 * lam) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let r = Vec3::new(rng.random_range(-3.0 * lam..3.0 * lam), rng.random_range(-3.0 * lam..3.0 * lam), z);
        let got = weyl_planar_eval(&r, k, 3.0 * k, 2.0)?;
        let d = r.norm();
        let want = Complex64::from_polar(1.0 / d, -k * d);
        worst = worst.max((got - want).norm() / want.norm());
    }
    Ok((worst, 20))
}

/// Random operator with `4N ≤ 500` unknowns and `P·M ≤ 500` observations.
pub fn random_operator(rng: &mut impl Rng) -> Result<PlaneWaveOperator> {
    let k = rng.random_range(50.0..300.0);
    let ratio = rng.random_range(1.5..6.0);
    let grid = SpectralGrid::with_spacing(k / ratio, k / ratio * rng.random_range(0.8..1.25), k, DEFAULT_CUTOFF)?;
    let all = [
        ProbeCombination::ideal_theta(),
        ProbeCombination::new(ProbePattern::IdealPhi, ProbePattern::IdealTheta),
        ProbeCombination::new(ProbePattern::dipole(1.0, 0.0, 0.0), ProbePattern::dipole(0.0, 1.0, 0.0)),
        ProbeCombination::new(ProbePattern::dipole(0.6, 0.0, 0.8), ProbePattern::dipole(1.0, 0.0, 0.0)),
    ];
    let p = rng.random_range(1..=all.len());
    let probes = all[..p].to_vec();
    let m = rng.random_range(1..=500 / p);
    let positions: Vec<[f64; 3]> = (0..m)
        .map(|_| {
            [
                rng.random_range(-0.2..0.2),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.05..0.1),
            ]
        })
        .collect();
    PlaneWaveOperator::new(&grid, &positions, &probes)
}

fn check_adjoint(seed: u64) -> Result<(f64, usize)> {
    let mut rng = substream(seed, STREAM_TEST + 1);
    let mut worst: f64 = 0.0;
    let cases = 10;
    for _ in 0..cases {
        let op = random_operator(&mut rng)?;
        let x: Vec<Complex64> = (0..op.domain_len()).map(|_| rand_c(&mut rng)).collect();
        let y: Vec<Complex64> = (0..op.range_len()).map(|_| rand_c(&mut rng)).collect();
        let ax = op.forward_flat(&x)?;
        let ahy = op.adjoint_flat(&y)?;
        let lhs: Complex64 = ax.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = x.iter().zip(&ahy).map(|(a, b)| a * b.conj()).sum();
        let na = ax.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).norm() / (na * ny));
    }
    Ok((worst, cases))
}

/// The 5×5×3 lattice of `R` used by the focusing check, at `k = 210 rad/m`.
pub fn focusing_lattice() -> (f64, Vec<Vec3>) {
    let k = 210.0;
    let mut pts = Vec::new();
    for &z in &[-0.030, -0.100, -0.300] {
        for &y in &[-0.1, -0.05, 0.0, 0.05, 0.1] {
            for &x in &[-0.1, -0.05, 0.0, 0.05, 0.1] {
                pts.push(Vec3::new(x, y, z));
            }
        }
    }
    (k, pts)
}

fn check_focusing() -> Result<(f64, usize)> {
    let (k, pts) = focusing_lattice();
    let mut worst: f64 = 0.0;
    for n in 0..3 {
        for r in &pts {
            let c = focusing_operator_closed(FocusingOperatorSpec::improved(n), r, k)?;
            let m = focusing_operator_numeric(n, r, k, 3.0 * k)?;
            worst = worst.max((c - m).norm() / c.norm());
        }
    }
    Ok((worst, 3 * pts.len()))
}

fn check_fft(seed: u64) -> Result<(f64, usize)> {
    use crate::scenario::{synthesize_at, ForwardModel, PointScatterer};
    let mut rng = substream(seed, STREAM_TEST + 2);
    let mut worst: f64 = 0.0;
    let cases = 3;
    for _ in 0..cases {
        let f = rng.random_range(20e9..40e9);
        let (n, l) = (32, 0.1);
        let positions: Vec<[f64; 3]> = (0..n * n)
            .map(|i| {
                let s = l / (n - 1) as f64;
                [-l / 2.0 + (i % n) as f64 * s, -l / 2.0 + (i / n) as f64 * s, 0.08]
            })
            .collect();
        let targets: Vec<PointScatterer> = (0..3)
            .map(|_| PointScatterer::isotropic(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), 0.0))
            .collect();
        let probes = vec![ProbeCombination::ideal_theta()];
        let samples = synthesize_at(
            ForwardModel::IsotropicScalar,
            &targets,
            &probes,
            &[f],
            &Default::default(),
            &positions,
        )?;
        let obs = ObservationSet {
            medium: Default::default(),
            frequencies_hz: vec![f],
            probes,
            weights_m2: vec![l * l / (n * n) as f64; n * n],
            positions_m: positions,
            samples,
        };
        let voxels = VoxelGrid::plane([0.0, 0.0], [l, l], [n, n], 0.0)?;
        let opts = SpectrumOptions {
            weights: WeightsMode::Uniform,
            filter: FilterSpec::new(rng.random_range(0..3)),
            ..Default::default()
        };
        let a = fft_omega_k_reconstruct(&obs, &voxels, &opts)?;
        let b = omega_k_direct_reconstruct(&obs, &voxels, &opts)?;
        let peak = b.peak_magnitude();
        for (ca, cb) in a.values.iter().zip(&b.values) {
            for (x, y) in ca.iter().zip(cb) {
                worst = worst.max((x - y).norm() / peak);
            }
        }
    }
    Ok((worst, cases))
}

/// Runs one of the built-in numerical checks.
pub fn run_check(check: CheckKind, seed: u64) -> Result<CheckOutcome> {
    let (tolerance, (max_error, cases)) = match check {
        CheckKind::Weyl => (0.01, check_weyl(seed)?),
        CheckKind::Adjoint => (1e-10, check_adjoint(seed)?),
        CheckKind::Focusing => (0.01, check_focusing()?),
        CheckKind::FftEquivalence => (1e-9, check_fft(seed)?),
    };
    Ok(CheckOutcome {
        check,
        passed: max_error <= tolerance,
        max_error,
        tolerance,
        cases,
    })
}
