//! Acceptance criteria 1-11. Each test prints one `CRITERION n: PASS|FAIL`
//! line with the measured values, then asserts. Tests hold a shared lock so
//! the runtime figures are not inflated by concurrent tests.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use wavescope::imaging::{
    bpa_reconstruct, focusing_operator_closed, focusing_operator_numeric, image_from_spectrum,
    omega_k_direct_reconstruct, spectral_grids_for, FocusingOperatorSpec, ImageVolume, SynthesisMethod,
    fft_omega_k_reconstruct,
};
use wavescope::metrics::{
    image_entropy, power_ratio, psf_cut, resolution_width, resolution_width_6db, sidelobe_level, nrmsd,
    nrmsd_masked, central_half_mask, Axis, PsfCut, RegionOfInterest,
};
use wavescope::pipeline::{focusing_lattice, random_operator};
use wavescope::probes::ProbeCombination;
use wavescope::rng::substream;
use wavescope::scenario::{
    airplane_target, subsample_observations, synthesize_observations, ApertureSpec, ForwardModel, GridKind,
    ObservationSet, PointScatterer, Scenario,
};
use wavescope::solver::{gmres_solve, inverse_source_reconstruct, ConvergenceHistory, FnOperator, SolverConfig};
use wavescope::spectral::{
    apply_filter, weyl_planar_eval, FilterSpec, SpectralScattering, SpectrumOptions, WeightsMode,
};
use wavescope::wave::{wavelength, Medium, Vec3, VoxelGrid, SPEED_OF_LIGHT};

type C = Complex64;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Written straight to the stderr handle so the line survives output capture.
fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("CRITERION {n}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- scenarios

const F_POINT: f64 = 110e9;

fn lambda_110() -> f64 {
    SPEED_OF_LIGHT / F_POINT
}

/// 20λ × 20λ Gauß-Legendre aperture at 5λ standoff.
fn point_aperture(n: usize, perturbation: f64) -> ApertureSpec {
    let lam = lambda_110();
    ApertureSpec {
        kind: GridKind::GaussLegendre,
        center_m: [0.0, 0.0, 5.0 * lam],
        extent_m: [20.0 * lam, 20.0 * lam],
        counts: [n, n],
        perturbation_m: [perturbation; 3],
        seed: 2024,
    }
}

struct PointPsf {
    sll: [f64; 2],
    res: [f64; 2],
    res6: [f64; 2],
}

fn psf_metrics(img: &ImageVolume) -> PointPsf {
    let cx = psf_cut(img, Axis::X).unwrap();
    let cy = psf_cut(img, Axis::Y).unwrap();
    PointPsf {
        sll: [sidelobe_level(&cx), sidelobe_level(&cy)],
        res: [resolution_width(&cx).unwrap(), resolution_width(&cy).unwrap()],
        res6: [resolution_width_6db(&cx).unwrap(), resolution_width_6db(&cy).unwrap()],
    }
}

struct PointSolve {
    h0: PointPsf,
    h2: PointPsf,
    history: ConvergenceHistory,
    elapsed: Duration,
}

/// Single point scatterer, dipole probes (xx, yy, xy, yx), inverse source
/// with one solve shared by the H0 and H2 images.
fn point_solve(n: usize) -> PointSolve {
    let t0 = Instant::now();
    let sc = Scenario {
        targets: vec![PointScatterer::isotropic(0.0, 0.0, 0.0)],
        aperture: point_aperture(n, 0.0),
        probes: ProbeCombination::dipole_quad(),
        frequencies_hz: vec![F_POINT],
        forward_model: ForwardModel::HertzianDipole { radiation_only: false },
        medium: Medium::VACUUM,
    };
    let obs = synthesize_observations(&sc).unwrap();
    let voxels = VoxelGrid::plane([0.0, 0.0], [0.006, 0.006], [121, 121], 0.0).unwrap();
    let grids = spectral_grids_for(&obs, &voxels, wavescope::spectral::DEFAULT_CUTOFF).unwrap();
    let rec = inverse_source_reconstruct(&obs, &grids, FilterSpec::new(0), &SolverConfig::default()).unwrap();
    let image = |order: u32| {
        let mut s: SpectralScattering = rec.unfiltered[0].clone();
        apply_filter(FilterSpec::new(order), &grids[0], &mut s.values).unwrap();
        image_from_spectrum(&[s], &voxels, SynthesisMethod::Direct, false).unwrap()
    };
    PointSolve {
        h0: psf_metrics(&image(0)),
        h2: psf_metrics(&image(2)),
        history: rec.histories[0].clone(),
        elapsed: t0.elapsed(),
    }
}

fn point_100() -> &'static PointSolve {
    static CELL: OnceLock<PointSolve> = OnceLock::new();
    CELL.get_or_init(|| point_solve(100))
}

fn airplane_obs(perturbation: f64) -> ObservationSet {
    let sc = Scenario {
        targets: airplane_target(),
        aperture: point_aperture(100, perturbation),
        probes: vec![ProbeCombination::ideal_theta()],
        frequencies_hz: vec![F_POINT],
        forward_model: ForwardModel::IsotropicScalar,
        medium: Medium::VACUUM,
    };
    synthesize_observations(&sc).unwrap()
}

fn target_box(targets: &[PointScatterer]) -> ([f64; 2], [f64; 2]) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for t in targets {
        for a in 0..2 {
            lo[a] = lo[a].min(t.position_m[a]);
            hi[a] = hi[a].max(t.position_m[a]);
        }
    }
    (lo, hi)
}

/// `n × n` voxels over 1.2× the target box.
fn airplane_voxels(targets: &[PointScatterer], n: usize) -> VoxelGrid {
    let (lo, hi) = target_box(targets);
    let ext = 1.2 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
    VoxelGrid::plane([(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0], [ext, ext], [n, n], 0.0).unwrap()
}

fn roi_for(targets: &[PointScatterer], half_width: f64) -> RegionOfInterest {
    let pts: Vec<[f64; 3]> = targets.iter().map(|t| t.position_m).collect();
    RegionOfInterest::around_points(&pts, [half_width; 3])
}

/// Resolution limit of the unfiltered inverse-source PSF, used as the ROI
/// half-width around each airplane scatterer.
const ROI_HALF_WIDTH: f64 = 0.89e-3;

/// Same rule for the 40 GHz subsampling aperture (measured unfiltered width).
const C8_ROI_HALF_WIDTH: f64 = 2.80e-3;

fn inverse_source_image(obs: &ObservationSet, voxels: &VoxelGrid, order: u32) -> (ImageVolume, ConvergenceHistory) {
    let grids = spectral_grids_for(obs, voxels, wavescope::spectral::DEFAULT_CUTOFF).unwrap();
    let rec = inverse_source_reconstruct(obs, &grids, FilterSpec::new(order), &SolverConfig::default()).unwrap();
    let img = image_from_spectrum(&rec.spectra, voxels, SynthesisMethod::Direct, false).unwrap();
    (img, rec.histories[0].clone())
}

fn omega_k(obs: &ObservationSet, voxels: &VoxelGrid, order: u32, weights: WeightsMode) -> ImageVolume {
    let opts = SpectrumOptions {
        filter: FilterSpec::new(order),
        weights,
        ..Default::default()
    };
    omega_k_direct_reconstruct(obs, voxels, &opts).unwrap()
}

// ---------------------------------------------------------------- criteria

#[test]
fn criterion_01_adjoint_correctness() {
    let _g = serial();
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut max_dims = (0, 0);
    for seed in 0..100u64 {
        let mut rng = substream(seed, 100);
        let op = random_operator(&mut rng).unwrap();
        max_dims = (max_dims.0.max(op.range_len()), max_dims.1.max(op.domain_len()));
        let rc = |rng: &mut rand_chacha::ChaCha8Rng| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let x: Vec<C> = (0..op.domain_len()).map(|_| rc(&mut rng)).collect();
        let y: Vec<C> = (0..op.range_len()).map(|_| rc(&mut rng)).collect();
        let ax = op.forward_flat(&x).unwrap();
        let ahy = op.adjoint_flat(&y).unwrap();
        let lhs: C = ax.iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
        let rhs: C = x.iter().zip(&ahy).map(|(a, b)| a * b.conj()).sum();
        let na = ax.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max((lhs - rhs).norm() / (na * ny));
    }
    let t = secs(t0.elapsed());
    let pass = worst <= 1e-10 && max_dims.0 <= 500 && max_dims.1 <= 500 && t < 10.0;
    report(
        1,
        pass,
        &format!("max |<Ax,y>-<x,A'y>|/(|Ax||y|) = {worst:.2e} (tol 1e-10), max M={} N={}, {t:.2} s (< 10 s)", max_dims.0, max_dims.1),
    );
    assert!(pass);
}

#[test]
fn criterion_02_weyl_oracle() {
    let _g = serial();
    let t0 = Instant::now();
    let k = 2.0 * PI * 10e9 / SPEED_OF_LIGHT;
    let lam = wavelength(k);
    let mut rng = substream(2, 200);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let z = lam * (1.0 + 9.0 * i as f64 / 19.0) * if i % 2 == 0 { 1.0 } else { -1.0 };
        let r = Vec3::new(rng.random_range(-4.0..4.0) * lam, rng.random_range(-4.0..4.0) * lam, z);
        let got = weyl_planar_eval(&r, k, 3.0 * k, 2.0).unwrap();
        let d = r.norm();
        let want = C::from_polar(1.0 / d, -k * d);
        worst = worst.max((got - want).norm() / want.norm());
    }
    let t = secs(t0.elapsed());
    let pass = worst < 0.01 && t < 30.0;
    report(2, pass, &format!("max relative error {worst:.3e} over 20 points (tol 1e-2), {t:.2} s (< 30 s)"));
    assert!(pass);
}

#[test]
fn criterion_03_focusing_closed_forms() {
    let _g = serial();
    let t0 = Instant::now();
    let (k, lattice) = focusing_lattice();
    let lam = wavelength(k);
    assert_eq!(lattice.len(), 75);
    assert!(lattice.iter().all(|r| r.z.abs() >= lam));
    let mut worst = [0.0f64; 3];
    for n in 0..3u32 {
        for r in &lattice {
            let c = focusing_operator_closed(FocusingOperatorSpec::improved(n), r, k).unwrap();
            let m = focusing_operator_numeric(n, r, k, 3.0 * k).unwrap();
            worst[n as usize] = worst[n as usize].max((c - m).norm() / c.norm());
        }
    }
    // lateral cuts at d = 30 mm and 300 mm
    let mut cuts: f64 = 0.0;
    for d in [0.03, 0.3] {
        for i in 0..21 {
            let r = Vec3::new(-0.2 + 0.02 * i as f64, 0.0, -d);
            for n in 0..3 {
                let c = focusing_operator_closed(FocusingOperatorSpec::improved(n), &r, k).unwrap();
                let m = focusing_operator_numeric(n, &r, k, 3.0 * k).unwrap();
                cuts = cuts.max((c - m).norm() / c.norm());
            }
        }
    }
    let t = secs(t0.elapsed());
    let pass = worst.iter().all(|&w| w < 0.01) && cuts < 0.01 && t < 120.0;
    report(
        3,
        pass,
        &format!(
            "max rel error F0 {:.2e}, F1 {:.2e}, F2 {:.2e} on 75-point lattice; lateral cuts {cuts:.2e} (tol 1e-2); {t:.2} s (< 120 s)",
            worst[0], worst[1], worst[2]
        ),
    );
    assert!(pass);
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

#[test]
fn criterion_04_point_scatterer_psf() {
    let _g = serial();
    let s = point_100();
    let mm = |v: f64| v * 1e3;
    let (h0, h2) = (&s.h0, &s.h2);
    let ok_h0 = (0..2).all(|a| within(h0.sll[a], -16.6, 1.5) && within(mm(h0.res[a]), 0.89, 0.15));
    let ok_h2 = (0..2).all(|a| within(h2.sll[a], -23.6, 1.5) && within(mm(h2.res[a]), 1.11, 0.15));
    let sym = |p: &PointPsf| (p.sll[0] - p.sll[1]).abs() <= 0.5 && (mm(p.res[0]) - mm(p.res[1])).abs() <= 0.05;
    let t = secs(s.elapsed);
    let pass = ok_h0 && ok_h2 && sym(h0) && sym(h2) && t < 900.0;
    report(
        4,
        pass,
        &format!(
            "H0: SLL {:.2}/{:.2} dB (target -16.6±1.5), δ {:.3}/{:.3} mm (0.89±0.15); \
             H2: SLL {:.2}/{:.2} dB (-23.6±1.5), δ {:.3}/{:.3} mm (1.11±0.15); \
             -6 dB widths H0 {:.3}/{:.3} mm, H2 {:.3}/{:.3} mm; {} iterations; {t:.1} s (< 900 s)",
            h0.sll[0], h0.sll[1], mm(h0.res[0]), mm(h0.res[1]),
            h2.sll[0], h2.sll[1], mm(h2.res[0]), mm(h2.res[1]),
            mm(h0.res6[0]), mm(h0.res6[1]), mm(h2.res6[0]), mm(h2.res6[1]),
            s.history.iterations
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "full-size 160×160 run, tens of minutes"]
fn criterion_04_full_size_160() {
    let _g = serial();
    let s = point_solve(160);
    let mm = |v: f64| v * 1e3;
    let ok = (0..2).all(|a| {
        within(s.h0.sll[a], -16.66, 1.0)
            && within(mm(s.h0.res[a]), 0.89, 0.1)
            && within(s.h2.sll[a], -23.6, 1.0)
            && within(mm(s.h2.res[a]), 1.11, 0.1)
    });
    report(
        4,
        ok,
        &format!(
            "[160×160] H0 SLL {:.2}/{:.2} dB δ {:.3}/{:.3} mm; H2 SLL {:.2}/{:.2} dB δ {:.3}/{:.3} mm; {:.1} s",
            s.h0.sll[0], s.h0.sll[1], mm(s.h0.res[0]), mm(s.h0.res[1]),
            s.h2.sll[0], s.h2.sll[1], mm(s.h2.res[0]), mm(s.h2.res[1]),
            secs(s.elapsed)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_filter_benefit() {
    let _g = serial();
    let s = point_100();
    let pass = (0..2).all(|a| s.h2.sll[a] <= s.h0.sll[a] - 5.0 && s.h2.res[a] >= s.h0.res[a]);
    report(
        5,
        pass,
        &format!(
            "SLL gain x {:.2} dB, y {:.2} dB (need ≥ 5); δ H2-H0 x {:+.3} mm, y {:+.3} mm (need ≥ 0)",
            s.h0.sll[0] - s.h2.sll[0],
            s.h0.sll[1] - s.h2.sll[1],
            (s.h2.res[0] - s.h0.res[0]) * 1e3,
            (s.h2.res[1] - s.h0.res[1]) * 1e3
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_bpa_spectral_equivalence() {
    let _g = serial();
    let t0 = Instant::now();
    let obs = airplane_obs(0.0);
    let targets = airplane_target();
    let voxels = airplane_voxels(&targets, 128);
    let bpa = bpa_reconstruct(&obs, &voxels, FocusingOperatorSpec::improved(0)).unwrap();
    let spec = omega_k(&obs, &voxels, 0, WeightsMode::Native);
    let d = nrmsd(&bpa, &spec).unwrap();
    let dc = nrmsd_masked(&bpa, &spec, Some(&central_half_mask(&voxels))).unwrap();
    let t = secs(t0.elapsed());
    let pass = d < 0.05 && t < 600.0;
    report(
        6,
        pass,
        &format!("NRMSD(BPA F0, spectral H0) = {:.3}% (< 5%), central half {:.3}%; 128×128 voxels, {t:.1} s (< 600 s)", d * 100.0, dc * 100.0),
    );
    assert!(pass);
}

#[test]
fn criterion_07_robustness_ordering() {
    let _g = serial();
    let t0 = Instant::now();
    let obs = airplane_obs(0.3e-3);
    let targets = airplane_target();
    let voxels = airplane_voxels(&targets, 128);
    let roi = roi_for(&targets, ROI_HALF_WIDTH);
    let (is, hist) = inverse_source_image(&obs, &voxels, 2);
    let wk = omega_k(&obs, &voxels, 2, WeightsMode::Native);
    let f2 = bpa_reconstruct(&obs, &voxels, FocusingOperatorSpec::improved(2)).unwrap();
    let wat = bpa_reconstruct(&obs, &voxels, FocusingOperatorSpec::Watanabe).unwrap();
    let eta = |img: &ImageVolume| power_ratio(img, &roi).unwrap();
    let (e_is, e_wk, e_f2, e_wat) = (eta(&is), eta(&wk), eta(&f2), eta(&wat));
    let agree = (e_wk - e_f2).abs() / e_wk.max(e_f2);
    let pass = e_is < e_wk && e_is < e_f2 && e_f2 < e_wat && agree <= 0.15;
    report(
        7,
        pass,
        &format!(
            "η: inverse source H2 {:.2}%, ω-k direct H2 {:.2}%, BPA F2 {:.2}%, Watanabe {:.2}%; ω-k vs F2 differ {:.1}% (≤ 15%); \
             {} iterations; entropy IS {:.2} bits; {:.1} s",
            e_is * 100.0, e_wk * 100.0, e_f2 * 100.0, e_wat * 100.0, agree * 100.0,
            hist.iterations, image_entropy(&is).unwrap(), secs(t0.elapsed())
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_subsampling_degradation() {
    let _g = serial();
    let t0 = Instant::now();
    let f = 40e9;
    let scale = 2.5;
    let targets: Vec<PointScatterer> = airplane_target()
        .into_iter()
        .map(|mut t| {
            for v in t.position_m.iter_mut() {
                *v *= scale;
            }
            t
        })
        .collect();
    let sc = Scenario {
        targets: targets.clone(),
        aperture: ApertureSpec {
            kind: GridKind::Regular,
            center_m: [0.0, 0.0, 0.1125],
            extent_m: [0.2, 0.2],
            counts: [80, 80],
            perturbation_m: [0.0; 3],
            seed: 0,
        },
        probes: ProbeCombination::dipole_quad(),
        frequencies_hz: vec![f],
        forward_model: ForwardModel::HertzianDipole { radiation_only: false },
        medium: Medium::VACUUM,
    };
    let full = synthesize_observations(&sc).unwrap();
    let voxels = airplane_voxels(&targets, 128);
    let roi = roi_for(&targets, C8_ROI_HALF_WIDTH);
    let mut rows = Vec::new();
    for fraction in [0.7, 0.8, 0.9, 1.0] {
        let mut obs = subsample_observations(&full, fraction, 88).unwrap();
        obs.weights_m2 = wavescope::spectral::resolve_weights(&obs, WeightsMode::Voronoi).unwrap();
        let (is, hist) = inverse_source_image(&obs, &voxels, 2);
        let wk = omega_k(&obs, &voxels, 2, WeightsMode::Native);
        rows.push((
            fraction,
            power_ratio(&is, &roi).unwrap(),
            power_ratio(&wk, &roi).unwrap(),
            hist.iterations,
        ));
    }
    let mono = |col: usize| {
        rows.windows(2).all(|w| {
            let (a, b) = if col == 1 { (w[0].1, w[1].1) } else { (w[0].2, w[1].2) };
            a >= b
        })
    };
    let better = rows.iter().filter(|r| r.0 < 1.0).all(|r| r.1 < r.2);
    let pass = mono(1) && mono(2) && better;
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.0}%: IS {:.2}% / ω-k {:.2}% ({} it)", r.0 * 100.0, r.1 * 100.0, r.2 * 100.0, r.3))
        .collect();
    report(
        8,
        pass,
        &format!(
            "{}; IS non-increasing {}, ω-k non-increasing {}, IS < ω-k at 70-90% {}; {:.1} s",
            table.join(", "),
            mono(1),
            mono(2),
            better,
            secs(t0.elapsed())
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_solver_properties() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = substream(9, 900);
    let tight = SolverConfig {
        abs_tol: 1e-14,
        rel_tol: 1.0,
        max_iter: 200,
        reorthogonalize: 1,
    };
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..100 {
        let m = rng.random_range(1..=40usize);
        let n = rng.random_range(m..=40usize);
        let rc = |rng: &mut rand_chacha::ChaCha8Rng| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let a = DMatrix::from_fn(m, n, |_, _| rc(&mut rng));
        let x0 = DVector::from_fn(n, |_, _| rc(&mut rng));
        let b = &a * &x0;
        let aah = &a * a.adjoint();
        let op = FnOperator {
            dim: m,
            f: |v: &[C]| Ok((&aah * DVector::from_column_slice(v)).as_slice().to_vec()),
        };
        let (u, h) = gmres_solve(&op, b.as_slice(), &tight).unwrap();
        monotone &= h.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        let x = a.adjoint() * DVector::from_column_slice(&u);
        let want = a.clone().pseudo_inverse(1e-12).unwrap() * &b;
        worst = worst.max((x - &want).norm() / want.norm());
    }
    let t_small = secs(t0.elapsed());
    let s = point_100();
    let h = &s.history;
    let h_mono = h.residuals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let pass = worst <= 1e-8 && monotone && h_mono && h.converged() && h.iterations <= 150 && t_small < 60.0;
    report(
        9,
        pass,
        &format!(
            "min-norm max rel error {worst:.2e} (tol 1e-8) on 100 systems; residuals non-increasing {}; \
             point-scatterer solve stop {:?} after {} iterations (≤ 150); {t_small:.2} s (< 60 s)",
            monotone && h_mono,
            h.stop,
            h.iterations
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_fft_path_equivalence() {
    let _g = serial();
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = substream(10, 1000);
    let mut cases = 0;
    for (f, l, z) in [(24e9, 0.1, 0.08), (35e9, 0.12, 0.1), (30e9, 0.09, 0.05)] {
        let n = 32;
        let s = l / (n - 1) as f64;
        let positions: Vec<[f64; 3]> =
            (0..n * n).map(|i| [-l / 2.0 + (i % n) as f64 * s, -l / 2.0 + (i / n) as f64 * s, z]).collect();
        let targets: Vec<PointScatterer> = (0..4)
            .map(|_| PointScatterer::isotropic(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), 0.0))
            .collect();
        let probes = vec![ProbeCombination::ideal_theta()];
        let samples = wavescope::scenario::synthesize_at(
            ForwardModel::IsotropicScalar,
            &targets,
            &probes,
            &[f],
            &Medium::VACUUM,
            &positions,
        )
        .unwrap();
        let obs = ObservationSet {
            medium: Medium::VACUUM,
            frequencies_hz: vec![f],
            probes,
            weights_m2: vec![l * l / (n * n) as f64; n * n],
            positions_m: positions,
            samples,
        };
        let voxels = VoxelGrid::plane([0.0, 0.0], [l, l], [32, 32], 0.0).unwrap();
        for order in 0..3 {
            let opts = SpectrumOptions {
                filter: FilterSpec::new(order),
                weights: WeightsMode::Uniform,
                ..Default::default()
            };
            let a = fft_omega_k_reconstruct(&obs, &voxels, &opts).unwrap();
            let b = omega_k_direct_reconstruct(&obs, &voxels, &opts).unwrap();
            let peak = b.peak_magnitude();
            for (ca, cb) in a.values.iter().zip(&b.values) {
                for (x, y) in ca.iter().zip(cb) {
                    worst = worst.max((x - y).norm() / peak);
                }
            }
            cases += 1;
        }
    }
    let t = secs(t0.elapsed());
    let pass = worst <= 1e-9 && t < 5.0;
    report(10, pass, &format!("max |fft - direct|/peak = {worst:.2e} (tol 1e-9) over {cases} cases; {t:.2} s (< 5 s)"));
    assert!(pass);
}

fn profile(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> PsfCut {
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let vs = xs.iter().map(|&x| f(x)).collect();
    PsfCut::new(xs, vs).unwrap()
}

#[test]
fn criterion_11_metrics_unit_suite() {
    let _g = serial();
    let t0 = Instant::now();
    let grid = VoxelGrid::new([0.0; 3], [16, 16, 1], [1.0; 3]).unwrap();
    let mk = |f: &dyn Fn(usize) -> f64| {
        let mut img = ImageVolume::zeros(grid.clone(), 1, "t");
        for v in 0..grid.len() {
            img.values[0][v] = C::new(f(v), 0.0);
        }
        img
    };
    let single = mk(&|v| if v == 37 { 1.0 } else { 0.0 });
    let uniform = mk(&|_| 1.0);
    let p37 = grid.position(37);
    let roi_single = RegionOfInterest::around_points(&[[p37.x, p37.y, p37.z]], [0.25; 3]);
    let half = RegionOfInterest::Mask {
        mask: (0..grid.len()).map(|v| v % 2 == 0).collect(),
    };
    let eta0 = power_ratio(&single, &roi_single).unwrap();
    let eta1 = power_ratio(&uniform, &half).unwrap();
    let h0 = image_entropy(&single).unwrap();
    let hn = image_entropy(&uniform).unwrap();
    let sinc = |x: f64| if x == 0.0 { 1.0 } else { ((PI * x).sin() / (PI * x)).abs() };
    let sll = sidelobe_level(&profile(sinc, -5.0, 5.0, 200_001));
    let sigma = 1.3;
    let g = profile(|x| (-x * x / (2.0 * sigma * sigma)).exp(), -6.0, 6.0, 120_001);
    let w = resolution_width(&g).unwrap();
    let checks = [
        ("η all-inside", eta0, 0.0),
        ("η half", eta1, 1.0),
        ("entropy single", h0, 0.0),
        ("entropy uniform", hn, (grid.len() as f64).log2()),
        ("sinc SLL", sll, 20.0 * 0.217_233_628_211_221_7f64.log10()),
        ("gaussian width/σ", w / sigma, 2.0 * (2.0f64.ln()).sqrt()),
    ];
    let t = secs(t0.elapsed());
    let worst = checks.iter().map(|c| (c.1 - c.2).abs()).fold(0.0, f64::max);
    let pass = worst <= 1e-6 && (2.0 * (2.0f64.ln()).sqrt() - 1.665).abs() < 1e-3 && t < 1.0;
    let list: Vec<String> = checks.iter().map(|c| format!("{} {:.7}", c.0, c.1)).collect();
    report(11, pass, &format!("{}; max deviation {worst:.1e} (tol 1e-6); {t:.3} s (< 1 s)", list.join(", ")));
    assert!(pass);
}
