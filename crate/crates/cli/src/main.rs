//! `wavescope` command-line interface.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use wavescope::imaging::ImageVolume;
use wavescope::io::{export_heatmap, read_image, read_observations, write_image, write_observations, DEFAULT_HEATMAP_FLOOR_DB};
use wavescope::metrics::{compute_report, psf_cut, Axis, MetricsReport, RegionOfInterest};
use wavescope::pipeline::{
    parse_grid_spec, reconstruct, run_check, run_experiment, CheckKind, ExperimentConfig, ReconstructOptions,
    ReconstructionMethod,
};
use wavescope::scenario::{synthesize_observations, Scenario};
use wavescope::solver::{ConvergenceHistory, SolverConfig};
use wavescope::spectral::WeightsMode;
use wavescope::Error;

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "wavescope", version, about = "Near-field microwave imaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    InverseSource,
    OmegaKFft,
    OmegaKDirect,
    BpaNaive,
    BpaFocused,
    BpaWatanabe,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Uniform,
    Native,
    Voronoi,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    Weyl,
    Adjoint,
    Focusing,
    FftEquivalence,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize observations from a scenario file.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image from observations.
    Reconstruct {
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 0)]
        filter_order: u32,
        #[arg(long, default_value_t = 0)]
        focus_order: u32,
        #[arg(long, value_enum)]
        weights: Option<WeightsArg>,
        #[arg(long)]
        regrid_stencil: Option<usize>,
        /// `xmin:xmax:nx,ymin:ymax:ny,z` in metres, or a JSON voxel-grid file.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        /// Absolute residual tolerance of the inverse-source solver.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Stagnation ratio of the inverse-source solver.
        #[arg(long, default_value_t = 0.99)]
        rel_tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Exit with code 4 when the solver hits the iteration cap.
        #[arg(long)]
        strict: bool,
    },
    /// Compute image-quality metrics.
    Metrics {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        roi: Option<PathBuf>,
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write a PSF cut through the image peak as CSV.
    Psf {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a built-in numerical check.
    Validate {
        #[arg(long, value_enum)]
        check: CheckArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a configured experiment: simulate, reconstruct each method, report.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("WAVESCOPE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::Usage(format!("WAVESCOPE_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot configure {n} threads: {e}")))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        field: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::Lib(Error::Parse {
            field: what.into(),
            message: e.to_string(),
        })
    })
}

fn peak_plane(img: &ImageVolume) -> usize {
    let mag = img.magnitude();
    let (idx, _) = mag
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
    img.grid.unravel(idx).2
}

fn simulate(scenario: &Path, out: &Path) -> CliResult<()> {
    let sc: Scenario = read_json(scenario, "scenario")?;
    let obs = synthesize_observations(&sc)?;
    write_observations(&obs, out)?;
    println!(
        "wrote {} samples ({} probes x {} frequencies x {} points) to {}",
        obs.num_probes() * obs.num_frequencies() * obs.num_points(),
        obs.num_probes(),
        obs.num_frequencies(),
        obs.num_points(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_reconstruct(
    obs_path: &Path,
    method: MethodArg,
    filter_order: u32,
    focus_order: u32,
    weights: Option<WeightsArg>,
    regrid_stencil: Option<usize>,
    grid: &str,
    out: &Path,
    solver: SolverConfig,
    strict: bool,
) -> CliResult<()> {
    let voxels = parse_grid_spec(grid).map_err(|e| match e {
        Error::Parse { message, .. } => Failure::Usage(format!("--grid: {message}")),
        other => Failure::Lib(other),
    })?;
    solver.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let name = match method {
        MethodArg::InverseSource => "inverse-source",
        MethodArg::OmegaKFft => "omega-k-fft",
        MethodArg::OmegaKDirect => "omega-k-direct",
        MethodArg::BpaNaive => "bpa-naive",
        MethodArg::BpaFocused => "bpa-focused",
        MethodArg::BpaWatanabe => "bpa-watanabe",
    };
    let method = ReconstructionMethod::from_name(name, filter_order, focus_order)?;
    method.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let weights = match weights {
        Some(WeightsArg::Uniform) => WeightsMode::Uniform,
        Some(WeightsArg::Voronoi) => WeightsMode::Voronoi,
        Some(WeightsArg::Native) => WeightsMode::Native,
        None if matches!(method, ReconstructionMethod::OmegaKFft { .. }) => WeightsMode::Uniform,
        None => WeightsMode::Native,
    };
    let opts = ReconstructOptions {
        weights,
        regrid_stencil,
        solver,
        ..Default::default()
    };
    let obs = read_observations(obs_path)?;
    let t0 = Instant::now();
    let rec = reconstruct(&obs, &voxels, method, &opts)?;
    let wall = t0.elapsed().as_secs_f64();
    write_image(&rec.image, out)?;
    let plane = peak_plane(&rec.image);
    fs::write(out.join("image.pgm"), export_heatmap(&rec.image, plane, DEFAULT_HEATMAP_FLOOR_DB)?)?;
    write_json(
        &out.join("run.json"),
        &json!({
            "method": method.label(),
            "wall_s": wall,
            "extrapolated_points": rec.extrapolated,
            "solver_history": rec.histories,
        }),
    )?;
    println!("{}: {} voxels in {:.2} s -> {}", method.label(), rec.image.grid.len(), wall, out.display());
    for (f, h) in rec.histories.iter().enumerate() {
        println!(
            "  frequency {f}: {} iterations, residual {:.3e}, stop {:?}",
            h.iterations,
            h.final_residual(),
            h.stop
        );
    }
    if strict && rec.histories.iter().any(|h| !h.converged()) {
        return Err(Failure::Lib(Error::Numerical(
            "solver reached the iteration cap without converging (strict mode)".into(),
        )));
    }
    Ok(())
}

fn metrics(image: &Path, roi: Option<&Path>, reference: Option<&Path>, report: &Path) -> CliResult<()> {
    let img = read_image(image)?;
    let roi: Option<RegionOfInterest> = roi.map(|p| read_json(p, "roi")).transpose()?;
    let reference = reference.map(read_image).transpose()?;
    let mut r: MetricsReport = compute_report(&img, roi.as_ref(), reference.as_ref())?;
    let run = image.join("run.json");
    if run.is_file() {
        let v: serde_json::Value = read_json(&run, "run.json")?;
        r.wall_s = v.get("wall_s").and_then(|w| w.as_f64());
        if let Some(h) = v.get("solver_history") {
            r.solver_history = serde_json::from_value::<Vec<ConvergenceHistory>>(h.clone()).unwrap_or_default();
        }
    }
    write_json(report, &r)?;
    println!("{}", serde_json::to_string(&r).unwrap_or_default());
    Ok(())
}

fn psf(image: &Path, axis: AxisArg, out: &Path) -> CliResult<()> {
    let img = read_image(image)?;
    let axis = match axis {
        AxisArg::X => Axis::X,
        AxisArg::Y => Axis::Y,
    };
    let cut = psf_cut(&img, axis)?;
    let mut s = String::from("position_m,magnitude\n");
    for (x, v) in cut.coords_m.iter().zip(&cut.values) {
        s.push_str(&format!("{x:.9e},{v:.9e}\n"));
    }
    fs::write(out, s)?;
    Ok(())
}

fn validate(check: CheckArg, seed: u64) -> CliResult<()> {
    let kind = match check {
        CheckArg::Weyl => CheckKind::Weyl,
        CheckArg::Adjoint => CheckKind::Adjoint,
        CheckArg::Focusing => CheckKind::Focusing,
        CheckArg::FftEquivalence => CheckKind::FftEquivalence,
    };
    let o = run_check(kind, seed)?;
    println!(
        "{} {:?}: max error {:.3e} (tolerance {:.1e}, {} cases)",
        if o.passed { "PASS" } else { "FAIL" },
        o.check,
        o.max_error,
        o.tolerance,
        o.cases
    );
    if o.passed {
        Ok(())
    } else {
        Err(Failure::Lib(Error::Numerical(format!("{:?} check exceeded its tolerance", o.check))))
    }
}

fn experiment(config: &Path, out: &Path) -> CliResult<()> {
    let text = fs::read_to_string(config)?;
    let cfg = text.parse::<ExperimentConfig>().map_err(|e| match e {
        Error::Parse { message, .. } => Failure::Usage(format!("experiment config: {message}")),
        other => Failure::Usage(other.to_string()),
    })?;
    let rows = run_experiment(&cfg, out)?;
    print!("{}", wavescope::pipeline::comparison_csv(&rows));
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate { scenario, out } => simulate(&scenario, &out),
        Command::Reconstruct {
            obs,
            method,
            filter_order,
            focus_order,
            weights,
            regrid_stencil,
            grid,
            out,
            tol,
            rel_tol,
            max_iter,
            strict,
        } => run_reconstruct(
            &obs,
            method,
            filter_order,
            focus_order,
            weights,
            regrid_stencil,
            &grid,
            &out,
            SolverConfig {
                abs_tol: tol,
                rel_tol,
                max_iter,
                ..Default::default()
            },
            strict,
        ),
        Command::Metrics {
            image,
            roi,
            reference,
            report,
        } => metrics(&image, roi.as_deref(), reference.as_deref(), &report),
        Command::Psf { image, axis, out } => psf(&image, axis, &out),
        Command::Validate { check, seed } => validate(check, seed),
        Command::Experiment { config, out } => experiment(&config, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            })
        }
    }
}
