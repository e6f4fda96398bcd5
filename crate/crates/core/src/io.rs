//! Observation and image files, and the 16-bit PGM heatmap.
//!
//! Observations are a single JSON document. Images are a JSON sidecar
//! (`image.json`) next to a raw payload (`image.bin`) of little-endian `f32`
//! `(re, im)` pairs ordered component, z, y, x.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::imaging::ImageVolume;
use crate::probes::ProbeCombination;
use crate::scenario::ObservationSet;
use crate::wave::{ComplexSampleConvention, Medium, VoxelGrid};

pub const FORMAT_VERSION: u32 = 1;
pub const IMAGE_SIDECAR: &str = "image.json";
pub const IMAGE_PAYLOAD: &str = "image.bin";

/// Time dependence and phase of the opposite (physics) convention; such
/// files are accepted and conjugated on load.
const CONJUGATE_CONVENTION: (&str, &str) = ("exp(-j*omega*t)", "exp(+j*k.r)");

#[derive(Serialize)]
struct ObservationFileOut<'a> {
    version: u32,
    convention: ComplexSampleConvention,
    medium: &'a Medium,
    frequencies_hz: &'a [f64],
    probes: &'a [ProbeCombination],
    positions_m: &'a [[f64; 3]],
    weights_m2: &'a [f64],
    samples: Vec<Vec<Vec<[f64; 2]>>>,
}

pub fn observations_to_string(obs: &ObservationSet) -> Result<String> {
    obs.validate()?;
    let file = ObservationFileOut {
        version: FORMAT_VERSION,
        convention: ComplexSampleConvention::default(),
        medium: &obs.medium,
        frequencies_hz: &obs.frequencies_hz,
        probes: &obs.probes,
        positions_m: &obs.positions_m,
        weights_m2: &obs.weights_m2,
        samples: obs
            .samples
            .iter()
            .map(|p| p.iter().map(|f| f.iter().map(|c| [c.re, c.im]).collect()).collect())
            .collect(),
    };
    serde_json::to_string(&file).map_err(|e| Error::parse("observations", e.to_string()))
}

pub fn write_observations(obs: &ObservationSet, path: &Path) -> Result<()> {
    fs::write(path, observations_to_string(obs)?)?;
    Ok(())
}

fn field<T: DeserializeOwned>(obj: &mut Map<String, Value>, name: &str) -> Result<T> {
    let v = obj.remove(name).ok_or_else(|| Error::parse(name, "missing field"))?;
    serde_json::from_value(v).map_err(|e| Error::parse(name, e.to_string()))
}

fn check_version(obj: &Map<String, Value>) -> Result<()> {
    let v = obj.get("version").ok_or_else(|| Error::parse("version", "missing field"))?;
    let found = v
        .as_u64()
        .ok_or_else(|| Error::parse("version", "expected an unsigned integer"))?;
    if found != FORMAT_VERSION as u64 {
        return Err(Error::Version {
            found: found.min(u32::MAX as u64) as u32,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

fn root_object(text: &str, what: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(Error::parse(what, "expected a JSON object")),
        Err(e) => Err(Error::parse(what, e.to_string())),
    }
}

/// Parses an observation document, checking every declared dimension.
pub fn observations_from_str(text: &str) -> Result<ObservationSet> {
    let mut obj = root_object(text, "observations")?;
    check_version(&obj)?;
    let convention: ComplexSampleConvention = field(&mut obj, "convention")?;
    let conjugate = if convention.is_native() {
        false
    } else if (convention.time_dependence.as_str(), convention.propagation_phase.as_str()) == CONJUGATE_CONVENTION {
        true
    } else {
        return Err(Error::parse(
            "convention",
            format!(
                "unsupported convention ({}, {})",
                convention.time_dependence, convention.propagation_phase
            ),
        ));
    };
    let medium: Medium = field(&mut obj, "medium")?;
    let frequencies_hz: Vec<f64> = field(&mut obj, "frequencies_hz")?;
    let probes: Vec<ProbeCombination> = field(&mut obj, "probes")?;
    let positions_m: Vec<[f64; 3]> = field(&mut obj, "positions_m")?;
    let weights_m2: Vec<f64> = field(&mut obj, "weights_m2")?;
    let raw: Vec<Vec<Vec<[f64; 2]>>> = field(&mut obj, "samples")?;
    let m = positions_m.len();
    if weights_m2.len() != m {
        return Err(Error::mismatch("weights_m2", m, weights_m2.len()));
    }
    if raw.len() != probes.len() {
        return Err(Error::mismatch("samples", probes.len(), raw.len()));
    }
    for (p, per_f) in raw.iter().enumerate() {
        if per_f.len() != frequencies_hz.len() {
            return Err(Error::mismatch(format!("samples[{p}]"), frequencies_hz.len(), per_f.len()));
        }
        for (f, pts) in per_f.iter().enumerate() {
            if pts.len() != m {
                return Err(Error::mismatch(format!("samples[{p}][{f}]"), m, pts.len()));
            }
        }
    }
    let samples = raw
        .into_iter()
        .map(|p| {
            p.into_iter()
                .map(|f| {
                    f.into_iter()
                        .map(|[re, im]| {
                            let c = Complex64::new(re, im);
                            if conjugate { c.conj() } else { c }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let obs = ObservationSet {
        medium,
        frequencies_hz,
        probes,
        positions_m,
        weights_m2,
        samples,
    };
    obs.validate()?;
    Ok(obs)
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    observations_from_str(&fs::read_to_string(path)?)
}

/// Image sidecar metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageHeader {
    pub version: u32,
    pub convention: ComplexSampleConvention,
    pub grid: VoxelGrid,
    pub frequencies_hz: Vec<f64>,
    pub method: String,
    pub filter_order: Option<u32>,
    pub components: usize,
    /// Peak voxel magnitude (root of summed component intensities).
    pub normalization_peak: f64,
    pub payload: String,
    pub sample_format: String,
    pub layout: String,
}

/// Writes `image.json` and `image.bin` into `dir` (created if needed).
/// Values are stored as `f32`; per-frequency partial images are not stored.
pub fn write_image(img: &ImageVolume, dir: &Path) -> Result<()> {
    img.validate()?;
    fs::create_dir_all(dir)?;
    let header = ImageHeader {
        version: FORMAT_VERSION,
        convention: ComplexSampleConvention::default(),
        grid: img.grid.clone(),
        frequencies_hz: img.frequencies_hz.clone(),
        method: img.method.clone(),
        filter_order: img.filter_order,
        components: img.components(),
        normalization_peak: img.peak_magnitude(),
        payload: IMAGE_PAYLOAD.into(),
        sample_format: "f32le-complex".into(),
        layout: "component,z,y,x".into(),
    };
    let mut bytes = Vec::with_capacity(8 * img.grid.len() * img.components());
    for comp in &img.values {
        for v in comp {
            bytes.extend_from_slice(&(v.re as f32).to_le_bytes());
            bytes.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
    }
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::parse("image header", e.to_string()))?;
    fs::write(dir.join(IMAGE_SIDECAR), text)?;
    fs::write(dir.join(IMAGE_PAYLOAD), bytes)?;
    Ok(())
}

pub fn read_image(dir: &Path) -> Result<ImageVolume> {
    let text = fs::read_to_string(dir.join(IMAGE_SIDECAR))?;
    let obj = root_object(&text, "image header")?;
    check_version(&obj)?;
    let header: ImageHeader =
        serde_json::from_value(Value::Object(obj)).map_err(|e| Error::parse("image header", e.to_string()))?;
    header.grid.validate()?;
    if header.sample_format != "f32le-complex" {
        return Err(Error::parse("sample_format", format!("unsupported `{}`", header.sample_format)));
    }
    if header.components == 0 {
        return Err(Error::parse("components", "must be at least 1"));
    }
    let bytes = fs::read(dir.join(&header.payload))?;
    let n = header.grid.len();
    let expected = 8 * n * header.components;
    if bytes.len() != expected {
        return Err(Error::mismatch("image payload bytes", expected, bytes.len()));
    }
    let f = |i: usize| f32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as f64;
    let values = (0..header.components)
        .map(|c| {
            (0..n)
                .map(|v| {
                    let off = 8 * (c * n + v);
                    Complex64::new(f(off), f(off + 4))
                })
                .collect()
        })
        .collect();
    Ok(ImageVolume {
        grid: header.grid,
        frequencies_hz: header.frequencies_hz,
        values,
        per_frequency: Vec::new(),
        method: header.method,
        filter_order: header.filter_order,
    })
}

pub const DEFAULT_HEATMAP_FLOOR_DB: f64 = -40.0;

/// 16-bit binary PGM of `20·log10(|v|/peak)` on plane `iz`, clipped at
/// `floor_db` (black) up to 0 dB (white). The peak is taken over the whole
/// volume; the top row is the largest `y`.
pub fn export_heatmap(img: &ImageVolume, iz: usize, floor_db: f64) -> Result<Vec<u8>> {
    img.validate()?;
    if iz >= img.grid.counts[2] {
        return Err(Error::invalid(format!("plane {iz} outside the grid ({} planes)", img.grid.counts[2])));
    }
    if !(floor_db < 0.0 && floor_db.is_finite()) {
        return Err(Error::domain("heatmap floor must be a negative dB value"));
    }
    let mag = img.magnitude();
    let peak = mag.iter().copied().fold(0.0, f64::max);
    let [nx, ny, _] = img.grid.counts;
    let mut out = format!("P5\n{nx} {ny}\n65535\n").into_bytes();
    for iy in (0..ny).rev() {
        for ix in 0..nx {
            let m = mag[img.grid.index(ix, iy, iz)];
            let db = if peak > 0.0 && m > 0.0 { 20.0 * (m / peak).log10() } else { f64::NEG_INFINITY };
            let level = ((db.max(floor_db) - floor_db) / -floor_db).clamp(0.0, 1.0);
            let g = (level * 65535.0).round() as u16;
            out.extend_from_slice(&g.to_be_bytes());
        }
    }
    Ok(out)
}
