//! CSV emission, surface ingestion, and run manifests.
//!
//! Every float is written at 17 significant digits so a re-read recovers
//! the exact bit pattern; column layouts are fixed and documented on each
//! writer so external tooling can rely on them.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{CirSnapshot, PathKind};
use crate::evolution::StepReport;
use crate::registry::ScattererClass;
use crate::stats::{DopplerSpectrum, TransferGrid};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: surface rows do not form one rectangular (time, frequency) grid")]
    RaggedGrid { path: PathBuf },
    #[error(transparent)]
    Toml(#[from] toml::ser::Error),
}

/// Lossless float formatting: 17 significant digits round-trip exactly.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn kind_name(kind: PathKind) -> &'static str {
    match kind {
        PathKind::Los => "los",
        PathKind::GroundReflection => "ground",
        PathKind::StaticNlos => "static",
        PathKind::DynamicNlos => "dynamic",
    }
}

fn class_name(class: ScattererClass) -> &'static str {
    match class {
        ScattererClass::Static => "static",
        ScattererClass::Dynamic => "dynamic",
    }
}

/// Impulse-response rows, one per path component:
/// `t, kind, cluster_id, scatterer_id, re(gain), im(gain), delay_ns,
/// doppler_hz`. Paths without a cluster carry `-` in the id columns.
pub fn write_cir_csv<W: Write>(out: &mut W, snapshots: &[CirSnapshot]) -> Result<(), IoError> {
    writeln!(out, "t, kind, cluster_id, scatterer_id, re(gain), im(gain), delay_ns, doppler_hz")?;
    for snap in snapshots {
        for c in &snap.components {
            let cluster = c.cluster.map_or("-".to_owned(), |v| v.to_string());
            let scatterer = c.scatterer.map_or("-".to_owned(), |v| v.to_string());
            writeln!(
                out,
                "{}, {}, {}, {}, {}, {}, {}, {}",
                fmt(snap.time),
                kind_name(c.kind),
                cluster,
                scatterer,
                fmt(c.gain.re),
                fmt(c.gain.im),
                fmt(c.delay * 1e9),
                fmt(c.doppler_hz),
            )?;
        }
    }
    Ok(())
}

/// Transfer-function rows `t, f, re, im`, time-major over the grid.
pub fn write_tvtf_csv<W: Write>(
    out: &mut W,
    times: &[f64],
    freqs: &[f64],
    surface: &[Vec<Complex64>],
) -> Result<(), IoError> {
    assert_eq!(times.len(), surface.len(), "one surface row per time");
    writeln!(out, "t, f, re, im")?;
    for (&t, row) in times.iter().zip(surface) {
        assert_eq!(freqs.len(), row.len(), "one surface value per frequency");
        for (&f, h) in freqs.iter().zip(row) {
            writeln!(out, "{}, {}, {}, {}", fmt(t), fmt(f), fmt(h.re), fmt(h.im))?;
        }
    }
    Ok(())
}

/// Reads a transfer-function CSV back into a grid. Rows must arrive
/// time-major with one identical frequency sweep per time; anything else
/// is reported with its line number.
pub fn read_tvtf_csv(path: &Path) -> Result<TransferGrid, IoError> {
    let text = std::fs::read_to_string(path)?;
    let mut times: Vec<f64> = Vec::new();
    let mut freqs: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<Complex64>> = Vec::new();
    let mut first_sweep = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('t') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(IoError::Parse {
                path: path.to_owned(),
                line,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 4];
        for (slot, field) in nums.iter_mut().zip(&fields) {
            *slot = field.parse().map_err(|_| IoError::Parse {
                path: path.to_owned(),
                line,
                message: format!("expected a number, got {field:?}"),
            })?;
        }
        let [t, f, re, im] = nums;
        if times.last() != Some(&t) {
            if let Some(row) = values.last() {
                if row.len() != freqs.len() {
                    return Err(IoError::RaggedGrid { path: path.to_owned() });
                }
            }
            times.push(t);
            values.push(Vec::new());
            first_sweep = times.len() == 1;
        }
        let row = values.last_mut().expect("a row exists after the time check");
        if first_sweep {
            freqs.push(f);
        } else if freqs.get(row.len()) != Some(&f) {
            return Err(IoError::RaggedGrid { path: path.to_owned() });
        }
        row.push(Complex64::new(re, im));
    }
    if let Some(row) = values.last() {
        if row.len() != freqs.len() {
            return Err(IoError::RaggedGrid { path: path.to_owned() });
        }
    }
    Ok(TransferGrid { times, freqs, values })
}

/// Visibility rows `t, cluster_id, class, visible, spawned`, with the
/// booleans as 0/1.
pub fn write_visibility_csv<W: Write>(
    out: &mut W,
    entries: &[(f64, StepReport)],
) -> Result<(), IoError> {
    writeln!(out, "t, cluster_id, class, visible, spawned")?;
    for (t, report) in entries {
        for row in &report.rows {
            writeln!(
                out,
                "{}, {}, {}, {}, {}",
                fmt(*t),
                row.cluster,
                class_name(row.class),
                u8::from(row.visible),
                u8::from(row.spawned),
            )?;
        }
    }
    Ok(())
}

/// Autocorrelation rows `dt_s, re, im`.
pub fn write_tacf_csv<W: Write>(out: &mut W, curve: &[(f64, Complex64)]) -> Result<(), IoError> {
    writeln!(out, "dt_s, re, im")?;
    for (dt, v) in curve {
        writeln!(out, "{}, {}, {}", fmt(*dt), fmt(v.re), fmt(v.im))?;
    }
    Ok(())
}

/// Frequency-correlation rows `df_hz, re, im`.
pub fn write_fcf_csv<W: Write>(out: &mut W, curve: &[(f64, Complex64)]) -> Result<(), IoError> {
    writeln!(out, "df_hz, re, im")?;
    for (df, v) in curve {
        writeln!(out, "{}, {}, {}", fmt(*df), fmt(v.re), fmt(v.im))?;
    }
    Ok(())
}

/// Doppler-spectrum rows `fd_hz, psd`.
pub fn write_dpsd_csv<W: Write>(out: &mut W, spectrum: &DopplerSpectrum) -> Result<(), IoError> {
    writeln!(out, "fd_hz, psd")?;
    for (f, d) in spectrum.freqs.iter().zip(&spectrum.density) {
        writeln!(out, "{}, {}", fmt(*f), fmt(*d))?;
    }
    Ok(())
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Everything needed to re-run a command: recorded in every output
/// directory as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_path: String,
    /// SHA-256 of the raw config bytes.
    pub config_digest: String,
    pub seed: u64,
    pub out_dir: String,
}

impl RunManifest {
    pub fn new(
        subcommand: &str,
        config_path: &str,
        config_bytes: &[u8],
        seed: u64,
        out_dir: &Path,
    ) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            subcommand: subcommand.to_owned(),
            config_path: config_path.to_owned(),
            config_digest: sha256_hex(config_bytes),
            seed,
            out_dir: out_dir.display().to_string(),
        }
    }

    /// Writes `manifest.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, IoError> {
        let path = dir.join("manifest.toml");
        std::fs::write(&path, toml::to_string_pretty(self)?)?;
        Ok(path)
    }
}
