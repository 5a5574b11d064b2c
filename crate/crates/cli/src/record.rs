//! Persisted run records and plot-data emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use mmqubit_core::protocols::{Axis, SweepMetadata, SweepResult};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::registry::{FitSummary, RunOutput};
use crate::{CliError, Format};

pub const RECORD_FILE: &str = "record.json";
pub const TIMING_FILE: &str = "timing.json";

/// A sweep with non-finite entries stored as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub experiment: String,
    pub params_hash: String,
    pub axes: Vec<AxisRecord>,
    pub values: Vec<Option<f64>>,
    pub channels: BTreeMap<String, Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisRecord {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

fn to_opt(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| x.is_finite().then_some(*x)).collect()
}

fn from_opt(v: &[Option<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.unwrap_or(f64::NAN)).collect()
}

impl From<&SweepResult> for SweepRecord {
    fn from(s: &SweepResult) -> Self {
        Self {
            experiment: s.metadata.experiment.clone(),
            params_hash: s.metadata.params_hash.clone(),
            axes: s
                .axes
                .iter()
                .map(|a| AxisRecord {
                    name: a.name.clone(),
                    unit: a.unit.clone(),
                    values: a.values.clone(),
                })
                .collect(),
            values: to_opt(&s.values),
            channels: s.channels.iter().map(|(k, v)| (k.clone(), to_opt(v))).collect(),
        }
    }
}

impl SweepRecord {
    pub fn to_sweep(&self) -> SweepResult {
        SweepResult {
            axes: self
                .axes
                .iter()
                .map(|a| Axis::new(&a.name, &a.unit, a.values.clone()))
                .collect(),
            values: from_opt(&self.values),
            channels: self.channels.iter().map(|(k, v)| (k.clone(), from_opt(v))).collect(),
            metadata: SweepMetadata {
                experiment: self.experiment.clone(),
                params_hash: self.params_hash.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub dt_ns: f64,
    pub n_q: usize,
    pub n_r: usize,
    pub noise_amplitude: f64,
    pub noise_seed: u64,
}

/// Everything a run produces except wall time, which lives in timing.json
/// so that identical configs give identical record bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub code_version: String,
    pub experiment: String,
    pub figure: String,
    pub settings: RunSettings,
    pub sweep: SweepRecord,
    pub fits: BTreeMap<String, FitSummary>,
    pub config: RunConfig,
}

impl RunRecord {
    pub fn new(cfg: &RunConfig, out: &RunOutput) -> Self {
        let d = &cfg.dynamics;
        Self {
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: cfg.experiment.id.clone(),
            figure: cfg.info().figure.to_string(),
            settings: RunSettings {
                dt_ns: d.dt_ns,
                n_q: d.n_q,
                n_r: d.n_r,
                noise_amplitude: d.noise_amplitude,
                noise_seed: d.noise_seed,
            },
            sweep: SweepRecord::from(&out.sweep),
            fits: out.fits.clone(),
            config: cfg.clone(),
        }
    }

    /// Accepts a record file or the directory holding one.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(RECORD_FILE);
        }
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Validation(format!("cannot read record {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Validation(format!("{}: {}: {}", path.display(), e.path(), e.inner())))
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(RECORD_FILE);
        write(&path, &pretty(self))?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
struct Timing<'a> {
    config_hash: &'a str,
    wall_time_s: f64,
}

pub fn save_timing(dir: &Path, config_hash: &str, wall: Duration) -> Result<(), CliError> {
    let t = Timing {
        config_hash,
        wall_time_s: wall.as_secs_f64(),
    };
    write(&dir.join(TIMING_FILE), &pretty(&t))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("record serializes");
    s.push('\n');
    s
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io(path))
}

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn header(a: &AxisRecord) -> String {
    format!("{} [{}]", a.name, a.unit)
}

/// Writes plot files for the record into `dir` and returns their paths.
///
/// CSV: 1-D sweeps as (axis, value); 2-D sweeps as a grid whose header row
/// holds the fast axis, plus a long-form (x, y, value) file. Channels that
/// follow an axis or the full grid get their own files. Each CSV has a JSON
/// sidecar with the config hash, axis units, dt and seed.
pub fn emit(record: &RunRecord, format: Format, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let sweep = &record.sweep;
    let name = record.experiment.as_str();
    match format {
        Format::Json => {
            let path = dir.join(format!("{name}.json"));
            let doc = serde_json::json!({
                "metadata": sidecar(record, "json"),
                "sweep": sweep,
                "fits": record.fits,
            });
            write(&path, &pretty(&doc))?;
            written.push(path);
        }
        Format::Csv => {
            written.extend(write_table(record, name, &sweep.values, &sweep.axes, dir)?);
            for (channel, values) in &sweep.channels {
                let stem = format!("{name}__{channel}");
                if values.len() == sweep.values.len() {
                    written.extend(write_table(record, &stem, values, &sweep.axes, dir)?);
                } else if values.len() == sweep.axes[0].values.len() {
                    written.extend(write_table(record, &stem, values, &sweep.axes[..1], dir)?);
                }
            }
        }
    }
    Ok(written)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), num)
}

fn write_table(
    record: &RunRecord,
    stem: &str,
    values: &[Option<f64>],
    axes: &[AxisRecord],
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    match axes {
        [x] => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(csv_error(&path))?;
            w.write_record([header(x), "value".to_string()]).map_err(csv_error(&path))?;
            for (a, v) in x.values.iter().zip(values) {
                w.write_record([num(*a), cell(*v)]).map_err(csv_error(&path))?;
            }
            w.flush().map_err(io(&path))?;
            out.push(path);
        }
        [y, x] => {
            let path = dir.join(format!("{stem}.csv"));
            let mut w = csv::Writer::from_path(&path).map_err(csv_error(&path))?;
            let mut head = vec![format!("{} \\ {}", header(y), header(x))];
            head.extend(x.values.iter().map(|v| num(*v)));
            w.write_record(&head).map_err(csv_error(&path))?;
            for (i, yv) in y.values.iter().enumerate() {
                let row = &values[i * x.values.len()..(i + 1) * x.values.len()];
                let mut line = vec![num(*yv)];
                line.extend(row.iter().map(|v| cell(*v)));
                w.write_record(&line).map_err(csv_error(&path))?;
            }
            w.flush().map_err(io(&path))?;
            out.push(path);

            let long = dir.join(format!("{stem}_long.csv"));
            let mut w = csv::Writer::from_path(&long).map_err(csv_error(&long))?;
            w.write_record([header(y), header(x), "value".to_string()])
                .map_err(csv_error(&long))?;
            for (i, yv) in y.values.iter().enumerate() {
                for (j, xv) in x.values.iter().enumerate() {
                    w.write_record([num(*yv), num(*xv), cell(values[i * x.values.len() + j])])
                        .map_err(csv_error(&long))?;
                }
            }
            w.flush().map_err(io(&long))?;
            out.push(long);
        }
        _ => {
            return Err(CliError::Runtime(format!(
                "cannot tabulate a sweep with {} axes",
                axes.len()
            )))
        }
    }
    let meta = dir.join(format!("{stem}.meta.json"));
    let mut doc = sidecar(record, "csv");
    doc["axes"] = serde_json::json!(axes
        .iter()
        .map(|a| serde_json::json!({ "name": a.name, "unit": a.unit, "count": a.values.len() }))
        .collect::<Vec<_>>());
    write(&meta, &pretty(&doc))?;
    out.push(meta);
    Ok(out)
}

fn sidecar(record: &RunRecord, format: &str) -> serde_json::Value {
    serde_json::json!({
        "config_hash": record.config_hash,
        "code_version": record.code_version,
        "experiment": record.experiment,
        "figure": record.figure,
        "format": format,
        "dt_ns": record.settings.dt_ns,
        "seed": record.settings.noise_seed,
        "noise_amplitude": record.settings.noise_amplitude,
        "params_hash": record.sweep.params_hash,
        "axes": record.sweep.axes.iter()
            .map(|a| serde_json::json!({ "name": a.name, "unit": a.unit, "count": a.values.len() }))
            .collect::<Vec<_>>(),
    })
}
