//! On-disk formats: JSONL datasets with a JSON manifest, JSON models and CSV tables.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qude_core::dynamics::{DeviceModel, Experiment};
use qude_core::models::{AnsatzSpec, SourceModel};
use qude_core::tomography::{MeasurementProbs, ShotMode, TomographyRecord};
use qude_core::train::{Dataset, ExperimentData, TrainMode};

use crate::config::LatentSection;
use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

/// Seeds, configuration hash and toolkit version of one output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(seed: u64, config_sha256: String) -> Self {
        Self {
            version: VERSION.to_string(),
            seed,
            config_sha256,
        }
    }
}

/// One tomography record as a JSON line.
///
/// Exact records carry `shots = 0` and the probabilities `px, py, pz`
/// instead of counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub exp_id: String,
    #[serde(rename = "amplitude_MHz")]
    pub amplitude_mhz: f64,
    pub time_us: f64,
    pub shots: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kx: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ky: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kz: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub py: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pz: Option<f64>,
}

impl RecordRow {
    pub fn from_record(exp: &Experiment, r: &TomographyRecord) -> Self {
        let (k, p) = match r.counts {
            Some(k) => ([Some(k[0]), Some(k[1]), Some(k[2])], [None; 3]),
            None => {
                let p = r.probs_hat.as_array();
                ([None; 3], [Some(p[0]), Some(p[1]), Some(p[2])])
            }
        };
        Self {
            exp_id: exp.id.clone(),
            amplitude_mhz: exp.amplitude_p_mhz,
            time_us: r.time_us,
            shots: r.shots,
            kx: k[0],
            ky: k[1],
            kz: k[2],
            px: p[0],
            py: p[1],
            pz: p[2],
        }
    }

    pub fn to_record(&self) -> qude_core::Result<TomographyRecord> {
        let bad = |m: &str| {
            qude_core::Error::InvalidArgument(format!(
                "record of '{}' at t = {} us: {m}",
                self.exp_id, self.time_us
            ))
        };
        match (self.kx, self.ky, self.kz, self.px, self.py, self.pz) {
            (Some(x), Some(y), Some(z), None, None, None) if self.shots > 0 => {
                TomographyRecord::from_counts(self.time_us, self.shots, [x, y, z])
            }
            (None, None, None, Some(x), Some(y), Some(z)) if self.shots == 0 => {
                TomographyRecord::exact(self.time_us, MeasurementProbs::new(x, y, z))
            }
            _ => Err(bad(
                "expected counts kx, ky, kz with shots > 0, or px, py, pz with shots = 0",
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(rename = "amplitude_MHz")]
    pub amplitude_mhz: f64,
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub provenance: Provenance,
    pub device: DeviceModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentSection>,
    pub shots: u64,
    pub shot_mode: ShotMode,
    pub duration_us: f64,
    pub sample_dt_ns: f64,
    pub train_horizon_us: f64,
    pub experiments: Vec<ManifestEntry>,
}

/// A dataset read from disk, with its manifest when there is one.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub data: Dataset,
    pub manifest: Option<DatasetManifest>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn jsonl_bytes(path: &Path, e: &ExperimentData) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in &e.records {
        serde_json::to_writer(&mut out, &RecordRow::from_record(&e.experiment, r))
            .map_err(|err| CliError::format(path, err))?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes one JSONL file per experiment plus the manifest into `dir`.
pub fn write_dataset(
    dir: &Path,
    data: &Dataset,
    device: &DeviceModel,
    latent: Option<&LatentSection>,
    shots: u64,
    shot_mode: ShotMode,
    provenance: Provenance,
) -> Result<DatasetManifest> {
    create_dir(dir)?;
    let first = data
        .experiments
        .first()
        .ok_or_else(|| CliError::Config("dataset has no experiments".into()))?;
    let mut entries = Vec::with_capacity(data.len());
    for e in &data.experiments {
        let file = format!("{}.jsonl", e.experiment.id);
        let path = dir.join(&file);
        let bytes = jsonl_bytes(&path, e)?;
        write_bytes(&path, &bytes)?;
        entries.push(ManifestEntry {
            id: e.experiment.id.clone(),
            amplitude_mhz: e.experiment.amplitude_p_mhz,
            file,
            records: e.records.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = DatasetManifest {
        format: "qude-dataset".into(),
        provenance,
        device: device.clone(),
        latent: latent.cloned(),
        shots,
        shot_mode,
        duration_us: first.experiment.duration_us,
        sample_dt_ns: first.experiment.sample_dt_ns,
        train_horizon_us: data.train_horizon_us,
        experiments: entries,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads JSON lines, grouping rows by `exp_id` in order of first appearance.
pub fn read_rows(path: &Path) -> Result<Vec<(String, Vec<RecordRow>)>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut groups: Vec<(String, Vec<RecordRow>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: RecordRow = serde_json::from_str(&line)
            .map_err(|e| CliError::format(path, format!("line {}: {e}", n + 1)))?;
        let k = *index.entry(row.exp_id.clone()).or_insert_with(|| {
            groups.push((row.exp_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(row);
    }
    Ok(groups)
}

fn experiment_from_rows(
    path: &Path,
    id: &str,
    rows: &[RecordRow],
    grid: Option<(f64, f64)>,
) -> Result<ExperimentData> {
    let first = rows
        .first()
        .ok_or_else(|| CliError::format(path, format!("experiment '{id}' has no records")))?;
    if rows.iter().any(|r| r.amplitude_mhz != first.amplitude_mhz) {
        return Err(CliError::format(
            path,
            format!("experiment '{id}' mixes several amplitudes"),
        ));
    }
    // without a manifest the grid is inferred from the records, sampled at j·dt
    let (duration_us, sample_dt_ns) = grid.unwrap_or_else(|| {
        let dt_us = if rows.len() > 1 {
            rows[1].time_us - rows[0].time_us
        } else {
            rows[0].time_us
        };
        let dt_ns = (dt_us * 1e3 * 1e6).round() / 1e6;
        let last = rows[rows.len() - 1].time_us;
        let n = (last * 1e3 / dt_ns).round();
        (n * dt_ns / 1e3, dt_ns)
    });
    let exp = Experiment::square_pulse(id, first.amplitude_mhz, duration_us, sample_dt_ns)?;
    let records = rows
        .iter()
        .map(|r| r.to_record())
        .collect::<qude_core::Result<Vec<_>>>()?;
    Ok(ExperimentData::new(exp, records)?)
}

/// Loads a dataset from a manifest, a directory holding one, or a bare
/// JSONL file of externally measured records.
pub fn load_dataset(path: &Path, train_horizon_us: Option<f64>) -> Result<LoadedDataset> {
    let manifest_path = if path.is_dir() {
        Some(path.join(MANIFEST_FILE))
    } else if path.extension().is_some_and(|e| e == "json") {
        Some(path.to_path_buf())
    } else {
        None
    };
    let Some(mpath) = manifest_path else {
        let horizon = train_horizon_us.unwrap_or(crate::DEFAULT_TRAIN_HORIZON_US);
        let mut exps = Vec::new();
        for (id, rows) in read_rows(path)? {
            exps.push(experiment_from_rows(path, &id, &rows, None)?);
        }
        return Ok(LoadedDataset {
            data: Dataset::new(exps, horizon)?,
            manifest: None,
        });
    };
    let manifest: DatasetManifest = read_json(&mpath)?;
    if manifest.format != "qude-dataset" {
        return Err(CliError::format(&mpath, "not a dataset manifest"));
    }
    let dir = mpath
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut exps = Vec::with_capacity(manifest.experiments.len());
    for entry in &manifest.experiments {
        let file = dir.join(&entry.file);
        let groups = read_rows(&file)?;
        let rows = match groups.as_slice() {
            [(id, rows)] if *id == entry.id => rows,
            _ => {
                return Err(CliError::format(
                    &file,
                    format!("expected only records of experiment '{}'", entry.id),
                ))
            }
        };
        if rows.len() != entry.records {
            return Err(CliError::format(
                &file,
                format!(
                    "manifest lists {} records, file has {}",
                    entry.records,
                    rows.len()
                ),
            ));
        }
        exps.push(experiment_from_rows(
            &file,
            &entry.id,
            rows,
            Some((manifest.duration_us, manifest.sample_dt_ns)),
        )?);
    }
    let horizon = train_horizon_us.unwrap_or(manifest.train_horizon_us);
    Ok(LoadedDataset {
        data: Dataset::new(exps, horizon)?,
        manifest: Some(manifest),
    })
}

/// Where a model came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub mode: TrainMode,
    pub experiments: Vec<String>,
    pub train_horizon_us: f64,
    pub adam_final_loss: f64,
    pub final_loss: f64,
    pub validation_loss: f64,
    pub stalled: bool,
    pub dataset_sha256: String,
    pub provenance: Provenance,
}

/// A trained source term with the base device it was trained against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub ansatz: AnsatzSpec,
    /// Basis convention of the parameter vector.
    pub basis: String,
    /// Units of the Hamiltonian and rate parameters.
    pub units: String,
    pub params: Vec<f64>,
    pub device: DeviceModel,
    pub training: TrainingInfo,
}

impl ModelFile {
    pub fn new(
        spec: AnsatzSpec,
        params: Vec<f64>,
        device: DeviceModel,
        training: TrainingInfo,
    ) -> Self {
        let basis = match spec.kind {
            qude_core::models::AnsatzKind::StructurePreserving => "gell-mann",
            _ => "hermitian",
        };
        Self {
            format: "qude-model".into(),
            ansatz: spec,
            basis: basis.into(),
            units: "rad/us".into(),
            params,
            device,
            training,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = read_json(path)?;
        if m.format != "qude-model" {
            return Err(CliError::format(path, "not a model file"));
        }
        m.source().map_err(|e| CliError::format(path, e))?;
        Ok(m)
    }

    pub fn source(&self) -> qude_core::Result<SourceModel> {
        self.ansatz.unpack(&self.params)
    }
}

/// Hash over the manifest, or over the data file for bare JSONL input.
pub fn dataset_fingerprint(path: &Path) -> Result<String> {
    let p = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
    Ok(sha256_hex(&bytes))
}

/// RFC 4180 CSV with a header row; numbers use Rust's shortest round-trip form.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            create_dir(parent)?;
        }
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| CliError::format(path, e);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .map_err(csv_err)?;
    }
    let mut inner = w.into_inner().map_err(|e| CliError::format(path, e))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}
