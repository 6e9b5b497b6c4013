//! The pipelines behind each CLI verb.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use qude_core::dynamics::DeviceModel;
use qude_core::metrics::{self, moment_table, EvalReport, ExperimentStat, McEstimate, SplitTag};
use qude_core::models::{
    effective_times, rad_per_us_to_khz, sp_hermitian, AnsatzKind, AnsatzSpec, SourceModel,
};
use qude_core::train::{fit, LogEntry, Objective};
use qude_core::twin::{sample_amplitudes, TwinGenerator};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{
    dataset_fingerprint, load_dataset, write_csv, write_dataset, write_json, DatasetManifest,
    LoadedDataset, ModelFile, Provenance, TrainingInfo,
};
use crate::DEFAULT_TRAIN_HORIZON_US;

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Simulates the planted twin and writes its dataset into `out`.
pub fn generate(cfg: &RunConfig, out: &Path) -> Result<DatasetManifest> {
    let device = cfg.device("generate")?;
    let latent = cfg.latent.as_ref().ok_or_else(|| {
        CliError::Config("generate needs a [latent] section (ansatz = \"none\" for none)".into())
    })?;
    let e = &cfg.experiments;
    let amplitudes = sample_amplitudes(e.n_experiments, e.p_max_mhz, e.seed);
    let mut twin = TwinGenerator::new(device.clone(), latent.to_model(device.dim)?, amplitudes);
    twin.duration_us = e.duration_us;
    twin.sample_dt_ns = e.sample_dt_ns;
    twin.shots = e.shots;
    twin.shot_mode = e.shot_mode;
    twin.seed = e.seed;
    twin.dt_internal_ns = e.dt_internal_ns;
    let horizon = cfg
        .training
        .train_horizon_us
        .unwrap_or(DEFAULT_TRAIN_HORIZON_US);
    let data = twin.generate(horizon)?;
    log::info!(
        "generated {} experiments, {} records",
        data.len(),
        data.record_count()
    );
    write_dataset(
        out,
        &data,
        &device,
        Some(latent),
        e.shots,
        e.shot_mode,
        Provenance::new(e.seed, cfg.sha256()),
    )
}

fn training_device(cfg: &RunConfig, loaded: &LoadedDataset) -> Result<DeviceModel> {
    let dev = match (&cfg.device, &loaded.manifest) {
        (Some(d), _) => d.to_device()?,
        (None, Some(m)) => m.device.clone(),
        (None, None) => {
            return Err(CliError::Config(
                "a dataset without manifest needs a [device] section".into(),
            ))
        }
    };
    Ok(cfg.with_base(dev))
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: ModelFile,
    pub log: Vec<LogEntry>,
    pub wall_time_s: f64,
}

/// Fits the configured ansatz and writes `model.json` and `training_log.csv` into `out`.
pub fn train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<TrainOutput> {
    let loaded = load_dataset(dataset, cfg.training.train_horizon_us)?;
    let dev = training_device(cfg, &loaded)?;
    let data = &loaded.data;
    let spec = AnsatzSpec::default_for(cfg.training.ansatz, dev.dim);
    let tcfg = cfg.training.train_config();
    let result = fit(data, &dev, &spec, &tcfg)?;

    let idx: Vec<usize> = result
        .experiments
        .iter()
        .filter_map(|id| data.find(id))
        .collect();
    let sub = data.subset(&idx)?;
    let split = sub.default_split();
    let validation_loss = if split.validation_len() == 0 {
        0.0
    } else {
        Objective::with_ranges(
            &dev,
            spec.clone(),
            &sub,
            &split.validation,
            tcfg.dt_internal_ns,
            tcfg.grad_method,
        )?
        .loss(&result.theta_star)?
    };
    if result.stalled {
        log::warn!("L-BFGS line search stalled; the model is the last accepted iterate");
    }
    let info = TrainingInfo {
        mode: result.mode,
        experiments: result.experiments.clone(),
        train_horizon_us: data.train_horizon_us,
        adam_final_loss: result.adam_final_loss,
        final_loss: result.final_loss,
        validation_loss,
        stalled: result.stalled,
        dataset_sha256: dataset_fingerprint(dataset)?,
        provenance: Provenance::new(tcfg.seed, cfg.sha256()),
    };
    let model = ModelFile::new(spec, result.theta_star.clone(), dev, info);
    write_json(&out.join("model.json"), &model)?;
    write_csv(
        &out.join("training_log.csv"),
        &["iteration", "phase", "loss", "grad_norm", "elapsed_s"],
        result.log.iter().map(|e| {
            [
                e.iteration.to_string(),
                e.phase.as_str().to_string(),
                num(e.loss),
                num(e.grad_norm),
                num(e.elapsed_s),
            ]
        }),
    )?;
    Ok(TrainOutput {
        model,
        log: result.log,
        wall_time_s: result.wall_time_s,
    })
}

/// Which model to evaluate.
#[derive(Clone, Debug)]
pub enum ModelChoice {
    /// The base model alone.
    Base,
    File(PathBuf),
}

impl ModelChoice {
    pub fn parse(arg: &str) -> Self {
        if arg == "base" {
            ModelChoice::Base
        } else {
            ModelChoice::File(PathBuf::from(arg))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub model: String,
    pub split: SplitTag,
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub model: String,
    pub base_model: String,
    pub train_horizon_us: f64,
    /// Records pooled across experiments instead of time-averaged per experiment.
    pub pooled: bool,
    pub interpolation: Option<McEstimate>,
    pub extrapolation: Option<McEstimate>,
    pub moments: Vec<MomentEntry>,
    pub per_experiment: Vec<ExperimentStat>,
    pub dataset_sha256: String,
    pub provenance: Provenance,
}

impl EvalSummary {
    pub fn estimate(&self, split: SplitTag) -> Option<&McEstimate> {
        match split {
            SplitTag::Interpolation => self.interpolation.as_ref(),
            SplitTag::Extrapolation => self.extrapolation.as_ref(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub report: EvalReport,
    pub summary: EvalSummary,
}

fn moment_entries(report: &EvalReport) -> Vec<MomentEntry> {
    let pools: Vec<(SplitTag, Vec<f64>)> = EvalReport::SPLITS
        .iter()
        .map(|s| (*s, report.pooled(*s)))
        .collect();
    moment_table(
        pools
            .iter()
            .map(|(s, v)| (report.model.as_str(), *s, v.as_slice())),
    )
    .rows
    .into_iter()
    .map(|r| MomentEntry {
        model: r.model,
        split: r.split,
        mean: r.mean,
        stddev: r.stddev,
        count: r.count,
    })
    .collect()
}

pub fn write_moments(path: &Path, rows: &[MomentEntry]) -> Result<()> {
    write_csv(
        path,
        &["model", "split", "mean", "stddev"],
        rows.iter().map(|r| {
            [
                r.model.clone(),
                r.split.as_str().to_string(),
                num(r.mean),
                num(r.stddev),
            ]
        }),
    )
}

/// Compares a model (or the bare base) with a dataset and writes the report files into `out`.
pub fn evaluate(
    cfg: &RunConfig,
    dataset: &Path,
    model: &ModelChoice,
    out: &Path,
) -> Result<EvalOutput> {
    let file = match model {
        ModelChoice::Base => None,
        ModelChoice::File(p) => Some(ModelFile::load(p)?),
    };
    let horizon = cfg
        .training
        .train_horizon_us
        .or(file.as_ref().map(|m| m.training.train_horizon_us));
    let loaded = load_dataset(dataset, horizon)?;
    let (name, dev, source) = match &file {
        Some(m) => (
            m.ansatz.kind.as_str().to_string(),
            cfg.with_base(m.device.clone()),
            Some(m.source()?),
        ),
        None => {
            let dev = training_device(cfg, &loaded)?;
            (format!("base-{}", dev.base_kind.as_str()), dev, None)
        }
    };
    let report = metrics::evaluate(
        &name,
        source.as_ref(),
        &dev,
        &loaded.data,
        cfg.evaluation.dt_internal_ns,
    )?;
    let pooled = cfg.evaluation.pooled;
    let summary = EvalSummary {
        model: name.clone(),
        base_model: dev.base_kind.as_str().to_string(),
        train_horizon_us: report.train_horizon_us,
        pooled,
        interpolation: report
            .expected_trace_distance(SplitTag::Interpolation, pooled)
            .ok(),
        extrapolation: report
            .expected_trace_distance(SplitTag::Extrapolation, pooled)
            .ok(),
        moments: moment_entries(&report),
        per_experiment: report.per_experiment(),
        dataset_sha256: dataset_fingerprint(dataset)?,
        provenance: Provenance::new(
            loaded.manifest.as_ref().map_or(0, |m| m.provenance.seed),
            cfg.sha256(),
        ),
    };

    if cfg.output.csv() {
        write_moments(&out.join("moments.csv"), &summary.moments)?;
        let mut hist_rows = Vec::new();
        for split in EvalReport::SPLITS {
            if report.pooled(split).is_empty() {
                continue;
            }
            for b in report.histogram(split, cfg.evaluation.bins)? {
                hist_rows.push([
                    name.clone(),
                    split.as_str().to_string(),
                    num(b.lo),
                    num(b.hi),
                    num(b.density),
                ]);
            }
        }
        write_csv(
            &out.join("histogram.csv"),
            &["model", "split", "bin_lo", "bin_hi", "density"],
            hist_rows,
        )?;
        for e in &report.experiments {
            write_csv(
                &out.join("energy").join(format!("{}.csv", e.id)),
                &["t_us", "energy_pred", "energy_target"],
                e.energy
                    .iter()
                    .map(|p| [num(p.t_us), num(p.energy_pred), num(p.energy_target)]),
            )?;
        }
    }
    if cfg.output.json() {
        write_json(&out.join("evaluation.json"), &summary)?;
    }
    Ok(EvalOutput { report, summary })
}

/// Interpretable readout of a structure-preserving qubit model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Characterization {
    pub base_model: String,
    /// S_H in kHz as `[[re, im]; 2]` rows.
    #[serde(rename = "S_H_kHz")]
    pub s_h_khz: [[[f64; 2]; 2]; 2],
    #[serde(rename = "alpha_kHz")]
    pub alpha_khz: Vec<f64>,
    /// γ_j⁻¹ in μs; null for a disabled channel.
    pub gamma_inv_us: Vec<Option<f64>>,
    #[serde(rename = "T1_us")]
    pub t1_us: f64,
    #[serde(rename = "T2_us")]
    pub t2_us: f64,
    /// Null when the effective rate vanishes (LvN base with no learned decay).
    #[serde(rename = "T1_eff_us")]
    pub t1_eff_us: Option<f64>,
    #[serde(rename = "T2_eff_us")]
    pub t2_eff_us: Option<f64>,
}

fn complex(re: f64, im: f64) -> String {
    if im == 0.0 {
        format!("{re:.4}")
    } else {
        let sign = if im < 0.0 { '-' } else { '+' };
        format!("{re:.4}{sign}{:.4}i", im.abs())
    }
}

impl Characterization {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let m = &self.s_h_khz;
        let cells: Vec<String> = (0..2)
            .flat_map(|r| (0..2).map(move |c| (r, c)))
            .map(|(r, c)| complex(m[r][c][0], m[r][c][1]))
            .collect();
        let w = cells.iter().map(String::len).max().unwrap_or(0);
        let _ = writeln!(s, "S_H (kHz), base model {}:", self.base_model);
        for r in 0..2 {
            let _ = writeln!(s, "  [ {:>w$}  {:>w$} ]", cells[2 * r], cells[2 * r + 1]);
        }
        let inv: Vec<String> = self
            .gamma_inv_us
            .iter()
            .map(|g| g.map_or("inf".to_string(), |v| format!("{v:.1}")))
            .collect();
        let _ = writeln!(s, "gamma^-1 (us): {}", inv.join(", "));
        let fmt = |t: Option<f64>| t.map_or("inf".to_string(), |v| format!("{v:.1} us"));
        let _ = writeln!(
            s,
            "effective T1 = {}, T2 = {} (bare {} us, {} us)",
            fmt(self.t1_eff_us),
            fmt(self.t2_eff_us),
            self.t1_us,
            self.t2_us
        );
        s
    }
}

pub fn characterize_source(src: &SourceModel, dev: &DeviceModel) -> Result<Characterization> {
    let SourceModel::StructurePreserving(sp) = src else {
        return Err(qude_core::Error::UnsupportedAnsatz(
            "characterization needs a structure-preserving (sp) model".into(),
        )
        .into());
    };
    if sp.dim() != 2 {
        return Err(qude_core::Error::InvalidArgument(format!(
            "characterization is defined for a qubit, model has N = {}",
            sp.dim()
        ))
        .into());
    }
    let h = sp_hermitian(sp);
    let mut s_h_khz = [[[0.0; 2]; 2]; 2];
    for (r, row) in s_h_khz.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = [
                rad_per_us_to_khz(h[(r, c)].re),
                rad_per_us_to_khz(h[(r, c)].im),
            ];
        }
    }
    let (t1_eff_us, t2_eff_us) = match effective_times(dev, sp) {
        Ok(t) => (Some(t.t1_eff_us), Some(t.t2_eff_us)),
        Err(e) if e.is_numerical() => (None, None),
        Err(e) => return Err(e.into()),
    };
    Ok(Characterization {
        base_model: dev.base_kind.as_str().to_string(),
        s_h_khz,
        alpha_khz: sp.alpha().iter().map(|a| rad_per_us_to_khz(*a)).collect(),
        gamma_inv_us: sp
            .gamma()
            .iter()
            .map(|g| if *g == 0.0 { None } else { Some(1.0 / g) })
            .collect(),
        t1_us: dev.t1_us,
        t2_us: dev.t2_us,
        t1_eff_us,
        t2_eff_us,
    })
}

/// Reads out a structure-preserving model; writes `characterization.json` into `out`.
pub fn characterize(cfg: &RunConfig, model: &Path, out: &Path) -> Result<Characterization> {
    let m = ModelFile::load(model)?;
    let dev = match &cfg.device {
        Some(d) => d.to_device()?,
        None => m.device.clone(),
    };
    let c = characterize_source(&m.source()?, &cfg.with_base(dev))?;
    write_json(&out.join("characterization.json"), &c)?;
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub model: String,
    pub final_loss: Option<f64>,
    pub validation_loss: Option<f64>,
    pub interpolation: Option<McEstimate>,
    pub extrapolation: Option<McEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    pub train_horizon_us: f64,
    pub models: Vec<ReportEntry>,
    /// Pooled per-record statistics of every model.
    pub moments: Vec<MomentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub characterization: Option<Characterization>,
}

impl Report {
    pub fn entry(&self, model: &str) -> Option<&ReportEntry> {
        self.models.iter().find(|e| e.model == model)
    }

    pub fn moment(&self, model: &str, split: SplitTag) -> Option<&MomentEntry> {
        self.moments
            .iter()
            .find(|m| m.model == model && m.split == split)
    }
}

/// Generate, train every configured ansatz, evaluate all models and the base, characterize.
pub fn report(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let dataset = out.join("dataset");
    generate(cfg, &dataset)?;
    let mut entries = Vec::new();
    let mut moments = Vec::new();
    let mut characterization = None;
    let mut horizon = cfg
        .training
        .train_horizon_us
        .unwrap_or(DEFAULT_TRAIN_HORIZON_US);
    if cfg.report.include_base {
        let ev = evaluate(
            cfg,
            &dataset,
            &ModelChoice::Base,
            &out.join("eval").join("base"),
        )?;
        horizon = ev.summary.train_horizon_us;
        moments.extend(ev.summary.moments.iter().cloned());
        entries.push(ReportEntry {
            model: ev.summary.model.clone(),
            final_loss: None,
            validation_loss: None,
            interpolation: ev.summary.interpolation,
            extrapolation: ev.summary.extrapolation,
        });
    }
    for kind in &cfg.report.ansatze {
        let mut c = cfg.clone();
        c.training.ansatz = *kind;
        let model_dir = out.join("models").join(kind.as_str());
        log::info!("training {} ansatz", kind.as_str());
        let t = train(&c, &dataset, &model_dir)?;
        let model_path = model_dir.join("model.json");
        let ev = evaluate(
            &c,
            &dataset,
            &ModelChoice::File(model_path.clone()),
            &out.join("eval").join(kind.as_str()),
        )?;
        horizon = ev.summary.train_horizon_us;
        moments.extend(ev.summary.moments.iter().cloned());
        entries.push(ReportEntry {
            model: ev.summary.model.clone(),
            final_loss: Some(t.model.training.final_loss),
            validation_loss: Some(t.model.training.validation_loss),
            interpolation: ev.summary.interpolation,
            extrapolation: ev.summary.extrapolation,
        });
        if *kind == AnsatzKind::StructurePreserving {
            characterization = Some(characterize(&c, &model_path, &model_dir)?);
        }
    }
    moments.sort_by(|a, b| (&a.model, a.split).cmp(&(&b.model, b.split)));
    if cfg.output.csv() {
        write_moments(&out.join("moments.csv"), &moments)?;
    }
    let report = Report {
        provenance: Provenance::new(cfg.experiments.seed, cfg.sha256()),
        train_horizon_us: horizon,
        models: entries,
        moments,
        characterization,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
