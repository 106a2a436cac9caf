//! End-to-end runs: ingest, encode, cross-validate, train the final model
//! and profile it. Also hosts the synthetic data generator.
//!
//! Every output lands under a `.partial` name first and is renamed only
//! once the whole run has succeeded, so an aborted run leaves its partial
//! outputs recognisable.

pub mod recgym;
pub mod synth;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::encoder::{banks, encode_window, read_spikes, write_spikes, BankMap, POLARITIES, SIGNALS};
use crate::error::{Error, Result};
use crate::ingest::{load_csv, resample, slice_windows, CHANNEL_NAMES};
use crate::profiler::{
    baseline_rows, count_ops, estimate_energy, modeled_latency_s, render_csv, render_text, OpCounters, ProfileReport,
};
use crate::snn::{classify, layer_chain, run_event_driven, write_model, NetworkModel};
use crate::trainer::{class_weights, cross_validate, train, CrossValidation, LossSpec, RealNetwork, Sample};

/// A labelled window of resampled sensor data.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub id: String,
    pub subject: String,
    pub label: usize,
    pub samples: Array2<f64>,
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_csv = path.extension().is_some_and(|x| x == "csv");
        let is_meta = path.file_name().is_some_and(|n| n == synth::GENERATOR_FILE);
        if is_csv && !is_meta {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every recording in `dir` (sorted by file name), resamples and
/// windows it. Window ids are `<file stem>-<index>`.
pub fn ingest_dir(cfg: &PipelineConfig) -> Result<Vec<WindowRecord>> {
    let files = csv_files(&cfg.data_dir)?;
    if files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no .csv recordings in {}",
            cfg.data_dir.display()
        )));
    }
    let mut out = Vec::new();
    for path in files {
        let raw = load_csv(&path, &CHANNEL_NAMES, cfg.source_rate_hz)?;
        let rec = resample(&raw, &cfg.resample)?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let windows = slice_windows(&rec, &cfg.window)?;
        log::info!("{}: {} windows", path.display(), windows.len());
        out.extend(windows.into_iter().enumerate().map(|(i, w)| WindowRecord {
            id: format!("{stem}-{i:05}"),
            subject: rec.subject_id.clone(),
            label: w.label,
            samples: w.samples,
        }));
    }
    Ok(out)
}

pub fn bank_map(cfg: &PipelineConfig) -> Result<BankMap> {
    banks(cfg.imu_base, cfg.cap_base, cfg.threshold_scheme, cfg.threshold_count)
}

pub fn encode_records(records: &[WindowRecord], banks: &BankMap) -> Result<Vec<Sample>> {
    records
        .par_iter()
        .map(|r| {
            Ok(Sample {
                id: r.id.clone(),
                subject: r.subject.clone(),
                label: r.label,
                spikes: encode_window(r.samples.view(), banks)?,
            })
        })
        .collect()
}

pub const INDEX_FILE: &str = "index.csv";

/// `<id>.spk` per sample plus `index.csv` (`id,subject,label,file,spikes`).
pub fn write_encoded(samples: &[Sample], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::from("id,subject,label,file,spikes\n");
    for s in samples {
        let file = format!("{}.spk", s.id);
        write_spikes(&s.spikes, &dir.join(&file))?;
        let _ = writeln!(index, "{},{},{},{},{}", s.id, s.subject, s.label, file, s.spikes.count_ones());
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

pub fn read_encoded(dir: &Path) -> Result<Vec<Sample>> {
    let path = dir.join(INDEX_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut samples = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Parse { row: i + 1, message: e.to_string() })?;
        let field = |k: usize| row.get(k).unwrap_or("").to_string();
        let label = field(2)
            .parse()
            .map_err(|_| Error::Parse { row: i + 1, message: format!("bad label `{}`", field(2)) })?;
        samples.push(Sample {
            id: field(0),
            subject: field(1),
            label,
            spikes: read_spikes(&dir.join(field(3)))?,
        });
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData(format!("{} lists no samples", path.display())));
    }
    Ok(samples)
}

pub fn class_count(cfg: &PipelineConfig, samples: &[Sample]) -> Result<usize> {
    let seen = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
    match cfg.classes {
        0 => Ok(seen.max(2)),
        n if n >= seen => Ok(n),
        n => Err(Error::config(format!("classes = {n} but labels go up to {}", seen - 1))),
    }
}

/// Input shape of the network for windows encoded with `thresholds` levels.
pub fn input_shape(thresholds: usize) -> (usize, usize, usize) {
    (SIGNALS, thresholds, POLARITIES)
}

pub fn initial_network(cfg: &PipelineConfig, classes: usize) -> Result<RealNetwork> {
    let input = input_shape(cfg.threshold_count);
    let specs = layer_chain(&format!("{}{classes}D", cfg.hidden), input)?;
    Ok(RealNetwork::random(input, specs, cfg.lif, cfg.init_scale, cfg.seed))
}

pub fn loss_spec(cfg: &PipelineConfig, timesteps: usize, classes: usize) -> LossSpec {
    LossSpec {
        target_true: (cfg.target_true_frac * timesteps as f64).round(),
        target_false: (cfg.target_false_frac * timesteps as f64).round(),
        class_weights: vec![1.0; classes],
    }
}

/// Runs every sample through the event-driven backend and reports per-window
/// energy, modeled latency and accuracy on those samples.
pub fn profile_samples(cfg: &PipelineConfig, model: &NetworkModel, samples: &[Sample]) -> Result<ProfileReport> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("nothing to profile".into()));
    }
    let runs: Vec<Result<(OpCounters, bool)>> = samples
        .par_iter()
        .map(|s| {
            let run = run_event_driven(model, &s.spikes)?;
            Ok((count_ops(model, &run), classify(&run.counts)? == s.label))
        })
        .collect();
    let mut total = OpCounters::default();
    let mut correct = 0usize;
    for r in runs {
        let (c, hit) = r?;
        total.merge(&c);
        correct += hit as usize;
    }
    let n = samples.len() as f64;
    let energy = estimate_energy(&total, &cfg.energy)?.total_j / n;
    let steps = samples[0].spikes.timesteps();
    let latency = modeled_latency_s(steps, cfg.energy.timestep_s, cfg.injection_stall);
    ProfileReport::new(correct as f64 / n, latency, energy, total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub windows: usize,
    pub classes: usize,
    pub cross_validation: CrossValidation,
    pub report: ProfileReport,
    pub out_dir: PathBuf,
}

fn partial(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Tracks outputs written under `.partial` names.
struct Staging {
    pending: Vec<PathBuf>,
}

impl Staging {
    fn new() -> Self {
        Self { pending: Vec::new() }
    }

    /// Returns the `.partial` path to write `final_path` to, clearing any
    /// leftover from an earlier run.
    fn stage(&mut self, final_path: &Path) -> Result<PathBuf> {
        let tmp = partial(final_path);
        remove_any(&tmp)?;
        self.pending.push(final_path.to_path_buf());
        Ok(tmp)
    }

    fn write(&mut self, final_path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        let tmp = self.stage(final_path)?;
        fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))
    }

    fn commit(self) -> Result<()> {
        for path in self.pending {
            remove_any(&path)?;
            let tmp = partial(&path);
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn remove_any(path: &Path) -> Result<()> {
    let result = if path.is_dir() {
        fs::remove_dir_all(path)
    } else if path.exists() {
        fs::remove_file(path)
    } else {
        Ok(())
    };
    result.map_err(|e| Error::io(path, e))
}

fn folds_csv(cv: &CrossValidation) -> String {
    let mut out = String::from("subject,train_windows,test_windows,accuracy,final_loss\n");
    for f in &cv.folds {
        let _ = writeln!(out, "{},{},{},{},{}", f.subject, f.train_samples, f.test_samples, f.accuracy, f.final_loss);
    }
    let _ = writeln!(out, "mean,,,{},", cv.mean_accuracy);
    out
}

fn loss_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{e},{l}");
    }
    out
}

fn summary_text(s: &PipelineSummary, text_table: &str) -> String {
    let mut out = String::new();
    let c = &s.report.counters;
    let _ = writeln!(out, "windows: {}", s.windows);
    let _ = writeln!(out, "classes: {}", s.classes);
    for f in &s.cross_validation.folds {
        let _ = writeln!(out, "fold {}: accuracy {:.4}", f.subject, f.accuracy);
    }
    let _ = writeln!(out, "mean leave-one-user-out accuracy: {:.4}", s.cross_validation.mean_accuracy);
    let _ = writeln!(out, "synaptic operations: {}", c.sops);
    let _ = writeln!(out, "neuron updates: {} (dense equivalent {})", c.neuron_updates, c.dense_neuron_updates);
    let _ = writeln!(out, "modeled latency per window: {} ms", s.report.latency_s * 1e3);
    let _ = writeln!(out, "energy per window: {} mJ", s.report.energy_j * 1e3);
    out.push('\n');
    out.push_str(text_table);
    out
}

pub const MODEL_FILE: &str = "model.snm";
pub const SPIKES_DIR: &str = "spikes";
pub const FOLDS_FILE: &str = "folds.csv";
pub const LOSS_FILE: &str = "loss_curve.csv";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_TXT: &str = "report.txt";

/// Full run on `cfg`. Errors carry the name of the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut staging = Staging::new();

    let records = ingest_dir(cfg).map_err(|e| e.in_stage("ingest"))?;

    let samples = (|| {
        let samples = encode_records(&records, &bank_map(cfg)?)?;
        let dir = staging.stage(&out.join(SPIKES_DIR))?;
        write_encoded(&samples, &dir)?;
        Ok(samples)
    })()
    .map_err(|e: Error| e.in_stage("encode"))?;

    let (cv, model, classes) = (|| {
        let classes = class_count(cfg, &samples)?;
        let init = initial_network(cfg, classes)?;
        let steps = samples[0].spikes.timesteps();
        let loss = loss_spec(cfg, steps, classes);
        let cv = cross_validate(&init, &samples, &cfg.train, &cfg.surrogate, &loss, cfg.weight_classes)?;
        staging.write(&out.join(FOLDS_FILE), folds_csv(&cv))?;

        let mut final_loss = loss;
        if cfg.weight_classes {
            let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
            final_loss.class_weights = class_weights(&labels, classes);
        }
        let trained = train(&init, &samples, &cfg.train, &cfg.surrogate, &final_loss)?;
        staging.write(&out.join(LOSS_FILE), loss_curve_csv(&trained.loss_curve))?;
        let model = trained.network.to_model()?;
        let tmp = staging.stage(&out.join(MODEL_FILE))?;
        write_model(&model, &tmp)?;
        Ok((cv, model, classes))
    })()
    .map_err(|e: Error| e.in_stage("train"))?;

    let summary = (|| {
        let mut report = profile_samples(cfg, &model, &samples)?;
        report.accuracy = cv.mean_accuracy;
        let mut rows = baseline_rows();
        rows.push(report.row(&cfg.hardware_label, "SNN"));
        staging.write(&out.join(REPORT_CSV), render_csv(&rows))?;
        let summary = PipelineSummary {
            windows: samples.len(),
            classes,
            cross_validation: cv.clone(),
            report,
            out_dir: out.clone(),
        };
        staging.write(&out.join(REPORT_TXT), summary_text(&summary, &render_text(&rows)))?;
        Ok(summary)
    })()
    .map_err(|e: Error| e.in_stage("profile"))?;

    staging.commit()?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_names() {
        assert_eq!(partial(Path::new("/a/model.snm")), PathBuf::from("/a/model.snm.partial"));
        assert_eq!(partial(Path::new("out/spikes")), PathBuf::from("out/spikes.partial"));
    }
}
