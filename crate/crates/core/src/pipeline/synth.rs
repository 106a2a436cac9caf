//! Synthetic wrist recordings with class-specific waveforms.
//!
//! Class `k` uses waveform family `k % 3` (sine, square step, random walk)
//! with parameters that grow with `k / 3`, so every class differs. Each
//! subject gets its own gains, phases and a small frequency jitter.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::SIGNALS;
use crate::error::{Error, Result};
use crate::ingest::{write_csv, RawRecording, CHANNEL_NAMES, MAX_CLASSES};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub subjects: usize,
    pub windows_per_class: usize,
    pub window_s: f64,
    pub rate_hz: f64,
    /// Standard deviation of additive white noise.
    pub noise: f64,
    /// Peak amplitude of the IMU channels; capacitance is a quarter of it.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            class_count: 3,
            subjects: 4,
            windows_per_class: 20,
            window_s: 1.0,
            rate_hz: 100.0,
            noise: 2e-5,
            amplitude: 0.01,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_CLASSES).contains(&self.class_count) {
            return Err(Error::config(format!("class_count must be in 2..={MAX_CLASSES}")));
        }
        if self.subjects == 0 || self.windows_per_class == 0 {
            return Err(Error::config("need at least one subject and one window per class"));
        }
        if !(self.rate_hz > 0.0 && self.window_s > 0.0 && self.amplitude > 0.0 && self.noise >= 0.0) {
            return Err(Error::config("rate, window and amplitude must be positive, noise non-negative"));
        }
        if (self.window_s * self.rate_hz).round() < 2.0 {
            return Err(Error::config("a window must span at least 2 samples"));
        }
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        (self.window_s * self.rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Waveform {
    Sine { frequency_hz: f64 },
    Step { period_s: f64 },
    RandomWalk { sigma: f64 },
}

impl Waveform {
    pub fn for_class(class: usize) -> Self {
        let level = 1.0 + (class / 3) as f64;
        match class % 3 {
            0 => Waveform::Sine { frequency_hz: 2.0 * level },
            1 => Waveform::Step { period_s: 0.5 / level },
            _ => Waveform::RandomWalk { sigma: 3e-4 * level },
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Waveform::Sine { .. } => "sine",
            Waveform::Step { .. } => "step",
            Waveform::RandomWalk { .. } => "random_walk",
        }
    }

    /// The family's one parameter: Hz, seconds or step deviation.
    fn parameter(&self) -> f64 {
        match *self {
            Waveform::Sine { frequency_hz } => frequency_hz,
            Waveform::Step { period_s } => period_s,
            Waveform::RandomWalk { sigma } => sigma,
        }
    }

    fn jittered(self, factor: f64) -> Self {
        match self {
            Waveform::Sine { frequency_hz } => Waveform::Sine { frequency_hz: frequency_hz * factor },
            Waveform::Step { period_s } => Waveform::Step { period_s: period_s * factor },
            Waveform::RandomWalk { sigma } => Waveform::RandomWalk { sigma: sigma * factor },
        }
    }
}

/// Parameters actually used for one subject and class.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub subject: String,
    pub class: usize,
    pub waveform: Waveform,
    /// Per channel.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub recordings: Vec<RawRecording>,
    pub params: Vec<GeneratorParams>,
}

pub fn subject_name(s: usize) -> String {
    format!("subject{s:02}")
}

/// One recording per subject: every class in turn, `windows_per_class`
/// windows long each.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::config(e.to_string()))?;
    let segment = spec.windows_per_class * spec.window_len();
    let dt = 1.0 / spec.rate_hz;
    let mut recordings = Vec::with_capacity(spec.subjects);
    let mut params = Vec::new();

    for s in 0..spec.subjects {
        let subject = subject_name(s);
        let rows = segment * spec.class_count;
        let mut samples = Array2::<f64>::zeros((rows, SIGNALS));
        let mut labels = Vec::with_capacity(rows);
        for class in 0..spec.class_count {
            let waveform = Waveform::for_class(class).jittered(rng.random_range(0.97..1.03));
            let gains: Vec<f64> = (0..SIGNALS)
                .map(|ch| {
                    let modality = if ch == SIGNALS - 1 { 0.25 } else { 1.0 };
                    modality * spec.amplitude * rng.random_range(0.8..1.2)
                })
                .collect();
            let phases: Vec<f64> = (0..SIGNALS).map(|_| rng.random_range(0.0..1.0)).collect();
            let start = class * segment;
            for (ch, (&gain, &phase)) in gains.iter().zip(&phases).enumerate() {
                let mut walk = 0.0;
                for i in 0..segment {
                    let t = i as f64 * dt;
                    let clean = match waveform {
                        Waveform::Sine { frequency_hz } => {
                            gain * (std::f64::consts::TAU * (frequency_hz * t + phase)).sin()
                        }
                        Waveform::Step { period_s } => {
                            if ((t / period_s + phase).fract()) < 0.5 {
                                gain
                            } else {
                                -gain
                            }
                        }
                        Waveform::RandomWalk { sigma } => {
                            walk += sigma * (gain / spec.amplitude) * rng.sample::<f64, _>(rand_distr::StandardNormal);
                            walk
                        }
                    };
                    samples[[start + i, ch]] = clean + noise.sample(&mut rng);
                }
            }
            labels.extend(std::iter::repeat_n(class, segment));
            log::info!(
                "{subject} class {class}: {} {:.6}",
                waveform.name(),
                waveform.parameter()
            );
            params.push(GeneratorParams {
                subject: subject.clone(),
                class,
                waveform,
                gains,
            });
        }
        recordings.push(RawRecording::new(
            subject.clone(),
            format!("{subject}-s0"),
            spec.rate_hz,
            CHANNEL_NAMES.iter().map(|c| c.to_string()).collect(),
            samples,
            labels,
        )?);
    }
    Ok(SyntheticDataset { recordings, params })
}

/// `subject,class,waveform,parameter,gain_<channel>...`
pub fn params_csv(params: &[GeneratorParams]) -> String {
    let mut out = String::from("subject,class,waveform,parameter");
    for c in CHANNEL_NAMES {
        let _ = write!(out, ",gain_{c}");
    }
    out.push('\n');
    for p in params {
        let _ = write!(out, "{},{},{},{}", p.subject, p.class, p.waveform.name(), p.waveform.parameter());
        for g in &p.gains {
            let _ = write!(out, ",{g}");
        }
        out.push('\n');
    }
    out
}

pub const GENERATOR_FILE: &str = "generator.csv";

/// Writes `<subject>.csv` per subject plus the generator parameter table.
pub fn write_dataset(data: &SyntheticDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for rec in &data.recordings {
        write_csv(rec, &dir.join(format!("{}.csv", rec.subject_id)))?;
    }
    let path = dir.join(GENERATOR_FILE);
    fs::write(&path, params_csv(&data.params)).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_have_distinct_waveforms() {
        let w: Vec<Waveform> = (0..12).map(Waveform::for_class).collect();
        for i in 0..w.len() {
            for j in i + 1..w.len() {
                assert_ne!(w[i], w[j]);
            }
        }
    }

    #[test]
    fn layout() {
        let spec = SyntheticSpec {
            windows_per_class: 2,
            subjects: 2,
            ..SyntheticSpec::default()
        };
        let data = generate(&spec).unwrap();
        assert_eq!(data.recordings.len(), 2);
        let rec = &data.recordings[0];
        assert_eq!(rec.len(), 3 * 2 * 100);
        assert_eq!(rec.labels[199], 0);
        assert_eq!(rec.labels[200], 1);
        assert_eq!(data.params.len(), 6);
        assert!(generate(&SyntheticSpec { class_count: 1, ..spec }).is_err());
    }
}
