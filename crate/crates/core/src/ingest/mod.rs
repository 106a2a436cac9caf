//! Sensor recording ingest: CSV loading, resampling and windowing.
//!
//! A recording is a matrix of samples (rows = time, columns = channels) with
//! one activity label per row. Recordings are resampled to the simulation
//! rate and cut into fixed-length classification windows.

mod spline;

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2};

pub use spline::CubicSpline;

use crate::error::{Error, Result};

/// Wrist sensing unit: 3-axis accelerometer, 3-axis gyroscope, body capacitance.
pub const CHANNEL_NAMES: [&str; 7] = ["acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z", "cap"];

pub const MAX_CLASSES: usize = 12;

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub subject_id: String,
    pub session_id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    /// rows = time, columns = channels
    pub samples: Array2<f64>,
    pub labels: Vec<usize>,
}

impl RawRecording {
    pub fn new(
        subject_id: impl Into<String>,
        session_id: impl Into<String>,
        sample_rate_hz: f64,
        channels: Vec<String>,
        samples: Array2<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::config(format!("sample rate must be positive, got {sample_rate_hz}")));
        }
        if samples.ncols() != channels.len() {
            return Err(Error::config(format!(
                "{} channel names for {} sample columns",
                channels.len(),
                samples.ncols()
            )));
        }
        if samples.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "recording has {} rows, need at least 2",
                samples.nrows()
            )));
        }
        if labels.len() != samples.nrows() {
            return Err(Error::config(format!(
                "{} labels for {} samples",
                labels.len(),
                samples.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= MAX_CLASSES) {
            return Err(Error::config(format!("label {bad} outside 0..{MAX_CLASSES}")));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            sample_rate_hz,
            channels,
            samples,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Time between the first and last sample.
    pub fn duration_s(&self) -> f64 {
        (self.len() - 1) as f64 / self.sample_rate_hz
    }
}

/// Metadata carried in `# key=value` comment lines ahead of the header.
#[derive(Debug, Default, Clone)]
struct Preamble {
    rate_hz: Option<f64>,
    subject: Option<String>,
    session: Option<String>,
}

/// Loads a recording. `rate_hz` overrides any `# rate_hz=` line in the file;
/// one of the two must be present.
pub fn load_csv(path: &Path, schema: &[&str], rate_hz: Option<f64>) -> Result<RawRecording> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&text, schema, rate_hz, &stem)
}

fn parse_csv(text: &str, schema: &[&str], rate_hz: Option<f64>, stem: &str) -> Result<RawRecording> {
    let mut preamble = Preamble::default();
    let mut body_start = 0;
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((key, value)) = comment.trim().split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "rate_hz" => {
                        let rate = value.parse::<f64>().map_err(|_| Error::Parse {
                            row: 0,
                            message: format!("bad rate_hz `{value}`"),
                        })?;
                        preamble.rate_hz = Some(rate);
                    }
                    "subject" => preamble.subject = Some(value.to_string()),
                    "session" => preamble.session = Some(value.to_string()),
                    _ => {}
                }
            }
            body_start += line.len() + 1;
        } else if trimmed.is_empty() {
            body_start += line.len() + 1;
        } else {
            break;
        }
    }
    let body = &text[body_start.min(text.len())..];

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                column: name.to_string(),
            })
    };
    let columns = schema.iter().map(|name| find(name)).collect::<Result<Vec<_>>>()?;
    let label_col = find(LABEL_COLUMN)?;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Row numbers are 1-based over data rows.
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        for &c in &columns {
            let cell = record.get(c).unwrap_or("");
            let v = cell.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric value `{cell}` in column `{}`", &headers[c]),
            })?;
            values.push(v);
        }
        let cell = record.get(label_col).unwrap_or("");
        let label = cell.parse::<usize>().map_err(|_| Error::Parse {
            row,
            message: format!("bad label `{cell}`"),
        })?;
        labels.push(label);
    }
    if labels.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} data rows, need at least 2",
            labels.len()
        )));
    }
    let rate = rate_hz
        .or(preamble.rate_hz)
        .ok_or_else(|| Error::config("sample rate missing: no `# rate_hz=` line and none configured"))?;
    let samples = Array2::from_shape_vec((labels.len(), schema.len()), values)
        .expect("row width checked during parse");
    RawRecording::new(
        preamble.subject.unwrap_or_else(|| stem.to_string()),
        preamble.session.unwrap_or_else(|| stem.to_string()),
        rate,
        schema.iter().map(|s| s.to_string()).collect(),
        samples,
        labels,
    )
}

/// Writes a recording in the same layout `load_csv` reads. Values use Rust's
/// shortest round-trip float formatting so a reload is exact.
pub fn write_csv(rec: &RawRecording, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "# rate_hz={}", rec.sample_rate_hz).unwrap();
    writeln!(out, "# subject={}", rec.subject_id).unwrap();
    writeln!(out, "# session={}", rec.session_id).unwrap();
    let mut header = rec.channels.join(",");
    header.push(',');
    header.push_str(LABEL_COLUMN);
    writeln!(out, "{header}").unwrap();
    for (row, label) in rec.samples.rows().into_iter().zip(&rec.labels) {
        for v in row {
            write!(out, "{v},").unwrap();
        }
        writeln!(out, "{label}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMethod {
    CubicSpline,
    Linear,
}

impl std::str::FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic_spline" | "cubic" | "spline" => Ok(Self::CubicSpline),
            "linear" => Ok(Self::Linear),
            other => Err(Error::config(format!("unknown resample method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleSpec {
    pub target_rate_hz: f64,
    pub method: ResampleMethod,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            target_rate_hz: 1000.0,
            method: ResampleMethod::CubicSpline,
        }
    }
}

/// Slack for float noise when a product of rate and duration should be integral.
const COUNT_EPS: f64 = 1e-9;

/// Resamples every channel onto a uniform grid at `spec.target_rate_hz`.
/// Labels follow the nearest source sample in time.
pub fn resample(rec: &RawRecording, spec: &ResampleSpec) -> Result<RawRecording> {
    if !(spec.target_rate_hz > 0.0 && spec.target_rate_hz.is_finite()) {
        return Err(Error::config(format!(
            "target rate must be positive, got {}",
            spec.target_rate_hz
        )));
    }
    let n_in = rec.len();
    let duration = rec.duration_s();
    let n_out = (duration * spec.target_rate_hz + COUNT_EPS).floor() as usize + 1;
    let src_t: Vec<f64> = (0..n_in).map(|i| i as f64 / rec.sample_rate_hz).collect();
    let dst_t: Vec<f64> = (0..n_out).map(|k| k as f64 / spec.target_rate_hz).collect();

    let mut out = Array2::zeros((n_out, rec.samples.ncols()));
    for (c, column) in rec.samples.columns().into_iter().enumerate() {
        let ys: Vec<f64> = column.to_vec();
        let values = match spec.method {
            ResampleMethod::CubicSpline => {
                CubicSpline::new(&src_t, &ys).eval_sorted(dst_t.iter().copied())
            }
            ResampleMethod::Linear => linear(&src_t, &ys, &dst_t),
        };
        out.column_mut(c).assign(&ndarray::Array1::from(values));
    }

    let labels = dst_t
        .iter()
        .map(|&t| {
            let idx = (t * rec.sample_rate_hz).round() as usize;
            rec.labels[idx.min(n_in - 1)]
        })
        .collect();

    RawRecording::new(
        rec.subject_id.clone(),
        rec.session_id.clone(),
        spec.target_rate_hz,
        rec.channels.clone(),
        out,
        labels,
    )
}

fn linear(xs: &[f64], ys: &[f64], at: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut k = 0;
    at.iter()
        .map(|&x| {
            while k + 2 < n && x > xs[k + 1] {
                k += 1;
            }
            let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
            ys[k] + w * (ys[k + 1] - ys[k])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelRule {
    Majority,
    CenterSample,
}

impl std::str::FromStr for LabelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "majority" => Ok(Self::Majority),
            "center" | "center_sample" => Ok(Self::CenterSample),
            other => Err(Error::config(format!("unknown label rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub window_s: f64,
    pub stride_s: f64,
    pub label_rule: LabelRule,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            stride_s: 2.0,
            label_rule: LabelRule::Majority,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if [self.window_s, self.stride_s].iter().any(|x| x.is_nan() || *x <= 0.0) {
            return Err(Error::config("window_s and stride_s must be positive"));
        }
        Ok(())
    }

    /// Window and stride lengths in samples at `rate_hz`.
    pub fn lengths(&self, rate_hz: f64) -> (usize, usize) {
        let window = (self.window_s * rate_hz + COUNT_EPS).floor() as usize;
        let stride = ((self.stride_s * rate_hz + COUNT_EPS).floor() as usize).max(1);
        (window, stride)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Row offset of the first sample in the source recording.
    pub start: usize,
    pub samples: Array2<f64>,
    pub label: usize,
}

/// Cuts a recording into windows starting at 0, stride, 2*stride, ...
/// A recording shorter than one window yields no windows.
pub fn slice_windows(rec: &RawRecording, spec: &WindowSpec) -> Result<Vec<Window>> {
    spec.validate()?;
    let (len, stride) = spec.lengths(rec.sample_rate_hz);
    let n = rec.len();
    if len == 0 || n < len {
        return Ok(Vec::new());
    }
    let count = (n - len) / stride + 1;
    Ok((0..count)
        .map(|w| {
            let start = w * stride;
            let labels = &rec.labels[start..start + len];
            Window {
                start,
                samples: rec.samples.slice(s![start..start + len, ..]).to_owned(),
                label: window_label(labels, spec.label_rule),
            }
        })
        .collect())
}

fn window_label(labels: &[usize], rule: LabelRule) -> usize {
    match rule {
        LabelRule::CenterSample => labels[labels.len() / 2],
        LabelRule::Majority => {
            let mut counts = [0usize; MAX_CLASSES];
            for &l in labels {
                counts[l] += 1;
            }
            // Lowest class index wins ties.
            let mut best = 0;
            for (c, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = c;
                }
            }
            best
        }
    }
}

/// Per-column mean of a sample matrix.
pub fn channel_means(samples: ArrayView2<'_, f64>) -> Vec<f64> {
    let n = samples.nrows() as f64;
    samples.columns().into_iter().map(|c| c.sum() / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rec_from(columns: usize, rows: usize, rate: f64, f: impl Fn(usize, usize) -> f64) -> RawRecording {
        let samples = Array2::from_shape_fn((rows, columns), |(r, c)| f(r, c));
        let names = (0..columns).map(|c| format!("c{c}")).collect();
        RawRecording::new("s", "x", rate, names, samples, vec![0; rows]).unwrap()
    }

    const THREE_ROWS: &str = "# rate_hz=20\n\
        acc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z,cap,label\n\
        1,2,3,4,5,6,7,0\n\
        1.5,2,3,4,5,6,7,1\n\
        -2,2,3e-3,4,5,6,7,1\n";

    #[test]
    fn parses_three_rows() {
        let rec = parse_csv(THREE_ROWS, &CHANNEL_NAMES, None, "f").unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.sample_rate_hz, 20.0);
        assert_eq!(rec.samples[[2, 0]], -2.0);
        assert_eq!(rec.samples[[2, 2]], 3e-3);
        assert_eq!(rec.labels, vec![0, 1, 1]);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "# rate_hz=20\nacc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z,label\n1,2,3,4,5,6,0\n1,2,3,4,5,6,0\n";
        match parse_csv(text, &CHANNEL_NAMES, None, "f") {
            Err(Error::Schema { column }) => assert_eq!(column, "cap"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let text = THREE_ROWS.replace("1.5,2", "1.5,abc");
        match parse_csv(&text, &CHANNEL_NAMES, None, "f") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn single_row_is_insufficient() {
        let text = "# rate_hz=20\nacc_x,acc_y,acc_z,gyr_x,gyr_y,gyr_z,cap,label\n1,2,3,4,5,6,7,0\n";
        assert!(matches!(
            parse_csv(text, &CHANNEL_NAMES, None, "f"),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rate_must_come_from_somewhere() {
        let text = THREE_ROWS.replace("# rate_hz=20\n", "");
        assert!(matches!(parse_csv(&text, &CHANNEL_NAMES, None, "f"), Err(Error::Config(_))));
        let rec = parse_csv(&text, &CHANNEL_NAMES, Some(50.0), "f").unwrap();
        assert_eq!(rec.sample_rate_hz, 50.0);
    }

    #[test]
    fn two_seconds_at_20hz_to_1khz() {
        let rec = rec_from(1, 41, 20.0, |r, _| r as f64);
        let out = resample(&rec, &ResampleSpec::default()).unwrap();
        assert_eq!(out.len(), 2001);
        assert_eq!(out.sample_rate_hz, 1000.0);
    }

    #[test]
    fn affine_ramp_is_reproduced() {
        let rec = rec_from(2, 41, 20.0, |r, c| 0.25 * r as f64 - 3.0 + c as f64);
        for method in [ResampleMethod::CubicSpline, ResampleMethod::Linear] {
            let out = resample(&rec, &ResampleSpec { target_rate_hz: 1000.0, method }).unwrap();
            for (k, row) in out.samples.rows().into_iter().enumerate() {
                let t = k as f64 / 1000.0;
                for c in 0..2 {
                    let expected = 0.25 * (t * 20.0) - 3.0 + c as f64;
                    assert!((row[c] - expected).abs() < 1e-9, "{method:?} k={k}");
                }
            }
        }
    }

    #[test]
    fn spline_tracks_analytic_sine() {
        // 5 Hz sine sampled at 50 Hz for 2 s.
        let amp = 1.0;
        let rec = rec_from(1, 101, 50.0, |r, _| amp * (2.0 * PI * 5.0 * r as f64 / 50.0).sin());
        let out = resample(&rec, &ResampleSpec::default()).unwrap();
        let mut worst: f64 = 0.0;
        for (k, v) in out.samples.column(0).iter().enumerate() {
            let t = k as f64 / 1000.0;
            worst = worst.max((v - amp * (2.0 * PI * 5.0 * t).sin()).abs());
        }
        assert!(worst < 1e-3 * amp, "max deviation {worst}");
    }

    #[test]
    fn zero_target_rate_rejected() {
        let rec = rec_from(1, 5, 10.0, |r, _| r as f64);
        let spec = ResampleSpec { target_rate_hz: 0.0, method: ResampleMethod::Linear };
        assert!(matches!(resample(&rec, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn labels_follow_nearest_sample() {
        let samples = Array2::zeros((4, 1));
        let rec = RawRecording::new("s", "x", 10.0, vec!["a".into()], samples, vec![0, 1, 2, 3]).unwrap();
        let out = resample(&rec, &ResampleSpec { target_rate_hz: 40.0, method: ResampleMethod::Linear }).unwrap();
        // t = 0, .025, .05, .075, .1, ...; ties at .05 round away from zero.
        assert_eq!(&out.labels[..6], &[0, 0, 1, 1, 1, 1]);
        assert_eq!(*out.labels.last().unwrap(), 3);
    }

    #[test]
    fn ten_seconds_five_windows() {
        let rec = rec_from(7, 10_000, 1000.0, |_, _| 0.0);
        let w = slice_windows(&rec, &WindowSpec::default()).unwrap();
        assert_eq!(w.len(), 5);
        assert!(w.iter().all(|w| w.samples.nrows() == 2000));
        assert_eq!(w[3].start, 6000);
    }

    #[test]
    fn short_recording_has_no_windows() {
        let rec = rec_from(7, 1500, 1000.0, |_, _| 0.0);
        assert!(slice_windows(&rec, &WindowSpec::default()).unwrap().is_empty());
    }

    #[test]
    fn center_rule_picks_middle_row() {
        let samples = Array2::zeros((10, 1));
        let labels = vec![0, 0, 0, 0, 0, 3, 1, 1, 1, 1];
        let rec = RawRecording::new("s", "x", 5.0, vec!["a".into()], samples, labels).unwrap();
        let spec = WindowSpec { window_s: 2.0, stride_s: 2.0, label_rule: LabelRule::CenterSample };
        assert_eq!(slice_windows(&rec, &spec).unwrap()[0].label, 3);
    }
}
