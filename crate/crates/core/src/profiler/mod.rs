//! Synaptic-operation counting, a linear energy model, modeled latency and
//! energy-delay product reporting.
//!
//! Units follow the comparison table: latency in milliseconds, energy in
//! millijoules, EDP in microjoule-seconds (mJ x ms = uJ s).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::snn::{NetworkModel, Raster, RunOutput};

/// Extra wait per timestep when spike injection is host-paced.
pub const INJECTION_STALL_S: f64 = 1e-3;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpCounters {
    /// One per spike per outgoing synapse, whether or not the delayed
    /// arrival lands inside the window.
    pub sops: u64,
    /// Updates performed by the backend that produced the run.
    pub neuron_updates: u64,
    /// What a clock-driven backend performs: neurons x timesteps.
    pub dense_neuron_updates: u64,
    /// Output spikes of every layer, input excluded.
    pub spikes_per_layer: Vec<u64>,
    pub timesteps: usize,
}

impl OpCounters {
    /// Sums two counters field by field; per-layer lists must agree in length.
    pub fn merge(&mut self, other: &OpCounters) {
        self.sops += other.sops;
        self.neuron_updates += other.neuron_updates;
        self.dense_neuron_updates += other.dense_neuron_updates;
        self.timesteps += other.timesteps;
        if self.spikes_per_layer.is_empty() {
            self.spikes_per_layer = vec![0; other.spikes_per_layer.len()];
        }
        for (a, b) in self.spikes_per_layer.iter_mut().zip(&other.spikes_per_layer) {
            *a += b;
        }
    }
}

fn fanout_sum(m: &NetworkModel, layer: usize, raster: &Raster) -> u64 {
    let spec = m.layers[layer].spec;
    raster
        .steps
        .iter()
        .flatten()
        .map(|&pre| spec.fanout_len(pre as usize) as u64)
        .sum()
}

/// Walks the input and hidden rasters of a run of `m`.
pub fn count_ops(m: &NetworkModel, run: &RunOutput) -> OpCounters {
    let timesteps = run.input.timesteps();
    let mut sops = fanout_sum(m, 0, &run.input);
    for l in 1..m.layers.len() {
        sops += fanout_sum(m, l, &run.rasters[l - 1]);
    }
    OpCounters {
        sops,
        neuron_updates: run.stats.neuron_updates,
        dense_neuron_updates: (m.neuron_count() * timesteps) as u64,
        spikes_per_layer: run.rasters.iter().map(|r| r.spike_count() as u64).collect(),
        timesteps,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyModel {
    /// Joules per synaptic operation.
    pub e_sop: f64,
    /// Joules per neuron update.
    pub e_update: f64,
    /// Static power in watts.
    pub p_static: f64,
    pub timestep_s: f64,
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("e_sop", self.e_sop),
            ("e_update", self.e_update),
            ("p_static", self.p_static),
            ("timestep_s", self.timestep_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("energy model {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Reads `key=value` lines; unknown keys are rejected, missing keys stay 0.
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { row: n + 1, message: format!("expected key=value, got `{line}`") })?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse { row: n + 1, message: format!("bad number `{}`", value.trim()) })?;
            match key.trim() {
                "e_sop" => m.e_sop = value,
                "e_update" => m.e_update = value,
                "p_static" => m.p_static = value,
                "timestep_s" => m.timestep_s = value,
                other => return Err(Error::Parse { row: n + 1, message: format!("unknown key `{other}`") }),
            }
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Energy {
    pub dynamic_j: f64,
    pub static_j: f64,
    pub total_j: f64,
}

pub fn estimate_energy(c: &OpCounters, m: &EnergyModel) -> Result<Energy> {
    m.validate()?;
    let dynamic_j = c.sops as f64 * m.e_sop + c.neuron_updates as f64 * m.e_update;
    let static_j = m.p_static * c.timesteps as f64 * m.timestep_s;
    Ok(Energy {
        dynamic_j,
        static_j,
        total_j: dynamic_j + static_j,
    })
}

pub fn edp(energy_j: f64, latency_s: f64) -> Result<f64> {
    if !(energy_j >= 0.0 && latency_s >= 0.0) {
        return Err(Error::config(format!("EDP needs non-negative inputs, got {energy_j} J, {latency_s} s")));
    }
    Ok(energy_j * latency_s)
}

/// Timesteps times step length, plus the injection stall when enabled.
pub fn modeled_latency_s(timesteps: usize, timestep_s: f64, injection_stall: bool) -> f64 {
    let per_step = timestep_s + if injection_stall { INJECTION_STALL_S } else { 0.0 };
    timesteps as f64 * per_step
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub hardware: String,
    pub model: String,
    /// Fraction in [0, 1].
    pub accuracy: f64,
    pub latency_ms: f64,
    pub energy_mj: f64,
}

impl ComparisonRow {
    pub fn new(hardware: &str, model: &str, accuracy: f64, latency_ms: f64, energy_mj: f64) -> Self {
        Self {
            hardware: hardware.to_string(),
            model: model.to_string(),
            accuracy,
            latency_ms,
            energy_mj,
        }
    }

    /// mJ x ms is uJ s.
    pub fn edp_ujs(&self) -> f64 {
        self.energy_mj * self.latency_ms
    }
}

/// Published edge-processor baselines for the same workout task.
pub fn baseline_rows() -> Vec<ComparisonRow> {
    vec![
        ComparisonRow::new("GAP8", "ANN", 0.881, 3.2, 0.41),
        ComparisonRow::new("STM32", "ANN", 0.893, 20.88, 8.07),
    ]
}

/// The published Loihi measurement, for reference next to the baselines.
pub fn loihi_reference_row() -> ComparisonRow {
    ComparisonRow::new("Loihi", "SNN", 0.875, 4.4, 0.15)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileReport {
    pub accuracy: f64,
    /// Modeled, not measured.
    pub latency_s: f64,
    pub energy_j: f64,
    pub edp_js: f64,
    pub counters: OpCounters,
    /// Harness wall-clock time; never written to report files.
    pub wall_clock_s: Option<f64>,
}

impl ProfileReport {
    pub fn new(accuracy: f64, latency_s: f64, energy_j: f64, counters: OpCounters) -> Result<Self> {
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::config(format!("accuracy {accuracy} outside [0, 1]")));
        }
        Ok(Self {
            accuracy,
            latency_s,
            energy_j,
            edp_js: edp(energy_j, latency_s)?,
            counters,
            wall_clock_s: None,
        })
    }

    pub fn row(&self, hardware: &str, model: &str) -> ComparisonRow {
        ComparisonRow::new(hardware, model, self.accuracy, self.latency_s * 1e3, self.energy_j * 1e3)
    }
}

pub const REPORT_HEADER: &str = "hardware,model,accuracy,latency_ms,energy_mj,edp_ujs";

fn sorted(rows: &[ComparisonRow]) -> Vec<&ComparisonRow> {
    let mut rows: Vec<&ComparisonRow> = rows.iter().collect();
    rows.sort_by(|a, b| {
        a.edp_ujs()
            .total_cmp(&b.edp_ujs())
            .then_with(|| a.hardware.cmp(&b.hardware))
            .then_with(|| a.model.cmp(&b.model))
    });
    rows
}

/// Machine-readable table, rows in ascending EDP.
pub fn render_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in sorted(rows) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.hardware,
            r.model,
            r.accuracy,
            r.latency_ms,
            r.energy_mj,
            r.edp_ujs()
        );
    }
    out
}

/// Aligned text table, EDP printed as by [`format_edp`].
pub fn render_text(rows: &[ComparisonRow]) -> String {
    let header = ["Hardware", "Model", "Accuracy", "Latency (ms)", "Energy (mJ)", "EDP (uJ s)"];
    let body: Vec<[String; 6]> = sorted(rows)
        .into_iter()
        .map(|r| {
            [
                r.hardware.clone(),
                r.model.clone(),
                format!("{:.1}%", r.accuracy * 100.0),
                sig(r.latency_ms, 4),
                sig(r.energy_mj, 4),
                format_edp(r.edp_ujs()),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[&str], out: &mut String| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header, &mut out);
    for row in &body {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>(), &mut out);
    }
    out
}

/// Two decimals with trailing zeros dropped; small values keep three
/// significant figures instead.
pub fn format_edp(x: f64) -> String {
    if x.abs() < 0.01 {
        return sig3(x);
    }
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Rounds to three significant figures and prints without exponent.
pub fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 2 - x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits);
    let rounded = (x * scale).round() / scale;
    format!("{:.*}", digits.max(0) as usize, rounded)
}

/// At most `n` significant figures, trailing zeros dropped.
fn sig(x: f64, n: i32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = (n - 1 - x.abs().log10().floor() as i32).max(0) as usize;
    let s = format!("{x:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edp_units() {
        assert!((loihi_reference_row().edp_ujs() - 0.66).abs() < 1e-12);
        assert_eq!(sig3(0.41 * 3.2), "1.31");
        assert_eq!(sig3(8.07 * 20.88), "169");
        assert_eq!(format_edp(8.07 * 20.88), "168.5");
        assert_eq!(format_edp(0.15 * 4.4), "0.66");
        assert!(edp(-1.0, 1.0).is_err());
        assert_eq!(edp(0.0, 7.0).unwrap(), 0.0);
    }

    #[test]
    fn sig3_formats() {
        assert_eq!(sig3(0.66), "0.660");
        assert_eq!(sig3(1.312), "1.31");
        assert_eq!(sig3(0.0012345), "0.00123");
    }

    #[test]
    fn table_numbers_print_as_published() {
        assert_eq!(sig(20.88, 4), "20.88");
        assert_eq!(sig(3.2, 4), "3.2");
        assert_eq!(sig(99.0, 4), "99");
        assert_eq!(sig(0.00074496605, 4), "0.000745");
    }

    #[test]
    fn latency_model() {
        assert_eq!(modeled_latency_s(4, 1e-3, false), 4e-3);
        assert_eq!(modeled_latency_s(4, 1e-3, true), 8e-3);
    }

    #[test]
    fn energy_config() {
        let m = EnergyModel::parse("# loihi-ish\ne_sop = 1e-9\np_static=0.5\n").unwrap();
        assert_eq!(m.e_sop, 1e-9);
        assert_eq!(m.e_update, 0.0);
        assert!(EnergyModel::parse("e_sop=-1").is_err());
        assert!(EnergyModel::parse("voltage=1").is_err());
    }
}
