//! Multi-threshold delta-modulation spike encoding.
//!
//! Every signal is compared against a bank of increasing thresholds. At each
//! step the raw difference between consecutive samples is tested against
//! every threshold; a rise above `eps_i` fires a positive spike on threshold
//! `i`, a fall below `-eps_i` a negative one. There is no reconstruction
//! state, so steps are independent of each other.

mod file;

use std::collections::BTreeMap;

use ndarray::ArrayView2;

pub use file::{read_spikes, write_spikes, SPIKE_MAGIC};

use crate::error::{Error, Result};

pub const IMU_SIGNALS: usize = 6;
pub const SIGNALS: usize = 7;
pub const POLARITIES: usize = 2;
pub const DEFAULT_IMU_BASE: f64 = 0.00005;
pub const DEFAULT_CAP_BASE: f64 = 0.0000125;
pub const DEFAULT_THRESHOLD_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdScheme {
    /// `eps_i = base * (i + 1)`
    Arithmetic,
    /// `eps_i = base * 2^i`
    Geometric,
}

impl std::str::FromStr for ThresholdScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arithmetic" => Ok(Self::Arithmetic),
            "geometric" => Ok(Self::Geometric),
            other => Err(Error::config(format!("unknown threshold scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdBank {
    pub base: f64,
    pub scheme: ThresholdScheme,
    thresholds: Vec<f64>,
}

impl ThresholdBank {
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn count(&self) -> usize {
        self.thresholds.len()
    }
}

pub fn build_bank(base: f64, scheme: ThresholdScheme, count: usize) -> Result<ThresholdBank> {
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::config(format!("threshold base must be positive, got {base}")));
    }
    if count == 0 {
        return Err(Error::config("threshold count must be at least 1"));
    }
    let thresholds = (0..count)
        .map(|i| match scheme {
            ThresholdScheme::Arithmetic => base * (i + 1) as f64,
            ThresholdScheme::Geometric => base * 2f64.powi(i as i32),
        })
        .collect();
    Ok(ThresholdBank {
        base,
        scheme,
        thresholds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    /// Input plane: positive spikes in plane 0, negative in plane 1.
    pub fn plane(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }

    pub fn from_plane(plane: usize) -> Option<Self> {
        match plane {
            0 => Some(Polarity::Positive),
            1 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// `channel` is the flattened `signal * thresholds + threshold` index; for a
/// single-signal encoding it is just the threshold index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpikeEvent {
    pub timestep: u32,
    pub channel: u32,
    pub polarity: Polarity,
}

/// Encodes one signal of `T + 1` samples into events over `T` timesteps.
/// The difference `s[t] - s[t-1]` lands on timestep `t - 1`.
pub fn encode_channel(signal: &[f64], bank: &ThresholdBank) -> Result<Vec<SpikeEvent>> {
    if signal.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "signal has {} samples, need at least 2",
            signal.len()
        )));
    }
    let mut events = Vec::new();
    for (step, pair) in signal.windows(2).enumerate() {
        let diff = pair[1] - pair[0];
        let polarity = if diff > 0.0 {
            Polarity::Positive
        } else if diff < 0.0 {
            Polarity::Negative
        } else {
            continue;
        };
        let magnitude = diff.abs();
        // Thresholds increase, so the crossed ones form a prefix.
        for (i, &eps) in bank.thresholds.iter().enumerate() {
            if magnitude > eps {
                events.push(SpikeEvent {
                    timestep: step as u32,
                    channel: i as u32,
                    polarity,
                });
            } else {
                break;
            }
        }
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Imu,
    Capacitance,
}

impl Modality {
    pub fn of_signal(signal: usize) -> Self {
        if signal < IMU_SIGNALS {
            Modality::Imu
        } else {
            Modality::Capacitance
        }
    }
}

pub type BankMap = BTreeMap<Modality, ThresholdBank>;

/// Banks with the given scheme and count, using the default per-modality bases.
pub fn default_banks(scheme: ThresholdScheme, count: usize) -> Result<BankMap> {
    banks(DEFAULT_IMU_BASE, DEFAULT_CAP_BASE, scheme, count)
}

pub fn banks(imu_base: f64, cap_base: f64, scheme: ThresholdScheme, count: usize) -> Result<BankMap> {
    let mut map = BankMap::new();
    map.insert(Modality::Imu, build_bank(imu_base, scheme, count)?);
    map.insert(Modality::Capacitance, build_bank(cap_base, scheme, count)?);
    Ok(map)
}

/// Binary spike occupancy over `(signal, threshold, polarity, timestep)`.
///
/// The flattened input index of a cell is
/// `((signal * thresholds) + threshold) * 2 + plane`, which is also the
/// neuron index of the network's input layer (height = signals,
/// width = thresholds, channels = polarity planes).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTensor {
    signals: usize,
    thresholds: usize,
    timesteps: usize,
    /// Bitset in `[input index][timestep]` order.
    bits: Vec<u64>,
}

impl SpikeTensor {
    pub fn zeros(signals: usize, thresholds: usize, timesteps: usize) -> Self {
        let cells = signals * thresholds * POLARITIES * timesteps;
        Self {
            signals,
            thresholds,
            timesteps,
            bits: vec![0; cells.div_ceil(64)],
        }
    }

    pub fn signals(&self) -> usize {
        self.signals
    }

    pub fn thresholds(&self) -> usize {
        self.thresholds
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    /// Number of input neurons, `signals * thresholds * 2`.
    pub fn inputs(&self) -> usize {
        self.signals * self.thresholds * POLARITIES
    }

    /// `(height, width, channels)` as seen by the network.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.signals, self.thresholds, POLARITIES)
    }

    pub fn cell_count(&self) -> usize {
        self.inputs() * self.timesteps
    }

    pub fn input_index(&self, signal: usize, threshold: usize, plane: usize) -> usize {
        (signal * self.thresholds + threshold) * POLARITIES + plane
    }

    fn bit(&self, input: usize, t: usize) -> usize {
        input * self.timesteps + t
    }

    pub fn get(&self, signal: usize, threshold: usize, plane: usize, t: usize) -> bool {
        self.get_input(self.input_index(signal, threshold, plane), t)
    }

    pub fn get_input(&self, input: usize, t: usize) -> bool {
        let b = self.bit(input, t);
        self.bits[b / 64] >> (b % 64) & 1 == 1
    }

    /// Sets a cell. Fails if the opposite polarity already occupies the same
    /// (signal, threshold, timestep) or the index is out of range.
    pub fn set(&mut self, signal: usize, threshold: usize, polarity: Polarity, t: usize) -> Result<()> {
        if signal >= self.signals || threshold >= self.thresholds || t >= self.timesteps {
            return Err(Error::Format(format!(
                "cell ({signal}, {threshold}, {t}) outside tensor ({}, {}, {})",
                self.signals, self.thresholds, self.timesteps
            )));
        }
        let other = 1 - polarity.plane();
        if self.get(signal, threshold, other, t) {
            return Err(Error::Format(format!(
                "cell ({signal}, {threshold}, {t}) holds both polarities"
            )));
        }
        let b = self.bit(self.input_index(signal, threshold, polarity.plane()), t);
        self.bits[b / 64] |= 1 << (b % 64);
        Ok(())
    }

    /// Sets a cell by flattened input index (`((s * thr) + i) * 2 + plane`).
    pub fn set_input(&mut self, input: usize, t: usize) -> Result<()> {
        if input >= self.inputs() {
            return Err(Error::Format(format!("input index {input} out of range")));
        }
        let plane = input % POLARITIES;
        let cell = input / POLARITIES;
        self.set(
            cell / self.thresholds,
            cell % self.thresholds,
            Polarity::from_plane(plane).expect("plane < 2"),
            t,
        )
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Sparse view ordered by (timestep, channel, polarity).
    pub fn events(&self) -> Vec<SpikeEvent> {
        let mut events = Vec::with_capacity(self.count_ones());
        for input in 0..self.inputs() {
            for t in 0..self.timesteps {
                if self.get_input(input, t) {
                    events.push(SpikeEvent {
                        timestep: t as u32,
                        channel: (input / POLARITIES) as u32,
                        polarity: Polarity::from_plane(input % POLARITIES).unwrap(),
                    });
                }
            }
        }
        events.sort_unstable();
        events
    }

    /// Active input indices per timestep, each list ascending.
    pub fn frames(&self) -> Vec<Vec<u32>> {
        let mut frames = vec![Vec::new(); self.timesteps];
        for input in 0..self.inputs() {
            for (t, frame) in frames.iter_mut().enumerate() {
                if self.get_input(input, t) {
                    frame.push(input as u32);
                }
            }
        }
        frames
    }

    pub fn from_events(
        signals: usize,
        thresholds: usize,
        timesteps: usize,
        events: &[SpikeEvent],
    ) -> Result<Self> {
        let mut tensor = Self::zeros(signals, thresholds, timesteps);
        for e in events {
            let channel = e.channel as usize;
            tensor.set(channel / thresholds, channel % thresholds, e.polarity, e.timestep as usize)?;
        }
        Ok(tensor)
    }
}

/// Encodes a window with one column per signal. Columns `0..6` use the IMU
/// bank and column 6 the capacitance bank.
pub fn encode_window(window: ArrayView2<'_, f64>, banks: &BankMap) -> Result<SpikeTensor> {
    if window.ncols() != SIGNALS {
        return Err(Error::config(format!(
            "window has {} columns, expected {SIGNALS}",
            window.ncols()
        )));
    }
    if window.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "window has {} rows, need at least 2",
            window.nrows()
        )));
    }
    let bank_for = |m: Modality| {
        banks
            .get(&m)
            .ok_or_else(|| Error::config(format!("no threshold bank for {m:?}")))
    };
    let imu = bank_for(Modality::Imu)?;
    let cap = bank_for(Modality::Capacitance)?;
    if imu.count() != cap.count() {
        return Err(Error::config(format!(
            "bank sizes differ: IMU {} vs capacitance {}",
            imu.count(),
            cap.count()
        )));
    }

    let mut tensor = SpikeTensor::zeros(SIGNALS, imu.count(), window.nrows() - 1);
    for (signal, column) in window.columns().into_iter().enumerate() {
        let bank = if Modality::of_signal(signal) == Modality::Imu { imu } else { cap };
        let samples: Vec<f64> = column.to_vec();
        for e in encode_channel(&samples, bank)? {
            tensor.set(signal, e.channel as usize, e.polarity, e.timestep as usize)?;
        }
    }
    Ok(tensor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeStats {
    /// `[signal][threshold]`, both polarities summed.
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
    /// Set cells over all cells.
    pub density: f64,
}

pub fn spike_stats(t: &SpikeTensor) -> SpikeStats {
    let mut counts = vec![vec![0u64; t.thresholds()]; t.signals()];
    for input in 0..t.inputs() {
        let cell = input / POLARITIES;
        let n = (0..t.timesteps()).filter(|&step| t.get_input(input, step)).count() as u64;
        counts[cell / t.thresholds()][cell % t.thresholds()] += n;
    }
    let total: u64 = counts.iter().flatten().sum();
    let cells = t.cell_count();
    let density = if cells == 0 { 0.0 } else { total as f64 / cells as f64 };
    SpikeStats {
        counts,
        total,
        density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn geometric() -> ThresholdBank {
        build_bank(0.00005, ThresholdScheme::Geometric, 5).unwrap()
    }

    #[test]
    fn geometric_bank_doubles() {
        assert_eq!(geometric().thresholds(), &[0.00005, 0.0001, 0.0002, 0.0004, 0.0008]);
    }

    #[test]
    fn arithmetic_bank_steps_by_base() {
        let bank = build_bank(0.00005, ThresholdScheme::Arithmetic, 5).unwrap();
        let expected: Vec<f64> = (0..5).map(|i| 0.00005 * (i + 1) as f64).collect();
        assert_eq!(bank.thresholds(), expected.as_slice());
        for (got, lit) in bank.thresholds().iter().zip([0.00005, 0.0001, 0.00015, 0.0002, 0.00025]) {
            assert!((got - lit).abs() <= f64::EPSILON * lit);
        }
    }

    #[test]
    fn single_threshold_bank() {
        for scheme in [ThresholdScheme::Arithmetic, ThresholdScheme::Geometric] {
            assert_eq!(build_bank(0.3, scheme, 1).unwrap().thresholds(), &[0.3]);
        }
    }

    #[test]
    fn bad_bank_config() {
        assert!(build_bank(0.0, ThresholdScheme::Geometric, 5).is_err());
        assert!(build_bank(-1.0, ThresholdScheme::Geometric, 5).is_err());
        assert!(build_bank(1.0, ThresholdScheme::Geometric, 0).is_err());
    }

    #[test]
    fn rise_of_0_00012_fires_two_thresholds() {
        let events = encode_channel(&[1.0, 1.0 + 0.00012], &geometric()).unwrap();
        let channels: Vec<u32> = events.iter().map(|e| e.channel).collect();
        assert_eq!(channels, vec![0, 1]);
        assert!(events.iter().all(|e| e.polarity == Polarity::Positive && e.timestep == 0));
    }

    #[test]
    fn constant_signal_is_silent() {
        assert!(encode_channel(&[0.7; 50], &geometric()).unwrap().is_empty());
    }

    #[test]
    fn difference_equal_to_threshold_does_not_fire() {
        let bank = build_bank(0.5, ThresholdScheme::Arithmetic, 2).unwrap();
        let events = encode_channel(&[0.0, 0.5, 0.0, 1.0], &bank).unwrap();
        // 0.5 equals eps_0; -0.5 too; +1.0 fires eps_0 only (eps_1 = 1.0).
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].timestep, 2);
    }

    #[test]
    fn short_signal_rejected() {
        assert!(matches!(encode_channel(&[1.0], &geometric()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn constant_window_is_empty() {
        let w = Array2::from_elem((20, 7), 0.25);
        let t = encode_window(w.view(), &default_banks(ThresholdScheme::Geometric, 5).unwrap()).unwrap();
        assert_eq!(t.count_ones(), 0);
        assert_eq!((t.signals(), t.thresholds(), t.timesteps()), (7, 5, 19));
    }

    #[test]
    fn single_step_down_fires_every_threshold() {
        let mut w = Array2::zeros((10, 7));
        for r in 4..10 {
            w[[r, 2]] = -0.001;
        }
        let t = encode_window(w.view(), &default_banks(ThresholdScheme::Geometric, 5).unwrap()).unwrap();
        assert_eq!(t.count_ones(), 5);
        for i in 0..5 {
            assert!(t.get(2, i, 1, 3));
        }
    }

    #[test]
    fn missing_bank_is_config_error() {
        let mut banks = default_banks(ThresholdScheme::Geometric, 5).unwrap();
        banks.remove(&Modality::Capacitance);
        let w = Array2::zeros((5, 7));
        assert!(matches!(encode_window(w.view(), &banks), Err(Error::Config(_))));
    }

    #[test]
    fn both_polarities_rejected() {
        let mut t = SpikeTensor::zeros(7, 5, 4);
        t.set(1, 2, Polarity::Positive, 3).unwrap();
        assert!(t.set(1, 2, Polarity::Negative, 3).is_err());
    }

    #[test]
    fn stats_of_empty_and_single() {
        let mut t = SpikeTensor::zeros(7, 5, 10);
        assert_eq!(spike_stats(&t).density, 0.0);
        t.set(6, 4, Polarity::Negative, 9).unwrap();
        let s = spike_stats(&t);
        assert_eq!(s.density, 1.0 / (7.0 * 5.0 * 2.0 * 10.0));
        assert_eq!(s.counts[6][4], 1);
    }

    #[test]
    fn events_round_trip_through_tensor() {
        let mut t = SpikeTensor::zeros(3, 2, 6);
        t.set(0, 1, Polarity::Negative, 5).unwrap();
        t.set(2, 0, Polarity::Positive, 0).unwrap();
        t.set_input(t.input_index(1, 1, 0), 2).unwrap();
        let back = SpikeTensor::from_events(3, 2, 6, &t.events()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.frames()[2], vec![t.input_index(1, 1, 0) as u32]);
    }
}
