//! Quantized CUBA-LIF spiking network.
//!
//! Per neuron and timestep, with integer state and floor division:
//!
//! ```text
//! u <- floor(u * (4096 - decay_u) / 4096) + sum(w * delayed input spikes)
//! v <- floor(v * (4096 - decay_v) / 4096) + u
//! spike if v >= v_threshold, then v <- 0
//! ```
//!
//! Two backends execute the same model: [`run_dense`] updates every neuron
//! every step; [`run_event_driven`] only touches neurons reached by spikes or
//! still holding charge. Their outputs are bit-identical.

mod dense;
mod event;
mod file;
mod model;
mod quantize;

pub use dense::{decay, run_dense, step_dense, LayerState, NeuronState};
pub use event::run_event_driven;
pub use file::{
    decode_model, encode_model, parse_lif_config, read_model, write_model, MODEL_MAGIC, MODEL_VERSION,
};
pub use model::{
    layer_chain, validate_model, Layer, LayerSpec, LifParams, NetworkModel, Shape3, DECAY_SCALE,
    KERNEL, MAX_DELAY, MAX_EXPONENT, STATE_MAX, STATE_MIN,
};
pub use quantize::{quantize_layer, quantize_weights, QuantizedLayer};

use crate::encoder::SpikeTensor;
use crate::error::{Error, Result};

/// Which neurons spiked at each timestep; index lists are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub neurons: usize,
    pub steps: Vec<Vec<u32>>,
}

impl Raster {
    pub fn new(neurons: usize, timesteps: usize) -> Self {
        Self {
            neurons,
            steps: vec![Vec::new(); timesteps],
        }
    }

    pub fn from_frames(neurons: usize, steps: Vec<Vec<u32>>) -> Self {
        Self { neurons, steps }
    }

    pub fn timesteps(&self) -> usize {
        self.steps.len()
    }

    pub fn spike_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// Spike count of each neuron over the whole raster.
    pub fn counts(&self) -> Vec<u32> {
        let mut counts = vec![0; self.neurons];
        for step in &self.steps {
            for &i in step {
                counts[i as usize] += 1;
            }
        }
        counts
    }
}

/// Work done by a backend while running.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecStats {
    /// Weight deliveries (spike x fan-out) that arrived inside the window.
    pub synaptic_events: u64,
    pub neuron_updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Output-layer spike counts over the window.
    pub counts: Vec<u32>,
    /// The input spikes that drove the run.
    pub input: Raster,
    /// One raster per layer, in layer order.
    pub rasters: Vec<Raster>,
    pub stats: ExecStats,
}

impl RunOutput {
    fn assemble(input: Raster, rasters: Vec<Raster>, stats: ExecStats) -> Self {
        let counts = rasters.last().map(Raster::counts).unwrap_or_default();
        Self {
            counts,
            input,
            rasters,
            stats,
        }
    }
}

fn check_input(m: &NetworkModel, input: &SpikeTensor) -> Result<()> {
    if input.shape() != m.input {
        return Err(Error::Shape {
            layer: 0,
            message: format!("input tensor {:?} but model expects {:?}", input.shape(), m.input),
        });
    }
    Ok(())
}

/// Index of the largest count; the lowest index wins ties.
pub fn classify(counts: &[u32]) -> Result<usize> {
    if counts.is_empty() {
        return Err(Error::InsufficientData("no class counts".into()));
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(best)
}
