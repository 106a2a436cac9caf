//! Real-valued network parameters used during training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::snn::{quantize_layer, Layer, LayerSpec, LifParams, NetworkModel, Shape3, MAX_DELAY, MAX_EXPONENT};

#[derive(Debug, Clone, PartialEq)]
pub struct RealNetwork {
    pub input: Shape3,
    pub specs: Vec<LayerSpec>,
    /// Per layer, same layout as [`Layer::weights`], in state units.
    pub weights: Vec<Vec<f64>>,
    /// Per layer, one delay per input neuron; may be fractional while training.
    pub delays: Vec<Vec<f64>>,
    pub lif: LifParams,
}

impl RealNetwork {
    /// Uniform weights in `±scale * v_threshold / sqrt(fan_in)`, zero delays.
    pub fn random(input: Shape3, specs: Vec<LayerSpec>, lif: LifParams, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = specs
            .iter()
            .map(|spec| {
                let fan_in = spec.weight_count() / spec.output_size();
                let bound = scale * lif.v_threshold as f64 / (fan_in as f64).sqrt();
                (0..spec.weight_count())
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect()
            })
            .collect();
        let delays = specs.iter().map(|s| vec![0.0; s.input_size()]).collect();
        Self {
            input,
            specs,
            weights,
            delays,
            lif,
        }
    }

    /// Exact real image of an integer model.
    pub fn from_model(m: &NetworkModel) -> Self {
        Self {
            input: m.input,
            specs: m.layers.iter().map(|l| l.spec).collect(),
            weights: m
                .layers
                .iter()
                .map(|l| l.effective_weights().into_iter().map(|w| w as f64).collect())
                .collect(),
            delays: m
                .layers
                .iter()
                .map(|l| l.delays.iter().map(|&d| d as f64).collect())
                .collect(),
            lif: m.lif,
        }
    }

    /// Quantizes weights (exponent floored at 0 so synaptic weights stay
    /// integral) and rounds delays into `0..=62`.
    pub fn to_model(&self) -> Result<NetworkModel> {
        let layers = self
            .specs
            .iter()
            .zip(&self.weights)
            .zip(&self.delays)
            .enumerate()
            .map(|(i, ((&spec, w), d))| {
                let q = quantize_layer(w, 0)?;
                if q.exponent > MAX_EXPONENT as i32 {
                    return Err(Error::WeightRange { layer: i + 1, value: q.exponent });
                }
                Ok(Layer {
                    spec,
                    weights: q.mantissas,
                    exponent: q.exponent as i8,
                    delays: d.iter().map(|&x| round_delay(x, MAX_DELAY as f64) as u8).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NetworkModel {
            input: self.input,
            layers,
            lif: self.lif,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.delays.iter().map(Vec::len).sum::<usize>()
    }
}

pub(crate) fn round_delay(d: f64, cap: f64) -> f64 {
    d.round().clamp(0.0, cap)
}
