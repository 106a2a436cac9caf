//! Reference backend: every neuron of every layer is updated on every
//! timestep, and synaptic input is gathered over each neuron's fan-in.

use super::model::{NetworkModel, DECAY_SCALE, MAX_DELAY, STATE_MAX, STATE_MIN};
use super::{ExecStats, Raster, RunOutput};
use crate::encoder::SpikeTensor;
use crate::error::{Error, Result};

/// Ring depth of the per-layer delay lines.
pub(crate) const DELAY_SLOTS: usize = MAX_DELAY as usize + 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerState {
    pub u: Vec<i64>,
    pub v: Vec<i64>,
    pub refractory_remaining: Vec<u32>,
    /// Input spikes of the last `DELAY_SLOTS` timesteps, indexed by `t % DELAY_SLOTS`.
    history: Vec<Vec<bool>>,
}

/// Integer CUBA-LIF state of a whole network plus its axonal delay lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronState {
    pub layers: Vec<LayerState>,
    /// Number of steps taken since reset.
    pub t: usize,
}

impl NeuronState {
    pub fn new(m: &NetworkModel) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| {
                let n = l.spec.output_size();
                LayerState {
                    u: vec![0; n],
                    v: vec![0; n],
                    refractory_remaining: vec![0; n],
                    history: vec![vec![false; l.spec.input_size()]; DELAY_SLOTS],
                }
            })
            .collect();
        Self { layers, t: 0 }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.u.fill(0);
            l.v.fill(0);
            l.refractory_remaining.fill(0);
            for h in &mut l.history {
                h.fill(false);
            }
        }
        self.t = 0;
    }
}

/// `floor(x * (4096 - decay) / 4096)`
#[inline]
pub fn decay(x: i64, decay: u32) -> i64 {
    (x * (DECAY_SCALE - decay as i64)).div_euclid(DECAY_SCALE)
}

#[inline]
pub(crate) fn check(layer: usize, neuron: usize, variable: &'static str, value: i64) -> Result<i64> {
    if (STATE_MIN..=STATE_MAX).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Overflow {
            layer: layer + 1,
            neuron,
            variable,
            value,
        })
    }
}

/// Outcome of one neuron update.
#[inline]
pub(crate) fn update_neuron(
    m: &NetworkModel,
    layer: usize,
    neuron: usize,
    u: &mut i64,
    v: &mut i64,
    refractory: &mut u32,
    input: i64,
) -> Result<bool> {
    let lif = &m.lif;
    *u = check(layer, neuron, "u", decay(*u, lif.decay_u) + input)?;
    if *refractory > 0 {
        *refractory -= 1;
        *v = 0;
        return Ok(false);
    }
    *v = check(layer, neuron, "v", decay(*v, lif.decay_v) + *u)?;
    if *v >= lif.v_threshold as i64 {
        *v = 0;
        *refractory = lif.refractory_steps;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Advances every layer by one timestep. `input` holds the network input
/// spikes at this step; the result holds each layer's output spikes.
pub fn step_dense(m: &NetworkModel, state: &mut NeuronState, input: &[bool]) -> Result<Vec<Vec<bool>>> {
    let weights: Vec<Vec<i64>> = m.layers.iter().map(|l| l.effective_weights()).collect();
    let mut stats = ExecStats::default();
    step_with(m, &weights, state, input, usize::MAX, &mut stats)
}

fn step_with(
    m: &NetworkModel,
    weights: &[Vec<i64>],
    state: &mut NeuronState,
    input: &[bool],
    horizon: usize,
    stats: &mut ExecStats,
) -> Result<Vec<Vec<bool>>> {
    let t = state.t;
    let slot = t % DELAY_SLOTS;
    let mut outputs: Vec<Vec<bool>> = Vec::with_capacity(m.layers.len());
    for (li, layer) in m.layers.iter().enumerate() {
        let ls = &mut state.layers[li];
        let incoming: &[bool] = if li == 0 { input } else { &outputs[li - 1] };
        ls.history[slot].copy_from_slice(incoming);
        for (pre, &fired) in incoming.iter().enumerate() {
            if fired && t + (layer.delays[pre] as usize) < horizon {
                stats.synaptic_events += layer.spec.fanout_len(pre) as u64;
            }
        }

        let delayed: Vec<bool> = layer
            .delays
            .iter()
            .enumerate()
            .map(|(pre, &d)| {
                let d = d as usize;
                t >= d && ls.history[(t - d) % DELAY_SLOTS][pre]
            })
            .collect();

        let w = &weights[li];
        let n = layer.spec.output_size();
        let mut spikes = vec![false; n];
        for (post, spike) in spikes.iter_mut().enumerate() {
            let mut current = 0i64;
            layer.spec.for_each_fanin(post, |pre, k| {
                if delayed[pre] {
                    current += w[k];
                }
            });
            *spike = update_neuron(
                m,
                li,
                post,
                &mut ls.u[post],
                &mut ls.v[post],
                &mut ls.refractory_remaining[post],
                current,
            )?;
        }
        stats.neuron_updates += n as u64;
        outputs.push(spikes);
    }
    state.t += 1;
    Ok(outputs)
}

/// Runs a whole window from a reset state.
pub fn run_dense(m: &NetworkModel, input: &SpikeTensor) -> Result<RunOutput> {
    super::check_input(m, input)?;
    let weights: Vec<Vec<i64>> = m.layers.iter().map(|l| l.effective_weights()).collect();
    let steps = input.timesteps();
    let mut state = NeuronState::new(m);
    let mut stats = ExecStats::default();
    let mut rasters: Vec<Raster> = m
        .layers
        .iter()
        .map(|l| Raster::new(l.spec.output_size(), steps))
        .collect();
    let frames = input.frames();
    let mut dense_input = vec![false; input.inputs()];
    for (t, frame) in frames.iter().enumerate() {
        dense_input.fill(false);
        for &i in frame {
            dense_input[i as usize] = true;
        }
        let out = step_with(m, &weights, &mut state, &dense_input, steps, &mut stats)?;
        for (raster, spikes) in rasters.iter_mut().zip(out) {
            raster.steps[t] = spikes
                .iter()
                .enumerate()
                .filter_map(|(i, &s)| s.then_some(i as u32))
                .collect();
        }
    }
    Ok(RunOutput::assemble(Raster::from_frames(input.inputs(), frames), rasters, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::model::{Layer, LayerSpec, LifParams};

    fn single(weight: i32, delay: u32, lif: LifParams) -> NetworkModel {
        let spec = LayerSpec::Dense { inputs: 1, outputs: 1 };
        NetworkModel {
            input: (1, 1, 1),
            layers: vec![Layer::from_ints(spec, &[weight], 0, &[delay]).unwrap()],
            lif,
        }
    }

    #[test]
    fn weight_equal_to_threshold_fires_immediately() {
        let lif = LifParams::default();
        let m = single(lif.v_threshold as i32, 0, lif);
        let mut state = NeuronState::new(&m);
        let out = step_dense(&m, &mut state, &[true]).unwrap();
        assert!(out[0][0]);
        assert_eq!(state.layers[0].u[0], 64);
        assert_eq!(state.layers[0].v[0], 0);
    }

    #[test]
    fn current_decays_by_three_quarters() {
        let m = single(0, 0, LifParams { v_threshold: 1 << 22, ..LifParams::default() });
        let mut state = NeuronState::new(&m);
        state.layers[0].u[0] = 4096;
        step_dense(&m, &mut state, &[false]).unwrap();
        assert_eq!(state.layers[0].u[0], 3072);
    }

    #[test]
    fn floor_rounds_toward_negative_infinity() {
        assert_eq!(decay(-1, 1024), -1);
        assert_eq!(decay(-4, 1024), -3);
        assert_eq!(decay(5, 1024), 3);
        assert_eq!(decay(7, 0), 7);
        assert_eq!(decay(7, 4096), 0);
    }

    #[test]
    fn refractory_holds_voltage_at_zero() {
        let lif = LifParams { refractory_steps: 2, v_threshold: 10, ..LifParams::default() };
        let m = single(100, 0, lif);
        let mut state = NeuronState::new(&m);
        let fired: Vec<bool> = (0..4)
            .map(|_| step_dense(&m, &mut state, &[true]).unwrap()[0][0])
            .collect();
        assert_eq!(fired, vec![true, false, false, true]);
    }

    #[test]
    fn overflow_is_an_error() {
        let spec = LayerSpec::Dense { inputs: 1, outputs: 1 };
        let m = NetworkModel {
            input: (1, 1, 1),
            layers: vec![Layer { spec, weights: vec![127], exponent: 15, delays: vec![0] }],
            lif: LifParams { v_threshold: STATE_MAX as u32, decay_u: 0, ..LifParams::default() },
        };
        let mut state = NeuronState::new(&m);
        let err = (0..10).try_for_each(|_| step_dense(&m, &mut state, &[true]).map(|_| ()));
        assert!(matches!(err, Err(Error::Overflow { layer: 1, neuron: 0, .. })));
    }
}
