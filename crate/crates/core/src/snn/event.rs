//! Event-driven backend.
//!
//! Spikes are scheduled into per-layer calendar queues at their arrival time
//! (`t + axonal delay`) and scattered over their fan-out when they arrive.
//! Only neurons that received input or still hold non-zero state are
//! updated; a neuron at rest with no input would stay at rest, so skipping
//! it is exact.

use super::dense::{update_neuron, DELAY_SLOTS};
use super::model::NetworkModel;
use super::{ExecStats, Raster, RunOutput};
use crate::encoder::SpikeTensor;
use crate::error::Result;

struct LayerRuntime {
    weights: Vec<i64>,
    u: Vec<i64>,
    v: Vec<i64>,
    refractory: Vec<u32>,
    /// Presynaptic indices whose spikes arrive at `t`, bucketed by `t % DELAY_SLOTS`.
    calendar: Vec<Vec<u32>>,
    current: Vec<i64>,
    touched: Vec<bool>,
    active: Vec<u32>,
}

impl LayerRuntime {
    fn is_resting(&self, i: usize) -> bool {
        self.u[i] == 0 && self.v[i] == 0 && self.refractory[i] == 0
    }
}

pub fn run_event_driven(m: &NetworkModel, input: &SpikeTensor) -> Result<RunOutput> {
    super::check_input(m, input)?;
    let steps = input.timesteps();
    let mut layers: Vec<LayerRuntime> = m
        .layers
        .iter()
        .map(|l| {
            let n = l.spec.output_size();
            LayerRuntime {
                weights: l.effective_weights(),
                u: vec![0; n],
                v: vec![0; n],
                refractory: vec![0; n],
                calendar: vec![Vec::new(); DELAY_SLOTS],
                current: vec![0; n],
                touched: vec![false; n],
                active: Vec::new(),
            }
        })
        .collect();
    let mut rasters: Vec<Raster> = m
        .layers
        .iter()
        .map(|l| Raster::new(l.spec.output_size(), steps))
        .collect();
    let mut stats = ExecStats::default();
    let frames = input.frames();

    for (t, frame) in frames.iter().enumerate() {
        let slot = t % DELAY_SLOTS;
        for li in 0..layers.len() {
            let spec = m.layers[li].spec;
            let delays = &m.layers[li].delays;

            // Schedule this step's presynaptic spikes.
            let fired: &[u32] = if li == 0 { frame } else { &rasters[li - 1].steps[t] };
            let rt = &mut layers[li];
            for &pre in fired {
                let arrival = t + delays[pre as usize] as usize;
                if arrival < steps {
                    rt.calendar[arrival % DELAY_SLOTS].push(pre);
                }
            }

            // Deliver arrivals.
            let arrivals = std::mem::take(&mut rt.calendar[slot]);
            let mut candidates = std::mem::take(&mut rt.active);
            for &pre in &arrivals {
                let LayerRuntime { weights, current, touched, .. } = &mut *rt;
                let mut delivered = 0u64;
                spec.for_each_fanout(pre as usize, |post, k| {
                    current[post] += weights[k];
                    delivered += 1;
                    if !touched[post] {
                        touched[post] = true;
                        candidates.push(post as u32);
                    }
                });
                stats.synaptic_events += delivered;
            }
            let mut recycled = arrivals;
            recycled.clear();
            rt.calendar[slot] = recycled;

            // Active neurons were never marked touched, so the list may hold
            // duplicates only when an active neuron also received input.
            candidates.sort_unstable();
            candidates.dedup();

            let mut spikes = Vec::new();
            let mut still_active = Vec::with_capacity(candidates.len());
            for &post in &candidates {
                let i = post as usize;
                let input_current = rt.current[i];
                rt.current[i] = 0;
                rt.touched[i] = false;
                let LayerRuntime { u, v, refractory, .. } = &mut *rt;
                if update_neuron(m, li, i, &mut u[i], &mut v[i], &mut refractory[i], input_current)? {
                    spikes.push(post);
                }
                if !rt.is_resting(i) {
                    still_active.push(post);
                }
            }
            stats.neuron_updates += candidates.len() as u64;
            rt.active = still_active;
            rasters[li].steps[t] = spikes;
        }
    }

    Ok(RunOutput::assemble(Raster::from_frames(input.inputs(), frames), rasters, stats))
}
