//! Forward pass with stored state trajectories and backpropagation through
//! layers and time.
//!
//! The forward dynamics are the integer CUBA-LIF rule evaluated on real
//! numbers. Axonal delays may be fractional while training; the delayed
//! input is interpolated linearly between the two neighbouring timesteps, so
//! its derivative with respect to the delay is the temporal difference of
//! the presynaptic train.
//!
//! In hard mode spikes are binary, decays floor like the integer backend and
//! the spike derivative is replaced by the surrogate. In soft mode there is
//! no flooring and the spike is the surrogate's cumulative distribution, so
//! the backward pass is the exact gradient of the forward pass.

use super::network::RealNetwork;
use crate::encoder::SpikeTensor;
use crate::error::{Error, Result};
use crate::snn::{DECAY_SCALE, STATE_MAX, STATE_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateShape {
    /// `rho(v) = exp(-|v - theta| / a) / (2a)`
    ExponentialPdf,
    /// `rho(v) = 1/a` for `|v - theta| < a/2`
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeMode {
    Hard,
    Soft,
}

/// `alpha` is the surrogate width in units of `v_threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSpec {
    pub shape: SurrogateShape,
    pub alpha: f64,
    pub mode: SpikeMode,
}

impl Default for SurrogateSpec {
    fn default() -> Self {
        Self {
            shape: SurrogateShape::ExponentialPdf,
            alpha: 1.0,
            mode: SpikeMode::Hard,
        }
    }
}

impl SurrogateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("surrogate alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Soft spike: the cumulative distribution whose density is `rho`.
    fn soft_spike(&self, v: f64, theta: f64) -> f64 {
        let a = self.alpha * theta;
        let x = v - theta;
        match self.shape {
            SurrogateShape::ExponentialPdf => {
                if x < 0.0 {
                    0.5 * (x / a).exp()
                } else {
                    1.0 - 0.5 * (-x / a).exp()
                }
            }
            SurrogateShape::Rectangular => (x / a + 0.5).clamp(0.0, 1.0),
        }
    }

    pub fn density(&self, v: f64, theta: f64) -> f64 {
        let a = self.alpha * theta;
        let x = v - theta;
        match self.shape {
            SurrogateShape::ExponentialPdf => (-(x.abs()) / a).exp() / (2.0 * a),
            SurrogateShape::Rectangular => {
                if x.abs() < 0.5 * a {
                    1.0 / a
                } else {
                    0.0
                }
            }
        }
    }

    fn spike(&self, v: f64, theta: f64) -> f64 {
        match self.mode {
            SpikeMode::Hard => {
                if v >= theta {
                    1.0
                } else {
                    0.0
                }
            }
            SpikeMode::Soft => self.soft_spike(v, theta),
        }
    }
}

/// Per-layer trajectories, each `timesteps x neurons` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Delayed (interpolated) input seen by each synapse source, `T x inputs`.
    pub delayed: Vec<f64>,
    pub u: Vec<f64>,
    /// Voltage before the spike test and reset.
    pub v: Vec<f64>,
    pub spikes: Vec<f64>,
    pub refractory: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub timesteps: usize,
    pub mode: SpikeMode,
    /// Network input, `T x inputs`.
    pub input: Vec<f64>,
    pub layers: Vec<LayerTrace>,
    /// Output spike count per class.
    pub counts: Vec<f64>,
}

impl Trace {
    fn layer_input(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].spikes
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub delays: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &RealNetwork) -> Self {
        Self {
            weights: net.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            delays: net.delays.iter().map(|d| vec![0.0; d.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.delays.iter_mut().zip(&other.delays) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().flatten().for_each(|x| *x *= k);
        self.delays.iter_mut().flatten().for_each(|x| *x *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().chain(self.delays.iter().flatten()).all(|x| x.is_finite())
    }

    /// All gradient entries, weights first, layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().flatten().chain(self.delays.iter().flatten()).copied().collect()
    }
}

fn state_check(mode: SpikeMode, layer: usize, neuron: usize, variable: &'static str, value: f64) -> Result<()> {
    if mode == SpikeMode::Hard && !(STATE_MIN as f64..=STATE_MAX as f64).contains(&value) {
        return Err(Error::Overflow {
            layer: layer + 1,
            neuron,
            variable,
            value: value as i64,
        });
    }
    Ok(())
}

/// Delay split into whole steps and a fractional part.
#[inline]
fn split_delay(d: f64) -> (usize, f64) {
    let whole = d.floor();
    (whole as usize, d - whole)
}

pub fn forward_with_trace(net: &RealNetwork, input: &SpikeTensor, surrogate: &SurrogateSpec) -> Result<Trace> {
    surrogate.validate()?;
    if input.shape() != net.input {
        return Err(Error::Shape {
            layer: 0,
            message: format!("input tensor {:?} but model expects {:?}", input.shape(), net.input),
        });
    }
    let mode = surrogate.mode;
    if mode == SpikeMode::Soft && net.lif.refractory_steps > 0 {
        return Err(Error::config("soft spike mode does not support refractory periods"));
    }
    let steps = input.timesteps();
    let n_input = input.inputs();
    let mut x0 = vec![0.0; steps * n_input];
    for (t, frame) in input.frames().iter().enumerate() {
        for &i in frame {
            x0[t * n_input + i as usize] = 1.0;
        }
    }

    let theta = net.lif.v_threshold as f64;
    let keep_u = (DECAY_SCALE - net.lif.decay_u as i64) as f64;
    let keep_v = (DECAY_SCALE - net.lif.decay_v as i64) as f64;
    let scale = DECAY_SCALE as f64;
    let decay = |x: f64, keep: f64| {
        let y = x * keep / scale;
        match mode {
            SpikeMode::Hard => y.floor(),
            SpikeMode::Soft => y,
        }
    };

    let mut layers: Vec<LayerTrace> = net
        .specs
        .iter()
        .map(|s| {
            let n = s.output_size();
            LayerTrace {
                delayed: vec![0.0; steps * s.input_size()],
                u: vec![0.0; steps * n],
                v: vec![0.0; steps * n],
                spikes: vec![0.0; steps * n],
                refractory: vec![false; steps * n],
            }
        })
        .collect();
    let mut refractory_left: Vec<Vec<u32>> = net.specs.iter().map(|s| vec![0; s.output_size()]).collect();
    // Post-reset voltage of the previous step.
    let mut v_post: Vec<Vec<f64>> = net.specs.iter().map(|s| vec![0.0; s.output_size()]).collect();
    let mut current: Vec<Vec<f64>> = net.specs.iter().map(|s| vec![0.0; s.output_size()]).collect();

    for t in 0..steps {
        for l in 0..net.specs.len() {
            let spec = net.specs[l];
            let n_in = spec.input_size();
            let n_out = spec.output_size();
            let w = &net.weights[l];
            let (before, rest) = layers.split_at_mut(l);
            let lt = &mut rest[0];
            let x: &[f64] = if l == 0 { &x0 } else { &before[l - 1].spikes };

            let cur = &mut current[l];
            cur.fill(0.0);
            for j in 0..n_in {
                let (k, f) = split_delay(net.delays[l][j]);
                let at = |lag: usize| if t >= lag { x[(t - lag) * n_in + j] } else { 0.0 };
                let xd = if f == 0.0 { at(k) } else { (1.0 - f) * at(k) + f * at(k + 1) };
                lt.delayed[t * n_in + j] = xd;
                if xd != 0.0 {
                    spec.for_each_fanout(j, |i, wk| cur[i] += w[wk] * xd);
                }
            }

            for i in 0..n_out {
                let idx = t * n_out + i;
                let u_prev = if t > 0 { lt.u[idx - n_out] } else { 0.0 };
                let u = decay(u_prev, keep_u) + cur[i];
                state_check(mode, l, i, "u", u)?;
                lt.u[idx] = u;
                let left = &mut refractory_left[l][i];
                if *left > 0 {
                    *left -= 1;
                    lt.refractory[idx] = true;
                    lt.v[idx] = 0.0;
                    lt.spikes[idx] = 0.0;
                    v_post[l][i] = 0.0;
                    continue;
                }
                let v = decay(v_post[l][i], keep_v) + u;
                state_check(mode, l, i, "v", v)?;
                let s = surrogate.spike(v, theta);
                lt.v[idx] = v;
                lt.spikes[idx] = s;
                v_post[l][i] = v * (1.0 - s);
                if mode == SpikeMode::Hard && s == 1.0 {
                    *left = net.lif.refractory_steps;
                }
            }
        }
    }

    let last = layers.last().expect("network has layers");
    let n_out = net.specs.last().unwrap().output_size();
    let mut counts = vec![0.0; n_out];
    for t in 0..steps {
        for (c, s) in counts.iter_mut().zip(&last.spikes[t * n_out..(t + 1) * n_out]) {
            *c += s;
        }
    }
    Ok(Trace {
        timesteps: steps,
        mode,
        input: x0,
        layers,
        counts,
    })
}

/// Backpropagates `d loss / d counts` through the stored trajectories.
pub fn backward_from_counts(
    net: &RealNetwork,
    trace: &Trace,
    count_grad: &[f64],
    surrogate: &SurrogateSpec,
) -> Result<Gradients> {
    if trace.layers.len() != net.specs.len() || trace.counts.len() != count_grad.len() {
        return Err(Error::config("trace does not belong to this network"));
    }
    let steps = trace.timesteps;
    let theta = net.lif.v_threshold as f64;
    let a_u = (DECAY_SCALE - net.lif.decay_u as i64) as f64 / DECAY_SCALE as f64;
    let a_v = (DECAY_SCALE - net.lif.decay_v as i64) as f64 / DECAY_SCALE as f64;
    let mut grads = Gradients::zeros_like(net);

    // d loss / d spikes of the current layer, T x n_out.
    let n_last = net.specs.last().unwrap().output_size();
    let mut g_spikes: Vec<f64> = (0..steps).flat_map(|_| count_grad.iter().copied()).collect();
    debug_assert_eq!(g_spikes.len(), steps * n_last);

    for l in (0..net.specs.len()).rev() {
        let spec = net.specs[l];
        let n_in = spec.input_size();
        let n_out = spec.output_size();
        let lt = &trace.layers[l];
        let w = &net.weights[l];

        // Reverse-time recursion for d loss / d synaptic current.
        let mut g_current = vec![0.0; steps * n_out];
        let mut g_u_next = vec![0.0; n_out];
        let mut g_v_next = vec![0.0; n_out];
        for t in (0..steps).rev() {
            for i in 0..n_out {
                let idx = t * n_out + i;
                let g_v = if lt.refractory[idx] {
                    0.0
                } else {
                    let v = lt.v[idx];
                    let s = lt.spikes[idx];
                    let ds = surrogate.density(v, theta);
                    // v_post = v (1 - s(v)) feeds the next step through the decay.
                    let g_post = a_v * g_v_next[i];
                    g_post * ((1.0 - s) - v * ds) + g_spikes[idx] * ds
                };
                let g_u = g_v + a_u * g_u_next[i];
                g_current[idx] = g_u;
                g_v_next[i] = g_v;
                g_u_next[i] = g_u;
            }
        }

        // Synapses: weight and delay gradients, and d loss / d presynaptic spikes.
        let x = trace.layer_input(l);
        let mut g_x = vec![0.0; steps * n_in];
        let gw = &mut grads.weights[l];
        let gd = &mut grads.delays[l];
        for t in 0..steps {
            let g_row = &g_current[t * n_out..(t + 1) * n_out];
            let row_active = g_row.iter().any(|&g| g != 0.0);
            for j in 0..n_in {
                let xd = lt.delayed[t * n_in + j];
                if !row_active {
                    continue;
                }
                let mut g_xd = 0.0;
                spec.for_each_fanout(j, |i, k| {
                    g_xd += w[k] * g_row[i];
                    if xd != 0.0 {
                        gw[k] += g_row[i] * xd;
                    }
                });
                if g_xd == 0.0 {
                    continue;
                }
                let (k, f) = split_delay(net.delays[l][j]);
                let at = |lag: usize| if t >= lag { x[(t - lag) * n_in + j] } else { 0.0 };
                gd[j] += g_xd * (at(k + 1) - at(k));
                if t >= k {
                    g_x[(t - k) * n_in + j] += (1.0 - f) * g_xd;
                }
                if f != 0.0 && t > k {
                    g_x[(t - k - 1) * n_in + j] += f * g_xd;
                }
            }
        }
        g_spikes = g_x;
    }
    Ok(grads)
}
