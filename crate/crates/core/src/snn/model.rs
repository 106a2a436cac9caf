//! Network description: LIF parameters, layer shapes, quantized weights and
//! axonal delays.

use crate::error::{Error, Result};

/// Decays are expressed in 1/4096ths of the state lost per timestep.
pub const DECAY_SCALE: i64 = 4096;
pub const MAX_DELAY: u8 = 62;
pub const MAX_EXPONENT: i8 = 15;
pub const STATE_MIN: i64 = -(1 << 23);
pub const STATE_MAX: i64 = (1 << 23) - 1;
pub const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub decay_u: u32,
    pub decay_v: u32,
    pub v_threshold: u32,
    pub refractory_steps: u32,
    pub timestep_ms: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            decay_u: 1024,
            decay_v: 128,
            v_threshold: 64,
            refractory_steps: 0,
            timestep_ms: 1.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if self.decay_u as i64 > DECAY_SCALE || self.decay_v as i64 > DECAY_SCALE {
            return Err(Error::config(format!(
                "decays must lie in [0, 4096], got {} / {}",
                self.decay_u, self.decay_v
            )));
        }
        if self.v_threshold == 0 || self.v_threshold as i64 > STATE_MAX {
            return Err(Error::config(format!("bad v_threshold {}", self.v_threshold)));
        }
        if !(self.timestep_ms > 0.0 && self.timestep_ms.is_finite()) {
            return Err(Error::config(format!("bad timestep_ms {}", self.timestep_ms)));
        }
        Ok(())
    }
}

/// `(height, width, channels)`
pub type Shape3 = (usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3x3 kernel, stride 1, zero padding 1.
    Conv2d { input: Shape3, features: usize },
    Dense { inputs: usize, outputs: usize },
}

impl LayerSpec {
    pub fn input_size(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { input: (h, w, c), .. } => h * w * c,
            LayerSpec::Dense { inputs, .. } => inputs,
        }
    }

    pub fn output_size(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { input: (h, w, _), features } => h * w * features,
            LayerSpec::Dense { outputs, .. } => outputs,
        }
    }

    pub fn output_shape(&self) -> Option<Shape3> {
        match *self {
            LayerSpec::Conv2d { input: (h, w, _), features } => Some((h, w, features)),
            LayerSpec::Dense { .. } => None,
        }
    }

    pub fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { input: (_, _, c), features } => features * KERNEL * KERNEL * c,
            LayerSpec::Dense { inputs, outputs } => inputs * outputs,
        }
    }

    /// Calls `f(post, weight_index)` for every synapse leaving input `pre`.
    #[inline]
    pub fn for_each_fanout(&self, pre: usize, mut f: impl FnMut(usize, usize)) {
        match *self {
            LayerSpec::Conv2d { input: (h, w, c), features } => {
                let ch = pre % c;
                let pos = pre / c;
                let (py, px) = (pos / w, pos % w);
                for ky in 0..KERNEL {
                    let Some(y) = (py + 1).checked_sub(ky).filter(|&y| y < h) else {
                        continue;
                    };
                    for kx in 0..KERNEL {
                        let Some(x) = (px + 1).checked_sub(kx).filter(|&x| x < w) else {
                            continue;
                        };
                        let base = (y * w + x) * features;
                        for feat in 0..features {
                            f(base + feat, ((feat * KERNEL + ky) * KERNEL + kx) * c + ch);
                        }
                    }
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                for post in 0..outputs {
                    f(post, post * inputs + pre);
                }
            }
        }
    }

    /// Calls `f(pre, weight_index)` for every synapse entering output `post`.
    #[inline]
    pub fn for_each_fanin(&self, post: usize, mut f: impl FnMut(usize, usize)) {
        match *self {
            LayerSpec::Conv2d { input: (h, w, c), features } => {
                let feat = post % features;
                let pos = post / features;
                let (y, x) = (pos / w, pos % w);
                for ky in 0..KERNEL {
                    let Some(py) = (y + ky).checked_sub(1).filter(|&py| py < h) else {
                        continue;
                    };
                    for kx in 0..KERNEL {
                        let Some(px) = (x + kx).checked_sub(1).filter(|&px| px < w) else {
                            continue;
                        };
                        let pre_base = (py * w + px) * c;
                        let w_base = ((feat * KERNEL + ky) * KERNEL + kx) * c;
                        for ch in 0..c {
                            f(pre_base + ch, w_base + ch);
                        }
                    }
                }
            }
            LayerSpec::Dense { inputs, .. } => {
                for pre in 0..inputs {
                    f(pre, post * inputs + pre);
                }
            }
        }
    }

    /// Number of synapses leaving input `pre`.
    pub fn fanout_len(&self, pre: usize) -> usize {
        let mut n = 0;
        self.for_each_fanout(pre, |_, _| n += 1);
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    /// Weight mantissas; the synaptic weight is `weight << exponent`.
    pub weights: Vec<i8>,
    pub exponent: i8,
    /// Axonal delay, in timesteps, of each input neuron feeding this layer.
    pub delays: Vec<u8>,
}

impl Layer {
    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            spec,
            weights: vec![0; spec.weight_count()],
            exponent: 0,
            delays: vec![0; spec.input_size()],
        }
    }

    /// Builds a layer from wide integers, rejecting values outside i8 or delays over 62.
    pub fn from_ints(spec: LayerSpec, weights: &[i32], exponent: i8, delays: &[u32]) -> Result<Self> {
        let weights = weights
            .iter()
            .map(|&w| i8::try_from(w).map_err(|_| Error::WeightRange { layer: 0, value: w }))
            .collect::<Result<Vec<_>>>()?;
        let delays = delays
            .iter()
            .map(|&d| {
                u8::try_from(d)
                    .ok()
                    .filter(|&d| d <= MAX_DELAY)
                    .ok_or(Error::DelayRange { layer: 0, value: d, max: MAX_DELAY as u32 })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            weights,
            exponent,
            delays,
        })
    }

    /// Effective integer weights.
    pub fn effective_weights(&self) -> Vec<i64> {
        self.weights
            .iter()
            .map(|&w| (w as i64) << self.exponent.max(0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub input: Shape3,
    pub layers: Vec<Layer>,
    pub lif: LifParams,
}

impl NetworkModel {
    pub fn class_count(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.output_size())
    }

    pub fn input_size(&self) -> usize {
        self.input.0 * self.input.1 * self.input.2
    }

    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.output_size()).sum()
    }

    /// Zero-weight model for an architecture string such as `32C64C128D12D`.
    pub fn from_arch(arch: &str, input: Shape3, lif: LifParams) -> Result<Self> {
        let layers = layer_chain(arch, input)?.into_iter().map(Layer::zeros).collect();
        Ok(Self { input, layers, lif })
    }
}

/// Parses an architecture string (`<n>C` = 3x3 conv with n features,
/// `<n>D` = dense with n outputs) into a shape-consistent layer chain.
pub fn layer_chain(arch: &str, input: Shape3) -> Result<Vec<LayerSpec>> {
    let mut specs = Vec::new();
    let mut shape = Some(input);
    let mut flat = input.0 * input.1 * input.2;
    let mut digits = String::new();
    for ch in arch.chars() {
        if ch.is_ascii_digit() {
            digits.push(ch);
            continue;
        }
        let n: usize = digits
            .parse()
            .map_err(|_| Error::config(format!("bad architecture `{arch}`")))?;
        digits.clear();
        if n == 0 {
            return Err(Error::config(format!("zero-width layer in `{arch}`")));
        }
        let spec = match ch.to_ascii_uppercase() {
            'C' => {
                let input = shape.ok_or_else(|| {
                    Error::config(format!("convolution after dense layer in `{arch}`"))
                })?;
                LayerSpec::Conv2d { input, features: n }
            }
            'D' => LayerSpec::Dense { inputs: flat, outputs: n },
            _ => return Err(Error::config(format!("bad layer kind `{ch}` in `{arch}`"))),
        };
        shape = spec.output_shape();
        flat = spec.output_size();
        specs.push(spec);
    }
    if !digits.is_empty() || specs.is_empty() {
        return Err(Error::config(format!("bad architecture `{arch}`")));
    }
    Ok(specs)
}

/// Checks the shape chain, array lengths and parameter ranges. Layer numbers
/// in errors count the input as layer 0.
pub fn validate_model(m: &NetworkModel) -> Result<()> {
    m.lif.validate()?;
    if m.layers.is_empty() {
        return Err(Error::Shape { layer: 1, message: "model has no layers".into() });
    }
    let mut shape = Some(m.input);
    let mut flat = m.input_size();
    for (i, layer) in m.layers.iter().enumerate() {
        let number = i + 1;
        match layer.spec {
            LayerSpec::Conv2d { input, features } => {
                match shape {
                    Some(s) if s == input => {}
                    Some(s) => {
                        return Err(Error::Shape {
                            layer: number,
                            message: format!("conv input {input:?} but predecessor outputs {s:?}"),
                        })
                    }
                    None => {
                        return Err(Error::Shape {
                            layer: number,
                            message: "conv layer after a flattened dense layer".into(),
                        })
                    }
                }
                if features == 0 || input.0 == 0 || input.1 == 0 || input.2 == 0 {
                    return Err(Error::Shape { layer: number, message: "empty conv layer".into() });
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                if inputs != flat {
                    return Err(Error::Shape {
                        layer: number,
                        message: format!("dense input {inputs} but predecessor flattens to {flat}"),
                    });
                }
                if outputs == 0 {
                    return Err(Error::Shape { layer: number, message: "empty dense layer".into() });
                }
            }
        }
        if layer.weights.len() != layer.spec.weight_count() {
            return Err(Error::Shape {
                layer: number,
                message: format!(
                    "{} weights, expected {}",
                    layer.weights.len(),
                    layer.spec.weight_count()
                ),
            });
        }
        if layer.delays.len() != layer.spec.input_size() {
            return Err(Error::Shape {
                layer: number,
                message: format!(
                    "{} delays, expected {}",
                    layer.delays.len(),
                    layer.spec.input_size()
                ),
            });
        }
        if let Some(&d) = layer.delays.iter().find(|&&d| d > MAX_DELAY) {
            return Err(Error::DelayRange { layer: number, value: d as u32, max: MAX_DELAY as u32 });
        }
        if !(0..=MAX_EXPONENT).contains(&layer.exponent) {
            return Err(Error::Shape {
                layer: number,
                message: format!("weight exponent {} outside 0..={MAX_EXPONENT}", layer.exponent),
            });
        }
        shape = layer.spec.output_shape();
        flat = layer.spec.output_size();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table2_chain() {
        let m = NetworkModel::from_arch("32C64C128D12D", (7, 5, 2), LifParams::default()).unwrap();
        validate_model(&m).unwrap();
        assert_eq!(m.layers[2].spec, LayerSpec::Dense { inputs: 2240, outputs: 128 });
        assert_eq!(m.class_count(), 12);
        assert_eq!(m.layers[0].spec.output_size(), 7 * 5 * 32);
    }

    #[test]
    fn wrong_dense_input_reported_at_layer_3() {
        let mut m = NetworkModel::from_arch("32C64C128D12D", (7, 5, 10), LifParams::default()).unwrap();
        m.layers[2] = Layer::zeros(LayerSpec::Dense { inputs: 2048, outputs: 128 });
        match validate_model(&m) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn delay_and_weight_ranges() {
        let spec = LayerSpec::Dense { inputs: 2, outputs: 1 };
        assert!(matches!(
            Layer::from_ints(spec, &[128, 0], 0, &[0, 0]),
            Err(Error::WeightRange { value: 128, .. })
        ));
        assert!(matches!(
            Layer::from_ints(spec, &[1, -128], 0, &[63, 0]),
            Err(Error::DelayRange { value: 63, .. })
        ));
        let mut m = NetworkModel { input: (1, 1, 2), layers: vec![Layer::zeros(spec)], lif: LifParams::default() };
        m.layers[0].delays[1] = 63;
        assert!(matches!(validate_model(&m), Err(Error::DelayRange { layer: 1, .. })));
    }

    #[test]
    fn conv_fanout_matches_fanin() {
        let spec = LayerSpec::Conv2d { input: (4, 3, 2), features: 3 };
        let mut from_out = Vec::new();
        for post in 0..spec.output_size() {
            spec.for_each_fanin(post, |pre, k| from_out.push((pre, post, k)));
        }
        let mut from_in = Vec::new();
        for pre in 0..spec.input_size() {
            spec.for_each_fanout(pre, |post, k| from_in.push((pre, post, k)));
        }
        from_out.sort();
        from_in.sort();
        assert_eq!(from_out, from_in);
        // corner input reaches a 2x2 patch, centre input a full 3x3 patch
        assert_eq!(spec.fanout_len(0), 4 * 3);
        assert_eq!(spec.fanout_len((3 + 1) * 2), 9 * 3);
    }

    #[test]
    fn arch_parse_errors() {
        assert!(layer_chain("", (7, 5, 2)).is_err());
        assert!(layer_chain("12", (7, 5, 2)).is_err());
        assert!(layer_chain("8D4C", (7, 5, 2)).is_err());
        assert!(layer_chain("8X", (7, 5, 2)).is_err());
    }
}
