//! Power-of-two weight quantization.
//!
//! A layer's real weights share one exponent `e`, the smallest integer with
//! `max|w| / 2^e <= 127`. Mantissas are `round(w / 2^e)`, so every weight is
//! recovered to within `2^(e-1)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub mantissas: Vec<i8>,
    pub exponent: i32,
}

impl QuantizedLayer {
    pub fn dequantize(&self) -> Vec<f64> {
        let scale = 2f64.powi(self.exponent);
        self.mantissas.iter().map(|&m| m as f64 * scale).collect()
    }
}

fn smallest_exponent(max_abs: f64) -> i32 {
    if max_abs == 0.0 {
        return 0;
    }
    let mut e = (max_abs / 127.0).log2().ceil() as i32;
    while max_abs / 2f64.powi(e) > 127.0 {
        e += 1;
    }
    while max_abs / 2f64.powi(e - 1) <= 127.0 {
        e -= 1;
    }
    e
}

/// Quantizes one layer. `min_exponent` raises the exponent floor, trading
/// resolution for integral effective weights; pass `i32::MIN` for none.
pub fn quantize_layer(weights: &[f64], min_exponent: i32) -> Result<QuantizedLayer> {
    if let Some(bad) = weights.iter().find(|w| !w.is_finite()) {
        return Err(Error::config(format!("non-finite weight {bad}")));
    }
    let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let exponent = smallest_exponent(max_abs).max(min_exponent);
    let scale = 2f64.powi(exponent);
    let mantissas = weights
        .iter()
        .map(|&w| (w / scale).round().clamp(-128.0, 127.0) as i8)
        .collect();
    Ok(QuantizedLayer { mantissas, exponent })
}

pub fn quantize_weights(layers: &[Vec<f64>]) -> Result<Vec<QuantizedLayer>> {
    layers.iter().map(|w| quantize_layer(w, i32::MIN)).collect()
}
