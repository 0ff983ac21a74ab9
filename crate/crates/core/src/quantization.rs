//! Symmetric n-bit weight quantization.
//!
//! `s = max|W| / (2^(n-1) - 1)`, `q = round(w / s)` clamped to
//! `[-(2^(n-1) - 1), 2^(n-1) - 1]`, and `w ≈ q * s`. The code point
//! `-2^(n-1)` is never produced. Rounding is half away from zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("tensor is empty")]
    EmptyTensor,
    #[error("bit width {0} is below the minimum of 2")]
    BitWidthTooSmall(u32),
    #[error("bit width {0} exceeds the supported maximum of 31")]
    BitWidthTooLarge(u32),
    #[error("scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("axis {axis} out of range for a rank-{rank} tensor")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("shape {shape:?} does not match {len} values")]
    ShapeMismatch { shape: Vec<usize>, len: usize },
    #[error("layer {0:?} has no elements")]
    EmptyLayer(String),
}

/// Dense row-major tensor of reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, QuantError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(QuantError::ShapeMismatch { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self, QuantError> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(vec![rows.len(), cols], data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scales {
    PerTensor(f64),
    PerChannel { axis: usize, scales: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub bit_width: u32,
    pub scales: Scales,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    pub values: Vec<i32>,
    pub params: QuantParams,
    pub shape: Vec<usize>,
}

fn check_bits(n: u32) -> Result<(), QuantError> {
    if n < 2 {
        return Err(QuantError::BitWidthTooSmall(n));
    }
    if n > 31 {
        return Err(QuantError::BitWidthTooLarge(n));
    }
    Ok(())
}

/// Largest representable magnitude, `2^(n-1) - 1`.
pub fn qmax(n: u32) -> i32 {
    ((1i64 << (n - 1)) - 1) as i32
}

/// Scale for `weights` at `n` bits. An all-zero tensor gets scale 1.
pub fn compute_scale(weights: &[f64], n: u32) -> Result<f64, QuantError> {
    check_bits(n)?;
    if weights.is_empty() {
        return Err(QuantError::EmptyTensor);
    }
    let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max_abs == 0.0 {
        return Ok(1.0);
    }
    Ok(max_abs / f64::from(qmax(n)))
}

/// `round(w / s)` (ties away from zero), clamped to the symmetric range.
pub fn quantize_value(w: f64, s: f64, n: u32) -> i32 {
    let limit = f64::from(qmax(n));
    let q = (w / s).round();
    if q.is_nan() {
        return 0;
    }
    q.clamp(-limit, limit) as i32
}

pub fn quantize(weights: &Tensor, s: f64, n: u32) -> Result<QuantizedTensor, QuantError> {
    check_bits(n)?;
    if !(s.is_finite() && s > 0.0) {
        return Err(QuantError::NonPositiveScale(s));
    }
    Ok(QuantizedTensor {
        values: weights.data.iter().map(|&w| quantize_value(w, s, n)).collect(),
        params: QuantParams {
            bit_width: n,
            scales: Scales::PerTensor(s),
        },
        shape: weights.shape.clone(),
    })
}

/// Per-tensor quantization with the scale derived from the data.
pub fn quantize_tensor(weights: &Tensor, n: u32) -> Result<QuantizedTensor, QuantError> {
    let s = compute_scale(&weights.data, n)?;
    quantize(weights, s, n)
}

/// Index along `axis` of each flat element.
fn channel_of(shape: &[usize], axis: usize) -> impl Fn(usize) -> usize {
    let stride: usize = shape[axis + 1..].iter().product();
    let dim = shape[axis];
    move |i| (i / stride) % dim
}

pub fn quantize_per_channel(weights: &Tensor, axis: usize, n: u32) -> Result<QuantizedTensor, QuantError> {
    check_bits(n)?;
    let rank = weights.shape.len();
    if axis >= rank {
        return Err(QuantError::AxisOutOfRange { axis, rank });
    }
    if weights.data.is_empty() {
        return Err(QuantError::EmptyTensor);
    }
    let channels = weights.shape[axis];
    let chan = channel_of(&weights.shape, axis);
    let mut slices: Vec<Vec<f64>> = vec![Vec::new(); channels];
    for (i, &w) in weights.data.iter().enumerate() {
        slices[chan(i)].push(w);
    }
    let scales = slices
        .iter()
        .map(|s| compute_scale(s, n))
        .collect::<Result<Vec<_>, _>>()?;
    let values = weights
        .data
        .iter()
        .enumerate()
        .map(|(i, &w)| quantize_value(w, scales[chan(i)], n))
        .collect();
    Ok(QuantizedTensor {
        values,
        params: QuantParams {
            bit_width: n,
            scales: Scales::PerChannel { axis, scales },
        },
        shape: weights.shape.clone(),
    })
}

pub fn dequantize(qt: &QuantizedTensor) -> Tensor {
    let data = match &qt.params.scales {
        Scales::PerTensor(s) => qt.values.iter().map(|&q| f64::from(q) * s).collect(),
        Scales::PerChannel { axis, scales } => {
            let chan = channel_of(&qt.shape, *axis);
            qt.values
                .iter()
                .enumerate()
                .map(|(i, &q)| f64::from(q) * scales[chan(i)])
                .collect()
        }
    };
    Tensor {
        shape: qt.shape.clone(),
        data,
    }
}

/// Sum of squared differences between `w` and its round trip.
pub fn round_trip_sse(original: &Tensor, qt: &QuantizedTensor) -> f64 {
    original
        .data
        .iter()
        .zip(dequantize(qt).data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// One entry of a size-report input list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub name: String,
    pub element_count: u64,
    pub source_bits: u32,
    /// Number of 32-bit scales stored with the layer: 1 for per-tensor,
    /// the channel count for per-channel.
    #[serde(default = "one")]
    pub scale_count: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSize {
    pub name: String,
    pub bytes_before: u64,
    pub bytes_after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub layers: Vec<LayerSize>,
    pub total_before: u64,
    pub total_after: u64,
    pub ratio: f64,
}

pub const SCALE_BYTES: u64 = 4;

fn packed_bytes(count: u64, bits: u32) -> u64 {
    (u128::from(count) * u128::from(bits)).div_ceil(8) as u64
}

/// Storage before and after quantizing each layer to `n` bits.
pub fn size_report(layers: &[LayerSpec], n: u32) -> Result<SizeReport, QuantError> {
    check_bits(n)?;
    let mut out = Vec::with_capacity(layers.len());
    for l in layers {
        if l.element_count == 0 {
            return Err(QuantError::EmptyLayer(l.name.clone()));
        }
        out.push(LayerSize {
            name: l.name.clone(),
            bytes_before: packed_bytes(l.element_count, l.source_bits),
            bytes_after: packed_bytes(l.element_count, n) + l.scale_count * SCALE_BYTES,
        });
    }
    let total_before: u64 = out.iter().map(|l| l.bytes_before).sum();
    let total_after: u64 = out.iter().map(|l| l.bytes_after).sum();
    let ratio = if total_after == 0 {
        0.0
    } else {
        total_before as f64 / total_after as f64
    };
    Ok(SizeReport {
        layers: out,
        total_before,
        total_after,
        ratio,
    })
}
