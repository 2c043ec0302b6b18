//! Compression operators with exact bit accounting.
//!
//! Unbiased operators (`E[Q(x)] = x`, `E‖Q(x) − x‖² ≤ ω‖x‖²`): Identity,
//! RandK, Natural. Contractive operators (`‖C(x) − x‖² ≤ (1 − α)‖x‖²` in
//! expectation): Identity, TopK, and any unbiased operator scaled by
//! `1/(ω + 1)`.
//!
//! Bit costs are fixed by the encoding:
//!
//! | payload              | bits                      |
//! |----------------------|---------------------------|
//! | sparse (K entries)   | `K · (64 + ⌈log₂ d⌉)`     |
//! | dense                | `64 · d`                  |
//! | natural              | `9 · d` (sign + exponent) |
//!
//! The scale carried by [`CompressorKind::ScaledUnbiased`] is a protocol
//! constant known to both ends and is not charged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::{sample_without_replacement, RngStream};

/// Smallest and largest exponents representable by the natural code.
pub const NATURAL_MIN_EXP: i32 = -126;
pub const NATURAL_MAX_EXP: i32 = 127;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CompressorKind {
    Identity,
    RandK(usize),
    TopK(usize),
    Natural,
    /// `(ω + 1)⁻¹ Q` for an unbiased `Q`.
    ScaledUnbiased(Box<CompressorKind>),
}

/// One coordinate of a natural-compression message: `sign · 2^exponent`,
/// with `sign = 0` encoding an exact zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NaturalCode {
    pub sign: i8,
    pub exponent: i16,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Dense(Vec<f64>),
    Sparse { indices: Vec<u32>, values: Vec<f64> },
    Natural(Vec<NaturalCode>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedMsg {
    pub d: usize,
    pub payload: Payload,
    /// Multiplier applied on decompression.
    pub scale: f64,
    pub bit_cost: u64,
}

fn ceil_log2(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as u64
    }
}

pub fn sparse_bits(k: usize, d: usize) -> u64 {
    k as u64 * (64 + ceil_log2(d))
}

pub fn dense_bits(d: usize) -> u64 {
    64 * d as u64
}

pub fn natural_bits(d: usize) -> u64 {
    9 * d as u64
}

impl CompressorKind {
    pub fn is_unbiased(&self) -> bool {
        matches!(
            self,
            CompressorKind::Identity | CompressorKind::RandK(_) | CompressorKind::Natural
        )
    }

    pub fn is_contractive(&self) -> bool {
        matches!(
            self,
            CompressorKind::Identity | CompressorKind::TopK(_) | CompressorKind::ScaledUnbiased(_)
        )
    }

    /// Checks `1 ≤ K ≤ d` and that a scaled adapter wraps an unbiased kind.
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            CompressorKind::RandK(k) | CompressorKind::TopK(k) => {
                if *k == 0 || *k > d {
                    return Err(Error::InvalidArgument(format!("K = {k} must satisfy 1 <= K <= d = {d}")));
                }
                Ok(())
            }
            CompressorKind::ScaledUnbiased(inner) => {
                if !inner.is_unbiased() {
                    return Err(Error::Classification(format!(
                        "scaled adapter needs an unbiased inner compressor, got {inner:?}"
                    )));
                }
                inner.validate(d)
            }
            CompressorKind::Identity | CompressorKind::Natural => Ok(()),
        }
    }

    /// Bit cost of every message this kind produces in dimension `d`.
    pub fn message_bits(&self, d: usize) -> u64 {
        match self {
            CompressorKind::Identity => dense_bits(d),
            CompressorKind::RandK(k) | CompressorKind::TopK(k) => sparse_bits(*k, d),
            CompressorKind::Natural => natural_bits(d),
            CompressorKind::ScaledUnbiased(inner) => inner.message_bits(d),
        }
    }
}

/// Variance parameter `ω` of an unbiased compressor.
pub fn omega(kind: &CompressorKind, d: usize) -> Result<f64> {
    kind.validate(d)?;
    match kind {
        CompressorKind::Identity => Ok(0.0),
        CompressorKind::RandK(k) => Ok(d as f64 / *k as f64 - 1.0),
        CompressorKind::Natural => Ok(1.0 / 8.0),
        other => Err(Error::Classification(format!("{other:?} is not an unbiased compressor"))),
    }
}

/// Contraction parameter `α` of a contractive compressor.
pub fn alpha(kind: &CompressorKind, d: usize) -> Result<f64> {
    kind.validate(d)?;
    match kind {
        CompressorKind::Identity => Ok(1.0),
        CompressorKind::TopK(k) => Ok(*k as f64 / d as f64),
        CompressorKind::ScaledUnbiased(inner) => Ok(1.0 / (omega(inner, d)? + 1.0)),
        other => Err(Error::Classification(format!("{other:?} is not a contractive compressor"))),
    }
}

/// Natural rounding of one coordinate, `u` uniform in `[0, 1)`.
fn natural_code(x: f64, u: f64) -> NaturalCode {
    if x == 0.0 {
        return NaturalCode { sign: 0, exponent: 0 };
    }
    let sign = if x < 0.0 { -1 } else { 1 };
    let a = x.abs();
    let min = (NATURAL_MIN_EXP as f64).exp2();
    if a < min {
        // below the code range: round to the nearer of 0 and 2^-126
        return if a < 0.5 * min {
            NaturalCode { sign: 0, exponent: 0 }
        } else {
            NaturalCode { sign, exponent: NATURAL_MIN_EXP as i16 }
        };
    }
    if a >= (NATURAL_MAX_EXP as f64).exp2() {
        return NaturalCode { sign, exponent: NATURAL_MAX_EXP as i16 };
    }
    // a is a normal f64 here, so its exponent field is floor(log2 a)
    let bits = a.to_bits();
    let e = ((bits >> 52) & 0x7ff) as i32 - 1023;
    let exact = bits & ((1u64 << 52) - 1) == 0;
    if exact {
        return NaturalCode { sign, exponent: e as i16 };
    }
    let lo = (e as f64).exp2();
    let p_lo = (2.0 * lo - a) / lo;
    let exponent = if u < p_lo { e } else { e + 1 };
    NaturalCode { sign, exponent: exponent as i16 }
}

pub fn compress(kind: &CompressorKind, x: &[f64], rng: &mut RngStream) -> Result<CompressedMsg> {
    let d = x.len();
    if d == 0 {
        return Err(Error::Empty("cannot compress an empty vector"));
    }
    kind.validate(d)?;
    let msg = match kind {
        CompressorKind::Identity => CompressedMsg {
            d,
            payload: Payload::Dense(x.to_vec()),
            scale: 1.0,
            bit_cost: dense_bits(d),
        },
        CompressorKind::RandK(k) => {
            let mut idx = sample_without_replacement(rng, d, *k)?;
            idx.sort_unstable();
            let factor = d as f64 / *k as f64;
            CompressedMsg {
                d,
                payload: Payload::Sparse {
                    values: idx.iter().map(|&i| factor * x[i]).collect(),
                    indices: idx.into_iter().map(|i| i as u32).collect(),
                },
                scale: 1.0,
                bit_cost: sparse_bits(*k, d),
            }
        }
        CompressorKind::TopK(k) => {
            let mut order: Vec<usize> = (0..d).collect();
            // stable sort keeps lower indices first among equal magnitudes
            order.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()));
            let mut idx = order[..*k].to_vec();
            idx.sort_unstable();
            CompressedMsg {
                d,
                payload: Payload::Sparse {
                    values: idx.iter().map(|&i| x[i]).collect(),
                    indices: idx.into_iter().map(|i| i as u32).collect(),
                },
                scale: 1.0,
                bit_cost: sparse_bits(*k, d),
            }
        }
        CompressorKind::Natural => {
            let codes = x.iter().map(|&v| natural_code(v, rng.uniform())).collect();
            CompressedMsg {
                d,
                payload: Payload::Natural(codes),
                scale: 1.0,
                bit_cost: natural_bits(d),
            }
        }
        CompressorKind::ScaledUnbiased(inner) => {
            let w = omega(inner, d)?;
            let mut msg = compress(inner, x, rng)?;
            msg.scale /= w + 1.0;
            msg
        }
    };
    Ok(msg)
}

pub fn decompress(msg: &CompressedMsg) -> Result<Vector> {
    let d = msg.d;
    let mut out = match &msg.payload {
        Payload::Dense(values) => {
            if values.len() != d {
                return Err(Error::Format(format!("dense payload of length {} for d = {d}", values.len())));
            }
            Vector::from(values.clone())
        }
        Payload::Sparse { indices, values } => {
            if indices.len() != values.len() {
                return Err(Error::Format(format!(
                    "{} sparse indices but {} values",
                    indices.len(),
                    values.len()
                )));
            }
            let mut out = Vector::zeros(d);
            for (&i, &v) in indices.iter().zip(values) {
                let slot = out
                    .get_mut(i as usize)
                    .ok_or_else(|| Error::Format(format!("sparse index {i} out of range for d = {d}")))?;
                *slot = v;
            }
            out
        }
        Payload::Natural(codes) => {
            if codes.len() != d {
                return Err(Error::Format(format!("natural payload of length {} for d = {d}", codes.len())));
            }
            let mut out = Vector::zeros(d);
            for (o, c) in out.iter_mut().zip(codes) {
                let e = c.exponent as i32;
                if !(NATURAL_MIN_EXP..=NATURAL_MAX_EXP).contains(&e) || !(-1..=1).contains(&c.sign) {
                    return Err(Error::Format(format!("invalid natural code {c:?}")));
                }
                *o = c.sign as f64 * (e as f64).exp2();
            }
            out
        }
    };
    if msg.scale != 1.0 {
        out.scale(msg.scale);
    }
    Ok(out)
}

/// Monte-Carlo summary of a compressor applied to a fixed input.
#[derive(Clone, Debug)]
pub struct MonteCarloReport {
    pub draws: usize,
    pub mean: Vector,
    /// Standard error of `mean`, per coordinate.
    pub stderr: Vector,
    /// Largest `|mean_j − x_j| / stderr_j`; coordinates with zero spread
    /// count as 0 if they reproduce `x_j` exactly and `+∞` otherwise.
    pub max_bias_z: f64,
    /// Empirical `E‖C(x) − x‖² / ‖x‖²`.
    pub error_ratio: f64,
    pub error_ratio_stderr: f64,
}

/// Repeats `compress` + `decompress` on `x` and summarizes bias and error.
pub fn monte_carlo(kind: &CompressorKind, x: &[f64], draws: usize, rng: &mut RngStream) -> Result<MonteCarloReport> {
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least two draws".into()));
    }
    let d = x.len();
    let xn = crate::linalg::norm_sq(x);
    if xn == 0.0 {
        return Err(Error::InvalidArgument("input must be nonzero".into()));
    }
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let (mut err_sum, mut err_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let q = decompress(&compress(kind, x, rng)?)?;
        let mut err = 0.0;
        for j in 0..d {
            sum[j] += q[j];
            sum_sq[j] += q[j] * q[j];
            err += (q[j] - x[j]) * (q[j] - x[j]);
        }
        let r = err / xn;
        err_sum += r;
        err_sq += r * r;
    }
    let n = draws as f64;
    let mean: Vector = sum.iter().map(|s| s / n).collect();
    let stderr: Vector = (0..d)
        .map(|j| {
            let var = ((sum_sq[j] - n * mean[j] * mean[j]) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        })
        .collect();
    let mut max_bias_z: f64 = 0.0;
    for j in 0..d {
        let diff = (mean[j] - x[j]).abs();
        let z = if stderr[j] > 0.0 {
            diff / stderr[j]
        } else if diff <= 1e-12 * x[j].abs().max(f64::MIN_POSITIVE) {
            0.0
        } else {
            f64::INFINITY
        };
        max_bias_z = max_bias_z.max(z);
    }
    let error_ratio = err_sum / n;
    let var = ((err_sq - n * error_ratio * error_ratio) / (n - 1.0)).max(0.0);
    Ok(MonteCarloReport {
        draws,
        mean,
        stderr,
        max_bias_z,
        error_ratio,
        error_ratio_stderr: (var / n).sqrt(),
    })
}
