//! The three channel-attention operators under comparison: the closed-form
//! parameter-free one (PFCA), squeeze-and-excitation channel attention (CA),
//! and pixel attention (PA).
//!
//! PFCA weights each channel by `sigmoid(V_j)` with
//! `V_j = ((U_j − μ)² + 2(σ² + λ)) / (4(σ² + λ))`, where `U` is the pooled
//! channel vector and μ, σ² are its per-sample mean and population variance
//! over channels. It owns zero parameters by construction.

use crate::error::Result;
use crate::rng::Pcg32;
use crate::tensor::{ParamBinding, ParamStore, Scalar, Shape, Tape, Tensor, Var};

pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_CA_REDUCTION: usize = 16;

/// Which attention operator a block carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttentionKind {
    None,
    Pfca { lambda: f64 },
    Ca { reduction: usize },
    Pa,
}

impl AttentionKind {
    pub fn pfca() -> AttentionKind {
        AttentionKind::Pfca {
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn ca() -> AttentionKind {
        AttentionKind::Ca {
            reduction: DEFAULT_CA_REDUCTION,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AttentionKind::None => "none",
            AttentionKind::Pfca { .. } => "pfca",
            AttentionKind::Ca { .. } => "ca",
            AttentionKind::Pa => "pa",
        }
    }

    /// Trainable parameters one instance adds at a given channel width.
    pub fn param_count(&self, channels: usize) -> u64 {
        match self {
            AttentionKind::None | AttentionKind::Pfca { .. } => 0,
            AttentionKind::Ca { reduction } => {
                let mid = (channels / reduction).max(1) as u64;
                let c = channels as u64;
                c * mid + mid + mid * c + c
            }
            AttentionKind::Pa => {
                let c = channels as u64;
                c * c + c
            }
        }
    }

    /// Multiply-accumulates one instance adds on an H×W feature map
    /// (headline costs: the CA perceptron and the PA 1×1 convolution).
    pub fn macs(&self, n: usize, channels: usize, h: usize, w: usize) -> u64 {
        let n = n as u64;
        match self {
            AttentionKind::None | AttentionKind::Pfca { .. } => 0,
            AttentionKind::Ca { reduction } => {
                let mid = (channels / reduction).max(1) as u64;
                n * 2 * channels as u64 * mid
            }
            AttentionKind::Pa => n * (channels * channels * h * w) as u64,
        }
    }

    /// Elementwise work (pooling, statistics, sigmoid, rescale), reported
    /// separately from the MAC total.
    pub fn elem_ops(&self, n: usize, channels: usize, h: usize, w: usize) -> u64 {
        let n = n as u64;
        let c = channels as u64;
        let plane = c * (h as u64) * (w as u64);
        match self {
            AttentionKind::None => 0,
            // pool + mean/variance/V (≈6 ops per channel) + sigmoid + scale
            AttentionKind::Pfca { .. } => n * (plane + 6 * c + c + plane),
            AttentionKind::Ca { .. } => n * (plane + 2 * c + plane),
            AttentionKind::Pa => n * 2 * plane,
        }
    }

    pub fn init_params(
        &self,
        prefix: &str,
        channels: usize,
        store: &mut ParamStore,
        rng: &mut Pcg32,
    ) -> Result<()> {
        match self {
            AttentionKind::None | AttentionKind::Pfca { .. } => Ok(()),
            AttentionKind::Ca { reduction } => {
                let mid = (channels / reduction).max(1);
                store.insert(
                    &format!("{prefix}.fc1.weight"),
                    normal_init(Shape::vector(mid, channels), channels, rng),
                    true,
                )?;
                store.insert(
                    &format!("{prefix}.fc1.bias"),
                    Tensor::zeros(Shape::vector(1, mid)),
                    true,
                )?;
                store.insert(
                    &format!("{prefix}.fc2.weight"),
                    normal_init(Shape::vector(channels, mid), mid, rng),
                    true,
                )?;
                store.insert(
                    &format!("{prefix}.fc2.bias"),
                    Tensor::zeros(Shape::vector(1, channels)),
                    true,
                )?;
                Ok(())
            }
            AttentionKind::Pa => {
                let shape = Shape::new(channels, channels, 1, 1)?;
                store.insert(
                    &format!("{prefix}.conv.weight"),
                    normal_init(shape, channels, rng),
                    true,
                )?;
                store.insert(
                    &format!("{prefix}.conv.bias"),
                    Tensor::zeros(Shape::vector(1, channels)),
                    true,
                )?;
                Ok(())
            }
        }
    }

    /// Applies the operator to `x` on the tape. `prefix` addresses this
    /// instance's parameters in the binding (unused for None/PFCA).
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamBinding,
        prefix: &str,
        x: Var,
    ) -> Result<Var> {
        match self {
            AttentionKind::None => Ok(x),
            AttentionKind::Pfca { lambda } => tape.pfca(x, *lambda),
            AttentionKind::Ca { .. } => {
                let w1 = params.get(&format!("{prefix}.fc1.weight"))?;
                let b1 = params.get(&format!("{prefix}.fc1.bias"))?;
                let w2 = params.get(&format!("{prefix}.fc2.weight"))?;
                let b2 = params.get(&format!("{prefix}.fc2.bias"))?;
                let pooled = tape.global_avg_pool(x)?;
                let h = tape.linear(pooled, w1, Some(b1))?;
                let h = tape.relu(h)?;
                let s = tape.linear(h, w2, Some(b2))?;
                let s = tape.sigmoid(s)?;
                tape.mul_channel(x, s)
            }
            AttentionKind::Pa => {
                let w = params.get(&format!("{prefix}.conv.weight"))?;
                let b = params.get(&format!("{prefix}.conv.bias"))?;
                let s = tape.conv2d(x, w, Some(b), 1, 0)?;
                let s = tape.sigmoid(s)?;
                tape.mul(x, s)
            }
        }
    }
}

fn normal_init(shape: Shape, fan_in: usize, rng: &mut Pcg32) -> Tensor<f32> {
    let std = (1.0 / fan_in as f64).sqrt();
    let data = (0..shape.count())
        .map(|_| (rng.normal() * std) as f32)
        .collect();
    Tensor::from_vec(shape, data).expect("sized by shape")
}

/// One-shot PFCA evaluation without an explicit tape.
pub fn pfca_forward<T: Scalar>(x: &Tensor<T>, lambda: f64) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone())?;
    let y = tape.pfca(xv, lambda)?;
    Ok(tape.value(y).clone())
}

/// The PFCA pre-sigmoid map V for a pooled channel vector, exposed for
/// tests and analysis of the closed form.
pub fn pfca_v_from_channel_vector(u: &[f64], lambda: f64) -> Vec<f64> {
    let c = u.len() as f64;
    let mu = u.iter().sum::<f64>() / c;
    let sigma2 = u.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / c;
    let s = sigma2 + lambda;
    u.iter()
        .map(|&v| {
            let d = v - mu;
            (d * d + 2.0 * s) / (4.0 * s)
        })
        .collect()
}
