//! Reverse-mode differentiation tape.
//!
//! Every operation evaluates eagerly, records its inputs, and checks the
//! result for NaN/Inf (a hard error rather than silent propagation). A tape
//! is confined to one logical thread; gradients accumulate additively across
//! uses, and two identical forward+backward runs produce bitwise-identical
//! gradients because every reduction runs in a fixed order.

use std::collections::HashMap;

use super::scalar::{sigmoid_scalar, Scalar};
use super::shape::{conv_out_dim, Shape};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Forward-pass mode; batch norm is the only operation that differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Name → tape leaf mapping for a bound parameter store.
#[derive(Debug, Default, Clone)]
pub struct ParamBinding {
    vars: HashMap<String, Var>,
}

impl ParamBinding {
    pub fn insert(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vars.keys()
    }
}

enum Op<T: Scalar> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        invstd: Vec<T>,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        invstd: Vec<T>,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    MulChannel {
        x: Var,
        v: Var,
    },
    GlobalAvgPool {
        x: Var,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    PixelShuffle {
        x: Var,
        r: usize,
    },
    BilinearUp {
        x: Var,
        r: usize,
    },
    Pfca {
        x: Var,
        dev: Vec<T>,
        var_lambda: Vec<T>,
        gate: Vec<T>,
    },
    Sum {
        x: Var,
    },
    Mean {
        x: Var,
    },
    Scale {
        x: Var,
        k: f64,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    L1Loss {
        pred: Var,
        target: Tensor<T>,
    },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Single-threaded differentiation tape.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` with respect to `v`.
    pub fn grad(&self, v: Var) -> Result<&Tensor<T>> {
        self.grads
            .get(v.0)
            .and_then(|g| g.as_ref())
            .ok_or_else(|| Error::MissingGrad(format!("node {}", v.0)))
    }

    fn check_var(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::NotOnTape(format!("node {}", v.0)));
        }
        Ok(())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, what: &str) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        Ok(Var(id))
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf")
    }

    // ----- elementwise -----

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check_var(x)?;
        let xv = self.value(x);
        let out = Tensor::from_vec(
            xv.shape(),
            xv.data().iter().map(|&v| v.maximum(T::ZERO)).collect(),
        )?;
        self.push(out, Op::Relu { x }, "relu")
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.check_var(x)?;
        let s = T::from_f64(slope);
        let xv = self.value(x);
        let out = Tensor::from_vec(
            xv.shape(),
            xv.data()
                .iter()
                .map(|&v| if v.to_f64() >= 0.0 { v } else { v * s })
                .collect(),
        )?;
        self.push(out, Op::LeakyRelu { x, slope }, "leaky_relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.check_var(x)?;
        let xv = self.value(x);
        let out = Tensor::from_vec(
            xv.shape(),
            xv.data().iter().map(|&v| sigmoid_scalar(v)).collect(),
        )?;
        self.push(out, Op::Sigmoid { x }, "sigmoid")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_var(a)?;
        self.check_var(b)?;
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("add: {sa} vs {sb}")));
        }
        let out = Tensor::from_vec(
            sa,
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x + y)
                .collect(),
        )?;
        self.push(out, Op::Add { a, b }, "add")
    }

    /// Elementwise product of same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_var(a)?;
        self.check_var(b)?;
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("mul: {sa} vs {sb}")));
        }
        let out = Tensor::from_vec(
            sa,
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(&x, &y)| x * y)
                .collect(),
        )?;
        self.push(out, Op::Mul { a, b }, "mul")
    }

    /// Product with an N×C×1×1 channel vector broadcast across H and W.
    /// Falls back to plain elementwise `mul` when shapes already match.
    pub fn mul_channel(&mut self, x: Var, v: Var) -> Result<Var> {
        self.check_var(x)?;
        self.check_var(v)?;
        let sx = self.value(x).shape();
        let sv = self.value(v).shape();
        if sx == sv {
            return self.mul(x, v);
        }
        if !(sv.is_channel_vector() && sv.n == sx.n && sv.c == sx.c) {
            return Err(Error::ShapeMismatch(format!(
                "mul broadcast expects {}x{}x1x1 vector, got {sv} against {sx}",
                sx.n, sx.c
            )));
        }
        let hw = sx.h * sx.w;
        let mut out = vec![T::ZERO; sx.count()];
        {
            let xd = self.value(x).data();
            let vd = self.value(v).data();
            for nc in 0..sx.n * sx.c {
                let s = vd[nc];
                let base = nc * hw;
                for i in 0..hw {
                    out[base + i] = xd[base + i] * s;
                }
            }
        }
        let out = Tensor::from_vec(sx, out)?;
        self.push(out, Op::MulChannel { x, v }, "mul_channel")
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        self.check_var(x)?;
        let kk = T::from_f64(k);
        let xv = self.value(x);
        let out = Tensor::from_vec(xv.shape(), xv.data().iter().map(|&v| v * kk).collect())?;
        self.push(out, Op::Scale { x, k }, "scale")
    }

    // ----- reductions -----

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check_var(x)?;
        let mut acc = T::ZERO;
        for &v in self.value(x).data() {
            acc += v;
        }
        self.push(Tensor::scalar(acc), Op::Sum { x }, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check_var(x)?;
        let count = self.value(x).count();
        let mut acc = T::ZERO;
        for &v in self.value(x).data() {
            acc += v;
        }
        let m = acc / T::from_f64(count as f64);
        self.push(Tensor::scalar(m), Op::Mean { x }, "mean")
    }

    /// Spatial mean per (sample, channel): N×C×H×W → N×C×1×1.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        self.check_var(x)?;
        let sx = self.value(x).shape();
        let hw = sx.h * sx.w;
        let inv = T::from_f64(1.0 / hw as f64);
        let mut out = vec![T::ZERO; sx.n * sx.c];
        {
            let xd = self.value(x).data();
            for (nc, o) in out.iter_mut().enumerate() {
                let base = nc * hw;
                let mut acc = T::ZERO;
                for i in 0..hw {
                    acc += xd[base + i];
                }
                *o = acc * inv;
            }
        }
        let out = Tensor::from_vec(Shape::vector(sx.n, sx.c), out)?;
        self.push(out, Op::GlobalAvgPool { x }, "global_avg_pool")
    }

    // ----- layers -----

    /// Cross-correlation with weight `(Cout, Cin, kh, kw)` and optional bias
    /// `(1, Cout, 1, 1)`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        self.check_var(x)?;
        self.check_var(w)?;
        if let Some(b) = b {
            self.check_var(b)?;
        }
        if stride == 0 {
            return Err(Error::InvalidShape("conv stride must be >= 1".into()));
        }
        let sx = self.value(x).shape();
        let sw = self.value(w).shape();
        let (cout, cin, kh, kw) = (sw.n, sw.c, sw.h, sw.w);
        if sx.c != cin {
            return Err(Error::ChannelMismatch {
                expected: cin,
                got: sx.c,
            });
        }
        let oh = conv_out_dim(sx.h, kh, stride, pad)?;
        let ow = conv_out_dim(sx.w, kw, stride, pad)?;
        if let Some(b) = b {
            let sb = self.value(b).shape();
            if !(sb.is_channel_vector() && sb.n == 1 && sb.c == cout) {
                return Err(Error::ShapeMismatch(format!(
                    "conv bias must be 1x{cout}x1x1, got {sb}"
                )));
            }
        }
        let out_shape = Shape::new(sx.n, cout, oh, ow)?;

        let k = cin * kh * kw;
        let p = oh * ow;
        let mut col = vec![T::ZERO; k * p];
        let mut out = vec![T::ZERO; out_shape.count()];
        {
            let xd = self.value(x).data();
            let wd = self.value(w).data();
            for n in 0..sx.n {
                im2col(xd, sx, n, kh, kw, stride, pad, oh, ow, &mut col);
                // out[n] (Cout×P) = W (Cout×K) · col (K×P)
                unsafe {
                    T::gemm(
                        cout,
                        k,
                        p,
                        T::ONE,
                        wd.as_ptr(),
                        k as isize,
                        1,
                        col.as_ptr(),
                        p as isize,
                        1,
                        T::ZERO,
                        out.as_mut_ptr().add(n * cout * p),
                        p as isize,
                        1,
                    );
                }
            }
            if let Some(bv) = b {
                let bd = self.value(bv).data();
                for n in 0..sx.n {
                    for c in 0..cout {
                        let base = (n * cout + c) * p;
                        let bias = bd[c];
                        for i in 0..p {
                            out[base + i] += bias;
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(out_shape, out)?;
        self.push(out, Op::Conv2d { x, w, b, stride, pad }, "conv2d")
    }

    /// Affine map on channel vectors: x (N×Cin×1×1), w (Cout×Cin×1×1),
    /// b (1×Cout×1×1) → N×Cout×1×1.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.check_var(x)?;
        self.check_var(w)?;
        let sx = self.value(x).shape();
        let sw = self.value(w).shape();
        if !sx.is_channel_vector() || !sw.is_channel_vector() {
            return Err(Error::ShapeMismatch(format!(
                "linear expects channel vectors, got x {sx}, w {sw}"
            )));
        }
        let (n, cin) = (sx.n, sx.c);
        let (cout, win) = (sw.n, sw.c);
        if win != cin {
            return Err(Error::ShapeMismatch(format!(
                "linear: input features {cin} vs weight features {win}"
            )));
        }
        if let Some(b) = b {
            self.check_var(b)?;
            let sb = self.value(b).shape();
            if !(sb.is_channel_vector() && sb.n == 1 && sb.c == cout) {
                return Err(Error::ShapeMismatch(format!(
                    "linear bias must be 1x{cout}x1x1, got {sb}"
                )));
            }
        }
        let mut out = vec![T::ZERO; n * cout];
        {
            let xd = self.value(x).data();
            let wd = self.value(w).data();
            // out (N×Cout) = x (N×Cin) · wᵀ (Cin×Cout)
            unsafe {
                T::gemm(
                    n,
                    cin,
                    cout,
                    T::ONE,
                    xd.as_ptr(),
                    cin as isize,
                    1,
                    wd.as_ptr(),
                    1,
                    cin as isize,
                    T::ZERO,
                    out.as_mut_ptr(),
                    cout as isize,
                    1,
                );
            }
            if let Some(bv) = b {
                let bd = self.value(bv).data();
                for row in out.chunks_mut(cout) {
                    for (o, &bias) in row.iter_mut().zip(bd) {
                        *o += bias;
                    }
                }
            }
        }
        let out = Tensor::from_vec(Shape::vector(n, cout), out)?;
        self.push(out, Op::Linear { x, w, b }, "linear")
    }

    /// Batch normalization by batch statistics (population variance).
    /// Returns the output together with the batch mean and variance so the
    /// owning layer can fold them into its running statistics.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<T>, Vec<T>)> {
        self.bn_check(x, gamma, beta)?;
        let sx = self.value(x).shape();
        let c = sx.c;
        let epst = T::from_f64(eps);
        let m = (sx.n * sx.h * sx.w) as f64;
        let inv_m = T::from_f64(1.0 / m);
        let mut mean = vec![T::ZERO; c];
        let mut var = vec![T::ZERO; c];
        {
            let xd = self.value(x).data();
            for ch in 0..c {
                let mut acc = T::ZERO;
                for_channel(sx, ch, |i| acc += xd[i]);
                mean[ch] = acc * inv_m;
                let mu = mean[ch];
                let mut vacc = T::ZERO;
                for_channel(sx, ch, |i| {
                    let d = xd[i] - mu;
                    vacc += d * d;
                });
                var[ch] = vacc * inv_m;
            }
        }
        let invstd: Vec<T> = var.iter().map(|&v| T::ONE / (v + epst).sqrt()).collect();
        let mut out = vec![T::ZERO; sx.count()];
        {
            let xd = self.value(x).data();
            let gd = self.value(gamma).data();
            let bd = self.value(beta).data();
            for ch in 0..c {
                let (mu, is, g, b) = (mean[ch], invstd[ch], gd[ch], bd[ch]);
                for_channel(sx, ch, |i| out[i] = (xd[i] - mu) * is * g + b);
            }
        }
        let out = Tensor::from_vec(sx, out)?;
        let node = self.push(
            out,
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                invstd,
            },
            "batch_norm",
        )?;
        Ok((node, mean, var))
    }

    /// Batch normalization by fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
        eps: f64,
    ) -> Result<Var> {
        self.bn_check(x, gamma, beta)?;
        let sx = self.value(x).shape();
        let c = sx.c;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::ShapeMismatch(format!(
                "batch_norm running stats must have length {c}"
            )));
        }
        let epst = T::from_f64(eps);
        let mean = running_mean.to_vec();
        let invstd: Vec<T> = running_var
            .iter()
            .map(|&v| T::ONE / (v + epst).sqrt())
            .collect();
        let mut out = vec![T::ZERO; sx.count()];
        {
            let xd = self.value(x).data();
            let gd = self.value(gamma).data();
            let bd = self.value(beta).data();
            for ch in 0..c {
                let (mu, is, g, b) = (mean[ch], invstd[ch], gd[ch], bd[ch]);
                for_channel(sx, ch, |i| out[i] = (xd[i] - mu) * is * g + b);
            }
        }
        let out = Tensor::from_vec(sx, out)?;
        self.push(
            out,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                invstd,
            },
            "batch_norm",
        )
    }

    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<()> {
        self.check_var(x)?;
        self.check_var(gamma)?;
        self.check_var(beta)?;
        let c = self.value(x).shape().c;
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            let s = self.value(v).shape();
            if !(s.is_channel_vector() && s.n == 1 && s.c == c) {
                return Err(Error::ShapeMismatch(format!(
                    "batch_norm {name} must be 1x{c}x1x1, got {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn max_pool(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Result<Var> {
        self.check_var(x)?;
        let sx = self.value(x).shape();
        let oh = conv_out_dim(sx.h, k, stride, pad)?;
        let ow = conv_out_dim(sx.w, k, stride, pad)?;
        let out_shape = Shape::new(sx.n, sx.c, oh, ow)?;
        let mut out = vec![T::ZERO; out_shape.count()];
        let mut argmax = vec![0u32; out_shape.count()];
        {
            let xd = self.value(x).data();
            let mut oi = 0;
            for n in 0..sx.n {
                for c in 0..sx.c {
                    let base = (n * sx.c + c) * sx.h * sx.w;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut best: Option<(T, usize)> = None;
                            for dy in 0..k {
                                let iy = (oy * stride + dy) as isize - pad as isize;
                                if iy < 0 || iy >= sx.h as isize {
                                    continue;
                                }
                                for dx in 0..k {
                                    let ix = (ox * stride + dx) as isize - pad as isize;
                                    if ix < 0 || ix >= sx.w as isize {
                                        continue;
                                    }
                                    let idx = base + iy as usize * sx.w + ix as usize;
                                    let v = xd[idx];
                                    if best.map_or(true, |(bv, _)| v > bv) {
                                        best = Some((v, idx));
                                    }
                                }
                            }
                            let (v, idx) = best.ok_or_else(|| {
                                Error::BadOutputDim("max_pool window fully outside input".into())
                            })?;
                            out[oi] = v;
                            argmax[oi] = idx as u32;
                            oi += 1;
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(out_shape, out)?;
        self.push(out, Op::MaxPool { x, argmax }, "max_pool")
    }

    /// Rearranges channel groups of r² into an r×-upscaled spatial grid:
    /// out[n, c, h·r+i, w·r+j] = x[n, c·r²+i·r+j, h, w].
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        self.check_var(x)?;
        if r == 0 {
            return Err(Error::InvalidShape("pixel_shuffle factor must be >= 1".into()));
        }
        let sx = self.value(x).shape();
        if sx.c % (r * r) != 0 {
            return Err(Error::ChannelMismatch {
                expected: r * r,
                got: sx.c,
            });
        }
        let out_shape = Shape::new(sx.n, sx.c / (r * r), sx.h * r, sx.w * r)?;
        let mut out = vec![T::ZERO; out_shape.count()];
        {
            let xd = self.value(x).data();
            for n in 0..sx.n {
                for co in 0..out_shape.c {
                    for h in 0..sx.h {
                        for w in 0..sx.w {
                            for i in 0..r {
                                for j in 0..r {
                                    let src = sx.index(n, co * r * r + i * r + j, h, w);
                                    let dst = out_shape.index(n, co, h * r + i, w * r + j);
                                    out[dst] = xd[src];
                                }
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(out_shape, out)?;
        self.push(out, Op::PixelShuffle { x, r }, "pixel_shuffle")
    }

    /// Bilinear upsampling by integer factor `r`, half-pixel origin
    /// (align_corners = false), edges clamped.
    pub fn bilinear_up(&mut self, x: Var, r: usize) -> Result<Var> {
        self.check_var(x)?;
        if r == 0 {
            return Err(Error::InvalidShape("upsample factor must be >= 1".into()));
        }
        let sx = self.value(x).shape();
        let out_shape = Shape::new(sx.n, sx.c, sx.h * r, sx.w * r)?;
        let mut out = vec![T::ZERO; out_shape.count()];
        {
            let xd = self.value(x).data();
            let taps_y = bilinear_taps(sx.h, r);
            let taps_x = bilinear_taps(sx.w, r);
            for n in 0..sx.n {
                for c in 0..sx.c {
                    let base = (n * sx.c + c) * sx.h * sx.w;
                    for (oy, &(y0, y1, wy)) in taps_y.iter().enumerate() {
                        let wy1 = T::from_f64(wy);
                        let wy0 = T::from_f64(1.0 - wy);
                        for (ox, &(x0, x1, wx)) in taps_x.iter().enumerate() {
                            let wx1 = T::from_f64(wx);
                            let wx0 = T::from_f64(1.0 - wx);
                            let v = xd[base + y0 * sx.w + x0] * wy0 * wx0
                                + xd[base + y0 * sx.w + x1] * wy0 * wx1
                                + xd[base + y1 * sx.w + x0] * wy1 * wx0
                                + xd[base + y1 * sx.w + x1] * wy1 * wx1;
                            out[out_shape.index(n, c, oy, ox)] = v;
                        }
                    }
                }
            }
        }
        let out = Tensor::from_vec(out_shape, out)?;
        self.push(out, Op::BilinearUp { x, r }, "bilinear_up")
    }

    /// Parameter-free channel attention: channel weights computed in closed
    /// form from the mean and variance of the pooled channel vector, gated
    /// by a sigmoid, then broadcast-multiplied onto the input.
    pub fn pfca(&mut self, x: Var, lambda: f64) -> Result<Var> {
        self.check_var(x)?;
        if lambda <= 0.0 {
            return Err(Error::InvalidShape("pfca lambda must be > 0".into()));
        }
        let sx = self.value(x).shape();
        let (n, c) = (sx.n, sx.c);
        let hw = sx.h * sx.w;
        let inv_hw = T::from_f64(1.0 / hw as f64);
        let inv_c = T::from_f64(1.0 / c as f64);
        let lam = T::from_f64(lambda);
        let quarter = T::from_f64(0.25);
        let half = T::from_f64(0.5);

        let mut dev = vec![T::ZERO; n * c];
        let mut var_lambda = vec![T::ZERO; n];
        let mut gate = vec![T::ZERO; n * c];
        let mut out = vec![T::ZERO; sx.count()];
        {
            let xd = self.value(x).data();
            for s in 0..n {
                // pooled channel vector U
                let urow = &mut dev[s * c..(s + 1) * c];
                for (ch, u) in urow.iter_mut().enumerate() {
                    let base = (s * c + ch) * hw;
                    let mut acc = T::ZERO;
                    for i in 0..hw {
                        acc += xd[base + i];
                    }
                    *u = acc * inv_hw;
                }
                let mut mu = T::ZERO;
                for &u in urow.iter() {
                    mu += u;
                }
                mu = mu * inv_c;
                let mut sig2 = T::ZERO;
                for u in urow.iter_mut() {
                    *u = *u - mu; // store deviations in place
                    sig2 += *u * *u;
                }
                sig2 = sig2 * inv_c;
                let sl = sig2 + lam;
                var_lambda[s] = sl;
                let inv_4s = quarter / sl;
                for ch in 0..c {
                    let d = urow[ch];
                    let v = d * d * inv_4s + half;
                    gate[s * c + ch] = sigmoid_scalar(v);
                }
                for ch in 0..c {
                    let g = gate[s * c + ch];
                    let base = (s * c + ch) * hw;
                    for i in 0..hw {
                        out[base + i] = xd[base + i] * g;
                    }
                }
            }
        }
        let out = Tensor::from_vec(sx, out)?;
        self.push(
            out,
            Op::Pfca {
                x,
                dev,
                var_lambda,
                gate,
            },
            "pfca",
        )
    }

    /// Mean cross-entropy of logits (N×K×1×1) against class labels,
    /// stabilized by max subtraction.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check_var(logits)?;
        let sl = self.value(logits).shape();
        if !sl.is_channel_vector() {
            return Err(Error::ShapeMismatch(format!(
                "cross_entropy expects N x K x 1 x 1 logits, got {sl}"
            )));
        }
        let (n, k) = (sl.n, sl.c);
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "cross_entropy: {} labels for batch of {n}",
                labels.len()
            )));
        }
        for &l in labels {
            if l >= k {
                return Err(Error::LabelOutOfRange { label: l, classes: k });
            }
        }
        let mut probs = vec![T::ZERO; n * k];
        let mut loss = T::ZERO;
        {
            let ld = self.value(logits).data();
            for s in 0..n {
                let row = &ld[s * k..(s + 1) * k];
                let mut mx = row[0];
                for &v in row {
                    mx = mx.maximum(v);
                }
                let mut denom = T::ZERO;
                for (j, &v) in row.iter().enumerate() {
                    let e = (v - mx).exp();
                    probs[s * k + j] = e;
                    denom += e;
                }
                for j in 0..k {
                    probs[s * k + j] = probs[s * k + j] / denom;
                }
                // -log softmax[label] = log(denom) - (logit - max)
                loss += denom.ln() - (row[labels[s]] - mx);
            }
        }
        let loss = loss / T::from_f64(n as f64);
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            "cross_entropy",
        )
    }

    /// Mean absolute difference against a constant target.
    pub fn l1_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        self.check_var(pred)?;
        let sp = self.value(pred).shape();
        if sp != target.shape() {
            return Err(Error::ShapeMismatch(format!(
                "l1_loss: {sp} vs {}",
                target.shape()
            )));
        }
        let mut acc = T::ZERO;
        for (&p, &t) in self.value(pred).data().iter().zip(target.data()) {
            acc += (p - t).abs();
        }
        let loss = acc / T::from_f64(sp.count() as f64);
        self.push(
            Tensor::scalar(loss),
            Op::L1Loss {
                pred,
                target: target.clone(),
            },
            "l1_loss",
        )
    }

    // ----- backward -----

    /// Reverse sweep from a scalar loss; every node reachable from it
    /// receives ∂loss/∂node, others hold zero.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.check_var(loss)?;
        let ls = self.value(loss).shape();
        if !ls.is_scalar() {
            return Err(Error::NonScalarLoss(ls.to_string()));
        }
        self.grads = self
            .nodes
            .iter()
            .map(|n| Some(Tensor::zeros(n.value.shape())))
            .collect();
        self.grads[loss.0].as_mut().unwrap().data_mut()[0] = T::ONE;

        for i in (0..self.nodes.len()).rev() {
            let g = self.grads[i].take().unwrap();
            self.step_backward(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn add_grad(&mut self, v: Var, contribution: &[T]) {
        let g = self.grads[v.0].as_mut().unwrap().data_mut();
        debug_assert_eq!(g.len(), contribution.len());
        for (a, &b) in g.iter_mut().zip(contribution) {
            *a += b;
        }
    }

    fn step_backward(&mut self, i: usize, grad: &Tensor<T>) -> Result<()> {
        let gd = grad.data();
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Relu { x } => {
                let x = *x;
                let contrib: Vec<T> = self.nodes[x.0]
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&xv, &g)| if xv.to_f64() > 0.0 { g } else { T::ZERO })
                    .collect();
                self.add_grad(x, &contrib);
            }
            Op::LeakyRelu { x, slope } => {
                let (x, s) = (*x, T::from_f64(*slope));
                let contrib: Vec<T> = self.nodes[x.0]
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&xv, &g)| if xv.to_f64() >= 0.0 { g } else { g * s })
                    .collect();
                self.add_grad(x, &contrib);
            }
            Op::Sigmoid { x } => {
                let x = *x;
                let contrib: Vec<T> = self.nodes[i]
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&y, &g)| g * y * (T::ONE - y))
                    .collect();
                self.add_grad(x, &contrib);
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                self.add_grad(a, gd);
                self.add_grad(b, gd);
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                let da: Vec<T> = self.nodes[b.0]
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&bv, &g)| g * bv)
                    .collect();
                let db: Vec<T> = self.nodes[a.0]
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&av, &g)| g * av)
                    .collect();
                self.add_grad(a, &da);
                self.add_grad(b, &db);
            }
            Op::MulChannel { x, v } => {
                let (x, v) = (*x, *v);
                let sx = self.nodes[x.0].value.shape();
                let hw = sx.h * sx.w;
                let vd = self.nodes[v.0].value.data();
                let xd = self.nodes[x.0].value.data();
                let mut dx = vec![T::ZERO; sx.count()];
                let mut dv = vec![T::ZERO; sx.n * sx.c];
                for nc in 0..sx.n * sx.c {
                    let s = vd[nc];
                    let base = nc * hw;
                    let mut acc = T::ZERO;
                    for i in 0..hw {
                        dx[base + i] = gd[base + i] * s;
                        acc += gd[base + i] * xd[base + i];
                    }
                    dv[nc] = acc;
                }
                self.add_grad(x, &dx);
                self.add_grad(v, &dv);
            }
            Op::GlobalAvgPool { x } => {
                let x = *x;
                let sx = self.nodes[x.0].value.shape();
                let hw = sx.h * sx.w;
                let inv = T::from_f64(1.0 / hw as f64);
                let mut dx = vec![T::ZERO; sx.count()];
                for nc in 0..sx.n * sx.c {
                    let g = gd[nc] * inv;
                    let base = nc * hw;
                    for i in 0..hw {
                        dx[base + i] = g;
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::Sum { x } => {
                let x = *x;
                let g = gd[0];
                let contrib = vec![g; self.nodes[x.0].value.count()];
                self.add_grad(x, &contrib);
            }
            Op::Mean { x } => {
                let x = *x;
                let count = self.nodes[x.0].value.count();
                let g = gd[0] / T::from_f64(count as f64);
                let contrib = vec![g; count];
                self.add_grad(x, &contrib);
            }
            Op::Scale { x, k } => {
                let (x, kk) = (*x, T::from_f64(*k));
                let contrib: Vec<T> = gd.iter().map(|&g| g * kk).collect();
                self.add_grad(x, &contrib);
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (x, w, b, stride, pad) = (*x, *w, *b, *stride, *pad);
                let sx = self.nodes[x.0].value.shape();
                let sw = self.nodes[w.0].value.shape();
                let so = self.nodes[i].value.shape();
                let (cout, cin, kh, kw) = (sw.n, sw.c, sw.h, sw.w);
                let k = cin * kh * kw;
                let p = so.h * so.w;

                let mut col = vec![T::ZERO; k * p];
                let mut dcol = vec![T::ZERO; k * p];
                let mut dw = vec![T::ZERO; sw.count()];
                let mut dx = vec![T::ZERO; sx.count()];
                {
                    let xd = self.nodes[x.0].value.data();
                    let wd = self.nodes[w.0].value.data();
                    for n in 0..sx.n {
                        im2col(xd, sx, n, kh, kw, stride, pad, so.h, so.w, &mut col);
                        let gout = &gd[n * cout * p..(n + 1) * cout * p];
                        unsafe {
                            // dW (Cout×K) += gout (Cout×P) · colᵀ (P×K)
                            T::gemm(
                                cout,
                                p,
                                k,
                                T::ONE,
                                gout.as_ptr(),
                                p as isize,
                                1,
                                col.as_ptr(),
                                1,
                                p as isize,
                                T::ONE,
                                dw.as_mut_ptr(),
                                k as isize,
                                1,
                            );
                            // dcol (K×P) = Wᵀ (K×Cout) · gout (Cout×P)
                            T::gemm(
                                k,
                                cout,
                                p,
                                T::ONE,
                                wd.as_ptr(),
                                1,
                                k as isize,
                                gout.as_ptr(),
                                p as isize,
                                1,
                                T::ZERO,
                                dcol.as_mut_ptr(),
                                p as isize,
                                1,
                            );
                        }
                        col2im_add(&dcol, sx, n, kh, kw, stride, pad, so.h, so.w, &mut dx);
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(w, &dw);
                if let Some(bv) = b {
                    let mut db = vec![T::ZERO; cout];
                    for n in 0..sx.n {
                        for c in 0..cout {
                            let base = (n * cout + c) * p;
                            let mut acc = T::ZERO;
                            for idx in 0..p {
                                acc += gd[base + idx];
                            }
                            db[c] += acc;
                        }
                    }
                    self.add_grad(bv, &db);
                }
            }
            Op::Linear { x, w, b } => {
                let (x, w, b) = (*x, *w, *b);
                let sx = self.nodes[x.0].value.shape();
                let sw = self.nodes[w.0].value.shape();
                let (n, cin, cout) = (sx.n, sx.c, sw.n);
                let mut dx = vec![T::ZERO; n * cin];
                let mut dw = vec![T::ZERO; cout * cin];
                {
                    let xd = self.nodes[x.0].value.data();
                    let wd = self.nodes[w.0].value.data();
                    unsafe {
                        // dx (N×Cin) = g (N×Cout) · w (Cout×Cin)
                        T::gemm(
                            n,
                            cout,
                            cin,
                            T::ONE,
                            gd.as_ptr(),
                            cout as isize,
                            1,
                            wd.as_ptr(),
                            cin as isize,
                            1,
                            T::ZERO,
                            dx.as_mut_ptr(),
                            cin as isize,
                            1,
                        );
                        // dw (Cout×Cin) = gᵀ (Cout×N) · x (N×Cin)
                        T::gemm(
                            cout,
                            n,
                            cin,
                            T::ONE,
                            gd.as_ptr(),
                            1,
                            cout as isize,
                            xd.as_ptr(),
                            cin as isize,
                            1,
                            T::ZERO,
                            dw.as_mut_ptr(),
                            cin as isize,
                            1,
                        );
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(w, &dw);
                if let Some(bv) = b {
                    let mut db = vec![T::ZERO; cout];
                    for s in 0..n {
                        for c in 0..cout {
                            db[c] += gd[s * cout + c];
                        }
                    }
                    self.add_grad(bv, &db);
                }
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                mean,
                invstd,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let mean = mean.clone();
                let invstd = invstd.clone();
                let sx = self.nodes[x.0].value.shape();
                let c = sx.c;
                let m = (sx.n * sx.h * sx.w) as f64;
                let mt = T::from_f64(m);
                let inv_m = T::from_f64(1.0 / m);
                let mut dx = vec![T::ZERO; sx.count()];
                let mut dgamma = vec![T::ZERO; c];
                let mut dbeta = vec![T::ZERO; c];
                {
                    let xd = self.nodes[x.0].value.data();
                    let gdta = self.nodes[gamma.0].value.data();
                    for ch in 0..c {
                        let (mu, is, gm) = (mean[ch], invstd[ch], gdta[ch]);
                        let mut sum_dy = T::ZERO;
                        let mut sum_dy_xhat = T::ZERO;
                        for_channel(sx, ch, |idx| {
                            let xhat = (xd[idx] - mu) * is;
                            sum_dy += gd[idx];
                            sum_dy_xhat += gd[idx] * xhat;
                        });
                        dbeta[ch] = sum_dy;
                        dgamma[ch] = sum_dy_xhat;
                        let coeff = gm * is * inv_m;
                        for_channel(sx, ch, |idx| {
                            let xhat = (xd[idx] - mu) * is;
                            dx[idx] = coeff * (mt * gd[idx] - sum_dy - xhat * sum_dy_xhat);
                        });
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(gamma, &dgamma);
                self.add_grad(beta, &dbeta);
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                invstd,
            } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let mean = mean.clone();
                let invstd = invstd.clone();
                let sx = self.nodes[x.0].value.shape();
                let c = sx.c;
                let mut dx = vec![T::ZERO; sx.count()];
                let mut dgamma = vec![T::ZERO; c];
                let mut dbeta = vec![T::ZERO; c];
                {
                    let xd = self.nodes[x.0].value.data();
                    let gdta = self.nodes[gamma.0].value.data();
                    for ch in 0..c {
                        let (mu, is, gm) = (mean[ch], invstd[ch], gdta[ch]);
                        let scale = gm * is;
                        let mut sum_dy = T::ZERO;
                        let mut sum_dy_xhat = T::ZERO;
                        for_channel(sx, ch, |idx| {
                            sum_dy += gd[idx];
                            sum_dy_xhat += gd[idx] * (xd[idx] - mu) * is;
                            dx[idx] = gd[idx] * scale;
                        });
                        dbeta[ch] = sum_dy;
                        dgamma[ch] = sum_dy_xhat;
                    }
                }
                self.add_grad(x, &dx);
                self.add_grad(gamma, &dgamma);
                self.add_grad(beta, &dbeta);
            }
            Op::MaxPool { x, argmax } => {
                let x = *x;
                let argmax = argmax.clone();
                let mut dx = vec![T::ZERO; self.nodes[x.0].value.count()];
                for (o, &src) in argmax.iter().enumerate() {
                    dx[src as usize] += gd[o];
                }
                self.add_grad(x, &dx);
            }
            Op::PixelShuffle { x, r } => {
                let (x, r) = (*x, *r);
                let sx = self.nodes[x.0].value.shape();
                let so = self.nodes[i].value.shape();
                let mut dx = vec![T::ZERO; sx.count()];
                for n in 0..sx.n {
                    for co in 0..so.c {
                        for h in 0..sx.h {
                            for w in 0..sx.w {
                                for di in 0..r {
                                    for dj in 0..r {
                                        let src = sx.index(n, co * r * r + di * r + dj, h, w);
                                        let dst = so.index(n, co, h * r + di, w * r + dj);
                                        dx[src] = gd[dst];
                                    }
                                }
                            }
                        }
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::BilinearUp { x, r } => {
                let (x, r) = (*x, *r);
                let sx = self.nodes[x.0].value.shape();
                let so = self.nodes[i].value.shape();
                let taps_y = bilinear_taps(sx.h, r);
                let taps_x = bilinear_taps(sx.w, r);
                let mut dx = vec![T::ZERO; sx.count()];
                for n in 0..sx.n {
                    for c in 0..sx.c {
                        let base = (n * sx.c + c) * sx.h * sx.w;
                        for (oy, &(y0, y1, wy)) in taps_y.iter().enumerate() {
                            let wy1 = T::from_f64(wy);
                            let wy0 = T::from_f64(1.0 - wy);
                            for (ox, &(x0, x1, wx)) in taps_x.iter().enumerate() {
                                let wx1 = T::from_f64(wx);
                                let wx0 = T::from_f64(1.0 - wx);
                                let g = gd[so.index(n, c, oy, ox)];
                                dx[base + y0 * sx.w + x0] += g * wy0 * wx0;
                                dx[base + y0 * sx.w + x1] += g * wy0 * wx1;
                                dx[base + y1 * sx.w + x0] += g * wy1 * wx0;
                                dx[base + y1 * sx.w + x1] += g * wy1 * wx1;
                            }
                        }
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::Pfca {
                x,
                dev,
                var_lambda,
                gate,
            } => {
                let x = *x;
                let dev = dev.clone();
                let var_lambda = var_lambda.clone();
                let gate = gate.clone();
                let sx = self.nodes[x.0].value.shape();
                let (n, c) = (sx.n, sx.c);
                let hw = sx.h * sx.w;
                let inv_hw = T::from_f64(1.0 / hw as f64);
                let cf = T::from_f64(c as f64);
                let two = T::from_f64(2.0);
                let mut dx = vec![T::ZERO; sx.count()];
                {
                    let xd = self.nodes[x.0].value.data();
                    for s in 0..n {
                        let sl = var_lambda[s];
                        // gate gradient per channel, then through V and U
                        let mut gv = vec![T::ZERO; c];
                        for ch in 0..c {
                            let base = (s * c + ch) * hw;
                            let mut acc = T::ZERO;
                            for idx in 0..hw {
                                acc += gd[base + idx] * xd[base + idx];
                            }
                            let w = gate[s * c + ch];
                            gv[ch] = acc * w * (T::ONE - w);
                        }
                        let mut sum_gv_d = T::ZERO;
                        let mut sum_gv_d2 = T::ZERO;
                        for ch in 0..c {
                            let d = dev[s * c + ch];
                            sum_gv_d += gv[ch] * d;
                            sum_gv_d2 += gv[ch] * d * d;
                        }
                        let inv_2s = T::ONE / (two * sl);
                        let inv_2sc = inv_2s / cf;
                        let inv_2s2c = inv_2sc / sl;
                        for ch in 0..c {
                            let d = dev[s * c + ch];
                            let gu =
                                gv[ch] * d * inv_2s - sum_gv_d * inv_2sc - d * sum_gv_d2 * inv_2s2c;
                            let spread = gu * inv_hw;
                            let w = gate[s * c + ch];
                            let base = (s * c + ch) * hw;
                            for idx in 0..hw {
                                dx[base + idx] = gd[base + idx] * w + spread;
                            }
                        }
                    }
                }
                self.add_grad(x, &dx);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let logits = *logits;
                let labels = labels.clone();
                let probs = probs.clone();
                let sl = self.nodes[logits.0].value.shape();
                let (n, k) = (sl.n, sl.c);
                let g = gd[0] / T::from_f64(n as f64);
                let mut dl = vec![T::ZERO; n * k];
                for s in 0..n {
                    for j in 0..k {
                        let onehot = if j == labels[s] { T::ONE } else { T::ZERO };
                        dl[s * k + j] = g * (probs[s * k + j] - onehot);
                    }
                }
                self.add_grad(logits, &dl);
            }
            Op::L1Loss { pred, target } => {
                let pred = *pred;
                let target = target.clone();
                let count = target.count();
                let g = gd[0] / T::from_f64(count as f64);
                let contrib: Vec<T> = self.nodes[pred.0]
                    .value
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&p, &t)| {
                        let d = (p - t).to_f64();
                        if d > 0.0 {
                            g
                        } else if d < 0.0 {
                            -g
                        } else {
                            T::ZERO
                        }
                    })
                    .collect();
                self.add_grad(pred, &contrib);
            }
        }
        Ok(())
    }
}

fn for_channel<F: FnMut(usize)>(shape: Shape, c: usize, mut f: F) {
    let hw = shape.h * shape.w;
    for n in 0..shape.n {
        let base = (n * shape.c + c) * hw;
        for i in 0..hw {
            f(base + i);
        }
    }
}

/// (low index, high index, weight of high) per output position for one axis.
fn bilinear_taps(input: usize, r: usize) -> Vec<(usize, usize, f64)> {
    let inv = 1.0 / r as f64;
    (0..input * r)
        .map(|o| {
            let src = (o as f64 + 0.5) * inv - 0.5;
            let floor = src.floor();
            let frac = src - floor;
            let lo = floor.max(0.0) as usize;
            let lo = lo.min(input - 1);
            let hi = (lo + 1).min(input - 1);
            if src < 0.0 {
                (lo, hi, 0.0)
            } else {
                (lo, hi, frac)
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    sx: Shape,
    n: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    let p = oh * ow;
    let plane = sx.h * sx.w;
    for c in 0..sx.c {
        let xbase = (n * sx.c + c) * plane;
        for dy in 0..kh {
            for dx in 0..kw {
                let row = ((c * kh + dy) * kw + dx) * p;
                for oy in 0..oh {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    let out_row = row + oy * ow;
                    if iy < 0 || iy >= sx.h as isize {
                        col[out_row..out_row + ow].fill(T::ZERO);
                        continue;
                    }
                    let src_row = xbase + iy as usize * sx.w;
                    for ox in 0..ow {
                        let ix = (ox * stride + dx) as isize - pad as isize;
                        col[out_row + ox] = if ix < 0 || ix >= sx.w as isize {
                            T::ZERO
                        } else {
                            x[src_row + ix as usize]
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Scalar>(
    dcol: &[T],
    sx: Shape,
    n: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [T],
) {
    let p = oh * ow;
    let plane = sx.h * sx.w;
    for c in 0..sx.c {
        let xbase = (n * sx.c + c) * plane;
        for dy in 0..kh {
            for dxk in 0..kw {
                let row = ((c * kh + dy) * kw + dxk) * p;
                for oy in 0..oh {
                    let iy = (oy * stride + dy) as isize - pad as isize;
                    if iy < 0 || iy >= sx.h as isize {
                        continue;
                    }
                    let dst_row = xbase + iy as usize * sx.w;
                    let src_row = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + dxk) as isize - pad as isize;
                        if ix >= 0 && ix < sx.w as isize {
                            dx[dst_row + ix as usize] += dcol[src_row + ox];
                        }
                    }
                }
            }
        }
    }
}
