//! Named layer wrappers tying parameter storage, tape execution, and cost
//! accounting together so builders, training, and the analyzer walk one
//! structure.

use crate::cost::CostRow;
use crate::error::Result;
use crate::rng::Pcg32;
use crate::tensor::{Mode, ParamBinding, ParamStore, Scalar, Shape, Tape, Tensor, Var};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Borrowed execution context for one forward pass. The store is mutable
/// because train-mode batch norm folds batch statistics into its running
/// entries.
pub struct FwdCtx<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub binding: &'a ParamBinding,
    pub store: &'a mut ParamStore,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    pub name: String,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub bias: bool,
}

impl Conv2dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Conv2dLayer {
        Conv2dLayer {
            name: name.into(),
            in_ch,
            out_ch,
            k,
            stride,
            pad,
            bias,
        }
    }

    /// Kaiming-normal fan-in init with relu gain, times `scale`.
    pub fn init(&self, store: &mut ParamStore, rng: &mut Pcg32, scale: f64) -> Result<()> {
        let fan_in = (self.in_ch * self.k * self.k) as f64;
        let std = (2.0 / fan_in).sqrt() * scale;
        let shape = Shape::new(self.out_ch, self.in_ch, self.k, self.k)?;
        let data = (0..shape.count())
            .map(|_| (rng.normal() * std) as f32)
            .collect();
        store.insert(
            &format!("{}.weight", self.name),
            Tensor::from_vec(shape, data)?,
            true,
        )?;
        if self.bias {
            store.insert(
                &format!("{}.bias", self.name),
                Tensor::zeros(Shape::vector(1, self.out_ch)),
                true,
            )?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut FwdCtx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.binding.get(&format!("{}.weight", self.name))?;
        let b = if self.bias {
            Some(ctx.binding.get(&format!("{}.bias", self.name))?)
        } else {
            None
        };
        ctx.tape.conv2d(x, w, b, self.stride, self.pad)
    }

    pub fn out_shape(&self, s: Shape) -> Result<Shape> {
        let oh = crate::tensor::conv_out_dim(s.h, self.k, self.stride, self.pad)?;
        let ow = crate::tensor::conv_out_dim(s.w, self.k, self.stride, self.pad)?;
        Shape::new(s.n, self.out_ch, oh, ow)
    }

    pub fn param_count(&self) -> u64 {
        let w = (self.out_ch * self.in_ch * self.k * self.k) as u64;
        if self.bias {
            w + self.out_ch as u64
        } else {
            w
        }
    }

    pub fn append_costs(&self, input: Shape, rows: &mut Vec<CostRow>) -> Result<Shape> {
        let out = self.out_shape(input)?;
        let macs = (out.n * self.out_ch * self.in_ch * self.k * self.k) as u64
            * (out.h * out.w) as u64;
        let elem = if self.bias { out.count() as u64 } else { 0 };
        rows.push(CostRow::new(&self.name, self.param_count(), macs, elem));
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub name: String,
    pub ch: usize,
}

impl BatchNormLayer {
    pub fn new(name: impl Into<String>, ch: usize) -> BatchNormLayer {
        BatchNormLayer { name: name.into(), ch }
    }

    pub fn init(&self, store: &mut ParamStore) -> Result<()> {
        let vec = Shape::vector(1, self.ch);
        store.insert(&format!("{}.weight", self.name), Tensor::filled(vec, 1.0), true)?;
        store.insert(&format!("{}.bias", self.name), Tensor::zeros(vec), true)?;
        store.insert(&format!("{}.running_mean", self.name), Tensor::zeros(vec), false)?;
        store.insert(
            &format!("{}.running_var", self.name),
            Tensor::filled(vec, 1.0),
            false,
        )?;
        store.insert(
            &format!("{}.num_batches", self.name),
            Tensor::zeros(Shape::scalar()),
            false,
        )?;
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut FwdCtx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.binding.get(&format!("{}.weight", self.name))?;
        let beta = ctx.binding.get(&format!("{}.bias", self.name))?;
        match ctx.mode {
            Mode::Train => {
                let (y, mean, var) = ctx.tape.batch_norm_train(x, gamma, beta, BN_EPS)?;
                let rm = ctx.store.get_mut(&format!("{}.running_mean", self.name))?;
                for (r, m) in rm.data_mut().iter_mut().zip(&mean) {
                    *r = (*r as f64 * (1.0 - BN_MOMENTUM) + m.to_f64() * BN_MOMENTUM) as f32;
                }
                let rv = ctx.store.get_mut(&format!("{}.running_var", self.name))?;
                for (r, v) in rv.data_mut().iter_mut().zip(&var) {
                    *r = (*r as f64 * (1.0 - BN_MOMENTUM) + v.to_f64() * BN_MOMENTUM) as f32;
                }
                let nb = ctx.store.get_mut(&format!("{}.num_batches", self.name))?;
                nb.data_mut()[0] += 1.0;
                Ok(y)
            }
            Mode::Eval => {
                let nb = ctx.store.get(&format!("{}.num_batches", self.name))?;
                if nb.data()[0] == 0.0 {
                    return Err(crate::error::Error::NoRunningStats);
                }
                let mean: Vec<T> = ctx
                    .store
                    .get(&format!("{}.running_mean", self.name))?
                    .data()
                    .iter()
                    .map(|&v| T::from_f32(v))
                    .collect();
                let var: Vec<T> = ctx
                    .store
                    .get(&format!("{}.running_var", self.name))?
                    .data()
                    .iter()
                    .map(|&v| T::from_f32(v))
                    .collect();
                ctx.tape.batch_norm_eval(x, gamma, beta, &mean, &var, BN_EPS)
            }
        }
    }

    pub fn param_count(&self) -> u64 {
        2 * self.ch as u64
    }

    pub fn append_costs(&self, input: Shape, rows: &mut Vec<CostRow>) -> Shape {
        rows.push(CostRow::new(
            &self.name,
            self.param_count(),
            0,
            2 * input.count() as u64,
        ));
        input
    }
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    pub name: String,
    pub in_f: usize,
    pub out_f: usize,
}

impl LinearLayer {
    pub fn new(name: impl Into<String>, in_f: usize, out_f: usize) -> LinearLayer {
        LinearLayer { name: name.into(), in_f, out_f }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Pcg32) -> Result<()> {
        let std = (1.0 / self.in_f as f64).sqrt();
        let shape = Shape::vector(self.out_f, self.in_f);
        let data = (0..shape.count())
            .map(|_| (rng.normal() * std) as f32)
            .collect();
        store.insert(
            &format!("{}.weight", self.name),
            Tensor::from_vec(shape, data)?,
            true,
        )?;
        store.insert(
            &format!("{}.bias", self.name),
            Tensor::zeros(Shape::vector(1, self.out_f)),
            true,
        )?;
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut FwdCtx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.binding.get(&format!("{}.weight", self.name))?;
        let b = ctx.binding.get(&format!("{}.bias", self.name))?;
        ctx.tape.linear(x, w, Some(b))
    }

    pub fn param_count(&self) -> u64 {
        (self.out_f * self.in_f + self.out_f) as u64
    }

    pub fn append_costs(&self, input: Shape, rows: &mut Vec<CostRow>) -> Result<Shape> {
        let macs = (input.n * self.out_f * self.in_f) as u64;
        rows.push(CostRow::new(
            &self.name,
            self.param_count(),
            macs,
            (input.n * self.out_f) as u64,
        ));
        Shape::new(input.n, self.out_f, 1, 1)
    }
}
