//! Central finite-difference checking of tape gradients.
//!
//! Checks always run in 64-bit precision: the forward function is evaluated
//! on a `Tape<f64>` so the numeric differences stay far below the 1e-4
//! acceptance tolerance.

use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Pcg32;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Cap on checked coordinates per input tensor; `None` checks all.
    /// Sampling is deterministic (fixed seed).
    pub max_coords: Option<usize>,
    /// Skip coordinates where the stencil straddles a kink (a relu or
    /// max-pool switching state): there the second difference grows to the
    /// size of the first differences instead of the O(f″ε/f′) of a smooth
    /// function, and the central difference does not estimate a
    /// derivative. Deep compositions of kinked activations need this;
    /// single operations should not.
    pub skip_nonsmooth: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            max_coords: None,
            skip_nonsmooth: false,
        }
    }
}

/// A coordinate counts as kinked when its second difference exceeds this
/// fraction of the summed one-sided differences; slope jumps from a unit
/// switching state land far above it, smooth curvature far below.
const NONSMOOTH_RATIO: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub coords_skipped: usize,
    /// (input index, flat coordinate) of the worst disagreement.
    pub worst: (usize, usize),
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// |a − n| / max(1, |a|, |n|): relative for large gradients, absolute for
/// small ones, so vanishing coordinates do not produce spurious failures.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Checks d(f)/d(inputs) against central differences for a scalar-valued
/// tape function of several input tensors.
pub fn grad_check_multi<F>(
    f: F,
    inputs: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |tensors: &[Tensor<f64>]| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone()))
            .collect::<Result<_>>()?;
        let loss = f(&mut tape, &vars)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite("grad_check loss".into()));
        }
        tape.backward(loss)?;
        let grads = vars
            .iter()
            .map(|&v| tape.grad(v).map(|g| g.data().to_vec()))
            .collect::<Result<_>>()?;
        Ok((value, grads))
    };

    let (base_value, analytic) = eval(inputs)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        coords_skipped: 0,
        worst: (0, 0),
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
    };
    let mut rng = Pcg32::new(0x9d2c_5680);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();

    for (ti, input) in inputs.iter().enumerate() {
        let count = input.count();
        let coords: Vec<usize> = match opts.max_coords {
            Some(cap) if cap < count => (0..cap).map(|_| rng.below(count)).collect(),
            _ => (0..count).collect(),
        };
        for &ci in &coords {
            let orig = input.data()[ci];
            work[ti].data_mut()[ci] = orig + opts.epsilon;
            let (plus, _) = eval_value(&f, &work)?;
            work[ti].data_mut()[ci] = orig - opts.epsilon;
            let (minus, _) = eval_value(&f, &work)?;
            work[ti].data_mut()[ci] = orig;

            if opts.skip_nonsmooth {
                let second = (plus + minus - 2.0 * base_value).abs();
                let first = (plus - base_value).abs() + (base_value - minus).abs();
                if second > NONSMOOTH_RATIO * first && second > 1e-11 {
                    report.coords_skipped += 1;
                    continue;
                }
            }
            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            let err = rel_error(analytic[ti][ci], numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (ti, ci);
                report.analytic_at_worst = analytic[ti][ci];
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}

fn eval_value<F>(f: &F, tensors: &[Tensor<f64>]) -> Result<(f64, ())>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = tensors
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<_>>()?;
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss).data()[0];
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }
    Ok((value, ()))
}

/// Single-input convenience wrapper.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_multi(
        |tape, vars| f(tape, vars[0]),
        std::slice::from_ref(x),
        &GradCheckOptions {
            epsilon,
            ..GradCheckOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn sum_of_squares_is_exact() {
        let s = Shape::new(1, 2, 3, 3).unwrap();
        let data: Vec<f64> = (0..s.count()).map(|i| (i as f64 - 8.0) * 0.37).collect();
        let x = Tensor::from_vec(s, data).unwrap();
        let report = grad_check(
            |tape, x| {
                let sq = tape.mul(x, x)?;
                tape.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn sampled_coordinates_are_bounded() {
        let s = Shape::new(1, 4, 4, 4).unwrap();
        let data: Vec<f64> = (0..s.count()).map(|i| (i as f64 * 0.11).sin()).collect();
        let x = Tensor::from_vec(s, data).unwrap();
        let report = grad_check_multi(
            |tape, vars| {
                let y = tape.sigmoid(vars[0])?;
                tape.sum(y)
            },
            std::slice::from_ref(&x),
            &GradCheckOptions {
                epsilon: 1e-5,
                max_coords: Some(10),
                ..GradCheckOptions::default()
            },
        )
        .unwrap();
        assert_eq!(report.coords_checked, 10);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }
}
