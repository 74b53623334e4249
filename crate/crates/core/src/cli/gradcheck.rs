//! The gradient-check suite behind `pfca gradcheck`: every differentiable
//! operator, the three attention operators, the three block kinds, and
//! both model families at toy width, all checked in 64-bit against central
//! differences.

use std::cell::Cell;

use crate::attention::AttentionKind;
use crate::blocks::{BasicBlock, BlockKind, BlockSpec, BottleneckBlock, SrBlock};
use crate::error::Result;
use crate::layers::FwdCtx;
use crate::models::{Model, ModelSpec, StemKind};
use crate::rng::Pcg32;
use crate::tensor::{
    grad_check_multi, GradCheckOptions, Mode, ParamBinding, ParamStore, Shape, Tape, Tensor, Var,
};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradCheckModule {
    All,
    Ops,
    Attention,
    Blocks,
    Models,
}

impl GradCheckModule {
    pub fn parse(s: &str) -> Option<GradCheckModule> {
        match s {
            "all" => Some(GradCheckModule::All),
            "ops" => Some(GradCheckModule::Ops),
            "attention" => Some(GradCheckModule::Attention),
            "blocks" => Some(GradCheckModule::Blocks),
            "models" => Some(GradCheckModule::Models),
            _ => None,
        }
    }
}

/// Test-fixture hook: corrupts one operator's analytic pass so the
/// negative-control test can watch the suite catch it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultInjection {
    #[default]
    None,
    PfcaBackward,
}

#[derive(Debug, Clone)]
pub struct OpReport {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub coords_skipped: usize,
    pub passed: bool,
}

fn random_tensor(s: Shape, seed: u64, scale: f64) -> Tensor<f64> {
    let mut rng = Pcg32::new(seed);
    Tensor::from_vec(s, (0..s.count()).map(|_| rng.normal() * scale).collect()).unwrap()
}

fn shape(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape::new(n, c, h, w).unwrap()
}

fn weighted_sum(tape: &mut Tape<f64>, y: Var) -> Result<Var> {
    let s = tape.value(y).shape();
    let data: Vec<f64> = (0..s.count()).map(|i| ((i % 13) as f64 - 6.0) * 0.29).collect();
    let w = tape.leaf(Tensor::from_vec(s, data)?)?;
    let prod = tape.mul(y, w)?;
    tape.sum(prod)
}

fn check<F>(name: &'static str, inputs: &[Tensor<f64>], max_coords: Option<usize>, f: F) -> OpReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    check_opts(
        name,
        inputs,
        GradCheckOptions {
            epsilon: GRADCHECK_EPSILON,
            max_coords,
            ..GradCheckOptions::default()
        },
        f,
    )
}

fn check_opts<F>(name: &'static str, inputs: &[Tensor<f64>], opts: GradCheckOptions, f: F) -> OpReport
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    match grad_check_multi(f, inputs, &opts) {
        Ok(report) => OpReport {
            name,
            max_rel_error: report.max_rel_error,
            coords_checked: report.coords_checked,
            coords_skipped: report.coords_skipped,
            passed: report.max_rel_error < GRADCHECK_TOLERANCE && report.coords_checked > 0,
        },
        Err(_) => OpReport {
            name,
            max_rel_error: f64::INFINITY,
            coords_checked: 0,
            coords_skipped: 0,
            passed: false,
        },
    }
}

fn op_checks() -> Vec<OpReport> {
    let mut out = Vec::new();
    let x = {
        let mut t = random_tensor(shape(2, 3, 4, 4), 1, 1.0);
        for v in t.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1; // keep clear of the relu kink
            }
        }
        t
    };

    out.push(check("relu", std::slice::from_ref(&x), None, |t, v| {
        let y = t.relu(v[0])?;
        weighted_sum(t, y)
    }));
    out.push(check("leaky_relu", std::slice::from_ref(&x), None, |t, v| {
        let y = t.leaky_relu(v[0], 0.1)?;
        weighted_sum(t, y)
    }));
    out.push(check("sigmoid", std::slice::from_ref(&x), None, |t, v| {
        let y = t.sigmoid(v[0])?;
        weighted_sum(t, y)
    }));
    out.push(check("global_avg_pool", std::slice::from_ref(&x), None, |t, v| {
        let y = t.global_avg_pool(v[0])?;
        weighted_sum(t, y)
    }));
    out.push(check("max_pool", std::slice::from_ref(&x), None, |t, v| {
        let y = t.max_pool(v[0], 3, 2, 1)?;
        weighted_sum(t, y)
    }));

    let x4 = random_tensor(shape(1, 4, 3, 3), 2, 1.0);
    out.push(check("pixel_shuffle", std::slice::from_ref(&x4), None, |t, v| {
        let y = t.pixel_shuffle(v[0], 2)?;
        weighted_sum(t, y)
    }));
    out.push(check("bilinear_up", std::slice::from_ref(&x4), None, |t, v| {
        let y = t.bilinear_up(v[0], 2)?;
        weighted_sum(t, y)
    }));

    let a = random_tensor(shape(2, 2, 3, 3), 3, 1.0);
    let b = random_tensor(shape(2, 2, 3, 3), 4, 1.0);
    out.push(check("add", &[a.clone(), b.clone()], None, |t, v| {
        let y = t.add(v[0], v[1])?;
        weighted_sum(t, y)
    }));
    out.push(check("mul", &[a.clone(), b], None, |t, v| {
        let y = t.mul(v[0], v[1])?;
        weighted_sum(t, y)
    }));
    let cv = random_tensor(shape(2, 2, 1, 1), 5, 1.0);
    out.push(check("mul_channel", &[a, cv], None, |t, v| {
        let y = t.mul_channel(v[0], v[1])?;
        weighted_sum(t, y)
    }));

    let cx = random_tensor(shape(2, 3, 5, 4), 6, 1.0);
    let cw = random_tensor(shape(2, 3, 3, 3), 7, 0.4);
    let cb = random_tensor(shape(1, 2, 1, 1), 8, 0.4);
    out.push(check("conv2d", &[cx, cw, cb], None, |t, v| {
        let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
        weighted_sum(t, y)
    }));

    let lx = random_tensor(shape(3, 5, 1, 1), 9, 1.0);
    let lw = random_tensor(shape(4, 5, 1, 1), 10, 0.4);
    let lb = random_tensor(shape(1, 4, 1, 1), 11, 0.4);
    out.push(check("linear", &[lx, lw, lb], None, |t, v| {
        let y = t.linear(v[0], v[1], Some(v[2]))?;
        weighted_sum(t, y)
    }));

    let bx = random_tensor(shape(3, 2, 3, 3), 12, 1.0);
    let bg = random_tensor(shape(1, 2, 1, 1), 13, 0.5);
    let bb = random_tensor(shape(1, 2, 1, 1), 14, 0.5);
    out.push(check(
        "batch_norm_train",
        &[bx.clone(), bg.clone(), bb.clone()],
        None,
        |t, v| {
            let (y, _, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
            weighted_sum(t, y)
        },
    ));
    out.push(check("batch_norm_eval", &[bx, bg, bb], None, |t, v| {
        let y = t.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[1.1, 0.8], 1e-5)?;
        weighted_sum(t, y)
    }));

    let logits = random_tensor(shape(4, 5, 1, 1), 15, 2.0);
    out.push(check("cross_entropy", std::slice::from_ref(&logits), None, |t, v| {
        t.cross_entropy(v[0], &[0, 3, 2, 4])
    }));
    let pred = random_tensor(shape(1, 3, 4, 4), 16, 1.0);
    let target = random_tensor(shape(1, 3, 4, 4), 17, 1.0);
    out.push(check("l1_loss", std::slice::from_ref(&pred), None, move |t, v| {
        t.l1_loss(v[0], &target.clone())
    }));
    out
}

fn attention_checks(fault: FaultInjection) -> Vec<OpReport> {
    let mut out = Vec::new();

    let x = random_tensor(shape(2, 6, 3, 3), 21, 1.0);
    // the fault fixture runs the analytic pass with a perturbed lambda so
    // the tape gradient disagrees with the numeric one
    let corrupt = Cell::new(fault == FaultInjection::PfcaBackward);
    out.push(check("pfca", std::slice::from_ref(&x), None, move |t, v| {
        let lambda = if corrupt.replace(false) { 2e-4 } else { 1e-4 };
        let y = t.pfca(v[0], lambda)?;
        weighted_sum(t, y)
    }));

    for (name, kind, channels) in [
        ("ca", AttentionKind::Ca { reduction: 3 }, 6usize),
        ("pa", AttentionKind::Pa, 4usize),
    ] {
        let mut store = ParamStore::new();
        let mut rng = Pcg32::new(22);
        kind.init_params("att", channels, &mut store, &mut rng).unwrap();
        let names: Vec<String> = store.iter().map(|e| e.name.clone()).collect();
        let mut inputs = vec![random_tensor(shape(2, channels, 3, 3), 23, 1.0)];
        for e in store.iter() {
            inputs.push(e.tensor.widen());
        }
        out.push(check(name, &inputs, None, move |t, v| {
            let mut binding = ParamBinding::default();
            for (i, n) in names.iter().enumerate() {
                binding.insert(n, v[i + 1]);
            }
            let y = kind.forward(t, &binding, "att", v[0])?;
            weighted_sum(t, y)
        }));
    }
    out
}

/// Shared harness: checks d(loss)/d(input and all trainables) through a
/// forward closure that reconstructs fresh state per evaluation.
fn check_with_store<FB>(
    name: &'static str,
    store: &ParamStore,
    input: Tensor<f64>,
    max_coords: Option<usize>,
    forward: FB,
) -> OpReport
where
    FB: Fn(&mut Tape<f64>, &ParamBinding, &mut ParamStore, Var) -> Result<Var>,
{
    let names: Vec<String> = store.iter().map(|e| e.name.clone()).collect();
    let mut inputs = vec![input];
    for e in store.iter() {
        inputs.push(e.tensor.widen());
    }
    let proto = store.clone();
    check(name, &inputs, max_coords, move |tape, vars| {
        let mut binding = ParamBinding::default();
        for (i, n) in names.iter().enumerate() {
            binding.insert(n, vars[i + 1]);
        }
        let mut fresh = proto.clone();
        let y = forward(tape, &binding, &mut fresh, vars[0])?;
        weighted_sum(tape, y)
    })
}

fn block_checks() -> Vec<OpReport> {
    let mut out = Vec::new();

    let spec = BlockSpec {
        kind: BlockKind::Basic,
        in_channels: 3,
        out_channels: 3,
        stride: 1,
        attention: AttentionKind::pfca(),
    };
    let block = BasicBlock::new("b", &spec).unwrap();
    let mut store = ParamStore::new();
    block.init(&mut store, &mut Pcg32::new(31)).unwrap();
    out.push(check_with_store(
        "basic_block",
        &store,
        random_tensor(shape(2, 3, 4, 4), 32, 1.0),
        Some(12),
        move |tape, binding, store, x| {
            let mut ctx = FwdCtx { tape, binding, store, mode: Mode::Train };
            block.forward(&mut ctx, x)
        },
    ));

    let spec = BlockSpec {
        kind: BlockKind::Bottleneck,
        in_channels: 4,
        out_channels: 8,
        stride: 2,
        attention: AttentionKind::pfca(),
    };
    let block = BottleneckBlock::new("b", &spec).unwrap();
    let mut store = ParamStore::new();
    block.init(&mut store, &mut Pcg32::new(33)).unwrap();
    out.push(check_with_store(
        "bottleneck_block",
        &store,
        random_tensor(shape(1, 4, 6, 6), 34, 1.0),
        Some(12),
        move |tape, binding, store, x| {
            let mut ctx = FwdCtx { tape, binding, store, mode: Mode::Train };
            block.forward(&mut ctx, x)
        },
    ));

    let block = SrBlock::new("b", 4, AttentionKind::pfca());
    let mut store = ParamStore::new();
    block.init(&mut store, &mut Pcg32::new(35)).unwrap();
    out.push(check_with_store(
        "sr_block",
        &store,
        random_tensor(shape(2, 4, 5, 5), 36, 1.0),
        Some(12),
        move |tape, binding, store, x| {
            let mut ctx = FwdCtx { tape, binding, store, mode: Mode::Train };
            block.forward(&mut ctx, x)
        },
    ));
    out
}

fn model_checks() -> Vec<OpReport> {
    let mut out = Vec::new();

    let spec = ModelSpec::Classifier {
        depth: 18,
        classes: 4,
        stem: StemKind::ImageNet,
        attention: AttentionKind::pfca(),
        base_width: 2,
    };
    // batch of two: the deepest stage runs at 1x1 spatial, where
    // train-mode batch statistics need a second sample to be non-degenerate
    out.push(model_check("resnet18_toy", &spec, shape(2, 3, 16, 16), Some(4)));

    let spec = ModelSpec::SuperRes {
        blocks: 2,
        width: 8,
        upscale: 4,
        attention: AttentionKind::pfca(),
    };
    out.push(model_check("msrresnet_toy", &spec, shape(1, 3, 6, 6), Some(4)));
    out
}

fn model_check(
    name: &'static str,
    spec: &ModelSpec,
    input_shape: Shape,
    max_coords: Option<usize>,
) -> OpReport {
    let model = Model::build(spec, 40).unwrap();
    let trainables: Vec<String> = model
        .store
        .iter()
        .filter(|e| e.trainable)
        .map(|e| e.name.clone())
        .collect();
    let mut inputs = vec![random_tensor(input_shape, 41, 1.0)];
    for e in model.store.iter().filter(|e| e.trainable) {
        inputs.push(e.tensor.widen());
    }
    let spec = spec.clone();
    // deep stacks of kinked activations: check only locally smooth points
    check_opts(
        name,
        &inputs,
        GradCheckOptions {
            epsilon: GRADCHECK_EPSILON,
            max_coords,
            skip_nonsmooth: true,
        },
        move |tape, vars| {
        // fresh model per evaluation: running statistics restart identically
        let mut m = Model::build(&spec, 40)?;
        let mut binding = ParamBinding::default();
        for (i, n) in trainables.iter().enumerate() {
            binding.insert(n, vars[i + 1]);
        }
            let y = m.forward(tape, &binding, vars[0], Mode::Train)?;
            weighted_sum(tape, y)
        },
    )
}

/// Runs the selected module's checks; `fault` is a test fixture and should
/// stay `FaultInjection::None` in real use.
pub fn run_gradcheck(module: GradCheckModule, fault: FaultInjection) -> Vec<OpReport> {
    let mut out = Vec::new();
    match module {
        GradCheckModule::All => {
            out.extend(op_checks());
            out.extend(attention_checks(fault));
            out.extend(block_checks());
            out.extend(model_checks());
        }
        GradCheckModule::Ops => out.extend(op_checks()),
        GradCheckModule::Attention => out.extend(attention_checks(fault)),
        GradCheckModule::Blocks => out.extend(block_checks()),
        GradCheckModule::Models => out.extend(model_checks()),
    }
    out
}
