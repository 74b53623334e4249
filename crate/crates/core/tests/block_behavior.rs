//! Residual-block semantics: shortcut identities, shape laws, and
//! end-to-end gradients for one block of each kind.

use pfca_core::attention::AttentionKind;
use pfca_core::blocks::{BasicBlock, BlockKind, BlockSpec, BottleneckBlock, SrBlock};
use pfca_core::layers::FwdCtx;
use pfca_core::rng::Pcg32;
use pfca_core::tensor::{
    grad_check_multi, GradCheckOptions, Mode, ParamBinding, ParamStore, Shape, Tape, Tensor, Var,
};

fn random_tensor(s: Shape, seed: u64) -> Tensor<f32> {
    let mut rng = Pcg32::new(seed);
    let data = (0..s.count()).map(|_| rng.normal() as f32).collect();
    Tensor::from_vec(s, data).unwrap()
}

fn basic_spec(cin: usize, cout: usize, stride: usize, att: AttentionKind) -> BlockSpec {
    BlockSpec {
        kind: BlockKind::Basic,
        in_channels: cin,
        out_channels: cout,
        stride,
        attention: att,
    }
}

fn zero_conv_weights(store: &mut ParamStore) {
    for e in store.iter_mut() {
        if e.name.contains("conv") && e.name.ends_with(".weight") {
            for v in e.tensor.data_mut() {
                *v = 0.0;
            }
        }
    }
}

#[test]
fn basic_block_zero_branch_reduces_to_relu_of_input() {
    for att in [AttentionKind::None, AttentionKind::pfca()] {
        let spec = basic_spec(4, 4, 1, att);
        let block = BasicBlock::new("b", &spec).unwrap();
        let mut store = ParamStore::new();
        let mut rng = Pcg32::new(7);
        block.init(&mut store, &mut rng).unwrap();
        zero_conv_weights(&mut store);

        let x = random_tensor(Shape::new(2, 4, 5, 5).unwrap(), 8);
        let mut tape = Tape::<f32>::new();
        let binding = store.bind(&mut tape).unwrap();
        let xv = tape.leaf(x.clone()).unwrap();
        let mut ctx = FwdCtx {
            tape: &mut tape,
            binding: &binding,
            store: &mut store,
            mode: Mode::Train,
        };
        let y = block.forward(&mut ctx, xv).unwrap();
        for (out, orig) in tape.value(y).data().iter().zip(x.data()) {
            assert!((out - orig.max(0.0)).abs() < 1e-6, "{out} vs relu({orig})");
        }
    }
}

#[test]
fn basic_block_stride2_shape_law() {
    let spec = basic_spec(4, 8, 2, AttentionKind::None);
    let block = BasicBlock::new("b", &spec).unwrap();
    let mut store = ParamStore::new();
    let mut rng = Pcg32::new(9);
    block.init(&mut store, &mut rng).unwrap();

    let x = random_tensor(Shape::new(1, 4, 8, 8).unwrap(), 10);
    let mut tape = Tape::<f32>::new();
    let binding = store.bind(&mut tape).unwrap();
    let xv = tape.leaf(x).unwrap();
    let mut ctx = FwdCtx {
        tape: &mut tape,
        binding: &binding,
        store: &mut store,
        mode: Mode::Train,
    };
    let y = block.forward(&mut ctx, xv).unwrap();
    assert_eq!(tape.value(y).shape(), Shape::new(1, 8, 4, 4).unwrap());
}

#[test]
fn attention_none_with_unit_gate_matches_plain_block() {
    // with all-equal channels PFCA's gate is sigmoid(0.5) on every channel;
    // scaling the residual branch output by that gate equals what the plain
    // block computes, scaled — so check the exact no-op case instead: a gate
    // vector of ones applied through mul_channel leaves the branch bitwise
    // unchanged.
    let x = random_tensor(Shape::new(2, 3, 4, 4).unwrap(), 11);
    let mut tape = Tape::<f32>::new();
    let xv = tape.leaf(x.clone()).unwrap();
    let ones = tape
        .leaf(Tensor::filled(Shape::new(2, 3, 1, 1).unwrap(), 1.0))
        .unwrap();
    let gated = tape.mul_channel(xv, ones).unwrap();
    assert_eq!(tape.value(gated).data(), x.data());
}

#[test]
fn sr_block_zero_branch_is_exact_identity() {
    for att in [AttentionKind::None, AttentionKind::pfca(), AttentionKind::Pa] {
        let block = SrBlock::new("b", 6, att);
        let mut store = ParamStore::new();
        let mut rng = Pcg32::new(12);
        block.init(&mut store, &mut rng).unwrap();
        zero_conv_weights(&mut store);
        // PA's gate conv weights are zeroed too; its branch input is already
        // zero so the gated product stays zero either way.

        let x = random_tensor(Shape::new(1, 6, 7, 7).unwrap(), 13);
        let mut tape = Tape::<f32>::new();
        let binding = store.bind(&mut tape).unwrap();
        let xv = tape.leaf(x.clone()).unwrap();
        let mut ctx = FwdCtx {
            tape: &mut tape,
            binding: &binding,
            store: &mut store,
            mode: Mode::Train,
        };
        let y = block.forward(&mut ctx, xv).unwrap();
        assert_eq!(tape.value(y).data(), x.data(), "attention {:?}", att.label());
    }
}

#[test]
fn sr_block_preserves_shape() {
    let block = SrBlock::new("b", 16, AttentionKind::pfca());
    let mut store = ParamStore::new();
    let mut rng = Pcg32::new(14);
    block.init(&mut store, &mut rng).unwrap();
    let s = Shape::new(3, 16, 9, 11).unwrap();
    let x = random_tensor(s, 15);
    let mut tape = Tape::<f32>::new();
    let binding = store.bind(&mut tape).unwrap();
    let xv = tape.leaf(x).unwrap();
    let mut ctx = FwdCtx {
        tape: &mut tape,
        binding: &binding,
        store: &mut store,
        mode: Mode::Train,
    };
    let y = block.forward(&mut ctx, xv).unwrap();
    assert_eq!(tape.value(y).shape(), s);
}

#[test]
fn bottleneck_pfca_param_count_equals_plain() {
    let mk = |att: AttentionKind| {
        let spec = BlockSpec {
            kind: BlockKind::Bottleneck,
            in_channels: 64,
            out_channels: 64,
            stride: 1,
            attention: att,
        };
        let block = BottleneckBlock::new("b", &spec).unwrap();
        let mut store = ParamStore::new();
        let mut rng = Pcg32::new(16);
        block.init(&mut store, &mut rng).unwrap();
        store.trainable_count()
    };
    assert_eq!(mk(AttentionKind::None), mk(AttentionKind::pfca()));
    assert!(mk(AttentionKind::ca()) > mk(AttentionKind::None));
}

/// Gradient check through a whole block: all parameters and the input.
fn gradcheck_block<FB>(forward: FB, store: &ParamStore, input: Tensor<f64>) -> f64
where
    FB: Fn(&mut Tape<f64>, &ParamBinding, &mut ParamStore, Var) -> pfca_core::Result<Var>,
{
    let names: Vec<String> = store.iter().map(|e| e.name.clone()).collect();
    let mut inputs = vec![input];
    for e in store.iter() {
        inputs.push(e.tensor.widen());
    }
    let store_proto = store.clone();

    let report = grad_check_multi(
        |tape, vars| {
            let mut binding = ParamBinding::default();
            for (i, name) in names.iter().enumerate() {
                binding.insert(name, vars[i + 1]);
            }
            // fresh state per evaluation keeps f deterministic
            let mut store = store_proto.clone();
            let y = forward(tape, &binding, &mut store, vars[0])?;
            let s = tape.value(y).shape();
            let w: Vec<f64> = (0..s.count())
                .map(|i| ((i % 11) as f64 - 5.0) * 0.23)
                .collect();
            let wv = tape.leaf(Tensor::from_vec(s, w)?)?;
            let prod = tape.mul(y, wv)?;
            tape.sum(prod)
        },
        &inputs,
        &GradCheckOptions {
            epsilon: 1e-5,
            max_coords: Some(12),
            ..GradCheckOptions::default()
        },
    )
    .unwrap();
    report.max_rel_error
}

#[test]
fn every_block_kind_passes_grad_check() {
    // basic
    let spec = basic_spec(3, 3, 1, AttentionKind::pfca());
    let block = BasicBlock::new("b", &spec).unwrap();
    let mut store = ParamStore::new();
    block.init(&mut store, &mut Pcg32::new(20)).unwrap();
    let x = random_tensor(Shape::new(2, 3, 4, 4).unwrap(), 21).widen();
    let err = gradcheck_block(
        |tape, binding, store, xv| {
            let mut ctx = FwdCtx {
                tape,
                binding,
                store,
                mode: Mode::Train,
            };
            block.forward(&mut ctx, xv)
        },
        &store,
        x,
    );
    assert!(err < 1e-4, "basic block: {err:.3e}");

    // bottleneck
    let spec = BlockSpec {
        kind: BlockKind::Bottleneck,
        in_channels: 4,
        out_channels: 8,
        stride: 2,
        attention: AttentionKind::pfca(),
    };
    let block = BottleneckBlock::new("b", &spec).unwrap();
    let mut store = ParamStore::new();
    block.init(&mut store, &mut Pcg32::new(22)).unwrap();
    let x = random_tensor(Shape::new(1, 4, 6, 6).unwrap(), 23).widen();
    let err = gradcheck_block(
        |tape, binding, store, xv| {
            let mut ctx = FwdCtx {
                tape,
                binding,
                store,
                mode: Mode::Train,
            };
            block.forward(&mut ctx, xv)
        },
        &store,
        x,
    );
    assert!(err < 1e-4, "bottleneck block: {err:.3e}");

    // compact SR
    let block = SrBlock::new("b", 4, AttentionKind::pfca());
    let mut store = ParamStore::new();
    block.init(&mut store, &mut Pcg32::new(24)).unwrap();
    let x = random_tensor(Shape::new(2, 4, 5, 5).unwrap(), 25).widen();
    let err = gradcheck_block(
        |tape, binding, store, xv| {
            let mut ctx = FwdCtx {
                tape,
                binding,
                store,
                mode: Mode::Train,
            };
            block.forward(&mut ctx, xv)
        },
        &store,
        x,
    );
    assert!(err < 1e-4, "sr block: {err:.3e}");
}
