//! Forward shape laws for the full-size builders.

use pfca_core::attention::AttentionKind;
use pfca_core::models::{Model, ModelSpec, StemKind};
use pfca_core::tensor::{Mode, Shape, Tensor};

#[test]
fn resnet18_imagenet_forward_yields_1000_logits() {
    let spec = ModelSpec::resnet(18, 1000, StemKind::ImageNet, AttentionKind::pfca());
    let mut model = Model::build(&spec, 0).unwrap();
    let input = Tensor::filled(Shape::new(1, 3, 224, 224).unwrap(), 0.5);
    let logits = model.predict(&input, Mode::Train).unwrap();
    assert_eq!(logits.shape(), Shape::new(1, 1000, 1, 1).unwrap());
    assert!(logits.data().iter().all(|v| v.is_finite()));
}

#[test]
fn msrresnet_quadruples_spatial_size() {
    let spec = ModelSpec::SuperRes {
        blocks: 2,
        width: 8,
        upscale: 4,
        attention: AttentionKind::ca(),
    };
    let mut model = Model::build(&spec, 0).unwrap();
    let input = Tensor::filled(Shape::new(2, 3, 10, 7).unwrap(), 0.25);
    let out = model.predict(&input, Mode::Eval).unwrap();
    assert_eq!(out.shape(), Shape::new(2, 3, 40, 28).unwrap());
}

#[test]
fn cifar_stem_keeps_early_resolution() {
    // 32x32 through the 3x3 stride-1 stem: stage outputs 32/16/8/4, so a
    // batch survives to the classifier without collapsing
    let spec = ModelSpec::Classifier {
        depth: 18,
        classes: 100,
        stem: StemKind::Cifar,
        attention: AttentionKind::None,
        base_width: 8,
    };
    let mut model = Model::build(&spec, 0).unwrap();
    let input = Tensor::filled(Shape::new(2, 3, 32, 32).unwrap(), 0.1);
    let logits = model.predict(&input, Mode::Train).unwrap();
    assert_eq!(logits.shape(), Shape::new(2, 100, 1, 1).unwrap());
}

#[test]
fn tensors_are_send_and_sync() {
    fn takes_send_sync<T: Send + Sync>() {}
    takes_send_sync::<Tensor<f32>>();
    takes_send_sync::<Tensor<f64>>();
    takes_send_sync::<pfca_core::tensor::ParamStore>();
}
