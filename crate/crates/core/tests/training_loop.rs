//! Training-loop behavior: determinism, checkpoint round trips, resume
//! equivalence, and the loss-vs-lr sanity cases.

use std::collections::HashMap;

use pfca_core::attention::AttentionKind;
use pfca_core::image::synth_classification;
use pfca_core::models::{Model, ModelSpec, StemKind};
use pfca_core::train::{
    load_checkpoint, restore_into, save_checkpoint, ClassifyData, LossCfg, OptimizerCfg,
    Schedule, SrData, TaskData, TaskKind, TrainConfig, TrainState, Trainer,
};

fn tiny_classify_data(n: usize, classes: usize) -> TaskData {
    let samples = synth_classification(n, classes, 8, 3);
    TaskData::Classify {
        train: ClassifyData::from_samples(&samples, classes).unwrap(),
        eval: ClassifyData::from_samples(&samples, classes).unwrap(),
    }
}

fn tiny_classify_cfg(steps: u64, lr0: f64) -> TrainConfig {
    TrainConfig {
        task: TaskKind::Classification,
        optimizer: OptimizerCfg::Sgd {
            momentum: 0.9,
            weight_decay: 1e-4,
        },
        schedule: Schedule::StepDecay {
            period: 1_000,
            factor: 0.1,
        },
        lr0,
        steps_per_unit: 1,
        loss: LossCfg::CrossEntropy,
        batch_size: 8,
        steps,
        eval_every: 5,
        seed: 99,
    }
}

fn tiny_model(attn: AttentionKind) -> Model {
    Model::build(
        &ModelSpec::Classifier {
            depth: 18,
            classes: 4,
            stem: StemKind::Cifar,
            attention: attn,
            base_width: 2,
        },
        17,
    )
    .unwrap()
}

fn run_losses(steps: u64, seed_offset: u64) -> Vec<f32> {
    let data = tiny_classify_data(16, 4);
    let mut cfg = tiny_classify_cfg(steps, 0.01);
    cfg.seed += seed_offset;
    let mut model = tiny_model(AttentionKind::pfca());
    let mut trainer = Trainer::new(&mut model, &data, &cfg).unwrap();
    let mut losses = Vec::new();
    while trainer.state.step < cfg.steps {
        losses.push(trainer.step_once().unwrap().loss as f32);
    }
    losses
}

#[test]
fn fixed_seed_reproduces_losses_exactly() {
    let a = run_losses(10, 0);
    let b = run_losses(10, 0);
    assert_eq!(a.len(), 10);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    let c = run_losses(10, 1);
    assert!(a.iter().zip(&c).any(|(x, y)| x != y));
}

#[test]
fn zero_lr_keeps_loss_constant() {
    let data = tiny_classify_data(16, 4);
    // lr0 must be positive for validation; use a schedule that floors it
    // to zero immediately instead
    let cfg = TrainConfig {
        schedule: Schedule::MultiStep {
            milestones: vec![0],
            factor: 1e-30,
        },
        ..tiny_classify_cfg(6, 1.0)
    };
    let mut model = tiny_model(AttentionKind::None);
    let mut trainer = Trainer::new(&mut model, &data, &cfg).unwrap();
    let mut losses = Vec::new();
    while trainer.state.step < cfg.steps {
        losses.push(trainer.step_once().unwrap());
    }
    // batches differ per step; compare the same batch by re-running the
    // first step on the (unchanged) parameters
    let again = run_first_loss(&cfg, &data);
    assert_eq!(losses[0].loss as f32, again);
}

fn run_first_loss(cfg: &TrainConfig, data: &TaskData) -> f32 {
    let mut model = tiny_model(AttentionKind::None);
    let mut trainer = Trainer::new(&mut model, data, cfg).unwrap();
    trainer.step_once().unwrap().loss as f32
}

#[test]
fn uniform_logits_loss_is_ln_k() {
    // zeroed head weights give uniform logits: cross-entropy = ln(classes)
    let data = tiny_classify_data(16, 4);
    let cfg = tiny_classify_cfg(1, 1e-9);
    let mut model = tiny_model(AttentionKind::None);
    for e in model.store.iter_mut() {
        if e.name.starts_with("head.") {
            for v in e.tensor.data_mut() {
                *v = 0.0;
            }
        }
    }
    let mut trainer = Trainer::new(&mut model, &data, &cfg).unwrap();
    let row = trainer.step_once().unwrap();
    assert!((row.loss - (4.0f64).ln()).abs() < 1e-6, "{}", row.loss);
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.pfca");
    let data = tiny_classify_data(16, 4);
    let cfg = tiny_classify_cfg(4, 0.01);
    let mut model = tiny_model(AttentionKind::ca());
    let mut trainer = Trainer::new(&mut model, &data, &cfg).unwrap();
    while trainer.state.step < cfg.steps {
        trainer.step_once().unwrap();
    }
    let slots = trainer.optimizer.export_slots(&trainer.model.store);
    let state = trainer.state.clone();
    save_checkpoint(trainer.model, &slots, &state, &path).unwrap();

    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.state.step, 4);
    assert_eq!(loaded.model.store.len(), model.store.len());
    for (a, b) in model.store.iter().zip(loaded.model.store.iter()) {
        assert_eq!(a.name, b.name);
        for (x, y) in a.tensor.data().iter().zip(b.tensor.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
    let slot_map: HashMap<String, Vec<f32>> = slots.into_iter().collect();
    for (k, v) in &loaded.opt_slots {
        let orig = &slot_map[k];
        for (x, y) in v.iter().zip(orig) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn resume_then_one_step_equals_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("resume.pfca");
    let data = tiny_classify_data(16, 4);
    let cfg = tiny_classify_cfg(6, 0.02);

    // uninterrupted: 6 steps
    let mut full_model = tiny_model(AttentionKind::pfca());
    let mut full = Trainer::new(&mut full_model, &data, &cfg).unwrap();
    let mut full_losses = Vec::new();
    while full.state.step < 6 {
        full_losses.push(full.step_once().unwrap().loss as f32);
    }

    // interrupted at 3, checkpointed, resumed
    let mut m1 = tiny_model(AttentionKind::pfca());
    let mut t1 = Trainer::new(&mut m1, &data, &cfg).unwrap();
    for _ in 0..3 {
        t1.step_once().unwrap();
    }
    let slots = t1.optimizer.export_slots(&t1.model.store);
    save_checkpoint(t1.model, &slots, &t1.state, &path).unwrap();

    let loaded = load_checkpoint(&path).unwrap();
    let mut m2 = loaded.model;
    let mut t2 = Trainer::new(&mut m2, &data, &cfg).unwrap();
    t2.optimizer.import_slots(&loaded.opt_slots);
    t2.state = loaded.state;
    let mut resumed_losses = Vec::new();
    while t2.state.step < 6 {
        resumed_losses.push(t2.step_once().unwrap().loss as f32);
    }
    assert_eq!(resumed_losses.len(), 3);
    for (a, b) in full_losses[3..].iter().zip(&resumed_losses) {
        assert_eq!(a.to_bits(), b.to_bits(), "{full_losses:?} vs {resumed_losses:?}");
    }
}

#[test]
fn loading_into_wrong_architecture_names_the_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wrong.pfca");
    let model = tiny_model(AttentionKind::None);
    save_checkpoint(&model, &[], &TrainState::default(), &path).unwrap();

    // same layer names, different widths
    let mut other = Model::build(
        &ModelSpec::Classifier {
            depth: 18,
            classes: 4,
            stem: StemKind::Cifar,
            attention: AttentionKind::None,
            base_width: 4,
        },
        0,
    )
    .unwrap();
    let err = restore_into(&mut other, &path).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("stem.conv.weight"), "unexpected error: {msg}");
}

#[test]
fn pfca_training_never_creates_new_params() {
    let data = tiny_classify_data(16, 4);
    let cfg = tiny_classify_cfg(5, 0.02);
    let mut model = tiny_model(AttentionKind::pfca());
    let names_before: Vec<String> = model.store.iter().map(|e| e.name.clone()).collect();
    let count_before = model.store.trainable_count();
    let mut trainer = Trainer::new(&mut model, &data, &cfg).unwrap();
    while trainer.state.step < cfg.steps {
        trainer.step_once().unwrap();
    }
    let names_after: Vec<String> = model.store.iter().map(|e| e.name.clone()).collect();
    assert_eq!(names_before, names_after);
    assert_eq!(count_before, model.store.trainable_count());
}

#[test]
fn sr_task_rejects_cross_entropy() {
    let pairs = pfca_core::image::synth_sr(2, 16, 0);
    let data = TaskData::Sr {
        train: SrData::new(pairs.clone(), 8, false).unwrap(),
        eval: pairs,
        border: 1,
    };
    let cfg = TrainConfig {
        task: TaskKind::SuperResolution,
        optimizer: OptimizerCfg::Adam {
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.0,
        },
        schedule: Schedule::CosineRestarts {
            eta_min: 1e-7,
            period: 10,
        },
        lr0: 1e-3,
        steps_per_unit: 1,
        loss: LossCfg::CrossEntropy,
        batch_size: 2,
        steps: 2,
        eval_every: 10,
        seed: 0,
    };
    let mut model = Model::build(
        &ModelSpec::SuperRes {
            blocks: 1,
            width: 4,
            upscale: 4,
            attention: AttentionKind::None,
        },
        0,
    )
    .unwrap();
    assert!(Trainer::new(&mut model, &data, &cfg).is_err());
}

#[test]
fn smoothed_loss_is_nonincreasing_on_overfit_one_batch() {
    // batch size = dataset size, so every step sees the identical batch;
    // 20-step window means of the loss must not increase
    let data = tiny_classify_data(8, 4);
    let cfg = TrainConfig {
        batch_size: 8,
        ..tiny_classify_cfg(120, 0.02)
    };
    let mut model = tiny_model(AttentionKind::None);
    let mut trainer = Trainer::new(&mut model, &data, &cfg).unwrap();
    let mut losses = Vec::new();
    while trainer.state.step < cfg.steps {
        losses.push(trainer.step_once().unwrap().loss);
    }
    let window = 20;
    let means: Vec<f64> = losses
        .chunks(window)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    for pair in means.windows(2) {
        assert!(pair[1] <= pair[0], "smoothed loss increased: {means:?}");
    }
}
