//! Cost-analysis oracles: exact parameter counts, MAC accounting, and the
//! reference-table reproductions.

use pfca_core::attention::AttentionKind;
use pfca_core::blocks::{BlockKind, BlockSpec, SrBlock};
use pfca_core::cost::{compare, count_flops, count_params, UnitBase};
use pfca_core::models::{Model, ModelSpec, StemKind};
use pfca_core::tensor::Shape;

fn msr(attn: AttentionKind) -> Model {
    Model::build(&ModelSpec::msrresnet(attn), 0).unwrap()
}

#[test]
fn msrresnet_param_counts_match_reference_table() {
    assert_eq!(count_params(&msr(AttentionKind::None)), 1_517_571);
    assert_eq!(count_params(&msr(AttentionKind::pfca())), 1_517_571);
    assert_eq!(count_params(&msr(AttentionKind::ca())), 1_526_851);
    assert_eq!(count_params(&msr(AttentionKind::Pa)), 1_584_131);
}

#[test]
fn msrresnet_macs_on_256_input() {
    let input = Shape::new(1, 3, 256, 256).unwrap();
    let report = count_flops(&msr(AttentionKind::None), input).unwrap();
    let g = report.total_macs as f64 / 1e9;
    // reference figure 166.36 G under the MAC convention
    assert!((g - 166.36).abs() / 166.36 < 0.005, "{g} G");
    // trunk alone: 32 convs of 64·64·9 MACs per output position at 256²
    let trunk: u64 = report
        .rows
        .iter()
        .filter(|r| {
            r.name.starts_with("body.") && (r.name.contains(".conv1") || r.name.contains(".conv2"))
        })
        .map(|r| r.macs)
        .sum();
    assert_eq!(trunk, 32 * 36_864 * 65_536);
}

#[test]
fn pa_macs_delta_is_the_1x1_conv() {
    let input = Shape::new(1, 3, 256, 256).unwrap();
    let base = count_flops(&msr(AttentionKind::None), input).unwrap();
    let pa = count_flops(&msr(AttentionKind::Pa), input).unwrap();
    // 16 blocks × 64·64 MACs per position at 256²
    assert_eq!(
        pa.total_macs - base.total_macs,
        16 * 64 * 64 * 65_536u64
    );
    let g = pa.total_macs as f64 / 1e9;
    assert!((g - 170.66).abs() / 170.66 < 0.005, "{g} G");
}

#[test]
fn one_by_one_conv_on_unit_input_is_one_mac() {
    // a 1×1 conv, Cin=Cout=1, on a 1×1 input contributes exactly 1 MAC
    let spec = ModelSpec::SuperRes {
        blocks: 1,
        width: 1,
        upscale: 4,
        attention: AttentionKind::Pa,
    };
    let model = Model::build(&spec, 0).unwrap();
    let report = count_flops(&model, Shape::new(1, 3, 1, 1).unwrap()).unwrap();
    let pa_row = report
        .rows
        .iter()
        .find(|r| r.name.contains("att.pa"))
        .unwrap();
    assert_eq!(pa_row.macs, 1);
}

#[test]
fn resnet_params_match_reference_table_in_binary_units() {
    let mi = UnitBase::Binary.mega();
    let cases: [(usize, f64, f64); 3] = [
        (18, 11.15, 11.23),
        (50, 24.37, 26.79),
        (101, 42.49, 47.04),
    ];
    for (depth, plain_m, ca_m) in cases {
        let plain = Model::build(
            &ModelSpec::resnet(depth, 1000, StemKind::ImageNet, AttentionKind::None),
            0,
        )
        .unwrap();
        let ca = Model::build(
            &ModelSpec::resnet(depth, 1000, StemKind::ImageNet, AttentionKind::ca()),
            0,
        )
        .unwrap();
        let pfca = Model::build(
            &ModelSpec::resnet(depth, 1000, StemKind::ImageNet, AttentionKind::pfca()),
            0,
        )
        .unwrap();
        let p = count_params(&plain) as f64 / mi;
        let c = count_params(&ca) as f64 / mi;
        assert!((p - plain_m).abs() < 0.005, "resnet{depth}: {p:.3} vs {plain_m}");
        assert!((c - ca_m).abs() < 0.005, "resnet{depth}+ca: {c:.3} vs {ca_m}");
        assert_eq!(count_params(&pfca), count_params(&plain));
    }
}

#[test]
fn resnet18_exact_canonical_param_count() {
    let model = Model::build(
        &ModelSpec::resnet(18, 1000, StemKind::ImageNet, AttentionKind::None),
        0,
    )
    .unwrap();
    assert_eq!(count_params(&model), 11_689_512);
}

#[test]
fn resnet50_ca_delta_is_about_2_4_binary_m() {
    let plain = Model::build(
        &ModelSpec::resnet(50, 1000, StemKind::ImageNet, AttentionKind::None),
        0,
    )
    .unwrap();
    let ca = Model::build(
        &ModelSpec::resnet(50, 1000, StemKind::ImageNet, AttentionKind::ca()),
        0,
    )
    .unwrap();
    let delta = (count_params(&ca) - count_params(&plain)) as f64 / UnitBase::Binary.mega();
    assert!((2.4..2.5).contains(&delta), "{delta}");
}

#[test]
fn analyzer_totals_equal_brute_force_store_walk() {
    let input = Shape::new(1, 3, 64, 64).unwrap();
    let specs = [
        ModelSpec::resnet(18, 100, StemKind::Cifar, AttentionKind::ca()),
        ModelSpec::resnet(50, 10, StemKind::ImageNet, AttentionKind::pfca()),
        ModelSpec::SuperRes {
            blocks: 3,
            width: 16,
            upscale: 4,
            attention: AttentionKind::Pa,
        },
    ];
    for spec in specs {
        let model = Model::build(&spec, 1).unwrap();
        let report = count_flops(&model, input).unwrap();
        assert_eq!(
            report.total_params,
            count_params(&model),
            "{}",
            spec.describe()
        );
    }
}

#[test]
fn conv_macs_are_input_shape_homogeneous() {
    // fully-convolutional model: doubling H and W quadruples conv MACs
    let model = msr(AttentionKind::pfca());
    let small = count_flops(&model, Shape::new(1, 3, 32, 32).unwrap()).unwrap();
    let big = count_flops(&model, Shape::new(1, 3, 64, 64).unwrap()).unwrap();
    assert_eq!(big.total_macs, 4 * small.total_macs);
}

#[test]
fn pfca_changes_no_param_count_across_model_matrix() {
    let input = Shape::new(1, 3, 32, 32).unwrap();
    for depth in [18usize, 50, 101] {
        for stem in [StemKind::ImageNet, StemKind::Cifar] {
            let plain = Model::build(
                &ModelSpec::resnet(depth, 100, stem, AttentionKind::None),
                3,
            )
            .unwrap();
            let pfca = Model::build(
                &ModelSpec::resnet(depth, 100, stem, AttentionKind::pfca()),
                3,
            )
            .unwrap();
            assert_eq!(count_params(&plain), count_params(&pfca));
            let rp = count_flops(&plain, input).unwrap();
            let rf = count_flops(&pfca, input).unwrap();
            assert_eq!(rp.total_macs, rf.total_macs);
            assert!(rf.total_elem_ops > rp.total_elem_ops);
        }
    }
    let plain = msr(AttentionKind::None);
    let pfca = msr(AttentionKind::pfca());
    assert_eq!(count_params(&plain), count_params(&pfca));
}

#[test]
fn sr_block_param_arithmetic() {
    let plain = SrBlock::new("b", 64, AttentionKind::None);
    assert_eq!(plain.param_count(), 73_856);
    let with_pfca = SrBlock::new("b", 64, AttentionKind::pfca());
    assert_eq!(with_pfca.param_count(), 73_856);
    let with_ca = SrBlock::new("b", 64, AttentionKind::ca());
    assert_eq!(with_ca.param_count(), 73_856 + 580);
    let with_pa = SrBlock::new("b", 64, AttentionKind::Pa);
    assert_eq!(with_pa.param_count(), 73_856 + 4_160);
}

#[test]
fn bottleneck_conv_param_arithmetic() {
    use pfca_core::blocks::BottleneckBlock;
    let spec = BlockSpec {
        kind: BlockKind::Bottleneck,
        in_channels: 256,
        out_channels: 256,
        stride: 1,
        attention: AttentionKind::None,
    };
    let block = BottleneckBlock::new("b", &spec).unwrap();
    let mut store = pfca_core::tensor::ParamStore::new();
    let mut rng = pfca_core::rng::Pcg32::new(0);
    block.init(&mut store, &mut rng).unwrap();
    let conv_params: u64 = store
        .iter()
        .filter(|e| e.trainable && e.name.contains("conv"))
        .map(|e| e.tensor.count() as u64)
        .sum();
    assert_eq!(conv_params, 256 * 64 + 64 * 64 * 9 + 64 * 256);

    // CA at r=16 on the expanded width adds 2·256·16 + 16 + 256
    let ca_spec = BlockSpec {
        attention: AttentionKind::ca(),
        ..spec
    };
    let ca_block = BottleneckBlock::new("b", &ca_spec).unwrap();
    let mut ca_store = pfca_core::tensor::ParamStore::new();
    ca_block.init(&mut ca_store, &mut rng).unwrap();
    assert_eq!(
        ca_store.trainable_count() - store.trainable_count(),
        2 * 256 * 16 + 16 + 256
    );
}

#[test]
fn compare_reports_table_deltas() {
    let input = Shape::new(1, 3, 256, 256).unwrap();
    let models = [
        msr(AttentionKind::None),
        msr(AttentionKind::Pa),
        msr(AttentionKind::ca()),
        msr(AttentionKind::pfca()),
    ];
    let refs: Vec<&Model> = models.iter().collect();
    let cmp = compare(&refs, input).unwrap();
    let deltas: Vec<i64> = cmp
        .entries
        .iter()
        .map(|e| e.total_params as i64 - cmp.entries[0].total_params as i64)
        .collect();
    assert_eq!(deltas, vec![0, 66_560, 9_280, 0]);

    let csv = cmp.render_csv();
    assert!(csv.lines().count() == 5);
    assert!(csv.contains("msrresnet+pfca,1517571,"));
    let table = cmp.render_table(UnitBase::Decimal);
    assert!(table.contains("1517.6"));
    assert!(table.contains("1584.1"));

    // single model: one row, zero deltas
    let single = compare(&refs[..1], input).unwrap();
    assert_eq!(single.entries.len(), 1);
    assert!(single.render_csv().lines().nth(1).unwrap().ends_with(",0,0"));
}
