//! End-to-end checks of the `pfca` binary: flags, output, exit codes, and
//! byte-for-byte reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pfca() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pfca"))
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn bundled_configs_parse() {
    for name in [
        "desk_classify.cfg",
        "desk_sr.cfg",
        "imagenet_resnet18.cfg",
        "cifar100_resnet18.cfg",
        "div2k_msrresnet.cfg",
    ] {
        pfca_core::config::RunConfig::load(&repo_config(name))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn count_reports_reference_figures() {
    let out = pfca()
        .args(["count", "--model", "msrresnet", "--attn", "pfca", "--input", "1x3x256x256"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("1517571"), "{text}");
    assert!(text.contains("1517.6 K"), "{text}");
    assert!(text.contains("166.21 G"), "{text}");

    let out = pfca()
        .args(["count", "--model", "msrresnet", "--attn", "pa", "--input", "1x3x256x256"])
        .output()
        .unwrap();
    let text = stdout(&out);
    assert!(text.contains("1584.1 K"), "{text}");
}

#[test]
fn count_resnet18_prints_both_conventions() {
    let out = pfca()
        .args([
            "count",
            "--model",
            "resnet18",
            "--input",
            "1x3x224x224",
            "--exclude",
            "stem,head",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("11689512"), "{text}");
    assert!(text.contains("11.69 M"), "{text}");
    assert!(text.contains("excluding stem+head"), "{text}");
    assert!(text.contains("note:"), "{text}");

    let binary = pfca()
        .args(["count", "--model", "resnet18", "--input", "1x3x224x224", "--units", "binary"])
        .output()
        .unwrap();
    let text = stdout(&binary);
    assert!(text.contains("11.15 Mi"), "{text}");
    assert!(text.contains("1.69 Gi"), "{text}");
}

#[test]
fn count_csv_is_machine_readable() {
    let out = pfca()
        .args(["count", "--model", "msrresnet", "--input", "1x3x64x64", "--csv"])
        .output()
        .unwrap();
    let text = stdout(&out);
    assert!(text.starts_with("layer,params,macs,elem_ops\n"));
    assert!(text.lines().last().unwrap().starts_with("total,1517571,"));
}

#[test]
fn unknown_model_and_bad_shape_exit_2() {
    let out = pfca()
        .args(["count", "--model", "vgg", "--input", "1x3x8x8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = pfca()
        .args(["count", "--model", "resnet18", "--input", "3x8x8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // clap usage errors share the same code
    let out = pfca().args(["count"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_emits_deltas() {
    let out = pfca()
        .args([
            "compare",
            "--models",
            "msrresnet:none,msrresnet:pa,msrresnet:ca,msrresnet:pfca",
            "--input",
            "1x3x64x64",
            "--csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].contains(",0,0"));
    assert!(lines[2].contains("66560"), "{text}");
    assert!(lines[3].contains("9280"), "{text}");
    assert!(lines[4].ends_with(",0,0"), "{text}");
}

#[test]
fn gradcheck_attention_checks_exactly_three_operators() {
    let out = pfca()
        .args(["gradcheck", "--module", "attention"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("3 operators checked"), "{text}");
    for op in ["pfca", "ca", "pa"] {
        assert!(text.lines().any(|l| l.starts_with(op)), "{text}");
    }
}

#[test]
fn gradcheck_rejects_unknown_module() {
    let out = pfca()
        .args(["gradcheck", "--module", "everything"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_missing_config_exits_3_and_bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = pfca()
        .args(["train", "--config", "/nonexistent.cfg", "--out"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[model]\nfamily = msrresnet\nbogus_key = 1\n").unwrap();
    let out = pfca()
        .args(["train", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("run2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

/// A miniature training config that runs in a couple of seconds.
fn tiny_train_cfg() -> String {
    "
[model]
family = msrresnet
blocks = 1
width = 8
attention = pfca

[train]
task = super_resolution
optimizer = adam
schedule = cosine_restarts
period = 12
lr = 1e-3
loss = l1
batch = 2
steps = 12
eval_every = 6
seed = 5

[data]
kind = synth_sr
n = 4
hr_size = 32
seed = 3
eval_n = 2
eval_seed = 4
hr_patch = 16
border = 2
"
    .to_string()
}

#[test]
fn train_writes_run_directory_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, tiny_train_cfg()).unwrap();

    let run = |out_dir: &Path| {
        let out = pfca()
            .args(["train", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .args(["--seed", "7"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a);
    run(&b);

    for artifact in ["config.resolved", "log.csv", "ckpt_final", "ckpt_best"] {
        let pa = a.join(artifact);
        let pb = b.join(artifact);
        assert!(pa.exists(), "{artifact} missing");
        let ba = std::fs::read(&pa).unwrap();
        let bb = std::fs::read(&pb).unwrap();
        assert_eq!(ba, bb, "{artifact} differs between identical runs");
    }
    let log = std::fs::read_to_string(a.join("log.csv")).unwrap();
    assert!(log.starts_with("step,lr,loss,metric\n"));
    assert_eq!(log.lines().count(), 13); // header + 12 steps
    let resolved = std::fs::read_to_string(a.join("config.resolved")).unwrap();
    assert!(resolved.contains("seed = 7"), "{resolved}");
}

#[test]
fn eval_sr_scores_checkpoint_against_folder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, tiny_train_cfg()).unwrap();
    let run_dir = dir.path().join("run");
    let out = pfca()
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // folder of HR images; LR synthesized by bicubic /4
    let hr_dir = dir.path().join("hr");
    std::fs::create_dir(&hr_dir).unwrap();
    for (i, pair) in pfca_core::image::synth_sr(3, 32, 77).iter().enumerate() {
        pfca_core::image::save_png(&hr_dir.join(format!("img{i}.png")), &pair.hr).unwrap();
    }
    let out = pfca()
        .args(["eval-sr", "--checkpoint"])
        .arg(run_dir.join("ckpt_final"))
        .arg("--hr")
        .arg(&hr_dir)
        .args(["--border", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("img0.png"), "{text}");
    assert!(text.contains("mean"), "{text}");
    // four numeric columns per row: psnr/ssim for the model and the
    // bicubic reference
    let mean_line = text.lines().find(|l| l.starts_with("mean")).unwrap();
    let nums: Vec<f64> = mean_line
        .split_whitespace()
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(nums.len(), 4);
    assert!(nums[0] > 5.0 && nums[2] > 5.0);

    let out = pfca()
        .args(["eval-sr", "--checkpoint"])
        .arg(run_dir.join("ckpt_final"))
        .arg("--hr")
        .arg(dir.path().join("empty"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
