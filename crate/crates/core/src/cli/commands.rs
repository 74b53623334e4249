//! Command bodies behind the CLI: cost reports, training runs, and
//! super-resolution evaluation.

use std::path::{Path, PathBuf};

use crate::attention::AttentionKind;
use crate::config::{DataCfg, RunConfig};
use crate::cost::{compare, count_flops, count_params, UnitBase};
use crate::error::{Error, Result};
use crate::image::{bicubic_resize, load_png, ImageRGB, PairedSample};
use crate::metrics;
use crate::models::{Model, ModelSpec, StemKind};
use crate::train::{load_checkpoint, save_checkpoint, ClassifyData, SrData, TaskData, Trainer};

/// Parses "NxCxHxW" into a shape.
pub fn parse_input_shape(s: &str) -> Result<crate::tensor::Shape> {
    let dims: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("bad input shape `{s}`, expected NxCxHxW")))?;
    if dims.len() != 4 {
        return Err(Error::Config(format!(
            "input shape `{s}` has {} dims, expected 4",
            dims.len()
        )));
    }
    crate::tensor::Shape::new(dims[0], dims[1], dims[2], dims[3])
}

pub fn parse_model_name(model: &str, attn: &str) -> Result<ModelSpec> {
    let attention = match attn {
        "none" => AttentionKind::None,
        "pfca" => AttentionKind::pfca(),
        "ca" => AttentionKind::ca(),
        "pa" => AttentionKind::Pa,
        other => return Err(Error::Config(format!("unknown attention `{other}`"))),
    };
    match model {
        "msrresnet" => Ok(ModelSpec::msrresnet(attention)),
        "resnet18" => Ok(ModelSpec::resnet(18, 1000, StemKind::ImageNet, attention)),
        "resnet50" => Ok(ModelSpec::resnet(50, 1000, StemKind::ImageNet, attention)),
        "resnet101" => Ok(ModelSpec::resnet(101, 1000, StemKind::ImageNet, attention)),
        other => Err(Error::Config(format!(
            "unknown model `{other}` (msrresnet, resnet18, resnet50, resnet101)"
        ))),
    }
}

pub struct CountArgs {
    pub model: String,
    pub attn: String,
    pub input: String,
    pub exclude_stem_head: bool,
    pub units: UnitBase,
    pub csv: bool,
    pub per_layer: bool,
}

fn giga(v: u64, base: UnitBase) -> f64 {
    v as f64 / base.giga()
}

pub fn cmd_count(args: &CountArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let spec = parse_model_name(&args.model, &args.attn)?;
    let input = parse_input_shape(&args.input)?;
    let model = Model::build(&spec, 0)?;
    let report = count_flops(&model, input)?;
    let brute = count_params(&model);

    if args.csv {
        writeln!(out, "layer,params,macs,elem_ops")?;
        for row in &report.rows {
            writeln!(out, "{},{},{},{}", row.name, row.params, row.macs, row.elem_ops)?;
        }
        writeln!(
            out,
            "total,{},{},{}",
            report.total_params, report.total_macs, report.total_elem_ops
        )?;
        return Ok(());
    }

    writeln!(out, "model: {}   input: {}", report.model, report.input)?;
    if args.per_layer {
        writeln!(out, "{:<28} {:>12} {:>14} {:>14}", "layer", "params", "MACs", "elem ops")?;
        for row in &report.rows {
            writeln!(
                out,
                "{:<28} {:>12} {:>14} {:>14}",
                row.name, row.params, row.macs, row.elem_ops
            )?;
        }
    }
    let (kname, gname) = match args.units {
        UnitBase::Decimal => ("K", "G"),
        UnitBase::Binary => ("Ki", "Gi"),
    };
    writeln!(
        out,
        "params: {} ({:.1} {kname} / {:.2} M{})",
        report.total_params,
        report.total_params as f64 / args.units.kilo(),
        report.total_params as f64 / args.units.mega(),
        if args.units == UnitBase::Binary { "i" } else { "" },
    )?;
    writeln!(
        out,
        "macs:   {} ({:.2} {gname} on {})",
        report.total_macs,
        giga(report.total_macs, args.units),
        report.input
    )?;
    writeln!(out, "elementwise ops (excluded from MAC total): {}", report.total_elem_ops)?;
    debug_assert_eq!(brute, report.total_params);
    if args.exclude_stem_head {
        let (p, m) = report.totals_excluding_stem_head();
        writeln!(
            out,
            "excluding stem+head: params {:.2} M{}, macs {:.2} {gname}",
            p as f64 / args.units.mega(),
            if args.units == UnitBase::Binary { "i" } else { "" },
            giga(m, args.units)
        )?;
    }
    if matches!(spec, ModelSpec::Classifier { .. }) && args.units == UnitBase::Decimal {
        writeln!(
            out,
            "note: published classification cost tables often use 1024-based units; \
             rerun with --units binary to compare against them"
        )?;
    }
    Ok(())
}

pub fn cmd_compare(
    models: &[(String, String)],
    input: &str,
    csv: bool,
    units: UnitBase,
    out: &mut dyn std::io::Write,
) -> Result<()> {
    let input = parse_input_shape(input)?;
    let built: Vec<Model> = models
        .iter()
        .map(|(m, a)| Model::build(&parse_model_name(m, a)?, 0))
        .collect::<Result<_>>()?;
    let refs: Vec<&Model> = built.iter().collect();
    let cmp = compare(&refs, input)?;
    if csv {
        write!(out, "{}", cmp.render_csv())?;
    } else {
        write!(out, "{}", cmp.render_table(units))?;
    }
    Ok(())
}

/// Builds the task dataset described by the config's data section.
pub fn build_task_data(data: &DataCfg, model: &ModelSpec) -> Result<TaskData> {
    match data {
        DataCfg::SynthClassification {
            n,
            classes,
            size,
            seed,
            eval_n,
        } => {
            let model_classes = match model {
                ModelSpec::Classifier { classes, .. } => *classes,
                _ => return Err(Error::Config("classification data needs a classifier".into())),
            };
            if model_classes != *classes {
                return Err(Error::Config(format!(
                    "data has {classes} classes but the model head has {model_classes}"
                )));
            }
            let samples = crate::image::synth_classification(*n, *classes, *size, *seed);
            let train = ClassifyData::from_samples(&samples, *classes)?;
            let eval = if *eval_n == 0 {
                ClassifyData::from_samples(&samples, *classes)?
            } else {
                let held = crate::image::synth_classification(*eval_n, *classes, *size, seed + 1);
                ClassifyData::from_samples(&held, *classes)?
            };
            Ok(TaskData::Classify { train, eval })
        }
        DataCfg::SynthSr {
            n,
            hr_size,
            seed,
            eval_n,
            eval_seed,
            hr_patch,
            augment,
            border,
        } => {
            let pairs = crate::image::synth_sr(*n, *hr_size, *seed);
            let eval = crate::image::synth_sr(*eval_n, *hr_size, *eval_seed);
            Ok(TaskData::Sr {
                train: SrData::new(pairs, *hr_patch, *augment)?,
                eval,
                border: *border,
            })
        }
        DataCfg::Cifar100 { dir, eval_n } => {
            let (train_split, test_split) = crate::image::load_cifar100(dir)?;
            let train_samples: Vec<_> = train_split.iter().collect();
            let eval_samples: Vec<_> = if *eval_n == 0 {
                test_split.iter().collect()
            } else {
                test_split.iter().take(*eval_n).collect()
            };
            Ok(TaskData::Classify {
                train: ClassifyData::from_samples(&train_samples, 100)?,
                eval: ClassifyData::from_samples(&eval_samples, 100)?,
            })
        }
        DataCfg::FolderSr {
            hr_dir,
            lr_dir,
            hr_patch,
            augment,
            border,
            eval_n,
        } => {
            let mut pairs = load_folder_pairs(hr_dir, lr_dir.as_deref())?;
            if pairs.len() <= *eval_n {
                return Err(Error::Data(format!(
                    "{} paired images cannot spare {eval_n} for evaluation",
                    pairs.len()
                )));
            }
            let eval = pairs.split_off(pairs.len() - eval_n);
            Ok(TaskData::Sr {
                train: SrData::new(pairs, *hr_patch, *augment)?,
                eval,
                border: *border,
            })
        }
    }
}

/// Filename-matched folder pairing; without an LR directory the LR member
/// is synthesized by bicubic ÷4.
fn load_folder_pairs(hr_dir: &Path, lr_dir: Option<&Path>) -> Result<Vec<PairedSample>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(hr_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Data(format!(
            "no PNG files in {}",
            hr_dir.display()
        )));
    }
    names
        .iter()
        .map(|hr_path| {
            let hr = load_png(hr_path)?;
            match lr_dir {
                Some(dir) => {
                    let lr_path = dir.join(hr_path.file_name().unwrap());
                    if !lr_path.exists() {
                        return Err(Error::Data(format!(
                            "no LR counterpart for {}",
                            hr_path.display()
                        )));
                    }
                    let lr = load_png(&lr_path)?;
                    if lr.h * 4 != hr.h || lr.w * 4 != hr.w {
                        return Err(Error::Data(format!(
                            "{}: LR {}x{} is not HR/4 of {}x{}",
                            lr_path.display(),
                            lr.h,
                            lr.w,
                            hr.h,
                            hr.w
                        )));
                    }
                    Ok(PairedSample { hr, lr })
                }
                None => PairedSample::from_hr(hr),
            }
        })
        .collect()
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let mut run = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        run.train.seed = seed;
    }
    let data = build_task_data(&run.data, &run.model)?;
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(
        args.out_dir.join("config.resolved"),
        run.resolved(run.train.seed),
    )?;

    let mut model = Model::build(&run.model, run.train.seed)?;
    let mut trainer = Trainer::new(&mut model, &data, &run.train)?;
    let log_path = args.out_dir.join("log.csv");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    use std::io::Write as _;
    writeln!(log, "step,lr,loss,metric")?;

    let best_path = args.out_dir.join("ckpt_best");
    let mut best: Option<f64> = None;
    while trainer.state.step < trainer.cfg.steps {
        let row = trainer.step_once()?;
        writeln!(log, "{}", row.csv())?;
        if let Some(m) = row.metric {
            writeln!(out, "step {:>6}  lr {:.3e}  loss {:.5}  metric {:.4}", row.step, row.lr, row.loss, m)?;
            if best.map_or(true, |b| m > b) {
                best = Some(m);
                let slots = trainer.optimizer.export_slots(&trainer.model.store);
                save_checkpoint(trainer.model, &slots, &trainer.state, &best_path)?;
            }
        }
    }
    log.flush()?;
    let slots = trainer.optimizer.export_slots(&trainer.model.store);
    save_checkpoint(
        trainer.model,
        &slots,
        &trainer.state,
        &args.out_dir.join("ckpt_final"),
    )?;
    if !best_path.exists() {
        std::fs::copy(args.out_dir.join("ckpt_final"), &best_path)?;
    }
    writeln!(
        out,
        "done: {} steps, final metric {}",
        trainer.state.step,
        trainer
            .state
            .best_metric
            .map_or("n/a".to_string(), |m| format!("{m:.4}"))
    )?;
    Ok(())
}

pub struct EvalSrArgs {
    pub checkpoint: PathBuf,
    pub hr_dir: PathBuf,
    pub lr_dir: Option<PathBuf>,
    pub border: usize,
}

pub fn cmd_eval_sr(args: &EvalSrArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let loaded = load_checkpoint(&args.checkpoint)?;
    let mut model = loaded.model;
    if !matches!(model.spec, ModelSpec::SuperRes { .. }) {
        return Err(Error::Config(
            "checkpoint does not hold a super-resolution model".into(),
        ));
    }
    let pairs = load_folder_pairs(&args.hr_dir, args.lr_dir.as_deref())?;
    let mut names: Vec<PathBuf> = std::fs::read_dir(&args.hr_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    names.sort();

    writeln!(
        out,
        "{:<24} {:>10} {:>8}   {:>10} {:>8}",
        "image", "psnr", "ssim", "bicubic", "ssim"
    )?;
    let mut sums = [0.0f64; 4];
    for (path, pair) in names.iter().zip(&pairs) {
        let pred = model.predict(&pair.lr.to_tensor()?, crate::tensor::Mode::Eval)?;
        let pred_img = ImageRGB::from_tensor(&pred, 0)?;
        let up = bicubic_resize(&pair.lr, pair.hr.h, pair.hr.w);

        let y_hr = pair.hr.to_y_plane().crop_border(args.border)?;
        let y_pred = pred_img.to_y_plane().crop_border(args.border)?;
        let y_up = up.to_y_plane().crop_border(args.border)?;

        let vals = [
            metrics::psnr(&y_pred, &y_hr, 255.0)?,
            metrics::ssim(&y_pred, &y_hr, 255.0)?,
            metrics::psnr(&y_up, &y_hr, 255.0)?,
            metrics::ssim(&y_up, &y_hr, 255.0)?,
        ];
        for (s, v) in sums.iter_mut().zip(&vals) {
            *s += v;
        }
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        writeln!(
            out,
            "{:<24} {:>10.4} {:>8.4}   {:>10.4} {:>8.4}",
            name, vals[0], vals[1], vals[2], vals[3]
        )?;
    }
    let n = pairs.len() as f64;
    writeln!(
        out,
        "{:<24} {:>10.4} {:>8.4}   {:>10.4} {:>8.4}",
        "mean",
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n
    )?;
    Ok(())
}
