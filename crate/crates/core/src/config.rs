//! Plain-text run configuration: `[model]`, `[train]`, and `[data]`
//! sections of `key = value` lines. Unknown keys and sections are errors;
//! a run is fully specified by one file plus the seed, and the resolved
//! form is echoed into the run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::attention::{AttentionKind, DEFAULT_CA_REDUCTION, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::models::{ModelSpec, StemKind};
use crate::train::{LossCfg, OptimizerCfg, Schedule, TaskKind, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DataCfg {
    SynthClassification {
        n: usize,
        classes: usize,
        size: usize,
        seed: u64,
        eval_n: usize,
    },
    SynthSr {
        n: usize,
        hr_size: usize,
        seed: u64,
        eval_n: usize,
        eval_seed: u64,
        hr_patch: usize,
        augment: bool,
        border: usize,
    },
    Cifar100 {
        dir: PathBuf,
        eval_n: usize,
    },
    FolderSr {
        hr_dir: PathBuf,
        lr_dir: Option<PathBuf>,
        hr_patch: usize,
        augment: bool,
        border: usize,
        eval_n: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub data: DataCfg,
}

struct Section {
    name: String,
    entries: BTreeMap<String, String>,
    used: std::cell::RefCell<Vec<String>>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&str> {
        if let Some(v) = self.entries.get(key) {
            self.used.borrow_mut().push(key.to_string());
            Some(v.as_str())
        } else {
            None
        }
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            Error::Config(format!("[{}] is missing required key `{key}`", self.name))
        })
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<T>().map_err(|_| {
                Error::Config(format!("[{}] key `{key}` has invalid value `{v}`", self.name))
            }),
        }
    }

    fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require(key)?;
        v.parse::<T>().map_err(|_| {
            Error::Config(format!("[{}] key `{key}` has invalid value `{v}`", self.name))
        })
    }

    fn check_all_used(&self) -> Result<()> {
        let used = self.used.borrow();
        for key in self.entries.keys() {
            if !used.contains(key) {
                return Err(Error::Config(format!(
                    "[{}] has unknown key `{key}`",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !matches!(name.as_str(), "model" | "train" | "data") {
                return Err(Error::Config(format!(
                    "line {}: unknown section [{name}]",
                    lineno + 1
                )));
            }
            sections.entry(name.clone()).or_insert_with(|| Section {
                name: name.clone(),
                entries: BTreeMap::new(),
                used: Default::default(),
            });
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{line}`",
                lineno + 1
            )));
        };
        let section = current
            .as_ref()
            .ok_or_else(|| Error::Config(format!("line {}: key before any section", lineno + 1)))?;
        let prev = sections.get_mut(section).unwrap().entries.insert(
            key.trim().to_string(),
            value.trim().to_string(),
        );
        if prev.is_some() {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{}`",
                lineno + 1,
                key.trim()
            )));
        }
    }
    Ok(sections)
}

fn parse_attention(section: &Section) -> Result<AttentionKind> {
    let lambda: f64 = section.parse("lambda", DEFAULT_LAMBDA)?;
    let reduction: usize = section.parse("ca_reduction", DEFAULT_CA_REDUCTION)?;
    match section.parse::<String>("attention", "none".into())?.as_str() {
        "none" => Ok(AttentionKind::None),
        "pfca" => Ok(AttentionKind::Pfca { lambda }),
        "ca" => Ok(AttentionKind::Ca { reduction }),
        "pa" => Ok(AttentionKind::Pa),
        other => Err(Error::Config(format!("unknown attention kind `{other}`"))),
    }
}

fn parse_model(section: &Section) -> Result<ModelSpec> {
    let attention = parse_attention(section)?;
    let family: String = section.parse_required("family")?;
    let spec = match family.as_str() {
        "msrresnet" => ModelSpec::SuperRes {
            blocks: section.parse("blocks", 16usize)?,
            width: section.parse("width", 64usize)?,
            upscale: section.parse("upscale", 4usize)?,
            attention,
        },
        "resnet18" | "resnet50" | "resnet101" => {
            let depth: usize = family[6..].parse().unwrap();
            let stem = match section.parse::<String>("stem", "imagenet".into())?.as_str() {
                "imagenet" => StemKind::ImageNet,
                "cifar" => StemKind::Cifar,
                other => return Err(Error::Config(format!("unknown stem `{other}`"))),
            };
            ModelSpec::Classifier {
                depth,
                classes: section.parse("classes", 1000usize)?,
                stem,
                attention,
                base_width: section.parse("base_width", 64usize)?,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown model family `{other}` (msrresnet, resnet18, resnet50, resnet101)"
            )))
        }
    };
    section.check_all_used()?;
    Ok(spec)
}

fn parse_train(section: &Section) -> Result<TrainConfig> {
    let task = match section.parse_required::<String>("task")?.as_str() {
        "classification" => TaskKind::Classification,
        "super_resolution" => TaskKind::SuperResolution,
        other => return Err(Error::Config(format!("unknown task `{other}`"))),
    };
    let optimizer = match section.parse::<String>("optimizer", "sgd".into())?.as_str() {
        "sgd" => OptimizerCfg::Sgd {
            momentum: section.parse("momentum", 0.9)?,
            weight_decay: section.parse("weight_decay", 0.0)?,
        },
        "adam" => OptimizerCfg::Adam {
            beta1: section.parse("beta1", 0.9)?,
            beta2: section.parse("beta2", 0.99)?,
            weight_decay: section.parse("weight_decay", 0.0)?,
        },
        other => return Err(Error::Config(format!("unknown optimizer `{other}`"))),
    };
    let schedule = match section.parse::<String>("schedule", "step".into())?.as_str() {
        "step" => Schedule::StepDecay {
            period: section.parse("period", 30u64)?,
            factor: section.parse("factor", 0.1)?,
        },
        "multistep" => {
            let raw: String = section.parse_required("milestones")?;
            let milestones = raw
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Config(format!("bad milestones `{raw}`")))?;
            Schedule::MultiStep {
                milestones,
                factor: section.parse("factor", 0.2)?,
            }
        }
        "cosine_restarts" => Schedule::CosineRestarts {
            eta_min: section.parse("eta_min", 1e-7)?,
            period: section.parse_required("period")?,
        },
        other => return Err(Error::Config(format!("unknown schedule `{other}`"))),
    };
    let loss = match section.parse::<String>("loss", "cross_entropy".into())?.as_str() {
        "cross_entropy" => LossCfg::CrossEntropy,
        "l1" => LossCfg::L1,
        other => return Err(Error::Config(format!("unknown loss `{other}`"))),
    };
    let cfg = TrainConfig {
        task,
        optimizer,
        schedule,
        lr0: section.parse("lr", 0.1)?,
        steps_per_unit: section.parse("steps_per_unit", 1u64)?,
        loss,
        batch_size: section.parse("batch", 32usize)?,
        steps: section.parse_required("steps")?,
        eval_every: section.parse("eval_every", 100u64)?,
        seed: section.parse("seed", 0u64)?,
    };
    section.check_all_used()?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_data(section: &Section, task: TaskKind) -> Result<DataCfg> {
    let kind: String = section.parse_required("kind")?;
    let cfg = match (kind.as_str(), task) {
        ("synth_classification", TaskKind::Classification) => DataCfg::SynthClassification {
            n: section.parse("n", 64usize)?,
            classes: section.parse("classes", 8usize)?,
            size: section.parse("size", 16usize)?,
            seed: section.parse("seed", 11u64)?,
            eval_n: section.parse("eval_n", 0usize)?,
        },
        ("synth_sr", TaskKind::SuperResolution) => DataCfg::SynthSr {
            n: section.parse("n", 32usize)?,
            hr_size: section.parse("hr_size", 64usize)?,
            seed: section.parse("seed", 21u64)?,
            eval_n: section.parse("eval_n", 8usize)?,
            eval_seed: section.parse("eval_seed", 9001u64)?,
            hr_patch: section.parse("hr_patch", 32usize)?,
            augment: section.parse("augment", true)?,
            border: section.parse("border", 4usize)?,
        },
        ("cifar100", TaskKind::Classification) => DataCfg::Cifar100 {
            dir: PathBuf::from(section.parse_required::<String>("dir")?),
            eval_n: section.parse("eval_n", 0usize)?,
        },
        ("folder_sr", TaskKind::SuperResolution) => DataCfg::FolderSr {
            hr_dir: PathBuf::from(section.parse_required::<String>("hr_dir")?),
            lr_dir: section.get("lr_dir").map(PathBuf::from),
            hr_patch: section.parse("hr_patch", 256usize)?,
            augment: section.parse("augment", true)?,
            border: section.parse("border", 4usize)?,
            eval_n: section.parse("eval_n", 8usize)?,
        },
        (other, _) => {
            return Err(Error::Config(format!(
                "data kind `{other}` does not fit the configured task"
            )))
        }
    };
    section.check_all_used()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let sections = split_sections(text)?;
        let need = |name: &str| {
            sections
                .get(name)
                .ok_or_else(|| Error::Config(format!("missing [{name}] section")))
        };
        let model = parse_model(need("model")?)?;
        let train = parse_train(need("train")?)?;
        let data = parse_data(need("data")?, train.task)?;
        match (&model, train.task) {
            (ModelSpec::Classifier { .. }, TaskKind::Classification) => {}
            (ModelSpec::SuperRes { .. }, TaskKind::SuperResolution) => {}
            _ => {
                return Err(Error::Config(
                    "model family and training task disagree".into(),
                ))
            }
        }
        Ok(RunConfig { model, train, data })
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    /// Canonical text form, written into the run directory so a run is
    /// reproducible from its artifacts alone.
    pub fn resolved(&self, seed: u64) -> String {
        let mut out = String::from("[model]\n");
        match &self.model {
            ModelSpec::Classifier {
                depth,
                classes,
                stem,
                attention,
                base_width,
            } => {
                out.push_str(&format!("family = resnet{depth}\n"));
                out.push_str(&format!("classes = {classes}\n"));
                out.push_str(&format!(
                    "stem = {}\n",
                    match stem {
                        StemKind::ImageNet => "imagenet",
                        StemKind::Cifar => "cifar",
                    }
                ));
                out.push_str(&attention_lines(attention));
                out.push_str(&format!("base_width = {base_width}\n"));
            }
            ModelSpec::SuperRes {
                blocks,
                width,
                upscale,
                attention,
            } => {
                out.push_str("family = msrresnet\n");
                out.push_str(&format!("blocks = {blocks}\n"));
                out.push_str(&format!("width = {width}\n"));
                out.push_str(&format!("upscale = {upscale}\n"));
                out.push_str(&attention_lines(attention));
            }
        }
        out.push_str("\n[train]\n");
        let t = &self.train;
        out.push_str(&format!(
            "task = {}\n",
            match t.task {
                TaskKind::Classification => "classification",
                TaskKind::SuperResolution => "super_resolution",
            }
        ));
        match &t.optimizer {
            OptimizerCfg::Sgd { momentum, weight_decay } => {
                out.push_str("optimizer = sgd\n");
                out.push_str(&format!("momentum = {momentum}\n"));
                out.push_str(&format!("weight_decay = {weight_decay}\n"));
            }
            OptimizerCfg::Adam { beta1, beta2, weight_decay } => {
                out.push_str("optimizer = adam\n");
                out.push_str(&format!("beta1 = {beta1}\n"));
                out.push_str(&format!("beta2 = {beta2}\n"));
                out.push_str(&format!("weight_decay = {weight_decay}\n"));
            }
        }
        match &t.schedule {
            Schedule::StepDecay { period, factor } => {
                out.push_str("schedule = step\n");
                out.push_str(&format!("period = {period}\n"));
                out.push_str(&format!("factor = {factor}\n"));
            }
            Schedule::MultiStep { milestones, factor } => {
                out.push_str("schedule = multistep\n");
                let ms: Vec<String> = milestones.iter().map(|m| m.to_string()).collect();
                out.push_str(&format!("milestones = {}\n", ms.join(",")));
                out.push_str(&format!("factor = {factor}\n"));
            }
            Schedule::CosineRestarts { eta_min, period } => {
                out.push_str("schedule = cosine_restarts\n");
                out.push_str(&format!("eta_min = {eta_min}\n"));
                out.push_str(&format!("period = {period}\n"));
            }
        }
        out.push_str(&format!("lr = {}\n", t.lr0));
        out.push_str(&format!("steps_per_unit = {}\n", t.steps_per_unit));
        out.push_str(&format!(
            "loss = {}\n",
            match t.loss {
                LossCfg::CrossEntropy => "cross_entropy",
                LossCfg::L1 => "l1",
            }
        ));
        out.push_str(&format!("batch = {}\n", t.batch_size));
        out.push_str(&format!("steps = {}\n", t.steps));
        out.push_str(&format!("eval_every = {}\n", t.eval_every));
        out.push_str(&format!("seed = {seed}\n"));
        out.push_str("\n[data]\n");
        match &self.data {
            DataCfg::SynthClassification { n, classes, size, seed, eval_n } => {
                out.push_str("kind = synth_classification\n");
                out.push_str(&format!("n = {n}\nclasses = {classes}\nsize = {size}\n"));
                out.push_str(&format!("seed = {seed}\neval_n = {eval_n}\n"));
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
                out.push_str("kind = synth_sr\n");
                out.push_str(&format!("n = {n}\nhr_size = {hr_size}\nseed = {seed}\n"));
                out.push_str(&format!("eval_n = {eval_n}\neval_seed = {eval_seed}\n"));
                out.push_str(&format!(
                    "hr_patch = {hr_patch}\naugment = {augment}\nborder = {border}\n"
                ));
            }
            DataCfg::Cifar100 { dir, eval_n } => {
                out.push_str("kind = cifar100\n");
                out.push_str(&format!("dir = {}\neval_n = {eval_n}\n", dir.display()));
            }
            DataCfg::FolderSr {
                hr_dir,
                lr_dir,
                hr_patch,
                augment,
                border,
                eval_n,
            } => {
                out.push_str("kind = folder_sr\n");
                out.push_str(&format!("hr_dir = {}\n", hr_dir.display()));
                if let Some(lr) = lr_dir {
                    out.push_str(&format!("lr_dir = {}\n", lr.display()));
                }
                out.push_str(&format!(
                    "hr_patch = {hr_patch}\naugment = {augment}\nborder = {border}\neval_n = {eval_n}\n"
                ));
            }
        }
        out
    }
}

fn attention_lines(attention: &AttentionKind) -> String {
    match attention {
        AttentionKind::None => "attention = none\n".to_string(),
        AttentionKind::Pfca { lambda } => {
            format!("attention = pfca\nlambda = {lambda}\n")
        }
        AttentionKind::Ca { reduction } => {
            format!("attention = ca\nca_reduction = {reduction}\n")
        }
        AttentionKind::Pa => "attention = pa\n".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "
[model]
family = msrresnet
blocks = 4
width = 32
attention = pfca

[train]
task = super_resolution
optimizer = adam
schedule = cosine_restarts
period = 2000
lr = 1e-3
loss = l1
batch = 8
steps = 2000

[data]
kind = synth_sr
n = 32
";

    #[test]
    fn parses_a_valid_config() {
        let cfg = RunConfig::parse(GOOD).unwrap();
        match cfg.model {
            ModelSpec::SuperRes { blocks, width, .. } => {
                assert_eq!((blocks, width), (4, 32));
            }
            _ => panic!("wrong family"),
        }
        assert_eq!(cfg.train.steps, 2000);
        match cfg.data {
            DataCfg::SynthSr { n, hr_patch, .. } => {
                assert_eq!(n, 32);
                assert_eq!(hr_patch, 32);
            }
            _ => panic!("wrong data kind"),
        }
    }

    #[test]
    fn unknown_key_is_an_error() {
        let bad = GOOD.replace("width = 32", "widht = 32");
        let err = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(err.contains("widht"), "{err}");
    }

    #[test]
    fn unknown_section_and_missing_section_error() {
        assert!(RunConfig::parse("[banana]\nx = 1").is_err());
        assert!(RunConfig::parse("[model]\nfamily = msrresnet").is_err());
    }

    #[test]
    fn task_model_mismatch_is_an_error() {
        let bad = GOOD.replace("family = msrresnet", "family = resnet18");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn resolved_round_trips() {
        let cfg = RunConfig::parse(GOOD).unwrap();
        let echoed = cfg.resolved(7);
        let again = RunConfig::parse(&echoed).unwrap();
        assert_eq!(again.train.steps, cfg.train.steps);
        assert_eq!(again.train.seed, 7);
        assert_eq!(again.data, cfg.data);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = GOOD.replace("blocks = 4", "# a comment\n\nblocks = 4 # trailing");
        let cfg = RunConfig::parse(&text).unwrap();
        match cfg.model {
            ModelSpec::SuperRes { blocks, .. } => assert_eq!(blocks, 4),
            _ => unreachable!(),
        }
    }
}
