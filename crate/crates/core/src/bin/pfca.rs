use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pfca_core::cli::{self, cmd_gradcheck, CountArgs, EvalSrArgs, GradCheckModule, TrainArgs};
use pfca_core::cost::UnitBase;

/// Channel-attention networks on a compact CPU engine: cost analysis,
/// desk-scale training, gradient checking, and super-resolution scoring.
#[derive(Parser)]
#[command(name = "pfca", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print parameter and MAC counts for one model
    Count(CountCli),
    /// Cost comparison table across several model/attention combinations
    Compare(CompareCli),
    /// Train from a run-config file into an output directory
    Train(TrainCli),
    /// Score a super-resolution checkpoint on a folder of images
    EvalSr(EvalSrCli),
    /// Check analytic gradients against central finite differences
    Gradcheck(GradcheckCli),
}

#[derive(Args)]
struct CountCli {
    /// msrresnet | resnet18 | resnet50 | resnet101
    #[arg(long)]
    model: String,
    /// none | pfca | ca | pa
    #[arg(long, default_value = "none")]
    attn: String,
    /// Input shape as NxCxHxW, e.g. 1x3x256x256
    #[arg(long)]
    input: String,
    /// Also print totals with the stem and classifier head excluded
    #[arg(long, value_name = "stem,head")]
    exclude: Option<String>,
    /// Unit base for the human-readable figures
    #[arg(long, default_value = "decimal", value_parser = parse_units)]
    units: UnitBase,
    /// Emit machine-readable CSV rows instead of the aligned table
    #[arg(long)]
    csv: bool,
    /// Print the per-layer breakdown
    #[arg(long)]
    per_layer: bool,
}

#[derive(Args)]
struct CompareCli {
    /// Comma-separated model:attn entries, e.g. msrresnet:none,msrresnet:pfca
    #[arg(long)]
    models: String,
    #[arg(long)]
    input: String,
    #[arg(long)]
    csv: bool,
    #[arg(long, default_value = "decimal", value_parser = parse_units)]
    units: UnitBase,
}

#[derive(Args)]
struct TrainCli {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalSrCli {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of HR PNG images
    #[arg(long)]
    hr: PathBuf,
    /// Directory of LR PNGs (filename-matched); synthesized by bicubic /4
    /// when absent
    #[arg(long)]
    lr: Option<PathBuf>,
    /// Border crop in pixels before computing Y-channel metrics
    #[arg(long, default_value_t = 4)]
    border: usize,
}

#[derive(Args)]
struct GradcheckCli {
    /// all | ops | attention | blocks | models
    #[arg(long, default_value = "all")]
    module: String,
}

fn parse_units(s: &str) -> Result<UnitBase, String> {
    match s {
        "decimal" => Ok(UnitBase::Decimal),
        "binary" => Ok(UnitBase::Binary),
        other => Err(format!("unknown unit base `{other}` (decimal, binary)")),
    }
}

fn run() -> i32 {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Count(args) => {
            let exclude_stem_head = match args.exclude.as_deref() {
                None => false,
                Some("stem,head") | Some("head,stem") => true,
                Some(other) => {
                    eprintln!("error: --exclude supports `stem,head`, got `{other}`");
                    return cli::EXIT_USAGE;
                }
            };
            cli::cmd_count(
                &CountArgs {
                    model: args.model,
                    attn: args.attn,
                    input: args.input,
                    exclude_stem_head,
                    units: args.units,
                    csv: args.csv,
                    per_layer: args.per_layer,
                },
                &mut stdout,
            )
        }
        Command::Compare(args) => {
            let mut models = Vec::new();
            for entry in args.models.split(',') {
                match entry.split_once(':') {
                    Some((m, a)) => models.push((m.to_string(), a.to_string())),
                    None => models.push((entry.to_string(), "none".to_string())),
                }
            }
            cli::cmd_compare(&models, &args.input, args.csv, args.units, &mut stdout)
        }
        Command::Train(args) => cli::cmd_train(
            &TrainArgs {
                config: args.config,
                out_dir: args.out,
                seed: args.seed,
            },
            &mut stdout,
        ),
        Command::EvalSr(args) => cli::cmd_eval_sr(
            &EvalSrArgs {
                checkpoint: args.checkpoint,
                hr_dir: args.hr,
                lr_dir: args.lr,
                border: args.border,
            },
            &mut stdout,
        ),
        Command::Gradcheck(args) => {
            let Some(module) = GradCheckModule::parse(&args.module) else {
                eprintln!(
                    "error: unknown module `{}` (all, ops, attention, blocks, models)",
                    args.module
                );
                return cli::EXIT_USAGE;
            };
            return match cmd_gradcheck(module, &mut stdout) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            };
        }
    };
    match result {
        Ok(()) => cli::EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            cli::exit_code_for(&e)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run() as u8)
}
