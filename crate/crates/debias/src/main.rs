use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use debias::commands::{self, Layout};
use debias::config::ExperimentConfig;
use debias::error::{AppError, AppResult, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE};
use debias_core::model::BaselineKind;

#[derive(Parser)]
#[command(name = "debias", version, about = "Confound-skewed cough corpus, adversarial debiasing and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Desk-scale preset: 32x32 inputs, 2 blocks, 16 LSTM units, 60 epochs.
    #[arg(long)]
    toy: bool,
    /// Split scenario used by split, train and eval.
    #[arg(long, value_enum)]
    bias: Option<Bias>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bias {
    Gender,
    Age,
    Smoking,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Cnn,
    #[value(name = "cnn_lstm")]
    CnnLstm,
    #[value(name = "rbf_net")]
    RbfNet,
}

impl From<Model> for BaselineKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Cnn => BaselineKind::Cnn,
            Model::CnnLstm => BaselineKind::CnnLstm,
            Model::RbfNet => BaselineKind::RbfNet,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic corpus: WAV clips plus manifest.csv.
    Synth(Common),
    /// Build a biased training split and its balanced unseen test set.
    Split(Common),
    /// Train one model on the split; writes checkpoints and a CSV log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "rbf_net")]
        model: Model,
    },
    /// Cross-validation versus unseen-test comparison on the split.
    Eval(Common),
    /// Every model on the unbiased, gender, age and smoking splits.
    Ablate(Common),
    /// Finite-difference checks of every layer and the toy encoder.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn load_config(c: &Common) -> AppResult<(ExperimentConfig, Layout)> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.toy |= c.toy;
    if let Some(b) = c.bias {
        cfg.split.bias_kind = match b {
            Bias::Gender => "gender",
            Bias::Age => "age",
            Bias::Smoking => "smoking",
            Bias::None => "none",
        }
        .into();
    }
    let layout = Layout::new(cfg.out_dir());
    Ok((cfg, layout))
}

fn run(cli: Cli) -> AppResult<u8> {
    match cli.command {
        Command::Synth(c) => {
            let (cfg, layout) = load_config(&c)?;
            print!("{}", commands::cmd_synth(&cfg, &layout)?);
        }
        Command::Split(c) => {
            let (cfg, layout) = load_config(&c)?;
            print!("{}", commands::cmd_split(&cfg, &layout)?);
        }
        Command::Train { common, model } => {
            let (cfg, layout) = load_config(&common)?;
            let a = commands::cmd_train(&cfg, &layout, model.into())?;
            println!("final checkpoint {} sha256 {}", a.final_checkpoint.display(), a.hash);
            if let Some(b) = a.best_checkpoint {
                println!("best checkpoint {}", b.display());
            }
            println!("log {}", a.log.display());
        }
        Command::Eval(c) => {
            let (cfg, layout) = load_config(&c)?;
            print!("{}", commands::cmd_eval(&cfg, &layout)?);
        }
        Command::Ablate(c) => {
            let (cfg, layout) = load_config(&c)?;
            print!("{}", commands::cmd_ablate(&cfg, &layout)?);
        }
        Command::Gradcheck { seeds } => {
            if seeds == 0 {
                return Err(AppError::Usage("--seeds must be at least 1".into()));
            }
            let (text, ok) = commands::cmd_gradcheck(seeds);
            print!("{text}");
            return Ok(if ok { EXIT_OK } else { EXIT_NUMERICAL });
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
