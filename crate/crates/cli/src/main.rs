use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adasecant::harness::{
    emit_curves, run_ablation, run_experiment, run_sweep, summarize, summarize_csv_dir,
    summarize_records, validate, write_summary, AblationGrid, ExperimentConfig, HarnessError,
    NamedRecord, OptimizerSpec, SweepGrid, TerminalStatus, Toggles, SUMMARY_FILE,
};
use adasecant::{BaselineKind, ProblemSpec};

const EXIT_USAGE: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// AdaSecant experiments: single runs, ablations, baseline sweeps and checks.
#[derive(Debug, Parser)]
#[command(name = "adasecant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment. Exits with 2 if the run diverged.
    Run(Common),
    /// Run the 16-way component ablation of AdaSecant.
    Ablate(Common),
    /// Sweep learning-rate multipliers and batch sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Learning-rate multipliers applied to baseline defaults.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,1,3,10")]
        lr_scales: Vec<f64>,
        /// Batch sizes; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        batch_sizes: Vec<usize>,
    },
    /// Run the invariant and oracle checks.
    Validate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rebuild summary.json from the CSVs in a directory.
    Emit {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// adasecant, sgd_momentum, adagrad, rmsprop, adadelta, adam; `sweep` takes a comma list or `all`.
    #[arg(long)]
    optimizer: Option<String>,
    /// quadratic, rosenbrock, logreg, mlp
    #[arg(long)]
    problem: Option<String>,
    /// Output directory for CSVs and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_vr: bool,
    #[arg(long)]
    no_ag: bool,
    #[arg(long)]
    no_bn: bool,
    #[arg(long)]
    no_od: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Internal(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) | HarnessError::Problem(_) => Failure::Usage(e.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

impl Common {
    fn toggles_set(&self) -> bool {
        self.no_vr || self.no_ag || self.no_bn || self.no_od
    }

    fn config(&self, optimizer: Option<OptimizerSpec>) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(name) = &self.problem {
            cfg.problem = ProblemSpec::by_name(name)
                .ok_or_else(|| Failure::Usage(format!("unknown problem {name}")))?;
        }
        if let Some(opt) = optimizer {
            cfg.optimizer = opt;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(steps) = self.steps {
            cfg.max_steps = steps;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if self.toggles_set() {
            let OptimizerSpec::Adasecant(ada) = &cfg.optimizer else {
                return Err(Failure::Usage(
                    "--no-* toggles only apply to adasecant".into(),
                ));
            };
            let t = Toggles::of(ada);
            let t = Toggles {
                vr: t.vr && !self.no_vr,
                ag: t.ag && !self.no_ag,
                bn: t.bn && !self.no_bn,
                od: t.od && !self.no_od,
            };
            cfg.optimizer = OptimizerSpec::Adasecant(t.apply(ada));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn single_optimizer(&self) -> Result<Option<OptimizerSpec>, Failure> {
        self.optimizer
            .as_deref()
            .map(|name| {
                OptimizerSpec::by_name(name)
                    .ok_or_else(|| Failure::Usage(format!("unknown optimizer {name}")))
            })
            .transpose()
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn emit(records: &[NamedRecord], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            let summary = emit_curves(records, dir)?;
            eprintln!("wrote {} run(s) to {}", summary.runs.len(), dir.display());
            Ok(())
        }
        None => print_json(&summarize_records(records)),
    }
}

fn run(common: &Common) -> Result<ExitCode, Failure> {
    let cfg = common.config(common.single_optimizer()?)?;
    let record = run_experiment(&cfg)?;
    let status = record.terminal_status;
    if let Some(msg) = &record.message {
        eprintln!("{}: {msg}", status.as_str());
    }
    let name = format!("{}_{}", cfg.problem.name(), cfg.optimizer.label());
    emit(
        &[NamedRecord {
            name,
            config: Some(cfg),
            record,
        }],
        common.out.as_deref(),
    )?;
    Ok(match status {
        TerminalStatus::Completed => ExitCode::SUCCESS,
        TerminalStatus::Diverged => ExitCode::from(EXIT_DIVERGED),
        TerminalStatus::Error => ExitCode::from(EXIT_INTERNAL),
    })
}

fn ablate(common: &Common) -> Result<ExitCode, Failure> {
    let optimizer = match common.single_optimizer()? {
        Some(OptimizerSpec::Baseline { .. }) => {
            return Err(Failure::Usage("ablation needs adasecant".into()))
        }
        other => other,
    };
    let cfg = common.config(optimizer)?;
    let runs = run_ablation(&cfg, &AblationGrid::full())?;
    let records: Vec<NamedRecord> = runs
        .iter()
        .map(|r| NamedRecord {
            name: r.label.clone(),
            config: Some(r.config.clone()),
            record: r.record.clone(),
        })
        .collect();
    if let Some(dir) = &common.out {
        emit_curves(&records, dir)?;
    }
    print_json(&summarize(&runs))?;
    Ok(ExitCode::SUCCESS)
}

fn sweep_optimizers(list: Option<&str>) -> Result<Vec<OptimizerSpec>, Failure> {
    match list {
        None | Some("all") => Ok(BaselineKind::ALL.map(OptimizerSpec::baseline).to_vec()),
        Some(list) => list
            .split(',')
            .map(|name| {
                OptimizerSpec::by_name(name.trim())
                    .ok_or_else(|| Failure::Usage(format!("unknown optimizer {name}")))
            })
            .collect(),
    }
}

fn sweep(common: &Common, lr_scales: &[f64], batch_sizes: &[usize]) -> Result<ExitCode, Failure> {
    let base = common.config(None)?;
    let grid = SweepGrid {
        optimizers: sweep_optimizers(common.optimizer.as_deref())?,
        lr_scales: lr_scales.to_vec(),
        batch_sizes: if batch_sizes.is_empty() {
            vec![base.batch_size]
        } else {
            batch_sizes.to_vec()
        },
    };
    let records = run_sweep(&base, &grid)?;
    emit(&records, common.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn check(seed: u64) -> Result<ExitCode, Failure> {
    let checks = validate::run_all(seed);
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INTERNAL)
    })
}

fn rerender(dir: &Path) -> Result<ExitCode, Failure> {
    if !dir.is_dir() {
        return Err(Failure::Usage(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let summary = summarize_csv_dir(dir)?;
    write_summary(&summary, &dir.join(SUMMARY_FILE))?;
    print_json(&summary)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run(c) => run(c),
        Command::Ablate(c) => ablate(c),
        Command::Sweep {
            common,
            lr_scales,
            batch_sizes,
        } => sweep(common, lr_scales, batch_sizes),
        Command::Validate { seed } => check(*seed),
        Command::Emit { out } => rerender(out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}
