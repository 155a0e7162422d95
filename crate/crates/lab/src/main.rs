use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsp_lab::config::{CaseTag, CyclicParams, Poa3Params, TightInstanceParams};
use gsp_lab::{run_with_threads, Experiment, ExperimentConfig, LabError};

#[derive(Parser)]
#[command(name = "gsp-lab", version, about = "GSP auction welfare experiments")]
struct Cli {
    /// JSON experiment config; its kind must match the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Rounds excluded from the reported welfare average (learn only).
    #[arg(long, global = true)]
    burn_in: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One GSP round (truthful unless bids are given).
    Simulate,
    /// Test a bid profile for a pure equilibrium.
    CheckNe,
    /// Enumerate pure equilibria of an instance, or search sampled instances.
    Enumerate,
    /// Repeated auction with Hedge learners.
    Learn,
    /// Bayesian interim epsilon and welfare ratio.
    Bpoa,
    /// Learners mixed with scripted bidders.
    Byzantine,
    /// Maximize a 3-slot objective.
    Poa3 {
        #[arg(long, value_parser = ["i", "ii"])]
        case: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Maximize the cyclic objective for a range of slot counts.
    Cyclic {
        #[arg(long)]
        min_slots: Option<usize>,
        #[arg(long)]
        max_slots: Option<usize>,
    },
    /// Emit the 3-slot tight instance and a config that re-checks it.
    TightInstance,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::CheckNe => "check-ne",
            Self::Enumerate => "enumerate",
            Self::Learn => "learn",
            Self::Bpoa => "bpoa",
            Self::Byzantine => "byzantine",
            Self::Poa3 { .. } => "poa3",
            Self::Cyclic { .. } => "cyclic",
            Self::TightInstance => "tight-instance",
        }
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let experiment = match &cli.command {
                Command::Poa3 { case, .. } => Experiment::Poa3(Poa3Params {
                    case: match case.as_deref() {
                        Some("ii") => CaseTag::Ii,
                        Some(_) => CaseTag::I,
                        None => return Err(LabError::Schema("poa3 needs --case or --config".into())),
                    },
                    resolution: 2000,
                    restarts: gsp_core::frontier::DEFAULT_RESTARTS,
                }),
                Command::Cyclic { .. } => Experiment::Cyclic(CyclicParams {
                    min_slots: 3,
                    max_slots: 8,
                    restarts: gsp_core::frontier::DEFAULT_RESTARTS,
                }),
                Command::TightInstance => Experiment::TightInstance(TightInstanceParams::default()),
                other => return Err(LabError::Schema(format!("{} needs --config", other.name()))),
            };
            ExperimentConfig { seed: 0, experiment }
        }
    };
    if cfg.experiment.name() != cli.command.name() {
        return Err(LabError::Schema(format!(
            "config describes a {} experiment, not {}",
            cfg.experiment.name(),
            cli.command.name()
        )));
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match (&mut cfg.experiment, &cli.command) {
        (Experiment::Learn(p), _) => {
            if let Some(b) = cli.burn_in {
                p.burn_in = b;
            }
        }
        (_, _) if cli.burn_in.is_some() => {
            return Err(LabError::Schema("--burn-in applies to learn only".into()));
        }
        (Experiment::Poa3(p), Command::Poa3 { case, resolution, restarts }) => {
            match case.as_deref() {
                Some("i") => p.case = CaseTag::I,
                Some("ii") => p.case = CaseTag::Ii,
                _ => {}
            }
            if let Some(r) = resolution {
                p.resolution = *r;
            }
            if let Some(r) = restarts {
                p.restarts = *r;
            }
        }
        (Experiment::Cyclic(p), Command::Cyclic { min_slots, max_slots }) => {
            if let Some(m) = min_slots {
                p.min_slots = *m;
            }
            if let Some(m) = max_slots {
                p.max_slots = *m;
            }
        }
        _ => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|cfg| run_with_threads(&cfg, &cli.out, cli.threads));
    match result {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("gsp-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
