use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pkm_embed::config::{Experiment, Mode, Scheme};
use pkm_embed::model_file::ModelFile;
use pkm_embed::{CliError, RunConfig};

/// Kinematics and inverse dynamics experiments on parallel manipulators
/// with hybrid limbs.
#[derive(Parser)]
#[command(name = "pkm-embed", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment along the platform path and write its CSV file.
    Run(Common),
    /// Check the model against its invariant suites.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Run only this suite (repeatable).
        #[arg(long)]
        suite: Vec<String>,
        /// Random states per finite-difference suite.
        #[arg(long)]
        states: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the built-in model as a JSON model file.
    ExportModel {
        /// Proximal loop closure: analytic or cut_joint.
        #[arg(long)]
        mode: Option<String>,
        /// Destination file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `irsbot2` or the path of a JSON model file.
    #[arg(long)]
    model: Option<String>,
    /// ik_nested, ik_compound, invdyn or singularity.
    #[arg(long)]
    experiment: Option<String>,
    /// Sampling step in s.
    #[arg(long)]
    dt: Option<f64>,
    /// Path duration in s.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon1: Option<f64>,
    #[arg(long)]
    epsilon2: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Proximal loop closure: analytic or cut_joint.
    #[arg(long)]
    mode: Option<String>,
    /// IK scheme: nested or compound.
    #[arg(long)]
    solver: Option<String>,
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if let Some(e) = &self.experiment {
            c.experiment = e.parse::<Experiment>()?;
        }
        if let Some(m) = &self.mode {
            c.mode = m.parse::<Mode>()?;
        }
        if let Some(s) = &self.solver {
            c.solver = Some(s.parse::<Scheme>()?);
        }
        let t = &mut c.trajectory;
        t.dt = self.dt.unwrap_or(t.dt);
        t.duration = self.duration.unwrap_or(t.duration);
        let s = &mut c.settings;
        s.epsilon = self.epsilon.unwrap_or(s.epsilon);
        s.epsilon1 = self.epsilon1.unwrap_or(s.epsilon1);
        s.epsilon2 = self.epsilon2.unwrap_or(s.epsilon2);
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        Ok(c)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(common) => {
            let s = pkm_embed::run(&common.config()?)?;
            println!("wrote {} samples to {}", s.rows, s.csv.display());
            Ok(())
        }
        Command::Validate { common, suite, states, seed } => {
            let mut c = common.config()?;
            if !suite.is_empty() {
                c.validate.suites = suite;
            }
            c.validate.states = states.unwrap_or(c.validate.states);
            c.validate.seed = seed.unwrap_or(c.validate.seed);
            let reports = pkm_embed::validate(&c)?;
            for r in &reports {
                println!("{r}");
            }
            let failed: Vec<_> = reports.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::Validation(failed.join(", ")))
            }
        }
        Command::ExportModel { mode, out } => {
            let c = RunConfig { mode: mode.as_deref().map(str::parse).transpose()?.unwrap_or_default(), ..RunConfig::default() };
            let json = ModelFile::from_model(&c.build_model()?).to_json();
            match out {
                Some(p) => std::fs::write(&p, json + "\n").map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pkm-embed: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
