use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dfchain::{Boundary, KickOperator, ModelKind, ModelSpec, Period};
use dfchain_cli::config::{parse_size_range, ExperimentConfig, Overrides};
use dfchain_cli::{check_eq10, presets, run_evolve, run_fragment, run_sweep, CliError, RunSummary};

#[derive(Parser)]
#[command(name = "dfchain", version, about = "Exact dynamics of kinetically constrained spin chains")]
struct Cli {
    /// Worker threads (defaults to the available parallelism). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one evolution, noise-averaged if a noise period is given.
    Evolve(RunArgs),
    /// Run one noise-averaged evolution per kick period.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated kick periods, e.g. `0.5,1,2,inf`.
        #[arg(long, value_delimiter = ',')]
        periods: Option<Vec<Period>>,
    },
    /// Enumerate the dynamically connected sectors of a model.
    Fragment {
        #[arg(long, default_value = "dfm")]
        model: ModelKind,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        bc: Option<Boundary>,
        /// Chain lengths to tabulate, `a..b` or `a..b:step` (inclusive).
        #[arg(long)]
        size_range: Option<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check the squared-triangle operator identity of the DFM.
    CheckEq10,
    /// Run a named figure preset.
    Preset {
        /// One of fig2a, fig2b, fig2c, fig3a … fig3e, fig4a, fig4b.
        name: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// JSON config file (a previous run's meta.json works too); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    bc: Option<Boundary>,
    #[arg(long)]
    coupling: Option<f64>,
    /// all-down, neel-l, neel-r, single-up@i, double-up@i, bell, ghz, or a bitstring.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Kick period T_X, or `inf`.
    #[arg(long)]
    noise_period: Option<Period>,
    #[arg(long)]
    noise_op: Option<KickOperator>,
    #[arg(long)]
    kick_angle: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// z-profile, concurrence:i-j, fidelity:<state>, renyi2:even|odd|i-j-...
    #[arg(long = "observable", short = 'o', value_delimiter = ',')]
    observables: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            model: self.model,
            size: self.size,
            boundary: self.bc,
            coupling: self.coupling,
            init: self.init.clone(),
            t_max: self.t_max,
            dt: self.dt,
            tolerance: self.tol,
            noise_period: self.noise_period,
            noise_op: self.noise_op,
            kick_angle: self.kick_angle,
            samples: self.samples,
            seed: self.seed,
            observables: self.observables.clone(),
            periods: None,
            out: self.out.clone(),
        }
    }

    fn resolve(&self, base: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::from_json(&text)?
            }
            None => base,
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

fn report(summary: &RunSummary) {
    println!(
        "wrote {} ({} samples, {} trajector{})",
        summary.dir.display(),
        summary.num_times,
        summary.trajectories,
        if summary.trajectories == 1 { "y" } else { "ies" }
    );
}

fn run_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.sweep_periods.is_some() {
        run_sweep(cfg)?.iter().for_each(report);
    } else {
        report(&run_evolve(cfg)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Evolve(args) => {
            let mut cfg = args.resolve(ExperimentConfig::default())?;
            cfg.sweep_periods = None;
            report(&run_evolve(&cfg)?);
        }
        Command::Sweep { run, periods } => {
            let mut cfg = run.resolve(ExperimentConfig::default())?;
            if let Some(p) = periods {
                cfg.sweep_periods = Some(p);
            }
            for s in run_sweep(&cfg)? {
                report(&s);
            }
        }
        Command::Fragment { model, size, bc, size_range, out } => {
            let range = size_range.as_deref().map(parse_size_range).transpose()?;
            let l = match (size, &range) {
                (Some(l), _) => l,
                (None, Some(r)) => r[0],
                (None, None) => return Err(CliError::Config("fragment needs --size or --size-range".into())),
            };
            let mut spec = ModelSpec::new(model, l);
            if let Some(b) = bc {
                spec.boundary = b;
            }
            let rep = run_fragment(&spec, range.as_deref(), &out)?;
            println!("{} L={} {}: frozen {}", spec.kind, l, spec.boundary, rep.frozen_count);
            for c in &rep.components {
                println!("  {:<6} size {:>6}  from {}", c.label.to_string(), c.size, c.representative.config);
            }
            if let Some(table) = &rep.scaling {
                for row in &table.rows {
                    println!(
                        "  L={:<3} non-singleton {:>3}  frozen {:>3}",
                        row.num_sites, row.non_singleton_count, row.frozen_count
                    );
                }
                if !table.truncated.is_empty() {
                    println!("  skipped (too large): {:?}", table.truncated);
                }
            }
        }
        Command::CheckEq10 => {
            let (residual, holds) = check_eq10();
            println!("max elementwise residual {residual:e}");
            if !holds {
                return Err(CliError::Core(dfchain::Error::NumericalFailure(format!(
                    "identity residual {residual:e} exceeds tolerance"
                ))));
            }
        }
        Command::Preset { name, run } => {
            let base = presets::preset(&name, run.size)?;
            let mut cfg = run.resolve(base)?;
            if run.out.is_none() && run.config.is_none() {
                cfg.output_dir = PathBuf::from("out").join(name.to_ascii_lowercase());
            }
            run_config(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dfchain: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
