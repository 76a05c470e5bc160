use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mblab::bounds::{actor_single_bandit_bound, lai_robbins_bound, lower_bound_weights, BanditInstance};
use mblab::harness::{
    emit_plot, plot_csv_files, run_experiment, run_sweep, write_experiment, write_sweep, ExperimentConfig, SweepAxis,
};
use mblab::optimizer::{export_lp, AssignmentModel};
use mblab::policies::{me_build_scenarios, se_table, PolicyKind};
use mblab::SampleStore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "mblab", version, about = "Multi-actor bandit experiments for demand response")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV, store snapshots and a regret plot.
    Run {
        config: PathBuf,
        /// Output directory (overrides run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra `key=value` overrides, applied after the file.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Repeat an experiment over values of one parameter.
    Sweep {
        config: PathBuf,
        /// beta, epsilon, tau, n_scenarios or sigma_u.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Regret lower-bound constant of an explicit instance file.
    Bound { instance: PathBuf },
    /// Plot mean cumulative normalized regret from episode CSV files.
    Plot {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "Cumulative normalized regret")]
        title: String,
    },
    /// Write the program the configured policy would solve for a stored state.
    ExportLp {
        config: PathBuf,
        #[arg(long)]
        episode_snapshot: PathBuf,
        /// Destination file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?;
    for o in overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override {o:?} is not KEY=VALUE"))?;
        config.set(k.trim(), v.trim()).map_err(anyhow::Error::msg)?;
    }
    config.apply_env()?;
    config.validate()?;
    Ok(config)
}

fn run(config: PathBuf, out: Option<PathBuf>, overrides: Vec<String>) -> Result<()> {
    let mut config = load_config(&config, &overrides)?;
    if let Some(out) = out {
        config.run.out_dir = out;
    }
    let result = run_experiment(&config)?;
    write_experiment(&result, &config.run.out_dir)?;
    let mut stdout = io::stdout().lock();
    for rep in &result.repetitions {
        writeln!(
            stdout,
            "{}: seed {} episodes {} final cum_norm_regret {:.6}",
            rep.run_id,
            rep.seed,
            rep.ledger.len(),
            rep.ledger.cumulative_normalized_regret()
        )?;
    }
    writeln!(stdout, "wrote {}", config.run.out_dir.display())?;
    if let Some(e) = result.first_error() {
        bail!("run aborted: {e}");
    }
    Ok(())
}

fn sweep(config: PathBuf, axis: String, values: Vec<String>, out: Option<PathBuf>, overrides: Vec<String>) -> Result<()> {
    let mut config = load_config(&config, &overrides)?;
    if let Some(out) = out {
        config.run.out_dir = out;
    }
    let axis = SweepAxis::parse(&axis).with_context(|| format!("unknown sweep axis {axis:?}"))?;
    let result = run_sweep(&config, axis, &values)?;
    write_sweep(&result, &config.run.out_dir)?;
    let mut stdout = io::stdout().lock();
    for (value, exp) in &result.points {
        writeln!(stdout, "{}={}: mean final cum_norm_regret {:.6}", axis.name(), value, exp.mean_final_cum_norm_regret())?;
    }
    writeln!(stdout, "wrote {}", config.run.out_dir.display())?;
    if let Some(e) = result.points.iter().find_map(|(_, r)| r.first_error()) {
        bail!("sweep aborted: {e}");
    }
    Ok(())
}

fn bound(path: PathBuf) -> Result<()> {
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let instance = BanditInstance::parse(BufReader::new(file))?;
    let lb = lower_bound_weights(&instance)?;
    let mut out = io::stdout().lock();
    let one_based = |a: &mblab::ActionAssignment| {
        a.actions().iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(",")
    };
    writeln!(out, "optimal_value {:.9}", lb.optimal.value)?;
    for a in &lb.optimal.optimal {
        writeln!(out, "optimal ({})", one_based(a))?;
    }
    for r in &lb.requirements {
        writeln!(
            out,
            "requirement actor {} action {} reference {} kl {:.9} min_weight {:.9}",
            r.actor + 1,
            r.action + 1,
            r.reference + 1,
            r.kl,
            r.weight()
        )?;
    }
    for (a, w) in &lb.weights.weights {
        writeln!(out, "weight ({}) {:.9}", one_based(a), w)?;
    }
    writeln!(out, "rho {:.9}", lb.rho)?;
    if instance.actors() == 1 {
        writeln!(out, "single_bandit {:.9}", lai_robbins_bound(&instance)?)?;
    } else {
        for i in 0..instance.actors() {
            writeln!(out, "single_bandit actor {} {:.9}", i + 1, actor_single_bandit_bound(&instance, i)?)?;
        }
    }
    Ok(())
}

fn plot(csv: Vec<PathBuf>, out: PathBuf, title: String) -> Result<()> {
    let paths: Vec<&Path> = csv.iter().map(PathBuf::as_path).collect();
    let series = plot_csv_files(&paths)?;
    fs::write(&out, emit_plot(&series, &title)?).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn export(config: PathBuf, snapshot: PathBuf, out: Option<PathBuf>) -> Result<()> {
    let config = load_config(&config, &[])?;
    let file = File::open(&snapshot).with_context(|| format!("opening {}", snapshot.display()))?;
    let store = SampleStore::read_snapshot(BufReader::new(file))?;
    let expected = mblab::simulator::build_action_set(config.sim.horizon).len();
    if store.actors() != config.sim.actors
        || store.horizon() != config.sim.horizon
        || store.action_counts().iter().any(|&k| k != expected)
    {
        bail!(
            "snapshot has {} actors and horizon {}, config expects {} actors, horizon {} and {} actions",
            store.actors(),
            store.horizon(),
            config.sim.actors,
            config.sim.horizon,
            expected
        );
    }
    let table = match config.policy.kind {
        PolicyKind::SingleEpisode => se_table(&store, &config.policy)?,
        PolicyKind::MultiEpisode => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.run.master_seed);
            me_build_scenarios(&store, config.policy.n_scenarios, &config.policy.initial, &mut rng)?
        }
        PolicyKind::Random => bail!("the random policy solves no program"),
    };
    let model = AssignmentModel::new(&table);
    match out {
        Some(path) => {
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(f);
            export_lp(&model, &mut w)?;
            w.flush()?;
        }
        None => {
            let mut w = io::stdout().lock();
            export_lp(&model, &mut w)?;
        }
    }
    Ok(())
}

/// A closed downstream pipe (`mblab ... | head`) is not a failure.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        let io = match c.downcast_ref::<mblab::Error>() {
            Some(mblab::Error::Io(io)) => Some(io),
            _ => c.downcast_ref::<io::Error>(),
        };
        io.is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            eprintln!("mblab: {}", text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run { config, out, overrides } => run(config, out, overrides),
        Command::Sweep { config, axis, values, out, overrides } => sweep(config, axis, values, out, overrides),
        Command::Bound { instance } => bound(instance),
        Command::Plot { csv, out, title } => plot(csv, out, title),
        Command::ExportLp { config, episode_snapshot, out } => export(config, episode_snapshot, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("mblab: {msg}");
            ExitCode::FAILURE
        }
    }
}
