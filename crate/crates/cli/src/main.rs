//! Command-line runner for the spike-pattern detection experiments.
//!
//! Every subcommand is one named experiment. A run writes plot-ready CSV
//! series (with JSON sidecars describing units) and a `summary.json` into
//! `{out}/{experiment}_{seed}_{scale}/`; rerunning with the same seed and
//! scale reproduces the files byte for byte. With `--check` the run is also
//! compared against pinned reference values and the process exits nonzero on
//! any miss.

mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "spikesnr",
    version,
    about = "Optimal detection of repeating spike patterns with one leaky \
             integrate-and-fire neuron: closed-form detector analysis, \
             simulated validation, and plasticity experiments."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Trial-count preset: `desk` finishes on a laptop, `full` reproduces the
/// reference trial counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

impl Scale {
    pub fn as_str(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        }
    }
}

/// Flags shared by every experiment.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Master seed; every random stream in the run derives from it.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Trial-count preset.
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,

    /// Output root; files land in {out}/{experiment}_{seed}_{scale}/.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,

    /// Compare the results against pinned reference values and exit nonzero
    /// on any miss. Refused together with parameter overrides where the
    /// references assume the default parameters.
    #[arg(long)]
    pub check: bool,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, value_name = "K")]
    pub workers: Option<usize>,
}

/// Parameter overrides. Each experiment accepts the subset it can honour and
/// rejects the rest loudly rather than ignoring them.
#[derive(Debug, Clone, Copy, Default, Args)]
pub struct Overrides {
    /// Number of distinct repeating patterns.
    #[arg(long = "P", value_name = "COUNT")]
    pub pattern_count: Option<u32>,

    /// Afferent firing rate, Hz.
    #[arg(long = "f-hz", value_name = "HZ")]
    pub rate_hz: Option<f64>,

    /// Spike-time jitter half-width, ms.
    #[arg(long = "T-ms", value_name = "MS")]
    pub jitter_ms: Option<f64>,

    /// Number of afferents.
    #[arg(long = "N", value_name = "COUNT")]
    pub afferent_count: Option<u32>,

    /// Membrane time constant, ms (default: the optimized value).
    #[arg(long = "tau-ms", value_name = "MS")]
    pub tau_ms: Option<f64>,

    /// Detection window, ms (default: the optimized value).
    #[arg(long = "dt-ms", value_name = "MS")]
    pub dt_ms: Option<f64>,

    /// Baseline firing threshold, potential units.
    #[arg(long, value_name = "V")]
    pub theta0: Option<f64>,

    /// Homeostatic synaptic depression per output spike (negative).
    #[arg(long = "w-out", value_name = "W", allow_hyphen_values = true)]
    pub w_out: Option<f64>,
}

impl Overrides {
    fn set_flags(&self) -> [(&'static str, bool); 8] {
        [
            ("--P", self.pattern_count.is_some()),
            ("--f-hz", self.rate_hz.is_some()),
            ("--T-ms", self.jitter_ms.is_some()),
            ("--N", self.afferent_count.is_some()),
            ("--tau-ms", self.tau_ms.is_some()),
            ("--dt-ms", self.dt_ms.is_some()),
            ("--theta0", self.theta0.is_some()),
            ("--w-out", self.w_out.is_some()),
        ]
    }

    pub fn any_set(&self) -> bool {
        self.set_flags().iter().any(|&(_, set)| set)
    }

    /// Errors on any override the calling experiment does not honour.
    pub fn ensure_only(&self, supported: &[&str]) -> Result<()> {
        for (flag, set) in self.set_flags() {
            if set && !supported.contains(&flag) {
                if supported.is_empty() {
                    bail!("{flag} is not used by this experiment");
                }
                bail!(
                    "{flag} is not used by this experiment (supported here: {})",
                    supported.join(", ")
                );
            }
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form optimal detector (window, time constant, afferent count,
    /// SNR) for the reference pattern loads.
    Table1Theory {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        over: Overrides,
    },

    /// Plasticity runs at the reference operating points: learning, then
    /// frozen-weight evaluation of hits, false alarms, and optimality.
    Table1Stdp {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        over: Overrides,
    },

    /// Monte Carlo test of scoring the average pattern realization instead
    /// of averaging per-realization scores.
    Fig2Averaging {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        over: Overrides,
    },

    /// Simulated presentation-protocol SNR against the closed form, with
    /// per-trial records.
    Fig3Validation {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        over: Overrides,
        /// Also write the membrane-potential trace of the first few
        /// presentations (large file).
        #[arg(long)]
        dump_trace: bool,
    },

    /// Optimal-detector maps over the firing-rate x jitter plane.
    Fig4Maps {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        over: Overrides,
    },

    /// Optimal detector as a function of the number of embedded patterns.
    Fig5Psweep {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        over: Overrides,
    },

    /// Graded multi-window weight profiles and their SNR gain over the best
    /// binary profile.
    Fig7Graded {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        over: Overrides,
    },

    /// Draw one frozen Poisson pattern and write it as a spike CSV.
    GenPattern(GenPatternArgs),
}

#[derive(Debug, Args)]
struct GenPatternArgs {
    /// Number of afferents.
    #[arg(long = "N", value_name = "COUNT", default_value_t = 10_000)]
    afferent_count: u32,

    /// Poisson rate of every afferent, Hz.
    #[arg(long = "f-hz", value_name = "HZ", default_value_t = 3.2)]
    rate_hz: f64,

    /// Pattern length, ms.
    #[arg(long = "len-ms", value_name = "MS", default_value_t = 100.0)]
    len_ms: f64,

    /// Seed for the pattern draw.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Output CSV file.
    #[arg(long, default_value = "pattern.csv")]
    out: PathBuf,
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Runs the selected experiment; `Ok(false)` means a `--check` miss.
fn run() -> Result<bool> {
    let cli = Cli::parse();
    let (run, checks) = match &cli.command {
        Command::Table1Theory { run, over } => {
            init_workers(run)?;
            (run, experiments::table1_theory(run, over)?)
        }
        Command::Table1Stdp { run, over } => {
            init_workers(run)?;
            (run, experiments::table1_stdp(run, over)?)
        }
        Command::Fig2Averaging { run, over } => {
            init_workers(run)?;
            (run, experiments::fig2_averaging(run, over)?)
        }
        Command::Fig3Validation {
            run,
            over,
            dump_trace,
        } => {
            init_workers(run)?;
            (run, experiments::fig3_validation(run, over, *dump_trace)?)
        }
        Command::Fig4Maps { run, over } => {
            init_workers(run)?;
            (run, experiments::fig4_maps(run, over)?)
        }
        Command::Fig5Psweep { run, over } => {
            init_workers(run)?;
            (run, experiments::fig5_psweep(run, over)?)
        }
        Command::Fig7Graded { run, over } => {
            init_workers(run)?;
            (run, experiments::fig7_graded(run, over)?)
        }
        Command::GenPattern(args) => {
            experiments::gen_pattern(args)?;
            return Ok(true);
        }
    };

    let mut all_pass = true;
    for check in &checks {
        if check.pass {
            println!("check {}: pass ({})", check.name, check.detail);
        } else {
            all_pass = false;
            println!("check {}: FAIL ({})", check.name, check.detail);
        }
    }
    if run.check && checks.is_empty() {
        bail!("--check produced no comparisons; this is a bug");
    }
    Ok(all_pass)
}

fn init_workers(run: &RunArgs) -> Result<()> {
    if let Some(workers) = run.workers {
        if workers == 0 {
            bail!("--workers must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}
