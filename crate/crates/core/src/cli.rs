//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when validation or a run fails, 2 on usage
//! errors. Every run directory gets a `manifest.json` before anything else.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::{self, LoadedConfig};
use crate::error::{Error, Result};
use crate::model::{LinkModel, SystemConfig};
use crate::oracle::{frontier, theta_star, theta_star_from, verify_dp};
use crate::report::{self, OracleReport};
use crate::sim::{compute_metrics, simulate, sweep_v};
use crate::solver::{penalties, solve_frame};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rateless-sched", version, about = "Power-aware delay-optimal link scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON model and run configuration.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a configuration and list every violated invariant.
    Validate(ConfigArg),
    /// Run one horizon and write frames.csv, slots.csv and metrics.json.
    Simulate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the frame value table for a queue value and packet length.
    FrameSolve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        l: u32,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat simulations over several V values and write sweep.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', required = true)]
        v: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides horizon_frames from the configuration.
        #[arg(long)]
        frames: Option<u64>,
    },
    /// Enumerate stationary frame policies and compute the optimal delay.
    Oracle {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the frame value table against exhaustive policy enumeration.
    VerifyDp {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        l: u32,
        #[arg(long)]
        v: f64,
    },
    /// Join sweep.csv with oracle.json into delay gaps.
    Compare {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: PathBuf,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub tool_version: String,
    /// SHA-256 of the configuration file bytes.
    pub fingerprint: String,
    pub args: BTreeMap<String, String>,
}

impl RunManifest {
    fn new(subcommand: &str, loaded: &LoadedConfig, config_path: &Path, seed: u64, out_dir: &Path) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config_path: config_path.to_path_buf(),
            seed,
            out_dir: out_dir.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            fingerprint: loaded.fingerprint.clone(),
            args: BTreeMap::new(),
        }
    }

    fn arg(mut self, key: &str, value: impl ToString) -> Self {
        self.args.insert(key.to_string(), value.to_string());
        self
    }

    fn write(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        report::write_json(&self.out_dir.join("manifest.json"), self)
    }
}

/// Parses `args` (program name first) and runs the selected subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(Error::Validation(violations)) => {
            let _ = writeln!(stderr, "configuration is invalid:");
            for v in violations {
                let _ = writeln!(stderr, "  {v}");
            }
            EXIT_FAILURE
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_FAILURE
        }
    }
}

fn load_model(path: &Path) -> Result<(LoadedConfig, LinkModel, SystemConfig)> {
    let loaded = config::load(path)?;
    let (model, cfg) = loaded.document.build()?;
    Ok((loaded, model, cfg))
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    let print = |stdout: &mut dyn Write, text: String| {
        stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    };
    match command {
        Command::Validate(ConfigArg { config }) => {
            let loaded = config::load(&config)?;
            let violations = loaded.document.validate();
            if !violations.is_empty() {
                return Err(Error::Validation(violations));
            }
            print(stdout, format!("{}: ok\n", config.display()))?;
            Ok(EXIT_OK)
        }
        Command::Simulate { config, out, seed } => {
            let (loaded, model, mut cfg) = load_model(&config.config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            RunManifest::new("simulate", &loaded, &config.config, cfg.seed, &out)
                .arg("horizon_frames", cfg.horizon_frames)
                .arg("v", report::fmt_f64(cfg.v))
                .write()?;
            let trace = simulate(&model, &cfg)?;
            report::write_to_file(&out.join("frames.csv"), |w| report::write_frames_csv(w, &trace))?;
            report::write_to_file(&out.join("slots.csv"), |w| report::write_slots_csv(w, &trace))?;
            if !trace.frames.is_empty() {
                let metrics = compute_metrics(&trace, &model, &cfg)?;
                report::write_json(&out.join("metrics.json"), &metrics)?;
            }
            print(stdout, format!("wrote {} frames to {}\n", trace.frames.len(), out.display()))?;
            Ok(EXIT_OK)
        }
        Command::FrameSolve { config, q, l, out } => {
            let (_, model, cfg) = load_model(&config.config)?;
            if !(q.is_finite() && q >= 0.0) {
                return Err(Error::InvalidInput {
                    field: "q",
                    reason: format!("must be finite and nonnegative, got {q}"),
                });
            }
            if l == 0 {
                return Err(Error::InvalidInput {
                    field: "l",
                    reason: "packet length must be at least 1".into(),
                });
            }
            let pen = penalties(q, cfg.v, &model.menu, cfg.beta);
            let table = solve_frame(l as usize, &pen, &model)?;
            match out {
                Some(path) => {
                    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                    report::write_value_table(&mut f, &table, q, l as usize)?;
                }
                None => report::write_value_table(stdout, &table, q, l as usize)?,
            }
            Ok(EXIT_OK)
        }
        Command::Sweep {
            config,
            v,
            reps,
            out,
            seed,
            frames,
        } => {
            let (loaded, model, mut cfg) = load_model(&config.config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.horizon_frames = frames.unwrap_or(cfg.horizon_frames);
            let v_list = v.iter().map(|x| report::fmt_f64(*x)).collect::<Vec<_>>().join(",");
            RunManifest::new("sweep", &loaded, &config.config, cfg.seed, &out)
                .arg("v", v_list)
                .arg("reps", reps)
                .arg("horizon_frames", cfg.horizon_frames)
                .write()?;
            let theta = match theta_star(&model, cfg.beta) {
                Ok(t) => Some(t.theta),
                Err(Error::OracleGuard { .. }) => None,
                Err(e) => return Err(e),
            };
            let rows = sweep_v(&model, &cfg, &v, reps, theta)?;
            report::write_sweep_csv(&out.join("sweep.csv"), &rows)?;
            print(stdout, format!("wrote {} rows to {}\n", rows.len(), out.join("sweep.csv").display()))?;
            Ok(EXIT_OK)
        }
        Command::Oracle { config, out } => {
            let (loaded, model, cfg) = load_model(&config.config)?;
            RunManifest::new("oracle", &loaded, &config.config, cfg.seed, &out)
                .arg("beta", report::fmt_f64(cfg.beta))
                .write()?;
            let front = frontier(&model, cfg.beta)?;
            let theta = theta_star_from(&front, cfg.beta, &model)?;
            report::write_to_file(&out.join("frontier.csv"), |w| report::write_frontier_csv(w, &front))?;
            report::write_json(
                &out.join("oracle.json"),
                &OracleReport::new(cfg.beta, &theta, "frontier.csv"),
            )?;
            print(stdout, format!("theta_star={}\n", report::fmt_f64(theta.theta)))?;
            Ok(EXIT_OK)
        }
        Command::VerifyDp { config, q, l, v } => {
            let (_, model, cfg) = load_model(&config.config)?;
            let check = verify_dp(&model, l as usize, q, v, cfg.beta)?;
            let verdict = if check.matches { "pass" } else { "fail" };
            print(
                stdout,
                format!(
                    "{verdict} dp_value={} oracle_value={}\n",
                    report::fmt_f64(check.dp_value),
                    report::fmt_f64(check.oracle_value)
                ),
            )?;
            Ok(if check.matches { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Compare { sweep, oracle, out } => {
            let rows = report::read_sweep_csv(&sweep)?;
            let oracle: OracleReport = report::read_json(&oracle)?;
            let joined = report::compare(&rows, oracle.theta_star);
            match out {
                Some(path) => report::write_to_file(&path, |w| report::write_compare_csv(w, &joined))?,
                None => report::write_compare_csv(stdout, &joined).map_err(|source| Error::Csv {
                    path: "<stdout>".into(),
                    source,
                })?,
            }
            Ok(EXIT_OK)
        }
    }
}
