//! Command-line runner: `ngca-lab <experiment> [--key value]... [--config path]`.

pub mod config;
pub mod report;
pub mod run;
#[cfg(test)]
mod tests;

use std::io::Write;
use std::path::PathBuf;

use clap::{CommandFactory, Parser};

pub use config::{echo_to_config, echo_to_text, Experiment, ExperimentConfig, Format, VALID_KEYS};
pub use report::{ExperimentReport, Table, Verdict};
pub use run::run;

use crate::error::LabError;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
/// Caps the rayon worker count.
pub const THREADS_ENV: &str = "NGCA_LAB_THREADS";

const DEFAULTS_HELP: &str = "\
Defaults (\"auto\" = derived or swept):
  moment-match     m=6 r=3 eps=auto
  sample-audit     m=6 r=3 eps=auto d=16 t=m+2 trials=100000
  decay            d=auto(4,16,64,256) n=2 k=3 eps=0.05 trials=2000
  fact32           d=16 n=2 k=3 eps=0.05 (compared with eps=0.2) trials=10000
  sphere-w         d=auto(2,4,8,16,64) t=auto(1,2,3)
  mollifier-probe  without --t: sandwich suite, d=64 n=2 k=3 c-g=0.2 trials=10000
                   with --t: derivative probe of order t, d=auto(16,64,256) n=2 k=2
                   c-g=0.2 c-trunc=0.05 trials=20000; c-trunc <= c-g/2 - 0.05
  c1-test          d=64 m=2 n=30000 t=auto(floor(ln n)) eps=auto r-multiplier=4 trials=2000
  gap-separation   eps=0.25 n=1 k=4 delta=auto(largest meeting the gamma=0.1 precondition)
  fooling-gap      d=256 m=4 n=8 k=2 r=2 eps=auto trials=10000 (20 polynomials)
  all              seed=2026 format=csv

Config files hold key=value lines ('#' starts a comment); flags override file values.
Exit status: 0 all checks pass, 1 a check fails or the run errors, 2 usage error.
Set NGCA_LAB_THREADS to cap the worker count.";

#[derive(Debug, Parser)]
#[command(name = "ngca-lab", version, about = "Seeded experiments on moment-matched hidden-direction distributions", after_help = DEFAULTS_HELP)]
struct Cli {
    /// Experiment to run.
    #[arg(value_enum)]
    experiment: Option<Experiment>,
    /// key=value file; flags take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long = "c-g")]
    c_g: Option<String>,
    #[arg(long = "c-trunc")]
    c_trunc: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Atom location R (moment-match, sample-audit, fooling-gap).
    #[arg(long)]
    r: Option<String>,
    /// Multiple C in R = C log^(1/4)(n) d^(1/4) (c1-test).
    #[arg(long = "r-multiplier")]
    r_multiplier: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Report path; standard output when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl Cli {
    fn flags(&self) -> crate::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig { experiment: self.experiment, ..Default::default() };
        let pairs = [
            ("d", &self.d),
            ("m", &self.m),
            ("n", &self.n),
            ("k", &self.k),
            ("t", &self.t),
            ("eps", &self.eps),
            ("c-g", &self.c_g),
            ("c-trunc", &self.c_trunc),
            ("delta", &self.delta),
            ("r", &self.r),
            ("r-multiplier", &self.r_multiplier),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("out", &self.out),
            ("format", &self.format),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

/// Merges the optional config file with flags (flags win).
pub fn load_config<I, S>(args: I) -> std::result::Result<ExperimentConfig, clap::Error>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let to_clap = |e: LabError| Cli::command().error(clap::error::ErrorKind::ValueValidation, e.to_string());
    let flags = cli.flags().map_err(to_clap)?;
    let base = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path).map_err(to_clap)?,
        None => ExperimentConfig::default(),
    };
    Ok(base.overlay(flags))
}

fn configure_threads() -> Result<(), String> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| format!("{THREADS_ENV}={v} is not a positive integer"))?;
        if n == 0 {
            return Err(format!("{THREADS_ENV} must be >= 1"));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Full command-line behavior; returns the process exit status.
pub fn main_with_args<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    if let Err(msg) = configure_threads() {
        let _ = writeln!(stderr, "error: {msg}");
        return EXIT_USAGE;
    }
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(LabError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            return EXIT_USAGE;
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_FAIL;
        }
    };
    let text = report.render(cfg.format.unwrap_or_default());
    match &cfg.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &text) {
                let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
                return EXIT_FAIL;
            }
        }
        None => {
            let _ = write!(stdout, "{text}");
        }
    }
    let _ = writeln!(stdout, "{}", report.summary_line());
    if report.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
