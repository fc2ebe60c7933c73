//! Command-line front end.
//!
//! Every subcommand writes its CSV output and a `<subcommand>_manifest.json`
//! into `--out` (default `./out`). Exit status is 0 on success, 2 for
//! config and flag errors, 3 when the field solver fails to converge and 1
//! for I/O failures.
//!
//! CSV headers:
//!
//! | file | header |
//! |---|---|
//! | `field.csv` | `r_um,x_um,conc_per_um3` |
//! | `rates.csv` | `threshold,sigma_source_per_s,sigma_background_per_s` |
//! | `roc.csv` | `threshold,p_true,p_false` (mission metadata in `#` lines) |
//! | `simulate.csv` | `threshold,p_hat,ci_low,ci_high,n_trials,seed` |
//! | `compare.csv` | `case,threshold,p_mc,ci_low,ci_high,p_analytic,ratio,analytic_in_ci` |
//! | `report.csv` | `quantity,published,computed` |

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::chemfield::{mass_balance, solve_source_field, GridSpec, ScalarField};
use crate::continuum::{
    best_point, blood_sample_comparison, detection_rates_with, false_positive_rate,
    roc_from_rates, vessel_entry_rate, ContinuumOptions, DetectionRates,
};
use crate::error::{Error, Result};
use crate::montecarlo::{compare_with_continuum, estimate_curve, CompareConfig, TrialConfig, Z_95};
use crate::params::{load_config, Numerics};
use crate::params::{Config, ScenarioParams};
use crate::poisson_detect::{background_counts, capture_rate};

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "MICROSENSE_CONFIG";

/// Inclusive threshold range written `A..B` (or a single `N`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThresholdRange {
    pub lo: u32,
    pub hi: u32,
}

impl ThresholdRange {
    pub fn to_vec(self) -> Vec<u32> {
        (self.lo..=self.hi).collect()
    }
}

impl FromStr for ThresholdRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| format!("'{t}' is not a non-negative integer"))
        };
        let (lo, hi) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => {
                let n = parse(s)?;
                (n, n)
            }
        };
        if lo < 1 || lo > hi {
            return Err(format!("range {s} must satisfy 1 ≤ A ≤ B"));
        }
        Ok(Self { lo, hi })
    }
}

#[derive(Debug, Parser)]
#[command(name = "microsense", version, about = "Chemical source detection by circulating microscopic sensors")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario config file; falls back to $MICROSENSE_CONFIG, then defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Master seed for Monte Carlo runs.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    seed: u64,
    /// Threshold sweep, inclusive, e.g. 1..20.
    #[arg(long, global = true, value_name = "A..B")]
    thresholds: Option<ThresholdRange>,
    /// Mission duration, s.
    #[arg(long, global = true, value_name = "S")]
    task_time: Option<f64>,
    /// Robots that must report the source.
    #[arg(long, global = true, value_name = "N")]
    required: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the source concentration field.
    Field,
    /// Per-threshold detection rates.
    Rates,
    /// Mission ROC over the threshold sweep.
    Roc {
        /// False reports that count as a false alarm.
        #[arg(long, value_name = "N")]
        false_detections: Option<u32>,
    },
    /// Monte Carlo detection probability per transit.
    Simulate {
        #[arg(long, value_enum, default_value_t = CaseArg::Source)]
        case: CaseArg,
        /// Number of transits.
        #[arg(long, value_name = "N", default_value_t = 100_000)]
        trials: u64,
        #[command(flatten)]
        mc: McFlags,
    },
    /// Monte Carlo against the continuum analysis.
    Compare {
        #[arg(long, value_name = "N", default_value_t = 100_000)]
        source_trials: u64,
        #[arg(long, value_name = "N", default_value_t = 10_000_000)]
        background_trials: u64,
        /// Normal quantile for the Monte Carlo intervals.
        #[arg(long, value_name = "Z", default_value_t = Z_95)]
        z: f64,
        #[command(flatten)]
        mc: McFlags,
    },
    /// Headline numbers next to their published values.
    Report,
}

#[derive(Debug, Args)]
struct McFlags {
    /// Radial Brownian motion of the robot.
    #[arg(long)]
    brownian: bool,
    /// Time bin, s (defaults to the config's mc_dt).
    #[arg(long, value_name = "S")]
    dt: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CaseArg {
    Source,
    Background,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Field => "field",
            Command::Rates => "rates",
            Command::Roc { .. } => "roc",
            Command::Simulate { .. } => "simulate",
            Command::Compare { .. } => "compare",
            Command::Report => "report",
        }
    }
}

/// Provenance written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub argv: Vec<String>,
    /// Resolved config; `--config` on this text reproduces the run.
    pub config_text: String,
    pub params: ScenarioParams,
    pub grid: GridSpec,
    pub numerics: Numerics,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn resolve_config(common: &Common) -> Result<Config> {
    let path = common
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| Error::Parse {
                line: 0,
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            load_config(&text)?
        }
        None => Config::default(),
    };
    if let Some(t) = common.task_time {
        cfg.params.task_time = t;
    }
    if let Some(n) = common.required {
        cfg.params.required_detections = n;
    }
    let violations = cfg.validate();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Invalid(violations))
    }
}

struct Ctx<'a> {
    cfg: Config,
    out: &'a Path,
    seed: u64,
    outputs: Vec<String>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, body)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    fn opts(&self, f: &ScalarField) -> ContinuumOptions {
        ContinuumOptions::for_field(Some(f), self.cfg.numerics.path_step)
    }

    fn field(&self) -> Result<ScalarField> {
        solve_source_field(&self.cfg.params, &self.cfg.grid)
    }

    fn rates(&self, f: &ScalarField, thresholds: &[u32]) -> Result<Vec<DetectionRates>> {
        let opts = self.opts(f);
        thresholds
            .iter()
            .map(|&threshold| {
                let p = ScenarioParams {
                    threshold,
                    ..self.cfg.params.clone()
                };
                detection_rates_with(f, &p, &opts)
            })
            .collect()
    }

    fn trial_config(&self, with_source: bool, n_trials: u64, mc: &McFlags) -> TrialConfig {
        TrialConfig {
            with_source,
            dt: mc.dt.unwrap_or(self.cfg.numerics.mc_dt),
            brownian: mc.brownian,
            n_trials,
            master_seed: self.seed,
            entry_radius: None,
        }
    }
}

fn execute(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let cfg = resolve_config(&cli.common)?;
    fs::create_dir_all(&cli.common.out)?;
    let mut ctx = Ctx {
        cfg,
        out: &cli.common.out,
        seed: cli.common.seed,
        outputs: Vec::new(),
    };
    let sweep = |default: (u32, u32)| {
        cli.common
            .thresholds
            .unwrap_or(ThresholdRange {
                lo: default.0,
                hi: default.1,
            })
            .to_vec()
    };

    match &cli.command {
        Command::Field => {
            let f = ctx.field()?;
            let path = ctx.out.join("field.csv");
            let mut w = BufWriter::new(fs::File::create(&path)?);
            f.write_csv(&mut w)?;
            w.flush()?;
            ctx.outputs.push(path.display().to_string());
            let p = &ctx.cfg.params;
            println!("peak wall concentration  {:.4} molecule/um^3", f.peak_wall_concentration(p));
            println!("mass balance residual    {:.3e}", mass_balance(&f, p)?);
        }
        Command::Rates => {
            let f = ctx.field()?;
            let rates = ctx.rates(&f, &sweep((1, 30)))?;
            let mut csv = String::from("threshold,sigma_source_per_s,sigma_background_per_s\n");
            for r in &rates {
                let _ = writeln!(csv, "{},{:.9e},{:.9e}", r.threshold, r.sigma_source, r.sigma_background);
            }
            ctx.write("rates.csv", &csv)?;
            print!("{csv}");
        }
        Command::Roc { false_detections } => {
            if let Some(n) = false_detections {
                ctx.cfg.params.false_detections = *n;
            }
            let f = ctx.field()?;
            let rates = ctx.rates(&f, &sweep((1, 30)))?;
            let p = &ctx.cfg.params;
            let points = roc_from_rates(&rates, p.task_time, p.required_detections, p.false_detections);
            let mut csv = String::new();
            let _ = writeln!(csv, "# task_time_s={}", p.task_time);
            let _ = writeln!(csv, "# required_detections={}", p.required_detections);
            let _ = writeln!(csv, "# false_detections={}", p.false_detections);
            csv.push_str("threshold,p_true,p_false\n");
            for pt in &points {
                let _ = writeln!(csv, "{},{:.9e},{:.9e}", pt.threshold, pt.p_true, pt.p_false);
            }
            ctx.write("roc.csv", &csv)?;
            print!("{csv}");
        }
        Command::Simulate { case, trials, mc } => {
            let with_source = *case == CaseArg::Source;
            let field = if with_source { Some(ctx.field()?) } else { None };
            let tc = ctx.trial_config(with_source, *trials, mc);
            let estimates = estimate_curve(field.as_ref(), &ctx.cfg.params, &tc, &sweep((1, 20)))?;
            let mut csv = String::from("threshold,p_hat,ci_low,ci_high,n_trials,seed\n");
            for e in &estimates {
                let _ = writeln!(
                    csv,
                    "{},{:.9e},{:.9e},{:.9e},{},{}",
                    e.threshold, e.p_hat, e.ci_low, e.ci_high, e.n_trials, e.seed
                );
            }
            ctx.write("simulate.csv", &csv)?;
            print!("{csv}");
        }
        Command::Compare {
            source_trials,
            background_trials,
            z,
            mc,
        } => {
            if !(*z > 0.0) {
                return Err(Error::Trial(format!("quantile z = {z} must be positive")));
            }
            let f = ctx.field()?;
            let cc = CompareConfig {
                source_trials: *source_trials,
                background_trials: *background_trials,
                seed: ctx.seed,
                dt: mc.dt.unwrap_or(ctx.cfg.numerics.mc_dt),
                brownian: mc.brownian,
                z: *z,
                path_step: ctx.cfg.numerics.path_step,
            };
            let rows = compare_with_continuum(&f, &ctx.cfg.params, &sweep((1, 20)), &cc)?;
            let mut csv =
                String::from("case,threshold,p_mc,ci_low,ci_high,p_analytic,ratio,analytic_in_ci\n");
            for r in &rows {
                let _ = writeln!(
                    csv,
                    "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.6e},{}",
                    r.case.as_str(),
                    r.threshold,
                    r.mc.p_hat,
                    r.mc.ci_low,
                    r.mc.ci_high,
                    r.p_analytic,
                    r.ratio,
                    r.analytic_in_ci
                );
            }
            ctx.write("compare.csv", &csv)?;
            print!("{csv}");
        }
        Command::Report => {
            let text = report(&ctx)?;
            ctx.write("report.csv", &text.csv)?;
            print!("{}", text.table);
        }
    }

    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        argv,
        config_text: ctx.cfg.to_config_text(),
        params: ctx.cfg.params.clone(),
        grid: ctx.cfg.grid.clone(),
        numerics: ctx.cfg.numerics.clone(),
        seed: ctx.seed,
        outputs: ctx.outputs.clone(),
        duration_s: start.elapsed().as_secs_f64(),
    };
    let path = ctx.out.join(format!("{}_manifest.json", manifest.subcommand));
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    fs::write(path, json + "\n")?;
    Ok(())
}

struct Report {
    table: String,
    csv: String,
}

fn report(ctx: &Ctx) -> Result<Report> {
    let p = &ctx.cfg.params;
    let f = ctx.field()?;
    let thresholds: Vec<u32> = (1..=30).collect();
    let rates = ctx.rates(&f, &thresholds)?;

    let mut rows: Vec<(String, String, f64)> = vec![
        ("robot entries per vessel sigma1 (1/s)".into(), "0.016".into(), vessel_entry_rate(p)),
        (
            "robot entries all vessels sigma (1/s)".into(),
            "8e3".into(),
            vessel_entry_rate(p) * p.vessel_count(),
        ),
        ("background counts per window k".into(), "0.08".into(), background_counts(p)),
        (
            "background capture rate (1/s)".into(),
            "8".into(),
            capture_rate(p.chem_diffusion, p.robot_radius, p.c_background),
        ),
        (
            "capture rate at source (1/s)".into(),
            "2300".into(),
            capture_rate(p.chem_diffusion, p.robot_radius, p.c_source),
        ),
        (
            "peak wall concentration (molecule/um^3)".into(),
            "1.8".into(),
            f.peak_wall_concentration(p),
        ),
        (
            "false positive rate at threshold (1/s)".into(),
            "-".into(),
            false_positive_rate(p),
        ),
    ];
    for (task_time, required, published) in [(1000.0, 1, "> 0.9"), (20.0, 1, "-"), (1e5, 1000, "> 0.9")] {
        let points = roc_from_rates(&rates, task_time, required, p.false_detections);
        if let Some(best) = best_point(&points, 0.1) {
            rows.push((
                format!("best p_true (T={task_time} s, n={required}, p_false<0.1)"),
                published.into(),
                best.p_true,
            ));
            rows.push((
                format!("  at threshold (T={task_time} s, n={required})"),
                if task_time == 1000.0 { "~10".into() } else { "-".into() },
                best.threshold as f64,
            ));
        }
    }
    let blood = blood_sample_comparison(p, 86_400.0, 5.0)?;
    rows.push(("one-day blood sample increase (molecule/m^3)".into(), "7e11".into(), blood.added_per_m3));
    rows.push(("blood sample ratio to background".into(), "1e-4".into(), blood.ratio_to_background));

    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut table = String::new();
    let _ = writeln!(table, "{:width$}  {:>10}  {:>12}", "quantity", "published", "computed");
    let mut csv = String::from("quantity,published,computed\n");
    for (name, published, value) in &rows {
        let _ = writeln!(table, "{name:width$}  {published:>10}  {value:>12.4e}");
        let _ = writeln!(csv, "\"{name}\",{published},{value:.9e}");
    }
    Ok(Report { table, csv })
}
