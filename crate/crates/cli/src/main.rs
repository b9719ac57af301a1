//! `qkdrate` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
//! 3 diagnostics failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use qkdrate::channel::DetectionScheme;
use qkdrate::config::{parse_config, Method, ScenarioConfig};
use qkdrate::decoy::{map_bounds, single_photon_bounds, DecoyEnsemble};
use qkdrate::diagnostics::run_diagnostics;
use qkdrate::mapping::mapping_for;
use qkdrate::pipeline::{grid, observe, run_sweep, simulate, SweepResult};
use qkdrate::protocols::{BasisStrategy, ProtocolKind};

#[derive(Parser, Debug)]
#[command(
    name = "qkdrate",
    version,
    about = "Certified key-rate bounds for decoy-state BB84 and MDI-QKD"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Raw detector-pattern tables at every intensity setting.
    Simulate(Common),
    /// Single-photon decoy bounds.
    Decoy {
        #[command(flatten)]
        common: Common,
        /// Run the LP on raw patterns and map afterwards.
        #[arg(long)]
        raw_first: bool,
    },
    /// Key rate at a single point (the first distance and angle).
    Keyrate(Common),
    /// Key rates over the distance and angle grids.
    Sweep(Common),
    /// Ordering, bracketing, gradient, POVM and certificate checks.
    Diagnose(Common),
    /// Fine versus coarse versus analytical rates with their differences.
    Compare(Common),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// TOML scenario file; flags override its values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    #[arg(long)]
    detection: Option<DetectionScheme>,
    /// Misalignment angle(s) in radians (BB84 θ, MDI θ_A).
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    theta: Option<Vec<f64>>,
    /// Alias of --theta for MDI.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, conflicts_with = "theta")]
    theta_a: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    theta_b: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    distance_km: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    #[arg(long)]
    optimize_mu: bool,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    strategy: Option<BasisStrategy>,
    /// Analysis method(s): numerical-fine, numerical-coarse, analytical.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    method: Option<Vec<Method>>,
    #[arg(long)]
    zero_photon: bool,
    /// CSV destination; stdout when absent (the summary then goes to stderr).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut c = match &self.config {
            Some(p) => parse_config(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = self.protocol {
            c.protocol = v;
        }
        if let Some(v) = self.detection {
            c.detection = v;
        }
        if let Some(v) = self.theta.clone().or_else(|| self.theta_a.clone()) {
            c.thetas = v;
        }
        if let Some(v) = self.theta_b {
            c.theta_b = Some(v);
        }
        if let Some(v) = self.distance_km.clone() {
            c.distances_km = v;
        }
        if let Some(v) = self.mu {
            c.mu = v;
        }
        if let Some(v) = self.nu {
            c.nu = v;
        }
        if let Some(v) = self.omega {
            c.omega = v;
        }
        c.optimize_mu |= self.optimize_mu;
        if let Some(v) = self.cutoff {
            c.cutoff = v;
        }
        if let Some(v) = self.strategy {
            c.strategy = v;
        }
        if let Some(v) = self.method.clone() {
            c.methods = v;
        }
        c.zero_photon |= self.zero_photon;
        c.validate()?;
        Ok(c)
    }
}

/// Where CSV and the human-readable summary go.
struct Output<'a> {
    path: Option<&'a Path>,
}

impl Output<'_> {
    fn csv(&self, text: &str) -> Result<()> {
        match self.path {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }

    fn summary(&self, text: &str) {
        if self.path.is_some() {
            print!("{text}");
        } else {
            eprint!("{text}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<qkdrate::Error>() {
        Some(
            qkdrate::Error::Domain(_)
            | qkdrate::Error::Infeasible(_)
            | qkdrate::Error::Numerical(_),
        ) => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate(common) => simulate_cmd(&common),
        Command::Decoy { common, raw_first } => decoy_cmd(&common, raw_first),
        Command::Keyrate(common) => {
            let mut c = common.scenario()?;
            c.distances_km.truncate(1);
            c.thetas.truncate(1);
            sweep_cmd(&common, c)
        }
        Command::Sweep(common) => {
            let c = common.scenario()?;
            sweep_cmd(&common, c)
        }
        Command::Diagnose(common) => {
            let report = run_diagnostics(&common.scenario()?)?;
            print!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            })
        }
        Command::Compare(common) => compare_cmd(&common),
    }
}

fn simulate_cmd(common: &Common) -> Result<ExitCode> {
    let c = common.scenario()?;
    let out = Output {
        path: common.out.as_deref(),
    };
    let point = grid(&c)[0];
    let tables = simulate(&c, &point, c.mu)?;
    let mut csv = String::new();
    for t in &tables {
        csv.push_str(&t.to_csv());
    }
    out.csv(&csv)?;
    out.summary(&format!(
        "{} raw tables for {} at L = {} km, theta = {}\n",
        tables.len(),
        c.protocol,
        point.distance_km,
        point.theta_a
    ));
    Ok(ExitCode::SUCCESS)
}

fn decoy_cmd(common: &Common, raw_first: bool) -> Result<ExitCode> {
    let c = common.scenario()?;
    let out = Output {
        path: common.out.as_deref(),
    };
    let point = grid(&c)[0];
    let raw = simulate(&c, &point, c.mu)?;
    let bounds = if raw_first {
        map_bounds(
            &single_photon_bounds(&DecoyEnsemble::from_raw(&raw)?, c.cutoff)?,
            &mapping_for(c.protocol),
        )?
    } else {
        single_photon_bounds(
            &DecoyEnsemble::from_observations(&observe(&raw)?)?,
            c.cutoff,
        )?
    };
    out.csv(&bounds.to_csv())?;
    out.summary(&format!(
        "{} single-photon intervals, widest {:.3e}\n",
        bounds.len(),
        bounds.max_width()
    ));
    Ok(ExitCode::SUCCESS)
}

fn manifest_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".manifest.toml");
    PathBuf::from(name)
}

fn execute(common: &Common, c: &ScenarioConfig) -> Result<(SweepResult, f64)> {
    let t0 = Instant::now();
    info!("running {} points", grid(c).len() * c.methods.len());
    let result = run_sweep(c, common.workers)?;
    let total = t0.elapsed().as_secs_f64();
    if let Some(p) = &common.out {
        let m = manifest_path(p);
        std::fs::write(&m, result.timing_manifest(total))
            .with_context(|| format!("writing {}", m.display()))?;
    }
    Ok((result, total))
}

fn sweep_cmd(common: &Common, c: ScenarioConfig) -> Result<ExitCode> {
    let out = Output {
        path: common.out.as_deref(),
    };
    let (result, total) = execute(common, &c)?;
    out.csv(&result.to_csv())?;
    let mut s = String::new();
    for row in &result.rows {
        let _ = match &row.outcome {
            Ok(e) => writeln!(
                s,
                "{:>8.1} km  theta {:>6.3}  {:<16} R = {:.4e}  (mu {:.3}, gap {:.1e}, {})",
                row.point.distance_km,
                row.point.theta_a,
                row.method.to_string(),
                e.key_rate,
                e.mu,
                e.gap,
                e.status
            ),
            Err(msg) => writeln!(
                s,
                "{:>8.1} km  theta {:>6.3}  {:<16} failed: {msg}",
                row.point.distance_km,
                row.point.theta_a,
                row.method.to_string()
            ),
        };
    }
    let _ = writeln!(
        s,
        "{} rows, {} failed, {total:.2} s",
        result.rows.len(),
        result.failures()
    );
    out.summary(&s);
    if !result.rows.is_empty() && result.failures() == result.rows.len() {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn compare_cmd(common: &Common) -> Result<ExitCode> {
    let mut c = common.scenario()?;
    c.methods = Method::ALL.to_vec();
    let out = Output {
        path: common.out.as_deref(),
    };
    let (result, _) = execute(common, &c)?;
    let mut csv = String::from("distance_km,theta_a,fine,coarse,analytical,fine_minus_analytical,coarse_minus_analytical,fine_minus_coarse\n");
    let mut summary = String::new();
    for chunk in result.rows.chunks(Method::ALL.len()) {
        let rate = |m: Method| {
            chunk
                .iter()
                .find(|r| r.method == m)
                .and_then(|r| r.outcome.as_ref().ok())
                .map(|e| e.key_rate)
                .unwrap_or(f64::NAN)
        };
        let (f, k, a) = (
            rate(Method::NumericalFine),
            rate(Method::NumericalCoarse),
            rate(Method::Analytical),
        );
        let p = chunk[0].point;
        let _ = writeln!(
            csv,
            "{},{},{f:e},{k:e},{a:e},{:e},{:e},{:e}",
            p.distance_km,
            p.theta_a,
            f - a,
            k - a,
            f - k
        );
        let _ = writeln!(
            summary,
            "{:>8.1} km  theta {:>6.3}  fine {f:.4e}  coarse {k:.4e}  analytical {a:.4e}",
            p.distance_km, p.theta_a
        );
    }
    out.csv(&csv)?;
    out.summary(&summary);
    Ok(ExitCode::SUCCESS)
}
