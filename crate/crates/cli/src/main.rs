use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pointground::solver::{multistart_on, GroundStateResult, ResultRecord};
use pointground::verify::{
    format_float, gn_scan, identity_suite, pohozaev_probe, small_mass_scan, status_name, subadditivity_scan,
    ScanReport, LP_EXPONENTS,
};
use pointground::{Error, GridDescriptor, ProblemKind, ProblemSpec, RadialGrid, SolveOptions};
use serde::{Deserialize, Serialize};

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

const DEFAULT_ALPHA: f64 = 0.5;
const DEFAULT_P: f64 = 2.25;
const DEFAULT_MASS: f64 = 0.5;
const DEFAULT_VERIFY_SEED: u64 = pointground::verify::GN_REFERENCE_SEED;
const GN_SAMPLES: usize = pointground::verify::GN_REFERENCE_SAMPLES;
const PROBE_BETAS: [f64; 3] = [-1.0, 0.0, 1.0];

const SCAN_HELP: &str = "\
CSV columns:
  --kind mass    rho, energy, energy_over_rho2, omega, q, converged
  --kind subadd  mu, energy_mu, energy_rest, energy_r, margin, margin_partner,
                 energy_mu_over_mu2, converged
Rows are sorted by the scanned parameter; converged is 1 or 0.
Exit status: 0 when every check passes, 2 when any is failing or inconclusive.";

#[derive(Parser, Debug)]
#[command(name = "pointground", version, about = "Ground states with a point interaction: solve, scan, verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimize one problem at fixed mass and write the result record
    Solve(SolveArgs),
    /// Scan the ground-state level over masses or over mass splittings
    #[command(after_help = SCAN_HELP)]
    Scan(ScanArgs),
    /// Run the identity suite, the GN scan and the scaling-path probe
    Verify(CommonArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON file with any of the flag values (snake_case keys); flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// nlse, kirchhoff or sp
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    /// Mass ρ (the constraint is ‖u‖² = ρ²)
    #[arg(long)]
    mass: Option<f64>,
    /// Admit p ≥ 5/2 for the Kirchhoff and SP problems
    #[arg(long)]
    allow_supercritical: bool,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Random starts in addition to the deterministic family
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads for independent solves [default: $POINTGROUND_JOBS or 1]
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Include the φ samples in the output record
    #[arg(long)]
    include_phi: bool,
    /// Minimize with the charge pinned at q = 0
    #[arg(long)]
    fix_q_zero: bool,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    kind: Option<ScanKindArg>,
    /// Strictly decreasing masses for --kind mass
    #[arg(long, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    /// Split points in (0, mass) for --kind subadd
    #[arg(long, value_delimiter = ',')]
    mus: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ScanKindArg {
    Mass,
    Subadd,
}

/// Every setting a run can take, from a config file, flags, or both.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    subcommand: Option<String>,
    problem: Option<String>,
    alpha: Option<f64>,
    p: Option<f64>,
    mass: Option<f64>,
    allow_supercritical: Option<bool>,
    grid_n: Option<usize>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    max_iter: Option<usize>,
    grad_tol: Option<f64>,
    step0: Option<f64>,
    armijo_c: Option<f64>,
    armijo_shrink: Option<f64>,
    restarts: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<Format>,
    include_phi: Option<bool>,
    fix_q_zero: Option<bool>,
    kind: Option<ScanKindArg>,
    masses: Option<Vec<f64>>,
    mus: Option<Vec<f64>>,
    jobs: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl RunConfig {
    fn overlay(mut self, top: RunConfig) -> RunConfig {
        overlay!(
            self, top, subcommand, problem, alpha, p, mass, allow_supercritical, grid_n, r_min, r_max, max_iter,
            grad_tol, step0, armijo_c, armijo_shrink, restarts, seed, out, format, include_phi, fix_q_zero, kind,
            masses, mus, jobs
        );
        self
    }

    fn spec(&self) -> Result<ProblemSpec, Failure> {
        let kind: ProblemKind = self
            .problem
            .as_deref()
            .unwrap_or("nlse")
            .parse()
            .map_err(|e: Error| Failure::Usage(e.to_string()))?;
        Ok(ProblemSpec::with_flag(
            kind,
            self.alpha.unwrap_or(DEFAULT_ALPHA),
            self.p.unwrap_or(DEFAULT_P),
            self.mass.unwrap_or(DEFAULT_MASS),
            self.allow_supercritical.unwrap_or(false),
        )?)
    }

    fn grid(&self) -> GridDescriptor {
        let d = GridDescriptor::default();
        GridDescriptor {
            n: self.grid_n.unwrap_or(d.n),
            r_min: self.r_min.unwrap_or(d.r_min),
            r_max: self.r_max.unwrap_or(d.r_max),
        }
    }

    fn options(&self) -> Result<SolveOptions, Failure> {
        let d = SolveOptions::default();
        let o = SolveOptions {
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            step0: self.step0.unwrap_or(d.step0),
            armijo_c: self.armijo_c.unwrap_or(d.armijo_c),
            armijo_shrink: self.armijo_shrink.unwrap_or(d.armijo_shrink),
            restarts: self.restarts.unwrap_or(d.restarts),
            seed: self.seed.unwrap_or(d.seed),
            grid: self.grid(),
            record_history: false,
        };
        o.validate()?;
        Ok(o)
    }

    fn jobs(&self) -> Result<usize, Failure> {
        let jobs = match self.jobs {
            Some(j) => j,
            None => match std::env::var("POINTGROUND_JOBS") {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("POINTGROUND_JOBS must be a positive integer, got {v:?}")))?,
                Err(_) => 1,
            },
        };
        if jobs == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        Ok(jobs)
    }
}

impl From<&CommonArgs> for RunConfig {
    fn from(a: &CommonArgs) -> Self {
        RunConfig {
            problem: a.problem.clone(),
            alpha: a.alpha,
            p: a.p,
            mass: a.mass,
            allow_supercritical: a.allow_supercritical.then_some(true),
            grid_n: a.grid_n,
            r_min: a.r_min,
            r_max: a.r_max,
            max_iter: a.max_iter,
            grad_tol: a.grad_tol,
            restarts: a.restarts,
            seed: a.seed,
            out: a.out.clone(),
            format: a.format,
            jobs: a.jobs,
            ..RunConfig::default()
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::AllStartsDiverged { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
}

fn resolve(common: &CommonArgs, name: &str, extra: RunConfig) -> Result<RunConfig, Failure> {
    let file = match &common.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = &file.subcommand {
        if s != name {
            return Err(Failure::Usage(format!("config is for `{s}`, not `{name}`")));
        }
    }
    Ok(file.overlay(RunConfig::from(common)).overlay(extra))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Usage(format!("cannot write output: {e}")))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn record_csv(r: &ResultRecord) -> String {
    let header = "problem,alpha,p,rho,energy,h,c,b,omega,q,lambda,grad_residual,iterations,converged,start_id,fix_q_zero,n,r_min,r_max";
    let f = |v: f64| format_float(v);
    let row = [
        r.problem.name().to_string(),
        f(r.alpha),
        f(r.p),
        f(r.rho),
        f(r.energy),
        f(r.h),
        f(r.c),
        r.b.map(f).unwrap_or_default(),
        f(r.omega),
        f(r.q),
        f(r.lambda),
        f(r.grad_residual),
        r.iterations.to_string(),
        r.converged.to_string(),
        r.start_id.to_string(),
        r.fix_q_zero.to_string(),
        r.grid.n.to_string(),
        f(r.grid.r_min),
        f(r.grid.r_max),
    ];
    format!("{header}\n{}\n", row.join(","))
}

fn warn_supercritical(spec: &ProblemSpec) {
    if spec.is_supercritical() {
        eprintln!("warning: p = {} is outside the range covered by the existence theory", spec.p());
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<bool, Failure> {
    let extra = RunConfig {
        include_phi: args.include_phi.then_some(true),
        fix_q_zero: args.fix_q_zero.then_some(true),
        ..RunConfig::default()
    };
    let cfg = resolve(&args.common, "solve", extra)?;
    if cfg.kind.is_some() || cfg.masses.is_some() || cfg.mus.is_some() {
        return Err(Failure::Usage("kind, masses and mus apply to `scan` only".into()));
    }
    let spec = cfg.spec()?;
    warn_supercritical(&spec);
    let options = cfg.options()?;
    let include_phi = cfg.include_phi.unwrap_or(false);
    let format = cfg.format.unwrap_or(Format::Json);
    if include_phi && format == Format::Csv {
        return Err(Failure::Usage("--include-phi needs JSON output".into()));
    }
    let grid = Arc::new(options.grid.build()?);
    let pinned = cfg.fix_q_zero.unwrap_or(false);
    let result: GroundStateResult = in_pool(cfg.jobs()?, || multistart_on(&spec, &options, pinned, &grid))??;
    let record = result.to_record(&spec, include_phi);
    let text = match format {
        Format::Json => to_json(&record),
        Format::Csv => record_csv(&record),
    };
    emit(cfg.out.as_deref(), &text)?;
    if !result.converged {
        eprintln!(
            "not converged after {} iterations (residual {:e})",
            result.iterations, result.grad_residual
        );
    }
    Ok(result.converged)
}

fn report_failures(rep: &ScanReport) {
    for c in rep.failures() {
        eprintln!(
            "{}: {} = {} (tolerance {})",
            status_name(c.status),
            c.name,
            format_float(c.value),
            format_float(c.tolerance)
        );
    }
}

fn cmd_scan(args: &ScanArgs) -> Result<bool, Failure> {
    let extra = RunConfig {
        kind: args.kind,
        masses: args.masses.clone(),
        mus: args.mus.clone(),
        ..RunConfig::default()
    };
    let cfg = resolve(&args.common, "scan", extra)?;
    if cfg.include_phi.is_some() || cfg.fix_q_zero.is_some() {
        return Err(Failure::Usage("include_phi and fix_q_zero apply to `solve` only".into()));
    }
    let kind = cfg
        .kind
        .ok_or_else(|| Failure::Usage("scan needs --kind mass|subadd".into()))?;
    let options = cfg.options()?;
    let jobs = cfg.jobs()?;
    let report = match kind {
        ScanKindArg::Mass => {
            let masses = cfg
                .masses
                .clone()
                .ok_or_else(|| Failure::Usage("--kind mass needs --masses".into()))?;
            let first = *masses
                .first()
                .ok_or_else(|| Failure::Usage("mass list is empty".into()))?;
            let spec = RunConfig { mass: Some(first), ..cfg.clone() }.spec()?;
            warn_supercritical(&spec);
            in_pool(jobs, || small_mass_scan(&spec, &masses, &options))??
        }
        ScanKindArg::Subadd => {
            let mut mus = cfg
                .mus
                .clone()
                .ok_or_else(|| Failure::Usage("--kind subadd needs --mus".into()))?;
            if mus.iter().any(|m| m.is_nan()) {
                return Err(Failure::Usage("μ values must be numbers".into()));
            }
            mus.sort_by(f64::total_cmp);
            let spec = cfg.spec()?;
            warn_supercritical(&spec);
            in_pool(jobs, || subadditivity_scan(&spec, &mus, &options))??
        }
    };
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
    };
    emit(cfg.out.as_deref(), &text)?;
    report_failures(&report);
    Ok(report.passed())
}

fn cmd_verify(args: &CommonArgs) -> Result<bool, Failure> {
    let cfg = resolve(args, "verify", RunConfig::default())?;
    if cfg.kind.is_some() || cfg.masses.is_some() || cfg.mus.is_some() || cfg.include_phi.is_some() {
        return Err(Failure::Usage("kind, masses, mus and include_phi do not apply to `verify`".into()));
    }
    let spec = cfg.spec()?;
    let options = cfg.options()?;
    let seed = cfg.seed.unwrap_or(DEFAULT_VERIFY_SEED);
    let grid = Arc::new(RadialGrid::from_descriptor(&options.grid)?);
    let reports = in_pool(cfg.jobs()?, || -> Result<Vec<ScanReport>, Error> {
        let ident = identity_suite(&grid);
        let gn = gn_scan(&grid, &LP_EXPONENTS, GN_SAMPLES, seed)?;
        let ground = multistart_on(&spec, &options, false, &grid)?;
        let probe = pohozaev_probe(&spec, &ground, &PROBE_BETAS)?;
        Ok(vec![ident, gn, probe])
    })??;

    let mut table = String::new();
    let width = reports
        .iter()
        .flat_map(|r| r.checks.iter().map(|c| c.name.len()))
        .max()
        .unwrap_or(10);
    for rep in &reports {
        table.push_str(&format!("# {}\n", rep.label));
        for c in &rep.checks {
            table.push_str(&format!(
                "{:<12} {:<width$} {:>24} {:>24}\n",
                status_name(c.status),
                c.name,
                format_float(c.value),
                format_float(c.tolerance),
            ));
        }
    }
    let passed = reports.iter().all(ScanReport::passed);
    table.push_str(if passed { "all checks passed\n" } else { "some checks FAILED\n" });

    match (&cfg.out, cfg.format.unwrap_or(Format::Json)) {
        (Some(path), Format::Json) => {
            emit(None, &table)?;
            emit(Some(path), &to_json(&reports))?;
        }
        (Some(path), Format::Csv) => {
            emit(None, &table)?;
            let mut csv = String::from("report,");
            csv.push_str(reports[0].checks_csv().lines().next().unwrap_or_default());
            csv.push('\n');
            for rep in &reports {
                for line in rep.checks_csv().lines().skip(1) {
                    csv.push_str(&format!("{:?},{line}\n", rep.kind).to_lowercase());
                }
            }
            emit(Some(path), &csv)?;
        }
        (None, _) => emit(None, &table)?,
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Scan(a) => cmd_scan(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_NUMERICAL),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
    }
}
