//! Batch front end: solve, certify, sweep, and chain-coefficient tables.
//!
//! Exit codes are scriptable: 0 solved and certified, 2 no shooting bracket
//! (the nonexistence side), 3 certification failure, 1 usage/config/IO error.

use clap::{Args, Parser, Subcommand};
use pqground::certificates::{certify, nonexistence_certificate, CertificateReport};
use pqground::config::{nonlinearity_hash, operator_hash, Config};
use pqground::grid::{write_profile_csv, ProfileRecord};
use pqground::nonlinearity::NonlinearitySpec;
use pqground::operator::{bi_chain_coefficients, OperatorSpec};
use pqground::shooting::{multi_start_observed, ScanRow, ShootingConfig, SolveError};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_NO_BRACKET: u8 = 2;
const EXIT_NOT_CERTIFIED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pqground",
    about = "Radial ground states of (p,q)-Laplacian and Born-Infeld-type equations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured problem and certify the result.
    Solve(SolveArgs),
    /// Re-certify a stored profile against the configured problem.
    Certify(CertifyArgs),
    /// Run a Cartesian parameter sweep, one solve per cell.
    Sweep(SweepArgs),
    /// Print Born-Infeld chain coefficients with the Taylor cross-check.
    Coeffs(CoeffsArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Problem description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides PQGROUND_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the grid resolution (cells).
    #[arg(long)]
    resolution: Option<usize>,
    /// Override the integrator relative tolerance.
    #[arg(long)]
    rtol: Option<f64>,
    /// Override the scan range, as lo:hi:count.
    #[arg(long)]
    scan: Option<String>,
    /// Table output format.
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Suppress progress rows.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Stored profile (JSON) to re-certify.
    #[arg(long)]
    profile: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Bounded worker count for concurrent cells.
    #[arg(long, default_value_t = 4)]
    workers: usize,
}

#[derive(Args)]
struct CoeffsArgs {
    #[arg(long)]
    k: u32,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

fn main() -> ExitCode {
    // Behave like a normal unix tool when stdout is a closed pipe
    // (e.g. `pqground solve ... | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests are successes; everything else is usage.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let code = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Certify(args) => cmd_certify(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Coeffs(args) => cmd_coeffs(&args),
    };
    match code {
        Ok(c) => ExitCode::from(c),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

// ---------------------------------------------------------------------------
// Shared setup
// ---------------------------------------------------------------------------

struct Problem {
    config: Config,
    op: OperatorSpec,
    spec: NonlinearitySpec,
    shooting: ShootingConfig,
    out_dir: PathBuf,
    format: String,
}

fn load_problem(common: &CommonArgs) -> Result<Problem, String> {
    let config = Config::from_path(&common.config).map_err(|e| e.to_string())?;
    let problem = build_problem(config, common)?;
    fs::create_dir_all(&problem.out_dir)
        .map_err(|e| format!("cannot create output dir {}: {e}", problem.out_dir.display()))?;
    Ok(problem)
}

fn build_problem(config: Config, common: &CommonArgs) -> Result<Problem, String> {
    let op = config.operator().map_err(|e| e.to_string())?;
    let spec = config
        .nonlinearity(&op)
        .map_err(|e| e.to_string())?
        .truncate();
    let mut shooting = config.shooting_config();
    if let Some(m) = common.resolution {
        shooting.resolution = m;
    }
    if let Some(rtol) = common.rtol {
        shooting.rtol = rtol;
    }
    if let Some(scan) = &common.scan {
        let parts: Vec<&str> = scan.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("--scan expects lo:hi:count, got \"{scan}\""));
        }
        shooting.scan_lo = parts[0].parse().map_err(|_| "bad scan lo")?;
        shooting.scan_hi = parts[1].parse().map_err(|_| "bad scan hi")?;
        shooting.scan_count = parts[2].parse().map_err(|_| "bad scan count")?;
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("PQGROUND_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let format = common
        .format
        .clone()
        .unwrap_or_else(|| config.output.format.clone());
    Ok(Problem {
        config,
        op,
        spec,
        shooting,
        out_dir,
        format,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn write_scan_table(path: &Path, rows: &[ScanRow], format: &str) -> Result<(), String> {
    if format == "json" {
        return write_json(path, &rows);
    }
    let mut text = String::from("phase,u0,outcome,event_radius\n");
    for row in rows {
        let phase = match row.phase {
            pqground::shooting::ScanPhase::Scan => "scan",
            pqground::shooting::ScanPhase::Bisect => "bisect",
        };
        let radius = row
            .event_radius
            .map(|r| format!("{r:.17e}"))
            .unwrap_or_default();
        text.push_str(&format!("{phase},{:.17e},{},{radius}\n", row.u0, row.outcome));
    }
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn print_certificate_table(report: &CertificateReport, tol: &pqground::Tolerances) {
    let line = |name: &str, value: f64, tol: f64, ok: bool| {
        println!(
            "  {name:<22} {value:>12.3e}  (tol {tol:>8.1e})  {}",
            if ok { "pass" } else { "FAIL" }
        );
    };
    println!("certificate:");
    line("pohozaev", report.pohozaev_residual, tol.pohozaev, report.pohozaev_ok);
    line("nehari", report.nehari_residual, tol.nehari, report.nehari_ok);
    line(
        "action relation",
        report.action_relation_residual,
        tol.action_relation,
        report.action_ok,
    );
    line(
        "decay stability",
        report.decay_stability,
        tol.decay_stability,
        report.decay_ok,
    );
    line(
        "tail defect",
        report
            .pohozaev_tail_defect
            .max(report.nehari_tail_defect)
            .max(report.action_tail_defect),
        tol.max_tail_defect,
        report.tail_defect_ok,
    );
    println!(
        "  {:<22} {:>12}  {:>16}  {}",
        "positivity",
        if report.positivity_ok { "u > 0" } else { "violated" },
        "",
        if report.positivity_ok { "pass" } else { "FAIL" }
    );
    println!(
        "  decay statistic sup r^((N-p)/p)|u|/|grad u|_p = {:.6}",
        report.decay_statistic
    );
    println!("  overall: {}", if report.pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

fn cmd_solve(args: &SolveArgs) -> Result<u8, String> {
    let p = load_problem(&args.common)?;
    // Advisory hypothesis report; solving proceeds regardless.
    if let Ok(assumptions) = p.spec.validate_assumptions(&p.op) {
        write_json(&p.out_dir.join("assumptions.json"), &assumptions)?;
        if !assumptions.all_hold() && !args.common.quiet {
            eprintln!("note: some sampled hypotheses are violated (see assumptions.json)");
        }
    }
    let quiet = args.common.quiet;
    let result = multi_start_observed(&p.spec, &p.op, &p.shooting, &mut |row| {
        if !quiet {
            let radius = row
                .event_radius
                .map(|r| format!(" at r = {r:.4}"))
                .unwrap_or_default();
            eprintln!("  [{:?}] u0 = {:<22} {}{radius}", row.phase, row.u0, row.outcome);
        }
    });

    // The nonexistence certificate applies to pure-power chains.
    let nonexistence = match (&p.op, p.spec.pure_power_alpha) {
        (OperatorSpec::BiChain { k, beta, n_dim, .. }, Some(alpha)) => {
            nonexistence_certificate(alpha, *n_dim, *k, *beta).ok()
        }
        _ => None,
    };
    if let Some(cert) = &nonexistence {
        write_json(&p.out_dir.join("nonexistence.json"), cert)?;
    }

    match result {
        Ok(gs) => {
            let scan_name = if p.format == "json" { "scan.json" } else { "scan.csv" };
            write_scan_table(&p.out_dir.join(scan_name), &gs.scan, &p.format)?;
            let record = ProfileRecord::from_profile(
                &gs.profile,
                &operator_hash(&p.op),
                &nonlinearity_hash(&p.spec),
            );
            write_json(&p.out_dir.join("profile.json"), &record)?;
            let mut csv = Vec::new();
            write_profile_csv(&mut csv, &gs.profile).map_err(|e| e.to_string())?;
            fs::write(p.out_dir.join("profile.csv"), csv).map_err(|e| e.to_string())?;

            let tol = p.config.tolerances();
            let report = certify(&gs.profile, &p.spec, &p.op, &tol);
            write_json(&p.out_dir.join("certificate.json"), &report)?;
            println!(
                "solution: u(0) = {:.12}, action = {:.10}, outcome = {}",
                gs.u0,
                gs.action,
                gs.outcome.label()
            );
            if gs.candidates.len() > 1 {
                println!("candidates ({} brackets):", gs.candidates.len());
                for c in &gs.candidates {
                    println!("  u0 = {:<22} action = {:<18} {}", c.u0, c.action, c.outcome);
                }
            }
            print_certificate_table(&report, &tol);
            Ok(if report.pass { EXIT_OK } else { EXIT_NOT_CERTIFIED })
        }
        Err(SolveError::NoBracket { scan }) => {
            let scan_name = if p.format == "json" { "scan.json" } else { "scan.csv" };
            write_scan_table(&p.out_dir.join(scan_name), &scan, &p.format)?;
            println!(
                "no shooting bracket over the scan range (scan table written to {})",
                p.out_dir.join(scan_name).display()
            );
            if let Some(cert) = &nonexistence {
                println!(
                    "nonexistence certificate: {}",
                    if cert.certified {
                        "CERTIFIED (all identity coefficients nonpositive)"
                    } else {
                        "not applicable"
                    }
                );
                for (j, c) in cert.coefficients.iter().enumerate() {
                    println!("  c_{} = {c:.6}", j + 1);
                }
            }
            Ok(EXIT_NO_BRACKET)
        }
        Err(e) => Err(e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

fn cmd_certify(args: &CertifyArgs) -> Result<u8, String> {
    let p = load_problem(&args.common)?;
    let text = fs::read_to_string(&args.profile)
        .map_err(|e| format!("cannot read {}: {e}", args.profile.display()))?;
    let record: ProfileRecord =
        serde_json::from_str(&text).map_err(|e| format!("bad profile file: {e}"))?;
    if record.meta.operator != operator_hash(&p.op)
        || record.meta.nonlinearity != nonlinearity_hash(&p.spec)
    {
        return Err("profile metadata does not match the configured problem".to_string());
    }
    let profile = record.into_profile().map_err(|e| e.to_string())?;
    let tol = p.config.tolerances();
    let report = certify(&profile, &p.spec, &p.op, &tol);
    write_json(&p.out_dir.join("certificate.json"), &report)?;
    print_certificate_table(&report, &tol);
    Ok(if report.pass { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SweepRow {
    alpha: f64,
    k: u32,
    beta: f64,
    n: u32,
    resolution: usize,
    outcome: String,
    u0: Option<f64>,
    action: Option<f64>,
    pohozaev: Option<f64>,
    nehari: Option<f64>,
    action_relation: Option<f64>,
    certified: bool,
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8, String> {
    let p = load_problem(&args.common)?;
    let cells = p.config.sweep_cells().map_err(|e| e.to_string())?;
    let quiet = args.common.quiet;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    use rayon::prelude::*;
    let rows: Vec<SweepRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let row_base = (cell.alpha, cell.k, cell.beta, cell.n, cell.resolution);
                let run = || -> Result<SweepRow, String> {
                    let op = cell.config.operator().map_err(|e| e.to_string())?;
                    let spec = cell
                        .config
                        .nonlinearity(&op)
                        .map_err(|e| e.to_string())?
                        .truncate();
                    let mut shooting = cell.config.shooting_config();
                    if let Some(m) = args.common.resolution {
                        shooting.resolution = m;
                    }
                    if let Some(rtol) = args.common.rtol {
                        shooting.rtol = rtol;
                    }
                    match multi_start_observed(&spec, &op, &shooting, &mut |_| {}) {
                        Ok(gs) => {
                            let tol = cell.config.tolerances();
                            let rep = certify(&gs.profile, &spec, &op, &tol);
                            Ok(SweepRow {
                                alpha: row_base.0,
                                k: row_base.1,
                                beta: row_base.2,
                                n: row_base.3,
                                resolution: row_base.4,
                                outcome: gs.outcome.label().to_string(),
                                u0: Some(gs.u0),
                                action: Some(gs.action),
                                pohozaev: Some(rep.pohozaev_residual),
                                nehari: Some(rep.nehari_residual),
                                action_relation: Some(rep.action_relation_residual),
                                certified: rep.pass,
                            })
                        }
                        Err(SolveError::NoBracket { .. }) => Ok(SweepRow {
                            alpha: row_base.0,
                            k: row_base.1,
                            beta: row_base.2,
                            n: row_base.3,
                            resolution: row_base.4,
                            outcome: "no_bracket".to_string(),
                            u0: None,
                            action: None,
                            pohozaev: None,
                            nehari: None,
                            action_relation: None,
                            certified: false,
                        }),
                        Err(e) => Err(e.to_string()),
                    }
                };
                run().unwrap_or_else(|e| SweepRow {
                    alpha: row_base.0,
                    k: row_base.1,
                    beta: row_base.2,
                    n: row_base.3,
                    resolution: row_base.4,
                    outcome: format!("error: {e}"),
                    u0: None,
                    action: None,
                    pohozaev: None,
                    nehari: None,
                    action_relation: None,
                    certified: false,
                })
            })
            .collect()
    });

    let path = if p.format == "json" {
        let path = p.out_dir.join("sweep.json");
        write_json(&path, &rows)?;
        path
    } else {
        let mut text =
            String::from("alpha,k,beta,n,resolution,outcome,u0,action,pohozaev,nehari,action_relation,certified\n");
        for r in &rows {
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.alpha,
                r.k,
                r.beta,
                r.n,
                r.resolution,
                r.outcome,
                opt(r.u0),
                opt(r.action),
                opt(r.pohozaev),
                opt(r.nehari),
                opt(r.action_relation),
                r.certified
            ));
        }
        let path = p.out_dir.join("sweep.csv");
        fs::write(&path, text).map_err(|e| e.to_string())?;
        path
    };
    if !quiet {
        for r in &rows {
            println!(
                "alpha={} k={} beta={} n={} m={}: {}{}",
                r.alpha,
                r.k,
                r.beta,
                r.n,
                r.resolution,
                r.outcome,
                r.u0.map(|v| format!(" u0={v:.8}")).unwrap_or_default()
            );
        }
    }
    println!("sweep table written to {}", path.display());
    let any_error = rows.iter().any(|r| r.outcome.starts_with("error"));
    let any_uncertified = rows
        .iter()
        .any(|r| r.outcome != "no_bracket" && !r.outcome.starts_with("error") && !r.certified);
    let any_no_bracket = rows.iter().any(|r| r.outcome == "no_bracket");
    Ok(if any_error || any_uncertified {
        EXIT_NOT_CERTIFIED
    } else if any_no_bracket {
        EXIT_NO_BRACKET
    } else {
        EXIT_OK
    })
}

// ---------------------------------------------------------------------------
// coeffs
// ---------------------------------------------------------------------------

fn cmd_coeffs(args: &CoeffsArgs) -> Result<u8, String> {
    let a = bi_chain_coefficients(args.k, args.beta).map_err(|e| e.to_string())?;
    // Independent cross-check: Taylor coefficients of (1-x)^{-1/2} by the
    // binomial recurrence, rescaled by (2 beta)^{j-1}.
    println!("j, a_j, taylor_reference");
    let mut c = 1.0;
    for (i, &aj) in a.iter().enumerate() {
        if i > 0 {
            c *= (2.0 * i as f64 - 1.0) / (2.0 * i as f64);
        }
        let reference = c * (2.0 * args.beta).powi(i as i32);
        println!("{}, {:.16e}, {:.16e}", i + 1, aj, reference);
    }
    Ok(EXIT_OK)
}
