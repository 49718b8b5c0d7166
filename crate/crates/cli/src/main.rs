//! Command-line front door: rates, threshold tables, exact-oracle
//! verification, Monte Carlo, groupthink diagnostics and figure data,
//! all emitted as stable CSV.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 resource limit.

// negated float comparisons are the NaN-rejecting forms of the guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groupthink_core::error::Error as CoreError;
use groupthink_core::model::ModelParams;
use groupthink_core::oracle::{
    exact_error_curves, oracle_regime_table, prefix_sum, verify_sigma_dominance,
    verify_w_characterization_with_bounds, Regime,
};
use groupthink_core::rates::{rate_report, regime_b_error_prob_rational};
use groupthink_core::rational::RationalParams;
use groupthink_core::sim::{simulate, SimConfig, SimRegime};
use groupthink_core::thresholds::{
    compute_thresholds, compute_thresholds_rational, groupthink_profile,
};
use groupthink_core::Action;

use output::{format_rational, format_real, CsvWriter};

#[derive(Parser)]
#[command(
    name = "groupthink",
    about = "Exact and asymptotic learning rates for two Bayesian agents who observe each other's actions",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// All asymptotic rates and efficiencies for one signal strength
    Rates(RatesArgs),
    /// Threshold recursion, survival probabilities and rate estimates
    Thresholds(ThresholdsArgs),
    /// Exact-oracle verification at small horizons (rational arithmetic)
    Verify(VerifyArgs),
    /// Monte Carlo frequency estimates with exact references
    Simulate(SimulateArgs),
    /// Conditional signal profile on the all-wrong event
    Groupthink(GroupthinkArgs),
    /// Figure data: efficiency and rate curves over a p grid
    Figures(FiguresArgs),
}

#[derive(Args)]
struct RatesArgs {
    /// Signal strength, 1/2 < p < 1
    #[arg(long)]
    p: f64,
    /// Output file (defaults to standard output)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdsArgs {
    #[arg(long)]
    p: f64,
    /// Number of periods to run the recursion
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Signal strength as an exact rational ("3/4" or "0.75")
    #[arg(long)]
    p: String,
    /// Enumeration horizon (bidirectional checks need n <= 8)
    #[arg(long)]
    n: usize,
    /// Restrict the checks to one regime (A, B, C or D)
    #[arg(long)]
    regime: Option<String>,
    /// Corrupt the threshold table first, to demonstrate failure reporting
    #[arg(long, default_value_t = false)]
    break_thresholds: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// A, B, C, or G (threshold survival)
    #[arg(long)]
    regime: String,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    runs: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GroupthinkArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    n: usize,
    /// Concentration margin below the fixed point hat_t
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FiguresArgs {
    /// Figure id: 1 efficiencies, 2 a_p, 3 a_p and b_p, 4 b_p/a_p,
    /// 5 b_p/a_p and g_bar/a_p
    #[arg(long)]
    id: u32,
    #[arg(long, default_value_t = 0.51)]
    grid_start: f64,
    #[arg(long, default_value_t = 0.99)]
    grid_end: f64,
    #[arg(long, default_value_t = 0.005)]
    grid_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RESOURCE: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version are successful exits
            if err.use_stderr() {
                eprint!("{err}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    init_worker_pool();
    let outcome = match cli.command {
        Command::Rates(args) => cmd_rates(args),
        Command::Thresholds(args) => cmd_thresholds(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Groupthink(args) => cmd_groupthink(args),
        Command::Figures(args) => cmd_figures(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CoreError::Resource(_) => ExitCode::from(EXIT_RESOURCE),
                _ => ExitCode::from(EXIT_USAGE),
            }
        }
    }
}

/// Worker count for parallel sections, from GROUPTHINK_WORKERS
/// (default: all cores).
fn init_worker_pool() {
    if let Ok(value) = std::env::var("GROUPTHINK_WORKERS") {
        if let Ok(workers) = value.parse::<usize>() {
            if workers >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build_global();
            }
        }
    }
}

fn cmd_rates(args: RatesArgs) -> Result<ExitCode, CoreError> {
    let params = ModelParams::new(args.p)?;
    let r = rate_report(&params)?;
    let mut csv = CsvWriter::create(args.out.as_deref())?;
    csv.header(&[
        "p",
        "rate_no_obs",
        "threshold_fraction",
        "threshold_prob",
        "rate_unidirectional",
        "rate_all_actions",
        "groupthink_fraction",
        "groupthink_prob",
        "groupthink_prob_flip",
        "rate_groupthink",
        "rate_bidirectional_bound",
        "eff_unidirectional",
        "eff_bidirectional_bound",
    ])?;
    csv.row(&[
        format_real(r.p),
        format_real(r.rate_no_obs),
        format_real(r.threshold_fraction),
        format_real(r.threshold_prob),
        format_real(r.rate_unidirectional),
        format_real(r.rate_all_actions),
        format_real(r.groupthink_fraction),
        format_real(r.groupthink_prob),
        format_real(r.groupthink_prob_flip),
        format_real(r.rate_groupthink),
        format_real(r.rate_bidirectional_bound),
        format_real(r.eff_unidirectional),
        format_real(r.eff_bidirectional_bound),
    ])?;
    csv.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_thresholds(args: ThresholdsArgs) -> Result<ExitCode, CoreError> {
    let params = ModelParams::new(args.p)?;
    if args.n == 0 {
        return Err(CoreError::InvalidParameter("need n >= 1".into()));
    }
    let (seq, table) = compute_thresholds(&params, args.n)?;
    let mut csv = CsvWriter::create(args.out.as_deref())?;
    csv.header(&[
        "k",
        "t_k",
        "effective_bound",
        "log_w_plus",
        "log_w_minus",
        "t_over_k",
        "g_rate_estimate",
    ])?;
    for k in 1..=args.n {
        csv.row(&[
            k.to_string(),
            format_real(seq.t[k - 1]),
            seq.effective[k - 1].to_string(),
            format_real(table.log_w_plus[k]),
            format_real(table.log_w_minus[k]),
            format_real(seq.t[k - 1] / k as f64),
            format_real(-2.0 * table.log_w_plus[k] / k as f64),
        ])?;
    }
    csv.finish()?;
    if !table.boundary_flags.is_empty() {
        eprintln!(
            "note: boundary comparisons inside the guard band at k = {:?} (exact ties)",
            table.boundary_flags
        );
    }
    Ok(ExitCode::SUCCESS)
}

struct CheckOutcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode, CoreError> {
    let params = RationalParams::parse(&args.p)?;
    let regimes: Vec<Regime> = match &args.regime {
        Some(text) => vec![Regime::parse(text)?],
        None => vec![Regime::A, Regime::B, Regime::C, Regime::D],
    };
    for regime in &regimes {
        if args.n > regime.max_periods() {
            return Err(CoreError::Resource(format!(
                "regime {regime} checks are bounded at n <= {}",
                regime.max_periods()
            )));
        }
    }
    let mut checks: Vec<CheckOutcome> = Vec::new();
    for regime in &regimes {
        match regime {
            Regime::A => checks.push(check_sign_rule(&params, args.n)?),
            Regime::B => checks.push(check_last_action(&params, args.n)?),
            Regime::C => checks.push(check_dominance(&params, args.n)?),
            Regime::D => checks.push(check_groupthink_event(
                &params,
                args.n,
                args.break_thresholds,
            )?),
        }
    }
    let mut csv = CsvWriter::create(args.out.as_deref())?;
    csv.header(&["check", "status", "detail"])?;
    let mut all_passed = true;
    for c in &checks {
        all_passed &= c.passed;
        csv.row(&[
            c.name.to_string(),
            if c.passed { "pass" } else { "fail" }.to_string(),
            c.detail.clone(),
        ])?;
        eprintln!(
            "{}: {} ({})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    csv.finish()?;
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY_FAILED)
    })
}

fn check_sign_rule(params: &RationalParams, n: usize) -> Result<CheckOutcome, CoreError> {
    let table = oracle_regime_table(params, n, Regime::A)?;
    let mut bad = 0u64;
    for row in table.rows() {
        for k in 0..n {
            if row.action1(k) != Action::from_sign(prefix_sum(row.bits1, k + 1)) {
                bad += 1;
            }
        }
    }
    Ok(CheckOutcome {
        name: "regime A sign rule",
        passed: bad == 0,
        detail: format!("{bad} deviations over {} joint paths", table.rows().len()),
    })
}

fn check_last_action(params: &RationalParams, n: usize) -> Result<CheckOutcome, CoreError> {
    let curves = exact_error_curves(params, n, Regime::B)?;
    let mut bad = Vec::new();
    for (k, err) in curves.iter().enumerate() {
        let direct = regime_b_error_prob_rational(params, k + 1)?;
        if *err != direct {
            bad.push(k + 1);
        }
    }
    Ok(CheckOutcome {
        name: "regime B enumerated vs cutoff error",
        passed: bad.is_empty(),
        detail: if bad.is_empty() {
            format!("exact match for all {n} periods")
        } else {
            format!("mismatch at periods {bad:?}")
        },
    })
}

fn check_dominance(params: &RationalParams, n: usize) -> Result<CheckOutcome, CoreError> {
    let r = verify_sigma_dominance(params, n)?;
    Ok(CheckOutcome {
        name: "utility dominance u(C) >= u(B) >= u(A)",
        passed: r.ordering_holds(),
        detail: format!(
            "u(C)={} u(B)={} u(A)={}",
            r.u_all_actions, r.u_last_action, r.u_no_obs
        ),
    })
}

fn check_groupthink_event(
    params: &RationalParams,
    n: usize,
    break_thresholds: bool,
) -> Result<CheckOutcome, CoreError> {
    let bounds = if break_thresholds {
        // tighten the final bound so surviving boundary paths fall out of
        // the walk event while staying inside the groupthink event
        let mut b = compute_thresholds_rational(params, n)?.effective;
        if let Some(last) = b.last_mut() {
            *last -= 2;
        }
        eprintln!("note: threshold table deliberately corrupted (--break-thresholds)");
        Some(b)
    } else {
        None
    };
    let report = verify_w_characterization_with_bounds(params, n, bounds.as_deref())?;
    if !report.mismatches.is_empty() {
        for (b1, b2) in report.mismatches.iter().take(16) {
            eprintln!(
                "mismatch: joint path bits1={b1:#0width$b} bits2={b2:#0width$b}",
                width = n + 2
            );
        }
        if report.mismatches.len() > 16 {
            eprintln!("... {} mismatches total", report.mismatches.len());
        }
    }
    Ok(CheckOutcome {
        name: "groupthink event factorization",
        passed: report.holds(),
        detail: format!(
            "{} mismatches; P+[G_n]={} P+[W_n]={}",
            report.mismatches.len(),
            format_rational(&report.groupthink_prob),
            format_rational(&report.survival_prob)
        ),
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, CoreError> {
    let config = SimConfig {
        p: args.p,
        n: args.n,
        runs: args.runs,
        seed: args.seed,
        regime: SimRegime::parse(&args.regime)?,
    };
    let result = simulate(&config)?;
    let mut csv = CsvWriter::create(args.out.as_deref())?;
    csv.header(&["k", "frequency", "std_error", "exact", "delta"])?;
    for k in 0..args.n {
        csv.row(&[
            (k + 1).to_string(),
            format_real(result.freq[k]),
            format_real(result.std_err[k]),
            result.exact[k].map(format_real).unwrap_or_default(),
            result.delta[k].map(format_real).unwrap_or_default(),
        ])?;
    }
    csv.finish()?;
    eprintln!(
        "simulated regime {} at p={} for {} runs (seed {})",
        config.regime, config.p, config.runs, config.seed
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_groupthink(args: GroupthinkArgs) -> Result<ExitCode, CoreError> {
    let params = ModelParams::new(args.p)?;
    let (hat_t, hat_p) =
        groupthink_core::rates::solve_groupthink_fixed_point(&params, 1e-12)?;
    let profile = groupthink_profile(&params, args.n, args.eps)?;
    let (_, table) = compute_thresholds(&params, args.n)?;
    let g_estimate = -2.0 * table.log_w_plus[args.n] / args.n as f64;
    let mut csv = CsvWriter::create(args.out.as_deref())?;
    csv.header(&["p", "n", "eps", "hat_t", "hat_p", "cond_prob", "g_rate_estimate"])?;
    csv.row(&[
        format_real(args.p),
        args.n.to_string(),
        format_real(args.eps),
        format_real(hat_t),
        format_real(hat_p),
        format_real(profile),
        format_real(g_estimate),
    ])?;
    csv.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_figures(args: FiguresArgs) -> Result<ExitCode, CoreError> {
    if !(0.5 < args.grid_start && args.grid_start < args.grid_end && args.grid_end < 1.0) {
        return Err(CoreError::InvalidParameter(
            "grid must satisfy 0.5 < start < end < 1".into(),
        ));
    }
    if !(args.grid_step > 0.0) {
        return Err(CoreError::InvalidParameter("grid step must be positive".into()));
    }
    let mut grid = Vec::new();
    let mut p = args.grid_start;
    while p <= args.grid_end + 1e-12 {
        grid.push(p.min(args.grid_end));
        p += args.grid_step;
    }
    use rayon::prelude::*;
    let reports = grid
        .par_iter()
        .map(|&p| rate_report(&ModelParams::new(p)?))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = CsvWriter::create(args.out.as_deref())?;
    match args.id {
        1 => {
            csv.header(&["p", "eff_unidirectional", "eff_bidirectional_bound"])?;
            for r in &reports {
                csv.row(&[
                    format_real(r.p),
                    format_real(r.eff_unidirectional),
                    format_real(r.eff_bidirectional_bound),
                ])?;
            }
        }
        2 => {
            csv.header(&["p", "rate_no_obs"])?;
            for r in &reports {
                csv.row(&[format_real(r.p), format_real(r.rate_no_obs)])?;
            }
        }
        3 => {
            csv.header(&["p", "rate_no_obs", "rate_unidirectional"])?;
            for r in &reports {
                csv.row(&[
                    format_real(r.p),
                    format_real(r.rate_no_obs),
                    format_real(r.rate_unidirectional),
                ])?;
            }
        }
        4 => {
            csv.header(&["p", "ratio_uni_over_no_obs"])?;
            for r in &reports {
                csv.row(&[
                    format_real(r.p),
                    format_real(r.rate_unidirectional / r.rate_no_obs),
                ])?;
            }
        }
        5 => {
            csv.header(&["p", "ratio_uni_over_no_obs", "ratio_groupthink_over_no_obs"])?;
            for r in &reports {
                csv.row(&[
                    format_real(r.p),
                    format_real(r.rate_unidirectional / r.rate_no_obs),
                    format_real(r.rate_groupthink / r.rate_no_obs),
                ])?;
            }
        }
        other => {
            return Err(CoreError::InvalidParameter(format!(
                "unknown figure id {other}; expected 1..=5"
            )));
        }
    }
    csv.finish()?;
    Ok(ExitCode::SUCCESS)
}
