//! Command-line front end: `solve` runs the nested algorithm on an instance
//! file and writes machine-readable outputs; `verify` cross-checks the
//! algorithm against the exhaustive oracles.
//!
//! Exit codes: 0 success / all checks pass, 1 verification failures,
//! 2 infeasible instance, 3 iteration or enumeration caps hit, 64 usage.

use clap::{Args, Parser, Subcommand, ValueEnum};
use coplan::instance::Scenario;
use coplan::npccg::{log_to_csv, AlgoConfig, CoPlanStatus, Enhancements, NpccgError};
use coplan::suites;
use coplan::{load_instance, solve_coplan, NetworkInstance, SolveParams};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_CAP: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "coplan", version, about = "Line hardening and mobile hydrogen resource co-planning under worst-case restoration targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the co-planning problem on an instance file.
    Solve(SolveArgs),
    /// Cross-check the solver against the exhaustive oracles.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Instance document (JSON).
    #[arg(long)]
    instance: PathBuf,
    /// Override the restoration target in [0, 1].
    #[arg(long)]
    upsilon: Option<f64>,
    /// Override the damage budget.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, value_enum, default_value_t = EnhancementsArg::All)]
    enhancements: EnhancementsArg,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Per-solve time limit in seconds.
    #[arg(long, default_value_t = 600.0)]
    time_limit: f64,
    /// Output directory for result.json and iterations.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Which cross-check to run.
    #[arg(long, value_enum)]
    suite: SuiteArg,
    /// Verify this instance instead of the seeded random set.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of random cases when no instance is given.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnhancementsArg {
    None,
    OuPrime,
    WarmStart,
    All,
}

impl From<EnhancementsArg> for Enhancements {
    fn from(a: EnhancementsArg) -> Self {
        match a {
            EnhancementsArg::None => Enhancements::None,
            EnhancementsArg::OuPrime => Enhancements::OuPrime,
            EnhancementsArg::WarmStart => Enhancements::WarmStart,
            EnhancementsArg::All => Enhancements::All,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    WorstCase,
    Coplan,
    Lemma1,
    Enhancements,
}

#[derive(Serialize)]
struct ScenarioOut {
    damaged_lines: Vec<String>,
    initial_storage_kg: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct ResultOut {
    status: String,
    src_dollars: f64,
    hardened_lines: Vec<String>,
    rented_mhers: Vec<String>,
    preallocation: Vec<(String, String)>,
    worst_scenario: Option<ScenarioOut>,
    certified_ratio: f64,
    outer_iterations: usize,
    inner_iterations_total: usize,
    wall_seconds: f64,
    config: ConfigEcho,
}

#[derive(Serialize)]
struct ConfigEcho {
    schema: u32,
    enhancements: Enhancements,
    seed: u64,
    time_limit_s: f64,
    inner_eps: f64,
    outer_cap: usize,
    inner_cap: usize,
    correction_cap: usize,
    upsilon: f64,
    k: u32,
}

fn scenario_out(inst: &NetworkInstance, s: &Scenario) -> ScenarioOut {
    ScenarioOut {
        damaged_lines: inst
            .vulnerable
            .iter()
            .enumerate()
            .filter(|&(v, _)| !s.intact[v])
            .map(|(_, &l)| inst.lines[l].id.clone())
            .collect(),
        initial_storage_kg: inst
            .fleet
            .units
            .iter()
            .enumerate()
            .map(|(m, u)| (u.id.clone(), s.h0[m]))
            .collect(),
    }
}

fn read_instance(path: &Path) -> Result<NetworkInstance, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read {}: {e}", path.display());
        EXIT_USAGE
    })?;
    load_instance(&text).map_err(|e| {
        eprintln!("{e}");
        EXIT_USAGE
    })
}

fn cmd_solve(args: SolveArgs) -> u8 {
    let mut inst = match read_instance(&args.instance) {
        Ok(i) => i,
        Err(code) => return code,
    };
    if let Some(upsilon) = args.upsilon {
        if !(0.0..=1.0).contains(&upsilon) {
            eprintln!("--upsilon must lie in [0, 1]");
            return EXIT_USAGE;
        }
        inst.resilience_target = upsilon;
    }
    if let Some(k) = args.k {
        if k as usize > inst.vulnerable.len() {
            eprintln!("--k exceeds the vulnerable line count {}", inst.vulnerable.len());
            return EXIT_USAGE;
        }
        inst.k = k;
    }
    let mut cfg = AlgoConfig::default();
    cfg.enhancements = args.enhancements.into();
    cfg.milp = SolveParams {
        time_limit_s: args.time_limit,
        seed: args.seed,
        ..SolveParams::default()
    };

    let solved = solve_coplan(&inst, &cfg);
    let (sol, exit) = match solved {
        Ok(sol) => {
            let exit = match sol.status {
                CoPlanStatus::Optimal => EXIT_OK,
                CoPlanStatus::Infeasible => EXIT_INFEASIBLE,
            };
            (sol, exit)
        }
        Err(NpccgError::OuterCap { cap, best, log }) => {
            eprintln!("outer iteration cap {cap} reached; best plan: {best:?}");
            if let Err(e) = std::fs::create_dir_all(&args.out) {
                eprintln!("cannot create {}: {e}", args.out.display());
            } else {
                let _ = std::fs::write(args.out.join("iterations.csv"), log_to_csv(&log));
            }
            return EXIT_CAP;
        }
        Err(NpccgError::InnerCap(_)) | Err(NpccgError::CorrectionCap(_)) => return EXIT_CAP,
        Err(NpccgError::Ddu(e)) => {
            eprintln!("{e}");
            return EXIT_CAP;
        }
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CHECK_FAILED;
        }
    };

    let out = ResultOut {
        status: match sol.status {
            CoPlanStatus::Optimal => "optimal".into(),
            CoPlanStatus::Infeasible => "infeasible".into(),
        },
        src_dollars: sol.src,
        hardened_lines: inst
            .vulnerable
            .iter()
            .enumerate()
            .filter(|&(v, _)| sol.decision.hardened[v])
            .map(|(_, &l)| inst.lines[l].id.clone())
            .collect(),
        rented_mhers: inst
            .fleet
            .units
            .iter()
            .enumerate()
            .filter(|&(m, _)| sol.decision.rented[m])
            .map(|(_, u)| u.id.clone())
            .collect(),
        preallocation: inst
            .fleet
            .units
            .iter()
            .enumerate()
            .filter_map(|(m, u)| {
                sol.decision.preallocation[m]
                    .map(|e| (u.id.clone(), inst.node_names[inst.eh_nodes[e]].clone()))
            })
            .collect(),
        worst_scenario: sol.worst_scenario.as_ref().map(|s| scenario_out(&inst, s)),
        certified_ratio: sol.certified_ratio,
        outer_iterations: sol.outer_iterations,
        inner_iterations_total: sol.inner_iterations_total,
        wall_seconds: sol.wall_s,
        config: ConfigEcho {
            schema: 1,
            enhancements: cfg.enhancements,
            seed: args.seed,
            time_limit_s: args.time_limit,
            inner_eps: cfg.inner_eps,
            outer_cap: cfg.outer_cap,
            inner_cap: cfg.inner_cap,
            correction_cap: cfg.correction_cap,
            upsilon: inst.resilience_target,
            k: inst.k,
        },
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("cannot create {}: {e}", args.out.display());
        return EXIT_USAGE;
    }
    let result_path = args.out.join("result.json");
    if let Err(e) = std::fs::write(&result_path, serde_json::to_string_pretty(&out).unwrap()) {
        eprintln!("cannot write {}: {e}", result_path.display());
        return EXIT_USAGE;
    }
    let csv_path = args.out.join("iterations.csv");
    if let Err(e) = std::fs::write(&csv_path, log_to_csv(&sol.log)) {
        eprintln!("cannot write {}: {e}", csv_path.display());
        return EXIT_USAGE;
    }
    println!(
        "status={} src={:.2} certified_ratio={:.6} outer={} inner={}",
        out.status, out.src_dollars, out.certified_ratio, out.outer_iterations,
        out.inner_iterations_total
    );
    exit
}

fn cmd_verify(args: VerifyArgs) -> u8 {
    let inst = match &args.instance {
        Some(path) => match read_instance(path) {
            Ok(i) => Some(i),
            Err(code) => return code,
        },
        None => None,
    };
    let seed = args.seed;
    let report = match (args.suite, &inst) {
        (SuiteArg::WorstCase, Some(inst)) => suites::worst_case_single(inst, seed),
        (SuiteArg::WorstCase, None) => suites::worst_case_suite(seed, args.count.unwrap_or(10)),
        (SuiteArg::Coplan, Some(inst)) => suites::coplan_single(inst, seed),
        (SuiteArg::Coplan, None) => suites::coplan_suite(seed, args.count.unwrap_or(8)),
        (SuiteArg::Lemma1, Some(inst)) => suites::lemma1_single(inst, seed),
        (SuiteArg::Lemma1, None) => suites::lemma1_suite(seed, args.count.unwrap_or(20)),
        (SuiteArg::Enhancements, Some(inst)) => suites::enhancements_single(inst, seed),
        (SuiteArg::Enhancements, None) => {
            suites::enhancements_suite(seed, args.count.unwrap_or(6))
        }
    };
    print!("{}", report.render_table());
    if report.passed() {
        EXIT_OK
    } else if report
        .cases
        .iter()
        .any(|c| !c.pass && c.detail.contains("cap exceeded"))
    {
        let offending = report
            .cases
            .iter()
            .find(|c| !c.pass && c.detail.contains("cap exceeded"))
            .map(|c| c.detail.clone())
            .unwrap_or_default();
        eprintln!("enumeration cap exceeded: {offending}");
        EXIT_CAP
    } else {
        EXIT_CHECK_FAILED
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::from(EXIT_OK);
            }
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let code = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
    };
    ExitCode::from(code)
}
