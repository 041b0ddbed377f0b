use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anonpool_core::board::{AuditVerdict, BoardDump};
use anonpool_harness::adversary::{attack_scenario, run_attack, AttackId};
use anonpool_harness::props::props_report;
use anonpool_harness::scenario::{run_scenario, Scenario};
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "anonpool", version, about = "Run, attack and audit anonymous-pool simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print a JSON summary. Exits 1 if the
    /// outcome differs from the scenario's expectations.
    Run {
        scenario: PathBuf,
        /// Write the JSON-lines event log here.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Write the final board dump here.
        #[arg(long)]
        board: Option<PathBuf>,
    },
    /// Run one catalog attack and report whether it was caught as
    /// expected. Exits 1 if not.
    Attack {
        attack: AttackId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        board: Option<PathBuf>,
    },
    /// Replay every audit check over a board dump. Exits 1 on a violation.
    Audit { dump: PathBuf },
    /// Exact anonymity and unlinkability probabilities.
    Props {
        #[arg(long)]
        parties: u64,
        #[arg(long)]
        corrupt: u64,
        #[arg(long)]
        threshold: u64,
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("anonpool: {e}");
            ExitCode::from(2)
        }
    }
}

type CliResult = Result<bool, Box<dyn std::error::Error>>;

fn run(command: Command) -> CliResult {
    match command {
        Command::Run { scenario, events, board } => {
            let text = fs::read_to_string(&scenario).map_err(|e| format!("{}: {e}", scenario.display()))?;
            let scenario: Scenario = serde_json::from_str(&text)?;
            let (sim, report) = run_scenario(&scenario)?;
            if let Some(path) = events {
                fs::write(path, sim.event_log_jsonl())?;
            }
            if let Some(path) = board {
                fs::write(path, sim.board_dump().render())?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.passed())
        }
        Command::Attack { attack, seed, board } => {
            let (sim, report) = run_attack(attack, &attack_scenario(attack, seed))?;
            if let Some(path) = board {
                fs::write(path, sim.board_dump().render())?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.matches)
        }
        Command::Audit { dump } => {
            let text = fs::read_to_string(&dump).map_err(|e| format!("{}: {e}", dump.display()))?;
            let verdict = BoardDump::parse(&text)?.replay_audit();
            let out = match verdict {
                AuditVerdict::Ok => json!({ "verdict": "ok" }),
                AuditVerdict::Violation(v) => json!({ "verdict": "violation", "check": v.check.id(), "rule": v.check, "seq": v.seq }),
            };
            println!("{out}");
            Ok(verdict.is_ok())
        }
        Command::Props { parties, corrupt, threshold, json } => {
            let report = props_report(parties, corrupt, threshold);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                let show = |v: &Option<String>| v.clone().unwrap_or_else(|| "undefined".into());
                println!("anonymity     {}", show(&report.anonymity));
                println!("unlinkability {}", show(&report.unlinkability));
            }
            Ok(report.anonymity.is_some() || report.unlinkability.is_some())
        }
    }
}
