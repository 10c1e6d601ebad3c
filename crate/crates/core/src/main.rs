//! Command-line entry point.
//!
//! Exit codes: 0 = SAFE (or bench within policy), 1 = UNKNOWN (or bench
//! policy violation), 2 = diagnostics (unreadable or rejected input),
//! 64 = usage error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use descent::bench::{render_ndjson, render_text, run_manifest};
use descent::engine::{verify_with_retry, Verdict, VerifyOpts};
use descent::front::compile;
use descent::instrument::instrument_checks;

#[derive(Parser)]
#[command(
    name = "descent",
    version,
    about = "Batch safety verifier for monotonic data-structure traversals in a C subset"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify one C file; prints SAFE or UNKNOWN plus statistics.
    Verify {
        file: PathBuf,
        #[command(flatten)]
        cfg: Cfg,
    },
    /// Run every instance in a manifest (`path category expected` lines).
    Bench {
        manifest: PathBuf,
        #[command(flatten)]
        cfg: Cfg,
    },
    /// Dump the instrumented IR for one C file.
    Ir { file: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Herds carry shrunken scapegoat traces; failures must be blamed on a
    /// strictly smaller trace before the verdict can be Safe.
    Descent,
    /// Arity-1 herds: any feasible failure is reported Unknown.
    Classic,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatsFmt {
    Text,
    Json,
}

#[derive(Args)]
struct Cfg {
    /// Verification mode.
    #[arg(long, value_enum, default_value_t = Mode::Descent)]
    mode: Mode,
    /// Loop iterations taken exactly before widening.
    #[arg(long)]
    unroll: Option<u32>,
    /// Leading array cells / heap nodes kept exactly known.
    #[arg(long)]
    prefix: Option<i64>,
    /// Minimum primary-minus-scapegoat size gap required to blame.
    #[arg(long = "size-bound")]
    size_bound: Option<i64>,
    /// Escalation attempts after an unknown verdict.
    #[arg(long = "max-retries")]
    max_retries: Option<u32>,
    /// Worker threads (1 = sequential, 0 = runtime default).
    #[arg(long)]
    workers: Option<usize>,
    /// Wall-clock budget in seconds (per instance for bench).
    #[arg(long)]
    timeout: Option<f64>,
    /// Check integer additions/subtractions/multiplications for overflow.
    #[arg(long = "overflow-checks")]
    overflow_checks: bool,
    /// Statistics output format.
    #[arg(long, value_enum, default_value_t = StatsFmt::Text)]
    stats: StatsFmt,
}

impl Cfg {
    fn to_opts(&self) -> VerifyOpts {
        let mut o = VerifyOpts::default();
        if let Mode::Classic = self.mode {
            o.domain.classic = true;
        }
        if let Some(u) = self.unroll {
            o.domain.unroll = u;
        }
        if let Some(p) = self.prefix {
            o.domain.prefix = p;
        }
        if let Some(k) = self.size_bound {
            o.domain.size_bound = k;
        }
        if let Some(r) = self.max_retries {
            o.max_retries = r;
        }
        if let Some(w) = self.workers {
            o.workers = w;
        }
        if let Some(s) = self.timeout {
            o.timeout = Some(Duration::from_secs_f64(s));
        }
        o.domain.overflow_checks = self.overflow_checks;
        o
    }
}

fn load(file: &PathBuf) -> Result<descent::ir::ProgramIR, ExitCode> {
    let source = match std::fs::read_to_string(file) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            return Err(ExitCode::from(2));
        }
    };
    let name = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into());
    match compile(&source, &name) {
        Ok(ir) => Ok(ir),
        Err(diags) => {
            for d in diags {
                eprintln!("{}: {d}", file.display());
            }
            Err(ExitCode::from(2))
        }
    }
}

fn run(cli: Cli) -> ExitCode {
    match cli.cmd {
        Cmd::Verify { file, cfg } => {
            let ir = match load(&file) {
                Ok(ir) => ir,
                Err(code) => return code,
            };
            let opts = cfg.to_opts();
            let out = verify_with_retry(&ir, &opts);
            match out.verdict {
                Verdict::Safe => println!("SAFE"),
                Verdict::Unknown => {
                    println!("UNKNOWN: {}", out.reason.as_deref().unwrap_or("no reason recorded"))
                }
            }
            match cfg.stats {
                StatsFmt::Json => {
                    println!("{}", serde_json::to_string(&out).expect("outcome serializes"))
                }
                StatsFmt::Text => {
                    let s = &out.stats;
                    println!(
                        "herds {} splits {} widenings {} shrunk {} locks {} blames {} subsumed {} attempts {} elapsed {} ms",
                        s.herds, s.splits, s.widenings, s.shrunk_added, s.locks, s.blames,
                        s.subsumed, out.attempts, out.elapsed_ms
                    );
                    println!("milestones: {}", s.milestones.join(" "));
                }
            }
            match out.verdict {
                Verdict::Safe => ExitCode::SUCCESS,
                Verdict::Unknown => ExitCode::from(1),
            }
        }
        Cmd::Bench { manifest, cfg } => {
            let opts = cfg.to_opts();
            let report = match run_manifest(&manifest, &opts) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            match cfg.stats {
                StatsFmt::Json => print!("{}", render_ndjson(&report)),
                StatsFmt::Text => print!("{}", render_text(&report)),
            }
            if report.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Cmd::Ir { file } => {
            let ir = match load(&file) {
                Ok(ir) => ir,
                Err(code) => return code,
            };
            let ir = instrument_checks(&ir, false);
            print!("{}", ir.dump());
            ExitCode::SUCCESS
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    run(cli)
}
