//! `gpi`: check, compile and run gradually typed π-calculus programs.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gradual_pi::castinsert::compile_system;
use gradual_pi::parser::{parse_system, print_env, Program};
use gradual_pi::runtime::{self, Configuration, Outcome, Redex, StatusKind};
use gradual_pi::typecheck::{check_program, check_program_static, TypeDiagnostic};

// Write errors (a closed pipe, say) are ignored rather than panicking.
macro_rules! outln {
    ($($t:tt)*) => {{
        let _ = writeln!(io::stdout(), $($t)*);
    }};
}

macro_rules! out {
    ($($t:tt)*) => {{
        let _ = write!(io::stdout(), $($t)*);
    }};
}

const OK: u8 = 0;
const REJECTED: u8 = 1;
const RUNTIME_TYPE_ERROR: u8 = 2;
const PARSE_ERROR: u8 = 3;
const USAGE: u8 = 4;
const LIMIT: u8 = 5;

#[derive(Parser)]
#[command(name = "gpi", version, about = "Gradually typed pi-calculus workbench")]
#[command(after_help = "Exit codes: 0 ok or normal-stuck, 1 type error, 2 run-time type-error, \
3 parse error, 4 usage error or aborted session, 5 step or depth limit reached.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Type check a program and print `ok` or one diagnostic per failing prefix.
    Check {
        file: PathBuf,
        /// Use the reference checker that demands equal types instead of consistent ones.
        #[arg(long = "static")]
        static_only: bool,
    },
    /// Print the program with casts inserted.
    Compile {
        file: PathBuf,
        /// Also list every cast site, including trivial casts that were left out.
        #[arg(long)]
        show_sites: bool,
    },
    /// Compile and execute a program.
    Run {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Seeded)]
        mode: Mode,
        /// Seed for the random scheduler.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Step limit for seeded and interactive runs.
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        max_steps: u64,
        /// Depth bound for exhaustive exploration.
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        depth: u64,
        /// Print every reduction step, not just the final status.
        #[arg(long)]
        trace: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Pick uniformly among enabled reductions using the seed.
    Seeded,
    /// Explore every choice up to the depth bound.
    Exhaustive,
    /// Ask on stdin whenever more than one reduction is enabled.
    Interactive,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    ExitCode::from(match cli.command {
        Command::Check { file, static_only } => cmd_check(&file, static_only),
        Command::Compile { file, show_sites } => cmd_compile(&file, show_sites),
        Command::Run {
            file,
            mode,
            seed,
            max_steps,
            depth,
            trace,
        } => cmd_run(&file, mode, seed, max_steps as usize, depth as usize, trace),
    })
}

fn load(file: &Path) -> Result<Vec<Program>, u8> {
    let text = std::fs::read_to_string(file).map_err(|e| {
        eprintln!("gpi: cannot read {}: {e}", file.display());
        USAGE
    })?;
    parse_system(&text).map_err(|e| {
        eprintln!("{}:{e}", file.display());
        PARSE_ERROR
    })
}

fn report_diagnostics(file: &Path, diagnostics: &[TypeDiagnostic]) {
    for d in diagnostics {
        match d.span {
            Some(span) => outln!("{}:{}: {d}", file.display(), span.start),
            None => outln!("{}: {d}", file.display()),
        }
    }
}

fn cmd_check(file: &Path, static_only: bool) -> u8 {
    let programs = match load(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mut diagnostics = Vec::new();
    for program in &programs {
        if static_only {
            if let Err(ds) = check_program_static(program) {
                diagnostics.extend(ds);
            }
        } else {
            diagnostics.extend(check_program(program).diagnostics);
        }
    }
    if diagnostics.is_empty() {
        outln!("ok");
        OK
    } else {
        report_diagnostics(file, &diagnostics);
        REJECTED
    }
}

fn cmd_compile(file: &Path, show_sites: bool) -> u8 {
    let programs = match load(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let mut blocks = Vec::new();
    let mut sites = Vec::new();
    for program in &programs {
        match compile_system(std::slice::from_ref(program)) {
            Ok(out) => {
                blocks.push(format!("{}run {}\n", print_env(&program.env), out.proc));
                sites.extend(out.sites);
            }
            Err(ds) => {
                report_diagnostics(file, &ds);
                return REJECTED;
            }
        }
    }
    out!("{}", blocks.join("\n"));
    if show_sites {
        outln!();
        outln!("cast sites:");
        for site in &sites {
            match site.span {
                Some(_) => outln!("{}:{site}", file.display()),
                None => outln!("{site}"),
            }
        }
    }
    OK
}

fn status_code(kind: StatusKind) -> u8 {
    match kind {
        StatusKind::NormalStuck => OK,
        StatusKind::TypeError => RUNTIME_TYPE_ERROR,
        StatusKind::MaxSteps | StatusKind::DepthExceeded => LIMIT,
        StatusKind::Aborted => USAGE,
    }
}

fn print_outcome(outcome: &Outcome, trace: bool) {
    if trace {
        out!("{}", outcome.render());
    } else {
        outln!("{}", outcome.halt_line());
    }
}

/// Ask on stderr which redex to fire. `None` on end of input.
fn prompt(input: &mut impl BufRead, cfg: &Configuration, redexes: &[Redex]) -> Option<usize> {
    let mut err = io::stderr();
    let _ = writeln!(err, "configuration: {cfg}");
    for (k, r) in redexes.iter().enumerate() {
        let _ = writeln!(err, "  {}) {}", k + 1, describe(cfg, r));
    }
    loop {
        let _ = write!(err, "choose 1-{}: ", redexes.len());
        let _ = err.flush();
        let mut line = String::new();
        match input.read_line(&mut line) {
            Ok(0) | Err(_) => {
                let _ = writeln!(err);
                return None;
            }
            Ok(_) => {}
        }
        match line.trim().parse::<usize>() {
            Ok(k) if (1..=redexes.len()).contains(&k) => return Some(k - 1),
            _ => {
                let _ = writeln!(err, "not a valid choice: {}", line.trim());
            }
        }
    }
}

fn describe(cfg: &Configuration, r: &Redex) -> String {
    let threads: Vec<String> = r
        .participants
        .iter()
        .map(|&i| cfg.threads[i].to_string())
        .collect();
    format!("{}: {}", r.kind, threads.join("  with  "))
}

fn cmd_run(file: &Path, mode: Mode, seed: u64, max_steps: usize, depth: usize, trace: bool) -> u8 {
    let programs = match load(file) {
        Ok(p) => p,
        Err(code) => return code,
    };
    let compiled = match compile_system(&programs) {
        Ok(out) => out,
        Err(ds) => {
            report_diagnostics(file, &ds);
            return REJECTED;
        }
    };
    let cfg = runtime::normalize(&compiled.proc);
    let result = match mode {
        Mode::Seeded => runtime::run_seeded(&cfg, seed, max_steps).map(|o| vec![o]),
        Mode::Interactive => {
            let stdin = io::stdin();
            let mut input = stdin.lock();
            let mut chooser = |c: &Configuration, rs: &[Redex]| prompt(&mut input, c, rs);
            runtime::run_interactive(&cfg, max_steps, &mut chooser).map(|o| vec![o])
        }
        Mode::Exhaustive => runtime::explore(&cfg, depth).map(|x| {
            outln!("explored states: {}", x.states.len());
            let kinds: Vec<String> = x.terminals.keys().map(|k| k.to_string()).collect();
            outln!("terminal statuses: {{{}}}", kinds.join(", "));
            x.terminals.into_values().collect()
        }),
    };
    let outcomes = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("gpi: internal error: {e}");
            return RUNTIME_TYPE_ERROR;
        }
    };
    if mode == Mode::Exhaustive {
        for outcome in &outcomes {
            outln!("-- witness: {}", outcome.status.kind());
            out!("{}", outcome.render());
        }
        let kinds: Vec<StatusKind> = outcomes.iter().map(|o| o.status.kind()).collect();
        return if kinds.contains(&StatusKind::TypeError) {
            RUNTIME_TYPE_ERROR
        } else if kinds.contains(&StatusKind::DepthExceeded) {
            LIMIT
        } else {
            OK
        };
    }
    let outcome = &outcomes[0];
    print_outcome(outcome, trace);
    status_code(outcome.status.kind())
}
