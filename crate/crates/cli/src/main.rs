//! `cpclim`: build c.p.c. systems, run defect audits and inspect limit
//! products from the command line.
//!
//! Exit codes: 0 success, 1 some audit verdict failed, 2 a step failed
//! verification, 3 bad config, expression or arguments.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cpclim::audit::config::{OutputFormat, OutputSpec, PresetRef, SystemSpec};
use cpclim::audit::{self, engine, report, AuditConfig, ElementContext, StageSchedule};
use cpclim::{presets, CpcSystem, Error, GroupElement, DEFAULT_GRID_FACTOR};

#[derive(Parser)]
#[command(name = "cpclim", version, about = "C.p.c. inductive systems and C*-encoding audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a system, verify every step and print the stage algebras.
    Build {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        max_stage: Option<usize>,
        /// Also print the summability certificate of the stage selection.
        #[arg(long)]
        certificate: bool,
    },
    /// Run the conditions of an audit config and write the report.
    Audit {
        #[command(flatten)]
        source: Source,
        /// Report path; defaults to the config's output path, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        grid_factor: Option<u32>,
        #[arg(long)]
        max_stage: Option<usize>,
    },
    /// Approximate the limit product of two elements along a doubling schedule.
    Product {
        /// System preset.
        #[arg(long, default_value = "z-folner")]
        preset: String,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Comma-separated doubling parameters j; tuples are (j, 2j, 4j).
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
        schedule: Vec<usize>,
        #[arg(long)]
        max_stage: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_GRID_FACTOR)]
        grid_factor: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// JSON audit config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Shipped preset (system presets for `build`, audit presets for `audit`).
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

const EXIT_FAIL: u8 = 1;
const EXIT_REJECTED: u8 = 2;
const EXIT_INPUT: u8 = 3;

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::RejectedStep { .. } => ExitCode::from(EXIT_REJECTED),
        _ => ExitCode::from(EXIT_INPUT),
    }
}

fn load(source: &Source, audit_preset: bool) -> cpclim::Result<AuditConfig> {
    match (&source.config, &source.preset) {
        (Some(path), _) => AuditConfig::from_path(path),
        (None, Some(name)) if audit_preset => presets::audit_config(name),
        (None, Some(name)) => {
            if presets::default_max_stage(name).is_none() {
                return Err(Error::Config(format!(
                    "unknown system preset '{name}' (known: {})",
                    presets::SYSTEM_PRESETS.join(", ")
                )));
            }
            Ok(AuditConfig {
                system: SystemSpec::Preset(PresetRef { preset: name.clone(), max_stage: None }),
                conditions: Vec::new(),
                seed: 0,
                grid_factor: DEFAULT_GRID_FACTOR,
                output: None,
            })
        }
        (None, None) => unreachable!("clap requires a source"),
    }
}

fn cmd_build(source: &Source, max_stage: Option<usize>, certificate: bool) -> ExitCode {
    let mut cfg = match load(source, false) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(m) = max_stage {
        cfg.system.set_max_stage(m);
    }
    let sys = match cfg.system.build() {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    println!("{}", sys.describe());
    for (n, alg) in sys.algebras().iter().enumerate() {
        let min_eig = sys.step(n).map(|s| s.verify_cp(cpclim::DEFAULT_TOL).min_choi_eigenvalue).ok();
        match min_eig {
            Some(e) => println!("stage {n}: {} (step min Choi eigenvalue {e:.3e})", alg.describe()),
            None => println!("stage {n}: {}", alg.describe()),
        }
    }
    if certificate {
        match sys.approximation().and_then(|a| a.certificate()) {
            Some(cert) => println!("certificate: {}", serde_json::to_string(cert).expect("certificate serializes")),
            None => println!("certificate: none (stages are not a certified subsequence)"),
        }
    }
    ExitCode::SUCCESS
}

fn cmd_audit(
    source: &Source,
    out: Option<PathBuf>,
    format: Option<Format>,
    seed: Option<u64>,
    grid_factor: Option<u32>,
    max_stage: Option<usize>,
) -> ExitCode {
    let mut cfg = match load(source, true) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(g) = grid_factor {
        cfg.grid_factor = g;
    }
    if let Some(m) = max_stage {
        cfg.system.set_max_stage(m);
    }
    let reports = match audit::run_audit(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    let spec = cfg.output.unwrap_or(OutputSpec { path: None, format: OutputFormat::Json });
    let path = out.or(spec.path.map(PathBuf::from));
    let format = format.map_or(spec.format, OutputFormat::from);
    let sink: Box<dyn Write> = match &path {
        Some(p) => match File::create(p) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => return fail(&Error::Config(format!("{}: {e}", p.display()))),
        },
        None => Box::new(io::stdout().lock()),
    };
    let written = match format {
        OutputFormat::Json => report::write_json(&reports, sink),
        OutputFormat::Csv => report::write_csv(&reports, sink),
    };
    if let Err(e) = written {
        return fail(&e);
    }
    for r in &reports {
        eprintln!("{:<16} k={} r={}: {}", r.condition, r.k, r.r, r.verdict);
    }
    if reports.iter().all(|r| r.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}

struct ProductArgs<'a> {
    k: usize,
    x: &'a str,
    y: &'a str,
    schedule: &'a [usize],
    grid_factor: u32,
    seed: u64,
}

fn product(sys: &CpcSystem, a: &ProductArgs) -> cpclim::Result<()> {
    let ctx = ElementContext { system: sys, k: a.k, seed: a.seed };
    let x = ctx.eval_str(a.x)?;
    let y = ctx.eval_str(a.y)?;
    let schedule = StageSchedule::doubling(a.schedule)?;
    schedule.validate(sys.num_stages())?;
    let bp = audit::bullet_product(sys, a.k, &x, &y, schedule.triples())?;
    println!("system: {}", sys.describe());
    println!("representative at stage {} (from stage {}): norm {:.12}", bp.m, bp.n, bp.representative.norm());
    if let Some(approx) = sys.approximation() {
        let push = approx.phi(bp.m, &bp.representative)?;
        let total = push.l1_norm();
        let norm = push.reduced_norm(a.grid_factor)?;
        println!(
            "phi-pushforward: {} terms, l1 mass {total:.12}, reduced norm in [{:.12}, {:.12}]",
            push.support_len(),
            norm.lower,
            norm.upper
        );
        let mut terms: Vec<(&GroupElement, _)> = push.terms().collect();
        terms.sort_by(|p, q| q.1.norm().total_cmp(&p.1.norm()).then_with(|| p.0.cmp(q.0)));
        for (g, c) in terms.iter().take(12) {
            let share = if total > 0.0 { c.norm() / total } else { 0.0 };
            println!("  {g}: {:+.12} {:+.12}i (share {share:.6})", c.re, c.im);
        }
        if terms.len() > 12 {
            println!("  ... {} more", terms.len() - 12);
        }
    }
    println!("stinespring diagnostic:");
    for d in &bp.diagnostics {
        println!("  ({}, {}, {}): {:.6e}", d.j, d.n, d.m, d.value);
    }
    Ok(())
}

fn cmd_product(preset: &str, max_stage: Option<usize>, args: &ProductArgs) -> ExitCode {
    let top = args.schedule.iter().map(|j| 4 * j).max().unwrap_or(0).max(args.k);
    let sys = match presets::system(preset, Some(max_stage.unwrap_or(top))) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match product(&sys, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    engine::configure_threads_from_env();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Build { source, max_stage, certificate } => cmd_build(&source, max_stage, certificate),
        Command::Audit { source, out, format, seed, grid_factor, max_stage } => {
            cmd_audit(&source, out, format, seed, grid_factor, max_stage)
        }
        Command::Product { preset, k, x, y, schedule, max_stage, grid_factor, seed } => {
            cmd_product(&preset, max_stage, &ProductArgs { k, x: &x, y: &y, schedule: &schedule, grid_factor, seed })
        }
    }
}
