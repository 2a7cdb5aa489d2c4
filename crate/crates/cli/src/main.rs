//! `mixivm` command-line front end.
//!
//! Exit codes: 0 success, 1 parse error or invalid input, 2 I/O error,
//! 3 query outside the supported classes, 4 update to a static relation.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mixivm::bench::{self, OmvInstance, OuMvInstance, SweepConfig};
use mixivm::runtime::RuntimeConfig;
use mixivm::transition::TransitionConfig;
use mixivm::{
    classify, gen, parse_update_stream, preprocessing_width, rewrite, Class, Database, Query, Runtime, TransitionMode,
    TransitionSystem, UpdateEvent,
};

const EXIT_PARSE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_CLASS: u8 = 3;
const EXIT_STATIC: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mixivm",
    version,
    about = "Maintain conjunctive queries over static and dynamic relations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the classification report of a query as JSON.
    Classify { query: PathBuf },
    /// Write DOT renderings of the compiled plan.
    Plan(PlanArgs),
    /// Replay an update stream and print a result block at every `?`.
    Run(RunArgs),
    /// Reduction workloads and timing sweeps.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct PlanArgs {
    query: PathBuf,
    /// Output directory for vo.dot and viewtree.dot, or transition.dot.
    #[arg(long)]
    emit_dot: PathBuf,
    /// Directory of `<Rel>.csv` files, used for transition systems.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    query: PathBuf,
    /// Directory of `<Rel>.csv` files; missing files are empty relations.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Update stream, `-` for stdin.
    #[arg(long)]
    updates: PathBuf,
    /// Output file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Online vector-matrix-vector instance through the Boolean triangle-free query.
    Oumv(ReductionArgs),
    /// Online matrix-vector instance through the unary projection query.
    Omv(ReductionArgs),
    /// Preprocessing, update and delay medians over growing random data.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ReductionArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the query, data, stream, instance and answers.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    mode: Mode,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    query: PathBuf,
    /// Database sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Inserts and deletes per size.
    #[arg(long, default_value_t = 10_000)]
    updates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Eager,
    Lazy,
    Auto,
}

impl From<Mode> for TransitionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Eager => TransitionMode::Eager,
            Mode::Lazy => TransitionMode::Lazy,
            Mode::Auto => TransitionMode::Auto,
        }
    }
}

/// A failure that carries its own exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Exit(code, _)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        if let Some(e) = cause.downcast_ref::<mixivm::Error>() {
            return match e {
                mixivm::Error::Io(_) | mixivm::Error::Csv(_) => EXIT_IO,
                mixivm::Error::StaticUpdate(_) => EXIT_STATIC,
                mixivm::Error::WrongClass { .. }
                | mixivm::Error::NotWellBehaved
                | mixivm::Error::EagerCapExceeded { .. } => EXIT_CLASS,
                _ => EXIT_PARSE,
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_PARSE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Classify { query } => cmd_classify(&query),
        Command::Plan(a) => cmd_plan(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Bench(BenchCommand::Oumv(a)) => cmd_oumv(&a),
        Command::Bench(BenchCommand::Omv(a)) => cmd_omv(&a),
        Command::Bench(BenchCommand::Sweep(a)) => cmd_sweep(&a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        return io::read_to_string(io::stdin()).context("reading stdin");
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_query(path: &Path) -> Result<Query> {
    let text = read_text(path)?;
    Query::parse(&text).with_context(|| path.display().to_string())
}

fn load_data(dir: Option<&Path>, q: &Query) -> Result<Database> {
    match dir {
        Some(d) => Database::load_dir(d, q).with_context(|| format!("loading {}", d.display())),
        None => Ok(Database::new()),
    }
}

fn outside(path: &Path) -> anyhow::Error {
    anyhow!(Exit(EXIT_CLASS, format!("{} is outside C_exp", path.display())))
}

fn transition_config(mode: Mode) -> TransitionConfig {
    TransitionConfig {
        mode: mode.into(),
        ..TransitionConfig::default()
    }
}

fn runtime_config(mode: Mode) -> RuntimeConfig {
    RuntimeConfig {
        transition: transition_config(mode),
        ..RuntimeConfig::default()
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_classify(path: &Path) -> Result<()> {
    let q = load_query(path)?;
    let report = classify(&q);
    let mut v = serde_json::to_value(&report)?;
    if report.is_well_behaved {
        let w = preprocessing_width(&q)?;
        v["preprocessing_width"] = json!(w.width.to_string());
        v["width_possibly_suboptimal"] = json!(w.possibly_suboptimal);
    }
    print_json(&v)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

fn cmd_plan(a: &PlanArgs) -> Result<()> {
    let q = load_query(&a.query)?;
    let class = classify(&q).class;
    if class == Class::Outside {
        return Err(outside(&a.query));
    }
    fs::create_dir_all(&a.emit_dot).with_context(|| format!("creating {}", a.emit_dot.display()))?;
    let summary = if class.is_poly() {
        let w = preprocessing_width(&q)?;
        let tree = rewrite(&q, &w.vo);
        let files = [
            write_file(&a.emit_dot, "vo.dot", &w.vo.to_dot(&q))?,
            write_file(&a.emit_dot, "viewtree.dot", &tree.to_dot(&q))?,
        ];
        json!({
            "class": class,
            "preprocessing_width": w.width.to_string(),
            "views": tree.nodes().len(),
            "files": files,
        })
    } else {
        let db = load_data(a.data.as_deref(), &q)?;
        let sys = TransitionSystem::build_with(&q, &db, &transition_config(Mode::Eager))?;
        let Some(dot) = sys.to_dot() else {
            bail!(Exit(
                EXIT_CLASS,
                format!(
                    "{} dynamic facts; transition DOT output needs at most 4",
                    sys.max_dynamic_database().len()
                )
            ));
        };
        let file = write_file(&a.emit_dot, "transition.dot", &dot)?;
        json!({
            "class": class,
            "states": sys.num_states(),
            "files": [file],
        })
    };
    print_json(&summary)
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let q = load_query(&a.query)?;
    if classify(&q).class == Class::Outside {
        return Err(outside(&a.query));
    }
    let events = parse_update_stream(&read_text(&a.updates)?, &q).with_context(|| a.updates.display().to_string())?;
    let db = load_data(a.data.as_deref(), &q)?;
    let mut rt = Runtime::with_config(&q, &db, &runtime_config(a.mode))?;
    drop(db);
    let mut out = output(a.out.as_deref())?;
    let mut block = 0;
    for ev in &events {
        match ev {
            UpdateEvent::Enumerate => {
                block += 1;
                writeln!(out, "-- result {block} --")?;
                for row in rt.result_strings() {
                    write_row(&mut out, &row)?;
                }
                writeln!(out, "-- end --")?;
            }
            UpdateEvent::Checkpoint => {
                serde_json::to_writer(&mut out, &rt.stats_json())?;
                writeln!(out)?;
            }
            _ => rt.apply(ev)?,
        }
    }
    out.flush()?;
    Ok(())
}

/// One CSV line; a Boolean query's empty tuple prints as `()`.
fn write_row(out: &mut dyn Write, row: &[String]) -> Result<()> {
    if row.is_empty() {
        writeln!(out, "()")?;
        return Ok(());
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(row)?;
    w.flush()?;
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        bail!(Exit(EXIT_PARSE, "n ≥ 1 required".into()));
    }
    Ok(())
}

fn cmd_oumv(a: &ReductionArgs) -> Result<()> {
    check_n(a.n)?;
    let inst = OuMvInstance::random(&mut gen::rng(a.seed), a.n)?;
    let enc = bench::encode_oumv(&inst);
    let answers = bench::solve_oumv(&inst, &runtime_config(a.mode))?;
    let expected = inst.direct_answers();
    if answers != expected {
        bail!("engine answers differ from the direct products");
    }
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| format!("oumv-n{}-s{}", a.n, a.seed).into());
    enc.write_to(&dir)
        .with_context(|| format!("writing {}", dir.display()))?;
    let instance = json!({ "n": inst.n, "matrix": inst.matrix, "pairs": inst.pairs });
    write_file(&dir, "instance.json", &serde_json::to_string_pretty(&instance)?)?;
    let lines: String = answers.iter().map(|&b| format!("{}\n", u8::from(b))).collect();
    write_file(&dir, "answers.txt", &lines)?;
    print_json(&json!({
        "kind": "oumv",
        "n": a.n,
        "seed": a.seed,
        "dir": dir,
        "rounds": answers.len(),
        "max_round_updates": enc.round_updates.iter().max(),
        "verified": true,
    }))
}

fn cmd_omv(a: &ReductionArgs) -> Result<()> {
    check_n(a.n)?;
    let inst = OmvInstance::random(&mut gen::rng(a.seed), a.n)?;
    let enc = bench::encode_omv(&inst);
    let answers = bench::solve_omv(&inst, &runtime_config(a.mode))?;
    if answers != inst.direct_answers() {
        bail!("engine answers differ from the direct products");
    }
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| format!("omv-n{}-s{}", a.n, a.seed).into());
    enc.write_to(&dir)
        .with_context(|| format!("writing {}", dir.display()))?;
    let instance = json!({ "n": inst.n, "matrix": inst.matrix, "vectors": inst.vectors });
    write_file(&dir, "instance.json", &serde_json::to_string_pretty(&instance)?)?;
    let lines: String = answers
        .iter()
        .map(|r| format!("{}\n", r.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")))
        .collect();
    write_file(&dir, "answers.txt", &lines)?;
    print_json(&json!({
        "kind": "omv",
        "n": a.n,
        "seed": a.seed,
        "dir": dir,
        "rounds": answers.len(),
        "max_round_updates": enc.round_updates.iter().max(),
        "verified": true,
    }))
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    for &n in &a.n {
        check_n(n)?;
    }
    let q = load_query(&a.query)?;
    if classify(&q).class == Class::Outside {
        return Err(outside(&a.query));
    }
    let seed = a.seed;
    let profile = bench::timing_sweep(
        &q,
        &a.n,
        &SweepConfig::default(),
        |n| gen::random_database(&mut gen::rng(seed ^ n as u64), &q, n, n),
        |n, db| gen::random_updates(&mut gen::rng(seed.wrapping_add(n as u64)), &q, db, a.updates, n, 0.5),
    )?;
    let mut out = output(a.out.as_deref())?;
    profile.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
