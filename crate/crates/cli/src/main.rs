//! `neurogram` command-line tool: run and resume evolutions, sample and
//! decode individuals, and summarise run statistics.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurogram::engine::{run_in_directory, Checkpoint, Engine, EngineError, RunDirectory};
use neurogram::phenotype::check_shapes;
use neurogram::rng::{stream, Purpose};
use neurogram::stats::{aggregate_runs, StatsError, StatsTable};
use neurogram::{decode_individual, parse_grammar, parse_structure, random_individual, render};

use config::RunConfigFile;

#[derive(Debug)]
pub enum CliError {
    /// Bad usage, configuration or input files; exit status 2.
    Config(String),
    /// Failure while doing the work; exit status 3.
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::InvalidConfig(_)
            | EngineError::Structure(_)
            | EngineError::ConfigMismatch { .. }
            | EngineError::NoCheckpoint(_)
            | EngineError::Operator(_)
            | EngineError::Evaluator(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "neurogram", version, about = "Grammar-based neuroevolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run from a JSON configuration file.
    Run {
        config: PathBuf,
        /// Master seed (overrides the file).
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel evaluations (overrides the file).
        #[arg(long)]
        jobs: Option<usize>,
        /// Run directory (overrides the file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop once this generation is complete.
        #[arg(long, value_name = "GEN")]
        stop_after: Option<usize>,
    },
    /// Continue a run from its latest checkpoint.
    Resume {
        run_dir: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long, value_name = "GEN")]
        stop_after: Option<usize>,
    },
    /// Print random individuals, decoded, separated by blank lines.
    Sample {
        grammar: PathBuf,
        structure: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print an individual from a checkpoint with its shape report.
    Decode {
        checkpoint: PathBuf,
        id: u64,
        /// `height,width,channels`.
        #[arg(long, default_value = "32,32,3")]
        input_shape: String,
    },
    /// Aggregate stats.csv files, or correlate two of their columns.
    Stats {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        correlate: Option<Vec<String>>,
        /// First generation to include.
        #[arg(long)]
        from: Option<usize>,
        /// Last generation to include.
        #[arg(long)]
        until: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            jobs,
            out,
            stop_after,
        } => cmd_run(&config, seed, jobs, out, stop_after),
        Command::Resume {
            run_dir,
            jobs,
            stop_after,
        } => cmd_resume(&run_dir, jobs, stop_after),
        Command::Sample {
            grammar,
            structure,
            count,
            seed,
        } => cmd_sample(&grammar, &structure, count, seed),
        Command::Decode {
            checkpoint,
            id,
            input_shape,
        } => cmd_decode(&checkpoint, id, &input_shape),
        Command::Stats {
            runs,
            correlate,
            from,
            until,
        } => cmd_stats(&runs, correlate, from, until),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("neurogram: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn has_run_files(dir: &Path) -> bool {
    dir.join("stats.csv").exists() || RunDirectory::new(dir).latest_checkpoint().ok().flatten().is_some()
}

fn cmd_run(
    config_path: &Path,
    seed: Option<u64>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    stop_after: Option<usize>,
) -> Result<(), CliError> {
    let mut file = RunConfigFile::load(config_path)?;
    if let Some(s) = seed {
        file.evolution.master_seed = s;
    }
    if let Some(j) = jobs {
        file.evolution.parallel_evaluations = j;
    }
    if let Some(o) = out {
        file.out_dir = std::path::absolute(&o).unwrap_or(o);
    }
    let loaded = file.resolve()?;
    let engine = Engine::new(
        &loaded.grammar,
        &loaded.structure,
        &loaded.file.evolution,
        loaded.evaluator.as_ref(),
    )?;
    let out_dir = loaded.file.out_dir.clone();
    if has_run_files(&out_dir) {
        return Err(CliError::Config(format!(
            "{} already holds a run; use `resume` or another --out",
            out_dir.display()
        )));
    }
    let dir = RunDirectory::new(&out_dir);
    dir.create()?;
    fs::write(out_dir.join("config.json"), loaded.file.to_json())
        .map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;
    let result = run_in_directory(&engine, &dir, false, stop_after)?;
    let last = result.stats.last().expect("generation 0");
    eprintln!(
        "generation {}: best fitness {} (individual {})",
        last.generation, last.best_fitness, last.best_id
    );
    Ok(())
}

fn cmd_resume(run_dir: &Path, jobs: Option<usize>, stop_after: Option<usize>) -> Result<(), CliError> {
    let config_path = run_dir.join("config.json");
    if !config_path.exists() {
        return Err(CliError::Config(format!("{} not found", config_path.display())));
    }
    let mut file = RunConfigFile::load(&config_path)?;
    if let Some(j) = jobs {
        file.evolution.parallel_evaluations = j;
    }
    let loaded = file.resolve()?;
    let engine = Engine::new(
        &loaded.grammar,
        &loaded.structure,
        &loaded.file.evolution,
        loaded.evaluator.as_ref(),
    )?;
    let result = run_in_directory(&engine, &RunDirectory::new(run_dir), true, stop_after)?;
    let last = result.stats.last().expect("generation 0");
    eprintln!(
        "generation {}: best fitness {} (individual {})",
        last.generation, last.best_fitness, last.best_id
    );
    Ok(())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cmd_sample(grammar: &Path, structure: &Path, count: usize, seed: u64) -> Result<(), CliError> {
    let g = parse_grammar(&read_text(grammar)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", grammar.display())))?;
    let s = parse_structure(&read_text(structure)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", structure.display())))?;
    g.validate_structure(&s).map_err(|errs| {
        CliError::Config(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
    })?;
    let mut out = std::io::stdout().lock();
    for i in 0..count {
        let mut rng = stream(seed, Purpose::Init, i as u64, 0);
        let ind = random_individual(&g, &s, &mut rng).map_err(|e| CliError::Runtime(e.to_string()))?;
        let nd = decode_individual(&g, &ind).map_err(|e| CliError::Runtime(e.to_string()))?;
        if i > 0 {
            writeln!(out).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        out.write_all(render(&nd).as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn parse_shape(text: &str) -> Result<(i64, i64, i64), CliError> {
    let dims: Vec<i64> = text
        .split(',')
        .map(|p| p.trim().parse::<i64>().ok().filter(|v| *v >= 1))
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::Config(format!("--input-shape `{text}` is not h,w,c")))?;
    match dims[..] {
        [h, w, c] => Ok((h, w, c)),
        _ => Err(CliError::Config(format!("--input-shape `{text}` is not h,w,c"))),
    }
}

fn cmd_decode(checkpoint: &Path, id: u64, input_shape: &str) -> Result<(), CliError> {
    let shape = parse_shape(input_shape)?;
    let run_dir = checkpoint.parent().unwrap_or(Path::new("."));
    let file = RunConfigFile::load(&run_dir.join("config.json"))?;
    let g = parse_grammar(&read_text(&file.grammar_file)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", file.grammar_file.display())))?;
    let state = Checkpoint::load(checkpoint)?.state;
    let ind = state
        .population
        .iter()
        .chain(std::iter::once(&state.best))
        .find(|i| i.id == id)
        .ok_or_else(|| CliError::Config(format!("no individual {id} in {}", checkpoint.display())))?;
    let nd = decode_individual(&g, ind).map_err(|e| CliError::Runtime(e.to_string()))?;
    let report = check_shapes(&nd, shape).map_err(|e| CliError::Runtime(e.to_string()))?;
    print!("{}{}", render(&nd), report);
    Ok(())
}

fn load_stats(path: &Path) -> Result<StatsTable, CliError> {
    let file = if path.is_dir() { path.join("stats.csv") } else { path.to_path_buf() };
    let f = fs::File::open(&file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    StatsTable::read(f).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))
}

fn cmd_stats(
    runs: &[PathBuf],
    correlate: Option<Vec<String>>,
    from: Option<usize>,
    until: Option<usize>,
) -> Result<(), CliError> {
    let tables = runs
        .iter()
        .map(|r| load_stats(r)?.window(from.map(|f| f as f64), until.map(|u| u as f64)).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    match correlate {
        Some(cols) => {
            let table = if tables.len() == 1 {
                tables.into_iter().next().expect("one table")
            } else {
                aggregate_runs(&tables)?
            };
            let column = |name: &str| {
                if table.columns.iter().any(|c| c == name) {
                    name.to_string()
                } else {
                    format!("{name}_mean")
                }
            };
            match table.correlate(&column(&cols[0]), &column(&cols[1]))? {
                Some(r) => println!("{r}"),
                None => println!("NaN"),
            }
        }
        None => {
            let agg = aggregate_runs(&tables)?;
            agg.write(std::io::stdout().lock())?;
        }
    }
    Ok(())
}
