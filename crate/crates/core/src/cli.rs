//! Command-line front end. Exit codes: 0 success, 1 validation error
//! (bad arguments, config, data), 2 runtime failure.

use crate::depfilter::{grid_search, FilterOutcome};
use crate::harness::{
    ensemble_report, format_cell, format_gain, k_sweep, run_experiment, sample_splits, train_cell, ConfigFile,
    EvalReport, HarnessError, Prepared,
};
use crate::lm::checkpoint;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Component, Path, PathBuf};

#[cfg(debug_assertions)]
const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (debug build)");
#[cfg(not(debug_assertions))]
const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (release build)");

#[derive(Debug, Parser)]
#[command(name = "semprompt", version, long_version = LONG_VERSION, about = "Few-shot prompt-based fine-tuning experiments")]
pub struct Cli {
    /// Experiment config file (TOML)
    #[arg(short, long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Comma-separated seeds, replacing protocol.seeds
    #[arg(long, global = true, value_name = "SEEDS", value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,

    /// Backend kind, replacing the config's backend section when it differs
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendChoice>,

    /// Report path, relative to the output directory
    #[arg(long, global = true, value_name = "PATH")]
    pub report: Option<PathBuf>,

    /// Config override as dotted key=value, e.g. protocol.k=8 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Tiny,
    Remote,
}

impl BackendChoice {
    fn as_str(self) -> &'static str {
        match self {
            BackendChoice::Tiny => "tiny",
            BackendChoice::Remote => "remote",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the seeded K-shot splits and write their manifests
    Sample,
    /// Fine-tune one cell (first seed, batch size, learning rate) and save it
    Train,
    /// Run the full protocol and write the evaluation report
    Eval,
    /// Rank dependency filters by running the protocol once per filter
    SearchFilters,
    /// Run the protocol for increasing K with fixed hyperparameters
    KSweep {
        /// Comma-separated strictly increasing K values, replacing sweep.ks
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Joint inference over saved member reports
    Ensemble {
        /// Member report files, replacing ensemble.reports
        #[arg(long, num_args = 1..)]
        reports: Option<Vec<PathBuf>>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

/// Resolves a report path inside `out_dir`, refusing anything that would
/// escape it.
pub fn report_path(out_dir: &Path, requested: Option<&Path>, default: &str) -> Result<PathBuf, CliError> {
    let Some(req) = requested else {
        return Ok(out_dir.join(default));
    };
    let rel = if req.is_absolute() {
        req.strip_prefix(out_dir).map_err(|_| {
            CliError::Validation(format!(
                "report path {} is outside the output directory {}",
                req.display(),
                out_dir.display()
            ))
        })?
    } else {
        req
    };
    if rel.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) || rel.as_os_str().is_empty() {
        return Err(CliError::Validation(format!(
            "report path {} must stay inside the output directory",
            req.display()
        )));
    }
    Ok(out_dir.join(rel))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn load_config(cli: &Cli) -> Result<ConfigFile, CliError> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Validation("--config <FILE> is required".into()))?;
    if !path.is_file() {
        return Err(CliError::Validation(format!("config file {} not found", path.display())));
    }
    let mut overrides = Vec::new();
    if let Some(seeds) = &cli.seed_list {
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        overrides.push(format!("protocol.seeds=[{}]", list.join(",")));
    }
    overrides.extend(cli.overrides.iter().cloned());
    Ok(ConfigFile::load_with_backend(
        path,
        &overrides,
        cli.backend.map(BackendChoice::as_str),
    )?)
}

/// Writes `<path>` (JSON) and `<path>.txt` (table); prints the table.
fn emit(path: &Path, json: &str, table: &str) -> Result<(), CliError> {
    write_file(path, json)?;
    write_file(&path.with_extension("txt"), table)?;
    print!("{table}");
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let out = cfg.output_dir();
    match &cli.command {
        Command::Sample => {
            let exp = cfg.experiment()?;
            exp.validate()?;
            let splits = sample_splits(&exp)?;
            let manifests: Vec<_> = splits.iter().map(|s| s.manifest(&exp.task)).collect();
            let path = report_path(&out, cli.report.as_deref(), "splits.json")?;
            let mut table = String::new();
            for m in &manifests {
                let _ = writeln!(table, "seed {}: {} train, {} dev", m.seed, m.train.len(), m.dev.len());
            }
            emit(&path, &to_json(&manifests), &table)
        }
        Command::Train => {
            let exp = cfg.experiment()?;
            let prepared = Prepared::new(&exp)?;
            let splits = sample_splits(&exp)?;
            let p = &exp.protocol;
            let (bs, lr) = (p.batch_sizes[0], p.learning_rates[0]);
            let cell = train_cell(&prepared, &splits[0], bs, lr)?;
            let path = report_path(&out, cli.report.as_deref(), "train.json")?;
            if let Some(model) = &cell.model {
                write_file(&path.with_extension("ckpt"), &checkpoint::to_string(model))?;
            }
            write_file(&path.with_extension("heads.json"), &to_json(&cell.ensemble))?;
            write_file(&path.with_extension("vocab"), &prepared.tokenizer.to_vocab_file())?;
            let summary = serde_json::json!({
                "task": exp.task,
                "config_hash": exp.config_hash(),
                "seed": splits[0].seed,
                "batch_size": bs,
                "learning_rate": lr,
                "best_step": cell.best_step,
                "dev_accuracy": cell.dev_accuracy,
                "test_accuracy": cell.test_accuracy,
            });
            let table = format!(
                "seed {} bs {bs} lr {lr:e}: dev {:.1} test {:.1} (step {})\n",
                splits[0].seed,
                cell.dev_accuracy * 100.0,
                cell.test_accuracy * 100.0,
                cell.best_step
            );
            emit(&path, &to_json(&summary), &table)
        }
        Command::Eval => {
            let exp = cfg.experiment()?;
            let report = run_experiment(&exp)?;
            let path = report_path(&out, cli.report.as_deref(), "report.json")?;
            emit(&path, &(report.to_json() + "\n"), &report.to_table())
        }
        Command::SearchFilters => {
            let exp = cfg.experiment()?;
            let candidates = cfg.search_candidates(&exp.catalog)?;
            if candidates.is_empty() {
                return Err(CliError::Validation("no filter candidates".into()));
            }
            for f in &candidates {
                if !exp.catalog.contains(f) {
                    return Err(HarnessError::from(crate::depfilter::FilterError::NotInCatalog {
                        kind: f.kind,
                        name: f.name.clone(),
                    })
                    .into());
                }
            }
            exp.with_filter(Some(candidates[0].clone())).validate()?;
            let ranked = grid_search(&candidates, &exp);
            if ranked.iter().all(|r| r.mean().is_none()) {
                return Err(CliError::Runtime("every filter candidate failed".into()));
            }
            let mut table = String::new();
            for (i, r) in ranked.iter().enumerate() {
                let cell = match &r.outcome {
                    FilterOutcome::Ok { mean, variance, .. } => format_cell(*mean, *variance),
                    FilterOutcome::Failed { error } => format!("failed: {error}"),
                };
                let _ = writeln!(table, "{:>2}. {:<14} {cell}", i + 1, r.filter.to_string());
            }
            let path = report_path(&out, cli.report.as_deref(), "filters.json")?;
            emit(&path, &to_json(&ranked), &table)
        }
        Command::KSweep { ks } => {
            let ks = ks.clone().unwrap_or_else(|| cfg.sweep.ks.clone());
            if ks.is_empty() {
                return Err(CliError::Validation("no K values: pass --ks or set sweep.ks".into()));
            }
            if ks.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::Validation(format!("K values must be strictly increasing, got {ks:?}")));
            }
            let exp = cfg.experiment()?;
            let rows = k_sweep(&exp, &ks, cfg.sweep_settings())?;
            let mut table = String::new();
            for r in &rows {
                let _ = writeln!(table, "K={:<4} {} ({})", r.k, format_cell(r.mean, r.variance), format_gain(r.gain));
            }
            let path = report_path(&out, cli.report.as_deref(), "k-sweep.json")?;
            emit(&path, &to_json(&rows), &table)
        }
        Command::Ensemble { reports } => {
            let paths: Vec<PathBuf> = match reports {
                Some(r) => r.clone(),
                None => cfg.ensemble.reports.iter().map(|p| cfg.resolve(p)).collect(),
            };
            if paths.is_empty() {
                return Err(CliError::Validation("no member reports: pass --reports or set ensemble.reports".into()));
            }
            let mut members = Vec::with_capacity(paths.len());
            for p in &paths {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read report {}: {e}", p.display())))?;
                members.push(
                    EvalReport::from_json(&text)
                        .map_err(|e| CliError::Validation(format!("report {}: {e}", p.display())))?,
                );
            }
            let report = ensemble_report(&members)?;
            let mut table = String::new();
            for (p, m) in paths.iter().zip(&members) {
                let _ = writeln!(table, "{:<40} {}", p.display().to_string(), m.cell());
            }
            let _ = writeln!(table, "{:<40} {}", "Ensemble", report.cell());
            let path = report_path(&out, cli.report.as_deref(), "ensemble.json")?;
            emit(&path, &(report.to_json() + "\n"), &table)
        }
    }
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.verbose);
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Full `--help` text, as printed by the binary.
pub fn help_text() -> String {
    Cli::command().render_long_help().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_paths_stay_inside() {
        let out = Path::new("/work/out");
        assert_eq!(report_path(out, None, "r.json").unwrap(), PathBuf::from("/work/out/r.json"));
        assert_eq!(
            report_path(out, Some(Path::new("sub/r.json")), "x").unwrap(),
            PathBuf::from("/work/out/sub/r.json")
        );
        assert_eq!(
            report_path(out, Some(Path::new("/work/out/a.json")), "x").unwrap(),
            PathBuf::from("/work/out/a.json")
        );
        assert!(report_path(out, Some(Path::new("../escape.json")), "x").is_err());
        assert!(report_path(out, Some(Path::new("/tmp/escape.json")), "x").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parse_errors_exit_with_one() {
        assert_eq!(run(["semprompt", "bogus"]), 1);
        assert_eq!(run(["semprompt", "--help"]), 0);
    }
}
