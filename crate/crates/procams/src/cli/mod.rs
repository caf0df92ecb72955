//! Command layer behind the `procams` binary.
//!
//! Every command writes a `run.json` into its output directory recording the
//! fully-resolved parameters; `procams rerun --run <run.json>` re-executes it
//! and, because every stage is seeded, reproduces the outputs bit-for-bit
//! (wall-clock fields excluded — see [`hash_tree`]).
//!
//! Exit codes: `0` success, `1` internal failure, `2` usage or input error.

mod chart;
mod commands;
mod rows;

pub use chart::render_bar_chart;
pub use rows::{append_rows, read_rows, BenchRow, CSV_HEADER};

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or bad input data; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while doing the work; exit code 1.
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }

    pub(crate) fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }

    pub(crate) fn run(e: impl std::fmt::Display) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "procams",
    version,
    about = "Projector-camera simulation, calibration, and compensation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Subcommand, Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Commands {
    /// Generate a seeded synthetic benchmark dataset.
    GenDataset(GenDatasetArgs),
    /// Calibrate one setup's geometry and photometric response.
    Calibrate(CalibrateArgs),
    /// Compensate an image through a stored calibration bundle.
    Compensate(CompensateArgs),
    /// Sweep surface-prior counts across a dataset and tabulate quality.
    Ablate(AblateArgs),
    /// Summary tables and bar charts from a results CSV.
    Report(ReportArgs),
    /// Re-execute a recorded run from its run.json.
    Rerun(RerunArgs),
}

impl Commands {
    fn name(&self) -> &'static str {
        match self {
            Commands::GenDataset(_) => "gen-dataset",
            Commands::Calibrate(_) => "calibrate",
            Commands::Compensate(_) => "compensate",
            Commands::Ablate(_) => "ablate",
            Commands::Report(_) => "report",
            Commands::Rerun(_) => "rerun",
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct GenDatasetArgs {
    /// Number of setups (difficulties cycle planar/textured/wavy/sharp).
    #[arg(long, default_value_t = 12)]
    pub setups: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory for the dataset tree.
    #[arg(long)]
    pub out: PathBuf,
    /// Training pairs per setup.
    #[arg(long, default_value_t = 50)]
    pub train: usize,
    /// Validation pairs per setup.
    #[arg(long, default_value_t = 20)]
    pub val: usize,
    /// Held-out pairs per setup, rendered at --test-res.
    #[arg(long, default_value_t = 5)]
    pub test: usize,
    /// Camera/projector frame side for train and val.
    #[arg(long, default_value_t = 256)]
    pub res: usize,
    /// Frame side for the test split.
    #[arg(long = "test-res", default_value_t = 600)]
    pub test_res: usize,
    /// Folder of source PNGs to project; procedural content when omitted.
    #[arg(long)]
    pub source: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct CalibrateArgs {
    /// Dataset directory (or its manifest.json).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Setup id from the manifest, e.g. setup_003.
    #[arg(long)]
    pub setup: String,
    /// Correspondence method: graycode | flow.
    #[arg(long, default_value = "graycode")]
    pub method: String,
    /// Surface-prior count for the photometric fit: 1, 3, or 5.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Output directory for the calibration bundle.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct CompensateArgs {
    /// Calibration bundle directory (from `procams calibrate`).
    #[arg(long)]
    pub bundle: PathBuf,
    /// Image to compensate (PNG; resampled to the projector frame).
    #[arg(long)]
    pub image: PathBuf,
    /// Output directory (drive/predicted/desired PNGs + metrics.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Project the drive through the simulated rig stored alongside the
    /// bundle and score the actual capture (plus an uncompensated baseline).
    #[arg(long, default_value_t = false)]
    pub simulate: bool,
    /// Setup id recorded in the metrics row; bundle dir name when omitted.
    #[arg(long)]
    pub setup_id: Option<String>,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct AblateArgs {
    /// Dataset directory (or its manifest.json).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory (ablation.csv, summary.csv, run.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Prior counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5])]
    pub ks: Vec<usize>,
    /// Validation images scored per setup (capped by the split size).
    #[arg(long, default_value_t = 5)]
    pub images: usize,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Results CSV produced by compensate or ablate.
    #[arg(long)]
    pub csv: PathBuf,
    /// Output directory for summary.csv and report_*.png charts.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct RerunArgs {
    /// Path to a run.json emitted by a previous command.
    #[arg(long)]
    pub run: PathBuf,
}

/// The provenance record emitted into every output directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub command: Commands,
}

/// Process entry point; returns the exit code.
pub fn cli_main() -> i32 {
    crate::init_thread_pool();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version land here too; those print to stdout and
            // exit 0, genuine flag errors go to stderr and exit 2.
            let used_stderr = e.use_stderr();
            let _ = e.print();
            return if used_stderr { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Execute one parsed command.
pub fn run(command: Commands) -> Result<(), CliError> {
    crate::init_thread_pool();
    match command {
        Commands::GenDataset(a) => commands::gen_dataset(&a),
        Commands::Calibrate(a) => commands::calibrate(&a),
        Commands::Compensate(a) => commands::compensate(&a),
        Commands::Ablate(a) => commands::ablate(&a),
        Commands::Report(a) => commands::report(&a),
        Commands::Rerun(a) => commands::rerun(&a),
    }
}

/// Load and validate a run.json.
pub fn load_run(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is not a run record: {e}", path.display())))?;
    if cfg.version != 1 {
        return Err(CliError::Usage(format!(
            "unsupported run record version {}",
            cfg.version
        )));
    }
    Ok(cfg)
}

/// Write the provenance record for `command` into `out/run.json`.
pub(crate) fn write_run_json(out: &Path, command: Commands) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::run(format!("{}: {e}", out.display())))?;
    let cfg = RunConfig {
        version: 1,
        command,
    };
    let json = serde_json::to_string_pretty(&cfg).map_err(CliError::run)?;
    let path = out.join("run.json");
    fs::write(&path, json + "\n")
        .map_err(|e| CliError::run(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Resolve a path against the current directory so run.json records where
/// the outputs actually went.
pub(crate) fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir()
            .map(|d| d.join(p))
            .unwrap_or_else(|_| p.to_path_buf())
    }
}

/// SHA-256 over every file under `root`, keyed by sorted relative path.
///
/// Used for reproducibility checks: two runs of the same recorded command
/// must hash identically. Wall-clock milliseconds are run metadata rather
/// than output, so the trailing `ms` column of schema CSVs is dropped
/// before hashing; everything else is compared byte-for-byte.
pub fn hash_tree(root: &Path) -> Result<String, CliError> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir)
            .map_err(|e| CliError::run(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let p = entry
                .map_err(|e| CliError::run(format!("{}: {e}", dir.display())))?
                .path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();

    let mut hasher = Sha256::new();
    for path in files {
        let rel = path.strip_prefix(root).unwrap_or(&path);
        let bytes = fs::read(&path)
            .map_err(|e| CliError::run(format!("{}: {e}", path.display())))?;
        let bytes = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            canonical_csv(&bytes)
        } else {
            bytes
        };
        hasher.update(rel.to_string_lossy().as_bytes());
        hasher.update([0u8]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Drop the trailing `ms` column (when the header declares one) so timing
/// jitter does not defeat byte-level reproducibility checks.
fn canonical_csv(bytes: &[u8]) -> Vec<u8> {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return bytes.to_vec();
    };
    if header.trim_end() != CSV_HEADER && !header.trim_end().ends_with(",ms") {
        return bytes.to_vec();
    }
    let strip = |line: &str| -> String {
        match line.rfind(',') {
            Some(i) => line[..i].to_string(),
            None => line.to_string(),
        }
    };
    let mut out = strip(header);
    for line in lines {
        out.push('\n');
        out.push_str(&strip(line));
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_distinguish_usage_from_failure() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
        assert_eq!(CliError::Run("x".into()).exit_code(), 1);
    }

    #[test]
    fn run_records_roundtrip_through_json() {
        let cmd = Commands::GenDataset(GenDatasetArgs {
            setups: 2,
            seed: 9,
            out: PathBuf::from("/tmp/x"),
            train: 3,
            val: 1,
            test: 0,
            res: 32,
            test_res: 48,
            source: None,
        });
        let json = serde_json::to_string_pretty(&RunConfig {
            version: 1,
            command: cmd,
        })
        .unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        match back.command {
            Commands::GenDataset(a) => {
                assert_eq!(a.setups, 2);
                assert_eq!(a.seed, 9);
            }
            other => panic!("wrong command decoded: {}", other.name()),
        }
    }

    #[test]
    fn tree_hash_ignores_the_ms_column_only() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        let head = CSV_HEADER;
        std::fs::write(a.join("m.csv"), format!("{head}\ns,0,5,c,1,2,3,4,,,0.1,17.3\n"))
            .unwrap();
        std::fs::write(b.join("m.csv"), format!("{head}\ns,0,5,c,1,2,3,4,,,0.1,99.9\n"))
            .unwrap();
        assert_eq!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());

        // A change in any scored column must still show up.
        std::fs::write(b.join("m.csv"), format!("{head}\ns,0,5,c,1,2,3,9,,,0.1,17.3\n"))
            .unwrap();
        assert_ne!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());

        // Non-schema files are hashed verbatim.
        std::fs::write(a.join("x.txt"), "ms,ms,ms").unwrap();
        std::fs::write(b.join("m.csv"), format!("{head}\ns,0,5,c,1,2,3,4,,,0.1,17.3\n"))
            .unwrap();
        std::fs::write(b.join("x.txt"), "ms,ms,mt").unwrap();
        assert_ne!(hash_tree(&a).unwrap(), hash_tree(&b).unwrap());
    }

    #[test]
    fn flag_parsing_fills_defaults() {
        let cli =
            Cli::try_parse_from(["procams", "gen-dataset", "--out", "d", "--setups", "3"])
                .unwrap();
        match cli.command {
            Commands::GenDataset(a) => {
                assert_eq!(a.setups, 3);
                assert_eq!(a.train, 50);
                assert_eq!(a.res, 256);
                assert_eq!(a.test_res, 600);
            }
            _ => panic!("parsed the wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["procams", "gen-dataset"]).is_err());
        let cli = Cli::try_parse_from([
            "procams", "ablate", "--dataset", "d", "--out", "o", "--ks", "1,5",
        ])
        .unwrap();
        match cli.command {
            Commands::Ablate(a) => assert_eq!(a.ks, vec![1, 5]),
            _ => panic!("parsed the wrong subcommand"),
        }
    }
}
