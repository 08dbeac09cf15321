use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use toml::Value;

use plap_cli::sweep::{self, Sweep};
use plap_cli::{emit_reports, run, Command, RunConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Subcommand {
    Solve,
    Eigen,
    Certify,
    Blowup,
    Admissibility,
}

impl From<Subcommand> for Command {
    fn from(s: Subcommand) -> Self {
        match s {
            Subcommand::Solve => Command::Solve,
            Subcommand::Eigen => Command::Eigen,
            Subcommand::Certify => Command::Certify,
            Subcommand::Blowup => Command::Blowup,
            Subcommand::Admissibility => Command::Admissibility,
        }
    }
}

/// Forced p-Laplacian runner: regularized solves, eigenvalues and inequality certificates.
///
/// Exit codes: 0 success, 1 configuration error, 2 certification violation or
/// failed admissibility, 3 solver failure.
#[derive(Debug, Parser)]
#[command(name = "plap", version)]
struct Cli {
    /// Pipeline to run; overrides `command` in the config.
    command: Subcommand,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Run the main computation even if the admissibility check fails.
    #[arg(long)]
    override_admissibility: bool,
    /// `key=v1,v2,...` over a dotted config key; repeat for a product sweep.
    #[arg(long = "sweep", value_name = "KEY=LIST")]
    sweeps: Vec<String>,
}

fn config_error(msg: impl std::fmt::Display) -> i32 {
    eprintln!("configuration error:\n{msg}");
    1
}

fn execute(cfg: &RunConfig, dir: &Path) -> (i32, Option<String>) {
    match run(cfg) {
        Ok(art) => {
            if let Err(e) = emit_reports(&art, dir) {
                eprintln!("failed to write reports: {e:#}");
                return (1, Some(art.hash));
            }
            for m in &art.messages {
                eprintln!("{m}");
            }
            println!("{} {:?} -> {}", art.hash, art.status, dir.display());
            (art.exit_code(), Some(art.hash))
        }
        Err(e) => (config_error(e), None),
    }
}

fn main_code(cli: Cli) -> i32 {
    let text = match fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return config_error(format!("{}: {e}", cli.config.display())),
    };
    let mut base: Vec<(String, Value)> = vec![(
        "command".into(),
        Value::String(Command::from(cli.command).to_string()),
    )];
    if let Some(s) = cli.seed {
        base.push(("seed".into(), Value::Integer(s as i64)));
    }
    if cli.override_admissibility {
        base.push(("admissibility.override".into(), Value::Boolean(true)));
    }
    let sweeps = match cli.sweeps.iter().map(|s| Sweep::parse(s)).collect::<Result<Vec<_>, _>>() {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };

    let mut configs = Vec::new();
    for combo in sweep::expand(&sweeps) {
        let mut overrides = base.clone();
        overrides.extend(combo);
        match sweep::load_with(&text, &overrides) {
            Ok(c) => configs.push(c),
            Err(e) => return config_error(e),
        }
    }
    let root = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&configs[0].output.dir));

    if sweeps.is_empty() {
        return execute(&configs[0], &root).0;
    }

    let dirs: Vec<PathBuf> = (0..configs.len()).map(|i| root.join(format!("sweep-{i}"))).collect();
    let results = plap_core::par::map(configs.len(), |i| execute(&configs[i], &dirs[i]));
    if let Err(e) = write_index(&root, &sweeps, &configs, &results) {
        eprintln!("failed to write sweep index: {e:#}");
        return 1;
    }
    results.iter().map(|r| r.0).max().unwrap_or(0)
}

fn write_index(
    root: &Path,
    sweeps: &[Sweep],
    configs: &[RunConfig],
    results: &[(i32, Option<String>)],
) -> anyhow::Result<()> {
    fs::create_dir_all(root)?;
    let mut w = csv::Writer::from_path(root.join("sweep.csv"))?;
    let mut header = vec!["run".to_string(), "dir".to_string()];
    header.extend(sweeps.iter().map(|s| s.key.clone()));
    header.extend(["hash".to_string(), "exit_code".to_string()]);
    w.write_record(&header)?;
    let combos = sweep::expand(sweeps);
    for (i, ((code, hash), combo)) in results.iter().zip(&combos).enumerate() {
        let mut row = vec![i.to_string(), format!("sweep-{i}")];
        row.extend(combo.iter().map(|(_, v)| v.to_string()));
        row.push(hash.clone().unwrap_or_else(|| configs[i].hash()));
        row.push(code.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(main_code(cli) as u8)
}
