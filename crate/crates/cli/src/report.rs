//! Persistence of a [`RunArtifact`]. Every file name starts with the config
//! hash; all files except `*-provenance.json` are byte-reproducible.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::json;

use crate::config::SolutionFormat;
use crate::run::{FieldDump, RunArtifact};

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_solution(path: &Path, field: &FieldDump, format: SolutionFormat) -> Result<Option<PathBuf>> {
    match format {
        SolutionFormat::None => Ok(None),
        SolutionFormat::Csv => {
            let path = path.with_extension("csv");
            let mut w = csv::Writer::from_path(&path)?;
            let mut header: Vec<String> = (0..field.dims).map(|d| format!("x{d}")).collect();
            header.push("u".into());
            w.write_record(&header)?;
            for (i, v) in field.values.iter().enumerate() {
                let mut row: Vec<String> = field.coords[i * field.dims..(i + 1) * field.dims]
                    .iter()
                    .map(|c| format!("{c:e}"))
                    .collect();
                row.push(format!("{v:e}"));
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(Some(path))
        }
        SolutionFormat::Binary => {
            let path = path.with_extension("bin");
            let mut bytes = Vec::with_capacity(8 * field.values.len());
            for v in &field.values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(&path, bytes)?;
            Ok(Some(path))
        }
    }
}

/// Writes every artifact file into `dir` and returns the paths written.
pub fn emit_reports(art: &RunArtifact, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let h = &art.hash;
    let mut written = Vec::new();

    let marker = dir.join(format!("{h}-FAILED"));
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    if art.exit_code() != 0 {
        let mut f = fs::File::create(&marker)?;
        writeln!(f, "status: {:?}", art.status)?;
        for m in &art.messages {
            writeln!(f, "{m}")?;
        }
        written.push(marker);
    }

    let cfg_path = dir.join(format!("{h}-config.toml"));
    fs::write(&cfg_path, art.config.to_toml())?;
    written.push(cfg_path);

    for t in &art.tables {
        let path = dir.join(format!("{h}-{}.csv", t.name));
        write_table(&path, &t.header, &t.rows)?;
        written.push(path);
    }

    let summary = dir.join(format!("{h}-summary.json"));
    fs::write(&summary, serde_json::to_string_pretty(&art.summary)? + "\n")?;
    written.push(summary);

    if let Some(field) = &art.solution {
        if let Some(p) = write_solution(&dir.join(format!("{h}-solution")), field, art.config.output.solution)? {
            written.push(p);
        }
    }

    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let provenance = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": art.config.seed,
        "config_hash": h,
        "timestamp_unix_s": now.as_secs(),
        "wall_time_s": art.wall_time_s,
        "parallel": cfg!(feature = "parallel"),
    });
    let prov = dir.join(format!("{h}-provenance.json"));
    fs::write(&prov, serde_json::to_string_pretty(&provenance)? + "\n")?;
    written.push(prov);
    Ok(written)
}
