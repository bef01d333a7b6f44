//! CSV report files. Each starts with `#` comment lines naming the command
//! and echoing the full effective config, so a report alone is enough to
//! rerun it. Nothing time- or host-dependent is written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::{Command, RunConfig};
use crate::error::{Error, Result};

fn header_lines(cfg: &RunConfig, command: Command, notes: &[String]) -> Vec<String> {
    let mut lines = vec![format!("# mmdnet {command}")];
    lines.extend(cfg.entries().into_iter().map(|(k, v)| format!("# {k} = {v}")));
    lines.extend(notes.iter().map(|n| format!("# {n}")));
    lines
}

/// Writes the comment header, then lets `body` write the CSV part.
pub fn write_report<F>(path: &Path, cfg: &RunConfig, command: Command, notes: &[String], body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for line in header_lines(cfg, command, notes) {
        writeln!(out, "{line}").map_err(io)?;
    }
    body(&mut out)?;
    out.flush().map_err(io)
}

/// A report whose body is a header row plus string records.
pub fn write_table(
    path: &Path,
    cfg: &RunConfig,
    command: Command,
    notes: &[String],
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    write_report(path, cfg, command, notes, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io("writing CSV", e))
    })
}

/// Column names and records of a report, skipping its comment header.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let columns = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((columns, rows))
}

/// The config echoed in a report's header.
pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let body: String = text
        .lines()
        .skip(1)
        .map_while(|l| l.strip_prefix("# "))
        .filter(|l| l.contains(" = "))
        .map(|l| format!("{l}\n"))
        .collect();
    RunConfig::parse_str(&body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_echoes_config_and_table_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let mut cfg = RunConfig::default();
        cfg.seed = 42;
        cfg.apply_override("sweep.grid.kernel.scale=1 10").unwrap();
        let rows = vec![vec!["a".to_string(), "1.5".to_string()], vec!["b,c".to_string(), "2".to_string()]];
        write_table(&path, &cfg, Command::Synth, &["bins: 3".into()], &["name", "value"], &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# mmdnet synth\n# seed = 42\n"));
        let (cols, back) = read_table(&path).unwrap();
        assert_eq!(cols, ["name", "value"]);
        assert_eq!(back, rows);
        assert_eq!(read_config(&path).unwrap(), cfg);
    }
}
