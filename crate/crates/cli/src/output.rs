use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::experiment::ResultRow;

pub const SCHEMA_LINE: &str = "# schema=drorl-results v1";
pub const HEADER: &str = "instance,algorithm,sigma,sample_size,seed,gap,wall_time_s,iterations,win_rate,eval_param";

/// Writes rows without a header.
pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Schema line, header and rows as one string.
pub fn to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = format!("{SCHEMA_LINE}\n{HEADER}\n").into_bytes();
    write_rows(&mut buf, rows)?;
    Ok(String::from_utf8(buf)?)
}

/// Appends rows to `path`, writing the schema line and header first when the
/// file is new or empty. An existing file with a different schema is left
/// untouched and reported as an error.
pub fn append_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    if !fresh {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let schema = lines.next().transpose()?.unwrap_or_default();
        let header = lines.next().transpose()?.unwrap_or_default();
        if schema != SCHEMA_LINE || header != HEADER {
            bail!("{} has a different schema; refusing to append", path.display());
        }
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{SCHEMA_LINE}\n{HEADER}")?;
    }
    write_rows(&mut f, rows)
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(f);
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != HEADER {
        bail!("unexpected header in {}: {header}", path.display());
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .with_context(|| format!("reading rows of {}", path.display()))
}

pub fn write_json(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(f, rows)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<ResultRow> {
        vec![
            ResultRow {
                instance: "gambler_p0.6".into(),
                algorithm: "drvi_lcb".into(),
                sigma: 0.1,
                sample_size: 100,
                seed: 3,
                gap: 0.0123,
                wall_time_s: 0.0,
                iterations: 100,
                win_rate: Some(0.5),
                eval_param: None,
            },
            ResultRow {
                instance: "gambler_p0.6".into(),
                algorithm: "non_robust_vi".into(),
                sigma: 0.0,
                sample_size: 0,
                seed: 4,
                gap: 1.0 / 3.0,
                wall_time_s: 0.25,
                iterations: 100,
                win_rate: None,
                eval_param: Some(0.35),
            },
        ]
    }

    #[test]
    fn header_matches_row_fields() {
        let text = to_csv_string(&sample()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SCHEMA_LINE));
        assert_eq!(lines.next(), Some(HEADER));
        assert_eq!(lines.next(), Some("gambler_p0.6,drvi_lcb,0.1,100,3,0.0123,0.0,100,0.5,"));
    }

    #[test]
    fn append_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = sample();
        append_csv(&path, &rows[..1]).unwrap();
        append_csv(&path, &rows[1..]).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), to_csv_string(&rows).unwrap());
    }

    #[test]
    fn refuses_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(append_csv(&path, &sample()).is_err());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
    }
}
