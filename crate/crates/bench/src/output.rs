use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use cvtrack::vropt::Trace;

/// Writes `bytes` to a temporary sibling of `path` and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().context("output path has no file name")?.to_string_lossy();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Metadata values may not contain the field separator.
fn clean(v: &str) -> String {
    v.replace([',', '\n'], ";")
}

pub fn write_trace(path: &Path, trace: &Trace, meta: &[(&str, String)]) -> Result<()> {
    let meta: Vec<(&str, String)> = meta.iter().map(|(k, v)| (*k, clean(v))).collect();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf, &meta)?;
    atomic_write(path, &buf)
}

pub fn read_trace(path: &Path) -> Result<(Trace, Vec<(String, String)>)> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Trace::read_csv(std::io::BufReader::new(f))?)
}

pub const MERGED_HEADER: &str = "method,datapasses,wall_ms,subopt";

/// Long-format plot data: one row per trace record of every method.
pub fn merged_csv<'a>(traces: impl IntoIterator<Item = (&'a str, &'a Trace)>) -> String {
    let mut s = format!("{MERGED_HEADER}\n");
    for (method, trace) in traces {
        for r in &trace.records {
            s.push_str(&format!("{method},{:.16e},{:.16e},{:.16e}\n", r.datapasses, r.wall_ms, r.subopt));
        }
    }
    s
}

/// Parses a merged file back into `(method, datapasses, wall_ms, subopt)` rows.
pub fn parse_merged(text: &str) -> Result<Vec<(String, f64, f64, f64)>> {
    let mut lines = text.lines();
    anyhow::ensure!(lines.next() == Some(MERGED_HEADER), "missing merged header");
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            anyhow::ensure!(f.len() == 4, "malformed merged row `{l}`");
            Ok((f[0].to_owned(), f[1].parse()?, f[2].parse()?, f[3].parse()?))
        })
        .collect()
}
