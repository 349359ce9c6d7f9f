use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to relative suboptimality so log plots stay finite.
pub const SUBOPT_FLOOR: f64 = 1e-16;

pub const TRACE_HEADER: &str = "epoch,datapasses,wall_ms,fval,subopt";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub datapasses: f64,
    pub wall_ms: f64,
    pub fval: f64,
    pub subopt: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

/// `max((f − f*) / (f0 − f*), floor)`; a start at the optimum counts as solved.
pub fn relative_subopt(f: f64, f0: f64, f_star: f64) -> f64 {
    let gap0 = f0 - f_star;
    if !f.is_finite() {
        return f64::INFINITY;
    }
    if gap0 <= 0.0 {
        return SUBOPT_FLOOR;
    }
    ((f - f_star) / gap0).max(SUBOPT_FLOOR)
}

impl Trace {
    pub fn push(&mut self, rec: TraceRecord) {
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_subopt(&self) -> f64 {
        self.records.last().map_or(1.0, |r| r.subopt)
    }

    /// First datapass count at which `subopt <= threshold`.
    pub fn passes_to_reach(&self, threshold: f64) -> Option<f64> {
        self.records.iter().find(|r| r.subopt <= threshold).map(|r| r.datapasses)
    }

    /// Suboptimality of the last record at or before `passes`.
    pub fn subopt_at(&self, passes: f64) -> f64 {
        self.records.iter().take_while(|r| r.datapasses <= passes).last().map_or(1.0, |r| r.subopt)
    }

    /// CSV with a trailing `#`-prefixed `key=value` metadata row.
    pub fn write_csv<W: Write>(&self, mut w: W, meta: &[(&str, String)]) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{},{:.16e},{:.16e},{:.16e},{:.16e}", r.epoch, r.datapasses, r.wall_ms, r.fval, r.subopt)?;
        }
        if !meta.is_empty() {
            let fields: Vec<String> = meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
            writeln!(w, "# {}", fields.join(","))?;
        }
        Ok(())
    }

    /// Reads a trace written by [`Trace::write_csv`], returning the metadata pairs.
    pub fn read_csv<R: BufRead>(r: R) -> Result<(Trace, Vec<(String, String)>)> {
        let mut trace = Trace::default();
        let mut meta = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidArgument(format!("trace read failed: {e}")))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if lineno == 0 {
                if line != TRACE_HEADER {
                    return Err(Error::InvalidArgument(format!("unexpected trace header `{line}`")));
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for kv in rest.trim().split(',') {
                    if let Some((k, v)) = kv.split_once('=') {
                        meta.push((k.to_string(), v.to_string()));
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::InvalidArgument(format!("malformed trace line {}: `{line}`", lineno + 1));
            if fields.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            trace.push(TraceRecord {
                epoch: fields[0].parse().map_err(|_| bad())?,
                datapasses: num(fields[1])?,
                wall_ms: num(fields[2])?,
                fval: num(fields[3])?,
                subopt: num(fields[4])?,
            });
        }
        Ok((trace, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Trace::default();
        t.push(TraceRecord { epoch: 0, datapasses: 0.0, wall_ms: 0.0, fval: std::f64::consts::LN_2, subopt: 1.0 });
        t.push(TraceRecord { epoch: 1, datapasses: 3.5, wall_ms: 1.25, fval: 0.1 + 0.2, subopt: 1e-16 });
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &[("method", "svrg".into()), ("status", "ok".into())]).unwrap();
        let (back, meta) = Trace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(meta[0], ("method".to_string(), "svrg".to_string()));
    }

    #[test]
    fn subopt_floor_and_degenerate_gap() {
        assert_eq!(relative_subopt(1.0, 1.0, 1.0), SUBOPT_FLOOR);
        assert_eq!(relative_subopt(0.5, 1.0, 0.5), SUBOPT_FLOOR);
        assert_eq!(relative_subopt(0.75, 1.0, 0.5), 0.5);
    }
}
