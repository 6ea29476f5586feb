//! Table-shaped CSV output.

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

pub const HEADER: &str = "method,l,n,cond,iter,Tst,Tomm,Ttot,d,status";

/// Rows with `d` at or below this are accurate.
pub const ACCURATE_D: f64 = 1e-4;
/// Rows with `d` above this did not find the eigenspace.
pub const FAILED_D: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub ell: usize,
    pub n: usize,
    pub cond: f64,
    /// Median outer iteration count over the repeats.
    pub iter: f64,
    pub t_st: f64,
    pub t_omm: f64,
    pub t_tot: f64,
    pub d: f64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    /// Converged with `d ≤ 1e-4`.
    Accurate,
    /// Converged with `1e-4 < d ≤ 1e-3`.
    Ok,
    /// Converged to the wrong subspace, `d > 1e-3`.
    Inaccurate,
    /// Iteration cap reached.
    Unconverged,
    Error(String),
}

impl Status {
    pub fn classify(converged: bool, d: f64) -> Self {
        if !converged {
            Status::Unconverged
        } else if d <= ACCURATE_D {
            Status::Accurate
        } else if d <= FAILED_D {
            Status::Ok
        } else {
            Status::Inaccurate
        }
    }

    pub fn succeeded(&self) -> bool {
        matches!(self, Status::Accurate | Status::Ok)
    }

    fn as_field(&self) -> String {
        match self {
            Status::Accurate => "accurate".into(),
            Status::Ok => "ok".into(),
            Status::Inaccurate => "inaccurate".into(),
            Status::Unconverged => "unconverged".into(),
            // commas and line breaks would break the CSV
            Status::Error(m) => format!("error: {}", m.replace([',', '\n', '\r'], ";")),
        }
    }

    fn from_field(s: &str) -> Result<Self> {
        Ok(match s {
            "accurate" => Status::Accurate,
            "ok" => Status::Ok,
            "inaccurate" => Status::Inaccurate,
            "unconverged" => Status::Unconverged,
            _ => match s.strip_prefix("error: ") {
                Some(m) => Status::Error(m.to_string()),
                None => return Err(Error::Report(format!("unknown status '{s}'"))),
            },
        })
    }
}

impl TableRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            self.method,
            self.ell,
            self.n,
            self.cond,
            self.iter,
            self.t_st,
            self.t_omm,
            self.t_tot,
            self.d,
            self.status.as_field()
        )
    }

    /// The line without its timing columns.
    pub fn without_timings(&self) -> TableRow {
        TableRow { t_st: 0.0, t_omm: 0.0, t_tot: 0.0, ..self.clone() }
    }
}

pub fn write_rows<W: Write>(rows: &[TableRow], mut out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Report("no rows to write".into()));
    }
    writeln!(out, "{HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.to_csv_line())?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_report(rows: &[TableRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Report("no rows to write".into()));
    }
    let f = std::fs::File::create(path)?;
    write_rows(rows, std::io::BufWriter::new(f))
}

pub fn parse_report(text: &str) -> Result<Vec<TableRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        other => return Err(Error::Report(format!("unexpected header {other:?}"))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.splitn(10, ',').collect();
            if f.len() != 10 {
                return Err(Error::Report(format!("expected 10 fields in '{l}'")));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| Error::Report(format!("bad number '{}'", f[i])));
            let int = |i: usize| f[i].parse::<usize>().map_err(|_| Error::Report(format!("bad integer '{}'", f[i])));
            Ok(TableRow {
                method: f[0].to_string(),
                ell: int(1)?,
                n: int(2)?,
                cond: num(3)?,
                iter: num(4)?,
                t_st: num(5)?,
                t_omm: num(6)?,
                t_tot: num(7)?,
                d: num(8)?,
                status: Status::from_field(f[9])?,
            })
        })
        .collect()
}

/// One energy sample of one run, for the long-format trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TracePoint {
    pub method: String,
    pub ell: usize,
    pub seed: u64,
    pub iter: usize,
    pub energy: f64,
}

pub fn write_trace<W: Write>(points: &[TracePoint], mut out: W) -> Result<()> {
    writeln!(out, "method,l,seed,iter,energy")?;
    for p in points {
        writeln!(out, "{},{},{},{},{:e}", p.method, p.ell, p.seed, p.iter, p.energy)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, d: f64, status: Status) -> TableRow {
        TableRow {
            method: method.into(),
            ell: 3,
            n: 576,
            cond: 1.4e2,
            iter: 3.0,
            t_st: 1.486e-2,
            t_omm: 1.063e-2,
            t_tot: 1.486e-2 + 1.063e-2,
            d,
            status,
        }
    }

    #[test]
    fn round_trip() {
        let rows = vec![
            row("tpa", 9.0e-7, Status::Accurate),
            row("gtpa(5)", 0.1 + 0.2, Status::Inaccurate),
            row("pp", 4.4e-10, Status::Error("gmres, breakdown\nat pole 3".into())),
        ];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(HEADER));
        let back = parse_report(&text).unwrap();
        assert_eq!(back[..2], rows[..2]);
        assert_eq!(back[2].status, Status::Error("gmres; breakdown;at pole 3".into()));
    }

    #[test]
    fn empty_rows_rejected() {
        assert!(matches!(write_rows(&[], Vec::new()), Err(Error::Report(_))));
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], &dir.path().join("t.csv")).is_err());
    }

    #[test]
    fn io_errors_surface() {
        let r = emit_report(&[row("pp", 0.0, Status::Ok)], Path::new("/nonexistent-dir/x/t.csv"));
        assert!(matches!(r, Err(Error::Io(_))));
    }

    #[test]
    fn classification() {
        assert_eq!(Status::classify(true, 1e-4), Status::Accurate);
        assert_eq!(Status::classify(true, 5e-4), Status::Ok);
        assert_eq!(Status::classify(true, 2e-3), Status::Inaccurate);
        assert_eq!(Status::classify(false, 0.0), Status::Unconverged);
        assert!(!Status::Inaccurate.succeeded());
    }
}
