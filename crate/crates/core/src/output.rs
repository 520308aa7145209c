//! CSV export and import. Numbers are written with 17 significant digits so
//! that parsing a file recovers every value bit for bit.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::integrator::{CycleSummary, Sample};
use crate::model::{CascadeState, FlowDirection, Phase};
use crate::steady::{BranchPoint, CurveKind, DiagramCurve};

pub const DIAGRAM_HEADER: [&str; 7] = [
    "curve",
    "Da",
    "alpha1",
    "alpha2",
    "alpha_out",
    "det_sign",
    "stable",
];
pub const SERIES_HEADER: [&str; 6] = ["tau", "alpha1", "alpha2", "alpha_out", "io", "phase"];
pub const CYCLES_HEADER: [&str; 7] = [
    "cycle",
    "io",
    "alpha_beg",
    "alpha_end",
    "alpha_avg",
    "alpha1_end",
    "alpha2_end",
];
pub const SCAN_HEADER: [&str; 3] = ["tau_rel", "alpha_avg", "settled"];
pub const REPORT_HEADER: [&str; 2] = ["quantity", "value"];

/// Marker written for ratios against a vanishing reference.
pub const UNDEFINED: &str = "undefined";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: record {record}: {reason}")]
    Malformed {
        path: PathBuf,
        record: usize,
        reason: String,
    },
}

type Result<T> = std::result::Result<T, OutputError>;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_stable(s: Option<bool>) -> &'static str {
    match s {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

/// CSV table with `#` metadata lines above the header.
#[derive(Debug)]
pub struct Table {
    metadata: Vec<String>,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(metadata: &[String], header: &[&str]) -> Self {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(header).expect("writing to memory");
        Self {
            metadata: metadata.to_vec(),
            writer,
        }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("writing to memory");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        let mut out = Vec::new();
        for line in &self.metadata {
            out.extend_from_slice(b"# ");
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
        out.extend(self.writer.into_inner().expect("writing to memory"));
        out
    }
}

/// Metadata block: tool version followed by the configuration echo.
pub fn metadata(kind: &str, echo: &[(&str, String)]) -> Vec<String> {
    let mut lines = vec![format!(
        "{} {} {kind}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION")
    )];
    lines.extend(echo.iter().map(|(k, v)| format!("{k} = {v}")));
    lines
}

pub fn diagram_table(metadata: &[String], curves: &[DiagramCurve]) -> Table {
    let mut t = Table::new(metadata, &DIAGRAM_HEADER);
    for curve in curves {
        for p in &curve.points {
            t.row([
                curve.kind.as_str().to_string(),
                fmt_f64(p.p),
                fmt_f64(p.state.alpha1),
                fmt_f64(p.state.alpha2),
                fmt_f64(p.alpha_out),
                p.det_sign.to_string(),
                fmt_stable(p.stable).to_string(),
            ]);
        }
    }
    t
}

pub fn series_table<'a>(
    metadata: &[String],
    samples: impl IntoIterator<Item = &'a Sample>,
) -> Table {
    let mut t = Table::new(metadata, &SERIES_HEADER);
    for s in samples {
        t.row([
            fmt_f64(s.tau),
            fmt_f64(s.state.alpha1),
            fmt_f64(s.state.alpha2),
            fmt_f64(s.alpha_out),
            s.io.as_u8().to_string(),
            s.phase.as_str().to_string(),
        ]);
    }
    t
}

pub fn cycles_table(metadata: &[String], summaries: &[CycleSummary]) -> Table {
    let mut t = Table::new(metadata, &CYCLES_HEADER);
    for (j, c) in summaries.iter().enumerate() {
        t.row([
            j.to_string(),
            FlowDirection::for_cycle(j).as_u8().to_string(),
            fmt_f64(c.alpha_beg),
            fmt_f64(c.alpha_end),
            fmt_f64(c.alpha_avg),
            fmt_f64(c.end_state.alpha1),
            fmt_f64(c.end_state.alpha2),
        ]);
    }
    t
}

pub fn fmt_ratio(r: Option<f64>) -> String {
    r.map_or_else(|| UNDEFINED.to_string(), fmt_f64)
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Sidecar log path for an output file: `steady.csv` -> `steady.csv.log`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".log");
    path.with_file_name(name)
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| OutputError::Csv {
            path: path.to_path_buf(),
            source,
        })
}

fn records(path: &Path, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut rdr = reader(path)?;
    let csv_err = |source| OutputError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(OutputError::Malformed {
            path: path.to_path_buf(),
            record: 0,
            reason: format!("unexpected header {header:?}"),
        });
    }
    rdr.records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_err)
}

struct Fields<'a> {
    path: &'a Path,
    record: usize,
    row: &'a csv::StringRecord,
}

impl Fields<'_> {
    fn malformed(&self, reason: String) -> OutputError {
        OutputError::Malformed {
            path: self.path.to_path_buf(),
            record: self.record,
            reason,
        }
    }

    fn str(&self, i: usize) -> &str {
        self.row.get(i).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, i: usize) -> Result<T> {
        self.str(i)
            .parse()
            .map_err(|_| self.malformed(format!("bad field {i}: `{}`", self.str(i))))
    }
}

pub fn read_diagram(path: &Path) -> Result<Vec<DiagramCurve>> {
    let mut curves: Vec<DiagramCurve> = Vec::new();
    for (i, row) in records(path, &DIAGRAM_HEADER)?.iter().enumerate() {
        let f = Fields {
            path,
            record: i + 1,
            row,
        };
        let kind = CurveKind::parse(f.str(0))
            .ok_or_else(|| f.malformed(format!("unknown curve `{}`", f.str(0))))?;
        let stable = match f.str(6) {
            "" => None,
            _ => Some(f.parse::<bool>(6)?),
        };
        let point = BranchPoint {
            p: f.parse(1)?,
            state: CascadeState::new(f.parse(2)?, f.parse(3)?),
            alpha_out: f.parse(4)?,
            det_sign: f.parse(5)?,
            stable,
        };
        match curves.iter_mut().find(|c| c.kind == kind) {
            Some(c) => c.points.push(point),
            None => curves.push(DiagramCurve {
                kind,
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

pub fn read_series(path: &Path) -> Result<Vec<Sample>> {
    records(path, &SERIES_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let f = Fields {
                path,
                record: i + 1,
                row,
            };
            let io = FlowDirection::from_io(f.parse(4)?).map_err(|e| f.malformed(e.to_string()))?;
            let phase = match f.str(5) {
                "series" => Phase::Series,
                "relaxing" => Phase::Relaxing,
                other => return Err(f.malformed(format!("unknown phase `{other}`"))),
            };
            Ok(Sample {
                tau: f.parse(0)?,
                state: CascadeState::new(f.parse(1)?, f.parse(2)?),
                alpha_out: f.parse(3)?,
                io,
                phase,
            })
        })
        .collect()
}

/// `(tau_rel, average)` rows of a scan table; unsettled entries read as `None`.
pub fn read_scan(path: &Path) -> Result<Vec<(f64, Option<f64>)>> {
    records(path, &SCAN_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let f = Fields {
                path,
                record: i + 1,
                row,
            };
            let avg = match f.str(1) {
                "" => None,
                _ => Some(f.parse(1)?),
            };
            Ok((f.parse(0)?, avg))
        })
        .collect()
}

/// `quantity -> value` pairs of a report table.
pub fn read_report(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(records(path, &REPORT_HEADER)?
        .iter()
        .map(|r| {
            (
                r.get(0).unwrap_or("").to_string(),
                r.get(1).unwrap_or("").to_string(),
            )
        })
        .collect())
}
