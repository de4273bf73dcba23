//! CSV metrics: one row per report, fixed column order, 17 significant digits.
//!
//! Each row carries `d/dt E_N + D_N`, which needs the following sample, so rows are
//! written one report late. Interior rows use central differences, the first and
//! last rows one-sided ones.

use std::io::{Read, Write};

use crate::diagnostics::EnergyReport;

pub const COLUMNS: [&str; 12] = [
    "t",
    "tilde_E_N",
    "G",
    "E_N",
    "D_N",
    "tilde_D_N",
    "kappa",
    "lambda0_used",
    "continuity_residual",
    "momentum_residual",
    "energy_inequality_residual",
    "min_ratio",
];

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn row(r: &EnergyReport) -> [String; 12] {
    [
        fmt(r.t),
        fmt(r.tilde_e_n),
        fmt(r.g),
        fmt(r.e_n),
        fmt(r.d_n),
        fmt(r.tilde_d_n),
        fmt(r.kappa),
        fmt(r.lambda0),
        fmt(r.continuity_residual),
        fmt(r.momentum_residual),
        fmt(r.energy_inequality_residual),
        fmt(r.min_ratio),
    ]
}

pub struct ReportSink<W: Write> {
    writer: csv::Writer<W>,
    prev: Option<EnergyReport>,
    pending: Option<EnergyReport>,
    min_ratio: Option<f64>,
    written: Vec<EnergyReport>,
}

impl<W: Write> ReportSink<W> {
    /// Writes the header immediately.
    pub fn new(inner: W) -> Result<Self, csv::Error> {
        let mut writer = csv::Writer::from_writer(inner);
        writer.write_record(COLUMNS)?;
        Ok(Self {
            writer,
            prev: None,
            pending: None,
            min_ratio: None,
            written: Vec::new(),
        })
    }

    /// Continues a series: `history` rows are rewritten verbatim and the last of
    /// them seeds the difference stencil of the next pushed report.
    pub fn resume(inner: W, history: &[EnergyReport]) -> Result<Self, csv::Error> {
        let mut sink = Self::new(inner)?;
        for r in history {
            sink.writer.write_record(row(r))?;
            sink.written.push(r.clone());
        }
        sink.prev = history.last().cloned();
        if history.iter().any(|r| r.e_n > 0.0) {
            sink.min_ratio = history.last().map(|r| r.min_ratio);
        }
        Ok(sink)
    }

    /// Queues `report`; returns the row that became complete, if any.
    pub fn push(&mut self, mut report: EnergyReport) -> Result<Option<&EnergyReport>, csv::Error> {
        if report.e_n > 0.0 {
            let ratio = report.d_n / report.e_n;
            self.min_ratio = Some(self.min_ratio.map_or(ratio, |m| m.min(ratio)));
        }
        report.min_ratio = self.min_ratio.unwrap_or(0.0);
        let done = match self.pending.take() {
            Some(mut p) => {
                let (a, b) = match &self.prev {
                    Some(prev) => (prev, &report),
                    None => (&p, &report),
                };
                p.energy_inequality_residual = (b.e_n - a.e_n) / (b.t - a.t) + p.d_n;
                self.emit(p)?;
                true
            }
            None => false,
        };
        self.pending = Some(report);
        Ok(if done { self.written.last() } else { None })
    }

    fn emit(&mut self, r: EnergyReport) -> Result<(), csv::Error> {
        self.writer.write_record(row(&r))?;
        self.prev = Some(r.clone());
        self.written.push(r);
        Ok(())
    }

    /// Flushes the last queued report (backward difference, or 0 for a single sample).
    pub fn finish(mut self) -> Result<(Vec<EnergyReport>, W), csv::Error> {
        if let Some(mut p) = self.pending.take() {
            p.energy_inequality_residual = match &self.prev {
                Some(prev) => (p.e_n - prev.e_n) / (p.t - prev.t) + p.d_n,
                None => 0.0,
            };
            self.emit(p)?;
        }
        let inner = self.writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok((self.written, inner))
    }

    pub fn written(&self) -> &[EnergyReport] {
        &self.written
    }
}

/// Parses a metrics CSV back into reports.
pub fn read_reports<R: Read>(reader: R) -> Result<Vec<EnergyReport>, csv::Error> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().collect()
}

/// `(t, E_N)` pairs and the `kappa` column (if present) of any CSV with `t` and
/// `E_N` columns.
pub fn read_series<R: Read>(reader: R) -> Result<(Vec<(f64, f64)>, Option<f64>), csv::Error> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| {
        csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("missing column {name}"),
        ))
    };
    let t_col = col("t").ok_or_else(|| missing("t"))?;
    let e_col = col("E_N").ok_or_else(|| missing("E_N"))?;
    let k_col = col("kappa");
    let parse = |rec: &csv::StringRecord, i: usize| -> Result<f64, csv::Error> {
        let field = rec.get(i).unwrap_or("").trim();
        field.parse::<f64>().map_err(|_| {
            csv::Error::from(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad number {field:?} on line {}", rec.position().map_or(0, |p| p.line())),
            ))
        })
    };
    let mut series = Vec::new();
    let mut kappa = None;
    for rec in rdr.records() {
        let rec = rec?;
        series.push((parse(&rec, t_col)?, parse(&rec, e_col)?));
        if let Some(k) = k_col {
            kappa = Some(parse(&rec, k)?);
        }
    }
    Ok((series, kappa))
}
