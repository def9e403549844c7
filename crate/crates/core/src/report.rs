//! Learning-curve CSV output.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::search::IterationReport;

/// One row of the learning-curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iteration: usize,
    pub mean_rho: f64,
    pub max_rho: f64,
    pub min_rho: f64,
    pub mean_rho_smooth: f64,
    pub frac_satisfied: f64,
    pub wall_ms: u64,
}

impl CurveRow {
    /// Row for `report`. Wall-clock time is zeroed unless `wall_clock` is
    /// set, so that reruns produce identical files.
    pub fn from_report(report: &IterationReport, wall_clock: bool) -> Self {
        Self {
            iteration: report.iteration,
            mean_rho: report.mean_rho,
            max_rho: report.max_rho,
            min_rho: report.min_rho,
            mean_rho_smooth: report.mean_rho_smooth,
            frac_satisfied: report.frac_satisfied,
            wall_ms: if wall_clock { report.wall_ms } else { 0 },
        }
    }
}

pub fn write_learning_curve<W: Write>(
    reports: &[IterationReport],
    wall_clock: bool,
    writer: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    if reports.is_empty() {
        w.write_record([
            "iteration",
            "mean_rho",
            "max_rho",
            "min_rho",
            "mean_rho_smooth",
            "frac_satisfied",
            "wall_ms",
        ])?;
    }
    for r in reports {
        w.serialize(CurveRow::from_report(r, wall_clock))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_learning_curve<R: Read>(reader: R) -> Result<Vec<CurveRow>, csv::Error> {
    csv::Reader::from_reader(reader).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(i: usize) -> IterationReport {
        IterationReport {
            iteration: i,
            mean_rho: -0.25 * i as f64,
            max_rho: 1.0 / 3.0,
            min_rho: -1e-17,
            mean_rho_smooth: 0.1,
            frac_satisfied: 0.45,
            wall_ms: 17,
            warnings: vec![],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let reports: Vec<_> = (0..3).map(report).collect();
        let mut buf = Vec::new();
        write_learning_curve(&reports, true, &mut buf).unwrap();
        let rows = read_learning_curve(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, r) in rows.iter().zip(&reports) {
            assert_eq!(*row, CurveRow::from_report(r, true));
        }
    }

    #[test]
    fn header_and_zeroed_wall_clock() {
        let mut buf = Vec::new();
        write_learning_curve(&[report(0)], false, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,mean_rho,max_rho,min_rho,mean_rho_smooth,frac_satisfied,wall_ms"
        );
        assert!(lines.next().unwrap().ends_with(",0"));
    }

    #[test]
    fn empty_curve_has_a_header() {
        let mut buf = Vec::new();
        write_learning_curve(&[], false, &mut buf).unwrap();
        assert!(read_learning_curve(buf.as_slice()).unwrap().is_empty());
        assert!(String::from_utf8(buf).unwrap().starts_with("iteration,"));
    }
}
