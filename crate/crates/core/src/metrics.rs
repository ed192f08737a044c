//! Error metrics, work counters and comparison tables.

use std::fmt::Write as _;
use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::IterationTrace;

/// `||u~ - u||^2 / ||u||^2`.
pub fn relative_error_snapshot(u_approx: &DVector<f64>, u_ref: &DVector<f64>) -> Result<f64> {
    check_shapes(u_approx.len(), 1, u_ref.len(), 1)?;
    let denom = u_ref.norm_squared();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("reference snapshot has zero norm".into()));
    }
    Ok((u_approx - u_ref).norm_squared() / denom)
}

/// `||u~ - u|| / ||u||`, the square root of [`relative_error_snapshot`].
pub fn relative_error_snapshot_unsquared(u_approx: &DVector<f64>, u_ref: &DVector<f64>) -> Result<f64> {
    relative_error_snapshot(u_approx, u_ref).map(f64::sqrt)
}

/// `||S~ - S||_F / ||S||_F`.
pub fn overall_error(s_approx: &DMatrix<f64>, s_ref: &DMatrix<f64>) -> Result<f64> {
    check_shapes(s_approx.nrows(), s_approx.ncols(), s_ref.nrows(), s_ref.ncols())?;
    let denom = s_ref.norm();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("reference snapshot set has zero norm".into()));
    }
    Ok((s_approx - s_ref).norm() / denom)
}

fn check_shapes(ra: usize, ca: usize, rb: usize, cb: usize) -> Result<()> {
    if (ra, ca) != (rb, cb) {
        return Err(Error::InvalidInput(format!("shape mismatch: {ra}x{ca} vs {rb}x{cb}")));
    }
    Ok(())
}

/// Per-snapshot squared errors in column order.
pub fn snapshot_errors(s_approx: &DMatrix<f64>, s_ref: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_shapes(s_approx.nrows(), s_approx.ncols(), s_ref.nrows(), s_ref.ncols())?;
    (0..s_ref.ncols())
        .map(|k| relative_error_snapshot(&s_approx.column(k).into_owned(), &s_ref.column(k).into_owned()))
        .collect()
}

/// Timing and work summary of one solver campaign.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub label: String,
    pub wall_time_s: f64,
    pub iterations: usize,
    pub elements_touched: usize,
    /// Largest single-evaluation element count.
    pub elements_touched_per_iteration: usize,
    pub quadrature_size: Option<usize>,
    pub complementary_size: Option<usize>,
}

impl SolverReport {
    pub fn from_traces<'a>(label: impl Into<String>, traces: impl IntoIterator<Item = &'a IterationTrace>) -> Self {
        let mut report = SolverReport { label: label.into(), ..Default::default() };
        for t in traces {
            report.wall_time_s += t.wall_time_s;
            report.iterations += t.iterations();
            report.elements_touched += t.elements_touched.iter().sum::<usize>();
            let peak = t.elements_touched.iter().copied().max().unwrap_or(0);
            report.elements_touched_per_iteration = report.elements_touched_per_iteration.max(peak);
        }
        report
    }

    pub fn with_wall_time(mut self, elapsed: Duration) -> Self {
        self.wall_time_s = elapsed.as_secs_f64();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    /// `wall(a) / wall(b)`; `None` when `b` took no measurable time.
    pub wall: Option<f64>,
    /// `elements(a) / elements(b)`.
    pub work: f64,
}

/// How much faster `b` is than `a`.
pub fn measure_speedup(a: &SolverReport, b: &SolverReport) -> Result<Speedup> {
    if b.elements_touched == 0 {
        return Err(Error::UndefinedMetric("second report touched no elements".into()));
    }
    let wall = (b.wall_time_s > 0.0).then(|| a.wall_time_s / b.wall_time_s);
    Ok(Speedup { wall, work: a.elements_touched as f64 / b.elements_touched as f64 })
}

/// Three pairwise overall errors for one strategy and one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: String,
    pub variable: String,
    pub phase: String,
    pub fom_vs_rom: f64,
    pub rom_vs_hrom: f64,
    pub fom_vs_hrom: f64,
}

impl ComparisonRow {
    pub fn from_snapshots(
        strategy: impl Into<String>,
        variable: impl Into<String>,
        phase: impl Into<String>,
        fom: &DMatrix<f64>,
        rom: &DMatrix<f64>,
        hrom: &DMatrix<f64>,
    ) -> Result<Self> {
        Ok(Self {
            strategy: strategy.into(),
            variable: variable.into(),
            phase: phase.into(),
            fom_vs_rom: overall_error(rom, fom)?,
            rom_vs_hrom: overall_error(hrom, rom)?,
            fom_vs_hrom: overall_error(hrom, fom)?,
        })
    }
}

/// Errors plus timing for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub row: ComparisonRow,
    pub snapshot_errors_rom: Vec<f64>,
    pub snapshot_errors_hrom: Vec<f64>,
    pub fom: SolverReport,
    pub rom: SolverReport,
    pub hrom: SolverReport,
}

pub const TABLE_HEADER: &str = "strategy,variable,phase,fom_vs_rom,rom_vs_hrom,fom_vs_hrom";

/// CSV with one row per report, in input order.
pub fn render_comparison_tables(rows: &[ComparisonRow]) -> Result<String> {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        for field in [&r.strategy, &r.variable, &r.phase] {
            if field.contains([',', '\n', '"']) {
                return Err(Error::InvalidInput(format!("field {field:?} cannot be written unquoted")));
            }
        }
        let _ = writeln!(
            out,
            "{},{},{},{:?},{:?},{:?}",
            r.strategy, r.variable, r.phase, r.fom_vs_rom, r.rom_vs_hrom, r.fom_vs_hrom
        );
    }
    Ok(out)
}

pub fn parse_comparison_tables(text: &str) -> Result<Vec<ComparisonRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TABLE_HEADER) {
        return Err(Error::InvalidInput("comparison table header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::InvalidInput(format!("row {}: expected 6 fields, got {}", i + 1, f.len())));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("row {}: {s:?}: {e}", i + 1)))
            };
            Ok(ComparisonRow {
                strategy: f[0].into(),
                variable: f[1].into(),
                phase: f[2].into(),
                fom_vs_rom: num(f[3])?,
                rom_vs_hrom: num(f[4])?,
                fom_vs_hrom: num(f[5])?,
            })
        })
        .collect()
}

/// Per-snapshot errors as CSV for external plotting: `column,squared,unsquared`.
pub fn render_snapshot_errors(errors: &[f64]) -> String {
    let mut out = String::from("column,squared,unsquared\n");
    for (k, e) in errors.iter().enumerate() {
        let _ = writeln!(out, "{k},{e:?},{:?}", e.sqrt());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn snapshot_error_hand_values() {
        let u = dvector![3.0, 4.0];
        assert_eq!(relative_error_snapshot(&dvector![3.0, 0.0], &u).unwrap(), 0.64);
        assert_eq!(relative_error_snapshot(&u, &u).unwrap(), 0.0);
        assert_eq!(relative_error_snapshot(&(&u * 2.0), &u).unwrap(), 1.0);
        assert!(matches!(
            relative_error_snapshot(&u, &dvector![0.0, 0.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn overall_error_hand_case() {
        // ||diff||_F^2 = 1 + 4 = 5, ||S||_F^2 = 1 + 4 + 9 + 16 = 30.
        let s = dmatrix![1.0, 2.0; 3.0, 4.0];
        let approx = dmatrix![2.0, 2.0; 3.0, 2.0];
        let e = overall_error(&approx, &s).unwrap();
        assert!((e - (5.0f64 / 30.0).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn single_column_consistency() {
        let u = dvector![1.0, -2.0, 0.5];
        let v = dvector![1.1, -2.0, 0.4];
        let e = overall_error(&DMatrix::from_column_slice(3, 1, v.as_slice()), &DMatrix::from_column_slice(3, 1, u.as_slice()))
            .unwrap();
        let ei = relative_error_snapshot(&v, &u).unwrap();
        assert!((e - ei.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn speedup_counters() {
        let a = SolverReport { elements_touched: 100, wall_time_s: 1.0, ..Default::default() };
        let b = SolverReport { elements_touched: 10, wall_time_s: 0.0, ..Default::default() };
        let s = measure_speedup(&a, &b).unwrap();
        assert_eq!(s.work, 10.0);
        assert_eq!(s.wall, None);
        assert_eq!(measure_speedup(&a, &a).unwrap().work, 1.0);
    }

    #[test]
    fn table_round_trip_and_order() {
        let s = dmatrix![1.0, 2.0; 3.0, 4.0];
        let zero = ComparisonRow::from_snapshots("lspg", "u", "train", &s, &s, &s).unwrap();
        assert_eq!((zero.fom_vs_rom, zero.rom_vs_hrom, zero.fom_vs_hrom), (0.0, 0.0, 0.0));
        let other = ComparisonRow { strategy: "galerkin".into(), fom_vs_rom: 0.1 + 0.2, ..zero.clone() };
        let text = render_comparison_tables(&[zero.clone(), other.clone()]).unwrap();
        assert!(text.starts_with(TABLE_HEADER));
        assert!(text.ends_with('\n') && !text.contains('\r'));
        assert_eq!(parse_comparison_tables(&text).unwrap(), vec![zero, other]);
    }
}
