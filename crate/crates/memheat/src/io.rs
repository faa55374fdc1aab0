//! CSV and JSON output for fields, histories, trajectories and summaries.

use crate::diagnostics::FunctionalTrace;
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::history::HistoryField;
use crate::spectral::SpectralField;
use std::io::Write;
use std::path::Path;

/// Write fields as CSV rows of coefficients under a `m1..mN` header.
pub fn write_fields_csv<P: AsRef<Path>>(path: P, fields: &[SpectralField]) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    let modes = fields.first().map_or(0, |f| f.modes());
    let header: Vec<String> = (1..=modes).map(|k| format!("m{k}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for f in fields {
        let row: Vec<String> = f.coeffs().iter().map(|c| format!("{c:e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_fields_csv<P: AsRef<Path>>(path: P) -> Result<Vec<SpectralField>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())?;
    let mut fields = Vec::new();
    for record in reader.records() {
        let record = record?;
        let coeffs: std::result::Result<Vec<f64>, _> =
            record.iter().map(|s| s.trim().parse::<f64>()).collect();
        fields.push(SpectralField::new(coeffs.map_err(|e| {
            crate::error::Error::Config(format!("bad field row: {e}"))
        })?));
    }
    Ok(fields)
}

/// History snapshot as a CSV matrix: one row per s-node with its node
/// position and weight, one column per mode.
pub fn write_history_csv<P: AsRef<Path>>(path: P, eta: &HistoryField) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    let modes = eta.modes();
    let mut header = vec!["s".to_string(), "weight".to_string()];
    header.extend((1..=modes).map(|k| format!("m{k}")));
    writeln!(out, "{}", header.join(","))?;
    let grid = eta.grid();
    for ((s, w), v) in grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .zip(eta.values())
    {
        let mut row = vec![format!("{s:e}"), format!("{w:e}")];
        row.extend(v.coeffs().iter().map(|c| format!("{c:e}")));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Stream stored trajectory snapshots: time, norm columns, mode coefficients.
pub fn write_trajectory_csv<P: AsRef<Path>>(path: P, traj: &Trajectory) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    let modes = traj.final_state().u.modes();
    let mut header = vec![
        "t".to_string(),
        "z_h0".to_string(),
        "z_h1".to_string(),
        "z_v".to_string(),
        "u_l2".to_string(),
    ];
    header.extend((1..=modes).map(|k| format!("m{k}")));
    writeln!(out, "{}", header.join(","))?;
    for z in &traj.states {
        let mut row = vec![
            format!("{:e}", z.t),
            format!("{:e}", z.hr_norm(0.0)),
            format!("{:e}", z.hr_norm(1.0)),
            format!("{:e}", z.v_norm()),
            format!("{:e}", z.u.norm(0.0)),
        ];
        row.extend(z.u.coeffs().iter().map(|c| format!("{c:e}")));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Write a named time series as a two-column CSV.
pub fn write_trace_csv<P: AsRef<Path>>(path: P, trace: &FunctionalTrace) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    writeln!(out, "t,{}", trace.name)?;
    for (t, v) in trace.times.iter().zip(&trace.values) {
        writeln!(out, "{t:e},{v:e}")?;
    }
    Ok(())
}

/// Pretty-printed JSON summary.
pub fn write_summary_json<P: AsRef<Path>, T: serde::Serialize>(path: P, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| crate::error::Error::Config(format!("summary serialization: {e}")))?;
    std::fs::write(path, body + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::HistoryGrid;
    use crate::kernels::{make_kernel, KernelFamily, QuadratureSpec, SampleGrid};

    #[test]
    fn fields_round_trip_through_csv() {
        let dir = std::env::temp_dir().join("memheat_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fields.csv");
        let fields = vec![
            SpectralField::new(vec![1.0, -0.25, 1e-30]),
            SpectralField::new(vec![0.5, 2.0, -3.5]),
        ];
        write_fields_csv(&path, &fields).unwrap();
        let back = read_fields_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in fields.iter().zip(&back) {
            assert_eq!(a.coeffs(), b.coeffs());
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn history_csv_has_node_and_weight_columns() {
        let dir = std::env::temp_dir().join("memheat_io_hist_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("eta.csv");
        let kernel = make_kernel(
            KernelFamily::Exponential { delta: 1.0 },
            SampleGrid::default(),
        )
        .unwrap();
        let grid = HistoryGrid::new(kernel, &QuadratureSpec::geometric(8)).unwrap();
        let eta = HistoryField::constant(grid, &SpectralField::new(vec![1.0, 2.0]));
        write_history_csv(&path, &eta).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        let mut lines = body.lines();
        assert_eq!(lines.next().unwrap(), "s,weight,m1,m2");
        assert_eq!(lines.count(), 8);
        std::fs::remove_dir_all(&dir).ok();
    }
}
