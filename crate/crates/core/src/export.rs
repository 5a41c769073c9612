//! CSV dumps of intermediate quantities, mostly for debugging.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::geometry::LeadField;
use crate::metrics::ReconstructionSeries;
use crate::signal::SourceWaveforms;
use crate::subspace::StepDiagnostics;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(csv::Writer::from_path(path)?)
}

fn num(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

/// One row per electrode, one column per source component (`n<j>_<axis>`).
pub fn write_lead_field(path: &Path, lead: &LeadField) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["electrode".to_string()];
    for j in 0..lead.n_nodes() {
        for axis in ["x", "y", "z"] {
            header.push(format!("n{j}_{axis}"));
        }
    }
    w.write_record(&header)?;
    let m = lead.matrix();
    for e in 0..m.nrows() {
        let mut row = vec![e.to_string()];
        row.extend(m.row(e).iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_waveforms(path: &Path, waves: &SourceWaveforms) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "time_s", "deep_nAm", "superficial_nAm"])?;
    for (k, t) in waves.times().iter().enumerate() {
        w.write_record([k.to_string(), num(*t), num(waves.deep[k]), num(waves.superficial[k])])?;
    }
    w.flush()?;
    Ok(())
}

/// Electrode potentials in volts; `kind` distinguishes the clean and noisy
/// matrices, one row per (kind, electrode) and one column per step.
pub fn write_measurements(path: &Path, clean: &DMatrix<f64>, noisy: &DMatrix<f64>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["kind".to_string(), "electrode".to_string()];
    header.extend((0..clean.ncols()).map(|k| format!("t{k}")));
    w.write_record(&header)?;
    for (kind, m) in [("clean", clean), ("noisy", noisy)] {
        for e in 0..m.nrows() {
            let mut row = vec![kind.to_string(), e.to_string()];
            row.extend(m.row(e).iter().map(|v| num(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Node amplitudes over time, tagged `filtered` or `smoothed`.
pub fn write_amplitudes(path: &Path, series: &ReconstructionSeries, smoothed: bool) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["pass", "node", "x_m", "y_m", "z_m"].iter().map(|s| s.to_string()).collect();
    header.extend((0..series.n_steps()).map(|k| format!("t{k}")));
    w.write_record(&header)?;
    let pass = if smoothed { "smoothed" } else { "filtered" };
    for (j, p) in series.positions.iter().enumerate() {
        let mut row = vec![pass.to_string(), j.to_string(), num(p.x), num(p.y), num(p.z)];
        row.extend(series.amplitudes.row(j).iter().map(|v| num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics(path: &Path, diag: &[StepDiagnostics]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "trace_filtered", "max_weight", "innovation_norm"])?;
    for (k, d) in diag.iter().enumerate() {
        w.write_record([k.to_string(), num(d.trace_filtered), num(d.max_weight), num(d.innovation_norm)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{assemble_lead_field, build_electrode_array, build_source_space};

    #[test]
    fn lead_field_round_trip() {
        let space = build_source_space(0.03, 0.05).unwrap();
        let el = build_electrode_array(8, 0.09).unwrap();
        let lead = assemble_lead_field(&space, &el, 0.33).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lf.csv");
        write_lead_field(&path, &lead).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap().len(), 1 + 3 * space.len());
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 8);
        for (e, row) in rows.iter().enumerate() {
            for c in 0..3 * space.len() {
                let v: f64 = row[c + 1].parse().unwrap();
                assert_eq!(v, lead.matrix()[(e, c)]);
            }
        }
    }
}
