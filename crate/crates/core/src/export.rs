//! File formats shared by the pipeline: pretty JSON, column CSV and a
//! compact binary mirror (column-major little-endian `f64` with a JSON
//! sidecar).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cip::Cip;
use crate::error::{Error, Result};
use crate::hemo::SimulationResult;
use crate::transport::ConcentrationField;
use crate::vessel::BranchLabel;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

/// Named equal-length columns.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

/// Sidecar of a binary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryManifest {
    pub format: String,
    pub rows: usize,
    pub columns: Vec<String>,
}

impl Table {
    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(column);
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    fn check(&self) -> Result<()> {
        let n = self.rows();
        match self.columns.iter().position(|c| c.len() != n) {
            Some(i) => Err(Error::Shape(format!("column {} has {} rows, expected {n}", self.names[i], self.columns[i].len()))),
            None => Ok(()),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.check()?;
        ensure_parent(path)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.names)?;
        for i in 0..self.rows() {
            w.write_record(self.columns.iter().map(|c| c[i].to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `path` and `path` with a `.json` extension.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        self.check()?;
        ensure_parent(path)?;
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        for v in self.columns.iter().flatten() {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        write_json(
            &path.with_extension("json"),
            &BinaryManifest {
                format: "f64le-column-major".into(),
                rows: self.rows(),
                columns: self.names.clone(),
            },
        )
    }

    pub fn read_binary(path: &Path) -> Result<Table> {
        let m: BinaryManifest = read_json(&path.with_extension("json"))?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != 8 * m.rows * m.columns.len() {
            return Err(Error::Shape(format!("{} bytes for {}×{} values", bytes.len(), m.rows, m.columns.len())));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let columns = if m.rows == 0 {
            vec![vec![]; m.columns.len()]
        } else {
            values.chunks(m.rows).map(<[f64]>::to_vec).collect()
        };
        Ok(Table {
            names: m.columns,
            columns,
        })
    }
}

/// Hemodynamic series in SI-mm units (Pa, mm³, mm³/s, s); the unit is the
/// column name suffix.
pub fn simulation_table(r: &SimulationResult) -> Table {
    let mut t = Table::default();
    t.push("t_s", r.t.clone());
    t.push("p_ao_pa", r.p_ao.clone());
    t.push("p_lv_pa", r.p_lv.clone());
    t.push("v_lv_mm3", r.v_lv.clone());
    t.push("q_av_mm3s", r.q_av.clone());
    t.push("q_mv_mm3s", r.q_mv.clone());
    t.push("q_sys_mm3s", r.q_sys.clone());
    for (k, b) in BranchLabel::OUTLETS.iter().enumerate() {
        t.push(format!("q_out_{b}_mm3s"), r.q_outlet[k].clone());
    }
    for (k, b) in BranchLabel::OUTLETS.iter().enumerate() {
        t.push(format!("p_d_{b}_pa"), r.p_d[k].clone());
    }
    t
}

/// Inlet and distal outlet concentrations, mg/mm³.
pub fn distal_table(f: &ConcentrationField) -> Table {
    let mut t = Table::default();
    t.push("t_s", f.times.clone());
    t.push("c_inlet", f.inlet.clone());
    for (k, b) in BranchLabel::OUTLETS.iter().enumerate() {
        t.push(format!("c_{b}"), f.distal[k].clone());
    }
    t
}

/// Every cell at every snapshot, one column per snapshot.
pub fn field_table(f: &ConcentrationField) -> Table {
    let mut t = Table::default();
    for (k, (time, cells)) in f.times.iter().zip(&f.cells).enumerate() {
        t.push(format!("snapshot_{k}_t{time}"), cells.clone());
    }
    t
}

pub fn write_cips(path: &Path, cips: &[Cip]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(Cip::csv_header())?;
    for c in cips {
        w.write_record(c.csv_record())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cips(path: &Path) -> Result<Vec<Cip>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let cips = r
        .records()
        .map(|rec| Cip::from_csv_record(&header, &rec?))
        .collect::<Result<Vec<_>>>()?;
    if cips.is_empty() {
        return Err(Error::EmptyInput(format!("no profiles in {}", path.display())));
    }
    Ok(cips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpm::PhysioState;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::default();
        t.push("a", vec![1.0, -2.5, f64::MIN_POSITIVE]);
        t.push("b", vec![0.1, 0.2, 0.3]);
        let path = dir.path().join("x.bin");
        t.write_binary(&path).unwrap();
        assert_eq!(Table::read_binary(&path).unwrap(), t);
        t.columns[1].pop();
        assert!(t.write_csv(&dir.path().join("x.csv")).is_err());
    }

    #[test]
    fn cip_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cip = Cip {
            values: (0..256).map(|i| (i as f32 / 255.0) as f64).collect(),
            window_start: 2.125,
            window_end: 8.0,
            state: PhysioState::Rest,
            threshold: 1e-3,
        };
        let path = dir.path().join("c.csv");
        write_cips(&path, &[cip.clone(), cip.clone()]).unwrap();
        assert_eq!(read_cips(&path).unwrap(), vec![cip.clone(), cip]);
    }
}
