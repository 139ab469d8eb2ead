//! On-disk schemas shared by the CLI: sweep CSVs with JSON sidecars, loss
//! datasets with a device table, thermometry curves and IR spectra. All
//! units are SI with unit-suffixed column names. Every writer here is
//! deterministic (floats use the shortest round-trip representation, maps
//! are ordered) and every emitted file parses back losslessly through the
//! readers in this module.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ftir::IrSpectrum;
use crate::inference::{HeatingPoint, LossDataset, LossPoint, SweepKind};
use crate::response::{FrequencySweep, ResonatorParams};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: schema violation in field `{field}`: {problem}")]
    Schema {
        path: PathBuf,
        field: String,
        problem: String,
    },
    #[error("invalid data: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_field(path: &Path, field: &str, raw: &str) -> Result<f64, FileError> {
    raw.trim().parse::<f64>().map_err(|_| FileError::Schema {
        path: path.to_path_buf(),
        field: field.to_string(),
        problem: format!("`{raw}` is not a number"),
    })
}

/// Sidecar metadata stored next to each sweep CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSidecar {
    pub device_id: String,
    pub p_inc_watt: f64,
    pub detuning_hz: f64,
    pub t_bp_kelvin: f64,
}

/// Path of the JSON sidecar belonging to a sweep/spectrum CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write `freq_hz,re_s21,im_s21` plus the JSON sidecar.
pub fn write_sweep(csv_path: &Path, sweep: &FrequencySweep) -> Result<(), FileError> {
    let mut out = String::from("freq_hz,re_s21,im_s21\n");
    for (f, v) in sweep.freqs_hz.iter().zip(&sweep.s21) {
        out.push_str(&format!("{},{},{}\n", f, v.re, v.im));
    }
    std::fs::write(csv_path, out).map_err(io_err(csv_path))?;

    let sidecar = SweepSidecar {
        device_id: sweep.device_id.clone(),
        p_inc_watt: sweep.drive_power_incident_watt,
        detuning_hz: sweep.drive_detuning_hz,
        t_bp_kelvin: sweep.base_temp_kelvin,
    };
    write_json(&sidecar_path(csv_path), &sidecar)
}

/// Read a sweep CSV and its sidecar back into a [`FrequencySweep`].
pub fn read_sweep(csv_path: &Path) -> Result<FrequencySweep, FileError> {
    let side_path = sidecar_path(csv_path);
    let sidecar: SweepSidecar = read_json(&side_path)?;

    let mut reader = csv::Reader::from_path(csv_path).map_err(|source| FileError::Csv {
        path: csv_path.to_path_buf(),
        source,
    })?;
    expect_headers(csv_path, &mut reader, &["freq_hz", "re_s21", "im_s21"])?;
    let mut freqs = Vec::new();
    let mut s21 = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| FileError::Csv {
            path: csv_path.to_path_buf(),
            source,
        })?;
        freqs.push(parse_field(csv_path, "freq_hz", &record[0])?);
        s21.push(Complex64::new(
            parse_field(csv_path, "re_s21", &record[1])?,
            parse_field(csv_path, "im_s21", &record[2])?,
        ));
    }
    FrequencySweep::new(
        freqs,
        s21,
        sidecar.p_inc_watt,
        sidecar.detuning_hz,
        sidecar.t_bp_kelvin,
        sidecar.device_id,
    )
    .map_err(|e| FileError::Schema {
        path: csv_path.to_path_buf(),
        field: "freq_hz".into(),
        problem: e.to_string(),
    })
}

/// Fit-result JSON mirroring [`ResonatorParams`] including the σ block and
/// the derived internal loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct S21FitRecord {
    pub device_id: String,
    pub f0_hz: f64,
    pub q_total_inv: f64,
    pub q_ext_inv_mag: f64,
    pub phi_rad: f64,
    pub q_int_inv: f64,
    pub sigmas: crate::response::ResonatorSigmas,
}

impl S21FitRecord {
    pub fn from_params(device_id: &str, p: &ResonatorParams) -> Self {
        Self {
            device_id: device_id.to_string(),
            f0_hz: p.f0_hz,
            q_total_inv: p.q_total_inv,
            q_ext_inv_mag: p.q_ext_inv_mag,
            phi_rad: p.phi_rad,
            q_int_inv: p.q_int_inv(),
            sigmas: p.sigmas,
        }
    }
}

/// Summary table mirroring the device-parameter table layout:
/// `device,f0_ghz,qi_inv_x1e5,qe_inv_x1e5`.
pub fn write_s21_summary(path: &Path, rows: &[S21FitRecord]) -> Result<(), FileError> {
    let mut out = String::from("device,f0_ghz,qi_inv_x1e5,qe_inv_x1e5\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.device_id,
            r.f0_hz / 1e9,
            r.q_int_inv * 1e5,
            r.q_ext_inv_mag * 1e5
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Device geometry table keyed by device id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub f0_hz: f64,
    pub f_sin: f64,
    pub q_ext_inv: f64,
}

pub type DeviceTable = BTreeMap<String, DeviceEntry>;

/// Write `device_id,n_bar,t_bp_kelvin,qi_inv,qi_inv_sigma`.
pub fn write_loss_csv(path: &Path, dataset: &LossDataset) -> Result<(), FileError> {
    let mut out = String::from("device_id,n_bar,t_bp_kelvin,qi_inv,qi_inv_sigma\n");
    for p in &dataset.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.device_id, p.n_bar, p.t_bp_kelvin, p.q_int_inv, p.sigma
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Read a loss CSV, joining device geometry from the table.
pub fn read_loss_csv(
    path: &Path,
    devices: &DeviceTable,
    sweep_kind: SweepKind,
) -> Result<LossDataset, FileError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| FileError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    expect_headers(
        path,
        &mut reader,
        &["device_id", "n_bar", "t_bp_kelvin", "qi_inv", "qi_inv_sigma"],
    )?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| FileError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let device_id = record[0].trim().to_string();
        let entry = devices.get(&device_id).ok_or_else(|| FileError::Schema {
            path: path.to_path_buf(),
            field: "device_id".into(),
            problem: format!("device `{device_id}` missing from the device table"),
        })?;
        points.push(LossPoint {
            n_bar: parse_field(path, "n_bar", &record[1])?,
            t_bp_kelvin: parse_field(path, "t_bp_kelvin", &record[2])?,
            q_int_inv: parse_field(path, "qi_inv", &record[3])?,
            sigma: parse_field(path, "qi_inv_sigma", &record[4])?,
            device_id,
            f_sin: entry.f_sin,
            f0_hz: entry.f0_hz,
        });
    }
    let dataset = LossDataset { points, sweep_kind };
    dataset.validate().map_err(|e| FileError::Schema {
        path: path.to_path_buf(),
        field: "qi_inv".into(),
        problem: e.to_string(),
    })?;
    Ok(dataset)
}

/// Write `n_bar,t_eff_kelvin,t_eff_sigma,device_id`.
pub fn write_thermometry_csv(path: &Path, points: &[HeatingPoint]) -> Result<(), FileError> {
    let mut out = String::from("n_bar,t_eff_kelvin,t_eff_sigma,device_id\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.n_bar, p.t_eff_kelvin, p.sigma_t_kelvin, p.device_id
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

pub fn read_thermometry_csv(path: &Path) -> Result<Vec<HeatingPoint>, FileError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| FileError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    expect_headers(
        path,
        &mut reader,
        &["n_bar", "t_eff_kelvin", "t_eff_sigma", "device_id"],
    )?;
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| FileError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        points.push(HeatingPoint {
            n_bar: parse_field(path, "n_bar", &record[0])?,
            t_eff_kelvin: parse_field(path, "t_eff_kelvin", &record[1])?,
            sigma_t_kelvin: parse_field(path, "t_eff_sigma", &record[2])?,
            device_id: record[3].trim().to_string(),
        });
    }
    Ok(points)
}

/// Sidecar metadata stored next to each spectrum CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub thickness_cm: f64,
    pub label: String,
}

/// Write `wavenumber_cm1,absorbance` plus the JSON sidecar.
pub fn write_spectrum(csv_path: &Path, s: &IrSpectrum) -> Result<(), FileError> {
    let mut out = String::from("wavenumber_cm1,absorbance\n");
    for (w, a) in s.wavenumber_cm1.iter().zip(&s.absorbance) {
        out.push_str(&format!("{},{}\n", w, a));
    }
    std::fs::write(csv_path, out).map_err(io_err(csv_path))?;
    write_json(
        &sidecar_path(csv_path),
        &SpectrumSidecar {
            thickness_cm: s.thickness_cm,
            label: s.label.clone(),
        },
    )
}

pub fn read_spectrum(csv_path: &Path) -> Result<IrSpectrum, FileError> {
    let sidecar: SpectrumSidecar = read_json(&sidecar_path(csv_path))?;
    let mut reader = csv::Reader::from_path(csv_path).map_err(|source| FileError::Csv {
        path: csv_path.to_path_buf(),
        source,
    })?;
    expect_headers(csv_path, &mut reader, &["wavenumber_cm1", "absorbance"])?;
    let mut wavenumber = Vec::new();
    let mut absorbance = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| FileError::Csv {
            path: csv_path.to_path_buf(),
            source,
        })?;
        wavenumber.push(parse_field(csv_path, "wavenumber_cm1", &record[0])?);
        absorbance.push(parse_field(csv_path, "absorbance", &record[1])?);
    }
    let s = IrSpectrum {
        wavenumber_cm1: wavenumber,
        absorbance,
        thickness_cm: sidecar.thickness_cm,
        label: sidecar.label,
    };
    s.validate().map_err(|e| FileError::Schema {
        path: csv_path.to_path_buf(),
        field: "wavenumber_cm1".into(),
        problem: e.to_string(),
    })?;
    Ok(s)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let mut body = serde_json::to_vec_pretty(value).map_err(|source| FileError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    body.push(b'\n');
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&body).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FileError> {
    let body = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&body).map_err(|source| FileError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn expect_headers(
    path: &Path,
    reader: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<(), FileError> {
    let headers = reader.headers().map_err(|source| FileError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    for (i, want) in expected.iter().enumerate() {
        let got = headers.get(i).unwrap_or("");
        if got.trim() != *want {
            return Err(FileError::Schema {
                path: path.to_path_buf(),
                field: (*want).to_string(),
                problem: format!("expected column {i} to be `{want}`, found `{got}`"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::{default_grid, synth_sweep, NoiseSpec, SweepMeta};

    #[test]
    fn sweep_roundtrip_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = ResonatorParams::new(6.0e9, 2.0e-4, 1.0e-4, 0.1);
        let sweep = synth_sweep(
            &p,
            &default_grid(&p, 20.0, 101),
            &NoiseSpec {
                sigma_iq: 1e-3,
                seed: 4,
            },
            &SweepMeta {
                drive_power_incident_watt: 1e-15,
                drive_detuning_hz: 1.5e6,
                base_temp_kelvin: 0.010,
                device_id: "A".into(),
            },
        )
        .unwrap();
        let path = dir.path().join("a.csv");
        write_sweep(&path, &sweep).unwrap();
        let back = read_sweep(&path).unwrap();
        assert_eq!(back.device_id, "A");
        assert_eq!(back.freqs_hz, sweep.freqs_hz);
        for (a, b) in back.s21.iter().zip(&sweep.s21) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert_eq!(back.drive_power_incident_watt, 1e-15);
    }

    #[test]
    fn loss_roundtrip_and_missing_device() {
        let dir = tempfile::tempdir().unwrap();
        let mut devices = DeviceTable::new();
        devices.insert(
            "A".into(),
            DeviceEntry {
                f0_hz: 6.0e9,
                f_sin: 0.131,
                q_ext_inv: 9.3e-5,
            },
        );
        let dataset = LossDataset {
            points: vec![LossPoint {
                n_bar: 123.456,
                t_bp_kelvin: 0.010,
                q_int_inv: 1.84e-4,
                sigma: 2e-6,
                device_id: "A".into(),
                f_sin: 0.131,
                f0_hz: 6.0e9,
            }],
            sweep_kind: SweepKind::Power,
        };
        let path = dir.path().join("loss.csv");
        write_loss_csv(&path, &dataset).unwrap();
        let back = read_loss_csv(&path, &devices, SweepKind::Power).unwrap();
        assert_eq!(back.points.len(), 1);
        assert_eq!(back.points[0].q_int_inv.to_bits(), 1.84e-4f64.to_bits());
        assert_eq!(back.points[0].f_sin, 0.131);

        let empty = DeviceTable::new();
        let err = read_loss_csv(&path, &empty, SweepKind::Power).unwrap_err();
        assert!(matches!(err, FileError::Schema { ref field, .. } if field == "device_id"));
    }

    #[test]
    fn corrupt_csv_names_offending_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "device_id,n_bar,t_bp_kelvin,qi_inv,qi_inv_sigma\nA,not_a_number,0.01,1e-5,1e-7\n",
        )
        .unwrap();
        let mut devices = DeviceTable::new();
        devices.insert(
            "A".into(),
            DeviceEntry {
                f0_hz: 6.0e9,
                f_sin: 0.1,
                q_ext_inv: 1e-4,
            },
        );
        let err = read_loss_csv(&path, &devices, SweepKind::Power).unwrap_err();
        match err {
            FileError::Schema { field, .. } => assert_eq!(field, "n_bar"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad_header.csv");
        std::fs::write(&path, "frequency,re,im\n1,2,3\n").unwrap();
        std::fs::write(
            sidecar_path(&path),
            r#"{"device_id":"A","p_inc_watt":0.0,"detuning_hz":0.0,"t_bp_kelvin":0.01}"#,
        )
        .unwrap();
        assert!(matches!(
            read_sweep(&path),
            Err(FileError::Schema { .. })
        ));
    }

    #[test]
    fn spectrum_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = IrSpectrum {
            wavenumber_cm1: (0..50).map(|i| 1500.0 + 10.0 * i as f64).collect(),
            absorbance: (0..50).map(|i| 0.001 * i as f64).collect(),
            thickness_cm: 80e-7,
            label: "as-deposited".into(),
        };
        let path = dir.path().join("spec.csv");
        write_spectrum(&path, &s).unwrap();
        let back = read_spectrum(&path).unwrap();
        assert_eq!(back.label, "as-deposited");
        assert_eq!(back.thickness_cm.to_bits(), s.thickness_cm.to_bits());
        assert_eq!(back.absorbance, s.absorbance);
    }

    #[test]
    fn thermometry_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let points = vec![HeatingPoint {
            n_bar: 1e5,
            t_eff_kelvin: 0.43,
            sigma_t_kelvin: 0.02,
            device_id: "B".into(),
        }];
        let path = dir.path().join("t.csv");
        write_thermometry_csv(&path, &points).unwrap();
        let back = read_thermometry_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].t_eff_kelvin.to_bits(), 0.43f64.to_bits());
    }
}
