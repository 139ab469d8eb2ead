//! Resonator measurement layer: the S21 line-shape model, its inverse fit,
//! off-resonance normalization, intracavity photon-number calibration and
//! synthetic sweep generation.
//!
//! The line shape is
//!
//! S21(f) = 1 − Q·|Qe⁻¹|·e^{iφ} / (1 + 2iQ·(f − f0)/f0)
//!
//! with a complex external coupling Qe⁻¹ = |Qe⁻¹|·e^{iφ} absorbing
//! impedance asymmetry, and the internal loss defined as
//! Qi⁻¹ = Q⁻¹ − Re{Qe⁻¹} = Q⁻¹ − |Qe⁻¹|·cos φ. Everything works in Hz;
//! ω = 2πf throughout.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::numerics::{self, polyfit, polyval, FitProblem, NumericsError};

#[derive(Debug, thiserror::Error)]
pub enum ResponseError {
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("sweep too narrow to estimate a baseline: {0}")]
    BaselineEstimation(String),
    #[error("no resonance dip found (depth {depth:e} below 5× noise std {noise_std:e})")]
    NoResonanceDip { depth: f64, noise_std: f64 },
    #[error("S21 fit failed: {0}")]
    Fit(#[from] NumericsError),
    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("invalid resonator parameters: {0}")]
    InvalidParams(String),
}

/// One measured (or synthesized) complex transmission trace with its drive
/// and temperature metadata.
#[derive(Debug, Clone)]
pub struct FrequencySweep {
    pub freqs_hz: Vec<f64>,
    pub s21: Vec<Complex64>,
    /// Incident drive power on the resonator, W.
    pub drive_power_incident_watt: f64,
    /// Drive detuning Δp/2π from the resonance, Hz.
    pub drive_detuning_hz: f64,
    /// Base-plate temperature, K.
    pub base_temp_kelvin: f64,
    pub device_id: String,
}

impl FrequencySweep {
    /// Construct a sweep, sorting points into strictly increasing frequency
    /// order (instruments may sweep downward).
    pub fn new(
        freqs_hz: Vec<f64>,
        s21: Vec<Complex64>,
        drive_power_incident_watt: f64,
        drive_detuning_hz: f64,
        base_temp_kelvin: f64,
        device_id: impl Into<String>,
    ) -> Result<Self, ResponseError> {
        let mut sweep = Self {
            freqs_hz,
            s21,
            drive_power_incident_watt,
            drive_detuning_hz,
            base_temp_kelvin,
            device_id: device_id.into(),
        };
        if sweep.freqs_hz.len() != sweep.s21.len() {
            return Err(ResponseError::InvalidSweep(format!(
                "{} frequencies vs {} S21 points",
                sweep.freqs_hz.len(),
                sweep.s21.len()
            )));
        }
        if sweep.freqs_hz.windows(2).any(|w| w[0] > w[1]) {
            let mut idx: Vec<usize> = (0..sweep.freqs_hz.len()).collect();
            idx.sort_by(|&a, &b| sweep.freqs_hz[a].total_cmp(&sweep.freqs_hz[b]));
            sweep.freqs_hz = idx.iter().map(|&i| sweep.freqs_hz[i]).collect();
            sweep.s21 = idx.iter().map(|&i| sweep.s21[i]).collect();
        }
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<(), ResponseError> {
        if self.freqs_hz.len() != self.s21.len() {
            return Err(ResponseError::InvalidSweep("length mismatch".into()));
        }
        if self.freqs_hz.len() < 2 {
            return Err(ResponseError::InvalidSweep("fewer than 2 points".into()));
        }
        if self.freqs_hz.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ResponseError::InvalidSweep(
                "frequencies not strictly increasing".into(),
            ));
        }
        if self.s21.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(ResponseError::InvalidSweep("non-finite S21 value".into()));
        }
        if !(self.drive_power_incident_watt >= 0.0) {
            return Err(ResponseError::InvalidSweep(
                "drive power must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Fitted 1σ uncertainties for [`ResonatorParams`].
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ResonatorSigmas {
    pub f0_hz: f64,
    pub q_total_inv: f64,
    pub q_ext_inv_mag: f64,
    pub phi_rad: f64,
    pub q_int_inv: f64,
}

/// Resonator line-shape parameters. The internal loss is derived:
/// Qi⁻¹ = Q⁻¹ − |Qe⁻¹|·cos φ holds exactly by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonatorParams {
    pub f0_hz: f64,
    pub q_total_inv: f64,
    pub q_ext_inv_mag: f64,
    pub phi_rad: f64,
    #[serde(default)]
    pub sigmas: ResonatorSigmas,
}

impl ResonatorParams {
    pub fn new(f0_hz: f64, q_total_inv: f64, q_ext_inv_mag: f64, phi_rad: f64) -> Self {
        Self {
            f0_hz,
            q_total_inv,
            q_ext_inv_mag,
            phi_rad,
            sigmas: ResonatorSigmas::default(),
        }
    }

    /// Internal loss Qi⁻¹ = Q⁻¹ − Re{Qe⁻¹}.
    pub fn q_int_inv(&self) -> f64 {
        self.q_total_inv - self.q_ext_inv_mag * self.phi_rad.cos()
    }

    pub fn validate(&self) -> Result<(), ResponseError> {
        if !(self.f0_hz > 0.0) {
            return Err(ResponseError::InvalidParams(format!(
                "f0 must be positive, got {}",
                self.f0_hz
            )));
        }
        if !(self.q_total_inv > 0.0) || !(self.q_ext_inv_mag > 0.0) {
            return Err(ResponseError::InvalidParams(
                "Q⁻¹ and |Qe⁻¹| must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Additive complex Gaussian measurement noise, per quadrature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_iq: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            sigma_iq: 0.0,
            seed: 0,
        }
    }
}

/// Metadata attached to a synthesized sweep.
#[derive(Debug, Clone)]
pub struct SweepMeta {
    pub drive_power_incident_watt: f64,
    pub drive_detuning_hz: f64,
    pub base_temp_kelvin: f64,
    pub device_id: String,
}

impl Default for SweepMeta {
    fn default() -> Self {
        Self {
            drive_power_incident_watt: 0.0,
            drive_detuning_hz: 0.0,
            base_temp_kelvin: 0.010,
            device_id: "synthetic".into(),
        }
    }
}

/// Complex transmission at frequency `f_hz`:
/// 1 − Q·|Qe⁻¹|·e^{iφ}/(1 + 2iQ(f−f0)/f0). Tends to exactly 1 far from
/// resonance.
pub fn s21_model(f_hz: f64, p: &ResonatorParams) -> Complex64 {
    let q = 1.0 / p.q_total_inv;
    let numer = q * p.q_ext_inv_mag * Complex64::new(0.0, p.phi_rad).exp();
    let denom = Complex64::new(1.0, 2.0 * q * (f_hz - p.f0_hz) / p.f0_hz);
    Complex64::new(1.0, 0.0) - numer / denom
}

/// Intracavity photon number from the incident power and drive detuning:
///
/// n̄ = P_inc/(ħω0²) · (½|Qe⁻¹|) / ((½Q⁻¹)² + (Δp/ω0)²)
///
/// with ω0 = 2π·f0 and Δp = 2π·detuning.
pub fn photon_number(p: &ResonatorParams, p_inc_watt: f64, detuning_hz: f64) -> f64 {
    let w0 = std::f64::consts::TAU * p.f0_hz;
    let dp = std::f64::consts::TAU * detuning_hz;
    let lorentz = 0.5 * p.q_ext_inv_mag / ((0.5 * p.q_total_inv).powi(2) + (dp / w0).powi(2));
    p_inc_watt / (HBAR * w0 * w0) * lorentz
}

/// Incident power that produces a target photon number at a given detuning
/// (the photon-number relation is linear in power).
pub fn power_for_photon_number(p: &ResonatorParams, n_bar: f64, detuning_hz: f64) -> f64 {
    let per_watt = photon_number(p, 1.0, detuning_hz);
    n_bar / per_watt
}

/// Evaluate the line shape on a grid and add i.i.d. complex Gaussian noise;
/// bit-reproducible for a fixed seed.
pub fn synth_sweep(
    p: &ResonatorParams,
    grid_hz: &[f64],
    noise: &NoiseSpec,
    meta: &SweepMeta,
) -> Result<FrequencySweep, ResponseError> {
    p.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(noise.seed);
    let normal = rand_distr::StandardNormal;
    let s21 = grid_hz
        .iter()
        .map(|&f| {
            let clean = s21_model(f, p);
            if noise.sigma_iq > 0.0 {
                let dre: f64 = normal.sample(&mut rng);
                let dim: f64 = normal.sample(&mut rng);
                clean + Complex64::new(noise.sigma_iq * dre, noise.sigma_iq * dim)
            } else {
                clean
            }
        })
        .collect();
    FrequencySweep::new(
        grid_hz.to_vec(),
        s21,
        meta.drive_power_incident_watt,
        meta.drive_detuning_hz,
        meta.base_temp_kelvin,
        meta.device_id.clone(),
    )
}

/// Default frequency grid for a synthetic sweep: `span_linewidths` total
/// span centred on f0, `points` samples.
pub fn default_grid(p: &ResonatorParams, span_linewidths: f64, points: usize) -> Vec<f64> {
    let linewidth = p.f0_hz * p.q_total_inv;
    let half = 0.5 * span_linewidths * linewidth;
    (0..points)
        .map(|i| p.f0_hz - half + (2.0 * half) * i as f64 / (points - 1) as f64)
        .collect()
}

const EDGE_FRACTION: f64 = 0.10;
const MIN_EDGE_POINTS: usize = 3;

/// Remove the instrument baseline by dividing out a complex line (amplitude
/// slope plus phase slope) estimated from the outer 10% of points on each
/// edge of the sweep. The sweep must span enough linewidths that the edges
/// are effectively off resonance (caller contract: ≥ 10 linewidths).
pub fn normalize_sweep(sweep: &FrequencySweep) -> Result<FrequencySweep, ResponseError> {
    normalize_sweep_with(sweep, EDGE_FRACTION)
}

/// [`normalize_sweep`] with a configurable edge-window fraction.
pub fn normalize_sweep_with(
    sweep: &FrequencySweep,
    edge_fraction: f64,
) -> Result<FrequencySweep, ResponseError> {
    sweep.validate()?;
    let n = sweep.freqs_hz.len();
    let per_edge = ((n as f64 * edge_fraction).ceil() as usize).max(1);
    if per_edge < MIN_EDGE_POINTS || 2 * per_edge >= n {
        return Err(ResponseError::BaselineEstimation(format!(
            "{n} points leaves {per_edge} per edge window (need ≥ {MIN_EDGE_POINTS} per edge)"
        )));
    }

    let fc = 0.5 * (sweep.freqs_hz[0] + sweep.freqs_hz[n - 1]);
    let edge_idx: Vec<usize> = (0..per_edge).chain((n - per_edge)..n).collect();
    let xs: Vec<f64> = edge_idx.iter().map(|&i| sweep.freqs_hz[i] - fc).collect();

    // amplitude line
    let amps: Vec<f64> = edge_idx.iter().map(|&i| sweep.s21[i].norm()).collect();
    let amp_line = polyfit(&xs, &amps, 1)?;

    // phase line: unwrap each edge, then shift the right edge by the 2πk
    // that best matches the left-edge prediction
    let unwrap = |raw: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(raw.len());
        let mut offset = 0.0;
        for (k, &ph) in raw.iter().enumerate() {
            if k > 0 {
                let mut d = ph + offset - out[k - 1];
                while d > std::f64::consts::PI {
                    offset -= std::f64::consts::TAU;
                    d -= std::f64::consts::TAU;
                }
                while d < -std::f64::consts::PI {
                    offset += std::f64::consts::TAU;
                    d += std::f64::consts::TAU;
                }
            }
            out.push(ph + offset);
        }
        out
    };
    let left_raw: Vec<f64> = (0..per_edge).map(|i| sweep.s21[i].arg()).collect();
    let right_raw: Vec<f64> = ((n - per_edge)..n).map(|i| sweep.s21[i].arg()).collect();
    let left = unwrap(&left_raw);
    let mut right = unwrap(&right_raw);
    let left_line = polyfit(&xs[..per_edge], &left, 1)?;
    let predicted = polyval(&left_line, xs[per_edge]);
    let k = ((predicted - right[0]) / std::f64::consts::TAU).round();
    for v in right.iter_mut() {
        *v += k * std::f64::consts::TAU;
    }
    let phases: Vec<f64> = left.into_iter().chain(right).collect();
    let phase_line = polyfit(&xs, &phases, 1)?;

    if amp_line.iter().any(|v| !v.is_finite()) || phase_line.iter().any(|v| !v.is_finite()) {
        return Err(ResponseError::BaselineEstimation(
            "baseline fit produced non-finite coefficients".into(),
        ));
    }

    let s21 = sweep
        .freqs_hz
        .iter()
        .zip(&sweep.s21)
        .map(|(&f, &v)| {
            let df = f - fc;
            let baseline = Complex64::from_polar(polyval(&amp_line, df), polyval(&phase_line, df));
            v / baseline
        })
        .collect();

    Ok(FrequencySweep {
        freqs_hz: sweep.freqs_hz.clone(),
        s21,
        ..sweep.clone()
    })
}

/// Scale of the edge-region amplitude scatter, used as the noise estimate
/// for dip detection.
fn edge_noise_std(sweep: &FrequencySweep) -> f64 {
    let n = sweep.freqs_hz.len();
    let per_edge = ((n as f64 * EDGE_FRACTION).ceil() as usize)
        .max(2)
        .min(n / 4);
    let edge: Vec<f64> = (0..per_edge)
        .chain((n - per_edge)..n)
        .map(|i| sweep.s21[i].norm())
        .collect();
    let mean = edge.iter().sum::<f64>() / edge.len() as f64;
    (edge.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (edge.len() - 1) as f64).sqrt()
}

/// Initial parameter guess from the dip location, width and depth.
fn auto_initialize(sweep: &FrequencySweep) -> Result<ResonatorParams, ResponseError> {
    let mags: Vec<f64> = sweep.s21.iter().map(|v| v.norm()).collect();
    let (i_min, &min_mag) = mags
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("validated non-empty");
    let depth = 1.0 - min_mag;
    let noise_std = edge_noise_std(sweep);
    if depth < 5.0 * noise_std || depth <= 0.0 {
        return Err(ResponseError::NoResonanceDip { depth, noise_std });
    }

    // parabolic refinement of the dip position in |S21|²
    let mut f0 = sweep.freqs_hz[i_min];
    if i_min > 0 && i_min + 1 < mags.len() {
        let (xa, xb, xc) = (
            sweep.freqs_hz[i_min - 1],
            sweep.freqs_hz[i_min],
            sweep.freqs_hz[i_min + 1],
        );
        let (ya, yb, yc) = (
            mags[i_min - 1] * mags[i_min - 1],
            mags[i_min] * mags[i_min],
            mags[i_min + 1] * mags[i_min + 1],
        );
        let denom = (ya - yb) * (xc - xb) + (yc - yb) * (xb - xa);
        if denom.abs() > 0.0 {
            let shift = 0.5 * ((ya - yb) * (xc - xb) * (xc - xb)
                - (yc - yb) * (xb - xa) * (xb - xa))
                / denom;
            if shift.is_finite() && shift.abs() < (xc - xa) {
                f0 = xb + shift;
            }
        }
    }
    // full width at half of the dip depth in |S21|²
    let half_level = 0.5 * (1.0 + min_mag * min_mag);
    let mut lo = sweep.freqs_hz[0];
    for i in (0..i_min).rev() {
        if mags[i] * mags[i] >= half_level {
            lo = sweep.freqs_hz[i];
            break;
        }
    }
    let mut hi = *sweep.freqs_hz.last().unwrap();
    for i in i_min..mags.len() {
        if mags[i] * mags[i] >= half_level {
            hi = sweep.freqs_hz[i];
            break;
        }
    }
    let width = (hi - lo).max(sweep.freqs_hz[1] - sweep.freqs_hz[0]);
    let q_total_inv = width / f0;
    // the dip points along e^{iφ} in the complex plane
    let phi = (Complex64::new(1.0, 0.0) - sweep.s21[i_min]).arg();
    let q_ext_inv_mag = depth * q_total_inv / phi.cos().max(0.2);
    Ok(ResonatorParams::new(f0, q_total_inv, q_ext_inv_mag, phi))
}

/// Fit the normalized sweep to the S21 line shape, minimizing the stacked
/// real/imaginary residuals with equal weights via [`numerics::nlls_fit`].
/// When no initial guess is supplied, one is derived from the dip location,
/// width, depth and complex direction. Reports 1σ uncertainties from the
/// fit covariance, including the propagated uncertainty of the derived
/// Qi⁻¹.
pub fn fit_s21(
    sweep: &FrequencySweep,
    init: Option<&ResonatorParams>,
) -> Result<ResonatorParams, ResponseError> {
    sweep.validate()?;
    let init = match init {
        Some(p) => p.clone(),
        None => auto_initialize(sweep)?,
    };
    init.validate()?;

    // dimensionless internal parameterization: scale by the initial guess
    // so the finite-difference steps are sensible for every parameter
    let scale = [
        init.f0_hz,
        init.q_total_inv,
        init.q_ext_inv_mag,
        1.0, // φ is O(1) already
    ];
    let unpack = |u: &[f64]| {
        ResonatorParams::new(
            u[0] * scale[0],
            u[1] * scale[1],
            u[2] * scale[2],
            u[3] * scale[3],
        )
    };
    let residual = |u: &[f64]| -> Vec<f64> {
        let p = unpack(u);
        let mut r = Vec::with_capacity(2 * sweep.freqs_hz.len());
        for (&f, &meas) in sweep.freqs_hz.iter().zip(&sweep.s21) {
            let d = s21_model(f, &p) - meas;
            r.push(d.re);
            r.push(d.im);
        }
        r
    };
    // analytic Jacobian: finite differences are too noisy in the steep f0
    // direction for Q approaching 1e6
    let jacobian = |u: &[f64]| -> Vec<Vec<f64>> {
        let p = unpack(u);
        let q = 1.0 / p.q_total_inv;
        let mut rows = Vec::with_capacity(2 * sweep.freqs_hz.len());
        for &f in &sweep.freqs_hz {
            let numer = q * p.q_ext_inv_mag * Complex64::new(0.0, p.phi_rad).exp();
            let d = Complex64::new(1.0, 2.0 * q * (f - p.f0_hz) / p.f0_hz);
            let d2 = d * d;
            // with S21 = 1 − N/D, N = Q|Qe⁻¹|e^{iφ}, D = 1 + 2iQ(f−f0)/f0:
            let d_f0 = Complex64::new(0.0, -2.0 * f * q / (p.f0_hz * p.f0_hz)) * numer / d2;
            let d_qinv = numer / (p.q_total_inv * d2);
            let d_qe = -(numer / p.q_ext_inv_mag) / d;
            let d_phi = Complex64::new(0.0, -1.0) * numer / d;
            let cols = [
                d_f0 * scale[0],
                d_qinv * scale[1],
                d_qe * scale[2],
                d_phi * scale[3],
            ];
            rows.push(cols.iter().map(|c| c.re).collect::<Vec<_>>());
            rows.push(cols.iter().map(|c| c.im).collect::<Vec<_>>());
        }
        rows
    };
    let problem = FitProblem::new(vec![1.0, 1.0, 1.0, init.phi_rad], residual)
        .with_jacobian(jacobian)
        .with_bounds(vec![
            (0.0, f64::INFINITY),
            (f64::MIN_POSITIVE, f64::INFINITY),
            (f64::MIN_POSITIVE, f64::INFINITY),
            (-std::f64::consts::PI, std::f64::consts::PI),
        ])
        .with_max_iterations(300);
    let fit = numerics::nlls_fit(&problem)?;
    if !fit.converged {
        return Err(ResponseError::NonConvergence {
            iterations: fit.iterations,
        });
    }

    let mut params = unpack(&fit.params);
    let sig = fit.sigmas();
    // scale the covariance back to physical units
    let cov = |a: usize, b: usize| fit.covariance[a][b] * scale[a] * scale[b];
    params.sigmas = ResonatorSigmas {
        f0_hz: sig[0] * scale[0],
        q_total_inv: sig[1] * scale[1],
        q_ext_inv_mag: sig[2] * scale[2],
        phi_rad: sig[3],
        // Qi⁻¹ = Q⁻¹ − |Qe⁻¹| cos φ: gradient (1, −cos φ, |Qe⁻¹| sin φ)
        q_int_inv: {
            let g = [
                1.0,
                -params.phi_rad.cos(),
                params.q_ext_inv_mag * params.phi_rad.sin(),
            ];
            let idx = [1usize, 2, 3];
            let mut v = 0.0;
            for (a, &ia) in idx.iter().enumerate() {
                for (b, &ib) in idx.iter().enumerate() {
                    v += g[a] * g[b] * cov(ia, ib);
                }
            }
            v.max(0.0).sqrt()
        },
    };
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_a1_device_a() -> ResonatorParams {
        // as-deposited device A: Qi⁻¹ = 18.4e-5, |Qe⁻¹| = 9.3e-5, φ = 0
        ResonatorParams::new(5.968e9, 18.4e-5 + 9.3e-5, 9.3e-5, 0.0)
    }

    #[test]
    fn on_resonance_dip_value() {
        let p = table_a1_device_a();
        let v = s21_model(p.f0_hz, &p);
        // independent arithmetic: 1 − Q·|Qe⁻¹| with Q = 1/(27.7e-5)
        let expected = 1.0 - 9.3e-5 / 27.7e-5;
        assert!((v.re - expected).abs() < 1e-12, "{v}");
        assert!(v.im.abs() < 1e-15);
        assert!((v.norm() - 0.664_259_927_797_833_9).abs() < 1e-12);
    }

    #[test]
    fn far_detuned_approaches_unity() {
        let p = table_a1_device_a();
        let q = 1.0 / p.q_total_inv;
        let f = p.f0_hz + 100.0 * p.f0_hz / q;
        let v = s21_model(f, &p);
        assert!((v - Complex64::new(1.0, 0.0)).norm() < q * p.q_ext_inv_mag / 100.0);
    }

    #[test]
    fn photon_number_device_e() {
        // as-deposited device E, Δp/2π = 1.5 MHz, P_inc = 1 fW; value
        // derived by independent hand evaluation of the formula
        let p = ResonatorParams::new(6.480e9, 1.9e-5 + 15.3e-5, 15.3e-5, 0.0);
        let n = photon_number(&p, 1e-15, 1.5e6);
        assert!((n / 7.176_131_880_927_156 - 1.0).abs() < 1e-12, "n̄ = {n}");
    }

    #[test]
    fn photon_number_zero_power_and_linearity() {
        let p = table_a1_device_a();
        assert_eq!(photon_number(&p, 0.0, 1.5e6), 0.0);
        let n1 = photon_number(&p, 1e-15, 1.5e6);
        let n2 = photon_number(&p, 2e-15, 1.5e6);
        assert!((n2 / n1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn power_for_photon_number_inverts() {
        let p = table_a1_device_a();
        let w = power_for_photon_number(&p, 42.0, 1.5e6);
        assert!((photon_number(&p, w, 1.5e6) / 42.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synth_noiseless_matches_model() {
        let p = table_a1_device_a();
        let grid = default_grid(&p, 20.0, 101);
        let sweep = synth_sweep(&p, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
        for (&f, &v) in sweep.freqs_hz.iter().zip(&sweep.s21) {
            assert_eq!(v, s21_model(f, &p));
        }
    }

    #[test]
    fn synth_seed_reproducible() {
        let p = table_a1_device_a();
        let grid = default_grid(&p, 20.0, 101);
        let noise = NoiseSpec {
            sigma_iq: 1e-3,
            seed: 99,
        };
        let a = synth_sweep(&p, &grid, &noise, &SweepMeta::default()).unwrap();
        let b = synth_sweep(&p, &grid, &noise, &SweepMeta::default()).unwrap();
        for (x, y) in a.s21.iter().zip(&b.s21) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn synth_noise_std_matches_spec() {
        let p = table_a1_device_a();
        let grid = default_grid(&p, 2000.0, 10_000);
        let noise = NoiseSpec {
            sigma_iq: 1e-3,
            seed: 5,
        };
        let sweep = synth_sweep(&p, &grid, &noise, &SweepMeta::default()).unwrap();
        let resid: Vec<f64> = sweep
            .freqs_hz
            .iter()
            .zip(&sweep.s21)
            .flat_map(|(&f, &v)| {
                let d = v - s21_model(f, &p);
                [d.re, d.im]
            })
            .collect();
        let std = (resid.iter().map(|v| v * v).sum::<f64>() / (resid.len() - 1) as f64).sqrt();
        assert!((std / noise.sigma_iq - 1.0).abs() < 0.02, "sample std {std}");
    }

    #[test]
    fn normalize_recovers_unit_baseline() {
        let p = table_a1_device_a();
        let grid = default_grid(&p, 20.0, 401);
        let clean = synth_sweep(&p, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
        // scale by 0.8·e^{i0.3}
        let mut scaled = clean.clone();
        let factor = Complex64::from_polar(0.8, 0.3);
        for v in scaled.s21.iter_mut() {
            *v *= factor;
        }
        let normalized = normalize_sweep(&scaled).unwrap();
        let reference = normalize_sweep(&clean).unwrap();
        for (a, b) in normalized.s21.iter().zip(&reference.s21) {
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
        // off-resonance mean |S21| within [0.999, 1.001]
        let n = normalized.s21.len();
        let edges: Vec<f64> = (0..40)
            .chain(n - 40..n)
            .map(|i| normalized.s21[i].norm())
            .collect();
        let mean = edges.iter().sum::<f64>() / edges.len() as f64;
        assert!((0.999..=1.001).contains(&mean), "edge mean {mean}");
    }

    #[test]
    fn normalize_idempotent() {
        let p = table_a1_device_a();
        let grid = default_grid(&p, 20.0, 401);
        let sweep = synth_sweep(&p, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
        let once = normalize_sweep(&sweep).unwrap();
        let twice = normalize_sweep(&once).unwrap();
        for (a, b) in once.s21.iter().zip(&twice.s21) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn normalize_removes_cable_delay() {
        // The resonance's own odd phase tail is absorbed by any edge-based
        // baseline estimate, so the delay-removal quality is measured
        // against the normalization of the delay-free sweep.
        let p = table_a1_device_a();
        let grid = default_grid(&p, 20.0, 401);
        let clean = synth_sweep(&p, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
        let mut delayed = clean.clone();
        let tau = 1e-9;
        for (f, v) in delayed.freqs_hz.iter().zip(delayed.s21.iter_mut()) {
            *v *= Complex64::from_polar(1.0, std::f64::consts::TAU * f * tau);
        }
        let norm_clean = normalize_sweep(&clean).unwrap();
        let norm_delayed = normalize_sweep(&delayed).unwrap();
        let n = norm_clean.s21.len();
        let dphase: Vec<f64> = norm_clean
            .s21
            .iter()
            .zip(&norm_delayed.s21)
            .map(|(a, b)| (b / a).arg())
            .collect();
        let slope_residual = (dphase[n - 1] - dphase[0]).abs();
        assert!(
            slope_residual < 1e-3,
            "residual delay phase slope {slope_residual}"
        );
        assert!(dphase.iter().all(|d| d.abs() < 1e-3));
    }

    #[test]
    fn normalize_too_narrow_errors() {
        let p = table_a1_device_a();
        let grid = default_grid(&p, 20.0, 12);
        let sweep = synth_sweep(&p, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
        assert!(matches!(
            normalize_sweep(&sweep),
            Err(ResponseError::BaselineEstimation(_))
        ));
    }

    fn assert_params_close(got: &ResonatorParams, want: &ResonatorParams, tol: f64) {
        assert!(
            ((got.f0_hz - want.f0_hz) / want.f0_hz).abs() < tol,
            "f0 {} vs {}",
            got.f0_hz,
            want.f0_hz
        );
        assert!(
            ((got.q_total_inv - want.q_total_inv) / want.q_total_inv).abs() < tol,
            "Q⁻¹ {} vs {}",
            got.q_total_inv,
            want.q_total_inv
        );
        assert!(
            ((got.q_ext_inv_mag - want.q_ext_inv_mag) / want.q_ext_inv_mag).abs() < tol,
            "|Qe⁻¹| {} vs {}",
            got.q_ext_inv_mag,
            want.q_ext_inv_mag
        );
        let phi_err = (got.phi_rad - want.phi_rad).abs() / want.phi_rad.abs().max(1.0);
        assert!(phi_err < tol, "φ {} vs {}", got.phi_rad, want.phi_rad);
    }

    #[test]
    fn fit_noiseless_table_a1_device_e() {
        let truth = ResonatorParams::new(6.443e9, 0.8e-5 + 16.6e-5, 16.6e-5, 0.0);
        let grid = default_grid(&truth, 20.0, 401);
        let sweep =
            synth_sweep(&truth, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
        let fit = fit_s21(&sweep, None).unwrap();
        assert_params_close(&fit, &truth, 1e-8);
    }

    #[test]
    fn fit_recovers_asymmetry_phase() {
        let truth = ResonatorParams::new(6.0e9, 2.0e-4, 1.1e-4, 0.4);
        let grid = default_grid(&truth, 20.0, 401);
        let sweep =
            synth_sweep(&truth, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
        let fit = fit_s21(&sweep, None).unwrap();
        assert_params_close(&fit, &truth, 1e-8);
        assert!((fit.phi_rad - 0.4).abs() < 1e-8);
        // q_int_inv identity holds exactly
        let qi = fit.q_total_inv - fit.q_ext_inv_mag * fit.phi_rad.cos();
        assert_eq!(fit.q_int_inv(), qi);
    }

    #[test]
    fn fit_monte_carlo_noise_consistency() {
        let truth = ResonatorParams::new(6.0e9, 2.5e-4, 1.2e-4, 0.1);
        let grid = default_grid(&truth, 20.0, 401);
        let mut qi_errs = Vec::new();
        let mut qi_sigmas = Vec::new();
        for seed in 0..100u64 {
            let sweep = synth_sweep(
                &truth,
                &grid,
                &NoiseSpec {
                    sigma_iq: 1e-3,
                    seed,
                },
                &SweepMeta::default(),
            )
            .unwrap();
            let fit = fit_s21(&sweep, None).unwrap();
            qi_errs.push(fit.q_int_inv() - truth.q_int_inv());
            qi_sigmas.push(fit.sigmas.q_int_inv);
        }
        let mut rel: Vec<f64> = qi_errs
            .iter()
            .map(|e| (e / truth.q_int_inv()).abs())
            .collect();
        rel.sort_by(f64::total_cmp);
        let median = rel[rel.len() / 2];
        assert!(median < 0.01, "median Qi⁻¹ error {median}");
        let scatter = (qi_errs.iter().map(|e| e * e).sum::<f64>() / qi_errs.len() as f64).sqrt();
        let quoted = qi_sigmas.iter().sum::<f64>() / qi_sigmas.len() as f64;
        assert!(
            (quoted / scatter - 1.0).abs() < 0.3,
            "quoted {quoted} vs scatter {scatter}"
        );
    }

    #[test]
    fn fit_rejects_dipless_trace() {
        let freqs: Vec<f64> = (0..101).map(|i| 6.0e9 + 1e4 * i as f64).collect();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let s21: Vec<Complex64> = freqs
            .iter()
            .map(|_| {
                Complex64::new(
                    1.0 + 1e-3 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                    1e-3 * rng.sample::<f64, _>(rand_distr::StandardNormal),
                )
            })
            .collect();
        let sweep = FrequencySweep::new(freqs, s21, 0.0, 0.0, 0.01, "flat").unwrap();
        assert!(matches!(
            fit_s21(&sweep, None),
            Err(ResponseError::NoResonanceDip { .. })
        ));
    }

    #[test]
    fn fit_invariant_under_grid_reversal_and_rescaling() {
        let truth = ResonatorParams::new(6.1e9, 1.8e-4, 0.9e-4, -0.2);
        let grid = default_grid(&truth, 20.0, 401);
        let sweep = synth_sweep(
            &truth,
            &grid,
            &NoiseSpec {
                sigma_iq: 5e-4,
                seed: 11,
            },
            &SweepMeta::default(),
        )
        .unwrap();
        let fit_ref = fit_s21(&normalize_sweep(&sweep).unwrap(), None).unwrap();

        // reversed point order (constructor restores monotone order)
        let rev = FrequencySweep::new(
            sweep.freqs_hz.iter().rev().cloned().collect(),
            sweep.s21.iter().rev().cloned().collect(),
            sweep.drive_power_incident_watt,
            sweep.drive_detuning_hz,
            sweep.base_temp_kelvin,
            sweep.device_id.clone(),
        )
        .unwrap();
        let fit_rev = fit_s21(&normalize_sweep(&rev).unwrap(), None).unwrap();
        assert!((fit_rev.f0_hz - fit_ref.f0_hz).abs() <= fit_ref.sigmas.f0_hz.max(1.0));

        // global complex rescaling, then normalize
        let mut scaled = sweep.clone();
        let factor = Complex64::from_polar(1.7, -0.8);
        for v in scaled.s21.iter_mut() {
            *v *= factor;
        }
        let fit_scaled = fit_s21(&normalize_sweep(&scaled).unwrap(), None).unwrap();
        for (a, b, s) in [
            (
                fit_scaled.q_total_inv,
                fit_ref.q_total_inv,
                fit_ref.sigmas.q_total_inv,
            ),
            (
                fit_scaled.q_ext_inv_mag,
                fit_ref.q_ext_inv_mag,
                fit_ref.sigmas.q_ext_inv_mag,
            ),
        ] {
            assert!((a - b).abs() <= s, "{a} vs {b} (σ = {s})");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn roundtrip_random_draws(
            logq in 3.0f64..6.0,
            phi in -0.5f64..0.5,
            depth in 0.05f64..0.9,
            f0 in 4.0e9f64..8.0e9,
        ) {
            let q_total_inv = 10f64.powf(-logq);
            let q_ext_inv_mag = depth * q_total_inv;
            let truth = ResonatorParams::new(f0, q_total_inv, q_ext_inv_mag, phi);
            let grid = default_grid(&truth, 20.0, 401);
            let sweep = synth_sweep(&truth, &grid, &NoiseSpec::noiseless(), &SweepMeta::default()).unwrap();
            let fit = fit_s21(&sweep, None).unwrap();
            prop_assert!(((fit.f0_hz - truth.f0_hz) / truth.f0_hz).abs() < 1e-8);
            prop_assert!(((fit.q_total_inv - truth.q_total_inv) / truth.q_total_inv).abs() < 1e-8);
            prop_assert!(((fit.q_ext_inv_mag - truth.q_ext_inv_mag) / truth.q_ext_inv_mag).abs() < 1e-8);
        }

        #[test]
        fn photon_number_even_and_peaked_at_zero_detuning(d in 1.0f64..5e6) {
            let p = ResonatorParams::new(6.0e9, 2.0e-4, 1.0e-4, 0.0);
            let plus = photon_number(&p, 1e-15, d);
            let minus = photon_number(&p, 1e-15, -d);
            let center = photon_number(&p, 1e-15, 0.0);
            prop_assert!((plus - minus).abs() <= 1e-12 * plus.abs());
            prop_assert!(center >= plus);
        }
    }
}
