//! Infrared spectrum post-processing: polynomial baseline removal,
//! Gaussian fits of the N-H (3330 cm⁻¹) and Si-H (2210 cm⁻¹) stretch
//! peaks, and atomic hydrogen percentage via the Lanford–Rand
//! cross-section calibration.

use serde::{Deserialize, Serialize};

use crate::numerics::{self, polyfit, polyval, FitProblem, NumericsError};

#[derive(Debug, thiserror::Error)]
pub enum FtirError {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("baseline fit needs {needed} points outside the exclusion windows, found {found}")]
    InsufficientBaseline { needed: usize, found: usize },
    #[error("peak fit failed near {seed_cm1} cm⁻¹: {source}")]
    PeakFit {
        seed_cm1: f64,
        source: NumericsError,
    },
    #[error("invalid inputs: {0}")]
    InvalidInput(String),
}

/// Absorbance spectrum of one film.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IrSpectrum {
    /// Wavenumber axis, cm⁻¹, monotone increasing.
    pub wavenumber_cm1: Vec<f64>,
    pub absorbance: Vec<f64>,
    /// Film thickness, cm.
    pub thickness_cm: f64,
    /// Film label, e.g. "as-deposited" or "annealed".
    pub label: String,
}

impl IrSpectrum {
    pub fn validate(&self) -> Result<(), FtirError> {
        if self.wavenumber_cm1.len() != self.absorbance.len() {
            return Err(FtirError::InvalidSpectrum(format!(
                "{} wavenumbers vs {} absorbance points",
                self.wavenumber_cm1.len(),
                self.absorbance.len()
            )));
        }
        if self.wavenumber_cm1.len() < 8 {
            return Err(FtirError::InvalidSpectrum("too few points".into()));
        }
        if self.wavenumber_cm1.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FtirError::InvalidSpectrum(
                "wavenumber axis not monotone increasing".into(),
            ));
        }
        let (lo, hi) = (
            self.wavenumber_cm1[0],
            *self.wavenumber_cm1.last().unwrap(),
        );
        if lo < 400.0 || hi > 7000.0 {
            return Err(FtirError::InvalidSpectrum(format!(
                "wavenumber range [{lo}, {hi}] outside [400, 7000] cm⁻¹"
            )));
        }
        if !(self.thickness_cm > 0.0) {
            return Err(FtirError::InvalidSpectrum(format!(
                "thickness must be positive, got {}",
                self.thickness_cm
            )));
        }
        Ok(())
    }
}

/// One fitted Gaussian peak. The area identity
/// area = amplitude·σ·√(2π) holds by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeakModel {
    pub center_cm1: f64,
    pub sigma_cm1: f64,
    pub amplitude: f64,
    pub area: f64,
    pub sigma_center: f64,
    pub sigma_sigma: f64,
    pub sigma_amplitude: f64,
    pub sigma_area: f64,
    /// Set when the amplitude is below 3× the local noise: the peak is
    /// indistinguishable from background and `area` must be read as an
    /// upper limit of scale `sigma_area`.
    pub upper_limit: bool,
}

/// Default polynomial degree for baseline removal.
pub const DEFAULT_BASELINE_DEGREE: usize = 3;
/// Default half-width of the exclusion window around each peak seed, cm⁻¹.
pub const PEAK_WINDOW_CM1: f64 = 300.0;

/// Fit a polynomial baseline on the points outside the exclusion windows
/// and subtract it everywhere. The wavenumber grid is never altered.
pub fn remove_baseline(
    s: &IrSpectrum,
    degree: usize,
    exclusion_windows: &[(f64, f64)],
) -> Result<IrSpectrum, FtirError> {
    s.validate()?;
    let excluded = |w: f64| {
        exclusion_windows
            .iter()
            .any(|&(lo, hi)| w >= lo && w <= hi)
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&w, &a) in s.wavenumber_cm1.iter().zip(&s.absorbance) {
        if !excluded(w) {
            xs.push(w);
            ys.push(a);
        }
    }
    if xs.len() < degree + 2 {
        return Err(FtirError::InsufficientBaseline {
            needed: degree + 2,
            found: xs.len(),
        });
    }
    let coeffs = polyfit(&xs, &ys, degree).map_err(|source| FtirError::PeakFit {
        seed_cm1: f64::NAN,
        source,
    })?;
    let absorbance = s
        .wavenumber_cm1
        .iter()
        .zip(&s.absorbance)
        .map(|(&w, &a)| a - polyval(&coeffs, w))
        .collect();
    Ok(IrSpectrum {
        wavenumber_cm1: s.wavenumber_cm1.clone(),
        absorbance,
        thickness_cm: s.thickness_cm,
        label: s.label.clone(),
    })
}

/// Exclusion windows of ±[`PEAK_WINDOW_CM1`] around each seed.
pub fn windows_for_seeds(seeds: &[f64]) -> Vec<(f64, f64)> {
    seeds
        .iter()
        .map(|&c| (c - PEAK_WINDOW_CM1, c + PEAK_WINDOW_CM1))
        .collect()
}

fn gaussian(x: f64, center: f64, sigma: f64, amplitude: f64) -> f64 {
    let z = (x - center) / sigma;
    amplitude * (-0.5 * z * z).exp()
}

/// Noise scale of the baseline-corrected spectrum, estimated from the
/// points outside every peak window.
fn baseline_noise(s: &IrSpectrum, windows: &[(f64, f64)]) -> f64 {
    let outside: Vec<f64> = s
        .wavenumber_cm1
        .iter()
        .zip(&s.absorbance)
        .filter(|(&w, _)| !windows.iter().any(|&(lo, hi)| w >= lo && w <= hi))
        .map(|(_, &a)| a)
        .collect();
    if outside.len() < 4 {
        return 0.0;
    }
    let mean = outside.iter().sum::<f64>() / outside.len() as f64;
    (outside.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (outside.len() - 1) as f64).sqrt()
}

/// Simultaneously fit one Gaussian per seed center to the
/// baseline-corrected spectrum, restricted to ±[`PEAK_WINDOW_CM1`] around
/// each seed. Peaks with fitted amplitude below 3× the local noise are
/// flagged as upper limits. A failed joint fit falls back to independent
/// per-peak fits so one bad peak cannot abort the others; per-peak
/// failures are returned in place.
pub fn fit_peaks(
    s: &IrSpectrum,
    seeds: &[f64],
) -> Result<Vec<Result<PeakModel, FtirError>>, FtirError> {
    s.validate()?;
    if seeds.is_empty() {
        return Err(FtirError::InvalidInput("no peak seeds".into()));
    }
    let windows = windows_for_seeds(seeds);
    let noise = baseline_noise(s, &windows);

    match fit_gaussians(s, seeds, &windows, noise) {
        Ok(peaks) => Ok(peaks.into_iter().map(Ok).collect()),
        Err(_) => Ok(seeds
            .iter()
            .map(|&seed| {
                let w = [(seed - PEAK_WINDOW_CM1, seed + PEAK_WINDOW_CM1)];
                fit_gaussians(s, &[seed], &w, noise).map(|mut v| v.remove(0))
            })
            .collect()),
    }
}

fn fit_gaussians(
    s: &IrSpectrum,
    seeds: &[f64],
    windows: &[(f64, f64)],
    noise: f64,
) -> Result<Vec<PeakModel>, FtirError> {
    let in_window = |w: f64| windows.iter().any(|&(lo, hi)| w >= lo && w <= hi);
    let pts: Vec<(f64, f64)> = s
        .wavenumber_cm1
        .iter()
        .zip(&s.absorbance)
        .filter(|(&w, _)| in_window(w))
        .map(|(&w, &a)| (w, a))
        .collect();
    if pts.len() < 3 * seeds.len() + 1 {
        return Err(FtirError::InvalidSpectrum(format!(
            "only {} points inside the peak windows",
            pts.len()
        )));
    }

    // init: amplitude from the window maximum, σ = 60 cm⁻¹
    let mut init = Vec::with_capacity(3 * seeds.len());
    let mut bounds = Vec::with_capacity(3 * seeds.len());
    for (&seed, &(lo, hi)) in seeds.iter().zip(windows) {
        let amp0 = pts
            .iter()
            .filter(|(w, _)| *w >= lo && *w <= hi)
            .map(|&(_, a)| a)
            .fold(0.0f64, f64::max)
            .max(noise.max(1e-9));
        init.extend_from_slice(&[seed, 60.0, amp0]);
        bounds.extend_from_slice(&[(lo, hi), (1.0, 500.0), (0.0, f64::INFINITY)]);
    }

    let residual = |p: &[f64]| -> Vec<f64> {
        pts.iter()
            .map(|&(w, a)| {
                let model: f64 = p
                    .chunks_exact(3)
                    .map(|g| gaussian(w, g[0], g[1], g[2]))
                    .sum();
                model - a
            })
            .collect()
    };
    let problem = FitProblem::new(init, residual)
        .with_bounds(bounds)
        .with_max_iterations(400);
    let fit = numerics::nlls_fit(&problem).map_err(|source| FtirError::PeakFit {
        seed_cm1: seeds[0],
        source,
    })?;
    if !fit.converged {
        return Err(FtirError::PeakFit {
            seed_cm1: seeds[0],
            source: NumericsError::InvalidFit(format!(
                "no convergence after {} iterations",
                fit.iterations
            )),
        });
    }

    let sig = fit.sigmas();
    let root_tau = std::f64::consts::TAU.sqrt();
    let peaks = seeds
        .iter()
        .enumerate()
        .map(|(k, _)| {
            let (c, s_, a) = (fit.params[3 * k], fit.params[3 * k + 1], fit.params[3 * k + 2]);
            let (sc, ss, sa) = (sig[3 * k], sig[3 * k + 1], sig[3 * k + 2]);
            // area = A·σ·√2π with covariance-propagated uncertainty
            let cov_as = covariance_entry(&fit, 3 * k + 2, 3 * k + 1);
            let var_area = std::f64::consts::TAU
                * (s_ * s_ * sa * sa + a * a * ss * ss + 2.0 * a * s_ * cov_as);
            PeakModel {
                center_cm1: c,
                sigma_cm1: s_,
                amplitude: a,
                area: a * s_ * root_tau,
                sigma_center: sc,
                sigma_sigma: ss,
                sigma_amplitude: sa,
                sigma_area: var_area.max(0.0).sqrt(),
                upper_limit: a < 3.0 * noise,
            }
        })
        .collect();
    Ok(peaks)
}

fn covariance_entry(fit: &numerics::FitResult, i: usize, j: usize) -> f64 {
    let a = fit.free_indices.iter().position(|&k| k == i);
    let b = fit.free_indices.iter().position(|&k| k == j);
    match (a, b) {
        (Some(a), Some(b)) => fit.covariance[a][b],
        _ => 0.0,
    }
}

/// Lanford–Rand infrared absorption cross-sections, cm² per bond.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrossSections {
    pub sigma_sih_cm2: f64,
    pub sigma_nh_cm2: f64,
}

impl CrossSections {
    /// Literature calibration values for LPCVD silicon nitride.
    pub fn lanford_rand() -> Self {
        Self {
            sigma_sih_cm2: 7.4e-18,
            sigma_nh_cm2: 5.3e-18,
        }
    }
}

/// Atomic density [Si]+[N] of stoichiometric Si₃N₄ at 3.17 g/cm³,
/// atoms/cm³.
pub const SIN_MATRIX_DENSITY: f64 = 9.53e22;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HydrogenResult {
    /// Si-H bond density, atoms/cm³.
    pub n_sih: f64,
    /// N-H bond density, atoms/cm³.
    pub n_nh: f64,
    pub atomic_h_percent: f64,
    pub sigma_n_sih: f64,
    pub sigma_n_nh: f64,
    pub sigma_atomic_h_percent: f64,
    /// True when either input peak was an upper limit.
    pub upper_limit: bool,
}

/// Hydrogen quantification from the fitted peak areas:
/// [X-H] = A/(σ_X·t) and
/// %H = ([Si-H]+[N-H]) / ([Si]+[N]+[Si-H]+[N-H]) × 100,
/// assuming all hydrogen is bonded to Si or N. Uncertainties are
/// propagated linearly from the peak-area σ.
pub fn hydrogen_content(
    sih_peak: &PeakModel,
    nh_peak: &PeakModel,
    thickness_cm: f64,
    cross_sections: &CrossSections,
    matrix_density_atoms_cm3: f64,
) -> Result<HydrogenResult, FtirError> {
    if !(thickness_cm > 0.0) {
        return Err(FtirError::InvalidInput(format!(
            "thickness must be positive, got {thickness_cm}"
        )));
    }
    if !(cross_sections.sigma_sih_cm2 > 0.0 && cross_sections.sigma_nh_cm2 > 0.0) {
        return Err(FtirError::InvalidInput(
            "cross sections must be positive".into(),
        ));
    }
    if !(matrix_density_atoms_cm3 > 0.0) {
        return Err(FtirError::InvalidInput(
            "matrix density must be positive".into(),
        ));
    }
    let n_sih = (sih_peak.area / (cross_sections.sigma_sih_cm2 * thickness_cm)).max(0.0);
    let n_nh = (nh_peak.area / (cross_sections.sigma_nh_cm2 * thickness_cm)).max(0.0);
    let sigma_n_sih = sih_peak.sigma_area / (cross_sections.sigma_sih_cm2 * thickness_cm);
    let sigma_n_nh = nh_peak.sigma_area / (cross_sections.sigma_nh_cm2 * thickness_cm);

    let h = n_sih + n_nh;
    let total = matrix_density_atoms_cm3 + h;
    let atomic_h_percent = 100.0 * h / total;
    // ∂(%H)/∂h = 100·matrix/(matrix + h)²
    let dh = 100.0 * matrix_density_atoms_cm3 / (total * total);
    let sigma_atomic =
        dh * (sigma_n_sih * sigma_n_sih + sigma_n_nh * sigma_n_nh).sqrt();

    Ok(HydrogenResult {
        n_sih,
        n_nh,
        atomic_h_percent,
        sigma_n_sih,
        sigma_n_nh,
        sigma_atomic_h_percent: sigma_atomic,
        upper_limit: sih_peak.upper_limit || nh_peak.upper_limit,
    })
}
