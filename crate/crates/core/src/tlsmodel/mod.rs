//! Physics forward model of TLS dielectric loss and frequency shift in a
//! superconducting resonator: resonant damping (saturable with power and
//! temperature), relaxation damping (power law and full double integral),
//! thermal-quasiparticle loss, the total internal loss with optional drive
//! self-heating, and the TLS frequency-shift terms.

mod model;
mod relaxation;

pub use model::{LossModel, ModelCard, ModelCardEntry, RelaxShape};

pub(crate) mod spline_helpers {
    pub(crate) use super::model::natural_spline_second_derivatives as second_derivatives;
    pub(crate) use super::model::spline_eval as eval;
}
pub use relaxation::{
    dfrac_rel, q_rel_inv_full, rel_sampling_integrand, tau_min_inv, unit_sphere_area,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{BCS_GAP_RATIO, HBAR, K_B};
use crate::numerics::{bessel_k0, digamma, NumericsError};

#[derive(Debug, thiserror::Error)]
pub enum TlsModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature failure in {context}: {source}")]
    Quadrature {
        context: String,
        source: NumericsError,
    },
}

impl TlsModelError {
    fn from_quadrature(context: &'static str) -> impl Fn(NumericsError) -> TlsModelError {
        move |source| TlsModelError::Quadrature {
            context: context.to_string(),
            source,
        }
    }
}

/// The one-phonon treatment assumes slow TLS relaxation, which holds for
/// T ≲ 1 K at microwave frequencies; evaluations beyond this cap are
/// allowed but flagged once per process.
pub const TEMPERATURE_VALIDITY_CAP_KELVIN: f64 = 2.0;

static VALIDITY_WARNING: std::sync::Once = std::sync::Once::new();

pub(crate) fn warn_beyond_validity(t_kelvin: f64) {
    if t_kelvin > TEMPERATURE_VALIDITY_CAP_KELVIN {
        VALIDITY_WARNING.call_once(|| {
            log::warn!(
                "TLS model evaluated at T = {t_kelvin:.3} K, beyond its \
                 {TEMPERATURE_VALIDITY_CAP_KELVIN} K validity cap \
                 (one-phonon relaxation treatment)"
            );
        });
    }
}

/// TLS loss and shift parameters for one film/device combination. The
/// `f_tan_*` prefactors are the products of the participation ratio and the
/// film loss tangents; the microscopic prefactor groups are absorbed into
/// them and into the per-mechanism shift scales, and are never exposed
/// individually.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TlsParams {
    /// F_SiN·tanδ₀,res: resonant loss prefactor at zero temperature.
    pub f_tan_res: f64,
    /// Critical photon number for TLS saturation.
    pub n_c: f64,
    /// F_SiN·tanδ₀,rel: relaxation loss prefactor at the reference
    /// temperature `t0_kelvin`.
    pub f_tan_rel: f64,
    /// Reference temperature for the relaxation prefactor, K.
    pub t0_kelvin: f64,
    /// Phonon-bath dimensionality (1, 2 or 3).
    pub d: u32,
    /// Constant background loss.
    pub q_bg_inv: f64,
    /// Prefactor of the resonant frequency-shift bracket.
    pub shift_res_scale: f64,
    /// Prefactor of the relaxation frequency-shift integral.
    pub shift_rel_scale: f64,
}

impl TlsParams {
    pub fn validate(&self) -> Result<(), TlsModelError> {
        if self.f_tan_res < 0.0 || self.f_tan_rel < 0.0 || self.q_bg_inv < 0.0 {
            return Err(TlsModelError::InvalidParams(
                "loss prefactors must be non-negative".into(),
            ));
        }
        if !(self.n_c > 0.0) {
            return Err(TlsModelError::InvalidParams(format!(
                "critical photon number must be positive, got {}",
                self.n_c
            )));
        }
        if !(self.t0_kelvin > 0.0) {
            return Err(TlsModelError::InvalidParams(format!(
                "reference temperature must be positive, got {}",
                self.t0_kelvin
            )));
        }
        if !(1..=3).contains(&self.d) {
            return Err(TlsModelError::InvalidParams(format!(
                "bath dimensionality must be 1, 2 or 3, got {}",
                self.d
            )));
        }
        Ok(())
    }
}

/// Microscopic one-phonon relaxation-rate kernel parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RelaxKernelParams {
    /// TLS elastic dipole γ̄ averaged over position and orientation, J.
    pub gamma_bar_joule: f64,
    /// Polarization-averaged acoustic velocity v̄, m/s.
    pub v_bar_m_per_s: f64,
    /// d-dimensional mass density ρ_d, kg·m^(−d).
    pub rho_d: f64,
    /// Phonon-bath dimensionality.
    pub d: u32,
}

impl RelaxKernelParams {
    /// Bulk-SiN-magnitude defaults for a 100 nm film; configuration, not a
    /// fitted claim. The lower-dimensional densities fold in the film
    /// thickness.
    pub fn sin_film(d: u32) -> Self {
        const RHO_3D: f64 = 3170.0; // kg/m³
        const THICKNESS: f64 = 100e-9; // m
        let rho_d = match d {
            1 => RHO_3D * THICKNESS * THICKNESS,
            2 => RHO_3D * THICKNESS,
            _ => RHO_3D,
        };
        Self {
            gamma_bar_joule: 1.602_176_634e-19, // 1 eV
            v_bar_m_per_s: 6200.0,
            rho_d,
            d,
        }
    }

    pub fn validate(&self) -> Result<(), TlsModelError> {
        if !(self.gamma_bar_joule > 0.0 && self.v_bar_m_per_s > 0.0 && self.rho_d > 0.0) {
            return Err(TlsModelError::InvalidParams(
                "kernel parameters must be strictly positive".into(),
            ));
        }
        if !(1..=3).contains(&self.d) {
            return Err(TlsModelError::InvalidParams(format!(
                "kernel dimensionality must be 1, 2 or 3, got {}",
                self.d
            )));
        }
        Ok(())
    }

    /// R_d in τmin⁻¹(E) = R_d·E^d·coth(E/2k_BT):
    /// (γ̄²/v̄^{d+2})·(π·S_{d−1}/(2π)^d)/(ħ^{d+1}·ρ_d).
    pub fn rate_prefactor(&self) -> f64 {
        let d = self.d as i32;
        let angular = std::f64::consts::PI * unit_sphere_area(self.d - 1)
            / std::f64::consts::TAU.powi(d);
        self.gamma_bar_joule * self.gamma_bar_joule / self.v_bar_m_per_s.powi(d + 2) * angular
            / (HBAR.powi(d + 1) * self.rho_d)
    }
}

/// Thermal-quasiparticle loss parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QpParams {
    /// Superconducting critical temperature, K.
    pub tc_kelvin: f64,
    /// Kinetic-inductance fraction; defaults to the upper bound 1.
    pub alpha_kin: f64,
    pub f0_hz: f64,
}

impl QpParams {
    pub fn new(tc_kelvin: f64, f0_hz: f64) -> Self {
        Self {
            tc_kelvin,
            alpha_kin: 1.0,
            f0_hz,
        }
    }

    pub fn validate(&self) -> Result<(), TlsModelError> {
        if !(self.tc_kelvin > 0.0) {
            return Err(TlsModelError::InvalidParams(format!(
                "critical temperature must be positive, got {}",
                self.tc_kelvin
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha_kin) {
            return Err(TlsModelError::InvalidParams(format!(
                "kinetic-inductance fraction must lie in [0, 1], got {}",
                self.alpha_kin
            )));
        }
        Ok(())
    }
}

/// Drive-induced self-heating law T_eff(n̄) = T_bp + A·n̄^β.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SelfHeatingLaw {
    pub a_coeff_kelvin: f64,
    pub beta: f64,
    pub t_bp_kelvin: f64,
}

impl SelfHeatingLaw {
    pub fn validate(&self) -> Result<(), TlsModelError> {
        if self.a_coeff_kelvin < 0.0 {
            return Err(TlsModelError::InvalidParams(
                "heating coefficient must be non-negative".into(),
            ));
        }
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return Err(TlsModelError::InvalidParams(format!(
                "heating exponent must lie in (0, 2), got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn t_heat(&self, n_bar: f64) -> f64 {
        self.a_coeff_kelvin * n_bar.powf(self.beta)
    }

    pub fn t_eff(&self, n_bar: f64) -> f64 {
        self.t_bp_kelvin + self.t_heat(n_bar)
    }
}

/// Resonant TLS damping:
/// f_tan_res·tanh(ħω0/2k_BT)/√(1 + n̄/n_c). Strictly decreasing in both
/// the photon number and the temperature.
pub fn q_res_inv(n_bar: f64, t_kelvin: f64, f0_hz: f64, p: &TlsParams) -> f64 {
    debug_assert!(n_bar >= 0.0 && t_kelvin > 0.0);
    let w0 = std::f64::consts::TAU * f0_hz;
    p.f_tan_res * (HBAR * w0 / (2.0 * K_B * t_kelvin)).tanh() / (1.0 + n_bar / p.n_c).sqrt()
}

/// Relaxation damping in the low-temperature power-law approximation:
/// f_tan_rel·(T/T0)^d.
pub fn q_rel_inv_powerlaw(t_kelvin: f64, p: &TlsParams) -> f64 {
    debug_assert!(t_kelvin > 0.0);
    p.f_tan_rel * (t_kelvin / p.t0_kelvin).powi(p.d as i32)
}

/// Scale for [`q_rel_inv_full`] such that the full integral equals the
/// power-law value f_tan_rel at T = t0 (and therefore tracks the power law
/// through the whole slow-relaxation regime).
pub fn relax_scale_for(
    f_tan_rel: f64,
    t0_kelvin: f64,
    f0_hz: f64,
    k: &RelaxKernelParams,
) -> Result<f64, TlsModelError> {
    if f_tan_rel == 0.0 {
        return Ok(0.0);
    }
    let raw = relaxation::raw_relaxation_integral(t0_kelvin, f0_hz, k)?;
    Ok(f_tan_rel / raw)
}

/// Thermal-quasiparticle loss in the low-frequency Mattis–Bardeen
/// approximation with BCS gap Δ = 1.76·k_B·Tc:
///
/// Q⁻¹_qp = α_kin · (4/π)·e^{−Δ/k_BT}·sinh(ξ)·K₀(ξ) / (πΔ/ħω0),
/// ξ = ħω0/2k_BT,
///
/// i.e. the thermal σ1 response normalized by the reactive σ2 factor
/// πΔ/ħω0. Monotone increasing in temperature and utterly negligible
/// below 1 K for Tc ≈ 15 K.
pub fn q_qp_inv(t_kelvin: f64, qp: &QpParams) -> Result<f64, TlsModelError> {
    qp.validate()?;
    if !(t_kelvin > 0.0 && t_kelvin < qp.tc_kelvin / 2.0) {
        return Err(TlsModelError::Domain(format!(
            "quasiparticle loss valid for 0 < T < Tc/2 = {} K, got {t_kelvin} K",
            qp.tc_kelvin / 2.0
        )));
    }
    if qp.alpha_kin == 0.0 {
        return Ok(0.0);
    }
    let w0 = std::f64::consts::TAU * qp.f0_hz;
    let gap = BCS_GAP_RATIO * K_B * qp.tc_kelvin;
    let xi = HBAR * w0 / (2.0 * K_B * t_kelvin);
    let boltzmann = (-gap / (K_B * t_kelvin)).exp();
    // sinh(ξ)·K₀(ξ) via the exponentially scaled K₀ when sinh would
    // overflow
    let sinh_k0 = if xi > 300.0 {
        0.5 * (1.0 - (-2.0 * xi).exp()) * crate::numerics::bessel_k0_scaled(xi)
    } else {
        xi.sinh() * bessel_k0(xi).expect("xi > 0")
    };
    let sigma2_factor = std::f64::consts::PI * gap / (HBAR * w0);
    Ok(qp.alpha_kin * (4.0 / std::f64::consts::PI) * boltzmann * sinh_k0 / sigma2_factor)
}

/// Total internal loss: background + resonant + relaxation (full integral,
/// calibrated to the power-law convention at T0) + quasiparticle, evaluated
/// at T_eff = T_bp + T_heat(n̄) when a heating law is present. The sum is
/// formed term by term with no cross coupling.
pub fn q_total_inv(
    n_bar: f64,
    t_bp_kelvin: f64,
    f0_hz: f64,
    p: &TlsParams,
    k: &RelaxKernelParams,
    qp: &QpParams,
    heat: Option<&SelfHeatingLaw>,
) -> Result<f64, TlsModelError> {
    p.validate()?;
    k.validate()?;
    if p.d != k.d {
        return Err(TlsModelError::InvalidParams(format!(
            "bath dimensionality mismatch: params d = {}, kernel d = {}",
            p.d, k.d
        )));
    }
    if let Some(h) = heat {
        h.validate()?;
    }
    let t_eff = heat.map_or(t_bp_kelvin, |h| h.t_eff(n_bar));
    if !(t_eff > 0.0) {
        return Err(TlsModelError::Domain(format!(
            "effective temperature must be positive, got {t_eff}"
        )));
    }
    warn_beyond_validity(t_eff);
    let rel = if p.f_tan_rel == 0.0 {
        0.0
    } else {
        let scale = relax_scale_for(p.f_tan_rel, p.t0_kelvin, f0_hz, k)?;
        q_rel_inv_full(t_eff, f0_hz, scale, k)?
    };
    Ok(p.q_bg_inv + q_res_inv(n_bar, t_eff, f0_hz, p) + rel + q_qp_inv(t_eff, qp)?)
}

/// Resonant contribution to the fractional frequency shift:
/// shift_res_scale·[Re Ψ(1/2 + ħω0/2πi·k_BT) − ln(ħω0/2πk_BT)].
/// Negative (red shift) at low temperature, crossing to positive as the
/// logarithm takes over.
pub fn dfrac_res(t_kelvin: f64, f0_hz: f64, p: &TlsParams) -> f64 {
    debug_assert!(t_kelvin > 0.0);
    let w0 = std::f64::consts::TAU * f0_hz;
    let y = HBAR * w0 / (std::f64::consts::TAU * K_B * t_kelvin);
    let z = Complex64::new(0.5, -y);
    let psi = digamma(z).expect("1/2 − iy is never a digamma pole");
    p.shift_res_scale * (psi.re - y.ln())
}
