//! Inverse analyses: joint extraction of TLS parameters from power- and
//! temperature-sweep loss data, effective-temperature thermometry, the
//! self-heating power-law fit, and the iterative drive-detuning
//! convergence procedure.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B};
use crate::numerics::{self, find_root, FitProblem, FitResult, NumericsError};
use crate::response::{photon_number, ResonatorParams};
use crate::tlsmodel::{
    q_qp_inv, LossModel, QpParams, RelaxKernelParams, RelaxShape, SelfHeatingLaw, TlsModelError,
};

#[derive(Debug, thiserror::Error)]
pub enum InferenceError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("fit failed: {0}")]
    Fit(#[from] NumericsError),
    #[error("model error: {0}")]
    Model(#[from] TlsModelError),
    #[error(
        "measured loss {q_measured:e} outside the attainable model range \
         [{q_min:e}, {q_max:e}] on the bracket"
    )]
    OutOfRange {
        q_measured: f64,
        q_min: f64,
        q_max: f64,
    },
    #[error(
        "detuning loop did not converge after {iterations} iterations; last \
         two resonance iterates {f0_prev:.3} Hz and {f0_last:.3} Hz \
         (mismatches {mismatch_prev:.3e}, {mismatch_last:.3e}) suggest \
         bistability"
    )]
    DetuningNotConverged {
        iterations: usize,
        f0_prev: f64,
        f0_last: f64,
        mismatch_prev: f64,
        mismatch_last: f64,
    },
}

/// Whether a dataset sweeps drive power at fixed base temperature or base
/// temperature at fixed (≈ unity) photon number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Power,
    Temperature,
}

/// One internal-loss measurement with its device geometry metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossPoint {
    pub n_bar: f64,
    pub t_bp_kelvin: f64,
    pub q_int_inv: f64,
    pub sigma: f64,
    pub device_id: String,
    /// Electric-field energy participation of the lossy dielectric.
    pub f_sin: f64,
    pub f0_hz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossDataset {
    pub points: Vec<LossPoint>,
    pub sweep_kind: SweepKind,
}

impl LossDataset {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.points.is_empty() {
            return Err(InferenceError::InvalidDataset("no points".into()));
        }
        for p in &self.points {
            if !(p.sigma > 0.0) {
                return Err(InferenceError::InvalidDataset(format!(
                    "sigma must be positive (device {}, n̄ = {})",
                    p.device_id, p.n_bar
                )));
            }
            if !(p.n_bar >= 0.0) || !(0.0..=1.0).contains(&p.f_sin) || !(p.t_bp_kelvin > 0.0) {
                return Err(InferenceError::InvalidDataset(format!(
                    "invalid point for device {}: n̄ = {}, f_sin = {}, T_bp = {}",
                    p.device_id, p.n_bar, p.f_sin, p.t_bp_kelvin
                )));
            }
        }
        // power sweeps hold T_bp fixed per device; temperature sweeps hold
        // n̄ fixed (≈ 1)
        let mut per_device: HashMap<&str, Vec<&LossPoint>> = HashMap::new();
        for p in &self.points {
            per_device.entry(p.device_id.as_str()).or_default().push(p);
        }
        for (dev, pts) in per_device {
            match self.sweep_kind {
                SweepKind::Power => {
                    let t0 = pts[0].t_bp_kelvin;
                    if pts.iter().any(|p| (p.t_bp_kelvin - t0).abs() > 1e-9 * t0) {
                        return Err(InferenceError::InvalidDataset(format!(
                            "power sweep for device {dev} does not hold T_bp fixed"
                        )));
                    }
                }
                SweepKind::Temperature => {
                    let n0 = pts[0].n_bar.max(1e-12);
                    if pts
                        .iter()
                        .any(|p| p.n_bar / n0 > 2.0 || p.n_bar / n0 < 0.5)
                    {
                        return Err(InferenceError::InvalidDataset(format!(
                            "temperature sweep for device {dev} does not hold n̄ fixed"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn device_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.points.iter().map(|p| p.device_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Configuration of the joint loss-model fit: term toggles, frozen values,
/// bath/kernel configuration and an optional frozen heating law.
#[derive(Debug, Clone)]
pub struct FitLossConfig {
    pub fit_resonant: bool,
    pub fit_relaxation: bool,
    pub fit_background: bool,
    pub include_quasiparticle: bool,
    /// Frozen heating law applied during the fit (the combined TLS +
    /// self-heating model); `None` fits the TLS-only model.
    pub heat: Option<SelfHeatingLaw>,
    pub frozen_tan_res: Option<f64>,
    pub frozen_n_c: Option<f64>,
    pub frozen_tan_rel: Option<f64>,
    pub frozen_q_bg_inv: Option<f64>,
    pub d: u32,
    pub t0_kelvin: f64,
    pub kernel: RelaxKernelParams,
    pub tc_kelvin: f64,
    pub alpha_kin: f64,
}

impl Default for FitLossConfig {
    fn default() -> Self {
        Self {
            fit_resonant: true,
            fit_relaxation: true,
            fit_background: true,
            include_quasiparticle: true,
            heat: None,
            frozen_tan_res: None,
            frozen_n_c: None,
            frozen_tan_rel: None,
            frozen_q_bg_inv: None,
            d: 2,
            t0_kelvin: 0.5,
            kernel: RelaxKernelParams::sin_film(2),
            tc_kelvin: 15.0,
            alpha_kin: 1.0,
        }
    }
}

/// Film-level result of the joint fit. The loss tangents are shared across
/// devices; each device's prefactor is f_sin·tanδ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossModelFit {
    pub tan_res: f64,
    pub sigma_tan_res: f64,
    pub n_c: f64,
    pub sigma_n_c: f64,
    pub tan_rel: f64,
    pub sigma_tan_rel: f64,
    pub q_bg_inv: f64,
    pub sigma_q_bg_inv: f64,
    pub d: u32,
    pub t0_kelvin: f64,
    pub chi2_per_dof: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when the configuration is (close to) unidentifiable; the
    /// covariance must then be treated as unreliable.
    pub identifiability_warning: Option<String>,
}

impl LossModelFit {
    /// Device-level TLS parameters with the shared tangents scaled by the
    /// device participation.
    pub fn tls_params_for(&self, f_sin: f64) -> crate::tlsmodel::TlsParams {
        crate::tlsmodel::TlsParams {
            f_tan_res: f_sin * self.tan_res,
            n_c: self.n_c,
            f_tan_rel: f_sin * self.tan_rel,
            t0_kelvin: self.t0_kelvin,
            d: self.d,
            q_bg_inv: self.q_bg_inv,
            shift_res_scale: 0.0,
            shift_rel_scale: 0.0,
        }
    }
}

const RIDGE_WEIGHT: f64 = 1e-12;
const TAN_REL_TYPICAL: f64 = 1e-3;

/// Jointly fit the TLS loss model to a power sweep and a temperature sweep.
///
/// The resonant prefactor and critical photon number are identified mainly
/// by the power sweep, the relaxation prefactor and background by the
/// temperature sweep; per-device participation multiplies the shared film
/// loss tangents. Weighting is inverse-variance from the per-point σ. The
/// relaxation amplitude carries a negligible (1e-12-weight) ridge toward
/// zero so that films without resolvable relaxation report a value
/// consistent with zero rather than noise.
pub fn fit_loss_model(
    power: &LossDataset,
    temp: &LossDataset,
    config: &FitLossConfig,
) -> Result<LossModelFit, InferenceError> {
    power.validate()?;
    temp.validate()?;
    if power.sweep_kind != SweepKind::Power || temp.sweep_kind != SweepKind::Temperature {
        return Err(InferenceError::InvalidDataset(
            "datasets passed in the wrong order (power, temperature)".into(),
        ));
    }
    let points: Vec<&LossPoint> = power.points.iter().chain(temp.points.iter()).collect();

    // identifiability: relaxation needs temperature lever arm
    let mut identifiability_warning = None;
    let t_max = temp
        .points
        .iter()
        .map(|p| p.t_bp_kelvin)
        .fold(0.0f64, f64::max);
    if config.fit_relaxation && config.frozen_tan_rel.is_none() && t_max < 0.3 {
        identifiability_warning = Some(format!(
            "relaxation term requested but the temperature sweep only \
             reaches {t_max} K (< 0.3 K): amplitude and covariance are \
             unreliable"
        ));
    }

    // one relaxation shape per distinct resonance frequency
    let mut shapes: HashMap<u64, RelaxShape> = HashMap::new();
    let relaxation_active = config.fit_relaxation || config.frozen_tan_rel.unwrap_or(0.0) > 0.0;
    if relaxation_active {
        for p in &points {
            if let std::collections::hash_map::Entry::Vacant(e) = shapes.entry(p.f0_hz.to_bits())
            {
                e.insert(RelaxShape::build(p.f0_hz, config.t0_kelvin, &config.kernel)?);
            }
        }
    }

    // rough initial guesses from the data
    let q_min = points.iter().map(|p| p.q_int_inv).fold(f64::INFINITY, f64::min);
    let q_bg_init = config.frozen_q_bg_inv.unwrap_or(0.3 * q_min.max(1e-12));
    let tan_res_init = config.frozen_tan_res.unwrap_or_else(|| {
        let mut est: Vec<f64> = power
            .points
            .iter()
            .filter(|p| p.n_bar <= 10.0)
            .map(|p| ((p.q_int_inv - q_bg_init) / p.f_sin).max(1e-9))
            .collect();
        if est.is_empty() {
            est = power
                .points
                .iter()
                .map(|p| (p.q_int_inv / p.f_sin).max(1e-9))
                .collect();
        }
        est.sort_by(f64::total_cmp);
        est[est.len() / 2]
    });
    let tan_rel_init = config.frozen_tan_rel.unwrap_or_else(|| {
        let hot: Vec<&LossPoint> = temp
            .points
            .iter()
            .filter(|p| p.t_bp_kelvin >= 0.8 * t_max)
            .collect();
        let est = hot
            .iter()
            .map(|p| {
                let ratio = shapes
                    .get(&p.f0_hz.to_bits())
                    .map_or((p.t_bp_kelvin / config.t0_kelvin).powi(config.d as i32), |s| {
                        s.ratio(p.t_bp_kelvin)
                    });
                ((p.q_int_inv - q_bg_init) / (p.f_sin * ratio)).max(0.0)
            })
            .sum::<f64>()
            / hot.len().max(1) as f64;
        est.max(1e-9)
    });

    let qp_for = |p: &LossPoint| QpParams {
        tc_kelvin: config.tc_kelvin,
        alpha_kin: if config.include_quasiparticle {
            config.alpha_kin
        } else {
            0.0
        },
        f0_hz: p.f0_hz,
    };

    // parameter vector: [tan_res, log10 n_c, tan_rel, q_bg_inv], fitted in
    // units of the initial guesses so finite-difference steps stay sane
    let scales = [
        tan_res_init.max(1e-6),
        1.0,
        tan_rel_init.max(1e-6),
        q_bg_init.max(1e-9),
    ];
    let frozen = vec![
        !config.fit_resonant || config.frozen_tan_res.is_some(),
        !config.fit_resonant || config.frozen_n_c.is_some(),
        !config.fit_relaxation || config.frozen_tan_rel.is_some(),
        !config.fit_background || config.frozen_q_bg_inv.is_some(),
    ];

    let model_for = |u: &[f64], p: &LossPoint| -> f64 {
        let tan_res = if config.fit_resonant || config.frozen_tan_res.is_some() {
            u[0] * scales[0]
        } else {
            0.0
        };
        let n_c = 10f64.powf(u[1]);
        let tan_rel = if relaxation_active { u[2] * scales[2] } else { 0.0 };
        let q_bg = u[3] * scales[3];
        let t_eff = match &config.heat {
            Some(h) => p.t_bp_kelvin + h.t_heat(p.n_bar),
            None => p.t_bp_kelvin,
        };
        let w0 = std::f64::consts::TAU * p.f0_hz;
        let res = p.f_sin * tan_res * (HBAR * w0 / (2.0 * K_B * t_eff)).tanh()
            / (1.0 + p.n_bar / n_c).sqrt();
        let rel = if tan_rel > 0.0 {
            p.f_sin
                * tan_rel
                * shapes
                    .get(&p.f0_hz.to_bits())
                    .expect("shape built for every f0")
                    .ratio(t_eff)
        } else {
            0.0
        };
        let qp = q_qp_inv(t_eff, &qp_for(p)).unwrap_or(0.0);
        q_bg + res + rel + qp
    };

    let residual = |u: &[f64]| -> Vec<f64> {
        let mut r: Vec<f64> = points
            .iter()
            .map(|p| model_for(u, p) - p.q_int_inv)
            .collect();
        // ridge pulling the relaxation amplitude to zero in flat directions
        r.push(u[2] * scales[2] / TAN_REL_TYPICAL);
        r
    };
    let mut weights: Vec<f64> = points.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect();
    weights.push(RIDGE_WEIGHT);

    let mut best: Option<(f64, FitResult)> = None;
    let nc_starts: &[f64] = if config.frozen_n_c.is_some() {
        &[0.0] // replaced below by the frozen value
    } else {
        &[1.0, 2.0, 4.0]
    };
    for &nc_start in nc_starts {
        let log10_nc_init = config.frozen_n_c.map_or(nc_start, f64::log10);
        let init = vec![
            tan_res_init / scales[0],
            log10_nc_init,
            tan_rel_init / scales[2],
            q_bg_init / scales[3],
        ];
        let problem = FitProblem::new(init, residual)
            .with_weights(weights.clone())
            .with_frozen(frozen.clone())
            .with_bounds(vec![
                (0.0, f64::INFINITY),
                (-3.0, 12.0),
                (0.0, f64::INFINITY),
                (0.0, f64::INFINITY),
            ])
            .with_max_iterations(400);
        let fit = numerics::nlls_fit(&problem)?;
        let cost = fit.residual_norm;
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, fit));
        }
    }
    let (_, fit) = best.expect("at least one start");

    let sig = fit.sigmas();
    let n_c = 10f64.powf(fit.params[1]);
    let dof = (points.len() + 1).saturating_sub(fit.free_indices.len()).max(1);
    let mut result = LossModelFit {
        tan_res: fit.params[0] * scales[0],
        sigma_tan_res: sig[0] * scales[0],
        n_c,
        sigma_n_c: std::f64::consts::LN_10 * n_c * sig[1],
        tan_rel: if relaxation_active {
            fit.params[2] * scales[2]
        } else {
            0.0
        },
        sigma_tan_rel: sig[2] * scales[2],
        q_bg_inv: fit.params[3] * scales[3],
        sigma_q_bg_inv: sig[3] * scales[3],
        d: config.d,
        t0_kelvin: config.t0_kelvin,
        chi2_per_dof: fit.residual_norm.powi(2) / dof as f64,
        converged: fit.converged,
        iterations: fit.iterations,
        identifiability_warning,
    };
    if fit.degenerate && result.identifiability_warning.is_none() {
        result.identifiability_warning =
            Some("normal equations degenerate: covariance unreliable".into());
    }
    Ok(result)
}

/// Result of one effective-temperature inversion.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TempInference {
    pub t_eff_kelvin: f64,
    pub sigma_t_kelvin: f64,
    /// True when the measured loss was at or below the model value at the
    /// base temperature (no detectable heating).
    pub at_floor: bool,
}

const THERMOMETRY_ROOT_TOL: f64 = 1e-9;

/// Invert a temperature-dependent loss model for the effective temperature
/// at one drive point: the unique root of q_model(n̄, T) − q_measured on
/// the relaxation-dominated (rising) branch of the bracket
/// [t_bp, bracket_hi]. Returns T_bp when the measured loss does not exceed
/// the model at the base temperature. The measurement σ is propagated
/// through the root-find derivative.
pub fn infer_effective_temperature(
    q_measured: f64,
    sigma_q: f64,
    n_bar: f64,
    model: impl Fn(f64, f64) -> f64,
    t_bp_kelvin: f64,
    bracket_hi_kelvin: f64,
) -> Result<TempInference, InferenceError> {
    let q_floor = model(n_bar, t_bp_kelvin);
    if q_measured <= q_floor {
        return Ok(TempInference {
            t_eff_kelvin: t_bp_kelvin,
            sigma_t_kelvin: 0.0,
            at_floor: true,
        });
    }

    // locate the model minimum; the physical branch is the rising side
    let grid = 256;
    let ln_lo = t_bp_kelvin.ln();
    let ln_hi = bracket_hi_kelvin.ln();
    let mut t_min = t_bp_kelvin;
    let mut q_min = q_floor;
    for i in 0..=grid {
        let t = (ln_lo + (ln_hi - ln_lo) * i as f64 / grid as f64).exp();
        let q = model(n_bar, t);
        if q < q_min {
            q_min = q;
            t_min = t;
        }
    }
    let q_top = model(n_bar, bracket_hi_kelvin);
    if q_measured > q_top {
        return Err(InferenceError::OutOfRange {
            q_measured,
            q_min,
            q_max: q_top,
        });
    }

    let f = |t: f64| model(n_bar, t) - q_measured;
    let t_eff = find_root(f, (t_min, bracket_hi_kelvin), THERMOMETRY_ROOT_TOL)?;

    // σ_T = σ_q / |dq/dT| at the root
    let sigma_t = if sigma_q > 0.0 {
        let dt = 1e-4 * t_eff;
        let dq_dt = (model(n_bar, t_eff + dt) - model(n_bar, t_eff - dt)) / (2.0 * dt);
        if dq_dt.abs() > 0.0 {
            sigma_q / dq_dt.abs()
        } else {
            f64::INFINITY
        }
    } else {
        0.0
    };
    Ok(TempInference {
        t_eff_kelvin: t_eff,
        sigma_t_kelvin: sigma_t,
        at_floor: false,
    })
}

/// One device's inferred effective-temperature curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatingPoint {
    pub n_bar: f64,
    pub t_eff_kelvin: f64,
    pub sigma_t_kelvin: f64,
    pub device_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfHeatingCurve {
    pub points: Vec<HeatingPoint>,
    pub fitted_law: Option<SelfHeatingLaw>,
}

impl SelfHeatingCurve {
    pub fn validate(&self, t_bp_kelvin: f64) -> Result<(), InferenceError> {
        if self
            .points
            .iter()
            .any(|p| p.t_eff_kelvin < t_bp_kelvin - 1e-12)
        {
            return Err(InferenceError::InvalidDataset(
                "heating curve contains T_eff below the base temperature".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelfHeatingFit {
    pub law: SelfHeatingLaw,
    pub sigma_a: f64,
    pub sigma_beta: f64,
    /// Per-device heating coefficients, a diagnostic for the shared-law
    /// assumption.
    pub per_device_a: Vec<(String, f64)>,
    /// Set when the photon-number span is under two decades.
    pub low_confidence: bool,
}

/// Jointly fit T_eff(n̄) = T_bp + A·n̄^β across all devices, weighted by
/// the per-point temperature σ. β is frozen at 0.5 unless `free_beta`.
pub fn fit_self_heating(
    curves: &[SelfHeatingCurve],
    t_bp_kelvin: f64,
    free_beta: bool,
) -> Result<SelfHeatingFit, InferenceError> {
    let mut points: Vec<&HeatingPoint> = Vec::new();
    for c in curves {
        c.validate(t_bp_kelvin)?;
        points.extend(c.points.iter());
    }
    if points.len() < 2 {
        return Err(InferenceError::InvalidDataset(
            "need at least 2 heating points".into(),
        ));
    }
    let n_positive: Vec<f64> = points
        .iter()
        .map(|p| p.n_bar)
        .filter(|&n| n > 0.0)
        .collect();
    let span = n_positive.iter().fold(0.0f64, |a, &b| a.max(b))
        / n_positive.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let low_confidence = span < 100.0;

    let fit_subset = |subset: &[&HeatingPoint], free_beta: bool| -> Result<FitResult, InferenceError> {
        let mut a_init: Vec<f64> = subset
            .iter()
            .filter(|p| p.n_bar > 0.0)
            .map(|p| ((p.t_eff_kelvin - t_bp_kelvin).max(0.0)) / p.n_bar.sqrt())
            .collect();
        a_init.sort_by(f64::total_cmp);
        let a0 = a_init.get(a_init.len() / 2).copied().unwrap_or(0.0).max(1e-12);
        let residual = |q: &[f64]| -> Vec<f64> {
            subset
                .iter()
                .map(|p| t_bp_kelvin + q[0] * p.n_bar.powf(q[1]) - p.t_eff_kelvin)
                .collect()
        };
        let weights: Vec<f64> = subset
            .iter()
            .map(|p| 1.0 / (p.sigma_t_kelvin.max(1e-12)).powi(2))
            .collect();
        let problem = FitProblem::new(vec![a0, 0.5], residual)
            .with_weights(weights)
            .with_frozen(vec![false, !free_beta])
            .with_bounds(vec![(0.0, f64::INFINITY), (0.05, 1.95)])
            .with_max_iterations(300);
        Ok(numerics::nlls_fit(&problem)?)
    };

    let fit = fit_subset(&points, free_beta)?;
    let sig = fit.sigmas();

    let mut per_device_a = Vec::new();
    let mut ids: Vec<String> = points.iter().map(|p| p.device_id.clone()).collect();
    ids.sort();
    ids.dedup();
    if ids.len() > 1 {
        for id in ids {
            let subset: Vec<&HeatingPoint> = points
                .iter()
                .copied()
                .filter(|p| p.device_id == id)
                .collect();
            if subset.len() >= 2 {
                if let Ok(f) = fit_subset(&subset, false) {
                    per_device_a.push((id, f.params[0]));
                }
            }
        }
    }

    Ok(SelfHeatingFit {
        law: SelfHeatingLaw {
            a_coeff_kelvin: fit.params[0],
            beta: fit.params[1],
            t_bp_kelvin,
        },
        sigma_a: sig[0],
        sigma_beta: sig[1],
        per_device_a,
        low_confidence,
    })
}

/// Forward model for the detuning loop: measured resonator parameters, the
/// loss model supplying the temperature-dependent fractional frequency
/// shift, and the drive self-heating law. The shift is tabulated over
/// temperature at construction so the nested fixed-point loops stay cheap.
#[derive(Debug, Clone)]
pub struct DetuningModel {
    pub resonator: ResonatorParams,
    pub loss: LossModel,
    pub heat: Option<SelfHeatingLaw>,
    pub base_temp_kelvin: f64,
    shift_ln_t: Vec<f64>,
    shift_val: Vec<f64>,
    shift_d2: Vec<f64>,
    shift_at_base: f64,
}

impl DetuningModel {
    pub fn new(
        resonator: ResonatorParams,
        loss: LossModel,
        heat: Option<SelfHeatingLaw>,
        base_temp_kelvin: f64,
    ) -> Result<Self, TlsModelError> {
        const POINTS: usize = 240;
        let t_lo = (0.5 * base_temp_kelvin).max(2e-4);
        let t_hi = 4.4f64;
        let mut ln_t = Vec::with_capacity(POINTS);
        let mut val = Vec::with_capacity(POINTS);
        for i in 0..POINTS {
            let lt = t_lo.ln() + (t_hi.ln() - t_lo.ln()) * i as f64 / (POINTS - 1) as f64;
            ln_t.push(lt);
            val.push(loss.frac_shift(lt.exp())?);
        }
        let d2 = crate::tlsmodel::spline_helpers::second_derivatives(&ln_t, &val);
        let shift_at_base =
            crate::tlsmodel::spline_helpers::eval(&ln_t, &val, &d2, base_temp_kelvin.ln());
        Ok(Self {
            resonator,
            loss,
            heat,
            base_temp_kelvin,
            shift_ln_t: ln_t,
            shift_val: val,
            shift_d2: d2,
            shift_at_base,
        })
    }

    /// Shifted resonance frequency at drive photon number `n_bar`,
    /// referenced to the measured low-power frequency at the base
    /// temperature.
    pub fn shifted_f0(&self, n_bar: f64) -> f64 {
        let t_eff = self
            .heat
            .as_ref()
            .map_or(self.base_temp_kelvin, |h| h.t_eff(n_bar));
        let shift = crate::tlsmodel::spline_helpers::eval(
            &self.shift_ln_t,
            &self.shift_val,
            &self.shift_d2,
            t_eff.ln(),
        ) - self.shift_at_base;
        self.resonator.f0_hz * (1.0 + shift)
    }

    /// What the driven device actually does at a fixed drive frequency:
    /// resolve the self-consistent photon number
    /// n̄ = photon_number(P, f_drive − f0(n̄)) and return
    /// (true resonance, n̄).
    fn device_response(
        &self,
        f_drive_hz: f64,
        drive_power_watt: f64,
    ) -> Result<(f64, f64), InferenceError> {
        let mut f0 = self.resonator.f0_hz;
        for _ in 0..500 {
            let n = photon_number(&self.resonator, drive_power_watt, f_drive_hz - f0);
            let f0_next = self.shifted_f0(n);
            if (f0_next - f0).abs() <= 1e-12 * f0.abs() {
                return Ok((f0_next, n));
            }
            f0 = f0_next;
        }
        Err(InferenceError::DetuningNotConverged {
            iterations: 500,
            f0_prev: f0,
            f0_last: self.shifted_f0(photon_number(
                &self.resonator,
                drive_power_watt,
                f_drive_hz - f0,
            )),
            mismatch_prev: f64::NAN,
            mismatch_last: f64::NAN,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DetuningOptions {
    pub max_iterations: usize,
    /// Initial guess for the resonance frequency; defaults to the measured
    /// low-power value.
    pub initial_f0_hz: Option<f64>,
    /// Relative mismatch tolerance between predicted and measured detuning
    /// (the 0.01% stop rule).
    pub rel_tol: f64,
}

impl Default for DetuningOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_f0_hz: None,
            rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetuningSolution {
    pub drive_freq_hz: f64,
    pub n_bar: f64,
    pub f0_shifted_hz: f64,
    pub iterations: usize,
    pub mismatch: f64,
}

/// Converge on the operating point where the drive sits `target_detuning`
/// away from the (power-shifted) resonance: set the drive relative to the
/// assumed resonance, let the device respond (photon number and shifted
/// resonance settle self-consistently), measure the actual detuning, and
/// repeat with the measured resonance until the predicted and measured
/// detunings differ by less than the stop tolerance (0.01% by default).
pub fn converge_detuning(
    target_detuning_hz: f64,
    drive_power_watt: f64,
    model: &DetuningModel,
    opts: &DetuningOptions,
) -> Result<DetuningSolution, InferenceError> {
    if target_detuning_hz == 0.0 {
        return Err(InferenceError::InvalidDataset(
            "target detuning must be nonzero".into(),
        ));
    }
    let mut f0_assumed = opts.initial_f0_hz.unwrap_or(model.resonator.f0_hz);
    let mut prev: Option<(f64, f64)> = None;

    for iteration in 1..=opts.max_iterations {
        let f_drive = f0_assumed + target_detuning_hz;
        let (f0_measured, n_bar) = model.device_response(f_drive, drive_power_watt)?;
        let measured_detuning = f_drive - f0_measured;
        let mismatch =
            (measured_detuning - target_detuning_hz).abs() / target_detuning_hz.abs();
        if mismatch < opts.rel_tol {
            return Ok(DetuningSolution {
                drive_freq_hz: f_drive,
                n_bar,
                f0_shifted_hz: f0_measured,
                iterations: iteration,
                mismatch,
            });
        }
        if let Some((f0_prev, mis_prev)) = prev {
            if iteration == opts.max_iterations {
                return Err(InferenceError::DetuningNotConverged {
                    iterations: iteration,
                    f0_prev,
                    f0_last: f0_measured,
                    mismatch_prev: mis_prev,
                    mismatch_last: mismatch,
                });
            }
        }
        prev = Some((f0_assumed, mismatch));
        f0_assumed = f0_measured;
    }
    let (f0_prev, mis_prev) = prev.unwrap_or((f0_assumed, f64::NAN));
    Err(InferenceError::DetuningNotConverged {
        iterations: opts.max_iterations,
        f0_prev,
        f0_last: f0_assumed,
        mismatch_prev: mis_prev,
        mismatch_last: f64::NAN,
    })
}
