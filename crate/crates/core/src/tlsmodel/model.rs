//! Composite loss model: the four loss terms bundled with a precomputed
//! relaxation-shape table so that fitting loops do not re-evaluate the
//! double integral per residual.

use serde::{Deserialize, Serialize};

use super::relaxation::raw_relaxation_integral;
use super::{
    dfrac_rel, dfrac_res, q_qp_inv, q_res_inv, warn_beyond_validity, QpParams, RelaxKernelParams,
    SelfHeatingLaw, TlsModelError, TlsParams,
};

const SHAPE_T_MIN: f64 = 2e-4;
const SHAPE_T_MAX: f64 = 4.5;
const SHAPE_POINTS: usize = 480;

/// Cubic-spline table of ln I(T) vs ln T for the raw relaxation integral at
/// unit scale, normalized so `ratio(t0) = 1`. Agreement with the direct
/// quadrature is at the 1e-7 level (asserted in tests); outside the build
/// range the end slopes are extended, which is exact at the low end where
/// the integral is a pure power law.
#[derive(Debug, Clone)]
pub struct RelaxShape {
    ln_t: Vec<f64>,
    ln_i: Vec<f64>,
    second_deriv: Vec<f64>,
    ln_i_at_t0: f64,
}

impl RelaxShape {
    pub fn build(
        f0_hz: f64,
        t0_kelvin: f64,
        kernel: &RelaxKernelParams,
    ) -> Result<Self, TlsModelError> {
        kernel.validate()?;
        let ln_lo = SHAPE_T_MIN.ln();
        let ln_hi = SHAPE_T_MAX.ln();
        let mut ln_t = Vec::with_capacity(SHAPE_POINTS);
        let mut ln_i = Vec::with_capacity(SHAPE_POINTS);
        for i in 0..SHAPE_POINTS {
            let lt = ln_lo + (ln_hi - ln_lo) * i as f64 / (SHAPE_POINTS - 1) as f64;
            let value = raw_relaxation_integral(lt.exp(), f0_hz, kernel)?;
            if !(value > 0.0) {
                return Err(TlsModelError::Domain(format!(
                    "relaxation integral not positive at T = {} K",
                    lt.exp()
                )));
            }
            ln_t.push(lt);
            ln_i.push(value.ln());
        }
        let second_deriv = natural_spline_second_derivatives(&ln_t, &ln_i);
        let ln_i_at_t0 = spline_eval(&ln_t, &ln_i, &second_deriv, t0_kelvin.ln());
        Ok(Self {
            ln_t,
            ln_i,
            second_deriv,
            ln_i_at_t0,
        })
    }

    /// I(T)/I(t0): the relaxation term is f_tan_rel · ratio(T).
    pub fn ratio(&self, t_kelvin: f64) -> f64 {
        debug_assert!(t_kelvin > 0.0);
        let v = spline_eval(&self.ln_t, &self.ln_i, &self.second_deriv, t_kelvin.ln());
        (v - self.ln_i_at_t0).exp()
    }
}

pub(crate) fn natural_spline_second_derivatives(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d2 = vec![0.0; n];
    let mut u = vec![0.0; n];
    for i in 1..n - 1 {
        let sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
        let p = sig * d2[i - 1] + 2.0;
        d2[i] = (sig - 1.0) / p;
        let du = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
        u[i] = (6.0 * du / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
    }
    for i in (0..n - 1).rev() {
        d2[i] = d2[i] * d2[i + 1] + u[i];
    }
    d2
}

pub(crate) fn spline_eval(x: &[f64], y: &[f64], d2: &[f64], xq: f64) -> f64 {
    let n = x.len();
    if xq <= x[0] {
        // linear extension with the end slope
        let h = x[1] - x[0];
        let slope = (y[1] - y[0]) / h - h * (2.0 * d2[0] + d2[1]) / 6.0;
        return y[0] + slope * (xq - x[0]);
    }
    if xq >= x[n - 1] {
        let h = x[n - 1] - x[n - 2];
        let slope = (y[n - 1] - y[n - 2]) / h + h * (d2[n - 2] + 2.0 * d2[n - 1]) / 6.0;
        return y[n - 1] + slope * (xq - x[n - 1]);
    }
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (hi + lo) / 2;
        if x[mid] > xq {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let h = x[hi] - x[lo];
    let a = (x[hi] - xq) / h;
    let b = (xq - x[lo]) / h;
    a * y[lo] + b * y[hi] + ((a * a * a - a) * d2[lo] + (b * b * b - b) * d2[hi]) * h * h / 6.0
}

/// One device's full loss model. Construction validates parameter
/// consistency and precomputes the relaxation shape (skipped when the
/// relaxation prefactor is zero).
#[derive(Debug, Clone)]
pub struct LossModel {
    pub tls: TlsParams,
    pub kernel: RelaxKernelParams,
    pub qp: QpParams,
    pub f0_hz: f64,
    shape: Option<RelaxShape>,
}

impl LossModel {
    pub fn new(
        tls: TlsParams,
        kernel: RelaxKernelParams,
        qp: QpParams,
        f0_hz: f64,
    ) -> Result<Self, TlsModelError> {
        tls.validate()?;
        kernel.validate()?;
        qp.validate()?;
        if tls.d != kernel.d {
            return Err(TlsModelError::InvalidParams(format!(
                "bath dimensionality mismatch: params d = {}, kernel d = {}",
                tls.d, kernel.d
            )));
        }
        // the model is evaluated up to SHAPE_T_MAX; the quasiparticle
        // approximation needs T < Tc/2 throughout that range
        if qp.alpha_kin > 0.0 && qp.tc_kelvin <= 2.0 * SHAPE_T_MAX {
            return Err(TlsModelError::InvalidParams(format!(
                "quasiparticle term requires Tc > {} K over the model's \
                 temperature range (got Tc = {} K); set alpha_kin = 0 to \
                 disable it",
                2.0 * SHAPE_T_MAX,
                qp.tc_kelvin
            )));
        }
        let shape = if tls.f_tan_rel > 0.0 {
            Some(RelaxShape::build(f0_hz, tls.t0_kelvin, &kernel)?)
        } else {
            None
        };
        Ok(Self {
            tls,
            kernel,
            qp,
            f0_hz,
            shape,
        })
    }

    pub fn resonant_term(&self, n_bar: f64, t_kelvin: f64) -> f64 {
        q_res_inv(n_bar, t_kelvin, self.f0_hz, &self.tls)
    }

    pub fn relaxation_term(&self, t_kelvin: f64) -> f64 {
        match &self.shape {
            Some(shape) => self.tls.f_tan_rel * shape.ratio(t_kelvin),
            None => 0.0,
        }
    }

    pub fn quasiparticle_term(&self, t_kelvin: f64) -> f64 {
        q_qp_inv(t_kelvin, &self.qp).expect("validated at construction for T within model range")
    }

    /// Internal loss at photon number `n_bar` and physical temperature
    /// `t_kelvin`.
    pub fn q_int_inv(&self, n_bar: f64, t_kelvin: f64) -> f64 {
        assert!(
            t_kelvin > 0.0 && t_kelvin <= SHAPE_T_MAX,
            "temperature {t_kelvin} K outside model range (0, {SHAPE_T_MAX}]"
        );
        warn_beyond_validity(t_kelvin);
        self.tls.q_bg_inv
            + self.resonant_term(n_bar, t_kelvin)
            + self.relaxation_term(t_kelvin)
            + self.quasiparticle_term(t_kelvin)
    }

    /// Internal loss with the drive self-heating law applied:
    /// evaluated at T_eff = T_bp + T_heat(n̄).
    pub fn q_int_inv_heated(&self, n_bar: f64, heat: &SelfHeatingLaw) -> f64 {
        self.q_int_inv(n_bar, heat.t_eff(n_bar))
    }

    /// Total fractional frequency shift (resonant + relaxation) at
    /// temperature `t_kelvin`, relative to the zero-temperature limit.
    pub fn frac_shift(&self, t_kelvin: f64) -> Result<f64, TlsModelError> {
        let res = dfrac_res(t_kelvin, self.f0_hz, &self.tls);
        let rel = dfrac_rel(t_kelvin, self.f0_hz, self.tls.shift_rel_scale, &self.kernel)?;
        Ok(res + rel)
    }

    /// Parameter listing with units and provenance, for report emission.
    pub fn model_card(&self, origin: &str) -> ModelCard {
        let e = |name: &str, value: f64, unit: &str| ModelCardEntry {
            name: name.to_string(),
            value,
            unit: unit.to_string(),
            provenance: origin.to_string(),
        };
        ModelCard {
            entries: vec![
                e("f_tan_res", self.tls.f_tan_res, "dimensionless"),
                e("n_c", self.tls.n_c, "photons"),
                e("f_tan_rel", self.tls.f_tan_rel, "dimensionless"),
                e("t0_kelvin", self.tls.t0_kelvin, "K"),
                e("d", self.tls.d as f64, "dimensionless"),
                e("q_bg_inv", self.tls.q_bg_inv, "dimensionless"),
                e("shift_res_scale", self.tls.shift_res_scale, "dimensionless"),
                e("shift_rel_scale", self.tls.shift_rel_scale, "dimensionless"),
                e("gamma_bar_joule", self.kernel.gamma_bar_joule, "J"),
                e("v_bar_m_per_s", self.kernel.v_bar_m_per_s, "m/s"),
                e(
                    "rho_d",
                    self.kernel.rho_d,
                    match self.kernel.d {
                        1 => "kg/m",
                        2 => "kg/m^2",
                        _ => "kg/m^3",
                    },
                ),
                e("tc_kelvin", self.qp.tc_kelvin, "K"),
                e("alpha_kin", self.qp.alpha_kin, "dimensionless"),
                e("f0_hz", self.f0_hz, "Hz"),
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCardEntry {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub provenance: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCard {
    pub entries: Vec<ModelCardEntry>,
}

impl ModelCard {
    pub fn set_provenance(&mut self, name: &str, provenance: &str) {
        if let Some(entry) = self.entries.iter_mut().find(|e| e.name == name) {
            provenance.clone_into(&mut entry.provenance);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tlsmodel::{q_rel_inv_full, relax_scale_for};
    use rand::prelude::*;

    fn model() -> LossModel {
        let tls = TlsParams {
            f_tan_res: 0.131 * 1.4e-3,
            n_c: 100.0,
            f_tan_rel: 0.131 * 3.4e-3,
            t0_kelvin: 0.5,
            d: 2,
            q_bg_inv: 3e-7,
            shift_res_scale: 1e-5,
            shift_rel_scale: 1e-5,
        };
        LossModel::new(
            tls,
            RelaxKernelParams::sin_film(2),
            QpParams::new(15.0, 5.968e9),
            5.968e9,
        )
        .unwrap()
    }

    #[test]
    fn shape_table_matches_direct_quadrature() {
        let m = model();
        let scale =
            relax_scale_for(m.tls.f_tan_rel, m.tls.t0_kelvin, m.f0_hz, &m.kernel).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(21);
        for _ in 0..25 {
            let t = 10f64.powf(rng.random_range(-3.0..0.6));
            let direct = q_rel_inv_full(t, m.f0_hz, scale, &m.kernel).unwrap();
            let table = m.relaxation_term(t);
            assert!(
                ((table - direct) / direct).abs() < 1e-6,
                "T = {t}: table {table:e} vs direct {direct:e}"
            );
        }
    }

    #[test]
    fn shape_table_monotone() {
        let m = model();
        let mut prev = 0.0;
        for i in 0..200 {
            let t = 1e-3 * (4000.0f64).powf(i as f64 / 199.0);
            let v = m.relaxation_term(t);
            assert!(v >= prev, "not monotone at T = {t}");
            prev = v;
        }
    }

    #[test]
    fn zero_relaxation_skips_table() {
        let tls = TlsParams {
            f_tan_rel: 0.0,
            ..model().tls
        };
        let m = LossModel::new(
            tls,
            RelaxKernelParams::sin_film(2),
            QpParams::new(15.0, 6.0e9),
            6.0e9,
        )
        .unwrap();
        assert_eq!(m.relaxation_term(1.0), 0.0);
    }

    #[test]
    fn low_tc_with_active_qp_rejected() {
        let err = LossModel::new(
            model().tls,
            RelaxKernelParams::sin_film(2),
            QpParams::new(1.2, 6.0e9),
            6.0e9,
        );
        assert!(err.is_err());
    }

    #[test]
    fn heated_evaluation_matches_explicit_t_eff() {
        let m = model();
        let heat = SelfHeatingLaw {
            a_coeff_kelvin: 7e-4,
            beta: 0.5,
            t_bp_kelvin: 0.010,
        };
        let n = 1e5;
        let direct = m.q_int_inv(n, heat.t_eff(n));
        assert_eq!(m.q_int_inv_heated(n, &heat).to_bits(), direct.to_bits());
    }

    #[test]
    fn model_card_lists_every_parameter() {
        let mut card = model().model_card("preset:test");
        assert!(card.entries.iter().any(|e| e.name == "f_tan_res"));
        assert_eq!(card.entries.len(), 14);
        card.set_provenance("n_c", "fitted");
        assert_eq!(
            card.entries.iter().find(|e| e.name == "n_c").unwrap().provenance,
            "fitted"
        );
    }
}
