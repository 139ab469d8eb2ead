//! Relaxation-type TLS damping: the one-phonon relaxation-rate kernel, the
//! full double integral over TLS energy and relaxation time, the matching
//! frequency-shift integral, and the energy-sampling integrand.
//!
//! The loss double integral is
//!
//! Q⁻¹_rel(T) = scale · (ω0/k_B T) ∫₀^∞ dE ∫_{τmin(E)}^∞ dτ
//!              sech²(E/2k_BT) √(1 − τmin/τ) / (1 + ω0²τ²)
//!
//! with the minimum relaxation time τmin set by the one-phonon rate
//! evaluated where the TLS energy matches its tunneling strength. The τ
//! integral carries a square-root derivative singularity at τ = τmin; the
//! substitution τ = τmin/(1 − u²) removes it analytically and maps the
//! semi-infinite domain onto u ∈ [0, 1):
//!
//! ∫_{τmin}^∞ √(1 − τmin/τ)/(1 + ω0²τ²) dτ = 2τmin ∫₀¹ u²/((1−u²)² + M²) du
//!
//! with M = ω0·τmin. The frequency-shift integrand has an extra 1/τ, which
//! the same substitution turns into 2u²(1−u²)/((1−u²)² + M²).

use crate::constants::K_B;
use crate::numerics::{integrate, QuadratureSpec};

use super::{RelaxKernelParams, TlsModelError};

/// Surface area of the unit n-sphere (S_0 = 2, S_1 = 2π, S_2 = 4π).
pub fn unit_sphere_area(n: u32) -> f64 {
    match n {
        0 => 2.0,
        1 => std::f64::consts::TAU,
        2 => 2.0 * std::f64::consts::TAU,
        _ => {
            // 2·π^((n+1)/2) / Γ((n+1)/2); dimensions above 3 are not used
            // by the model but the formula costs nothing
            let half = (n as f64 + 1.0) / 2.0;
            2.0 * std::f64::consts::PI.powf(half) / gamma_fn(half)
        }
    }
}

fn gamma_fn(x: f64) -> f64 {
    // Stirling with correction terms, adequate for the small arguments above
    if x < 8.0 {
        return gamma_fn(x + 1.0) / x;
    }
    let inv = 1.0 / x;
    let series = 1.0 + inv / 12.0 + inv * inv / 288.0 - 139.0 * inv.powi(3) / 51840.0;
    (std::f64::consts::TAU / x).sqrt() * (x / std::f64::consts::E).powf(x) * series
}

/// Overflow-safe coth with a series branch for small arguments.
pub(crate) fn coth_stable(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 1e-4 {
        1.0 / x + x / 3.0 - x * x * x / 45.0
    } else if x > 20.0 {
        1.0
    } else {
        1.0 / x.tanh()
    }
}

/// Minimum TLS relaxation rate 1/τmin at energy `energy_joule`: the
/// one-phonon rate evaluated at tunneling strength equal to the energy,
///
/// τmin⁻¹(E) = (γ̄²/v̄^{d+2}) · (π·S_{d−1}/(2π)^d) · E^d/(ħ^{d+1}·ρ_d)
///             · coth(E/2k_BT).
pub fn tau_min_inv(energy_joule: f64, t_kelvin: f64, k: &RelaxKernelParams) -> f64 {
    debug_assert!(energy_joule > 0.0 && t_kelvin > 0.0);
    k.rate_prefactor() * energy_joule.powi(k.d as i32) * coth_stable(energy_joule / (2.0 * K_B * t_kelvin))
}

// sech²(ξ) < 1e-16 beyond ξ = ln(2e8) ≈ 19.11; the outer energy integral
// is truncated there.
const XI_MAX: f64 = 19.2;

const INNER_REL_TOL: f64 = 1e-9;
const OUTER_REL_TOL: f64 = 1e-9;

/// ∫₀¹ u²/((1−u²)² + M²) du, resolving the endpoint peak at u = 1 whose
/// width is O(M). For large M the closed-form expansion avoids overflow
/// when τmin itself has overflowed.
fn inner_loss_integral(m: f64) -> Result<f64, TlsModelError> {
    if !m.is_finite() || m > 1e6 {
        // ∫ u²/((1−u²)²+M²) ≈ (1/M²)·(1/3 − (8/105)/M²)
        if m.is_finite() {
            return Ok((1.0 / 3.0 - (8.0 / 105.0) / (m * m)) / (m * m));
        }
        return Ok(0.0);
    }
    let f = |u: f64| {
        let w = 1.0 - u * u;
        u * u / (w * w + m * m)
    };
    // split so the O(M)-wide peak at u = 1 cannot hide between panel nodes
    let peak_window = (50.0 * m).clamp(1e-9, 0.5);
    let split = 1.0 - peak_window;
    let spec_lo = QuadratureSpec::finite(0.0, split).with_rel_tol(INNER_REL_TOL);
    let spec_hi = QuadratureSpec::finite(split, 1.0)
        .with_rel_tol(INNER_REL_TOL)
        .with_max_subdivisions(2000);
    let lo = integrate(f, &spec_lo).map_err(TlsModelError::from_quadrature("inner τ integral"))?;
    let hi = integrate(f, &spec_hi).map_err(TlsModelError::from_quadrature("inner τ integral"))?;
    Ok(lo.value + hi.value)
}

/// ∫₀¹ 2u²(1−u²)/((1−u²)² + M²) du (the frequency-shift inner integral).
fn inner_shift_integral(m: f64) -> Result<f64, TlsModelError> {
    if !m.is_finite() || m > 1e6 {
        if m.is_finite() {
            // ∫ 2u²(1−u²)/((1−u²)²+M²) ≈ (4/15)/M²
            return Ok(4.0 / 15.0 / (m * m));
        }
        return Ok(0.0);
    }
    let f = |u: f64| {
        let w = 1.0 - u * u;
        2.0 * u * u * w / (w * w + m * m)
    };
    let peak_window = (50.0 * m).clamp(1e-9, 0.5);
    let split = 1.0 - peak_window;
    let spec_lo = QuadratureSpec::finite(0.0, split).with_rel_tol(INNER_REL_TOL);
    let spec_hi = QuadratureSpec::finite(split, 1.0)
        .with_rel_tol(INNER_REL_TOL)
        .with_max_subdivisions(2000);
    let lo =
        integrate(f, &spec_lo).map_err(TlsModelError::from_quadrature("inner shift integral"))?;
    let hi =
        integrate(f, &spec_hi).map_err(TlsModelError::from_quadrature("inner shift integral"))?;
    Ok(lo.value + hi.value)
}

/// The raw loss double integral with unit scale:
/// (ω0/k_B T)·∫∫ … = 2ω0·∫₀^{ξmax} sech²(ξ)·J(τmin(2k_BT·ξ)) dξ
/// with J the transformed inner integral.
pub(crate) fn raw_relaxation_integral(
    t_kelvin: f64,
    f0_hz: f64,
    k: &RelaxKernelParams,
) -> Result<f64, TlsModelError> {
    let w0 = std::f64::consts::TAU * f0_hz;
    let kt2 = 2.0 * K_B * t_kelvin;
    let inner_err: std::cell::RefCell<Option<TlsModelError>> = std::cell::RefCell::new(None);
    // the NaN sentinel surfaces inner failures through the outer integrator
    let integrand = |xi: f64| -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let energy = kt2 * xi;
        let rate = tau_min_inv(energy, t_kelvin, k);
        let m = w0 / rate;
        let sech = 1.0 / (xi.cosh());
        match inner_loss_integral(m) {
            // 2ω0·sech²·J with J = 2·τmin·I(M), via the rate so τmin = ∞
            // is safe
            Ok(i) => 4.0 * w0 * sech * sech * i / rate,
            Err(e) => {
                inner_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let spec = QuadratureSpec::finite(0.0, XI_MAX)
        .with_rel_tol(OUTER_REL_TOL)
        .with_max_subdivisions(2000);
    let result = integrate(integrand, &spec);
    if let Some(e) = inner_err.into_inner() {
        return Err(e);
    }
    result
        .map(|q| q.value)
        .map_err(|e| TlsModelError::Quadrature {
            context: format!("relaxation loss integral at T = {t_kelvin} K, E ≤ {XI_MAX}·2k_BT"),
            source: e,
        })
}

/// Full relaxation damping (the double integral), with the microscopic
/// prefactor grouping absorbed into the dimensionless `scale`.
///
/// Callers wanting the loss-tangent convention calibrate `scale` against
/// the power law at the reference temperature; see
/// [`relax_scale_for`](super::relax_scale_for).
pub fn q_rel_inv_full(
    t_kelvin: f64,
    f0_hz: f64,
    scale: f64,
    k: &RelaxKernelParams,
) -> Result<f64, TlsModelError> {
    if !(t_kelvin > 0.0) {
        return Err(TlsModelError::Domain(format!(
            "temperature must be positive, got {t_kelvin}"
        )));
    }
    super::warn_beyond_validity(t_kelvin);
    Ok(scale * raw_relaxation_integral(t_kelvin, f0_hz, k)?)
}

/// Relaxation contribution to the fractional frequency shift; always ≤ 0.
/// The prefactor grouping is absorbed into the non-negative `scale`.
pub fn dfrac_rel(
    t_kelvin: f64,
    f0_hz: f64,
    scale: f64,
    k: &RelaxKernelParams,
) -> Result<f64, TlsModelError> {
    if !(t_kelvin > 0.0) {
        return Err(TlsModelError::Domain(format!(
            "temperature must be positive, got {t_kelvin}"
        )));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let w0 = std::f64::consts::TAU * f0_hz;
    let kt2 = 2.0 * K_B * t_kelvin;
    let inner_err: std::cell::RefCell<Option<TlsModelError>> = std::cell::RefCell::new(None);
    let integrand = |xi: f64| -> f64 {
        if xi <= 0.0 {
            return 0.0;
        }
        let energy = kt2 * xi;
        let m = w0 / tau_min_inv(energy, t_kelvin, k);
        let sech = 1.0 / xi.cosh();
        match inner_shift_integral(m) {
            Ok(i) => 2.0 * sech * sech * i,
            Err(e) => {
                inner_err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let spec = QuadratureSpec::finite(0.0, XI_MAX)
        .with_rel_tol(OUTER_REL_TOL)
        .with_max_subdivisions(2000);
    let result = integrate(integrand, &spec);
    if let Some(e) = inner_err.into_inner() {
        return Err(e);
    }
    let value = result
        .map(|q| q.value)
        .map_err(|e| TlsModelError::Quadrature {
            context: format!("relaxation shift integral at T = {t_kelvin} K, E ≤ {XI_MAX}·2k_BT"),
            source: e,
        })?;
    Ok(-scale * value)
}

/// The low-temperature-limit integrand ξ^d·sech²(ξ)·coth(ξ) with
/// ξ = E/2k_BT; reports which TLS energies dominate relaxation damping
/// (peaked near E ≈ 2k_BT with width ~1.7·2k_BT for d = 2).
pub fn rel_sampling_integrand(energy_joule: f64, t_kelvin: f64, d: u32) -> f64 {
    debug_assert!(energy_joule > 0.0 && t_kelvin > 0.0);
    let xi = energy_joule / (2.0 * K_B * t_kelvin);
    let sech = 1.0 / xi.cosh();
    xi.powi(d as i32) * sech * sech * coth_stable(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tlsmodel::RelaxKernelParams;

    // ∫₀^∞ ξ^d sech²(ξ) coth(ξ) dξ, frozen after two independent schemes
    // (implementation quadrature and the odd-harmonic series
    // 2^{1−d}·d!·Σ (2k+1)^{−(d+1)}) agreed to better than 1e-10.
    pub(crate) const C_D: [f64; 3] = [
        1.233_700_550_136_169_8, // d = 1 (= π²/8)
        1.051_799_790_264_645_0, // d = 2
        1.522_017_047_406_288_0, // d = 3
    ];

    /// Series route: C_d = 2^{1−d}·d!·Σ_{k≥0} (2k+1)^{−(d+1)}.
    fn c_d_series(d: u32) -> f64 {
        let factorial = (1..=d as u64).product::<u64>() as f64;
        let mut sum = 0.0;
        // partial sum plus the integral tail correction
        let n = 2_000_000u64;
        for k in 0..n {
            sum += 1.0 / ((2 * k + 1) as f64).powi(d as i32 + 1);
        }
        let tail = 1.0 / (2.0 * d as f64 * (2.0 * n as f64).powi(d as i32));
        2f64.powi(1 - d as i32) * factorial * (sum + tail)
    }

    #[test]
    fn golden_constants_two_routes() {
        for d in 1..=3u32 {
            let frozen = C_D[d as usize - 1];
            let series = c_d_series(d);
            let spec = QuadratureSpec::to_infinity(0.0).with_rel_tol(1e-11);
            let quad = integrate(|x| rel_sampling_integrand(x, 1.0 / (2.0 * K_B), d), &spec)
                .unwrap()
                .value;
            assert!(
                ((series - frozen) / frozen).abs() < 1e-8,
                "d={d} series {series} vs frozen {frozen}"
            );
            assert!(
                ((quad - frozen) / frozen).abs() < 1e-8,
                "d={d} quadrature {quad} vs frozen {frozen}"
            );
        }
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(unit_sphere_area(0), 2.0);
        assert!((unit_sphere_area(1) - std::f64::consts::TAU).abs() < 1e-15);
        assert!((unit_sphere_area(2) - 4.0 * std::f64::consts::PI).abs() < 1e-15);
        // Γ-based fallback: S_3 = 2π²
        assert!((unit_sphere_area(3) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-6);
    }

    #[test]
    fn tau_min_power_law_scaling() {
        // E ≫ k_BT: coth → 1, rate ratio τ⁻¹(2E)/τ⁻¹(E) → 2^d
        for d in 1..=3u32 {
            let k = RelaxKernelParams::sin_film(d);
            let t = 0.1;
            let e = 50.0 * K_B * t * 2.0;
            let ratio = tau_min_inv(2.0 * e, t, &k) / tau_min_inv(e, t, &k);
            assert!(
                (ratio / 2f64.powi(d as i32) - 1.0).abs() < 1e-10,
                "d={d}: {ratio}"
            );
        }
    }

    #[test]
    fn tau_min_small_energy_limit() {
        // E ≪ k_BT: coth → 2k_BT/E, so τ⁻¹ ∝ E^{d−1}·T
        let d = 2;
        let k = RelaxKernelParams::sin_film(d);
        let t = 0.5;
        let e = 1e-6 * K_B * t;
        let r1 = tau_min_inv(e, t, &k);
        let r2 = tau_min_inv(2.0 * e, t, &k);
        assert!((r2 / r1 / 2.0 - 1.0).abs() < 1e-5, "E-scaling {}", r2 / r1);
        let rt = tau_min_inv(e, 2.0 * t, &k);
        assert!((rt / r1 / 2.0 - 1.0).abs() < 1e-5, "T-scaling {}", rt / r1);
    }

    #[test]
    fn tau_min_against_series_coth_oracle() {
        // independent high-precision coth: (e^{2x}+1)/(e^{2x}−1) with an
        // explicit small-x continued-fraction-style series
        fn coth_oracle(x: f64) -> f64 {
            if x < 0.05 {
                let x2 = x * x;
                (1.0 / x) * (1.0 + x2 / 3.0 - x2 * x2 / 45.0 + 2.0 * x2 * x2 * x2 / 945.0)
            } else if x > 20.0 {
                1.0 + 2.0 * (-2.0 * x).exp()
            } else {
                let e = (2.0 * x).exp();
                (e + 1.0) / (e - 1.0)
            }
        }
        let k = RelaxKernelParams::sin_film(2);
        let t = 0.5;
        for i in 0..60 {
            let e = 10f64.powf(-27.0 + 8.0 * i as f64 / 59.0);
            let got = tau_min_inv(e, t, &k);
            let want = k.rate_prefactor() * e * e * coth_oracle(e / (2.0 * K_B * t));
            assert!(
                ((got - want) / want).abs() < 1e-10,
                "E = {e:e}: {got:e} vs {want:e}"
            );
        }
    }

    /// Closed-form low-temperature limit (oracle for the full integral):
    /// scale·(4/(3ω0))·R_d·(2k_BT)^d·C_d.
    pub(crate) fn c5_low_t_oracle(t: f64, f0: f64, k: &RelaxKernelParams) -> f64 {
        let w0 = std::f64::consts::TAU * f0;
        4.0 / (3.0 * w0) * k.rate_prefactor() * (2.0 * K_B * t).powi(k.d as i32)
            * C_D[k.d as usize - 1]
    }

    #[test]
    fn full_integral_matches_low_t_power_law() {
        let k = RelaxKernelParams::sin_film(2);
        for &t in &[0.05, 0.1, 0.2, 0.35, 0.5] {
            let full = q_rel_inv_full(t, 6.0e9, 1.0, &k).unwrap();
            let c5 = c5_low_t_oracle(t, 6.0e9, &k);
            assert!(
                (full / c5 - 1.0).abs() < 0.01,
                "T = {t}: full {full:e} vs C5 {c5:e} (ratio {})",
                full / c5
            );
        }
    }

    #[test]
    fn full_integral_saturates_fast_relaxation() {
        // force ω0·τmin ≪ 1 by scaling the elastic dipole up; the loss then
        // saturates to scale·π independent of temperature
        let mut k = RelaxKernelParams::sin_film(2);
        k.gamma_bar_joule *= 1e4;
        for &t in &[0.3, 0.5, 1.0] {
            let full = q_rel_inv_full(t, 6.0e9, 1.0, &k).unwrap();
            assert!(
                (full / std::f64::consts::PI - 1.0).abs() < 0.01,
                "T = {t}: {full} vs π"
            );
        }
    }

    #[test]
    fn full_integral_log_slope_matches_dimension() {
        for d in 1..=3u32 {
            let k = RelaxKernelParams::sin_film(d);
            let (t1, t2) = (0.08, 0.25);
            let q1 = q_rel_inv_full(t1, 6.0e9, 1.0, &k).unwrap();
            let q2 = q_rel_inv_full(t2, 6.0e9, 1.0, &k).unwrap();
            let slope = (q2 / q1).ln() / (t2 / t1 as f64).ln();
            assert!(
                (slope - d as f64).abs() < 0.05,
                "d = {d}: slope {slope}"
            );
        }
    }

    #[test]
    fn full_integral_monotone_in_temperature() {
        let k = RelaxKernelParams::sin_film(2);
        let mut prev = 0.0;
        for i in 0..30 {
            let t = 0.01 * (200.0f64).powf(i as f64 / 29.0);
            let q = q_rel_inv_full(t, 6.0e9, 1.0, &k).unwrap();
            assert!(q >= prev, "not monotone at T = {t}");
            prev = q;
        }
    }

    #[test]
    fn shift_integral_sign_and_monotonicity() {
        let k = RelaxKernelParams::sin_film(2);
        assert_eq!(dfrac_rel(0.5, 6.0e9, 0.0, &k).unwrap(), 0.0);
        let mut prev_mag = 0.0;
        for i in 0..20 {
            let t = 0.01 * (200.0f64).powf(i as f64 / 19.0);
            let v = dfrac_rel(t, 6.0e9, 1e-5, &k).unwrap();
            assert!(v <= 0.0, "red shift violated at T = {t}: {v}");
            assert!(v.abs() >= prev_mag, "magnitude not increasing at T = {t}");
            prev_mag = v.abs();
        }
    }

    #[test]
    fn shift_integral_against_brute_force_grid() {
        // independent oracle: tensor Simpson on the θ-substituted inner
        // integral (τ = τmin/sin²θ) and a uniform ξ grid
        let k = RelaxKernelParams::sin_film(2);
        let t = 1.0;
        let f0 = 6.0e9;
        let w0 = std::f64::consts::TAU * f0;
        let kt2 = 2.0 * K_B * t;

        let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| -> f64 {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        let inner = |m: f64| -> f64 {
            simpson(
                &|th: f64| {
                    let s = th.sin();
                    2.0 * s.powi(3) * th.cos().powi(2) / (s.powi(4) + m * m)
                },
                0.0,
                std::f64::consts::FRAC_PI_2,
                2000,
            )
        };
        let outer = simpson(
            &|xi: f64| {
                if xi <= 1e-12 {
                    return 0.0;
                }
                let e = kt2 * xi;
                let m = w0 / tau_min_inv(e, t, &k);
                let sech = 1.0 / xi.cosh();
                sech * sech * inner(m)
            },
            0.0,
            XI_MAX,
            4000,
        );
        let scale = 1e-5;
        let oracle = -scale * 2.0 * outer;
        let got = dfrac_rel(t, f0, scale, &k).unwrap();
        assert!(
            ((got - oracle) / oracle).abs() < 1e-6,
            "got {got:e} oracle {oracle:e}"
        );
    }

    #[test]
    fn sampling_integrand_peak_and_width() {
        let t = 0.5;
        let kt2 = 2.0 * K_B * t;
        // dense grid argmax
        let mut best = (0.0, 0.0);
        for i in 1..4000 {
            let e = kt2 * 5.0 * i as f64 / 4000.0;
            let v = rel_sampling_integrand(e, t, 2);
            if v > best.1 {
                best = (e, v);
            }
        }
        // ξ* solves ξ·coth(2ξ) = 1; frozen value self-validates
        let xi_star = 0.957_504_024_077_268_7;
        assert!((xi_star * coth_stable(2.0 * xi_star) - 1.0).abs() < 1e-12);
        assert!(
            (best.0 / (kt2 * xi_star) - 1.0).abs() < 0.1,
            "argmax {} vs {}",
            best.0,
            kt2 * xi_star
        );
        // FWHM ≈ 1.7 × 2k_BT within 10%
        let half = best.1 / 2.0;
        let mut lo = 0.0;
        let mut hi = 0.0;
        for i in 1..40_000 {
            let e = kt2 * 5.0 * i as f64 / 40_000.0;
            let v = rel_sampling_integrand(e, t, 2);
            if lo == 0.0 && v >= half {
                lo = e;
            }
            if lo > 0.0 && v >= half {
                hi = e;
            }
        }
        let fwhm = (hi - lo) / kt2;
        assert!((fwhm / 1.7 - 1.0).abs() < 0.1, "FWHM {fwhm} × 2k_BT");
    }

    #[test]
    fn sampling_integrand_scale_invariance() {
        let e = 3.0 * K_B;
        let v1 = rel_sampling_integrand(e, 1.0, 2);
        let v2 = rel_sampling_integrand(2.0 * e, 2.0, 2);
        assert_eq!(v1.to_bits(), v2.to_bits());
    }
}
