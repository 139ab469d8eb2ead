//! Polynomial least squares in the monomial basis.

use super::{NumericsError, Result};

/// Evaluate a polynomial with coefficients in ascending order.
pub fn polyval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Least-squares polynomial fit, returning coefficients in ascending order
/// of the original `x` monomials.
///
/// Internally the abscissae are shifted and scaled onto [−1, 1] before the
/// normal equations are formed (raw wavenumber-scale monomials would make
/// the Gram matrix hopelessly ill-conditioned); the coefficients are then
/// composed back onto the original basis.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(NumericsError::InvalidFit(format!(
            "x length {} != y length {}",
            x.len(),
            y.len()
        )));
    }
    if degree + 1 > x.len() {
        return Err(NumericsError::InvalidFit(format!(
            "degree {degree} needs more than {} points",
            x.len()
        )));
    }
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(min.is_finite() && max.is_finite()) {
        return Err(NumericsError::InvalidFit("non-finite abscissa".into()));
    }
    let mid = 0.5 * (min + max);
    let half = if max > min { 0.5 * (max - min) } else { 1.0 };

    let n = degree + 1;
    let mut gram = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    let mut powers = vec![0.0; n];
    for (&xi, &yi) in x.iter().zip(y) {
        let z = (xi - mid) / half;
        let mut p = 1.0;
        for slot in powers.iter_mut() {
            *slot = p;
            p *= z;
        }
        for a in 0..n {
            rhs[a] += powers[a] * yi;
            for b in a..n {
                gram[a][b] += powers[a] * powers[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            gram[a][b] = gram[b][a];
        }
    }

    let z_coeffs = solve_spd(gram, rhs).ok_or(NumericsError::DegenerateSystem {
        context: "polynomial fit (duplicate or degenerate abscissae)",
    })?;

    // compose p(z), z = (x − mid)/half back onto x-monomials:
    // Horner in polynomial arithmetic with the linear factor (s·x + t)
    let s = 1.0 / half;
    let t = -mid / half;
    let mut out = vec![z_coeffs[degree]];
    for k in (0..degree).rev() {
        // out := out·(s·x + t) + c_k
        let mut next = vec![0.0; out.len() + 1];
        for (i, &c) in out.iter().enumerate() {
            next[i] += c * t;
            next[i + 1] += c * s;
        }
        next[0] += z_coeffs[k];
        out = next;
    }
    Ok(out)
}

fn solve_spd(mut a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let n = a.len();
    // Cholesky
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        a[j][j] = d;
        for i in (j + 1)..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i][k] * y[k];
        }
        y[i] = s / a[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= a[k][i] * x[k];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_quadratic() {
        let x: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 - 3.0 * x + 0.5 * x * x).collect();
        let c = polyfit(&x, &y, 2).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-10, "{c:?}");
        assert!((c[1] + 3.0).abs() < 1e-10);
        assert!((c[2] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn degree_zero_is_mean() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [5.0, 5.0, 5.0, 5.0];
        let c = polyfit(&x, &y, 0).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn residual_orthogonality_large_abscissae() {
        // wavenumber-scale x values with a cubic plus structure
        let x: Vec<f64> = (0..120).map(|i| 1000.0 + 25.0 * i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&x| 1e-9 * x * x * x - 2e-6 * x * x + 0.01 * x + (0.002 * x).sin())
            .collect();
        let c = polyfit(&x, &y, 3).unwrap();
        let r: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(&xi, &yi)| yi - polyval(&c, xi))
            .collect();
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..=3usize {
            let basis: Vec<f64> = x.iter().map(|&xi| xi.powi(k as i32)).collect();
            let b_norm = basis.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dot: f64 = r.iter().zip(&basis).map(|(a, b)| a * b).sum();
            assert!(
                (dot / (r_norm * b_norm)).abs() < 1e-9,
                "residual not orthogonal to x^{k}: {}",
                dot / (r_norm * b_norm)
            );
        }
    }

    #[test]
    fn duplicate_abscissae_degenerate() {
        let x = [1.0, 1.0, 1.0];
        let y = [0.0, 1.0, 2.0];
        assert!(matches!(
            polyfit(&x, &y, 1),
            Err(NumericsError::DegenerateSystem { .. })
        ));
    }

    #[test]
    fn degree_exceeding_points_rejected() {
        let x = [1.0, 2.0];
        let y = [1.0, 2.0];
        assert!(polyfit(&x, &y, 2).is_err());
    }

    proptest! {
        #[test]
        fn linear_roundtrip(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
            let y: Vec<f64> = x.iter().map(|x| a * x + b).collect();
            let c = polyfit(&x, &y, 1).unwrap();
            prop_assert!((c[1] - a).abs() < 1e-9);
            prop_assert!((c[0] - b).abs() < 1e-9);
        }
    }
}
