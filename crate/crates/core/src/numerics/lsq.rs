//! Damped (Levenberg-style) Gauss–Newton least squares for small, smooth
//! problems.

use super::{NumericsError, Result};

/// A nonlinear least-squares problem. The residual function maps the full
/// parameter vector to a residual vector; optional weights w_i multiply the
/// squared residuals (w_i = 1/σ_i² gives the usual chi-square).
pub struct FitProblem<'a> {
    residual_fn: Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>,
    jacobian_fn: Option<Box<dyn Fn(&[f64]) -> Vec<Vec<f64>> + 'a>>,
    initial_params: Vec<f64>,
    bounds: Option<Vec<(f64, f64)>>,
    weights: Option<Vec<f64>>,
    frozen_mask: Vec<bool>,
    max_iterations: usize,
}

impl<'a> FitProblem<'a> {
    pub fn new<F>(initial_params: Vec<f64>, residual_fn: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + 'a,
    {
        let n = initial_params.len();
        Self {
            residual_fn: Box::new(residual_fn),
            jacobian_fn: None,
            initial_params,
            bounds: None,
            weights: None,
            frozen_mask: vec![false; n],
            max_iterations: 200,
        }
    }

    /// Per-parameter (lower, upper) bounds; use ±INFINITY for one-sided.
    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Strictly positive per-residual weights (w_i = 1/σ_i²).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = Some(weights);
        self
    }

    /// Parameters marked `true` stay fixed at their initial values.
    pub fn with_frozen(mut self, frozen_mask: Vec<bool>) -> Self {
        self.frozen_mask = frozen_mask;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    /// Analytic Jacobian rows (one per residual), full parameter width.
    pub fn with_jacobian<J>(mut self, jacobian_fn: J) -> Self
    where
        J: Fn(&[f64]) -> Vec<Vec<f64>> + 'a,
    {
        self.jacobian_fn = Some(Box::new(jacobian_fn));
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.initial_params.len();
        if n == 0 {
            return Err(NumericsError::InvalidFit("no parameters".into()));
        }
        if self.frozen_mask.len() != n {
            return Err(NumericsError::InvalidFit(format!(
                "frozen mask length {} != parameter count {n}",
                self.frozen_mask.len()
            )));
        }
        if let Some(bounds) = &self.bounds {
            if bounds.len() != n {
                return Err(NumericsError::InvalidFit("bounds length mismatch".into()));
            }
            for (j, ((lo, hi), p)) in bounds.iter().zip(&self.initial_params).enumerate() {
                if !(lo <= hi) {
                    return Err(NumericsError::InvalidFit(format!(
                        "bounds for parameter {j} are inverted"
                    )));
                }
                if p < lo || p > hi {
                    return Err(NumericsError::InvalidFit(format!(
                        "initial parameter {j} = {p} outside bounds [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of [`nlls_fit`]. `covariance` is over the free parameters only,
/// in `free_indices` order; [`FitResult::sigmas`] expands the 1σ values back
/// to full parameter length (zero for frozen entries).
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub degenerate: bool,
    pub free_indices: Vec<usize>,
}

impl FitResult {
    /// 1σ uncertainties, square roots of the covariance diagonal, expanded
    /// to the full parameter vector (frozen parameters get 0).
    pub fn sigmas(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.params.len()];
        for (k, &j) in self.free_indices.iter().enumerate() {
            out[j] = self.covariance[k][k].max(0.0).sqrt();
        }
        out
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix (in place,
/// lower triangle). Returns false if the matrix is not positive definite.
fn cholesky(a: &mut [Vec<f64>]) -> bool {
    let n = a.len();
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
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
    true
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Inverse of an SPD matrix via its Cholesky factor.
fn spd_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l: Vec<Vec<f64>> = a.to_vec();
    if !cholesky(&mut l) {
        return None;
    }
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    // symmetrize against roundoff
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = m;
            inv[j][i] = m;
        }
    }
    Some(inv)
}

const CONVERGENCE_TOL: f64 = 1e-10;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e14;
const LAMBDA_MIN: f64 = 1e-14;

/// Damped Gauss–Newton descent with a Levenberg damping parameter updated
/// multiplicatively (×10 on a rejected step, ÷10 on an accepted one). An
/// accepted step never increases the weighted residual norm. The Jacobian
/// comes from forward finite differences with step √ε·max(|p|, 1) unless an
/// analytic Jacobian was supplied. Converges when both the relative step and
/// the relative residual change fall below 1e-10, or stops at the iteration
/// cap with `converged = false`.
///
/// Singular normal equations are reported through the `degenerate` flag on
/// the result rather than an error; the covariance is then zero and must be
/// treated as unreliable.
pub fn nlls_fit(problem: &FitProblem) -> Result<FitResult> {
    problem.validate()?;

    let n = problem.initial_params.len();
    let free: Vec<usize> = (0..n).filter(|&j| !problem.frozen_mask[j]).collect();
    if free.is_empty() {
        return Err(NumericsError::InvalidFit("all parameters frozen".into()));
    }
    let nf = free.len();

    let mut params = problem.initial_params.clone();
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let mut r = (problem.residual_fn)(p);
        if let Some(w) = &problem.weights {
            if w.len() != r.len() {
                return Err(NumericsError::InvalidFit(format!(
                    "weights length {} != residual length {}",
                    w.len(),
                    r.len()
                )));
            }
            for (ri, wi) in r.iter_mut().zip(w) {
                if !(*wi > 0.0) {
                    return Err(NumericsError::InvalidFit(
                        "weights must be strictly positive".into(),
                    ));
                }
                *ri *= wi.sqrt();
            }
        }
        Ok(r)
    };

    let mut r = residuals(&params)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::InvalidFit(
            "residuals not finite at the initial point".into(),
        ));
    }
    let m = r.len();
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    // On zero-residual problems the cost bottoms out at machine noise and
    // its *relative* change stays O(1) forever; below this floor a
    // sub-tolerance step counts as converged.
    let r0_scale = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cost_floor = m as f64 * (1e-13 * r0_scale).powi(2);

    let clamp = |p: &mut [f64]| {
        if let Some(bounds) = &problem.bounds {
            for (v, (lo, hi)) in p.iter_mut().zip(bounds) {
                *v = v.clamp(*lo, *hi);
            }
        }
    };

    // Jacobian of the weighted residuals w.r.t. the free parameters.
    let jacobian = |p: &[f64], r0: &[f64]| -> Result<Vec<Vec<f64>>> {
        if let Some(jf) = &problem.jacobian_fn {
            let full = jf(p);
            let w = problem.weights.as_deref();
            let mut j = vec![vec![0.0; nf]; m];
            for (i, row) in full.iter().enumerate().take(m) {
                let s = w.map_or(1.0, |w| w[i].sqrt());
                for (k, &fj) in free.iter().enumerate() {
                    j[i][k] = row[fj] * s;
                }
            }
            return Ok(j);
        }
        let mut j = vec![vec![0.0; nf]; m];
        let mut pp = p.to_vec();
        for (k, &fj) in free.iter().enumerate() {
            let step = f64::EPSILON.sqrt() * pp[fj].abs().max(1.0);
            let saved = pp[fj];
            pp[fj] = saved + step;
            let r1 = residuals(&pp)?;
            pp[fj] = saved;
            let inv = 1.0 / step;
            for i in 0..m {
                j[i][k] = (r1[i] - r0[i]) * inv;
            }
        }
        Ok(j)
    };

    let mut lambda = LAMBDA_INIT;
    let mut iterations = 0usize;
    let mut converged = cost == 0.0;
    let mut degenerate = false;
    let mut jtj_at_solution: Option<Vec<Vec<f64>>> = None;

    while !converged && iterations < problem.max_iterations {
        iterations += 1;
        let j = jacobian(&params, &r)?;

        // normal equations on the free parameters
        let mut jtj = vec![vec![0.0; nf]; nf];
        let mut jtr = vec![0.0; nf];
        for i in 0..m {
            for a in 0..nf {
                jtr[a] += j[i][a] * r[i];
                for b in a..nf {
                    jtj[a][b] += j[i][a] * j[i][b];
                }
            }
        }
        for a in 0..nf {
            for b in 0..a {
                jtj[a][b] = jtj[b][a];
            }
        }
        jtj_at_solution = Some(jtj.clone());

        // Cost induced by one-ULP parameter wiggles: below this level the
        // parameters cannot be refined further in f64, whatever the
        // relative residual change looks like.
        let quant_floor: f64 = (0..nf)
            .map(|a| {
                let ulp_step = 4.0 * f64::EPSILON * params[free[a]].abs().max(1.0);
                jtj[a][a] * ulp_step * ulp_step
            })
            .sum();
        let floor = cost_floor.max(quant_floor);

        let mut stepped = false;
        while lambda <= LAMBDA_MAX {
            // Levenberg damping on the Gram diagonal keeps the step
            // well-scaled across parameters of very different magnitude.
            let mut damped = jtj.clone();
            for a in 0..nf {
                let d = jtj[a][a];
                damped[a][a] = d + lambda * d.max(f64::MIN_POSITIVE);
            }
            let mut l = damped;
            if !cholesky(&mut l) {
                lambda *= 10.0;
                continue;
            }
            let neg_step = cholesky_solve(&l, &jtr);
            let mut trial = params.clone();
            for (k, &fj) in free.iter().enumerate() {
                trial[fj] -= neg_step[k];
            }
            clamp(&mut trial);
            let r_trial = residuals(&trial)?;
            let cost_trial: f64 = r_trial.iter().map(|v| v * v).sum();
            if cost_trial.is_finite() && cost_trial <= cost {
                let rel_step = free
                    .iter()
                    .enumerate()
                    .map(|(k, &fj)| neg_step[k].abs() / params[fj].abs().max(1.0))
                    .fold(0.0f64, f64::max);
                let rel_change = (cost - cost_trial) / cost.max(f64::MIN_POSITIVE);
                params = trial;
                r = r_trial;
                cost = cost_trial;
                lambda = (lambda / 10.0).max(LAMBDA_MIN);
                stepped = true;
                if rel_step < CONVERGENCE_TOL && (rel_change < CONVERGENCE_TOL || cost <= floor) {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            if cost <= floor {
                converged = true;
            }
            // no acceptable step at maximum damping: either converged at a
            // flat/degenerate point or genuinely stuck
            if !converged {
                degenerate = true;
            }
            break;
        }
        if cost == 0.0 {
            converged = true;
        }
    }

    // covariance from the Gram matrix at the solution scaled by the
    // residual variance
    let dof = m.saturating_sub(nf).max(1) as f64;
    let s2 = cost / dof;
    let covariance = match jtj_at_solution.as_ref().and_then(|a| spd_inverse(a)) {
        Some(inv) => inv
            .into_iter()
            .map(|row| row.into_iter().map(|v| v * s2).collect())
            .collect(),
        None => {
            degenerate = true;
            vec![vec![0.0; nf]; nf]
        }
    };

    Ok(FitResult {
        params,
        covariance,
        residual_norm: cost.sqrt(),
        converged,
        iterations,
        degenerate,
        free_indices: free,
    })
}
