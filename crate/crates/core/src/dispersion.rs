//! Convex measures of relative-price dispersion.
//!
//! A dispersion measure is a negative, convex, permutation-symmetric, twice
//! continuously differentiable function `F` on the open simplex. The two
//! built-ins are
//!
//! * the negative geometric mean, `F(θ) = −G(θ) = −(∏θᵢ)^(1/N)`, and
//! * the negative CES form, `F(θ) = −U(θ) = −(Σθᵢ^γ)^(1/γ)` for `γ ≠ 0`
//!   (convex on the simplex for `γ ≤ 1`),
//!
//! both evaluated in log space so that extreme `γ` and tiny `θᵢ` stay inside
//! floating-point range. Analytic gradients and Hessians are provided:
//!
//! ```text
//! Gᵢ = G/(Nθᵢ)                Gᵢⱼ = G/(N²θᵢθⱼ) − δᵢⱼ G/(Nθᵢ²)
//! Uᵢ = U^(1−γ) θᵢ^(γ−1)       Uᵢⱼ = (1−γ)[U^(1−2γ)(θᵢθⱼ)^(γ−1) − δᵢⱼ U^(1−γ) θᵢ^(γ−2)]
//! ```
//!
//! Custom measures supply only a value function; derivatives fall back to
//! central finite differences taken along simplex-tangent directions
//! (`eᵢ − 1/N`), so the reported gradient is the tangent projection
//! `∇F − mean(∇F)·1` and the reported Hessian is `P ∇²F P`. Every downstream
//! consumer — share rules and drift quadratic forms — is invariant under
//! that projection.

use std::fmt;
use std::sync::Arc;

use crate::error::Error;
use crate::simplex::project_tangent;
use crate::Result;

/// Step size for finite-difference derivatives of custom measures.
pub const FD_STEP: f64 = 1e-5;

/// Default cap on |γ| for the CES family; beyond it the powers involved
/// overflow double precision long before the math becomes interesting.
pub const DEFAULT_GAMMA_CAP: f64 = 10.0;

/// Exponent of the CES dispersion measure. Guaranteed finite, non-zero, and
/// within the configured cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CesParameter {
    gamma: f64,
}

impl CesParameter {
    /// Validates γ: finite, non-zero, |γ| ≤ 10.
    pub fn new(gamma: f64) -> Result<Self> {
        Self::with_cap(gamma, DEFAULT_GAMMA_CAP)
    }

    /// Validates γ against an explicit cap on |γ|.
    pub fn with_cap(gamma: f64, cap: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::Parameter(format!("CES gamma must be finite, got {gamma}")));
        }
        if gamma == 0.0 {
            return Err(Error::Parameter(
                "CES gamma must be non-zero (the gamma → 0 limit diverges without a 1/N inside the sum)"
                    .to_string(),
            ));
        }
        if gamma.abs() > cap {
            return Err(Error::Parameter(format!(
                "CES gamma {gamma} exceeds the overflow cap |gamma| <= {cap}"
            )));
        }
        if gamma > 1.0 {
            // The CES function is concave only for γ ≤ 1; above that the
            // negated function is not convex, so the ordering and drift
            // non-negativity guarantees do not apply. The weights and
            // derivatives remain well defined, so the parameter is accepted.
            log::warn!(
                "CES gamma {gamma} > 1: the negated CES function is not convex, \
                 so dispersion-ordering and drift non-negativity guarantees do not hold"
            );
        }
        Ok(Self { gamma })
    }

    /// The exponent value.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// A user-supplied dispersion measure: a value function only, named for
/// diagnostics. Derivatives are taken by finite differences.
/// Shareable value function of a custom measure.
type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomMeasure {
    name: String,
    f: ValueFn,
}

impl fmt::Debug for CustomMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMeasure").field("name", &self.name).finish()
    }
}

/// A convex measure of relative-price dispersion. Immutable and cheaply
/// cloneable; safe to share across threads.
#[derive(Debug, Clone)]
pub enum DispersionMeasure {
    /// `F(θ) = −(∏θᵢ)^(1/N)`.
    NegGeometricMean,
    /// `F(θ) = −(Σθᵢ^γ)^(1/γ)`.
    NegCes(CesParameter),
    /// User-supplied value function; derivatives by finite differences.
    Custom(CustomMeasure),
}

impl DispersionMeasure {
    /// The negative CES measure with the given exponent.
    pub fn neg_ces(gamma: f64) -> Result<Self> {
        Ok(DispersionMeasure::NegCes(CesParameter::new(gamma)?))
    }

    /// Wraps a user-supplied value function as a dispersion measure.
    ///
    /// The function must be negative, convex, permutation symmetric, and
    /// twice continuously differentiable on the open simplex; none of this
    /// is checked up front. Use [`DispersionMeasure::convexity_spot_check`]
    /// for a cheap probabilistic sanity check.
    pub fn custom(
        name: impl Into<String>,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        DispersionMeasure::Custom(CustomMeasure {
            name: name.into(),
            f: Arc::new(f),
        })
    }

    /// Short label used in diagnostics and file names.
    pub fn name(&self) -> String {
        match self {
            DispersionMeasure::NegGeometricMean => "neg_geometric_mean".to_string(),
            DispersionMeasure::NegCes(p) => format!("neg_ces(gamma={})", p.gamma()),
            DispersionMeasure::Custom(c) => format!("custom({})", c.name),
        }
    }

    /// Evaluates `F(θ)`.
    ///
    /// The built-ins are defined on the whole positive orthant (the simplex
    /// constraint is not enforced here), which is what allows off-simplex
    /// finite-difference probes in tests. Rejects any `θᵢ ≤ 0`.
    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        validate_positive(theta)?;
        let v = match self {
            DispersionMeasure::NegGeometricMean => -log_geometric_mean(theta).exp(),
            DispersionMeasure::NegCes(p) => {
                if p.gamma() == 1.0 {
                    // Σθᵢ exactly; the log-sum-exp route would round through exp(ln θ).
                    -theta.iter().sum::<f64>()
                } else {
                    -log_ces(theta, p.gamma()).exp()
                }
            }
            DispersionMeasure::Custom(c) => {
                let v = (c.f)(theta);
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "custom measure {} returned {v} at theta = {theta:?}",
                        c.name
                    )));
                }
                v
            }
        };
        Ok(v)
    }

    /// Evaluates `log(−F(θ))` without leaving log space.
    ///
    /// For the CES family this stays finite even when `U` itself overflows
    /// or underflows double precision (tiny |γ| makes `U ≈ N^(1/γ)`).
    /// Errors if `F(θ) ≥ 0`.
    pub fn log_neg_value(&self, theta: &[f64]) -> Result<f64> {
        validate_positive(theta)?;
        match self {
            DispersionMeasure::NegGeometricMean => Ok(log_geometric_mean(theta)),
            DispersionMeasure::NegCes(p) => {
                if p.gamma() == 1.0 {
                    Ok(theta.iter().sum::<f64>().ln())
                } else {
                    Ok(log_ces(theta, p.gamma()))
                }
            }
            DispersionMeasure::Custom(_) => {
                let v = self.value(theta)?;
                if v >= 0.0 {
                    return Err(Error::Domain(format!(
                        "{} is {v} >= 0 at theta = {theta:?}; log(-F) needs F < 0",
                        self.name()
                    )));
                }
                Ok((-v).ln())
            }
        }
    }

    /// The gradient `∇F(θ)`.
    ///
    /// Analytic for the built-ins (unprojected, valid on the positive
    /// orthant); tangent-projected finite differences for custom measures.
    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        validate_positive(theta)?;
        let n = theta.len();
        let g = match self {
            DispersionMeasure::NegGeometricMean => {
                let ln_g = log_geometric_mean(theta);
                theta
                    .iter()
                    .map(|&t| -(ln_g - t.ln()).exp() / n as f64)
                    .collect()
            }
            DispersionMeasure::NegCes(p) => {
                let gamma = p.gamma();
                let ln_u = if gamma == 1.0 {
                    theta.iter().sum::<f64>().ln()
                } else {
                    log_ces(theta, gamma)
                };
                theta
                    .iter()
                    .map(|&t| -((1.0 - gamma) * ln_u + (gamma - 1.0) * t.ln()).exp())
                    .collect()
            }
            DispersionMeasure::Custom(c) => fd_gradient(&*c.f, theta)?,
        };
        ensure_finite_vec(&g, "gradient", theta)?;
        Ok(g)
    }

    /// The Hessian `∇²F(θ)` as a dense row-major matrix.
    ///
    /// Analytic for the built-ins; for custom measures the returned matrix is
    /// the tangent-space restriction `P ∇²F P`, which agrees with the true
    /// Hessian in every quadratic form against directions that stay on the
    /// simplex.
    pub fn hessian(&self, theta: &[f64]) -> Result<Vec<Vec<f64>>> {
        validate_positive(theta)?;
        let n = theta.len();
        let h = match self {
            DispersionMeasure::NegGeometricMean => {
                let ln_g = log_geometric_mean(theta);
                let nf = n as f64;
                let ln_theta: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
                let mut h = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in i..n {
                        // F = −G:  Fᵢⱼ = δᵢⱼ G/(Nθᵢ²) − G/(N²θᵢθⱼ)
                        let cross = -(ln_g - ln_theta[i] - ln_theta[j]).exp() / (nf * nf);
                        let own = if i == j {
                            (ln_g - 2.0 * ln_theta[i]).exp() / nf
                        } else {
                            0.0
                        };
                        h[i][j] = own + cross;
                        h[j][i] = h[i][j];
                    }
                }
                h
            }
            DispersionMeasure::NegCes(p) => {
                let gamma = p.gamma();
                let ln_u = if gamma == 1.0 {
                    theta.iter().sum::<f64>().ln()
                } else {
                    log_ces(theta, gamma)
                };
                let ln_theta: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
                let mut h = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in i..n {
                        // F = −U:  Fᵢⱼ = (1−γ)[δᵢⱼ U^(1−γ)θᵢ^(γ−2) − U^(1−2γ)(θᵢθⱼ)^(γ−1)]
                        let cross =
                            ((1.0 - 2.0 * gamma) * ln_u + (gamma - 1.0) * (ln_theta[i] + ln_theta[j])).exp();
                        let own = if i == j {
                            ((1.0 - gamma) * ln_u + (gamma - 2.0) * ln_theta[i]).exp()
                        } else {
                            0.0
                        };
                        h[i][j] = (1.0 - gamma) * (own - cross);
                        h[j][i] = h[i][j];
                    }
                }
                h
            }
            DispersionMeasure::Custom(c) => fd_hessian(&*c.f, theta)?,
        };
        for row in &h {
            ensure_finite_vec(row, "hessian", theta)?;
        }
        Ok(h)
    }

    /// The ratio `∇F(θ)/F(θ)`, computed without forming either side.
    ///
    /// This is the only combination the multiplicative share rule needs, and
    /// staying in log space keeps it finite for CES exponents whose value
    /// `U = (Σθᵢ^γ)^(1/γ)` overflows double precision (tiny |γ|). Requires
    /// `F(θ) < 0` for custom measures (division guard); the built-ins are
    /// negative everywhere on their domain.
    pub fn gradient_over_value(&self, theta: &[f64]) -> Result<Vec<f64>> {
        validate_positive(theta)?;
        let n = theta.len();
        let ratios = match self {
            DispersionMeasure::NegGeometricMean => {
                // Fᵢ/F = Gᵢ/G = 1/(Nθᵢ)
                theta.iter().map(|&t| 1.0 / (n as f64 * t)).collect()
            }
            DispersionMeasure::NegCes(p) => {
                let gamma = p.gamma();
                // Fᵢ/F = Uᵢ/U = U^(−γ) θᵢ^(γ−1) = exp((γ−1)·lnθᵢ − γ·lnU),
                // with γ·lnU taken straight from the log-sum-exp (no 1/γ).
                let scaled: Vec<f64> = theta.iter().map(|t| gamma * t.ln()).collect();
                let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let gamma_ln_u = m + scaled.iter().map(|a| (a - m).exp()).sum::<f64>().ln();
                theta
                    .iter()
                    .map(|&t| ((gamma - 1.0) * t.ln() - gamma_ln_u).exp())
                    .collect()
            }
            DispersionMeasure::Custom(_) => {
                let f = self.value(theta)?;
                if f == 0.0 {
                    return Err(Error::Domain(format!(
                        "{} vanishes at theta = {theta:?}; the share rule divides by F",
                        self.name()
                    )));
                }
                if f > 0.0 {
                    return Err(Error::Precondition(format!(
                        "{} is positive at theta = {theta:?}; generated strategies need F < 0",
                        self.name()
                    )));
                }
                let grad = self.gradient(theta)?;
                grad.iter().map(|g| g / f).collect::<Vec<f64>>()
            }
        };
        ensure_finite_vec(&ratios, "gradient/value ratio", theta)?;
        Ok(ratios)
    }

    /// Cheap probabilistic convexity check for custom measures: evaluates
    /// the tangent Hessian at `theta` against a handful of deterministic
    /// tangent directions and returns the most negative quadratic form seen.
    ///
    /// Built-in measures are convex by construction (for the CES family,
    /// when γ ≤ 1), so this returns 0 without doing any work for them.
    pub fn convexity_spot_check(&self, theta: &[f64]) -> Result<f64> {
        if !matches!(self, DispersionMeasure::Custom(_)) {
            return Ok(0.0);
        }
        let h = self.hessian(theta)?;
        let n = theta.len();
        let mut worst = 0.0f64;
        // Deterministic tangent probes: coordinate differences and an
        // alternating-sign direction.
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for k in 1..n.min(4) {
            let mut d = vec![0.0; n];
            d[0] = 1.0;
            d[k] = -1.0;
            dirs.push(d);
        }
        let alt: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        dirs.push(project_tangent(&alt));
        for d in &dirs {
            let norm2: f64 = d.iter().map(|x| x * x).sum();
            if norm2 == 0.0 {
                continue;
            }
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += d[i] * h[i][j] * d[j];
                }
            }
            worst = worst.min(q / norm2);
        }
        Ok(worst)
    }

    /// Emits a warning if the custom-measure convexity spot check fails at
    /// `theta`. No-op for built-ins.
    pub fn warn_if_nonconvex_at(&self, theta: &[f64]) {
        if let Ok(worst) = self.convexity_spot_check(theta) {
            if worst < -1e-8 {
                log::warn!(
                    "{} looks non-convex near theta (worst tangent quadratic form {worst:.3e}); \
                     drift non-negativity is not guaranteed",
                    self.name()
                );
            }
        }
    }
}

/// Verdict of a dispersion-ordering comparison (see
/// [`check_dispersion_ordering`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingReport {
    /// `F(θ)` — the more dispersed configuration.
    pub value: f64,
    /// `F(θ′)` — the less dispersed configuration.
    pub value_prime: f64,
    /// Whether `F(θ) ≥ F(θ′)` held.
    pub holds: bool,
}

/// Checks the defining ordering property of a dispersion measure on a valid
/// comparison pair: if `θ` and `θ′` agree in all but at most two coordinates
/// and `max(θ) > max(θ′)`, a dispersion measure must satisfy `F(θ) ≥ F(θ′)`.
///
/// Errors (rather than reporting `holds = false`) when the pair does not
/// satisfy that hypothesis, since the ordering is then simply not a claim the
/// measure makes.
pub fn check_dispersion_ordering(
    measure: &DispersionMeasure,
    theta: &[f64],
    theta_prime: &[f64],
) -> Result<OrderingReport> {
    if theta.len() != theta_prime.len() {
        return Err(Error::Misaligned(format!(
            "comparison pair has lengths {} and {}",
            theta.len(),
            theta_prime.len()
        )));
    }
    let differing = theta
        .iter()
        .zip(theta_prime)
        .filter(|(a, b)| a != b)
        .count();
    if differing > 2 {
        return Err(Error::Precondition(format!(
            "ordering hypothesis needs the pair to agree outside at most two coordinates; \
             {differing} coordinates differ"
        )));
    }
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (m, m_prime) = (max(theta), max(theta_prime));
    // Negated comparison so a NaN maximum also takes the error path.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(m > m_prime) {
        return Err(Error::Precondition(format!(
            "ordering hypothesis needs max(theta) > max(theta'); got {m} vs {m_prime}"
        )));
    }
    let value = measure.value(theta)?;
    let value_prime = measure.value(theta_prime)?;
    Ok(OrderingReport {
        value,
        value_prime,
        holds: value >= value_prime,
    })
}

/// The geometric mean `G(θ) = (∏θᵢ)^(1/N)`, computed in log space.
pub fn geometric_mean(theta: &[f64]) -> Result<f64> {
    validate_positive(theta)?;
    Ok(log_geometric_mean(theta).exp())
}

/// The CES value `U(θ) = (Σθᵢ^γ)^(1/γ)`, computed via log-sum-exp.
pub fn ces_value(theta: &[f64], gamma: &CesParameter) -> Result<f64> {
    validate_positive(theta)?;
    if gamma.gamma() == 1.0 {
        Ok(theta.iter().sum())
    } else {
        Ok(log_ces(theta, gamma.gamma()).exp())
    }
}

/// `log G(θ)` — the mean of the logs.
fn log_geometric_mean(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t.ln()).sum::<f64>() / theta.len() as f64
}

/// `log U(θ, γ)` via log-sum-exp: `(m + log Σ exp(γ·lnθᵢ − m))/γ`.
fn log_ces(theta: &[f64], gamma: f64) -> f64 {
    let scaled: Vec<f64> = theta.iter().map(|t| gamma * t.ln()).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scaled.iter().map(|a| (a - m).exp()).sum();
    (m + sum.ln()) / gamma
}

fn validate_positive(theta: &[f64]) -> Result<()> {
    if theta.len() < 2 {
        return Err(Error::InsufficientAssets {
            message: format!("dispersion measures need at least 2 assets, got {}", theta.len()),
        });
    }
    for (i, &t) in theta.iter().enumerate() {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Domain(format!(
                "theta[{i}] = {t} outside the measure's domain (must be strictly positive)"
            )));
        }
    }
    Ok(())
}

fn ensure_finite_vec(v: &[f64], what: &str, theta: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{what} non-finite at theta = {theta:?}")));
    }
    Ok(())
}

/// Central finite-difference gradient along tangent directions `eᵢ − 1/N`.
/// Approximates the tangent projection `∇F − mean(∇F)·1`.
fn fd_gradient(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), theta: &[f64]) -> Result<Vec<f64>> {
    let n = theta.len();
    let h = FD_STEP;
    let mut grad = vec![0.0; n];
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    for i in 0..n {
        perturb(&mut plus, theta, i, h, n)?;
        perturb(&mut minus, theta, i, -h, n)?;
        grad[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        plus.copy_from_slice(theta);
        minus.copy_from_slice(theta);
    }
    Ok(grad)
}

/// Central finite-difference Hessian along tangent directions; returns the
/// symmetric matrix of difference quotients `dᵢᵀ ∇²F dⱼ` with `dᵢ = eᵢ − 1/N`.
fn fd_hessian(f: &(dyn Fn(&[f64]) -> f64 + Send + Sync), theta: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = theta.len();
    let h = FD_STEP;
    let f0 = f(theta);
    let mut hess = vec![vec![0.0; n]; n];
    let mut probe = theta.to_vec();
    for i in 0..n {
        for j in i..n {
            let q = if i == j {
                perturb(&mut probe, theta, i, 2.0 * h, n)?;
                let fpp = f(&probe);
                perturb(&mut probe, theta, i, -2.0 * h, n)?;
                let fmm = f(&probe);
                (fpp - 2.0 * f0 + fmm) / (4.0 * h * h)
            } else {
                perturb2(&mut probe, theta, i, j, h, h, n)?;
                let fpp = f(&probe);
                perturb2(&mut probe, theta, i, j, h, -h, n)?;
                let fpm = f(&probe);
                perturb2(&mut probe, theta, i, j, -h, h, n)?;
                let fmp = f(&probe);
                perturb2(&mut probe, theta, i, j, -h, -h, n)?;
                let fmm = f(&probe);
                (fpp - fpm - fmp + fmm) / (4.0 * h * h)
            };
            hess[i][j] = q;
            hess[j][i] = q;
        }
    }
    Ok(hess)
}

/// `out = base + s·(eᵢ − 1/N)`, rejecting probes that leave the positive orthant.
fn perturb(out: &mut [f64], base: &[f64], i: usize, s: f64, n: usize) -> Result<()> {
    let shift = s / n as f64;
    for k in 0..n {
        out[k] = base[k] - shift + if k == i { s } else { 0.0 };
        if out[k] <= 0.0 {
            return Err(Error::Domain(format!(
                "finite-difference probe left the positive orthant at theta[{k}] (step {s}); \
                 theta is too close to the simplex boundary"
            )));
        }
    }
    Ok(())
}

/// `out = base + s·(eᵢ − 1/N) + t·(eⱼ − 1/N)`.
fn perturb2(
    out: &mut [f64],
    base: &[f64],
    i: usize,
    j: usize,
    s: f64,
    t: f64,
    n: usize,
) -> Result<()> {
    let shift = (s + t) / n as f64;
    for k in 0..n {
        let mut v = base[k] - shift;
        if k == i {
            v += s;
        }
        if k == j {
            v += t;
        }
        out[k] = v;
        if v <= 0.0 {
            return Err(Error::Domain(format!(
                "finite-difference probe left the positive orthant at theta[{k}]; \
                 theta is too close to the simplex boundary"
            )));
        }
    }
    Ok(())
}
