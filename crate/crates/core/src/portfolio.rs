//! Weight and share rules for market, equal-weighted, CES-weighted, and
//! dispersion-generated strategies.
//!
//! Shares are in market-normalized units: the market portfolio holds one
//! share of each asset, so the market value is `V_m = Σpᵢ` and the relative
//! price of an asset equals `θᵢ = pᵢ/V_m`. A strategy generated by a
//! dispersion measure `F < 0` holds
//!
//! ```text
//! sᵢ = (V_s/V_m) · (1 + (Fᵢ(θ) − Σθⱼ Fⱼ(θ)) / F(θ))          (multiplicative)
//! sᵢ = Σθⱼ Fⱼ(θ) − Fᵢ(θ) + V_s/V_m                           (additive)
//! ```
//!
//! Both rules are invariant under a constant shift of the gradient, which is
//! what makes the tangent-projected derivatives of custom measures (see
//! [`crate::dispersion`]) interchangeable with the raw ones here. For the
//! negative geometric mean the multiplicative rule collapses to the
//! equal-weighted portfolio `sᵢ = (V_s/V_m)/(Nθᵢ)`; for the negative CES
//! measure it collapses to the CES-weighted portfolio with weights
//! `θᵢ^γ/Σθⱼ^γ`.

use crate::dispersion::{CesParameter, DispersionMeasure};
use crate::error::Error;
use crate::simplex::RelativePriceVector;
use crate::Result;

/// Tolerance on |Σwᵢ − 1| accepted for portfolio weights.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Portfolio weights: one entry per asset, summing to one. Negative entries
/// are representable (short positions from non-standard measures) but the
/// built-in strategy rules only produce non-negative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    /// Validates that the entries are finite and sum to one within 1e-12.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InsufficientAssets {
                message: "weight vector is empty".to_string(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("portfolio weight".to_string()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!(
                "weights sum to {sum}, not 1 (tolerance {WEIGHT_SUM_TOL})"
            )));
        }
        Ok(Self { weights })
    }

    /// Construction for rules whose algebra guarantees the sum; checked in
    /// debug builds only.
    fn from_rule(weights: Vec<f64>) -> Self {
        debug_assert!(
            (weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "rule produced weights summing to {}",
            weights.iter().sum::<f64>()
        );
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// Share counts in market-normalized units (market = one share of each
/// asset). Shares may legitimately be zero; negative shares are allowed but
/// logged as warnings where a rule produces them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareVector {
    shares: Vec<f64>,
}

impl ShareVector {
    /// Wraps share counts, rejecting non-finite entries.
    pub fn new(shares: Vec<f64>) -> Result<Self> {
        if shares.is_empty() {
            return Err(Error::InsufficientAssets {
                message: "share vector is empty".to_string(),
            });
        }
        if shares.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("share count".to_string()));
        }
        Ok(Self { shares })
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.shares
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.shares
    }

    /// True if any entry is negative.
    pub fn has_negative(&self) -> bool {
        self.shares.iter().any(|&s| s < 0.0)
    }
}

impl AsRef<[f64]> for ShareVector {
    fn as_ref(&self) -> &[f64] {
        &self.shares
    }
}

/// The market portfolio's weights: the relative prices themselves.
pub fn market_weights(theta: &RelativePriceVector) -> WeightVector {
    WeightVector::from_rule(theta.as_slice().to_vec())
}

/// Equal weights `1/N`.
pub fn equal_weights(n: usize) -> Result<WeightVector> {
    if n < 2 {
        return Err(Error::InsufficientAssets {
            message: format!("equal weights need at least 2 assets, got {n}"),
        });
    }
    Ok(WeightVector::from_rule(vec![1.0 / n as f64; n]))
}

/// Share counts of the equal-weighted portfolio at relative value
/// `r = V_s/V_m`:  `sᵢ = r/(Nθᵢ)`.
pub fn equal_shares(theta: &RelativePriceVector, vs_over_vm: f64) -> Result<ShareVector> {
    validate_relative_value(vs_over_vm)?;
    let n = theta.len() as f64;
    ShareVector::new(
        theta
            .as_slice()
            .iter()
            .map(|&t| vs_over_vm / (n * t))
            .collect(),
    )
}

/// CES weights `wᵢ = θᵢ^γ / Σθⱼ^γ`, evaluated as a softmax of `γ·lnθ` so the
/// powers never overflow. For `γ = 1` this returns `θ` itself, exactly.
pub fn ces_weights(theta: &RelativePriceVector, gamma: &CesParameter) -> WeightVector {
    let g = gamma.gamma();
    if g == 1.0 {
        return market_weights(theta);
    }
    let scaled: Vec<f64> = theta.as_slice().iter().map(|t| g * t.ln()).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|a| (a - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    WeightVector::from_rule(exps.iter().map(|e| e / total).collect())
}

/// Share counts of the strategy multiplicatively generated by `measure`:
/// `sᵢ = r·(1 + (Fᵢ − Σθⱼ Fⱼ)/F)` with `r = V_s/V_m`.
///
/// Requires `F(θ) < 0`. Emits a warning if an implied share is negative
/// (possible for exotic custom measures; the built-ins are long-only).
pub fn generated_shares(
    measure: &DispersionMeasure,
    theta: &RelativePriceVector,
    vs_over_vm: f64,
) -> Result<ShareVector> {
    validate_relative_value(vs_over_vm)?;
    let weights = generated_weights(measure, theta)?;
    let shares: Vec<f64> = weights
        .as_slice()
        .iter()
        .zip(theta.as_slice())
        .map(|(&w, &t)| vs_over_vm * w / t)
        .collect();
    let sv = ShareVector::new(shares)?;
    if sv.has_negative() {
        log::warn!(
            "{} implies a negative share at theta = {:?}",
            measure.name(),
            theta.as_slice()
        );
    }
    Ok(sv)
}

/// Weights of the multiplicatively generated strategy:
/// `wᵢ = θᵢ·(1 + Fᵢ/F − Σθⱼ Fⱼ/F)`. Independent of `V_s/V_m`.
pub fn generated_weights(
    measure: &DispersionMeasure,
    theta: &RelativePriceVector,
) -> Result<WeightVector> {
    let ratios = measure.gradient_over_value(theta.as_slice())?;
    let weighted_sum: f64 = theta
        .as_slice()
        .iter()
        .zip(&ratios)
        .map(|(t, g)| t * g)
        .sum();
    let weights: Vec<f64> = theta
        .as_slice()
        .iter()
        .zip(&ratios)
        .map(|(&t, &g)| t * (1.0 + g - weighted_sum))
        .collect();
    WeightVector::new(weights)
}

/// Share counts of the strategy additively generated by `measure`:
/// `sᵢ = Σθⱼ Fⱼ − Fᵢ + r` with `r = V_s/V_m`.
///
/// The implied weights `wᵢ = θᵢ sᵢ/r` sum to one automatically because
/// `Σθᵢ sᵢ = r`. Unlike the multiplicative rule this uses the raw value scale
/// of `F`, so it is meant for measures of order one (the built-ins at
/// moderate γ qualify).
pub fn additive_shares(
    measure: &DispersionMeasure,
    theta: &RelativePriceVector,
    vs_over_vm: f64,
) -> Result<ShareVector> {
    validate_relative_value(vs_over_vm)?;
    let grad = measure.gradient(theta.as_slice())?;
    let weighted_sum: f64 = theta
        .as_slice()
        .iter()
        .zip(&grad)
        .map(|(t, g)| t * g)
        .sum();
    let shares: Vec<f64> = grad.iter().map(|&g| weighted_sum - g + vs_over_vm).collect();
    let sv = ShareVector::new(shares)?;
    if sv.has_negative() {
        log::warn!(
            "additive rule for {} implies a negative share at theta = {:?}",
            measure.name(),
            theta.as_slice()
        );
    }
    Ok(sv)
}

/// Recovers portfolio weights from share counts and prices:
/// `wᵢ = pᵢsᵢ/Σpⱼsⱼ`. Errors when the portfolio value `Σpⱼsⱼ` is not
/// strictly positive.
pub fn weights_from_shares(shares: &ShareVector, prices: &[f64]) -> Result<WeightVector> {
    if shares.len() != prices.len() {
        return Err(Error::Misaligned(format!(
            "{} shares vs {} prices",
            shares.len(),
            prices.len()
        )));
    }
    for (i, &p) in prices.iter().enumerate() {
        if !p.is_finite() || p <= 0.0 {
            return Err(Error::Domain(format!(
                "price[{i}] = {p} must be strictly positive"
            )));
        }
    }
    let values: Vec<f64> = shares
        .as_slice()
        .iter()
        .zip(prices)
        .map(|(s, p)| s * p)
        .collect();
    let total: f64 = values.iter().sum();
    // Negated comparison so a NaN total also takes the error path.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(total > 0.0) {
        return Err(Error::Domain(format!(
            "portfolio value {total} is not positive; weights are undefined"
        )));
    }
    WeightVector::new(values.iter().map(|v| v / total).collect())
}

/// A strategy the backtest engine can run.
#[derive(Debug, Clone)]
pub enum StrategyKind {
    /// Hold the market: weights equal to relative prices, zero turnover.
    Market,
    /// Equal-weighted (the strategy multiplicatively generated by −G, in its
    /// exact closed form).
    Equal,
    /// CES-weighted: `wᵢ ∝ θᵢ^γ` (multiplicatively generated by −U(γ)).
    Ces(CesParameter),
    /// Multiplicatively generated by an arbitrary dispersion measure.
    Generated(DispersionMeasure),
    /// Additively generated by an arbitrary dispersion measure.
    Additive(DispersionMeasure),
}

impl StrategyKind {
    /// Target weights at a rebalance, given relative prices and the current
    /// relative value `r = V_s/V_m` (the additive rule is the only one that
    /// uses `r`).
    pub fn target_weights(
        &self,
        theta: &RelativePriceVector,
        vs_over_vm: f64,
    ) -> Result<WeightVector> {
        match self {
            StrategyKind::Market => Ok(market_weights(theta)),
            StrategyKind::Equal => equal_weights(theta.len()),
            StrategyKind::Ces(gamma) => Ok(ces_weights(theta, gamma)),
            StrategyKind::Generated(m) => generated_weights(m, theta),
            StrategyKind::Additive(m) => {
                validate_relative_value(vs_over_vm)?;
                let shares = additive_shares(m, theta, vs_over_vm)?;
                let weights: Vec<f64> = theta
                    .as_slice()
                    .iter()
                    .zip(shares.as_slice())
                    .map(|(t, s)| t * s / vs_over_vm)
                    .collect();
                WeightVector::new(weights)
            }
        }
    }

    /// The dispersion measure whose decomposition identity this strategy
    /// realizes, together with the identity's form, or `None` for the market.
    pub fn generating_measure(&self) -> Option<(DispersionMeasure, crate::decomposition::DecompositionKind)> {
        use crate::decomposition::DecompositionKind;
        match self {
            StrategyKind::Market => None,
            StrategyKind::Equal => Some((DispersionMeasure::NegGeometricMean, DecompositionKind::Log)),
            StrategyKind::Ces(g) => Some((DispersionMeasure::NegCes(*g), DecompositionKind::Log)),
            StrategyKind::Generated(m) => Some((m.clone(), DecompositionKind::Log)),
            StrategyKind::Additive(m) => Some((m.clone(), DecompositionKind::Additive)),
        }
    }

    /// Stable label for file names and report rows.
    pub fn label(&self) -> String {
        match self {
            StrategyKind::Market => "market".to_string(),
            StrategyKind::Equal => "equal".to_string(),
            StrategyKind::Ces(g) => format!("ces_gamma_{}", g.gamma()),
            StrategyKind::Generated(m) => format!("generated_{}", slug(&m.name())),
            StrategyKind::Additive(m) => match m {
                DispersionMeasure::NegGeometricMean => "additive_geo".to_string(),
                DispersionMeasure::NegCes(g) => format!("additive_ces_gamma_{}", g.gamma()),
                _ => format!("additive_{}", slug(&m.name())),
            },
        }
    }

    /// Parses a CLI-style strategy spec.
    ///
    /// Accepted forms: `market`, `equal`, `ces:gamma=-0.5`, `additive-geo`,
    /// `additive-ces:gamma=-0.5`.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        match spec {
            "market" => return Ok(StrategyKind::Market),
            "equal" => return Ok(StrategyKind::Equal),
            "additive-geo" => {
                return Ok(StrategyKind::Additive(DispersionMeasure::NegGeometricMean))
            }
            _ => {}
        }
        if let Some(rest) = spec.strip_prefix("ces:") {
            return Ok(StrategyKind::Ces(parse_gamma(rest, spec)?));
        }
        if let Some(rest) = spec.strip_prefix("additive-ces:") {
            return Ok(StrategyKind::Additive(DispersionMeasure::NegCes(
                parse_gamma(rest, spec)?,
            )));
        }
        Err(Error::Parameter(format!(
            "unknown strategy '{spec}' (expected market, equal, ces:gamma=G, additive-geo, or additive-ces:gamma=G)"
        )))
    }
}

fn parse_gamma(rest: &str, full: &str) -> Result<CesParameter> {
    let value = rest
        .strip_prefix("gamma=")
        .ok_or_else(|| Error::Parameter(format!("strategy '{full}' needs gamma=<value>")))?;
    let gamma: f64 = value
        .parse()
        .map_err(|_| Error::Parameter(format!("cannot parse gamma '{value}' in '{full}'")))?;
    CesParameter::new(gamma)
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

fn validate_relative_value(vs_over_vm: f64) -> Result<()> {
    if !vs_over_vm.is_finite() || vs_over_vm <= 0.0 {
        return Err(Error::Domain(format!(
            "relative value V_s/V_m = {vs_over_vm} must be strictly positive"
        )));
    }
    Ok(())
}
