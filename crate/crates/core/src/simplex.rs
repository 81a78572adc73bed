//! Relative prices on the open simplex.
//!
//! A relative-price vector θ lives in Δ = {θ ∈ (0,1)^N : Σθᵢ = 1}. Every
//! dispersion measure and every strategy rule in this crate consumes points
//! of Δ, so the type enforces membership once at the boundary and the math
//! below it can assume a clean domain.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::Error;
use crate::Result;

/// Tolerance on |Σθᵢ − 1| accepted at construction.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// A point on the open simplex: strictly positive entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePriceVector {
    theta: Vec<f64>,
}

impl RelativePriceVector {
    /// Validates `theta` as a point of the open simplex.
    ///
    /// Requires at least two entries, every entry in (0, 1), and
    /// |Σθᵢ − 1| ≤ 1e-12.
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::InsufficientAssets {
                message: format!("relative prices need at least 2 assets, got {}", theta.len()),
            });
        }
        for (i, &t) in theta.iter().enumerate() {
            if !t.is_finite() || t <= 0.0 || t >= 1.0 {
                return Err(Error::Domain(format!(
                    "relative price theta[{i}] = {t} outside the open interval (0, 1)"
                )));
            }
        }
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::Domain(format!(
                "relative prices sum to {sum}, not 1 (tolerance {SIMPLEX_SUM_TOL})"
            )));
        }
        Ok(Self { theta })
    }

    /// Builds the relative-price vector θᵢ = pᵢ / Σpⱼ from positive prices.
    pub fn from_prices(prices: &[f64]) -> Result<Self> {
        if prices.len() < 2 {
            return Err(Error::InsufficientAssets {
                message: format!("relative prices need at least 2 assets, got {}", prices.len()),
            });
        }
        for (i, &p) in prices.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::Domain(format!(
                    "price[{i}] = {p} must be strictly positive and finite"
                )));
            }
        }
        let total: f64 = prices.iter().sum();
        Ok(Self {
            theta: prices.iter().map(|p| p / total).collect(),
        })
    }

    /// Number of assets.
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    /// Always false: construction requires at least two entries.
    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// The entries as a slice.
    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    /// Consumes the vector, returning the raw entries.
    pub fn into_inner(self) -> Vec<f64> {
        self.theta
    }
}

impl AsRef<[f64]> for RelativePriceVector {
    fn as_ref(&self) -> &[f64] {
        &self.theta
    }
}

impl std::ops::Index<usize> for RelativePriceVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.theta[i]
    }
}

/// Draws a uniform point of the open simplex (normalized Exp(1) draws).
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, n: usize) -> RelativePriceVector {
    assert!(n >= 2, "simplex sampling needs n >= 2");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total <= 0.0 {
            continue;
        }
        let theta: Vec<f64> = draws.iter().map(|d| d / total).collect();
        if theta.iter().all(|&t| t > 0.0 && t < 1.0) {
            return RelativePriceVector { theta };
        }
    }
}

/// Draws an interior point with every coordinate at least `floor / n`.
///
/// Mixes a uniform simplex draw with the barycenter:
/// θ = floor·(1/n) + (1 − floor)·uniform. Useful for tests of derivative
/// formulas, which lose accuracy near the simplex boundary.
pub fn sample_interior<R: Rng + ?Sized>(rng: &mut R, n: usize, floor: f64) -> RelativePriceVector {
    assert!((0.0..1.0).contains(&floor), "floor must be in [0, 1)");
    let uniform = sample_uniform(rng, n);
    let theta: Vec<f64> = uniform
        .as_slice()
        .iter()
        .map(|&u| floor / n as f64 + (1.0 - floor) * u)
        .collect();
    RelativePriceVector { theta }
}

/// Projects a direction onto the tangent space {v : Σvᵢ = 0} of the simplex.
pub fn project_tangent(v: &[f64]) -> Vec<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_prices_matches_hand_values() {
        let rp = RelativePriceVector::from_prices(&[1.0, 1.0]).unwrap();
        assert_eq!(rp.as_slice(), &[0.5, 0.5]);

        let rp = RelativePriceVector::from_prices(&[3.0, 1.0]).unwrap();
        assert_eq!(rp.as_slice(), &[0.75, 0.25]);

        let rp = RelativePriceVector::from_prices(&[1.2, 0.8, 1.0]).unwrap();
        let expect = [0.4, 0.266_666_666_666_666_7, 0.333_333_333_333_333_3];
        for (got, want) in rp.as_slice().iter().zip(expect) {
            assert!((got - want).abs() < 1e-4, "got {got}, want {want}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(RelativePriceVector::from_prices(&[1.0]).is_err());
        assert!(RelativePriceVector::from_prices(&[1.0, 0.0]).is_err());
        assert!(RelativePriceVector::from_prices(&[1.0, -2.0]).is_err());
        assert!(RelativePriceVector::new(vec![0.5, 0.6]).is_err());
        assert!(RelativePriceVector::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn sampled_points_live_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 10, 30] {
            for _ in 0..50 {
                let rp = sample_uniform(&mut rng, n);
                let sum: f64 = rp.as_slice().iter().sum();
                assert!((sum - 1.0).abs() <= SIMPLEX_SUM_TOL);
                assert!(rp.as_slice().iter().all(|&t| t > 0.0 && t < 1.0));

                let rp = sample_interior(&mut rng, n, 0.5);
                assert!(rp.as_slice().iter().all(|&t| t >= 0.5 / n as f64));
                let sum: f64 = rp.as_slice().iter().sum();
                assert!((sum - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn tangent_projection_sums_to_zero() {
        let v = project_tangent(&[1.0, 2.0, 4.0]);
        assert!(v.iter().sum::<f64>().abs() < 1e-15);
        assert!((v[0] + 4.0 / 3.0).abs() < 1e-12);
    }
}
