//! Property suite: structural invariants of the dispersion measures, the
//! share rules, the panel round trip, and the decomposition identity,
//! exercised over randomized inputs through the public API.

use chrono::NaiveDate;
use proptest::prelude::*;

use dgp_core::decomposition::{decompose, realized_covariation};
use dgp_core::dispersion::{check_dispersion_ordering, DispersionMeasure};
use dgp_core::panel::RawPanel;
use dgp_core::portfolio::{
    additive_shares, ces_weights, equal_weights, generated_weights, weights_from_shares,
    ShareVector,
};
use dgp_core::simplex::RelativePriceVector;
use dgp_core::CesParameter;

/// An interior point of the simplex with 2 to `max_n` coordinates.
fn interior_theta(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(0.05f64..1.0, n).prop_map(|raw| {
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
    })
}

/// A CES exponent bounded away from the excluded value 0, spanning the full
/// admitted range including exponents above 1 (where the negated CES
/// function is no longer convex but weights and derivatives stay defined).
fn gamma() -> impl Strategy<Value = f64> {
    prop_oneof![-3.0f64..-0.05, 0.05f64..3.0]
}

/// A CES exponent in the convex range: the negated CES function is a convex
/// dispersion measure only for exponents ≤ 1 (at exactly 1 it is affine).
/// Convexity-dependent properties (tangent positive semidefiniteness,
/// ordering under concentration) are scoped to this range.
fn convex_gamma() -> impl Strategy<Value = f64> {
    prop_oneof![-3.0f64..-0.05, 0.05f64..1.0]
}

fn measures(g: f64) -> Vec<DispersionMeasure> {
    vec![
        DispersionMeasure::NegGeometricMean,
        DispersionMeasure::neg_ces(g).unwrap(),
    ]
}

proptest! {
    /// Both built-in measures are strictly negative on the open simplex,
    /// invariant under coordinate permutation, and log-finite even at an
    /// exponent of 1e−6 (where the raw value itself overflows f64).
    #[test]
    fn negative_symmetric_and_log_finite(theta in interior_theta(8), g in gamma()) {
        for m in measures(g) {
            let v = m.value(&theta).unwrap();
            prop_assert!(v < 0.0, "{} = {v} should be negative", m.name());

            let mut rotated = theta.clone();
            rotated.rotate_left(1);
            let vr = m.value(&rotated).unwrap();
            prop_assert!((v - vr).abs() <= 1e-12 * v.abs());
        }
        let tiny = DispersionMeasure::neg_ces(1e-6).unwrap();
        let ln_neg = tiny.log_neg_value(&theta).unwrap();
        prop_assert!(ln_neg.is_finite());
    }

    /// The Hessian is positive semidefinite on the simplex tangent space
    /// (for CES exponents in the convex range).
    #[test]
    fn tangent_convexity(
        theta in interior_theta(6),
        dir in proptest::collection::vec(-1.0f64..1.0, 6),
        g in convex_gamma(),
    ) {
        let n = theta.len();
        let mut d: Vec<f64> = dir[..n].to_vec();
        let mean = d.iter().sum::<f64>() / n as f64;
        for x in &mut d {
            *x -= mean;
        }
        let norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-6);
        for m in measures(g) {
            let h = m.hessian(&theta).unwrap();
            let mut q = 0.0;
            let mut scale = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += d[i] * h[i][j] * d[j];
                    scale += (h[i][j] * d[i] * d[j]).abs();
                }
            }
            prop_assert!(
                q >= -1e-10 * scale.max(1.0),
                "{}: tangent quadratic form {q} negative",
                m.name()
            );
        }
    }

    /// The multiplicative share rule recovers the closed-form weights: 1/N
    /// from −G, and the CES softmax from −U(γ).
    #[test]
    fn generated_weight_identities(theta in interior_theta(8), g in gamma()) {
        let n = theta.len();
        let rpv = RelativePriceVector::new(theta.clone()).unwrap();

        let w_geo = generated_weights(&DispersionMeasure::NegGeometricMean, &rpv).unwrap();
        let w_eq = equal_weights(n).unwrap();
        for (a, b) in w_geo.as_slice().iter().zip(w_eq.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }

        let ces = CesParameter::new(g).unwrap();
        let w_gen = generated_weights(&DispersionMeasure::NegCes(ces), &rpv).unwrap();
        let w_ces = ces_weights(&rpv, &ces);
        let mut sum = 0.0;
        for (a, b) in w_gen.as_slice().iter().zip(w_ces.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-10, "γ = {g}: {a} vs {b}");
            prop_assert!(*a > 0.0 && *a < 1.0);
            sum += a;
        }
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    /// The additive rule's budget identity `Σθᵢsᵢ = r` holds for any
    /// starting relative value. Positive exponents below ~0.3 are excluded:
    /// there the CES value grows like N^(1/γ) and the identity drowns in
    /// cancellation noise (the additive rule is meant for measures of order
    /// one). The tolerance scales with the gradient magnitude, which sets
    /// the size of the cancelling terms.
    #[test]
    fn additive_budget_identity(
        theta in interior_theta(8),
        g in prop_oneof![-3.0f64..-0.05, 0.3f64..3.0],
        r in 0.1f64..10.0,
    ) {
        let rpv = RelativePriceVector::new(theta.clone()).unwrap();
        for m in measures(g) {
            let shares = additive_shares(&m, &rpv, r).unwrap();
            let budget: f64 = theta.iter().zip(shares.as_slice()).map(|(t, s)| t * s).sum();
            let gmax = m
                .gradient(&theta)
                .unwrap()
                .iter()
                .fold(0.0f64, |acc, x| acc.max(x.abs()));
            let tol = 1e-13 * (1.0 + r + gmax) * theta.len() as f64;
            prop_assert!(
                (budget - r).abs() <= tol,
                "{}: Σθs = {budget}, want {r} (tol {tol})",
                m.name()
            );
        }
    }

    /// Concentrating mass onto the (unique) largest coordinate never lowers
    /// a dispersion measure; it strictly raises −G.
    #[test]
    fn ordering_under_concentration(
        theta in interior_theta(8),
        frac in 0.05f64..0.95,
        g in convex_gamma(),
    ) {
        let n = theta.len();
        let a = (0..n).max_by(|&i, &j| theta[i].total_cmp(&theta[j])).unwrap();
        let b = (0..n).min_by(|&i, &j| theta[i].total_cmp(&theta[j])).unwrap();
        prop_assume!(a != b && theta[a] - theta[b] > 1e-6);
        let delta = theta[b] * frac;
        let mut concentrated = theta.clone();
        concentrated[a] += delta;
        concentrated[b] -= delta;

        for m in measures(g) {
            let report = check_dispersion_ordering(&m, &concentrated, &theta).unwrap();
            prop_assert!(report.holds, "{}: ordering failed", m.name());
        }
        let geo = check_dispersion_ordering(
            &DispersionMeasure::NegGeometricMean,
            &concentrated,
            &theta,
        )
        .unwrap();
        prop_assert!(geo.value > geo.value_prime, "−G must be strict");
    }

    /// Weights → shares → weights is the identity.
    #[test]
    fn share_weight_round_trip(theta in interior_theta(8), value in 0.5f64..100.0) {
        let n = theta.len();
        let prices: Vec<f64> = theta.iter().map(|t| t * n as f64).collect();
        let weights = equal_weights(n).unwrap();
        let shares: Vec<f64> = weights
            .as_slice()
            .iter()
            .zip(&prices)
            .map(|(w, p)| w * value / p)
            .collect();
        let back = weights_from_shares(&ShareVector::new(shares).unwrap(), &prices).unwrap();
        for (a, b) in back.as_slice().iter().zip(weights.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    /// Panel CSV write → read is lossless (shortest-roundtrip floats).
    #[test]
    fn panel_csv_round_trip(
        n_dates in 2usize..10,
        n_assets in 1usize..4,
        seed_prices in proptest::collection::vec(0.01f64..1000.0, 40),
        day_steps in proptest::collection::vec(1u64..20, 10),
    ) {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let mut dates = Vec::with_capacity(n_dates);
        let mut d = start;
        for k in 0..n_dates {
            dates.push(d);
            d = d + chrono::Days::new(day_steps[k % day_steps.len()]);
        }
        let ids: Vec<String> = (0..n_assets).map(|a| format!("A{a}")).collect();
        let cells: Vec<Vec<Option<f64>>> = (0..n_dates)
            .map(|t| {
                (0..n_assets)
                    .map(|a| Some(seed_prices[(t * n_assets + a) % seed_prices.len()]))
                    .collect()
            })
            .collect();
        let panel = RawPanel::from_parts(dates, ids, cells, 0).unwrap();
        let mut buf = Vec::new();
        panel.write_csv(&mut buf).unwrap();
        let back = RawPanel::from_reader(buf.as_slice(), 0).unwrap();
        prop_assert_eq!(panel, back);
    }

    /// The residual is the abnormal return net of the dispersion change by
    /// construction, bitwise, and the gap is exactly direct − residual.
    #[test]
    fn decomposition_identity_is_by_construction(
        thetas in proptest::collection::vec(interior_theta(4), 3..12),
        growth in proptest::collection::vec(0.9f64..1.1, 12),
    ) {
        let n = thetas[0].len();
        let aligned: Vec<Vec<f64>> = thetas
            .iter()
            .map(|th| {
                if th.len() == n {
                    th.clone()
                } else {
                    let cut: Vec<f64> = th.iter().take(n.min(th.len())).copied().collect();
                    let mut padded = cut;
                    while padded.len() < n {
                        padded.push(0.1);
                    }
                    let s: f64 = padded.iter().sum();
                    padded.iter().map(|x| x / s).collect()
                }
            })
            .collect();
        let t_len = aligned.len();
        let start = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let dates: Vec<NaiveDate> =
            (0..t_len).map(|k| start + chrono::Days::new(k as u64)).collect();
        let mut v_s = vec![1.0];
        let mut v_m = vec![1.0];
        for k in 1..t_len {
            v_s.push(v_s[k - 1] * growth[k % growth.len()]);
            v_m.push(v_m[k - 1] * growth[(k + 3) % growth.len()]);
        }
        let m = DispersionMeasure::NegGeometricMean;
        let series = decompose(&dates, &aligned, &v_s, &v_m, &m).unwrap();
        for k in 0..series.len() {
            prop_assert_eq!(
                series.drift_residual[k],
                series.cum_abnormal[k] - series.dispersion_change[k]
            );
            prop_assert_eq!(
                series.gap[k],
                series.drift_direct[k] - series.drift_residual[k]
            );
        }
        // Realized covariation steps are consistent with the θ path.
        let cov = realized_covariation(&aligned).unwrap();
        prop_assert_eq!(cov.n_steps(), t_len - 1);
        for k in 0..cov.n_steps() {
            let d0 = aligned[k + 1][0] - aligned[k][0];
            prop_assert!((cov.delta(k)[0] - d0).abs() <= 1e-15);
        }
    }
}
