//! Decomposition of a strategy's relative return into a dispersion-change
//! component and a drift component.
//!
//! For a strategy multiplicatively generated by a dispersion measure
//! `F < 0`, the cumulative abnormal log return obeys
//!
//! ```text
//! log(V_s/V_m)(T) − log(V_s/V_m)(0)
//!     = ∫₀ᵀ (−dα_F/F)  +  [log(−F(θ(T))) − log(−F(θ(0)))]
//! ```
//!
//! where `dα_F = ½ ΣᵢⱼFᵢⱼ(θ) d⟨θᵢ,θⱼ⟩` is the drift accumulated through the
//! curvature of `F`. The additive rule satisfies the same identity without
//! logs: `(V_s/V_m)(T) − (V_s/V_m)(0) = ∫dα_F + [(−F(θ(T))) − (−F(θ(0)))]`.
//!
//! Discretely, the drift is estimated two ways:
//!
//! * **residual** — cumulative abnormal return minus the observed dispersion
//!   change (exact by construction at every date), and
//! * **direct** — a running sum of per-step quadratic forms
//!   `½ Δθᵀ H_F(θ_left) Δθ` with the Hessian frozen at the left endpoint.
//!
//! Both series are anchored at zero on the first date. Their difference (the
//! `gap` column) is pure discretization error and shrinks roughly linearly
//! in the step size for per-step-rebalanced strategies; see
//! [`crate::simulator::convergence_study`].

use std::io::Write;

use chrono::NaiveDate;

use crate::dispersion::DispersionMeasure;
use crate::error::Error;
use crate::stats::{mean, sample_std, sample_variance};
use crate::Result;

/// Which form of the decomposition identity a series carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionKind {
    /// Log form: abnormal log returns vs `log(−F)` changes, drift increments
    /// divided by `−F` at the left endpoint.
    Log,
    /// Additive form: value-ratio changes vs `−F` changes, raw drift
    /// increments.
    Additive,
}

/// One step's drift contribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftIncrement {
    /// `½ Δθᵀ H_F(θ_left) Δθ` — non-negative whenever `F` is convex.
    pub alpha: f64,
    /// `α / (−F(θ_left))` — the increment entering the log-form identity.
    pub adjusted: f64,
}

/// Per-step relative-price increments, exposing each rank-one realized
/// covariation matrix `Δθ Δθᵀ` without materializing all of them.
#[derive(Debug, Clone)]
pub struct CovariationSeries {
    deltas: Vec<Vec<f64>>,
}

impl CovariationSeries {
    pub fn n_steps(&self) -> usize {
        self.deltas.len()
    }

    /// The raw increment `Δθ` for step `k`.
    pub fn delta(&self, k: usize) -> &[f64] {
        &self.deltas[k]
    }

    /// The rank-one matrix `Δθ Δθᵀ` for step `k`.
    pub fn step_matrix(&self, k: usize) -> Vec<Vec<f64>> {
        let d = &self.deltas[k];
        d.iter()
            .map(|&a| d.iter().map(|&b| a * b).collect())
            .collect()
    }

    /// The cumulative realized covariation `Σₖ Δθₖ Δθₖᵀ`.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        let n = self.deltas.first().map_or(0, Vec::len);
        let mut acc = vec![vec![0.0; n]; n];
        for d in &self.deltas {
            for i in 0..n {
                for j in 0..n {
                    acc[i][j] += d[i] * d[j];
                }
            }
        }
        acc
    }
}

/// Builds the per-step realized covariation from a relative-price series.
/// All observations must have the same number of assets.
pub fn realized_covariation(thetas: &[Vec<f64>]) -> Result<CovariationSeries> {
    if thetas.len() < 2 {
        return Err(Error::Misaligned(format!(
            "realized covariation needs at least 2 observations, got {}",
            thetas.len()
        )));
    }
    let n = thetas[0].len();
    for (k, th) in thetas.iter().enumerate() {
        if th.len() != n {
            return Err(Error::Misaligned(format!(
                "observation {k} has {} assets, expected {n}",
                th.len()
            )));
        }
        if th.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("relative prices at observation {k}")));
        }
    }
    let deltas = thetas
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
        .collect();
    Ok(CovariationSeries { deltas })
}

/// The quadratic form `½ Δθᵀ H_F(θ) Δθ` with the Hessian at the left
/// endpoint. Non-negative (up to roundoff) whenever `F` is convex, because
/// `Δθ` lies in the simplex tangent space.
pub fn alpha_increment(
    measure: &DispersionMeasure,
    theta_left: &[f64],
    delta: &[f64],
) -> Result<f64> {
    if delta.len() != theta_left.len() {
        return Err(Error::Misaligned(format!(
            "increment has {} entries, theta has {}",
            delta.len(),
            theta_left.len()
        )));
    }
    let h = measure.hessian(theta_left)?;
    let mut q = 0.0;
    for i in 0..delta.len() {
        let mut row = 0.0;
        for j in 0..delta.len() {
            row += h[i][j] * delta[j];
        }
        q += delta[i] * row;
    }
    Ok(0.5 * q)
}

/// One step of the drift estimate: the raw quadratic form `α` and the
/// adjusted increment `α/(−F(θ_left))` used by the log-form identity.
/// Errors if `F(θ_left) ≥ 0` (the division guard; built-in measures are
/// negative on their whole domain).
pub fn drift_increment(
    measure: &DispersionMeasure,
    theta_left: &[f64],
    delta: &[f64],
) -> Result<DriftIncrement> {
    let alpha = alpha_increment(measure, theta_left, delta)?;
    let log_neg_f = measure.log_neg_value(theta_left)?;
    let adjusted = alpha * (-log_neg_f).exp();
    if !adjusted.is_finite() {
        return Err(Error::NonFinite(format!(
            "adjusted drift increment at theta = {theta_left:?}"
        )));
    }
    Ok(DriftIncrement { alpha, adjusted })
}

/// The two-sided drift decomposition of a relative value path.
///
/// All series are aligned with `dates`; `cum_abnormal`, `drift_residual`,
/// `drift_direct`, and `gap` are anchored at zero on the first date.
#[derive(Debug, Clone)]
pub struct DecompositionSeries {
    pub kind: DecompositionKind,
    pub dates: Vec<NaiveDate>,
    /// Log form: `log(V_s/V_m)(t) − log(V_s/V_m)(0)`. Additive form: the
    /// same difference without logs.
    pub cum_abnormal: Vec<f64>,
    /// Pointwise dispersion track: `log(−F(θ_t))` (log form) or `−F(θ_t)`
    /// (additive form), over the asset universe in force at `t`.
    pub dispersion: Vec<f64>,
    /// Dispersion change since the first date, chained across any asset-set
    /// changes so that pure accounting jumps do not enter the identity.
    pub dispersion_change: Vec<f64>,
    /// Drift estimated as a residual: `cum_abnormal − dispersion_change`.
    pub drift_residual: Vec<f64>,
    /// Drift estimated directly: running sum of per-step increments.
    pub drift_direct: Vec<f64>,
    /// `drift_direct − drift_residual`: pure discretization error.
    pub gap: Vec<f64>,
    /// Per-step drift increments (adjusted for the log form, raw `α` for the
    /// additive form); length `dates.len() − 1`.
    pub increments: Vec<f64>,
    /// Per-step raw `α` increments, identical to `increments` in the
    /// additive form.
    pub alpha_increments: Vec<f64>,
}

impl DecompositionSeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Writes the series as delimited text with fixed column names:
    /// `date,cum_abnormal,log_neg_F,drift_residual,drift_direct,gap`
    /// (the dispersion column is named `neg_F` for the additive form).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let disp_name = match self.kind {
            DecompositionKind::Log => "log_neg_F",
            DecompositionKind::Additive => "neg_F",
        };
        wtr.write_record(["date", "cum_abnormal", disp_name, "drift_residual", "drift_direct", "gap"])?;
        for k in 0..self.len() {
            wtr.write_record([
                self.dates[k].format("%Y-%m-%d").to_string(),
                format!("{}", self.cum_abnormal[k]),
                format!("{}", self.dispersion[k]),
                format!("{}", self.drift_residual[k]),
                format!("{}", self.drift_direct[k]),
                format!("{}", self.gap[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Log-form decomposition over a constant asset universe.
///
/// `thetas` are the relative prices on each date, `v_s`/`v_m` the strategy
/// and market values. Requires `F < 0` along the whole path.
pub fn decompose(
    dates: &[NaiveDate],
    thetas: &[Vec<f64>],
    v_s: &[f64],
    v_m: &[f64],
    measure: &DispersionMeasure,
) -> Result<DecompositionSeries> {
    decompose_chained(dates, thetas, &vec![None; thetas.len()], v_s, v_m, measure, DecompositionKind::Log)
}

/// Additive-form decomposition over a constant asset universe.
pub fn additive_decompose(
    dates: &[NaiveDate],
    thetas: &[Vec<f64>],
    v_s: &[f64],
    v_m: &[f64],
    measure: &DispersionMeasure,
) -> Result<DecompositionSeries> {
    decompose_chained(dates, thetas, &vec![None; thetas.len()], v_s, v_m, measure, DecompositionKind::Additive)
}

/// General decomposition, allowing the asset universe to change.
///
/// `theta_pre[k]`, when present, is the relative-price vector at date `k`
/// over the universe in force *up to* date `k` (the universe of
/// `thetas[k−1]`). The step into `k` is then computed entirely on the old
/// universe, and the simultaneous change of `dispersion` from the old to the
/// new universe is chained out of the identity: changing the books must not
/// manufacture drift.
pub fn decompose_chained(
    dates: &[NaiveDate],
    thetas: &[Vec<f64>],
    theta_pre: &[Option<Vec<f64>>],
    v_s: &[f64],
    v_m: &[f64],
    measure: &DispersionMeasure,
    kind: DecompositionKind,
) -> Result<DecompositionSeries> {
    let t_len = dates.len();
    if t_len < 2 {
        return Err(Error::Misaligned(format!(
            "decomposition needs at least 2 dates, got {t_len}"
        )));
    }
    if thetas.len() != t_len || v_s.len() != t_len || v_m.len() != t_len || theta_pre.len() != t_len
    {
        return Err(Error::Misaligned(format!(
            "dates/thetas/values lengths differ: {t_len}/{}/{}/{} (theta_pre {})",
            thetas.len(),
            v_s.len(),
            v_m.len(),
            theta_pre.len()
        )));
    }
    for k in 0..t_len {
        if !(v_s[k] > 0.0 && v_s[k].is_finite() && v_m[k] > 0.0 && v_m[k].is_finite()) {
            return Err(Error::Domain(format!(
                "values must be strictly positive; V_s = {}, V_m = {} on {}",
                v_s[k], v_m[k], dates[k]
            )));
        }
        if theta_pre[k].is_some() {
            if k == 0 {
                return Err(Error::Misaligned(
                    "theta_pre has no meaning on the first date".to_string(),
                ));
            }
            if theta_pre[k].as_ref().unwrap().len() != thetas[k - 1].len() {
                return Err(Error::Misaligned(format!(
                    "theta_pre at date {k} must match the previous universe size {}",
                    thetas[k - 1].len()
                )));
            }
        } else if k > 0 && thetas[k].len() != thetas[k - 1].len() {
            return Err(Error::Misaligned(format!(
                "universe size changed at date {k} without a theta_pre restatement"
            )));
        }
    }

    // Dispersion track: pointwise values and a value restated on the old
    // universe wherever the universe changes.
    let track = |theta: &[f64]| -> Result<f64> {
        match kind {
            DecompositionKind::Log => measure.log_neg_value(theta),
            DecompositionKind::Additive => {
                let v = measure.value(theta)?;
                if v >= 0.0 {
                    return Err(Error::Domain(format!(
                        "{} must be negative along the path; got {v}",
                        measure.name()
                    )));
                }
                Ok(-v)
            }
        }
    };

    let mut dispersion = Vec::with_capacity(t_len);
    for th in thetas {
        dispersion.push(track(th)?);
    }

    let abnormal = |k: usize| -> f64 {
        match kind {
            DecompositionKind::Log => (v_s[k] / v_m[k]).ln(),
            DecompositionKind::Additive => v_s[k] / v_m[k],
        }
    };
    let abn0 = abnormal(0);

    let mut cum_abnormal = Vec::with_capacity(t_len);
    let mut dispersion_change = Vec::with_capacity(t_len);
    let mut drift_residual = Vec::with_capacity(t_len);
    let mut drift_direct = Vec::with_capacity(t_len);
    let mut gap = Vec::with_capacity(t_len);
    let mut increments = Vec::with_capacity(t_len - 1);
    let mut alpha_increments = Vec::with_capacity(t_len - 1);

    cum_abnormal.push(0.0);
    dispersion_change.push(0.0);
    drift_residual.push(0.0);
    drift_direct.push(0.0);
    gap.push(0.0);

    // Accumulated dispersion jump caused purely by universe restatements.
    let mut chain_offset = 0.0;
    let mut direct = 0.0;

    for k in 1..t_len {
        let (theta_end, end_track) = match &theta_pre[k] {
            Some(pre) => {
                let pre_track = track(pre)?;
                chain_offset += dispersion[k] - pre_track;
                (pre.as_slice(), pre_track)
            }
            None => (thetas[k].as_slice(), dispersion[k]),
        };
        let _ = end_track;

        let theta_start = thetas[k - 1].as_slice();
        let delta: Vec<f64> = theta_end
            .iter()
            .zip(theta_start)
            .map(|(b, a)| b - a)
            .collect();
        let inc = drift_increment(measure, theta_start, &delta)?;
        let step = match kind {
            DecompositionKind::Log => inc.adjusted,
            DecompositionKind::Additive => inc.alpha,
        };
        direct += step;
        increments.push(step);
        alpha_increments.push(inc.alpha);

        cum_abnormal.push(abnormal(k) - abn0);
        dispersion_change.push(dispersion[k] - dispersion[0] - chain_offset);
        drift_residual.push(cum_abnormal[k] - dispersion_change[k]);
        drift_direct.push(direct);
        gap.push(drift_direct[k] - drift_residual[k]);
    }

    Ok(DecompositionSeries {
        kind,
        dates: dates.to_vec(),
        cum_abnormal,
        dispersion,
        dispersion_change,
        drift_residual,
        drift_direct,
        gap,
        increments,
        alpha_increments,
    })
}

/// Variability comparison of the two identity components.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ComponentStats {
    /// Differencing frequency the statistics were computed at.
    pub frequency: String,
    /// Number of changes entering the statistics.
    pub n_changes: usize,
    /// Coefficient of variation of drift-component changes.
    pub drift_cv: f64,
    /// Coefficient of variation of dispersion-component changes.
    pub dispersion_cv: f64,
    pub drift_mean_change: f64,
    pub dispersion_mean_change: f64,
    pub drift_change_variance: f64,
    pub dispersion_change_variance: f64,
    /// Set when the corresponding mean change is exactly zero with positive
    /// spread, making the CV infinite rather than NaN.
    pub drift_cv_infinite: bool,
    pub dispersion_cv_infinite: bool,
}

/// Coefficient of variation `sd(Δx)/|mean(Δx)|` with the degenerate cases
/// pinned down: zero spread gives 0; zero mean with positive spread gives
/// +∞ (flagged by the caller).
fn coefficient_of_variation(changes: &[f64]) -> f64 {
    let sd = sample_std(changes);
    let m = mean(changes);
    if sd == 0.0 {
        0.0
    } else if m == 0.0 {
        f64::INFINITY
    } else {
        sd / m.abs()
    }
}

/// Component statistics over every step of the series.
pub fn component_stats(series: &DecompositionSeries) -> ComponentStats {
    let drift: Vec<f64> = series.drift_residual.windows(2).map(|w| w[1] - w[0]).collect();
    let disp: Vec<f64> = series
        .dispersion_change
        .windows(2)
        .map(|w| w[1] - w[0])
        .collect();
    component_stats_from_changes(&drift, &disp, "per-step")
}

/// Component statistics at month-end frequency: the series is subsampled on
/// the last date of each calendar month before differencing. This is the
/// frequency at which the drift component's regularity is meaningfully
/// contrasted with the dispersion component's noise.
pub fn component_stats_monthly(series: &DecompositionSeries) -> ComponentStats {
    let idx = crate::stats::month_end_indices(&series.dates);
    let drift: Vec<f64> = idx
        .windows(2)
        .map(|w| series.drift_residual[w[1]] - series.drift_residual[w[0]])
        .collect();
    let disp: Vec<f64> = idx
        .windows(2)
        .map(|w| series.dispersion_change[w[1]] - series.dispersion_change[w[0]])
        .collect();
    component_stats_from_changes(&drift, &disp, "monthly")
}

fn component_stats_from_changes(drift: &[f64], disp: &[f64], frequency: &str) -> ComponentStats {
    let drift_cv = coefficient_of_variation(drift);
    let dispersion_cv = coefficient_of_variation(disp);
    ComponentStats {
        frequency: frequency.to_string(),
        n_changes: drift.len(),
        drift_cv,
        dispersion_cv,
        drift_mean_change: mean(drift),
        dispersion_mean_change: mean(disp),
        drift_change_variance: sample_variance(drift),
        dispersion_change_variance: sample_variance(disp),
        drift_cv_infinite: drift_cv.is_infinite(),
        dispersion_cv_infinite: dispersion_cv.is_infinite(),
    }
}
