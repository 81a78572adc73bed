//! Synthetic market panels: correlated geometric Brownian motion, an
//! optional mean-reverting pull on relative log prices, and a grid-refinement
//! study for the drift decomposition.
//!
//! Log prices evolve exactly over each step,
//!
//! ```text
//! Δlog pᵢ = (μᵢ − σᵢ²/2)Δt + σᵢ √Δt (Lz)ᵢ   [+ mean-reversion pull]
//! ```
//!
//! with `L` the Cholesky factor of the asset correlation matrix and `z`
//! independent standard normals. Under [`Regime::IidGbm`] the discretization
//! is exact in distribution at every step size. Under
//! [`Regime::MeanRevertingRelative`] an Euler pull
//! `−κ (log pᵢ − mean_j log pⱼ) Δt`, evaluated at the step start, is added;
//! it keeps relative prices stationary while leaving the cross-sectional
//! average trend intact.
//!
//! Dates are cosmetic weekday labels starting 2000-01-03; the time increment
//! is always `1/steps_per_year` years regardless of the label spacing, so
//! calendar-based rebalance schedules line up with real months only when
//! `steps_per_year` is near 252 (use every-step rebalancing otherwise).

use chrono::{Datelike, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::decomposition::DecompositionKind;
use crate::dispersion::DispersionMeasure;
use crate::error::Error;
use crate::panel::{NormalizedPanel, RawPanel};
use crate::portfolio::{additive_shares, generated_shares};
use crate::Result;

/// Minimum admissible `steps_per_year`.
pub const MIN_STEPS_PER_YEAR: usize = 12;

/// First date label of every simulated panel (a Monday).
pub const SIM_START_DATE: &str = "2000-01-03";

/// Price dynamics of the simulated market.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// Independent increments: plain correlated GBM.
    IidGbm,
    /// GBM plus a pull of each log price toward the cross-sectional mean
    /// log price, at rate `kappa ≥ 0` per year.
    MeanRevertingRelative { kappa: f64 },
}

/// Full description of a simulation run. Fields are public; [`simulate`]
/// validates them before use.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_assets: usize,
    /// Horizon in years; `years * steps_per_year` is rounded to whole steps.
    pub years: f64,
    pub steps_per_year: usize,
    /// Per-asset annual drift of log-price growth plus half-variance.
    pub mu: Vec<f64>,
    /// Per-asset annual volatility, each ≥ 0.
    pub sigma: Vec<f64>,
    /// Constant pairwise correlation, used when `correlation` is `None`.
    pub rho: f64,
    /// Optional full correlation matrix (symmetric, unit diagonal,
    /// positive definite); overrides `rho`.
    pub correlation: Option<Vec<Vec<f64>>>,
    pub regime: Regime,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_assets: 10,
            years: 30.0,
            steps_per_year: 252,
            mu: vec![0.05; 10],
            sigma: vec![0.15; 10],
            rho: 0.0,
            correlation: None,
            regime: Regime::IidGbm,
            seed: 42,
        }
    }
}

impl SimConfig {
    /// A config with every asset sharing the same drift and volatility.
    pub fn uniform(
        n_assets: usize,
        years: f64,
        steps_per_year: usize,
        mu: f64,
        sigma: f64,
    ) -> Self {
        SimConfig {
            n_assets,
            years,
            steps_per_year,
            mu: vec![mu; n_assets],
            sigma: vec![sigma; n_assets],
            rho: 0.0,
            correlation: None,
            regime: Regime::IidGbm,
            seed: 42,
        }
    }

    /// Spreads per-asset drifts evenly from `lo` to `hi`.
    pub fn with_mu_range(mut self, lo: f64, hi: f64) -> Self {
        let n = self.n_assets;
        self.mu = (0..n)
            .map(|i| {
                if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = regime;
        self
    }

    /// Number of whole steps in the run.
    pub fn total_steps(&self) -> usize {
        (self.years * self.steps_per_year as f64).round() as usize
    }

    /// Step length in years.
    pub fn dt(&self) -> f64 {
        1.0 / self.steps_per_year as f64
    }

    /// Checks every field and returns the Cholesky factor of the effective
    /// correlation matrix (row-major lower triangle).
    pub fn validate(&self) -> Result<Vec<Vec<f64>>> {
        if self.n_assets < 2 {
            return Err(Error::Parameter(format!(
                "simulation needs at least 2 assets, got {}",
                self.n_assets
            )));
        }
        if !(self.years > 0.0 && self.years.is_finite()) {
            return Err(Error::Parameter(format!(
                "years must be positive and finite, got {}",
                self.years
            )));
        }
        if self.steps_per_year < MIN_STEPS_PER_YEAR {
            return Err(Error::Parameter(format!(
                "steps_per_year must be at least {MIN_STEPS_PER_YEAR}, got {}",
                self.steps_per_year
            )));
        }
        if self.total_steps() == 0 {
            return Err(Error::Parameter(
                "horizon rounds to zero steps".to_string(),
            ));
        }
        if self.mu.len() != self.n_assets || self.sigma.len() != self.n_assets {
            return Err(Error::Parameter(format!(
                "mu has {} entries and sigma {}, expected {} each",
                self.mu.len(),
                self.sigma.len(),
                self.n_assets
            )));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Parameter("mu entries must be finite".to_string()));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Parameter(
                "sigma entries must be finite and non-negative".to_string(),
            ));
        }
        if let Regime::MeanRevertingRelative { kappa } = self.regime {
            if !(kappa >= 0.0 && kappa.is_finite()) {
                return Err(Error::Parameter(format!(
                    "mean-reversion rate kappa must be non-negative, got {kappa}"
                )));
            }
        }
        let corr = self.effective_correlation()?;
        cholesky_lower(&corr)
    }

    /// The correlation matrix in force: the explicit matrix if given,
    /// otherwise the constant-`rho` matrix.
    pub fn effective_correlation(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.n_assets;
        match &self.correlation {
            Some(m) => {
                if m.len() != n || m.iter().any(|row| row.len() != n) {
                    return Err(Error::Parameter(format!(
                        "correlation matrix must be {n}×{n}"
                    )));
                }
                for i in 0..n {
                    if (m[i][i] - 1.0).abs() > 1e-12 {
                        return Err(Error::Parameter(
                            "correlation matrix must have a unit diagonal".to_string(),
                        ));
                    }
                    for j in 0..n {
                        if !m[i][j].is_finite() || (m[i][j] - m[j][i]).abs() > 1e-12 {
                            return Err(Error::Parameter(
                                "correlation matrix must be finite and symmetric".to_string(),
                            ));
                        }
                    }
                }
                Ok(m.clone())
            }
            None => {
                if !(self.rho.is_finite() && self.rho >= -1.0 && self.rho <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "pairwise correlation must lie in [-1, 1], got {}",
                        self.rho
                    )));
                }
                Ok((0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| if i == j { 1.0 } else { self.rho })
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// Parses a `key = value` config file. Unknown keys are rejected;
    /// omitted keys keep the defaults of [`SimConfig::default`].
    ///
    /// Recognized keys: `n_assets`, `years`, `steps_per_year`, `seed`,
    /// `rho`, `kappa`, `regime` (`iid` or `mean-reverting`), and `mu` /
    /// `sigma`, each either a single number (applied to every asset), a
    /// comma-separated list of `n_assets` numbers, or `lo:hi` for an even
    /// spread. Lines starting with `#` and blank lines are ignored.
    pub fn parse(text: &str) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        let mut mu_spec: Option<String> = None;
        let mut sigma_spec: Option<String> = None;
        let mut kappa: Option<f64> = None;
        let mut regime_name: Option<String> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parameter(format!(
                "config line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::Parameter(format!(
                    "config line {}: {what} (key {key}, value {value:?})",
                    lineno + 1
                ))
            };
            match key {
                "n_assets" => {
                    cfg.n_assets = value.parse().map_err(|_| bad("expected an integer"))?
                }
                "years" => cfg.years = value.parse().map_err(|_| bad("expected a number"))?,
                "steps_per_year" => {
                    cfg.steps_per_year = value.parse().map_err(|_| bad("expected an integer"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("expected an integer"))?,
                "rho" => cfg.rho = value.parse().map_err(|_| bad("expected a number"))?,
                "kappa" => {
                    kappa = Some(value.parse().map_err(|_| bad("expected a number"))?)
                }
                "regime" => regime_name = Some(value.to_string()),
                "mu" => mu_spec = Some(value.to_string()),
                "sigma" => sigma_spec = Some(value.to_string()),
                other => {
                    return Err(Error::Parameter(format!(
                        "config line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }

        cfg.mu = match &mu_spec {
            Some(s) => parse_per_asset(s, cfg.n_assets, "mu")?,
            None => vec![0.05; cfg.n_assets],
        };
        cfg.sigma = match &sigma_spec {
            Some(s) => parse_per_asset(s, cfg.n_assets, "sigma")?,
            None => vec![0.15; cfg.n_assets],
        };
        cfg.regime = match regime_name.as_deref() {
            None | Some("iid") => Regime::IidGbm,
            Some("mean-reverting") | Some("mean_reverting") => Regime::MeanRevertingRelative {
                kappa: kappa.unwrap_or(0.5),
            },
            Some(other) => {
                return Err(Error::Parameter(format!(
                    "unknown regime {other:?}; expected `iid` or `mean-reverting`"
                )))
            }
        };
        if kappa.is_some() && matches!(cfg.regime, Regime::IidGbm) {
            return Err(Error::Parameter(
                "kappa is only meaningful with regime = mean-reverting".to_string(),
            ));
        }
        Ok(cfg)
    }
}

/// Parses a per-asset parameter: a single number, `lo:hi`, or a comma list.
fn parse_per_asset(spec: &str, n: usize, name: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::Parameter(format!("{name}: {what} (got {spec:?})"));
    if let Some((lo, hi)) = spec.split_once(':') {
        let lo: f64 = lo.trim().parse().map_err(|_| bad("expected `lo:hi`"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad("expected `lo:hi`"))?;
        return Ok((0..n)
            .map(|i| {
                if n == 1 {
                    lo
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect());
    }
    if spec.contains(',') {
        let vals: std::result::Result<Vec<f64>, _> =
            spec.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|_| bad("expected comma-separated numbers"))?;
        if vals.len() != n {
            return Err(bad(&format!("expected {n} values, got {}", vals.len())));
        }
        return Ok(vals);
    }
    let v: f64 = spec.trim().parse().map_err(|_| bad("expected a number"))?;
    Ok(vec![v; n])
}

/// A simulated panel together with the configuration that produced it.
#[derive(Debug, Clone)]
pub struct SimPanel {
    panel: RawPanel,
    config: SimConfig,
}

impl SimPanel {
    pub fn panel(&self) -> &RawPanel {
        &self.panel
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Normalizes against the first date. All simulated prices start at 1,
    /// so the indexes coincide with the prices.
    pub fn normalized(&self) -> Result<NormalizedPanel> {
        NormalizedPanel::from_raw(&self.panel, self.panel.dates()[0])
    }
}

/// Derives the seed of replication `r` from a master seed by splitmix64
/// mixing, so that replication streams are decorrelated but reproducible
/// from `(master, r)` alone.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    let mut z = master
        .wrapping_add(replication.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the simulation described by `config`.
///
/// Each asset consumes its own ChaCha stream (stream id = asset index) of a
/// generator seeded with `config.seed`, so panels are bit-reproducible and
/// adding assets does not disturb the draws of existing ones.
pub fn simulate(config: &SimConfig) -> Result<SimPanel> {
    let chol = config.validate()?;
    let n = config.n_assets;
    let total = config.total_steps();
    let dt = config.dt();
    let sq_dt = dt.sqrt();

    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect();

    let dates = weekday_sequence(sim_start_date(), total + 1);
    let ids = asset_ids(n);
    let mut log_p = vec![0.0_f64; n];
    let mut prices: Vec<Vec<Option<f64>>> = Vec::with_capacity(total + 1);
    prices.push(vec![Some(1.0); n]);

    let mut u = vec![0.0_f64; n];
    for _ in 0..total {
        for (i, rng) in rngs.iter_mut().enumerate() {
            u[i] = StandardNormal.sample(rng);
        }
        let pull: Vec<f64> = match config.regime {
            Regime::IidGbm => vec![0.0; n],
            Regime::MeanRevertingRelative { kappa } => {
                let mean_log = log_p.iter().sum::<f64>() / n as f64;
                log_p.iter().map(|lp| -kappa * (lp - mean_log) * dt).collect()
            }
        };
        for i in 0..n {
            // Correlated draw: z_i = Σ_{j ≤ i} L[i][j] u[j].
            let z: f64 = (0..=i).map(|j| chol[i][j] * u[j]).sum();
            log_p[i] +=
                (config.mu[i] - 0.5 * config.sigma[i] * config.sigma[i]) * dt
                    + config.sigma[i] * sq_dt * z
                    + pull[i];
        }
        prices.push(log_p.iter().map(|lp| Some(lp.exp())).collect());
    }

    let panel = RawPanel::from_parts(dates, ids, prices, 0)?;
    Ok(SimPanel {
        panel,
        config: config.clone(),
    })
}

/// One grid of the refinement study.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvergenceRow {
    pub steps_per_year: usize,
    pub dt: f64,
    /// Largest |direct − residual| drift gap along the path.
    pub max_abs_gap: f64,
    /// |direct − residual| at the final date.
    pub terminal_abs_gap: f64,
}

/// Measures how fast the direct drift estimate converges to the residual as
/// the step size shrinks.
///
/// A single Brownian path is drawn on the finest grid (the maximum of
/// `steps_list`, which every other entry must divide); coarser grids use
/// exact partial sums of the same increments, so all grids see the same
/// underlying path. On each grid the strategy generated by `measure` —
/// multiplicatively for [`DecompositionKind::Log`], additively for
/// [`DecompositionKind::Additive`] — is rebalanced every step, and the
/// matching decomposition gap is recorded.
///
/// Under [`Regime::MeanRevertingRelative`] the Euler pull is re-discretized
/// per grid, so path differences across grids contribute to the gap as well;
/// under [`Regime::IidGbm`] shared dates see identical prices.
pub fn convergence_study(
    config: &SimConfig,
    steps_list: &[usize],
    measure: &DispersionMeasure,
    kind: DecompositionKind,
) -> Result<Vec<ConvergenceRow>> {
    if steps_list.is_empty() {
        return Err(Error::Parameter("steps list is empty".to_string()));
    }
    let max_steps = *steps_list.iter().max().unwrap();
    for &s in steps_list {
        if s < MIN_STEPS_PER_YEAR {
            return Err(Error::Parameter(format!(
                "steps_per_year must be at least {MIN_STEPS_PER_YEAR}, got {s}"
            )));
        }
        if !max_steps.is_multiple_of(s) {
            return Err(Error::Parameter(format!(
                "every grid must divide the finest one: {s} does not divide {max_steps}"
            )));
        }
    }

    let mut fine_cfg = config.clone();
    fine_cfg.steps_per_year = max_steps;
    let chol = fine_cfg.validate()?;
    let n = fine_cfg.n_assets;
    let total_fine = fine_cfg.total_steps();
    let dt_fine = fine_cfg.dt();
    let sq_dt_fine = dt_fine.sqrt();

    // Unit-volatility correlated Brownian increments on the finest grid.
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(fine_cfg.seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect();
    let mut dw = vec![vec![0.0_f64; n]; total_fine];
    let mut u = vec![0.0_f64; n];
    for step in dw.iter_mut() {
        for (i, rng) in rngs.iter_mut().enumerate() {
            u[i] = StandardNormal.sample(rng);
        }
        for i in 0..n {
            let z: f64 = (0..=i).map(|j| chol[i][j] * u[j]).sum();
            step[i] = sq_dt_fine * z;
        }
    }

    let mut rows = Vec::with_capacity(steps_list.len());
    let mut sorted: Vec<usize> = steps_list.to_vec();
    sorted.sort_unstable();
    for &spy in &sorted {
        let ratio = max_steps / spy;
        if !total_fine.is_multiple_of(ratio) {
            return Err(Error::Parameter(format!(
                "horizon of {} fine steps does not split into blocks of {ratio}; \
                 use a whole number of years",
                total_fine
            )));
        }
        let total = total_fine / ratio;
        let dt = 1.0 / spy as f64;

        // Evolve log prices on this grid with exactly aggregated increments.
        let mut log_p = vec![0.0_f64; n];
        let mut thetas: Vec<Vec<f64>> = Vec::with_capacity(total + 1);
        let mut v_m: Vec<f64> = Vec::with_capacity(total + 1);
        let push_state =
            |log_p: &[f64], thetas: &mut Vec<Vec<f64>>, v_m: &mut Vec<f64>| {
                let p: Vec<f64> = log_p.iter().map(|lp| lp.exp()).collect();
                let total_p: f64 = p.iter().sum();
                thetas.push(p.iter().map(|x| x / total_p).collect());
                v_m.push(total_p);
            };
        push_state(&log_p, &mut thetas, &mut v_m);
        for block in 0..total {
            let pull: Vec<f64> = match fine_cfg.regime {
                Regime::IidGbm => vec![0.0; n],
                Regime::MeanRevertingRelative { kappa } => {
                    let mean_log = log_p.iter().sum::<f64>() / n as f64;
                    log_p.iter().map(|lp| -kappa * (lp - mean_log) * dt).collect()
                }
            };
            for i in 0..n {
                let dw_block: f64 = (block * ratio..(block + 1) * ratio)
                    .map(|k| dw[k][i])
                    .sum();
                log_p[i] += (fine_cfg.mu[i] - 0.5 * fine_cfg.sigma[i] * fine_cfg.sigma[i]) * dt
                    + fine_cfg.sigma[i] * dw_block
                    + pull[i];
            }
            push_state(&log_p, &mut thetas, &mut v_m);
        }

        // Self-financing, every-step-rebalanced strategy generated by the
        // measure, tracked against the one-share-each market.
        let mut v_s = vec![v_m[0]];
        for k in 0..total {
            let theta_k = crate::simplex::RelativePriceVector::from_prices(&thetas[k])?;
            let r = v_s[k] / v_m[k];
            let shares = match kind {
                DecompositionKind::Log => generated_shares(measure, &theta_k, r)?,
                DecompositionKind::Additive => additive_shares(measure, &theta_k, r)?,
            };
            let value: f64 = shares
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, s)| s * thetas[k + 1][i] * v_m[k + 1])
                .sum();
            v_s.push(value);
        }

        let dates = weekday_sequence(sim_start_date(), total + 1);
        let series = match kind {
            DecompositionKind::Log => {
                crate::decomposition::decompose(&dates, &thetas, &v_s, &v_m, measure)?
            }
            DecompositionKind::Additive => {
                crate::decomposition::additive_decompose(&dates, &thetas, &v_s, &v_m, measure)?
            }
        };
        let max_abs_gap = series.gap.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        rows.push(ConvergenceRow {
            steps_per_year: spy,
            dt,
            max_abs_gap,
            terminal_abs_gap: series.gap.last().unwrap().abs(),
        });
    }
    Ok(rows)
}

fn sim_start_date() -> NaiveDate {
    NaiveDate::parse_from_str(SIM_START_DATE, "%Y-%m-%d").expect("valid start date")
}

/// `len` consecutive weekdays starting at `start` (itself shifted forward to
/// a weekday if needed).
pub(crate) fn weekday_sequence(start: NaiveDate, len: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(len);
    let mut d = start;
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d.succ_opt().expect("date range");
    }
    for _ in 0..len {
        dates.push(d);
        d = d.succ_opt().expect("date range");
        while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            d = d.succ_opt().expect("date range");
        }
    }
    dates
}

fn asset_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("A{i:0width$}")).collect()
}

/// Row-major lower Cholesky factor, or a parameter error if the matrix is
/// not positive definite.
fn cholesky_lower(matrix: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = matrix.len();
    let flat: Vec<f64> = (0..n)
        .flat_map(|j| (0..n).map(move |i| matrix[i][j]))
        .collect();
    let m = nalgebra::DMatrix::from_column_slice(n, n, &flat);
    let chol = nalgebra::Cholesky::new(m).ok_or_else(|| {
        Error::Parameter(
            "correlation matrix is not positive definite (Cholesky factorization failed)"
                .to_string(),
        )
    })?;
    let l = chol.l();
    Ok((0..n)
        .map(|i| (0..n).map(|j| l[(i, j)]).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, sample_variance};

    #[test]
    fn zero_volatility_is_deterministic_growth() {
        let mut cfg = SimConfig::uniform(3, 2.0, 12, 0.05, 0.0);
        cfg.seed = 7;
        let sim = simulate(&cfg).unwrap();
        let panel = sim.panel();
        let total = cfg.total_steps();
        assert_eq!(panel.n_dates(), total + 1);
        for k in 0..=total {
            let t = k as f64 * cfg.dt();
            for a in 0..3 {
                let p = panel.price(k, a).unwrap();
                assert!((p - (0.05 * t).exp()).abs() < 1e-12, "p = {p} at t = {t}");
            }
        }
    }

    #[test]
    fn same_seed_reproduces_bitwise_and_seeds_differ() {
        let cfg = SimConfig::uniform(4, 1.0, 24, 0.03, 0.2).with_seed(11);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        for k in 0..a.panel().n_dates() {
            for i in 0..4 {
                assert_eq!(a.panel().price(k, i), b.panel().price(k, i));
            }
        }
        let c = simulate(&cfg.clone().with_seed(12)).unwrap();
        let shifted = (0..4).any(|i| c.panel().price(1, i) != a.panel().price(1, i));
        assert!(shifted, "changing the seed must change the draws");
    }

    #[test]
    fn assets_use_distinct_streams() {
        let cfg = SimConfig::uniform(2, 1.0, 24, 0.0, 0.2).with_seed(3);
        let sim = simulate(&cfg).unwrap();
        let different = (1..sim.panel().n_dates())
            .any(|k| sim.panel().price(k, 0) != sim.panel().price(k, 1));
        assert!(different);
    }

    #[test]
    fn dates_are_weekdays_from_the_fixed_start() {
        let cfg = SimConfig::uniform(2, 1.0, 260, 0.0, 0.1);
        let sim = simulate(&cfg).unwrap();
        let dates = sim.panel().dates();
        assert_eq!(dates[0], sim_start_date());
        for w in dates.windows(2) {
            assert!(w[1] > w[0]);
        }
        for d in dates {
            assert!(!matches!(d.weekday(), Weekday::Sat | Weekday::Sun));
        }
    }

    #[test]
    fn terminal_log_price_moments_match_gbm() {
        // 200 replications of a 4-year run: terminal log price has mean
        // (μ − σ²/2)T and variance σ²T.
        let (mu, sigma, years) = (0.04, 0.2, 4.0);
        let mut terminals = Vec::new();
        for r in 0..200 {
            let cfg = SimConfig::uniform(2, years, 12, mu, sigma)
                .with_seed(replication_seed(99, r));
            let sim = simulate(&cfg).unwrap();
            let last = sim.panel().n_dates() - 1;
            terminals.push(sim.panel().price(last, 0).unwrap().ln());
        }
        let want_mean = (mu - 0.5 * sigma * sigma) * years;
        let want_var = sigma * sigma * years;
        let se = (want_var / 200.0).sqrt();
        assert!(
            (mean(&terminals) - want_mean).abs() < 4.0 * se,
            "mean {} vs {want_mean}",
            mean(&terminals)
        );
        let var = sample_variance(&terminals);
        assert!(
            (var - want_var).abs() < 0.35 * want_var,
            "variance {var} vs {want_var}"
        );
    }

    #[test]
    fn correlation_is_felt_by_the_draws() {
        // With ρ = 0.95 the two assets' step returns move nearly together.
        let mut cfg = SimConfig::uniform(2, 8.0, 252, 0.0, 0.2).with_seed(5);
        cfg.rho = 0.95;
        let sim = simulate(&cfg).unwrap();
        let panel = sim.panel();
        let mut r0 = Vec::new();
        let mut r1 = Vec::new();
        for k in 1..panel.n_dates() {
            r0.push((panel.price(k, 0).unwrap() / panel.price(k - 1, 0).unwrap()).ln());
            r1.push((panel.price(k, 1).unwrap() / panel.price(k - 1, 1).unwrap()).ln());
        }
        let corr = crate::stats::correlation(&r0, &r1);
        assert!(corr > 0.9, "realized correlation {corr}");
    }

    #[test]
    fn mean_reversion_keeps_relative_prices_in_a_band() {
        // Strong pull, no drift spread: max |log pᵢ − mean log p| stays small
        // where free GBM would wander far over 30 years.
        let kappa = 2.0;
        let cfg = SimConfig::uniform(4, 30.0, 52, 0.05, 0.2)
            .with_regime(Regime::MeanRevertingRelative { kappa })
            .with_seed(17);
        let sim = simulate(&cfg).unwrap();
        let panel = sim.panel();
        let mut worst: f64 = 0.0;
        for k in 0..panel.n_dates() {
            let logs: Vec<f64> =
                (0..4).map(|a| panel.price(k, a).unwrap().ln()).collect();
            let m = mean(&logs);
            for l in &logs {
                worst = worst.max((l - m).abs());
            }
        }
        // Stationary sd of the pulled spread is ≈ σ/√(2κ) = 0.1; allow 6×.
        assert!(worst < 0.6, "relative log prices wandered to {worst}");

        let free = simulate(&cfg.clone().with_regime(Regime::IidGbm)).unwrap();
        let mut free_worst: f64 = 0.0;
        let fp = free.panel();
        for k in 0..fp.n_dates() {
            let logs: Vec<f64> = (0..4).map(|a| fp.price(k, a).unwrap().ln()).collect();
            let m = mean(&logs);
            for l in &logs {
                free_worst = free_worst.max((l - m).abs());
            }
        }
        assert!(
            free_worst > worst,
            "free GBM ({free_worst}) should wander beyond the pulled run ({worst})"
        );
    }

    #[test]
    fn kappa_zero_equals_plain_gbm() {
        let cfg = SimConfig::uniform(3, 1.0, 24, 0.05, 0.2).with_seed(23);
        let pulled = simulate(
            &cfg.clone()
                .with_regime(Regime::MeanRevertingRelative { kappa: 0.0 }),
        )
        .unwrap();
        let plain = simulate(&cfg).unwrap();
        for k in 0..plain.panel().n_dates() {
            for a in 0..3 {
                assert_eq!(plain.panel().price(k, a), pulled.panel().price(k, a));
            }
        }
    }

    #[test]
    fn config_validation_rejects_bad_inputs() {
        assert!(SimConfig::uniform(1, 1.0, 24, 0.0, 0.1).validate().is_err());
        assert!(SimConfig::uniform(2, -1.0, 24, 0.0, 0.1).validate().is_err());
        assert!(SimConfig::uniform(2, 1.0, 4, 0.0, 0.1).validate().is_err());
        let mut cfg = SimConfig::uniform(2, 1.0, 24, 0.0, -0.1);
        assert!(cfg.validate().is_err());
        cfg = SimConfig::uniform(2, 1.0, 24, 0.0, 0.1)
            .with_regime(Regime::MeanRevertingRelative { kappa: -0.5 });
        assert!(cfg.validate().is_err());
        // ρ = −0.9 among 3 assets is not a valid correlation structure.
        let mut cfg = SimConfig::uniform(3, 1.0, 24, 0.0, 0.1);
        cfg.rho = -0.9;
        match cfg.validate() {
            Err(Error::Parameter(msg)) => assert!(msg.contains("positive definite")),
            other => panic!("expected a parameter error, got {other:?}"),
        }
        // Non-symmetric explicit matrix.
        let mut cfg = SimConfig::uniform(2, 1.0, 24, 0.0, 0.1);
        cfg.correlation = Some(vec![vec![1.0, 0.3], vec![0.2, 1.0]]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_file_round_trip_and_errors() {
        let text = "\
# demo
n_assets = 4
years = 2.5
steps_per_year = 52
mu = 0.03:0.07
sigma = 0.2
rho = 0.1
regime = mean-reverting
kappa = 0.75
seed = 9
";
        let cfg = SimConfig::parse(text).unwrap();
        assert_eq!(cfg.n_assets, 4);
        assert_eq!(cfg.years, 2.5);
        assert_eq!(cfg.steps_per_year, 52);
        assert_eq!(cfg.mu, vec![0.03, 0.03 + 0.04 / 3.0, 0.03 + 0.08 / 3.0, 0.07]);
        assert_eq!(cfg.sigma, vec![0.2; 4]);
        assert_eq!(cfg.regime, Regime::MeanRevertingRelative { kappa: 0.75 });
        assert_eq!(cfg.seed, 9);
        cfg.validate().unwrap();

        assert!(SimConfig::parse("bogus_key = 1").is_err());
        assert!(SimConfig::parse("n_assets four").is_err());
        assert!(SimConfig::parse("kappa = 0.5").is_err()); // iid + kappa
        assert!(SimConfig::parse("mu = 0.1,0.2,0.3").is_err()); // wrong arity
        // Explicit per-asset list of the right arity parses.
        let cfg = SimConfig::parse("n_assets = 3\nmu = 0.1, 0.2, 0.3").unwrap();
        assert_eq!(cfg.mu, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn replication_seeds_are_spread_out() {
        let a = replication_seed(42, 0);
        let b = replication_seed(42, 1);
        let c = replication_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // Stable across calls.
        assert_eq!(a, replication_seed(42, 0));
    }

    #[test]
    fn convergence_gaps_shrink_with_the_step() {
        let cfg = SimConfig::uniform(3, 4.0, 48, 0.05, 0.3).with_seed(31);
        let m = DispersionMeasure::NegGeometricMean;
        for kind in [DecompositionKind::Log, DecompositionKind::Additive] {
            let rows = convergence_study(&cfg, &[12, 24, 48], &m, kind).unwrap();
            assert_eq!(rows.len(), 3);
            assert_eq!(rows[0].steps_per_year, 12);
            assert!(rows[0].dt > rows[2].dt);
            // Coarser grids leave a larger discretization gap.
            assert!(
                rows[0].max_abs_gap > rows[2].max_abs_gap,
                "{kind:?} gaps: {:?}",
                rows.iter().map(|r| r.max_abs_gap).collect::<Vec<_>>()
            );
            for r in &rows {
                assert!(r.max_abs_gap.is_finite());
                assert!(r.terminal_abs_gap <= r.max_abs_gap + 1e-18);
            }
        }
    }

    #[test]
    fn convergence_study_rejects_non_nested_grids() {
        let cfg = SimConfig::uniform(2, 2.0, 48, 0.05, 0.2);
        let m = DispersionMeasure::NegGeometricMean;
        let kind = DecompositionKind::Log;
        assert!(convergence_study(&cfg, &[13, 48], &m, kind).is_err());
        assert!(convergence_study(&cfg, &[], &m, kind).is_err());
    }

    /// `−log G(θ(t))` along a simulated path: the dispersion level the
    /// stationarity and trend checks below look at.
    fn neg_log_g_series(cfg: &SimConfig) -> Vec<f64> {
        let sim = simulate(cfg).unwrap();
        let panel = sim.panel();
        let n = cfg.n_assets;
        (0..panel.n_dates())
            .map(|k| {
                let prices: Vec<f64> =
                    (0..n).map(|a| panel.price(k, a).unwrap()).collect();
                let total: f64 = prices.iter().sum();
                let mean_log =
                    prices.iter().map(|p| (p / total).ln()).sum::<f64>() / n as f64;
                -mean_log
            })
            .collect()
    }

    #[test]
    fn pulled_relative_prices_keep_dispersion_stationary() {
        // Cross-sectional pull at κ = 0.5 over 50 years: the two half-period
        // means of −log G(θ) agree to within a quarter of the overall spread.
        let cfg = SimConfig::uniform(10, 50.0, 52, 0.05, 0.15)
            .with_regime(Regime::MeanRevertingRelative { kappa: 0.5 })
            .with_seed(1234);
        let series = neg_log_g_series(&cfg);
        let half = series.len() / 2;
        let (first, second) = (mean(&series[..half]), mean(&series[half..]));
        let sd = sample_variance(&series).sqrt();
        assert!(
            (second - first).abs() < 0.25 * sd,
            "half means {first} vs {second} differ by more than 0.25 sd ({sd})"
        );
    }

    #[test]
    fn heterogeneous_drifts_push_dispersion_up() {
        // Free GBM with a drift spread concentrates relative prices on the
        // fastest asset, so −log G(θ) trends upward: the second-half mean
        // exceeds the first-half mean in at least 90 of 100 replications.
        let mut rising = 0;
        for r in 0..100 {
            let cfg = SimConfig::uniform(10, 20.0, 52, 0.05, 0.15)
                .with_mu_range(0.02, 0.08)
                .with_seed(replication_seed(4321, r));
            let series = neg_log_g_series(&cfg);
            let half = series.len() / 2;
            if mean(&series[half..]) > mean(&series[..half]) {
                rising += 1;
            }
        }
        assert!(rising >= 90, "dispersion rose in only {rising}/100 replications");
    }
}
