//! Self-financing backtests of rule-based strategies against a buy-and-hold
//! market account, plus monthly performance reporting.
//!
//! The market account holds one share of each active asset from the
//! formation date onward. When a new asset enters the panel it is absorbed
//! at the next rebalance date: the account switches to a uniform share count
//! over the enlarged universe, scaled so the account's value is unchanged by
//! the switch — entry is an accounting event, not a return. Strategies trade
//! only on rebalance dates, financing every purchase from sales (values are
//! continuous across rebalances by construction), and hold fixed share
//! counts in between.
//!
//! Results carry the relative-price path and, at universe changes, a
//! restatement of the final prices over the outgoing universe, which is
//! exactly what the drift decomposition needs to chain its identity across
//! entries; see [`BacktestResult::decompose`].

use std::io::Write;

use chrono::{Days, NaiveDate};
use serde::Serialize;

use crate::decomposition::{decompose_chained, DecompositionKind, DecompositionSeries};
use crate::dispersion::DispersionMeasure;
use crate::error::Error;
use crate::panel::NormalizedPanel;
use crate::portfolio::StrategyKind;
use crate::stats::{correlation, mean, month_end_indices, sample_std};
use crate::Result;

/// Relative tolerance under which a computed rebalance is recognized as a
/// no-op and suppressed, so strategies whose target equals their current
/// holdings report exactly zero turnover instead of float dust.
pub const REBALANCE_SNAP_TOL: f64 = 1e-12;

/// Days per year used to convert the burn-in length to calendar days.
const DAYS_PER_YEAR: f64 = 365.25;

/// When strategies trade.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RebalanceSchedule {
    /// The first trading date of each calendar month.
    Monthly,
    /// Every panel date.
    EveryStep,
}

impl RebalanceSchedule {
    pub fn label(&self) -> &'static str {
        match self {
            RebalanceSchedule::Monthly => "monthly",
            RebalanceSchedule::EveryStep => "every-step",
        }
    }
}

/// One executed rebalance.
#[derive(Debug, Clone)]
pub struct RebalanceRecord {
    pub date: NaiveDate,
    /// Position in [`BacktestResult::dates`].
    pub date_index: usize,
    /// Panel asset indices of the universe traded into.
    pub assets: Vec<usize>,
    /// Target weights over `assets`.
    pub weights: Vec<f64>,
    /// Resulting share counts over `assets`.
    pub shares: Vec<f64>,
    /// `Σ|Δshares|·price / value`: round-trip trading volume relative to the
    /// account value. Zero at formation (funding is not a trade) and for
    /// no-op rebalances.
    pub turnover: f64,
    /// Panel indices of assets absorbed into the universe at this rebalance.
    pub absorbed: Vec<usize>,
}

/// The full trace of one backtest.
#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub label: String,
    pub schedule: RebalanceSchedule,
    pub formation_date: NaiveDate,
    /// Panel dates from formation to the end of the panel.
    pub dates: Vec<NaiveDate>,
    /// Strategy account value per date.
    pub value: Vec<f64>,
    /// Market account value per date.
    pub market_value: Vec<f64>,
    /// `log(value/market_value)` per date.
    pub rel_log_value: Vec<f64>,
    /// Relative prices per date over the universe in force at that date.
    pub theta: Vec<Vec<f64>>,
    /// At universe-change dates, the same date's relative prices restated
    /// over the outgoing universe; `None` elsewhere.
    pub theta_pre: Vec<Option<Vec<f64>>>,
    pub rebalances: Vec<RebalanceRecord>,
}

impl BacktestResult {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Runs the drift decomposition over this backtest's path, chaining the
    /// identity across any universe changes.
    pub fn decompose(
        &self,
        measure: &DispersionMeasure,
        kind: DecompositionKind,
    ) -> Result<DecompositionSeries> {
        decompose_chained(
            &self.dates,
            &self.theta,
            &self.theta_pre,
            &self.value,
            &self.market_value,
            measure,
            kind,
        )
    }

    /// Writes the value paths as CSV: `date,value,market_value,rel_log_value`.
    pub fn write_values_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date", "value", "market_value", "rel_log_value"])?;
        for k in 0..self.len() {
            wtr.write_record([
                self.dates[k].format("%Y-%m-%d").to_string(),
                format!("{}", self.value[k]),
                format!("{}", self.market_value[k]),
                format!("{}", self.rel_log_value[k]),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes the rebalance trail as long-format CSV:
    /// `date,asset,weight,shares,turnover` (turnover repeated per row).
    pub fn write_rebalances_csv<W: Write>(&self, writer: W, panel: &NormalizedPanel) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["date", "asset", "weight", "shares", "turnover"])?;
        for rec in &self.rebalances {
            for (j, &a) in rec.assets.iter().enumerate() {
                wtr.write_record([
                    rec.date.format("%Y-%m-%d").to_string(),
                    panel.assets()[a].id.clone(),
                    format!("{}", rec.weights[j]),
                    format!("{}", rec.shares[j]),
                    format!("{}", rec.turnover),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Runs `strategy` on `panel` from the formation date to the end.
///
/// The formation date is the first rebalance date at least
/// `burn_in_years × 365.25` days (rounded) after the panel start; the
/// strategy account is funded with exactly the market account's value there.
pub fn run_backtest(
    panel: &NormalizedPanel,
    strategy: &StrategyKind,
    schedule: RebalanceSchedule,
    burn_in_years: f64,
) -> Result<BacktestResult> {
    if !(burn_in_years >= 0.0 && burn_in_years.is_finite()) {
        return Err(Error::Parameter(format!(
            "burn-in must be a non-negative number of years, got {burn_in_years}"
        )));
    }
    let dates = panel.dates();
    let sched = schedule_indices(dates, schedule);
    let cutoff = dates[0] + Days::new((burn_in_years * DAYS_PER_YEAR).round() as u64);
    let formation = sched
        .iter()
        .copied()
        .find(|&k| dates[k] >= cutoff)
        .ok_or_else(|| {
            Error::Parameter(format!(
                "burn-in of {burn_in_years} years leaves no rebalance date: the panel ends {} \
                 but formation would be {cutoff} at the earliest",
                dates[dates.len() - 1]
            ))
        })?;

    let mut universe = panel.active_assets(formation);
    if universe.len() < 2 {
        return Err(Error::InsufficientAssets {
            message: format!(
                "only {} asset(s) active on the formation date {}",
                universe.len(),
                dates[formation]
            ),
        });
    }

    let n_assets = panel.n_assets();
    let is_market = matches!(strategy, StrategyKind::Market);

    // Dense share vectors over all panel assets; zero = not held.
    let mut m_shares = vec![0.0_f64; n_assets];
    for &a in &universe {
        m_shares[a] = 1.0;
    }
    let value_of = |sh: &[f64], t: usize| -> f64 {
        sh.iter()
            .enumerate()
            .filter(|(_, s)| **s != 0.0)
            .map(|(a, s)| s * panel.index(t, a).expect("held assets have entered"))
            .sum()
    };

    let out_len = dates.len() - formation;
    let mut result = BacktestResult {
        label: strategy.label(),
        schedule,
        formation_date: dates[formation],
        dates: dates[formation..].to_vec(),
        value: Vec::with_capacity(out_len),
        market_value: Vec::with_capacity(out_len),
        rel_log_value: Vec::with_capacity(out_len),
        theta: Vec::with_capacity(out_len),
        theta_pre: vec![None; out_len],
        rebalances: Vec::new(),
    };

    // Formation: fund the strategy with the market account's value.
    let v_m0 = value_of(&m_shares, formation);
    let v_s0 = v_m0;
    let theta0 = panel.relative_prices_over(formation, &universe)?;
    let mut shares = vec![0.0_f64; n_assets];
    let w0 = strategy.target_weights(&theta0, v_s0 / v_m0)?;
    if is_market {
        // Replicate the market account's arithmetic exactly so that the
        // market backtested against itself is bitwise flat.
        for &a in &universe {
            shares[a] = m_shares[a] * (v_s0 / v_m0);
        }
    } else {
        for (j, &a) in universe.iter().enumerate() {
            shares[a] =
                w0.as_slice()[j] * v_s0 / panel.index(formation, a).expect("active asset");
        }
    }
    result.rebalances.push(RebalanceRecord {
        date: dates[formation],
        date_index: 0,
        assets: universe.clone(),
        weights: w0.as_slice().to_vec(),
        shares: universe.iter().map(|&a| shares[a]).collect(),
        turnover: 0.0,
        absorbed: Vec::new(),
    });
    result.value.push(v_s0);
    result.market_value.push(v_m0);
    result.rel_log_value.push((v_s0 / v_m0).ln());
    result.theta.push(theta0.as_slice().to_vec());

    let mut next_sched = sched.iter().copied().skip_while(|&k| k <= formation).peekable();

    for t in formation + 1..dates.len() {
        let out_k = t - formation;
        let v_s = value_of(&shares, t);
        let v_m = value_of(&m_shares, t);
        if !(v_s > 0.0 && v_s.is_finite()) {
            return Err(Error::Domain(format!(
                "strategy {} value became {v_s} on {}; cannot continue a self-financing account",
                result.label, dates[t]
            )));
        }

        if next_sched.peek() == Some(&t) {
            next_sched.next();

            // Absorb any assets that entered since the last rebalance.
            let active_now = panel.active_assets(t);
            let mut absorbed: Vec<usize> = Vec::new();
            if active_now.len() > universe.len() {
                absorbed = active_now
                    .iter()
                    .copied()
                    .filter(|a| !universe.contains(a))
                    .collect();
                result.theta_pre[out_k] =
                    Some(panel.relative_prices_over(t, &universe)?.as_slice().to_vec());
                // Value-preserving switch to a uniform count over the new
                // universe.
                let total_index: f64 = active_now
                    .iter()
                    .map(|&a| panel.index(t, a).expect("active asset"))
                    .sum();
                let count = v_m / total_index;
                m_shares = vec![0.0; n_assets];
                for &a in &active_now {
                    m_shares[a] = count;
                }
                universe = active_now;
            }

            let theta_t = panel.relative_prices_over(t, &universe)?;
            let w = strategy.target_weights(&theta_t, v_s / v_m)?;
            let mut new_shares = vec![0.0_f64; n_assets];
            if is_market {
                for &a in &universe {
                    new_shares[a] = m_shares[a] * (v_s / v_m);
                }
            } else {
                for (j, &a) in universe.iter().enumerate() {
                    new_shares[a] =
                        w.as_slice()[j] * v_s / panel.index(t, a).expect("active asset");
                }
            }

            // Suppress no-op rebalances so an unchanged target trades nothing.
            let unchanged = (0..n_assets).all(|a| {
                let (old, new) = (shares[a], new_shares[a]);
                (new - old).abs() <= REBALANCE_SNAP_TOL * old.abs().max(new.abs()).max(1.0)
            });
            let turnover = if unchanged {
                0.0
            } else {
                let traded: f64 = (0..n_assets)
                    .filter(|&a| shares[a] != 0.0 || new_shares[a] != 0.0)
                    .map(|a| {
                        (new_shares[a] - shares[a]).abs()
                            * panel.index(t, a).expect("traded assets have entered")
                    })
                    .sum();
                traded / v_s
            };
            if !unchanged {
                debug_assert!(
                    (value_of(&new_shares, t) - v_s).abs() <= 1e-9 * v_s,
                    "rebalance must be self-financing"
                );
                shares = new_shares;
            }
            result.rebalances.push(RebalanceRecord {
                date: dates[t],
                date_index: out_k,
                assets: universe.clone(),
                weights: w.as_slice().to_vec(),
                shares: universe.iter().map(|&a| shares[a]).collect(),
                turnover,
                absorbed,
            });
            result.theta.push(theta_t.as_slice().to_vec());
        } else {
            result
                .theta
                .push(panel.relative_prices_over(t, &universe)?.as_slice().to_vec());
        }

        result.value.push(v_s);
        result.market_value.push(v_m);
        result.rel_log_value.push((v_s / v_m).ln());
    }

    Ok(result)
}

/// Indices of the rebalance dates under `schedule`.
fn schedule_indices(dates: &[NaiveDate], schedule: RebalanceSchedule) -> Vec<usize> {
    use chrono::Datelike;
    match schedule {
        RebalanceSchedule::EveryStep => (0..dates.len()).collect(),
        RebalanceSchedule::Monthly => dates
            .iter()
            .enumerate()
            .filter(|(k, d)| {
                *k == 0
                    || (dates[k - 1].year(), dates[k - 1].month()) != (d.year(), d.month())
            })
            .map(|(k, _)| k)
            .collect(),
    }
}

/// Why a mean/spread ratio is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioNote {
    Defined,
    /// Zero spread and zero mean: the ratio carries no information.
    Undefined,
    /// Zero spread with a nonzero mean: the ratio diverges.
    Infinite,
}

fn ratio_with_note(mean: f64, sd: f64) -> (Option<f64>, RatioNote) {
    if sd == 0.0 {
        if mean == 0.0 {
            (None, RatioNote::Undefined)
        } else {
            (None, RatioNote::Infinite)
        }
    } else {
        (Some(mean / sd), RatioNote::Defined)
    }
}

/// Monthly performance statistics over one period.
///
/// Means are annualized as `12 × mean`, spreads as `√12 × sd` (n−1), from
/// simple month-over-month returns sampled on each month's last trading
/// date. `sharpe` is the strategy's own mean/spread ratio at zero baseline;
/// the `relative_*` fields apply the same arithmetic to the month-by-month
/// difference between strategy and market returns. Ratios whose denominator
/// is exactly zero are reported as `None` with an explanatory note instead
/// of NaN or infinity.
#[derive(Debug, Clone, Serialize)]
pub struct StatLine {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub n_months: usize,
    pub annualized_mean: f64,
    pub annualized_sd: f64,
    pub sharpe: Option<f64>,
    pub sharpe_note: RatioNote,
    pub relative_annualized_mean: f64,
    pub relative_annualized_sd: f64,
    pub relative_sharpe: Option<f64>,
    pub relative_sharpe_note: RatioNote,
    /// Pearson correlation of strategy and market monthly returns; `None`
    /// when either series has no spread.
    pub market_correlation: Option<f64>,
    /// Fewer than 12 monthly returns entered this line.
    pub flagged_short: bool,
}

impl StatLine {
    fn from_returns(
        label: String,
        start: NaiveDate,
        end: NaiveDate,
        strategy: &[f64],
        market: &[f64],
    ) -> StatLine {
        let rel: Vec<f64> = strategy.iter().zip(market).map(|(s, m)| s - m).collect();
        let annualized_mean = 12.0 * mean(strategy);
        let annualized_sd = 12.0_f64.sqrt() * sample_std(strategy);
        let (sharpe, sharpe_note) = ratio_with_note(annualized_mean, annualized_sd);
        let relative_annualized_mean = 12.0 * mean(&rel);
        let relative_annualized_sd = 12.0_f64.sqrt() * sample_std(&rel);
        let (relative_sharpe, relative_sharpe_note) =
            ratio_with_note(relative_annualized_mean, relative_annualized_sd);
        let corr = correlation(strategy, market);
        StatLine {
            label,
            start,
            end,
            n_months: strategy.len(),
            annualized_mean,
            annualized_sd,
            sharpe,
            sharpe_note,
            relative_annualized_mean,
            relative_annualized_sd,
            relative_sharpe,
            relative_sharpe_note,
            market_correlation: if corr.is_finite() { Some(corr) } else { None },
            flagged_short: strategy.len() < 12,
        }
    }
}

/// A performance report: one overall line plus optional consecutive
/// sub-period lines.
#[derive(Debug, Clone, Serialize)]
pub struct PerformanceReport {
    pub strategy: String,
    pub schedule: String,
    pub formation_date: NaiveDate,
    pub n_rebalances: usize,
    /// Mean per-rebalance turnover, formation excluded.
    pub average_turnover: f64,
    pub overall: StatLine,
    pub sub_periods: Vec<StatLine>,
}

impl PerformanceReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| {
            Error::Parameter(format!("cannot serialize performance report: {e}"))
        })
    }

    /// One CSV row per stat line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "strategy",
            "period",
            "start",
            "end",
            "n_months",
            "annualized_mean",
            "annualized_sd",
            "sharpe",
            "sharpe_note",
            "relative_annualized_mean",
            "relative_annualized_sd",
            "relative_sharpe",
            "relative_sharpe_note",
            "market_correlation",
            "flagged_short",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let note = |n: RatioNote| {
            match n {
                RatioNote::Defined => "defined",
                RatioNote::Undefined => "undefined",
                RatioNote::Infinite => "infinite",
            }
            .to_string()
        };
        for line in std::iter::once(&self.overall).chain(&self.sub_periods) {
            wtr.write_record([
                self.strategy.clone(),
                line.label.clone(),
                line.start.format("%Y-%m-%d").to_string(),
                line.end.format("%Y-%m-%d").to_string(),
                line.n_months.to_string(),
                format!("{}", line.annualized_mean),
                format!("{}", line.annualized_sd),
                opt(line.sharpe),
                note(line.sharpe_note),
                format!("{}", line.relative_annualized_mean),
                format!("{}", line.relative_annualized_sd),
                opt(line.relative_sharpe),
                note(line.relative_sharpe_note),
                opt(line.market_correlation),
                line.flagged_short.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// A fixed-width table for terminal display.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "strategy {}  ({} rebalancing, formed {}, {} rebalances, avg turnover {:.4})\n",
            self.strategy,
            self.schedule,
            self.formation_date,
            self.n_rebalances,
            self.average_turnover
        );
        out.push_str(&format!(
            "{:<18} {:>6} {:>9} {:>9} {:>8} {:>9} {:>9} {:>10} {:>7}\n",
            "period", "months", "ann.ret", "ann.sd", "sharpe", "rel.ret", "rel.sd", "rel.sharpe",
            "corr"
        ));
        let fmt_ratio = |v: Option<f64>, n: RatioNote| match (v, n) {
            (Some(x), _) => format!("{x:.4}"),
            (None, RatioNote::Undefined) => "undef".to_string(),
            (None, RatioNote::Infinite) => "inf".to_string(),
            (None, RatioNote::Defined) => "-".to_string(),
        };
        for line in std::iter::once(&self.overall).chain(&self.sub_periods) {
            let short = if line.flagged_short { "*" } else { "" };
            out.push_str(&format!(
                "{:<18} {:>6} {:>9.4} {:>9.4} {:>8} {:>9.4} {:>9.4} {:>10} {:>7}\n",
                format!("{}{}", line.label, short),
                line.n_months,
                line.annualized_mean,
                line.annualized_sd,
                fmt_ratio(line.sharpe, line.sharpe_note),
                line.relative_annualized_mean,
                line.relative_annualized_sd,
                fmt_ratio(line.relative_sharpe, line.relative_sharpe_note),
                line.market_correlation
                    .map(|c| format!("{c:.3}"))
                    .unwrap_or_else(|| "-".to_string()),
            ));
        }
        if self.overall.flagged_short || self.sub_periods.iter().any(|l| l.flagged_short) {
            out.push_str("* fewer than 12 monthly returns\n");
        }
        out
    }
}

/// Builds the monthly performance report of a backtest. With
/// `sub_period_years = Some(y)`, consecutive `y`-year blocks of monthly
/// returns are reported alongside the overall line (trailing blocks with
/// fewer than two returns are dropped).
pub fn performance_report(
    result: &BacktestResult,
    sub_period_years: Option<usize>,
) -> Result<PerformanceReport> {
    let month_idx = month_end_indices(&result.dates);
    if month_idx.len() < 3 {
        return Err(Error::Precondition(format!(
            "performance statistics need at least 3 month-end dates, found {}",
            month_idx.len()
        )));
    }
    let rs: Vec<f64> = month_idx
        .windows(2)
        .map(|w| result.value[w[1]] / result.value[w[0]] - 1.0)
        .collect();
    let rm: Vec<f64> = month_idx
        .windows(2)
        .map(|w| result.market_value[w[1]] / result.market_value[w[0]] - 1.0)
        .collect();

    let overall = StatLine::from_returns(
        "overall".to_string(),
        result.dates[month_idx[0]],
        result.dates[*month_idx.last().unwrap()],
        &rs,
        &rm,
    );

    let mut sub_periods = Vec::new();
    if let Some(years) = sub_period_years {
        if years == 0 {
            return Err(Error::Parameter(
                "sub-period length must be at least one year".to_string(),
            ));
        }
        let block = years * 12;
        let mut lo = 0;
        while lo + 2 <= rs.len() {
            let hi = (lo + block).min(rs.len());
            if hi - lo < 2 {
                break;
            }
            let start = result.dates[month_idx[lo]];
            let end = result.dates[month_idx[hi]];
            sub_periods.push(StatLine::from_returns(
                format!("{}..{}", start.format("%Y-%m"), end.format("%Y-%m")),
                start,
                end,
                &rs[lo..hi],
                &rm[lo..hi],
            ));
            lo = hi;
        }
    }

    let post_formation: Vec<f64> = result
        .rebalances
        .iter()
        .skip(1)
        .map(|r| r.turnover)
        .collect();
    Ok(PerformanceReport {
        strategy: result.label.clone(),
        schedule: result.schedule.label().to_string(),
        formation_date: result.formation_date,
        n_rebalances: result.rebalances.len(),
        average_turnover: if post_formation.is_empty() {
            0.0
        } else {
            mean(&post_formation)
        },
        overall,
        sub_periods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::DEFAULT_FILL_LIMIT;
    use crate::simulator::{simulate, SimConfig};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn panel_from(csv: &str) -> NormalizedPanel {
        NormalizedPanel::from_reader(csv.as_bytes(), DEFAULT_FILL_LIMIT).unwrap()
    }

    fn sim_panel(seed: u64) -> NormalizedPanel {
        let cfg = SimConfig::uniform(4, 3.0, 252, 0.05, 0.25).with_seed(seed);
        simulate(&cfg).unwrap().normalized().unwrap()
    }

    #[test]
    fn market_against_itself_is_bitwise_flat() {
        let panel = sim_panel(41);
        let res = run_backtest(&panel, &StrategyKind::Market, RebalanceSchedule::Monthly, 0.0)
            .unwrap();
        for k in 0..res.len() {
            assert_eq!(res.value[k], res.market_value[k]);
            assert_eq!(res.rel_log_value[k], 0.0);
        }
        for rec in &res.rebalances {
            assert_eq!(rec.turnover, 0.0);
        }
    }

    #[test]
    fn hand_worked_two_asset_rebalance() {
        // Equal prices at formation; A gains 10% in month two, then holds.
        let csv = "date,A,B\n2000-01-03,1.0,1.0\n2000-02-01,1.1,1.0\n2000-03-01,1.21,1.0\n";
        let panel = panel_from(csv);
        let res = run_backtest(&panel, &StrategyKind::Equal, RebalanceSchedule::Monthly, 0.0)
            .unwrap();

        // Formation: V = 2, weights (1/2, 1/2), shares (1, 1).
        assert_eq!(res.value[0], 2.0);
        assert_eq!(res.rebalances[0].shares, vec![1.0, 1.0]);

        // Month two: value 2.1 before and after the trade (self-financing),
        // θ = (11/21, 10/21), rebalance to shares (1.05/1.1, 1.05).
        assert!((res.value[1] - 2.1).abs() < 1e-15);
        assert!((res.theta[1][0] - 11.0 / 21.0).abs() < 1e-15);
        let rec = &res.rebalances[1];
        assert!((rec.shares[0] - 1.05 / 1.1).abs() < 1e-12);
        assert!((rec.shares[1] - 1.05).abs() < 1e-12);
        // Turnover: |Δs_A|·1.1 + |Δs_B|·1.0 over 2.1 = 0.1/2.1.
        assert!((rec.turnover - 0.1 / 2.1).abs() < 1e-12);

        // Month three: A gains again; the equal account lags the market.
        let v_expect = (1.05 / 1.1) * 1.21 + 1.05;
        assert!((res.value[2] - v_expect).abs() < 1e-12);
        assert!((res.market_value[2] - 2.21).abs() < 1e-15);
        assert!(res.rel_log_value[2] < 0.0);
    }

    #[test]
    fn rebalances_are_self_financing() {
        let panel = sim_panel(42);
        for strat in [
            StrategyKind::Equal,
            StrategyKind::parse("ces:gamma=-0.5").unwrap(),
            StrategyKind::parse("additive-geo").unwrap(),
        ] {
            let res = run_backtest(&panel, &strat, RebalanceSchedule::Monthly, 0.25).unwrap();
            // Between consecutive records, the account value at the next
            // rebalance must equal the previously held shares marked there…
            for pair in res.rebalances.windows(2) {
                let (prev, next) = (&pair[0], &pair[1]);
                let t = next.date_index;
                let held: f64 = prev
                    .assets
                    .iter()
                    .zip(&prev.shares)
                    .map(|(&a, s)| {
                        s * panel
                            .index(panel.date_index(next.date).unwrap(), a)
                            .unwrap()
                    })
                    .sum();
                assert!(
                    (held - res.value[t]).abs() <= 1e-9 * res.value[t].abs(),
                    "{}: value discontinuity at {}",
                    strat.label(),
                    next.date
                );
                // …and the new shares are worth exactly the same value.
                let after: f64 = next
                    .assets
                    .iter()
                    .zip(&next.shares)
                    .map(|(&a, s)| {
                        s * panel
                            .index(panel.date_index(next.date).unwrap(), a)
                            .unwrap()
                    })
                    .sum();
                assert!(
                    (after - held).abs() <= 1e-9 * held.abs(),
                    "{}: rebalance at {} changed the account value",
                    strat.label(),
                    next.date
                );
            }
        }
    }

    #[test]
    fn market_report_is_degenerate_in_the_right_ways() {
        let panel = sim_panel(43);
        let res = run_backtest(&panel, &StrategyKind::Market, RebalanceSchedule::Monthly, 0.0)
            .unwrap();
        let report = performance_report(&res, None).unwrap();
        assert_eq!(report.overall.relative_annualized_mean, 0.0);
        assert_eq!(report.overall.relative_annualized_sd, 0.0);
        assert_eq!(report.overall.relative_sharpe, None);
        assert_eq!(report.overall.relative_sharpe_note, RatioNote::Undefined);
        let corr = report.overall.market_correlation.unwrap();
        assert!((corr - 1.0).abs() < 1e-12);
        // Serializes cleanly (no NaN/infinite values sneak into the JSON).
        let json = report.to_json().unwrap();
        assert!(json.contains("\"undefined\""));
    }

    #[test]
    fn exact_doubling_gives_an_infinite_sharpe() {
        // Both assets double each month: returns are exactly 1.0 every
        // month (powers of two are exact), so the spread is exactly zero
        // with a nonzero mean.
        let mut csv = String::from("date,A,B\n");
        let months = [
            "2000-01-03",
            "2000-02-01",
            "2000-03-01",
            "2000-04-03",
            "2000-05-01",
        ];
        for (k, date) in months.iter().enumerate() {
            let p = (2.0f64).powi(k as i32);
            csv.push_str(&format!("{date},{p},{p}\n"));
        }
        let panel = panel_from(&csv);
        let res = run_backtest(&panel, &StrategyKind::Equal, RebalanceSchedule::Monthly, 0.0)
            .unwrap();
        let report = performance_report(&res, None).unwrap();
        assert_eq!(report.overall.annualized_mean, 12.0);
        assert_eq!(report.overall.annualized_sd, 0.0);
        assert_eq!(report.overall.sharpe, None);
        assert_eq!(report.overall.sharpe_note, RatioNote::Infinite);
        assert!(report.overall.flagged_short);
        // No price dispersion ever changes, so nothing is traded.
        for rec in &res.rebalances {
            assert_eq!(rec.turnover, 0.0);
        }
    }

    #[test]
    fn entrants_are_absorbed_at_the_next_rebalance() {
        // C first quotes mid-February; the monthly schedule absorbs it on
        // the first trading date of March. All prices frozen at 1.0 so the
        // absorption is purely an accounting event.
        let csv = "date,A,B,C\n\
                   2000-01-03,1.0,1.0,\n\
                   2000-01-17,1.0,1.0,\n\
                   2000-02-01,1.0,1.0,\n\
                   2000-02-15,1.0,1.0,1.0\n\
                   2000-03-01,1.0,1.0,1.0\n\
                   2000-03-15,1.0,1.0,1.0\n";
        let panel = panel_from(csv);
        let res = run_backtest(&panel, &StrategyKind::Market, RebalanceSchedule::Monthly, 0.0)
            .unwrap();

        // February's rebalance still trades the two-asset universe.
        assert_eq!(res.rebalances[1].date, d("2000-02-01"));
        assert_eq!(res.rebalances[1].assets, vec![0, 1]);
        assert!(res.rebalances[1].absorbed.is_empty());

        // March absorbs C: universe widens, theta is restated, the account
        // value is unchanged, and the uniform count drops from 1 to 2/3.
        let rec = &res.rebalances[2];
        assert_eq!(rec.date, d("2000-03-01"));
        assert_eq!(rec.assets, vec![0, 1, 2]);
        assert_eq!(rec.absorbed, vec![2]);
        assert_eq!(res.theta_pre[rec.date_index], Some(vec![0.5, 0.5]));
        assert_eq!(res.theta[rec.date_index].len(), 3);
        for s in &rec.shares {
            assert!((s - 2.0 / 3.0).abs() < 1e-15);
        }
        assert!((rec.turnover - (2.0 / 3.0) / 2.0 - (1.0 / 3.0) / 1.0).abs() < 1e-12);
        for k in 0..res.len() {
            assert!((res.value[k] - 2.0).abs() < 1e-15);
            assert!((res.market_value[k] - 2.0).abs() < 1e-15);
        }

        // The chained decomposition sees no drift from the accounting event.
        let series = res
            .decompose(&DispersionMeasure::NegGeometricMean, DecompositionKind::Log)
            .unwrap();
        for k in 0..series.len() {
            assert!(series.drift_residual[k].abs() < 1e-12);
            assert!(series.gap[k].abs() < 1e-12);
        }
    }

    #[test]
    fn burn_in_defers_formation() {
        let panel = sim_panel(44);
        let res =
            run_backtest(&panel, &StrategyKind::Equal, RebalanceSchedule::Monthly, 1.0).unwrap();
        let cutoff = panel.dates()[0] + Days::new(365);
        assert!(res.formation_date >= cutoff);
        assert_eq!(res.dates[0], res.formation_date);
        // Formation is the FIRST monthly date past the cutoff: within ~1 month.
        assert!(res.formation_date <= cutoff + Days::new(40));
        assert_eq!(res.len(), panel.n_dates() - panel.date_index(res.formation_date).unwrap());

        // A burn-in longer than the panel is rejected.
        match run_backtest(&panel, &StrategyKind::Equal, RebalanceSchedule::Monthly, 50.0) {
            Err(Error::Parameter(msg)) => assert!(msg.contains("burn-in")),
            other => panic!("expected a parameter error, got {other:?}"),
        }
    }

    #[test]
    fn ces_gamma_one_tracks_the_market() {
        let panel = sim_panel(45);
        let ces = StrategyKind::parse("ces:gamma=1.0").unwrap();
        let res = run_backtest(&panel, &ces, RebalanceSchedule::EveryStep, 0.0).unwrap();
        for k in 0..res.len() {
            assert!(
                res.rel_log_value[k].abs() <= 1e-12,
                "date {}: rel log {}",
                res.dates[k],
                res.rel_log_value[k]
            );
        }
    }

    #[test]
    fn sub_period_blocks_partition_the_months() {
        let panel = sim_panel(46);
        let res =
            run_backtest(&panel, &StrategyKind::Equal, RebalanceSchedule::Monthly, 0.0).unwrap();
        let report = performance_report(&res, Some(1)).unwrap();
        assert!(!report.sub_periods.is_empty());
        let total: usize = report.sub_periods.iter().map(|l| l.n_months).sum();
        assert_eq!(total, report.overall.n_months);
        for line in &report.sub_periods {
            assert!(line.n_months <= 12);
        }
        // Text rendering includes every period label.
        let text = report.render_text();
        for line in &report.sub_periods {
            assert!(text.contains(&line.label));
        }
        // CSV rendering has one row per line plus a header.
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let rows = String::from_utf8(buf).unwrap().lines().count();
        assert_eq!(rows, 2 + report.sub_periods.len());
    }

    #[test]
    fn values_csv_round_trip_shape() {
        let panel = sim_panel(47);
        let res =
            run_backtest(&panel, &StrategyKind::Equal, RebalanceSchedule::Monthly, 0.0).unwrap();
        let mut buf = Vec::new();
        res.write_values_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "date,value,market_value,rel_log_value"
        );
        assert_eq!(text.lines().count(), res.len() + 1);
        let mut buf = Vec::new();
        res.write_rebalances_csv(&mut buf, &panel).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() > res.rebalances.len());
    }
}
