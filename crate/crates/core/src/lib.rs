//! Dispersion-generated portfolio machinery.
//!
//! This crate implements the full pipeline for studying portfolio strategies
//! generated by convex measures of relative-price dispersion:
//!
//! * [`panel`] — loading, validating, and normalizing date × asset price
//!   panels, and converting prices to relative prices on the open simplex.
//! * [`dispersion`] — convex dispersion measures (negative geometric mean,
//!   negative CES, custom) with analytic gradients and Hessians.
//! * [`portfolio`] — weight and share rules for the market portfolio and for
//!   strategies generated by a dispersion measure (multiplicative and
//!   additive forms).
//! * [`decomposition`] — realized covariation, discrete drift increments, and
//!   the decomposition of cumulative abnormal return into a dispersion-change
//!   component plus a drift component.
//! * [`simulator`] — correlated geometric Brownian motion panels (optionally
//!   with mean reversion of relative prices) with deterministic seeding and
//!   consistent path refinement for convergence studies.
//! * [`backtest`] — self-financing backtests with periodic rebalancing,
//!   burn-in handling, and performance reporting against the market.
//!
//! The central identity connecting these pieces: for a strategy generated by
//! a dispersion measure `F < 0`, the cumulative abnormal log return satisfies
//!
//! ```text
//! log V_s(T) - log V_m(T) = ∫ (-dα_F / F) + [log(-F(θ(T))) - log(-F(θ(0)))]
//! ```
//!
//! where `α_F` is the drift accumulated through the curvature of `F` along
//! the relative-price path `θ`. The discrete estimators in [`decomposition`]
//! reproduce both sides of this identity on observed or simulated panels.

// The numeric kernels walk several parallel arrays by index; iterator
// adapters obscure rather than clarify those loops.
#![allow(clippy::needless_range_loop)]

pub mod backtest;
pub mod decomposition;
pub mod dispersion;
pub mod error;
pub mod panel;
pub mod portfolio;
pub mod simplex;
pub mod simulator;

pub(crate) mod stats;

pub use backtest::{
    BacktestResult, PerformanceReport, RebalanceRecord, RebalanceSchedule, StatLine,
};
pub use decomposition::{
    ComponentStats, DecompositionKind, DecompositionSeries, DriftIncrement,
};
pub use dispersion::{CesParameter, DispersionMeasure, OrderingReport};
pub use error::Error;
pub use panel::{AssetMeta, NormalizedPanel, RawPanel};
pub use portfolio::{ShareVector, StrategyKind, WeightVector};
pub use simplex::RelativePriceVector;
pub use simulator::{Regime, SimConfig, SimPanel};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
