//! Small statistical helpers shared by the decomposition and backtest
//! modules. Sample statistics use the n−1 convention.

use chrono::{Datelike, NaiveDate};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_std(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Pearson correlation; NaN when either series is degenerate.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() != ys.len() || xs.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(xs), mean(ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Positions of the last date of each calendar month in a sorted date list.
pub fn month_end_indices(dates: &[NaiveDate]) -> Vec<usize> {
    let mut idx = Vec::new();
    for k in 0..dates.len() {
        let last_of_month = k + 1 == dates.len()
            || (dates[k + 1].year(), dates[k + 1].month()) != (dates[k].year(), dates[k].month());
        if last_of_month {
            idx.push(k);
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_ends_pick_the_last_trading_date() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let dates = vec![
            d("2000-01-28"),
            d("2000-01-31"),
            d("2000-02-01"),
            d("2000-02-29"),
            d("2000-03-01"),
        ];
        assert_eq!(month_end_indices(&dates), vec![1, 3, 4]);
    }

    #[test]
    fn basics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((sample_variance(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert!((sample_std(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        assert!((correlation(&xs, &ys) - 1.0).abs() < 1e-12);
        let zs = [8.0, 6.0, 4.0, 2.0];
        assert!((correlation(&xs, &zs) + 1.0).abs() < 1e-12);
        assert!(correlation(&xs, &[1.0, 1.0, 1.0, 1.0]).is_nan());
    }
}
