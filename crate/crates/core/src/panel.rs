//! Date × asset price panels: loading, validation, normalization, and
//! conversion to relative prices.
//!
//! The on-disk format is a CSV with an ISO-8601 `date` first column and one
//! column per asset. An empty cell means the asset is not yet trading; the
//! first quoted cell marks the asset's entry date. After entry, short quote
//! interruptions (up to a configurable limit, default 5 consecutive rows)
//! are forward-filled at load time; longer gaps reject the file.
//!
//! Normalization rebases every asset to index 1.0 at a chosen base date,
//! working entirely in log space so that log index changes equal log price
//! changes exactly. An asset that enters after the base date starts at the
//! arithmetic mean of the log indexes of the assets already present on its
//! entry date (equivalently, the geometric mean of their index levels), so
//! entrants begin life at the prevailing average index rather than at an
//! arbitrary level.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::error::Error;
use crate::simplex::RelativePriceVector;
use crate::Result;

/// Default cap on consecutive missing quotes that are forward-filled.
pub const DEFAULT_FILL_LIMIT: usize = 5;

/// An asset's identity and the first date it quotes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetMeta {
    pub id: String,
    pub entry_date: NaiveDate,
}

/// A validated raw price panel: strictly increasing dates, strictly positive
/// quotes, and for every asset a contiguous run of quotes from its entry
/// date to the end of the panel (short gaps having been forward-filled).
#[derive(Debug, Clone, PartialEq)]
pub struct RawPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetMeta>,
    /// Date-major: `prices[t][a]`; `None` strictly before the asset's entry.
    prices: Vec<Vec<Option<f64>>>,
}

/// A price panel rebased so every asset's index is 1.0 at the base date
/// (late entrants start at the geometric mean of the incumbent indexes).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetMeta>,
    indexes: Vec<Vec<Option<f64>>>,
    base_date: NaiveDate,
}

impl RawPanel {
    /// Reads and validates a panel from a CSV file.
    pub fn load(path: impl AsRef<Path>, fill_limit: usize) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, fill_limit)
    }

    /// Reads and validates a panel from any reader.
    pub fn from_reader<R: Read>(reader: R, fill_limit: usize) -> Result<Self> {
        let (dates, assets, prices) = read_panel_csv(reader, fill_limit)?;
        Ok(Self { dates, assets, prices })
    }

    /// Builds a panel from in-memory parts, applying the same validation and
    /// gap-filling as the CSV loader.
    pub fn from_parts(
        dates: Vec<NaiveDate>,
        ids: Vec<String>,
        cells: Vec<Vec<Option<f64>>>,
        fill_limit: usize,
    ) -> Result<Self> {
        let (dates, assets, prices) = validate_panel(dates, ids, cells, fill_limit)?;
        Ok(Self { dates, assets, prices })
    }

    /// Writes the panel in the same CSV format the loader accepts.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_panel_csv(writer, &self.dates, &self.assets, &self.prices)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// The quote for asset `a` on date index `t`, if the asset has entered.
    pub fn price(&self, t: usize, a: usize) -> Option<f64> {
        self.prices[t][a]
    }
}

impl NormalizedPanel {
    /// Rebases `raw` so every asset present on `base_date` has index 1.0
    /// there. Errors if the base date is not a panel date or fewer than two
    /// assets quote on it.
    pub fn from_raw(raw: &RawPanel, base_date: NaiveDate) -> Result<Self> {
        let base_idx = raw
            .dates
            .iter()
            .position(|&d| d == base_date)
            .ok_or(Error::MissingDate {
                date: base_date,
                context: "base date for normalization".to_string(),
            })?;

        let initial: Vec<usize> = (0..raw.n_assets())
            .filter(|&a| raw.assets[a].entry_date <= base_date)
            .collect();
        if initial.len() < 2 {
            return Err(Error::InsufficientAssets {
                message: format!(
                    "normalization needs at least 2 assets quoting on the base date {base_date}, found {}",
                    initial.len()
                ),
            });
        }

        let n_dates = raw.n_dates();
        let n_assets = raw.n_assets();
        // Log indexes, date-major, None before entry.
        let mut log_idx: Vec<Vec<Option<f64>>> = vec![vec![None; n_assets]; n_dates];

        // Assets present at the base date: log index = log p(t) − log p(base).
        for &a in &initial {
            let base_price = raw.prices[base_idx][a].expect("entry <= base implies a quote");
            let ln_base = base_price.ln();
            for t in 0..n_dates {
                if let Some(p) = raw.prices[t][a] {
                    log_idx[t][a] = Some(p.ln() - ln_base);
                }
            }
        }

        // Entrants, in entry order: anchor at the mean log index of the
        // assets already present on the entry date.
        let mut entrants: Vec<usize> = (0..n_assets)
            .filter(|&a| raw.assets[a].entry_date > base_date)
            .collect();
        entrants.sort_by_key(|&a| raw.assets[a].entry_date);
        for &a in &entrants {
            let entry = raw.assets[a].entry_date;
            let entry_idx = raw
                .dates
                .iter()
                .position(|&d| d == entry)
                .expect("entry date comes from the panel");
            let incumbents: Vec<f64> = (0..n_assets)
                .filter(|&j| raw.assets[j].entry_date < entry)
                .map(|j| log_idx[entry_idx][j].expect("incumbent has an index at the entry date"))
                .collect();
            // Guaranteed non-empty: the initial assets entered on or before
            // the base date, which is before any entrant.
            let anchor = incumbents.iter().sum::<f64>() / incumbents.len() as f64;
            let ln_entry_price = raw.prices[entry_idx][a]
                .expect("entry date has a quote")
                .ln();
            for t in entry_idx..n_dates {
                if let Some(p) = raw.prices[t][a] {
                    log_idx[t][a] = Some(anchor + (p.ln() - ln_entry_price));
                }
            }
        }

        let indexes: Vec<Vec<Option<f64>>> = log_idx
            .iter()
            .map(|row| row.iter().map(|c| c.map(f64::exp)).collect())
            .collect();

        Ok(Self {
            dates: raw.dates.clone(),
            assets: raw.assets.clone(),
            indexes,
            base_date,
        })
    }

    /// Loads an already-normalized panel from CSV. The stored values are
    /// taken as index levels; the base date is recorded as the first panel
    /// date (the format itself carries no metadata row).
    pub fn load(path: impl AsRef<Path>, fill_limit: usize) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, fill_limit)
    }

    /// Reader-based variant of [`NormalizedPanel::load`].
    pub fn from_reader<R: Read>(reader: R, fill_limit: usize) -> Result<Self> {
        let (dates, assets, indexes) = read_panel_csv(reader, fill_limit)?;
        let base_date = *dates.first().ok_or_else(|| Error::Parse {
            location: "panel".to_string(),
            message: "panel has no rows".to_string(),
        })?;
        Ok(Self { dates, assets, indexes, base_date })
    }

    /// Writes the panel in the shared CSV format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_panel_csv(writer, &self.dates, &self.assets, &self.indexes)
    }

    /// Reinterprets the index panel as a raw price panel (index levels are
    /// prices in normalized units), e.g. to re-normalize at a new base date.
    pub fn as_raw(&self) -> RawPanel {
        RawPanel {
            dates: self.dates.clone(),
            assets: self.assets.clone(),
            prices: self.indexes.clone(),
        }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetMeta] {
        &self.assets
    }

    pub fn base_date(&self) -> NaiveDate {
        self.base_date
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Index level for asset `a` on date index `t`, if the asset has entered.
    pub fn index(&self, t: usize, a: usize) -> Option<f64> {
        self.indexes[t][a]
    }

    /// Position of `date` in the panel.
    pub fn date_index(&self, date: NaiveDate) -> Result<usize> {
        self.dates
            .binary_search(&date)
            .map_err(|_| Error::MissingDate {
                date,
                context: "panel lookup".to_string(),
            })
    }

    /// Indexes of the assets that have entered by date index `t`.
    pub fn active_assets(&self, t: usize) -> Vec<usize> {
        let date = self.dates[t];
        (0..self.n_assets())
            .filter(|&a| self.assets[a].entry_date <= date)
            .collect()
    }

    /// Relative prices over all assets on `date`. Errors if any asset has
    /// not yet entered — restrict to the active set explicitly with
    /// [`NormalizedPanel::relative_prices_over`] in that case.
    pub fn relative_prices(&self, date: NaiveDate) -> Result<RelativePriceVector> {
        let t = self.date_index(date)?;
        let all: Vec<usize> = (0..self.n_assets()).collect();
        for &a in &all {
            if self.indexes[t][a].is_none() {
                return Err(Error::Domain(format!(
                    "asset {} has not entered by {date}; restrict to the active subset explicitly",
                    self.assets[a].id
                )));
            }
        }
        self.relative_prices_over(t, &all)
    }

    /// Relative prices over an explicit asset subset at date index `t`.
    pub fn relative_prices_over(&self, t: usize, subset: &[usize]) -> Result<RelativePriceVector> {
        let mut prices = Vec::with_capacity(subset.len());
        for &a in subset {
            let p = self.indexes[t][a].ok_or_else(|| {
                Error::Domain(format!(
                    "asset {} has no index on {} (not yet entered)",
                    self.assets[a].id, self.dates[t]
                ))
            })?;
            prices.push(p);
        }
        RelativePriceVector::from_prices(&prices)
    }
}

/// Parsed panel pieces: dates, asset metadata, and the (possibly gappy) price grid.
type PanelParts = (Vec<NaiveDate>, Vec<AssetMeta>, Vec<Vec<Option<f64>>>);

/// Shared CSV reader: parses, validates, and forward-fills a panel file.
fn read_panel_csv<R: Read>(reader: R, fill_limit: usize) -> Result<PanelParts> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse {
            location: "header".to_string(),
            message: "expected a date column plus at least one asset column".to_string(),
        });
    }
    let ids: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row_no + 2; // header is line 1
        if record.len() != ids.len() + 1 {
            return Err(Error::Parse {
                location: format!("line {line}"),
                message: format!("expected {} columns, found {}", ids.len() + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            location: format!("line {line}, column date"),
            message: format!("bad date '{}': {e}", &record[0]),
        })?;
        let mut row = Vec::with_capacity(ids.len());
        for (a, cell) in record.iter().skip(1).enumerate() {
            if cell.is_empty() {
                row.push(None);
            } else {
                let value: f64 = cell.parse().map_err(|_| Error::Parse {
                    location: format!("line {line}, column {}", ids[a]),
                    message: format!("bad number '{cell}'"),
                })?;
                row.push(Some(value));
            }
        }
        dates.push(date);
        cells.push(row);
    }

    validate_panel(dates, ids, cells, fill_limit)
}

/// Validation shared by the CSV loader and `from_parts`: date order,
/// positivity, entry contiguity, and gap filling.
fn validate_panel(
    dates: Vec<NaiveDate>,
    ids: Vec<String>,
    mut cells: Vec<Vec<Option<f64>>>,
    fill_limit: usize,
) -> Result<PanelParts> {
    if dates.is_empty() {
        return Err(Error::Parse {
            location: "panel".to_string(),
            message: "panel has no rows".to_string(),
        });
    }
    for w in dates.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::DateOrder { prev: w[0], next: w[1] });
        }
    }

    let mut assets = Vec::with_capacity(ids.len());
    for (a, id) in ids.iter().enumerate() {
        // Positivity first, so a bad quote is reported even inside a gap run.
        for (t, row) in cells.iter().enumerate() {
            if let Some(v) = row[a] {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::NonPositivePrice {
                        asset: id.clone(),
                        date: dates[t],
                    });
                }
            }
        }

        let entry_idx = cells
            .iter()
            .position(|row| row[a].is_some())
            .ok_or_else(|| Error::Parse {
                location: format!("column {id}"),
                message: "asset never quotes".to_string(),
            })?;

        // Forward-fill post-entry gaps up to the limit.
        let mut t = entry_idx + 1;
        while t < cells.len() {
            if cells[t][a].is_none() {
                let gap_start = t;
                while t < cells.len() && cells[t][a].is_none() {
                    t += 1;
                }
                let gap_len = t - gap_start;
                if gap_len > fill_limit {
                    return Err(Error::Gap {
                        asset: id.clone(),
                        date: dates[gap_start],
                        gap_len,
                        limit: fill_limit,
                    });
                }
                let last = cells[gap_start - 1][a];
                for s in gap_start..gap_start + gap_len {
                    cells[s][a] = last;
                }
            } else {
                t += 1;
            }
        }

        assets.push(AssetMeta {
            id: id.clone(),
            entry_date: dates[entry_idx],
        });
    }

    Ok((dates, assets, cells))
}

fn write_panel_csv<W: Write>(
    writer: W,
    dates: &[NaiveDate],
    assets: &[AssetMeta],
    cells: &[Vec<Option<f64>>],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(assets.iter().map(|a| a.id.clone()));
    wtr.write_record(&header)?;
    for (t, date) in dates.iter().enumerate() {
        let mut row = vec![date.format("%Y-%m-%d").to_string()];
        for cell in &cells[t] {
            row.push(match cell {
                Some(v) => format!("{v}"),
                None => String::new(),
            });
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
