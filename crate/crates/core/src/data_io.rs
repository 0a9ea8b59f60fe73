//! CSV input and output: price panels, classifications, reports and dense
//! matrices.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit-for-bit. Parsing is order-independent: the same rows in any order give
//! the same panel.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backtest::{BacktestError, BacktestReport, Bar, Metrics, PricePanel};
use crate::taxonomy::{ClassificationTree, THREE_LEVEL_NAMES};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{source_name}: {error}")]
    Io { source_name: String, error: io::Error },

    #[error("{source_name}: {error}")]
    Csv { source_name: String, error: csv::Error },

    #[error("{source_name}: missing column '{column}'")]
    MissingColumn { source_name: String, column: String },

    #[error("{source_name} row {row}: cannot parse {column} '{value}'")]
    Parse {
        source_name: String,
        row: u64,
        column: String,
        value: String,
    },

    #[error("{source_name} row {row}: nonpositive {column} {value}")]
    NonPositivePrice {
        source_name: String,
        row: u64,
        column: String,
        value: f64,
    },

    #[error("{source_name} row {row}: negative volume {value}")]
    NegativeVolume { source_name: String, row: u64, value: f64 },

    #[error("{source_name} row {row}: duplicate row for {key}")]
    Duplicate { source_name: String, row: u64, key: String },

    #[error("{source_name} row {row}: {level} '{label}' is under '{first}' and '{second}'")]
    InconsistentParent {
        source_name: String,
        row: u64,
        level: &'static str,
        label: String,
        first: String,
        second: String,
    },

    #[error("{source_name}: {message}")]
    Invalid { source_name: String, message: String },

    #[error(transparent)]
    Backtest(#[from] BacktestError),
}

fn io_err(source_name: &str) -> impl FnOnce(io::Error) -> DataError + '_ {
    move |error| DataError::Io {
        source_name: source_name.to_string(),
        error,
    }
}

fn csv_err(source_name: &str) -> impl FnOnce(csv::Error) -> DataError + '_ {
    move |error| DataError::Csv {
        source_name: source_name.to_string(),
        error,
    }
}

/// Formats with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(io_err(&path.display().to_string()))
}

fn create(path: &Path) -> Result<File, DataError> {
    File::create(path).map_err(io_err(&path.display().to_string()))
}

/// Column positions by header name; extra columns are ignored.
struct Columns<'a> {
    source_name: &'a str,
    index: HashMap<String, usize>,
}

impl<'a> Columns<'a> {
    fn new(source_name: &'a str, headers: &csv::StringRecord) -> Self {
        let index = headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        Self { source_name, index }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn require(&self, name: &str) -> Result<usize, DataError> {
        self.find(name).ok_or_else(|| DataError::MissingColumn {
            source_name: self.source_name.to_string(),
            column: name.to_string(),
        })
    }
}

fn row_number(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field(record: &csv::StringRecord, col: usize) -> &str {
    record.get(col).unwrap_or("").trim()
}

fn parse_f64(source_name: &str, record: &csv::StringRecord, col: usize, name: &str) -> Result<f64, DataError> {
    let raw = field(record, col);
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::Parse {
            source_name: source_name.to_string(),
            row: row_number(record),
            column: name.to_string(),
            value: raw.to_string(),
        })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PriceOptions {
    /// Derive `adj_open = open · adj_close / close` when the column is absent.
    pub derive_adj_open: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPrices {
    pub panel: PricePanel,
    /// True when the adjusted open was derived rather than read.
    pub adj_open_derived: bool,
}

pub fn load_prices(path: &Path, options: PriceOptions) -> Result<LoadedPrices, DataError> {
    read_prices(open(path)?, &path.display().to_string(), options)
}

/// Reads `date,ticker,open,close,adj_open,adj_close,volume`. Tickers are
/// sorted; dates run from the most recent (`s = 0`) back.
pub fn read_prices(
    reader: impl io::Read,
    source_name: &str,
    options: PriceOptions,
) -> Result<LoadedPrices, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err(source_name))?.clone();
    let cols = Columns::new(source_name, &headers);
    let date_col = cols.require("date")?;
    let ticker_col = cols.require("ticker")?;
    let open_col = ("open", cols.require("open")?);
    let close_col = ("close", cols.require("close")?);
    let adj_close_col = ("adj_close", cols.require("adj_close")?);
    let adj_open_col = match cols.find("adj_open") {
        Some(c) => Some(c),
        None if options.derive_adj_open => None,
        None => return Err(cols.require("adj_open").unwrap_err()),
    };
    let volume_col = cols.require("volume")?;

    let mut rows: BTreeMap<(String, String), Bar> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(source_name))?;
        let row = row_number(&record);
        let raw_date = field(&record, date_col);
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|_| DataError::Parse {
                source_name: source_name.to_string(),
                row,
                column: "date".into(),
                value: raw_date.to_string(),
            })?
            .format("%Y-%m-%d")
            .to_string();
        let ticker = field(&record, ticker_col).to_string();
        if ticker.is_empty() {
            return Err(DataError::Parse {
                source_name: source_name.to_string(),
                row,
                column: "ticker".into(),
                value: String::new(),
            });
        }
        let price = |(name, col): (&str, usize)| -> Result<f64, DataError> {
            let v = parse_f64(source_name, &record, col, name)?;
            if v <= 0.0 {
                return Err(DataError::NonPositivePrice {
                    source_name: source_name.to_string(),
                    row,
                    column: name.to_string(),
                    value: v,
                });
            }
            Ok(v)
        };
        let open = price(open_col)?;
        let close = price(close_col)?;
        let adj_close = price(adj_close_col)?;
        let adj_open = match adj_open_col {
            Some(c) => price(("adj_open", c))?,
            None => open * adj_close / close,
        };
        let volume = parse_f64(source_name, &record, volume_col, "volume")?;
        if volume < 0.0 {
            return Err(DataError::NegativeVolume {
                source_name: source_name.to_string(),
                row,
                value: volume,
            });
        }
        let bar = Bar {
            open,
            close,
            adj_open,
            adj_close,
            volume,
        };
        let key = (ticker, date);
        if rows.contains_key(&key) {
            return Err(DataError::Duplicate {
                source_name: source_name.to_string(),
                row,
                key: format!("{} on {}", key.0, key.1),
            });
        }
        rows.insert(key, bar);
    }
    if rows.is_empty() {
        return Err(DataError::Invalid {
            source_name: source_name.to_string(),
            message: "no price rows".into(),
        });
    }

    let tickers: Vec<String> = rows.keys().map(|(t, _)| t.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let dates: Vec<String> = rows.keys().map(|(_, d)| d.clone()).collect::<BTreeSet<_>>().into_iter().rev().collect();
    let date_index: HashMap<&str, usize> = dates.iter().enumerate().map(|(s, d)| (d.as_str(), s)).collect();
    let ticker_index: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let nd = dates.len();
    let mut bars = vec![None; tickers.len() * nd];
    for ((t, d), bar) in &rows {
        bars[ticker_index[t.as_str()] * nd + date_index[d.as_str()]] = Some(*bar);
    }
    Ok(LoadedPrices {
        panel: PricePanel::new(tickers, dates, bars)?,
        adj_open_derived: adj_open_col.is_none(),
    })
}

/// Writes a panel in the format [`read_prices`] accepts, oldest date first.
pub fn write_prices(panel: &PricePanel, path: &Path) -> Result<(), DataError> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["date", "ticker", "open", "close", "adj_open", "adj_close", "volume"])
        .map_err(csv_err(&name))?;
    for s in (0..panel.n_dates()).rev() {
        for i in 0..panel.n_stocks() {
            let Some(b) = panel.bar(i, s) else { continue };
            w.write_record([
                panel.dates()[s].clone(),
                panel.tickers()[i].clone(),
                format_float(b.open),
                format_float(b.close),
                format_float(b.adj_open),
                format_float(b.adj_close),
                format_float(b.volume),
            ])
            .map_err(csv_err(&name))?;
        }
    }
    w.flush().map_err(io_err(&name))
}

/// A classification aligned to a ticker list.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Tree over the classified tickers, in ticker-list order.
    pub tree: ClassificationTree,
    /// Positions in the ticker list of the classified tickers.
    pub classified: Vec<usize>,
    /// Tickers without a classification row; they are left out of the tree.
    pub excluded: Vec<String>,
    /// Labels per level, finest first, indexed by group.
    pub labels: Vec<Vec<String>>,
}

pub fn load_classification(path: &Path, tickers: &[String]) -> Result<Classification, DataError> {
    read_classification(open(path)?, &path.display().to_string(), tickers)
}

/// Every ticker in the file, in file order.
pub fn load_full_classification(path: &Path) -> Result<(Vec<String>, Classification), DataError> {
    let name = path.display().to_string();
    let text = fs::read(path).map_err(io_err(&name))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_slice());
    let headers = rdr.headers().map_err(csv_err(&name))?.clone();
    let ticker_col = Columns::new(&name, &headers).require("ticker")?;
    let tickers = rdr
        .records()
        .map(|r| r.map(|r| field(&r, ticker_col).to_string()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(csv_err(&name))?;
    let classification = read_classification(text.as_slice(), &name, &tickers)?;
    Ok((tickers, classification))
}

#[derive(Default)]
struct Interner {
    index: HashMap<String, usize>,
    labels: Vec<String>,
}

impl Interner {
    fn intern(&mut self, label: &str) -> usize {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        self.index.insert(label.to_string(), self.labels.len());
        self.labels.push(label.to_string());
        self.labels.len() - 1
    }
}

/// Reads `ticker,sector,industry,sub_industry`. Labels are numbered in order
/// of first appearance among rows for listed tickers. Every row is checked
/// for consistent parentage, listed or not.
pub fn read_classification(
    reader: impl io::Read,
    source_name: &str,
    tickers: &[String],
) -> Result<Classification, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err(source_name))?.clone();
    let cols = Columns::new(source_name, &headers);
    let ticker_col = cols.require("ticker")?;
    let level_cols = [
        cols.require("sub_industry")?,
        cols.require("industry")?,
        cols.require("sector")?,
    ];

    let wanted: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut seen: HashMap<String, u64> = HashMap::new();
    // label -> (parent label, first row), for sub-industries then industries
    let mut parents: [HashMap<String, String>; 2] = Default::default();
    let mut interners: [Interner; 3] = Default::default();
    let mut sub_of_ticker: HashMap<usize, usize> = HashMap::new();

    for record in rdr.records() {
        let record = record.map_err(csv_err(source_name))?;
        let row = row_number(&record);
        let ticker = field(&record, ticker_col).to_string();
        let labels = level_cols.map(|c| field(&record, c).to_string());
        if let Some(l) = labels.iter().position(String::is_empty) {
            return Err(DataError::Parse {
                source_name: source_name.to_string(),
                row,
                column: ["sub_industry", "industry", "sector"][l].into(),
                value: String::new(),
            });
        }
        if seen.insert(ticker.clone(), row).is_some() {
            return Err(DataError::Duplicate {
                source_name: source_name.to_string(),
                row,
                key: ticker,
            });
        }
        for l in 0..2 {
            match parents[l].get(&labels[l]) {
                Some(p) if *p != labels[l + 1] => {
                    return Err(DataError::InconsistentParent {
                        source_name: source_name.to_string(),
                        row,
                        level: THREE_LEVEL_NAMES[l],
                        label: labels[l].clone(),
                        first: p.clone(),
                        second: labels[l + 1].clone(),
                    })
                }
                Some(_) => {}
                None => {
                    parents[l].insert(labels[l].clone(), labels[l + 1].clone());
                }
            }
        }
        if let Some(&i) = wanted.get(ticker.as_str()) {
            let ids = [0, 1, 2].map(|l| interners[l].intern(&labels[l]));
            sub_of_ticker.insert(i, ids[0]);
        }
    }

    let mut classified = Vec::new();
    let mut excluded = Vec::new();
    for (i, t) in tickers.iter().enumerate() {
        if sub_of_ticker.contains_key(&i) {
            classified.push(i);
        } else {
            excluded.push(t.clone());
        }
    }
    if classified.is_empty() {
        return Err(DataError::Invalid {
            source_name: source_name.to_string(),
            message: "no listed ticker has a classification".into(),
        });
    }
    let stock_sub: Vec<usize> = classified.iter().map(|i| sub_of_ticker[i]).collect();
    let parent_ids = |l: usize| -> Vec<usize> {
        interners[l]
            .labels
            .iter()
            .map(|label| interners[l + 1].index[&parents[l][label]])
            .collect()
    };
    let (sub_to_ind, ind_to_sec) = (parent_ids(0), parent_ids(1));
    let cards = (interners[0].labels.len(), interners[1].labels.len(), interners[2].labels.len());
    let tree = ClassificationTree::three_level(stock_sub, sub_to_ind, ind_to_sec, cards).map_err(|e| {
        DataError::Invalid {
            source_name: source_name.to_string(),
            message: e.to_string(),
        }
    })?;
    if !excluded.is_empty() {
        log::warn!("{source_name}: {} tickers have no classification and are excluded", excluded.len());
    }
    Ok(Classification {
        tree,
        classified,
        excluded,
        labels: interners.into_iter().map(|i| i.labels).collect(),
    })
}

/// Writes `ticker,sector,industry,sub_industry` rows.
pub fn write_classification(rows: &[(String, [String; 3])], path: &Path) -> Result<(), DataError> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["ticker", "sector", "industry", "sub_industry"])
        .map_err(csv_err(&name))?;
    for (ticker, [sector, industry, sub]) in rows {
        w.write_record([ticker, sector, industry, sub]).map_err(csv_err(&name))?;
    }
    w.flush().map_err(io_err(&name))
}

/// `level,index,label` for every interned label.
pub fn write_label_map(classification: &Classification, path: &Path) -> Result<(), DataError> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["level", "index", "label"]).map_err(csv_err(&name))?;
    for (l, labels) in classification.labels.iter().enumerate() {
        for (k, label) in labels.iter().enumerate() {
            w.write_record([THREE_LEVEL_NAMES[l], &k.to_string(), label])
                .map_err(csv_err(&name))?;
        }
    }
    w.flush().map_err(io_err(&name))
}

/// Style loadings from `ticker,<factor>,...`, one row per listed ticker in
/// list order. Rows for other tickers are ignored.
pub fn load_style_loadings(path: &Path, tickers: &[String]) -> Result<DMatrix<f64>, DataError> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().map_err(csv_err(&name))?.clone();
    let ticker_col = Columns::new(&name, &headers).require("ticker")?;
    let factor_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != ticker_col).collect();
    let mut rows: HashMap<String, Vec<f64>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(&name))?;
        let ticker = field(&record, ticker_col).to_string();
        let values = factor_cols
            .iter()
            .map(|&c| parse_f64(&name, &record, c, &headers[c]))
            .collect::<Result<Vec<_>, _>>()?;
        if rows.insert(ticker.clone(), values).is_some() {
            return Err(DataError::Duplicate {
                source_name: name,
                row: row_number(&record),
                key: ticker,
            });
        }
    }
    let mut m = DMatrix::zeros(tickers.len(), factor_cols.len());
    for (i, t) in tickers.iter().enumerate() {
        let values = rows.get(t).ok_or_else(|| DataError::Invalid {
            source_name: name.clone(),
            message: format!("no style loadings for {t}"),
        })?;
        for (j, v) in values.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Headerless comma-separated rows.
pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<(), DataError> {
    let name = path.display().to_string();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    for r in 0..m.nrows() {
        w.write_record(m.row(r).iter().map(|v| format_float(*v)))
            .map_err(csv_err(&name))?;
    }
    w.flush().map_err(io_err(&name))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, DataError> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut values = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(csv_err(&name))?;
        cols = record.len();
        for c in 0..record.len() {
            values.push(parse_f64(&name, &record, c, &format!("column {}", c + 1))?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

const UNDEFINED: &str = "undefined";

fn format_optional(x: Option<f64>) -> String {
    x.map_or_else(|| UNDEFINED.to_string(), format_float)
}

/// Writes `metrics.csv` (strategy, ROC, SR, CPS) and `pnl_daily.csv` (date,
/// strategy, pnl, shares, gross, net; dates oldest first, strategies in
/// report order). Undefined metrics are written as `undefined`.
pub fn write_report(report: &BacktestReport, dir: &Path) -> Result<(), DataError> {
    let dir_name = dir.display().to_string();
    fs::create_dir_all(dir).map_err(io_err(&dir_name))?;

    let path = dir.join("metrics.csv");
    let name = path.display().to_string();
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["strategy", "roc", "sharpe", "cps"]).map_err(csv_err(&name))?;
    for s in &report.strategies {
        w.write_record([
            s.name.clone(),
            format_float(s.metrics.roc),
            format_optional(s.metrics.sharpe),
            format_optional(s.metrics.cps),
        ])
        .map_err(csv_err(&name))?;
    }
    w.flush().map_err(io_err(&name))?;

    let path = dir.join("pnl_daily.csv");
    let name = path.display().to_string();
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["date", "strategy", "pnl", "shares", "gross", "net"])
        .map_err(csv_err(&name))?;
    for (k, date) in report.dates.iter().enumerate() {
        for s in &report.strategies {
            let d = &s.days[k];
            w.write_record([
                date.clone(),
                s.name.clone(),
                format_float(d.pnl),
                format_float(d.shares),
                format_float(d.gross),
                format_float(d.net),
            ])
            .map_err(csv_err(&name))?;
        }
    }
    w.flush().map_err(io_err(&name))
}

pub fn read_metrics(path: &Path) -> Result<Vec<(String, Metrics)>, DataError> {
    let name = path.display().to_string();
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let optional = |record: &csv::StringRecord, c: usize, col: &str| -> Result<Option<f64>, DataError> {
        if field(record, c) == UNDEFINED {
            Ok(None)
        } else {
            parse_f64(&name, record, c, col).map(Some)
        }
    };
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(&name))?;
        out.push((
            field(&record, 0).to_string(),
            Metrics {
                roc: parse_f64(&name, &record, 1, "roc")?,
                sharpe: optional(&record, 2, "sharpe")?,
                cps: optional(&record, 3, "cps")?,
            },
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnlRow {
    pub date: String,
    pub strategy: String,
    pub pnl: f64,
    pub shares: f64,
    pub gross: f64,
    pub net: f64,
}

pub fn read_pnl_daily(path: &Path) -> Result<Vec<PnlRow>, DataError> {
    let name = path.display().to_string();
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(&name))?;
        out.push(PnlRow {
            date: field(&record, 0).to_string(),
            strategy: field(&record, 1).to_string(),
            pnl: parse_f64(&name, &record, 2, "pnl")?,
            shares: parse_f64(&name, &record, 3, "shares")?,
            gross: parse_f64(&name, &record, 4, "gross")?,
            net: parse_f64(&name, &record, 5, "net")?,
        });
    }
    Ok(out)
}

/// What was loaded, for the output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataManifest {
    pub price_file: String,
    pub classification_file: String,
    pub first_date: String,
    pub last_date: String,
    pub n_dates: usize,
    pub n_tickers: usize,
    pub n_classified: usize,
    pub excluded_tickers: Vec<String>,
    pub adj_open_derived: bool,
    /// SHA-256 of the parsed panel and classification.
    pub checksum: String,
}

impl DataManifest {
    pub fn new(
        price_file: &Path,
        classification_file: &Path,
        prices: &LoadedPrices,
        classification: &Classification,
    ) -> Self {
        let panel = &prices.panel;
        Self {
            price_file: price_file.display().to_string(),
            classification_file: classification_file.display().to_string(),
            first_date: panel.dates().last().cloned().unwrap_or_default(),
            last_date: panel.dates().first().cloned().unwrap_or_default(),
            n_dates: panel.n_dates(),
            n_tickers: panel.n_stocks(),
            n_classified: classification.classified.len(),
            excluded_tickers: classification.excluded.clone(),
            adj_open_derived: prices.adj_open_derived,
            checksum: content_checksum(panel, classification),
        }
    }
}

/// Hex SHA-256 over the panel's tickers, dates and bar bit patterns and the
/// classification's labels and assignments.
pub fn content_checksum(panel: &PricePanel, classification: &Classification) -> String {
    let mut h = Sha256::new();
    let mut text = |s: &str| {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    };
    panel.tickers().iter().for_each(|t| text(t));
    panel.dates().iter().for_each(|d| text(d));
    classification.labels.iter().flatten().for_each(|l| text(l));
    for i in 0..panel.n_stocks() {
        for s in 0..panel.n_dates() {
            match panel.bar(i, s) {
                None => h.update([0u8]),
                Some(b) => {
                    h.update([1u8]);
                    for v in [b.open, b.close, b.adj_open, b.adj_close, b.volume] {
                        h.update(v.to_bits().to_le_bytes());
                    }
                }
            }
        }
    }
    for &i in &classification.classified {
        h.update((i as u64).to_le_bytes());
    }
    for level in classification.tree.levels() {
        for &p in &level.parent_of {
            h.update((p as u64).to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRICES: &str = "\
date,ticker,open,close,adj_open,adj_close,volume
2020-01-02,AAA,10,11,10,11,100
2020-01-02,BBB,20,19,20,19,200
2020-01-03,AAA,11,12,11,12,100
2020-01-03,BBB,19,18,19,18,200
2020-01-06,AAA,12,12,12,12,100
2020-01-06,BBB,18,18,18,18,200
";

    fn prices(text: &str) -> Result<LoadedPrices, DataError> {
        read_prices(text.as_bytes(), "prices.csv", PriceOptions::default())
    }

    #[test]
    fn well_formed_prices() {
        let p = prices(PRICES).unwrap().panel;
        assert_eq!(p.n_stocks(), 2);
        assert_eq!(p.n_dates(), 3);
        assert_eq!(p.dates()[0], "2020-01-06");
        assert_eq!(p.tickers(), ["AAA", "BBB"]);
        assert_eq!(p.bar(1, 2).unwrap().open, 20.0);
    }

    #[test]
    fn shuffled_rows_give_the_same_panel() {
        let mut lines: Vec<&str> = PRICES.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        lines.swap(0, 3);
        let shuffled = format!("{header}\n{}\n", lines.join("\n"));
        assert_eq!(prices(PRICES).unwrap(), prices(&shuffled).unwrap());
    }

    #[test]
    fn bad_rows_report_their_line() {
        let bad = PRICES.replace("2020-01-03,BBB,19,", "2020-01-03,BBB,0,");
        match prices(&bad) {
            Err(DataError::NonPositivePrice { row: 5, column, .. }) => assert_eq!(column, "open"),
            other => panic!("{other:?}"),
        }
        let bad = PRICES.replace("2020-01-06,AAA,12,12,12,12,100", "2020-01-06,AAA,12,x,12,12,100");
        assert!(matches!(prices(&bad), Err(DataError::Parse { row: 6, .. })));
        let dup = format!("{PRICES}2020-01-02,AAA,1,1,1,1,1\n");
        assert!(matches!(prices(&dup), Err(DataError::Duplicate { row: 8, .. })));
        let bad_date = PRICES.replace("2020-01-06", "2020-13-06");
        assert!(matches!(prices(&bad_date), Err(DataError::Parse { .. })));
    }

    #[test]
    fn adj_open_is_required_unless_derived() {
        let text = "date,ticker,open,close,adj_close,volume\n2020-01-02,AAA,10,20,10,5\n";
        assert!(matches!(prices(text), Err(DataError::MissingColumn { .. })));
        let loaded = read_prices(text.as_bytes(), "p", PriceOptions { derive_adj_open: true }).unwrap();
        assert!(loaded.adj_open_derived);
        assert_eq!(loaded.panel.bar(0, 0).unwrap().adj_open, 5.0);
        assert!(!prices(PRICES).unwrap().adj_open_derived);
    }

    const CLASSES: &str = "\
ticker,sector,industry,sub_industry
CCC,Tech,Software,Apps
AAA,Tech,Hardware,Chips
BBB,Tech,Software,Apps
ZZZ,Energy,Oil,Drilling
";

    fn tickers(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn classification_interning() {
        let c = read_classification(CLASSES.as_bytes(), "c", &tickers(&["AAA", "BBB", "CCC", "DDD"])).unwrap();
        assert_eq!(c.tree.cardinalities(), vec![2, 2, 1]);
        assert_eq!(c.labels[0], ["Apps", "Chips"]);
        assert_eq!(c.labels[1], ["Software", "Hardware"]);
        assert_eq!(c.classified, [0, 1, 2]);
        assert_eq!(c.excluded, ["DDD"]);
        assert_eq!(c.tree.stock_groups(0), [1, 0, 0]);
        let again = read_classification(CLASSES.as_bytes(), "c", &tickers(&["AAA", "BBB", "CCC", "DDD"])).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn inconsistent_parentage_names_the_label() {
        let bad = format!("{CLASSES}QQQ,Energy,Hardware,Pumps\n");
        let err = read_classification(bad.as_bytes(), "c", &tickers(&["AAA"])).unwrap_err();
        assert!(err.to_string().contains("'Hardware'"), "{err}");
        assert!(matches!(err, DataError::InconsistentParent { row: 6, level: "industry", .. }));
        let dup = format!("{CLASSES}AAA,Tech,Hardware,Chips\n");
        assert!(matches!(
            read_classification(dup.as_bytes(), "c", &tickers(&["AAA"])),
            Err(DataError::Duplicate { .. })
        ));
    }

    fn sample_report() -> BacktestReport {
        use crate::backtest::{metrics, DailyRecord, StrategyReport};
        let days: Vec<DailyRecord> = [(0.1, 3.0), (1.0 / 3.0, 7.0)]
            .iter()
            .enumerate()
            .map(|(k, &(pnl, shares))| DailyRecord {
                date: format!("2020-01-0{}", k + 2),
                pnl,
                shares,
                gross: 2.0,
                net: 1e-17,
                holdings: vec![],
            })
            .collect();
        let m = metrics(&[0.1, 1.0 / 3.0], &[3.0, 7.0], 2.0).unwrap();
        let flat = metrics(&[1.0, 1.0], &[0.0, 0.0], 2.0).unwrap();
        BacktestReport {
            investment: 2.0,
            dates: vec!["2020-01-02".into(), "2020-01-03".into()],
            strategies: vec![
                StrategyReport {
                    name: "intercept".into(),
                    days: days.clone(),
                    metrics: m,
                },
                StrategyReport {
                    name: "flat".into(),
                    days,
                    metrics: flat,
                },
            ],
            rebalance_dates: vec!["2020-01-02".into()],
        }
    }

    #[test]
    fn report_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let report = sample_report();
        write_report(&report, dir.path()).unwrap();
        let back = read_metrics(&dir.path().join("metrics.csv")).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0], ("intercept".to_string(), report.strategies[0].metrics));
        assert_eq!(back[1].1.sharpe, None);
        assert_eq!(back[1].1.cps, None);
        let pnl = read_pnl_daily(&dir.path().join("pnl_daily.csv")).unwrap();
        assert_eq!(pnl.len(), 4);
        assert_eq!(pnl[2].pnl.to_bits(), (1.0f64 / 3.0).to_bits());
        assert_eq!(pnl[1].net, 1e-17);
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(text.contains("flat,") && text.contains(",undefined,undefined"));
    }

    #[test]
    fn empty_report_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let report = BacktestReport {
            investment: 1.0,
            dates: vec![],
            strategies: vec![],
            rebalance_dates: vec![],
        };
        write_report(&report, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(text, "strategy,roc,sharpe,cps\n");
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) * 1e-7);
        write_matrix(&m, &path).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), m);
        fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_matrix(&path).is_err());
    }

    #[test]
    fn price_file_round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let loaded = prices(PRICES).unwrap();
        write_prices(&loaded.panel, &path).unwrap();
        let back = load_prices(&path, PriceOptions::default()).unwrap();
        assert_eq!(back, loaded);
        let c = read_classification(CLASSES.as_bytes(), "c", loaded.panel.tickers()).unwrap();
        let m = DataManifest::new(&path, Path::new("c.csv"), &back, &c);
        assert_eq!(m.checksum.len(), 64);
        assert_eq!(m.first_date, "2020-01-02");
        assert_eq!(m.checksum, content_checksum(&loaded.panel, &c));
        let other = prices(&PRICES.replace("200\n", "201\n")).unwrap();
        assert_ne!(m.checksum, content_checksum(&other.panel, &c));
    }

    #[test]
    fn style_loadings_follow_ticker_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, "ticker,size,value\nBBB,1,2\nAAA,3,4\nXXX,0,0\n").unwrap();
        let m = load_style_loadings(&path, &tickers(&["AAA", "BBB"])).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 1.0, 2.0]));
        assert!(load_style_loadings(&path, &tickers(&["CCC"])).is_err());
    }
}
