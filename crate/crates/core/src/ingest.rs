//! Monthly price files, log returns and descriptive statistics.
//!
//! Input files are delimiter-separated text with a header row. Dates may be
//! written `YYYY-MM` or in the spreadsheet style `YYYY.MM`, where a single
//! digit after the dot is a truncated tens digit: `1871.1` is October, not
//! January. Dates are always parsed from the raw string, never via a float.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::config(format!("month {month} out of range")));
        }
        Ok(Self { year, month })
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }

    /// Months elapsed since year 0, used for gap arithmetic.
    pub fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::data(format!("unparsable month `{s}`"));
        let (year, month) = if let Some((y, m)) = s.split_once('-') {
            let month: u8 = m.parse().map_err(|_| bad())?;
            (y, month)
        } else if let Some((y, m)) = s.split_once('.') {
            let month: u8 = match m.len() {
                // `1871.1` is how a spreadsheet prints 1871.10
                1 => m.parse::<u8>().map_err(|_| bad())? * 10,
                2 => m.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            };
            (y, month)
        } else {
            return Err(bad());
        };
        let year: i32 = year.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Contiguous monthly price index levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<YearMonth>,
    prices: Vec<f64>,
}

impl PriceSeries {
    /// Validates contiguity, positivity and minimum length.
    pub fn new(dates: Vec<YearMonth>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::data("dates and prices differ in length"));
        }
        if prices.len() < 2 {
            return Err(Error::data("need at least two prices"));
        }
        for (i, (&d, &p)) in dates.iter().zip(&prices).enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::data(format!("non-positive price {p} at {d} (row {})", i + 1)));
            }
        }
        check_contiguous(&dates)?;
        Ok(Self { dates, prices })
    }

    pub fn dates(&self) -> &[YearMonth] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    /// Restricts to `[start, end]`, both inclusive; `None` leaves that side open.
    pub fn window(&self, start: Option<YearMonth>, end: Option<YearMonth>) -> Result<Self> {
        if let (Some(s), Some(e)) = (start, end) {
            if e < s {
                return Err(Error::config(format!("end month {e} precedes start month {s}")));
            }
        }
        let keep = |d: &YearMonth| start.is_none_or(|s| *d >= s) && end.is_none_or(|e| *d <= e);
        let (dates, prices): (Vec<_>, Vec<_>) = self
            .dates
            .iter()
            .zip(&self.prices)
            .filter(|(d, _)| keep(d))
            .map(|(d, p)| (*d, *p))
            .unzip();
        if let Some(s) = start {
            if dates.first() != Some(&s) {
                return Err(Error::data(format!("start month {s} not present in the data")));
            }
        }
        if let Some(e) = end {
            if dates.last() != Some(&e) {
                return Err(Error::data(format!("end month {e} not present in the data")));
            }
        }
        Self::new(dates, prices)
    }
}

fn check_contiguous(dates: &[YearMonth]) -> Result<()> {
    for w in dates.windows(2) {
        let step = w[1].ordinal() - w[0].ordinal();
        if step != 1 {
            if step <= 0 {
                return Err(Error::data(format!("months not increasing: {} then {}", w[0], w[1])));
            }
            return Err(Error::data(format!(
                "gap of {} month(s) between {} and {}",
                step - 1,
                w[0],
                w[1]
            )));
        }
    }
    Ok(())
}

/// Log returns. `values[i]` is dated at the later month of its price pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub dates: Vec<YearMonth>,
    pub values: Vec<f64>,
    /// Values preceding `values[0]` used only as lags, most recent first.
    #[serde(default)]
    pub presample: Vec<f64>,
}

impl ReturnSeries {
    /// Builds a series from raw values with synthetic consecutive dates.
    pub fn from_values(values: Vec<f64>) -> Self {
        let mut d = YearMonth { year: 1, month: 1 };
        let dates = values
            .iter()
            .map(|_| {
                let cur = d;
                d = d.next();
                cur
            })
            .collect();
        Self { dates, values, presample: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Response and lag matrix for an AR(q) regression.
    ///
    /// The first observation used is the earliest one with at least
    /// `condition_on` (≥ q) prior values, counting the presample. Fitting
    /// several orders with the same `condition_on` gives them a common sample.
    pub fn ar_design(&self, q: usize, condition_on: usize) -> ArDesign {
        let condition_on = condition_on.max(q);
        let pre: Vec<f64> = self.presample.iter().rev().copied().collect();
        let npre = pre.len();
        let all: Vec<f64> = pre.into_iter().chain(self.values.iter().copied()).collect();
        let start = condition_on.max(npre).min(all.len());
        let mut y = Vec::with_capacity(all.len() - start);
        let mut lags = Vec::with_capacity((all.len() - start) * q);
        let mut dates = Vec::with_capacity(all.len() - start);
        for i in start..all.len() {
            y.push(all[i]);
            lags.extend((1..=q).map(|j| all[i - j]));
            dates.push(self.dates[i - npre]);
        }
        ArDesign { q, y, lags, dates }
    }

    /// Writes `date,return` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["date", "return"])?;
        for (d, v) in self.dates.iter().zip(&self.values) {
            wtr.write_record([d.to_string(), v.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`ReturnSeries::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || Error::data(format!("malformed return row {}", i + 2));
            dates.push(rec.get(0).ok_or_else(bad)?.parse()?);
            let v: f64 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if !v.is_finite() {
                return Err(bad());
            }
            values.push(v);
        }
        check_contiguous(&dates)?;
        Ok(Self { dates, values, presample: Vec::new() })
    }
}

/// AR regression data: `lags[t * q + j]` is the lag-(j+1) value for `y[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArDesign {
    pub q: usize,
    pub y: Vec<f64>,
    pub lags: Vec<f64>,
    pub dates: Vec<YearMonth>,
}

impl ArDesign {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn lag_row(&self, t: usize) -> &[f64] {
        &self.lags[t * self.q..(t + 1) * self.q]
    }
}

/// Parses a price file. Comma is the default delimiter; a header containing a
/// tab switches to tab-separated parsing.
pub fn load_prices<R: Read>(mut source: R, date_column: &str, price_column: &str) -> Result<PriceSeries> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = if header_line.contains('\t') { b'\t' } else { b',' };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::config(format!("column `{name}` not found in header")))
    };
    let date_idx = find(date_column)?;
    let price_idx = find(price_column)?;

    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let date_raw = rec.get(date_idx).unwrap_or("");
        let price_raw = rec.get(price_idx).unwrap_or("");
        if date_raw.is_empty() && price_raw.is_empty() {
            continue;
        }
        let date: YearMonth = date_raw
            .parse()
            .map_err(|_| Error::data(format!("row {row}: unparsable date `{date_raw}`")))?;
        let price: f64 = price_raw
            .parse()
            .map_err(|_| Error::data(format!("row {row}: unparsable price `{price_raw}`")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::data(format!("row {row}: non-positive price {price} at {date}")));
        }
        dates.push(date);
        prices.push(price);
    }
    PriceSeries::new(dates, prices)
}

pub fn log_returns(p: &PriceSeries) -> ReturnSeries {
    let values = p.prices.windows(2).map(|w| w[1].ln() - w[0].ln()).collect();
    ReturnSeries { dates: p.dates[1..].to_vec(), values, presample: Vec::new() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

/// Sample moments; `sd` uses the `n - 1` divisor (zero for a single value).
pub fn describe(values: &[f64]) -> Result<DescriptiveStats> {
    let n = values.len();
    if n == 0 {
        return Err(Error::data("cannot describe an empty series"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DescriptiveStats { mean, sd, min, max, n })
}
