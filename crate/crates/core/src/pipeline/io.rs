//! Quote files. CSV has header `expiry,strike,price[,bid,ask]`; JSON is
//! `{"quotes": [{"T", "K", "price"}], "params": {...}}`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VolcalError};
use crate::model::{ModelParams, Quote, QuoteSlice};

/// Market constants carried by a JSON quote file (σ₀ is implied later).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub s_star: f64,
    #[serde(default)]
    pub t_star: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
}

impl MarketParams {
    pub fn with_sigma0(&self, sigma0: f64) -> Result<ModelParams> {
        ModelParams::new(self.s_star, self.t_star, self.r, self.mu, sigma0, self.t1, self.t2)
    }
}

impl From<&ModelParams> for MarketParams {
    fn from(p: &ModelParams) -> Self {
        MarketParams {
            s_star: p.s_star,
            t_star: p.t_star,
            r: p.r,
            mu: p.mu,
            t1: p.t1,
            t2: p.t2,
        }
    }
}

/// Two quote slices, earlier expiry first.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    pub slices: [QuoteSlice; 2],
    pub market: Option<MarketParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteFormat {
    Csv,
    Json,
}

impl QuoteFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
        {
            Some(e) if e == "csv" => Ok(QuoteFormat::Csv),
            Some(e) if e == "json" => Ok(QuoteFormat::Json),
            _ => Err(VolcalError::Config(format!(
                "cannot tell quote format of {} (expected .csv or .json)",
                path.display()
            ))),
        }
    }
}

pub fn load_quotes(path: &Path, format: Option<QuoteFormat>) -> Result<QuoteSet> {
    let format = match format {
        Some(f) => f,
        None => QuoteFormat::from_path(path)?,
    };
    let text = std::fs::read_to_string(path)?;
    match format {
        QuoteFormat::Csv => parse_quotes_csv(&text),
        QuoteFormat::Json => parse_quotes_json(&text),
    }
}

struct Row {
    line: usize,
    expiry: f64,
    quote: Quote,
}

fn number(field: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| VolcalError::Parse {
        line,
        message: format!("{name} is not a number: {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(VolcalError::Parse {
            line,
            message: format!("{name} must be finite"),
        });
    }
    Ok(v)
}

fn check_row(row: &Row) -> Result<()> {
    let bad = |message: String| {
        Err(VolcalError::Parse {
            line: row.line,
            message,
        })
    };
    if row.quote.strike <= 0.0 {
        return bad(format!("strike must be positive, got {}", row.quote.strike));
    }
    if row.quote.price <= 0.0 {
        return bad(format!("price must be positive, got {}", row.quote.price));
    }
    if let (Some(bid), Some(ask)) = (row.quote.bid, row.quote.ask) {
        if bid > ask {
            return bad(format!("bid {bid} exceeds ask {ask}"));
        }
    }
    Ok(())
}

/// Groups rows by expiry, sorts strikes and rejects duplicates.
fn assemble(rows: Vec<Row>, market: Option<MarketParams>) -> Result<QuoteSet> {
    let mut groups: BTreeMap<u64, Vec<Row>> = BTreeMap::new();
    let mut order: Vec<f64> = Vec::new();
    for row in rows {
        check_row(&row)?;
        // −0.0 and 0.0 are the same expiry
        let key = (row.expiry + 0.0).to_bits();
        if !groups.contains_key(&key) {
            if order.len() == 2 {
                return Err(VolcalError::Parse {
                    line: row.line,
                    message: format!("third expiry {} (only two are supported)", row.expiry),
                });
            }
            order.push(row.expiry);
        }
        groups.entry(key).or_default().push(row);
    }
    if order.len() != 2 {
        return Err(VolcalError::MissingExpiry { found: order });
    }
    order.sort_by(f64::total_cmp);
    let mut slices = Vec::with_capacity(2);
    for expiry in order {
        let mut rows = groups.remove(&(expiry + 0.0).to_bits()).unwrap_or_default();
        rows.sort_by(|a, b| a.quote.strike.total_cmp(&b.quote.strike).then(a.line.cmp(&b.line)));
        if let Some(w) = rows.windows(2).find(|w| w[0].quote.strike == w[1].quote.strike) {
            return Err(VolcalError::DuplicateStrike {
                line: w[1].line,
                expiry,
                strike: w[1].quote.strike,
            });
        }
        slices.push(QuoteSlice::new(expiry, rows.into_iter().map(|r| r.quote).collect())?);
    }
    let second = slices.pop().expect("two slices");
    let first = slices.pop().expect("two slices");
    if let Some(m) = &market {
        for (slice, t) in [(&first, m.t1), (&second, m.t2)] {
            if slice.expiry != t {
                return Err(VolcalError::MissingExpiry {
                    found: vec![first.expiry, second.expiry],
                });
            }
        }
    }
    Ok(QuoteSet {
        slices: [first, second],
        market,
    })
}

pub fn parse_quotes_csv(text: &str) -> Result<QuoteSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header_err = |e: csv::Error| VolcalError::Parse {
        line: 1,
        message: e.to_string(),
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(header_err)?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let expected = ["expiry", "strike", "price", "bid", "ask"];
    if !(headers.len() == 3 || headers.len() == 5) || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(VolcalError::Parse {
            line: 1,
            message: format!(
                "header must be expiry,strike,price[,bid,ask], got {}",
                headers.join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| VolcalError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize, name: &str| number(&record[i], name, line);
        let optional = |i: usize, name: &str| -> Result<Option<f64>> {
            match record.get(i) {
                Some(s) if !s.is_empty() => number(s, name, line).map(Some),
                _ => Ok(None),
            }
        };
        rows.push(Row {
            line,
            expiry: field(0, "expiry")?,
            quote: Quote {
                strike: field(1, "strike")?,
                price: field(2, "price")?,
                bid: optional(3, "bid")?,
                ask: optional(4, "ask")?,
            },
        });
    }
    assemble(rows, None)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonQuote {
    #[serde(rename = "T")]
    expiry: f64,
    #[serde(rename = "K")]
    strike: f64,
    price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ask: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonFile {
    quotes: Vec<JsonQuote>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<MarketParams>,
}

/// Semantic errors in JSON files report the 1-based quote index as `line`.
pub fn parse_quotes_json(text: &str) -> Result<QuoteSet> {
    let file: JsonFile = serde_json::from_str(text).map_err(|e| VolcalError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let rows = file
        .quotes
        .into_iter()
        .enumerate()
        .map(|(i, q)| Row {
            line: i + 1,
            expiry: q.expiry,
            quote: Quote {
                strike: q.strike,
                price: q.price,
                bid: q.bid,
                ask: q.ask,
            },
        })
        .collect();
    assemble(rows, file.params)
}

pub fn write_quotes_json<W: Write>(out: W, slices: &[QuoteSlice], market: Option<&MarketParams>) -> Result<()> {
    let quotes = slices
        .iter()
        .flat_map(|s| {
            s.quotes().iter().map(|q| JsonQuote {
                expiry: s.expiry,
                strike: q.strike,
                price: q.price,
                bid: q.bid,
                ask: q.ask,
            })
        })
        .collect();
    let file = JsonFile {
        quotes,
        params: market.copied(),
    };
    serde_json::to_writer_pretty(out, &file).map_err(|e| VolcalError::Io(e.into()))
}

/// 17 significant digits, enough to round-trip every f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_quotes_csv<W: Write>(out: W, slices: &[QuoteSlice]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_spread = slices
        .iter()
        .flat_map(|s| s.quotes())
        .any(|q| q.bid.is_some() || q.ask.is_some());
    let csv_err = |e: csv::Error| VolcalError::Io(std::io::Error::other(e));
    if with_spread {
        w.write_record(["expiry", "strike", "price", "bid", "ask"])
            .map_err(csv_err)?;
    } else {
        w.write_record(["expiry", "strike", "price"]).map_err(csv_err)?;
    }
    for s in slices {
        for q in s.quotes() {
            let mut rec = vec![fmt17(s.expiry), fmt17(q.strike), fmt17(q.price)];
            if with_spread {
                rec.push(q.bid.map(fmt17).unwrap_or_default());
                rec.push(q.ask.map(fmt17).unwrap_or_default());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes named columns of equal length as CSV at 17 significant digits.
pub fn write_columns<W: Write>(out: W, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != len) || names.len() != columns.len() {
        return Err(VolcalError::domain("columns must have equal length and one name each"));
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| VolcalError::Io(std::io::Error::other(e));
    w.write_record(names).map_err(csv_err)?;
    for i in 0..len {
        w.write_record(columns.iter().map(|c| fmt17(c[i]))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
