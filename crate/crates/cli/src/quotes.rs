//! Quote files: one row per instrument and date.
//!
//! ```text
//! date,class_id,instrument_type,id,price_or_rate,coupon,frequency,maturity_years,start_years,fixed_accrual,float_accrual,basis_spread
//! 2024-06-14,UST,bond,T 4.25 2034,0.9912,0.0425,2,10,,,,
//! 2024-06-14,SOFR,swap,SOFR 5Y,0.0401,,,5,0,1,1,0
//! ```
//!
//! Bonds quote a dirty price per unit notional; swaps and cross-currency swaps
//! quote the fixed rate.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use multicurve::instruments::{build_bond, build_swap, Instrument, SwapSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::fmt_f64;

pub const HEADER: [&str; 12] = [
    "date",
    "class_id",
    "instrument_type",
    "id",
    "price_or_rate",
    "coupon",
    "frequency",
    "maturity_years",
    "start_years",
    "fixed_accrual",
    "float_accrual",
    "basis_spread",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstrumentType {
    Bond,
    Swap,
    Xccy,
}

impl InstrumentType {
    fn as_str(self) -> &'static str {
        match self {
            InstrumentType::Bond => "bond",
            InstrumentType::Swap => "swap",
            InstrumentType::Xccy => "xccy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteRow {
    pub date: String,
    pub class_id: String,
    pub instrument_type: String,
    pub id: String,
    pub price_or_rate: f64,
    pub coupon: Option<f64>,
    pub frequency: Option<u32>,
    pub maturity_years: Option<f64>,
    pub start_years: Option<f64>,
    pub fixed_accrual: Option<f64>,
    pub float_accrual: Option<f64>,
    pub basis_spread: Option<f64>,
}

/// A row together with its line in the source file.
#[derive(Debug, Clone, PartialEq)]
pub struct Located {
    pub line: u64,
    pub row: QuoteRow,
}

/// Quotes grouped by date, dates in ascending order.
pub type QuoteBook = BTreeMap<String, Vec<Located>>;

fn check_date(date: &str) -> bool {
    chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d").is_ok()
}

fn required(value: Option<f64>, name: &str, line: u64) -> CliResult<f64> {
    value.ok_or_else(|| CliError::input(format!("line {line}: missing {name}")))
}

impl QuoteRow {
    pub fn kind(&self) -> Option<InstrumentType> {
        match self.instrument_type.as_str() {
            "bond" => Some(InstrumentType::Bond),
            "swap" => Some(InstrumentType::Swap),
            "xccy" => Some(InstrumentType::Xccy),
            _ => None,
        }
    }

    /// Builds the instrument; `classes` maps labels to indices.
    pub fn instrument(&self, classes: &[String], line: u64) -> CliResult<Instrument> {
        let class = classes
            .iter()
            .position(|c| *c == self.class_id)
            .ok_or_else(|| CliError::input(format!("line {line}: unknown class {:?}", self.class_id)))?;
        let kind = self.kind().ok_or_else(|| {
            CliError::input(format!(
                "line {line}: unknown instrument_type {:?} (expected bond, swap or xccy)",
                self.instrument_type
            ))
        })?;
        let built = match kind {
            InstrumentType::Bond => {
                let frequency = self
                    .frequency
                    .ok_or_else(|| CliError::input(format!("line {line}: missing frequency")))?;
                build_bond(
                    class,
                    &self.id,
                    required(self.coupon, "coupon", line)?,
                    frequency,
                    required(self.maturity_years, "maturity_years", line)?,
                    self.price_or_rate,
                )
            }
            InstrumentType::Swap | InstrumentType::Xccy => {
                let fixed_accrual = required(self.fixed_accrual, "fixed_accrual", line)?;
                let basis_spread = match kind {
                    InstrumentType::Xccy => required(self.basis_spread, "basis_spread", line)?,
                    _ => self.basis_spread.unwrap_or(0.0),
                };
                let spec = SwapSpec {
                    start: self.start_years.unwrap_or(0.0),
                    maturity: required(self.maturity_years, "maturity_years", line)?,
                    fixed_rate: self.price_or_rate,
                    fixed_accrual,
                    float_accrual: self.float_accrual.unwrap_or(fixed_accrual),
                    basis_spread,
                };
                build_swap(class, &self.id, &spec)
            }
        };
        built.map_err(|e| CliError::input(format!("line {line}: {e}")))
    }
}

/// Parses a quote file. Every row is checked for a valid date and instrument
/// type; errors carry the 1-based line number.
pub fn parse_quotes(reader: impl Read) -> CliResult<QuoteBook> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::input(format!("line 1: {e}")))?
        .clone();
    for h in ["date", "class_id", "instrument_type", "id", "price_or_rate"] {
        if !headers.iter().any(|c| c == h) {
            return Err(CliError::input(format!("line 1: missing column {h}")));
        }
    }
    let mut book = QuoteBook::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::input(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: QuoteRow = record
            .deserialize(Some(&headers))
            .map_err(|e| CliError::input(format!("line {line}: {e}")))?;
        if !check_date(&row.date) {
            return Err(CliError::input(format!("line {line}: invalid date {:?}", row.date)));
        }
        if row.kind().is_none() {
            return Err(CliError::input(format!(
                "line {line}: unknown instrument_type {:?} (expected bond, swap or xccy)",
                row.instrument_type
            )));
        }
        book.entry(row.date.clone()).or_default().push(Located { line, row });
    }
    Ok(book)
}

pub fn read_quotes(path: &Path) -> CliResult<QuoteBook> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_quotes(std::io::BufReader::new(file)).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Instruments of one date in file order.
pub fn instruments(rows: &[Located], classes: &[String]) -> CliResult<Vec<Instrument>> {
    rows.iter().map(|l| l.row.instrument(classes, l.line)).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes rows in the quote-file format with full-precision numbers.
pub fn write_quotes(mut out: impl Write, rows: &[QuoteRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(HEADER)?;
    for r in rows {
        let kind = r.kind().map_or(r.instrument_type.clone(), |k| k.as_str().to_string());
        w.write_record([
            r.date.clone(),
            r.class_id.clone(),
            kind,
            r.id.clone(),
            fmt_f64(r.price_or_rate),
            opt(r.coupon),
            r.frequency.map(|f| f.to_string()).unwrap_or_default(),
            opt(r.maturity_years),
            opt(r.start_years),
            opt(r.fixed_accrual),
            opt(r.float_accrual),
            opt(r.basis_spread),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = "\
date,class_id,instrument_type,id,price_or_rate,coupon,frequency,maturity_years,start_years,fixed_accrual,float_accrual,basis_spread
2024-06-14,UST,bond,B10,0.99,0.04,2,10,,,,
2024-06-14,SOFR,swap,S5,0.04,,,5,0,1,1,
2024-06-13,SOFR,xccy,X1,0.04,,,1,0,1,0.25,-0.002
";

    fn classes() -> Vec<String> {
        vec!["UST".into(), "SOFR".into()]
    }

    #[test]
    fn parses_and_groups_by_date() {
        let book = parse_quotes(FILE.as_bytes()).unwrap();
        assert_eq!(book.keys().collect::<Vec<_>>(), ["2024-06-13", "2024-06-14"]);
        let day = &book["2024-06-14"];
        assert_eq!(day[0].line, 2);
        let insts = instruments(day, &classes()).unwrap();
        assert_eq!(insts[0].flows().len(), 20);
        assert_eq!(insts[1].class_id(), 1);
        assert_eq!(insts[1].price(), 1.0);
        let x = instruments(&book["2024-06-13"], &classes()).unwrap();
        assert_eq!(x[0].flows().len(), 4);
    }

    #[test]
    fn unknown_type_reports_its_line() {
        let bad = FILE.replace("xccy", "future");
        let err = parse_quotes(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn bad_rows_are_input_errors() {
        for (from, to) in [
            ("2024-06-13", "2024-13-13"),
            ("0.04,,,5,0,1,1,", "abc,,,5,0,1,1,"),
            ("0.04,2,10", "0.04,,10"),
        ] {
            let bad = FILE.replace(from, to);
            let res = parse_quotes(bad.as_bytes()).and_then(|b| {
                b.values()
                    .map(|rows| instruments(rows, &classes()))
                    .collect::<CliResult<Vec<_>>>()
            });
            assert_eq!(res.unwrap_err().exit_code(), 2, "{to}");
        }
        let book = parse_quotes(FILE.replace("UST", "GILT").as_bytes()).unwrap();
        let err = instruments(&book["2024-06-14"], &classes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn written_rows_parse_back_identically() {
        let book = parse_quotes(FILE.as_bytes()).unwrap();
        let rows: Vec<QuoteRow> = book.values().flatten().map(|l| l.row.clone()).collect();
        let mut buf = Vec::new();
        write_quotes(&mut buf, &rows).unwrap();
        let again: Vec<QuoteRow> = parse_quotes(buf.as_slice())
            .unwrap()
            .into_values()
            .flatten()
            .map(|l| l.row)
            .collect();
        assert_eq!(again, rows);
    }
}
