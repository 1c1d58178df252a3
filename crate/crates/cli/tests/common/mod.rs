#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use multicurve::synthetic::{QuoteTerms, SyntheticUniverse};
use multicurve_cli::quotes::{write_quotes, QuoteRow};

pub const CLASSES: [&str; 2] = ["BOND", "SWAP"];

/// Quote rows of a synthetic universe on one date.
pub fn synthetic_rows(date: &str, u: &SyntheticUniverse) -> Vec<QuoteRow> {
    u.quotes()
        .unwrap()
        .into_iter()
        .map(|q| {
            let mut row = QuoteRow {
                date: date.into(),
                class_id: CLASSES[q.class_id].into(),
                instrument_type: String::new(),
                id: q.id,
                price_or_rate: 0.0,
                coupon: None,
                frequency: None,
                maturity_years: None,
                start_years: None,
                fixed_accrual: None,
                float_accrual: None,
                basis_spread: None,
            };
            match q.terms {
                QuoteTerms::Bond {
                    coupon,
                    frequency,
                    maturity,
                    dirty_price,
                } => {
                    row.instrument_type = "bond".into();
                    row.price_or_rate = dirty_price;
                    row.coupon = Some(coupon);
                    row.frequency = Some(frequency);
                    row.maturity_years = Some(maturity);
                }
                QuoteTerms::Swap(s) => {
                    row.instrument_type = "swap".into();
                    row.price_or_rate = s.fixed_rate;
                    row.maturity_years = Some(s.maturity);
                    row.start_years = Some(s.start);
                    row.fixed_accrual = Some(s.fixed_accrual);
                    row.float_accrual = Some(s.float_accrual);
                    row.basis_spread = Some(s.basis_spread);
                }
            }
            row
        })
        .collect()
}

/// Writes one synthetic date per seed, dated consecutively from 2024-01-02.
pub fn write_synthetic_quotes(path: &Path, seeds: &[u64]) -> Vec<String> {
    let mut rows = Vec::new();
    let mut dates = Vec::new();
    for (i, &seed) in seeds.iter().enumerate() {
        let date = format!("2024-01-{:02}", i + 2);
        rows.extend(synthetic_rows(&date, &SyntheticUniverse::standard(seed)));
        dates.push(date);
    }
    write_quotes(std::fs::File::create(path).unwrap(), &rows).unwrap();
    dates
}

pub fn write_config(path: &Path, extra: serde_json::Value) -> PathBuf {
    let mut cfg = serde_json::json!({ "classes": CLASSES });
    if let (Some(base), Some(extra)) = (cfg.as_object_mut(), extra.as_object()) {
        base.extend(extra.clone());
    }
    std::fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_path_buf()
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multicurve")).args(args).output().unwrap()
}

/// Runs a subcommand with `--quotes`, `--config` and `--out`.
pub fn run_sub(sub: &str, quotes: &Path, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        sub,
        "--quotes",
        quotes.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run_cli(&args)
}

/// File names and contents of a directory, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

pub fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}
