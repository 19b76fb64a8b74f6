//! Per-epoch metrics and their CSV form.
//!
//! ```text
//! epoch,eta,train_loss,train_acc,test_loss,test_acc,wall_secs
//! 1,0.1,0.693147181,0.5,0.693147181,0.5,0
//! ...
//! diverged,17
//! ```
//! Floats use 9 significant digits; the trailer appears only on aborted runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const RECORD_HEADER: &str = "epoch,eta,train_loss,train_acc,test_loss,test_acc,wall_secs";

pub const METRIC_COLUMNS: [&str; 6] = ["eta", "train_loss", "train_acc", "test_loss", "test_acc", "wall_secs"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub eta: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    pub wall_secs: f64,
}

impl EpochRow {
    pub fn metric(&self, column: &str) -> Option<f64> {
        Some(match column {
            "epoch" => self.epoch as f64,
            "eta" => self.eta,
            "train_loss" => self.train_loss,
            "train_acc" => self.train_acc,
            "test_loss" => self.test_loss,
            "test_acc" => self.test_acc,
            "wall_secs" => self.wall_secs,
            _ => return None,
        })
    }

    pub(crate) fn write_fields(&self, out: &mut String) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            self.epoch,
            format_sig(self.eta),
            format_sig(self.train_loss),
            format_sig(self.train_acc),
            format_sig(self.test_loss),
            format_sig(self.test_acc),
            format_sig(self.wall_secs),
        );
    }
}

/// Metrics of one run. `diverged_at` is set when the run aborted on a
/// non-finite value; `rows` then stops at the last good epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub rows: Vec<EpochRow>,
    pub diverged_at: Option<usize>,
}

impl RunRecord {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn last(&self) -> Option<&EpochRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(RECORD_HEADER);
        out.push('\n');
        for row in &self.rows {
            row.write_fields(&mut out);
            out.push('\n');
        }
        if let Some(epoch) = self.diverged_at {
            let _ = writeln!(out, "diverged,{epoch}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let err = |message: String| Error::Record {
            path: "<record>".into(),
            message,
        };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == RECORD_HEADER => {}
            Some(h) => return Err(err(format!("unexpected header `{h}`"))),
            None => return Err(err("empty file".into())),
        }
        let mut record = RunRecord::default();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if record.diverged_at.is_some() {
                return Err(err(format!("line {}: data after divergence trailer", i + 2)));
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() == 2 && fields[0] == "diverged" {
                let epoch = fields[1]
                    .parse()
                    .map_err(|_| err(format!("line {}: bad divergence epoch", i + 2)))?;
                record.diverged_at = Some(epoch);
                continue;
            }
            if fields.len() != 7 {
                return Err(err(format!("line {}: expected 7 fields", i + 2)));
            }
            let num = |j: usize| -> Result<f64> {
                parse_float(fields[j]).ok_or_else(|| err(format!("line {}: bad number `{}`", i + 2, fields[j])))
            };
            record.rows.push(EpochRow {
                epoch: fields[0]
                    .parse()
                    .map_err(|_| err(format!("line {}: bad epoch", i + 2)))?,
                eta: num(1)?,
                train_loss: num(2)?,
                train_acc: num(3)?,
                test_loss: num(4)?,
                test_acc: num(5)?,
                wall_secs: num(6)?,
            });
        }
        Ok(record)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Record {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_csv(&text).map_err(|e| match e {
            Error::Record { message, .. } => Error::Record {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }
}

pub(crate) fn parse_float(s: &str) -> Option<f64> {
    match s.trim() {
        "NaN" | "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// `%.9g`: 9 significant digits, trailing zeros dropped, exponent form
/// outside `[1e-4, 1e9)`.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= DIGITS {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format_sig_examples() {
        assert_eq!(format_sig(0.1), "0.1");
        assert_eq!(format_sig(0.01), "0.01");
        assert_eq!(format_sig(std::f64::consts::LN_2), "0.693147181");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(-2.5), "-2.5");
        assert_eq!(format_sig(123456789.0), "123456789");
        assert_eq!(format_sig(1234567891.0), "1.23456789e+09");
        assert_eq!(format_sig(1.5e-7), "1.5e-07");
        assert_eq!(format_sig(0.00001234), "1.234e-05");
        assert_eq!(format_sig(0.0001234), "0.0001234");
        assert_eq!(format_sig(f64::NAN), "NaN");
        assert_eq!(format_sig(0.0), "0");
    }

    proptest! {
        #[test]
        fn format_sig_keeps_nine_digits(x in -1e12f64..1e12) {
            let back: f64 = format_sig(x).parse().unwrap();
            let tol = x.abs() * 5e-9 + f64::MIN_POSITIVE;
            prop_assert!((back - x).abs() <= tol, "{x} -> {}", format_sig(x));
        }
    }

    #[test]
    fn csv_round_trip_with_trailer() {
        let rec = RunRecord {
            rows: vec![EpochRow {
                epoch: 1,
                eta: 0.1,
                train_loss: 0.5,
                train_acc: f64::NAN,
                test_loss: 0.25,
                test_acc: 0.75,
                wall_secs: 0.0,
            }],
            diverged_at: Some(2),
        };
        let text = rec.to_csv();
        assert_eq!(text, format!("{RECORD_HEADER}\n1,0.1,0.5,NaN,0.25,0.75,0\ndiverged,2\n"));
        let back = RunRecord::from_csv(&text).unwrap();
        assert_eq!(back.diverged_at, Some(2));
        assert_eq!(back.rows[0].test_acc, 0.75);
        assert!(back.rows[0].train_acc.is_nan());
    }

    #[test]
    fn from_csv_rejects_garbage() {
        assert!(RunRecord::from_csv("").is_err());
        assert!(RunRecord::from_csv("a,b\n").is_err());
        assert!(RunRecord::from_csv(&format!("{RECORD_HEADER}\n1,2,3\n")).is_err());
        assert!(RunRecord::from_csv(&format!("{RECORD_HEADER}\ndiverged,1\n1,1,1,1,1,1,1\n")).is_err());
    }
}
