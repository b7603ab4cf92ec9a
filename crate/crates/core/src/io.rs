//! Text formats for curves, fits and sensitivity curves.
//!
//! Numbers are written with 17 significant digits so that every value
//! parses back to the identical `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{CurvePoint, FitResult, MeasurementPlan, RelaxationCurve};
use crate::sensitivity::SensitivityCurve;

pub const CURVE_HEADER: &str = "tau_s,signal,stderr";

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_curve(curve: &RelaxationCurve) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(p.tau),
            fmt_f64(p.signal),
            fmt_f64(p.stderr)
        );
    }
    out
}

/// Parses a curve file; `origin` names it in error messages.
pub fn parse_curve(text: &str, origin: &str) -> Result<RelaxationCurve> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let err = |line: usize, reason: String| Error::Parse {
        path: origin.to_string(),
        line,
        reason,
    };
    match lines.next() {
        Some((_, header)) => {
            let cols: Vec<&str> = header.split(',').map(str::trim).collect();
            if cols != ["tau_s", "signal", "stderr"] {
                return Err(err(
                    1,
                    format!("expected header `{CURVE_HEADER}`, got `{header}`"),
                ));
            }
        }
        None => return Err(err(1, "empty curve file".into())),
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(
                idx + 1,
                format!("expected 3 columns, found {}", fields.len()),
            ));
        }
        let mut vals = [0.0; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse()
                .map_err(|_| err(idx + 1, format!("cannot parse number `{f}`")))?;
        }
        points.push(CurvePoint {
            tau: vals[0],
            signal: vals[1],
            stderr: vals[2],
        });
    }
    Ok(RelaxationCurve {
        points,
        raw_counts: None,
    })
}

pub fn read_curve(path: &Path) -> Result<RelaxationCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curve(&text, &path.display().to_string())
}

/// JSON-safe number: finite values stay numbers, the rest become strings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JsonNumber {
    Finite(f64),
    Special(SpecialValue),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpecialValue {
    #[serde(rename = "inf")]
    Inf,
    #[serde(rename = "-inf")]
    NegInf,
    #[serde(rename = "nan")]
    NaN,
}

impl From<f64> for JsonNumber {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            JsonNumber::Finite(v)
        } else if v.is_nan() {
            JsonNumber::Special(SpecialValue::NaN)
        } else if v > 0.0 {
            JsonNumber::Special(SpecialValue::Inf)
        } else {
            JsonNumber::Special(SpecialValue::NegInf)
        }
    }
}

impl From<JsonNumber> for f64 {
    fn from(v: JsonNumber) -> Self {
        match v {
            JsonNumber::Finite(x) => x,
            JsonNumber::Special(SpecialValue::Inf) => f64::INFINITY,
            JsonNumber::Special(SpecialValue::NegInf) => f64::NEG_INFINITY,
            JsonNumber::Special(SpecialValue::NaN) => f64::NAN,
        }
    }
}

/// Serialised form of a [`FitResult`] with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub t1_hat: JsonNumber,
    pub t1_stderr: JsonNumber,
    pub amplitude: JsonNumber,
    pub baseline: JsonNumber,
    pub covariance: [[JsonNumber; 3]; 3],
    pub reduced_chi_sq: JsonNumber,
    pub converged: bool,
    pub singular: bool,
    pub iterations: usize,
    pub weighted: bool,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan: Option<MeasurementPlan>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source: Option<String>,
}

impl FitRecord {
    pub fn new(fit: &FitResult) -> Self {
        Self {
            t1_hat: fit.t1_hat.into(),
            t1_stderr: fit.t1_stderr.into(),
            amplitude: fit.amplitude.into(),
            baseline: fit.baseline.into(),
            covariance: fit.covariance.map(|row| row.map(JsonNumber::from)),
            reduced_chi_sq: fit.reduced_chi_sq.into(),
            converged: fit.converged,
            singular: fit.singular,
            iterations: fit.iterations,
            weighted: fit.weighted,
            message: fit.message.clone(),
            seed: None,
            plan: None,
            source: None,
        }
    }

    pub fn fit(&self) -> FitResult {
        FitResult {
            t1_hat: self.t1_hat.into(),
            t1_stderr: self.t1_stderr.into(),
            amplitude: self.amplitude.into(),
            baseline: self.baseline.into(),
            covariance: self.covariance.map(|row| row.map(f64::from)),
            reduced_chi_sq: self.reduced_chi_sq.into(),
            converged: self.converged,
            singular: self.singular,
            iterations: self.iterations,
            weighted: self.weighted,
            message: self.message.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit record serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "<fit json>".into(),
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

/// Delimited sensitivity curve followed by a `#`-prefixed summary block.
pub fn write_sensitivity(curve: &SensitivityCurve) -> String {
    let mut out = String::from("density_per_m3,r_total_per_s,delta_r_min_per_s\n");
    for p in &curve.points {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(p.density),
            fmt_f64(p.r_total),
            fmt_f64(p.delta_r_min)
        );
    }
    let m = curve.minimum();
    let _ = writeln!(out, "# argmin_index={}", curve.argmin);
    let _ = writeln!(out, "# argmin_density_per_m3={}", fmt_f64(m.density));
    let _ = writeln!(out, "# argmin_r_total_per_s={}", fmt_f64(m.r_total));
    let _ = writeln!(out, "# min_delta_r_per_s={}", fmt_f64(m.delta_r_min));
    let _ = writeln!(out, "# boundary_warning={}", curve.boundary_warning);
    for (n, why) in &curve.skipped {
        let _ = writeln!(
            out,
            "# skipped density_per_m3={} reason={}",
            fmt_f64(*n),
            why
        );
    }
    out
}

/// Reads back the rows of [`write_sensitivity`], ignoring the summary block.
pub fn parse_sensitivity_rows(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            let v: Vec<f64> = l
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: "<sensitivity>".into(),
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            match v.as_slice() {
                [a, b, c] => Ok((*a, *b, *c)),
                _ => Err(Error::Parse {
                    path: "<sensitivity>".into(),
                    line: i + 1,
                    reason: "expected 3 columns".into(),
                }),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn curve_text_round_trips_bitwise(
            rows in proptest::collection::vec((0f64..1e-2, -2f64..2.0, 0f64..1.0), 1..20)
        ) {
            let curve = RelaxationCurve {
                points: rows.iter().map(|&(tau, signal, stderr)| CurvePoint { tau, signal, stderr }).collect(),
                raw_counts: None,
            };
            let back = parse_curve(&write_curve(&curve), "mem").unwrap();
            prop_assert_eq!(back, curve);
        }
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "tau_s,signal,stderr\n1e-6,1.0,0.01\n2e-6,oops,0.01\n";
        match parse_curve(text, "f.csv") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "f.csv");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_curve("a,b,c\n", "f").is_err());
        assert!(parse_curve("tau_s,signal,stderr\n1,2\n", "f").is_err());
    }

    #[test]
    fn fit_record_keeps_infinities() {
        let fit = FitResult {
            t1_hat: 1.3e-4,
            t1_stderr: f64::INFINITY,
            amplitude: 0.2,
            baseline: 0.8,
            covariance: [[f64::INFINITY; 3]; 3],
            reduced_chi_sq: 0.9,
            converged: false,
            singular: true,
            iterations: 4,
            weighted: true,
            message: "singular".into(),
        };
        let rec = FitRecord::new(&fit);
        let back = FitRecord::from_json(&rec.to_json()).unwrap();
        assert_eq!(back.fit(), fit);
    }
}
