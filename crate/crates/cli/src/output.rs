use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Round to 10 significant digits. Non-finite values and zero pass through.
pub fn sig10(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.9e}").parse().unwrap_or(x)
}

/// Text form of a rounded number for CSV cells. Very small or very large
/// magnitudes use exponent notation.
pub fn fmt_num(x: f64) -> String {
    let r = sig10(x);
    if r.is_infinite() {
        return if r > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if r != 0.0 && (r.abs() < 1e-5 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        r.to_string()
    }
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(sig10).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Serialize to a JSON value with every float rounded to 10 significant digits.
pub fn to_rounded_json<T: Serialize>(value: &T) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::Internal(e.to_string()))?;
    round_floats(&mut v);
    Ok(v)
}

pub fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::Input(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub fn write_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let v = to_rounded_json(value)?;
    serde_json::to_writer_pretty(&mut *out, &v).map_err(|e| CliError::Internal(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Write `rows` as CSV; each row is already formatted.
pub fn write_csv(out: &mut dyn Write, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Internal(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_ten_digits() {
        assert_eq!(sig10(0.044565462758543), 0.04456546276);
        assert_eq!(sig10(1.7489332813246), 1.748933281);
        assert_eq!(sig10(0.0), 0.0);
        assert!(sig10(f64::NAN).is_nan());
        assert_eq!(fmt_num(2.5e-7), "2.5e-7");
        assert_eq!(fmt_num(0.05), "0.05");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn json_rounding_leaves_integers() {
        let v = to_rounded_json(&serde_json::json!({"a": 0.1234567890123, "seed": 18446744073709551615u64, "b": [1.0, 2]})).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.123456789));
        assert_eq!(v["seed"].as_u64(), Some(u64::MAX));
        assert_eq!(v["b"][1].as_u64(), Some(2));
    }
}
