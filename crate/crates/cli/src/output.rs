//! Byte-stable CSV and JSON writers.

use crate::error::CliError;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Comment line heading every CSV.
pub const TIME_UNIT_COMMENT: &str = "# time unit: natural units with m = 1, hbar = 1, k_B = 1";

/// 17 significant digits in scientific notation; round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    // no "-0" in the output
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

/// Renders `rows` under `header` with the time-unit comment line.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = String::new();
    out.push_str(TIME_UNIT_COMMENT);
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn json<T: Serialize>(value: &T) -> String {
    // Value's map is ordered by key
    let value = serde_json::to_value(value).expect("report values serialise");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON values serialise");
    text.push('\n');
    text
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(2.25), "2.2500000000000000e0");
        assert_eq!(fmt_f64(-0.0), "0.0000000000000000e0");
        assert_eq!(fmt_f64(-1.0 / 3.0), "-3.3333333333333331e-1");
        let v = 0.1 + 0.2;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn csv_layout() {
        let text = csv(&["t", "a"], [vec![0.0, 1.5]]);
        assert_eq!(
            text,
            format!("{TIME_UNIT_COMMENT}\nt,a\n0.0000000000000000e0,1.5000000000000000e0\n")
        );
    }

    #[test]
    fn json_keys_sorted() {
        let text = json(&serde_json::json!({"zeta": 1, "alpha": {"b": 2, "a": 1}}));
        let (alpha, zeta) = (text.find("alpha").unwrap(), text.find("zeta").unwrap());
        assert!(alpha < zeta && text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
        assert!(text.ends_with("}\n"));
    }
}
