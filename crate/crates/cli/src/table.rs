//! Feature tables: one row per image, the path followed by the C2 values.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pbim_core::{Error, FeatureVector};

/// Nine significant digits; plain notation for moderate magnitudes.
pub fn format_value(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // rounding can carry into an extra digit (9.999999999 -> 10.00000000)
        let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
        let leading_zeros = if exp < 0 { (-exp) as usize } else { 0 };
        if digits > 9 + leading_zeros && decimals > 0 {
            let d = decimals - 1;
            return format!("{v:.d$}");
        }
        s
    } else {
        format!("{v:.8e}")
    }
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn write_rows(rows: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    for (name, values) in rows {
        out.push_str(&quote(name));
        for v in values {
            write!(out, ",{}", format_value(*v)).expect("string write");
        }
        out.push('\n');
    }
    out
}

/// Splits one CSV line, honoring double-quoted fields.
fn split_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            (c, _) => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Reads a feature table and tags every row with `fingerprint`.
pub fn read_features(path: &Path, expected_len: usize, fingerprint: &str) -> Result<Vec<(String, FeatureVector)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_line(line);
        let values = fields[1..]
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| {
                Error::Format(format!("{}:{}: bad feature value: {e}", path.display(), lineno + 1))
            })?;
        if values.len() != expected_len {
            return Err(Error::Format(format!(
                "{}:{}: {} feature values, dictionary has {expected_len} patches",
                path.display(),
                lineno + 1,
                values.len()
            ))
            .into());
        }
        rows.push((fields[0].clone(), FeatureVector::new(values, fingerprint)));
    }
    if rows.is_empty() {
        bail!(Error::Argument(format!("{}: no feature rows", path.display())));
    }
    Ok(rows)
}
