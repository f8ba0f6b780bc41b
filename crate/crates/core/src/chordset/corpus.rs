//! Corpus readers.
//!
//! Two layouts are accepted:
//! - JSON with arbitrarily nested arrays whose innermost arrays hold up to four
//!   pitch numbers (`NaN` and `null` mean silence). The chorale dump split into
//!   `train`/`valid`/`test` objects is handled by concatenating every value in
//!   key order `train`, `valid`, `test`, then any others.
//! - Plain text, one column per line, 1-4 integers separated by whitespace or
//!   commas. Blank lines and lines starting with `#` are ignored.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Four voices of MIDI pitches, `0` for silence.
pub type Column = [u8; 4];

pub fn load_columns(path: &Path) -> Result<Vec<Column>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') || trimmed.starts_with('{') {
        parse_json_columns(&text)
    } else {
        parse_text_columns(&text)
    }
}

pub fn parse_text_columns(text: &str) -> Result<Vec<Column>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                if t.eq_ignore_ascii_case("nan") {
                    Ok(0.0)
                } else {
                    t.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("line {}: bad pitch '{t}'", lineno + 1)))
                }
            })
            .collect::<Result<_>>()?;
        out.push(to_column(&values).map_err(|e| Error::invalid(format!("line {}: {e}", lineno + 1)))?);
    }
    Ok(out)
}

pub fn parse_json_columns(text: &str) -> Result<Vec<Column>> {
    let cleaned = replace_bare_nan(text);
    let value: Value = serde_json::from_str(&cleaned)?;
    let mut out = Vec::new();
    collect(&value, &mut out)?;
    Ok(out)
}

fn collect(v: &Value, out: &mut Vec<Column>) -> Result<()> {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            let rank = |k: &str| match k {
                "train" => 0,
                "valid" | "val" | "validation" => 1,
                "test" => 2,
                _ => 3,
            };
            keys.sort_by(|a, b| rank(a).cmp(&rank(b)).then(a.cmp(b)));
            for k in keys {
                collect(&map[k], out)?;
            }
            Ok(())
        }
        Value::Array(items) if !items.is_empty() && items.iter().all(|x| x.is_number() || x.is_null()) => {
            let values: Vec<f64> = items.iter().map(|x| x.as_f64().unwrap_or(0.0)).collect();
            out.push(to_column(&values)?);
            Ok(())
        }
        Value::Array(items) => items.iter().try_for_each(|x| collect(x, out)),
        other => Err(Error::invalid(format!("unexpected JSON value {other}"))),
    }
}

fn to_column(values: &[f64]) -> Result<Column> {
    if values.len() > 4 {
        return Err(Error::invalid(format!("column has {} voices, at most 4 allowed", values.len())));
    }
    let mut col = [0u8; 4];
    for (slot, &v) in col.iter_mut().zip(values) {
        if v.is_nan() {
            continue;
        }
        if v.fract() != 0.0 || !(0.0..=127.0).contains(&v) {
            return Err(Error::invalid(format!("pitch {v} is not a MIDI note number")));
        }
        *slot = v as u8;
    }
    Ok(col)
}

/// JSON has no NaN literal; the chorale dump uses it for rests.
fn replace_bare_nan(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if in_string {
            if escaped {
                escaped = false;
            } else if c == b'\\' {
                escaped = true;
            } else if c == b'"' {
                in_string = false;
            }
        } else if c == b'"' {
            in_string = true;
        } else if bytes[i..].starts_with(b"NaN") {
            out.push_str("null");
            i += 3;
            continue;
        }
        // text is valid UTF-8 and we only split on ASCII boundaries
        let ch_len = utf8_len(c);
        out.push_str(&text[i..i + ch_len]);
        i += ch_len;
    }
    out
}

fn utf8_len(first: u8) -> usize {
    match first {
        0x00..=0x7F => 1,
        0xC0..=0xDF => 2,
        0xE0..=0xEF => 3,
        _ => 4,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_chorale_dump() {
        let text = r#"{"test": [[[60, 64, 67, NaN]]], "train": [[[48.0, 60.0, 64.0, 67.0], [NaN, NaN, NaN, NaN]]], "valid": []}"#;
        let cols = parse_json_columns(text).unwrap();
        assert_eq!(cols, vec![[48, 60, 64, 67], [0, 0, 0, 0], [60, 64, 67, 0]]);
    }

    #[test]
    fn json_padded_chord_list() {
        let cols = parse_json_columns("[[60, 64, 0, 0], [60, 64, 67], [1, 2, 3, 4]]").unwrap();
        assert_eq!(cols, vec![[60, 64, 0, 0], [60, 64, 67, 0], [1, 2, 3, 4]]);
    }

    #[test]
    fn nan_inside_strings_survives() {
        let cols = parse_json_columns(r#"{"NaN": [[60, 64]]}"#).unwrap();
        assert_eq!(cols, vec![[60, 64, 0, 0]]);
    }

    #[test]
    fn text_rows() {
        let cols = parse_text_columns("# header\n60 64 67 72\n\n60,64\n").unwrap();
        assert_eq!(cols, vec![[60, 64, 67, 72], [60, 64, 0, 0]]);
        assert!(parse_text_columns("60 64 67 72 76").is_err());
        assert!(parse_text_columns("60 x").is_err());
        assert!(parse_text_columns("60.5 64").is_err());
    }

    #[test]
    fn load_dispatches_on_content() {
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("a.json");
        std::fs::write(&json, "[[60, 64]]").unwrap();
        let txt = dir.path().join("a.txt");
        std::fs::write(&txt, "60 64").unwrap();
        assert_eq!(load_columns(&json).unwrap(), load_columns(&txt).unwrap());
        assert!(matches!(load_columns(&dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
