//! Plain-text TinyMlm checkpoints.
//!
//! ```text
//! tiny-mlm-checkpoint 1
//! config {"vocab_size":..,"dim":..,...}
//! mask_id 4
//! tensor embed 40 16
//! <40 lines of 16 space-separated values>
//! tensor pos 64 16
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a save/load
//! cycle is bit-exact.

use super::{LmError, TinyConfig, TinyMlm};
use ndarray::Array2;
use std::fmt::Write as _;

const MAGIC: &str = "tiny-mlm-checkpoint";
const VERSION: u32 = 1;

pub fn to_string(model: &TinyMlm) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "config {}", serde_json::to_string(model.config()).expect("config serializes")).unwrap();
    writeln!(out, "mask_id {}", super::LmBackend::mask_id(model)).unwrap();
    for (name, p) in model.param_names().iter().zip(model.params()) {
        writeln!(out, "tensor {name} {} {}", p.nrows(), p.ncols()).unwrap();
        for row in p.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

pub fn from_str(text: &str) -> Result<TinyMlm, LmError> {
    let err = |line: usize, msg: String| LmError::Checkpoint(format!("line {line}: {msg}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| LmError::Checkpoint(format!("missing {what}")));

    let (n, header) = next("header")?;
    match header.split_once(' ') {
        Some((MAGIC, v)) if v == VERSION.to_string() => {}
        _ => return Err(err(n, format!("unsupported header {header:?}"))),
    }
    let (n, config_line) = next("config")?;
    let config: TinyConfig = config_line
        .strip_prefix("config ")
        .ok_or_else(|| err(n, "expected config".into()))
        .and_then(|s| serde_json::from_str(s).map_err(|e| err(n, e.to_string())))?;
    let (n, mask_line) = next("mask_id")?;
    let mask_id = mask_line
        .strip_prefix("mask_id ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| err(n, "expected mask_id".into()))?;

    let mut params = Vec::new();
    for (name, rows, cols) in config.shapes() {
        let (n, head) = next("tensor header")?;
        let parts: Vec<&str> = head.split(' ').collect();
        if parts.len() != 4 || parts[0] != "tensor" || parts[1] != name {
            return Err(err(n, format!("expected tensor {name}, found {head:?}")));
        }
        if parts[2].parse::<usize>().ok() != Some(rows) || parts[3].parse::<usize>().ok() != Some(cols) {
            return Err(err(n, format!("{name}: shape header {}x{}, expected {rows}x{cols}", parts[2], parts[3])));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, row) = next("tensor row")?;
            let values = row
                .split(' ')
                .map(|v| v.parse::<f64>().map_err(|e| err(n, format!("{v:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != cols {
                return Err(err(n, format!("{} values, expected {cols}", values.len())));
            }
            data.extend(values);
        }
        params.push(Array2::from_shape_vec((rows, cols), data).expect("row count checked"));
    }
    if let Some((n, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(n, format!("trailing content {extra:?}")));
    }
    TinyMlm::from_params(config, mask_id, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::TinyConfig;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = TinyConfig::new(10);
        c.layers = 2;
        c.max_len = 8;
        c.seed = 11;
        let m = TinyMlm::new(c, 4).unwrap();
        let back = from_str(&to_string(&m)).unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.config(), m.config());
    }

    #[test]
    fn rejects_bad_header_and_shape() {
        assert!(from_str("nope 1\n").is_err());
        let m = TinyMlm::new(TinyConfig::new(10), 4).unwrap();
        let text = to_string(&m).replacen("tensor embed 10 16", "tensor embed 9 16", 1);
        assert!(matches!(from_str(&text), Err(LmError::Checkpoint(_))));
    }
}
