//! Versioned plain-text format for trained networks.
//!
//! ```text
//! mlp-params v1 widths=2,3,1 hidden=tanh
//! <row 0 of W[0]>
//! <row 1 of W[0]>
//! <row 2 of W[0]>
//! <b[0]>
//! <row 0 of W[1]>
//! <b[1]>
//! ```
//!
//! Values are whitespace-separated decimals written with the shortest
//! representation that parses back to the same `f64`.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::{Activation, Layer, MlpError, NetworkParams};

const MAGIC: &str = "mlp-params";
const VERSION: &str = "v1";

fn write_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

pub fn write_params(p: &NetworkParams, hidden: Activation) -> String {
    let widths: Vec<String> = p.widths().iter().map(usize::to_string).collect();
    let mut out = format!(
        "{MAGIC} {VERSION} widths={} hidden={}\n",
        widths.join(","),
        hidden.name()
    );
    for l in &p.layers {
        for row in l.weights.rows() {
            write_row(&mut out, row.iter());
        }
        write_row(&mut out, l.bias.iter());
    }
    out
}

fn format_err(line: usize, message: impl Into<String>) -> MlpError {
    MlpError::Format {
        line,
        message: message.into(),
    }
}

pub fn read_params(text: &str) -> Result<(NetworkParams, Activation), MlpError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| format_err(1, "empty file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(format_err(1, format!("expected `{MAGIC}` header")));
    }
    match parts.next() {
        Some(VERSION) => {}
        other => return Err(format_err(1, format!("unsupported version {other:?}"))),
    }
    let (mut widths, mut hidden) = (None, None);
    for kv in parts {
        match kv.split_once('=') {
            Some(("widths", w)) => {
                let parsed: Result<Vec<usize>, _> = w.split(',').map(str::parse).collect();
                widths = Some(parsed.map_err(|_| format_err(1, "bad widths"))?);
            }
            Some(("hidden", h)) => {
                hidden = Some(
                    Activation::from_name(h)
                        .ok_or_else(|| format_err(1, format!("unknown activation `{h}`")))?,
                );
            }
            _ => return Err(format_err(1, format!("unexpected header field `{kv}`"))),
        }
    }
    let widths = widths.ok_or_else(|| format_err(1, "missing widths"))?;
    let hidden = hidden.ok_or_else(|| format_err(1, "missing hidden activation"))?;
    if widths.len() < 2 || widths.contains(&0) {
        return Err(format_err(1, "need at least two positive widths"));
    }

    let mut read_row = |expected: usize| -> Result<Vec<f64>, MlpError> {
        let (no, line) = lines
            .next()
            .ok_or_else(|| format_err(0, "unexpected end of file"))?;
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|e| format_err(no, e.to_string()))?;
        if row.len() != expected {
            return Err(format_err(
                no,
                format!("expected {expected} values, found {}", row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(format_err(no, "non-finite value"));
        }
        Ok(row)
    };

    let mut layers = Vec::with_capacity(widths.len() - 1);
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let mut flat = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_out {
            flat.extend(read_row(fan_in)?);
        }
        let weights = Array2::from_shape_vec((fan_out, fan_in), flat)
            .expect("row lengths checked");
        let bias = Array1::from(read_row(fan_out)?);
        layers.push(Layer { weights, bias });
    }
    if let Some((no, extra)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(format_err(no, format!("trailing content `{extra}`")));
    }
    Ok((NetworkParams { layers }, hidden))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_exact(widths in prop::collection::vec(1usize..5, 2..5), seed in any::<u64>()) {
            let p = NetworkParams::init(&widths, 3.7, &mut crate::rng::stream(seed, &[]));
            let text = write_params(&p, Activation::Sigmoid);
            let (q, act) = read_params(&text).unwrap();
            prop_assert_eq!(q, p);
            prop_assert_eq!(act, Activation::Sigmoid);
        }
    }

    #[test]
    fn header_layout() {
        let p = NetworkParams::zeros(&[2, 3, 1]);
        let text = write_params(&p, Activation::Tanh);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "mlp-params v1 widths=2,3,1 hidden=tanh");
        // 3 weight rows + bias, then 1 weight row + bias.
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert_eq!(lines[1], "0 0");
    }

    #[test]
    fn malformed_files() {
        assert!(read_params("").is_err());
        assert!(read_params("mlp-params v2 widths=1,1 hidden=tanh\n1\n0\n").is_err());
        assert!(read_params("mlp-params v1 widths=1,1 hidden=cosh\n1\n0\n").is_err());
        let short = read_params("mlp-params v1 widths=2,1 hidden=tanh\n1\n0\n");
        assert!(matches!(short, Err(MlpError::Format { line: 2, .. })));
        assert!(read_params("mlp-params v1 widths=1,1 hidden=tanh\n1\n0\n7\n").is_err());
        assert!(read_params("mlp-params v1 widths=1,1 hidden=tanh\n1\n0\n").is_ok());
    }
}
