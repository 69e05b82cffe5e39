//! Plain-text model checkpoints.
//!
//! ```text
//! adr-transducer 1
//! cell_kind LSTM
//! input_dim 400
//! hidden_dim 500
//! tensor forward.w_x 2000 400
//! <values, space separated>
//! ...
//! ```
//!
//! Values are written in Rust's shortest round-trip float form, so a
//! reloaded model is bit-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::TransducerParams;
use crate::embedding::CellKind;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &str = "adr-transducer 1";

pub fn write_checkpoint(params: &TransducerParams) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "cell_kind {}", params.cell_kind).unwrap();
    writeln!(out, "input_dim {}", params.input_dim).unwrap();
    writeln!(out, "hidden_dim {}", params.hidden_dim).unwrap();
    for (name, t) in params.tensors() {
        writeln!(out, "tensor {name} {} {}", t.rows(), t.cols()).unwrap();
        let mut first = true;
        for v in t.as_slice() {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn header_value<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
    path: &Path,
) -> Result<(usize, &'a str)> {
    let (no, line) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 0, format!("missing `{key}` line")))?;
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::parse(path, no, format!("expected `{key} <value>`")))?;
    Ok((no, rest.trim()))
}

pub fn parse_checkpoint(text: &str, path: &Path) -> Result<TransducerParams> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(Error::parse(path, 1, format!("expected `{MAGIC}` header"))),
    }
    let (no, kind) = header_value(&mut lines, "cell_kind", path)?;
    let kind: CellKind = kind
        .parse()
        .map_err(|e: String| Error::parse(path, no, e))?;
    let mut dim = |key: &str| -> Result<usize> {
        let (no, v) = header_value(&mut lines, key, path)?;
        v.parse()
            .map_err(|_| Error::parse(path, no, format!("bad {key} {v:?}")))
    };
    let input_dim = dim("input_dim")?;
    let hidden_dim = dim("hidden_dim")?;

    let mut params = TransducerParams::zeros(kind, input_dim, hidden_dim);
    for (name, tensor) in params.tensors_mut() {
        let (no, spec) = header_value(&mut lines, "tensor", path)?;
        let fields: Vec<&str> = spec.split_whitespace().collect();
        let expected = [
            name.to_string(),
            tensor.rows().to_string(),
            tensor.cols().to_string(),
        ];
        if fields != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::parse(
                path,
                no,
                format!(
                    "expected tensor {} {}x{}, found {spec:?}",
                    name,
                    tensor.rows(),
                    tensor.cols()
                ),
            ));
        }
        let (no, values) = lines
            .next()
            .ok_or_else(|| Error::parse(path, no + 1, format!("missing values for {name}")))?;
        let values: Vec<f64> = values
            .split_whitespace()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::parse(path, no, format!("bad value {v:?}")))
            })
            .collect::<Result<_>>()?;
        if values.len() != tensor.len() {
            return Err(Error::parse(
                path,
                no,
                format!(
                    "{name}: expected {} values, found {}",
                    tensor.len(),
                    values.len()
                ),
            ));
        }
        *tensor = Tensor::from_vec(tensor.rows(), tensor.cols(), values);
    }
    if !params.all_finite() {
        return Err(Error::NonFinite(format!("checkpoint {}", path.display())));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &TransducerParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    crate::io::write_atomic(path, write_checkpoint(params).as_bytes())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TransducerParams> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transducer::forward_inputs;

    #[test]
    fn round_trip_is_exact() {
        for kind in [CellKind::Lstm, CellKind::Gru] {
            let p = TransducerParams::init(kind, 3, 2, 17);
            let q = parse_checkpoint(&write_checkpoint(&p), Path::new("m")).unwrap();
            assert_eq!(p, q);
            let x = [0.3, -0.2, 0.9, 0.1, 0.0, -1.0];
            assert_eq!(
                forward_inputs(&p, &x, 2).unwrap(),
                forward_inputs(&q, &x, 2).unwrap()
            );
        }
    }

    #[test]
    fn rejects_corruption() {
        let p = TransducerParams::init(CellKind::Gru, 2, 2, 1);
        let text = write_checkpoint(&p);
        assert!(
            parse_checkpoint(&text.replacen("adr-transducer", "model", 1), Path::new("m")).is_err()
        );
        assert!(parse_checkpoint(
            &text.replacen("hidden_dim 2", "hidden_dim 3", 1),
            Path::new("m")
        )
        .is_err());
        let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
        assert!(parse_checkpoint(&truncated, Path::new("m")).is_err());
    }
}
