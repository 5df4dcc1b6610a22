//! Plain-text file formats.
//!
//! * tensor: `tensor3 I J K`, optional `# modes: a b c` line, then the
//!   values in first-index-fastest order (one mode-1 fiber per line);
//! * matrix: `matrix ROWS COLS`, then the values row by row;
//! * labels: one `0` or `1` per line, line `i` is subject `i`;
//! * synthetic spec: `key = value` lines, lists comma-separated.
//!
//! Lines starting with `#` are comments. Values are written with the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::GroupLabels;
use crate::synthetic::SynthSpec;
use crate::tensor::{DenseMatrix, DenseTensor3};

/// Shortest round-trip text for `v`; switches to exponent form outside
/// `[1e-5, 1e16)`.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line,
        message: message.into(),
    })
}

/// Non-comment lines with their 1-based numbers; comment lines are passed
/// to `on_comment`.
fn content_lines<'a>(text: &'a str, mut on_comment: impl FnMut(&'a str)) -> Vec<(usize, &'a str)> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(c) = t.strip_prefix('#') {
            on_comment(c.trim());
        } else if !t.is_empty() {
            out.push((n + 1, t));
        }
    }
    out
}

fn parse_header(lines: &[(usize, &str)], keyword: &str, n: usize) -> Result<Vec<usize>> {
    let Some(&(line, header)) = lines.first() else {
        return parse_err(1, format!("missing `{keyword}` header"));
    };
    let mut tok = header.split_whitespace();
    if tok.next() != Some(keyword) {
        return parse_err(line, format!("expected header starting with `{keyword}`"));
    }
    let dims: Vec<usize> = tok
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .or_else(|e| parse_err(line, format!("bad extent in header: {e}")))?;
    if dims.len() != n {
        return parse_err(
            line,
            format!("`{keyword}` header needs {n} extents, got {}", dims.len()),
        );
    }
    Ok(dims)
}

fn parse_values(lines: &[(usize, &str)], expected: usize) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(expected);
    let mut last = lines.first().map_or(1, |l| l.0);
    for &(line, text) in lines {
        last = line;
        for tok in text.split_whitespace() {
            let v: f64 = tok
                .parse()
                .or_else(|_| parse_err(line, format!("`{tok}` is not a number")))?;
            if !v.is_finite() {
                return parse_err(line, format!("non-finite value `{tok}`"));
            }
            values.push(v);
        }
    }
    if values.len() != expected {
        return parse_err(
            last,
            format!("expected {expected} values, found {}", values.len()),
        );
    }
    Ok(values)
}

pub fn parse_tensor(text: &str) -> Result<DenseTensor3> {
    let mut names: Option<Vec<String>> = None;
    let lines = content_lines(text, |c| {
        if let Some(rest) = c.strip_prefix("modes:") {
            names = Some(rest.split_whitespace().map(String::from).collect());
        }
    });
    let d = parse_header(&lines, "tensor3", 3)?;
    let dims = [d[0], d[1], d[2]];
    let values = parse_values(&lines[1..], dims.iter().product())?;
    let t = DenseTensor3::new(dims, values).or_else(|e| parse_err(lines[0].0, e.to_string()))?;
    Ok(match names {
        Some(n) if n.len() == 3 => t.with_mode_names([n[0].clone(), n[1].clone(), n[2].clone()]),
        _ => t,
    })
}

pub fn format_tensor(t: &DenseTensor3) -> String {
    let [ni, nj, nk] = t.dims();
    let [m1, m2, m3] = t.mode_names();
    let mut s = format!("tensor3 {ni} {nj} {nk}\n# modes: {m1} {m2} {m3}\n");
    for fiber in t.as_slice().chunks(ni.max(1)) {
        push_row(&mut s, fiber.iter().copied());
    }
    s
}

fn push_row(s: &mut String, values: impl Iterator<Item = f64>) {
    for (n, v) in values.enumerate() {
        if n > 0 {
            s.push(' ');
        }
        s.push_str(&format_f64(v));
    }
    s.push('\n');
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let lines = content_lines(text, |_| {});
    let d = parse_header(&lines, "matrix", 2)?;
    let (rows, cols) = (d[0], d[1]);
    let values = parse_values(&lines[1..], rows * cols)?;
    if rows == 0 || cols == 0 {
        return parse_err(lines[0].0, "matrix extents must be positive");
    }
    let by_rows: Vec<Vec<f64>> = values.chunks(cols).map(<[f64]>::to_vec).collect();
    DenseMatrix::from_rows(&by_rows)
}

pub fn format_matrix(m: &DenseMatrix) -> String {
    let (rows, cols) = m.dims();
    let mut s = format!("matrix {rows} {cols}\n");
    for r in 0..rows {
        push_row(&mut s, (0..cols).map(|c| m.get(r, c)));
    }
    s
}

pub fn parse_labels(text: &str) -> Result<GroupLabels> {
    let body = text.trim_end();
    let mut labels = Vec::new();
    for (n, line) in body.lines().enumerate() {
        match line.trim() {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => return parse_err(n + 1, format!("label must be 0 or 1, got `{other}`")),
        }
    }
    GroupLabels::new(&labels).or_else(|e| parse_err(labels.len().max(1), e.to_string()))
}

pub fn format_labels(l: &GroupLabels) -> String {
    l.as_u8().iter().map(|v| format!("{v}\n")).collect()
}

pub fn format_vector(v: &[f64]) -> String {
    v.iter().map(|x| format_f64(*x) + "\n").collect()
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let lines = content_lines(text, |_| {});
    let n = lines.iter().map(|l| l.1.split_whitespace().count()).sum();
    parse_values(&lines, n)
}

fn list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<T>()
                .or_else(|_| parse_err(line, format!("`{key}`: cannot parse `{s}`")))
        })
        .collect()
}

fn scalar<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .or_else(|_| parse_err(line, format!("`{key}`: cannot parse `{v}`")))
}

/// Reads a [`SynthSpec`]. `dims` and `rank` are required. Omitted flags are
/// derived from the weights (`in_matrix[r] = sigma[r] != 0`); other
/// omitted keys take the values of [`SynthSpec::shared`].
pub fn parse_synth_spec(text: &str) -> Result<SynthSpec> {
    let mut entries: Vec<(usize, &str, &str)> = Vec::new();
    for (line, t) in content_lines(text, |_| {}) {
        let Some((k, v)) = t.split_once('=') else {
            return parse_err(line, "expected `key = value`");
        };
        let k = k.trim();
        if entries.iter().any(|e| e.1 == k) {
            return parse_err(line, format!("duplicate key `{k}`"));
        }
        entries.push((line, k, v.trim()));
    }
    let find = |k: &str| entries.iter().find(|e| e.1 == k).copied();
    let (Some(dl), Some(rl)) = (find("dims"), find("rank")) else {
        return parse_err(1, "spec needs `dims` and `rank`");
    };
    let dims: Vec<usize> = list(dl.0, "dims", dl.2)?;
    let Ok(dims) = <[usize; 4]>::try_from(dims) else {
        return parse_err(dl.0, "`dims` needs four extents I, J, K, M");
    };
    let rank: usize = scalar(rl.0, "rank", rl.2)?;
    let mut spec = SynthSpec::shared(dims, rank, 0);
    let mut flags_given = (false, false);
    for &(line, key, v) in &entries {
        match key {
            "dims" | "rank" => {}
            "in_tensor" => {
                spec.in_tensor = list(line, key, v)?;
                flags_given.0 = true;
            }
            "in_matrix" => {
                spec.in_matrix = list(line, key, v)?;
                flags_given.1 = true;
            }
            "lambda" => spec.lambda = list(line, key, v)?,
            "sigma" => spec.sigma = list(line, key, v)?,
            "delta" => spec.delta = list(line, key, v)?,
            "noise_tensor" => spec.noise_tensor = scalar(line, key, v)?,
            "noise_matrix" => spec.noise_matrix = scalar(line, key, v)?,
            "smooth_time" => spec.smooth_time = scalar(line, key, v)?,
            "seed" => spec.seed = scalar(line, key, v)?,
            "groups" => {
                let g: Vec<usize> = list(line, key, v)?;
                let [n0, n1] = g[..] else {
                    return parse_err(line, "`groups` needs two counts n0, n1");
                };
                spec.groups = (n0, n1);
            }
            other => return parse_err(line, format!("unknown key `{other}`")),
        }
    }
    if !flags_given.0 {
        spec.in_tensor = spec.lambda.iter().map(|&l| l != 0.0).collect();
    }
    if !flags_given.1 {
        spec.in_matrix = spec.sigma.iter().map(|&s| s != 0.0).collect();
    }
    Ok(spec)
}

pub fn format_synth_spec(s: &SynthSpec) -> String {
    let join = |v: Vec<String>| v.join(", ");
    let floats = |v: &[f64]| join(v.iter().map(|x| format_f64(*x)).collect());
    let bools = |v: &[bool]| join(v.iter().map(bool::to_string).collect());
    let mut out = String::new();
    let [i, j, k, m] = s.dims;
    let _ = writeln!(out, "dims = {i}, {j}, {k}, {m}");
    let _ = writeln!(out, "rank = {}", s.rank);
    let _ = writeln!(out, "in_tensor = {}", bools(&s.in_tensor));
    let _ = writeln!(out, "in_matrix = {}", bools(&s.in_matrix));
    let _ = writeln!(out, "lambda = {}", floats(&s.lambda));
    let _ = writeln!(out, "sigma = {}", floats(&s.sigma));
    let _ = writeln!(out, "noise_tensor = {}", format_f64(s.noise_tensor));
    let _ = writeln!(out, "noise_matrix = {}", format_f64(s.noise_matrix));
    let _ = writeln!(out, "groups = {}, {}", s.groups.0, s.groups.1);
    let _ = writeln!(out, "delta = {}", floats(&s.delta));
    let _ = writeln!(out, "smooth_time = {}", s.smooth_time);
    let _ = writeln!(out, "seed = {}", s.seed);
    out
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor3> {
    parse_tensor(&fs::read_to_string(path)?)
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    parse_matrix(&fs::read_to_string(path)?)
}

pub fn read_labels(path: &Path) -> Result<GroupLabels> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    parse_vector(&fs::read_to_string(path)?)
}

pub fn read_synth_spec(path: &Path) -> Result<SynthSpec> {
    parse_synth_spec(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_with_names() {
        let t = DenseTensor3::from_fn([2, 3, 2], |i, j, k| {
            (i + 10 * j) as f64 / 7.0 - k as f64 * 1e-20
        })
        .unwrap()
        .with_mode_names(["s".into(), "t".into(), "e".into()]);
        let back = parse_tensor(&format_tensor(&t)).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.mode_names()[1], "t");
    }

    #[test]
    fn matrix_is_row_major() {
        let m = parse_matrix("matrix 2 3\n1 2 3\n4 5 6\n").unwrap();
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.row(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_tensor("tensor3 1 1 2\n1.0\nnan\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        assert!(matches!(
            parse_tensor("tensor3 1 1 2\n1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_matrix("mat 1 1\n1\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_labels("0\n1\n2\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(parse_labels("0\n0\n").is_err());
    }

    #[test]
    fn float_formatting_round_trips_extremes() {
        for v in [
            0.1,
            -2.5e-300,
            1.7976931348623157e308,
            5e-324,
            123456.789,
            1e16,
            -0.0,
        ] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_f64(1e-300), "1e-300");
    }

    #[test]
    fn spec_derives_flags_from_weights() {
        let s =
            parse_synth_spec("dims = 4, 3, 2, 5\nrank = 2\nsigma = 1, 0\ngroups = 2, 2\n").unwrap();
        assert_eq!(s.in_matrix, vec![true, false]);
        s.validate().unwrap();
        assert_eq!(parse_synth_spec(&format_synth_spec(&s)).unwrap(), s);
    }

    #[test]
    fn spec_rejects_unknown_and_duplicate_keys() {
        assert!(parse_synth_spec("dims = 1, 1, 1, 1\nrank = 1\ncolour = red\n").is_err());
        assert!(parse_synth_spec("dims = 1, 1, 1, 1\nrank = 1\nrank = 2\n").is_err());
        assert!(parse_synth_spec("rank = 1\n").is_err());
    }
}
