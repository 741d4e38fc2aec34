use std::path::Path;

use super::io::write_atomic;
use crate::error::{Error, FormatError, Result};

/// `n` well-separated colors for classes 1..=n.
pub fn default_palette(n: usize) -> Vec<[u8; 3]> {
    (0..n)
        .map(|i| {
            let hue = i as f64 / n.max(1) as f64 * 6.0;
            let value = if i % 2 == 0 { 1.0 } else { 0.7 };
            let x = 1.0 - (hue % 2.0 - 1.0).abs();
            let (r, g, b) = match hue as usize {
                0 => (1.0, x, 0.0),
                1 => (x, 1.0, 0.0),
                2 => (0.0, 1.0, x),
                3 => (0.0, x, 1.0),
                4 => (x, 0.0, 1.0),
                _ => (1.0, 0.0, x),
            };
            let q = |c: f64| (c * value * 255.0).round() as u8;
            [q(r), q(g), q(b)]
        })
        .collect()
}

/// Binary PPM of a row-major `rows x cols` label map. Label 0 is black and
/// label `c` takes `palette[c - 1]`.
pub fn write_classification_map(
    labels: &[usize],
    rows: usize,
    cols: usize,
    palette: &[[u8; 3]],
    path: &Path,
) -> Result<()> {
    if labels.len() != rows * cols {
        return Err(Error::invalid(format!(
            "{} labels for a {rows}x{cols} map",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > palette.len()) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes: palette.len(),
        });
    }
    let mut bytes = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    for &l in labels {
        bytes.extend_from_slice(&if l == 0 { [0; 3] } else { palette[l - 1] });
    }
    write_atomic(path, &bytes)
}

/// Returns `(rows, cols, pixels)`.
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let bad = |m: &str| Error::Format(FormatError::Malformed(m.to_string()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ascii"))?);
    }
    if fields[0] != "P6" {
        return Err(bad("not a P6 pixmap"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (cols, rows, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(bad("only 8-bit pixmaps are supported"));
    }
    let data = &bytes[pos + 1..];
    if data.len() != rows * cols * 3 {
        return Err(bad("pixel payload size"));
    }
    Ok((rows, cols, data.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()))
}
