//! USPS digits in whitespace text form, one sample per line: a label, then
//! 256 grey values in `[-1, 1]`. Both the dense layout (`label v1 .. v256`)
//! and the sparse LIBSVM layout (`label idx:value ...`, 1-based indices,
//! omitted values are 0) are accepted. Labels `1..=10` are shifted to
//! `0..=9`; labels already in `0..=9` are kept.

use std::path::Path;

use super::{read_maybe_compressed, Dataset};
use crate::error::{Error, Result};
use crate::nn::Tensor;

const SIDE: usize = 16;
const PIXELS: usize = SIDE * SIDE;

/// Parses file contents; errors carry 1-based line numbers.
pub fn parse_usps(text: &str) -> std::result::Result<(Vec<f32>, Vec<u8>), String> {
    let mut pixels = Vec::new();
    let mut raw_labels = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label = label_tok
            .parse::<f64>()
            .ok()
            .filter(|l| l.fract() == 0.0 && (0.0..=10.0).contains(l))
            .ok_or_else(|| format!("line {ln}: bad label '{label_tok}'"))? as u8;
        let rest: Vec<&str> = tokens.collect();
        let mut row = [0.0f64; PIXELS];
        if rest.first().is_some_and(|t| t.contains(':')) {
            for t in &rest {
                let (i, v) = t
                    .split_once(':')
                    .ok_or_else(|| format!("line {ln}: mixed sparse and dense values"))?;
                let i: usize = i
                    .parse()
                    .ok()
                    .filter(|i| (1..=PIXELS).contains(i))
                    .ok_or_else(|| format!("line {ln}: bad index '{i}'"))?;
                row[i - 1] = v.parse().map_err(|_| format!("line {ln}: bad value '{v}'"))?;
            }
        } else {
            if rest.len() != PIXELS {
                return Err(format!("line {ln}: expected {PIXELS} values, found {}", rest.len()));
            }
            for (dst, t) in row.iter_mut().zip(&rest) {
                *dst = t.parse().map_err(|_| format!("line {ln}: bad value '{t}'"))?;
            }
        }
        for v in row {
            if !(-1.0..=1.0).contains(&v) {
                return Err(format!("line {ln}: value {v} outside [-1, 1]"));
            }
            pixels.push(((v + 1.0) / 2.0) as f32);
        }
        raw_labels.push(label);
    }
    let has_ten = raw_labels.contains(&10);
    if has_ten && raw_labels.contains(&0) {
        return Err("labels mix 0 and 10; cannot tell 0-based from 1-based".into());
    }
    let labels = raw_labels.into_iter().map(|l| if has_ten { l - 1 } else { l }).collect();
    Ok((pixels, labels))
}

pub fn load_usps(path: &Path) -> Result<Dataset> {
    let bytes = read_maybe_compressed(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::data(path, "not UTF-8 text"))?;
    let (pixels, labels) = parse_usps(&text).map_err(|m| Error::data(path, m))?;
    if labels.is_empty() {
        return Err(Error::data(path, "no samples"));
    }
    Dataset::new("usps", Tensor::new(vec![labels.len(), 1, SIDE, SIDE], pixels)?, labels)
}
