//! Plain-text network checkpoints.
//!
//! ```text
//! CHRONONET1
//! seed <u64>
//! layers <count>
//! layer <in> <out> <activation>
//! w <out*in values, row-major>
//! b <out values>
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::layer::{Activation, DenseLayer};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "CHRONONET1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub layers: Vec<DenseLayer>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "layers {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(
                out,
                "layer {} {} {}",
                l.in_dim(),
                l.out_dim(),
                l.activation.tag()
            );
            out.push('w');
            for v in l.weights.iter() {
                let _ = write!(out, " {v}");
            }
            out.push_str("\nb");
            for v in l.biases.iter() {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let bad = |line: usize, message: &str| Error::Parse {
            line,
            column: 1,
            message: message.to_string(),
        };
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(0, &format!("missing {what}")))
        };

        let (ln, magic) = next("magic header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad(ln, "not a CHRONONET1 checkpoint"));
        }
        let (ln, seed_line) = next("seed")?;
        let seed = seed_line
            .strip_prefix("seed ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(ln, "bad seed line"))?;
        let (ln, count_line) = next("layer count")?;
        let count: usize = count_line
            .strip_prefix("layers ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(ln, "bad layers line"))?;

        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, head) = next("layer header")?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            let (in_dim, out_dim, act) = match parts.as_slice() {
                ["layer", i, o, a] => (
                    i.parse::<usize>().map_err(|_| bad(ln, "bad in dim"))?,
                    o.parse::<usize>().map_err(|_| bad(ln, "bad out dim"))?,
                    Activation::from_tag(a).ok_or_else(|| bad(ln, "unknown activation"))?,
                ),
                _ => return Err(bad(ln, "bad layer header")),
            };
            let (ln, w) = next("weights")?;
            let weights =
                parse_values(w, 'w', in_dim * out_dim).ok_or_else(|| bad(ln, "bad weights"))?;
            let (ln, b) = next("biases")?;
            let biases = parse_values(b, 'b', out_dim).ok_or_else(|| bad(ln, "bad biases"))?;
            let weights = Array2::from_shape_vec((out_dim, in_dim), weights)
                .map_err(|e| Error::Shape(e.to_string()))?;
            layers.push(DenseLayer::new(weights, Array1::from(biases), act)?);
        }
        Ok(Checkpoint { seed, layers })
    }
}

fn parse_values(line: &str, tag: char, expected: usize) -> Option<Vec<f64>> {
    let rest = line.strip_prefix(tag)?;
    let vals: Vec<f64> = rest
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    (vals.len() == expected).then_some(vals)
}

pub fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_text(&text)
}
