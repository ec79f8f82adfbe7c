use std::io::{BufRead, Write};
use std::ops::Range;

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BATCH_SCHEMA: &str = "nnrl.batch/1";

/// Label noise: none, or additive `N(0, ϑ²)` (sub-Gaussian with parameter `ϑ`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Noiseless,
    Gaussian { theta: f64 },
}

/// Default truncation radius `max(10√d, d)`.
pub fn default_radius(d: usize) -> f64 {
    (10.0 * (d as f64).sqrt()).max(d as f64)
}

/// Gaussian features with labels; samples outside the radius carry label 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    /// One sample per column.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub truncated: Vec<bool>,
    pub radius: f64,
    pub noise: NoiseModel,
}

impl SampleBatch {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, truncated: Vec<bool>, radius: f64, noise: NoiseModel) -> Result<Self> {
        if x.ncols() != y.len() || y.len() != truncated.len() {
            return Err(Error::InvalidInput("batch column, label and flag counts differ".into()));
        }
        if truncated.iter().zip(&y).any(|(&t, &v)| t && v != 0.0) {
            return Err(Error::InvalidInput("truncated samples must carry label 0".into()));
        }
        Ok(Self { x, y, truncated, radius, noise })
    }

    /// Draw `n` samples: per sample, `d` standard normals, then one noise draw when
    /// the model is noisy. Samples with `‖x‖ > radius` are truncated.
    pub fn generate<R, F>(d: usize, n: usize, radius: f64, noise: NoiseModel, rng: &mut R, f: F) -> Self
    where
        R: Rng + ?Sized,
        F: Fn(DVectorView<f64>) -> f64,
    {
        let mut x = DMatrix::zeros(d, n);
        let mut y = vec![0.0; n];
        let mut truncated = vec![false; n];
        for i in 0..n {
            for r in 0..d {
                x[(r, i)] = rng.sample(StandardNormal);
            }
            let xi: f64 = match noise {
                NoiseModel::Noiseless => 0.0,
                NoiseModel::Gaussian { theta } => theta * rng.sample::<f64, _>(StandardNormal),
            };
            let col = x.column(i);
            if col.norm() > radius {
                truncated[i] = true;
            } else {
                y[i] = f(col) + xi;
            }
        }
        Self { x, y, truncated, radius, noise }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn truncated_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.truncated.iter().filter(|&&t| t).count() as f64 / self.len() as f64
    }

    /// Four consecutive parts in stream order; earlier parts take the remainder.
    pub fn partition(&self) -> [Range<usize>; 4] {
        partition(self.len())
    }

    pub fn features(&self, r: Range<usize>) -> DMatrixView<'_, f64> {
        self.x.columns(r.start, r.len())
    }

    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.x.column(i).into_owned()
    }

    /// Text table: a header line, then one row `x₁ … x_d y truncated` per sample.
    pub fn write_table<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let noise = serde_json::to_string(&self.noise).expect("serializable");
        writeln!(w, "# {BATCH_SCHEMA} d={} n={} radius={:e} noise={noise}", self.dim(), self.len(), self.radius)?;
        for i in 0..self.len() {
            for r in 0..self.dim() {
                write!(w, "{:e} ", self.x[(r, i)])?;
            }
            writeln!(w, "{:e} {}", self.y[i], u8::from(self.truncated[i]))?;
        }
        Ok(())
    }

    pub fn read_table<B: BufRead>(r: B) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("batch table: {m}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("missing header"))?.map_err(|e| bad(&e.to_string()))?;
        let field = |key: &str| {
            header
                .split_whitespace()
                .find_map(|tok| tok.strip_prefix(key))
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        if !header.contains(BATCH_SCHEMA) {
            return Err(bad("unknown schema"));
        }
        let d: usize = field("d=")?.parse().map_err(|_| bad("d"))?;
        let n: usize = field("n=")?.parse().map_err(|_| bad("n"))?;
        let radius: f64 = field("radius=")?.parse().map_err(|_| bad("radius"))?;
        let noise_text = header.split("noise=").nth(1).ok_or_else(|| bad("noise"))?;
        let noise: NoiseModel = serde_json::from_str(noise_text).map_err(|_| bad("noise"))?;
        let mut x = DMatrix::zeros(d, n);
        let mut y = Vec::with_capacity(n);
        let mut truncated = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if i >= n || vals.len() != d + 2 {
                return Err(bad("row shape"));
            }
            for r in 0..d {
                x[(r, i)] = vals[r].parse().map_err(|_| bad("value"))?;
            }
            y.push(vals[d].parse().map_err(|_| bad("label"))?);
            truncated.push(vals[d + 1] == "1");
        }
        if y.len() != n {
            return Err(bad("row count"));
        }
        Self::new(x, y, truncated, radius, noise)
    }
}

/// Four consecutive ranges covering `0..n`; earlier ranges take the remainder.
pub fn partition(n: usize) -> [Range<usize>; 4] {
    let (q, r) = (n / 4, n % 4);
    let mut out: [Range<usize>; 4] = Default::default();
    let mut start = 0;
    for (i, part) in out.iter_mut().enumerate() {
        let len = q + usize::from(i < r);
        *part = start..start + len;
        start += len;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn partition_sizes() {
        let p = partition(10);
        assert_eq!(p, [0..3, 3..6, 6..8, 8..10]);
        assert_eq!(partition(3), [0..1, 1..2, 2..3, 3..3]);
    }

    #[test]
    fn table_round_trip() {
        let mut rng = stream(2, "batch", 0);
        let b = SampleBatch::generate(3, 20, 2.0, NoiseModel::Gaussian { theta: 0.1 }, &mut rng, |x| x[0]);
        let mut buf = Vec::new();
        b.write_table(&mut buf).unwrap();
        let back = SampleBatch::read_table(&buf[..]).unwrap();
        assert_eq!(back, b);
        assert!(b.truncated.iter().any(|&t| t));
    }
}
