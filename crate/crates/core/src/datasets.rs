//! Built-in datasets: Gaussian clusters, a digit-image subsample and
//! feature tables read from CSV.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Dense2D;

/// Rows with optional integer class labels.
#[derive(Clone, Debug)]
pub struct Labeled {
    pub x: Dense2D<f64>,
    pub labels: Vec<usize>,
}

/// `clusters` isotropic Gaussian clusters in `dim` dimensions. Cluster `c`
/// is centered on `spacing / sqrt(2)` times the `c`-th unit vector, so all
/// centers are exactly `spacing` apart. Rows are ordered by cluster.
pub fn gaussian_clusters(
    n: usize,
    dim: usize,
    clusters: usize,
    sigma: f64,
    spacing: f64,
    seed: u64,
) -> Result<Labeled> {
    if clusters == 0 || clusters > dim {
        return Err(Error::Argument(format!("{clusters} clusters need 1..={dim} dimensions")));
    }
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = spacing / 2f64.sqrt();
    let labels: Vec<usize> = (0..n).map(|i| i * clusters / n).collect();
    let x = Dense2D::from_fn(n, dim, |i, j| {
        let center = if j == labels[i] { offset } else { 0.0 };
        center + noise.sample(&mut rng)
    });
    Ok(Labeled { x, labels })
}

/// The three-cluster benchmark set: 300 points in 10 dimensions, cluster
/// spread 0.5, centers 8 apart.
pub fn three_gaussians(seed: u64) -> Labeled {
    gaussian_clusters(300, 10, 3, 0.5, 8.0, seed).expect("valid constants")
}

const DIGITS_CSV: &str = include_str!("../data/digits8x8.csv");
pub const DIGIT_SIDE: usize = 28;

/// 1 000 handwritten digits (100 per class) as raw 28x28 grayscale pixels
/// in `[0, 255]`, upsampled bilinearly from 8x8 scans.
pub fn digits() -> Result<Labeled> {
    let mut reader = csv::Reader::from_reader(DIGITS_CSV.as_bytes());
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("digits: {s:?}: {e}")))
        };
        labels.push(parse(&record[0])? as usize);
        let small: Vec<f64> = record.iter().skip(1).map(parse).collect::<Result<_>>()?;
        if small.len() != 64 {
            return Err(Error::Parse(format!("digits: row has {} pixels", small.len())));
        }
        data.extend(upsample(&small, 8, DIGIT_SIDE).into_iter().map(|v| v * 255.0 / 16.0));
    }
    let n = labels.len();
    Ok(Labeled {
        x: Dense2D::new(n, DIGIT_SIDE * DIGIT_SIDE, data)?,
        labels,
    })
}

/// Bilinear resize of a square `from x from` image to `to x to`, aligning
/// pixel centers.
fn upsample(img: &[f64], from: usize, to: usize) -> Vec<f64> {
    let scale = from as f64 / to as f64;
    let coord = |o: usize| {
        let c = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (from - 1) as f64);
        let lo = c.floor() as usize;
        let hi = (lo + 1).min(from - 1);
        (lo, hi, c - lo as f64)
    };
    let mut out = Vec::with_capacity(to * to);
    for r in 0..to {
        let (r0, r1, fr) = coord(r);
        for c in 0..to {
            let (c0, c1, fc) = coord(c);
            let top = img[r0 * from + c0] * (1.0 - fc) + img[r0 * from + c1] * fc;
            let bottom = img[r1 * from + c0] * (1.0 - fc) + img[r1 * from + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    out
}

/// Reads a numeric feature table with a header row. A column named
/// `label` becomes the class labels; every other column is a feature.
pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<Labeled> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let label_col = header.iter().position(|h| h == "label");
    let cols = header.len() - usize::from(label_col.is_some());
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!("{}: row {} column {:?}: {field:?}", path.display(), r + 1, &header[c]))
            })?;
            if Some(c) == label_col {
                labels.push(v as usize);
            } else {
                data.push(v);
            }
        }
    }
    let rows = data.len() / cols.max(1);
    Ok(Labeled {
        x: Dense2D::new(rows, cols, data)?,
        labels,
    })
}
