//! Trustworthiness and continuity of an embedding.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighbors::{by_distance_then_index, for_each_distance_row, smallest_k};
use crate::scalar::Scalar;
use crate::tensor::Dense2D;

/// Neighborhood sizes reported by default.
pub const DEFAULT_KS: [usize; 3] = [20, 30, 40];

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || 2 * k >= n {
        return Err(Error::Argument(format!("k = {k} needs 0 < k < n/2 with n = {n}")));
    }
    Ok(())
}

/// Rank (1-based) of every row in each row's distance ordering, ties by index.
fn rank_rows<T: Scalar>(x: &Dense2D<T>, mut f: impl FnMut(usize, &[usize])) {
    let n = x.rows();
    let mut order: Vec<(T, usize)> = Vec::with_capacity(n);
    let mut rank = vec![0usize; n];
    for_each_distance_row(x, |i, d| {
        order.clear();
        order.extend(d.iter().enumerate().filter(|&(j, _)| j != i).map(|(j, &v)| (v, j)));
        order.sort_unstable_by(by_distance_then_index);
        rank[i] = 0;
        for (r, &(_, j)) in order.iter().enumerate() {
            rank[j] = r + 1;
        }
        f(i, &rank);
    });
}

/// Penalty sums `sum_i sum_{j in U_k(i)} (r(i, j) - k)` for every `k`, where
/// `U_k(i)` holds the low-dimensional neighbors of `i` that are not among its
/// `k` high-dimensional neighbors and `r` ranks by high-dimensional distance.
fn intrusion_sums<T: Scalar>(high: &Dense2D<T>, low: &Dense2D<T>, ks: &[usize]) -> Vec<f64> {
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let low_nn: Vec<Vec<usize>> = {
        let mut v = Vec::with_capacity(low.rows());
        for_each_distance_row(low, |i, d| v.push(smallest_k(d, i, kmax)));
        v
    };
    let mut sums = vec![0.0; ks.len()];
    rank_rows(high, |i, rank| {
        for (s, &k) in sums.iter_mut().zip(ks) {
            for &j in &low_nn[i][..k] {
                if rank[j] > k {
                    *s += (rank[j] - k) as f64;
                }
            }
        }
    });
    sums
}

fn normalize(n: usize, k: usize, sum: f64) -> f64 {
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * sum
}

fn check_pair<T: Scalar>(x: &Dense2D<T>, y: &Dense2D<T>, ks: &[usize]) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::dim("quality metric", x.rows(), y.rows()));
    }
    ks.iter().try_for_each(|&k| check_k(x.rows(), k))
}

/// How few false neighbors the embedding `y` introduces relative to `x`.
pub fn trustworthiness<T: Scalar>(x: &Dense2D<T>, y: &Dense2D<T>, k: usize) -> Result<f64> {
    check_pair(x, y, &[k])?;
    Ok(normalize(x.rows(), k, intrusion_sums(x, y, &[k])[0]))
}

/// How few true neighbors of `x` the embedding `y` loses.
pub fn continuity<T: Scalar>(x: &Dense2D<T>, y: &Dense2D<T>, k: usize) -> Result<f64> {
    trustworthiness(y, x, k)
}

/// `(k, T(k), C(k))` for every requested `k`, sharing the rank computation.
pub fn quality<T: Scalar>(
    x: &Dense2D<T>,
    y: &Dense2D<T>,
    ks: &[usize],
) -> Result<Vec<(usize, f64, f64)>> {
    check_pair(x, y, ks)?;
    let n = x.rows();
    let t = intrusion_sums(x, y, ks);
    let c = intrusion_sums(y, x, ks);
    Ok(ks
        .iter()
        .zip(t.iter().zip(&c))
        .map(|(&k, (&ts, &cs))| (k, normalize(n, k, ts), normalize(n, k, cs)))
        .collect())
}

/// Quality of one method on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub method: String,
    pub dataset: String,
    #[serde(rename = "T")]
    pub trustworthiness: BTreeMap<usize, f64>,
    #[serde(rename = "C")]
    pub continuity: BTreeMap<usize, f64>,
    pub update_seconds: Option<f64>,
}

/// One flattened report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub dataset: String,
    pub k: usize,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub seconds: Option<f64>,
}

pub const REPORT_COLUMNS: [&str; 6] = ["method", "dataset", "k", "T", "C", "seconds"];

impl MetricReport {
    pub fn evaluate<T: Scalar>(
        method: &str,
        dataset: &str,
        x: &Dense2D<T>,
        y: &Dense2D<T>,
        ks: &[usize],
        update_seconds: Option<f64>,
    ) -> Result<Self> {
        let mut report = Self {
            method: method.into(),
            dataset: dataset.into(),
            trustworthiness: BTreeMap::new(),
            continuity: BTreeMap::new(),
            update_seconds,
        };
        for (k, t, c) in quality(x, y, ks)? {
            report.trustworthiness.insert(k, t);
            report.continuity.insert(k, c);
        }
        Ok(report)
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.trustworthiness
            .iter()
            .map(|(&k, &t)| ReportRow {
                method: self.method.clone(),
                dataset: self.dataset.clone(),
                k,
                t,
                c: self.continuity.get(&k).copied().unwrap_or(f64::NAN),
                seconds: self.update_seconds,
            })
            .collect()
    }
}

/// Writes reports as CSV with the columns in [`REPORT_COLUMNS`].
pub fn write_csv<W: Write>(out: W, reports: &[MetricReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for row in reports.iter().flat_map(MetricReport::rows) {
        w.write_record([
            row.method,
            row.dataset,
            row.k.to_string(),
            row.t.to_string(),
            row.c.to_string(),
            row.seconds.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes reports as a JSON array of flattened rows.
pub fn write_json<W: Write>(out: W, reports: &[MetricReport]) -> Result<()> {
    let rows: Vec<ReportRow> = reports.iter().flat_map(MetricReport::rows).collect();
    serde_json::to_writer_pretty(out, &rows)?;
    Ok(())
}

/// Median wall time of `repeats` calls to `f`, in seconds.
pub fn median_seconds<R>(repeats: usize, mut f: impl FnMut() -> Result<R>) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::Argument("repeats must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    Ok(if times.len() % 2 == 1 {
        times[mid]
    } else {
        0.5 * (times[mid - 1] + times[mid])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_embedding_is_perfect() {
        let x = Dense2D::<f64>::from_fn(20, 2, |i, j| ((i * 13 + j * 7) % 17) as f64 + 0.1 * i as f64);
        assert_eq!(trustworthiness(&x, &x, 5).unwrap(), 1.0);
        assert_eq!(continuity(&x, &x, 5).unwrap(), 1.0);
    }

    #[test]
    fn rejects_large_k() {
        let x = Dense2D::<f64>::zeros(10, 2);
        assert!(matches!(trustworthiness(&x, &x, 5), Err(Error::Argument(_))));
        assert!(trustworthiness(&x, &x, 4).is_ok());
    }

    #[test]
    fn csv_header() {
        let x = Dense2D::<f64>::from_fn(12, 2, |i, j| (i * (j + 1)) as f64);
        let r = MetricReport::evaluate("pca", "toy", &x, &x, &[2, 3], None).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "method,dataset,k,T,C,seconds");
        assert_eq!(text.lines().count(), 3);
    }
}
