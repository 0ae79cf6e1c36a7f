//! Synthetic dataset generators, CSV ingestion, splitting and
//! standardization.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmConfig {
    /// Grid coordinates per axis; the mixture centers are the cross
    /// product over two axes.
    pub axis_coords: Vec<f64>,
    /// Isotropic component standard deviation.
    pub sigma: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            axis_coords: vec![-1.5, -0.5, 0.5, 1.5],
            sigma: 0.01,
        }
    }
}

impl GmmConfig {
    pub fn centers(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.axis_coords.len() * self.axis_coords.len());
        for &a in &self.axis_coords {
            for &b in &self.axis_coords {
                out.push([a, b]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Feature indices whose training variance was zero; they map to 0.
    pub zero_variance: Vec<usize>,
}

impl Standardization {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let d = x.cols();
        let mut mean = vec![0.0; d];
        let mut std = vec![0.0; d];
        let mut zero_variance = Vec::new();
        for c in 0..d {
            let mut s = 0.0;
            for r in 0..x.rows() {
                s += x.get(r, c);
            }
            mean[c] = s / n;
            let mut v = 0.0;
            for r in 0..x.rows() {
                let diff = x.get(r, c) - mean[c];
                v += diff * diff;
            }
            std[c] = (v / n).sqrt();
            if std[c] == 0.0 {
                zero_variance.push(c);
            }
        }
        Standardization { mean, std, zero_variance }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let v = if self.std[c] == 0.0 {
                    0.0
                } else {
                    (x.get(r, c) - self.mean[c]) / self.std[c]
                };
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(c, &v)| {
                if self.std[c] == 0.0 {
                    0.0
                } else {
                    (v - self.mean[c]) / self.std[c]
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Matrix,
    pub targets: Option<Vec<f64>>,
    /// Per-feature stats fit on the training split, if standardized.
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: Matrix) -> Self {
        Dataset { x, targets: None, standardization: None }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

/// Sample n points from the grid mixture: component uniform over the
/// centers, isotropic Gaussian noise sigma.
pub fn sample_gmm(cfg: &GmmConfig, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Data("need n >= 1".into()));
    }
    if cfg.sigma <= 0.0 || cfg.axis_coords.is_empty() {
        return Err(Error::Config("gmm needs sigma > 0 and a nonempty grid".into()));
    }
    let centers = cfg.centers();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(n, 2);
    for r in 0..n {
        let center = centers[rng.gen_range(0..centers.len())];
        for c in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            x.set(r, c, center[c] + cfg.sigma * z);
        }
    }
    Ok(Dataset::new(x))
}

/// Rejection-sample n uniform points in the box that keep a minimum
/// Euclidean distance from every center.
pub fn sample_uniform_background(
    bounds: (f64, f64),
    dim: usize,
    n: usize,
    centers: &[[f64; 2]],
    min_dist: f64,
    seed: u64,
) -> Result<Matrix> {
    let (lo, hi) = bounds;
    if hi <= lo {
        return Err(Error::Config("bounds must satisfy lo < hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(n, dim);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let max_attempts = 1000 * n.max(1000);
    while accepted < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Data(format!(
                "background sampling rejection rate too high ({accepted}/{n} after {attempts} draws)"
            )));
        }
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(lo..hi)).collect();
        let ok = centers.iter().all(|c| {
            let mut sq = 0.0;
            for (i, &ci) in c.iter().enumerate().take(dim) {
                let d = p[i] - ci;
                sq += d * d;
            }
            sq.sqrt() >= min_dist
        });
        if ok {
            out.row_mut(accepted).copy_from_slice(&p);
            accepted += 1;
        }
    }
    Ok(out)
}

/// Load a rectangular numeric CSV with a header row. When a target
/// column is named, it is split out of the feature matrix.
pub fn load_csv(path: &Path, target_column: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let target_idx = match target_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("target column '{name}' not found")))?,
        ),
        None => None,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "non-numeric cell at row {}, column '{}': '{}'",
                    i + 1,
                    &headers[j],
                    field
                ))
            })?;
            if Some(j) == target_idx {
                targets.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("csv has no data rows".into()));
    }
    let x = Matrix::from_rows(&rows);
    if !x.is_finite() {
        return Err(Error::Data("csv contains non-finite values".into()));
    }
    Ok(Dataset {
        x,
        targets: target_idx.map(|_| targets),
        standardization: None,
    })
}

/// Write a feature matrix (optionally with a target column) as CSV:
/// header row, full-precision decimal floats, LF line endings.
pub fn save_csv(path: &Path, x: &Matrix, targets: Option<&[f64]>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_path(path)?;
    let mut header: Vec<String> = (0..x.cols()).map(|c| format!("x{c}")).collect();
    if targets.is_some() {
        header.push("target".into());
    }
    writer.write_record(&header)?;
    for r in 0..x.rows() {
        let mut record: Vec<String> = x.row(r).iter().map(|v| format!("{v}")).collect();
        if let Some(t) = targets {
            record.push(format!("{}", t[r]));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Seeded shuffle split; standardization is fit on the train split only
/// and applied to both sides.
pub fn split_standardize(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must be in (0,1)".into()));
    }
    let n = ds.len();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Data("split leaves an empty train or test set".into()));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let (train_idx, test_idx) = idx.split_at(n_train);

    let x_train_raw = ds.x.select_rows(train_idx);
    let x_test_raw = ds.x.select_rows(test_idx);
    let stats = Standardization::fit(&x_train_raw);
    for &c in &stats.zero_variance {
        eprintln!("warning: feature {c} has zero variance on the train split; standardized to 0");
    }
    let pick = |t: Option<&Vec<f64>>, which: &[usize]| {
        t.map(|v| which.iter().map(|&i| v[i]).collect::<Vec<f64>>())
    };
    let train = Dataset {
        x: stats.apply(&x_train_raw),
        targets: pick(ds.targets.as_ref(), train_idx),
        standardization: Some(stats.clone()),
    };
    let test = Dataset {
        x: stats.apply(&x_test_raw),
        targets: pick(ds.targets.as_ref(), test_idx),
        standardization: Some(stats),
    };
    Ok((train, test))
}
