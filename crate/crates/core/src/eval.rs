//! Evaluation protocols: rank AUC, one-class scoring, noise sweeps,
//! local-correlation statistics and 2-D field exports.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::QuadModel;
use crate::net::Network;

/// Result of one evaluation protocol, serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub metrics: BTreeMap<String, f64>,
    pub seed: u64,
    pub counts: BTreeMap<String, usize>,
    pub config_hash: u64,
}

impl EvalReport {
    fn new(protocol: &str, seed: u64) -> Self {
        EvalReport {
            protocol: protocol.to_string(),
            metrics: BTreeMap::new(),
            seed,
            counts: BTreeMap::new(),
            config_hash: 0,
        }
    }

    fn finish(mut self) -> Self {
        let mut hasher = DefaultHasher::new();
        self.protocol.hash(&mut hasher);
        self.seed.hash(&mut hasher);
        for (k, v) in &self.counts {
            k.hash(&mut hasher);
            v.hash(&mut hasher);
        }
        for k in self.metrics.keys() {
            k.hash(&mut hasher);
        }
        self.config_hash = hasher.finish();
        self
    }
}

/// Which unary score a protocol reads off the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    /// The classifier output c(x).
    C,
    /// The comparator on a replicated point, h(x, x).
    HUnary,
}

fn unary_scores(model: &QuadModel, score: Score, x: &Matrix) -> Result<Vec<f64>> {
    let out = match score {
        Score::C => model.c.apply(x)?,
        Score::HUnary => model.h.apply(&x.hcat(x))?,
    };
    Ok(out.data().to_vec())
}

/// Mann-Whitney rank AUC: P(pos > neg) + half the tie mass. Average
/// ranks make identical score multisets come out at exactly 0.5.
pub fn auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::Data("auc needs nonempty score lists".into()));
    }
    let all: Vec<f64> = pos_scores.iter().chain(neg_scores).copied().collect();
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite score in auc".into()));
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&a, &b| all[a].partial_cmp(&all[b]).unwrap());

    // Average ranks over tie groups, 1-based.
    let mut ranks = vec![0.0; all.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && all[order[j + 1]] == all[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }

    let np = pos_scores.len() as f64;
    let nn = neg_scores.len() as f64;
    let rank_sum: f64 = ranks[..pos_scores.len()].iter().sum();
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC of a unary score separating held-out positives from negatives.
/// Both sets must carry the same (training) standardization statistics.
pub fn one_class_eval(
    model: &QuadModel,
    score: Score,
    pos_test: &Dataset,
    neg_test: &Dataset,
) -> Result<EvalReport> {
    if pos_test.standardization != neg_test.standardization {
        return Err(Error::Config(
            "one_class_eval: positive and negative sets standardized differently".into(),
        ));
    }
    let pos = unary_scores(model, score, &pos_test.x)?;
    let neg = unary_scores(model, score, &neg_test.x)?;
    let value = auc(&pos, &neg)?;
    let mut report = EvalReport::new("one_class", 0);
    report.counts.insert("pos".into(), pos.len());
    report.counts.insert("neg".into(), neg.len());
    report.metrics.insert("auc".into(), value);
    Ok(report.finish())
}

/// One row of a noise sweep: positives vs noisy copies at one sigma.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseRow {
    pub sigma: f64,
    pub auc_c: f64,
    pub auc_h: f64,
}

/// For each sigma, negatives are the test points plus isotropic
/// Gaussian noise; reports AUC of both unary scores. At sigma 0 the
/// negatives are bitwise copies, so both AUCs are exactly 0.5.
pub fn noise_sweep(
    model: &QuadModel,
    test_points: &Matrix,
    sigmas: &[f64],
    seed: u64,
) -> Result<(EvalReport, Vec<NoiseRow>)> {
    if sigmas.is_empty() {
        return Err(Error::Config("noise_sweep: empty sigma list".into()));
    }
    if sigmas.windows(2).any(|w| w[0] > w[1]) || sigmas.iter().any(|&s| s < 0.0) {
        return Err(Error::Config("noise_sweep: sigmas must be sorted and >= 0".into()));
    }
    let pos_c = unary_scores(model, Score::C, test_points)?;
    let pos_h = unary_scores(model, Score::HUnary, test_points)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sigmas.len());
    let mut report = EvalReport::new("noise_sweep", seed);
    for (si, &sigma) in sigmas.iter().enumerate() {
        let noisy = if sigma == 0.0 {
            test_points.clone()
        } else {
            let mut m = test_points.clone();
            for v in m.data_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * z;
            }
            m
        };
        let neg_c = unary_scores(model, Score::C, &noisy)?;
        let neg_h = unary_scores(model, Score::HUnary, &noisy)?;
        let row = NoiseRow {
            sigma,
            auc_c: auc(&pos_c, &neg_c)?,
            auc_h: auc(&pos_h, &neg_h)?,
        };
        report.metrics.insert(format!("auc_c_{si}"), row.auc_c);
        report.metrics.insert(format!("auc_h_{si}"), row.auc_h);
        rows.push(row);
    }
    report.counts.insert("points".into(), test_points.rows());
    report.counts.insert("sigmas".into(), sigmas.len());
    Ok((report.finish(), rows))
}

/// Render noise sweep rows as CSV (sigma, auc_c, auc_h).
pub fn noise_rows_csv(rows: &[NoiseRow]) -> String {
    let mut s = String::from("sigma,auc_c,auc_h\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.sigma, r.auc_c, r.auc_h));
    }
    s
}

/// Score source for the correlation protocols.
pub enum CorrelationScore<'a> {
    /// Precomputed unary scores aligned with the points.
    Unary(&'a [f64]),
    /// Comparator network scoring ordered (point, neighbor) pairs.
    Comparator(&'a Network),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Nearest-neighbor differences of targets vs scores.
    Local,
    /// Raw targets vs raw unary scores.
    Standard,
}

/// Index of the Euclidean nearest neighbor of each row, excluding the
/// row itself; distance ties resolve to the smallest index.
pub fn nearest_neighbors(points: &Matrix) -> Result<Vec<usize>> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::Data("nearest_neighbors needs at least 2 points".into()));
    }
    let mut nn = vec![0usize; n];
    for i in 0..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        nn[i] = best;
    }
    Ok(nn)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Pearson correlation between target structure and score structure,
/// with a two-sided Monte Carlo permutation p-value.
///
/// Local mode pairs each point with its nearest neighbor and correlates
/// target differences against either score differences (unary scores)
/// or the comparator on the ordered (point, neighbor) pair. Standard
/// mode correlates raw targets against raw unary scores. The p-value is
/// `(1 + #{|r_perm| >= |r_obs|}) / (B + 1)`.
pub fn local_correlation(
    score: CorrelationScore<'_>,
    points: &Matrix,
    targets: &[f64],
    mode: CorrelationMode,
    permutations: usize,
    seed: u64,
) -> Result<EvalReport> {
    let n = points.rows();
    if n < 3 {
        return Err(Error::Data("local_correlation needs at least 3 points".into()));
    }
    if targets.len() != n {
        return Err(Error::Data("targets not aligned with points".into()));
    }
    if permutations < 1000 {
        return Err(Error::Config("local_correlation needs B >= 1000".into()));
    }

    let (a, b): (Vec<f64>, Vec<f64>) = match mode {
        CorrelationMode::Standard => {
            let scores = match score {
                CorrelationScore::Unary(s) => s.to_vec(),
                CorrelationScore::Comparator(h) => {
                    h.apply(&points.hcat(points))?.data().to_vec()
                }
            };
            (targets.to_vec(), scores)
        }
        CorrelationMode::Local => {
            let nn = nearest_neighbors(points)?;
            let d_target: Vec<f64> =
                (0..n).map(|i| targets[i] - targets[nn[i]]).collect();
            let b = match score {
                CorrelationScore::Unary(s) => {
                    if s.len() != n {
                        return Err(Error::Data("scores not aligned with points".into()));
                    }
                    (0..n).map(|i| s[i] - s[nn[i]]).collect()
                }
                CorrelationScore::Comparator(h) => {
                    let neighbors = points.select_rows(&nn);
                    h.apply(&points.hcat(&neighbors))?.data().to_vec()
                }
            };
            (d_target, b)
        }
    };

    let r_obs = pearson(&a, &b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    let mut perm = a.clone();
    for _ in 0..permutations {
        for i in (1..perm.len()).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        if pearson(&perm, &b).abs() >= r_obs.abs() {
            exceed += 1;
        }
    }
    let p = (1 + exceed) as f64 / (permutations + 1) as f64;

    let mut report = EvalReport::new(
        match mode {
            CorrelationMode::Local => "local_correlation",
            CorrelationMode::Standard => "standard_correlation",
        },
        seed,
    );
    report.counts.insert("points".into(), n);
    report.counts.insert("permutations".into(), permutations);
    report.metrics.insert("r".into(), r_obs);
    report.metrics.insert("p".into(), p);
    Ok(report.finish())
}

/// Axis-aligned evaluation rectangle for 2-D field exports.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bounds2D {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

const COMPASS: [(f64, f64); 8] = [
    (1.0, 0.0),
    (std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (0.0, 1.0),
    (-std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2),
    (-1.0, 0.0),
    (-std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
    (0.0, -1.0),
    (std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2),
];

/// Sample c on a regular grid (heatmap CSV: x1,x2,c) and, at each grid
/// point, the compass direction of steepest comparator-judged increase
/// (quiver CSV: x1,x2,u1,u2). Probe step is the smaller grid cell size.
pub fn grid_field_export(
    model: &QuadModel,
    bounds: Bounds2D,
    resolution: usize,
) -> Result<(String, String)> {
    if model.input_dim != 2 {
        return Err(Error::Config("grid_field_export requires a 2-D model".into()));
    }
    if resolution < 16 {
        return Err(Error::Config("grid_field_export requires resolution >= 16".into()));
    }
    if bounds.x1_max <= bounds.x1_min || bounds.x2_max <= bounds.x2_min {
        return Err(Error::Config("grid_field_export: degenerate bounds".into()));
    }
    let step1 = (bounds.x1_max - bounds.x1_min) / (resolution - 1) as f64;
    let step2 = (bounds.x2_max - bounds.x2_min) / (resolution - 1) as f64;
    let delta = step1.min(step2);

    let mut grid = Matrix::zeros(resolution * resolution, 2);
    for i in 0..resolution {
        for j in 0..resolution {
            let r = grid.row_mut(i * resolution + j);
            r[0] = bounds.x1_min + step1 * i as f64;
            r[1] = bounds.x2_min + step2 * j as f64;
        }
    }

    let c_vals = model.c.apply(&grid)?;
    let mut heatmap = String::from("x1,x2,c\n");
    for i in 0..grid.rows() {
        let r = grid.row(i);
        heatmap.push_str(&format!("{},{},{}\n", r[0], r[1], c_vals.get(i, 0)));
    }

    // One comparator batch per direction: h(x + delta d, x) over the grid.
    let mut best_val = vec![f64::NEG_INFINITY; grid.rows()];
    let mut best_dir = vec![(0.0, 0.0); grid.rows()];
    for &(u1, u2) in &COMPASS {
        let mut probes = grid.clone();
        for i in 0..probes.rows() {
            let r = probes.row_mut(i);
            r[0] += delta * u1;
            r[1] += delta * u2;
        }
        let vals = model.h.apply(&probes.hcat(&grid))?;
        for i in 0..grid.rows() {
            if vals.get(i, 0) > best_val[i] {
                best_val[i] = vals.get(i, 0);
                best_dir[i] = (u1, u2);
            }
        }
    }
    let mut quiver = String::from("x1,x2,u1,u2\n");
    for i in 0..grid.rows() {
        let r = grid.row(i);
        let (u1, u2) = best_dir[i];
        quiver.push_str(&format!("{},{},{},{}\n", r[0], r[1], u1, u2));
    }
    Ok((heatmap, quiver))
}
