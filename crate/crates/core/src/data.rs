//! Synthetic generators, CSV ingestion, fold plans and k-means seeding.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_SYNTHETIC_SIZE: usize = 1000;

/// Per-column affine map: normalized = (raw − mean) / std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    /// Column means and sample standard deviations (divisor N − 1).
    pub fn fit(x: &Matrix) -> Result<Self> {
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::TooFewRows { needed: 2, have: n });
        }
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                let r = x[(i, j)] - mean[j];
                var[j] += r * r;
            }
        }
        let mut std = Vec::with_capacity(d);
        for (j, v) in var.into_iter().enumerate() {
            let s = (v / (n - 1) as f64).sqrt();
            if !(s > 0.0) {
                return Err(Error::ConstantColumn(j));
            }
            std.push(s);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        self.map_rows(x, |v, m, s| (v - m) / s)
    }

    pub fn invert(&self, x: &Matrix) -> Matrix {
        self.map_rows(x, |v, m, s| v * s + m)
    }

    fn map_rows(&self, x: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Matrix {
        let mut out = x.clone();
        for i in 0..x.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = f(*v, self.mean[j], self.std[j]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub normalization: Normalization,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: y.len(),
            });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("targets"));
        }
        let d = x.cols();
        Ok(Self {
            name: name.into(),
            x,
            y,
            normalization: Normalization::identity(d),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Standardizes the inputs (targets stay raw), composing with any
    /// normalization already applied.
    pub fn normalized(&self) -> Result<Self> {
        let norm = Normalization::fit(&self.x)?;
        let x = norm.apply(&self.x);
        let d = self.dim();
        let composed = Normalization {
            mean: (0..d)
                .map(|j| self.normalization.mean[j] + self.normalization.std[j] * norm.mean[j])
                .collect(),
            std: (0..d)
                .map(|j| self.normalization.std[j] * norm.std[j])
                .collect(),
        };
        Ok(Self {
            name: self.name.clone(),
            x,
            y: self.y.clone(),
            normalization: composed,
        })
    }

    /// Inputs in their original units.
    pub fn raw_inputs(&self) -> Matrix {
        denormalize(&self.x, &self.normalization)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            normalization: self.normalization.clone(),
        }
    }
}

pub fn denormalize(x: &Matrix, norm: &Normalization) -> Matrix {
    norm.invert(x)
}

/// Noise-free latent function of synthetic set `id` at input `x`
/// (length 1 for ids 1–3, length 2 for ids 4–5).
pub fn synthetic_latent(id: u32, x: &[f64]) -> Result<f64> {
    Ok(match id {
        1 => {
            let x = x[0];
            0.4 * ((3.0 * x).sin() * (2.0 * x).cos()
                + (x / 2.0).sin()
                + (2.0 * x).cos()
                + (-x * x).exp()
                + x.abs())
        }
        2 => {
            let x = x[0];
            let x2 = x * x;
            x2.sin() + x2.cos() + (3.0 * x).sin() + (5.0 * x).cos() + x.abs().sqrt() / 2.0
        }
        3 => (2.0 * PI * x[0]).cos(),
        4 => {
            let (a, b) = (x[0], x[1]);
            4.0 * a.sin() + 2.0 * (2.0 * a).sin() + 3.0 * (3.0 * b).cos() + 4.0 * (5.0 * b).sin()
                + (-(a + b).powi(2)).exp()
        }
        5 => {
            let (a, b) = (x[0], x[1]);
            a / 2.0 + (2.0 * a).sin() + b / 2.0 + (5.0 * b).cos() + (-(a + b).powi(2)).exp() / 2.0
        }
        other => return Err(Error::InvalidSyntheticId(other)),
    })
}

/// Observation for latent value `f` at input `x` with standard-normal draw
/// `z`, following each set's noise law.
pub fn synthetic_observation(id: u32, x: &[f64], f: f64, z: f64) -> Result<f64> {
    Ok(match id {
        1 | 2 => f + 0.3f64.sqrt() * z * (2.0 * PI * f).sin(),
        3 => f + z * x[0].powi(3),
        4 | 5 => f + 0.2f64.sqrt() * z,
        other => return Err(Error::InvalidSyntheticId(other)),
    })
}

/// One of the five synthetic regression sets, with raw (unnormalized) inputs.
pub fn gen_synthetic(id: u32, n: usize, seed: u64) -> Result<Dataset> {
    if !(1..=5).contains(&id) {
        return Err(Error::InvalidSyntheticId(id));
    }
    if n == 0 {
        return Err(Error::TooFewRows { needed: 1, have: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = match id {
        1 | 2 => uniform_column(n, -4.0, 4.0, &mut rng),
        3 => uniform_column(n, 0.0, 2.0, &mut rng),
        4 => make_blobs(n, 3, 0.4, rng.gen())?.points,
        _ => make_moons(n, 0.05, rng.gen())?,
    };
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let f = synthetic_latent(id, x.row(i))?;
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        y.push(synthetic_observation(id, x.row(i), f, z)?);
    }
    Dataset::new(format!("synthetic-{id}"), x, y)
}

fn uniform_column(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let u = Uniform::new(lo, hi);
    Matrix::from_raw(n, 1, (0..n).map(|_| u.sample(rng)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Blobs {
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub centers: Matrix,
}

/// Isotropic Gaussian clusters around centers drawn uniformly from
/// [−10, 10]². Center c gets ⌊n/centers⌋ points, plus one for the first
/// n mod centers centers; rows are shuffled.
pub fn make_blobs(n: usize, centers: usize, std: f64, seed: u64) -> Result<Blobs> {
    if centers == 0 || n < centers {
        return Err(Error::TooFewRows {
            needed: centers.max(1),
            have: n,
        });
    }
    if !(std >= 0.0) {
        return Err(Error::InvalidConfig(format!("cluster std must be ≥ 0, got {std}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let box_ = Uniform::new_inclusive(-10.0, 10.0);
    let ctr: Vec<f64> = (0..centers * 2).map(|_| box_.sample(&mut rng)).collect();
    let mut labels = Vec::with_capacity(n);
    for c in 0..centers {
        let count = n / centers + usize::from(c < n % centers);
        labels.extend(std::iter::repeat(c).take(count));
    }
    labels.shuffle(&mut rng);
    let mut pts = Vec::with_capacity(n * 2);
    for &c in &labels {
        for k in 0..2 {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            pts.push(ctr[2 * c + k] + std * z);
        }
    }
    Ok(Blobs {
        points: Matrix::from_raw(n, 2, pts),
        labels,
        centers: Matrix::from_raw(centers, 2, ctr),
    })
}

/// Two interleaving half circles. The upper arc holds ⌊n/2⌋ points at
/// t = linspace(0, π), the lower arc the rest; isotropic Gaussian noise
/// with standard deviation `noise` is added and rows are shuffled.
pub fn make_moons(n: usize, noise: f64, seed: u64) -> Result<Matrix> {
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, have: n });
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise must be ≥ 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_upper = n / 2;
    let n_lower = n - n_upper;
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    for t in linspace(0.0, PI, n_upper) {
        pts.push([t.cos(), t.sin()]);
    }
    for t in linspace(0.0, PI, n_lower) {
        pts.push([1.0 - t.cos(), 0.5 - t.sin()]);
    }
    pts.shuffle(&mut rng);
    if noise > 0.0 {
        let normal = Normal::new(0.0, noise).expect("finite noise");
        for p in &mut pts {
            p[0] += normal.sample(&mut rng);
            p[1] += normal.sample(&mut rng);
        }
    }
    Ok(Matrix::from_raw(n, 2, pts.into_iter().flatten().collect()))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// One entry of a dataset manifest file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub target_column: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

/// Reads a manifest holding either one entry or a list of entries. Relative
/// paths are resolved against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(ManifestEntry),
        Many(Vec<ManifestEntry>),
    }
    let text = std::fs::read_to_string(path)?;
    let entries = match serde_json::from_str(&text)? {
        OneOrMany::One(e) => vec![e],
        OneOrMany::Many(v) => v,
    };
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(entries
        .into_iter()
        .map(|mut e| {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            e
        })
        .collect())
}

pub fn load_manifest_dataset(manifest: &Path, key: &str) -> Result<Dataset> {
    let entry = read_manifest(manifest)?
        .into_iter()
        .find(|e| e.name == key)
        .ok_or_else(|| Error::UnknownDataset {
            key: key.to_string(),
            path: manifest.to_path_buf(),
        })?;
    let mut ds = load_csv_normalize(&entry.path, &entry.target_column, entry.delimiter)?;
    ds.name = entry.name;
    Ok(ds)
}

/// Reads a numeric CSV with a header row. Every column except
/// `target_column` becomes an input; inputs are standardized with sample
/// statistics and the target is left as-is.
pub fn load_csv_normalize(path: &Path, target_column: &str, delimiter: char) -> Result<Dataset> {
    if !delimiter.is_ascii() {
        return Err(Error::InvalidConfig(format!("delimiter {delimiter:?} is not ASCII")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let target = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    let width = headers.len();
    let mut xs = Vec::new();
    let mut y = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                row,
                column: record.len().min(width),
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row,
                column: c,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    row,
                    column: c,
                    value: cell.to_string(),
                });
            }
            if c == target {
                y.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = y.len();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, Matrix::from_raw(n, width - 1, xs), y)?.normalized()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    pub folds: Vec<Fold>,
}

/// `k` independently shuffled train/validation splits with
/// ⌊train_frac·n⌋ training indices each. Indices within each part are sorted.
pub fn kfold_split(n: usize, k: usize, train_frac: f64, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidConfig("fold count must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewRows { needed: k, have: n });
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    // The epsilon keeps 0.7·10 from flooring to 6.
    let n_train = ((train_frac * n as f64) + 1e-9).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_frac} leaves an empty split for n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let folds = (0..k)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut train = idx[..n_train].to_vec();
            let mut val = idx[n_train..].to_vec();
            train.sort_unstable();
            val.sort_unstable();
            Fold { train, val }
        })
        .collect();
    Ok(FoldPlan { seed, k, folds })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub centers: Matrix,
    pub assignment: Vec<usize>,
    /// Sum of squared distances to the assigned center, after seeding and
    /// after each Lloyd iteration.
    pub objective: Vec<f64>,
}

fn sq_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_norm_diff(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or `max_iter` is reached. Empty clusters keep their center.
pub fn kmeans_init(x: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    let (n, d) = x.shape();
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut dist: Vec<f64> = (0..n)
        .map(|i| sq_norm_diff(x.row(i), x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in dist.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            while dist[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        chosen.push(next);
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_norm_diff(x.row(i), x.row(next)));
        }
    }
    let mut centers = x.select_rows(&chosen);

    let assign = |centers: &Matrix| -> (Vec<usize>, f64) {
        let mut obj = 0.0;
        let a = (0..n)
            .map(|i| {
                let (c, dd) = nearest(x.row(i), centers);
                obj += dd;
                c
            })
            .collect();
        (a, obj)
    };
    let (mut assignment, obj) = assign(&centers);
    let mut objective = vec![obj];
    for _ in 0..max_iter {
        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, s) in centers.row_mut(c).iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = s / counts[c] as f64;
                }
            }
        }
        let (next, obj) = assign(&centers);
        objective.push(obj);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok(KMeans {
        centers,
        assignment,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn latent_values_at_origin() {
        assert!((synthetic_latent(1, &[0.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!((synthetic_latent(3, &[0.0]).unwrap() - 1.0).abs() < 1e-15);
        for z in [-3.0, 0.0, 2.5] {
            assert_eq!(synthetic_observation(3, &[0.0], 1.0, z).unwrap(), 1.0);
        }
        assert!(matches!(synthetic_latent(6, &[0.0]), Err(Error::InvalidSyntheticId(6))));
    }

    #[test]
    fn generator_shapes_and_determinism() {
        for id in 1..=5 {
            let a = gen_synthetic(id, 37, 4).unwrap();
            assert_eq!(a.len(), 37);
            assert_eq!(a.dim(), if id <= 3 { 1 } else { 2 });
            assert!(a.x.as_slice().iter().chain(&a.y).all(|v| v.is_finite()));
            assert_eq!(a, gen_synthetic(id, 37, 4).unwrap());
            assert_ne!(a.y, gen_synthetic(id, 37, 5).unwrap().y);
        }
        assert!(gen_synthetic(0, 10, 0).is_err());
        assert!(gen_synthetic(1, 0, 0).is_err());
    }

    #[test]
    fn input_ranges() {
        let d1 = gen_synthetic(1, 500, 1).unwrap();
        assert!(d1.x.as_slice().iter().all(|v| (-4.0..4.0).contains(v)));
        let d3 = gen_synthetic(3, 500, 1).unwrap();
        assert!(d3.x.as_slice().iter().all(|v| (0.0..2.0).contains(v)));
    }

    #[test]
    fn noise_laws_match_variances() {
        // Synthetic 4: residual y − f has variance 0.2.
        let d = gen_synthetic(4, 40_000, 9).unwrap();
        let r: Vec<f64> = (0..d.len())
            .map(|i| d.y[i] - synthetic_latent(4, d.x.row(i)).unwrap())
            .collect();
        let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        assert!((var - 0.2).abs() < 0.01, "{var}");

        // Synthetic 1: residual / sin(2πf) has variance 0.3.
        let d = gen_synthetic(1, 40_000, 9).unwrap();
        let mut acc = (0.0, 0usize);
        for i in 0..d.len() {
            let f = synthetic_latent(1, d.x.row(i)).unwrap();
            let s = (2.0 * PI * f).sin();
            if s.abs() > 0.5 {
                let e = (d.y[i] - f) / s;
                acc = (acc.0 + e * e, acc.1 + 1);
            }
        }
        let var = acc.0 / acc.1 as f64;
        assert!((var - 0.3).abs() < 0.015, "{var}");
    }

    #[test]
    fn blobs_degenerate_and_balanced() {
        let b = make_blobs(9, 3, 0.0, 2).unwrap();
        for (i, &c) in b.labels.iter().enumerate() {
            assert_eq!(b.points.row(i), b.centers.row(c));
        }
        let three = make_blobs(3, 3, 0.4, 2).unwrap();
        let mut labels = three.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2]);
        let b = make_blobs(10, 3, 0.4, 2).unwrap();
        let counts: Vec<usize> = (0..3).map(|c| b.labels.iter().filter(|&&l| l == c).count()).collect();
        assert_eq!(counts, vec![4, 3, 3]);
        assert!(b.centers.as_slice().iter().all(|v| (-10.0..=10.0).contains(v)));
        assert!(make_blobs(2, 3, 0.4, 0).is_err());
    }

    #[test]
    fn blobs_spread() {
        let b = make_blobs(100_000, 3, 0.4, 3).unwrap();
        for k in 0..2 {
            let mut acc = 0.0;
            for (i, &c) in b.labels.iter().enumerate() {
                let r = b.points[(i, k)] - b.centers[(c, k)];
                acc += r * r;
            }
            let std = (acc / b.labels.len() as f64).sqrt();
            assert!((std - 0.4).abs() < 0.01, "{std}");
        }
    }

    /// Distance from `p` to the nearest point of either moon arc.
    fn on_arc(p: &[f64]) -> f64 {
        // Upper arc: unit half circle at the origin, angles in [0, π].
        // Lower arc: the same reflected, centered at (1, 0.5).
        let half_circle = |dx: f64, dy: f64| {
            if dy >= 0.0 {
                ((dx * dx + dy * dy).sqrt() - 1.0).abs()
            } else {
                let e1 = ((dx - 1.0).powi(2) + dy * dy).sqrt();
                let e2 = ((dx + 1.0).powi(2) + dy * dy).sqrt();
                e1.min(e2)
            }
        };
        half_circle(p[0], p[1]).min(half_circle(1.0 - p[0], 0.5 - p[1]))
    }

    #[test]
    fn moons_geometry() {
        let m = make_moons(200, 0.0, 4).unwrap();
        for i in 0..200 {
            assert!(on_arc(m.row(i)) < 1e-12, "{:?}", m.row(i));
        }
        let mut four: Vec<Vec<f64>> = (0..4).map(|i| make_moons(4, 0.0, 1).unwrap().row(i).to_vec()).collect();
        four.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [[-1.0, 0.0], [0.0, 0.5], [1.0, 0.0], [2.0, 0.5]];
        for (p, e) in four.iter().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12, "{p:?}");
        }

        let noisy = make_moons(100_000, 0.05, 5).unwrap();
        let close = (0..noisy.rows()).filter(|&i| on_arc(noisy.row(i)) <= 0.15).count();
        assert!(close as f64 >= 0.99 * noisy.rows() as f64);
        assert!(make_moons(1, 0.0, 0).is_err());
    }

    fn write_csv(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_three_point_standardization() {
        let f = write_csv("a,t\n1,10\n2,20\n3,30\n");
        let d = load_csv_normalize(f.path(), "t", ',').unwrap();
        assert_eq!(d.x.as_slice(), &[-1.0, 0.0, 1.0]);
        assert_eq!(d.y, vec![10.0, 20.0, 30.0]);
        assert_eq!(d.normalization.mean, vec![2.0]);
        assert_eq!(d.normalization.std, vec![1.0]);
    }

    #[test]
    fn csv_errors() {
        let f = write_csv("a,b,t\n1,5,0\n2,5,1\n");
        assert!(matches!(load_csv_normalize(f.path(), "t", ','), Err(Error::ConstantColumn(1))));
        assert!(matches!(load_csv_normalize(f.path(), "z", ','), Err(Error::MissingColumn(_))));
        let f = write_csv("a,t\n1,0\nx,1\n");
        assert!(matches!(
            load_csv_normalize(f.path(), "t", ','),
            Err(Error::NonNumericCell { row: 2, column: 0, .. })
        ));
        let f = write_csv("a;t\n1;0\n2;1\n4;1\n");
        assert_eq!(load_csv_normalize(f.path(), "t", ';').unwrap().len(), 3);
    }

    #[test]
    fn csv_statistics_and_roundtrip() {
        let mut text = String::from("u,v,target\n");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut raw = Vec::new();
        for _ in 0..50 {
            let (u, v): (f64, f64) = (rng.gen_range(-5.0..20.0), rng.gen_range(100.0..300.0));
            raw.extend([u, v]);
            text.push_str(&format!("{u},{v},{}\n", u - v));
        }
        let f = write_csv(&text);
        let d = load_csv_normalize(f.path(), "target", ',').unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..50).map(|i| d.x[(i, j)]).collect();
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 49.0;
            assert!(mean.abs() < 1e-10 && (var.sqrt() - 1.0).abs() < 1e-10);
        }
        let back = d.raw_inputs();
        for (a, b) in back.as_slice().iter().zip(&raw) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn manifest_lookup() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "a,t\n1,0\n2,1\n4,1\n").unwrap();
        let manifest = dir.path().join("m.json");
        std::fs::write(&manifest, r#"[{"name": "toy", "path": "d.csv", "target_column": "t"}]"#).unwrap();
        let d = load_manifest_dataset(&manifest, "toy").unwrap();
        assert_eq!(d.name, "toy");
        assert!(matches!(load_manifest_dataset(&manifest, "nope"), Err(Error::UnknownDataset { .. })));
    }

    #[test]
    fn fold_sizes_and_partition() {
        let plan = kfold_split(10, 5, 0.7, 3).unwrap();
        assert_eq!(plan.folds.len(), 5);
        for f in &plan.folds {
            assert_eq!((f.train.len(), f.val.len()), (7, 3));
            let mut all: Vec<usize> = f.train.iter().chain(&f.val).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(plan, kfold_split(10, 5, 0.7, 3).unwrap());
        assert_eq!(kfold_split(500, 5, 0.7, 0).unwrap().folds[0].train.len(), 350);
        assert!(matches!(kfold_split(3, 5, 0.7, 0), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn kmeans_cases() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![5.0], vec![9.0]]).unwrap();
        let km = kmeans_init(&x, 4, 0, 50).unwrap();
        let mut c: Vec<f64> = km.centers.as_slice().to_vec();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(c, vec![0.0, 1.0, 5.0, 9.0]);

        let same = Matrix::filled(6, 2, 3.5);
        let km = kmeans_init(&same, 1, 0, 10).unwrap();
        assert_eq!(km.centers.row(0), &[3.5, 3.5]);
        assert!(matches!(kmeans_init(&same, 7, 0, 10), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (std, half) = (0.3, 200);
        let mut pts = Vec::new();
        for c in [-10.0, 10.0] {
            for _ in 0..half {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                pts.push(c + std * z);
            }
        }
        let x = Matrix::from_raw(2 * half, 1, pts.clone());
        let km = kmeans_init(&x, 2, 1, 100).unwrap();
        let mut c = km.centers.as_slice().to_vec();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let tol = 3.0 * std / (half as f64).sqrt();
        let m0 = pts[..half].iter().sum::<f64>() / half as f64;
        let m1 = pts[half..].iter().sum::<f64>() / half as f64;
        assert!((c[0] + 10.0).abs() < tol && (c[1] - 10.0).abs() < tol);
        assert!((c[0] - m0).abs() < 1e-12 && (c[1] - m1).abs() < 1e-12);
    }

    #[test]
    fn kmeans_objective_non_increasing() {
        for seed in 0..5 {
            let d = gen_synthetic(4, 300, seed).unwrap();
            let km = kmeans_init(&d.x, 7, seed, 100).unwrap();
            for w in km.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", km.objective);
            }
            assert_eq!(km, kmeans_init(&d.x, 7, seed, 100).unwrap());
        }
    }
}
