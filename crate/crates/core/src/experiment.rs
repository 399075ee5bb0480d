//! Cross-validated (dataset × model × size) grids and their on-disk artifacts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cvtgp::{self, Coreset};
use crate::data::{self, Dataset, FoldPlan, DEFAULT_SYNTHETIC_SIZE};
use crate::error::{Error, Result};
use crate::gp;
use crate::kernels::KernelParams;
use crate::linalg::Matrix;
use crate::train::{train_model, FoldData, Model, ModelKind, TrainConfig, TrainOutcome, TrainTrace};

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const PREDICTIVE_GRID_POINTS: usize = 200;

/// Where a grid's data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DatasetSource {
    Synthetic { id: u32, n: usize },
    Manifest { manifest: PathBuf, key: String },
}

impl DatasetSource {
    /// Parses `synthetic-<id>` (optionally `synthetic-<id>:<n>`) or
    /// `manifest:<key>`; the latter needs a manifest path.
    pub fn parse(selector: &str, manifest: Option<&Path>) -> Result<Self> {
        if let Some(rest) = selector.strip_prefix("synthetic-") {
            let (id, n) = match rest.split_once(':') {
                Some((id, n)) => (id, n.parse().map_err(|_| bad_selector(selector))?),
                None => (rest, DEFAULT_SYNTHETIC_SIZE),
            };
            let id: u32 = id.parse().map_err(|_| bad_selector(selector))?;
            if !(1..=5).contains(&id) {
                return Err(Error::InvalidSyntheticId(id));
            }
            return Ok(Self::Synthetic { id, n });
        }
        if let Some(key) = selector.strip_prefix("manifest:") {
            let manifest = manifest.ok_or_else(|| {
                Error::InvalidConfig(format!("dataset {selector:?} needs a manifest path"))
            })?;
            return Ok(Self::Manifest {
                manifest: manifest.to_path_buf(),
                key: key.to_string(),
            });
        }
        Err(bad_selector(selector))
    }

    /// Short identifier used in results and file names.
    pub fn name(&self) -> String {
        match self {
            Self::Synthetic { id, .. } => format!("synthetic-{id}"),
            Self::Manifest { key, .. } => key.clone(),
        }
    }

    /// Loads the dataset with standardized inputs.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        let mut ds = match self {
            Self::Synthetic { id, n } => data::gen_synthetic(*id, *n, seed)?.normalized()?,
            Self::Manifest { manifest, key } => data::load_manifest_dataset(manifest, key)?,
        };
        ds.name = self.name();
        Ok(ds)
    }
}

fn bad_selector(s: &str) -> Error {
    Error::InvalidConfig(format!(
        "unknown dataset {s:?}; expected synthetic-<1..5>[:n] or manifest:<key>"
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    pub models: Vec<ModelKind>,
    /// Coreset sizes for CVTGP, inducing-point counts for Titsias and SVGP.
    /// The exact model runs once per fold regardless.
    pub sizes: Vec<usize>,
    pub train: TrainConfig,
    pub folds: usize,
    pub train_frac: f64,
    /// Seeds data generation, fold assignment, k-means and minibatch order.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSource, models: Vec<ModelKind>, sizes: Vec<usize>, out_dir: PathBuf) -> Self {
        Self {
            dataset,
            models,
            sizes,
            train: TrainConfig::default(),
            folds: 5,
            train_frac: 0.7,
            seed: 0,
            out_dir,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("model list is empty".into()));
        }
        let sparse = self.models.iter().any(|m| m.is_sparse());
        if sparse && self.sizes.is_empty() {
            return Err(Error::InvalidConfig("sparse models need at least one size".into()));
        }
        if self.sizes.contains(&0) {
            return Err(Error::InvalidConfig("sizes must be positive".into()));
        }
        if self.folds == 0 || !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "need at least one fold and a train fraction in (0, 1), got {} and {}",
                self.folds, self.train_frac
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("thread count must be positive".into()));
        }
        self.train.validate()
    }

    /// Grid cells in output order: models as listed, then sizes, then folds.
    pub fn cells(&self) -> Vec<Cell> {
        let mut models = self.models.clone();
        dedup_in_order(&mut models);
        let mut sizes = self.sizes.clone();
        dedup_in_order(&mut sizes);
        let mut cells = Vec::new();
        for &model in &models {
            let model_sizes: Vec<Option<usize>> = if model.is_sparse() {
                sizes.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for size in model_sizes {
                for fold in 0..self.folds {
                    cells.push(Cell { model, size, fold });
                }
            }
        }
        cells
    }
}

fn dedup_in_order<T: PartialEq + Copy>(v: &mut Vec<T>) {
    let mut seen = Vec::with_capacity(v.len());
    v.retain(|x| {
        let fresh = !seen.contains(x);
        if fresh {
            seen.push(*x);
        }
        fresh
    });
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub model: ModelKind,
    pub size: Option<usize>,
    pub fold: usize,
}

impl Cell {
    /// File stem shared by the cell's artifacts.
    pub fn stem(&self) -> String {
        match self.size {
            Some(s) => format!("{}_{}_fold{}", self.model, s, self.fold),
            None => format!("{}_fold{}", self.model, self.fold),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ok => "ok",
            Self::Failed => "failed",
        })
    }
}

/// One (dataset, model, size, fold) outcome: the full-batch training bound
/// when training stopped and the best validation RMSE. `status` is `ok` or
/// `failed: <reason>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub model: ModelKind,
    pub size: Option<usize>,
    pub fold: usize,
    pub bound: Option<f64>,
    pub rmse: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// A finished grid: rows in cell order plus each successful run's model.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub fold_plan: FoldPlan,
}

impl ExperimentOutput {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(ResultRow::is_ok)
    }
}

struct CellRun {
    row: ResultRow,
    trace: TrainTrace,
    outcome: Option<TrainOutcome>,
}

/// Runs every grid cell on a bounded worker pool and writes results,
/// traces and learned artifacts under `spec.out_dir`. Individual cell
/// failures are recorded in their rows; only setup and I/O errors abort.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let ds = spec.dataset.load(spec.seed)?;
    let plan = data::kfold_split(ds.len(), spec.folds, spec.train_frac, spec.seed)?;
    let cells = spec.cells();

    let threads = spec
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<CellRun> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| run_cell(spec, &ds, &plan, cell))
            .collect()
    });

    fs::create_dir_all(&spec.out_dir)?;
    let traces = spec.out_dir.join("traces");
    fs::create_dir_all(&traces)?;
    for (cell, run) in cells.iter().zip(&runs) {
        if !run.trace.is_empty() {
            run.trace.save(&traces.join(format!("{}.csv", cell.stem())))?;
        }
        if let Some(outcome) = &run.outcome {
            write_model_artifacts(&spec.out_dir, &ds, &plan, cell, &outcome.model)?;
        }
    }
    let rows: Vec<ResultRow> = runs.into_iter().map(|r| r.row).collect();
    emit_results(&rows, &spec.out_dir)?;
    Ok(ExperimentOutput { rows, fold_plan: plan })
}

fn run_cell(spec: &ExperimentSpec, ds: &Dataset, plan: &FoldPlan, cell: &Cell) -> CellRun {
    let fold = &plan.folds[cell.fold];
    let (tr, va) = (ds.subset(&fold.train), ds.subset(&fold.val));
    let fold_data = FoldData {
        x_train: &tr.x,
        y_train: &tr.y,
        x_val: &va.x,
        y_val: &va.y,
    };
    let cell_seed = spec.seed.wrapping_add(cell.fold as u64);
    let mut row = ResultRow {
        dataset: ds.name.clone(),
        model: cell.model,
        size: cell.size,
        fold: cell.fold,
        bound: None,
        rmse: None,
        epochs: 0,
        seed: spec.seed,
        status: Status::Ok.to_string(),
    };
    let init = match Model::init(cell.model, cell.size.unwrap_or(0), &tr.x, &tr.y, cell_seed) {
        Ok(m) => m,
        Err(e) => {
            row.status = format!("{}: {e}", Status::Failed);
            return CellRun {
                row,
                trace: TrainTrace::default(),
                outcome: None,
            };
        }
    };
    let cfg = TrainConfig {
        seed: cell_seed,
        ..spec.train.clone()
    };
    match train_model(init, &fold_data, &cfg) {
        Ok(outcome) => {
            row.bound = Some(outcome.final_bound);
            row.rmse = Some(outcome.best_rmse);
            row.epochs = outcome.epochs_run;
            CellRun {
                row,
                trace: outcome.trace.clone(),
                outcome: Some(outcome),
            }
        }
        Err(failure) => {
            row.epochs = failure.epochs_run;
            row.status = format!("{}: {}", Status::Failed, failure.error);
            CellRun {
                row,
                trace: failure.trace,
                outcome: None,
            }
        }
    }
}

fn input_header(d: usize) -> Vec<String> {
    if d == 1 {
        vec!["x".to_string()]
    } else {
        (0..d).map(|j| format!("x{j}")).collect()
    }
}

/// Coreset triplets, inducing inputs and (for 1-D data) predictive curves.
/// Inputs are written in the dataset's original units.
fn write_model_artifacts(out: &Path, ds: &Dataset, plan: &FoldPlan, cell: &Cell, model: &Model) -> Result<()> {
    let d = ds.dim();
    if let Some(cs) = model.coreset() {
        let dir = out.join("coresets");
        fs::create_dir_all(&dir)?;
        write_coreset_csv(&dir.join(format!("{}.csv", cell.stem())), &cs, ds)?;
    }
    if let Some(z) = model.inducing() {
        let dir = out.join("inducing");
        fs::create_dir_all(&dir)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", cell.stem())))?;
        let mut header = input_header(d);
        let mean = model.inducing_variational().map(|iv| iv.mean);
        if mean.is_some() {
            header.push("m".into());
        }
        w.write_record(&header)?;
        let raw = data::denormalize(&z, &ds.normalization);
        for i in 0..raw.rows() {
            let mut rec: Vec<String> = raw.row(i).iter().map(f64::to_string).collect();
            if let Some(m) = &mean {
                rec.push(m[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    if d == 1 {
        let dir = out.join("predictive");
        fs::create_dir_all(&dir)?;
        let fold = &plan.folds[cell.fold];
        let tr = ds.subset(&fold.train);
        let raw = ds.raw_inputs();
        let (lo, hi) = raw
            .as_slice()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let grid_raw: Vec<f64> = (0..PREDICTIVE_GRID_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (PREDICTIVE_GRID_POINTS - 1) as f64)
            .collect();
        let grid = ds.normalization.apply(&Matrix::column(&grid_raw));
        let (mean, var) = model.predict(&tr.x, &tr.y, &grid)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", cell.stem())))?;
        w.write_record(["x", "mean", "var"])?;
        for ((x, m), v) in grid_raw.iter().zip(&mean).zip(&var) {
            w.write_record([x.to_string(), m.to_string(), v.to_string()])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn write_coreset_csv(path: &Path, cs: &Coreset, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = input_header(cs.inputs.cols());
    header.extend(["y".to_string(), "beta".to_string()]);
    w.write_record(&header)?;
    let raw = data::denormalize(&cs.inputs, &ds.normalization);
    let beta = cs.weights();
    for i in 0..cs.size() {
        let mut rec: Vec<String> = raw.row(i).iter().map(f64::to_string).collect();
        rec.push(cs.outputs[i].to_string());
        rec.push(beta[i].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv` and `results.json` with identical content.
pub fn emit_results(rows: &[ResultRow], out_dir: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("no result rows to write".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join(RESULTS_CSV))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let json = serde_json::to_string_pretty(rows)?;
    fs::write(out_dir.join(RESULTS_JSON), json + "\n")?;
    Ok(())
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn read_results_json(path: &Path) -> Result<Vec<ResultRow>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Post-hoc checks on a results directory: CSV and JSON agree, every CVTGP
/// bound sits below the exact bound of the same (dataset, fold), and the
/// full-coreset identity holds on a fresh instance.
pub fn check_results(out_dir: &Path) -> Result<Vec<CheckLine>> {
    let rows = read_results_csv(&out_dir.join(RESULTS_CSV))?;
    let mut lines = Vec::new();
    let json_path = out_dir.join(RESULTS_JSON);
    if json_path.exists() {
        let json = read_results_json(&json_path)?;
        lines.push(CheckLine {
            name: "csv-json-agreement".into(),
            passed: json == rows,
            detail: format!("{} csv rows, {} json rows", rows.len(), json.len()),
        });
    }
    lines.push(bound_ordering_line(&rows));
    lines.push(full_coreset_identity_line()?);
    Ok(lines)
}

fn bound_ordering_line(rows: &[ResultRow]) -> CheckLine {
    let mut compared = 0usize;
    let mut violations = Vec::new();
    for c in rows.iter().filter(|r| r.model == ModelKind::Cvtgp) {
        let exact = rows
            .iter()
            .find(|r| r.model == ModelKind::Exact && r.dataset == c.dataset && r.fold == c.fold);
        if let (Some(cb), Some(eb)) = (c.bound, exact.and_then(|e| e.bound)) {
            compared += 1;
            if cb > eb + 1e-9 * (1.0 + eb.abs()) {
                violations.push(format!(
                    "{} C={} fold {}: {cb} > {eb}",
                    c.dataset,
                    c.size.map_or("-".into(), |s| s.to_string()),
                    c.fold
                ));
            }
        }
    }
    CheckLine {
        name: "bound-ordering".into(),
        passed: violations.is_empty(),
        detail: if violations.is_empty() {
            format!("{compared} cvtgp/exact pairs compared")
        } else {
            violations.join("; ")
        },
    }
}

/// With X_C = X, y_C = y and β = 1 the CVTGP bound equals the exact log
/// marginal. Returns (cvtgp, exact) on a 30-point Synthetic 3 sample.
pub fn full_coreset_identity(seed: u64) -> Result<(f64, f64)> {
    let ds = data::gen_synthetic(3, 30, seed)?.normalized()?;
    let kp = KernelParams::new(0.8, 1.2, 0.3)?;
    let cs = Coreset::new(ds.x.clone(), ds.y.clone(), &vec![1.0; ds.len()])?;
    let bound = cvtgp::cvtgp_bound_full(&ds.x, &ds.y, &cs, &kp)?;
    let exact = gp::exact_log_marginal(&ds.x, &ds.y, &kp)?;
    Ok((bound, exact))
}

fn full_coreset_identity_line() -> Result<CheckLine> {
    let (bound, exact) = full_coreset_identity(0)?;
    let gap = (bound - exact).abs();
    Ok(CheckLine {
        name: "full-coreset-identity".into(),
        passed: gap <= 1e-7 * (1.0 + exact.abs()),
        detail: format!("|{bound} - {exact}| = {gap:e}"),
    })
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_spec(models: Vec<ModelKind>, sizes: Vec<usize>, out: &Path) -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(
            DatasetSource::Synthetic { id: 3, n: 60 },
            models,
            sizes,
            out.to_path_buf(),
        );
        spec.train.max_epochs = 5;
        spec.threads = Some(2);
        spec
    }

    #[test]
    fn parses_selectors() {
        assert_eq!(
            DatasetSource::parse("synthetic-3", None).unwrap(),
            DatasetSource::Synthetic { id: 3, n: 1000 }
        );
        assert_eq!(
            DatasetSource::parse("synthetic-1:500", None).unwrap(),
            DatasetSource::Synthetic { id: 1, n: 500 }
        );
        assert!(matches!(
            DatasetSource::parse("synthetic-9", None),
            Err(Error::InvalidSyntheticId(9))
        ));
        assert!(DatasetSource::parse("manifest:boston", None).is_err());
        let m = DatasetSource::parse("manifest:boston", Some(Path::new("m.json"))).unwrap();
        assert_eq!(m.name(), "boston");
        assert!(DatasetSource::parse("iris", None).is_err());
    }

    #[test]
    fn exact_runs_once_per_fold() {
        let spec = quick_spec(vec![ModelKind::Exact, ModelKind::Cvtgp], vec![4, 8, 4], Path::new("."));
        let cells = spec.cells();
        assert_eq!(cells.len(), 5 + 2 * 5);
        assert!(cells[..5].iter().all(|c| c.size.is_none()));
        assert_eq!(cells[5].size, Some(4));
        assert_eq!(cells[10].size, Some(8));
    }

    #[test]
    fn rejects_empty_grids() {
        let dir = Path::new(".");
        assert!(quick_spec(vec![], vec![4], dir).validate().is_err());
        assert!(quick_spec(vec![ModelKind::Svgp], vec![], dir).validate().is_err());
        assert!(quick_spec(vec![ModelKind::Exact], vec![], dir).validate().is_ok());
        assert!(quick_spec(vec![ModelKind::Cvtgp], vec![0], dir).validate().is_err());
    }

    #[test]
    fn baseline_only_run() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick_spec(vec![ModelKind::Exact], vec![], dir.path());
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.rows.len(), 5);
        assert!(out.all_ok());
        assert!(!dir.path().join("coresets").exists());
        let text = fs::read_to_string(dir.path().join(RESULTS_CSV)).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert_eq!(
            text.lines().next().unwrap(),
            "dataset,model,size,fold,bound,rmse,epochs,seed,status"
        );
        assert_eq!(read_results_json(&dir.path().join(RESULTS_JSON)).unwrap(), out.rows);
        assert_eq!(read_results_csv(&dir.path().join(RESULTS_CSV)).unwrap(), out.rows);
    }

    #[test]
    fn coreset_artifacts_have_positive_weights() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick_spec(vec![ModelKind::Cvtgp], vec![10], dir.path());
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.rows.len(), 5);
        for fold in 0..5 {
            let path = dir.path().join(format!("coresets/cvtgp_10_fold{fold}.csv"));
            let mut r = csv::Reader::from_path(path).unwrap();
            assert_eq!(r.headers().unwrap(), vec!["x", "y", "beta"]);
            let recs: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
            assert_eq!(recs.len(), 10);
            for rec in recs {
                let vals: Vec<f64> = rec.iter().map(|v| v.parse().unwrap()).collect();
                assert!(vals.iter().all(|v| v.is_finite()));
                assert!(vals[2] > 0.0);
            }
            let pred = dir.path().join(format!("predictive/cvtgp_10_fold{fold}.csv"));
            let text = fs::read_to_string(pred).unwrap();
            assert_eq!(text.lines().count(), PREDICTIVE_GRID_POINTS + 1);
            assert!(dir.path().join(format!("traces/cvtgp_10_fold{fold}.csv")).exists());
        }
    }

    #[test]
    fn inducing_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick_spec(vec![ModelKind::Titsias, ModelKind::Svgp], vec![6], dir.path());
        run_experiment(&spec).unwrap();
        let t = fs::read_to_string(dir.path().join("inducing/titsias_6_fold0.csv")).unwrap();
        assert_eq!(t.lines().next().unwrap(), "x");
        assert_eq!(t.lines().count(), 7);
        let s = fs::read_to_string(dir.path().join("inducing/svgp_6_fold0.csv")).unwrap();
        assert_eq!(s.lines().next().unwrap(), "x,m");
    }

    #[test]
    fn failed_cells_are_recorded() {
        let dir = tempfile::tempdir().unwrap();
        // 42 training points cannot host 100 k-means centers.
        let spec = quick_spec(vec![ModelKind::Exact, ModelKind::Cvtgp], vec![100], dir.path());
        let out = run_experiment(&spec).unwrap();
        assert!(!out.all_ok());
        assert!(out.rows[..5].iter().all(ResultRow::is_ok));
        for r in &out.rows[5..] {
            assert!(r.status.starts_with("failed: "), "{}", r.status);
            assert_eq!(r.bound, None);
        }
        assert_eq!(read_results_csv(&dir.path().join(RESULTS_CSV)).unwrap(), out.rows);
    }

    #[test]
    fn identical_specs_give_identical_results() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let models = vec![ModelKind::Exact, ModelKind::Svgp, ModelKind::Cvtgp];
        run_experiment(&quick_spec(models.clone(), vec![5], a.path())).unwrap();
        let mut spec = quick_spec(models, vec![5], b.path());
        spec.threads = Some(1);
        run_experiment(&spec).unwrap();
        let read = |p: &Path| fs::read(p.join(RESULTS_CSV)).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
    }

    #[test]
    fn check_flags_ordering_violations() {
        let dir = tempfile::tempdir().unwrap();
        let row = |model, bound| ResultRow {
            dataset: "d".into(),
            model,
            size: (model == ModelKind::Cvtgp).then_some(3),
            fold: 0,
            bound: Some(bound),
            rmse: Some(1.0),
            epochs: 1,
            seed: 0,
            status: "ok".into(),
        };
        emit_results(&[row(ModelKind::Exact, -10.0), row(ModelKind::Cvtgp, -12.0)], dir.path()).unwrap();
        let lines = check_results(dir.path()).unwrap();
        assert!(lines.iter().all(|l| l.passed), "{lines:?}");
        emit_results(&[row(ModelKind::Exact, -10.0), row(ModelKind::Cvtgp, -9.0)], dir.path()).unwrap();
        let lines = check_results(dir.path()).unwrap();
        let ordering = lines.iter().find(|l| l.name == "bound-ordering").unwrap();
        assert!(!ordering.passed);
    }

    #[test]
    fn full_coreset_identity_holds() {
        let (b, e) = full_coreset_identity(3).unwrap();
        assert!((b - e).abs() <= 1e-7 * (1.0 + e.abs()));
    }
}
