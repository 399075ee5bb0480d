//! Model parameterizations, Adam ascent and the early-stopped training loop.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{backward_gradient, evaluate, ParamVars, Tape, Var};
use crate::cvtgp::{self, Coreset, CoresetVars};
use crate::data::kmeans_init;
use crate::error::{Error, Result};
use crate::gp::{self, ExactGp, InducingVariational};
use crate::kernels::{KernelParams, KernelVars};
use crate::linalg::Matrix;
use crate::params::{ParamLayout, ParamVector, SegmentKind};
use crate::softplus::inv_softplus;

pub const KMEANS_MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Exact,
    Titsias,
    Svgp,
    Cvtgp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Exact, Self::Titsias, Self::Svgp, Self::Cvtgp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Titsias => "titsias",
            Self::Svgp => "svgp",
            Self::Cvtgp => "cvtgp",
        }
    }

    /// Whether the model has a coreset or inducing-set size.
    pub fn is_sparse(self) -> bool {
        self != Self::Exact
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Self::Svgp | Self::Cvtgp)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model {s:?}")))
    }
}

/// A model's trainable parameters, plus the inducing inputs that Titsias
/// keeps fixed at their k-means initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub params: ParamVector,
    pub fixed_inducing: Option<Matrix>,
}

/// Initial kernel hyperparameters shared by every model: unit lengthscale
/// (inputs are standardized), outputscale at the target variance and noise
/// at a tenth of it.
pub fn default_kernel_init(y: &[f64]) -> Result<KernelParams> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let var = if var > 1e-6 { var } else { 1.0 };
    KernelParams::new(1.0, var, 0.1 * var)
}

impl Model {
    /// Builds the initial parameters for `kind` on the training set.
    /// Inducing inputs and coreset locations start at k-means centers;
    /// coreset outputs at each cluster's mean target with β = 1; SVGP's
    /// q(f_M) starts at the prior.
    pub fn init(kind: ModelKind, size: usize, x: &Matrix, y: &[f64], seed: u64) -> Result<Self> {
        gp::check_targets(x, y)?;
        let kp = default_kernel_init(y)?;
        let d = x.cols();
        let mut shapes = vec![(SegmentKind::Kernel, 1, 2), (SegmentKind::Noise, 1, 1)];
        let mut values = vec![kp.raw_lengthscale, kp.raw_outputscale, kp.raw_noise];
        let mut fixed_inducing = None;
        if kind.is_sparse() {
            if size == 0 {
                return Err(Error::InvalidConfig(format!("{kind} needs a positive size")));
            }
            let km = kmeans_init(x, size, seed, KMEANS_MAX_ITER)?;
            match kind {
                ModelKind::Titsias => fixed_inducing = Some(km.centers),
                ModelKind::Svgp => {
                    let iv = InducingVariational::prior(km.centers, &kp)?;
                    shapes.extend([
                        (SegmentKind::Inducing, size, d),
                        (SegmentKind::VariationalMean, size, 1),
                        (SegmentKind::VariationalCovFactor, size, size),
                    ]);
                    values.extend_from_slice(iv.inducing.as_slice());
                    values.extend_from_slice(&iv.mean);
                    values.extend_from_slice(iv.raw_cov_factor.as_slice());
                }
                ModelKind::Cvtgp => {
                    let mut sums = vec![0.0; size];
                    let mut counts = vec![0usize; size];
                    for (i, &c) in km.assignment.iter().enumerate() {
                        sums[c] += y[i];
                        counts[c] += 1;
                    }
                    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
                    let outputs: Vec<f64> = sums
                        .iter()
                        .zip(&counts)
                        .map(|(s, &c)| if c > 0 { s / c as f64 } else { y_mean })
                        .collect();
                    shapes.extend([
                        (SegmentKind::CoresetInputs, size, d),
                        (SegmentKind::CoresetOutputs, size, 1),
                        (SegmentKind::CoresetWeights, size, 1),
                    ]);
                    values.extend_from_slice(km.centers.as_slice());
                    values.extend(outputs);
                    values.extend(std::iter::repeat(inv_softplus(1.0)?).take(size));
                }
                ModelKind::Exact => unreachable!(),
            }
        }
        Ok(Self {
            kind,
            params: ParamVector::new(ParamLayout::new(shapes), values)?,
            fixed_inducing,
        })
    }

    pub fn kernel_params(&self) -> KernelParams {
        let k = self.params.segment_values(SegmentKind::Kernel);
        KernelParams {
            raw_lengthscale: k[0],
            raw_outputscale: k[1],
            raw_noise: self.params.segment_values(SegmentKind::Noise)[0],
        }
    }

    pub fn coreset(&self) -> Option<Coreset> {
        (self.kind == ModelKind::Cvtgp).then(|| Coreset {
            inputs: self.params.segment_matrix(SegmentKind::CoresetInputs),
            outputs: self.params.segment_values(SegmentKind::CoresetOutputs).to_vec(),
            raw_weights: self.params.segment_values(SegmentKind::CoresetWeights).to_vec(),
        })
    }

    pub fn inducing_variational(&self) -> Option<InducingVariational> {
        (self.kind == ModelKind::Svgp).then(|| InducingVariational {
            inducing: self.params.segment_matrix(SegmentKind::Inducing),
            mean: self.params.segment_values(SegmentKind::VariationalMean).to_vec(),
            raw_cov_factor: self.params.segment_matrix(SegmentKind::VariationalCovFactor),
        })
    }

    /// Inducing inputs for Titsias and SVGP.
    pub fn inducing(&self) -> Option<Matrix> {
        match self.kind {
            ModelKind::Titsias => self.fixed_inducing.clone(),
            ModelKind::Svgp => Some(self.params.segment_matrix(SegmentKind::Inducing)),
            _ => None,
        }
    }

    /// The model's bound on `(x, y)` as a function of its parameters, with the
    /// data term scaled to a training set of `n_total` points.
    fn objective<'t>(
        &self,
        tape: &'t Tape,
        v: &ParamVars<'t>,
        x: &Matrix,
        y: &[f64],
        n_total: usize,
    ) -> Result<Var<'t>> {
        let kv = KernelVars::from_raw(v.seg(SegmentKind::Kernel), v.seg(SegmentKind::Noise));
        let xv = tape.constant(x.clone());
        let yv = tape.constant(Matrix::column(y));
        match self.kind {
            ModelKind::Exact => gp::exact_log_marginal_on_tape(xv, yv, &kv),
            ModelKind::Titsias => {
                let z = self
                    .fixed_inducing
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("titsias model without inducing inputs".into()))?;
                gp::titsias_bound_on_tape(xv, yv, tape.constant(z.clone()), &kv)
            }
            ModelKind::Svgp => gp::svgp_bound_on_tape(
                xv,
                yv,
                v.seg(SegmentKind::Inducing),
                v.seg(SegmentKind::VariationalMean),
                v.seg(SegmentKind::VariationalCovFactor),
                &kv,
                n_total,
            ),
            ModelKind::Cvtgp => {
                let cs = CoresetVars::from_raw(
                    v.seg(SegmentKind::CoresetInputs),
                    v.seg(SegmentKind::CoresetOutputs),
                    v.seg(SegmentKind::CoresetWeights),
                );
                cvtgp::cvtgp_bound_on_tape(xv, yv, &cs, &kv, n_total)
            }
        }
    }

    /// Bound value and gradient on a batch.
    pub fn bound_and_gradient(&self, x: &Matrix, y: &[f64], n_total: usize) -> Result<(f64, ParamVector)> {
        backward_gradient(|t, v| self.objective(t, v, x, y, n_total), &self.params)
    }

    /// Full-batch bound on the training set (the log marginal for exact).
    pub fn bound(&self, x: &Matrix, y: &[f64]) -> Result<f64> {
        evaluate(|t, v| self.objective(t, v, x, y, y.len()), &self.params)
    }

    /// Finite-difference agreement of the bound's gradient on `(x, y)`.
    pub fn gradient_check(&self, x: &Matrix, y: &[f64], step: f64) -> Result<f64> {
        crate::autodiff::finite_diff_check(|t, v| self.objective(t, v, x, y, y.len()), &self.params, step)
    }

    /// Predictive mean and observation variance at `x_star`. The training set
    /// is only read by the exact and Titsias models.
    pub fn predict(&self, x_train: &Matrix, y_train: &[f64], x_star: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let kp = self.kernel_params();
        match self.kind {
            ModelKind::Exact => ExactGp::fit(x_train, y_train, &kp)?.predict(x_star),
            ModelKind::Titsias => {
                let z = self.inducing().expect("titsias model has inducing inputs");
                gp::titsias_predictive(x_star, x_train, y_train, &z, &kp)
            }
            ModelKind::Svgp => gp::svgp_predictive(x_star, &self.inducing_variational().unwrap(), &kp),
            ModelKind::Cvtgp => cvtgp::cvtgp_predictive(x_star, &self.coreset().unwrap(), &kp),
        }
    }

    /// Predictive means only; cheaper than [`predict`](Self::predict) for
    /// the exact model.
    pub fn predict_mean(&self, x_train: &Matrix, y_train: &[f64], x_star: &Matrix) -> Result<Vec<f64>> {
        match self.kind {
            ModelKind::Exact => ExactGp::fit(x_train, y_train, &self.kernel_params())?.predict_mean(x_star),
            _ => Ok(self.predict(x_train, y_train, x_star)?.0),
        }
    }
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::TooFewRows { needed: 1, have: 0 });
    }
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step that ascends along `grad`.
pub fn adam_step(state: &mut AdamState, params: &mut ParamVector, grad: &ParamVector) -> Result<()> {
    let g = grad.values();
    if g.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: g.len(),
        });
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for (i, p) in params.values_mut().iter_mut().enumerate() {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        *p += state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            max_epochs: 5000,
            patience_epochs: 3000,
            lr: 1e-3,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience_epochs == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig(
                "batch size, patience and evaluation interval must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub bound: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn bounds(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.bound).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "bound", "val_rmse", "seconds"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.bound.to_string(),
                r.val_rmse.to_string(),
                format!("{:.6}", r.seconds),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Training and validation sets for one fold.
#[derive(Clone, Copy, Debug)]
pub struct FoldData<'a> {
    pub x_train: &'a Matrix,
    pub y_train: &'a [f64],
    pub x_val: &'a Matrix,
    pub y_val: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the best validation RMSE.
    pub model: Model,
    pub trace: TrainTrace,
    pub best_rmse: f64,
    pub best_epoch: usize,
    /// Full-batch training bound at the returned parameters.
    pub bound: f64,
    /// Full-batch training bound when training stopped.
    pub final_bound: f64,
    pub epochs_run: usize,
}

#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub trace: TrainTrace,
    pub epochs_run: usize,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training aborted after {} epochs: {}", self.epochs_run, self.error)
    }
}

impl std::error::Error for TrainFailure {}

struct Evaluation {
    bound: f64,
    rmse: f64,
    /// The exact model's fit at the evaluated parameters, reused for the
    /// next gradient step.
    exact: Option<ExactGp>,
}

fn evaluate_model(model: &Model, fold: &FoldData<'_>) -> Result<Evaluation> {
    let (bound, pred, exact) = if model.kind == ModelKind::Exact {
        let gp = ExactGp::fit(fold.x_train, fold.y_train, &model.kernel_params())?;
        (gp.log_marginal(), gp.predict_mean(fold.x_val)?, Some(gp))
    } else {
        (
            model.bound(fold.x_train, fold.y_train)?,
            model.predict_mean(fold.x_train, fold.y_train, fold.x_val)?,
            None,
        )
    };
    let rmse = rmse(&pred, fold.y_val)?;
    if !rmse.is_finite() {
        return Err(Error::NonFinite("validation RMSE"));
    }
    Ok(Evaluation { bound, rmse, exact })
}

fn exact_step(model: &Model, gp: &ExactGp) -> Result<(f64, ParamVector)> {
    let g = gp.raw_gradient();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok((gp.log_marginal(), model.params.with_values(g.to_vec())))
}

/// Ascends the model's bound with Adam, recording the full-batch bound and
/// validation RMSE every `eval_every` epochs (epoch 0 is the
/// initialization). Stops after `patience_epochs` epochs without an RMSE
/// improvement and returns the best checkpoint.
///
/// Exact and Titsias models take one full-batch step per epoch. SVGP and
/// CVTGP shuffle the training set each epoch and step once per minibatch;
/// the batch size is capped at the training-set size.
pub fn train_model(init: Model, fold: &FoldData<'_>, cfg: &TrainConfig) -> std::result::Result<TrainOutcome, TrainFailure> {
    let fail = |error, trace, epochs_run| TrainFailure { error, trace, epochs_run };
    if let Err(e) = cfg.validate().and_then(|_| gp::check_targets(fold.x_train, fold.y_train)) {
        return Err(fail(e, TrainTrace::default(), 0));
    }
    let start = Instant::now();
    let mut trace = TrainTrace::default();
    let mut first = match evaluate_model(&init, fold) {
        Ok(e) => e,
        Err(e) => return Err(fail(e, trace, 0)),
    };
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            model: init,
            trace,
            best_rmse: first.rmse,
            best_epoch: 0,
            bound: first.bound,
            final_bound: first.bound,
            epochs_run: 0,
        });
    }
    trace.records.push(TraceRecord {
        epoch: 0,
        bound: first.bound,
        val_rmse: first.rmse,
        seconds: start.elapsed().as_secs_f64(),
    });

    let n = fold.y_train.len();
    let batch = if init.kind.is_stochastic() {
        cfg.batch_size.min(n)
    } else {
        n
    };
    let mut cached_fit = first.exact.take();
    let mut best = (init.clone(), first.rmse, 0usize, first.bound);
    let mut model = init;
    let mut adam = AdamState::new(model.params.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.max_epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let step = if let Some(gp) = cached_fit.take() {
                exact_step(&model, &gp)
            } else if chunk.len() == n {
                model.bound_and_gradient(fold.x_train, fold.y_train, n)
            } else {
                let xb = fold.x_train.select_rows(chunk);
                let yb: Vec<f64> = chunk.iter().map(|&i| fold.y_train[i]).collect();
                model.bound_and_gradient(&xb, &yb, n)
            };
            let result = step.and_then(|(_, g)| adam_step(&mut adam, &mut model.params, &g));
            if let Err(e) = result {
                return Err(fail(e, trace, epochs_run));
            }
        }
        epochs_run = epoch;
        if epoch % cfg.eval_every != 0 && epoch != cfg.max_epochs {
            continue;
        }
        let mut ev = match evaluate_model(&model, fold) {
            Ok(e) => e,
            Err(e) => return Err(fail(e, trace, epochs_run)),
        };
        cached_fit = ev.exact.take();
        trace.records.push(TraceRecord {
            epoch,
            bound: ev.bound,
            val_rmse: ev.rmse,
            seconds: start.elapsed().as_secs_f64(),
        });
        if ev.rmse < best.1 {
            best = (model.clone(), ev.rmse, epoch, ev.bound);
            since_best = 0;
        } else {
            since_best += cfg.eval_every;
            if since_best >= cfg.patience_epochs {
                break;
            }
        }
    }
    let (model, best_rmse, best_epoch, bound) = best;
    let final_bound = trace.records.last().map_or(bound, |r| r.bound);
    Ok(TrainOutcome {
        model,
        trace,
        best_rmse,
        best_epoch,
        bound,
        final_bound,
        epochs_run,
    })
}

/// Fraction of consecutive windows over which the `window`-point moving
/// average of `values` does not decrease (by more than `tol`).
pub fn moving_average_monotone_fraction(values: &[f64], window: usize, tol: f64) -> f64 {
    if window == 0 || values.len() < window + 1 {
        return 1.0;
    }
    let avgs: Vec<f64> = values
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    let ok = avgs.windows(2).filter(|w| w[1] >= w[0] - tol).count();
    ok as f64 / (avgs.len() - 1) as f64
}
