//! Coreset-based tempered posterior and the variational bound built on it.
//!
//! A coreset is a set of C weighted pseudo-observations (x_c, y_c, β_c).
//! Each contributes the tempered likelihood N(y_c | f_c, σ²)^{β_c}, which
//! equals Q_c·N(y_c | f_c, σ²/β_c). The approximate posterior is the exact GP
//! posterior under that likelihood, so every quantity below only ever
//! factors A = K_CC + Σ_β with Σ_β = σ²·diag(1/β).

use std::f64::consts::PI;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::gp::{check_targets, gaussian_loglik_sum, GaussianPosterior};
use crate::kernels::{rbf_matrix, KernelParams, KernelVars};
use crate::linalg::{self, Matrix};
use crate::softplus::{inv_softplus, softplus};

#[derive(Clone, Debug, PartialEq)]
pub struct Coreset {
    pub inputs: Matrix,
    pub outputs: Vec<f64>,
    pub raw_weights: Vec<f64>,
}

impl Coreset {
    /// From constrained weights β (all positive).
    pub fn new(inputs: Matrix, outputs: Vec<f64>, weights: &[f64]) -> Result<Self> {
        let raw = weights
            .iter()
            .map(|&b| inv_softplus(b))
            .collect::<Result<Vec<_>>>()?;
        Self::from_raw(inputs, outputs, raw)
    }

    pub fn from_raw(inputs: Matrix, outputs: Vec<f64>, raw_weights: Vec<f64>) -> Result<Self> {
        let c = inputs.rows();
        if c == 0 {
            return Err(Error::TooFewRows { needed: 1, have: 0 });
        }
        if outputs.len() != c {
            return Err(Error::LengthMismatch {
                left: c,
                right: outputs.len(),
            });
        }
        if raw_weights.len() != c {
            return Err(Error::LengthMismatch {
                left: c,
                right: raw_weights.len(),
            });
        }
        if outputs.iter().chain(&raw_weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coreset"));
        }
        Ok(Self {
            inputs,
            outputs,
            raw_weights,
        })
    }

    pub fn size(&self) -> usize {
        self.outputs.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.raw_weights.iter().map(|&r| softplus(r)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemperedStats {
    pub sigma_beta: Matrix,
    pub log_q: f64,
}

/// Σ_β = σ²·diag(1/β) and log Q_C = Σ_c [½ln(2πσ²/β_c) − (β_c/2)ln(2πσ²)].
pub fn weighted_likelihood_stats(cs: &Coreset, kp: &KernelParams) -> TemperedStats {
    let noise = kp.noise();
    let beta = cs.weights();
    let diag: Vec<f64> = beta.iter().map(|b| noise / b).collect();
    let log_q = beta
        .iter()
        .zip(&diag)
        .map(|(b, s)| 0.5 * (2.0 * PI * s).ln() - 0.5 * b * (2.0 * PI * noise).ln())
        .sum();
    TemperedStats {
        sigma_beta: Matrix::from_diag(&diag),
        log_q,
    }
}

/// Coreset parameters on a tape, weights already mapped through softplus.
#[derive(Clone, Copy, Debug)]
pub struct CoresetVars<'t> {
    pub inputs: Var<'t>,
    pub outputs: Var<'t>,
    pub weights: Var<'t>,
}

impl<'t> CoresetVars<'t> {
    /// `outputs` and `raw_weights` are C×1.
    pub fn from_raw(inputs: Var<'t>, outputs: Var<'t>, raw_weights: Var<'t>) -> Self {
        Self {
            inputs,
            outputs,
            weights: raw_weights.softplus(),
        }
    }

    pub fn constant(tape: &'t Tape, cs: &Coreset) -> Self {
        Self::from_raw(
            tape.leaf(cs.inputs.clone()),
            tape.column(&cs.outputs),
            tape.column(&cs.raw_weights),
        )
    }

    fn size(&self) -> usize {
        self.outputs.shape().0
    }
}

/// Pieces shared by every bound: K_CC, the tempered variances σ²/β (C×1),
/// A = K_CC + Σ_β and α = A⁻¹y_C.
struct Tempered<'t> {
    kcc: Var<'t>,
    sigma: Var<'t>,
    a: Var<'t>,
    alpha: Var<'t>,
}

fn tempered<'t>(cs: &CoresetVars<'t>, kv: &KernelVars<'t>) -> Result<Tempered<'t>> {
    let kcc = kv.rbf(cs.inputs, cs.inputs);
    let sigma = cs.weights.recip().mul(kv.noise);
    let a = kcc.add(sigma.diag_embed());
    let alpha = a.solve_psd(cs.outputs)?;
    Ok(Tempered {
        kcc,
        sigma,
        a,
        alpha,
    })
}

fn log_q_on_tape<'t>(cs: &CoresetVars<'t>, t: &Tempered<'t>, kv: &KernelVars<'t>) -> Var<'t> {
    let half_log_sigma = t.sigma.scale(2.0 * PI).ln().sum().scale(0.5);
    let tempered_norm = cs.weights.sum().mul(kv.noise.scale(2.0 * PI).ln()).scale(0.5);
    half_log_sigma.sub(tempered_norm)
}

fn kl_on_tape<'t>(t: &Tempered<'t>) -> Result<Var<'t>> {
    let trace = t.a.solve_psd(t.kcc)?.trace();
    let quad = t.alpha.dot(t.kcc.matmul(t.alpha));
    let logdet_sigma = t.sigma.ln().sum();
    Ok(quad
        .sub(trace)
        .add(t.a.logdet_psd()?)
        .sub(logdet_sigma)
        .scale(0.5))
}

/// Σ_i [log N(y_i | m_i, σ²) − k_ii/(2σ²)] under the coreset-conditioned
/// posterior at the rows of `x`.
fn data_term<'t>(
    x: Var<'t>,
    y: Var<'t>,
    t: &Tempered<'t>,
    cs: &CoresetVars<'t>,
    kv: &KernelVars<'t>,
) -> Result<Var<'t>> {
    let n = x.shape().0;
    let kcx = kv.rbf(cs.inputs, x);
    let mean = kcx.t().matmul(t.alpha);
    let resid = y.sub(mean);
    let explained = kcx.dot(t.a.solve_psd(kcx)?);
    let var_sum = kv.outputscale.scale(n as f64).sub(explained);
    let penalty = var_sum.mul(kv.noise.recip()).scale(0.5);
    Ok(gaussian_loglik_sum(resid.dot(resid), n, kv.noise).sub(penalty))
}

pub fn coreset_marginal_loglik_on_tape<'t>(
    cs: &CoresetVars<'t>,
    kv: &KernelVars<'t>,
) -> Result<Var<'t>> {
    let t = tempered(cs, kv)?;
    let c = cs.size() as f64;
    let log_normal = t
        .a
        .logdet_psd()?
        .add(cs.outputs.dot(t.alpha))
        .scale(-0.5)
        .offset(-0.5 * c * (2.0 * PI).ln());
    Ok(log_q_on_tape(cs, &t, kv).add(log_normal))
}

pub fn cvtgp_kl_on_tape<'t>(cs: &CoresetVars<'t>, kv: &KernelVars<'t>) -> Result<Var<'t>> {
    kl_on_tape(&tempered(cs, kv)?)
}

/// `(n_total / B)·data term on the batch − KL`. With the whole training set
/// as the batch this is the full bound.
pub fn cvtgp_bound_on_tape<'t>(
    x_batch: Var<'t>,
    y_batch: Var<'t>,
    cs: &CoresetVars<'t>,
    kv: &KernelVars<'t>,
    n_total: usize,
) -> Result<Var<'t>> {
    let t = tempered(cs, kv)?;
    let b = x_batch.shape().0;
    let data = data_term(x_batch, y_batch, &t, cs, kv)?;
    let data = if b == n_total {
        data
    } else {
        data.scale(n_total as f64 / b as f64)
    };
    Ok(data.sub(kl_on_tape(&t)?))
}

/// The same bound assembled as
/// data term − E_q[log q(y_C | f_C, β)] + log q(y_C | X_C, β),
/// with both coreset likelihood normalizers kept in place.
pub fn cvtgp_bound_alt_on_tape<'t>(
    x: Var<'t>,
    y: Var<'t>,
    cs: &CoresetVars<'t>,
    kv: &KernelVars<'t>,
) -> Result<Var<'t>> {
    let t = tempered(cs, kv)?;
    let c = cs.size() as f64;
    let data = data_term(x, y, &t, cs, kv)?;

    let log_q = log_q_on_tape(cs, &t, kv);
    let post_mean = t.kcc.matmul(t.alpha);
    let post_var = t
        .kcc
        .diag_part()
        .sub(t.kcc.matmul(t.a.solve_psd(t.kcc)?).diag_part());
    let inv_sigma = t.sigma.recip();
    let resid = cs.outputs.sub(post_mean);
    let log_normal_at_mean = t
        .sigma
        .scale(2.0 * PI)
        .ln()
        .sum()
        .add(resid.square().dot(inv_sigma))
        .scale(-0.5);
    let expected_lik = log_q
        .add(log_normal_at_mean)
        .sub(post_var.dot(inv_sigma).scale(0.5));

    let marginal = t
        .a
        .logdet_psd()?
        .add(cs.outputs.dot(t.alpha))
        .scale(-0.5)
        .offset(-0.5 * c * (2.0 * PI).ln());
    let log_marginal = log_q.add(marginal);

    Ok(data.sub(expected_lik).add(log_marginal))
}

fn check_coreset_dim(x: &Matrix, cs: &Coreset) -> Result<()> {
    if x.cols() != cs.inputs.cols() {
        return Err(Error::DimensionMismatch {
            op: "coreset",
            detail: format!(
                "inputs have dimension {}, coreset {}",
                x.cols(),
                cs.inputs.cols()
            ),
        });
    }
    Ok(())
}

fn with_constants<F>(cs: &Coreset, kp: &KernelParams, f: F) -> Result<f64>
where
    F: for<'t> FnOnce(&'t Tape, &CoresetVars<'t>, &KernelVars<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let kv = KernelVars::constant(&tape, kp);
    let cv = CoresetVars::constant(&tape, cs);
    Ok(f(&tape, &cv, &kv)?.scalar_value())
}

pub fn coreset_marginal_loglik(cs: &Coreset, kp: &KernelParams) -> Result<f64> {
    with_constants(cs, kp, |_, cv, kv| coreset_marginal_loglik_on_tape(cv, kv))
}

pub fn cvtgp_kl(cs: &Coreset, kp: &KernelParams) -> Result<f64> {
    with_constants(cs, kp, |_, cv, kv| cvtgp_kl_on_tape(cv, kv))
}

pub fn cvtgp_bound_full(x: &Matrix, y: &[f64], cs: &Coreset, kp: &KernelParams) -> Result<f64> {
    cvtgp_bound_minibatch(x, y, y.len(), cs, kp)
}

pub fn cvtgp_bound_minibatch(
    x_batch: &Matrix,
    y_batch: &[f64],
    n_total: usize,
    cs: &Coreset,
    kp: &KernelParams,
) -> Result<f64> {
    check_targets(x_batch, y_batch)?;
    check_coreset_dim(x_batch, cs)?;
    if n_total < y_batch.len() {
        return Err(Error::InvalidConfig(format!(
            "n_total {n_total} smaller than batch {}",
            y_batch.len()
        )));
    }
    with_constants(cs, kp, |tape, cv, kv| {
        cvtgp_bound_on_tape(
            tape.constant(x_batch.clone()),
            tape.constant(Matrix::column(y_batch)),
            cv,
            kv,
            n_total,
        )
    })
}

pub fn cvtgp_bound_alt(x: &Matrix, y: &[f64], cs: &Coreset, kp: &KernelParams) -> Result<f64> {
    check_targets(x, y)?;
    check_coreset_dim(x, cs)?;
    with_constants(cs, kp, |tape, cv, kv| {
        cvtgp_bound_alt_on_tape(tape.constant(x.clone()), tape.constant(Matrix::column(y)), cv, kv)
    })
}

struct PlainTempered {
    kcc: Matrix,
    factor: linalg::CholFactor,
    alpha: Vec<f64>,
}

fn plain_tempered(cs: &Coreset, kp: &KernelParams) -> Result<PlainTempered> {
    let kcc = rbf_matrix(&cs.inputs, &cs.inputs, kp)?;
    let stats = weighted_likelihood_stats(cs, kp);
    let factor = linalg::cholesky_default(&kcc.add(&stats.sigma_beta))?;
    let alpha = linalg::solve_psd_vec(&factor, &cs.outputs)?;
    Ok(PlainTempered { kcc, factor, alpha })
}

/// q(f_C) in the form m = K_CC·A⁻¹y_C, K = K_CC − K_CC·A⁻¹·K_CC.
pub fn coreset_posterior(cs: &Coreset, kp: &KernelParams) -> Result<GaussianPosterior> {
    let t = plain_tempered(cs, kp)?;
    let mean = (0..cs.size())
        .map(|i| linalg::dot(t.kcc.row(i), &t.alpha))
        .collect();
    let v = linalg::solve_lower(&t.factor, &t.kcc)?;
    let cov = t.kcc.sub(&v.transpose().matmul_unchecked(&v)).symmetrized();
    Ok(GaussianPosterior { mean, cov })
}

/// q(f_C) in information form: K = (K_CC⁻¹ + Σ_β⁻¹)⁻¹, m = K·Σ_β⁻¹·y_C.
/// Needs K_CC itself to be well conditioned.
pub fn coreset_posterior_information(cs: &Coreset, kp: &KernelParams) -> Result<GaussianPosterior> {
    let kcc = rbf_matrix(&cs.inputs, &cs.inputs, kp)?;
    let stats = weighted_likelihood_stats(cs, kp);
    let prec = linalg::inverse_psd(&linalg::cholesky(&kcc, 0.0)?);
    let sigma = stats.sigma_beta.diag();
    let inv_sigma: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
    let cov = linalg::inverse_psd(&linalg::cholesky(&prec.add(&Matrix::from_diag(&inv_sigma)), 0.0)?);
    let scaled: Vec<f64> = cs.outputs.iter().zip(&inv_sigma).map(|(y, w)| y * w).collect();
    let mean = (0..cs.size()).map(|i| linalg::dot(cov.row(i), &scaled)).collect();
    Ok(GaussianPosterior { mean, cov })
}

/// Posterior over f at `x_eval` after marginalizing the prior conditional
/// p(f | f_C) against q(f_C).
pub fn coreset_conditional_posterior(
    x_eval: &Matrix,
    cs: &Coreset,
    kp: &KernelParams,
) -> Result<GaussianPosterior> {
    check_coreset_dim(x_eval, cs)?;
    let t = plain_tempered(cs, kp)?;
    let kcx = rbf_matrix(&cs.inputs, x_eval, kp)?;
    let mean = (0..x_eval.rows())
        .map(|j| (0..cs.size()).map(|i| kcx[(i, j)] * t.alpha[i]).sum())
        .collect();
    let v = linalg::solve_lower(&t.factor, &kcx)?;
    let cov = rbf_matrix(x_eval, x_eval, kp)?
        .sub(&v.transpose().matmul_unchecked(&v))
        .symmetrized();
    Ok(GaussianPosterior { mean, cov })
}

/// Predictive mean and observation variance at each row of `x_star`.
pub fn cvtgp_predictive(
    x_star: &Matrix,
    cs: &Coreset,
    kp: &KernelParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_coreset_dim(x_star, cs)?;
    let t = plain_tempered(cs, kp)?;
    let kcx = rbf_matrix(&cs.inputs, x_star, kp)?;
    let v = linalg::solve_lower(&t.factor, &kcx)?;
    let (s2, noise) = (kp.outputscale(), kp.noise());
    let c = cs.size();
    let mut mean = Vec::with_capacity(x_star.rows());
    let mut var_y = Vec::with_capacity(x_star.rows());
    for j in 0..x_star.rows() {
        let mut m = 0.0;
        let mut explained = 0.0;
        for i in 0..c {
            m += kcx[(i, j)] * t.alpha[i];
            explained += v[(i, j)] * v[(i, j)];
        }
        mean.push(m);
        var_y.push((s2 - explained).max(0.0) + noise);
    }
    Ok((mean, var_y))
}
