//! Exact GP regression and the two inducing-point variational baselines.
//!
//! Each bound is written once against the [`Tape`] so the same expression
//! serves for evaluation and for gradients; the `f64` entry points record
//! their inputs as constants and read off the forward value.

use std::f64::consts::PI;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::kernels::{rbf_matrix, KernelParams, KernelVars};
use crate::linalg::{self, CholFactor, Matrix};
use crate::softplus::{inv_softplus, sigmoid, softplus};

/// Mean vector and covariance of a multivariate normal over function values.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl GaussianPosterior {
    pub fn variances(&self) -> Vec<f64> {
        self.cov.diag()
    }
}

/// Posterior over latent values plus the observation-level variance.
#[derive(Clone, Debug)]
pub struct Predictive {
    pub f: GaussianPosterior,
    pub var_y: Vec<f64>,
}

/// Free-form q(f_M) = N(m, S) with S = L_S·L_Sᵀ. The raw factor's strict
/// lower triangle is used as-is; its diagonal goes through softplus. The
/// upper triangle is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct InducingVariational {
    pub inducing: Matrix,
    pub mean: Vec<f64>,
    pub raw_cov_factor: Matrix,
}

impl InducingVariational {
    pub fn from_cov_factor(inducing: Matrix, mean: Vec<f64>, lower: &Matrix) -> Result<Self> {
        let m = inducing.rows();
        if mean.len() != m || lower.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                op: "InducingVariational",
                detail: format!(
                    "{m} inducing points, mean of {}, factor {:?}",
                    mean.len(),
                    lower.shape()
                ),
            });
        }
        let mut raw = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..i {
                raw[(i, j)] = lower[(i, j)];
            }
            raw[(i, i)] = inv_softplus(lower[(i, i)])?;
        }
        Ok(Self {
            inducing,
            mean,
            raw_cov_factor: raw,
        })
    }

    /// q(f_M) equal to the prior: m = 0, S = K_MM.
    pub fn prior(inducing: Matrix, kp: &KernelParams) -> Result<Self> {
        let kmm = rbf_matrix(&inducing, &inducing, kp)?;
        let f = linalg::cholesky_default(&kmm)?;
        let m = inducing.rows();
        Self::from_cov_factor(inducing, vec![0.0; m], f.lower())
    }

    pub fn num_inducing(&self) -> usize {
        self.inducing.rows()
    }

    pub fn cov_factor(&self) -> Matrix {
        let m = self.num_inducing();
        let mut l = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..i {
                l[(i, j)] = self.raw_cov_factor[(i, j)];
            }
            l[(i, i)] = softplus(self.raw_cov_factor[(i, i)]);
        }
        l
    }

    pub fn cov(&self) -> Matrix {
        let l = self.cov_factor();
        l.matmul_unchecked(&l.transpose())
    }
}

/// Builds L_S on the tape from its raw parameterization.
pub(crate) fn cov_factor_on_tape<'t>(raw: Var<'t>) -> Var<'t> {
    let m = raw.shape().0;
    let mut mask = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..i {
            mask[(i, j)] = 1.0;
        }
    }
    let strict = raw.mul(raw.tape().constant(mask));
    strict.add(raw.diag_part().softplus().diag_embed())
}

pub(crate) fn check_targets(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::TooFewRows { needed: 1, have: 0 });
    }
    Ok(())
}

fn check_same_dim(a: &Matrix, b: &Matrix, op: &'static str) -> Result<()> {
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            op,
            detail: format!("input dimension {} vs {}", a.cols(), b.cols()),
        });
    }
    Ok(())
}

/// Σ_b log N(y_b | μ_b, σ²) from the summed squared residual.
pub(crate) fn gaussian_loglik_sum<'t>(resid_sq: Var<'t>, count: usize, noise: Var<'t>) -> Var<'t> {
    let norm = noise.scale(2.0 * PI).ln().scale(-0.5 * count as f64);
    norm.sub(resid_sq.mul(noise.recip()).scale(0.5))
}

fn identity_times<'t>(tape: &'t Tape, n: usize, s: Var<'t>) -> Var<'t> {
    tape.constant(Matrix::identity(n)).mul(s)
}

/// log N(y | 0, σ²I + K_XX) on the tape; `y` is an N×1 column.
pub fn exact_log_marginal_on_tape<'t>(
    x: Var<'t>,
    y: Var<'t>,
    kv: &KernelVars<'t>,
) -> Result<Var<'t>> {
    let tape = x.tape();
    let n = x.shape().0;
    let a = kv.rbf(x, x).add(identity_times(tape, n, kv.noise));
    let alpha = a.solve_psd(y)?;
    let quad = y.dot(alpha);
    let logdet = a.logdet_psd()?;
    Ok(logdet
        .add(quad)
        .scale(-0.5)
        .offset(-0.5 * n as f64 * (2.0 * PI).ln()))
}

pub fn exact_log_marginal(x: &Matrix, y: &[f64], kp: &KernelParams) -> Result<f64> {
    check_targets(x, y)?;
    let tape = Tape::new();
    let kv = KernelVars::constant(&tape, kp);
    let v = exact_log_marginal_on_tape(tape.constant(x.clone()), tape.constant(Matrix::column(y)), &kv)?;
    Ok(v.scalar_value())
}

/// A fitted exact GP: factor of σ²I + K_XX and the weights (σ²I + K)⁻¹y.
pub struct ExactGp {
    x: Matrix,
    kp: KernelParams,
    sq_dist: Matrix,
    kernel: Matrix,
    factor: CholFactor,
    alpha: Vec<f64>,
    y: Vec<f64>,
}

impl ExactGp {
    pub fn fit(x: &Matrix, y: &[f64], kp: &KernelParams) -> Result<Self> {
        check_targets(x, y)?;
        let sq_dist = crate::autodiff::sq_dist(x, x)?;
        let (s2, l) = (kp.outputscale(), kp.lengthscale());
        let inv = 1.0 / (2.0 * l * l);
        let kernel = sq_dist.map(|r2| s2 * (-r2 * inv).exp());
        let factor = linalg::cholesky_default(&kernel.add_diag(kp.noise()))?;
        let alpha = linalg::solve_psd_vec(&factor, y)?;
        Ok(Self {
            x: x.clone(),
            kp: *kp,
            sq_dist,
            kernel,
            factor,
            alpha,
            y: y.to_vec(),
        })
    }

    pub fn log_marginal(&self) -> f64 {
        let n = self.y.len() as f64;
        let quad: f64 = self.y.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        -0.5 * n * (2.0 * PI).ln() - 0.5 * linalg::logdet_psd(&self.factor) - 0.5 * quad
    }

    /// Gradient of the log marginal with respect to the raw (pre-softplus)
    /// lengthscale, outputscale and noise: ½·tr((ααᵀ − A⁻¹)·∂A).
    pub fn raw_gradient(&self) -> [f64; 3] {
        let w = linalg::inverse_psd(&self.factor);
        let (l, s2) = (self.kp.lengthscale(), self.kp.outputscale());
        let n = self.alpha.len();
        let (mut g_l, mut g_s, mut g_n) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (wi, ki, ri) = (w.row(i), self.kernel.row(i), self.sq_dist.row(i));
            let ai = self.alpha[i];
            for j in 0..n {
                let e = (ai * self.alpha[j] - wi[j]) * ki[j];
                g_s += e;
                g_l += e * ri[j];
            }
            g_n += ai * ai - wi[i];
        }
        [
            0.5 * g_l / (l * l * l) * sigmoid(self.kp.raw_lengthscale),
            0.5 * g_s / s2 * sigmoid(self.kp.raw_outputscale),
            0.5 * g_n * sigmoid(self.kp.raw_noise),
        ]
    }

    pub fn predict_mean(&self, x_star: &Matrix) -> Result<Vec<f64>> {
        check_same_dim(x_star, &self.x, "predict_mean")?;
        let ks = rbf_matrix(x_star, &self.x, &self.kp)?;
        Ok((0..ks.rows())
            .map(|i| linalg::dot(ks.row(i), &self.alpha))
            .collect())
    }

    /// Predictive mean and observation variance without the full covariance.
    pub fn predict(&self, x_star: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let mean = self.predict_mean(x_star)?;
        let k_xs = rbf_matrix(&self.x, x_star, &self.kp)?;
        let v = linalg::solve_lower(&self.factor, &k_xs)?;
        let (s2, noise) = (self.kp.outputscale(), self.kp.noise());
        let mut var_y = vec![0.0; x_star.rows()];
        for i in 0..v.rows() {
            for (acc, e) in var_y.iter_mut().zip(v.row(i)) {
                *acc += e * e;
            }
        }
        for v in &mut var_y {
            *v = (s2 - *v).max(0.0) + noise;
        }
        Ok((mean, var_y))
    }

    pub fn posterior(&self, x_star: &Matrix) -> Result<Predictive> {
        check_same_dim(x_star, &self.x, "posterior")?;
        let mean = self.predict_mean(x_star)?;
        let k_xs = rbf_matrix(&self.x, x_star, &self.kp)?;
        let v = linalg::solve_lower(&self.factor, &k_xs)?;
        let cov = rbf_matrix(x_star, x_star, &self.kp)?.sub(&v.transpose().matmul_unchecked(&v));
        let noise = self.kp.noise();
        let var_y = cov.diag().iter().map(|v| v + noise).collect();
        Ok(Predictive {
            f: GaussianPosterior { mean, cov },
            var_y,
        })
    }
}

pub fn exact_posterior_predictive(
    x_star: &Matrix,
    x: &Matrix,
    y: &[f64],
    kp: &KernelParams,
) -> Result<Predictive> {
    ExactGp::fit(x, y, kp)?.posterior(x_star)
}

/// Collapsed bound: log N(y | 0, σ²I + Q) − tr(K_XX − Q)/(2σ²) with
/// Q = K_XM K_MM⁻¹ K_MX, evaluated in O(NM²) through the M×M matrix
/// A = K_MM + σ⁻²K_MX K_XM.
pub fn titsias_bound_on_tape<'t>(
    x: Var<'t>,
    y: Var<'t>,
    inducing: Var<'t>,
    kv: &KernelVars<'t>,
) -> Result<Var<'t>> {
    let n = x.shape().0 as f64;
    let kmm = kv.rbf(inducing, inducing);
    let kmx = kv.rbf(inducing, x);
    let inv_noise = kv.noise.recip();
    let a = kmm.add(kmx.matmul(kmx.t()).mul(inv_noise));
    let b = kmx.matmul(y);
    let logdet = kv
        .noise
        .ln()
        .scale(n)
        .add(a.logdet_psd()?)
        .sub(kmm.logdet_psd()?);
    let quad = y
        .dot(y)
        .mul(inv_noise)
        .sub(b.dot(a.solve_psd(b)?).mul(inv_noise.square()));
    let loglik = logdet
        .add(quad)
        .scale(-0.5)
        .offset(-0.5 * n * (2.0 * PI).ln());
    let trace_q = kmx.dot(kmm.solve_psd(kmx)?);
    let trace_gap = kv.outputscale.scale(n).sub(trace_q);
    Ok(loglik.sub(trace_gap.mul(inv_noise).scale(0.5)))
}

pub fn titsias_bound(x: &Matrix, y: &[f64], inducing: &Matrix, kp: &KernelParams) -> Result<f64> {
    check_targets(x, y)?;
    check_same_dim(x, inducing, "titsias_bound")?;
    let tape = Tape::new();
    let kv = KernelVars::constant(&tape, kp);
    let v = titsias_bound_on_tape(
        tape.constant(x.clone()),
        tape.constant(Matrix::column(y)),
        tape.constant(inducing.clone()),
        &kv,
    )?;
    Ok(v.scalar_value())
}

/// Predictive moments under the optimal collapsed q(f_M).
pub fn titsias_predictive(
    x_star: &Matrix,
    x: &Matrix,
    y: &[f64],
    inducing: &Matrix,
    kp: &KernelParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_targets(x, y)?;
    check_same_dim(x, inducing, "titsias_predictive")?;
    check_same_dim(x_star, inducing, "titsias_predictive")?;
    let noise = kp.noise();
    let kmm = rbf_matrix(inducing, inducing, kp)?;
    let kmx = rbf_matrix(inducing, x, kp)?;
    let ksm = rbf_matrix(x_star, inducing, kp)?;
    let a = kmm.add(&kmx.matmul_unchecked(&kmx.transpose()).scale(1.0 / noise));
    let fa = linalg::cholesky_default(&a)?;
    let fk = linalg::cholesky_default(&kmm)?;
    let b: Vec<f64> = (0..kmx.rows())
        .map(|i| linalg::dot(kmx.row(i), y) / noise)
        .collect();
    let w = linalg::solve_psd_vec(&fa, &b)?;
    let mean = (0..ksm.rows()).map(|i| linalg::dot(ksm.row(i), &w)).collect();
    let kms = ksm.transpose();
    let va = linalg::solve_lower(&fa, &kms)?;
    let vk = linalg::solve_lower(&fk, &kms)?;
    let s2 = kp.outputscale();
    let var_y = (0..x_star.rows())
        .map(|j| {
            let col_sq = |m: &Matrix| (0..m.rows()).map(|i| m[(i, j)] * m[(i, j)]).sum::<f64>();
            (s2 - col_sq(&vk) + col_sq(&va)).max(0.0) + noise
        })
        .collect();
    Ok((mean, var_y))
}

/// SVGP bound on a batch, with the data term rescaled by `n_total / B`.
/// `mean` is M×1 and `raw_cov_factor` M×M.
pub fn svgp_bound_on_tape<'t>(
    x_batch: Var<'t>,
    y_batch: Var<'t>,
    inducing: Var<'t>,
    mean: Var<'t>,
    raw_cov_factor: Var<'t>,
    kv: &KernelVars<'t>,
    n_total: usize,
) -> Result<Var<'t>> {
    let b = x_batch.shape().0;
    let m = inducing.shape().0;
    let kmm = kv.rbf(inducing, inducing);
    let kmb = kv.rbf(inducing, x_batch);
    let a = kmm.solve_psd(kmb)?;
    let mu = a.t().matmul(mean);
    let resid = y_batch.sub(mu);
    let lcov = cov_factor_on_tape(raw_cov_factor);
    let la = lcov.t().matmul(a);
    let nystrom_gap = kv.outputscale.scale(b as f64).sub(kmb.dot(a));
    let s_term = la.dot(la);
    let penalty = nystrom_gap.add(s_term).mul(kv.noise.recip()).scale(0.5);
    let data = gaussian_loglik_sum(resid.dot(resid), b, kv.noise).sub(penalty);
    let data = data.scale(n_total as f64 / b as f64);

    let trace = kmm.solve_psd(lcov)?.dot(lcov);
    let maha = mean.dot(kmm.solve_psd(mean)?);
    let logdet_s = lcov.diag_part().ln().sum().scale(2.0);
    let kl = trace
        .offset(-(m as f64))
        .add(maha)
        .add(kmm.logdet_psd()?)
        .sub(logdet_s)
        .scale(0.5);
    Ok(data.sub(kl))
}

pub fn svgp_bound(
    x_batch: &Matrix,
    y_batch: &[f64],
    iv: &InducingVariational,
    kp: &KernelParams,
    n_total: usize,
) -> Result<f64> {
    check_targets(x_batch, y_batch)?;
    check_same_dim(x_batch, &iv.inducing, "svgp_bound")?;
    if n_total < y_batch.len() {
        return Err(Error::InvalidConfig(format!(
            "n_total {n_total} smaller than batch {}",
            y_batch.len()
        )));
    }
    let tape = Tape::new();
    let kv = KernelVars::constant(&tape, kp);
    let v = svgp_bound_on_tape(
        tape.constant(x_batch.clone()),
        tape.constant(Matrix::column(y_batch)),
        tape.leaf(iv.inducing.clone()),
        tape.column(&iv.mean),
        tape.leaf(iv.raw_cov_factor.clone()),
        &kv,
        n_total,
    )?;
    Ok(v.scalar_value())
}

pub fn svgp_predictive(
    x_star: &Matrix,
    iv: &InducingVariational,
    kp: &KernelParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_same_dim(x_star, &iv.inducing, "svgp_predictive")?;
    let kmm = rbf_matrix(&iv.inducing, &iv.inducing, kp)?;
    let kms = rbf_matrix(&iv.inducing, x_star, kp)?;
    let f = linalg::cholesky_default(&kmm)?;
    let a = linalg::solve_psd(&f, &kms)?;
    let la = iv.cov_factor().transpose().matmul_unchecked(&a);
    let (s2, noise) = (kp.outputscale(), kp.noise());
    let m = iv.num_inducing();
    let mut mean = Vec::with_capacity(x_star.rows());
    let mut var_y = Vec::with_capacity(x_star.rows());
    for j in 0..x_star.rows() {
        let mut mu = 0.0;
        let mut nys = 0.0;
        let mut s = 0.0;
        for i in 0..m {
            mu += a[(i, j)] * iv.mean[i];
            nys += kms[(i, j)] * a[(i, j)];
            s += la[(i, j)] * la[(i, j)];
        }
        mean.push(mu);
        var_y.push((s2 - nys).max(0.0) + s + noise);
    }
    Ok((mean, var_y))
}

/// KL(N(m, L_S L_Sᵀ) ‖ N(0, K_MM)) given the Cholesky factor of K_MM.
pub fn gaussian_kl_full(mean: &[f64], cov_factor: &Matrix, kmm: &CholFactor) -> Result<f64> {
    let m = kmm.dim();
    if mean.len() != m || cov_factor.shape() != (m, m) {
        return Err(Error::DimensionMismatch {
            op: "gaussian_kl_full",
            detail: format!(
                "K_MM is {m}x{m}, mean has {}, factor is {:?}",
                mean.len(),
                cov_factor.shape()
            ),
        });
    }
    let kinv_l = linalg::solve_psd(kmm, cov_factor)?;
    let trace: f64 = kinv_l
        .as_slice()
        .iter()
        .zip(cov_factor.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    let kinv_m = linalg::solve_psd_vec(kmm, mean)?;
    let maha = linalg::dot(mean, &kinv_m);
    let logdet_s = 2.0 * cov_factor.diag().iter().map(|d| d.abs().ln()).sum::<f64>();
    Ok(0.5 * (trace - m as f64 + maha + linalg::logdet_psd(kmm) - logdet_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::new(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let y = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        (x, y)
    }

    #[test]
    fn single_point_log_marginal() {
        let kp = KernelParams::new(1.0, 1.0, 1.0).unwrap();
        let x = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let v = exact_log_marginal(&x, &[0.0], &kp).unwrap();
        assert!((v - (-0.5 * (4.0 * PI).ln())).abs() < 1e-12);
        assert!((v + 1.265512).abs() < 1e-6);
    }

    #[test]
    fn zero_targets_leave_only_logdet() {
        let kp = KernelParams::new(0.8, 1.3, 0.4).unwrap();
        let (x, _) = instance(6, 2, 1);
        let a = rbf_matrix(&x, &x, &kp).unwrap().add_diag(kp.noise());
        let ld = linalg::logdet_psd(&linalg::cholesky(&a, 0.0).unwrap());
        let v = exact_log_marginal(&x, &[0.0; 6], &kp).unwrap();
        assert!((v - (-3.0 * (2.0 * PI).ln() - 0.5 * ld)).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_agrees_with_tape_value() {
        let kp = KernelParams::new(0.7, 1.1, 0.3).unwrap();
        let (x, y) = instance(9, 1, 2);
        let a = exact_log_marginal(&x, &y, &kp).unwrap();
        let b = ExactGp::fit(&x, &y, &kp).unwrap().log_marginal();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn noiseless_interpolation() {
        let kp = KernelParams::new(0.5, 1.0, 1e-12).unwrap();
        let x = Matrix::from_rows(&[vec![-1.0], vec![0.0], vec![1.2]]).unwrap();
        let y = [0.3, -0.8, 1.1];
        let p = exact_posterior_predictive(&x, &x, &y, &kp).unwrap();
        for i in 0..3 {
            assert!((p.f.mean[i] - y[i]).abs() < 1e-5);
            assert!(p.f.cov[(i, i)].abs() < 1e-5);
        }
    }

    #[test]
    fn prior_reversion_far_from_data() {
        let kp = KernelParams::new(0.5, 2.0, 0.1).unwrap();
        let (x, y) = instance(5, 1, 3);
        let far = Matrix::from_rows(&[vec![100.0]]).unwrap();
        let p = exact_posterior_predictive(&far, &x, &y, &kp).unwrap();
        assert!(p.f.mean[0].abs() < 1e-12);
        assert!((p.f.cov[(0, 0)] - 2.0).abs() < 1e-10);
        assert!((p.var_y[0] - 2.1).abs() < 1e-10);
    }

    #[test]
    fn titsias_with_all_data_as_inducing_is_exact() {
        let kp = KernelParams::new(0.6, 1.2, 0.25).unwrap();
        let (x, y) = instance(8, 1, 4);
        let exact = exact_log_marginal(&x, &y, &kp).unwrap();
        let t = titsias_bound(&x, &y, &x, &kp).unwrap();
        assert!((exact - t).abs() < 1e-7, "{exact} {t}");
    }

    #[test]
    fn svgp_kl_vanishes_at_prior() {
        let kp = KernelParams::new(0.9, 1.5, 0.2).unwrap();
        let (x, y) = instance(7, 2, 5);
        let iv = InducingVariational::prior(x.select_rows(&[0, 2, 4]), &kp).unwrap();
        let kmm = rbf_matrix(&iv.inducing, &iv.inducing, &kp).unwrap();
        let f = linalg::cholesky_default(&kmm).unwrap();
        let kl = gaussian_kl_full(&iv.mean, &iv.cov_factor(), &f).unwrap();
        assert!(kl.abs() < 1e-12, "{kl}");
        // With the KL at zero the bound is exactly the rescaled data term.
        let full = svgp_bound(&x, &y, &iv, &kp, 7).unwrap();
        assert!(full.is_finite());
    }

    #[test]
    fn unit_gaussian_kl() {
        let f = linalg::cholesky(&Matrix::identity(1), 0.0).unwrap();
        let kl = gaussian_kl_full(&[1.0], &Matrix::identity(1), &f).unwrap();
        assert!((kl - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cov_factor_roundtrip() {
        let l = Matrix::from_rows(&[vec![1.5, 0.0], vec![-0.4, 0.2]]).unwrap();
        let iv = InducingVariational::from_cov_factor(Matrix::zeros(2, 1), vec![0.0; 2], &l).unwrap();
        assert!(iv.cov_factor().sub(&l).max_abs() < 1e-12);
        let tape = Tape::new();
        let on_tape = cov_factor_on_tape(tape.leaf(iv.raw_cov_factor.clone()));
        assert!(on_tape.value().sub(&l).max_abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let kp = KernelParams::new(1.0, 1.0, 1.0).unwrap();
        let x = Matrix::zeros(3, 1);
        assert!(matches!(
            exact_log_marginal(&x, &[0.0; 2], &kp),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(titsias_bound(&x, &[0.0; 3], &Matrix::zeros(2, 2), &kp).is_err());
    }
}
