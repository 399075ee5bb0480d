//! Squared-exponential (RBF) covariance with softplus-constrained
//! hyperparameters.
//!
//! k(a, b) = s²·exp(−‖a − b‖² / (2ℓ²)), with a single lengthscale shared
//! across input dimensions.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sq_dist, Tape, Var};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::softplus::{inv_softplus, softplus};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub raw_lengthscale: f64,
    pub raw_outputscale: f64,
    pub raw_noise: f64,
}

impl KernelParams {
    /// From constrained values ℓ, s², σ² (all must be positive).
    pub fn new(lengthscale: f64, outputscale: f64, noise: f64) -> Result<Self> {
        Ok(Self {
            raw_lengthscale: inv_softplus(lengthscale)?,
            raw_outputscale: inv_softplus(outputscale)?,
            raw_noise: inv_softplus(noise)?,
        })
    }

    pub fn lengthscale(&self) -> f64 {
        softplus(self.raw_lengthscale)
    }

    pub fn outputscale(&self) -> f64 {
        softplus(self.raw_outputscale)
    }

    pub fn noise(&self) -> f64 {
        softplus(self.raw_noise)
    }
}

pub fn rbf_matrix(a: &Matrix, b: &Matrix, kp: &KernelParams) -> Result<Matrix> {
    let d = sq_dist(a, b)?;
    let (s2, l) = (kp.outputscale(), kp.lengthscale());
    let inv = 1.0 / (2.0 * l * l);
    Ok(d.map(|r2| s2 * (-r2 * inv).exp()))
}

/// k(aᵢ, aᵢ) = s² for every row.
pub fn rbf_diag(a: &Matrix, kp: &KernelParams) -> Vec<f64> {
    vec![kp.outputscale(); a.rows()]
}

/// Kernel hyperparameters recorded on a tape, already mapped through softplus.
#[derive(Clone, Copy, Debug)]
pub struct KernelVars<'t> {
    pub lengthscale: Var<'t>,
    pub outputscale: Var<'t>,
    pub noise: Var<'t>,
}

impl<'t> KernelVars<'t> {
    /// From a 1×2 raw [lengthscale, outputscale] node and a 1×1 raw noise node.
    pub fn from_raw(kernel: Var<'t>, noise: Var<'t>) -> Self {
        Self {
            lengthscale: kernel.entry(0, 0).softplus(),
            outputscale: kernel.entry(0, 1).softplus(),
            noise: noise.softplus(),
        }
    }

    /// Records `kp` as constants.
    pub fn constant(tape: &'t Tape, kp: &KernelParams) -> Self {
        let kernel = tape.leaf(Matrix::from_raw(
            1,
            2,
            vec![kp.raw_lengthscale, kp.raw_outputscale],
        ));
        Self::from_raw(kernel, tape.scalar(kp.raw_noise))
    }

    /// Cross-covariance between the rows of `a` and `b`.
    pub fn rbf(&self, a: Var<'t>, b: Var<'t>) -> Var<'t> {
        let inv = self.lengthscale.square().scale(2.0).recip().neg();
        a.sq_dist(b).mul(inv).exp().mul(self.outputscale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::new(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn zero_distance_gives_outputscale() {
        let kp = KernelParams::new(0.7, 1.8, 0.1).unwrap();
        let a = Matrix::from_rows(&[vec![0.3, -1.0]]).unwrap();
        let k = rbf_matrix(&a, &a, &kp).unwrap();
        assert!((k[(0, 0)] - 1.8).abs() < 1e-14);
    }

    #[test]
    fn distance_sqrt2_lengthscale_gives_inverse_e() {
        let l = 0.6;
        let kp = KernelParams::new(l, 2.0, 0.1).unwrap();
        let a = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![kp.lengthscale() * 2f64.sqrt()]]).unwrap();
        let k = rbf_matrix(&a, &b, &kp).unwrap();
        assert!((k[(0, 0)] - kp.outputscale() * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn symmetric_and_consistent_diagonal() {
        let kp = KernelParams::new(1.2, 2.5, 0.1).unwrap();
        let a = random_inputs(5, 2, 3);
        let k = rbf_matrix(&a, &a, &kp).unwrap();
        assert_eq!(k, k.transpose());
        let d = rbf_diag(&a, &kp);
        assert!(d.iter().all(|&v| (v - kp.outputscale()).abs() < 1e-15));
        for (i, v) in d.iter().enumerate() {
            assert_eq!(k[(i, i)], *v);
        }
        let unit = KernelParams::new(1.2, 1.0, 0.1).unwrap();
        assert!(rbf_diag(&a, &unit).iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn mismatched_dimensions() {
        let kp = KernelParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(rbf_matrix(&Matrix::zeros(2, 2), &Matrix::zeros(2, 3), &kp).is_err());
    }

    #[test]
    fn positive_semidefinite_on_random_inputs() {
        let kp = KernelParams::new(0.8, 1.3, 0.1).unwrap();
        for seed in 0..10 {
            let a = random_inputs(20, 2, seed);
            let k = rbf_matrix(&a, &a, &kp).unwrap().add_diag(1e-8);
            assert!(crate::linalg::cholesky(&k, 0.0).is_ok(), "seed {seed}");
        }
    }

    #[test]
    fn stationarity_and_scale() {
        let kp = KernelParams::new(0.9, 1.5, 0.1).unwrap();
        let a = random_inputs(8, 3, 7);
        let shift = [3.0, -1.5, 0.25];
        let mut shifted = a.clone();
        for i in 0..8 {
            for (v, s) in shifted.row_mut(i).iter_mut().zip(shift) {
                *v += s;
            }
        }
        let k = rbf_matrix(&a, &a, &kp).unwrap();
        let ks = rbf_matrix(&shifted, &shifted, &kp).unwrap();
        assert!(k.sub(&ks).max_abs() < 1e-12);

        let kp2 = KernelParams {
            raw_outputscale: inv_softplus(kp.outputscale() * 4.0).unwrap(),
            ..kp
        };
        let k2 = rbf_matrix(&a, &a, &kp2).unwrap();
        let c = kp2.outputscale() / kp.outputscale();
        assert!(k2.sub(&k.scale(c)).max_abs() < 1e-14);
    }

    #[test]
    fn tape_kernel_matches_plain() {
        let kp = KernelParams::new(0.9, 1.4, 0.2).unwrap();
        let a = random_inputs(4, 2, 11);
        let b = random_inputs(3, 2, 12);
        let tape = Tape::new();
        let kv = KernelVars::constant(&tape, &kp);
        let k = kv.rbf(tape.leaf(a.clone()), tape.leaf(b.clone()));
        let plain = rbf_matrix(&a, &b, &kp).unwrap();
        assert!(k.value().sub(&plain).max_abs() < 1e-14);
        assert!((kv.noise.scalar_value() - 0.2).abs() < 1e-14);
    }
}
