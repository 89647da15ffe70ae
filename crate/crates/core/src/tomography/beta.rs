use crate::error::{Error, Result};
use crate::mub::MubSet;
use crate::numerics::{frobenius_norm, svd_pseudoinverse, ComplexMatrix, DEFAULT_RANK_TOL};

/// Largest side length of beta that [`build_beta`] will decompose.
pub const MAX_BETA_SIDE: usize = 2000;

/// Tolerance on ||beta kappa beta - beta||_F.
pub const PINV_IDENTITY_TOL: f64 = 1e-8;

/// The (D^2+D)^2-square matrix of four-projector traces together with its
/// pseudoinverse.
///
/// Row `flat(g,l) * N + flat(e,s)` and column `flat(a,m) * N + flat(b,n)`
/// hold Tr(P_m^(a) P_l^(g) P_n^(b) P_s^(e)), N = D^2 + D.
#[derive(Clone, Debug)]
pub struct BetaMatrix {
    dim: usize,
    matrix: ComplexMatrix,
    kappa: ComplexMatrix,
    rank: usize,
    singular_values: Vec<f64>,
    pinv_residual: f64,
}

impl BetaMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// D^2 + D.
    pub fn num_projectors(&self) -> usize {
        self.dim * (self.dim + 1)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn kappa(&self) -> &ComplexMatrix {
        &self.kappa
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// ||beta kappa beta - beta||_F, computed once at construction.
    pub fn pinv_residual(&self) -> f64 {
        self.pinv_residual
    }
}

/// Four-projector trace entries from the Gram matrix of the rank-one
/// projectors: Tr(P_a P_b P_c P_d) = <a|b><b|c><c|d><d|a>.
pub fn beta_entries(set: &MubSet) -> Result<ComplexMatrix> {
    let n = set.num_projectors();
    let side = n * n;
    if side > MAX_BETA_SIDE {
        return Err(Error::UnsupportedDimension {
            dim: set.dim(),
            reason: format!("beta would be {side}x{side}, above the {MAX_BETA_SIDE} limit"),
        });
    }
    let g = set.gram();
    Ok(ComplexMatrix::from_fn(side, side, |row, col| {
        let (l, s) = (row / n, row % n);
        let (m, nn) = (col / n, col % n);
        g[(m, l)] * g[(l, nn)] * g[(nn, s)] * g[(s, m)]
    }))
}

pub fn build_beta(set: &MubSet) -> Result<BetaMatrix> {
    let matrix = beta_entries(set)?;
    let pinv = svd_pseudoinverse(&matrix, DEFAULT_RANK_TOL)?;
    let pinv_residual = frobenius_norm(&(&matrix * (&pinv.pinv * &matrix) - &matrix));
    log::debug!(
        "beta D={} side {} rank {} pinv residual {:.3e}",
        set.dim(),
        matrix.nrows(),
        pinv.rank,
        pinv_residual
    );
    Ok(BetaMatrix {
        dim: set.dim(),
        matrix,
        kappa: pinv.pinv,
        rank: pinv.rank,
        singular_values: pinv.singular_values,
        pinv_residual,
    })
}
