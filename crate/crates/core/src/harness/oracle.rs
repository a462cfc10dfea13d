use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, EbmError, Result};
use crate::linalg::{spd_inverse, symmetrized};
use crate::posterior::{GaussianPosterior, SufficientStats};

/// Largest stacked dimension the joint oracle will factor.
pub const MAX_JOINT_DIM: usize = 200;

/// Exact posterior of one arm's stacked parameters `(β_k0, β_k1, …, β_kN)`,
/// built from the full joint precision matrix and inverted once.
///
/// Returns the shared-mean marginal and one marginal per instance.
pub fn oracle_joint_posterior(
    stats: &[SufficientStats],
    sigma: &DMatrix<f64>,
    sigma2: f64,
    lambda: f64,
) -> Result<(GaussianPosterior, Vec<GaussianPosterior>)> {
    let d = sigma.nrows();
    let n = stats.len();
    let size = d * (n + 1);
    if size > MAX_JOINT_DIM {
        return Err(EbmError::invalid(format!(
            "joint oracle dimension {size} exceeds {MAX_JOINT_DIM}"
        )));
    }
    if !(sigma2 > 0.0) || !(lambda > 0.0) {
        return Err(EbmError::invalid("sigma2 and lambda must be positive"));
    }
    for s in stats {
        check_dim("instance statistics", d, s.dim())?;
    }
    let sigma_inv = spd_inverse(sigma, "prior covariance")?;

    let mut precision = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);
    let mut top = precision.view_mut((0, 0), (d, d));
    top += DMatrix::<f64>::identity(d, d) * lambda + &sigma_inv * n as f64;
    for (j, s) in stats.iter().enumerate() {
        let o = d * (j + 1);
        precision.view_mut((0, o), (d, d)).copy_from(&(-&sigma_inv));
        precision.view_mut((o, 0), (d, d)).copy_from(&(-&sigma_inv));
        precision
            .view_mut((o, o), (d, d))
            .copy_from(&(&sigma_inv + s.gram() / sigma2));
        rhs.rows_mut(o, d).copy_from(&(s.xty() / sigma2));
    }

    let cov = symmetrized(spd_inverse(&precision, "joint precision")?);
    let mean = &cov * rhs;
    let block = |i: usize| {
        let o = d * i;
        GaussianPosterior::new(mean.rows(o, d).into_owned(), cov.view((o, o), (d, d)).into_owned())
    };
    let shared = block(0)?;
    let marginals = (1..=n).map(block).collect::<Result<Vec<_>>>()?;
    Ok((shared, marginals))
}
