use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative threshold on |R_ii| below which a column counts as dependent.
const RANK_TOL: f64 = 1e-10;

/// Least-squares coefficients for every column of `y` against `x` (Householder QR).
pub(crate) fn lstsq(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::SingularDesign(format!("{n} rows for {p} design columns")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    if let Some(col) = (0..p).find(|&i| !(r[(i, i)].abs() > RANK_TOL * scale)) {
        return Err(Error::SingularDesign(format!(
            "design column {col} is linearly dependent on earlier columns"
        )));
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let top = qty.rows(0, p).into_owned();
    r.solve_upper_triangular(&top)
        .ok_or_else(|| Error::SingularDesign("triangular solve failed".into()))
}

/// Residual sum of squares of each column of `y` after regression on `x`.
pub(crate) fn rss(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
    let b = lstsq(x, y)?;
    let resid = y - x * b;
    Ok(resid.column_iter().map(|c| c.norm_squared()).collect())
}
