//! Small dense least-squares helpers shared by the engine and the baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

/// Column-major design matrix from column vectors.
pub fn design(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let n = columns.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

/// Fails with the names of columns that are linear combinations of the
/// columns before them.
pub fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let (n, p) = scaled.shape();
    if n < p {
        return Err(Error::Rank {
            columns: names[n..].to_vec(),
        });
    }
    let r = scaled.qr().r();
    let dependent: Vec<String> = (0..p)
        .filter(|&j| r[(j, j)].abs() < RANK_TOL)
        .map(|j| names[j].clone())
        .collect();
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::Rank { columns: dependent })
    }
}

/// Weighted least squares `argmin sum w_i (y_i - x_i' b)^2` via QR of `sqrt(W) X`.
pub fn wls(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    let mut xs = x.clone();
    let mut ys = DVector::from_column_slice(y);
    if let Some(w) = w {
        for i in 0..n {
            let s = w[i].sqrt();
            for j in 0..p {
                xs[(i, j)] *= s;
            }
            ys[i] *= s;
        }
    }
    let qr = xs.qr();
    let qty = qr.q().transpose() * ys;
    let r = qr.r();
    let sol = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Rank { columns: vec![] })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Rank { columns: vec![] });
    }
    Ok(sol.iter().copied().collect())
}

/// `(X' W X)^-1`.
pub fn xtwx_inverse(x: &DMatrix<f64>, w: Option<&[f64]>, names: &[String]) -> Result<DMatrix<f64>> {
    let mut xw = x.clone();
    if let Some(w) = w {
        for (i, &wi) in w.iter().enumerate() {
            let s = wi.sqrt();
            for j in 0..x.ncols() {
                xw[(i, j)] *= s;
            }
        }
    }
    let info = xw.transpose() * &xw;
    match info.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => {
            check_rank(&xw, names)?;
            Err(Error::Rank {
                columns: names.to_vec(),
            })
        }
    }
}

pub fn mat_vec(x: &DMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let (n, p) = x.shape();
    (0..n).map(|i| (0..p).map(|j| x[(i, j)] * b[j]).sum()).collect()
}
