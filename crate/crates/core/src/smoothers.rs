//! Natural cubic smoothing splines.
//!
//! The fit minimizes `sum w_i (y_i - f(x_i))^2 + lambda * int f''(t)^2 dt`
//! over natural cubic splines with knots at the distinct `x` values. Tied
//! `x` values are collapsed into one knot carrying the summed weight and the
//! weighted mean response. The interior system `(R + lambda Q' W^-1 Q) gamma = Q' y`
//! is pentadiagonal. Its factor comes from a banded Givens QR of the
//! stacked square roots rather than from the product itself, so a fit costs
//! O(m) in the number of knots and stays accurate for clustered knots. The trace of the smoother map comes
//! from the band of the inverse of the same factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fitted natural cubic spline.
///
/// `values` and `second_derivs` hold `f` and `f''` at each knot; the
/// second derivative is zero at both boundary knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmootherFit {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub second_derivs: Vec<f64>,
    pub lambda: f64,
    pub edf: f64,
    #[serde(skip)]
    pub fitted: Vec<f64>,
}

/// Knot layout for one covariate: sorted distinct values and the knot index
/// of every observation.
#[derive(Debug, Clone)]
pub struct KnotMap {
    knots: Vec<f64>,
    index: Vec<usize>,
    h: Vec<f64>,
}

impl KnotMap {
    pub fn new(x: &[f64]) -> Result<Self> {
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::domain(&format!("x[{i}]"), v, "non-finite covariate"));
            }
        }
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut knots: Vec<f64> = Vec::new();
        let mut index = vec![0usize; x.len()];
        for &i in &order {
            if knots.last() != Some(&x[i]) {
                knots.push(x[i]);
            }
            index[i] = knots.len() - 1;
        }
        if knots.len() < 4 {
            return Err(Error::Degenerate(format!(
                "a cubic smoothing spline needs at least 4 distinct x values, got {}",
                knots.len()
            )));
        }
        let h = knots.windows(2).map(|p| p[1] - p[0]).collect();
        Ok(KnotMap { knots, index, h })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn n_obs(&self) -> usize {
        self.index.len()
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    /// Bind observation weights, producing a smoother ready to fit.
    pub fn with_weights(&self, weights: &[f64]) -> Result<WeightedSmoother<'_>> {
        if weights.len() != self.index.len() {
            return Err(Error::Schema(format!(
                "{} weights for {} observations",
                weights.len(),
                self.index.len()
            )));
        }
        let mut wk = vec![0.0; self.knots.len()];
        for (i, &w) in weights.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::domain(&format!("weights[{i}]"), w, "weights must be positive"));
            }
            wk[self.index[i]] += w;
        }
        Ok(WeightedSmoother {
            map: self,
            weights: weights.to_vec(),
            wk,
        })
    }
}

/// Band storage for a symmetric pentadiagonal matrix.
#[derive(Debug, Clone)]
struct Penta {
    d0: Vec<f64>,
    d1: Vec<f64>,
    #[allow(dead_code)]
    d2: Vec<f64>,
}

/// LDL' factor of a pentadiagonal matrix: `l1[i] = L[i][i-1]`, `l2[i] = L[i][i-2]`.
struct PentaLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl PentaLdl {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut z = b.to_vec();
        for i in 0..n {
            if i >= 1 {
                z[i] -= self.l1[i] * z[i - 1];
            }
            if i >= 2 {
                z[i] -= self.l2[i] * z[i - 2];
            }
        }
        for i in 0..n {
            z[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                z[i] -= self.l1[i + 1] * z[i + 1];
            }
            if i + 2 < n {
                z[i] -= self.l2[i + 2] * z[i + 2];
            }
        }
        z
    }

    /// Entries of the inverse within the band (Hutchinson & de Hoog recursion).
    fn inverse_band(&self) -> Penta {
        let n = self.d.len();
        let mut s0 = vec![0.0; n];
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        for i in (0..n).rev() {
            let a = if i + 1 < n { self.l1[i + 1] } else { 0.0 };
            let b = if i + 2 < n { self.l2[i + 2] } else { 0.0 };
            let s11 = if i + 1 < n { s0[i + 1] } else { 0.0 };
            let s22 = if i + 2 < n { s0[i + 2] } else { 0.0 };
            let s12 = if i + 1 < n { s1[i + 1] } else { 0.0 };
            if i + 2 < n {
                s2[i] = -a * s12 - b * s22;
            }
            if i + 1 < n {
                s1[i] = -a * s11 - b * s12;
            }
            s0[i] = 1.0 / self.d[i] - a * s1[i] - b * s2[i];
        }
        Penta { d0: s0, d1: s1, d2: s2 }
    }
}

/// A smoother with observation weights bound to a knot layout.
#[derive(Debug, Clone)]
pub struct WeightedSmoother<'a> {
    map: &'a KnotMap,
    weights: Vec<f64>,
    wk: Vec<f64>,
}

impl WeightedSmoother<'_> {
    fn q_cols(&self, j: usize) -> (f64, f64, f64) {
        let h = &self.map.h;
        (1.0 / h[j], -1.0 / h[j] - 1.0 / h[j + 1], 1.0 / h[j + 1])
    }

    /// Entry of `Q` in row `i` (knot) and column `c` (interior knot).
    fn q_entry(&self, i: usize, c: usize) -> f64 {
        let (q0, q1, q2) = self.q_cols(c);
        match i as isize - c as isize {
            0 => q0,
            1 => q1,
            2 => q2,
            _ => 0.0,
        }
    }

    /// Factor of `a R + b Q' W^-1 Q` from a banded Givens QR of the stacked
    /// matrix `[sqrt(a) L_R'; sqrt(b) W^-1/2 Q]`, where `R = L_R L_R'`.
    /// Forming the pentadiagonal product explicitly squares its condition
    /// number, which breaks down for clustered knots or many knots at heavy
    /// smoothing.
    fn qr_factor(&self, a: f64, b: f64) -> Result<PentaLdl> {
        let h = &self.map.h;
        let n = self.map.n_knots() - 2;
        let mut u = vec![[0.0f64; 3]; n];
        let mut filled = vec![false; n];
        let mut absorb = |mut lead: usize, mut r: [f64; 3]| {
            while lead < n {
                if r[0] == 0.0 {
                    r = [r[1], r[2], 0.0];
                    lead += 1;
                    if r == [0.0; 3] {
                        return;
                    }
                    continue;
                }
                if !filled[lead] {
                    u[lead] = r;
                    filled[lead] = true;
                    return;
                }
                let row = &mut u[lead];
                let rho = row[0].hypot(r[0]);
                let (c, s) = (row[0] / rho, r[0] / rho);
                let mut next = [0.0; 3];
                for k in 0..3 {
                    let (x, y) = (row[k], r[k]);
                    row[k] = c * x + s * y;
                    next[k] = c * y - s * x;
                }
                r = [next[1], next[2], 0.0];
                lead += 1;
            }
        };
        // Cholesky of the tridiagonal R
        let mut l0 = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        if a > 0.0 {
            for j in 0..n {
                let mut d = (h[j] + h[j + 1]) / 3.0;
                if j > 0 {
                    d -= l1[j - 1] * l1[j - 1];
                }
                l0[j] = d.sqrt();
                if j + 1 < n {
                    l1[j] = h[j + 1] / 6.0 / l0[j];
                }
            }
        }
        let sa = a.sqrt();
        let sb = b.sqrt();
        for c in 0..n {
            if a > 0.0 {
                absorb(c, [sa * l0[c], sa * l1[c], 0.0]);
            }
            let knots: &[usize] = if c == 0 { &[0, 1, 2] } else { &[c + 2] };
            for &i in knots {
                let scale = sb / self.wk[i].sqrt();
                let mut r = [0.0; 3];
                for (k, v) in r.iter_mut().enumerate() {
                    if c + k < n {
                        *v = scale * self.q_entry(i, c + k);
                    }
                }
                absorb(c, r);
            }
        }
        let mut d = vec![0.0; n];
        let mut ll1 = vec![0.0; n];
        let mut ll2 = vec![0.0; n];
        for j in 0..n {
            let p = u[j][0];
            if !(filled[j] && p != 0.0 && p.is_finite()) {
                return Err(Error::Degenerate("smoothing system is not positive definite".into()));
            }
            d[j] = p * p;
            if j + 1 < n {
                ll1[j + 1] = u[j][1] / p;
            }
            if j + 2 < n {
                ll2[j + 2] = u[j][2] / p;
            }
        }
        Ok(PentaLdl { d, l1: ll1, l2: ll2 })
    }

    /// Returns the factor of a scaled system plus whether it was scaled:
    /// for `lambda <= 1` the system is `R + lambda M`; above that
    /// `R / lambda + M`, which stays well defined up to `lambda = inf`.
    fn factor(&self, lambda: f64) -> Result<(PentaLdl, bool)> {
        if lambda <= 1.0 {
            Ok((self.qr_factor(1.0, lambda)?, false))
        } else {
            Ok((self.qr_factor(1.0 / lambda, 1.0)?, true))
        }
    }

    /// Trace of the smoother matrix at `lambda` (may be `f64::INFINITY`).
    pub fn trace(&self, lambda: f64) -> Result<f64> {
        check_lambda(lambda)?;
        let m = self.map.n_knots();
        if lambda == 0.0 {
            return Ok(m as f64);
        }
        if lambda.is_infinite() {
            return Ok(2.0);
        }
        // tr S = 2 + tr(R (R + lambda M)^-1); the scaled system is
        // (R + lambda M) / lambda.
        let (ldl, scaled) = self.factor(lambda)?;
        let inv = ldl.inverse_band();
        let h = &self.map.h;
        let n = m - 2;
        let mut acc = 0.0;
        for j in 0..n {
            acc += (h[j] + h[j + 1]) / 3.0 * inv.d0[j];
            if j + 1 < n {
                acc += 2.0 * h[j + 1] / 6.0 * inv.d1[j];
            }
        }
        Ok(2.0 + if scaled { acc / lambda } else { acc })
    }

    /// Weighted mean response at each knot.
    fn knot_means(&self, y: &[f64]) -> Vec<f64> {
        let mut yk = vec![0.0; self.map.n_knots()];
        for (i, &v) in y.iter().enumerate() {
            yk[self.map.index[i]] += self.weights[i] * v;
        }
        for (v, w) in yk.iter_mut().zip(&self.wk) {
            *v /= w;
        }
        yk
    }

    /// Fit at a fixed `lambda`. The reported `edf` is the smoother trace.
    pub fn fit(&self, y: &[f64], lambda: f64) -> Result<SmootherFit> {
        let mut fit = self.fit_values(y, lambda)?;
        fit.edf = self.trace(lambda)?;
        Ok(fit)
    }

    /// Like [`fit`](Self::fit) but skips the trace computation; `edf` is NaN.
    pub fn fit_values(&self, y: &[f64], lambda: f64) -> Result<SmootherFit> {
        check_lambda(lambda)?;
        if y.len() != self.map.n_obs() {
            return Err(Error::Schema(format!(
                "{} responses for {} observations",
                y.len(),
                self.map.n_obs()
            )));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::domain(&format!("y[{i}]"), v, "non-finite response"));
            }
        }
        let m = self.map.n_knots();
        let n = m - 2;
        let yk = self.knot_means(y);
        let qty: Vec<f64> = (0..n)
            .map(|j| {
                let (q0, q1, q2) = self.q_cols(j);
                q0 * yk[j] + q1 * yk[j + 1] + q2 * yk[j + 2]
            })
            .collect();
        let (ldl, scaled) = self.factor(lambda)?;
        let delta = ldl.solve(&qty);
        let mut values = yk.clone();
        if lambda > 0.0 {
            let coef = if scaled { 1.0 } else { lambda };
            for (i, v) in values.iter_mut().enumerate() {
                let mut qd = 0.0;
                if i >= 2 && i - 2 < n {
                    qd += self.q_cols(i - 2).2 * delta[i - 2];
                }
                if i >= 1 && i - 1 < n {
                    qd += self.q_cols(i - 1).1 * delta[i - 1];
                }
                if i < n {
                    qd += self.q_cols(i).0 * delta[i];
                }
                *v -= coef * qd / self.wk[i];
            }
        }
        let mut second_derivs = vec![0.0; m];
        if lambda.is_finite() {
            let scale = if scaled { 1.0 / lambda } else { 1.0 };
            for j in 0..n {
                second_derivs[j + 1] = delta[j] * scale;
            }
        }
        let fitted = self.map.index.iter().map(|&k| values[k]).collect();
        Ok(SmootherFit {
            knots: self.map.knots.clone(),
            values,
            second_derivs,
            lambda,
            edf: f64::NAN,
            fitted,
        })
    }

    /// Solve `trace(lambda) = target_edf`. `hint` seeds the bracket search.
    pub fn calibrate(&self, target_edf: f64, hint: Option<f64>) -> Result<f64> {
        let m = self.map.n_knots() as f64;
        if !(target_edf > 2.0 && target_edf <= m) {
            return Err(Error::domain("target_edf", target_edf, format!("must lie in (2, {m}]")));
        }
        if target_edf == m {
            return Ok(0.0);
        }
        let f = |log_lambda: f64| -> Result<f64> { Ok(self.trace(log_lambda.exp())? - target_edf) };
        let start = hint.filter(|h| h.is_finite() && *h > 0.0).unwrap_or(1.0).ln();
        let mut step = if hint.is_some() { 0.5 } else { 4.0 };
        let f0 = f(start)?;
        if f0 == 0.0 {
            return Ok(start.exp());
        }
        // trace decreases in lambda: move up while above target, down while below
        let dir = if f0 > 0.0 { 1.0 } else { -1.0 };
        let (mut lo, mut hi) = (start, start);
        let (mut flo, mut fhi) = (f0, f0);
        let mut found = false;
        for _ in 0..200 {
            let next = if dir > 0.0 { hi + step } else { lo - step };
            let fn_ = f(next)?;
            if dir > 0.0 {
                lo = hi;
                flo = fhi;
                hi = next;
                fhi = fn_;
                if fhi <= 0.0 {
                    found = true;
                    break;
                }
            } else {
                hi = lo;
                fhi = flo;
                lo = next;
                flo = fn_;
                if flo >= 0.0 {
                    found = true;
                    break;
                }
            }
            step *= 2.0;
        }
        if !found {
            return Err(Error::Degenerate(format!(
                "could not bracket a smoothing parameter for edf {target_edf}"
            )));
        }
        // Illinois false position on log(lambda), falling back to bisection.
        let mut side = 0i8;
        for _ in 0..200 {
            let mid = if flo.is_finite() && fhi.is_finite() && flo != fhi {
                let c = (lo * fhi - hi * flo) / (fhi - flo);
                if c > lo && c < hi {
                    c
                } else {
                    0.5 * (lo + hi)
                }
            } else {
                0.5 * (lo + hi)
            };
            let fm = f(mid)?;
            if fm.abs() < 1e-10 || (hi - lo) < 1e-13 {
                return Ok(mid.exp());
            }
            if fm > 0.0 {
                lo = mid;
                flo = fm;
                if side == 1 {
                    fhi *= 0.5;
                }
                side = 1;
            } else {
                hi = mid;
                fhi = fm;
                if side == -1 {
                    flo *= 0.5;
                }
                side = -1;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::domain("lambda", lambda, "must be nonnegative"));
    }
    Ok(())
}

fn check_lengths(x: &[f64], other: &[f64], what: &str) -> Result<()> {
    if x.len() != other.len() {
        return Err(Error::Schema(format!(
            "x has length {} but {what} has length {}",
            x.len(),
            other.len()
        )));
    }
    Ok(())
}

/// Fit a cubic smoothing spline at penalty `lambda`.
pub fn fit_cubic_spline(x: &[f64], y: &[f64], weights: &[f64], lambda: f64) -> Result<SmootherFit> {
    check_lengths(x, y, "y")?;
    check_lengths(x, weights, "weights")?;
    if x.len() < 4 {
        return Err(Error::Degenerate(format!(
            "need at least 4 observations, got {}",
            x.len()
        )));
    }
    let map = KnotMap::new(x)?;
    map.with_weights(weights)?.fit(y, lambda)
}

/// Penalty `lambda` whose smoother trace equals `target_edf`.
pub fn edf_to_lambda(x: &[f64], weights: &[f64], target_edf: f64) -> Result<f64> {
    check_lengths(x, weights, "weights")?;
    let map = KnotMap::new(x)?;
    map.with_weights(weights)?.calibrate(target_edf, None)
}

/// Evaluate a fitted spline at new points.
pub fn predict_spline(fit: &SmootherFit, x_new: &[f64]) -> Result<Vec<f64>> {
    x_new
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if x.is_finite() {
                Ok(fit.eval(x))
            } else {
                Err(Error::domain(&format!("x_new[{i}]"), x, "non-finite point"))
            }
        })
        .collect()
}

impl SmootherFit {
    fn interval(&self, x: f64) -> usize {
        let k = self.knots.partition_point(|&t| t <= x);
        k.saturating_sub(1).min(self.knots.len() - 2)
    }

    /// f(x); linear beyond the boundary knots.
    pub fn eval(&self, x: f64) -> f64 {
        let t = &self.knots;
        let m = t.len();
        if x < t[0] {
            return self.values[0] + (x - t[0]) * self.derivative(t[0]);
        }
        if x > t[m - 1] {
            return self.values[m - 1] + (x - t[m - 1]) * self.derivative(t[m - 1]);
        }
        if let Ok(k) = t.binary_search_by(|v| v.total_cmp(&x)) {
            return self.values[k];
        }
        let k = self.interval(x);
        let h = t[k + 1] - t[k];
        let a = x - t[k];
        let b = t[k + 1] - x;
        let (g0, g1) = (self.values[k], self.values[k + 1]);
        let (c0, c1) = (self.second_derivs[k], self.second_derivs[k + 1]);
        (a * g1 + b * g0) / h - a * b / 6.0 * ((1.0 + a / h) * c1 + (1.0 + b / h) * c0)
    }

    /// f'(x); constant beyond the boundary knots.
    pub fn derivative(&self, x: f64) -> f64 {
        let t = &self.knots;
        let m = t.len();
        let x = x.clamp(t[0], t[m - 1]);
        let k = self.interval(x);
        let h = t[k + 1] - t[k];
        let a = x - t[k];
        let b = t[k + 1] - x;
        let (g0, g1) = (self.values[k], self.values[k + 1]);
        let (c0, c1) = (self.second_derivs[k], self.second_derivs[k + 1]);
        (g1 - g0) / h + (c1 * (3.0 * a * a - h * h) - c0 * (3.0 * b * b - h * h)) / (6.0 * h)
    }

    /// `int f''(t)^2 dt`, exact for the piecewise-linear second derivative.
    pub fn roughness(&self) -> f64 {
        let t = &self.knots;
        let c = &self.second_derivs;
        (0..t.len() - 1)
            .map(|k| {
                let h = t[k + 1] - t[k];
                h / 3.0 * (c[k] * c[k] + c[k] * c[k + 1] + c[k + 1] * c[k + 1])
            })
            .sum()
    }

    /// Penalty contribution `lambda * int f''^2` (zero when `lambda` is 0 or infinite).
    pub fn penalty(&self) -> f64 {
        if self.lambda == 0.0 || !self.lambda.is_finite() {
            0.0
        } else {
            self.lambda * self.roughness()
        }
    }
}
