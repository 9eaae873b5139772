//! Small dense kernels used per grid point. Matrices are row-major slices.

#[allow(unused_imports)]
use num_traits::Float;

/// Euclidean dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `out = m * x` for an `rows x cols` matrix.
pub fn mat_vec(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o = dot(&m[r * cols..(r + 1) * cols], &x[..cols]);
    }
}

/// `x^T m x` for a square matrix.
pub fn quad_form(m: &[f64], n: usize, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        acc += x[i] * dot(&m[i * n..(i + 1) * n], x);
    }
    acc
}

/// Max-norm of the entrywise difference of two equally sized slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `ln y = slope ln x + intercept`. Needs at least two points with
/// distinct positive `x` and positive `y`; otherwise every field is NaN.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LogLogFit {
    let nan = LogLogFit { slope: f64::NAN, intercept: f64::NAN, r_squared: f64::NAN };
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return nan;
    }
    let n = x.len() as f64;
    let lx = x.iter().map(|v| v.ln());
    let ly = y.iter().map(|v| v.ln());
    let mx = lx.clone().sum::<f64>() / n;
    let my = ly.clone().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in lx.zip(ly) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return nan;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LogLogFit { slope, intercept: my - slope * mx, r_squared }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDeficient {
    pub column: usize,
    pub pivot: f64,
}

/// Least-squares solve of a tall system `k x = b` by Householder QR.
///
/// `k` is `rows x cols` (rows >= cols) and is overwritten by the factorization;
/// `b` holds `nrhs` right-hand sides as a `rows x nrhs` row-major block and is
/// overwritten by `Q^T b`. The solution is written to `x` (`cols x nrhs`).
/// A pivot smaller than `rows * eps * max_column_norm` is reported as rank loss.
pub fn householder_lstsq(
    k: &mut [f64],
    rows: usize,
    cols: usize,
    b: &mut [f64],
    nrhs: usize,
    x: &mut [f64],
) -> Result<(), RankDeficient> {
    debug_assert!(rows >= cols);
    debug_assert_eq!(k.len(), rows * cols);
    debug_assert_eq!(b.len(), rows * nrhs);
    debug_assert_eq!(x.len(), cols * nrhs);

    let mut scale: f64 = 0.0;
    for c in 0..cols {
        let s: f64 = (0..rows).map(|r| k[r * cols + c] * k[r * cols + c]).sum();
        scale = scale.max(s.sqrt());
    }
    let tol = rows as f64 * f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    for j in 0..cols {
        let norm = (j..rows)
            .map(|r| k[r * cols + j] * k[r * cols + j])
            .sum::<f64>()
            .sqrt();
        if norm <= tol {
            return Err(RankDeficient { column: j, pivot: norm });
        }
        let head = k[j * cols + j];
        let alpha = if head > 0.0 { -norm } else { norm };
        // v = (head - alpha, k[j+1..rows, j]); stored in place below the diagonal.
        k[j * cols + j] = head - alpha;
        let vtv: f64 = (j..rows).map(|r| k[r * cols + j] * k[r * cols + j]).sum();
        for c in (j + 1)..cols {
            let s: f64 = (j..rows).map(|r| k[r * cols + j] * k[r * cols + c]).sum();
            let f = 2.0 * s / vtv;
            for r in j..rows {
                k[r * cols + c] -= f * k[r * cols + j];
            }
        }
        for q in 0..nrhs {
            let s: f64 = (j..rows).map(|r| k[r * cols + j] * b[r * nrhs + q]).sum();
            let f = 2.0 * s / vtv;
            for r in j..rows {
                b[r * nrhs + q] -= f * k[r * cols + j];
            }
        }
        k[j * cols + j] = alpha;
    }

    for q in 0..nrhs {
        for j in (0..cols).rev() {
            let mut s = b[j * nrhs + q];
            for c in (j + 1)..cols {
                s -= k[j * cols + c] * x[c * nrhs + q];
            }
            x[j * nrhs + q] = s / k[j * cols + j];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn loglog_fit_recovers_power_law() {
        let x = [0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        let f = loglog_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(loglog_fit(&[1.0], &[1.0]).slope.is_nan());
        assert!(loglog_fit(&[1.0, 2.0], &[0.0, 1.0]).slope.is_nan());
    }

    #[test]
    fn square_system_is_solved_exactly() {
        let mut k = vec![4.0, 1.0, 2.0, 3.0];
        let mut b = vec![1.0, 2.0];
        let mut x = vec![0.0; 2];
        householder_lstsq(&mut k, 2, 2, &mut b, 1, &mut x).unwrap();
        // 4x + y = 1, 2x + 3y = 2
        assert!((x[0] - 0.1).abs() < 1e-14);
        assert!((x[1] - 0.6).abs() < 1e-14);
    }

    #[test]
    fn consistent_tall_system_has_zero_residual() {
        // rows: x = 1, y = 2, x + y = 3
        let mut k = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut b = vec![1.0, 2.0, 3.0];
        let mut x = vec![0.0; 2];
        householder_lstsq(&mut k, 3, 2, &mut b, 1, &mut x).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rank_loss_is_reported() {
        let mut k = vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let mut b = vec![0.0; 3];
        let mut x = vec![0.0; 2];
        let err = householder_lstsq(&mut k, 3, 2, &mut b, 1, &mut x).unwrap_err();
        assert_eq!(err.column, 1);
    }
}
