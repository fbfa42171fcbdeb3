//! Independent reference computations used by integration and acceptance
//! tests. Nothing here calls into the library.

#![allow(dead_code)]

/// Ridge added to the covariance diagonals before inversion.
pub const CCA_RIDGE: f64 = 1e-12;

fn centered(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let m = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|v| v - m).collect()
        })
        .collect()
}

fn cov(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t = a[0].len() as f64;
    a.iter()
        .map(|ra| {
            b.iter()
                .map(|rb| ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>() / t)
                .collect()
        })
        .collect()
}

/// Lower-triangular L with L·Lᵀ = a.
fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).max(0.0).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Solves L·x = b for every column of `b` (forward substitution).
fn lower_solve(l: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = l.len();
    let cols = b[0].len();
    let mut x = vec![vec![0.0; cols]; n];
    for c in 0..cols {
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i][k] * x[k][c]).sum();
            x[i][c] = (b[i][c] - s) / l[i][i];
        }
    }
    x
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len())
        .map(|j| a.iter().map(|r| r[j]).collect())
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|r| {
            (0..b[0].len())
                .map(|j| r.iter().zip(b).map(|(x, rb)| x * rb[j]).sum())
                .collect()
        })
        .collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in m.iter_mut() {
                    let (mkp, mkq) = (row[p], row[q]);
                    row[p] = c * mkp - s * mkq;
                    row[q] = s * mkp + c * mkq;
                }
                #[allow(clippy::needless_range_loop)]
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Largest canonical correlation via the whitened generalized eigenproblem
/// `Lx⁻¹ Cxy Cyy⁻¹ Cyx Lx⁻ᵀ` on ridge-regularized covariances.
pub fn cca_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let (x, y) = (centered(x), centered(y));
    let mut cxx = cov(&x, &x);
    let mut cyy = cov(&y, &y);
    for (i, row) in cxx.iter_mut().enumerate() {
        row[i] += CCA_RIDGE;
    }
    for (i, row) in cyy.iter_mut().enumerate() {
        row[i] += CCA_RIDGE;
    }
    let cxy = cov(&x, &y);
    let lx = cholesky(&cxx);
    let ly = cholesky(&cyy);
    // K = Lx⁻¹ Cxy Ly⁻ᵀ; singular values of K are the canonical correlations.
    let a = lower_solve(&lx, &cxy);
    let k = transpose(&lower_solve(&ly, &transpose(&a)));
    let kkt = matmul(&k, &transpose(&k));
    let top = symmetric_eigenvalues(&kkt).into_iter().fold(0.0, f64::max);
    top.max(0.0).sqrt().min(1.0)
}

/// Exact two-sided acceptance region `[lo, hi]` for the number of successes
/// in `n` fair Bernoulli trials at confidence `1 − alpha`.
pub fn binomial_half_region(n: u64, alpha: f64) -> (u64, u64) {
    let ln_choose = |k: u64| -> f64 {
        (1..=k)
            .map(|i| ((n - k + i) as f64).ln() - (i as f64).ln())
            .sum()
    };
    let pmf: Vec<f64> = (0..=n)
        .map(|k| (ln_choose(k) - n as f64 * std::f64::consts::LN_2).exp())
        .collect();
    let mut lo = 0;
    let mut tail = 0.0;
    while tail + pmf[lo as usize] <= alpha / 2.0 {
        tail += pmf[lo as usize];
        lo += 1;
    }
    (lo, n - lo)
}

/// Direct O(n²) DFT magnitude.
pub fn dft_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}
