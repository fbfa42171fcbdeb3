use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are treated as null.
pub const RANK_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 60;

/// Largest canonical correlation between two multichannel signals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaResult {
    pub rho: f64,
}

/// Orthonormal vectors spanning a column space.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub cols: Vec<Vec<f64>>,
}

impl Basis {
    pub fn rank(&self) -> usize {
        self.cols.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-sided Jacobi SVD of the matrix whose columns are `cols`.
///
/// Returns the singular values and, for each, the rotated column (σ·u).
/// Columns are returned in input order, not sorted.
pub fn jacobi_svd(mut cols: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
    let n = cols.len();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0
                    || beta == 0.0
                    || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = c * x - s * y;
                    *b = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    cols.into_iter().map(|c| (dot(&c, &c).sqrt(), c)).collect()
}

/// Orthonormal basis of the centered rows of `rows` (each a length-T signal).
///
/// Directions with singular value ≤ [`RANK_TOL`]·σmax are dropped. Returns
/// `None` when every row is constant.
pub fn centered_basis(rows: &[Vec<f64>]) -> Result<Option<Basis>> {
    let t = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || t == 0 {
        return Err(Error::Shape("CCA input has no rows or samples".into()));
    }
    if rows.iter().any(|r| r.len() != t) {
        return Err(Error::Shape("CCA rows have unequal lengths".into()));
    }
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mean = r.iter().sum::<f64>() / t as f64;
            r.iter().map(|v| v - mean).collect()
        })
        .collect();
    let svd = jacobi_svd(centered);
    let smax = svd.iter().map(|(s, _)| *s).fold(0.0, f64::max);
    if !smax.is_finite() {
        return Err(Error::Numeric("non-finite CCA input".into()));
    }
    if smax == 0.0 {
        return Ok(None);
    }
    let cols = svd
        .into_iter()
        .filter(|(s, _)| *s > RANK_TOL * smax)
        .map(|(s, c)| c.into_iter().map(|v| v / s).collect())
        .collect();
    Ok(Some(Basis { cols }))
}

/// Largest singular value of `QxᵀQy`, clamped to `[0, 1]`.
pub fn max_corr_from_bases(qx: &Basis, qy: &Basis) -> f64 {
    // Columns of the cross matrix are indexed by qy, rows by qx.
    let cross: Vec<Vec<f64>> = qy
        .cols
        .iter()
        .map(|y| qx.cols.iter().map(|x| dot(x, y)).collect())
        .collect();
    let s = jacobi_svd(cross)
        .into_iter()
        .map(|(s, _)| s)
        .fold(0.0, f64::max);
    s.clamp(0.0, 1.0)
}

/// Largest canonical correlation between the rows of `x` (Cx × T) and `y` (Cy × T).
///
/// Both blocks are centered; null directions are dropped. A block with no
/// variance yields ρ = 0.
pub fn cca_max_corr(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<CcaResult> {
    let t = x.first().map_or(0, Vec::len);
    if y.first().map_or(0, Vec::len) != t {
        return Err(Error::Shape(
            "CCA blocks have different sample counts".into(),
        ));
    }
    if t <= x.len() + y.len() {
        return Err(Error::Data(format!(
            "CCA needs more samples ({t}) than total rows ({})",
            x.len() + y.len()
        )));
    }
    let rho = match (centered_basis(x)?, centered_basis(y)?) {
        (Some(qx), Some(qy)) => max_corr_from_bases(&qx, &qy),
        _ => 0.0,
    };
    Ok(CcaResult { rho })
}
