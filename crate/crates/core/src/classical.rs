//! Exact classical ridge regression and K-fold cross-validation.
//!
//! These routines are the ground truth every quantum estimate is compared
//! against. Fold and row indices are 0-based throughout.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, RMatrix, RVector, SvdFactors};

/// Scale metadata cached alongside a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Condition number `λ_max / λ_min` over the nonzero singular values.
    pub kappa: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub rank: usize,
    /// All `min(N, M)` singular values, descending.
    pub singular_values: Vec<f64>,
}

/// Design matrix `X` (N×M) and outputs `y` (N).
#[derive(Debug, Clone)]
pub struct Dataset {
    x: RMatrix,
    y: RVector,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(x: RMatrix, y: RVector) -> Result<Self> {
        let (n, m) = x.shape();
        if n < 2 || m < 1 {
            return Err(Error::Input(format!(
                "a dataset needs N >= 2 rows and M >= 1 columns, got {n}x{m}"
            )));
        }
        if y.len() != n {
            return Err(Error::Input(format!(
                "y has {} entries but X has {n} rows",
                y.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("y[{i}] is not finite")));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "X[{}, {}] is not finite",
                i % n,
                i / n
            )));
        }
        let meta = compute_meta(&x, &y)?;
        Ok(Self { x, y, meta })
    }

    pub fn x(&self) -> &RMatrix {
        &self.x
    }

    pub fn y(&self) -> &RVector {
        &self.y
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// `N + M`, the dimension of the dilated system register.
    pub fn nm(&self) -> usize {
        self.n() + self.m()
    }

    pub fn kappa(&self) -> f64 {
        self.meta.kappa
    }

    /// `κ` under the normalization `λ_j ∈ [(N+M)/κ, N+M]`, i.e.
    /// `(N+M) / λ_min`. Always at least the plain condition number when the
    /// spectrum respects that normalization.
    pub fn normalized_kappa(&self) -> f64 {
        let smallest = self.meta.singular_values[self.meta.rank - 1];
        self.nm() as f64 / smallest
    }

    /// Whether every nonzero singular value lies in `[(N+M)/κ, N+M]`.
    pub fn respects_spectrum_convention(&self) -> bool {
        self.meta.singular_values[0] <= self.nm() as f64 * (1.0 + 1e-12)
    }

    pub fn svd(&self) -> Result<SvdFactors<f64>> {
        numkit::svd(&self.x)
    }

    /// Recomputes the metadata from scratch and compares it with the cache.
    pub fn meta_consistent(&self) -> bool {
        compute_meta(&self.x, &self.y).is_ok_and(|m| m == self.meta)
    }
}

fn compute_meta(x: &RMatrix, y: &RVector) -> Result<DatasetMeta> {
    let f = numkit::svd(x)?;
    let kappa = match f.smallest_nonzero() {
        Some(s) => f.largest() / s,
        None => return Err(Error::Input("design matrix is identically zero".into())),
    };
    Ok(DatasetMeta {
        kappa,
        x_max: x.amax(),
        y_max: y.amax(),
        rank: f.rank,
        singular_values: f.singular_values.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub alpha: f64,
    pub w: RVector,
    /// `‖Xw − y‖²`.
    pub residual_sum: f64,
    /// Set when `y = 0` forced the trivial solution.
    pub zero_output: bool,
}

fn residual(x: &RMatrix, y: &RVector, w: &RVector) -> f64 {
    (x * w - y).norm_squared()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Input(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    Ok(())
}

fn normal_solve(x: &RMatrix, y: &RVector, alpha: f64) -> Option<RVector> {
    let m = x.ncols();
    let gram = x.transpose() * x + RMatrix::identity(m, m) * alpha;
    Cholesky::new(gram).map(|c| c.solve(&(x.transpose() * y)))
}

/// `w = (XᵀX + αI)⁻¹ Xᵀ y` through the normal equations.
pub fn solve_ridge_normal(d: &Dataset, alpha: f64) -> Result<RidgeSolution> {
    check_alpha(alpha)?;
    if alpha == 0.0 && d.meta.rank < d.m() {
        return Err(Error::Degenerate(format!(
            "XᵀX is singular at alpha = 0: rank {} < M = {}",
            d.meta.rank,
            d.m()
        )));
    }
    let w = normal_solve(&d.x, &d.y, alpha)
        .ok_or_else(|| Error::Degenerate("normal equations are not positive definite".into()))?;
    Ok(RidgeSolution {
        alpha,
        residual_sum: residual(&d.x, &d.y, &w),
        w,
        zero_output: false,
    })
}

/// Spectral form `w = Σ_j λ_j/(λ_j²+α) β_j ‖y‖ v_j` over the nonzero
/// singular triplets.
pub fn solve_ridge_svd(d: &Dataset, alpha: f64) -> Result<RidgeSolution> {
    check_alpha(alpha)?;
    let m = d.m();
    let y_norm = d.y.norm();
    if y_norm == 0.0 {
        return Ok(RidgeSolution {
            alpha,
            w: RVector::zeros(m),
            residual_sum: 0.0,
            zero_output: true,
        });
    }
    let f = d.svd()?;
    let mut w = RVector::zeros(m);
    for j in 0..f.rank {
        let lambda = f.singular_values[j];
        let beta = f.left_vectors.column(j).dot(&d.y) / y_norm;
        w += f.right_vectors.column(j) * (lambda / (lambda * lambda + alpha) * beta * y_norm);
    }
    Ok(RidgeSolution {
        alpha,
        residual_sum: residual(&d.x, &d.y, &w),
        w,
        zero_output: false,
    })
}

/// Training error and its spectral lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub error_sum: f64,
    pub lower_bound: f64,
    /// `Λ = max_j λ_j²/(λ_j²+α)`.
    pub lambda: f64,
}

/// `‖Xw − y‖² ≥ ‖y‖²(1 − Λ(2−Λ) Σ_{j≤R} β_j²)`.
pub fn predictive_error_bound(d: &Dataset, alpha: f64) -> Result<ErrorBound> {
    if !(alpha > 0.0) {
        return Err(Error::Input(format!("alpha must be > 0, got {alpha}")));
    }
    let sol = solve_ridge_svd(d, alpha)?;
    let f = d.svd()?;
    let y2 = d.y.norm_squared();
    let mut lambda_max: f64 = 0.0;
    let mut support = 0.0;
    for j in 0..f.rank {
        let l2 = f.singular_values[j].powi(2);
        lambda_max = lambda_max.max(l2 / (l2 + alpha));
        if y2 > 0.0 {
            support += f.left_vectors.column(j).dot(&d.y).powi(2) / y2;
        }
    }
    let lower = y2 * (1.0 - lambda_max * (2.0 - lambda_max) * support);
    if sol.residual_sum < lower - 1e-9 * y2.max(1.0) {
        return Err(Error::Contract(format!(
            "training error {} fell below its lower bound {lower}",
            sol.residual_sum
        )));
    }
    Ok(ErrorBound {
        error_sum: sol.residual_sum,
        lower_bound: lower,
        lambda: lambda_max,
    })
}

/// Contiguous folds; the last fold absorbs `N mod K` extra points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPartition {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPartition {
    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    /// Fold holding row `tau`.
    pub fn fold_of(&self, tau: usize) -> usize {
        self.folds
            .iter()
            .position(|f| f.contains(&tau))
            .expect("row outside the partition")
    }

    /// Fold index of every row.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for (l, fold) in self.folds.iter().enumerate() {
            for &tau in fold {
                out[tau] = l;
            }
        }
        out
    }

    pub fn equal_sized(&self) -> bool {
        self.folds.windows(2).all(|w| w[0].len() == w[1].len())
    }
}

pub fn partition_folds(n: usize, k: usize) -> Result<FoldPartition> {
    if k < 2 || k > n {
        return Err(Error::Input(format!(
            "need 2 <= K <= N, got K = {k}, N = {n}"
        )));
    }
    let size = n / k;
    let folds = (0..k)
        .map(|l| {
            let end = if l + 1 == k { n } else { (l + 1) * size };
            (l * size..end).collect()
        })
        .collect();
    Ok(FoldPartition { k, folds })
}

/// Held-out block and masked training data of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    /// Rows `S_l` of `X`.
    pub x_l: RMatrix,
    /// `X` with the rows `S_l` zeroed.
    pub x_minus_l: RMatrix,
    pub y_l: RVector,
    pub y_minus_l: RVector,
}

fn check_fold(p: &FoldPartition, l: usize) -> Result<()> {
    if l >= p.k {
        return Err(Error::Input(format!(
            "fold {l} out of range for K = {}",
            p.k
        )));
    }
    Ok(())
}

pub fn masked_design(d: &Dataset, p: &FoldPartition, l: usize) -> Result<FoldData> {
    check_fold(p, l)?;
    if p.n() != d.n() {
        return Err(Error::Input(format!(
            "partition covers {} rows, dataset has {}",
            p.n(),
            d.n()
        )));
    }
    let rows = &p.folds[l];
    let x_l = RMatrix::from_fn(rows.len(), d.m(), |r, c| d.x[(rows[r], c)]);
    let y_l = RVector::from_fn(rows.len(), |r, _| d.y[rows[r]]);
    let mut x_minus_l = d.x.clone();
    let mut y_minus_l = d.y.clone();
    for &tau in rows {
        x_minus_l.row_mut(tau).fill(0.0);
        y_minus_l[tau] = 0.0;
    }
    Ok(FoldData {
        x_l,
        x_minus_l,
        y_l,
        y_minus_l,
    })
}

/// `w_l = (X_{-l}ᵀX_{-l} + αI)⁻¹ X_{-l}ᵀ y_{-l}`.
pub fn fold_solution(
    d: &Dataset,
    p: &FoldPartition,
    l: usize,
    alpha: f64,
) -> Result<RidgeSolution> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Input(format!(
            "cross-validation requires alpha > 0, got {alpha}"
        )));
    }
    let fd = masked_design(d, p, l)?;
    let w = normal_solve(&fd.x_minus_l, &fd.y_minus_l, alpha)
        .ok_or_else(|| Error::Degenerate(format!("fold {l} system is not positive definite")))?;
    Ok(RidgeSolution {
        alpha,
        residual_sum: residual(&fd.x_minus_l, &fd.y_minus_l, &w),
        w,
        zero_output: false,
    })
}

/// Cross-validation error and its expansion terms at one `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvTerms {
    /// `E1 + E2 − 2·S3`.
    pub e: f64,
    /// `Σ_l ‖y_l − X_l w_l‖²` evaluated directly.
    pub e_direct: f64,
    /// `Σ_l ‖y_l‖²`.
    pub e1: f64,
    /// `Σ_l ‖X_l w_l‖²`.
    pub e2: f64,
    /// `Σ_l y_lᵀ X_l w_l`.
    pub s3: f64,
}

pub fn cv_error_exact(d: &Dataset, p: &FoldPartition, alpha: f64) -> Result<CvTerms> {
    let (mut e1, mut e2, mut s3, mut direct) = (0.0, 0.0, 0.0, 0.0);
    // Fixed left-to-right accumulation over folds.
    for l in 0..p.k {
        let fd = masked_design(d, p, l)?;
        let w = fold_solution(d, p, l, alpha)?.w;
        let pred = &fd.x_l * &w;
        e1 += fd.y_l.norm_squared();
        e2 += pred.norm_squared();
        s3 += fd.y_l.dot(&pred);
        direct += (&fd.y_l - &pred).norm_squared();
    }
    Ok(CvTerms {
        e: e1 + e2 - 2.0 * s3,
        e_direct: direct,
        e1,
        e2,
        s3,
    })
}

/// `L` uniformly spaced candidates from `alpha_min` to `alpha_max` inclusive.
pub fn alpha_grid(alpha_min: f64, alpha_max: f64, l: usize) -> Result<Vec<f64>> {
    if l == 0 {
        return Err(Error::Input("alpha grid needs at least one point".into()));
    }
    if !(alpha_min > 0.0 && alpha_min.is_finite()) {
        return Err(Error::Input(format!(
            "alpha_min must be > 0, got {alpha_min}"
        )));
    }
    if l == 1 {
        log::warn!("alpha grid with L = 1 degenerates to {{alpha_min}}");
        return Ok(vec![alpha_min]);
    }
    if !(alpha_max > alpha_min && alpha_max.is_finite()) {
        return Err(Error::Input(format!(
            "need alpha_min < alpha_max, got [{alpha_min}, {alpha_max}]"
        )));
    }
    let step = (alpha_max - alpha_min) / (l - 1) as f64;
    let mut grid: Vec<f64> = (0..l).map(|j| alpha_min + j as f64 * step).collect();
    grid[l - 1] = alpha_max;
    Ok(grid)
}

/// `[(N+M)²/(10κ²), (N+M)²/2]`.
pub fn default_alpha_range(nm: usize, kappa: f64) -> (f64, f64) {
    let nm2 = (nm * nm) as f64;
    (nm2 / (10.0 * kappa * kappa), nm2 / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCurve {
    pub alphas: Vec<f64>,
    pub e_values: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub s3: Vec<f64>,
    pub argmin_index: usize,
}

pub fn cv_curve(d: &Dataset, p: &FoldPartition, alphas: &[f64]) -> Result<CvCurve> {
    let terms = alphas
        .iter()
        .map(|&a| cv_error_exact(d, p, a))
        .collect::<Result<Vec<_>>>()?;
    let e_values: Vec<f64> = terms.iter().map(|t| t.e).collect();
    let argmin_index = argmin_prefer_larger(alphas, &e_values)?;
    Ok(CvCurve {
        alphas: alphas.to_vec(),
        e_values,
        e1: terms.iter().map(|t| t.e1).collect(),
        e2: terms.iter().map(|t| t.e2).collect(),
        s3: terms.iter().map(|t| t.s3).collect(),
        argmin_index,
    })
}

/// Index of the smallest error; equal errors resolve to the larger `α`.
pub(crate) fn argmin_prefer_larger(alphas: &[f64], errors: &[f64]) -> Result<usize> {
    if alphas.is_empty() || alphas.len() != errors.len() {
        return Err(Error::Input(
            "empty or mismatched cross-validation curve".into(),
        ));
    }
    let mut best = 0;
    for j in 1..alphas.len() {
        let better = errors[j] < errors[best];
        let tie = errors[j] == errors[best] && alphas[j] > alphas[best];
        if better || tie {
            best = j;
        }
    }
    Ok(best)
}

/// `(α̂, index)` minimizing the cross-validation error.
pub fn select_alpha(curve: &CvCurve) -> Result<(f64, usize)> {
    let idx = argmin_prefer_larger(&curve.alphas, &curve.e_values)?;
    Ok((curve.alphas[idx], idx))
}

/// `Σ y_j² / (N ‖y‖²_max)`, in `(0, 1]`.
pub fn balancedness(y: &RVector) -> Result<f64> {
    let max = y.amax();
    if max == 0.0 {
        return Err(Error::Input("balancedness of a zero vector".into()));
    }
    Ok(y.norm_squared() / (y.len() as f64 * max * max))
}
