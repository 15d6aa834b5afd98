//! Closed-form bounds and their empirical checks.
//!
//! `h(λ, α) = (N+M) λ / (λ² + α)` and `g = h'/h = (α − λ²) / (λ (λ² + α))`
//! are studied on the normalized spectrum `λ ∈ [(N+M)/κ, N+M]`.

use serde::{Deserialize, Serialize};

use crate::classical::{self, Dataset, FoldPartition};
use crate::error::Result;
use crate::numkit::{self, RMatrix};

/// Constant of the `P_w = Ω(1/(κ'²κ²))` check, calibrated on the reference
/// family (random 4×3 to 8×6 designs, `K = 2..4`, default α range). The
/// smallest observed `P_w κ'² κ²` there was above 0.05.
pub const PW_OMEGA_CONSTANT: f64 = 0.01;

/// Relative slack used when comparing analytic and empirical values.
const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub analytic_value: f64,
    pub empirical_value: f64,
    pub satisfied: bool,
    /// Distance to the bound in its favourable direction.
    pub margin: f64,
    /// False when the instance falls outside the bound's hypotheses.
    pub applicable: bool,
}

impl BoundReport {
    /// `empirical <= analytic`.
    pub fn upper(name: &str, analytic: f64, empirical: f64) -> Self {
        let margin = analytic - empirical;
        Self {
            name: name.into(),
            analytic_value: analytic,
            empirical_value: empirical,
            satisfied: margin >= -SLACK * analytic.abs().max(empirical.abs()).max(1.0),
            margin,
            applicable: true,
        }
    }

    /// `empirical >= analytic`.
    pub fn lower(name: &str, analytic: f64, empirical: f64) -> Self {
        let margin = empirical - analytic;
        Self {
            name: name.into(),
            analytic_value: analytic,
            empirical_value: empirical,
            satisfied: margin >= -SLACK * analytic.abs().max(empirical.abs()).max(1.0),
            margin,
            applicable: true,
        }
    }

    pub fn not_applicable(name: &str) -> Self {
        Self {
            name: name.into(),
            analytic_value: 0.0,
            empirical_value: 0.0,
            satisfied: true,
            margin: 0.0,
            applicable: false,
        }
    }
}

pub fn h(lambda: f64, alpha: f64, nm: f64) -> f64 {
    nm * lambda / (lambda * lambda + alpha)
}

pub fn g(lambda: f64, alpha: f64) -> f64 {
    (alpha - lambda * lambda) / (lambda * (lambda * lambda + alpha))
}

/// `max h` over `[lo, hi]`: the peak sits at `λ = √α`.
pub fn h_max_interval(nm: f64, lo: f64, hi: f64, alpha: f64) -> f64 {
    h(alpha.sqrt().clamp(lo, hi), alpha, nm)
}

/// Three-case maximum of `h` over `[(N+M)/κ, N+M]`.
pub fn h_max(nm: usize, kappa: f64, alpha: f64) -> f64 {
    let nm = nm as f64;
    let nm2 = nm * nm;
    if alpha <= nm2 / (kappa * kappa) {
        nm2 * kappa / (nm2 + kappa * kappa * alpha)
    } else if alpha <= nm2 {
        nm / (2.0 * alpha.sqrt())
    } else {
        nm2 / (nm2 + alpha)
    }
}

/// `κ + 1/κ`, the bound on `max h / min h`.
pub fn h_ratio_bound(kappa: f64) -> f64 {
    kappa + 1.0 / kappa
}

/// `max h / min h` over a grid of `points` on `[(N+M)/κ, N+M]`.
pub fn h_ratio_empirical(nm: usize, kappa: f64, alpha: f64, points: usize) -> f64 {
    let nm = nm as f64;
    let (lo, hi) = (nm / kappa, nm);
    let (mut max, mut min) = (0.0f64, f64::INFINITY);
    for i in 0..points {
        let l = lo + (hi - lo) * i as f64 / (points - 1).max(1) as f64;
        let v = h(l, alpha, nm);
        max = max.max(v);
        min = min.min(v);
    }
    max / min
}

/// Peak of `|g|` beyond its root, `λ* = √((2+√5) α)`.
fn g_peak_location(alpha: f64) -> f64 {
    ((2.0 + 5f64.sqrt()) * alpha).sqrt()
}

/// `(1+√5) / (√(2+√5) (3+√5) √α) ≈ 0.3/√α`, the value of `|g(λ*)|`.
pub fn g_peak_value(alpha: f64) -> f64 {
    let r5 = 5f64.sqrt();
    (1.0 + r5) / ((2.0 + r5).sqrt() * (3.0 + r5) * alpha.sqrt())
}

/// `max |g|` over `[(N+M)/κ, N+M]`: the larger endpoint value, or the
/// interior peak at `λ*` when it lies inside the interval.
pub fn g_max(nm: usize, kappa: f64, alpha: f64) -> f64 {
    let nm = nm as f64;
    let (lo, hi) = (nm / kappa, nm);
    let mut best = g(lo, alpha).abs().max(g(hi, alpha).abs());
    let peak = g_peak_location(alpha);
    if (lo..=hi).contains(&peak) {
        best = best.max(g_peak_value(alpha));
    }
    best
}

/// The five-case list for `max |g|`, evaluated as printed. Returns every
/// branch value that applies at `α`, so breakpoints report both neighbours.
/// Valid only when `κ² >= 2 + √5`; [`g_max`] covers the general case.
pub fn g_max_cases(nm: usize, kappa: f64, alpha: f64) -> Vec<f64> {
    let nm = nm as f64;
    let nm2 = nm * nm;
    let k2 = kappa * kappa;
    let phi = 2.0 + 5f64.sqrt();
    let low_end = (nm2 * kappa - kappa.powi(3) * alpha) / (nm * (nm2 + k2 * alpha));
    let high_end = (nm2 - alpha) / (nm * (nm2 + alpha));
    let peak = g_peak_value(alpha);
    let b1 = nm2 / (phi * k2);
    let b2 = nm2 / k2;
    let b3 = nm2 / phi;
    let mut out = Vec::new();
    if alpha <= b1 {
        out.push(low_end);
    }
    if (b1..=b2).contains(&alpha) {
        out.push(peak);
    }
    if (b2..=b3).contains(&alpha) {
        out.push((-low_end).max(peak));
    }
    if (b3..=nm2).contains(&alpha) {
        out.push((-low_end).max(high_end));
    }
    if alpha >= nm2 {
        out.push(-low_end);
    }
    out
}

/// Maximum of `|g|` on a uniform grid, for checking the case formulas.
pub fn g_max_grid(nm: usize, kappa: f64, alpha: f64, points: usize) -> f64 {
    let nm = nm as f64;
    let (lo, hi) = (nm / kappa, nm);
    (0..points)
        .map(|i| g(lo + (hi - lo) * i as f64 / (points - 1) as f64, alpha).abs())
        .fold(0.0, f64::max)
}

pub fn h_max_grid(nm: usize, kappa: f64, alpha: f64, points: usize) -> f64 {
    let nmf = nm as f64;
    let (lo, hi) = (nmf / kappa, nmf);
    (0..points)
        .map(|i| h(lo + (hi - lo) * i as f64 / (points - 1) as f64, alpha, nmf))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylCheck {
    /// `λ_j² − ‖Σ_{i∈S_l} x_i x_iᵀ‖`.
    pub lower: Vec<f64>,
    /// `λ_j²`.
    pub upper: Vec<f64>,
    /// `λ_lj²`.
    pub actual: Vec<f64>,
    pub report: BoundReport,
}

/// Checks `λ_j² − ‖Σ_{i∈S_l} x_i x_iᵀ‖ <= λ_lj² <= λ_j²`, pairing both
/// spectra in descending order.
pub fn weyl_interval(d: &Dataset, p: &FoldPartition, l: usize) -> Result<WeylCheck> {
    let fd = classical::masked_design(d, p, l)?;
    let full = numkit::svd(d.x())?.singular_values;
    let masked = numkit::svd(&fd.x_minus_l)?.singular_values;
    let held: RMatrix = fd.x_l.transpose() * &fd.x_l;
    let shift = numkit::spectral_norm(&held)?;
    let upper: Vec<f64> = full.iter().map(|v| v * v).collect();
    let lower: Vec<f64> = upper.iter().map(|v| v - shift).collect();
    let actual: Vec<f64> = masked.iter().map(|v| v * v).collect();
    let scale = upper[0].max(1.0);
    let mut worst = f64::INFINITY;
    for j in 0..actual.len() {
        worst = worst.min(actual[j] - lower[j]).min(upper[j] - actual[j]);
    }
    let report = BoundReport {
        name: "weyl interval".into(),
        analytic_value: 0.0,
        empirical_value: worst,
        satisfied: worst >= -1e-10 * scale,
        margin: worst,
        applicable: true,
    };
    Ok(WeylCheck {
        lower,
        upper,
        actual,
        report,
    })
}

/// `ceil(N M ‖X‖²_max κ² / (N+M)²)`, clamped to `[2, N]`.
pub fn k_min_recommendation(d: &Dataset) -> usize {
    let (n, m) = (d.n() as f64, d.m() as f64);
    let x_max = d.meta().x_max;
    let raw = (n * m * x_max * x_max * d.kappa().powi(2) / (n + m).powi(2)).ceil();
    (raw.max(2.0) as usize).min(d.n())
}

/// `κ' = (N+M) / min_l λ_min(X_{-l})`.
pub fn fold_kappa(d: &Dataset, p: &FoldPartition) -> Result<f64> {
    let mut smallest = f64::INFINITY;
    for l in 0..p.k {
        let fd = classical::masked_design(d, p, l)?;
        let f = numkit::svd(&fd.x_minus_l)?;
        if let Some(s) = f.smallest_nonzero() {
            smallest = smallest.min(s);
        }
    }
    Ok(d.nm() as f64 / smallest)
}

/// Largest singular value over all masked designs.
pub fn fold_lambda_max(d: &Dataset, p: &FoldPartition) -> Result<f64> {
    let mut largest: f64 = 0.0;
    for l in 0..p.k {
        let fd = classical::masked_design(d, p, l)?;
        largest = largest.max(numkit::svd(&fd.x_minus_l)?.largest());
    }
    Ok(largest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwBounds {
    /// `Σ_l ‖X_{-l}ᵀ y_{-l}‖² >= (K−1)² ‖Xᵀy‖² / K`.
    pub chain: BoundReport,
    /// `P_w` against the bound implied by the chain and the actual `C`.
    pub rigorous: BoundReport,
    /// `P_w >= c / (κ'² κ²)` with [`PW_OMEGA_CONSTANT`].
    pub omega: BoundReport,
}

/// Bounds on `P_w` given its measured value and the rotation constant.
pub fn pw_lower_bound(
    d: &Dataset,
    p: &FoldPartition,
    alpha: f64,
    c2: f64,
    p_w: f64,
) -> Result<PwBounds> {
    let k = p.k as f64;
    let xty = (d.x().transpose() * d.y()).norm_squared();
    let mut sum = 0.0;
    let mut weighted = 0.0;
    let mut denom = 0.0;
    for l in 0..p.k {
        let fd = classical::masked_design(d, p, l)?;
        let v = (fd.x_minus_l.transpose() * &fd.y_minus_l).norm_squared();
        let size = p.folds[l].len() as f64;
        sum += v;
        weighted += size * v;
        denom += size * fd.y_minus_l.norm_squared();
    }
    let chain_bound = (k - 1.0).powi(2) * xty / k;
    let chain = BoundReport::lower("P_w chain inequality", chain_bound, sum);

    // h(λ) >= (N+M) λ / (λ_max² + α) turns Σ β² h² ‖y‖² into the chain sum.
    let nm = d.nm() as f64;
    let lmax = fold_lambda_max(d, p)?;
    let min_size = p.folds.iter().map(Vec::len).min().unwrap_or(0) as f64;
    let factor = (nm / (lmax * lmax + alpha)).powi(2);
    let rigorous_bound = c2 * c2 * factor * min_size * chain_bound / denom;
    debug_assert!(weighted >= min_size * sum);
    let rigorous = BoundReport::lower("P_w rigorous", rigorous_bound, p_w);

    let kappa_p = fold_kappa(d, p)?;
    let kappa = d.normalized_kappa();
    let omega = BoundReport::lower(
        "P_w omega",
        PW_OMEGA_CONSTANT / (kappa_p * kappa_p * kappa * kappa),
        p_w,
    );
    Ok(PwBounds {
        chain,
        rigorous,
        omega,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodFitBounds {
    /// Per fold: `‖w_l‖² <= κ'² ‖y‖² / (N+M)²`.
    pub weight_norms: Vec<BoundReport>,
    /// `P₁ >= (N+M)² / (M N κ'² ‖X‖²_max)`.
    pub p1: BoundReport,
    /// `P₂ >= 0.95`.
    pub p2: BoundReport,
}

/// Relative cross-validation error below which an instance counts as a
/// good fit.
pub const GOOD_FIT_THRESHOLD: f64 = 0.1;

/// `P₁` and `P₂` bounds for instances where ridge regression fits well.
/// `p1` and `p2` are the measured probabilities.
pub fn p1_p2_goodfit_bounds(
    d: &Dataset,
    p: &FoldPartition,
    alpha: f64,
    p1: f64,
    p2: f64,
) -> Result<GoodFitBounds> {
    let nm = d.nm() as f64;
    let kappa_p = fold_kappa(d, p)?;
    let y2 = d.y().norm_squared();
    let weight_norms = (0..p.k)
        .map(|l| {
            let w = classical::fold_solution(d, p, l, alpha)?.w;
            Ok(BoundReport::upper(
                &format!("fold {l} weight norm"),
                kappa_p * kappa_p * y2 / (nm * nm),
                w.norm_squared(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let cv = classical::cv_error_exact(d, p, alpha)?;
    let good = cv.e <= GOOD_FIT_THRESHOLD * y2;
    let (p1r, p2r) = if good {
        let x_max = d.meta().x_max;
        let bound = nm * nm / (d.m() as f64 * d.n() as f64 * kappa_p * kappa_p * x_max * x_max);
        (
            BoundReport::lower("P1 good fit", bound, p1),
            BoundReport::lower("P2 good fit", 0.95, p2),
        )
    } else {
        (
            BoundReport::not_applicable("P1 good fit"),
            BoundReport::not_applicable("P2 good fit"),
        )
    };
    Ok(GoodFitBounds {
        weight_norms,
        p1: p1r,
        p2: p2r,
    })
}

/// `R / κ² <= N M ‖X‖²_max / (N+M)²` under the normalized spectrum.
pub fn rank_kappa_bound(d: &Dataset) -> BoundReport {
    if !d.respects_spectrum_convention() {
        return BoundReport::not_applicable("rank vs kappa");
    }
    let (n, m) = (d.n() as f64, d.m() as f64);
    let x_max = d.meta().x_max;
    let kappa = d.normalized_kappa();
    BoundReport::upper(
        "rank vs kappa",
        n * m * x_max * x_max / (n + m).powi(2),
        d.meta().rank as f64 / (kappa * kappa),
    )
}
