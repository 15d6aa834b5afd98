//! Dense linear algebra kernel shared by every other module.
//!
//! Everything here is a pure function of its inputs. Factorizations are
//! backed by `nalgebra`; the wrappers fix the ordering conventions
//! (descending singular values, ascending eigenvalues), the numerical rank
//! rule and the dimension budget.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Singular values below `RANK_TOLERANCE * largest` are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Largest operator dimension accepted on density-operator paths.
pub const DEFAULT_DIM_BUDGET: usize = 4096;

const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// Reduced singular value decomposition `X = U Σ V†`.
#[derive(Debug, Clone)]
pub struct SvdFactors<T: nalgebra::Scalar> {
    /// All `min(rows, cols)` singular values, descending.
    pub singular_values: RVector,
    /// Left singular vectors as columns, paired with `singular_values`.
    pub left_vectors: DMatrix<T>,
    /// Right singular vectors as columns, paired with `singular_values`.
    pub right_vectors: DMatrix<T>,
    /// Number of singular values above the rank tolerance.
    pub rank: usize,
}

impl<T: ComplexField<RealField = f64>> SvdFactors<T> {
    /// The nonzero singular values.
    pub fn nonzero_values(&self) -> &[f64] {
        &self.singular_values.as_slice()[..self.rank]
    }

    pub fn largest(&self) -> f64 {
        self.singular_values.get(0).copied().unwrap_or(0.0)
    }

    /// Smallest singular value that still counts toward the rank.
    pub fn smallest_nonzero(&self) -> Option<f64> {
        self.rank.checked_sub(1).map(|i| self.singular_values[i])
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let k = self.singular_values.len();
        let mut scaled = self.left_vectors.clone();
        for j in 0..k {
            scaled.column_mut(j).scale_mut(self.singular_values[j]);
        }
        scaled * self.right_vectors.adjoint()
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigFactors {
    pub eigenvalues: RVector,
    pub eigenvectors: CMatrix,
}

impl EigFactors {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V f(D) V†` for a scalar function of the eigenvalues.
    pub fn apply_function(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.dim();
        let mut left = self.eigenvectors.clone();
        for k in 0..n {
            let fk = f(self.eigenvalues[k]);
            for r in 0..n {
                left[(r, k)] *= fk;
            }
        }
        left * self.eigenvectors.adjoint()
    }
}

pub fn to_complex(x: &RMatrix) -> CMatrix {
    x.map(|v| C64::new(v, 0.0))
}

pub fn max_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.clone().modulus()))
}

fn ensure_finite<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, what: &str) -> Result<()> {
    for (idx, v) in a.iter().enumerate() {
        let (re, im) = (v.clone().real(), v.clone().imaginary());
        if !re.is_finite() || !im.is_finite() {
            let (r, c) = (idx % a.nrows(), idx / a.nrows());
            return Err(Error::Input(format!(
                "{what} has a non-finite entry at ({r}, {c})"
            )));
        }
    }
    Ok(())
}

/// `max|A - A†| <= 1e-12 * max(1, ‖A‖_max)`.
pub fn is_hermitian(a: &CMatrix) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(1.0);
    let n = a.nrows();
    for i in 0..n {
        for j in i..n {
            if (a[(i, j)] - a[(j, i)].conj()).norm() > HERMITIAN_TOLERANCE * scale {
                return false;
            }
        }
    }
    true
}

/// Reduced SVD with singular values sorted descending.
pub fn svd<T: ComplexField<RealField = f64>>(x: &DMatrix<T>) -> Result<SvdFactors<T>> {
    ensure_finite(x, "matrix")?;
    let k = x.nrows().min(x.ncols());
    if k == 0 {
        return Err(Error::Input("empty matrix".into()));
    }
    let SVD {
        u,
        v_t,
        singular_values,
    } = SVD::try_new(x.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Contract("SVD failed to converge".into()))?;
    let (u, v_t) = (u.expect("requested U"), v_t.expect("requested Vᵀ"));

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| singular_values[b].total_cmp(&singular_values[a]));

    let values = RVector::from_iterator(k, order.iter().map(|&i| singular_values[i]));
    let left = DMatrix::from_fn(x.nrows(), k, |r, c| u[(r, order[c])].clone());
    let right = DMatrix::from_fn(x.ncols(), k, |r, c| v_t[(order[c], r)].clone().conjugate());

    let cutoff = RANK_TOLERANCE * values[0];
    let rank = values.iter().filter(|&&s| s > cutoff && s > 0.0).count();
    Ok(SvdFactors {
        singular_values: values,
        left_vectors: left,
        right_vectors: right,
        rank,
    })
}

/// Eigendecomposition of a Hermitian matrix.
pub fn eigh(a: &CMatrix) -> Result<EigFactors> {
    ensure_finite(a, "matrix")?;
    if !is_hermitian(a) {
        return Err(Error::Contract("eigh requires a Hermitian matrix".into()));
    }
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(a.clone());
    let n = eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigenvalues[i].total_cmp(&eigenvalues[j]));
    Ok(EigFactors {
        eigenvalues: RVector::from_iterator(n, order.iter().map(|&i| eigenvalues[i])),
        eigenvectors: DMatrix::from_fn(n, n, |r, c| eigenvectors[(r, order[c])]),
    })
}

/// `exp(-i A t)` for Hermitian `A`, through its eigendecomposition.
pub fn expm_hermitian(a: &CMatrix, t: f64) -> Result<CMatrix> {
    Ok(eigh(a)?.apply_function(|mu| C64::from_polar(1.0, -mu * t)))
}

/// Tensor product under the default dimension budget.
pub fn kron(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    kron_with_budget(a, b, DEFAULT_DIM_BUDGET)
}

pub fn kron_with_budget(a: &CMatrix, b: &CMatrix, budget: usize) -> Result<CMatrix> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    match (rows, cols) {
        (Some(r), Some(c)) if r <= budget && c <= budget => Ok(a.kronecker(b)),
        _ => Err(Error::Resource(format!(
            "tensor product of {}x{} and {}x{} exceeds the {budget}-dimension budget",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        ))),
    }
}

/// Reduced operator on the subsystems listed in `keep` (0-based, any order;
/// the result keeps the subsystems in ascending order).
pub fn partial_trace(rho: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    if !rho.is_square() || rho.nrows() != total || dims.is_empty() {
        return Err(Error::Input(format!(
            "layout {dims:?} does not match a {}x{} operator",
            rho.nrows(),
            rho.ncols()
        )));
    }
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Input(format!("keep set {keep:?} out of range")));
    }
    let tr = rho.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::Contract(format!(
            "partial trace expects a unit-trace operator, got trace {tr}"
        )));
    }
    let kept: Vec<bool> = (0..dims.len()).map(|i| keep.contains(&i)).collect();
    let out_dim: usize = dims
        .iter()
        .zip(&kept)
        .filter(|(_, &k)| k)
        .map(|(d, _)| d)
        .product();

    // For each flat index: (index within kept subsystems, index within traced ones).
    let split: Vec<(usize, usize)> = (0..total)
        .map(|flat| {
            let mut rem = flat;
            let (mut kept_idx, mut kept_stride) = (0, 1);
            let (mut traced_idx, mut traced_stride) = (0, 1);
            for (d, &k) in dims.iter().zip(&kept).rev() {
                let digit = rem % d;
                rem /= d;
                if k {
                    kept_idx += digit * kept_stride;
                    kept_stride *= d;
                } else {
                    traced_idx += digit * traced_stride;
                    traced_stride *= d;
                }
            }
            (kept_idx, traced_idx)
        })
        .collect();

    let mut out = CMatrix::zeros(out_dim, out_dim);
    for i in 0..total {
        let (ki, ti) = split[i];
        for j in 0..total {
            let (kj, tj) = split[j];
            if ti == tj {
                out[(ki, kj)] += rho[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Largest singular value.
pub fn spectral_norm<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> Result<f64> {
    Ok(svd(a)?.largest())
}

/// `λ_max / λ_min` over the nonzero singular values.
pub fn condition_number<T: ComplexField<RealField = f64>>(x: &DMatrix<T>) -> Result<f64> {
    let f = svd(x)?;
    match f.smallest_nonzero() {
        Some(smallest) => Ok(f.largest() / smallest),
        None => Err(Error::Input(
            "condition number of a zero matrix is undefined".into(),
        )),
    }
}

/// `½ ‖a − b‖₁` for Hermitian operators.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let diff = a - b;
    // Symmetrize away rounding so eigh's hermiticity check passes.
    let diff = (&diff + diff.adjoint()) * C64::new(0.5, 0.0);
    Ok(0.5
        * eigh(&diff)?
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .sum::<f64>())
}

/// Projector `|v⟩⟨v|`.
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Rng64};
    use rand::Rng;

    fn random_complex(rng: &mut Rng64, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hermitian(rng: &mut Rng64, n: usize) -> CMatrix {
        let a = random_complex(rng, n, n);
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    fn random_density(rng: &mut Rng64, n: usize) -> CMatrix {
        let a = random_complex(rng, n, n);
        let rho = &a * a.adjoint();
        let tr = rho.trace();
        rho / tr
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let f = svd(&RMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.singular_values.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(f.rank, 3);

        let f = svd(&RMatrix::from_diagonal(&RVector::from_vec(vec![3.0, 0.0]))).unwrap();
        assert_eq!(f.rank, 1);
        assert!((f.singular_values[0] - 3.0).abs() < 1e-15);
        assert_eq!(f.nonzero_values().len(), 1);
    }

    #[test]
    fn svd_reconstructs_random_rectangular() {
        let mut rng = rng::seeded(7);
        let x = RMatrix::from_fn(8, 4, |_, _| rng.random_range(-1.0..1.0));
        let f = svd(&x).unwrap();
        let err = (f.reconstruct() - &x).norm();
        assert!(err <= 1e-10 * x.norm(), "err {err}");
        for w in f.singular_values.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
        let ortho = f.left_vectors.transpose() * &f.left_vectors;
        assert!((ortho - RMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn svd_rejects_non_finite() {
        let mut x = RMatrix::zeros(2, 2);
        x[(1, 0)] = f64::NAN;
        assert!(matches!(svd(&x), Err(Error::Input(_))));
    }

    #[test]
    fn eigh_small_cases() {
        let a = to_complex(&RMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));
        let e = eigh(&a).unwrap();
        assert!((e.eigenvalues[0] + 2.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 2.0).abs() < 1e-14);

        let z = eigh(&CMatrix::zeros(3, 3)).unwrap();
        assert!(z.eigenvalues.iter().all(|&v| v == 0.0));

        let mut bad = CMatrix::zeros(2, 2);
        bad[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(eigh(&bad), Err(Error::Contract(_))));
    }

    #[test]
    fn eigh_residual_random_hermitian() {
        let mut rng = rng::seeded(11);
        let a = random_hermitian(&mut rng, 6);
        let e = eigh(&a).unwrap();
        let norm = spectral_norm(&a).unwrap();
        for k in 0..6 {
            let v = e.eigenvectors.column(k);
            let r = &a * v - v * C64::new(e.eigenvalues[k], 0.0);
            assert!(r.norm() <= 1e-10 * norm);
        }
    }

    #[test]
    fn expm_trivial_cases() {
        let u = expm_hermitian(&CMatrix::zeros(3, 3), 0.4).unwrap();
        assert!((u - CMatrix::identity(3, 3)).norm() < 1e-15);

        let a = CMatrix::from_diagonal_element(2, 2, C64::new(std::f64::consts::PI, 0.0));
        let u = expm_hermitian(&a, 1.0).unwrap();
        assert!((u + CMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn expm_matches_taylor_series() {
        let mut rng = rng::seeded(3);
        let a = random_hermitian(&mut rng, 4);
        let t = 0.7;
        // Taylor oracle: sum_k (-i t A)^k / k!
        let step = &a * C64::new(0.0, -t);
        let mut term = CMatrix::identity(4, 4);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &step / C64::new(k as f64, 0.0);
            sum += &term;
        }
        let u = expm_hermitian(&a, t).unwrap();
        assert!((&u - sum).norm() < 1e-9);
        let unit = u.adjoint() * &u - CMatrix::identity(4, 4);
        assert!(unit.norm() < 1e-10);
    }

    #[test]
    fn kron_identities() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron(&i2, &i2).unwrap(), CMatrix::identity(4, 4));

        let mut rng = rng::seeded(5);
        let b = random_complex(&mut rng, 2, 2);
        let mut e11 = CMatrix::zeros(2, 2);
        e11[(0, 0)] = C64::new(1.0, 0.0);
        let k = kron(&e11, &b).unwrap();
        assert_eq!(k.view((0, 0), (2, 2)), b.view((0, 0), (2, 2)));
        assert!(k.view((2, 2), (2, 2)).iter().all(|v| v.norm() == 0.0));

        let (a, c, d) = (
            random_complex(&mut rng, 2, 2),
            random_complex(&mut rng, 2, 2),
            random_complex(&mut rng, 2, 2),
        );
        let lhs = kron(&a, &b).unwrap() * kron(&c, &d).unwrap();
        let rhs = kron(&(&a * &c), &(&b * &d)).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);

        let big = CMatrix::identity(65, 65);
        assert!(matches!(kron(&big, &big), Err(Error::Resource(_))));
    }

    #[test]
    fn partial_trace_cases() {
        let mut rng = rng::seeded(21);
        let r1 = random_density(&mut rng, 2);
        let r2 = random_density(&mut rng, 3);
        let joint = kron(&r1, &r2).unwrap();
        let red = partial_trace(&joint, &[2, 3], &[0]).unwrap();
        assert!((red - &r1).norm() < 1e-12);

        // Bell state keeps I/2.
        let s = 1.0 / 2f64.sqrt();
        let bell = CVector::from_vec(vec![
            C64::new(s, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(s, 0.0),
        ]);
        let red = partial_trace(&outer(&bell), &[2, 2], &[0]).unwrap();
        assert!((red - CMatrix::identity(2, 2) * C64::new(0.5, 0.0)).norm() < 1e-15);

        let r3 = random_density(&mut rng, 2);
        let triple = kron(&kron(&r1, &r2).unwrap(), &r3).unwrap();
        let red = partial_trace(&triple, &[2, 3, 2], &[2, 0]).unwrap();
        assert!((red - kron(&r1, &r3).unwrap()).norm() < 1e-12);

        assert!(matches!(
            partial_trace(&joint, &[2, 2], &[0]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn norms_and_condition() {
        assert!((spectral_norm(&RMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-15);
        let d = RMatrix::from_diagonal(&RVector::from_vec(vec![3.0, -5.0]));
        assert!((spectral_norm(&d).unwrap() - 5.0).abs() < 1e-14);
        let d = RMatrix::from_diagonal(&RVector::from_vec(vec![4.0, 1.0]));
        assert!((condition_number(&d).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(
            condition_number(&RMatrix::zeros(2, 2)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn spectral_norm_matches_power_iteration() {
        let mut rng = rng::seeded(9);
        let a = random_complex(&mut rng, 5, 5);
        let ata = a.adjoint() * &a;
        let mut v = CVector::from_element(5, C64::new(1.0, 0.0));
        for _ in 0..2000 {
            v = &ata * &v;
            v /= C64::new(v.norm(), 0.0);
        }
        let est = (&a * &v).norm();
        assert!((est - spectral_norm(&a).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn condition_number_planted_spectrum() {
        let mut rng = rng::seeded(4);
        let u = rng::random_orthonormal(&mut rng, 8, 4);
        let v = rng::random_orthonormal(&mut rng, 4, 4);
        let s = RMatrix::from_diagonal(&RVector::from_vec(vec![8.0, 4.0, 2.0, 1.0]));
        let x = u * s * v.transpose();
        assert!((condition_number(&x).unwrap() - 8.0).abs() < 1e-9);
    }

    #[test]
    fn trace_distance_of_orthogonal_pure_states_is_one() {
        let a = CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let b = CVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        assert!((trace_distance(&outer(&a), &outer(&b)).unwrap() - 1.0).abs() < 1e-14);
    }

    mod props {
        use super::{random_density, random_hermitian};
        use crate::numkit::*;
        use crate::rng;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn expm_is_a_one_parameter_group(seed in 0u64..1000, t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
                let mut rng = rng::seeded(seed);
                let a = random_hermitian(&mut rng, 4);
                let lhs = expm_hermitian(&a, t1).unwrap() * expm_hermitian(&a, t2).unwrap();
                let rhs = expm_hermitian(&a, t1 + t2).unwrap();
                prop_assert!((lhs - rhs).norm() < 1e-9);
            }

            #[test]
            fn partial_trace_preserves_trace(seed in 0u64..1000) {
                let mut rng = rng::seeded(seed);
                let rho = random_density(&mut rng, 12);
                for keep in [vec![0], vec![1], vec![2], vec![0, 2]] {
                    let red = partial_trace(&rho, &[2, 3, 2], &keep).unwrap();
                    prop_assert!((red.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
                }
            }

            #[test]
            fn singular_values_orthogonally_invariant(seed in 0u64..1000) {
                let mut rng = rng::seeded(seed);
                let x = RMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
                let q1 = rng::random_orthonormal(&mut rng, 6, 6);
                let q2 = rng::random_orthonormal(&mut rng, 4, 4);
                let a = svd(&x).unwrap().singular_values;
                let b = svd(&(q1 * &x * q2)).unwrap().singular_values;
                prop_assert!((a - b).amax() < 1e-9);
            }
        }
    }
}
