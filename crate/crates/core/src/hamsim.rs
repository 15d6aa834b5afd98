//! Hermitian dilation, one-sparse embeddings and the parallel Hamiltonian
//! simulation channel.
//!
//! The channel acts on a joint `(control, system)` state. Each step adjoins a
//! fresh ancilla `ρ = |1⃗⟩⟨1⃗|`, evolves `(control, ancilla, system)` under
//! `exp(-i S_A Δt)` and traces the ancilla out again. Register order is always
//! `(control, ancilla, system)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{self, CMatrix, CVector, RMatrix, RVector, C64};
use crate::rng;

/// Safety factor for [`step_count`], calibrated on random Hermitian families
/// (`N = 2..4`, `Q = 1..3`, entries uniform in `[-1, 1]`). The largest
/// observed `error · n / (M_A² t²)` there was about 0.72.
pub const CHANNEL_SAFETY: f64 = 1.0;

/// One `±λ` eigenpair of a dilation.
#[derive(Debug, Clone)]
pub struct SignedPair {
    pub lambda: f64,
    /// `(|0,u⟩ + |1,v⟩)/√2`, eigenvalue `+λ`.
    pub plus: RVector,
    /// `(|0,u⟩ - |1,v⟩)/√2`, eigenvalue `-λ`.
    pub minus: RVector,
}

/// `X̃ = [[0, X], [Xᵀ, 0]]` with its signed eigenpairs.
#[derive(Debug, Clone)]
pub struct HermitianDilation {
    pub xt: RMatrix,
    pub pairs: Vec<SignedPair>,
    pub kernel_dim: usize,
}

impl HermitianDilation {
    pub fn dim(&self) -> usize {
        self.xt.nrows()
    }

    /// `X̃ / scale` as a complex Hermitian generator.
    pub fn generator(&self, scale: f64) -> CMatrix {
        numkit::to_complex(&(&self.xt / scale))
    }

    /// Full spectrum, ascending, zeros included.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .pairs
            .iter()
            .flat_map(|p| [p.lambda, -p.lambda])
            .chain(std::iter::repeat_n(0.0, self.kernel_dim))
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

pub fn dilate(x: &RMatrix) -> Result<HermitianDilation> {
    let (n, m) = x.shape();
    let f = numkit::svd(x)?;
    let mut xt = RMatrix::zeros(n + m, n + m);
    xt.view_mut((0, n), (n, m)).copy_from(x);
    xt.view_mut((n, 0), (m, n)).copy_from(&x.transpose());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let pairs = (0..f.rank)
        .map(|j| {
            let mut plus = RVector::zeros(n + m);
            plus.rows_mut(0, n).copy_from(&f.left_vectors.column(j));
            let mut minus = plus.clone();
            plus.rows_mut(n, m).copy_from(&f.right_vectors.column(j));
            minus
                .rows_mut(n, m)
                .copy_from(&(-f.right_vectors.column(j)));
            SignedPair {
                lambda: f.singular_values[j],
                plus: plus * s,
                minus: minus * s,
            }
        })
        .collect();
    Ok(HermitianDilation {
        xt,
        pairs,
        kernel_dim: n + m - 2 * f.rank,
    })
}

/// `S_A = Σ_q |q⟩⟨q| ⊗ S_{A_q}` with
/// `S_{A_q} = Σ_{jk} A_{q,jk} |k⟩⟨j| ⊗ |j⟩⟨k|`.
#[derive(Debug, Clone)]
pub struct OneSparseEmbedding {
    pub q: usize,
    pub n: usize,
    pub s: CMatrix,
}

impl OneSparseEmbedding {
    /// At most one nonzero per row and per column.
    pub fn is_one_sparse(&self) -> bool {
        let d = self.s.nrows();
        let rows = (0..d).all(|r| (0..d).filter(|&c| self.s[(r, c)] != C64::ZERO).count() <= 1);
        let cols = (0..d).all(|c| (0..d).filter(|&r| self.s[(r, c)] != C64::ZERO).count() <= 1);
        rows && cols
    }

    pub fn block(&self, q: usize) -> CMatrix {
        let d = self.n * self.n;
        self.s.view((q * d, q * d), (d, d)).into_owned()
    }
}

fn check_family(a_list: &[CMatrix]) -> Result<usize> {
    let first = a_list
        .first()
        .ok_or_else(|| Error::Input("empty Hamiltonian family".into()))?;
    let n = first.nrows();
    for (q, a) in a_list.iter().enumerate() {
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Input(format!(
                "A_{q} is {}x{}, expected {n}x{n}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !numkit::is_hermitian(a) {
            return Err(Error::Contract(format!("A_{q} is not Hermitian")));
        }
    }
    Ok(n)
}

fn swap_embedding(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut s = CMatrix::zeros(n * n, n * n);
    for j in 0..n {
        for k in 0..n {
            s[(k * n + j, j * n + k)] = a[(j, k)];
        }
    }
    s
}

pub fn embed_one_sparse(a_list: &[CMatrix]) -> Result<OneSparseEmbedding> {
    let n = check_family(a_list)?;
    let d = n * n;
    let q = a_list.len();
    let mut s = CMatrix::zeros(q * d, q * d);
    for (i, a) in a_list.iter().enumerate() {
        s.view_mut((i * d, i * d), (d, d))
            .copy_from(&swap_embedding(a));
    }
    Ok(OneSparseEmbedding { q, n, s })
}

/// `Σ_q |q⟩⟨q| ⊗ exp(-i A_q t / N)`.
pub fn exact_conditional_unitary(a_list: &[CMatrix], t: f64) -> Result<CMatrix> {
    let n = check_family(a_list)?;
    let q = a_list.len();
    let mut u = CMatrix::zeros(q * n, q * n);
    for (i, a) in a_list.iter().enumerate() {
        let block = numkit::expm_hermitian(&(a / C64::from(n as f64)), t)?;
        u.view_mut((i * n, i * n), (n, n)).copy_from(&block);
    }
    Ok(u)
}

/// Density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    rho: CMatrix,
}

impl MixedState {
    pub fn new(rho: CMatrix) -> Result<Self> {
        if !numkit::is_hermitian(&rho) {
            return Err(Error::Contract("density operator is not Hermitian".into()));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::Contract(format!("density operator has trace {tr}")));
        }
        let min = numkit::eigh(&rho)?.eigenvalues[0];
        if min < -1e-10 {
            return Err(Error::Contract(format!(
                "density operator has negative eigenvalue {min}"
            )));
        }
        Ok(Self { rho })
    }

    /// `|v⟩⟨v|` for `v` normalized first.
    pub fn pure(v: &CVector) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::Input("zero state vector".into()));
        }
        Ok(Self {
            rho: numkit::outer(&(v / C64::from(norm))),
        })
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[k] = C64::ONE;
        Self {
            rho: numkit::outer(&v),
        }
    }

    /// `|1⃗⟩⟨1⃗|`, the uniform superposition.
    pub fn uniform(dim: usize) -> Self {
        let v = CVector::from_element(dim, C64::from(1.0 / (dim as f64).sqrt()));
        Self {
            rho: numkit::outer(&v),
        }
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn tensor(&self, other: &MixedState) -> Result<Self> {
        Ok(Self {
            rho: numkit::kron(&self.rho, &other.rho)?,
        })
    }

    pub fn evolve(&self, u: &CMatrix) -> Self {
        Self {
            rho: u * &self.rho * u.adjoint(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub t: f64,
    pub n: usize,
}

impl ChannelConfig {
    pub fn new(t: f64, n: usize) -> Result<Self> {
        if n == 0 || !t.is_finite() {
            return Err(Error::Input(format!(
                "channel needs n >= 1 and finite t, got n = {n}, t = {t}"
            )));
        }
        Ok(Self { t, n })
    }

    pub fn delta_t(&self) -> f64 {
        self.t / self.n as f64
    }
}

/// Superoperator of one channel step on the `(q, q')` control block, as an
/// `N² × N²` matrix acting on column-stacked `N × N` blocks.
fn step_superoperator(uq: &CMatrix, uq2: &CMatrix, n: usize) -> CMatrix {
    let rho = MixedState::uniform(n);
    let mut out = CMatrix::zeros(n * n, n * n);
    for b in 0..n {
        for a in 0..n {
            let mut e = CMatrix::zeros(n, n);
            e[(a, b)] = C64::ONE;
            let big = uq * numkit::kron(rho.rho(), &e).expect("tiny kron") * uq2.adjoint();
            // Trace out the ancilla, which is the leading factor.
            let col = b * n + a;
            for c in 0..n {
                for r in 0..n {
                    let mut acc = C64::ZERO;
                    for k in 0..n {
                        acc += big[(k * n + r, k * n + c)];
                    }
                    out[(c * n + r, col)] = acc;
                }
            }
        }
    }
    out
}

fn matrix_power(m: &CMatrix, mut e: usize) -> CMatrix {
    let mut result = CMatrix::identity(m.nrows(), m.ncols());
    let mut base = m.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

fn check_budget(q: usize, n: usize, budget: usize) -> Result<()> {
    let dim = q * n * n;
    if dim > budget {
        return Err(Error::Resource(format!(
            "one-sparse operator of dimension {dim} exceeds the budget {budget}"
        )));
    }
    Ok(())
}

/// Runs `cfg.n` channel steps on `σ_C ⊗ σ` and returns the joint
/// `(control, system)` state.
pub fn parallel_sim_channel(
    a_list: &[CMatrix],
    sigma_c: &MixedState,
    sigma: &MixedState,
    cfg: &ChannelConfig,
    budget: usize,
) -> Result<MixedState> {
    let n = check_family(a_list)?;
    let q = a_list.len();
    check_budget(q, n, budget)?;
    if sigma_c.dim() != q || sigma.dim() != n {
        return Err(Error::Input(format!(
            "states of dimension ({}, {}) do not match Q = {q}, N = {n}",
            sigma_c.dim(),
            sigma.dim()
        )));
    }
    let dt = cfg.delta_t();
    let steps = a_list
        .iter()
        .map(|a| numkit::expm_hermitian(&swap_embedding(a), dt))
        .collect::<Result<Vec<_>>>()?;
    let joint = sigma_c.tensor(sigma)?;
    let mut out = CMatrix::zeros(q * n, q * n);
    for i in 0..q {
        for k in 0..q {
            let block = joint.rho.view((i * n, k * n), (n, n)).into_owned();
            if block.iter().all(|v| *v == C64::ZERO) {
                continue;
            }
            let map = matrix_power(&step_superoperator(&steps[i], &steps[k], n), cfg.n);
            let vec = CVector::from_column_slice(block.as_slice());
            let evolved = map * vec;
            out.view_mut((i * n, k * n), (n, n))
                .copy_from(&CMatrix::from_column_slice(n, n, evolved.as_slice()));
        }
    }
    Ok(MixedState { rho: out })
}

/// Single-matrix version of the channel, stepped literally with full
/// tensor products and partial traces. Used to cross-check the `Q = 1`
/// reduction of [`parallel_sim_channel`].
pub fn single_sim_channel(
    a: &CMatrix,
    sigma: &MixedState,
    cfg: &ChannelConfig,
) -> Result<MixedState> {
    let n = check_family(std::slice::from_ref(a))?;
    let u = numkit::expm_hermitian(&swap_embedding(a), cfg.delta_t())?;
    let rho = MixedState::uniform(n);
    let mut state = sigma.clone();
    for _ in 0..cfg.n {
        let joint = rho.tensor(&state)?.evolve(&u);
        state = MixedState {
            rho: numkit::partial_trace(&joint.rho, &[n, n], &[1])?,
        };
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelError {
    pub max_trace_distance: f64,
    pub per_state: Vec<f64>,
}

/// Control states `|q⟩` and their uniform superposition, paired with system
/// states `|j⟩`, `|1⃗⟩` and two seeded random pure states.
pub fn default_test_states(q: usize, n: usize, seed: u64) -> Vec<(MixedState, MixedState)> {
    let mut rng = rng::seeded(seed);
    let mut controls: Vec<MixedState> = (0..q).map(|i| MixedState::basis(q, i)).collect();
    if q > 1 {
        controls.push(MixedState::uniform(q));
    }
    let mut systems: Vec<MixedState> = (0..n).map(|j| MixedState::basis(n, j)).collect();
    systems.push(MixedState::uniform(n));
    for _ in 0..2 {
        let re = rng::gaussian_matrix(&mut rng, n, 1);
        let im = rng::gaussian_matrix(&mut rng, n, 1);
        let v = CVector::from_fn(n, |j, _| C64::new(re[j], im[j]));
        systems.push(MixedState::pure(&v).expect("gaussian vector is nonzero"));
    }
    controls
        .iter()
        .flat_map(|c| systems.iter().map(move |s| (c.clone(), s.clone())))
        .collect()
}

/// Trace distance between channel output and exact conditional evolution.
pub fn channel_error(
    a_list: &[CMatrix],
    cfg: &ChannelConfig,
    test_states: &[(MixedState, MixedState)],
    budget: usize,
) -> Result<ChannelError> {
    if test_states.is_empty() {
        return Err(Error::Input(
            "channel_error needs at least one test state".into(),
        ));
    }
    let u = exact_conditional_unitary(a_list, cfg.t)?;
    let per_state = test_states
        .iter()
        .map(|(c, s)| {
            let got = parallel_sim_channel(a_list, c, s, cfg, budget)?;
            let want = c.tensor(s)?.evolve(&u);
            numkit::trace_distance(got.rho(), want.rho())
        })
        .collect::<Result<Vec<_>>>()?;
    let max_trace_distance = per_state.iter().copied().fold(0.0, f64::max);
    Ok(ChannelError {
        max_trace_distance,
        per_state,
    })
}

/// `M_A = max_q ‖A_q‖_max`.
pub fn max_entry(a_list: &[CMatrix]) -> f64 {
    a_list.iter().map(numkit::max_abs).fold(0.0, f64::max)
}

/// `n = ceil(safety · M_A² t² / ε)`, at least 1.
pub fn step_count(m_a: f64, t: f64, epsilon: f64, safety: f64) -> Result<usize> {
    if !(m_a > 0.0 && t > 0.0 && epsilon > 0.0 && safety > 0.0) {
        return Err(Error::Input(format!(
            "step_count needs positive arguments, got M_A = {m_a}, t = {t}, eps = {epsilon}, safety = {safety}"
        )));
    }
    Ok(((safety * m_a * m_a * t * t / epsilon).ceil() as usize).max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub parallel_cost: f64,
    pub naive_cost: f64,
    pub ratio: f64,
}

/// Abstract oracle-call costs with the polylog factor fixed to `log2²`:
/// parallel `M²t² log²(N²Q)/ε`, one-by-one `Q² M²t² log²(NQ)/ε`.
pub fn naive_cost_model(q: usize, n: usize, m_a: f64, t: f64, epsilon: f64) -> Result<CostModel> {
    if q == 0 || n < 2 || !(m_a > 0.0 && t > 0.0 && epsilon > 0.0) {
        return Err(Error::Input(
            "cost model needs Q >= 1, N >= 2 and positive scales".into(),
        ));
    }
    let base = m_a * m_a * t * t / epsilon;
    let (q, n) = (q as f64, n as f64);
    let parallel_cost = base * (n * n * q).log2().powi(2);
    let naive_cost = q * q * base * (n * q).log2().powi(2);
    Ok(CostModel {
        parallel_cost,
        naive_cost,
        ratio: naive_cost / parallel_cost,
    })
}

/// Hermitian matrix with real diagonal and complex off-diagonal parts
/// drawn uniformly from `[-1, 1]`.
pub fn random_hermitian(r: &mut rng::Rng64, n: usize) -> CMatrix {
    use rand::Rng;
    let mut a = CMatrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = C64::new(r.random_range(-1.0..1.0), 0.0);
        for j in i + 1..n {
            let v = C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
    a
}

/// `q` seeded [`random_hermitian`] matrices of dimension `n`.
pub fn random_hermitian_family(q: usize, n: usize, seed: u64) -> Vec<CMatrix> {
    let mut r = rng::seeded(seed);
    (0..q).map(|_| random_hermitian(&mut r, n)).collect()
}
