//! Ridge regression and cross-validation pipelines on the register machine.
//!
//! `algorithm1_run` turns `|0, y⟩` into `|φ_w⟩ ∝ w` through phase estimation
//! on the dilation `X̃/(N+M)`, the `h(λ, α)` rotation and postselection.
//! `algorithm2_psi_w` does the same for every fold at once, conditioned on a
//! sample index register, and the cross-validation error is estimated from
//! measured probabilities of that state.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::classical::{self, CvTerms, Dataset, FoldPartition};
use crate::error::{Error, Result};
use crate::hamsim::{self, ChannelConfig, ChannelError, CHANNEL_SAFETY};
use crate::numkit::{self, CMatrix, CVector, RVector, C64};
use crate::qcore::{self, OracleCounters, PhaseOracle, Precision, PureState, FLAG, PHASE};
use crate::rng::{self, Rng64};

pub const SYSTEM: &str = "system";
pub const INDEX: &str = "index";
pub const FEATURE: &str = "feature";

const ALG1_STREAM: u64 = 0xA1;

/// Multiplicative estimation noise: every estimated quantity is scaled by
/// `1 + u`, `u` uniform in `±` its share of `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon: f64,
    pub seed: u64,
}

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Input(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg1Config {
    pub alpha: f64,
    pub precision: Precision,
    /// Rotation constant; `None` picks one automatically.
    pub c1: Option<f64>,
    /// Evolution time of the phase-estimation unitary; `None` fits the
    /// spectrum into the phase window.
    pub t0: Option<f64>,
    pub exact_prep: bool,
    pub noise: Option<NoiseModel>,
}

impl Alg1Config {
    /// Ideal register, exact preparation, no estimation noise.
    pub fn exact(alpha: f64) -> Self {
        Self {
            alpha,
            precision: Precision::Exact,
            c1: None,
            t0: None,
            exact_prep: true,
            noise: None,
        }
    }

    pub fn bits(alpha: f64, s: u32) -> Self {
        Self {
            precision: Precision::Bits(s),
            ..Self::exact(alpha)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Alg1Output {
    /// `|φ_w⟩` over the `M`-dimensional feature register.
    pub phi_w: PureState,
    /// Product of every postselection in the chain.
    pub success_prob: f64,
    /// Kernel filter times flag probability: the `P` of the norm estimate.
    pub flag_prob: f64,
    /// `(label, probability)` of each postselection, in order.
    pub steps: Vec<(String, f64)>,
    pub prep_prob: f64,
    pub c1: f64,
    pub t0: f64,
    pub w_norm_sq_est: f64,
    pub counters: OracleCounters,
    pub fidelity_vs_classical: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Input(format!(
            "alpha must be finite and > 0, got {alpha}"
        )));
    }
    Ok(())
}

fn warn_alpha_window(d: &Dataset, alpha: f64) {
    let nm2 = (d.nm() * d.nm()) as f64;
    let kappa = d.normalized_kappa();
    let (lo, hi) = (nm2 / (10.0 * kappa * kappa), nm2);
    if alpha < lo || alpha > hi {
        log::warn!("alpha = {alpha} lies outside the recommended window [{lo}, {hi}]");
    }
}

/// `0.99 / max(h bound over [lo, hi], h over the decoded support)`.
fn auto_rotation_constant(nm: usize, lo: f64, hi: f64, alpha: f64, support: f64) -> f64 {
    let nmf = nm as f64;
    let analytic = if hi <= nmf {
        bounds::h_max(nm, nmf / lo, alpha)
    } else {
        bounds::h_max_interval(nmf, lo, hi, alpha)
    };
    0.99 / analytic.max(support)
}

fn spectrum_range(x: &numkit::RMatrix) -> Result<(f64, f64)> {
    let f = numkit::svd(x)?;
    let lo = f
        .smallest_nonzero()
        .ok_or_else(|| Error::Degenerate("design matrix has rank 0".into()))?;
    Ok((lo, f.largest()))
}

pub fn algorithm1_run(d: &Dataset, cfg: &Alg1Config) -> Result<Alg1Output> {
    check_alpha(cfg.alpha)?;
    if let Some(nz) = &cfg.noise {
        nz.validate()?;
    }
    warn_alpha_window(d, cfg.alpha);
    let (n, m, nm) = (d.n(), d.m(), d.nm());
    let nmf = nm as f64;
    let mut counters = OracleCounters::default();
    let prep = qcore::prepare_amplitude_state(d.y(), cfg.exact_prep, "y", &mut counters)?;
    let input = PureState::from_real(&qcore::embed_in_system(d.y(), m), SYSTEM)?;

    let oracle = PhaseOracle::single(&hamsim::dilate(d.x())?.generator(nmf))?;
    let t0 = cfg
        .t0
        .unwrap_or_else(|| qcore::auto_t0(&oracle, cfg.precision));
    let (estimated, record) =
        qcore::phase_estimation(&input, SYSTEM, &oracle, t0, cfg.precision, &mut counters)?;
    let filtered = qcore::zero_eigen_filter(&estimated, &record, &counters)?;
    let c1 = match cfg.c1 {
        Some(c) => c,
        None => {
            let (lo, hi) = spectrum_range(d.x())?;
            let support = qcore::support_h_max(&filtered.post_state, &record, cfg.alpha, nmf)?;
            auto_rotation_constant(nm, lo, hi, cfg.alpha, support)
        }
    };
    let rotated = qcore::controlled_rotation_h(&filtered.post_state, &record, cfg.alpha, c1, nmf)?;
    let undone =
        qcore::inverse_phase_estimation(&rotated, SYSTEM, &oracle, &record, &mut counters)?;
    let flag = qcore::postselect(&undone, FLAG, 1, &counters)?;
    let cleared = qcore::postselect(&flag.post_state, PHASE, 0, &counters)?;
    let vpart = qcore::project_range(&cleared.post_state, SYSTEM, n, m, FEATURE, &counters)?;

    let steps: Vec<(String, f64)> = [&filtered, &flag, &cleared, &vpart]
        .iter()
        .map(|r| (r.outcome_label.clone(), r.probability))
        .collect();
    let success_prob = steps.iter().map(|s| s.1).product::<f64>();
    counters.amplification_repetitions += qcore::amplitude_amplify_count(success_prob)?;
    let flag_prob = filtered.probability * flag.probability;
    let (w_norm_sq_est, reps) = norm_estimate(flag_prob, c1, d, cfg)?;
    counters.estimation_repetitions += reps;

    let w = classical::solve_ridge_svd(d, cfg.alpha)?.w;
    let fidelity_vs_classical = vpart.post_state.fidelity(&to_unit(&w)).clamp(0.0, 1.0);
    Ok(Alg1Output {
        phi_w: vpart.post_state,
        success_prob,
        flag_prob,
        steps,
        prep_prob: prep.probability,
        c1,
        t0,
        w_norm_sq_est,
        counters,
        fidelity_vs_classical,
    })
}

fn to_unit(v: &RVector) -> CVector {
    let norm = v.norm();
    CVector::from_iterator(v.len(), v.iter().map(|x| C64::new(x / norm, 0.0)))
}

fn norm_estimate(p: f64, c1: f64, d: &Dataset, cfg: &Alg1Config) -> Result<(f64, u64)> {
    let scale = c1 * c1 * (d.nm() * d.nm()) as f64;
    match &cfg.noise {
        None => Ok((p * qcore::estimate_norm_sq(d.y(), 0.0, None)? / scale, 0)),
        Some(nz) => {
            let mut r = rng::stream(nz.seed, ALG1_STREAM);
            let (p_est, reps) = qcore::amplitude_estimate(p, nz.epsilon / 3.0, Some(&mut r))?;
            let y2 = qcore::estimate_norm_sq(d.y(), nz.epsilon / 3.0, Some(&mut r))?;
            Ok((p_est.min(1.0) * y2 / scale, reps))
        }
    }
}

/// `‖w‖² ≈ P ‖y‖² / (C₁² (N+M)²)`. Deterministic given the config seed.
pub fn estimate_w_norm(out: &Alg1Output, d: &Dataset, cfg: &Alg1Config) -> Result<f64> {
    Ok(norm_estimate(out.flag_prob, out.c1, d, cfg)?.0)
}

/// `⟨x̃|φ_w⟩ · ‖x‖ · √‖w‖²`.
pub fn predict(out: &Alg1Output, x_new: &RVector) -> Result<f64> {
    if x_new.len() != out.phi_w.dim() {
        return Err(Error::Input(format!(
            "x has {} features, the model has {}",
            x_new.len(),
            out.phi_w.dim()
        )));
    }
    let norm = x_new.norm();
    if norm == 0.0 {
        return Err(Error::Input("cannot predict at x = 0".into()));
    }
    let xs = PureState::from_real(x_new, FEATURE)?;
    Ok(qcore::signed_overlap_test(&xs, &out.phi_w)? * norm * out.w_norm_sq_est.sqrt())
}

/// Relative errors assigned to each estimated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSplit {
    pub eps_y: f64,
    pub eps_w: f64,
    pub eps_1: f64,
    pub eps_2: f64,
}

impl NoiseSplit {
    pub fn from_epsilon(eps: f64) -> Self {
        Self {
            eps_y: eps,
            eps_w: eps / 3.0,
            eps_1: eps / 3.0,
            eps_2: eps / 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg2Config {
    pub k: usize,
    pub alphas: Vec<f64>,
    pub precision: Precision,
    pub c2: Option<f64>,
    pub t0: Option<f64>,
    pub exact_prep: bool,
    pub noise: Option<NoiseModel>,
}

impl Alg2Config {
    pub fn exact(k: usize, alphas: Vec<f64>) -> Self {
        Self {
            k,
            alphas,
            precision: Precision::Exact,
            c2: None,
            t0: None,
            exact_prep: true,
            noise: None,
        }
    }
}

/// Fold count and whether it falls short of the recommended minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldChoice {
    pub k: usize,
    pub recommended: usize,
    pub below_recommendation: bool,
}

pub fn resolve_k(d: &Dataset, requested: Option<usize>) -> FoldChoice {
    let recommended = bounds::k_min_recommendation(d);
    let k = requested.unwrap_or(recommended);
    let below = k < recommended;
    if below {
        log::warn!("K = {k} is below the recommended {recommended}");
    }
    FoldChoice {
        k,
        recommended,
        below_recommendation: below,
    }
}

/// `|ψ_w⟩` over `(index, feature)` and the probabilities behind it.
#[derive(Debug, Clone)]
pub struct PsiW {
    pub state: PureState,
    /// Kernel filter times flag probability.
    pub p_w: f64,
    /// Probability of keeping only held-out-free samples when preparing
    /// `|ψ₀⟩`.
    pub p_kick: f64,
    pub success_prob: f64,
    pub c2: f64,
    pub t0: f64,
}

pub fn algorithm2_psi_w(
    d: &Dataset,
    p: &FoldPartition,
    alpha: f64,
    cfg: &Alg2Config,
    counters: &mut OracleCounters,
) -> Result<PsiW> {
    check_alpha(alpha)?;
    let (n, m, nm) = (d.n(), d.m(), d.nm());
    let nmf = nm as f64;
    let psi0 = qcore::prepare_psi0(d, p, counters)?;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut hs = Vec::with_capacity(p.k);
    for l in 0..p.k {
        let fd = classical::masked_design(d, p, l)?;
        let (a, b) = spectrum_range(&fd.x_minus_l)
            .map_err(|_| Error::Degenerate(format!("fold {l} leaves an all-zero design")))?;
        lo = lo.min(a);
        hi = hi.max(b);
        hs.push(hamsim::dilate(&fd.x_minus_l)?.generator(nmf));
    }
    let oracle = PhaseOracle::conditional(INDEX, p.assignment(), &hs)?;
    let t0 = cfg
        .t0
        .unwrap_or_else(|| qcore::auto_t0(&oracle, cfg.precision));
    let (estimated, record) = qcore::phase_estimation(
        &psi0.post_state,
        SYSTEM,
        &oracle,
        t0,
        cfg.precision,
        counters,
    )?;
    let filtered = qcore::zero_eigen_filter(&estimated, &record, counters)?;
    let c2 = match cfg.c2 {
        Some(c) => c,
        None => {
            let support = qcore::support_h_max(&filtered.post_state, &record, alpha, nmf)?;
            auto_rotation_constant(nm, lo, hi, alpha, support)
        }
    };
    let rotated = qcore::controlled_rotation_h(&filtered.post_state, &record, alpha, c2, nmf)?;
    let undone = qcore::inverse_phase_estimation(&rotated, SYSTEM, &oracle, &record, counters)?;
    let flag = qcore::postselect(&undone, FLAG, 1, counters)?;
    let cleared = qcore::postselect(&flag.post_state, PHASE, 0, counters)?;
    let vpart = qcore::project_range(&cleared.post_state, SYSTEM, n, m, FEATURE, counters)?;
    let p_w = filtered.probability * flag.probability;
    Ok(PsiW {
        state: vpart.post_state,
        p_w,
        p_kick: psi0.probability,
        success_prob: p_w * cleared.probability * vpart.probability,
        c2,
        t0,
    })
}

/// The `|ψ_w⟩` amplitudes built directly from the classical fold solutions.
pub fn assemble_psi_w(d: &Dataset, p: &FoldPartition, alpha: f64) -> Result<RVector> {
    let m = d.m();
    let ws = (0..p.k)
        .map(|l| classical::fold_solution(d, p, l, alpha).map(|s| s.w))
        .collect::<Result<Vec<_>>>()?;
    let fold = p.assignment();
    let mut out = RVector::zeros(d.n() * m);
    for tau in 0..d.n() {
        out.rows_mut(tau * m, m).copy_from(&ws[fold[tau]]);
    }
    let norm = out.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("every fold solution is zero".into()));
    }
    Ok(out / norm)
}

/// `|ŷ⟩ ∝ (w_{l(τ)}ᵀ x_τ)_τ` over the index register, and `P₁`.
pub fn algorithm2_yhat(
    psi_w: &PureState,
    d: &Dataset,
    p: &FoldPartition,
    counters: &mut OracleCounters,
) -> Result<(PureState, f64)> {
    if p.n() != d.n() {
        return Err(Error::Input("partition does not match dataset".into()));
    }
    let rotated = qcore::data_rotation(psi_w, INDEX, FEATURE, d.x(), counters)?;
    let flag = qcore::postselect(&rotated, FLAG, 1, counters)?;
    let uniform = CVector::from_element(d.m(), C64::new(1.0, 0.0));
    let proj = qcore::project_onto(&flag.post_state, FEATURE, &uniform, counters)
        .map_err(|_| Error::Degenerate("every held-out prediction is zero".into()))?;
    Ok((proj.post_state, flag.probability * proj.probability))
}

/// One `α` of the quantum cross-validation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEstimateRow {
    pub alpha: f64,
    pub e1_est: f64,
    pub e2_est: f64,
    pub s3_est: f64,
    /// `E1 + E2 − 2·S3`.
    pub e_est: f64,
    pub p_w: f64,
    pub p1: f64,
    pub p2: f64,
    pub sign_s3: f64,
    pub p_kick: f64,
    pub c2: f64,
    pub classical: CvTerms,
    /// False when the measured sign of `S3` is negative, i.e. when the
    /// "a sensible model predicts positively" shortcut would be wrong.
    pub positive_sign_heuristic_holds: bool,
    pub noise: bool,
    pub counters: OracleCounters,
}

fn noise_stream(nz: &NoiseModel, alpha: f64) -> Rng64 {
    rng::stream(nz.seed, alpha.to_bits())
}

#[allow(non_snake_case)]
pub fn estimate_E_terms(
    d: &Dataset,
    p: &FoldPartition,
    alpha: f64,
    cfg: &Alg2Config,
) -> Result<CvEstimateRow> {
    if let Some(nz) = &cfg.noise {
        nz.validate()?;
    }
    let mut counters = OracleCounters::default();
    let psi = algorithm2_psi_w(d, p, alpha, cfg, &mut counters)?;
    let (yhat, p1) = algorithm2_yhat(&psi.state, d, p, &mut counters)?;
    let ystate =
        qcore::prepare_amplitude_state(d.y(), cfg.exact_prep, INDEX, &mut counters)?.post_state;
    let p2 = qcore::swap_test(&ystate, &yhat)?;
    if p2 < 0.5 - 1e-10 {
        return Err(Error::Contract(format!(
            "swap test probability {p2} is below 1/2"
        )));
    }
    let overlap = qcore::signed_overlap_test(&ystate, &yhat)?;
    let sign_s3 = if overlap < 0.0 { -1.0 } else { 1.0 };

    let (e1, p_w, p1, p2) = match &cfg.noise {
        None => (
            qcore::estimate_norm_sq(d.y(), 0.0, None)?,
            psi.p_w,
            p1,
            p2.min(1.0),
        ),
        Some(nz) => {
            let split = NoiseSplit::from_epsilon(nz.epsilon);
            let mut r = noise_stream(nz, alpha);
            let e1 = qcore::estimate_norm_sq(d.y(), split.eps_y, Some(&mut r))?;
            let (pw, a) = qcore::amplitude_estimate(psi.p_w, split.eps_w, Some(&mut r))?;
            let (q1, b) = qcore::amplitude_estimate(p1, split.eps_1, Some(&mut r))?;
            let (q2, c) = qcore::amplitude_estimate(p2.min(1.0), split.eps_2, Some(&mut r))?;
            counters.estimation_repetitions += a + b + c;
            (e1, pw.min(1.0), q1.min(1.0), q2.clamp(0.5, 1.0))
        }
    };
    let (n, m) = (d.n() as f64, d.m() as f64);
    let nm = d.nm() as f64;
    let x_max = d.meta().x_max;
    let c = psi.c2;
    let common = p1 * p_w * psi.p_kick * n * m;
    let e2_est = common * x_max * x_max * e1 / (c * c * nm * nm);
    let s3_est = sign_s3 * ((2.0 * p2 - 1.0) * common).sqrt() * e1 * x_max / (c * nm);
    Ok(CvEstimateRow {
        alpha,
        e1_est: e1,
        e2_est,
        s3_est,
        e_est: e1 + e2_est - 2.0 * s3_est,
        p_w,
        p1,
        p2,
        sign_s3,
        p_kick: psi.p_kick,
        c2: c,
        classical: classical::cv_error_exact(d, p, alpha)?,
        positive_sign_heuristic_holds: sign_s3 > 0.0,
        noise: cfg.noise.is_some(),
        counters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEstimate {
    pub k: usize,
    pub rows: Vec<CvEstimateRow>,
    pub quantum_index: usize,
    pub classical_index: usize,
    pub alpha_hat_quantum: f64,
    pub alpha_hat_classical: f64,
    pub counters: OracleCounters,
}

impl CvEstimate {
    pub fn agree(&self) -> bool {
        self.quantum_index == self.classical_index
    }
}

pub fn select_alpha_quantum(
    d: &Dataset,
    p: &FoldPartition,
    cfg: &Alg2Config,
) -> Result<CvEstimate> {
    if cfg.alphas.is_empty() {
        return Err(Error::Input("alpha grid is empty".into()));
    }
    if p.k != cfg.k {
        return Err(Error::Input(format!(
            "partition has K = {}, config {}",
            p.k, cfg.k
        )));
    }
    let rows = cfg
        .alphas
        .par_iter()
        .map(|&a| estimate_E_terms(d, p, a, cfg))
        .collect::<Result<Vec<_>>>()?;
    let est: Vec<f64> = rows.iter().map(|r| r.e_est).collect();
    let exact: Vec<f64> = rows.iter().map(|r| r.classical.e).collect();
    let quantum_index = classical::argmin_prefer_larger(&cfg.alphas, &est)?;
    let classical_index = classical::argmin_prefer_larger(&cfg.alphas, &exact)?;
    let mut counters = OracleCounters::default();
    for r in &rows {
        counters.merge(&r.counters);
    }
    Ok(CvEstimate {
        k: p.k,
        alpha_hat_quantum: cfg.alphas[quantum_index],
        alpha_hat_classical: cfg.alphas[classical_index],
        quantum_index,
        classical_index,
        rows,
        counters,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub cv: CvEstimate,
    pub alpha_hat: f64,
    pub fit: Alg1Output,
}

/// Cross-validation picks `α̂`, then the ridge state is prepared at it. `cfg1.alpha`
/// is ignored.
pub fn whole_pipeline(d: &Dataset, cfg2: &Alg2Config, cfg1: &Alg1Config) -> Result<PipelineOutput> {
    let p = classical::partition_folds(d.n(), cfg2.k)?;
    let cv = select_alpha_quantum(d, &p, cfg2)?;
    let alpha_hat = cv.alpha_hat_quantum;
    let fit = algorithm1_run(
        d,
        &Alg1Config {
            alpha: alpha_hat,
            ..cfg1.clone()
        },
    )?;
    Ok(PipelineOutput { cv, alpha_hat, fit })
}

/// Runs the parallel-simulation channel on the fold generators
/// `X̃_{-l}/(N+M)` and compares it to the exact conditional evolution.
pub fn fold_channel_check(
    d: &Dataset,
    p: &FoldPartition,
    t: f64,
    epsilon: f64,
    budget: usize,
    seed: u64,
) -> Result<(usize, ChannelError)> {
    let nmf = d.nm() as f64;
    let a_list = (0..p.k)
        .map(|l| {
            let fd = classical::masked_design(d, p, l)?;
            Ok(hamsim::dilate(&fd.x_minus_l)?.generator(nmf))
        })
        .collect::<Result<Vec<CMatrix>>>()?;
    let n = hamsim::step_count(hamsim::max_entry(&a_list), t, epsilon, CHANNEL_SAFETY)?;
    let cfg = ChannelConfig::new(t, n)?;
    let states = hamsim::default_test_states(p.k, d.nm(), seed);
    Ok((n, hamsim::channel_error(&a_list, &cfg, &states, budget)?))
}
