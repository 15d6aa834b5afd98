//! State-vector register machinery.
//!
//! A [`PureState`] is a complex amplitude vector over a [`RegisterLayout`].
//! The first register is the most significant digit of the basis index.
//! Every operation returns a new state; oracle usage is tallied in a
//! per-run [`OracleCounters`] passed by the caller.
//!
//! Phase estimation uses `U = exp(-i H t0)`. After the controlled powers the
//! phase register is read out with `|x⟩ ↦ D^{-1/2} Σ_j e^{+2πi x j / D} |j⟩`,
//! so an eigenvalue `μ` peaks at `j = D·μ t0 / 2π (mod D)`. Register values
//! `j >= D/2` decode as negative.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::classical::{Dataset, FoldPartition};
use crate::error::{Error, Result};
use crate::numkit::{self, CMatrix, CVector, EigFactors, RMatrix, RVector, C64};
use crate::rng::Rng64;

pub const PHASE: &str = "phase";
pub const FLAG: &str = "flag";

/// Branches lighter than this are not treated as part of the decoded support
/// when checking a controlled rotation.
pub const SUPPORT_WEIGHT: f64 = 1e-6;

const IMPOSSIBLE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    registers: Vec<(String, usize)>,
}

impl RegisterLayout {
    pub fn new(registers: &[(&str, usize)]) -> Self {
        Self {
            registers: registers.iter().map(|(n, d)| (n.to_string(), *d)).collect(),
        }
    }

    pub fn registers(&self) -> &[(String, usize)] {
        &self.registers
    }

    pub fn total(&self) -> usize {
        self.registers.iter().map(|r| r.1).product()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.0 == name)
            .ok_or_else(|| Error::Input(format!("no register named {name:?}")))
    }

    pub fn dim(&self, name: &str) -> Result<usize> {
        Ok(self.registers[self.position(name)?].1)
    }

    pub fn stride(&self, pos: usize) -> usize {
        self.registers[pos + 1..].iter().map(|r| r.1).product()
    }

    /// Value of register `pos` inside basis index `index`.
    pub fn value_of(&self, index: usize, pos: usize) -> usize {
        (index / self.stride(pos)) % self.registers[pos].1
    }

    fn appended(&self, name: &str, dim: usize) -> Self {
        let mut out = self.clone();
        out.registers.push((name.to_string(), dim));
        out
    }

    fn removed(&self, pos: usize) -> Self {
        let mut out = self.clone();
        out.registers.remove(pos);
        out
    }

    fn resized(&self, pos: usize, name: &str, dim: usize) -> Self {
        let mut out = self.clone();
        out.registers[pos] = (name.to_string(), dim);
        out
    }

    /// Groups basis indices into blocks that share every register outside
    /// `active`. Inside a block, indices run row-major over `active` in the
    /// given order.
    fn blocks(&self, active: &[usize]) -> Vec<Vec<usize>> {
        let inactive: Vec<usize> = (0..self.registers.len())
            .filter(|p| !active.contains(p))
            .collect();
        let bases = odometer(self, &inactive);
        let locals = odometer(self, active);
        bases
            .iter()
            .map(|b| locals.iter().map(|l| b + l).collect())
            .collect()
    }
}

/// All offsets reachable by varying the registers in `positions`, row-major.
fn odometer(layout: &RegisterLayout, positions: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &p in positions {
        let (dim, stride) = (layout.registers[p].1, layout.stride(p));
        out = out
            .iter()
            .flat_map(|o| (0..dim).map(move |v| o + v * stride))
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
    layout: RegisterLayout,
}

impl PureState {
    /// Checks the unit norm within 1e-10.
    pub fn new(amplitudes: CVector, layout: RegisterLayout) -> Result<Self> {
        if amplitudes.len() != layout.total() {
            return Err(Error::Input(format!(
                "{} amplitudes for a layout of dimension {}",
                amplitudes.len(),
                layout.total()
            )));
        }
        if (amplitudes.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Contract(format!(
                "state norm is {}, expected 1",
                amplitudes.norm()
            )));
        }
        Ok(Self { amplitudes, layout })
    }

    /// Normalizes a nonzero vector over a single register.
    pub fn from_real(v: &RVector, name: &str) -> Result<Self> {
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::Input("cannot normalize a zero vector".into()));
        }
        Ok(Self {
            amplitudes: v.map(|x| C64::new(x / norm, 0.0)),
            layout: RegisterLayout::new(&[(name, v.len())]),
        })
    }

    fn unchecked(amplitudes: CVector, layout: RegisterLayout) -> Self {
        Self { amplitudes, layout }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// `|⟨self|other⟩|²` over raw amplitudes.
    pub fn fidelity(&self, other: &CVector) -> f64 {
        let n = other.norm();
        if n == 0.0 {
            return 0.0;
        }
        (self.amplitudes.dotc(other) / n).norm_sqr()
    }

    /// Real parts, provided every imaginary part is below `tol` relative to
    /// the largest modulus.
    pub fn real_amplitudes(&self, tol: f64) -> Result<RVector> {
        let scale = self.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if self
            .amplitudes
            .iter()
            .any(|a| a.im.abs() > tol * scale.max(1e-300))
        {
            return Err(Error::Contract("state has complex amplitudes".into()));
        }
        Ok(self.amplitudes.map(|a| a.re))
    }

    /// Probability of each value of register `name`.
    pub fn marginal(&self, name: &str) -> Result<Vec<f64>> {
        let pos = self.layout.position(name)?;
        let mut out = vec![0.0; self.layout.registers[pos].1];
        for (i, a) in self.amplitudes.iter().enumerate() {
            out[self.layout.value_of(i, pos)] += a.norm_sqr();
        }
        Ok(out)
    }

    /// Appends a register prepared in `|0⟩`.
    pub fn with_register(&self, name: &str, dim: usize) -> Self {
        let mut amps = CVector::zeros(self.dim() * dim);
        for (i, a) in self.amplitudes.iter().enumerate() {
            amps[i * dim] = *a;
        }
        Self::unchecked(amps, self.layout.appended(name, dim))
    }
}

/// Per-run oracle and simulation tallies. Counters only ever grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    pub o_x: u64,
    pub o_x_inv: u64,
    pub o_y: u64,
    /// Controlled Hamiltonian-simulation invocations inside phase estimation.
    pub hamsim_invocations: u64,
    /// Accounted amplitude-amplification repetitions.
    pub amplification_repetitions: u64,
    /// Accounted amplitude-estimation repetitions.
    pub estimation_repetitions: u64,
}

impl OracleCounters {
    pub fn snapshot(&self) -> Self {
        *self
    }

    pub fn total_oracle_calls(&self) -> u64 {
        self.o_x + self.o_x_inv + self.o_y
    }

    pub fn merge(&mut self, other: &OracleCounters) {
        self.o_x += other.o_x;
        self.o_x_inv += other.o_x_inv;
        self.o_y += other.o_y;
        self.hamsim_invocations += other.hamsim_invocations;
        self.amplification_repetitions += other.amplification_repetitions;
        self.estimation_repetitions += other.estimation_repetitions;
    }

    fn hamsim(&mut self, invocations: u64) {
        self.hamsim_invocations += invocations;
        self.o_x += invocations;
        self.o_x_inv += invocations;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostselectRecord {
    pub probability: f64,
    pub post_state: PureState,
    pub outcome_label: String,
    pub oracle_calls: OracleCounters,
}

/// Renormalizes a branch with squared norm `weight`.
fn branch(
    amps: CVector,
    layout: RegisterLayout,
    label: &str,
    counters: &OracleCounters,
) -> Result<PostselectRecord> {
    let weight = amps.norm_squared();
    if weight < IMPOSSIBLE {
        return Err(Error::Degenerate(format!(
            "outcome {label:?} has probability {weight:e}"
        )));
    }
    Ok(PostselectRecord {
        probability: weight.min(1.0),
        post_state: PureState::unchecked(amps / C64::from(weight.sqrt()), layout),
        outcome_label: label.to_string(),
        oracle_calls: counters.snapshot(),
    })
}

/// Amplitude encoding of `v`. In circuit mode the success probability is
/// `Σ v_j² / (N ‖v‖²_max)`; with `exact` it is 1.
pub fn prepare_amplitude_state(
    v: &RVector,
    exact: bool,
    name: &str,
    counters: &mut OracleCounters,
) -> Result<PostselectRecord> {
    let state = PureState::from_real(v, name)?;
    let max = v.amax();
    let probability = if exact {
        counters.o_y += 1;
        1.0
    } else {
        counters.o_y += 2;
        v.norm_squared() / (v.len() as f64 * max * max)
    };
    Ok(PostselectRecord {
        probability,
        post_state: state,
        outcome_label: "amplitude encoding".into(),
        oracle_calls: counters.snapshot(),
    })
}

/// Multiplies `value` by `1 + u`, `u ~ U[-rel_err, rel_err]`, when a noise
/// source is given.
pub fn perturb(value: f64, rel_err: f64, rng: Option<&mut Rng64>) -> f64 {
    use rand::Rng;
    match rng {
        Some(r) if rel_err > 0.0 => value * (1.0 + r.random_range(-rel_err..=rel_err)),
        _ => value,
    }
}

/// `‖v‖² = N · P_y · ‖v‖²_max`, optionally with multiplicative noise.
pub fn estimate_norm_sq(v: &RVector, rel_err: f64, rng: Option<&mut Rng64>) -> Result<f64> {
    if !(rel_err >= 0.0) {
        return Err(Error::Input(format!("rel_err must be >= 0, got {rel_err}")));
    }
    let max = v.amax();
    if max == 0.0 {
        return Ok(0.0);
    }
    let p_y = v.norm_squared() / (v.len() as f64 * max * max);
    Ok(perturb(v.len() as f64 * p_y * max * max, rel_err, rng))
}

/// `|0,v⟩`: `v` in the leading `N` slots of an `N+M` register.
pub fn embed_in_system(v: &RVector, m: usize) -> RVector {
    let mut out = RVector::zeros(v.len() + m);
    out.rows_mut(0, v.len()).copy_from(v);
    out
}

/// `|ψ₀⟩ ∝ Σ_l Σ_{τ∈S_l} |τ⟩ ⊗ |0, y_{-l}⟩` over `(index, system)`.
/// The probability is the kick-out postselection
/// `Σ_l |S_l| ‖y_{-l}‖² / (N ‖y‖²)`, equal to `(K-1)/K` for equal folds.
pub fn prepare_psi0(
    d: &Dataset,
    p: &FoldPartition,
    counters: &mut OracleCounters,
) -> Result<PostselectRecord> {
    let (n, m) = (d.n(), d.m());
    let nm = n + m;
    if p.n() != n {
        return Err(Error::Input("partition does not match dataset".into()));
    }
    let fold = p.assignment();
    let y = d.y();
    let mut amps = CVector::zeros(n * nm);
    for tau in 0..n {
        for j in 0..n {
            if fold[j] != fold[tau] {
                amps[tau * nm + j] = C64::new(y[j], 0.0);
            }
        }
    }
    counters.o_y += 2;
    let layout = RegisterLayout::new(&[("index", n), ("system", nm)]);
    let kept = amps.norm_squared();
    let total = n as f64 * y.norm_squared();
    let mut rec = branch(amps, layout, "kick-out", counters)?;
    rec.probability = kept / total;
    Ok(rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    /// An `s`-qubit phase register read out by the Fourier transform.
    Bits(u32),
    /// An ideal register holding the eigen-index, decoded through a table of
    /// exact eigenvalues.
    Exact,
}

/// Hermitian generators applied to a system register, optionally selected by
/// the value of a control register.
#[derive(Debug, Clone)]
pub struct PhaseOracle {
    eig: Vec<EigFactors>,
    control: Option<(String, Vec<usize>)>,
}

impl PhaseOracle {
    pub fn single(h: &CMatrix) -> Result<Self> {
        Ok(Self {
            eig: vec![numkit::eigh(h)?],
            control: None,
        })
    }

    /// Generator `hs[assignment[v]]` acts when `control` holds `v`.
    pub fn conditional(control: &str, assignment: Vec<usize>, hs: &[CMatrix]) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&g| g >= hs.len()) {
            return Err(Error::Input(format!("generator {bad} out of range")));
        }
        Ok(Self {
            eig: hs.iter().map(numkit::eigh).collect::<Result<_>>()?,
            control: Some((control.to_string(), assignment)),
        })
    }

    /// Largest `|μ|` over every generator.
    pub fn spectral_radius(&self) -> f64 {
        self.eig
            .iter()
            .flat_map(|e| e.eigenvalues.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
    }

    fn control_pos(&self, layout: &RegisterLayout) -> Result<Option<(usize, &[usize])>> {
        match &self.control {
            None => Ok(None),
            Some((name, assign)) => {
                let pos = layout.position(name)?;
                if layout.registers[pos].1 != assign.len() {
                    return Err(Error::Input(format!(
                        "control register {name:?} has dimension {}, assignment covers {}",
                        layout.registers[pos].1,
                        assign.len()
                    )));
                }
                Ok(Some((pos, assign.as_slice())))
            }
        }
    }

    fn generator_at(
        ctrl: Option<(usize, &[usize])>,
        layout: &RegisterLayout,
        index: usize,
    ) -> usize {
        ctrl.map_or(0, |(pos, assign)| assign[layout.value_of(index, pos)])
    }

    fn decode_table(&self) -> Vec<Vec<f64>> {
        let radius = self.spectral_radius().max(1.0);
        self.eig
            .iter()
            .map(|e| {
                e.eigenvalues
                    .iter()
                    .map(|&v| if v.abs() < 1e-12 * radius { 0.0 } else { v })
                    .collect()
            })
            .collect()
    }
}

/// `t0` placing the largest `|μ|` at phase `1/2 - 2^{-s}`.
pub fn auto_t0(oracle: &PhaseOracle, precision: Precision) -> f64 {
    let radius = oracle.spectral_radius();
    let theta = match precision {
        Precision::Bits(s) => 0.5 - 0.5f64.powi(s as i32),
        Precision::Exact => 0.25,
    };
    if radius == 0.0 {
        1.0
    } else {
        2.0 * PI * theta / radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhaseDecoder {
    Bits {
        s: u32,
        t0: f64,
    },
    Table {
        control: Option<(String, Vec<usize>)>,
        values: Vec<Vec<f64>>,
    },
}

impl PhaseDecoder {
    /// Signed eigenvalue estimate for register value `j`.
    pub fn bits_value(s: u32, t0: f64, j: usize) -> f64 {
        let d = 1usize << s;
        let signed = if j >= d / 2 {
            j as f64 - d as f64
        } else {
            j as f64
        };
        2.0 * PI * signed / (d as f64 * t0)
    }

    /// `(branch key, decoded value)` of a basis index.
    fn decode(
        &self,
        layout: &RegisterLayout,
        phase_pos: usize,
        index: usize,
    ) -> Result<(usize, f64)> {
        let j = layout.value_of(index, phase_pos);
        match self {
            PhaseDecoder::Bits { s, t0 } => Ok((j, Self::bits_value(*s, *t0, j))),
            PhaseDecoder::Table { control, values } => {
                let g = match control {
                    None => 0,
                    Some((name, assign)) => assign[layout.value_of(index, layout.position(name)?)],
                };
                Ok((g * layout.registers[phase_pos].1 + j, values[g][j]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimateRecord {
    pub precision: Precision,
    pub t0: f64,
    pub decoder: PhaseDecoder,
    /// `(decoded value, weight)`, ascending by value; weights sum to 1.
    pub peaks: Vec<(f64, f64)>,
}

impl PhaseEstimateRecord {
    /// Weight-averaged distance from each decoded value to the nearest value
    /// in `truth`.
    pub fn mean_decoding_error(&self, truth: &[f64]) -> f64 {
        self.peaks
            .iter()
            .map(|(v, w)| {
                w * truth
                    .iter()
                    .map(|t| (t - v).abs())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }
}

fn decoded_weights(state: &PureState, decoder: &PhaseDecoder) -> Result<Vec<(usize, f64, f64)>> {
    let pos = state.layout.position(PHASE)?;
    let mut map: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
    for (i, a) in state.amplitudes.iter().enumerate() {
        let (key, value) = decoder.decode(&state.layout, pos, i)?;
        map.entry(key).or_insert((value, 0.0)).1 += a.norm_sqr();
    }
    Ok(map.into_iter().map(|(k, (v, w))| (k, v, w)).collect())
}

fn peaks(state: &PureState, decoder: &PhaseDecoder) -> Result<Vec<(f64, f64)>> {
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut all: Vec<(f64, f64)> = decoded_weights(state, decoder)?
        .into_iter()
        .map(|(_, v, w)| (v, w))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (v, w) in all {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => merged.push((v, w)),
        }
    }
    Ok(merged)
}

/// Normalized Walsh-Hadamard transform, `H^{⊗s}` on a `2^s` register.
fn walsh_hadamard(buf: &mut [C64]) {
    let n = buf.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (buf[j], buf[j + h]);
                buf[j] = a + b;
                buf[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Forward,
    Inverse,
}

/// `Σ_k v_k e^{-i μ_k τ} v_k† ψ`.
fn evolve(eig: &EigFactors, psi: &[C64], tau: f64) -> Vec<C64> {
    let v = &eig.eigenvectors;
    let d = psi.len();
    let coeff: Vec<C64> = (0..d)
        .map(|k| {
            let c: C64 = (0..d).map(|r| v[(r, k)].conj() * psi[r]).sum();
            c * C64::from_polar(1.0, -eig.eigenvalues[k] * tau)
        })
        .collect();
    (0..d)
        .map(|r| (0..d).map(|k| v[(r, k)] * coeff[k]).sum())
        .collect()
}

fn apply_phase_register(
    state: &PureState,
    system: &str,
    oracle: &PhaseOracle,
    precision: Precision,
    t0: f64,
    dir: Direction,
) -> Result<PureState> {
    let layout = &state.layout;
    let sys = layout.position(system)?;
    let ph = layout.position(PHASE)?;
    let ctrl = oracle.control_pos(layout)?;
    let d = layout.registers[sys].1;
    let dp = layout.registers[ph].1;
    if oracle.eig.iter().any(|e| e.dim() != d) {
        return Err(Error::Input(format!(
            "generator dimension does not match register {system:?} of dimension {d}"
        )));
    }
    let mut out = state.amplitudes.clone();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft(
        dp,
        match dir {
            Direction::Forward => rustfft::FftDirection::Inverse,
            Direction::Inverse => rustfft::FftDirection::Forward,
        },
    );
    let scale = 1.0 / (dp as f64).sqrt();
    for block in layout.blocks(&[sys, ph]) {
        let eig = &oracle.eig[PhaseOracle::generator_at(ctrl, layout, block[0])];
        let mut buf: Vec<C64> = block.iter().map(|&i| out[i]).collect();
        match precision {
            Precision::Bits(_) => {
                if dir == Direction::Forward {
                    buf.chunks_mut(dp).for_each(walsh_hadamard);
                }
                if dir == Direction::Inverse {
                    for row in buf.chunks_mut(dp) {
                        fft.process(row);
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                }
                let sign = if dir == Direction::Forward { 1.0 } else { -1.0 };
                for x in 1..dp {
                    let psi: Vec<C64> = (0..d).map(|r| buf[r * dp + x]).collect();
                    let evolved = evolve(eig, &psi, sign * t0 * x as f64);
                    for r in 0..d {
                        buf[r * dp + x] = evolved[r];
                    }
                }
                if dir == Direction::Forward {
                    for row in buf.chunks_mut(dp) {
                        fft.process(row);
                        row.iter_mut().for_each(|v| *v *= scale);
                    }
                }
                if dir == Direction::Inverse {
                    buf.chunks_mut(dp).for_each(walsh_hadamard);
                }
            }
            Precision::Exact => {
                // Controlled cyclic shift of the register by the eigen-index,
                // carried out in the eigenbasis of the system.
                let v = &eig.eigenvectors;
                let mut coeff = vec![C64::ZERO; d * dp];
                for x in 0..dp {
                    for k in 0..d {
                        let c: C64 = (0..d).map(|r| v[(r, k)].conj() * buf[r * dp + x]).sum();
                        let target = match dir {
                            Direction::Forward => (x + k) % dp,
                            Direction::Inverse => (x + dp - k % dp) % dp,
                        };
                        coeff[k * dp + target] = c;
                    }
                }
                for x in 0..dp {
                    for r in 0..d {
                        buf[r * dp + x] = (0..d).map(|k| v[(r, k)] * coeff[k * dp + x]).sum();
                    }
                }
            }
        }
        for (&i, v) in block.iter().zip(buf) {
            out[i] = v;
        }
    }
    Ok(PureState::unchecked(out, layout.clone()))
}

/// Appends a phase register and runs phase estimation of `exp(-i H t0)` on
/// register `system`.
pub fn phase_estimation(
    input: &PureState,
    system: &str,
    oracle: &PhaseOracle,
    t0: f64,
    precision: Precision,
    counters: &mut OracleCounters,
) -> Result<(PureState, PhaseEstimateRecord)> {
    let d = input.layout.dim(system)?;
    let (dim, decoder) = match precision {
        Precision::Bits(s) => {
            if s == 0 || s > 20 {
                return Err(Error::Input(format!(
                    "phase bits must be in 1..=20, got {s}"
                )));
            }
            let theta = oracle.spectral_radius() * t0 / (2.0 * PI);
            if theta >= 0.5 {
                return Err(Error::Aliasing(format!(
                    "largest phase {theta} leaves the signed window (-1/2, 1/2); reduce t0"
                )));
            }
            counters.hamsim((1u64 << s) - 1);
            (1usize << s, PhaseDecoder::Bits { s, t0 })
        }
        Precision::Exact => {
            counters.hamsim(1);
            (
                d,
                PhaseDecoder::Table {
                    control: oracle.control.clone(),
                    values: oracle.decode_table(),
                },
            )
        }
    };
    let widened = input.with_register(PHASE, dim);
    let state = apply_phase_register(&widened, system, oracle, precision, t0, Direction::Forward)?;
    let peaks = peaks(&state, &decoder)?;
    Ok((
        state,
        PhaseEstimateRecord {
            precision,
            t0,
            decoder,
            peaks,
        },
    ))
}

/// Undoes [`phase_estimation`]; the phase register stays in place.
pub fn inverse_phase_estimation(
    state: &PureState,
    system: &str,
    oracle: &PhaseOracle,
    record: &PhaseEstimateRecord,
    counters: &mut OracleCounters,
) -> Result<PureState> {
    counters.hamsim(match record.precision {
        Precision::Bits(s) => (1u64 << s) - 1,
        Precision::Exact => 1,
    });
    apply_phase_register(
        state,
        system,
        oracle,
        record.precision,
        record.t0,
        Direction::Inverse,
    )
}

/// `h(λ, α) = (N+M) λ / (λ² + α)`, zero at `λ = 0`.
pub fn h(lambda: f64, alpha: f64, nm: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        nm * lambda / (lambda * lambda + alpha)
    }
}

/// Largest `|h|` over decoded branches whose weight reaches
/// [`SUPPORT_WEIGHT`]. Decoded values are in generator units and get
/// multiplied by `nm`.
pub fn support_h_max(
    state: &PureState,
    record: &PhaseEstimateRecord,
    alpha: f64,
    nm: f64,
) -> Result<f64> {
    Ok(decoded_weights(state, &record.decoder)?
        .iter()
        .filter(|(_, _, w)| *w >= SUPPORT_WEIGHT)
        .map(|(_, v, _)| h(v * nm, alpha, nm).abs())
        .fold(0.0, f64::max))
}

/// Appends a flag qubit `√(1 - C²h²)|0⟩ + C h |1⟩`, with `h` evaluated on
/// `nm` times the decoded register value.
pub fn controlled_rotation_h(
    state: &PureState,
    record: &PhaseEstimateRecord,
    alpha: f64,
    c: f64,
    nm: f64,
) -> Result<PureState> {
    if !(alpha > 0.0 && c > 0.0) {
        return Err(Error::Input(format!(
            "rotation needs alpha > 0 and C > 0, got {alpha}, {c}"
        )));
    }
    let pos = state.layout.position(PHASE)?;
    let support: std::collections::BTreeMap<usize, f64> = decoded_weights(state, &record.decoder)?
        .into_iter()
        .map(|(k, _, w)| (k, w))
        .collect();
    let mut amps = CVector::zeros(state.dim() * 2);
    for (i, a) in state.amplitudes.iter().enumerate() {
        let (key, value) = record.decoder.decode(&state.layout, pos, i)?;
        let mut ch = c * h(value * nm, alpha, nm);
        if ch.abs() > 1.0 {
            if support[&key] >= SUPPORT_WEIGHT {
                return Err(Error::Contract(format!(
                    "C·h = {ch} exceeds 1 at decoded eigenvalue {}; use a smaller C",
                    value * nm
                )));
            }
            ch = ch.signum();
        }
        amps[2 * i] = a * (1.0 - ch * ch).max(0.0).sqrt();
        amps[2 * i + 1] = a * ch;
    }
    Ok(PureState::unchecked(amps, state.layout.appended(FLAG, 2)))
}

/// `O_X`, a rotation and `O_X⁻¹`: appends a flag qubit with amplitude
/// `x[r, k] / ‖X‖_max` on `|1⟩`, where `r` and `k` are the values of
/// registers `row` and `col`.
pub fn data_rotation(
    state: &PureState,
    row: &str,
    col: &str,
    x: &RMatrix,
    counters: &mut OracleCounters,
) -> Result<PureState> {
    let (rp, cp) = (state.layout.position(row)?, state.layout.position(col)?);
    if state.layout.registers[rp].1 != x.nrows() || state.layout.registers[cp].1 != x.ncols() {
        return Err(Error::Input(format!(
            "registers ({row}, {col}) do not match a {}x{} matrix",
            x.nrows(),
            x.ncols()
        )));
    }
    let max = x.amax();
    if max == 0.0 {
        return Err(Error::Input("data rotation with a zero matrix".into()));
    }
    counters.o_x += 1;
    counters.o_x_inv += 1;
    let mut amps = CVector::zeros(state.dim() * 2);
    for (i, a) in state.amplitudes.iter().enumerate() {
        let r = x[(state.layout.value_of(i, rp), state.layout.value_of(i, cp))] / max;
        amps[2 * i] = a * (1.0 - r * r).max(0.0).sqrt();
        amps[2 * i + 1] = a * r;
    }
    Ok(PureState::unchecked(amps, state.layout.appended(FLAG, 2)))
}

/// Measures register `name` and keeps outcome `outcome`; the register is
/// dropped from the post-measurement state.
pub fn postselect(
    state: &PureState,
    name: &str,
    outcome: usize,
    counters: &OracleCounters,
) -> Result<PostselectRecord> {
    let pos = state.layout.position(name)?;
    let dim = state.layout.registers[pos].1;
    if outcome >= dim {
        return Err(Error::Input(format!(
            "outcome {outcome} out of range for {name:?}"
        )));
    }
    let layout = state.layout.removed(pos);
    let amps: Vec<C64> = state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| state.layout.value_of(*i, pos) == outcome)
        .map(|(_, a)| *a)
        .collect();
    branch(
        CVector::from_vec(amps),
        layout,
        &format!("{name}={outcome}"),
        counters,
    )
}

/// Keeps register values `start..start+len` of `name`, renamed to `new_name`.
pub fn project_range(
    state: &PureState,
    name: &str,
    start: usize,
    len: usize,
    new_name: &str,
    counters: &OracleCounters,
) -> Result<PostselectRecord> {
    let pos = state.layout.position(name)?;
    let dim = state.layout.registers[pos].1;
    if start + len > dim || len == 0 {
        return Err(Error::Input(format!(
            "range {start}..{} outside {name:?}",
            start + len
        )));
    }
    let layout = state.layout.resized(pos, new_name, len);
    let amps: Vec<C64> = state
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| (start..start + len).contains(&state.layout.value_of(*i, pos)))
        .map(|(_, a)| *a)
        .collect();
    branch(
        CVector::from_vec(amps),
        layout,
        &format!("{name} in {start}..{}", start + len),
        counters,
    )
}

/// Projects register `name` onto the normalized vector `target` and drops it.
pub fn project_onto(
    state: &PureState,
    name: &str,
    target: &CVector,
    counters: &OracleCounters,
) -> Result<PostselectRecord> {
    let pos = state.layout.position(name)?;
    let dim = state.layout.registers[pos].1;
    if target.len() != dim {
        return Err(Error::Input(format!(
            "target has dimension {}, register {dim}",
            target.len()
        )));
    }
    let t = target / C64::from(target.norm());
    let layout = state.layout.removed(pos);
    let stride = state.layout.stride(pos);
    let mut amps = CVector::zeros(layout.total());
    for (i, a) in state.amplitudes.iter().enumerate() {
        let v = state.layout.value_of(i, pos);
        let reduced = (i / (stride * dim)) * stride + i % stride;
        amps[reduced] += t[v].conj() * a;
    }
    branch(amps, layout, &format!("{name} projected"), counters)
}

/// Discards branches whose decoded eigenvalue is zero.
pub fn zero_eigen_filter(
    state: &PureState,
    record: &PhaseEstimateRecord,
    counters: &OracleCounters,
) -> Result<PostselectRecord> {
    let pos = state.layout.position(PHASE)?;
    let mut amps = state.amplitudes.clone();
    for i in 0..amps.len() {
        if record.decoder.decode(&state.layout, pos, i)?.1 == 0.0 {
            amps[i] = C64::ZERO;
        }
    }
    branch(amps, state.layout.clone(), "nonzero eigenvalue", counters)
        .map_err(|_| Error::Degenerate("the input has no weight outside the kernel".into()))
}

/// `ceil(π / (4 asin √P))`.
pub fn amplitude_amplify_count(p: f64) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Input(format!(
            "probability must be in (0, 1], got {p}"
        )));
    }
    Ok((PI / (4.0 * p.sqrt().asin())).ceil() as u64)
}

/// Estimate of `P` and the accounted repetitions
/// `ceil(√((1-P)/P) / rel_err)`, at least 1.
pub fn amplitude_estimate(p: f64, rel_err: f64, rng: Option<&mut Rng64>) -> Result<(f64, u64)> {
    if !(p > 0.0 && p <= 1.0 && rel_err > 0.0) {
        return Err(Error::Input(format!(
            "amplitude estimation needs 0 < P <= 1 and rel_err > 0, got {p}, {rel_err}"
        )));
    }
    let reps = (((1.0 - p) / p).sqrt() / rel_err).ceil().max(1.0) as u64;
    Ok((perturb(p, rel_err, rng), reps))
}

fn check_same_dim(a: &PureState, b: &PureState) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Input(format!(
            "states have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `P₂ = 1/2 + |⟨a|b⟩|²/2`.
pub fn swap_test(a: &PureState, b: &PureState) -> Result<f64> {
    check_same_dim(a, b)?;
    Ok(0.5 + 0.5 * a.amplitudes.dotc(&b.amplitudes).norm_sqr())
}

/// Hadamard test: `Re⟨a|b⟩`, signed. The ancilla construction
/// `(|0⟩a + |1⟩b)/√2` measured against `(|0⟩ - |1⟩)/√2` succeeds with
/// probability `(1 - Re⟨a|b⟩)/2`.
pub fn signed_overlap_test(a: &PureState, b: &PureState) -> Result<f64> {
    check_same_dim(a, b)?;
    let minus = 0.25 * (&a.amplitudes - &b.amplitudes).norm_squared();
    Ok((1.0 - 2.0 * minus).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::partition_folds;
    use crate::hamsim::dilate;
    use crate::rng;
    use rand::Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn diag_oracle(values: &[f64]) -> PhaseOracle {
        let h = CMatrix::from_diagonal(&CVector::from_iterator(
            values.len(),
            values.iter().map(|v| c(*v)),
        ));
        PhaseOracle::single(&h).unwrap()
    }

    fn basis_state(dim: usize, k: usize) -> PureState {
        let mut v = RVector::zeros(dim);
        v[k] = 1.0;
        PureState::from_real(&v, "system").unwrap()
    }

    #[test]
    fn layout_blocks_cover_everything_once() {
        let l = RegisterLayout::new(&[("a", 2), ("b", 3), ("c", 4)]);
        let blocks = l.blocks(&[2, 0]);
        assert_eq!(blocks.len(), 3);
        let mut all: Vec<usize> = blocks.concat();
        all.sort();
        assert_eq!(all, (0..24).collect::<Vec<_>>());
        // Row-major over (c, a): the second entry moves register a.
        assert_eq!(l.value_of(blocks[0][1], 0), 1);
        assert_eq!(l.value_of(blocks[0][2], 2), 1);
    }

    #[test]
    fn amplitude_state_examples() {
        let mut counters = OracleCounters::default();
        let rec =
            prepare_amplitude_state(&RVector::from_element(4, 0.5), false, "y", &mut counters)
                .unwrap();
        assert!((rec.probability - 1.0).abs() < 1e-15);
        assert_eq!(counters.o_y, 2);
        let rec = prepare_amplitude_state(
            &RVector::from_vec(vec![0.0, 0.0, 3.0, 0.0]),
            false,
            "y",
            &mut counters,
        )
        .unwrap();
        assert!((rec.probability - 0.25).abs() < 1e-15);
        assert_eq!(counters.o_y, 4);

        let mut r = rng::seeded(1);
        let v = RVector::from_fn(16, |_, _| r.random_range(-1.0..1.0));
        let rec = prepare_amplitude_state(&v, true, "y", &mut counters).unwrap();
        let want = &v / v.norm();
        assert!((rec.post_state.real_amplitudes(0.0).unwrap() - want).amax() < 1e-12);
        assert_eq!(rec.probability, 1.0);
        assert!(prepare_amplitude_state(&RVector::zeros(3), true, "y", &mut counters).is_err());
    }

    #[test]
    fn norm_estimates() {
        let mut r = rng::seeded(2);
        let v = RVector::from_fn(9, |_, _| r.random_range(-2.0..2.0));
        assert!((estimate_norm_sq(&v, 0.1, None).unwrap() - v.norm_squared()).abs() < 1e-12);
        assert!(
            (estimate_norm_sq(&RVector::from_element(4, 1.5), 0.0, None).unwrap() - 9.0).abs()
                < 1e-12
        );
        for seed in 0..20 {
            let mut noise = rng::seeded(seed);
            let e = estimate_norm_sq(&v, 0.05, Some(&mut noise)).unwrap();
            assert!((e / v.norm_squared() - 1.0).abs() <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn psi0_examples() {
        let mut r = rng::seeded(3);
        let x = RMatrix::from_fn(4, 3, |_, _| r.random_range(-1.0..1.0));
        let y = RVector::from_fn(4, |_, _| r.random_range(-1.0..1.0));
        let d = Dataset::new(x, y.clone()).unwrap();
        let mut counters = OracleCounters::default();

        let rec = prepare_psi0(&d, &partition_folds(4, 2).unwrap(), &mut counters).unwrap();
        assert!((rec.probability - 0.5).abs() < 1e-12);
        let rec = prepare_psi0(&d, &partition_folds(4, 4).unwrap(), &mut counters).unwrap();
        assert!((rec.probability - 0.75).abs() < 1e-12);

        // Direct assembly: Σ_l Σ_{τ∈S_l} |τ⟩ ⊗ |0, y_{-l}⟩.
        let p = partition_folds(4, 4).unwrap();
        let mut direct = CVector::zeros(4 * 7);
        for (l, fold) in p.folds.iter().enumerate() {
            let fd = crate::classical::masked_design(&d, &p, l).unwrap();
            for &tau in fold {
                for j in 0..4 {
                    direct[tau * 7 + j] = c(fd.y_minus_l[j]);
                }
            }
        }
        direct /= c(direct.norm());
        assert!((rec.post_state.amplitudes() - direct).norm() < 1e-12);
    }

    #[test]
    fn exact_phase_is_a_delta() {
        let s = 4;
        let t0 = 1.0;
        // μ·t0/2π = 3/16 and -5/16.
        let mu = [2.0 * PI * 3.0 / 16.0, -2.0 * PI * 5.0 / 16.0];
        let oracle = diag_oracle(&mu);
        let mut counters = OracleCounters::default();
        for (k, expect_j) in [(0usize, 3usize), (1, 11)] {
            let (out, rec) = phase_estimation(
                &basis_state(2, k),
                "system",
                &oracle,
                t0,
                Precision::Bits(s),
                &mut counters,
            )
            .unwrap();
            let marg = out.marginal(PHASE).unwrap();
            assert!((marg[expect_j] - 1.0).abs() < 1e-12);
            assert_eq!(rec.peaks.iter().filter(|p| p.1 > 1e-12).count(), 1);
            let top = rec.peaks.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
            assert!((top.0 - mu[k]).abs() < 1e-12);
        }
        assert_eq!(counters.hamsim_invocations, 2 * 15);
    }

    #[test]
    fn kernel_matches_closed_form() {
        let s = 5;
        let dim = 1usize << s;
        let theta = 0.1234;
        let oracle = diag_oracle(&[2.0 * PI * theta]);
        let mut counters = OracleCounters::default();
        let (out, _) = phase_estimation(
            &basis_state(1, 0),
            "system",
            &oracle,
            1.0,
            Precision::Bits(s),
            &mut counters,
        )
        .unwrap();
        for j in 0..dim {
            let k: C64 = (0..dim)
                .map(|x| {
                    C64::from_polar(1.0, 2.0 * PI * x as f64 * (j as f64 / dim as f64 - theta))
                })
                .sum::<C64>()
                / c(dim as f64);
            assert!((out.amplitudes()[j] - k).norm() < 1e-12);
        }
    }

    #[test]
    fn aliasing_is_detected() {
        let oracle = diag_oracle(&[PI]);
        let mut counters = OracleCounters::default();
        let err = phase_estimation(
            &basis_state(1, 0),
            "system",
            &oracle,
            1.0,
            Precision::Bits(3),
            &mut counters,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Aliasing(_)));
    }

    #[test]
    fn dilation_peaks_near_signed_singular_values() {
        let mut r = rng::seeded(4);
        let x = RMatrix::from_fn(3, 2, |_, _| r.random_range(-1.0..1.0));
        let dil = dilate(&x).unwrap();
        let gen = dil.generator(5.0);
        let oracle = PhaseOracle::single(&gen).unwrap();
        let s = 8;
        let t0 = auto_t0(&oracle, Precision::Bits(s));
        let mut counters = OracleCounters::default();
        let y = embed_in_system(&RVector::from_fn(3, |_, _| r.random_range(-1.0..1.0)), 2);
        let input = PureState::from_real(&y, "system").unwrap();
        let (_, rec) = phase_estimation(
            &input,
            "system",
            &oracle,
            t0,
            Precision::Bits(s),
            &mut counters,
        )
        .unwrap();
        let truth: Vec<f64> = dil.eigenvalues().iter().map(|v| v / 5.0).collect();
        let bin = 2.0 * PI / (t0 * 256.0);
        let top = rec.peaks.iter().filter(|p| p.1 > 0.05);
        for (v, _) in top {
            let dist = truth
                .iter()
                .map(|t| (t - v).abs())
                .fold(f64::INFINITY, f64::min);
            assert!(dist <= bin, "{dist} > {bin}");
        }
        let total: f64 = rec.peaks.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn more_bits_never_hurts_decoding() {
        // Weight-averaged decoding error, averaged over a fixed family.
        let family: Vec<(PhaseOracle, Vec<f64>, PureState)> = (0..12)
            .map(|seed| {
                let mut r = rng::seeded(100 + seed);
                let x = RMatrix::from_fn(3, 2, |_, _| r.random_range(-1.0..1.0));
                let h = dilate(&x).unwrap().generator(5.0);
                let truth = numkit::eigh(&h)
                    .unwrap()
                    .eigenvalues
                    .iter()
                    .copied()
                    .collect();
                let v = RVector::from_fn(5, |_, _| r.random_range(-1.0..1.0));
                (
                    PhaseOracle::single(&h).unwrap(),
                    truth,
                    PureState::from_real(&v, "system").unwrap(),
                )
            })
            .collect();
        let mut last = f64::INFINITY;
        for s in 4..=10 {
            let mut total = 0.0;
            for (oracle, truth, input) in &family {
                let t0 = auto_t0(oracle, Precision::Exact);
                let mut counters = OracleCounters::default();
                let (_, rec) = phase_estimation(
                    input,
                    "system",
                    oracle,
                    t0,
                    Precision::Bits(s),
                    &mut counters,
                )
                .unwrap();
                total += rec.mean_decoding_error(truth);
            }
            assert!(total <= last, "s {s}: {total} > {last}");
            last = total;
        }
    }

    #[test]
    fn phase_estimation_is_reversible() {
        let mut r = rng::seeded(5);
        let x = RMatrix::from_fn(3, 2, |_, _| r.random_range(-1.0..1.0));
        let gen = dilate(&x).unwrap().generator(5.0);
        let oracle = PhaseOracle::single(&gen).unwrap();
        let input = PureState::from_real(
            &RVector::from_fn(5, |_, _| r.random_range(-1.0..1.0)),
            "system",
        )
        .unwrap();
        for precision in [Precision::Bits(6), Precision::Exact] {
            let t0 = auto_t0(&oracle, precision);
            let mut counters = OracleCounters::default();
            let (out, rec) =
                phase_estimation(&input, "system", &oracle, t0, precision, &mut counters).unwrap();
            let back =
                inverse_phase_estimation(&out, "system", &oracle, &rec, &mut counters).unwrap();
            let back = postselect(&back, PHASE, 0, &counters).unwrap();
            assert!((back.probability - 1.0).abs() < 1e-10);
            assert!((back.post_state.amplitudes() - input.amplitudes()).norm() < 1e-10);
        }
    }

    #[test]
    fn exact_register_records_eigenvalues() {
        let oracle = diag_oracle(&[-0.3, 0.0, 0.7]);
        let input =
            PureState::from_real(&RVector::from_vec(vec![0.6, 0.0, 0.8]), "system").unwrap();
        let mut counters = OracleCounters::default();
        let (out, rec) = phase_estimation(
            &input,
            "system",
            &oracle,
            1.0,
            Precision::Exact,
            &mut counters,
        )
        .unwrap();
        let nonzero: Vec<(f64, f64)> = rec.peaks.iter().copied().filter(|p| p.1 > 0.0).collect();
        assert_eq!(nonzero.len(), 2);
        assert!((nonzero[0].0 + 0.3).abs() < 1e-15 && (nonzero[0].1 - 0.36).abs() < 1e-12);
        assert!((nonzero[1].0 - 0.7).abs() < 1e-15 && (nonzero[1].1 - 0.64).abs() < 1e-12);
        assert!((out.amplitudes().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_examples() {
        let nm = 4.0;
        let alpha = 2.25;
        // One eigenvalue at λ = √α = 1.5 in generator units λ/nm.
        let oracle = diag_oracle(&[1.5 / nm]);
        let mut counters = OracleCounters::default();
        let (st, rec) = phase_estimation(
            &basis_state(1, 0),
            "system",
            &oracle,
            1.0,
            Precision::Exact,
            &mut counters,
        )
        .unwrap();
        let cc = 0.3;
        let rot = controlled_rotation_h(&st, &rec, alpha, cc, nm).unwrap();
        let amp1 = rot.amplitudes()[1];
        assert!((amp1.re - cc * nm / (2.0 * alpha.sqrt())).abs() < 1e-14);

        let rot = controlled_rotation_h(&st, &rec, 1e12, cc, nm).unwrap();
        assert!(rot.amplitudes()[1].norm() < 1e-10);

        let err = controlled_rotation_h(&st, &rec, alpha, 10.0, nm).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));

        // Two-eigenvalue toy: flag weights are C²h² per branch.
        let oracle = diag_oracle(&[0.5, -0.25]);
        let input = PureState::from_real(&RVector::from_vec(vec![0.8, 0.6]), "system").unwrap();
        let (st, rec) = phase_estimation(
            &input,
            "system",
            &oracle,
            1.0,
            Precision::Exact,
            &mut counters,
        )
        .unwrap();
        let rot = controlled_rotation_h(&st, &rec, alpha, cc, nm).unwrap();
        let p1 = postselect(&rot, FLAG, 1, &counters).unwrap().probability;
        let want = cc * cc * (0.64 * h(2.0, alpha, nm).powi(2) + 0.36 * h(-1.0, alpha, nm).powi(2));
        assert!((p1 - want).abs() < 1e-12);
    }

    #[test]
    fn postselect_examples() {
        let psi = PureState::from_real(&RVector::from_vec(vec![0.6, 0.8]), "sys").unwrap();
        let widened = psi.with_register("anc", 2);
        let rec = postselect(&widened, "anc", 0, &OracleCounters::default()).unwrap();
        assert_eq!(rec.probability, 1.0);
        assert_eq!(rec.post_state.amplitudes(), psi.amplitudes());
        assert!(postselect(&widened, "anc", 1, &OracleCounters::default()).is_err());

        let plus = PureState::from_real(&RVector::from_vec(vec![1.0, 1.0]), "q").unwrap();
        let rec = postselect(&plus, "q", 1, &OracleCounters::default()).unwrap();
        assert!((rec.probability - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_filter_examples() {
        let oracle = diag_oracle(&[0.5, 0.0]);
        let mut counters = OracleCounters::default();
        let run = |v: Vec<f64>, counters: &mut OracleCounters| {
            let input = PureState::from_real(&RVector::from_vec(v), "system").unwrap();
            let (st, rec) =
                phase_estimation(&input, "system", &oracle, 1.0, Precision::Exact, counters)
                    .unwrap();
            zero_eigen_filter(&st, &rec, counters)
        };
        assert!((run(vec![1.0, 0.0], &mut counters).unwrap().probability - 1.0).abs() < 1e-15);
        assert!(matches!(
            run(vec![0.0, 1.0], &mut counters),
            Err(Error::Degenerate(_))
        ));
        assert!((run(vec![0.8, 0.6], &mut counters).unwrap().probability - 0.64).abs() < 1e-12);
    }

    #[test]
    fn amplification_counts() {
        assert_eq!(amplitude_amplify_count(1.0).unwrap(), 1);
        assert_eq!(amplitude_amplify_count(0.25).unwrap(), 2);
        let counts: Vec<f64> = [10.0, 20.0, 40.0, 80.0]
            .iter()
            .map(|k: &f64| amplitude_amplify_count(1.0 / (k * k)).unwrap() as f64)
            .collect();
        for w in counts.windows(2) {
            assert!((w[1] / w[0] - 2.0).abs() < 0.15);
        }
    }

    #[test]
    fn estimation_counts() {
        assert_eq!(amplitude_estimate(0.3, 0.1, None).unwrap().0, 0.3);
        assert_eq!(amplitude_estimate(0.5, 0.1, None).unwrap().1, 10);
        assert_eq!(amplitude_estimate(0.01, 0.1, None).unwrap().1, 100);
        let mut noise = rng::seeded(3);
        let (e, _) = amplitude_estimate(0.4, 0.05, Some(&mut noise)).unwrap();
        assert!((e / 0.4 - 1.0).abs() <= 0.05);
    }

    #[test]
    fn swap_and_signed_overlap() {
        let a = PureState::from_real(&RVector::from_vec(vec![1.0, 2.0, 2.0]), "a").unwrap();
        let b = PureState::from_real(&RVector::from_vec(vec![2.0, -1.0, 0.0]), "b").unwrap();
        assert!((swap_test(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((swap_test(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        assert!((signed_overlap_test(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let neg = PureState::from_real(&RVector::from_vec(vec![-1.0, -2.0, -2.0]), "a").unwrap();
        assert!((signed_overlap_test(&a, &neg).unwrap() + 1.0).abs() < 1e-15);

        let mut r = rng::seeded(6);
        let u = RVector::from_fn(8, |_, _| r.random_range(-1.0..1.0));
        let v = RVector::from_fn(8, |_, _| r.random_range(-1.0..1.0));
        let (su, sv) = (
            PureState::from_real(&u, "x").unwrap(),
            PureState::from_real(&v, "x").unwrap(),
        );
        let dot = u.dot(&v) / (u.norm() * v.norm());
        assert!((signed_overlap_test(&su, &sv).unwrap() - dot).abs() < 1e-12);
        assert!((swap_test(&su, &sv).unwrap() - 0.5 - 0.5 * dot * dot).abs() < 1e-12);

        let complex = PureState::new(
            CVector::from_vec(vec![C64::new(0.0, 1.0)]),
            RegisterLayout::new(&[("x", 1)]),
        )
        .unwrap();
        let real = PureState::from_real(&RVector::from_vec(vec![1.0]), "x").unwrap();
        assert!(signed_overlap_test(&complex, &real).unwrap().abs() < 1e-15);
        assert!(swap_test(&a, &real).is_err());
    }

    #[test]
    fn data_rotation_amplitudes() {
        let x = RMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 0.0]);
        let st = PureState::new(
            CVector::from_element(4, c(0.5)),
            RegisterLayout::new(&[("i", 2), ("k", 2)]),
        )
        .unwrap();
        let mut counters = OracleCounters::default();
        let out = data_rotation(&st, "i", "k", &x, &mut counters).unwrap();
        assert_eq!((counters.o_x, counters.o_x_inv), (1, 1));
        let flagged = postselect(&out, FLAG, 1, &counters).unwrap();
        // Σ (x/2)² / 4 = (0.25 + 1 + 0.0625) / 4
        assert!((flagged.probability - 1.3125 / 4.0).abs() < 1e-15);
        assert!(data_rotation(&st, "k", "i", &RMatrix::zeros(2, 3), &mut counters).is_err());
    }

    #[test]
    fn projection_onto_uniform() {
        let l = RegisterLayout::new(&[("i", 2), ("k", 2)]);
        let amps = CVector::from_vec(vec![c(0.5), c(0.5), c(0.5), c(-0.5)]);
        let st = PureState::new(amps, l).unwrap();
        let uniform = CVector::from_element(2, c(1.0));
        let rec = project_onto(&st, "k", &uniform, &OracleCounters::default()).unwrap();
        assert!((rec.probability - 0.5).abs() < 1e-15);
        assert!((rec.post_state.amplitudes()[0].re - 1.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn swap_and_overlap_ranges(seed in 0u64..100_000, dim in 1usize..10) {
                let mut r = rng::seeded(seed);
                let u = RVector::from_fn(dim, |_, _| r.random_range(-1.0..1.0));
                let v = RVector::from_fn(dim, |_, _| r.random_range(-1.0..1.0));
                let su = PureState::from_real(&u, "x").unwrap();
                let sv = PureState::from_real(&v, "x").unwrap();
                let p2 = swap_test(&su, &sv).unwrap();
                let o = signed_overlap_test(&su, &sv).unwrap();
                prop_assert!((0.5..=1.0 + 1e-15).contains(&p2));
                prop_assert!((-1.0..=1.0).contains(&o));
            }

            #[test]
            fn measurement_branches_sum_to_one(seed in 0u64..100_000) {
                let mut r = rng::seeded(seed);
                let x = RMatrix::from_fn(2, 2, |_, _| r.random_range(-1.0..1.0));
                let oracle = PhaseOracle::single(&dilate(&x).unwrap().generator(4.0)).unwrap();
                let input = PureState::from_real(&RVector::from_fn(4, |_, _| r.random_range(-1.0..1.0)), "system").unwrap();
                let mut counters = OracleCounters::default();
                let t0 = auto_t0(&oracle, Precision::Bits(4));
                let (st, _) = phase_estimation(&input, "system", &oracle, t0, Precision::Bits(4), &mut counters).unwrap();
                let total: f64 = st.marginal(PHASE).unwrap().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-10);
            }
        }
    }
}
