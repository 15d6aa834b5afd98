//! Seeded dataset generators: planted spectra, planted fits and the small
//! random reference family used throughout the tests.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classical::Dataset;
use crate::error::{Error, Result};
use crate::numkit::{RMatrix, RVector};
use crate::rng;

/// `X = U diag(λ) Vᵀ` with seeded orthonormal `U`, `V`, and
/// `y = y_norm · Σ β_j u_j / ‖β‖` plus Gaussian noise of relative size
/// `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    pub singular_values: Vec<f64>,
    /// Coefficients on the left singular vectors; empty means all ones.
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default = "one")]
    pub y_norm: f64,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Reject spectra above `N+M`.
    #[serde(default = "yes")]
    pub enforce_convention: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl SyntheticSpec {
    pub fn new(n: usize, m: usize, singular_values: Vec<f64>, seed: u64) -> Self {
        Self {
            n,
            m,
            singular_values,
            beta: Vec::new(),
            y_norm: 1.0,
            noise: 0.0,
            seed,
            enforce_convention: true,
        }
    }

    fn validate(&self) -> Result<()> {
        let r = self.singular_values.len();
        if self.n < 2 || self.m < 1 {
            return Err(Error::Input(format!(
                "need N >= 2 and M >= 1, got {}x{}",
                self.n, self.m
            )));
        }
        if r == 0 || r > self.n.min(self.m) {
            return Err(Error::Input(format!(
                "{r} singular values do not fit a {}x{} matrix",
                self.n, self.m
            )));
        }
        if let Some(bad) = self
            .singular_values
            .iter()
            .find(|v| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::Input(format!(
                "singular values must be positive, got {bad}"
            )));
        }
        let top = self.singular_values.iter().copied().fold(0.0, f64::max);
        if self.enforce_convention && top > (self.n + self.m) as f64 {
            return Err(Error::Input(format!(
                "largest singular value {top} exceeds N+M = {}",
                self.n + self.m
            )));
        }
        if !self.beta.is_empty() && (self.beta.len() != r || self.beta.iter().all(|b| *b == 0.0)) {
            return Err(Error::Input(
                "beta needs one nonzero-containing entry per singular value".into(),
            ));
        }
        if !(self.y_norm > 0.0 && self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Input("y_norm must be > 0 and noise >= 0".into()));
        }
        Ok(())
    }
}

fn gaussian_vector(r: &mut rng::Rng64, len: usize) -> RVector {
    RVector::from_fn(len, |_, _| StandardNormal.sample(r))
}

fn planted_design(r: &mut rng::Rng64, n: usize, m: usize, sv: &[f64]) -> (RMatrix, RMatrix) {
    let u = rng::random_orthonormal(r, n, sv.len());
    let v = rng::random_orthonormal(r, m, sv.len());
    let sigma = RMatrix::from_diagonal(&RVector::from_column_slice(sv));
    (&u * sigma * v.transpose(), u)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut r = rng::seeded(spec.seed);
    let (x, u) = planted_design(&mut r, spec.n, spec.m, &spec.singular_values);
    let beta = if spec.beta.is_empty() {
        RVector::from_element(spec.singular_values.len(), 1.0)
    } else {
        RVector::from_column_slice(&spec.beta)
    };
    let mut y = &u * (&beta / beta.norm()) * spec.y_norm;
    if spec.noise > 0.0 {
        let g = gaussian_vector(&mut r, spec.n);
        y += g * (spec.noise * spec.y_norm / (spec.n as f64).sqrt());
    }
    Dataset::new(x, y)
}

/// Planted spectrum with `y = X w + noise`, for a seeded random `w`.
/// `noise` is relative to `‖X w‖`.
pub fn generate_good_fit(
    n: usize,
    m: usize,
    singular_values: &[f64],
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    let spec = SyntheticSpec {
        noise,
        ..SyntheticSpec::new(n, m, singular_values.to_vec(), seed)
    };
    spec.validate()?;
    let mut r = rng::seeded(seed);
    let (x, _) = planted_design(&mut r, n, m, singular_values);
    let w = gaussian_vector(&mut r, m);
    let clean = &x * w;
    let g = gaussian_vector(&mut r, n);
    let y = &clean + g * (noise * clean.norm() / (n as f64).sqrt());
    Dataset::new(x, y)
}

/// Uniform `[-1, 1]` entries, redrawn until `X` has full column rank and
/// `κ <= 4`.
pub fn reference_instance(n: usize, m: usize, seed: u64) -> Dataset {
    let mut r = rng::seeded(seed);
    loop {
        let x = RMatrix::from_fn(n, m, |_, _| r.random_range(-1.0..1.0));
        let y = RVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
        if let Ok(d) = Dataset::new(x, y) {
            if d.meta().rank == m.min(n) && d.kappa() <= 4.0 {
                return d;
            }
        }
    }
}

/// The 4×3 reference family.
pub fn reference_family(count: usize, seed: u64) -> Vec<Dataset> {
    (0..count as u64)
        .map(|i| reference_instance(4, 3, seed.wrapping_mul(1000).wrapping_add(i)))
        .collect()
}
