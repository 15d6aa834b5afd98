//! Quantum ridge regression and K-fold cross-validation on a dense
//! state-vector simulator, with classical oracles for every estimate.
//!
//! ```
//! use qridge::classical::{self, partition_folds};
//! use qridge::qrr::{self, Alg2Config};
//! use qridge::synthetic;
//!
//! let d = synthetic::reference_instance(4, 3, 0);
//! let p = partition_folds(4, 2).unwrap();
//! let row = qrr::estimate_E_terms(&d, &p, 3.0, &Alg2Config::exact(2, vec![3.0])).unwrap();
//! let exact = classical::cv_error_exact(&d, &p, 3.0).unwrap();
//! assert!((row.e_est - exact.e).abs() < 1e-8 * exact.e);
//! ```

pub mod bounds;
pub mod classical;
pub mod error;
pub mod experiment;
pub mod hamsim;
pub mod io;
pub mod numkit;
pub mod qcore;
pub mod qrr;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
