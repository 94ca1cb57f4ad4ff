//! Learning mixtures of two Mallows ranking models.
//!
//! A Mallows model describes noisy rankings concentrated around one central
//! order; real populations often mix two such orders (two user groups, two
//! regimes). This crate provides, for the two-component case:
//!
//! - exact machinery for the single model: samplers, normalizers, first-place
//!   and position-probability laws ([`mallows`]),
//! - mixtures and their exact small-`n` distributions ([`mixture`]),
//! - top-set moment statistics and their closed forms ([`moments`]),
//! - third-moment tensors over item partitions and a rank-2 decomposition
//!   ([`tensor`]),
//! - a spectral learner that recovers both central orders, both scales, and
//!   the mixing weight from samples alone, including the degenerate cases
//!   where the mixture is barely (or not at all) identifiable ([`learner`]),
//! - an EM baseline ([`em`]) and a reproducible experiment harness that
//!   compares the two ([`harness`]).
//!
//! Start with the `examples/` directory: each file is a runnable tour of one
//! capability. The `mallows-mix` binary wraps the same entry points for use
//! from the shell.

pub mod em;
pub mod error;
pub mod harness;
pub mod io;
pub mod learner;
pub mod mallows;
pub mod mixture;
pub mod moments;
pub mod numeric;
pub mod perm;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use mallows::MallowsModel;
pub use mixture::MallowsMixture;
pub use perm::{kendall_tau, Permutation};
