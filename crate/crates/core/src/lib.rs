//! Canonical decomposition of continuous convex functions on `R^n`.
//!
//! Every convex `f` splits as `f(z) = c_f(P_X z) + <v_f, z>` where `X` is the
//! span of all subgradient differences, `P_X` the orthogonal projection onto
//! it, `v_f` a drift orthogonal to `X`, and `c_f` an essentially coercive
//! convex function on `X`. Along the complement `Y = X^perp` the function is
//! affine.
//!
//! Modules:
//! - [`vecspace`]: dense vectors, subspaces, projections.
//! - [`funcrepr`]: convex function representations with value and subgradient oracles.
//! - [`decomp`]: the decomposition itself and its residual checks.
//! - [`coercive`]: directional coercivity verdicts, coercivizing witnesses and
//!   strict-minimum witnesses.
//! - [`corpus`]: named example families and a graded corpus with ground truth.
//! - [`specfile`]: the JSON function-spec format.

pub mod coercive;
pub mod corpus;
pub mod decomp;
mod error;
pub mod funcrepr;
pub mod rng;
pub mod specfile;
pub mod vecspace;

pub use coercive::{CoercivityVerdict, VerdictStatus, Witness};
pub use decomp::{DecompConfig, Decomposition};
pub use error::{Error, Result};
pub use funcrepr::{ConvexFunction, ScalarKernel, SubgradientSample};
pub use vecspace::{Matrix, Subspace, Vector};
