//! Low-rank approximation of positive semidefinite matrices from a sparse
//! random subsample of their entries.
//!
//! The approximation is the factored form `M ≈ X Xᵀ` with `X` an `n x r`
//! factor found by gradient descent on
//!
//! ```text
//! f(X) = 1/2 ‖P_Ω(XXᵀ - M)‖_F² + λ Σ_i [(‖x_i‖₂ - α)₊]⁴
//! ```
//!
//! where Ω is a symmetric off-diagonal Bernoulli observation set. Memory
//! stays proportional to `|Ω| + nr` throughout: the sampled matrix lives
//! in a compressed-row symmetric layout and no dense `n x n` object is
//! ever built by the solve path.
//!
//! The crate also ships the comparison baselines (Nyström column sampling
//! and rescaled spectral truncation), kernel evaluation for memory-
//! efficient kernel PCA, synthetic problem generators, and a `theory`
//! module with executable versions of the landscape diagnostics used to
//! reason about local minima (bilinear sampling deviations, deterministic
//! inequality checkers, and the auxiliary function `K`).

pub mod baselines;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod kernels;
mod lanczos;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod sampled;
pub mod sampling;
pub mod theory;
pub mod truth;
pub mod verify;

pub use error::{Error, Result};
pub use factor::Factor;
pub use objective::ObjectiveParams;
pub use sampled::{load_sampled, memory_footprint, save_sampled, SampledMatrix};
pub use sampling::{sample_mask, Mask};
pub use truth::GroundTruth;
