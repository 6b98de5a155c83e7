//! Constructive quasisymmetric extension on the real line.
//!
//! Given a finite sample of an unbounded set E ⊂ ℝ and a quasisymmetric map
//! f: E → ℝⁿ with power modulus η, the pipeline produces an explicit
//! piecewise-affine extension F: ℝ → ℝ^N that restricts to f on E, together
//! with verification reports for its distortion constants. A companion
//! module builds the box-chain scene showing the dimension increase n → N
//! is unavoidable.

pub mod assemble;
pub mod bridges;
pub mod counterexample;
pub mod error;
pub mod gap_interp;
pub mod geometry;
pub mod metric;
pub mod preextend;

pub use assemble::{extend, verify_extension, ExtensionMap, VerificationReport};
pub use error::{QsxError, Result};
pub use geometry::Point;
pub use metric::{
    relative_connectedness_constant, uniform_perfectness_gap_constant, weak_qs_constant_raw,
    IntervalSet, PowerModulus, QsConstants, SiteMap,
};
pub use preextend::{fatten_isolated, normalize, periodize, reflect_unbounded};
