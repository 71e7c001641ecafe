//! Capped-precision arithmetic in `Q_p` and one monogenic extension
//! `K = Q_p[θ]/(m(θ))`.
//!
//! All computations in this crate take place in a *single* fixed extension
//! per problem; elements that would leave `K` are errors, never silently
//! promoted to a bigger field.
//!
//! # Precision model
//!
//! Valuations and precisions are measured in **π-digits**: `v_π = e·v_p`
//! where `e` is the ramification index, so `v_π(p) = e` and a uniformizer
//! has `v_π = 1`.  Every element carries
//!
//! * `abs_prec` — the element is known modulo `π^{abs_prec}`;
//! * `val` — a certified lower bound on its π-adic valuation, with
//!   `val ≤ abs_prec` always, and *zero* meaning exactly `val = abs_prec`.
//!
//! Propagation is pessimistic: `add/sub → min` of the two precisions,
//! `mul → min(a.prec + b.val, b.prec + a.val)`, and `div`/`sqrt` subtract
//! the documented losses.  Exact inputs (integers, rationals, supplied
//! roots) enter with a large relative-precision cap so that headroom is
//! available for the series/reduction stages.
//!
//! # Supported extension shapes
//!
//! * `Q_p` itself;
//! * Eisenstein `m(θ)` (in particular the pure case `θ^e = p`);
//! * unramified (`m` irreducible modulo `p`);
//! * a mixed monogenic extension whose generator `θ` is simultaneously a
//!   uniformizer and a field generator (single Newton-polygon slope
//!   `−1/e`), e.g. `θ = √p + √(2p)` for `Q_p(√2, √p)`.
//!
//! Residue-field bookkeeping (digit extraction, square-root seeds,
//! Teichmüller handling) never builds an explicit `F_q` model: candidates
//! are enumerated among the ≤ `p^{f_res}` representatives
//! `Σ aⱼ·u^j` (`u = θ^e/p` in the ramified shapes, `u = θ` otherwise) and
//! tested valuation-theoretically.  The logarithm uses the Iwasawa branch
//! `Log(p) = 0`, extended by killing Teichmüller parts with the
//! `(q−1)`-st power map.

mod elem;
mod field;
mod wire;

pub use elem::Elem;
pub(crate) use field::{ceil_log_p, div_ceil_i};
pub use field::{Field, FieldRef, Shape};
pub use wire::WireElem;

use thiserror::Error;

/// Errors from p-adic arithmetic.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PadicError {
    /// Division by an element indistinguishable from zero at its precision.
    #[error("division by zero (valuation {val} ≥ absolute precision {prec})")]
    DivisionByZero { val: i64, prec: i64 },
    /// `sqrt` of an element whose valuation is odd.
    #[error("square root of an element with odd π-adic valuation {val}")]
    OddValuation { val: i64 },
    /// `sqrt` of an element whose leading residue is not a square.
    #[error("leading residue is not a square in the residue field")]
    NonSquareResidue,
    /// A computation ran out of certified digits.
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    /// `log` of (something indistinguishable from) zero.
    #[error("logarithm of zero")]
    LogOfZero,
    /// An element was required to lie in a smaller field than it does.
    #[error("element does not lie in the required subfield: {0}")]
    NotInSubfield(String),
    /// A malformed field description.
    #[error("invalid field descriptor: {0}")]
    BadDescriptor(String),
    /// Wire-format deserialization failure.
    #[error("invalid serialized element: {0}")]
    BadWire(String),
}

pub type Result<T> = std::result::Result<T, PadicError>;
