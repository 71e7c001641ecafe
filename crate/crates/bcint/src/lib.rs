//! Berkovich–Coleman and abelian p-adic integration on hyperelliptic curves.
//!
//! This crate computes p-adic line integrals of holomorphic 1-forms on a
//! hyperelliptic curve `y² = f(x)` over a local field at an odd prime `p`
//! where the curve has *bad* reduction.  The pipeline is:
//!
//! 1. [`padic`] — capped-precision arithmetic in `Q_p` and one monogenic
//!    extension `K = Q_p[π]/(m(π))`, including Hensel square roots and the
//!    Iwasawa branch of the p-adic logarithm (`Log(p) = 0`).
//! 2. [`newton_cover`] — Newton polygons and the recursive construction of a
//!    good semistable covering of `P^{1,an}` adapted to the roots of `f`,
//!    together with the parity-labelled covering tree `T` and the dual graph
//!    `Γ` of the induced covering of the curve.
//! 3. [`tropgraph`] — tropical 1-forms on `Γ`, homology bases, the cycle
//!    pairing, and the dual bases entering the abelian/BC comparison formula.
//! 4. [`wideopen`] — per-chart factorizations `f = g·h²·k`, the analytic
//!    square root `ℓ(x)`, and the expansion of `ω_i = xⁱ dx/2y` into a
//!    convergent sum of elementary meromorphic terms on each chart.
//! 5. [`reduction`] — pole reduction on a good-reduction chart: rewriting a
//!    meromorphic 1-form as `dF + Σ cᵢωᵢ + Σ dⱼνⱼ` with certified bounds.
//! 6. [`coleman`] — Coleman integration on a chart: tiny integrals, the
//!    Frobenius/Kedlaya matrix and `(M−I)` solve, Weierstrass-endpoint
//!    shortcuts, third-kind integrals via Ψ/cup products, and the genus-0
//!    logarithmic case.
//! 7. [`bc_abelian`] — the top level: reference points, Berkovich–Coleman
//!    integrals along edge paths in `Γ`, periods over homology cycles, the
//!    abelian correction formula, and the Chabauty annihilator.
//!
//! Everything is deterministic: there is no randomness anywhere in the
//! library, and reruns are byte-identical.

pub mod bc_abelian;
pub mod coleman;
pub mod newton_cover;
pub mod padic;
pub mod poly;
pub mod reduction;
pub mod series;
pub mod tropgraph;
pub mod wideopen;
