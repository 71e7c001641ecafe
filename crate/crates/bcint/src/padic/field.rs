//! The ambient field `K = Q_p[θ]/(m(θ))` and its construction-time checks.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::{PadicError, Result};

/// Which of the supported extension shapes `K` has.
///
/// The shape determines how π-adic valuations are computed from the
/// θ-basis coefficients:
///
/// * `PrimeField` / `Unramified`: `v_π = min_i v_p(c_i)` (the basis
///   `1, θ, …, θ^{d−1}` reduces to an `F_p`-basis of the residue field);
/// * `Eisenstein`: `v_π = min_i (e·v_p(c_i) + i)` (the basis elements have
///   pairwise distinct valuations mod `e`);
/// * `MixedUniformizer`: via the norm,
///   `v_π(x) = (e/d)·v_p(Res_t(m(t), x(t)))`, which needs no basis
///   assumption at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    PrimeField,
    Eisenstein,
    Unramified,
    MixedUniformizer,
}

/// Shared, immutable description of the ambient field.
///
/// Everything downstream holds elements through [`FieldRef`]; the field is
/// never mutated after construction (the lazily-computed caches are
/// write-once).
#[derive(Debug)]
pub struct Field {
    /// The odd prime.
    pub p: u64,
    pub(super) big_p: BigInt,
    /// Monic defining polynomial `m` of degree `d`, little-endian
    /// coefficients (length `d+1`, last = 1).  For `Q_p` itself this is
    /// `[−p, 1]` formally, with `d = 1`.
    pub(super) m: Vec<BigInt>,
    /// Degree of the extension.
    pub d: usize,
    /// Ramification index.
    pub e: i64,
    /// Residue degree.
    pub f_res: i64,
    pub(super) shape: Shape,
    /// Requested working precision, in π-digits.
    pub n_work: i64,
    /// Working precision plus headroom; exact inputs carry this much
    /// relative precision so that series/reduction losses still leave
    /// `n_work` certified digits.
    pub n_internal: i64,
    /// Coefficients are stored modulo `p^{store_p + den}`; the storage
    /// capacity `e·store_p` bounds every claimable absolute precision.
    pub(super) store_p: i64,
    /// Cap on relative precision of any element.
    pub(super) rel_cap: i64,
    /// Printing symbol for the uniformizer (e.g. `a` in the examples).
    pub symbol: String,
    /// Cached `Log(θ)` raw parts `(coeffs, den, val, prec)`.
    pub(super) log_theta: OnceLock<(Vec<BigInt>, i64, i64, i64)>,
    /// Cached Frobenius image of θ (unramified shape only).
    pub(super) frob_theta: OnceLock<(Vec<BigInt>, i64, i64, i64)>,
}

pub type FieldRef = Arc<Field>;

fn v_p(p: &BigInt, x: &BigInt) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    let mut v = 0i64;
    let mut y = x.abs();
    loop {
        let (q, r) = num_integer::Integer::div_rem(&y, p);
        if r.is_zero() {
            v += 1;
            y = q;
        } else {
            return Some(v);
        }
    }
}

/// `⌈a/b⌉` for positive `b` (signed `div_ceil` is not yet stable).
pub(crate) fn div_ceil_i(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    (a + b - 1).div_euclid(b)
}

/// `⌈log_p(n)⌉` for `n ≥ 1`.
pub(crate) fn ceil_log_p(p: u64, n: i64) -> i64 {
    let mut k = 0i64;
    let mut pk: i128 = 1;
    while pk < n as i128 {
        pk *= p as i128;
        k += 1;
    }
    k
}

impl Field {
    fn build(
        p: u64,
        m: Vec<BigInt>,
        e: i64,
        f_res: i64,
        shape: Shape,
        n_work: i64,
        symbol: &str,
    ) -> Result<FieldRef> {
        if p < 3 || p % 2 == 0 {
            return Err(PadicError::BadDescriptor(format!(
                "p must be an odd prime ≥ 3, got {p}"
            )));
        }
        if n_work < 1 {
            return Err(PadicError::BadDescriptor("precision must be ≥ 1".into()));
        }
        let d = m.len() - 1;
        if d == 0 || !m[d].is_one() {
            return Err(PadicError::BadDescriptor(
                "defining polynomial must be monic of degree ≥ 1".into(),
            ));
        }
        if e * f_res != d as i64 {
            return Err(PadicError::BadDescriptor(format!(
                "e·f_res = {} ≠ deg m = {d}",
                e * f_res
            )));
        }
        // Headroom: series antidifferentiation can lose up to
        // ⌈N/(p−1)⌉ digits (Legendre), reductions another
        // e·(⌈log_p N⌉ + 2); a final fixed cushion absorbs the
        // documented sqrt/div losses.
        let headroom = div_ceil_i(n_work, p as i64 - 1) + e * (ceil_log_p(p, n_work) + 2) + 2 * e + 4;
        let n_internal = n_work + headroom;
        let store_p = div_ceil_i(4 * n_internal, e) + 8;
        let field = Field {
            p,
            big_p: BigInt::from(p),
            m,
            d,
            e,
            f_res,
            shape,
            n_work,
            n_internal,
            store_p,
            rel_cap: 2 * n_internal,
            symbol: symbol.to_string(),
            log_theta: OnceLock::new(),
            frob_theta: OnceLock::new(),
        };
        field.validate()?;
        Ok(Arc::new(field))
    }

    /// The prime field `Q_p` at working precision `n_work` p-digits.
    pub fn qp(p: u64, n_work: i64) -> Result<FieldRef> {
        let m = vec![BigInt::from(-(p as i64)), BigInt::one()];
        Self::build(p, m, 1, 1, Shape::PrimeField, n_work, &p.to_string())
    }

    /// The pure Eisenstein extension `K = Q_p(θ)`, `θ^e = p`, at working
    /// precision `n_work` π-digits, printed with the given symbol.
    pub fn pure_eisenstein(p: u64, e: i64, n_work: i64, symbol: &str) -> Result<FieldRef> {
        if e < 1 {
            return Err(PadicError::BadDescriptor("e must be ≥ 1".into()));
        }
        if e == 1 {
            return Self::qp(p, n_work);
        }
        let mut m = vec![BigInt::zero(); e as usize + 1];
        m[0] = BigInt::from(-(p as i64));
        m[e as usize] = BigInt::one();
        Self::build(p, m, e, 1, Shape::Eisenstein, n_work, symbol)
    }

    /// A general Eisenstein extension with the given defining polynomial.
    pub fn eisenstein(p: u64, m: Vec<BigInt>, n_work: i64, symbol: &str) -> Result<FieldRef> {
        let e = (m.len() - 1) as i64;
        Self::build(p, m, e, 1, Shape::Eisenstein, n_work, symbol)
    }

    /// An unramified extension: `m` irreducible modulo `p`.
    pub fn unramified(p: u64, m: Vec<BigInt>, n_work: i64, symbol: &str) -> Result<FieldRef> {
        let f = (m.len() - 1) as i64;
        Self::build(p, m, 1, f, Shape::Unramified, n_work, symbol)
    }

    /// A mixed monogenic extension whose generator θ is simultaneously a
    /// uniformizer and a field generator: the Newton polygon of `m` must
    /// consist of the single slope `−1/e`.
    pub fn mixed_uniformizer(
        p: u64,
        m: Vec<BigInt>,
        e: i64,
        n_work: i64,
        symbol: &str,
    ) -> Result<FieldRef> {
        let d = (m.len() - 1) as i64;
        if d % e != 0 {
            return Err(PadicError::BadDescriptor("e must divide deg m".into()));
        }
        Self::build(p, m, e, d / e, Shape::MixedUniformizer, n_work, symbol)
    }

    fn validate(&self) -> Result<()> {
        match self.shape {
            Shape::PrimeField => Ok(()),
            Shape::Eisenstein => {
                // Eisenstein: v_p(m_0) = 1, v_p(m_i) ≥ 1 for i < d.
                let v0 = v_p(&self.big_p, &self.m[0]);
                if v0 != Some(1) {
                    return Err(PadicError::BadDescriptor(
                        "Eisenstein polynomial needs v_p(m_0) = 1".into(),
                    ));
                }
                for (i, c) in self.m.iter().enumerate().take(self.d) {
                    if v_p(&self.big_p, c).map_or(false, |v| v < 1) {
                        return Err(PadicError::BadDescriptor(format!(
                            "Eisenstein polynomial needs p | m_{i}"
                        )));
                    }
                }
                Ok(())
            }
            Shape::Unramified => {
                // Light irreducibility screen: squarefree and rootless
                // mod p suffices for the degrees (≤ 3) used in anger; the
                // concrete fields are additionally exercised by tests.
                for a in 0..self.p {
                    let mut acc = BigInt::zero();
                    for c in self.m.iter().rev() {
                        acc = (acc * a + c) % &self.big_p;
                    }
                    if acc.is_zero() && self.d > 1 {
                        return Err(PadicError::BadDescriptor(
                            "polynomial has a root mod p; not irreducible".into(),
                        ));
                    }
                }
                Ok(())
            }
            Shape::MixedUniformizer => {
                // Single Newton slope −1/e: v_p(m_0) = f_res and
                // v_p(m_i) ≥ ⌈(d−i)/e⌉ for 0 < i < d.
                let v0 = v_p(&self.big_p, &self.m[0]);
                if v0 != Some(self.f_res) {
                    return Err(PadicError::BadDescriptor(format!(
                        "uniformizer generator needs v_p(m_0) = f_res = {}",
                        self.f_res
                    )));
                }
                for i in 1..self.d {
                    let need = div_ceil_i(self.d as i64 - i as i64, self.e);
                    if v_p(&self.big_p, &self.m[i]).map_or(false, |v| v < need) {
                        return Err(PadicError::BadDescriptor(format!(
                            "Newton polygon of m must have single slope −1/e; m_{i} too small"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Whether `m(θ) = θ^e − p` exactly (fast digit path).
    pub(super) fn is_pure(&self) -> bool {
        match self.shape {
            Shape::PrimeField => true,
            Shape::Eisenstein => {
                self.m[0] == BigInt::from(-(self.p as i64))
                    && self.m[1..self.d].iter().all(|c| c.is_zero())
            }
            _ => false,
        }
    }

    /// Residue-field cardinality `q = p^{f_res}`.
    pub fn q(&self) -> i64 {
        (self.p as i64).pow(self.f_res as u32)
    }

    /// Storage capacity: the largest absolute precision any element can
    /// claim, in π-digits.
    pub fn capacity(&self) -> i64 {
        self.e * self.store_p
    }

    /// `v_p` of a big integer (`None` for 0).
    pub(super) fn vp(&self, x: &BigInt) -> Option<i64> {
        v_p(&self.big_p, x)
    }

    /// `p^k` as a big integer (`k ≥ 0`).
    pub(super) fn p_pow(&self, k: i64) -> BigInt {
        debug_assert!(k >= 0);
        self.big_p.pow(k as u32)
    }

    pub(super) fn same(a: &FieldRef, b: &FieldRef) -> bool {
        Arc::ptr_eq(a, b) || (a.p == b.p && a.m == b.m && a.shape == b.shape)
    }

    /// The extension shape (drives valuation computation).
    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// The same field at a different working precision (identical `p`, `m`,
    /// shape and symbol).  Used to run loss-heavy computations (Frobenius
    /// matrices) with padding and transfer the certified results back.
    pub fn with_n_work(&self, n_work: i64) -> Result<FieldRef> {
        Field::build(
            self.p,
            self.m.clone(),
            self.e,
            self.f_res,
            self.shape,
            n_work,
            &self.symbol,
        )
    }

    /// Little-endian coefficients of the defining polynomial `m`.
    pub(super) fn m_coeffs(&self) -> &Vec<BigInt> {
        &self.m
    }
}
