//! Truncated power/Laurent series over `K` with certified tails.
//!
//! A [`TruncatedSeries`] stores finitely many coefficients on a window
//! `[lo, hi]` together with
//!
//! * a *region* of validity — a closed valuation interval
//!   `v_π(t) ∈ [vlo, vhi]` for the variable (an annulus; a disc when the
//!   window has no negative part and `vhi = ∞`), and
//! * affine *tail bounds*: certified valuation lower bounds
//!   `val(aₙ) ≥ base + slope·(k−1)` for the `k`-th omitted coefficient on
//!   each side of the window (slopes are required to be ≥ 0, so a bound
//!   re-anchored at a wider window stays valid).
//!
//! Every operation propagates the bounds pessimistically: multiplication
//! and addition cap the precision of stored coefficients by whatever the
//! other operand's tails could contribute at that degree, so a series
//! never overstates either its coefficient precisions or what it knows
//! about the omitted degrees.  Evaluation inside the region returns an
//! element whose certified precision includes the tail contribution.
//!
//! Truncation-degree selection for the binomial `(1+w)^{−1/2}` balances
//! the geometric decay of `‖w‖ⁿ` against the `p^{N/(p−1)}`-type growth of
//! antidifferentiation denominators; the latter enters through
//! [`TruncatedSeries::antidifferentiate_annulus`], whose loss is bounded
//! explicitly in [`integrate_tail`].

use std::collections::BTreeMap;

use num_rational::Rational64;

use crate::padic::{ceil_log_p, div_ceil_i, Elem, FieldRef, PadicError, Result};
use crate::poly::Poly;

/// Exponents and slopes live in π-units; small rationals suffice.
pub type Rat = Rational64;

/// Sentinel for "no useful lower bound" (conceptually −∞).
const NEG_INF: i64 = i64::MIN / 4;
const POS_INF: i64 = i64::MAX / 4;

fn rat(n: i64) -> Rat {
    Rat::from_integer(n)
}

/// Closed valuation interval for the variable: `v_π(t) ∈ [vlo, vhi]`.
/// `vhi = None` means the variable may be arbitrarily small (a disc
/// around 0, valuation unbounded above).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub vlo: Rat,
    pub vhi: Option<Rat>,
}

impl Region {
    pub fn annulus(vlo: Rat, vhi: Rat) -> Region {
        assert!(vlo <= vhi, "empty region");
        Region {
            vlo,
            vhi: Some(vhi),
        }
    }

    pub fn disc(vlo: Rat) -> Region {
        Region { vlo, vhi: None }
    }

    pub fn contains_val(&self, v: Rat) -> bool {
        v >= self.vlo && self.vhi.map_or(true, |h| v <= h)
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let vlo = self.vlo.max(other.vlo);
        let vhi = match (self.vhi, other.vhi) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a),
            (Some(a), Some(b)) => Some(a.min(b)),
        };
        if let Some(h) = vhi {
            if h < vlo {
                return None;
            }
        }
        Some(Region { vlo, vhi })
    }

    /// Minimum over the region of `n·v_π(t)` (the worst-case valuation
    /// contribution of `tⁿ`); `None` if unbounded below (negative `n` on
    /// a disc touching 0).
    fn term_shift(&self, n: i64) -> Option<Rat> {
        let at_lo = rat(n) * self.vlo;
        match self.vhi {
            Some(h) => Some(at_lo.min(rat(n) * h)),
            None => {
                if n >= 0 {
                    Some(at_lo)
                } else {
                    None
                }
            }
        }
    }
}

/// Affine tail bound on one side of the window: for the `k`-th omitted
/// degree (k = 1, 2, … counting away from the window), `val ≥ base +
/// slope·(k−1)`.  Slopes must be ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tail {
    pub base: i64,
    pub slope: Rat,
}

impl Tail {
    pub fn new(base: i64, slope: Rat) -> Tail {
        assert!(slope >= rat(0), "tail bounds must be non-decreasing");
        Tail { base, slope }
    }

    pub fn flat(base: i64) -> Tail {
        Tail::new(base, rat(0))
    }

    /// Bound at the `k`-th omitted degree (k ≥ 1).
    fn at(&self, k: i64) -> Rat {
        rat(self.base) + self.slope * rat(k - 1)
    }
}

pub type TailOpt = Option<Tail>;

fn tail_min(a: TailOpt, b: TailOpt) -> TailOpt {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(Tail {
            base: x.base.min(y.base),
            slope: x.slope.min(y.slope),
        }),
    }
}

/// Certified valuation of a stored coefficient: what we can truthfully
/// claim about the *true* coefficient it represents.
fn coeff_val(c: &Elem) -> i64 {
    c.valuation().min(c.prec())
}

/// A truncated Laurent series over `K` on a fixed annulus/disc.
#[derive(Debug, Clone)]
pub struct TruncatedSeries {
    field: FieldRef,
    coeffs: BTreeMap<i64, Elem>,
    lo: i64,
    hi: i64,
    /// Bound for degrees > hi.
    pub up: TailOpt,
    /// Bound for degrees < lo.
    pub down: TailOpt,
    pub region: Region,
}

impl TruncatedSeries {
    // -- construction -------------------------------------------------------

    pub fn zero(field: &FieldRef, region: Region) -> TruncatedSeries {
        TruncatedSeries {
            field: field.clone(),
            coeffs: BTreeMap::new(),
            lo: 0,
            hi: -1,
            up: None,
            down: None,
            region,
        }
    }

    pub fn from_coeffs(
        field: &FieldRef,
        coeffs: BTreeMap<i64, Elem>,
        region: Region,
    ) -> TruncatedSeries {
        let lo = coeffs.keys().next().copied().unwrap_or(0);
        let hi = coeffs.keys().next_back().copied().unwrap_or(-1);
        TruncatedSeries {
            field: field.clone(),
            coeffs,
            lo,
            hi,
            up: None,
            down: None,
            region,
        }
    }

    pub fn from_poly(p: &Poly, region: Region) -> TruncatedSeries {
        let field = p.field().clone();
        let mut coeffs = BTreeMap::new();
        for (i, c) in p.coeffs().iter().enumerate() {
            coeffs.insert(i as i64, c.clone());
        }
        TruncatedSeries::from_coeffs(&field, coeffs, region)
    }

    pub fn monomial(c: Elem, n: i64, region: Region) -> TruncatedSeries {
        let field = c.field().clone();
        let mut coeffs = BTreeMap::new();
        if !c.is_zero() {
            coeffs.insert(n, c);
        }
        TruncatedSeries::from_coeffs(&field, coeffs, region)
    }

    pub fn constant(c: Elem, region: Region) -> TruncatedSeries {
        TruncatedSeries::monomial(c, 0, region)
    }

    // -- inspection ---------------------------------------------------------

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn coeff(&self, n: i64) -> Elem {
        self.coeffs
            .get(&n)
            .cloned()
            .unwrap_or_else(|| Elem::zero(&self.field))
    }

    pub fn coeffs(&self) -> &BTreeMap<i64, Elem> {
        &self.coeffs
    }

    pub fn is_polynomial_window(&self) -> bool {
        self.up.is_none() && self.down.is_none()
    }

    /// Certified lower bound (π-units, floored) for the valuation of the
    /// *whole* function on the region, stored terms and tails included.
    /// A deeply negative sentinel signals an unusable bound.
    pub fn sup_val_bound(&self) -> i64 {
        let mut best = POS_INF;
        for (&n, c) in &self.coeffs {
            let shift = match self.region.term_shift(n) {
                Some(s) => s,
                None => return NEG_INF,
            };
            let v = rat(coeff_val(c)) + shift;
            best = best.min(v.floor().to_integer());
        }
        for (side, anchor, dir) in [(self.up, self.hi, 1i64), (self.down, self.lo, -1i64)] {
            if let Some(t) = side {
                // Term k (k ≥ 1) sits at degree anchor + dir·k; on the
                // region its valuation is ≥ t.at(k) + (anchor + dir·k)·v.
                // Affine in k, so the infimum is at k = 1 unless the
                // total slope is negative (then it is −∞).
                let v_candidates: Vec<Rat> = match self.region.vhi {
                    Some(h) => vec![self.region.vlo, h],
                    None => {
                        if dir > 0 {
                            vec![self.region.vlo]
                        } else {
                            return NEG_INF;
                        }
                    }
                };
                for v in v_candidates {
                    let slope_total = t.slope + rat(dir) * v;
                    if slope_total < rat(0) {
                        return NEG_INF;
                    }
                    let at1 = t.at(1) + rat(anchor + dir) * v;
                    best = best.min(at1.floor().to_integer());
                }
            }
        }
        best
    }

    /// Fold stored coefficients outside `[new_lo, new_hi]` into the tail
    /// bounds (conservatively, with flat slope) and shrink the window.
    pub fn truncated(&self, new_lo: i64, new_hi: i64) -> TruncatedSeries {
        let mut out = self.clone();
        let keys: Vec<i64> = out.coeffs.keys().copied().collect();
        for n in keys {
            if n > new_hi {
                let c = out.coeffs.remove(&n).unwrap();
                out.up = tail_min(out.up, Some(Tail::flat(coeff_val(&c))));
            } else if n < new_lo {
                let c = out.coeffs.remove(&n).unwrap();
                out.down = tail_min(out.down, Some(Tail::flat(coeff_val(&c))));
            }
        }
        out.lo = out.coeffs.keys().next().copied().unwrap_or(0);
        out.hi = out.coeffs.keys().next_back().copied().unwrap_or(-1);
        out
    }

    // -- ring operations ----------------------------------------------------

    fn common_region(&self, other: &TruncatedSeries) -> Region {
        self.region
            .intersect(&other.region)
            .expect("series regions do not overlap")
    }

    /// What `src`'s tails could contribute at degree `n` (for degrees
    /// outside `src`'s stored window); `POS_INF` when nothing can.
    fn tail_cap_from(src: &TruncatedSeries, n: i64) -> i64 {
        let mut cap = POS_INF;
        if src.coeffs.contains_key(&n) {
            return cap;
        }
        if n > src.hi {
            if let Some(t) = src.up {
                cap = cap.min(t.at(n - src.hi).floor().to_integer());
            }
        }
        if n < src.lo {
            if let Some(t) = src.down {
                cap = cap.min(t.at(src.lo - n).floor().to_integer());
            }
        }
        cap
    }

    pub fn add(&self, other: &TruncatedSeries) -> TruncatedSeries {
        let region = self.common_region(other);
        let mut coeffs = self.coeffs.clone();
        for (n, c) in &other.coeffs {
            let cur = coeffs.remove(n).unwrap_or_else(|| Elem::zero(&self.field));
            coeffs.insert(*n, &cur + c);
        }
        // Coefficients that only one operand stores may receive unseen
        // contributions from the other operand's tail: cap their precision.
        let keys: Vec<i64> = coeffs.keys().copied().collect();
        for n in keys {
            let cap = Self::tail_cap_from(self, n).min(Self::tail_cap_from(other, n));
            if cap < POS_INF {
                let c = coeffs.remove(&n).unwrap();
                coeffs.insert(n, c.with_prec(cap));
            }
        }
        let mut out = TruncatedSeries::from_coeffs(&self.field, coeffs, region);
        out.up = tail_min(self.up, other.up);
        out.down = tail_min(self.down, other.down);
        out
    }

    pub fn sub(&self, other: &TruncatedSeries) -> TruncatedSeries {
        self.add(&other.negate())
    }

    pub fn negate(&self) -> TruncatedSeries {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            *c = c.negate();
        }
        out
    }

    pub fn scale(&self, s: &Elem) -> TruncatedSeries {
        let mut out = self.clone();
        let sv = coeff_val(s);
        for c in out.coeffs.values_mut() {
            *c = &*c * s;
        }
        let bump = |t: TailOpt| {
            t.map(|t| Tail {
                base: t.base.saturating_add(sv),
                slope: t.slope,
            })
        };
        out.up = bump(out.up);
        out.down = bump(out.down);
        out
    }

    /// Multiply by `t^k`.
    pub fn shift(&self, k: i64) -> TruncatedSeries {
        let mut out = TruncatedSeries::zero(&self.field, self.region);
        out.coeffs = self
            .coeffs
            .iter()
            .map(|(n, c)| (n + k, c.clone()))
            .collect();
        if !self.coeffs.is_empty() {
            out.lo = self.lo + k;
            out.hi = self.hi + k;
        }
        out.up = self.up;
        out.down = self.down;
        out
    }

    pub fn mul(&self, other: &TruncatedSeries) -> TruncatedSeries {
        let region = self.common_region(other);
        let field = &self.field;
        let mut coeffs: BTreeMap<i64, Elem> = BTreeMap::new();
        for (na, ca) in &self.coeffs {
            for (nb, cb) in &other.coeffs {
                let n = na + nb;
                let prod = ca * cb;
                let cur = coeffs.remove(&n).unwrap_or_else(|| Elem::zero(field));
                coeffs.insert(n, &cur + &prod);
            }
        }
        let mut out = TruncatedSeries::from_coeffs(field, coeffs, region);
        // Tail-induced uncertainty inside the window: each stored degree
        // additionally receives tail(a)·stored(b), stored(a)·tail(b) and
        // tail(a)·tail(b) contributions.  Cap the stored precision by a
        // lower bound for those.
        let tail_into =
            |t: &TailOpt, anchor: i64, dir: i64, stored: &TruncatedSeries, n: i64| -> i64 {
                let mut best = POS_INF;
                if let Some(t) = t {
                    for (&j, bj) in &stored.coeffs {
                        let k = (n - j - anchor) * dir;
                        if k >= 1 {
                            let b = t.at(k) + rat(coeff_val(bj));
                            best = best.min(b.floor().to_integer());
                        }
                    }
                }
                best
            };
        let tail_tail_cap = || -> i64 {
            let mut best = POS_INF;
            for (ta, tb) in [
                (&self.up, &other.up),
                (&self.up, &other.down),
                (&self.down, &other.up),
                (&self.down, &other.down),
            ] {
                if let (Some(a), Some(b)) = (ta, tb) {
                    best = best.min(a.base.saturating_add(b.base));
                }
            }
            best
        };
        let tt_cap = tail_tail_cap();
        let keys: Vec<i64> = out.coeffs.keys().copied().collect();
        for n in keys {
            let mut cap = tt_cap;
            cap = cap.min(tail_into(&self.up, self.hi, 1, other, n));
            cap = cap.min(tail_into(&self.down, self.lo, -1, other, n));
            cap = cap.min(tail_into(&other.up, other.hi, 1, self, n));
            cap = cap.min(tail_into(&other.down, other.lo, -1, self, n));
            if cap < POS_INF {
                let c = out.coeffs.remove(&n).unwrap();
                out.coeffs.insert(n, c.with_prec(cap));
            }
        }
        // Product tails.  With slopes ≥ 0, the worst split of a degree
        // beyond the product window pairs the tail term nearest the
        // window with the other operand's minimal stored valuation;
        // tail×tail adds bases with the smaller slope.
        let min_val =
            |s: &TruncatedSeries| s.coeffs.values().map(coeff_val).min().unwrap_or(POS_INF);
        let comb = |ta: TailOpt, vb: i64| {
            ta.and_then(|t| {
                if vb >= POS_INF {
                    None
                } else {
                    Some(Tail {
                        base: t.base.saturating_add(vb),
                        slope: t.slope,
                    })
                }
            })
        };
        let cross = |ta: TailOpt, tb: TailOpt| match (ta, tb) {
            (Some(a), Some(b)) => Some(Tail {
                base: a.base.saturating_add(b.base),
                slope: a.slope.min(b.slope),
            }),
            _ => None,
        };
        out.up = tail_min(
            tail_min(comb(self.up, min_val(other)), comb(other.up, min_val(self))),
            cross(self.up, other.up),
        );
        out.down = tail_min(
            tail_min(
                comb(self.down, min_val(other)),
                comb(other.down, min_val(self)),
            ),
            cross(self.down, other.down),
        );
        out
    }

    // -- the interesting operations -----------------------------------------

    /// `u^{−1/2}` for `u = 1 + w` with `‖w‖ < 1` on the region, via the
    /// binomial series `Σ binom(−1/2, n) wⁿ`.
    ///
    /// The coefficients `binom(−1/2, n) = (−1)ⁿ·binom(2n,n)/4ⁿ` are
    /// p-adic integers for odd `p`, so no precision is lost to them; the
    /// truncation degree is chosen so the omitted tail sits below the
    /// field's internal working target.
    pub fn inv_sqrt_binomial(&self) -> Result<TruncatedSeries> {
        let field = &self.field;
        let one = Elem::one(field);
        let w = self.sub(&TruncatedSeries::constant(one.clone(), self.region));
        let eps = w.sup_val_bound();
        if eps <= 0 {
            return Err(PadicError::PrecisionExhausted(
                "inv_sqrt_binomial needs ‖u − 1‖ < 1 on the region".into(),
            ));
        }
        let target = field.n_internal;
        let n_max = div_ceil_i(target, eps) + 1;
        let mut acc = TruncatedSeries::constant(one, self.region);
        let mut wpow = acc.clone();
        let mut coef = Elem::one(field);
        for n in 1..=n_max {
            wpow = wpow.mul(&w);
            coef = &coef * &Elem::from_ratio_i64(field, -(2 * n - 1), 2 * n);
            acc = acc.add(&wpow.scale(&coef));
        }
        // Omitted terms have sup-valuation ≥ (n_max+1)·eps on the whole
        // region; fold that into both tails (flat slope — conservative).
        let omit = Some(Tail::flat((n_max + 1).saturating_mul(eps)));
        acc.up = tail_min(acc.up, omit);
        acc.down = tail_min(acc.down, omit);
        Ok(acc)
    }

    /// Multiplicative inverse of `u = c·tᵏ·(1 + w)` with `‖w‖ < 1` on the
    /// region, via the geometric series.
    pub fn geometric_inverse(&self) -> Result<TruncatedSeries> {
        let field = &self.field;
        // The dominant monomial: the stored term attaining the sup-norm
        // on the whole region (must be strictly dominant for convergence).
        let lead = self
            .coeffs
            .iter()
            .filter(|(_, c)| !c.is_zero())
            .min_by_key(|(&n, c)| {
                self.region
                    .term_shift(n)
                    .map(|s| (rat(coeff_val(c)) + s).floor().to_integer())
                    .unwrap_or(NEG_INF)
            });
        let (&k, c) = lead.ok_or(PadicError::DivisionByZero { val: 0, prec: 0 })?;
        let c = c.clone();
        let ci = c.inv()?;
        let w = self
            .shift(-k)
            .scale(&ci)
            .sub(&TruncatedSeries::constant(Elem::one(field), self.region));
        let eps = w.sup_val_bound();
        if eps <= 0 {
            return Err(PadicError::PrecisionExhausted(
                "geometric_inverse: no strictly dominant term on the region".into(),
            ));
        }
        let n_max = div_ceil_i(field.n_internal, eps) + 1;
        let mut acc = TruncatedSeries::constant(Elem::one(field), self.region);
        let mut wpow = acc.clone();
        for n in 1..=n_max {
            wpow = wpow.mul(&w);
            let term = if n % 2 == 1 { wpow.negate() } else { wpow.clone() };
            acc = acc.add(&term);
        }
        let omit = Some(Tail::flat((n_max + 1).saturating_mul(eps)));
        acc.up = tail_min(acc.up, omit);
        acc.down = tail_min(acc.down, omit);
        Ok(acc.scale(&ci).shift(-k))
    }

    /// Term-by-term antidifferentiation of `ω = (Σ aₙ tⁿ) dt` on an
    /// annulus: returns `(F, c_log)` with `F = Σ_{n≠−1} aₙ tⁿ⁺¹/(n+1)`
    /// and `c_log = a_{−1}`; a primitive of ω is `F + c_log·Log(t)`.
    pub fn antidifferentiate_annulus(&self) -> Result<(TruncatedSeries, Elem)> {
        let field = &self.field;
        let mut coeffs = BTreeMap::new();
        let mut c_log = Elem::zero(field);
        for (&n, c) in &self.coeffs {
            if n == -1 {
                c_log = c.clone();
            } else {
                coeffs.insert(n + 1, c.div_i64(n + 1)?);
            }
        }
        let mut out = TruncatedSeries::from_coeffs(field, coeffs, self.region);
        out.up = self.up.map(|t| integrate_tail(field, &t, self.hi));
        out.down = self.down.map(|t| integrate_tail(field, &t, self.lo));
        Ok((out, c_log))
    }

    /// Evaluate at a point of the region.  The certified precision of the
    /// result accounts for coefficient precisions *and* both tails.
    pub fn evaluate(&self, x: &Elem) -> Result<Elem> {
        let vx = rat(x.valuation());
        if !x.is_zero() && !self.region.contains_val(vx) {
            return Err(PadicError::PrecisionExhausted(format!(
                "evaluation point with v_π = {vx} outside region [{}, {}]",
                self.region.vlo,
                self.region.vhi.map_or("∞".to_string(), |h| h.to_string()),
            )));
        }
        let field = &self.field;
        let mut acc = Elem::zero(field);
        // Nonnegative part by Horner.
        let nonneg: Vec<(i64, &Elem)> = self
            .coeffs
            .iter()
            .filter(|(n, _)| **n >= 0)
            .map(|(n, c)| (*n, c))
            .collect();
        if !nonneg.is_empty() {
            let top = nonneg.last().unwrap().0;
            let mut h = Elem::zero(field);
            let mut idx = nonneg.len();
            for n in (0..=top).rev() {
                h = &h * x;
                if idx > 0 && nonneg[idx - 1].0 == n {
                    idx -= 1;
                    h = &h + nonneg[idx].1;
                }
            }
            acc = h;
        }
        // Negative part with the inverse.
        let negs: Vec<(i64, &Elem)> = self
            .coeffs
            .iter()
            .filter(|(n, _)| **n < 0)
            .map(|(n, c)| (*n, c))
            .collect();
        if !negs.is_empty() {
            let xi = x.inv()?;
            let mut pw = Elem::one(field);
            let mut k = 0i64;
            for (n, c) in negs.iter().rev() {
                while k < -n {
                    pw = &pw * &xi;
                    k += 1;
                }
                acc = &acc + &(*c * &pw);
            }
        }
        // Tail error: min over both tails of inf_k bound(k) + degree·v(x).
        let mut err = POS_INF;
        for (side, anchor, dir) in [(self.up, self.hi, 1i64), (self.down, self.lo, -1i64)] {
            if let Some(t) = side {
                let slope_total = t.slope + rat(dir) * vx;
                if slope_total < rat(0) {
                    return Err(PadicError::PrecisionExhausted(
                        "tail bound does not converge at the evaluation point".into(),
                    ));
                }
                let at1 = t.at(1) + rat(anchor + dir) * vx;
                err = err.min(at1.floor().to_integer());
            }
        }
        Ok(acc.with_prec(err))
    }

    /// Composition `f(g(t))`; supported when `g` is a tail-free constant,
    /// or when `f` has a nonnegative window and `g` is topologically
    /// nilpotent on its region (so powers of `g` converge).
    pub fn compose(&self, g: &TruncatedSeries) -> Result<TruncatedSeries> {
        if g.coeffs.keys().all(|&n| n == 0) && g.is_polynomial_window() {
            let v = self.evaluate(&g.coeff(0))?;
            return Ok(TruncatedSeries::constant(v, g.region));
        }
        if self.lo < 0 && !self.coeffs.is_empty() {
            return Err(PadicError::PrecisionExhausted(
                "compose: negative powers of a non-constant inner series".into(),
            ));
        }
        let gval = g.sup_val_bound();
        if gval <= 0 {
            return Err(PadicError::PrecisionExhausted(
                "compose: inner series must be topologically nilpotent".into(),
            ));
        }
        let mut acc = TruncatedSeries::zero(&g.field, g.region);
        let mut pw = TruncatedSeries::constant(Elem::one(&g.field), g.region);
        let mut cur = 0i64;
        for (&n, c) in &self.coeffs {
            while cur < n {
                pw = pw.mul(g);
                cur += 1;
            }
            acc = acc.add(&pw.scale(c));
        }
        if let Some(t) = self.up {
            // f's omitted terms contribute sup-valuation ≥ base + (hi+1)·‖g‖.
            let omit = Some(Tail::flat(
                (rat(t.base) + rat(self.hi + 1) * rat(gval))
                    .floor()
                    .to_integer(),
            ));
            acc.up = tail_min(acc.up, omit);
            acc.down = tail_min(acc.down, omit);
        }
        Ok(acc)
    }
}

/// Antidifferentiation sends the tail term at offset `k` (valuation ≥
/// `base + slope·(k−1)`, degree near `|anchor| + k`) to one divided by an
/// integer of p-valuation ≤ `⌈log_p(degree+1)⌉`.  Return an affine lower
/// bound for the integrated tail: new slope is half the old, and the base
/// absorbs the worst log-vs-linear trade-off, which is finite because the
/// (positive) slope eventually dominates the logarithmic denominators.
fn integrate_tail(field: &FieldRef, t: &Tail, anchor: i64) -> Tail {
    let abs_anchor = anchor.abs();
    if t.slope == rat(0) {
        // No decay to trade: degrade the base by the worst denominator
        // cost within the storage-relevant degree range (beyond it a term
        // cannot affect any certified digit anyway).
        let far = abs_anchor + field.capacity() + 2;
        let worst = field.e * ceil_log_p(field.p, far + 1);
        return Tail::new(t.base.saturating_sub(worst), rat(0));
    }
    let half = t.slope / rat(2);
    // Minimize base + (slope/2)·(k−1) − e·⌈log_p(|anchor|+k+1)⌉ over k ≥ 1.
    let mut best = rat(t.base);
    let mut k = 1i64;
    loop {
        let cost = rat(field.e * ceil_log_p(field.p, abs_anchor + k + 1));
        best = best.min(rat(t.base) + half * rat(k - 1) - cost);
        if half * rat(k) > cost + rat(field.e) || k > 64 * (field.n_internal + 4) {
            break;
        }
        k += 1;
    }
    Tail::new(best.floor().to_integer(), half)
}
