//! Elements of `K` with capped-precision arithmetic.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::field::{ceil_log_p, Field, FieldRef, Shape};
use super::{PadicError, Result};

/// An element of `K = Q_p[θ]/(m)`, stored as `p^{−den} · Σ cᵢ θⁱ` with the
/// integer coefficients reduced modulo `p^{store_p + den}`.
///
/// `prec` and `val` are in π-digits (see module docs): the element is
/// certified modulo `π^{prec}`, and `val` is a certified lower bound on its
/// valuation.  An element is (indistinguishable from) zero exactly when its
/// valuation reaches `prec`.
#[derive(Clone)]
pub struct Elem {
    field: FieldRef,
    coeffs: Vec<BigInt>,
    den: i64,
    val: i64,
    prec: i64,
}

impl fmt::Debug for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Elem({self})")
    }
}

// ---------------------------------------------------------------------------
// construction
// ---------------------------------------------------------------------------

impl Elem {
    fn raw(field: FieldRef, coeffs: Vec<BigInt>, den: i64, val: i64, prec: i64) -> Elem {
        let mut el = Elem {
            field,
            coeffs,
            den,
            val,
            prec,
        };
        el.reduce();
        el
    }

    /// Construct from already-exact data: valuation computed exactly, and
    /// the element carries the field's full relative-precision cap.
    fn exact(field: FieldRef, coeffs: Vec<BigInt>, den: i64) -> Elem {
        let mut el = Elem {
            val: 0,
            prec: field.capacity(),
            field,
            coeffs,
            den,
        };
        el.reduce();
        let v = el.valuation_raw().unwrap_or(el.field.capacity());
        el.val = v.min(el.field.capacity());
        el.prec = (el.val + el.field.rel_cap).min(el.field.capacity());
        el
    }

    pub fn zero(field: &FieldRef) -> Elem {
        let cap = field.capacity();
        Elem {
            field: field.clone(),
            coeffs: vec![BigInt::zero(); field.d],
            den: 0,
            val: cap,
            prec: cap,
        }
    }

    /// Zero known only modulo `π^{prec}`.
    pub fn zero_prec(field: &FieldRef, prec: i64) -> Elem {
        let mut z = Elem::zero(field);
        z.prec = prec.min(field.capacity());
        z.val = z.prec;
        z
    }

    pub fn one(field: &FieldRef) -> Elem {
        Elem::from_bigint(field, BigInt::one())
    }

    pub fn from_i64(field: &FieldRef, n: i64) -> Elem {
        Elem::from_bigint(field, BigInt::from(n))
    }

    pub fn from_bigint(field: &FieldRef, n: BigInt) -> Elem {
        let mut coeffs = vec![BigInt::zero(); field.d];
        coeffs[0] = n;
        Elem::exact(field.clone(), coeffs, 0)
    }

    /// Exact rational `a/b` (with `b ≠ 0`), p-part extracted into the
    /// valuation.
    pub fn from_rational(field: &FieldRef, r: &BigRational) -> Elem {
        let mut coeffs = vec![BigInt::zero(); field.d];
        let (num, den_int) = (r.numer().clone(), r.denom().clone());
        if num.is_zero() {
            return Elem::zero(field);
        }
        // Split p-powers off numerator and denominator.
        let vn = field.vp(&num).unwrap_or(0);
        let vd = field.vp(&den_int).unwrap_or(0);
        let num_u = &num / field.p_pow(vn);
        let den_u = &den_int / field.p_pow(vd);
        let k = vn - vd; // value = p^k · num_u/den_u
        let den = (-k).max(0);
        let modulus = field.p_pow(field.store_p + den);
        let inv_den = mod_inverse(&den_u, &modulus);
        let mut c = (num_u * inv_den).mod_floor(&modulus);
        if k > 0 {
            c = (c * field.p_pow(k)).mod_floor(&modulus);
        }
        coeffs[0] = c;
        Elem::exact(field.clone(), coeffs, den)
    }

    pub fn from_ratio_i64(field: &FieldRef, num: i64, den: i64) -> Elem {
        Elem::from_rational(
            field,
            &BigRational::new(BigInt::from(num), BigInt::from(den)),
        )
    }

    /// The generator θ of `K` (for `Q_p` itself this is `p`).
    pub fn gen(field: &FieldRef) -> Elem {
        if field.d == 1 {
            return Elem::from_bigint(field, BigInt::from(field.p));
        }
        let mut coeffs = vec![BigInt::zero(); field.d];
        coeffs[1] = BigInt::one();
        Elem::exact(field.clone(), coeffs, 0)
    }

    /// A uniformizer: θ in the ramified shapes, `p` otherwise.
    pub fn uniformizer(field: &FieldRef) -> Elem {
        match field.shape() {
            Shape::Eisenstein | Shape::MixedUniformizer => Elem::gen(field),
            _ => Elem::from_bigint(field, BigInt::from(field.p)),
        }
    }

    /// The unit `u = θ^e/p` (ramified shapes) or `θ` (otherwise) whose
    /// residue powers enumerate the residue field.
    pub fn residue_unit(field: &FieldRef) -> Elem {
        match field.shape() {
            Shape::Eisenstein | Shape::MixedUniformizer => {
                let th = Elem::gen(field);
                let p_inv =
                    Elem::from_rational(field, &BigRational::new(BigInt::one(), BigInt::from(field.p)));
                &th.pow_i64(field.e) * &p_inv
            }
            _ => Elem::gen(field),
        }
    }

    /// Exact element `Σ rᵢ θⁱ` from rational θ-coordinates.
    pub fn from_theta_coords(field: &FieldRef, coords: &[BigRational]) -> Elem {
        let mut acc = Elem::zero(field);
        let theta = Elem::gen(field);
        let mut pw = Elem::one(field);
        for r in coords {
            acc = &acc + &(&pw * &Elem::from_rational(field, r));
            pw = &pw * &theta;
        }
        acc
    }

    // -- internal bookkeeping ------------------------------------------------

    /// Reduce coefficient representatives modulo the storage modulus and
    /// strip common p-powers into `den`.
    fn reduce(&mut self) {
        let modulus = self.field.p_pow(self.field.store_p + self.den);
        for c in &mut self.coeffs {
            *c = c.mod_floor(&modulus);
        }
        while self.den > 0 {
            let p = BigInt::from(self.field.p);
            if self.coeffs.iter().all(|c| (c % &p).is_zero()) {
                for c in &mut self.coeffs {
                    *c /= &p;
                }
                self.den -= 1;
            } else {
                break;
            }
        }
        let cap = self.field.capacity();
        self.prec = self.prec.min(cap);
        self.val = self.val.min(self.prec);
    }
}

fn mod_inverse(a: &BigInt, modulus: &BigInt) -> BigInt {
    let g = a.extended_gcd(modulus);
    debug_assert!(g.gcd.is_one(), "mod_inverse of non-unit");
    g.x.mod_floor(modulus)
}

// ---------------------------------------------------------------------------
// inspection
// ---------------------------------------------------------------------------

impl Elem {
    /// Reinterpret in a precision clone of the same field (see
    /// [`Field::with_n_work`]), treating the stored representative as
    /// exact.  Sound for elements that are exact by construction (integer,
    /// rational and θ-coordinate inputs); for rounded elements the caller
    /// must cap the certification of whatever is computed from the result.
    pub fn promote_exact(&self, f2: &FieldRef) -> Result<Elem> {
        if !Field::same(&self.field, f2) {
            return Err(PadicError::BadDescriptor(
                "precision transfer between unrelated fields".into(),
            ));
        }
        Ok(Elem::exact(f2.clone(), self.coeffs.clone(), self.den))
    }

    /// Transfer into a precision clone of the same field, keeping the
    /// certified precision (capped by the target capacity).
    pub fn demote(&self, f2: &FieldRef) -> Result<Elem> {
        if !Field::same(&self.field, f2) {
            return Err(PadicError::BadDescriptor(
                "precision transfer between unrelated fields".into(),
            ));
        }
        // Tighten the valuation bound: computations at padded precision can
        // leave it far below the true valuation, and a loose bound poisons
        // the precision of later products.
        Ok(Elem::raw(
            f2.clone(),
            self.coeffs.clone(),
            self.den,
            self.val.min(f2.capacity()),
            self.prec.min(f2.capacity()),
        )
        .settle_val())
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    /// Absolute precision in π-digits.
    pub fn prec(&self) -> i64 {
        self.prec
    }

    /// The stored valuation lower bound (cheap; may be loose).
    pub fn val_bound(&self) -> i64 {
        self.val
    }

    /// Exact π-adic valuation of the stored representative, `None` if the
    /// representative is identically zero.
    fn valuation_raw(&self) -> Option<i64> {
        let f = &self.field;
        match f.shape() {
            Shape::PrimeField | Shape::Unramified => self
                .coeffs
                .iter()
                .filter_map(|c| f.vp(c))
                .min()
                .map(|v| v - self.den),
            Shape::Eisenstein => self
                .coeffs
                .iter()
                .enumerate()
                .filter_map(|(i, c)| f.vp(c).map(|v| f.e * v + i as i64))
                .min()
                .map(|v| v - f.e * self.den),
            Shape::MixedUniformizer => {
                if self.coeffs.iter().all(|c| c.is_zero()) {
                    return None;
                }
                let res = resultant(&f.m_coeffs()[..], &self.coeffs);
                let vres = f.vp(&res)?;
                let d = f.d as i64;
                let num = f.e * vres;
                debug_assert!(
                    num % d == 0,
                    "norm valuation not divisible by the degree"
                );
                Some(num / d - f.e * self.den)
            }
        }
    }

    /// Certified π-adic valuation, capped at the absolute precision (an
    /// element with `valuation() == prec()` is zero as far as we know).
    pub fn valuation(&self) -> i64 {
        match self.valuation_raw() {
            Some(v) => v.min(self.prec),
            None => self.prec,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.valuation() >= self.prec
    }

    /// Tighten the stored valuation bound to the exact valuation.
    pub fn settle_val(mut self) -> Elem {
        self.val = self.valuation();
        self
    }

    /// Equality modulo `π^n` (both sides must certify `n` digits).
    pub fn eq_mod(&self, other: &Elem, n: i64) -> bool {
        let d = self - other;
        d.prec >= n && d.valuation() >= n
    }

    /// Restrict the claimed precision (no-op if already lower).
    pub fn with_prec(mut self, n: i64) -> Elem {
        self.prec = self.prec.min(n);
        self.val = self.val.min(self.prec);
        self
    }

    /// Whether all θ-coordinates above the constant one vanish at the
    /// element's precision, i.e. the element lies in `Q_p`.
    pub fn is_rational(&self) -> bool {
        if self.field.d == 1 {
            return true;
        }
        let mut probe = self.clone();
        probe.coeffs[0] = BigInt::zero();
        probe.valuation() >= probe.prec
    }

    pub(super) fn raw_parts(&self) -> (Vec<BigInt>, i64, i64, i64) {
        (self.coeffs.clone(), self.den, self.val, self.prec)
    }

    pub(super) fn from_raw_parts(
        field: &FieldRef,
        parts: (Vec<BigInt>, i64, i64, i64),
    ) -> Elem {
        Elem::raw(field.clone(), parts.0, parts.1, parts.2, parts.3)
    }
}

/// Resultant of two integer polynomials via Bareiss (fraction-free
/// Gaussian elimination) on the Sylvester matrix.  Degrees here are ≤ 4,
/// so this is cheap and exact.
fn resultant(a: &[BigInt], b: &[BigInt]) -> BigInt {
    let da = a.iter().rposition(|c| !c.is_zero()).unwrap_or(0);
    let db = b.iter().rposition(|c| !c.is_zero()).unwrap_or(0);
    if da == 0 {
        return a[0].pow(db as u32);
    }
    if db == 0 {
        return b[0].pow(da as u32);
    }
    let n = da + db;
    let mut mat = vec![vec![BigInt::zero(); n]; n];
    for (i, row) in mat.iter_mut().enumerate().take(db) {
        for j in 0..=da {
            row[i + j] = a[da - j].clone();
        }
    }
    for i in 0..da {
        for j in 0..=db {
            mat[db + i][i + j] = b[db - j].clone();
        }
    }
    bareiss_det(mat)
}

fn bareiss_det(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    let mut sign = 1i64;
    let mut prev = BigInt::one();
    for k in 0..n {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(k, i);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &m[i][j] * &m[k][k] - &m[i][k] * &m[k][j];
                m[i][j] = &t / &prev;
            }
        }
        prev = m[k][k].clone();
        for row in m.iter_mut().skip(k + 1) {
            row[k] = BigInt::zero();
        }
    }
    let det = m[n - 1][n - 1].clone();
    if sign < 0 {
        -det
    } else {
        det
    }
}

// ---------------------------------------------------------------------------
// ring operations
// ---------------------------------------------------------------------------

impl Elem {
    fn check_same_field(&self, other: &Elem) {
        assert!(
            Field::same(&self.field, &other.field),
            "mixing elements of different fields"
        );
    }

    fn add_impl(&self, other: &Elem, negate: bool) -> Elem {
        self.check_same_field(other);
        let den = self.den.max(other.den);
        let fa = self.field.p_pow(den - self.den);
        let fb = self.field.p_pow(den - other.den);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| {
                let t = b * &fb;
                if negate {
                    a * &fa - t
                } else {
                    a * &fa + t
                }
            })
            .collect();
        Elem::raw(
            self.field.clone(),
            coeffs,
            den,
            self.val.min(other.val),
            self.prec.min(other.prec),
        )
    }

    fn mul_impl(&self, other: &Elem) -> Elem {
        self.check_same_field(other);
        let d = self.field.d;
        let mut prod = vec![BigInt::zero(); 2 * d - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                prod[i + j] += a * b;
            }
        }
        // reduce modulo the monic m
        let m = self.field.m_coeffs();
        for i in (d..prod.len()).rev() {
            if prod[i].is_zero() {
                continue;
            }
            let c = std::mem::take(&mut prod[i]);
            for j in 0..d {
                prod[i - d + j] -= &c * &m[j];
            }
        }
        prod.truncate(d);
        let val = self.val + other.val;
        let prec = (self.prec + other.val).min(other.prec + self.val);
        Elem::raw(self.field.clone(), prod, self.den + other.den, val, prec)
    }

    pub fn negate(&self) -> Elem {
        let coeffs = self.coeffs.iter().map(|c| -c).collect();
        Elem::raw(self.field.clone(), coeffs, self.den, self.val, self.prec)
    }

    pub fn mul_i64(&self, n: i64) -> Elem {
        self * &Elem::from_i64(&self.field, n)
    }

    pub fn div_i64(&self, n: i64) -> Result<Elem> {
        if n == 0 {
            return Err(PadicError::DivisionByZero { val: 0, prec: 0 });
        }
        Ok(self * &Elem::from_ratio_i64(&self.field, 1, n))
    }

    /// Multiplicative inverse, via the exact Bézout identity
    /// `s(t)·x(t) + t(t)·m(t) = 1` over `Q` on the stored representative.
    /// Relative precision is preserved: the result certifies
    /// `prec − 2·val` digits beyond its valuation `−val`.
    pub fn inv(&self) -> Result<Elem> {
        let v = self.valuation();
        if v >= self.prec {
            return Err(PadicError::DivisionByZero {
                val: v,
                prec: self.prec,
            });
        }
        let f = &self.field;
        // Representative polynomial over Q (denominator folded in).
        let denq = BigRational::from(f.p_pow(self.den));
        let xs: Vec<BigRational> = self
            .coeffs
            .iter()
            .map(|c| BigRational::from(c.clone()) / &denq)
            .collect();
        let ms: Vec<BigRational> = f
            .m_coeffs()
            .iter()
            .map(|c| BigRational::from(c.clone()))
            .collect();
        let s = bezout_inverse(&xs, &ms);
        // p-adically reduce each rational coefficient.
        let mut acc = Elem::zero(f);
        let theta = Elem::gen(f);
        let mut pw = Elem::one(f);
        for r in &s {
            acc = &acc + &(&pw * &Elem::from_rational(f, r));
            pw = &pw * &theta;
        }
        acc.val = -v;
        acc.prec = (self.prec - 2 * v).min(f.capacity());
        acc.val = acc.val.min(acc.prec);
        Ok(acc)
    }

    pub fn pow_i64(&self, n: i64) -> Elem {
        if n < 0 {
            return self
                .inv()
                .expect("pow of non-invertible element")
                .pow_i64(-n);
        }
        // Settle the valuation bound first: products of settled elements
        // keep exact bounds, while a loose bound is charged against the
        // precision of every partial product.
        let mut acc = Elem::one(&self.field);
        let mut base = self.clone().settle_val();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            k >>= 1;
        }
        acc
    }

    /// `π^k` in this element's field (θ-power in ramified shapes, p-power
    /// otherwise); exact, supports negative `k`.
    pub fn pi_pow(field: &FieldRef, k: i64) -> Elem {
        Elem::uniformizer(field).pow_i64(k)
    }
}

/// Given coprime `x`, `m` (deg x < deg m, m monic), return `s` with
/// `s·x ≡ 1 (mod m)` by the extended Euclidean algorithm over `Q`.
fn bezout_inverse(x: &[BigRational], m: &[BigRational]) -> Vec<BigRational> {
    // Remainder sequence with cofactors for x only:
    //   r0 = m (s0 = 0), r1 = x (s1 = 1), r_{k+1} = r_{k-1} − q·r_k.
    let trim = |v: &mut Vec<BigRational>| {
        while v.len() > 1 && v.last().map_or(false, |c| c.is_zero()) {
            v.pop();
        }
    };
    let mut r0: Vec<BigRational> = m.to_vec();
    let mut r1: Vec<BigRational> = x.to_vec();
    trim(&mut r0);
    trim(&mut r1);
    let mut s0 = vec![BigRational::zero()];
    let mut s1 = vec![BigRational::one()];
    while !(r1.len() == 1 && r1[0].is_zero()) {
        // divide r0 by r1
        let mut rem = r0.clone();
        let mut q = vec![BigRational::zero(); rem.len().saturating_sub(r1.len()) + 1];
        let lead = r1.last().unwrap().clone();
        while rem.len() >= r1.len() && !(rem.len() == 1 && rem[0].is_zero()) {
            let deg_diff = rem.len() - r1.len();
            let c = rem.last().unwrap() / &lead;
            q[deg_diff] = c.clone();
            for (i, rc) in r1.iter().enumerate() {
                let idx = deg_diff + i;
                let t = rc * &c;
                rem[idx] -= t;
            }
            trim(&mut rem);
            if rem.iter().all(|c| c.is_zero()) {
                rem = vec![BigRational::zero()];
            }
        }
        // s_{new} = s0 − q·s1
        let mut snew = s0.clone();
        let qlen = q.len();
        snew.resize(snew.len().max(qlen + s1.len() - 1), BigRational::zero());
        for (i, qc) in q.iter().enumerate() {
            if qc.is_zero() {
                continue;
            }
            for (j, sc) in s1.iter().enumerate() {
                let t = qc * sc;
                snew[i + j] -= t;
            }
        }
        trim(&mut snew);
        r0 = std::mem::take(&mut r1);
        r1 = rem;
        s0 = std::mem::take(&mut s1);
        s1 = snew;
    }
    // r0 is now the (scalar) gcd; normalize s0 by it.
    debug_assert!(r0.len() == 1 && !r0[0].is_zero(), "inverse of zero divisor");
    let g = r0[0].clone();
    s0.iter().map(|c| c / &g).collect()
}

// operator impls ------------------------------------------------------------

impl std::ops::Add for &Elem {
    type Output = Elem;
    fn add(self, rhs: &Elem) -> Elem {
        self.add_impl(rhs, false)
    }
}
impl std::ops::Sub for &Elem {
    type Output = Elem;
    fn sub(self, rhs: &Elem) -> Elem {
        self.add_impl(rhs, true)
    }
}
impl std::ops::Mul for &Elem {
    type Output = Elem;
    fn mul(self, rhs: &Elem) -> Elem {
        self.mul_impl(rhs)
    }
}
impl std::ops::Neg for &Elem {
    type Output = Elem;
    fn neg(self) -> Elem {
        self.negate()
    }
}

impl Elem {
    pub fn div(&self, other: &Elem) -> Result<Elem> {
        Ok(self * &other.inv()?)
    }
}

// ---------------------------------------------------------------------------
// residue representatives, square roots, logarithm
// ---------------------------------------------------------------------------

impl Elem {
    /// The `q = p^{f_res}` residue representatives `Σ aⱼ u^j`,
    /// `aⱼ ∈ {0,…,p−1}`, in lexicographic order of `(a_{f−1},…,a_0)` —
    /// so the plain integers `0,…,p−1` come first.
    pub fn residue_reps(field: &FieldRef) -> Vec<Elem> {
        let u = Elem::residue_unit(field);
        let f = field.f_res as usize;
        let p = field.p as i64;
        let mut upows = Vec::with_capacity(f);
        let mut pw = Elem::one(field);
        for _ in 0..f {
            upows.push(pw.clone());
            pw = &pw * &u;
        }
        let total = (p as u64).pow(f as u32) as usize;
        let mut reps = Vec::with_capacity(total);
        for idx in 0..total {
            let mut acc = Elem::zero(field);
            let mut rest = idx as i64;
            for upow in upows.iter() {
                let a = rest % p;
                rest /= p;
                if a != 0 {
                    acc = &acc + &upow.mul_i64(a);
                }
            }
            reps.push(acc);
        }
        reps
    }

    /// Leading residue of a unit (valuation 0) element: the representative
    /// `r` with `v(x − r) ≥ 1`.  Panics if `x` is not a unit.
    pub fn residue(&self) -> Elem {
        assert!(self.valuation() == 0, "residue of a non-unit");
        for r in Elem::residue_reps(&self.field) {
            if (self - &r).valuation() >= 1 {
                return r;
            }
        }
        unreachable!("no residue representative matched — inconsistent field data");
    }

    /// Square root with an explicit sign choice.
    ///
    /// Preconditions: even valuation, nonzero at working precision, square
    /// leading residue.  Of the two roots the one whose leading residue
    /// equals `hint`'s (when supplied) is returned; with no hint the root
    /// whose residue representative comes first in the deterministic
    /// enumeration order of [`Elem::residue_reps`] is chosen.
    ///
    /// Documented loss: the result certifies `prec − val/2` digits, i.e.
    /// relative precision is preserved.
    pub fn sqrt(&self, hint: Option<&Elem>) -> Result<Elem> {
        let v = self.valuation();
        if v >= self.prec {
            return Err(PadicError::PrecisionExhausted(
                "sqrt of (apparent) zero".into(),
            ));
        }
        if v % 2 != 0 {
            return Err(PadicError::OddValuation { val: v });
        }
        let f = &self.field;
        let shift = Elem::pi_pow(f, -v);
        let u = self * &shift; // unit
        // Residue square root by enumeration (q ≤ 25 in practice).
        let mut seed = None;
        for r in Elem::residue_reps(f) {
            if r.valuation() >= 1 {
                continue; // skip 0
            }
            if (&(&r * &r) - &u).valuation() >= 1 {
                seed = Some(r);
                break;
            }
        }
        let mut s = seed.ok_or(PadicError::NonSquareResidue)?;
        // Newton: s ← (s + u/s)/2, quadratic convergence, 2 is a unit.
        let half = Elem::from_ratio_i64(f, 1, 2);
        let target = u.prec();
        let mut gain = 1i64; // v(s² − u) ≥ gain
        while gain < target {
            s = &(&s + &u.div(&s)?) * &half;
            gain = (2 * gain).min(target);
        }
        // Fix the sign.
        if let Some(h) = hint {
            let hr = h.residue();
            if (&s.residue() - &hr).valuation() < 1 {
                let neg = s.negate();
                if (&neg.residue() - &hr).valuation() < 1 {
                    return Err(PadicError::NonSquareResidue);
                }
                s = neg;
            }
        } else {
            // Deterministic canonical branch: smaller enumeration index.
            let reps = Elem::residue_reps(f);
            let idx_of = |x: &Elem| {
                reps.iter()
                    .position(|r| (x - r).valuation() >= 1)
                    .expect("unit residue must match a representative")
            };
            let neg = s.negate();
            if idx_of(&neg.residue()) < idx_of(&s.residue()) {
                s = neg;
            }
        }
        let mut out = &s * &Elem::pi_pow(f, v / 2);
        out.prec = (self.prec - v / 2).min(f.capacity());
        out.val = v / 2;
        Ok(out)
    }

    /// `log(1 + z)` for `v(z) ≥ 1`, by the alternating series.
    fn log1p(z: &Elem) -> Result<Elem> {
        let f = z.field.clone();
        let vz = z.valuation();
        if vz < 1 {
            return Err(PadicError::PrecisionExhausted(
                "log1p needs a 1-unit argument".into(),
            ));
        }
        // Terms zⁿ/n have valuation ≥ n·vz − e·v_p(n); stop once the bound
        // clears the internal target.
        let target = f.n_internal;
        let mut n_max = 1;
        while n_max * vz - f.e * ceil_log_p(f.p, n_max) < target {
            n_max += 1;
        }
        let z = z.clone().settle_val();
        let mut acc = Elem::zero_prec(&f, z.prec);
        let mut zpow = Elem::one(&f);
        for n in 1..=n_max {
            zpow = &zpow * &z;
            let term = zpow.div_i64(n)?;
            acc = if n % 2 == 1 { &acc + &term } else { &acc - &term };
        }
        Ok(acc)
    }

    /// The Iwasawa branch of the p-adic logarithm: `Log(p) = 0`, `Log`
    /// multiplicative, roots of unity killed via the `(q−1)`-st power map.
    ///
    /// Concretely `Log(x) = v·Log(θ) + log1p(u^{q−1} − 1)/(q−1)` with
    /// `x = θ^v·u` (ramified) or `x = p^v·u` (unramified), and
    /// `Log(θ) = Log(θ^e/p)/e` — which vanishes for the pure extensions
    /// `θ^e = p` used by the worked examples.
    pub fn log_iwasawa(&self) -> Result<Elem> {
        let v = self.valuation();
        if v >= self.prec {
            return Err(PadicError::LogOfZero);
        }
        let f = &self.field;
        let u = (self * &Elem::pi_pow(f, -v)).settle_val();
        let q = f.q();
        let t = u.pow_i64(q - 1);
        let one = Elem::one(f);
        let lg_unit = Elem::log1p(&(&t - &one))?.div_i64(q - 1)?;
        if v == 0 {
            return Ok(lg_unit);
        }
        let lg_theta = Elem::log_theta(f)?;
        Ok(&lg_unit + &lg_theta.mul_i64(v))
    }

    /// `Log(θ)` (0 unless the extension is ramified and non-pure), cached.
    fn log_theta(field: &FieldRef) -> Result<Elem> {
        if let Some(parts) = field.log_theta.get() {
            return Ok(Elem::from_raw_parts(field, parts.clone()));
        }
        let value = match field.shape() {
            Shape::PrimeField | Shape::Unramified => Elem::zero(field),
            Shape::Eisenstein | Shape::MixedUniformizer => {
                // Log(θ) = Log(θ^e/p)/e, Teichmüller part killed by q−1.
                let u = Elem::residue_unit(field);
                let q = field.q();
                let t = u.pow_i64(q - 1);
                let one = Elem::one(field);
                Elem::log1p(&(&t - &one))?
                    .div_i64(q - 1)?
                    .div_i64(field.e)?
            }
        };
        let _ = field.log_theta.set(value.raw_parts());
        Ok(value)
    }

    /// The canonical lift of the residue Frobenius `x ↦ x^p` to `K`.
    ///
    /// Identity for `Q_p` and totally ramified extensions (residue field
    /// `F_p`); for unramified extensions θ is sent to the root of `m`
    /// congruent to `θ^p` mod p (Hensel).  Not available for the mixed
    /// shape (never needed: mixed fields only host genus-0 chart data).
    pub fn frobenius(&self) -> Result<Elem> {
        let f = &self.field;
        match f.shape() {
            Shape::PrimeField | Shape::Eisenstein => Ok(self.clone()),
            Shape::MixedUniformizer => Err(PadicError::NotInSubfield(
                "Frobenius lift not defined for the mixed extension shape".into(),
            )),
            Shape::Unramified => {
                let r = Elem::frob_gen(f)?;
                // evaluate the coefficient polynomial at r
                let denq = BigRational::from(f.p_pow(self.den));
                let mut acc = Elem::zero(f);
                let mut pw = Elem::one(f);
                for c in &self.coeffs {
                    let rc = BigRational::from(c.clone()) / &denq;
                    acc = &acc + &(&pw * &Elem::from_rational(f, &rc));
                    pw = &pw * &r;
                }
                acc.prec = acc.prec.min(self.prec);
                acc.val = acc.val.min(acc.prec);
                Ok(acc)
            }
        }
    }

    fn frob_gen(field: &FieldRef) -> Result<Elem> {
        if let Some(parts) = field.frob_theta.get() {
            return Ok(Elem::from_raw_parts(field, parts.clone()));
        }
        // Newton iteration for the root of m near θ^p; m'(θ^p) is a unit
        // because m is separable mod p.
        let mut r = Elem::gen(field).pow_i64(field.p as i64);
        let eval = |x: &Elem, poly: &[BigInt]| {
            let mut acc = Elem::zero(field);
            for c in poly.iter().rev() {
                acc = &(&acc * x) + &Elem::from_bigint(field, c.clone());
            }
            acc
        };
        let dm: Vec<BigInt> = field
            .m_coeffs()
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c * BigInt::from(i))
            .collect();
        for _ in 0..(64 - (field.n_internal.leading_zeros() as i64) + 2) {
            let fx = eval(&r, field.m_coeffs());
            if fx.valuation() >= field.n_internal {
                break;
            }
            let fpx = eval(&r, &dm);
            r = &r - &fx.div(&fpx)?;
        }
        // The iteration targets n_internal digits; don't claim more.
        let r = r.with_prec(field.n_internal);
        let _ = field.frob_theta.set(r.raw_parts());
        Ok(r)
    }
}

// ---------------------------------------------------------------------------
// digits and display
// ---------------------------------------------------------------------------

/// A π-adic digit expansion `Σ_k digit_k · π^k`, `k = start … prec−1`,
/// each digit a residue-field element given by its `f_res` coordinates in
/// the `u`-power basis (a single coordinate when the residue field is
/// `F_p`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitExpansion {
    pub start: i64,
    pub digits: Vec<Vec<i64>>,
    pub prec: i64,
}

impl Elem {
    /// Digit expansion up to the element's absolute precision, capped at
    /// `upto` digits beyond the valuation when given.
    pub fn digit_expansion(&self, upto: Option<i64>) -> DigitExpansion {
        let f = &self.field;
        let v = self.valuation();
        let end = match upto {
            Some(u) => self.prec.min(v + u),
            None => self.prec,
        };
        if v >= end {
            return DigitExpansion {
                start: end,
                digits: vec![],
                prec: self.prec,
            };
        }
        if f.is_pure() {
            return self.digits_pure(v, end);
        }
        self.digits_generic(v, end)
    }

    /// Fast path for `m = θ^e − p`: π-digit `k` is the `p`-digit
    /// `⌊k/e⌋ + den` of coefficient `c_{k mod e}`.
    fn digits_pure(&self, v: i64, end: i64) -> DigitExpansion {
        let f = &self.field;
        let p = BigInt::from(f.p);
        let mut digits = Vec::with_capacity((end - v) as usize);
        for k in v..end {
            let i = (k.rem_euclid(f.e)) as usize;
            let pos = k.div_euclid(f.e) + self.den;
            let digit = if pos < 0 {
                0
            } else {
                let q: BigInt = (&self.coeffs[i] / f.p_pow(pos)) % &p;
                i64::try_from(q).expect("digit fits in i64")
            };
            digits.push(vec![digit]);
        }
        DigitExpansion {
            start: v,
            digits,
            prec: self.prec,
        }
    }

    fn digits_generic(&self, v: i64, end: i64) -> DigitExpansion {
        let f = &self.field;
        let reps = Elem::residue_reps(f);
        let p = f.p as i64;
        let fr = f.f_res as usize;
        let mut digits = Vec::with_capacity((end - v) as usize);
        let mut y = self.clone();
        let pi = Elem::uniformizer(f);
        let mut pik = Elem::pi_pow(f, v);
        for k in v..end {
            let mut found = vec![0i64; fr];
            if y.valuation() <= k {
                let mut matched = false;
                for (idx, r) in reps.iter().enumerate() {
                    let cand = &y - &(r * &pik);
                    if cand.valuation() > k {
                        let mut rest = idx as i64;
                        for slot in found.iter_mut() {
                            *slot = rest % p;
                            rest /= p;
                        }
                        y = cand;
                        matched = true;
                        break;
                    }
                }
                assert!(matched, "digit extraction failed to match a residue");
            }
            digits.push(found);
            pik = &pik * &pi;
        }
        DigitExpansion {
            start: v,
            digits,
            prec: self.prec,
        }
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let exp = self.digit_expansion(None);
        let sym = &self.field.symbol;
        let mut wrote = false;
        for (off, dig) in exp.digits.iter().enumerate() {
            let k = exp.start + off as i64;
            let all_zero = dig.iter().all(|&d| d == 0);
            if all_zero {
                continue;
            }
            if wrote {
                write!(f, " + ")?;
            }
            let coeff = if dig.len() == 1 {
                format!("{}", dig[0])
            } else {
                format!("{dig:?}")
            };
            match k {
                0 => write!(f, "{coeff}")?,
                1 => write!(f, "{coeff}*{sym}")?,
                _ => write!(f, "{coeff}*{sym}^{k}")?,
            }
            wrote = true;
        }
        if wrote {
            write!(f, " + ")?;
        }
        write!(f, "O({sym}^{})", exp.prec)
    }
}
