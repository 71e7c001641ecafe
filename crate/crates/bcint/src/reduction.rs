//! Pole reduction on a good-reduction hyperelliptic chart `y² = g(x)`.
//!
//! An odd meromorphic 1-form `η = φ(x)·dx/2y` (φ rational with poles at
//! prescribed centers) is rewritten as
//!
//! ```text
//!   η = dF + Σ cᵢ·ωᵢ + Σ dⱼ·νⱼ,        ωᵢ = xⁱdx/2y,  νⱼ = dx/((x−βⱼ)2y),
//! ```
//!
//! by subtracting the exact forms `d(y/(x−β)^m)` and `d(x^m y)`.  The
//! subtraction order is: simple-pole coefficients `dⱼ` (residue ratios)
//! first, then non-Weierstrass centers, then Weierstrass centers, then the
//! degree reduction at infinity, and finally the `cᵢ` are read off the
//! remaining polynomial.  Each step solves an upper-triangular system by
//! back-substitution; the closed-form Cramer bounds on the solution norms
//! are *asserted* as certificates, never assumed.

use thiserror::Error;

use crate::padic::{ceil_log_p, div_ceil_i, Elem, FieldRef, PadicError};
use crate::poly::Poly;
use crate::wideopen::{ElementaryTerm, WideOpenChart};

#[derive(Debug, Clone, Error)]
pub enum ReductionError {
    /// A certified norm bound failed — indicates a precision bug upstream.
    #[error("norm certificate violated: {0}")]
    BoundViolated(String),
    /// A pole survived a step that must eliminate it.
    #[error("residual pole after reduction: {0}")]
    ResidualPole(String),
    /// The chart centers do not satisfy the unit-norm preconditions.
    #[error("invalid reduction center: {0}")]
    BadCenter(String),
    #[error(transparent)]
    Padic(#[from] PadicError),
}

pub type Result<T> = std::result::Result<T, ReductionError>;

/// A pole location for principal parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Index into the context's center list.
    Center(usize),
    Infinity,
}

/// A principal part: at a finite center, `coeffs[i]` multiplies
/// `z^{i+1}` with `z = (x−β)^{−1}`; at infinity, `coeffs[i]` multiplies
/// `xⁱ` in the polynomial part of `η/ω₀`.
#[derive(Debug, Clone)]
pub struct PrincipalPart {
    pub location: Location,
    pub coeffs: Vec<Elem>,
}

impl PrincipalPart {
    /// Degree in `z` (finite) or `x` (infinity), skipping coefficients
    /// that vanish at their precision; 0 for an empty/zero part.
    pub fn degree(&self) -> i64 {
        match self
            .coeffs
            .iter()
            .rposition(|c| !c.is_zero())
        {
            None => 0,
            Some(i) => match self.location {
                Location::Center(_) => i as i64 + 1,
                Location::Infinity => i as i64,
            },
        }
    }

    /// Certified minimum π-valuation of the coefficients (the Gauss norm).
    pub fn min_val(&self, field: &FieldRef) -> i64 {
        self.coeffs
            .iter()
            .filter(|c| !c.is_zero())
            .map(|c| c.valuation())
            .min()
            .unwrap_or(field.capacity())
    }
}

/// A pole center of the chart.
#[derive(Debug, Clone)]
pub struct PoleCenter {
    pub beta: Elem,
    /// Whether `β` is a root of `g` (then `‖g′(β)‖ = 1` is required,
    /// otherwise `‖g(β)‖ = 1`).
    pub weierstrass: bool,
}

/// The fixed data of a reduction problem: the chart curve and its
/// admissible pole centers.
#[derive(Debug, Clone)]
pub struct ReductionCtx {
    field: FieldRef,
    pub g: Poly,
    pub g_deriv: Poly,
    /// `d = deg g`.
    pub d: i64,
    pub centers: Vec<PoleCenter>,
}

impl ReductionCtx {
    pub fn new(g: &Poly, centers: Vec<PoleCenter>) -> Result<ReductionCtx> {
        let field = g.field().clone();
        let d = g
            .degree()
            .ok_or_else(|| ReductionError::BadCenter("g must be nonzero".into()))?
            as i64;
        let g_deriv = g.derivative();
        for (j, c) in centers.iter().enumerate() {
            if c.weierstrass {
                if !g.eval(&c.beta).is_zero() || g_deriv.eval(&c.beta).valuation() != 0 {
                    return Err(ReductionError::BadCenter(format!(
                        "center {j}: need g(β) = 0 and ‖g′(β)‖ = 1"
                    )));
                }
            } else if g.eval(&c.beta).valuation() != 0 {
                return Err(ReductionError::BadCenter(format!(
                    "center {j}: need ‖g(β)‖ = 1"
                )));
            }
        }
        Ok(ReductionCtx {
            field,
            g: g.clone(),
            g_deriv,
            d,
            centers,
        })
    }

    /// Reduction context of a wide-open chart (its curve and deleted-disc
    /// centers).
    pub fn from_chart(chart: &WideOpenChart) -> Result<ReductionCtx> {
        let centers = chart
            .centers
            .iter()
            .map(|c| PoleCenter {
                beta: c.beta.clone(),
                weierstrass: c.weierstrass,
            })
            .collect();
        ReductionCtx::new(&chart.g, centers)
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    /// Indices of the non-Weierstrass centers (the `ν` index set).
    pub fn nu_indices(&self) -> Vec<usize> {
        self.centers
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.weierstrass)
            .map(|(j, _)| j)
            .collect()
    }
}

/// `η = (num / ∏ (x−βⱼ)^{caps[j]}) · dx/2y` with a fixed denominator.
/// The true pole order at a center may be lower than its cap when the
/// numerator vanishes there.
#[derive(Debug, Clone)]
pub struct MeroForm {
    pub num: Poly,
    pub caps: Vec<i64>,
}

impl MeroForm {
    pub fn new(num: Poly, caps: Vec<i64>) -> MeroForm {
        MeroForm { num, caps }
    }

    pub fn from_poly(ctx: &ReductionCtx, num: Poly) -> MeroForm {
        MeroForm {
            num,
            caps: vec![0; ctx.centers.len()],
        }
    }

    /// Lift an elementary term of a chart expansion (the context must
    /// come from the same chart, so center order matches).
    pub fn from_elementary(ctx: &ReductionCtx, t: &ElementaryTerm) -> MeroForm {
        let num = Poly::constant(t.coeff.clone()).shift_up(t.x_power as usize);
        let mut caps = vec![0; ctx.centers.len()];
        for (j, &n) in t.pole_orders.iter().enumerate() {
            caps[j] = n;
        }
        MeroForm { num, caps }
    }

    /// `∏_{i≠skip} (x−βᵢ)^{caps[i]}` (the full denominator for `skip = None`).
    fn denom_without(&self, ctx: &ReductionCtx, skip: Option<usize>) -> Poly {
        let mut acc = Poly::one(ctx.field());
        for (i, c) in ctx.centers.iter().enumerate() {
            if Some(i) == skip {
                continue;
            }
            let lin = Poly::x_minus(&c.beta);
            for _ in 0..self.caps[i] {
                acc = acc.mul(&lin);
            }
        }
        acc
    }

    pub fn denominator(&self, ctx: &ReductionCtx) -> Poly {
        self.denom_without(ctx, None)
    }

    /// Value of `η/ω₀` at a point away from the poles.
    pub fn eval_phi(&self, ctx: &ReductionCtx, x: &Elem) -> Result<Elem> {
        Ok(self.num.eval(x).div(&self.denominator(ctx).eval(x))?)
    }

    /// `self + coeff·other` over the pointwise-maximum caps.
    pub fn add_scaled(&self, ctx: &ReductionCtx, other: &MeroForm, coeff: &Elem) -> MeroForm {
        let caps: Vec<i64> = self
            .caps
            .iter()
            .zip(&other.caps)
            .map(|(&a, &b)| a.max(b))
            .collect();
        let lift = |form: &MeroForm| -> Poly {
            let mut num = form.num.clone();
            for (j, c) in ctx.centers.iter().enumerate() {
                let lin = Poly::x_minus(&c.beta);
                for _ in 0..(caps[j] - form.caps[j]) {
                    num = num.mul(&lin);
                }
            }
            num
        };
        MeroForm {
            num: lift(self).add(&lift(other).scale(coeff)),
            caps,
        }
    }
}

/// Taylor coefficients of `num/den` at `β` up to order `n − 1`
/// (`den(β)` must be a unit).
fn taylor_quotient(num: &Poly, den: &Poly, beta: &Elem, n: usize) -> Result<Vec<Elem>> {
    let field = num.field();
    let one = Elem::one(field);
    let ns = num.compose_affine(&one, beta);
    let ds = den.compose_affine(&one, beta);
    let d0i = ds.coeff(0).inv()?;
    let mut a: Vec<Elem> = Vec::with_capacity(n);
    for k in 0..n {
        let mut s = ns.coeff(k);
        for (i, ai) in a.iter().enumerate() {
            s = &s - &(ai * &ds.coeff(k - i));
        }
        a.push(&s * &d0i);
    }
    Ok(a)
}

/// Principal part of `η/ω₀` at a center (in `z = (x−β)^{−1}`) or its
/// polynomial part at infinity.
pub fn principal_part(ctx: &ReductionCtx, eta: &MeroForm, loc: Location) -> Result<PrincipalPart> {
    match loc {
        Location::Center(j) => {
            let n = eta.caps[j] as usize;
            if n == 0 {
                return Ok(PrincipalPart {
                    location: loc,
                    coeffs: vec![],
                });
            }
            let e = eta.denom_without(ctx, Some(j));
            let a = taylor_quotient(&eta.num, &e, &ctx.centers[j].beta, n)?;
            // φ = (num/E)·z^n: the z^{k} coefficient (k ≥ 1) is a[n−k].
            let coeffs = (1..=n).map(|k| a[n - k].clone()).collect();
            Ok(PrincipalPart {
                location: loc,
                coeffs,
            })
        }
        Location::Infinity => {
            let (q, _) = eta.num.divmod(&eta.denominator(ctx))?;
            Ok(PrincipalPart {
                location: loc,
                coeffs: q.coeffs().to_vec(),
            })
        }
    }
}

/// Shared iterative pole elimination at a finite center.  The principal
/// part is computed once and updated in place using the closed formula
/// `PP(μ_{β,m}) = Σ_{k} −(m+k)/(m−k)!·g^{(m−k)}(β)·z^{k+1}`; all exact
/// numerator subtractions are accumulated and applied with a single
/// multiplication by the shared denominator factor.
fn reduce_finite_center(
    ctx: &ReductionCtx,
    eta: &MeroForm,
    j: usize,
    weier: bool,
) -> Result<(Vec<Elem>, MeroForm)> {
    let field = ctx.field();
    let beta = &ctx.centers[j].beta;
    let pp0 = principal_part(ctx, eta, Location::Center(j))?;
    let deg0 = pp0.degree();
    let lowest = if weier { 1 } else { 2 };
    if deg0 < lowest {
        return Ok((vec![], eta.clone()));
    }
    let q_len = if weier { deg0 } else { deg0 - 1 };
    let pp_val = pp0.min_val(field);
    // g^{(r)}(β) for r = 0..=d.
    let mut gd = Vec::with_capacity(ctx.d as usize + 1);
    let mut gg = ctx.g.clone();
    for _ in 0..=ctx.d {
        gd.push(gg.eval(beta));
        gg = gg.derivative();
    }
    let lead = if weier { gd[1].clone() } else { gd[0].clone() };
    let lin = Poly::x_minus(beta);
    let mut pp = pp0.coeffs.clone();
    let mut q = vec![Elem::zero(field); q_len as usize];
    let mut sub = Poly::zero(field);
    let mut pw = Poly::one(field);
    let mut pw_exp = 0i64;
    for ord in (lowest..=deg0).rev() {
        let m = if weier { ord } else { ord - 1 };
        let u = pp[ord as usize - 1].clone();
        if u.is_zero() {
            continue;
        }
        let factor = if weier { 1 - 2 * m } else { -2 * m };
        let a = u.div(&lead.mul_i64(factor))?;
        // Update the principal part in place.
        for k in (m - ctx.d).max(0)..=m {
            if k as usize >= pp.len() {
                // z^{k+1} exceeds the cap: the coefficient −2m·g(β)
                // vanishes at a Weierstrass center.
                continue;
            }
            let term = gd[(m - k) as usize]
                .mul_i64(-(m + k))
                .div_i64(factorial_i64(m - k))?;
            pp[k as usize] = &pp[k as usize] - &(&a * &term);
        }
        // Accumulate the numerator of a·μ_{β,m} over the fixed caps.
        let mut core = lin
            .mul(&ctx.g_deriv)
            .sub(&ctx.g.scale(&Elem::from_i64(field, 2 * m)));
        let mut want_exp = eta.caps[j] - m - 1;
        if want_exp < 0 {
            // Only legal at a Weierstrass center, where (x−β) divides
            // the displayed numerator exactly.
            let (qq, r) = core.divmod(&lin)?;
            if !r.is_zero() {
                return Err(ReductionError::ResidualPole(
                    "exact form has a deeper pole than the denominator cap".into(),
                ));
            }
            core = qq;
            want_exp += 1;
            if want_exp < 0 {
                return Err(ReductionError::ResidualPole(
                    "cap too small for the requested exact form".into(),
                ));
            }
        }
        while pw_exp < want_exp {
            pw = pw.mul(&lin);
            pw_exp += 1;
        }
        sub = sub.add(&core.mul(&pw).scale(&a));
        let qi = if weier { ord - 1 } else { ord - 2 };
        q[qi as usize] = a;
    }
    let mut cur = eta.clone();
    cur.num = cur.num.sub(&sub.mul(&eta.denom_without(ctx, Some(j))));
    // Certificates: ‖q‖ ≤ p^{m/(p−1)}·‖PP‖ (non-Weierstrass) and
    // ‖q‖ ≤ m·p^{1+m/(p−1)}·‖PP‖ (Weierstrass).
    let m_bound = q_len;
    let mut bound = pp_val - div_ceil_i(field.e * m_bound, field.p as i64 - 1);
    if weier {
        bound -= field.e + field.e * ceil_log_p(field.p, m_bound.max(1));
    }
    for a in &q {
        if !a.is_zero() && a.valuation() < bound {
            return Err(ReductionError::BoundViolated(format!(
                "q coefficient valuation {} < certified {bound} at center {j}",
                a.valuation()
            )));
        }
    }
    // Independent residual check: recompute the principal part.
    let left = principal_part(ctx, &cur, Location::Center(j))?;
    if left.degree() >= lowest {
        return Err(ReductionError::ResidualPole(format!(
            "pole of z-degree {} survived reduction at center {j}",
            left.degree()
        )));
    }
    Ok((q, cur))
}

fn factorial_i64(n: i64) -> i64 {
    (1..=n).product::<i64>().max(1)
}

/// Pole reduction at a non-Weierstrass center: returns the coefficients
/// `q` (index `i` ↔ `y/(x−β)^{i+1}`) and `η′ = η − d(q((x−β)^{−1})y)`,
/// which has at worst a simple pole above `β`.
pub fn reduce_nonweierstrass(
    ctx: &ReductionCtx,
    eta: &MeroForm,
    j: usize,
) -> Result<(Vec<Elem>, MeroForm)> {
    if ctx.centers[j].weierstrass {
        return Err(ReductionError::BadCenter(
            "non-Weierstrass reduction at a Weierstrass center".into(),
        ));
    }
    reduce_finite_center(ctx, eta, j, false)
}

/// Pole reduction at a Weierstrass center: returns `q` (index `i` ↔
/// `y/(x−β)^{i+1}`) and `η′ = η − d(q((x−β)^{−1})y)`, regular above `β`.
pub fn reduce_weierstrass(
    ctx: &ReductionCtx,
    eta: &MeroForm,
    j: usize,
) -> Result<(Vec<Elem>, MeroForm)> {
    if !ctx.centers[j].weierstrass {
        return Err(ReductionError::BadCenter(
            "Weierstrass reduction at a non-Weierstrass center".into(),
        ));
    }
    reduce_finite_center(ctx, eta, j, true)
}

/// Degree reduction at infinity: returns `q` (index `i` ↔ `xⁱy`) and
/// `η′ = η − d(q(x)y)` with `deg(η′/ω₀) ≤ d − 2`.
pub fn reduce_infinity(ctx: &ReductionCtx, eta: &MeroForm) -> Result<(Vec<Elem>, MeroForm)> {
    let field = ctx.field();
    let cap_deg: i64 = eta.caps.iter().sum();
    let pp0 = principal_part(ctx, eta, Location::Infinity)?;
    let m = pp0.degree() - (ctx.d - 2);
    if pp0.coeffs.iter().all(|c| c.is_zero()) || m <= 0 {
        return Ok((vec![], eta.clone()));
    }
    // ‖U(PP)‖: the coefficients of degree ≥ d − 1.
    let u_val = pp0
        .coeffs
        .iter()
        .skip((ctx.d - 1) as usize)
        .filter(|c| !c.is_zero())
        .map(|c| c.valuation())
        .min()
        .unwrap_or(field.capacity());
    let mut cur = eta.clone();
    let mut q = vec![Elem::zero(field); m as usize];
    let denom = cur.denominator(ctx);
    loop {
        let dn = match cur.num.degree_apparent() {
            None => break,
            Some(d) => d as i64,
        };
        let lead_deg = dn - cap_deg;
        if lead_deg <= ctx.d - 2 {
            break;
        }
        let jj = lead_deg - (ctx.d - 1);
        let u = cur.num.coeff(dn as usize);
        let w = Elem::from_i64(field, ctx.d + 2 * jj);
        let a = u.div(&w)?;
        let exact = ctx
            .g_deriv
            .shift_up(jj as usize)
            .add(&ctx.g.scale(&Elem::from_i64(field, 2 * jj)).shift_up((jj - 1).max(0) as usize));
        cur.num = cur.num.sub(&exact.mul(&denom).scale(&a));
        q[jj as usize] = a;
    }
    // Certificate ‖q‖ ≤ d(d+m)·p^{2+m/(p−1)}·‖U(PP)‖.
    let bound = u_val
        - 2 * field.e
        - div_ceil_i(field.e * m, field.p as i64 - 1)
        - field.e * ceil_log_p(field.p, ctx.d * (ctx.d + m));
    for a in &q {
        if !a.is_zero() && a.valuation() < bound {
            return Err(ReductionError::BoundViolated(format!(
                "infinity q coefficient valuation {} < certified {bound}",
                a.valuation()
            )));
        }
    }
    Ok((q, cur))
}

/// A full decomposition `η = dF + Σ cᵢωᵢ + Σ dⱼνⱼ` with
/// `F = Σⱼ Σᵢ f_finite[j][i]·y/(x−βⱼ)^{i+1} + Σᵢ f_inf[i]·xⁱy`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub f_finite: Vec<Vec<Elem>>,
    pub f_inf: Vec<Elem>,
    /// `c₀ … c_{d−2}`.
    pub c: Vec<Elem>,
    /// One entry per context center (zero at Weierstrass centers).
    pub d_res: Vec<Elem>,
}

/// Taylor coefficients of `(1 + w)^{−1/2}` composed with a power series
/// `w` (zero constant term), to order `n − 1`.
fn inv_sqrt_taylor(field: &FieldRef, w: &[Elem], n: usize) -> Vec<Elem> {
    let mut acc = vec![Elem::zero(field); n];
    if n == 0 {
        return acc;
    }
    acc[0] = Elem::one(field);
    let mut wpow = vec![Elem::zero(field); n];
    wpow[0] = Elem::one(field);
    let mut coef = Elem::one(field);
    for k in 1..(n as i64) {
        // wpow ← wpow·w (truncated).
        let mut nx = vec![Elem::zero(field); n];
        for (i, a) in wpow.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (jj, b) in w.iter().enumerate() {
                if i + jj < n {
                    nx[i + jj] = &nx[i + jj] + &(a * b);
                }
            }
        }
        wpow = nx;
        coef = &coef * &Elem::from_ratio_i64(field, -(2 * k - 1), 2 * k);
        for i in 0..n {
            acc[i] = &acc[i] + &(&wpow[i] * &coef);
        }
    }
    acc
}

/// `dⱼ = Res_α(η)/Res_α(νⱼ)` at a non-Weierstrass center, computed from
/// the principal part and the local expansion of `(g(x)/g(β))^{−1/2}`
/// (the square-root sign cancels in the ratio).
fn residue_ratio(ctx: &ReductionCtx, eta: &MeroForm, j: usize) -> Result<Elem> {
    let field = ctx.field();
    let n = eta.caps[j] as usize;
    if n == 0 {
        return Ok(Elem::zero(field));
    }
    let pp = principal_part(ctx, eta, Location::Center(j))?;
    let beta = &ctx.centers[j].beta;
    let g_beta_inv = ctx.g.eval(beta).inv()?;
    let gs = ctx.g.compose_affine(&Elem::one(field), beta).scale(&g_beta_inv);
    // w = g(β + t)/g(β) − 1.
    let mut w: Vec<Elem> = gs.coeffs().to_vec();
    w.resize(n.max(1), Elem::zero(field));
    w[0] = &w[0] - &Elem::one(field);
    let s = inv_sqrt_taylor(field, &w, n);
    let mut acc = Elem::zero(field);
    for (k, c) in pp.coeffs.iter().enumerate() {
        // z^{k+1}·(Σ sᵢtⁱ) contributes s_k to the t^{−1} coefficient.
        acc = &acc + &(c * &s[k]);
    }
    Ok(acc)
}

/// Decompose `η = dF + Σ cᵢωᵢ + Σ dⱼνⱼ`.  Steps, in order: residue
/// ratios `dⱼ`, non-Weierstrass reductions, Weierstrass reductions,
/// infinity reduction, then the `cᵢ` are read off.
pub fn cohomology_class(ctx: &ReductionCtx, eta: &MeroForm) -> Result<Decomposition> {
    let field = ctx.field();
    let mut d_res = vec![Elem::zero(field); ctx.centers.len()];
    for j in 0..ctx.centers.len() {
        if !ctx.centers[j].weierstrass {
            d_res[j] = residue_ratio(ctx, eta, j)?;
        }
    }
    let mut cur = eta.clone();
    let mut f_finite = vec![vec![]; ctx.centers.len()];
    for j in 0..ctx.centers.len() {
        if !ctx.centers[j].weierstrass && cur.caps[j] > 0 {
            let (q, nx) = reduce_nonweierstrass(ctx, &cur, j)?;
            f_finite[j] = q;
            cur = nx;
        }
    }
    for j in 0..ctx.centers.len() {
        if ctx.centers[j].weierstrass && cur.caps[j] > 0 {
            let (q, nx) = reduce_weierstrass(ctx, &cur, j)?;
            f_finite[j] = q;
            cur = nx;
        }
    }
    let (f_inf, mut cur) = reduce_infinity(ctx, &cur)?;

    // Certificate: the surviving simple-pole coefficient must equal the
    // residue ratio computed up front (the reductions are residue-free).
    for j in 0..ctx.centers.len() {
        if ctx.centers[j].weierstrass || cur.caps[j] == 0 {
            continue;
        }
        let pp = principal_part(ctx, &cur, Location::Center(j))?;
        let got = pp.coeffs.first().cloned().unwrap_or_else(|| Elem::zero(field));
        let diff = &got - &d_res[j];
        if !diff.is_zero() && diff.valuation() < field.n_work {
            return Err(ReductionError::BoundViolated(format!(
                "simple-pole coefficient disagrees with the residue ratio at center {j}"
            )));
        }
    }

    // Subtract Σ dⱼνⱼ and read off the polynomial c₀ + c₁x + …
    for j in 0..ctx.centers.len() {
        if d_res[j].is_zero() || cur.caps[j] == 0 {
            continue;
        }
        let mut nu = cur.denom_without(ctx, Some(j));
        let lin = Poly::x_minus(&ctx.centers[j].beta);
        for _ in 0..(cur.caps[j] - 1) {
            nu = nu.mul(&lin);
        }
        cur.num = cur.num.sub(&nu.scale(&d_res[j]));
    }
    let (quot, rem) = cur.num.divmod(&cur.denominator(ctx))?;
    for (i, r) in rem.coeffs().iter().enumerate() {
        if !r.is_zero() {
            return Err(ReductionError::ResidualPole(format!(
                "nonzero remainder coefficient at degree {i} after full reduction: {r}"
            )));
        }
    }
    if let Some(dq) = quot.degree_apparent() {
        if dq as i64 > ctx.d - 2 {
            return Err(ReductionError::ResidualPole(format!(
                "polynomial part has degree {dq} > d − 2"
            )));
        }
    }
    let mut c = vec![Elem::zero(field); (ctx.d - 1).max(0) as usize];
    for (i, ci) in c.iter_mut().enumerate() {
        *ci = quot.coeff(i);
    }
    Ok(Decomposition {
        f_finite,
        f_inf,
        c,
        d_res,
    })
}

/// Independent exactness check: assemble `η − dF − Σ cᵢωᵢ − Σ dⱼνⱼ` over
/// the common denominator `∏(x−βⱼ)^{capⱼ+1}` from scratch and return its
/// numerator (every coefficient must vanish at working precision).
pub fn decomposition_residual(
    ctx: &ReductionCtx,
    eta: &MeroForm,
    dec: &Decomposition,
) -> Result<Poly> {
    let field = ctx.field();
    let caps: Vec<i64> = eta.caps.iter().map(|&n| n + 1).collect();
    let lin: Vec<Poly> = ctx.centers.iter().map(|c| Poly::x_minus(&c.beta)).collect();
    let pow = |j: usize, k: i64| -> Poly {
        let mut acc = Poly::one(field);
        for _ in 0..k {
            acc = acc.mul(&lin[j]);
        }
        acc
    };
    let denom_without = |skip: Option<usize>| -> Poly {
        let mut acc = Poly::one(field);
        for j in 0..ctx.centers.len() {
            if Some(j) == skip {
                continue;
            }
            acc = acc.mul(&pow(j, caps[j]));
        }
        acc
    };
    let big_d = denom_without(None);
    // η itself.
    let mut total = eta.num.clone();
    for (j, &cap) in caps.iter().enumerate() {
        total = total.mul(&pow(j, cap - eta.caps[j]));
    }
    // dF, finite part: μ_{β,m} has numerator ((x−β)g′ − 2mg)(x−β)^{cap−m−1}·E.
    for (j, qs) in dec.f_finite.iter().enumerate() {
        for (idx, a) in qs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let m = idx as i64 + 1;
            let core = lin[j]
                .mul(&ctx.g_deriv)
                .sub(&ctx.g.scale(&Elem::from_i64(field, 2 * m)));
            let term = core
                .mul(&pow(j, caps[j] - m - 1))
                .mul(&denom_without(Some(j)));
            total = total.sub(&term.scale(a));
        }
    }
    // dF, infinity part: d(x^m y) has numerator x^m g′ + 2m x^{m−1} g.
    for (m, a) in dec.f_inf.iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        let mut core = ctx.g_deriv.shift_up(m);
        if m > 0 {
            core = core.add(&ctx.g.scale(&Elem::from_i64(field, 2 * m as i64)).shift_up(m - 1));
        }
        total = total.sub(&core.mul(&big_d).scale(a));
    }
    // Σ cᵢωᵢ.
    for (i, ci) in dec.c.iter().enumerate() {
        if ci.is_zero() {
            continue;
        }
        total = total.sub(&big_d.shift_up(i).scale(ci));
    }
    // Σ dⱼνⱼ.
    for (j, dj) in dec.d_res.iter().enumerate() {
        if dj.is_zero() {
            continue;
        }
        let term = pow(j, caps[j] - 1).mul(&denom_without(Some(j)));
        total = total.sub(&term.scale(dj));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::Field;

    fn q7(n: i64) -> FieldRef {
        Field::qp(7, n).unwrap()
    }

    /// The genus-1 chart g = (x−1)(x−2)(x−3) with a non-Weierstrass
    /// center at 0 and (optionally) a Weierstrass center at 1.
    fn ctx_g123(field: &FieldRef, with_w: bool) -> ReductionCtx {
        let g = Poly::from_roots(
            field,
            &[1, 2, 3]
                .iter()
                .map(|&n| Elem::from_i64(field, n))
                .collect::<Vec<_>>(),
        );
        let mut centers = vec![PoleCenter {
            beta: Elem::zero(field),
            weierstrass: false,
        }];
        if with_w {
            centers.push(PoleCenter {
                beta: Elem::from_i64(field, 1),
                weierstrass: true,
            });
        }
        ReductionCtx::new(&g, centers).unwrap()
    }

    fn factorial(n: i64) -> i64 {
        (1..=n).product::<i64>().max(1)
    }

    /// PP(μ_{β,m}) against the closed form Σ −(m+k)/(m−k)!·g^{(m−k)}(β)·z^{k+1}.
    fn check_mu_pp(ctx: &ReductionCtx, j: usize, m: i64) {
        let field = ctx.field();
        let beta = &ctx.centers[j].beta;
        let mut caps = vec![0; ctx.centers.len()];
        caps[j] = m + 1;
        let core = Poly::x_minus(beta)
            .mul(&ctx.g_deriv)
            .sub(&ctx.g.scale(&Elem::from_i64(field, 2 * m)));
        let mut num = core;
        for (i, &cap) in caps.iter().enumerate() {
            if i != j {
                for _ in 0..cap {
                    num = num.mul(&Poly::x_minus(&ctx.centers[i].beta));
                }
            }
        }
        let mu = MeroForm::new(num, caps);
        let pp = principal_part(ctx, &mu, Location::Center(j)).unwrap();
        let mut derivs = vec![ctx.g.clone()];
        for _ in 0..m {
            derivs.push(derivs.last().unwrap().derivative());
        }
        for k in 0..=m {
            let want = derivs[(m - k) as usize]
                .eval(beta)
                .mul_i64(-(m + k))
                .div_i64(factorial(m - k))
                .unwrap();
            let got = pp.coeffs[k as usize].clone();
            let diff = &got - &want;
            assert!(
                diff.is_zero() || diff.valuation() >= 10,
                "z^{} coefficient {got} vs closed form {want}",
                k + 1
            );
        }
    }

    #[test]
    fn principal_part_of_exact_forms_matches_closed_formula() {
        let f = q7(14);
        let ctx = ctx_g123(&f, true);
        check_mu_pp(&ctx, 0, 3); // non-Weierstrass center
        check_mu_pp(&ctx, 1, 3); // Weierstrass center
        // Leading symbols: −2m·g(β)·z^{m+1} and (1−2m)·g′(β)·z^m.
        let m = 3i64;
        let pp_nw = {
            let mut caps = vec![m + 1, 0];
            let core = Poly::x_minus(&Elem::zero(&f))
                .mul(&ctx.g_deriv)
                .sub(&ctx.g.scale(&Elem::from_i64(&f, 2 * m)));
            let mu = MeroForm::new(core, std::mem::take(&mut caps));
            principal_part(&ctx, &mu, Location::Center(0)).unwrap()
        };
        let want = ctx.g.eval(&Elem::zero(&f)).mul_i64(-2 * m);
        assert!((&pp_nw.coeffs[m as usize] - &want).is_zero());
        assert_eq!(pp_nw.degree(), m + 1);
    }

    #[test]
    fn principal_part_of_holomorphic_form_is_zero() {
        let f = q7(12);
        let ctx = ctx_g123(&f, false);
        // ω₁ = x·dx/2y, written over the cap (x−0)²: num = x·x².
        let eta = MeroForm::new(Poly::from_i64s(&f, &[0, 0, 0, 1]), vec![2]);
        let pp = principal_part(&ctx, &eta, Location::Center(0)).unwrap();
        assert!(pp.coeffs.iter().all(|c| c.is_zero()));
        assert_eq!(pp.degree(), 0);
    }

    #[test]
    fn already_simple_pole_needs_no_reduction() {
        let f = q7(12);
        let ctx = ctx_g123(&f, false);
        let eta = MeroForm::new(Poly::one(&f), vec![1]);
        let (q, out) = reduce_nonweierstrass(&ctx, &eta, 0).unwrap();
        assert!(q.is_empty());
        assert!(out.num.coeff(0).eq_mod(&Elem::one(&f), 10));
    }

    #[test]
    fn reducing_an_exact_form_recovers_the_monomial() {
        // η = μ_{β,m} must give q = t^m exactly and a regular remainder.
        let f = q7(14);
        let ctx = ctx_g123(&f, false);
        let m = 3i64;
        let core = Poly::x_minus(&Elem::zero(&f))
            .mul(&ctx.g_deriv)
            .sub(&ctx.g.scale(&Elem::from_i64(&f, 2 * m)));
        let eta = MeroForm::new(core, vec![m + 1]);
        let (q, out) = reduce_nonweierstrass(&ctx, &eta, 0).unwrap();
        assert_eq!(q.len(), m as usize);
        for (i, a) in q.iter().enumerate() {
            let want = if i as i64 == m - 1 {
                Elem::one(&f)
            } else {
                Elem::zero(&f)
            };
            let diff = a - &want;
            assert!(diff.is_zero() || diff.valuation() >= 10, "q[{i}] = {a}");
        }
        // η′ must be zero: μ had no simple pole or regular part.
        let pp = principal_part(&ctx, &out, Location::Center(0)).unwrap();
        assert!(pp.coeffs.iter().all(|c| c.is_zero()));
        let ppi = principal_part(&ctx, &out, Location::Infinity).unwrap();
        assert!(ppi.coeffs.iter().all(|c| c.is_zero()));
    }

    /// Dense linear solve (Gaussian elimination, pivot by minimal
    /// valuation) — the independent oracle for the triangular solvers.
    fn dense_solve(mut m: Vec<Vec<Elem>>, mut rhs: Vec<Elem>) -> Vec<Elem> {
        let n = rhs.len();
        for col in 0..n {
            let piv = (col..n)
                .filter(|&r| !m[r][col].is_zero())
                .min_by_key(|&r| m[r][col].valuation())
                .expect("singular system");
            m.swap(col, piv);
            rhs.swap(col, piv);
            let inv = m[col][col].inv().unwrap();
            for r in 0..n {
                if r == col || m[r][col].is_zero() {
                    continue;
                }
                let factor = &m[r][col] * &inv;
                for cc in 0..n {
                    let t = &factor * &m[col][cc];
                    m[r][cc] = &m[r][cc] - &t;
                }
                let t = &factor * &rhs[col];
                rhs[r] = &rhs[r] - &t;
            }
        }
        (0..n)
            .map(|i| &rhs[i] * &m[i][i].inv().unwrap())
            .collect()
    }

    #[test]
    fn nonweierstrass_reduction_matches_dense_solve() {
        // η = (x⁵+3)/(x−0)⁴·dx/2y: reduce at the non-Weierstrass 0 and
        // compare q against an independent dense solve of L(V) = T(PP).
        let f = q7(16);
        let ctx = ctx_g123(&f, false);
        let eta = MeroForm::new(Poly::from_i64s(&f, &[3, 0, 0, 0, 0, 1]), vec![4]);
        let pp_eta = principal_part(&ctx, &eta, Location::Center(0)).unwrap();
        let m = (pp_eta.degree() - 1) as usize;
        assert!(m >= 1);
        let (q, out) = reduce_nonweierstrass(&ctx, &eta, 0).unwrap();
        // Columns: T(PP(μ_{β,i})) in the basis z²..z^{m+1}.
        let mut mat = vec![vec![Elem::zero(&f); m]; m];
        for i in 1..=m as i64 {
            let core = Poly::x_minus(&Elem::zero(&f))
                .mul(&ctx.g_deriv)
                .sub(&ctx.g.scale(&Elem::from_i64(&f, 2 * i)));
            let mu = MeroForm::new(core, vec![i + 1]);
            let pp = principal_part(&ctx, &mu, Location::Center(0)).unwrap();
            for r in 0..m {
                // Row r ↔ z^{r+2}.
                if r + 1 < pp.coeffs.len() {
                    mat[r][i as usize - 1] = pp.coeffs[r + 1].clone();
                }
            }
        }
        let rhs: Vec<Elem> = (0..m)
            .map(|r| {
                pp_eta
                    .coeffs
                    .get(r + 1)
                    .cloned()
                    .unwrap_or_else(|| Elem::zero(&f))
            })
            .collect();
        let sol = dense_solve(mat, rhs);
        for i in 0..m {
            let diff = &q[i] - &sol[i];
            assert!(
                diff.is_zero() || diff.valuation() >= 12,
                "q[{i}] = {} vs dense {}",
                q[i],
                sol[i]
            );
        }
        let left = principal_part(&ctx, &out, Location::Center(0)).unwrap();
        assert!(left.degree() <= 1, "pole not simple after reduction");
    }

    #[test]
    fn weierstrass_reduction_removes_the_pole_completely() {
        // η = x⁴/(x−1)³·dx/2y at the Weierstrass center 1.
        let f = q7(16);
        let ctx = ctx_g123(&f, true);
        let mut num = Poly::from_i64s(&f, &[0, 0, 0, 0, 1]);
        // caps = [0 at center 0, 3 at center 1].
        num = num.clone();
        let eta = MeroForm::new(num, vec![0, 3]);
        let pp0 = principal_part(&ctx, &eta, Location::Center(1)).unwrap();
        assert!(pp0.degree() >= 1);
        let (q, out) = reduce_weierstrass(&ctx, &eta, 1).unwrap();
        assert!(!q.is_empty());
        let left = principal_part(&ctx, &out, Location::Center(1)).unwrap();
        assert!(left.coeffs.iter().all(|c| c.is_zero()));
        // Independent dense-solve oracle with the Weierstrass diagonal.
        let m = pp0.degree() as usize;
        let mut mat = vec![vec![Elem::zero(&f); m]; m];
        for i in 1..=m as i64 {
            let core = Poly::x_minus(&Elem::from_i64(&f, 1))
                .mul(&ctx.g_deriv)
                .sub(&ctx.g.scale(&Elem::from_i64(&f, 2 * i)));
            let mu = MeroForm::new(core, vec![0, i + 1]);
            let pp = principal_part(&ctx, &mu, Location::Center(1)).unwrap();
            for r in 0..m {
                if r < pp.coeffs.len() {
                    mat[r][i as usize - 1] = pp.coeffs[r].clone();
                }
            }
        }
        let rhs: Vec<Elem> = (0..m)
            .map(|r| {
                pp0.coeffs
                    .get(r)
                    .cloned()
                    .unwrap_or_else(|| Elem::zero(&f))
            })
            .collect();
        let sol = dense_solve(mat, rhs);
        for i in 0..m {
            let diff = &q[i] - &sol[i];
            assert!(diff.is_zero() || diff.valuation() >= 12);
        }
    }

    #[test]
    fn infinity_reduction_trivial_cases() {
        let f = q7(14);
        let ctx = ctx_g123(&f, false);
        // Degree ≤ d − 2 = 1: nothing to do.
        let eta = MeroForm::from_poly(&ctx, Poly::from_i64s(&f, &[2, 5]));
        let (q, _) = reduce_infinity(&ctx, &eta).unwrap();
        assert!(q.is_empty());
        // η = d(x²y): reduces to exactly zero with q = (0, 0, 1).
        let m = 2usize;
        let core = ctx
            .g_deriv
            .shift_up(m)
            .add(&ctx.g.scale(&Elem::from_i64(&f, 2 * m as i64)).shift_up(m - 1));
        let eta = MeroForm::from_poly(&ctx, core);
        let (q, out) = reduce_infinity(&ctx, &eta).unwrap();
        assert_eq!(q.len(), m + 1);
        assert!(q[m].eq_mod(&Elem::one(&f), 10));
        assert!(q[0].is_zero() && q[1].is_zero());
        assert!(out.num.coeffs().iter().all(|c| c.is_zero()));
    }

    #[test]
    fn infinity_reduction_random_degree_oracle() {
        // A degree-7 numerator over d = 3: after reduction the degree is
        // ≤ 1 and the full residual η − d(q(x)y) − (c-part) re-assembles
        // to zero.
        let f = q7(16);
        let ctx = ctx_g123(&f, false);
        let eta = MeroForm::from_poly(&ctx, Poly::from_i64s(&f, &[3, 1, 4, 1, 5, 9, 2, 6]));
        let (q, out) = reduce_infinity(&ctx, &eta).unwrap();
        assert!(out.num.degree_apparent().unwrap() <= 1);
        let dec = Decomposition {
            f_finite: vec![vec![]],
            f_inf: q,
            c: vec![out.num.coeff(0), out.num.coeff(1)],
            d_res: vec![Elem::zero(&f)],
        };
        let res = decomposition_residual(&ctx, &eta, &dec).unwrap();
        for r in res.coeffs() {
            assert!(r.is_zero(), "residual coefficient {r}");
        }
    }

    #[test]
    fn cohomology_class_of_basis_forms_is_trivial() {
        let f = q7(14);
        let ctx = ctx_g123(&f, false);
        // η = ω₁.
        let dec = cohomology_class(&ctx, &MeroForm::from_poly(&ctx, Poly::from_i64s(&f, &[0, 1])))
            .unwrap();
        assert!(dec.c[0].is_zero());
        assert!(dec.c[1].eq_mod(&Elem::one(&f), 10));
        assert!(dec.d_res[0].is_zero());
        assert!(dec.f_finite[0].is_empty() && dec.f_inf.is_empty());
        // η = ν₁ = dx/((x−0)·2y).
        let dec = cohomology_class(&ctx, &MeroForm::new(Poly::one(&f), vec![1])).unwrap();
        assert!(dec.d_res[0].eq_mod(&Elem::one(&f), 10));
        assert!(dec.c.iter().all(|c| c.is_zero()));
        assert!(dec.f_finite[0].is_empty() && dec.f_inf.is_empty());
    }

    #[test]
    fn full_decomposition_re_expands_to_zero() {
        // η = (x³+2)/(x−0)²·dx/2y on the chart g = (x−1)(x−2)(x−3):
        // verify the decomposition by independent re-assembly (all poles
        // and ∞ at once).
        let f = q7(16);
        let ctx = ctx_g123(&f, false);
        let eta = MeroForm::new(Poly::from_i64s(&f, &[2, 0, 0, 1]), vec![2]);
        let dec = cohomology_class(&ctx, &eta).unwrap();
        let res = decomposition_residual(&ctx, &eta, &dec).unwrap();
        for r in res.coeffs() {
            assert!(r.is_zero(), "residual coefficient {r}");
        }
        // Residue ratio must also match the surviving simple pole by the
        // internal certificate; additionally check it is nonzero here.
        assert!(!dec.d_res[0].is_zero());
    }

    #[test]
    fn full_decomposition_with_weierstrass_and_two_centers() {
        let f = q7(18);
        let ctx = ctx_g123(&f, true);
        // η = (x⁵+5)/((x−0)³(x−1)²)·dx/2y.
        let eta = MeroForm::new(Poly::from_i64s(&f, &[5, 0, 0, 0, 0, 1]), vec![3, 2]);
        let dec = cohomology_class(&ctx, &eta).unwrap();
        let res = decomposition_residual(&ctx, &eta, &dec).unwrap();
        for r in res.coeffs() {
            assert!(r.is_zero(), "residual coefficient {r}");
        }
        // Weierstrass center gets no ν-term.
        assert!(dec.d_res[1].is_zero());
    }

    #[test]
    fn reductions_at_distinct_centers_commute() {
        let f = q7(18);
        let g = Poly::from_roots(
            &f,
            &[2, 3, 4]
                .iter()
                .map(|&n| Elem::from_i64(&f, n))
                .collect::<Vec<_>>(),
        );
        let ctx = ReductionCtx::new(
            &g,
            vec![
                PoleCenter {
                    beta: Elem::zero(&f),
                    weierstrass: false,
                },
                PoleCenter {
                    beta: Elem::from_i64(&f, 1),
                    weierstrass: false,
                },
            ],
        )
        .unwrap();
        let eta = MeroForm::new(Poly::from_i64s(&f, &[1, 0, 0, 0, 0, 0, 1]), vec![3, 3]);
        let (_, a) = reduce_nonweierstrass(&ctx, &eta, 0).unwrap();
        let (_, ab) = reduce_nonweierstrass(&ctx, &a, 1).unwrap();
        let (_, b) = reduce_nonweierstrass(&ctx, &eta, 1).unwrap();
        let (_, ba) = reduce_nonweierstrass(&ctx, &b, 0).unwrap();
        let diff = ab.num.sub(&ba.num);
        for c in diff.coeffs() {
            assert!(c.is_zero(), "order of reduction changed the result: {c}");
        }
    }

    #[test]
    fn elementary_terms_have_unit_bounded_principal_parts() {
        // Gauss-norm invariant: PP of an integral elementary term is
        // integral.
        let f = q7(14);
        let ctx = ctx_g123(&f, true);
        let eta = MeroForm::new(Poly::from_i64s(&f, &[0, 0, 0, 0, 1]), vec![2, 2]);
        for loc in [Location::Center(0), Location::Center(1), Location::Infinity] {
            let pp = principal_part(&ctx, &eta, loc).unwrap();
            for c in &pp.coeffs {
                assert!(c.is_zero() || c.valuation() >= 0, "non-integral PP {c}");
            }
        }
    }
}
