//! Coleman integration on a single good-reduction chart.
//!
//! A chart carries a monic squarefree model `y² = g(x)` whose roots lie in
//! distinct residue discs, plus a list of deleted non-Weierstrass residue
//! discs (centers `β_j`) at which third-kind poles are allowed.  This module
//! integrates odd meromorphic 1-forms between rigid points of the chart:
//!
//! * *tiny* integrals inside a single residue disc, by power-series
//!   interpolation in `x` (ordinary discs) or in `y` (Weierstrass discs);
//! * second-kind integrals between distinct discs, by lifting Frobenius
//!   `x ↦ x^p`, expressing `φ*ω_i` in the cohomology basis with the pole
//!   reduction of [`crate::reduction`], and solving `(M − 1)·X = rhs`;
//! * Weierstrass-endpoint shortcuts `∫_{S'}^R ω = ½∫_{w(R)}^R ω` for odd
//!   forms and Weierstrass points `S'`;
//! * third-kind integrals `∫ ν_j`, `ν_j = dx/((x−β_j)·2y)`, through the
//!   enlarged Frobenius system `φ*ν_j = dh_j + Σ N_{ji} ω_i + p·ν_j`;
//! * the cup product on de Rham classes via residues at infinity, and the
//!   map Ψ projecting a third-kind class to the second-kind span;
//! * closed logarithmic formulas when `deg g ≤ 2` (genus-0 charts), with a
//!   norm-one trick that evaluates `Log((A+B√δ)/(A−B√δ))/√δ` inside the
//!   base field even when `δ` is not a square;
//! * a change of model `x ↦ lc/(x−r)` turning an even-degree `g` of degree
//!   ≥ 4 into an odd-degree one, so the Frobenius machinery applies.

use crate::padic::{ceil_log_p, div_ceil_i, Elem, FieldRef, PadicError};
use crate::poly::Poly;
use crate::reduction::{
    cohomology_class, Decomposition, MeroForm, PoleCenter, ReductionCtx, ReductionError,
};
use crate::wideopen::{ElementaryTerm, WideOpenChart};
use num_bigint::BigInt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ColemanError {
    #[error("endpoints lie in different residue discs: {0}")]
    DifferentResidueDiscs(String),
    #[error("pole inside the integration disc: {0}")]
    PoleInDisc(String),
    #[error("endpoint coincides with a pole: {0}")]
    EndpointAtPole(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("internal certificate failed: {0}")]
    CertificateFailed(String),
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
}

pub type Result<T> = std::result::Result<T, ColemanError>;

/// An affine point `(x, y)` on a chart curve `y² = g(x)`.
#[derive(Debug, Clone)]
pub struct Pt {
    pub x: Elem,
    pub y: Elem,
}

impl Pt {
    pub fn new(x: Elem, y: Elem) -> Pt {
        Pt { x, y }
    }

    /// The hyperelliptic conjugate `w(P) = (x, −y)`.
    pub fn conj(&self) -> Pt {
        Pt {
            x: self.x.clone(),
            y: self.y.negate(),
        }
    }
}

/// The curve data of one chart: `y² = g(x)` with `g` monic, squarefree,
/// with unit discriminant (roots in distinct residue discs), plus the
/// centers of the deleted non-Weierstrass discs carrying third-kind poles.
#[derive(Debug, Clone)]
pub struct ChartCurve {
    field: FieldRef,
    pub g: Poly,
    pub d: i64,
    pub roots: Vec<Elem>,
    pub nu_centers: Vec<Elem>,
}

impl ChartCurve {
    pub fn new(field: &FieldRef, roots: Vec<Elem>, nu_centers: Vec<Elem>) -> Result<ChartCurve> {
        for (i, a) in roots.iter().enumerate() {
            for b in roots.iter().skip(i + 1) {
                if (a - b).valuation() >= 1 {
                    return Err(ColemanError::HypothesisViolated(
                        "model roots must lie in distinct residue discs".into(),
                    ));
                }
            }
        }
        for c in &nu_centers {
            if c.valuation() < 0 {
                return Err(ColemanError::HypothesisViolated(
                    "pole centers must be integral".into(),
                ));
            }
            for r in &roots {
                if (c - r).valuation() >= 1 {
                    return Err(ColemanError::HypothesisViolated(
                        "pole center collides with a Weierstrass disc".into(),
                    ));
                }
            }
        }
        let g = Poly::from_roots(field, &roots);
        Ok(ChartCurve {
            field: field.clone(),
            d: roots.len() as i64,
            g,
            roots,
            nu_centers,
        })
    }

    /// Extract the curve of a wide-open chart, together with the map from
    /// the chart's deleted-disc indices to this curve's reduction-context
    /// center indices (Weierstrass roots first, then pole centers).
    pub fn from_chart(chart: &WideOpenChart) -> Result<(ChartCurve, Vec<usize>)> {
        let field = chart.field().clone();
        let roots = chart.g_roots.clone();
        let mut nu_centers = Vec::new();
        let mut map = Vec::with_capacity(chart.centers.len());
        for c in &chart.centers {
            if c.weierstrass {
                let idx = roots
                    .iter()
                    .position(|r| (r - &c.beta).is_zero())
                    .ok_or_else(|| {
                        ColemanError::HypothesisViolated(
                            "Weierstrass deleted center is not a model root".into(),
                        )
                    })?;
                map.push(idx);
            } else {
                map.push(roots.len() + nu_centers.len());
                nu_centers.push(c.beta.clone());
            }
        }
        let curve = ChartCurve::new(&field, roots, nu_centers)?;
        Ok((curve, map))
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    /// Genus of the smooth model (`(d−1)/2` for odd `d`, `(d−2)/2` even).
    pub fn genus(&self) -> i64 {
        if self.d % 2 == 1 {
            (self.d - 1) / 2
        } else {
            (self.d - 2) / 2
        }
    }

    /// Reduction context: every root as a Weierstrass center, then the
    /// deleted-disc pole centers.
    pub fn reduction_ctx(&self) -> Result<ReductionCtx> {
        let mut centers: Vec<PoleCenter> = self
            .roots
            .iter()
            .map(|r| PoleCenter {
                beta: r.clone(),
                weierstrass: true,
            })
            .collect();
        centers.extend(self.nu_centers.iter().map(|b| PoleCenter {
            beta: b.clone(),
            weierstrass: false,
        }));
        Ok(ReductionCtx::new(&self.g, centers)?)
    }

    /// Index of the root whose residue disc contains `x`, if any.
    pub fn root_in_disc(&self, x: &Elem) -> Option<usize> {
        self.roots.iter().position(|r| (x - r).valuation() >= 1)
    }

    /// Index of the pole center whose residue disc contains `x`, if any.
    pub fn nu_center_in_disc(&self, x: &Elem) -> Option<usize> {
        self.nu_centers
            .iter()
            .position(|b| (x - b).valuation() >= 1)
    }

    fn check_point(&self, p: &Pt, who: &str) -> Result<()> {
        if p.x.valuation() < 0 {
            return Err(ColemanError::HypothesisViolated(format!(
                "{who}: x-coordinate outside the unit disc"
            )));
        }
        let gap = &(&p.y * &p.y) - &self.g.eval(&p.x);
        if !gap.is_zero() && gap.valuation() < 1 {
            return Err(ColemanError::HypothesisViolated(format!(
                "{who}: point does not lie on y² = g(x)"
            )));
        }
        Ok(())
    }

    /// On-curve check with relative tolerance and no unit-disc restriction.
    /// The closed-form genus-0 primitives are global on the chart, so their
    /// endpoints may lie beyond the unit disc.
    fn check_point_global(&self, p: &Pt, who: &str) -> Result<()> {
        let gx = self.g.eval(&p.x);
        let base = if gx.is_zero() { 0 } else { gx.valuation().min(0) };
        let gap = &(&p.y * &p.y) - &gx;
        if !gap.is_zero() && gap.valuation() < base + 1 {
            return Err(ColemanError::HypothesisViolated(format!(
                "{who}: point does not lie on y² = g(x)"
            )));
        }
        Ok(())
    }
}

/// `S` and `R` lie in the same residue disc of the curve (both coordinates
/// congruent mod π).
pub fn same_disc(s: &Pt, r: &Pt) -> bool {
    (&s.x - &r.x).valuation() >= 1 && (&s.y - &r.y).valuation() >= 1
}

// ---------------------------------------------------------------------------
// Truncated power series over K (plain coefficient vectors).
// ---------------------------------------------------------------------------

fn ser_zero(field: &FieldRef, n: usize) -> Vec<Elem> {
    vec![Elem::zero(field); n]
}

fn ser_add(a: &[Elem], b: &[Elem]) -> Vec<Elem> {
    let n = a.len().max(b.len());
    let field = a
        .first()
        .or_else(|| b.first())
        .expect("non-empty series")
        .field()
        .clone();
    let mut out = ser_zero(&field, n);
    for (i, c) in a.iter().enumerate() {
        out[i] = &out[i] + c;
    }
    for (i, c) in b.iter().enumerate() {
        out[i] = &out[i] + c;
    }
    out
}

fn ser_sub(a: &[Elem], b: &[Elem]) -> Vec<Elem> {
    ser_add(a, &b.iter().map(|c| c.negate()).collect::<Vec<_>>())
}

fn ser_mul(a: &[Elem], b: &[Elem], n: usize) -> Vec<Elem> {
    let field = a[0].field().clone();
    let mut out = ser_zero(&field, n);
    for (i, ai) in a.iter().enumerate().take(n) {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate().take(n - i) {
            if bj.is_zero() {
                continue;
            }
            out[i + j] = &out[i + j] + &(ai * bj);
        }
    }
    out
}

fn ser_scale(a: &[Elem], s: &Elem) -> Vec<Elem> {
    a.iter().map(|c| c * s).collect()
}

fn ser_inv(a: &[Elem], n: usize) -> Result<Vec<Elem>> {
    let field = a[0].field().clone();
    let mut out = ser_zero(&field, n);
    let b0 = a[0].inv()?;
    out[0] = b0.clone();
    for k in 1..n {
        let mut acc = Elem::zero(&field);
        for i in 1..=k {
            let ai = if i < a.len() { a[i].clone() } else { Elem::zero(&field) };
            if !ai.is_zero() {
                acc = &acc + &(&ai * &out[k - i]);
            }
        }
        out[k] = (&acc * &b0).negate();
    }
    Ok(out)
}

/// `(1 + u)^{±1/2}` for a series `u` whose constant term is (numerically)
/// small; the constant part is handled by a scalar Hensel square root with
/// hint `1` and the rest by the binomial series.
fn ser_sqrt_binom(u: &[Elem], n: usize, inverse: bool) -> Result<Vec<Elem>> {
    let field = u[0].field().clone();
    let one = Elem::one(&field);
    let head = &one + &u[0];
    let s0 = head.sqrt(Some(&one))?;
    let s0 = if inverse { s0.inv()? } else { s0 };
    // Tail with zero constant term, renormalized by the constant part.
    let head_inv = head.inv()?;
    let mut tail = ser_zero(&field, n);
    for (i, c) in u.iter().enumerate().skip(1).take(n.saturating_sub(1)) {
        tail[i] = c * &head_inv;
    }
    let sign = if inverse { -1i64 } else { 1i64 };
    let mut out = ser_zero(&field, n);
    out[0] = Elem::one(&field);
    let mut pow = out.clone();
    let mut coef = Elem::one(&field);
    for k in 1..n as i64 {
        pow = ser_mul(&pow, &tail, n);
        coef = &coef * &Elem::from_ratio_i64(&field, sign - 2 * (k - 1), 2 * k);
        if pow.iter().all(|c| c.is_zero()) {
            break;
        }
        for (o, p) in out.iter_mut().zip(&pow) {
            *o = &*o + &(&coef * p);
        }
    }
    Ok(ser_scale(&out, &s0))
}

fn ser_eval(a: &[Elem], t: &Elem) -> Elem {
    let field = a[0].field().clone();
    let mut acc = Elem::zero(&field);
    for c in a.iter().rev() {
        acc = &(&acc * t) + c;
    }
    acc
}

fn ser_antider(a: &[Elem]) -> Result<Vec<Elem>> {
    let field = a[0].field().clone();
    let mut out = ser_zero(&field, a.len() + 1);
    for (k, c) in a.iter().enumerate() {
        out[k + 1] = c.div_i64(k as i64 + 1)?;
    }
    Ok(out)
}

fn poly_ser(p: &Poly, field: &FieldRef, n: usize) -> Vec<Elem> {
    let mut out = ser_zero(field, n);
    for (i, c) in p.coeffs().iter().enumerate().take(n) {
        out[i] = c.clone();
    }
    out
}

/// Evaluate a polynomial on a truncated series argument (Horner).
fn poly_at_ser(p: &Poly, xs: &[Elem], n: usize) -> Vec<Elem> {
    let field = xs[0].field().clone();
    let mut acc = ser_zero(&field, n);
    for c in p.coeffs().iter().rev() {
        acc = ser_mul(&acc, xs, n);
        acc[0] = &acc[0] + c;
    }
    acc
}

/// Smallest truncation length `n` with `n·step − e·⌈log_p(n+1)⌉ ≥ target`.
fn trunc_len(field: &FieldRef, step: i64, target: i64) -> usize {
    let step = step.max(1);
    let mut n = 1i64;
    while n * step - field.e * ceil_log_p(field.p, n + 1) < target && n < 100_000 {
        n += 1;
    }
    (n + 1) as usize
}

// ---------------------------------------------------------------------------
// Tiny integrals.
// ---------------------------------------------------------------------------

/// Tiny integral of `num(x)·∏(x−β)^{−m}·dx/2y` between two points of the
/// *same* residue disc of the chart curve.  Dispatches on the disc type:
/// `x`-interpolation in ordinary discs, `y`-parametrization in Weierstrass
/// discs.  Poles listed in `dens` must lie outside the disc.
pub fn tiny_integral(
    curve: &ChartCurve,
    num: &Poly,
    dens: &[(Elem, i64)],
    s: &Pt,
    r: &Pt,
) -> Result<Elem> {
    curve.check_point(s, "tiny start")?;
    curve.check_point(r, "tiny end")?;
    if (&s.x - &r.x).is_zero() && (&s.y - &r.y).is_zero() {
        return Ok(Elem::zero(&curve.field));
    }
    if !same_disc(s, r) {
        return Err(ColemanError::DifferentResidueDiscs(
            "tiny integral requires endpoints in one residue disc".into(),
        ));
    }
    for (b, m) in dens {
        if *m > 0 && (&s.x - b).valuation() >= 1 {
            return Err(ColemanError::PoleInDisc(
                "denominator center lies in the integration disc".into(),
            ));
        }
    }
    if let Some(ri) = curve.root_in_disc(&s.x) {
        tiny_weierstrass_param(curve, num, dens, s, r, ri)
    } else {
        tiny_x_param(curve, num, dens, s, r)
    }
}

/// Ordinary disc: interpolate `x(t) = x_S + t·(x_R − x_S)`,
/// `y(t) = y_S·(g(x(t))/g(x_S))^{1/2}` on the branch through `S`.
fn tiny_x_param(
    curve: &ChartCurve,
    num: &Poly,
    dens: &[(Elem, i64)],
    s: &Pt,
    r: &Pt,
) -> Result<Elem> {
    let field = &curve.field;
    let dx = &r.x - &s.x;
    if dx.is_zero() {
        // Same x, same sheet (checked by the caller): nothing to do.
        return Ok(Elem::zero(field));
    }
    if s.y.valuation() != 0 {
        return Err(ColemanError::HypothesisViolated(
            "ordinary-disc interpolation needs a unit y-coordinate".into(),
        ));
    }
    let target = field.n_work + 2;
    let n = trunc_len(field, dx.valuation(), target);
    // g along the segment, exactly (degree-d polynomial in t).
    let gt = curve.g.compose_affine(&dx, &s.x);
    let ys2_inv = (&s.y * &s.y).inv()?;
    let mut u = poly_ser(&gt, field, n.max(gt.coeffs().len()));
    u.truncate(n.max(1));
    if u.len() < n {
        u.resize(n, Elem::zero(field));
    }
    let mut u = ser_scale(&u, &ys2_inv);
    u[0] = &u[0] - &Elem::one(field);
    let y_inv = ser_scale(&ser_sqrt_binom(&u, n, true)?, &s.y.inv()?);
    // Sheet certificate: the interpolated y at t = 1 must match y_R.
    let y_ser = ser_scale(&ser_sqrt_binom(&u, n, false)?, &s.y);
    if (&ser_eval(&y_ser, &Elem::one(field)) - &r.y).valuation() < 1 {
        return Err(ColemanError::DifferentResidueDiscs(
            "endpoints lie on opposite sheets over one x-disc".into(),
        ));
    }
    let mut integrand = ser_mul(
        &poly_ser(&num.compose_affine(&dx, &s.x), field, n),
        &y_inv,
        n,
    );
    for (b, m) in dens {
        if *m == 0 {
            continue;
        }
        let lin = vec![&s.x - b, dx.clone()];
        let lin_inv = ser_inv(&lin, n)?;
        for _ in 0..*m {
            integrand = ser_mul(&integrand, &lin_inv, n);
        }
    }
    let integrand = ser_scale(&integrand, &dx.div_i64(2)?);
    let prim = ser_antider(&integrand)?;
    Ok(ser_eval(&prim, &Elem::one(field)))
}

/// Weierstrass disc around the root `ρ = roots[ri]`: parametrize by `y`,
/// solving `g(x(y)) = y²` with `x(0) = ρ` by Newton iteration in `K[[y]]`,
/// so that `num·dx/2y = num(x(y))/g′(x(y))·dy`.
fn tiny_weierstrass_param(
    curve: &ChartCurve,
    num: &Poly,
    dens: &[(Elem, i64)],
    s: &Pt,
    r: &Pt,
    ri: usize,
) -> Result<Elem> {
    let field = &curve.field;
    let root = &curve.roots[ri];
    let mut vy = i64::MAX;
    for y in [&s.y, &r.y] {
        if !y.is_zero() {
            vy = vy.min(y.valuation());
        }
    }
    if vy == i64::MAX {
        // Both endpoints are the Weierstrass point itself.
        return Ok(Elem::zero(field));
    }
    if vy < 1 {
        return Err(ColemanError::DifferentResidueDiscs(
            "unit y-coordinate inside a Weierstrass disc".into(),
        ));
    }
    let target = field.n_work + 2;
    let n = trunc_len(field, vy, target);
    let mut ysq = ser_zero(field, n);
    if n > 2 {
        ysq[2] = Elem::one(field);
    }
    let mut xs = ser_zero(field, n);
    xs[0] = root.clone();
    let iters = (usize::BITS - n.leading_zeros()) as usize + 2;
    for _ in 0..iters {
        let gx = poly_at_ser(&curve.g, &xs, n);
        let gpx = poly_at_ser(&curve.g.derivative(), &xs, n);
        let delta = ser_mul(&ser_sub(&gx, &ysq), &ser_inv(&gpx, n)?, n);
        xs = ser_sub(&xs, &delta);
    }
    // Endpoint certificate: x(y_S) ≈ x_S and x(y_R) ≈ x_R.
    for (pt, who) in [(s, "start"), (r, "end")] {
        let xv = ser_eval(&xs, &pt.y);
        if !(&xv - &pt.x).is_zero() && (&xv - &pt.x).valuation() < 1 {
            return Err(ColemanError::DifferentResidueDiscs(format!(
                "{who} does not lie on the y-parametrized branch"
            )));
        }
    }
    let mut integrand = ser_mul(
        &poly_at_ser(num, &xs, n),
        &ser_inv(&poly_at_ser(&curve.g.derivative(), &xs, n), n)?,
        n,
    );
    for (b, m) in dens {
        if *m == 0 {
            continue;
        }
        let mut shifted = xs.clone();
        shifted[0] = &shifted[0] - b;
        let lin_inv = ser_inv(&shifted, n)?;
        for _ in 0..*m {
            integrand = ser_mul(&integrand, &lin_inv, n);
        }
    }
    let prim = ser_antider(&integrand)?;
    Ok(&ser_eval(&prim, &r.y) - &ser_eval(&prim, &s.y))
}

/// Tiny integral of the third-kind generator `ν = dx/((x−β)·2y)` inside a
/// single residue disc, including the disc containing the poles `(β, ±y_P)`
/// themselves (split off the logarithmic part of `d(y_P·log(x−β))`).
pub fn tiny_nu(curve: &ChartCurve, beta: &Elem, s: &Pt, r: &Pt) -> Result<Elem> {
    if (&s.x - beta).valuation() >= 1 && curve.root_in_disc(&s.x).is_none() {
        tiny_nu_lemma(curve, beta, s, r)
    } else {
        tiny_integral(curve, &Poly::one(&curve.field), &[(beta.clone(), 1)], s, r)
    }
}

/// Pole-disc form of the tiny third-kind integral:
/// `2y_P·ν = [ (g(β)−g(x)) / (y·(x−β)·(y_P+y)) ]·dx + dlog(x−β)`
/// with `y_P = √g(β)` on the sheet through `S`.
pub(crate) fn tiny_nu_lemma(curve: &ChartCurve, beta: &Elem, s: &Pt, r: &Pt) -> Result<Elem> {
    let field = &curve.field;
    curve.check_point(s, "tiny ν start")?;
    curve.check_point(r, "tiny ν end")?;
    if !same_disc(s, r) {
        return Err(ColemanError::DifferentResidueDiscs(
            "tiny third-kind integral requires one residue disc".into(),
        ));
    }
    for pt in [s, r] {
        if (&pt.x - beta).is_zero() {
            return Err(ColemanError::EndpointAtPole(
                "third-kind endpoint sits over the pole center".into(),
            ));
        }
    }
    if s.y.valuation() != 0 {
        return Err(ColemanError::HypothesisViolated(
            "pole-disc endpoints must have unit y".into(),
        ));
    }
    // Branch of √g(β) making y_P + y invertible along the disc (inside the
    // pole disc this selects the pole on the same sheet as the endpoints).
    let mut y_p = curve.g.eval(beta).sqrt(None)?;
    if (&y_p + &s.y).valuation() >= 1 {
        y_p = y_p.negate();
    }
    if (&y_p + &s.y).valuation() >= 1 {
        return Err(ColemanError::EndpointAtPole(
            "endpoint reduces to the conjugate pole".into(),
        ));
    }
    // ψ(x) = (g(x) − g(β))/(x − β), exactly.
    let (psi, rem) = curve
        .g
        .sub(&Poly::constant(curve.g.eval(beta)))
        .divmod(&Poly::x_minus(beta))?;
    if !rem.is_zero() && rem.coeff(0).valuation() < field.n_work {
        return Err(ColemanError::CertificateFailed(
            "g(x) − g(β) is not divisible by x − β".into(),
        ));
    }
    // Holomorphic part −ψ(x)/(y(y_P+y))·dx by x-interpolation.
    let dx = &r.x - &s.x;
    let holo = if dx.is_zero() {
        Elem::zero(field)
    } else {
        let target = field.n_work + 2;
        let n = trunc_len(field, dx.valuation(), target);
        let gt = curve.g.compose_affine(&dx, &s.x);
        let ys2_inv = (&s.y * &s.y).inv()?;
        let mut u = poly_ser(&gt, field, n);
        u = ser_scale(&u, &ys2_inv);
        u[0] = &u[0] - &Elem::one(field);
        let y_ser = ser_scale(&ser_sqrt_binom(&u, n, false)?, &s.y);
        if (&ser_eval(&y_ser, &Elem::one(field)) - &r.y).valuation() < 1 {
            return Err(ColemanError::DifferentResidueDiscs(
                "endpoints lie on opposite sheets over one x-disc".into(),
            ));
        }
        let y_inv = ser_inv(&y_ser, n)?;
        let mut shifted = y_ser.clone();
        shifted[0] = &shifted[0] + &y_p;
        let integrand = ser_scale(
            &ser_mul(
                &ser_mul(&poly_ser(&psi.compose_affine(&dx, &s.x), field, n), &y_inv, n),
                &ser_inv(&shifted, n)?,
                n,
            ),
            &dx.negate(),
        );
        ser_eval(&ser_antider(&integrand)?, &Elem::one(field))
    };
    let log_part = (&r.x - beta).div(&(&s.x - beta))?.log_iwasawa()?;
    Ok((&holo + &log_part).div(&y_p.mul_i64(2))?)
}

// ---------------------------------------------------------------------------
// Tiny integrals in the Weierstrass disc at infinity (odd degree).
// ---------------------------------------------------------------------------

/// `w(u)² = uᵈ·g(1/u)` as a truncated series in `u = t²` (the local
/// coordinate at infinity is `t` with `x = t⁻²`, `y = t⁻ᵈ·w`), branch
/// `w(0) = 1`.
fn w_series_u(curve: &ChartCurve, n: usize) -> Result<Vec<Elem>> {
    let field = &curve.field;
    let d = curve.d as usize;
    let mut wsq = ser_zero(field, n.max(1));
    for (k, c) in curve.g.coeffs().iter().enumerate() {
        let j = d - k;
        if j < wsq.len() {
            wsq[j] = c.clone();
        }
    }
    wsq[0] = &wsq[0] - &Elem::one(field);
    ser_sqrt_binom(&wsq, n.max(1), false)
}

/// The local coordinate `t` at the infinite Weierstrass point of an
/// odd-degree chart: `t² = 1/x` exactly and `y = t⁻ᵈ·w(t)` on the branch
/// `w(0) = 1`.  For a `K`-rational point with `v(x) < 0` the coordinate
/// lies in `K`: `t = x^{(d−1)/2}·(g(x)/xᵈ)^{1/2}/y`.
pub(crate) fn infinity_coordinate(curve: &ChartCurve, p: &Pt) -> Result<Elem> {
    let field = &curve.field;
    if curve.d % 2 == 0 {
        return Err(ColemanError::HypothesisViolated(
            "the disc at infinity is Weierstrass only for odd-degree models".into(),
        ));
    }
    if p.x.valuation() >= 0 {
        return Err(ColemanError::DifferentResidueDiscs(
            "point does not lie in the disc at infinity".into(),
        ));
    }
    let gap = &(&p.y * &p.y) - &curve.g.eval(&p.x);
    if !gap.is_zero() && gap.valuation() < (&p.y * &p.y).valuation() + 1 {
        return Err(ColemanError::HypothesisViolated(
            "infinite-disc point does not lie on y² = g(x)".into(),
        ));
    }
    let unit = curve.g.eval(&p.x).div(&p.x.pow_i64(curve.d))?;
    let root = unit.sqrt(Some(&Elem::one(field)))?;
    let t = (&p.x.pow_i64((curve.d - 1) / 2) * &root).div(&p.y)?;
    Ok(t)
}

/// Tiny integral of `num(x)·∏(x−β)^{−m}·dx/2y` between two points of the
/// Weierstrass residue disc at infinity (`v(x) < 0`, odd degree).  In the
/// local coordinate `t` every summand is an *even* Laurent series in `t`
/// times `dt` (because `w` and all the substituted factors are series in
/// `t²`), so the primitive is a Laurent polynomial in `t` and no residue
/// term can appear.
pub fn tiny_integral_infinity(
    curve: &ChartCurve,
    num: &Poly,
    dens: &[(Elem, i64)],
    s: &Pt,
    r: &Pt,
) -> Result<Elem> {
    let field = &curve.field;
    let ts = infinity_coordinate(curve, s)?;
    let tr = infinity_coordinate(curve, r)?;
    let vt = ts.valuation().min(tr.valuation());
    if vt < 1 {
        return Err(ColemanError::DifferentResidueDiscs(
            "endpoint sits on the boundary of the disc at infinity".into(),
        ));
    }
    if num.is_zero() {
        return Ok(Elem::zero(field));
    }
    let dq = num.degree().unwrap_or(0) as i64;
    let ncap: i64 = dens.iter().map(|(_, m)| (*m).max(0)).sum();
    // num(t⁻²)·∏(t⁻²−β)^{−m}·(−2t⁻³)/(2·t⁻ᵈ·w) dt
    //   = −t^E · A(u)·∏(1−βu)^{−m}/w(u) dt   with u = t², E = d−3−2·deg num+2Σm.
    let expo = curve.d - 3 - 2 * dq + 2 * ncap;
    let v0 = num
        .coeffs()
        .iter()
        .filter(|c| !c.is_zero())
        .map(|c| c.valuation())
        .min()
        .unwrap_or(0)
        .min(0);
    let target = (field.n_work + 2 - v0 - (expo + 1) * vt).max(1);
    let n = trunc_len(field, 2 * vt, target);
    // A(u) = u^{deg num}·num(1/u): the reversed coefficient vector.
    let mut a = ser_zero(field, n);
    for (k, c) in num.coeffs().iter().enumerate().take(dq as usize + 1) {
        let j = (dq as usize) - k;
        if j < n {
            a[j] = c.clone();
        }
    }
    let mut ser = ser_mul(&a, &ser_inv(&w_series_u(curve, n)?, n)?, n);
    for (b, m) in dens {
        if *m <= 0 {
            continue;
        }
        let lin_inv = ser_inv(&[Elem::one(field), b.negate()], n)?;
        for _ in 0..*m {
            ser = ser_mul(&ser, &lin_inv, n);
        }
    }
    // Primitive: −Σ ser_k · t^{2k+E+1}/(2k+E+1); the exponent is odd.
    let eval = |t: &Elem| -> Result<Elem> {
        let t2 = t * t;
        let mut pw = t.pow_i64(expo + 1);
        let mut acc = Elem::zero(field);
        for (k, c) in ser.iter().enumerate() {
            if !c.is_zero() {
                let den = 2 * k as i64 + expo + 1;
                acc = &acc + &(&c.div_i64(den)? * &pw);
            }
            pw = &pw * &t2;
        }
        Ok(acc.negate())
    };
    Ok(&eval(&tr)? - &eval(&ts)?)
}

// ---------------------------------------------------------------------------
// Frobenius / Kedlaya data.
// ---------------------------------------------------------------------------

/// An odd rational function `Σ_j Σ_i a_{ji}·y/(x−β_j)^{i+1} + Σ_i b_i·xⁱy`
/// (the exact part of a pole reduction).
#[derive(Debug, Clone)]
pub struct OddFn {
    finite: Vec<(Elem, Vec<Elem>)>,
    inf: Vec<Elem>,
}

impl OddFn {
    pub fn from_decomposition(ctx: &ReductionCtx, dec: &Decomposition) -> OddFn {
        let finite = ctx
            .centers
            .iter()
            .zip(&dec.f_finite)
            .filter(|(_, q)| q.iter().any(|c| !c.is_zero()))
            .map(|(c, q)| (c.beta.clone(), q.clone()))
            .collect();
        OddFn {
            finite,
            inf: dec.f_inf.clone(),
        }
    }

    pub fn eval(&self, p: &Pt) -> Result<Elem> {
        let field = p.x.field().clone();
        let mut acc = Elem::zero(&field);
        for (beta, q) in &self.finite {
            let lin_inv = (&p.x - beta).inv()?;
            let mut pw = lin_inv.clone();
            for a in q {
                if !a.is_zero() {
                    acc = &acc + &(&(a * &p.y) * &pw);
                }
                pw = &pw * &lin_inv;
            }
        }
        let mut xp = Elem::one(&field);
        for b in &self.inf {
            if !b.is_zero() {
                acc = &acc + &(&(b * &p.y) * &xp);
            }
            xp = &xp * &p.x;
        }
        Ok(acc)
    }
}

/// Third-kind row of the enlarged Frobenius system:
/// `φ*ν_j = dh + Σ_i n_row[i]·ω_i + d_self·ν_j` (`d_self ≈ p`).
#[derive(Debug, Clone)]
pub struct NuRow {
    pub n_row: Vec<Elem>,
    pub h: OddFn,
    pub d_self: Elem,
}

/// Frobenius action on odd de Rham cohomology of `y² = g(x)`, `g` monic of
/// odd degree `d ≥ 3`: `φ*ω_i = df_i + Σ_j M_{ij}·ω_j`, plus one enlarged
/// row per deleted-disc pole center.
#[derive(Debug, Clone)]
pub struct FrobeniusData {
    pub mmat: Vec<Vec<Elem>>,
    pub f: Vec<OddFn>,
    pub nu_rows: Vec<NuRow>,
}

fn poly_pow(p: &Poly, k: i64) -> Poly {
    let mut acc = Poly::one(p.field());
    for _ in 0..k {
        acc = acc.mul(p);
    }
    acc
}

/// `g(x^p)` for the chart model.
fn poly_sub_xp(g: &Poly, p: i64) -> Poly {
    let field = g.field().clone();
    let mut coeffs = vec![Elem::zero(&field); (g.coeffs().len() - 1) * p as usize + 1];
    for (i, c) in g.coeffs().iter().enumerate() {
        coeffs[i * p as usize] = c.clone();
    }
    Poly::new(&field, coeffs)
}

/// Order of the Frobenius series truncation for the working precision: the
/// k-th binomial term carries `Δ^k` and hence `k+1` factors of `p`, and the
/// pole reduction loses only logarithmically many digits on it, so
/// `target/e` terms plus a logarithmic cushion suffice.
fn frobenius_truncation(field: &FieldRef) -> i64 {
    let base = div_ceil_i(field.n_work + 2, field.e);
    base + ceil_log_p(field.p, 2 * base + 1) + 2
}

/// The numerator of `φ*ω_i` over the common denominator
/// `g^{p·k_max + (p−1)/2}`:  `p·x^{pi+p−1}·Σ_k binom(−1/2,k)·Δ^k·g^{p(k_max−k)}`
/// with `Δ = g(x^p) − g(x)^p`.
pub(crate) fn frobenius_omega_numerator(curve: &ChartCurve, i: i64, k_max: i64) -> Poly {
    let field = &curve.field;
    let p = field.p as i64;
    let gp = poly_pow(&curve.g, p);
    let delta = poly_sub_xp(&curve.g, p).sub(&gp);
    let mut sum = Poly::zero(field);
    let mut dpow = Poly::one(field);
    let mut gppow = vec![Poly::one(field)];
    for j in 1..=k_max {
        gppow.push(gppow[j as usize - 1].mul(&gp));
    }
    let mut coef = Elem::one(field);
    for k in 0..=k_max {
        if k > 0 {
            dpow = dpow.mul(&delta);
            coef = &coef * &Elem::from_ratio_i64(field, -(2 * k - 1), 2 * k);
        }
        sum = sum.add(&dpow.scale(&coef).mul(&gppow[(k_max - k) as usize]));
    }
    sum.shift_up((p * i + p - 1) as usize)
        .scale(&Elem::from_i64(field, p))
}

fn residue_i64(c: &Elem) -> Result<i64> {
    let field = c.field().clone();
    for k in 0..field.p as i64 {
        if (c - &Elem::from_i64(&field, k)).valuation() >= 1 {
            return Ok(k);
        }
    }
    Err(ColemanError::HypothesisViolated(
        "element has no prime-field residue".into(),
    ))
}

fn legendre(mut a: i64, p: i64) -> i64 {
    a = a.rem_euclid(p);
    if a == 0 {
        return 0;
    }
    let mut r = 1i64;
    let mut b = a;
    let mut e = (p - 1) / 2;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    if r == 1 {
        1
    } else {
        -1
    }
}

/// `a_p = p + 1 − #{ỹ² = ḡ(x̄)}` over the prime residue field (odd `d`, one
/// point at infinity).
fn trace_of_reduction(curve: &ChartCurve) -> Result<i64> {
    let p = curve.field.p as i64;
    let res: Vec<i64> = curve
        .g
        .coeffs()
        .iter()
        .map(residue_i64)
        .collect::<Result<_>>()?;
    let mut count = 1i64;
    for x in 0..p {
        let mut v = 0i64;
        for c in res.iter().rev() {
            v = (v * x + c).rem_euclid(p);
        }
        count += 1 + legendre(v, p);
    }
    Ok(p + 1 - count)
}

/// Compute the Frobenius matrix on the odd cohomology basis
/// `ω_0, …, ω_{d−2}` together with the enlarged third-kind rows, certifying
/// along the way that `φ*ω_i` is residue-free and that
/// `Res(φ*ν_j − p·ν_j) = 0`, and that `tr M ≡ a_p (mod p)`.
///
/// The long reduction chains divide by many multiples of `p` (the
/// intermediate primitives genuinely have denominators), so the computation
/// runs in a padded precision clone of the field and the certified results
/// are transferred back.
pub fn kedlaya_matrix(curve: &ChartCurve, ctx: &ReductionCtx) -> Result<FrobeniusData> {
    let _ = ctx;
    let field = &curve.field;
    let k_max = frobenius_truncation(field);
    let cap = field.p as i64 * (k_max + 3);
    let chains = curve.roots.len() as i64 + curve.nu_centers.len() as i64 + 1;
    let pad = chains * field.e * div_ceil_i(cap, field.p as i64 - 2) + 4 * field.e + 8;
    let padded = field.with_n_work(field.n_work + pad)?;
    let proots: Vec<Elem> = curve
        .roots
        .iter()
        .map(|r| r.promote_exact(&padded))
        .collect::<std::result::Result<_, _>>()?;
    let pnus: Vec<Elem> = curve
        .nu_centers
        .iter()
        .map(|b| b.promote_exact(&padded))
        .collect::<std::result::Result<_, _>>()?;
    let pcurve = ChartCurve::new(&padded, proots, pnus)?;
    let pctx = pcurve.reduction_ctx()?;
    let fd = kedlaya_core(&pcurve, &pctx, k_max, field.n_work)?;
    let dem = |v: &Elem| v.demote(field).map_err(ColemanError::from);
    let dem_vec = |v: &[Elem]| -> Result<Vec<Elem>> { v.iter().map(dem).collect() };
    let dem_fn = |f: &OddFn| -> Result<OddFn> {
        Ok(OddFn {
            finite: f
                .finite
                .iter()
                .map(|(b, q)| Ok((dem(b)?, dem_vec(q)?)))
                .collect::<Result<_>>()?,
            inf: dem_vec(&f.inf)?,
        })
    };
    Ok(FrobeniusData {
        mmat: fd.mmat.iter().map(|r| dem_vec(r)).collect::<Result<_>>()?,
        f: fd.f.iter().map(&dem_fn).collect::<Result<_>>()?,
        nu_rows: fd
            .nu_rows
            .iter()
            .map(|row| {
                Ok(NuRow {
                    n_row: dem_vec(&row.n_row)?,
                    h: dem_fn(&row.h)?,
                    d_self: dem(&row.d_self)?,
                })
            })
            .collect::<Result<_>>()?,
    })
}

fn kedlaya_core(
    curve: &ChartCurve,
    ctx: &ReductionCtx,
    k_max: i64,
    cert: i64,
) -> Result<FrobeniusData> {
    let field = &curve.field;
    let p = field.p as i64;
    if field.f_res != 1 {
        return Err(ColemanError::HypothesisViolated(
            "Frobenius lift x ↦ x^p needs a prime residue field".into(),
        ));
    }
    if curve.d < 3 || curve.d % 2 == 0 {
        return Err(ColemanError::HypothesisViolated(
            "Frobenius matrix needs a monic odd model of degree ≥ 3".into(),
        ));
    }
    let nroots = curve.roots.len();
    let mut caps = vec![p * k_max + (p - 1) / 2; nroots];
    caps.extend(vec![0i64; curve.nu_centers.len()]);

    let mut mmat = Vec::new();
    let mut f = Vec::new();
    for i in 0..(curve.d - 1) {
        let num = frobenius_omega_numerator(curve, i, k_max);
        let dec = cohomology_class(ctx, &MeroForm::new(num, caps.clone()))?;
        for dr in &dec.d_res {
            if !dr.is_zero() && dr.valuation() < cert {
                return Err(ColemanError::CertificateFailed(
                    "φ*ω_i acquired a nonzero residue".into(),
                ));
            }
        }
        mmat.push(dec.c.clone());
        f.push(OddFn::from_decomposition(ctx, &dec));
    }

    // Lefschetz certificate: tr M ≡ a_p (mod p).
    let ap = trace_of_reduction(curve)?;
    let mut trace = Elem::zero(field);
    for (i, row) in mmat.iter().enumerate() {
        trace = &trace + &row[i];
    }
    let gap = &trace - &Elem::from_i64(field, ap);
    if !gap.is_zero() && gap.valuation() < field.e {
        return Err(ColemanError::CertificateFailed(format!(
            "tr(M) is not congruent to a_p = {ap} mod p"
        )));
    }

    // Enlarged rows for the third-kind generators.
    let m_trunc = k_max + 2;
    let omega_core = {
        // Σ_k binom(−1/2,k)·Δ^k·g^{p(k_max−k)}, shared with the ω rows.
        frobenius_omega_numerator(curve, 0, k_max)
    };
    let mut nu_rows = Vec::new();
    for (jn, beta) in curve.nu_centers.iter().enumerate() {
        let bp = beta.pow_i64(p);
        if !(&bp - beta).is_zero() && (&bp - beta).valuation() < field.e {
            return Err(ColemanError::HypothesisViolated(
                "pole center is not fixed by Frobenius modulo p".into(),
            ));
        }
        // V(u) = Σ_{i=1}^{p−1} C(p,i)·β^{p−i}·uⁱ + (β^p − β), so that
        // x^p − β = u^p + V(u) with ‖V‖ ≤ |p| (u = x − β).
        let mut vcoeffs = vec![&bp - beta];
        let mut binom = BigInt::from(1);
        for i in 1..p {
            binom = binom * BigInt::from(p - i + 1) / BigInt::from(i);
            vcoeffs.push(&Elem::from_bigint(field, binom.clone()) * &beta.pow_i64(p - i));
        }
        let vpoly = Poly::new(field, vcoeffs);
        // 1/(x^p−β) = Σ_m (−1)^m·V(u)^m·u^{−p(m+1)}; truncate at m ≤ M and
        // clear denominators with u^{p(M+1)}.
        let mut t_u = Poly::zero(field);
        let mut vpow = Poly::one(field);
        for m in 0..=m_trunc {
            let term = vpow.shift_up((p * (m_trunc - m)) as usize);
            t_u = if m % 2 == 0 { t_u.add(&term) } else { t_u.sub(&term) };
            if m < m_trunc {
                vpow = vpow.mul(&vpoly);
            }
        }
        let t_x = t_u.compose_affine(&Elem::one(field), &beta.negate());
        let num = omega_core.mul(&t_x);
        let mut caps_nu = caps.clone();
        caps_nu[nroots + jn] = p * (m_trunc + 1);
        let dec = cohomology_class(ctx, &MeroForm::new(num, caps_nu))?;
        for (k, dr) in dec.d_res.iter().enumerate() {
            if k == nroots + jn {
                let gap = dr - &Elem::from_i64(field, p);
                if !gap.is_zero() && gap.valuation() < cert {
                    return Err(ColemanError::CertificateFailed(
                        "Res(φ*ν − p·ν) ≠ 0 at its own pole center".into(),
                    ));
                }
            } else if !dr.is_zero() && dr.valuation() < cert {
                return Err(ColemanError::CertificateFailed(
                    "φ*ν acquired a residue at a foreign center".into(),
                ));
            }
        }
        nu_rows.push(NuRow {
            n_row: dec.c.clone(),
            h: OddFn::from_decomposition(ctx, &dec),
            d_self: dec.d_res[nroots + jn].clone(),
        });
    }
    Ok(FrobeniusData { mmat, f, nu_rows })
}

/// Frobenius lift on points: `φ(x, y) = (x^p, y^p·(g(x^p)/g(x)^p)^{1/2})`
/// with the square root ≡ 1.
pub fn phi_point(curve: &ChartCurve, pt: &Pt) -> Result<Pt> {
    let field = &curve.field;
    let p = field.p as i64;
    let gx = curve.g.eval(&pt.x);
    if gx.valuation() != 0 {
        return Err(ColemanError::HypothesisViolated(
            "Frobenius lift needs a point outside the Weierstrass discs".into(),
        ));
    }
    let xq = pt.x.pow_i64(p);
    let ratio = curve.g.eval(&xq).div(&gx.pow_i64(p))?;
    let s = ratio.sqrt(Some(&Elem::one(field)))?;
    Ok(Pt {
        x: xq,
        y: &pt.y.pow_i64(p) * &s,
    })
}

// ---------------------------------------------------------------------------
// Dense linear solve (min-valuation pivoting).
// ---------------------------------------------------------------------------

pub(crate) fn solve_dense(mat: &[Vec<Elem>], rhs: &[Elem]) -> Result<Vec<Elem>> {
    let n = mat.len();
    let field = rhs
        .first()
        .map(|c| c.field().clone())
        .or_else(|| mat.first().and_then(|r| r.first()).map(|c| c.field().clone()))
        .ok_or_else(|| ColemanError::SingularSystem("empty system".into()))?;
    if n == 0 {
        return Ok(vec![]);
    }
    let mut a: Vec<Vec<Elem>> = mat.to_vec();
    let mut b: Vec<Elem> = rhs.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let pivot = (col..n)
            .filter(|&r| !a[perm[r]][col].is_zero())
            .min_by_key(|&r| a[perm[r]][col].valuation())
            .ok_or_else(|| ColemanError::SingularSystem(format!("no pivot in column {col}")))?;
        perm.swap(col, pivot);
        let prow = perm[col];
        let pinv = a[prow][col].inv()?;
        for rr in col + 1..n {
            let row = perm[rr];
            if a[row][col].is_zero() {
                continue;
            }
            let factor = &a[row][col] * &pinv;
            for cc in col..n {
                let sub = &factor * &a[prow][cc];
                a[row][cc] = &a[row][cc] - &sub;
            }
            let sub = &factor * &b[prow];
            b[row] = &b[row] - &sub;
        }
    }
    let mut x = vec![Elem::zero(&field); n];
    for col in (0..n).rev() {
        let row = perm[col];
        let mut acc = b[row].clone();
        for cc in col + 1..n {
            acc = &acc - &(&a[row][cc] * &x[cc]);
        }
        x[col] = acc.div(&a[row][col])?;
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// The per-chart integrator.
// ---------------------------------------------------------------------------

/// Integration engine for one chart curve.  For odd `deg g ≥ 3` it eagerly
/// computes the Frobenius data; for `deg g ≤ 2` it uses closed logarithmic
/// formulas; for even `deg g ≥ 4` each integral is routed through an
/// odd-degree model chosen away from the endpoints.
#[derive(Debug)]
pub struct ChartIntegrator {
    pub curve: ChartCurve,
    pub ctx: ReductionCtx,
    center_map: Vec<usize>,
    pub frob: Option<FrobeniusData>,
}

impl ChartIntegrator {
    pub fn new(curve: ChartCurve) -> Result<ChartIntegrator> {
        let ctx = curve.reduction_ctx()?;
        let frob = if curve.d >= 3 && curve.d % 2 == 1 {
            Some(kedlaya_matrix(&curve, &ctx)?)
        } else {
            None
        };
        let center_map = (0..ctx.centers.len()).collect();
        Ok(ChartIntegrator {
            curve,
            ctx,
            center_map,
            frob,
        })
    }

    pub fn from_chart(chart: &WideOpenChart) -> Result<ChartIntegrator> {
        let (curve, map) = ChartCurve::from_chart(chart)?;
        let mut it = ChartIntegrator::new(curve)?;
        it.center_map = map;
        Ok(it)
    }

    pub fn field(&self) -> &FieldRef {
        &self.curve.field
    }

    /// Lift one elementary chart term into a [`MeroForm`] over this
    /// integrator's center ordering.
    pub fn mero_from_term(&self, t: &ElementaryTerm) -> MeroForm {
        let mut caps = vec![0i64; self.ctx.centers.len()];
        for (chart_idx, &ord) in t.pole_orders.iter().enumerate() {
            caps[self.center_map[chart_idx]] += ord;
        }
        let num = Poly::constant(t.coeff.clone()).shift_up(t.x_power as usize);
        MeroForm::new(num, caps)
    }

    /// Sum a list of elementary chart terms into one [`MeroForm`].
    pub fn mero_from_terms(&self, terms: &[ElementaryTerm]) -> MeroForm {
        let field = &self.curve.field;
        let mut acc = MeroForm::new(Poly::zero(field), vec![0; self.ctx.centers.len()]);
        let one = Elem::one(field);
        for t in terms {
            acc = acc.add_scaled(&self.ctx, &self.mero_from_term(t), &one);
        }
        acc
    }

    /// Integrate an odd meromorphic form `η = num·∏(x−β_j)^{−caps_j}·dx/2y`
    /// from `s` to `r`.
    pub fn integrate_mero(&self, eta: &MeroForm, s: &Pt, r: &Pt) -> Result<Elem> {
        if self.curve.d >= 4 && self.curve.d % 2 == 0 {
            let om = odd_model(&self.curve, &[s.x.clone(), r.x.clone()])?;
            let inner = ChartIntegrator::new(om.curve.clone())?;
            let eta2 = om.pullback(&self.ctx, eta)?;
            return inner.integrate_mero(&eta2, &om.map_point(s)?, &om.map_point(r)?);
        }
        if self.curve.d >= 3 && (s.x.valuation() < 0 || r.x.valuation() < 0) {
            // One endpoint lies beyond the unit disc, inside the Weierstrass
            // residue disc at infinity.  Route through the infinite branch
            // point: for an odd form, ∫_P^{W∞} = −½·∫_{w(P)}^P.
            let dens: Vec<(Elem, i64)> = self
                .ctx
                .centers
                .iter()
                .zip(&eta.caps)
                .filter(|(_, &c)| c > 0)
                .map(|(pc, &c)| (pc.beta.clone(), c))
                .collect();
            if s.x.valuation() < 0 && r.x.valuation() < 0 {
                return tiny_integral_infinity(&self.curve, &eta.num, &dens, s, r);
            }
            let half = |p: &Pt| -> Result<Elem> {
                if p.x.valuation() < 0 {
                    tiny_integral_infinity(&self.curve, &eta.num, &dens, &p.conj(), p)
                } else {
                    self.integrate_mero(eta, &p.conj(), p)
                }
            };
            return Ok(&half(r)?.div_i64(2)? - &half(s)?.div_i64(2)?);
        }
        let dec = cohomology_class(&self.ctx, eta)?;
        self.integrate_decomposition(&dec, s, r)
    }

    /// Integrate `dF + Σ c_i ω_i + Σ d_j ν_j` from `s` to `r`.
    pub fn integrate_decomposition(&self, dec: &Decomposition, s: &Pt, r: &Pt) -> Result<Elem> {
        if self.curve.d <= 2 {
            return integrate_genus0(&self.curve, &self.ctx, dec, s, r);
        }
        let fpart = OddFn::from_decomposition(&self.ctx, dec);
        let mut total = &fpart.eval(r)? - &fpart.eval(s)?;
        if dec.c.iter().any(|c| !c.is_zero()) {
            let om = self.omega_vec(s, r)?;
            for (c, v) in dec.c.iter().zip(&om) {
                if !c.is_zero() {
                    total = &total + &(c * v);
                }
            }
        }
        for (j, dj) in dec.d_res.iter().skip(self.curve.roots.len()).enumerate() {
            if !dj.is_zero() {
                total = &total + &(dj * &self.integrate_third_kind(j, s, r)?);
            }
        }
        Ok(total)
    }

    /// `∫_s^r ω_i` for every basis form `ω_i = xⁱ·dx/2y`, `i = 0..d−2`.
    pub fn omega_vec(&self, s: &Pt, r: &Pt) -> Result<Vec<Elem>> {
        let field = &self.curve.field;
        let dim = (self.curve.d - 1).max(0) as usize;
        let xpow = |i: usize| Poly::one(field).shift_up(i);
        if same_disc(s, r) {
            return (0..dim)
                .map(|i| tiny_integral(&self.curve, &xpow(i), &[], s, r))
                .collect();
        }
        let sw = self.curve.root_in_disc(&s.x);
        let rw = self.curve.root_in_disc(&r.x);
        match (sw, rw) {
            (Some(i), Some(j)) => {
                // ∫ between the two Weierstrass points vanishes for odd forms.
                let sp = Pt::new(self.curve.roots[i].clone(), Elem::zero(field));
                let rp = Pt::new(self.curve.roots[j].clone(), Elem::zero(field));
                (0..dim)
                    .map(|k| {
                        Ok(&tiny_integral(&self.curve, &xpow(k), &[], s, &sp)?
                            + &tiny_integral(&self.curve, &xpow(k), &[], &rp, r)?)
                    })
                    .collect()
            }
            (Some(i), None) => {
                let sp = Pt::new(self.curve.roots[i].clone(), Elem::zero(field));
                let half = self.frobenius_solve(&r.conj(), r)?;
                (0..dim)
                    .map(|k| {
                        Ok(&tiny_integral(&self.curve, &xpow(k), &[], s, &sp)?
                            + &half[k].div_i64(2)?)
                    })
                    .collect()
            }
            (None, Some(j)) => {
                let rp = Pt::new(self.curve.roots[j].clone(), Elem::zero(field));
                let half = self.frobenius_solve(&s.conj(), s)?;
                (0..dim)
                    .map(|k| {
                        Ok(&tiny_integral(&self.curve, &xpow(k), &[], &rp, r)?
                            - &half[k].div_i64(2)?)
                    })
                    .collect()
            }
            (None, None) => self.frobenius_solve(s, r),
        }
    }

    /// `Σ_i coeffs[i]·∫_s^r ω_i`.
    pub fn integrate_second_kind(&self, coeffs: &[Elem], s: &Pt, r: &Pt) -> Result<Elem> {
        let om = self.omega_vec(s, r)?;
        let mut acc = Elem::zero(&self.curve.field);
        for (c, v) in coeffs.iter().zip(&om) {
            acc = &acc + &(c * v);
        }
        Ok(acc)
    }

    /// `∫_{S'}^r Σ coeffs[i]·ω_i` from any Weierstrass point `S'`: for odd
    /// forms this equals `½·∫_{w(r)}^r`.
    pub fn weierstrass_endpoint(&self, coeffs: &[Elem], r: &Pt) -> Result<Elem> {
        let om = self.frobenius_solve(&r.conj(), r)?;
        let mut acc = Elem::zero(&self.curve.field);
        for (c, v) in coeffs.iter().zip(&om) {
            acc = &acc + &(c * v);
        }
        acc.div_i64(2).map_err(ColemanError::from)
    }

    /// Solve `(M − 1)·X = f(s) − f(r) − ∫_s^{φs} − ∫_{φr}^r` for the vector
    /// of basis integrals `X_i = ∫_s^r ω_i` (both endpoints in ordinary
    /// residue discs).
    fn frobenius_solve(&self, s: &Pt, r: &Pt) -> Result<Vec<Elem>> {
        let field = &self.curve.field;
        let fd = self.frob.as_ref().ok_or_else(|| {
            ColemanError::HypothesisViolated("no Frobenius data on this chart".into())
        })?;
        let phis = phi_point(&self.curve, s)?;
        let phir = phi_point(&self.curve, r)?;
        let dim = (self.curve.d - 1) as usize;
        let mut rhs = Vec::with_capacity(dim);
        for i in 0..dim {
            let xi = Poly::one(field).shift_up(i);
            let t1 = tiny_integral(&self.curve, &xi, &[], s, &phis)?;
            let t2 = tiny_integral(&self.curve, &xi, &[], &phir, r)?;
            let fv = &fd.f[i].eval(s)? - &fd.f[i].eval(r)?;
            rhs.push(&(&fv - &t1) - &t2);
        }
        let mut a = fd.mmat.clone();
        let one = Elem::one(field);
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = &row[i] - &one;
        }
        solve_dense(&a, &rhs)
    }

    /// `∫_s^r ν_j` for the third-kind generator at `nu_centers[j]`.
    pub fn integrate_third_kind(&self, j: usize, s: &Pt, r: &Pt) -> Result<Elem> {
        let field = &self.curve.field;
        let beta = self.curve.nu_centers[j].clone();
        if same_disc(s, r) {
            return tiny_nu(&self.curve, &beta, s, r);
        }
        let sw = self.curve.root_in_disc(&s.x);
        let rw = self.curve.root_in_disc(&r.x);
        match (sw, rw) {
            (Some(i), Some(jr)) => {
                let sp = Pt::new(self.curve.roots[i].clone(), Elem::zero(field));
                let rp = Pt::new(self.curve.roots[jr].clone(), Elem::zero(field));
                Ok(&tiny_nu(&self.curve, &beta, s, &sp)? + &tiny_nu(&self.curve, &beta, &rp, r)?)
            }
            (Some(i), None) => {
                let sp = Pt::new(self.curve.roots[i].clone(), Elem::zero(field));
                let half = self.nu_frobenius(j, &r.conj(), r)?;
                Ok(&tiny_nu(&self.curve, &beta, s, &sp)? + &half.div_i64(2)?)
            }
            (None, Some(jr)) => {
                let rp = Pt::new(self.curve.roots[jr].clone(), Elem::zero(field));
                let half = self.nu_frobenius(j, &s.conj(), s)?;
                Ok(&tiny_nu(&self.curve, &beta, &rp, r)? - &half.div_i64(2)?)
            }
            (None, None) => self.nu_frobenius(j, s, r),
        }
    }

    /// The enlarged Frobenius relation for `ν_j` between ordinary discs:
    /// `(d_self − 1)·∫_s^r ν_j = h(s) − h(r) − Σ N_i·∫ω_i + ∫_{φs}^s ν + ∫_r^{φr} ν`.
    fn nu_frobenius(&self, j: usize, s: &Pt, r: &Pt) -> Result<Elem> {
        let field = &self.curve.field;
        let fd = self.frob.as_ref().ok_or_else(|| {
            ColemanError::HypothesisViolated("no Frobenius data on this chart".into())
        })?;
        let row = &fd.nu_rows[j];
        let beta = &self.curve.nu_centers[j];
        let phis = phi_point(&self.curve, s)?;
        let phir = phi_point(&self.curve, r)?;
        let t1 = tiny_nu(&self.curve, beta, &phis, s)?;
        let t2 = tiny_nu(&self.curve, beta, r, &phir)?;
        let om = self.omega_vec(s, r)?;
        let mut acc = &(&row.h.eval(s)? - &row.h.eval(r)?) + &(&t1 + &t2);
        for (c, v) in row.n_row.iter().zip(&om) {
            if !c.is_zero() {
                acc = &acc - &(c * v);
            }
        }
        acc.div(&(&row.d_self - &Elem::one(field)))
            .map_err(ColemanError::from)
    }

    /// Ψ of the class `Σ c_i ω_i + Σ d_j ν_j`: project to the span of the
    /// second-kind basis using `Ψ∘φ* = φ*∘Ψ` and `φ*ν_j ≡ Σ N_i ω_i + p·ν_j`.
    pub fn psi_map(&self, c: &[Elem], d_res: &[Elem]) -> Result<Vec<Elem>> {
        let field = &self.curve.field;
        let fd = self.frob.as_ref().ok_or_else(|| {
            ColemanError::HypothesisViolated("no Frobenius data on this chart".into())
        })?;
        let dim = (self.curve.d - 1) as usize;
        let mut out: Vec<Elem> = c.to_vec();
        out.resize(dim, Elem::zero(field));
        let p = Elem::from_i64(field, field.p as i64);
        for (j, dj) in d_res.iter().skip(self.curve.roots.len()).enumerate() {
            if dj.is_zero() {
                continue;
            }
            // (Mᵀ − p)·a = N_j.
            let mut a = vec![vec![Elem::zero(field); dim]; dim];
            for (row, mrow) in fd.mmat.iter().enumerate() {
                for (col, v) in mrow.iter().enumerate() {
                    a[col][row] = v.clone();
                }
            }
            for (i, row) in a.iter_mut().enumerate() {
                row[i] = &row[i] - &p;
            }
            let sol = solve_dense(&a, &fd.nu_rows[j].n_row)?;
            for (o, v) in out.iter_mut().zip(&sol) {
                *o = &*o + &(dj * v);
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Cup product via residues at infinity (odd degree).
// ---------------------------------------------------------------------------

/// Cup product `⟨Σ a_iω_i, Σ b_iω_i⟩ = Res_∞(B·∫A)` on the odd model
/// `y² = g(x)`, computed in the local coordinate `s` at infinity
/// (`x = s^{−2}`, `y = s^{−d}·w(s)`).
pub fn cup_product(curve: &ChartCurve, a: &[Elem], b: &[Elem]) -> Result<Elem> {
    let field = &curve.field;
    let d = curve.d;
    if d < 3 || d % 2 == 0 {
        return Err(ColemanError::HypothesisViolated(
            "cup product needs a monic odd model of degree ≥ 3".into(),
        ));
    }
    let n = (2 * d + 8) as usize;
    // w(s)² = s^{2d}·g(s^{−2}) = Σ_k g_k·s^{2(d−k)}, constant term 1.
    let mut wsq = ser_zero(field, n);
    for (k, c) in curve.g.coeffs().iter().enumerate() {
        let idx = 2 * (d as usize - k);
        if idx < n {
            wsq[idx] = c.clone();
        }
    }
    let mut u = wsq;
    u[0] = &u[0] - &Elem::one(field);
    let winv = ser_sqrt_binom(&u, n, true)?;
    // ω_i = −s^{d−2i−3}·w(s)^{−1}·ds; shift all exponents by d−1 ≥ 0.
    let off = (d - 1) as usize;
    let laurent = |coeffs: &[Elem]| -> Vec<Elem> {
        let mut acc = ser_zero(field, n);
        for (i, c) in coeffs.iter().enumerate() {
            let e = (d - 2 * i as i64 - 3 + d - 1) as usize;
            if e < n && !c.is_zero() {
                acc[e] = &acc[e] - c;
            }
        }
        ser_mul(&acc, &winv, n)
    };
    let a_sh = laurent(a);
    let b_sh = laurent(b);
    // Antidifferentiate A (true exponent k − off): c·s^m ↦ c·s^{m+1}/(m+1).
    let mut ia_sh = ser_zero(field, n); // offset off − 1
    for (k, c) in a_sh.iter().enumerate() {
        let m = k as i64 - off as i64;
        if m == -1 {
            if !c.is_zero() && c.valuation() < field.n_work {
                return Err(ColemanError::CertificateFailed(
                    "first-kind class has a residue at infinity".into(),
                ));
            }
            continue;
        }
        if k < n {
            ia_sh[k] = c.div_i64(m + 1)?;
        }
    }
    // Res = coefficient of s^{−1} in B·∫A; offsets add to 2·off − 1.
    let prod = ser_mul(&b_sh, &ia_sh, n);
    let idx = 2 * off - 2;
    Ok(prod[idx].clone())
}

// ---------------------------------------------------------------------------
// Genus-0 charts: closed logarithmic formulas.
// ---------------------------------------------------------------------------

/// `Log((A+B√δ)/(A−B√δ))/(2√δ)`, valued in the base field.  If `δ` is a
/// square the two Iwasawa logarithms are taken directly; otherwise the
/// argument is first raised to the power `q²−1` (trivializing the residue)
/// and the series `artanh` is summed inside `K`.
pub fn log_ratio_over_sqrt(a: &Elem, b: &Elem, delta: &Elem) -> Result<Elem> {
    let field = a.field().clone();
    if b.is_zero() {
        return Ok(Elem::zero(&field));
    }
    if let Ok(sq) = delta.sqrt(None) {
        let num = a + &(b * &sq);
        let den = a - &(b * &sq);
        if num.is_zero() || den.is_zero() {
            return Err(ColemanError::EndpointAtPole(
                "logarithmic ratio degenerates at a pole".into(),
            ));
        }
        return Ok(num.div(&den)?.log_iwasawa()?.div(&sq.mul_i64(2))?);
    }
    // Pair arithmetic in K[√δ]: conjugate factors share their valuation, so
    // χ = (A+B√δ)/(A−B√δ) is a unit and χ^{q²−1} ≡ 1 (mod π).
    let q = field.q();
    let exp = q * q - 1;
    let mut pa = Elem::one(&field);
    let mut pb = Elem::zero(&field);
    let mut ba = a.clone();
    let mut bb = b.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            let na = &(&pa * &ba) + &(&(&pb * &bb) * delta);
            let nb = &(&pa * &bb) + &(&pb * &ba);
            pa = na;
            pb = nb;
        }
        let na = &(&ba * &ba) + &(&(&bb * &bb) * delta);
        let nb = (&ba * &bb).mul_i64(2);
        ba = na;
        bb = nb;
        e >>= 1;
    }
    if pa.is_zero() {
        return Err(ColemanError::EndpointAtPole(
            "logarithmic ratio degenerates at a pole".into(),
        ));
    }
    let w = pb.div(&pa)?;
    let w2d = &(&w * &w) * delta;
    if !w2d.is_zero() && w2d.valuation() < 1 {
        return Err(ColemanError::HypothesisViolated(
            "artanh series does not converge".into(),
        ));
    }
    let target = field.n_work + 2;
    let step = if w2d.is_zero() {
        field.capacity()
    } else {
        w2d.valuation()
    };
    let terms = trunc_len(&field, step, target) as i64;
    let mut acc = Elem::zero(&field);
    let mut pw = w.clone();
    for k in 0..terms {
        acc = &acc + &pw.div_i64(2 * k + 1)?;
        pw = &pw * &w2d;
        if pw.is_zero() {
            break;
        }
    }
    acc.div_i64(exp).map_err(ColemanError::from)
}

/// Closed-form integration on a genus-0 chart (`deg g ∈ {1, 2}`): the exact
/// part is evaluated, the single `ω₀` (for `d = 2`) and each `ν_j`
/// integrate to Iwasawa logarithms.
pub fn integrate_genus0(
    curve: &ChartCurve,
    ctx: &ReductionCtx,
    dec: &Decomposition,
    s: &Pt,
    r: &Pt,
) -> Result<Elem> {
    if !(1..=2).contains(&curve.d) {
        return Err(ColemanError::HypothesisViolated(
            "closed-form integration needs deg g ∈ {1, 2}".into(),
        ));
    }
    curve.check_point_global(s, "genus-0 start")?;
    curve.check_point_global(r, "genus-0 end")?;
    let fpart = OddFn::from_decomposition(ctx, dec);
    let mut total = &fpart.eval(r)? - &fpart.eval(s)?;
    let nroots = curve.roots.len();
    if curve.d == 1 {
        // y² = x − r0: ν_j = dy/(y² − (β−r0)).
        let r0 = &curve.roots[0];
        for (j, beta) in curve.nu_centers.iter().enumerate() {
            let dj = &dec.d_res[nroots + j];
            if dj.is_zero() {
                continue;
            }
            let delta = beta - r0;
            let a = &(&r.y * &s.y) - &delta;
            let b = &r.y - &s.y;
            total = &total + &(dj * &log_ratio_over_sqrt(&a, &b, &delta)?);
        }
    } else {
        // y² = (x−r0)(x−r1): substitute t = y − X, X = x + b₁/2, so that
        // ω₀ = −dt/2t and ν_j = dt/(t² + 2B̂t + D).
        let b1 = curve.g.coeff(1);
        let half_b = b1.div_i64(2)?;
        let t_of = |p: &Pt| -> Elem { &p.y - &(&p.x + &half_b) };
        let ts = t_of(s);
        let tr = t_of(r);
        if !dec.c.is_empty() && !dec.c[0].is_zero() {
            let ratio = tr.div(&ts)?;
            total = &total - &(&dec.c[0] * &ratio.log_iwasawa()?.div_i64(2)?);
        }
        for (j, beta) in curve.nu_centers.iter().enumerate() {
            let dj = &dec.d_res[nroots + j];
            if dj.is_zero() {
                continue;
            }
            let bhat = beta + &half_b;
            let a = &(&(&tr + &bhat) * &(&ts + &bhat)) - &curve.g.eval(beta);
            let b = &tr - &ts;
            total = &total + &(dj * &log_ratio_over_sqrt(&a, &b, &curve.g.eval(beta))?);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Even-degree models: x ↦ lc/(x − r).
// ---------------------------------------------------------------------------

/// An odd-degree model of an even-degree chart curve, obtained by sending a
/// chosen root `r` to infinity: `X = lc/(x−r)`, `Y = y·X^{d/2}/lc`, where
/// `lc = g′(r)`.  The point `x = ∞` maps to `X = 0`, which is appended as
/// an extra pole center (a second-kind form on the even model can carry a
/// residue pair over infinity).
#[derive(Debug, Clone)]
pub struct OddModel {
    pub curve: ChartCurve,
    r: Elem,
    lc: Elem,
    d_old: i64,
    /// source context center index → target context center index
    /// (`None` for the root sent to infinity).
    center_map: Vec<Option<usize>>,
}

pub fn odd_model(curve: &ChartCurve, avoid: &[Elem]) -> Result<OddModel> {
    let field = &curve.field;
    if curve.d < 4 || curve.d % 2 == 1 {
        return Err(ColemanError::HypothesisViolated(
            "odd-model transform applies to even degree ≥ 4".into(),
        ));
    }
    let pick = curve
        .roots
        .iter()
        .position(|r| avoid.iter().all(|a| (a - r).valuation() < 1))
        .ok_or_else(|| {
            ColemanError::HypothesisViolated("no root disc avoids the endpoints".into())
        })?;
    let r = curve.roots[pick].clone();
    let lc = curve.g.derivative().eval(&r);
    let mut new_roots = Vec::new();
    let mut center_map = vec![None; curve.roots.len() + curve.nu_centers.len()];
    for (i, ri) in curve.roots.iter().enumerate() {
        if i == pick {
            continue;
        }
        center_map[i] = Some(new_roots.len());
        new_roots.push(lc.div(&(ri - &r))?);
    }
    let mut new_nus = Vec::new();
    for (j, beta) in curve.nu_centers.iter().enumerate() {
        center_map[curve.roots.len() + j] = Some(new_roots.len() + new_nus.len());
        new_nus.push(lc.div(&(beta - &r))?);
    }
    // Image of x = ∞.
    new_nus.push(Elem::zero(field));
    let new_curve = ChartCurve::new(field, new_roots, new_nus)?;
    Ok(OddModel {
        curve: new_curve,
        r,
        lc,
        d_old: curve.d,
        center_map,
    })
}

impl OddModel {
    pub fn map_point(&self, p: &Pt) -> Result<Pt> {
        let t = &p.x - &self.r;
        if t.valuation() >= 1 {
            return Err(ColemanError::HypothesisViolated(
                "point lies in the disc sent to infinity".into(),
            ));
        }
        let xx = self.lc.div(&t)?;
        let yy = (&p.y * &xx.pow_i64(self.d_old / 2)).div(&self.lc)?;
        Ok(Pt::new(xx, yy))
    }

    /// Pull a form `num·∏(x−β_j)^{−n_j}·dx/2y` on the even model back to
    /// the odd model.
    pub fn pullback(&self, src_ctx: &ReductionCtx, eta: &MeroForm) -> Result<MeroForm> {
        let field = &self.curve.field;
        let tgt_ctx_len = self.curve.roots.len() + self.curve.nu_centers.len();
        let mut caps = vec![0i64; tgt_ctx_len];
        let mut cons = Elem::from_i64(field, -1);
        let mut cap_sum = 0i64;
        for (j, (&n, center)) in eta.caps.iter().zip(&src_ctx.centers).enumerate() {
            if n == 0 {
                continue;
            }
            cap_sum += n;
            let diff = &self.r - &center.beta;
            match self.center_map[j] {
                Some(tgt) => {
                    caps[tgt] += n;
                    cons = &cons * &diff.inv()?.pow_i64(n);
                }
                None => {
                    // The factor (x − r) = lc/X contributes no new pole.
                    cons = &cons * &self.lc.inv()?.pow_i64(n);
                }
            }
        }
        // Ñ(X) = X^{deg N}·N(r + lc/X): reverse the shifted coefficients
        // with powers of lc.
        let shifted = eta.num.compose_affine(&Elem::one(field), &self.r);
        let deg_n = shifted.coeffs().len().saturating_sub(1);
        let mut rev = vec![Elem::zero(field); deg_n + 1];
        let mut lp = Elem::one(field);
        for (k, c) in shifted.coeffs().iter().enumerate() {
            rev[deg_n - k] = c * &lp;
            lp = &lp * &self.lc;
        }
        let mut num = Poly::new(field, rev).scale(&cons);
        let expo = cap_sum + self.d_old / 2 - 2 - deg_n as i64;
        if expo >= 0 {
            num = num.shift_up(expo as usize);
        } else {
            let zero_idx = tgt_ctx_len - 1;
            caps[zero_idx] += -expo;
        }
        Ok(MeroForm::new(num, caps))
    }
}
