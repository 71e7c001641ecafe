//! Dense univariate polynomials over `K` — internal plumbing shared by the
//! covering, chart and reduction modules.

use num_rational::BigRational;

use crate::padic::{Elem, FieldRef, PadicError, Result};

/// A polynomial `Σ cᵢ xⁱ` over `K`, stored densely little-endian.
///
/// Trailing coefficients that are *identically* zero are trimmed; a
/// coefficient that is merely zero-at-precision is kept, because dropping
/// it would overstate what we know about the degree.
#[derive(Clone, Debug)]
pub struct Poly {
    field: FieldRef,
    c: Vec<Elem>,
}

impl Poly {
    pub fn new(field: &FieldRef, coeffs: Vec<Elem>) -> Poly {
        let mut p = Poly {
            field: field.clone(),
            c: coeffs,
        };
        p.trim();
        p
    }

    pub fn zero(field: &FieldRef) -> Poly {
        Poly {
            field: field.clone(),
            c: vec![],
        }
    }

    pub fn one(field: &FieldRef) -> Poly {
        Poly::constant(Elem::one(field))
    }

    pub fn constant(c: Elem) -> Poly {
        let field = c.field().clone();
        Poly::new(&field, vec![c])
    }

    /// The monomial `x`.
    pub fn x(field: &FieldRef) -> Poly {
        Poly::new(field, vec![Elem::zero(field), Elem::one(field)])
    }

    /// `x − a`.
    pub fn x_minus(a: &Elem) -> Poly {
        let field = a.field().clone();
        Poly::new(&field, vec![a.negate(), Elem::one(&field)])
    }

    pub fn from_rationals(field: &FieldRef, coeffs: &[BigRational]) -> Poly {
        Poly::new(
            field,
            coeffs.iter().map(|r| Elem::from_rational(field, r)).collect(),
        )
    }

    pub fn from_i64s(field: &FieldRef, coeffs: &[i64]) -> Poly {
        Poly::new(
            field,
            coeffs.iter().map(|&n| Elem::from_i64(field, n)).collect(),
        )
    }

    fn trim(&mut self) {
        while let Some(last) = self.c.last() {
            if last.valuation() >= last.prec() && last.prec() >= self.field.capacity() {
                self.c.pop();
            } else {
                break;
            }
        }
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    /// Degree, counting precision-limited zero coefficients as genuine
    /// (`None` for the zero polynomial).
    pub fn degree(&self) -> Option<usize> {
        if self.c.is_empty() {
            None
        } else {
            Some(self.c.len() - 1)
        }
    }

    /// Degree after dropping leading coefficients that vanish at their
    /// precision.
    pub fn degree_apparent(&self) -> Option<usize> {
        self.c.iter().rposition(|c| !c.is_zero())
    }

    pub fn coeff(&self, i: usize) -> Elem {
        self.c
            .get(i)
            .cloned()
            .unwrap_or_else(|| Elem::zero(&self.field))
    }

    pub fn coeffs(&self) -> &[Elem] {
        &self.c
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|c| c.is_zero())
    }

    pub fn eval(&self, x: &Elem) -> Elem {
        let mut acc = Elem::zero(&self.field);
        for c in self.c.iter().rev() {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.c.len() <= 1 {
            return Poly::zero(&self.field);
        }
        let c = self
            .c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, ci)| ci.mul_i64(i as i64))
            .collect();
        Poly::new(&self.field, c)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.c.len().max(other.c.len());
        let mut c = Vec::with_capacity(n);
        for i in 0..n {
            c.push(&self.coeff(i) + &other.coeff(i));
        }
        Poly::new(&self.field, c)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let n = self.c.len().max(other.c.len());
        let mut c = Vec::with_capacity(n);
        for i in 0..n {
            c.push(&self.coeff(i) - &other.coeff(i));
        }
        Poly::new(&self.field, c)
    }

    pub fn neg(&self) -> Poly {
        Poly::new(&self.field, self.c.iter().map(|c| c.negate()).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.c.is_empty() || other.c.is_empty() {
            return Poly::zero(&self.field);
        }
        let mut c = vec![Elem::zero(&self.field); self.c.len() + other.c.len() - 1];
        for (i, a) in self.c.iter().enumerate() {
            for (j, b) in other.c.iter().enumerate() {
                c[i + j] = &c[i + j] + &(a * b);
            }
        }
        Poly::new(&self.field, c)
    }

    pub fn scale(&self, s: &Elem) -> Poly {
        Poly::new(&self.field, self.c.iter().map(|c| c * s).collect())
    }

    /// Multiply by `x^k`.
    pub fn shift_up(&self, k: usize) -> Poly {
        if self.c.is_empty() {
            return self.clone();
        }
        let mut c = vec![Elem::zero(&self.field); k];
        c.extend(self.c.iter().cloned());
        Poly::new(&self.field, c)
    }

    /// Substitute `x ↦ a·x + b`.
    pub fn compose_affine(&self, a: &Elem, b: &Elem) -> Poly {
        let lin = Poly::new(&self.field, vec![b.clone(), a.clone()]);
        let mut acc = Poly::zero(&self.field);
        for c in self.c.iter().rev() {
            acc = acc.mul(&lin).add(&Poly::constant(c.clone()));
        }
        acc
    }

    /// Quotient and remainder by a divisor whose leading coefficient is a
    /// unit (errors otherwise — we never divide by precision-ambiguous
    /// leading terms).
    pub fn divmod(&self, div: &Poly) -> Result<(Poly, Poly)> {
        let dd = div
            .degree_apparent()
            .ok_or(PadicError::DivisionByZero { val: 0, prec: 0 })?;
        let lead = div.coeff(dd);
        let lead_inv = lead.inv()?;
        let mut rem: Vec<Elem> = self.c.clone();
        let mut quo = vec![Elem::zero(&self.field); self.c.len().saturating_sub(dd)];
        while rem.len() > dd {
            let k = rem.len() - 1;
            let q = &rem[k] * &lead_inv;
            if !q.is_zero() {
                for i in 0..=dd {
                    let t = &q * &div.coeff(i);
                    rem[k - dd + i] = &rem[k - dd + i] - &t;
                }
            }
            quo[k - dd] = q;
            rem.pop();
        }
        Ok((Poly::new(&self.field, quo), Poly::new(&self.field, rem)))
    }

    /// `∏ (x − rᵢ)`.
    pub fn from_roots(field: &FieldRef, roots: &[Elem]) -> Poly {
        let mut acc = Poly::one(field);
        for r in roots {
            acc = acc.mul(&Poly::x_minus(r));
        }
        acc
    }

    /// Formal antiderivative with zero constant term.
    pub fn antiderivative(&self) -> Result<Poly> {
        let mut c = vec![Elem::zero(&self.field)];
        for (i, ci) in self.c.iter().enumerate() {
            c.push(ci.div_i64(i as i64 + 1)?);
        }
        Ok(Poly::new(&self.field, c))
    }
}
