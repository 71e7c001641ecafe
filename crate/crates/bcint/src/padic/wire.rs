//! JSON wire format for p-adic numbers:
//! `{ "digits": [c_0,...], "val": v, "prec": N, "uniformizer": "pi" }`,
//! digits little-endian in π starting at `π^val`; each digit is a plain
//! integer when the residue field is `F_p`, and a vector of `f_res`
//! integers (coordinates in the `u`-power basis) otherwise.

use serde::{Deserialize, Serialize};

use super::{Elem, FieldRef, PadicError, Result};

/// One digit: scalar for `F_p`, vector for bigger residue fields.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(untagged)]
pub enum WireDigit {
    Scalar(i64),
    Vector(Vec<i64>),
}

/// Serialized p-adic number.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct WireElem {
    pub digits: Vec<WireDigit>,
    pub val: i64,
    pub prec: i64,
    pub uniformizer: String,
}

impl WireElem {
    pub fn from_elem(x: &Elem) -> WireElem {
        let exp = x.digit_expansion(None);
        let digits = exp
            .digits
            .iter()
            .map(|d| {
                if d.len() == 1 {
                    WireDigit::Scalar(d[0])
                } else {
                    WireDigit::Vector(d.clone())
                }
            })
            .collect();
        WireElem {
            digits,
            val: exp.start,
            prec: exp.prec,
            uniformizer: x.field().symbol.clone(),
        }
    }

    pub fn to_elem(&self, field: &FieldRef) -> Result<Elem> {
        let reps = Elem::residue_reps(field);
        let p = field.p as i64;
        let mut acc = Elem::zero(field);
        for (off, d) in self.digits.iter().enumerate() {
            let k = self.val + off as i64;
            let idx = match d {
                WireDigit::Scalar(s) => {
                    if *s < 0 || *s >= p {
                        return Err(PadicError::BadWire(format!(
                            "digit {s} out of range [0,{p})"
                        )));
                    }
                    *s as usize
                }
                WireDigit::Vector(v) => {
                    if v.len() != field.f_res as usize {
                        return Err(PadicError::BadWire(format!(
                            "digit vector length {} ≠ f_res {}",
                            v.len(),
                            field.f_res
                        )));
                    }
                    let mut idx = 0i64;
                    for a in v.iter().rev() {
                        if *a < 0 || *a >= p {
                            return Err(PadicError::BadWire(format!(
                                "digit coordinate {a} out of range [0,{p})"
                            )));
                        }
                        idx = idx * p + a;
                    }
                    idx as usize
                }
            };
            acc = &acc + &(&reps[idx] * &Elem::pi_pow(field, k));
        }
        Ok(acc.with_prec(self.prec))
    }
}
