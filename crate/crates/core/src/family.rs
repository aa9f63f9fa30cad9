//! One-parameter (or multi-parameter) Laurent families `f(Λ, X)` over `F_q`.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffield::FiniteField;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub r: Vec<i64>,
    pub u: Vec<i64>,
    /// Coefficient as an encoded element of `F_q` (base-`p` digits packed).
    pub coeff: u32,
}

#[derive(Clone, Debug)]
pub struct LaurentFamily {
    pub p: u64,
    pub a: usize,
    pub s: usize,
    pub n: usize,
    pub terms: Vec<Term>,
    field: Arc<FiniteField>,
}

pub fn weight(v: &[i64]) -> i64 {
    v.iter().map(|x| x.abs()).sum()
}

impl LaurentFamily {
    pub fn new(p: u64, a: usize, s: usize, n: usize, terms: Vec<Term>) -> Result<Self> {
        let field = FiniteField::get(p, a)?;
        if terms.is_empty() {
            return Err(Error::InvalidParameter("family has no terms".into()));
        }
        let mut seen = BTreeSet::new();
        for t in &terms {
            if t.r.len() != s || t.u.len() != n {
                return Err(Error::InvalidParameter("term exponent has wrong length".into()));
            }
            if t.coeff == 0 || t.coeff as u64 >= field.size {
                return Err(Error::InvalidParameter("coefficient must be a nonzero field element".into()));
            }
            if !seen.insert((t.r.clone(), t.u.clone())) {
                return Err(Error::InvalidParameter(format!("duplicate term {:?} {:?}", t.r, t.u)));
            }
        }
        Ok(LaurentFamily { p, a, s, n, terms, field })
    }

    /// Builds a family from `(r, u, coefficient string)` triples.
    pub fn from_spec(p: u64, a: usize, spec: &[(Vec<i64>, Vec<i64>, &str)]) -> Result<Self> {
        let field = FiniteField::get(p, a)?;
        let (s, n) = spec.first().map(|(r, u, _)| (r.len(), u.len())).unwrap_or((0, 0));
        let terms = spec
            .iter()
            .map(|(r, u, c)| Ok(Term { r: r.clone(), u: u.clone(), coeff: parse_coeff(&field, c)? }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(p, a, s, n, terms)
    }

    pub fn field(&self) -> &Arc<FiniteField> {
        &self.field
    }

    pub fn q(&self) -> u64 {
        self.p.pow(self.a as u32)
    }

    pub fn omega1(&self) -> i64 {
        self.terms.iter().map(|t| weight(&t.r)).max().unwrap_or(0)
    }

    pub fn omega2(&self) -> i64 {
        self.terms.iter().map(|t| weight(&t.u)).max().unwrap_or(0)
    }

    /// Discrete log of each coefficient in `F_q`.
    pub fn coeff_logs(&self) -> Vec<u64> {
        self.terms.iter().map(|t| self.field.log(t.coeff).expect("nonzero")).collect()
    }

    /// Base-`p` digits of each coefficient.
    pub fn coeff_digits(&self) -> Vec<Vec<u64>> {
        self.terms.iter().map(|t| self.field.digits(t.coeff)).collect()
    }

    /// True when every coefficient lies in the prime field.
    pub fn coefficients_in_prime_field(&self) -> bool {
        self.terms.iter().all(|t| (t.coeff as u64) < self.p)
    }

    pub fn lambda_supports(&self) -> Vec<Vec<i64>> {
        self.terms.iter().map(|t| t.r.clone()).collect()
    }

    pub fn x_supports(&self) -> Vec<Vec<i64>> {
        self.terms.iter().map(|t| t.u.clone()).collect()
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        for t in &self.terms {
            let c = coeff_string(&self.field, t.coeff);
            parts.push(format!("{c}*L^{:?}*X^{:?}", t.r, t.u));
        }
        parts.join(" + ")
    }
}

/// Parses `"g^k"`, `"g"`, or an integer naming an element of the prime field.
pub fn parse_coeff(field: &FiniteField, s: &str) -> Result<u32> {
    let s = s.trim();
    let bad = || Error::Parse(format!("malformed coefficient {s:?}"));
    let v = if s == "g" {
        field.gen
    } else if let Some(e) = s.strip_prefix("g^") {
        let k: i64 = e.trim().parse().map_err(|_| bad())?;
        field.exp(k.rem_euclid(field.order() as i64) as u64)
    } else {
        let k: i64 = s.parse().map_err(|_| bad())?;
        k.rem_euclid(field.p as i64) as u32
    };
    if v == 0 {
        return Err(Error::Parse(format!("coefficient {s:?} is zero")));
    }
    Ok(v)
}

pub fn coeff_string(field: &FiniteField, c: u32) -> String {
    if (c as u64) < field.p {
        c.to_string()
    } else {
        format!("g^{}", field.log(c).unwrap_or(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kloosterman_family_data() {
        let f = LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap();
        assert_eq!(f.omega1(), 1);
        assert_eq!(f.omega2(), 1);
        assert!(f.coefficients_in_prime_field());
    }

    #[test]
    fn rejects_duplicates_and_bad_coefficients() {
        let dup = LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1"), (vec![1], vec![1], "2")]);
        assert!(dup.is_err());
        let f9 = FiniteField::get(3, 2).unwrap();
        assert!(matches!(parse_coeff(&f9, "h^2"), Err(Error::Parse(_))));
        assert!(matches!(parse_coeff(&f9, "3"), Err(Error::Parse(_))));
        assert_eq!(parse_coeff(&f9, "g^8").unwrap(), 1);
    }
}
