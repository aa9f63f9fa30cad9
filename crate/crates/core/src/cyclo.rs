//! Exact arithmetic in `Z[ζ_p]` and `Q(ζ_p)`, in the basis `1, ζ, .., ζ^(p-2)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CyclotomicInt {
    pub p: u64,
    pub coords: Vec<BigInt>,
}

impl CyclotomicInt {
    pub fn zero(p: u64) -> Self {
        CyclotomicInt { p, coords: vec![BigInt::zero(); (p - 1) as usize] }
    }

    pub fn from_int(p: u64, v: i64) -> Self {
        let mut z = Self::zero(p);
        z.coords[0] = BigInt::from(v);
        z
    }

    /// `ζ^k`.
    pub fn zeta_pow(p: u64, k: u64) -> Self {
        let mut full = vec![BigInt::zero(); p as usize];
        full[(k % p) as usize] = BigInt::one();
        Self::from_full(p, full)
    }

    /// Reduce a vector indexed by `ζ^0..ζ^(p-1)` using `Σ ζ^i = 0`.
    pub fn from_full(p: u64, mut full: Vec<BigInt>) -> Self {
        full.resize(p as usize, BigInt::zero());
        let top = full[(p - 1) as usize].clone();
        let coords = full[..(p - 1) as usize].iter().map(|c| c - &top).collect();
        CyclotomicInt { p, coords }
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, o: &Self) -> Self {
        let coords = self.coords.iter().zip(&o.coords).map(|(a, b)| a + b).collect();
        CyclotomicInt { p: self.p, coords }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let coords = self.coords.iter().zip(&o.coords).map(|(a, b)| a - b).collect();
        CyclotomicInt { p: self.p, coords }
    }

    pub fn scale(&self, k: &BigInt) -> Self {
        CyclotomicInt { p: self.p, coords: self.coords.iter().map(|c| c * k).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let p = self.p as usize;
        let mut full = vec![BigInt::zero(); p];
        for (i, a) in self.coords.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coords.iter().enumerate() {
                full[(i + j) % p] += a * b;
            }
        }
        Self::from_full(self.p, full)
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut r = Self::from_int(self.p, 1);
        let mut b = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                r = r.mul(&b);
            }
            b = b.mul(&b);
            e >>= 1;
        }
        r
    }

    pub fn to_rat(&self) -> CyclotomicRat {
        CyclotomicRat { p: self.p, coords: self.coords.iter().map(|c| BigRational::from_integer(c.clone())).collect() }
    }

    /// Human-readable form such as `1 - 2z + z^2`.
    pub fn display(&self) -> String {
        self.to_rat().display()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CyclotomicRat {
    pub p: u64,
    pub coords: Vec<BigRational>,
}

impl CyclotomicRat {
    pub fn zero(p: u64) -> Self {
        CyclotomicRat { p, coords: vec![BigRational::zero(); (p - 1) as usize] }
    }

    pub fn one(p: u64) -> Self {
        let mut z = Self::zero(p);
        z.coords[0] = BigRational::one();
        z
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, o: &Self) -> Self {
        CyclotomicRat { p: self.p, coords: self.coords.iter().zip(&o.coords).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &Self) -> Self {
        CyclotomicRat { p: self.p, coords: self.coords.iter().zip(&o.coords).map(|(a, b)| a - b).collect() }
    }

    pub fn neg(&self) -> Self {
        CyclotomicRat { p: self.p, coords: self.coords.iter().map(|a| -a).collect() }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let p = self.p as usize;
        let mut full = vec![BigRational::zero(); p];
        for (i, a) in self.coords.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.coords.iter().enumerate() {
                full[(i + j) % p] += a * b;
            }
        }
        let top = full[p - 1].clone();
        CyclotomicRat { p: self.p, coords: full[..p - 1].iter().map(|c| c - &top).collect() }
    }

    /// Multiplicative inverse of a nonzero element.
    pub fn inv(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        let n = (self.p - 1) as usize;
        // column j of the multiplication matrix is self * ζ^j
        let mut mat = vec![vec![BigRational::zero(); n + 1]; n];
        let mut col = self.clone();
        let zeta = CyclotomicInt::zeta_pow(self.p, 1).to_rat();
        for j in 0..n {
            for i in 0..n {
                mat[i][j] = col.coords[i].clone();
            }
            col = col.mul(&zeta);
        }
        mat[0][n] = BigRational::one();
        // Gauss-Jordan
        for c in 0..n {
            let piv = (c..n).find(|&r| !mat[r][c].is_zero())?;
            mat.swap(c, piv);
            let inv = BigRational::one() / mat[c][c].clone();
            for k in c..=n {
                mat[c][k] = &mat[c][k] * &inv;
            }
            for r in 0..n {
                if r != c && !mat[r][c].is_zero() {
                    let f = mat[r][c].clone();
                    for k in c..=n {
                        let t = &f * &mat[c][k];
                        mat[r][k] -= t;
                    }
                }
            }
        }
        Some(CyclotomicRat { p: self.p, coords: (0..n).map(|i| mat[i][n].clone()).collect() })
    }

    pub fn to_int(&self) -> Option<CyclotomicInt> {
        if self.coords.iter().all(|c| c.is_integer()) {
            Some(CyclotomicInt { p: self.p, coords: self.coords.iter().map(|c| c.to_integer()).collect() })
        } else {
            None
        }
    }

    pub fn display(&self) -> String {
        let mut parts = Vec::new();
        for (i, c) in self.coords.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let mon = match i {
                0 => String::new(),
                1 => "z".to_string(),
                _ => format!("z^{i}"),
            };
            let s = if mon.is_empty() {
                c.to_string()
            } else if c.is_one() {
                mon
            } else if *c == -BigRational::one() {
                format!("-{mon}")
            } else {
                format!("({c}){mon}")
            };
            parts.push(s);
        }
        if parts.is_empty() {
            "0".into()
        } else {
            parts.join(" + ").replace("+ -", "- ")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_has_order_p() {
        for p in [2u64, 3, 5] {
            let z = CyclotomicInt::zeta_pow(p, 1);
            assert_eq!(z.pow(p), CyclotomicInt::from_int(p, 1));
        }
    }

    #[test]
    fn inverse_of_one_minus_zeta() {
        let p = 5;
        let x = CyclotomicInt::from_int(p, 1).sub(&CyclotomicInt::zeta_pow(p, 1)).to_rat();
        let y = x.inv().unwrap();
        assert_eq!(x.mul(&y), CyclotomicRat::one(p));
    }

    #[test]
    fn gauss_sum_squares_to_minus_three() {
        let p = 3;
        let g = CyclotomicInt::zeta_pow(p, 1).sub(&CyclotomicInt::zeta_pow(p, 2));
        assert_eq!(g.mul(&g), CyclotomicInt::from_int(p, -3));
    }
}
