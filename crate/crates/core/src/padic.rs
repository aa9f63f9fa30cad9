//! Arithmetic in `Z_q = Z_p[t]/(h)` and in the totally ramified extension
//! `O = Z_q[π]`, `π^(p-1) = -p`, at a fixed working precision `p^N`.
//!
//! Every `Z_q` coordinate is stored as an integer in `[0, p^N)`.  Products are
//! accumulated unreduced in `u128` and reduced once, which needs `p^N < 2^40`.

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cyclo::CyclotomicInt;
use crate::error::{Error, Result};
use crate::ffield::{is_irreducible, is_prime, smallest_irreducible};

/// Largest supported unramified degree.
pub const MAX_A: usize = 12;
/// Largest supported ramification index `p - 1`.
pub const MAX_E: usize = 4;
const MODULUS_BITS: u32 = 40;

pub type Coords = [u64; MAX_A];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UnramifiedElement {
    pub coeffs: Coords,
    /// Known modulo `p^prec`.
    pub prec: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EisensteinElement {
    /// `comps[j]` is the `Z_q` coordinate of `π^j`, `j < p - 1`.
    pub comps: [Coords; MAX_E],
    /// Known modulo `π^prec_pi`.
    pub prec_pi: u32,
}

/// Unreduced accumulator for sums of products.
pub struct Acc {
    v: [[u128; 2 * MAX_A]; 2 * MAX_E],
    prec: u32,
}

#[derive(Clone, Debug)]
pub struct FieldContext {
    pub p: u64,
    pub a: usize,
    /// Working precision: values are kept mod `p^n`.
    pub n: u32,
    pub modulus: u64,
    /// `p - 1`.
    pub e: usize,
    /// `[h_0, .., h_{a-1}]`, monic of degree `a`.
    pub h: Vec<u64>,
    neg_h: Coords,
    pow_p: Vec<u64>,
    /// `σ(t)^i` for `i < a`.
    sigma_pows: Vec<Coords>,
}

pub fn make_field_context(p: u64, a: usize, n: u32) -> Result<FieldContext> {
    if !is_prime(p) {
        return Err(Error::NotPrime(p));
    }
    let h = if a >= 1 { smallest_irreducible(p, a) } else { Vec::new() };
    FieldContext::with_poly(p, a, n, h)
}

impl FieldContext {
    pub fn with_poly(p: u64, a: usize, n: u32, h: Vec<u64>) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if p > 5 {
            return Err(Error::UnsupportedPrime(p));
        }
        if a == 0 || a > MAX_A {
            return Err(Error::InvalidParameter(format!("extension degree {a} outside 1..={MAX_A}")));
        }
        if n == 0 {
            return Err(Error::InvalidParameter("precision must be positive".into()));
        }
        if (n as f64) * (p as f64).log2() > MODULUS_BITS as f64 {
            return Err(Error::InvalidParameter(format!("p^N = {p}^{n} exceeds 2^{MODULUS_BITS}")));
        }
        if h.len() != a {
            return Err(Error::InvalidParameter("defining polynomial has wrong degree".into()));
        }
        let mut full: Vec<u64> = h.iter().map(|c| c % p).collect();
        full.push(1);
        if !is_irreducible(&full, p) {
            return Err(Error::NotIrreducible);
        }
        let modulus = p.pow(n);
        let mut neg_h = [0u64; MAX_A];
        for (j, &c) in h.iter().enumerate() {
            neg_h[j] = (modulus - c % p) % modulus;
        }
        let pow_p = (0..=n).map(|i| p.pow(i)).collect();
        let mut ctx = FieldContext {
            p,
            a,
            n,
            modulus,
            e: (p - 1) as usize,
            h: h.iter().map(|c| c % p).collect(),
            neg_h,
            pow_p,
            sigma_pows: Vec::new(),
        };
        ctx.sigma_pows = ctx.compute_sigma_pows();
        Ok(ctx)
    }

    /// Full π-adic precision of the context.
    pub fn prec_pi(&self) -> u32 {
        self.e as u32 * self.n
    }

    pub fn q(&self) -> u64 {
        self.p.pow(self.a as u32)
    }

    // ------------------------------------------------------------------
    // Z_q level

    fn zq_mul(&self, x: &Coords, y: &Coords) -> Coords {
        let a = self.a;
        let mut acc = [0u128; 2 * MAX_A];
        for i in 0..a {
            if x[i] == 0 {
                continue;
            }
            for j in 0..a {
                acc[i + j] += x[i] as u128 * y[j] as u128;
            }
        }
        self.reduce_t(&mut acc)
    }

    fn reduce_t(&self, acc: &mut [u128; 2 * MAX_A]) -> Coords {
        let a = self.a;
        let m = self.modulus as u128;
        for k in (a..2 * a - 1).rev() {
            let v = acc[k] % m;
            acc[k] = 0;
            if v == 0 {
                continue;
            }
            for j in 0..a {
                acc[k - a + j] += v * self.neg_h[j] as u128;
            }
        }
        let mut out = [0u64; MAX_A];
        for i in 0..a {
            out[i] = (acc[i] % m) as u64;
        }
        out
    }

    fn zq_add(&self, x: &Coords, y: &Coords) -> Coords {
        let mut out = [0u64; MAX_A];
        for i in 0..self.a {
            let s = x[i] + y[i];
            out[i] = if s >= self.modulus { s - self.modulus } else { s };
        }
        out
    }

    fn zq_sub(&self, x: &Coords, y: &Coords) -> Coords {
        let mut out = [0u64; MAX_A];
        for i in 0..self.a {
            out[i] = if x[i] >= y[i] { x[i] - y[i] } else { x[i] + self.modulus - y[i] };
        }
        out
    }

    fn zq_pow(&self, x: &Coords, mut e: u64) -> Coords {
        let mut r = [0u64; MAX_A];
        r[0] = 1;
        let mut b = *x;
        while e > 0 {
            if e & 1 == 1 {
                r = self.zq_mul(&r, &b);
            }
            b = self.zq_mul(&b, &b);
            e >>= 1;
        }
        r
    }

    fn zq_from_int(&self, v: i64) -> Coords {
        let mut out = [0u64; MAX_A];
        out[0] = v.rem_euclid(self.modulus as i64) as u64;
        out
    }

    fn vp_u64(&self, mut x: u64) -> u32 {
        if x == 0 {
            return u32::MAX;
        }
        let mut v = 0;
        while x % self.p == 0 {
            x /= self.p;
            v += 1;
        }
        v
    }

    fn zq_val(&self, x: &Coords) -> u32 {
        x[..self.a].iter().map(|&c| self.vp_u64(c)).min().unwrap_or(u32::MAX)
    }

    /// Inverse of a `Z_q` unit.
    fn zq_inv(&self, x: &Coords) -> Result<Coords> {
        if self.zq_val(x) != 0 {
            return Err(Error::NonUnitDivision);
        }
        // x^(q-2) inverts mod p; Newton lifts the rest.
        let mut y = self.zq_pow(x, self.q() - 2);
        let two = self.zq_from_int(2);
        let mut prec = 1u32;
        while prec < self.n {
            let xy = self.zq_mul(x, &y);
            y = self.zq_mul(&y, &self.zq_sub(&two, &xy));
            prec *= 2;
        }
        Ok(y)
    }

    fn zq_eval_poly(&self, poly: &[u64], x: &Coords) -> Coords {
        // Horner, poly lowest first
        let mut acc = [0u64; MAX_A];
        for &c in poly.iter().rev() {
            acc = self.zq_add(&self.zq_mul(&acc, x), &self.zq_from_int(c as i64));
        }
        acc
    }

    fn compute_sigma_pows(&self) -> Vec<Coords> {
        let a = self.a;
        let mut full: Vec<u64> = self.h.clone();
        full.push(1);
        let deriv: Vec<u64> = (1..full.len()).map(|i| full[i] * i as u64 % self.modulus).collect();
        let mut t = [0u64; MAX_A];
        if a > 1 {
            t[1] = 1;
        }
        // root of h congruent to t^p
        let mut s = self.zq_pow(&t, self.p);
        for _ in 0..(2 * self.n + 2) {
            let hv = self.zq_eval_poly(&full, &s);
            let dv = self.zq_eval_poly(&deriv, &s);
            let dinv = self.zq_inv(&dv).expect("h separable mod p");
            s = self.zq_sub(&s, &self.zq_mul(&hv, &dinv));
        }
        let mut pows = Vec::with_capacity(a);
        let mut cur = self.zq_from_int(1);
        for _ in 0..a {
            pows.push(cur);
            cur = self.zq_mul(&cur, &s);
        }
        pows
    }

    // ------------------------------------------------------------------
    // UnramifiedElement

    pub fn unram_from_coords(&self, coeffs: &[u64]) -> UnramifiedElement {
        let mut c = [0u64; MAX_A];
        for (i, &v) in coeffs.iter().enumerate().take(self.a) {
            c[i] = v % self.modulus;
        }
        UnramifiedElement { coeffs: c, prec: self.n }
    }

    pub fn unram_mul(&self, x: &UnramifiedElement, y: &UnramifiedElement) -> UnramifiedElement {
        self.unram_norm(UnramifiedElement { coeffs: self.zq_mul(&x.coeffs, &y.coeffs), prec: x.prec.min(y.prec) })
    }

    pub fn unram_add(&self, x: &UnramifiedElement, y: &UnramifiedElement) -> UnramifiedElement {
        self.unram_norm(UnramifiedElement { coeffs: self.zq_add(&x.coeffs, &y.coeffs), prec: x.prec.min(y.prec) })
    }

    pub fn unram_pow(&self, x: &UnramifiedElement, e: u64) -> UnramifiedElement {
        self.unram_norm(UnramifiedElement { coeffs: self.zq_pow(&x.coeffs, e), prec: x.prec })
    }

    fn unram_norm(&self, mut x: UnramifiedElement) -> UnramifiedElement {
        if x.prec < self.n {
            let m = self.pow_p[x.prec as usize];
            for c in x.coeffs[..self.a].iter_mut() {
                *c %= m;
            }
        }
        x
    }

    /// Teichmüller lift of a residue-field element given by its `a` base-`p`
    /// coordinates.  `teichmuller(0) = 0`.
    pub fn teichmuller(&self, residue: &[u64]) -> UnramifiedElement {
        let mut y = self.unram_from_coords(&residue.iter().map(|d| d % self.p).collect::<Vec<_>>());
        let q = self.q();
        for _ in 0..self.n {
            y = self.unram_pow(&y, q);
        }
        y
    }

    /// Witt-vector Frobenius: the ring automorphism lifting `x ↦ x^p`.
    pub fn frobenius_sigma(&self, x: &UnramifiedElement) -> UnramifiedElement {
        UnramifiedElement { coeffs: self.sigma_coords(&x.coeffs), prec: x.prec }
    }

    fn sigma_coords(&self, x: &Coords) -> Coords {
        let mut acc = [0u128; 2 * MAX_A];
        let m = self.modulus as u128;
        for i in 0..self.a {
            if x[i] == 0 {
                continue;
            }
            for j in 0..self.a {
                acc[j] += x[i] as u128 * self.sigma_pows[i][j] as u128;
            }
        }
        let mut out = [0u64; MAX_A];
        for j in 0..self.a {
            out[j] = (acc[j] % m) as u64;
        }
        out
    }

    /// Residue of a `Z_q` element as `a` base-`p` coordinates.
    pub fn unram_residue(&self, x: &UnramifiedElement) -> Vec<u64> {
        x.coeffs[..self.a].iter().map(|c| c % self.p).collect()
    }

    // ------------------------------------------------------------------
    // EisensteinElement

    pub fn zero(&self) -> EisensteinElement {
        EisensteinElement { comps: [[0; MAX_A]; MAX_E], prec_pi: self.prec_pi() }
    }

    pub fn one(&self) -> EisensteinElement {
        self.from_int(1)
    }

    pub fn from_int(&self, v: i64) -> EisensteinElement {
        let mut z = self.zero();
        z.comps[0] = self.zq_from_int(v);
        z
    }

    pub fn from_bigint(&self, v: &BigInt) -> EisensteinElement {
        let m = BigInt::from(self.modulus);
        let r = v.mod_floor(&m).to_u64().unwrap();
        let mut z = self.zero();
        z.comps[0][0] = r;
        z
    }

    pub fn from_unram(&self, u: &UnramifiedElement) -> EisensteinElement {
        let mut z = self.zero();
        z.comps[0] = u.coeffs;
        z.prec_pi = (u.prec * self.e as u32).min(self.prec_pi());
        self.normalize(z)
    }

    /// `x` scaled down to precision `prec_pi`.
    pub fn with_prec(&self, mut x: EisensteinElement, prec_pi: u32) -> EisensteinElement {
        x.prec_pi = x.prec_pi.min(prec_pi);
        self.normalize(x)
    }

    pub fn normalize(&self, mut x: EisensteinElement) -> EisensteinElement {
        if x.prec_pi >= self.prec_pi() {
            x.prec_pi = self.prec_pi();
            return x;
        }
        let e = self.e as u32;
        let k = x.prec_pi / e;
        let j = (x.prec_pi % e) as usize;
        for (i, comp) in x.comps[..self.e].iter_mut().enumerate() {
            let m = self.pow_p[(k + u32::from(i < j)) as usize];
            for c in comp[..self.a].iter_mut() {
                *c %= m;
            }
        }
        x
    }

    pub fn pi(&self) -> EisensteinElement {
        if self.e == 1 {
            self.from_int(-(self.p as i64))
        } else {
            let mut z = self.zero();
            z.comps[1][0] = 1;
            z
        }
    }

    /// `π^k`, zero once `k` exceeds the working precision.
    pub fn pi_pow(&self, k: u64) -> EisensteinElement {
        if k >= self.prec_pi() as u64 {
            return self.zero();
        }
        let e = self.e as u64;
        let (q, r) = (k / e, (k % e) as usize);
        // π^k = (-p)^q π^r
        let mut z = self.zero();
        let mag = self.pow_p[q as usize] % self.modulus;
        let val = if q % 2 == 1 { (self.modulus - mag) % self.modulus } else { mag };
        if self.e == 1 {
            // π = -p itself
            return self.from_int(if q % 2 == 1 { -(mag as i64) } else { mag as i64 });
        }
        z.comps[r][0] = val;
        z
    }

    pub fn add(&self, x: &EisensteinElement, y: &EisensteinElement) -> EisensteinElement {
        let mut z = self.zero();
        for j in 0..self.e {
            z.comps[j] = self.zq_add(&x.comps[j], &y.comps[j]);
        }
        z.prec_pi = x.prec_pi.min(y.prec_pi);
        self.normalize(z)
    }

    pub fn sub(&self, x: &EisensteinElement, y: &EisensteinElement) -> EisensteinElement {
        let mut z = self.zero();
        for j in 0..self.e {
            z.comps[j] = self.zq_sub(&x.comps[j], &y.comps[j]);
        }
        z.prec_pi = x.prec_pi.min(y.prec_pi);
        self.normalize(z)
    }

    pub fn neg(&self, x: &EisensteinElement) -> EisensteinElement {
        let mut z = self.zero();
        z.prec_pi = x.prec_pi;
        self.sub(&z, x)
    }

    pub fn new_acc(&self) -> Acc {
        Acc { v: [[0u128; 2 * MAX_A]; 2 * MAX_E], prec: self.prec_pi() }
    }

    /// `acc += x * y` without reduction.
    #[inline]
    pub fn mul_acc(&self, acc: &mut Acc, x: &EisensteinElement, y: &EisensteinElement) {
        acc.prec = acc.prec.min(x.prec_pi).min(y.prec_pi);
        let (e, a) = (self.e, self.a);
        if a == 1 {
            for j1 in 0..e {
                let xv = x.comps[j1][0] as u128;
                if xv == 0 {
                    continue;
                }
                for j2 in 0..e {
                    acc.v[j1 + j2][0] += xv * y.comps[j2][0] as u128;
                }
            }
            return;
        }
        for j1 in 0..e {
            for i1 in 0..a {
                let xv = x.comps[j1][i1] as u128;
                if xv == 0 {
                    continue;
                }
                for j2 in 0..e {
                    let row = &mut acc.v[j1 + j2];
                    let yc = &y.comps[j2];
                    for i2 in 0..a {
                        row[i1 + i2] += xv * yc[i2] as u128;
                    }
                }
            }
        }
    }

    /// Guard against overflow in long accumulations.
    #[inline]
    pub fn acc_fold(&self, acc: &mut Acc) {
        let m = self.modulus as u128;
        for row in acc.v[..2 * self.e - 1].iter_mut() {
            for c in row[..2 * self.a - 1].iter_mut() {
                *c %= m;
            }
        }
    }

    pub fn acc_finish(&self, acc: &mut Acc) -> EisensteinElement {
        let (e, a) = (self.e, self.a);
        let m = self.modulus as u128;
        let negp = (self.modulus - self.p % self.modulus) as u128;
        for jj in (e..2 * e - 1).rev() {
            for i in 0..2 * a - 1 {
                let v = acc.v[jj][i] % m;
                acc.v[jj][i] = 0;
                if v != 0 {
                    acc.v[jj - e][i] += v * negp;
                }
            }
        }
        let mut z = self.zero();
        for j in 0..e {
            let mut row = [0u128; 2 * MAX_A];
            row[..2 * a - 1].copy_from_slice(&acc.v[j][..2 * a - 1]);
            z.comps[j] = self.reduce_t(&mut row);
        }
        z.prec_pi = acc.prec;
        self.normalize(z)
    }

    pub fn mul(&self, x: &EisensteinElement, y: &EisensteinElement) -> EisensteinElement {
        let mut acc = self.new_acc();
        self.mul_acc(&mut acc, x, y);
        self.acc_finish(&mut acc)
    }

    pub fn mul_unram(&self, x: &EisensteinElement, u: &UnramifiedElement) -> EisensteinElement {
        self.mul(x, &self.from_unram(u))
    }

    pub fn pow(&self, x: &EisensteinElement, mut k: u64) -> EisensteinElement {
        let mut r = self.with_prec(self.one(), x.prec_pi);
        let mut b = *x;
        while k > 0 {
            if k & 1 == 1 {
                r = self.mul(&r, &b);
            }
            k >>= 1;
            if k > 0 {
                b = self.mul(&b, &b);
            }
        }
        r
    }

    /// π-adic valuation, capped at the known precision.
    pub fn ord_pi(&self, x: &EisensteinElement) -> u32 {
        let mut best = x.prec_pi;
        for j in 0..self.e {
            let v = self.zq_val(&x.comps[j]);
            if v != u32::MAX {
                best = best.min(v.saturating_mul(self.e as u32).saturating_add(j as u32));
            }
        }
        best
    }

    pub fn is_zero(&self, x: &EisensteinElement) -> bool {
        self.ord_pi(x) >= x.prec_pi
    }

    /// Number of leading π-digits on which `x` and `y` agree.
    pub fn agreement(&self, x: &EisensteinElement, y: &EisensteinElement) -> u32 {
        self.ord_pi(&self.sub(x, y))
    }

    pub fn is_unit(&self, x: &EisensteinElement) -> bool {
        self.ord_pi(x) == 0 && x.prec_pi > 0
    }

    pub fn is_one_unit(&self, x: &EisensteinElement) -> bool {
        self.ord_pi(&self.sub(x, &self.one())) >= 1
    }

    pub fn inv(&self, x: &EisensteinElement) -> Result<EisensteinElement> {
        if !self.is_unit(x) {
            return Err(Error::NonUnitDivision);
        }
        let c0 = self.zq_inv(&x.comps[0])?;
        let mut y = self.zero();
        y.comps[0] = c0;
        y.prec_pi = x.prec_pi;
        let two = self.from_int(2);
        let mut prec = 1u32;
        while prec < self.prec_pi() {
            let xy = self.mul(x, &y);
            y = self.mul(&y, &self.sub(&two, &xy));
            prec *= 2;
        }
        // one more step absorbs the truncated start
        let xy = self.mul(x, &y);
        y = self.mul(&y, &self.sub(&two, &xy));
        Ok(self.with_prec(y, x.prec_pi))
    }

    pub fn div(&self, x: &EisensteinElement, y: &EisensteinElement) -> Result<EisensteinElement> {
        Ok(self.mul(x, &self.inv(y)?))
    }

    /// `x / π^k`; requires `ord_π(x) ≥ k`.  Precision drops by `k`.
    pub fn div_pi_pow(&self, x: &EisensteinElement, k: u32) -> Result<EisensteinElement> {
        if k == 0 {
            return Ok(*x);
        }
        if self.ord_pi(x) < k {
            return Err(Error::NonUnitDivision);
        }
        let mut cur = *x;
        for _ in 0..k {
            cur = self.div_pi_once(&cur);
        }
        Ok(cur)
    }

    fn div_pi_once(&self, x: &EisensteinElement) -> EisensteinElement {
        // x/π = -x·π^(e-1)/p: coordinate j ≥ 1 moves down, coordinate 0 wraps
        let m = self.modulus;
        let mut z = self.zero();
        for j in 1..self.e {
            z.comps[j - 1] = x.comps[j];
        }
        for i in 0..self.a {
            let c = x.comps[0][i] / self.p;
            z.comps[self.e - 1][i] = (m - c % m) % m;
        }
        z.prec_pi = x.prec_pi.saturating_sub(1);
        self.normalize(z)
    }

    /// Exact quotient `x / k` for a nonzero integer `k`, valid when the true
    /// quotient is integral.  Loses `v_p(k)` p-digits of precision.
    pub fn div_int(&self, x: &EisensteinElement, k: i64) -> Result<EisensteinElement> {
        if k == 0 {
            return Err(Error::NonUnitDivision);
        }
        let mut v = 0u32;
        let mut u = k.unsigned_abs();
        while u % self.p == 0 {
            u /= self.p;
            v += 1;
        }
        let mut unit = self.from_int(u as i64);
        if k < 0 {
            unit = self.neg(&unit);
        }
        let y = self.mul(x, &self.inv(&unit)?);
        // divide by p^v = (-1)^v π^(e v)
        let mut z = self.div_pi_pow(&y, v * self.e as u32)?;
        if v % 2 == 1 {
            z = self.neg(&z);
        }
        Ok(z)
    }

    /// `π^i / i!`, an integral element of ord `i - (p-1)v_p(i!)`.
    pub fn pi_pow_over_factorial(&self, i: u64) -> EisensteinElement {
        let mut v = 0u64;
        let mut unit: u128 = 1;
        let m = self.modulus as u128;
        for j in 1..=i {
            let mut t = j;
            while t % self.p == 0 {
                t /= self.p;
                v += 1;
            }
            unit = unit * t as u128 % m;
        }
        let exp = i - (self.p - 1) * v;
        let u = self.from_int(unit as i64);
        let uinv = self.inv(&u).expect("unit");
        let mut z = self.mul(&self.pi_pow(exp), &uinv);
        if v % 2 == 1 {
            z = self.neg(&z);
        }
        z
    }

    /// Apply σ to every `Z_q` coordinate.
    pub fn sigma(&self, x: &EisensteinElement) -> EisensteinElement {
        let mut z = *x;
        for j in 0..self.e {
            z.comps[j] = self.sigma_coords(&x.comps[j]);
        }
        z
    }

    pub fn sigma_pow(&self, x: &EisensteinElement, k: usize) -> EisensteinElement {
        let mut z = *x;
        for _ in 0..(k % self.a) {
            z = self.sigma(&z);
        }
        z
    }

    /// Residue class mod π as `a` base-`p` coordinates.
    pub fn residue(&self, x: &EisensteinElement) -> Vec<u64> {
        x.comps[0][..self.a].iter().map(|c| c % self.p).collect()
    }

    /// True when `x` lies in `Z_p[π]` up to its precision.
    pub fn in_base_subring(&self, x: &EisensteinElement) -> bool {
        (0..self.e).all(|j| {
            let mut c = x.comps[j];
            c[0] = 0;
            let v = self.zq_val(&c);
            v == u32::MAX || v.saturating_mul(self.e as u32) + j as u32 >= x.prec_pi
        })
    }

    /// Reinterpret an element of `Z_p[π]` inside `target` (same `p`).
    pub fn transfer(&self, x: &EisensteinElement, target: &FieldContext) -> EisensteinElement {
        let mut z = target.zero();
        for j in 0..self.e {
            z.comps[j][0] = x.comps[j][0] % target.modulus;
        }
        z.prec_pi = x.prec_pi.min(target.prec_pi());
        target.normalize(z)
    }

    /// Image of an element of `small`'s ring under the embedding
    /// `Z_{q_small} → Z_{q_self}` sending `t` to `t_image`.
    pub fn embed_from(
        &self,
        small: &FieldContext,
        x: &EisensteinElement,
        t_image: &UnramifiedElement,
    ) -> EisensteinElement {
        let mut pows = Vec::with_capacity(small.a);
        let mut cur = self.unram_from_coords(&[1]);
        for _ in 0..small.a {
            pows.push(cur);
            cur = self.unram_mul(&cur, t_image);
        }
        let mut z = self.zero();
        for j in 0..self.e {
            let mut acc = [0u64; MAX_A];
            for (i, pw) in pows.iter().enumerate() {
                let c = self.zq_from_int((x.comps[j][i] % self.modulus) as i64);
                acc = self.zq_add(&acc, &self.zq_mul(&c, &pw.coeffs));
            }
            z.comps[j] = acc;
        }
        z.prec_pi = x.prec_pi.min(self.prec_pi());
        self.normalize(z)
    }

    /// Hensel lift of the root of `small.h` reducing to `residue_root`.
    pub fn lift_root_of(&self, small: &FieldContext, residue_root: &[u64]) -> UnramifiedElement {
        let mut full: Vec<u64> = small.h.clone();
        full.push(1);
        let deriv: Vec<u64> = (1..full.len()).map(|i| full[i] * i as u64).collect();
        let mut s = self.unram_from_coords(residue_root).coeffs;
        for _ in 0..(2 * self.n + 2) {
            let hv = self.zq_eval_poly(&full, &s);
            let dv = self.zq_eval_poly(&deriv, &s);
            let dinv = self.zq_inv(&dv).expect("separable");
            s = self.zq_sub(&s, &self.zq_mul(&hv, &dinv));
        }
        UnramifiedElement { coeffs: s, prec: self.n }
    }

    // ------------------------------------------------------------------
    // splitting function and ζ_p

    /// Largest index whose guaranteed valuation stays below the precision.
    pub fn theta_useful_len(&self) -> usize {
        let p = self.p as u64;
        let e = self.e as u64;
        let prec = self.prec_pi() as u64;
        // ord_π θ_i ≥ (p-1)^2 i / p^2
        ((prec * p * p) / (e * e)) as usize + 1
    }

    /// `θ_0..=θ_{i_max}` of `Θ(T) = exp π(T - T^p)`.
    pub fn theta_coeffs(&self, i_max: usize) -> Result<Vec<EisensteinElement>> {
        let p = self.p as usize;
        let e = self.e as u64;
        if i_max > 0 && (e * e * i_max as u64) >= self.prec_pi() as u64 * (p as u64 * p as u64) * 4 {
            return Err(Error::PrecisionExhausted(format!(
                "θ_{i_max} and its neighbours vanish at precision π^{}",
                self.prec_pi()
            )));
        }
        Ok(self.theta_unchecked(i_max))
    }

    pub(crate) fn theta_unchecked(&self, i_max: usize) -> Vec<EisensteinElement> {
        let p = self.p as usize;
        let fwd: Vec<EisensteinElement> = (0..=i_max).map(|j| self.pi_pow_over_factorial(j as u64)).collect();
        let mut out = Vec::with_capacity(i_max + 1);
        for i in 0..=i_max {
            let mut acc = self.zero();
            let mut k = 0;
            while p * k <= i {
                let mut term = self.mul(&fwd[i - p * k], &fwd[k]);
                if k % 2 == 1 {
                    term = self.neg(&term);
                }
                acc = self.add(&acc, &term);
                k += 1;
            }
            out.push(acc);
        }
        out
    }

    /// `Θ(1)`, the image of `ζ_p`.
    pub fn zeta_image(&self) -> EisensteinElement {
        let th = self.theta_unchecked(self.theta_useful_len());
        th.iter().fold(self.zero(), |acc, t| self.add(&acc, t))
    }

    pub fn zeta_p_embed(&self, c: &CyclotomicInt) -> Result<EisensteinElement> {
        if c.p != self.p {
            return Err(Error::InvalidParameter("cyclotomic prime differs from context prime".into()));
        }
        let z = self.zeta_image();
        if self.ord_pi(&self.sub(&z, &self.one())) >= self.prec_pi() {
            return Err(Error::PrecisionExhausted("Θ(1) indistinguishable from 1".into()));
        }
        let mut acc = self.zero();
        let mut zp = self.one();
        for coord in c.coords.iter() {
            acc = self.add(&acc, &self.mul(&self.from_bigint(coord), &zp));
            zp = self.mul(&zp, &z);
        }
        Ok(acc)
    }

    // ------------------------------------------------------------------
    // κ-th powers

    pub fn unit_pow_kappa(&self, u: &EisensteinElement, kappa: &KappaExponent) -> Result<EisensteinElement> {
        if !self.is_one_unit(u) {
            return Err(Error::NotOneUnit);
        }
        if let Some(k) = kappa.plain_u64() {
            return Ok(self.pow(u, k));
        }
        let h = self.sub(u, &self.one());
        self.binomial_series(&h, kappa, u.prec_pi)
    }

    /// `Σ_l C(κ, l) h^l` for `ord_π h ≥ 1`.
    pub fn binomial_series(
        &self,
        h: &EisensteinElement,
        kappa: &KappaExponent,
        prec: u32,
    ) -> Result<EisensteinElement> {
        let oh = self.ord_pi(h).max(1);
        let mut acc = self.with_prec(self.one(), prec);
        let mut hp = self.one();
        let mut l = 1u64;
        while (l as u32) * oh < prec {
            hp = self.mul(&hp, h);
            let c = kappa.binomial(l);
            acc = self.add(&acc, &self.mul(&self.from_bigint(&c), &hp));
            l += 1;
        }
        let cap = kappa.precision_cap(self, l);
        Ok(self.with_prec(acc, cap.min(prec)))
    }

    // ------------------------------------------------------------------
    // serialization

    pub fn serialize(&self, x: &EisensteinElement) -> PadicJson {
        let mut digits = Vec::with_capacity(x.prec_pi as usize);
        let mut cur = *x;
        for _ in 0..x.prec_pi {
            let d = self.residue(&cur);
            let mut lift = self.zero();
            for i in 0..self.a {
                lift.comps[0][i] = d[i];
            }
            lift.prec_pi = cur.prec_pi;
            let rest = self.sub(&cur, &lift);
            digits.push(d);
            if rest.prec_pi == 0 {
                break;
            }
            cur = self.div_pi_once(&rest);
        }
        PadicJson { pi_digits: digits, prec_pi: x.prec_pi, p: self.p, a: self.a }
    }

    pub fn deserialize(&self, j: &PadicJson) -> Result<EisensteinElement> {
        if j.p != self.p || j.a != self.a {
            return Err(Error::Parse("context mismatch".into()));
        }
        let mut acc = self.zero();
        for (k, d) in j.pi_digits.iter().enumerate() {
            let mut digit = self.zero();
            for (i, &v) in d.iter().enumerate().take(self.a) {
                digit.comps[0][i] = v % self.p;
            }
            acc = self.add(&acc, &self.mul(&digit, &self.pi_pow(k as u64)));
        }
        Ok(self.with_prec(acc, j.prec_pi))
    }
}

/// JSON form of a p-adic value: π-adic digits (each an `F_q` element as `a`
/// base-`p` coordinates), lowest first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadicJson {
    pub pi_digits: Vec<Vec<u64>>,
    pub prec_pi: u32,
    pub p: u64,
    pub a: usize,
}

/// A p-adic exponent κ.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KappaExponent {
    pub p: u64,
    /// Base-`p` digits of the representative, lowest first.
    pub digits: Vec<u64>,
    pub is_plain_integer: bool,
    value: BigInt,
    /// `Some(L)` when only `κ mod p^L` is meaningful.
    known_digits: Option<u32>,
}

impl KappaExponent {
    pub fn plain(p: u64, k: u64) -> Self {
        let value = BigInt::from(k);
        KappaExponent { p, digits: digits_of(&value, p), is_plain_integer: true, value, known_digits: None }
    }

    /// The integer `Σ d_i p^i`, routed through the binomial series.
    pub fn from_digits(p: u64, digits: &[u64]) -> Result<Self> {
        if digits.iter().any(|&d| d >= p) {
            return Err(Error::InvalidParameter("kappa digit out of range".into()));
        }
        let mut value = BigInt::zero();
        for &d in digits.iter().rev() {
            value = value * p + d;
        }
        Ok(KappaExponent { p, digits: digits.to_vec(), is_plain_integer: false, value, known_digits: None })
    }

    /// `num/den ∈ Z_p` (`p ∤ den`) known mod `p^len`.
    pub fn from_rational(p: u64, num: i64, den: i64, len: u32) -> Result<Self> {
        if den == 0 || den.unsigned_abs() % p == 0 {
            return Err(Error::InvalidParameter("denominator must be a p-adic unit".into()));
        }
        let m = BigInt::from(p).pow(len);
        let d = BigInt::from(den).mod_floor(&m);
        let dinv = d.modpow(&(phi_pow(p, len) - BigInt::one()), &m);
        let value = (BigInt::from(num) * dinv).mod_floor(&m);
        Ok(KappaExponent {
            p,
            digits: digits_of(&value, p),
            is_plain_integer: false,
            value,
            known_digits: Some(len),
        })
    }

    pub fn plain_u64(&self) -> Option<u64> {
        if self.is_plain_integer && self.value.sign() != Sign::Minus {
            self.value.to_u64()
        } else {
            None
        }
    }

    pub fn value(&self) -> &BigInt {
        &self.value
    }

    /// `κ - t`.
    pub fn minus(&self, t: u64) -> Self {
        let value = &self.value - BigInt::from(t);
        let is_plain = self.is_plain_integer && value.sign() != Sign::Minus;
        KappaExponent {
            p: self.p,
            digits: digits_of(&value.abs(), self.p),
            is_plain_integer: is_plain,
            value,
            known_digits: self.known_digits,
        }
    }

    /// `κ · m` for a positive integer `m`.
    pub fn times(&self, m: u64) -> Self {
        let value = &self.value * BigInt::from(m);
        KappaExponent {
            p: self.p,
            digits: digits_of(&value.abs(), self.p),
            is_plain_integer: self.is_plain_integer,
            value,
            known_digits: self.known_digits,
        }
    }

    pub fn binomial(&self, l: u64) -> BigInt {
        binomial_big(&self.value, l)
    }

    /// π-precision up to which binomial terms with index `< l` are valid.
    pub fn precision_cap(&self, ctx: &FieldContext, l: u64) -> u32 {
        match self.known_digits {
            None => u32::MAX,
            Some(len) => {
                let mut v = 0u64;
                let mut pk = ctx.p;
                while pk <= l {
                    v += l / pk;
                    pk *= ctx.p;
                }
                (len as u64).saturating_sub(v) as u32 * ctx.e as u32
            }
        }
    }

    pub fn known_digits(&self) -> Option<u32> {
        self.known_digits
    }

    /// `v_p(κ - k)`, capped at the number of known digits.
    pub fn valuation_of_difference(&self, k: u64) -> u32 {
        let mut d = &self.value - BigInt::from(k);
        let cap = self.known_digits.unwrap_or(u32::MAX);
        if d.is_zero() {
            return cap;
        }
        let bp = BigInt::from(self.p);
        let mut v = 0u32;
        while v < cap && (&d % &bp).is_zero() {
            d /= &bp;
            v += 1;
        }
        v
    }

    /// `κ mod p^l` as an integer.
    pub fn residue_mod(&self, l: u32) -> BigUint {
        let m = BigInt::from(self.p).pow(l);
        self.value.mod_floor(&m).to_biguint().unwrap()
    }
}

fn phi_pow(p: u64, len: u32) -> BigInt {
    // Euler φ(p^len)
    BigInt::from(p).pow(len - 1) * (p - 1)
}

fn digits_of(v: &BigInt, p: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut x = v.abs();
    let bp = BigInt::from(p);
    while !x.is_zero() {
        let (q, r) = x.div_rem(&bp);
        out.push(r.to_u64().unwrap());
        x = q;
    }
    out
}

/// Generalized binomial coefficient `C(x, l)` for any integer `x`.
pub fn binomial_big(x: &BigInt, l: u64) -> BigInt {
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for j in 0..l {
        num *= x - BigInt::from(j);
        den *= BigInt::from(j + 1);
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(p: u64, a: usize, n: u32) -> FieldContext {
        make_field_context(p, a, n).unwrap()
    }

    #[test]
    fn context_examples() {
        let c = ctx(3, 1, 4);
        let x = c.unram_from_coords(&[5]);
        assert_eq!(c.frobenius_sigma(&x), x);
        let c2 = ctx(3, 2, 3);
        assert_eq!(c2.h, vec![1, 0]);
        assert_eq!(make_field_context(4, 1, 2).unwrap_err(), Error::NotPrime(4));
        assert_eq!(
            FieldContext::with_poly(3, 2, 3, vec![2, 0]).unwrap_err(),
            Error::NotIrreducible
        );
    }

    #[test]
    fn teichmuller_examples() {
        let c = ctx(5, 1, 2);
        assert_eq!(c.teichmuller(&[2]).coeffs[0], 7);
        assert_eq!(c.teichmuller(&[1]).coeffs[0], 1);
        let c = ctx(3, 1, 5);
        assert_eq!(c.teichmuller(&[2]).coeffs[0], 243 - 1);
        assert_eq!(c.teichmuller(&[0]).coeffs[0], 0);
    }

    #[test]
    fn sigma_on_teichmuller_points() {
        let c = ctx(3, 2, 4);
        let f = crate::ffield::FiniteField::new(3, 2).unwrap();
        for l in 0..8 {
            let x = f.exp(l);
            let w = c.teichmuller(&f.digits(x));
            let wp = c.teichmuller(&f.digits(f.pow(x, 3)));
            assert_eq!(c.frobenius_sigma(&w), wp);
            let s2 = c.frobenius_sigma(&c.frobenius_sigma(&w));
            assert_eq!(s2, w);
        }
    }

    #[test]
    fn pi_relation() {
        for p in [2u64, 3, 5] {
            let c = ctx(p, 1, 6);
            let lhs = c.add(&c.pow(&c.pi(), p - 1), &c.from_int(p as i64));
            assert!(c.is_zero(&lhs));
        }
    }

    #[test]
    fn theta_first_terms() {
        let c = ctx(3, 1, 6);
        let th = c.theta_coeffs(5).unwrap();
        assert_eq!(th[0], c.one());
        assert_eq!(th[1], c.pi());
        assert_eq!(c.ord_pi(&c.sub(&th[2], &c.pi_pow_over_factorial(2))), c.prec_pi());
    }

    #[test]
    fn zeta_image_is_primitive_cube_root() {
        let c = ctx(3, 1, 6);
        let z = c.zeta_image();
        assert_eq!(c.pow(&z, 3), c.one());
        assert!(!c.is_zero(&c.sub(&z, &c.one())));
        let lin = c.add(&c.one(), &c.pi());
        assert!(c.agreement(&z, &lin) >= 2);
    }

    #[test]
    fn kappa_power_examples() {
        let c = ctx(3, 1, 2);
        let u = c.from_int(7);
        assert_eq!(c.unit_pow_kappa(&u, &KappaExponent::plain(3, 0)).unwrap(), c.one());
        assert_eq!(c.unit_pow_kappa(&u, &KappaExponent::plain(3, 1)).unwrap(), u);
        assert_eq!(c.unit_pow_kappa(&u, &KappaExponent::plain(3, 4)).unwrap(), c.from_int(7));
        let digits = KappaExponent::from_digits(3, &[1, 1]).unwrap();
        assert_eq!(c.unit_pow_kappa(&u, &digits).unwrap(), c.pow(&u, 4));
        assert_eq!(c.unit_pow_kappa(&c.from_int(2), &digits).unwrap_err(), Error::NotOneUnit);
    }

    #[test]
    fn inverse_and_division() {
        let c = ctx(3, 2, 5);
        let x = c.add(&c.from_int(2), &c.pi());
        let y = c.inv(&x).unwrap();
        assert_eq!(c.mul(&x, &y), c.one());
        let six = c.from_int(6);
        assert_eq!(c.div_int(&six, 3).unwrap(), c.with_prec(c.from_int(2), c.prec_pi() - 2));
        let pq = c.pi_pow(3);
        assert_eq!(c.div_pi_pow(&pq, 2).unwrap(), c.with_prec(c.pi(), c.prec_pi() - 2));
    }

    #[test]
    fn serialization_round_trip() {
        let c = ctx(3, 2, 3);
        let mut x = c.from_int(17);
        x = c.add(&x, &c.mul(&c.pi(), &c.from_unram(&c.unram_from_coords(&[1, 2]))));
        let j = c.serialize(&x);
        assert_eq!(j.pi_digits.len(), 6);
        assert_eq!(c.deserialize(&j).unwrap(), x);
    }
}
