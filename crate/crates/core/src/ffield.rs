//! Small prime fields and their extensions `F_{p^k}`.
//!
//! Elements are encoded as integers `Σ d_j p^j` over the power basis of the
//! lexicographically smallest monic irreducible polynomial of degree `k`.
//! Multiplication goes through discrete-log tables built from the smallest
//! primitive element, which is also the generator `g` used in family configs.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Largest field (number of elements) for which log tables are built.
pub const MAX_TABLE_SIZE: u64 = 1 << 24;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

pub fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

// ---------------------------------------------------------------------------
// dense polynomials over F_p, lowest coefficient first

fn trim(v: &mut Vec<u64>) {
    while v.last() == Some(&0) {
        v.pop();
    }
}

fn poly_mul(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = (out[i + j] + x * y) % p;
        }
    }
    trim(&mut out);
    out
}

fn inv_mod(x: u64, p: u64) -> u64 {
    let mut r = 1u64;
    let mut b = x % p;
    let mut e = p - 2;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % p;
        }
        b = b * b % p;
        e >>= 1;
    }
    r
}

fn poly_rem(a: &[u64], m: &[u64], p: u64) -> Vec<u64> {
    let mut r = a.to_vec();
    trim(&mut r);
    let dm = m.len() - 1;
    let lead_inv = inv_mod(m[dm], p);
    while r.len() > dm {
        let top = r.len() - 1;
        let c = r[top] * lead_inv % p;
        for (j, &mj) in m.iter().enumerate() {
            let idx = top - dm + j;
            r[idx] = (r[idx] + p - c * mj % p) % p;
        }
        trim(&mut r);
    }
    r
}

fn poly_gcd(a: &[u64], b: &[u64], p: u64) -> Vec<u64> {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    trim(&mut x);
    trim(&mut y);
    while !y.is_empty() {
        let r = poly_rem(&x, &y, p);
        x = y;
        y = r;
    }
    x
}

fn poly_powmod(base: &[u64], mut e: u64, m: &[u64], p: u64) -> Vec<u64> {
    let mut result = vec![1u64];
    let mut b = poly_rem(base, m, p);
    while e > 0 {
        if e & 1 == 1 {
            result = poly_rem(&poly_mul(&result, &b, p), m, p);
        }
        b = poly_rem(&poly_mul(&b, &b, p), m, p);
        e >>= 1;
    }
    result
}

/// Rabin's test for a monic polynomial given with its leading coefficient.
pub fn is_irreducible(full: &[u64], p: u64) -> bool {
    let k = full.len() - 1;
    if k == 0 {
        return false;
    }
    if k == 1 {
        return true;
    }
    let t = vec![0, 1];
    // t^(p^i) mod h for i = 0..=k
    let mut frob = vec![poly_rem(&t, full, p)];
    for i in 0..k {
        let next = poly_powmod(&frob[i], p, full, p);
        frob.push(next);
    }
    let sub_t = |x: &[u64]| {
        let mut v = x.to_vec();
        if v.len() < 2 {
            v.resize(2, 0);
        }
        v[1] = (v[1] + p - 1) % p;
        trim(&mut v);
        v
    };
    if !sub_t(&frob[k]).is_empty() {
        return false;
    }
    for r in prime_factors(k as u64) {
        let g = poly_gcd(&sub_t(&frob[k / r as usize]), full, p);
        if g.len() > 1 {
            return false;
        }
    }
    true
}

/// Lexicographically smallest monic irreducible of degree `k` over `F_p`,
/// returned as `[h_0, .., h_{k-1}]` (leading 1 implied).  The order compares
/// `(h_{k-1}, .., h_0)`.
pub fn smallest_irreducible(p: u64, k: usize) -> Vec<u64> {
    let total = p.pow(k as u32);
    for code in 0..total {
        let mut h = Vec::with_capacity(k + 1);
        let mut c = code;
        for _ in 0..k {
            h.push(c % p);
            c /= p;
        }
        h.push(1);
        if is_irreducible(&h, p) {
            h.pop();
            return h;
        }
    }
    unreachable!("irreducible polynomials exist in every degree")
}

// ---------------------------------------------------------------------------

/// `F_{p^k}` with discrete-log tables.
#[derive(Debug)]
pub struct FiniteField {
    pub p: u64,
    pub k: usize,
    /// Defining polynomial `[h_0, .., h_{k-1}]`, monic.
    pub h: Vec<u64>,
    pub size: u64,
    /// Encoding of the primitive generator.
    pub gen: u32,
    exp: Vec<u32>,
    log: Vec<u32>,
    /// Absolute trace to `F_p`, indexed by discrete log.
    trace: Vec<u8>,
}

impl FiniteField {
    pub fn new(p: u64, k: usize) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::NotPrime(p));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("extension degree must be positive".into()));
        }
        let size = (p as u128).pow(k as u32);
        if size > MAX_TABLE_SIZE as u128 {
            return Err(Error::FieldTooLarge { p, k });
        }
        let size = size as u64;
        let h = smallest_irreducible(p, k);
        let mut full = h.clone();
        full.push(1);
        let order = size - 1;
        let factors = prime_factors(order);

        let decode = |e: u64| -> Vec<u64> {
            let mut v = Vec::with_capacity(k);
            let mut c = e;
            for _ in 0..k {
                v.push(c % p);
                c /= p;
            }
            trim(&mut v);
            v
        };
        let encode = |v: &[u64]| -> u32 {
            let mut e = 0u64;
            for &d in v.iter().rev() {
                e = e * p + d;
            }
            e as u32
        };

        let mut gen = 0u32;
        for cand in 1..size {
            let poly = decode(cand);
            let is_one = |x: &Vec<u64>| x.len() == 1 && x[0] == 1;
            if order == 1 {
                gen = cand as u32;
                break;
            }
            if factors
                .iter()
                .all(|&r| !is_one(&poly_powmod(&poly, order / r, &full, p)))
            {
                gen = cand as u32;
                break;
            }
        }
        let gpoly = decode(gen as u64);

        let mut exp = vec![0u32; order as usize];
        let mut log = vec![u32::MAX; size as usize];
        let mut x = vec![1u64];
        for i in 0..order as usize {
            let e = encode(&x);
            exp[i] = e;
            log[e as usize] = i as u32;
            x = poly_rem(&poly_mul(&x, &gpoly, p), &full, p);
        }

        let mut field = FiniteField { p, k, h, size, gen, exp, log, trace: Vec::new() };
        // Tr(t^j), then extend linearly.
        let tr_basis: Vec<u64> = (0..k)
            .map(|j| {
                let tj = field.pow_poly_t(j);
                let mut acc = 0u32;
                let lj = field.log[tj as usize] as u64;
                for i in 0..k {
                    let li = (lj * p.pow(i as u32) as u64 % order) as usize;
                    acc = field.add(acc, field.exp[li]);
                }
                (acc as u64) % p
            })
            .collect();
        field.trace = (0..order as usize)
            .map(|i| {
                let mut e = field.exp[i] as u64;
                let mut s = 0u64;
                for tj in tr_basis.iter() {
                    s += (e % p) * tj;
                    e /= p;
                }
                (s % p) as u8
            })
            .collect();
        Ok(field)
    }

    fn pow_poly_t(&self, j: usize) -> u32 {
        // encoding of t^j for j < k is p^j
        self.p.pow(j as u32) as u32
    }

    /// Cached construction; fields are immutable once built.
    pub fn get(p: u64, k: usize) -> Result<Arc<FiniteField>> {
        static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<FiniteField>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(f) = cache.lock().unwrap().get(&(p, k)) {
            return Ok(f.clone());
        }
        let f = Arc::new(FiniteField::new(p, k)?);
        cache.lock().unwrap().insert((p, k), f.clone());
        Ok(f)
    }

    pub fn order(&self) -> u64 {
        self.size - 1
    }

    pub fn digits(&self, e: u32) -> Vec<u64> {
        let mut v = Vec::with_capacity(self.k);
        let mut c = e as u64;
        for _ in 0..self.k {
            v.push(c % self.p);
            c /= self.p;
        }
        v
    }

    pub fn encode(&self, digits: &[u64]) -> u32 {
        let mut e = 0u64;
        for &d in digits.iter().rev() {
            e = e * self.p + d % self.p;
        }
        e as u32
    }

    pub fn add(&self, x: u32, y: u32) -> u32 {
        let (mut a, mut b) = (x as u64, y as u64);
        let mut out = 0u64;
        let mut place = 1u64;
        for _ in 0..self.k {
            out += ((a % self.p + b % self.p) % self.p) * place;
            a /= self.p;
            b /= self.p;
            place *= self.p;
        }
        out as u32
    }

    pub fn exp(&self, l: u64) -> u32 {
        self.exp[(l % self.order()) as usize]
    }

    /// Discrete log of a nonzero element.
    pub fn log(&self, e: u32) -> Option<u64> {
        match self.log[e as usize] {
            u32::MAX => None,
            l => Some(l as u64),
        }
    }

    pub fn mul(&self, x: u32, y: u32) -> u32 {
        match (self.log(x), self.log(y)) {
            (Some(a), Some(b)) => self.exp(a + b),
            _ => 0,
        }
    }

    pub fn pow(&self, x: u32, e: u64) -> u32 {
        if e == 0 {
            return 1;
        }
        match self.log(x) {
            Some(a) => self.exp((a as u128 * e as u128 % self.order() as u128) as u64),
            None => 0,
        }
    }

    /// Absolute trace `Tr_{F_{p^k}/F_p}` of `g^l`.
    pub fn trace_of_log(&self, l: u64) -> u64 {
        self.trace[(l % self.order()) as usize] as u64
    }

    pub fn trace(&self, e: u32) -> u64 {
        self.log(e).map_or(0, |l| self.trace_of_log(l))
    }

    /// Log (in `self`) of the image of the generator of `small` under the
    /// embedding sending `t_small` to the root of `h_small` of least log.
    pub fn embedding_log(&self, small: &FiniteField) -> Result<u64> {
        if small.p != self.p || self.k % small.k != 0 {
            return Err(Error::InvalidParameter(format!(
                "F_{}^{} does not embed in F_{}^{}",
                small.p, small.k, self.p, self.k
            )));
        }
        if small.k == 1 {
            return Ok(self.log(small.gen).expect("nonzero"));
        }
        // root of h_small: x with h_small(x) = 0
        let mut root = None;
        for l in 0..self.order() {
            let x = self.exp(l);
            let mut acc = self.pow(x, small.k as u64);
            for (j, &c) in small.h.iter().enumerate() {
                if c != 0 {
                    acc = self.add(acc, self.mul(c as u32, self.pow(x, j as u64)));
                }
            }
            if acc == 0 {
                root = Some(x);
                break;
            }
        }
        let root = root.expect("h_small splits in the extension");
        let image = self.eval_digits(&small.digits(small.gen), root);
        Ok(self.log(image).expect("nonzero"))
    }

    fn eval_digits(&self, digits: &[u64], x: u32) -> u32 {
        let mut acc = 0u32;
        for (j, &d) in digits.iter().enumerate() {
            if d != 0 {
                acc = self.add(acc, self.mul(d as u32, self.pow(x, j as u64)));
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_irreducible_f9() {
        // t^2 + 1 has no root mod 3
        assert!((0..3).all(|x| (x * x + 1) % 3 != 0));
        assert_eq!(smallest_irreducible(3, 2), vec![1, 0]);
        assert_eq!(smallest_irreducible(2, 3), vec![1, 1, 0]);
    }

    #[test]
    fn tables_consistent() {
        let f = FiniteField::new(3, 2).unwrap();
        assert_eq!(f.size, 9);
        let mut seen = std::collections::HashSet::new();
        for l in 0..8 {
            seen.insert(f.exp(l));
        }
        assert_eq!(seen.len(), 8);
        // trace of 1 in F_9 is 2
        assert_eq!(f.trace(1), 2);
    }

    #[test]
    fn trace_is_additive() {
        let f = FiniteField::new(5, 2).unwrap();
        for x in 0..25u32 {
            for y in 0..25u32 {
                assert_eq!((f.trace(x) + f.trace(y)) % 5, f.trace(f.add(x, y)));
            }
        }
    }

    #[test]
    fn embedding_respects_multiplication_order() {
        let small = FiniteField::new(3, 2).unwrap();
        let big = FiniteField::new(3, 4).unwrap();
        let l = big.embedding_log(&small).unwrap();
        // image of a generator of F_9^* has order 8
        let x = big.exp(l);
        assert_eq!(big.pow(x, 8), 1);
        assert_ne!(big.pow(x, 4), 1);
    }
}
