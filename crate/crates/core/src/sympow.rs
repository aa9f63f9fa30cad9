//! κ-th symmetric powers of the family Frobenius, their duals, finite-k
//! truncations and the identities tying them to the fibers.
//!
//! Monomials are unnormalized: `e_u` stands for `Υ(X^u)` and `Λ^r` carries
//! no `π̃` scaling. Normalized valuations are recovered from the weights.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use crate::cone::{splitting_h, Cone, ConeSeries, LiftedTerm};
use crate::error::{Error, Result};
use crate::family::{weight, LaurentFamily};
use crate::fiber::{fiber_terms_at, kernel_slope, lambda_cone, x_cone};
use crate::linalg::{fredholm_coeffs, residue_unit_count, unit_eigen_iter, Mat};
use crate::padic::{EisensteinElement, FieldContext, KappaExponent};

type Q = Ratio<i64>;

const NONE: u32 = u32::MAX;

pub fn ratio_string(r: Q) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Truncation knobs: symmetric degree, X-weight of each factor, Λ-weight of
/// basis elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SymTrunc {
    pub t_max: usize,
    pub d_x: i64,
    pub d_lambda: i64,
}

impl SymTrunc {
    pub fn new(t_max: usize, d_x: i64, d_lambda: i64) -> Self {
        SymTrunc { t_max, d_x, d_lambda }
    }

    /// Λ-weight kept in intermediate products: enough for every `p s - r`.
    pub fn lambda_span(&self, p: u64) -> i64 {
        (p as i64 + 1) * self.d_lambda
    }
}

/// A monomial `e_{u_1} ··· e_{u_t}` in canonical (sorted) order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SymMonomial {
    pub parts: Vec<Vec<i64>>,
}

impl SymMonomial {
    pub fn new(mut parts: Vec<Vec<i64>>) -> Self {
        parts.sort();
        SymMonomial { parts }
    }

    pub fn degree(&self) -> usize {
        self.parts.len()
    }

    pub fn weight(&self) -> i64 {
        self.parts.iter().map(|u| weight(u)).sum()
    }

    /// Multiplicities of the distinct factors.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for (i, u) in self.parts.iter().enumerate() {
            if i > 0 && self.parts[i - 1] == *u {
                *out.last_mut().unwrap() += 1;
            } else {
                out.push(1);
            }
        }
        out
    }
}

/// Sparse polynomial in `Λ` and the `e_v`: `(Λ index, monomial index, coefficient)`.
#[derive(Clone, Debug, Default)]
pub struct SymPoly {
    pub terms: Vec<(u32, u32, EisensteinElement)>,
}

impl SymPoly {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Index tables for the truncated ring `O[Λ][e_v]`.
#[derive(Clone, Debug)]
pub struct SymRing {
    pub s: usize,
    pub t_max: usize,
    pub vars: Vec<Vec<i64>>,
    pub monos: Vec<Vec<u16>>,
    pub lams: Vec<Vec<i64>>,
    var_idx: HashMap<Vec<i64>, usize>,
    mono_idx: HashMap<Vec<u16>, u32>,
    lam_idx: HashMap<Vec<i64>, u32>,
    mono_mul: Vec<u32>,
    lam_add: Vec<u32>,
    mono_w: Vec<i64>,
}

fn monomials(nvars: usize, t_max: usize) -> Vec<Vec<u16>> {
    let mut out = vec![Vec::new()];
    let mut layer: Vec<Vec<u16>> = vec![Vec::new()];
    for _ in 0..t_max {
        let mut next = Vec::new();
        for m in &layer {
            let start = m.last().copied().unwrap_or(0);
            for v in start..nvars as u16 {
                let mut mm = m.clone();
                mm.push(v);
                next.push(mm);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

impl SymRing {
    pub fn new(x_cone: &Cone, d_x: i64, t_max: usize, lambda: Option<(&Cone, i64)>) -> Self {
        let vars: Vec<Vec<i64>> = x_cone.lattice_points(d_x).into_iter().filter(|v| weight(v) > 0).collect();
        let var_idx = vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();
        let monos = monomials(vars.len(), t_max);
        let mono_idx: HashMap<Vec<u16>, u32> = monos.iter().enumerate().map(|(i, m)| (m.clone(), i as u32)).collect();
        let nm = monos.len();
        let mut mono_mul = vec![NONE; nm * nm];
        for i in 0..nm {
            for j in i..nm {
                if monos[i].len() + monos[j].len() > t_max {
                    continue;
                }
                let mut m: Vec<u16> = monos[i].iter().chain(&monos[j]).copied().collect();
                m.sort_unstable();
                let k = mono_idx[&m];
                mono_mul[i * nm + j] = k;
                mono_mul[j * nm + i] = k;
            }
        }
        let mono_w = monos.iter().map(|m| m.iter().map(|&v| weight(&vars[v as usize])).sum()).collect();
        let (s, lams) = match lambda {
            Some((c, w)) => (c.dim, c.lattice_points(w)),
            None => (0, vec![Vec::new()]),
        };
        let lam_idx: HashMap<Vec<i64>, u32> = lams.iter().enumerate().map(|(i, l)| (l.clone(), i as u32)).collect();
        let nl = lams.len();
        let mut lam_add = vec![NONE; nl * nl];
        for i in 0..nl {
            for j in 0..nl {
                let v: Vec<i64> = lams[i].iter().zip(&lams[j]).map(|(a, b)| a + b).collect();
                if let Some(&k) = lam_idx.get(&v) {
                    lam_add[i * nl + j] = k;
                }
            }
        }
        SymRing { s, t_max, vars, monos, lams, var_idx, mono_idx, lam_idx, mono_mul, lam_add, mono_w }
    }

    pub fn monomial(&self, i: usize) -> SymMonomial {
        SymMonomial::new(self.monos[i].iter().map(|&v| self.vars[v as usize].clone()).collect())
    }

    pub fn monomial_index(&self, m: &SymMonomial) -> Option<usize> {
        let mut ids: Vec<u16> = Vec::with_capacity(m.parts.len());
        for u in &m.parts {
            ids.push(*self.var_idx.get(u)? as u16);
        }
        ids.sort_unstable();
        self.mono_idx.get(&ids).map(|&i| i as usize)
    }

    pub fn mono_weight(&self, i: usize) -> i64 {
        self.mono_w[i]
    }

    pub fn lambda_index(&self, l: &[i64]) -> Option<usize> {
        self.lam_idx.get(l).map(|&i| i as usize)
    }

    /// Index of the target monomial of a single factor `X^w` (`w = 0` ↦ 1).
    fn linear_mono(&self, w: &[i64]) -> Option<u32> {
        if w.iter().all(|&x| x == 0) {
            return Some(0);
        }
        self.var_idx.get(w).map(|&v| self.mono_idx[&vec![v as u16]])
    }

    pub fn one(&self, ctx: &FieldContext) -> SymPoly {
        let zero = self.lam_idx[&vec![0i64; self.s]];
        SymPoly { terms: vec![(zero, 0, ctx.one())] }
    }

    pub fn coeff(&self, ctx: &FieldContext, f: &SymPoly, lam: usize, mono: usize) -> EisensteinElement {
        f.terms
            .binary_search_by(|t| (t.0, t.1).cmp(&(lam as u32, mono as u32)))
            .map(|i| f.terms[i].2)
            .unwrap_or_else(|_| ctx.zero())
    }

    fn collect(&self, ctx: &FieldContext, buf: Vec<Option<EisensteinElement>>) -> SymPoly {
        let nm = self.monos.len();
        let terms = buf
            .into_iter()
            .enumerate()
            .filter_map(|(i, c)| c.filter(|c| !ctx.is_zero(c)).map(|c| ((i / nm) as u32, (i % nm) as u32, c)))
            .collect();
        SymPoly { terms }
    }

    pub fn mul(&self, ctx: &FieldContext, a: &SymPoly, b: &SymPoly) -> SymPoly {
        let nm = self.monos.len();
        let nl = self.lams.len();
        let mut buf: Vec<Option<EisensteinElement>> = vec![None; nl * nm];
        let prec = ctx.prec_pi();
        let ob: Vec<u32> = b.terms.iter().map(|t| ctx.ord_pi(&t.2)).collect();
        for (la, ma, ca) in &a.terms {
            let oa = ctx.ord_pi(ca);
            let lrow = &self.lam_add[*la as usize * nl..(*la as usize + 1) * nl];
            let mrow = &self.mono_mul[*ma as usize * nm..(*ma as usize + 1) * nm];
            for ((lb, mb, cb), &o) in b.terms.iter().zip(&ob) {
                if oa + o >= prec {
                    continue;
                }
                let l = lrow[*lb as usize];
                let m = mrow[*mb as usize];
                if l == NONE || m == NONE {
                    continue;
                }
                let idx = l as usize * nm + m as usize;
                let t = ctx.mul(ca, cb);
                buf[idx] = Some(match &buf[idx] {
                    Some(x) => ctx.add(x, &t),
                    None => t,
                });
            }
        }
        self.collect(ctx, buf)
    }

    /// `Σ c_i f_i`.
    pub fn lincomb(&self, ctx: &FieldContext, parts: &[(EisensteinElement, &SymPoly)]) -> SymPoly {
        let nm = self.monos.len();
        let mut buf: Vec<Option<EisensteinElement>> = vec![None; self.lams.len() * nm];
        for (c, f) in parts {
            for (l, m, x) in &f.terms {
                let idx = *l as usize * nm + *m as usize;
                let t = ctx.mul(c, x);
                buf[idx] = Some(match &buf[idx] {
                    Some(y) => ctx.add(y, &t),
                    None => t,
                });
            }
        }
        self.collect(ctx, buf)
    }

    /// Images of `X^0` and of each variable under `X^u ↦ ψ(G X^u)`
    /// (`dual = false`) or `X^(-u) ↦ Pr(G X^(-pu))` (`dual = true`).
    fn base_images(&self, ctx: &FieldContext, g: &ConeSeries, dual: bool) -> Vec<SymPoly> {
        let p = ctx.p as i64;
        let n = g.n;
        let sources: Vec<Vec<i64>> = std::iter::once(vec![0; n]).chain(self.vars.iter().cloned()).collect();
        let mut out: Vec<Vec<(u32, u32, EisensteinElement)>> = vec![Vec::new(); sources.len()];
        for (key, c) in &g.coeffs {
            let Some(&lam) = self.lam_idx.get(&key[..self.s]) else { continue };
            let k = &key[self.s..];
            for (si, xu) in sources.iter().enumerate() {
                let w: Option<Vec<i64>> = if dual {
                    Some(xu.iter().zip(k).map(|(u, kk)| p * u - kk).collect())
                } else {
                    let sum: Vec<i64> = xu.iter().zip(k).map(|(u, kk)| u + kk).collect();
                    if sum.iter().all(|x| x % p == 0) {
                        Some(sum.iter().map(|x| x / p).collect())
                    } else {
                        None
                    }
                };
                if let Some(m) = w.and_then(|w| self.linear_mono(&w)) {
                    out[si].push((lam, m, *c));
                }
            }
        }
        out.into_iter()
            .map(|mut t| {
                t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
                SymPoly { terms: t }
            })
            .collect()
    }
}

/// Teichmüller-lifted terms of the family in its own degree-`a` context.
pub fn family_terms(fam: &LaurentFamily, ctx: &FieldContext) -> Result<Vec<LiftedTerm>> {
    if ctx.a != fam.a {
        return Err(Error::InvalidParameter("context degree differs from the family's".into()));
    }
    Ok(fam
        .terms
        .iter()
        .zip(fam.coeff_digits())
        .map(|(t, d)| LiftedTerm { coeff: ctx.from_unram(&ctx.teichmuller(&d)), r: t.r.clone(), u: t.u.clone() })
        .collect())
}

/// A truncated symmetric-power operator on `Λ^r e_u` (or `Λ^(-r) e*_u`).
#[derive(Clone, Debug)]
pub struct SymOperator {
    pub basis: Vec<(Vec<i64>, SymMonomial)>,
    pub mat: Mat,
    pub dual: bool,
    pub trunc: SymTrunc,
    pub level: usize,
    /// `None` for the κ operator, `Some(k)` for the finite truncation.
    pub finite_k: Option<u64>,
}

impl SymOperator {
    pub fn weights(&self) -> Vec<(i64, i64)> {
        self.basis.iter().map(|(r, u)| (weight(r), u.weight())).collect()
    }

    pub fn index_of(&self, r: &[i64], u: &SymMonomial) -> Option<usize> {
        self.basis.iter().position(|(rr, uu)| rr == r && uu == u)
    }

    /// Histogram of π-adic valuations of the stored entries; zero entries
    /// are counted under the working precision.
    pub fn valuation_histogram(&self, ctx: &FieldContext) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for x in &self.mat.data {
            *h.entry(ctx.ord_pi(x).min(ctx.prec_pi())).or_insert(0) += 1;
        }
        h
    }
}

/// Symmetric-power machinery for one family (or one fiber) at fixed truncation.
#[derive(Clone, Debug)]
pub struct SymPower {
    pub fam: LaurentFamily,
    pub ctx: FieldContext,
    pub trunc: SymTrunc,
    pub ring: SymRing,
    /// Indices (into `ring.lams`) of the basis Λ-exponents.
    pub box_lams: Vec<usize>,
    base: Vec<SymPoly>,
    base_dual: Vec<SymPoly>,
}

impl SymPower {
    pub fn new(fam: &LaurentFamily, trunc: SymTrunc, ctx: &FieldContext) -> Result<Self> {
        let terms = family_terms(fam, ctx)?;
        let lc = lambda_cone(fam);
        let span = trunc.lambda_span(fam.p);
        let ring = SymRing::new(&x_cone(fam), trunc.d_x, trunc.t_max, Some((&lc, span)));
        let g = splitting_h(ctx, &terms, fam.s, fam.n, 1, span, (fam.p as i64 + 1) * trunc.d_x);
        Ok(Self::assemble(fam, trunc, ctx, ring, &g))
    }

    /// The fiber at the `F_q`-rational point with coordinate logs `logs`.
    pub fn fiber(fam: &LaurentFamily, trunc: SymTrunc, ctx: &FieldContext, logs: &[u64]) -> Result<Self> {
        let terms = fiber_terms_at(fam, 1, logs, ctx)?;
        let ring = SymRing::new(&x_cone(fam), trunc.d_x, trunc.t_max, None);
        let g = splitting_h(ctx, &terms, 0, fam.n, 1, 0, (fam.p as i64 + 1) * trunc.d_x);
        Ok(Self::assemble(fam, trunc, ctx, ring, &g))
    }

    fn assemble(fam: &LaurentFamily, trunc: SymTrunc, ctx: &FieldContext, ring: SymRing, g: &ConeSeries) -> Self {
        let base = ring.base_images(ctx, g, false);
        let base_dual = ring.base_images(ctx, g, true);
        let box_lams = (0..ring.lams.len()).filter(|&i| weight(&ring.lams[i]) <= trunc.d_lambda).collect();
        SymPower { fam: fam.clone(), ctx: ctx.clone(), trunc, ring, box_lams, base, base_dual }
    }

    fn bases(&self, dual: bool) -> &[SymPoly] {
        if dual {
            &self.base_dual
        } else {
            &self.base
        }
    }

    /// `Υα(1)`, or its dual.
    pub fn alpha_one(&self, dual: bool) -> &SymPoly {
        &self.bases(dual)[0]
    }

    /// `f - 1` for `f ≡ 1 mod π` with constant term at `Λ^0 e_∅`.
    fn one_unit_part(&self, f: &SymPoly) -> Result<SymPoly> {
        let ctx = &self.ctx;
        let zero_lam = self.ring.one(ctx).terms[0].0;
        let mut h_terms = Vec::with_capacity(f.len());
        let mut seen_const = false;
        for (l, m, c) in &f.terms {
            if *l == zero_lam && *m == 0 {
                seen_const = true;
                if !ctx.is_one_unit(c) {
                    return Err(Error::NotOneUnit);
                }
                let d = ctx.sub(c, &ctx.one());
                if !ctx.is_zero(&d) {
                    h_terms.push((*l, *m, d));
                }
            } else {
                if ctx.ord_pi(c) == 0 {
                    return Err(Error::NotOneUnit);
                }
                h_terms.push((*l, *m, *c));
            }
        }
        if !seen_const {
            return Err(Error::NotOneUnit);
        }
        Ok(SymPoly { terms: h_terms })
    }

    /// `h^l` while `l · ord h` stays below the working precision.
    fn h_powers(&self, h: &SymPoly) -> Vec<SymPoly> {
        let ctx = &self.ctx;
        let oh = h.terms.iter().map(|t| ctx.ord_pi(&t.2)).min().unwrap_or(u32::MAX).max(1);
        let mut hp = vec![self.ring.one(ctx)];
        while (hp.len() as u32).saturating_mul(oh) < ctx.prec_pi() {
            let next = self.ring.mul(ctx, hp.last().unwrap(), h);
            if next.is_empty() {
                break;
            }
            hp.push(next);
        }
        hp
    }

    /// `Σ_l C(ex, l) h^l` from the table of powers.
    fn binomial_from(&self, hp: &[SymPoly], ex: &KappaExponent) -> SymPoly {
        let ctx = &self.ctx;
        let parts: Vec<(EisensteinElement, &SymPoly)> =
            hp.iter().enumerate().map(|(l, f)| (ctx.from_bigint(&ex.binomial(l as u64)), f)).collect();
        let mut pw = self.ring.lincomb(ctx, &parts);
        let cap = ex.precision_cap(ctx, hp.len() as u64);
        if cap < ctx.prec_pi() {
            for t in pw.terms.iter_mut() {
                t.2 = ctx.with_prec(t.2, cap);
            }
        }
        pw
    }

    /// `f^κ` for a 1-unit `f` of the truncated ring.
    pub fn kappa_power(&self, f: &SymPoly, kappa: &KappaExponent) -> Result<SymPoly> {
        let h = self.one_unit_part(f)?;
        Ok(self.binomial_from(&self.h_powers(&h), kappa))
    }

    /// `(Υα(1))^(κ-t)` for `t = 0..=t_max`; with `finite = Some(k)` the
    /// plain power `k - t` and `None` for `t > k`.
    fn kappa_powers(&self, dual: bool, kappa: &KappaExponent, finite: Option<u64>) -> Result<Vec<Option<SymPoly>>> {
        let h = self.one_unit_part(self.alpha_one(dual))?;
        let hp = self.h_powers(&h);
        let mut out = Vec::with_capacity(self.trunc.t_max + 1);
        for t in 0..=self.trunc.t_max {
            let ex = match finite {
                Some(k) if (t as u64) > k => {
                    out.push(None);
                    continue;
                }
                Some(k) => KappaExponent::plain(self.ctx.p, k - t as u64),
                None => kappa.minus(t as u64),
            };
            out.push(Some(self.binomial_from(&hp, &ex)));
        }
        Ok(out)
    }

    /// Builds a ring element from `(r, monomial, coefficient)` triples, where
    /// `r` indexes `Λ^r` (or `Λ^(-r)` on the dual side); terms outside the
    /// truncation are dropped.
    pub fn element(&self, terms: &[(Vec<i64>, SymMonomial, EisensteinElement)]) -> SymPoly {
        let mut map: BTreeMap<(u32, u32), EisensteinElement> = BTreeMap::new();
        for (r, u, c) in terms {
            let (Some(l), Some(m)) = (self.ring.lambda_index(r), self.ring.monomial_index(u)) else { continue };
            let e = map.entry((l as u32, m as u32)).or_insert_with(|| self.ctx.zero());
            *e = self.ctx.add(e, c);
        }
        SymPoly { terms: map.into_iter().filter(|(_, c)| !self.ctx.is_zero(c)).map(|((l, m), c)| (l, m, c)).collect() }
    }

    /// Coordinates of `f` on the basis of the operators.
    pub fn coordinates(&self, f: &SymPoly) -> Vec<EisensteinElement> {
        let nm = self.ring.monos.len();
        let mut out = vec![self.ctx.zero(); self.box_lams.len() * nm];
        let pos: HashMap<u32, usize> = self.box_lams.iter().enumerate().map(|(i, &l)| (l as u32, i)).collect();
        for (l, m, c) in &f.terms {
            if let Some(&bi) = pos.get(l) {
                out[bi * nm + *m as usize] = *c;
            }
        }
        out
    }

    fn image_with(&self, dual: bool, pows: &[Option<SymPoly>], mono: usize) -> SymPoly {
        let t = self.ring.monos[mono].len();
        let Some(pw) = &pows[t] else { return SymPoly::default() };
        let bases = self.bases(dual);
        let mut acc = pw.clone();
        for &v in &self.ring.monos[mono] {
            acc = self.ring.mul(&self.ctx, &acc, &bases[v as usize + 1]);
        }
        acc
    }

    /// `[α]_κ(e_u)` (or the dual) expanded over `Λ^s e_v`.
    pub fn alpha_kappa_image(&self, kappa: &KappaExponent, u: &SymMonomial, dual: bool) -> Result<SymPoly> {
        let mono = self
            .ring
            .monomial_index(u)
            .ok_or_else(|| Error::InvalidParameter("monomial outside the truncation".into()))?;
        let pows = self.kappa_powers(dual, kappa, None)?;
        Ok(self.image_with(dual, &pows, mono))
    }

    /// Images of every basis monomial.
    pub fn images(&self, kappa: &KappaExponent, finite: Option<u64>, dual: bool) -> Result<Vec<SymPoly>> {
        let pows = self.kappa_powers(dual, kappa, finite)?;
        Ok((0..self.ring.monos.len()).into_par_iter().map(|m| self.image_with(dual, &pows, m)).collect())
    }

    pub fn basis(&self) -> Vec<(Vec<i64>, SymMonomial)> {
        let mut out = Vec::new();
        for &l in &self.box_lams {
            for m in 0..self.ring.monos.len() {
                out.push((self.ring.lams[l].clone(), self.ring.monomial(m)));
            }
        }
        out
    }

    /// Level-one block: `ψ_Λ ∘ [α]` (entry at `Λ^(ps-r)`), or
    /// `Pr_1 ∘ [α*] ∘ Φ_Λ` (entry at `Λ^(pr-r')`).
    fn level_one_block(&self, imgs: &[SymPoly], dual: bool) -> Mat {
        let ctx = &self.ctx;
        let nm = self.ring.monos.len();
        let nb = self.box_lams.len();
        let p = ctx.p as i64;
        let box_pos: HashMap<&[i64], usize> =
            self.box_lams.iter().enumerate().map(|(i, &l)| (self.ring.lams[l].as_slice(), i)).collect();
        let mut mat = Mat::zeros(ctx, nb * nm, nb * nm);
        for (ci, &rl) in self.box_lams.iter().enumerate() {
            let r = &self.ring.lams[rl];
            for (u, img) in imgs.iter().enumerate() {
                let col = ci * nm + u;
                for (j, v, c) in &img.terms {
                    let jv = &self.ring.lams[*j as usize];
                    let target: Option<Vec<i64>> = if dual {
                        Some(r.iter().zip(jv).map(|(a, b)| p * a - b).collect())
                    } else {
                        let sum: Vec<i64> = jv.iter().zip(r).map(|(a, b)| a + b).collect();
                        if sum.iter().all(|x| x % p == 0) {
                            Some(sum.iter().map(|x| x / p).collect())
                        } else {
                            None
                        }
                    };
                    if let Some(ri) = target.and_then(|t| box_pos.get(t.as_slice()).copied()) {
                        mat.set(ri * nm + *v as usize, col, *c);
                    }
                }
            }
        }
        mat
    }

    fn operator(&self, kappa: &KappaExponent, finite: Option<u64>, dual: bool) -> Result<SymOperator> {
        let ctx = &self.ctx;
        let imgs = self.images(kappa, finite, dual)?;
        let b = self.level_one_block(&imgs, dual);
        let mut mat = b.clone();
        let mut bi = b;
        for _ in 1..ctx.a {
            bi = bi.map(|x| ctx.sigma(x));
            mat = if dual { mat.mul(ctx, &bi) } else { bi.mul(ctx, &mat) };
        }
        Ok(SymOperator { basis: self.basis(), mat, dual, trunc: self.trunc, level: ctx.a, finite_k: finite })
    }

    /// Matrix of `[β_a]_κ = ψ_Λ^a ∘ [α_{a,Λ}]_κ`.
    pub fn beta_matrix(&self, kappa: &KappaExponent) -> Result<SymOperator> {
        self.operator(kappa, None, false)
    }

    /// Matrix of `[β_a]_(k)`.
    pub fn finite_k_matrix(&self, k: u64) -> Result<SymOperator> {
        self.operator(&KappaExponent::plain(self.ctx.p, k), Some(k), false)
    }

    /// Matrix of `[β_a*]_κ = Pr_1 ∘ [α*_{a,Λ}]_κ ∘ Φ_Λ^a`.
    pub fn dual_beta_matrix(&self, kappa: &KappaExponent) -> Result<SymOperator> {
        self.operator(kappa, None, true)
    }

    pub fn dual_finite_k_matrix(&self, k: u64) -> Result<SymOperator> {
        self.operator(&KappaExponent::plain(self.ctx.p, k), Some(k), true)
    }

    /// Fiber operator `[α_{a,λ}]_κ` on the monomials (only for `SymPower::fiber`).
    pub fn fiber_matrix(&self, kappa: &KappaExponent) -> Result<Mat> {
        if self.ring.s != 0 {
            return Err(Error::InvalidParameter("not a fiber".into()));
        }
        let op = self.operator(kappa, None, false)?;
        Ok(op.mat)
    }

    fn slope(&self) -> Q {
        kernel_slope(&self.fam)
    }

    fn ord_p(&self, x: &EisensteinElement) -> Q {
        Q::new(self.ctx.ord_pi(x) as i64, self.ctx.e as i64)
    }

    /// Valuation in the normalized basis `π̃^|r| Λ^r e_u` (dual:
    /// `π̃^(-|r|) Λ^(-r) e*_u`), in p-units.
    fn normalized(&self, op: &SymOperator, row: usize, col: usize, x: &EisensteinElement) -> Q {
        let w = |i: usize| weight(&op.basis[i].0) + op.basis[i].1.weight();
        let shift = if op.dual { w(row) - w(col) } else { w(col) - w(row) };
        self.ord_p(x) + self.slope() * Q::from_integer(shift)
    }

    /// Entry bounds: `ord ≥ (p-1)(|s|+|v|) ord π̃` for `[β]` and
    /// `ord ≥ (p-1)|u| ord π̃` for `[β*]`, normalized.
    pub fn entry_profile(&self, op: &SymOperator) -> ProfileReport {
        let ctx = &self.ctx;
        let e = Q::from_integer(ctx.p as i64 - 1);
        let prec_p = Q::new(ctx.prec_pi() as i64, ctx.e as i64);
        let mut rep = ProfileReport::default();
        let n = op.basis.len();
        for i in 0..n {
            for j in 0..n {
                let x = op.mat.get(i, j);
                let bound = if op.dual {
                    e * self.slope() * Q::from_integer(op.basis[j].1.weight())
                } else {
                    e * self.slope() * Q::from_integer(weight(&op.basis[i].0) + op.basis[i].1.weight())
                };
                if ctx.is_zero(x) {
                    let floor = self.normalized(op, i, j, x).min(prec_p + self.normalized(op, i, j, &ctx.one()));
                    if floor < bound {
                        rep.beyond_precision += 1;
                    } else {
                        rep.checked += 1;
                    }
                    continue;
                }
                rep.checked += 1;
                if self.normalized(op, i, j, x) < bound {
                    rep.violations += 1;
                    rep.witness.get_or_insert((i, j));
                }
            }
        }
        rep.passed = rep.violations == 0;
        rep
    }

    /// Index of `Λ^0 e_∅` in the basis.
    pub fn origin(&self) -> usize {
        let zero = vec![0i64; self.ring.s];
        let bi = self.box_lams.iter().position(|&l| self.ring.lams[l] == zero).expect("Λ^0 in box");
        bi * self.ring.monos.len()
    }

    /// The unit eigenvalue of `op`, with the count of unit eigenvalues.
    pub fn unit_root(&self, op: &SymOperator) -> Result<SymUnitRoot> {
        let ctx = &self.ctx;
        let units = residue_unit_count(ctx, &op.mat)?;
        if units == 0 {
            return Err(Error::NoUnitRoot);
        }
        if units > 1 {
            return Err(Error::MultipleUnitRoots(units));
        }
        let r = unit_eigen_iter(ctx, &op.mat, self.origin(), 200)?;
        Ok(SymUnitRoot { value: r.value, certified_prec: r.certified_prec, unit_count: units, dim: op.mat.rows, trail: r.trail })
    }

    /// `(⟨e_u, e*_u⟩_k)` on the basis: `(k-t)! Π m_j! / k!`, `0` for `t > k`.
    pub fn pairing_weights(&self, k: u64) -> Result<Vec<Option<EisensteinElement>>> {
        let ctx = &self.ctx;
        if k >= ctx.p {
            return Err(Error::InvalidParameter("pairing needs k < p".into()));
        }
        let fact = |m: u64| (1..=m).product::<u64>() as i64;
        self.basis()
            .iter()
            .map(|(_, u)| {
                let t = u.degree() as u64;
                if t > k {
                    return Ok(None);
                }
                let num: i64 = fact(k - t) * u.multiplicities().iter().map(|&m| fact(m as u64)).product::<i64>();
                Ok(Some(ctx.div_int(&ctx.from_int(num), fact(k))?))
            })
            .collect()
    }

    /// `⟨[β]_k ζ, ζ*⟩_k = ⟨ζ, [β*]_k ζ*⟩_k` on all basis pairs.
    pub fn pairing_check(&self, k: u64) -> Result<PairingReport> {
        let ctx = &self.ctx;
        let w = self.pairing_weights(k)?;
        let b = self.finite_k_matrix(k)?;
        let bd = self.dual_finite_k_matrix(k)?;
        let n = b.basis.len();
        let mut rep = PairingReport { k, pairs: 0, min_agreement: ctx.prec_pi(), witness: None, passed: true };
        for i in 0..n {
            let Some(wi) = &w[i] else { continue };
            for j in 0..n {
                let Some(wj) = &w[j] else { continue };
                // ⟨β e_i, e*_j⟩ = β[j,i] w_j ; ⟨e_i, β* e*_j⟩ = β*[i,j] w_i
                let lhs = ctx.mul(b.mat.get(j, i), wj);
                let rhs = ctx.mul(bd.mat.get(i, j), wi);
                let a = ctx.agreement(&lhs, &rhs).min(lhs.prec_pi.min(rhs.prec_pi));
                rep.pairs += 1;
                if a < rep.min_agreement {
                    rep.min_agreement = a;
                    rep.witness = Some((i, j));
                }
            }
        }
        rep.passed = rep.min_agreement >= ctx.prec_pi();
        Ok(rep)
    }

    /// `det(1 - [β]T)` against `det(1 - [β*]T)` mod `T^(K+1)`.
    pub fn det_duality(&self, kappa: &KappaExponent, finite: Option<u64>, k_max: usize, required: u32) -> Result<DualityReport> {
        let ctx = &self.ctx;
        let b = self.operator(kappa, finite, false)?;
        let bd = self.operator(kappa, finite, true)?;
        let c = fredholm_coeffs(ctx, &b.mat, k_max)?;
        let cd = fredholm_coeffs(ctx, &bd.mat, k_max)?;
        let agreement: Vec<u32> =
            c.iter().zip(&cd).map(|(x, y)| ctx.agreement(x, y).min(x.prec_pi).min(y.prec_pi)).collect();
        let passed = agreement.iter().all(|&a| a >= required);
        Ok(DualityReport {
            finite_k: finite,
            primal: c.iter().map(|x| ctx.serialize(x).pi_digits).collect(),
            agreement,
            required,
            passed,
        })
    }

    /// `[β]_(k_l) → [β]_κ` for `k_l ≡ κ mod p^l`, `l = 1..=levels`.
    pub fn convergence_check(&self, kappa: &KappaExponent, levels: u32, k_max: usize, required: u32) -> Result<ConvergenceReport> {
        let ctx = &self.ctx;
        let q = self.fam.q() as i64;
        let limit = self.beta_matrix(kappa)?;
        let det_limit = fredholm_coeffs(ctx, &limit.mat, k_max)?;
        let mut steps = Vec::new();
        for l in 1..=levels {
            let m = ctx.p.pow(l);
            let r = num_traits::ToPrimitive::to_u64(&kappa.residue_mod(l)).unwrap_or(0);
            let k = if r == 0 { m } else { r };
            let op = self.finite_k_matrix(k)?;
            let n = op.basis.len();
            let mut min_val: Option<Q> = None;
            for i in 0..n {
                for j in 0..n {
                    let d = ctx.sub(op.mat.get(i, j), limit.mat.get(i, j));
                    if ctx.is_zero(&d) {
                        continue;
                    }
                    let v = self.normalized(&op, i, j, &d);
                    min_val = Some(min_val.map_or(v, |x: Q| x.min(v)));
                }
            }
            let tau = Q::from_integer(kappa.valuation_of_difference(k).min(i64::MAX as u32) as i64);
            let rate = tau.min(self.slope() * Q::new(q - 1, q) * Q::from_integer(k as i64));
            let det = fredholm_coeffs(ctx, &op.mat, k_max)?;
            let det_agreement =
                det.iter().zip(&det_limit).map(|(x, y)| ctx.agreement(x, y).min(x.prec_pi).min(y.prec_pi)).min().unwrap_or(0);
            steps.push(ConvergenceStep {
                level: l,
                k,
                min_difference: min_val.map(ratio_string),
                rate: ratio_string(rate),
                meets_rate: min_val.map_or(true, |v| v >= rate),
                det_agreement,
                min_value: min_val,
            });
        }
        let nondecreasing = steps.windows(2).all(|w| match (w[0].min_value, w[1].min_value) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => b >= a,
        });
        let det_stable = steps.last().map_or(false, |s| s.det_agreement >= required);
        let passed = nondecreasing && det_stable && steps.iter().all(|s| s.meets_rate);
        Ok(ConvergenceReport { steps, nondecreasing, det_stable, required, passed })
    }

    /// `(q-1)^s Tr([β_a]_κ) = Σ_λ Tr([α_{a,λ̂}]_κ)` over `λ ∈ (F_q^*)^s`.
    pub fn trace_identity(&self, kappa: &KappaExponent, required: u32) -> Result<TraceIdentityReport> {
        let ctx = &self.ctx;
        let fam = &self.fam;
        let q1 = fam.q() - 1;
        let beta = self.beta_matrix(kappa)?;
        let scale = ctx.from_int((q1 as i64).pow(fam.s as u32));
        let lhs = ctx.mul(&scale, &beta.mat.trace(ctx));
        let mut rhs = ctx.zero();
        let total = q1.pow(fam.s as u32);
        for idx in 0..total {
            let mut logs = Vec::with_capacity(fam.s);
            let mut x = idx;
            for _ in 0..fam.s {
                logs.push(x % q1);
                x /= q1;
            }
            let fib = SymPower::fiber(fam, self.trunc, ctx, &logs)?;
            rhs = ctx.add(&rhs, &fib.fiber_matrix(kappa)?.trace(ctx));
        }
        let agreement = ctx.agreement(&lhs, &rhs).min(lhs.prec_pi).min(rhs.prec_pi);
        Ok(TraceIdentityReport {
            m: 1,
            lhs: ctx.serialize(&lhs).pi_digits,
            rhs: ctx.serialize(&rhs).pi_digits,
            agreement,
            required,
            passed: agreement >= required,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SymUnitRoot {
    pub value: EisensteinElement,
    pub certified_prec: u32,
    pub unit_count: usize,
    pub dim: usize,
    pub trail: Vec<(usize, u32)>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ProfileReport {
    pub checked: usize,
    /// Zero entries whose precision floor is below the bound.
    pub beyond_precision: usize,
    pub violations: usize,
    pub witness: Option<(usize, usize)>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairingReport {
    pub k: u64,
    pub pairs: usize,
    pub min_agreement: u32,
    pub witness: Option<(usize, usize)>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub finite_k: Option<u64>,
    pub primal: Vec<Vec<Vec<u64>>>,
    pub agreement: Vec<u32>,
    pub required: u32,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStep {
    pub level: u32,
    pub k: u64,
    /// Smallest normalized valuation (p-units) of `[β]_(k) - [β]_κ`.
    pub min_difference: Option<String>,
    pub rate: String,
    pub meets_rate: bool,
    pub det_agreement: u32,
    #[serde(skip)]
    min_value: Option<Q>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub steps: Vec<ConvergenceStep>,
    pub nondecreasing: bool,
    pub det_stable: bool,
    pub required: u32,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceIdentityReport {
    pub m: u32,
    pub lhs: Vec<Vec<u64>>,
    pub rhs: Vec<Vec<u64>>,
    pub agreement: u32,
    pub required: u32,
    pub passed: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::make_field_context;

    fn kloosterman() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![0], vec![1], "1"), (vec![1], vec![-1], "1")]).unwrap()
    }

    fn linear() -> LaurentFamily {
        LaurentFamily::from_spec(3, 1, &[(vec![1], vec![1], "1")]).unwrap()
    }

    #[test]
    fn monomial_tables() {
        let fam = kloosterman();
        let ring = SymRing::new(&x_cone(&fam), 2, 2, None);
        assert_eq!(ring.vars.len(), 4);
        assert_eq!(ring.monos.len(), 1 + 4 + 10);
        let m = SymMonomial::new(vec![vec![1], vec![-1]]);
        let i = ring.monomial_index(&m).unwrap();
        assert_eq!(ring.monomial(i), m);
        assert_eq!(ring.mono_weight(i), 2);
        assert_eq!(SymMonomial::new(vec![vec![2], vec![2], vec![1]]).multiplicities(), vec![1, 2]);
    }

    #[test]
    fn empty_monomial_image_is_kappa_power() {
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 3, 2), &ctx).unwrap();
        let k2 = KappaExponent::plain(3, 2);
        let img = sp.alpha_kappa_image(&k2, &SymMonomial::new(vec![]), false).unwrap();
        let a1 = sp.alpha_one(false);
        let sq = sp.ring.mul(&ctx, a1, a1);
        assert_eq!(img.terms.len(), sq.terms.len());
        for (x, y) in img.terms.iter().zip(&sq.terms) {
            assert_eq!((x.0, x.1), (y.0, y.1));
            assert!(ctx.agreement(&x.2, &y.2) >= ctx.prec_pi());
        }
    }

    #[test]
    fn negative_exponent_image_inverts_alpha_one() {
        // κ = 1, t = 2: Υα(1) · [α]_1(e_a e_b) = Υα(X^a) Υα(X^b)
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 4, 2), &ctx).unwrap();
        let u = SymMonomial::new(vec![vec![1], vec![-1]]);
        let img = sp.alpha_kappa_image(&KappaExponent::plain(3, 1), &u, false).unwrap();
        let lhs = sp.ring.mul(&ctx, sp.alpha_one(false), &img);
        let ia = sp.ring.var_idx[&vec![1i64]] + 1;
        let ib = sp.ring.var_idx[&vec![-1i64]] + 1;
        let rhs = sp.ring.mul(&ctx, &sp.base[ia], &sp.base[ib]);
        let diff = sp.ring.lincomb(&ctx, &[(ctx.one(), &lhs), (ctx.from_int(-1), &rhs)]);
        // only Λ-truncation effects remain, at Λ-weights beyond the span
        assert!(diff.terms.iter().all(|t| ctx.is_zero(&t.2)));
    }

    #[test]
    fn linear_family_beta_shape() {
        let fam = linear();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 3, 3), &ctx).unwrap();
        let op = sp.beta_matrix(&KappaExponent::plain(3, 2)).unwrap();
        let o = sp.origin();
        assert!(ctx.is_one_unit(op.mat.get(o, o)));
        let ur = sp.unit_root(&op).unwrap();
        assert_eq!(ur.unit_count, 1);
        assert!(ctx.agreement(&ur.value, &ctx.one()) >= ctx.prec_pi());
        assert!(sp.entry_profile(&op).passed);
    }

    #[test]
    fn kloosterman_beta_unit_root_is_one() {
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 3, 3), &ctx).unwrap();
        for kappa in [KappaExponent::plain(3, 1), KappaExponent::plain(3, 2)] {
            let op = sp.beta_matrix(&kappa).unwrap();
            let ur = sp.unit_root(&op).unwrap();
            assert!(ctx.agreement(&ur.value, &ctx.one()) >= 4, "{:?}", ctx.serialize(&ur.value));
            let prof = sp.entry_profile(&op);
            assert!(prof.passed, "{prof:?}");
        }
    }

    #[test]
    fn zero_kappa_keeps_empty_block() {
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 2, 1), &ctx).unwrap();
        let op = sp.finite_k_matrix(0).unwrap();
        for (j, (_, u)) in op.basis.iter().enumerate() {
            if u.degree() > 0 {
                assert!((0..op.basis.len()).all(|i| ctx.is_zero(op.mat.get(i, j))));
            }
        }
    }

    #[test]
    fn finite_pairing_is_adjoint() {
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 2, 2), &ctx).unwrap();
        for k in [1, 2] {
            let rep = sp.pairing_check(k).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn trace_identity_small() {
        let fam = kloosterman();
        let ctx = make_field_context(3, 1, 3).unwrap();
        let sp = SymPower::new(&fam, SymTrunc::new(2, 3, 3), &ctx).unwrap();
        let rep = sp.trace_identity(&KappaExponent::plain(3, 2), 4).unwrap();
        assert!(rep.passed, "{rep:?}");
    }
}
