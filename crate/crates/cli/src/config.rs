//! Family configuration files.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use unitroot::family::{parse_coeff, LaurentFamily, Term};
use unitroot::padic::KappaExponent;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub r: Vec<i64>,
    pub u: Vec<i64>,
    /// `"g^k"`, `"g"` or an integer of the prime field.
    pub coeff: String,
}

/// κ as an integer, a base-`p` digit string (lowest digit first, e.g.
/// `"1,1,1"`) or a fraction `"num/den"` with `p ∤ den`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(untagged)]
pub enum KappaConfig {
    Int(u64),
    Text(String),
}

impl Default for KappaConfig {
    fn default() -> Self {
        KappaConfig::Int(1)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub p: u64,
    #[serde(default = "one")]
    pub a: usize,
    pub s: usize,
    pub n: usize,
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub kappa: KappaConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_x: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_lambda: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_y: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Discrete logs of a single fiber λ (with `lambda_degree`) for `fiber`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_degree: Option<usize>,
}

fn one() -> usize {
    1
}

/// Command-line overrides.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub precision: Option<u32>,
    pub d_max: Option<usize>,
    pub t_max: Option<usize>,
}

/// Every knob with its effective value.
#[derive(Clone, Debug, Serialize)]
pub struct Params {
    pub precision: u32,
    pub d_max: usize,
    pub t_max: usize,
    pub k: usize,
    pub d_x: i64,
    pub d_lambda: i64,
    pub d_y: u32,
}

impl FamilyConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: FamilyConfig = serde_json::from_str(text).map_err(|e| {
            anyhow::anyhow!("config parse error at line {}, column {}: {}", e.line(), e.column(), e)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            bail!("field `terms`: at least one term is required");
        }
        for (i, t) in self.terms.iter().enumerate() {
            if t.r.len() != self.s {
                bail!("field `terms[{i}].r`: expected {} entries, found {}", self.s, t.r.len());
            }
            if t.u.len() != self.n {
                bail!("field `terms[{i}].u`: expected {} entries, found {}", self.n, t.u.len());
            }
        }
        for (name, v) in [("precision", self.precision.map(|x| x as i64)), ("d_x", self.d_x), ("d_lambda", self.d_lambda)] {
            if matches!(v, Some(x) if x < 1) {
                bail!("field `{name}`: must be positive");
            }
        }
        for (name, v) in [("t_max", self.t_max), ("d_max", self.d_max), ("k", self.k)] {
            if v == Some(0) {
                bail!("field `{name}`: must be positive");
            }
        }
        self.family()?;
        self.kappa()?;
        Ok(())
    }

    pub fn family(&self) -> Result<LaurentFamily> {
        let field = unitroot::ffield::FiniteField::get(self.p, self.a).map_err(|e| anyhow::anyhow!("field `p`/`a`: {e}"))?;
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let coeff = parse_coeff(&field, &t.coeff).map_err(|e| anyhow::anyhow!("field `terms[{i}].coeff`: {e}"))?;
                Ok(Term { r: t.r.clone(), u: t.u.clone(), coeff })
            })
            .collect::<Result<Vec<_>>>()?;
        LaurentFamily::new(self.p, self.a, self.s, self.n, terms).map_err(|e| anyhow::anyhow!("family: {e}"))
    }

    pub fn kappa(&self) -> Result<KappaExponent> {
        let p = self.p;
        let k = match &self.kappa {
            KappaConfig::Int(k) => KappaExponent::plain(p, *k),
            KappaConfig::Text(s) => {
                let s = s.trim();
                if let Some((num, den)) = s.split_once('/') {
                    let num: i64 = num.trim().parse().with_context(|| format!("field `kappa`: bad numerator in {s:?}"))?;
                    let den: i64 = den.trim().parse().with_context(|| format!("field `kappa`: bad denominator in {s:?}"))?;
                    let len = 2 * self.precision.unwrap_or(3) + 2;
                    KappaExponent::from_rational(p, num, den, len)?
                } else {
                    let digits: Option<Vec<u64>> = if s.contains(',') {
                        s.split(',').map(|d| d.trim().parse::<u64>().ok()).collect()
                    } else {
                        s.chars().map(|c| c.to_digit(10).map(u64::from)).collect()
                    };
                    let digits = digits.with_context(|| format!("field `kappa`: malformed digit string {s:?}"))?;
                    if digits.is_empty() {
                        bail!("field `kappa`: empty digit string");
                    }
                    KappaExponent::from_digits(p, &digits).map_err(|e| anyhow::anyhow!("field `kappa`: {e}"))?
                }
            }
        };
        Ok(k)
    }

    /// Effective parameters: command line, then config, then defaults.
    pub fn params(&self, o: &Overrides) -> Params {
        let precision = o.precision.or(self.precision).unwrap_or(3);
        Params {
            precision,
            d_max: o.d_max.or(self.d_max).unwrap_or(4),
            t_max: o.t_max.or(self.t_max).unwrap_or(3),
            k: self.k.unwrap_or(3),
            d_x: self.d_x.unwrap_or(2),
            d_lambda: self.d_lambda.unwrap_or(2),
            d_y: self.d_y.unwrap_or(8 * self.terms.len() as u32),
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canon = serde_json::to_vec(&serde_json::to_value(self).expect("serializable")).expect("serializable");
        hex::encode(Sha256::digest(&canon))
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.family().map(|f| f.describe()).unwrap_or_default())
    }
}
