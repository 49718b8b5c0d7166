//! Exact-rational counterparts of the walk kernels. Used wherever a tie has
//! to be decided exactly: the ballot identity, the threshold recursion in
//! rational mode, and the brute-force Bayesian oracle.

use std::collections::BTreeMap;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};

use crate::error::{Error, Result};
use crate::model::StateOfNature;

/// Arbitrary-precision probability in canonical reduced form.
pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

/// Signal strength as an exact rational, `1/2 < p < 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RationalParams {
    p: Rat,
    q: Rat,
}

impl RationalParams {
    pub fn new(p: Rat) -> Result<Self> {
        if p <= rat(1, 2) || p >= Rat::one() {
            return Err(Error::InvalidParameter(format!(
                "signal strength p must satisfy 1/2 < p < 1, got {p}"
            )));
        }
        let q = Rat::one() - &p;
        Ok(Self { p, q })
    }

    /// Accepts `"num/den"` or a decimal string such as `"0.75"`.
    pub fn parse(text: &str) -> Result<Self> {
        let p = parse_rational(text)?;
        Self::new(p)
    }

    pub fn p(&self) -> &Rat {
        &self.p
    }

    pub fn q(&self) -> &Rat {
        &self.q
    }

    pub fn up_prob(&self, state: StateOfNature) -> &Rat {
        match state {
            StateOfNature::Plus => &self.p,
            StateOfNature::Minus => &self.q,
        }
    }

    pub fn to_f64(&self) -> f64 {
        rat_to_f64(&self.p)
    }
}

pub fn parse_rational(text: &str) -> Result<Rat> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad rational numerator: {num}")))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad rational denominator: {den}")))?;
        if d.is_zero() {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((whole, frac)) = text.split_once('.') {
        let digits = format!("{whole}{frac}");
        let n: BigInt = digits
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad decimal: {text}")))?;
        let d = BigInt::from(10).pow(frac.len() as u32);
        return Ok(Rat::new(n, d));
    }
    let n: BigInt = text
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("bad rational: {text}")))?;
    Ok(Rat::from_integer(n))
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    num::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

/// Exact pmf of `S_n` under `state`, positions keyed on the parity lattice.
pub fn rational_walk_pmf(
    params: &RationalParams,
    state: StateOfNature,
    n: usize,
) -> BTreeMap<i64, Rat> {
    let up = params.up_prob(state).clone();
    let down = Rat::one() - &up;
    let mut mass: BTreeMap<i64, Rat> = BTreeMap::new();
    mass.insert(0, Rat::one());
    for _ in 0..n {
        let mut next: BTreeMap<i64, Rat> = BTreeMap::new();
        for (s, m) in mass {
            *next.entry(s + 1).or_insert_with(Rat::zero) += &m * &up;
            *next.entry(s - 1).or_insert_with(Rat::zero) += &m * &down;
        }
        mass = next;
    }
    mass
}

/// Exact `P[state][S_k <= b_k for all k]`; infeasible bounds give exact 0.
pub fn rational_all_below(
    params: &RationalParams,
    state: StateOfNature,
    thresholds: &[i64],
) -> Rat {
    let up = params.up_prob(state).clone();
    let down = Rat::one() - &up;
    let mut mass: BTreeMap<i64, Rat> = BTreeMap::new();
    mass.insert(0, Rat::one());
    for &bound in thresholds {
        let mut next: BTreeMap<i64, Rat> = BTreeMap::new();
        for (s, m) in mass {
            for (step, w) in [(1i64, &up), (-1i64, &down)] {
                let s2 = s + step;
                if s2 <= bound {
                    *next.entry(s2).or_insert_with(Rat::zero) += &m * w;
                }
            }
        }
        mass = next;
    }
    mass.values().fold(Rat::zero(), |acc, v| acc + v)
}

/// Both sides of the ballot identity: the left side is
/// `P[state][S_k < 0 for all k < n, S_n = x]` by exact first-passage DP,
/// the right side is `(|x|/n) P[state][S_n = x]`. They agree exactly.
pub fn ballot_identity_check(
    params: &RationalParams,
    state: StateOfNature,
    n: usize,
    x: i64,
) -> Result<(Rat, Rat)> {
    if x >= 0 {
        return Err(Error::InvalidParameter(format!(
            "ballot endpoint must be negative, got {x}"
        )));
    }
    if n == 0 || (n as i64 - x) % 2 != 0 {
        return Err(Error::Domain(format!(
            "endpoint {x} not reachable in {n} steps (parity mismatch)"
        )));
    }
    let up = params.up_prob(state).clone();
    let down = Rat::one() - &up;
    // strict negativity through step n-1, then the final step lands on x
    let mut mass: BTreeMap<i64, Rat> = BTreeMap::new();
    mass.insert(0, Rat::one());
    for _ in 1..n {
        let mut next: BTreeMap<i64, Rat> = BTreeMap::new();
        for (s, m) in mass {
            for (step, w) in [(1i64, &up), (-1i64, &down)] {
                let s2 = s + step;
                if s2 < 0 {
                    *next.entry(s2).or_insert_with(Rat::zero) += &m * w;
                }
            }
        }
        mass = next;
    }
    let mut lhs = Rat::zero();
    for (s, m) in &mass {
        if *s == x - 1 {
            lhs += m * &up;
        } else if *s == x + 1 {
            lhs += m * &down;
        }
    }
    let pmf = rational_walk_pmf(params, state, n);
    let endpoint = pmf.get(&x).cloned().unwrap_or_else(Rat::zero);
    let rhs = rat(x.abs(), n as i64) * endpoint;
    Ok((lhs, rhs))
}

/// Sign of the posterior log-odds `s·ln(p/q) + ln(lik_plus/lik_minus)`,
/// decided exactly by cross-multiplication (no logarithms): compares
/// `p^s · lik_plus` against `q^s · lik_minus`.
pub fn posterior_sign(params: &RationalParams, s: i64, lik_plus: &Rat, lik_minus: &Rat) -> i8 {
    let (lhs, rhs) = if s >= 0 {
        (
            pow_rat(params.p(), s as u32) * lik_plus,
            pow_rat(params.q(), s as u32) * lik_minus,
        )
    } else {
        (
            pow_rat(params.q(), (-s) as u32) * lik_plus,
            pow_rat(params.p(), (-s) as u32) * lik_minus,
        )
    };
    match lhs.cmp(&rhs) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Equal => 0,
        std::cmp::Ordering::Less => -1,
    }
}

pub fn pow_rat(base: &Rat, exp: u32) -> Rat {
    let mut out = Rat::one();
    for _ in 0..exp {
        out *= base;
    }
    out
}

/// Probability of a path with `ups` up-steps out of `len` under `state`.
pub fn path_prob(params: &RationalParams, state: StateOfNature, ups: u32, len: u32) -> Rat {
    let up = params.up_prob(state);
    let down = Rat::one() - up;
    pow_rat(up, ups) * pow_rat(&down, len - ups)
}

/// Exhaustively enumerated pmf over all `2^n` sign paths. Test oracle for
/// the DP routes; exponential, keep `n` small.
pub fn enumerated_walk_pmf(
    params: &RationalParams,
    state: StateOfNature,
    n: usize,
) -> BTreeMap<i64, Rat> {
    assert!(n <= 20, "enumeration oracle limited to n <= 20");
    let mut out: BTreeMap<i64, Rat> = BTreeMap::new();
    for bits in 0u32..(1 << n) {
        let ups = bits.count_ones();
        let s = 2 * ups as i64 - n as i64;
        *out.entry(s).or_insert_with(Rat::zero) +=
            path_prob(params, state, ups, n as u32);
    }
    out
}
