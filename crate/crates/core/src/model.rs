//! Finite-`n` probability kernels for the conditional signal random walk:
//! binomial pmfs, tail sums, path-constrained survival probabilities and
//! path sampling. Probabilities are carried in log domain so that deep
//! exponential tails (`n` in the thousands) stay representable.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Guard band for reducing real-valued threshold comparisons to the integer
/// lattice: `n*t` within this distance of an integer is treated as integral.
pub(crate) const LATTICE_GUARD: f64 = 1e-9;

/// Signal strength `p` and derived quantities. `1/2 < p < 1` strictly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    p: f64,
    q: f64,
    log_odds: f64,
}

impl ModelParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.5 && p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "signal strength p must satisfy 1/2 < p < 1, got {p}"
            )));
        }
        let q = 1.0 - p;
        // ln(p) - ln(q) rather than ln(p/q): keeps the log-odds bit-identical
        // with log tail sums built from the same ln(p), ln(q) terms, so exact
        // posterior ties cancel structurally in floating point.
        Ok(Self {
            p,
            q,
            log_odds: p.ln() - q.ln(),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// ln(p/q), the log-likelihood contribution of a single `+1` signal.
    pub fn log_odds(&self) -> f64 {
        self.log_odds
    }
}

/// The hidden binary state. The prior is uniform and fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateOfNature {
    Plus,
    Minus,
}

impl StateOfNature {
    /// Probability that a single signal step is `+1` under this state.
    pub fn up_prob(self, params: &ModelParams) -> f64 {
        match self {
            StateOfNature::Plus => params.p(),
            StateOfNature::Minus => params.q(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            StateOfNature::Plus => StateOfNature::Minus,
            StateOfNature::Minus => StateOfNature::Plus,
        }
    }
}

/// An agent's action: `Zero` encodes exact indifference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Plus,
    Zero,
    Minus,
}

impl Action {
    pub fn from_sign(s: i64) -> Self {
        match s.cmp(&0) {
            std::cmp::Ordering::Greater => Action::Plus,
            std::cmp::Ordering::Equal => Action::Zero,
            std::cmp::Ordering::Less => Action::Minus,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Action::Plus => 1,
            Action::Zero => 0,
            Action::Minus => -1,
        }
    }
}

/// A realized run of `±1` signals together with its prefix sums.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalPath {
    steps: Vec<i8>,
    prefix_sums: Vec<i64>,
}

impl SignalPath {
    pub fn from_steps(steps: Vec<i8>) -> Result<Self> {
        if steps.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter("signal steps must be ±1".into()));
        }
        let mut sum = 0i64;
        let prefix_sums = steps
            .iter()
            .map(|&s| {
                sum += s as i64;
                sum
            })
            .collect();
        Ok(Self { steps, prefix_sums })
    }

    pub fn steps(&self) -> &[i8] {
        &self.steps
    }

    pub fn prefix_sums(&self) -> &[i64] {
        &self.prefix_sums
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Final position `S_n` (0 for the empty path).
    pub fn endpoint(&self) -> i64 {
        self.prefix_sums.last().copied().unwrap_or(0)
    }
}

/// Tail event on a walk position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailPredicate {
    Le(i64),
    Lt(i64),
    Eq(i64),
    Gt(i64),
}

impl TailPredicate {
    fn matches(self, s: i64) -> bool {
        match self {
            TailPredicate::Le(x) => s <= x,
            TailPredicate::Lt(x) => s < x,
            TailPredicate::Eq(x) => s == x,
            TailPredicate::Gt(x) => s > x,
        }
    }
}

/// Exact sparse pmf of `S_n` under a fixed state, mass kept as ln-probability.
/// Only parity-valid positions are materialized.
#[derive(Debug, Clone)]
pub struct WalkDistribution {
    n: usize,
    state: StateOfNature,
    log_mass: BTreeMap<i64, f64>,
}

impl WalkDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn state(&self) -> StateOfNature {
        self.state
    }

    /// ln P[S_n = s], or `-inf` off the support.
    pub fn log_mass(&self, s: i64) -> f64 {
        self.log_mass.get(&s).copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn mass(&self, s: i64) -> f64 {
        self.log_mass(s).exp()
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.log_mass.iter().map(|(&s, &lm)| (s, lm))
    }

    /// ln of the total mass; 0 up to rounding for a fresh pmf.
    pub fn log_total(&self) -> f64 {
        log_sum_exp(self.log_mass.values().copied())
    }
}

/// Exact binomial pmf of the signal walk after `n` steps:
/// `P[S_n = s] = C(n, (n+s)/2) r^{(n+s)/2} (1-r)^{(n-s)/2}` with
/// `r = p` under `Plus` and `r = q` under `Minus`. `n = 0` is a point
/// mass at the origin.
pub fn walk_pmf(params: &ModelParams, state: StateOfNature, n: usize) -> WalkDistribution {
    let r = state.up_prob(params);
    let (lr, l1r) = (r.ln(), (1.0 - r).ln());
    let lnfact = ln_factorials(n);
    let mut log_mass = BTreeMap::new();
    for k in 0..=n {
        let s = 2 * k as i64 - n as i64;
        let lc = lnfact[n] - lnfact[k] - lnfact[n - k];
        log_mass.insert(s, lc + k as f64 * lr + (n - k) as f64 * l1r);
    }
    // normalize away the accumulated rounding in the log binomials
    let total = log_sum_exp(log_mass.values().copied());
    for lm in log_mass.values_mut() {
        *lm -= total;
    }
    WalkDistribution { n, state, log_mass }
}

/// Probability of a tail event under the distribution, via log-sum-exp.
pub fn tail_prob(dist: &WalkDistribution, predicate: TailPredicate) -> f64 {
    log_tail_prob(dist, predicate).exp()
}

/// ln of the tail probability; `-inf` when no position matches.
pub fn log_tail_prob(dist: &WalkDistribution, predicate: TailPredicate) -> f64 {
    log_sum_exp(
        dist.log_mass
            .iter()
            .filter(|(&s, _)| predicate.matches(s))
            .map(|(_, &lm)| lm),
    )
}

/// `P[state][ S_k <= b_k for all k <= n ]` by forward DP with per-step
/// truncation. Infeasible bounds yield exact 0, not an error.
pub fn all_below_prob(
    params: &ModelParams,
    state: StateOfNature,
    n: usize,
    thresholds: &[i64],
) -> Result<f64> {
    log_all_below_prob(params, state, n, thresholds).map(f64::exp)
}

/// Log-domain variant of [`all_below_prob`].
pub fn log_all_below_prob(
    params: &ModelParams,
    state: StateOfNature,
    n: usize,
    thresholds: &[i64],
) -> Result<f64> {
    if thresholds.len() != n {
        return Err(Error::InvalidParameter(format!(
            "expected {n} per-step thresholds, got {}",
            thresholds.len()
        )));
    }
    let r = state.up_prob(params);
    let (lup, ldn) = (r.ln(), (1.0 - r).ln());
    // mass[j] = ln P[survived, S_k = -k + 2j]
    let mut mass = vec![0.0f64];
    for (k, &bound) in (1..=n).zip(thresholds) {
        let mut next = vec![f64::NEG_INFINITY; mass.len() + 1];
        for (j, &m) in mass.iter().enumerate() {
            if m == f64::NEG_INFINITY {
                continue;
            }
            next[j + 1] = log_add(next[j + 1], m + lup);
            next[j] = log_add(next[j], m + ldn);
        }
        // keep positions s = -k + 2j <= bound
        let j_max = if bound >= k as i64 {
            k as i64
        } else {
            (bound + k as i64).div_euclid(2)
        };
        if j_max < 0 {
            return Ok(f64::NEG_INFINITY);
        }
        next.truncate(j_max as usize + 1);
        mass = next;
    }
    Ok(log_sum_exp(mass.into_iter()))
}

/// `P+[ S_n/n >= (2 pbar - 1) - 2 eps | S_n/n <= 2 pbar - 1 ]` from exact
/// binomial sums. Tends to 1 as `n` grows: conditioned on an unlikely low
/// walk, the walk concentrates just below the conditioning threshold.
pub fn conditional_tail_concentration(
    params: &ModelParams,
    n: usize,
    pbar: f64,
    eps: f64,
) -> Result<f64> {
    if !(pbar < params.p()) {
        return Err(Error::InvalidParameter(format!(
            "pbar must be below p, got pbar={pbar} p={}",
            params.p()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let tau = 2.0 * pbar - 1.0;
    let hi = floor_guard(n as f64 * tau);
    let lo = ceil_guard(n as f64 * (tau - 2.0 * eps));
    let dist = walk_pmf(params, StateOfNature::Plus, n);
    let log_den = log_tail_prob(&dist, TailPredicate::Le(hi));
    if log_den == f64::NEG_INFINITY {
        return Err(Error::Domain(
            "conditioning event S_n/n <= 2 pbar - 1 has zero probability".into(),
        ));
    }
    let log_num = log_sum_exp(
        dist.log_mass
            .iter()
            .filter(|(&s, _)| s >= lo && s <= hi)
            .map(|(_, &lm)| lm),
    );
    Ok((log_num - log_den).exp())
}

/// Draw an i.i.d. `±1` signal path; deterministic for a fixed seed.
pub fn sample_path(
    params: &ModelParams,
    state: StateOfNature,
    n: usize,
    seed: u64,
) -> Result<SignalPath> {
    if n == 0 {
        return Err(Error::InvalidParameter("path length must be >= 1".into()));
    }
    let r = state.up_prob(params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (0..n)
        .map(|_| if rng.gen::<f64>() < r { 1 } else { -1 })
        .collect();
    SignalPath::from_steps(steps)
}

/// Greatest integer `<= x`, treating near-integers (within the lattice
/// guard band) as exact. This is the canonical reduction of `S_n/n <= t`
/// to `S_n <= floor(n*t)` with equality kept when `n*t` is integral.
pub fn floor_guard(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < LATTICE_GUARD {
        r as i64
    } else {
        x.floor() as i64
    }
}

/// Least integer `>= x`, with the same guard-band treatment.
pub fn ceil_guard(x: f64) -> i64 {
    let r = x.round();
    if (x - r).abs() < LATTICE_GUARD {
        r as i64
    } else {
        x.ceil() as i64
    }
}

/// ln(e^a + e^b) robust to `-inf` operands.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// ln Σ e^{x_i} over an iterator; `-inf` for an empty sum.
pub fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.filter(|v| *v != f64::NEG_INFINITY).collect();
    let Some(&max) = vals.iter().max_by(|a, b| a.total_cmp(b)) else {
        return f64::NEG_INFINITY;
    };
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn ln_factorials(n: usize) -> Vec<f64> {
    // compensated running sum: the drift of a plain sum is visible at the
    // 1e-12 level for n in the thousands
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0f64;
    let mut carry = 0.0f64;
    out.push(0.0);
    for k in 1..=n {
        let term = (k as f64).ln() + carry;
        let next = acc + term;
        carry = term - (next - acc);
        acc = next;
        out.push(acc);
    }
    out
}
