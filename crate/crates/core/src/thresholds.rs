//! The groupthink threshold recursion and its survival probabilities.
//!
//! An outside observer who has only seen "neither agent ever chose +1"
//! can compute, period by period, the largest walk value still consistent
//! with that event: `t_1 = 0` and
//! `t_k = -ln(P+[W_{k-1}]/P-[W_{k-1}]) / ln(p/q)`,
//! where `W_k` is the event that the walk stayed at or below the thresholds
//! through period `k`. The per-agent survival probabilities are computed by
//! a forward DP over truncated walk positions, simultaneously under both
//! states, in log domain (exact rationals in oracle mode).

use std::collections::BTreeMap;

use num::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{floor_guard, log_add, log_sum_exp, ModelParams};
use crate::rates::solve_groupthink_fixed_point;
use crate::rational::{pow_rat, Rat, RationalParams};

/// Log-space guard band for the cross-multiplied threshold comparison
/// `s·ln(p/q) + ln P+[W] <= ln P-[W]`. Comparisons inside the band are
/// treated as exact boundary ties (included) and flagged.
const COMPARE_BAND: f64 = 1e-12;

/// The recursion values `t_k` and the binding integer bounds `e_k`
/// (greatest integer `<= t_k` with the parity of `k`).
#[derive(Debug, Clone)]
pub struct ThresholdSequence {
    /// `t_k` for k = 1..=n at index k-1.
    pub t: Vec<f64>,
    /// `e_k` for k = 1..=n at index k-1.
    pub effective: Vec<i64>,
}

/// Survival probabilities of the threshold event under both states.
#[derive(Debug, Clone)]
pub struct SurvivalTable {
    /// `ln P+[W_k]` for k = 0..=n (index k, entry 0 is 0).
    pub log_w_plus: Vec<f64>,
    /// `ln P-[W_k]`, same indexing.
    pub log_w_minus: Vec<f64>,
    /// Normalized distribution of `S_n` given `W_n` under `Theta = +1`,
    /// at the final period only (the DP keeps O(n) state).
    pub final_cond_dist_plus: BTreeMap<i64, f64>,
    /// Periods whose boundary comparison fell inside the guard band.
    pub boundary_flags: Vec<usize>,
}

/// Run the threshold recursion for `n` periods in log domain.
pub fn compute_thresholds(
    params: &ModelParams,
    n: usize,
) -> Result<(ThresholdSequence, SurvivalTable)> {
    if n == 0 {
        return Err(Error::Domain("threshold recursion needs n >= 1".into()));
    }
    let lo = params.log_odds();
    let (lup_p, ldn_p) = (params.p().ln(), params.q().ln());
    let (lup_m, ldn_m) = (params.q().ln(), params.p().ln());

    // survival mass over positions s = -k + 2j, log domain, both states
    let mut mass_p = vec![0.0f64];
    let mut mass_m = vec![0.0f64];
    let mut t = Vec::with_capacity(n);
    let mut effective = Vec::with_capacity(n);
    let mut log_w_plus = Vec::with_capacity(n + 1);
    let mut log_w_minus = Vec::with_capacity(n + 1);
    let mut boundary_flags = Vec::new();
    log_w_plus.push(0.0);
    log_w_minus.push(0.0);

    for k in 1..=n {
        let gap = log_w_minus[k - 1] - log_w_plus[k - 1];
        let t_k = gap / lo;
        let e_hi = parity_floor((gap + COMPARE_BAND) / lo, k);
        let e_lo = parity_floor((gap - COMPARE_BAND) / lo, k);
        if e_hi != e_lo {
            boundary_flags.push(k);
        }
        // ties on the boundary are inside W (posterior exactly even
        // means the agent does not choose +1)
        let e_k = e_hi;
        t.push(t_k);
        effective.push(e_k);

        mass_p = step_truncated(&mass_p, lup_p, ldn_p, k, e_k);
        mass_m = step_truncated(&mass_m, lup_m, ldn_m, k, e_k);
        log_w_plus.push(log_sum_exp(mass_p.iter().copied()));
        log_w_minus.push(log_sum_exp(mass_m.iter().copied()));
    }

    let total = log_w_plus[n];
    let mut final_cond_dist_plus = BTreeMap::new();
    for (j, &lm) in mass_p.iter().enumerate() {
        if lm != f64::NEG_INFINITY {
            let s = 2 * j as i64 - n as i64;
            final_cond_dist_plus.insert(s, (lm - total).exp());
        }
    }

    Ok((
        ThresholdSequence { t, effective },
        SurvivalTable {
            log_w_plus,
            log_w_minus,
            final_cond_dist_plus,
            boundary_flags,
        },
    ))
}

fn step_truncated(mass: &[f64], lup: f64, ldn: f64, k: usize, bound: i64) -> Vec<f64> {
    let mut next = vec![f64::NEG_INFINITY; mass.len() + 1];
    for (j, &m) in mass.iter().enumerate() {
        if m == f64::NEG_INFINITY {
            continue;
        }
        next[j + 1] = log_add(next[j + 1], m + lup);
        next[j] = log_add(next[j], m + ldn);
    }
    let j_max = ((bound + k as i64).div_euclid(2)).min(k as i64);
    if j_max < 0 {
        return Vec::new();
    }
    next.truncate(j_max as usize + 1);
    next
}

fn parity_floor(x: f64, k: usize) -> i64 {
    let mut e = x.floor() as i64;
    if (e - k as i64).rem_euclid(2) != 0 {
        e -= 1;
    }
    e
}

/// Exact-rational version of the recursion: the comparison
/// `p^s·P+[W] <= q^s·P-[W]` is cross-multiplied, so boundary ties are exact.
#[derive(Debug, Clone)]
pub struct RationalSurvival {
    /// Binding integer bounds `e_k`, k = 1..=n at index k-1.
    pub effective: Vec<i64>,
    /// `P+[W_k]` for k = 0..=n.
    pub w_plus: Vec<Rat>,
    /// `P-[W_k]` for k = 0..=n.
    pub w_minus: Vec<Rat>,
}

pub fn compute_thresholds_rational(
    params: &RationalParams,
    n: usize,
) -> Result<RationalSurvival> {
    if n == 0 {
        return Err(Error::Domain("threshold recursion needs n >= 1".into()));
    }
    let p = params.p().clone();
    let q = params.q().clone();
    let mut dist: BTreeMap<i64, (Rat, Rat)> = BTreeMap::new();
    dist.insert(0, (Rat::one(), Rat::one()));
    let mut w_plus = vec![Rat::one()];
    let mut w_minus = vec![Rat::one()];
    let mut effective = Vec::with_capacity(n);

    for k in 1..=n {
        let e_k = rational_bound(params, &w_plus[k - 1], &w_minus[k - 1], k);
        effective.push(e_k);
        let mut next: BTreeMap<i64, (Rat, Rat)> = BTreeMap::new();
        for (s, (mp, mm)) in dist {
            for (step, up) in [(1i64, true), (-1i64, false)] {
                let s2 = s + step;
                if s2 > e_k {
                    continue;
                }
                let (wp, wm) = if up { (&p, &q) } else { (&q, &p) };
                let entry = next
                    .entry(s2)
                    .or_insert_with(|| (Rat::zero(), Rat::zero()));
                entry.0 += &mp * wp;
                entry.1 += &mm * wm;
            }
        }
        dist = next;
        w_plus.push(dist.values().fold(Rat::zero(), |a, v| a + &v.0));
        w_minus.push(dist.values().fold(Rat::zero(), |a, v| a + &v.1));
    }

    Ok(RationalSurvival {
        effective,
        w_plus,
        w_minus,
    })
}

/// Largest `s` with the parity of `k` such that `p^s·w_plus <= q^s·w_minus`,
/// i.e. the exact integer form of `s <= t_k`.
fn rational_bound(params: &RationalParams, w_plus: &Rat, w_minus: &Rat, k: usize) -> i64 {
    let k = k as i64;
    let mut s = k;
    while s >= -k {
        let (lhs, rhs) = if s >= 0 {
            (
                pow_rat(params.p(), s as u32) * w_plus,
                pow_rat(params.q(), s as u32) * w_minus,
            )
        } else {
            (
                pow_rat(params.q(), (-s) as u32) * w_plus,
                pow_rat(params.p(), (-s) as u32) * w_minus,
            )
        };
        if lhs <= rhs {
            return s;
        }
        s -= 2;
    }
    // unreachable for p in (1/2, 1): s = -k always satisfies the bound
    -k
}

/// Finite-`n` estimates of the groupthink-event exponent:
/// the series `-(2/k)·ln P+[W_k]` and its final value.
pub fn g_rate_estimate(params: &ModelParams, n: usize) -> Result<(Vec<f64>, f64)> {
    let (_, table) = compute_thresholds(params, n)?;
    let series: Vec<f64> = (1..=n)
        .map(|k| -2.0 * table.log_w_plus[k] / k as f64)
        .collect();
    let last = *series.last().expect("n >= 1");
    Ok((series, last))
}

/// The series `t_k/k`; its tail approaches the fixed point `hat_t` from
/// above. Small periods sit above `t*` (e.g. `t_2/2 = 1/2`), so consumers
/// should judge the tail, not the head.
pub fn threshold_convergence(params: &ModelParams, n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter("need n >= 2".into()));
    }
    let (seq, _) = compute_thresholds(params, n)?;
    Ok(seq
        .t
        .iter()
        .enumerate()
        .map(|(i, &t)| t / (i + 1) as f64)
        .collect())
}

/// `P+[ S_n/n > hat_t - eps | W_n ]`: conditioned on surviving the
/// thresholds, the walk concentrates just below `hat_t·n`.
pub fn groupthink_profile(params: &ModelParams, n: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let (hat_t, _) = solve_groupthink_fixed_point(params, 1e-12)?;
    let (_, table) = compute_thresholds(params, n)?;
    let cutoff = floor_guard(n as f64 * (hat_t - eps));
    if table
        .final_cond_dist_plus
        .keys()
        .next()
        .is_some_and(|&min| cutoff < min)
    {
        // the event covers the whole conditional support
        return Ok(1.0);
    }
    Ok(table
        .final_cond_dist_plus
        .iter()
        .filter(|(&s, _)| s > cutoff)
        .map(|(_, &m)| m)
        .sum())
}
