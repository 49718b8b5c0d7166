//! Closed-form and fixed-point asymptotic learning rates, information
//! transmission efficiencies, and the exact finite-`n` error probability
//! for the regime where one agent observes the other's last action.
//!
//! All rates are measured in nats per period: the exponential decay
//! exponent of the error probability.

use crate::error::{Error, Result};
use crate::model::{
    floor_guard, log_add, log_sum_exp, log_tail_prob, walk_pmf, Action, ModelParams,
    StateOfNature, TailPredicate,
};
use crate::rational::{posterior_sign, rational_walk_pmf, Rat, RationalParams};

use num::Zero;

/// Kullback-Leibler divergence between Bernoulli(p') and Bernoulli(p),
/// with the convention 0·ln 0 = 0.
pub fn kl_binary(p_prime: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "reference probability must lie strictly inside (0,1), got {p}"
        )));
    }
    if !(0.0..=1.0).contains(&p_prime) {
        return Err(Error::InvalidParameter(format!(
            "p_prime must lie in [0,1], got {p_prime}"
        )));
    }
    let mut out = 0.0;
    if p_prime > 0.0 {
        out += p_prime * (p_prime / p).ln();
    }
    if p_prime < 1.0 {
        out += (1.0 - p_prime) * ((1.0 - p_prime) / (1.0 - p)).ln();
    }
    Ok(out.max(0.0))
}

/// Rate of learning from private signals alone: `D_KL(1/2 || p)`.
pub fn rate_no_obs(params: &ModelParams) -> f64 {
    kl_binary(0.5, params.p()).expect("params keep p inside (0,1)")
}

/// Asymptotic indifference threshold `t* = a_p / ln(p/q)` for the averaged
/// walk `S_n/n`, and the matching probability `p* = (1 + t*)/2`.
pub fn asymptotic_threshold(params: &ModelParams) -> (f64, f64) {
    let t_star = rate_no_obs(params) / params.log_odds();
    (t_star, 0.5 * (1.0 + t_star))
}

/// Finite-`n` threshold fraction: the `±1`-conditional observation ratio
/// `(1/n)·ln(P+[S_{n-1} > 0] / P+[S_{n-1} < 0]) / ln(p/q)`. Converges to
/// `t*`; `n = 1` is 0 because a zero-signal action carries no log-odds.
pub fn finite_threshold(params: &ModelParams, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if n == 1 {
        return Ok(0.0);
    }
    let dist = walk_pmf(params, StateOfNature::Plus, n - 1);
    let l_pos = log_tail_prob(&dist, TailPredicate::Gt(0));
    let l_neg = log_tail_prob(&dist, TailPredicate::Lt(0));
    Ok((l_pos - l_neg) / (n as f64 * params.log_odds()))
}

/// Rate when unilaterally observing the other agent's last action
/// (equal to the rate when observing all of her actions):
/// `D_KL(p* || p) + a_p`.
pub fn rate_unidirectional(params: &ModelParams) -> f64 {
    let (_, p_star) = asymptotic_threshold(params);
    kl_binary(p_star, params.p()).expect("p* lies in (0,1)") + rate_no_obs(params)
}

/// Solve the groupthink fixed point: the unique root of
/// `f(t) = D_KL((1+t)/2 || p)/ln(p/q) - t` in `(0, t*)`, by bisection.
/// Returns `(hat_t, hat_p)` with `hat_p = (1 + hat_t)/2 < p`.
pub fn solve_groupthink_fixed_point(params: &ModelParams, tol: f64) -> Result<(f64, f64)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let p = params.p();
    let lo_unit = params.log_odds();
    let f = |t: f64| kl_binary(0.5 * (1.0 + t), p).expect("t stays below 2p-1") / lo_unit - t;
    let (t_star, _) = asymptotic_threshold(params);
    let (mut a, mut b) = (0.0f64, t_star);
    if !(f(a) > 0.0 && f(b) < 0.0) {
        return Err(Error::Domain(
            "fixed-point bracket (0, t*) invalid; this should be impossible".into(),
        ));
    }
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break; // f64 resolution exhausted
        }
        if f(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let hat_t = 0.5 * (a + b);
    // evaluation noise: ln(x) near 1 carries absolute error ~eps, and f
    // divides by ln(p/q), which vanishes as p -> 1/2
    let noise_floor = 8.0 * f64::EPSILON / lo_unit;
    if f(hat_t).abs() > tol.max(noise_floor) {
        return Err(Error::Domain(format!(
            "fixed-point residual {} above tolerance",
            f(hat_t)
        )));
    }
    Ok((hat_t, 0.5 * (1.0 + hat_t)))
}

/// Upper bound on the bidirectional rate: the groupthink-event exponent
/// `D_KL(1 - hat_p || p)`, which equals `2·D_KL(hat_p || p)`.
pub fn rate_groupthink(params: &ModelParams) -> f64 {
    let (_, hat_p) = solve_groupthink_fixed_point(params, 1e-12)
        .expect("fixed point solvable for valid params");
    kl_binary(1.0 - hat_p, params.p()).expect("hat_q lies in (0,1)")
}

/// Information transmission efficiencies: the action history is worth the
/// same as this fraction of the partner's raw signals. Unidirectional
/// observation gives `b_p/a_p - 1`; bidirectional is bounded by
/// `g_bar/a_p - 1`.
pub fn efficiencies(params: &ModelParams) -> (f64, f64) {
    let a = rate_no_obs(params);
    (
        rate_unidirectional(params) / a - 1.0,
        rate_groupthink(params) / a - 1.0,
    )
}

/// Exact error probability of the best guess from `n + floor(alpha*n)`
/// pooled signals, ties excluded from "correct". The exponent converges
/// to `(1 + alpha)·a_p`.
pub fn pooled_error_prob(params: &ModelParams, n: usize, alpha: f64) -> Result<f64> {
    log_pooled_error_prob(params, n, alpha).map(f64::exp)
}

/// Log-domain variant of [`pooled_error_prob`].
pub fn log_pooled_error_prob(params: &ModelParams, n: usize, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0,1], got {alpha}"
        )));
    }
    let m = n + floor_guard(alpha * n as f64).max(0) as usize;
    let dist = walk_pmf(params, StateOfNature::Plus, m);
    Ok(log_tail_prob(&dist, TailPredicate::Le(0)))
}

/// Finite-`n` decision rule for the agent who observes her own `n` signals
/// plus the partner's action at period `n-1`. The per-observation log-odds
/// are `lambda(+1) = ln(P+[S_{n-1} > 0]/P+[S_{n-1} < 0])`, `lambda(0) = 0`,
/// `lambda(-1) = -lambda(+1)`, and the action is the sign of
/// `S_n·ln(p/q) + lambda(a)` with an exact-tie mapping to `Zero`.
#[derive(Debug, Clone)]
pub struct LastActionRule {
    n: usize,
    log_odds: f64,
    /// ln P+[A_{n-1} = a] for a = +1, 0, -1; -inf where impossible.
    log_obs_prob: [f64; 3],
    /// Log-odds contribution of each observation, same index order.
    lambda: [f64; 3],
    /// Largest S_n classified "not +1" for each observation.
    not_plus_max: [Option<i64>; 3],
}

impl LastActionRule {
    pub fn new(params: &ModelParams, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        let tails = if n == 1 {
            // the partner's period-0 action rests on zero signals
            [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY]
        } else {
            let dist = walk_pmf(params, StateOfNature::Plus, n - 1);
            [
                log_tail_prob(&dist, TailPredicate::Gt(0)),
                log_tail_prob(&dist, TailPredicate::Eq(0)),
                log_tail_prob(&dist, TailPredicate::Lt(0)),
            ]
        };
        Ok(Self::from_tails(params, n, tails))
    }

    fn from_tails(params: &ModelParams, n: usize, log_obs_prob: [f64; 3]) -> Self {
        let lo = params.log_odds();
        let lambda = if log_obs_prob[0] == f64::NEG_INFINITY {
            [0.0, 0.0, 0.0]
        } else {
            let big = log_obs_prob[0] - log_obs_prob[2];
            [big, 0.0, -big]
        };
        let not_plus_max = std::array::from_fn(|i| {
            if log_obs_prob[i] == f64::NEG_INFINITY {
                None
            } else {
                Some(floor_guard(-lambda[i] / lo))
            }
        });
        Self {
            n,
            log_odds: lo,
            log_obs_prob,
            lambda,
            not_plus_max,
        }
    }

    fn obs_index(observed: Action) -> usize {
        match observed {
            Action::Plus => 0,
            Action::Zero => 1,
            Action::Minus => 2,
        }
    }

    /// The agent's action given her walk endpoint and the observed action.
    pub fn action(&self, walk_end: i64, observed: Action) -> Action {
        let i = Self::obs_index(observed);
        let stat = walk_end as f64 * self.log_odds + self.lambda[i];
        let band = 1e-9 * self.lambda[i].abs().max(1.0);
        if stat.abs() <= band {
            Action::Zero
        } else if stat > 0.0 {
            Action::Plus
        } else {
            Action::Minus
        }
    }

    /// Diagnostic threshold fraction `t_n^*` implied by the rule.
    pub fn threshold_fraction(&self) -> f64 {
        self.lambda[0] / (self.n as f64 * self.log_odds)
    }

    /// Largest walk endpoint classified "not +1" for an observation, or
    /// `None` when that observation cannot occur. The error probability
    /// route sums tails up to these cutoffs; the per-path classifier in
    /// [`Self::action`] agrees with them on every integer endpoint.
    pub fn not_plus_cutoff(&self, observed: Action) -> Option<i64> {
        self.not_plus_max[Self::obs_index(observed)]
    }
}

/// Rules for every period up to `n` from one incremental pmf sweep;
/// same values as per-period construction, O(n^2) total instead of a
/// fresh pmf per period.
pub fn last_action_rules(params: &ModelParams, n: usize) -> Result<Vec<LastActionRule>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let (lup, ldn) = (params.p().ln(), params.q().ln());
    let mut rules = Vec::with_capacity(n);
    rules.push(LastActionRule::from_tails(
        params,
        1,
        [f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY],
    ));
    // log pmf of S_m over positions s = 2j - m, advanced one period at a time
    let mut mass = vec![0.0f64];
    for m in 1..n {
        let mut next = vec![f64::NEG_INFINITY; mass.len() + 1];
        for (j, &v) in mass.iter().enumerate() {
            next[j + 1] = log_add(next[j + 1], v + lup);
            next[j] = log_add(next[j], v + ldn);
        }
        mass = next;
        let mut tails = [f64::NEG_INFINITY; 3];
        for (j, &v) in mass.iter().enumerate() {
            let s = 2 * j as i64 - m as i64;
            let slot = match s.cmp(&0) {
                std::cmp::Ordering::Greater => 0,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 2,
            };
            tails[slot] = log_add(tails[slot], v);
        }
        rules.push(LastActionRule::from_tails(params, m + 1, tails));
    }
    Ok(rules)
}

/// Exact `P+[B_n != +1]` (ties count as errors) for the last-action regime,
/// from the decision cutoffs and exact binomial tails.
pub fn regime_b_error_prob(params: &ModelParams, n: usize) -> Result<f64> {
    log_regime_b_error_prob(params, n).map(f64::exp)
}

/// Log-domain variant of [`regime_b_error_prob`].
pub fn log_regime_b_error_prob(params: &ModelParams, n: usize) -> Result<f64> {
    let rule = LastActionRule::new(params, n)?;
    let dist = walk_pmf(params, StateOfNature::Plus, n);
    let mut terms = Vec::with_capacity(3);
    for i in 0..3 {
        let (lp, cutoff) = (rule.log_obs_prob[i], rule.not_plus_max[i]);
        if let Some(cut) = cutoff {
            if lp != f64::NEG_INFINITY {
                terms.push(lp + log_tail_prob(&dist, TailPredicate::Le(cut)));
            }
        }
    }
    Ok(log_sum_exp(terms.into_iter()))
}

/// Exact-rational `P+[B_n != +1]`: every boundary is decided by exact
/// cross-multiplied posterior comparison. Matches the brute-force oracle
/// bit for bit; meant for small and moderate `n`.
pub fn regime_b_error_prob_rational(params: &RationalParams, n: usize) -> Result<Rat> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let prev = rational_walk_pmf(params, StateOfNature::Plus, n - 1);
    let mut obs = [Rat::zero(), Rat::zero(), Rat::zero()]; // +1, 0, -1 under Theta=+1
    let mut obs_minus = [Rat::zero(), Rat::zero(), Rat::zero()];
    for (s, m) in &prev {
        let idx = match s.cmp(&0) {
            std::cmp::Ordering::Greater => 0,
            std::cmp::Ordering::Equal => 1,
            std::cmp::Ordering::Less => 2,
        };
        obs[idx] += m;
        // mirror: P-[A = a] = P+[A = -a]
        obs_minus[2 - idx] += m;
    }
    let pmf = rational_walk_pmf(params, StateOfNature::Plus, n);
    let mut err = Rat::zero();
    for (idx, (lik_p, lik_m)) in obs.iter().zip(obs_minus.iter()).enumerate() {
        if lik_p.is_zero() {
            continue;
        }
        for (s, m) in &pmf {
            if posterior_sign(params, *s, lik_p, lik_m) <= 0 {
                err += m * &obs[idx];
            }
        }
    }
    Ok(err)
}

/// All asymptotic rates and efficiencies for one signal strength.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub p: f64,
    /// `a_p`: no observation.
    pub rate_no_obs: f64,
    /// `t*`: asymptotic indifference threshold for `S_n/n`.
    pub threshold_fraction: f64,
    /// `p* = (1 + t*)/2`.
    pub threshold_prob: f64,
    /// `b_p`: observing the other's last action.
    pub rate_unidirectional: f64,
    /// `c_p = b_p`: observing all of the other's actions.
    pub rate_all_actions: f64,
    /// Fixed point `hat_t` of the groupthink threshold recursion.
    pub groupthink_fraction: f64,
    /// `hat_p = (1 + hat_t)/2`.
    pub groupthink_prob: f64,
    /// `hat_q = 1 - hat_p`.
    pub groupthink_prob_flip: f64,
    /// `g_bar = D_KL(hat_q || p)`: groupthink-event exponent.
    pub rate_groupthink: f64,
    /// Upper bound on the bidirectional rate (equals `g_bar`).
    pub rate_bidirectional_bound: f64,
    /// Unidirectional transmission efficiency `b_p/a_p - 1`.
    pub eff_unidirectional: f64,
    /// Bidirectional transmission efficiency bound `g_bar/a_p - 1`.
    pub eff_bidirectional_bound: f64,
}

impl RateReport {
    pub fn compute(params: &ModelParams) -> Result<Self> {
        let a = rate_no_obs(params);
        let (t_star, p_star) = asymptotic_threshold(params);
        let b = rate_unidirectional(params);
        let (hat_t, hat_p) = solve_groupthink_fixed_point(params, 1e-12)?;
        let g = kl_binary(1.0 - hat_p, params.p())?;
        Ok(Self {
            p: params.p(),
            rate_no_obs: a,
            threshold_fraction: t_star,
            threshold_prob: p_star,
            rate_unidirectional: b,
            rate_all_actions: b,
            groupthink_fraction: hat_t,
            groupthink_prob: hat_p,
            groupthink_prob_flip: 1.0 - hat_p,
            rate_groupthink: g,
            rate_bidirectional_bound: g,
            eff_unidirectional: b / a - 1.0,
            eff_bidirectional_bound: g / a - 1.0,
        })
    }

    /// Violated invariants, empty when the report is internally consistent.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                out.push(format!("p={}: {msg}", self.p));
            }
        };
        check(
            self.rate_no_obs < self.rate_unidirectional,
            "expected a_p < b_p",
        );
        check(
            self.rate_unidirectional == self.rate_all_actions,
            "expected b_p = c_p",
        );
        check(
            self.rate_groupthink < self.rate_unidirectional,
            "expected g_bar < b_p",
        );
        check(
            self.groupthink_fraction > 0.0 && self.groupthink_fraction < self.threshold_fraction,
            "expected 0 < hat_t < t*",
        );
        check(
            self.threshold_fraction < 2.0 * self.p - 1.0,
            "expected t* < 2p - 1",
        );
        check(
            self.groupthink_prob > 0.5 && self.groupthink_prob < self.p,
            "expected 1/2 < hat_p < p",
        );
        check(
            (self.threshold_prob - 0.5 * (1.0 + self.threshold_fraction)).abs() < 1e-15,
            "expected p* = (1 + t*)/2",
        );
        check(
            (self.groupthink_prob_flip - (1.0 - self.groupthink_prob)).abs() < 1e-15,
            "expected hat_q = 1 - hat_p",
        );
        out
    }
}

/// Compute the full report for one `p`.
pub fn rate_report(params: &ModelParams) -> Result<RateReport> {
    RateReport::compute(params)
}

/// The 97-point grid p = 0.51, 0.515, ..., 0.99 used by the global checks.
pub fn default_grid() -> Vec<f64> {
    (0..97).map(|k| (510 + 5 * k) as f64 / 1000.0).collect()
}

#[cfg(test)]
#[allow(clippy::excessive_precision)] // frozen oracle digits kept in full
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(p: f64) -> ModelParams {
        ModelParams::new(p).unwrap()
    }

    // Expected values frozen from a 50-digit evaluation of the closed forms
    // (independent bisection for the fixed point).
    const KL_HALF_34: f64 = 0.14384103622589046;
    const RATE_A_09: f64 = 0.51082562376599068;
    const T_STAR_34: f64 = 0.13092975357145744;
    const P_STAR_34: f64 = 0.56546487678572872;
    const T_STAR_055: f64 = 0.025041862316655627;
    const RATE_B_34: f64 = 0.22435751306751411;
    const HAT_T_34: f64 = 0.089732870024878684;
    const HAT_P_34: f64 = 0.54486643501243934;
    const G_BAR_34: f64 = 0.19716326741357998;
    const EFF_UNI_34: f64 = 0.55976012794554100;
    const EFF_BI_34: f64 = 0.37070249621916902;

    #[test]
    fn kl_zero_at_equality() {
        assert_eq!(kl_binary(0.5, 0.5).unwrap(), 0.0);
        for p in [0.51, 0.75, 0.99] {
            assert_eq!(kl_binary(p, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn kl_matches_high_precision_oracle() {
        assert_abs_diff_eq!(kl_binary(0.5, 0.75).unwrap(), KL_HALF_34, epsilon = 1e-9);
    }

    #[test]
    fn kl_rejects_degenerate_reference() {
        assert!(kl_binary(0.5, 0.0).is_err());
        assert!(kl_binary(0.5, 1.0).is_err());
        assert!(kl_binary(1.5, 0.5).is_err());
        // endpoints of p' are fine under the 0 ln 0 convention
        assert!(kl_binary(0.0, 0.5).unwrap().is_finite());
        assert!(kl_binary(1.0, 0.5).unwrap().is_finite());
    }

    #[test]
    fn rate_no_obs_values() {
        assert_abs_diff_eq!(rate_no_obs(&params(0.75)), KL_HALF_34, epsilon = 1e-12);
        assert_abs_diff_eq!(rate_no_obs(&params(0.9)), RATE_A_09, epsilon = 1e-9);
        // vanishes continuously at p -> 1/2+
        assert!(rate_no_obs(&params(0.5000001)) < 1e-9);
    }

    #[test]
    fn asymptotic_threshold_values() {
        let (t, p_star) = asymptotic_threshold(&params(0.75));
        assert_abs_diff_eq!(t, T_STAR_34, epsilon = 1e-12);
        assert_abs_diff_eq!(p_star, P_STAR_34, epsilon = 1e-12);
        let (t55, _) = asymptotic_threshold(&params(0.55));
        assert_abs_diff_eq!(t55, T_STAR_055, epsilon = 1e-12);
        assert!(t55 < 0.1);
    }

    #[test]
    fn threshold_identity() {
        // t* ln(p/q) = a_p by definition, on the whole grid
        for p in default_grid() {
            let m = params(p);
            let (t, _) = asymptotic_threshold(&m);
            assert!(
                (t * m.log_odds() - rate_no_obs(&m)).abs() < 1e-12,
                "identity fails at p={p}"
            );
        }
    }

    #[test]
    fn finite_threshold_examples() {
        let m = params(0.75);
        assert_eq!(finite_threshold(&m, 1).unwrap(), 0.0);
        // one observed signal forces the ratio p/q: t_2^* = 1/2 for any p
        for p in [0.55, 0.75, 0.95] {
            assert_abs_diff_eq!(finite_threshold(&params(p), 2).unwrap(), 0.5, epsilon = 1e-12);
        }
        let t2000 = finite_threshold(&m, 2000).unwrap();
        let gap = (t2000 - T_STAR_34).abs();
        assert!(gap <= 0.01, "gap {gap} at n=2000");
        // frozen from the exact binomial tails
        assert_abs_diff_eq!(t2000, 0.13276291189279393, epsilon = 1e-9);
    }

    #[test]
    fn finite_threshold_gap_halves() {
        let m = params(0.75);
        let g500 = (finite_threshold(&m, 500).unwrap() - T_STAR_34).abs();
        let g4000 = (finite_threshold(&m, 4000).unwrap() - T_STAR_34).abs();
        assert!(
            g4000 <= 0.5 * g500,
            "gap did not halve: n=500 -> {g500}, n=4000 -> {g4000}"
        );
    }

    #[test]
    fn rate_unidirectional_value_and_dual_form() {
        let m = params(0.75);
        assert_abs_diff_eq!(rate_unidirectional(&m), RATE_B_34, epsilon = 1e-5);
        // D_KL(q*||p) = D_KL(p*||p) + a_p on the grid
        for p in default_grid() {
            let mp = params(p);
            let (_, p_star) = asymptotic_threshold(&mp);
            let lhs = kl_binary(1.0 - p_star, p).unwrap();
            let rhs = kl_binary(p_star, p).unwrap() + rate_no_obs(&mp);
            assert!((lhs - rhs).abs() < 1e-10, "dual form fails at p={p}");
        }
    }

    #[test]
    fn ratio_band_on_grid() {
        for p in default_grid() {
            let m = params(p);
            let ratio = rate_unidirectional(&m) / rate_no_obs(&m);
            assert!(
                (1.5..=1.5625).contains(&ratio),
                "ratio {ratio} out of band at p={p}"
            );
        }
    }

    #[test]
    fn fixed_point_values_and_residual() {
        let m = params(0.75);
        let (hat_t, hat_p) = solve_groupthink_fixed_point(&m, 1e-12).unwrap();
        assert_abs_diff_eq!(hat_t, HAT_T_34, epsilon = 1e-10);
        assert_abs_diff_eq!(hat_p, HAT_P_34, epsilon = 1e-10);
        assert!(hat_p < m.p());
        let residual = kl_binary(hat_p, m.p()).unwrap() / m.log_odds() - hat_t;
        assert!(residual.abs() < 1e-11);
    }

    #[test]
    fn fixed_point_lemma_on_grid() {
        // 2 D_KL(hat_p || p) = D_KL(hat_q || p), and hat_t < t*, hat_q > q*
        for p in default_grid() {
            let m = params(p);
            let (hat_t, hat_p) = solve_groupthink_fixed_point(&m, 1e-12).unwrap();
            let lemma = 2.0 * kl_binary(hat_p, p).unwrap() - kl_binary(1.0 - hat_p, p).unwrap();
            assert!(lemma.abs() < 1e-10, "lemma residual {lemma} at p={p}");
            let (t_star, p_star) = asymptotic_threshold(&m);
            assert!(hat_t < t_star, "hat_t >= t* at p={p}");
            assert!(1.0 - hat_p > 1.0 - p_star, "hat_q <= q* at p={p}");
        }
    }

    #[test]
    fn groupthink_rate_value_and_ordering() {
        let m = params(0.75);
        assert_abs_diff_eq!(rate_groupthink(&m), G_BAR_34, epsilon = 1e-9);
        for p in [0.51, 0.75, 0.99] {
            let mp = params(p);
            assert!(rate_groupthink(&mp) < rate_unidirectional(&mp));
        }
        assert!(rate_groupthink(&params(0.5000001)) < 1e-6);
    }

    #[test]
    fn efficiency_values_and_bands() {
        let m = params(0.75);
        let (uni, bi) = efficiencies(&m);
        assert_abs_diff_eq!(uni, EFF_UNI_34, epsilon = 1e-9);
        assert_abs_diff_eq!(bi, EFF_BI_34, epsilon = 1e-9);
        for p in default_grid() {
            let (u, b) = efficiencies(&params(p));
            assert!((0.5..=0.5625).contains(&u), "eff_uni {u} out of band at p={p}");
            assert!(u - b >= 0.18, "efficiency gap {} below 0.18 at p={p}", u - b);
        }
    }

    #[test]
    fn pooled_error_matches_plain_tail() {
        let m = params(0.75);
        let n = 100;
        let plain = |k: usize| {
            tail_at_or_below_zero(&m, k)
        };
        assert_abs_diff_eq!(
            pooled_error_prob(&m, n, 0.0).unwrap(),
            plain(n),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pooled_error_prob(&m, n, 1.0).unwrap(),
            plain(2 * n),
            epsilon = 1e-15
        );
        assert!(pooled_error_prob(&m, n, 1.5).is_err());
    }

    fn tail_at_or_below_zero(m: &ModelParams, k: usize) -> f64 {
        let d = walk_pmf(m, StateOfNature::Plus, k);
        crate::model::tail_prob(&d, TailPredicate::Le(0))
    }

    #[test]
    fn pooled_rate_near_scaled_exponent() {
        let m = params(0.75);
        let lp = log_pooled_error_prob(&m, 2000, 0.5).unwrap();
        let rate = -lp / 2000.0;
        let target = 1.5 * rate_no_obs(&m);
        assert!(
            (rate - target).abs() / target < 0.02,
            "pooled rate {rate} vs {target}"
        );
    }

    #[test]
    fn regime_b_small_n_exact_fractions() {
        // hand-enumerated at p = 3/4: q at n=1, 5/32 at n=2
        let m = params(0.75);
        assert_abs_diff_eq!(regime_b_error_prob(&m, 1).unwrap(), 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(
            regime_b_error_prob(&m, 2).unwrap(),
            5.0 / 32.0,
            epsilon = 1e-14
        );
        let rp = RationalParams::new(crate::rational::rat(3, 4)).unwrap();
        assert_eq!(
            regime_b_error_prob_rational(&rp, 2).unwrap(),
            crate::rational::rat(5, 32)
        );
        assert_eq!(
            regime_b_error_prob_rational(&rp, 3).unwrap(),
            crate::rational::rat(53, 512)
        );
        assert_eq!(
            regime_b_error_prob_rational(&rp, 4).unwrap(),
            crate::rational::rat(343, 4096)
        );
    }

    #[test]
    fn regime_b_float_matches_rational_route() {
        let m = params(0.75);
        let rp = RationalParams::new(crate::rational::rat(3, 4)).unwrap();
        for n in 1..=10 {
            let f = regime_b_error_prob(&m, n).unwrap();
            let r = crate::rational::rat_to_f64(&regime_b_error_prob_rational(&rp, n).unwrap());
            assert!((f - r).abs() < 1e-12, "n={n}: float {f} vs rational {r}");
        }
    }

    #[test]
    fn regime_b_rate_near_unidirectional() {
        let m = params(0.75);
        let lp = log_regime_b_error_prob(&m, 1500).unwrap();
        let rate = -lp / 1500.0;
        let rel = (rate - RATE_B_34).abs() / RATE_B_34;
        assert!(rel < 0.03, "rate {rate} rel gap {rel}");
        // frozen from the log-domain tails
        assert_abs_diff_eq!(rate, 0.22806322864996129, epsilon = 1e-9);
    }

    #[test]
    fn rule_sweep_matches_per_period_construction() {
        let m = params(0.73);
        let swept = last_action_rules(&m, 40).unwrap();
        for (k, rule) in swept.iter().enumerate() {
            let direct = LastActionRule::new(&m, k + 1).unwrap();
            assert!(
                (rule.threshold_fraction() - direct.threshold_fraction()).abs() < 1e-12
                    || (k == 0 && rule.threshold_fraction() == 0.0),
                "k={}",
                k + 1
            );
            for s in -(k as i64 + 1)..=(k as i64 + 1) {
                for a in [Action::Plus, Action::Zero, Action::Minus] {
                    assert_eq!(rule.action(s, a), direct.action(s, a), "k={} s={s}", k + 1);
                }
            }
        }
    }

    #[test]
    fn classifier_and_cutoffs_agree_everywhere() {
        // the simulation classifies runs with action(); the exact error
        // probability sums tails below the cutoffs: same rule, two
        // representations, equal on every lattice point
        for p in [0.51, 0.6, 0.75, 0.97] {
            let m = params(p);
            for rule in last_action_rules(&m, 60).unwrap() {
                for a in [Action::Plus, Action::Zero, Action::Minus] {
                    let Some(cut) = rule.not_plus_cutoff(a) else {
                        continue;
                    };
                    for s in -64i64..=64 {
                        let by_action = rule.action(s, a) != Action::Plus;
                        assert_eq!(by_action, s <= cut, "p={p} s={s} obs={a:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn last_action_rule_tie_cases() {
        let m = params(0.75);
        let rule = LastActionRule::new(&m, 2).unwrap();
        // lambda(+1) is exactly ln(p/q) at n=2, so S_2 = -1 parity aside,
        // the boundary S = 1 with observed -1 is an exact tie
        assert_eq!(rule.action(1, Action::Minus), Action::Zero);
        assert_eq!(rule.action(2, Action::Minus), Action::Plus);
        assert_eq!(rule.action(0, Action::Minus), Action::Minus);
        assert_eq!(rule.action(0, Action::Zero), Action::Zero);
        assert_abs_diff_eq!(rule.threshold_fraction(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn report_invariants_hold_across_range() {
        for p in [0.51, 0.75, 0.99] {
            let report = rate_report(&params(p)).unwrap();
            let violations = report.invariant_violations();
            assert!(violations.is_empty(), "{violations:?}");
        }
    }

    #[test]
    fn rate_no_obs_monotone_on_grid() {
        let grid = default_grid();
        for w in grid.windows(2) {
            assert!(rate_no_obs(&params(w[1])) > rate_no_obs(&params(w[0])));
        }
    }
}
