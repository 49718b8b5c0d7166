//! Frequency estimation of error and survival events by simulation, with
//! per-run RNG streams derived from `(seed, run index)` so results are
//! bitwise reproducible for any worker count, and a least-squares slope
//! fit for extracting exponential rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    log_add, log_sum_exp, tail_prob, walk_pmf, Action, ModelParams, StateOfNature, TailPredicate,
};
use crate::rates::{last_action_rules, regime_b_error_prob, LastActionRule};
use crate::thresholds::compute_thresholds;

/// Simulated settings: the three tractable decision regimes plus `G`,
/// the groupthink proxy "both walks stay within the survival thresholds"
/// evaluated under `Theta = +1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimRegime {
    A,
    B,
    C,
    G,
}

impl SimRegime {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(SimRegime::A),
            "B" => Ok(SimRegime::B),
            "C" => Ok(SimRegime::C),
            "G" => Ok(SimRegime::G),
            other => Err(Error::InvalidParameter(format!(
                "unknown simulation regime: {other}"
            ))),
        }
    }
}

impl std::fmt::Display for SimRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            SimRegime::A => 'A',
            SimRegime::B => 'B',
            SimRegime::C => 'C',
            SimRegime::G => 'G',
        };
        write!(f, "{c}")
    }
}

const MAX_PERIODS_GENERAL: usize = 100_000;
/// The all-actions regime runs an O(n^2) consistency DP per run.
const MAX_PERIODS_ALL_ACTIONS: usize = 200;
/// Runs per parallel work unit; merging is plain u64 addition, so the
/// split has no effect on the result.
const CHUNK: u64 = 4096;
/// Exact reference curves are attached only below this size.
const EXACT_CAP: usize = 4096;
const EXACT_CAP_B: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub p: f64,
    pub n: usize,
    pub runs: u64,
    pub seed: u64,
    pub regime: SimRegime,
}

/// Per-period empirical frequencies: error frequencies for A/B/C,
/// survival frequencies for G, with exact references where available.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub config: SimConfig,
    /// Raw per-period event counts (the merge-invariant statistic).
    pub counts: Vec<u64>,
    pub freq: Vec<f64>,
    pub std_err: Vec<f64>,
    pub exact: Vec<Option<f64>>,
    pub delta: Vec<Option<f64>>,
}

/// Run the simulation on the global thread pool.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    let counts = simulate_counts(config)?;
    finish(config, counts)
}

/// Run the simulation on a dedicated pool of `threads` workers. The result
/// is byte-identical to [`simulate`] for the same config and seed.
pub fn simulate_with_threads(config: &SimConfig, threads: usize) -> Result<SimResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Resource(format!("thread pool: {e}")))?;
    let counts = pool.install(|| simulate_counts(config))?;
    finish(config, counts)
}

fn simulate_counts(config: &SimConfig) -> Result<Vec<u64>> {
    if config.runs == 0 {
        return Err(Error::InvalidParameter("need at least one run".into()));
    }
    if config.n == 0 {
        return Err(Error::InvalidParameter("need at least one period".into()));
    }
    let cap = match config.regime {
        SimRegime::C => MAX_PERIODS_ALL_ACTIONS,
        _ => MAX_PERIODS_GENERAL,
    };
    if config.n > cap {
        return Err(Error::Resource(format!(
            "regime {} simulation is bounded at n <= {cap}, got {}",
            config.regime, config.n
        )));
    }
    let params = ModelParams::new(config.p)?;
    let shared = RunContext::new(&params, config)?;

    let chunks = config.runs.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(config.runs);
            let mut acc = vec![0u64; config.n];
            for run in lo..hi {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(run);
                shared.one_run(&params, config, &mut rng, &mut acc);
            }
            acc
        })
        .reduce(
            || vec![0u64; config.n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(counts)
}

/// Immutable per-config tables shared by all runs.
struct RunContext {
    rules: Vec<LastActionRule>,
    effective_bounds: Vec<i64>,
}

impl RunContext {
    fn new(params: &ModelParams, config: &SimConfig) -> Result<Self> {
        let rules = match config.regime {
            SimRegime::B => last_action_rules(params, config.n)?,
            _ => Vec::new(),
        };
        let effective_bounds = match config.regime {
            SimRegime::G => compute_thresholds(params, config.n)?.0.effective,
            _ => Vec::new(),
        };
        Ok(Self {
            rules,
            effective_bounds,
        })
    }

    fn one_run(
        &self,
        params: &ModelParams,
        config: &SimConfig,
        rng: &mut ChaCha8Rng,
        acc: &mut [u64],
    ) {
        match config.regime {
            SimRegime::A => run_no_obs(params, config.n, rng, acc),
            SimRegime::B => run_last_action(params, &self.rules, config.n, rng, acc),
            SimRegime::C => run_all_actions(params, config.n, rng, acc),
            SimRegime::G => run_survival(params, &self.effective_bounds, config.n, rng, acc),
        }
    }
}

fn draw_theta(rng: &mut ChaCha8Rng) -> StateOfNature {
    if rng.gen::<bool>() {
        StateOfNature::Plus
    } else {
        StateOfNature::Minus
    }
}

fn step(rng: &mut ChaCha8Rng, up_prob: f64) -> i64 {
    if rng.gen::<f64>() < up_prob {
        1
    } else {
        -1
    }
}

fn run_no_obs(params: &ModelParams, n: usize, rng: &mut ChaCha8Rng, acc: &mut [u64]) {
    let theta = draw_theta(rng);
    let up = theta.up_prob(params);
    let sign = match theta {
        StateOfNature::Plus => 1,
        StateOfNature::Minus => -1,
    };
    let mut s = 0i64;
    for slot in acc.iter_mut().take(n) {
        s += step(rng, up);
        if s * sign <= 0 {
            *slot += 1;
        }
    }
}

fn run_last_action(
    params: &ModelParams,
    rules: &[LastActionRule],
    n: usize,
    rng: &mut ChaCha8Rng,
    acc: &mut [u64],
) {
    let theta = draw_theta(rng);
    let up = theta.up_prob(params);
    let correct = match theta {
        StateOfNature::Plus => Action::Plus,
        StateOfNature::Minus => Action::Minus,
    };
    let mut s1 = 0i64;
    let mut s2 = 0i64;
    for k in 1..=n {
        let observed = if k == 1 {
            Action::Zero
        } else {
            Action::from_sign(s2)
        };
        s1 += step(rng, up);
        let action = rules[k - 1].action(s1, observed);
        if action != correct {
            acc[k - 1] += 1;
        }
        // the partner's walk is one period behind the decision that uses it
        s2 += step(rng, up);
    }
}

fn run_all_actions(params: &ModelParams, n: usize, rng: &mut ChaCha8Rng, acc: &mut [u64]) {
    let theta = draw_theta(rng);
    let up = theta.up_prob(params);
    let correct = match theta {
        StateOfNature::Plus => Action::Plus,
        StateOfNature::Minus => Action::Minus,
    };
    let lo = params.log_odds();
    let (lup_p, ldn_p) = (params.p().ln(), params.q().ln());
    // consistency DP over the partner's hypothetical walk, pruned each
    // period to the sign region her observed action pins down
    let mut mass_p = vec![0.0f64]; // under Theta = +1, position -j + 2i
    let mut mass_m = vec![0.0f64];
    let mut s1 = 0i64;
    let mut s2 = 0i64;
    for k in 1..=n {
        s1 += step(rng, up);
        let lik = log_sum_exp(mass_p.iter().copied()) - log_sum_exp(mass_m.iter().copied());
        let stat = s1 as f64 * lo + lik;
        let band = 1e-9 * lik.abs().max(1.0);
        let action = if stat.abs() <= band {
            Action::Zero
        } else if stat > 0.0 {
            Action::Plus
        } else {
            Action::Minus
        };
        if action != correct {
            acc[k - 1] += 1;
        }
        // partner takes her period-k signal and her action becomes visible
        // to the next decision
        s2 += step(rng, up);
        let observed = s2.signum();
        let mut next_p = vec![f64::NEG_INFINITY; mass_p.len() + 1];
        let mut next_m = vec![f64::NEG_INFINITY; mass_m.len() + 1];
        for i in 0..mass_p.len() {
            if mass_p[i] != f64::NEG_INFINITY || mass_m[i] != f64::NEG_INFINITY {
                next_p[i + 1] = log_add(next_p[i + 1], mass_p[i] + lup_p);
                next_p[i] = log_add(next_p[i], mass_p[i] + ldn_p);
                next_m[i + 1] = log_add(next_m[i + 1], mass_m[i] + ldn_p);
                next_m[i] = log_add(next_m[i], mass_m[i] + lup_p);
            }
        }
        for (i, (np, nm)) in next_p.iter_mut().zip(next_m.iter_mut()).enumerate() {
            let pos = 2 * i as i64 - k as i64;
            if pos.signum() != observed {
                *np = f64::NEG_INFINITY;
                *nm = f64::NEG_INFINITY;
            }
        }
        mass_p = next_p;
        mass_m = next_m;
    }
}

fn run_survival(
    params: &ModelParams,
    bounds: &[i64],
    n: usize,
    rng: &mut ChaCha8Rng,
    acc: &mut [u64],
) {
    // survival frequency of the groupthink proxy, conditioned on Theta = +1
    let up = params.p();
    let mut s1 = 0i64;
    let mut s2 = 0i64;
    let mut alive = true;
    for k in 1..=n {
        s1 += step(rng, up);
        s2 += step(rng, up);
        if s1 > bounds[k - 1] || s2 > bounds[k - 1] {
            alive = false;
        }
        if alive {
            acc[k - 1] += 1;
        } else {
            break;
        }
    }
}

fn finish(config: &SimConfig, counts: Vec<u64>) -> Result<SimResult> {
    let params = ModelParams::new(config.p)?;
    let runs = config.runs as f64;
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / runs).collect();
    let std_err: Vec<f64> = freq
        .iter()
        .map(|&f| (f * (1.0 - f) / runs).sqrt())
        .collect();
    let exact = exact_reference(&params, config)?;
    let delta: Vec<Option<f64>> = freq
        .iter()
        .zip(&exact)
        .map(|(&f, e)| e.map(|e| f - e))
        .collect();
    Ok(SimResult {
        config: config.clone(),
        counts,
        freq,
        std_err,
        exact,
        delta,
    })
}

fn exact_reference(params: &ModelParams, config: &SimConfig) -> Result<Vec<Option<f64>>> {
    let n = config.n;
    Ok(match config.regime {
        SimRegime::A if n <= EXACT_CAP => (1..=n)
            .map(|k| {
                let d = walk_pmf(params, StateOfNature::Plus, k);
                Some(tail_prob(&d, TailPredicate::Le(0)))
            })
            .collect(),
        SimRegime::B if n <= EXACT_CAP_B => (1..=n)
            .map(|k| regime_b_error_prob(params, k).ok())
            .collect(),
        SimRegime::G if n <= EXACT_CAP => {
            let (_, table) = compute_thresholds(params, n)?;
            (1..=n)
                .map(|k| Some((2.0 * table.log_w_plus[k]).exp()))
                .collect()
        }
        _ => vec![None; n],
    })
}

/// Least-squares slope of `-ln(prob)` against `n`: the empirical
/// exponential rate of a decaying curve.
pub fn estimate_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(
            "rate estimation needs at least 3 points".into(),
        ));
    }
    if points.iter().any(|&(_, p)| p <= 0.0) {
        return Err(Error::Domain(
            "rate estimation needs strictly positive probabilities".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| n).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, p)| -p.ln()).collect();
    Ok(slope(&xs, &ys))
}

/// Slope fit on `(n, ln prob)` pairs directly; for values too small to
/// exponentiate.
pub fn estimate_rate_log(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidParameter(
            "rate estimation needs at least 3 points".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| n).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, lp)| -lp).collect();
    Ok(slope(&xs, &ys))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
