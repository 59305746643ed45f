//! Shared permutation machinery for the Monte Carlo non-stationarity tests.
//!
//! Each simulation draws its permutation from its own ChaCha stream: the
//! master seed selects the key and the simulation index selects the stream.
//! Simulations can therefore run in any order, on any number of threads,
//! and still reproduce the same permutations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GwError, Result};

/// Default number of randomisations.
pub const DEFAULT_NSIM: usize = 99;

/// Relative tolerance under which a simulated statistic counts as tied with
/// the observed one.
const TIE_RTOL: f64 = 1e-12;

/// Permutation of `0..n` for simulation `sim` under `seed`.
pub fn permutation(seed: u64, sim: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sim as u64);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

fn tied(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

/// Counts of simulated values at or below, and at or above, the observed
/// value. NaN simulations count on both sides.
pub fn tail_counts(observed: f64, simulated: &[f64]) -> (usize, usize) {
    let mut below = 0;
    let mut above = 0;
    for &s in simulated {
        if s.is_nan() || tied(s, observed) {
            below += 1;
            above += 1;
        } else if s < observed {
            below += 1;
        } else {
            above += 1;
        }
    }
    (below, above)
}

/// Rank-based pseudo p-value of the observed value among the simulations:
/// its position counted from the bottom, divided by nsim + 1.
pub fn rank_p_value(observed: f64, simulated: &[f64]) -> f64 {
    if observed.is_nan() {
        return f64::NAN;
    }
    let (below, _) = tail_counts(observed, simulated);
    (below + 1) as f64 / (simulated.len() + 1) as f64
}

/// One-tailed (upper) pseudo p-value: the share of the ranked distribution,
/// observed value included, that is at least as large as the observed value.
pub fn upper_p_value(observed: f64, simulated: &[f64]) -> f64 {
    if observed.is_nan() {
        return f64::NAN;
    }
    let (_, above) = tail_counts(observed, simulated);
    (above + 1) as f64 / (simulated.len() + 1) as f64
}

/// Number of ranks that make up each tail of a two-tailed test at level
/// `alpha`; errors when the tails cannot hold a single rank.
pub fn two_tailed_critical_rank(nsim: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(GwError::Config(format!("significance level {alpha} is outside (0, 1)")));
    }
    let k = ((nsim + 1) as f64 * alpha / 2.0 + 1e-9).floor() as usize;
    if k == 0 {
        return Err(GwError::Config(format!(
            "nsim = {nsim} cannot resolve two-tailed {:.1}% tails; need nsim >= {}",
            alpha * 50.0,
            (2.0 / alpha).ceil() as usize - 1
        )));
    }
    Ok(k)
}

/// Whether the observed value lies in the top or bottom tail.
pub fn two_tailed_flag(observed: f64, simulated: &[f64], critical_rank: usize) -> bool {
    if observed.is_nan() {
        return false;
    }
    let (below, above) = tail_counts(observed, simulated);
    let (rank_low, rank_high) = (below + 1, above + 1);
    rank_low <= critical_rank || rank_high <= critical_rank
}

pub(crate) fn check_nsim(nsim: usize) -> Result<()> {
    if nsim == 0 {
        return Err(GwError::Config("nsim must be at least 1".into()));
    }
    Ok(())
}
