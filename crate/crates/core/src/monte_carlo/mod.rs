//! Exact-jump simulation of absorbed chains and estimators built on it.
//!
//! Every path (or particle) draws from its own ChaCha stream: the seed picks
//! the key, the path index picks the stream and the position inside the
//! stream counts events. Results therefore do not depend on how paths are
//! spread over threads.

mod fleming_viot;

pub use fleming_viot::{fleming_viot, ParticleEnsemble};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{AbsorbedChain, Error, Result, StateDistribution};

pub(crate) fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

pub(crate) fn sample_initial(rng: &mut ChaCha8Rng, mu: &StateDistribution) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 1;
    for (i, &w) in mu.weights().iter().enumerate() {
        if w > 0.0 {
            last = i + 1;
            acc += w;
            if u < acc {
                return i + 1;
            }
        }
    }
    last
}

/// Target of the jump out of `x`, or `None` for an escape through the top.
pub(crate) fn sample_jump(rng: &mut ChaCha8Rng, chain: &AbsorbedChain, x: usize) -> Option<usize> {
    let total = chain.exit_rate(x);
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (y, r) in chain.row(x) {
        acc += r;
        last = Some(y);
        if u < acc {
            return Some(y);
        }
    }
    if chain.escape_rate(x) > 0.0 {
        None
    } else {
        last
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathOutcome {
    Absorbed {
        time: f64,
    },
    /// Still alive at the horizon (censored).
    Survived,
    /// Stopped on entering the requested state set.
    HitSet {
        time: f64,
    },
    /// Left the window through the top under kill mode.
    Escaped {
        time: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRecord {
    pub start: usize,
    /// `0` when absorbed; the last window state otherwise.
    pub end_state: usize,
    pub outcome: PathOutcome,
}

impl PathRecord {
    pub fn absorption_time(&self) -> Option<f64> {
        match self.outcome {
            PathOutcome::Absorbed { time } => Some(time),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub horizon: f64,
    pub n_states: usize,
    pub paths: Vec<PathRecord>,
}

impl TrajectoryBatch {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn survivors(&self) -> impl Iterator<Item = &PathRecord> {
        self.paths
            .iter()
            .filter(|p| p.outcome == PathOutcome::Survived)
    }
}

/// Simulates `n_paths` independent paths from `mu` up to `horizon`
/// (possibly infinite), optionally stopping on entry into `stop_on_set`.
pub fn simulate_batch(
    chain: &AbsorbedChain,
    mu: &StateDistribution,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    stop_on_set: Option<&[usize]>,
) -> Result<TrajectoryBatch> {
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be at least 1".into()));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Domain(format!(
            "horizon must be >= 0, got {horizon}"
        )));
    }
    if mu.n_states() != chain.n_states() {
        return Err(Error::Domain(
            "initial law and chain live on different windows".into(),
        ));
    }
    let stop = stop_on_set.map(|s| chain.normalize_set(s)).transpose()?;
    let mut in_stop = vec![false; chain.n_states()];
    for &x in stop.iter().flatten() {
        in_stop[x] = true;
    }
    if horizon.is_infinite() && stop.is_none() {
        check_absorbing_everywhere(chain)?;
    }
    let paths = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(chain, mu, horizon, &in_stop, &mut stream(seed, i)))
        .collect();
    Ok(TrajectoryBatch {
        seed,
        horizon,
        n_states: chain.n_states(),
        paths,
    })
}

fn check_absorbing_everywhere(chain: &AbsorbedChain) -> Result<()> {
    let n = chain.n_states();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut reaches = vec![false; n];
    reaches[0] = true;
    for x in 1..n {
        if chain.escape_rate(x) > 0.0 {
            reaches[x] = true;
        }
        for (y, _) in chain.row(x) {
            reverse[y].push(x);
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&x| reaches[x]).collect();
    while let Some(y) = stack.pop() {
        for &x in &reverse[y] {
            if !reaches[x] {
                reaches[x] = true;
                stack.push(x);
            }
        }
    }
    match reaches.iter().position(|r| !r) {
        Some(x) => Err(Error::Domain(format!(
            "state {x} never reaches 0, an infinite horizon would not terminate"
        ))),
        None => Ok(()),
    }
}

fn simulate_path(
    chain: &AbsorbedChain,
    mu: &StateDistribution,
    horizon: f64,
    in_stop: &[bool],
    rng: &mut ChaCha8Rng,
) -> PathRecord {
    let start = sample_initial(rng, mu);
    let mut x = start;
    let mut t = 0.0;
    if in_stop[x] {
        return PathRecord {
            start,
            end_state: x,
            outcome: PathOutcome::HitSet { time: 0.0 },
        };
    }
    loop {
        let q = chain.exit_rate(x);
        if q == 0.0 {
            break;
        }
        let next_t = t + exponential(rng, q);
        if next_t > horizon {
            break;
        }
        t = next_t;
        match sample_jump(rng, chain, x) {
            None => {
                return PathRecord {
                    start,
                    end_state: x,
                    outcome: PathOutcome::Escaped { time: t },
                }
            }
            Some(0) => {
                return PathRecord {
                    start,
                    end_state: 0,
                    outcome: PathOutcome::Absorbed { time: t },
                }
            }
            Some(y) => {
                x = y;
                if in_stop[x] {
                    return PathRecord {
                        start,
                        end_state: x,
                        outcome: PathOutcome::HitSet { time: t },
                    };
                }
            }
        }
    }
    PathRecord {
        start,
        end_state: x,
        outcome: PathOutcome::Survived,
    }
}

/// Empirical law of the end states among paths alive at the horizon, and
/// the fraction of such paths.
pub fn conditional_estimate(batch: &TrajectoryBatch) -> Result<(StateDistribution, f64)> {
    let mut counts = vec![0.0; batch.n_states - 1];
    let mut survivors = 0usize;
    for p in batch.survivors() {
        counts[p.end_state - 1] += 1.0;
        survivors += 1;
    }
    if survivors == 0 {
        return Err(Error::NoSurvivors);
    }
    let dist = StateDistribution::from_weights(counts)?;
    Ok((dist, survivors as f64 / batch.n_paths() as f64))
}
