//! Fleming-Viot particle system: independent copies of the chain where an
//! absorbed particle jumps onto the position of another particle chosen
//! uniformly among the rest.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{exponential, sample_initial, sample_jump, stream};
use crate::{AbsorbedChain, Error, Result, StateDistribution};

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub time: f64,
    pub positions: Vec<usize>,
    pub redraw_count: u64,
}

impl ParticleEnsemble {
    pub fn n_particles(&self) -> usize {
        self.positions.len()
    }

    /// Particle count per state `1..=N` (index `x - 1`).
    pub fn counts(&self, n_states: usize) -> Vec<usize> {
        let mut counts = vec![0; n_states - 1];
        for &x in &self.positions {
            counts[x - 1] += 1;
        }
        counts
    }

    pub fn empirical(&self, n_states: usize) -> Result<StateDistribution> {
        StateDistribution::from_weights(
            self.counts(n_states)
                .into_iter()
                .map(|c| c as f64)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    particle: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event; equal times go to
    // the lower particle index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.particle.cmp(&self.particle))
    }
}

/// Runs `n_particles` particles from `mu` up to `horizon` and returns the
/// ensemble at each of the (sorted) `sample_times`.
pub fn fleming_viot(
    chain: &AbsorbedChain,
    mu: &StateDistribution,
    n_particles: usize,
    horizon: f64,
    seed: u64,
    sample_times: &[f64],
) -> Result<Vec<ParticleEnsemble>> {
    if n_particles < 2 {
        return Err(Error::Domain(
            "Fleming-Viot needs at least 2 particles".into(),
        ));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!(
            "horizon must be finite and >= 0, got {horizon}"
        )));
    }
    if mu.n_states() != chain.n_states() {
        return Err(Error::Domain(
            "initial law and chain live on different windows".into(),
        ));
    }
    if sample_times.windows(2).any(|w| !(w[0] <= w[1]))
        || sample_times.iter().any(|&t| !(0.0..=horizon).contains(&t))
    {
        return Err(Error::Domain(
            "sample times must be sorted and lie within [0, horizon]".into(),
        ));
    }
    let mut rngs: Vec<ChaCha8Rng> = (0..n_particles as u64).map(|i| stream(seed, i)).collect();
    let mut positions: Vec<usize> = rngs.iter_mut().map(|r| sample_initial(r, mu)).collect();
    let mut queue = BinaryHeap::with_capacity(n_particles);
    for (i, rng) in rngs.iter_mut().enumerate() {
        let q = chain.exit_rate(positions[i]);
        if q > 0.0 {
            queue.push(Event {
                time: exponential(rng, q),
                particle: i,
            });
        }
    }
    let mut redraws = 0u64;
    let mut snapshots = Vec::with_capacity(sample_times.len());
    let mut pending = sample_times.iter().copied().peekable();
    while let Some(&Event { time, particle }) = queue.peek() {
        while let Some(&t) = pending.peek() {
            if t < time {
                snapshots.push(ParticleEnsemble {
                    time: t,
                    positions: positions.clone(),
                    redraw_count: redraws,
                });
                pending.next();
            } else {
                break;
            }
        }
        if time > horizon {
            break;
        }
        queue.pop();
        let rng = &mut rngs[particle];
        let target = match sample_jump(rng, chain, positions[particle]) {
            Some(y) if y != 0 => y,
            _ => {
                redraws += 1;
                let other = rng.random_range(0..n_particles - 1);
                positions[if other >= particle { other + 1 } else { other }]
            }
        };
        positions[particle] = target;
        let q = chain.exit_rate(target);
        if q > 0.0 {
            queue.push(Event {
                time: time + exponential(rng, q),
                particle,
            });
        }
    }
    for t in pending {
        snapshots.push(ParticleEnsemble {
            time: t,
            positions: positions.clone(),
            redraw_count: redraws,
        });
    }
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::build_logistic;
    use crate::BoundaryMode;

    #[test]
    fn two_state_particles_stay_at_one() {
        let chain = AbsorbedChain::from_entries(&[(1, 0, 1.0)], 2, BoundaryMode::Reflect).unwrap();
        let mu = StateDistribution::dirac(2, 1).unwrap();
        let n = 200;
        let horizon = 50.0;
        let snaps = fleming_viot(&chain, &mu, n, horizon, 3, &[10.0, 50.0]).unwrap();
        assert!(snaps.iter().all(|s| s.positions.iter().all(|&x| x == 1)));
        // Redraws form a Poisson process of rate n.
        let count = snaps[1].redraw_count as f64;
        let expected = n as f64 * horizon;
        assert!((count - expected).abs() < 4.0 * expected.sqrt(), "{count}");
    }

    #[test]
    fn snapshots_avoid_zero_and_keep_size() {
        let chain = build_logistic(1.0, 1.0, 1.0, 20, BoundaryMode::Reflect).unwrap();
        let mu = StateDistribution::dirac(20, 1).unwrap();
        let times = [0.0, 0.5, 1.0, 2.0, 5.0];
        let snaps = fleming_viot(&chain, &mu, 300, 5.0, 1, &times).unwrap();
        assert_eq!(snaps.len(), times.len());
        for (s, t) in snaps.iter().zip(times) {
            assert_eq!(s.time, t);
            assert_eq!(s.n_particles(), 300);
            assert!(s.positions.iter().all(|&x| x >= 1 && x < 20));
        }
        assert!(snaps[4].redraw_count >= snaps[1].redraw_count);
    }

    #[test]
    fn reproducible() {
        let chain = build_logistic(1.0, 1.0, 1.0, 20, BoundaryMode::Reflect).unwrap();
        let mu = StateDistribution::uniform(20).unwrap();
        let a = fleming_viot(&chain, &mu, 100, 3.0, 8, &[3.0]).unwrap();
        let b = fleming_viot(&chain, &mu, 100, 3.0, 8, &[3.0]).unwrap();
        assert_eq!(a, b);
        let c = fleming_viot(&chain, &mu, 100, 3.0, 9, &[3.0]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_inputs() {
        let chain = build_logistic(1.0, 1.0, 1.0, 5, BoundaryMode::Reflect).unwrap();
        let mu = StateDistribution::uniform(5).unwrap();
        assert!(fleming_viot(&chain, &mu, 1, 1.0, 0, &[]).is_err());
        assert!(fleming_viot(&chain, &mu, 10, 1.0, 0, &[2.0]).is_err());
        assert!(fleming_viot(&chain, &mu, 10, 1.0, 0, &[0.5, 0.2]).is_err());
    }
}
