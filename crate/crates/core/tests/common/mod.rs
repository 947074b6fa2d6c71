//! Oracles shared by the integration tests: dense matrix exponentials,
//! first-step linear solves and random chain generators.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qsd_core::{AbsorbedChain, BoundaryMode, StateDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dense_expm(chain: &AbsorbedChain, t: f64) -> DMatrix<f64> {
    let q = chain.to_dense();
    let n = q.len();
    DMatrix::from_fn(n, n, |i, j| q[i][j] * t).exp()
}

/// Surviving part of `mu P_t` from the dense exponential (index `x - 1`).
pub fn dense_evolve(chain: &AbsorbedChain, mu: &StateDistribution, t: f64) -> Vec<f64> {
    let p = dense_expm(chain, t);
    let n = chain.n_states();
    (1..n)
        .map(|y| (1..n).map(|x| mu.weight(x) * p[(x, y)]).sum())
        .collect()
}

pub fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `E_x(T_A)` for every state from the first-step equations
/// `sum_y Q(x, y) E_y = -1` off `A`, `E = 0` on `A`. Index is the state.
pub fn expected_hitting(chain: &AbsorbedChain, target: &[usize]) -> Vec<f64> {
    let q = chain.to_dense();
    let free: Vec<usize> = (0..chain.n_states())
        .filter(|x| !target.contains(x))
        .collect();
    let m = DMatrix::from_fn(free.len(), free.len(), |i, j| q[free[i]][free[j]]);
    let rhs = DVector::from_element(free.len(), -1.0);
    let sol = m.lu().solve(&rhs).expect("hitting system is singular");
    let mut out = vec![0.0; chain.n_states()];
    for (i, &x) in free.iter().enumerate() {
        out[x] = sol[i];
    }
    out
}

/// Dense chain on `{0..n}` with every off-diagonal rate drawn from `U(0.1, 2)`
/// and `n` drawn from `sizes`.
pub fn random_dense_chain(
    rng: &mut ChaCha8Rng,
    sizes: std::ops::RangeInclusive<usize>,
) -> AbsorbedChain {
    let n = rng.random_range(sizes);
    let mut entries = Vec::new();
    for x in 1..=n {
        for y in 0..=n {
            if y != x {
                entries.push((x, y, rng.random_range(0.1..2.0)));
            }
        }
    }
    AbsorbedChain::from_entries(&entries, n + 1, BoundaryMode::Reflect).unwrap()
}

/// Sparse chain: each off-diagonal rate present with probability 1/2, plus
/// nearest-neighbour links so the transient states communicate.
pub fn random_sparse_chain(rng: &mut ChaCha8Rng, n: usize) -> AbsorbedChain {
    let mut entries = Vec::new();
    for x in 1..=n {
        for y in 0..=n {
            if y == x {
                continue;
            }
            if y + 1 == x || y == x + 1 || rng.random_bool(0.5) {
                entries.push((x, y, rng.random_range(0.05..3.0)));
            }
        }
    }
    AbsorbedChain::from_entries(&entries, n + 1, BoundaryMode::Reflect).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_distribution(rng: &mut ChaCha8Rng, n_states: usize) -> StateDistribution {
    let w = (1..n_states).map(|_| rng.random_range(0.0..1.0)).collect();
    StateDistribution::from_weights(w).unwrap()
}
