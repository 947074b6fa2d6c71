//! `e^{Qt}` by uniformization: with `L = max_x |Q(x,x)|` and `M = I + Q/L`,
//! `e^{Qt} = sum_k Poisson(Lt; k) M^k`. `M` is entrywise non-negative, so
//! the series has no cancellation.

use crate::AbsorbedChain;

/// Normalized Poisson weights for `k = left .. left + weights.len()`.
#[derive(Debug, Clone)]
pub(crate) struct PoissonWeights {
    pub left: usize,
    pub weights: Vec<f64>,
}

impl PoissonWeights {
    pub fn right(&self) -> usize {
        self.left + self.weights.len() - 1
    }
}

/// Poisson(mean) weights truncated on both sides so that the discarded mass
/// is below `tol`. Weights are built outward from the mode, so large means
/// never underflow.
pub(crate) fn poisson_weights(mean: f64, tol: f64) -> PoissonWeights {
    if mean <= 0.0 {
        return PoissonWeights {
            left: 0,
            weights: vec![1.0],
        };
    }
    let half = 0.5 * tol;
    let mode = mean.floor() as usize;
    let mut total = 1.0;

    let mut upper = vec![1.0];
    let (mut k, mut w) = (mode, 1.0);
    loop {
        // w_{j+1} / w_j = mean / (j + 1) only shrinks beyond k, so the tail is
        // dominated by a geometric series.
        let ratio = mean / (k + 1) as f64;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) <= half * total {
            break;
        }
        w *= ratio;
        k += 1;
        upper.push(w);
        total += w;
    }

    let mut lower = Vec::new();
    let (mut k, mut w) = (mode, 1.0);
    while k > 0 {
        let ratio = k as f64 / mean;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) <= half * total {
            break;
        }
        w *= ratio;
        k -= 1;
        lower.push(w);
        total += w;
    }

    lower.reverse();
    lower.extend(upper);
    for w in &mut lower {
        *w /= total;
    }
    PoissonWeights {
        left: k,
        weights: lower,
    }
}

/// The uniformized jump matrix of a chain over the full window `0..=N`.
pub(crate) struct Uniformized {
    pub rate: f64,
    keep: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    probs: Vec<f64>,
}

impl Uniformized {
    pub fn new(chain: &AbsorbedChain) -> Self {
        let rate = chain.max_exit_rate();
        let n = chain.n_states();
        let mut keep = vec![1.0; n];
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut probs = Vec::new();
        row_ptr.push(0);
        for x in 0..n {
            if rate > 0.0 {
                keep[x] = 1.0 - chain.exit_rate(x) / rate;
                for (y, r) in chain.row(x) {
                    cols.push(y);
                    probs.push(r / rate);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            rate,
            keep,
            row_ptr,
            cols,
            probs,
        }
    }

    /// `out = v M`.
    fn left_step(&self, v: &[f64], out: &mut [f64]) {
        for (o, (vi, k)) in out.iter_mut().zip(v.iter().zip(&self.keep)) {
            *o = vi * k;
        }
        for (x, &vx) in v.iter().enumerate() {
            if vx == 0.0 {
                continue;
            }
            for i in self.row_ptr[x]..self.row_ptr[x + 1] {
                out[self.cols[i]] += vx * self.probs[i];
            }
        }
    }

    /// `out = M f`.
    fn right_step(&self, f: &[f64], out: &mut [f64]) {
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = f[x] * self.keep[x];
            for i in self.row_ptr[x]..self.row_ptr[x + 1] {
                acc += self.probs[i] * f[self.cols[i]];
            }
            *o = acc;
        }
    }

    fn series(
        &self,
        start: &[f64],
        t: f64,
        tol: f64,
        step: impl Fn(&Self, &[f64], &mut [f64]),
    ) -> Vec<f64> {
        if t == 0.0 || self.rate == 0.0 {
            return start.to_vec();
        }
        let pw = poisson_weights(self.rate * t, tol);
        let right = pw.right();
        let mut v = start.to_vec();
        let mut next = vec![0.0; v.len()];
        let mut acc = vec![0.0; v.len()];
        for k in 0..=right {
            if k >= pw.left {
                let w = pw.weights[k - pw.left];
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += w * x;
                }
            }
            if k < right {
                step(self, &v, &mut next);
                std::mem::swap(&mut v, &mut next);
            }
        }
        acc
    }

    /// Row vector times `e^{Qt}`.
    pub fn left_action(&self, v: &[f64], t: f64, tol: f64) -> Vec<f64> {
        self.series(v, t, tol, Self::left_step)
    }

    /// `e^{Qt}` times a column vector.
    pub fn right_action(&self, f: &[f64], t: f64, tol: f64) -> Vec<f64> {
        self.series(f, t, tol, Self::right_step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_pmf(mean: f64, k: usize) -> f64 {
        let mut log = -mean;
        for j in 1..=k {
            log += (mean / j as f64).ln();
        }
        log.exp()
    }

    #[test]
    fn weights_match_pmf() {
        for mean in [0.3, 1.0, 7.5, 40.0, 1234.5] {
            let pw = poisson_weights(mean, 1e-13);
            let sum: f64 = pw.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
            for (i, w) in pw.weights.iter().enumerate() {
                let k = pw.left + i;
                let p = exact_pmf(mean, k);
                assert!(
                    (w - p).abs() <= 1e-12 * p.max(1e-3),
                    "mean {mean} k {k}: {w} vs {p}"
                );
            }
        }
    }

    #[test]
    fn truncated_mass_is_small() {
        for mean in [0.5, 10.0, 900.0] {
            let pw = poisson_weights(mean, 1e-13);
            let kept: f64 = (pw.left..=pw.right()).map(|k| exact_pmf(mean, k)).sum();
            assert!(1.0 - kept < 1e-12, "mean {mean}: dropped {}", 1.0 - kept);
        }
    }

    #[test]
    fn zero_mean_is_identity() {
        let pw = poisson_weights(0.0, 1e-13);
        assert_eq!(pw.left, 0);
        assert_eq!(pw.weights, vec![1.0]);
    }
}
