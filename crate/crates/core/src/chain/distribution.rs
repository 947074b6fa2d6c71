use crate::{Error, Result};

/// A probability vector on the non-absorbed states `1..=N`.
///
/// `weights()[i]` is the mass of state `i + 1`; state 0 is excluded by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDistribution {
    weights: Vec<f64>,
}

impl StateDistribution {
    /// Normalizes a non-negative mass vector (indexed from state 1).
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("distribution has no states".to_string()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Validation(format!(
                "weight of state {} is {w}; weights must be finite and non-negative",
                i + 1
            )));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Validation(
                "distribution has zero total mass".to_string(),
            ));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { weights })
    }

    /// Point mass at state `x` on a window with `n_states` states (including 0).
    pub fn dirac(n_states: usize, x: usize) -> Result<Self> {
        if x == 0 || x >= n_states {
            return Err(Error::Domain(format!(
                "dirac state {x} must lie in 1..={}",
                n_states.saturating_sub(1)
            )));
        }
        let mut weights = vec![0.0; n_states - 1];
        weights[x - 1] = 1.0;
        Ok(Self { weights })
    }

    pub fn uniform(n_states: usize) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::Domain(
                "uniform distribution needs a non-absorbed state".into(),
            ));
        }
        let n = n_states - 1;
        Ok(Self {
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mass of state `x >= 1`.
    pub fn weight(&self, x: usize) -> f64 {
        if x == 0 {
            0.0
        } else {
            self.weights.get(x - 1).copied().unwrap_or(0.0)
        }
    }

    /// Number of non-absorbed states covered.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Window size (including state 0) this distribution lives on.
    pub fn n_states(&self) -> usize {
        self.weights.len() + 1
    }

    /// Mass vector over the full window `0..=N`, with zero at state 0.
    pub(crate) fn to_full(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.weights.len() + 1);
        v.push(0.0);
        v.extend_from_slice(&self.weights);
        v
    }

    /// Re-embeds this distribution into a window with `n_states` states,
    /// padding with zeros. Fails if mass would be cut off.
    pub fn resized(&self, n_states: usize) -> Result<Self> {
        let n = n_states.saturating_sub(1);
        if n == 0 {
            return Err(Error::Domain(
                "target window has no non-absorbed state".into(),
            ));
        }
        if n < self.weights.len() && self.weights[n..].iter().any(|&w| w > 0.0) {
            return Err(Error::Domain(format!(
                "distribution has mass beyond state {n}"
            )));
        }
        let mut weights = self.weights.clone();
        weights.resize(n, 0.0);
        Ok(Self { weights })
    }
}
