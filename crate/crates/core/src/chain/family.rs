use std::fmt;
use std::sync::Arc;

use super::{AbsorbedChain, BoundaryMode};
use crate::{Error, Result};

/// A chain on all of `{0, 1, 2, ...}` given by its jump rates, which can be
/// materialized on any finite window.
pub trait RateFamily: Send + Sync {
    /// Off-diagonal jumps `(target, rate)` out of state `x >= 1` in the
    /// untruncated chain. Targets may lie beyond any window.
    fn jumps(&self, x: usize) -> Vec<(usize, f64)>;

    /// True when `sup_x sum_y Q(x, y)` is infinite for the untruncated chain.
    fn rates_unbounded(&self) -> bool {
        false
    }

    /// Jumps from states `y > top` into `{0, ..., top}`, listed as every
    /// distinct profile that occurs beyond the window. `None` when unknown.
    fn tail_profiles(&self, top: usize) -> Option<Vec<Vec<(usize, f64)>>> {
        let _ = top;
        None
    }

    /// Restricts the family to `{0, ..., n_states - 1}`. Jumps past the top
    /// are dropped under [`BoundaryMode::Reflect`] and become escape rates
    /// under [`BoundaryMode::Kill`].
    fn materialize(&self, n_states: usize, mode: BoundaryMode) -> Result<AbsorbedChain> {
        materialize_jumps(self, n_states, mode)
    }
}

fn materialize_jumps<F: RateFamily + ?Sized>(
    family: &F,
    n_states: usize,
    mode: BoundaryMode,
) -> Result<AbsorbedChain> {
    if n_states < 2 {
        return Err(Error::Validation(format!(
            "n_states must be at least 2, got {n_states}"
        )));
    }
    let top = n_states - 1;
    let mut entries = Vec::new();
    let mut escape = vec![0.0; n_states];
    for x in 1..=top {
        let mut row = family.jumps(x);
        row.sort_by_key(|&(y, _)| y);
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(row.len());
        for (y, rate) in row {
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::Validation(format!(
                    "rate Q({x}, {y}) = {rate} is not a finite non-negative number"
                )));
            }
            if y == x || rate == 0.0 {
                continue;
            }
            if y > top {
                if mode == BoundaryMode::Kill {
                    escape[x] += rate;
                }
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.1 == y => last.2 += rate,
                _ => merged.push((x, y, rate)),
            }
        }
        entries.extend(merged);
    }
    let mut chain = AbsorbedChain::assemble(
        n_states,
        mode,
        entries,
        escape,
        family.rates_unbounded(),
        true,
    )?;
    chain.set_tail(family.tail_profiles(top));
    Ok(chain)
}

type RateFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    pub b: f64,
    pub d: f64,
    pub c: f64,
}

/// Nearest-neighbour chain with birth rates `b_x` and death rates `delta_x`.
#[derive(Clone)]
pub struct BirthDeathSpec {
    birth: RateFn,
    death: RateFn,
    logistic: Option<LogisticParams>,
    rates_unbounded: bool,
}

impl fmt::Debug for BirthDeathSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.logistic {
            Some(p) => write!(f, "BirthDeathSpec::logistic({}, {}, {})", p.b, p.d, p.c),
            None => f.write_str("BirthDeathSpec { .. }"),
        }
    }
}

impl BirthDeathSpec {
    pub fn new(
        birth: impl Fn(usize) -> f64 + Send + Sync + 'static,
        death: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            birth: Arc::new(birth),
            death: Arc::new(death),
            logistic: None,
            rates_unbounded: false,
        }
    }

    /// Birth rate `b x`, death rate `d x + c x (x - 1)`.
    pub fn logistic(b: f64, d: f64, c: f64) -> Result<Self> {
        for (name, v) in [("b", b), ("d", d), ("c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!(
                    "logistic parameter {name} = {v} must be finite and positive"
                )));
            }
        }
        let mut spec = Self::new(
            move |x| b * x as f64,
            move |x| {
                let x = x as f64;
                d * x + c * x * (x - 1.0)
            },
        );
        spec.logistic = Some(LogisticParams { b, d, c });
        spec.rates_unbounded = true;
        Ok(spec)
    }

    /// Marks whether total rates grow without bound (affects `q_bar`).
    pub fn with_unbounded_rates(mut self, unbounded: bool) -> Self {
        self.rates_unbounded = unbounded;
        self
    }

    pub fn logistic_params(&self) -> Option<LogisticParams> {
        self.logistic
    }

    pub fn birth_rate(&self, x: usize) -> f64 {
        (self.birth)(x)
    }

    pub fn death_rate(&self, x: usize) -> f64 {
        (self.death)(x)
    }
}

impl RateFamily for BirthDeathSpec {
    fn jumps(&self, x: usize) -> Vec<(usize, f64)> {
        vec![(x - 1, self.death_rate(x)), (x + 1, self.birth_rate(x))]
    }

    fn rates_unbounded(&self) -> bool {
        self.rates_unbounded
    }

    /// Only `top + 1` can jump into the window; states further out cannot.
    fn tail_profiles(&self, top: usize) -> Option<Vec<Vec<(usize, f64)>>> {
        Some(vec![vec![(top, self.death_rate(top + 1))], Vec::new()])
    }

    fn materialize(&self, n_states: usize, mode: BoundaryMode) -> Result<AbsorbedChain> {
        for x in 1..n_states {
            let delta = self.death_rate(x);
            if !(delta.is_finite() && delta > 0.0) {
                return Err(Error::Validation(format!(
                    "death rate at {x} is {delta}; birth-death chains need positive death rates"
                )));
            }
        }
        materialize_jumps(self, n_states, mode)
    }
}

/// Births at a constant rate plus catastrophes: every state `x >= 2` jumps
/// to `targets[x % targets.len()]` at rate `catastrophe`, and only state 1
/// is absorbed (at rate `absorption`).
///
/// With `targets = [1]` every catastrophe lands in 1; the alternating variant
/// sends even states to 1 and odd states to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct CatastropheSpec {
    pub birth: f64,
    pub catastrophe: f64,
    pub absorption: f64,
    pub targets: Vec<usize>,
}

impl CatastropheSpec {
    pub fn new(birth: f64, catastrophe: f64, absorption: f64) -> Self {
        Self {
            birth,
            catastrophe,
            absorption,
            targets: vec![1],
        }
    }

    pub fn alternating(birth: f64, catastrophe: f64, absorption: f64) -> Self {
        Self {
            birth,
            catastrophe,
            absorption,
            targets: vec![1, 2],
        }
    }
}

impl RateFamily for CatastropheSpec {
    fn jumps(&self, x: usize) -> Vec<(usize, f64)> {
        if x == 1 {
            return vec![(0, self.absorption), (2, self.birth)];
        }
        let target = self.targets[x % self.targets.len()];
        let mut out = vec![(x + 1, self.birth)];
        if target != x {
            out.push((target, self.catastrophe));
        }
        out
    }

    fn tail_profiles(&self, top: usize) -> Option<Vec<Vec<(usize, f64)>>> {
        let mut profiles: Vec<Vec<(usize, f64)>> = self
            .targets
            .iter()
            .map(|&t| {
                if t <= top {
                    vec![(t, self.catastrophe)]
                } else {
                    Vec::new()
                }
            })
            .collect();
        profiles.dedup();
        Some(profiles)
    }
}
