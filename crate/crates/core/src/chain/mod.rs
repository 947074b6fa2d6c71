//! Absorbed chains on a truncated window `{0, ..., N}`.
//!
//! Rates are stored in compressed sparse rows: birth-death chains are
//! tridiagonal, criterion examples need arbitrary sparsity, and windows are
//! small enough that a dense layout never pays for itself.

mod distribution;
mod family;
mod file;

pub use distribution::StateDistribution;
pub use family::{BirthDeathSpec, CatastropheSpec, LogisticParams, RateFamily};
pub use file::{ChainDefinition, ChainFile};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// What happens to mass that would leave the window through the top state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BoundaryMode {
    /// Jumps past the top state are dropped; the generator stays conservative.
    #[default]
    Reflect,
    /// Jumps past the top state kill the path. The lost mass is tracked
    /// separately from absorption at 0.
    Kill,
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryMode::Reflect => f.write_str("reflect"),
            BoundaryMode::Kill => f.write_str("kill"),
        }
    }
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflect" => Ok(BoundaryMode::Reflect),
            "kill" => Ok(BoundaryMode::Kill),
            other => Err(Error::Validation(format!(
                "unknown boundary mode `{other}` (expected reflect or kill)"
            ))),
        }
    }
}

/// A continuous-time chain on `{0, ..., n_states - 1}` with `0` absorbing.
///
/// The diagonal is implied: `Q(x, x) = -(sum of off-diagonal rates + escape rate)`.
/// Values are immutable once built and can be shared freely between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbedChain {
    n_states: usize,
    mode: BoundaryMode,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    escape: Vec<f64>,
    exit: Vec<f64>,
    rates_unbounded: bool,
    truncated: bool,
    tail: Option<Vec<Vec<(usize, f64)>>>,
}

impl AbsorbedChain {
    /// Builds a chain from `(from, to, rate)` triples. Duplicates are summed,
    /// zero rates are dropped.
    pub fn from_entries(
        entries: &[(usize, usize, f64)],
        n_states: usize,
        mode: BoundaryMode,
    ) -> Result<Self> {
        if n_states < 2 {
            return Err(Error::Validation(format!(
                "n_states must be at least 2, got {n_states}"
            )));
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(from, to, rate) in entries {
            if from == 0 {
                return Err(Error::Validation(format!(
                    "state 0 must be absorbing: entry ({from}, {to}, {rate})"
                )));
            }
            if from >= n_states || to >= n_states {
                return Err(Error::Validation(format!(
                    "entry ({from}, {to}, {rate}) lies outside the window 0..={}",
                    n_states - 1
                )));
            }
            if from == to {
                return Err(Error::Validation(format!(
                    "entry ({from}, {to}, {rate}) is diagonal; diagonals are implied by row sums"
                )));
            }
            if !rate.is_finite() {
                return Err(Error::Validation(format!(
                    "entry ({from}, {to}, {rate}) has a non-finite rate"
                )));
            }
            if rate < 0.0 {
                return Err(Error::Validation(format!(
                    "entry ({from}, {to}, {rate}) has a negative rate"
                )));
            }
            *merged.entry((from, to)).or_insert(0.0) += rate;
        }
        let rows = merged
            .into_iter()
            .filter(|&(_, r)| r > 0.0)
            .map(|((from, to), r)| (from, to, r));
        Self::assemble(n_states, mode, rows, vec![0.0; n_states], false, false)
    }

    /// Internal constructor for validated, sorted `(from, to, rate)` triples.
    pub(crate) fn assemble(
        n_states: usize,
        mode: BoundaryMode,
        sorted: impl IntoIterator<Item = (usize, usize, f64)>,
        escape: Vec<f64>,
        rates_unbounded: bool,
        truncated: bool,
    ) -> Result<Self> {
        debug_assert_eq!(escape.len(), n_states);
        let mut row_ptr = vec![0usize; n_states + 1];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut exit = vec![0.0; n_states];
        let mut last: Option<(usize, usize)> = None;
        for (from, to, rate) in sorted {
            if let Some(prev) = last {
                debug_assert!(prev < (from, to), "entries must be sorted and unique");
            }
            last = Some((from, to));
            if from == 0 {
                return Err(Error::Validation("state 0 must be absorbing".to_string()));
            }
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::Validation(format!(
                    "rate Q({from}, {to}) = {rate} is not a finite non-negative number"
                )));
            }
            row_ptr[from + 1] += 1;
            cols.push(to);
            vals.push(rate);
            exit[from] += rate;
        }
        for x in 0..n_states {
            row_ptr[x + 1] += row_ptr[x];
        }
        for (x, e) in escape.iter().enumerate() {
            if !e.is_finite() || *e < 0.0 {
                return Err(Error::Validation(format!(
                    "escape rate at state {x} = {e} is not a finite non-negative number"
                )));
            }
            if *e > 0.0 && mode == BoundaryMode::Reflect {
                return Err(Error::Validation(
                    "escape rates are only meaningful under kill_at_top".to_string(),
                ));
            }
            exit[x] += e;
        }
        Ok(Self {
            n_states,
            mode,
            row_ptr,
            cols,
            vals,
            escape,
            exit,
            rates_unbounded,
            truncated,
            tail: None,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Largest state in the window.
    pub fn top(&self) -> usize {
        self.n_states - 1
    }

    /// Number of non-absorbed states, `N`.
    pub fn n_transient(&self) -> usize {
        self.n_states - 1
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    /// Whether the untruncated chain this window came from has unbounded
    /// total jump rates (so `sup_x sum_y Q(x, y)` is infinite).
    pub fn rates_unbounded(&self) -> bool {
        self.rates_unbounded
    }

    /// True when this window was cut out of an infinite rate family, so
    /// window infima and suprema are not those of the full chain.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    /// For a truncated window whose family knows its tail: every possible
    /// set of jumps from a state beyond the window into the window.
    pub fn tail_profiles(&self) -> Option<&[Vec<(usize, f64)>]> {
        self.tail.as_deref()
    }

    pub(crate) fn set_tail(&mut self, tail: Option<Vec<Vec<(usize, f64)>>>) {
        self.tail = tail;
    }

    /// Off-diagonal jumps out of `x` as `(target, rate)` pairs.
    pub fn row(&self, x: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[x]..self.row_ptr[x + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.vals[range].iter().copied())
    }

    /// `Q(x, y)`, including the implied diagonal.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return -self.exit[x];
        }
        let range = self.row_ptr[x]..self.row_ptr[x + 1];
        match self.cols[range.clone()].binary_search(&y) {
            Ok(i) => self.vals[range.start + i],
            Err(_) => 0.0,
        }
    }

    /// Total rate of leaving `x`, i.e. `-Q(x, x)`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        self.exit[x]
    }

    /// Rate of leaving the window through the top (kill mode only).
    pub fn escape_rate(&self, x: usize) -> f64 {
        self.escape[x]
    }

    /// `Q(x, 0)`.
    pub fn absorption_rate(&self, x: usize) -> f64 {
        if x == 0 {
            0.0
        } else {
            self.rate(x, 0)
        }
    }

    /// Uniformization constant `max_x |Q(x, x)|`.
    pub fn max_exit_rate(&self) -> f64 {
        self.exit.iter().copied().fold(0.0, f64::max)
    }

    /// Dense copy of `Q` over the full window, for small-chain diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0; self.n_states]; self.n_states];
        for (x, row) in q.iter_mut().enumerate() {
            for (y, r) in self.row(x) {
                row[y] = r;
            }
            row[x] = -self.exit[x];
        }
        q
    }

    /// Checks that the non-absorbed states form one communicating class.
    pub fn check_irreducible(&self) -> Result<()> {
        let n = self.n_transient();
        if n <= 1 {
            return Ok(());
        }
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); self.n_states];
        for x in 1..self.n_states {
            for (y, _) in self.row(x) {
                if y != 0 {
                    reverse[y].push(x);
                }
            }
        }
        let forward =
            self.reach(|x, out| out.extend(self.row(x).map(|(y, _)| y).filter(|&y| y != 0)));
        if let Some(x) = (1..self.n_states).find(|&x| !forward[x]) {
            return Err(Error::Reducible(format!(
                "state {x} is not reachable from state 1"
            )));
        }
        let backward = self.reach(|x, out| out.extend(reverse[x].iter().copied()));
        if let Some(x) = (1..self.n_states).find(|&x| !backward[x]) {
            return Err(Error::Reducible(format!(
                "state 1 is not reachable from state {x}"
            )));
        }
        Ok(())
    }

    fn reach(&self, mut neighbours: impl FnMut(usize, &mut Vec<usize>)) -> Vec<bool> {
        let mut seen = vec![false; self.n_states];
        let mut stack = vec![1usize];
        let mut buf = Vec::new();
        seen[1] = true;
        while let Some(x) = stack.pop() {
            buf.clear();
            neighbours(x, &mut buf);
            for &y in &buf {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen
    }

    /// Validates that `states` is a non-empty set of non-absorbed window
    /// states and returns it sorted and deduplicated.
    pub fn normalize_set(&self, states: &[usize]) -> Result<Vec<usize>> {
        if states.is_empty() {
            return Err(Error::Domain("state set must be non-empty".to_string()));
        }
        let mut set: Vec<usize> = states.to_vec();
        set.sort_unstable();
        set.dedup();
        if set[0] == 0 || *set.last().unwrap() > self.top() {
            return Err(Error::Domain(format!(
                "state set {set:?} must lie within 1..={}",
                self.top()
            )));
        }
        Ok(set)
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<()> {
        if x == 0 || x > self.top() {
            return Err(Error::Domain(format!(
                "state {x} is not a non-absorbed window state (1..={})",
                self.top()
            )));
        }
        Ok(())
    }
}

/// Builds the logistic birth-death chain: `Q(x, x+1) = b x`,
/// `Q(x, x-1) = d x + c x (x - 1)`.
pub fn build_logistic(
    b: f64,
    d: f64,
    c: f64,
    n_states: usize,
    mode: BoundaryMode,
) -> Result<AbsorbedChain> {
    BirthDeathSpec::logistic(b, d, c)?.materialize(n_states, mode)
}

/// Materializes any rate family on a window.
pub fn truncate(
    family: &dyn RateFamily,
    n_states: usize,
    mode: BoundaryMode,
) -> Result<AbsorbedChain> {
    family.materialize(n_states, mode)
}
