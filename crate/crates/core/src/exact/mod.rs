//! Exact numerics on a truncated chain: transition operator, conditioned
//! laws and semigroups, quasi-stationary distributions, Yaglom traces.

mod uniformization;

pub(crate) use uniformization::Uniformized;

use crate::{AbsorbedChain, BoundaryMode, Error, RateFamily, Result, StateDistribution};

/// `sum_x |mu(x) - nu(x)|`, in `[0, 2]`.
pub fn tv_distance(mu: &StateDistribution, nu: &StateDistribution) -> Result<f64> {
    tv_slices(mu.weights(), nu.weights())
}

pub(crate) fn tv_slices(mu: &[f64], nu: &[f64]) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(Error::Domain(format!(
            "distributions live on different windows ({} vs {} states)",
            mu.len(),
            nu.len()
        )));
    }
    Ok(mu.iter().zip(nu).map(|(a, b)| (a - b).abs()).sum())
}

/// Result of evolving a measure for some time.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    /// Mass on states `1..=N` (index `x - 1`).
    pub surviving: Vec<f64>,
    /// Mass absorbed at 0.
    pub absorbed: f64,
    /// Mass lost through the top of the window (kill mode only).
    pub escaped: f64,
}

impl Evolution {
    pub fn survival_mass(&self) -> f64 {
        self.surviving.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Survival {
    pub probability: f64,
    /// Set under kill mode: the value ignores paths that left the window and
    /// is a lower bound for the untruncated chain.
    pub lower_bound: bool,
    pub escaped: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QsdResult {
    pub qsd: StateDistribution,
    /// `theta = sum_x rho(x) Q(x, 0)`.
    pub absorption_rate: f64,
    /// Rate of leaving through the top of the window under kill mode.
    pub escape_rate: f64,
    /// `max_x |(rho Q~)(x) + (theta + escape) rho(x)|` over non-absorbed states.
    pub eigen_residual: f64,
    pub iterations: usize,
    pub truncation_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QsdCheck {
    pub holds: bool,
    pub max_deviation: f64,
}

/// Distances along a time grid while approaching a Yaglom limit.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub times: Vec<f64>,
    pub tv_to_limit: Vec<f64>,
    pub tv_between_pair: Option<Vec<f64>>,
}

/// Numerical settings shared by the exact operations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactEngine {
    /// Poisson tail mass left out of each uniformization series.
    pub series_tol: f64,
    /// Survival mass below which conditioning is refused.
    pub underflow_floor: f64,
    pub max_iters: usize,
    /// First positive time of the Yaglom grid.
    pub yaglom_start: f64,
    pub yaglom_ratio: f64,
    pub yaglom_max_time: f64,
}

impl Default for ExactEngine {
    fn default() -> Self {
        Self {
            series_tol: 1e-13,
            underflow_floor: 1e-300,
            max_iters: 10_000,
            yaglom_start: 0.25,
            yaglom_ratio: 1.5,
            yaglom_max_time: 1e4,
        }
    }
}

/// Conditioned laws are advanced in chunks of this length with a
/// renormalization after each, so long horizons never underflow.
const CONDITIONING_CHUNK: f64 = 1.0;

fn check_time(t: f64, what: &str) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!(
            "{what} must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

fn check_window(chain: &AbsorbedChain, mu: &StateDistribution) -> Result<()> {
    if mu.n_states() != chain.n_states() {
        return Err(Error::Domain(format!(
            "distribution covers {} states but the chain window has {}",
            mu.n_states(),
            chain.n_states()
        )));
    }
    Ok(())
}

fn chunks(t: f64) -> impl Iterator<Item = f64> {
    let full = (t / CONDITIONING_CHUNK).floor() as usize;
    let rest = t - full as f64 * CONDITIONING_CHUNK;
    std::iter::repeat_n(CONDITIONING_CHUNK, full).chain((rest > 0.0).then_some(rest))
}

impl ExactEngine {
    /// Evolves `mu` for time `t`, separating survival, absorption and escape.
    pub fn evolve(
        &self,
        chain: &AbsorbedChain,
        mu: &StateDistribution,
        t: f64,
    ) -> Result<Evolution> {
        check_time(t, "time")?;
        check_window(chain, mu)?;
        let uni = Uniformized::new(chain);
        let full = uni.left_action(&mu.to_full(), t, self.series_tol);
        let surviving = full[1..].to_vec();
        let absorbed = full[0];
        let escaped = (1.0 - absorbed - surviving.iter().sum::<f64>()).max(0.0);
        let escaped = if chain.mode() == BoundaryMode::Kill {
            escaped
        } else {
            0.0
        };
        Ok(Evolution {
            surviving,
            absorbed,
            escaped,
        })
    }

    /// Restriction of `mu e^{Qt}` to the non-absorbed states.
    pub fn transition_operator(
        &self,
        chain: &AbsorbedChain,
        t: f64,
        mu: &StateDistribution,
    ) -> Result<Vec<f64>> {
        Ok(self.evolve(chain, mu, t)?.surviving)
    }

    /// `P_x(t < T_0)`.
    pub fn survival_probability(
        &self,
        chain: &AbsorbedChain,
        x: usize,
        t: f64,
    ) -> Result<Survival> {
        if x == 0 {
            return Err(Error::Domain(
                "survival from the absorbing state is undefined".into(),
            ));
        }
        chain.check_state(x)?;
        let evo = self.evolve(chain, &StateDistribution::dirac(chain.n_states(), x)?, t)?;
        Ok(Survival {
            probability: evo.survival_mass().min(1.0),
            lower_bound: chain.mode() == BoundaryMode::Kill,
            escaped: evo.escaped,
        })
    }

    /// `e^{Qt} f` for `f` given over the full window (index = state).
    pub fn apply_right(&self, chain: &AbsorbedChain, f: &[f64], t: f64) -> Result<Vec<f64>> {
        check_time(t, "time")?;
        if f.len() != chain.n_states() {
            return Err(Error::Domain(
                "function length must match the window".into(),
            ));
        }
        Ok(Uniformized::new(chain).right_action(f, t, self.series_tol))
    }

    /// `P_x(t < T_0)` for every `x` in `1..=N` (index `x - 1`).
    pub fn survival_vector(&self, chain: &AbsorbedChain, t: f64) -> Result<Vec<f64>> {
        let mut f = vec![1.0; chain.n_states()];
        f[0] = 0.0;
        Ok(self.apply_right(chain, &f, t)?[1..].to_vec())
    }

    /// `P_x(X_t = target)` for every `x` in `1..=N` (index `x - 1`).
    pub fn transition_column(
        &self,
        chain: &AbsorbedChain,
        target: usize,
        t: f64,
    ) -> Result<Vec<f64>> {
        chain.check_state(target)?;
        let mut f = vec![0.0; chain.n_states()];
        f[target] = 1.0;
        Ok(self.apply_right(chain, &f, t)?[1..].to_vec())
    }

    /// Survival vector scaled to unit maximum, advanced in chunks. Only
    /// ratios between states are meaningful.
    fn relative_survival(&self, uni: &Uniformized, n_states: usize, t: f64) -> Vec<f64> {
        let mut f = vec![1.0; n_states];
        f[0] = 0.0;
        for dt in chunks(t) {
            f = uni.right_action(&f, dt, self.series_tol);
            let max = f.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                f.iter_mut().for_each(|v| *v /= max);
            }
        }
        f
    }

    /// Survival vectors at increasing `times`, each scaled to unit maximum
    /// (full-window indexing, entry 0 is zero). Ratios between states are
    /// exact; absolute levels are not kept.
    pub fn survival_profiles(&self, chain: &AbsorbedChain, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        let uni = Uniformized::new(chain);
        let mut f = vec![1.0; chain.n_states()];
        f[0] = 0.0;
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            check_time(t, "grid time")?;
            if t < now {
                return Err(Error::Domain("time grid must be non-decreasing".into()));
            }
            for dt in chunks(t - now) {
                f = uni.right_action(&f, dt, self.series_tol);
                let max = f.iter().copied().fold(0.0, f64::max);
                if max > 0.0 {
                    f.iter_mut().for_each(|v| *v /= max);
                }
            }
            now = t;
            out.push(f.clone());
        }
        Ok(out)
    }

    fn normalize(&self, mass: Vec<f64>) -> Result<StateDistribution> {
        let total: f64 = mass.iter().sum();
        if !(total >= self.underflow_floor) {
            return Err(Error::NullConditioning { mass: total });
        }
        StateDistribution::from_weights(mass)
    }

    fn conditional_with(
        &self,
        uni: &Uniformized,
        mu: &StateDistribution,
        t: f64,
    ) -> Result<StateDistribution> {
        let mut current = mu.clone();
        for dt in chunks(t) {
            let full = uni.left_action(&current.to_full(), dt, self.series_tol);
            current = self.normalize(full[1..].to_vec())?;
        }
        Ok(current)
    }

    /// `P_mu(X_t in . | t < T_0)`.
    pub fn conditional_distribution(
        &self,
        chain: &AbsorbedChain,
        mu: &StateDistribution,
        t: f64,
    ) -> Result<StateDistribution> {
        check_time(t, "time")?;
        check_window(chain, mu)?;
        self.conditional_with(&Uniformized::new(chain), mu, t)
    }

    /// `mu R^T_{s,t}` where `R^T_{s,t} f(x) = E_x(f(X_{t-s}) | T - s < T_0)`.
    ///
    /// The kernel is applied to `mu` as a Markov kernel:
    /// `(mu R)(y) = sum_x mu(x) P_{t-s}(x, y) h_{T-t}(y) / h_{T-s}(x)` with
    /// `h_u(x) = P_x(u < T_0)`. For a point mass and `T = t` this is the law
    /// of `X_t` given survival up to `t`.
    pub fn conditional_propagator(
        &self,
        chain: &AbsorbedChain,
        mu: &StateDistribution,
        s: f64,
        t: f64,
        horizon: f64,
    ) -> Result<StateDistribution> {
        check_time(s, "s")?;
        check_time(t, "t")?;
        check_time(horizon, "horizon")?;
        check_window(chain, mu)?;
        if !(s <= t && t <= horizon) {
            return Err(Error::Domain(format!(
                "need 0 <= s <= t <= T, got s = {s}, t = {t}, T = {horizon}"
            )));
        }
        if s == t {
            return Ok(mu.clone());
        }
        let uni = Uniformized::new(chain);
        let n = chain.n_states();
        let h_end = self.relative_survival(&uni, n, horizon - t);
        let h_start = self.relative_survival(&uni, n, horizon - s);
        let mut numerator = mu.to_full();
        for (x, m) in numerator.iter_mut().enumerate().skip(1) {
            if *m > 0.0 {
                if h_start[x] <= 0.0 {
                    return Err(Error::NullConditioning { mass: h_start[x] });
                }
                *m /= h_start[x];
            }
        }
        let total: f64 = numerator.iter().sum();
        numerator.iter_mut().for_each(|m| *m /= total);
        let mut mass = numerator;
        for dt in chunks(t - s) {
            mass = uni.left_action(&mass, dt, self.series_tol);
            mass[0] = 0.0;
            let total: f64 = mass.iter().sum();
            if !(total >= self.underflow_floor) {
                return Err(Error::NullConditioning { mass: total });
            }
            mass.iter_mut().for_each(|m| *m /= total);
        }
        let weighted: Vec<f64> = mass[1..]
            .iter()
            .zip(&h_end[1..])
            .map(|(m, h)| m * h)
            .collect();
        self.normalize(weighted)
    }

    /// Quasi-stationary distribution by iterating the unit-time conditioned
    /// step from the uniform law until the TV increment drops below `tol`.
    pub fn compute_qsd(&self, chain: &AbsorbedChain, tol: f64) -> Result<QsdResult> {
        if !(tol > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        chain.check_irreducible()?;
        let uni = Uniformized::new(chain);
        let mut rho = StateDistribution::uniform(chain.n_states())?;
        let mut increments = Vec::new();
        let mut best_residual = f64::INFINITY;
        let mut stalled = 0usize;
        for iteration in 1..=self.max_iters {
            let next = self.conditional_with(&uni, &rho, 1.0)?;
            let inc = tv_distance(&next, &rho)?;
            rho = next;
            increments.push(inc);
            if inc < tol {
                let result = qsd_summary(chain, rho.clone(), iteration);
                if result.eigen_residual < tol {
                    return Ok(result);
                }
                // Residual stuck at round-off: report what we have.
                if result.eigen_residual >= best_residual {
                    stalled += 1;
                    if stalled >= 5 {
                        return Ok(result);
                    }
                } else {
                    best_residual = result.eigen_residual;
                    stalled = 0;
                }
            }
        }
        Err(Error::NoConvergence {
            iterations: self.max_iters,
            last_increment: increments.last().copied().unwrap_or(f64::NAN),
            increments,
        })
    }

    /// Whether `rho` is reproduced by conditioning at every grid time.
    pub fn check_qsd(
        &self,
        chain: &AbsorbedChain,
        rho: &StateDistribution,
        times: &[f64],
        tol: f64,
    ) -> Result<QsdCheck> {
        let uni = Uniformized::new(chain);
        check_window(chain, rho)?;
        let mut max_deviation: f64 = 0.0;
        for &t in times {
            check_time(t, "grid time")?;
            let cond = self.conditional_with(&uni, rho, t)?;
            max_deviation = max_deviation.max(tv_distance(&cond, rho)?);
        }
        Ok(QsdCheck {
            holds: max_deviation < tol,
            max_deviation,
        })
    }

    /// Long-time limit of `P_mu(X_t in . | t < T_0)` on a geometric time grid.
    pub fn yaglom_limit(
        &self,
        chain: &AbsorbedChain,
        mu: &StateDistribution,
        tol: f64,
    ) -> Result<(StateDistribution, ConvergenceTrace)> {
        let (limit, trace, _) = self.yaglom_run(chain, mu, None, tol)?;
        Ok((limit, trace))
    }

    /// Runs two Yaglom evolutions on the same grid and records their mutual
    /// distance; returns both limits.
    pub fn yaglom_pair(
        &self,
        chain: &AbsorbedChain,
        mu: &StateDistribution,
        nu: &StateDistribution,
        tol: f64,
    ) -> Result<(StateDistribution, StateDistribution, ConvergenceTrace)> {
        let (limit, trace, other) = self.yaglom_run(chain, mu, Some(nu), tol)?;
        Ok((limit, other.expect("pair run"), trace))
    }

    fn yaglom_run(
        &self,
        chain: &AbsorbedChain,
        mu: &StateDistribution,
        nu: Option<&StateDistribution>,
        tol: f64,
    ) -> Result<(
        StateDistribution,
        ConvergenceTrace,
        Option<StateDistribution>,
    )> {
        check_window(chain, mu)?;
        if let Some(nu) = nu {
            check_window(chain, nu)?;
        }
        let uni = Uniformized::new(chain);
        let mut times = vec![0.0];
        let mut path = vec![mu.clone()];
        let mut other = nu.cloned();
        let mut pair = nu.map(|nu| vec![tv_distance(mu, nu).unwrap()]);
        let mut t = 0.0;
        let mut next_t = self.yaglom_start;
        loop {
            let current = path.last().unwrap();
            let advanced = self.conditional_with(&uni, current, next_t - t)?;
            let inc = tv_distance(&advanced, current)?;
            if let (Some(o), Some(pair)) = (other.as_mut(), pair.as_mut()) {
                *o = self.conditional_with(&uni, o, next_t - t)?;
                pair.push(tv_distance(&advanced, o)?);
            }
            t = next_t;
            times.push(t);
            path.push(advanced);
            let pair_done = match (&pair, nu) {
                (Some(p), Some(_)) => *p.last().unwrap() < tol,
                _ => true,
            };
            if inc < tol && pair_done {
                break;
            }
            next_t = t * self.yaglom_ratio;
            if next_t > self.yaglom_max_time {
                let limit = path.last().unwrap().clone();
                let trace = build_trace(times, &path, &limit, pair);
                return Err(Error::YaglomNotConverged {
                    t_end: t,
                    trace: Box::new(trace),
                });
            }
        }
        let limit = path.last().unwrap().clone();
        let trace = build_trace(times, &path, &limit, pair);
        Ok((limit, trace, other))
    }

    /// Doubles the window of `family` (starting at `start_states`) until the
    /// QSD moves by less than `tol` in TV.
    pub fn auto_window(
        &self,
        family: &dyn RateFamily,
        mode: BoundaryMode,
        start_states: usize,
        tol: f64,
        max_states: usize,
    ) -> Result<(AbsorbedChain, QsdResult)> {
        let qsd_tol = (tol * 1e-2).max(1e-13);
        let mut n = start_states.max(2);
        let mut chain = family.materialize(n, mode)?;
        let mut result = self.compute_qsd(&chain, qsd_tol)?;
        let mut changes = Vec::new();
        while 2 * n - 1 <= max_states {
            let bigger_n = 2 * n - 1;
            let bigger = family.materialize(bigger_n, mode)?;
            let bigger_result = self.compute_qsd(&bigger, qsd_tol)?;
            let change = tv_distance(&result.qsd.resized(bigger_n)?, &bigger_result.qsd)?;
            changes.push(change);
            n = bigger_n;
            chain = bigger;
            result = bigger_result;
            if change < tol {
                return Ok((chain, result));
            }
        }
        Err(Error::NoConvergence {
            iterations: changes.len(),
            last_increment: changes.last().copied().unwrap_or(f64::NAN),
            increments: changes,
        })
    }
}

fn build_trace(
    times: Vec<f64>,
    path: &[StateDistribution],
    limit: &StateDistribution,
    pair: Option<Vec<f64>>,
) -> ConvergenceTrace {
    let tv_to_limit = path
        .iter()
        .map(|d| tv_distance(d, limit).unwrap())
        .collect();
    ConvergenceTrace {
        times,
        tv_to_limit,
        tv_between_pair: pair,
    }
}

fn qsd_summary(chain: &AbsorbedChain, rho: StateDistribution, iterations: usize) -> QsdResult {
    let n = chain.n_states();
    let w = rho.to_full();
    let mut absorption_rate = 0.0;
    let mut escape_rate = 0.0;
    let mut product = vec![0.0; n];
    for x in 1..n {
        absorption_rate += w[x] * chain.absorption_rate(x);
        escape_rate += w[x] * chain.escape_rate(x);
        product[x] -= w[x] * chain.exit_rate(x);
        for (y, r) in chain.row(x) {
            product[y] += w[x] * r;
        }
    }
    let killing = absorption_rate + escape_rate;
    let eigen_residual = (1..n)
        .map(|x| (product[x] + killing * w[x]).abs())
        .fold(0.0, f64::max);
    QsdResult {
        qsd: rho,
        absorption_rate,
        escape_rate,
        eigen_residual,
        iterations,
        truncation_n: n,
    }
}
