//! Constants of the fast-return hypothesis and the mixing bound they give.
//!
//! For a set `K`, a state `x0` in `K` and `lambda0 > 0` the hypothesis asks for
//!
//! 1. `P_x(X_1 = x0 | 1 < T_0) >= c1` for every `x`,
//! 2. `min_{x in K} P_x(t < T_0) >= c2 max_{x in K} P_x(t < T_0)` for every `t`,
//! 3. `P_{x0}(X_t in K) >= c3 exp(-lambda0 t)` for every `t`,
//! 4. `sup_x E_x(exp(lambda0 (T_K ^ T_0))) <= c4`,
//!
//! and then conditioned laws mix at rate `2 (1 - gamma)^floor(t)` with
//! `gamma = c1 c2 c3 / (2 c4)`.

use std::fmt;

use crate::exact::ExactEngine;
use crate::linalg::solve_m_matrix;
use crate::{AbsorbedChain, BoundaryMode, Error, RateFamily, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    CertifiedBound,
    EmpiricalEstimate,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::CertifiedBound => f.write_str("certified"),
            Provenance::EmpiricalEstimate => f.write_str("empirical"),
        }
    }
}

/// A constant with its provenance. `window_limited` marks values that were
/// only established on the truncation window of an infinite chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
    pub window_limited: bool,
}

impl Constant {
    pub fn certified(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::CertifiedBound,
            window_limited: false,
        }
    }

    pub fn empirical(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::EmpiricalEstimate,
            window_limited: false,
        }
    }

    fn on_window(value: f64, chain: &AbsorbedChain) -> Self {
        if chain.is_truncated() {
            Self {
                value,
                provenance: Provenance::EmpiricalEstimate,
                window_limited: true,
            }
        } else {
            Self::certified(value)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct C1Result {
    pub c1: Constant,
    /// `min_y P_y(X_1 = x0)`, a lower bound for the conditional infimum.
    pub unconditional_floor: f64,
    /// State attaining the conditional minimum.
    pub argmin: usize,
    /// Set when `x0` cannot be reached in time 1 from some state.
    pub failed: bool,
}

/// `min_x P_x(X_1 = x0) / P_x(1 < T_0)` over the window.
pub fn compute_c1(engine: &ExactEngine, chain: &AbsorbedChain, x0: usize) -> Result<C1Result> {
    chain.check_state(x0)?;
    let column = engine.transition_column(chain, x0, 1.0)?;
    let survival = engine.survival_vector(chain, 1.0)?;
    let mut best = (f64::INFINITY, 0usize);
    let mut floor = f64::INFINITY;
    for (i, (&p, &s)) in column.iter().zip(&survival).enumerate() {
        floor = floor.min(p);
        let ratio = if p > 0.0 { (p / s).min(1.0) } else { 0.0 };
        if ratio < best.0 {
            best = (ratio, i + 1);
        }
    }
    let failed = best.0 <= 0.0;
    let value = if failed { 0.0 } else { best.0 };
    Ok(C1Result {
        c1: Constant::on_window(value, chain),
        unconditional_floor: floor.max(0.0),
        argmin: best.1,
        failed,
    })
}

/// [`compute_c1`] on windows of `family` doubled from `n_states` until the
/// value moves by less than `rel_tol` (relative). A stable value is promoted
/// to certified, still flagged window-limited.
pub fn compute_c1_window_stable(
    engine: &ExactEngine,
    family: &dyn RateFamily,
    mode: BoundaryMode,
    n_states: usize,
    x0: usize,
    rel_tol: f64,
    max_states: usize,
) -> Result<C1Result> {
    let mut n = n_states;
    let mut current = compute_c1(engine, &family.materialize(n, mode)?, x0)?;
    while 2 * n - 1 <= max_states && !current.failed {
        n = 2 * n - 1;
        let next = compute_c1(engine, &family.materialize(n, mode)?, x0)?;
        let stable = (next.c1.value - current.c1.value).abs() <= rel_tol * next.c1.value;
        current = next;
        if stable {
            current.c1.provenance = Provenance::CertifiedBound;
            current.c1.window_limited = true;
            return Ok(current);
        }
    }
    Ok(current)
}

/// Geometric time grid ending at `t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub ratio: f64,
    pub count: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            ratio: 1.5,
            count: 40,
        }
    }
}

impl TimeGrid {
    pub fn new(ratio: f64, count: usize) -> Result<Self> {
        if !(ratio > 1.0 && ratio.is_finite()) || count == 0 {
            return Err(Error::Domain(format!(
                "geometric grid needs ratio > 1 and count >= 1, got {ratio}, {count}"
            )));
        }
        Ok(Self { ratio, count })
    }

    /// `t_max * ratio^-(count - 1 - i)` for `i = 0..count`.
    pub fn points(&self, t_max: f64) -> Vec<f64> {
        (0..self.count)
            .map(|i| t_max * self.ratio.powi(-((self.count - 1 - i) as i32)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C2Result {
    pub certified: f64,
    pub empirical: f64,
    /// Grid time where the empirical ratio is smallest.
    pub worst_t: f64,
    pub window_limited: bool,
}

/// Survival-ratio constant over `K`: the empirical minimum over the grid and
/// the analytic lower bound
/// `min(min_{x', x'' in K} P_{x'}(X_1 = x''), exp(-max_{x in K} |Q(x, x)|))`.
pub fn compute_c2(
    engine: &ExactEngine,
    chain: &AbsorbedChain,
    k: &[usize],
    t_max: f64,
    grid: &TimeGrid,
) -> Result<C2Result> {
    let k = chain.normalize_set(k)?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Domain(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    if k.len() == 1 {
        return Ok(C2Result {
            certified: 1.0,
            empirical: 1.0,
            worst_t: 0.0,
            window_limited: false,
        });
    }
    let times = grid.points(t_max);
    let profiles = engine.survival_profiles(chain, &times)?;
    let mut empirical = 1.0f64;
    let mut worst_t = 0.0;
    for (t, h) in times.iter().zip(&profiles) {
        let (lo, hi) = k
            .iter()
            .map(|&x| h[x])
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let ratio = lo / hi;
        if ratio < empirical {
            empirical = ratio;
            worst_t = *t;
        }
    }
    let mut one_step = f64::INFINITY;
    for &target in &k {
        let column = engine.transition_column(chain, target, 1.0)?;
        for &x in &k {
            one_step = one_step.min(column[x - 1]);
        }
    }
    let max_exit = k.iter().map(|&x| chain.exit_rate(x)).fold(0.0, f64::max);
    let certified = one_step.min((-max_exit).exp());
    Ok(C2Result {
        certified,
        empirical,
        worst_t,
        window_limited: chain.is_truncated(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum C3Strategy {
    /// `lambda0 = -Q(x0, x0)`, `c3 = 1`: the path sits at `x0` for time `t`.
    Sojourn,
    /// `lambda0 = C = sup_x Q(x, 0)` and one-step returns to `x0`.
    AbsorptionRate,
    /// Whichever of the two gives the larger `gamma`.
    #[default]
    Best,
}

impl fmt::Display for C3Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            C3Strategy::Sojourn => f.write_str("sojourn"),
            C3Strategy::AbsorptionRate => f.write_str("absorption_rate"),
            C3Strategy::Best => f.write_str("best"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct C3Result {
    pub c3: Constant,
    pub lambda0: f64,
    /// Construction that produced the pair (never `Best`).
    pub strategy: C3Strategy,
    pub failed: bool,
}

/// `c3` and `lambda0` for a fixed construction. `Best` needs `c4` and is
/// resolved by [`certify`].
pub fn compute_c3_lambda0(
    engine: &ExactEngine,
    chain: &AbsorbedChain,
    x0: usize,
    k: &[usize],
    strategy: C3Strategy,
) -> Result<C3Result> {
    let k = chain.normalize_set(k)?;
    if k.binary_search(&x0).is_err() {
        return Err(Error::Domain(format!("x0 = {x0} must belong to K")));
    }
    match strategy {
        C3Strategy::Sojourn => Ok(sojourn(chain, x0)),
        C3Strategy::AbsorptionRate => absorption_construction(engine, chain, x0),
        C3Strategy::Best => {
            let candidates = [
                sojourn(chain, x0),
                absorption_construction(engine, chain, x0)?,
            ];
            let pick = candidates
                .into_iter()
                .filter(|c| !c.failed)
                .map(|c| {
                    let score = compute_c4(chain, &k, c.lambda0)
                        .map(|r| c.c3.value / r.c4.value)
                        .unwrap_or(0.0);
                    (c, score)
                })
                .fold(None::<(C3Result, f64)>, |acc, (c, s)| match acc {
                    Some((_, best)) if s <= best + 1e-12 => acc,
                    _ => Some((c, s)),
                });
            Ok(pick.map(|(c, _)| c).unwrap_or_else(|| sojourn(chain, x0)))
        }
    }
}

fn sojourn(chain: &AbsorbedChain, x0: usize) -> C3Result {
    C3Result {
        c3: Constant::certified(1.0),
        lambda0: chain.exit_rate(x0),
        strategy: C3Strategy::Sojourn,
        failed: false,
    }
}

/// With `p = min_y P_y(X_1 = x0)` and survival at least `exp(-C t)`:
/// for `t >= 1`, `P_{x0}(X_t = x0) >= p exp(-C (t - 1))`; for `t < 1` the
/// path has not left `x0` with probability `exp(-q t)`, `q = -Q(x0, x0)`.
pub(crate) fn absorption_construction(
    engine: &ExactEngine,
    chain: &AbsorbedChain,
    x0: usize,
) -> Result<C3Result> {
    let c = (1..=chain.top())
        .map(|x| chain.absorption_rate(x))
        .fold(0.0, f64::max);
    let column = engine.transition_column(chain, x0, 1.0)?;
    let p = column
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let q = chain.exit_rate(x0);
    let value = (p * c.exp()).min((-(q - c).max(0.0)).exp());
    let mut c3 = Constant::on_window(value, chain);
    let failed = p <= 0.0;
    if failed {
        c3.value = 0.0;
    }
    Ok(C3Result {
        c3,
        lambda0: c,
        strategy: C3Strategy::AbsorptionRate,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct C4Result {
    pub c4: Constant,
    /// `E_x(exp(lambda0 (T_K ^ T_0)))` for `x = 1..=N` (index `x - 1`).
    pub h: Vec<f64>,
    /// Set when the top state lies outside `K`, so the reflecting boundary
    /// row enters the solution.
    pub boundary_flag: bool,
}

/// Solves `lambda0 h(x) + sum_y Q(x, y) h(y) = 0` on `D = window \ (K u {0})`
/// with `h = 1` on `K u {0}`.
pub fn compute_c4(chain: &AbsorbedChain, k: &[usize], lambda0: f64) -> Result<C4Result> {
    let k = chain.normalize_set(k)?;
    if !(lambda0 >= 0.0 && lambda0.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda0 must be finite and >= 0, got {lambda0}"
        )));
    }
    if chain.mode() != BoundaryMode::Reflect {
        return Err(Error::Domain(
            "the exponential-moment system needs the reflect-mode chain".into(),
        ));
    }
    let top = chain.top();
    let mut local = vec![usize::MAX; top + 1];
    let d: Vec<usize> = (1..=top).filter(|x| k.binary_search(x).is_err()).collect();
    for (i, &x) in d.iter().enumerate() {
        local[x] = i;
    }
    let mut rows = Vec::with_capacity(d.len());
    let mut rhs = Vec::with_capacity(d.len());
    for &x in &d {
        let mut row = vec![(local[x], chain.exit_rate(x) - lambda0)];
        let mut b = 0.0;
        for (y, r) in chain.row(x) {
            if y == 0 || local[y] == usize::MAX {
                b += r;
            } else {
                row.push((local[y], -r));
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    let solution = solve_m_matrix(&rows, &rhs).ok_or(Error::MomentDiverges { lambda: lambda0 })?;
    let mut h = vec![1.0; top];
    for (&x, &v) in d.iter().zip(&solution) {
        if !(v >= 1.0 - 1e-12) || !v.is_finite() {
            return Err(Error::MomentDiverges { lambda: lambda0 });
        }
        h[x - 1] = v.max(1.0);
    }
    let c4 = h.iter().copied().fold(1.0, f64::max);
    Ok(C4Result {
        c4: Constant::on_window(c4, chain),
        h,
        boundary_flag: !d.is_empty() && *d.last().unwrap() == top,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisCertificate {
    pub k: Vec<usize>,
    pub x0: usize,
    pub c1: Constant,
    pub c2: Constant,
    pub c3: Constant,
    pub c4: Constant,
    pub lambda0: f64,
    pub gamma: f64,
    /// Empirical survival-ratio minimum, when it was computed.
    pub c2_empirical: Option<f64>,
    pub c3_strategy: C3Strategy,
    pub c4_boundary_flag: bool,
}

impl HypothesisCertificate {
    /// Assembles a certificate from its constants, checking their ranges.
    pub fn from_constants(
        k: Vec<usize>,
        x0: usize,
        c1: Constant,
        c2: Constant,
        c3: Constant,
        c4: Constant,
        lambda0: f64,
    ) -> Result<Self> {
        if k.binary_search(&x0).is_err() {
            return Err(Error::Domain(format!("x0 = {x0} must belong to K")));
        }
        let checks = [
            (
                1u8,
                c1.value > 0.0 && c1.value <= 1.0,
                "c1 must lie in (0, 1]",
            ),
            (
                2,
                c2.value > 0.0 && c2.value <= 1.0,
                "c2 must lie in (0, 1]",
            ),
            (
                3,
                c3.value > 0.0 && c3.value.is_finite(),
                "c3 must be positive",
            ),
            (
                4,
                c4.value >= 1.0 && c4.value.is_finite(),
                "c4 must be finite and >= 1",
            ),
        ];
        for (part, ok, reason) in checks {
            if !ok {
                return Err(Error::HypothesisFailed {
                    part,
                    reason: reason.to_string(),
                });
            }
        }
        let gamma = c1.value * c2.value * c3.value / (2.0 * c4.value);
        if !(gamma > 0.0 && gamma <= 0.5) {
            return Err(Error::HypothesisFailed {
                part: 3,
                reason: format!("gamma = {gamma} outside (0, 1/2]"),
            });
        }
        Ok(Self {
            k,
            x0,
            c1,
            c2,
            c3,
            c4,
            lambda0,
            gamma,
            c2_empirical: None,
            c3_strategy: C3Strategy::Sojourn,
            c4_boundary_flag: false,
        })
    }

    /// `2 (1 - gamma)^floor(t)`.
    pub fn bound(&self, t: f64) -> f64 {
        2.0 * (1.0 - self.gamma).powf(t.floor())
    }

    /// Certified only if all four constants are.
    pub fn provenance(&self) -> Provenance {
        let all = [self.c1, self.c2, self.c3, self.c4]
            .iter()
            .all(|c| c.provenance == Provenance::CertifiedBound);
        if all {
            Provenance::CertifiedBound
        } else {
            Provenance::EmpiricalEstimate
        }
    }

    pub fn window_limited(&self) -> bool {
        [self.c1, self.c2, self.c3, self.c4]
            .iter()
            .any(|c| c.window_limited)
    }

    /// `c2 c3 / (2 c4)`, the lower bound on the survival ratio.
    pub fn ratio_floor(&self) -> f64 {
        self.c2.value * self.c3.value / (2.0 * self.c4.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub t_max: f64,
    pub grid: TimeGrid,
    pub strategy: C3Strategy,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            t_max: 50.0,
            grid: TimeGrid::default(),
            strategy: C3Strategy::Best,
        }
    }
}

/// Computes all four constants on `chain` and assembles the certificate.
pub fn certify(
    engine: &ExactEngine,
    chain: &AbsorbedChain,
    k: &[usize],
    x0: usize,
    options: &CertifyOptions,
) -> Result<HypothesisCertificate> {
    let k = chain.normalize_set(k)?;
    if k.binary_search(&x0).is_err() {
        return Err(Error::Domain(format!("x0 = {x0} must belong to K")));
    }
    let (c1, c2) = rayon::join(
        || compute_c1(engine, chain, x0),
        || compute_c2(engine, chain, &k, options.t_max, &options.grid),
    );
    let (c1, c2) = (c1?, c2?);
    if c1.failed {
        return Err(Error::HypothesisFailed {
            part: 1,
            reason: format!(
                "state {x0} is unreachable in time 1 from state {}",
                c1.argmin
            ),
        });
    }
    if !(c2.certified > 0.0) {
        return Err(Error::HypothesisFailed {
            part: 2,
            reason: "survival ratio bound over K vanishes".into(),
        });
    }
    let c3 = compute_c3_lambda0(engine, chain, x0, &k, options.strategy)?;
    if c3.failed {
        return Err(Error::HypothesisFailed {
            part: 3,
            reason: format!("min_y P_y(X_1 = {x0}) = 0"),
        });
    }
    let c4 = compute_c4(chain, &k, c3.lambda0).map_err(|e| match e {
        Error::MomentDiverges { lambda } => Error::HypothesisFailed {
            part: 4,
            reason: format!("exponential moment diverges at lambda0 = {lambda}"),
        },
        other => other,
    })?;
    let c2_constant = Constant {
        value: c2.certified,
        provenance: Provenance::CertifiedBound,
        window_limited: c2.window_limited,
    };
    let mut cert =
        HypothesisCertificate::from_constants(k, x0, c1.c1, c2_constant, c3.c3, c4.c4, c3.lambda0)?;
    cert.c2_empirical = Some(c2.empirical);
    cert.c3_strategy = c3.strategy;
    cert.c4_boundary_flag = c4.boundary_flag;
    Ok(cert)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioCheck {
    pub holds: bool,
    /// `min_t [P_{x0}(t < T_0) / max_x P_x(t < T_0) - c2 c3 / (2 c4)]`.
    pub margin: f64,
    pub worst_t: f64,
}

/// Checks `P_{x0}(t < T_0) >= (c2 c3 / (2 c4)) max_x P_x(t < T_0)` on the
/// window for every grid time, with `1e-9` slack on the ratio.
pub fn check_ratio_inequality(
    engine: &ExactEngine,
    chain: &AbsorbedChain,
    cert: &HypothesisCertificate,
    times: &[f64],
) -> Result<RatioCheck> {
    chain.check_state(cert.x0)?;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let profiles = engine.survival_profiles(chain, &sorted)?;
    let floor = cert.ratio_floor();
    let mut margin = f64::INFINITY;
    let mut worst_t = f64::NAN;
    for (t, h) in sorted.iter().zip(&profiles) {
        let max = h.iter().copied().fold(0.0, f64::max);
        let m = h[cert.x0] / max - floor;
        if m < margin {
            margin = m;
            worst_t = *t;
        }
    }
    Ok(RatioCheck {
        holds: margin >= -1e-9,
        margin,
        worst_t,
    })
}
