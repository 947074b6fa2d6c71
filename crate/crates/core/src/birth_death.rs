//! Birth-death analytics: the coefficients `alpha_j`, expected hitting times
//! from above, exponential moments of hitting times and the logistic
//! certificate built from them.
//!
//! With birth rates `b_x` and death rates `delta_x`,
//! `alpha_j = prod_{i<j} b_i / prod_{i<=j} delta_i` and, for `x > z`,
//! `E_x(T_z) = sum_{k=z+1}^{x} (1 / (delta_k alpha_k)) sum_{l>=k} alpha_l`.

use crate::certifier::{
    compute_c1, compute_c2, compute_c4, C3Strategy, CertifyOptions, Constant,
    HypothesisCertificate, Provenance,
};
use crate::exact::ExactEngine;
use crate::linalg::{solve_m_matrix, CompensatedSum};
use crate::{BirthDeathSpec, BoundaryMode, Error, RateFamily, Result};

/// Relative size below which a series term no longer changes the sum.
const SERIES_REL_TOL: f64 = 1e-15;
/// Hard cap on the number of terms of any inner series.
const SERIES_CAP: usize = 1_000_000;
/// Outer partial sums for `x = infinity` are taken up to this many terms and
/// then extrapolated.
const OUTER_CAP: usize = 1 << 20;
/// Truncation levels of the continued fraction for the infinite-chain moment.
const FRACTION_LEVELS: [usize; 4] = [1 << 16, 1 << 17, 1 << 18, 1 << 19];

fn check_death(spec: &BirthDeathSpec, i: usize) -> Result<f64> {
    let d = spec.death_rate(i);
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!(
            "death rate at {i} is {d}, must be positive"
        )));
    }
    Ok(d)
}

/// `ln alpha_j` for `j = 1..=j_max` (index `j - 1`).
pub fn log_alpha_coeffs(spec: &BirthDeathSpec, j_max: usize) -> Result<Vec<f64>> {
    if j_max == 0 {
        return Err(Error::Domain("j_max must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(j_max);
    let mut log = -check_death(spec, 1)?.ln();
    out.push(log);
    for j in 1..j_max {
        log += spec.birth_rate(j).ln() - check_death(spec, j + 1)?.ln();
        out.push(log);
    }
    Ok(out)
}

/// `alpha_j` for `j = 1..=j_max` (index `j - 1`), computed in log space.
pub fn alpha_coeffs(spec: &BirthDeathSpec, j_max: usize) -> Result<Vec<f64>> {
    Ok(log_alpha_coeffs(spec, j_max)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// `sum_{l>=k} alpha_l / alpha_k`, i.e. `1 + sum_{l>k} prod_{i=k}^{l-1} b_i / delta_{i+1}`.
fn normalized_tail(spec: &BirthDeathSpec, k: usize) -> Result<f64> {
    let mut sum = CompensatedSum::default();
    let mut term = 1.0;
    sum.add(term);
    for l in k..k + SERIES_CAP {
        term *= spec.birth_rate(l) / check_death(spec, l + 1)?;
        if !term.is_finite() {
            return Err(Error::DivergentTail);
        }
        sum.add(term);
        if term < SERIES_REL_TOL * sum.value() {
            return Ok(sum.value());
        }
    }
    Err(Error::DivergentTail)
}

/// Starting point of a hitting time from above.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HittingStart {
    State(usize),
    /// The supremum over all starting states.
    Infinity,
}

/// `E_x(T_z)` for `x > z >= 1` from the series; `x = Infinity` gives
/// `sup_{x > z} E_x(T_z)`.
pub fn tail_expected_hitting(spec: &BirthDeathSpec, z: usize, x: HittingStart) -> Result<f64> {
    if z == 0 {
        return Err(Error::Domain("z must be at least 1".into()));
    }
    let term = |k: usize| -> Result<f64> { Ok(normalized_tail(spec, k)? / check_death(spec, k)?) };
    match x {
        HittingStart::State(x) => {
            if x <= z {
                return Err(Error::Domain(format!("need x > z, got x = {x}, z = {z}")));
            }
            let mut sum = CompensatedSum::default();
            for k in z + 1..=x {
                sum.add(term(k)?);
            }
            Ok(sum.value())
        }
        HittingStart::Infinity => {
            let mut sum = CompensatedSum::default();
            let mut checkpoints = Vec::new();
            let mut next_checkpoint = 1usize << 17;
            for (n, k) in (z + 1..).enumerate() {
                let t = term(k)?;
                sum.add(t);
                if t < SERIES_REL_TOL * sum.value() {
                    return Ok(sum.value());
                }
                if n + 1 == next_checkpoint {
                    checkpoints.push(sum.value());
                    if next_checkpoint >= OUTER_CAP {
                        break;
                    }
                    next_checkpoint *= 2;
                }
            }
            aitken_tail(&checkpoints, 0.9).ok_or(Error::DivergentTail)
        }
    }
}

/// Aitken extrapolation of a sequence sampled at doubling indices. Returns
/// `None` unless successive differences shrink by a ratio below `max_ratio`.
fn aitken_tail(values: &[f64], max_ratio: f64) -> Option<f64> {
    let n = values.len();
    if n < 3 {
        return None;
    }
    let (a, b, c) = (values[n - 3], values[n - 2], values[n - 1]);
    let (d1, d2) = (b - a, c - b);
    if d2 == 0.0 {
        return Some(c);
    }
    let r = d2 / d1;
    if !(r.abs() < max_ratio) {
        return None;
    }
    Some(c + d2 * r / (1.0 - r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpMoment {
    pub z: usize,
    pub lambda: f64,
    /// `E_x(exp(lambda T_z))` on the window for `x = z+1..=x_max`
    /// (index `x - z - 1`), with a reflecting top at `x_max`.
    pub h: Vec<f64>,
    pub sup_window: f64,
    /// Supremum over all `x > z` for the untruncated chain, from the
    /// continued fraction extrapolated in its truncation level.
    pub sup_limit: Option<f64>,
    /// The extrapolated supremum agrees to `1e-8` across truncation levels.
    pub stabilized: bool,
}

/// `h(x) = E_x(exp(lambda T_z))` for `z < x <= x_max`.
pub fn exp_moment_hitting(
    spec: &BirthDeathSpec,
    z: usize,
    lambda: f64,
    x_max: usize,
) -> Result<ExpMoment> {
    if z == 0 || x_max <= z {
        return Err(Error::Domain(format!(
            "need 1 <= z < x_max, got z = {z}, x_max = {x_max}"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let n = x_max - z;
    let mut rows = Vec::with_capacity(n);
    let mut rhs = vec![0.0; n];
    for (i, x) in (z + 1..=x_max).enumerate() {
        let delta = check_death(spec, x)?;
        let b = if x == x_max { 0.0 } else { spec.birth_rate(x) };
        let mut row = vec![(i, b + delta - lambda)];
        if i > 0 {
            row.push((i - 1, -delta));
        } else {
            rhs[0] = delta;
        }
        if b > 0.0 {
            row.push((i + 1, -b));
        }
        rows.push(row);
    }
    let h = solve_m_matrix(&rows, &rhs).ok_or(Error::MomentDiverges { lambda })?;
    if h.iter().any(|v| !(v.is_finite() && *v >= 1.0 - 1e-12)) {
        return Err(Error::MomentDiverges { lambda });
    }
    let sup_window = h.iter().copied().fold(1.0, f64::max);
    let levels: Vec<Option<f64>> = FRACTION_LEVELS
        .iter()
        .map(|&l| fraction_sup(spec, z, lambda, l.max(x_max)))
        .collect();
    let (sup_limit, stabilized) = if levels.iter().all(Option::is_some) {
        let v: Vec<f64> = levels.into_iter().flatten().collect();
        let early = aitken_tail(&v[..3], 0.75);
        let late = aitken_tail(&v, 0.75);
        match (early, late) {
            (Some(e), Some(l)) => (Some(l), (e - l).abs() <= 1e-8 * l),
            (_, late) => (late, false),
        }
    } else {
        (None, false)
    };
    Ok(ExpMoment {
        z,
        lambda,
        h,
        sup_window,
        sup_limit,
        stabilized,
    })
}

/// `prod_{k=z+1}^{level} g_k` with `g_k = h(k) / h(k-1)` from the backward
/// recursion `g_k = delta_k / (delta_k + b_k - lambda - b_k g_{k+1})`, closed
/// at `level` by a pure-death step. `None` if a denominator is not positive.
fn fraction_sup(spec: &BirthDeathSpec, z: usize, lambda: f64, level: usize) -> Option<f64> {
    let delta = spec.death_rate(level);
    if !(delta > lambda) {
        return None;
    }
    let mut g = delta / (delta - lambda);
    let mut log = CompensatedSum::default();
    log.add(g.ln());
    for k in (z + 1..level).rev() {
        let (b, delta) = (spec.birth_rate(k), spec.death_rate(k));
        let denom = delta + b - lambda - b * g;
        if !(denom > 0.0) {
            return None;
        }
        g = delta / denom;
        log.add(g.ln());
    }
    let v = log.value().exp();
    v.is_finite().then_some(v)
}

/// Smallest `z <= z_max` whose exponential moment at `lambda0` is finite and
/// stable in the truncation level.
pub fn find_z0(spec: &BirthDeathSpec, lambda0: f64, z_max: usize) -> Option<usize> {
    (1..=z_max).find(|&z| {
        matches!(
            exp_moment_hitting(spec, z, lambda0, z + 64),
            Ok(ExpMoment {
                sup_limit: Some(_),
                stabilized: true,
                ..
            })
        )
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdHittingReport {
    pub alpha: Vec<f64>,
    /// `sup_{x > 1} E_x(T_1)`.
    pub tail_series_s: f64,
    pub z0: Option<usize>,
    pub lambda0: f64,
    pub exp_moment_sup: Option<f64>,
    /// `(x, E_x(T_{z}), E_x(exp(lambda0 T_{z})))` on the window above `z`.
    pub hitting: Vec<(usize, f64, f64)>,
    pub z: usize,
}

/// Collects the analytics of `spec`: `alpha_j` up to `j_max`, the series
/// `S`, `z0` at `lambda0` and per-state hitting data above `z` (defaults
/// to `z0`, or 1 when none exists) up to `x_max`.
pub fn bd_report(
    spec: &BirthDeathSpec,
    lambda0: f64,
    j_max: usize,
    z_max: usize,
    z: Option<usize>,
    x_max: usize,
) -> Result<BdHittingReport> {
    let alpha = alpha_coeffs(spec, j_max)?;
    let s = tail_expected_hitting(spec, 1, HittingStart::Infinity)?;
    let z0 = find_z0(spec, lambda0, z_max);
    let z = z.or(z0).unwrap_or(1);
    let moment = exp_moment_hitting(spec, z, lambda0, x_max).ok();
    let mut hitting = Vec::new();
    for x in z + 1..=x_max {
        let e = tail_expected_hitting(spec, z, HittingStart::State(x))?;
        let h = moment.as_ref().map_or(f64::INFINITY, |m| m.h[x - z - 1]);
        hitting.push((x, e, h));
    }
    let exp_moment_sup = z0
        .and_then(|z0| exp_moment_hitting(spec, z0, lambda0, z0 + 64).ok())
        .and_then(|m| m.sup_limit);
    Ok(BdHittingReport {
        alpha,
        tail_series_s: s,
        z0,
        lambda0,
        exp_moment_sup,
        hitting,
        z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Window on which `c1`, `c2` and the window part of `c4` are computed.
    pub n_states: usize,
    pub z_max: usize,
    pub certify: CertifyOptions,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            n_states: 128,
            z_max: 50,
            certify: CertifyOptions::default(),
        }
    }
}

/// Certificate for the logistic chain: `x0 = 1`, `lambda0 = b + d`,
/// `c3 = 1`, `K = {1..z0}`.
pub fn logistic_certificate(
    engine: &ExactEngine,
    b: f64,
    d: f64,
    c: f64,
    options: &LogisticOptions,
) -> Result<HypothesisCertificate> {
    let spec = BirthDeathSpec::logistic(b, d, c)?;
    let lambda0 = b + d;
    let z0 = find_z0(&spec, lambda0, options.z_max).ok_or_else(|| Error::HypothesisFailed {
        part: 4,
        reason: format!(
            "no z0 <= {} with a finite exponential moment at lambda0 = {lambda0}",
            options.z_max
        ),
    })?;
    let chain = spec.materialize(options.n_states, BoundaryMode::Reflect)?;
    if z0 >= chain.top() {
        return Err(Error::Domain(format!(
            "window with {} states is too small for K = 1..{z0}",
            options.n_states
        )));
    }
    let k: Vec<usize> = (1..=z0).collect();
    let c1 = compute_c1(engine, &chain, 1)?;
    if c1.failed {
        return Err(Error::HypothesisFailed {
            part: 1,
            reason: "state 1 is unreachable in time 1 from some state".into(),
        });
    }
    let c2 = compute_c2(
        engine,
        &chain,
        &k,
        options.certify.t_max,
        &options.certify.grid,
    )?;
    let window_c4 = compute_c4(&chain, &k, lambda0).map_err(|_| Error::HypothesisFailed {
        part: 4,
        reason: format!("exponential moment diverges at lambda0 = {lambda0} on the window"),
    })?;
    let limit = exp_moment_hitting(&spec, z0, lambda0, z0 + 64)?
        .sup_limit
        .ok_or(Error::MomentDiverges { lambda: lambda0 })?;
    let c4 = Constant {
        value: window_c4.c4.value.max(limit),
        provenance: Provenance::EmpiricalEstimate,
        window_limited: false,
    };
    let c2 = Constant {
        value: c2.certified,
        provenance: Provenance::CertifiedBound,
        window_limited: c2.window_limited,
    };
    let mut cert = HypothesisCertificate::from_constants(
        k,
        1,
        c1.c1,
        c2,
        Constant::certified(1.0),
        c4,
        lambda0,
    )?;
    cert.c3_strategy = C3Strategy::Sojourn;
    cert.c4_boundary_flag = window_c4.boundary_flag;
    Ok(cert)
}
