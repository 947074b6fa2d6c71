//! Rate-matrix criteria for the fast-return hypothesis.
//!
//! With `C = sup_x Q(x, 0)` and
//! `alpha_K = inf_{y not in K} (Q(y, 0) + sum_{x in K} Q(y, x))`, the
//! hypothesis holds as soon as `alpha_K > C` for some finite `K`: from
//! outside `K` the chain jumps into `K u {0}` faster than it is absorbed.
//! The Ferrari-Maric condition `sum_x inf_{y != x} Q(y, x) > C` (with bounded
//! total rates) is a special case.
//!
//! Infima and suprema are taken over the window, extended by the tail
//! profiles of the rate family when the window knows them. Otherwise, when an
//! infimum sits at the top state of a truncated window, smaller values may
//! hide beyond it and the result carries an edge flag.

use crate::certifier::{
    absorption_construction, compute_c2, Constant, HypothesisCertificate, Provenance, TimeGrid,
};
use crate::exact::ExactEngine;
use crate::{AbsorbedChain, Error, Result};

/// `C = max_x Q(x, 0)` over the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionSup {
    pub c: f64,
    /// No state is ever absorbed, so quasi-stationarity says nothing.
    pub never_absorbed: bool,
}

pub fn compute_absorption_sup(chain: &AbsorbedChain) -> AbsorptionSup {
    let c = (1..=chain.top())
        .map(|x| chain.absorption_rate(x))
        .fold(0.0, f64::max);
    AbsorptionSup {
        c,
        never_absorbed: c == 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaK {
    pub value: f64,
    /// The infimum is attained at the top state of a truncated window.
    pub edge_attained: bool,
}

pub fn compute_alpha_k(chain: &AbsorbedChain, k: &[usize]) -> Result<AlphaK> {
    let k = chain.normalize_set(k)?;
    if k.len() == chain.top() {
        return Err(Error::Domain(
            "K covers the whole window, alpha_K is an empty infimum".into(),
        ));
    }
    let mut value = f64::INFINITY;
    let mut at_top = f64::INFINITY;
    for y in (1..=chain.top()).filter(|y| k.binary_search(y).is_err()) {
        let into: f64 = chain
            .row(y)
            .filter(|&(x, _)| x == 0 || k.binary_search(&x).is_ok())
            .map(|(_, r)| r)
            .sum();
        value = value.min(into);
        if y == chain.top() {
            at_top = into;
        }
    }
    let edge_attained = match chain.tail_profiles() {
        Some(profiles) => {
            for profile in profiles {
                let into: f64 = profile
                    .iter()
                    .filter(|&&(x, _)| x == 0 || k.binary_search(&x).is_ok())
                    .map(|&(_, r)| r)
                    .sum();
                value = value.min(into);
            }
            false
        }
        None => chain.is_truncated() && at_top <= value,
    };
    Ok(AlphaK {
        value,
        edge_attained,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaKCheck {
    pub holds: bool,
    pub c: f64,
    pub alpha_k: AlphaK,
    /// `alpha_K / (alpha_K - C)` when the criterion holds.
    pub c4_bound: Option<f64>,
    /// `C` when the criterion holds.
    pub lambda0: Option<f64>,
}

/// `alpha_K > C`.
pub fn check_theorem31(chain: &AbsorbedChain, k: &[usize]) -> Result<AlphaKCheck> {
    let c = compute_absorption_sup(chain).c;
    let alpha_k = compute_alpha_k(chain, k)?;
    let holds = alpha_k.value > c;
    Ok(AlphaKCheck {
        holds,
        c,
        alpha_k,
        c4_bound: holds.then(|| alpha_k.value / (alpha_k.value - c)),
        lambda0: holds.then_some(c),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FerrariMaric {
    pub holds: bool,
    pub c: f64,
    /// `sup_x sum_{y != x} Q(x, y)`; `None` when the untruncated rates are
    /// unbounded.
    pub q_bar: Option<f64>,
    /// `sum_x inf_{y != x} Q(y, x)`.
    pub alpha: f64,
    /// When the condition holds: whether a prefix `K` satisfying
    /// `alpha_K > C` was found, as the condition implies.
    pub implication_holds: Option<bool>,
}

pub fn check_ferrari_maric(chain: &AbsorbedChain) -> FerrariMaric {
    let c = compute_absorption_sup(chain).c;
    let q_bar = (!chain.rates_unbounded()).then(|| chain.max_exit_rate());
    let top = chain.top();
    let mut column_inf = vec![f64::INFINITY; top + 1];
    for y in 1..=top {
        let mut next = 1;
        for (x, r) in chain.row(y).filter(|&(x, _)| x != 0) {
            // States skipped by the sparse row receive rate 0 from y.
            for z in next..x {
                if z != y {
                    column_inf[z] = 0.0;
                }
            }
            column_inf[x] = column_inf[x].min(r);
            next = x + 1;
        }
        for z in next..=top {
            if z != y {
                column_inf[z] = 0.0;
            }
        }
    }
    if let Some(profiles) = chain.tail_profiles() {
        for (x, inf) in column_inf.iter_mut().enumerate().skip(1) {
            for profile in profiles {
                let r = profile
                    .iter()
                    .find(|&&(y, _)| y == x)
                    .map_or(0.0, |&(_, r)| r);
                *inf = inf.min(r);
            }
        }
    }
    let alpha: f64 = column_inf[1..]
        .iter()
        .map(|&v| if v.is_finite() { v } else { 0.0 })
        .sum();
    let holds = alpha > c && q_bar.is_some();
    let implication_holds = holds.then(|| top >= 2 && find_minimal_k(chain, top - 1).is_some());
    FerrariMaric {
        holds,
        c,
        q_bar,
        alpha,
        implication_holds,
    }
}

/// Smallest prefix `{1, ..., k}`, `k <= k_max`, with `alpha_K > C`. Only
/// prefixes are searched.
pub fn find_minimal_k(chain: &AbsorbedChain, k_max: usize) -> Option<Vec<usize>> {
    let k_max = k_max.min(chain.top().saturating_sub(1));
    (1..=k_max)
        .map(|k| (1..=k).collect::<Vec<_>>())
        .find(|k| check_theorem31(chain, k).is_ok_and(|r| r.holds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub c: f64,
    pub never_absorbed: bool,
    pub q_bar: Option<f64>,
    pub alpha_fm: f64,
    pub k: Option<Vec<usize>>,
    pub alpha_k: Option<f64>,
    pub alpha_k_edge: bool,
    pub theorem31_holds: bool,
    pub fm_holds: bool,
    pub fm_implication_holds: Option<bool>,
    pub c4_bound: Option<f64>,
}

/// Both criteria. Without an explicit `K` the minimal prefix up to `k_max`
/// is used.
pub fn criterion_report(
    chain: &AbsorbedChain,
    k: Option<&[usize]>,
    k_max: usize,
) -> Result<CriterionReport> {
    let sup = compute_absorption_sup(chain);
    let fm = check_ferrari_maric(chain);
    let k = match k {
        Some(k) => Some(chain.normalize_set(k)?),
        None => find_minimal_k(chain, k_max),
    };
    let t31 = k
        .as_deref()
        .map(|k| check_theorem31(chain, k))
        .transpose()?;
    Ok(CriterionReport {
        c: sup.c,
        never_absorbed: sup.never_absorbed,
        q_bar: fm.q_bar,
        alpha_fm: fm.alpha,
        alpha_k: t31.map(|t| t.alpha_k.value),
        alpha_k_edge: t31.is_some_and(|t| t.alpha_k.edge_attained),
        theorem31_holds: t31.is_some_and(|t| t.holds),
        fm_holds: fm.holds,
        fm_implication_holds: fm.implication_holds,
        c4_bound: t31.and_then(|t| t.c4_bound),
        k,
    })
}

/// Certificate built from the criterion: `lambda0 = C`,
/// `c4 = alpha_K / (alpha_K - C)`, `c1 = min_y P_y(X_1 = x0)`, `c3` from the
/// same one-step infimum, `c2` from its analytic bound.
pub fn derive_certificate_via_criterion(
    engine: &ExactEngine,
    chain: &AbsorbedChain,
    k: &[usize],
    x0: usize,
) -> Result<HypothesisCertificate> {
    let k = chain.normalize_set(k)?;
    if k.binary_search(&x0).is_err() {
        return Err(Error::Domain(format!("x0 = {x0} must belong to K")));
    }
    let t31 = check_theorem31(chain, &k)?;
    if !t31.holds {
        return Err(Error::CriterionNotSatisfied(format!(
            "alpha_K = {} does not exceed C = {}",
            t31.alpha_k.value, t31.c
        )));
    }
    let window_limited = chain.is_truncated();
    let c3 = absorption_construction(engine, chain, x0)?;
    if c3.failed {
        return Err(Error::HypothesisFailed {
            part: 1,
            reason: format!("min_y P_y(X_1 = {x0}) = 0"),
        });
    }
    let column = engine.transition_column(chain, x0, 1.0)?;
    let p = column.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = compute_c2(engine, chain, &k, 50.0, &TimeGrid::default())?;
    let certified = |value| Constant {
        value,
        provenance: Provenance::CertifiedBound,
        window_limited,
    };
    let mut cert = HypothesisCertificate::from_constants(
        k,
        x0,
        certified(p.min(1.0)),
        certified(c2.certified),
        certified(c3.c3.value),
        certified(t31.c4_bound.expect("criterion holds")),
        t31.c,
    )?;
    cert.c2_empirical = Some(c2.empirical);
    cert.c3_strategy = c3.strategy;
    Ok(cert)
}
