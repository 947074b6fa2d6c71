//! Text and CSV renderings of results. Floats carry 17 significant digits so
//! that files round-trip exactly.

use std::fmt::Write;

use crate::birth_death::BdHittingReport;
use crate::certifier::{Constant, HypothesisCertificate};
use crate::criterion::CriterionReport;
use crate::exact::{ConvergenceTrace, QsdResult};
use crate::monte_carlo::{ParticleEnsemble, PathOutcome, TrajectoryBatch};
use crate::StateDistribution;

/// `v` with 17 significant digits.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| "inf".to_string(), float)
}

pub fn state_list(states: &[usize]) -> String {
    states
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

/// `state,weight` rows.
pub fn distribution_csv(dist: &StateDistribution) -> String {
    let mut out = String::from("state,weight\n");
    for (i, w) in dist.weights().iter().enumerate() {
        writeln!(out, "{},{}", i + 1, float(*w)).unwrap();
    }
    out
}

pub fn qsd_summary_text(result: &QsdResult) -> String {
    let mut out = String::new();
    writeln!(out, "absorption_rate = {}", float(result.absorption_rate)).unwrap();
    writeln!(out, "escape_rate = {}", float(result.escape_rate)).unwrap();
    writeln!(out, "eigen_residual = {}", float(result.eigen_residual)).unwrap();
    writeln!(out, "iterations = {}", result.iterations).unwrap();
    writeln!(out, "truncation_n = {}", result.truncation_n).unwrap();
    out
}

/// `t,tv_to_limit[,tv_pair]` rows.
pub fn trace_csv(trace: &ConvergenceTrace) -> String {
    let pair = trace.tv_between_pair.as_ref();
    let mut out = String::from(if pair.is_some() {
        "t,tv_to_limit,tv_pair\n"
    } else {
        "t,tv_to_limit\n"
    });
    for (i, t) in trace.times.iter().enumerate() {
        write!(out, "{},{}", float(*t), float(trace.tv_to_limit[i])).unwrap();
        if let Some(p) = pair {
            write!(out, ",{}", float(p[i])).unwrap();
        }
        out.push('\n');
    }
    out
}

/// One row of a decay table: distances of the two conditioned laws to the
/// QSD and to each other, next to the certified bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub t: f64,
    pub tv_mu: f64,
    pub tv_nu: f64,
    pub tv_pair: f64,
    pub certified_bound: f64,
}

pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut out = String::from("t,tv_mu,tv_nu,tv_pair,certified_bound\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            float(r.t),
            float(r.tv_mu),
            float(r.tv_nu),
            float(r.tv_pair),
            float(r.certified_bound)
        )
        .unwrap();
    }
    out
}

fn constant_lines(out: &mut String, name: &str, c: &Constant) {
    writeln!(out, "{name} = {}", float(c.value)).unwrap();
    writeln!(out, "provenance.{name} = {}", c.provenance).unwrap();
    writeln!(out, "window_limited.{name} = {}", c.window_limited).unwrap();
}

pub fn certificate_text(cert: &HypothesisCertificate) -> String {
    let mut out = String::new();
    writeln!(out, "K = {}", state_list(&cert.k)).unwrap();
    writeln!(out, "x0 = {}", cert.x0).unwrap();
    constant_lines(&mut out, "c1", &cert.c1);
    constant_lines(&mut out, "c2", &cert.c2);
    if let Some(e) = cert.c2_empirical {
        writeln!(out, "c2_empirical = {}", float(e)).unwrap();
    }
    constant_lines(&mut out, "c3", &cert.c3);
    writeln!(out, "c3_strategy = {}", cert.c3_strategy).unwrap();
    constant_lines(&mut out, "c4", &cert.c4);
    writeln!(out, "c4_boundary_flag = {}", cert.c4_boundary_flag).unwrap();
    writeln!(out, "lambda0 = {}", float(cert.lambda0)).unwrap();
    writeln!(out, "gamma = {}", float(cert.gamma)).unwrap();
    writeln!(out, "provenance.gamma = {}", cert.provenance()).unwrap();
    writeln!(out, "window_limited.gamma = {}", cert.window_limited()).unwrap();
    writeln!(out, "bound(t) = 2*(1-gamma)^floor(t)").unwrap();
    out
}

pub fn criterion_text(report: &CriterionReport) -> String {
    let mut out = String::new();
    writeln!(out, "C = {}", float(report.c)).unwrap();
    writeln!(out, "never_absorbed = {}", report.never_absorbed).unwrap();
    writeln!(out, "q_bar = {}", opt_float(report.q_bar)).unwrap();
    writeln!(out, "alpha_fm = {}", float(report.alpha_fm)).unwrap();
    match &report.k {
        Some(k) => writeln!(out, "K = {}", state_list(k)).unwrap(),
        None => writeln!(out, "K = none").unwrap(),
    }
    match report.alpha_k {
        Some(a) => writeln!(out, "alpha_K = {}", float(a)).unwrap(),
        None => writeln!(out, "alpha_K = none").unwrap(),
    }
    writeln!(out, "alpha_K_edge = {}", report.alpha_k_edge).unwrap();
    writeln!(out, "theorem31_holds = {}", report.theorem31_holds).unwrap();
    writeln!(out, "fm_holds = {}", report.fm_holds).unwrap();
    if let Some(i) = report.fm_implication_holds {
        writeln!(out, "fm_prefix_K_found = {i}").unwrap();
    }
    match report.c4_bound {
        Some(c) => writeln!(out, "c4_bound = {}", float(c)).unwrap(),
        None => writeln!(out, "c4_bound = none").unwrap(),
    }
    out
}

pub fn bd_report_text(report: &BdHittingReport) -> String {
    let mut out = String::new();
    writeln!(out, "tail_series_S = {}", float(report.tail_series_s)).unwrap();
    writeln!(out, "lambda0 = {}", float(report.lambda0)).unwrap();
    match report.z0 {
        Some(z) => writeln!(out, "z0 = {z}").unwrap(),
        None => writeln!(out, "z0 = none").unwrap(),
    }
    writeln!(out, "exp_moment_sup = {}", opt_float(report.exp_moment_sup)).unwrap();
    writeln!(out, "hitting_target = {}", report.z).unwrap();
    writeln!(out, "alpha_terms = {}", report.alpha.len()).unwrap();
    out
}

/// `j,alpha` rows.
pub fn bd_alpha_csv(report: &BdHittingReport) -> String {
    let mut out = String::from("j,alpha\n");
    for (i, a) in report.alpha.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, float(*a)).unwrap();
    }
    out
}

/// `x,expected_hitting,exp_moment` rows.
pub fn bd_hitting_csv(report: &BdHittingReport) -> String {
    let mut out = String::from("x,expected_hitting,exp_moment\n");
    for &(x, e, h) in &report.hitting {
        writeln!(out, "{x},{},{}", float(e), float(h)).unwrap();
    }
    out
}

/// `path,end_state,absorption_time` rows. Paths alive at the horizon show
/// `survived`; stopped and escaped paths show their stopping time with a tag.
pub fn batch_csv(batch: &TrajectoryBatch) -> String {
    let mut out = String::from("path,end_state,absorption_time\n");
    for (i, p) in batch.paths.iter().enumerate() {
        let time = match p.outcome {
            PathOutcome::Absorbed { time } => float(time),
            PathOutcome::Survived => "survived".to_string(),
            PathOutcome::HitSet { time } => format!("hit:{}", float(time)),
            PathOutcome::Escaped { time } => format!("escaped:{}", float(time)),
        };
        writeln!(out, "{i},{},{time}", p.end_state).unwrap();
    }
    out
}

/// `t,state,count` rows for occupied states.
pub fn fv_csv(snapshots: &[ParticleEnsemble], n_states: usize) -> String {
    let mut out = String::from("t,state,count\n");
    for s in snapshots {
        for (i, c) in s.counts(n_states).into_iter().enumerate() {
            if c > 0 {
                writeln!(out, "{},{},{c}", float(s.time), i + 1).unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 2f64.sqrt() - 1.0, 1e-300, 123456.789] {
            let s = float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn distribution_rows() {
        let d = StateDistribution::from_weights(vec![0.25, 0.75]).unwrap();
        assert_eq!(
            distribution_csv(&d),
            "state,weight\n1,2.5000000000000000e-1\n2,7.5000000000000000e-1\n"
        );
    }

    #[test]
    fn certificate_lines() {
        let cert = HypothesisCertificate::from_constants(
            vec![1, 2, 3],
            1,
            Constant::certified(0.5),
            Constant::empirical(0.5),
            Constant::certified(1.0),
            Constant::certified(2.0),
            2.0,
        )
        .unwrap();
        let text = certificate_text(&cert);
        assert!(text.starts_with("K = 1,2,3\nx0 = 1\nc1 = 5.0000000000000000e-1\n"));
        assert!(text.contains("provenance.c1 = certified\n"));
        assert!(text.contains("provenance.c2 = empirical\n"));
        assert!(text.contains("gamma = 6.2500000000000000e-2\n"));
        assert!(text.contains("provenance.gamma = empirical\n"));
        assert!(text.ends_with("bound(t) = 2*(1-gamma)^floor(t)\n"));
    }
}
