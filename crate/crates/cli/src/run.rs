//! Command dispatch: build the chain, run the computation, write artifacts.

use std::fs;
use std::path::Path;

use qsd_core::birth_death::{bd_report, logistic_certificate, LogisticOptions};
use qsd_core::certifier::{certify, CertifyOptions, HypothesisCertificate};
use qsd_core::chain::{ChainDefinition, ChainFile};
use qsd_core::criterion::{criterion_report, find_minimal_k};
use qsd_core::exact::{tv_distance, ExactEngine, QsdResult};
use qsd_core::format::{self, DecayRow};
use qsd_core::monte_carlo::{conditional_estimate, fleming_viot, simulate_batch};
use qsd_core::{
    AbsorbedChain, BirthDeathSpec, BoundaryMode, Error, RateFamily, Result, StateDistribution,
};

use crate::config::{ChainSource, CommandKind, RunConfig, Window};

/// Window used by certify and decay on logistic chains unless `--states`
/// says otherwise.
const CERTIFY_WINDOW: usize = 128;
const AUTO_START: usize = 17;
const AUTO_MAX: usize = 4097;

struct Source {
    file: Option<ChainFile>,
    logistic: Option<(f64, f64, f64)>,
    boundary: BoundaryMode,
}

impl Source {
    fn load(config: &RunConfig) -> Result<Self> {
        match &config.source {
            ChainSource::File(path) => {
                let file = ChainFile::read(path)?;
                let logistic = match &file.definition {
                    ChainDefinition::Logistic(p) => Some((p.b, p.d, p.c)),
                    ChainDefinition::Rates(_) => None,
                };
                Ok(Self {
                    boundary: config.boundary.unwrap_or(file.boundary),
                    file: Some(file),
                    logistic,
                })
            }
            &ChainSource::Logistic { b, d, c } => Ok(Self {
                file: None,
                logistic: Some((b, d, c)),
                boundary: config.boundary.unwrap_or(BoundaryMode::Reflect),
            }),
        }
    }

    fn spec(&self) -> Option<Result<BirthDeathSpec>> {
        self.logistic
            .map(|(b, d, c)| BirthDeathSpec::logistic(b, d, c))
    }

    /// Rate-table files carry their own window; everything else uses
    /// `window`, falling back to `default` (`None` meaning auto).
    fn chain(
        &self,
        engine: &ExactEngine,
        window: Option<Window>,
        default: Option<usize>,
        tol: f64,
    ) -> Result<(AbsorbedChain, Option<QsdResult>)> {
        if let Some(file) = &self.file {
            if let ChainDefinition::Rates(entries) = &file.definition {
                let n = file.n_states.expect("rate tables declare their window");
                if let Some(Window::Fixed(m)) = window {
                    if m != n {
                        return Err(Error::Validation(format!(
                            "window is fixed at {n} states by the rate table; cannot use {m}"
                        )));
                    }
                }
                return Ok((
                    AbsorbedChain::from_entries(entries, n, self.boundary)?,
                    None,
                ));
            }
        }
        let spec = self.spec().expect("non-table sources are logistic")?;
        let file_window = self.file.as_ref().and_then(|f| f.n_states);
        let fixed = match window {
            Some(Window::Fixed(n)) => Some(n),
            Some(Window::Auto) => None,
            None => file_window.or(default),
        };
        match fixed {
            Some(n) => Ok((spec.materialize(n, self.boundary)?, None)),
            None => {
                let (chain, qsd) =
                    engine.auto_window(&spec, self.boundary, AUTO_START, tol, AUTO_MAX)?;
                Ok((chain, Some(qsd)))
            }
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn certify_options(config: &RunConfig) -> CertifyOptions {
    let defaults = CertifyOptions::default();
    CertifyOptions {
        t_max: config.t_max.unwrap_or(defaults.t_max),
        grid: config.grid.unwrap_or(defaults.grid),
        ..defaults
    }
}

/// The logistic route when no `K`/`x0` is forced, the generic certifier
/// otherwise (`K` defaults to the minimal criterion prefix, then `{1}`).
fn build_certificate(
    engine: &ExactEngine,
    config: &RunConfig,
    source: &Source,
    chain: &AbsorbedChain,
) -> Result<HypothesisCertificate> {
    let options = certify_options(config);
    if let (Some((b, d, c)), None, None) = (source.logistic, &config.k, config.x0) {
        if source.boundary == BoundaryMode::Reflect {
            let logistic = LogisticOptions {
                n_states: chain.n_states(),
                certify: options,
                ..LogisticOptions::default()
            };
            return logistic_certificate(engine, b, d, c, &logistic);
        }
    }
    let k = match &config.k {
        Some(k) => k.clone(),
        None => find_minimal_k(chain, chain.top()).unwrap_or_else(|| vec![1]),
    };
    let x0 = config.x0.unwrap_or(k[0]);
    certify(engine, chain, &k, x0, &options)
}

fn qsd(engine: &ExactEngine, config: &RunConfig, source: &Source) -> Result<()> {
    let (chain, result) = source.chain(engine, config.window, None, config.tol)?;
    let result = match result {
        Some(r) => r,
        None => engine.compute_qsd(&chain, config.tol)?,
    };
    write(
        &config.out,
        "qsd.csv",
        &format::distribution_csv(&result.qsd),
    )?;
    print!("{}", format::qsd_summary_text(&result));
    Ok(())
}

fn certify_command(engine: &ExactEngine, config: &RunConfig, source: &Source) -> Result<()> {
    let (chain, _) = source.chain(engine, config.window, Some(CERTIFY_WINDOW), config.tol)?;
    let cert = build_certificate(engine, config, source, &chain)?;
    let text = format::certificate_text(&cert);
    write(&config.out, "certificate.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn criterion(engine: &ExactEngine, config: &RunConfig, source: &Source) -> Result<()> {
    let (chain, _) = source.chain(engine, config.window, None, config.tol)?;
    let report = criterion_report(&chain, config.k.as_deref(), chain.top())?;
    let text = format::criterion_text(&report);
    write(&config.out, "criterion.txt", &text)?;
    print!("{text}");
    Ok(())
}

fn bd(config: &RunConfig, source: &Source) -> Result<()> {
    let spec = source
        .spec()
        .ok_or_else(|| Error::Validation("bd needs a logistic chain".into()))??;
    let (b, d, _) = source.logistic.expect("logistic parameters are present");
    let x_max = match config.window {
        Some(Window::Fixed(n)) => n - 1,
        _ => 40,
    };
    let report = bd_report(
        &spec,
        config.lambda.unwrap_or(b + d),
        x_max,
        50,
        config.z,
        x_max,
    )?;
    let text = format::bd_report_text(&report);
    write(&config.out, "bd_report.txt", &text)?;
    write(&config.out, "bd_alpha.csv", &format::bd_alpha_csv(&report))?;
    write(
        &config.out,
        "bd_hitting.csv",
        &format::bd_hitting_csv(&report),
    )?;
    print!("{text}");
    Ok(())
}

fn decay(engine: &ExactEngine, config: &RunConfig, source: &Source) -> Result<()> {
    let (chain, _) = source.chain(engine, config.window, Some(CERTIFY_WINDOW), config.tol)?;
    let cert = build_certificate(engine, config, source, &chain)?;
    let n = chain.n_states();
    let (x, y) = config.pair.unwrap_or((1, 40.min(chain.top())));
    let mu = StateDistribution::dirac(n, x)?;
    let nu = StateDistribution::dirac(n, y)?;
    let rho = engine.compute_qsd(&chain, config.tol)?.qsd;
    let t_max = config.t_max.unwrap_or(12.0);
    let mut rows = Vec::new();
    for step in 0..=t_max.floor() as usize {
        let t = step as f64;
        let a = engine.conditional_distribution(&chain, &mu, t)?;
        let b = engine.conditional_distribution(&chain, &nu, t)?;
        rows.push(DecayRow {
            t,
            tv_mu: tv_distance(&a, &rho)?,
            tv_nu: tv_distance(&b, &rho)?,
            tv_pair: tv_distance(&a, &b)?,
            certified_bound: cert.bound(t),
        });
    }
    write(&config.out, "decay.csv", &format::decay_csv(&rows))?;
    write(
        &config.out,
        "certificate.txt",
        &format::certificate_text(&cert),
    )?;
    println!("gamma = {}", format::float(cert.gamma));
    Ok(())
}

fn simulate(engine: &ExactEngine, config: &RunConfig, source: &Source) -> Result<()> {
    let (chain, _) = source.chain(engine, config.window, None, config.tol)?;
    let mu = StateDistribution::dirac(chain.n_states(), config.start)?;
    let horizon = config.horizon.unwrap_or(10.0);
    let batch = simulate_batch(
        &chain,
        &mu,
        horizon,
        config.paths,
        config.seed,
        config.k.as_deref(),
    )?;
    write(&config.out, "batch.csv", &format::batch_csv(&batch))?;
    match conditional_estimate(&batch) {
        Ok((_, fraction)) => println!("survival_fraction = {}", format::float(fraction)),
        Err(Error::NoSurvivors) => println!("survival_fraction = 0"),
        Err(e) => return Err(e),
    }
    Ok(())
}

fn fv(engine: &ExactEngine, config: &RunConfig, source: &Source) -> Result<()> {
    let (chain, _) = source.chain(engine, config.window, None, config.tol)?;
    let mu = StateDistribution::dirac(chain.n_states(), config.start)?;
    let horizon = config.horizon.unwrap_or(20.0);
    let times: Vec<f64> = match config.grid {
        Some(grid) => grid.points(horizon),
        None => {
            let mut t: Vec<f64> = (0..=horizon.floor() as usize).map(|s| s as f64).collect();
            if horizon.fract() > 0.0 {
                t.push(horizon);
            }
            t
        }
    };
    let snaps = fleming_viot(&chain, &mu, config.particles, horizon, config.seed, &times)?;
    write(
        &config.out,
        "fv.csv",
        &format::fv_csv(&snaps, chain.n_states()),
    )?;
    if let Some(last) = snaps.last() {
        println!("redraws = {}", last.redraw_count);
    }
    Ok(())
}

pub fn run(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(&config.out)?;
    let engine = ExactEngine::default();
    let source = Source::load(config)?;
    match config.command {
        CommandKind::Qsd => qsd(&engine, config, &source),
        CommandKind::Certify => certify_command(&engine, config, &source),
        CommandKind::Criterion => criterion(&engine, config, &source),
        CommandKind::Bd => bd(config, &source),
        CommandKind::Decay => decay(&engine, config, &source),
        CommandKind::Simulate => simulate(&engine, config, &source),
        CommandKind::Fv => fv(&engine, config, &source),
    }
}
