//! Argument parsing and validation into a [`RunConfig`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsd_core::certifier::TimeGrid;
use qsd_core::BoundaryMode;

#[derive(Parser, Debug)]
#[command(
    name = "qsd",
    version,
    about = "Quasi-stationary distributions of absorbed Markov chains",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Quasi-stationary distribution; writes qsd.csv.
    Qsd(CommonArgs),
    /// Certify the fast-return hypothesis; writes certificate.txt.
    Certify(CommonArgs),
    /// Rate-matrix criteria; writes criterion.txt.
    Criterion(CommonArgs),
    /// Birth-death analytics; writes bd_report.txt, bd_alpha.csv, bd_hitting.csv.
    Bd(CommonArgs),
    /// Measured decay against the certified bound; writes decay.csv.
    Decay(CommonArgs),
    /// Exact-jump simulation; writes batch.csv.
    Simulate(CommonArgs),
    /// Fleming-Viot particle system; writes fv.csv.
    Fv(CommonArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BoundaryArg {
    Reflect,
    Kill,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["chain", "logistic"]))]
struct CommonArgs {
    /// Chain definition file.
    #[arg(long, value_name = "FILE")]
    chain: Option<PathBuf>,
    /// Logistic birth-death chain with rates b x and d x + c x (x - 1).
    #[arg(long, value_name = "B,D,C")]
    logistic: Option<String>,
    /// Window size counting state 0, or `auto`.
    #[arg(long, value_name = "N|auto")]
    states: Option<String>,
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
    #[arg(long, value_name = "X", default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, value_name = "T")]
    tmax: Option<f64>,
    #[arg(long, value_name = "geometric:RATIO:COUNT")]
    grid: Option<String>,
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// State set K, as `1..k` or a comma list.
    #[arg(long = "K", value_name = "SET")]
    k: Option<String>,
    #[arg(long, value_name = "X")]
    x0: Option<usize>,
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    paths: usize,
    #[arg(long, value_name = "N", default_value_t = 1_000)]
    particles: usize,
    #[arg(long, value_name = "T")]
    horizon: Option<f64>,
    /// Initial state for simulate and fv.
    #[arg(long, value_name = "X", default_value_t = 1)]
    start: usize,
    /// Hitting target for bd.
    #[arg(long, value_name = "Z")]
    z: Option<usize>,
    /// Exponential-moment rate for bd; defaults to b + d.
    #[arg(long, value_name = "L")]
    lambda: Option<f64>,
    /// Initial states of the two laws compared by decay.
    #[arg(long, value_name = "X,Y")]
    pair: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Qsd,
    Certify,
    Criterion,
    Bd,
    Decay,
    Simulate,
    Fv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChainSource {
    File(PathBuf),
    Logistic { b: f64, d: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: CommandKind,
    pub source: ChainSource,
    pub window: Option<Window>,
    pub boundary: Option<BoundaryMode>,
    pub tol: f64,
    pub t_max: Option<f64>,
    pub grid: Option<TimeGrid>,
    pub seed: u64,
    pub out: PathBuf,
    pub k: Option<Vec<usize>>,
    pub x0: Option<usize>,
    pub threads: Option<usize>,
    pub paths: usize,
    pub particles: usize,
    pub horizon: Option<f64>,
    pub start: usize,
    pub z: Option<usize>,
    pub lambda: Option<f64>,
    pub pair: Option<(usize, usize)>,
}

/// Why parsing stopped: a real usage error, or a help/version request that
/// was already answered.
#[derive(Debug)]
pub enum ParseOutcome {
    Usage(String),
    Informational(String),
}

fn usage(flag: &str, message: impl std::fmt::Display) -> ParseOutcome {
    ParseOutcome::Usage(format!("error: invalid value for --{flag}: {message}"))
}

fn positive(flag: &str, v: f64) -> Result<f64, ParseOutcome> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(flag, format!("must be positive and finite, got {v}")))
    }
}

fn parse_logistic(text: &str) -> Result<ChainSource, ParseOutcome> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [b, d, c] = parts.as_slice() else {
        return Err(usage("logistic", format!("expected B,D,C, got `{text}`")));
    };
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| usage("logistic", format!("`{s}` is not a number")))
    };
    Ok(ChainSource::Logistic {
        b: num(b)?,
        d: num(d)?,
        c: num(c)?,
    })
}

fn parse_window(text: &str) -> Result<Window, ParseOutcome> {
    if text == "auto" {
        return Ok(Window::Auto);
    }
    match text.parse::<usize>() {
        Ok(n) if n >= 2 => Ok(Window::Fixed(n)),
        _ => Err(usage(
            "states",
            format!("expected an integer >= 2 or `auto`, got `{text}`"),
        )),
    }
}

fn parse_grid(text: &str) -> Result<TimeGrid, ParseOutcome> {
    let bad = || {
        usage(
            "grid",
            format!("expected geometric:RATIO:COUNT, got `{text}`"),
        )
    };
    let mut parts = text.split(':');
    if parts.next() != Some("geometric") {
        return Err(bad());
    }
    let ratio: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    let count: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    TimeGrid::new(ratio, count).map_err(|e| usage("grid", e))
}

fn parse_set(text: &str) -> Result<Vec<usize>, ParseOutcome> {
    let bad = || {
        usage(
            "K",
            format!("expected `1..k` or a comma list of states >= 1, got `{text}`"),
        )
    };
    let states: Vec<usize> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if states.is_empty() || states.contains(&0) {
        return Err(bad());
    }
    Ok(states)
}

fn parse_pair(text: &str) -> Result<(usize, usize), ParseOutcome> {
    let bad = || {
        usage(
            "pair",
            format!("expected X,Y with states >= 1, got `{text}`"),
        )
    };
    let (x, y) = text.split_once(',').ok_or_else(bad)?;
    let x: usize = x.trim().parse().map_err(|_| bad())?;
    let y: usize = y.trim().parse().map_err(|_| bad())?;
    if x == 0 || y == 0 {
        return Err(bad());
    }
    Ok((x, y))
}

/// Parses `argv` (including the program name) into a validated config.
pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, ParseOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        let text = e.render().to_string();
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ParseOutcome::Informational(text),
            _ => ParseOutcome::Usage(text),
        }
    })?;
    let (command, args) = match cli.command {
        Command::Qsd(a) => (CommandKind::Qsd, a),
        Command::Certify(a) => (CommandKind::Certify, a),
        Command::Criterion(a) => (CommandKind::Criterion, a),
        Command::Bd(a) => (CommandKind::Bd, a),
        Command::Decay(a) => (CommandKind::Decay, a),
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Fv(a) => (CommandKind::Fv, a),
    };
    let source = match (args.chain, args.logistic) {
        (Some(path), None) => ChainSource::File(path),
        (None, Some(text)) => parse_logistic(&text)?,
        _ => {
            return Err(ParseOutcome::Usage(
                "error: give exactly one of --chain and --logistic".into(),
            ))
        }
    };
    if args.threads == Some(0) {
        return Err(usage("threads", "must be at least 1"));
    }
    if args.paths == 0 {
        return Err(usage("paths", "must be at least 1"));
    }
    if args.particles < 2 {
        return Err(usage("particles", "must be at least 2"));
    }
    if args.start == 0 {
        return Err(usage("start", "state 0 is absorbing"));
    }
    if args.x0 == Some(0) {
        return Err(usage("x0", "state 0 is absorbing"));
    }
    if args.z == Some(0) {
        return Err(usage("z", "must be at least 1"));
    }
    if let Some(h) = args.horizon {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(usage(
                "horizon",
                format!("must be finite and >= 0, got {h}"),
            ));
        }
    }
    Ok(RunConfig {
        command,
        source,
        window: args.states.as_deref().map(parse_window).transpose()?,
        boundary: args.boundary.map(|b| match b {
            BoundaryArg::Reflect => BoundaryMode::Reflect,
            BoundaryArg::Kill => BoundaryMode::Kill,
        }),
        tol: positive("tol", args.tol)?,
        t_max: args.tmax.map(|t| positive("tmax", t)).transpose()?,
        grid: args.grid.as_deref().map(parse_grid).transpose()?,
        seed: args.seed,
        out: args.out,
        k: args.k.as_deref().map(parse_set).transpose()?,
        x0: args.x0,
        threads: args.threads,
        paths: args.paths,
        particles: args.particles,
        horizon: args.horizon,
        start: args.start,
        z: args.z,
        lambda: args.lambda.map(|l| positive("lambda", l)).transpose()?,
        pair: args.pair.as_deref().map(parse_pair).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, ParseOutcome> {
        parse_args(std::iter::once("qsd").chain(args.iter().copied()))
    }

    #[test]
    fn logistic_auto_window() {
        let c = parse(&["qsd", "--logistic", "1,1,1", "--states", "auto"]).unwrap();
        assert_eq!(c.command, CommandKind::Qsd);
        assert_eq!(
            c.source,
            ChainSource::Logistic {
                b: 1.0,
                d: 1.0,
                c: 1.0
            }
        );
        assert_eq!(c.window, Some(Window::Auto));
    }

    #[test]
    fn both_sources_is_usage_error() {
        let r = parse(&["certify", "--chain", "x.txt", "--logistic", "1,1,1"]);
        assert!(matches!(r, Err(ParseOutcome::Usage(_))));
        assert!(matches!(parse(&["certify"]), Err(ParseOutcome::Usage(_))));
    }

    #[test]
    fn empty_argv_is_usage_error() {
        assert!(matches!(parse(&[]), Err(ParseOutcome::Usage(_))));
        assert!(matches!(
            parse(&["--help"]),
            Err(ParseOutcome::Informational(_))
        ));
    }

    #[test]
    fn malformed_values_name_their_flag() {
        let cases: [&[&str]; 7] = [
            &["qsd", "--logistic", "1,1"],
            &["qsd", "--logistic", "1,1,1", "--states", "1"],
            &["qsd", "--logistic", "1,1,1", "--grid", "linear:2:3"],
            &["qsd", "--logistic", "1,1,1", "--grid", "geometric:0.5:3"],
            &["qsd", "--logistic", "1,1,1", "--K", "3..1"],
            &["qsd", "--logistic", "1,1,1", "--tol=-1"],
            &["qsd", "--logistic", "1,1,1", "--pair", "1"],
        ];
        let flags = ["logistic", "states", "grid", "grid", "K", "tol", "pair"];
        for (args, flag) in cases.iter().zip(flags) {
            match parse(args) {
                Err(ParseOutcome::Usage(m)) => assert!(m.contains(&format!("--{flag}")), "{m}"),
                other => panic!("{args:?}: {other:?}"),
            }
        }
        assert!(matches!(
            parse(&["qsd", "--logistic", "1,1,1", "--bogus"]),
            Err(ParseOutcome::Usage(_))
        ));
    }

    #[test]
    fn sets_and_grids() {
        let c = parse(&[
            "certify",
            "--logistic",
            "1,1,1",
            "--K",
            "1..3",
            "--grid",
            "geometric:2:5",
        ])
        .unwrap();
        assert_eq!(c.k, Some(vec![1, 2, 3]));
        assert_eq!(c.grid, Some(TimeGrid::new(2.0, 5).unwrap()));
        let c = parse(&["certify", "--logistic", "1,1,1", "--K", "2,4"]).unwrap();
        assert_eq!(c.k, Some(vec![2, 4]));
    }
}
