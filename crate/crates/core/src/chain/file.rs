//! Line-oriented chain definition files.
//!
//! ```text
//! # comment lines start with '#'; blank lines are ignored
//! states 5            # window size, counting the absorbing state 0
//! boundary reflect    # or: kill (optional, default reflect)
//! rate 1 0 1.0        # rate FROM TO VALUE, repeatable, duplicates summed
//! rate 1 2 0.5
//! ```
//!
//! Instead of `rate` lines a file may hold a single `logistic B D C`
//! directive; `states` is then optional and may be supplied by the caller.
//! Trailing `# ...` comments are allowed on any line.

use std::path::Path;
use std::str::FromStr;

use super::{AbsorbedChain, BirthDeathSpec, BoundaryMode, LogisticParams, RateFamily};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ChainDefinition {
    Rates(Vec<(usize, usize, f64)>),
    Logistic(LogisticParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub n_states: Option<usize>,
    pub boundary: BoundaryMode,
    pub definition: ChainDefinition,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: FromStr>(line: usize, what: &str, token: Option<&str>) -> Result<T> {
    let token = token.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| parse_err(line, format!("malformed {what} `{token}`")))
}

impl ChainFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut n_states = None;
        let mut boundary = None;
        let mut rates = Vec::new();
        let mut logistic = None;
        let mut first_rate_line = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut tokens = content.split_whitespace();
            let directive = tokens.next().unwrap();
            match directive {
                "states" => {
                    if n_states.is_some() {
                        return Err(parse_err(line, "duplicate `states` directive"));
                    }
                    let n: usize = field(line, "state count", tokens.next())?;
                    if n < 2 {
                        return Err(parse_err(line, "`states` must be at least 2"));
                    }
                    n_states = Some(n);
                }
                "boundary" => {
                    if boundary.is_some() {
                        return Err(parse_err(line, "duplicate `boundary` directive"));
                    }
                    let mode = tokens
                        .next()
                        .ok_or_else(|| parse_err(line, "missing boundary mode"))?;
                    boundary = Some(
                        BoundaryMode::from_str(mode).map_err(|e| parse_err(line, e.to_string()))?,
                    );
                }
                "rate" => {
                    let from: usize = field(line, "source state", tokens.next())?;
                    let to: usize = field(line, "target state", tokens.next())?;
                    let value: f64 = field(line, "rate value", tokens.next())?;
                    first_rate_line.get_or_insert(line);
                    rates.push((line, from, to, value));
                }
                "logistic" => {
                    if logistic.is_some() {
                        return Err(parse_err(line, "duplicate `logistic` directive"));
                    }
                    let b: f64 = field(line, "birth parameter", tokens.next())?;
                    let d: f64 = field(line, "death parameter", tokens.next())?;
                    let c: f64 = field(line, "competition parameter", tokens.next())?;
                    BirthDeathSpec::logistic(b, d, c)
                        .map_err(|e| parse_err(line, e.to_string()))?;
                    logistic = Some((line, LogisticParams { b, d, c }));
                }
                other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
            }
            if let Some(extra) = tokens.next() {
                return Err(parse_err(
                    line,
                    format!("unexpected trailing token `{extra}`"),
                ));
            }
        }

        let boundary = boundary.unwrap_or_default();
        let definition = match (logistic, first_rate_line) {
            (Some((line, _)), Some(_)) => {
                return Err(parse_err(
                    line,
                    "`logistic` cannot be combined with `rate` lines",
                ))
            }
            (Some((_, params)), None) => ChainDefinition::Logistic(params),
            (None, Some(_)) => {
                let n = n_states.ok_or_else(|| {
                    parse_err(
                        first_rate_line.unwrap(),
                        "`rate` lines need a `states` directive",
                    )
                })?;
                for &(line, from, to, value) in &rates {
                    AbsorbedChain::from_entries(&[(from, to, value)], n, boundary)
                        .map_err(|e| parse_err(line, e.to_string()))?;
                }
                ChainDefinition::Rates(rates.into_iter().map(|(_, f, t, v)| (f, t, v)).collect())
            }
            (None, None) => {
                return Err(parse_err(
                    text.lines().count().max(1),
                    "no `rate` or `logistic` directive found",
                ))
            }
        };
        Ok(Self {
            n_states,
            boundary,
            definition,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Materializes the chain. `n_states` overrides the file's window for
    /// logistic definitions; rate tables keep their own window.
    pub fn build(&self, n_states: Option<usize>) -> Result<AbsorbedChain> {
        match &self.definition {
            ChainDefinition::Rates(entries) => {
                let own = self.n_states.expect("validated at parse time");
                if let Some(n) = n_states {
                    if n != own {
                        return Err(Error::Validation(format!(
                            "window is fixed at {own} states by the rate table; cannot use {n}"
                        )));
                    }
                }
                AbsorbedChain::from_entries(entries, own, self.boundary)
            }
            ChainDefinition::Logistic(p) => {
                let n = n_states.or(self.n_states).ok_or_else(|| {
                    Error::Validation("logistic chain needs a window size".to_string())
                })?;
                BirthDeathSpec::logistic(p.b, p.d, p.c)?.materialize(n, self.boundary)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rate_table() {
        let file = ChainFile::parse(
            "# two-state death\nstates 3\nboundary kill\nrate 1 0 1.0\nrate 2 1 2.5 # inline\n\nrate 2 1 0.5\n",
        )
        .unwrap();
        assert_eq!(file.boundary, BoundaryMode::Kill);
        let chain = file.build(None).unwrap();
        assert_eq!(chain.rate(2, 1), 3.0);
        assert_eq!(chain.mode(), BoundaryMode::Kill);
    }

    #[test]
    fn parses_logistic() {
        let file = ChainFile::parse("logistic 1 1 1\n").unwrap();
        assert!(file.build(None).is_err());
        let chain = file.build(Some(5)).unwrap();
        assert_eq!(chain.rate(2, 1), 4.0);
    }

    #[test]
    fn errors_cite_lines() {
        let cases = [
            ("states 3\nrate 1 0 x\n", 2),
            ("states 3\nfrobnicate\n", 2),
            ("states 3\n\nrate 0 1 1.0\n", 3),
            ("rate 1 0 1.0\n", 1),
            ("states 3\nrate 1 0 1 extra\n", 2),
            ("logistic 1 1 0\n", 1),
            ("states 3\nrate 1 0 1\nlogistic 1 1 1\n", 3),
            ("states 3\nboundary sideways\n", 2),
        ];
        for (text, expected) in cases {
            match ChainFile::parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn rate_table_window_is_fixed() {
        let file = ChainFile::parse("states 2\nrate 1 0 1\n").unwrap();
        assert!(file.build(Some(2)).is_ok());
        assert!(file.build(Some(4)).is_err());
    }
}
