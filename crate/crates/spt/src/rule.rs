//! Declarative strategy rules such as `ewp`, `dwp:p=-0.5`,
//! `map:artifact=out/cap.json`, `dwp-grid` or `gp:features=cap+roa`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Ewp,
    Market,
    Dwp { p: f64 },
    Map { artifact: PathBuf },
    /// Learned by grid search over the DWP exponent.
    DwpGrid,
    /// Learned by Metropolis-Hastings over the DWP exponent.
    DwpMh,
    /// Learned GP investment map over the named features.
    Gp { features: Vec<String> },
}

impl Rule {
    pub fn needs_training(&self) -> bool {
        matches!(self, Rule::DwpGrid | Rule::DwpMh | Rule::Gp { .. })
    }
}

fn options(body: &str) -> Result<Vec<(&str, &str)>, Error> {
    body.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::usage(format!("expected key=value, found `{kv}`")))
        })
        .collect()
}

fn single<'a>(opts: &[(&'a str, &'a str)], key: &str, rule: &str) -> Result<&'a str, Error> {
    match opts {
        [(k, v)] if *k == key => Ok(v),
        _ => Err(Error::usage(format!("`{rule}` takes exactly one option `{key}=…`"))),
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let (head, body) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let opts = options(body)?;
        let plain = |r: Rule| {
            if opts.is_empty() {
                Ok(r)
            } else {
                Err(Error::usage(format!("`{head}` takes no options")))
            }
        };
        match head {
            "ewp" => plain(Rule::Ewp),
            "market" => plain(Rule::Market),
            "dwp-grid" => plain(Rule::DwpGrid),
            "dwp-mh" => plain(Rule::DwpMh),
            "dwp" => {
                let v = single(&opts, "p", head)?;
                let p = v
                    .parse::<f64>()
                    .ok()
                    .filter(|p| p.is_finite())
                    .ok_or_else(|| Error::usage(format!("bad exponent `{v}`")))?;
                Ok(Rule::Dwp { p })
            }
            "map" => Ok(Rule::Map {
                artifact: PathBuf::from(single(&opts, "artifact", head)?),
            }),
            "gp" => {
                let v = single(&opts, "features", head)?;
                let features: Vec<String> = v.split('+').map(|f| f.trim().to_string()).collect();
                if features.iter().any(String::is_empty) {
                    return Err(Error::usage(format!("bad feature list `{v}`")));
                }
                Ok(Rule::Gp { features })
            }
            _ => Err(Error::usage(format!(
                "unknown strategy `{head}`; expected ewp, market, dwp:p=…, map:artifact=…, dwp-grid, dwp-mh or gp:features=…"
            ))),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Ewp => write!(f, "ewp"),
            Rule::Market => write!(f, "market"),
            Rule::Dwp { p } => write!(f, "dwp:p={p}"),
            Rule::Map { artifact } => write!(f, "map:artifact={}", artifact.display()),
            Rule::DwpGrid => write!(f, "dwp-grid"),
            Rule::DwpMh => write!(f, "dwp-mh"),
            Rule::Gp { features } => write!(f, "gp:features={}", features.join("+")),
        }
    }
}
