//! Environment specification files (JSON or TOML).
//!
//! ```toml
//! family = "mxt"
//! K = 1
//! B = 2.0
//! sign = "minus"
//! ```
//!
//! Families and their keys:
//! - `explicit`: `params` (list of `[a, b, d, theta]`), `tail`
//! - `homogeneous`: `limit` (or a single-entry `params`)
//! - `egc`: `limit`, `r_kind` (`inv3k`, `inv_k_squared`, `lambda` with `K`, `B`)
//! - `mxt`: `K`, `B`, `sign` (`plus` or `minus`)

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, EnvSequence, PerturbationSeq, Sign};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Explicit,
    Homogeneous,
    Egc,
    Mxt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RKind {
    Inv3k,
    InvKSquared,
    Lambda,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<[f64; 4]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<[f64; 4]>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_kind: Option<RKind>,
}

fn need<T>(v: Option<T>, key: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("family `{family}` requires key `{key}`")))
}

impl EnvSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses by extension: `.toml` as TOML, anything else as JSON.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(text),
            _ => Self::from_json(text),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn build(&self) -> Result<EnvSequence> {
        match self.family {
            Family::Explicit => {
                let params = need(self.params.clone(), "params", "explicit")?;
                let tail = need(self.tail, "tail", "explicit")?;
                let params = params.into_iter().map(EnvParams::from_array).collect::<Result<Vec<_>>>()?;
                EnvSequence::explicit(params, EnvParams::from_array(tail)?)
            }
            Family::Homogeneous => {
                let p = match (&self.limit, &self.params) {
                    (Some(l), _) => *l,
                    (None, Some(v)) if v.len() == 1 => v[0],
                    _ => return Err(Error::Config("family `homogeneous` requires key `limit`".into())),
                };
                EnvSequence::homogeneous(EnvParams::from_array(p)?)
            }
            Family::Egc => {
                let limit = EnvParams::from_array(need(self.limit, "limit", "egc")?)?;
                let r = match need(self.r_kind, "r_kind", "egc")? {
                    RKind::Inv3k => PerturbationSeq::inv3k(),
                    RKind::InvKSquared => PerturbationSeq::inv_k_squared(),
                    RKind::Lambda => PerturbationSeq::lambda(need(self.k, "K", "egc")?, need(self.b, "B", "egc")?)?,
                };
                EnvSequence::egc(limit, r)
            }
            Family::Mxt => EnvSequence::mxt(
                need(self.k, "K", "mxt")?,
                need(self.b, "B", "mxt")?,
                need(self.sign, "sign", "mxt")?,
            ),
        }
    }
}
