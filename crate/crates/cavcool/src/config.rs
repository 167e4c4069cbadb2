//! Flat `key = value` parameter files.
//!
//! Recognised keys: `omega, g, delta_cap, delta, kappa, gamma_cap, nu, eta,
//! g_eff, delta_eff`. Lines starting with `#` (or trailing `# ...`) are
//! comments. Either the raw set (with delta_cap) or the effective set may be
//! supplied; mixing raw keys with `g_eff`/`delta_eff` is a config error
//! because the same derived quantity would be specified twice.

use crate::error::{Error, Result};
use crate::params::{derive_effective, EffectiveParams, RawParams};
use std::collections::BTreeMap;

pub const KEYS: [&str; 10] =
    ["omega", "g", "delta_cap", "delta", "kappa", "gamma_cap", "nu", "eta", "g_eff", "delta_eff"];

const RAW_ONLY: [&str; 4] = ["omega", "g", "delta_cap", "delta"];
const EFF_ONLY: [&str; 2] = ["g_eff", "delta_eff"];

/// Parsed key/value pairs, insertion-order independent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamMap {
    values: BTreeMap<String, f64>,
}

/// Which parameter set a resolved configuration describes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamSet {
    Raw(RawParams),
    Effective(EffectiveParams),
}

impl ParamSet {
    /// The effective parameters, deriving them when the raw set was given.
    pub fn effective(&self) -> Result<EffectiveParams> {
        match self {
            ParamSet::Raw(raw) => derive_effective(raw),
            ParamSet::Effective(p) => Ok(*p),
        }
    }

    pub fn raw(&self) -> Option<RawParams> {
        match self {
            ParamSet::Raw(raw) => Some(*raw),
            ParamSet::Effective(_) => None,
        }
    }
}

impl ParamMap {
    pub fn parse(text: &str) -> Result<ParamMap> {
        let mut values = BTreeMap::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.split_once('#') {
                Some((before, _)) => before,
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{raw_line}`", lineno + 1))
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
            }
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Config(format!("line {}: `{}` is not a number", lineno + 1, value.trim()))
            })?;
            if values.insert(key.to_string(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(ParamMap { values })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    /// Insert or overwrite (used for flag overrides: command line wins).
    pub fn set(&mut self, key: &str, value: f64) {
        self.values.insert(key.to_string(), value);
    }

    /// Overlay `other` on top of `self` (other wins on conflicts).
    pub fn overlaid(&self, other: &ParamMap) -> ParamMap {
        let mut values = self.values.clone();
        for (k, v) in &other.values {
            values.insert(k.clone(), *v);
        }
        ParamMap { values }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Resolve into either a raw or an effective parameter set.
    ///
    /// Defaults: kappa = 1 (the unit of rate), gamma_cap = 0.
    pub fn resolve(&self) -> Result<ParamSet> {
        let has_raw = RAW_ONLY.iter().any(|k| self.values.contains_key(*k));
        let has_eff = EFF_ONLY.iter().any(|k| self.values.contains_key(*k));
        if has_raw && has_eff {
            let raw: Vec<_> =
                RAW_ONLY.iter().filter(|k| self.values.contains_key(**k)).collect();
            let eff: Vec<_> =
                EFF_ONLY.iter().filter(|k| self.values.contains_key(**k)).collect();
            return Err(Error::Config(format!(
                "raw keys {raw:?} conflict with effective keys {eff:?}: the derived quantities would be specified twice"
            )));
        }
        let kappa = self.get("kappa").unwrap_or(1.0);
        let gamma_cap = self.get("gamma_cap").unwrap_or(0.0);
        let need = |key: &str| -> Result<f64> {
            self.get(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        };
        if has_raw {
            let raw = RawParams {
                omega: need("omega")?,
                g: need("g")?,
                delta_cap: need("delta_cap")?,
                delta: need("delta")?,
                kappa,
                gamma_cap,
                nu: need("nu")?,
                eta: need("eta")?,
            };
            raw.validate()?;
            Ok(ParamSet::Raw(raw))
        } else {
            let eff = EffectiveParams {
                g_eff: need("g_eff")?,
                delta_eff: need("delta_eff")?,
                kappa,
                nu: need("nu")?,
                eta: need("eta")?,
                gamma_cap,
            };
            eff.validate()?;
            Ok(ParamSet::Effective(eff))
        }
    }
}
