use std::sync::OnceLock;

use serde::Deserialize;

use super::{FilterSpec, FILTER_NAMES, ORIGINAL};
use crate::error::{Error, Result};

/// The shipped registry file.
pub const REGISTRY_SOURCE: &str = include_str!("../../data/filters.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Registry {
    pub version: u32,
    pub filters: Vec<FilterSpec>,
}

impl Registry {
    pub fn parse(source: &str) -> Result<Registry> {
        let reg: Registry =
            toml::from_str(source).map_err(|e| Error::Config(format!("filter registry: {e}")))?;
        reg.validate()?;
        Ok(reg)
    }

    fn validate(&self) -> Result<()> {
        let mut names: Vec<&str> = self.filters.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        let mut expected = FILTER_NAMES.to_vec();
        expected.sort_unstable();
        if names != expected {
            return Err(Error::Config(format!(
                "filter registry must define exactly {expected:?}, found {names:?}"
            )));
        }
        self.filters.iter().try_for_each(FilterSpec::validate)
    }

    pub fn get(&self, name: &str) -> Result<FilterSpec> {
        if name == ORIGINAL {
            return Ok(FilterSpec::original());
        }
        self.filters
            .iter()
            .find(|f| f.name == name)
            .cloned()
            .ok_or_else(|| Error::UnknownFilter {
                name: name.to_string(),
                valid: filter_names(),
            })
    }
}

/// The parsed, validated built-in registry.
pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(|| Registry::parse(REGISTRY_SOURCE).expect("shipped registry is valid"))
}

/// Looks up one of the sixteen filters (or `original`, which is empty).
pub fn builtin_filter(name: &str) -> Result<FilterSpec> {
    registry().get(name)
}

/// The sixteen filter names followed by `original`.
pub fn filter_names() -> Vec<String> {
    FILTER_NAMES
        .iter()
        .copied()
        .chain([ORIGINAL])
        .map(String::from)
        .collect()
}
