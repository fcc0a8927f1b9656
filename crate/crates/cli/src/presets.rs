//! Model-size presets for the `estimate` subcommand: plain `name = count`
//! text, nominal public figures.

use anyhow::{bail, Context, Result};

const BUILTIN: &str = include_str!("../../../presets/models.txt");

pub fn parse_presets(text: &str) -> Result<Vec<(String, u64)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, count)) = line.split_once('=') else {
            bail!("preset line {} lacks `=`: {line}", lineno + 1);
        };
        let count: u64 = count
            .trim()
            .replace('_', "")
            .parse()
            .with_context(|| format!("preset line {}: bad count", lineno + 1))?;
        out.push((name.trim().to_string(), count));
    }
    Ok(out)
}

/// Presets shipped with the binary.
pub fn builtin_presets() -> Vec<(String, u64)> {
    parse_presets(BUILTIN).expect("builtin preset file is well-formed")
}

pub fn lookup(presets: &[(String, u64)], name: &str) -> Option<u64> {
    presets.iter().find(|(n, _)| n == name).map(|&(_, c)| c)
}
