//! `--config` files: TOML whose keys are long flag names.
//!
//! Top-level keys apply to every subcommand that accepts them; a
//! `[subcommand]` table applies to that subcommand only and wins over the
//! top level. File values are spliced in ahead of the real flags, so a flag
//! given on the command line always wins.

use std::path::Path;

use clap::Command;

use crate::CliError;

fn render(key: &str, v: &toml::Value) -> Result<String, CliError> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(|i| render(key, i))
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        _ => return Err(CliError::Usage(format!("config key {key:?}: unsupported value {v}"))),
    })
}

fn long_names(cmd: &Command) -> Vec<String> {
    cmd.get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect()
}

/// Flags for `subcommand` drawn from the file at `path`, as `--key value` pairs.
pub fn file_args(path: &Path, root: &Command, subcommand: &str) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let sub = root
        .find_subcommand(subcommand)
        .ok_or_else(|| CliError::Usage(format!("unknown subcommand {subcommand}")))?;
    let known = long_names(sub);
    let all_known: Vec<String> = root.get_subcommands().flat_map(long_names).collect();
    let subcommands: Vec<&str> = root.get_subcommands().map(|c| c.get_name()).collect();

    let mut merged = toml::Table::new();
    for (k, v) in &table {
        if subcommands.contains(&k.as_str()) {
            if !v.is_table() {
                return Err(CliError::Usage(format!("config [{k}] must be a table")));
            }
            continue;
        }
        if !all_known.contains(k) {
            return Err(CliError::Usage(format!("config {}: unknown key {k:?}", path.display())));
        }
        if known.contains(k) {
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Some(toml::Value::Table(section)) = table.get(subcommand) {
        for (k, v) in section {
            if !known.contains(k) {
                return Err(CliError::Usage(format!(
                    "config {}: [{subcommand}] has unknown key {k:?}",
                    path.display()
                )));
            }
            merged.insert(k.clone(), v.clone());
        }
    }
    let mut out = Vec::new();
    for (k, v) in &merged {
        out.push(format!("--{k}"));
        out.push(render(k, v)?);
    }
    Ok(out)
}
