//! `--config FILE` support.
//!
//! The file holds `key=value` lines naming long flags of the chosen
//! subcommand. Lines may carry a leading `# `, so the provenance header of
//! any output file doubles as a config for rerunning it; lines that are not
//! of that shape are ignored. Entries are spliced in right after the
//! subcommand and the command line follows, so explicit flags win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Keys that appear in provenance headers but are not flags.
const INFORMATIONAL: &[&str] = &["command", "version"];

pub fn parse_config(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|line| {
            let line = line.trim();
            let line = line.strip_prefix('#').map_or(line, str::trim_start);
            let (key, value) = line.split_once('=')?;
            let key = key.trim();
            let ok = !key.is_empty()
                && key
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
            (ok && !INFORMATIONAL.contains(&key))
                .then(|| (key.to_string(), value.trim().to_string()))
        })
        .collect()
}

fn flags_for(entries: &[(String, String)]) -> Vec<OsString> {
    let mut out = Vec::new();
    for (key, value) in entries {
        match value.as_str() {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    out
}

/// Removes `--config` from `argv` and splices the file's entries in after
/// the subcommand name.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let Some(path) = it.next() else {
                bail!("--config needs a file path");
            };
            config = Some(path);
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(path.into());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config {}", path.to_string_lossy()))?;
    let extra = flags_for(&parse_config(&text));
    // the subcommand is the first argument after the program name that is not a flag
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |i| i + 2);
    let mut out: Vec<OsString> = rest[..at].to_vec();
    out.extend(extra);
    out.extend_from_slice(&rest[at..]);
    Ok(out)
}
