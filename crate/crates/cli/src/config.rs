//! `--config` files: `key = value` lines whose keys are long flag names of
//! the chosen subcommand (`n_ref` and `n-ref` both work). Values fill in
//! flags that were not given on the command line.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::Command;

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('[') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected `key = value`", path.display(), n + 1))?;
        let v = v.trim().trim_matches('"').to_string();
        out.push((k.trim().replace('_', "-"), v));
    }
    Ok(out)
}

/// Scans raw arguments for `--config` and the subcommand name.
fn locate(args: &[OsString]) -> (Option<String>, Option<String>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(|s| s.to_string_lossy().into_owned());
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else if a == "--jobs" {
            i += 2;
            continue;
        } else if !a.starts_with('-') && sub.is_none() {
            sub = Some(a.into_owned());
        }
        i += 1;
    }
    (config, sub)
}

/// Appends config values as explicit flags for every key the command line
/// leaves unset.
pub fn merge(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let (Some(config), Some(sub)) = locate(&args) else {
        return Ok(args);
    };
    let Some(sub_cmd) = cmd.find_subcommand(&sub) else {
        return Ok(args);
    };
    let pairs = read_pairs(Path::new(&config))?;
    let given = |long: &str| {
        args.iter().any(|a| {
            let a = a.to_string_lossy();
            a == format!("--{long}") || a.starts_with(&format!("--{long}="))
        })
    };
    let mut out = args.clone();
    for (key, value) in pairs {
        let arg = sub_cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| format!("config key `{key}` is not a flag of `{sub}`"))?;
        if given(&key) {
            continue;
        }
        if arg.get_action().takes_values() {
            out.push(format!("--{key}").into());
            out.push(value.into());
        } else {
            match value.as_str() {
                "true" => out.push(format!("--{key}").into()),
                "false" => {}
                other => return Err(format!("config key `{key}` expects true or false, got `{other}`")),
            }
        }
    }
    Ok(out)
}
