//! `--config` files: TOML whose keys mirror long flags. Keys at the top
//! level apply to every subcommand, a `[<subcommand>]` table to that one.
//! Flags given on the command line win over the file.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

pub struct Loaded {
    pub argv: Vec<OsString>,
    pub path: Option<PathBuf>,
    pub bytes: Option<Vec<u8>>,
}

/// Finds `--config PATH` / `--config=PATH` in `argv`.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn value_args(flag: &str, v: &toml::Value) -> Result<Vec<String>> {
    Ok(match v {
        toml::Value::Boolean(true) => vec![flag.to_string()],
        toml::Value::Boolean(false) => vec![],
        toml::Value::String(s) => vec![flag.to_string(), s.clone()],
        toml::Value::Integer(i) => vec![flag.to_string(), i.to_string()],
        toml::Value::Float(f) => vec![flag.to_string(), f.to_string()],
        toml::Value::Array(items) => {
            let parts: Result<Vec<String>> = items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(n) => Ok(n.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    other => bail!("config key {flag}: unsupported list item {other}"),
                })
                .collect();
            vec![flag.to_string(), parts?.join(",")]
        }
        other => bail!("config key {flag}: unsupported value {other}"),
    })
}

/// Splices config-file flags in right after the subcommand name, skipping
/// any flag the user already passed.
pub fn apply(argv: Vec<OsString>, subcommands: &[&str]) -> Result<Loaded> {
    let Some(path) = config_path(&argv) else {
        return Ok(Loaded {
            argv,
            path: None,
            bytes: None,
        });
    };
    let bytes = std::fs::read(&path).with_context(|| format!("{}: cannot read config", path.display()))?;
    let text = String::from_utf8(bytes.clone()).with_context(|| format!("{}: config is not UTF-8", path.display()))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| anyhow::anyhow!(fluidlab::Error::InvalidConfig(format!("{}: {e}", path.display()))))?;

    let Some(pos) = argv
        .iter()
        .position(|a| subcommands.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(Loaded {
            argv,
            path: Some(path),
            bytes: Some(bytes),
        });
    };
    let sub = argv[pos].to_string_lossy().into_owned();
    let given: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().split('=').next().unwrap_or_default().to_string())
        .collect();
    let mut injected = Vec::new();
    let mut push = |key: &str, v: &toml::Value| -> Result<()> {
        let flag = format!("--{}", key.replace('_', "-"));
        if !given.contains(&flag) {
            injected.extend(value_args(&flag, v)?);
        }
        Ok(())
    };
    for (k, v) in &table {
        if !v.is_table() {
            push(k, v)?;
        }
    }
    if let Some(toml::Value::Table(section)) = table.get(&sub) {
        for (k, v) in section {
            push(k, v)?;
        }
    }
    let mut out: Vec<OsString> = argv[..=pos].to_vec();
    out.extend(injected.into_iter().map(OsString::from));
    out.extend(argv[pos + 1..].iter().cloned());
    Ok(Loaded {
        argv: out,
        path: Some(path),
        bytes: Some(bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(xs: &[&str]) -> Vec<OsString> {
        xs.iter().map(OsString::from).collect()
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 3\n[sweep]\njobs = 2\nmethods = [\"sl\", \"self\"]\nmax_combos = 9\n").unwrap();
        let argv = args(&["fluidlab", "--config", p.to_str().unwrap(), "sweep", "--max-combos", "4"]);
        let out = apply(argv, &["sweep"]).unwrap();
        let s: Vec<String> = out.argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
        assert!(s.windows(2).any(|w| w == ["--methods", "sl,self"]));
        assert!(s.windows(2).any(|w| w == ["--jobs", "2"]));
        assert!(s.windows(2).any(|w| w == ["--seed", "3"]));
        assert!(!s.contains(&"9".to_string()));
        assert!(s.windows(2).any(|w| w == ["--max-combos", "4"]));
    }

    #[test]
    fn bad_toml_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = = 3").unwrap();
        assert!(apply(args(&["fluidlab", "--config", p.to_str().unwrap(), "sweep"]), &["sweep"]).is_err());
    }
}
