//! Flat config files merged under command-line flags.
//!
//! A config file is either a JSON object of scalars or `key = value` lines
//! (`#` starts a comment). Keys are long flag names; `_` and `-` are
//! interchangeable. Flags given on the command line win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let trimmed = text.trim_start();
    let pairs = if trimmed.starts_with('{') {
        let v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        v.into_iter()
            .map(|(k, v)| {
                let s = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Number(n) => n.to_string(),
                    serde_json::Value::Bool(b) => b.to_string(),
                    other => bail!("config key {k:?} must be a scalar, got {other}"),
                };
                Ok((k, s))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key = value", i + 1);
            };
            out.push((k.trim().to_string(), v.trim().trim_matches('"').to_string()));
        }
        out
    };
    Ok(pairs.into_iter().map(|(k, v)| (k.replace('_', "-"), v)).collect())
}

/// Pulls `--config <path>` out of `args` and appends every file entry whose
/// flag is not already present.
pub fn merge_config_file(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().to_string();
        if s == "--config" {
            path = Some(it.next().context("--config needs a path")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            out.push(a);
        }
    }
    let Some(path) = path else { return Ok(out) };
    let present: Vec<String> = out
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    for (k, v) in load(Path::new(&path))? {
        if !present.contains(&k) {
            out.push(OsString::from(format!("--{k}={v}")));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_forms() {
        let kv = parse("# comment\ntarget = normal:4,2\nkmax=10\n").unwrap();
        assert_eq!(kv, vec![("target".into(), "normal:4,2".into()), ("kmax".into(), "10".into())]);
        let js = parse(r#"{"test_period": 50, "target": "uniform:-2,2"}"#).unwrap();
        assert!(js.contains(&("test-period".into(), "50".into())));
        assert!(parse("novalue\n").is_err());
        assert!(parse(r#"{"a": [1]}"#).is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.conf");
        std::fs::write(&p, "kmax = 5\nepochs = 3\n").unwrap();
        let args: Vec<OsString> =
            ["isl", "train1d", "--config", p.to_str().unwrap(), "--epochs", "9"].iter().map(OsString::from).collect();
        let merged: Vec<String> =
            merge_config_file(args).unwrap().into_iter().map(|a| a.into_string().unwrap()).collect();
        assert_eq!(merged, vec!["isl", "train1d", "--epochs", "9", "--kmax=5"]);
    }
}
