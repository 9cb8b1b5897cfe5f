//! `key = value` config files, spliced into the argument list so that flags
//! given on the command line win.

use std::path::Path;

/// Parse a config file body into `--key value` pairs. Blank lines and lines
/// starting with `#` are skipped; a bare key is a switch.
pub fn parse(body: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (i, raw) in body.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (line, None),
        };
        let key = key.trim_start_matches("--");
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(format!("line {}: bad key in {raw:?}", i + 1));
        }
        // these act before the file is read
        if matches!(key, "config" | "threads") {
            return Err(format!("line {}: {key} cannot be set from a config file", i + 1));
        }
        out.push(format!("--{key}"));
        if let Some(v) = value {
            out.push(v.to_string());
        }
    }
    Ok(out)
}

/// Remove `--config PATH` (or `--config=PATH`) from `args` and insert the
/// file's options right after the subcommand name.
pub fn splice(args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or("--config needs a path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let body = std::fs::read_to_string(Path::new(&path)).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let extra = parse(&body).map_err(|e| format!("{path}: {e}"))?;
    let at = rest
        .iter()
        .position(|a| subcommands.contains(&a.as_str()))
        .map(|i| i + 1)
        .ok_or("--config needs a subcommand")?;
    rest.splice(at..at, extra);
    Ok(rest)
}
