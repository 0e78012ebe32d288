//! Config resolution: defaults, then the scenario preset, then the scheme
//! preset, then the user's file, then `--set` overrides and flags.

use sidelink_core::config::RunConfig;
use sidelink_core::presets::{scenario_preset, scenario_presets, scheme_preset, SCHEME_PRESETS};
use std::fmt;
use std::path::{Path, PathBuf};
use toml::{Table, Value};

/// Manifest section that records where a run came from. Ignored on load.
pub const PROVENANCE: &str = "provenance";

/// One problem with a config, anchored where possible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// `file:line`, `--set`, or `--<flag>`.
    pub origin: Option<String>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.origin {
            Some(o) => write!(f, "{o}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", render(.0))]
pub struct ConfigError(pub Vec<Diagnostic>);

fn render(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

impl ConfigError {
    fn single(origin: Option<String>, key: &str, message: impl Into<String>) -> Self {
        ConfigError(vec![Diagnostic { origin, key: key.to_string(), message: message.into() }])
    }
}

/// Everything a config is resolved from.
#[derive(Debug, Clone, Default)]
pub struct ConfigInput {
    pub file: Option<(PathBuf, String)>,
    /// `section.key=value` overrides, applied in order.
    pub sets: Vec<String>,
    pub scenario: Option<String>,
    pub scheme: Option<String>,
    pub seed: Option<u64>,
}

impl ConfigInput {
    pub fn with_file(mut self, path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single(Some(path.display().to_string()), "<file>", e.to_string()))?;
        self.file = Some((path.to_path_buf(), text));
        Ok(self)
    }
}

/// Where a user-supplied key came from.
#[derive(Debug, Clone)]
enum Source {
    File,
    Set,
    Flag(&'static str),
}

struct Overlay {
    table: Table,
    sources: Vec<(String, Source)>,
    file: Option<(PathBuf, String)>,
}

impl Overlay {
    fn origin(&self, key: &str) -> Option<String> {
        let (_, source) = self.sources.iter().rev().find(|(k, _)| k == key || key.starts_with(&format!("{k}.")))?;
        Some(match source {
            Source::File => {
                let (path, text) = self.file.as_ref()?;
                match find_line(text, key) {
                    Some(line) => format!("{}:{line}", path.display()),
                    None => path.display().to_string(),
                }
            }
            Source::Set => "--set".to_string(),
            Source::Flag(f) => format!("--{f}"),
        })
    }

    fn diag(&self, key: &str, message: impl Into<String>) -> Diagnostic {
        Diagnostic { origin: self.origin(key), key: key.to_string(), message: message.into() }
    }
}

/// Resolves `input` to a validated config.
pub fn resolve(input: &ConfigInput) -> Result<RunConfig, ConfigError> {
    let overlay = build_overlay(input)?;
    let mut errors = check_keys(&overlay);
    if !errors.is_empty() {
        return Err(ConfigError(errors));
    }

    let mut cfg = RunConfig::default();
    let user_scenario = lookup(&overlay.table, "scenario.name").and_then(Value::as_str);
    let name = user_scenario.unwrap_or(&cfg.scenario.name).to_string();
    match scenario_preset(&name) {
        Some(p) => p.apply(&mut cfg),
        None if lookup(&overlay.table, "scenario.vehicle_count").is_some() => {}
        None => {
            let names: Vec<&str> = scenario_presets().iter().map(|p| p.name).collect();
            errors.push(overlay.diag("scenario.name", unknown_name("scenario preset", &name, &names)));
        }
    }
    let scheme = lookup(&overlay.table, "run.scheme").and_then(Value::as_str).unwrap_or(&cfg.run.scheme).to_string();
    match scheme_preset(&scheme) {
        Some(p) => p.apply(&mut cfg),
        None => {
            let names: Vec<&str> = SCHEME_PRESETS.iter().map(|p| p.name).collect();
            errors.push(overlay.diag("run.scheme", unknown_name("scheme", &scheme, &names)));
        }
    }
    if !errors.is_empty() {
        return Err(ConfigError(errors));
    }

    let mut merged = Value::try_from(&cfg).expect("config serializes");
    merge(&mut merged, &overlay.table);
    let cfg: RunConfig = merged.try_into().map_err(|e: toml::de::Error| {
        ConfigError::single(overlay.file.as_ref().map(|f| f.0.display().to_string()), "<config>", e.message())
    })?;
    let violations: Vec<Diagnostic> = cfg.violations().iter().map(|v| overlay.diag(&v.key, &v.message)).collect();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError(violations))
    }
}

fn unknown_name(what: &str, name: &str, names: &[&str]) -> String {
    match nearest(name, names.iter().copied()) {
        Some(s) => format!("unknown {what} `{name}` (did you mean `{s}`?)"),
        None => format!("unknown {what} `{name}`; known: {}", names.join(", ")),
    }
}

fn build_overlay(input: &ConfigInput) -> Result<Overlay, ConfigError> {
    let mut table = Table::new();
    let mut sources = Vec::new();
    if let Some((path, text)) = &input.file {
        table = text.parse::<Table>().map_err(|e| {
            let origin = match e.span() {
                Some(span) => format!("{}:{}", path.display(), line_of(text, span.start)),
                None => path.display().to_string(),
            };
            ConfigError::single(Some(origin), "<syntax>", e.message().trim())
        })?;
        table.remove(PROVENANCE);
        for key in leaf_keys(&table) {
            sources.push((key, Source::File));
        }
    }
    let mut errors = Vec::new();
    for set in &input.sets {
        let Some((key, raw)) = set.split_once('=') else {
            errors.push(Diagnostic {
                origin: Some("--set".to_string()),
                key: set.clone(),
                message: "expected section.key=value".to_string(),
            });
            continue;
        };
        let key = key.trim();
        insert(&mut table, key, parse_value(raw.trim()));
        sources.push((key.to_string(), Source::Set));
    }
    let flags = [
        ("scenario.name", "scenario", input.scenario.clone().map(Value::String)),
        ("run.scheme", "scheme", input.scheme.clone().map(Value::String)),
        ("run.seed", "seed", input.seed.map(|s| Value::Integer(s as i64))),
    ];
    for (key, flag, value) in flags {
        if let Some(v) = value {
            insert(&mut table, key, v);
            sources.push((key.to_string(), Source::Flag(flag)));
        }
    }
    if errors.is_empty() {
        Ok(Overlay { table, sources, file: input.file.clone() })
    } else {
        Err(ConfigError(errors))
    }
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn insert(table: &mut Table, dotted: &str, value: Value) {
    let mut parts: Vec<&str> = dotted.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        if !entry.is_table() {
            *entry = Value::Table(Table::new());
        }
        t = entry.as_table_mut().expect("just made a table");
    }
    t.insert(last.to_string(), value);
}

fn lookup<'a>(table: &'a Table, dotted: &str) -> Option<&'a Value> {
    let mut parts = dotted.split('.');
    let mut v = table.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

fn merge(base: &mut Value, overlay: &Table) {
    let Value::Table(base) = base else { return };
    for (k, v) in overlay {
        match (base.get_mut(k), v) {
            (Some(b @ Value::Table(_)), Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

fn leaf_keys(table: &Table) -> Vec<String> {
    fn walk(prefix: &str, t: &Table, out: &mut Vec<String>) {
        for (k, v) in t {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(sub) => walk(&key, sub, out),
                _ => out.push(key),
            }
        }
    }
    let mut out = Vec::new();
    walk("", table, &mut out);
    out
}

/// Unknown keys and type mismatches against the default schema.
fn check_keys(overlay: &Overlay) -> Vec<Diagnostic> {
    let schema = Value::try_from(RunConfig::default()).expect("config serializes");
    let schema = schema.as_table().expect("config is a table");
    let known = leaf_keys(schema);
    let mut out = Vec::new();
    for key in leaf_keys(&overlay.table) {
        let Some(expected) = lookup(schema, &key) else {
            let leaf = key.rsplit('.').next().unwrap_or(&key);
            let hint = nearest_key(&key, leaf, &known).map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default();
            out.push(overlay.diag(&key, format!("unknown key{hint}")));
            continue;
        };
        let given = lookup(&overlay.table, &key).expect("leaf exists");
        let compatible = given.same_type(expected) || (expected.is_float() && given.is_integer());
        if !compatible {
            out.push(overlay.diag(&key, format!("expected {}, found {}", expected.type_str(), given.type_str())));
        }
    }
    // A table given where a value belongs.
    for key in known.iter() {
        if let Some(Value::Table(_)) = lookup(&overlay.table, key) {
            out.push(overlay.diag(key, "expected a value, found a table"));
        }
    }
    out
}

fn nearest<'a>(name: &str, candidates: impl Iterator<Item = &'a str>) -> Option<&'a str> {
    let limit = (name.len() / 3).max(2);
    candidates.map(|c| (strsim::levenshtein(name, c), c)).filter(|&(d, _)| d <= limit).min().map(|(_, c)| c)
}

/// Closest schema key by leaf name, preferring the same section on ties.
fn nearest_key<'a>(full: &str, leaf: &str, known: &'a [String]) -> Option<&'a str> {
    let parent = full.rsplit_once('.').map_or("", |p| p.0);
    let limit = (leaf.len() / 3).max(2);
    known
        .iter()
        .map(|k| {
            let (kp, kl) = k.rsplit_once('.').unwrap_or(("", k));
            (strsim::levenshtein(leaf, kl), kp != parent, k.as_str())
        })
        .filter(|&(d, _, _)| d <= limit)
        .min()
        .map(|(_, _, k)| k)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line that assigns the dotted `key`, if the text has one.
pub fn find_line(text: &str, key: &str) -> Option<usize> {
    let mut section = String::new();
    let mut fallback: Option<(usize, usize)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = h.trim().to_string();
            if key.starts_with(&format!("{section}.")) && fallback.is_none_or(|(len, _)| section.len() > len) {
                fallback = Some((section.len(), i + 1));
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs: String = lhs.split('.').map(|p| p.trim().trim_matches('"')).collect::<Vec<_>>().join(".");
        let full = if section.is_empty() { lhs } else { format!("{section}.{lhs}") };
        if full == key {
            return Some(i + 1);
        }
    }
    fallback.map(|(_, line)| line)
}

/// The resolved config as a loadable TOML document.
pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}
