//! Method configuration: a TOML table from an optional file, overridden by
//! `--set key=value` pairs, then deserialized into a [`Method`].

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ordforest::{EnsembleConfig, ForestConfig, Method, MethodSpec};
use toml::{Table, Value};

/// Keys consumed by the CLI before a table is handed to serde.
const ENSEMBLE_PRESET_KEYS: [&str; 2] = ["preset", "forest"];

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("parsing {}", path.display()))
}

/// Parses the right-hand side of `--set` as a TOML value, falling back to a
/// bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies `key=value` (dotted keys address nested tables).
pub fn apply_set(table: &mut Table, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got `{assignment}`"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("malformed key `{key}`");
    }
    let mut cursor = table;
    for part in &path[..path.len() - 1] {
        let entry = cursor.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| anyhow!("`{part}` in `{key}` is not a table"))?;
    }
    cursor.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Builds a method from an optional config file, an optional tag that
/// overrides the file's `method`, and `--set` overrides.
///
/// An `ens` table without `members` expands a preset (`preset = "ens3"` by
/// default, or `"ens5"`) whose forests use the optional `[forest]` table.
pub fn build_method(config: Option<&Path>, tag: Option<&str>, sets: &[String]) -> Result<Method> {
    let mut table = match config {
        Some(path) => read_table(path)?,
        None => Table::new(),
    };
    if let Some(tag) = tag {
        table.insert("method".into(), Value::String(tag.into()));
    }
    for s in sets {
        apply_set(&mut table, s)?;
    }
    method_from_table(table)
}

pub fn method_from_table(mut table: Table) -> Result<Method> {
    table.remove("name");
    let tag = table
        .get("method")
        .and_then(Value::as_str)
        .ok_or_else(|| anyhow!("no method given (use --method or a `method` key)"))?
        .to_string();
    let preset = if tag == "ens" && !table.contains_key("members") {
        let name = match table.remove("preset") {
            Some(Value::String(s)) => s,
            Some(other) => bail!("preset must be a string, got {other}"),
            None => "ens3".to_string(),
        };
        let forest: ForestConfig = match table.remove("forest") {
            Some(v) => v.try_into().context("invalid [forest] table")?,
            None => ForestConfig::default(),
        };
        Some(match name.as_str() {
            "ens3" => EnsembleConfig::ens3(&forest),
            "ens5" => EnsembleConfig::ens5(&forest),
            other => bail!("unknown ensemble preset `{other}` (expected ens3 or ens5)"),
        })
    } else {
        None
    };
    let method: Method = Value::Table(table.clone()).try_into().context("invalid method configuration")?;
    reject_unknown_keys(&table, &method)?;
    Ok(match (method, preset) {
        (Method::Ens(cfg), Some(p)) => Method::Ens(EnsembleConfig { members: p.members, ..cfg }),
        (m, _) => m,
    })
}

/// Every user key must survive a serialize round trip; anything else was
/// silently ignored by serde and is almost certainly a typo.
fn reject_unknown_keys(table: &Table, method: &Method) -> Result<()> {
    let known = Table::try_from(method).context("serializing method")?;
    for key in table.keys() {
        if key != "method" && !known.contains_key(key) && !ENSEMBLE_PRESET_KEYS.contains(&key.as_str()) {
            bail!("unknown key `{key}` for method `{}`", method.tag());
        }
    }
    Ok(())
}

/// Roster file: `[[methods]]` entries with a `name` and a method table.
pub fn read_roster(path: &Path) -> Result<(Vec<MethodSpec>, Table)> {
    let mut table = read_table(path)?;
    let entries = match table.remove("methods") {
        Some(Value::Array(a)) => a,
        Some(_) => bail!("`methods` must be an array of tables"),
        None => bail!("{} has no [[methods]] entries", path.display()),
    };
    let specs = entries
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let Value::Table(t) = v else { bail!("methods[{i}] is not a table") };
            let name = t
                .get("name")
                .and_then(Value::as_str)
                .map(str::to_string)
                .or_else(|| t.get("method").and_then(Value::as_str).map(str::to_string))
                .ok_or_else(|| anyhow!("methods[{i}] has neither name nor method"))?;
            let method = method_from_table(t).with_context(|| format!("methods[{i}] (`{name}`)"))?;
            Ok(MethodSpec::new(name, method))
        })
        .collect::<Result<_>>()?;
    Ok((specs, table))
}
