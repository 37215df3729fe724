//! Merges the flat TOML config file with command-line flags.

use anyhow::Context;
use poisonpill::experiment::ExperimentConfig;
use serde_json::{json, Map, Value};

use crate::ConfigFlags;

fn set<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), v.into());
    }
}

/// File keys first, then every flag that was given on top.
pub fn resolve(flags: &ConfigFlags) -> anyhow::Result<ExperimentConfig> {
    let mut map = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
            match serde_json::to_value(table)? {
                Value::Object(m) => m,
                _ => unreachable!("a TOML table is an object"),
            }
        }
        None => Map::new(),
    };
    let f = flags.clone();
    let path = |p: Option<std::path::PathBuf>| p.map(|p| json!(p));
    set(&mut map, "protocol", f.protocol.map(|p| json!(p)));
    set(&mut map, "n", f.n);
    set(&mut map, "k", f.k);
    set(&mut map, "t", f.t);
    set(&mut map, "adversary", f.adversary.map(|a| json!(a)));
    set(&mut map, "base", f.base.map(|a| json!(a)));
    set(&mut map, "crashes", f.crashes);
    set(&mut map, "horizon", f.horizon);
    set(&mut map, "bubble_size", f.bubble_size);
    set(&mut map, "threshold", f.threshold);
    set(&mut map, "trials", f.trials);
    set(&mut map, "seed", f.seed);
    set(&mut map, "fairness_bound", f.fairness_bound);
    set(&mut map, "max_events", f.max_events);
    set(&mut map, "replays", f.replays);
    set(&mut map, "threads", f.threads);
    set(&mut map, "csv", path(f.csv));
    set(&mut map, "summary", path(f.summary));
    set(&mut map, "failure_dir", path(f.failure_dir));
    let cfg: ExperimentConfig = serde_json::from_value(Value::Object(map)).context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}
