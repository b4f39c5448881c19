use std::collections::BTreeMap;
use std::fs;

use anyhow::{Context, Result};
use serde_json::Value;

use crate::config::RunConfig;
use crate::report::Outputs;

const PARTS: [&str; 7] = ["ingest", "traces", "windows", "stratify", "confound", "diagnose", "zeros"];

/// Collect the per-subcommand reports found in the output directory.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let mut parts = BTreeMap::new();
    for name in PARTS {
        let path = cfg.out.join(format!("{name}.json"));
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let entry = serde_json::json!({
            "config_hash": v.get("config_hash").cloned().unwrap_or(Value::Null),
            "seed": v.get("seed").cloned().unwrap_or(Value::Null),
            "inputs": v.get("inputs").cloned().unwrap_or(Value::Null),
            "files": v.get("files").cloned().unwrap_or(Value::Null),
            "result": v.get("result").cloned().unwrap_or(Value::Null),
        });
        parts.insert(name, entry);
    }
    let out = Outputs::new(&cfg.out, cfg.svg)?;
    out.report("report", cfg, parts)?;
    Ok(())
}
