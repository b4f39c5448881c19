//! Run configuration: a key=value file overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use murmur_core::confound::PairMode;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Flags shared by every subcommand. Each may also be set in the config file
/// under the same name (without the leading dashes).
#[derive(Debug, Default, Clone, Args)]
pub struct Flags {
    /// Canonical curves CSV.
    #[arg(long, global = true)]
    pub curves: Option<PathBuf>,
    /// Binary trace cache.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Zero-set CSV to import instead of computing zeros.
    #[arg(long, global = true)]
    pub zeros: Option<PathBuf>,
    /// Number of primes in the trace matrix.
    #[arg(long, global = true)]
    pub primes: Option<usize>,
    /// Sliding-window width W.
    #[arg(long, global = true)]
    pub window: Option<f64>,
    /// Sliding-window step S.
    #[arg(long, global = true)]
    pub step: Option<f64>,
    /// Conductor range LO:HI (inclusive).
    #[arg(long, global = true)]
    pub range: Option<String>,
    /// Stratification rule(s), comma separated.
    #[arg(long, global = true)]
    pub rule: Option<String>,
    /// L-value band LO:HI.
    #[arg(long, global = true)]
    pub band: Option<String>,
    /// Permutation shuffles.
    #[arg(long, global = true)]
    pub shuffles: Option<usize>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also emit SVG line plots.
    #[arg(long, global = true)]
    pub svg: bool,
    /// key=value configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Curves per group for zero computation.
    #[arg(long, global = true)]
    pub sample: Option<usize>,
    /// Zero-search ceiling.
    #[arg(long = "t-max", global = true)]
    pub t_max: Option<f64>,
    /// Rebuild a trace cache that does not match the curves.
    #[arg(long, global = true)]
    pub rebuild: bool,
    /// Add the conductor scale scan to `stratify`.
    #[arg(long, global = true)]
    pub scale: bool,
    /// Matched-pair RMS: `group` (mean profiles) or `per-pair` (mean of pair differences).
    #[arg(long = "pair-mode", global = true)]
    pub pair_mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub curves: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub zeros: Option<PathBuf>,
    pub primes: usize,
    pub window: f64,
    pub step: f64,
    pub range: (u64, u64),
    pub rules: Vec<String>,
    pub band: Option<(f64, f64)>,
    pub shuffles: usize,
    pub seed: u64,
    pub sample: usize,
    pub t_max: f64,
    pub scale: bool,
    pub rebuild: bool,
    pub pair_mode: PairMode,
    #[serde(skip)]
    pub threads: usize,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub svg: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            curves: None,
            cache: None,
            zeros: None,
            primes: 500,
            window: 5000.0,
            step: 500.0,
            range: (10_000, 50_000),
            rules: ["tamagawa", "sha", "period", "torsion", "root_number"]
                .map(String::from)
                .to_vec(),
            band: None,
            shuffles: 10_000,
            seed: 20_240_601,
            sample: 1000,
            t_max: 10.0,
            scale: false,
            rebuild: false,
            pair_mode: PairMode::Group,
            threads: 0,
            out: PathBuf::from("out"),
            svg: false,
        }
    }
}

fn parse_pair<T: FromStr>(s: &str, what: &str) -> Result<(T, T)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("{what} `{s}`: expected LO:HI"))?;
    let p = |v: &str| {
        v.trim()
            .parse::<T>()
            .map_err(|_| anyhow!("{what} `{s}`: `{v}` is not a number"))
    };
    Ok((p(lo)?, p(hi)?))
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| anyhow!("config `{key}`: cannot parse `{v}`"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("config `{key}`: expected true/false, got `{v}`"),
    }
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl RunConfig {
    fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "curves" => self.curves = Some(v.into()),
            "cache" => self.cache = Some(v.into()),
            "zeros" => self.zeros = Some(v.into()),
            "primes" => self.primes = parse(key, v)?,
            "window" => self.window = parse(key, v)?,
            "step" => self.step = parse(key, v)?,
            "range" => self.range = parse_pair(v, "range")?,
            "rule" => self.rules = v.split(',').map(|r| r.trim().to_string()).filter(|r| !r.is_empty()).collect(),
            "band" => self.band = Some(parse_pair(v, "band")?),
            "shuffles" => self.shuffles = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "out" => self.out = v.into(),
            "svg" => self.svg = parse_bool(key, v)?,
            "sample" => self.sample = parse(key, v)?,
            "t-max" | "t_max" => self.t_max = parse(key, v)?,
            "scale" => self.scale = parse_bool(key, v)?,
            "rebuild" => self.rebuild = parse_bool(key, v)?,
            "pair-mode" | "pair_mode" => {
                self.pair_mode = match v {
                    "group" => PairMode::Group,
                    "per-pair" | "per_pair" => PairMode::PerPair,
                    _ => bail!("config `{key}`: expected group or per-pair, got `{v}`"),
                }
            }
            _ => bail!("unknown config key `{key}`"),
        }
        Ok(())
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            for (k, v) in read_config_file(path)? {
                cfg.apply(&k, &v)?;
            }
        }
        let mut set = |k: &str, v: Option<String>| -> Result<()> {
            match v {
                Some(v) => cfg.apply(k, &v),
                None => Ok(()),
            }
        };
        let s = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        set("curves", s(&flags.curves))?;
        set("cache", s(&flags.cache))?;
        set("zeros", s(&flags.zeros))?;
        set("primes", flags.primes.map(|v| v.to_string()))?;
        set("window", flags.window.map(|v| v.to_string()))?;
        set("step", flags.step.map(|v| v.to_string()))?;
        set("range", flags.range.clone())?;
        set("rule", flags.rule.clone())?;
        set("band", flags.band.clone())?;
        set("shuffles", flags.shuffles.map(|v| v.to_string()))?;
        set("seed", flags.seed.map(|v| v.to_string()))?;
        set("threads", flags.threads.map(|v| v.to_string()))?;
        set("out", s(&flags.out))?;
        set("sample", flags.sample.map(|v| v.to_string()))?;
        set("t_max", flags.t_max.map(|v| v.to_string()))?;
        set("pair_mode", flags.pair_mode.clone())?;
        if flags.svg {
            cfg.svg = true;
        }
        if flags.scale {
            cfg.scale = true;
        }
        if flags.rebuild {
            cfg.rebuild = true;
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        for p in [&self.curves, &self.zeros].into_iter().flatten() {
            if !p.exists() {
                bail!("input {} does not exist", p.display());
            }
        }
        if self.range.0 > self.range.1 {
            bail!("range {}:{} is empty", self.range.0, self.range.1);
        }
        if let Some((lo, hi)) = self.band {
            if !(lo < hi) {
                bail!("band {lo}:{hi} is empty");
            }
        }
        if self.primes == 0 {
            bail!("primes must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of every result-affecting setting.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn curves_path(&self) -> Result<&Path> {
        self.curves.as_deref().ok_or_else(|| anyhow!("--curves is required"))
    }

    pub fn cache_path(&self) -> Result<&Path> {
        self.cache.as_deref().ok_or_else(|| anyhow!("--cache is required"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# demo\nseed = 7\nshuffles=200\nrange = 100:200\nrule = sha, tamagawa\n").unwrap();
        let flags = Flags {
            config: Some(path),
            seed: Some(9),
            ..Flags::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.shuffles, 200);
        assert_eq!(cfg.range, (100, 200));
        assert_eq!(cfg.rules, vec!["sha", "tamagawa"]);
    }

    #[test]
    fn bad_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "colour = blue\n").unwrap();
        let flags = Flags {
            config: Some(path),
            ..Flags::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
        let flags = Flags {
            range: Some("5".into()),
            ..Flags::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: "elsewhere".into(),
            threads: 3,
            ..RunConfig::default()
        };
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig {
            seed: 1,
            ..RunConfig::default()
        };
        assert_ne!(a.hash(), c.hash());
    }
}
